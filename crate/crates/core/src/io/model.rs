use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureRanges, Normalizer};
use crate::error::{Error, Result};
use crate::growth::GrowthConfig;
use crate::training::TrainingConfig;
use crate::tree::{Dims, NodeParams, ParamSet, RecurrenceModel, TopoNode, TreePolicy, TreeTopology};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelMetadata {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthConfig>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub feature_names: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub action_names: Vec<String>,
    /// Raw training-data range per feature, used to prune explanations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_ranges: Option<FeatureRanges>,
    pub metrics: BTreeMap<String, f64>,
}

/// On-disk model: everything needed to rebuild a [`TreePolicy`], plus
/// provenance. Floats are written in shortest round-trip decimal form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub dims: Dims,
    pub recurrence: RecurrenceModel,
    pub normalizer: Normalizer,
    pub topology: Vec<TopoNode>,
    pub params: Vec<NodeParams>,
    #[serde(default)]
    pub metadata: ModelMetadata,
}

impl ModelFile {
    pub fn from_policy(policy: &TreePolicy, metadata: ModelMetadata) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            dims: policy.dims(),
            recurrence: policy.recurrence(),
            normalizer: policy.normalizer().clone(),
            topology: policy.topology().nodes().to_vec(),
            params: policy.params().nodes.clone(),
            metadata,
        }
    }

    pub fn to_policy(&self) -> Result<TreePolicy> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        TreePolicy::new(
            TreeTopology::from_nodes(self.topology.clone())?,
            ParamSet { nodes: self.params.clone() },
            self.dims,
            self.recurrence,
            self.normalizer.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
