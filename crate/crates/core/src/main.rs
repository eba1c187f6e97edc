use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use poetree::analysis::{evaluate, EvaluationOptions};
use poetree::data::{prepare_all, FeatureRanges};
use poetree::io::{
    axis_trees_to_dot, read_trajectory_file, write_epoch_csv, write_flags_csv, write_growth_log, write_trajectory_file,
    ModelFile,
};
use poetree::pipeline::{train_on, RunConfig};
use poetree::simplify::{explain_steps, AxisOptions, PruneSpec};
use poetree::synth::{generate_dataset, SynthConfig, ACTION_TREAT};
use poetree::{Error, Result};

#[derive(Parser)]
#[command(name = "poetree", version, about = "Interpretable recurrent decision-tree policies from demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic patient trajectories (JSON lines).
    Simulate {
        #[arg(long, default_value_t = 1000)]
        patients: usize,
        #[arg(long, default_value_t = 9)]
        horizon: usize,
        #[arg(long, default_value_t = 10)]
        noise_dims: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grow and train a tree policy.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val_frac: Option<f64>,
        /// JSON run configuration; unspecified fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_model: PathBuf,
        /// Per-epoch loss log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Split/reject/prune events (JSON lines).
        #[arg(long)]
        growth_log: Option<PathBuf>,
    },
    /// Score a model on a trajectory file.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Report destination; standard output when omitted.
        #[arg(long)]
        out_report: Option<PathBuf>,
        /// Per-step anomaly and low-value flags (CSV).
        #[arg(long)]
        flags: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        anomaly_threshold: f64,
        /// Actions counted as costly in the low-value analysis.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        active_actions: Vec<usize>,
    },
    /// Per-timestep axis-aligned explanation of one trajectory.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        trajectory_id: String,
        /// 1-based timesteps to explain (repeatable); all when omitted.
        #[arg(long)]
        timestep: Vec<usize>,
        /// Fold predicted observations into the thresholds.
        #[arg(long)]
        evolution_adjust: bool,
        #[arg(long, default_value_t = 0.05)]
        p_min: f64,
        #[arg(long)]
        no_prune: bool,
        #[arg(long)]
        out_dot: PathBuf,
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
}

fn warn(message: &str) {
    eprintln!("{}", json!({"level": "warning", "message": message}));
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn simulate(cfg: SynthConfig, out: &Path) -> Result<serde_json::Value> {
    let data = generate_dataset(&cfg)?;
    write_trajectory_file(out, &data)?;
    let steps = (cfg.n_patients * cfg.horizon).max(1) as f64;
    let diseased: usize = data.iter().flat_map(|t| t.hidden.iter().flatten()).map(|&h| h as usize).sum();
    let treated = data.iter().flat_map(|t| &t.actions).filter(|&&a| a == ACTION_TREAT).count();
    Ok(json!({
        "patients": cfg.n_patients,
        "horizon": cfg.horizon,
        "obs_dim": cfg.obs_dim(),
        "prevalence": diseased as f64 / steps,
        "action_rate": treated as f64 / steps,
    }))
}

#[allow(clippy::too_many_arguments)]
fn train(
    data: &Path,
    val_frac: Option<f64>,
    config: Option<&Path>,
    seed: u64,
    out_model: &Path,
    log: Option<&Path>,
    growth_log: Option<&Path>,
) -> Result<serde_json::Value> {
    let mut cfg: RunConfig = match config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if let Some(v) = val_frac {
        cfg.val_frac = v;
    }
    let trajs = read_trajectory_file(data)?;
    let model = train_on(&trajs, &cfg, seed)?;
    let file = model.model_file(&cfg, seed, Vec::new());
    file.save(out_model)?;
    if let Some(p) = log {
        write_with(p, |w| write_epoch_csv(w, &model.epochs))?;
    }
    if let Some(p) = growth_log {
        write_with(p, |w| write_growth_log(w, &model.growth_log))?;
    }
    for w in &model.warnings {
        warn(w);
    }
    Ok(json!({
        "val_auroc": model.val_score,
        "param_count": model.policy.param_count(),
        "depth": model.policy.depth(),
        "n_leaves": model.policy.topology().n_leaves(),
        "epochs": model.epochs.len(),
        "growth_events": model.growth_log.len(),
    }))
}

fn explain(
    model: &Path,
    data: &Path,
    id: &str,
    timesteps: &[usize],
    evolution: bool,
    p_min: Option<f64>,
    out_dot: &Path,
    out_json: Option<&Path>,
) -> Result<serde_json::Value> {
    let file = ModelFile::load(model)?;
    let policy = file.to_policy()?;
    let trajs = read_trajectory_file(data)?;
    let traj = trajs
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| Error::Data(format!("no trajectory with id {id:?} in {}", data.display())))?;
    let prepared = prepare_all(&trajs, policy.normalizer());
    let prune = match p_min {
        Some(p_min) => {
            let ranges = match &file.metadata.feature_ranges {
                Some(r) => r.clone(),
                None => FeatureRanges::from_trajectories(&trajs)?,
            };
            Some(PruneSpec::from_validation(ranges, p_min, &prepared, policy.normalizer()))
        }
        None => None,
    };
    let z = prepared[trajs.iter().position(|t| t.id == id).unwrap()].z.clone();
    let trees = explain_steps(&policy, &z, &AxisOptions { evolution, prune })?;
    if let Some(&t) = timesteps.iter().find(|&&t| t == 0 || t > trees.len()) {
        return Err(Error::Data(format!("timestep {t} outside 1..={} for trajectory {id}", traj.len())));
    }
    let chosen: Vec<_> = trees
        .into_iter()
        .filter(|tree| timesteps.is_empty() || timesteps.contains(&tree.timestep.unwrap()))
        .collect();
    let features = if file.metadata.feature_names.is_empty() {
        (0..policy.dims().obs).map(|i| format!("z{i}")).collect()
    } else {
        file.metadata.feature_names.clone()
    };
    fs::write(out_dot, axis_trees_to_dot(&chosen, &features, &file.metadata.action_names))?;
    let doc = json!({"trajectory": id, "evolution_adjusted": evolution, "features": features, "trees": chosen});
    if let Some(p) = out_json {
        fs::write(p, serde_json::to_string_pretty(&doc)? + "\n")?;
    }
    Ok(json!({
        "trajectory": id,
        "timesteps": chosen.iter().map(|t| t.timestep).collect::<Vec<_>>(),
        "leaves": chosen.iter().map(|t| t.n_leaves()).collect::<Vec<_>>(),
    }))
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Simulate { patients, horizon, noise_dims, seed, out } => simulate(
            SynthConfig { n_patients: patients, horizon, n_noise_dims: noise_dims, seed, ..Default::default() },
            &out,
        ),
        Command::Train { data, val_frac, config, seed, out_model, log, growth_log } => {
            train(&data, val_frac, config.as_deref(), seed, &out_model, log.as_deref(), growth_log.as_deref())
        }
        Command::Evaluate { model, data, out_report, flags, anomaly_threshold, active_actions } => {
            let policy = ModelFile::load(&model)?.to_policy()?;
            let trajs = read_trajectory_file(&data)?;
            let report = evaluate(&policy, &trajs, &EvaluationOptions { anomaly_threshold, active_actions })?;
            if let Some(p) = flags {
                write_with(&p, |w| write_flags_csv(w, &report))?;
            }
            let text = serde_json::to_string_pretty(&report)?;
            match out_report {
                Some(p) => {
                    fs::write(p, text + "\n")?;
                    Ok(json!({
                        "accuracy": report.accuracy,
                        "auroc": report.auroc,
                        "auprc": report.auprc,
                        "brier": report.brier,
                        "anomalies": report.anomalies.len(),
                        "low_value": report.low_value.len(),
                    }))
                }
                None => Ok(serde_json::from_str(&text)?),
            }
        }
        Command::Explain { model, data, trajectory_id, timestep, evolution_adjust, p_min, no_prune, out_dot, out_json } => {
            explain(
                &model,
                &data,
                &trajectory_id,
                &timestep,
                evolution_adjust,
                (!no_prune).then_some(p_min),
                &out_dot,
                out_json.as_deref(),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({"error": "usage", "message": e.to_string().trim()}));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(2)
        }
    }
}
