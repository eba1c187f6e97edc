use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::analysis::EvaluationReport;
use crate::error::{data, Error, Result};
use crate::growth::GrowthEvent;
use crate::math::argmax;
use crate::training::EpochRecord;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => data(format!("csv: {other:?}")),
    }
}

/// Loss log with columns epoch,total,action,mse,kl,split,val_auroc. Records
/// from consecutive optimization runs are numbered with one running epoch
/// counter.
pub fn write_epoch_csv<W: Write>(w: W, records: &[EpochRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for (i, r) in records.iter().enumerate() {
        out.serialize(EpochRecord { epoch: i, ..r.clone() }).map_err(csv_err)?;
    }
    if records.is_empty() {
        out.write_record(["epoch", "total", "action", "mse", "kl", "split", "val_auroc"]).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// One JSON object per growth event.
pub fn write_growth_log<W: Write>(mut w: W, events: &[GrowthEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FlagRow<'a> {
    trajectory: &'a str,
    t: usize,
    predicted: usize,
    confidence: f64,
    anomalous: bool,
    corrected: bool,
    low_value: bool,
}

/// Per-step flags from an evaluation report, one row per step.
pub fn write_flags_csv<W: Write>(w: W, report: &EvaluationReport) -> Result<()> {
    let anomalies: HashMap<(&str, usize), bool> =
        report.anomalies.iter().map(|a| ((a.trajectory.as_str(), a.t), a.corrected)).collect();
    let low: std::collections::HashSet<(&str, usize)> =
        report.low_value.iter().map(|l| (l.trajectory.as_str(), l.t)).collect();
    let mut out = csv::Writer::from_writer(w);
    for series in &report.confidence {
        for (s, probs) in series.probs.iter().enumerate() {
            let key = (series.trajectory.as_str(), s + 1);
            let k = argmax(probs);
            out.serialize(FlagRow {
                trajectory: &series.trajectory,
                t: s + 1,
                predicted: k,
                confidence: probs[k],
                anomalous: anomalies.contains_key(&key),
                corrected: anomalies.get(&key).copied().unwrap_or(false),
                low_value: low.contains(&key),
            })
            .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_csv_has_fixed_columns_and_running_epochs() {
        let r = EpochRecord { epoch: 0, total: 1.5, action: 1.0, mse: 0.25, kl: 0.0, split: 0.25, val_auroc: None };
        let mut buf = Vec::new();
        write_epoch_csv(&mut buf, &[r.clone(), EpochRecord { val_auroc: Some(0.75), ..r }]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,total,action,mse,kl,split,val_auroc");
        assert_eq!(lines[1], "0,1.5,1.0,0.25,0.0,0.25,");
        assert_eq!(lines[2], "1,1.5,1.0,0.25,0.0,0.25,0.75");
    }
}
