use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::Trajectory;
use crate::error::{data, Result};

/// Reads one JSON trajectory per line. Blank lines are skipped; every
/// other line must parse, be non-empty and share the first line's
/// observation dimension. Errors name the 1-based line number.
pub fn read_trajectories<R: BufRead>(reader: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line).map_err(|e| data(format!("line {n}: {e}")))?;
        let d = t.obs_dim().ok_or_else(|| data(format!("line {n}: trajectory {} has no steps", t.id)))?;
        let d = *dim.get_or_insert(d);
        t.validate(d, usize::MAX).map_err(|e| data(format!("line {n}: {e}")))?;
        if let Some(h) = &t.hidden {
            if h.len() != t.len() {
                return Err(data(format!("line {n}: hidden state has {} entries for {} steps", h.len(), t.len())));
            }
        }
        out.push(t);
    }
    Ok(out)
}

pub fn read_trajectory_file(path: &Path) -> Result<Vec<Trajectory>> {
    read_trajectories(BufReader::new(File::open(path)?))
}

pub fn write_trajectories<W: Write>(mut w: W, trajs: &[Trajectory]) -> Result<()> {
    for t in trajs {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_file(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    write_trajectories(BufWriter::new(File::create(path)?), trajs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_dimensions_name_the_line() {
        let text = "{\"id\":\"a\",\"observations\":[[1,2]],\"actions\":[0]}\n\n{\"id\":\"b\",\"observations\":[[1]],\"actions\":[1]}\n";
        let err = read_trajectories(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn malformed_json_names_the_line() {
        let text = "{\"id\":\"a\",\"observations\":[[1]],\"actions\":[0]}\n{oops\n";
        assert!(read_trajectories(text.as_bytes()).unwrap_err().to_string().contains("line 2"));
    }

    #[test]
    fn mismatched_lengths_and_empty_lines_rejected() {
        let text = "{\"id\":\"a\",\"observations\":[[1],[2]],\"actions\":[0]}\n";
        assert!(read_trajectories(text.as_bytes()).is_err());
        let text = "{\"id\":\"a\",\"observations\":[],\"actions\":[]}\n";
        assert!(read_trajectories(text.as_bytes()).is_err());
    }

    #[test]
    fn round_trip() {
        let t = vec![
            Trajectory { id: "x".into(), observations: vec![vec![0.1, -2.5e-17]], actions: vec![1], hidden: Some(vec![1]) },
            Trajectory { id: "y".into(), observations: vec![vec![1.0, 2.0], vec![3.0, 4.0]], actions: vec![0, 0], hidden: None },
        ];
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &t).unwrap();
        assert_eq!(read_trajectories(&buf[..]).unwrap(), t);
    }
}
