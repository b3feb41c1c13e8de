//! CSV interchange: value fields, iteration histories and trajectories.
//!
//! A value CSV starts with `# key = value` metadata lines describing the
//! grid, followed by a header `d1,d2,x0,..,V` and one row per mode pair and
//! grid node.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::hybridsim::HybridTrajectory;
use crate::problem::ProblemSpec;
use crate::report::fmt_f64;
use crate::solver::{GridSpec, ValueField};

/// Relative tolerance on grid metadata and node coordinates.
const GRID_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed value file: {0}")]
    Format(String),
    #[error("value file does not match the problem: {0}")]
    Mismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.display().to_string(), source }
}

fn join(values: impl IntoIterator<Item = String>, sep: &str) -> String {
    values.into_iter().collect::<Vec<_>>().join(sep)
}

pub fn write_value_csv(
    path: &Path,
    spec: &ProblemSpec,
    grid: &GridSpec,
    field: &ValueField,
    extra: &BTreeMap<String, String>,
) -> Result<(), IoError> {
    let mut file = File::create(path).map_err(io_err(path))?;
    let mut meta = BTreeMap::new();
    meta.insert("dimension".to_string(), grid.dim().to_string());
    meta.insert("counts".to_string(), join(grid.counts().iter().map(|c| c.to_string()), " "));
    meta.insert(
        "bounds".to_string(),
        join(grid.bounds().iter().map(|(lo, hi)| format!("{}:{}", fmt_f64(*lo), fmt_f64(*hi))), " "),
    );
    meta.insert("d1_labels".to_string(), spec.d1_labels.join(" "));
    meta.insert("d2_labels".to_string(), spec.d2_labels.join(" "));
    for (k, v) in extra {
        meta.insert(k.clone(), v.clone());
    }
    let mut head = String::from("# hybrid-isaacs value field\n");
    for (k, v) in &meta {
        head.push_str(&format!("# {k} = {v}\n"));
    }
    file.write_all(head.as_bytes()).map_err(io_err(path))?;

    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["d1".to_string(), "d2".to_string()];
    header.extend((0..grid.dim()).map(|d| format!("x{d}")));
    header.push("V".into());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for d1 in 0..spec.m1() {
        for d2 in 0..spec.m2() {
            for idx in 0..grid.len() {
                row.clear();
                row.push(spec.d1_labels[d1].clone());
                row.push(spec.d2_labels[d2].clone());
                row.extend(grid.point(idx).into_iter().map(fmt_f64));
                row.push(fmt_f64(field.get(d1, d2, idx)));
                w.write_record(&row)?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Grid and labels recorded in a value file's metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFileMeta {
    pub grid: GridSpec,
    pub d1_labels: Vec<String>,
    pub d2_labels: Vec<String>,
    pub entries: BTreeMap<String, String>,
}

fn parse_meta(path: &Path) -> Result<ValueFileMeta, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut entries = BTreeMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        let Some(rest) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = rest.split_once('=') {
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |k: &str| entries.get(k).ok_or_else(|| IoError::Format(format!("missing metadata `{k}`")));
    let counts = get("counts")?
        .split_whitespace()
        .map(|c| c.parse::<usize>().map_err(|_| IoError::Format(format!("bad count `{c}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let bounds = get("bounds")?
        .split_whitespace()
        .map(|b| {
            let (lo, hi) = b.split_once(':').ok_or_else(|| IoError::Format(format!("bad bound `{b}`")))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| IoError::Format(format!("bad bound `{b}`")));
            Ok((num(lo)?, num(hi)?))
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let grid = GridSpec::new(&counts, &bounds).map_err(|e| IoError::Format(e.to_string()))?;
    let labels = |k: &str| get(k).map(|s| s.split_whitespace().map(String::from).collect::<Vec<_>>());
    Ok(ValueFileMeta { grid, d1_labels: labels("d1_labels")?, d2_labels: labels("d2_labels")?, entries })
}

/// Reads a value CSV and checks it against the problem and the expected grid.
pub fn read_value_csv(path: &Path, spec: &ProblemSpec, grid: &GridSpec) -> Result<ValueField, IoError> {
    let meta = parse_meta(path)?;
    if !meta.grid.matches(grid, GRID_TOL) {
        return Err(IoError::Mismatch(format!(
            "file grid {:?} on {:?}, expected {:?} on {:?}",
            meta.grid.counts(),
            meta.grid.bounds(),
            grid.counts(),
            grid.bounds()
        )));
    }
    if meta.d1_labels != spec.d1_labels || meta.d2_labels != spec.d2_labels {
        return Err(IoError::Mismatch("mode labels differ".into()));
    }
    let label_index = |labels: &[String], s: &str| {
        labels.iter().position(|l| l == s).ok_or_else(|| IoError::Mismatch(format!("unknown mode `{s}`")))
    };

    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let n = grid.dim();
    let expected_cols = n + 3;
    if reader.headers()?.len() != expected_cols {
        return Err(IoError::Mismatch(format!("expected {expected_cols} columns")));
    }
    let mut field = ValueField::constant(spec.m1(), spec.m2(), grid.len(), f64::NAN);
    let mut seen = 0usize;
    let mut x = vec![0.0; n];
    for record in reader.records() {
        let record = record?;
        let num = |i: usize| {
            record[i].parse::<f64>().map_err(|_| IoError::Format(format!("bad number `{}`", &record[i])))
        };
        let d1 = label_index(&spec.d1_labels, &record[0])?;
        let d2 = label_index(&spec.d2_labels, &record[1])?;
        for (d, xd) in x.iter_mut().enumerate() {
            *xd = num(2 + d)?;
        }
        let idx = node_index(grid, &x)
            .ok_or_else(|| IoError::Mismatch(format!("state {x:?} is not a grid node")))?;
        field.set(d1, d2, idx, num(2 + n)?);
        seen += 1;
    }
    if seen != field.as_slice().len() || !field.is_finite() {
        return Err(IoError::Mismatch(format!(
            "expected {} finite rows, found {seen}",
            field.as_slice().len()
        )));
    }
    Ok(field)
}

/// Reads only the metadata of a value file.
pub fn read_value_meta(path: &Path) -> Result<ValueFileMeta, IoError> {
    parse_meta(path)
}

fn node_index(grid: &GridSpec, x: &[f64]) -> Option<usize> {
    let bounds = grid.bounds();
    let mut idx = 0;
    for d in 0..grid.dim() {
        let h = grid.step()[d];
        let pos = (x[d] - bounds[d].0) / h;
        let i = pos.round();
        if (pos - i).abs() > 1e-6 || i < 0.0 || i as usize >= grid.counts()[d] {
            return None;
        }
        idx += i as usize * grid.stride(d);
    }
    Some(idx)
}

pub fn write_history_csv(path: &Path, history: &[f64]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "change"])?;
    for (i, c) in history.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt_f64(*c)])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// One row per step: time, state, modes, controls, event columns (empty
/// when nothing happened) and cumulative discounted cost terms including
/// the events of that step.
pub fn write_trajectory_csv(path: &Path, spec: &ProblemSpec, traj: &HybridTrajectory) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    let n = spec.dimension;
    let mut header = vec!["step".to_string(), "time".into()];
    header.extend((0..n).map(|d| format!("x{d}")));
    header.extend(
        [
            "d1", "d2", "u1", "u2", "switch_p1", "switch_p2", "impulse", "running", "switching_p1", "switching_p2",
            "impulse_cost", "total",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;

    let discount = spec.discount;
    let weight = -(-discount * traj.dt).exp_m1() / discount;
    let (mut running, mut p1, mut p2, mut imp) = (0.0, 0.0, 0.0, 0.0);
    for step in 0..traj.len() {
        let t = traj.times[step];
        let disc = (-discount * t).exp();
        let sw1: Vec<_> = traj.switches_p1.iter().filter(|e| e.step == step).collect();
        let sw2: Vec<_> = traj.switches_p2.iter().filter(|e| e.step == step).collect();
        let jumps: Vec<_> = traj.impulses.iter().filter(|e| e.step == step).collect();
        p1 -= sw1.iter().map(|e| disc * e.cost).sum::<f64>();
        p2 += sw2.iter().map(|e| disc * e.cost).sum::<f64>();
        imp += jumps.iter().map(|e| disc * e.cost).sum::<f64>();
        running += disc * weight * traj.running_costs[step];

        let (d1, d2) = traj.modes[step];
        let (u1, u2) = traj.controls[step];
        let mut row = vec![step.to_string(), fmt_f64(t)];
        row.extend(traj.states[step].iter().map(|v| fmt_f64(*v)));
        row.push(spec.d1_labels[d1].clone());
        row.push(spec.d2_labels[d2].clone());
        row.push(fmt_f64(u1));
        row.push(fmt_f64(u2));
        row.push(join(sw1.iter().map(|e| format!("{}>{}", spec.d1_labels[e.from], spec.d1_labels[e.to])), ";"));
        row.push(join(sw2.iter().map(|e| format!("{}>{}", spec.d2_labels[e.from], spec.d2_labels[e.to])), ";"));
        row.push(join(jumps.iter().map(|e| e.index.to_string()), ";"));
        for v in [running, p1, p2, imp, running + p1 + p2 + imp] {
            row.push(fmt_f64(v));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn spec() -> ProblemSpec {
        parse_config(
            r#"
[problem]
dimension = 2
discount = 1.0
generator = [[0.0, 0.0], [0.0, 0.0]]
box = [[0.0, 1.0], [-1.0, 1.0]]
u1_levels = [0.0]
u2_levels = [0.0]
d1_labels = ["a"]
d2_labels = ["p", "q"]
[dynamics."a,p"]
f = ["0", "0"]
[dynamics."a,q"]
f = ["0", "0"]
[cost."a,p"]
k = "x0"
[cost."a,q"]
k = "x1^2"
[switching]
c1 = [[0.0]]
c2 = [[0.0, 1.0], [1.0, 0.0]]
"#,
        )
        .unwrap()
        .spec
    }

    #[test]
    fn value_csv_round_trip_is_exact() {
        let spec = spec();
        let grid = GridSpec::new(&[3, 5], &spec.bounds).unwrap();
        let field = ValueField::from_fn(1, 2, grid.len(), |_, b, p| (p as f64).sqrt() / 3.0 + b as f64);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        write_value_csv(&path, &spec, &grid, &field, &BTreeMap::new()).unwrap();
        let back = read_value_csv(&path, &spec, &grid).unwrap();
        assert_eq!(back, field);
        let meta = read_value_meta(&path).unwrap();
        assert_eq!(meta.grid.counts(), &[3, 5]);
    }

    #[test]
    fn grid_mismatch_detected() {
        let spec = spec();
        let grid = GridSpec::new(&[3, 5], &spec.bounds).unwrap();
        let other = GridSpec::new(&[3, 6], &spec.bounds).unwrap();
        let field = ValueField::constant(1, 2, grid.len(), 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        write_value_csv(&path, &spec, &grid, &field, &BTreeMap::new()).unwrap();
        assert!(matches!(read_value_csv(&path, &spec, &other), Err(IoError::Mismatch(_))));
    }

    #[test]
    fn truncated_file_rejected() {
        let spec = spec();
        let grid = GridSpec::new(&[2, 2], &spec.bounds).unwrap();
        let field = ValueField::constant(1, 2, grid.len(), 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        write_value_csv(&path, &spec, &grid, &field, &BTreeMap::new()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: Vec<&str> = text.lines().collect();
        std::fs::write(&path, cut[..cut.len() - 1].join("\n")).unwrap();
        assert!(matches!(read_value_csv(&path, &spec, &grid), Err(IoError::Mismatch(_))));
    }
}
