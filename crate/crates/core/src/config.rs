//! On-disk problem configuration (TOML).
//!
//! ```toml
//! [problem]
//! dimension = 1
//! discount = 0.5
//! generator = [[0.0]]
//! box = [[-1.0, 1.0]]
//! u1_levels = [0.0]
//! u2_levels = [0.0]
//! d1_labels = ["a"]
//! d2_labels = ["b"]
//!
//! [dynamics."a,b"]
//! f = ["0"]
//!
//! [cost."a,b"]
//! k = "1"
//!
//! [switching]          # optional when both players have one mode
//! c1 = [[0.0]]
//! c2 = [[0.0]]
//!
//! [impulses]           # optional
//! jumps = [[1.0]]
//! costs = [0.5]
//!
//! [grid]               # optional
//! points = [101]
//!
//! [solver]             # optional
//! dt = 0.5
//! tolerance = 1e-10
//! max_iterations = 100000
//! init = "zero"
//! variant = "plus"
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprlang::{self, Expr, ExprError, Var};
use crate::problem::{Impulse, ProblemSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("expression {location}: {source}")]
    Expr { location: String, source: ExprError },
    #[error("missing entry for mode pair ({0})")]
    MissingPair(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub dimension: usize,
    pub discount: f64,
    pub generator: Vec<Vec<f64>>,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub u1_levels: Vec<f64>,
    pub u2_levels: Vec<f64>,
    pub d1_labels: Vec<String>,
    pub d2_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsEntry {
    pub f: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostEntry {
    pub k: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSection {
    pub c1: Vec<Vec<f64>>,
    pub c2: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseSection {
    #[serde(default)]
    pub jumps: Vec<Vec<f64>>,
    #[serde(default)]
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Raw document as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: ProblemSection,
    pub dynamics: BTreeMap<String, DynamicsEntry>,
    pub cost: BTreeMap<String, CostEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching: Option<SwitchingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impulses: Option<ImpulseSection>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
}

/// A loaded configuration: the game plus optional run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub spec: ProblemSpec,
    pub grid: GridSection,
    pub solver: SolverSection,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let file: ConfigFile = toml::from_str(text)?;
    Config::from_file(file)
}

fn pair_key(d1: &str, d2: &str) -> String {
    format!("{d1},{d2}")
}

fn square(matrix: &[Vec<f64>], size: usize, what: &str) -> Result<(), ConfigError> {
    if matrix.len() != size || matrix.iter().any(|row| row.len() != size) {
        return Err(ConfigError::Dimension(format!("{what} must be {size}x{size}")));
    }
    Ok(())
}

fn parse_expr(text: &str, location: String, dimension: usize) -> Result<Expr, ConfigError> {
    let expr = exprlang::parse(text)
        .map_err(|source| ConfigError::Expr { location: location.clone(), source })?;
    if let Some(bad) = expr.free_vars().into_iter().find(|v| matches!(v, Var::State(i) if *i >= dimension)) {
        return Err(ConfigError::Expr { location, source: ExprError::Unbound(bad) });
    }
    Ok(expr)
}

impl Config {
    pub fn from_file(file: ConfigFile) -> Result<Config, ConfigError> {
        let p = &file.problem;
        let n = p.dimension;
        if n == 0 || n > 3 {
            return Err(ConfigError::Invalid(format!("dimension must be 1, 2 or 3, got {n}")));
        }
        if !(p.discount > 0.0 && p.discount.is_finite()) {
            return Err(ConfigError::Invalid(format!("discount must be positive, got {}", p.discount)));
        }
        square(&p.generator, n, "generator")?;
        if p.bounds.len() != n {
            return Err(ConfigError::Dimension(format!("box has {} intervals, expected {n}", p.bounds.len())));
        }
        if let Some(i) = p.bounds.iter().position(|[lo, hi]| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(ConfigError::Invalid(format!("box interval {i} must satisfy low < high")));
        }
        if p.u1_levels.is_empty() || p.u2_levels.is_empty() {
            return Err(ConfigError::Invalid("control level lists must be nonempty".into()));
        }
        if p.d1_labels.is_empty() || p.d2_labels.is_empty() {
            return Err(ConfigError::Invalid("mode label lists must be nonempty".into()));
        }
        for labels in [&p.d1_labels, &p.d2_labels] {
            let mut sorted = labels.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != labels.len() {
                return Err(ConfigError::Invalid("mode labels must be distinct".into()));
            }
        }
        let (m1, m2) = (p.d1_labels.len(), p.d2_labels.len());

        let mut dynamics = Vec::with_capacity(m1 * m2);
        let mut running_cost = Vec::with_capacity(m1 * m2);
        for d1 in &p.d1_labels {
            for d2 in &p.d2_labels {
                let key = pair_key(d1, d2);
                let entry = file.dynamics.get(&key).ok_or_else(|| ConfigError::MissingPair(format!("dynamics {key}")))?;
                if entry.f.len() != n {
                    return Err(ConfigError::Dimension(format!(
                        "dynamics {key} has {} components, expected {n}",
                        entry.f.len()
                    )));
                }
                let f = entry
                    .f
                    .iter()
                    .enumerate()
                    .map(|(i, s)| parse_expr(s, format!("dynamics {key} component {i}"), n))
                    .collect::<Result<Vec<_>, _>>()?;
                dynamics.push(f);
                let cost = file.cost.get(&key).ok_or_else(|| ConfigError::MissingPair(format!("cost {key}")))?;
                running_cost.push(parse_expr(&cost.k, format!("cost {key}"), n)?);
            }
        }
        let known = |key: &String| {
            p.d1_labels.iter().any(|d1| p.d2_labels.iter().any(|d2| pair_key(d1, d2) == *key))
        };
        if let Some(extra) = file.dynamics.keys().chain(file.cost.keys()).find(|k| !known(k)) {
            return Err(ConfigError::Invalid(format!("entry for unknown mode pair ({extra})")));
        }

        let (switch_cost_1, switch_cost_2) = match &file.switching {
            Some(s) => (s.c1.clone(), s.c2.clone()),
            None if m1 == 1 && m2 == 1 => (vec![vec![0.0]], vec![vec![0.0]]),
            None => return Err(ConfigError::Invalid("[switching] is required when a player has several modes".into())),
        };
        square(&switch_cost_1, m1, "switching.c1")?;
        square(&switch_cost_2, m2, "switching.c2")?;

        let section = file.impulses.clone().unwrap_or_default();
        if section.jumps.len() != section.costs.len() {
            return Err(ConfigError::Invalid("impulses.jumps and impulses.costs differ in length".into()));
        }
        let mut impulses = Vec::with_capacity(section.jumps.len());
        for (i, (jump, cost)) in section.jumps.iter().zip(&section.costs).enumerate() {
            if jump.len() != n {
                return Err(ConfigError::Dimension(format!(
                    "impulse {i} has {} components, expected {n}",
                    jump.len()
                )));
            }
            impulses.push(Impulse { jump: jump.clone(), cost: *cost });
        }

        let spec = ProblemSpec {
            dimension: n,
            generator: p.generator.clone(),
            discount: p.discount,
            u1_levels: p.u1_levels.clone(),
            u2_levels: p.u2_levels.clone(),
            d1_labels: p.d1_labels.clone(),
            d2_labels: p.d2_labels.clone(),
            dynamics,
            running_cost,
            switch_cost_1,
            switch_cost_2,
            impulses,
            bounds: p.bounds.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
        };
        Ok(Config { spec, grid: file.grid, solver: file.solver })
    }

    pub fn to_file(&self) -> ConfigFile {
        let s = &self.spec;
        let mut dynamics = BTreeMap::new();
        let mut cost = BTreeMap::new();
        for (d1, l1) in s.d1_labels.iter().enumerate() {
            for (d2, l2) in s.d2_labels.iter().enumerate() {
                let key = pair_key(l1, l2);
                let pair = s.pair(d1, d2);
                dynamics.insert(key.clone(), DynamicsEntry { f: s.dynamics[pair].iter().map(|e| e.to_string()).collect() });
                cost.insert(key, CostEntry { k: s.running_cost[pair].to_string() });
            }
        }
        ConfigFile {
            problem: ProblemSection {
                dimension: s.dimension,
                discount: s.discount,
                generator: s.generator.clone(),
                bounds: s.bounds.iter().map(|&(lo, hi)| [lo, hi]).collect(),
                u1_levels: s.u1_levels.clone(),
                u2_levels: s.u2_levels.clone(),
                d1_labels: s.d1_labels.clone(),
                d2_labels: s.d2_labels.clone(),
            },
            dynamics,
            cost,
            switching: Some(SwitchingSection { c1: s.switch_cost_1.clone(), c2: s.switch_cost_2.clone() }),
            impulses: (!s.impulses.is_empty()).then(|| ImpulseSection {
                jumps: s.impulses.iter().map(|i| i.jump.clone()).collect(),
                costs: s.impulses.iter().map(|i| i.cost).collect(),
            }),
            grid: self.grid.clone(),
            solver: self.solver.clone(),
        }
    }

    /// Canonical TOML rendering.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_file()).expect("config is always serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
[problem]
dimension = 1
discount = 0.5
generator = [[0.0]]
box = [[-1.0, 1.0]]
u1_levels = [0.0]
u2_levels = [0.0]
d1_labels = ["a"]
d2_labels = ["b"]

[dynamics."a,b"]
f = ["0"]

[cost."a,b"]
k = "1"
"#;

    #[test]
    fn minimal_spec_loads() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.spec.dimension, 1);
        assert_eq!(cfg.spec.m1(), 1);
        assert!(cfg.spec.impulses.is_empty());
    }

    const TWO_MODES: &str = r#"
[problem]
dimension = 1
discount = 1.0
generator = [[0.0]]
box = [[0.0, 1.0]]
u1_levels = [0.0]
u2_levels = [0.0]
d1_labels = ["p", "q"]
d2_labels = ["r"]

[dynamics."p,r"]
f = ["0"]

[cost."p,r"]
k = "1"

[cost."q,r"]
k = "1"

[switching]
c1 = [[0.0, 1.0], [1.0, 0.0]]
c2 = [[0.0]]
"#;

    #[test]
    fn missing_pair_is_named() {
        match parse_config(TWO_MODES) {
            Err(ConfigError::MissingPair(which)) => assert_eq!(which, "dynamics q,r"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn impulse_dimension_mismatch() {
        let text = format!("{MINIMAL}\n[impulses]\njumps = [[1.0, 2.0]]\ncosts = [1.0]\n");
        assert!(matches!(parse_config(&text), Err(ConfigError::Dimension(_))));
    }

    #[test]
    fn undeclared_state_variable() {
        let text = MINIMAL.replace(r#"f = ["0"]"#, r#"f = ["x1"]"#);
        assert!(matches!(parse_config(&text), Err(ConfigError::Expr { .. })));
    }

    #[test]
    fn malformed_expression_carries_offset() {
        let text = MINIMAL.replace(r#"k = "1""#, r#"k = "x0 + ""#);
        match parse_config(&text) {
            Err(ConfigError::Expr { source: ExprError::Syntax { offset, .. }, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn generator_and_box_shape_checked() {
        let text = MINIMAL.replace("generator = [[0.0]]", "generator = [[0.0, 1.0]]");
        assert!(matches!(parse_config(&text), Err(ConfigError::Dimension(_))));
        let text = MINIMAL.replace("box = [[-1.0, 1.0]]", "box = [[1.0, 1.0]]");
        assert!(matches!(parse_config(&text), Err(ConfigError::Invalid(_))));
        let text = MINIMAL.replace("discount = 0.5", "discount = 0.0");
        assert!(matches!(parse_config(&text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn save_load_is_idempotent() {
        let text = format!(
            "{}\n[impulses]\njumps = [[1.0], [2.0]]\ncosts = [1.0, 1.5]\n",
            MINIMAL.replace(r#"k = "1""#, r#"k = "min(x0^2, 4) + -2*x0*u1 / 3""#)
        );
        let cfg = parse_config(&text).unwrap();
        let saved = cfg.to_toml_string();
        let reloaded = parse_config(&saved).unwrap();
        assert_eq!(reloaded, cfg);
        assert_eq!(reloaded.to_toml_string(), saved);
    }
}
