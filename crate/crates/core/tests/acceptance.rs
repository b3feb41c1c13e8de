//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hybrid_isaacs::cli::{resolve_run, ResolvedRun, SolverFlags};
use hybrid_isaacs::config::{load_config, Config};
use hybrid_isaacs::hybridsim::{rollout_value_gap, Policy, PolicyParams};
use hybrid_isaacs::operators::{HamiltonianVariant, SemiLagrangian};
use hybrid_isaacs::problem::check_y1_y2;
use hybrid_isaacs::report::Status;
use hybrid_isaacs::solver::{solve_with, GridSpec, ValueField};
use hybrid_isaacs::verify::{
    dpp_consistency, isaacs_value_equality, obstacle_chain_check, operator_probes, post_impulse_strictness,
    two_sided_uniqueness,
};

const BUNDLED: [&str; 7] = [
    "constant_cost",
    "mode_selection",
    "separable_isaacs",
    "impulse_toy",
    "anti_yong",
    "drift_1d",
    "drift_2d",
];
const PROBE_SEED: u64 = 20_240_601;

fn spec_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("specs").join(format!("{name}.toml"))
}

struct Loaded {
    config: Config,
    run: ResolvedRun,
}

fn load(name: &str) -> Loaded {
    let config = load_config(spec_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    let run = resolve_run(&config, &SolverFlags::default()).unwrap_or_else(|e| panic!("{name}: {}", e.message));
    Loaded { config, run }
}

fn solved(l: &Loaded) -> (ValueField, usize, bool) {
    let scheme = SemiLagrangian::new(&l.config.spec, &l.run.grid, l.run.solver.dt).unwrap();
    let r = solve_with(&scheme, &l.run.solver).unwrap();
    (r.field, r.iterations, r.converged)
}

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn c1_constant_cost() -> Outcome {
    let l = load("constant_cost");
    assert_eq!(l.run.grid.counts(), &[101]);
    let started = Instant::now();
    let (v, iterations, converged) = solved(&l);
    let elapsed = started.elapsed().as_secs_f64();
    let err = v.as_slice().iter().map(|x| (x - 2.0).abs()).fold(0.0, f64::max);
    outcome(
        converged && err <= 1e-9 && iterations < 2000 && elapsed < 1.0,
        format!("max|V-2| = {err:.3e}, {iterations} iterations, {elapsed:.3}s"),
    )
}

/// Independent value iteration on the two-mode game written out by hand:
/// `V_i = min(w k_i + q V_i, V_j + c)`.
fn mode_selection_oracle(k: [f64; 2], c: f64, lambda: f64, dt: f64) -> [f64; 2] {
    let q = (-lambda * dt).exp();
    let w = (1.0 - q) / lambda;
    let mut v = [0.0f64; 2];
    for _ in 0..10_000 {
        let next = [(w * k[0] + q * v[0]).min(v[1] + c), (w * k[1] + q * v[1]).min(v[0] + c)];
        let done = (next[0] - v[0]).abs().max((next[1] - v[1]).abs()) < 1e-15;
        v = next;
        if done {
            break;
        }
    }
    v
}

fn c2_mode_selection() -> Outcome {
    let l = load("mode_selection");
    let oracle = mode_selection_oracle([2.0, 0.5], 1.0, 1.0, l.run.solver.dt);
    let (v, _, converged) = solved(&l);
    let e1 = v.slice(0, 0).iter().map(|x| (x - 1.5).abs()).fold(0.0, f64::max);
    let e2 = v.slice(0, 1).iter().map(|x| (x - 0.5).abs()).fold(0.0, f64::max);
    let oracle_err = (oracle[0] - 1.5).abs().max((oracle[1] - 0.5).abs());
    let vs_oracle = v
        .slice(0, 0)
        .iter()
        .map(|x| (x - oracle[0]).abs())
        .chain(v.slice(0, 1).iter().map(|x| (x - oracle[1]).abs()))
        .fold(0.0, f64::max);
    outcome(
        converged && e1 <= 1e-8 && e2 <= 1e-8 && oracle_err <= 1e-12 && vs_oracle <= 1e-8,
        format!("|V1-1.5| = {e1:.3e}, |V2-0.5| = {e2:.3e}, solver vs oracle = {vs_oracle:.3e}"),
    )
}

fn c3_obstacle_chain() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for name in BUNDLED {
        let l = load(name);
        let (v, _, converged) = solved(&l);
        let scheme = SemiLagrangian::new(&l.config.spec, &l.run.grid, l.run.solver.dt).unwrap();
        let c = obstacle_chain_check(&scheme, &v, 1e-9);
        ok &= converged && c.status == Status::Pass;
        worst = worst.max(c.measurement("max_violation").unwrap());
    }
    outcome(ok, format!("{} specs, worst violation {worst:.3e}", BUNDLED.len()))
}

fn c4_isaacs_equality() -> Outcome {
    let l = load("separable_isaacs");
    let c = isaacs_value_equality(&l.config.spec, &l.run.grid, &l.run.solver, 16, PROBE_SEED).unwrap();
    let gap = c.measurement("isaacs_gap").unwrap();
    let diff = c.measurement("sup_difference").unwrap_or(f64::INFINITY);
    outcome(
        c.status == Status::Pass && gap == 0.0 && diff <= 1e-12,
        format!("isaacs gap {gap:.3e}, sup|V+ - V-| = {diff:.3e}"),
    )
}

fn c5_two_sided() -> Outcome {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let anti = load("anti_yong");
    let yong = check_y1_y2(&anti.config.spec);
    ok &= yong.y1 == Status::Fail && yong.y2 == Status::Fail;
    for name in BUNDLED {
        let l = load(name);
        let c = two_sided_uniqueness(&l.config.spec, &l.run.grid, &l.run.solver).unwrap();
        ok &= c.status == Status::Pass;
        worst = worst.max(c.measurement("sup_difference").unwrap() / l.run.solver.tolerance);
    }
    outcome(
        ok,
        format!(
            "worst difference {worst:.2} x tolerance; anti_yong Y1 = {}, Y2 = {}",
            yong.y1, yong.y2
        ),
    )
}

fn c6_post_impulse() -> Outcome {
    let l = load("impulse_toy");
    let (v, _, converged) = solved(&l);
    let scheme = SemiLagrangian::new(&l.config.spec, &l.run.grid, l.run.solver.dt).unwrap();
    let c = post_impulse_strictness(&scheme, &v, 10.0 * l.run.solver.tolerance, 1e-6);
    let gap = c.measurement("strictness_gap").unwrap_or(f64::NAN);
    let binding = c.measurement("binding_points").unwrap_or(0.0);
    let margin = c.measurement("min_margin").unwrap_or(f64::NAN);
    outcome(
        converged && c.status == Status::Pass && (gap - 0.5).abs() < 1e-15 && binding > 0.0,
        format!("l_bar = {gap}, {binding} binding points, min margin {margin:.6}"),
    )
}

fn c7_probes() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for name in BUNDLED {
        let l = load(name);
        let grid = GridSpec::for_problem(&l.config.spec, &[5]).unwrap();
        let scheme = SemiLagrangian::new(&l.config.spec, &grid, l.run.solver.dt).unwrap();
        let c = operator_probes(&scheme, HamiltonianVariant::Plus, 100, PROBE_SEED);
        let mono = c.measurement("monotonicity_violations").unwrap();
        let nonexp = c.measurement("nonexpansiveness_violations").unwrap();
        ok &= c.status == Status::Pass && mono == 0.0 && nonexp == 0.0;
        if let Some(shift) = c.measurement("constant_shift_error") {
            ok &= shift <= 1e-12;
            details.push(format!("{name} shift err {shift:.1e}"));
        }
    }
    outcome(ok, format!("0 violations on {} specs; {}", BUNDLED.len(), details.join(", ")))
}

fn c8_dpp() -> Outcome {
    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    for name in BUNDLED {
        let l = load(name);
        let (v, _, _) = solved(&l);
        let scheme = SemiLagrangian::new(&l.config.spec, &l.run.grid, l.run.solver.dt).unwrap();
        for m in [1, 10, 100] {
            let c = dpp_consistency(&scheme, &v, l.run.solver.variant, m, 1e-10);
            ok &= c.status == Status::Pass;
            let drift = c.measurement("m_step_drift").unwrap();
            let bound = m as f64 * c.measurement("fixed_point_residual").unwrap() + 1e-10;
            worst_ratio = worst_ratio.max(drift / bound);
        }
    }
    outcome(ok, format!("worst drift / bound = {worst_ratio:.3}"))
}

fn c9_rollout() -> Outcome {
    let l = load("mode_selection");
    let (v, _, _) = solved(&l);
    let spec = &l.config.spec;
    let params = PolicyParams {
        dt: l.run.solver.dt,
        action_tol: l.run.action_tol,
        variant: l.run.solver.variant,
    };
    let policy = Policy::new(spec, &l.run.grid, &v, params).unwrap();
    let horizon = (1e6f64).ln() / spec.discount;
    let starts: Vec<_> =
        [0.0, 0.37, 1.0].iter().flat_map(|&x| [(vec![x], 0, 0), (vec![x], 0, 1)]).collect();
    let closed = rollout_value_gap(&policy, &starts, horizon).unwrap();

    let d = load("drift_1d");
    let (vd, _, _) = solved(&d);
    let params = PolicyParams {
        dt: d.run.solver.dt,
        action_tol: d.run.action_tol,
        variant: d.run.solver.variant,
    };
    let policy = Policy::new(&d.config.spec, &d.run.grid, &vd, params).unwrap();
    let horizon = (1e6f64).ln() / d.config.spec.discount;
    let starts: Vec<_> = [-1.5, -0.5, 0.0, 0.7, 1.6].iter().map(|&x| (vec![x], 0, 0)).collect();
    let smooth = rollout_value_gap(&policy, &starts, horizon).unwrap();
    outcome(
        closed.max_abs_gap <= 1e-5 && smooth.max_rel_gap <= 0.05,
        format!(
            "mode selection |J - V| = {:.3e}; drift_1d relative gap {:.3e} (informational bound 5%)",
            closed.max_abs_gap, smooth.max_rel_gap
        ),
    )
}

fn c10_validation_gates() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_hybrid-isaacs");
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut codes = Vec::new();
    for name in ["zero_switch_cost", "superadditive_impulse", "negative_cost"] {
        let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs/invalid").join(format!("{name}.toml"));
        let cfg = dir.path().join(format!("{name}.toml"));
        std::fs::copy(&src, &cfg).unwrap();
        let out_dir = dir.path().join(name);
        let validate = Command::new(bin).arg("validate").arg(&cfg).output().unwrap();
        let solve = Command::new(bin).arg("solve").arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
        let v = validate.status.code();
        let s = solve.status.code();
        ok &= v == Some(2) && s == Some(2) && !out_dir.join("value.csv").exists();
        codes.push(format!("{name}: validate {v:?}, solve {s:?}"));
    }
    outcome(ok, codes.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("constant-cost closed form", c1_constant_cost),
        ("mode-selection closed form", c2_mode_selection),
        ("obstacle chain", c3_obstacle_chain),
        ("Isaacs value equality", c4_isaacs_equality),
        ("empirical uniqueness", c5_two_sided),
        ("post-impulse strictness", c6_post_impulse),
        ("operator probes", c7_probes),
        ("DPP consistency", c8_dpp),
        ("rollout-value gap", c9_rollout),
        ("validation gates", c10_validation_gates),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.ok {
            failures += 1;
        }
        println!(
            "acceptance criterion {:>2} {:<28} {}  {}",
            i + 1,
            name,
            if result.ok { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if failures > 0 {
        println!("acceptance: {failures} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
