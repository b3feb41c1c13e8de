use std::path::Path;

use hybrid_isaacs::config::{load_config, parse_config};
use hybrid_isaacs::operators::HamiltonianVariant;
use hybrid_isaacs::problem::ProblemSpec;
use hybrid_isaacs::solver::{solve, GridSpec, Init, SolverConfig};
use proptest::prelude::*;

fn bundled(name: &str) -> (ProblemSpec, GridSpec, SolverConfig) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs").join(format!("{name}.toml"));
    let cfg = load_config(path).unwrap();
    let grid = GridSpec::for_problem(&cfg.spec, cfg.grid.points.as_deref().unwrap()).unwrap();
    (cfg.spec, grid, SolverConfig::new(cfg.solver.dt.unwrap()))
}

#[test]
fn result_independent_of_worker_count() {
    let (spec, grid, cfg) = bundled("anti_yong");
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| solve(&spec, &grid, &cfg).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.field, four.field);
    assert_eq!(one.history, four.history);
}

#[test]
fn mode_selection_is_refinement_invariant() {
    let (spec, _, cfg) = bundled("mode_selection");
    let mut fields = Vec::new();
    for (points, dt) in [(11, 0.5), (21, 0.25)] {
        let grid = GridSpec::for_problem(&spec, &[points]).unwrap();
        let r = solve(&spec, &grid, &SolverConfig { dt, ..cfg.clone() }).unwrap();
        fields.push((r.field.slice(0, 0)[0], r.field.slice(0, 1)[0]));
    }
    for (a, b) in &fields {
        assert!((a - 1.5).abs() < 1e-8 && (b - 0.5).abs() < 1e-8);
    }
}

#[test]
fn refinement_differences_shrink_on_smooth_problem() {
    let (spec, _, cfg) = bundled("drift_1d");
    let sample = |points: usize, dt: f64| {
        let grid = GridSpec::for_problem(&spec, &[points]).unwrap();
        let r = solve(&spec, &grid, &SolverConfig { dt, ..cfg.clone() }).unwrap();
        // Values on the coarsest grid's nodes.
        (0..=20).map(|i| grid.interpolate(r.field.slice(0, 0), &[-2.0 + 0.2 * i as f64])).collect::<Vec<_>>()
    };
    let a = sample(21, 0.4);
    let b = sample(41, 0.2);
    let c = sample(81, 0.1);
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let d1 = diff(&a, &b);
    let d2 = diff(&b, &c);
    assert!(d2 < d1, "{d1} then {d2}");
}

fn single_mode_spec(k: &str, f: &str, a: f64) -> ProblemSpec {
    parse_config(&format!(
        r#"
[problem]
dimension = 1
discount = 0.8
generator = [[{a}]]
box = [[-1.0, 1.0]]
u1_levels = [-1.0, 1.0]
u2_levels = [-1.0, 0.0, 1.0]
d1_labels = ["a", "b"]
d2_labels = ["p", "q"]
[dynamics."a,p"]
f = ["{f}"]
[dynamics."a,q"]
f = ["-({f})"]
[dynamics."b,p"]
f = ["0.5*({f})"]
[dynamics."b,q"]
f = ["0"]
[cost."a,p"]
k = "{k}"
[cost."a,q"]
k = "0.5*({k})"
[cost."b,p"]
k = "2*({k})"
[cost."b,q"]
k = "({k}) + 0.1"
[switching]
c1 = [[0.0, 0.4], [0.3, 0.0]]
c2 = [[0.0, 0.2], [0.5, 0.0]]
[impulses]
jumps = [[0.5], [-0.5], [1.0], [-1.0]]
costs = [0.6, 0.6, 1.0, 1.0]
"#
    ))
    .unwrap()
    .spec
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn monotone_bounded_convergence_from_zero(
        c0 in 0.0f64..2.0,
        c1 in 0.0f64..1.0,
        speed in 0.0f64..1.5,
        a in 0.0f64..0.5,
        minus in any::<bool>(),
    ) {
        let k = format!("{c0} + {c1}*x0^2 + 0.2*u1*u2 + 0.2");
        let f = format!("{speed}*u1 + 0.5*u2");
        let spec = single_mode_spec(&k, &f, a);
        let grid = GridSpec::new(&[11], &spec.bounds).unwrap();
        let mut cfg = SolverConfig::new(0.4);
        cfg.variant = if minus { HamiltonianVariant::Minus } else { HamiltonianVariant::Plus };
        let r = solve(&spec, &grid, &cfg).unwrap();
        prop_assert!(r.converged && r.monotone);
        prop_assert!(r.last_change() <= cfg.tolerance);
        let bound = (c0 + c1 + 0.4 + 0.1).max(2.0 * (c0 + c1 + 0.4)) / spec.discount;
        prop_assert!(r.field.min() >= 0.0);
        prop_assert!(r.field.max() <= bound + 1e-9);
        let upper = solve(&spec, &grid, &SolverConfig { init: Init::Upper, ..cfg.clone() }).unwrap();
        prop_assert!(upper.field.sup_distance(&r.field) <= 10.0 * cfg.tolerance);
    }
}
