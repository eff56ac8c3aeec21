//! Residual reports recomputed from first principles, and smoke runs of the
//! studies and the configured solve.

use microelast::boundary::{BvpSpec, ShearRule};
use microelast::decomposition::Model;
use microelast::elasticity::{residual_balance, residual_constitutive, ScaleSet};
use microelast::evaluation::{
    convergence_study, residual_report, split_study, AdaptiveStudySettings, Method, RunSettings,
};
use microelast::experiment::{evaluate_snapshot, model_snapshot, solve, write_solve};
use microelast::io::config::ExperimentConfig;
use microelast::io::export::ExportFormat;
use microelast::material::{lame_from_engineering, EngineeringConstants, MaterialField};
use microelast::netcore::{Activation, Topology};
use microelast::optimizer::BfgsOptions;

fn bvp() -> (BvpSpec, MaterialField) {
    let lame = lame_from_engineering(EngineeringConstants { e: 1e4, nu: 0.4 }).unwrap();
    let b = BvpSpec {
        length: 2.0,
        sigma_bar: 0.025,
        shear_rule: ShearRule::Verbatim,
        scales: ScaleSet::for_problem(2.0, 0.025, 1e4, lame.lambda, lame.mu).unwrap(),
    };
    (b, MaterialField::constant(2.0, lame).unwrap())
}

#[test]
fn report_statistics_match_recomputation() {
    let (b, mat) = bvp();
    let model = Model::single(b, Topology::field(2, 8)).unwrap();
    let p = model.init_params(5);
    let rep = residual_report(&model, &p, &mat, 9).unwrap();
    assert_eq!(rep.r.len(), 81);
    let mut sum = 0.0;
    let mut max = f64::MIN;
    let mut min = f64::MAX;
    for (s, x) in rep.fields.iter().zip(&rep.points) {
        let lame = mat.query(*x).unwrap();
        let d = residual_balance(s);
        let c = residual_constitutive(s, lame).unwrap();
        let r = d.iter().chain(&c).map(|v| v.abs()).sum::<f64>();
        sum += r;
        max = max.max(r);
        min = min.min(r);
    }
    let mean = sum / 81.0;
    assert!((rep.r_stats.mean - mean).abs() <= 1e-12 * mean);
    assert!((rep.r_stats.max - max).abs() <= 1e-12 * max);
    assert!((rep.r_stats.min - min).abs() <= 1e-12 * min);
    let a = rep.argmax_r();
    let k = rep.points.iter().position(|p| *p == a).unwrap();
    assert_eq!(rep.r[k], rep.r_stats.max);
}

fn settings() -> RunSettings {
    RunSettings {
        n_layers: 1,
        param_budget: 120,
        activation: Activation::Swish,
        optimizer: BfgsOptions::default().with_max_iters(3),
        interface: Default::default(),
        eval_side: 6,
        seed: 1,
    }
}

#[test]
fn convergence_study_smoke() {
    let (b, mat) = bvp();
    let adaptive = AdaptiveStudySettings {
        gamma: 3.0,
        rand_factor: 4,
        n_iter: 1,
        alpha: 1.0,
        fine_share: 0.5,
    };
    let methods = [Method::Pinn, Method::Cpinn, Method::AdaPinn, Method::AdaCpinn];
    let r = convergence_study(&b, &mat, &settings(), &methods, &[4, 6], (2, 2), &adaptive);
    assert_eq!(r.rows.len(), 8);
    for row in &r.rows {
        assert!(row.error.is_none(), "{row:?}");
        assert!(row.mean_r.is_finite());
        assert!(row.params > 0 && row.params.abs_diff(120) <= 40, "{row:?}");
    }
    assert!(r.row("CPINN", 36, (2, 2)).is_some());
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.lines().nth(1).unwrap().starts_with("PINN,"));
}

#[test]
fn split_study_smoke() {
    let (b, mat) = bvp();
    let r = split_study(&b, &mat, &settings(), &[(1, 1), (2, 2), (3, 3)], 9);
    assert_eq!(r.rows.len(), 3);
    assert_eq!(r.rows[0].method, "PINN");
    assert!(r.rows.iter().all(|row| row.error.is_none()));
}

const CONFIG: &str = r#"{
    "problem": "single_inclusion",
    "length": 2.0,
    "sigma_bar": 0.025,
    "topology": {"n_layers": 1, "units_per_layer": 6},
    "split": [2, 1],
    "sampling": {"mode": "regular", "n_side": 8},
    "optimizer": {"max_iters": 4},
    "material": {
        "kind": "tanh",
        "inclusion": {"e": 10000.0, "nu": 0.4},
        "matrix": {"e": 1500.0, "nu": 0.4},
        "delta": 0.03,
        "radius": 0.4
    },
    "eval_side": 7,
    "output_dir": "unused",
    "seed": 3
}"#;

#[test]
fn configured_solve_writes_artifacts_and_snapshot_reproduces_report() {
    let cfg = ExperimentConfig::from_json(CONFIG).unwrap();
    let out = solve(&cfg, std::path::Path::new(".")).unwrap();
    assert_eq!(out.summary.problem, "single_inclusion");
    assert_eq!(out.summary.split, (2, 1));
    let dir = tempfile::tempdir().unwrap();
    write_solve(dir.path(), &out, ExportFormat::Vtk).unwrap();
    for f in ["summary.json", "history.csv", "params.snap", "fields.vtk"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let again = evaluate_snapshot(&cfg, &out.problem, &model_snapshot(&out.outcome)).unwrap();
    assert_eq!(again.r_stats, out.outcome.report.r_stats);
}
