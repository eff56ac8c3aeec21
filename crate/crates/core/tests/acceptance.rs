//! Acceptance criteria, one pass/fail line each, driven by the shipped
//! configurations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use microelast::boundary::{BvpSpec, Composer, ShearRule};
use microelast::decomposition::{decompose, InterfaceOptions, Model};
use microelast::elasticity::{Lame, PinnLoss, ScaleSet, UniaxialSolution};
use microelast::evaluation::{run_one, RunOutcome};
use microelast::experiment::{build_problem, run_settings, solve};
use microelast::io::config::ExperimentConfig;
use microelast::io::export::{read_csv, FieldExport};
use microelast::io::image::binarize;
use microelast::io::snapshot::{Snapshot, SnapshotKind};
use microelast::material::{
    lame_from_engineering, EngineeringConstants, MaterialField, MaterialNetwork, PhaseValues, VoxelGrid,
};
use microelast::netcore::{init_params, Activation, Network, Topology};
use microelast::optimizer::{clip, minimize, BfgsOptions};
use microelast::sampling::{regular_grid, select_adaptive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    let path = config_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    ExperimentConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c1_c2() -> (Check, Check) {
    let cfg = load("homogeneous.json");
    let out = match solve(&cfg, &config_dir()) {
        Ok(o) => o,
        Err(e) => return (Err(format!("solve failed: {e}")), Err(format!("solve failed: {e}"))),
    };
    let phase = cfg.material.phases()[0];
    let exact = UniaxialSolution::new(lame_from_engineering(phase).unwrap(), cfg.sigma_bar, cfg.length);
    let ux_ref = exact.strain_xx * cfg.length;
    let uy_ref = exact.strain_yy * cfg.length;
    let rep = &out.outcome.report;
    let ux = rep.field_stats(0).max;
    let uy = rep.field_stats(1).min;
    let sxx = rep
        .fields
        .iter()
        .map(|s| rel(s.values[2], cfg.sigma_bar))
        .fold(0.0, f64::max);
    let syy = rep.fields.iter().map(|s| s.values[3].abs()).fold(0.0, f64::max);
    let sxy = rep.fields.iter().map(|s| s.values[4].abs()).fold(0.0, f64::max);
    let iters = out.outcome.iterations();
    let detail = format!(
        "max u_x {ux:.4e} (ref {ux_ref:.4e}, err {:.2}%), min u_y {uy:.4e} (ref {uy_ref:.4e}, err {:.2}%), \
         max |sxx/sbar - 1| {sxx:.2e}, max |syy| {syy:.2e}, max |sxy| {sxy:.2e}, {iters} iterations",
        100.0 * rel(ux, ux_ref),
        100.0 * rel(uy, uy_ref)
    );
    let ok =
        rel(ux, ux_ref) <= 0.05 && rel(uy, uy_ref) <= 0.05 && sxx <= 0.01 && syy < 1e-4 && sxy < 1e-4 && iters <= 500;
    let c1 = if ok { Ok(detail) } else { Err(detail) };
    let w = out.summary.sqrt_l_w;
    let c2 = if w <= 1e-4 {
        Ok(format!("sqrt(L_W) = {w:.3e} <= 1e-4"))
    } else {
        Err(format!("sqrt(L_W) = {w:.3e} > 1e-4"))
    };
    (c1, c2)
}

fn inclusion_runs() -> (Check, Check) {
    let cfg = load("convergence.json");
    let conv = cfg
        .study
        .as_ref()
        .and_then(|s| s.convergence.clone())
        .expect("convergence study");
    let problem = build_problem(&cfg, &config_dir()).expect("problem");
    let settings = run_settings(&cfg, conv.param_budget);
    let mut pinn: Vec<(usize, f64)> = Vec::new();
    let mut finest: Option<RunOutcome> = None;
    for &n in &conv.sides {
        let t = Instant::now();
        match run_one(&problem.bvp, &problem.material, &settings, (1, 1), n, None) {
            Ok(o) => {
                eprintln!(
                    "  PINN {n}^2: mean R {:.3e} ({:.0} s)",
                    o.report.r_stats.mean,
                    t.elapsed().as_secs_f64()
                );
                pinn.push((n, o.report.r_stats.mean));
                if n == 128 {
                    finest = Some(o);
                }
            }
            Err(e) => {
                let msg = format!("PINN {n}^2 failed: {e}");
                return (Err(msg.clone()), Err(msg));
            }
        }
    }
    let c3 = match &finest {
        None => Err("no 128^2 PINN run configured".into()),
        Some(o) => {
            let rep = &o.report;
            let a = rep.argmax_r();
            let r = a[0].hypot(a[1]);
            let cell = cfg.length / (rep.n_side - 1) as f64;
            let dist = (r - 0.4).abs() / cell;
            let mean = rep.r_stats.mean;
            let detail = format!(
                "mean R {mean:.3e} (<= 1e-2), argmax R at ({:.4}, {:.4}), |r - 0.4| = {dist:.2} cells (<= 2), max R {:.3e}, min R {:.3e}",
                a[0], a[1], rep.r_stats.max, rep.r_stats.min
            );
            if mean <= 1e-2 && dist <= 2.0 {
                Ok(detail)
            } else {
                Err(detail)
            }
        }
    };
    let t = Instant::now();
    let cpinn = run_one(&problem.bvp, &problem.material, &settings, conv.cpinn_split, 128, None);
    let c4 = match cpinn {
        Err(e) => Err(format!("CPINN failed: {e}")),
        Ok(c) => {
            let rc = c.report.r_stats.mean;
            eprintln!(
                "  CPINN 2x2 128^2: mean R {rc:.3e} ({:.0} s)",
                t.elapsed().as_secs_f64()
            );
            let rp = pinn.last().map(|p| p.1).unwrap_or(f64::NAN);
            let monotone = pinn.windows(2).all(|w| w[1].1 < w[0].1);
            let decade = |v: f64, reference: f64| v >= reference / 10.0 && v <= reference * 10.0;
            let series: Vec<String> = pinn.iter().map(|(n, r)| format!("{n}^2: {r:.3e}")).collect();
            let detail = format!(
                "PINN [{}] monotone {monotone}; CPINN 2x2 {rc:.3e} vs PINN {rp:.3e}; params {} vs {}",
                series.join(", "),
                c.model.param_count(),
                finest.as_ref().map(|o| o.model.param_count()).unwrap_or(0)
            );
            if monotone && rc < rp && decade(rp, 1.9673028e-3) && decade(rc, 1.3794703e-3) {
                Ok(detail)
            } else {
                Err(detail)
            }
        }
    };
    (c3, c4)
}

fn c5() -> Check {
    let cfg = load("split.json");
    let study = cfg.study.as_ref().and_then(|s| s.split.clone()).expect("split study");
    let problem = build_problem(&cfg, &config_dir()).map_err(|e| format!("material fit failed: {e}"))?;
    if let Some(f) = &problem.fit {
        eprintln!("  material network phase accuracy {:.4}", f.accuracy);
    }
    let settings = run_settings(&cfg, study.param_budget);
    let mean = |split: (usize, usize)| -> Result<f64, String> {
        let t = Instant::now();
        let o = run_one(&problem.bvp, &problem.material, &settings, split, study.n_side, None)
            .map_err(|e| format!("{}x{} failed: {e}", split.0, split.1))?;
        eprintln!(
            "  split {}x{}: mean R {:.3e}, {} params ({:.0} s)",
            split.0,
            split.1,
            o.report.r_stats.mean,
            o.model.param_count(),
            t.elapsed().as_secs_f64()
        );
        Ok(o.report.r_stats.mean)
    };
    let r1 = mean((1, 1))?;
    let r4 = mean((4, 4))?;
    let r5 = mean((5, 5))?;
    let gain = 1.0 - r4 / r1;
    let detail = format!(
        "mean R 1x1 {r1:.3e}, 4x4 {r4:.3e} ({:.1}% lower, >= 10%), 5x5 {r5:.3e} (> 4x4)",
        100.0 * gain
    );
    if gain >= 0.10 && r5 > r4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Property suites, in compact form; the full versions live in the other
// integration tests.

fn lame(e: f64) -> Lame {
    lame_from_engineering(EngineeringConstants { e, nu: 0.4 }).unwrap()
}

fn small_bvp(scales: ScaleSet) -> BvpSpec {
    BvpSpec {
        length: 2.0,
        sigma_bar: 0.025,
        shear_rule: ShearRule::Verbatim,
        scales,
    }
}

fn physical() -> BvpSpec {
    let m = lame(1e4);
    small_bvp(ScaleSet::for_problem(2.0, 0.025, 1e4, m.lambda, m.mu).unwrap())
}

fn jacobian_fd() -> Result<(), String> {
    let t = Topology::field(3, 12);
    let net = Network::new(t).unwrap();
    let p = init_params(&t, 1);
    for x in [[0.3, -0.2], [-0.9, 0.7], [0.05, 0.95]] {
        let j = net.forward_with_jacobian(&p, x).unwrap();
        for a in 0..2 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let (yp, ym) = (net.forward(&p, xp).unwrap(), net.forward(&p, xm).unwrap());
            for k in 0..5 {
                let fd = (yp[k] - ym[k]) / (2.0 * h);
                let an = j.dy_dx[k][a];
                if (an - fd).abs() > 1e-6 * an.abs().max(1e-3) {
                    return Err(format!("jacobian {k},{a}: {an} vs {fd}"));
                }
            }
        }
    }
    Ok(())
}

fn gradient_fd() -> Result<(), String> {
    let m = Model::single(physical(), Topology::field(2, 8)).unwrap();
    let mat = MaterialField::constant(2.0, lame(1e4)).unwrap();
    let data = m.prepare(&m.regular_sets(5).unwrap(), &[], &mat).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p: Vec<f64> = m
        .init_params(1)
        .iter()
        .map(|v| v + 0.05 * rng.gen_range(-1.0..1.0))
        .collect();
    let (_, g) = m.evaluate(&p, &data, true).unwrap();
    for _ in 0..10 {
        let d: Vec<f64> = (0..p.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let an: f64 = g.iter().zip(&d).map(|(a, b)| a * b / n).sum();
        let at = |s: f64| {
            let q: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + s * b / n).collect();
            m.total_loss(&q, &data).unwrap().total
        };
        let h = 1e-5;
        let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        if (an - fd).abs() > 1e-5 * an.abs().max(fd.abs()) {
            return Err(format!("gradient {an} vs {fd}"));
        }
    }
    Ok(())
}

fn hard_bc() -> Result<(), String> {
    let m = Model::new(
        physical(),
        decompose(2.0, 2, 2).unwrap(),
        Topology::field(2, 8),
        InterfaceOptions::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p: Vec<f64> = m
        .init_params(0)
        .iter()
        .map(|v| v + 0.3 * rng.gen_range(-1.0..1.0))
        .collect();
    for i in 0..1000 {
        let t = rng.gen_range(-1.0..=1.0);
        let (x, k, want) = match i % 5 {
            0 => ([-1.0, t], 0, 0.0),
            1 => ([t, -1.0], 1, 0.0),
            2 => ([1.0, t], 2, 0.025),
            3 => ([t, 1.0], 3, 0.0),
            _ => ([1.0, t], 4, 0.0),
        };
        let v = m.predict(&p, &[x]).unwrap()[0].values[k];
        if (v - want).abs() > 4.0 * f64::EPSILON * want {
            return Err(format!("output {k} at {x:?} is {v}, expected {want}"));
        }
    }
    Ok(())
}

fn interface_zero() -> Result<(), String> {
    // On a 4x4 split the inner boxes 5, 6, 9 and 10 carry no boundary
    // rule, so identical subnets compose to identical fields there.
    let m = Model::new(
        physical(),
        decompose(2.0, 4, 4).unwrap(),
        Topology::field(0, 1),
        InterfaceOptions::default(),
    )
    .unwrap();
    let inner = [5, 6, 9, 10];
    let ifaces: Vec<_> = m
        .interface_points(7)
        .into_iter()
        .filter(|ip| {
            let (a, b) = m.decomposition.interfaces[ip.interface].pair;
            inner.contains(&a) && inner.contains(&b)
        })
        .collect();
    if ifaces.len() != 4 {
        return Err(format!("{} inner interfaces, expected 4", ifaces.len()));
    }
    let mut net = [0.0; 15];
    for (k, b) in [0.3, -0.2, 0.01, 0.005, 0.002].into_iter().enumerate() {
        net[3 * k + 2] = b;
    }
    let params = net.repeat(16);
    let mat = MaterialField::constant(2.0, lame(1e4)).unwrap();
    let data = m.prepare(&m.regular_sets(8).unwrap(), &ifaces, &mat).unwrap();
    let l = m.interface_loss(&params, &data).unwrap();
    if l == 0.0 {
        Ok(())
    } else {
        Err(format!("interface loss {l:e}"))
    }
}

fn cpinn_equals_pinn() -> Result<(), String> {
    let t = Topology::field(3, 10);
    let b = physical();
    let mat = MaterialField::constant(2.0, lame(1e4)).unwrap();
    let m = Model::new(b, decompose(2.0, 1, 1).unwrap(), t, InterfaceOptions::default()).unwrap();
    let set = regular_grid(10, 2.0).unwrap();
    let data = m.prepare(std::slice::from_ref(&set), &[], &mat).unwrap();
    let p = init_params(&t, 4).into_inner();
    let got = m.total_loss(&p, &data).unwrap().total;
    let net = Network::new(t).unwrap();
    let rules = b.rules().unwrap();
    let int =
        Composer::new(&rules, &b.scales, &set.interior).compose(&net.evaluate_batch(&p, &set.interior, true).unwrap());
    let bnd =
        Composer::new(&rules, &b.scales, &set.loaded).compose(&net.evaluate_batch(&p, &set.loaded, true).unwrap());
    let mats = vec![lame(1e4); int.len()];
    let want = PinnLoss::new(b.scales)
        .unwrap()
        .total_loss(&int, &mats, &bnd, 2.0)
        .unwrap()
        .total;
    if (got - want).abs() <= 1e-12 * want {
        Ok(())
    } else {
        Err(format!("{got} vs {want}"))
    }
}

fn bfgs_quadratic() -> Result<(), String> {
    // diagonal-plus-coupling SPD system with known solution x = 1..n
    let n = 8;
    let a = |i: usize, j: usize| {
        if i == j {
            4.0 + i as f64
        } else if i.abs_diff(j) == 1 {
            1.0
        } else {
            0.0
        }
    };
    let xs: Vec<f64> = (1..=n).map(|v| v as f64).collect();
    let b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a(i, j) * xs[j]).sum()).collect();
    let f = |x: &[f64]| {
        let ax: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a(i, j) * x[j]).sum()).collect();
        let v = 0.5 * x.iter().zip(&ax).map(|(p, q)| p * q).sum::<f64>()
            - x.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>();
        let g = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
        Ok((v, g))
    };
    let (x, _) = minimize(f, vec![0.0; n], &BfgsOptions::default().with_max_iters(200)).map_err(|e| e.to_string())?;
    let err = x.iter().zip(&xs).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    if err <= 1e-8 {
        Ok(())
    } else {
        Err(format!("max error {err:e}"))
    }
}

fn material_bounds() -> Result<(), String> {
    let phases = PhaseValues {
        phase0: lame(1.5e3),
        phase1: lame(1e4),
    };
    let b = phases.bounds();
    let t = Topology::new(2, 2, 8, Activation::Swish).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..50 {
        let amp = rng.gen_range(0.1..50.0);
        let p: Vec<f64> = init_params(&t, seed).iter().map(|v| v * amp).collect();
        let net = MaterialNetwork::new(t, 2.0, p, b).unwrap();
        let pts: Vec<_> = (0..20)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        for l in net.evaluate(&pts).unwrap() {
            if !(l.lambda >= b.lambda_min && l.lambda <= b.lambda_max && l.mu >= b.mu_min && l.mu <= b.mu_max) {
                return Err(format!("{l:?} outside {b:?}"));
            }
        }
    }
    Ok(())
}

fn clip_and_topk() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let n = rng.gen_range(1..60);
        let mut g: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let alpha = rng.gen_range(0.1..20.0);
        clip(&mut g, alpha);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > alpha * (1.0 + 1e-12) {
            return Err(format!("clipped norm {norm} > {alpha}"));
        }
        let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let k = rng.gen_range(0..=n);
        let mut sorted: Vec<usize> = (0..n).collect();
        sorted.sort_by(|&a, &b| losses[b].partial_cmp(&losses[a]).unwrap().then(a.cmp(&b)));
        sorted.truncate(k);
        if select_adaptive(&losses, k).unwrap() != sorted {
            return Err("top-k differs from full sort".into());
        }
    }
    Ok(())
}

fn image_and_exports() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let values: Vec<f64> = (0..48).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let g = VoxelGrid::new(8, 6, values, 1.0).unwrap();
    let once = binarize(&g, 0.5).unwrap();
    if binarize(&once, 0.5).unwrap() != once {
        return Err("binarize is not idempotent".into());
    }
    let ch: Vec<f64> = (0..12).map(|k| (k as f64).exp() * 1e-7).collect();
    let e = FieldExport::new(4, 3, [-1.0, -1.0], [0.5, 1.0], vec![("R".into(), ch.clone())]).unwrap();
    let (_, rows) = read_csv(&e.to_csv()).map_err(|e| e.to_string())?;
    if rows.iter().zip(&ch).any(|(r, v)| (r[2] - v).abs() > 1e-9 * v.abs()) {
        return Err("CSV round trip".into());
    }
    let t = Topology::field(2, 5);
    let s = Snapshot {
        kind: SnapshotKind::FieldModel,
        split: (1, 1),
        topology: t,
        extras: vec![2.0],
        params: init_params(&t, 9).into_inner(),
    };
    if Snapshot::decode(&s.encode().unwrap()).map_err(|e| e.to_string())? != s {
        return Err("snapshot round trip".into());
    }
    Ok(())
}

fn c6() -> Check {
    type Property = (&'static str, fn() -> Result<(), String>);
    let checks: [Property; 10] = [
        ("jacobian FD", jacobian_fd),
        ("loss gradient FD", gradient_fd),
        ("hard BC exactness", hard_bc),
        ("interface zero", interface_zero),
        ("1x1 CPINN = PINN", cpinn_equals_pinn),
        ("BFGS quadratic", bfgs_quadratic),
        ("material bounds", material_bounds),
        ("clip and top-k", clip_and_topk),
        ("image and exports", image_and_exports),
        ("unit scales", || ScaleSet::UNIT.validate().map_err(|e| e.to_string())),
    ];
    let failed: Vec<String> = checks
        .iter()
        .filter_map(|(name, f)| f().err().map(|e| format!("{name}: {e}")))
        .collect();
    if failed.is_empty() {
        Ok(format!("{} property checks", checks.len()))
    } else {
        Err(failed.join("; "))
    }
}

fn report(id: &str, title: &str, result: &Check, secs: f64) -> bool {
    let (tag, detail) = match result {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{id} {tag} {title}: {detail} [{secs:.0} s]");
    result.is_ok()
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; `--list` must
    // not start the training runs.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    println!("acceptance criteria");
    let mut results = Vec::new();

    let t = Instant::now();
    results.push(report("C6", "property suites", &c6(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let (c1, c2) = c1_c2();
    let secs = t.elapsed().as_secs_f64();
    results.push(report("C1", "homogeneous plate vs exact solution", &c1, secs));
    results.push(report("C2", "work-balance norm", &c2, secs));

    let t = Instant::now();
    let (c3, c4) = inclusion_runs();
    let secs = t.elapsed().as_secs_f64();
    results.push(report("C3", "single inclusion residual and interface peak", &c3, secs));
    results.push(report("C4", "convergence ranking", &c4, secs));

    let t = Instant::now();
    results.push(report(
        "C5",
        "split-study turnover on the voxel fixture",
        &c5(),
        t.elapsed().as_secs_f64(),
    ));

    println!("C7 EXCLUDED reference iteration counts, single-precision magnitudes and the µCT scan data are not gated");
    let passed = results.iter().filter(|&&r| r).count();
    println!("{passed} of {} gated criteria passed", results.len());
    // Failures are reported, not fatal, unless strict mode is requested.
    let strict = std::env::var("MICROELAST_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < results.len() {
        std::process::exit(1);
    }
}
