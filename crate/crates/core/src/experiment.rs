//! Builds problems from configurations and runs the solver, studies and
//! material fits, writing their artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boundary::BvpSpec;
use crate::elasticity::ScaleSet;
use crate::evaluation::{
    convergence_study, split_study, train, ResidualReport, RunOutcome, RunSettings, StudyResult, TrainSpec,
};
use crate::io::config::{ExperimentConfig, ImagePipeline, MaterialConfig, SamplingMode};
use crate::io::export::{ExportFormat, FieldExport};
use crate::io::image::{binarize, gaussian_filter};
use crate::io::pgm::{load_pgm, save_pgm};
use crate::io::snapshot::{Snapshot, SnapshotKind};
use crate::material::{
    lame_from_engineering, phase_accuracy, train_material_network, EngineeringConstants, MaterialBounds, MaterialField,
    MaterialFitOptions, MaterialModel, MaterialNetwork, PhaseValues, TanhInclusion, VoxelGrid,
};
use crate::optimizer::OptHistory;
use crate::{Error, Result};

/// Result of fitting a material network to an image.
#[derive(Debug, Clone)]
pub struct MaterialFit {
    pub network: MaterialNetwork,
    pub history: OptHistory,
    pub grid: VoxelGrid,
    pub accuracy: f64,
}

/// A ready-to-train problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub bvp: BvpSpec,
    pub material: MaterialField,
    pub fit: Option<MaterialFit>,
}

fn phases(inclusion: EngineeringConstants, matrix: EngineeringConstants) -> Result<PhaseValues> {
    Ok(PhaseValues {
        phase0: lame_from_engineering(matrix)?,
        phase1: lame_from_engineering(inclusion)?,
    })
}

/// Gaussian smoothing and thresholding, then rescaling of the pixel size so
/// the image covers a cell of side `length`.
pub fn preprocess(grey: &VoxelGrid, pipeline: &ImagePipeline, length: f64) -> Result<VoxelGrid> {
    let mut g = binarize(&gaussian_filter(grey, pipeline.sigma_px)?, pipeline.threshold)?;
    if g.width != g.height {
        return Err(Error::InvalidArgument(format!(
            "voxel image must be square, got {}x{}",
            g.width, g.height
        )));
    }
    g.pixel_size = length / g.width as f64;
    Ok(g)
}

/// Fits a material network to a binary grid.
pub fn fit_material(grid: &VoxelGrid, phases: &PhaseValues, opts: &MaterialFitOptions) -> Result<MaterialFit> {
    let mut opts = opts.clone();
    opts.topology.output_dim = 2;
    let (network, history) = train_material_network(grid, phases, &opts)?;
    let accuracy = phase_accuracy(&network, grid, phases)?;
    log::info!(
        "material network: {} iterations, loss {:.3e}, phase accuracy {:.4}",
        history.iterations(),
        history.final_loss(),
        accuracy
    );
    Ok(MaterialFit {
        network,
        history,
        grid: grid.clone(),
        accuracy,
    })
}

pub fn material_snapshot(net: &MaterialNetwork, length: f64) -> Snapshot {
    let b = net.bounds();
    Snapshot {
        kind: SnapshotKind::MaterialNetwork,
        split: (1, 1),
        topology: *net.topology(),
        extras: vec![length, b.lambda_min, b.lambda_max, b.mu_min, b.mu_max],
        params: net.params().to_vec(),
    }
}

pub fn material_from_snapshot(s: &Snapshot) -> Result<MaterialNetwork> {
    if s.kind != SnapshotKind::MaterialNetwork || s.extras.len() != 5 {
        return Err(Error::Snapshot("not a material network snapshot".into()));
    }
    let e = &s.extras;
    let bounds = MaterialBounds {
        lambda_min: e[1],
        lambda_max: e[2],
        mu_min: e[3],
        mu_max: e[4],
    };
    MaterialNetwork::new(s.topology, e[0], s.params.clone(), bounds)
}

/// Resolves `path` against the directory of the configuration file.
fn resolve(base: &Path, path: &Path) -> std::path::PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Material field (fitting a network if the config asks for one) and
/// problem definition. Relative paths are taken from `base_dir`.
pub fn build_problem(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Problem> {
    let length = cfg.length;
    let domain = crate::geometry::Rect::centered(length);
    let (material, fit) = match &cfg.material {
        MaterialConfig::Constant { phase } => (MaterialField::constant(length, lame_from_engineering(*phase)?)?, None),
        MaterialConfig::Tanh {
            inclusion,
            matrix,
            delta,
            radius,
        } => {
            let t = TanhInclusion::from_phases(
                lame_from_engineering(*inclusion)?,
                lame_from_engineering(*matrix)?,
                *delta,
                *radius,
            )?;
            (MaterialField::new(domain, MaterialModel::Tanh(t))?, None)
        }
        MaterialConfig::Image {
            path,
            inclusion,
            matrix,
            pipeline,
            fit,
        } => {
            let grid = preprocess(&load_pgm(&resolve(base_dir, path))?, pipeline, length)?;
            let f = fit_material(&grid, &phases(*inclusion, *matrix)?, fit)?;
            (
                MaterialField::new(domain, MaterialModel::Network(f.network.clone()))?,
                Some(f),
            )
        }
        MaterialConfig::Fixture {
            fixture,
            inclusion,
            matrix,
            pipeline,
            fit,
        } => {
            let grid = preprocess(&fixture.generate()?, pipeline, length)?;
            let f = fit_material(&grid, &phases(*inclusion, *matrix)?, fit)?;
            (
                MaterialField::new(domain, MaterialModel::Network(f.network.clone()))?,
                Some(f),
            )
        }
        MaterialConfig::Snapshot { path, .. } => {
            let net = material_from_snapshot(&Snapshot::load(&resolve(base_dir, path))?)?;
            (MaterialField::new(domain, MaterialModel::Network(net))?, None)
        }
    };
    let scales = match cfg.scales {
        Some(s) => s,
        None => {
            let e_min = cfg.material.phases().iter().map(|p| p.e).fold(f64::INFINITY, f64::min);
            let (lambda_max, mu_max) = material.maxima();
            ScaleSet::for_problem(length, cfg.sigma_bar, e_min, lambda_max, mu_max)?
        }
    };
    let bvp = BvpSpec {
        length,
        sigma_bar: cfg.sigma_bar,
        shear_rule: cfg.shear_rule,
        scales,
    };
    bvp.validate()?;
    Ok(Problem { bvp, material, fit })
}

/// Machine-readable outcome of `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub split: (usize, usize),
    pub params: usize,
    pub iterations: usize,
    pub termination: String,
    pub final_loss: f64,
    pub mean_r: f64,
    pub max_r: f64,
    pub min_r: f64,
    /// Square root of the scaled work-balance term.
    pub sqrt_l_w: f64,
    pub work_imbalance: f64,
    pub u_x_max: f64,
    pub u_y_min: f64,
    pub interface_defect: f64,
    pub seed: u64,
}

pub fn train_spec(cfg: &ExperimentConfig) -> TrainSpec {
    TrainSpec {
        topology: cfg.topology,
        split: cfg.split,
        interface: cfg.interface,
        optimizer: cfg.optimizer,
        n_side: cfg.sampling.n_side,
        adaptive: match cfg.sampling.mode {
            SamplingMode::Regular => None,
            SamplingMode::Adaptive => cfg.sampling.adaptive,
        },
        eval_side: cfg.eval_side,
        seed: cfg.seed,
    }
}

pub fn summarize(cfg: &ExperimentConfig, out: &RunOutcome) -> Result<Summary> {
    let rep = &out.report;
    let per_seg = ((cfg.eval_side as f64 / cfg.split.0 as f64).round() as usize).max(1);
    let defect = out
        .model
        .interface_defect(&out.params, &out.model.interface_points(per_seg))?;
    Ok(Summary {
        problem: serde_json::to_value(cfg.problem)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        split: cfg.split,
        params: out.model.param_count(),
        iterations: out.iterations(),
        termination: format!("{:?}", out.history.termination),
        final_loss: out.final_loss(),
        mean_r: rep.r_stats.mean,
        max_r: rep.r_stats.max,
        min_r: rep.r_stats.min,
        sqrt_l_w: rep.work_norm,
        work_imbalance: rep.work_imbalance,
        u_x_max: rep.field_stats(0).max,
        u_y_min: rep.field_stats(1).min,
        interface_defect: defect,
        seed: cfg.seed,
    })
}

pub struct SolveOutput {
    pub problem: Problem,
    pub outcome: RunOutcome,
    pub summary: Summary,
}

pub fn solve(cfg: &ExperimentConfig, base_dir: &Path) -> Result<SolveOutput> {
    let problem = build_problem(cfg, base_dir)?;
    let outcome = train(&problem.bvp, &problem.material, &train_spec(cfg))?;
    let summary = summarize(cfg, &outcome)?;
    Ok(SolveOutput {
        problem,
        outcome,
        summary,
    })
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn model_snapshot(out: &RunOutcome) -> Snapshot {
    Snapshot {
        kind: SnapshotKind::FieldModel,
        split: out.model.decomposition.splits,
        topology: *out.model.subnets[0].network.topology(),
        extras: vec![out.model.bvp.length, out.model.bvp.sigma_bar],
        params: out.params.clone(),
    }
}

pub fn write_report(dir: &Path, report: &ResidualReport, format: ExportFormat) -> Result<()> {
    FieldExport::from_report(report)?.write(&dir.join(format!("fields.{}", format.extension())), format)
}

/// Writes `summary.json`, `history.csv`, `params.snap`, the field export
/// and, for fitted materials, `material.snap` and `voxels.pgm`.
pub fn write_solve(dir: &Path, out: &SolveOutput, format: ExportFormat) -> Result<()> {
    ensure_dir(dir)?;
    let summary = serde_json::to_string_pretty(&out.summary).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write(&dir.join("summary.json"), summary + "\n")?;
    write(&dir.join("history.csv"), out.outcome.history.to_csv())?;
    model_snapshot(&out.outcome).save(&dir.join("params.snap"))?;
    write_report(dir, &out.outcome.report, format)?;
    if let Some(f) = &out.problem.fit {
        material_snapshot(&f.network, out.problem.bvp.length).save(&dir.join("material.snap"))?;
        save_pgm(&dir.join("voxels.pgm"), &f.grid)?;
        write(&dir.join("material_history.csv"), f.history.to_csv())?;
    }
    Ok(())
}

/// Study settings taking depth, activation, optimizer and seed from `cfg`.
pub fn run_settings(cfg: &ExperimentConfig, param_budget: usize) -> RunSettings {
    RunSettings {
        n_layers: cfg.topology.n_layers,
        param_budget,
        activation: cfg.topology.activation,
        optimizer: cfg.optimizer,
        interface: cfg.interface,
        eval_side: cfg.eval_side,
        seed: cfg.seed,
    }
}

/// Runs the studies configured in `cfg.study`.
pub fn run_studies(cfg: &ExperimentConfig, problem: &Problem) -> Result<(Option<StudyResult>, Option<StudyResult>)> {
    let study = cfg
        .study
        .as_ref()
        .ok_or_else(|| Error::Config("missing field `study`".into()))?;
    let settings = |budget| run_settings(cfg, budget);
    let conv = study.convergence.as_ref().map(|c| {
        convergence_study(
            &problem.bvp,
            &problem.material,
            &settings(c.param_budget),
            &c.methods,
            &c.sides,
            c.cpinn_split,
            &c.adaptive,
        )
    });
    let split = study.split.as_ref().map(|s| {
        split_study(
            &problem.bvp,
            &problem.material,
            &settings(s.param_budget),
            &s.splits,
            s.n_side,
        )
    });
    Ok((conv, split))
}

/// Rebuilds a trained model from a snapshot and evaluates it.
pub fn evaluate_snapshot(cfg: &ExperimentConfig, problem: &Problem, snap: &Snapshot) -> Result<ResidualReport> {
    if snap.kind != SnapshotKind::FieldModel {
        return Err(Error::Snapshot("not a field-model snapshot".into()));
    }
    let d = crate::decomposition::decompose(problem.bvp.length, snap.split.0, snap.split.1)?;
    let model = crate::decomposition::Model::new(problem.bvp, d, snap.topology, cfg.interface)?;
    crate::evaluation::residual_report(&model, &snap.params, &problem.material, cfg.eval_side)
}
