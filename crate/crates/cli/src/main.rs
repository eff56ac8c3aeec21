use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use microelast::experiment::{
    build_problem, ensure_dir, evaluate_snapshot, fit_material, material_snapshot, preprocess, run_studies, solve,
    write_report, write_solve,
};
use microelast::io::config::{ExperimentConfig, MaterialConfig};
use microelast::io::export::ExportFormat;
use microelast::io::pgm::{load_pgm, save_pgm};
use microelast::io::snapshot::Snapshot;
use microelast::material::{lame_from_engineering, PhaseValues};
use microelast::{Error, Result};

#[derive(Parser)]
#[command(
    name = "microelast",
    version,
    about = "Physics-informed solver for 2D elastic unit cells"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one problem.
    Solve(Common),
    /// Run a configured study.
    #[command(subcommand)]
    Study(Study),
    /// Fit a material network to the configured voxel image.
    MaterialFit(Common),
    /// Re-evaluate a saved parameter snapshot and export its fields.
    Export {
        #[command(flatten)]
        common: Common,
        /// Snapshot written by `solve`.
        #[arg(long)]
        params: PathBuf,
    },
}

#[derive(Subcommand)]
enum Study {
    /// Mean residual against the collocation budget for each method.
    Convergence(Common),
    /// Mean residual against the number of subdomains.
    Split(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON); relative paths inside it resolve
    /// against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
    /// Field export format: csv or vtk.
    #[arg(long, default_value = "csv")]
    format: ExportFormat,
}

struct Loaded {
    cfg: ExperimentConfig,
    base: PathBuf,
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<Loaded> {
        if let Some(n) = self.threads {
            microelast::exec::set_threads(n)?;
        }
        let text = std::fs::read_to_string(&self.config).map_err(|e| Error::io(&self.config, e))?;
        let mut cfg = ExperimentConfig::from_json(&text)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        let base = self.config.parent().map(Path::to_path_buf).unwrap_or_default();
        let out = cfg.output_dir.clone();
        ensure_dir(&out)?;
        Ok(Loaded { cfg, base, out })
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(c) => {
            let l = c.load()?;
            let out = solve(&l.cfg, &l.base)?;
            write_solve(&l.out, &out, c.format)?;
            let s = &out.summary;
            println!(
                "{} split {}x{}: {} iterations, loss {:.3e}, mean R {:.3e}, sqrt(L_W) {:.3e}",
                s.problem, s.split.0, s.split.1, s.iterations, s.final_loss, s.mean_r, s.sqrt_l_w
            );
        }
        Command::Study(study) => {
            let (c, want_split) = match &study {
                Study::Convergence(c) => (c, false),
                Study::Split(c) => (c, true),
            };
            let mut l = c.load()?;
            let keep = l.cfg.study.clone().unwrap_or_default();
            let study_cfg = l.cfg.study.get_or_insert_with(Default::default);
            if want_split {
                study_cfg.convergence = None;
                if keep.split.is_none() {
                    return Err(Error::Config("missing field `study.split`".into()));
                }
            } else {
                study_cfg.split = None;
                if keep.convergence.is_none() {
                    return Err(Error::Config("missing field `study.convergence`".into()));
                }
            }
            let problem = build_problem(&l.cfg, &l.base)?;
            let (conv, split) = run_studies(&l.cfg, &problem)?;
            for (name, result) in [("convergence.csv", conv), ("split.csv", split)] {
                if let Some(r) = result {
                    write_text(&l.out.join(name), &r.to_csv())?;
                    print!("{}", r.to_csv());
                }
            }
        }
        Command::MaterialFit(c) => {
            let l = c.load()?;
            let (grey, inclusion, matrix, pipeline, fit) = match &l.cfg.material {
                MaterialConfig::Image {
                    path,
                    inclusion,
                    matrix,
                    pipeline,
                    fit,
                } => (load_pgm(&l.base.join(path))?, inclusion, matrix, pipeline, fit),
                MaterialConfig::Fixture {
                    fixture,
                    inclusion,
                    matrix,
                    pipeline,
                    fit,
                } => (fixture.generate()?, inclusion, matrix, pipeline, fit),
                _ => return Err(Error::Config("material-fit needs an image or fixture material".into())),
            };
            let grid = preprocess(&grey, pipeline, l.cfg.length)?;
            let phases = PhaseValues {
                phase0: lame_from_engineering(*matrix)?,
                phase1: lame_from_engineering(*inclusion)?,
            };
            let f = fit_material(&grid, &phases, fit)?;
            material_snapshot(&f.network, l.cfg.length).save(&l.out.join("material.snap"))?;
            save_pgm(&l.out.join("voxels.pgm"), &f.grid)?;
            write_text(&l.out.join("material_history.csv"), &f.history.to_csv())?;
            let summary = serde_json::json!({
                "width": grid.width,
                "height": grid.height,
                "phase_fraction": grid.phase_fraction(),
                "accuracy": f.accuracy,
                "iterations": f.history.iterations(),
                "final_loss": f.history.final_loss(),
                "seed": fit.seed,
            });
            write_json(&l.out.join("material_summary.json"), &summary)?;
            println!(
                "material network: {} iterations, phase accuracy {:.4}",
                f.history.iterations(),
                f.accuracy
            );
        }
        Command::Export { common, params } => {
            let l = common.load()?;
            let problem = build_problem(&l.cfg, &l.base)?;
            let report = evaluate_snapshot(&l.cfg, &problem, &Snapshot::load(&params)?)?;
            write_report(&l.out, &report, common.format)?;
            println!(
                "mean R {:.3e}, max R {:.3e}, sqrt(L_W) {:.3e}",
                report.r_stats.mean, report.r_stats.max, report.work_norm
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MICROELAST_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
