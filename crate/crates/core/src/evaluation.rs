//! Residual fields of a trained model in physical units, their summary
//! statistics, and the point-budget and domain-split studies.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decomposition::{decompose, InterfaceOptions, Model};
use crate::elasticity::{external_work_density, internal_work_density, FieldSample, PointResidual};
use crate::geometry::Edge;
use crate::material::MaterialField;
use crate::netcore::{Point, Topology};
use crate::optimizer::{BfgsOptions, OptHistory};
use crate::sampling::{adaptive_loop, regular_grid, AdaptiveConfig};
use crate::{boundary::BvpSpec, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        if values.is_empty() {
            return Stats::default();
        }
        Stats {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Fields on an `n x n` regular grid (x outermost), residuals in physical
/// units.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub n_side: usize,
    pub points: Vec<Point>,
    pub fields: Vec<FieldSample>,
    /// N/mm^3.
    pub r_div_x: Vec<f64>,
    pub r_div_y: Vec<f64>,
    /// MPa.
    pub r_const_xx: Vec<f64>,
    pub r_const_yy: Vec<f64>,
    pub r_const_xy: Vec<f64>,
    /// Pointwise sum of the absolute residuals above.
    pub r: Vec<f64>,
    /// Strain energy density `sigma : eps / 2`.
    pub w_int: Vec<f64>,
    pub r_stats: Stats,
    /// Square root of the scaled work-balance term on this grid.
    pub work_norm: f64,
    /// `|W_int - W_ext|` in N mm.
    pub work_imbalance: f64,
}

impl ResidualReport {
    /// Channels in export order.
    pub fn channels(&self) -> Vec<(&'static str, Vec<f64>)> {
        let f = |k: usize| self.fields.iter().map(|s| s.values[k]).collect::<Vec<_>>();
        vec![
            ("u_x", f(0)),
            ("u_y", f(1)),
            ("sigma_xx", f(2)),
            ("sigma_yy", f(3)),
            ("sigma_xy", f(4)),
            ("W_int", self.w_int.clone()),
            ("R", self.r.clone()),
            ("R_div_x", self.r_div_x.clone()),
            ("R_div_y", self.r_div_y.clone()),
            ("R_const_xx", self.r_const_xx.clone()),
            ("R_const_yy", self.r_const_yy.clone()),
            ("R_const_xy", self.r_const_xy.clone()),
        ]
    }

    /// Point of largest `R`; the first one on ties.
    pub fn argmax_r(&self) -> Point {
        let mut best = 0;
        for (i, &v) in self.r.iter().enumerate() {
            if v > self.r[best] {
                best = i;
            }
        }
        self.points[best]
    }

    pub fn field_stats(&self, k: usize) -> Stats {
        Stats::of(&self.fields.iter().map(|s| s.values[k]).collect::<Vec<_>>())
    }
}

/// Evaluates `model` on a regular grid of `n_side^2` points.
pub fn residual_report(
    model: &Model,
    params: &[f64],
    material: &MaterialField,
    n_side: usize,
) -> Result<ResidualReport> {
    let grid = regular_grid(n_side, model.bvp.length)?;
    let fields = model.predict(params, &grid.interior)?;
    let mats = material.query_many(&grid.interior)?;
    let loaded = model.predict(params, &grid.loaded)?;
    report_from_fields(&model.bvp, n_side, grid.interior, fields, &mats, &loaded)
}

/// Builds a report from already evaluated fields; `loaded` are samples on
/// the loaded edge.
pub fn report_from_fields(
    bvp: &BvpSpec,
    n_side: usize,
    points: Vec<Point>,
    fields: Vec<FieldSample>,
    materials: &[crate::elasticity::Lame],
    loaded: &[FieldSample],
) -> Result<ResidualReport> {
    if fields.is_empty() || loaded.is_empty() {
        return Err(Error::EmptySet("evaluation grid"));
    }
    let n = fields.len();
    let mut rep = ResidualReport {
        n_side,
        points,
        r_div_x: Vec::with_capacity(n),
        r_div_y: Vec::with_capacity(n),
        r_const_xx: Vec::with_capacity(n),
        r_const_yy: Vec::with_capacity(n),
        r_const_xy: Vec::with_capacity(n),
        r: Vec::with_capacity(n),
        w_int: Vec::with_capacity(n),
        r_stats: Stats::default(),
        work_norm: 0.0,
        work_imbalance: 0.0,
        fields: Vec::new(),
    };
    for (s, &m) in fields.iter().zip(materials) {
        let pr = PointResidual::at(s, m)?;
        rep.r_div_x.push(pr.r_div[0]);
        rep.r_div_y.push(pr.r_div[1]);
        rep.r_const_xx.push(pr.r_const[0]);
        rep.r_const_yy.push(pr.r_const[1]);
        rep.r_const_xy.push(pr.r_const[2]);
        rep.r.push(pr.abs_sum());
        rep.w_int.push(0.5 * pr.w_int);
    }
    rep.r_stats = Stats::of(&rep.r);
    let l = bvp.length;
    let wi: f64 = fields.iter().map(internal_work_density).sum::<f64>() * l * l / (2.0 * n as f64);
    let we: f64 = loaded.iter().map(external_work_density).sum::<f64>() * bvp.domain().edge_length(Edge::Right)
        / (2.0 * loaded.len() as f64);
    rep.work_imbalance = (wi - we).abs();
    let w_c = bvp.scales.sigma_c * bvp.scales.u_c * bvp.scales.x_c;
    rep.work_norm = rep.work_imbalance / w_c;
    rep.fields = fields;
    Ok(rep)
}

/// Training variants compared by the point-budget study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PINN")]
    Pinn,
    #[serde(rename = "CPINN")]
    Cpinn,
    #[serde(rename = "AdaPINN")]
    AdaPinn,
    #[serde(rename = "AdaCPINN")]
    AdaCpinn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pinn => "PINN",
            Method::Cpinn => "CPINN",
            Method::AdaPinn => "AdaPINN",
            Method::AdaCpinn => "AdaCPINN",
        }
    }

    fn split(self, cpinn_split: (usize, usize)) -> (usize, usize) {
        match self {
            Method::Pinn | Method::AdaPinn => (1, 1),
            Method::Cpinn | Method::AdaCpinn => cpinn_split,
        }
    }

    fn adaptive(self) -> bool {
        matches!(self, Method::AdaPinn | Method::AdaCpinn)
    }
}

/// Settings shared by a family of training runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    /// Hidden layers of every subnet.
    pub n_layers: usize,
    /// Total parameter budget split across subnets.
    pub param_budget: usize,
    #[serde(default = "default_activation")]
    pub activation: crate::netcore::Activation,
    pub optimizer: BfgsOptions,
    #[serde(default)]
    pub interface: InterfaceOptions,
    pub eval_side: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_activation() -> crate::netcore::Activation {
    crate::netcore::Activation::Swish
}

impl RunSettings {
    /// Subnet topology for `copies` subnets under the parameter budget.
    pub fn topology(&self, copies: usize) -> Result<Topology> {
        let proto = Topology::new(5, self.n_layers, 1, self.activation)?;
        let units = proto.units_for_budget(self.param_budget, copies);
        Topology::new(5, self.n_layers, units, self.activation)
    }
}

/// Adaptive-sampling parameters of the point-budget study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveStudySettings {
    pub gamma: f64,
    /// Candidates per adaptive point.
    pub rand_factor: usize,
    pub n_iter: usize,
    pub alpha: f64,
    /// Share of the iteration budget spent on the fine grid.
    pub fine_share: f64,
}

/// One training run of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub method: String,
    pub n_d: usize,
    pub split: (usize, usize),
    pub params: usize,
    pub iterations: usize,
    pub final_loss: f64,
    pub mean_r: f64,
    pub max_r: f64,
    pub min_r: f64,
    pub work_norm: f64,
    pub seed: u64,
    /// Failure message when the run did not complete.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
}

impl StudyResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "method,n_d,split_x,split_y,params,iterations,final_loss,mean_r,max_r,min_r,work_norm,seed,error\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.n_d,
                r.split.0,
                r.split.1,
                r.params,
                r.iterations,
                crate::io::fmt_sci(r.final_loss),
                crate::io::fmt_sci(r.mean_r),
                crate::io::fmt_sci(r.max_r),
                crate::io::fmt_sci(r.min_r),
                crate::io::fmt_sci(r.work_norm),
                r.seed,
                r.error.as_deref().unwrap_or("")
            );
        }
        s
    }

    pub fn row(&self, method: &str, n_d: usize, split: (usize, usize)) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.n_d == n_d && r.split == split)
    }
}

/// Trained parameters together with their model and report.
pub struct RunOutcome {
    pub model: Model,
    pub params: Vec<f64>,
    pub report: ResidualReport,
    /// Optimizer records of all training phases, renumbered consecutively.
    pub history: OptHistory,
}

impl RunOutcome {
    pub fn iterations(&self) -> usize {
        self.history.iterations()
    }

    pub fn final_loss(&self) -> f64 {
        self.history.final_loss()
    }
}

/// Everything that defines one training run besides the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub topology: Topology,
    pub split: (usize, usize),
    pub interface: InterfaceOptions,
    pub optimizer: BfgsOptions,
    pub n_side: usize,
    pub adaptive: Option<AdaptiveStudySettings>,
    pub eval_side: usize,
    pub seed: u64,
}

fn chain(mut a: OptHistory, b: OptHistory) -> OptHistory {
    let base = a.records.last().map(|r| r.iter + 1).unwrap_or(0);
    a.records.extend(b.records.into_iter().skip(1).map(|mut r| {
        r.iter += base - 1;
        r
    }));
    a.termination = b.termination;
    a.evaluations += b.evaluations;
    a
}

/// Trains one model on `n_side^2` regular points, or the adaptive variant
/// with the same total point budget, and evaluates it.
pub fn train(bvp: &BvpSpec, material: &MaterialField, spec: &TrainSpec) -> Result<RunOutcome> {
    let (nx, ny) = spec.split;
    let model = Model::new(*bvp, decompose(bvp.length, nx, ny)?, spec.topology, spec.interface)?;
    let p0 = model.init_params(spec.seed);
    let (params, history) = match &spec.adaptive {
        None => {
            let sets = model.regular_sets(spec.n_side)?;
            let per_seg = ((spec.n_side as f64 / nx as f64).round() as usize).max(1);
            let data = model.prepare(&sets, &model.interface_points(per_seg), material)?;
            model.train(p0, &data, &spec.optimizer)?
        }
        Some(a) => {
            let (n_reg, n_ada, n_rand) = AdaptiveConfig::for_budget(spec.n_side * spec.n_side, a.gamma, a.rand_factor)?;
            let total = spec.optimizer.max_iters;
            let n_fine = ((total as f64 * a.fine_share).round() as usize).min(total);
            let cycle_iters = (total - n_fine).checked_div(a.n_iter).unwrap_or(0);
            let cfg = AdaptiveConfig {
                n_fine,
                n_iter: a.n_iter,
                n_reg,
                n_rand,
                n_ada,
                gamma: n_reg as f64 / n_ada as f64,
                alpha: a.alpha,
                cycle_iters,
                seed: spec.seed,
            };
            let (p, h) = adaptive_loop(&model, material, p0, spec.n_side, &cfg, &spec.optimizer)?;
            let history = h.cycles.into_iter().fold(h.fine, |acc, c| chain(acc, c.history));
            (p, history)
        }
    };
    let report = residual_report(&model, &params, material, spec.eval_side)?;
    Ok(RunOutcome {
        model,
        params,
        report,
        history,
    })
}

/// [`train`] with the subnet width chosen from the parameter budget.
pub fn run_one(
    bvp: &BvpSpec,
    material: &MaterialField,
    settings: &RunSettings,
    split: (usize, usize),
    n_side: usize,
    adaptive: Option<&AdaptiveStudySettings>,
) -> Result<RunOutcome> {
    let spec = TrainSpec {
        topology: settings.topology(split.0 * split.1)?,
        split,
        interface: settings.interface,
        optimizer: settings.optimizer,
        n_side,
        adaptive: adaptive.copied(),
        eval_side: settings.eval_side,
        seed: settings.seed,
    };
    train(bvp, material, &spec)
}

fn row_of(method: &str, n_d: usize, split: (usize, usize), seed: u64, out: Result<RunOutcome>) -> StudyRow {
    match out {
        Ok(o) => StudyRow {
            method: method.to_string(),
            n_d,
            split,
            params: o.model.param_count(),
            iterations: o.iterations(),
            final_loss: o.final_loss(),
            mean_r: o.report.r_stats.mean,
            max_r: o.report.r_stats.max,
            min_r: o.report.r_stats.min,
            work_norm: o.report.work_norm,
            seed,
            error: None,
        },
        Err(e) => {
            log::warn!("{method} n_d={n_d} split={split:?} failed: {e}");
            StudyRow {
                method: method.to_string(),
                n_d,
                split,
                params: 0,
                iterations: 0,
                final_loss: f64::NAN,
                mean_r: f64::NAN,
                max_r: f64::NAN,
                min_r: f64::NAN,
                work_norm: f64::NAN,
                seed,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Point-budget study: every method at every grid side; a failed run is
/// recorded and the study continues.
pub fn convergence_study(
    bvp: &BvpSpec,
    material: &MaterialField,
    settings: &RunSettings,
    methods: &[Method],
    sides: &[usize],
    cpinn_split: (usize, usize),
    adaptive: &AdaptiveStudySettings,
) -> StudyResult {
    let mut rows = Vec::new();
    for &m in methods {
        for &n in sides {
            let split = m.split(cpinn_split);
            log::info!("{} n_d={}^2", m.name(), n);
            let out = run_one(bvp, material, settings, split, n, m.adaptive().then_some(adaptive));
            rows.push(row_of(m.name(), n * n, split, settings.seed, out));
        }
    }
    StudyResult { rows }
}

/// Domain-split study at a fixed point budget.
pub fn split_study(
    bvp: &BvpSpec,
    material: &MaterialField,
    settings: &RunSettings,
    splits: &[(usize, usize)],
    n_side: usize,
) -> StudyResult {
    let rows = splits
        .iter()
        .map(|&s| {
            log::info!("split {}x{}", s.0, s.1);
            let method = if s == (1, 1) { "PINN" } else { "CPINN" };
            row_of(
                method,
                n_side * n_side,
                s,
                settings.seed,
                run_one(bvp, material, settings, s, n_side, None),
            )
        })
        .collect();
    StudyResult { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let s = Stats::of(&[1.0, -2.0, 4.0]);
        assert_eq!((s.mean, s.max, s.min), (1.0, 4.0, -2.0));
        assert_eq!(Stats::of(&[]), Stats::default());
    }

    #[test]
    fn csv_has_one_row_per_run() {
        let r = StudyResult {
            rows: vec![StudyRow {
                method: "PINN".into(),
                n_d: 16,
                split: (1, 1),
                params: 10,
                iterations: 3,
                final_loss: 0.5,
                mean_r: 0.25,
                max_r: 1.0,
                min_r: 0.0,
                work_norm: 0.1,
                seed: 7,
                error: None,
            }],
        };
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("PINN,16,1,1,10,3,5.000000000e-01,"));
    }
}
