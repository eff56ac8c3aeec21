//! Lamé-constant fields: homogeneous, a smoothed circular inclusion, and a
//! bounded network fitted to a two-phase voxel image.

use serde::{Deserialize, Serialize};

use crate::elasticity::Lame;
use crate::geometry::{Rect, GEOM_TOL};
use crate::netcore::{init_params, InputMap, JacobianBatch, Network, Point, Topology};
use crate::optimizer::{minimize, BfgsOptions, OptHistory};
use crate::{Error, Result};

/// Young's modulus (MPa) and Poisson's ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineeringConstants {
    pub e: f64,
    pub nu: f64,
}

impl EngineeringConstants {
    pub fn new(e: f64, nu: f64) -> Result<Self> {
        let c = EngineeringConstants { e, nu };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e > 0.0 && self.nu > -1.0 && self.nu < 0.5) {
            return Err(Error::InvalidEngineeringConstants { e: self.e, nu: self.nu });
        }
        Ok(())
    }
}

pub fn lame_from_engineering(ec: EngineeringConstants) -> Result<Lame> {
    ec.validate()?;
    let (e, nu) = (ec.e, ec.nu);
    Lame::new(e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
}

/// `c1 (c2 + tanh((radius - |x|) / delta)) + c3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TanhInclusionSpec {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub delta: f64,
    pub radius: f64,
}

impl TanhInclusionSpec {
    /// Constants with `c2 = 0` such that the field tends to `center` inside
    /// the inclusion and to `far` outside.
    pub fn calibrated(center: f64, far: f64, delta: f64, radius: f64) -> Result<Self> {
        let s = TanhInclusionSpec {
            c1: 0.5 * (center - far),
            c2: 0.0,
            c3: 0.5 * (center + far),
            delta,
            radius,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.radius >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tanh inclusion needs delta > 0 and radius >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: Point) -> f64 {
        let r = x[0].hypot(x[1]);
        self.c1 * (self.c2 + ((self.radius - r) / self.delta).tanh()) + self.c3
    }

    /// Analytic spatial gradient; zero at the centre.
    pub fn gradient(&self, x: Point) -> [f64; 2] {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let t = ((self.radius - r) / self.delta).tanh();
        let dr = -self.c1 * (1.0 - t * t) / self.delta;
        [dr * x[0] / r, dr * x[1] / r]
    }

    /// Infimum over the plane (the limit far from the inclusion).
    pub fn lower_bound(&self) -> f64 {
        self.c1 * self.c2 + self.c3 - self.c1.abs()
    }
}

/// Tanh fields for both Lamé constants sharing radius and steepness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TanhInclusion {
    pub lambda: TanhInclusionSpec,
    pub mu: TanhInclusionSpec,
}

impl TanhInclusion {
    pub fn from_phases(inclusion: Lame, matrix: Lame, delta: f64, radius: f64) -> Result<Self> {
        Ok(TanhInclusion {
            lambda: TanhInclusionSpec::calibrated(inclusion.lambda, matrix.lambda, delta, radius)?,
            mu: TanhInclusionSpec::calibrated(inclusion.mu, matrix.mu, delta, radius)?,
        })
    }

    pub fn at(&self, x: Point) -> Lame {
        Lame {
            lambda: self.lambda.value(x),
            mu: self.mu.value(x),
        }
    }
}

/// Grey values of a voxel image in `[0, 1]`, row-major with the top row
/// first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Edge length of one voxel (mm).
    pub pixel_size: f64,
}

impl VoxelGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>, pixel_size: f64) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "voxel grid {width}x{height} with {} values",
                values.len()
            )));
        }
        Ok(VoxelGrid {
            width,
            height,
            values,
            pixel_size,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }

    /// Centre of voxel `(i, j)` (column `i`, row `j` from the top) in the
    /// zero-centred cell covered by the image.
    pub fn voxel_center(&self, i: usize, j: usize) -> Point {
        let w = self.width as f64 * self.pixel_size;
        let h = self.height as f64 * self.pixel_size;
        [
            -0.5 * w + (i as f64 + 0.5) * self.pixel_size,
            0.5 * h - (j as f64 + 0.5) * self.pixel_size,
        ]
    }

    /// Voxel containing `x`, with points on voxel faces assigned to the
    /// voxel on the lower-index side.
    pub fn voxel_at(&self, x: Point) -> (usize, usize) {
        let w = self.width as f64 * self.pixel_size;
        let h = self.height as f64 * self.pixel_size;
        let fi = (x[0] + 0.5 * w) / self.pixel_size;
        let fj = (0.5 * h - x[1]) / self.pixel_size;
        let i = (fi.floor().max(0.0) as usize).min(self.width - 1);
        let j = (fj.floor().max(0.0) as usize).min(self.height - 1);
        (i, j)
    }

    /// Fails unless every value is exactly 0 or 1.
    pub fn check_binary(&self) -> Result<()> {
        match self.values.iter().position(|&v| v != 0.0 && v != 1.0) {
            Some(index) => Err(Error::NonBinaryGrid {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }

    pub fn phase_fraction(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Lamé constants of the two phases of a binary image: voxels equal to 0
/// take `phase0`, voxels equal to 1 take `phase1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseValues {
    pub phase0: Lame,
    pub phase1: Lame,
}

impl PhaseValues {
    pub fn of(&self, v: f64) -> Lame {
        if v >= 0.5 {
            self.phase1
        } else {
            self.phase0
        }
    }

    pub fn bounds(&self) -> MaterialBounds {
        MaterialBounds {
            lambda_min: self.phase0.lambda.min(self.phase1.lambda),
            lambda_max: self.phase0.lambda.max(self.phase1.lambda),
            mu_min: self.phase0.mu.min(self.phase1.mu),
            mu_max: self.phase0.mu.max(self.phase1.mu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub mu_min: f64,
    pub mu_max: f64,
}

/// Network with two outputs squashed into `[min, max]` by
/// `(tanh(z) + 1) (max - min) / 2 + min`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialNetwork {
    network: Network,
    params: Vec<f64>,
    bounds: MaterialBounds,
}

impl MaterialNetwork {
    pub fn new(topology: Topology, length: f64, params: Vec<f64>, bounds: MaterialBounds) -> Result<Self> {
        if topology.output_dim != 2 {
            return Err(Error::InvalidTopology(format!(
                "material network needs 2 outputs, got {}",
                topology.output_dim
            )));
        }
        if topology.param_count() != params.len() {
            return Err(Error::ParamLength {
                expected: topology.param_count(),
                got: params.len(),
            });
        }
        let h = 0.5 * length;
        let network = Network::with_input_map(topology, InputMap::new([0.0, 0.0], [h, h]))?;
        Ok(MaterialNetwork {
            network,
            params,
            bounds,
        })
    }

    pub fn topology(&self) -> &Topology {
        self.network.topology()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn bounds(&self) -> MaterialBounds {
        self.bounds
    }

    fn squash(z: f64, lo: f64, hi: f64) -> (f64, f64) {
        let t = z.tanh();
        ((t + 1.0) * 0.5 * (hi - lo) + lo, (1.0 - t * t) * 0.5 * (hi - lo))
    }

    fn map_outputs(bounds: &MaterialBounds, raw: &[f64]) -> (Lame, [f64; 2]) {
        let (l, dl) = Self::squash(raw[0], bounds.lambda_min, bounds.lambda_max);
        let (m, dm) = Self::squash(raw[1], bounds.mu_min, bounds.mu_max);
        (Lame { lambda: l, mu: m }, [dl, dm])
    }

    pub fn evaluate(&self, points: &[Point]) -> Result<Vec<Lame>> {
        Self::evaluate_with(&self.network, &self.params, &self.bounds, points)
    }

    fn evaluate_with(
        network: &Network,
        params: &[f64],
        bounds: &MaterialBounds,
        points: &[Point],
    ) -> Result<Vec<Lame>> {
        let batch = network.evaluate_batch(params, points, false)?;
        Ok((0..points.len())
            .map(|i| Self::map_outputs(bounds, batch.values(i)).0)
            .collect())
    }
}

/// Options of [`train_material_network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFitOptions {
    pub topology: Topology,
    #[serde(default)]
    pub optimizer: BfgsOptions,
    #[serde(default)]
    pub seed: u64,
}

/// Fits a bounded material network to the phase values at every voxel
/// centre of a binary grid by least squares on targets divided by the
/// largest phase values.
pub fn train_material_network(
    grid: &VoxelGrid,
    phases: &PhaseValues,
    opts: &MaterialFitOptions,
) -> Result<(MaterialNetwork, OptHistory)> {
    grid.check_binary()?;
    opts.optimizer.validate()?;
    let length = grid.width as f64 * grid.pixel_size;
    let bounds = phases.bounds();
    let proto = MaterialNetwork::new(opts.topology, length, vec![0.0; opts.topology.param_count()], bounds)?;
    let network = proto.network;
    let mut points = Vec::with_capacity(grid.values.len());
    let mut targets = Vec::with_capacity(grid.values.len());
    for j in 0..grid.height {
        for i in 0..grid.width {
            points.push(grid.voxel_center(i, j));
            targets.push(phases.of(grid.get(i, j)));
        }
    }
    let lc = bounds.lambda_max.max(f64::MIN_POSITIVE);
    let mc = bounds.mu_max.max(f64::MIN_POSITIVE);
    let inv_n = 1.0 / points.len() as f64;
    let objective = |p: &[f64]| {
        network.loss_gradient(p, &points, false, |batch| {
            let mut adj = JacobianBatch::zeros(batch.len(), 2, false);
            let mut loss = 0.0;
            for (i, t) in targets.iter().enumerate() {
                let (v, d) = MaterialNetwork::map_outputs(&bounds, batch.values(i));
                let rl = (v.lambda - t.lambda) / lc;
                let rm = (v.mu - t.mu) / mc;
                loss += (rl * rl + rm * rm) * inv_n;
                let a = adj.values_mut(i);
                a[0] = 2.0 * rl * inv_n * d[0] / lc;
                a[1] = 2.0 * rm * inv_n * d[1] / mc;
            }
            Ok((loss, adj))
        })
    };
    let x0 = init_params(&opts.topology, opts.seed).into_inner();
    let (params, history) = minimize(objective, x0, &opts.optimizer)?;
    Ok((
        MaterialNetwork {
            network,
            params,
            bounds,
        },
        history,
    ))
}

/// Share of voxel centres where the network's nearest phase (by scaled
/// distance) equals the image phase.
pub fn phase_accuracy(net: &MaterialNetwork, grid: &VoxelGrid, phases: &PhaseValues) -> Result<f64> {
    let mut points = Vec::with_capacity(grid.values.len());
    for j in 0..grid.height {
        for i in 0..grid.width {
            points.push(grid.voxel_center(i, j));
        }
    }
    let pred = net.evaluate(&points)?;
    let b = phases.bounds();
    let lc = b.lambda_max;
    let mc = b.mu_max;
    let dist = |a: &Lame, t: &Lame| ((a.lambda - t.lambda) / lc).powi(2) + ((a.mu - t.mu) / mc).powi(2);
    let hits = pred
        .iter()
        .zip(&grid.values)
        .filter(|(p, &v)| {
            let phase1 = dist(p, &phases.phase1) < dist(p, &phases.phase0);
            phase1 == (v >= 0.5)
        })
        .count();
    Ok(hits as f64 / points.len() as f64)
}

/// Source of the Lamé fields.
#[derive(Debug, Clone, PartialEq)]
pub enum MaterialModel {
    Constant(Lame),
    Tanh(TanhInclusion),
    Network(MaterialNetwork),
}

/// A material model bound to the cell it is defined on.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    domain: Rect,
    model: MaterialModel,
}

impl MaterialField {
    pub fn new(domain: Rect, model: MaterialModel) -> Result<Self> {
        if let MaterialModel::Constant(l) = &model {
            l.validate()?;
        }
        Ok(MaterialField { domain, model })
    }

    pub fn constant(length: f64, lame: Lame) -> Result<Self> {
        Self::new(Rect::centered(length), MaterialModel::Constant(lame))
    }

    pub fn model(&self) -> &MaterialModel {
        &self.model
    }

    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    fn clamp(&self, x: Point) -> Result<Point> {
        let d = &self.domain;
        if !x[0].is_finite() || !x[1].is_finite() || !d.contains(x, GEOM_TOL) {
            return Err(Error::OutsideDomain(x[0], x[1]));
        }
        Ok([x[0].clamp(d.x0, d.x1), x[1].clamp(d.y0, d.y1)])
    }

    pub fn query(&self, x: Point) -> Result<Lame> {
        Ok(self.query_many(&[x])?[0])
    }

    /// Lamé constants at every point; fails on points outside the cell or
    /// on non-physical values.
    pub fn query_many(&self, points: &[Point]) -> Result<Vec<Lame>> {
        let clamped = points.iter().map(|&p| self.clamp(p)).collect::<Result<Vec<_>>>()?;
        let out = match &self.model {
            MaterialModel::Constant(l) => vec![*l; points.len()],
            MaterialModel::Tanh(t) => clamped.iter().map(|&p| t.at(p)).collect(),
            MaterialModel::Network(n) => n.evaluate(&clamped)?,
        };
        for l in &out {
            l.validate()?;
        }
        Ok(out)
    }

    /// Largest Lamé constants the field can produce.
    pub fn maxima(&self) -> (f64, f64) {
        match &self.model {
            MaterialModel::Constant(l) => (l.lambda, l.mu),
            MaterialModel::Tanh(t) => (
                t.lambda.c1 * t.lambda.c2 + t.lambda.c3 + t.lambda.c1.abs(),
                t.mu.c1 * t.mu.c2 + t.mu.c3 + t.mu.c1.abs(),
            ),
            MaterialModel::Network(n) => (n.bounds.lambda_max, n.bounds.mu_max),
        }
    }
}
