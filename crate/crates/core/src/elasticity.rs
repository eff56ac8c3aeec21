//! Pointwise residuals of the static, body-force-free linear elastic
//! boundary value problem and the assembled collocation loss.
//!
//! All residuals are formed from physical quantities and then divided by
//! characteristic scales, so scaling changes the relative weight of the
//! loss terms but never their zeros.

use serde::{Deserialize, Serialize};

use crate::netcore::Point;
use crate::{Error, Result};

/// Index of each field in a [`FieldSample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Ux = 0,
    Uy = 1,
    Sxx = 2,
    Syy = 3,
    Sxy = 4,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::Ux, Field::Uy, Field::Sxx, Field::Syy, Field::Sxy];

    pub fn name(self) -> &'static str {
        match self {
            Field::Ux => "u_x",
            Field::Uy => "u_y",
            Field::Sxx => "sigma_xx",
            Field::Syy => "sigma_yy",
            Field::Sxy => "sigma_xy",
        }
    }
}

const UX: usize = 0;
const UY: usize = 1;
const SXX: usize = 2;
const SYY: usize = 3;
const SXY: usize = 4;

/// Displacements (mm), stresses (MPa) and their spatial derivatives at a
/// point. The same layout carries loss adjoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub x: Point,
    pub values: [f64; 5],
    /// `grads[k] = [d/dx, d/dy]` of field `k`.
    pub grads: [[f64; 2]; 5],
}

impl FieldSample {
    pub fn zero(x: Point) -> Self {
        FieldSample {
            x,
            values: [0.0; 5],
            grads: [[0.0; 2]; 5],
        }
    }

    pub fn value(&self, f: Field) -> f64 {
        self.values[f as usize]
    }

    pub fn grad(&self, f: Field) -> [f64; 2] {
        self.grads[f as usize]
    }
}

/// Lamé constants (MPa).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lame {
    pub lambda: f64,
    pub mu: f64,
}

impl Lame {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        let l = Lame { lambda, mu };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.mu > 0.0 && self.lambda.is_finite() && self.mu.is_finite()) {
            return Err(Error::UnphysicalMaterial {
                lambda: self.lambda,
                mu: self.mu,
            });
        }
        Ok(())
    }
}

/// Characteristic magnitudes dividing each quantity before it enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSet {
    pub x_c: f64,
    pub sigma_c: f64,
    pub u_c: f64,
    pub lambda_c: f64,
    pub mu_c: f64,
}

impl ScaleSet {
    /// No scaling at all.
    pub const UNIT: ScaleSet = ScaleSet {
        x_c: 1.0,
        sigma_c: 1.0,
        u_c: 1.0,
        lambda_c: 1.0,
        mu_c: 1.0,
    };

    /// `x_c = L/2`, `sigma_c = sigma_bar`, `u_c = sigma_bar L / E_min` and the
    /// largest Lamé constants over all phases.
    pub fn for_problem(length: f64, sigma_bar: f64, e_min: f64, lambda_max: f64, mu_max: f64) -> Result<Self> {
        let s = ScaleSet {
            x_c: 0.5 * length,
            sigma_c: sigma_bar.abs(),
            u_c: sigma_bar.abs() * length / e_min,
            lambda_c: lambda_max,
            mu_c: mu_max,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.x_c, self.sigma_c, self.u_c, self.lambda_c, self.mu_c];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "scales must be strictly positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Scale of each network output, in [`Field`] order.
    pub fn output_scales(&self) -> [f64; 5] {
        [self.u_c, self.u_c, self.sigma_c, self.sigma_c, self.sigma_c]
    }

    fn div_scale(&self) -> f64 {
        self.sigma_c / self.x_c
    }

    fn work_scale(&self) -> f64 {
        self.sigma_c * self.u_c * self.x_c
    }
}

/// `[d_x s_xx + d_y s_xy, d_x s_xy + d_y s_yy]` (N/mm^3).
pub fn residual_balance(s: &FieldSample) -> [f64; 2] {
    let g = &s.grads;
    [g[SXX][0] + g[SXY][1], g[SXY][0] + g[SYY][1]]
}

/// Constitutive residuals `[r_xx, r_yy, r_xy]` (MPa) of the isotropic law
/// applied to the in-plane strain.
pub fn residual_constitutive(s: &FieldSample, lame: Lame) -> Result<[f64; 3]> {
    lame.validate()?;
    Ok(constitutive_unchecked(s, lame))
}

#[inline]
fn constitutive_unchecked(s: &FieldSample, lame: Lame) -> [f64; 3] {
    let g = &s.grads;
    let v = &s.values;
    let exx = g[UX][0];
    let eyy = g[UY][1];
    let gxy = g[UX][1] + g[UY][0];
    let tr = exx + eyy;
    [
        lame.lambda * tr + 2.0 * lame.mu * exx - v[SXX],
        lame.lambda * tr + 2.0 * lame.mu * eyy - v[SYY],
        lame.mu * gxy - v[SXY],
    ]
}

/// `sigma : grad u` without the factor one half.
pub fn internal_work_density(s: &FieldSample) -> f64 {
    let g = &s.grads;
    let v = &s.values;
    v[SXX] * g[UX][0] + v[SYY] * g[UY][1] + v[SXY] * (g[UX][1] + g[UY][0])
}

/// Traction times displacement on an edge with outward normal `+x`.
pub fn external_work_density(s: &FieldSample) -> f64 {
    let v = &s.values;
    v[SXX] * v[UX] + v[SXY] * v[UY]
}

/// Balance, constitutive and work residuals at one point, physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResidual {
    pub r_div: [f64; 2],
    pub r_const: [f64; 3],
    pub w_int: f64,
}

impl PointResidual {
    pub fn at(s: &FieldSample, lame: Lame) -> Result<Self> {
        Ok(PointResidual {
            r_div: residual_balance(s),
            r_const: residual_constitutive(s, lame)?,
            w_int: internal_work_density(s),
        })
    }

    /// Sum of absolute balance and constitutive residuals.
    pub fn abs_sum(&self) -> f64 {
        self.r_div.iter().chain(&self.r_const).map(|v| v.abs()).sum()
    }
}

/// Quadrature weights of the work balance: interior points approximate
/// `1/2 * integral over the cell`, boundary points `1/2 * integral over the
/// loaded edge`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkQuadrature {
    pub interior_weight: f64,
    pub boundary_weight: f64,
}

impl WorkQuadrature {
    /// `L^2 / (2 n_d)` per interior point and `L / (2 n_b)` per boundary
    /// point; for `L = 2` the latter is `1 / n_b`.
    pub fn uniform(area: f64, n_interior: usize, edge_length: f64, n_boundary: usize) -> Self {
        WorkQuadrature {
            interior_weight: area / (2.0 * n_interior.max(1) as f64),
            boundary_weight: edge_length / (2.0 * n_boundary.max(1) as f64),
        }
    }
}

/// Signed work imbalance `W_int - W_ext` (N mm).
pub fn work_imbalance(interior: &[FieldSample], boundary: &[FieldSample], quad: WorkQuadrature) -> f64 {
    let wi: f64 = interior.iter().map(internal_work_density).sum();
    let we: f64 = boundary.iter().map(external_work_density).sum();
    quad.interior_weight * wi - quad.boundary_weight * we
}

/// Unscaled squared work imbalance over the unit cell of side `length`.
pub fn work_balance_loss(interior: &[FieldSample], boundary: &[FieldSample], length: f64) -> Result<f64> {
    if interior.is_empty() {
        return Err(Error::EmptySet("interior work-balance points"));
    }
    if boundary.is_empty() {
        return Err(Error::EmptySet("loaded-edge work-balance points"));
    }
    let quad = WorkQuadrature::uniform(length * length, interior.len(), length, boundary.len());
    Ok(work_imbalance(interior, boundary, quad).powi(2))
}

/// Loss terms, each already scaled.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_div_x: f64,
    pub l_div_y: f64,
    pub l_const_xx: f64,
    pub l_const_yy: f64,
    pub l_const_xy: f64,
    pub l_work: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_terms(local: [f64; 5], l_work: f64) -> Self {
        LossBreakdown {
            l_div_x: local[0],
            l_div_y: local[1],
            l_const_xx: local[2],
            l_const_yy: local[3],
            l_const_xy: local[4],
            l_work,
            total: local.iter().sum::<f64>() + l_work,
        }
    }

    pub fn add(&self, other: &LossBreakdown) -> LossBreakdown {
        LossBreakdown::from_terms(
            [
                self.l_div_x + other.l_div_x,
                self.l_div_y + other.l_div_y,
                self.l_const_xx + other.l_const_xx,
                self.l_const_yy + other.l_const_yy,
                self.l_const_xy + other.l_const_xy,
            ],
            self.l_work + other.l_work,
        )
    }
}

/// The collocation loss: mean squared scaled residuals over the interior
/// points plus the squared, scaled global work imbalance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinnLoss {
    pub scales: ScaleSet,
}

impl PinnLoss {
    pub fn new(scales: ScaleSet) -> Result<Self> {
        scales.validate()?;
        Ok(PinnLoss { scales })
    }

    /// Scaled residuals `[div_x, div_y, const_xx, const_yy, const_xy]`.
    pub fn scaled_residuals(&self, s: &FieldSample, lame: Lame) -> [f64; 5] {
        let d = residual_balance(s);
        let c = constitutive_unchecked(s, lame);
        let kd = 1.0 / self.scales.div_scale();
        let kc = 1.0 / self.scales.sigma_c;
        [d[0] * kd, d[1] * kd, c[0] * kc, c[1] * kc, c[2] * kc]
    }

    /// Per-point loss with the work balance left out; used to rank
    /// candidate collocation points.
    pub fn pointwise(&self, s: &FieldSample, lame: Lame) -> f64 {
        self.scaled_residuals(s, lame).iter().map(|r| r * r).sum()
    }

    /// Mean squared scaled residuals. When `adjoint` is given, the partial
    /// derivatives of `weight * sum(terms)` are added to it.
    pub fn local_terms(
        &self,
        samples: &[FieldSample],
        materials: &[Lame],
        weight: f64,
        mut adjoint: Option<&mut [FieldSample]>,
    ) -> Result<[f64; 5]> {
        if samples.is_empty() {
            return Err(Error::EmptySet("interior collocation points"));
        }
        if materials.len() != samples.len() {
            return Err(Error::InvalidArgument(format!(
                "{} material values for {} points",
                materials.len(),
                samples.len()
            )));
        }
        for m in materials {
            m.validate()?;
        }
        let inv_n = 1.0 / samples.len() as f64;
        let kd = 1.0 / self.scales.div_scale();
        let kc = 1.0 / self.scales.sigma_c;
        let mut terms = [0.0; 5];
        for (i, (s, &lame)) in samples.iter().zip(materials).enumerate() {
            let r = self.scaled_residuals(s, lame);
            for k in 0..5 {
                terms[k] += r[k] * r[k] * inv_n;
            }
            if let Some(adj) = adjoint.as_deref_mut() {
                let a = &mut adj[i];
                let c: Vec<f64> = r.iter().map(|v| 2.0 * weight * inv_n * v).collect();
                // balance
                a.grads[SXX][0] += c[0] * kd;
                a.grads[SXY][1] += c[0] * kd;
                a.grads[SXY][0] += c[1] * kd;
                a.grads[SYY][1] += c[1] * kd;
                // constitutive
                let (l, m2) = (lame.lambda, 2.0 * lame.mu);
                a.grads[UX][0] += (c[2] * (l + m2) + c[3] * l) * kc;
                a.grads[UY][1] += (c[2] * l + c[3] * (l + m2)) * kc;
                a.values[SXX] -= c[2] * kc;
                a.values[SYY] -= c[3] * kc;
                a.grads[UX][1] += c[4] * lame.mu * kc;
                a.grads[UY][0] += c[4] * lame.mu * kc;
                a.values[SXY] -= c[4] * kc;
            }
        }
        Ok(terms)
    }

    /// Scaled squared work imbalance. `imbalance` is `W_int - W_ext` as
    /// returned by [`work_imbalance`].
    pub fn work_term(&self, imbalance: f64) -> f64 {
        (imbalance / self.scales.work_scale()).powi(2)
    }

    /// Adds `weight * d(work_term)/d(sample)` for the given imbalance.
    #[allow(clippy::too_many_arguments)]
    pub fn work_adjoint(
        &self,
        imbalance: f64,
        weight: f64,
        interior: &[FieldSample],
        interior_weight: f64,
        interior_adj: &mut [FieldSample],
        boundary: &[FieldSample],
        boundary_weight: f64,
        boundary_adj: &mut [FieldSample],
    ) {
        let w = self.scales.work_scale();
        let dw = weight * 2.0 * imbalance / (w * w);
        let ci = dw * interior_weight;
        for (s, a) in interior.iter().zip(interior_adj.iter_mut()) {
            let g = &s.grads;
            let v = &s.values;
            a.values[SXX] += ci * g[UX][0];
            a.grads[UX][0] += ci * v[SXX];
            a.values[SYY] += ci * g[UY][1];
            a.grads[UY][1] += ci * v[SYY];
            a.values[SXY] += ci * (g[UX][1] + g[UY][0]);
            a.grads[UX][1] += ci * v[SXY];
            a.grads[UY][0] += ci * v[SXY];
        }
        let cb = -dw * boundary_weight;
        for (s, a) in boundary.iter().zip(boundary_adj.iter_mut()) {
            let v = &s.values;
            a.values[SXX] += cb * v[UX];
            a.values[UX] += cb * v[SXX];
            a.values[SXY] += cb * v[UY];
            a.values[UY] += cb * v[SXY];
        }
    }

    /// Full single-domain loss on `interior` points with their materials and
    /// `boundary` points on the loaded edge of a cell of side `length`.
    pub fn total_loss(
        &self,
        interior: &[FieldSample],
        materials: &[Lame],
        boundary: &[FieldSample],
        length: f64,
    ) -> Result<LossBreakdown> {
        Ok(self
            .total_loss_with_adjoint(interior, materials, boundary, length, false)?
            .0)
    }

    /// As [`PinnLoss::total_loss`], optionally returning adjoints of the
    /// total with respect to every interior and boundary sample.
    pub fn total_loss_with_adjoint(
        &self,
        interior: &[FieldSample],
        materials: &[Lame],
        boundary: &[FieldSample],
        length: f64,
        want_adjoint: bool,
    ) -> Result<(LossBreakdown, Vec<FieldSample>, Vec<FieldSample>)> {
        if boundary.is_empty() {
            return Err(Error::EmptySet("loaded-edge work-balance points"));
        }
        let mut ia: Vec<FieldSample> = interior.iter().map(|s| FieldSample::zero(s.x)).collect();
        let mut ba: Vec<FieldSample> = boundary.iter().map(|s| FieldSample::zero(s.x)).collect();
        let local = self.local_terms(interior, materials, 1.0, want_adjoint.then_some(&mut ia[..]))?;
        let quad = WorkQuadrature::uniform(length * length, interior.len(), length, boundary.len());
        let imbalance = work_imbalance(interior, boundary, quad);
        if want_adjoint {
            self.work_adjoint(
                imbalance,
                1.0,
                interior,
                quad.interior_weight,
                &mut ia,
                boundary,
                quad.boundary_weight,
                &mut ba,
            );
        }
        Ok((LossBreakdown::from_terms(local, self.work_term(imbalance)), ia, ba))
    }
}

/// Exact plane-strain state of a cell under uniaxial traction `sigma_bar`
/// on the right edge, pinned in x on the left edge and in y on the bottom
/// edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniaxialSolution {
    pub sigma_bar: f64,
    pub strain_xx: f64,
    pub strain_yy: f64,
    pub half_length: f64,
}

impl UniaxialSolution {
    pub fn new(lame: Lame, sigma_bar: f64, length: f64) -> Self {
        // sigma_xx = (l + 2m) exx + l eyy, 0 = l exx + (l + 2m) eyy
        let a = lame.lambda + 2.0 * lame.mu;
        let b = lame.lambda;
        let det = a * a - b * b;
        UniaxialSolution {
            sigma_bar,
            strain_xx: a * sigma_bar / det,
            strain_yy: -b * sigma_bar / det,
            half_length: 0.5 * length,
        }
    }

    pub fn sample(&self, x: Point) -> FieldSample {
        let h = self.half_length;
        let mut s = FieldSample::zero(x);
        s.values[UX] = self.strain_xx * (x[0] + h);
        s.values[UY] = self.strain_yy * (x[1] + h);
        s.values[SXX] = self.sigma_bar;
        s.grads[UX][0] = self.strain_xx;
        s.grads[UY][1] = self.strain_yy;
        s
    }
}
