//! Hard boundary conditions: every output is composed as
//! `N_k = G_k + s_k D_k Ñ_k`, where `Ñ_k` is the raw network output, `s_k`
//! its scale, `G_k` an extension of the boundary data and `D_k` a distance
//! function vanishing on the constrained edges.

use serde::{Deserialize, Serialize};

use crate::elasticity::{Field, FieldSample, ScaleSet};
use crate::geometry::{Edge, Rect};
use crate::netcore::{JacobianBatch, Point};
use crate::{Error, Result};

/// `a + bx x + by y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub a: f64,
    pub bx: f64,
    pub by: f64,
}

impl Affine {
    pub fn new(a: f64, bx: f64, by: f64) -> Self {
        Affine { a, bx, by }
    }

    fn eval(&self, p: Point) -> f64 {
        self.a + self.bx * p[0] + self.by * p[1]
    }
}

/// A constant times a product of integer powers of affine factors. This
/// covers every extension and distance function used by the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polynomial {
    pub scale: f64,
    #[serde(default)]
    pub factors: Vec<(Affine, u32)>,
}

impl Polynomial {
    pub fn constant(c: f64) -> Self {
        Polynomial {
            scale: c,
            factors: Vec::new(),
        }
    }

    pub fn affine(a: f64, bx: f64, by: f64) -> Self {
        Polynomial {
            scale: 1.0,
            factors: vec![(Affine::new(a, bx, by), 1)],
        }
    }

    pub fn times(mut self, f: Affine, power: u32) -> Self {
        self.factors.push((f, power));
        self
    }

    pub fn value(&self, p: Point) -> f64 {
        self.value_and_grad(p).0
    }

    /// Value and `[d/dx, d/dy]`.
    pub fn value_and_grad(&self, p: Point) -> (f64, [f64; 2]) {
        let mut v = self.scale;
        let mut g = [0.0, 0.0];
        for (f, k) in &self.factors {
            let t = f.eval(p);
            let tk = t.powi(*k as i32);
            let dtk = if *k == 0 {
                0.0
            } else {
                *k as f64 * t.powi(*k as i32 - 1)
            };
            g = [g[0] * tk + v * dtk * f.bx, g[1] * tk + v * dtk * f.by];
            v *= tk;
        }
        (v, g)
    }
}

/// Composition rule of a single output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardBcRule {
    pub output: Field,
    pub extension: Polynomial,
    pub distance: Polynomial,
    /// Edges of the unit cell on which `distance` vanishes by design.
    #[serde(default)]
    pub edges: Vec<Edge>,
}

impl HardBcRule {
    pub fn unconstrained(output: Field) -> Self {
        HardBcRule {
            output,
            extension: Polynomial::constant(0.0),
            distance: Polynomial::constant(1.0),
            edges: Vec::new(),
        }
    }

    pub fn is_unconstrained(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Distance function of the shear-stress rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShearRule {
    /// `(L/2 - x)^2 (L/2 - y)^2`, zero on the right and top edges only.
    #[default]
    Verbatim,
    /// `((L/2)^2 - x^2)((L/2)^2 - y^2)`, zero on all four edges.
    AllEdges,
}

/// One rule per output, in [`Field`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    rules: Vec<HardBcRule>,
}

impl RuleSet {
    /// Checks that every output has exactly one rule.
    pub fn new(rules: Vec<HardBcRule>) -> Result<Self> {
        let mut sorted: Vec<Option<HardBcRule>> = vec![None; 5];
        for r in rules {
            let slot = &mut sorted[r.output as usize];
            if slot.is_some() {
                return Err(Error::Config(format!(
                    "more than one boundary rule for {}",
                    r.output.name()
                )));
            }
            *slot = Some(r);
        }
        let mut out = Vec::with_capacity(5);
        for (k, r) in sorted.into_iter().enumerate() {
            match r {
                Some(r) => out.push(r),
                None => return Err(Error::Config(format!("no boundary rule for {}", Field::ALL[k].name()))),
            }
        }
        Ok(RuleSet { rules: out })
    }

    pub fn unconstrained() -> Self {
        RuleSet {
            rules: Field::ALL.iter().map(|&f| HardBcRule::unconstrained(f)).collect(),
        }
    }

    pub fn rule(&self, f: Field) -> &HardBcRule {
        &self.rules[f as usize]
    }

    pub fn rules(&self) -> &[HardBcRule] {
        &self.rules
    }
}

/// The uniaxial tension problem on `[-L/2, L/2]^2`: `u_x = 0` on the left
/// edge, `u_y = 0` on the bottom edge, `sigma_xx = sigma_bar` on the right
/// edge, `sigma_yy = 0` on the top edge and vanishing shear on the traction
/// edges.
pub fn uniaxial_plate_rules(length: f64, sigma_bar: f64, shear: ShearRule) -> Result<RuleSet> {
    if !(length > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cell length must be positive, got {length}"
        )));
    }
    let h = 0.5 * length;
    let sxy = match shear {
        ShearRule::Verbatim => HardBcRule {
            output: Field::Sxy,
            extension: Polynomial::constant(0.0),
            distance: Polynomial::constant(1.0)
                .times(Affine::new(h, -1.0, 0.0), 2)
                .times(Affine::new(h, 0.0, -1.0), 2),
            edges: vec![Edge::Right, Edge::Top],
        },
        ShearRule::AllEdges => HardBcRule {
            output: Field::Sxy,
            extension: Polynomial::constant(0.0),
            distance: Polynomial::constant(1.0)
                .times(Affine::new(h, -1.0, 0.0), 1)
                .times(Affine::new(h, 1.0, 0.0), 1)
                .times(Affine::new(h, 0.0, -1.0), 1)
                .times(Affine::new(h, 0.0, 1.0), 1),
            edges: Edge::ALL.to_vec(),
        },
    };
    RuleSet::new(vec![
        HardBcRule {
            output: Field::Ux,
            extension: Polynomial::constant(0.0),
            distance: Polynomial::affine(-h, -1.0, 0.0),
            edges: vec![Edge::Left],
        },
        HardBcRule {
            output: Field::Uy,
            extension: Polynomial::constant(0.0),
            distance: Polynomial::affine(-h, 0.0, -1.0),
            edges: vec![Edge::Bottom],
        },
        HardBcRule {
            output: Field::Sxx,
            extension: Polynomial::constant(sigma_bar),
            distance: Polynomial::affine(h, -1.0, 0.0),
            edges: vec![Edge::Right],
        },
        HardBcRule {
            output: Field::Syy,
            extension: Polynomial::constant(0.0),
            distance: Polynomial::affine(h, 0.0, -1.0),
            edges: vec![Edge::Top],
        },
        sxy,
    ])
}

/// Rules for a subnet covering `sub` inside the cell `outer`: a rule is
/// kept when one of its constrained edges is also an edge of `sub`,
/// otherwise the output is left unconstrained.
pub fn subdomain_rules(rules: &RuleSet, outer: &Rect, sub: &Rect) -> Result<RuleSet> {
    if !(outer.contains([sub.x0, sub.y0], crate::geometry::GEOM_TOL)
        && outer.contains([sub.x1, sub.y1], crate::geometry::GEOM_TOL))
    {
        return Err(Error::InvalidArgument(format!(
            "subdomain {sub:?} is not inside {outer:?}"
        )));
    }
    let kept = rules
        .rules()
        .iter()
        .map(|r| {
            if r.edges.iter().any(|&e| sub.shares_edge(outer, e)) {
                r.clone()
            } else {
                HardBcRule::unconstrained(r.output)
            }
        })
        .collect();
    RuleSet::new(kept)
}

/// Problem definition shared by every model: cell size, load, shear-rule
/// variant and loss scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvpSpec {
    pub length: f64,
    pub sigma_bar: f64,
    #[serde(default)]
    pub shear_rule: ShearRule,
    pub scales: ScaleSet,
}

impl BvpSpec {
    pub fn domain(&self) -> Rect {
        Rect::centered(self.length)
    }

    pub fn rules(&self) -> Result<RuleSet> {
        uniaxial_plate_rules(self.length, self.sigma_bar, self.shear_rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.sigma_bar.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid problem: L = {}, sigma_bar = {}",
                self.length, self.sigma_bar
            )));
        }
        self.scales.validate()
    }
}

/// `G`, `grad G`, `s D`, `s grad D` of one output at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Basis {
    g: f64,
    dg: [f64; 2],
    d: f64,
    dd: [f64; 2],
}

/// Rules and output scales evaluated once on a fixed point set.
#[derive(Debug, Clone, PartialEq)]
pub struct Composer {
    points: Vec<Point>,
    basis: Vec<[Basis; 5]>,
}

impl Composer {
    pub fn new(rules: &RuleSet, scales: &ScaleSet, points: &[Point]) -> Self {
        let s = scales.output_scales();
        let basis = points
            .iter()
            .map(|&p| {
                let mut b = [Basis {
                    g: 0.0,
                    dg: [0.0; 2],
                    d: 0.0,
                    dd: [0.0; 2],
                }; 5];
                for (k, r) in rules.rules().iter().enumerate() {
                    let (g, dg) = r.extension.value_and_grad(p);
                    let (d, dd) = r.distance.value_and_grad(p);
                    b[k] = Basis {
                        g,
                        dg,
                        d: s[k] * d,
                        dd: [s[k] * dd[0], s[k] * dd[1]],
                    };
                }
                b
            })
            .collect();
        Composer {
            points: points.to_vec(),
            basis,
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Composed fields from raw outputs at the composer's points. Without a
    /// Jacobian in `raw`, only values are meaningful.
    pub fn compose(&self, raw: &JacobianBatch) -> Vec<FieldSample> {
        let jac = raw.has_jacobian();
        self.points
            .iter()
            .zip(&self.basis)
            .enumerate()
            .map(|(i, (&p, b))| {
                let mut s = FieldSample::zero(p);
                let y = raw.values(i);
                for k in 0..5 {
                    let bk = &b[k];
                    s.values[k] = bk.g + bk.d * y[k];
                    if jac {
                        let dy = raw.grad(i, k);
                        for a in 0..2 {
                            s.grads[k][a] = bk.dg[a] + bk.dd[a] * y[k] + bk.d * dy[a];
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// Pulls adjoints of composed fields back onto the raw outputs.
    pub fn compose_adjoint(&self, adjoint: &[FieldSample], with_jacobian: bool) -> JacobianBatch {
        let mut out = JacobianBatch::zeros(self.points.len(), 5, with_jacobian);
        for (i, (a, b)) in adjoint.iter().zip(&self.basis).enumerate() {
            for k in 0..5 {
                let bk = &b[k];
                let mut v = bk.d * a.values[k];
                if with_jacobian {
                    v += bk.dd[0] * a.grads[k][0] + bk.dd[1] * a.grads[k][1];
                    let g = out.grad_mut(i, k);
                    g[0] = bk.d * a.grads[k][0];
                    g[1] = bk.d * a.grads[k][1];
                }
                out.values_mut(i)[k] = v;
            }
        }
        out
    }
}

/// Mean squared mismatch between composed outputs and the boundary data on
/// the edges each rule constrains. Reported only; never trained on.
pub fn soft_bc_defect(rules: &RuleSet, outer: &Rect, samples: &[FieldSample]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in samples {
        for r in rules.rules() {
            if r.edges.iter().any(|&e| outer.on_edge(s.x, e)) {
                let d = s.values[r.output as usize] - r.extension.value(s.x);
                sum += d * d;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
