//! Uniform domain splits with one network per subdomain, coupled by
//! interface penalties on displacements and tractions. A single-box split
//! is the plain collocation network.

use serde::{Deserialize, Serialize};

use crate::boundary::{subdomain_rules, BvpSpec, Composer, RuleSet};
use crate::elasticity::{Field, FieldSample, Lame, LossBreakdown, PinnLoss};
use crate::exec;
use crate::geometry::{Edge, Rect, GEOM_TOL};
use crate::material::MaterialField;
use crate::netcore::{init_params, InputMap, Network, Point, Topology};
use crate::optimizer::{minimize, BfgsOptions, OptHistory};
use crate::sampling::CollocationSet;
use crate::{Error, Result};

/// Relative placement of the two boxes sharing an interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Boxes side by side along x; the segment is a line `x = const`.
    Horizontal,
    /// Boxes stacked along y; the segment is a line `y = const`.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interface {
    pub orientation: Orientation,
    /// Box indices; `pair.0` is the left or lower box.
    pub pair: (usize, usize),
    pub start: Point,
    pub end: Point,
}

impl Interface {
    /// `n` evenly spaced points strictly inside the segment.
    pub fn points(&self, n: usize) -> Vec<Point> {
        (1..=n)
            .map(|k| {
                let t = k as f64 / (n + 1) as f64;
                [
                    self.start[0] + t * (self.end[0] - self.start[0]),
                    self.start[1] + t * (self.end[1] - self.start[1]),
                ]
            })
            .collect()
    }

    pub fn contains(&self, p: Point) -> bool {
        let r = Rect::new(
            self.start[0].min(self.end[0]),
            self.start[0].max(self.end[0]),
            self.start[1].min(self.end[1]),
            self.start[1].max(self.end[1]),
        );
        r.contains(p, GEOM_TOL)
    }
}

/// An `n_x` by `n_y` tiling of the cell. Boxes are numbered row by row
/// from the bottom-left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub splits: (usize, usize),
    pub domain: Rect,
    pub boxes: Vec<Rect>,
    pub interfaces: Vec<Interface>,
}

pub fn decompose(length: f64, n_x: usize, n_y: usize) -> Result<Decomposition> {
    if n_x == 0 || n_y == 0 || !(length > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cannot split a cell of side {length} into {n_x}x{n_y}"
        )));
    }
    let domain = Rect::centered(length);
    let xs: Vec<f64> = (0..=n_x).map(|i| domain.x0 + length * i as f64 / n_x as f64).collect();
    let ys: Vec<f64> = (0..=n_y).map(|j| domain.y0 + length * j as f64 / n_y as f64).collect();
    let mut boxes = Vec::with_capacity(n_x * n_y);
    for j in 0..n_y {
        for i in 0..n_x {
            boxes.push(Rect::new(xs[i], xs[i + 1], ys[j], ys[j + 1]));
        }
    }
    let mut interfaces = Vec::new();
    for j in 0..n_y {
        for i in 0..n_x {
            let k = j * n_x + i;
            if i + 1 < n_x {
                interfaces.push(Interface {
                    orientation: Orientation::Horizontal,
                    pair: (k, k + 1),
                    start: [xs[i + 1], ys[j]],
                    end: [xs[i + 1], ys[j + 1]],
                });
            }
            if j + 1 < n_y {
                interfaces.push(Interface {
                    orientation: Orientation::Vertical,
                    pair: (k, k + n_x),
                    start: [xs[i], ys[j + 1]],
                    end: [xs[i + 1], ys[j + 1]],
                });
            }
        }
    }
    Ok(Decomposition {
        splits: (n_x, n_y),
        domain,
        boxes,
        interfaces,
    })
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Lowest-index box containing `x`.
    pub fn owner(&self, x: Point) -> Result<usize> {
        self.boxes
            .iter()
            .position(|b| b.contains(x, GEOM_TOL))
            .ok_or(Error::OutsideDomain(x[0], x[1]))
    }
}

/// Interface-loss settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceOptions {
    #[serde(default = "default_psi")]
    pub psi: f64,
    /// Also penalize both displacement components on every segment.
    #[serde(default)]
    pub interface_full: bool,
}

fn default_psi() -> f64 {
    20.0
}

impl Default for InterfaceOptions {
    fn default() -> Self {
        InterfaceOptions {
            psi: default_psi(),
            interface_full: false,
        }
    }
}

impl InterfaceOptions {
    /// Components compared on a segment of the given orientation.
    pub fn components(&self, o: Orientation) -> Vec<Field> {
        let mut c = match o {
            Orientation::Horizontal => vec![Field::Ux, Field::Sxx, Field::Sxy],
            Orientation::Vertical => vec![Field::Uy, Field::Syy, Field::Sxy],
        };
        if self.interface_full {
            c.push(match o {
                Orientation::Horizontal => Field::Uy,
                Orientation::Vertical => Field::Ux,
            });
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subnet {
    pub rect: Rect,
    pub network: Network,
    pub rules: RuleSet,
    /// Start of this subnet's block in the joint parameter vector.
    pub offset: usize,
}

/// Subnets over a decomposition sharing one problem definition. The joint
/// parameter vector is the concatenation of the subnet vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub bvp: BvpSpec,
    pub decomposition: Decomposition,
    pub subnets: Vec<Subnet>,
    pub interface: InterfaceOptions,
    loss: PinnLoss,
    n_params: usize,
}

/// Interior points and loaded-edge points of every subnet, and point sets
/// of every interface, with rule bases and materials evaluated.
#[derive(Debug, Clone)]
pub struct TrainingData {
    subnets: Vec<SubnetData>,
    interfaces: Vec<InterfaceData>,
}

#[derive(Debug, Clone)]
struct SubnetData {
    interior: Composer,
    materials: Vec<Lame>,
    loaded: Composer,
    interior_weight: f64,
    boundary_weight: f64,
}

#[derive(Debug, Clone)]
struct InterfaceData {
    index: usize,
    side_a: Composer,
    side_b: Composer,
}

/// Points of one interface.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfacePoints {
    pub interface: usize,
    pub points: Vec<Point>,
}

/// Loss value of a model split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelLoss {
    /// Residual terms summed over subnets, and the global work term.
    pub physics: LossBreakdown,
    /// Weighted interface penalty.
    pub interface: f64,
    pub total: f64,
}

impl TrainingData {
    pub fn interior_count(&self) -> usize {
        self.subnets.iter().map(|s| s.interior.len()).sum()
    }

    pub fn interior_points(&self) -> Vec<Point> {
        self.subnets
            .iter()
            .flat_map(|s| s.interior.points().iter().copied())
            .collect()
    }
}

impl Model {
    pub fn new(
        bvp: BvpSpec,
        decomposition: Decomposition,
        topology: Topology,
        interface: InterfaceOptions,
    ) -> Result<Self> {
        bvp.validate()?;
        if topology.output_dim != 5 {
            return Err(Error::InvalidTopology(format!(
                "field networks need 5 outputs, got {}",
                topology.output_dim
            )));
        }
        if (decomposition.domain.x1 - decomposition.domain.x0 - bvp.length).abs() > GEOM_TOL {
            return Err(Error::InvalidArgument(
                "decomposition does not cover the problem cell".into(),
            ));
        }
        if !(interface.psi >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "psi must be non-negative, got {}",
                interface.psi
            )));
        }
        let rules = bvp.rules()?;
        let mut offset = 0;
        let mut subnets = Vec::with_capacity(decomposition.len());
        for rect in &decomposition.boxes {
            let network = Network::with_input_map(topology, InputMap::new(rect.center(), rect.half_width()))?;
            let n = network.param_count();
            subnets.push(Subnet {
                rect: *rect,
                network,
                rules: subdomain_rules(&rules, &decomposition.domain, rect)?,
                offset,
            });
            offset += n;
        }
        Ok(Model {
            loss: PinnLoss::new(bvp.scales)?,
            bvp,
            decomposition,
            subnets,
            interface,
            n_params: offset,
        })
    }

    /// A single network over the whole cell.
    pub fn single(bvp: BvpSpec, topology: Topology) -> Result<Self> {
        let d = decompose(bvp.length, 1, 1)?;
        Self::new(bvp, d, topology, InterfaceOptions::default())
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    pub fn pinn_loss(&self) -> &PinnLoss {
        &self.loss
    }

    /// Subnet `i` drawn with seed `seed + i`.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params);
        for (i, s) in self.subnets.iter().enumerate() {
            p.extend_from_slice(&init_params(s.network.topology(), seed.wrapping_add(i as u64)));
        }
        p
    }

    fn block<'a>(&self, params: &'a [f64], i: usize) -> &'a [f64] {
        let s = &self.subnets[i];
        &params[s.offset..s.offset + s.network.param_count()]
    }

    fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::ParamLength {
                expected: self.n_params,
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Regular grids per box with about `n_per_side` points along the whole
    /// cell, so that the total count is close to `n_per_side^2`.
    pub fn regular_sets(&self, n_per_side: usize) -> Result<Vec<CollocationSet>> {
        let (nx, ny) = self.decomposition.splits;
        let sx = ((n_per_side as f64 / nx as f64).round() as usize).max(2);
        let sy = ((n_per_side as f64 / ny as f64).round() as usize).max(2);
        let domain = self.decomposition.domain;
        self.subnets
            .iter()
            .map(|s| CollocationSet::regular_in(&s.rect, sx, sy, &domain))
            .collect()
    }

    /// Assigns the points of a global set to their owning boxes.
    pub fn partition(&self, set: &CollocationSet) -> Result<Vec<CollocationSet>> {
        let mut out: Vec<CollocationSet> = (0..self.subnets.len())
            .map(|_| CollocationSet::empty(set.provenance))
            .collect();
        for &p in &set.interior {
            out[self.decomposition.owner(p)?].interior.push(p);
        }
        for &p in &set.loaded {
            out[self.decomposition.owner(p)?].loaded.push(p);
        }
        Ok(out)
    }

    /// Default interface points: per segment, as many as a box's regular
    /// grid has along that side.
    pub fn interface_points(&self, per_segment: usize) -> Vec<InterfacePoints> {
        self.decomposition
            .interfaces
            .iter()
            .enumerate()
            .map(|(k, f)| InterfacePoints {
                interface: k,
                points: f.points(per_segment),
            })
            .collect()
    }

    /// Evaluates rule bases and materials on per-box point sets.
    pub fn prepare(
        &self,
        sets: &[CollocationSet],
        interfaces: &[InterfacePoints],
        material: &MaterialField,
    ) -> Result<TrainingData> {
        if sets.len() != self.subnets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} point sets for {} subnets",
                sets.len(),
                self.subnets.len()
            )));
        }
        let scales = &self.bvp.scales;
        let domain = &self.decomposition.domain;
        let mut subnets = Vec::with_capacity(sets.len());
        for (s, set) in self.subnets.iter().zip(sets) {
            if set.interior.is_empty() {
                return Err(Error::EmptySet("interior collocation points of a subdomain"));
            }
            for &p in &set.interior {
                if !s.rect.contains(p, GEOM_TOL) {
                    return Err(Error::OutsideDomain(p[0], p[1]));
                }
            }
            for &p in &set.loaded {
                if !(s.rect.on_edge(p, Edge::Right) && domain.on_edge(p, Edge::Right)) {
                    return Err(Error::InvalidArgument(format!(
                        "point {p:?} is not on the loaded edge of its subdomain"
                    )));
                }
            }
            let materials = material.query_many(&set.interior)?;
            subnets.push(SubnetData {
                interior: Composer::new(&s.rules, scales, &set.interior),
                materials,
                loaded: Composer::new(&s.rules, scales, &set.loaded),
                interior_weight: s.rect.area() / (2.0 * set.interior.len() as f64),
                boundary_weight: s.rect.edge_length(Edge::Right) / (2.0 * set.loaded.len().max(1) as f64),
            });
        }
        if subnets.iter().all(|s| s.loaded.is_empty()) {
            return Err(Error::EmptySet("loaded-edge work-balance points"));
        }
        let mut ifaces = Vec::with_capacity(interfaces.len());
        for ip in interfaces {
            let f = self
                .decomposition
                .interfaces
                .get(ip.interface)
                .ok_or_else(|| Error::InvalidArgument(format!("no interface {}", ip.interface)))?;
            if let Some(p) = ip.points.iter().find(|&&p| !f.contains(p)) {
                return Err(Error::InvalidArgument(format!(
                    "point {p:?} is not on interface {}",
                    ip.interface
                )));
            }
            ifaces.push(InterfaceData {
                index: ip.interface,
                side_a: Composer::new(&self.subnets[f.pair.0].rules, scales, &ip.points),
                side_b: Composer::new(&self.subnets[f.pair.1].rules, scales, &ip.points),
            });
        }
        Ok(TrainingData {
            subnets,
            interfaces: ifaces,
        })
    }

    /// Total loss and, when `want_grad`, its gradient.
    pub fn evaluate(&self, params: &[f64], data: &TrainingData, want_grad: bool) -> Result<(ModelLoss, Vec<f64>)> {
        self.check(params)?;
        if data.subnets.len() != self.subnets.len() {
            return Err(Error::InvalidArgument(
                "training data prepared for another model".into(),
            ));
        }
        // forward
        let fields = exec::map_indices(
            self.subnets.len(),
            |i| -> Result<(Vec<FieldSample>, Vec<FieldSample>)> {
                let net = &self.subnets[i].network;
                let p = self.block(params, i);
                let d = &data.subnets[i];
                let raw = net.evaluate_batch(p, d.interior.points(), true)?;
                let interior = d.interior.compose(&raw);
                let loaded = if d.loaded.is_empty() {
                    Vec::new()
                } else {
                    d.loaded.compose(&net.evaluate_batch(p, d.loaded.points(), false)?)
                };
                Ok((interior, loaded))
            },
        );
        let fields = fields.into_iter().collect::<Result<Vec<_>>>()?;

        let mut interior_adj: Vec<Vec<FieldSample>> = fields
            .iter()
            .map(|(f, _)| f.iter().map(|s| FieldSample::zero(s.x)).collect())
            .collect();
        let mut loaded_adj: Vec<Vec<FieldSample>> = fields
            .iter()
            .map(|(_, f)| f.iter().map(|s| FieldSample::zero(s.x)).collect())
            .collect();

        // local residual terms
        let mut local = [0.0; 5];
        for (i, (interior, _)) in fields.iter().enumerate() {
            let adj = if want_grad {
                Some(&mut interior_adj[i][..])
            } else {
                None
            };
            let t = self.loss.local_terms(interior, &data.subnets[i].materials, 1.0, adj)?;
            for k in 0..5 {
                local[k] += t[k];
            }
        }

        // global work balance
        let mut imbalance = 0.0;
        for (i, (interior, loaded)) in fields.iter().enumerate() {
            let d = &data.subnets[i];
            let wi: f64 = interior.iter().map(crate::elasticity::internal_work_density).sum();
            let we: f64 = loaded.iter().map(crate::elasticity::external_work_density).sum();
            imbalance += d.interior_weight * wi - d.boundary_weight * we;
        }
        let l_work = self.loss.work_term(imbalance);
        if want_grad {
            for (i, (interior, loaded)) in fields.iter().enumerate() {
                let d = &data.subnets[i];
                self.loss.work_adjoint(
                    imbalance,
                    1.0,
                    interior,
                    d.interior_weight,
                    &mut interior_adj[i],
                    loaded,
                    d.boundary_weight,
                    &mut loaded_adj[i],
                );
            }
        }

        // interfaces
        let mut interface = 0.0;
        let mut iface_adj = Vec::new();
        for idata in &data.interfaces {
            let f = &self.decomposition.interfaces[idata.index];
            let (a, b) = f.pair;
            let pts = idata.side_a.points();
            if pts.is_empty() {
                continue;
            }
            let na = idata.side_a.compose(&self.subnets[a].network.evaluate_batch(
                self.block(params, a),
                pts,
                false,
            )?);
            let nb = idata.side_b.compose(&self.subnets[b].network.evaluate_batch(
                self.block(params, b),
                pts,
                false,
            )?);
            let comps = self.interface.components(f.orientation);
            let (value, adj_a, adj_b) = self.interface_term(&na, &nb, &comps, want_grad);
            interface += value;
            if want_grad {
                iface_adj.push((idata, adj_a, adj_b));
            }
        }

        let physics = LossBreakdown::from_terms(local, l_work);
        let total = physics.total + interface;
        let loss = ModelLoss {
            physics,
            interface,
            total,
        };
        if !want_grad {
            return Ok((loss, Vec::new()));
        }

        // reverse
        let grads = exec::map_indices(self.subnets.len(), |i| -> Result<Vec<f64>> {
            let net = &self.subnets[i].network;
            let p = self.block(params, i);
            let d = &data.subnets[i];
            let mut g = vec![0.0; p.len()];
            let adj = d.interior.compose_adjoint(&interior_adj[i], true);
            net.backprop_batch(p, d.interior.points(), &adj, &mut g)?;
            if !d.loaded.is_empty() {
                let adj = d.loaded.compose_adjoint(&loaded_adj[i], false);
                net.backprop_batch(p, d.loaded.points(), &adj, &mut g)?;
            }
            for (idata, adj_a, adj_b) in &iface_adj {
                let f = &self.decomposition.interfaces[idata.index];
                let pts = idata.side_a.points();
                if f.pair.0 == i {
                    net.backprop_batch(p, pts, &idata.side_a.compose_adjoint(adj_a, false), &mut g)?;
                }
                if f.pair.1 == i {
                    net.backprop_batch(p, pts, &idata.side_b.compose_adjoint(adj_b, false), &mut g)?;
                }
            }
            Ok(g)
        });
        let mut grad = Vec::with_capacity(self.n_params);
        for g in grads {
            grad.extend(g?);
        }
        Ok((loss, grad))
    }

    /// `psi * sum_k mean((a_k - b_k)^2) / scale_k^2` over the given
    /// components, with adjoints for both sides.
    fn interface_term(
        &self,
        a: &[FieldSample],
        b: &[FieldSample],
        comps: &[Field],
        want_grad: bool,
    ) -> (f64, Vec<FieldSample>, Vec<FieldSample>) {
        let s = self.bvp.scales.output_scales();
        let inv_m = 1.0 / a.len() as f64;
        let psi = self.interface.psi;
        let mut value = 0.0;
        let mut adj_a: Vec<FieldSample> = Vec::new();
        let mut adj_b: Vec<FieldSample> = Vec::new();
        if want_grad {
            adj_a = a.iter().map(|x| FieldSample::zero(x.x)).collect();
            adj_b = b.iter().map(|x| FieldSample::zero(x.x)).collect();
        }
        for (j, (sa, sb)) in a.iter().zip(b).enumerate() {
            for &c in comps {
                let k = c as usize;
                let d = (sa.values[k] - sb.values[k]) / s[k];
                value += psi * d * d * inv_m;
                if want_grad {
                    let g = 2.0 * psi * d * inv_m / s[k];
                    adj_a[j].values[k] += g;
                    adj_b[j].values[k] -= g;
                }
            }
        }
        (value, adj_a, adj_b)
    }

    pub fn total_loss(&self, params: &[f64], data: &TrainingData) -> Result<ModelLoss> {
        Ok(self.evaluate(params, data, false)?.0)
    }

    /// Weighted interface penalty alone.
    pub fn interface_loss(&self, params: &[f64], data: &TrainingData) -> Result<f64> {
        Ok(self.total_loss(params, data)?.interface)
    }

    /// Trains all subnets jointly.
    pub fn train(&self, params0: Vec<f64>, data: &TrainingData, opts: &BfgsOptions) -> Result<(Vec<f64>, OptHistory)> {
        self.check(&params0)?;
        minimize(
            |p| {
                let (l, g) = self.evaluate(p, data, true)?;
                Ok((l.total, g))
            },
            params0,
            opts,
        )
    }

    /// Composed fields at arbitrary points, each evaluated by its owning
    /// subnet.
    pub fn predict(&self, params: &[f64], points: &[Point]) -> Result<Vec<FieldSample>> {
        self.check(params)?;
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); self.subnets.len()];
        for (k, &p) in points.iter().enumerate() {
            groups[self.decomposition.owner(p)?].push(k);
        }
        let parts = exec::map_indices(self.subnets.len(), |i| -> Result<Vec<FieldSample>> {
            if groups[i].is_empty() {
                return Ok(Vec::new());
            }
            let pts: Vec<Point> = groups[i].iter().map(|&k| points[k]).collect();
            let s = &self.subnets[i];
            let c = Composer::new(&s.rules, &self.bvp.scales, &pts);
            Ok(c.compose(&s.network.evaluate_batch(self.block(params, i), &pts, true)?))
        });
        let mut out = vec![FieldSample::zero([0.0, 0.0]); points.len()];
        for (i, part) in parts.into_iter().enumerate() {
            for (k, s) in groups[i].iter().zip(part?) {
                out[*k] = s;
            }
        }
        Ok(out)
    }

    /// Per-point squared scaled residual sum, without the work term.
    pub fn pointwise_loss(&self, params: &[f64], points: &[Point], material: &MaterialField) -> Result<Vec<f64>> {
        let fields = self.predict(params, points)?;
        let mats = material.query_many(points)?;
        Ok(fields
            .iter()
            .zip(&mats)
            .map(|(s, &m)| self.loss.pointwise(s, m))
            .collect())
    }

    /// Mean absolute displacement jump over the given interface points.
    pub fn interface_defect(&self, params: &[f64], interfaces: &[InterfacePoints]) -> Result<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for ip in interfaces {
            let f = self
                .decomposition
                .interfaces
                .get(ip.interface)
                .ok_or_else(|| Error::InvalidArgument(format!("no interface {}", ip.interface)))?;
            let sa = &self.subnets[f.pair.0];
            let sb = &self.subnets[f.pair.1];
            let va = Composer::new(&sa.rules, &self.bvp.scales, &ip.points).compose(&sa.network.evaluate_batch(
                self.block(params, f.pair.0),
                &ip.points,
                false,
            )?);
            let vb = Composer::new(&sb.rules, &self.bvp.scales, &ip.points).compose(&sb.network.evaluate_batch(
                self.block(params, f.pair.1),
                &ip.points,
                false,
            )?);
            for (a, b) in va.iter().zip(&vb) {
                sum += (a.values[0] - b.values[0]).hypot(a.values[1] - b.values[1]);
                n += 1;
            }
        }
        Ok(if n == 0 { 0.0 } else { sum / n as f64 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interface_counts() {
        let d = decompose(2.0, 1, 1).unwrap();
        assert_eq!(d.boxes, vec![Rect::centered(2.0)]);
        assert!(d.interfaces.is_empty());
        let d = decompose(2.0, 2, 2).unwrap();
        assert_eq!(d.interfaces.len(), 4);
        assert!(d.interfaces.iter().all(|f| match f.orientation {
            Orientation::Horizontal => f.start[0] == 0.0 && f.end[0] == 0.0,
            Orientation::Vertical => f.start[1] == 0.0 && f.end[1] == 0.0,
        }));
        for (nx, ny) in [(4, 4), (3, 5), (5, 1)] {
            let d = decompose(2.0, nx, ny).unwrap();
            assert_eq!(d.interfaces.len(), ny * (nx - 1) + nx * (ny - 1));
            let hor = d
                .interfaces
                .iter()
                .filter(|f| f.orientation == Orientation::Horizontal)
                .count();
            assert_eq!(hor, ny * (nx - 1));
        }
    }

    #[test]
    fn boxes_tile_the_cell() {
        let d = decompose(2.0, 3, 2).unwrap();
        let area: f64 = d.boxes.iter().map(|b| b.area()).sum();
        assert!((area - 4.0).abs() < 1e-12);
        assert_eq!(d.owner([0.0, 0.0]).unwrap(), 1);
        assert_eq!(d.owner([-1.0, -1.0]).unwrap(), 0);
        assert_eq!(d.owner([1.0, 1.0]).unwrap(), 5);
        assert!(d.owner([1.5, 0.0]).is_err());
    }

    #[test]
    fn interface_points_exclude_endpoints() {
        let d = decompose(2.0, 2, 2).unwrap();
        let p = d.interfaces[0].points(3);
        assert_eq!(p, vec![[0.0, -0.75], [0.0, -0.5], [0.0, -0.25]]);
        assert!(p.iter().all(|&x| d.interfaces[0].contains(x)));
        assert!(!d.interfaces[0].contains([0.1, -0.5]));
    }

    #[test]
    fn component_mapping() {
        let v = InterfaceOptions::default();
        assert_eq!(
            v.components(Orientation::Horizontal),
            vec![Field::Ux, Field::Sxx, Field::Sxy]
        );
        assert_eq!(
            v.components(Orientation::Vertical),
            vec![Field::Uy, Field::Syy, Field::Sxy]
        );
        let full = InterfaceOptions {
            interface_full: true,
            ..v
        };
        assert_eq!(full.components(Orientation::Vertical).len(), 4);
    }
}
