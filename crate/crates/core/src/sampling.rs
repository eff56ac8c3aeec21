//! Collocation point sets: regular grids, uniform random sets, and the
//! residual-driven adaptive refinement loop.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::Model;
use crate::geometry::{Edge, Rect};
use crate::io::fmt_sci;
use crate::material::MaterialField;
use crate::netcore::Point;
use crate::optimizer::{BfgsOptions, OptHistory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Regular,
    Random,
    Adaptive,
    Combined,
}

/// Interior points and points on the loaded (right) edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationSet {
    pub interior: Vec<Point>,
    /// Points on the traction-loaded edge, used by the work balance.
    pub loaded: Vec<Point>,
    pub provenance: Provenance,
}

impl CollocationSet {
    pub fn empty(provenance: Provenance) -> Self {
        CollocationSet {
            interior: Vec::new(),
            loaded: Vec::new(),
            provenance,
        }
    }

    /// `nx * ny` points spanning `rect` including its edges, ordered with x
    /// outermost. If `rect` touches the right edge of `domain`, `ny` points
    /// on that edge are added to the loaded set.
    pub fn regular_in(rect: &Rect, nx: usize, ny: usize, domain: &Rect) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidArgument(format!(
                "a regular grid needs at least 2 points per side, got {nx}x{ny}"
            )));
        }
        let mut interior = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            let x = rect.x0 + (rect.x1 - rect.x0) * i as f64 / (nx - 1) as f64;
            for j in 0..ny {
                let y = rect.y0 + (rect.y1 - rect.y0) * j as f64 / (ny - 1) as f64;
                interior.push([x, y]);
            }
        }
        let loaded = if rect.shares_edge(domain, Edge::Right) {
            rect.edge_points(Edge::Right, ny)
        } else {
            Vec::new()
        };
        Ok(CollocationSet {
            interior,
            loaded,
            provenance: Provenance::Regular,
        })
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    /// Concatenation; duplicates are kept.
    pub fn union(&self, other: &CollocationSet) -> CollocationSet {
        let mut interior = self.interior.clone();
        interior.extend_from_slice(&other.interior);
        let mut loaded = self.loaded.clone();
        loaded.extend_from_slice(&other.loaded);
        CollocationSet {
            interior,
            loaded,
            provenance: Provenance::Combined,
        }
    }

    /// `x,y,kind` rows with `kind` either `interior` or `loaded`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,kind\n");
        for (pts, kind) in [(&self.interior, "interior"), (&self.loaded, "loaded")] {
            for p in pts {
                let _ = writeln!(s, "{},{},{kind}", fmt_sci(p[0]), fmt_sci(p[1]));
            }
        }
        s
    }
}

/// `n_per_side^2` points on `[-L/2, L/2]^2` including the edges.
pub fn regular_grid(n_per_side: usize, length: f64) -> Result<CollocationSet> {
    let d = Rect::centered(length);
    CollocationSet::regular_in(&d, n_per_side, n_per_side, &d)
}

/// `n` i.i.d. uniform points on the cell, plus `round(sqrt(n))` (at least 2)
/// evenly spaced points on the loaded edge.
pub fn uniform_random(n: usize, length: f64, seed: u64) -> Result<CollocationSet> {
    if n == 0 {
        return Err(Error::EmptySet("random collocation set"));
    }
    let d = Rect::centered(length);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior = (0..n)
        .map(|_| [rng.gen_range(d.x0..=d.x1), rng.gen_range(d.y0..=d.y1)])
        .collect();
    let nb = ((n as f64).sqrt().round() as usize).max(2);
    Ok(CollocationSet {
        interior,
        loaded: d.edge_points(Edge::Right, nb),
        provenance: Provenance::Random,
    })
}

/// Indices of the `n_ada` largest losses, in descending loss order; equal
/// losses keep their original order.
pub fn select_adaptive(losses: &[f64], n_ada: usize) -> Result<Vec<usize>> {
    if n_ada > losses.len() {
        return Err(Error::SelectionTooLarge {
            requested: n_ada,
            available: losses.len(),
        });
    }
    if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite pointwise loss at candidate {i}"
        )));
    }
    let mut idx: Vec<usize> = (0..losses.len()).collect();
    idx.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    idx.truncate(n_ada);
    Ok(idx)
}

/// Settings of the adaptive loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    /// Iterations on the fine grid before the first cycle.
    pub n_fine: usize,
    /// Number of refinement cycles.
    pub n_iter: usize,
    /// Points of the sparse regular grid; a perfect square.
    pub n_reg: usize,
    /// Random candidates per cycle.
    pub n_rand: usize,
    /// Candidates kept per cycle.
    pub n_ada: usize,
    /// `n_reg / n_ada`.
    pub gamma: f64,
    /// Gradient-clipping threshold during cycles.
    pub alpha: f64,
    /// Optimizer iterations per cycle.
    pub cycle_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

impl AdaptiveConfig {
    /// Splits a point budget `n_d` between a regular grid and adaptive
    /// points so that their ratio is close to `gamma`.
    pub fn for_budget(n_d: usize, gamma: f64, n_rand_factor: usize) -> Result<(usize, usize, usize)> {
        if !(gamma > 0.0) || n_d < 4 {
            return Err(Error::InvalidArgument(format!(
                "cannot split {n_d} points with gamma {gamma}"
            )));
        }
        let side = ((n_d as f64 * gamma / (1.0 + gamma)).sqrt().round() as usize).max(2);
        let n_reg = side * side;
        let n_ada = ((n_reg as f64 / gamma).round() as usize).max(1);
        Ok((n_reg, n_ada, n_ada * n_rand_factor.max(1)))
    }

    pub fn reg_side(&self) -> usize {
        (self.n_reg as f64).sqrt().round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let side = self.reg_side();
        if side * side != self.n_reg || side < 2 {
            return Err(Error::Config(format!(
                "n_reg = {} must be a square of at least 4",
                self.n_reg
            )));
        }
        if self.n_ada == 0 || self.n_ada > self.n_rand {
            return Err(Error::Config(format!(
                "need 0 < n_ada <= n_rand, got n_ada = {}, n_rand = {}",
                self.n_ada, self.n_rand
            )));
        }
        if (self.n_reg as f64 / self.gamma).round() as usize != self.n_ada {
            return Err(Error::Config(format!(
                "gamma = {} is inconsistent with n_reg = {} and n_ada = {}",
                self.gamma, self.n_reg, self.n_ada
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        Ok(())
    }
}

/// One refinement cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub points: CollocationSet,
    pub history: OptHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveHistory {
    pub fine: OptHistory,
    pub cycles: Vec<CycleRecord>,
}

impl AdaptiveHistory {
    pub fn iterations(&self) -> usize {
        self.fine.iterations() + self.cycles.iter().map(|c| c.history.iterations()).sum::<usize>()
    }
}

/// Trains on a fine grid of `fine_side^2` points for `n_fine` iterations,
/// then repeatedly scores random candidates by their pointwise loss, keeps
/// the worst `n_ada`, appends them to a sparse regular grid and trains on
/// that union with gradient clipping.
pub fn adaptive_loop(
    model: &Model,
    material: &MaterialField,
    params0: Vec<f64>,
    fine_side: usize,
    config: &AdaptiveConfig,
    opts: &BfgsOptions,
) -> Result<(Vec<f64>, AdaptiveHistory)> {
    config.validate()?;
    let (nx, _) = model.decomposition.splits;
    let fine_sets = model.regular_sets(fine_side)?;
    let fine_ifaces = model.interface_points(((fine_side as f64 / nx as f64).round() as usize).max(1));
    let data = model.prepare(&fine_sets, &fine_ifaces, material)?;
    let (mut params, fine) = model.train(params0, &data, &opts.with_max_iters(config.n_fine))?;

    let length = model.bvp.length;
    let sparse = regular_grid(config.reg_side(), length)?;
    let ifaces = model.interface_points(((config.reg_side() as f64 / nx as f64).round() as usize).max(1));
    let mut clipped = opts.with_max_iters(config.cycle_iters);
    clipped.clip_alpha = Some(config.alpha);
    let mut cycles = Vec::with_capacity(config.n_iter);
    for cycle in 0..config.n_iter {
        let wrap = |e: Error| Error::Cycle {
            cycle,
            source: Box::new(e),
        };
        let cand = uniform_random(config.n_rand, length, config.seed.wrapping_add(cycle as u64)).map_err(wrap)?;
        let scores = model.pointwise_loss(&params, &cand.interior, material).map_err(wrap)?;
        let chosen = select_adaptive(&scores, config.n_ada).map_err(wrap)?;
        let adaptive = CollocationSet {
            interior: chosen.iter().map(|&i| cand.interior[i]).collect(),
            loaded: Vec::new(),
            provenance: Provenance::Adaptive,
        };
        let points = sparse.union(&adaptive);
        let sets = model.partition(&points).map_err(wrap)?;
        let data = model.prepare(&sets, &ifaces, material).map_err(wrap)?;
        let (p, history) = model.train(params, &data, &clipped).map_err(wrap)?;
        params = p;
        cycles.push(CycleRecord { cycle, points, history });
    }
    Ok((params, AdaptiveHistory { fine, cycles }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grids() {
        let g = regular_grid(2, 2.0).unwrap();
        assert_eq!(g.interior, vec![[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]);
        assert_eq!(g.loaded, vec![[1.0, -1.0], [1.0, 1.0]]);
        assert!(regular_grid(3, 2.0).unwrap().interior.contains(&[0.0, 0.0]));
        let g = regular_grid(128, 2.0).unwrap();
        assert_eq!(g.len(), 16384);
        assert!((g.interior[1][1] - g.interior[0][1] - 2.0 / 127.0).abs() < 1e-15);
        assert!(regular_grid(1, 2.0).is_err());
    }

    #[test]
    fn random_sets() {
        let a = uniform_random(100, 2.0, 4).unwrap();
        assert_eq!(a, uniform_random(100, 2.0, 4).unwrap());
        assert_ne!(a, uniform_random(100, 2.0, 5).unwrap());
        assert!(a.interior.iter().all(|p| p[0].abs() <= 1.0 && p[1].abs() <= 1.0));
        let big = uniform_random(10_000, 2.0, 1).unwrap();
        let n = big.len() as f64;
        let mx = big.interior.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = big.interior.iter().map(|p| p[1]).sum::<f64>() / n;
        assert!(mx.abs() < 0.05 && my.abs() < 0.05);
    }

    #[test]
    fn top_k() {
        assert_eq!(select_adaptive(&[3.0, 1.0, 2.0], 2).unwrap(), vec![0, 2]);
        assert_eq!(select_adaptive(&[1.0, 5.0, 5.0, 0.0], 4).unwrap(), vec![1, 2, 0, 3]);
        assert!(matches!(
            select_adaptive(&[1.0], 2),
            Err(Error::SelectionTooLarge {
                requested: 2,
                available: 1
            })
        ));
        assert!(select_adaptive(&[f64::NAN], 1).is_err());
    }

    #[test]
    fn budget_split() {
        let (n_reg, n_ada, n_rand) = AdaptiveConfig::for_budget(128 * 128, 2.2, 4).unwrap();
        assert!((n_reg as f64 / n_ada as f64 - 2.2).abs() < 0.01);
        assert!(((n_reg + n_ada) as f64 / 16384.0 - 1.0).abs() < 0.02);
        let c = AdaptiveConfig {
            n_fine: 1,
            n_iter: 1,
            n_reg,
            n_rand,
            n_ada,
            gamma: 2.2,
            alpha: 1.0,
            cycle_iters: 1,
            seed: 0,
        };
        c.validate().unwrap();
        assert!(AdaptiveConfig { n_ada: n_ada + 5, ..c }.validate().is_err());
        assert!(AdaptiveConfig { n_reg: n_reg + 1, ..c }.validate().is_err());
    }

    #[test]
    fn csv_lists_every_point() {
        let csv = regular_grid(2, 2.0).unwrap().to_csv();
        assert_eq!(csv.lines().count(), 1 + 4 + 2);
        assert!(csv.starts_with("x,y,kind\n-1.000000000e+00,"));
    }
}
