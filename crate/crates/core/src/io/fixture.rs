//! Seeded synthetic short-fibre microstructure images standing in for
//! scanned composites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::material::VoxelGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberFixture {
    pub width: usize,
    pub height: usize,
    pub n_fibers: usize,
    /// Fibre length range in pixels.
    pub length_px: (f64, f64),
    /// Fibre thickness range in pixels.
    pub thickness_px: (f64, f64),
    /// Standard deviation of additive noise on the grey values.
    pub noise: f64,
    pub seed: u64,
}

impl Default for FiberFixture {
    fn default() -> Self {
        FiberFixture {
            width: 64,
            height: 64,
            n_fibers: 14,
            length_px: (14.0, 30.0),
            thickness_px: (3.0, 6.0),
            noise: 0.15,
            seed: 7,
        }
    }
}

impl FiberFixture {
    /// Grey image: fibres near 0.8, matrix near 0.2, plus clamped noise.
    pub fn generate(&self) -> Result<VoxelGrid> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("fixture needs a non-empty image".into()));
        }
        if !(self.length_px.0 > 0.0 && self.length_px.0 <= self.length_px.1)
            || !(self.thickness_px.0 > 0.0 && self.thickness_px.0 <= self.thickness_px.1)
            || !(self.noise >= 0.0)
        {
            return Err(Error::InvalidArgument(format!("invalid fixture settings {self:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (w, h) = (self.width as f64, self.height as f64);
        let fibers: Vec<_> = (0..self.n_fibers)
            .map(|_| {
                let c = [rng.gen_range(0.0..w), rng.gen_range(0.0..h)];
                let angle = rng.gen_range(0.0..std::f64::consts::PI);
                let len = rng.gen_range(self.length_px.0..=self.length_px.1);
                let thick = rng.gen_range(self.thickness_px.0..=self.thickness_px.1);
                (c, [angle.cos(), angle.sin()], 0.5 * len, 0.5 * thick)
            })
            .collect();
        let mut values = Vec::with_capacity(self.width * self.height);
        for j in 0..self.height {
            for i in 0..self.width {
                let p = [i as f64 + 0.5, j as f64 + 0.5];
                let inside = fibers.iter().any(|(c, d, hl, ht)| {
                    let v = [p[0] - c[0], p[1] - c[1]];
                    let along = v[0] * d[0] + v[1] * d[1];
                    let across = -v[0] * d[1] + v[1] * d[0];
                    // capsule: segment of half length hl, radius ht
                    let a = along.clamp(-hl, *hl);
                    (along - a).hypot(across) <= *ht
                });
                let base = if inside { 0.8 } else { 0.2 };
                let noise = if self.noise > 0.0 {
                    // sum of uniforms, variance matched to noise^2
                    let u: f64 = (0..3).map(|_| rng.gen_range(-1.0..1.0)).sum();
                    u * self.noise
                } else {
                    0.0
                };
                values.push((base + noise).clamp(0.0, 1.0));
            }
        }
        VoxelGrid::new(self.width, self.height, values, 1.0)
    }
}
