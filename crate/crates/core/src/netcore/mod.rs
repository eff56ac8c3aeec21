//! Dense feed-forward networks with exact input Jacobians and exact
//! parameter gradients of losses built from outputs and their first
//! spatial derivatives.
//!
//! Biases are absorbed: every weight matrix carries one extra trailing
//! column that multiplies a constant 1 input. Parameters are laid out layer
//! by layer, each matrix row-major with shape `(fan_out, fan_in + 1)`.

mod network;

pub use network::{InputMap, JacobianBatch, JacobianSample, Network, Point};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `z * sigmoid(beta * z)`.
    Swish,
    /// `1 / (1 + exp(-beta * z))`.
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    /// Value, first and second derivative at `z`.
    #[inline]
    pub fn eval(self, z: f64, beta: f64) -> (f64, f64, f64) {
        match self {
            Activation::Swish => {
                let s = sigmoid(beta * z);
                let ds = s * (1.0 - s);
                let bz = beta * z;
                (z * s, s + bz * ds, beta * ds * (2.0 + bz * (1.0 - 2.0 * s)))
            }
            Activation::Sigmoid => {
                let s = sigmoid(beta * z);
                let ds = s * (1.0 - s);
                (s, beta * ds, beta * beta * ds * (1.0 - 2.0 * s))
            }
            Activation::Tanh => {
                let t = z.tanh();
                let dt = 1.0 - t * t;
                (t, dt, -2.0 * t * dt)
            }
            Activation::Identity => (z, 1.0, 0.0),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Shape of a dense network. `n_layers` counts hidden layers; the output
/// layer is always affine (identity activation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    #[serde(default = "default_output_dim")]
    pub output_dim: usize,
    pub n_layers: usize,
    pub units_per_layer: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_input_dim() -> usize {
    2
}
fn default_output_dim() -> usize {
    5
}
fn default_activation() -> Activation {
    Activation::Swish
}
fn default_beta() -> f64 {
    1.0
}

impl Topology {
    pub fn new(output_dim: usize, n_layers: usize, units_per_layer: usize, activation: Activation) -> Result<Self> {
        let t = Topology {
            input_dim: 2,
            output_dim,
            n_layers,
            units_per_layer,
            activation,
            beta: 1.0,
        };
        t.validate()?;
        Ok(t)
    }

    /// The five-output field network used by the elasticity solver.
    pub fn field(n_layers: usize, units_per_layer: usize) -> Self {
        Topology {
            input_dim: 2,
            output_dim: 5,
            n_layers,
            units_per_layer,
            activation: Activation::Swish,
            beta: 1.0,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim != 2 {
            return Err(Error::InvalidTopology(format!(
                "input_dim must be 2, got {}",
                self.input_dim
            )));
        }
        if self.output_dim == 0 {
            return Err(Error::InvalidTopology("output_dim must be >= 1".into()));
        }
        if self.n_layers > 0 && self.units_per_layer == 0 {
            return Err(Error::InvalidTopology("units_per_layer must be >= 1".into()));
        }
        if !self.beta.is_finite() {
            return Err(Error::InvalidTopology("beta must be finite".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine map, input side first.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.n_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.n_layers {
            dims.push((fan_in, self.units_per_layer));
            fan_in = self.units_per_layer;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| (fan_in + 1) * fan_out)
            .sum()
    }

    /// Smallest-error hidden width such that `copies` networks of this shape
    /// hold about `budget` parameters in total.
    pub fn units_for_budget(&self, budget: usize, copies: usize) -> usize {
        let mut best = (usize::MAX, 1);
        for units in 1..=512 {
            let t = Topology {
                units_per_layer: units,
                ..*self
            };
            let total = t.param_count() * copies.max(1);
            let err = total.abs_diff(budget);
            if err < best.0 {
                best = (err, units);
            }
        }
        best.1
    }
}

/// Flat parameter vector in the layout documented at module level.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(topology: &Topology) -> Self {
        ParamVector(vec![0.0; topology.param_count()])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(topology: &Topology, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(topology.param_count());
    for (fan_in, fan_out) in topology.layer_dims() {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        for _ in 0..fan_out {
            for _ in 0..fan_in {
                values.push(dist.sample(&mut rng));
            }
            values.push(0.0);
        }
    }
    ParamVector(values)
}
