use super::{Activation, Topology};
use crate::exec;
use crate::{Error, Result};

pub type Point = [f64; 2];

/// Points per GEMM block.
const CHUNK: usize = 64;
/// Blocks accumulated into one partial gradient before the ordered reduction.
const GROUP: usize = 8;

/// Affine map from physical coordinates to the network's input coordinates,
/// `x_in = (x - center) / half_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputMap {
    pub center: Point,
    pub half_width: Point,
}

impl InputMap {
    pub const IDENTITY: InputMap = InputMap {
        center: [0.0, 0.0],
        half_width: [1.0, 1.0],
    };

    pub fn new(center: Point, half_width: Point) -> Self {
        InputMap { center, half_width }
    }
}

impl Default for InputMap {
    fn default() -> Self {
        InputMap::IDENTITY
    }
}

/// Outputs and their derivatives with respect to the physical input
/// coordinates at a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianSample {
    pub x: Point,
    pub y: Vec<f64>,
    /// `dy_dx[k] = [dy_k/dx, dy_k/dy]`.
    pub dy_dx: Vec<[f64; 2]>,
}

/// Outputs (and optionally input Jacobians) for a batch of points, stored
/// point-major. The same layout carries loss adjoints back into
/// [`Network::backprop_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBatch {
    out_dim: usize,
    values: Vec<f64>,
    jac: Option<Vec<f64>>,
}

impl JacobianBatch {
    pub fn zeros(n: usize, out_dim: usize, with_jacobian: bool) -> Self {
        JacobianBatch {
            out_dim,
            values: vec![0.0; n * out_dim],
            jac: with_jacobian.then(|| vec![0.0; n * out_dim * 2]),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.out_dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn has_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    pub fn values(&self, point: usize) -> &[f64] {
        &self.values[point * self.out_dim..(point + 1) * self.out_dim]
    }

    pub fn values_mut(&mut self, point: usize) -> &mut [f64] {
        &mut self.values[point * self.out_dim..(point + 1) * self.out_dim]
    }

    /// `[dy_k/dx, dy_k/dy]` of output `k` at `point`.
    pub fn grad(&self, point: usize, k: usize) -> [f64; 2] {
        match &self.jac {
            Some(j) => {
                let i = (point * self.out_dim + k) * 2;
                [j[i], j[i + 1]]
            }
            None => [0.0, 0.0],
        }
    }

    /// Panics if the batch was created without Jacobian storage.
    pub fn grad_mut(&mut self, point: usize, k: usize) -> &mut [f64] {
        let i = (point * self.out_dim + k) * 2;
        let jac = self.jac.as_mut().expect("batch was created without Jacobian storage");
        &mut jac[i..i + 2]
    }

    pub fn sample(&self, point: usize, x: Point) -> JacobianSample {
        JacobianSample {
            x,
            y: self.values(point).to_vec(),
            dy_dx: (0..self.out_dim).map(|k| self.grad(point, k)).collect(),
        }
    }

    fn concat(parts: Vec<JacobianBatch>, out_dim: usize, with_jacobian: bool) -> Self {
        let mut out = JacobianBatch {
            out_dim,
            values: Vec::new(),
            jac: with_jacobian.then(Vec::new),
        };
        for p in parts {
            out.values.extend_from_slice(&p.values);
            if let (Some(dst), Some(src)) = (out.jac.as_mut(), p.jac.as_ref()) {
                dst.extend_from_slice(src);
            }
        }
        out
    }

    fn slice(&self, start: usize, len: usize) -> JacobianBatch {
        let d = self.out_dim;
        JacobianBatch {
            out_dim: d,
            values: self.values[start * d..(start + len) * d].to_vec(),
            jac: self
                .jac
                .as_ref()
                .map(|j| j[start * d * 2..(start + len) * d * 2].to_vec()),
        }
    }
}

/// A dense network bound to an input map. Parameters are passed per call so
/// one `Network` can evaluate any number of parameter vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    topology: Topology,
    input_map: InputMap,
    /// `(fan_in, fan_out, offset)` per affine layer.
    layers: Vec<(usize, usize, usize)>,
}

/// Per-block activations kept for the reverse sweep. Matrices are row-major
/// `(units, streams * m)`: the first `m` columns hold values, the next `m`
/// the x-tangents, the last `m` the y-tangents.
struct Cache {
    m: usize,
    streams: usize,
    /// Input to every affine layer.
    h: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    z: Vec<Vec<f64>>,
    /// Output pre-activations (the outputs themselves).
    y: Vec<f64>,
}

impl Network {
    pub fn new(topology: Topology) -> Result<Self> {
        Self::with_input_map(topology, InputMap::IDENTITY)
    }

    pub fn with_input_map(topology: Topology, input_map: InputMap) -> Result<Self> {
        topology.validate()?;
        if input_map.half_width.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("input map half width must be positive".into()));
        }
        let mut layers = Vec::new();
        let mut off = 0;
        for (fan_in, fan_out) in topology.layer_dims() {
            layers.push((fan_in, fan_out, off));
            off += (fan_in + 1) * fan_out;
        }
        Ok(Network {
            topology,
            input_map,
            layers,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn input_map(&self) -> &InputMap {
        &self.input_map
    }

    pub fn param_count(&self) -> usize {
        self.topology.param_count()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(Error::ParamLength {
                expected,
                got: params.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], x: Point) -> Result<Vec<f64>> {
        let batch = self.evaluate_batch(params, &[x], false)?;
        Ok(batch.values(0).to_vec())
    }

    pub fn forward_with_jacobian(&self, params: &[f64], x: Point) -> Result<JacobianSample> {
        let batch = self.evaluate_batch(params, &[x], true)?;
        Ok(batch.sample(0, x))
    }

    /// Evaluates outputs, and input Jacobians when `with_jacobian`, at every
    /// point.
    pub fn evaluate_batch(&self, params: &[f64], points: &[Point], with_jacobian: bool) -> Result<JacobianBatch> {
        self.check_params(params)?;
        let parts = exec::map_chunks(points, CHUNK, |_, block| {
            let cache = self.forward_block(params, block, with_jacobian)?;
            Ok(self.extract(&cache))
        });
        let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(JacobianBatch::concat(parts, self.topology.output_dim, with_jacobian))
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// partial derivatives with respect to the batch outputs (and their
    /// input Jacobians) are given in `adjoint`.
    pub fn backprop_batch(
        &self,
        params: &[f64],
        points: &[Point],
        adjoint: &JacobianBatch,
        grad: &mut [f64],
    ) -> Result<()> {
        self.check_params(params)?;
        if grad.len() != params.len() {
            return Err(Error::ParamLength {
                expected: params.len(),
                got: grad.len(),
            });
        }
        if adjoint.len() != points.len() || adjoint.out_dim() != self.topology.output_dim {
            return Err(Error::InvalidArgument(format!(
                "adjoint batch is {}x{}, expected {}x{}",
                adjoint.len(),
                adjoint.out_dim(),
                points.len(),
                self.topology.output_dim
            )));
        }
        let with_jacobian = adjoint.has_jacobian();
        let n = self.param_count();
        let partials = exec::map_chunks(points, CHUNK * GROUP, |start, group| {
            let mut g = vec![0.0; n];
            for (i, block) in group.chunks(CHUNK).enumerate() {
                let s = start + i * CHUNK;
                let cache = self.forward_block(params, block, with_jacobian)?;
                let adj = adjoint.slice(s, block.len());
                self.backward_block(params, &cache, &adj, &mut g);
            }
            Ok(g)
        });
        for partial in partials {
            let partial: Vec<f64> = partial?;
            for (a, b) in grad.iter_mut().zip(&partial) {
                *a += b;
            }
        }
        Ok(())
    }

    /// Loss value and exact parameter gradient. `head` maps the evaluated
    /// batch to the loss value and its adjoint batch; only adjoints of
    /// outputs and first input derivatives can be expressed, and a head that
    /// returns Jacobian adjoints for a batch evaluated without Jacobians is
    /// rejected before any gradient is formed.
    pub fn loss_gradient<F>(
        &self,
        params: &[f64],
        points: &[Point],
        with_jacobian: bool,
        head: F,
    ) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(&JacobianBatch) -> Result<(f64, JacobianBatch)>,
    {
        let batch = self.evaluate_batch(params, points, with_jacobian)?;
        let (loss, adjoint) = head(&batch)?;
        if adjoint.has_jacobian() && !with_jacobian {
            return Err(Error::InvalidArgument(
                "loss depends on input derivatives that were not evaluated".into(),
            ));
        }
        let mut grad = vec![0.0; params.len()];
        self.backprop_batch(params, points, &adjoint, &mut grad)?;
        Ok((loss, grad))
    }

    fn forward_block(&self, params: &[f64], block: &[Point], tangents: bool) -> Result<Cache> {
        let m = block.len();
        let streams = if tangents { 3 } else { 1 };
        let ncol = streams * m;
        let map = &self.input_map;

        let mut h0 = vec![0.0; 2 * ncol];
        for (j, p) in block.iter().enumerate() {
            for r in 0..2 {
                let v = (p[r] - map.center[r]) / map.half_width[r];
                if !v.is_finite() {
                    return Err(Error::NonFinite { layer: 0 });
                }
                h0[r * ncol + j] = v;
            }
        }
        if tangents {
            for r in 0..2 {
                let inv = 1.0 / map.half_width[r];
                let row = &mut h0[r * ncol..(r + 1) * ncol];
                row[(r + 1) * m..(r + 2) * m].fill(inv);
            }
        }

        let act = self.topology.activation;
        let beta = self.topology.beta;
        let n_hidden = self.topology.n_layers;
        let mut hs = Vec::with_capacity(n_hidden + 1);
        let mut zs = Vec::with_capacity(n_hidden);
        hs.push(h0);

        for (l, &(fan_in, fan_out, off)) in self.layers.iter().enumerate() {
            let w = &params[off..off + (fan_in + 1) * fan_out];
            let h = hs.last().expect("input layer present");
            let mut z = vec![0.0; fan_out * ncol];
            // SAFETY: all pointers index into buffers sized from the same
            // (fan_out, fan_in, ncol) dimensions and strides used below.
            unsafe {
                matrixmultiply::dgemm(
                    fan_out,
                    fan_in,
                    ncol,
                    1.0,
                    w.as_ptr(),
                    (fan_in + 1) as isize,
                    1,
                    h.as_ptr(),
                    ncol as isize,
                    1,
                    0.0,
                    z.as_mut_ptr(),
                    ncol as isize,
                    1,
                );
            }
            for r in 0..fan_out {
                let b = w[r * (fan_in + 1) + fan_in];
                for v in &mut z[r * ncol..r * ncol + m] {
                    *v += b;
                }
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: l + 1 });
            }
            if l == n_hidden {
                return Ok(Cache {
                    m,
                    streams,
                    h: hs,
                    z: zs,
                    y: z,
                });
            }
            let mut hn = vec![0.0; fan_out * ncol];
            for r in 0..fan_out {
                let zr = &z[r * ncol..(r + 1) * ncol];
                let hr = &mut hn[r * ncol..(r + 1) * ncol];
                for j in 0..m {
                    let (f, d1, _) = act.eval(zr[j], beta);
                    hr[j] = f;
                    for s in 1..streams {
                        hr[s * m + j] = d1 * zr[s * m + j];
                    }
                }
            }
            zs.push(z);
            hs.push(hn);
        }
        unreachable!("output layer always present")
    }

    fn extract(&self, cache: &Cache) -> JacobianBatch {
        let m = cache.m;
        let ncol = cache.streams * m;
        let out = self.topology.output_dim;
        let mut batch = JacobianBatch::zeros(m, out, cache.streams == 3);
        for k in 0..out {
            let row = &cache.y[k * ncol..(k + 1) * ncol];
            for j in 0..m {
                batch.values[j * out + k] = row[j];
            }
            if let Some(jac) = batch.jac.as_mut() {
                for j in 0..m {
                    let i = (j * out + k) * 2;
                    jac[i] = row[m + j];
                    jac[i + 1] = row[2 * m + j];
                }
            }
        }
        batch
    }

    fn backward_block(&self, params: &[f64], cache: &Cache, adj: &JacobianBatch, grad: &mut [f64]) {
        let m = cache.m;
        let streams = cache.streams;
        let ncol = streams * m;
        let out = self.topology.output_dim;
        let act = self.topology.activation;
        let beta = self.topology.beta;

        let mut zbar = vec![0.0; out * ncol];
        for k in 0..out {
            let row = &mut zbar[k * ncol..(k + 1) * ncol];
            for j in 0..m {
                row[j] = adj.values[j * out + k];
            }
            if streams == 3 {
                if let Some(jac) = adj.jac.as_ref() {
                    for j in 0..m {
                        let i = (j * out + k) * 2;
                        row[m + j] = jac[i];
                        row[2 * m + j] = jac[i + 1];
                    }
                }
            }
        }

        for (l, &(fan_in, fan_out, off)) in self.layers.iter().enumerate().rev() {
            let w = &params[off..off + (fan_in + 1) * fan_out];
            let gw = &mut grad[off..off + (fan_in + 1) * fan_out];
            let h = &cache.h[l];
            // SAFETY: see forward_block; the weight-gradient block shares the
            // weight matrix's row stride.
            unsafe {
                matrixmultiply::dgemm(
                    fan_out,
                    ncol,
                    fan_in,
                    1.0,
                    zbar.as_ptr(),
                    ncol as isize,
                    1,
                    h.as_ptr(),
                    1,
                    ncol as isize,
                    1.0,
                    gw.as_mut_ptr(),
                    (fan_in + 1) as isize,
                    1,
                );
            }
            for r in 0..fan_out {
                let s: f64 = zbar[r * ncol..r * ncol + m].iter().sum();
                gw[r * (fan_in + 1) + fan_in] += s;
            }
            if l == 0 {
                break;
            }
            let mut hbar = vec![0.0; fan_in * ncol];
            // SAFETY: as above, with the weight matrix read transposed.
            unsafe {
                matrixmultiply::dgemm(
                    fan_in,
                    fan_out,
                    ncol,
                    1.0,
                    w.as_ptr(),
                    1,
                    (fan_in + 1) as isize,
                    zbar.as_ptr(),
                    ncol as isize,
                    1,
                    0.0,
                    hbar.as_mut_ptr(),
                    ncol as isize,
                    1,
                );
            }
            let z = &cache.z[l - 1];
            let mut next = vec![0.0; fan_in * ncol];
            for r in 0..fan_in {
                let zr = &z[r * ncol..(r + 1) * ncol];
                let hb = &hbar[r * ncol..(r + 1) * ncol];
                let nb = &mut next[r * ncol..(r + 1) * ncol];
                for j in 0..m {
                    let (_, d1, d2) = act.eval(zr[j], beta);
                    let mut v = d1 * hb[j];
                    for s in 1..streams {
                        v += d2 * zr[s * m + j] * hb[s * m + j];
                        nb[s * m + j] = d1 * hb[s * m + j];
                    }
                    nb[j] = v;
                }
            }
            zbar = next;
        }
    }
}

impl Activation {
    /// Convenience for callers that only need the value.
    pub fn apply(self, z: f64, beta: f64) -> f64 {
        self.eval(z, beta).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::init_params;

    #[test]
    fn zero_weights_give_zero_outputs_and_jacobian() {
        let t = Topology::field(2, 6);
        let net = Network::new(t).unwrap();
        let p = vec![0.0; t.param_count()];
        let s = net.forward_with_jacobian(&p, [0.3, -0.2]).unwrap();
        assert!(s.y.iter().all(|&v| v == 0.0));
        assert!(s.dy_dx.iter().all(|g| g[0] == 0.0 && g[1] == 0.0));
    }

    #[test]
    fn affine_network_is_exact() {
        let t = Topology::new(3, 0, 0, Activation::Identity).unwrap();
        let net = Network::new(t).unwrap();
        // rows: [w_x, w_y, b]
        let p = vec![1.0, 2.0, 0.5, -3.0, 0.25, 1.0, 0.0, -1.0, -2.0];
        let x = [0.7, -1.3];
        let s = net.forward_with_jacobian(&p, x).unwrap();
        for k in 0..3 {
            let row = &p[k * 3..k * 3 + 3];
            assert_eq!(s.y[k], row[0] * x[0] + row[1] * x[1] + row[2]);
            assert_eq!(s.dy_dx[k], [row[0], row[1]]);
        }
    }

    #[test]
    fn input_map_scales_jacobian() {
        let t = Topology::new(1, 0, 0, Activation::Identity).unwrap();
        let net = Network::with_input_map(t, InputMap::new([1.0, -1.0], [0.5, 2.0])).unwrap();
        let p = vec![1.0, 1.0, 0.0];
        let s = net.forward_with_jacobian(&p, [1.5, 1.0]).unwrap();
        assert!((s.y[0] - (1.0 + 1.0)).abs() < 1e-15);
        assert_eq!(s.dy_dx[0], [2.0, 0.5]);
    }

    #[test]
    fn sum_of_outputs_gives_unit_bias_gradient() {
        let t = Topology::new(4, 0, 0, Activation::Identity).unwrap();
        let net = Network::new(t).unwrap();
        let p = init_params(&t, 3);
        let (_, g) = net
            .loss_gradient(&p, &[[0.2, 0.1]], false, |b| {
                let mut adj = JacobianBatch::zeros(b.len(), b.out_dim(), false);
                adj.values_mut(0).fill(1.0);
                Ok((b.values(0).iter().sum(), adj))
            })
            .unwrap();
        for k in 0..4 {
            assert_eq!(g[k * 3 + 2], 1.0);
        }
    }

    #[test]
    fn rejects_jacobian_adjoint_without_jacobian() {
        let t = Topology::field(1, 3);
        let net = Network::new(t).unwrap();
        let p = init_params(&t, 0);
        let r = net.loss_gradient(&p, &[[0.0, 0.0]], false, |b| {
            Ok((0.0, JacobianBatch::zeros(b.len(), b.out_dim(), true)))
        });
        assert!(r.is_err());
    }

    #[test]
    fn non_finite_input_reports_layer() {
        let t = Topology::field(1, 3);
        let net = Network::new(t).unwrap();
        let p = init_params(&t, 0);
        match net.forward(&p, [f64::NAN, 0.0]) {
            Err(Error::NonFinite { layer }) => assert_eq!(layer, 0),
            other => panic!("unexpected {other:?}"),
        }
        let mut big = p.clone();
        big[0] = 1e308;
        match net.forward(&big, [1e10, 0.0]) {
            Err(Error::NonFinite { layer }) => assert_eq!(layer, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_param_length_is_rejected() {
        let net = Network::new(Topology::field(1, 3)).unwrap();
        assert!(matches!(
            net.forward(&[0.0; 3], [0.0, 0.0]),
            Err(Error::ParamLength { .. })
        ));
    }

    #[test]
    fn batch_matches_single_point() {
        let t = Topology::field(3, 9);
        let net = Network::new(t).unwrap();
        let p = init_params(&t, 11);
        let pts: Vec<Point> = (0..150)
            .map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let batch = net.evaluate_batch(&p, &pts, true).unwrap();
        for &i in &[0usize, 63, 64, 149] {
            let s = net.forward_with_jacobian(&p, pts[i]).unwrap();
            for k in 0..5 {
                assert!((s.y[k] - batch.values(i)[k]).abs() < 1e-14);
                let g = batch.grad(i, k);
                assert!((s.dy_dx[k][0] - g[0]).abs() < 1e-14);
                assert!((s.dy_dx[k][1] - g[1]).abs() < 1e-14);
            }
        }
    }
}
