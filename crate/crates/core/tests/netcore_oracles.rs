//! Netcore checked against a straightforward per-unit loop implementation
//! and against central finite differences.

use microelast::netcore::{init_params, Activation, JacobianBatch, Network, Point, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain nested-loop forward pass, written independently of the GEMM kernel.
fn oracle_forward(t: &Topology, p: &[f64], x: Point) -> Vec<f64> {
    let mut h = x.to_vec();
    let mut off = 0;
    let dims = t.layer_dims();
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let mut next = Vec::with_capacity(fan_out);
        for r in 0..fan_out {
            let row = &p[off + r * (fan_in + 1)..off + (r + 1) * (fan_in + 1)];
            let mut z = row[fan_in];
            for c in 0..fan_in {
                z += row[c] * h[c];
            }
            let out = if l + 1 == dims.len() {
                z
            } else {
                match t.activation {
                    Activation::Swish => z / (1.0 + (-t.beta * z).exp()),
                    Activation::Sigmoid => 1.0 / (1.0 + (-t.beta * z).exp()),
                    Activation::Tanh => z.tanh(),
                    Activation::Identity => z,
                }
            };
            next.push(out);
        }
        off += (fan_in + 1) * fan_out;
        h = next;
    }
    h
}

fn random_points(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect()
}

#[test]
fn forward_matches_loop_oracle() {
    for act in [Activation::Swish, Activation::Sigmoid, Activation::Tanh] {
        let t = Topology::field(4, 16).with_activation(act);
        let net = Network::new(t).unwrap();
        let p = init_params(&t, 5);
        let x = [0.3, -0.7];
        let y = net.forward(&p, x).unwrap();
        let oracle = oracle_forward(&t, &p, x);
        for (a, b) in y.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{act:?}: {a} vs {b}");
        }
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let t = Topology::field(4, 32);
    let net = Network::new(t).unwrap();
    let p = init_params(&t, 9);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for x in random_points(10, 1) {
        let s = net.forward_with_jacobian(&p, x).unwrap();
        for d in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[d] += h;
            xm[d] -= h;
            let yp = oracle_forward(&t, &p, xp);
            let ym = oracle_forward(&t, &p, xm);
            for k in 0..5 {
                let fd = (yp[k] - ym[k]) / (2.0 * h);
                let exact = s.dy_dx[k][d];
                let rel = (exact - fd).abs() / exact.abs().max(1e-3);
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst <= 1e-6, "worst relative Jacobian error {worst}");
}

/// A loss touching outputs, input derivatives and products of both, with
/// a global squared-sum term that couples all points.
fn mixed_loss(batch: &JacobianBatch) -> (f64, JacobianBatch) {
    let n = batch.len();
    let mut adj = JacobianBatch::zeros(n, batch.out_dim(), true);
    let mut loss = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        let y = batch.values(i);
        let g0 = batch.grad(i, 0);
        let g2 = batch.grad(i, 2);
        let r = g0[0] + g2[1] - y[1] * y[3];
        loss += r * r / n as f64;
        let c = 2.0 * r / n as f64;
        adj.grad_mut(i, 0)[0] += c;
        adj.grad_mut(i, 2)[1] += c;
        adj.values_mut(i)[1] -= c * y[3];
        adj.values_mut(i)[3] -= c * y[1];
        total += y[4] * g0[1];
    }
    loss += total * total;
    for i in 0..n {
        let y4 = batch.values(i)[4];
        let g01 = batch.grad(i, 0)[1];
        adj.values_mut(i)[4] += 2.0 * total * g01;
        adj.grad_mut(i, 0)[1] += 2.0 * total * y4;
    }
    (loss, adj)
}

#[test]
fn gradient_matches_directional_differences() {
    let t = Topology::field(3, 12);
    let net = Network::new(t).unwrap();
    let p = init_params(&t, 21);
    // more than one GEMM block and one reduction group
    let pts = random_points(600, 2);
    let (_, grad) = net.loss_gradient(&p, &pts, true, |b| Ok(mixed_loss(b))).unwrap();
    let eval = |q: &[f64]| {
        let b = net.evaluate_batch(q, &pts, true).unwrap();
        mixed_loss(&b).0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let h = 1e-6;
    for _ in 0..10 {
        let v: Vec<f64> = (0..p.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let plus: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
        let exact: f64 = grad.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rel = (exact - fd).abs() / exact.abs().max(1e-12);
        assert!(rel <= 1e-5, "directional derivative {exact} vs {fd} (rel {rel})");
    }
}

#[test]
fn gradient_is_exact_for_every_activation() {
    for act in [Activation::Swish, Activation::Sigmoid, Activation::Tanh] {
        let t = Topology::field(2, 7).with_activation(act);
        let net = Network::new(t).unwrap();
        let p = init_params(&t, 4);
        let pts = random_points(20, 3);
        let (_, grad) = net.loss_gradient(&p, &pts, true, |b| Ok(mixed_loss(b))).unwrap();
        let h = 1e-6;
        for idx in [0usize, 5, p.len() / 2, p.len() - 1] {
            let mut a = p.clone();
            let mut b = p.clone();
            a[idx] += h;
            b[idx] -= h;
            let fa = mixed_loss(&net.evaluate_batch(&a, &pts, true).unwrap()).0;
            let fb = mixed_loss(&net.evaluate_batch(&b, &pts, true).unwrap()).0;
            let fd = (fa - fb) / (2.0 * h);
            assert!(
                (fd - grad[idx]).abs() <= 1e-5 * grad[idx].abs().max(1e-6),
                "{act:?} param {idx}: {} vs {fd}",
                grad[idx]
            );
        }
    }
}

#[test]
fn zero_net_squared_output_has_zero_gradient() {
    let t = Topology::new(5, 1, 4, Activation::Identity).unwrap();
    let net = Network::new(t).unwrap();
    let p = vec![0.0; t.param_count()];
    let (loss, grad) = net
        .loss_gradient(&p, &[[0.4, 0.2]], false, |b| {
            let mut adj = JacobianBatch::zeros(1, 5, false);
            let y = b.values(0).to_vec();
            for k in 0..5 {
                adj.values_mut(0)[k] = 2.0 * y[k];
            }
            Ok((y.iter().map(|v| v * v).sum(), adj))
        })
        .unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|&g| g == 0.0));
}

#[test]
fn loss_is_bitwise_reproducible() {
    let t = Topology::field(3, 20);
    let net = Network::new(t).unwrap();
    let p = init_params(&t, 8);
    let pts = random_points(1500, 5);
    let a = net.loss_gradient(&p, &pts, true, |b| Ok(mixed_loss(b))).unwrap();
    let b = net.loss_gradient(&p, &pts, true, |b| Ok(mixed_loss(b))).unwrap();
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert!(a.1.iter().zip(&b.1).all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest::proptest! {
    #![proptest_config(proptest::test_runner::Config::with_cases(32))]

    #[test]
    fn param_count_formula(n_layers in 0usize..6, units in 1usize..40, out in 1usize..6) {
        let t = Topology::new(out, n_layers, units, Activation::Swish).unwrap();
        let expected = if n_layers == 0 {
            3 * out
        } else {
            3 * units + (n_layers - 1) * (units + 1) * units + (units + 1) * out
        };
        proptest::prop_assert_eq!(t.param_count(), expected);
        proptest::prop_assert_eq!(init_params(&t, 0).len(), expected);
    }
}
