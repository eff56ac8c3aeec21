//! Full-memory BFGS with a strong-Wolfe line search.
//!
//! The inverse Hessian approximation is kept either as a dense matrix or
//! as the complete, never truncated, list of update pairs applied by the
//! two-loop recursion. Both represent the same matrix
//! `H_k = V_k^T H_{k-1} V_k + rho_k s_k s_k^T` started from `gamma * I`
//! with `gamma = s_1^T y_1 / y_1^T y_1`; the unrolled form is cheaper
//! whenever the iteration count stays well below the parameter count.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianStorage {
    /// Dense when `n <= 2 * max_iters`, unrolled otherwise.
    Auto,
    Dense,
    Unrolled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Infinity-norm gradient threshold.
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    /// Relative step threshold, `||s||_inf <= step_tol * max(1, ||x||_inf)`.
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
    #[serde(default = "default_c1")]
    pub wolfe_c1: f64,
    #[serde(default = "default_c2")]
    pub wolfe_c2: f64,
    /// Rescales the gradient entering the search direction to this norm.
    #[serde(default)]
    pub clip_alpha: Option<f64>,
    #[serde(default = "default_max_evals")]
    pub max_line_search_evals: usize,
    #[serde(default = "default_storage")]
    pub storage: HessianStorage,
}

fn default_grad_tol() -> f64 {
    1e-9
}
fn default_step_tol() -> f64 {
    1e-12
}
fn default_c1() -> f64 {
    1e-4
}
fn default_c2() -> f64 {
    0.9
}
fn default_max_evals() -> usize {
    25
}
fn default_storage() -> HessianStorage {
    HessianStorage::Auto
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iters: 1000,
            grad_tol: default_grad_tol(),
            step_tol: default_step_tol(),
            wolfe_c1: default_c1(),
            wolfe_c2: default_c2(),
            clip_alpha: None,
            max_line_search_evals: default_max_evals(),
            storage: default_storage(),
        }
    }
}

impl BfgsOptions {
    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1, got {} and {}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if let Some(a) = self.clip_alpha {
            if !(a > 0.0) {
                return Err(Error::InvalidArgument("clip_alpha must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    StepTol,
    MaxIters,
    LineSearchFail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub step_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptHistory {
    pub records: Vec<IterRecord>,
    pub termination: Termination,
    pub evaluations: usize,
}

impl OptHistory {
    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,loss,grad_norm,step_length\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e}\n",
                r.iter, r.loss, r.grad_norm, r.step_length
            ));
        }
        s
    }
}

/// Scales `g` in place to norm `alpha` if its Euclidean norm exceeds it.
pub fn clip(g: &mut [f64], alpha: f64) {
    let norm = norm2(g);
    if norm > alpha {
        let f = alpha / norm;
        g.iter_mut().for_each(|v| *v *= f);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

enum InverseHessian {
    Dense {
        n: usize,
        h: Vec<f64>,
        scaled: bool,
    },
    Unrolled {
        gamma: Option<f64>,
        pairs: Vec<(Vec<f64>, Vec<f64>, f64)>,
    },
}

impl InverseHessian {
    fn new(n: usize, storage: HessianStorage, max_iters: usize) -> Self {
        let dense = match storage {
            HessianStorage::Dense => true,
            HessianStorage::Unrolled => false,
            HessianStorage::Auto => n <= 2 * max_iters,
        };
        if dense {
            let mut h = vec![0.0; n * n];
            for i in 0..n {
                h[i * n + i] = 1.0;
            }
            InverseHessian::Dense { n, h, scaled: false }
        } else {
            InverseHessian::Unrolled {
                gamma: None,
                pairs: Vec::new(),
            }
        }
    }

    fn apply(&self, g: &[f64]) -> Vec<f64> {
        match self {
            InverseHessian::Dense { n, h, .. } => crate::exec::map_indices(*n, |i| dot(&h[i * n..(i + 1) * n], g)),
            InverseHessian::Unrolled { gamma, pairs } => {
                let mut q = g.to_vec();
                let mut alphas = vec![0.0; pairs.len()];
                for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
                    let a = rho * dot(s, &q);
                    alphas[k] = a;
                    q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
                }
                let g0 = gamma.unwrap_or(1.0);
                q.iter_mut().for_each(|v| *v *= g0);
                for (k, (s, y, rho)) in pairs.iter().enumerate() {
                    let b = rho * dot(y, &q);
                    let c = alphas[k] - b;
                    q.iter_mut().zip(s).for_each(|(qi, si)| *qi += c * si);
                }
                q
            }
        }
    }

    /// Returns false when the pair fails the curvature test and is skipped.
    fn update(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if !(sy > 1e-14 * norm2(&s) * yy.sqrt()) {
            return false;
        }
        let rho = 1.0 / sy;
        match self {
            InverseHessian::Dense { n, h, scaled } => {
                let n = *n;
                if !*scaled {
                    let gamma = sy / yy;
                    h.iter_mut().for_each(|v| *v *= gamma);
                    *scaled = true;
                }
                let hy: Vec<f64> = crate::exec::map_indices(n, |i| dot(&h[i * n..(i + 1) * n], &y));
                let yhy = dot(&y, &hy);
                let c = rho * rho * yhy + rho;
                // H+ = H - rho (s hy^T + hy s^T) + c s s^T
                #[cfg(feature = "parallel")]
                {
                    use rayon::prelude::*;
                    if crate::exec::current_exec() == crate::exec::Exec::Parallel {
                        h.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                            rank2_row(row, i, &s, &hy, rho, c);
                        });
                        return true;
                    }
                }
                for (i, row) in h.chunks_mut(n).enumerate() {
                    rank2_row(row, i, &s, &hy, rho, c);
                }
            }
            InverseHessian::Unrolled { gamma, pairs } => {
                if gamma.is_none() {
                    *gamma = Some(sy / yy);
                }
                pairs.push((s, y, rho));
            }
        }
        true
    }
}

fn rank2_row(row: &mut [f64], i: usize, s: &[f64], hy: &[f64], rho: f64, c: f64) {
    let si = s[i];
    let hyi = hy[i];
    for ((hij, &sj), &hyj) in row.iter_mut().zip(s).zip(hy) {
        *hij += -rho * (si * hyj + hyi * sj) + c * si * sj;
    }
}

struct Trial {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

/// Minimizes `objective` from `x0`. Non-finite values end the run with
/// [`Termination::LineSearchFail`] and the best point found so far; errors
/// raised by the objective itself are propagated.
pub fn minimize<F>(mut objective: F, x0: Vec<f64>, opts: &BfgsOptions) -> Result<(Vec<f64>, OptHistory)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    opts.validate()?;
    let n = x0.len();
    let mut evaluations = 1;
    let (mut f, mut g) = objective(&x0)?;
    let mut x = x0;
    let mut records = vec![IterRecord {
        iter: 0,
        loss: f,
        grad_norm: norm_inf(&g),
        step_length: 0.0,
    }];
    let finish = |x, records, termination, evaluations| {
        Ok((
            x,
            OptHistory {
                records,
                termination,
                evaluations,
            },
        ))
    };
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return finish(x, records, Termination::LineSearchFail, evaluations);
    }
    if norm_inf(&g) <= opts.grad_tol {
        return finish(x, records, Termination::GradTol, evaluations);
    }

    let mut hinv = InverseHessian::new(n, opts.storage, opts.max_iters);
    for iter in 1..=opts.max_iters {
        let mut gd = g.clone();
        if let Some(alpha) = opts.clip_alpha {
            clip(&mut gd, alpha);
        }
        let mut d: Vec<f64> = hinv.apply(&gd).into_iter().map(|v| -v).collect();
        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            // Lost descent through round-off: restart from steepest descent.
            hinv = InverseHessian::new(n, opts.storage, opts.max_iters);
            d = gd.iter().map(|v| -v).collect();
            dphi0 = dot(&g, &d);
            if !(dphi0 < 0.0) {
                return finish(x, records, Termination::LineSearchFail, evaluations);
            }
        }
        let alpha0 = if iter == 1 { (1.0 / norm2(&gd)).min(1.0) } else { 1.0 };
        let trial = line_search(&mut objective, &x, f, dphi0, &d, alpha0, opts, &mut evaluations)?;
        let Some(trial) = trial else {
            return finish(x, records, Termination::LineSearchFail, evaluations);
        };
        let s: Vec<f64> = trial.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = trial.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = norm_inf(&s);
        let xscale = norm_inf(&trial.x).max(1.0);
        x = trial.x;
        f = trial.f;
        g = trial.g;
        records.push(IterRecord {
            iter,
            loss: f,
            grad_norm: norm_inf(&g),
            step_length: trial.alpha * norm2(&d),
        });
        log::trace!("bfgs iter {iter}: loss {f:.6e} |g| {:.3e}", norm_inf(&g));
        if norm_inf(&g) <= opts.grad_tol {
            return finish(x, records, Termination::GradTol, evaluations);
        }
        if step <= opts.step_tol * xscale {
            return finish(x, records, Termination::StepTol, evaluations);
        }
        hinv.update(s, y);
    }
    finish(x, records, Termination::MaxIters, evaluations)
}

/// Strong-Wolfe line search (bracketing then zoom with safeguarded cubic
/// interpolation). Returns `None` when no acceptable point was found or the
/// objective produced non-finite values; in that case the caller keeps the
/// current point, which is the best so far.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    f0: f64,
    dphi0: f64,
    d: &[f64],
    alpha0: f64,
    opts: &BfgsOptions,
    evaluations: &mut usize,
) -> Result<Option<Trial>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let c1 = opts.wolfe_c1;
    let c2 = opts.wolfe_c2;
    let mut eval = |alpha: f64, evaluations: &mut usize| -> Result<Option<Trial>> {
        let xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        *evaluations += 1;
        let (ft, gt) = objective(&xt)?;
        if !ft.is_finite() || gt.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let dphi = dot(&gt, d);
        Ok(Some(Trial {
            alpha,
            x: xt,
            f: ft,
            g: gt,
            dphi,
        }))
    };

    // Approximate Wolfe conditions take over once function differences
    // drown in round-off and only the slope is informative.
    let f_noise = 1e-12 * f0.abs() + f64::MIN_POSITIVE;
    let approx_wolfe = |t: &Trial| t.f <= f0 + f_noise && t.dphi >= c2 * dphi0 && t.dphi <= (2.0 * c1 - 1.0) * dphi0;

    let mut budget = opts.max_line_search_evals;
    let mut prev_alpha = 0.0;
    let mut prev_f = f0;
    let mut prev_dphi = dphi0;
    let mut prev: Option<Trial> = None;
    let mut alpha = alpha0;

    let (mut lo, mut hi);
    loop {
        if budget == 0 {
            return Ok(None);
        }
        budget -= 1;
        let Some(t) = eval(alpha, evaluations)? else {
            // Non-finite: shrink toward the last good point.
            alpha = 0.5 * (prev_alpha + alpha);
            if alpha - prev_alpha < 1e-20 {
                return Ok(None);
            }
            continue;
        };
        if approx_wolfe(&t) {
            return Ok(Some(t));
        }
        if t.f > f0 + c1 * alpha * dphi0 || (prev.is_some() && t.f >= prev_f) {
            lo = (prev_alpha, prev_f, prev_dphi, prev);
            hi = (t.alpha, t.f, t.dphi);
            break;
        }
        if t.dphi.abs() <= -c2 * dphi0 {
            return Ok(Some(t));
        }
        if t.dphi >= 0.0 {
            hi = (prev_alpha, prev_f, prev_dphi);
            lo = (t.alpha, t.f, t.dphi, Some(t));
            break;
        }
        prev_alpha = t.alpha;
        prev_f = t.f;
        prev_dphi = t.dphi;
        alpha = 2.0 * t.alpha;
        prev = Some(t);
    }

    // zoom
    loop {
        let (a_lo, f_lo, d_lo) = (lo.0, lo.1, lo.2);
        let (a_hi, f_hi, d_hi) = hi;
        if budget == 0 || (a_hi - a_lo).abs() < 1e-16 * a_lo.abs().max(1e-10) {
            // Accept the best sufficient-decrease point, if any.
            return Ok(lo.3.filter(|t| t.f < f0));
        }
        budget -= 1;
        let alpha = cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi);
        let Some(t) = eval(alpha, evaluations)? else {
            hi = (alpha, f64::INFINITY, 0.0);
            continue;
        };
        if approx_wolfe(&t) {
            return Ok(Some(t));
        }
        if t.f > f0 + c1 * t.alpha * dphi0 || t.f >= f_lo {
            hi = (t.alpha, t.f, t.dphi);
        } else {
            if t.dphi.abs() <= -c2 * dphi0 {
                return Ok(Some(t));
            }
            if t.dphi * (a_hi - a_lo) >= 0.0 {
                hi = (a_lo, f_lo, d_lo);
            }
            lo = (t.alpha, t.f, t.dphi, Some(t));
        }
    }
}

/// Minimizer of the cubic through two points with slopes, safeguarded to
/// the interior of the bracket.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let width = hi - lo;
    let bisect = 0.5 * (a + b);
    if !fb.is_finite() {
        return bisect;
    }
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return bisect;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = db - da + 2.0 * d2;
    if denom == 0.0 {
        return bisect;
    }
    let t = b - (b - a) * (db + d2 - d1) / denom;
    if !t.is_finite() || t < lo + 0.1 * width || t > hi - 0.1 * width {
        bisect
    } else {
        t
    }
}
