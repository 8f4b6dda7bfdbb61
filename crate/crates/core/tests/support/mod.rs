//! Independent oracles for sampler checks: exhaustive enumeration of the
//! allocation posterior on a depth-one tree and truncated-normal moments.
//! Everything here is computed from statrs special functions and plain
//! quadrature, not from the crate's own samplers or densities.

#![allow(dead_code)]

use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

/// Prior and data settings of a depth-one oracle problem.
#[derive(Debug, Clone, Copy)]
pub struct OracleProblem {
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
    pub mu0: f64,
    pub kappa0: f64,
    pub k: f64,
    pub lambda: f64,
    pub y: [f64; 2],
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Node 0 is the root, 1 the left child, 2 the right child.
fn cell(p: &OracleProblem, node: usize) -> (f64, f64) {
    match node {
        0 => (f64::NEG_INFINITY, f64::INFINITY),
        1 => (f64::NEG_INFINITY, p.mu0),
        _ => (p.mu0, f64::INFINITY),
    }
}

fn mass(lo: f64, hi: f64, m: f64, sd: f64) -> f64 {
    let n = std_normal();
    let a = if lo.is_finite() { n.cdf((lo - m) / sd) } else { 0.0 };
    let b = if hi.is_finite() { n.cdf((hi - m) / sd) } else { 1.0 };
    b - a
}

/// `log p(Y, mu in cell | omega)` with `mu ~ N(mu0, kappa0)` restricted to
/// the cell and renormalized.
fn ln_given_omega(p: &OracleProblem, ys: &[f64], node: usize, omega: f64) -> f64 {
    let n = ys.len() as f64;
    let sum: f64 = ys.iter().sum();
    let sumsq: f64 = ys.iter().map(|y| y * y).sum();
    let v_post = 1.0 / (n / omega + 1.0 / p.kappa0);
    let m_post = v_post * (sum / omega + p.mu0 / p.kappa0);
    let ln_z = -0.5 * n * (2.0 * std::f64::consts::PI * omega).ln() + 0.5 * (v_post / p.kappa0).ln()
        - 0.5 * (sumsq / omega + p.mu0 * p.mu0 / p.kappa0 - m_post * m_post / v_post);
    let (lo, hi) = cell(p, node);
    let post_mass = mass(lo, hi, m_post, v_post.sqrt());
    let prior_mass = mass(lo, hi, p.mu0, p.kappa0.sqrt());
    ln_z + post_mass.ln() - prior_mass.ln()
}

fn ln_inv_gamma(x: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Marginal likelihood of the observations at one node, integrating the
/// location analytically and the scale by Simpson's rule in `log omega`.
pub fn node_marginal(p: &OracleProblem, ys: &[f64], node: usize) -> f64 {
    if ys.is_empty() {
        return 1.0;
    }
    let s = if node == 0 { 0 } else { 1 };
    let b = p.lambda * 0.5f64.powi(s);
    let centre = (b / (p.k + 1.0)).ln();
    let (lo, hi) = (centre - 14.0, centre + 14.0);
    let steps = 40_000;
    let h = (hi - lo) / steps as f64;
    let f = |t: f64| {
        let omega = t.exp();
        (ln_inv_gamma(omega, p.k, b) + t + ln_given_omega(p, ys, node, omega)).exp()
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// Prior probability of an allocation configuration after integrating out
/// the stop and right variables.
pub fn allocation_prior(p: &OracleProblem, config: [usize; 2]) -> f64 {
    let (a, b) = (1.0 - p.delta, p.alpha + p.delta);
    let n0 = config.iter().filter(|&&c| c == 0).count() as f64;
    let nl = config.iter().filter(|&&c| c == 1).count() as f64;
    let nr = config.iter().filter(|&&c| c == 2).count() as f64;
    let stop = (ln_beta(a + n0, b + nl + nr) - ln_beta(a, b)).exp();
    let right = (ln_beta(p.beta + nr, p.beta + nl) - ln_beta(p.beta, p.beta)).exp();
    stop * right
}

/// Posterior probabilities of the nine configurations, indexed `3 a1 + a2`.
pub fn allocation_posterior(p: &OracleProblem) -> [f64; 9] {
    let mut out = [0.0; 9];
    for a1 in 0..3 {
        for a2 in 0..3 {
            let mut lik = 1.0;
            for node in 0..3 {
                let ys: Vec<f64> = [(a1, p.y[0]), (a2, p.y[1])]
                    .iter()
                    .filter(|(a, _)| *a == node)
                    .map(|&(_, y)| y)
                    .collect();
                lik *= node_marginal(p, &ys, node);
            }
            out[3 * a1 + a2] = allocation_prior(p, [a1, a2]) * lik;
        }
    }
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    out
}

/// Mean and variance of `N(m, v)` restricted to `(lo, hi)`.
pub fn truncated_normal_moments(m: f64, v: f64, lo: f64, hi: f64) -> (f64, f64) {
    let n = std_normal();
    let sd = v.sqrt();
    let a = (lo - m) / sd;
    let b = (hi - m) / sd;
    let (pa, ca) = if a.is_finite() { (n.pdf(a), n.cdf(a)) } else { (0.0, 0.0) };
    let (pb, cb) = if b.is_finite() { (n.pdf(b), n.cdf(b)) } else { (0.0, 1.0) };
    let z = cb - ca;
    let apa = if a.is_finite() { a * pa } else { 0.0 };
    let bpb = if b.is_finite() { b * pb } else { 0.0 };
    let mean = m + sd * (pa - pb) / z;
    let var = v * (1.0 + (apa - bpb) / z - ((pa - pb) / z).powi(2));
    (mean, var)
}

/// Sample mean and its naive standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Sample variance and the standard error of that estimate.
pub fn var_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (v, ((m4 - v * v) / n).sqrt())
}

/// Batch-means estimate of a chain average and its standard error.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    mean_se(&means)
}
