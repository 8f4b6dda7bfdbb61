//! Density evaluation on grids, posterior summaries and discrepancy metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{Chain, GroupTrace, KernelTree, log_sum_exp};
use crate::weights::WeightTree;

/// Floor applied to both densities inside the logarithm of the KL divergence.
pub const KL_FLOOR: f64 = 1e-12;

/// Number of points of the default output grid.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Strictly increasing evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("a grid needs at least two points"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGrid("grid points must be finite"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid("grid points must be strictly increasing"));
        }
        Ok(Grid { points })
    }

    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(lo < hi) {
            return Err(Error::InvalidGrid("uniform grid needs lo < hi and n >= 2"));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut pts: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
        pts[n - 1] = hi;
        Grid::new(pts)
    }

    /// `n` points on `[min - range/2, max + range/2]`.
    pub fn around_data(data: &[f64], n: usize) -> Result<Self> {
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo < hi) {
            return Err(Error::InvalidGrid("data must contain two distinct values"));
        }
        let pad = 0.5 * (hi - lo);
        Grid::uniform(lo - pad, hi + pad, n)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Image of the grid under `x -> (x - m) / sd`.
    pub fn affine(&self, m: f64, sd: f64) -> Result<Self> {
        Grid::new(self.points.iter().map(|x| (x - m) / sd).collect())
    }
}

/// Trapezoid rule for values sampled on `grid`.
pub fn trapezoid(values: &[f64], grid: &Grid) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: grid.len(),
        });
    }
    let x = grid.points();
    Ok((1..x.len())
        .map(|i| 0.5 * (values[i] + values[i - 1]) * (x[i] - x[i - 1]))
        .sum())
}

struct Components {
    mu: Vec<f64>,
    coef: Vec<f64>,
    half_prec: Vec<f64>,
}

fn components(weights: &WeightTree, kernels: &KernelTree) -> Components {
    let mut c = Components {
        mu: Vec::new(),
        coef: Vec::new(),
        half_prec: Vec::new(),
    };
    for (i, &w) in weights.values().iter().enumerate() {
        if w > 0.0 {
            let omega = kernels.omega_values()[i];
            c.mu.push(kernels.mu_values()[i]);
            c.coef.push(w / (2.0 * std::f64::consts::PI * omega).sqrt());
            c.half_prec.push(0.5 / omega);
        }
    }
    c
}

impl Components {
    #[inline]
    fn at(&self, x: f64) -> f64 {
        let mut f = 0.0;
        for j in 0..self.mu.len() {
            let z = x - self.mu[j];
            f += self.coef[j] * (-z * z * self.half_prec[j]).exp();
        }
        f
    }
}

/// `f(x) = sum pi(s,h) N(x; mu(s,h), omega(s,h))` at a single point.
pub fn eval_at(weights: &WeightTree, kernels: &KernelTree, x: f64) -> f64 {
    components(weights, kernels).at(x)
}

/// Mixture density on every grid point.
pub fn eval_density(weights: &WeightTree, kernels: &KernelTree, grid: &Grid) -> Vec<f64> {
    let c = components(weights, kernels);
    grid.points().iter().map(|&x| c.at(x)).collect()
}

/// Pointwise mean and equal-tailed band of the retained densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub grid: Grid,
    pub mean: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
    pub lpml: f64,
    pub mean_scale: f64,
}

/// Sample quantile with linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise `(mean, lower, upper)` of a sweeps-by-points matrix at `level`.
pub fn pointwise_bands(rows: &[Vec<f64>], level: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no retained sweeps to summarize".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter {
            name: "level",
            value: level,
            reason: "must lie in (0, 1)",
        });
    }
    let m = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::LengthMismatch { left: r.len(), right: m });
    }
    let t = rows.len() as f64;
    let tail = 0.5 * (1.0 - level);
    let mut mean = Vec::with_capacity(m);
    let mut lo = Vec::with_capacity(m);
    let mut hi = Vec::with_capacity(m);
    let mut col = vec![0.0; rows.len()];
    for j in 0..m {
        for (c, r) in col.iter_mut().zip(rows) {
            *c = r[j];
        }
        mean.push(col.iter().sum::<f64>() / t);
        col.sort_by(|a, b| a.total_cmp(b));
        lo.push(quantile_sorted(&col, tail).min(mean[j]));
        hi.push(quantile_sorted(&col, 1.0 - tail).max(mean[j]));
    }
    Ok((mean, lo, hi))
}

/// Posterior summary of one group's trace on the grid it was recorded on.
pub fn summarize(trace: &GroupTrace, grid: &Grid, level: f64) -> Result<PosteriorSummary> {
    if trace.densities.first().map(Vec::len) != Some(grid.len()) {
        return Err(Error::InvalidConfig("trace holds no densities on this grid".into()));
    }
    let (mean, band_lo, band_hi) = pointwise_bands(&trace.densities, level)?;
    Ok(PosteriorSummary {
        grid: grid.clone(),
        mean,
        band_lo,
        band_hi,
        lpml: lpml(&trace.likelihoods)?,
        mean_scale: mean_of(&trace.mean_scale_weights)?,
    })
}

/// `integral |f - g|` by the trapezoid rule.
pub fn l1_distance(f: &[f64], g: &[f64], grid: &Grid) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch {
            left: f.len(),
            right: g.len(),
        });
    }
    let diff: Vec<f64> = f.iter().zip(g).map(|(a, b)| (a - b).abs()).collect();
    trapezoid(&diff, grid)
}

/// `integral f_true log(f_true / f_est)` with `0 log 0 = 0`. Both densities
/// are floored at [`KL_FLOOR`] inside the logarithm.
pub fn kl_divergence(f_true: &[f64], f_est: &[f64], grid: &Grid) -> Result<f64> {
    if f_true.len() != f_est.len() {
        return Err(Error::LengthMismatch {
            left: f_true.len(),
            right: f_est.len(),
        });
    }
    if let Some(&v) = f_true.iter().find(|&&v| !(v >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "f_true",
            value: v,
            reason: "true density must be nonnegative",
        });
    }
    let integrand: Vec<f64> = f_true
        .iter()
        .zip(f_est)
        .map(|(&p, &q)| if p > 0.0 { p * (p.max(KL_FLOOR) / q.max(KL_FLOOR)).ln() } else { 0.0 })
        .collect();
    trapezoid(&integrand, grid)
}

/// Log pseudo-marginal likelihood `sum_i log CPO_i`, where `CPO_i` is the
/// harmonic mean over sweeps of `f_t(y_i)`. Rows are sweeps.
pub fn lpml(likelihoods: &[Vec<f64>]) -> Result<f64> {
    let t = likelihoods.len();
    if t == 0 {
        return Err(Error::InvalidConfig("no sweeps for LPML".into()));
    }
    let n = likelihoods[0].len();
    let ln_t = (t as f64).ln();
    let mut total = 0.0;
    let mut col = vec![0.0; t];
    for i in 0..n {
        for (sweep, row) in likelihoods.iter().enumerate() {
            let f = *row.get(i).ok_or(Error::LengthMismatch { left: row.len(), right: n })?;
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::NonPositiveLikelihood { sweep, obs: i, value: f });
            }
            col[sweep] = -f.ln();
        }
        total += ln_t - log_sum_exp(&col);
    }
    Ok(total)
}

fn mean_of(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InvalidConfig("empty chain".into()));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Average over retained sweeps of `sum_s s pi_s` for the first group.
pub fn posterior_mean_scale(chain: &Chain) -> Result<f64> {
    mean_of(&chain.trace().mean_scale_weights)
}

/// Average over retained sweeps of the mean allocated scale.
pub fn posterior_mean_scale_alloc(chain: &Chain) -> Result<f64> {
    mean_of(&chain.trace().mean_scale_alloc)
}
