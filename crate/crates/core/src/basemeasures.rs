//! Base measures for the kernel parameters.
//!
//! Locations: `G0 = N(mu0, kappa0)` together with its dyadic quantile
//! partition. The node `(s, h)` owns the cell `[q((h-1)/2^s), q(h/2^s)]` and its
//! location is drawn from `G0` restricted to that cell, so every scale splits
//! the real line into `2^s` cells of equal `G0` mass.
//!
//! Scales: `omega(s,h) = c(s) W(s,h)` with `W ~ IGa(k, lambda)` and the decay
//! `c(s) = 2^-s`, i.e. `omega(s,h) ~ IGa(k, 2^-s lambda)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss;
use crate::random;
use crate::tree::{self, NodeId};
use crate::weights::{self, MsbHyper};

/// Gaussian location base measure `N(mu0, kappa0)` (`kappa0` is a variance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationBase {
    pub mu0: f64,
    pub kappa0: f64,
}

impl Default for LocationBase {
    fn default() -> Self {
        LocationBase {
            mu0: 0.0,
            kappa0: 1.0,
        }
    }
}

impl LocationBase {
    pub fn new(mu0: f64, kappa0: f64) -> Result<Self> {
        let b = LocationBase { mu0, kappa0 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu0.is_finite() {
            return Err(Error::InvalidParameter {
                name: "mu0",
                value: self.mu0,
                reason: "must be finite",
            });
        }
        if !(self.kappa0 > 0.0 && self.kappa0.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "kappa0",
                value: self.kappa0,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    fn sd(&self) -> f64 {
        self.kappa0.sqrt()
    }

    /// Quantile of `G0` at level `num / 2^s`, computed from the nearer tail.
    fn dyadic_quantile(&self, num: u64, s: u32) -> f64 {
        let den = (s as f64).exp2();
        if num == 0 {
            f64::NEG_INFINITY
        } else if (num as f64) >= den {
            f64::INFINITY
        } else if 2 * (num as u128) <= (1u128 << s) {
            self.mu0 + self.sd() * gauss::quantile(num as f64 / den)
        } else {
            let upper = ((1u128 << s) - num as u128) as f64 / den;
            self.mu0 + self.sd() * gauss::sf_inverse(upper)
        }
    }

    /// `G0` probability of the interval.
    pub fn mass(&self, cell: PartitionCell) -> f64 {
        let a = (cell.lo - self.mu0) / self.sd();
        let b = (cell.hi - self.mu0) / self.sd();
        if a >= 0.0 {
            gauss::sf(a) - gauss::sf(b)
        } else {
            gauss::cdf(b) - gauss::cdf(a)
        }
    }
}

/// A closed interval with possibly infinite ends. Used both for the quantile
/// cells of the partition and for test sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionCell {
    pub lo: f64,
    pub hi: f64,
}

impl PartitionCell {
    pub const REAL_LINE: PartitionCell = PartitionCell {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || !(lo < hi) {
            return Err(Error::InvalidConfig(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(PartitionCell { lo, hi })
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    #[inline]
    pub fn contains_strictly(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }
}

/// Inverse-gamma scale base measure `IGa(k, lambda)`: density proportional to
/// `x^(-k-1) exp(-lambda / x)`, mean `lambda / (k - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBase {
    pub k: f64,
    pub lambda: f64,
}

impl Default for ScaleBase {
    fn default() -> Self {
        ScaleBase {
            k: 64.0,
            lambda: 64.0,
        }
    }
}

impl ScaleBase {
    pub fn new(k: f64, lambda: f64) -> Result<Self> {
        let b = ScaleBase { k, lambda };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 1.0 && self.k.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "k",
                value: self.k,
                reason: "inverse-gamma shape must exceed 1 for a finite mean",
            });
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: self.lambda,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    /// Prior mean of `omega` at scale `s`.
    pub fn mean_at(&self, s: u32) -> f64 {
        scale_decay(s) * self.lambda / (self.k - 1.0)
    }
}

/// Quantile cell of `node` under the location base measure.
pub fn cell(base: &LocationBase, node: NodeId) -> PartitionCell {
    let s = node.scale();
    let h = node.index();
    PartitionCell {
        lo: base.dyadic_quantile(h - 1, s),
        hi: base.dyadic_quantile(h, s),
    }
}

/// Location draw from `G0` truncated to the node's cell.
pub fn sample_location<R: Rng + ?Sized>(base: &LocationBase, node: NodeId, rng: &mut R) -> Result<f64> {
    let c = cell(base, node);
    random::truncated_normal(base.mu0, base.kappa0, c.lo, c.hi, rng).map_err(|e| Error::NodeSampling {
        s: node.scale(),
        h: node.index(),
        source: Box::new(e),
    })
}

/// Deterministic scale decay `c(s) = 2^-s`.
#[inline]
pub fn scale_decay(s: u32) -> f64 {
    (-(s as f64)).exp2()
}

/// `omega = c(s) W` with `W ~ IGa(k, lambda)` for an arbitrary decay `c`.
pub fn sample_scale_with<R, F>(base: &ScaleBase, s: u32, decay: F, rng: &mut R) -> Result<f64>
where
    R: Rng + ?Sized,
    F: Fn(u32) -> f64,
{
    Ok(decay(s) * random::inverse_gamma(base.k, base.lambda, rng)?)
}

/// `omega ~ IGa(k, 2^-s lambda)`.
pub fn sample_scale<R: Rng + ?Sized>(base: &ScaleBase, s: u32, rng: &mut R) -> Result<f64> {
    random::inverse_gamma(base.k, base.lambda * scale_decay(s), rng)
}

/// Monte Carlo estimate of `E[G(A)]` for the random measure
/// `G = sum pi(s,h) delta_{mu(s,h)}` on the truncated tree, with its standard
/// error. Weights and locations are drawn jointly from the prior.
pub fn verify_centering<R: Rng + ?Sized>(
    base: &LocationBase,
    hyper: &MsbHyper,
    set: PartitionCell,
    n_draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n_draws < 100 {
        return Err(Error::InvalidConfig(format!(
            "verify_centering needs at least 100 draws, got {n_draws}"
        )));
    }
    let nodes: Vec<NodeId> = tree::nodes(hyper.max_depth).collect();
    let mut values = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let w = weights::compute_weights(&weights::sample_prior_sticks(hyper, rng)?);
        let mut g = 0.0;
        for &node in &nodes {
            let mu = sample_location(base, node, rng)?;
            if set.contains(mu) {
                g += w.weight(node);
            }
        }
        values.push(g);
    }
    let n = n_draws as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
