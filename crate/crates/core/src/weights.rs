//! Multiscale stick-breaking weights.
//!
//! Every node `(s, h)` carries a stop variable `S` and (above the truncation
//! depth) a right-branch variable `R`. Mass arriving at a node stops there with
//! probability `S`; the remainder is split between the right child (fraction
//! `R`) and the left child (fraction `1 - R`). Under the Pitman–Yor style law
//!
//! ```text
//! S(s,h) ~ Beta(1 - delta, alpha + delta (s + 1)),   R(s,h) ~ Beta(beta, beta)
//! ```
//!
//! the tree of weights sums to one almost surely. Truncation at depth `s'`
//! forces `S = 1` on the deepest scale, so a truncated tree is normalized by
//! construction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random;
use crate::tree::{self, NodeId};

/// Deepest truncation supported by the dense weight storage.
pub const MAX_DENSE_DEPTH: u32 = 24;

/// Stop tolerance on the truncation error of [`expected_scale`].
pub const EXPECTED_SCALE_TOL: f64 = 1e-8;

/// Number of series terms after which [`expected_scale`] stops even if the
/// tolerance was not reached. For `delta >= 1/2` the series diverges and the
/// value is the partial sum at this depth.
pub const EXPECTED_SCALE_HORIZON: u32 = 50_000;

/// Hyperparameters of the stick-breaking law plus the truncation depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsbHyper {
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
    pub max_depth: u32,
}

impl MsbHyper {
    pub fn new(alpha: f64, delta: f64, beta: f64, max_depth: u32) -> Result<Self> {
        let h = MsbHyper {
            alpha,
            delta,
            beta,
            max_depth,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: self.delta,
                reason: "must lie in [0, 1)",
            });
        }
        if !(self.alpha > -self.delta) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: self.alpha,
                reason: "must be finite and exceed -delta",
            });
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: self.beta,
                reason: "must be positive",
            });
        }
        if self.max_depth > MAX_DENSE_DEPTH {
            return Err(Error::InvalidParameter {
                name: "max_depth",
                value: self.max_depth as f64,
                reason: "exceeds the supported truncation depth",
            });
        }
        Ok(())
    }

    /// Beta parameters of the stop variable at scale `s`.
    #[inline]
    pub fn stop_params(&self, s: u32) -> (f64, f64) {
        (1.0 - self.delta, self.alpha + self.delta * (s as f64 + 1.0))
    }

    /// Beta parameters of the right-branch variable.
    #[inline]
    pub fn right_params(&self) -> (f64, f64) {
        (self.beta, self.beta)
    }
}

/// Stop and right-branch variables on a tree truncated at `max_depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct StickVars {
    max_depth: u32,
    stop: Vec<f64>,
    right: Vec<f64>,
}

impl StickVars {
    /// Builds sticks from dense breadth-first arrays. `stop` must cover every
    /// node up to `max_depth` and equal 1 on the deepest scale; `right` covers
    /// the nodes above it. Values must lie in `[0, 1]`.
    pub fn from_values(max_depth: u32, stop: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        let n_stop = tree::node_count(max_depth);
        let n_right = (1usize << max_depth) - 1;
        if stop.len() != n_stop {
            return Err(Error::LengthMismatch {
                left: stop.len(),
                right: n_stop,
            });
        }
        if right.len() != n_right {
            return Err(Error::LengthMismatch {
                left: right.len(),
                right: n_right,
            });
        }
        let in_unit = |v: &f64| (0.0..=1.0).contains(v);
        if !stop.iter().all(in_unit) || !right.iter().all(in_unit) {
            return Err(Error::InvalidConfig(
                "stick values must lie in [0, 1]".into(),
            ));
        }
        if stop[n_right..].iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidConfig(
                "stop variables at the truncation depth must equal 1".into(),
            ));
        }
        Ok(StickVars {
            max_depth,
            stop,
            right,
        })
    }

    #[inline]
    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    #[inline]
    pub fn stop(&self, node: NodeId) -> f64 {
        self.stop[node.flat_index()]
    }

    /// Right-branch variable; `None` on the deepest scale.
    #[inline]
    pub fn right(&self, node: NodeId) -> Option<f64> {
        self.right.get(node.flat_index()).copied()
    }

    pub fn stop_values(&self) -> &[f64] {
        &self.stop
    }

    pub fn right_values(&self) -> &[f64] {
        &self.right
    }
}

/// Per-node weights of a truncated tree.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTree {
    max_depth: u32,
    pi: Vec<f64>,
    scale_totals: Vec<f64>,
}

impl WeightTree {
    /// Wraps raw breadth-first weights (used for convex combinations and tests).
    pub fn from_values(max_depth: u32, pi: Vec<f64>) -> Result<Self> {
        let n = tree::node_count(max_depth);
        if pi.len() != n {
            return Err(Error::LengthMismatch {
                left: pi.len(),
                right: n,
            });
        }
        if pi.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidConfig("weights must be nonnegative".into()));
        }
        let scale_totals = (0..=max_depth)
            .map(|s| {
                let start = (1usize << s) - 1;
                pi[start..start + (1usize << s)].iter().sum()
            })
            .collect();
        Ok(WeightTree {
            max_depth,
            pi,
            scale_totals,
        })
    }

    #[inline]
    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    #[inline]
    pub fn weight(&self, node: NodeId) -> f64 {
        self.pi[node.flat_index()]
    }

    /// Total mass on scale `s`.
    #[inline]
    pub fn scale_total(&self, s: u32) -> f64 {
        self.scale_totals[s as usize]
    }

    pub fn scale_totals(&self) -> &[f64] {
        &self.scale_totals
    }

    /// Within-scale weight `pi(s,h) / pi_s`; zero when the scale is empty.
    pub fn normalized(&self, node: NodeId) -> f64 {
        let t = self.scale_total(node.scale());
        if t > 0.0 {
            self.weight(node) / t
        } else {
            0.0
        }
    }

    /// Weights of scale `s` as a slice, `h = 1..=2^s`.
    pub fn scale_slice(&self, s: u32) -> &[f64] {
        let start = (1usize << s) - 1;
        &self.pi[start..start + (1usize << s)]
    }

    pub fn values(&self) -> &[f64] {
        &self.pi
    }

    pub fn total(&self) -> f64 {
        self.pi.iter().sum()
    }

    /// `sum_s s * pi_s`.
    pub fn mean_scale(&self) -> f64 {
        self.scale_totals
            .iter()
            .enumerate()
            .map(|(s, &t)| s as f64 * t)
            .sum()
    }
}

/// Draws sticks from an arbitrary per-node Beta law. `law(node)` returns the
/// `(a, b)` pair for the stop variable and the `(c, d)` pair for the right
/// variable. Stop variables at the truncation depth are forced to 1.
pub fn sample_sticks_with<R, F>(max_depth: u32, mut law: F, rng: &mut R) -> Result<StickVars>
where
    R: Rng + ?Sized,
    F: FnMut(NodeId) -> ((f64, f64), (f64, f64)),
{
    let n = tree::node_count(max_depth);
    let n_inner = (1usize << max_depth) - 1;
    let mut stop = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n_inner);
    for node in tree::nodes(max_depth) {
        if node.scale() == max_depth {
            stop.push(1.0);
            continue;
        }
        let ((a, b), (c, d)) = law(node);
        stop.push(random::beta(a, b, rng)?);
        right.push(random::beta(c, d, rng)?);
    }
    Ok(StickVars {
        max_depth,
        stop,
        right,
    })
}

/// Prior draw of the sticks under `hyper`.
pub fn sample_prior_sticks<R: Rng + ?Sized>(hyper: &MsbHyper, rng: &mut R) -> Result<StickVars> {
    hyper.validate()?;
    sample_sticks_with(
        hyper.max_depth,
        |node| (hyper.stop_params(node.scale()), hyper.right_params()),
        rng,
    )
}

/// Weights implied by the sticks, computed root to leaves while carrying the
/// unbroken remainder of the stick into each node.
pub fn compute_weights(sticks: &StickVars) -> WeightTree {
    let d = sticks.max_depth;
    let n = tree::node_count(d);
    let n_inner = (1usize << d) - 1;
    let mut pi = vec![0.0; n];
    // remaining stick entering each node
    let mut remaining = vec![0.0; n];
    remaining[0] = 1.0;
    for i in 0..n {
        let rem = remaining[i];
        let s = sticks.stop[i];
        pi[i] = rem * s;
        if i < n_inner {
            let pass = rem * (1.0 - s);
            let r = sticks.right[i];
            // children of flat index i are 2i + 1 (left) and 2i + 2 (right)
            remaining[2 * i + 1] = pass * (1.0 - r);
            remaining[2 * i + 2] = pass * r;
        }
    }
    WeightTree::from_values(d, pi).expect("weights from valid sticks are nonnegative")
}

/// Prior mean of a single node weight at scale `s` (untruncated):
/// `((1 - delta) / (alpha + 1)) 2^-s prod_{l=1..s} (alpha + delta l) / (alpha + delta l + 1)`.
pub fn expected_node_weight(hyper: &MsbHyper, s: u32) -> f64 {
    expected_scale_total(hyper, s) * 0.5f64.powi(s as i32)
}

/// Prior mean of the scale total `pi_s = sum_h pi(s,h)` (untruncated).
pub fn expected_scale_total(hyper: &MsbHyper, s: u32) -> f64 {
    let (a, d) = (hyper.alpha, hyper.delta);
    (1..=s).fold((1.0 - d) / (a + 1.0), |acc, l| {
        let x = a + d * l as f64;
        acc * x / (x + 1.0)
    })
}

/// Prior expected scale `sum_s s E(pi_s)` of the untruncated process.
///
/// The series converges only for `delta < 1/2`. In that regime summation
/// stops once the exact tail
///
/// ```text
/// sum_{s > N} s E(pi_s) = (N + 1) r_N + r_N (alpha + delta (N + 2)) / (1 - 2 delta)
/// ```
///
/// drops below [`EXPECTED_SCALE_TOL`], where `r_N = 1 - sum_{s <= N} E(pi_s)`
/// is the expected residual mass; if the horizon is reached first the tail is
/// added in. For `delta >= 1/2` the value is the partial sum through scale
/// [`EXPECTED_SCALE_HORIZON`].
pub fn expected_scale(hyper: &MsbHyper) -> f64 {
    let (a, d) = (hyper.alpha, hyper.delta);
    let convergent = d < 0.5;
    let mut w = (1.0 - d) / (a + 1.0);
    let mut residual = 1.0 - w;
    let mut sum = 0.0;
    let mut tail = f64::INFINITY;
    for s in 1..=EXPECTED_SCALE_HORIZON {
        let sf = s as f64;
        let x = a + d * sf;
        w *= x / (x + 1.0);
        sum += sf * w;
        // r_s = r_{s-1} (alpha + delta (s + 1)) / (alpha + 1 + delta s)
        residual *= (a + d * (sf + 1.0)) / (a + 1.0 + d * sf);
        if convergent {
            tail = (sf + 1.0) * residual + residual * (a + d * (sf + 2.0)) / (1.0 - 2.0 * d);
            if tail < EXPECTED_SCALE_TOL {
                return sum;
            }
        }
    }
    if convergent {
        sum + tail
    } else {
        sum
    }
}

/// Prior mean of `sum_s s pi_s` on the tree truncated at `hyper.max_depth`
/// (mass below the truncation depth piles up on the deepest scale).
pub fn expected_scale_truncated(hyper: &MsbHyper) -> f64 {
    let (a, d) = (hyper.alpha, hyper.delta);
    let mut residual = 1.0;
    let mut sum = 0.0;
    for s in 0..hyper.max_depth {
        let sf = s as f64;
        residual *= (a + d * (sf + 1.0)) / (a + 1.0 + d * sf);
        sum += residual;
    }
    sum
}

/// Upper end of the calibration bracket.
const ALPHA_MAX: f64 = 1e6;

/// Finds `alpha` with `expected_scale(alpha, delta) == target_scale` by
/// bisection on `(-delta, alpha_hi]`, to absolute tolerance `1e-6`.
pub fn calibrate_alpha(delta: f64, target_scale: f64) -> Result<f64> {
    let fail = |reason: String| Error::Calibration {
        delta,
        target: target_scale,
        reason,
    };
    if !(0.0..1.0).contains(&delta) {
        return Err(fail("delta must lie in [0, 1)".into()));
    }
    if !(target_scale > 0.0) || !target_scale.is_finite() {
        return Err(fail("target expected scale must be positive".into()));
    }
    let f = |alpha: f64| {
        expected_scale(&MsbHyper {
            alpha,
            delta,
            beta: 1.0,
            max_depth: 0,
        })
    };
    // expected_scale -> 0 as alpha -> -delta
    let mut lo = -delta;
    let mut hi = (target_scale + 1.0).clamp(1.0, ALPHA_MAX);
    let mut f_hi = f(hi);
    while f_hi <= target_scale {
        if hi >= ALPHA_MAX {
            return Err(fail(format!(
                "expected scale only reaches {f_hi} at alpha = {hi}"
            )));
        }
        lo = hi;
        hi = (hi * 2.0).min(ALPHA_MAX);
        f_hi = f(hi);
    }
    let f_probe = if lo > -delta { f(lo) } else { f(lo + 1e-9) };
    if !(f_probe < f_hi) {
        return Err(fail(format!(
            "expected scale is not increasing on [{lo}, {hi}]"
        )));
    }
    if f_probe > target_scale {
        return Err(fail(format!(
            "target below the attainable range (minimum {f_probe})"
        )));
    }
    for _ in 0..200 {
        if hi - lo <= 1e-9 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < target_scale {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One draw of the residual mass `1 - sum_{s <= depth} pi_s` of an
/// untruncated prior tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualMass {
    /// Exact residual of the expanded part of the tree plus, for every pruned
    /// subtree, its entering mass times the survival along one random path.
    /// Unbiased for the residual of the realized tree; exact when nothing is
    /// pruned.
    pub value: f64,
    /// Mass entering subtrees that were followed along a single path.
    pub pruned: f64,
    pub nodes_visited: usize,
}

/// Default pruning threshold of [`residual_mass`].
pub const RESIDUAL_PRUNE: f64 = 1e-3;

/// Residual mass below `depth` for one prior draw without the truncation floor.
///
/// Sticks are drawn lazily depth-first. A subtree whose entering mass falls
/// below `prune` is not expanded: a single path is followed instead, branching
/// right with probability `R` at each node, and the subtree contributes its
/// entering mass times the product of `1 - S` along that path.
pub fn residual_mass<R: Rng + ?Sized>(
    hyper: &MsbHyper,
    depth: u32,
    prune: f64,
    rng: &mut R,
) -> Result<ResidualMass> {
    residual_mass_with(hyper, depth, prune, |_| None, rng)
}

/// As [`residual_mass`], with `forced_stop(node)` overriding the stop variable
/// at chosen nodes.
pub fn residual_mass_with<R, F>(
    hyper: &MsbHyper,
    depth: u32,
    prune: f64,
    mut forced_stop: F,
    rng: &mut R,
) -> Result<ResidualMass>
where
    R: Rng + ?Sized,
    F: FnMut(NodeId) -> Option<f64>,
{
    hyper.validate()?;
    let (c, d) = hyper.right_params();
    let mut stop_at = |node: NodeId, rng: &mut R| -> Result<f64> {
        match forced_stop(node) {
            Some(v) => Ok(v),
            None => {
                let (a, b) = hyper.stop_params(node.scale());
                random::beta(a, b, rng)
            }
        }
    };
    let mut stack = vec![(NodeId::ROOT, 1.0f64)];
    let mut residual = 0.0;
    let mut pruned = 0.0;
    let mut visited = 0usize;
    while let Some((node, mass)) = stack.pop() {
        visited += 1;
        let pass = mass * (1.0 - stop_at(node, rng)?);
        if node.scale() == depth {
            residual += pass;
            continue;
        }
        if pass == 0.0 {
            continue;
        }
        let r = random::beta(c, d, rng)?;
        let (left, right) = node.children()?;
        for (child, m) in [(right, pass * r), (left, pass * (1.0 - r))] {
            if m >= prune {
                stack.push((child, m));
                continue;
            }
            pruned += m;
            let mut at = child;
            let mut survive = m;
            loop {
                visited += 1;
                survive *= 1.0 - stop_at(at, rng)?;
                if at.scale() == depth || survive == 0.0 {
                    break;
                }
                let r = random::beta(c, d, rng)?;
                let (l, rt) = at.children()?;
                at = if random::uniform_open(rng) < r { rt } else { l };
            }
            residual += survive;
        }
    }
    Ok(ResidualMass {
        value: residual,
        pruned,
        nodes_visited: visited,
    })
}
