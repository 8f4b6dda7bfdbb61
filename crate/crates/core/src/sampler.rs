//! Slice-augmented Gibbs sampler for the multiscale mixture.
//!
//! One sweep performs, in order:
//!
//! 1. `u_i ~ Unif(0, pi_{s_i})` for every observation;
//! 2. `(s_i, h_i)` drawn from its conditional given `u_i`, first the scale among
//!    those with `pi_s >= u_i`, then the node within the scale;
//! 3. node counts `v`, `n`, `r` from the allocations;
//! 4. stop and right variables from their Beta conditionals, then the weights;
//! 5. locations from truncated-normal conditionals;
//! 6. scales from inverse-gamma conditionals.
//!
//! The grouped model keeps one stick tree per group and a single shared
//! kernel tree. A plain fit is the grouped engine with one group.

use serde::{Deserialize, Serialize};

use crate::basemeasures::{self, LocationBase, ScaleBase};
use crate::density::{self, Grid};
use crate::error::{Error, Result};
use crate::gauss;
use crate::random::{self, RandomSource};
use crate::tree::{self, NodeId};
use crate::weights::{self, MsbHyper, StickVars, WeightTree};

/// Prior hyperparameters of the full model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hyper: MsbHyper,
    pub location: LocationBase,
    pub scale: ScaleBase,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.location.validate()?;
        self.scale.validate()
    }
}

/// Kernel locations and scales for every node of the truncated tree.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTree {
    max_depth: u32,
    mu: Vec<f64>,
    omega: Vec<f64>,
}

impl KernelTree {
    pub fn from_values(max_depth: u32, mu: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        let n = tree::node_count(max_depth);
        for len in [mu.len(), omega.len()] {
            if len != n {
                return Err(Error::LengthMismatch { left: len, right: n });
            }
        }
        if omega.iter().any(|&w| !(w > 0.0 && w.is_finite())) || mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidConfig("kernel parameters must be finite with positive scales".into()));
        }
        Ok(KernelTree { max_depth, mu, omega })
    }

    pub fn sample_prior(spec: &ModelSpec, rng: &mut RandomSource) -> Result<Self> {
        let d = spec.hyper.max_depth;
        let mut mu = Vec::with_capacity(tree::node_count(d));
        let mut omega = Vec::with_capacity(tree::node_count(d));
        for node in tree::nodes(d) {
            mu.push(basemeasures::sample_location(&spec.location, node, rng)?);
            omega.push(basemeasures::sample_scale(&spec.scale, node.scale(), rng)?);
        }
        Ok(KernelTree { max_depth: d, mu, omega })
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    #[inline]
    pub fn mu(&self, node: NodeId) -> f64 {
        self.mu[node.flat_index()]
    }

    #[inline]
    pub fn omega(&self, node: NodeId) -> f64 {
        self.omega[node.flat_index()]
    }

    pub fn mu_values(&self) -> &[f64] {
        &self.mu
    }

    pub fn omega_values(&self) -> &[f64] {
        &self.omega
    }

    #[inline]
    fn ln_kernel(&self, idx: usize, y: f64) -> f64 {
        gauss::ln_pdf(y, self.mu[idx], self.omega[idx])
    }
}

/// Node and slice variable of every observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    nodes: Vec<NodeId>,
    slices: Vec<f64>,
}

impl Allocation {
    pub fn new(nodes: Vec<NodeId>, slices: Vec<f64>) -> Result<Self> {
        if nodes.len() != slices.len() {
            return Err(Error::LengthMismatch {
                left: nodes.len(),
                right: slices.len(),
            });
        }
        Ok(Allocation { nodes, slices })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn slices(&self) -> &[f64] {
        &self.slices
    }
}

/// Per-node counts: `v` passing through, `n` stopping, `r` continuing right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeCounts {
    max_depth: u32,
    v: Vec<u64>,
    n: Vec<u64>,
    r: Vec<u64>,
}

impl NodeCounts {
    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    #[inline]
    pub fn v(&self, node: NodeId) -> u64 {
        self.v[node.flat_index()]
    }

    #[inline]
    pub fn n(&self, node: NodeId) -> u64 {
        self.n[node.flat_index()]
    }

    #[inline]
    pub fn r(&self, node: NodeId) -> u64 {
        self.r[node.flat_index()]
    }

    /// Number of observations counted.
    pub fn total(&self) -> u64 {
        self.v[0]
    }

    /// Number of nodes with at least one observation stopping there.
    pub fn occupied(&self) -> usize {
        self.n.iter().filter(|&&c| c > 0).count()
    }

    /// Verifies `v = n + v_left + v_right`, `r = v_right`, `n + r <= v`.
    pub fn check(&self) -> Result<()> {
        let inner = (1usize << self.max_depth) - 1;
        for i in 0..self.v.len() {
            let below = if i < inner { self.v[2 * i + 1] + self.v[2 * i + 2] } else { 0 };
            let right = if i < inner { self.v[2 * i + 2] } else { 0 };
            if self.v[i] != self.n[i] + below || self.r[i] != right || self.n[i] + self.r[i] > self.v[i] {
                return Err(Error::Inconsistent(format!(
                    "count recursion fails at node {}",
                    NodeId::from_flat_index(i)
                )));
            }
        }
        let stopped: u64 = self.n.iter().sum();
        if stopped != self.v[0] {
            return Err(Error::Inconsistent("stop counts do not add up to the root count".into()));
        }
        Ok(())
    }
}

/// Counts from allocated nodes by one upward pass.
pub fn accumulate_counts<I>(nodes: I, max_depth: u32) -> Result<NodeCounts>
where
    I: IntoIterator<Item = NodeId>,
{
    let len = tree::node_count(max_depth);
    let inner = (1usize << max_depth) - 1;
    let mut n = vec![0u64; len];
    for node in nodes {
        if node.scale() > max_depth {
            return Err(Error::Inconsistent(format!(
                "node {node} lies below the truncation depth {max_depth}"
            )));
        }
        n[node.flat_index()] += 1;
    }
    let mut v = n.clone();
    let mut r = vec![0u64; len];
    for i in (0..inner).rev() {
        v[i] += v[2 * i + 1] + v[2 * i + 2];
        r[i] = v[2 * i + 2];
    }
    Ok(NodeCounts { max_depth, v, n, r })
}

/// Draws `(s, h)` for one observation given its slice variable. Only scales
/// with `pi_s >= u` are eligible.
pub fn allocate_one(
    y: f64,
    u: f64,
    weights: &WeightTree,
    kernels: &KernelTree,
    rng: &mut RandomSource,
) -> Result<NodeId> {
    let d = weights.max_depth();
    let mut scale_ln = Vec::with_capacity(d as usize + 1);
    let mut node_ln: Vec<Vec<f64>> = Vec::with_capacity(d as usize + 1);
    for s in 0..=d {
        let total = weights.scale_total(s);
        if !(total >= u && total > 0.0) {
            scale_ln.push(f64::NEG_INFINITY);
            node_ln.push(Vec::new());
            continue;
        }
        let ln_total = total.ln();
        let start = (1usize << s) - 1;
        let terms: Vec<f64> = weights
            .scale_slice(s)
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                if w > 0.0 {
                    w.ln() - ln_total + kernels.ln_kernel(start + j, y)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        scale_ln.push(log_sum_exp(&terms));
        node_ln.push(terms);
    }
    let s = random::categorical_ln(&scale_ln, rng)
        .ok_or_else(|| Error::Inconsistent(format!("no scale passes the slice u = {u}")))?;
    let j = random::categorical_ln(&node_ln[s], rng)
        .ok_or_else(|| Error::Inconsistent(format!("scale {s} has no node with positive weight")))?;
    NodeId::new(s as u32, j as u64 + 1)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Redraws every slice variable `u_i ~ Unif(0, pi_{s_i})` in place.
/// `weights_of(i)` returns the weight tree governing observation `i`.
pub fn refresh_slice<'w, F>(alloc: &mut Allocation, weights_of: F, rng: &mut RandomSource) -> Result<()>
where
    F: Fn(usize) -> &'w WeightTree,
{
    for i in 0..alloc.nodes.len() {
        let s = alloc.nodes[i].scale();
        let p = weights_of(i).scale_total(s);
        if !(p > 0.0) {
            return Err(Error::Inconsistent(format!(
                "observation {i} sits on scale {s} which has zero weight"
            )));
        }
        alloc.slices[i] = p * random::uniform_open(rng);
    }
    Ok(())
}

/// Stick conditionals given the counts.
pub fn update_sticks(counts: &NodeCounts, hyper: &MsbHyper, rng: &mut RandomSource) -> Result<StickVars> {
    if counts.max_depth != hyper.max_depth {
        return Err(Error::Inconsistent(format!(
            "counts have depth {} but the prior has depth {}",
            counts.max_depth, hyper.max_depth
        )));
    }
    weights::sample_sticks_with(
        hyper.max_depth,
        |node| {
            let (a, b) = hyper.stop_params(node.scale());
            let (c, d) = hyper.right_params();
            let v = counts.v(node) as f64;
            let n = counts.n(node) as f64;
            let r = counts.r(node) as f64;
            ((a + n, b + v - n), (c + r, d + v - n - r))
        },
        rng,
    )
}

/// Location conditionals: `N(m, var)` restricted to the node's cell with
/// `m = (mu0 omega + n ybar kappa0) / (n kappa0 + omega)` and
/// `var = omega kappa0 / (n kappa0 + omega)`.
pub fn update_locations(
    data: &[f64],
    alloc: &Allocation,
    kernels: &mut KernelTree,
    spec: &ModelSpec,
    rng: &mut RandomSource,
) -> Result<()> {
    let len = kernels.mu.len();
    let mut count = vec![0.0; len];
    let mut sum = vec![0.0; len];
    for (y, node) in data.iter().zip(&alloc.nodes) {
        let i = node.flat_index();
        count[i] += 1.0;
        sum[i] += y;
    }
    let LocationBase { mu0, kappa0 } = spec.location;
    for i in 0..len {
        let node = NodeId::from_flat_index(i);
        if count[i] == 0.0 {
            kernels.mu[i] = basemeasures::sample_location(&spec.location, node, rng)?;
            continue;
        }
        let omega = kernels.omega[i];
        let denom = count[i] * kappa0 + omega;
        let mean = (mu0 * omega + sum[i] * kappa0) / denom;
        let var = omega * kappa0 / denom;
        let c = basemeasures::cell(&spec.location, node);
        kernels.mu[i] = random::truncated_normal(mean, var, c.lo, c.hi, rng).map_err(|e| Error::NodeSampling {
            s: node.scale(),
            h: node.index(),
            source: Box::new(e),
        })?;
    }
    Ok(())
}

/// Scale conditionals `IGa(k + n/2, 2^-s lambda + sum (y - mu)^2 / 2)`.
pub fn update_scales(
    data: &[f64],
    alloc: &Allocation,
    kernels: &mut KernelTree,
    spec: &ModelSpec,
    rng: &mut RandomSource,
) -> Result<()> {
    let len = kernels.omega.len();
    let mut count = vec![0.0; len];
    let mut ss = vec![0.0; len];
    for (y, node) in data.iter().zip(&alloc.nodes) {
        let i = node.flat_index();
        count[i] += 1.0;
        ss[i] += (y - kernels.mu[i]).powi(2);
    }
    let ScaleBase { k, lambda } = spec.scale;
    for i in 0..len {
        let s = NodeId::from_flat_index(i).scale();
        let shape = k + 0.5 * count[i];
        let scale = lambda * basemeasures::scale_decay(s) + 0.5 * ss[i];
        kernels.omega[i] = random::inverse_gamma(shape, scale, rng)?;
    }
    Ok(())
}

/// Complete latent state of the (possibly grouped) model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub sticks: Vec<StickVars>,
    pub weights: Vec<WeightTree>,
    pub kernels: KernelTree,
    pub alloc: Allocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub store_states: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 1000,
            burn_in: 200,
            thin: 1,
            seed: 1,
            stream: 0,
            store_states: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.iterations <= self.burn_in {
            return Err(Error::InvalidConfig(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of retained sweeps.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Per-group record of the retained sweeps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupTrace {
    /// Indices into the data of this group's observations.
    pub observations: Vec<usize>,
    /// Density on the output grid, one row per retained sweep.
    pub densities: Vec<Vec<f64>>,
    /// `f(y_i)` for the group's observations, one row per retained sweep.
    pub likelihoods: Vec<Vec<f64>>,
    /// `sum_s s pi_s` per retained sweep.
    pub mean_scale_weights: Vec<f64>,
    /// Average allocated scale per retained sweep.
    pub mean_scale_alloc: Vec<f64>,
    /// Nodes with at least one observation per retained sweep.
    pub occupied_nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub groups: Vec<GroupTrace>,
    /// Posterior means of the shared kernel parameters.
    pub kernel_means: KernelTree,
    /// Full states of the retained sweeps when requested.
    pub states: Vec<ModelState>,
    pub retained: usize,
}

impl Chain {
    /// Trace of the first (for a plain fit, the only) group.
    pub fn trace(&self) -> &GroupTrace {
        &self.groups[0]
    }
}

/// Gibbs sampler over a fixed dataset. With no observations every sweep
/// draws all latent variables from the prior.
pub struct GibbsSampler<'a> {
    data: &'a [f64],
    groups: Vec<usize>,
    spec: ModelSpec,
    rng: RandomSource,
    state: ModelState,
}

impl<'a> GibbsSampler<'a> {
    /// `groups[i]` is the group of observation `i`, in `0..n_groups`.
    pub fn new(
        data: &'a [f64],
        groups: &[usize],
        n_groups: usize,
        spec: ModelSpec,
        rng: RandomSource,
    ) -> Result<Self> {
        spec.validate()?;
        if n_groups == 0 {
            return Err(Error::InvalidConfig("at least one group is required".into()));
        }
        if groups.len() != data.len() {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: groups.len(),
            });
        }
        if let Some(&g) = groups.iter().find(|&&g| g >= n_groups) {
            return Err(Error::UnknownGroup(g));
        }
        if let Some(y) = data.iter().find(|y| !y.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite observation {y}")));
        }
        let mut rng = rng;
        let mut sticks = Vec::with_capacity(n_groups);
        for _ in 0..n_groups {
            sticks.push(weights::sample_prior_sticks(&spec.hyper, &mut rng)?);
        }
        let weights: Vec<WeightTree> = sticks.iter().map(weights::compute_weights).collect();
        let kernels = KernelTree::sample_prior(&spec, &mut rng)?;
        let mut nodes = Vec::with_capacity(data.len());
        for (&y, &g) in data.iter().zip(groups) {
            nodes.push(allocate_one(y, 0.0, &weights[g], &kernels, &mut rng)?);
        }
        let slices = vec![0.0; data.len()];
        Ok(GibbsSampler {
            data,
            groups: groups.to_vec(),
            spec,
            rng,
            state: ModelState {
                sticks,
                weights,
                kernels,
                alloc: Allocation { nodes, slices },
            },
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn n_groups(&self) -> usize {
        self.state.sticks.len()
    }

    /// Group-specific counts of the current allocation.
    pub fn group_counts(&self, g: usize) -> Result<NodeCounts> {
        let nodes = self
            .state
            .alloc
            .nodes
            .iter()
            .zip(&self.groups)
            .filter(|(_, &gi)| gi == g)
            .map(|(n, _)| *n);
        accumulate_counts(nodes, self.spec.hyper.max_depth)
    }

    /// One full Gibbs sweep.
    pub fn sweep(&mut self) -> Result<()> {
        let ModelState {
            sticks,
            weights: wts,
            kernels,
            alloc,
        } = &mut self.state;
        let groups = &self.groups;
        refresh_slice(alloc, |i| &wts[groups[i]], &mut self.rng)?;
        #[allow(clippy::needless_range_loop)]
        for i in 0..self.data.len() {
            let g = groups[i];
            alloc.nodes[i] = allocate_one(self.data[i], alloc.slices[i], &wts[g], kernels, &mut self.rng)?;
            if cfg!(debug_assertions) && alloc.slices[i] > wts[g].scale_total(alloc.nodes[i].scale()) {
                return Err(Error::Inconsistent(format!("slice violated by observation {i}")));
            }
        }
        for g in 0..sticks.len() {
            let nodes = alloc
                .nodes
                .iter()
                .zip(groups)
                .filter(|(_, &gi)| gi == g)
                .map(|(n, _)| *n);
            let counts = accumulate_counts(nodes, self.spec.hyper.max_depth)?;
            if cfg!(debug_assertions) {
                counts.check()?;
            }
            sticks[g] = update_sticks(&counts, &self.spec.hyper, &mut self.rng)?;
            wts[g] = weights::compute_weights(&sticks[g]);
        }
        update_locations(self.data, alloc, kernels, &self.spec, &mut self.rng)?;
        update_scales(self.data, alloc, kernels, &self.spec, &mut self.rng)?;
        if cfg!(debug_assertions) {
            self.check_invariants()?;
        }
        Ok(())
    }

    fn check_invariants(&self) -> Result<()> {
        let st = &self.state;
        for (s, w) in st.sticks.iter().zip(&st.weights) {
            if (w.total() - 1.0).abs() > 1e-9 || *w != weights::compute_weights(s) {
                return Err(Error::Inconsistent("weights out of sync with sticks".into()));
            }
        }
        for node in tree::nodes(self.spec.hyper.max_depth) {
            let c = basemeasures::cell(&self.spec.location, node);
            if !c.contains(st.kernels.mu(node)) || !(st.kernels.omega(node) > 0.0) {
                return Err(Error::Inconsistent(format!("kernel of node {node} leaves its support")));
            }
        }
        Ok(())
    }
}

/// Fits a single density. See [`run_fit_grouped`].
pub fn run_fit(data: &[f64], spec: &ModelSpec, config: &SamplerConfig, grid: Option<&Grid>) -> Result<Chain> {
    run_fit_grouped(data, &vec![0; data.len()], 1, spec, config, grid)
}

/// Runs the chain and records the retained sweeps. When `grid` is given the
/// per-group density is evaluated on it at every retained sweep.
pub fn run_fit_grouped(
    data: &[f64],
    groups: &[usize],
    n_groups: usize,
    spec: &ModelSpec,
    config: &SamplerConfig,
    grid: Option<&Grid>,
) -> Result<Chain> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::NoObservations);
    }
    let rng = RandomSource::with_stream(config.seed, config.stream);
    let mut sampler = GibbsSampler::new(data, groups, n_groups, *spec, rng)?;
    let mut traces: Vec<GroupTrace> = (0..n_groups)
        .map(|g| GroupTrace {
            observations: (0..data.len()).filter(|&i| groups[i] == g).collect(),
            ..GroupTrace::default()
        })
        .collect();
    if let Some(g) = traces.iter().position(|t| t.observations.is_empty()) {
        return Err(Error::InvalidConfig(format!("group {g} has no observations")));
    }
    let n_nodes = tree::node_count(spec.hyper.max_depth);
    let mut mu_sum = vec![0.0; n_nodes];
    let mut omega_sum = vec![0.0; n_nodes];
    let mut states = Vec::new();
    let mut retained = 0usize;
    for it in 0..config.iterations {
        sampler.sweep()?;
        if it < config.burn_in || !(it - config.burn_in).is_multiple_of(config.thin) {
            continue;
        }
        retained += 1;
        let st = sampler.state();
        for (g, trace) in traces.iter_mut().enumerate() {
            let w = &st.weights[g];
            if let Some(grid) = grid {
                trace.densities.push(density::eval_density(w, &st.kernels, grid));
            }
            let lik: Vec<f64> = trace
                .observations
                .iter()
                .map(|&i| density::eval_at(w, &st.kernels, data[i]))
                .collect();
            if let Some(j) = lik.iter().position(|&f| !(f > 0.0)) {
                return Err(Error::NonPositiveLikelihood {
                    sweep: it,
                    obs: trace.observations[j],
                    value: lik[j],
                });
            }
            trace.likelihoods.push(lik);
            trace.mean_scale_weights.push(w.mean_scale());
            let scale_sum: f64 = trace
                .observations
                .iter()
                .map(|&i| st.alloc.nodes[i].scale() as f64)
                .sum();
            trace.mean_scale_alloc.push(scale_sum / trace.observations.len() as f64);
            trace.occupied_nodes.push(sampler.group_counts(g)?.occupied());
        }
        for i in 0..n_nodes {
            mu_sum[i] += st.kernels.mu[i];
            omega_sum[i] += st.kernels.omega[i];
        }
        if config.store_states {
            states.push(st.clone());
        }
    }
    let r = retained as f64;
    let kernel_means = KernelTree {
        max_depth: spec.hyper.max_depth,
        mu: mu_sum.iter().map(|m| m / r).collect(),
        omega: omega_sum.iter().map(|w| w / r).collect(),
    };
    Ok(Chain {
        groups: traces,
        kernel_means,
        states,
        retained,
    })
}
