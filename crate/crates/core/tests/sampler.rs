mod support;

use msm_core::basemeasures::{self, LocationBase, ScaleBase};
use msm_core::density::{self, Grid};
use msm_core::random::RandomSource;
use msm_core::sampler::{self, GibbsSampler, ModelSpec, SamplerConfig};
use msm_core::simdata;
use msm_core::tree;
use msm_core::weights::MsbHyper;
use support::*;

fn oracle_problem() -> OracleProblem {
    OracleProblem {
        alpha: 1.0,
        delta: 0.25,
        beta: 1.0,
        mu0: 0.0,
        kappa0: 1.0,
        k: 3.0,
        lambda: 1.0,
        y: [-0.6, 0.9],
    }
}

fn spec_of(p: &OracleProblem) -> ModelSpec {
    ModelSpec {
        hyper: MsbHyper::new(p.alpha, p.delta, p.beta, 1).unwrap(),
        location: LocationBase::new(p.mu0, p.kappa0).unwrap(),
        scale: ScaleBase::new(p.k, p.lambda).unwrap(),
    }
}

#[test]
fn oracle_posterior_is_a_distribution() {
    let post = allocation_posterior(&oracle_problem());
    assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(post.iter().all(|&p| p > 1e-3), "{post:?}");
    // prior over configurations sums to one
    let p = oracle_problem();
    let total: f64 = (0..3)
        .flat_map(|a| (0..3).map(move |b| [a, b]))
        .map(|c| allocation_prior(&p, c))
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn gibbs_allocations_match_enumeration() {
    let p = oracle_problem();
    let oracle = allocation_posterior(&p);
    let data = p.y.to_vec();
    let mut gibbs = GibbsSampler::new(&data, &[0, 0], 1, spec_of(&p), RandomSource::new(2024)).unwrap();
    for _ in 0..2_000 {
        gibbs.sweep().unwrap();
    }
    let sweeps = 50_000;
    let mut hits = vec![vec![0.0; sweeps]; 9];
    #[allow(clippy::needless_range_loop)]
    for t in 0..sweeps {
        gibbs.sweep().unwrap();
        let nodes = gibbs.state().alloc.nodes();
        let c = 3 * nodes[0].flat_index() + nodes[1].flat_index();
        hits[c][t] = 1.0;
    }
    for c in 0..9 {
        let (m, se) = batch_mean_se(&hits[c], 50);
        assert!(
            (m - oracle[c]).abs() < 3.0 * se,
            "configuration {c}: {m} vs {} (se {se})",
            oracle[c]
        );
    }
}

#[test]
fn no_data_chain_samples_the_prior() {
    let depth = 3;
    let spec = ModelSpec {
        hyper: MsbHyper::new(1.0, 0.25, 1.0, depth).unwrap(),
        location: LocationBase::default(),
        scale: ScaleBase::default(),
    };
    let mut gibbs = GibbsSampler::new(&[], &[], 1, spec, RandomSource::new(99)).unwrap();
    let sweeps = 2_000;
    let nodes: Vec<_> = tree::nodes(depth).collect();
    let mut s_draws = vec![Vec::new(); nodes.len()];
    let mut r_draws = vec![Vec::new(); nodes.len()];
    let mut mu_draws = vec![Vec::new(); nodes.len()];
    let mut omega_by_scale = vec![Vec::new(); depth as usize + 1];
    for _ in 0..sweeps {
        gibbs.sweep().unwrap();
        let st = gibbs.state();
        for (i, &node) in nodes.iter().enumerate() {
            s_draws[i].push(st.sticks[0].stop(node));
            if let Some(r) = st.sticks[0].right(node) {
                r_draws[i].push(r);
            }
            mu_draws[i].push(st.kernels.mu(node));
            omega_by_scale[node.scale() as usize].push(st.kernels.omega(node));
        }
    }
    let check = |xs: &[f64], mean: f64, var: f64, what: String| {
        let (m, se) = mean_se(xs);
        assert!((m - mean).abs() < 4.0 * se, "{what}: mean {m} vs {mean}");
        let (v, se_v) = var_se(xs);
        assert!((v - var).abs() < 4.0 * se_v, "{what}: var {v} vs {var}");
    };
    let beta_mv = |a: f64, b: f64| (a / (a + b), a * b / ((a + b).powi(2) * (a + b + 1.0)));
    for (i, &node) in nodes.iter().enumerate() {
        let s = node.scale();
        if s < depth {
            let (m, v) = beta_mv(0.75, 1.0 + 0.25 * (s as f64 + 1.0));
            check(&s_draws[i], m, v, format!("S{node}"));
            let (m, v) = beta_mv(1.0, 1.0);
            check(&r_draws[i], m, v, format!("R{node}"));
        } else {
            assert!(s_draws[i].iter().all(|&x| x == 1.0));
        }
        let c = basemeasures::cell(&spec.location, node);
        let (m, v) = truncated_normal_moments(0.0, 1.0, c.lo, c.hi);
        check(&mu_draws[i], m, v, format!("mu{node}"));
    }
    for (s, xs) in omega_by_scale.iter().enumerate() {
        let b = 64.0 * 0.5f64.powi(s as i32);
        let (m, v) = (b / 63.0, b * b / (63.0 * 63.0 * 62.0));
        check(xs, m, v, format!("omega at scale {s}"));
    }
}

fn quick_config(seed: u64) -> SamplerConfig {
    SamplerConfig {
        iterations: 300,
        burn_in: 100,
        thin: 1,
        seed,
        stream: 0,
        store_states: false,
    }
}

fn default_spec(depth: u32) -> ModelSpec {
    let alpha = msm_core::weights::calibrate_alpha(0.5, 3.0).unwrap();
    ModelSpec {
        hyper: MsbHyper::new(alpha, 0.5, 1.0, depth).unwrap(),
        location: LocationBase::default(),
        scale: ScaleBase::default(),
    }
}

#[test]
fn chains_are_deterministic() {
    let mut rng = RandomSource::new(4);
    let data = simdata::scenario("mw_08").unwrap().sample(60, &mut rng);
    let (z, _) = simdata::standardize(&data).unwrap();
    let grid = Grid::around_data(&z, 64).unwrap();
    let spec = default_spec(5);
    let a = sampler::run_fit(&z, &spec, &quick_config(8), Some(&grid)).unwrap();
    let b = sampler::run_fit(&z, &spec, &quick_config(8), Some(&grid)).unwrap();
    assert_eq!(a, b);
    let c = sampler::run_fit(&z, &spec, &quick_config(9), Some(&grid)).unwrap();
    assert_ne!(a.trace().densities, c.trace().densities);
}

#[test]
fn single_group_equals_plain_fit() {
    let mut rng = RandomSource::new(5);
    let data = simdata::scenario("mw_02").unwrap().sample(40, &mut rng);
    let grid = Grid::around_data(&data, 32).unwrap();
    let spec = default_spec(4);
    let plain = sampler::run_fit(&data, &spec, &quick_config(3), Some(&grid)).unwrap();
    let grouped = sampler::run_fit_grouped(&data, &vec![0; 40], 1, &spec, &quick_config(3), Some(&grid)).unwrap();
    assert_eq!(plain, grouped);
}

#[test]
fn standard_normal_fit_is_close() {
    let mut rng = RandomSource::new(6);
    let data = simdata::scenario("delta_study_1").unwrap().sample(100, &mut rng);
    let (z, rec) = simdata::standardize(&data).unwrap();
    let grid = Grid::uniform(-5.0, 5.0, 401).unwrap();
    let cfg = SamplerConfig {
        iterations: 1000,
        burn_in: 200,
        ..quick_config(6)
    };
    let chain = sampler::run_fit(&z, &default_spec(6), &cfg, Some(&grid.affine(rec.m, rec.sd).unwrap())).unwrap();
    let summary = density::summarize(chain.trace(), &grid, 0.95).unwrap();
    let est: Vec<f64> = summary.mean.iter().map(|f| rec.density_to_original(*f)).collect();
    let truth: Vec<f64> = grid
        .points()
        .iter()
        .map(|x| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt())
        .collect();
    let l1 = density::l1_distance(&truth, &est, &grid).unwrap();
    assert!(l1 < 0.35, "L1 = {l1}");
    let total = density::trapezoid(&est, &grid).unwrap();
    assert!((total - 1.0).abs() < 0.01, "{total}");
    for j in 0..grid.len() {
        assert!(summary.band_lo[j] <= summary.mean[j] && summary.mean[j] <= summary.band_hi[j]);
        assert!(summary.band_lo[j] >= 0.0);
    }
    assert!(summary.lpml.is_finite());
}

#[test]
fn separated_groups_keep_their_mass() {
    let mut rng = RandomSource::new(7);
    let left = simdata::GaussianMixture::new(vec![simdata::Component {
        weight: 1.0,
        mean: -3.0,
        variance: 0.1,
    }])
    .unwrap();
    let right = simdata::GaussianMixture::new(vec![simdata::Component {
        weight: 1.0,
        mean: 3.0,
        variance: 0.1,
    }])
    .unwrap();
    let mut data = left.sample(200, &mut rng);
    data.extend(right.sample(200, &mut rng));
    let groups: Vec<usize> = (0..400).map(|i| i / 200).collect();
    let (z, rec) = simdata::standardize(&data).unwrap();
    let grid = Grid::uniform(-6.0, 6.0, 481).unwrap();
    let std_grid = grid.affine(rec.m, rec.sd).unwrap();
    let cfg = SamplerConfig {
        iterations: 600,
        burn_in: 200,
        ..quick_config(7)
    };
    let chain = sampler::run_fit_grouped(&z, &groups, 2, &default_spec(6), &cfg, Some(&std_grid)).unwrap();
    let zero = grid.points().iter().position(|&x| x >= 0.0).unwrap();
    for (g, positive_side) in [(0, true), (1, false)] {
        let s = density::summarize(&chain.groups[g], &std_grid, 0.95).unwrap();
        let f: Vec<f64> = s.mean.iter().map(|v| rec.density_to_original(*v)).collect();
        let half: Vec<f64> = if positive_side { f[zero..].to_vec() } else { f[..=zero].to_vec() };
        let half_grid = if positive_side {
            Grid::new(grid.points()[zero..].to_vec()).unwrap()
        } else {
            Grid::new(grid.points()[..=zero].to_vec()).unwrap()
        };
        let wrong = density::trapezoid(&half, &half_grid).unwrap();
        assert!(wrong < 0.05, "group {g}: {wrong}");
    }
    assert_eq!(chain.groups[0].observations.len(), 200);
}

#[test]
fn degenerate_group_runs() {
    let data = vec![0.1, 0.5, -0.3, 2.0];
    let groups = vec![0, 0, 0, 1];
    let chain = sampler::run_fit_grouped(&data, &groups, 2, &default_spec(4), &quick_config(1), None).unwrap();
    assert_eq!(chain.groups[1].likelihoods[0].len(), 1);
    assert!(density::lpml(&chain.groups[1].likelihoods).unwrap().is_finite());
}

fn chain_with_scales(weights_scale: Vec<f64>, alloc_scale: Vec<f64>) -> sampler::Chain {
    let n = weights_scale.len();
    sampler::Chain {
        groups: vec![sampler::GroupTrace {
            observations: vec![],
            densities: vec![vec![]; n],
            likelihoods: vec![vec![]; n],
            mean_scale_weights: weights_scale,
            mean_scale_alloc: alloc_scale,
            occupied_nodes: vec![1; n],
        }],
        kernel_means: sampler::KernelTree::from_values(0, vec![0.0], vec![1.0]).unwrap(),
        states: vec![],
        retained: n,
    }
}

#[test]
fn posterior_mean_scale_trivial_chains() {
    let root = chain_with_scales(vec![0.0; 5], vec![0.0; 5]);
    assert_eq!(density::posterior_mean_scale(&root).unwrap(), 0.0);
    assert_eq!(density::posterior_mean_scale_alloc(&root).unwrap(), 0.0);
    let first = chain_with_scales(vec![1.0; 5], vec![1.0; 5]);
    assert_eq!(density::posterior_mean_scale(&first).unwrap(), 1.0);
    assert!(density::posterior_mean_scale(&chain_with_scales(vec![], vec![])).is_err());
}

/// Prior mean of `sum_s s pi_s` with the stop variable forced to one at
/// `depth`: the sum over `s < depth` of the probability of passing scale `s`.
fn truncated_prior_scale(alpha: f64, delta: f64, depth: u32) -> f64 {
    let mut pass = 1.0;
    let mut total = 0.0;
    for s in 0..depth {
        let (a, b) = (1.0 - delta, alpha + delta * (s as f64 + 1.0));
        pass *= b / (a + b);
        total += pass;
    }
    total
}

#[test]
fn no_data_mean_scale_matches_the_prior() {
    let depth = 10;
    for (alpha, delta) in [(3.0, 0.0), (1.25, 0.25)] {
        let spec = ModelSpec {
            hyper: MsbHyper::new(alpha, delta, 1.0, depth).unwrap(),
            location: LocationBase::default(),
            scale: ScaleBase::default(),
        };
        let mut gibbs = GibbsSampler::new(&[], &[], 1, spec, RandomSource::new(12)).unwrap();
        let xs: Vec<f64> = (0..2000)
            .map(|_| {
                gibbs.sweep().unwrap();
                gibbs.state().weights[0].mean_scale()
            })
            .collect();
        let (m, se) = mean_se(&xs);
        let expect = truncated_prior_scale(alpha, delta, depth);
        assert!((m - expect).abs() < 4.0 * se, "alpha {alpha}: {m} vs {expect}");
        // truncation only removes mass from the untruncated value of 3
        assert!(expect < 3.0);
    }
}
