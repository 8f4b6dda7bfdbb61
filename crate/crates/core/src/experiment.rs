//! Replicated simulation recipes: prior-robustness over `delta` and the
//! scenario comparison table. Jobs run in parallel; every job owns a random
//! stream derived from the master seed and its position in the design, so
//! results do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basemeasures::{LocationBase, ScaleBase};
use crate::density::{self, Grid};
use crate::error::{Error, Result};
use crate::random::RandomSource;
use crate::sampler::{self, ModelSpec, SamplerConfig};
use crate::simdata::{self, GaussianMixture};
use crate::weights::{self, MsbHyper};

/// Fit settings shared by every job of a recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub max_depth: u32,
    pub beta: f64,
    pub mu0: f64,
    pub kappa0: f64,
    pub k: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            max_depth: 6,
            beta: 1.0,
            mu0: 0.0,
            kappa0: 1.0,
            k: 64.0,
            lambda: 64.0,
            iterations: 1000,
            burn_in: 200,
            thin: 1,
        }
    }
}

impl FitSettings {
    pub fn spec(&self, alpha: f64, delta: f64) -> Result<ModelSpec> {
        Ok(ModelSpec {
            hyper: MsbHyper::new(alpha, delta, self.beta, self.max_depth)?,
            location: LocationBase::new(self.mu0, self.kappa0)?,
            scale: ScaleBase::new(self.k, self.lambda)?,
        })
    }

    fn sampler(&self, seed: u64, stream: u64) -> SamplerConfig {
        SamplerConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed,
            stream,
            store_states: false,
        }
    }
}

// Stream layout: bit 62 marks data streams, bits 40.. the design cell,
// low bits the replicate.
fn data_stream(scenario: usize, replicate: usize) -> u64 {
    (1 << 62) | ((scenario as u64) << 40) | replicate as u64
}

fn fit_stream(cell: usize, replicate: usize) -> u64 {
    ((cell as u64) << 40) | replicate as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaRobustnessConfig {
    pub scenarios: Vec<String>,
    pub deltas: Vec<f64>,
    pub expected_scales: Vec<f64>,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub settings: FitSettings,
}

impl Default for DeltaRobustnessConfig {
    fn default() -> Self {
        DeltaRobustnessConfig {
            scenarios: vec!["delta_study_1".into(), "delta_study_2".into(), "delta_study_3".into()],
            deltas: vec![0.0, 0.25, 0.5],
            expected_scales: vec![1.0, 3.0, 5.0],
            n: 50,
            replicates: 100,
            seed: 1,
            settings: FitSettings::default(),
        }
    }
}

/// One fit of the robustness study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub scenario: String,
    pub delta: f64,
    pub expected_scale: f64,
    pub alpha: f64,
    pub replicate: usize,
    pub mean_scale_weights: f64,
    pub mean_scale_alloc: f64,
}

/// Average over replicates of one `(scenario, delta, expected scale)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaAggregate {
    pub scenario: String,
    pub delta: f64,
    pub expected_scale: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub mean_scale_weights: f64,
    pub sd_scale_weights: f64,
    pub mean_scale_alloc: f64,
    pub sd_scale_alloc: f64,
}

fn check_replicates(replicates: usize) -> Result<()> {
    if replicates == 0 {
        return Err(Error::InvalidConfig("replicates must be at least 1".into()));
    }
    Ok(())
}

fn standardized_sample(mix: &GaussianMixture, n: usize, seed: u64, stream: u64) -> Result<(Vec<f64>, simdata::StandardizationRecord)> {
    let mut rng = RandomSource::with_stream(seed, stream);
    simdata::standardize(&mix.sample(n, &mut rng))
}

/// Posterior mean scale for every scenario, `delta`, expected scale and
/// replicate. Data sets are shared across prior settings within a replicate.
pub fn delta_robustness(cfg: &DeltaRobustnessConfig) -> Result<Vec<DeltaRow>> {
    check_replicates(cfg.replicates)?;
    let mixtures = cfg
        .scenarios
        .iter()
        .map(|s| simdata::scenario(s))
        .collect::<Result<Vec<_>>>()?;
    let mut alphas = Vec::new();
    for &d in &cfg.deltas {
        for &e in &cfg.expected_scales {
            alphas.push((d, e, weights::calibrate_alpha(d, e)?));
        }
    }
    let datasets = (0..mixtures.len())
        .flat_map(|si| (0..cfg.replicates).map(move |r| (si, r)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(si, r)| standardized_sample(&mixtures[si], cfg.n, cfg.seed, data_stream(si, r)).map(|(d, _)| d))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for si in 0..mixtures.len() {
        for (pi, &(delta, expected, alpha)) in alphas.iter().enumerate() {
            for r in 0..cfg.replicates {
                jobs.push((si, pi, delta, expected, alpha, r));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(si, pi, delta, expected_scale, alpha, r)| {
            let data = &datasets[si * cfg.replicates + r];
            let spec = cfg.settings.spec(alpha, delta)?;
            let cell = si * alphas.len() + pi;
            let chain = sampler::run_fit(data, &spec, &cfg.settings.sampler(cfg.seed, fit_stream(cell, r)), None)?;
            Ok(DeltaRow {
                scenario: cfg.scenarios[si].clone(),
                delta,
                expected_scale,
                alpha,
                replicate: r,
                mean_scale_weights: density::posterior_mean_scale(&chain)?,
                mean_scale_alloc: density::posterior_mean_scale_alloc(&chain)?,
            })
        })
        .collect()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

/// Groups rows by design cell, preserving first-appearance order.
pub fn aggregate_delta(rows: &[DeltaRow]) -> Vec<DeltaAggregate> {
    let mut keys: Vec<(String, f64, f64, f64)> = Vec::new();
    for r in rows {
        let key = (r.scenario.clone(), r.delta, r.expected_scale, r.alpha);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scenario, delta, expected_scale, alpha)| {
            let cell: Vec<&DeltaRow> = rows
                .iter()
                .filter(|r| r.scenario == scenario && r.delta == delta && r.expected_scale == expected_scale)
                .collect();
            let w: Vec<f64> = cell.iter().map(|r| r.mean_scale_weights).collect();
            let a: Vec<f64> = cell.iter().map(|r| r.mean_scale_alloc).collect();
            let (mw, sw) = mean_sd(&w);
            let (ma, sa) = mean_sd(&a);
            DeltaAggregate {
                scenario,
                delta,
                expected_scale,
                alpha,
                replicates: cell.len(),
                mean_scale_weights: mw,
                sd_scale_weights: sw,
                mean_scale_alloc: ma,
                sd_scale_alloc: sa,
            }
        })
        .collect()
}

/// Spread (max - min over expected scales) of the replicate-averaged
/// posterior mean scale at one `(scenario, delta)`: `(weights, alloc)`.
pub fn spread(aggregates: &[DeltaAggregate], scenario: &str, delta: f64) -> Option<(f64, f64)> {
    let cell: Vec<&DeltaAggregate> = aggregates
        .iter()
        .filter(|a| a.scenario == scenario && a.delta == delta)
        .collect();
    if cell.is_empty() {
        return None;
    }
    let range = |f: fn(&DeltaAggregate) -> f64| {
        let hi = cell.iter().map(|a| f(a)).fold(f64::NEG_INFINITY, f64::max);
        let lo = cell.iter().map(|a| f(a)).fold(f64::INFINITY, f64::min);
        hi - lo
    };
    Some((range(|a| a.mean_scale_weights), range(|a| a.mean_scale_alloc)))
}

/// A labelled scenario of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLabel {
    pub label: String,
    pub scenario: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioTableConfig {
    pub scenarios: Vec<ScenarioLabel>,
    pub delta: f64,
    pub expected_scale: f64,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub grid_points: usize,
    pub settings: FitSettings,
}

/// Default mapping of the four labelled scenarios to the Marron-Wand battery.
pub fn default_scenario_labels() -> Vec<ScenarioLabel> {
    [("S1", "mw_02"), ("S2", "mw_08"), ("S3", "mw_10"), ("S4", "mw_14")]
        .iter()
        .map(|&(l, s)| ScenarioLabel {
            label: l.into(),
            scenario: s.into(),
        })
        .collect()
}

impl Default for ScenarioTableConfig {
    fn default() -> Self {
        ScenarioTableConfig {
            scenarios: default_scenario_labels(),
            delta: 0.5,
            expected_scale: 3.0,
            n: 100,
            replicates: 100,
            seed: 1,
            grid_points: 2001,
            settings: FitSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub label: String,
    pub scenario: String,
    pub replicate: usize,
    pub l1: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAggregate {
    pub label: String,
    pub scenario: String,
    pub replicates: usize,
    pub l1_mean: f64,
    pub l1_sd: f64,
    pub kl_mean: f64,
    pub kl_sd: f64,
}

/// Evaluation grid for a true density: `points` equally spaced points
/// covering every component's mean +- 5 sd.
pub fn truth_grid(mix: &GaussianMixture, points: usize) -> Result<Grid> {
    let (lo, hi) = mix.support(5.0);
    Grid::uniform(lo, hi, points)
}

/// Fits one standardized sample and returns the posterior mean density on
/// `grid` in original units.
pub fn fit_posterior_mean(
    data: &[f64],
    grid: &Grid,
    spec: &ModelSpec,
    config: &SamplerConfig,
) -> Result<Vec<f64>> {
    let (z, rec) = simdata::standardize(data)?;
    let std_grid = grid.affine(rec.m, rec.sd)?;
    let chain = sampler::run_fit(&z, spec, config, Some(&std_grid))?;
    let (mean, _, _) = density::pointwise_bands(&chain.trace().densities, 0.95)?;
    Ok(mean.into_iter().map(|f| rec.density_to_original(f)).collect())
}

/// L1 distance and KL divergence of the posterior mean density from the
/// truth for every labelled scenario and replicate.
pub fn scenario_table(cfg: &ScenarioTableConfig) -> Result<Vec<ScenarioRow>> {
    check_replicates(cfg.replicates)?;
    let alpha = weights::calibrate_alpha(cfg.delta, cfg.expected_scale)?;
    let spec = cfg.settings.spec(alpha, cfg.delta)?;
    let mixtures = cfg
        .scenarios
        .iter()
        .map(|s| simdata::scenario(&s.scenario))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..mixtures.len())
        .flat_map(|si| (0..cfg.replicates).map(move |r| (si, r)))
        .collect();
    jobs.into_par_iter()
        .map(|(si, r)| {
            let mix = &mixtures[si];
            let mut rng = RandomSource::with_stream(cfg.seed, data_stream(si, r));
            let data = mix.sample(cfg.n, &mut rng);
            let grid = truth_grid(mix, cfg.grid_points)?;
            let est = fit_posterior_mean(&data, &grid, &spec, &cfg.settings.sampler(cfg.seed, fit_stream(si, r)))?;
            let truth = mix.pdf(grid.points());
            Ok(ScenarioRow {
                label: cfg.scenarios[si].label.clone(),
                scenario: cfg.scenarios[si].scenario.clone(),
                replicate: r,
                l1: density::l1_distance(&truth, &est, &grid)?,
                kl: density::kl_divergence(&truth, &est, &grid)?,
            })
        })
        .collect()
}

pub fn aggregate_scenarios(rows: &[ScenarioRow]) -> Vec<ScenarioAggregate> {
    let mut labels: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.label.clone(), r.scenario.clone());
        if !labels.contains(&key) {
            labels.push(key);
        }
    }
    labels
        .into_iter()
        .map(|(label, scenario)| {
            let l1: Vec<f64> = rows.iter().filter(|r| r.label == label).map(|r| r.l1).collect();
            let kl: Vec<f64> = rows.iter().filter(|r| r.label == label).map(|r| r.kl).collect();
            let (l1_mean, l1_sd) = mean_sd(&l1);
            let (kl_mean, kl_sd) = mean_sd(&kl);
            ScenarioAggregate {
                label,
                scenario,
                replicates: l1.len(),
                l1_mean,
                l1_sd,
                kl_mean,
                kl_sd,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> FitSettings {
        FitSettings {
            max_depth: 3,
            iterations: 40,
            burn_in: 10,
            ..FitSettings::default()
        }
    }

    #[test]
    fn delta_design_is_complete_and_deterministic() {
        let cfg = DeltaRobustnessConfig {
            scenarios: vec!["delta_study_1".into(), "delta_study_3".into()],
            deltas: vec![0.0, 0.5],
            expected_scales: vec![1.0, 3.0],
            n: 20,
            replicates: 2,
            seed: 5,
            settings: quick(),
        };
        let rows = delta_robustness(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2 * 2);
        assert_eq!(rows, delta_robustness(&cfg).unwrap());
        let agg = aggregate_delta(&rows);
        assert_eq!(agg.len(), 8);
        assert!(agg.iter().all(|a| a.replicates == 2));
        let (w, a) = spread(&agg, "delta_study_3", 0.0).unwrap();
        assert!(w >= 0.0 && a >= 0.0);
        assert!(spread(&agg, "delta_study_2", 0.0).is_none());
        // calibrated alpha for delta = 0 equals the expected scale
        assert!(rows.iter().filter(|r| r.delta == 0.0).all(|r| (r.alpha - r.expected_scale).abs() < 1e-6));
    }

    #[test]
    fn scenario_rows_per_replicate() {
        let cfg = ScenarioTableConfig {
            n: 40,
            replicates: 1,
            grid_points: 201,
            settings: quick(),
            ..ScenarioTableConfig::default()
        };
        let rows = scenario_table(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.l1 > 0.0 && r.l1 <= 2.0 && r.kl.is_finite()));
        let agg = aggregate_scenarios(&rows);
        assert_eq!(agg.iter().map(|a| a.label.as_str()).collect::<Vec<_>>(), ["S1", "S2", "S3", "S4"]);
    }

    #[test]
    fn zero_replicates_rejected() {
        let cfg = DeltaRobustnessConfig {
            replicates: 0,
            ..DeltaRobustnessConfig::default()
        };
        assert!(delta_robustness(&cfg).is_err());
        let cfg = ScenarioTableConfig {
            replicates: 0,
            ..ScenarioTableConfig::default()
        };
        assert!(scenario_table(&cfg).is_err());
    }
}
