//! `calibrate`, `simulate`, `evaluate`, `experiment` and `prior-weights`.

use std::path::Path;

use msm_core::density::{self, Grid};
use msm_core::experiment::{self, DeltaRobustnessConfig, FitSettings, ScenarioTableConfig};
use msm_core::random::RandomSource;
use msm_core::simdata;
use msm_core::weights::{self, MsbHyper};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{self, Table};

#[derive(Debug, Serialize)]
struct Calibration {
    delta: f64,
    expected_scale: f64,
    alpha: f64,
}

pub fn cmd_calibrate(delta: f64, expected_scale: f64, json: bool, out: Option<&Path>) -> CliResult<()> {
    let alpha = weights::calibrate_alpha(delta, expected_scale)?;
    let record = Calibration {
        delta,
        expected_scale,
        alpha,
    };
    if json {
        println!("{}", serde_json::to_string(&record).map_err(|e| CliError::Internal(e.to_string()))?);
    } else {
        println!("{alpha}");
    }
    if let Some(path) = out {
        io::write_json(path, &record)?;
    }
    Ok(())
}

pub fn cmd_simulate(scenario: &str, n: usize, seed: u64, grid_points: usize, out: &Path) -> CliResult<()> {
    let mix = simdata::scenario(scenario)?;
    if n == 0 {
        return Err(CliError::input("n must be at least 1"));
    }
    let mut rng = RandomSource::new(seed);
    let y = mix.sample(n, &mut rng);
    let grid = experiment::truth_grid(&mix, grid_points)?;
    io::create_dir(out)?;
    io::write_numeric_csv(&out.join("data.csv"), &["y"], &[&y])?;
    io::write_numeric_csv(&out.join("truth.csv"), &["x", "density"], &[grid.points(), &mix.pdf(grid.points())])
}

/// Grid and density columns of an estimate or truth file. Original-unit
/// columns win over standardized ones.
fn density_columns(path: &Path) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let t = Table::read(path)?;
    let pick = |names: &[&str]| names.iter().find_map(|n| t.position(n));
    let x = pick(&["x_orig", "x"]).ok_or_else(|| CliError::input(format!("{}: missing column `x`", path.display())))?;
    let f = pick(&["mean_orig", "mean", "density"]).ok_or_else(|| {
        CliError::input(format!(
            "{}: missing density column (`mean_orig`, `mean` or `density`)",
            path.display()
        ))
    })?;
    Ok((t.numbers(x)?, t.numbers(f)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub l1: f64,
    pub kl: f64,
    pub points: usize,
}

pub fn cmd_evaluate(estimate: &Path, truth: &Path, out: Option<&Path>) -> CliResult<()> {
    let (xe, fe) = density_columns(estimate)?;
    let (xt, ft) = density_columns(truth)?;
    let same = xe.len() == xt.len() && xe.iter().zip(&xt).all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(1.0));
    if !same {
        return Err(CliError::input("estimate and truth are on different grids"));
    }
    let grid = Grid::new(xt)?;
    let metrics = Metrics {
        l1: density::l1_distance(&ft, &fe, &grid)?,
        kl: density::kl_divergence(&ft, &fe, &grid)?,
        points: grid.len(),
    };
    println!("{}", serde_json::to_string(&metrics).map_err(|e| CliError::Internal(e.to_string()))?);
    if let Some(path) = out {
        io::write_json(path, &metrics)?;
    }
    Ok(())
}

/// Overrides applied on top of a recipe configuration.
#[derive(Debug, Default)]
pub struct RecipeOverrides {
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub max_depth: Option<u32>,
}

impl RecipeOverrides {
    fn apply(&self, replicates: &mut usize, seed: &mut u64, n: &mut usize, s: &mut FitSettings) {
        if let Some(r) = self.replicates {
            *replicates = r;
        }
        if let Some(v) = self.seed {
            *seed = v;
        }
        if let Some(v) = self.n {
            *n = v;
        }
        if let Some(v) = self.iterations {
            s.iterations = v;
        }
        if let Some(v) = self.burn_in {
            s.burn_in = v;
        }
        if let Some(v) = self.max_depth {
            s.max_depth = v;
        }
    }
}

fn load_recipe<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::read(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("invalid recipe config {}: {e}", p.display())))
        }
    }
}

#[derive(Debug, Serialize)]
struct Spread {
    scenario: String,
    delta: f64,
    spread_weights: f64,
    spread_alloc: f64,
}

#[derive(Debug, Serialize)]
struct Report<'a, C, A, S> {
    recipe: &'a str,
    config: &'a C,
    aggregates: &'a [A],
    #[serde(skip_serializing_if = "Option::is_none")]
    spreads: Option<S>,
}

pub fn cmd_experiment(recipe: &str, config: Option<&Path>, over: &RecipeOverrides, out: &Path) -> CliResult<()> {
    match recipe {
        "delta_robustness" => {
            let mut cfg: DeltaRobustnessConfig = load_recipe(config)?;
            over.apply(&mut cfg.replicates, &mut cfg.seed, &mut cfg.n, &mut cfg.settings);
            let rows = experiment::delta_robustness(&cfg)?;
            let aggs = experiment::aggregate_delta(&rows);
            let mut spreads = Vec::new();
            for scenario in &cfg.scenarios {
                for &delta in &cfg.deltas {
                    if let Some((w, a)) = experiment::spread(&aggs, scenario, delta) {
                        spreads.push(Spread {
                            scenario: scenario.clone(),
                            delta,
                            spread_weights: w,
                            spread_alloc: a,
                        });
                    }
                }
            }
            io::create_dir(out)?;
            io::write_records(&out.join("replicates.csv"), &rows)?;
            io::write_records(&out.join("aggregate.csv"), &aggs)?;
            io::write_records(&out.join("spread.csv"), &spreads)?;
            io::write_json(
                &out.join("report.json"),
                &Report {
                    recipe,
                    config: &cfg,
                    aggregates: &aggs,
                    spreads: Some(&spreads),
                },
            )
        }
        "scenario_table" => {
            let mut cfg: ScenarioTableConfig = load_recipe(config)?;
            over.apply(&mut cfg.replicates, &mut cfg.seed, &mut cfg.n, &mut cfg.settings);
            let rows = experiment::scenario_table(&cfg)?;
            let aggs = experiment::aggregate_scenarios(&rows);
            io::create_dir(out)?;
            io::write_records(&out.join("replicates.csv"), &rows)?;
            io::write_records(&out.join("aggregate.csv"), &aggs)?;
            io::write_json(
                &out.join("report.json"),
                &Report::<_, _, ()> {
                    recipe,
                    config: &cfg,
                    aggregates: &aggs,
                    spreads: None,
                },
            )
        }
        other => Err(CliError::Usage(format!(
            "unknown recipe `{other}` (expected delta_robustness or scenario_table)"
        ))),
    }
}

#[derive(Debug, Serialize)]
struct WeightRow {
    alpha: f64,
    delta: f64,
    s: u32,
    expected_weight: f64,
}

/// Prior mean scale totals `E(pi_s)` for every `(alpha, delta)` pair.
pub fn cmd_prior_weights(alphas: &[f64], deltas: &[f64], max_scale: u32, out: &Path) -> CliResult<()> {
    if alphas.is_empty() || deltas.is_empty() {
        return Err(CliError::input("need at least one alpha and one delta"));
    }
    let mut rows = Vec::new();
    for &alpha in alphas {
        for &delta in deltas {
            let hyper = MsbHyper::new(alpha, delta, 1.0, 0)?;
            for s in 0..=max_scale {
                rows.push(WeightRow {
                    alpha,
                    delta,
                    s,
                    expected_weight: weights::expected_scale_total(&hyper, s),
                });
            }
        }
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        io::create_dir(parent)?;
    }
    io::write_records(out, &rows)
}
