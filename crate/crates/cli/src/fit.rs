//! `fit` and `fit-grouped`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use msm_core::density::{self, Grid, PosteriorSummary};
use msm_core::sampler::{self, GroupTrace};
use msm_core::simdata::{self, StandardizationRecord};
use msm_core::tree;
use serde::Serialize;

use crate::config::{FitConfig, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Serialize)]
struct Diagnostics {
    n: usize,
    retained: usize,
    lpml_std: f64,
    lpml_orig: f64,
    mean_scale_weights: f64,
    mean_scale_alloc: f64,
    occupied_nodes_mean: f64,
    occupied_nodes: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct Standardization {
    m: f64,
    sd: f64,
}

#[derive(Debug, Serialize)]
struct ChainMeta<'a> {
    command: &'a str,
    schema_version: u32,
    version: &'a str,
    seed: u64,
    stream: u64,
    alpha: f64,
    n: usize,
    groups: usize,
    standardization: Option<Standardization>,
    config: &'a FitConfig,
}

#[derive(Debug, Serialize)]
struct GroupRow<'a> {
    group: usize,
    label: &'a str,
    n: usize,
    directory: String,
}

/// Everything a fit produces before it is written out.
struct FitRun {
    alpha: f64,
    rec: Option<StandardizationRecord>,
    grid_orig: Grid,
    grid_fit: Grid,
    chain: sampler::Chain,
}

fn output_dir(cfg: &FitConfig, out: Option<PathBuf>) -> CliResult<PathBuf> {
    out.or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set out_dir".into()))
}

fn run(y: &[f64], groups: &[usize], n_groups: usize, cfg: &FitConfig) -> CliResult<FitRun> {
    cfg.check()?;
    let alpha = cfg.resolve_alpha()?;
    let spec = cfg.spec(alpha)?;
    let (z, rec) = if cfg.standardize {
        let (z, rec) = simdata::standardize(y)?;
        (z, Some(rec))
    } else {
        (y.to_vec(), None)
    };
    let grid_orig = match (cfg.grid.lo, cfg.grid.hi) {
        (Some(lo), Some(hi)) => Grid::uniform(lo, hi, cfg.grid.points)?,
        _ => Grid::around_data(y, cfg.grid.points)?,
    };
    let grid_fit = match rec {
        Some(r) => grid_orig.affine(r.m, r.sd)?,
        None => grid_orig.clone(),
    };
    let chain = sampler::run_fit_grouped(&z, groups, n_groups, &spec, &cfg.sampler(), Some(&grid_fit))?;
    Ok(FitRun {
        alpha,
        rec,
        grid_orig,
        grid_fit,
        chain,
    })
}

fn write_group(dir: &Path, run: &FitRun, trace: &GroupTrace, level: f64) -> CliResult<()> {
    io::create_dir(dir)?;
    let s: PosteriorSummary = density::summarize(trace, &run.grid_fit, level)?;
    let path = dir.join("density_summary.csv");
    match run.rec {
        Some(rec) => {
            let orig = |v: &[f64]| v.iter().map(|f| rec.density_to_original(*f)).collect::<Vec<_>>();
            let (mean_o, lo_o, hi_o) = (orig(&s.mean), orig(&s.band_lo), orig(&s.band_hi));
            io::write_numeric_csv(
                &path,
                &["x", "mean", "lo", "hi", "x_orig", "mean_orig", "lo_orig", "hi_orig"],
                &[
                    run.grid_fit.points(),
                    &s.mean,
                    &s.band_lo,
                    &s.band_hi,
                    run.grid_orig.points(),
                    &mean_o,
                    &lo_o,
                    &hi_o,
                ],
            )?;
        }
        None => io::write_numeric_csv(
            &path,
            &["x", "mean", "lo", "hi"],
            &[run.grid_fit.points(), &s.mean, &s.band_lo, &s.band_hi],
        )?,
    }
    let n = trace.observations.len();
    let log_sd = run.rec.map_or(0.0, |r| r.sd.ln());
    let occupied_mean = trace.occupied_nodes.iter().sum::<usize>() as f64 / trace.occupied_nodes.len().max(1) as f64;
    let diag = Diagnostics {
        n,
        retained: run.chain.retained,
        lpml_std: s.lpml,
        lpml_orig: s.lpml - n as f64 * log_sd,
        mean_scale_weights: mean(&trace.mean_scale_weights),
        mean_scale_alloc: mean(&trace.mean_scale_alloc),
        occupied_nodes_mean: occupied_mean,
        occupied_nodes: trace.occupied_nodes.clone(),
    };
    io::write_json(&dir.join("diagnostics.json"), &diag)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn write_meta(dir: &Path, command: &str, run: &FitRun, n: usize, cfg: &FitConfig) -> CliResult<()> {
    let meta = ChainMeta {
        command,
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        stream: cfg.stream,
        alpha: run.alpha,
        n,
        groups: run.chain.groups.len(),
        standardization: run.rec.map(|r| Standardization { m: r.m, sd: r.sd }),
        config: cfg,
    };
    io::write_json(&dir.join("chain_meta.json"), &meta)
}

pub fn cmd_fit(data: &Path, cfg: &FitConfig, out: Option<PathBuf>) -> CliResult<()> {
    let dir = output_dir(cfg, out)?;
    let y = io::read_observations(data)?;
    let run = run(&y, &vec![0; y.len()], 1, cfg)?;
    io::create_dir(&dir)?;
    write_group(&dir, &run, run.chain.trace(), cfg.level)?;
    write_meta(&dir, "fit", &run, y.len(), cfg)
}

/// Maps labels to indices in order of first appearance.
fn index_groups(labels: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut names = Vec::new();
    let idx = labels
        .iter()
        .map(|l| {
            *seen.entry(l.as_str()).or_insert_with(|| {
                names.push(l.clone());
                names.len() - 1
            })
        })
        .collect();
    (idx, names)
}

pub fn cmd_fit_grouped(data: &Path, cfg: &FitConfig, out: Option<PathBuf>) -> CliResult<()> {
    let dir = output_dir(cfg, out)?;
    let (y, labels) = io::read_grouped(data)?;
    let (groups, names) = index_groups(&labels);
    let run = run(&y, &groups, names.len(), cfg)?;
    io::create_dir(&dir)?;
    let mut rows = Vec::new();
    for (g, trace) in run.chain.groups.iter().enumerate() {
        let sub = format!("group_{g}");
        write_group(&dir.join(&sub), &run, trace, cfg.level)?;
        rows.push(GroupRow {
            group: g,
            label: &names[g],
            n: trace.observations.len(),
            directory: sub,
        });
    }
    io::write_records(&dir.join("groups.csv"), &rows)?;
    write_kernels(&dir.join("shared_kernels.csv"), &run)?;
    write_meta(&dir, "fit-grouped", &run, y.len(), cfg)
}

/// Posterior means of the shared kernel parameters, one row per node.
fn write_kernels(path: &Path, run: &FitRun) -> CliResult<()> {
    let k = &run.chain.kernel_means;
    let rec = run.rec.unwrap_or(StandardizationRecord::IDENTITY);
    let nodes: Vec<_> = tree::nodes(k.max_depth()).collect();
    let s: Vec<f64> = nodes.iter().map(|n| n.scale() as f64).collect();
    let h: Vec<f64> = nodes.iter().map(|n| n.index() as f64).collect();
    let mu = k.mu_values();
    let omega = k.omega_values();
    let mu_orig: Vec<f64> = mu.iter().map(|m| rec.inverse(*m)).collect();
    let omega_orig: Vec<f64> = omega.iter().map(|w| w * rec.sd * rec.sd).collect();
    io::write_numeric_csv(
        path,
        &["s", "h", "mu", "omega", "mu_orig", "omega_orig"],
        &[&s, &h, mu, omega, &mu_orig, &omega_orig],
    )
}
