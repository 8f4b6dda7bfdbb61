//! Serialized fit configuration.

use std::path::Path;

use msm_core::basemeasures::{LocationBase, ScaleBase};
use msm_core::density::DEFAULT_GRID_POINTS;
use msm_core::sampler::{ModelSpec, SamplerConfig};
use msm_core::weights::{self, MsbHyper};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Evaluation grid in original data units. Without bounds the grid spans the
/// data range padded by half the range on each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub points: usize,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: DEFAULT_GRID_POINTS,
            lo: None,
            hi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub stream: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub max_depth: u32,
    pub alpha: Option<f64>,
    pub target_expected_scale: Option<f64>,
    pub delta: f64,
    pub beta: f64,
    pub mu0: f64,
    pub kappa0: f64,
    pub k: f64,
    pub lambda: f64,
    pub standardize: bool,
    pub grid: GridSpec,
    /// Credible level of the pointwise bands.
    pub level: f64,
    pub out_dir: Option<String>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            stream: 0,
            iterations: 1000,
            burn_in: 200,
            thin: 1,
            max_depth: 6,
            alpha: None,
            target_expected_scale: None,
            delta: 0.5,
            beta: 1.0,
            mu0: 0.0,
            kappa0: 1.0,
            k: 64.0,
            lambda: 64.0,
            standardize: true,
            grid: GridSpec::default(),
            level: 0.95,
            out_dir: None,
        }
    }
}

/// Expected scale used when neither `alpha` nor a target is given.
pub const DEFAULT_EXPECTED_SCALE: f64 = 3.0;

impl FitConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        let cfg: FitConfig =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Structural checks that do not need calibration.
    pub fn check(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::input(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.alpha.is_some() && self.target_expected_scale.is_some() {
            return Err(CliError::input("give either alpha or target_expected_scale, not both"));
        }
        if self.grid.lo.is_some() != self.grid.hi.is_some() {
            return Err(CliError::input("grid.lo and grid.hi must be given together"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::input(format!("level must lie in (0, 1), got {}", self.level)));
        }
        self.sampler().validate()?;
        Ok(())
    }

    pub fn resolve_alpha(&self) -> CliResult<f64> {
        match (self.alpha, self.target_expected_scale) {
            (Some(_), Some(_)) => Err(CliError::input("give either alpha or target_expected_scale, not both")),
            (Some(a), None) => Ok(a),
            (None, t) => Ok(weights::calibrate_alpha(self.delta, t.unwrap_or(DEFAULT_EXPECTED_SCALE))?),
        }
    }

    pub fn spec(&self, alpha: f64) -> CliResult<ModelSpec> {
        let spec = ModelSpec {
            hyper: MsbHyper::new(alpha, self.delta, self.beta, self.max_depth)?,
            location: LocationBase::new(self.mu0, self.kappa0)?,
            scale: ScaleBase::new(self.k, self.lambda)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            stream: self.stream,
            store_states: false,
        }
    }
}
