//! Synthetic data: finite Gaussian mixtures, the named test scenarios and
//! standardization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss;
use crate::random;

/// One mixture component: weight, mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    components: Vec<Component>,
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidConfig("mixture has no components".into()));
        }
        for c in &components {
            if !(c.weight >= 0.0) || !c.mean.is_finite() || !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::InvalidConfig(format!("invalid mixture component {c:?}")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("mixture weights sum to {total}")));
        }
        Ok(GaussianMixture { components })
    }

    /// Builds from `(weight, mean, sd)` triples.
    fn from_sd(parts: &[(f64, f64, f64)]) -> Self {
        let components = parts
            .iter()
            .map(|&(weight, mean, sd)| Component {
                weight,
                mean,
                variance: sd * sd,
            })
            .collect();
        GaussianMixture::new(components).expect("built-in mixture is valid")
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn pdf_at(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * gauss::pdf(x, c.mean, c.variance))
            .sum()
    }

    pub fn cdf_at(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * gauss::cdf((x - c.mean) / c.variance.sqrt()))
            .sum()
    }

    pub fn pdf(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.pdf_at(x)).collect()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.variance + (c.mean - m).powi(2)))
            .sum()
    }

    /// Interval containing every component's mean +- `k` sd.
    pub fn support(&self, k: f64) -> (f64, f64) {
        let lo = self
            .components
            .iter()
            .map(|c| c.mean - k * c.variance.sqrt())
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .components
            .iter()
            .map(|c| c.mean + k * c.variance.sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                chosen = k;
                break;
            }
        }
        let c = self.components[chosen];
        c.mean + c.variance.sqrt() * random::std_normal(rng)
    }
}

/// Names accepted by [`scenario`].
pub const SCENARIOS: [&str; 18] = [
    "delta_study_1",
    "delta_study_2",
    "delta_study_3",
    "mw_01",
    "mw_02",
    "mw_03",
    "mw_04",
    "mw_05",
    "mw_06",
    "mw_07",
    "mw_08",
    "mw_09",
    "mw_10",
    "mw_11",
    "mw_12",
    "mw_13",
    "mw_14",
    "mw_15",
];

/// Named mixture. `delta_study_*` are the three densities of the prior
/// sensitivity study; `mw_01`..`mw_15` are the Marron-Wand battery.
pub fn scenario(name: &str) -> Result<GaussianMixture> {
    let m = match name {
        "delta_study_1" => GaussianMixture::from_sd(&[(1.0, 0.0, 1.0)]),
        "delta_study_2" => {
            let sd = 0.125f64.sqrt();
            GaussianMixture::from_sd(&[(0.5, -0.935, sd), (0.5, 0.935, sd)])
        }
        "delta_study_3" => {
            // stated weights (1/2, 1/3, 1/3) rescaled to sum to one
            let sd = (1.0f64 / 32.0).sqrt();
            GaussianMixture::from_sd(&[
                (3.0 / 7.0, 0.0, sd),
                (2.0 / 7.0, 1.392, sd),
                (2.0 / 7.0, -1.392, sd),
            ])
        }
        "mw_01" => GaussianMixture::from_sd(&[(1.0, 0.0, 1.0)]),
        "mw_02" => GaussianMixture::from_sd(&[
            (0.2, 0.0, 1.0),
            (0.2, 0.5, 2.0 / 3.0),
            (0.6, 13.0 / 12.0, 5.0 / 9.0),
        ]),
        "mw_03" => {
            let parts: Vec<_> = (0..8)
                .map(|l| {
                    let r = (2.0f64 / 3.0).powi(l);
                    (0.125, 3.0 * (r - 1.0), r)
                })
                .collect();
            GaussianMixture::from_sd(&parts)
        }
        "mw_04" => GaussianMixture::from_sd(&[(2.0 / 3.0, 0.0, 1.0), (1.0 / 3.0, 0.0, 0.1)]),
        "mw_05" => GaussianMixture::from_sd(&[(0.1, 0.0, 1.0), (0.9, 0.0, 0.1)]),
        "mw_06" => GaussianMixture::from_sd(&[(0.5, -1.0, 2.0 / 3.0), (0.5, 1.0, 2.0 / 3.0)]),
        "mw_07" => GaussianMixture::from_sd(&[(0.5, -1.5, 0.5), (0.5, 1.5, 0.5)]),
        "mw_08" => GaussianMixture::from_sd(&[(0.75, 0.0, 1.0), (0.25, 1.5, 1.0 / 3.0)]),
        "mw_09" => GaussianMixture::from_sd(&[
            (0.45, -1.2, 0.6),
            (0.45, 1.2, 0.6),
            (0.1, 0.0, 0.25),
        ]),
        "mw_10" => {
            let mut parts = vec![(0.5, 0.0, 1.0)];
            parts.extend((0..5).map(|l| (0.1, l as f64 / 2.0 - 1.0, 0.1)));
            GaussianMixture::from_sd(&parts)
        }
        "mw_11" => {
            let mut parts = vec![(0.49, -1.0, 2.0 / 3.0), (0.49, 1.0, 2.0 / 3.0)];
            parts.extend((0..7).map(|l| (1.0 / 350.0, (l as f64 - 3.0) / 2.0, 0.01)));
            GaussianMixture::from_sd(&parts)
        }
        "mw_12" => {
            let mut parts = vec![(0.5, 0.0, 1.0)];
            parts.extend((-2i32..=2).map(|l| {
                (
                    2f64.powi(1 - l) / 31.0,
                    l as f64 + 0.5,
                    2f64.powi(-l) / 10.0,
                )
            }));
            GaussianMixture::from_sd(&parts)
        }
        "mw_13" => {
            let mut parts: Vec<_> = (0..2)
                .map(|l| (0.46, 2.0 * l as f64 - 1.0, 2.0 / 3.0))
                .collect();
            parts.extend((1..=3).map(|l| (1.0 / 300.0, -(l as f64) / 2.0, 0.01)));
            parts.extend((1..=3).map(|l| (7.0 / 300.0, l as f64 / 2.0, 0.07)));
            GaussianMixture::from_sd(&parts)
        }
        "mw_14" => {
            let parts: Vec<_> = (0..6)
                .map(|l| {
                    let half = 0.5f64.powi(l);
                    (
                        2f64.powi(5 - l) / 63.0,
                        (65.0 - 96.0 * half) / 21.0,
                        (32.0 / 63.0) * half,
                    )
                })
                .collect();
            GaussianMixture::from_sd(&parts)
        }
        "mw_15" => {
            let mut parts: Vec<_> = (0..3)
                .map(|l| (2.0 / 7.0, (12.0 * l as f64 - 15.0) / 7.0, 2.0 / 7.0))
                .collect();
            parts.extend((8..=10).map(|l| (1.0 / 21.0, 2.0 * l as f64 / 7.0, 1.0 / 21.0)));
            GaussianMixture::from_sd(&parts)
        }
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    Ok(m)
}

/// Location and scale removed by [`standardize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub m: f64,
    pub sd: f64,
}

impl StandardizationRecord {
    pub const IDENTITY: StandardizationRecord = StandardizationRecord { m: 0.0, sd: 1.0 };

    #[inline]
    pub fn forward(&self, y: f64) -> f64 {
        (y - self.m) / self.sd
    }

    #[inline]
    pub fn inverse(&self, z: f64) -> f64 {
        self.m + self.sd * z
    }

    /// Density in original units from a density in standardized units.
    #[inline]
    pub fn density_to_original(&self, f_std: f64) -> f64 {
        f_std / self.sd
    }
}

/// Centers to sample mean zero and scales to sample variance one (`n - 1`
/// denominator).
pub fn standardize(data: &[f64]) -> Result<(Vec<f64>, StandardizationRecord)> {
    if data.is_empty() {
        return Err(Error::NoObservations);
    }
    let n = data.len() as f64;
    let m = data.iter().sum::<f64>() / n;
    let ss: f64 = data.iter().map(|y| (y - m).powi(2)).sum();
    if data.len() < 2 || !(ss > 0.0) {
        return Err(Error::ConstantData);
    }
    let sd = (ss / (n - 1.0)).sqrt();
    let rec = StandardizationRecord { m, sd };
    Ok((data.iter().map(|&y| rec.forward(y)).collect(), rec))
}
