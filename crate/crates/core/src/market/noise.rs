use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{MarketError, MarketInstance, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// Uniform on `[-σ√3, σ√3]`.
    UniformSymmetric,
    None,
}

/// Additive zero-mean revenue noise `Z(i,x)` with per-pair variance.
///
/// Draws are addressed by `(worker, task, slot)`: the value for a given
/// triple never depends on which other draws were made, so changing one
/// worker's strategy leaves every other worker's noise untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub variances: Matrix,
    #[serde(default)]
    pub distribution_family: NoiseFamily,
    pub seed: u64,
}

impl NoiseModel {
    pub fn uniform_variance(n: usize, variance: f64, family: NoiseFamily, seed: u64) -> Self {
        NoiseModel {
            variances: vec![vec![variance; n]; n],
            distribution_family: family,
            seed,
        }
    }

    pub fn silent(n: usize) -> Self {
        Self::uniform_variance(n, 0.0, NoiseFamily::None, 0)
    }

    pub fn validate(&self, instance: &MarketInstance) -> Result<(), MarketError> {
        let n = instance.n();
        if self.variances.len() != n || self.variances.iter().any(|r| r.len() != n) {
            return Err(MarketError::Dimension {
                what: "noise variances",
                expected: n,
                found: self.variances.len(),
            });
        }
        for (i, row) in self.variances.iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(MarketError::OutOfRange {
                        what: "noise variance",
                        i,
                        x,
                        value: v,
                        lo: 0.0,
                        hi: f64::INFINITY,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn variance(&self, i: usize, x: usize) -> f64 {
        match self.distribution_family {
            NoiseFamily::None => 0.0,
            _ => self.variances[i][x],
        }
    }

    pub fn is_silent(&self) -> bool {
        self.distribution_family == NoiseFamily::None || self.variances.iter().flatten().all(|&v| v == 0.0)
    }

    pub fn draw(&self, i: usize, x: usize, t: u64) -> f64 {
        let var = self.variance(i, x);
        if var == 0.0 {
            return 0.0;
        }
        let sd = var.sqrt();
        let mut r = rng::stream(&[self.seed, i as u64, x as u64, t]);
        match self.distribution_family {
            NoiseFamily::Gaussian => {
                let z: f64 = StandardNormal.sample(&mut r);
                sd * z
            }
            NoiseFamily::UniformSymmetric => {
                let half_width = sd * 3f64.sqrt();
                r.random_range(-half_width..=half_width)
            }
            NoiseFamily::None => 0.0,
        }
    }
}
