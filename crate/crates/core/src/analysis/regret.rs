//! Worker regret and revenue ratio of IILI over growing horizons.
//!
//! A worker's per-slot benchmark is its best achievable stage utility
//! `max_x max(0, α·F²·g − C)·(e^max)²` while being assessed or reporting,
//! and its noise-free FILI equilibrium utility once matched. Regret is the
//! benchmark average minus the realized time-average utility.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_stderr, obedient_upper_bound, AnalysisError};
use crate::engine::{long_run_values, ValueMode};
use crate::market::{derived_constants, MarketInstance, NoiseFamily, NoiseModel};
use crate::mechanisms::{run_fili, run_mechanism, MechanismKind, MechanismSpec};
use crate::payments::PaymentRule;
use crate::rng::derive_seed;
use crate::strategies::StrategyKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretConfig {
    pub horizons: Vec<usize>,
    pub n_runs: usize,
    pub variance: f64,
    #[serde(default)]
    pub family: NoiseFamily,
    /// Defaults to `α*`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub horizon: usize,
    pub sub_phase_length: usize,
    pub mean_regret: f64,
    pub regret_stderr: f64,
    pub revenue_ratio: f64,
    pub revenue_ratio_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub points: Vec<RegretPoint>,
    /// Least-squares slope of `ln(mean regret)` on `ln T`; `None` when a
    /// mean regret is not positive.
    pub slope: Option<f64>,
}

/// Runs IILI with stochastic MTBB and sub-phase length `⌊√T⌋` for each
/// horizon and reports mean regret (over workers and runs) and the mean
/// revenue ratio to the obedient bound.
pub fn measure_regret_scaling(instance: &MarketInstance, cfg: &RegretConfig) -> Result<RegretReport, AnalysisError> {
    if cfg.n_runs == 0 || cfg.horizons.is_empty() {
        return Err(AnalysisError::InvalidInput(
            "need at least one run and one horizon".into(),
        ));
    }
    let n = instance.n();
    let alpha = cfg.alpha.unwrap_or(derived_constants(instance).alpha_star);
    let det = PaymentRule::quadratic(alpha);
    let (trace, _) = run_fili(instance, det, &vec![StrategyKind::Mtbb; n], n + 2)?;
    let limit = long_run_values(&trace, ValueMode::Limit)?.worker_utilities;
    let best: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .map(|x| {
                    let e = instance.max_effort(i, x);
                    det.worker_value(instance.productivity(i, x), instance.cost(i, x), e, instance.quality(x))
                        .max(0.0)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let bound = obedient_upper_bound(instance);
    let strategies = vec![StrategyKind::StochasticMtbb; n];

    let mut points = Vec::with_capacity(cfg.horizons.len());
    for &horizon in &cfg.horizons {
        let l = (horizon as f64).sqrt().floor() as usize;
        let spec = MechanismSpec::new(MechanismKind::Iili, PaymentRule::stochastic_quadratic(alpha), horizon)
            .with_sub_phase(l)
            .without_records();
        let learning = (n * l + 1).min(horizon);
        let benchmark: Vec<f64> = (0..n)
            .map(|i| (learning as f64 * best[i] + (horizon - learning) as f64 * limit[i]) / horizon as f64)
            .collect();
        let runs = (0..cfg.n_runs)
            .into_par_iter()
            .map(|k| -> Result<(f64, f64), AnalysisError> {
                let noise = NoiseModel::uniform_variance(
                    n,
                    cfg.variance,
                    cfg.family,
                    derive_seed(&[cfg.seed, horizon as u64, k as u64]),
                );
                let (trace, _) = run_mechanism(&spec, instance, Some(&noise), &strategies)?;
                let r = long_run_values(&trace, ValueMode::FiniteAverage)?;
                let regret = (0..n).map(|i| benchmark[i] - r.worker_utilities[i]).sum::<f64>() / n as f64;
                Ok((regret, r.revenue / bound))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (mean_regret, regret_stderr) = mean_stderr(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
        let (revenue_ratio, revenue_ratio_stderr) = mean_stderr(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
        points.push(RegretPoint {
            horizon,
            sub_phase_length: l,
            mean_regret,
            regret_stderr,
            revenue_ratio,
            revenue_ratio_stderr,
        });
    }
    let slope = if points.len() >= 2 && points.iter().all(|p| p.mean_regret > 0.0) {
        let xs: Vec<f64> = points.iter().map(|p| (p.horizon as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.mean_regret.ln()).collect();
        Some(ols_slope(&xs, &ys))
    } else {
        None
    };
    Ok(RegretReport { points, slope })
}

pub(crate) fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
