//! Exhaustive best-response search under FILI.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::engine::{long_run_values, ValueMode};
use crate::market::MarketInstance;
use crate::mechanisms::run_fili;
use crate::payments::PaymentRule;
use crate::strategies::{StrategyKind, StrategySpace};

pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseReport {
    pub worker: usize,
    pub is_mtbb_best: bool,
    pub best_value: f64,
    pub mtbb_value: f64,
    /// The maximizing tabular strategy (first in enumeration order).
    pub best_deviation: StrategyKind,
    pub strategies_checked: u64,
}

fn limit_utility(
    instance: &MarketInstance,
    payment: PaymentRule,
    profile: &[StrategyKind],
    worker: usize,
) -> Result<f64, AnalysisError> {
    let (trace, _) = run_fili(instance, payment, profile, instance.n() + 2)?;
    Ok(long_run_values(&trace, ValueMode::Limit)?.worker_utilities[worker])
}

/// Compares MTBB against every payoff-relevant tabular strategy of
/// `worker`, holding `others` fixed (its own entry is ignored).
pub fn check_best_response(
    instance: &MarketInstance,
    payment: PaymentRule,
    worker: usize,
    others: &[StrategyKind],
    cap: u64,
) -> Result<BestResponseReport, AnalysisError> {
    let n = instance.n();
    if others.len() != n || worker >= n {
        return Err(AnalysisError::InvalidInput(format!(
            "need {n} strategies and a worker below {n}"
        )));
    }
    let space = StrategySpace::new(instance, worker, cap)?;
    let with = |s: StrategyKind| {
        let mut p = others.to_vec();
        p[worker] = s;
        p
    };
    let mtbb_value = limit_utility(instance, payment, &with(StrategyKind::Mtbb), worker)?;
    let (best_value, best_index) = (0..space.len())
        .into_par_iter()
        .map(|k| limit_utility(instance, payment, &with(space.get(k)), worker).map(|v| (v, k)))
        .try_reduce(
            || (f64::NEG_INFINITY, u64::MAX),
            |a, b| Ok(if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }),
        )?;
    Ok(BestResponseReport {
        worker,
        is_mtbb_best: mtbb_value >= best_value - EQUILIBRIUM_TOLERANCE,
        best_value,
        mtbb_value,
        best_deviation: space.get(best_index),
        strategies_checked: space.len(),
    })
}
