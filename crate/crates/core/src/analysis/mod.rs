//! Equilibrium, stability and efficiency checks.

mod comparison;
mod efficiency;
mod equilibrium;
mod regret;
mod stability;

pub use comparison::{
    best_response_outcome, run_appendix_i_comparison, ComparisonConfig, ComparisonReport, ComparisonRow, Objective,
};
pub use efficiency::{
    bbe_closed_form, check_prop3_optimality, check_theta_bound, obedient_upper_bound, theta_bound, uniform_cdf,
    EfficiencyReport, Prop3Report, ThetaReport,
};
pub use equilibrium::{check_best_response, BestResponseReport, EQUILIBRIUM_TOLERANCE};
pub use regret::{measure_regret_scaling, RegretConfig, RegretPoint, RegretReport};
pub use stability::{check_long_run_stability, BlockingPair, StabilityVerdict};

use thiserror::Error;

use crate::engine::EngineError;
use crate::market::{Assumption, MarketError};
use crate::matching::MatchingError;
use crate::mechanisms::MechanismError;
use crate::payments::PaymentError;
use crate::strategies::StrategyError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("instance violates assumption {0:?}")]
    AssumptionViolated(Assumption),
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Payment(#[from] PaymentError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// One-sided normal quantile at 99%.
pub const Z_99: f64 = 2.326_347_874_040_841;

/// Sample mean and its standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
