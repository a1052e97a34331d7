//! Long-run stability: no unmatched pair can both gain from a constant
//! effort level.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::engine::OutcomeReport;
use crate::market::MarketInstance;
use crate::matching::Matching;
use crate::payments::PaymentRule;

/// Gains must exceed this to count as strict.
const STRICT_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockingPair {
    pub worker: usize,
    pub task: usize,
    /// Effort at which both sides gain the most in the worse-off sense.
    pub effort: f64,
    pub worker_gain: f64,
    pub client_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub blocking_pairs: Vec<BlockingPair>,
}

/// Checks every unmatched pair against the limit values in `values`.
pub fn check_long_run_stability(
    instance: &MarketInstance,
    payment: &PaymentRule,
    matching: &Matching,
    values: &OutcomeReport,
) -> Result<StabilityVerdict, AnalysisError> {
    let n = instance.n();
    if matching.len() != n || values.worker_utilities.len() != n || values.client_utilities.len() != n {
        return Err(AnalysisError::InvalidInput(
            "matching and values must cover every agent".into(),
        ));
    }
    let mut blocking_pairs = Vec::new();
    for i in 0..n {
        for y in 0..n {
            if matching.task_of(i) == y {
                continue;
            }
            let (f, c, g) = (instance.productivity(i, y), instance.cost(i, y), instance.quality(y));
            let mut witness: Option<BlockingPair> = None;
            for e in instance.grid(i, y) {
                let worker_gain = payment.worker_value(f, c, e, g) - values.worker_utilities[i];
                let client_gain = payment.client_value(f, e, g) - values.client_utilities[y];
                if worker_gain > STRICT_GAIN && client_gain > STRICT_GAIN {
                    let better =
                        witness.is_none_or(|w| worker_gain.min(client_gain) > w.worker_gain.min(w.client_gain));
                    if better {
                        witness = Some(BlockingPair {
                            worker: i,
                            task: y,
                            effort: e,
                            worker_gain,
                            client_gain,
                        });
                    }
                }
            }
            blocking_pairs.extend(witness);
        }
    }
    Ok(StabilityVerdict {
        stable: blocking_pairs.is_empty(),
        blocking_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{long_run_values, ValueMode};
    use crate::mechanisms::{run_baseline_average_output, run_fili};
    use crate::strategies::StrategyKind;

    fn counterexample() -> MarketInstance {
        MarketInstance::new(
            vec![vec![6.0, 2.0], vec![5.0, 4.0]],
            vec![vec![1.0, 2.0], vec![1.0, 2.0]],
            vec![2.0, 1.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn fili_stable_average_output_blocked() {
        let m = counterexample();
        let p = PaymentRule::quadratic(1.0 / 12.0);
        let s = vec![StrategyKind::Mtbb; 2];
        let (trace, matching) = run_fili(&m, p, &s, 6).unwrap();
        let v = long_run_values(&trace, ValueMode::Limit).unwrap();
        assert!(check_long_run_stability(&m, &p, &matching, &v).unwrap().stable);

        let (trace, matching) = run_baseline_average_output(&m, p, &s, 6).unwrap();
        let v = long_run_values(&trace, ValueMode::Limit).unwrap();
        let verdict = check_long_run_stability(&m, &p, &matching, &v).unwrap();
        assert!(!verdict.stable);
        let pair = verdict.blocking_pairs[0];
        assert_eq!((pair.worker, pair.task, pair.effort), (0, 0, 1.0));
        assert!((pair.worker_gain - 5.0).abs() < 1e-12);
        assert!((pair.client_gain - (6.0 - 35.0 / 6.0)).abs() < 1e-12);
    }
}
