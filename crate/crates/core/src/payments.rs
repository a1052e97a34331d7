//! Payment rules and per-slot settlement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{derived_constants, MarketInstance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PaymentError {
    #[error("alpha must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("alpha {alpha} exceeds the participation bound {alpha_star}")]
    AlphaTooLarge { alpha: f64, alpha_star: f64 },
    #[error("beta must lie in [0, 1], got {0}")]
    BadBeta(f64),
}

/// Relative slack when comparing `α` against `α*`, so that `α*` computed
/// along a different arithmetic path is still accepted.
const ALPHA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PaymentRule {
    /// `α·W²·g`
    Quadratic { alpha: f64 },
    /// `β·W·g`, a share of revenue.
    Linear { beta: f64 },
    /// `α·R²/g − α·σ²/g` on realized revenue `R`.
    StochasticQuadratic { alpha: f64 },
}

pub fn settle_quadratic(w: f64, g: f64, alpha: f64) -> f64 {
    alpha * w * w * g
}

pub fn settle_linear(w: f64, g: f64, beta: f64) -> f64 {
    beta * w * g
}

/// Unbiased for the noise-free quadratic payment; may be negative.
pub fn settle_stochastic_quadratic(revenue: f64, g: f64, variance: f64, alpha: f64) -> f64 {
    alpha * revenue * revenue / g - alpha * variance / g
}

impl PaymentRule {
    pub fn quadratic(alpha: f64) -> Self {
        PaymentRule::Quadratic { alpha }
    }

    pub fn linear(beta: f64) -> Self {
        PaymentRule::Linear { beta }
    }

    pub fn stochastic_quadratic(alpha: f64) -> Self {
        PaymentRule::StochasticQuadratic { alpha }
    }

    pub fn family(&self) -> &'static str {
        match self {
            PaymentRule::Quadratic { .. } => "quadratic",
            PaymentRule::Linear { .. } => "linear",
            PaymentRule::StochasticQuadratic { .. } => "stochastic-quadratic",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            PaymentRule::Quadratic { alpha } | PaymentRule::StochasticQuadratic { alpha } => Some(alpha),
            PaymentRule::Linear { .. } => None,
        }
    }

    /// Parameter checks that need no instance.
    pub fn validate_shape(&self) -> Result<(), PaymentError> {
        match *self {
            PaymentRule::Quadratic { alpha } | PaymentRule::StochasticQuadratic { alpha } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(PaymentError::BadAlpha(alpha));
                }
            }
            PaymentRule::Linear { beta } => {
                if !(0.0..=1.0).contains(&beta) {
                    return Err(PaymentError::BadBeta(beta));
                }
            }
        }
        Ok(())
    }

    /// Also enforces `α ≤ α*` for the instance's declared ranges.
    pub fn validate(&self, instance: &MarketInstance) -> Result<(), PaymentError> {
        self.validate_shape()?;
        if let Some(alpha) = self.alpha() {
            let alpha_star = derived_constants(instance).alpha_star;
            if alpha > alpha_star * (1.0 + ALPHA_SLACK) {
                return Err(PaymentError::AlphaTooLarge { alpha, alpha_star });
            }
        }
        Ok(())
    }

    /// Payment for one slot. `output` is the observed output, `revenue`
    /// the client's realized revenue and `variance` the noise variance of
    /// the pair (zero in deterministic mode).
    pub fn settle(&self, output: f64, revenue: f64, g: f64, variance: f64) -> f64 {
        match *self {
            PaymentRule::Quadratic { alpha } => settle_quadratic(output, g, alpha),
            PaymentRule::Linear { beta } => settle_linear(output, g, beta),
            PaymentRule::StochasticQuadratic { alpha } => settle_stochastic_quadratic(revenue, g, variance, alpha),
        }
    }

    /// Expected payment at effort `e` for productivity `f` on quality `g`.
    pub fn expected_payment(&self, f: f64, e: f64, g: f64) -> f64 {
        match *self {
            PaymentRule::Quadratic { alpha } | PaymentRule::StochasticQuadratic { alpha } => {
                settle_quadratic(f * e, g, alpha)
            }
            PaymentRule::Linear { beta } => settle_linear(f * e, g, beta),
        }
    }

    /// Expected stage utility of a worker exerting `e`.
    pub fn worker_value(&self, f: f64, c: f64, e: f64, g: f64) -> f64 {
        self.expected_payment(f, e, g) - c * e * e
    }

    /// Expected stage utility of the client.
    pub fn client_value(&self, f: f64, e: f64, g: f64) -> f64 {
        f * e * g - self.expected_payment(f, e, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{NoiseFamily, NoiseModel};
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_examples() {
        assert_eq!(settle_quadratic(0.0, 3.0, 0.1), 0.0);
        assert_relative_eq!(settle_quadratic(2.0, 3.0, 0.1), 1.2, epsilon = 1e-15);
        assert_relative_eq!(settle_quadratic(6.0, 2.0, 1.0 / 12.0), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_examples() {
        assert_eq!(settle_linear(5.0, 2.0, 0.5), 5.0);
        assert_eq!(settle_linear(7.0, 3.0, 0.0), 0.0);
        let rule = PaymentRule::linear(1.0);
        assert_eq!(rule.client_value(3.0, 1.0, 2.0), 0.0);
    }

    #[test]
    fn stochastic_examples() {
        assert_relative_eq!(
            settle_stochastic_quadratic(2.0 * 3.0, 3.0, 0.0, 0.1),
            settle_quadratic(2.0, 3.0, 0.1),
            epsilon = 1e-12
        );
        assert_relative_eq!(settle_stochastic_quadratic(0.0, 1.0, 1.0, 0.1), -0.1, epsilon = 1e-15);
    }

    #[test]
    fn stochastic_payment_is_unbiased() {
        let (f, e, g, alpha, var) = (3.0, 0.7, 2.0, 0.05, 4.0);
        let noise = NoiseModel::uniform_variance(1, var, NoiseFamily::Gaussian, 11);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|t| settle_stochastic_quadratic(f * e * g + noise.draw(0, 0, t), g, var, alpha))
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let target = alpha * f * f * g * e * e;
        assert!(
            (mean - target).abs() <= 3.0 * sd / (n as f64).sqrt(),
            "{mean} vs {target}"
        );
    }

    #[test]
    fn client_profit_non_negative_at_alpha_star() {
        let w_max = 10.0;
        let alpha = 1.0 / (2.0 * w_max);
        for k in 0..=100 {
            let w = w_max * k as f64 / 100.0;
            let g = 1.5;
            let profit = w * g - settle_quadratic(w, g, alpha);
            assert!(profit >= 0.0);
            assert!(profit >= 0.5 * w * g - 1e-12);
        }
    }

    #[test]
    fn validation() {
        assert!(PaymentRule::linear(1.2).validate_shape().is_err());
        assert!(PaymentRule::quadratic(0.0).validate_shape().is_err());
        let m = MarketInstance::new(
            vec![vec![6.0, 2.0], vec![5.0, 4.0]],
            vec![vec![1.0, 2.0], vec![1.0, 2.0]],
            vec![2.0, 1.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            1.0,
        )
        .unwrap();
        assert!(PaymentRule::quadratic(1.0 / 12.0).validate(&m).is_ok());
        assert!(matches!(
            PaymentRule::quadratic(0.1).validate(&m),
            Err(PaymentError::AlphaTooLarge { .. })
        ));
    }

    #[test]
    fn serde_shape() {
        let rule: PaymentRule = serde_json::from_str(r#"{"family":"stochastic-quadratic","alpha":0.1}"#).unwrap();
        assert_eq!(rule, PaymentRule::stochastic_quadratic(0.1));
        let s = serde_json::to_string(&PaymentRule::linear(0.5)).unwrap();
        assert_eq!(s, r#"{"family":"linear","beta":0.5}"#);
    }
}
