//! Revenue benchmarks: the obedient upper bound, the closed-form
//! bang-bang equilibrium values, the ratio bound `Θ`, and the payment-grid
//! optimality check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_stderr, AnalysisError, Z_99};
use crate::engine::{long_run_values, ValueMode};
use crate::market::{
    check_assumption, derived_constants, holds, Assumption, MarketInstance, OrderedTypeConfig, Thresholds,
};
use crate::matching::{assortative_by_score, max_weight_assignment};
use crate::mechanisms::run_fili;
use crate::payments::PaymentRule;
use crate::rng::derive_seed;
use crate::strategies::StrategyKind;

fn max_output_weights(instance: &MarketInstance, keep: impl Fn(usize, usize) -> bool) -> Vec<Vec<f64>> {
    let n = instance.n();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|x| {
                    if keep(i, x) {
                        instance.max_output(i, x) * instance.quality(x)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Most revenue obtainable if every worker exerted maximum effort.
/// Homogeneous-task instances use the sorted-product sum, others the
/// exact assignment optimum.
pub fn obedient_upper_bound(instance: &MarketInstance) -> f64 {
    let n = instance.n();
    if holds(instance, Assumption::HomogeneousTasks) {
        let mut outputs: Vec<f64> = (0..n).map(|i| instance.max_output(i, 0)).collect();
        let mut qualities = instance.qualities().to_vec();
        outputs.sort_by(f64::total_cmp);
        qualities.sort_by(f64::total_cmp);
        outputs.iter().zip(&qualities).map(|(w, g)| w * g).sum()
    } else {
        let weights = max_output_weights(instance, |_, _| true);
        max_weight_assignment(&weights).expect("finite weights").1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub bbe_revenue: f64,
    pub bbe_profit: f64,
    pub obedient_upper_bound: f64,
    pub ratio_revenue: f64,
    pub ratio_profit: f64,
    /// `Θ` for a uniform productivity distribution over the declared range.
    pub theta: f64,
    /// Tasks whose matched worker exerts maximum effort.
    pub working_tasks: Vec<usize>,
}

/// Equilibrium revenue and profit under FILI with quadratic payment
/// `alpha`, from the assortative structure of the equilibrium matching.
/// With task-independent types every worker ranks tasks by quality and
/// every client ranks workers by maximum output, so the matching is
/// assortative without further conditions.
pub fn bbe_closed_form(instance: &MarketInstance, alpha: f64) -> Result<EfficiencyReport, AnalysisError> {
    if !holds(instance, Assumption::HomogeneousTasks) {
        return Err(AnalysisError::AssumptionViolated(Assumption::HomogeneousTasks));
    }
    let n = instance.n();
    let scores: Vec<f64> = (0..n).map(|i| instance.max_output(i, 0)).collect();
    let matching = assortative_by_score(&scores, instance.qualities());
    let (mut revenue, mut profit) = (0.0, 0.0);
    let mut working_tasks = Vec::new();
    for (x, &i) in matching.workers().iter().enumerate() {
        let (f, c, g, e) = (
            instance.productivity(i, x),
            instance.cost(i, x),
            instance.quality(x),
            instance.max_effort(i, x),
        );
        if alpha * f * f * g - c > 0.0 {
            working_tasks.push(x);
            let w = f * e;
            revenue += w * g;
            profit += w * g - alpha * w * w * g;
        }
    }
    let bound = obedient_upper_bound(instance);
    let b = instance.bounds();
    let ratio = |v: f64| if bound > 0.0 { v / bound } else { 0.0 };
    Ok(EfficiencyReport {
        bbe_revenue: revenue,
        bbe_profit: profit,
        obedient_upper_bound: bound,
        ratio_revenue: ratio(revenue),
        ratio_profit: ratio(profit),
        theta: theta_bound(b.f_min, b.f_max, b.e_lower, b.e_upper, n, uniform_cdf(b.f_min, b.f_max)),
        working_tasks,
    })
}

/// CDF of the uniform distribution on `[lo, hi]`.
pub fn uniform_cdf(lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    move |v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// `Θ = (e_l/e_u)·(1 − Δ(min{√(2 f_max), f_max}))^N`.
pub fn theta_bound(f_min: f64, f_max: f64, e_l: f64, e_u: f64, n: usize, cdf: impl Fn(f64) -> f64) -> f64 {
    let point = (2.0 * f_max).sqrt().min(f_max);
    if point <= f_min {
        return e_l / e_u;
    }
    (e_l / e_u) * (1.0 - cdf(point)).powi(n as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    pub theta: f64,
    pub instances: usize,
    pub mean_revenue: f64,
    pub mean_bound: f64,
    pub mean_profit: f64,
    pub revenue_ratio: f64,
    pub profit_ratio: f64,
    /// 99% one-sided lower confidence bound on `E[R − Θ·B]`.
    pub revenue_margin_lower: f64,
    /// 99% one-sided lower confidence bound on `E[Pr − (Θ/2)·B]`.
    pub profit_margin_lower: f64,
    pub revenue_holds: bool,
    pub profit_holds: bool,
}

/// Simulates FILI with MTBB at `α*` on `n_instances` draws of `cfg` and
/// compares revenue and profit with `Θ` times the obedient bound.
pub fn check_theta_bound(cfg: &OrderedTypeConfig, n_instances: usize, seed: u64) -> Result<ThetaReport, AnalysisError> {
    if n_instances == 0 {
        return Err(AnalysisError::InvalidInput("need at least one instance".into()));
    }
    let n = cfg.n_workers;
    let theta = theta_bound(
        cfg.f_min,
        cfg.f_max,
        cfg.e_lower,
        cfg.e_upper(),
        n,
        uniform_cdf(cfg.f_min, cfg.f_max),
    );
    let samples = (0..n_instances)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64, f64), AnalysisError> {
            let instance = cfg.with_seed(derive_seed(&[seed, k as u64])).generate()?;
            for a in [Assumption::OrderedTypes, Assumption::CostCeiling] {
                if !holds(&instance, a) {
                    return Err(AnalysisError::AssumptionViolated(a));
                }
            }
            let alpha = derived_constants(&instance).alpha_star;
            let (trace, _) = run_fili(
                &instance,
                PaymentRule::quadratic(alpha),
                &vec![StrategyKind::Mtbb; n],
                n + 2,
            )?;
            let report = long_run_values(&trace, ValueMode::Limit)?;
            Ok((report.revenue, report.profit, obedient_upper_bound(&instance)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let revenue: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let profit: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let bound: Vec<f64> = samples.iter().map(|s| s.2).collect();
    let d_rev: Vec<f64> = samples.iter().map(|s| s.0 - theta * s.2).collect();
    let d_pro: Vec<f64> = samples.iter().map(|s| s.1 - 0.5 * theta * s.2).collect();
    let (mr, _) = mean_stderr(&revenue);
    let (mp, _) = mean_stderr(&profit);
    let (mb, _) = mean_stderr(&bound);
    let (dr, sr) = mean_stderr(&d_rev);
    let (dp, sp) = mean_stderr(&d_pro);
    let revenue_margin_lower = dr - Z_99 * sr;
    let profit_margin_lower = dp - Z_99 * sp;
    Ok(ThetaReport {
        theta,
        instances: n_instances,
        mean_revenue: mr,
        mean_bound: mb,
        mean_profit: mp,
        revenue_ratio: mr / mb,
        profit_ratio: mp / mb,
        revenue_margin_lower,
        profit_margin_lower,
        revenue_holds: revenue_margin_lower >= 0.0,
        profit_holds: profit_margin_lower >= 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop3Report {
    pub optimal: bool,
    pub fili_revenue: f64,
    pub grid_max: f64,
    pub argmax_alpha: f64,
    /// `(α, best revenue with incentive-compatible efforts)` per grid point.
    pub per_alpha: Vec<(f64, f64)>,
}

/// Sweeps `alphas` and compares the best incentive-compatible revenue at
/// each with FILI under MTBB at `α*`.
pub fn check_prop3_optimality(instance: &MarketInstance, alphas: &[f64]) -> Result<Prop3Report, AnalysisError> {
    for a in [Assumption::HomogeneousTasks, Assumption::SeparatedQualities] {
        if !check_assumption(instance, a, Thresholds::default()).holds {
            return Err(AnalysisError::AssumptionViolated(a));
        }
    }
    let alpha_star = derived_constants(instance).alpha_star;
    if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0 && a <= alpha_star * (1.0 + 1e-12))) {
        return Err(AnalysisError::InvalidInput(format!(
            "alpha grid must lie in (0, {alpha_star}]"
        )));
    }
    let n = instance.n();
    let mut per_alpha = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let weights = max_output_weights(instance, |i, x| {
            let f = instance.productivity(i, x);
            alpha * f * f * instance.quality(x) - instance.cost(i, x) > 0.0
        });
        per_alpha.push((alpha, max_weight_assignment(&weights)?.1));
    }
    let (argmax_alpha, grid_max) =
        per_alpha
            .iter()
            .copied()
            .fold((f64::NAN, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let (trace, _) = run_fili(
        instance,
        PaymentRule::quadratic(alpha_star),
        &vec![StrategyKind::Mtbb; n],
        n + 2,
    )?;
    let fili_revenue = long_run_values(&trace, ValueMode::Limit)?.revenue;
    Ok(Prop3Report {
        optimal: fili_revenue >= grid_max - 1e-9 * grid_max.abs().max(1.0),
        fili_revenue,
        grid_max,
        argmax_alpha,
        per_alpha,
    })
}
