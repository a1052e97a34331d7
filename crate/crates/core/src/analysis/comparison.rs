//! FILI against initial-belief matching, each with its payment chosen
//! from linear and quadratic families, on two-population markets.
//!
//! Workers know the payment family and play best responses: every worker
//! exerts maximum effort while assessed (more output only improves its
//! ranking), reports tasks by best-response stage utility, and in the
//! operational phase exerts its best-response effort on the grid.
//!
//! Besides the two optimized mechanisms, each worker count reports FILI
//! with the payment restricted to the quadratic family. Linear payments
//! induce interior efforts, which leave room for blocking pairs that the
//! bang-bang efforts of quadratic payments rule out.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_long_run_stability, mean_stderr, obedient_upper_bound, AnalysisError};
use crate::engine::{OutcomeReport, ValueMode};
use crate::market::{generate_instance, GenerationConfig, MarketInstance};
use crate::matching::{client_preferences_from_outputs, gale_shapley, Matching, PreferenceList};
use crate::mechanisms::belief_matching;
use crate::payments::PaymentRule;
use crate::rng::derive_seed;
use crate::strategies::{best_response_effort, rank_tasks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Revenue,
    Profit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub generation: GenerationConfig,
    pub worker_counts: Vec<usize>,
    pub instances_per_count: usize,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid() -> usize {
    50
}

fn default_objective() -> Objective {
    Objective::Revenue
}

impl ComparisonConfig {
    /// Reference parameters, `N = 10, 20, …, 100`.
    pub fn reference(instances_per_count: usize, seed: u64) -> Self {
        ComparisonConfig {
            generation: GenerationConfig::reference(10, seed),
            worker_counts: (1..=10).map(|k| 10 * k).collect(),
            instances_per_count,
            grid_points: default_grid(),
            objective: Objective::Revenue,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n_workers: usize,
    pub mechanism: String,
    pub mean_revenue: f64,
    pub revenue_stderr: f64,
    pub mean_profit: f64,
    pub profit_stderr: f64,
    /// Mean revenue over mean obedient bound.
    pub revenue_ratio: f64,
    pub profit_ratio: f64,
    pub stable_fraction: Option<f64>,
    /// Share of instances where the chosen payment was linear.
    pub linear_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub objective: Objective,
    pub rows: Vec<ComparisonRow>,
    /// Mean FILI revenue over mean baseline revenue, minus one, per count.
    pub gains: Vec<(usize, f64)>,
    pub overall_gain: f64,
}

/// Limit values of `matching` when every worker plays its best-response
/// effort to `payment`.
pub fn best_response_outcome(instance: &MarketInstance, payment: &PaymentRule, matching: &Matching) -> OutcomeReport {
    let n = instance.n();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut revenue = 0.0;
    for i in 0..n {
        let x = matching.task_of(i);
        let (f, c, g) = (instance.productivity(i, x), instance.cost(i, x), instance.quality(x));
        let e = best_response_effort(payment, f, c, g, &instance.grid(i, x));
        u[i] = payment.worker_value(f, c, e, g);
        v[x] = payment.client_value(f, e, g);
        revenue += f * e * g;
    }
    OutcomeReport {
        profit: v.iter().sum(),
        worker_utilities: u,
        client_utilities: v,
        revenue,
        matching: Some(matching.clone()),
        mode: ValueMode::Limit,
    }
}

fn fili_outcome(instance: &MarketInstance, payment: &PaymentRule, clients: &[PreferenceList]) -> Matching {
    let n = instance.n();
    let workers: Vec<PreferenceList> = (0..n)
        .map(|i| {
            let values: Vec<f64> = (0..n)
                .map(|x| {
                    let (f, c, g) = (instance.productivity(i, x), instance.cost(i, x), instance.quality(x));
                    let e = best_response_effort(payment, f, c, g, &instance.grid(i, x));
                    payment.worker_value(f, c, e, g)
                })
                .collect();
            PreferenceList::new(i, rank_tasks(&values, instance.qualities()))
        })
        .collect();
    gale_shapley(&workers, clients).expect("complete lists").matching
}

fn payment_grid(cfg: &GenerationConfig, points: usize) -> Vec<PaymentRule> {
    let alpha_cap = 1.0 / (2.0 * cfg.productivity_upper_1.max(cfg.productivity_upper_2) * cfg.shared_max_effort);
    let mut grid = Vec::with_capacity(2 * points);
    for k in 1..=points {
        let s = k as f64 / points as f64;
        grid.push(PaymentRule::linear(s));
        grid.push(PaymentRule::quadratic(alpha_cap * s));
    }
    grid
}

struct Chosen {
    outcome: OutcomeReport,
    payment: PaymentRule,
    matching: Matching,
}

fn optimize(
    grid: &[PaymentRule],
    objective: Objective,
    mut evaluate: impl FnMut(&PaymentRule) -> (Matching, OutcomeReport),
) -> Chosen {
    let mut best: Option<Chosen> = None;
    for p in grid {
        let (matching, outcome) = evaluate(p);
        let score = |o: &OutcomeReport| match objective {
            Objective::Revenue => o.revenue,
            Objective::Profit => o.profit,
        };
        if best.as_ref().is_none_or(|b| score(&outcome) > score(&b.outcome)) {
            best = Some(Chosen {
                outcome,
                payment: *p,
                matching,
            });
        }
    }
    best.expect("non-empty payment grid")
}

struct InstanceResult {
    bound: f64,
    fili: Chosen,
    fili_stable: bool,
    quadratic: Chosen,
    quadratic_stable: bool,
    baseline: Chosen,
    baseline_stable: bool,
}

fn one_instance(
    cfg: &GenerationConfig,
    grid_points: usize,
    objective: Objective,
) -> Result<InstanceResult, AnalysisError> {
    let instance = generate_instance(cfg)?;
    let n = instance.n();
    let grid = payment_grid(cfg, grid_points);
    let outputs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|x| instance.max_output(i, x)).collect())
        .collect();
    let clients = client_preferences_from_outputs(&outputs);
    let fili_eval = |p: &PaymentRule| {
        let m = fili_outcome(&instance, p, &clients);
        let o = best_response_outcome(&instance, p, &m);
        (m, o)
    };
    let fili = optimize(&grid, objective, fili_eval);
    let quadratic_grid: Vec<PaymentRule> = grid
        .iter()
        .copied()
        .filter(|p| matches!(p, PaymentRule::Quadratic { .. }))
        .collect();
    let quadratic = optimize(&quadratic_grid, objective, fili_eval);
    let beliefs: Vec<f64> = cfg.prior_means().iter().map(|f| f * cfg.shared_max_effort).collect();
    let belief_match = belief_matching(&beliefs, instance.qualities(), derive_seed(&[cfg.seed, 0x7469]));
    let baseline = optimize(&grid, objective, |p| {
        (belief_match.clone(), best_response_outcome(&instance, p, &belief_match))
    });
    let stable = |c: &Chosen| -> Result<bool, AnalysisError> {
        Ok(check_long_run_stability(&instance, &c.payment, &c.matching, &c.outcome)?.stable)
    };
    let fili_stable = stable(&fili)?;
    let quadratic_stable = stable(&quadratic)?;
    let baseline_stable = stable(&baseline)?;
    Ok(InstanceResult {
        bound: obedient_upper_bound(&instance),
        fili,
        fili_stable,
        quadratic,
        quadratic_stable,
        baseline,
        baseline_stable,
    })
}

fn row(
    n: usize,
    mechanism: &str,
    results: &[InstanceResult],
    pick: impl Fn(&InstanceResult) -> (&Chosen, bool),
) -> ComparisonRow {
    let revenue: Vec<f64> = results.iter().map(|r| pick(r).0.outcome.revenue).collect();
    let profit: Vec<f64> = results.iter().map(|r| pick(r).0.outcome.profit).collect();
    let (mb, _) = mean_stderr(&results.iter().map(|r| r.bound).collect::<Vec<_>>());
    let (mr, sr) = mean_stderr(&revenue);
    let (mp, sp) = mean_stderr(&profit);
    let count = results.len() as f64;
    ComparisonRow {
        n_workers: n,
        mechanism: mechanism.to_string(),
        mean_revenue: mr,
        revenue_stderr: sr,
        mean_profit: mp,
        profit_stderr: sp,
        revenue_ratio: mr / mb,
        profit_ratio: mp / mb,
        stable_fraction: Some(results.iter().filter(|r| pick(r).1).count() as f64 / count),
        linear_fraction: Some(
            results
                .iter()
                .filter(|r| matches!(pick(r).0.payment, PaymentRule::Linear { .. }))
                .count() as f64
                / count,
        ),
    }
}

pub fn run_appendix_i_comparison(cfg: &ComparisonConfig) -> Result<ComparisonReport, AnalysisError> {
    if cfg.instances_per_count == 0 || cfg.grid_points == 0 || cfg.worker_counts.is_empty() {
        return Err(AnalysisError::InvalidInput(
            "need instances, grid points and worker counts".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut gains = Vec::new();
    let (mut fili_total, mut base_total) = (0.0, 0.0);
    for &n in &cfg.worker_counts {
        let results = (0..cfg.instances_per_count)
            .into_par_iter()
            .map(|k| {
                let mut g = cfg.generation.clone();
                g.n_workers = n;
                g.seed = derive_seed(&[cfg.seed, n as u64, k as u64]);
                one_instance(&g, cfg.grid_points, cfg.objective)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let fili = row(n, "fili", &results, |r| (&r.fili, r.fili_stable));
        let quadratic = row(n, "fili-quadratic", &results, |r| (&r.quadratic, r.quadratic_stable));
        let base = row(n, "initial-belief", &results, |r| (&r.baseline, r.baseline_stable));
        let (mb, sb) = mean_stderr(&results.iter().map(|r| r.bound).collect::<Vec<_>>());
        gains.push((n, fili.mean_revenue / base.mean_revenue - 1.0));
        fili_total += fili.mean_revenue;
        base_total += base.mean_revenue;
        rows.push(fili);
        rows.push(quadratic);
        rows.push(base);
        rows.push(ComparisonRow {
            n_workers: n,
            mechanism: "upper-bound".into(),
            mean_revenue: mb,
            revenue_stderr: sb,
            // profit never exceeds revenue
            mean_profit: mb,
            profit_stderr: sb,
            revenue_ratio: 1.0,
            profit_ratio: 1.0,
            stable_fraction: None,
            linear_fraction: None,
        });
    }
    Ok(ComparisonReport {
        objective: cfg.objective,
        rows,
        gains,
        overall_gain: fili_total / base_total - 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_comparison_runs() {
        let mut cfg = ComparisonConfig::reference(4, 7);
        cfg.worker_counts = vec![4, 6];
        cfg.grid_points = 10;
        let r = run_appendix_i_comparison(&cfg).unwrap();
        assert_eq!(r.rows.len(), 8);
        for row in r.rows.iter().filter(|r| r.mechanism != "upper-bound") {
            assert!(row.revenue_ratio <= 1.0 + 1e-12);
        }
        assert_eq!(r, run_appendix_i_comparison(&cfg).unwrap());
    }

    #[test]
    fn truthful_beliefs_reach_assortative() {
        let m = generate_instance(&GenerationConfig::reference(6, 3)).unwrap();
        let truth: Vec<f64> = (0..6).map(|i| m.max_output(i, 0)).collect();
        let b = belief_matching(&truth, m.qualities(), 0);
        assert_eq!(b, crate::matching::assortative_matching(&m).unwrap());
    }
}
