//! Worker strategies.
//!
//! A worker sees only what the knowledge structure allows: its own effort
//! limits and costs, the public task qualities, and per-slot payments. In
//! stochastic mode it additionally sees realized revenue and `α`.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::MarketInstance;
use crate::mechanisms::PhaseLabel;
use crate::payments::PaymentRule;

/// Default ceiling on the size of an enumerated strategy space.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("worker {worker} reached the reporting slot without observing task {task}")]
    LedgerIncomplete { worker: usize, task: usize },
    #[error("strategy space has {count} members, above the cap of {cap}")]
    ExplosionGuard { count: u64, cap: u64 },
    #[error("worker {worker}: {message}")]
    BadParameter { worker: usize, message: String },
    #[error("worker {worker}: stochastic strategy needs revenue and alpha observations")]
    MissingKnowledge { worker: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategyKind {
    Mtbb,
    StochasticMtbb,
    ZeroEffort,
    /// Constant level, capped at each task's maximum effort.
    ConstantEffort {
        level: f64,
    },
    /// Effort per task during assessment, a fixed report, and a constant
    /// operational level capped at the assigned task's maximum effort.
    Tabular {
        assessment_efforts: Vec<f64>,
        reported_list: Vec<usize>,
        operational_effort: f64,
    },
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Mtbb => "mtbb",
            StrategyKind::StochasticMtbb => "stochastic-mtbb",
            StrategyKind::ZeroEffort => "zero-effort",
            StrategyKind::ConstantEffort { .. } => "constant-effort",
            StrategyKind::Tabular { .. } => "tabular",
        }
    }

    /// Checks every effort the strategy can emit against the worker's grids.
    pub fn validate(&self, instance: &MarketInstance, worker: usize) -> Result<(), StrategyError> {
        let n = instance.n();
        let bad = |message: String| StrategyError::BadParameter { worker, message };
        let union_max = (0..n).map(|x| instance.max_effort(worker, x)).fold(0.0, f64::max);
        let on_union_grid = |level: f64| {
            level >= 0.0 && (0..n).any(|x| instance.is_on_grid(worker, x, level.min(instance.max_effort(worker, x))))
        };
        match self {
            StrategyKind::ConstantEffort { level } => {
                if !on_union_grid(*level) || *level > union_max * (1.0 + 1e-9) {
                    return Err(bad(format!("constant effort {level} is off the effort grid")));
                }
            }
            StrategyKind::Tabular {
                assessment_efforts,
                reported_list,
                operational_effort,
            } => {
                if assessment_efforts.len() != n {
                    return Err(bad(format!(
                        "{} assessment efforts for {n} tasks",
                        assessment_efforts.len()
                    )));
                }
                for (x, &e) in assessment_efforts.iter().enumerate() {
                    if !instance.is_on_grid(worker, x, e) {
                        return Err(bad(format!("assessment effort {e} is off the grid of task {x}")));
                    }
                }
                let mut sorted = reported_list.clone();
                sorted.sort_unstable();
                if sorted != (0..n).collect::<Vec<_>>() {
                    return Err(bad(format!("reported list {reported_list:?} is not a permutation")));
                }
                if !on_union_grid(*operational_effort) || *operational_effort > union_max * (1.0 + 1e-9) {
                    return Err(bad(format!(
                        "operational effort {operational_effort} is off the effort grid"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// What a worker knows about itself and the market.
#[derive(Debug, Clone, Copy)]
pub struct WorkerView<'a> {
    pub worker: usize,
    pub max_effort: &'a [f64],
    pub cost: &'a [f64],
    pub qualities: &'a [f64],
    /// Only exposed in stochastic mode.
    pub alpha: Option<f64>,
}

impl<'a> WorkerView<'a> {
    pub fn new(instance: &'a MarketInstance, worker: usize, alpha: Option<f64>) -> Self {
        WorkerView {
            worker,
            max_effort: &instance.max_effort_matrix()[worker],
            cost: &instance.cost_matrix()[worker],
            qualities: instance.qualities(),
            alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotContext {
    pub t: usize,
    pub phase: PhaseLabel,
    pub task: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub effort: f64,
    pub report: Option<Vec<usize>>,
}

/// What the worker learns after a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub phase: PhaseLabel,
    pub task: usize,
    pub effort: f64,
    pub payment: f64,
    /// `C·e²`
    pub effort_cost: f64,
    /// Realized revenue, stochastic mode only.
    pub revenue: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct TaskStats {
    samples: usize,
    payment_sum: f64,
    cost_sum: f64,
    productivity_samples: usize,
    productivity_sum: f64,
}

/// Per-task payments and costs observed during assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerLedger {
    tasks: Vec<TaskStats>,
}

impl WorkerLedger {
    pub fn new(n: usize) -> Self {
        WorkerLedger {
            tasks: vec![TaskStats::default(); n],
        }
    }

    pub fn visited(&self, x: usize) -> bool {
        self.tasks[x].samples > 0
    }

    pub fn is_complete(&self) -> bool {
        self.tasks.iter().all(|s| s.samples > 0)
    }

    /// Mean observed payment `P(i,x)`.
    pub fn payment(&self, x: usize) -> Option<f64> {
        let s = &self.tasks[x];
        (s.samples > 0).then(|| s.payment_sum / s.samples as f64)
    }

    /// Mean observed cost `C̄(i,x)`.
    pub fn observed_cost(&self, x: usize) -> Option<f64> {
        let s = &self.tasks[x];
        (s.samples > 0).then(|| s.cost_sum / s.samples as f64)
    }

    /// `U(i,x) = P(i,x) − C̄(i,x)`.
    pub fn utility(&self, x: usize) -> Option<f64> {
        Some(self.payment(x)? - self.observed_cost(x)?)
    }

    /// `F̂(i,x)`, the mean of `revenue/(g·e)` over positive-effort samples.
    pub fn productivity_estimate(&self, x: usize) -> Option<f64> {
        let s = &self.tasks[x];
        (s.productivity_samples > 0).then(|| s.productivity_sum / s.productivity_samples as f64)
    }

    pub fn record(&mut self, obs: &Observation, quality: f64) {
        let s = &mut self.tasks[obs.task];
        s.samples += 1;
        s.payment_sum += obs.payment;
        s.cost_sum += obs.effort_cost;
        if let Some(r) = obs.revenue {
            if obs.effort > 0.0 {
                s.productivity_samples += 1;
                s.productivity_sum += r / (quality * obs.effort);
            }
        }
    }
}

/// Tasks ordered by `values` descending; ties favour higher quality, then
/// the lower index.
pub fn rank_tasks(values: &[f64], qualities: &[f64]) -> Vec<usize> {
    let mut tasks: Vec<usize> = (0..values.len()).collect();
    tasks.sort_by(|&a, &b| {
        values[b]
            .total_cmp(&values[a])
            .then(qualities[b].total_cmp(&qualities[a]))
            .then(a.cmp(&b))
    });
    tasks
}

fn complete_values(view: &WorkerView, value: impl Fn(usize) -> Option<f64>) -> Result<Vec<f64>, StrategyError> {
    (0..view.qualities.len())
        .map(|x| {
            value(x).ok_or(StrategyError::LedgerIncomplete {
                worker: view.worker,
                task: x,
            })
        })
        .collect()
}

/// Maximum effort in assessment, a report ranked by `U(i,x)`, then maximum
/// effort on the assigned task iff `U(i,y) > 0`. A task never observed is
/// tried once at maximum effort.
pub fn mtbb_act(view: &WorkerView, ctx: &SlotContext, ledger: &WorkerLedger) -> Result<Action, StrategyError> {
    let e_max = view.max_effort[ctx.task];
    match ctx.phase {
        PhaseLabel::Assessment { .. } => Ok(Action {
            effort: e_max,
            report: None,
        }),
        PhaseLabel::Reporting => {
            let values = complete_values(view, |x| ledger.utility(x))?;
            Ok(Action {
                effort: e_max,
                report: Some(rank_tasks(&values, view.qualities)),
            })
        }
        PhaseLabel::Operational => {
            let effort = match ledger.utility(ctx.task) {
                Some(u) if u > 0.0 => e_max,
                Some(_) => 0.0,
                None => e_max,
            };
            Ok(Action { effort, report: None })
        }
    }
}

fn stochastic_value(view: &WorkerView, ledger: &WorkerLedger, alpha: f64, x: usize) -> Option<f64> {
    let f = ledger.productivity_estimate(x)?;
    let e = view.max_effort[x];
    Some((alpha * f * f * view.qualities[x] - view.cost[x]) * e * e)
}

/// MTBB on the productivity estimate: tasks are valued at
/// `(α·F̂²·g − C)·(e^max)²`.
pub fn stochastic_mtbb_act(
    view: &WorkerView,
    ctx: &SlotContext,
    ledger: &WorkerLedger,
) -> Result<Action, StrategyError> {
    let alpha = view
        .alpha
        .ok_or(StrategyError::MissingKnowledge { worker: view.worker })?;
    let e_max = view.max_effort[ctx.task];
    match ctx.phase {
        PhaseLabel::Assessment { .. } => Ok(Action {
            effort: e_max,
            report: None,
        }),
        PhaseLabel::Reporting => {
            let values = complete_values(view, |x| stochastic_value(view, ledger, alpha, x))?;
            Ok(Action {
                effort: e_max,
                report: Some(rank_tasks(&values, view.qualities)),
            })
        }
        PhaseLabel::Operational => {
            let effort = match stochastic_value(view, ledger, alpha, ctx.task) {
                Some(v) if v > 0.0 => e_max,
                Some(_) => 0.0,
                None => e_max,
            };
            Ok(Action { effort, report: None })
        }
    }
}

/// A worker playing a fixed strategy, with its private ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerAgent {
    pub kind: StrategyKind,
    pub ledger: WorkerLedger,
}

impl WorkerAgent {
    pub fn new(kind: StrategyKind, n: usize) -> Self {
        WorkerAgent {
            kind,
            ledger: WorkerLedger::new(n),
        }
    }

    pub fn act(&self, view: &WorkerView, ctx: &SlotContext) -> Result<Action, StrategyError> {
        let e_max = view.max_effort[ctx.task];
        let truthful = |phase: PhaseLabel| -> Result<Option<Vec<usize>>, StrategyError> {
            if phase != PhaseLabel::Reporting {
                return Ok(None);
            }
            let values = complete_values(view, |x| self.ledger.utility(x))?;
            Ok(Some(rank_tasks(&values, view.qualities)))
        };
        match &self.kind {
            StrategyKind::Mtbb => mtbb_act(view, ctx, &self.ledger),
            StrategyKind::StochasticMtbb => stochastic_mtbb_act(view, ctx, &self.ledger),
            StrategyKind::ZeroEffort => Ok(Action {
                effort: 0.0,
                report: truthful(ctx.phase)?,
            }),
            StrategyKind::ConstantEffort { level } => Ok(Action {
                effort: level.min(e_max),
                report: truthful(ctx.phase)?,
            }),
            StrategyKind::Tabular {
                assessment_efforts,
                reported_list,
                operational_effort,
            } => Ok(match ctx.phase {
                PhaseLabel::Assessment { .. } => Action {
                    effort: assessment_efforts[ctx.task],
                    report: None,
                },
                PhaseLabel::Reporting => Action {
                    effort: assessment_efforts[ctx.task],
                    report: Some(reported_list.clone()),
                },
                PhaseLabel::Operational => Action {
                    effort: operational_effort.min(e_max),
                    report: None,
                },
            }),
        }
    }

    /// Assessment observations always enter the ledger; later ones only
    /// fill tasks not yet seen.
    pub fn observe(&mut self, obs: &Observation, quality: f64) {
        let record = match obs.phase {
            PhaseLabel::Assessment { .. } => true,
            PhaseLabel::Reporting => false,
            PhaseLabel::Operational => !self.ledger.visited(obs.task),
        };
        if record {
            self.ledger.record(obs, quality);
        }
    }
}

/// Effort levels `{0, δ, …, max_x e_ix^max}` shared across a worker's tasks.
pub fn union_grid(instance: &MarketInstance, worker: usize) -> Vec<f64> {
    let n = instance.n();
    let top = (0..n)
        .max_by(|&a, &b| {
            instance
                .max_effort(worker, a)
                .total_cmp(&instance.max_effort(worker, b))
        })
        .expect("non-empty market");
    instance.grid(worker, top)
}

/// The tabular strategies of one worker under FILI, indexed in mixed radix:
/// per-task assessment levels, then the report, then the operational level.
#[derive(Debug, Clone)]
pub struct StrategySpace {
    assessment_grids: Vec<Vec<f64>>,
    reports: Vec<Vec<usize>>,
    operational: Vec<f64>,
    len: u64,
}

impl StrategySpace {
    pub fn new(instance: &MarketInstance, worker: usize, cap: u64) -> Result<Self, StrategyError> {
        let n = instance.n();
        let assessment_grids: Vec<Vec<f64>> = (0..n).map(|x| instance.grid(worker, x)).collect();
        let operational = union_grid(instance, worker);
        let mut count: u64 = operational.len() as u64;
        for g in &assessment_grids {
            count = count.saturating_mul(g.len() as u64);
        }
        for k in 2..=n as u64 {
            count = count.saturating_mul(k);
        }
        if count > cap {
            return Err(StrategyError::ExplosionGuard { count, cap });
        }
        Ok(StrategySpace {
            assessment_grids,
            reports: (0..n).permutations(n).collect(),
            operational,
            len: count,
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, mut k: u64) -> StrategyKind {
        let mut assessment_efforts = Vec::with_capacity(self.assessment_grids.len());
        for g in &self.assessment_grids {
            let base = g.len() as u64;
            assessment_efforts.push(g[(k % base) as usize]);
            k /= base;
        }
        let base = self.reports.len() as u64;
        let reported_list = self.reports[(k % base) as usize].clone();
        k /= base;
        StrategyKind::Tabular {
            assessment_efforts,
            reported_list,
            operational_effort: self.operational[k as usize],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = StrategyKind> + '_ {
        (0..self.len).map(|k| self.get(k))
    }
}

/// Every payoff-relevant tabular strategy of `worker` under FILI.
pub fn enumerate_payoff_relevant_strategies(
    instance: &MarketInstance,
    worker: usize,
    cap: u64,
) -> Result<StrategySpace, StrategyError> {
    StrategySpace::new(instance, worker, cap)
}

/// Effort on `grid` maximizing the worker's expected stage utility; the
/// smallest maximizer on ties.
pub fn best_response_effort(payment: &PaymentRule, f: f64, c: f64, g: f64, grid: &[f64]) -> f64 {
    let mut best = (0.0, f64::NEG_INFINITY);
    for &e in grid {
        let v = payment.worker_value(f, c, e, g);
        if v > best.1 {
            best = (e, v);
        }
    }
    best.0
}
