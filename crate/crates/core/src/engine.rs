//! Stage-game settlement, traces and long-run values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::MarketInstance;
use crate::matching::Matching;
use crate::mechanisms::PhaseLabel;
use crate::payments::PaymentRule;
use crate::rng::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("worker {worker} chose effort {effort} off the grid of task {task}")]
    OffGrid { worker: usize, task: usize, effort: f64 },
    #[error("limit values need a stationary operational tail; worker {worker} is still changing")]
    NonConstantTail { worker: usize },
    #[error("trace has no operational phase")]
    NoOperationalPhase,
    #[error("trace is empty")]
    EmptyTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueMode {
    FiniteAverage,
    #[default]
    Limit,
}

/// A noise realization and the variance it was drawn with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSample {
    pub draw: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotInput {
    pub t: usize,
    pub phase: PhaseLabel,
    pub worker: usize,
    pub task: usize,
    pub effort: f64,
    /// `None` in deterministic mode.
    pub noise: Option<NoiseSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: usize,
    pub phase: PhaseLabel,
    pub worker: usize,
    pub task: usize,
    pub effort: f64,
    pub output: f64,
    pub revenue: f64,
    pub payment: f64,
    pub worker_utility: f64,
    pub client_utility: f64,
    pub noise_draw: f64,
}

/// Settles one worker-client interaction.
pub fn play_slot(
    instance: &MarketInstance,
    payment: &PaymentRule,
    input: &SlotInput,
) -> Result<SlotRecord, EngineError> {
    let (i, y, e) = (input.worker, input.task, input.effort);
    if !instance.is_on_grid(i, y, e) {
        return Err(EngineError::OffGrid {
            worker: i,
            task: y,
            effort: e,
        });
    }
    let f = instance.productivity(i, y);
    let g = instance.quality(y);
    let (output, revenue, draw, variance) = match input.noise {
        None => {
            let w = f * e;
            (w, w * g, 0.0, 0.0)
        }
        Some(z) => {
            let r = f * e * g + z.draw;
            (r / g, r, z.draw, z.variance)
        }
    };
    let pay = payment.settle(output, revenue, g, variance);
    Ok(SlotRecord {
        t: input.t,
        phase: input.phase,
        worker: i,
        task: y,
        effort: e,
        output,
        revenue,
        payment: pay,
        worker_utility: pay - instance.cost(i, y) * e * e,
        client_utility: revenue - pay,
        noise_draw: draw,
    })
}

/// Expected worker and client stage utilities behind a record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub worker: f64,
    pub client: f64,
    pub revenue: f64,
}

impl Expected {
    pub fn of(instance: &MarketInstance, payment: &PaymentRule, worker: usize, task: usize, effort: f64) -> Self {
        let (f, c, g) = (
            instance.productivity(worker, task),
            instance.cost(worker, task),
            instance.quality(task),
        );
        Expected {
            worker: payment.worker_value(f, c, effort, g),
            client: payment.client_value(f, effort, g),
            revenue: f * effort * g,
        }
    }
}

/// Slot records plus the running totals needed for long-run values, so
/// long runs can drop the records themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub n: usize,
    pub stochastic: bool,
    pub slots: usize,
    pub records: Vec<SlotRecord>,
    pub retained: bool,
    pub worker_totals: Vec<f64>,
    pub client_totals: Vec<f64>,
    pub revenue_total: f64,
    /// Planner's output estimates from the assessment phase, if any.
    pub assessment_outputs: Option<Vec<Vec<f64>>>,
    pub reports: Option<Vec<Vec<usize>>>,
    pub matching: Option<Matching>,
    tail: Vec<Option<(SlotRecord, Expected)>>,
    previous_tail: Vec<Option<SlotRecord>>,
}

impl SimulationTrace {
    pub fn new(n: usize, stochastic: bool, retain: bool) -> Self {
        SimulationTrace {
            n,
            stochastic,
            slots: 0,
            records: Vec::new(),
            retained: retain,
            worker_totals: vec![0.0; n],
            client_totals: vec![0.0; n],
            revenue_total: 0.0,
            assessment_outputs: None,
            reports: None,
            matching: None,
            tail: vec![None; n],
            previous_tail: vec![None; n],
        }
    }

    /// Adds one record; `t` advances once all workers of a slot are in.
    pub fn push(&mut self, record: SlotRecord, expected: Expected) {
        self.slots = self.slots.max(record.t + 1);
        self.worker_totals[record.worker] += record.worker_utility;
        self.client_totals[record.task] += record.client_utility;
        self.revenue_total += record.revenue;
        if record.phase == PhaseLabel::Operational {
            let i = record.worker;
            self.previous_tail[i] = self.tail[i].map(|(r, _)| r);
            self.tail[i] = Some((record, expected));
        }
        if self.retained {
            self.records.push(record);
        }
    }

    /// The last operational record of each worker.
    pub fn tail_records(&self) -> Vec<Option<SlotRecord>> {
        self.tail.iter().map(|t| t.map(|(r, _)| r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub worker_utilities: Vec<f64>,
    pub client_utilities: Vec<f64>,
    pub revenue: f64,
    pub profit: f64,
    pub matching: Option<Matching>,
    pub mode: ValueMode,
}

/// Time averages over the whole trace, or the stationary per-slot values
/// of the operational phase. In stochastic mode limit values are expected
/// values at the tail efforts.
pub fn long_run_values(trace: &SimulationTrace, mode: ValueMode) -> Result<OutcomeReport, EngineError> {
    if trace.slots == 0 {
        return Err(EngineError::EmptyTrace);
    }
    let n = trace.n;
    let (worker_utilities, client_utilities, revenue) = match mode {
        ValueMode::FiniteAverage => {
            let h = trace.slots as f64;
            (
                trace.worker_totals.iter().map(|u| u / h).collect::<Vec<_>>(),
                trace.client_totals.iter().map(|v| v / h).collect::<Vec<_>>(),
                trace.revenue_total / h,
            )
        }
        ValueMode::Limit => {
            let mut u = vec![0.0; n];
            let mut v = vec![0.0; n];
            let mut r = 0.0;
            for i in 0..n {
                let (rec, exp) = trace.tail[i].ok_or(EngineError::NoOperationalPhase)?;
                if let Some(prev) = trace.previous_tail[i] {
                    if prev.task != rec.task || prev.effort != rec.effort {
                        return Err(EngineError::NonConstantTail { worker: i });
                    }
                }
                if trace.stochastic {
                    u[i] = exp.worker;
                    v[rec.task] += exp.client;
                    r += exp.revenue;
                } else {
                    u[i] = rec.worker_utility;
                    v[rec.task] += rec.client_utility;
                    r += rec.revenue;
                }
            }
            (u, v, r)
        }
    };
    Ok(OutcomeReport {
        profit: client_utilities.iter().sum(),
        worker_utilities,
        client_utilities,
        revenue,
        matching: trace.matching.clone(),
        mode,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MetricSummary {
    pub fn of(metric: impl Into<String>, values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        MetricSummary {
            metric: metric.into(),
            mean,
            stderr,
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub reports: Vec<OutcomeReport>,
    pub summary: Vec<MetricSummary>,
}

pub fn summarize(reports: &[OutcomeReport]) -> Vec<MetricSummary> {
    if reports.is_empty() {
        return Vec::new();
    }
    let pick = |f: &dyn Fn(&OutcomeReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let mut out = vec![
        MetricSummary::of("revenue", &pick(&|r| r.revenue)),
        MetricSummary::of("profit", &pick(&|r| r.profit)),
    ];
    let n = reports[0].worker_utilities.len();
    for i in 0..n {
        out.push(MetricSummary::of(
            format!("worker_utility[{i}]"),
            &pick(&|r| r.worker_utilities[i]),
        ));
    }
    for x in 0..n {
        out.push(MetricSummary::of(
            format!("client_utility[{x}]"),
            &pick(&|r| r.client_utilities[x]),
        ));
    }
    out
}

/// Runs `run(k, seed_k)` for `k < n_runs` with seeds derived from the
/// master seed, in parallel, keeping run order.
pub fn replicate<E, F>(n_runs: usize, seed: u64, run: F) -> Result<Replication, E>
where
    E: Send,
    F: Fn(usize, u64) -> Result<OutcomeReport, E> + Sync,
{
    let reports = (0..n_runs)
        .into_par_iter()
        .map(|k| run(k, derive_seed(&[seed, k as u64])))
        .collect::<Result<Vec<_>, E>>()?;
    let summary = summarize(&reports);
    Ok(Replication { reports, summary })
}
