//! Assessment-matching rules.
//!
//! FILI assesses every worker on every task once, collects reported lists,
//! and fixes a deferred-acceptance matching for the rest of the horizon.
//! IILI does the same with sub-phases of repeated noisy assessment. The
//! baselines skip the report or the assessment altogether.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{play_slot, EngineError, Expected, NoiseSample, SimulationTrace, SlotInput};
use crate::market::{MarketError, MarketInstance, NoiseModel};
use crate::matching::{
    assortative_by_score, client_preferences_from_outputs, gale_shapley, max_weight_assignment, Matching,
    MatchingError, PreferenceList,
};
use crate::payments::{PaymentError, PaymentRule};
use crate::rng;
use crate::strategies::{Observation, SlotContext, StrategyError, StrategyKind, WorkerAgent, WorkerView};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("{kind} needs a horizon of at least {min}, got {horizon}")]
    Horizon {
        kind: MechanismKind,
        min: usize,
        horizon: usize,
    },
    #[error("sub-phase length {length} is invalid for horizon {horizon}")]
    SubPhase { length: usize, horizon: usize },
    #[error("slot {t} is operational; no fixed assessment assignment")]
    OutOfPhase { t: usize },
    #[error("expected {expected} strategies, got {found}")]
    StrategyCount { expected: usize, found: usize },
    #[error("initial-belief mechanism needs {0} beliefs")]
    Beliefs(usize),
    #[error("worker {0} submitted no report")]
    MissingReport(usize),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Payment(#[from] PaymentError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseLabel {
    Assessment { sub_phase: usize },
    Reporting,
    Operational,
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseLabel::Assessment { sub_phase } => write!(f, "assessment:{sub_phase}"),
            PhaseLabel::Reporting => f.write_str("reporting"),
            PhaseLabel::Operational => f.write_str("operational"),
        }
    }
}

impl FromStr for PhaseLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reporting" => Ok(PhaseLabel::Reporting),
            "operational" => Ok(PhaseLabel::Operational),
            _ => s
                .strip_prefix("assessment:")
                .and_then(|k| k.parse().ok())
                .map(|sub_phase| PhaseLabel::Assessment { sub_phase })
                .ok_or_else(|| format!("unknown phase {s:?}")),
        }
    }
}

impl Serialize for PhaseLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PhaseLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Fili,
    Iili,
    InitialBeliefAssortative,
    AverageOutputAssortative,
    OutputOnlyExpectation,
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MechanismKind::Fili => "fili",
            MechanismKind::Iili => "iili",
            MechanismKind::InitialBeliefAssortative => "initial-belief-assortative",
            MechanismKind::AverageOutputAssortative => "average-output-assortative",
            MechanismKind::OutputOnlyExpectation => "output-only-expectation",
        })
    }
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    pub payment: PaymentRule,
    /// Total number of slots simulated.
    pub horizon: usize,
    #[serde(default = "one")]
    pub sub_phase_length: usize,
    /// Initial-belief baseline only: one score per worker.
    #[serde(default)]
    pub beliefs: Option<Vec<f64>>,
    /// Seeds the random order among workers with equal beliefs.
    #[serde(default)]
    pub tie_seed: u64,
    /// Keep every slot record; long runs can keep totals only.
    #[serde(default = "yes")]
    pub retain_trace: bool,
}

impl MechanismSpec {
    pub fn new(kind: MechanismKind, payment: PaymentRule, horizon: usize) -> Self {
        MechanismSpec {
            kind,
            payment,
            horizon,
            sub_phase_length: 1,
            beliefs: None,
            tie_seed: 0,
            retain_trace: true,
        }
    }

    pub fn with_sub_phase(mut self, length: usize) -> Self {
        self.sub_phase_length = length;
        self
    }

    pub fn without_records(mut self) -> Self {
        self.retain_trace = false;
        self
    }

    pub fn validate(&self, instance: &MarketInstance) -> Result<(), MechanismError> {
        let n = instance.n();
        self.payment.validate(instance)?;
        let min = match self.kind {
            MechanismKind::Fili => n + 2,
            MechanismKind::Iili => {
                let l = self.sub_phase_length;
                if l == 0 || l.saturating_mul(l) > self.horizon {
                    return Err(MechanismError::SubPhase {
                        length: l,
                        horizon: self.horizon,
                    });
                }
                n * l + 2
            }
            MechanismKind::InitialBeliefAssortative => {
                match &self.beliefs {
                    Some(b) if b.len() == n && b.iter().all(|v| v.is_finite()) => {}
                    _ => return Err(MechanismError::Beliefs(n)),
                }
                1
            }
            MechanismKind::AverageOutputAssortative | MechanismKind::OutputOnlyExpectation => n + 1,
        };
        if self.horizon < min {
            return Err(MechanismError::Horizon {
                kind: self.kind,
                min,
                horizon: self.horizon,
            });
        }
        Ok(())
    }
}

/// Task of worker `i` in assessment or reporting slot `t`.
pub fn fili_assignment(t: usize, i: usize, n: usize) -> Result<usize, MechanismError> {
    if t > n {
        return Err(MechanismError::OutOfPhase { t });
    }
    Ok((t + i) % n)
}

/// Final FILI matching from the assessment outputs and reported lists.
pub fn fili_matching(assessment_outputs: &[Vec<f64>], reports: &[Vec<usize>]) -> Result<Matching, MatchingError> {
    let clients = client_preferences_from_outputs(&assessment_outputs.to_vec());
    let workers: Vec<PreferenceList> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| PreferenceList::new(i, r.clone()))
        .collect();
    Ok(gale_shapley(&workers, &clients)?.matching)
}

struct Runner<'a> {
    instance: &'a MarketInstance,
    payment: PaymentRule,
    noise: Option<&'a NoiseModel>,
    agents: Vec<WorkerAgent>,
    trace: SimulationTrace,
}

struct SlotResult {
    outputs: Vec<f64>,
    reports: Vec<Option<Vec<usize>>>,
}

impl<'a> Runner<'a> {
    fn new(
        spec: &MechanismSpec,
        instance: &'a MarketInstance,
        noise: Option<&'a NoiseModel>,
        strategies: &[StrategyKind],
    ) -> Result<Self, MechanismError> {
        spec.validate(instance)?;
        let n = instance.n();
        if strategies.len() != n {
            return Err(MechanismError::StrategyCount {
                expected: n,
                found: strategies.len(),
            });
        }
        for (i, s) in strategies.iter().enumerate() {
            s.validate(instance, i)?;
        }
        if let Some(nm) = noise {
            nm.validate(instance)?;
        }
        Ok(Runner {
            instance,
            payment: spec.payment,
            noise,
            agents: strategies.iter().map(|s| WorkerAgent::new(s.clone(), n)).collect(),
            trace: SimulationTrace::new(n, noise.is_some(), spec.retain_trace),
        })
    }

    fn slot(&mut self, t: usize, phase: PhaseLabel, assignment: &[usize]) -> Result<SlotResult, MechanismError> {
        let n = self.instance.n();
        let alpha = self.noise.and(self.payment.alpha());
        let mut outputs = vec![0.0; n];
        let mut reports = vec![None; n];
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let task = assignment[i];
            let view = WorkerView::new(self.instance, i, alpha);
            let action = agent.act(&view, &SlotContext { t, phase, task })?;
            let noise = self.noise.map(|nm| NoiseSample {
                draw: nm.draw(i, task, t as u64),
                variance: nm.variance(i, task),
            });
            let input = SlotInput {
                t,
                phase,
                worker: i,
                task,
                effort: action.effort,
                noise,
            };
            let record = play_slot(self.instance, &self.payment, &input)?;
            let g = self.instance.quality(task);
            agent.observe(
                &Observation {
                    phase,
                    task,
                    effort: record.effort,
                    payment: record.payment,
                    effort_cost: self.instance.cost(i, task) * record.effort * record.effort,
                    revenue: noise.map(|_| record.revenue),
                },
                g,
            );
            outputs[i] = record.output;
            reports[i] = action.report;
            let expected = Expected::of(self.instance, &self.payment, i, task, record.effort);
            self.trace.push(record, expected);
        }
        Ok(SlotResult { outputs, reports })
    }

    /// Rotating assessment in blocks of `length` slots; returns the mean
    /// observed output per worker and task.
    fn assess(&mut self, length: usize) -> Result<Vec<Vec<f64>>, MechanismError> {
        let n = self.instance.n();
        let mut sums = vec![vec![0.0; n]; n];
        for t in 0..n * length {
            let k = t / length;
            let assignment: Vec<usize> = (0..n).map(|i| (k + i) % n).collect();
            let res = self.slot(t, PhaseLabel::Assessment { sub_phase: k }, &assignment)?;
            for (i, &x) in assignment.iter().enumerate() {
                sums[i][x] += res.outputs[i];
            }
        }
        let estimates: Vec<Vec<f64>> = sums
            .into_iter()
            .map(|row| row.into_iter().map(|s| s / length as f64).collect())
            .collect();
        self.trace.assessment_outputs = Some(estimates.clone());
        Ok(estimates)
    }

    fn operate(&mut self, from: usize, horizon: usize, matching: &Matching) -> Result<(), MechanismError> {
        self.trace.matching = Some(matching.clone());
        for t in from..horizon {
            self.slot(t, PhaseLabel::Operational, matching.as_slice())?;
        }
        Ok(())
    }

    fn finish(self) -> (SimulationTrace, Matching) {
        let m = self
            .trace
            .matching
            .clone()
            .expect("matching fixed before the operational phase");
        (self.trace, m)
    }
}

/// Runs any mechanism. `noise` switches on stochastic mode.
pub fn run_mechanism(
    spec: &MechanismSpec,
    instance: &MarketInstance,
    noise: Option<&NoiseModel>,
    strategies: &[StrategyKind],
) -> Result<(SimulationTrace, Matching), MechanismError> {
    let mut runner = Runner::new(spec, instance, noise, strategies)?;
    let n = instance.n();
    match spec.kind {
        MechanismKind::Fili | MechanismKind::Iili => {
            let length = if spec.kind == MechanismKind::Fili {
                1
            } else {
                spec.sub_phase_length
            };
            let estimates = runner.assess(length)?;
            let t = n * length;
            let assignment: Vec<usize> = (0..n).collect();
            let res = runner.slot(t, PhaseLabel::Reporting, &assignment)?;
            let reports = res
                .reports
                .into_iter()
                .enumerate()
                .map(|(i, r)| r.ok_or(MechanismError::MissingReport(i)))
                .collect::<Result<Vec<_>, _>>()?;
            let matching = fili_matching(&estimates, &reports)?;
            runner.trace.reports = Some(reports);
            runner.operate(t + 1, spec.horizon, &matching)?;
        }
        MechanismKind::AverageOutputAssortative => {
            let estimates = runner.assess(1)?;
            let averages: Vec<f64> = estimates.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
            let matching = assortative_by_score(&averages, instance.qualities());
            runner.operate(n, spec.horizon, &matching)?;
        }
        MechanismKind::OutputOnlyExpectation => {
            let estimates = runner.assess(1)?;
            let weights: Vec<Vec<f64>> = estimates
                .iter()
                .map(|row| row.iter().enumerate().map(|(x, w)| w * instance.quality(x)).collect())
                .collect();
            let (matching, _) = max_weight_assignment(&weights)?;
            runner.operate(n, spec.horizon, &matching)?;
        }
        MechanismKind::InitialBeliefAssortative => {
            let beliefs = spec.beliefs.as_ref().expect("validated");
            let matching = belief_matching(beliefs, instance.qualities(), spec.tie_seed);
            runner.operate(0, spec.horizon, &matching)?;
        }
    }
    Ok(runner.finish())
}

/// Assortative on beliefs; workers with equal beliefs are ordered randomly.
pub fn belief_matching(beliefs: &[f64], qualities: &[f64], seed: u64) -> Matching {
    let n = beliefs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(&[seed, 0xbe11ef]));
    let mut rank = vec![0.0; n];
    order.sort_by(|&a, &b| beliefs[a].total_cmp(&beliefs[b]));
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos as f64;
    }
    assortative_by_score(&rank, qualities)
}

pub fn run_fili(
    instance: &MarketInstance,
    payment: PaymentRule,
    strategies: &[StrategyKind],
    horizon: usize,
) -> Result<(SimulationTrace, Matching), MechanismError> {
    run_mechanism(
        &MechanismSpec::new(MechanismKind::Fili, payment, horizon),
        instance,
        None,
        strategies,
    )
}

pub fn run_iili(
    instance: &MarketInstance,
    noise: &NoiseModel,
    payment: PaymentRule,
    strategies: &[StrategyKind],
    horizon: usize,
    sub_phase_length: usize,
) -> Result<(SimulationTrace, Matching), MechanismError> {
    run_mechanism(
        &MechanismSpec::new(MechanismKind::Iili, payment, horizon).with_sub_phase(sub_phase_length),
        instance,
        Some(noise),
        strategies,
    )
}

pub fn run_baseline_initial_belief(
    instance: &MarketInstance,
    beliefs: &[f64],
    tie_seed: u64,
    payment: PaymentRule,
    strategies: &[StrategyKind],
    horizon: usize,
) -> Result<(SimulationTrace, Matching), MechanismError> {
    let mut spec = MechanismSpec::new(MechanismKind::InitialBeliefAssortative, payment, horizon);
    spec.beliefs = Some(beliefs.to_vec());
    spec.tie_seed = tie_seed;
    run_mechanism(&spec, instance, None, strategies)
}

pub fn run_baseline_average_output(
    instance: &MarketInstance,
    payment: PaymentRule,
    strategies: &[StrategyKind],
    horizon: usize,
) -> Result<(SimulationTrace, Matching), MechanismError> {
    run_mechanism(
        &MechanismSpec::new(MechanismKind::AverageOutputAssortative, payment, horizon),
        instance,
        None,
        strategies,
    )
}

pub fn run_baseline_output_only(
    instance: &MarketInstance,
    payment: PaymentRule,
    strategies: &[StrategyKind],
    horizon: usize,
) -> Result<(SimulationTrace, Matching), MechanismError> {
    run_mechanism(
        &MechanismSpec::new(MechanismKind::OutputOnlyExpectation, payment, horizon),
        instance,
        None,
        strategies,
    )
}
