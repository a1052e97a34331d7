//! `verify`: one property over every instance of a scenario.

use anyhow::anyhow;
use rayon::prelude::*;
use serde::Serialize;

use matchsim_core::analysis::{
    bbe_closed_form, check_best_response, check_long_run_stability, check_prop3_optimality, AnalysisError,
    BestResponseReport, BlockingPair, Prop3Report,
};
use matchsim_core::engine::{long_run_values, ValueMode};
use matchsim_core::market::{check_assumption, derived_constants, Assumption, Thresholds};
use matchsim_core::matching::Matching;
use matchsim_core::mechanisms::{run_mechanism, MechanismKind};
use matchsim_core::payments::PaymentRule;
use matchsim_core::strategies::StrategyKind;

use crate::config::{prepare, AnalysisTask, Check, Loaded, Prepared};
use crate::emit::Emitter;
use crate::Failure;

/// Agreement required between the closed-form and simulated revenue.
const CLOSED_FORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum Detail {
    Equilibrium {
        workers: Vec<BestResponseReport>,
    },
    Stability {
        matching: Matching,
        blocking_pairs: Vec<BlockingPair>,
    },
    Efficiency {
        closed_form_revenue: f64,
        simulated_revenue: f64,
        closed_form_profit: f64,
        simulated_profit: f64,
        obedient_upper_bound: f64,
        revenue_ratio: f64,
        theta: f64,
    },
    Prop3(Prop3Report),
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceVerdict {
    pub instance: usize,
    pub passed: bool,
    #[serde(flatten)]
    pub detail: Detail,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub check: Check,
    pub passed: bool,
    pub instances: usize,
    pub failures: usize,
    pub waived_assumptions: bool,
    pub results: Vec<InstanceVerdict>,
}

impl Verdict {
    /// Human-readable lines for every failing instance.
    pub fn failure_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in self.results.iter().filter(|r| !r.passed) {
            match &r.detail {
                Detail::Equilibrium { workers } => {
                    for w in workers.iter().filter(|w| !w.is_mtbb_best) {
                        out.push(format!(
                            "instance {}: worker {} gains {:.3e} by deviating to {:?}",
                            r.instance,
                            w.worker,
                            w.best_value - w.mtbb_value,
                            w.best_deviation
                        ));
                    }
                }
                Detail::Stability { blocking_pairs, .. } => {
                    for p in blocking_pairs {
                        out.push(format!(
                            "instance {}: blocking pair (worker {}, task {}) at effort {}: worker gain {:.6}, client gain {:.6}",
                            r.instance, p.worker, p.task, p.effort, p.worker_gain, p.client_gain
                        ));
                    }
                }
                Detail::Efficiency {
                    closed_form_revenue,
                    simulated_revenue,
                    ..
                } => out.push(format!(
                    "instance {}: closed-form revenue {closed_form_revenue} vs simulated {simulated_revenue}",
                    r.instance
                )),
                Detail::Prop3(p) => out.push(format!(
                    "instance {}: FILI revenue {} below grid maximum {} at alpha {}",
                    r.instance, p.fili_revenue, p.grid_max, p.argmax_alpha
                )),
            }
        }
        out
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {}: {} of {} instances failed",
            self.check,
            if self.passed { "PASS" } else { "FAIL" },
            self.failures,
            self.instances
        )
    }
}

fn runtime(e: AnalysisError) -> Failure {
    match e {
        AnalysisError::AssumptionViolated(a) => {
            Failure::Assumption(format!("{a:?} is required by this check and cannot be waived"))
        }
        other => Failure::Runtime(anyhow!(other)),
    }
}

fn require_assumptions(prepared: &[Prepared], needed: &[Assumption]) -> Result<(), Failure> {
    for (k, p) in prepared.iter().enumerate() {
        for &a in needed {
            let c = check_assumption(&p.instance, a, Thresholds::default());
            if !c.holds {
                return Err(Failure::Assumption(format!(
                    "instance {k} violates {a:?} ({:?}); pass --waive-assumptions to run anyway",
                    c.violation
                )));
            }
        }
    }
    Ok(())
}

/// The checks below analyse FILI with the deterministic quadratic rule.
fn require_fili_quadratic(prepared: &[Prepared], check: Check) -> Result<(), Failure> {
    for p in prepared {
        if p.spec.kind != MechanismKind::Fili || !matches!(p.spec.payment, PaymentRule::Quadratic { .. }) {
            return Err(Failure::Assumption(format!(
                "{check} needs the fili mechanism with the quadratic payment"
            )));
        }
    }
    Ok(())
}

fn alpha_of(p: &Prepared) -> f64 {
    p.spec.payment.alpha().expect("quadratic payment")
}

pub fn evaluate(prepared: &[Prepared], task: &AnalysisTask, waive: bool) -> Result<Verdict, Failure> {
    let waive = waive || task.waive_assumptions;
    let results: Vec<InstanceVerdict> = match task.check {
        Check::Equilibrium => {
            require_fili_quadratic(prepared, task.check)?;
            prepared
                .par_iter()
                .enumerate()
                .map(|(k, p)| {
                    let workers = (0..p.instance.n())
                        .map(|i| check_best_response(&p.instance, p.spec.payment, i, &p.strategies, task.cap))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(runtime)?;
                    Ok(InstanceVerdict {
                        instance: k,
                        passed: workers.iter().all(|w| w.is_mtbb_best),
                        detail: Detail::Equilibrium { workers },
                    })
                })
                .collect::<Result<_, Failure>>()?
        }
        Check::Stability => prepared
            .par_iter()
            .enumerate()
            .map(|(k, p)| {
                let (trace, matching) =
                    run_mechanism(&p.spec, &p.instance, p.noise.as_ref(), &p.strategies).map_err(|e| anyhow!(e))?;
                let values = long_run_values(&trace, ValueMode::Limit).map_err(|e| anyhow!(e))?;
                let v = check_long_run_stability(&p.instance, &p.spec.payment, &matching, &values).map_err(runtime)?;
                Ok(InstanceVerdict {
                    instance: k,
                    passed: v.stable,
                    detail: Detail::Stability {
                        matching,
                        blocking_pairs: v.blocking_pairs,
                    },
                })
            })
            .collect::<Result<_, Failure>>()?,
        Check::Efficiency => {
            require_fili_quadratic(prepared, task.check)?;
            if !waive {
                require_assumptions(prepared, &[Assumption::OrderedTypes, Assumption::HomogeneousTasks])?;
            }
            if prepared
                .iter()
                .any(|p| p.strategies.iter().any(|s| *s != StrategyKind::Mtbb))
            {
                return Err(Failure::Assumption("efficiency needs every worker on mtbb".into()));
            }
            prepared
                .par_iter()
                .enumerate()
                .map(|(k, p)| {
                    let cf = bbe_closed_form(&p.instance, alpha_of(p)).map_err(runtime)?;
                    let (trace, _) =
                        run_mechanism(&p.spec, &p.instance, None, &p.strategies).map_err(|e| anyhow!(e))?;
                    let sim = long_run_values(&trace, ValueMode::Limit).map_err(|e| anyhow!(e))?;
                    let close = |a: f64, b: f64| (a - b).abs() <= CLOSED_FORM_TOL * a.abs().max(1.0);
                    Ok(InstanceVerdict {
                        instance: k,
                        passed: close(cf.bbe_revenue, sim.revenue) && close(cf.bbe_profit, sim.profit),
                        detail: Detail::Efficiency {
                            closed_form_revenue: cf.bbe_revenue,
                            simulated_revenue: sim.revenue,
                            closed_form_profit: cf.bbe_profit,
                            simulated_profit: sim.profit,
                            obedient_upper_bound: cf.obedient_upper_bound,
                            revenue_ratio: cf.ratio_revenue,
                            theta: cf.theta,
                        },
                    })
                })
                .collect::<Result<_, Failure>>()?
        }
        Check::Prop3 => {
            if task.alpha_grid_points == 0 {
                return Err(Failure::Assumption("alpha_grid_points must be at least 1".into()));
            }
            if !waive {
                require_assumptions(
                    prepared,
                    &[Assumption::HomogeneousTasks, Assumption::SeparatedQualities],
                )?;
            }
            prepared
                .par_iter()
                .enumerate()
                .map(|(k, p)| {
                    let star = derived_constants(&p.instance).alpha_star;
                    let points = task.alpha_grid_points;
                    let grid: Vec<f64> = (1..=points).map(|j| star * j as f64 / points as f64).collect();
                    let r = check_prop3_optimality(&p.instance, &grid).map_err(runtime)?;
                    Ok(InstanceVerdict {
                        instance: k,
                        passed: r.optimal,
                        detail: Detail::Prop3(r),
                    })
                })
                .collect::<Result<_, Failure>>()?
        }
    };
    let failures = results.iter().filter(|r| !r.passed).count();
    Ok(Verdict {
        check: task.check,
        passed: failures == 0,
        instances: results.len(),
        failures,
        waived_assumptions: waive,
        results,
    })
}

/// Writes `verdict-<check>.json` and prints the verdict.
pub fn emit(verdict: &Verdict, emitter: &mut Emitter) -> anyhow::Result<()> {
    emitter.json(&format!("verdict-{}.json", verdict.check), verdict)?;
    for line in verdict.failure_lines() {
        println!("{line}");
    }
    println!("{}", verdict.summary_line());
    Ok(())
}

pub fn run(loaded: &Loaded, check: Check, waive: bool) -> Result<(), Failure> {
    let prepared = prepare(loaded)?;
    let verdict = evaluate(&prepared, &loaded.config.task(check), waive)?;
    let mut emitter = Emitter::new(&loaded.config.output_dir, loaded.config.hash())?;
    emit(&verdict, &mut emitter)?;
    if verdict.passed {
        Ok(())
    } else {
        Err(Failure::Verdict(verdict.summary_line()))
    }
}
