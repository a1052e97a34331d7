//! `reproduce`: canned experiments with baked-in parameters, each judged
//! by a fixed pass rule.

use std::path::PathBuf;

use anyhow::{anyhow, Result};
use serde::Serialize;

use matchsim_core::analysis::{
    check_best_response, check_long_run_stability, check_theta_bound, measure_regret_scaling,
    run_appendix_i_comparison, ComparisonConfig, Objective, RegretConfig, StabilityVerdict,
};
use matchsim_core::engine::{long_run_values, OutcomeReport, ValueMode};
use matchsim_core::io::{write_plot_csv, PlotPoint};
use matchsim_core::market::{MarketInstance, NoiseFamily, OrderedTypeConfig};
use matchsim_core::matching::Matching;
use matchsim_core::mechanisms::{run_baseline_average_output, run_baseline_output_only, run_fili};
use matchsim_core::payments::PaymentRule;
use matchsim_core::strategies::{StrategyKind, DEFAULT_ENUMERATION_CAP};

use crate::config::hash_of;
use crate::emit::Emitter;
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Fig2,
    #[value(name = "counterexample-223")]
    #[serde(rename = "counterexample-223")]
    Counterexample223,
    AppendixH,
    ThetaBound,
    RegretScaling,
}

impl Target {
    fn name(self) -> &'static str {
        match self {
            Target::Fig2 => "fig2",
            Target::Counterexample223 => "counterexample-223",
            Target::AppendixH => "appendix-h",
            Target::ThetaBound => "theta-bound",
            Target::RegretScaling => "regret-scaling",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    Revenue,
    Profit,
}

#[derive(Debug, Clone)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub instances: Option<usize>,
    pub runs: Option<usize>,
    pub objective: ObjectiveArg,
    pub svg: bool,
}

/// Regret slope window around the theoretical `−1/2`.
const SLOPE_RANGE: (f64, f64) = (-0.65, -0.35);
/// Two-sided 99% normal quantile for the revenue-ratio trend.
const Z_995: f64 = 2.575_829_303_548_901;
const CLAIMED_GAIN: f64 = 0.75;
const EXACT: f64 = 1e-12;

struct Outcome {
    passed: bool,
    detail: String,
}

pub fn run(target: Target, opts: &Options) -> Result<(), Failure> {
    if opts.instances == Some(0) || opts.runs == Some(0) {
        return Err(Failure::Assumption("--instances and --runs must be at least 1".into()));
    }
    let dir = opts
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("matchsim-out").join(target.name()));
    let outcome = match target {
        Target::Fig2 => fig2(&dir, opts)?,
        Target::Counterexample223 => counterexample(&dir, opts)?,
        Target::AppendixH => appendix_h(&dir, opts)?,
        Target::ThetaBound => theta(&dir, opts)?,
        Target::RegretScaling => regret(&dir, opts)?,
    };
    let line = format!(
        "reproduce {}: {} {}",
        target.name(),
        if outcome.passed { "PASS" } else { "FAIL" },
        outcome.detail
    );
    println!("{line}");
    if outcome.passed {
        Ok(())
    } else {
        Err(Failure::Verdict(line))
    }
}

fn emitter<P: Serialize>(dir: &std::path::Path, target: Target, params: &P) -> Result<Emitter> {
    #[derive(Serialize)]
    struct Keyed<'a, P> {
        target: Target,
        params: &'a P,
    }
    Emitter::new(dir, hash_of(&Keyed { target, params }))
}

fn plot(
    e: &mut Emitter,
    opts: &Options,
    name: &str,
    title: &str,
    x: &str,
    y: &str,
    points: &[PlotPoint],
) -> Result<()> {
    let header = e.header();
    e.with_writer(&format!("{name}.csv"), |w, _| {
        Ok(write_plot_csv(w, Some(&header), points)?)
    })?;
    if opts.svg {
        e.svg(&format!("{name}.svg"), title, x, y, points)?;
    }
    Ok(())
}

fn fig2(dir: &std::path::Path, opts: &Options) -> Result<Outcome> {
    let mut cfg = ComparisonConfig::reference(opts.instances.unwrap_or(50), 0xf162);
    cfg.objective = match opts.objective {
        ObjectiveArg::Revenue => Objective::Revenue,
        ObjectiveArg::Profit => Objective::Profit,
    };
    let report = run_appendix_i_comparison(&cfg)?;
    let mut e = emitter(dir, Target::Fig2, &cfg)?;
    e.csv("fig2.csv", &report.rows)?;
    e.json("fig2.json", &report)?;
    let points: Vec<PlotPoint> = report
        .rows
        .iter()
        .map(|r| PlotPoint {
            x: r.n_workers as f64,
            series: r.mechanism.clone(),
            y: r.mean_revenue,
            y_stderr: r.revenue_stderr,
        })
        .collect();
    plot(
        &mut e,
        opts,
        "plot-data",
        "Mean revenue by market size",
        "workers",
        "mean revenue",
        &points,
    )?;

    let mut passed = true;
    let mut per_n = Vec::new();
    for &(n, gain) in &report.gains {
        let fili = report
            .rows
            .iter()
            .find(|r| r.n_workers == n && r.mechanism == "fili")
            .ok_or_else(|| anyhow!("missing fili row"))?;
        let stable = fili.stable_fraction.unwrap_or(0.0);
        passed &= gain > 0.0 && stable == 1.0;
        per_n.push(format!(
            "N={n}: gain {:+.1}% stable {:.0}%",
            100.0 * gain,
            100.0 * stable
        ));
        println!("{}", per_n.last().expect("pushed"));
    }
    Ok(Outcome {
        passed,
        detail: format!(
            "overall gain {:.1}% (claimed over {:.0}%, informational); needs a positive gain and full stability at every N",
            100.0 * report.overall_gain,
            100.0 * CLAIMED_GAIN
        ),
    })
}

#[derive(Serialize)]
struct MechanismRow {
    mechanism: &'static str,
    matching: String,
    revenue: f64,
    profit: f64,
    stable: bool,
    blocking_pairs: String,
}

fn mechanism_row(mechanism: &'static str, m: &Matching, v: &OutcomeReport, s: &StabilityVerdict) -> MechanismRow {
    MechanismRow {
        mechanism,
        matching: format!("{:?}", m.as_slice()),
        revenue: v.revenue,
        profit: v.profit,
        stable: s.stable,
        blocking_pairs: s
            .blocking_pairs
            .iter()
            .map(|b| format!("({} {})", b.worker, b.task))
            .collect::<Vec<_>>()
            .join(" "),
    }
}

fn utility_points(series: &str, v: &OutcomeReport) -> Vec<PlotPoint> {
    v.worker_utilities
        .iter()
        .enumerate()
        .map(|(i, &u)| PlotPoint {
            x: i as f64,
            series: series.into(),
            y: u,
            y_stderr: 0.0,
        })
        .collect()
}

fn counterexample_instance() -> MarketInstance {
    MarketInstance::new(
        vec![vec![6.0, 2.0], vec![5.0, 4.0]],
        vec![vec![1.0, 2.0], vec![1.0, 2.0]],
        vec![2.0, 1.0],
        vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        1.0,
    )
    .expect("valid instance")
}

fn counterexample(dir: &std::path::Path, opts: &Options) -> Result<Outcome> {
    let m = counterexample_instance();
    let payment = PaymentRule::quadratic(1.0 / 12.0);
    let mtbb = vec![StrategyKind::Mtbb; 2];
    let (ft, fm) = run_fili(&m, payment, &mtbb, 6)?;
    let fv = long_run_values(&ft, ValueMode::Limit)?;
    let fs = check_long_run_stability(&m, &payment, &fm, &fv)?;
    let (at, am) = run_baseline_average_output(&m, payment, &mtbb, 6)?;
    let av = long_run_values(&at, ValueMode::Limit)?;
    let avs = check_long_run_stability(&m, &payment, &am, &av)?;

    let mut e = emitter(dir, Target::Counterexample223, &(&m, payment))?;
    e.csv(
        "counterexample.csv",
        &[
            mechanism_row("fili", &fm, &fv, &fs),
            mechanism_row("average-output-assortative", &am, &av, &avs),
        ],
    )?;
    let mut points = utility_points("fili", &fv);
    points.extend(utility_points("average-output-assortative", &av));
    plot(
        &mut e,
        opts,
        "plot-data",
        "Worker limit utilities",
        "worker",
        "utility",
        &points,
    )?;
    for b in &avs.blocking_pairs {
        println!(
            "average-output: blocking pair (worker {}, task {}) at effort {}",
            b.worker, b.task, b.effort
        );
    }
    let passed = fm.as_slice() == [0, 1]
        && fs.stable
        && am.as_slice() == [1, 0]
        && avs.blocking_pairs.iter().any(|b| b.worker == 0 && b.task == 0);
    Ok(Outcome {
        passed,
        detail: format!(
            "FILI {:?} stable={}, average-output {:?} stable={}",
            fm.as_slice(),
            fs.stable,
            am.as_slice(),
            avs.stable
        ),
    })
}

#[derive(Serialize)]
struct ManipulationRow {
    mechanism: &'static str,
    worker0_strategy: &'static str,
    matching: String,
    worker0_task: usize,
    worker0_utility: f64,
}

fn appendix_h(dir: &std::path::Path, opts: &Options) -> Result<Outcome> {
    let m = MarketInstance::new(
        vec![vec![6.0, 6.0], vec![5.0, 4.0]],
        vec![vec![1.0, 2.0], vec![1.0, 2.0]],
        vec![2.0, 1.0],
        vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        1.0,
    )?;
    let payment = PaymentRule::quadratic(1.0 / 12.0);
    let shade = StrategyKind::Tabular {
        assessment_efforts: vec![1.0, 0.0],
        reported_list: vec![0, 1],
        operational_effort: 1.0,
    };
    let honest = vec![StrategyKind::Mtbb; 2];
    let shaded = vec![shade, StrategyKind::Mtbb];

    let mut rows = Vec::new();
    let mut record = |mechanism,
                      who,
                      (trace, matching): (matchsim_core::engine::SimulationTrace, Matching)|
     -> Result<(usize, f64)> {
        let u = long_run_values(&trace, ValueMode::Limit)?.worker_utilities[0];
        rows.push(ManipulationRow {
            mechanism,
            worker0_strategy: who,
            matching: format!("{:?}", matching.as_slice()),
            worker0_task: matching.task_of(0),
            worker0_utility: u,
        });
        Ok((matching.task_of(0), u))
    };
    let oo_honest = record(
        "output-only-expectation",
        "max-effort",
        run_baseline_output_only(&m, payment, &honest, 4)?,
    )?;
    let oo_shaded = record(
        "output-only-expectation",
        "shade-task-1",
        run_baseline_output_only(&m, payment, &shaded, 4)?,
    )?;
    let fili_honest = record("fili", "mtbb", run_fili(&m, payment, &honest, 4)?)?;
    let fili_shaded = record("fili", "shade-task-1", run_fili(&m, payment, &shaded, 4)?)?;
    let exhaustive = check_best_response(&m, payment, 0, &honest, DEFAULT_ENUMERATION_CAP)?;

    let mut e = emitter(dir, Target::AppendixH, &(&m, payment))?;
    e.csv("manipulation.csv", &rows)?;
    let points: Vec<PlotPoint> = rows
        .iter()
        .map(|r| PlotPoint {
            x: if r.worker0_strategy == "shade-task-1" { 1.0 } else { 0.0 },
            series: r.mechanism.into(),
            y: r.worker0_utility,
            y_stderr: 0.0,
        })
        .collect();
    plot(
        &mut e,
        opts,
        "plot-data",
        "Worker 0 utility, honest (0) vs shaded (1)",
        "deviation",
        "utility",
        &points,
    )?;

    let manipulates = oo_honest.0 == 1 && oo_shaded.0 == 0 && oo_shaded.1 > oo_honest.1;
    let fili_holds = fili_shaded.1 <= fili_honest.1 + EXACT && exhaustive.is_mtbb_best;
    Ok(Outcome {
        passed: manipulates && fili_holds,
        detail: format!(
            "output-only: worker 0 task {} -> {} (utility {} -> {}); FILI: task {} -> {}, best of {} deviations gains {:.2e}",
            oo_honest.0,
            oo_shaded.0,
            oo_honest.1,
            oo_shaded.1,
            fili_honest.0,
            fili_shaded.0,
            exhaustive.strategies_checked,
            exhaustive.best_value - exhaustive.mtbb_value
        ),
    })
}

fn theta(dir: &std::path::Path, opts: &Options) -> Result<Outcome> {
    let base = OrderedTypeConfig {
        n_workers: 3,
        f_min: 2.0,
        f_max: 8.0,
        c_min: 0.2,
        c_max: 0.8,
        g_min: 1.0,
        g_max: 3.0,
        e_lower: 1.0,
        effort_step: 0.1,
        effort_spacing: 1,
        task_varying: false,
        seed: 0,
    };
    let instances = opts.instances.unwrap_or(2000);
    let seed = 0xc5;
    let mut reports = Vec::new();
    let mut points = Vec::new();
    for n in 2..=5 {
        // larger markets widen the effort range, so c_max is held at the cost ceiling
        let mut cfg = OrderedTypeConfig {
            n_workers: n,
            ..base.clone()
        };
        cfg.c_max = cfg.c_max.min(cfg.g_min / cfg.e_upper() * (1.0 - 1e-9));
        let r = check_theta_bound(&cfg, instances, seed)?;
        for (series, y) in [
            ("revenue-ratio", r.revenue_ratio),
            ("profit-ratio", r.profit_ratio),
            ("theta", r.theta),
            ("theta-half", r.theta / 2.0),
        ] {
            points.push(PlotPoint {
                x: n as f64,
                series: series.into(),
                y,
                y_stderr: 0.0,
            });
        }
        println!(
            "N={n}: revenue ratio {:.4}, profit ratio {:.4}, theta {:.4} ({} instances)",
            r.revenue_ratio, r.profit_ratio, r.theta, r.instances
        );
        reports.push((n, r));
    }
    let mut e = emitter(dir, Target::ThetaBound, &(&base, instances, seed))?;
    #[derive(Serialize)]
    struct Row {
        n_workers: usize,
        #[serde(flatten)]
        report: matchsim_core::analysis::ThetaReport,
    }
    // csv cannot write flattened structs
    #[derive(Serialize)]
    struct CsvRow {
        n_workers: usize,
        instances: usize,
        theta: f64,
        revenue_ratio: f64,
        profit_ratio: f64,
        revenue_margin_lower: f64,
        profit_margin_lower: f64,
        revenue_holds: bool,
        profit_holds: bool,
    }
    let csv_rows: Vec<CsvRow> = reports
        .iter()
        .map(|(n, r)| CsvRow {
            n_workers: *n,
            instances: r.instances,
            theta: r.theta,
            revenue_ratio: r.revenue_ratio,
            profit_ratio: r.profit_ratio,
            revenue_margin_lower: r.revenue_margin_lower,
            profit_margin_lower: r.profit_margin_lower,
            revenue_holds: r.revenue_holds,
            profit_holds: r.profit_holds,
        })
        .collect();
    e.csv("theta.csv", &csv_rows)?;
    #[derive(Serialize)]
    struct Doc {
        reports: Vec<Row>,
    }
    e.json(
        "theta.json",
        &Doc {
            reports: reports
                .iter()
                .map(|(n, r)| Row {
                    n_workers: *n,
                    report: r.clone(),
                })
                .collect(),
        },
    )?;
    plot(
        &mut e,
        opts,
        "plot-data",
        "Efficiency ratios against the bound",
        "workers",
        "ratio",
        &points,
    )?;
    let passed = reports.iter().all(|(_, r)| r.revenue_holds && r.profit_holds);
    Ok(Outcome {
        passed,
        detail: "revenue ratio >= theta and profit ratio >= theta/2 at 99% one-sided confidence for N = 2..5".into(),
    })
}

fn regret(dir: &std::path::Path, opts: &Options) -> Result<Outcome> {
    let m = MarketInstance::new(
        vec![vec![8.0, 8.0], vec![10.0, 10.0]],
        vec![vec![1.0, 1.0], vec![0.5, 0.5]],
        vec![2.0, 4.0],
        vec![vec![1.0, 1.0], vec![1.1, 1.1]],
        0.1,
    )?;
    let cfg = RegretConfig {
        horizons: vec![10_000, 40_000, 160_000],
        n_runs: opts.runs.unwrap_or(200),
        variance: 25.0,
        family: NoiseFamily::Gaussian,
        alpha: None,
        seed: 0xc8,
    };
    let r = measure_regret_scaling(&m, &cfg)?;
    let mut e = emitter(dir, Target::RegretScaling, &(&m, &cfg))?;
    e.csv("regret.csv", &r.points)?;
    let mut points = Vec::new();
    for p in &r.points {
        points.push(PlotPoint {
            x: p.horizon as f64,
            series: "mean-regret".into(),
            y: p.mean_regret,
            y_stderr: p.regret_stderr,
        });
        points.push(PlotPoint {
            x: p.horizon as f64,
            series: "revenue-ratio".into(),
            y: p.revenue_ratio,
            y_stderr: p.revenue_ratio_stderr,
        });
        println!(
            "T={}: L={}, mean regret {:.4e} ± {:.1e}, revenue ratio {:.6} ± {:.1e}",
            p.horizon, p.sub_phase_length, p.mean_regret, p.regret_stderr, p.revenue_ratio, p.revenue_ratio_stderr
        );
    }
    plot(
        &mut e,
        opts,
        "plot-data",
        "Regret and revenue ratio by horizon",
        "horizon",
        "value",
        &points,
    )?;
    let slope = r.slope.unwrap_or(f64::NAN);
    let monotone = r.points.windows(2).all(|w| {
        let se = (w[0].revenue_ratio_stderr.powi(2) + w[1].revenue_ratio_stderr.powi(2)).sqrt();
        w[1].revenue_ratio >= w[0].revenue_ratio - Z_995 * se
    });
    Ok(Outcome {
        passed: slope >= SLOPE_RANGE.0 && slope <= SLOPE_RANGE.1 && monotone,
        detail: format!(
            "log-log regret slope {slope:.4} (window [{}, {}]), revenue ratio non-decreasing: {monotone}",
            SLOPE_RANGE.0, SLOPE_RANGE.1
        ),
    })
}
