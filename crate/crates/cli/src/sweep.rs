//! `sweep`: revenue, profit and stability across a payment-parameter grid.

use anyhow::anyhow;
use rayon::prelude::*;
use serde::Serialize;

use matchsim_core::analysis::{check_long_run_stability, mean_stderr};
use matchsim_core::engine::{long_run_values, ValueMode};
use matchsim_core::io::{write_plot_csv, PlotPoint};
use matchsim_core::mechanisms::run_mechanism;
use matchsim_core::payments::PaymentRule;

use crate::config::{prepare, Loaded, PaymentFamily};
use crate::emit::Emitter;
use crate::Failure;

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    family: &'static str,
    value: f64,
    revenue_mean: f64,
    revenue_stderr: f64,
    profit_mean: f64,
    profit_stderr: f64,
    stable_fraction: f64,
    n: usize,
}

fn rule(family: PaymentFamily, v: f64) -> PaymentRule {
    match family {
        PaymentFamily::Quadratic => PaymentRule::quadratic(v),
        PaymentFamily::Linear => PaymentRule::linear(v),
        PaymentFamily::StochasticQuadratic => PaymentRule::stochastic_quadratic(v),
    }
}

pub fn run(loaded: &Loaded, svg: bool) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let sweep = cfg
        .sweep
        .ok_or_else(|| loaded.error("sweep", "the scenario has no [sweep] table"))?;
    let prepared = prepare(loaded)?;
    let stochastic = prepared[0].noise.is_some();
    if stochastic != (sweep.family == PaymentFamily::StochasticQuadratic) {
        return Err(loaded
            .error(
                "sweep.family",
                "must be stochastic-quadratic exactly when the scenario is stochastic",
            )
            .into());
    }
    let values = sweep.values();
    for &v in &values {
        for p in &prepared {
            let mut spec = p.spec.clone();
            spec.payment = rule(sweep.family, v);
            spec.validate(&p.instance)
                .map_err(|e| loaded.error("sweep.to", format!("value {v}: {e}")))?;
        }
    }

    let jobs: Vec<(usize, usize, usize)> = (0..values.len())
        .flat_map(|j| (0..prepared.len()).flat_map(move |k| (0..cfg.runs).map(move |r| (j, k, r))))
        .collect();
    let samples = jobs
        .par_iter()
        .map(|&(j, k, r)| -> anyhow::Result<(usize, f64, f64, bool)> {
            let p = &prepared[k];
            let mut spec = p.spec.clone().without_records();
            spec.payment = rule(sweep.family, values[j]);
            let noise = p.noise_for(cfg.seed, k, r);
            let (trace, matching) = run_mechanism(&spec, &p.instance, noise.as_ref(), &p.strategies)?;
            let v = long_run_values(&trace, ValueMode::Limit)
                .map_err(|e| anyhow!("value {} instance {k} run {r}: {e}", values[j]))?;
            let stable = check_long_run_stability(&p.instance, &spec.payment, &matching, &v)?.stable;
            Ok((j, v.revenue, v.profit, stable))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let family = match sweep.family {
        PaymentFamily::Quadratic => "quadratic",
        PaymentFamily::Linear => "linear",
        PaymentFamily::StochasticQuadratic => "stochastic-quadratic",
    };
    let mut rows = Vec::with_capacity(values.len());
    let mut points = Vec::with_capacity(2 * values.len());
    for (j, &value) in values.iter().enumerate() {
        let at: Vec<_> = samples.iter().filter(|s| s.0 == j).collect();
        let (revenue_mean, revenue_stderr) = mean_stderr(&at.iter().map(|s| s.1).collect::<Vec<_>>());
        let (profit_mean, profit_stderr) = mean_stderr(&at.iter().map(|s| s.2).collect::<Vec<_>>());
        let stable_fraction = at.iter().filter(|s| s.3).count() as f64 / at.len() as f64;
        points.push(PlotPoint {
            x: value,
            series: "revenue".into(),
            y: revenue_mean,
            y_stderr: revenue_stderr,
        });
        points.push(PlotPoint {
            x: value,
            series: "profit".into(),
            y: profit_mean,
            y_stderr: profit_stderr,
        });
        rows.push(SweepRow {
            family,
            value,
            revenue_mean,
            revenue_stderr,
            profit_mean,
            profit_stderr,
            stable_fraction,
            n: at.len(),
        });
    }

    let mut emitter = Emitter::new(&cfg.output_dir, cfg.hash())?;
    let header = emitter.header();
    emitter.csv("sweep.csv", &rows)?;
    emitter.with_writer("plot-data.csv", |w, _| Ok(write_plot_csv(w, Some(&header), &points)?))?;
    if svg {
        let x = if sweep.family == PaymentFamily::Linear {
            "beta"
        } else {
            "alpha"
        };
        emitter.svg(
            "sweep.svg",
            &format!("{family} payment sweep"),
            x,
            "mean limit value",
            &points,
        )?;
    }
    if let Some(best) = rows.iter().max_by(|a, b| a.revenue_mean.total_cmp(&b.revenue_mean)) {
        println!("best revenue {} at {family} {}", best.revenue_mean, best.value);
    }
    println!(
        "wrote {} files to {}",
        emitter.written().len(),
        cfg.output_dir.display()
    );
    Ok(())
}
