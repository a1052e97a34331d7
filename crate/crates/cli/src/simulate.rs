//! `simulate` and `generate-instance`.
//!
//! Every instance runs `runs` times; only instance 0, run 0 keeps its slot
//! records for the trace files.

use anyhow::anyhow;
use rayon::prelude::*;
use serde::Serialize;

use matchsim_core::engine::{long_run_values, summarize, MetricSummary, OutcomeReport, ValueMode};
use matchsim_core::io::{write_summary_csv, write_trace_csv, write_trace_jsonl};
use matchsim_core::market::InstanceData;
use matchsim_core::matching::Matching;
use matchsim_core::mechanisms::run_mechanism;

use crate::config::{build_instances, prepare, Loaded, ScenarioConfig};
use crate::emit::Emitter;
use crate::verify;
use crate::Failure;

#[derive(Debug, Clone, Serialize)]
struct RunReport {
    instance: usize,
    run: usize,
    matching: Matching,
    finite_average: OutcomeReport,
    /// Absent when the operational tail is not stationary.
    limit: Option<OutcomeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    limit_unavailable: Option<String>,
}

#[derive(Serialize)]
struct Report<'a> {
    scenario: &'a ScenarioConfig,
    results: Vec<RunReport>,
}

fn prefixed(prefix: &str, rows: Vec<MetricSummary>) -> impl Iterator<Item = MetricSummary> + '_ {
    rows.into_iter().map(move |mut r| {
        r.metric = format!("{prefix}.{}", r.metric);
        r
    })
}

pub fn run(loaded: &Loaded) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let prepared = prepare(loaded)?;
    let jobs: Vec<(usize, usize)> = (0..prepared.len())
        .flat_map(|k| (0..cfg.runs).map(move |r| (k, r)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(k, r)| -> anyhow::Result<_> {
            let p = &prepared[k];
            let mut spec = p.spec.clone();
            spec.retain_trace = k == 0 && r == 0;
            let noise = p.noise_for(cfg.seed, k, r);
            let (trace, matching) = run_mechanism(&spec, &p.instance, noise.as_ref(), &p.strategies)?;
            let finite_average = long_run_values(&trace, ValueMode::FiniteAverage)?;
            let (limit, limit_unavailable) = match long_run_values(&trace, ValueMode::Limit) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let report = RunReport {
                instance: k,
                run: r,
                matching,
                finite_average,
                limit,
                limit_unavailable,
            };
            Ok((report, spec.retain_trace.then_some(trace.records)))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut emitter = Emitter::new(&cfg.output_dir, cfg.hash())?;
    let header = emitter.header();
    let records = outcomes
        .iter()
        .find_map(|(_, r)| r.as_ref())
        .ok_or_else(|| anyhow!("no retained trace"))?;
    emitter.with_writer("trace.csv", |w, _| Ok(write_trace_csv(w, Some(&header), records)?))?;
    emitter.with_writer("trace.jsonl", |w, _| Ok(write_trace_jsonl(w, Some(&header), records)?))?;

    let results: Vec<RunReport> = outcomes.into_iter().map(|(r, _)| r).collect();
    let same_size = prepared.iter().all(|p| p.instance.n() == prepared[0].instance.n());
    if same_size {
        let finite: Vec<OutcomeReport> = results.iter().map(|r| r.finite_average.clone()).collect();
        let mut rows: Vec<MetricSummary> = prefixed("finite_average", summarize(&finite)).collect();
        let limits: Option<Vec<OutcomeReport>> = results.iter().map(|r| r.limit.clone()).collect();
        if let Some(l) = limits {
            rows.extend(prefixed("limit", summarize(&l)));
        }
        emitter.with_writer("summary.csv", |w, _| Ok(write_summary_csv(w, Some(&header), &rows)?))?;
    }

    let first = &results[0];
    println!(
        "instance 0 run 0: matching {:?}, revenue {} (limit {})",
        first.matching.as_slice(),
        first.finite_average.revenue,
        first
            .limit
            .as_ref()
            .map_or_else(|| "n/a".to_string(), |l| l.revenue.to_string())
    );
    emitter.text("scenario.toml", &cfg.to_toml())?;
    emitter.json("report.json", &Report { scenario: cfg, results })?;

    let mut failed = Vec::new();
    for task in &cfg.analysis {
        let verdict = verify::evaluate(&prepared, task, false)?;
        verify::emit(&verdict, &mut emitter)?;
        if !verdict.passed {
            failed.push(verdict.summary_line());
        }
    }
    println!(
        "wrote {} files to {}",
        emitter.written().len(),
        cfg.output_dir.display()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verdict(failed.join("; ")))
    }
}

#[derive(Serialize)]
struct InstanceDocument {
    index: usize,
    #[serde(flatten)]
    data: InstanceData,
}

/// Writes `instance-<k>.txt` and `instance-<k>.json` for every instance.
pub fn generate_instances(loaded: &Loaded) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let instances = build_instances(loaded)?;
    let mut emitter = Emitter::new(&cfg.output_dir, cfg.hash())?;
    for (k, m) in instances.into_iter().enumerate() {
        emitter.text(&format!("instance-{k}.txt"), &m.to_text())?;
        emitter.json(
            &format!("instance-{k}.json"),
            &InstanceDocument {
                index: k,
                data: m.into(),
            },
        )?;
    }
    println!(
        "wrote {} files to {}",
        emitter.written().len(),
        cfg.output_dir.display()
    );
    Ok(())
}
