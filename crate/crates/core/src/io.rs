//! Trace, summary and plot-data emission.
//!
//! Every writer takes an optional `#`-prefixed header line that precedes
//! the data; readers skip lines starting with `#`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{MetricSummary, SlotRecord};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn write_header<W: Write>(out: &mut W, header: Option<&str>) -> io::Result<()> {
    if let Some(h) = header {
        writeln!(out, "# {}", h.trim_start_matches('#').trim())?;
    }
    Ok(())
}

fn write_csv<W: Write, T: Serialize>(
    mut out: W,
    header: Option<&str>,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), IoError> {
    write_header(&mut out, header)?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(out: W, header: Option<&str>, records: &[SlotRecord]) -> Result<(), IoError> {
    write_csv(out, header, records)
}

pub fn write_trace_jsonl<W: Write>(mut out: W, header: Option<&str>, records: &[SlotRecord]) -> Result<(), IoError> {
    write_header(&mut out, header)?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn data_lines<R: BufRead>(input: R) -> Result<String, IoError> {
    let mut body = String::new();
    for line in input.lines() {
        let line = line?;
        if !line.starts_with('#') {
            body.push_str(&line);
            body.push('\n');
        }
    }
    Ok(body)
}

pub fn read_trace_csv<R: BufRead>(input: R) -> Result<Vec<SlotRecord>, IoError> {
    let body = data_lines(input)?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn read_trace_jsonl<R: BufRead>(input: R) -> Result<Vec<SlotRecord>, IoError> {
    data_lines(input)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(IoError::from))
        .collect()
}

/// Columns `metric, mean, stderr, n`.
pub fn write_summary_csv<W: Write>(out: W, header: Option<&str>, summary: &[MetricSummary]) -> Result<(), IoError> {
    write_csv(out, header, summary)
}

/// One point of a plot series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x: f64,
    pub series: String,
    pub y: f64,
    pub y_stderr: f64,
}

/// Columns `x, series, y, y_stderr`.
pub fn write_plot_csv<W: Write>(out: W, header: Option<&str>, points: &[PlotPoint]) -> Result<(), IoError> {
    write_csv(out, header, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{long_run_values, summarize, ValueMode};
    use crate::market::MarketInstance;
    use crate::mechanisms::run_fili;
    use crate::payments::PaymentRule;
    use crate::strategies::StrategyKind;

    fn records() -> Vec<SlotRecord> {
        let m = MarketInstance::new(
            vec![vec![6.0, 2.0], vec![5.0, 4.0]],
            vec![vec![1.0, 2.0], vec![1.0, 2.0]],
            vec![2.0, 1.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            0.5,
        )
        .unwrap();
        run_fili(
            &m,
            PaymentRule::quadratic(1.0 / 12.0),
            &[StrategyKind::Mtbb, StrategyKind::Mtbb],
            6,
        )
        .unwrap()
        .0
        .records
    }

    #[test]
    fn trace_round_trips() {
        let recs = records();
        let mut csv_out = Vec::new();
        write_trace_csv(&mut csv_out, Some("matchsim test"), &recs).unwrap();
        let text = String::from_utf8(csv_out.clone()).unwrap();
        assert!(text.starts_with("# matchsim test\nt,phase,worker,task,effort,output,revenue"));
        assert!(text.contains(",assessment:0,"));
        assert_eq!(read_trace_csv(csv_out.as_slice()).unwrap(), recs);

        let mut jl = Vec::new();
        write_trace_jsonl(&mut jl, Some("# matchsim test"), &recs).unwrap();
        assert_eq!(read_trace_jsonl(jl.as_slice()).unwrap(), recs);
    }

    #[test]
    fn summary_columns() {
        let m = MarketInstance::new(vec![vec![2.0]], vec![vec![1.0]], vec![1.0], vec![vec![1.0]], 1.0).unwrap();
        let (trace, _) = run_fili(&m, PaymentRule::quadratic(0.25), &[StrategyKind::Mtbb], 4).unwrap();
        let r = long_run_values(&trace, ValueMode::Limit).unwrap();
        let mut out = Vec::new();
        write_summary_csv(&mut out, None, &summarize(&[r.clone(), r])).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("metric,mean,stderr,n\n"));
    }
}
