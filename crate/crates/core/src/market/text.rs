//! Flat key-value text form of an instance.
//!
//! ```text
//! n_workers = 2
//! effort_step = 1
//! quality = 2 1
//! f_min = 2
//! ...
//! [productivity]
//! 6 2
//! 5 4
//! [cost]
//! ...
//! ```
//!
//! Scalars are `key = value`; each matrix is a `[name]` header followed by
//! `n_workers` whitespace-separated rows. Floats are written in Rust's
//! shortest round-trip form so parsing restores them bit for bit.

use std::fmt::Write as _;

use super::{Bounds, InstanceData, MarketError, MarketInstance, Matrix};

const MATRICES: [&str; 3] = ["productivity", "cost", "max_effort"];

pub(super) fn write(m: &MarketInstance) -> String {
    let mut s = String::new();
    let n = m.n();
    let b = m.bounds();
    let _ = writeln!(s, "n_workers = {n}");
    let _ = writeln!(s, "effort_step = {:?}", m.effort_step());
    let _ = writeln!(s, "quality = {}", row(m.qualities()));
    for (k, v) in [
        ("f_min", b.f_min),
        ("f_max", b.f_max),
        ("c_min", b.c_min),
        ("c_max", b.c_max),
        ("g_min", b.g_min),
        ("g_max", b.g_max),
        ("e_lower", b.e_lower),
        ("e_upper", b.e_upper),
    ] {
        let _ = writeln!(s, "{k} = {v:?}");
    }
    for (name, mat) in MATRICES
        .iter()
        .zip([m.productivity_matrix(), m.cost_matrix(), m.max_effort_matrix()])
    {
        let _ = writeln!(s, "[{name}]");
        for r in mat {
            let _ = writeln!(s, "{}", row(r));
        }
    }
    s
}

fn row(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

fn err(line: usize, message: impl Into<String>) -> MarketError {
    MarketError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_reals(line: usize, text: &str) -> Result<Vec<f64>, MarketError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| err(line, format!("not a number: {tok:?}")))
        })
        .collect()
}

pub(super) fn parse(src: &str) -> Result<MarketInstance, MarketError> {
    let mut n: Option<usize> = None;
    let mut step: Option<f64> = None;
    let mut quality: Option<Vec<f64>> = None;
    let mut bound_values: [Option<f64>; 8] = [None; 8];
    const BOUND_KEYS: [&str; 8] = [
        "f_min", "f_max", "c_min", "c_max", "g_min", "g_max", "e_lower", "e_upper",
    ];
    let mut matrices: [Option<Matrix>; 3] = [None, None, None];
    let mut current: Option<usize> = None;

    for (idx, raw) in src.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let which = MATRICES
                .iter()
                .position(|&m| m == name.trim())
                .ok_or_else(|| err(line_no, format!("unknown block [{name}]")))?;
            if n.is_none() {
                return Err(err(line_no, "n_workers must precede matrix blocks"));
            }
            if matrices[which].is_some() {
                return Err(err(line_no, format!("duplicate block [{name}]")));
            }
            matrices[which] = Some(Vec::new());
            current = Some(which);
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            let key = key.trim();
            let value = value.trim();
            current = None;
            match key {
                "n_workers" => {
                    n = Some(
                        value
                            .parse()
                            .map_err(|_| err(line_no, format!("n_workers: not an integer: {value:?}")))?,
                    )
                }
                "effort_step" => step = Some(single(line_no, key, value)?),
                "quality" => quality = Some(parse_reals(line_no, value)?),
                _ => {
                    let k = BOUND_KEYS
                        .iter()
                        .position(|&b| b == key)
                        .ok_or_else(|| err(line_no, format!("unknown key {key:?}")))?;
                    bound_values[k] = Some(single(line_no, key, value)?);
                }
            }
            continue;
        }
        let which = current.ok_or_else(|| err(line_no, "matrix row outside a block"))?;
        let values = parse_reals(line_no, line)?;
        let n = n.unwrap_or(0);
        if values.len() != n {
            return Err(err(
                line_no,
                format!("{}: row has {} entries, expected {n}", MATRICES[which], values.len()),
            ));
        }
        let m = matrices[which].as_mut().expect("block opened");
        if m.len() == n {
            return Err(err(line_no, format!("{}: too many rows", MATRICES[which])));
        }
        m.push(values);
    }

    let end = src.lines().count();
    let n = n.ok_or_else(|| err(end, "missing n_workers"))?;
    let step = step.ok_or_else(|| err(end, "missing effort_step"))?;
    let quality = quality.ok_or_else(|| err(end, "missing quality"))?;
    let [productivity, cost, max_effort] = matrices;
    let take = |m: Option<Matrix>, name: &str| -> Result<Matrix, MarketError> {
        let m = m.ok_or_else(|| err(end, format!("missing [{name}] block")))?;
        if m.len() != n {
            return Err(err(end, format!("[{name}] has {} rows, expected {n}", m.len())));
        }
        Ok(m)
    };
    let bounds = if bound_values.iter().all(Option::is_some) {
        let v: Vec<f64> = bound_values.iter().map(|b| b.unwrap()).collect();
        Some(Bounds {
            f_min: v[0],
            f_max: v[1],
            c_min: v[2],
            c_max: v[3],
            g_min: v[4],
            g_max: v[5],
            e_lower: v[6],
            e_upper: v[7],
        })
    } else if bound_values.iter().any(Option::is_some) {
        return Err(err(end, "bounds must be given all together or not at all"));
    } else {
        None
    };
    MarketInstance::try_from(InstanceData {
        n_workers: n,
        productivity: take(productivity, "productivity")?,
        cost: take(cost, "cost")?,
        quality,
        max_effort: take(max_effort, "max_effort")?,
        effort_step: step,
        bounds,
    })
}

fn single(line: usize, key: &str, value: &str) -> Result<f64, MarketError> {
    value
        .parse::<f64>()
        .map_err(|_| err(line, format!("{key}: not a number: {value:?}")))
}
