//! Output files. Every text file opens with a `#` header naming the tool
//! version and config hash; JSON documents carry the same in `meta`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use matchsim_core::io::PlotPoint;

pub const TOOL: &str = "matchsim";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes into one output directory under a fixed header.
pub struct Emitter {
    dir: PathBuf,
    meta: Meta,
    written: Vec<PathBuf>,
}

impl Emitter {
    pub fn new(dir: &Path, config_hash: String) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            meta: Meta {
                tool: TOOL,
                version: VERSION,
                config_hash,
            },
            written: Vec::new(),
        })
    }

    pub fn header(&self) -> String {
        format!(
            "{} {} config-hash={}",
            self.meta.tool, self.meta.version, self.meta.config_hash
        )
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }

    /// `body` must serialize to a JSON object.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let meta = self.meta.clone();
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, &Document { meta: &meta, body })?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let header = self.header();
        let mut w = self.open(name)?;
        writeln!(w, "# {header}")?;
        let mut c = csv::Writer::from_writer(w);
        for r in rows {
            c.serialize(r)?;
        }
        c.flush()?;
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let header = self.header();
        let mut w = self.open(name)?;
        writeln!(w, "# {header}")?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn with_writer(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>, &str) -> Result<()>) -> Result<()> {
        let header = self.header();
        let mut w = self.open(name)?;
        f(&mut w, &header)?;
        w.flush()?;
        Ok(())
    }

    /// Line chart of `points`, one polyline per series.
    pub fn svg(&mut self, name: &str, title: &str, x_label: &str, y_label: &str, points: &[PlotPoint]) -> Result<()> {
        let body = render_svg(&self.header(), title, x_label, y_label, points);
        let mut w = self.open(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn render_svg(header: &str, title: &str, x_label: &str, y_label: &str, points: &[PlotPoint]) -> String {
    let (w, h, m) = (640.0, 400.0, 60.0);
    let mut series: Vec<&str> = Vec::new();
    for p in points {
        if !series.contains(&p.series.as_str()) {
            series.push(&p.series);
        }
    }
    let span = |vals: Vec<f64>| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (x0, x1) = span(points.iter().map(|p| p.x).collect());
    let (y0, y1) = span(points.iter().map(|p| p.y).collect());
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <!-- {header} -->\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n\
         <line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        w / 2.0,
        escape(title),
        h - m,
        w - m,
        h - m,
        h - m,
        w / 2.0,
        h - 16.0,
        escape(x_label),
        h / 2.0,
        h / 2.0,
        escape(y_label),
    );
    for (v, anchor_x, anchor_y) in [(x0, sx(x0), h - m + 16.0), (x1, sx(x1), h - m + 16.0)] {
        out.push_str(&format!(
            "<text x=\"{anchor_x}\" y=\"{anchor_y}\" text-anchor=\"middle\">{}</text>\n",
            tick(v)
        ));
    }
    for v in [y0, y1] {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            m - 6.0,
            sy(v) + 4.0,
            tick(v)
        ));
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts: Vec<&PlotPoint> = points.iter().filter(|p| p.series == *s).collect();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x));
        let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.y))).collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        let ly = m + 16.0 * k as f64;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/><text x=\"{}\" y=\"{}\">{}</text>\n",
            w - m - 140.0,
            ly - 9.0,
            w - m - 125.0,
            ly,
            escape(s)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
