use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bounds, MarketError, MarketInstance};
use crate::rng;

/// Two-population random markets with homogeneous tasks.
///
/// The first `n/2` workers draw productivity from `U[0, w1]`, the rest from
/// `U[0, w2]`. Costs fall linearly in productivity, `C = C1 − C2·F`, every
/// worker shares one maximum effort, and qualities are `t1 + t2·U[0,1]`
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub n_workers: usize,
    #[serde(alias = "w1")]
    pub productivity_upper_1: f64,
    #[serde(alias = "w2")]
    pub productivity_upper_2: f64,
    #[serde(alias = "c1")]
    pub cost_intercept: f64,
    #[serde(alias = "c2")]
    pub cost_slope: f64,
    #[serde(alias = "t1")]
    pub quality_offset: f64,
    #[serde(alias = "t2")]
    pub quality_scale: f64,
    #[serde(alias = "e_max")]
    pub shared_max_effort: f64,
    pub effort_step: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GenerationConfig {
    /// The reference parameters of the numerical comparison
    /// (`w1=20, w2=14, C1=2, C2=0.05, t1=2, t2=10, e^max=1`).
    pub fn reference(n_workers: usize, seed: u64) -> Self {
        GenerationConfig {
            n_workers,
            productivity_upper_1: 20.0,
            productivity_upper_2: 14.0,
            cost_intercept: 2.0,
            cost_slope: 0.05,
            quality_offset: 2.0,
            quality_scale: 10.0,
            shared_max_effort: 1.0,
            effort_step: 0.1,
            seed,
        }
    }

    fn w_top(&self) -> f64 {
        self.productivity_upper_1.max(self.productivity_upper_2)
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let bad = |m: &str| Err(MarketError::InvalidConfig(m.to_string()));
        if self.n_workers == 0 {
            return bad("n_workers must be at least 1");
        }
        let reals = [
            ("productivity_upper_1", self.productivity_upper_1),
            ("productivity_upper_2", self.productivity_upper_2),
            ("cost_intercept", self.cost_intercept),
            ("quality_offset", self.quality_offset),
            ("quality_scale", self.quality_scale),
            ("shared_max_effort", self.shared_max_effort),
            ("effort_step", self.effort_step),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(MarketError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.cost_slope.is_finite() && self.cost_slope >= 0.0) {
            return bad("cost_slope must be non-negative");
        }
        let c_floor = self.cost_intercept - self.cost_slope * self.w_top();
        if c_floor <= 0.0 {
            return Err(MarketError::InvalidConfig(format!(
                "cost C1 - C2*max(w1,w2) = {c_floor} must be positive"
            )));
        }
        Ok(())
    }

    /// The planner's prior mean productivity per worker (its population mean).
    pub fn prior_means(&self) -> Vec<f64> {
        (0..self.n_workers)
            .map(|i| {
                if i < self.n_workers / 2 {
                    self.productivity_upper_1 / 2.0
                } else {
                    self.productivity_upper_2 / 2.0
                }
            })
            .collect()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GenerationConfig { seed, ..self.clone() }
    }
}

pub fn generate_instance(cfg: &GenerationConfig) -> Result<MarketInstance, MarketError> {
    cfg.validate()?;
    let n = cfg.n_workers;
    let mut r = rng::stream(&[cfg.seed, 0x67656e]);
    let mut productivity: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let upper = if i < n / 2 {
            cfg.productivity_upper_1
        } else {
            cfg.productivity_upper_2
        };
        productivity.push(draw_distinct(&mut r, &productivity, |r| r.random_range(0.0..upper)));
    }
    let quality = distinct_sorted(&mut r, n, |r| {
        cfg.quality_offset + cfg.quality_scale * r.random_range(0.0..=1.0)
    });
    let cost: Vec<f64> = productivity
        .iter()
        .map(|f| cfg.cost_intercept - cfg.cost_slope * f)
        .collect();
    let w_top = cfg.w_top();
    let bounds = Bounds {
        f_min: 0.0,
        f_max: w_top,
        c_min: cfg.cost_intercept - cfg.cost_slope * w_top,
        c_max: cfg.cost_intercept,
        g_min: cfg.quality_offset,
        g_max: cfg.quality_offset + cfg.quality_scale,
        e_lower: cfg.shared_max_effort,
        e_upper: cfg.shared_max_effort,
    };
    let e = vec![cfg.shared_max_effort; n];
    build_homogeneous(&productivity, &cost, &e, quality, cfg.effort_step, bounds)
}

fn build_homogeneous(
    productivity: &[f64],
    cost: &[f64],
    max_effort: &[f64],
    quality: Vec<f64>,
    step: f64,
    bounds: Bounds,
) -> Result<MarketInstance, MarketError> {
    let n = productivity.len();
    let widen = |v: &[f64]| v.iter().map(|&a| vec![a; n]).collect::<Vec<_>>();
    MarketInstance::new(widen(productivity), widen(cost), quality, widen(max_effort), step)?.with_bounds(bounds)
}

fn draw_distinct(r: &mut ChaCha8Rng, seen: &[f64], mut draw: impl FnMut(&mut ChaCha8Rng) -> f64) -> f64 {
    loop {
        let v = draw(r);
        if !seen.contains(&v) {
            return v;
        }
    }
}

fn distinct_sorted(r: &mut ChaCha8Rng, n: usize, mut draw: impl FnMut(&mut ChaCha8Rng) -> f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(n);
    for _ in 0..n {
        let v = draw_distinct(r, &out, &mut draw);
        out.push(v);
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Markets whose workers are totally ordered by type: higher productivity
/// comes with strictly lower cost and strictly higher maximum effort.
///
/// Productivity is `U[f_min, f_max]`; cost maps productivity linearly onto
/// `[c_min, c_max]` (decreasing); the `r`-th least productive worker gets
/// max effort `e_lower + r·spacing·δ`. With `task_varying` every task draws
/// its own productivity column, otherwise types are shared across tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderedTypeConfig {
    pub n_workers: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub e_lower: f64,
    pub effort_step: f64,
    /// Grid steps between consecutive workers' maximum efforts.
    pub effort_spacing: u32,
    #[serde(default)]
    pub task_varying: bool,
    #[serde(default)]
    pub seed: u64,
}

impl OrderedTypeConfig {
    pub fn e_upper(&self) -> f64 {
        self.e_lower + (self.n_workers.saturating_sub(1) as f64) * self.effort_spacing as f64 * self.effort_step
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        OrderedTypeConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let bad = |m: String| Err(MarketError::InvalidConfig(m));
        if self.n_workers == 0 {
            return bad("n_workers must be at least 1".into());
        }
        if !(self.f_min >= 0.0 && self.f_max > self.f_min) {
            return bad(format!("need 0 <= f_min < f_max, got [{}, {}]", self.f_min, self.f_max));
        }
        if !(self.c_min > 0.0 && self.c_max >= self.c_min) {
            return bad(format!("need 0 < c_min <= c_max, got [{}, {}]", self.c_min, self.c_max));
        }
        if self.n_workers > 1 && self.c_max == self.c_min {
            return bad("cost range must be non-degenerate to order workers".into());
        }
        if !(self.g_min > 0.0 && self.g_max > self.g_min) {
            return bad(format!("need 0 < g_min < g_max, got [{}, {}]", self.g_min, self.g_max));
        }
        if !(self.effort_step > 0.0 && self.e_lower > 0.0) {
            return bad("effort_step and e_lower must be positive".into());
        }
        let steps = self.e_lower / self.effort_step;
        if (steps - steps.round()).abs() > 1e-9 {
            return bad("e_lower must be a multiple of effort_step".into());
        }
        if self.n_workers > 1 && self.effort_spacing == 0 {
            return bad("effort_spacing must be at least 1".into());
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<MarketInstance, MarketError> {
        self.validate()?;
        let n = self.n_workers;
        let mut r = rng::stream(&[self.seed, 0x6f72_6474]);
        let bounds = Bounds {
            f_min: self.f_min,
            f_max: self.f_max,
            c_min: self.c_min,
            c_max: self.c_max,
            g_min: self.g_min,
            g_max: self.g_max,
            e_lower: self.e_lower,
            e_upper: self.e_upper(),
        };
        let columns = if self.task_varying { n } else { 1 };
        let mut f_cols = Vec::with_capacity(columns);
        for _ in 0..columns {
            let mut col: Vec<f64> = Vec::with_capacity(n);
            for _ in 0..n {
                let v = draw_distinct(&mut r, &col, |r| r.random_range(self.f_min..=self.f_max));
                col.push(v);
            }
            f_cols.push(col);
        }
        let quality = distinct_sorted(&mut r, n, |r| r.random_range(self.g_min..=self.g_max));
        let mut productivity = vec![vec![0.0; n]; n];
        let mut cost = vec![vec![0.0; n]; n];
        let mut max_effort = vec![vec![0.0; n]; n];
        for x in 0..n {
            let col = &f_cols[if self.task_varying { x } else { 0 }];
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            for (rank, &i) in order.iter().enumerate() {
                let f = col[i];
                productivity[i][x] = f;
                let share = (f - self.f_min) / (self.f_max - self.f_min);
                cost[i][x] = (self.c_max - (self.c_max - self.c_min) * share).clamp(self.c_min, self.c_max);
                let level = (self.e_lower / self.effort_step).round() as u32 + rank as u32 * self.effort_spacing;
                max_effort[i][x] = level as f64 * self.effort_step;
            }
        }
        let mut bounds = bounds;
        bounds.e_upper = max_effort.iter().flatten().copied().fold(bounds.e_upper, f64::max);
        bounds.e_lower = max_effort.iter().flatten().copied().fold(bounds.e_lower, f64::min);
        MarketInstance::new(productivity, cost, quality, max_effort, self.effort_step)?.with_bounds(bounds)
    }
}
