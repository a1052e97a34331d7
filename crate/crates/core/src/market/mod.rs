//! Market instances: workers, tasks, and the effort technology linking them.
//!
//! A [`MarketInstance`] fixes everything nature decides before play starts:
//! per worker-task productivity and effort cost, task qualities, the maximum
//! effort each worker can put into each task, and the effort grid. Instances
//! are validated on construction and immutable afterwards.

mod generate;
mod noise;
mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_instance, GenerationConfig, OrderedTypeConfig};
pub use noise::{NoiseFamily, NoiseModel};

/// Row-major square matrix indexed `[worker][task]`.
pub type Matrix = Vec<Vec<f64>>;

/// Slack used when deciding whether a real effort value sits on the grid.
const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("market must have at least one worker")]
    Empty,
    #[error("{what}: expected {expected} entries, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what}({i},{x}) = {value} is not finite")]
    NotFinite {
        what: &'static str,
        i: usize,
        x: usize,
        value: f64,
    },
    #[error("{what}({i},{x}) = {value} lies outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        i: usize,
        x: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("tasks {x} and {y} share quality {value}")]
    QualityTie { x: usize, y: usize, value: f64 },
    #[error("workers {i} and {k} share productivity {value} on task {x}")]
    ProductivityTie { i: usize, k: usize, x: usize, value: f64 },
    #[error("max effort {value} for ({i},{x}) is not a multiple of the effort step {step}")]
    OffGrid { i: usize, x: usize, value: f64, step: f64 },
    #[error("effort step must be positive, got {0}")]
    BadStep(f64),
    #[error("invalid bounds: {0}")]
    BadBounds(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Declared closed ranges for every instance parameter.
///
/// The constants `W^max`, `g_l`, `g_u` and `Θ` are defined over the ranges
/// types are drawn from, not the realized extremes, so the
/// ranges travel with the instance. [`Bounds::observed`] gives the tightest
/// ranges for hand-built instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub f_min: f64,
    pub f_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub g_min: f64,
    pub g_max: f64,
    /// Smallest admissible maximum effort (`e_l^max`).
    pub e_lower: f64,
    /// Largest admissible maximum effort (`e_u^max`).
    pub e_upper: f64,
}

impl Bounds {
    pub fn observed(productivity: &Matrix, cost: &Matrix, quality: &[f64], max_effort: &Matrix) -> Self {
        let (f_min, f_max) = extremes(productivity.iter().flatten().copied());
        let (c_min, c_max) = extremes(cost.iter().flatten().copied());
        let (g_min, g_max) = extremes(quality.iter().copied());
        let (e_lower, e_upper) = extremes(max_effort.iter().flatten().copied());
        Bounds {
            f_min,
            f_max,
            c_min,
            c_max,
            g_min,
            g_max,
            e_lower,
            e_upper,
        }
    }

    fn validate(&self) -> Result<(), MarketError> {
        let pairs = [
            ("productivity", self.f_min, self.f_max),
            ("cost", self.c_min, self.c_max),
            ("quality", self.g_min, self.g_max),
            ("max effort", self.e_lower, self.e_upper),
        ];
        for (name, lo, hi) in pairs {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(MarketError::BadBounds(format!("{name} range [{lo}, {hi}]")));
            }
        }
        if self.f_min < 0.0 || self.c_min <= 0.0 || self.g_min <= 0.0 || self.e_lower <= 0.0 {
            return Err(MarketError::BadBounds(
                "productivity must be non-negative; cost, quality and max effort positive".into(),
            ));
        }
        Ok(())
    }
}

fn extremes(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Raw, unvalidated instance data; the serialized shape of [`MarketInstance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceData {
    pub n_workers: usize,
    pub productivity: Matrix,
    pub cost: Matrix,
    pub quality: Vec<f64>,
    pub max_effort: Matrix,
    pub effort_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceData", into = "InstanceData")]
pub struct MarketInstance {
    n: usize,
    productivity: Matrix,
    cost: Matrix,
    quality: Vec<f64>,
    max_effort: Matrix,
    effort_step: f64,
    bounds: Bounds,
}

impl TryFrom<InstanceData> for MarketInstance {
    type Error = MarketError;

    fn try_from(data: InstanceData) -> Result<Self, Self::Error> {
        if data.productivity.len() != data.n_workers {
            return Err(MarketError::Dimension {
                what: "n_workers vs productivity rows",
                expected: data.n_workers,
                found: data.productivity.len(),
            });
        }
        let instance = MarketInstance::new(
            data.productivity,
            data.cost,
            data.quality,
            data.max_effort,
            data.effort_step,
        )?;
        match data.bounds {
            Some(bounds) => instance.with_bounds(bounds),
            None => Ok(instance),
        }
    }
}

impl From<MarketInstance> for InstanceData {
    fn from(m: MarketInstance) -> Self {
        InstanceData {
            n_workers: m.n,
            productivity: m.productivity,
            cost: m.cost,
            quality: m.quality,
            max_effort: m.max_effort,
            effort_step: m.effort_step,
            bounds: Some(m.bounds),
        }
    }
}

impl MarketInstance {
    /// Builds an instance whose declared bounds are the observed extremes.
    pub fn new(
        productivity: Matrix,
        cost: Matrix,
        quality: Vec<f64>,
        max_effort: Matrix,
        effort_step: f64,
    ) -> Result<Self, MarketError> {
        let n = quality.len();
        if n == 0 {
            return Err(MarketError::Empty);
        }
        check_square("productivity", &productivity, n)?;
        check_square("cost", &cost, n)?;
        check_square("max_effort", &max_effort, n)?;
        for (what, m) in [
            ("productivity", &productivity),
            ("cost", &cost),
            ("max_effort", &max_effort),
        ] {
            for (i, row) in m.iter().enumerate() {
                for (x, &value) in row.iter().enumerate() {
                    if !value.is_finite() {
                        return Err(MarketError::NotFinite { what, i, x, value });
                    }
                }
            }
        }
        for (x, &value) in quality.iter().enumerate() {
            if !value.is_finite() {
                return Err(MarketError::NotFinite {
                    what: "quality",
                    i: 0,
                    x,
                    value,
                });
            }
        }
        if !(effort_step.is_finite() && effort_step > 0.0) {
            return Err(MarketError::BadStep(effort_step));
        }
        let bounds = Bounds::observed(&productivity, &cost, &quality, &max_effort);
        let instance = MarketInstance {
            n,
            productivity,
            cost,
            quality,
            max_effort,
            effort_step,
            bounds,
        };
        instance.validate()?;
        Ok(instance)
    }

    /// Replaces the declared ranges; every entry must still lie inside them.
    pub fn with_bounds(mut self, bounds: Bounds) -> Result<Self, MarketError> {
        self.bounds = bounds;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), MarketError> {
        let b = &self.bounds;
        b.validate()?;
        let n = self.n;
        for x in 0..n {
            for y in (x + 1)..n {
                if self.quality[x] == self.quality[y] {
                    return Err(MarketError::QualityTie {
                        x,
                        y,
                        value: self.quality[x],
                    });
                }
            }
            check_range("quality", 0, x, self.quality[x], b.g_min, b.g_max)?;
        }
        for i in 0..n {
            for x in 0..n {
                check_range("productivity", i, x, self.productivity[i][x], b.f_min, b.f_max)?;
                check_range("cost", i, x, self.cost[i][x], b.c_min, b.c_max)?;
                let e = self.max_effort[i][x];
                check_range("max_effort", i, x, e, b.e_lower, b.e_upper)?;
                let steps = e / self.effort_step;
                if (steps - steps.round()).abs() > GRID_TOLERANCE * steps.max(1.0) {
                    return Err(MarketError::OffGrid {
                        i,
                        x,
                        value: e,
                        step: self.effort_step,
                    });
                }
            }
        }
        for x in 0..n {
            for i in 0..n {
                for k in (i + 1)..n {
                    if self.productivity[i][x] == self.productivity[k][x] {
                        return Err(MarketError::ProductivityTie {
                            i,
                            k,
                            x,
                            value: self.productivity[i][x],
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn productivity(&self, i: usize, x: usize) -> f64 {
        self.productivity[i][x]
    }

    pub fn cost(&self, i: usize, x: usize) -> f64 {
        self.cost[i][x]
    }

    pub fn quality(&self, x: usize) -> f64 {
        self.quality[x]
    }

    pub fn qualities(&self) -> &[f64] {
        &self.quality
    }

    pub fn max_effort(&self, i: usize, x: usize) -> f64 {
        self.max_effort[i][x]
    }

    pub fn effort_step(&self) -> f64 {
        self.effort_step
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn productivity_matrix(&self) -> &Matrix {
        &self.productivity
    }

    pub fn cost_matrix(&self) -> &Matrix {
        &self.cost
    }

    pub fn max_effort_matrix(&self) -> &Matrix {
        &self.max_effort
    }

    /// Number of grid points `{0, δ, …, e_ix^max}` for the pair.
    pub fn grid_len(&self, i: usize, x: usize) -> usize {
        (self.max_effort[i][x] / self.effort_step).round() as usize + 1
    }

    /// The `k`-th effort level of the pair's grid. The top level is the
    /// stored maximum itself, so `grid_level(i, x, grid_len - 1)` is exact.
    pub fn grid_level(&self, i: usize, x: usize, k: usize) -> f64 {
        let last = self.grid_len(i, x) - 1;
        if k >= last {
            self.max_effort[i][x]
        } else {
            k as f64 * self.effort_step
        }
    }

    pub fn grid(&self, i: usize, x: usize) -> Vec<f64> {
        (0..self.grid_len(i, x)).map(|k| self.grid_level(i, x, k)).collect()
    }

    pub fn is_on_grid(&self, i: usize, x: usize, effort: f64) -> bool {
        if effort.is_nan() || effort < 0.0 || effort > self.max_effort[i][x] * (1.0 + GRID_TOLERANCE) {
            return false;
        }
        let steps = effort / self.effort_step;
        (steps - steps.round()).abs() <= GRID_TOLERANCE * steps.max(1.0) || effort == self.max_effort[i][x]
    }

    /// `F(i,x)·e_ix^max`, the most a worker can produce on a task.
    pub fn max_output(&self, i: usize, x: usize) -> f64 {
        self.productivity[i][x] * self.max_effort[i][x]
    }

    /// Tasks ordered by ascending quality.
    pub fn tasks_by_quality(&self) -> Vec<usize> {
        let mut tasks: Vec<usize> = (0..self.n).collect();
        tasks.sort_by(|&a, &b| self.quality[a].total_cmp(&self.quality[b]));
        tasks
    }

    pub fn to_text(&self) -> String {
        text::write(self)
    }

    pub fn from_text(s: &str) -> Result<Self, MarketError> {
        text::parse(s)
    }
}

fn check_square(what: &'static str, m: &Matrix, n: usize) -> Result<(), MarketError> {
    if m.len() != n {
        return Err(MarketError::Dimension {
            what,
            expected: n,
            found: m.len(),
        });
    }
    for row in m {
        if row.len() != n {
            return Err(MarketError::Dimension {
                what,
                expected: n,
                found: row.len(),
            });
        }
    }
    Ok(())
}

fn check_range(what: &'static str, i: usize, x: usize, value: f64, lo: f64, hi: f64) -> Result<(), MarketError> {
    if value < lo || value > hi {
        return Err(MarketError::OutOfRange {
            what,
            i,
            x,
            value,
            lo,
            hi,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub w_max: f64,
    pub alpha_star: f64,
    pub g_l: f64,
    pub g_u: f64,
}

/// `W^max`, `α*` and the quality thresholds, from the declared ranges.
pub fn derived_constants(instance: &MarketInstance) -> DerivedConstants {
    let b = instance.bounds();
    let e_max = instance
        .max_effort
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let w_max = b.f_max * e_max;
    DerivedConstants {
        w_max,
        alpha_star: 1.0 / (2.0 * w_max),
        g_l: 2.0 * b.c_min * w_max / (b.f_max * b.f_max),
        g_u: 2.0 * b.c_max * w_max / (b.f_min * b.f_min),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// Productivity, cost and max effort order workers identically on each task.
    OrderedTypes,
    /// Worker types do not vary across tasks.
    HomogeneousTasks,
    /// `c_max ≤ g_min / e_u^max`.
    CostCeiling,
    /// Every quality lies outside `[g_l, g_u]`.
    SeparatedQualities,
}

impl Assumption {
    pub fn from_number(k: u8) -> Option<Self> {
        match k {
            1 => Some(Assumption::OrderedTypes),
            2 => Some(Assumption::HomogeneousTasks),
            3 => Some(Assumption::CostCeiling),
            4 => Some(Assumption::SeparatedQualities),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    /// Workers `i` and `k` are ordered inconsistently on task `x`.
    Pair {
        i: usize,
        k: usize,
        x: usize,
    },
    /// Worker `i` differs between tasks `x` and `y`.
    Worker {
        i: usize,
        x: usize,
        y: usize,
    },
    CostCeiling {
        c_max: f64,
        ceiling: f64,
    },
    /// Task `x` has a quality inside the forbidden band.
    Task {
        x: usize,
        quality: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub holds: bool,
    pub violation: Option<Violation>,
}

impl AssumptionCheck {
    fn pass() -> Self {
        AssumptionCheck {
            holds: true,
            violation: None,
        }
    }

    fn fail(v: Violation) -> Self {
        AssumptionCheck {
            holds: false,
            violation: Some(v),
        }
    }
}

/// Optional overrides for the quality thresholds used by
/// [`Assumption::SeparatedQualities`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Thresholds {
    pub g_l: Option<f64>,
    pub g_u: Option<f64>,
}

pub fn check_assumption(instance: &MarketInstance, which: Assumption, extra: Thresholds) -> AssumptionCheck {
    let n = instance.n();
    match which {
        Assumption::OrderedTypes => {
            for x in 0..n {
                for i in 0..n {
                    for k in (i + 1)..n {
                        let f = instance.productivity(i, x).total_cmp(&instance.productivity(k, x));
                        let c = instance.cost(k, x).total_cmp(&instance.cost(i, x));
                        let e = instance.max_effort(i, x).total_cmp(&instance.max_effort(k, x));
                        if f != c || f != e {
                            return AssumptionCheck::fail(Violation::Pair { i, k, x });
                        }
                    }
                }
            }
            AssumptionCheck::pass()
        }
        Assumption::HomogeneousTasks => {
            let matrices = [
                instance.productivity_matrix(),
                instance.cost_matrix(),
                instance.max_effort_matrix(),
            ];
            for m in matrices {
                for (i, row) in m.iter().enumerate() {
                    if let Some(y) = (1..n).find(|&y| row[y] != row[0]) {
                        return AssumptionCheck::fail(Violation::Worker { i, x: 0, y });
                    }
                }
            }
            AssumptionCheck::pass()
        }
        Assumption::CostCeiling => {
            let b = instance.bounds();
            let ceiling = b.g_min / b.e_upper;
            if b.c_max <= ceiling {
                AssumptionCheck::pass()
            } else {
                AssumptionCheck::fail(Violation::CostCeiling {
                    c_max: b.c_max,
                    ceiling,
                })
            }
        }
        Assumption::SeparatedQualities => {
            let d = derived_constants(instance);
            let g_l = extra.g_l.unwrap_or(d.g_l);
            let g_u = extra.g_u.unwrap_or(d.g_u);
            for x in 0..n {
                let g = instance.quality(x);
                if !(g > g_u || g < g_l) {
                    return AssumptionCheck::fail(Violation::Task { x, quality: g });
                }
            }
            AssumptionCheck::pass()
        }
    }
}

pub fn holds(instance: &MarketInstance, which: Assumption) -> bool {
    check_assumption(instance, which, Thresholds::default()).holds
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn counterexample() -> MarketInstance {
        MarketInstance::new(
            vec![vec![6.0, 2.0], vec![5.0, 4.0]],
            vec![vec![1.0, 2.0], vec![1.0, 2.0]],
            vec![2.0, 1.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn counterexample_is_not_homogeneous() {
        let check = check_assumption(&counterexample(), Assumption::HomogeneousTasks, Thresholds::default());
        assert!(!check.holds);
        assert_eq!(check.violation, Some(Violation::Worker { i: 0, x: 0, y: 1 }));
    }

    #[test]
    fn manipulation_instance_fails_on_second_worker() {
        let m = MarketInstance::new(
            vec![vec![6.0, 6.0], vec![5.0, 4.0]],
            vec![vec![1.0, 2.0], vec![1.0, 2.0]],
            vec![2.0, 1.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            1.0,
        )
        .unwrap();
        let check = check_assumption(&m, Assumption::HomogeneousTasks, Thresholds::default());
        assert_eq!(check.violation, Some(Violation::Worker { i: 1, x: 0, y: 1 }));
    }

    #[test]
    fn derived_constants_on_counterexample() {
        let d = derived_constants(&counterexample());
        let brute = (0..2)
            .flat_map(|i| (0..2).map(move |x| (i, x)))
            .map(|(i, x)| counterexample().max_output(i, x))
            .fold(0.0, f64::max);
        assert_eq!(d.w_max, 6.0);
        assert_eq!(d.w_max, brute);
        assert_eq!(d.alpha_star, 1.0 / 12.0);
    }

    #[test]
    fn unit_instance_alpha_star() {
        let m = MarketInstance::new(vec![vec![1.0]], vec![vec![1.0]], vec![1.0], vec![vec![1.0]], 1.0).unwrap();
        assert_eq!(derived_constants(&m).alpha_star, 0.5);
    }

    #[test]
    fn symmetric_ranges_collapse_thresholds() {
        let m = MarketInstance::new(vec![vec![2.0]], vec![vec![3.0]], vec![1.0], vec![vec![1.0]], 0.5).unwrap();
        let d = derived_constants(&m);
        assert_eq!(d.g_l, d.g_u);
    }

    #[test]
    fn rejects_duplicate_productivity_on_a_task() {
        let err = MarketInstance::new(
            vec![vec![3.0, 1.0], vec![3.0, 2.0]],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![1.0, 2.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, MarketError::ProductivityTie { x: 0, .. }));
    }

    #[test]
    fn rejects_off_grid_max_effort() {
        let err = MarketInstance::new(vec![vec![1.0]], vec![vec![1.0]], vec![1.0], vec![vec![0.75]], 0.5).unwrap_err();
        assert!(matches!(err, MarketError::OffGrid { .. }));
    }

    #[test]
    fn rejects_equal_qualities() {
        let err = MarketInstance::new(
            vec![vec![1.0, 1.0], vec![2.0, 2.0]],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![2.0, 2.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, MarketError::QualityTie { .. }));
    }

    #[test]
    fn bounds_must_contain_entries() {
        let m = counterexample();
        let mut b = *m.bounds();
        b.f_max = 5.5;
        assert!(matches!(
            m.with_bounds(b),
            Err(MarketError::OutOfRange {
                what: "productivity",
                ..
            })
        ));
    }

    #[test]
    fn grid_levels() {
        let m = MarketInstance::new(vec![vec![1.0]], vec![vec![1.0]], vec![1.0], vec![vec![1.0]], 0.5).unwrap();
        assert_eq!(m.grid(0, 0), vec![0.0, 0.5, 1.0]);
        assert!(m.is_on_grid(0, 0, 0.5));
        assert!(!m.is_on_grid(0, 0, 0.3));
        assert!(!m.is_on_grid(0, 0, 1.5));
        assert!(!m.is_on_grid(0, 0, -0.5));
    }

    #[test]
    fn assumption_one_requires_strict_ordering_in_all_three() {
        let ordered = MarketInstance::new(
            vec![vec![2.0, 2.0], vec![3.0, 3.0]],
            vec![vec![2.0, 2.0], vec![1.0, 1.0]],
            vec![1.0, 2.0],
            vec![vec![1.0, 1.0], vec![2.0, 2.0]],
            1.0,
        )
        .unwrap();
        assert!(holds(&ordered, Assumption::OrderedTypes));
        assert!(holds(&ordered, Assumption::HomogeneousTasks));
        // equal costs break the equivalence
        assert!(!holds(&counterexample(), Assumption::OrderedTypes));
    }

    #[test]
    fn separated_qualities_uses_thresholds() {
        let m = counterexample();
        let loose = Thresholds {
            g_l: Some(1.5),
            g_u: Some(1.5),
        };
        assert!(
            !check_assumption(
                &m,
                Assumption::SeparatedQualities,
                Thresholds {
                    g_l: Some(1.0),
                    g_u: Some(2.5)
                }
            )
            .holds
        );
        // band [1.5, 1.5] excludes nothing but the single point
        assert!(check_assumption(&m, Assumption::SeparatedQualities, loose).holds);
    }

    #[test]
    fn json_round_trip_validates() {
        let m = counterexample();
        let json = serde_json::to_string(&m).unwrap();
        let back: MarketInstance = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let broken = json.replace("[6.0,2.0]", "[5.0,2.0]");
        assert!(serde_json::from_str::<MarketInstance>(&broken).is_err());
    }
}
