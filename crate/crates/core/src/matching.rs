//! One-to-one matchings between workers and tasks.
//!
//! Worker-proposing deferred acceptance runs in synchronous rounds: every
//! worker without a tentative match proposes to its best task that has not
//! rejected it yet, then every task keeps its favourite among the worker it
//! holds and the new proposers. The outcome is the worker-optimal stable
//! matching for the submitted lists; round scheduling only affects the
//! round count.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{holds, Assumption, MarketInstance, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("{side} list {owner} is not a permutation of 0..{n}: {ranking:?}")]
    MalformedPreferences {
        side: &'static str,
        owner: usize,
        n: usize,
        ranking: Vec<usize>,
    },
    #[error("expected {expected} preference lists, found {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("assignment {0:?} is not a permutation")]
    NotPermutation(Vec<usize>),
    #[error("instance violates assumption {0:?}")]
    AssumptionViolated(Assumption),
    #[error("weight matrix must be square and finite")]
    BadWeights,
}

fn is_permutation(v: &[usize], n: usize) -> bool {
    if v.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &x in v {
        if x >= n || seen[x] {
            return false;
        }
        seen[x] = true;
    }
    true
}

/// A strict ranking of the opposite side; position 0 is the favourite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceList {
    pub owner: usize,
    pub ranking: Vec<usize>,
}

impl PreferenceList {
    pub fn new(owner: usize, ranking: Vec<usize>) -> Self {
        PreferenceList { owner, ranking }
    }

    /// Position of `other` in this list, `None` if absent.
    pub fn rank_of(&self, other: usize) -> Option<usize> {
        self.ranking.iter().position(|&r| r == other)
    }

    pub fn prefers(&self, a: usize, b: usize) -> bool {
        match (self.rank_of(a), self.rank_of(b)) {
            (Some(ra), Some(rb)) => ra < rb,
            _ => false,
        }
    }
}

/// `assignment[i]` is the task of worker `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Matching(Vec<usize>);

impl TryFrom<Vec<usize>> for Matching {
    type Error = MatchingError;

    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Matching::new(v)
    }
}

impl From<Matching> for Vec<usize> {
    fn from(m: Matching) -> Self {
        m.0
    }
}

impl Matching {
    pub fn new(assignment: Vec<usize>) -> Result<Self, MatchingError> {
        if is_permutation(&assignment, assignment.len()) {
            Ok(Matching(assignment))
        } else {
            Err(MatchingError::NotPermutation(assignment))
        }
    }

    pub fn identity(n: usize) -> Self {
        Matching((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn task_of(&self, worker: usize) -> usize {
        self.0[worker]
    }

    /// Inverse map: `workers()[x]` is the worker holding task `x`.
    pub fn workers(&self) -> Vec<usize> {
        let mut inv = vec![0; self.0.len()];
        for (i, &x) in self.0.iter().enumerate() {
            inv[x] = i;
        }
        inv
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Ranks workers for every task by observed output, highest first. Equal
/// outputs favour the higher-indexed worker.
pub fn client_preferences_from_outputs(outputs: &Matrix) -> Vec<PreferenceList> {
    let n = outputs.len();
    (0..n)
        .map(|x| {
            let mut workers: Vec<usize> = (0..n).collect();
            workers.sort_by(|&a, &b| outputs[b][x].total_cmp(&outputs[a][x]).then(b.cmp(&a)));
            PreferenceList::new(x, workers)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GsOutcome {
    pub matching: Matching,
    /// Synchronous proposal rounds until every worker was held.
    pub rounds: usize,
    pub proposals: usize,
}

fn check_lists(side: &'static str, lists: &[PreferenceList], n: usize) -> Result<(), MatchingError> {
    if lists.len() != n {
        return Err(MatchingError::WrongCount {
            expected: n,
            found: lists.len(),
        });
    }
    for (owner, l) in lists.iter().enumerate() {
        if l.owner != owner || !is_permutation(&l.ranking, n) {
            return Err(MatchingError::MalformedPreferences {
                side,
                owner,
                n,
                ranking: l.ranking.clone(),
            });
        }
    }
    Ok(())
}

/// Worker-proposing deferred acceptance. Lists must be ordered by owner.
pub fn gale_shapley(
    worker_prefs: &[PreferenceList],
    client_prefs: &[PreferenceList],
) -> Result<GsOutcome, MatchingError> {
    let n = worker_prefs.len();
    check_lists("worker", worker_prefs, n)?;
    check_lists("client", client_prefs, n)?;

    // client_rank[x][i]: position of worker i in task x's list
    let mut client_rank = vec![vec![0usize; n]; n];
    for (x, l) in client_prefs.iter().enumerate() {
        for (pos, &i) in l.ranking.iter().enumerate() {
            client_rank[x][i] = pos;
        }
    }
    let mut next = vec![0usize; n];
    let mut held: Vec<Option<usize>> = vec![None; n];
    let mut free: Vec<usize> = (0..n).collect();
    let mut rounds = 0;
    let mut proposals = 0;

    while !free.is_empty() {
        rounds += 1;
        let mut rejected = Vec::new();
        for &i in &free {
            let x = worker_prefs[i].ranking[next[i]];
            next[i] += 1;
            proposals += 1;
            match held[x] {
                None => held[x] = Some(i),
                Some(j) if client_rank[x][i] < client_rank[x][j] => {
                    held[x] = Some(i);
                    rejected.push(j);
                }
                Some(_) => rejected.push(i),
            }
        }
        rejected.sort_unstable();
        free = rejected;
    }

    let mut assignment = vec![0; n];
    for (x, h) in held.iter().enumerate() {
        assignment[h.expect("complete lists leave nobody unmatched")] = x;
    }
    Ok(GsOutcome {
        matching: Matching(assignment),
        rounds,
        proposals,
    })
}

/// The round bound `N² − 2N + 2` (1 for a single worker).
pub fn round_bound(n: usize) -> usize {
    (n * n + 2).saturating_sub(2 * n).max(1)
}

/// Pairs `(worker, task)` not matched to each other that both prefer each
/// other to their partners, judged by the given lists.
pub fn blocking_pairs(
    matching: &Matching,
    worker_prefs: &[PreferenceList],
    client_prefs: &[PreferenceList],
) -> Vec<(usize, usize)> {
    let n = matching.len();
    let holder = matching.workers();
    let mut out = Vec::new();
    for i in 0..n {
        for y in 0..n {
            if matching.task_of(i) == y {
                continue;
            }
            if worker_prefs[i].prefers(y, matching.task_of(i)) && client_prefs[y].prefers(i, holder[y]) {
                out.push((i, y));
            }
        }
    }
    out
}

/// Pairs workers with tasks in the order of `scores` and task quality: the
/// lowest-scoring worker takes the lowest-quality task. Equal scores rank
/// the higher-indexed worker above.
pub fn assortative_by_score(scores: &[f64], qualities: &[f64]) -> Matching {
    let n = scores.len();
    let mut workers: Vec<usize> = (0..n).collect();
    workers.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut tasks: Vec<usize> = (0..n).collect();
    tasks.sort_by(|&a, &b| qualities[a].total_cmp(&qualities[b]));
    let mut assignment = vec![0; n];
    for (w, t) in workers.into_iter().zip(tasks) {
        assignment[w] = t;
    }
    Matching(assignment)
}

/// Assortative matching on maximum output `F(i)·e_i^max`. Requires worker
/// types to be task-independent.
pub fn assortative_matching(instance: &MarketInstance) -> Result<Matching, MatchingError> {
    if !holds(instance, Assumption::HomogeneousTasks) {
        return Err(MatchingError::AssumptionViolated(Assumption::HomogeneousTasks));
    }
    let scores: Vec<f64> = (0..instance.n()).map(|i| instance.max_output(i, 0)).collect();
    Ok(assortative_by_score(&scores, instance.qualities()))
}

const EXHAUSTIVE_LIMIT: usize = 8;

/// Permutation maximizing `Σ weights[i][m[i]]`.
///
/// Up to eight workers the search is exhaustive and, among permutations
/// with exactly equal totals, returns the lexicographically greatest
/// assignment vector. Larger inputs go through a shortest augmenting path
/// solver with dual potentials.
pub fn max_weight_assignment(weights: &Matrix) -> Result<(Matching, f64), MatchingError> {
    let n = weights.len();
    if weights.iter().any(|r| r.len() != n || r.iter().any(|w| !w.is_finite())) {
        return Err(MatchingError::BadWeights);
    }
    if n == 0 {
        return Ok((Matching(Vec::new()), 0.0));
    }
    let matching = if n <= EXHAUSTIVE_LIMIT {
        exhaustive(weights)
    } else {
        hungarian(weights)
    };
    let total = total_weight(weights, &matching);
    Ok((matching, total))
}

pub fn total_weight(weights: &Matrix, matching: &Matching) -> f64 {
    matching
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &x)| weights[i][x])
        .sum()
}

fn exhaustive(weights: &Matrix) -> Matching {
    let n = weights.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..n).permutations(n) {
        let total: f64 = perm.iter().enumerate().map(|(i, &x)| weights[i][x]).sum();
        // permutations arrive in lexicographic order; `>=` keeps the last tie
        if best.as_ref().is_none_or(|(b, _)| total >= *b) {
            best = Some((total, perm));
        }
    }
    Matching(best.expect("n >= 1").1)
}

fn hungarian(weights: &Matrix) -> Matching {
    let n = weights.len();
    // minimize cost = -weight; 1-based arrays, index 0 is the virtual root
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    Matching(assignment)
}
