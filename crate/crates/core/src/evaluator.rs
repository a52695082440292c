//! Cost-effectiveness evaluation of line orderings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::RangeInclusive;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scorer::LineScore;

/// `(path, line)`.
pub type LineId = (String, u32);

/// Bug id to the lines it covers.
pub type BugMap = BTreeMap<String, BTreeSet<LineId>>;

pub const DEFAULT_BUDGET: f64 = 0.05;
pub const DEFAULT_RUNS: usize = 100;
/// Bugs touching this many lines or more are dropped before scoring.
pub const DEFAULT_MAX_BUG_LINES: usize = 15;
pub const SBF_MAX_BUG_LINES: usize = 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("empty line population")]
    EmptyPopulation,
    #[error("budget {0} outside (0, 1]")]
    BadBudget(f64),
    #[error("line {0}:{1} appears twice in the ordering")]
    DuplicateLine(String, u32),
    #[error("bug {bug} line {path}:{line} is not in the population")]
    BugOutsidePopulation { bug: String, path: String, line: u32 },
    #[error("orderings cover different populations")]
    PopulationMismatch,
    #[error("warned line {0}:{1} has no score")]
    MissingScore(String, u32),
    #[error("no warnings")]
    NoWarnings,
    #[error("invalid warning {path}:{start}-{end}: {reason}")]
    BadWarning {
        path: String,
        start: u32,
        end: u32,
        reason: String,
    },
    #[error("sample of size {0}; need at least 2")]
    SampleTooSmall(usize),
    #[error("pooled standard deviation is zero")]
    DegenerateSd,
    #[error("bootstrap needs at least one resample")]
    NoResamples,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub tool: String,
    pub path: String,
    pub start_line: u32,
    pub end_line: u32,
    pub priority: u8,
}

/// Declared priority range by tool name; unknown tools accept any positive priority.
pub fn priority_range(tool: &str) -> RangeInclusive<u8> {
    let t = tool.to_ascii_lowercase();
    if t.contains("findbugs") || t.contains("spotbugs") {
        1..=2
    } else if t.contains("pmd") {
        1..=4
    } else {
        1..=u8::MAX
    }
}

impl Warning {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |reason: String| EvalError::BadWarning {
            path: self.path.clone(),
            start: self.start_line,
            end: self.end_line,
            reason,
        };
        if self.start_line == 0 || self.start_line > self.end_line {
            return Err(bad("need 1 <= start_line <= end_line".into()));
        }
        let range = priority_range(&self.tool);
        if !range.contains(&self.priority) {
            return Err(bad(format!(
                "priority {} outside {}..={} for {}",
                self.priority,
                range.start(),
                range.end(),
                self.tool
            )));
        }
        Ok(())
    }
}

/// Every warned line with the highest priority among the warnings covering it.
pub fn warned_lines(warnings: &[Warning]) -> BTreeMap<LineId, u8> {
    let mut out: BTreeMap<LineId, u8> = BTreeMap::new();
    for w in warnings {
        for line in w.start_line..=w.end_line {
            let p = out.entry((w.path.clone(), line)).or_insert(0);
            *p = (*p).max(w.priority);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CreditMode {
    #[default]
    Full,
    Partial,
}

impl fmt::Display for CreditMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CreditMode::Full => "full",
            CreditMode::Partial => "partial",
        })
    }
}

impl std::str::FromStr for CreditMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(CreditMode::Full),
            "partial" => Ok(CreditMode::Partial),
            _ => Err(format!("unknown credit mode {s:?} (full|partial)")),
        }
    }
}

/// Lift curve: one point per inspected line, starting at (0, 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCurve {
    pub points: Vec<(f64, f64)>,
}

impl EvalCurve {
    /// y at `x` by linear interpolation.
    pub fn y_at(&self, x: f64) -> f64 {
        let i = self.points.partition_point(|p| p.0 < x);
        if i == 0 {
            return self.points.first().map_or(0.0, |p| p.1);
        }
        if i == self.points.len() {
            return self.points.last().map_or(0.0, |p| p.1);
        }
        let (x0, y0) = self.points[i - 1];
        let (x1, y1) = self.points[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

fn check_population(ordering: &[LineId]) -> Result<(), EvalError> {
    if ordering.is_empty() {
        return Err(EvalError::EmptyPopulation);
    }
    let mut seen = BTreeSet::new();
    for l in ordering {
        if !seen.insert(l) {
            return Err(EvalError::DuplicateLine(l.0.clone(), l.1));
        }
    }
    Ok(())
}

/// Each bug is worth one point. Full credit pays it at its first inspected
/// line; partial credit pays `1/|bug|` per inspected line. y is divided by the
/// number of (non-empty) bugs; with no bugs the curve stays at 0.
pub fn lift_curve(ordering: &[LineId], bugs: &BugMap, credit: CreditMode) -> Result<EvalCurve, EvalError> {
    check_population(ordering)?;
    let rank: BTreeMap<&LineId, usize> = ordering.iter().enumerate().map(|(i, l)| (l, i)).collect();
    // Per rank: (bugs first hit here, partial credit earned here).
    let n = ordering.len();
    let mut first_hits = vec![0u64; n];
    let mut partial = vec![0f64; n];
    let mut bug_count = 0u64;
    for (id, lines) in bugs {
        if lines.is_empty() {
            continue;
        }
        bug_count += 1;
        let share = 1.0 / lines.len() as f64;
        let mut first = usize::MAX;
        for l in lines {
            let &r = rank.get(l).ok_or_else(|| EvalError::BugOutsidePopulation {
                bug: id.clone(),
                path: l.0.clone(),
                line: l.1,
            })?;
            partial[r] += share;
            first = first.min(r);
        }
        first_hits[first] += 1;
    }
    let mut points = Vec::with_capacity(n + 1);
    points.push((0.0, 0.0));
    let (mut hits, mut earned) = (0u64, 0.0f64);
    for k in 0..n {
        hits += first_hits[k];
        earned += partial[k];
        let y = if bug_count == 0 {
            0.0
        } else {
            let full = hits as f64 / bug_count as f64;
            match credit {
                CreditMode::Full => full,
                // Rounding in the running sum must not push past full credit.
                CreditMode::Partial => (earned / bug_count as f64).min(full),
            }
        };
        points.push(((k + 1) as f64 / n as f64, y));
    }
    Ok(EvalCurve { points })
}

/// Trapezoidal area under `curve` over `[0, budget]`, not normalized by the budget.
pub fn aucec(curve: &EvalCurve, budget: f64) -> Result<f64, EvalError> {
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(EvalError::BadBudget(budget));
    }
    let mut area = 0.0;
    for w in curve.points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 >= budget {
            break;
        }
        if x1 <= budget {
            area += 0.5 * (y0 + y1) * (x1 - x0);
        } else {
            let yb = y0 + (y1 - y0) * (budget - x0) / (x1 - x0);
            area += 0.5 * (y0 + yb) * (budget - x0);
            break;
        }
    }
    Ok(area)
}

/// Static-bug-finder ordering: warned lines valued at their priority, others
/// at 0, each plus a seeded `U[0,1)` tie-breaker, sorted descending. Warned
/// lines outside the population are ignored.
pub fn simulate_sbf_order(warnings: &[Warning], population: &[LineId], seed: u64) -> Vec<LineId> {
    let warned = warned_lines(warnings);
    let mut lines: Vec<&LineId> = population.iter().collect();
    lines.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut valued: Vec<(f64, &LineId)> = lines
        .into_iter()
        .map(|l| {
            let base = warned.get(l).copied().unwrap_or(0) as f64;
            (base + rng.random::<f64>(), l)
        })
        .collect();
    valued.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    valued.into_iter().map(|(_, l)| l.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub mean: f64,
    /// Sample SD across runs.
    pub sd: f64,
    pub values: Vec<f64>,
}

/// `runs` simulated SBF orderings, each with its own seed drawn from a ChaCha
/// stream seeded by `seed`, scored by aucec at `budget`.
pub fn sbf_monte_carlo(
    warnings: &[Warning],
    population: &[LineId],
    bugs: &BugMap,
    credit: CreditMode,
    budget: f64,
    runs: usize,
    seed: u64,
) -> Result<MonteCarlo, EvalError> {
    check_population(population)?;
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(EvalError::BadBudget(budget));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..runs).map(|_| master.next_u64()).collect();
    let values = seeds
        .par_iter()
        .map(|&s| {
            let order = simulate_sbf_order(warnings, population, s);
            aucec(&lift_curve(&order, bugs, credit)?, budget)
        })
        .collect::<Result<Vec<f64>, EvalError>>()?;
    let (mean, sd) = mean_sd(&values);
    Ok(MonteCarlo { mean, sd, values })
}

/// Mean and sample SD (0 for fewer than two values).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Priority buckets (highest first, unwarned last), each ordered by score
/// descending, ties by `(path, line)`. The population is the key set of `scores`.
pub fn mix_order_by(warnings: &[Warning], scores: &BTreeMap<LineId, f64>) -> Result<Vec<LineId>, EvalError> {
    let warned = warned_lines(warnings);
    if let Some(((p, l), _)) = warned.iter().find(|(id, _)| !scores.contains_key(*id)) {
        return Err(EvalError::MissingScore(p.clone(), *l));
    }
    let mut lines: Vec<(u8, f64, &LineId)> = scores
        .iter()
        .map(|(id, &s)| (warned.get(id).copied().unwrap_or(0), s, id))
        .collect();
    lines.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| b.1.total_cmp(&a.1))
            .then_with(|| a.2.cmp(b.2))
    });
    Ok(lines.into_iter().map(|(_, _, id)| id.clone()).collect())
}

/// [`mix_order_by`] on the weighted score.
pub fn mix_order(warnings: &[Warning], scores: &[LineScore]) -> Result<Vec<LineId>, EvalError> {
    let map = scores
        .iter()
        .map(|s| ((s.path.clone(), s.line), s.weighted))
        .collect();
    mix_order_by(warnings, &map)
}

/// Lines ranked by a score, highest first, ties by `(path, line)`.
pub fn rank_by_score(scores: &BTreeMap<LineId, f64>) -> Vec<LineId> {
    mix_order_by(&[], scores).expect("no warnings to miss")
}

/// Both orderings scored at budget `warned_line_count / population`.
pub fn aucecl(
    sbf_ordering: &[LineId],
    nbf_ordering: &[LineId],
    warned_line_count: usize,
    bugs: &BugMap,
    credit: CreditMode,
) -> Result<(f64, f64), EvalError> {
    if warned_line_count == 0 {
        return Err(EvalError::NoWarnings);
    }
    check_population(sbf_ordering)?;
    let a: BTreeSet<&LineId> = sbf_ordering.iter().collect();
    let b: BTreeSet<&LineId> = nbf_ordering.iter().collect();
    if a != b || nbf_ordering.len() != sbf_ordering.len() {
        return Err(EvalError::PopulationMismatch);
    }
    let budget = (warned_line_count as f64 / sbf_ordering.len() as f64).min(1.0);
    let sbf = aucec(&lift_curve(sbf_ordering, bugs, credit)?, budget)?;
    let nbf = aucec(&lift_curve(nbf_ordering, bugs, credit)?, budget)?;
    Ok((sbf, nbf))
}

/// Keep bugs touching fewer than `max_bug_lines` lines.
pub fn filter_bugs_by_size(bugs: &BugMap, max_bug_lines: usize) -> BugMap {
    bugs.iter()
        .filter(|(_, lines)| lines.len() < max_bug_lines)
        .map(|(id, lines)| (id.clone(), lines.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub mean_diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub cohens_d: f64,
}

/// Mean difference `buggy - other` with a seeded percentile-bootstrap 95% CI
/// and Cohen's d over the pooled (n-1) standard deviation.
pub fn compare_entropy_distributions(
    buggy: &[f64],
    other: &[f64],
    bootstrap_samples: usize,
    seed: u64,
) -> Result<Comparison, EvalError> {
    for s in [buggy, other] {
        if s.len() < 2 {
            return Err(EvalError::SampleTooSmall(s.len()));
        }
    }
    if bootstrap_samples == 0 {
        return Err(EvalError::NoResamples);
    }
    let (m1, s1) = mean_sd(buggy);
    let (m2, s2) = mean_sd(other);
    let (n1, n2) = (buggy.len() as f64, other.len() as f64);
    let pooled = (((n1 - 1.0) * s1 * s1 + (n2 - 1.0) * s2 * s2) / (n1 + n2 - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(EvalError::DegenerateSd);
    }
    let mean_diff = m1 - m2;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resample_mean = |xs: &[f64]| -> f64 {
        (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).sum::<f64>() / xs.len() as f64
    };
    let mut diffs: Vec<f64> = (0..bootstrap_samples)
        .map(|_| resample_mean(buggy) - resample_mean(other))
        .collect();
    diffs.sort_by(f64::total_cmp);
    Ok(Comparison {
        mean_diff,
        ci_low: percentile(&diffs, 0.025),
        ci_high: percentile(&diffs, 0.975),
        cohens_d: mean_diff / pooled,
    })
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
