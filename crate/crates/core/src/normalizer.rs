//! Line-type z-scores and historical bug-proneness weights.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexer::LineType;
use crate::scorer::LineScore;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormError {
    #[error("no statistics for line type {0}")]
    UnknownType(LineType),
    #[error("no training signal: history has no buggy lines")]
    NoTrainingSignal,
    #[error("weight table format error at line {line}: {reason}")]
    Format { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeStat {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    pub by_type: BTreeMap<LineType, TypeStat>,
}

impl TypeStats {
    pub fn get(&self, ty: LineType) -> Option<&TypeStat> {
        self.by_type.get(&ty)
    }
}

pub fn compute_type_stats(scores: &[LineScore]) -> TypeStats {
    let mut pools: BTreeMap<LineType, Vec<f64>> = BTreeMap::new();
    for s in scores {
        pools.entry(s.line_type).or_default().push(s.entropy);
    }
    let by_type = pools
        .into_iter()
        .map(|(ty, mut xs)| {
            // Sorting makes the sums independent of input order.
            xs.sort_by(f64::total_cmp);
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            (
                ty,
                TypeStat {
                    mean,
                    sd: var.sqrt(),
                    count: xs.len(),
                },
            )
        })
        .collect();
    TypeStats { by_type }
}

/// `(entropy - mean) / sd` within the line's type. Degenerate pools (sd = 0
/// or fewer than two lines) give 0.
pub fn zscore(score: &LineScore, stats: &TypeStats) -> Result<f64, NormError> {
    let st = stats
        .get(score.line_type)
        .ok_or(NormError::UnknownType(score.line_type))?;
    if st.sd == 0.0 || st.count < 2 {
        return Ok(0.0);
    }
    Ok((score.entropy - st.mean) / st.sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub bugs: u64,
    pub lines: u64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugWeightTable {
    /// Which snapshots the counts came from, free text.
    pub source: String,
    pub rows: BTreeMap<LineType, WeightRow>,
    /// Weight for a type absent from the history: the mean observed bug rate,
    /// normalized like the others.
    pub unseen_weight: f64,
}

impl BugWeightTable {
    pub fn weight(&self, ty: LineType) -> f64 {
        self.rows.get(&ty).map_or(self.unseen_weight, |r| r.weight)
    }

    fn from_counts(source: String, counts: BTreeMap<LineType, (u64, u64)>) -> Result<Self, NormError> {
        let rates: Vec<(LineType, u64, u64, f64)> = counts
            .into_iter()
            .filter(|(_, (_, lines))| *lines > 0)
            .map(|(ty, (bugs, lines))| (ty, bugs, lines, bugs as f64 / lines as f64))
            .collect();
        let total: f64 = rates.iter().map(|r| r.3).sum();
        if rates.iter().all(|r| r.1 == 0) || total <= 0.0 {
            return Err(NormError::NoTrainingSignal);
        }
        let mean_rate = total / rates.len() as f64;
        let rows = rates
            .into_iter()
            .map(|(ty, bugs, lines, rate)| {
                (
                    ty,
                    WeightRow {
                        bugs,
                        lines,
                        weight: rate / total,
                    },
                )
            })
            .collect();
        Ok(BugWeightTable {
            source,
            rows,
            unseen_weight: mean_rate / total,
        })
    }

    /// Header `# snapshots: <source>`, then `type<TAB>bugs<TAB>lines<TAB>weight`.
    pub fn to_text(&self) -> String {
        let mut out = format!("# snapshots: {}\n", self.source);
        for (ty, r) in &self.rows {
            let _ = writeln!(out, "{ty}\t{}\t{}\t{}", r.bugs, r.lines, r.weight);
        }
        out
    }

    /// Parse [`BugWeightTable::to_text`] output. Weights are recomputed from the
    /// counts and must match the stored column.
    pub fn from_text(text: &str) -> Result<Self, NormError> {
        let mut lines = text.lines().enumerate();
        let source = lines
            .next()
            .and_then(|(_, h)| h.strip_prefix("# snapshots: "))
            .ok_or(NormError::Format {
                line: 1,
                reason: "missing `# snapshots:` header".into(),
            })?
            .to_string();
        let mut counts = BTreeMap::new();
        let mut stored = BTreeMap::new();
        for (i, row) in lines {
            if row.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| NormError::Format { line: i + 1, reason };
            let cols: Vec<&str> = row.split('\t').collect();
            let [ty, bugs, lines_, weight] = cols[..] else {
                return Err(bad(format!("expected 4 columns, got {}", cols.len())));
            };
            let ty: LineType = ty.parse().map_err(bad)?;
            let bugs: u64 = bugs.parse().map_err(|_| bad("bad bug count".into()))?;
            let n: u64 = lines_.parse().map_err(|_| bad("bad line count".into()))?;
            let w: f64 = weight.parse().map_err(|_| bad("bad weight".into()))?;
            counts.insert(ty, (bugs, n));
            stored.insert(ty, (i + 1, w));
        }
        let table = Self::from_counts(source, counts)?;
        for (ty, (line, w)) in stored {
            let expect = table.weight(ty);
            if (expect - w).abs() > 1e-9 {
                return Err(NormError::Format {
                    line,
                    reason: format!("weight {w} inconsistent with counts ({expect})"),
                });
            }
        }
        Ok(table)
    }
}

/// Bug weights from labeled history lines `(line type, is_buggy)`.
pub fn train_bug_weights<I>(history: I, source: impl Into<String>) -> Result<BugWeightTable, NormError>
where
    I: IntoIterator<Item = (LineType, bool)>,
{
    let mut counts: BTreeMap<LineType, (u64, u64)> = BTreeMap::new();
    for (ty, buggy) in history {
        let c = counts.entry(ty).or_default();
        c.0 += u64::from(buggy);
        c.1 += 1;
    }
    BugWeightTable::from_counts(source.into(), counts)
}

pub fn weighted_score(z: f64, weights: &BugWeightTable, ty: LineType) -> f64 {
    z * weights.weight(ty)
}

/// Fill `z` (and `weighted`, when weights are given) on every score, with
/// type statistics taken from the same scores.
pub fn normalize(scores: &mut [LineScore], weights: Option<&BugWeightTable>) -> TypeStats {
    let stats = compute_type_stats(scores);
    for s in scores.iter_mut() {
        s.z = zscore(s, &stats).expect("stats cover every scored type");
        s.weighted = weights.map_or(0.0, |w| weighted_score(s.z, w, s.line_type));
    }
    stats
}
