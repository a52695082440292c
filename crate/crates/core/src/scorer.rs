//! Per-line cross-entropy under the cache model, with leave-one-bin-out
//! training and bidirectional (prolog + epilog) context.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexer::{LineType, TokenizedFile};
use crate::lm::{
    build_cache, cached_prob_excluding_self, count_sequences, merge_all, symbolize, Cache,
    CacheConfig, LmError, NgramTable, Sym, BOS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("no tokens")]
    NoTokens,
    #[error("bin_count must be at least 2, got {0}")]
    TooFewBins(usize),
    #[error("file {0} has no bin assignment")]
    Unbinned(String),
    #[error("duplicate file path {0} in snapshot")]
    DuplicatePath(String),
    #[error("no labeled buggy lines among the scored lines")]
    NoBuggyLines,
    #[error("no non-buggy lines among the scored lines")]
    NoCleanLines,
    #[error("global model order must be at least 1")]
    ZeroOrder,
    #[error(transparent)]
    Lm(#[from] LmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineScore {
    pub path: String,
    pub line: u32,
    /// Mean token entropy in bits.
    pub entropy: f64,
    pub token_count: u32,
    pub line_type: LineType,
    pub z: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Order of the global n-gram model.
    pub global_order: usize,
    pub cache: CacheConfig,
    /// Average forward and backward surprisal; forward only when false.
    pub bidirectional: bool,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            global_order: 3,
            cache: CacheConfig::default(),
            bidirectional: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinAssignment {
    pub bin_count: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl BinAssignment {
    pub fn bin_of(&self, path: &str) -> Option<usize> {
        self.assignment.get(path).copied()
    }
}

/// 64-bit FNV-1a; stable across platforms and toolchains.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn partition_bins<S: AsRef<str>>(
    paths: &[S],
    bin_count: usize,
) -> Result<BinAssignment, ScoreError> {
    if bin_count < 2 {
        return Err(ScoreError::TooFewBins(bin_count));
    }
    let assignment = paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            (p.to_string(), (fnv1a(p.as_bytes()) % bin_count as u64) as usize)
        })
        .collect();
    Ok(BinAssignment {
        bin_count,
        assignment,
    })
}

/// Forward and reversed-stream tables trained on the same files.
#[derive(Debug, Clone)]
pub struct BiTables {
    pub forward: NgramTable,
    pub backward: NgramTable,
}

impl BiTables {
    pub fn train<'a, I>(seqs: I, order: usize) -> Self
    where
        I: IntoIterator<Item = &'a [Sym]> + Clone,
    {
        let reversed: Vec<Vec<Sym>> = seqs
            .clone()
            .into_iter()
            .map(|s| s.iter().rev().cloned().collect())
            .collect();
        BiTables {
            forward: count_sequences(seqs, order),
            backward: count_sequences(reversed.iter().map(Vec::as_slice), order),
        }
    }
}

/// One file prepared for scoring: both token streams, each led by the
/// sentinel, and the matching caches.
pub struct FileContext {
    forward_seq: Vec<Sym>,
    backward_seq: Vec<Sym>,
    forward_cache: Cache,
    backward_cache: Cache,
}

impl FileContext {
    pub fn new(tokens: &[Sym], config: CacheConfig) -> Self {
        let reversed: Vec<Sym> = tokens.iter().rev().cloned().collect();
        let lead = |s: &[Sym]| {
            let mut v = Vec::with_capacity(s.len() + 1);
            v.push(Sym::from(BOS));
            v.extend_from_slice(s);
            v
        };
        FileContext {
            forward_seq: lead(tokens),
            backward_seq: lead(&reversed),
            forward_cache: build_cache(tokens, config),
            backward_cache: build_cache(&reversed, config),
        }
    }

    pub fn len(&self) -> usize {
        self.forward_seq.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn surprisal(p: f64) -> f64 {
    // `0.0 -` keeps p = 1 at +0.0.
    0.0 - p.log2()
}

/// Mean of the forward and (when present) backward surprisals, in bits.
pub fn combine_surprisals(forward_p: f64, backward_p: Option<f64>) -> f64 {
    match backward_p {
        Some(b) => (surprisal(forward_p) + surprisal(b)) / 2.0,
        None => surprisal(forward_p),
    }
}

/// Entropy in bits of the token at `index`, scored from its prolog with the
/// forward table and from its epilog with the reversed table. The file's own
/// occurrence is removed from its cache.
pub fn token_entropy(
    tables: &BiTables,
    file: &FileContext,
    index: usize,
    bidirectional: bool,
) -> f64 {
    let n = file.len();
    assert!(index < n, "token index out of range");
    let fwd_prefix = &file.forward_seq[..=index];
    let fwd_token = &file.forward_seq[index + 1];
    let forward = cached_prob_excluding_self(&tables.forward, &file.forward_cache, fwd_prefix, fwd_token);
    let backward = bidirectional.then(|| {
        let j = n - 1 - index;
        cached_prob_excluding_self(
            &tables.backward,
            &file.backward_cache,
            &file.backward_seq[..=j],
            &file.backward_seq[j + 1],
        )
    });
    combine_surprisals(forward, backward)
}

pub fn line_entropy(token_entropies: &[f64]) -> Result<f64, ScoreError> {
    if token_entropies.is_empty() {
        return Err(ScoreError::NoTokens);
    }
    Ok(token_entropies.iter().sum::<f64>() / token_entropies.len() as f64)
}

/// Score every token-bearing line of `file` against `tables`.
pub fn score_file(file: &TokenizedFile, tables: &BiTables, config: &ScoringConfig) -> Vec<LineScore> {
    let syms = symbolize(file);
    let ctx = FileContext::new(&syms, config.cache);
    let mut per_line: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (i, tok) in file.tokens.iter().enumerate() {
        per_line
            .entry(tok.line)
            .or_default()
            .push(token_entropy(tables, &ctx, i, config.bidirectional));
    }
    per_line
        .into_iter()
        .map(|(line, ents)| LineScore {
            path: file.path.clone(),
            line,
            entropy: line_entropy(&ents).expect("line has tokens"),
            token_count: ents.len() as u32,
            line_type: file.line_types.get(&line).copied().unwrap_or(LineType::Other),
            z: 0.0,
            weighted: 0.0,
        })
        .collect()
}

/// Snapshot with per-bin training tables computed once, reusable across
/// cache configurations.
pub struct PreparedSnapshot<'a> {
    files: &'a [TokenizedFile],
    file_bins: Vec<usize>,
    /// Tables trained on every bin except the indexed one.
    held_out: HashMap<usize, BiTables>,
}

pub fn prepare_snapshot<'a>(
    snapshot: &'a [TokenizedFile],
    global_order: usize,
    bins: &BinAssignment,
) -> Result<PreparedSnapshot<'a>, ScoreError> {
    if global_order == 0 {
        return Err(ScoreError::ZeroOrder);
    }
    if bins.bin_count < 2 {
        return Err(ScoreError::TooFewBins(bins.bin_count));
    }
    let mut seen = HashSet::new();
    let mut file_bins = Vec::with_capacity(snapshot.len());
    for f in snapshot {
        if !seen.insert(f.path.as_str()) {
            return Err(ScoreError::DuplicatePath(f.path.clone()));
        }
        let b = bins
            .bin_of(&f.path)
            .filter(|&b| b < bins.bin_count)
            .ok_or_else(|| ScoreError::Unbinned(f.path.clone()))?;
        file_bins.push(b);
    }
    let syms: Vec<Vec<Sym>> = snapshot.par_iter().map(symbolize).collect();
    let per_bin: Vec<BiTables> = (0..bins.bin_count)
        .into_par_iter()
        .map(|b| {
            let members: Vec<&[Sym]> = syms
                .iter()
                .zip(&file_bins)
                .filter(|(_, &fb)| fb == b)
                .map(|(s, _)| s.as_slice())
                .collect();
            BiTables::train(members.iter().copied(), global_order)
        })
        .collect();
    let used: BTreeSet<usize> = file_bins.iter().copied().collect();
    let held_out = used
        .into_par_iter()
        .map(|b| {
            let others = || per_bin.iter().enumerate().filter(move |(i, _)| *i != b).map(|(_, t)| t);
            let forward = merge_all(others().map(|t| &t.forward), global_order)?;
            let backward = merge_all(others().map(|t| &t.backward), global_order)?;
            Ok((b, BiTables { forward, backward }))
        })
        .collect::<Result<HashMap<_, _>, LmError>>()?;
    Ok(PreparedSnapshot {
        files: snapshot,
        file_bins,
        held_out,
    })
}

impl PreparedSnapshot<'_> {
    /// Tables used to score files of `bin`.
    pub fn tables_for_bin(&self, bin: usize) -> Option<&BiTables> {
        self.held_out.get(&bin)
    }

    pub fn score(&self, config: &ScoringConfig) -> Result<Vec<LineScore>, ScoreError> {
        config.cache.validate()?;
        let mut scores: Vec<LineScore> = self
            .files
            .par_iter()
            .zip(self.file_bins.par_iter())
            .flat_map_iter(|(f, b)| score_file(f, &self.held_out[b], config))
            .collect();
        scores.sort_by(|a, b| a.path.cmp(&b.path).then(a.line.cmp(&b.line)));
        Ok(scores)
    }
}

/// Score every token-bearing line of every file. Each file is scored with
/// tables trained on all bins but its own and a cache built from the file.
/// Output is ordered by path, then line; `z` and `weighted` are zero.
pub fn score_snapshot(
    snapshot: &[TokenizedFile],
    config: &ScoringConfig,
    bins: &BinAssignment,
) -> Result<Vec<LineScore>, ScoreError> {
    prepare_snapshot(snapshot, config.global_order, bins)?.score(config)
}

/// A snapshot with its buggy lines, as `(path, line)`.
#[derive(Debug, Clone)]
pub struct LabeledSnapshot {
    pub files: Vec<TokenizedFile>,
    pub buggy: BTreeSet<(String, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub min_backoff_order: usize,
    pub backoff_weight: f64,
    /// Mean entropy of buggy lines minus mean entropy of the other lines.
    pub gap: f64,
    pub buggy_lines: usize,
    pub other_lines: usize,
}

/// Entropy gap between buggy and other lines for every
/// (`min_backoff_order`, `backoff_weight`) pair; sorted by gap, largest first.
pub fn sweep_cache_params(
    corpus: &[LabeledSnapshot],
    orders: &[usize],
    weights: &[f64],
    base: &ScoringConfig,
    bin_count: usize,
) -> Result<Vec<SweepRow>, ScoreError> {
    let prepared = corpus
        .iter()
        .map(|s| {
            let paths: Vec<&str> = s.files.iter().map(|f| f.path.as_str()).collect();
            let bins = partition_bins(&paths, bin_count)?;
            prepare_snapshot(&s.files, base.global_order, &bins)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for &order in orders {
        for &weight in weights {
            let config = ScoringConfig {
                cache: CacheConfig {
                    min_backoff_order: order,
                    backoff_weight: weight,
                    ..base.cache
                },
                ..*base
            };
            let (mut buggy, mut other) = (Vec::new(), Vec::new());
            for (snap, prep) in corpus.iter().zip(&prepared) {
                for s in prep.score(&config)? {
                    if snap.buggy.contains(&(s.path.clone(), s.line)) {
                        buggy.push(s.entropy);
                    } else {
                        other.push(s.entropy);
                    }
                }
            }
            if buggy.is_empty() {
                return Err(ScoreError::NoBuggyLines);
            }
            if other.is_empty() {
                return Err(ScoreError::NoCleanLines);
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            rows.push(SweepRow {
                min_backoff_order: order,
                backoff_weight: weight,
                gap: mean(&buggy) - mean(&other),
                buggy_lines: buggy.len(),
                other_lines: other.len(),
            });
        }
    }
    rows.sort_by(|a, b| {
        b.gap
            .total_cmp(&a.gap)
            .then(a.min_backoff_order.cmp(&b.min_backoff_order))
            .then(a.backoff_weight.total_cmp(&b.backoff_weight))
    });
    Ok(rows)
}
