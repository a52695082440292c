//! N-gram counting, backoff probabilities and the self-adaptive cache
//! interpolation.
//!
//! Global estimates are plain count ratios `c(h t) / c(h)` over the longest
//! observed prefix. When `h t` was never seen the prefix is shortened by one
//! token and the estimate is multiplied by `backoff_weight`; a token absent
//! from the table altogether gets the floor `1 / (vocab_size + 1)`.
//!
//! The cache holds every n-gram of the file under analysis and is mixed in
//! with weight `H / (gamma + H)`, where `H` counts the occurrences of the
//! matched prefix in the cache.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexer::TokenizedFile;

/// Interned token text. Cloning is a reference-count bump.
pub type Sym = Arc<str>;

/// Begin-of-file sentinel prepended to every non-empty sequence counted into
/// an [`NgramTable`]. The lexer never produces this lexeme.
pub const BOS: &str = "<s>";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmError {
    #[error("cannot merge tables of order {0} and {1}")]
    OrderMismatch(usize, usize),
    #[error("invalid cache configuration: {0}")]
    InvalidConfig(String),
    #[error("table format error at line {line}: {reason}")]
    Format { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub max_cache_order: usize,
    pub min_backoff_order: usize,
    pub backoff_weight: f64,
    pub gamma: f64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            max_cache_order: 10,
            min_backoff_order: 4,
            backoff_weight: 1.0,
            gamma: 1.0,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        if self.min_backoff_order < 1 || self.min_backoff_order > self.max_cache_order {
            return Err(LmError::InvalidConfig(format!(
                "need 1 <= min_backoff_order ({}) <= max_cache_order ({})",
                self.min_backoff_order, self.max_cache_order
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(LmError::InvalidConfig(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.backoff_weight > 0.0 && self.backoff_weight.is_finite()) {
            return Err(LmError::InvalidConfig(format!(
                "backoff_weight must be > 0, got {}",
                self.backoff_weight
            )));
        }
        Ok(())
    }
}

pub fn symbolize(file: &TokenizedFile) -> Vec<Sym> {
    file.tokens.iter().map(|t| Sym::from(t.text.as_str())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramTable {
    max_order: usize,
    counts: HashMap<Vec<Sym>, u64>,
    vocab_size: usize,
    total_tokens: u64,
}

impl NgramTable {
    pub fn new(max_order: usize) -> Self {
        assert!(max_order >= 1, "max_order must be at least 1");
        NgramTable {
            max_order,
            counts: HashMap::new(),
            vocab_size: 0,
            total_tokens: 0,
        }
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Number of distinct n-grams stored (all orders).
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Count of `ngram`; the empty sequence counts every token.
    pub fn count(&self, ngram: &[Sym]) -> u64 {
        if ngram.is_empty() {
            return self.total_tokens;
        }
        self.counts.get(ngram).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[Sym], u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// Add every n-gram (orders `1..=max_order`) of `BOS` followed by `tokens`.
    pub fn add_sequence(&mut self, tokens: &[Sym]) {
        if tokens.is_empty() {
            return;
        }
        let mut seq = Vec::with_capacity(tokens.len() + 1);
        seq.push(Sym::from(BOS));
        seq.extend_from_slice(tokens);
        add_ngrams(&mut self.counts, &seq, self.max_order, &mut self.vocab_size);
        self.total_tokens += seq.len() as u64;
    }

    fn insert(&mut self, ngram: Vec<Sym>, count: u64) {
        if count == 0 {
            return;
        }
        if ngram.len() == 1 {
            self.total_tokens += count;
        }
        *self.counts.entry(ngram).or_insert(0) += count;
    }

    fn recompute_vocab(&mut self) {
        self.vocab_size = self.counts.keys().filter(|k| k.len() == 1).count();
    }

    /// Serialize as a header line followed by `count<TAB>tok1 tok2 ...` rows in
    /// lexicographic n-gram order. Spaces, tabs, newlines and backslashes inside
    /// tokens are escaped.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(&Vec<Sym>, u64)> = self.counts.iter().map(|(k, &v)| (k, v)).collect();
        rows.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let mut out = format!(
            "# max_order={} vocab_size={} total_tokens={}\n",
            self.max_order, self.vocab_size, self.total_tokens
        );
        for (gram, count) in rows {
            let _ = write!(out, "{count}\t");
            for (i, tok) in gram.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                escape_into(&mut out, tok);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LmError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(LmError::Format {
            line: 1,
            reason: "missing header".into(),
        })?;
        let field = |name: &str| -> Result<u64, LmError> {
            header
                .trim_start_matches('#')
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(name)?.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| LmError::Format {
                    line: 1,
                    reason: format!("header lacks {name}"),
                })
        };
        let max_order = field("max_order")? as usize;
        let vocab_size = field("vocab_size")? as usize;
        let total_tokens = field("total_tokens")?;
        if max_order == 0 {
            return Err(LmError::Format {
                line: 1,
                reason: "max_order must be positive".into(),
            });
        }
        let mut counts = HashMap::new();
        for (i, row) in lines {
            let bad = |reason: &str| LmError::Format {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (count, grams) = row.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let count: u64 = count.parse().map_err(|_| bad("bad count"))?;
            let gram: Vec<Sym> = grams
                .split(' ')
                .map(|t| unescape(t).map(Sym::from).ok_or_else(|| bad("bad escape")))
                .collect::<Result<_, _>>()?;
            if gram.is_empty() || gram.len() > max_order {
                return Err(bad("n-gram length out of range"));
            }
            if counts.insert(gram, count).is_some() {
                return Err(bad("duplicate n-gram"));
            }
        }
        Ok(NgramTable {
            max_order,
            counts,
            vocab_size,
            total_tokens,
        })
    }
}

fn add_ngrams(
    counts: &mut HashMap<Vec<Sym>, u64>,
    seq: &[Sym],
    max_order: usize,
    vocab: &mut usize,
) {
    for start in 0..seq.len() {
        let longest = max_order.min(seq.len() - start);
        for n in 1..=longest {
            let gram = &seq[start..start + n];
            match counts.get_mut(gram) {
                Some(c) => *c += 1,
                None => {
                    if n == 1 {
                        *vocab += 1;
                    }
                    counts.insert(gram.to_vec(), 1);
                }
            }
        }
    }
}

fn escape_into(out: &mut String, tok: &str) {
    for c in tok.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            's' => ' ',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    (!out.is_empty()).then_some(out)
}

/// Count all n-grams up to `max_order` over `files`, each file a separate
/// sequence starting with [`BOS`].
pub fn count_ngrams(files: &[TokenizedFile], max_order: usize) -> NgramTable {
    let mut table = NgramTable::new(max_order);
    for f in files {
        table.add_sequence(&symbolize(f));
    }
    table
}

/// Like [`count_ngrams`] over pre-symbolized sequences.
pub fn count_sequences<'a, I>(seqs: I, max_order: usize) -> NgramTable
where
    I: IntoIterator<Item = &'a [Sym]>,
{
    let mut table = NgramTable::new(max_order);
    for s in seqs {
        table.add_sequence(s);
    }
    table
}

/// Pointwise sum of two tables of the same order.
pub fn merge_tables(a: &NgramTable, b: &NgramTable) -> Result<NgramTable, LmError> {
    if a.max_order != b.max_order {
        return Err(LmError::OrderMismatch(a.max_order, b.max_order));
    }
    let (big, small) = if a.counts.len() >= b.counts.len() { (a, b) } else { (b, a) };
    let mut out = big.clone();
    for (k, &v) in &small.counts {
        *out.counts.entry(k.clone()).or_insert(0) += v;
    }
    out.total_tokens = a.total_tokens + b.total_tokens;
    out.recompute_vocab();
    Ok(out)
}

/// Merge many tables; an empty list yields an empty table of `max_order`.
pub fn merge_all<'a, I>(tables: I, max_order: usize) -> Result<NgramTable, LmError>
where
    I: IntoIterator<Item = &'a NgramTable>,
{
    let mut out = NgramTable::new(max_order);
    for t in tables {
        if t.max_order != max_order {
            return Err(LmError::OrderMismatch(max_order, t.max_order));
        }
        for (k, &v) in &t.counts {
            if v > 0 {
                *out.counts.entry(k.clone()).or_insert(0) += v;
            }
        }
        out.total_tokens += t.total_tokens;
    }
    out.recompute_vocab();
    Ok(out)
}

impl FromIterator<(Vec<Sym>, u64)> for NgramTable {
    /// Build a table from explicit counts; `max_order` is the longest key.
    fn from_iter<T: IntoIterator<Item = (Vec<Sym>, u64)>>(iter: T) -> Self {
        let mut table = NgramTable::new(1);
        for (k, v) in iter {
            table.max_order = table.max_order.max(k.len());
            table.insert(k, v);
        }
        table.recompute_vocab();
        table
    }
}

/// Backoff probability of `token` after `prefix`. Only the last
/// `max_order - 1` prefix tokens are consulted. Never returns 0; clamped to 1
/// when a weight above 1 would push it higher.
pub fn ngram_prob(table: &NgramTable, prefix: &[Sym], token: &Sym, config: &CacheConfig) -> f64 {
    let keep = prefix.len().min(table.max_order - 1);
    let mut history = &prefix[prefix.len() - keep..];
    let mut penalty = 1.0;
    let mut key: Vec<Sym> = Vec::with_capacity(keep + 1);
    loop {
        if history.is_empty() {
            let c = table.count(std::slice::from_ref(token));
            let p = if c > 0 {
                c as f64 / table.total_tokens as f64
            } else {
                1.0 / (table.vocab_size as f64 + 1.0)
            };
            return (penalty * p).min(1.0);
        }
        key.clear();
        key.extend_from_slice(history);
        key.push(token.clone());
        let joint = table.count(&key);
        if joint > 0 {
            let ctx = table.count(history);
            return (penalty * joint as f64 / ctx as f64).min(1.0);
        }
        history = &history[1..];
        penalty *= config.backoff_weight;
    }
}

/// Per-file n-gram store for the local (cache) component.
#[derive(Debug, Clone, PartialEq)]
pub struct Cache {
    config: CacheConfig,
    entries: HashMap<Vec<Sym>, u64>,
    total: u64,
}

/// Outcome of matching a prefix against the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheHit {
    /// Occurrences of the matched prefix (`H`).
    pub context: u64,
    /// Occurrences of the matched prefix followed by the token.
    pub joint: u64,
}

impl CacheHit {
    pub fn p_cache(&self) -> f64 {
        if self.context == 0 {
            0.0
        } else {
            self.joint as f64 / self.context as f64
        }
    }
}

impl Cache {
    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, ngram: &[Sym]) -> u64 {
        if ngram.is_empty() {
            return self.total;
        }
        self.entries.get(ngram).copied().unwrap_or(0)
    }

    /// Entries as an ordered map, for inspection.
    pub fn entries(&self) -> BTreeMap<Vec<Sym>, u64> {
        self.entries.iter().map(|(k, &v)| (k.clone(), v)).collect()
    }

    /// A cache holding exactly the given counts.
    pub fn with_entries<I>(config: CacheConfig, entries: I) -> Self
    where
        I: IntoIterator<Item = (Vec<Sym>, u64)>,
    {
        let mut cache = Cache {
            config,
            entries: HashMap::new(),
            total: 0,
        };
        for (k, v) in entries {
            if k.len() == 1 {
                cache.total += v;
            }
            *cache.entries.entry(k).or_insert(0) += v;
        }
        cache
    }

    /// Longest usable prefix match. Prefix lengths run from
    /// `max_cache_order - 1` down to `min_backoff_order - 1`; the first length
    /// whose prefix occurs in the cache wins. With `exclude_self` one
    /// occurrence of both the prefix and the prefix+token is discounted, which
    /// removes the token being scored from its own cache.
    pub fn lookup(&self, prefix: &[Sym], token: &Sym, exclude_self: bool) -> CacheHit {
        let longest = prefix.len().min(self.config.max_cache_order - 1);
        let shortest = self.config.min_backoff_order - 1;
        if shortest > longest {
            return CacheHit::default();
        }
        let discount = u64::from(exclude_self);
        let mut key: Vec<Sym> = Vec::with_capacity(longest + 1);
        for len in (shortest..=longest).rev() {
            let history = &prefix[prefix.len() - len..];
            let context = self.count(history).saturating_sub(discount);
            if context == 0 {
                continue;
            }
            key.clear();
            key.extend_from_slice(history);
            key.push(token.clone());
            let joint = self.count(&key).saturating_sub(discount);
            return CacheHit { context, joint };
        }
        CacheHit::default()
    }
}

/// Cache of every n-gram (orders `1..=max_cache_order`) of `tokens`.
pub fn build_cache(tokens: &[Sym], config: CacheConfig) -> Cache {
    let mut entries = HashMap::new();
    let mut vocab = 0;
    add_ngrams(&mut entries, tokens, config.max_cache_order, &mut vocab);
    Cache {
        config,
        entries,
        total: tokens.len() as u64,
    }
}

/// `gamma/(gamma+H) * p_ngram + H/(gamma+H) * p_cache`; exactly `p_ngram`
/// when `H = 0`.
pub fn interpolate(gamma: f64, p_ngram: f64, hit: CacheHit) -> f64 {
    if hit.context == 0 {
        return p_ngram;
    }
    let h = hit.context as f64;
    gamma / (gamma + h) * p_ngram + h / (gamma + h) * hit.p_cache()
}

/// Cache-interpolated probability of `token` after `prefix`.
pub fn cached_prob(table: &NgramTable, cache: &Cache, prefix: &[Sym], token: &Sym) -> f64 {
    let p = ngram_prob(table, prefix, token, &cache.config);
    interpolate(cache.config.gamma, p, cache.lookup(prefix, token, false))
}

/// [`cached_prob`] with the scored occurrence removed from the cache.
pub fn cached_prob_excluding_self(
    table: &NgramTable,
    cache: &Cache,
    prefix: &[Sym],
    token: &Sym,
) -> f64 {
    let p = ngram_prob(table, prefix, token, &cache.config);
    interpolate(cache.config.gamma, p, cache.lookup(prefix, token, true))
}
