//! Reading and writing the on-disk formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use natbug_core::evaluator::{EvalCurve, Warning};
use natbug_core::miner::LineRecord;
use natbug_core::LineType;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;

pub fn header(command: &str, cfg: &RunConfig) -> Value {
    json!({ "tool": "natbug", "command": command, "config": cfg.echo() })
}

/// `{"header": ...}` as the first JSONL record.
pub fn jsonl_header(command: &str, cfg: &RunConfig) -> String {
    let mut s = serde_json::to_string(&json!({ "header": header(command, cfg) })).expect("json");
    s.push('\n');
    s
}

/// `# {...}` comment line for TSV outputs.
pub fn tsv_header(command: &str, cfg: &RunConfig) -> String {
    format!("# {}\n", serde_json::to_string(&header(command, cfg)).expect("json"))
}

pub fn write_out(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            std::io::stdout().lock().write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Data lines of a JSONL file with the header record skipped, with 1-based
/// line numbers.
fn jsonl_records(path: &Path) -> Result<Vec<(usize, Value)>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: invalid JSON", path.display(), i + 1))?;
        if v.get("header").is_some() {
            continue;
        }
        out.push((i + 1, v));
    }
    Ok(out)
}

fn typed<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    jsonl_records(path)?
        .into_iter()
        .map(|(n, v)| serde_json::from_value(v).with_context(|| format!("{}:{n}: bad record", path.display())))
        .collect()
}

pub fn read_linesets(path: &Path) -> Result<Vec<LineRecord>> {
    typed(path)
}

pub fn read_warnings(path: &Path) -> Result<Vec<Warning>> {
    let ws: Vec<(usize, Warning)> = jsonl_records(path)?
        .into_iter()
        .map(|(n, v)| {
            let w: Warning = serde_json::from_value(v).with_context(|| format!("{}:{n}: bad warning", path.display()))?;
            w.validate().with_context(|| format!("{}:{n}", path.display()))?;
            Ok((n, w))
        })
        .collect::<Result<_>>()?;
    Ok(ws.into_iter().map(|(_, w)| w).collect())
}

/// One output line of `score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub path: String,
    pub line: u32,
    pub line_type: LineType,
    pub token_count: u32,
    pub entropy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighted: Option<f64>,
    /// The value selected by the scoring mode.
    pub score: f64,
}

pub fn scores_jsonl(head: &str, rows: &[ScoreRecord]) -> String {
    let mut out = head.to_string();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("json"));
        out.push('\n');
    }
    out
}

pub fn scores_tsv(head: &str, rows: &[ScoreRecord]) -> String {
    let with_z = rows.iter().any(|r| r.z.is_some());
    let with_w = rows.iter().any(|r| r.weighted.is_some());
    let mut out = head.to_string();
    out.push_str("path\tline\tline_type\ttoken_count\tentropy");
    if with_z {
        out.push_str("\tz");
    }
    if with_w {
        out.push_str("\tweighted");
    }
    out.push_str("\tscore\n");
    for r in rows {
        let _ = write!(out, "{}\t{}\t{}\t{}\t{}", r.path, r.line, r.line_type, r.token_count, r.entropy);
        if let Some(z) = r.z.filter(|_| with_z) {
            let _ = write!(out, "\t{z}");
        }
        if let Some(w) = r.weighted.filter(|_| with_w) {
            let _ = write!(out, "\t{w}");
        }
        let _ = writeln!(out, "\t{}", r.score);
    }
    out
}

fn parse_scores_tsv(path: &Path, text: &str) -> Result<Vec<ScoreRecord>> {
    let mut cols: Option<Vec<&str>> = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let Some(names) = &cols else {
            cols = Some(fields);
            continue;
        };
        let at = |i: usize| format!("{}:{}", path.display(), i + 1);
        if fields.len() != names.len() {
            bail!("{}: expected {} columns, got {}", at(i), names.len(), fields.len());
        }
        let row: BTreeMap<&str, &str> = names.iter().copied().zip(fields).collect();
        let get = |k: &str| row.get(k).copied().ok_or_else(|| anyhow!("{}: missing column {k}", at(i)));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().with_context(|| format!("{}: bad {k}", at(i))) };
        out.push(ScoreRecord {
            path: get("path")?.to_string(),
            line: get("line")?.parse().with_context(|| format!("{}: bad line", at(i)))?,
            line_type: get("line_type")?.parse().map_err(|e: String| anyhow!("{}: {e}", at(i)))?,
            token_count: get("token_count")?.parse().with_context(|| format!("{}: bad token_count", at(i)))?,
            entropy: num("entropy")?,
            z: row.contains_key("z").then(|| num("z")).transpose()?,
            weighted: row.contains_key("weighted").then(|| num("weighted")).transpose()?,
            score: num("score")?,
        });
    }
    Ok(out)
}

/// Scores in either output format, detected from the first character.
pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = read(path)?;
    if text.trim_start().starts_with('{') {
        typed(path)
    } else {
        parse_scores_tsv(path, &text)
    }
}

pub fn curve_tsv(head: &str, curve: &EvalCurve) -> String {
    let mut out = head.to_string();
    out.push_str("x\ty\n");
    for (x, y) in &curve.points {
        let _ = writeln!(out, "{x}\t{y}");
    }
    out
}
