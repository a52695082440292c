use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use natbug_core::evaluator::{
    self, aucec, aucecl, filter_bugs_by_size, lift_curve, mix_order_by, rank_by_score, sbf_monte_carlo,
    simulate_sbf_order, warned_lines, BugMap, LineId, Warning,
};
use natbug_core::miner::{self, LineLabel, LineRecord};
use natbug_core::normalizer::{normalize, train_bug_weights, BugWeightTable};
use natbug_core::scorer::{partition_bins, score_snapshot, sweep_cache_params, LabeledSnapshot};
use natbug_core::{tokenize_file, LanguageProfile, TokenizedFile};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{RankBy, RunConfig, ScoreMode};
use crate::formats::{self, ScoreRecord};
use crate::{EvalArgs, Format, MineArgs, ScoreArgs, SweepArgs};

pub fn mine(cfg: &RunConfig, args: &MineArgs) -> Result<()> {
    let history = miner::load_history(&args.history)?;
    let records = miner::mine_history(&history, cfg.max_delete)?;
    let mut out = formats::jsonl_header("mine", cfg);
    for r in &records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    formats::write_out(args.out.as_deref(), &out)
}

fn load_profile(cfg: &RunConfig) -> Result<LanguageProfile> {
    match &cfg.profile {
        Some(p) => Ok(LanguageProfile::load(p)?),
        None => Ok(LanguageProfile::java()),
    }
}

/// Tokenize every profile-accepted file under `dir`, sorted by path.
fn load_snapshot(dir: &Path, profile: &LanguageProfile) -> Result<Vec<TokenizedFile>> {
    if !dir.is_dir() {
        bail!("snapshot directory {} does not exist", dir.display());
    }
    let texts = miner::read_tree(dir, |p| profile.accepts(p))?;
    let texts: Vec<(String, String)> = texts.into_iter().collect();
    let files: Vec<TokenizedFile> = texts
        .par_iter()
        .map(|(p, t)| tokenize_file(p, t, profile))
        .collect();
    for f in &files {
        for d in &f.diagnostics {
            eprintln!("warning: {d}");
        }
    }
    Ok(files)
}

fn snapshot_dir(history: &Path, label: &str) -> std::path::PathBuf {
    history.join("snapshots").join(label)
}

/// Bug weights from labeled lines: buggy and unchanged lines of the snapshots
/// the linesets name, typed by the profile's classifier.
fn train_weights(history: &Path, linesets: &Path, profile: &LanguageProfile) -> Result<BugWeightTable> {
    let records = formats::read_linesets(linesets)?;
    let mut by_snapshot: BTreeMap<&str, BTreeMap<(&str, u32), bool>> = BTreeMap::new();
    for r in &records {
        let buggy = match r.label {
            LineLabel::Buggy => true,
            LineLabel::Unchanged => false,
            LineLabel::Fixed => continue,
        };
        let slot = by_snapshot.entry(&r.snapshot).or_default().entry((&r.path, r.line)).or_insert(false);
        *slot |= buggy;
    }
    let mut history_rows = Vec::new();
    for (label, lines) in &by_snapshot {
        let files = load_snapshot(&snapshot_dir(history, label), profile)?;
        let by_path: BTreeMap<&str, &TokenizedFile> = files.iter().map(|f| (f.path.as_str(), f)).collect();
        for ((path, line), buggy) in lines {
            if let Some(ty) = by_path.get(path).and_then(|f| f.line_types.get(line)) {
                history_rows.push((*ty, *buggy));
            }
        }
    }
    let source = by_snapshot.keys().copied().collect::<Vec<_>>().join(",");
    Ok(train_bug_weights(history_rows, source)?)
}

pub fn score(cfg: &RunConfig, args: &ScoreArgs) -> Result<()> {
    let profile = load_profile(cfg)?;
    let files = load_snapshot(&args.snapshot, &profile)?;
    let paths: Vec<&str> = files.iter().map(|f| f.path.as_str()).collect();
    let bins = partition_bins(&paths, cfg.bin_count)?;
    let mut scores = score_snapshot(&files, &cfg.scoring(), &bins)?;

    let weights = match (&args.weights, &args.train_history, &args.train_linesets) {
        (Some(w), _, _) => {
            let text = fs::read_to_string(w).with_context(|| format!("reading {}", w.display()))?;
            Some(BugWeightTable::from_text(&text)?)
        }
        (None, Some(h), Some(l)) => Some(train_weights(h, l, &profile)?),
        _ => None,
    };
    if let (Some(w), Some(out)) = (&weights, &args.weights_out) {
        fs::write(out, w.to_text()).with_context(|| format!("writing {}", out.display()))?;
    }
    if cfg.mode == ScoreMode::Wtype && weights.is_none() {
        bail!("mode wtype needs --weights or --train-history with --train-linesets");
    }
    normalize(&mut scores, weights.as_ref());

    let rows: Vec<ScoreRecord> = scores
        .iter()
        .map(|s| ScoreRecord {
            path: s.path.clone(),
            line: s.line,
            line_type: s.line_type,
            token_count: s.token_count,
            entropy: s.entropy,
            z: (cfg.mode != ScoreMode::Raw).then_some(s.z),
            weighted: (cfg.mode == ScoreMode::Wtype).then_some(s.weighted),
            score: match cfg.mode {
                ScoreMode::Raw => s.entropy,
                ScoreMode::Type => s.z,
                ScoreMode::Wtype => s.weighted,
            },
        })
        .collect();
    let out = match args.format {
        Format::Jsonl => formats::scores_jsonl(&formats::jsonl_header("score", cfg), &rows),
        Format::Tsv => formats::scores_tsv(&formats::tsv_header("score", cfg), &rows),
    };
    formats::write_out(args.out.as_deref(), &out)
}

fn rank_value(r: &ScoreRecord, by: RankBy) -> Result<f64> {
    let v = match by {
        RankBy::Score => Some(r.score),
        RankBy::Entropy => Some(r.entropy),
        RankBy::Z => r.z,
        RankBy::Weighted => r.weighted,
    };
    v.with_context(|| format!("scores lack the {by:?} column (line {}:{})", r.path, r.line))
}

/// Records of the one snapshot to evaluate.
fn pick_snapshot<'a>(records: &'a [LineRecord], label: Option<&str>) -> Result<Vec<&'a LineRecord>> {
    let labels: BTreeSet<&str> = records.iter().map(|r| r.snapshot.as_str()).collect();
    let chosen = match label {
        Some(l) => {
            if !labels.contains(l) && !labels.is_empty() {
                bail!("snapshot {l} not in linesets (have: {})", labels.into_iter().collect::<Vec<_>>().join(", "));
            }
            l
        }
        None if labels.len() > 1 => bail!(
            "linesets cover several snapshots ({}); pick one with --snapshot-label",
            labels.into_iter().collect::<Vec<_>>().join(", ")
        ),
        None => labels.into_iter().next().unwrap_or(""),
    };
    Ok(records.iter().filter(|r| r.snapshot == chosen).collect())
}

fn aucec_pair(order: &[LineId], bugs: &BugMap, cfg: &RunConfig) -> Result<(f64, f64, evaluator::EvalCurve)> {
    let curve = lift_curve(order, bugs, cfg.credit)?;
    Ok((aucec(&curve, 0.05)?, aucec(&curve, cfg.budget)?, curve))
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> Result<()> {
    let seed = cfg.require_seed()?;
    let scores = formats::read_scores(&args.scores)?;
    if scores.is_empty() {
        bail!("no scored lines in {}", args.scores.display());
    }
    let mut values: BTreeMap<LineId, f64> = BTreeMap::new();
    let mut entropy: BTreeMap<LineId, f64> = BTreeMap::new();
    for r in &scores {
        let id = (r.path.clone(), r.line);
        if values.insert(id.clone(), rank_value(r, cfg.rank_by)?).is_some() {
            bail!("line {}:{} scored twice", r.path, r.line);
        }
        entropy.insert(id, r.entropy);
    }
    let population: Vec<LineId> = values.keys().cloned().collect();

    let linesets = formats::read_linesets(&args.linesets)?;
    let mut all_bugs: BugMap = BTreeMap::new();
    for r in pick_snapshot(&linesets, args.snapshot_label.as_deref())? {
        if r.label == LineLabel::Buggy {
            let id = r.bug_id.clone().unwrap_or_default();
            all_bugs.entry(id).or_default().insert((r.path.clone(), r.line));
        }
    }
    let sized = filter_bugs_by_size(&all_bugs, cfg.max_bug_lines);
    // Comment and blank lines carry no score; they cannot be ranked.
    let bugs: BugMap = sized
        .iter()
        .map(|(id, lines)| (id.clone(), lines.iter().filter(|l| values.contains_key(*l)).cloned().collect()))
        .filter(|(_, lines): &(String, BTreeSet<LineId>)| !lines.is_empty())
        .collect();

    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let tsv_head = formats::tsv_header("eval", cfg);
    let write_curve = |name: &str, curve: &evaluator::EvalCurve| -> Result<()> {
        formats::write_out(Some(&args.out_dir.join(name)), &formats::curve_tsv(&tsv_head, curve))
    };

    let nbf_order = rank_by_score(&values);
    let (nbf5, nbf_b, nbf_curve) = aucec_pair(&nbf_order, &bugs, cfg)?;
    write_curve("curve_nbf.tsv", &nbf_curve)?;
    let mut aucec5 = json!({ "nbf": nbf5 });
    let mut at_budget = json!({ "nbf": nbf_b });
    let mut aucecl_v = Value::Null;

    if let Some(wpath) = &args.warnings {
        let raw = formats::read_warnings(wpath)?;
        // Expanded warned lines, clipped to the scored population.
        let clipped: Vec<Warning> = warned_lines(&raw)
            .into_iter()
            .filter(|(id, _)| values.contains_key(id))
            .map(|((path, line), priority)| Warning {
                tool: "merged".into(),
                path,
                start_line: line,
                end_line: line,
                priority,
            })
            .collect();
        let mc5 = sbf_monte_carlo(&clipped, &population, &bugs, cfg.credit, 0.05, cfg.runs, seed)?;
        let mcb = sbf_monte_carlo(&clipped, &population, &bugs, cfg.credit, cfg.budget, cfg.runs, seed)?;
        let sbf_curve = lift_curve(&simulate_sbf_order(&clipped, &population, seed), &bugs, cfg.credit)?;
        write_curve("curve_sbf.tsv", &sbf_curve)?;
        let mix = mix_order_by(&clipped, &values)?;
        let (mix5, mix_b, mix_curve) = aucec_pair(&mix, &bugs, cfg)?;
        write_curve("curve_mix.tsv", &mix_curve)?;
        aucec5 = json!({ "nbf": nbf5, "sbf_mean": mc5.mean, "sbf_sd": mc5.sd, "mix": mix5 });
        at_budget = json!({ "nbf": nbf_b, "sbf_mean": mcb.mean, "sbf_sd": mcb.sd, "mix": mix_b });

        if !clipped.is_empty() {
            let budget = (clipped.len() as f64 / population.len() as f64).min(1.0);
            let mcl = sbf_monte_carlo(&clipped, &population, &bugs, cfg.credit, budget, cfg.runs, seed)?;
            let (_, nbf_l) = aucecl(&population, &nbf_order, clipped.len(), &bugs, cfg.credit)?;
            let (_, mix_l) = aucecl(&population, &mix, clipped.len(), &bugs, cfg.credit)?;
            aucecl_v = json!({
                "warned_lines": clipped.len(),
                "budget": budget,
                "sbf_mean": mcl.mean,
                "sbf_sd": mcl.sd,
                "nbf": nbf_l,
                "mix": mix_l,
            });
        }
    }

    let bug_lines: BTreeSet<&LineId> = bugs.values().flatten().collect();
    let (mut buggy_e, mut other_e) = (Vec::new(), Vec::new());
    for (id, e) in &entropy {
        if bug_lines.contains(id) {
            buggy_e.push(*e);
        } else {
            other_e.push(*e);
        }
    }
    let comparison = match evaluator::compare_entropy_distributions(&buggy_e, &other_e, cfg.bootstrap, seed) {
        Ok(c) => serde_json::to_value(c)?,
        Err(e) => json!({ "error": e.to_string() }),
    };

    let mut summary = json!({
        "header": formats::header("eval", cfg),
        "population_lines": population.len(),
        "bugs": bugs.len(),
        "bugs_dropped_by_size": all_bugs.len() - sized.len(),
        "credit": cfg.credit,
        "thresholds": { "budget": cfg.budget, "max_bug_lines": cfg.max_bug_lines },
        "seed": seed,
        "rank_by": cfg.rank_by,
        "aucec5": aucec5,
        "aucec_at_budget": at_budget,
        "aucecl": aucecl_v,
        "entropy_comparison": comparison,
    });
    if bugs.is_empty() {
        summary["warning"] = json!("no bugs among the scored lines; all scores are zero");
    }
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    formats::write_out(Some(&args.out_dir.join("summary.json")), &text)
}

pub fn sweep(cfg: &RunConfig, args: &SweepArgs) -> Result<()> {
    let Some(linesets) = &args.linesets else {
        bail!("sweep needs buggy-line labels: pass --linesets");
    };
    let profile = load_profile(cfg)?;
    let records = formats::read_linesets(linesets)?;
    let mut buggy: BTreeMap<&str, BTreeSet<(String, u32)>> = BTreeMap::new();
    for r in &records {
        if r.label == LineLabel::Buggy {
            buggy.entry(&r.snapshot).or_default().insert((r.path.clone(), r.line));
        }
    }
    if buggy.is_empty() {
        bail!("no buggy lines in {}", linesets.display());
    }
    let corpus = buggy
        .into_iter()
        .map(|(label, lines)| {
            Ok(LabeledSnapshot {
                files: load_snapshot(&snapshot_dir(&args.history, label), &profile)?,
                buggy: lines,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = sweep_cache_params(&corpus, &cfg.sweep_orders, &cfg.sweep_weights, &cfg.scoring(), cfg.bin_count)?;
    let mut out = formats::tsv_header("sweep", cfg);
    out.push_str("min_backoff_order\tbackoff_weight\tgap\tbuggy_lines\tother_lines\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.min_backoff_order, r.backoff_weight, r.gap, r.buggy_lines, r.other_lines
        );
    }
    formats::write_out(args.out.as_deref(), &out)
}
