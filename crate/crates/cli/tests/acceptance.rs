//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use natbug_core::evaluator::{
    aucec, compare_entropy_distributions, lift_curve, mix_order_by, sbf_monte_carlo, BugMap, CreditMode, LineId,
    Warning,
};
use natbug_core::lm::{build_cache, cached_prob, count_sequences, ngram_prob, Cache, CacheConfig, Sym, BOS};
use natbug_core::normalizer::{normalize, train_bug_weights};
use natbug_core::scorer::{partition_bins, score_snapshot, LineScore, ScoringConfig};
use natbug_core::{tokenize_file, LanguageProfile, LineType, TokenizedFile};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn line_ids(n: u32) -> Vec<LineId> {
    (1..=n).map(|i| ("P.java".to_string(), i)).collect()
}

// 1 -------------------------------------------------------------------------

fn random_baseline() -> Outcome {
    let start = Instant::now();
    let population = line_ids(10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut bugs = BugMap::new();
    for b in 0..200 {
        let line = rng.random_range(1..=10_000u32);
        bugs.insert(format!("b{b}"), [("P.java".to_string(), line)].into());
    }
    let mc = sbf_monte_carlo(&[], &population, &bugs, CreditMode::Full, 0.05, 100, 5).expect("simulation");
    let secs = start.elapsed().as_secs_f64();
    let pass = (mc.mean - 0.00125).abs() <= 0.0005 && secs < 10.0;
    outcome(pass, format!("mean aucec5 {:.6} (target 0.00125 +/- 0.0005), {secs:.2}s (< 10s)", mc.mean))
}

// 2 -------------------------------------------------------------------------

fn windows(seqs: &[Vec<&str>], gram: &[&str]) -> u64 {
    seqs.iter()
        .map(|s| match gram.len() {
            0 => s.len() as u64,
            n => s.windows(n).filter(|w| *w == gram).count() as u64,
        })
        .sum()
}

/// Count-ratio backoff recomputed from raw windows for every query.
fn oracle_ngram(train: &[Vec<&str>], order: usize, prefix: &[&str], token: &str, weight: f64) -> f64 {
    let seqs: Vec<Vec<&str>> = train
        .iter()
        .map(|s| std::iter::once(BOS).chain(s.iter().copied()).collect())
        .collect();
    let vocab: BTreeSet<&str> = seqs.iter().flatten().copied().collect();
    let mut h: Vec<&str> = prefix[prefix.len() - prefix.len().min(order - 1)..].to_vec();
    let mut scale = 1.0;
    loop {
        let mut g = h.clone();
        g.push(token);
        let joint = windows(&seqs, &g);
        if h.is_empty() {
            let p = if joint > 0 {
                joint as f64 / windows(&seqs, &[]) as f64
            } else {
                1.0 / (vocab.len() as f64 + 1.0)
            };
            return (scale * p).min(1.0);
        }
        if joint > 0 {
            return (scale * joint as f64 / windows(&seqs, &h) as f64).min(1.0);
        }
        h.remove(0);
        scale *= weight;
    }
}

fn oracle_cached(png: f64, local: &[&str], prefix: &[&str], token: &str, cfg: &CacheConfig) -> f64 {
    let local = [local.to_vec()];
    let longest = prefix.len().min(cfg.max_cache_order - 1);
    for len in (cfg.min_backoff_order - 1..=longest).rev() {
        let h = &prefix[prefix.len() - len..];
        let ctx = windows(&local, h);
        if ctx > 0 {
            let mut g = h.to_vec();
            g.push(token);
            let hh = ctx as f64;
            let pc = windows(&local, &g) as f64 / hh;
            return cfg.gamma / (cfg.gamma + hh) * png + hh / (cfg.gamma + hh) * pc;
        }
    }
    png
}

fn lm_oracle() -> Outcome {
    let start = Instant::now();
    let text = [
        "public int size ( ) { return count ; }",
        "for ( int i = 0 ; i < count ; i ++ ) { total += items [ i ] ; }",
        "if ( items == null ) { return 0 ; } return items . length ;",
        "int j = count ; while ( j > 0 ) { j -- ; total += j ; }",
        "total = total + count ; return total ;",
    ];
    let train: Vec<Vec<&str>> = text.iter().map(|l| l.split_whitespace().collect()).collect();
    let n_tokens: usize = train.iter().map(Vec::len).sum();
    let mut vocab: Vec<&str> = train.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    vocab.push("never_seen");
    let as_syms = |v: &[&str]| v.iter().map(|s| Sym::from(*s)).collect::<Vec<Sym>>();

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for q in 0..1000 {
        let order = [2usize, 3, 4][q % 3];
        let table = count_sequences(train.iter().map(|s| as_syms(s)).collect::<Vec<_>>().iter().map(Vec::as_slice), order);
        let max_cache_order = rng.random_range(2..=6);
        let cfg = CacheConfig {
            max_cache_order,
            min_backoff_order: rng.random_range(1..=max_cache_order),
            backoff_weight: [1.0, 0.5, 0.8][rng.random_range(0..3)],
            gamma: [0.5, 1.0, 2.0][rng.random_range(0..3)],
        };
        let src = &train[rng.random_range(0..train.len())];
        let len = rng.random_range(0..=src.len().min(5));
        let at = rng.random_range(0..=src.len() - len);
        let mut prefix = src[at..at + len].to_vec();
        if !prefix.is_empty() && rng.random_bool(0.25) {
            let k = rng.random_range(0..prefix.len());
            prefix[k] = vocab[rng.random_range(0..vocab.len())];
        }
        let token = vocab[rng.random_range(0..vocab.len())];
        let local = &train[rng.random_range(0..train.len())];

        let png = ngram_prob(&table, &as_syms(&prefix), &Sym::from(token), &cfg);
        let want_ng = oracle_ngram(&train, order, &prefix, token, cfg.backoff_weight);
        let cache = build_cache(&as_syms(local), cfg);
        let pc = cached_prob(&table, &cache, &as_syms(&prefix), &Sym::from(token));
        let want_c = oracle_cached(want_ng, local, &prefix, token, &cfg);
        worst = worst.max((png - want_ng).abs()).max((pc - want_c).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-9 && secs < 5.0 && n_tokens <= 200;
    outcome(pass, format!("{n_tokens} tokens, 1000 queries, max |diff| {worst:.2e} (< 1e-9), {secs:.2}s (< 5s)"))
}

// 3 -------------------------------------------------------------------------

fn interpolation_limits() -> Outcome {
    let s = |t: &str| Sym::from(t);
    let train = [vec![s("a"), s("b"), s("a"), s("c")]];
    let table = count_sequences(train.iter().map(Vec::as_slice), 3);
    let cfg = CacheConfig {
        max_cache_order: 3,
        min_backoff_order: 2,
        ..CacheConfig::default()
    };
    let prefix = vec![s("x"), s("a")];
    let token = s("b");
    let png = ngram_prob(&table, &prefix, &token, &cfg);

    let empty = Cache::with_entries(cfg, Vec::<(Vec<Sym>, u64)>::new());
    let unrelated = build_cache(&[s("q"), s("r")], cfg);
    let zero_h = cached_prob(&table, &empty, &prefix, &token) == png
        && cached_prob(&table, &unrelated, &prefix, &token) == png;

    // P_cache fixed at 1/4; H doubles each step.
    let p_cache = 0.25;
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    let mut last = 0.0;
    for k in 2..=24 {
        let h: u64 = 1 << k;
        let cache = Cache::with_entries(
            cfg,
            vec![(vec![s("a")], h), (vec![s("a"), s("b")], h / 4), (vec![s("x"), s("a")], 0)],
        );
        let d = (cached_prob(&table, &cache, &prefix, &token) - p_cache).abs();
        monotone &= d < prev;
        prev = d;
        last = d;
    }
    let pass = zero_h && monotone && last < 1e-6;
    outcome(
        pass,
        format!("H=0 exact: {zero_h}; |P - P_cache| strictly decreasing: {monotone}; at H=2^24: {last:.2e} (< 1e-6)"),
    )
}

// 4 and 5 -------------------------------------------------------------------

const TEMPLATE: [&str; 5] = [
    "int count = list.size();",
    "for (int i = 0; i < count; i++) {",
    "total += list.get(i);",
    "}",
    "return total;",
];

/// 20 files of 25 repetitive lines, with 25 injected lines spread over them.
/// Returns the files and the injected `(path, line)` ids.
fn injected_corpus(replacement: Option<&str>) -> (Vec<TokenizedFile>, BTreeSet<LineId>) {
    let profile = LanguageProfile::java();
    let mut files = Vec::new();
    let mut injected = BTreeSet::new();
    let mut k = 0;
    for f in 0..20 {
        let path = format!("src/R{f:02}.java");
        let mut lines: Vec<String> = (0..25).map(|i| TEMPLATE[i % TEMPLATE.len()].to_string()).collect();
        let slots: &[usize] = if f < 5 { &[7, 18] } else { &[12] };
        for (j, &at) in slots.iter().enumerate() {
            let line = match replacement {
                Some(r) => r.to_string(),
                None => format!("qz{k}x vr{k}b = wm{k}k(jt{k}p, hl{k}q{j});"),
            };
            lines.insert(at, line);
            injected.insert((path.clone(), at as u32 + 1));
            k += 1;
        }
        let src = lines.join("\n") + "\n";
        files.push(tokenize_file(&path, &src, &profile));
    }
    assert_eq!(k, 25);
    (files, injected)
}

fn score(files: &[TokenizedFile]) -> Vec<LineScore> {
    let paths: Vec<&str> = files.iter().map(|f| f.path.as_str()).collect();
    let bins = partition_bins(&paths, 10).expect("bins");
    score_snapshot(files, &ScoringConfig::default(), &bins).expect("scores")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn injected_gap() -> Outcome {
    let (files, injected) = injected_corpus(None);
    let scores = score(&files);
    let (mut bug, mut rest) = (Vec::new(), Vec::new());
    for s in &scores {
        if injected.contains(&(s.path.clone(), s.line)) {
            bug.push(s.entropy);
        } else {
            rest.push(s.entropy);
        }
    }
    let gap = mean(&bug) - mean(&rest);
    let cmp = compare_entropy_distributions(&bug, &rest, 1000, 9);
    let d = cmp.as_ref().map(|c| c.cohens_d).unwrap_or(f64::NAN);
    let pass = bug.len() == 25 && rest.len() == 500 && gap >= 1.0 && d > 0.5;
    outcome(
        pass,
        format!("{} injected vs {} other lines: gap {gap:.3} bits (>= 1.0), Cohen's d {d:.3} (> 0.5)", bug.len(), rest.len()),
    )
}

fn replacement_drop() -> Outcome {
    let (files, injected) = injected_corpus(None);
    let before: BTreeMap<LineId, f64> = score(&files)
        .into_iter()
        .map(|s| ((s.path, s.line), s.entropy))
        .filter(|(id, _)| injected.contains(id))
        .collect();
    let (files, same) = injected_corpus(Some(TEMPLATE[2]));
    assert_eq!(same, injected);
    let after: BTreeMap<LineId, f64> = score(&files)
        .into_iter()
        .map(|s| ((s.path, s.line), s.entropy))
        .filter(|(id, _)| injected.contains(id))
        .collect();
    let drops: Vec<f64> = injected.iter().map(|id| before[id] - after[id]).collect();
    let drop = mean(&drops);
    outcome(drop >= 1.0, format!("mean entropy drop {drop:.3} bits over {} lines (>= 1.0)", drops.len()))
}

// 6 -------------------------------------------------------------------------

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn natbug(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_natbug"))
        .args(args)
        .env_remove("NATBUG_CONFIG")
        .output()
        .expect("run natbug")
}

fn mining_golden() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().join("linesets.jsonl");
    let hist = fixtures().join("history");
    let run = natbug(&["mine", "--history", hist.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    if !run.status.success() {
        return outcome(false, format!("mine failed: {}", String::from_utf8_lossy(&run.stderr)));
    }
    let got = std::fs::read(&out).unwrap();
    let want = std::fs::read(fixtures().join("linesets.golden.jsonl")).unwrap();
    let text = String::from_utf8_lossy(&got);
    let big_untouched = text.lines().filter(|l| l.contains("\"src/Big.java\"") && l.contains("2014-01-01")).count() == 40
        && !text.contains("\"c3\"");
    outcome(
        got == want && big_untouched,
        format!("byte-identical to golden: {}; 31-line commit contributes nothing: {big_untouched}", got == want),
    )
}

// 7 -------------------------------------------------------------------------

fn credit_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for _ in 0..200 {
        let n = rng.random_range(20..400u32);
        let mut order = line_ids(n);
        order.shuffle(&mut rng);
        let mut bugs = BugMap::new();
        for b in 0..rng.random_range(1..12) {
            let size = rng.random_range(1..8);
            let lines: BTreeSet<LineId> = (0..size).map(|_| ("P.java".to_string(), rng.random_range(1..=n))).collect();
            bugs.insert(format!("b{b}"), lines);
        }
        let full = lift_curve(&order, &bugs, CreditMode::Full).unwrap();
        let part = lift_curve(&order, &bugs, CreditMode::Partial).unwrap();
        violations += full.points.iter().zip(&part.points).filter(|(f, p)| f.1 < p.1).count();
        for b in [0.01, 0.05, 0.2] {
            if aucec(&full, b).unwrap() < aucec(&part, b).unwrap() {
                violations += 1;
            }
        }
    }
    outcome(violations == 0, format!("200 fixtures, {violations} violations"))
}

// 8 -------------------------------------------------------------------------

/// Trapezoid area to 5 lines of 100 given the ranks (1-based) of two
/// single-line bugs, each worth half.
fn area_two_bugs(r1: usize, r2: usize) -> f64 {
    let y = |k: usize| 0.5 * (usize::from(r1 <= k) + usize::from(r2 <= k)) as f64;
    (1..=5).map(|k| 0.5 * (y(k - 1) + y(k)) * 0.01).sum()
}

fn mix_sanity() -> Outcome {
    let population = line_ids(100);
    // Lines 1-2 priority 2 (bug at 2), lines 3-5 priority 1 (bug at 5).
    let warnings = [
        Warning { tool: "findbugs".into(), path: "P.java".into(), start_line: 1, end_line: 2, priority: 2 },
        Warning { tool: "findbugs".into(), path: "P.java".into(), start_line: 3, end_line: 5, priority: 1 },
    ];
    let bugs: BugMap = [
        ("hi".to_string(), [("P.java".to_string(), 2)].into()),
        ("lo".to_string(), [("P.java".to_string(), 5)].into()),
    ]
    .into();
    // Entropy puts each bucket's buggy line on top.
    let scores: BTreeMap<LineId, f64> = population
        .iter()
        .map(|id| (id.clone(), if id.1 == 2 || id.1 == 5 { 9.0 } else { id.1 as f64 / 100.0 }))
        .collect();
    let mix = mix_order_by(&warnings, &scores).unwrap();
    let mix5 = aucec(&lift_curve(&mix, &bugs, CreditMode::Full).unwrap(), 0.05).unwrap();

    // Exact expectation over the 2! x 3! within-bucket orders.
    let mut total = 0.0;
    let mut count = 0;
    for r1 in 1..=2 {
        for r2 in 3..=5 {
            // Each bug position has 1 and 2 orders of the other bucket lines.
            total += 2.0 * area_two_bugs(r1, r2);
            count += 2;
        }
    }
    assert_eq!(count, 12);
    let exact_sbf = total / count as f64;
    let golden_improvement = 0.0075;

    let mc = sbf_monte_carlo(&warnings, &population, &bugs, CreditMode::Full, 0.05, 400, 21).unwrap();
    let se = mc.sd / (mc.values.len() as f64).sqrt();
    let improvement = mix5 - exact_sbf;
    let pass = (mix5 - 0.035).abs() < 1e-12
        && (improvement - golden_improvement).abs() < 1e-12
        && mix5 >= mc.mean
        && (mc.mean - exact_sbf).abs() <= 4.0 * se;
    outcome(
        pass,
        format!(
            "mix {mix5:.6}, exact SBF {exact_sbf:.6}, improvement {improvement:.6} (golden 0.0075), MC SBF {:.6} +/- {se:.6}",
            mc.mean
        ),
    )
}

// 9 -------------------------------------------------------------------------

fn normalizer_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let types = [LineType::IfStmt, LineType::CallStmt, LineType::Assignment, LineType::ReturnStmt];
    let (mut worst_mean, mut worst_sd, mut worst_w) = (0.0f64, 0.0f64, 0.0f64);
    let mut rank_breaks = 0;
    for _ in 0..100 {
        let mut scores: Vec<LineScore> = (0..rng.random_range(10..300u32))
            .map(|i| LineScore {
                path: "P.java".into(),
                line: i + 1,
                entropy: rng.random_range(0.0..12.0),
                token_count: 3,
                line_type: types[rng.random_range(0..types.len())],
                z: 0.0,
                weighted: 0.0,
            })
            .collect();
        let history: Vec<(LineType, bool)> = (0..500).map(|_| (types[rng.random_range(0..4)], rng.random_bool(0.1))).collect();
        let Ok(w) = train_bug_weights(history, "s") else { continue };
        worst_w = worst_w.max((w.rows.values().map(|r| r.weight).sum::<f64>() - 1.0).abs());
        let stats = normalize(&mut scores, Some(&w));
        for (ty, st) in &stats.by_type {
            if st.sd == 0.0 || st.count < 2 {
                continue;
            }
            let zs: Vec<f64> = scores.iter().filter(|s| s.line_type == *ty).map(|s| s.z).collect();
            let m = mean(&zs);
            let sd = (zs.iter().map(|z| (z - m).powi(2)).sum::<f64>() / zs.len() as f64).sqrt();
            worst_mean = worst_mean.max(m.abs());
            worst_sd = worst_sd.max((sd - 1.0).abs());
        }
        for a in &scores {
            for b in &scores {
                if a.line_type == b.line_type && a.entropy < b.entropy && a.weighted > b.weighted {
                    rank_breaks += 1;
                }
            }
        }
    }
    let pass = worst_mean <= 1e-6 && worst_sd <= 1e-6 && worst_w <= 1e-9 && rank_breaks == 0;
    outcome(
        pass,
        format!(
            "max |z mean| {worst_mean:.1e}, max |z sd - 1| {worst_sd:.1e}, max |sum w - 1| {worst_w:.1e}, ranking breaks {rank_breaks}"
        ),
    )
}

// 10 ------------------------------------------------------------------------

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let snap = fixtures().join("history/snapshots/2014-01-01");
    let golden = fixtures().join("linesets.golden.jsonl");
    let warnings = tmp.path().join("warnings.jsonl");
    std::fs::write(
        &warnings,
        "{\"tool\":\"pmd\",\"path\":\"src/Parser.java\",\"start_line\":4,\"end_line\":8,\"priority\":3}\n\
         {\"tool\":\"pmd\",\"path\":\"src/Big.java\",\"start_line\":10,\"end_line\":12,\"priority\":1}\n",
    )
    .unwrap();

    let mut score_outputs = Vec::new();
    let mut eval_outputs = Vec::new();
    for (run, jobs) in [(0, "1"), (1, "8"), (2, "1"), (3, "8")] {
        let scores = tmp.path().join(format!("scores{run}.jsonl"));
        let s = natbug(&[
            "score", "--jobs", jobs, "--snapshot", snap.to_str().unwrap(), "--bin-count", "2", "--mode", "type",
            "--out", scores.to_str().unwrap(),
        ]);
        if !s.status.success() {
            return outcome(false, format!("score failed: {}", String::from_utf8_lossy(&s.stderr)));
        }
        score_outputs.push(std::fs::read(&scores).unwrap());
        let out_dir = tmp.path().join(format!("eval{run}"));
        let e = natbug(&[
            "eval", "--jobs", jobs, "--scores", scores.to_str().unwrap(), "--linesets", golden.to_str().unwrap(),
            "--snapshot-label", "2014-01-01", "--warnings", warnings.to_str().unwrap(), "--seed", "42",
            "--out-dir", out_dir.to_str().unwrap(),
        ]);
        if !e.status.success() {
            return outcome(false, format!("eval failed: {}", String::from_utf8_lossy(&e.stderr)));
        }
        eval_outputs.push(read_dir_bytes(&out_dir));
    }
    let same_scores = score_outputs.windows(2).all(|w| w[0] == w[1]);
    let same_eval = eval_outputs.windows(2).all(|w| w[0] == w[1]) && eval_outputs[0].len() == 4;
    outcome(
        same_scores && same_eval,
        format!("score identical over 4 runs (jobs 1/8): {same_scores}; eval identical: {same_eval}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("random-ordering baseline", random_baseline),
        ("model oracle equivalence", lm_oracle),
        ("cache interpolation limits", interpolation_limits),
        ("injected lines are less natural", injected_gap),
        ("frequent replacement lowers entropy", replacement_drop),
        ("mining golden file", mining_golden),
        ("full credit dominates partial", credit_dominance),
        ("mix ordering beats simulated finder", mix_sanity),
        ("normalizer algebra", normalizer_algebra),
        ("determinism across runs and workers", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!("{} AC{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
