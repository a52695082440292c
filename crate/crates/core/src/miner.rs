//! History mining: snapshot boundaries, line diffs, bug-fix commit
//! classification and the buggy / fixed / unchanged line sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, DiffOp};
use thiserror::Error;

pub const DEFAULT_MAX_DELETE: usize = 30;
pub const MAX_DELETE_PRESETS: [usize; 5] = [2, 5, 10, 20, 30];

pub const BUGFIX_KEYWORDS: [&str; 9] = [
    "error", "bug", "fix", "issue", "mistake", "incorrect", "fault", "defect", "flaw",
];

#[derive(Debug, Error)]
pub enum MineError {
    #[error("commit {id}: change to {path} has neither old nor new text")]
    EmptyChange { id: String, path: String },
    #[error("history is not sorted by timestamp at commit {0}")]
    Unsorted(String),
    #[error("commit {0} precedes the first snapshot boundary")]
    BeforeStart(String),
    #[error("snapshot interval must be positive")]
    BadInterval,
    #[error("max_delete must be positive")]
    BadMaxDelete,
    #[error("commit {id}: old text of {path} does not match the file's state before the commit")]
    Inconsistent { id: String, path: String },
    #[error("commits.jsonl line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("bad snapshot directory name {0:?}: expected an ISO date")]
    SnapshotName(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MineError + '_ {
    move |source| MineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One file touched by a commit. An empty `old_text` is a file addition, an
/// empty `new_text` a deletion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileChange {
    pub path: String,
    pub old_text: String,
    pub new_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub message: String,
    pub file_changes: Vec<FileChange>,
}

impl CommitRecord {
    pub fn validate(&self) -> Result<(), MineError> {
        for fc in &self.file_changes {
            if fc.old_text.is_empty() && fc.new_text.is_empty() {
                return Err(MineError::EmptyChange {
                    id: self.id.clone(),
                    path: fc.path.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotBoundary {
    pub at: DateTime<Utc>,
    /// Indices into the history of commits in `[at, at + interval)`.
    pub commits: Vec<usize>,
}

/// Boundaries at `start`, `start + interval`, ... through the last commit.
pub fn extract_snapshots(
    history: &[CommitRecord],
    interval: Duration,
    start: DateTime<Utc>,
) -> Result<Vec<SnapshotBoundary>, MineError> {
    if interval <= Duration::zero() {
        return Err(MineError::BadInterval);
    }
    let Some(last) = history.last() else {
        return Ok(Vec::new());
    };
    check_sorted(history)?;
    if let Some(c) = history.iter().find(|c| c.timestamp < start) {
        return Err(MineError::BeforeStart(c.id.clone()));
    }
    let mut boundaries = Vec::new();
    let mut at = start;
    while at <= last.timestamp {
        boundaries.push(SnapshotBoundary {
            at,
            commits: Vec::new(),
        });
        at += interval;
    }
    let ats: Vec<DateTime<Utc>> = boundaries.iter().map(|b| b.at).collect();
    for (i, c) in history.iter().enumerate() {
        let slot = interval_of(&ats, c.timestamp).expect("commit is after start");
        boundaries[slot].commits.push(i);
    }
    Ok(boundaries)
}

fn check_sorted(history: &[CommitRecord]) -> Result<(), MineError> {
    for w in history.windows(2) {
        if w[1].timestamp < w[0].timestamp {
            return Err(MineError::Unsorted(w[1].id.clone()));
        }
    }
    Ok(())
}

/// Index of the last boundary at or before `t`; the final interval is open.
fn interval_of(boundaries: &[DateTime<Utc>], t: DateTime<Utc>) -> Option<usize> {
    boundaries.partition_point(|b| *b <= t).checked_sub(1)
}

/// 1-based line numbers removed from `old` and added in `new`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiffResult {
    pub deleted: BTreeSet<u32>,
    pub added: BTreeSet<u32>,
}

pub fn diff_versions(old_text: &str, new_text: &str) -> DiffResult {
    let old: Vec<&str> = old_text.lines().collect();
    let new: Vec<&str> = new_text.lines().collect();
    let mut out = DiffResult::default();
    for op in capture_diff_slices(similar::Algorithm::Myers, &old, &new) {
        let (_, old_range, new_range) = op.as_tag_tuple();
        match op {
            DiffOp::Equal { .. } => {}
            _ => {
                out.deleted.extend(old_range.map(|i| i as u32 + 1));
                out.added.extend(new_range.map(|i| i as u32 + 1));
            }
        }
    }
    out
}

fn stemmer() -> &'static Stemmer {
    static S: OnceLock<Stemmer> = OnceLock::new();
    S.get_or_init(|| Stemmer::create(Algorithm::English))
}

fn keyword_stems() -> &'static BTreeSet<String> {
    static K: OnceLock<BTreeSet<String>> = OnceLock::new();
    K.get_or_init(|| {
        BUGFIX_KEYWORDS
            .iter()
            .map(|k| stemmer().stem(k).into_owned())
            .collect()
    })
}

/// Lowercased alphanumeric words of `message`, stemmed.
pub fn message_stems(message: &str) -> BTreeSet<String> {
    message
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| stemmer().stem(w).into_owned())
        .collect()
}

pub fn classify_bugfix(message: &str) -> bool {
    !message_stems(message).is_disjoint(keyword_stems())
}

/// Line labels for one snapshot interval. Buggy and unchanged lines are in
/// the boundary snapshot's coordinates; fixed lines are in the coordinates of
/// the fixing commit's new version.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineSets {
    pub unchanged: BTreeSet<(String, u32)>,
    pub buggy: BTreeSet<(String, u32, String)>,
    pub fixed: BTreeSet<(String, u32, String)>,
    /// Boundary lines deleted by retained non-fix commits: neither buggy nor
    /// unchanged.
    pub changed: BTreeSet<(String, u32)>,
}

struct FileState {
    text: String,
    /// Boundary line number of each current line, if it existed at the boundary.
    origin: Vec<Option<u32>>,
}

/// Label the lines of `snapshot` (path to text) given the commits that follow
/// it, in order. A per-file change is retained when it deletes between 1 and
/// `max_delete` lines.
pub fn build_line_sets(
    snapshot: &BTreeMap<String, String>,
    commits: &[CommitRecord],
    max_delete: usize,
) -> Result<LineSets, MineError> {
    if max_delete == 0 {
        return Err(MineError::BadMaxDelete);
    }
    let mut state: BTreeMap<&str, FileState> = snapshot
        .iter()
        .map(|(p, t)| {
            let n = t.lines().count() as u32;
            (
                p.as_str(),
                FileState {
                    text: t.clone(),
                    origin: (1..=n).map(Some).collect(),
                },
            )
        })
        .collect();
    let mut sets = LineSets::default();

    for c in commits {
        c.validate()?;
        let bugfix = classify_bugfix(&c.message);
        for fc in &c.file_changes {
            let st = state.entry(fc.path.as_str()).or_insert_with(|| FileState {
                text: String::new(),
                origin: Vec::new(),
            });
            if st.text != fc.old_text {
                return Err(MineError::Inconsistent {
                    id: c.id.clone(),
                    path: fc.path.clone(),
                });
            }
            let old: Vec<&str> = fc.old_text.lines().collect();
            let new: Vec<&str> = fc.new_text.lines().collect();
            let ops = capture_diff_slices(similar::Algorithm::Myers, &old, &new);
            let deleted: usize = ops.iter().map(|op| op.old_range().len()).sum::<usize>()
                - ops
                    .iter()
                    .filter(|op| matches!(op, DiffOp::Equal { .. }))
                    .map(|op| op.old_range().len())
                    .sum::<usize>();
            let retained = (1..=max_delete).contains(&deleted);

            let mut origin = Vec::with_capacity(new.len());
            for op in &ops {
                if let DiffOp::Equal { old_index, len, .. } = *op {
                    origin.extend_from_slice(&st.origin[old_index..old_index + len]);
                    continue;
                }
                for o in op.old_range().filter_map(|i| st.origin[i]) {
                    if !retained {
                        continue;
                    }
                    if bugfix {
                        sets.buggy.insert((fc.path.clone(), o, c.id.clone()));
                    } else {
                        sets.changed.insert((fc.path.clone(), o));
                    }
                }
                for i in op.new_range() {
                    if retained && bugfix {
                        sets.fixed.insert((fc.path.clone(), i as u32 + 1, c.id.clone()));
                    }
                    origin.push(None);
                }
            }
            st.text = fc.new_text.clone();
            st.origin = origin;
        }
    }

    let buggy: BTreeSet<(&str, u32)> = sets.buggy.iter().map(|(p, l, _)| (p.as_str(), *l)).collect();
    for (path, text) in snapshot {
        for line in 1..=text.lines().count() as u32 {
            let key = (path.as_str(), line);
            if !buggy.contains(&key) && !sets.changed.contains(&(path.clone(), line)) {
                sets.unchanged.insert((path.clone(), line));
            }
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineLabel {
    Unchanged,
    Buggy,
    Fixed,
}

/// One `linesets.jsonl` record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LineRecord {
    pub snapshot: String,
    pub path: String,
    pub line: u32,
    pub label: LineLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_id: Option<String>,
}

/// Records sorted by path, line, label, bug id.
pub fn line_records(snapshot: &str, sets: &LineSets) -> Vec<LineRecord> {
    let rec = |path: &str, line: u32, label, bug_id: Option<&String>| LineRecord {
        snapshot: snapshot.to_string(),
        path: path.to_string(),
        line,
        label,
        bug_id: bug_id.cloned(),
    };
    let mut out: Vec<LineRecord> = sets
        .unchanged
        .iter()
        .map(|(p, l)| rec(p, *l, LineLabel::Unchanged, None))
        .chain(sets.buggy.iter().map(|(p, l, b)| rec(p, *l, LineLabel::Buggy, Some(b))))
        .chain(sets.fixed.iter().map(|(p, l, b)| rec(p, *l, LineLabel::Fixed, Some(b))))
        .collect();
    out.sort_by(|a, b| {
        (&a.path, a.line, a.label, &a.bug_id).cmp(&(&b.path, b.line, b.label, &b.bug_id))
    });
    out
}

/// A mined project: dated snapshot trees plus the commit manifest.
#[derive(Debug, Clone, Default)]
pub struct History {
    /// `(ISO date, path -> text)` sorted by date.
    pub snapshots: Vec<(String, BTreeMap<String, String>)>,
    /// Sorted by timestamp (stable).
    pub commits: Vec<CommitRecord>,
}

#[derive(Deserialize)]
struct ManifestFile {
    path: String,
    old: Option<String>,
    new: Option<String>,
}

#[derive(Deserialize)]
struct ManifestCommit {
    id: String,
    timestamp: DateTime<Utc>,
    message: String,
    files: Vec<ManifestFile>,
}

/// Snapshot date as midnight UTC.
pub fn snapshot_instant(date: &str) -> Result<DateTime<Utc>, MineError> {
    let d = NaiveDate::parse_from_str(date, "%Y-%m-%d")
        .map_err(|_| MineError::SnapshotName(date.to_string()))?;
    Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
}

/// Every file under `root` whose `/`-separated relative path passes `accept`,
/// keyed by that path.
pub fn read_tree(root: &Path, accept: impl Fn(&str) -> bool) -> Result<BTreeMap<String, String>, MineError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("under root")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                if accept(&rel) {
                    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
                    out.insert(rel, text);
                }
            }
        }
    }
    Ok(out)
}

/// Load `root/snapshots/<ISO-date>/...` and `root/commits.jsonl`. Blob paths
/// in the manifest are relative to `root`. A missing snapshots directory is an
/// empty list; a missing manifest is an error.
pub fn load_history(root: &Path) -> Result<History, MineError> {
    let mut history = History::default();
    let snap_root = root.join("snapshots");
    if snap_root.is_dir() {
        for entry in fs::read_dir(&snap_root).map_err(io_err(&snap_root))? {
            let path = entry.map_err(io_err(&snap_root))?.path();
            if !path.is_dir() {
                continue;
            }
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            snapshot_instant(&name)?;
            history.snapshots.push((name, read_tree(&path, |_| true)?));
        }
    }
    history.snapshots.sort_by(|a, b| a.0.cmp(&b.0));

    let manifest = root.join("commits.jsonl");
    let text = fs::read_to_string(&manifest).map_err(io_err(&manifest))?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| MineError::Manifest { line: i + 1, reason };
        let rec: ManifestCommit = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let mut file_changes = Vec::with_capacity(rec.files.len());
        for f in rec.files {
            let blob = |p: &Option<String>| -> Result<String, MineError> {
                match p {
                    None => Ok(String::new()),
                    Some(p) => {
                        let full = root.join(p);
                        fs::read_to_string(&full)
                            .map_err(|e| bad(format!("blob {}: {e}", full.display())))
                    }
                }
            };
            if f.old.is_none() && f.new.is_none() {
                return Err(bad(format!("{}: both old and new are null", f.path)));
            }
            file_changes.push(FileChange {
                old_text: blob(&f.old)?,
                new_text: blob(&f.new)?,
                path: f.path,
            });
        }
        let commit = CommitRecord {
            id: rec.id,
            timestamp: rec.timestamp,
            message: rec.message,
            file_changes,
        };
        commit.validate().map_err(|e| bad(e.to_string()))?;
        history.commits.push(commit);
    }
    history.commits.sort_by_key(|c| c.timestamp);
    Ok(history)
}

/// Label every snapshot interval that contains at least one commit. The last
/// snapshot's interval is open-ended.
pub fn mine_history(history: &History, max_delete: usize) -> Result<Vec<LineRecord>, MineError> {
    let ats = history
        .snapshots
        .iter()
        .map(|(d, _)| snapshot_instant(d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut groups: BTreeMap<usize, Vec<CommitRecord>> = BTreeMap::new();
    for c in &history.commits {
        let slot = interval_of(&ats, c.timestamp).ok_or_else(|| MineError::BeforeStart(c.id.clone()))?;
        groups.entry(slot).or_default().push(c.clone());
    }
    let mut out = Vec::new();
    for (slot, commits) in groups {
        let (date, files) = &history.snapshots[slot];
        let sets = build_line_sets(files, &commits, max_delete)?;
        out.extend(line_records(date, &sets));
    }
    Ok(out)
}
