//! Synthetic inputs for the benchmarks.

use natbug_core::{tokenize_file, LanguageProfile, TokenizedFile};

/// `files` Java-ish sources of `lines` lines each, with some shared idioms and
/// a per-file twist so the cache has something to find.
pub fn synthetic_corpus(files: usize, lines: usize) -> Vec<TokenizedFile> {
    let profile = LanguageProfile::java();
    (0..files)
        .map(|f| {
            let mut src = format!("class C{f} {{\n");
            for l in 0..lines {
                match l % 4 {
                    0 => src.push_str(&format!("  int v{} = compute(x{}, {});\n", l, f % 7, l % 13)),
                    1 => src.push_str("  if (x == null) { return; }\n"),
                    2 => src.push_str(&format!("  list.add(v{});\n", l - 2)),
                    _ => src.push_str(&format!("  log.info(\"step {}\");\n", l % 5)),
                }
            }
            src.push_str("}\n");
            tokenize_file(&format!("src/C{f}.java"), &src, &profile)
        })
        .collect()
}
