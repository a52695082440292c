//! Comment-free tokenization with line provenance, plus a shape-based line
//! type classifier.
//!
//! Lexing is driven entirely by a [`LanguageProfile`]: comment syntax, quote
//! characters, keyword/operator sets and the line-type rules are data, so a
//! new language only needs a new profile file.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("{path}:{line}: unterminated {what}; remainder of file skipped")]
    Unterminated {
        path: String,
        line: u32,
        what: &'static str,
    },
    #[error("{path}:{line}: no tokens on line")]
    NoTokens { path: String, line: u32 },
    #[error("cannot read language profile {path}: {reason}")]
    Profile { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Keyword,
    Literal,
    Operator,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// 1-based source line.
    pub line: u32,
    pub kind: TokenKind,
}

/// Syntactic category of a physical source line; the pooling unit for
/// z-score normalization.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum LineType {
    ImportDecl,
    PackageDecl,
    ClassDecl,
    MethodDecl,
    FieldDecl,
    VariableDecl,
    IfStmt,
    ForStmt,
    WhileStmt,
    SwitchCase,
    TryStmt,
    CatchClause,
    ReturnStmt,
    ThrowStmt,
    CallStmt,
    Assignment,
    Annotation,
    BraceOnly,
    Other,
}

impl LineType {
    pub const ALL: [LineType; 19] = [
        LineType::ImportDecl,
        LineType::PackageDecl,
        LineType::ClassDecl,
        LineType::MethodDecl,
        LineType::FieldDecl,
        LineType::VariableDecl,
        LineType::IfStmt,
        LineType::ForStmt,
        LineType::WhileStmt,
        LineType::SwitchCase,
        LineType::TryStmt,
        LineType::CatchClause,
        LineType::ReturnStmt,
        LineType::ThrowStmt,
        LineType::CallStmt,
        LineType::Assignment,
        LineType::Annotation,
        LineType::BraceOnly,
        LineType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LineType::ImportDecl => "import_decl",
            LineType::PackageDecl => "package_decl",
            LineType::ClassDecl => "class_decl",
            LineType::MethodDecl => "method_decl",
            LineType::FieldDecl => "field_decl",
            LineType::VariableDecl => "variable_decl",
            LineType::IfStmt => "if_stmt",
            LineType::ForStmt => "for_stmt",
            LineType::WhileStmt => "while_stmt",
            LineType::SwitchCase => "switch_case",
            LineType::TryStmt => "try_stmt",
            LineType::CatchClause => "catch_clause",
            LineType::ReturnStmt => "return_stmt",
            LineType::ThrowStmt => "throw_stmt",
            LineType::CallStmt => "call_stmt",
            LineType::Assignment => "assignment",
            LineType::Annotation => "annotation",
            LineType::BraceOnly => "brace_only",
            LineType::Other => "other",
        }
    }
}

impl fmt::Display for LineType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LineType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LineType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown line type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedFile {
    pub path: String,
    pub tokens: Vec<Token>,
    pub line_count: u32,
    pub line_types: BTreeMap<u32, LineType>,
    /// Recoverable lexing problems; tokens after the first one are absent.
    pub diagnostics: Vec<LexError>,
}

impl TokenizedFile {
    /// Tokens recorded on `line`.
    pub fn line_tokens(&self, line: u32) -> &[Token] {
        let lo = self.tokens.partition_point(|t| t.line < line);
        let hi = self.tokens.partition_point(|t| t.line <= line);
        &self.tokens[lo..hi]
    }

    /// Lines that own at least one token, ascending.
    pub fn token_lines(&self) -> impl Iterator<Item = u32> + '_ {
        self.line_types.keys().copied()
    }
}

/// Rules for the heuristic line classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineTypeRules {
    /// First significant token of a line that forces its type.
    pub leading: BTreeMap<String, LineType>,
    /// Tokens introducing a type declaration (`class`, `interface`, ...).
    pub declarators: Vec<String>,
    /// Declaration modifiers; a modified declaration outside a method is a field.
    pub modifiers: Vec<String>,
    /// Keywords that can stand in type position (`int`, `void`, ...).
    pub type_keywords: Vec<String>,
    /// Token that starts an annotation.
    pub annotation: Option<String>,
}

/// Lexer configuration. Loadable from TOML; [`LanguageProfile::java`] is the
/// built-in default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub name: String,
    #[serde(default)]
    pub extensions: Vec<String>,
    pub keywords: Vec<String>,
    /// Reserved words that are literals (`true`, `null`, ...).
    #[serde(default)]
    pub literal_words: Vec<String>,
    pub line_comment: Vec<String>,
    pub block_comment: Vec<(String, String)>,
    pub string_quotes: Vec<char>,
    #[serde(default)]
    pub char_quotes: Vec<char>,
    #[serde(default = "default_escape")]
    pub escape: char,
    pub operators: Vec<String>,
    pub punctuation: Vec<String>,
    pub line_types: LineTypeRules,
}

fn default_escape() -> char {
    '\\'
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl LanguageProfile {
    pub fn java() -> Self {
        use LineType::*;
        let leading = [
            ("import", ImportDecl),
            ("package", PackageDecl),
            ("if", IfStmt),
            ("else", IfStmt),
            ("for", ForStmt),
            ("while", WhileStmt),
            ("do", WhileStmt),
            ("switch", SwitchCase),
            ("case", SwitchCase),
            ("default", SwitchCase),
            ("try", TryStmt),
            ("finally", TryStmt),
            ("catch", CatchClause),
            ("return", ReturnStmt),
            ("throw", ThrowStmt),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        LanguageProfile {
            name: "java".into(),
            extensions: strings(&["java"]),
            keywords: strings(&[
                "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char",
                "class", "const", "continue", "default", "do", "double", "else", "enum",
                "extends", "final", "finally", "float", "for", "goto", "if", "implements",
                "import", "instanceof", "int", "interface", "long", "native", "new",
                "package", "private", "protected", "public", "return", "short", "static",
                "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
                "transient", "try", "var", "void", "volatile", "while",
            ]),
            literal_words: strings(&["true", "false", "null"]),
            line_comment: strings(&["//"]),
            block_comment: vec![("/*".into(), "*/".into())],
            string_quotes: vec!['"'],
            char_quotes: vec!['\''],
            escape: '\\',
            operators: strings(&[
                ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "++", "--", "&&", "||", "==",
                "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>",
                "=", "<", ">", "!", "~", "?", ":", "+", "-", "*", "/", "%", "&", "|", "^",
            ]),
            punctuation: strings(&["(", ")", "{", "}", "[", "]", ";", ",", ".", "@"]),
            line_types: LineTypeRules {
                leading,
                declarators: strings(&["class", "interface", "enum", "record"]),
                modifiers: strings(&[
                    "public", "private", "protected", "static", "final", "abstract",
                    "synchronized", "native", "transient", "volatile", "strictfp",
                ]),
                type_keywords: strings(&[
                    "void", "int", "long", "short", "byte", "char", "boolean", "float",
                    "double", "var",
                ]),
                annotation: Some("@".into()),
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, LexError> {
        toml::from_str(text).map_err(|e| LexError::Profile {
            path: "<string>".into(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, LexError> {
        let text = std::fs::read_to_string(path).map_err(|e| LexError::Profile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| LexError::Profile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    /// Whether `path` carries one of this profile's file extensions. A profile
    /// without extensions accepts every file.
    pub fn accepts(&self, path: &str) -> bool {
        if self.extensions.is_empty() {
            return true;
        }
        Path::new(path)
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|ext| self.extensions.iter().any(|x| x == ext))
    }
}

/// Profile with lookup structures precomputed.
struct Compiled<'p> {
    profile: &'p LanguageProfile,
    keywords: HashSet<&'p str>,
    literal_words: HashSet<&'p str>,
    /// Operators and punctuation, longest first.
    symbols: Vec<(&'p str, TokenKind)>,
}

impl<'p> Compiled<'p> {
    fn new(profile: &'p LanguageProfile) -> Self {
        let mut symbols: Vec<(&str, TokenKind)> = profile
            .operators
            .iter()
            .map(|s| (s.as_str(), TokenKind::Operator))
            .chain(
                profile
                    .punctuation
                    .iter()
                    .map(|s| (s.as_str(), TokenKind::Punctuation)),
            )
            .filter(|(s, _)| !s.is_empty())
            .collect();
        symbols.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));
        Compiled {
            profile,
            keywords: profile.keywords.iter().map(String::as_str).collect(),
            literal_words: profile.literal_words.iter().map(String::as_str).collect(),
            symbols,
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

/// Tokenize `source` under `profile`. Comments and whitespace produce no
/// tokens; each string or char literal is a single token holding its verbatim
/// text. An unterminated literal or block comment is reported in
/// `diagnostics` and the rest of the file is dropped.
pub fn tokenize_file(path: &str, source: &str, profile: &LanguageProfile) -> TokenizedFile {
    let lexer = Compiled::new(profile);
    let mut tokens = Vec::new();
    let mut diagnostics = Vec::new();
    let bytes = source.as_bytes();
    let mut pos = 0usize;
    let mut line: u32 = 1;

    'outer: while pos < source.len() {
        let rest = &source[pos..];
        let c = rest.chars().next().expect("non-empty");

        if c == '\n' {
            line += 1;
            pos += 1;
            continue;
        }
        if c.is_whitespace() {
            pos += c.len_utf8();
            continue;
        }
        if profile
            .line_comment
            .iter()
            .any(|p| !p.is_empty() && rest.starts_with(p.as_str()))
        {
            pos += rest.find('\n').unwrap_or(rest.len());
            continue;
        }
        for (open, close) in &profile.block_comment {
            if !open.is_empty() && rest.starts_with(open.as_str()) {
                let body = &rest[open.len()..];
                match body.find(close.as_str()) {
                    Some(end) => {
                        line += body[..end].matches('\n').count() as u32;
                        pos += open.len() + end + close.len();
                        continue 'outer;
                    }
                    None => {
                        diagnostics.push(LexError::Unterminated {
                            path: path.to_string(),
                            line,
                            what: "block comment",
                        });
                        break 'outer;
                    }
                }
            }
        }
        if profile.string_quotes.contains(&c) || profile.char_quotes.contains(&c) {
            let mut chars = rest.char_indices().skip(1);
            let mut end = None;
            while let Some((i, ch)) = chars.next() {
                if ch == '\n' {
                    break;
                }
                if ch == profile.escape {
                    if let Some((_, '\n')) | None = chars.next() {
                        break;
                    }
                    continue;
                }
                if ch == c {
                    end = Some(i + ch.len_utf8());
                    break;
                }
            }
            match end {
                Some(end) => {
                    tokens.push(Token {
                        text: rest[..end].to_string(),
                        line,
                        kind: TokenKind::Literal,
                    });
                    pos += end;
                    continue;
                }
                None => {
                    let what = if profile.string_quotes.contains(&c) {
                        "string literal"
                    } else {
                        "char literal"
                    };
                    diagnostics.push(LexError::Unterminated {
                        path: path.to_string(),
                        line,
                        what,
                    });
                    break 'outer;
                }
            }
        }
        if is_ident_start(c) {
            let end = rest
                .char_indices()
                .find(|&(_, ch)| !is_ident_continue(ch))
                .map_or(rest.len(), |(i, _)| i);
            let text = &rest[..end];
            let kind = if lexer.literal_words.contains(text) {
                TokenKind::Literal
            } else if lexer.keywords.contains(text) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            tokens.push(Token {
                text: text.to_string(),
                line,
                kind,
            });
            pos += end;
            continue;
        }
        let starts_number = c.is_ascii_digit()
            || (c == '.' && bytes.get(pos + 1).is_some_and(|b| b.is_ascii_digit()));
        if starts_number {
            let end = number_end(rest);
            tokens.push(Token {
                text: rest[..end].to_string(),
                line,
                kind: TokenKind::Literal,
            });
            pos += end;
            continue;
        }
        if let Some(&(sym, kind)) = lexer.symbols.iter().find(|(s, _)| rest.starts_with(s)) {
            tokens.push(Token {
                text: sym.to_string(),
                line,
                kind,
            });
            pos += sym.len();
            continue;
        }
        // Unknown character: keep it as a one-character operator.
        tokens.push(Token {
            text: c.to_string(),
            line,
            kind: TokenKind::Operator,
        });
        pos += c.len_utf8();
    }

    let line_count = source.lines().count() as u32;
    let mut file = TokenizedFile {
        path: path.to_string(),
        tokens,
        line_count,
        line_types: BTreeMap::new(),
        diagnostics,
    };
    let lines: BTreeSet<u32> = file.tokens.iter().map(|t| t.line).collect();
    for l in lines {
        let ty = classify_tokens(file.line_tokens(l), &lexer);
        file.line_types.insert(l, ty);
    }
    file
}

/// Byte length of the numeric literal at the start of `s`.
fn number_end(s: &str) -> usize {
    let hex = s.starts_with("0x") || s.starts_with("0X");
    let mut prev = '\0';
    for (i, c) in s.char_indices() {
        let exponent_sign = (c == '+' || c == '-')
            && if hex {
                matches!(prev, 'p' | 'P')
            } else {
                matches!(prev, 'e' | 'E')
            };
        if !(c.is_ascii_alphanumeric() || c == '_' || c == '.' || exponent_sign) {
            return i;
        }
        prev = c;
    }
    s.len()
}

/// Line type of `line` in `file`. Each physical line is typed on its own
/// tokens only.
pub fn classify_line_type(
    file: &TokenizedFile,
    line: u32,
    profile: &LanguageProfile,
) -> Result<LineType, LexError> {
    let tokens = file.line_tokens(line);
    if tokens.is_empty() {
        return Err(LexError::NoTokens {
            path: file.path.clone(),
            line,
        });
    }
    Ok(classify_tokens(tokens, &Compiled::new(profile)))
}

const ASSIGN_OPS: [&str; 12] = [
    "=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>=",
];

fn classify_tokens(tokens: &[Token], lexer: &Compiled<'_>) -> LineType {
    let rules = &lexer.profile.line_types;
    if tokens.iter().all(|t| t.kind == TokenKind::Punctuation)
        && rules.annotation.as_deref() != Some(tokens[0].text.as_str())
    {
        return LineType::BraceOnly;
    }
    // `} else {`, `} catch (E e) {`, `});` ...
    let start = tokens
        .iter()
        .position(|t| !matches!(t.text.as_str(), "}" | ")" | ";"))
        .unwrap_or(0);
    let toks = &tokens[start..];
    let first = toks[0].text.as_str();

    if rules.annotation.as_deref() == Some(first) {
        return LineType::Annotation;
    }
    if let Some(&ty) = rules.leading.get(first) {
        return ty;
    }
    let declares_type = toks.iter().enumerate().any(|(i, t)| {
        rules.declarators.contains(&t.text) && (i == 0 || toks[i - 1].text != ".")
    });
    if declares_type {
        return LineType::ClassDecl;
    }

    let mut depth = 0i32;
    let mut first_paren = None;
    let mut first_assign = None;
    for (i, t) in toks.iter().enumerate() {
        match t.text.as_str() {
            "(" => {
                if depth == 0 && first_paren.is_none() {
                    first_paren = Some(i);
                }
                depth += 1;
            }
            ")" => depth -= 1,
            s if depth == 0 && first_assign.is_none() && ASSIGN_OPS.contains(&s) => {
                first_assign = Some(i);
            }
            _ => {}
        }
    }

    let head_end = [first_paren, first_assign]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or_else(|| {
            let trailing = toks
                .iter()
                .rev()
                .take_while(|t| matches!(t.text.as_str(), ";" | "{" | ","))
                .count();
            toks.len() - trailing
        });
    let head = &toks[..head_end];
    let modifiers = head
        .iter()
        .take_while(|t| rules.modifiers.contains(&t.text))
        .count();
    let core = &head[modifiers..];
    let type_like = |t: &Token| {
        t.kind == TokenKind::Identifier
            || rules.type_keywords.contains(&t.text)
            || matches!(t.text.as_str(), ">" | ">>" | ">>>" | "]")
    };
    let simple_decl = core.len() >= 2
        && core[core.len() - 1].kind == TokenKind::Identifier
        && type_like(&core[core.len() - 2])
        && !core.iter().any(|t| t.text == ".");
    let is_decl = simple_decl || generic_decl(core, &type_like);
    let paren_first = match (first_paren, first_assign) {
        (Some(p), Some(a)) => p < a,
        (Some(_), None) => true,
        _ => false,
    };

    if is_decl {
        if paren_first {
            return LineType::MethodDecl;
        }
        return if modifiers > 0 {
            LineType::FieldDecl
        } else {
            LineType::VariableDecl
        };
    }
    // Constructor: `public Foo(int x) {`
    if paren_first
        && modifiers > 0
        && core.len() == 1
        && core[0].kind == TokenKind::Identifier
    {
        return LineType::MethodDecl;
    }
    if first_assign.is_some()
        || (first_paren.is_none() && toks.iter().any(|t| t.text == "++" || t.text == "--"))
    {
        return LineType::Assignment;
    }
    if first_paren.is_some() {
        return LineType::CallStmt;
    }
    LineType::Other
}

/// `Map<K, V> name` style heads, where the generic argument list contains
/// commas that the simple two-token check does not see through.
fn generic_decl(core: &[Token], type_like: &dyn Fn(&Token) -> bool) -> bool {
    let n = core.len();
    n >= 4
        && core[n - 1].kind == TokenKind::Identifier
        && matches!(core[n - 2].text.as_str(), ">" | ">>" | ">>>")
        && core[0].kind == TokenKind::Identifier
        && type_like(&core[0])
        && core.get(1).is_some_and(|t| t.text == "<")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(file: &TokenizedFile) -> Vec<(&str, u32)> {
        file.tokens.iter().map(|t| (t.text.as_str(), t.line)).collect()
    }

    fn java(src: &str) -> TokenizedFile {
        tokenize_file("T.java", src, &LanguageProfile::java())
    }

    #[test]
    fn drops_line_comment() {
        let f = java("int x = 0; // init");
        assert_eq!(
            texts(&f),
            vec![("int", 1), ("x", 1), ("=", 1), ("0", 1), (";", 1)]
        );
        assert_eq!(f.line_count, 1);
    }

    #[test]
    fn empty_source() {
        let f = java("");
        assert!(f.tokens.is_empty());
        assert_eq!(f.line_count, 0);
        assert!(f.line_types.is_empty());
    }

    #[test]
    fn block_comment_spanning_lines() {
        // Hand tokenization of the three-line fixture.
        let src = "int a = 1; /* start\n still comment\n end */ a++;\n";
        let f = java(src);
        assert_eq!(
            texts(&f),
            vec![
                ("int", 1),
                ("a", 1),
                ("=", 1),
                ("1", 1),
                (";", 1),
                ("a", 3),
                ("++", 3),
                (";", 3),
            ]
        );
        assert_eq!(f.line_count, 3);
        assert_eq!(f.line_types.keys().copied().collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn string_literal_is_one_token() {
        let f = java(r#"s = "a // not comment \" x";"#);
        assert_eq!(f.tokens[2].text, r#""a // not comment \" x""#);
        assert_eq!(f.tokens[2].kind, TokenKind::Literal);
        assert_eq!(f.tokens.len(), 4);
    }

    #[test]
    fn unterminated_string_is_recoverable() {
        let f = java("int a;\nString s = \"oops;\nint b;\n");
        assert_eq!(f.tokens.iter().filter(|t| t.line == 1).count(), 3);
        assert!(f.tokens.iter().all(|t| t.line <= 2));
        assert!(!f.tokens.iter().any(|t| t.line == 3));
        assert_eq!(
            f.diagnostics,
            vec![LexError::Unterminated {
                path: "T.java".into(),
                line: 2,
                what: "string literal"
            }]
        );
    }

    #[test]
    fn unterminated_comment_is_recoverable() {
        let f = java("a();\n/* never closed\nb();\n");
        assert_eq!(f.tokens.len(), 4);
        let msg = f.diagnostics[0].to_string();
        assert!(msg.contains("T.java:2"), "{msg}");
    }

    #[test]
    fn numbers_and_operators() {
        let f = java("x >>>= 1.5e-3f + 0x1F;");
        let t: Vec<_> = f.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(t, vec!["x", ">>>=", "1.5e-3f", "+", "0x1F", ";"]);
        assert_eq!(f.tokens[2].kind, TokenKind::Literal);
        assert_eq!(f.tokens[1].kind, TokenKind::Operator);
    }

    #[test]
    fn keyword_forced_types() {
        let f = java("import java.util.List;\n} catch (IOException e) {\nfoo.bar(x, y);\n");
        assert_eq!(f.line_types[&1], LineType::ImportDecl);
        assert_eq!(f.line_types[&2], LineType::CatchClause);
        assert_eq!(f.line_types[&3], LineType::CallStmt);
    }

    #[test]
    fn classify_requires_tokens() {
        let f = java("a();\n\n// c\n");
        let p = LanguageProfile::java();
        assert_eq!(classify_line_type(&f, 1, &p).unwrap(), LineType::CallStmt);
        assert!(matches!(
            classify_line_type(&f, 2, &p),
            Err(LexError::NoTokens { line: 2, .. })
        ));
        assert!(classify_line_type(&f, 3, &p).is_err());
    }

    #[test]
    fn line_type_names_round_trip() {
        for t in LineType::ALL {
            assert_eq!(t.as_str().parse::<LineType>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{t}\""));
        }
    }

    /// Hand-labeled fixture; the heuristic must agree on at least 90% of lines.
    #[test]
    fn hand_labeled_fixture_agreement() {
        use LineType::*;
        let labeled: &[(&str, LineType)] = &[
            ("package org.example.net;", PackageDecl),
            ("import java.io.IOException;", ImportDecl),
            ("import java.util.*;", ImportDecl),
            ("@SuppressWarnings(\"unchecked\")", Annotation),
            ("public final class Channel extends Base implements Closeable {", ClassDecl),
            ("private static final int LIMIT = 64;", FieldDecl),
            ("private final Map<String, List<Integer>> index = new HashMap<>();", FieldDecl),
            ("protected String name;", FieldDecl),
            ("public Channel(String name) {", MethodDecl),
            ("this.name = name;", Assignment),
            ("}", BraceOnly),
            ("@Override", Annotation),
            ("public void close() throws IOException {", MethodDecl),
            ("if (closed) {", IfStmt),
            ("return;", ReturnStmt),
            ("} else if (pending > 0) {", IfStmt),
            ("flush();", CallStmt),
            ("} else {", IfStmt),
            ("closed = true;", Assignment),
            ("}", BraceOnly),
            ("for (int i = 0; i < LIMIT; i++) {", ForStmt),
            ("buffer[i] = 0;", Assignment),
            ("}", BraceOnly),
            ("while (it.hasNext()) {", WhileStmt),
            ("Object o = it.next();", VariableDecl),
            ("it.remove();", CallStmt),
            ("}", BraceOnly),
            ("try {", TryStmt),
            ("stream.write(data, 0, len);", CallStmt),
            ("} catch (IOException e) {", CatchClause),
            ("throw new IllegalStateException(e);", ThrowStmt),
            ("} finally {", TryStmt),
            ("lock.unlock();", CallStmt),
            ("}", BraceOnly),
            ("switch (state) {", SwitchCase),
            ("case OPEN:", SwitchCase),
            ("count++;", Assignment),
            ("break;", Other),
            ("default:", SwitchCase),
            ("});", BraceOnly),
            ("int total = a + b;", VariableDecl),
            ("String[] parts = line.split(\",\");", VariableDecl),
            ("List<String> names = new ArrayList<>();", VariableDecl),
            ("private int computeSize(List<String> xs) {", MethodDecl),
            ("abstract void reset();", MethodDecl),
            ("System.out.println(\"done\");", CallStmt),
            ("total += size();", Assignment),
            ("interface Listener {", ClassDecl),
            ("do {", WhileStmt),
            ("return total;", ReturnStmt),
        ];
        assert_eq!(labeled.len(), 50);
        let src: String = labeled.iter().map(|(l, _)| format!("{l}\n")).collect();
        let f = java(&src);
        let agree = labeled
            .iter()
            .enumerate()
            .filter(|(i, (_, want))| f.line_types.get(&(*i as u32 + 1)) == Some(want))
            .count();
        let misses: Vec<_> = labeled
            .iter()
            .enumerate()
            .filter(|(i, (_, want))| f.line_types.get(&(*i as u32 + 1)) != Some(want))
            .map(|(i, (l, want))| (l, want, f.line_types.get(&(i as u32 + 1))))
            .collect();
        assert!(agree * 10 >= 9 * labeled.len(), "agreement {agree}/50, misses {misses:?}");
    }

    #[test]
    fn profile_toml_round_trip() {
        let p = LanguageProfile::java();
        let text = toml::to_string(&p).unwrap();
        assert_eq!(LanguageProfile::from_toml_str(&text).unwrap(), p);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn java_line() -> impl Strategy<Value = String> {
            prop::sample::select(vec![
                "int x = 1;",
                "foo.bar(a, \"s t\");",
                "if (a >= b) {",
                "}",
                "return y;",
                "String s = \"// x\";",
                "char c = '\\'';",
                "list.add(3.5e2);",
                "",
                "   ",
            ])
            .prop_map(str::to_string)
        }

        fn comment() -> impl Strategy<Value = String> {
            prop::sample::select(vec!["// note", "/* inline */", "/* multi\nline */", "//"])
                .prop_map(str::to_string)
        }

        proptest! {
            #[test]
            fn lexemes_occur_on_their_line(lines in prop::collection::vec(java_line(), 0..20)) {
                let src = lines.join("\n");
                let f = java(&src);
                let raw: Vec<&str> = src.lines().collect();
                let mut prev = 0;
                for t in &f.tokens {
                    prop_assert!(!t.text.is_empty() && !t.text.contains('\n'));
                    prop_assert!(t.line >= prev);
                    prev = t.line;
                    prop_assert!(t.line <= f.line_count);
                    prop_assert!(raw[t.line as usize - 1].contains(&t.text));
                    prop_assert!(f.line_types.contains_key(&t.line));
                }
            }

            #[test]
            fn comments_are_invisible(
                lines in prop::collection::vec(java_line(), 1..15),
                at in 0usize..15,
                c in comment(),
            ) {
                let base = lines.join("\n");
                let f0 = java(&base);
                let mut with = lines.clone();
                let at = at.min(with.len());
                // Appending a comment at the end of a line must not move any token.
                let extra_lines = c.matches('\n').count() as u32;
                if at < with.len() {
                    with[at] = format!("{} {}", with[at], c);
                }
                let f1 = java(&with.join("\n"));
                let shift = |l: u32| if l > at as u32 + 1 { l + extra_lines } else { l };
                let moved: Vec<_> = f0.tokens.iter().map(|t| (t.text.clone(), shift(t.line))).collect();
                let got: Vec<_> = f1.tokens.iter().map(|t| (t.text.clone(), t.line)).collect();
                prop_assert_eq!(moved, got);
                for (l, ty) in &f0.line_types {
                    prop_assert_eq!(f1.line_types.get(&shift(*l)), Some(ty));
                }
            }

            #[test]
            fn tokenize_is_deterministic(lines in prop::collection::vec(java_line(), 0..10)) {
                let src = lines.join("\n");
                prop_assert_eq!(java(&src), java(&src));
            }
        }
    }
}
