//! Naturalness-based line ranking for defect prediction: tokenizing, cache
//! n-gram scoring, type normalization, history mining and evaluation.

pub mod evaluator;
pub mod lexer;
pub mod lm;
pub mod miner;
pub mod normalizer;
pub mod scorer;

pub use lexer::{tokenize_file, LanguageProfile, LexError, LineType, Token, TokenKind, TokenizedFile};
pub use lm::{CacheConfig, LmError, NgramTable, Sym};
pub use normalizer::{BugWeightTable, NormError, TypeStats};
pub use scorer::{LineScore, ScoreError, ScoringConfig};
pub use miner::{CommitRecord, FileChange, LineSets, MineError};
pub use evaluator::{CreditMode, EvalCurve, EvalError, LineId, Warning};
