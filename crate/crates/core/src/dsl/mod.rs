//! A small, total expression language for anomaly rules.
//!
//! ```text
//! program := { binding } "return" expr
//! binding := IDENT "=" expr (";" | newline)
//! expr    := or ;  or := and { "or" and } ;  and := not { "and" not }
//! not     := [ "not" ] cmp
//! cmp     := add [ ( ">" | "<" | ">=" | "<=" | "==" | "!=" ) add ]
//! add     := mul { ( "+" | "-" ) mul } ;  mul := unary { ( "*" | "/" ) unary }
//! unary   := [ "-" ] primary
//! primary := NUMBER | "$" IDENT | IDENT | call | "(" expr ")"
//! call    := IDENT "(" [ expr { "," expr } ] ")"
//! ```
//!
//! Builtins: `abs(x)`, `clip(x, lo, hi)`, `mean(x, w)`, `std(x, w)`,
//! `rmin(x, w)`, `rmax(x, w)`, `lag(x, k)`, `delta(x, k)`, `ewma(x, a)`,
//! `zscore(x, w)`. Windows and lags are integer literals in `1..=1024`;
//! `a` is a real literal in `(0, 1]`. Windowed builtins look at the trailing
//! window and use the available prefix near the start of the series.
//!
//! Programs are capped at 512 nodes and 32 bindings, and evaluation refuses
//! rules whose `nodes * rows * max_window` exceeds 2^28.

mod ast;
mod check;
mod eval;
mod format;
mod lexer;
mod parser;

use std::fmt;

pub use ast::{ArgKind, BinOp, Binding, Builtin, Expr, ExprKind, RuleAst, Span, UnaryOp};
pub use check::{typecheck, SeriesType, TypedRule};
pub use eval::{budget_cost, evaluate, to_flags, EvalError, ScoreSeries};
pub use format::{format, format_expr};
pub use parser::parse;

pub(crate) use eval::{mean as window_mean, std_pop as window_std};

pub const MAX_SOURCE_BYTES: usize = 16 * 1024;
pub const MAX_NODES: usize = 512;
pub const MAX_BINDINGS: usize = 32;
pub const MAX_WINDOW: usize = 1024;
pub const EVAL_BUDGET: u128 = 1 << 28;

/// Default decision threshold for [`to_flags`].
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DslErrorKind {
    Syntax,
    UnknownBuiltin,
    NonLiteralArgument,
    ArgumentOutOfRange,
    LimitExceeded,
    UnboundIdentifier,
    Rebinding,
    UnknownFeature,
    TypeMismatch,
    DivisionByZero,
}

/// A located diagnostic. Displays as `LINE:COL: message`.
#[derive(Debug, Clone, PartialEq)]
pub struct DslError {
    pub kind: DslErrorKind,
    pub span: Span,
    pub message: String,
}

impl DslError {
    pub fn new(kind: DslErrorKind, span: Span, message: impl Into<String>) -> Self {
        Self {
            kind,
            span,
            message: message.into(),
        }
    }
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.span.line, self.span.col, self.message)
    }
}

impl std::error::Error for DslError {}

/// Parses and typechecks in one step.
pub fn compile<'a, I>(source: &str, features: I) -> Result<TypedRule, DslError>
where
    I: IntoIterator<Item = &'a str>,
{
    typecheck(&parse(source)?, features)
}
