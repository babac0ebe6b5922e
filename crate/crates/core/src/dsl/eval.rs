//! Interpreter. Every intermediate value is a full `T`-length series;
//! MISSING is carried as NaN internally and any non-finite result is
//! normalised to MISSING.

use std::collections::HashMap;

use thiserror::Error;

use super::ast::*;
use super::check::TypedRule;
use super::EVAL_BUDGET;
use crate::timeseries::TimeSeriesTable;

const ZSCORE_EPS: f64 = 1e-9;
const MISSING: f64 = f64::NAN;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("evaluation budget exceeded: {required} cell-ops > {limit}")]
    Budget { required: u128, limit: u128 },
    #[error("table has no column `{0}`")]
    MissingFeature(String),
}

/// Per-row scores; each element is a finite real or MISSING.
#[derive(Debug, Clone)]
pub struct ScoreSeries {
    values: Vec<f64>,
}

impl ScoreSeries {
    pub fn from_options(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        Self {
            values: values
                .into_iter()
                .map(|v| v.filter(|x| x.is_finite()).unwrap_or(MISSING))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, row: usize) -> Option<f64> {
        let v = self.values[row];
        (!v.is_nan()).then_some(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.values.iter().map(|&v| (!v.is_nan()).then_some(v))
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Scores with MISSING coerced to 0.0 (non-anomalous).
    pub fn coerced(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| if v.is_nan() { 0.0 } else { v })
            .collect()
    }

    /// Bitwise equality, MISSING included.
    pub fn bit_identical(&self, other: &ScoreSeries) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl PartialEq for ScoreSeries {
    fn eq(&self, other: &Self) -> bool {
        self.iter().eq(other.iter())
    }
}

/// Cell-operation estimate used for the budget check.
pub fn budget_cost(ast: &RuleAst, rows: usize) -> u128 {
    ast.node_count as u128 * rows as u128 * ast.max_window() as u128
}

pub fn evaluate(rule: &TypedRule, table: &TimeSeriesTable) -> Result<ScoreSeries, EvalError> {
    let ast = rule.ast();
    let required = budget_cost(ast, table.len());
    if required > EVAL_BUDGET {
        return Err(EvalError::Budget {
            required,
            limit: EVAL_BUDGET,
        });
    }
    let mut columns = HashMap::new();
    for name in rule.features() {
        let col = table
            .column(name)
            .ok_or_else(|| EvalError::MissingFeature(name.clone()))?;
        columns.insert(name.as_str(), col);
    }
    let mut interp = Interp {
        rows: table.len(),
        columns,
        vars: HashMap::new(),
    };
    for b in &ast.bindings {
        let v = interp.eval(&b.value);
        interp.vars.insert(b.name.as_str(), v);
    }
    let values = interp.eval(&ast.result);
    Ok(ScoreSeries { values })
}

struct Interp<'a> {
    rows: usize,
    columns: HashMap<&'a str, &'a [f64]>,
    vars: HashMap<&'a str, Vec<f64>>,
}

fn norm(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        MISSING
    }
}

fn truth(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn literal(e: &Expr) -> f64 {
    match e.kind {
        ExprKind::Number(v) => v,
        _ => unreachable!("literal arguments are enforced by the parser"),
    }
}

impl<'a> Interp<'a> {
    fn eval(&self, e: &'a Expr) -> Vec<f64> {
        match &e.kind {
            ExprKind::Number(v) => vec![*v; self.rows],
            ExprKind::Feature(name) => self.columns[name.as_str()].iter().map(|&v| norm(v)).collect(),
            ExprKind::Var(name) => self.vars[name.as_str()].clone(),
            ExprKind::Unary(UnaryOp::Neg, inner) => {
                self.eval(inner).into_iter().map(|v| -v).collect()
            }
            ExprKind::Unary(UnaryOp::Not, inner) => self
                .eval(inner)
                .into_iter()
                .map(|v| if v.is_nan() { MISSING } else { 1.0 - v })
                .collect(),
            ExprKind::Binary(op, l, r) => {
                let (a, b) = (self.eval(l), self.eval(r));
                a.into_iter().zip(b).map(|(x, y)| binary(*op, x, y)).collect()
            }
            ExprKind::Call(builtin, args) => self.call(*builtin, args),
        }
    }

    fn call(&self, builtin: Builtin, args: &'a [Expr]) -> Vec<f64> {
        let x = self.eval(&args[0]);
        match builtin {
            Builtin::Abs => x.into_iter().map(f64::abs).collect(),
            Builtin::Clip => {
                let lo = self.eval(&args[1]);
                let hi = self.eval(&args[2]);
                x.iter()
                    .zip(lo.iter().zip(&hi))
                    .map(|(&v, (&lo, &hi))| {
                        if v.is_nan() || lo.is_nan() || hi.is_nan() {
                            MISSING
                        } else {
                            v.max(lo).min(hi)
                        }
                    })
                    .collect()
            }
            Builtin::Mean => windowed(&x, literal(&args[1]) as usize, mean),
            Builtin::Std => windowed(&x, literal(&args[1]) as usize, |w| std_pop(w, mean(w))),
            Builtin::Rmin => windowed(&x, literal(&args[1]) as usize, |w| {
                w.iter().copied().fold(f64::INFINITY, f64::min)
            }),
            Builtin::Rmax => windowed(&x, literal(&args[1]) as usize, |w| {
                w.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }),
            Builtin::Zscore => {
                let w = literal(&args[1]) as usize;
                let stats = windowed(&x, w, |win| {
                    let m = mean(win);
                    let last = win[win.len() - 1];
                    (last - m) / (std_pop(win, m) + ZSCORE_EPS)
                });
                stats.into_iter().map(norm).collect()
            }
            Builtin::Lag => lag(&x, literal(&args[1]) as usize),
            Builtin::Delta => {
                let lagged = lag(&x, literal(&args[1]) as usize);
                x.iter().zip(lagged).map(|(&a, b)| norm(a - b)).collect()
            }
            Builtin::Ewma => ewma(&x, literal(&args[1])),
        }
    }
}

fn binary(op: BinOp, x: f64, y: f64) -> f64 {
    match op {
        BinOp::And => {
            if x == 0.0 || y == 0.0 {
                0.0
            } else if x.is_nan() || y.is_nan() {
                MISSING
            } else {
                1.0
            }
        }
        BinOp::Or => {
            if x == 1.0 || y == 1.0 {
                1.0
            } else if x.is_nan() || y.is_nan() {
                MISSING
            } else {
                0.0
            }
        }
        _ if x.is_nan() || y.is_nan() => MISSING,
        BinOp::Gt => truth(x > y),
        BinOp::Lt => truth(x < y),
        BinOp::Ge => truth(x >= y),
        BinOp::Le => truth(x <= y),
        BinOp::Eq => truth(x == y),
        BinOp::Ne => truth(x != y),
        BinOp::Add => norm(x + y),
        BinOp::Sub => norm(x - y),
        BinOp::Mul => norm(x * y),
        BinOp::Div => {
            if y == 0.0 {
                MISSING
            } else {
                norm(x / y)
            }
        }
    }
}

pub(crate) fn mean(w: &[f64]) -> f64 {
    w.iter().sum::<f64>() / w.len() as f64
}

pub(crate) fn std_pop(w: &[f64], m: f64) -> f64 {
    (w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / w.len() as f64).sqrt()
}

/// Trailing window `[t-w+1, t]`, clipped to the available prefix. Any MISSING
/// input inside the window makes the output MISSING.
fn windowed(x: &[f64], w: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut missing_in_window = 0usize;
    for t in 0..x.len() {
        if x[t].is_nan() {
            missing_in_window += 1;
        }
        let start = (t + 1).saturating_sub(w);
        if start > 0 && x[start - 1].is_nan() {
            missing_in_window -= 1;
        }
        out.push(if missing_in_window > 0 {
            MISSING
        } else {
            f(&x[start..=t])
        });
    }
    out
}

fn lag(x: &[f64], k: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| if t < k { MISSING } else { x[t - k] })
        .collect()
}

// MISSING inputs yield MISSING and leave the smoothing state untouched.
fn ewma(x: &[f64], alpha: f64) -> Vec<f64> {
    let mut state: Option<f64> = None;
    x.iter()
        .map(|&v| {
            if v.is_nan() {
                return MISSING;
            }
            let s = match state {
                None => v,
                Some(prev) => alpha * v + (1.0 - alpha) * prev,
            };
            state = Some(s);
            norm(s)
        })
        .collect()
}

/// `flag_t = 1` iff the (MISSING-coerced) score is strictly above `threshold`.
pub fn to_flags(scores: &ScoreSeries, threshold: f64) -> Vec<u8> {
    scores
        .coerced()
        .into_iter()
        .map(|s| u8::from(s > threshold))
        .collect()
}
