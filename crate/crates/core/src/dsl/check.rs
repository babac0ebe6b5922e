use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::{DslError, DslErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesType {
    Numeric,
    Boolean,
}

impl SeriesType {
    fn name(self) -> &'static str {
        match self {
            SeriesType::Numeric => "numeric-series",
            SeriesType::Boolean => "boolean-series",
        }
    }
}

/// A rule that has passed static checking against a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedRule {
    ast: RuleAst,
    binding_types: Vec<SeriesType>,
    result_type: SeriesType,
    features: Vec<String>,
}

impl TypedRule {
    pub fn ast(&self) -> &RuleAst {
        &self.ast
    }

    pub fn result_type(&self) -> SeriesType {
        self.result_type
    }

    pub fn binding_types(&self) -> &[SeriesType] {
        &self.binding_types
    }

    /// Features referenced by the rule, in order of first appearance.
    pub fn features(&self) -> &[String] {
        &self.features
    }
}

pub fn typecheck<'a, I>(ast: &RuleAst, features: I) -> Result<TypedRule, DslError>
where
    I: IntoIterator<Item = &'a str>,
{
    let known: HashSet<&str> = features.into_iter().collect();
    let mut env: HashMap<&str, SeriesType> = HashMap::new();
    let mut binding_types = Vec::with_capacity(ast.bindings.len());
    for b in &ast.bindings {
        let ty = infer(&b.value, &env, &known)?;
        env.insert(b.name.as_str(), ty);
        binding_types.push(ty);
    }
    let result_type = infer(&ast.result, &env, &known)?;
    Ok(TypedRule {
        ast: ast.clone(),
        binding_types,
        result_type,
        features: ast.referenced_features(),
    })
}

fn expect(e: &Expr, got: SeriesType, want: SeriesType, ctx: &str) -> Result<(), DslError> {
    if got == want {
        Ok(())
    } else {
        Err(DslError::new(
            DslErrorKind::TypeMismatch,
            e.span,
            format!("{ctx} expects {}, found {}", want.name(), got.name()),
        ))
    }
}

fn is_literal_zero(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Number(v) => *v == 0.0,
        ExprKind::Unary(UnaryOp::Neg, inner) => is_literal_zero(inner),
        _ => false,
    }
}

fn infer(
    e: &Expr,
    env: &HashMap<&str, SeriesType>,
    known: &HashSet<&str>,
) -> Result<SeriesType, DslError> {
    use SeriesType::*;
    match &e.kind {
        ExprKind::Number(_) => Ok(Numeric),
        ExprKind::Feature(name) => {
            if known.contains(name.as_str()) {
                Ok(Numeric)
            } else {
                Err(DslError::new(
                    DslErrorKind::UnknownFeature,
                    e.span,
                    format!("unknown feature `{name}`"),
                ))
            }
        }
        ExprKind::Var(name) => env.get(name.as_str()).copied().ok_or_else(|| {
            DslError::new(
                DslErrorKind::UnboundIdentifier,
                e.span,
                format!("`{name}` is not bound"),
            )
        }),
        ExprKind::Unary(UnaryOp::Neg, inner) => {
            let t = infer(inner, env, known)?;
            expect(inner, t, Numeric, "`-`")?;
            Ok(Numeric)
        }
        ExprKind::Unary(UnaryOp::Not, inner) => {
            let t = infer(inner, env, known)?;
            expect(inner, t, Boolean, "`not`")?;
            Ok(Boolean)
        }
        ExprKind::Binary(op, l, r) => {
            let lt = infer(l, env, known)?;
            let rt = infer(r, env, known)?;
            let ctx = format!("`{}`", op.symbol());
            if op.is_logical() {
                expect(l, lt, Boolean, &ctx)?;
                expect(r, rt, Boolean, &ctx)?;
                return Ok(Boolean);
            }
            expect(l, lt, Numeric, &ctx)?;
            expect(r, rt, Numeric, &ctx)?;
            if *op == BinOp::Div && is_literal_zero(r) {
                return Err(DslError::new(
                    DslErrorKind::DivisionByZero,
                    r.span,
                    "division by literal zero",
                ));
            }
            Ok(if op.is_comparison() { Boolean } else { Numeric })
        }
        ExprKind::Call(builtin, args) => {
            for (kind, arg) in builtin.signature().iter().zip(args) {
                if *kind == ArgKind::Series {
                    let t = infer(arg, env, known)?;
                    expect(arg, t, Numeric, &format!("`{}`", builtin.name()))?;
                }
            }
            Ok(Numeric)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn check(src: &str, feats: &[&str]) -> Result<TypedRule, DslError> {
        typecheck(&parse(src).unwrap(), feats.iter().copied())
    }

    #[test]
    fn boolean_result() {
        let r = check("return $zone_temp > 30", &["zone_temp"]).unwrap();
        assert_eq!(r.result_type(), SeriesType::Boolean);
    }

    #[test]
    fn numeric_result_is_accepted() {
        let r = check("return zscore($zone_temp, 60)", &["zone_temp"]).unwrap();
        assert_eq!(r.result_type(), SeriesType::Numeric);
    }

    #[test]
    fn unknown_feature() {
        let err = check("return $ghost > 1", &["zone_temp"]).unwrap_err();
        assert_eq!(err.kind, DslErrorKind::UnknownFeature);
        assert!(err.message.contains("ghost"));
    }

    #[test]
    fn boolean_in_arithmetic() {
        let err = check("return ($a > 1) + 2", &["a"]).unwrap_err();
        assert_eq!(err.kind, DslErrorKind::TypeMismatch);
        assert_eq!((err.span.line, err.span.col), (1, 9));
    }

    #[test]
    fn logical_operators_need_booleans() {
        assert_eq!(check("return $a and $a > 1", &["a"]).unwrap_err().kind, DslErrorKind::TypeMismatch);
        assert_eq!(check("return not $a", &["a"]).unwrap_err().kind, DslErrorKind::TypeMismatch);
        assert_eq!(
            check("b = $a > 1\nreturn mean(b, 3)", &["a"]).unwrap_err().kind,
            DslErrorKind::TypeMismatch
        );
        assert_eq!(
            check("b = $a > 1\nreturn b == 1", &["a"]).unwrap_err().kind,
            DslErrorKind::TypeMismatch
        );
        let r = check("b = $a > 1\nreturn b or not b", &["a"]).unwrap();
        assert_eq!(r.binding_types(), &[SeriesType::Boolean]);
    }

    #[test]
    fn literal_zero_divisor() {
        assert_eq!(check("return $a / 0 > 1", &["a"]).unwrap_err().kind, DslErrorKind::DivisionByZero);
        assert_eq!(check("return $a / -0.0 > 1", &["a"]).unwrap_err().kind, DslErrorKind::DivisionByZero);
        assert!(check("return $a / (1 - 1) > 1", &["a"]).is_ok());
    }
}
