use std::fmt::Write;

use super::ast::*;

// Binding strength of each grammar level, loosest first.
const OR: u8 = 1;
const AND: u8 = 2;
const NOT: u8 = 3;
const CMP: u8 = 4;
const ADD: u8 = 5;
const MUL: u8 = 6;
const UNARY: u8 = 7;
const PRIMARY: u8 = 8;

fn level(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, _, _) => match op {
            BinOp::Or => OR,
            BinOp::And => AND,
            BinOp::Add | BinOp::Sub => ADD,
            BinOp::Mul | BinOp::Div => MUL,
            _ => CMP,
        },
        ExprKind::Unary(UnaryOp::Not, _) => NOT,
        ExprKind::Unary(UnaryOp::Neg, _) => UNARY,
        _ => PRIMARY,
    }
}

/// Canonical source text: one binding per line, then the `return` line.
pub fn format(ast: &RuleAst) -> String {
    let mut out = String::new();
    for b in &ast.bindings {
        let _ = writeln!(out, "{} = {}", b.name, format_expr(&b.value));
    }
    out.push_str("return ");
    out.push_str(&format_expr(&ast.result));
    out
}

pub fn format_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, OR);
    out
}

fn write_expr(out: &mut String, e: &Expr, min_level: u8) {
    let wrap = level(e) < min_level;
    if wrap {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Number(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Feature(name) => {
            out.push('$');
            out.push_str(name);
        }
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::Unary(UnaryOp::Neg, inner) => {
            out.push('-');
            write_expr(out, inner, PRIMARY);
        }
        ExprKind::Unary(UnaryOp::Not, inner) => {
            out.push_str("not ");
            write_expr(out, inner, CMP);
        }
        ExprKind::Binary(op, l, r) => {
            let p = level(e);
            let (lmin, rmin) = if p == CMP { (ADD, ADD) } else { (p, p + 1) };
            write_expr(out, l, lmin);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, r, rmin);
        }
        ExprKind::Call(b, args) => {
            out.push_str(b.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, OR);
            }
            out.push(')');
        }
    }
    if wrap {
        out.push(')');
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn canon(src: &str) -> String {
        format(&parse(src).unwrap())
    }

    #[test]
    fn canonical_spacing() {
        assert_eq!(canon("return $x>30"), "return $x > 30");
        assert_eq!(
            canon("d=delta($zone_temp,5);return abs(d)>2 and $fan_status==1"),
            "d = delta($zone_temp, 5)\nreturn abs(d) > 2 and $fan_status == 1"
        );
    }

    #[test]
    fn parentheses_only_where_needed() {
        assert_eq!(canon("return (($a + $b)) * 2"), "return ($a + $b) * 2");
        assert_eq!(canon("return $a - ($b - $c)"), "return $a - ($b - $c)");
        assert_eq!(canon("return ($a - $b) - $c"), "return $a - $b - $c");
        assert_eq!(canon("return -(-$a)"), "return -(-$a)");
        assert_eq!(canon("return not (not ($a > 1))"), "return not (not $a > 1)");
        assert_eq!(canon("return ($a > 1) == ($b > 1)"), "return ($a > 1) == ($b > 1)");
        assert_eq!(canon("return $a > 1 and ($b > 1 or $c > 1)"), "return $a > 1 and ($b > 1 or $c > 1)");
        assert_eq!(canon("return 0.000000001 + 1e3"), "return 0.000000001 + 1000");
    }

    #[test]
    fn reparse_is_structurally_equal() {
        for src in [
            "a = mean($x, 5)\nb = a > 3 or not $y < 1\nreturn b and -$z * -2 >= clip($x, 0, 1)",
            "return ewma($x, 0.25) / (std($x, 10) + 0.5)",
            "return not (($a > 1) > 0)",
        ] {
            let ast = parse(src).unwrap();
            assert_eq!(parse(&format(&ast)).unwrap(), ast, "{src}");
        }
    }
}
