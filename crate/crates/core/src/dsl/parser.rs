use std::collections::HashSet;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{DslError, DslErrorKind, MAX_BINDINGS, MAX_NODES, MAX_SOURCE_BYTES, MAX_WINDOW};

// Parenthesis nesting guard; the node cap alone does not bound recursion
// because parentheses produce no nodes.
const MAX_DEPTH: usize = 128;

pub fn parse(source: &str) -> Result<RuleAst, DslError> {
    if source.len() > MAX_SOURCE_BYTES {
        return Err(DslError::new(
            DslErrorKind::LimitExceeded,
            Span { line: 1, col: 1 },
            format!(
                "source is {} bytes, limit is {MAX_SOURCE_BYTES}",
                source.len()
            ),
        ));
    }
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        bound: HashSet::new(),
        depth: 0,
    };
    let ast = p.program()?;
    if ast.node_count > MAX_NODES {
        return Err(DslError::new(
            DslErrorKind::LimitExceeded,
            ast.result.span,
            format!("rule has {} nodes, limit is {MAX_NODES}", ast.node_count),
        ));
    }
    Ok(ast)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    bound: HashSet<String>,
    depth: usize,
}

type PResult<T> = Result<T, DslError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(DslError::new(DslErrorKind::Syntax, self.peek().span, msg))
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<Token> {
        if self.peek().tok == tok {
            Ok(self.advance())
        } else {
            let found = self.peek().tok.describe();
            self.syntax(format!("expected {what}, found {found}"))
        }
    }

    fn program(&mut self) -> PResult<RuleAst> {
        let mut bindings = Vec::new();
        loop {
            match (&self.peek().tok, self.peek_at(1)) {
                (Tok::Return, _) => break,
                (Tok::Ident(_), Tok::Assign) => {
                    let b = self.binding()?;
                    if bindings.len() == MAX_BINDINGS {
                        return Err(DslError::new(
                            DslErrorKind::LimitExceeded,
                            b.span,
                            format!("more than {MAX_BINDINGS} bindings"),
                        ));
                    }
                    bindings.push(b);
                }
                (Tok::Eof, _) => return self.syntax("expected `return` before end of input"),
                (other, _) => {
                    let found = other.describe();
                    return self.syntax(format!("expected a binding or `return`, found {found}"));
                }
            }
        }
        self.advance();
        let result = self.expr()?;
        if self.peek().tok == Tok::Semi {
            self.advance();
        }
        if self.peek().tok != Tok::Eof {
            let found = self.peek().tok.describe();
            return self.syntax(format!("unexpected {found} after return expression"));
        }
        Ok(RuleAst::new(bindings, result))
    }

    fn binding(&mut self) -> PResult<Binding> {
        let name_tok = self.advance();
        let Tok::Ident(name) = name_tok.tok else {
            unreachable!("binding() is only entered on an identifier")
        };
        self.advance(); // `=`
        if self.bound.contains(&name) {
            return Err(DslError::new(
                DslErrorKind::Rebinding,
                name_tok.span,
                format!("`{name}` is already bound"),
            ));
        }
        let value = self.expr()?;
        match &self.peek().tok {
            Tok::Semi => {
                self.advance();
            }
            _ if self.peek().newline_before => {}
            other => {
                let found = other.describe();
                return self.syntax(format!(
                    "expected `;` or a line break after binding `{name}`, found {found}"
                ));
            }
        }
        self.bound.insert(name.clone());
        Ok(Binding {
            name,
            value,
            span: name_tok.span,
        })
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.or()
    }

    fn or(&mut self) -> PResult<Expr> {
        let mut lhs = self.and()?;
        while self.peek().tok == Tok::Or {
            self.advance();
            let rhs = self.and()?;
            let span = lhs.span;
            lhs = Expr::at(ExprKind::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<Expr> {
        let mut lhs = self.not()?;
        while self.peek().tok == Tok::And {
            self.advance();
            let rhs = self.not()?;
            let span = lhs.span;
            lhs = Expr::at(ExprKind::Binary(BinOp::And, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn not(&mut self) -> PResult<Expr> {
        if self.peek().tok == Tok::Not {
            let span = self.advance().span;
            let inner = self.cmp()?;
            return Ok(Expr::at(ExprKind::Unary(UnaryOp::Not, Box::new(inner)), span));
        }
        self.cmp()
    }

    fn cmp_op(tok: &Tok) -> Option<BinOp> {
        Some(match tok {
            Tok::Gt => BinOp::Gt,
            Tok::Lt => BinOp::Lt,
            Tok::Ge => BinOp::Ge,
            Tok::Le => BinOp::Le,
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            _ => return None,
        })
    }

    fn cmp(&mut self) -> PResult<Expr> {
        let lhs = self.add()?;
        let Some(op) = Self::cmp_op(&self.peek().tok) else {
            return Ok(lhs);
        };
        self.advance();
        let span = lhs.span;
        let rhs = self.add()?;
        if Self::cmp_op(&self.peek().tok).is_some() {
            return self.syntax("comparisons do not chain; use `and` or parentheses");
        }
        Ok(Expr::at(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span))
    }

    fn add(&mut self) -> PResult<Expr> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.mul()?;
            let span = lhs.span;
            lhs = Expr::at(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn mul(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary()?;
            let span = lhs.span;
            lhs = Expr::at(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.peek().tok == Tok::Minus {
            let span = self.advance().span;
            let inner = self.primary()?;
            return Ok(Expr::at(ExprKind::Unary(UnaryOp::Neg, Box::new(inner)), span));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let tok = self.advance();
        let span = tok.span;
        match tok.tok {
            Tok::Number(v) => Ok(Expr::at(ExprKind::Number(v), span)),
            Tok::Feature(name) => Ok(Expr::at(ExprKind::Feature(name), span)),
            Tok::Ident(name) if self.peek().tok == Tok::LParen => self.call(name, span),
            Tok::Ident(name) => {
                if !self.bound.contains(&name) {
                    return Err(DslError::new(
                        DslErrorKind::UnboundIdentifier,
                        span,
                        format!("`{name}` is not bound (features are written `${name}`)"),
                    ));
                }
                Ok(Expr::at(ExprKind::Var(name), span))
            }
            Tok::LParen => {
                self.depth += 1;
                if self.depth > MAX_DEPTH {
                    return Err(DslError::new(
                        DslErrorKind::LimitExceeded,
                        span,
                        format!("parentheses nested deeper than {MAX_DEPTH}"),
                    ));
                }
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                self.depth -= 1;
                Ok(inner)
            }
            other => Err(DslError::new(
                DslErrorKind::Syntax,
                span,
                format!("expected an expression, found {}", other.describe()),
            )),
        }
    }

    fn call(&mut self, name: String, span: Span) -> PResult<Expr> {
        let Some(builtin) = Builtin::from_name(&name) else {
            return Err(DslError::new(
                DslErrorKind::UnknownBuiltin,
                span,
                format!("unknown builtin `{name}`"),
            ));
        };
        self.advance(); // `(`
        self.depth += 1;
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                args.push(self.expr()?);
                if self.peek().tok == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        self.depth -= 1;

        let sig = builtin.signature();
        if args.len() != sig.len() {
            return Err(DslError::new(
                DslErrorKind::Syntax,
                span,
                format!(
                    "`{name}` takes {} argument(s), got {}",
                    sig.len(),
                    args.len()
                ),
            ));
        }
        for (kind, arg) in sig.iter().zip(&args) {
            check_literal_arg(builtin, *kind, arg)?;
        }
        Ok(Expr::at(ExprKind::Call(builtin, args), span))
    }
}

fn check_literal_arg(builtin: Builtin, kind: ArgKind, arg: &Expr) -> PResult<()> {
    let name = builtin.name();
    match kind {
        ArgKind::Series => Ok(()),
        ArgKind::Window => {
            let ExprKind::Number(v) = arg.kind else {
                return Err(DslError::new(
                    DslErrorKind::NonLiteralArgument,
                    arg.span,
                    format!("window of `{name}` must be an integer literal"),
                ));
            };
            if v.fract() != 0.0 || !(1.0..=MAX_WINDOW as f64).contains(&v) {
                return Err(DslError::new(
                    DslErrorKind::ArgumentOutOfRange,
                    arg.span,
                    format!("window of `{name}` must be an integer in 1..={MAX_WINDOW}, got {v}"),
                ));
            }
            Ok(())
        }
        ArgKind::Alpha => {
            let ExprKind::Number(v) = arg.kind else {
                return Err(DslError::new(
                    DslErrorKind::NonLiteralArgument,
                    arg.span,
                    format!("smoothing factor of `{name}` must be a real literal"),
                ));
            };
            if !(v > 0.0 && v <= 1.0) {
                return Err(DslError::new(
                    DslErrorKind::ArgumentOutOfRange,
                    arg.span,
                    format!("smoothing factor of `{name}` must lie in (0, 1], got {v}"),
                ));
            }
            Ok(())
        }
    }
}
