use std::fmt;

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Or,
    And,
    Gt,
    Lt,
    Ge,
    Le,
    Eq,
    Ne,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Gt => ">",
            BinOp::Lt => "<",
            BinOp::Ge => ">=",
            BinOp::Le => "<=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Gt | BinOp::Lt | BinOp::Ge | BinOp::Le | BinOp::Eq | BinOp::Ne
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

/// How a builtin argument position must be supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgKind {
    /// Any numeric expression.
    Series,
    /// Integer literal in `1..=MAX_WINDOW`.
    Window,
    /// Real literal in `(0, 1]`.
    Alpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Abs,
    Clip,
    Mean,
    Std,
    Rmin,
    Rmax,
    Lag,
    Delta,
    Ewma,
    Zscore,
}

impl Builtin {
    pub const ALL: [Builtin; 10] = [
        Builtin::Abs,
        Builtin::Clip,
        Builtin::Mean,
        Builtin::Std,
        Builtin::Rmin,
        Builtin::Rmax,
        Builtin::Lag,
        Builtin::Delta,
        Builtin::Ewma,
        Builtin::Zscore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Abs => "abs",
            Builtin::Clip => "clip",
            Builtin::Mean => "mean",
            Builtin::Std => "std",
            Builtin::Rmin => "rmin",
            Builtin::Rmax => "rmax",
            Builtin::Lag => "lag",
            Builtin::Delta => "delta",
            Builtin::Ewma => "ewma",
            Builtin::Zscore => "zscore",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn signature(self) -> &'static [ArgKind] {
        use ArgKind::*;
        match self {
            Builtin::Abs => &[Series],
            Builtin::Clip => &[Series, Series, Series],
            Builtin::Mean
            | Builtin::Std
            | Builtin::Rmin
            | Builtin::Rmax
            | Builtin::Lag
            | Builtin::Delta
            | Builtin::Zscore => &[Series, Window],
            Builtin::Ewma => &[Series, Alpha],
        }
    }
}

/// Expression node. Equality is structural and ignores source spans.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Number(f64),
    Feature(String),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Expr {
    pub fn new(kind: ExprKind) -> Self {
        Self {
            kind,
            span: Span::default(),
        }
    }

    pub fn at(kind: ExprKind, span: Span) -> Self {
        Self { kind, span }
    }

    pub fn node_count(&self) -> usize {
        1 + match &self.kind {
            ExprKind::Number(_) | ExprKind::Feature(_) | ExprKind::Var(_) => 0,
            ExprKind::Unary(_, e) => e.node_count(),
            ExprKind::Binary(_, l, r) => l.node_count() + r.node_count(),
            ExprKind::Call(_, args) => args.iter().map(Expr::node_count).sum(),
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Unary(_, e) => e.walk(f),
            ExprKind::Binary(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            ExprKind::Call(_, args) => args.iter().for_each(|a| a.walk(f)),
            _ => {}
        }
    }
}

#[derive(Debug, Clone)]
pub struct Binding {
    pub name: String,
    pub value: Expr,
    pub span: Span,
}

impl PartialEq for Binding {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.value == other.value
    }
}

/// A parsed rule program: named bindings followed by one result expression.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleAst {
    pub bindings: Vec<Binding>,
    pub result: Expr,
    pub node_count: usize,
}

impl RuleAst {
    pub fn new(bindings: Vec<Binding>, result: Expr) -> Self {
        let node_count =
            bindings.iter().map(|b| b.value.node_count()).sum::<usize>() + result.node_count();
        Self {
            bindings,
            result,
            node_count,
        }
    }

    fn exprs(&self) -> impl Iterator<Item = &Expr> {
        self.bindings.iter().map(|b| &b.value).chain(std::iter::once(&self.result))
    }

    /// Feature names referenced with `$`, in order of first appearance.
    pub fn referenced_features(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in self.exprs() {
            e.walk(&mut |node| {
                if let ExprKind::Feature(name) = &node.kind {
                    if !out.iter().any(|n| n == name) {
                        out.push(name.clone());
                    }
                }
            });
        }
        out
    }

    /// Largest window/lag literal in the program, or 1 when there is none.
    pub fn max_window(&self) -> usize {
        let mut max = 1usize;
        for e in self.exprs() {
            e.walk(&mut |node| {
                if let ExprKind::Call(b, args) = &node.kind {
                    for (kind, arg) in b.signature().iter().zip(args) {
                        if let (ArgKind::Window, ExprKind::Number(v)) = (kind, &arg.kind) {
                            max = max.max(*v as usize);
                        }
                    }
                }
            });
        }
        max
    }
}
