use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub const ARITHMETIC: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];
    pub const COMPARISON: [BinOp; 6] = [
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::Eq,
        BinOp::Ne,
    ];
    pub const LOGICAL: [BinOp; 2] = [BinOp::And, BinOp::Or];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }

    /// Operators of the same family, used by operator-swap mutation.
    pub fn family(self) -> &'static [BinOp] {
        match self.precedence() {
            1 | 2 => &Self::LOGICAL,
            4 => &Self::COMPARISON,
            _ => &Self::ARITHMETIC,
        }
    }
}

pub(crate) const PREC_NOT: u8 = 3;
pub(crate) const PREC_NEG: u8 = 7;

/// Untyped expression tree as written by the author. Names are resolved
/// against a context kind by validation.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Ident(String),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Let(String, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

impl Expr {
    /// Literal constructor that keeps literals non-negative, matching what
    /// the parser produces for `-x`.
    pub fn number(v: f64) -> Expr {
        if v.is_sign_negative() && v != 0.0 {
            Expr::Neg(Box::new(Expr::Num(-v)))
        } else {
            Expr::Num(v.abs())
        }
    }

    pub fn ident(name: impl Into<String>) -> Expr {
        Expr::Ident(name.into())
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn if_then_else(c: Expr, t: Expr, e: Expr) -> Expr {
        Expr::If(Box::new(c), Box::new(t), Box::new(e))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Num(_) | Expr::Ident(_) => vec![],
            Expr::Neg(a) | Expr::Not(a) => vec![a],
            Expr::Binary(_, a, b) | Expr::Let(_, a, b) => vec![a, b],
            Expr::If(a, b, c) => vec![a, b, c],
            Expr::Call(_, args) => args.iter().collect(),
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            Expr::Num(_) | Expr::Ident(_) => vec![],
            Expr::Neg(a) | Expr::Not(a) => vec![a],
            Expr::Binary(_, a, b) | Expr::Let(_, a, b) => vec![a, b],
            Expr::If(a, b, c) => vec![a, b, c],
            Expr::Call(_, args) => args.iter_mut().collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            n += 1;
            stack.extend(e.children());
        }
        n
    }

    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(self, 1usize)];
        while let Some((e, d)) = stack.pop() {
            max = max.max(d);
            stack.extend(e.children().into_iter().map(|c| (c, d + 1)));
        }
        max
    }

    /// Pre-order walk; `f` receives every node.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Returns the `index`-th node in pre-order.
    pub fn nth(&self, index: usize) -> Option<&Expr> {
        let mut stack = vec![self];
        let mut i = 0;
        while let Some(e) = stack.pop() {
            if i == index {
                return Some(e);
            }
            i += 1;
            stack.extend(e.children().into_iter().rev());
        }
        None
    }

    /// Mutable access to the `index`-th node in pre-order.
    pub fn nth_mut(&mut self, index: usize) -> Option<&mut Expr> {
        fn go<'a>(e: &'a mut Expr, index: usize, i: &mut usize) -> Option<&'a mut Expr> {
            if *i == index {
                return Some(e);
            }
            *i += 1;
            for c in e.children_mut() {
                if let Some(found) = go(c, index, i) {
                    return Some(found);
                }
            }
            None
        }
        go(self, index, &mut 0)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        super::printer::print(self, 0, &mut s);
        f.write_str(&s)
    }
}
