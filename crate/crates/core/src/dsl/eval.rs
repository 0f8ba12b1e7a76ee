use std::collections::HashMap;

use super::ast::{BinOp, Expr};
use super::{ContextKind, Feature, Stat};

/// Magnitude at which arithmetic saturates.
pub const SATURATION: f64 = 1e308;

/// Supplies feature values and callable bindings to an evaluation.
pub trait FeatureSource {
    fn feature(&self, f: Feature) -> f64;

    fn percentile(&self, _stat: Stat, _p: f64) -> f64 {
        0.0
    }

    /// `(count_at_eviction, age_at_eviction)` of the scored object's most
    /// recent eviction record, if one is retained.
    fn ghost_record(&self) -> Option<(f64, f64)> {
        None
    }

    fn is_full(&self, _queue: i64) -> bool {
        false
    }
}

/// Table-driven context, mostly for tests and fuzzing.
#[derive(Clone, Debug, Default)]
pub struct MapContext {
    pub features: HashMap<Feature, f64>,
    pub percentiles: Vec<(Stat, f64, f64)>,
    pub ghost: Option<(f64, f64)>,
    pub full: Vec<bool>,
}

impl FeatureSource for MapContext {
    fn feature(&self, f: Feature) -> f64 {
        self.features.get(&f).copied().unwrap_or(0.0)
    }

    fn percentile(&self, stat: Stat, p: f64) -> f64 {
        self.percentiles
            .iter()
            .find(|(s, q, _)| *s == stat && *q == p)
            .map_or(0.0, |(_, _, v)| *v)
    }

    fn ghost_record(&self) -> Option<(f64, f64)> {
        self.ghost
    }

    fn is_full(&self, queue: i64) -> bool {
        usize::try_from(queue)
            .ok()
            .and_then(|q| self.full.get(q))
            .copied()
            .unwrap_or(false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Builtin1 {
    Abs,
    Floor,
    Log,
    Exp,
}

/// Resolved program: names bound to features, locals bound to stack slots.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Node {
    Const(f64),
    Feature(Feature),
    Local(usize),
    Neg(Box<Node>),
    Not(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    If(Box<Node>, Box<Node>, Box<Node>),
    Let(Box<Node>, Box<Node>),
    Call1(Builtin1, Box<Node>),
    Min(Vec<Node>),
    Max(Vec<Node>),
    Pow(Box<Node>, Box<Node>),
    Clamp(Box<Node>, Box<Node>, Box<Node>),
    Percentile(Stat, Box<Node>),
    GhostContains,
    GhostCount,
    GhostAge,
    IsFull(Box<Node>),
}

impl Node {
    pub(crate) fn visit_features(&self, f: &mut impl FnMut(Feature)) {
        match self {
            Node::Feature(x) => f(*x),
            Node::Const(_)
            | Node::Local(_)
            | Node::GhostContains
            | Node::GhostCount
            | Node::GhostAge => {}
            Node::Neg(a)
            | Node::Not(a)
            | Node::Call1(_, a)
            | Node::Percentile(_, a)
            | Node::IsFull(a) => a.visit_features(f),
            Node::Bin(_, a, b) | Node::Let(a, b) | Node::Pow(a, b) => {
                a.visit_features(f);
                b.visit_features(f);
            }
            Node::If(a, b, c) | Node::Clamp(a, b, c) => {
                a.visit_features(f);
                b.visit_features(f);
                c.visit_features(f);
            }
            Node::Min(xs) | Node::Max(xs) => xs.iter().for_each(|x| x.visit_features(f)),
        }
    }
}

/// Resolves a validated tree. Panics on unbound names, which validation rules out.
pub(crate) fn resolve(e: &Expr, kind: ContextKind, scope: &mut Vec<String>) -> Node {
    let r = |x: &Expr, scope: &mut Vec<String>| Box::new(resolve(x, kind, scope));
    match e {
        Expr::Num(v) => Node::Const(fin(*v)),
        Expr::Ident(name) => match scope.iter().rposition(|s| s == name) {
            Some(slot) => Node::Local(slot),
            None => Node::Feature(kind.feature(name).expect("validated identifier")),
        },
        Expr::Neg(a) => Node::Neg(r(a, scope)),
        Expr::Not(a) => Node::Not(r(a, scope)),
        Expr::Binary(op, a, b) => Node::Bin(*op, r(a, scope), r(b, scope)),
        Expr::If(c, t, f) => Node::If(r(c, scope), r(t, scope), r(f, scope)),
        Expr::Let(name, v, body) => {
            let v = r(v, scope);
            scope.push(name.clone());
            let b = r(body, scope);
            scope.pop();
            Node::Let(v, b)
        }
        Expr::Call(name, args) => {
            let arg = |i: usize, scope: &mut Vec<String>| r(&args[i], scope);
            match name.as_str() {
                "abs" => Node::Call1(Builtin1::Abs, arg(0, scope)),
                "floor" => Node::Call1(Builtin1::Floor, arg(0, scope)),
                "log" => Node::Call1(Builtin1::Log, arg(0, scope)),
                "exp" => Node::Call1(Builtin1::Exp, arg(0, scope)),
                "pow" => Node::Pow(arg(0, scope), arg(1, scope)),
                "clamp" => Node::Clamp(arg(0, scope), arg(1, scope), arg(2, scope)),
                "min" => Node::Min(args.iter().map(|a| resolve(a, kind, scope)).collect()),
                "max" => Node::Max(args.iter().map(|a| resolve(a, kind, scope)).collect()),
                "percentile" => {
                    let stat = match &args[0] {
                        Expr::Ident(s) => super::Stat::from_name(s).expect("validated stat"),
                        _ => unreachable!("validated stat argument"),
                    };
                    Node::Percentile(stat, arg(1, scope))
                }
                "ghost_contains" => Node::GhostContains,
                "ghost_count" => Node::GhostCount,
                "ghost_age" => Node::GhostAge,
                "is_full" => Node::IsFull(arg(0, scope)),
                other => unreachable!("validated function {other}"),
            }
        }
    }
}

#[inline]
fn fin(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-SATURATION, SATURATION)
    }
}

#[inline]
fn truth(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn apply_bin(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => fin(a + b),
        BinOp::Sub => fin(a - b),
        BinOp::Mul => fin(a * b),
        BinOp::Div => {
            if b == 0.0 {
                0.0
            } else {
                fin(a / b)
            }
        }
        BinOp::Lt => truth(a < b),
        BinOp::Le => truth(a <= b),
        BinOp::Gt => truth(a > b),
        BinOp::Ge => truth(a >= b),
        BinOp::Eq => truth(a == b),
        BinOp::Ne => truth(a != b),
        BinOp::And => truth(a != 0.0 && b != 0.0),
        BinOp::Or => truth(a != 0.0 || b != 0.0),
    }
}

fn apply1(f: Builtin1, a: f64) -> f64 {
    match f {
        Builtin1::Abs => a.abs(),
        Builtin1::Floor => a.floor(),
        Builtin1::Log => {
            if a <= 0.0 {
                0.0
            } else {
                fin(a.ln())
            }
        }
        Builtin1::Exp => fin(a.exp()),
    }
}

fn clamp3(x: f64, lo: f64, hi: f64) -> f64 {
    x.min(hi).max(lo)
}

pub(crate) fn evaluate(code: &Node, ctx: &dyn FeatureSource) -> f64 {
    let mut locals = Vec::new();
    eval(code, ctx, &mut locals)
}

fn eval(n: &Node, ctx: &dyn FeatureSource, locals: &mut Vec<f64>) -> f64 {
    match n {
        Node::Const(v) => *v,
        Node::Feature(f) => fin(ctx.feature(*f)),
        Node::Local(slot) => locals[*slot],
        Node::Neg(a) => -eval(a, ctx, locals),
        Node::Not(a) => truth(eval(a, ctx, locals) == 0.0),
        Node::Bin(op @ BinOp::And, a, b) => {
            if eval(a, ctx, locals) == 0.0 {
                0.0
            } else {
                apply_bin(*op, 1.0, eval(b, ctx, locals))
            }
        }
        Node::Bin(op @ BinOp::Or, a, b) => {
            if eval(a, ctx, locals) != 0.0 {
                1.0
            } else {
                apply_bin(*op, 0.0, eval(b, ctx, locals))
            }
        }
        Node::Bin(op, a, b) => {
            let x = eval(a, ctx, locals);
            let y = eval(b, ctx, locals);
            apply_bin(*op, x, y)
        }
        Node::If(c, t, f) => {
            if eval(c, ctx, locals) != 0.0 {
                eval(t, ctx, locals)
            } else {
                eval(f, ctx, locals)
            }
        }
        Node::Let(v, body) => {
            let x = eval(v, ctx, locals);
            locals.push(x);
            let r = eval(body, ctx, locals);
            locals.pop();
            r
        }
        Node::Call1(f, a) => apply1(*f, eval(a, ctx, locals)),
        Node::Min(xs) => xs
            .iter()
            .map(|x| eval(x, ctx, locals))
            .fold(f64::INFINITY, f64::min),
        Node::Max(xs) => xs
            .iter()
            .map(|x| eval(x, ctx, locals))
            .fold(f64::NEG_INFINITY, f64::max),
        Node::Pow(a, b) => {
            let x = eval(a, ctx, locals);
            let y = eval(b, ctx, locals);
            fin(x.powf(y))
        }
        Node::Clamp(x, lo, hi) => {
            let x = eval(x, ctx, locals);
            let lo = eval(lo, ctx, locals);
            let hi = eval(hi, ctx, locals);
            clamp3(x, lo, hi)
        }
        Node::Percentile(stat, p) => {
            let p = eval(p, ctx, locals).clamp(0.0, 1.0);
            fin(ctx.percentile(*stat, p))
        }
        Node::GhostContains => truth(ctx.ghost_record().is_some()),
        Node::GhostCount => fin(ctx.ghost_record().map_or(0.0, |(c, _)| c)),
        Node::GhostAge => fin(ctx.ghost_record().map_or(0.0, |(_, a)| a)),
        Node::IsFull(q) => {
            let q = eval(q, ctx, locals).round();
            truth(q >= i64::MIN as f64 && q <= i64::MAX as f64 && ctx.is_full(q as i64))
        }
    }
}

/// Folds a subtree that reads no context and no locals.
pub(crate) fn constant_fold(e: &Expr) -> Option<f64> {
    Some(match e {
        Expr::Num(v) => *v,
        Expr::Ident(_) | Expr::Let(..) => return None,
        Expr::Neg(a) => -constant_fold(a)?,
        Expr::Not(a) => truth(constant_fold(a)? == 0.0),
        Expr::Binary(op, a, b) => apply_bin(*op, constant_fold(a)?, constant_fold(b)?),
        Expr::If(c, t, f) => {
            if constant_fold(c)? != 0.0 {
                constant_fold(t)?
            } else {
                constant_fold(f)?
            }
        }
        Expr::Call(name, args) => {
            let vals: Option<Vec<f64>> = args.iter().map(constant_fold).collect();
            let v = vals?;
            match (name.as_str(), v.as_slice()) {
                ("abs", [a]) => apply1(Builtin1::Abs, *a),
                ("floor", [a]) => apply1(Builtin1::Floor, *a),
                ("log", [a]) => apply1(Builtin1::Log, *a),
                ("exp", [a]) => apply1(Builtin1::Exp, *a),
                ("pow", [a, b]) => fin(a.powf(*b)),
                ("clamp", [x, lo, hi]) => clamp3(*x, *lo, *hi),
                ("min", xs) if !xs.is_empty() => xs.iter().copied().fold(f64::INFINITY, f64::min),
                ("max", xs) if !xs.is_empty() => {
                    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
                _ => return None,
            }
        }
    })
}
