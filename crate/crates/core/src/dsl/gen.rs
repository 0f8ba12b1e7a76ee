//! Grammar-driven random programs and contexts, used for fuzzing and by the
//! mutation operators.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::ast::{BinOp, Expr};
use super::eval::MapContext;
use super::{ContextKind, Feature, Stat};

const INTERESTING: [f64; 12] = [
    0.0, 0.5, 1.0, 2.0, 3.0, 10.0, 100.0, 1000.0, 1e-9, 1e6, 1e300, 1e308,
];

pub fn random_literal<R: Rng + ?Sized>(rng: &mut R) -> Expr {
    let v = if rng.random_bool(0.5) {
        *INTERESTING.choose(rng).expect("non-empty")
    } else {
        (rng.random::<f64>() * 1000.0).round() / 10.0
    };
    if rng.random_bool(0.15) {
        Expr::number(-v)
    } else {
        Expr::Num(v)
    }
}

pub fn random_feature<R: Rng + ?Sized>(kind: ContextKind, rng: &mut R) -> Expr {
    let (name, _) = kind
        .features()
        .choose(rng)
        .expect("every kind binds features");
    Expr::ident(*name)
}

/// Draws a program that validates for `kind`, with nesting at most `max_depth`.
/// Routing kinds occasionally draw a program with no admissible output; those
/// are redrawn, and after 64 misses the constant `0` is returned.
pub fn random_program<R: Rng + ?Sized>(kind: ContextKind, rng: &mut R, max_depth: usize) -> Expr {
    for _ in 0..64 {
        let mut scope = Vec::new();
        let mut next_local = 0;
        let e = gen(kind, rng, max_depth.max(1), &mut scope, &mut next_local);
        if super::validate(&e, kind).passed {
            return e;
        }
    }
    Expr::Num(0.0)
}

fn gen<R: Rng + ?Sized>(
    kind: ContextKind,
    rng: &mut R,
    depth: usize,
    scope: &mut Vec<String>,
    next_local: &mut usize,
) -> Expr {
    if depth <= 1 || rng.random_bool(0.25) {
        return leaf(kind, rng, scope);
    }
    let d = depth - 1;
    let mut sub = |rng: &mut R, scope: &mut Vec<String>, next_local: &mut usize| {
        gen(kind, rng, d, scope, next_local)
    };
    match rng.random_range(0..10) {
        0 => Expr::Neg(Box::new(sub(rng, scope, next_local))),
        1 => Expr::Not(Box::new(sub(rng, scope, next_local))),
        2..=4 => {
            let op = *[
                BinOp::ARITHMETIC.as_slice(),
                BinOp::COMPARISON.as_slice(),
                BinOp::LOGICAL.as_slice(),
            ]
            .choose(rng)
            .and_then(|f| f.choose(rng))
            .expect("non-empty");
            let l = sub(rng, scope, next_local);
            let r = sub(rng, scope, next_local);
            Expr::binary(op, l, r)
        }
        5 => {
            let c = sub(rng, scope, next_local);
            let t = sub(rng, scope, next_local);
            let e = sub(rng, scope, next_local);
            Expr::if_then_else(c, t, e)
        }
        6 => {
            let name = format!("v{next_local}");
            *next_local += 1;
            let v = sub(rng, scope, next_local);
            scope.push(name.clone());
            let body = sub(rng, scope, next_local);
            scope.pop();
            Expr::Let(name, Box::new(v), Box::new(body))
        }
        _ => call(kind, rng, scope, next_local, &mut sub),
    }
}

fn call<R: Rng + ?Sized>(
    kind: ContextKind,
    rng: &mut R,
    scope: &mut Vec<String>,
    next_local: &mut usize,
    sub: &mut impl FnMut(&mut R, &mut Vec<String>, &mut usize) -> Expr,
) -> Expr {
    let mut names: Vec<(&str, usize)> = vec![
        ("min", 2),
        ("max", 3),
        ("abs", 1),
        ("floor", 1),
        ("log", 1),
        ("exp", 1),
        ("pow", 2),
        ("clamp", 3),
    ];
    match kind {
        ContextKind::RankScore => names.extend([
            ("percentile", 2),
            ("ghost_contains", 0),
            ("ghost_count", 0),
            ("ghost_age", 0),
        ]),
        ContextKind::QtInit => names.push(("is_full", 1)),
        ContextKind::QtTransition => {}
    }
    let (name, arity) = *names.choose(rng).expect("non-empty");
    let mut args: Vec<Expr> = (0..arity).map(|_| sub(rng, scope, next_local)).collect();
    if name == "percentile" {
        let stat = ["counts", "ages", "sizes"].choose(rng).expect("non-empty");
        args[0] = Expr::ident(*stat);
    }
    Expr::Call(name.to_string(), args)
}

fn leaf<R: Rng + ?Sized>(kind: ContextKind, rng: &mut R, scope: &[String]) -> Expr {
    match rng.random_range(0..3) {
        0 => random_literal(rng),
        1 if !scope.is_empty() => Expr::ident(scope.choose(rng).expect("non-empty").clone()),
        _ => random_feature(kind, rng),
    }
}

/// Random bindings for every feature of `kind`, including extreme values.
pub fn random_context<R: Rng + ?Sized>(kind: ContextKind, rng: &mut R) -> MapContext {
    let mut ctx = MapContext::default();
    let value = |rng: &mut R| -> f64 {
        match rng.random_range(0..6) {
            0 => 0.0,
            1 => *[1e308, -1e308, 1e-300, f64::MAX, -1.0]
                .choose(rng)
                .expect("non-empty"),
            2 => rng.random_range(0.0..10.0f64).floor(),
            _ => rng.random_range(0.0..1e7f64).floor(),
        }
    };
    for (_, f) in kind.features() {
        let v = match f {
            Feature::InGhost => f64::from(rng.random_bool(0.5)),
            _ => value(rng),
        };
        ctx.features.insert(*f, v);
    }
    if rng.random_bool(0.5) {
        ctx.ghost = Some((value(rng), value(rng)));
    }
    ctx.full = (0..5).map(|_| rng.random_bool(0.5)).collect();
    for stat in [Stat::Counts, Stat::Ages, Stat::Sizes] {
        for p in [0.0, 0.5, 0.7, 0.75, 0.9, 1.0] {
            ctx.percentiles.push((stat, p, value(rng)));
        }
    }
    ctx
}
