//! Grammar-preserving program mutations: the deterministic stand-in for a
//! language-model generator.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::dsl::gen::{random_feature, random_literal};
use crate::dsl::{validate, BinOp, ContextKind, Expr, ScoreProgram};

/// Validation attempts before a mutation gives up and returns the parent.
pub const MAX_MUTATION_ATTEMPTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MutationOp {
    /// Scale a literal by U[0.5, 2] or shift it by ±1.
    Literal,
    /// Replace a binary operator with another of its family.
    SwapOperator,
    /// Replace a feature identifier with another of the same context kind.
    SwapFeature,
    /// Wrap a subtree `s` as `if <cmp> then s else s'`, where `s'` is a
    /// cloned subtree of the program.
    WrapIf,
    /// Replace a subtree with a subtree of the donor program.
    Crossover,
}

/// Pre-order list of paths (child indices from the root) to every node.
fn paths(e: &Expr) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack = vec![(e, Vec::new())];
    while let Some((node, path)) = stack.pop() {
        for (i, c) in node.children().into_iter().enumerate().rev() {
            let mut p = path.clone();
            p.push(i);
            stack.push((c, p));
        }
        out.push(path);
    }
    out
}

fn node_at<'a>(e: &'a Expr, path: &[usize]) -> &'a Expr {
    path.iter().fold(e, |n, &i| n.children()[i])
}

fn node_at_mut<'a>(e: &'a mut Expr, path: &[usize]) -> &'a mut Expr {
    let mut n = e;
    for &i in path {
        n = n.children_mut().into_iter().nth(i).expect("path is valid");
    }
    n
}

/// Paths whose node satisfies `pred`.
fn matching(e: &Expr, pred: impl Fn(&Expr) -> bool) -> Vec<Vec<usize>> {
    paths(e)
        .into_iter()
        .filter(|p| pred(node_at(e, p)))
        .collect()
}

fn is_feature(kind: ContextKind, e: &Expr) -> bool {
    matches!(e, Expr::Ident(name) if kind.feature(name).is_some())
}

fn random_comparison<R: Rng + ?Sized>(kind: ContextKind, rng: &mut R) -> Expr {
    let op = *BinOp::COMPARISON.choose(rng).expect("non-empty");
    let rhs = if rng.random_bool(0.5) {
        random_literal(rng)
    } else {
        random_feature(kind, rng)
    };
    Expr::binary(op, random_feature(kind, rng), rhs)
}

/// Applies `op` once. Returns `None` when the program has no site for it.
pub fn apply<R: Rng + ?Sized>(
    op: MutationOp,
    e: &Expr,
    donor: &Expr,
    kind: ContextKind,
    rng: &mut R,
) -> Option<Expr> {
    let mut out = e.clone();
    match op {
        MutationOp::Literal => {
            let sites = matching(e, |n| matches!(n, Expr::Num(_)));
            let path = sites.choose(rng)?;
            let Expr::Num(v) = *node_at(e, path) else {
                unreachable!()
            };
            let new = if rng.random_bool(0.5) {
                v * rng.random_range(0.5..=2.0)
            } else if rng.random_bool(0.5) {
                v + 1.0
            } else {
                v - 1.0
            };
            *node_at_mut(&mut out, path) = Expr::number(new);
        }
        MutationOp::SwapOperator => {
            let sites = matching(e, |n| matches!(n, Expr::Binary(..)));
            let path = sites.choose(rng)?;
            if let Expr::Binary(op, ..) = node_at_mut(&mut out, path) {
                let others: Vec<BinOp> = op.family().iter().copied().filter(|o| o != op).collect();
                *op = *others.choose(rng)?;
            }
        }
        MutationOp::SwapFeature => {
            let sites = matching(e, |n| is_feature(kind, n));
            let path = sites.choose(rng)?;
            let current = node_at(e, path).clone();
            let others: Vec<&str> = kind
                .features()
                .iter()
                .map(|(n, _)| *n)
                .filter(|n| Expr::ident(*n) != current)
                .collect();
            *node_at_mut(&mut out, path) = Expr::ident(*others.choose(rng)?);
        }
        MutationOp::WrapIf => {
            let all = paths(e);
            let path = all.choose(rng)?;
            let then = node_at(e, path).clone();
            let other = node_at(e, all.choose(rng)?).clone();
            let (t, f) = if rng.random_bool(0.5) {
                (then, other)
            } else {
                (other, then)
            };
            *node_at_mut(&mut out, path) = Expr::if_then_else(random_comparison(kind, rng), t, f);
        }
        MutationOp::Crossover => {
            let target = paths(e);
            let source = paths(donor);
            let graft = node_at(donor, source.choose(rng)?).clone();
            *node_at_mut(&mut out, target.choose(rng)?) = graft;
        }
    }
    Some(out)
}

const UNARY_OPS: [MutationOp; 4] = [
    MutationOp::Literal,
    MutationOp::SwapOperator,
    MutationOp::SwapFeature,
    MutationOp::WrapIf,
];

/// One random mutation of `program`, using `donor` for crossover. The result
/// is re-validated; after [`MAX_MUTATION_ATTEMPTS`] failed attempts the
/// parent is returned unchanged.
pub fn mutate_with<R: Rng + ?Sized>(
    program: &ScoreProgram,
    donor: Option<&ScoreProgram>,
    rng: &mut R,
) -> ScoreProgram {
    let kind = program.kind();
    let donor_expr = donor.filter(|d| d.kind() == kind).unwrap_or(program).expr();
    for _ in 0..MAX_MUTATION_ATTEMPTS {
        let op = if donor.is_some() && rng.random_bool(0.25) {
            MutationOp::Crossover
        } else {
            *UNARY_OPS.choose(rng).expect("non-empty")
        };
        let Some(candidate) = apply(op, program.expr(), donor_expr, kind, rng) else {
            continue;
        };
        if validate(&candidate, kind).passed {
            return ScoreProgram::from_expr(candidate, kind).expect("validated above");
        }
    }
    program.clone()
}

/// One random mutation of `program`; crossover grafts from the program itself.
pub fn mutate<R: Rng + ?Sized>(program: &ScoreProgram, rng: &mut R) -> ScoreProgram {
    mutate_with(program, Some(program), rng)
}
