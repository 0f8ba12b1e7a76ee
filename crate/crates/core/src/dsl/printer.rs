//! Canonical printer. Output re-parses to the identical tree and uses the
//! minimum parentheses the precedence table allows.

use super::ast::{Expr, PREC_NEG, PREC_NOT};

pub(crate) fn print(e: &Expr, ctx: u8, out: &mut String) {
    match e {
        Expr::Num(v) => {
            if v.is_sign_negative() && *v != 0.0 {
                out.push_str(&format!("(-{})", -v));
            } else {
                out.push_str(&format!("{}", v.abs()));
            }
        }
        Expr::Ident(name) => out.push_str(name),
        Expr::Neg(a) => wrap(ctx > PREC_NEG, out, |out| {
            out.push('-');
            print(a, PREC_NEG, out);
        }),
        Expr::Not(a) => wrap(ctx > PREC_NOT, out, |out| {
            out.push_str("not ");
            print(a, PREC_NOT, out);
        }),
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            wrap(ctx > p, out, |out| {
                // Comparisons do not chain, so both operands bind tighter.
                let left_ctx = if op.is_comparison() { p + 1 } else { p };
                print(l, left_ctx, out);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                print(r, p + 1, out);
            })
        }
        Expr::If(c, t, f) => wrap(ctx > 0, out, |out| {
            out.push_str("if ");
            print(c, 0, out);
            out.push_str(" then ");
            print(t, 0, out);
            out.push_str(" else ");
            print(f, 0, out);
        }),
        Expr::Let(name, v, body) => wrap(ctx > 0, out, |out| {
            out.push_str("let ");
            out.push_str(name);
            out.push_str(" = ");
            print(v, 0, out);
            out.push_str(" in ");
            print(body, 0, out);
        }),
        Expr::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print(a, 0, out);
            }
            out.push(')');
        }
    }
}

fn wrap(parens: bool, out: &mut String, body: impl FnOnce(&mut String)) {
    if parens {
        out.push('(');
    }
    body(out);
    if parens {
        out.push(')');
    }
}
