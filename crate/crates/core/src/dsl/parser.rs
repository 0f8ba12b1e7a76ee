use super::ast::{BinOp, Expr};
use super::{MAX_DEPTH, MAX_NODES};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SyntaxError {
    #[error("syntax error at {line}:{col}: {message}")]
    Unexpected {
        offset: usize,
        line: usize,
        col: usize,
        message: String,
    },
    #[error("program exceeds {MAX_NODES} nodes")]
    NodeCap,
    #[error("program nesting exceeds depth {MAX_DEPTH}")]
    DepthCap,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    If,
    Then,
    Else,
    Let,
    In,
    And,
    Or,
    Not,
    LParen,
    RParen,
    Comma,
    Assign,
    Op(BinOp),
    Minus,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'0'..=b'9' | b'.' if c != b'.' || bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| error_at(src, start, format!("invalid number {text:?}")))?;
                if !v.is_finite() {
                    return Err(error_at(
                        src,
                        start,
                        format!("number {text:?} is out of range"),
                    ));
                }
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                loop {
                    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                    {
                        i += 1;
                    }
                    let dotted = i + 1 < bytes.len()
                        && bytes[i] == b'.'
                        && (bytes[i + 1].is_ascii_alphabetic() || bytes[i + 1] == b'_');
                    if !dotted {
                        break;
                    }
                    i += 1;
                }
                let word = &src[start..i];
                let tok = match word {
                    "if" => Tok::If,
                    "then" => Tok::Then,
                    "else" => Tok::Else,
                    "let" => Tok::Let,
                    "in" => Tok::In,
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    _ => Tok::Ident(word.to_string()),
                };
                out.push((tok, start));
                continue;
            }
            _ => {}
        }
        let two = bytes.get(i + 1).copied();
        let (tok, width) = match (c, two) {
            (b'<', Some(b'=')) => (Tok::Op(BinOp::Le), 2),
            (b'>', Some(b'=')) => (Tok::Op(BinOp::Ge), 2),
            (b'=', Some(b'=')) => (Tok::Op(BinOp::Eq), 2),
            (b'!', Some(b'=')) => (Tok::Op(BinOp::Ne), 2),
            (b'<', _) => (Tok::Op(BinOp::Lt), 1),
            (b'>', _) => (Tok::Op(BinOp::Gt), 1),
            (b'=', _) => (Tok::Assign, 1),
            (b'+', _) => (Tok::Op(BinOp::Add), 1),
            (b'-', _) => (Tok::Minus, 1),
            (b'*', _) => (Tok::Op(BinOp::Mul), 1),
            (b'/', _) => (Tok::Op(BinOp::Div), 1),
            (b'(', _) => (Tok::LParen, 1),
            (b')', _) => (Tok::RParen, 1),
            (b',', _) => (Tok::Comma, 1),
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(error_at(src, i, format!("unexpected character {ch:?}")));
            }
        };
        out.push((tok, start));
        i += width;
    }
    Ok(out)
}

fn error_at(src: &str, offset: usize, message: String) -> SyntaxError {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    SyntaxError::Unexpected {
        offset,
        line,
        col,
        message,
    }
}

/// Expression plus its tree depth, tracked during construction so that
/// oversized inputs are rejected before any recursive walk.
type Parsed = (Expr, usize);

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
    pos: usize,
    nodes: usize,
    nesting: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.src.len(), |(_, o)| *o)
    }

    fn error(&self, message: impl Into<String>) -> SyntaxError {
        error_at(self.src, self.offset(), message.into())
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), SyntaxError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn node(&mut self, e: Expr, child_depth: usize) -> Result<Parsed, SyntaxError> {
        self.nodes += 1;
        if self.nodes > MAX_NODES {
            return Err(SyntaxError::NodeCap);
        }
        let d = child_depth + 1;
        if d > MAX_DEPTH {
            return Err(SyntaxError::DepthCap);
        }
        Ok((e, d))
    }

    fn enter(&mut self) -> Result<(), SyntaxError> {
        self.nesting += 1;
        if self.nesting > MAX_DEPTH {
            Err(SyntaxError::DepthCap)
        } else {
            Ok(())
        }
    }

    fn expr(&mut self) -> Result<Parsed, SyntaxError> {
        self.enter()?;
        let r = match self.peek() {
            Some(Tok::If) => {
                self.pos += 1;
                let (c, dc) = self.expr()?;
                self.expect(Tok::Then, "`then`")?;
                let (t, dt) = self.expr()?;
                self.expect(Tok::Else, "`else`")?;
                let (e, de) = self.expr()?;
                self.node(Expr::if_then_else(c, t, e), dc.max(dt).max(de))
            }
            Some(Tok::Let) => {
                self.pos += 1;
                let name = match self.bump() {
                    Some(Tok::Ident(n)) if !n.contains('.') => n,
                    _ => {
                        self.pos -= 1;
                        return Err(self.error("expected a plain identifier after `let`"));
                    }
                };
                self.expect(Tok::Assign, "`=`")?;
                let (v, dv) = self.expr()?;
                self.expect(Tok::In, "`in`")?;
                let (b, db) = self.expr()?;
                self.node(Expr::Let(name, Box::new(v), Box::new(b)), dv.max(db))
            }
            _ => self.or(),
        };
        self.nesting -= 1;
        r
    }

    fn binary_chain(
        &mut self,
        next: fn(&mut Self) -> Result<Parsed, SyntaxError>,
        matches: fn(&Tok) -> Option<BinOp>,
    ) -> Result<Parsed, SyntaxError> {
        let (mut lhs, mut dl) = next(self)?;
        while let Some(op) = self.peek().and_then(matches) {
            self.pos += 1;
            let (rhs, dr) = next(self)?;
            (lhs, dl) = self.node(Expr::binary(op, lhs, rhs), dl.max(dr))?;
        }
        Ok((lhs, dl))
    }

    fn or(&mut self) -> Result<Parsed, SyntaxError> {
        self.binary_chain(Self::and, |t| (*t == Tok::Or).then_some(BinOp::Or))
    }

    fn and(&mut self) -> Result<Parsed, SyntaxError> {
        self.binary_chain(Self::not, |t| (*t == Tok::And).then_some(BinOp::And))
    }

    fn not(&mut self) -> Result<Parsed, SyntaxError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            self.enter()?;
            let (a, d) = self.not()?;
            self.nesting -= 1;
            return self.node(Expr::Not(Box::new(a)), d);
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Parsed, SyntaxError> {
        let (lhs, dl) = self.add()?;
        if let Some(Tok::Op(op)) = self.peek() {
            if op.is_comparison() {
                let op = *op;
                self.pos += 1;
                let (rhs, dr) = self.add()?;
                if matches!(self.peek(), Some(Tok::Op(o)) if o.is_comparison()) {
                    return Err(self.error("comparisons do not chain; add parentheses"));
                }
                return self.node(Expr::binary(op, lhs, rhs), dl.max(dr));
            }
        }
        Ok((lhs, dl))
    }

    fn add(&mut self) -> Result<Parsed, SyntaxError> {
        self.binary_chain(Self::mul, |t| match t {
            Tok::Op(BinOp::Add) => Some(BinOp::Add),
            Tok::Minus => Some(BinOp::Sub),
            _ => None,
        })
    }

    fn mul(&mut self) -> Result<Parsed, SyntaxError> {
        self.binary_chain(Self::unary, |t| match t {
            Tok::Op(op @ (BinOp::Mul | BinOp::Div)) => Some(*op),
            _ => None,
        })
    }

    fn unary(&mut self) -> Result<Parsed, SyntaxError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            self.enter()?;
            let (a, d) = self.unary()?;
            self.nesting -= 1;
            return self.node(Expr::Neg(Box::new(a)), d);
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Parsed, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                self.node(Expr::Num(v), 0)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() != Some(&Tok::LParen) {
                    return self.node(Expr::Ident(name), 0);
                }
                self.pos += 1;
                let mut args = Vec::new();
                let mut depth = 0;
                if self.peek() != Some(&Tok::RParen) {
                    loop {
                        let (a, d) = self.expr()?;
                        depth = depth.max(d);
                        args.push(a);
                        if self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen, "`)` after arguments")?;
                self.node(Expr::Call(name, args), depth)
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::If) | Some(Tok::Let) => self.expr(),
            Some(_) => Err(self.error("expected an expression")),
            None => Err(self.error("unexpected end of input")),
        }
    }
}

/// Parses one expression spanning the whole input.
pub fn parse_expr(src: &str) -> Result<Expr, SyntaxError> {
    let toks = lex(src)?;
    let mut p = Parser {
        src,
        toks,
        pos: 0,
        nodes: 0,
        nesting: 0,
    };
    let (e, _) = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap_or_else(|e| panic!("{s}: {e}"))
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1 - 2 - 3").to_string(), "1 - 2 - 3");
        assert_eq!(p("1 - (2 - 3)").to_string(), "1 - (2 - 3)");
        assert_eq!(p("(1 + 2) * 3").to_string(), "(1 + 2) * 3");
        assert_eq!(
            p("a or b and not c < d + e * -f").to_string(),
            "a or b and not c < d + e * -f"
        );
        assert_eq!(p("((x))"), Expr::ident("x"));
    }

    #[test]
    fn if_and_let_nest() {
        let e = p("let a = 2 in if a > 1 then obj.count else 0");
        assert_eq!(e.to_string(), "let a = 2 in if a > 1 then obj.count else 0");
        assert_eq!(
            p("1 + if x then 2 else 3").to_string(),
            "1 + (if x then 2 else 3)"
        );
    }

    #[test]
    fn comments_are_ignored() {
        assert_eq!(p("# LRU\nvtime # newest wins\n"), Expr::ident("vtime"));
    }

    #[test]
    fn error_positions() {
        match parse_expr("1 +\n  * 2") {
            Err(SyntaxError::Unexpected { line, col, .. }) => assert_eq!((line, col), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(parse_expr("").is_err());
        assert!(parse_expr("a < b < c").is_err());
        assert!(parse_expr("f(1,").is_err());
        assert!(parse_expr("1e999").is_err());
        assert!(parse_expr("let obj.x = 1 in 2").is_err());
        assert!(parse_expr("a $ b").is_err());
    }

    #[test]
    fn caps_are_enforced_while_parsing() {
        let wide = format!("max({})", vec!["1"; 100_000].join(", "));
        assert_eq!(parse_expr(&wide), Err(SyntaxError::NodeCap));
        let long = vec!["1"; 1000].join(" + ");
        assert_eq!(parse_expr(&long), Err(SyntaxError::DepthCap));
        let deep = format!("{}1{}", "(".repeat(5000), ")".repeat(5000));
        assert_eq!(parse_expr(&deep), Err(SyntaxError::DepthCap));
        let negs = format!("{}1", "-".repeat(5000));
        assert_eq!(parse_expr(&negs), Err(SyntaxError::DepthCap));
    }

    #[test]
    fn numbers() {
        assert_eq!(p("1.5e3"), Expr::Num(1500.0));
        assert_eq!(p(".5"), Expr::Num(0.5));
        assert_eq!(p("-2"), Expr::Neg(Box::new(Expr::Num(2.0))));
    }
}
