//! Arithmetic over band means: numbers, `B G R RE N`, `+ - * /`, unary minus,
//! parentheses and `sqrt(...)`.

use std::fmt;

use crate::raster::{Band, BAND_COUNT};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Band(Band),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sqrt(Box<Expr>),
}

/// Result of a guarded evaluation: `None` when a division by a near-zero
/// denominator or a square root of a negative number was hit.
pub type Guarded = Option<f64>;

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens: &tokens, pos: 0, src };
        let e = p.expr()?;
        if p.pos != tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, bands: &[f64; BAND_COUNT], guard: f64) -> Guarded {
        Some(match self {
            Expr::Num(v) => *v,
            Expr::Band(b) => bands[b.index()],
            Expr::Neg(a) => -a.eval(bands, guard)?,
            Expr::Add(a, b) => a.eval(bands, guard)? + b.eval(bands, guard)?,
            Expr::Sub(a, b) => a.eval(bands, guard)? - b.eval(bands, guard)?,
            Expr::Mul(a, b) => a.eval(bands, guard)? * b.eval(bands, guard)?,
            Expr::Div(a, b) => {
                let den = b.eval(bands, guard)?;
                if den.abs() < guard {
                    return None;
                }
                a.eval(bands, guard)? / den
            }
            Expr::Sqrt(a) => {
                let v = a.eval(bands, guard)?;
                if v < 0.0 {
                    return None;
                }
                v.sqrt()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse().map_err(|_| Error::validation("formula", format!("bad number `{text}` in `{src}`")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::validation("formula", format!("unexpected `{c}` in `{src}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::validation("formula", format!("{what} at token {} of `{}`", self.pos, self.src))
    }

    fn peek_op(&self, op: char) -> bool {
        matches!(self.tokens.get(self.pos), Some(Token::Op(c)) if *c == op)
    }

    fn expect_op(&mut self, op: char) -> Result<()> {
        if self.peek_op(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.peek_op('+') {
                self.pos += 1;
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.peek_op('-') {
                self.pos += 1;
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.peek_op('*') {
                self.pos += 1;
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.peek_op('/') {
                self.pos += 1;
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_op('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self.tokens.get(self.pos).cloned().ok_or_else(|| self.error("unexpected end"))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::Op('(') => {
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Token::Ident(name) if name == "sqrt" => {
                self.expect_op('(')?;
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(Expr::Sqrt(Box::new(e)))
            }
            Token::Ident(name) => Band::ALL
                .into_iter()
                .find(|b| b.short_name() == name)
                .map(Expr::Band)
                .ok_or_else(|| self.error(&format!("unknown symbol `{name}`"))),
            Token::Op(c) => Err(self.error(&format!("unexpected `{c}`"))),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Band(b) => write!(f, "{}", b.short_name()),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BANDS: [f64; BAND_COUNT] = [0.1, 0.2, 0.3, 0.4, 0.5];

    fn eval(s: &str) -> Guarded {
        Expr::parse(s).unwrap().eval(&BANDS, 1e-9)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3"), Some(7.0));
        assert_eq!(eval("(1 + 2) * 3"), Some(9.0));
        assert_eq!(eval("8 / 4 / 2"), Some(1.0));
        assert_eq!(eval("10 - 4 - 3"), Some(3.0));
        assert_eq!(eval("-2 * -3"), Some(6.0));
        assert_eq!(eval("sqrt(16) + 0.5"), Some(4.5));
    }

    #[test]
    fn bands_resolve() {
        assert!((eval("(N - R) / (N + R)").unwrap() - 0.25).abs() < 1e-15);
        assert!((eval("RE - B").unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn guards_trip() {
        assert_eq!(eval("N / (R - R)"), None);
        assert_eq!(eval("sqrt(B - N)"), None);
    }

    #[test]
    fn bad_formulas_are_rejected() {
        for bad in ["N +", "(N", "X / R", "N $ R", "N R", "1..2"] {
            assert!(Expr::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn display_reparses_to_the_same_tree() {
        let e = Expr::parse("2.5 * (N - R) / (N + 6 * R - 7.5 * B + 1)").unwrap();
        assert_eq!(Expr::parse(&e.to_string()).unwrap(), e);
    }
}
