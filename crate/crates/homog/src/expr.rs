//! A small closed-form expression language for coefficient entries.
//!
//! Grammar (tightest first): `^`, unary `-`, `*` `/`, `+` `-`, every binary
//! operator left-associative. The right operand of `^` may carry its own sign,
//! so `2^-2` parses. Atoms are decimal literals, the constant `pi`, the
//! variables `y1`…`yn` (and `t` as the coordinate name in one dimension), the
//! unary functions `sin`, `cos`, `exp`, `log` applied to a parenthesized
//! argument, and parenthesized subexpressions.
//!
//! Parse errors carry the byte offset into the source string. Evaluation is
//! total over the reals in the IEEE sense — `log` of a non-positive value or
//! `0^-1` produce non-finite samples, which the field constructors reject node
//! by node, so ill-defined coefficients are caught at realization time with a
//! location attached.

use crate::error::{HomogError, Result};
use crate::matrix::MAX_DIM;

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Coordinate y_{axis+1}.
    Var(usize),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Evaluate at a point (unused coordinates ignored).
    pub fn eval(&self, y: &[f64; MAX_DIM]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(axis) => y[*axis],
            Expr::Neg(e) => -e.eval(y),
            Expr::Sin(e) => e.eval(y).sin(),
            Expr::Cos(e) => e.eval(y).cos(),
            Expr::Exp(e) => e.eval(y).exp(),
            Expr::Log(e) => e.eval(y).ln(),
            Expr::Add(a, b) => a.eval(y) + b.eval(y),
            Expr::Sub(a, b) => a.eval(y) - b.eval(y),
            Expr::Mul(a, b) => a.eval(y) * b.eval(y),
            Expr::Div(a, b) => a.eval(y) / b.eval(y),
            Expr::Pow(a, b) => a.eval(y).powf(b.eval(y)),
        }
    }
}

/// Parse an expression using the coordinates of a `dim`-dimensional torus.
///
/// `y1`…`y{dim}` are in scope; in one dimension the alias `t` also names the
/// single coordinate, which reads better for profile functions.
pub fn parse(src: &str, dim: usize) -> Result<Expr> {
    let tokens = lex(src)?;
    let mut parser = Parser { tokens, pos: 0, dim, src_len: src.len() };
    let expr = parser.expression()?;
    if let Some(tok) = parser.peek() {
        return Err(HomogError::Parse {
            pos: tok.pos,
            msg: format!("unexpected {} after a complete expression", tok.kind.describe()),
        });
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("name `{s}`"),
            TokenKind::Plus => "`+`".to_string(),
            TokenKind::Minus => "`-`".to_string(),
            TokenKind::Star => "`*`".to_string(),
            TokenKind::Slash => "`/`".to_string(),
            TokenKind::Caret => "`^`".to_string(),
            TokenKind::LParen => "`(`".to_string(),
            TokenKind::RParen => "`)`".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' | b'(' | b')' => {
                let kind = match b {
                    b'+' => TokenKind::Plus,
                    b'-' => TokenKind::Minus,
                    b'*' => TokenKind::Star,
                    b'/' => TokenKind::Slash,
                    b'^' => TokenKind::Caret,
                    b'(' => TokenKind::LParen,
                    _ => TokenKind::RParen,
                };
                tokens.push(Token { kind, pos: i });
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // Optional exponent part: e or E, optional sign, digits.
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value = text.parse::<f64>().map_err(|_| HomogError::Parse {
                    pos: start,
                    msg: format!("malformed number `{text}`"),
                })?;
                tokens.push(Token { kind: TokenKind::Num(value), pos: start });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(src[start..i].to_string()),
                    pos: start,
                });
            }
            _ => {
                return Err(HomogError::Parse {
                    pos: i,
                    msg: format!("unexpected character `{}`", &src[i..].chars().next().unwrap()),
                });
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
    src_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, kind: &TokenKind, what: &str) -> Result<()> {
        match self.peek() {
            Some(t) if &t.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(HomogError::Parse {
                pos: t.pos,
                msg: format!("expected {what}, found {}", t.kind.describe()),
            }),
            None => Err(HomogError::Parse {
                pos: self.src_len,
                msg: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expression(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(t) = self.peek() {
            let op = match t.kind {
                TokenKind::Plus => true,
                TokenKind::Minus => false,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(t) = self.peek() {
            let mul = match t.kind {
                TokenKind::Star => true,
                TokenKind::Slash => false,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if mul {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Minus {
                self.pos += 1;
                let inner = self.unary()?;
                return Ok(Expr::Neg(Box::new(inner)));
            }
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let mut lhs = self.atom()?;
        while let Some(t) = self.peek() {
            if t.kind != TokenKind::Caret {
                break;
            }
            self.pos += 1;
            let rhs = self.signed_atom()?;
            lhs = Expr::Pow(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn signed_atom(&mut self) -> Result<Expr> {
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Minus {
                self.pos += 1;
                let inner = self.signed_atom()?;
                return Ok(Expr::Neg(Box::new(inner)));
            }
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = match self.advance() {
            Some(t) => t,
            None => {
                return Err(HomogError::Parse {
                    pos: self.src_len,
                    msg: "expected a value, found end of input".to_string(),
                });
            }
        };
        match tok.kind {
            TokenKind::Num(v) => Ok(Expr::Num(v)),
            TokenKind::LParen => {
                let inner = self.expression()?;
                self.eat(&TokenKind::RParen, "`)`")?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.ident(name, tok.pos),
            other => Err(HomogError::Parse {
                pos: tok.pos,
                msg: format!("expected a value, found {}", other.describe()),
            }),
        }
    }

    fn ident(&mut self, name: String, pos: usize) -> Result<Expr> {
        match name.as_str() {
            "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
            "sin" | "cos" | "exp" | "log" => {
                self.eat(&TokenKind::LParen, &format!("`(` after `{name}`"))?;
                let arg = Box::new(self.expression()?);
                self.eat(&TokenKind::RParen, "`)`")?;
                return Ok(match name.as_str() {
                    "sin" => Expr::Sin(arg),
                    "cos" => Expr::Cos(arg),
                    "exp" => Expr::Exp(arg),
                    _ => Expr::Log(arg),
                });
            }
            "t" if self.dim == 1 => return Ok(Expr::Var(0)),
            _ => {}
        }
        // y1, y2, y3 within the active dimension.
        if let Some(rest) = name.strip_prefix('y') {
            if let Ok(axis) = rest.parse::<usize>() {
                if (1..=self.dim).contains(&axis) {
                    return Ok(Expr::Var(axis - 1));
                }
            }
        }
        let _ = pos;
        Err(HomogError::UnknownVariable { name, dim: self.dim })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn eval1(src: &str, t: f64) -> f64 {
        parse(src, 1).unwrap().eval(&[t, 0.0, 0.0])
    }

    fn eval2(src: &str, y1: f64, y2: f64) -> f64 {
        parse(src, 2).unwrap().eval(&[y1, y2, 0.0])
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval1("2+3*4", 0.0), 14.0);
        assert_eq!(eval1("2*3^2", 0.0), 18.0);
        assert_eq!(eval1("-2^2", 0.0), -4.0, "unary minus binds looser than power");
        assert_eq!(eval1("2^-2", 0.0), 0.25, "power accepts a signed exponent");
        assert_eq!(eval1("2-3-4", 0.0), -5.0);
        assert_eq!(eval1("8/4/2", 0.0), 1.0);
        assert_eq!(eval1("2^3^2", 0.0), 64.0, "power chains associate left");
        assert_eq!(eval1("(1+2)*3", 0.0), 9.0);
        assert_eq!(eval1("--3", 0.0), 3.0);
    }

    #[test]
    fn functions_and_constants() {
        assert!((eval1("sin(pi/2)", 0.0) - 1.0).abs() < 1e-15);
        assert!((eval1("log(exp(2))", 0.0) - 2.0).abs() < 1e-15);
        assert!((eval1("cos(0)", 0.0) - 1.0).abs() < 1e-15);
        assert!((eval1("exp(0.5*log(4))", 0.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn variables_follow_the_dimension() {
        assert_eq!(eval2("y1 + 2*y2", 0.5, 0.25), 1.0);
        assert!((eval1("sin(2*pi*t)", 0.25) - 1.0).abs() < 1e-15);

        match parse("y3", 2).unwrap_err() {
            HomogError::UnknownVariable { name, dim } => {
                assert_eq!(name, "y3");
                assert_eq!(dim, 2);
            }
            other => panic!("expected unknown variable, got {other}"),
        }
        assert!(parse("t", 2).is_err(), "`t` is only a 1-dimensional alias");
        assert!(parse("zebra", 1).is_err());
    }

    #[test]
    fn scientific_notation_is_a_single_number() {
        assert_eq!(eval1("2e3", 0.0), 2000.0);
        assert_eq!(eval1("1.5e-2", 0.0), 0.015);
        assert_eq!(eval1("2E+1", 0.0), 20.0);
    }

    #[test]
    fn parse_errors_carry_byte_positions() {
        match parse("1 + @", 1).unwrap_err() {
            HomogError::Parse { pos, .. } => assert_eq!(pos, 4),
            other => panic!("expected parse error, got {other}"),
        }
        match parse("(1+2", 1).unwrap_err() {
            HomogError::Parse { pos, .. } => assert_eq!(pos, 4, "points past the input"),
            other => panic!("expected parse error, got {other}"),
        }
        match parse("sin 2", 1).unwrap_err() {
            HomogError::Parse { pos, msg } => {
                assert_eq!(pos, 4);
                assert!(msg.contains("`(`"), "message should name the expected token: {msg}");
            }
            other => panic!("expected parse error, got {other}"),
        }
        match parse("1 2", 1).unwrap_err() {
            HomogError::Parse { pos, .. } => assert_eq!(pos, 2),
            other => panic!("expected parse error, got {other}"),
        }
        match parse("1..5", 1).unwrap_err() {
            HomogError::Parse { pos, .. } => assert_eq!(pos, 0),
            other => panic!("expected parse error, got {other}"),
        }
        assert!(parse("", 1).is_err());
    }

    #[test]
    fn non_finite_values_surface_in_evaluation() {
        assert!(!eval1("log(0-1)", 0.0).is_finite());
        assert!(!eval1("1/0", 0.0).is_finite());
        assert!((eval1("0^0", 0.0) - 1.0).abs() < 1e-15, "IEEE convention");
    }

    #[test]
    fn whitespace_is_insignificant() {
        assert_eq!(eval2("  y1\t*\n y2 ", 3.0, 4.0), 12.0);
    }

    #[test]
    fn periodic_smoke_expression() {
        let e = parse("exp(0.5*sin(2*pi*y1)*cos(2*pi*y2))", 2).unwrap();
        let v = e.eval(&[0.25, 0.0, 0.0]);
        assert!((v - (0.5f64).exp()).abs() < 1e-15);
        assert!((e.eval(&[0.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        let p = e.eval(&[1.0, 0.0, 0.0]);
        assert!((p - 1.0).abs() < 1e-12, "period-1 sampling: y1=1 equals y1=0");
    }

    #[test]
    fn pi_is_not_shadowed_by_longer_names() {
        assert!(parse("pie", 1).is_err());
        assert!((eval1("pi", 0.0) - PI).abs() < 1e-15);
    }
}
