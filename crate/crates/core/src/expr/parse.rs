//! Infix text form of expressions.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/" | "//") factor)*
//! factor := primary ("^" INTEGER)*
//! primary:= "(" expr ")" | FEATURE | NUMBER | "-" NUMBER
//! ```
//!
//! `/` and `//` are both protected division. `e^k` expands to a left-leaning
//! chain of `k` multiplications (`e^0` is the constant 1).

use std::fmt;

use thiserror::Error;

use super::{BinOp, Expr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("unexpected character {ch:?} at position {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("unknown identifier {name:?} at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("invalid number {text:?} at position {pos}")]
    InvalidNumber { text: String, pos: usize },
    #[error("expected {expected} at position {pos}")]
    Expected { expected: &'static str, pos: usize },
    #[error("unexpected trailing input at position {pos}")]
    Trailing { pos: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, integer: Option<u32> },
    Feature(usize),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, ch) = chars[i];
        match ch {
            c if c.is_whitespace() => {
                i += 1;
            }
            '+' | '-' | '*' | '^' | '(' | ')' => {
                let tok = match ch {
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '^' => Tok::Caret,
                    '(' => Tok::LParen,
                    _ => Tok::RParen,
                };
                toks.push((tok, pos));
                i += 1;
            }
            '/' => {
                toks.push((Tok::Slash, pos));
                i += if chars.get(i + 1).map(|c| c.1) == Some('/') {
                    2
                } else {
                    1
                };
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                // exponent part: e, optional sign, digits
                if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].1.is_ascii_digit() {
                        while j < chars.len() && chars[j].1.is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s: String = chars[start..i].iter().map(|c| c.1).collect();
                let value: f64 = s
                    .parse()
                    .map_err(|_| ParseError::InvalidNumber { text: s.clone(), pos })?;
                let integer = if s.bytes().all(|b| b.is_ascii_digit()) {
                    s.parse().ok()
                } else {
                    None
                };
                toks.push((Tok::Num { value, integer }, pos));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let name: String = chars[start..i].iter().map(|c| c.1).collect();
                let index = name
                    .strip_prefix('X')
                    .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|d| d.parse().ok());
                match index {
                    Some(idx) => toks.push((Tok::Feature(idx), pos)),
                    None => return Err(ParseError::UnknownIdentifier { name, pos }),
                }
            }
            other => return Err(ParseError::UnexpectedChar { ch: other, pos }),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    cur: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.cur).map(|t| &t.0)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.cur).map_or(self.end, |t| t.1)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.cur += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.cur += 1;
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.primary()?;
        while self.peek() == Some(&Tok::Caret) {
            self.cur += 1;
            let power = match self.peek() {
                Some(Tok::Num { integer: Some(k), .. }) => *k,
                _ => {
                    return Err(ParseError::Expected {
                        expected: "non-negative integer exponent",
                        pos: self.pos(),
                    })
                }
            };
            self.cur += 1;
            base = power_of(base, power);
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.cur += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(ParseError::Expected {
                        expected: "')'",
                        pos: self.pos(),
                    });
                }
                self.cur += 1;
                Ok(inner)
            }
            Some(Tok::Feature(i)) => {
                self.cur += 1;
                Ok(Expr::Feature(i))
            }
            Some(Tok::Num { value, .. }) => {
                self.cur += 1;
                Ok(Expr::constant(value))
            }
            Some(Tok::Minus) => match self.toks.get(self.cur + 1).map(|t| &t.0) {
                Some(Tok::Num { value, .. }) => {
                    let v = -*value;
                    self.cur += 2;
                    Ok(Expr::constant(v))
                }
                _ => Err(ParseError::Expected {
                    expected: "number after unary '-'",
                    pos,
                }),
            },
            _ => Err(ParseError::Expected {
                expected: "feature, number or '('",
                pos,
            }),
        }
    }
}

fn power_of(base: Expr, power: u32) -> Expr {
    if power == 0 {
        return Expr::Const(1.0);
    }
    let mut acc = base.clone();
    for _ in 1..power {
        acc = Expr::mul(acc, base.clone());
    }
    acc
}

/// Parses the infix grammar into an expression tree.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        cur: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.cur != p.toks.len() {
        return Err(ParseError::Trailing { pos: p.pos() });
    }
    Ok(e)
}

pub(super) fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Feature(i) => write!(f, "X{i}"),
        Expr::Const(c) if c.is_sign_negative() => write!(f, "({c})"),
        Expr::Const(c) => write!(f, "{c}"),
        Expr::Binary(op, l, r) => {
            let prec = op.precedence();
            write_operand(l, f, |p| p < prec)?;
            write!(f, " {} ", op.symbol())?;
            // Operators are left-associative, so an equal-precedence right
            // operand needs parentheses to keep its grouping.
            write_operand(r, f, |p| p <= prec)
        }
    }
}

fn write_operand(e: &Expr, f: &mut fmt::Formatter<'_>, needs_parens: impl Fn(u8) -> bool) -> fmt::Result {
    match e {
        Expr::Binary(op, ..) if needs_parens(op.precedence()) => {
            f.write_str("(")?;
            write_expr(e, f)?;
            f.write_str(")")
        }
        _ => write_expr(e, f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x(i: usize) -> Expr {
        Expr::Feature(i)
    }

    #[test]
    fn parses_difference() {
        assert_eq!(parse("X0 - X6").unwrap(), Expr::sub(x(0), x(6)));
        assert_eq!(parse("X0 - X6").unwrap().to_string(), "X0 - X6");
    }

    #[test]
    fn precedence_and_left_associativity() {
        let expected = Expr::div(Expr::mul(Expr::mul(x(5), x(6)), Expr::add(x(3), x(5))), x(4));
        assert_eq!(parse("X5 * X6 * (X3 + X5) / X4").unwrap(), expected);
        assert_eq!(parse("X0 - X1 - X2").unwrap(), Expr::sub(Expr::sub(x(0), x(1)), x(2)));
        assert_eq!(parse("X0 + X1 * X2").unwrap(), Expr::add(x(0), Expr::mul(x(1), x(2))));
    }

    #[test]
    fn both_division_spellings() {
        assert_eq!(parse("X0 // X1").unwrap(), parse("X0/X1").unwrap());
    }

    #[test]
    fn powers_expand_to_products() {
        assert_eq!(parse("X4^2").unwrap(), Expr::mul(x(4), x(4)));
        assert_eq!(parse("X1^3").unwrap(), Expr::mul(Expr::mul(x(1), x(1)), x(1)));
        assert_eq!(parse("X1^1").unwrap(), x(1));
        assert_eq!(parse("X1^0").unwrap(), Expr::Const(1.0));
        assert_eq!(
            parse("(X5 - X3)^2").unwrap(),
            Expr::mul(Expr::sub(x(5), x(3)), Expr::sub(x(5), x(3)))
        );
        assert!(parse("X1^1.5").is_err());
    }

    #[test]
    fn constants_and_negative_literals() {
        assert_eq!(parse("2 * X5").unwrap(), Expr::mul(Expr::Const(2.0), x(5)));
        assert_eq!(parse("X0 * (-2.5)").unwrap(), Expr::mul(x(0), Expr::Const(-2.5)));
        assert_eq!(parse("1e-3").unwrap(), Expr::Const(1e-3));
        let e = Expr::sub(Expr::Const(-3.0), x(1));
        assert_eq!(parse(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(
            parse("X0 + Y1"),
            Err(ParseError::UnknownIdentifier {
                name: "Y1".into(),
                pos: 5
            })
        );
        assert_eq!(parse("X0 $ X1"), Err(ParseError::UnexpectedChar { ch: '$', pos: 3 }));
        assert!(matches!(parse("(X0 + X1"), Err(ParseError::Expected { pos: 8, .. })));
        assert!(matches!(parse("X0 X1"), Err(ParseError::Trailing { pos: 3 })));
        assert!(matches!(parse(""), Err(ParseError::Expected { .. })));
        assert!(matches!(parse("X"), Err(ParseError::UnknownIdentifier { .. })));
    }

    #[test]
    fn formatting_keeps_grouping() {
        for text in [
            "X0 - (X1 - X2)",
            "X0 / (X1 * X2)",
            "(X0 + X1) * X2",
            "X0 * X1 / X2",
            "X0 - X1 + X2",
        ] {
            assert_eq!(parse(text).unwrap().to_string(), text);
        }
    }

    pub(crate) fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0usize..12).prop_map(Expr::Feature),
            (-1e6f64..1e6).prop_map(Expr::Const),
            Just(Expr::Const(0.0)),
            Just(Expr::Const(1.0)),
        ];
        leaf.prop_recursive(6, 64, 2, |inner| {
            (prop::sample::select(BinOp::ALL.to_vec()), inner.clone(), inner)
                .prop_map(|(op, l, r)| Expr::binary(op, l, r))
        })
    }

    proptest! {
        #[test]
        fn format_then_parse_is_identity(e in arb_expr()) {
            let text = e.to_string();
            prop_assert_eq!(parse(&text).unwrap(), e);
        }
    }
}
