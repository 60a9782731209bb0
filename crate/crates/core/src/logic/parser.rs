//! Text grammar for formulas.
//!
//! ```text
//! formula   := until
//! until     := or [ "U" [interval] until ]          (right associative)
//! or        := and { "|" and }
//! and       := unary { "&" unary }
//! unary     := "!" unary | "X" unary | "G" [interval] unary
//!            | "F" [interval] unary | primary
//! primary   := "true" | "false" | predicate | atom | "(" formula ")"
//! interval  := "[" number "," number "]"
//! predicate := expr rel expr | "norm" "(" expr { "," expr } ")" "<=" expr
//! rel       := ">=" | ">" | "<=" | "<"
//! expr      := term { ("+" | "-") term }
//! term      := ["-"] factor { "*" factor }           (affine result only)
//! factor    := number | var | "(" expr ")"
//! var       := "x" digits                            (1-based state index)
//! atom      := identifier that is neither a keyword nor a var
//! ```
//!
//! Precedence from tightest: `!`, `X`, `&`, `|`, `U`. Strict and non-strict
//! relations are treated alike on sampled signals.

use super::formula::{AffineExpr, Formula, Interval, Predicate};
use super::LogicError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Not,
    And,
    Or,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Ge,
    Le,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, LogicError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'!' => Tok::Not,
            b'&' => Tok::And,
            b'|' => Tok::Or,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'[' => Tok::LBracket,
            b']' => Tok::RBracket,
            b',' => Tok::Comma,
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'>' | b'<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 1;
                }
                if c == b'>' {
                    Tok::Ge
                } else {
                    Tok::Le
                }
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
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
                let lit = &text[start..i];
                let value = lit
                    .parse::<f64>()
                    .map_err(|_| LogicError::Syntax { position: start, message: format!("invalid number '{lit}'") })?;
                out.push(Token { tok: Tok::Num(value), pos: start });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token { tok: Tok::Ident(text[start..i].to_string()), pos: start });
                continue;
            }
            _ => {
                return Err(LogicError::Syntax {
                    position: start,
                    message: format!("unexpected character '{}'", text[start..].chars().next().unwrap_or('?')),
                })
            }
        };
        i += 1;
        out.push(Token { tok, pos: start });
    }
    out.push(Token { tok: Tok::Eof, pos: text.len() });
    Ok(out)
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().filter(|&n| n >= 1).map(|n| n - 1)
}

fn is_keyword(name: &str) -> bool {
    matches!(name, "X" | "U" | "G" | "F" | "true" | "false" | "norm")
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, LogicError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn position(&self) -> usize {
        self.tokens[self.pos].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(LogicError::Syntax { position: self.position(), message: message.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn is_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == name)
    }

    fn formula(&mut self) -> PResult<Formula> {
        let left = self.or()?;
        if self.is_ident("U") {
            self.bump();
            let interval = self.optional_interval()?;
            let right = self.formula()?;
            return Ok(match interval {
                Some(i) => Formula::timed_until(i, left, right),
                None => Formula::until(left, right),
            });
        }
        Ok(left)
    }

    fn or(&mut self) -> PResult<Formula> {
        let mut left = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            left = Formula::or(left, self.and()?);
        }
        Ok(left)
    }

    fn and(&mut self) -> PResult<Formula> {
        let mut left = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            left = Formula::and(left, self.unary()?);
        }
        Ok(left)
    }

    fn unary(&mut self) -> PResult<Formula> {
        match self.peek().clone() {
            Tok::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Ident(name) if name == "X" => {
                self.bump();
                Ok(Formula::next(self.unary()?))
            }
            Tok::Ident(name) if name == "G" || name == "F" => {
                self.bump();
                let interval = self.optional_interval()?.unwrap_or_else(Interval::unbounded);
                let inner = self.unary()?;
                Ok(if name == "G" { Formula::always(interval, inner) } else { Formula::eventually(interval, inner) })
            }
            _ => self.primary(),
        }
    }

    fn optional_interval(&mut self) -> PResult<Option<Interval>> {
        if *self.peek() != Tok::LBracket {
            return Ok(None);
        }
        let at = self.position();
        self.bump();
        let lo = self.number()?;
        self.expect(Tok::Comma, "',' in interval")?;
        let hi = self.number()?;
        self.expect(Tok::RBracket, "']' closing interval")?;
        Interval::new(lo, hi)
            .map(Some)
            .map_err(|_| LogicError::Syntax { position: at, message: format!("interval [{lo}, {hi}] must satisfy 0 <= a <= b") })
    }

    fn number(&mut self) -> PResult<f64> {
        match self.bump() {
            Tok::Num(v) => Ok(v),
            _ => {
                self.pos -= 1;
                self.error("expected number")
            }
        }
    }

    fn primary(&mut self) -> PResult<Formula> {
        if self.is_ident("true") {
            self.bump();
            return Ok(Formula::True);
        }
        if self.is_ident("false") {
            self.bump();
            return Ok(Formula::False);
        }
        let save = self.pos;
        match self.predicate() {
            Ok(p) => return Ok(Formula::Pred(p)),
            Err(_) => self.pos = save,
        }
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let inner = self.formula()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) if !is_keyword(&name) && variable_index(&name).is_none() => {
                self.bump();
                Ok(Formula::Atom(name))
            }
            Tok::Ident(name) if variable_index(&name).is_some() => {
                // Re-run the predicate parse to surface its error position.
                self.predicate().map(Formula::Pred)
            }
            Tok::Eof => self.error("unexpected end of input"),
            _ => self.error("expected formula"),
        }
    }

    fn predicate(&mut self) -> PResult<Predicate> {
        if self.is_ident("norm") {
            self.bump();
            self.expect(Tok::LParen, "'(' after norm")?;
            let mut terms = vec![self.expr()?];
            while *self.peek() == Tok::Comma {
                self.bump();
                terms.push(self.expr()?);
            }
            self.expect(Tok::RParen, "')' closing norm")?;
            if *self.peek() != Tok::Le {
                return self.error("norm predicates must use '<='");
            }
            self.bump();
            let radius = self.expr()?;
            if !radius.is_constant() {
                return self.error("norm radius must be constant");
            }
            return Ok(Predicate::NormBall { terms, radius: radius.constant_term() });
        }
        let lhs = self.expr()?;
        let rel = self.bump();
        let rhs = self.expr()?;
        match rel {
            Tok::Ge => Ok(Predicate::Affine(lhs.sub(&rhs))),
            Tok::Le => Ok(Predicate::Affine(rhs.sub(&lhs))),
            _ => self.error("expected relation '>=' or '<='"),
        }
    }

    fn expr(&mut self) -> PResult<AffineExpr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = acc.add(&self.term()?);
                }
                Tok::Minus => {
                    self.bump();
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> PResult<AffineExpr> {
        let negate = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let mut acc = self.factor()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.factor()?;
            acc = if acc.is_constant() {
                rhs.scale(acc.constant_term())
            } else if rhs.is_constant() {
                acc.scale(rhs.constant_term())
            } else {
                return self.error("product of two variables is not affine");
            };
        }
        Ok(if negate { acc.neg() } else { acc })
    }

    fn factor(&mut self) -> PResult<AffineExpr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(AffineExpr::constant(v))
            }
            Tok::Ident(name) => match variable_index(&name) {
                Some(i) => {
                    self.bump();
                    Ok(AffineExpr::variable(i))
                }
                None => self.error(format!("'{name}' is not a state variable")),
            },
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            _ => self.error("expected number, variable or '('"),
        }
    }
}

/// Parses `text` in the grammar documented at the module level.
pub fn parse(text: &str) -> Result<Formula, LogicError> {
    let mut parser = Parser { tokens: tokenize(text)?, pos: 0 };
    let f = parser.formula()?;
    if *parser.peek() != Tok::Eof {
        return parser.error("unexpected trailing input");
    }
    Ok(f)
}
