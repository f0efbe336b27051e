//! Human-readable Trader formulae.
//!
//! One term per line, e.g. `−2.28·(SHP_t > AHT_{t−3})` or
//! `+0.80·sign(WPP_{t−3} + SKY_t)`. The parser also accepts ASCII `-` for
//! the minus sign and `*` for both `·` and `×`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use super::{Activation, Operator, Term, Trader};
use crate::error::{Error, Result};

/// Operator with its `(stock, delay)` operands.
type Application = (Operator, (usize, usize), (usize, usize));

const MINUS: char = '\u{2212}';
const DOT: char = '\u{b7}';
const TIMES: char = '\u{d7}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FormatStyle {
    /// Two-decimal weights; projections print only the operand they keep.
    #[default]
    Display,
    /// Round-trip weights and explicit projections (`x(A_t, B_t)`), so
    /// [`parse_trader`] recovers the exact Trader.
    Exact,
}

fn activation_label(a: Activation) -> &'static str {
    match a {
        Activation::Identity => "",
        Activation::Tanh => "tanh",
        Activation::Exp => "exp",
        Activation::Sign => "sign",
        Activation::Relu => "ReLU",
    }
}

fn reference(out: &mut String, symbol: &str, delay: usize) {
    if delay == 0 {
        let _ = write!(out, "{symbol}_t");
    } else {
        let _ = write!(out, "{symbol}_{{t{MINUS}{delay}}}");
    }
}

fn format_term(out: &mut String, term: &Term, symbols: &[String], style: FormatStyle) {
    let sign = if term.weight.is_sign_negative() { MINUS } else { '+' };
    let magnitude = term.weight.abs();
    match style {
        FormatStyle::Display => {
            let _ = write!(out, "{sign}{magnitude:.2}{DOT}");
        }
        FormatStyle::Exact => {
            let _ = write!(out, "{sign}{magnitude}{DOT}");
        }
    }

    let lhs = |o: &mut String| reference(o, &symbols[term.lhs_stock], term.lhs_delay);
    let rhs = |o: &mut String| reference(o, &symbols[term.rhs_stock], term.rhs_delay);
    let infix = match term.op {
        Operator::Add => Some('+'),
        Operator::Sub => Some(MINUS),
        Operator::Mul => Some(TIMES),
        Operator::Greater => Some('>'),
        Operator::Less => Some('<'),
        _ => None,
    };
    let act = activation_label(term.activation);
    out.push_str(act);

    if let Some(symbol) = infix {
        out.push('(');
        lhs(out);
        let _ = write!(out, " {symbol} ");
        rhs(out);
        out.push(')');
        return;
    }

    let wrapped = !act.is_empty();
    if wrapped {
        out.push('(');
    }
    let func = match (term.op, style) {
        (Operator::Max, _) => Some("max"),
        (Operator::Min, _) => Some("min"),
        (Operator::Corr, _) => Some("corr"),
        (Operator::ProjectX, FormatStyle::Exact) => Some("x"),
        (Operator::ProjectY, FormatStyle::Exact) => Some("y"),
        _ => None,
    };
    match (func, term.op) {
        (Some(name), _) => {
            out.push_str(name);
            out.push('(');
            lhs(out);
            out.push_str(", ");
            rhs(out);
            out.push(')');
        }
        (None, Operator::ProjectY) => rhs(out),
        (None, _) => lhs(out),
    }
    if wrapped {
        out.push(')');
    }
}

/// Renders one term per line. Terms with zero weight are printed, never
/// dropped. `symbols` must cover every stock index the Trader references.
pub fn format_trader(trader: &Trader, symbols: &[String], style: FormatStyle) -> String {
    let mut out = String::new();
    for (i, term) in trader.terms.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        format_term(&mut out, term, symbols, style);
    }
    out
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    symbols: &'a [String],
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

impl Parser<'_> {
    fn error<T>(&self, msg: impl ToString) -> Result<T> {
        Err(Error::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.error(format!("expected `{c}`"))
        }
    }

    fn word(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(is_word_char) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            let exponent_sign = (c == '+' || c == '-')
                && matches!(self.chars.get(self.pos.wrapping_sub(1)), Some('e' | 'E'))
                && self.pos > start;
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exponent_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                self.pos = start;
                self.error(format!("invalid number `{text}`"))
            }
        }
    }

    fn weight(&mut self, first: bool) -> Result<f64> {
        self.skip_ws();
        let negative = match self.peek() {
            Some('+') => false,
            Some('-') | Some(MINUS) => true,
            _ if first => {
                return self.number();
            }
            _ => return self.error("expected `+` or `-` before term weight"),
        };
        self.pos += 1;
        let v = self.number()?;
        Ok(if negative { -v } else { v })
    }

    fn reference(&mut self) -> Result<(usize, usize)> {
        let start = self.pos;
        let word = self.word();
        let (name, delay) = if let Some(name) = word.strip_suffix("_t") {
            (name, 0)
        } else if let Some(name) = word.strip_suffix('_').filter(|_| self.peek() == Some('{')) {
            self.pos += 1;
            self.expect('t')?;
            let delay = if self.eat('-') || self.eat(MINUS) {
                self.skip_ws();
                let digits_start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let digits: String = self.chars[digits_start..self.pos].iter().collect();
                match digits.parse::<usize>() {
                    Ok(d) => d,
                    Err(_) => return self.error("expected delay digits"),
                }
            } else {
                0
            };
            self.expect('}')?;
            (name, delay)
        } else {
            self.pos = start;
            return self.error(format!("expected a reference like `SYM_t`, found `{word}`"));
        };
        match self.symbols.iter().position(|s| s == name) {
            Some(i) => Ok((i, delay)),
            None => Err(Error::UnknownSymbol(name.into())),
        }
    }

    fn infix_op(&mut self) -> Option<Operator> {
        self.skip_ws();
        let op = match self.peek()? {
            '+' => Operator::Add,
            '-' | MINUS => Operator::Sub,
            '*' | TIMES => Operator::Mul,
            '>' => Operator::Greater,
            '<' => Operator::Less,
            _ => return None,
        };
        self.pos += 1;
        Some(op)
    }

    /// `(op, lhs, rhs)` for a function call whose name was already read.
    fn call(&mut self, name: &str) -> Result<Application> {
        let op = match name {
            "max" => Operator::Max,
            "min" => Operator::Min,
            "corr" => Operator::Corr,
            "x" => Operator::ProjectX,
            "y" => Operator::ProjectY,
            _ => return self.error(format!("unknown function `{name}`")),
        };
        self.expect('(')?;
        let lhs = self.reference()?;
        self.expect(',')?;
        let rhs = self.reference()?;
        self.expect(')')?;
        Ok((op, lhs, rhs))
    }

    /// Operator application: a call, an infix pair, or a bare reference.
    fn inner(&mut self) -> Result<Application> {
        self.skip_ws();
        let start = self.pos;
        let word = self.word();
        if self.peek() == Some('(') {
            return self.call(&word);
        }
        self.pos = start;
        let lhs = self.reference()?;
        let after_lhs = self.pos;
        let Some(op) = self.infix_op() else {
            return Ok((Operator::ProjectX, lhs, lhs));
        };
        match self.reference() {
            Ok(rhs) => Ok((op, lhs, rhs)),
            // a bare reference followed by the next signed term
            Err(Error::Syntax { .. }) if op == Operator::Add || op == Operator::Sub => {
                self.pos = after_lhs;
                Ok((Operator::ProjectX, lhs, lhs))
            }
            Err(e) => Err(e),
        }
    }

    fn term(&mut self, first: bool) -> Result<Term> {
        let weight = self.weight(first)?;
        if !(self.eat(DOT) || self.eat('*')) {
            return self.error("expected `·` after weight");
        }
        self.skip_ws();
        let (activation, (op, lhs, rhs)) = if self.eat('(') {
            let inner = self.inner()?;
            self.expect(')')?;
            (Activation::Identity, inner)
        } else {
            let start = self.pos;
            let word = self.word();
            let activation = match word.as_str() {
                "tanh" => Some(Activation::Tanh),
                "exp" => Some(Activation::Exp),
                "sign" => Some(Activation::Sign),
                "ReLU" | "relu" => Some(Activation::Relu),
                _ => None,
            };
            match activation {
                Some(a) if self.peek() == Some('(') => {
                    self.pos += 1;
                    let inner = self.inner()?;
                    self.expect(')')?;
                    (a, inner)
                }
                _ => {
                    self.pos = start;
                    (Activation::Identity, self.inner()?)
                }
            }
        };
        Ok(Term {
            lhs_stock: lhs.0,
            rhs_stock: rhs.0,
            lhs_delay: lhs.1,
            rhs_delay: rhs.1,
            op,
            activation,
            weight,
        })
    }
}

/// Inverse of [`format_trader`] (exact for [`FormatStyle::Exact`]). Terms may
/// be separated by newlines or any whitespace.
pub fn parse_trader(text: &str, symbols: &[String]) -> Result<Trader> {
    let mut parser = Parser {
        chars: text.chars().collect(),
        pos: 0,
        symbols,
    };
    let mut terms = Vec::new();
    loop {
        parser.skip_ws();
        if parser.peek().is_none() {
            break;
        }
        terms.push(parser.term(terms.is_empty())?);
    }
    if terms.is_empty() {
        return parser.error("empty formula");
    }
    Ok(Trader { terms })
}
