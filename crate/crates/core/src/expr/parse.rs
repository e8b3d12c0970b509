use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Pow};
use thiserror::Error;

use super::{Atom, Expr, Func, Opaque, Rational, Symbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Param,
    State,
    Time,
    Noise,
}

/// Names an expression may refer to.
#[derive(Clone, Debug, Default)]
pub struct Scope {
    symbols: BTreeMap<String, VarKind>,
    functions: BTreeMap<String, usize>,
    permissive: bool,
}

impl Scope {
    pub fn new() -> Self {
        Scope::default()
    }

    /// A scope accepting every identifier as a symbol and every call as an
    /// unknown function.
    pub fn permissive() -> Self {
        Scope { permissive: true, ..Scope::default() }
    }

    pub fn declare(&mut self, name: &str, kind: VarKind) {
        self.symbols.insert(name.to_string(), kind);
    }

    pub fn declare_function(&mut self, name: &str, arity: usize) {
        self.functions.insert(name.to_string(), arity);
    }

    pub fn kind(&self, name: &str) -> Option<VarKind> {
        self.symbols.get(name).copied()
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.symbols.contains_key(name) || self.functions.contains_key(name)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(String),
    Op(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
}

fn lex(src: &str, line: usize, col0: usize) -> Result<Lexer, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    let err = |i: usize, m: String| ParseError { line, column: col0 + i, message: m };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut int = String::new();
            let mut frac = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                int.push(chars[i]);
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    frac.push(chars[i]);
                    i += 1;
                }
            }
            let mut exp10: i64 = 0;
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                let mut sign = 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    if chars[j] == '-' {
                        sign = -1;
                    }
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    let mut digits = String::new();
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        digits.push(chars[j]);
                        j += 1;
                    }
                    exp10 = sign * digits.parse::<i64>().map_err(|e| err(start, e.to_string()))?;
                    i = j;
                }
            }
            let digits = format!("{int}{frac}");
            let mantissa: BigInt = if digits.is_empty() { BigInt::from(0) } else { digits.parse().unwrap() };
            let shift = exp10 - frac.len() as i64;
            let ten = BigInt::from(10);
            let value = if shift >= 0 {
                Rational::from_integer(mantissa * Pow::pow(&ten, shift as u32))
            } else {
                Rational::new(mantissa, Pow::pow(&ten, (-shift) as u32))
            };
            toks.push((Tok::Num(value), start));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut name = String::new();
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                name.push(chars[i]);
                i += 1;
            }
            toks.push((Tok::Ident(name), start));
            continue;
        }
        if "+-*/^(),".contains(c) {
            toks.push((Tok::Op(c), start));
            i += 1;
            continue;
        }
        return Err(err(i, format!("unexpected character '{c}'")));
    }
    toks.push((Tok::End, chars.len()));
    Ok(Lexer { toks })
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    scope: &'a Scope,
    line: usize,
    col0: usize,
}

/// Parses an expression. Column numbers in errors are 1-based.
pub fn parse_expr(src: &str, scope: &Scope) -> Result<Expr, ParseError> {
    parse_expr_at(src, scope, 1, 1)
}

/// Parses an expression that starts at (`line`, `column`) of a larger file,
/// so errors point into that file.
pub fn parse_expr_at(src: &str, scope: &Scope, line: usize, column: usize) -> Result<Expr, ParseError> {
    let lexer = lex(src, line, column)?;
    let mut p = Parser { toks: lexer.toks, pos: 0, scope, line, col0: column };
    if matches!(p.peek(), Tok::End) {
        return Err(p.error("empty expression"));
    }
    let e = p.expr()?;
    if !matches!(p.peek(), Tok::End) {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column: self.col0 + self.toks[self.pos].1, message: msg.into() }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = &acc + &self.term()?;
            } else if self.eat('-') {
                acc = &acc - &self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        loop {
            if self.eat('*') {
                acc = &acc * &self.factor()?;
            } else if *self.peek() == Tok::Op('/') {
                self.bump();
                let d = self.factor()?;
                if d.is_zero() {
                    return Err(self.error("division by zero"));
                }
                acc = &acc * &d.recip();
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(-self.factor()?);
        }
        let base = self.base()?;
        if self.eat('^') {
            let paren = self.eat('(');
            let neg = self.eat('-');
            let n = match self.bump() {
                Tok::Num(n) if n.is_integer() => n,
                _ => return Err(self.error("exponent must be an integer")),
            };
            if paren {
                self.expect(')')?;
            }
            let k: i32 = n
                .to_integer()
                .try_into()
                .map_err(|_| self.error("exponent out of range"))?;
            let k = if neg { -k } else { k };
            if k < 0 && base.is_zero() {
                return Err(self.error("division by zero"));
            }
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let at = self.pos;
        match self.bump() {
            Tok::Num(n) => Ok(Expr::constant(n)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::Op('(') {
                    self.bump();
                    self.call(&name, at)
                } else {
                    if !self.scope.permissive && !self.scope.symbols.contains_key(&name) {
                        self.pos = at;
                        return Err(self.error(format!("undeclared symbol '{name}'")));
                    }
                    Ok(Expr::var(&name))
                }
            }
            Tok::End => Err(self.error("unexpected end of expression")),
            Tok::Op(c) => {
                self.pos = at;
                Err(self.error(format!("unexpected '{c}'")))
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut out = Vec::new();
        if self.eat(')') {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.eat(')') {
                return Ok(out);
            }
            self.expect(',')?;
        }
    }

    fn call(&mut self, name: &str, at: usize) -> Result<Expr, ParseError> {
        let builtin = match name {
            "exp" => Some(Func::Exp),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        };
        if let Some(f) = builtin {
            let args = self.args()?;
            if args.len() != 1 {
                self.pos = at;
                return Err(self.error(format!("{name} takes one argument")));
            }
            return Ok(Expr::apply(f, &args[0]));
        }
        if name == "deriv" {
            return self.deriv(at);
        }
        let args = self.args()?;
        match self.scope.functions.get(name) {
            Some(&n) if n != args.len() => {
                self.pos = at;
                Err(self.error(format!("{name} takes {n} arguments, got {}", args.len())))
            }
            None if !self.scope.permissive => {
                self.pos = at;
                Err(self.error(format!("undeclared function '{name}'")))
            }
            _ => Ok(Expr::opaque(&Symbol::new(name), args)),
        }
    }

    /// `deriv(e, k1, ..., kn)`: each `k` is a symbol to differentiate by, or
    /// an integer argument slot when `e` is a single unknown function.
    fn deriv(&mut self, at: usize) -> Result<Expr, ParseError> {
        let mut e = self.expr()?;
        while self.eat(',') {
            match self.bump() {
                Tok::Ident(v) => e = e.diff(&Symbol::new(&v)),
                Tok::Num(n) if n.is_integer() => {
                    let slot: usize = n
                        .to_integer()
                        .try_into()
                        .map_err(|_| self.error("bad argument slot"))?;
                    let Some(mut o) = single_opaque(&e) else {
                        self.pos = at;
                        return Err(self.error("slot derivatives apply to a single unknown function"));
                    };
                    if slot >= o.args.len() {
                        self.pos = at;
                        return Err(self.error("argument slot out of range"));
                    }
                    o.partials[slot] += 1;
                    e = Expr::from_opaque(o);
                }
                _ => return Err(self.error("expected a symbol or slot index")),
            }
        }
        self.expect(')')?;
        Ok(e)
    }
}

fn single_opaque(e: &Expr) -> Option<Opaque> {
    let (m, c) = e.as_single_term()?;
    match m.factors() {
        [(Atom::Opaque(o), 1)] if c.is_one() => Some(o.clone()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expr(s, &Scope::permissive()).unwrap()
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(p("-x^2"), -Expr::var("x").pow(2));
        assert_eq!(p("1/2*x"), Expr::var("x").scale(&Rational::new(1.into(), 2.into())));
        assert_eq!(p("2*(x+1) - 2"), Expr::var("x").scale(&Rational::from_integer(2.into())));
    }

    #[test]
    fn decimals_are_exact() {
        assert_eq!(p("0.25"), Expr::frac(1, 4));
        assert_eq!(p("1.5e-1"), Expr::frac(3, 20));
    }

    #[test]
    fn derivatives_of_unknowns() {
        let a = p("deriv(f(x,t), x)");
        let b = p("deriv(f(x,t), 0)");
        assert_eq!(a, b);
        assert_eq!(p("deriv(x^3, x)"), p("3*x^2"));
    }

    #[test]
    fn strict_scope_rejects_unknown_names() {
        let mut s = Scope::new();
        s.declare("x", VarKind::State);
        let e = parse_expr("x + y", &s).unwrap_err();
        assert_eq!((e.line, e.column), (1, 5));
        assert!(e.message.contains("undeclared symbol"));
        assert!(parse_expr("g(x)", &s).is_err());
    }

    #[test]
    fn errors_carry_position() {
        let e = parse_expr_at("x + * 2", &Scope::permissive(), 7, 10).unwrap_err();
        assert_eq!(e.line, 7);
        assert_eq!(e.column, 14);
    }
}
