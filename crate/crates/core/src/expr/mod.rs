//! Symbolic expressions in canonical form.
//!
//! An [`Expr`] is stored as a sum of terms, each term an exact rational
//! coefficient times a [`Monomial`] (a sorted product of atoms raised to
//! nonzero integer powers). Every constructor and arithmetic operation
//! returns a normalized value, so structural equality is the equality test
//! for everything inside the supported fragment:
//!
//! * polynomials and Laurent monomials in symbols,
//! * `exp`, with all exponentials of a term merged into one factor,
//! * `sin`/`cos`, with arguments expanded to single primitive terms and
//!   `sin^2` rewritten as `1 - cos^2`,
//! * `sqrt`, with square factors of rational constants extracted and
//!   `sqrt(a)^2` folded back to `a`,
//! * opaque function applications carrying partial-derivative counts.
//!
//! Reciprocals of multi-term expressions are kept as an opaque `Inv` atom;
//! nothing cancels against them, and the zero test treats them as outside
//! the decidable fragment.

mod diff;
mod display;
mod eval;
mod parse;
mod subst;
mod zero;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub use eval::{CompiledExpr, EvalError};
pub use parse::{parse_expr, parse_expr_at, ParseError, Scope, VarKind};
pub use subst::{FnBinding, FnBindings, SubstError};
pub use zero::{zero_test, ZeroTest};

/// Exact rational constant.
pub type Rational = BigRational;

/// Multiple-angle arguments above this multiplier are left unexpanded.
const MAX_ANGLE_EXPANSION: u32 = 12;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(name: &str) -> Self {
        Symbol(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol::new(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Application of an unanalyzed function, `partials[i]` counting the
/// derivatives taken with respect to argument slot `i`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Opaque {
    pub name: Symbol,
    pub args: Vec<Expr>,
    pub partials: Vec<u32>,
}

impl Opaque {
    pub fn is_derivative(&self) -> bool {
        self.partials.iter().any(|&k| k > 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Sym(Symbol),
    Opaque(Opaque),
    Func(Func, Expr),
    /// `1 / e` for a multi-term `e`.
    Inv(Expr),
}

impl Atom {
    fn as_expr(&self) -> Expr {
        Expr::term(Rational::one(), Monomial(vec![(self.clone(), 1)]))
    }

    /// True when the atom (or anything nested in it) mentions `s`.
    pub fn depends_on(&self, s: &Symbol) -> bool {
        match self {
            Atom::Sym(x) => x == s,
            Atom::Opaque(o) => o.args.iter().any(|a| a.depends_on(s)),
            Atom::Func(_, a) | Atom::Inv(a) => a.depends_on(s),
        }
    }
}

/// Sorted product of atoms with nonzero integer exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<(Atom, i32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn factors(&self) -> &[(Atom, i32)] {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree_in(&self, s: &Symbol) -> i32 {
        self.0
            .iter()
            .find_map(|(a, p)| match a {
                Atom::Sym(x) if x == s => Some(*p),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Builds a monomial from factors that are already known to be in
    /// reduced form (no exp merging or power folding needed).
    pub(crate) fn from_reduced(mut factors: Vec<(Atom, i32)>) -> Self {
        factors.sort_by(|a, b| a.0.cmp(&b.0));
        Monomial(factors)
    }
}

/// A canonical sum of rational multiples of monomials.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Expr(Arc<BTreeMap<Monomial, Rational>>);

impl Default for Expr {
    fn default() -> Self {
        Expr::zero()
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub(crate) fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

impl Expr {
    pub fn zero() -> Self {
        Expr(Arc::new(BTreeMap::new()))
    }

    pub fn one() -> Self {
        Expr::constant(Rational::one())
    }

    pub fn int(n: i64) -> Self {
        Expr::constant(rat(n))
    }

    pub fn frac(n: i64, d: i64) -> Self {
        Expr::constant(Rational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn constant(c: Rational) -> Self {
        Expr::term(c, Monomial::one())
    }

    pub fn sym(s: &Symbol) -> Self {
        Atom::Sym(s.clone()).as_expr()
    }

    pub fn var(name: &str) -> Self {
        Expr::sym(&Symbol::new(name))
    }

    pub(crate) fn term(c: Rational, m: Monomial) -> Self {
        let mut map = BTreeMap::new();
        if !c.is_zero() {
            map.insert(m, c);
        }
        Expr(Arc::new(map))
    }

    fn from_map(map: BTreeMap<Monomial, Rational>) -> Self {
        Expr(Arc::new(map))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.as_rational().is_some_and(|c| c.is_one())
    }

    /// Number of terms in the canonical sum.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &Rational)> + ExactSizeIterator {
        self.0.iter()
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self.0.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.0.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    /// The single term, when the expression has exactly one.
    pub fn as_single_term(&self) -> Option<(&Monomial, &Rational)> {
        if self.0.len() == 1 {
            self.0.iter().next()
        } else {
            None
        }
    }

    pub fn as_symbol(&self) -> Option<&Symbol> {
        let (m, c) = self.as_single_term()?;
        match m.0.as_slice() {
            [(Atom::Sym(s), 1)] if c.is_one() => Some(s),
            _ => None,
        }
    }

    pub fn depends_on(&self, s: &Symbol) -> bool {
        self.0
            .keys()
            .any(|m| m.0.iter().any(|(a, _)| a.depends_on(s)))
    }

    pub fn depends_on_any(&self, syms: &[Symbol]) -> bool {
        syms.iter().any(|s| self.depends_on(s))
    }

    /// Free symbols, including those inside function arguments.
    pub fn free_symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<Symbol>) {
        for m in self.0.keys() {
            for (a, _) in &m.0 {
                match a {
                    Atom::Sym(s) => {
                        out.insert(s.clone());
                    }
                    Atom::Opaque(o) => o.args.iter().for_each(|e| e.collect_symbols(out)),
                    Atom::Func(_, e) | Atom::Inv(e) => e.collect_symbols(out),
                }
            }
        }
    }

    /// Names of opaque functions applied anywhere in the expression.
    pub fn opaque_names(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |a| {
            if let Atom::Opaque(o) = a {
                out.insert(o.name.clone());
            }
        });
        out
    }

    pub fn contains_opaque(&self) -> bool {
        let mut found = false;
        self.visit_atoms(&mut |a| found |= matches!(a, Atom::Opaque(_)));
        found
    }

    /// Visits every atom, recursing into function arguments.
    pub fn visit_atoms(&self, f: &mut dyn FnMut(&Atom)) {
        for m in self.0.keys() {
            for (a, _) in &m.0 {
                f(a);
                match a {
                    Atom::Sym(_) => {}
                    Atom::Opaque(o) => o.args.iter().for_each(|e| e.visit_atoms(f)),
                    Atom::Func(_, e) | Atom::Inv(e) => e.visit_atoms(f),
                }
            }
        }
    }

    pub fn scale(&self, c: &Rational) -> Expr {
        if c.is_zero() {
            return Expr::zero();
        }
        Expr::from_map(self.0.iter().map(|(m, k)| (m.clone(), k * c)).collect())
    }

    pub fn pow(&self, n: i32) -> Expr {
        match n.cmp(&0) {
            std::cmp::Ordering::Equal => Expr::one(),
            std::cmp::Ordering::Greater => {
                let mut base = self.clone();
                let mut acc = Expr::one();
                let mut k = n as u32;
                while k > 0 {
                    if k & 1 == 1 {
                        acc = &acc * &base;
                    }
                    k >>= 1;
                    if k > 0 {
                        base = &base * &base;
                    }
                }
                acc
            }
            std::cmp::Ordering::Less => self.recip().pow(-n),
        }
    }

    /// Multiplicative inverse. Single terms invert exactly; sums become an
    /// `Inv` atom after pulling out their rational content.
    ///
    /// Panics on the zero expression.
    pub fn recip(&self) -> Expr {
        assert!(!self.is_zero(), "reciprocal of zero expression");
        if let Some((m, c)) = self.as_single_term() {
            return Expr::from_factors(
                c.recip(),
                m.0.iter().map(|(a, p)| (a.clone(), -p)).collect(),
            );
        }
        let content = self.content();
        let primitive = self.scale(&content.recip());
        Expr::from_factors(content.recip(), vec![(Atom::Inv(primitive), 1)])
    }

    /// Rational content: gcd of numerators over lcm of denominators, signed
    /// so that the leading coefficient of the primitive part is positive.
    pub fn content(&self) -> Rational {
        let mut num = BigInt::zero();
        let mut den = BigInt::one();
        for c in self.0.values() {
            num = num.gcd(c.numer());
            den = den.lcm(c.denom());
        }
        if num.is_zero() {
            return Rational::one();
        }
        let mut g = Rational::new(num, den);
        if let Some(lead) = self.0.values().next() {
            if lead.is_negative() {
                g = -g;
            }
        }
        g
    }

    /// Builds `coeff * prod(atom^power)` and normalizes it.
    pub(crate) fn from_factors(coeff: Rational, factors: Vec<(Atom, i32)>) -> Expr {
        if coeff.is_zero() {
            return Expr::zero();
        }
        let mut powers: BTreeMap<Atom, i32> = BTreeMap::new();
        for (a, p) in factors {
            *powers.entry(a).or_insert(0) += p;
        }
        powers.retain(|_, p| *p != 0);

        let mut exp_arg = Expr::zero();
        let mut has_exp = false;
        let mut kept: Vec<(Atom, i32)> = Vec::with_capacity(powers.len());
        let mut extra: Vec<Expr> = Vec::new();
        for (a, p) in powers {
            match a {
                Atom::Func(Func::Exp, arg) => {
                    has_exp = true;
                    exp_arg = &exp_arg + &arg.scale(&rat(p as i64));
                }
                Atom::Func(Func::Sin, arg) if p >= 2 => {
                    let cos = Expr::from_factors(
                        Rational::one(),
                        vec![(Atom::Func(Func::Cos, arg.clone()), 2)],
                    );
                    extra.push((Expr::one() - cos).pow(p / 2));
                    if p % 2 == 1 {
                        kept.push((Atom::Func(Func::Sin, arg), 1));
                    }
                }
                Atom::Func(Func::Sqrt, arg) if !(0..=1).contains(&p) => {
                    let q = p.div_euclid(2);
                    let r = p.rem_euclid(2);
                    extra.push(arg.pow(q));
                    if r == 1 {
                        kept.push((Atom::Func(Func::Sqrt, arg), 1));
                    }
                }
                Atom::Inv(arg) if p < 0 => extra.push(arg.pow(-p)),
                other => kept.push((other, p)),
            }
        }
        if has_exp && !exp_arg.is_zero() {
            kept.push((Atom::Func(Func::Exp, exp_arg), 1));
        }
        let mut out = Expr::term(coeff, Monomial::from_reduced(kept));
        for e in extra {
            out = &out * &e;
        }
        out
    }

    fn mul_terms(c1: &Rational, m1: &Monomial, c2: &Rational, m2: &Monomial) -> Expr {
        let simple = |m: &Monomial| {
            m.0.iter().all(|(a, _)| {
                matches!(a, Atom::Sym(_) | Atom::Opaque(_))
                    || matches!(a, Atom::Func(Func::Cos, _))
            })
        };
        if simple(m1) && simple(m2) {
            // Only exponent merging is needed.
            let mut out: Vec<(Atom, i32)> = Vec::with_capacity(m1.0.len() + m2.0.len());
            let (mut i, mut j) = (0, 0);
            while i < m1.0.len() || j < m2.0.len() {
                if j == m2.0.len() || (i < m1.0.len() && m1.0[i].0 < m2.0[j].0) {
                    out.push(m1.0[i].clone());
                    i += 1;
                } else if i == m1.0.len() || m2.0[j].0 < m1.0[i].0 {
                    out.push(m2.0[j].clone());
                    j += 1;
                } else {
                    let p = m1.0[i].1 + m2.0[j].1;
                    if p != 0 {
                        out.push((m1.0[i].0.clone(), p));
                    }
                    i += 1;
                    j += 1;
                }
            }
            return Expr::term(c1 * c2, Monomial(out));
        }
        let mut factors = m1.0.clone();
        factors.extend(m2.0.iter().cloned());
        Expr::from_factors(c1 * c2, factors)
    }

    // ----- elementary functions -----

    pub fn exp(arg: &Expr) -> Expr {
        if arg.is_zero() {
            return Expr::one();
        }
        Expr::from_factors(Rational::one(), vec![(Atom::Func(Func::Exp, arg.clone()), 1)])
    }

    pub fn sin(arg: &Expr) -> Expr {
        Expr::trig(Func::Sin, arg)
    }

    pub fn cos(arg: &Expr) -> Expr {
        Expr::trig(Func::Cos, arg)
    }

    fn trig(f: Func, arg: &Expr) -> Expr {
        if arg.is_zero() {
            return if f == Func::Sin { Expr::zero() } else { Expr::one() };
        }
        if arg.len() > 1 {
            // sin(a + b) = sin a cos b + cos a sin b; cos(a + b) = cos a cos b - sin a sin b
            let mut it = arg.terms();
            let (m, c) = it.next().unwrap();
            let head = Expr::term(c.clone(), m.clone());
            let rest = arg - &head;
            return match f {
                Func::Sin => {
                    &(&Expr::sin(&head) * &Expr::cos(&rest))
                        + &(&Expr::cos(&head) * &Expr::sin(&rest))
                }
                _ => {
                    &(&Expr::cos(&head) * &Expr::cos(&rest))
                        - &(&Expr::sin(&head) * &Expr::sin(&rest))
                }
            };
        }
        let (m, c) = arg.as_single_term().unwrap();
        if c.is_negative() {
            let flipped = Expr::trig(f, &arg.scale(&rat(-1)));
            return if f == Func::Sin { -flipped } else { flipped };
        }
        let numer = c.numer().to_u32().unwrap_or(u32::MAX);
        if numer > 1 && numer <= MAX_ANGLE_EXPANSION {
            let unit = Expr::term(Rational::new(BigInt::one(), c.denom().clone()), m.clone());
            let (s1, c1) = (
                Expr::from_factors(Rational::one(), vec![(Atom::Func(Func::Sin, unit.clone()), 1)]),
                Expr::from_factors(Rational::one(), vec![(Atom::Func(Func::Cos, unit.clone()), 1)]),
            );
            let (mut s, mut co) = (s1.clone(), c1.clone());
            for _ in 1..numer {
                let ns = &(&s * &c1) + &(&co * &s1);
                let nc = &(&co * &c1) - &(&s * &s1);
                s = ns;
                co = nc;
            }
            return if f == Func::Sin { s } else { co };
        }
        Expr::from_factors(Rational::one(), vec![(Atom::Func(f, arg.clone()), 1)])
    }

    pub fn sqrt(arg: &Expr) -> Expr {
        if arg.is_zero() {
            return Expr::zero();
        }
        if let Some((m, c)) = arg.as_single_term() {
            let negative = c.is_negative();
            let (outside, inside) = split_square(&c.abs());
            let inside = if negative { -inside } else { inside };
            if m.is_one() && inside.is_one() {
                return Expr::constant(outside);
            }
            let radicand = Expr::term(inside, m.clone());
            return Expr::from_factors(outside, vec![(Atom::Func(Func::Sqrt, radicand), 1)]);
        }
        Expr::from_factors(Rational::one(), vec![(Atom::Func(Func::Sqrt, arg.clone()), 1)])
    }

    /// Unanalyzed function applied to `args`.
    pub fn opaque(name: &Symbol, args: Vec<Expr>) -> Expr {
        let n = args.len();
        Atom::Opaque(Opaque { name: name.clone(), args, partials: vec![0; n] }).as_expr()
    }

    pub(crate) fn from_opaque(o: Opaque) -> Expr {
        Atom::Opaque(o).as_expr()
    }

    pub fn apply(f: Func, arg: &Expr) -> Expr {
        match f {
            Func::Exp => Expr::exp(arg),
            Func::Sin => Expr::sin(arg),
            Func::Cos => Expr::cos(arg),
            Func::Sqrt => Expr::sqrt(arg),
        }
    }

    /// Rebuilds a single factor `atom^p` through the normalizing constructors.
    pub(crate) fn atom_pow(a: &Atom, p: i32) -> Expr {
        Expr::from_factors(Rational::one(), vec![(a.clone(), p)])
    }

    /// Polynomial coefficients with respect to a set of symbols: maps each
    /// exponent vector to the coefficient expression free of those symbols.
    /// Returns `None` if any of the symbols occurs other than as a plain
    /// nonnegative power.
    pub fn coefficients_in(&self, vars: &[Symbol]) -> Option<BTreeMap<Vec<i32>, Expr>> {
        let mut out: BTreeMap<Vec<i32>, Expr> = BTreeMap::new();
        for (m, c) in self.terms() {
            let mut exps = vec![0; vars.len()];
            let mut rest = Vec::new();
            for (a, p) in &m.0 {
                match a {
                    Atom::Sym(s) if vars.contains(s) => {
                        if *p < 0 {
                            return None;
                        }
                        let k = vars.iter().position(|v| v == s).unwrap();
                        exps[k] = *p;
                    }
                    other => {
                        if vars.iter().any(|v| other.depends_on(v)) {
                            return None;
                        }
                        rest.push((other.clone(), *p));
                    }
                }
            }
            let entry = out.entry(exps).or_default();
            *entry = &*entry + &Expr::term(c.clone(), Monomial(rest));
        }
        out.retain(|_, e| !e.is_zero());
        Some(out)
    }
}

/// Splits a positive rational `c` as `outside^2 * inside` with `inside` a
/// square-free integer (square factors found by trial division).
fn split_square(c: &Rational) -> (Rational, Rational) {
    // sqrt(p/q) = sqrt(p*q)/q
    let n = c.numer() * c.denom();
    let mut rest = n;
    let mut out = BigInt::one();
    let mut d = BigInt::from(2);
    let limit = BigInt::from(100_000);
    while &d * &d <= rest && d <= limit {
        let sq = &d * &d;
        while (&rest % &sq).is_zero() {
            rest /= &sq;
            out *= &d;
        }
        d += 1;
    }
    (Rational::new(out, c.denom().clone()), Rational::from_integer(rest))
}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::int(n)
    }
}

impl From<&Symbol> for Expr {
    fn from(s: &Symbol) -> Self {
        Expr::sym(s)
    }
}

impl<'a> Add<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let mut map = (*self.0).clone();
        for (m, c) in rhs.0.iter() {
            match map.get_mut(m) {
                Some(v) => {
                    *v += c;
                    if v.is_zero() {
                        map.remove(m);
                    }
                }
                None => {
                    map.insert(m.clone(), c.clone());
                }
            }
        }
        Expr::from_map(map)
    }
}

impl<'a> Sub<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        self + &(-rhs)
    }
}

impl<'a> Mul<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        if self.is_zero() || rhs.is_zero() {
            return Expr::zero();
        }
        if let Some(c) = self.as_rational() {
            return rhs.scale(&c);
        }
        if let Some(c) = rhs.as_rational() {
            return self.scale(&c);
        }
        let mut acc: BTreeMap<Monomial, Rational> = BTreeMap::new();
        for (m1, c1) in self.terms() {
            for (m2, c2) in rhs.terms() {
                let prod = Expr::mul_terms(c1, m1, c2, m2);
                for (m, c) in prod.terms() {
                    let slot = acc.entry(m.clone()).or_insert_with(Rational::zero);
                    *slot += c;
                }
            }
        }
        acc.retain(|_, c| !c.is_zero());
        Expr::from_map(acc)
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.scale(&rat(-1))
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident) => {
        impl $tr<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $tr<&'a Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                (&self).$method(rhs)
            }
        }
        impl<'a> $tr<Expr> for &'a Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                self.$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl std::iter::Sum for Expr {
    fn sum<I: Iterator<Item = Expr>>(iter: I) -> Expr {
        iter.fold(Expr::zero(), |a, b| &a + &b)
    }
}

impl std::ops::Div<&Expr> for &Expr {
    type Output = Expr;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: &Expr) -> Expr {
        self * &rhs.recip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var("x")
    }
    fn t() -> Expr {
        Expr::var("t")
    }

    #[test]
    fn like_terms_collect() {
        assert_eq!(&x() + &x(), x().scale(&rat(2)));
        assert!((&x() - &x()).is_zero());
    }

    #[test]
    fn pythagoras_normalizes_to_one() {
        let e = &Expr::cos(&t()).pow(2) + &Expr::sin(&t()).pow(2);
        assert_eq!(e, Expr::one());
    }

    #[test]
    fn exponentials_merge() {
        let a = Expr::exp(&t());
        let b = Expr::exp(&(-t()));
        assert_eq!(&a * &b, Expr::one());
        assert_eq!(&a * &a, Expr::exp(&t().scale(&rat(2))));
        assert_eq!(a.pow(-1), b);
    }

    #[test]
    fn double_angle_expands() {
        let two_t = t().scale(&rat(2));
        let lhs = Expr::sin(&two_t);
        let rhs = (Expr::sin(&t()) * Expr::cos(&t())).scale(&rat(2));
        assert_eq!(lhs, rhs);
        let c = Expr::cos(&two_t);
        let rhs = &Expr::cos(&t()).pow(2).scale(&rat(2)) - &Expr::one();
        assert_eq!(c, rhs);
    }

    #[test]
    fn odd_even_trig() {
        assert_eq!(Expr::sin(&(-t())), -Expr::sin(&t()));
        assert_eq!(Expr::cos(&(-t())), Expr::cos(&t()));
    }

    #[test]
    fn sqrt_folds_squares() {
        let k = Expr::var("k");
        let r = Expr::sqrt(&(k.pow(2).scale(&rat(2))));
        assert_eq!(r.pow(2), k.pow(2).scale(&rat(2)));
        assert_eq!(Expr::sqrt(&Expr::int(4)), Expr::int(2));
        assert_eq!(Expr::sqrt(&Expr::int(8)), Expr::sqrt(&Expr::int(2)).scale(&rat(2)));
        // 1/sqrt(2) = sqrt(2)/2
        assert_eq!(Expr::sqrt(&Expr::int(2)).recip(), Expr::sqrt(&Expr::int(2)).scale(&Rational::new(1.into(), 2.into())));
    }

    #[test]
    fn laurent_monomials_invert() {
        let k = Expr::var("k");
        assert_eq!(&k.pow(-2) * &k.pow(2), Expr::one());
        let s = &x() + &Expr::one();
        let inv = s.recip();
        assert!(matches!(inv.as_single_term().unwrap().0.factors()[0].0, Atom::Inv(_)));
        assert_eq!(inv.recip(), s);
    }

    #[test]
    fn no_nested_sums_or_products() {
        // canonical representation is flat by construction
        let e = (&x() + &t()) * (&x() - &t());
        assert_eq!(e, &x().pow(2) - &t().pow(2));
    }

    #[test]
    fn coefficients_in_splits_polynomial_part() {
        let a = Expr::var("a");
        let e = &(&a * &x().pow(2)) + &(&x() * &Expr::exp(&t()));
        let co = e.coefficients_in(&[Symbol::new("x")]).unwrap();
        assert_eq!(co[&vec![2]], a);
        assert_eq!(co[&vec![1]], Expr::exp(&t()));
    }
}
