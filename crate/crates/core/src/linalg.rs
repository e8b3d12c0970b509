//! Exact linear algebra over expressions in the parameters.
//!
//! Rows are sparse maps from column index to a nonzero entry. Pivots that
//! are single terms (rationals, monomials in parameters, radicals) are
//! inverted exactly; larger pivots are eliminated fraction-free and
//! recorded as assumptions, since the result is only valid where they do
//! not vanish.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::expr::{zero_test, Expr, Rational, ZeroTest};

pub type SparseRow = BTreeMap<usize, Expr>;

#[derive(Clone, Debug, Default)]
pub struct Nullspace {
    pub basis: Vec<Vec<Expr>>,
    /// Pivots assumed nonzero.
    pub assumptions: Vec<Expr>,
    /// Entries that could not be decided and were treated as zero.
    pub undecided: Vec<Expr>,
}

struct Reducer {
    undecided: Vec<Expr>,
}

impl Reducer {
    fn clean(&mut self, row: &mut SparseRow) {
        row.retain(|_, e| match zero_test(e) {
            ZeroTest::Zero => false,
            ZeroTest::NonZero => true,
            ZeroTest::Inconclusive => {
                self.undecided.push(e.clone());
                false
            }
        });
    }
}

/// Divides a row by the rational content of all its coefficients.
fn make_primitive(row: &mut SparseRow) {
    let mut num = BigInt::zero();
    let mut den = BigInt::one();
    for e in row.values() {
        for (_, c) in e.terms() {
            num = num.gcd(c.numer());
            den = den.lcm(c.denom());
        }
    }
    if num.is_zero() {
        return;
    }
    let g = Rational::new(den, num);
    if g.is_one() {
        return;
    }
    for e in row.values_mut() {
        *e = e.scale(&g);
    }
}

fn pivot_score(e: &Expr) -> (usize, usize) {
    let single = usize::from(e.as_single_term().is_none());
    (single, e.len())
}

/// Sort key of a pivot candidate; smaller is better.
type PivotScore = (usize, usize, usize, usize);

/// Basis of `{v : rows · v = 0}` over the field generated by the parameters.
pub fn nullspace(rows: Vec<SparseRow>, ncols: usize) -> Nullspace {
    let mut red = Reducer { undecided: Vec::new() };
    let mut active: Vec<SparseRow> = Vec::with_capacity(rows.len());
    for mut r in rows {
        red.clean(&mut r);
        if !r.is_empty() {
            active.push(r);
        }
    }
    // (pivot column, row); the row holds the pivot entry at that column.
    let mut done: Vec<(usize, SparseRow)> = Vec::new();
    let mut assumptions = Vec::new();
    while !active.is_empty() {
        let mut best: Option<(PivotScore, usize, usize)> = None;
        for (ri, r) in active.iter().enumerate() {
            for (&c, e) in r {
                let (single, terms) = pivot_score(e);
                let score = (single, terms, r.len(), c);
                if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
                    best = Some((score, ri, c));
                }
            }
        }
        let (_, ri, col) = best.expect("active rows are nonempty");
        let mut prow = active.swap_remove(ri);
        let p = prow[&col].clone();
        let unit = if p.as_single_term().is_some() {
            let inv = p.recip();
            for e in prow.values_mut() {
                *e = &*e * &inv;
            }
            true
        } else {
            assumptions.push(p.clone());
            make_primitive(&mut prow);
            false
        };
        let pval = prow[&col].clone();
        let eliminate = |r: &mut SparseRow, red: &mut Reducer| {
            let Some(a) = r.remove(&col) else { return };
            if !unit {
                for e in r.values_mut() {
                    *e = &*e * &pval;
                }
            }
            for (&c, e) in &prow {
                if c == col {
                    continue;
                }
                let delta = &a * e;
                let slot = r.entry(c).or_insert_with(Expr::zero);
                *slot = &*slot - &delta;
            }
            red.clean(r);
            if !unit {
                make_primitive(r);
            }
        };
        for r in active.iter_mut() {
            eliminate(r, &mut red);
        }
        active.retain(|r| !r.is_empty());
        for (_, r) in done.iter_mut() {
            eliminate(r, &mut red);
        }
        done.push((col, prow));
    }

    let pivot_cols: BTreeMap<usize, usize> = done.iter().enumerate().map(|(i, (c, _))| (*c, i)).collect();
    let mut basis = Vec::new();
    for f in (0..ncols).filter(|c| !pivot_cols.contains_key(c)) {
        let involved: Vec<usize> = done
            .iter()
            .enumerate()
            .filter(|(_, (_, r))| r.contains_key(&f))
            .map(|(i, _)| i)
            .collect();
        let pivot_of = |i: usize| done[i].1[&done[i].0].clone();
        let mut v = vec![Expr::zero(); ncols];
        v[f] = involved.iter().fold(Expr::one(), |acc, &i| &acc * &pivot_of(i));
        for &i in &involved {
            let others = involved
                .iter()
                .filter(|&&j| j != i)
                .fold(Expr::one(), |acc, &j| &acc * &pivot_of(j));
            v[done[i].0] = -(&done[i].1[&f] * &others);
        }
        basis.push(v);
    }
    Nullspace { basis, assumptions, undecided: red.undecided }
}

/// Solves `rows · v = rhs` for one solution, if any. Returns `None` when
/// the system is inconsistent (or consistent only where a pivot vanishes).
pub fn solve(rows: &[SparseRow], rhs: &[Expr], ncols: usize) -> Option<Vec<Expr>> {
    let aug: Vec<SparseRow> = rows
        .iter()
        .zip(rhs)
        .map(|(r, b)| {
            let mut r = r.clone();
            if !b.is_zero() {
                r.insert(ncols, -b);
            }
            r
        })
        .collect();
    let ns = nullspace(aug, ncols + 1);
    let v = ns.basis.iter().find(|v| zero_test(&v[ncols]) == ZeroTest::NonZero)?;
    let inv = v[ncols].recip();
    Some(v[..ncols].iter().map(|e| e * &inv).collect())
}
