//! Symmetry generators from a bounded ansatz.
//!
//! `ξ^i` is taken polynomial in `x` up to a given degree with coefficients
//! spanned by a finite time basis closed under `d/dt`, `τ` is spanned by
//! the same basis, and optionally a constant antisymmetric noise rotation
//! `B` is added. The determining equations are linear in all of these, so
//! matching the coefficients of independent functions of `(x, t)` gives a
//! homogeneous linear system whose nullspace is the symmetry algebra within
//! the ansatz.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::detgen;
use crate::expr::{parse_expr, Atom, Expr, Func, Monomial, Rational, Scope, Symbol};
use crate::linalg::{self, SparseRow};
use crate::model::{ItoSystem, Matrix, ModelError, VectorField, WSymmetry};
use crate::verify::{self, VerifyError};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("time basis is not closed under d/dt: derivative of {0} leaves the span")]
    NotClosed(String),
    #[error("time basis is linearly dependent at {0}")]
    Dependent(String),
    #[error("bad time basis: {0}")]
    BasisSyntax(String),
    #[error("generator {0} failed re-verification")]
    Unverified(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Projectable,
    W,
}

#[derive(Clone, Debug)]
pub struct Ansatz {
    pub degree: u32,
    pub time_basis: Vec<Expr>,
    pub include_b: bool,
    /// Lower the degree to 1 when the noise forces every `ξ` to be affine.
    pub degree_cap: bool,
}

/// Splits a term into the part depending on `vars` (the key) and the rest.
/// Exponentials are split by their argument so that `exp(a t + c)` keys on
/// `exp(a t)`.
fn split_term(m: &Monomial, c: &Rational, vars: &[Symbol]) -> (Monomial, Expr) {
    let mut key = Vec::new();
    let mut coeff = Expr::constant(c.clone());
    for (a, p) in m.factors() {
        if !a.depends_on_any(vars) {
            coeff = &coeff * &Expr::atom_pow(a, *p);
            continue;
        }
        if let Atom::Func(Func::Exp, arg) = a {
            let (mut dep, mut rest) = (Expr::zero(), Expr::zero());
            for (mm, cc) in arg.terms() {
                let t = Expr::term(cc.clone(), mm.clone());
                if t.depends_on_any(vars) {
                    dep = &dep + &t;
                } else {
                    rest = &rest + &t;
                }
            }
            coeff = &coeff * &Expr::exp(&rest.scale(&Rational::from_integer((*p).into())));
            key.push((Atom::Func(Func::Exp, dep.scale(&Rational::from_integer((*p).into()))), 1));
            continue;
        }
        key.push((a.clone(), *p));
    }
    (Monomial::from_reduced(key), coeff)
}

impl Atom {
    fn depends_on_any(&self, vars: &[Symbol]) -> bool {
        vars.iter().any(|v| self.depends_on(v))
    }
}

/// Coefficients of `e` with respect to the independent functions of `vars`.
pub fn collect_by_key(e: &Expr, vars: &[Symbol]) -> BTreeMap<Monomial, Expr> {
    let mut out: BTreeMap<Monomial, Expr> = BTreeMap::new();
    for (m, c) in e.terms() {
        let (k, co) = split_term(m, c, vars);
        let slot = out.entry(k).or_default();
        *slot = &*slot + &co;
    }
    out.retain(|_, v| !v.is_zero());
    out
}

impl Ansatz {
    pub fn new(degree: u32, time_basis: Vec<Expr>, include_b: bool, time: &Symbol) -> Result<Self, SolveError> {
        let t = std::slice::from_ref(time);
        let rows_of = |elems: &[Expr]| -> BTreeMap<Monomial, SparseRow> {
            let mut rows: BTreeMap<Monomial, SparseRow> = BTreeMap::new();
            for (j, b) in elems.iter().enumerate() {
                for (k, c) in collect_by_key(b, t) {
                    rows.entry(k).or_default().insert(j, c);
                }
            }
            rows
        };
        let rows = rows_of(&time_basis);
        let ns = linalg::nullspace(rows.values().cloned().collect(), time_basis.len());
        if let Some(v) = ns.basis.first() {
            let dependent = v.iter().zip(&time_basis).find(|(c, _)| !c.is_zero()).map(|(_, b)| b);
            return Err(SolveError::Dependent(dependent.map(Expr::to_string).unwrap_or_default()));
        }
        for b in &time_basis {
            let d = b.diff(time);
            let dk = collect_by_key(&d, t);
            let mut local = rows.clone();
            for k in dk.keys() {
                local.entry(k.clone()).or_default();
            }
            let lhs: Vec<SparseRow> = local.values().cloned().collect();
            let rhs: Vec<Expr> = local.keys().map(|k| dk.get(k).cloned().unwrap_or_default()).collect();
            if !d.is_zero() && linalg::solve(&lhs, &rhs, time_basis.len()).is_none() {
                return Err(SolveError::NotClosed(b.to_string()));
            }
        }
        Ok(Ansatz { degree, time_basis, include_b, degree_cap: true })
    }

    /// `{1, t, t²}` plus `e^{ct}, e^{-ct}, t e^{ct}` for each rate `c`.
    pub fn default_basis(time: &Symbol, rates: &[Expr]) -> Vec<Expr> {
        let t = Expr::sym(time);
        let mut out = vec![Expr::one(), t.clone(), t.pow(2)];
        for c in rates {
            let e = Expr::exp(&(c * &t));
            out.push(e.clone());
            out.push(Expr::exp(&(-(c * &t))));
            out.push(&t * &e);
        }
        out
    }

    /// Parses a comma-separated basis; `polyK` stands for `1, t, .., t^K`.
    pub fn parse_basis(spec: &str, scope: &Scope, time: &Symbol) -> Result<Vec<Expr>, SolveError> {
        let mut out: Vec<Expr> = Vec::new();
        let mut depth = 0;
        let mut items = Vec::new();
        let mut start = 0;
        for (i, ch) in spec.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth -= 1,
                ',' if depth == 0 => {
                    items.push(&spec[start..i]);
                    start = i + 1;
                }
                _ => {}
            }
        }
        items.push(&spec[start..]);
        for item in items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
            if let Some(k) = item.strip_prefix("poly") {
                if let Ok(k) = k.parse::<i32>() {
                    out.extend((0..=k).map(|j| Expr::sym(time).pow(j)));
                    continue;
                }
            }
            let e = parse_expr(item, scope).map_err(|e| SolveError::BasisSyntax(e.to_string()))?;
            out.push(e);
        }
        let mut seen = BTreeSet::new();
        out.retain(|e| seen.insert(e.clone()));
        Ok(out)
    }
}

/// What the noise says about second derivatives of `ξ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HessianConstraint {
    /// False when `σ` depends on `x` and nothing follows.
    pub applies: bool,
    /// Basis of the left nullspace of `σ`: directions in which `ξ` may
    /// still curve.
    pub free_directions: Vec<Vec<String>>,
    pub degree_cap: Option<u32>,
}

/// `σ^j_k ∂²ξ^i/∂x^j∂x^m = 0` for `x`-independent `σ`; when `σ` has no left
/// nullspace every `ξ^i` is at most linear in `x`.
pub fn xi_second_derivative_constraint(ito: &ItoSystem) -> HessianConstraint {
    let x_dependent = ito.sigma.iter().flatten().any(|e| e.depends_on_any(&ito.vars));
    if x_dependent {
        return HessianConstraint { applies: false, free_directions: Vec::new(), degree_cap: None };
    }
    // rows of σᵀ: one per noise channel
    let rows: Vec<SparseRow> = (0..ito.m())
        .map(|k| {
            (0..ito.n())
                .filter(|&j| !ito.sigma[j][k].is_zero())
                .map(|j| (j, ito.sigma[j][k].clone()))
                .collect()
        })
        .collect();
    let ns = linalg::nullspace(rows, ito.n());
    let free_directions: Vec<Vec<String>> =
        ns.basis.iter().map(|v| v.iter().map(Expr::to_string).collect()).collect();
    let degree_cap = free_directions.is_empty().then_some(1);
    HessianConstraint { applies: true, free_directions, degree_cap }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Field(VectorField),
    W(WSymmetry),
}

impl Generator {
    pub fn tau(&self) -> &Expr {
        match self {
            Generator::Field(v) => &v.tau,
            Generator::W(w) => &w.tau,
        }
    }

    pub fn xi(&self) -> &[Expr] {
        match self {
            Generator::Field(v) => &v.xi,
            Generator::W(w) => &w.xi,
        }
    }

    pub fn field(&self) -> VectorField {
        VectorField::new(self.tau().clone(), self.xi().to_vec())
    }

    pub fn to_json(&self, ito: &ItoSystem) -> serde_json::Value {
        let mut obj = serde_json::json!({
            "tau": self.tau().to_string(),
            "xi": ito.vars.iter().zip(self.xi())
                .map(|(v, e)| (v.name().to_string(), serde_json::Value::String(e.to_string())))
                .collect::<serde_json::Map<_, _>>(),
        });
        if let Generator::W(w) = self {
            obj["B"] = w.b.iter().map(|r| r.iter().map(Expr::to_string).collect::<Vec<_>>()).collect();
        }
        obj
    }
}

#[derive(Clone, Debug)]
pub struct SymmetryBasis {
    pub generators: Vec<Generator>,
    pub dimension: usize,
    /// Parameter expressions assumed nonzero while eliminating.
    pub assumptions: Vec<Expr>,
    pub degree_used: u32,
}

impl SymmetryBasis {
    pub fn to_json(&self, ito: &ItoSystem) -> serde_json::Value {
        serde_json::json!({
            "dimension": self.dimension,
            "degree": self.degree_used,
            "generators": self.generators.iter().map(|g| g.to_json(ito)).collect::<Vec<_>>(),
            "assumptions": self.assumptions.iter().map(|e| format!("{e} != 0")).collect::<Vec<_>>(),
        })
    }
}

/// Exponent vectors of total degree at most `d` in `n` variables.
fn monomials(n: usize, d: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<u32>| {
                let used: u32 = prefix.iter().sum();
                (0..=d - used).map(move |k| {
                    let mut p = prefix.clone();
                    p.push(k);
                    p
                })
            })
            .collect();
    }
    out.sort_by_key(|m| (m.iter().sum::<u32>(), std::cmp::Reverse(m.clone())));
    out
}

enum Column {
    Tau(usize),
    Xi { i: usize, mono: Vec<u32>, basis: usize },
    B { p: usize, q: usize },
}

fn x_monomial(vars: &[Symbol], mono: &[u32]) -> Expr {
    vars.iter().zip(mono).fold(Expr::one(), |acc, (v, &k)| &acc * &Expr::sym(v).pow(k as i32))
}

/// Basis of the symmetries within the ansatz.
pub fn solve_ansatz(ito: &ItoSystem, ansatz: &Ansatz, which: Which) -> Result<SymmetryBasis, SolveError> {
    let n = ito.n();
    let m = ito.m();
    let mut degree = ansatz.degree;
    if ansatz.degree_cap {
        if let Some(cap) = xi_second_derivative_constraint(ito).degree_cap {
            degree = degree.min(cap);
        }
    }
    let with_b = which == Which::W && ansatz.include_b;
    let mut columns = Vec::new();
    for b in 0..ansatz.time_basis.len() {
        columns.push(Column::Tau(b));
    }
    for i in 0..n {
        for mono in monomials(n, degree) {
            for b in 0..ansatz.time_basis.len() {
                columns.push(Column::Xi { i, mono: mono.clone(), basis: b });
            }
        }
    }
    if with_b {
        for p in 0..m {
            for q in p + 1..m {
                columns.push(Column::B { p, q });
            }
        }
    }

    let build = |col: &Column, scale: &Expr| -> WSymmetry {
        let mut tau = Expr::zero();
        let mut xi = vec![Expr::zero(); n];
        let mut b: Matrix = vec![vec![Expr::zero(); m]; m];
        match col {
            Column::Tau(k) => tau = scale * &ansatz.time_basis[*k],
            Column::Xi { i, mono, basis } => {
                xi[*i] = &(scale * &ansatz.time_basis[*basis]) * &x_monomial(&ito.vars, mono);
            }
            Column::B { p, q } => {
                b[*p][*q] = scale.clone();
                b[*q][*p] = -scale;
            }
        }
        WSymmetry { tau, xi, b }
    };

    let mut key_vars = ito.vars.clone();
    key_vars.push(ito.time.clone());
    // row key: (equation label, function of (x, t)) -> column -> coefficient
    let mut rows: BTreeMap<(String, Monomial), SparseRow> = BTreeMap::new();
    for (j, col) in columns.iter().enumerate() {
        let cand = build(col, &Expr::one());
        let ds = if with_b {
            detgen::detsys_w(ito, &cand)?
        } else {
            detgen::detsys_projectable(ito, &cand.field())?
        };
        for eq in ds.equations {
            for (key, coeff) in collect_by_key(&eq.expr, &key_vars) {
                rows.entry((eq.label.clone(), key)).or_default().insert(j, coeff);
            }
        }
    }
    let ns = linalg::nullspace(rows.into_values().collect(), columns.len());

    let mut generators = Vec::with_capacity(ns.basis.len());
    for v in &ns.basis {
        let mut acc = WSymmetry { tau: Expr::zero(), xi: vec![Expr::zero(); n], b: vec![vec![Expr::zero(); m]; m] };
        for (col, c) in columns.iter().zip(v) {
            if c.is_zero() {
                continue;
            }
            let part = build(col, c);
            acc.tau = &acc.tau + &part.tau;
            for i in 0..n {
                acc.xi[i] = &acc.xi[i] + &part.xi[i];
            }
            for p in 0..m {
                for q in 0..m {
                    acc.b[p][q] = &acc.b[p][q] + &part.b[p][q];
                }
            }
        }
        let g = if with_b { Generator::W(acc) } else { Generator::Field(acc.field()) };
        let report = match &g {
            Generator::Field(f) => verify::check_projectable(ito, f)?,
            Generator::W(w) => verify::check_w(ito, w)?,
        };
        if !report.is_symmetry() {
            return Err(SolveError::Unverified(format!("tau = {}, xi = {:?}", g.tau(), g.xi())));
        }
        generators.push(g);
    }
    Ok(SymmetryBasis {
        dimension: generators.len(),
        generators,
        assumptions: ns.assumptions,
        degree_used: degree,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Commutator {
    pub i: usize,
    pub j: usize,
    /// Coefficients of `[X_i, X_j]` in the basis, when it lies in the span.
    pub coefficients: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClosureReport {
    pub closed: bool,
    pub commutators: Vec<Commutator>,
}

/// `[X, Y]` of projectable fields.
pub fn commutator(x: &VectorField, y: &VectorField, vars: &[Symbol], time: &Symbol) -> VectorField {
    let apply = |f: &VectorField, e: &Expr| -> Expr {
        let mut acc = &f.tau * &e.diff(time);
        for (v, xi) in vars.iter().zip(&f.xi) {
            acc = &acc + &(xi * &e.diff(v));
        }
        acc
    };
    let tau = &apply(x, &y.tau) - &apply(y, &x.tau);
    let xi = x.xi.iter().zip(&y.xi).map(|(a, b)| &apply(x, b) - &apply(y, a)).collect();
    VectorField::new(tau, xi)
}

/// Pairwise commutators expressed in the basis, by coefficient matching.
pub fn commutator_closure(basis: &[VectorField], vars: &[Symbol], time: &Symbol) -> ClosureReport {
    let mut key_vars = vars.to_vec();
    key_vars.push(time.clone());
    let components = |f: &VectorField| -> Vec<Expr> {
        let mut c = vec![f.tau.clone()];
        c.extend(f.xi.iter().cloned());
        c
    };
    let mut rows: BTreeMap<(usize, Monomial), SparseRow> = BTreeMap::new();
    for (k, g) in basis.iter().enumerate() {
        for (ci, comp) in components(g).iter().enumerate() {
            for (key, coeff) in collect_by_key(comp, &key_vars) {
                rows.entry((ci, key)).or_default().insert(k, coeff);
            }
        }
    }
    let mut commutators = Vec::new();
    let mut closed = true;
    for i in 0..basis.len() {
        for j in i + 1..basis.len() {
            let br = commutator(&basis[i], &basis[j], vars, time);
            let mut local = rows.clone();
            let mut rhs_map: BTreeMap<(usize, Monomial), Expr> = BTreeMap::new();
            for (ci, comp) in components(&br).iter().enumerate() {
                for (key, coeff) in collect_by_key(comp, &key_vars) {
                    local.entry((ci, key.clone())).or_default();
                    rhs_map.insert((ci, key), coeff);
                }
            }
            let keys: Vec<_> = local.keys().cloned().collect();
            let lhs: Vec<SparseRow> = keys.iter().map(|k| local[k].clone()).collect();
            let rhs: Vec<Expr> = keys.iter().map(|k| rhs_map.get(k).cloned().unwrap_or_default()).collect();
            let coefficients = linalg::solve(&lhs, &rhs, basis.len())
                .map(|v| v.iter().map(Expr::to_string).collect::<Vec<_>>());
            closed &= coefficients.is_some();
            commutators.push(Commutator { i, j, coefficients });
        }
    }
    ClosureReport { closed, commutators }
}
