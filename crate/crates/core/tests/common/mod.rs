//! Strategies, oracles and property bodies shared by the property tests
//! and the acceptance run.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use stochsym::catalog;
use stochsym::detgen;
use stochsym::dsl::{parse_candidate, parse_system, to_dsl};
use stochsym::expr::{parse_expr, zero_test, Expr, Scope, Symbol, ZeroTest};
use stochsym::kpz::{self, KpzChain};
use stochsym::model::{ItoSystem, Matrix, VectorField, WSymmetry};
use stochsym::verify::{self, Verdict};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn fixture_files(ext: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(fixtures())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    assert!(!files.is_empty());
    files
}

// ---------------------------------------------------------------- kernel

pub fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::var("x")),
        Just(Expr::var("y")),
        Just(Expr::var("t")),
        (-3i64..=3).prop_map(Expr::int),
        (1i64..=3, 2i64..=4).prop_map(|(n, d)| Expr::frac(n, d)),
    ]
}

pub fn expression() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(3, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| &a + &b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| &a - &b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| &a * &b),
            inner.clone().prop_map(|a| a.pow(2)),
            inner.clone().prop_map(|a| Expr::sin(&a)),
            inner.clone().prop_map(|a| Expr::cos(&a)),
            inner.clone().prop_map(|a| Expr::exp(&(&a * &Expr::frac(1, 4)))),
            inner.prop_map(|a| (&(&a * &a) + &Expr::one()).recip()),
        ]
    })
}

fn point(x: f64, y: f64, t: f64) -> BTreeMap<Symbol, f64> {
    [("x", x), ("y", y), ("t", t)].into_iter().map(|(n, v)| (Symbol::new(n), v)).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn canonical_form_is_idempotent(e: &Expr) -> Result<(), TestCaseError> {
    let reparsed = parse_expr(&e.to_string(), &Scope::permissive()).unwrap();
    prop_assert_eq!(&reparsed, e);
    prop_assert_eq!(&(&(e + e) - e), e);
    prop_assert_eq!(&(e * &Expr::one()), e);
    Ok(())
}

pub fn partial_derivatives_commute(e: &Expr) -> Result<(), TestCaseError> {
    let (x, y, t) = (Symbol::new("x"), Symbol::new("y"), Symbol::new("t"));
    prop_assert_eq!(zero_test(&(&e.diff(&x).diff(&y) - &e.diff(&y).diff(&x))), ZeroTest::Zero);
    prop_assert_eq!(zero_test(&(&e.diff(&x).diff(&t) - &e.diff(&t).diff(&x))), ZeroTest::Zero);
    Ok(())
}

pub fn derivative_is_linear(a: &Expr, b: &Expr, p: i64, q: i64) -> Result<(), TestCaseError> {
    let x = Symbol::new("x");
    let (cp, cq) = (Expr::int(p), Expr::frac(1, q));
    let lhs = (&(&cp * a) + &(&cq * b)).diff(&x);
    let rhs = &(&cp * &a.diff(&x)) + &(&cq * &b.diff(&x));
    prop_assert_eq!(zero_test(&(&lhs - &rhs)), ZeroTest::Zero);
    Ok(())
}

pub fn derivative_matches_finite_difference(e: &Expr, px: f64, py: f64) -> Result<(), TestCaseError> {
    let x = Symbol::new("x");
    let h = 1e-5;
    let (Ok(hi), Ok(lo), Ok(d)) = (
        e.eval(&point(px + h, py, 0.3)),
        e.eval(&point(px - h, py, 0.3)),
        e.diff(&x).eval(&point(px, py, 0.3)),
    ) else {
        return Ok(());
    };
    if hi.abs() > 1e6 || lo.abs() > 1e6 {
        return Ok(());
    }
    let fd = (hi - lo) / (2.0 * h);
    prop_assert!(close(fd, d, 1e-4), "{} vs {}", fd, d);
    Ok(())
}

// --------------------------------------------------------- fixtures/DSL

pub fn systems_round_trip() {
    for path in fixture_files("sde") {
        let src = std::fs::read_to_string(&path).unwrap();
        let sys = parse_system(&src).unwrap();
        let again = parse_system(&to_dsl(&sys)).unwrap();
        assert_eq!(again, sys, "{}", path.display());
        assert_eq!(to_dsl(&again), to_dsl(&sys));
        let json = ItoSystem::from_json(&sys.to_json()).unwrap();
        assert_eq!(json, sys, "{}", path.display());
    }
}

pub fn candidates_parse() {
    let manifest: serde_json::Value = serde_json::from_str(&read_fixture("manifest.json")).unwrap();
    for entry in manifest["checks"].as_array().unwrap() {
        let sys = parse_system(&read_fixture(entry["system"].as_str().unwrap())).unwrap();
        let cand_src = read_fixture(entry["candidate"].as_str().unwrap());
        let cand = parse_candidate(&cand_src, &sys).unwrap();
        assert_eq!(parse_candidate(&cand_src, &sys).unwrap(), cand);
    }
}

// ------------------------------------------- drift and noise conditions

/// Itô generator `∂_t + f·∇ + S:∇∇` applied to `e`, with `S = σσᵀ/2`.
pub fn ito_generator(ito: &ItoSystem, e: &Expr) -> Expr {
    let mut out = e.diff(&ito.time);
    for (j, xj) in ito.vars.iter().enumerate() {
        out = &out + &(&ito.drift[j] * &e.diff(xj));
        for (k, xk) in ito.vars.iter().enumerate() {
            let mut s = Expr::zero();
            for p in 0..ito.m() {
                s = &s + &(&ito.sigma[j][p] * &ito.sigma[k][p]);
            }
            out = &out + &(&(&s * &Expr::frac(1, 2)) * &e.diff(xj).diff(xk));
        }
    }
    out
}

/// First-order change of `dx = f dt + σ dw` under `t → t + ετ`,
/// `x → x + εξ`: drift part and noise part, both zero for a symmetry.
pub fn oracle_conditions(ito: &ItoSystem, vf: &VectorField) -> (Vec<Expr>, Matrix) {
    let tau_t = vf.tau.diff(&ito.time);
    let along = |e: &Expr| {
        let mut acc = &vf.tau * &e.diff(&ito.time);
        for (v, xi) in ito.vars.iter().zip(&vf.xi) {
            acc = &acc + &(xi * &e.diff(v));
        }
        acc
    };
    let drift = (0..ito.n())
        .map(|i| &(&ito_generator(ito, &vf.xi[i]) - &along(&ito.drift[i])) - &(&tau_t * &ito.drift[i]))
        .collect();
    let noise = (0..ito.n())
        .map(|i| {
            (0..ito.m())
                .map(|k| {
                    let mut acc = Expr::zero();
                    for (j, v) in ito.vars.iter().enumerate() {
                        acc = &acc + &(&ito.sigma[j][k] * &vf.xi[i].diff(v));
                    }
                    &(&acc - &along(&ito.sigma[i][k])) - &(&(&tau_t * &Expr::frac(1, 2)) * &ito.sigma[i][k])
                })
                .collect()
        })
        .collect();
    (drift, noise)
}

pub fn small_systems() -> Vec<ItoSystem> {
    vec![
        catalog::heat(),
        catalog::wiener(2),
        catalog::langevin(2),
        catalog::kramers(),
        catalog::norm_coupled(2),
        catalog::rotating(),
    ]
}

pub fn quadratic_monomials(vars: &[Symbol]) -> Vec<Expr> {
    let mut out = vec![Expr::one()];
    for (i, a) in vars.iter().enumerate() {
        out.push(Expr::sym(a));
        for b in &vars[i..] {
            out.push(&Expr::sym(a) * &Expr::sym(b));
        }
    }
    out
}

pub fn field_from(ito: &ItoSystem, tau: &[i64], coeffs: &[i64]) -> VectorField {
    let t = Expr::sym(&ito.time);
    let tau = &(&Expr::int(tau[0]) + &(&Expr::int(tau[1]) * &t)) + &(&Expr::int(tau[2]) * &t.pow(2));
    let monos = quadratic_monomials(&ito.vars);
    let mut it = coeffs.iter().cycle();
    let xi = (0..ito.n())
        .map(|_| {
            monos
                .iter()
                .map(|m| {
                    let c = &Expr::int(*it.next().unwrap()) + &(&Expr::int(*it.next().unwrap()) * &t);
                    &c * m
                })
                .sum()
        })
        .collect();
    VectorField::new(tau, xi)
}

pub fn assert_conditions_agree(ito: &ItoSystem, vf: &VectorField) {
    let ds = detgen::detsys_projectable(ito, vf).unwrap();
    let (drift, noise) = oracle_conditions(ito, vf);
    for (i, d) in drift.iter().enumerate() {
        let lam = ds.get(&format!("Lambda[{}]", i + 1)).unwrap();
        assert_eq!(zero_test(&(d + lam)), ZeroTest::Zero, "{}: drift {i} for {vf:?}", ito.name);
    }
    for (i, row) in noise.iter().enumerate() {
        for (k, g) in row.iter().enumerate() {
            let gam = ds.get(&format!("Gamma[{}][{}]", i + 1, k + 1)).unwrap();
            assert_eq!(zero_test(&(g - gam)), ZeroTest::Zero, "{}: noise {i},{k}", ito.name);
        }
    }
    let oracle_zero = drift.iter().chain(noise.iter().flatten()).all(|e| zero_test(e) == ZeroTest::Zero);
    let verdict = verify::check_projectable(ito, vf).unwrap().overall;
    assert_eq!(oracle_zero, verdict == Verdict::Symmetry, "{}: {vf:?}", ito.name);
}

pub fn projectable_equivalence_case(tau: &[i64], coeffs: &[i64]) -> Result<(), TestCaseError> {
    for ito in small_systems() {
        assert_conditions_agree(&ito, &field_from(&ito, tau, coeffs));
    }
    Ok(())
}

pub fn w_reduction_case(tau: &[i64], coeffs: &[i64], b: i64) -> Result<(), TestCaseError> {
    for ito in [catalog::wiener(2), catalog::rotating(), catalog::langevin(2), catalog::norm_coupled(2)] {
        let vf = field_from(&ito, tau, coeffs);
        let proj = detgen::detsys_projectable(&ito, &vf).unwrap();
        let zero_b = vec![vec![Expr::zero(); 2]; 2];
        let w0 = detgen::detsys_w(&ito, &WSymmetry::new(vf.tau.clone(), vf.xi.clone(), zero_b).unwrap()).unwrap();
        prop_assert_eq!(&w0.equations, &proj.equations);

        let bm = vec![vec![Expr::zero(), Expr::int(b)], vec![Expr::int(-b), Expr::zero()]];
        let w = detgen::detsys_w(&ito, &WSymmetry::new(vf.tau.clone(), vf.xi.clone(), bm.clone()).unwrap()).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                let label = format!("Gamma[{}][{}]", i + 1, k + 1);
                let rot: Expr = (0..2).map(|p| &ito.sigma[i][p] * &bm[p][k]).sum();
                let expect = proj.get(&label).unwrap() - &rot;
                prop_assert_eq!(zero_test(&(w.get(&label).unwrap() - &expect)), ZeroTest::Zero);
            }
            let label = format!("Lambda[{}]", i + 1);
            prop_assert_eq!(w.get(&label), proj.get(&label));
        }
    }
    Ok(())
}

// ------------------------------------------------------------------ KPZ

/// `Σ_j Γ^i_{jk} = 0`, and the stencils reproduce the squared central
/// difference and the discrete Laplacian, for every chain length up to `max`.
pub fn kpz_stencils(max: usize) {
    for n in 3..=max {
        let chain = KpzChain::symbolic(n).unwrap();
        let t = kpz::kpz_tensors(&chain);
        let x: Vec<Expr> = chain.vars().iter().map(Expr::sym).collect();
        for i in 0..n {
            for k in 0..n {
                let col: Expr = (0..n).map(|j| t.gamma[i][j][k].clone()).sum();
                assert!(col.is_zero(), "N={n} i={i} k={k}");
            }
            // Γ^i_{jk} x^j x^k is the squared central difference.
            let mut quad = Expr::zero();
            for j in 0..n {
                for k in 0..n {
                    quad = &quad + &(&t.gamma[i][j][k] * &(&x[j] * &x[k]));
                }
            }
            let diff = &x[(i + 1) % n] - &x[(i + n - 1) % n];
            assert_eq!(quad, &chain.beta * &diff.pow(2), "N={n} i={i}");
            let lap = &(&x[(i + 1) % n] + &x[(i + n - 1) % n]) - &(&Expr::int(2) * &x[i]);
            let lin: Expr = (0..n).map(|j| &t.m[i][j] * &x[j]).sum();
            assert_eq!(lin, &chain.alpha * &lap);
        }
    }
}

/// Whether `target` is a rational combination of `basis`, by matching
/// coefficients of monomials in `x, t`.
pub fn in_span(basis: &[VectorField], target: &VectorField, ito: &ItoSystem) -> bool {
    let mut keys = ito.vars.clone();
    keys.push(ito.time.clone());
    let comps = |f: &VectorField| -> Vec<Expr> { std::iter::once(f.tau.clone()).chain(f.xi.iter().cloned()).collect() };
    let mut rows: Vec<BTreeMap<usize, Expr>> = Vec::new();
    let mut rhs = Vec::new();
    let mut index: BTreeMap<(usize, Vec<i32>), usize> = BTreeMap::new();
    let mut add = |col: Option<usize>, comp: usize, e: &Expr, rows: &mut Vec<BTreeMap<usize, Expr>>, rhs: &mut Vec<Expr>| {
        for (exps, c) in e.coefficients_in(&keys).unwrap() {
            let r = *index.entry((comp, exps)).or_insert_with(|| {
                rows.push(BTreeMap::new());
                rhs.push(Expr::zero());
                rows.len() - 1
            });
            match col {
                Some(j) => {
                    rows[r].insert(j, c);
                }
                None => rhs[r] = c,
            }
        }
    };
    for (j, f) in basis.iter().enumerate() {
        for (comp, e) in comps(f).iter().enumerate() {
            add(Some(j), comp, e, &mut rows, &mut rhs);
        }
    }
    for (comp, e) in comps(target).iter().enumerate() {
        add(None, comp, e, &mut rows, &mut rhs);
    }
    stochsym::linalg::solve(&rows, &rhs, basis.len()).is_some()
}
