//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use common::*;
use stochsym::catalog;
use stochsym::dsl::{parse_candidate, parse_system, Candidate};
use stochsym::expr::{Expr, Symbol, ZeroTest};
use stochsym::kpz::{self, KpzChain, KpzCheck};
use stochsym::mcsim::{self, Ensemble, McCandidate, SimConfig};
use stochsym::model::{same_fp, DiscreteMap, ItoSystem, Matrix, VectorField, WSymmetry};
use stochsym::solve::{self, Ansatz, Which};
use stochsym::verify::{self, CheckKind, Classification, Verdict};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<String, String> {
    let t = start.elapsed();
    if t > limit {
        return Err(format!("{what} took {t:.2?}, limit {limit:.0?}"));
    }
    Ok(format!("{:.2?}", t))
}

fn load(system: &str, candidate: &str) -> (ItoSystem, Candidate) {
    let sys = parse_system(&read_fixture(system)).unwrap();
    let cand = parse_candidate(&read_fixture(candidate), &sys).unwrap();
    (sys, cand)
}

fn verdict(sys: &ItoSystem, cand: &Candidate, kind: CheckKind) -> Verdict {
    verify::check_candidate(sys, cand, kind).unwrap().overall
}

fn all_residuals_zero(report: &verify::VerificationReport) -> bool {
    report.equations.iter().all(|e| e.verdict == ZeroTest::Zero && e.residual == "0")
}

// ------------------------------------------------------------- criteria

fn heat() -> Outcome {
    let start = Instant::now();
    // The fourth generator as printed, with beta = -s0 x.
    let files = ["heat-v1.cand", "heat-v2.cand", "heat-v3.cand", "heat-v4-s0.cand", "heat-v5.cand", "heat-v6.cand"];
    let ito_symmetric = [true, true, false, false, true, false];
    let mut failures = Vec::new();
    for (file, &expect) in files.iter().zip(&ito_symmetric) {
        let (sys, cand) = load("heat.sde", file);
        let report = verify::check_candidate(&sys, &cand, CheckKind::Projectable).unwrap();
        let ok = if expect { report.overall == Verdict::Symmetry && all_residuals_zero(&report) } else {
            report.overall == Verdict::NotSymmetry
        };
        if !ok {
            failures.push(format!("{file}: Ito verdict {:?}", report.overall));
        }
        let fp = verdict(&sys, &cand, CheckKind::Fp);
        if fp != Verdict::Symmetry {
            failures.push(format!("{file}: FP verdict {fp:?}"));
        }
        let vf = cand.vector_field(&sys).unwrap();
        let vf = if vf.beta.is_none() { verify::extend_to_fp(&vf, &sys.vars).unwrap() } else { vf };
        let preserving = verify::check_normalization_preserving(&vf, &sys.vars).unwrap() == ZeroTest::Zero;
        if preserving != expect {
            failures.push(format!("{file}: normalization preserving = {preserving}"));
        }
    }
    // The same boost with beta = -x, for reference.
    let (sys, cand) = load("heat.sde", "heat-v4.cand");
    let corrected = verdict(&sys, &cand, CheckKind::Fp);
    ensure!(
        failures.is_empty(),
        "{}; boost with beta = -x gives {corrected:?}",
        failures.join("; ")
    );
    within(start, Duration::from_secs(1), "heat")
}

fn kramers() -> Outcome {
    let start = Instant::now();
    for i in 1..=6 {
        let (sys, cand) = load("kramers.sde", &format!("kramers-v{i}.cand"));
        let ito = verdict(&sys, &cand, CheckKind::Projectable);
        let want = if i <= 3 { Verdict::Symmetry } else { Verdict::NotSymmetry };
        ensure!(ito == want, "v{i}: Ito verdict {ito:?}");
        let fp = verdict(&sys, &cand, CheckKind::Fp);
        ensure!(fp == Verdict::Symmetry, "v{i}: FP verdict {fp:?}");
    }
    within(start, Duration::from_secs(1), "kramers")
}

fn rotating() -> Outcome {
    let start = Instant::now();
    let sys = catalog::rotating();
    let dt = VectorField::new(Expr::one(), vec![Expr::zero(), Expr::zero()]);
    let fp_vf = verify::extend_to_fp(&dt, &sys.vars).unwrap();
    let class = verify::project_fp_symmetry(&sys, &fp_vf).unwrap();
    ensure!(class == Classification::StatisticalEquivalence, "classified {class:?}");
    let g = stochsym::detgen::gamma(&sys, &dt, None).unwrap();
    ensure!(g.iter().flatten().any(|e| !e.is_zero()), "Gamma vanishes");
    let sym = verify::gamma_symmetrized(&sys, &g);
    ensure!(sym.iter().flatten().all(Expr::is_zero), "sigma Gamma^T + Gamma sigma^T = {sym:?}");
    let (sys, cand) = load("rotating.sde", "rotating-rotation.cand");
    let report = verify::check_candidate(&sys, &cand, CheckKind::W).unwrap();
    ensure!(report.is_symmetry() && all_residuals_zero(&report), "rotation W verdict {:?}", report.overall);
    within(start, Duration::from_secs(2), "rotating")
}

fn langevin() -> Outcome {
    let start = Instant::now();
    let n = 4;
    let sys = catalog::langevin(n);
    let t = Expr::sym(&sys.time);
    let x: Vec<Expr> = sys.vars.iter().map(Expr::sym).collect();
    let s: Vec<Expr> = (1..=n).map(|i| Expr::var(&format!("s{i}"))).collect();
    let zero = vec![Expr::zero(); n];
    let proj = |vf: &VectorField| verify::check_projectable(&sys, vf).unwrap().overall;

    ensure!(proj(&VectorField::new(Expr::one(), zero.clone())) == Verdict::Symmetry, "time translation");
    let decay = Expr::exp(&(&Expr::int(-2) * &t));
    let contraction = VectorField::new(decay.clone(), x.iter().map(|xi| -(xi * &decay)).collect());
    ensure!(proj(&contraction) == Verdict::Symmetry, "contraction");
    for i in 0..n {
        let mut xi = zero.clone();
        xi[i] = Expr::exp(&-&t);
        ensure!(proj(&VectorField::new(Expr::zero(), xi)) == Verdict::Symmetry, "decaying shift of x{}", i + 1);
    }

    let map = DiscreteMap::new(x.iter().map(|e| -e).collect(), negated_identity(n))
        .unwrap()
        .with_inverse(x.iter().map(|e| -e).collect());
    let refl = verify::check_discrete(&sys, &map).unwrap().overall;
    ensure!(refl == Verdict::Symmetry, "reflection verdict {refl:?}");

    // Rotations in each plane (i, k) with coupling factor c(i, k).
    let b = Expr::var("b");
    let rotation = |i: usize, k: usize, c: &dyn Fn(usize, usize) -> Expr| {
        let mut xi = zero.clone();
        xi[i] = &(&c(i, k) * &b) * &x[k];
        xi[k] = -(&(&c(k, i) * &b) * &x[i]);
        let mut bm = vec![vec![Expr::zero(); n]; n];
        bm[i][k] = b.clone();
        bm[k][i] = -&b;
        verify::check_w(&sys, &WSymmetry::new(Expr::zero(), xi, bm).unwrap()).unwrap().overall
    };
    let ratio = |i: usize, k: usize| &s[i] / &s[k];
    let root = |i: usize, k: usize| Expr::sqrt(&(&s[i] / &s[k]));
    let mut ratio_fail = Vec::new();
    for i in 0..n {
        for k in i + 1..n {
            let r = rotation(i, k, &root);
            ensure!(r == Verdict::Symmetry, "square-root coupled rotation ({}, {}) gives {r:?}", i + 1, k + 1);
            let r = rotation(i, k, &ratio);
            if r != Verdict::Symmetry {
                ratio_fail.push(format!("({},{}) {r:?}", i + 1, k + 1));
            }
        }
    }
    ensure!(
        ratio_fail.is_empty(),
        "rotations with coupling s_i/s_k fail in planes {} (coupling sqrt(s_i/s_k) passes in every plane)",
        ratio_fail.join(", ")
    );
    within(start, Duration::from_secs(2), "langevin")
}

fn negated_identity(n: usize) -> Matrix {
    (0..n).map(|i| (0..n).map(|j| if i == j { Expr::int(-1) } else { Expr::zero() }).collect()).collect()
}

fn nonlinear() -> Outcome {
    let start = Instant::now();
    let sys = catalog::norm_coupled(2);
    let ansatz = Ansatz::new(2, Ansatz::default_basis(&sys.time, &[]), false, &sys.time).unwrap();
    let basis = solve::solve_ansatz(&sys, &ansatz, Which::Projectable).unwrap();
    ensure!(basis.dimension == 1, "dimension {}", basis.dimension);
    let g = &basis.generators[0];
    ensure!(
        g.tau().as_rational().is_some() && !g.tau().is_zero() && g.xi().iter().all(Expr::is_zero),
        "generator tau = {}, xi = {:?}",
        g.tau(),
        g.xi()
    );

    let (sys2, cand) = load("norm-coupled.sde", "norm-rotation.cand");
    let report = verify::check_candidate(&sys2, &cand, CheckKind::W).unwrap();
    ensure!(report.is_symmetry() && all_residuals_zero(&report), "rotation W verdict {:?}", report.overall);

    // -2 λ x^i (x^j B_jk x^k) for a generic antisymmetric B in three dimensions.
    let sys3 = catalog::norm_coupled(3);
    let x: Vec<Expr> = sys3.vars.iter().map(Expr::sym).collect();
    let mut bm = vec![vec![Expr::zero(); 3]; 3];
    for j in 0..3 {
        for k in j + 1..3 {
            let e = Expr::var(&format!("b{}{}", j + 1, k + 1));
            bm[k][j] = -&e;
            bm[j][k] = e;
        }
    }
    let quad: Expr = (0..3).flat_map(|j| (0..3).map(move |k| (j, k))).map(|(j, k)| &(&x[j] * &bm[j][k]) * &x[k]).sum();
    let lambda = Expr::var("lambda");
    for xi in &x {
        let term = &(&(&Expr::int(-2) * &lambda) * xi) * &quad;
        ensure!(term.is_zero(), "bracket term {term}");
    }
    let xi3: Vec<Expr> = (0..3).map(|i| (0..3).map(|k| &bm[i][k] * &x[k]).sum()).collect();
    let w3 = verify::check_w(&sys3, &WSymmetry::new(Expr::zero(), xi3, bm).unwrap()).unwrap();
    ensure!(w3.is_symmetry(), "three-dimensional rotation verdict {:?}", w3.overall);
    within(start, Duration::from_secs(5), "nonlinear")
}

fn heat_solver() -> Outcome {
    let start = Instant::now();
    let sys = catalog::heat();
    let t = Expr::sym(&sys.time);
    let ansatz = Ansatz::new(1, vec![Expr::one(), t.clone(), t.pow(2)], false, &sys.time).unwrap();
    let basis = solve::solve_ansatz(&sys, &ansatz, Which::Projectable).unwrap();
    ensure!(basis.dimension == 3, "dimension {}", basis.dimension);
    let fields: Vec<VectorField> = basis.generators.iter().map(|g| g.field()).collect();
    let known = [
        VectorField::new(Expr::one(), vec![Expr::zero()]),
        VectorField::new(Expr::zero(), vec![Expr::one()]),
        VectorField::new(&Expr::int(2) * &t, vec![Expr::var("x")]),
    ];
    for k in &known {
        ensure!(in_span(&fields, k, &sys), "{k:?} not in the returned span");
    }
    for f in &fields {
        ensure!(in_span(&known, f, &sys), "{f:?} outside the expected span");
    }
    let closure = solve::commutator_closure(&fields, &sys.vars, &sys.time);
    ensure!(closure.closed, "algebra not closed");
    within(start, Duration::from_secs(2), "heat solver")
}

fn kpz_chain() -> Outcome {
    let start = Instant::now();
    for n in 3..=12 {
        let chain = KpzChain::symbolic(n).unwrap();
        let mut checks = vec![KpzCheck::TimeShift, KpzCheck::HShift, KpzCheck::SiteShift];
        checks.extend((0..n).map(KpzCheck::Inversion));
        for c in checks {
            let v = kpz::run_check(&chain, c).unwrap().overall;
            ensure!(v == Verdict::Symmetry, "N={n} {c:?}: {v:?}");
        }
        let v = kpz::run_check(&chain, KpzCheck::HInversion).unwrap().overall;
        ensure!(v == Verdict::NotSymmetry, "N={n} h-inversion with symbolic beta: {v:?}");
        for beta in [1, -3] {
            let c = KpzChain::new(n, Expr::var("alpha"), Expr::int(beta)).unwrap();
            let v = kpz::run_check(&c, KpzCheck::HInversion).unwrap().overall;
            ensure!(v == Verdict::NotSymmetry, "N={n} h-inversion with beta={beta}: {v:?}");
        }
        let linear = KpzChain::new(n, Expr::var("alpha"), Expr::zero()).unwrap();
        let v = kpz::run_check(&linear, KpzCheck::HInversion).unwrap().overall;
        ensure!(v == Verdict::Symmetry, "N={n} h-inversion with beta=0: {v:?}");
    }
    for chain in [KpzChain::symbolic(5).unwrap(), KpzChain::new(5, Expr::var("alpha"), Expr::zero()).unwrap()] {
        let mut checks = vec![KpzCheck::TimeShift, KpzCheck::HShift, KpzCheck::SiteShift, KpzCheck::HInversion];
        checks.extend((0..5).map(KpzCheck::Inversion));
        for c in checks {
            let a = kpz::run_check(&chain, c).unwrap().overall;
            let b = kpz::run_check_general(&chain, c).unwrap().overall;
            ensure!(a == b, "N=5 beta={} {c:?}: tensor {a:?}, general {b:?}", chain.beta);
        }
    }
    within(start, Duration::from_secs(5), "kpz")
}

fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut config = Config::with_cases(cases);
    config.failure_persistence = None;
    let mut runner = TestRunner::new_with_rng(config, proptest::test_runner::TestRng::deterministic_rng(
        proptest::test_runner::RngAlgorithm::ChaCha,
    ));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn properties() -> Outcome {
    let start = Instant::now();
    systems_round_trip();
    candidates_parse();
    run_property(200, expression(), |e| canonical_form_is_idempotent(&e)).map_err(|e| format!("idempotence: {e}"))?;
    run_property(200, expression(), |e| partial_derivatives_commute(&e)).map_err(|e| format!("partials: {e}"))?;
    run_property(200, (expression(), expression(), -4i64..=4, 1i64..=4), |(a, b, p, q)| {
        derivative_is_linear(&a, &b, p, q)
    })
    .map_err(|e| format!("linearity: {e}"))?;
    let fields = (prop::array::uniform3(-2i64..=2), prop::collection::vec(-2i64..=2, 24));
    run_property(48, fields.clone(), |(tau, c)| projectable_equivalence_case(&tau, &c))
        .map_err(|e| format!("projectable conditions: {e}"))?;
    run_property(48, (fields, -3i64..=3), |((tau, c), b)| w_reduction_case(&tau, &c, b))
        .map_err(|e| format!("B = 0 reduction: {e}"))?;
    kpz_stencils(12);
    Ok(format!("{:.2?}", start.elapsed()))
}

// ----------------------------------------------------------- Monte Carlo

const SIGNIFICANCE: f64 = 0.01;

fn config(seed: u64) -> SimConfig {
    SimConfig { t0: 0.0, t1: 1.0, dt: 1e-3, n_paths: 10_000, seed, slices: 4 }
}

/// Samples drawn independently from the exact centred normal marginals
/// with variances `var(t)`, laid out like a simulated ensemble.
fn exact_gaussian(n: usize, times: &[f64], var: impl Fn(f64) -> f64, seed: u64) -> Ensemble {
    let n_paths = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n_paths * times.len() * n);
    for _ in 0..n_paths {
        for &t in times {
            let sd = var(t).sqrt();
            for _ in 0..n {
                data.push(if sd == 0.0 { 0.0 } else { Normal::new(0.0, sd).unwrap().sample(&mut rng) });
            }
        }
    }
    Ensemble { n, n_paths, dt: 1e-3, seed, times: times.to_vec(), data }
}

fn numeric(sys: &ItoSystem, values: &[(&str, f64)]) -> ItoSystem {
    let v: Vec<(Symbol, f64)> = values.iter().map(|(n, x)| (Symbol::new(n), *x)).collect();
    mcsim::with_numeric_params(sys, &v).unwrap()
}

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut record = |name: &str, report: &mcsim::ComparisonReport, want: bool| -> Result<(), String> {
        let p = report.min_p_value().map_or("-".into(), |p| format!("{p:.3}"));
        lines.push(format!("{name}: pass={} min p={p}", report.pass));
        ensure!(report.pass == want, "{name}: expected pass={want}, got {}", report.pass);
        Ok(())
    };

    // Wiener process: marginal N(0, t).
    let w1 = catalog::wiener(1);
    let sim = mcsim::euler_maruyama(&w1, &[0.0], &config(1)).map_err(|e| e.to_string())?;
    ensure!(sim == mcsim::euler_maruyama(&w1, &[0.0], &config(1)).unwrap(), "simulation not deterministic per seed");
    let exact = exact_gaussian(1, &sim.times, |t| t, 101);
    record("wiener variance", &mcsim::compare_ensembles(&sim, &exact, SIGNIFICANCE).unwrap(), true)?;

    // Ornstein–Uhlenbeck relaxing to the stationary variance s.
    let s = 0.5;
    let ou = numeric(&catalog::langevin(1), &[("s1", s)]);
    let cfg = SimConfig { t1: 5.0, slices: 5, ..config(2) };
    let sim = mcsim::euler_maruyama(&ou, &[0.0], &cfg).unwrap();
    let exact = exact_gaussian(1, &sim.times, |t| s * (1.0 - (-2.0 * t).exp()), 102);
    record("OU stationary variance", &mcsim::compare_ensembles(&sim, &exact, SIGNIFICANCE).unwrap(), true)?;
    let (_, var) = sim.moments(sim.times.len() - 1, 0);
    ensure!((var - s).abs() < 0.05 * s, "OU variance at t=5 is {var}");

    // Rotating noise and identity noise share their Fokker–Planck equation.
    let rot = catalog::rotating();
    let w2 = catalog::wiener(2);
    ensure!(same_fp(&rot.sigma, &w2.sigma).unwrap(), "same_fp false");
    let x0 = [0.3, -0.2];
    let a = mcsim::euler_maruyama(&rot, &x0, &config(3)).unwrap();
    let b = mcsim::euler_maruyama(&w2, &x0, &SimConfig { seed: 3 ^ mcsim::FRESH_SEED, ..config(3) }).unwrap();
    record("rotating noise vs identity noise", &mcsim::compare_ensembles(&a, &b, SIGNIFICANCE).unwrap(), true)?;

    // Translation along x1 commutes with the Wiener flow.
    let shift = VectorField::new(Expr::zero(), vec![Expr::one(), Expr::zero()]);
    let report = mcsim::validate_symmetry_mc(
        &w2,
        &McCandidate::Field { field: shift, epsilon: 0.1 },
        &x0,
        &config(4),
        SIGNIFICANCE,
    )
    .unwrap();
    record("translation equivariance", &report, true)?;

    // Reflection of two Langevin oscillators.
    let lv = numeric(&catalog::langevin(2), &[("s1", 0.5), ("s2", 1.0)]);
    let x: Vec<Expr> = lv.vars.iter().map(Expr::sym).collect();
    let refl = DiscreteMap::new(x.iter().map(|e| -e).collect(), negated_identity(2))
        .unwrap()
        .with_inverse(x.iter().map(|e| -e).collect());
    let report =
        mcsim::validate_symmetry_mc(&lv, &McCandidate::Discrete(refl), &[0.8, -0.5], &config(5), SIGNIFICANCE).unwrap();
    record("Langevin reflection", &report, true)?;

    // Negative control: doubling the noise must be detected.
    let doubled = parse_system("system doubled\nvars x1\nnoises w1\nsigma x1 w1 = 2\n").unwrap();
    let a = mcsim::euler_maruyama(&w1, &[0.0], &config(6)).unwrap();
    let b = mcsim::euler_maruyama(&doubled, &[0.0], &SimConfig { seed: 6 ^ mcsim::FRESH_SEED, ..config(6) }).unwrap();
    record("dx = dw vs dx = 2 dw", &mcsim::compare_ensembles(&a, &b, SIGNIFICANCE).unwrap(), false)?;

    let t = within(start, Duration::from_secs(60), "Monte-Carlo suite")?;
    Ok(format!("{t}; {}", lines.join("; ")))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 heat equation generators", heat),
        ("2 Kramers generators", kramers),
        ("3 rotating noise", rotating),
        ("4 Langevin oscillators", langevin),
        ("5 norm-coupled nonlinear system", nonlinear),
        ("6 heat solver completeness", heat_solver),
        ("7 discretized KPZ", kpz_chain),
        ("8 property suites", properties),
        ("9 Monte-Carlo suite", monte_carlo),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
        }
    }
    println!("acceptance: {} of 9 criteria pass", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
