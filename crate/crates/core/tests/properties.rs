mod common;

use proptest::prelude::*;

use common::*;
use stochsym::catalog;
use stochsym::expr::Expr;
use stochsym::model::VectorField;
use stochsym::solve::{self, Ansatz, Which};
use stochsym::verify::{self, Verdict};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_form_is_idempotent_on_random_expressions(e in expression()) {
        canonical_form_is_idempotent(&e)?;
    }

    #[test]
    fn partial_derivatives_commute_on_random_expressions(e in expression()) {
        partial_derivatives_commute(&e)?;
    }

    #[test]
    fn derivative_is_linear_on_random_expressions(a in expression(), b in expression(), p in -4i64..=4, q in 1i64..=4) {
        derivative_is_linear(&a, &b, p, q)?;
    }

    #[test]
    fn derivative_matches_finite_differences(e in expression(), px in 0.1f64..0.9, py in 0.1f64..0.9) {
        derivative_matches_finite_difference(&e, px, py)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projectable_conditions_match_ito_generator_oracle(
        tau in prop::array::uniform3(-2i64..=2),
        coeffs in prop::collection::vec(-2i64..=2, 24),
    ) {
        projectable_equivalence_case(&tau, &coeffs)?;
    }

    #[test]
    fn w_conditions_reduce_to_projectable_at_zero_rotation(
        tau in prop::array::uniform3(-2i64..=2),
        coeffs in prop::collection::vec(-2i64..=2, 24),
        b in -3i64..=3,
    ) {
        w_reduction_case(&tau, &coeffs, b)?;
    }
}

#[test]
fn systems_round_trip_through_text_and_json() {
    systems_round_trip();
}

#[test]
fn every_candidate_fixture_parses_against_its_system() {
    candidates_parse();
}

#[test]
fn known_symmetries_satisfy_the_oracle() {
    for ito in [catalog::heat(), catalog::wiener(2), catalog::langevin(2), catalog::kramers()] {
        let ansatz = Ansatz::new(1, Ansatz::default_basis(&ito.time, &[]), false, &ito.time).unwrap();
        let basis = solve::solve_ansatz(&ito, &ansatz, Which::Projectable).unwrap();
        assert!(basis.dimension > 0, "{}", ito.name);
        let mut sum = VectorField::zero(ito.n());
        for (c, g) in basis.generators.iter().enumerate() {
            let f = g.field();
            assert_conditions_agree(&ito, &f);
            let c = Expr::int(c as i64 + 1);
            sum = VectorField::new(&sum.tau + &(&c * &f.tau), sum.xi.iter().zip(&f.xi).map(|(a, b)| a + &(&c * b)).collect());
        }
        assert_conditions_agree(&ito, &sum);
    }
}

#[test]
fn kpz_quadratic_stencil_rows_sum_to_zero() {
    kpz_stencils(12);
}

// ---------------------------------------------------------------- solve

#[test]
fn solver_is_sound_and_monotone_in_degree() {
    for ito in [catalog::heat(), catalog::wiener(2), catalog::langevin(2)] {
        let mut last = 0;
        for degree in 0..=2 {
            let mut ansatz = Ansatz::new(degree, Ansatz::default_basis(&ito.time, &[]), false, &ito.time).unwrap();
            ansatz.degree_cap = false;
            let basis = solve::solve_ansatz(&ito, &ansatz, Which::Projectable).unwrap();
            for g in &basis.generators {
                let report = verify::check_projectable(&ito, &g.field()).unwrap();
                assert_eq!(report.overall, Verdict::Symmetry, "{} degree {degree}", ito.name);
            }
            assert!(basis.dimension >= last, "{} degree {degree}", ito.name);
            last = basis.dimension;
        }
    }
}

#[test]
fn solver_finds_the_known_heat_algebra() {
    let ito = catalog::heat();
    let basis_t = vec![Expr::one(), Expr::var("t"), Expr::var("t").pow(2)];
    let ansatz = Ansatz::new(1, basis_t, false, &ito.time).unwrap();
    let basis = solve::solve_ansatz(&ito, &ansatz, Which::Projectable).unwrap();
    assert_eq!(basis.dimension, 3);
    let (t, x) = (Expr::var("t"), Expr::var("x"));
    let known = [
        VectorField::new(Expr::one(), vec![Expr::zero()]),
        VectorField::new(Expr::zero(), vec![Expr::one()]),
        VectorField::new(&Expr::int(2) * &t, vec![x]),
    ];
    // Each known generator is a combination of the returned ones and vice versa.
    let fields: Vec<VectorField> = basis.generators.iter().map(|g| g.field()).collect();
    assert!(solve::commutator_closure(&fields, &ito.vars, &ito.time).closed);
    for k in &known {
        assert!(in_span(&fields, k, &ito), "{k:?}");
    }
    for f in &fields {
        assert!(in_span(&known, f, &ito), "{f:?}");
    }
}
