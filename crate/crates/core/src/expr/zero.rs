use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Atom, Expr, Symbol};

/// Outcome of deciding whether an expression vanishes identically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroTest {
    Zero,
    NonZero,
    Inconclusive,
}

const PROBES: usize = 8;
const REL_TOL: f64 = 1e-9;

/// Decides `e == 0`.
///
/// Canonical forms are unique for Laurent polynomials in symbols and for
/// expressions containing unknown functions (treated as independent
/// indeterminates), so the structural answer is exact there. Anything
/// involving elementary functions or reciprocals of sums is also probed
/// numerically at a fixed set of positive sample points: a probe that is
/// clearly nonzero settles the question, while a structurally nonzero
/// expression that vanishes at every probe is reported as inconclusive.
pub fn zero_test(e: &Expr) -> ZeroTest {
    if e.is_zero() {
        return ZeroTest::Zero;
    }
    let mut transcendental = false;
    let mut opaque = false;
    e.visit_atoms(&mut |a| match a {
        Atom::Sym(_) => {}
        Atom::Opaque(_) => opaque = true,
        Atom::Func(..) | Atom::Inv(_) => transcendental = true,
    });
    if opaque || !transcendental {
        return ZeroTest::NonZero;
    }
    let syms: Vec<Symbol> = e.free_symbols().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_2e20);
    for _ in 0..PROBES {
        let env: BTreeMap<Symbol, f64> =
            syms.iter().map(|s| (s.clone(), rng.gen_range(0.3..1.9))).collect();
        let (Ok(v), Ok(scale)) = (e.eval(&env), e.eval_abs_scale(&env)) else {
            continue;
        };
        if !v.is_finite() || !scale.is_finite() {
            continue;
        }
        if v.abs() > REL_TOL * scale.max(1e-300) {
            return ZeroTest::NonZero;
        }
    }
    ZeroTest::Inconclusive
}
