use num_traits::One;

use super::{rat, Atom, Expr, Func, Opaque, Rational, Symbol};

impl Expr {
    /// Partial derivative with respect to `s`.
    pub fn diff(&self, s: &Symbol) -> Expr {
        let mut out = Expr::zero();
        for (m, c) in self.terms() {
            let factors = m.factors();
            for (i, (atom, p)) in factors.iter().enumerate() {
                if !atom.depends_on(s) {
                    continue;
                }
                let d = atom_derivative(atom, s);
                if d.is_zero() {
                    continue;
                }
                let mut rest: Vec<(Atom, i32)> = Vec::with_capacity(factors.len());
                for (j, (a, q)) in factors.iter().enumerate() {
                    if j == i {
                        if *p != 1 {
                            rest.push((a.clone(), p - 1));
                        }
                    } else {
                        rest.push((a.clone(), *q));
                    }
                }
                let coeff = c * rat(*p as i64);
                out = &out + &(&Expr::from_factors(coeff, rest) * &d);
            }
        }
        out
    }

    pub fn diff_n(&self, s: &Symbol, n: u32) -> Expr {
        let mut e = self.clone();
        for _ in 0..n {
            if e.is_zero() {
                break;
            }
            e = e.diff(s);
        }
        e
    }
}

fn atom_derivative(atom: &Atom, s: &Symbol) -> Expr {
    match atom {
        Atom::Sym(x) => {
            if x == s {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Atom::Opaque(o) => {
            let mut out = Expr::zero();
            for (k, arg) in o.args.iter().enumerate() {
                let da = arg.diff(s);
                if da.is_zero() {
                    continue;
                }
                let mut partials = o.partials.clone();
                partials[k] += 1;
                let d = Expr::from_opaque(Opaque { name: o.name.clone(), args: o.args.clone(), partials });
                out = &out + &(&d * &da);
            }
            out
        }
        Atom::Func(f, a) => {
            let da = a.diff(s);
            if da.is_zero() {
                return Expr::zero();
            }
            let outer = match f {
                Func::Exp => Expr::exp(a),
                Func::Sin => Expr::cos(a),
                Func::Cos => -Expr::sin(a),
                Func::Sqrt => Expr::from_factors(
                    Rational::new(1.into(), 2.into()),
                    vec![(Atom::Func(Func::Sqrt, a.clone()), -1)],
                ),
            };
            &outer * &da
        }
        Atom::Inv(a) => {
            let da = a.diff(s);
            if da.is_zero() {
                return Expr::zero();
            }
            let inv2 = Expr::from_factors(-Rational::one(), vec![(Atom::Inv(a.clone()), 2)]);
            &inv2 * &da
        }
    }
}
