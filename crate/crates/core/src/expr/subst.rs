use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{Atom, Expr, Func, Opaque, Symbol};

/// Body of an unknown function in terms of its formal parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct FnBinding {
    pub params: Vec<Symbol>,
    pub body: Expr,
}

impl FnBinding {
    pub fn new(params: Vec<Symbol>, body: Expr) -> Self {
        FnBinding { params, body }
    }
}

pub type FnBindings = BTreeMap<Symbol, FnBinding>;

#[derive(Debug, Error, PartialEq)]
pub enum SubstError {
    #[error("function {name} is bound with {expected} parameters but applied to {found} arguments")]
    Arity { name: String, expected: usize, found: usize },
}

impl Expr {
    /// Simultaneous substitution of symbols.
    pub fn subs(&self, map: &BTreeMap<Symbol, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        self.rebuild::<()>(&mut |atom| match atom {
            Atom::Sym(s) => Ok(map.get(s).cloned()),
            _ => Ok(None),
        })
        .expect("symbol substitution is infallible")
    }

    pub fn subs1(&self, s: &Symbol, value: &Expr) -> Expr {
        let mut map = BTreeMap::new();
        map.insert(s.clone(), value.clone());
        self.subs(&map)
    }

    /// Replaces applications of bound functions by their bodies, taking
    /// the recorded partial derivatives of the body before substituting
    /// the actual arguments for the parameters.
    pub fn bind_functions(&self, bindings: &FnBindings) -> Result<Expr, SubstError> {
        if bindings.is_empty() {
            return Ok(self.clone());
        }
        self.rebuild(&mut |atom| {
            let Atom::Opaque(o) = atom else { return Ok(None) };
            let Some(b) = bindings.get(&o.name) else { return Ok(None) };
            if b.params.len() != o.args.len() {
                return Err(SubstError::Arity {
                    name: o.name.name().to_string(),
                    expected: b.params.len(),
                    found: o.args.len(),
                });
            }
            let args = o
                .args
                .iter()
                .map(|a| a.bind_functions(bindings))
                .collect::<Result<Vec<_>, _>>()?;
            let mut body = b.body.clone();
            for (p, &k) in b.params.iter().zip(&o.partials) {
                body = body.diff_n(p, k);
            }
            let map: BTreeMap<Symbol, Expr> = b.params.iter().cloned().zip(args).collect();
            Ok(Some(body.subs(&map)))
        })
    }

    /// Splits `sqrt(c * p^k * rest)` into `sqrt(c * rest) * sqrt(p)^k` for
    /// symbols `p` known to be positive, which makes radicals of positive
    /// parameters canonical.
    pub fn split_radicals(&self, positive: &BTreeSet<Symbol>) -> Expr {
        if positive.is_empty() {
            return self.clone();
        }
        self.rebuild::<()>(&mut |atom| {
            let Atom::Func(Func::Sqrt, a) = atom else { return Ok(None) };
            let a = a.split_radicals(positive);
            let Some((m, c)) = a.as_single_term() else { return Ok(Some(Expr::sqrt(&a))) };
            let mut rest = Expr::constant(c.clone());
            let mut outside = Expr::one();
            for (f, p) in m.factors() {
                match f {
                    Atom::Sym(s) if positive.contains(s) => outside = &outside * &Expr::sqrt(&Expr::sym(s)).pow(*p),
                    _ => rest = &rest * &Expr::atom_pow(f, *p),
                }
            }
            Ok(Some(&Expr::sqrt(&rest) * &outside))
        })
        .expect("radical splitting is infallible")
    }

    /// Rebuilds the expression bottom-up. `leaf` may replace an atom by an
    /// expression; atoms it leaves alone get their arguments rebuilt.
    fn rebuild<E>(
        &self,
        leaf: &mut dyn FnMut(&Atom) -> Result<Option<Expr>, E>,
    ) -> Result<Expr, E> {
        let mut out = Expr::zero();
        for (m, c) in self.terms() {
            let mut term = Expr::constant(c.clone());
            for (atom, p) in m.factors() {
                let replaced = match leaf(atom)? {
                    Some(e) => e.pow(*p),
                    None => match atom {
                        Atom::Sym(_) => Expr::atom_pow(atom, *p),
                        Atom::Opaque(o) => {
                            let args = o
                                .args
                                .iter()
                                .map(|a| a.rebuild(leaf))
                                .collect::<Result<Vec<_>, _>>()?;
                            Expr::from_opaque(Opaque {
                                name: o.name.clone(),
                                args,
                                partials: o.partials.clone(),
                            })
                            .pow(*p)
                        }
                        Atom::Func(f, a) => Expr::apply(*f, &a.rebuild(leaf)?).pow(*p),
                        Atom::Inv(a) => a.rebuild(leaf)?.pow(-p),
                    },
                };
                term = &term * &replaced;
                if term.is_zero() {
                    break;
                }
            }
            out = &out + &term;
        }
        Ok(out)
    }

    /// Applies `f` to every elementary function argument, rebuilding through
    /// the normalizing constructors.
    pub fn map_func_args(&self, f: &mut dyn FnMut(Func, &Expr) -> Expr) -> Expr {
        self.rebuild::<()>(&mut |atom| match atom {
            Atom::Func(func, a) => Ok(Some(Expr::apply(*func, &f(*func, a)))),
            _ => Ok(None),
        })
        .unwrap()
    }
}
