use std::collections::BTreeMap;

use num_traits::ToPrimitive;
use thiserror::Error;

use super::{Atom, Expr, Func, Rational, Symbol};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no value for symbol {0}")]
    Unbound(String),
    #[error("cannot evaluate unknown function {0}")]
    Opaque(String),
    #[error("{0} outside its domain")]
    Domain(String),
}

pub(crate) fn rational_to_f64(c: &Rational) -> f64 {
    c.to_f64().unwrap_or_else(|| {
        // Both parts beyond f64 range: scale down together.
        let n = c.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = c.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

impl Expr {
    /// Floating-point value with symbols looked up in `env`.
    pub fn eval(&self, env: &BTreeMap<Symbol, f64>) -> Result<f64, EvalError> {
        let mut acc = 0.0;
        for (m, c) in self.terms() {
            let mut t = rational_to_f64(c);
            for (a, p) in m.factors() {
                t *= eval_atom(a, env)?.powi(*p);
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Sum of absolute term values; the scale against which a probe value
    /// is judged to be zero.
    pub(crate) fn eval_abs_scale(&self, env: &BTreeMap<Symbol, f64>) -> Result<f64, EvalError> {
        let mut acc = 0.0;
        for (m, c) in self.terms() {
            let mut t = rational_to_f64(c).abs();
            for (a, p) in m.factors() {
                t *= eval_atom(a, env)?.powi(*p).abs();
            }
            acc += t;
        }
        Ok(acc)
    }
}

fn eval_atom(a: &Atom, env: &BTreeMap<Symbol, f64>) -> Result<f64, EvalError> {
    match a {
        Atom::Sym(s) => env.get(s).copied().ok_or_else(|| EvalError::Unbound(s.name().to_string())),
        Atom::Opaque(o) => Err(EvalError::Opaque(o.name.name().to_string())),
        Atom::Func(f, e) => {
            let x = e.eval(env)?;
            Ok(match f {
                Func::Exp => x.exp(),
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Sqrt if x < 0.0 => return Err(EvalError::Domain(format!("sqrt({e})"))),
                Func::Sqrt => x.sqrt(),
            })
        }
        Atom::Inv(e) => match e.eval(env)? {
            0.0 => Err(EvalError::Domain(format!("1/({e})"))),
            d => Ok(1.0 / d),
        },
    }
}

#[derive(Clone, Debug)]
enum Node {
    Slot(usize),
    Func(Func, Box<CompiledExpr>),
    Inv(Box<CompiledExpr>),
}

/// An expression lowered to a flat form for repeated evaluation at points
/// given as a slice of values in a fixed symbol order.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    nodes: Vec<Node>,
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledExpr {
    /// Compiles `e` against the ordered `slots`; any other symbol is an error.
    pub fn new(e: &Expr, slots: &[Symbol]) -> Result<Self, EvalError> {
        let mut nodes: Vec<Node> = Vec::new();
        let mut index: BTreeMap<Atom, usize> = BTreeMap::new();
        let mut terms = Vec::with_capacity(e.len());
        for (m, c) in e.terms() {
            let mut fs = Vec::with_capacity(m.factors().len());
            for (a, p) in m.factors() {
                let id = match index.get(a) {
                    Some(&id) => id,
                    None => {
                        let node = match a {
                            Atom::Sym(s) => Node::Slot(
                                slots
                                    .iter()
                                    .position(|x| x == s)
                                    .ok_or_else(|| EvalError::Unbound(s.name().to_string()))?,
                            ),
                            Atom::Opaque(o) => return Err(EvalError::Opaque(o.name.name().to_string())),
                            Atom::Func(f, arg) => Node::Func(*f, Box::new(CompiledExpr::new(arg, slots)?)),
                            Atom::Inv(arg) => Node::Inv(Box::new(CompiledExpr::new(arg, slots)?)),
                        };
                        nodes.push(node);
                        index.insert(a.clone(), nodes.len() - 1);
                        nodes.len() - 1
                    }
                };
                fs.push((id, *p));
            }
            terms.push((rational_to_f64(c), fs));
        }
        Ok(CompiledExpr { nodes, terms })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut vals = [0.0f64; 16];
        let mut heap;
        let vals: &mut [f64] = if self.nodes.len() <= vals.len() {
            &mut vals[..self.nodes.len()]
        } else {
            heap = vec![0.0; self.nodes.len()];
            &mut heap
        };
        for (v, n) in vals.iter_mut().zip(&self.nodes) {
            *v = match n {
                Node::Slot(i) => x[*i],
                Node::Func(f, e) => {
                    let a = e.eval(x);
                    match f {
                        Func::Exp => a.exp(),
                        Func::Sin => a.sin(),
                        Func::Cos => a.cos(),
                        Func::Sqrt => a.sqrt(),
                    }
                }
                Node::Inv(e) => 1.0 / e.eval(x),
            };
        }
        self.terms
            .iter()
            .map(|(c, fs)| fs.iter().fold(*c, |acc, &(i, p)| acc * vals[i].powi(p)))
            .sum()
    }
}
