//! Itô systems, Fokker–Planck equations and symmetry candidates, plus the
//! structural maps between them.
//!
//! Throughout, `S = (1/2) σ σᵀ` is the one diffusion quantity used
//! internally. The Fokker–Planck record stores its second-order coefficient
//! as `A = -S`, matching the form `u_t + A^{ij} u_ij + B^i u_i + C u = 0`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{zero_test, Expr, ParseError, Scope, Symbol, VarKind, ZeroTest};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("diffusion matrix (1/2) sigma sigma^T vanishes identically")]
    Degenerate,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0}")]
    Invalid(String),
    #[error("x-elimination requested but no inverse map supplied")]
    InverseNotSupplied,
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Real,
    Positive,
    Nonzero,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

/// An unknown function the coefficients may refer to, e.g. `f(x, t)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuncDecl {
    pub name: String,
    pub args: Vec<String>,
}

/// `dx^i = f^i(x,t) dt + σ^i_k(x,t) dw^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ItoSystem {
    pub name: String,
    pub time: Symbol,
    pub vars: Vec<Symbol>,
    pub noises: Vec<Symbol>,
    pub params: Vec<Param>,
    pub funcs: Vec<FuncDecl>,
    pub drift: Vec<Expr>,
    pub sigma: Vec<Vec<Expr>>,
}

pub type Matrix = Vec<Vec<Expr>>;

impl ItoSystem {
    /// Builds a system with default names `t` and `w1..wm`, checking shapes.
    pub fn new(name: &str, vars: &[&str], drift: Vec<Expr>, sigma: Matrix) -> Result<Self, ModelError> {
        let m = sigma.first().map_or(0, Vec::len);
        let sys = ItoSystem {
            name: name.to_string(),
            time: Symbol::new("t"),
            vars: vars.iter().map(|v| Symbol::new(v)).collect(),
            noises: (1..=m).map(|k| Symbol::new(&format!("w{k}"))).collect(),
            params: Vec::new(),
            funcs: Vec::new(),
            drift,
            sigma,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn with_params(mut self, params: &[(&str, ParamKind)]) -> Self {
        self.params = params.iter().map(|(n, k)| Param { name: n.to_string(), kind: *k }).collect();
        self
    }

    pub fn n(&self) -> usize {
        self.vars.len()
    }

    pub fn m(&self) -> usize {
        self.noises.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n();
        if self.drift.len() != n {
            return Err(ModelError::Shape(format!("{} drift entries for {} variables", self.drift.len(), n)));
        }
        if self.sigma.len() != n || self.sigma.iter().any(|r| r.len() != self.m()) {
            return Err(ModelError::Shape(format!("sigma must be {}x{}", n, self.m())));
        }
        for w in &self.noises {
            let mentions = self.drift.iter().chain(self.sigma.iter().flatten()).any(|e| e.depends_on(w));
            if mentions {
                return Err(ModelError::Invalid(format!("coefficients may not depend on the noise {w}")));
            }
        }
        Ok(())
    }

    /// Names usable in expressions attached to this system.
    pub fn scope(&self) -> Scope {
        let mut s = Scope::new();
        for p in &self.params {
            s.declare(&p.name, VarKind::Param);
        }
        for v in &self.vars {
            s.declare(v.name(), VarKind::State);
        }
        s.declare(self.time.name(), VarKind::Time);
        for w in &self.noises {
            s.declare(w.name(), VarKind::Noise);
        }
        for f in &self.funcs {
            s.declare_function(&f.name, f.args.len());
        }
        s
    }

    /// `S = (1/2) σ σᵀ` without the degeneracy check.
    pub fn s_matrix(&self) -> Matrix {
        let n = self.n();
        let half = Expr::frac(1, 2);
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let dot: Expr = (0..self.m()).map(|k| &self.sigma[i][k] * &self.sigma[j][k]).sum();
                        &half * &dot
                    })
                    .collect()
            })
            .collect()
    }

    /// `A = (1/2) σ σᵀ`; an error if it vanishes identically.
    pub fn diffusion_matrix(&self) -> Result<Matrix, ModelError> {
        let s = self.s_matrix();
        if s.iter().flatten().all(|e| zero_test(e) == ZeroTest::Zero) {
            return Err(ModelError::Degenerate);
        }
        Ok(s)
    }

    pub fn column(&self, k: usize) -> Vec<Expr> {
        self.sigma.iter().map(|r| r[k].clone()).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rec = SystemRecord {
            name: self.name.clone(),
            time: self.time.name().to_string(),
            vars: self.vars.iter().map(|v| v.name().to_string()).collect(),
            noises: self.noises.iter().map(|v| v.name().to_string()).collect(),
            params: self.params.clone(),
            funcs: self.funcs.clone(),
            drift: self.drift.iter().map(Expr::to_string).collect(),
            sigma: self.sigma.iter().map(|r| r.iter().map(Expr::to_string).collect()).collect(),
        };
        serde_json::to_value(rec).expect("system record serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, ModelError> {
        let rec: SystemRecord =
            serde_json::from_value(v.clone()).map_err(|e| ModelError::Invalid(e.to_string()))?;
        let mut sys = ItoSystem {
            name: rec.name,
            time: Symbol::new(&rec.time),
            vars: rec.vars.iter().map(|v| Symbol::new(v)).collect(),
            noises: rec.noises.iter().map(|v| Symbol::new(v)).collect(),
            params: rec.params,
            funcs: rec.funcs,
            drift: Vec::new(),
            sigma: Vec::new(),
        };
        let scope = sys.scope();
        let parse = |s: &String| crate::expr::parse_expr(s, &scope);
        sys.drift = rec.drift.iter().map(parse).collect::<Result<_, _>>()?;
        sys.sigma = rec
            .sigma
            .iter()
            .map(|r| r.iter().map(parse).collect::<Result<Vec<_>, _>>())
            .collect::<Result<_, _>>()?;
        sys.validate()?;
        Ok(sys)
    }

    /// Replaces parameters by values, e.g. to simulate.
    pub fn with_param_values(&self, values: &BTreeMap<Symbol, Expr>) -> ItoSystem {
        let mut out = self.clone();
        out.drift = self.drift.iter().map(|e| e.subs(values)).collect();
        out.sigma = self.sigma.iter().map(|r| r.iter().map(|e| e.subs(values)).collect()).collect();
        out.params.retain(|p| !values.contains_key(&Symbol::new(&p.name)));
        out
    }
}

#[derive(Serialize, Deserialize)]
struct SystemRecord {
    name: String,
    time: String,
    vars: Vec<String>,
    noises: Vec<String>,
    params: Vec<Param>,
    #[serde(default)]
    funcs: Vec<FuncDecl>,
    drift: Vec<String>,
    sigma: Vec<Vec<String>>,
}

/// `u_t + A^{ij} ∂²_{ij} u + B^i ∂_i u + C u = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct FokkerPlanck {
    pub time: Symbol,
    pub vars: Vec<Symbol>,
    pub a: Matrix,
    pub b: Vec<Expr>,
    pub c: Expr,
}

impl FokkerPlanck {
    pub fn n(&self) -> usize {
        self.vars.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "time": self.time.name(),
            "vars": self.vars.iter().map(Symbol::name).collect::<Vec<_>>(),
            "A": self.a.iter().map(|r| r.iter().map(Expr::to_string).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "B": self.b.iter().map(Expr::to_string).collect::<Vec<_>>(),
            "C": self.c.to_string(),
        })
    }

    /// Applies the operator `∂_t + A ∂² + B ∂ + C` to `u`.
    pub fn apply(&self, u: &Expr) -> Expr {
        let n = self.n();
        let mut out = u.diff(&self.time);
        for i in 0..n {
            let ui = u.diff(&self.vars[i]);
            out = &out + &(&self.b[i] * &ui);
            for j in 0..n {
                out = &out + &(&self.a[i][j] * &ui.diff(&self.vars[j]));
            }
        }
        &out + &(&self.c * u)
    }
}

/// Fokker–Planck equation of the density of the process.
pub fn fokker_planck_of(ito: &ItoSystem) -> Result<FokkerPlanck, ModelError> {
    let s = ito.diffusion_matrix()?;
    let n = ito.n();
    let x = &ito.vars;
    let a: Matrix = s.iter().map(|r| r.iter().map(|e| -e).collect()).collect();
    let b = (0..n)
        .map(|i| {
            let div: Expr = (0..n).map(|j| a[i][j].diff(&x[j])).sum();
            &ito.drift[i] + &div.scale(&crate::expr::Rational::from_integer(2.into()))
        })
        .collect();
    let mut c = Expr::zero();
    for i in 0..n {
        c = &c + &ito.drift[i].diff(&x[i]);
        for j in 0..n {
            c = &c + &a[i][j].diff(&x[i]).diff(&x[j]);
        }
    }
    Ok(FokkerPlanck { time: ito.time.clone(), vars: ito.vars.clone(), a, b, c })
}

/// True when the two diffusion matrices give the same `σσᵀ`.
pub fn same_fp(sigma1: &Matrix, sigma2: &Matrix) -> Result<bool, ModelError> {
    if sigma1.len() != sigma2.len() {
        return Err(ModelError::Shape("diffusion matrices have different row counts".into()));
    }
    let gram = |s: &Matrix| -> Matrix {
        (0..s.len())
            .map(|i| (0..s.len()).map(|j| s[i].iter().zip(&s[j]).map(|(a, b)| a * b).sum()).collect())
            .collect()
    };
    let (g1, g2) = (gram(sigma1), gram(sigma2));
    Ok(g1.iter().flatten().zip(g2.iter().flatten()).all(|(a, b)| zero_test(&(a - b)) == ZeroTest::Zero))
}

/// Stratonovich drift `b^i = f^i - (1/2) σ^j_k ∂_j σ^i_k`.
pub fn ito_to_stratonovich(ito: &ItoSystem) -> Vec<Expr> {
    let half = Expr::frac(1, 2);
    (0..ito.n())
        .map(|i| {
            let mut corr = Expr::zero();
            for j in 0..ito.n() {
                for k in 0..ito.m() {
                    corr = &corr + &(&ito.sigma[j][k] * &ito.sigma[i][k].diff(&ito.vars[j]));
                }
            }
            &ito.drift[i] - &(&half * &corr)
        })
        .collect()
}

/// `{f, ξ}^i = f^j ∂_j ξ^i - ξ^j ∂_j f^i`.
pub fn lie_bracket(f: &[Expr], xi: &[Expr], vars: &[Symbol]) -> Result<Vec<Expr>, ModelError> {
    if f.len() != xi.len() || f.len() != vars.len() {
        return Err(ModelError::Shape(format!(
            "bracket of fields with {} and {} components in {} variables",
            f.len(),
            xi.len(),
            vars.len()
        )));
    }
    Ok((0..f.len())
        .map(|i| {
            let mut acc = Expr::zero();
            for (j, v) in vars.iter().enumerate() {
                acc = &acc + &(&f[j] * &xi[i].diff(v));
                acc = &acc - &(&xi[j] * &f[i].diff(v));
            }
            acc
        })
        .collect())
}

/// `S^{jk} ∂²_{jk} e`.
pub(crate) fn s_laplacian(s: &Matrix, e: &Expr, vars: &[Symbol]) -> Expr {
    let mut acc = Expr::zero();
    for (j, vj) in vars.iter().enumerate() {
        let ej = e.diff(vj);
        if ej.is_zero() {
            continue;
        }
        for (k, vk) in vars.iter().enumerate() {
            if s[j][k].is_zero() {
                continue;
            }
            acc = &acc + &(&s[j][k] * &ej.diff(vk));
        }
    }
    acc
}

/// First-order change of drift and diffusion under `x -> x + ε ξ(x,t)`.
pub fn transform_ito_first_order(ito: &ItoSystem, xi: &[Expr]) -> Result<(Vec<Expr>, Matrix), ModelError> {
    let x = &ito.vars;
    let bracket = lie_bracket(&ito.drift, xi, x)?;
    let s = ito.s_matrix();
    let df = (0..ito.n())
        .map(|i| &(&xi[i].diff(&ito.time) + &bracket[i]) + &s_laplacian(&s, &xi[i], x))
        .collect();
    let ds = (0..ito.n())
        .map(|i| {
            (0..ito.m())
                .map(|k| {
                    let mut acc = Expr::zero();
                    for j in 0..ito.n() {
                        acc = &acc + &(&ito.sigma[j][k] * &xi[i].diff(&x[j]));
                        acc = &acc - &(&xi[j] * &ito.sigma[i][k].diff(&x[j]));
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok((df, ds))
}

/// Projectable vector field `τ(t) ∂_t + ξ^i(x,t) ∂_i [+ β(x,t) u ∂_u]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub tau: Expr,
    pub xi: Vec<Expr>,
    pub beta: Option<Expr>,
}

impl VectorField {
    pub fn new(tau: Expr, xi: Vec<Expr>) -> Self {
        VectorField { tau, xi, beta: None }
    }

    pub fn zero(n: usize) -> Self {
        VectorField::new(Expr::zero(), vec![Expr::zero(); n])
    }

    pub fn with_beta(mut self, beta: Expr) -> Self {
        self.beta = Some(beta);
        self
    }

    /// Rejects a time component depending on the state variables.
    pub fn check_projectable(&self, vars: &[Symbol]) -> Result<(), ModelError> {
        if self.tau.depends_on_any(vars) {
            return Err(ModelError::Invalid(format!("tau = {} depends on the state variables", self.tau)));
        }
        Ok(())
    }

    pub fn divergence(&self, vars: &[Symbol]) -> Expr {
        self.xi.iter().zip(vars).map(|(e, v)| e.diff(v)).sum()
    }
}

/// Transformation also acting on the noise, `w -> w + ε B w`.
#[derive(Clone, Debug, PartialEq)]
pub struct WSymmetry {
    pub tau: Expr,
    pub xi: Vec<Expr>,
    pub b: Matrix,
}

impl WSymmetry {
    pub fn new(tau: Expr, xi: Vec<Expr>, b: Matrix) -> Result<Self, ModelError> {
        let m = b.len();
        if b.iter().any(|r| r.len() != m) {
            return Err(ModelError::Shape("B must be square".into()));
        }
        for p in 0..m {
            for q in 0..m {
                if zero_test(&(&b[p][q] + &b[q][p])) != ZeroTest::Zero {
                    return Err(ModelError::Invalid("B must be antisymmetric".into()));
                }
            }
        }
        Ok(WSymmetry { tau, xi, b })
    }

    pub fn field(&self) -> VectorField {
        VectorField::new(self.tau.clone(), self.xi.clone())
    }
}

/// `y = φ(x,t)` with the noise rotated as `w = R z`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMap {
    pub phi: Vec<Expr>,
    pub r: Matrix,
    /// `x` in terms of `y`, written with the same variable names.
    pub inverse: Option<Vec<Expr>>,
}

impl DiscreteMap {
    pub fn new(phi: Vec<Expr>, r: Matrix) -> Result<Self, ModelError> {
        let m = r.len();
        if r.iter().any(|row| row.len() != m) {
            return Err(ModelError::Shape("R must be square".into()));
        }
        for i in 0..m {
            for j in 0..m {
                let dot: Expr = (0..m).map(|k| &r[i][k] * &r[j][k]).sum();
                let want = if i == j { Expr::one() } else { Expr::zero() };
                if zero_test(&(&dot - &want)) != ZeroTest::Zero {
                    return Err(ModelError::Invalid("R must be orthogonal".into()));
                }
            }
        }
        Ok(DiscreteMap { phi, r, inverse: None })
    }

    pub fn with_inverse(mut self, inverse: Vec<Expr>) -> Self {
        self.inverse = Some(inverse);
        self
    }

    pub fn identity(vars: &[Symbol], m: usize) -> Self {
        DiscreteMap {
            phi: vars.iter().map(Expr::sym).collect(),
            r: identity(m),
            inverse: Some(vars.iter().map(Expr::sym).collect()),
        }
    }
}

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { Expr::one() } else { Expr::zero() }).collect())
        .collect()
}

/// The equation satisfied by `y = φ(x,t)`. With `eliminate` the result is
/// rewritten in `y` through the supplied inverse; otherwise coefficients
/// stay expressed in `x`.
pub fn apply_discrete(ito: &ItoSystem, map: &DiscreteMap, eliminate: bool) -> Result<ItoSystem, ModelError> {
    let n = ito.n();
    let x = &ito.vars;
    if map.phi.len() != n || map.r.len() != ito.m() {
        return Err(ModelError::Shape("map does not match the system dimensions".into()));
    }
    let s = ito.s_matrix();
    let mut drift = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for i in 0..n {
        let grad: Vec<Expr> = x.iter().map(|v| map.phi[i].diff(v)).collect();
        let mut d = map.phi[i].diff(&ito.time);
        for j in 0..n {
            d = &d + &(&grad[j] * &ito.drift[j]);
        }
        drift.push(&d + &s_laplacian(&s, &map.phi[i], x));
        let row: Vec<Expr> = (0..ito.m())
            .map(|k| {
                let mut acc = Expr::zero();
                for j in 0..n {
                    for p in 0..ito.m() {
                        acc = &acc + &(&(&grad[j] * &ito.sigma[j][p]) * &map.r[p][k]);
                    }
                }
                acc
            })
            .collect();
        sigma.push(row);
    }
    if eliminate {
        let inv = map.inverse.as_ref().ok_or(ModelError::InverseNotSupplied)?;
        let sub: BTreeMap<Symbol, Expr> = x.iter().cloned().zip(inv.iter().cloned()).collect();
        drift = drift.iter().map(|e| e.subs(&sub)).collect();
        sigma = sigma.iter().map(|r| r.iter().map(|e| e.subs(&sub)).collect()).collect();
    }
    let mut out = ito.clone();
    out.drift = drift;
    out.sigma = sigma;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn p(s: &str) -> Expr {
        parse_expr(s, &Scope::permissive()).unwrap()
    }

    fn heat() -> ItoSystem {
        ItoSystem::new("heat", &["x"], vec![Expr::zero()], vec![vec![p("s0")]]).unwrap()
    }

    #[test]
    fn heat_fp_coefficients() {
        let fp = fokker_planck_of(&heat()).unwrap();
        assert_eq!(fp.a[0][0], p("-s0^2/2"));
        assert!(fp.b[0].is_zero());
        assert!(fp.c.is_zero());
    }

    #[test]
    fn kramers_fp_coefficients() {
        let sys = ItoSystem::new(
            "kramers",
            &["x", "y"],
            vec![p("y"), p("-k^2*y")],
            vec![vec![Expr::zero()], vec![p("sqrt(2*k^2)")]],
        )
        .unwrap();
        let fp = fokker_planck_of(&sys).unwrap();
        // u_t = k^2 u_yy - y u_x + k^2 y u_y + k^2 u
        assert_eq!(fp.a[1][1], p("-k^2"));
        assert_eq!(fp.b, vec![p("y"), p("-k^2*y")]);
        assert_eq!(fp.c, p("-k^2"));
    }

    #[test]
    fn rotating_sigma_gives_half_identity() {
        let sys = ItoSystem::new(
            "rot",
            &["x", "y"],
            vec![Expr::zero(), Expr::zero()],
            vec![vec![p("cos(t)"), p("-sin(t)")], vec![p("sin(t)"), p("cos(t)")]],
        )
        .unwrap();
        let a = sys.diffusion_matrix().unwrap();
        assert_eq!(a[0][0], Expr::frac(1, 2));
        assert!(a[0][1].is_zero());
        assert!(same_fp(&sys.sigma, &identity(2)).unwrap());
    }

    #[test]
    fn degenerate_diffusion_is_rejected() {
        let sys = ItoSystem::new("ode", &["x"], vec![p("x")], vec![vec![Expr::zero()]]).unwrap();
        assert!(matches!(sys.diffusion_matrix(), Err(ModelError::Degenerate)));
    }

    #[test]
    fn same_fp_distinguishes_scales() {
        let d1 = vec![vec![Expr::one(), Expr::zero()], vec![Expr::zero(), Expr::one()]];
        let d2 = vec![vec![Expr::one(), Expr::zero()], vec![Expr::zero(), Expr::int(2)]];
        assert!(!same_fp(&d1, &d2).unwrap());
    }

    #[test]
    fn stratonovich_of_multiplicative_noise() {
        let sys = ItoSystem::new("m", &["x"], vec![Expr::zero()], vec![vec![p("x")]]).unwrap();
        assert_eq!(ito_to_stratonovich(&sys), vec![p("-x/2")]);
    }

    #[test]
    fn bracket_examples() {
        let x = [Symbol::new("x")];
        assert_eq!(lie_bracket(&[p("x")], &[Expr::one()], &x).unwrap(), vec![Expr::int(-1)]);
        assert!(lie_bracket(&[p("x")], &[Expr::one(), Expr::one()], &x).is_err());
    }

    #[test]
    fn first_order_transformation() {
        let (df, ds) = transform_ito_first_order(&heat(), &[p("s0^2*t")]).unwrap();
        assert_eq!(df[0], p("s0^2"));
        assert!(ds[0][0].is_zero());
        let bm = ItoSystem::new("bm", &["x"], vec![Expr::zero()], vec![vec![Expr::one()]]).unwrap();
        let (df, ds) = transform_ito_first_order(&bm, &[p("x")]).unwrap();
        assert!(df[0].is_zero());
        assert_eq!(ds[0][0], Expr::one());
    }

    #[test]
    fn reflection_of_langevin() {
        let sys = ItoSystem::new("ou", &["x"], vec![p("-x")], vec![vec![p("sqrt(2*s)")]]).unwrap();
        let map = DiscreteMap::new(vec![p("-x")], vec![vec![Expr::int(-1)]]).unwrap().with_inverse(vec![p("-x")]);
        assert_eq!(apply_discrete(&sys, &map, true).unwrap(), sys);
        let no_inv = DiscreteMap::new(vec![p("-x")], vec![vec![Expr::int(-1)]]).unwrap();
        assert!(matches!(apply_discrete(&sys, &no_inv, true), Err(ModelError::InverseNotSupplied)));
    }

    #[test]
    fn reflection_breaks_quadratic_drift() {
        let sys = ItoSystem::new("q", &["x"], vec![p("x^2")], vec![vec![Expr::one()]]).unwrap();
        let map = DiscreteMap::new(vec![p("-x")], identity(1)).unwrap().with_inverse(vec![p("-x")]);
        let out = apply_discrete(&sys, &map, true).unwrap();
        assert_eq!(out.drift[0], p("-x^2"));
    }

    #[test]
    fn json_round_trip() {
        let sys = heat().with_params(&[("s0", ParamKind::Nonzero)]);
        let back = ItoSystem::from_json(&sys.to_json()).unwrap();
        assert_eq!(back, sys);
    }
}
