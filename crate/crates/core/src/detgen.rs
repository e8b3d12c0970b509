//! Determining equations: the expressions that must vanish identically in
//! `(x, t)` for a candidate to be a symmetry.
//!
//! Candidates may be concrete or built from unknown functions (see
//! [`generic_field`] and friends); in the latter case the emitted system
//! lists those unknowns and [`crate::verify::check`] binds them later.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::expr::{Expr, Symbol};
use crate::model::{
    lie_bracket, s_laplacian, DiscreteMap, FokkerPlanck, ItoSystem, Matrix, ModelError, VectorField, WSymmetry,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Equation {
    pub label: String,
    #[serde(serialize_with = "as_string")]
    pub expr: Expr,
}

fn as_string<S: serde::Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&e.to_string())
}

/// An unknown function appearing in a determining system.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Unknown {
    pub name: String,
    pub args: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeterminingSystem {
    pub name: String,
    pub unknowns: Vec<Unknown>,
    pub equations: Vec<Equation>,
}

impl DeterminingSystem {
    pub fn new(name: &str, unknowns: &[Unknown], equations: Vec<Equation>) -> Self {
        let mut used = BTreeSet::new();
        for eq in &equations {
            used.extend(eq.expr.opaque_names());
        }
        let unknowns = unknowns.iter().filter(|u| used.contains(&Symbol::new(&u.name))).cloned().collect();
        DeterminingSystem { name: name.to_string(), unknowns, equations }
    }

    pub fn get(&self, label: &str) -> Option<&Expr> {
        self.equations.iter().find(|e| e.label == label).map(|e| &e.expr)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("determining system serializes")
    }
}

fn eq(label: String, expr: Expr) -> Equation {
    Equation { label, expr }
}

fn state_and_time(ito: &ItoSystem) -> Vec<Expr> {
    ito.vars.iter().chain(std::iter::once(&ito.time)).map(Expr::sym).collect()
}

fn unknown(name: &str, args: &[Expr]) -> (Expr, Unknown) {
    let e = Expr::opaque(&Symbol::new(name), args.to_vec());
    let u = Unknown { name: name.to_string(), args: args.iter().map(Expr::to_string).collect() };
    (e, u)
}

/// Vector field whose components are unknown functions
/// `tau(t)`, `xi_<x>(x.., t)` and optionally `beta(x.., t)`.
pub fn generic_field(ito: &ItoSystem, with_beta: bool) -> (VectorField, Vec<Unknown>) {
    let args = state_and_time(ito);
    let mut unknowns = Vec::new();
    let (tau, u) = unknown("tau", &[Expr::sym(&ito.time)]);
    unknowns.push(u);
    let xi = ito
        .vars
        .iter()
        .map(|v| {
            let (e, u) = unknown(&format!("xi_{v}"), &args);
            unknowns.push(u);
            e
        })
        .collect();
    let mut vf = VectorField::new(tau, xi);
    if with_beta {
        let (b, u) = unknown("beta", &args);
        unknowns.push(u);
        vf.beta = Some(b);
    }
    (vf, unknowns)
}

/// Generic field plus an antisymmetric matrix of unknown constants `B_p_q`.
pub fn generic_w(ito: &ItoSystem) -> (WSymmetry, Vec<Unknown>) {
    let (vf, mut unknowns) = generic_field(ito, false);
    let m = ito.m();
    let mut b = vec![vec![Expr::zero(); m]; m];
    for p in 0..m {
        for q in p + 1..m {
            let (e, u) = unknown(&format!("B_{}_{}", p + 1, q + 1), &[]);
            unknowns.push(u);
            b[q][p] = -&e;
            b[p][q] = e;
        }
    }
    (WSymmetry { tau: vf.tau, xi: vf.xi, b }, unknowns)
}

/// Map `phi_<x>(x.., t)` with unknown constant rotation entries `R_p_q`.
pub fn generic_discrete(ito: &ItoSystem) -> (DiscreteMap, Vec<Unknown>) {
    let args = state_and_time(ito);
    let mut unknowns = Vec::new();
    let phi = ito
        .vars
        .iter()
        .map(|v| {
            let (e, u) = unknown(&format!("phi_{v}"), &args);
            unknowns.push(u);
            e
        })
        .collect();
    let m = ito.m();
    let r = (0..m)
        .map(|p| {
            (0..m)
                .map(|q| {
                    let (e, u) = unknown(&format!("R_{}_{}", p + 1, q + 1), &[]);
                    unknowns.push(u);
                    e
                })
                .collect()
        })
        .collect();
    (DiscreteMap { phi, r, inverse: None }, unknowns)
}

fn check_dims(ito: &ItoSystem, xi: &[Expr]) -> Result<(), ModelError> {
    if xi.len() != ito.n() {
        return Err(ModelError::Shape(format!("{} xi components for {} variables", xi.len(), ito.n())));
    }
    Ok(())
}

/// `∂_t(ξ - τ f) + {f, ξ}` for the deterministic system `ẋ = f`.
pub fn detsys_ode(f: &[Expr], vars: &[Symbol], time: &Symbol, vf: &VectorField) -> Result<DeterminingSystem, ModelError> {
    if vf.beta.is_some() {
        return Err(ModelError::Invalid("ODE symmetries carry no beta component".into()));
    }
    vf.check_projectable(vars)?;
    let bracket = lie_bracket(f, &vf.xi, vars)?;
    let eqs = (0..f.len())
        .map(|i| {
            let e = &(&vf.xi[i] - &(&vf.tau * &f[i])).diff(time) + &bracket[i];
            eq(format!("ODE[{}]", i + 1), e)
        })
        .collect();
    Ok(DeterminingSystem::new("ode", &[], eqs))
}

/// `Λ^i = -[∂_t(ξ^i - τ f^i) + {f, ξ}^i + S^{mk} ∂²_{mk} ξ^i]`.
pub fn lambda(ito: &ItoSystem, vf: &VectorField) -> Result<Vec<Expr>, ModelError> {
    check_dims(ito, &vf.xi)?;
    let x = &ito.vars;
    let s = ito.s_matrix();
    let bracket = lie_bracket(&ito.drift, &vf.xi, x)?;
    Ok((0..ito.n())
        .map(|i| {
            let e = &(&(&vf.xi[i] - &(&vf.tau * &ito.drift[i])).diff(&ito.time) + &bracket[i])
                + &s_laplacian(&s, &vf.xi[i], x);
            -e
        })
        .collect())
}

/// `Γ^i_k = σ^m_k ∂_m ξ^i - ξ^m ∂_m σ^i_k - τ ∂_t σ^i_k - (1/2) σ^i_k ∂_t τ`,
/// minus `σ^i_p B^p_k` when a noise rotation `B` is given.
pub fn gamma(ito: &ItoSystem, vf: &VectorField, b: Option<&Matrix>) -> Result<Matrix, ModelError> {
    check_dims(ito, &vf.xi)?;
    let x = &ito.vars;
    let half_tau_t = &vf.tau.diff(&ito.time) * &Expr::frac(1, 2);
    let grads: Vec<Vec<Expr>> = vf.xi.iter().map(|xi| x.iter().map(|v| xi.diff(v)).collect()).collect();
    Ok((0..ito.n())
        .map(|i| {
            (0..ito.m())
                .map(|k| {
                    let sik = &ito.sigma[i][k];
                    let mut acc = Expr::zero();
                    for (mi, v) in x.iter().enumerate() {
                        acc = &acc + &(&ito.sigma[mi][k] * &grads[i][mi]);
                        acc = &acc - &(&vf.xi[mi] * &sik.diff(v));
                    }
                    acc = &acc - &(&vf.tau * &sik.diff(&ito.time));
                    acc = &acc - &(sik * &half_tau_t);
                    if let Some(b) = b {
                        for p in 0..ito.m() {
                            acc = &acc - &(&ito.sigma[i][p] * &b[p][k]);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect())
}

fn lambda_gamma_equations(lam: Vec<Expr>, gam: Matrix) -> Vec<Equation> {
    let mut eqs: Vec<Equation> =
        lam.into_iter().enumerate().map(|(i, e)| eq(format!("Lambda[{}]", i + 1), e)).collect();
    for (i, row) in gam.into_iter().enumerate() {
        for (k, e) in row.into_iter().enumerate() {
            eqs.push(eq(format!("Gamma[{}][{}]", i + 1, k + 1), e));
        }
    }
    eqs
}

/// Symmetries acting on `x` only. The drift family is emitted in the same
/// sign as `Λ` so that it coincides with the projectable system at `τ = 0`.
pub fn detsys_spatial(ito: &ItoSystem, xi: &[Expr]) -> Result<DeterminingSystem, ModelError> {
    let vf = VectorField::new(Expr::zero(), xi.to_vec());
    let eqs = lambda_gamma_equations(lambda(ito, &vf)?, gamma(ito, &vf, None)?);
    Ok(DeterminingSystem::new("ito-spatial", &[], eqs))
}

/// `Λ = 0, Γ = 0` for a projectable field. A `beta` component, if present,
/// must be the normalization-preserving one, `β = -div ξ`.
pub fn detsys_projectable(ito: &ItoSystem, vf: &VectorField) -> Result<DeterminingSystem, ModelError> {
    detsys_projectable_with(ito, vf, &[])
}

pub fn detsys_projectable_with(
    ito: &ItoSystem,
    vf: &VectorField,
    unknowns: &[Unknown],
) -> Result<DeterminingSystem, ModelError> {
    vf.check_projectable(&ito.vars)?;
    let mut eqs = lambda_gamma_equations(lambda(ito, vf)?, gamma(ito, vf, None)?);
    if let Some(beta) = &vf.beta {
        eqs.push(eq("Beta".into(), beta + &vf.divergence(&ito.vars)));
    }
    Ok(DeterminingSystem::new("ito-projectable", unknowns, eqs))
}

/// W-symmetries: `Λ = 0` and `Γ - σ B = 0`.
pub fn detsys_w(ito: &ItoSystem, ws: &WSymmetry) -> Result<DeterminingSystem, ModelError> {
    detsys_w_with(ito, ws, &[])
}

pub fn detsys_w_with(ito: &ItoSystem, ws: &WSymmetry, unknowns: &[Unknown]) -> Result<DeterminingSystem, ModelError> {
    if ws.b.len() != ito.m() {
        return Err(ModelError::Shape(format!("B is {}x{}, system has {} noises", ws.b.len(), ws.b.len(), ito.m())));
    }
    let vf = ws.field();
    vf.check_projectable(&ito.vars)?;
    let eqs = lambda_gamma_equations(lambda(ito, &vf)?, gamma(ito, &vf, Some(&ws.b))?);
    Ok(DeterminingSystem::new("ito-w", unknowns, eqs))
}

/// Symmetries `τ ∂_t + ξ ∂_x + β u ∂_u` of `u_t + A u_ij + B u_i + C u = 0`.
pub fn detsys_fp(fp: &FokkerPlanck, vf: &VectorField) -> Result<DeterminingSystem, ModelError> {
    detsys_fp_with(fp, vf, &[])
}

pub fn detsys_fp_with(fp: &FokkerPlanck, vf: &VectorField, unknowns: &[Unknown]) -> Result<DeterminingSystem, ModelError> {
    let beta = vf.beta.as_ref().ok_or_else(|| ModelError::Invalid("FP symmetries need a beta component".into()))?;
    vf.check_projectable(&fp.vars)?;
    let n = fp.n();
    if vf.xi.len() != n {
        return Err(ModelError::Shape(format!("{} xi components for {} variables", vf.xi.len(), n)));
    }
    let x = &fp.vars;
    let t = &fp.time;
    let (a, b, c) = (&fp.a, &fp.b, &fp.c);
    let dxi: Vec<Vec<Expr>> = vf.xi.iter().map(|e| x.iter().map(|v| e.diff(v)).collect()).collect();
    let dbeta: Vec<Expr> = x.iter().map(|v| beta.diff(v)).collect();
    let mut eqs = Vec::new();
    for i in 0..n {
        for k in 0..n {
            let mut e = (&vf.tau * &a[i][k]).diff(t);
            for m in 0..n {
                e = &e + &(&vf.xi[m] * &a[i][k].diff(&x[m]));
                e = &e - &(&a[i][m] * &dxi[k][m]);
                e = &e - &(&a[m][k] * &dxi[i][m]);
            }
            eqs.push(eq(format!("FP-A[{}][{}]", i + 1, k + 1), e));
        }
    }
    for i in 0..n {
        let mut e = &(&vf.tau * &b[i]).diff(t) - &vf.xi[i].diff(t);
        for m in 0..n {
            e = &e - &(&b[m] * &dxi[i][m]);
            e = &e + &(&vf.xi[m] * &b[i].diff(&x[m]));
            e = &e + &(&(&a[i][m] * &dbeta[m]) * &Expr::int(2));
        }
        e = &e - &s_laplacian(a, &vf.xi[i], x);
        eqs.push(eq(format!("FP-B[{}]", i + 1), e));
    }
    let mut e = &(&vf.tau * c).diff(t) + &beta.diff(t);
    e = &e + &s_laplacian(a, beta, x);
    for m in 0..n {
        e = &e + &(&b[m] * &dbeta[m]);
        e = &e + &(&vf.xi[m] * &c.diff(&x[m]));
    }
    eqs.push(eq("FP-C".into(), e));
    Ok(DeterminingSystem::new("fokker-planck", unknowns, eqs))
}

/// Discrete maps `y = φ(x,t)`, `w = R z`: the transformed coefficients must
/// equal the original ones evaluated at `φ`.
pub fn detsys_discrete(ito: &ItoSystem, map: &DiscreteMap) -> Result<DeterminingSystem, ModelError> {
    detsys_discrete_with(ito, map, &[])
}

pub fn detsys_discrete_with(
    ito: &ItoSystem,
    map: &DiscreteMap,
    unknowns: &[Unknown],
) -> Result<DeterminingSystem, ModelError> {
    let transformed = crate::model::apply_discrete(ito, map, false)?;
    let at_phi: BTreeMap<Symbol, Expr> = ito.vars.iter().cloned().zip(map.phi.iter().cloned()).collect();
    let mut eqs = Vec::new();
    for i in 0..ito.n() {
        let e = &transformed.drift[i] - &ito.drift[i].subs(&at_phi);
        eqs.push(eq(format!("Drift[{}]", i + 1), e));
    }
    for i in 0..ito.n() {
        for k in 0..ito.m() {
            let e = &transformed.sigma[i][k] - &ito.sigma[i][k].subs(&at_phi);
            eqs.push(eq(format!("Noise[{}][{}]", i + 1, k + 1), e));
        }
    }
    Ok(DeterminingSystem::new("ito-discrete", unknowns, eqs))
}
