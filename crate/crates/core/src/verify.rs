//! Deciding determining systems and relating Itô and Fokker–Planck
//! symmetries.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::detgen::{self, DeterminingSystem, Unknown};
use crate::expr::{zero_test, Expr, FnBinding, FnBindings, SubstError, Symbol, ZeroTest};
use crate::dsl::Candidate;
use crate::model::{
    fokker_planck_of, DiscreteMap, FokkerPlanck, ItoSystem, Matrix, ModelError, ParamKind, VectorField, WSymmetry,
};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("unknown {0} has no binding")]
    Unbound(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("could not decide: {0}")]
    Inconclusive(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Subst(#[from] SubstError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Symmetry,
    NotSymmetry,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    ItoSymmetry,
    StatisticalEquivalence,
    Neither,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquationVerdict {
    pub label: String,
    pub verdict: ZeroTest,
    pub residual: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub system: String,
    pub equations: Vec<EquationVerdict>,
    pub overall: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
}

impl VerificationReport {
    pub fn is_symmetry(&self) -> bool {
        self.overall == Verdict::Symmetry
    }

    pub fn failing(&self) -> impl Iterator<Item = &EquationVerdict> {
        self.equations.iter().filter(|e| e.verdict != ZeroTest::Zero)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

fn overall(verdicts: impl IntoIterator<Item = ZeroTest>) -> Verdict {
    let mut out = Verdict::Symmetry;
    for v in verdicts {
        match v {
            ZeroTest::NonZero => return Verdict::NotSymmetry,
            ZeroTest::Inconclusive => out = Verdict::Inconclusive,
            ZeroTest::Zero => {}
        }
    }
    out
}

/// Binds the unknowns of `ds` and decides every equation.
pub fn check(ds: &DeterminingSystem, bindings: &FnBindings) -> Result<VerificationReport, VerifyError> {
    check_assuming(ds, bindings, &BTreeSet::new())
}

/// Parameters declared positive.
pub fn positive_params(ito: &ItoSystem) -> BTreeSet<Symbol> {
    ito.params.iter().filter(|p| p.kind == ParamKind::Positive).map(|p| Symbol::new(&p.name)).collect()
}

/// As [`check`], with radicals of the `positive` symbols split before
/// deciding each residual.
pub fn check_assuming(
    ds: &DeterminingSystem,
    bindings: &FnBindings,
    positive: &BTreeSet<Symbol>,
) -> Result<VerificationReport, VerifyError> {
    for u in &ds.unknowns {
        if !bindings.contains_key(&Symbol::new(&u.name)) {
            return Err(VerifyError::Unbound(u.name.clone()));
        }
    }
    let mut equations = Vec::with_capacity(ds.equations.len());
    for eq in &ds.equations {
        let residual = eq.expr.bind_functions(bindings)?.split_radicals(positive);
        equations.push(EquationVerdict {
            label: eq.label.clone(),
            verdict: zero_test(&residual),
            residual: residual.to_string(),
        });
    }
    Ok(VerificationReport {
        system: ds.name.clone(),
        overall: overall(equations.iter().map(|e| e.verdict)),
        equations,
        classification: None,
    })
}

fn params_of(u: &Unknown) -> Vec<Symbol> {
    u.args.iter().map(|a| Symbol::new(a)).collect()
}

fn bind(unknowns: &[Unknown], name: &str, body: &Expr, out: &mut FnBindings) {
    if let Some(u) = unknowns.iter().find(|u| u.name == name) {
        out.insert(Symbol::new(name), FnBinding::new(params_of(u), body.clone()));
    }
}

/// Bindings sending the unknowns of [`detgen::generic_field`] to `vf`.
pub fn field_bindings(ito: &ItoSystem, unknowns: &[Unknown], vf: &VectorField) -> FnBindings {
    let mut out = FnBindings::new();
    bind(unknowns, "tau", &vf.tau, &mut out);
    for (v, xi) in ito.vars.iter().zip(&vf.xi) {
        bind(unknowns, &format!("xi_{v}"), xi, &mut out);
    }
    if let Some(b) = &vf.beta {
        bind(unknowns, "beta", b, &mut out);
    }
    out
}

pub fn w_bindings(ito: &ItoSystem, unknowns: &[Unknown], ws: &WSymmetry) -> FnBindings {
    let mut out = field_bindings(ito, unknowns, &ws.field());
    for p in 0..ws.b.len() {
        for q in p + 1..ws.b.len() {
            bind(unknowns, &format!("B_{}_{}", p + 1, q + 1), &ws.b[p][q], &mut out);
        }
    }
    out
}

pub fn discrete_bindings(ito: &ItoSystem, unknowns: &[Unknown], map: &DiscreteMap) -> FnBindings {
    let mut out = FnBindings::new();
    for (v, phi) in ito.vars.iter().zip(&map.phi) {
        bind(unknowns, &format!("phi_{v}"), phi, &mut out);
    }
    for (p, row) in map.r.iter().enumerate() {
        for (q, e) in row.iter().enumerate() {
            bind(unknowns, &format!("R_{}_{}", p + 1, q + 1), e, &mut out);
        }
    }
    out
}

/// Checks `vf` against the projectable Itô system, going through the
/// generic system and binding, as the command-line tool does.
pub fn check_projectable(ito: &ItoSystem, vf: &VectorField) -> Result<VerificationReport, VerifyError> {
    vf.check_projectable(&ito.vars)?;
    let (generic, unknowns) = detgen::generic_field(ito, vf.beta.is_some());
    let ds = detgen::detsys_projectable_with(ito, &generic, &unknowns)?;
    check_assuming(&ds, &field_bindings(ito, &ds.unknowns, vf), &positive_params(ito))
}

pub fn check_spatial(ito: &ItoSystem, xi: &[Expr]) -> Result<VerificationReport, VerifyError> {
    let ds = detgen::detsys_spatial(ito, xi)?;
    check_assuming(&ds, &FnBindings::new(), &positive_params(ito))
}

pub fn check_w(ito: &ItoSystem, ws: &WSymmetry) -> Result<VerificationReport, VerifyError> {
    let (generic, unknowns) = detgen::generic_w(ito);
    let ds = detgen::detsys_w_with(ito, &generic, &unknowns)?;
    check_assuming(&ds, &w_bindings(ito, &ds.unknowns, ws), &positive_params(ito))
}

pub fn check_fp(fp: &FokkerPlanck, vf: &VectorField) -> Result<VerificationReport, VerifyError> {
    check_fp_assuming(fp, vf, &BTreeSet::new())
}

pub fn check_fp_assuming(
    fp: &FokkerPlanck,
    vf: &VectorField,
    positive: &BTreeSet<Symbol>,
) -> Result<VerificationReport, VerifyError> {
    let ds = detgen::detsys_fp(fp, vf)?;
    check_assuming(&ds, &FnBindings::new(), positive)
}

pub fn check_discrete(ito: &ItoSystem, map: &DiscreteMap) -> Result<VerificationReport, VerifyError> {
    let ds = detgen::detsys_discrete(ito, map)?;
    check_assuming(&ds, &FnBindings::new(), &positive_params(ito))
}

/// The normalization-preserving extension `β = -div ξ`.
pub fn extend_to_fp(vf: &VectorField, vars: &[Symbol]) -> Result<VectorField, VerifyError> {
    if vf.beta.is_some() {
        return Err(VerifyError::Precondition("field already has a beta component".into()));
    }
    Ok(vf.clone().with_beta(-vf.divergence(vars)))
}

/// Whether the FP symmetry keeps `∫ u dx` fixed, i.e. `β + div ξ ≡ 0`.
pub fn check_normalization_preserving(vf: &VectorField, vars: &[Symbol]) -> Result<ZeroTest, VerifyError> {
    let beta = vf
        .beta
        .as_ref()
        .ok_or_else(|| VerifyError::Precondition("field has no beta component".into()))?;
    Ok(zero_test(&(beta + &vf.divergence(vars))))
}

fn all_zero(m: &Matrix, what: &str, positive: &BTreeSet<Symbol>) -> Result<bool, VerifyError> {
    let mut any_inconclusive = false;
    for e in m.iter().flatten() {
        match zero_test(&e.split_radicals(positive)) {
            ZeroTest::NonZero => return Ok(false),
            ZeroTest::Inconclusive => any_inconclusive = true,
            ZeroTest::Zero => {}
        }
    }
    if any_inconclusive {
        return Err(VerifyError::Inconclusive(what.to_string()));
    }
    Ok(true)
}

/// Relates a normalization-preserving FP symmetry to the Itô equation:
/// an Itô symmetry when `Γ ≡ 0`, a statistical equivalence when only
/// `σΓᵀ + Γσᵀ ≡ 0`.
pub fn project_fp_symmetry(ito: &ItoSystem, vf: &VectorField) -> Result<Classification, VerifyError> {
    let fp = fokker_planck_of(ito)?;
    let positive = positive_params(ito);
    let report = check_fp_assuming(&fp, vf, &positive)?;
    if !report.is_symmetry() {
        return Err(VerifyError::Precondition("field is not a symmetry of the Fokker-Planck equation".into()));
    }
    if check_normalization_preserving(vf, &ito.vars)? != ZeroTest::Zero {
        return Err(VerifyError::Precondition("field does not preserve normalization".into()));
    }
    let base = VectorField::new(vf.tau.clone(), vf.xi.clone());
    let g = detgen::gamma(ito, &base, None)?;
    if all_zero(&g, "Gamma", &positive)? {
        return Ok(Classification::ItoSymmetry);
    }
    Ok(if all_zero(&gamma_symmetrized(ito, &g), "sigma Gamma^T + Gamma sigma^T", &positive)? {
        Classification::StatisticalEquivalence
    } else {
        Classification::Neither
    })
}

/// `σ Γᵀ + Γ σᵀ`.
pub fn gamma_symmetrized(ito: &ItoSystem, g: &Matrix) -> Matrix {
    let n = ito.n();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|k| {
                    (0..ito.m())
                        .map(|j| &(&ito.sigma[i][j] * &g[k][j]) + &(&g[i][j] * &ito.sigma[k][j]))
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// `α ∂_u` is a (superposition) symmetry iff `α` solves the FP equation.
pub fn check_trivial(fp: &FokkerPlanck, alpha: &Expr) -> ZeroTest {
    zero_test(&fp.apply(alpha))
}

/// The determining system a candidate is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Spatial,
    Projectable,
    Fp,
    W,
    Discrete,
}

impl FromStr for CheckKind {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Self, VerifyError> {
        match s {
            "spatial" => Ok(CheckKind::Spatial),
            "projectable" => Ok(CheckKind::Projectable),
            "fp" => Ok(CheckKind::Fp),
            "w" => Ok(CheckKind::W),
            "discrete" => Ok(CheckKind::Discrete),
            other => Err(VerifyError::Precondition(format!("unknown system kind '{other}'"))),
        }
    }
}

/// Checks a candidate read from a file. Against the Fokker–Planck equation
/// a candidate without `beta` gets the normalization-preserving extension
/// and, when it passes, a classification relative to the Itô equation.
pub fn check_candidate(ito: &ItoSystem, cand: &Candidate, kind: CheckKind) -> Result<VerificationReport, VerifyError> {
    if cand.beta.is_some() && !matches!(kind, CheckKind::Projectable | CheckKind::Fp) {
        return Err(VerifyError::Precondition("beta only applies to projectable and Fokker-Planck checks".into()));
    }
    match kind {
        CheckKind::Spatial => {
            let vf = cand.vector_field(ito)?;
            if !vf.tau.is_zero() {
                return Err(VerifyError::Precondition("a spatial candidate has no tau component".into()));
            }
            check_spatial(ito, &vf.xi)
        }
        CheckKind::Projectable => check_projectable(ito, &cand.vector_field(ito)?),
        CheckKind::W => check_w(ito, &cand.w_symmetry(ito)?),
        CheckKind::Discrete => check_discrete(ito, &cand.discrete_map(ito)?),
        CheckKind::Fp => {
            let fp = fokker_planck_of(ito)?;
            let vf = cand.vector_field(ito)?;
            let extended = vf.beta.is_none();
            let vf = if extended { extend_to_fp(&vf, &ito.vars)? } else { vf };
            let mut report = check_fp_assuming(&fp, &vf, &positive_params(ito))?;
            if extended && report.is_symmetry() {
                report.classification = project_fp_symmetry(ito, &vf).ok();
            }
            Ok(report)
        }
    }
}
