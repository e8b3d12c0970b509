//! The KPZ growth equation discretized on a periodic chain,
//! `dx^i = [α(x^{i+1} - 2x^i + x^{i-1}) + β(x^{i+1} - x^{i-1})²] dt + dw^i`,
//! written as `dx^i = (M^i_k x^k + Γ^i_{jk} x^j x^k) dt + dw^i`, and its
//! symmetry conditions expressed through the tensors `M` and `Γ`.

use thiserror::Error;

use crate::detgen::{DeterminingSystem, Equation};
use crate::expr::{Expr, FnBindings, Symbol};
use crate::model::{identity, DiscreteMap, ItoSystem, Matrix, ModelError, Param, ParamKind, WSymmetry};
use crate::verify::{self, VerificationReport, VerifyError};

#[derive(Debug, Error)]
pub enum KpzError {
    #[error("a chain needs at least 3 sites, got {0}")]
    TooShort(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown check '{0}'")]
    UnknownCheck(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KpzChain {
    pub sites: usize,
    pub alpha: Expr,
    pub beta: Expr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KpzTensors {
    pub m: Matrix,
    /// `gamma[i][j][k] = Γ^i_{jk}`.
    pub gamma: Vec<Matrix>,
}

impl KpzChain {
    pub fn new(sites: usize, alpha: Expr, beta: Expr) -> Result<Self, KpzError> {
        if sites < 3 {
            return Err(KpzError::TooShort(sites));
        }
        Ok(KpzChain { sites, alpha, beta })
    }

    /// Chain with symbolic coefficients `alpha` and `beta`.
    pub fn symbolic(sites: usize) -> Result<Self, KpzError> {
        Self::new(sites, Expr::var("alpha"), Expr::var("beta"))
    }

    pub fn vars(&self) -> Vec<Symbol> {
        (1..=self.sites).map(|i| Symbol::new(&format!("x{i}"))).collect()
    }

    fn up(&self, i: usize) -> usize {
        (i + 1) % self.sites
    }

    fn down(&self, i: usize) -> usize {
        (i + self.sites - 1) % self.sites
    }
}

pub fn kpz_ito(chain: &KpzChain) -> Result<ItoSystem, KpzError> {
    let vars = chain.vars();
    let x: Vec<Expr> = vars.iter().map(Expr::sym).collect();
    let drift = (0..chain.sites)
        .map(|i| {
            let (u, d) = (&x[chain.up(i)], &x[chain.down(i)]);
            let lap = &(u + d) - &(&x[i] * &Expr::int(2));
            &(&chain.alpha * &lap) + &(&chain.beta * &(u - d).pow(2))
        })
        .collect();
    let names: Vec<&str> = vars.iter().map(Symbol::name).collect();
    let mut sys = ItoSystem::new(&format!("kpz{}", chain.sites), &names, drift, identity(chain.sites))?;
    let mut params: Vec<Symbol> = chain.alpha.free_symbols().into_iter().chain(chain.beta.free_symbols()).collect();
    params.sort();
    params.dedup();
    sys.params = params.iter().map(|p| Param { name: p.name().to_string(), kind: ParamKind::Real }).collect();
    Ok(sys)
}

pub fn kpz_tensors(chain: &KpzChain) -> KpzTensors {
    let n = chain.sites;
    let mut m = vec![vec![Expr::zero(); n]; n];
    let mut gamma = vec![vec![vec![Expr::zero(); n]; n]; n];
    for i in 0..n {
        let (u, d) = (chain.up(i), chain.down(i));
        m[i][u] = &m[i][u] + &chain.alpha;
        m[i][d] = &m[i][d] + &chain.alpha;
        m[i][i] = &m[i][i] - &(&chain.alpha * &Expr::int(2));
        let g = &mut gamma[i];
        g[u][u] = &g[u][u] + &chain.beta;
        g[d][d] = &g[d][d] + &chain.beta;
        g[u][d] = &g[u][d] - &chain.beta;
        g[d][u] = &g[d][u] - &chain.beta;
    }
    KpzTensors { m, gamma }
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let k = b.first().map_or(0, Vec::len);
    let mut out = vec![vec![Expr::zero(); k]; n];
    for i in 0..n {
        for (p, aip) in a[i].iter().enumerate() {
            if aip.is_zero() {
                continue;
            }
            for j in 0..k {
                if !b[p][j].is_zero() {
                    out[i][j] = &out[i][j] + &(aip * &b[p][j]);
                }
            }
        }
    }
    out
}

fn check_square(name: &str, a: &Matrix, n: usize) -> Result<(), KpzError> {
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(KpzError::Shape(format!("{name} must be {n}x{n}")));
    }
    Ok(())
}

/// Nonzero entries `(j, k, Γ^i_{jk})` for each `i`.
fn sparse_gamma(g: &[Matrix]) -> Vec<Vec<(usize, usize, Expr)>> {
    g.iter()
        .map(|gi| {
            let mut out = Vec::new();
            for (j, row) in gi.iter().enumerate() {
                for (k, e) in row.iter().enumerate() {
                    if !e.is_zero() {
                        out.push((j, k, e.clone()));
                    }
                }
            }
            out
        })
        .collect()
}

/// Conditions on a generator `τ(t)∂_t + (Λ(t)x + a(t))·∂_x` with constant
/// noise rotation `B`, obtained by splitting the drift condition by degree
/// in `x`, plus the noise condition tying `Λ` to `τ` and `B`.
///
/// Labels: `KPZ-0[i]` (constant part), `KPZ-1[i][k]` (linear part),
/// `KPZ-2[i][j][k]` for `j <= k` (quadratic part, symmetrized) and
/// `KPZ-noise[i][k]`.
pub fn kpz_detsys_continuous(
    chain: &KpzChain,
    tau: &Expr,
    lambda: &Matrix,
    a: &[Expr],
    b: &Matrix,
) -> Result<DeterminingSystem, KpzError> {
    let n = chain.sites;
    check_square("Lambda", lambda, n)?;
    check_square("B", b, n)?;
    if a.len() != n {
        return Err(KpzError::Shape(format!("alpha must have {n} entries")));
    }
    let t = Symbol::new("t");
    let KpzTensors { m, gamma } = kpz_tensors(chain);
    let tau_t = tau.diff(&t);
    let mut equations = Vec::new();

    for i in 0..n {
        let ma: Expr = (0..n).map(|j| &m[i][j] * &a[j]).sum();
        equations.push(Equation { label: format!("KPZ-0[{}]", i + 1), expr: &a[i].diff(&t) - &ma });
    }

    let lm = matmul(lambda, &m);
    let ml = matmul(&m, lambda);
    for i in 0..n {
        for k in 0..n {
            let mut e = &lambda[i][k].diff(&t) - &(&tau_t * &m[i][k]);
            e = &e + &(&lm[i][k] - &ml[i][k]);
            let ga: Expr = (0..n).map(|p| &gamma[i][k][p] * &a[p]).sum();
            e = &e - &(&ga * &Expr::int(2));
            equations.push(Equation { label: format!("KPZ-1[{}][{}]", i + 1, k + 1), expr: e });
        }
    }

    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let mut e = &tau_t * &gamma[i][j][k];
                for mm in 0..n {
                    if !lambda[i][mm].is_zero() {
                        e = &e - &(&lambda[i][mm] * &gamma[mm][j][k]);
                    }
                }
                for p in 0..n {
                    e = &e + &(&gamma[i][p][k] * &lambda[p][j]);
                    e = &e + &(&gamma[i][j][p] * &lambda[p][k]);
                }
                equations.push(Equation { label: format!("KPZ-2[{}][{}][{}]", i + 1, j + 1, k + 1), expr: e });
            }
        }
    }

    let half_tau_t = &tau_t * &Expr::frac(1, 2);
    for i in 0..n {
        for k in 0..n {
            let mut e = &lambda[i][k] - &b[i][k];
            if i == k {
                e = &e - &half_tau_t;
            }
            equations.push(Equation { label: format!("KPZ-noise[{}][{}]", i + 1, k + 1), expr: e });
        }
    }
    Ok(DeterminingSystem::new("kpz-continuous", &[], equations))
}

/// Checks the linear map `x -> F x`, `w -> F w` through `[F, M] = 0` and
/// `F^i_j Γ^j_{km} = Γ^i_{pq} F^p_k F^q_m`.
pub fn kpz_check_discrete(chain: &KpzChain, f: &Matrix) -> Result<VerificationReport, KpzError> {
    let n = chain.sites;
    check_square("F", f, n)?;
    let KpzTensors { m, gamma } = kpz_tensors(chain);
    let mut equations = Vec::new();
    let fm = matmul(f, &m);
    let mf = matmul(&m, f);
    for i in 0..n {
        for j in 0..n {
            equations.push(Equation {
                label: format!("Commute[{}][{}]", i + 1, j + 1),
                expr: &fm[i][j] - &mf[i][j],
            });
        }
    }
    let sparse = sparse_gamma(&gamma);
    for i in 0..n {
        for k in 0..n {
            for mm in k..n {
                let mut e = Expr::zero();
                for j in 0..n {
                    if !f[i][j].is_zero() && !gamma[j][k][mm].is_zero() {
                        e = &e + &(&f[i][j] * &gamma[j][k][mm]);
                    }
                }
                for (p, q, g) in &sparse[i] {
                    let w = &f[*p][k] * &f[*q][mm];
                    if !w.is_zero() {
                        e = &e - &(g * &w);
                    }
                }
                equations.push(Equation { label: format!("Quadratic[{}][{}][{}]", i + 1, k + 1, mm + 1), expr: e });
            }
        }
    }
    let ds = DeterminingSystem::new("kpz-discrete", &[], equations);
    Ok(verify::check(&ds, &FnBindings::new())?)
}

/// `F^i_j = δ^i_{j+1}` with wraparound.
pub fn site_shift(n: usize) -> Matrix {
    (0..n).map(|i| (0..n).map(|j| if i == (j + 1) % n { Expr::one() } else { Expr::zero() }).collect()).collect()
}

/// Reflection of the chain about site `m` (0-based): `F^i_k = 1` iff
/// `i - m ≡ m - k`.
pub fn site_inversion(n: usize, m: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|k| if (i + k) % n == (2 * m) % n { Expr::one() } else { Expr::zero() }).collect())
        .collect()
}

pub fn h_inversion(n: usize) -> Matrix {
    (0..n).map(|i| (0..n).map(|k| if i == k { Expr::int(-1) } else { Expr::zero() }).collect()).collect()
}

/// The symmetry checks offered on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KpzCheck {
    TimeShift,
    HShift,
    SiteShift,
    Inversion(usize),
    HInversion,
}

impl std::str::FromStr for KpzCheck {
    type Err = KpzError;

    /// `inversion:m` takes a 1-based site.
    fn from_str(s: &str) -> Result<Self, KpzError> {
        match s {
            "time-shift" => Ok(KpzCheck::TimeShift),
            "h-shift" => Ok(KpzCheck::HShift),
            "site-shift" => Ok(KpzCheck::SiteShift),
            "h-inversion" => Ok(KpzCheck::HInversion),
            _ => s
                .strip_prefix("inversion:")
                .and_then(|m| m.parse::<usize>().ok())
                .filter(|&m| m >= 1)
                .map(|m| KpzCheck::Inversion(m - 1))
                .ok_or_else(|| KpzError::UnknownCheck(s.to_string())),
        }
    }
}

impl KpzCheck {
    pub fn is_discrete(self) -> bool {
        !matches!(self, KpzCheck::TimeShift | KpzCheck::HShift)
    }

    /// The linear map of a discrete check.
    pub fn matrix(self, n: usize) -> Option<Matrix> {
        match self {
            KpzCheck::SiteShift => Some(site_shift(n)),
            KpzCheck::Inversion(m) => Some(site_inversion(n, m)),
            KpzCheck::HInversion => Some(h_inversion(n)),
            KpzCheck::TimeShift | KpzCheck::HShift => None,
        }
    }

    /// `(τ, Λ, a, B)` of a continuous check.
    pub fn generator(self, n: usize) -> Option<(Expr, Matrix, Vec<Expr>, Matrix)> {
        let zero = vec![vec![Expr::zero(); n]; n];
        match self {
            KpzCheck::TimeShift => Some((Expr::one(), zero.clone(), vec![Expr::zero(); n], zero)),
            KpzCheck::HShift => Some((Expr::zero(), zero.clone(), vec![Expr::one(); n], zero)),
            _ => None,
        }
    }
}

/// Runs a check through the tensor conditions.
pub fn run_check(chain: &KpzChain, check: KpzCheck) -> Result<VerificationReport, KpzError> {
    if let Some(f) = check.matrix(chain.sites) {
        return kpz_check_discrete(chain, &f);
    }
    let (tau, lambda, a, b) = check.generator(chain.sites).expect("continuous check");
    let ds = kpz_detsys_continuous(chain, &tau, &lambda, &a, &b)?;
    Ok(verify::check(&ds, &FnBindings::new())?)
}

/// Runs the same check through the general determining equations of the
/// Itô system; discrete maps use `φ = F x` with noise map `R = Fᵀ`.
pub fn run_check_general(chain: &KpzChain, check: KpzCheck) -> Result<VerificationReport, KpzError> {
    let ito = kpz_ito(chain)?;
    let n = chain.sites;
    let x: Vec<Expr> = ito.vars.iter().map(Expr::sym).collect();
    if let Some(f) = check.matrix(n) {
        let phi = f.iter().map(|row| row.iter().zip(&x).map(|(a, xi)| a * xi).sum()).collect();
        let r = (0..n).map(|i| (0..n).map(|k| f[k][i].clone()).collect()).collect();
        let map = DiscreteMap::new(phi, r)?;
        return Ok(verify::check_discrete(&ito, &map)?);
    }
    let (tau, lambda, a, b) = check.generator(n).expect("continuous check");
    let xi = (0..n).map(|i| &lambda[i].iter().zip(&x).map(|(l, xk)| l * xk).sum::<Expr>() + &a[i]).collect();
    let ws = WSymmetry::new(tau, xi, b)?;
    Ok(verify::check_w(&ito, &ws)?)
}
