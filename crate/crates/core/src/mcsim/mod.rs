//! Monte-Carlo cross-checks: Euler–Maruyama ensembles and statistical
//! comparison of their one-time marginals.

mod ks;

use std::io::{self, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub use ks::{ks_p_value, ks_statistic};

use crate::expr::{CompiledExpr, EvalError, Expr, Rational, Symbol};
use crate::model::{apply_discrete, transform_ito_first_order, DiscreteMap, ItoSystem, ModelError, VectorField};

#[derive(Debug, Error)]
pub enum McError {
    #[error("coefficient cannot be evaluated numerically: {0}")]
    Eval(#[from] EvalError),
    #[error("non-finite value on path {path} at step {step} (t = {time})")]
    BlowUp { path: usize, step: usize, time: f64 },
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("ensembles do not match: {0}")]
    Shape(String),
    #[error("unsupported candidate: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Number of recorded intervals; `slices + 1` times are stored,
    /// including the initial one.
    pub slices: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { t0: 0.0, t1: 1.0, dt: 1e-3, n_paths: 10_000, seed: 0, slices: 4 }
    }
}

/// Recorded states of many independent paths.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub n: usize,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    /// `data[(path * times.len() + slice) * n + coord]`.
    pub data: Vec<f64>,
}

impl Ensemble {
    pub fn value(&self, path: usize, slice: usize, coord: usize) -> f64 {
        self.data[(path * self.times.len() + slice) * self.n + coord]
    }

    /// One coordinate at one time across all paths.
    pub fn marginal(&self, slice: usize, coord: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.value(p, slice, coord)).collect()
    }

    /// Sample mean and unbiased variance of a marginal.
    pub fn moments(&self, slice: usize, coord: usize) -> (f64, f64) {
        let m = Moments::of(&self.marginal(slice, coord));
        (m.mean, m.var)
    }

    /// Little-endian layout: `n`, `n_paths`, number of stored times (u64),
    /// spacing of stored times (f64), `seed` (u64), then the data row-major
    /// as f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        let spacing = if self.times.len() > 1 { self.times[1] - self.times[0] } else { 0.0 };
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.n_paths as u64).to_le_bytes())?;
        w.write_all(&(self.times.len() as u64).to_le_bytes())?;
        w.write_all(&spacing.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the layout of [`Ensemble::write_binary`]; times are restored
    /// relative to the first one.
    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Ensemble> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> io::Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let n_paths = u64::from_le_bytes(next(&mut r)?) as usize;
        let n_times = u64::from_le_bytes(next(&mut r)?) as usize;
        let dt = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        let len = n
            .checked_mul(n_paths)
            .and_then(|v| v.checked_mul(n_times))
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "header sizes overflow"))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_le_bytes(next(&mut r)?));
        }
        let times = (0..n_times).map(|k| k as f64 * dt).collect();
        Ok(Ensemble { n, n_paths, dt, seed, times, data })
    }
}

struct Compiled {
    drift: Vec<Option<CompiledExpr>>,
    sigma: Vec<Vec<Option<CompiledExpr>>>,
}

fn compile(ito: &ItoSystem) -> Result<Compiled, McError> {
    let mut slots = ito.vars.clone();
    slots.push(ito.time.clone());
    let one = |e: &Expr| -> Result<Option<CompiledExpr>, McError> {
        if e.is_zero() {
            Ok(None)
        } else {
            Ok(Some(CompiledExpr::new(e, &slots)?))
        }
    };
    let drift = ito.drift.iter().map(one).collect::<Result<_, _>>()?;
    let sigma = ito
        .sigma
        .iter()
        .map(|row| row.iter().map(one).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    Ok(Compiled { drift, sigma })
}

/// Euler–Maruyama with independent `N(0, dt)` increments per noise
/// channel. Path `p` draws its increments from the ChaCha8 stream `p` of
/// key `seed`, so results do not depend on scheduling.
pub fn euler_maruyama(ito: &ItoSystem, x0: &[f64], cfg: &SimConfig) -> Result<Ensemble, McError> {
    let n = ito.n();
    let m = ito.m();
    if x0.len() != n {
        return Err(McError::Config(format!("initial point has {} entries for {} variables", x0.len(), n)));
    }
    // written to reject NaN as well
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    let bad_range = !(cfg.dt > 0.0) || !(cfg.t1 > cfg.t0);
    if bad_range || cfg.n_paths == 0 || cfg.slices == 0 {
        return Err(McError::Config("need dt > 0, t1 > t0, n_paths > 0 and slices > 0".into()));
    }
    let n_steps = ((cfg.t1 - cfg.t0) / cfg.dt).round().max(1.0) as usize;
    if n_steps < cfg.slices {
        return Err(McError::Config("fewer steps than recorded slices".into()));
    }
    let dt = (cfg.t1 - cfg.t0) / n_steps as f64;
    let record: Vec<usize> = (0..=cfg.slices).map(|k| k * n_steps / cfg.slices).collect();
    let times: Vec<f64> = record.iter().map(|&s| cfg.t0 + s as f64 * dt).collect();
    let c = compile(ito)?;
    let sqrt_dt = dt.sqrt();
    let width = times.len() * n;

    let paths: Vec<Vec<f64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| -> Result<Vec<f64>, McError> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(path as u64);
            let mut out = Vec::with_capacity(width);
            let mut state: Vec<f64> = x0.iter().copied().chain([cfg.t0]).collect();
            let mut next = vec![0.0; n];
            let mut dw = vec![0.0; m];
            let mut slot = 0;
            for step in 0..=n_steps {
                if record[slot] == step {
                    out.extend_from_slice(&state[..n]);
                    slot += 1;
                    if slot == record.len() {
                        break;
                    }
                }
                for w in dw.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *w = z * sqrt_dt;
                }
                for i in 0..n {
                    let mut v = state[i];
                    if let Some(f) = &c.drift[i] {
                        v += f.eval(&state) * dt;
                    }
                    for (k, s) in c.sigma[i].iter().enumerate() {
                        if let Some(s) = s {
                            v += s.eval(&state) * dw[k];
                        }
                    }
                    if !v.is_finite() {
                        return Err(McError::BlowUp { path, step, time: state[n] });
                    }
                    next[i] = v;
                }
                state[..n].copy_from_slice(&next);
                state[n] = cfg.t0 + (step + 1) as f64 * dt;
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    Ok(Ensemble { n, n_paths: cfg.n_paths, dt, seed: cfg.seed, times, data: paths.concat() })
}

#[derive(Clone, Copy, Debug)]
struct Moments {
    mean: f64,
    var: f64,
    /// Standard error of the mean.
    se_mean: f64,
    /// Standard error of the variance, from the fourth central moment.
    se_var: f64,
}

impl Moments {
    fn of(xs: &[f64]) -> Moments {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let (mut m2, mut m4) = (0.0, 0.0);
        for x in xs {
            let d = (x - mean) * (x - mean);
            m2 += d;
            m4 += d * d;
        }
        let var = if xs.len() > 1 { m2 / (n - 1.0) } else { 0.0 };
        let m2n = m2 / n;
        let m4n = m4 / n;
        Moments { mean, var, se_mean: (var / n).sqrt(), se_var: ((m4n - m2n * m2n).max(0.0) / n).sqrt() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CompareOptions {
    pub significance: f64,
    /// Apply the Kolmogorov–Smirnov test; off for first-order maps.
    pub ks: bool,
    /// Size of a first-order map, widening moment tolerances by `5 ε²`.
    pub epsilon: Option<f64>,
}

impl CompareOptions {
    pub fn exact(significance: f64) -> Self {
        CompareOptions { significance, ks: true, epsilon: None }
    }

    pub fn first_order(significance: f64, epsilon: f64) -> Self {
        CompareOptions { significance, ks: false, epsilon: Some(epsilon) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SliceComparison {
    /// Time elapsed since the start of the ensembles.
    pub elapsed: f64,
    pub coord: usize,
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
    pub mean_diff: f64,
    pub var_diff: f64,
    pub mean_tolerance: f64,
    pub var_tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub options: CompareOptions,
    /// Per-test level after the Bonferroni correction.
    pub threshold: f64,
    /// Multiple of the standard error allowed for moment differences.
    pub z_critical: f64,
    pub slices: Vec<SliceComparison>,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn min_p_value(&self) -> Option<f64> {
        self.slices.iter().filter_map(|s| s.ks_p_value).min_by(f64::total_cmp)
    }
}

/// Compares one-time marginals slice by slice and coordinate by
/// coordinate; slices are matched by elapsed time.
pub fn compare_with(a: &Ensemble, b: &Ensemble, opts: CompareOptions) -> Result<ComparisonReport, McError> {
    if a.n != b.n || a.times.len() != b.times.len() {
        return Err(McError::Shape(format!(
            "{}x{} vs {}x{} (coordinates x times)",
            a.n,
            a.times.len(),
            b.n,
            b.times.len()
        )));
    }
    let elapsed = |e: &Ensemble, k: usize| e.times[k] - e.times[0];
    for k in 0..a.times.len() {
        if (elapsed(a, k) - elapsed(b, k)).abs() > 1e-9 * (1.0 + elapsed(a, k).abs()) {
            return Err(McError::Shape(format!("slice {k} is at different elapsed times")));
        }
    }
    if !(opts.significance > 0.0 && opts.significance < 1.0) {
        return Err(McError::Config("significance must lie in (0, 1)".into()));
    }
    let per_slice = if opts.ks { 3 } else { 2 };
    let n_tests = a.times.len() * a.n * per_slice;
    let threshold = opts.significance / n_tests as f64;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z_critical = normal.inverse_cdf(1.0 - threshold / 2.0).max(3.0);

    let mut slices = Vec::new();
    for k in 0..a.times.len() {
        for coord in 0..a.n {
            let xa = a.marginal(k, coord);
            let xb = b.marginal(k, coord);
            let (ma, mb) = (Moments::of(&xa), Moments::of(&xb));
            let (ks_statistic, ks_p) = if opts.ks {
                let d = ks_statistic(&xa, &xb);
                (Some(d), Some(ks_p_value(d, xa.len(), xb.len())))
            } else {
                (None, None)
            };
            let slack = opts.epsilon.map_or(0.0, |e| 5.0 * e * e * (1.0 + ma.mean.abs().max(ma.var)));
            let mean_tolerance = (z_critical * ma.se_mean.hypot(mb.se_mean)).max(slack);
            let var_tolerance = (z_critical * ma.se_var.hypot(mb.se_var)).max(slack);
            let mean_diff = ma.mean - mb.mean;
            let var_diff = ma.var - mb.var;
            // identical degenerate marginals (e.g. the initial point) pass exactly
            let within = |d: f64, tol: f64| d.abs() <= tol || d.abs() <= 1e-12 * (1.0 + ma.mean.abs());
            let pass = within(mean_diff, mean_tolerance)
                && within(var_diff, var_tolerance)
                && ks_p.is_none_or(|p| p >= threshold);
            slices.push(SliceComparison {
                elapsed: elapsed(a, k),
                coord,
                ks_statistic,
                ks_p_value: ks_p,
                mean_diff,
                var_diff,
                mean_tolerance,
                var_tolerance,
                pass,
            });
        }
    }
    let pass = slices.iter().all(|s| s.pass);
    Ok(ComparisonReport { options: opts, threshold, z_critical, slices, pass })
}

/// Kolmogorov–Smirnov and moment comparison at `significance`.
pub fn compare_ensembles(a: &Ensemble, b: &Ensemble, significance: f64) -> Result<ComparisonReport, McError> {
    compare_with(a, b, CompareOptions::exact(significance))
}

/// Transformation whose effect on an ensemble is checked.
#[derive(Clone, Debug)]
pub enum McCandidate {
    /// `x -> x + ε ξ(x,t)`, `t -> t + ε c` for a constant `τ = c`.
    Field { field: VectorField, epsilon: f64 },
    /// `x -> φ(x,t)`; the inverse must be supplied.
    Discrete(DiscreteMap),
}

fn constant(v: f64) -> Result<Expr, McError> {
    Rational::from_float(v)
        .map(Expr::constant)
        .ok_or_else(|| McError::Config(format!("{v} is not finite")))
}

/// The pushed-forward ensemble of `ito` under `candidate`, against an
/// independent simulation of the transformed equation started from the
/// transformed initial point. For a symmetry the transformed equation is
/// `ito` itself.
pub fn validate_symmetry_mc(
    ito: &ItoSystem,
    candidate: &McCandidate,
    x0: &[f64],
    cfg: &SimConfig,
    significance: f64,
) -> Result<ComparisonReport, McError> {
    let mut slots = ito.vars.clone();
    slots.push(ito.time.clone());
    let (map, shift, transformed, opts): (Vec<Expr>, f64, ItoSystem, CompareOptions) = match candidate {
        McCandidate::Field { field, epsilon } => {
            if field.tau.depends_on(&ito.time) || field.tau.as_rational().is_none() {
                return Err(McError::Unsupported("only constant tau can be applied to sampled paths".into()));
            }
            let c = field.tau.eval(&Default::default())?;
            let eps = constant(*epsilon)?;
            let (df, ds) = transform_ito_first_order(ito, &field.xi)?;
            let tau = &field.tau;
            let mut t = ito.clone();
            for i in 0..ito.n() {
                let d = &df[i] - &(tau * &ito.drift[i].diff(&ito.time));
                t.drift[i] = &ito.drift[i] + &(&eps * &d);
                for k in 0..ito.m() {
                    let d = &ds[i][k] - &(tau * &ito.sigma[i][k].diff(&ito.time));
                    t.sigma[i][k] = &ito.sigma[i][k] + &(&eps * &d);
                }
            }
            let map = ito.vars.iter().zip(&field.xi).map(|(v, xi)| &Expr::sym(v) + &(&eps * xi)).collect();
            (map, epsilon * c, t, CompareOptions::first_order(significance, *epsilon))
        }
        McCandidate::Discrete(d) => {
            let t = apply_discrete(ito, d, true)?;
            (d.phi.clone(), 0.0, t, CompareOptions::exact(significance))
        }
    };
    let compiled: Vec<CompiledExpr> = map.iter().map(|e| CompiledExpr::new(e, &slots)).collect::<Result<_, _>>()?;
    let push = |x: &[f64], t: f64| -> Vec<f64> {
        let state: Vec<f64> = x.iter().copied().chain([t]).collect();
        compiled.iter().map(|c| c.eval(&state)).collect()
    };

    let original = euler_maruyama(ito, x0, cfg)?;
    let mut pushed = original.clone();
    let n = ito.n();
    let nt = original.times.len();
    for p in 0..original.n_paths {
        for k in 0..nt {
            let base = (p * nt + k) * n;
            let y = push(&original.data[base..base + n], original.times[k]);
            pushed.data[base..base + n].copy_from_slice(&y);
        }
    }
    for t in pushed.times.iter_mut() {
        *t += shift;
    }
    let y0 = push(x0, cfg.t0);
    let fresh_cfg = SimConfig { t0: cfg.t0 + shift, t1: cfg.t1 + shift, seed: cfg.seed ^ FRESH_SEED, ..*cfg };
    let fresh = euler_maruyama(&transformed, &y0, &fresh_cfg)?;
    compare_with(&pushed, &fresh, opts)
}

/// Mixed into a seed to obtain an independent ensemble.
pub const FRESH_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Marginals of the ensembles started at `t0` and at `t0 + shift` from
/// the same point, compared at equal elapsed times.
pub fn compare_time_shift(
    ito: &ItoSystem,
    x0: &[f64],
    shift: f64,
    cfg: &SimConfig,
    significance: f64,
) -> Result<ComparisonReport, McError> {
    let a = euler_maruyama(ito, x0, cfg)?;
    let shifted = SimConfig { t0: cfg.t0 + shift, t1: cfg.t1 + shift, seed: cfg.seed ^ FRESH_SEED, ..*cfg };
    let b = euler_maruyama(ito, x0, &shifted)?;
    compare_ensembles(&a, &b, significance)
}

/// Substitutes numeric parameter values given as `name = value` pairs.
pub fn with_numeric_params(ito: &ItoSystem, values: &[(Symbol, f64)]) -> Result<ItoSystem, McError> {
    let map = values.iter().map(|(s, v)| Ok((s.clone(), constant(*v)?))).collect::<Result<_, McError>>()?;
    Ok(ito.with_param_values(&map))
}
