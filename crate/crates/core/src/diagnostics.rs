//! Finite-sample checks of the regularity conditions behind selection
//! consistency. Rates are read as inequalities with constant 1; the raw
//! quantities are reported so they can be rescaled.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::indicator::ModelIndicator;
use crate::linalg::{column_space, residual_norm_sq, sym_eigenvalues};
use crate::oracle::RANK_REL_TOL;
use crate::priors::PriorSpec;

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_NU: f64 = 0.02;
pub const DEFAULT_KAPPA: f64 = 0.1;
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// The data-generating model: active set, full coefficient vector and noise
/// variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub t: ModelIndicator,
    pub beta: Vec<f64>,
    pub sigma_sq: f64,
}

impl Truth {
    pub fn new(t: ModelIndicator, beta: Vec<f64>, sigma_sq: f64) -> Result<Self> {
        if t.p() != beta.len() {
            return Err(Error::Dimension(format!("truth has p = {} but {} coefficients", t.p(), beta.len())));
        }
        if !(sigma_sq > 0.0) {
            return Err(Error::Parameter(format!("need sigma_sq > 0, got {sigma_sq}")));
        }
        Ok(Truth { t, beta, sigma_sq })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticParams {
    pub delta: f64,
    pub nu: f64,
    pub kappa: f64,
    pub k: usize,
    pub budget: u64,
}

impl DiagnosticParams {
    pub fn new(k: usize) -> Self {
        DiagnosticParams {
            delta: DEFAULT_DELTA,
            nu: DEFAULT_NU,
            kappa: DEFAULT_KAPPA,
            k,
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionFlags {
    /// `log p / n < 1`.
    pub dimension: bool,
    /// `n τ₀² < 1`, `n τ₁² ≥ n ∨ p^{2+3δ}`, `q ≥ 1/p`.
    pub prior: bool,
    /// `K > 1 + 8/δ` and `Δ_n(K) > γ_n`; `None` without a truth.
    pub identifiability: Option<bool>,
    /// `ν < δ`, `κ < (K − 1)δ/2`, `λ_M < (nτ₀²)⁻¹ ∧ nτ₁²` and
    /// `λ_m ≥ (n ∨ p^{2+2δ})/(nτ₁²) ∨ p^{−κ}`; `None` when `λ_m` was not computed.
    pub design: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub params: DiagnosticParams,
    pub log_p_over_n: f64,
    /// Largest eigenvalue of `X'X/n`.
    pub lambda_max: f64,
    /// Smallest nonzero eigenvalue of `X_k'X_k/n` over `|k| ≤ m_n`.
    pub lambda_min_nu: Option<f64>,
    pub m_n: usize,
    pub delta_n: Option<f64>,
    pub gamma_n: Option<f64>,
    /// `‖X_{t^c} β_{t^c}‖`.
    pub b0: Option<f64>,
    pub flags: ConditionFlags,
    /// Which combinatorial quantities were skipped for exceeding the budget.
    pub skipped: Vec<String>,
}

/// `p ∧ n/((2 + ν) log p)`, at least 1.
pub fn dimension_cutoff(n: usize, p: usize, nu: f64) -> usize {
    let lp = (p as f64).ln();
    if lp <= 0.0 {
        return p;
    }
    let bound = (n as f64 / ((2.0 + nu) * lp)).floor() as usize;
    bound.min(p).max(1)
}

/// `Σ_{s ≤ max_size} C(p, s)`, saturating.
fn subset_count(p: usize, max_size: usize) -> u64 {
    let mut total: u64 = 0;
    let mut c: u128 = 1;
    for s in 0..=max_size.min(p) {
        if s > 0 {
            c = c * (p - s + 1) as u128 / s as u128;
        }
        total = total.saturating_add(c.min(u64::MAX as u128) as u64);
    }
    total
}

pub fn condition_diagnostics(
    data: &Dataset,
    priors: &PriorSpec,
    params: DiagnosticParams,
    truth: Option<&Truth>,
) -> Result<ConditionReport> {
    let DiagnosticParams { delta, nu, kappa, k, budget } = params;
    if !(delta > 0.0 && nu > 0.0 && kappa > 0.0) {
        return Err(Error::Parameter("delta, nu and kappa must be positive".into()));
    }
    if k < 1 {
        return Err(Error::Parameter("need K >= 1".into()));
    }
    let (n, p) = (data.n(), data.p());
    if let Some(tr) = truth {
        if tr.t.p() != p {
            return Err(Error::Dimension(format!("truth has p = {}, data has p = {p}", tr.t.p())));
        }
    }
    let (nf, pf) = (n as f64, p as f64);
    let x = data.x();

    let gram = if p <= n { x.tr_mul(x) } else { x * x.transpose() } / nf;
    let lambda_max = sym_eigenvalues(&gram).last().copied().unwrap_or(0.0).max(0.0);
    let m_n = dimension_cutoff(n, p, nu);
    let mut skipped = Vec::new();

    let lambda_min_nu = if subset_count(p, m_n) - 1 <= budget {
        Some(min_nonzero_eigenvalue(x, m_n, lambda_max, nf))
    } else {
        skipped.push(format!("lambda_min_nu: more than {budget} submatrices"));
        None
    };

    let (mut delta_n, mut gamma_n, mut b0) = (None, None, None);
    if let Some(tr) = truth {
        let ts = tr.t.size();
        gamma_n = Some(5.0 * tr.sigma_sq * ts as f64 * (1.0 + delta) * nf.sqrt().max(pf).ln());
        let inactive = DVector::from_fn(p, |i, _| if tr.t.get(i) { 0.0 } else { tr.beta[i] });
        b0 = Some((x * inactive).norm());
        let max_size = (k * ts).saturating_sub(1);
        if subset_count(p, max_size) <= budget {
            delta_n = Some(identifiability_gap(x, tr, max_size));
        } else {
            skipped.push(format!("delta_n: more than {budget} candidate models"));
        }
    }

    let n_tau0 = nf * priors.tau0_sq();
    let n_tau1 = nf * priors.tau1_sq();
    let prior = n_tau0 < 1.0 && n_tau1 >= nf.max(pf.powf(2.0 + 3.0 * delta)) && priors.q() * pf >= 1.0;
    let identifiability = delta_n
        .zip(gamma_n)
        .map(|(d, g)| (k as f64) > 1.0 + 8.0 / delta && d > g);
    let design = lambda_min_nu.map(|lm| {
        nu < delta
            && kappa < (k as f64 - 1.0) * delta / 2.0
            && lambda_max < (1.0 / n_tau0).min(n_tau1)
            && lm >= (nf.max(pf.powf(2.0 + 2.0 * delta)) / n_tau1).max(pf.powf(-kappa))
    });

    Ok(ConditionReport {
        params,
        log_p_over_n: pf.ln() / nf,
        lambda_max,
        lambda_min_nu,
        m_n,
        delta_n,
        gamma_n,
        b0,
        flags: ConditionFlags {
            dimension: pf.ln() / nf < 1.0,
            prior,
            identifiability,
            design,
        },
        skipped,
    })
}

fn min_nonzero_eigenvalue(x: &DMatrix<f64>, m_n: usize, lambda_max: f64, nf: f64) -> f64 {
    let p = x.ncols();
    let floor = RANK_REL_TOL * lambda_max;
    (1..=m_n)
        .flat_map(|s| (0..p).combinations(s))
        .par_bridge()
        .map(|cols| {
            let xk = x.select_columns(cols.iter());
            sym_eigenvalues(&(xk.tr_mul(&xk) / nf))
                .into_iter()
                .find(|&e| e > floor)
                .unwrap_or(f64::INFINITY)
        })
        .reduce(|| f64::INFINITY, f64::min)
        .min(lambda_max)
}

/// `Δ_n(K)`: smallest `‖(I − P_k) X_t β_t‖²` over models missing an active
/// covariate with `|k| ≤ max_size`.
fn identifiability_gap(x: &DMatrix<f64>, truth: &Truth, max_size: usize) -> f64 {
    let p = x.ncols();
    let signal = x * DVector::from_fn(p, |i, _| if truth.t.get(i) { truth.beta[i] } else { 0.0 });
    (0..=max_size.min(p))
        .flat_map(|s| (0..p).combinations(s))
        .par_bridge()
        .filter(|cols| !truth.t.ones().all(|i| cols.contains(&i)))
        .map(|cols| {
            let (basis, _) = column_space(&x.select_columns(cols.iter()), RANK_REL_TOL.sqrt());
            residual_norm_sq(&basis, &signal)
        })
        .reduce(|| f64::INFINITY, f64::min)
}
