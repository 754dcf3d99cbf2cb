//! Ground truth for small problems: the exact posterior over all `2^p`
//! models, the orthogonal-design closed forms, and the L0 objective whose
//! minimizer is the posterior mode.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::indicator::ModelIndicator;
use crate::linalg::{column_space, residual_norm_sq, sym_eigenvalues};
use crate::priors::PriorSpec;
use crate::score::ScoreContext;

/// Largest `p` the enumeration accepts (about 10⁶ models).
pub const ENUMERATION_CAP: usize = 20;

/// Relative eigenvalue tolerance for numerical rank.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Exact `P(Z = k | Y, σ²)` for every model, indexed by the model's bit mask
/// (bit `i` = covariate `i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPosterior {
    p: usize,
    log_probs: Vec<f64>,
    marginals: Vec<f64>,
    normalized: bool,
}

impl ExactPosterior {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, k: &ModelIndicator) -> f64 {
        self.log_probs[k.to_mask() as usize]
    }

    pub fn prob(&self, k: &ModelIndicator) -> f64 {
        self.log_prob(k).exp()
    }

    /// `(model, log probability)` in mask order.
    pub fn entries(&self) -> impl Iterator<Item = (ModelIndicator, f64)> + '_ {
        self.log_probs
            .iter()
            .enumerate()
            .map(|(m, &lp)| (ModelIndicator::from_mask(self.p, m as u64), lp))
    }

    /// Exact `P(Z_i = 1 | Y, σ²)`.
    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    /// The posterior mode; ties go to the smallest mask.
    pub fn map_model(&self) -> ModelIndicator {
        let mut best = 0;
        for (m, &lp) in self.log_probs.iter().enumerate() {
            if lp > self.log_probs[best] {
                best = m;
            }
        }
        ModelIndicator::from_mask(self.p, best as u64)
    }

    /// `Σ_{k ≠ t} P(k)/P(t)`, i.e. `(1 − P(t))/P(t)`, summed directly.
    pub fn ratio_sum(&self, t: &ModelIndicator) -> f64 {
        let lt = self.log_prob(t);
        let tm = t.to_mask() as usize;
        self.log_probs
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != tm)
            .map(|(_, &lp)| (lp - lt).exp())
            .sum()
    }

    /// The `n` most probable models, most probable first.
    pub fn top(&self, n: usize) -> Vec<(ModelIndicator, f64)> {
        let mut idx: Vec<usize> = (0..self.log_probs.len()).collect();
        idx.sort_by(|&a, &b| self.log_probs[b].total_cmp(&self.log_probs[a]).then(a.cmp(&b)));
        idx.into_iter()
            .take(n)
            .map(|m| (ModelIndicator::from_mask(self.p, m as u64), self.log_probs[m].exp()))
            .collect()
    }
}

/// Scores all `2^p` models and normalizes by log-sum-exp.
pub fn enumerate_posterior(data: &Dataset, priors: &PriorSpec, sigma_sq: f64) -> Result<ExactPosterior> {
    let p = data.p();
    if p > ENUMERATION_CAP {
        return Err(Error::Capability(format!(
            "exact enumeration supports p <= {ENUMERATION_CAP}, got p = {p}"
        )));
    }
    let ctx = ScoreContext::new(data);
    let scores = (0..1u64 << p)
        .into_par_iter()
        .map(|m| Ok(ctx.score(&ModelIndicator::from_mask(p, m), priors, sigma_sq)?.log_score))
        .collect::<Result<Vec<f64>>>()?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    let log_probs: Vec<f64> = scores.iter().map(|s| s - log_norm).collect();
    let mut marginals = vec![0.0; p];
    for (m, lp) in log_probs.iter().enumerate() {
        let w = lp.exp();
        for (i, mi) in marginals.iter_mut().enumerate() {
            if (m >> i) & 1 == 1 {
                *mi += w;
            }
        }
    }
    Ok(ExactPosterior {
        p,
        log_probs,
        marginals,
        normalized: true,
    })
}

/// Standard deviation of `β̂_i = X_i'Y/n` under the spike (`j = 0`) and slab
/// (`j = 1`): `a_j = √(σ²/n + σ²τ_j²)`, since `β_i ~ N(0, σ²τ_j²)`.
fn orthogonal_scales(n: usize, sigma_sq: f64, priors: &PriorSpec) -> (f64, f64) {
    let base = 1.0 / n as f64;
    (
        (sigma_sq * (base + priors.tau0_sq())).sqrt(),
        (sigma_sq * (base + priors.tau1_sq())).sqrt(),
    )
}

/// Selection threshold on `β̂_i²` for an orthogonal design (`X'X = nI`):
///
/// `φ = 2 (log((1 − q) a₁) − log(q a₀)) / (a₀⁻² − a₁⁻²)`.
pub fn phi_threshold(n: usize, sigma_sq: f64, priors: &PriorSpec) -> Result<f64> {
    if !(priors.tau1_sq() > priors.tau0_sq()) {
        return Err(Error::Parameter("phi threshold needs tau1_sq > tau0_sq".into()));
    }
    let (a0, a1) = orthogonal_scales(n, sigma_sq, priors);
    let q = priors.q();
    Ok(2.0 * (((1.0 - q) * a1).ln() - (q * a0).ln()) / (a0.powi(-2) - a1.powi(-2)))
}

/// `P(Z_i = 1 | σ², Y)` for an orthogonal design, from the OLS estimate
/// `β̂_i = X_i'Y/n`.
///
/// The log odds `log s + log(a₀/a₁) + β̂²(a₀⁻² − a₁⁻²)/2` are evaluated as
/// `(a₀⁻² − a₁⁻²)(β̂² − φ)/2`, so the probability exceeds one half exactly
/// when `β̂² > φ`.
pub fn orthogonal_marginal(beta_hat: f64, n: usize, sigma_sq: f64, priors: &PriorSpec) -> Result<f64> {
    marginal_from_square(beta_hat * beta_hat, n, sigma_sq, priors)
}

fn marginal_from_square(beta_hat_sq: f64, n: usize, sigma_sq: f64, priors: &PriorSpec) -> Result<f64> {
    if n < 1 {
        return Err(Error::Parameter("need n >= 1".into()));
    }
    let (a0, a1) = orthogonal_scales(n, sigma_sq, priors);
    let phi = phi_threshold(n, sigma_sq, priors)?;
    let log_odds = 0.5 * (a0.powi(-2) - a1.powi(-2)) * (beta_hat_sq - phi);
    // Below ~1e-16 the logistic rounds to exactly 0.5; keep the side of
    // one half that the sign of the log odds dictates.
    Ok(if log_odds > 0.0 {
        (1.0 / (1.0 + (-log_odds).exp())).max(0.5f64.next_up())
    } else if log_odds < 0.0 {
        let e = log_odds.exp();
        (e / (1.0 + e)).min(0.5f64.next_down())
    } else {
        0.5
    })
}

/// `B(k) = R̃_k + 2σ²(−(|k| − |t|) log s − log(Q_k/Q_t))` and friends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L0Objective {
    pub value: f64,
    /// Per-covariate penalty `ψ_{n,k}`; `None` when `|k| = |t|`.
    pub psi: Option<f64>,
    pub shrunk_rss: f64,
    /// Least-squares residual sum of squares of model `k`.
    pub ols_rss: f64,
}

impl L0Objective {
    /// How far `R̃_k` sits from the least-squares RSS it approximates.
    pub fn rss_gap(&self) -> f64 {
        self.shrunk_rss - self.ols_rss
    }
}

pub fn l0_objective(
    data: &Dataset,
    k: &ModelIndicator,
    t_ref: &ModelIndicator,
    priors: &PriorSpec,
    sigma_sq: f64,
) -> Result<L0Objective> {
    l0_objective_with(&ScoreContext::new(data), k, t_ref, priors, sigma_sq)
}

pub fn l0_objective_with(
    ctx: &ScoreContext<'_>,
    k: &ModelIndicator,
    t_ref: &ModelIndicator,
    priors: &PriorSpec,
    sigma_sq: f64,
) -> Result<L0Objective> {
    if !(sigma_sq > 0.0) {
        return Err(Error::Parameter(format!("need sigma_sq > 0, got {sigma_sq}")));
    }
    let (lq_k, rss_k) = ctx.components(k, priors)?;
    let (lq_t, _) = ctx.components(t_ref, priors)?;
    let dsize = k.size() as f64 - t_ref.size() as f64;
    let log_s = priors.s().ln();
    let value = rss_k + 2.0 * sigma_sq * (-dsize * log_s - (lq_k - lq_t));
    let psi = (dsize != 0.0).then(|| 2.0 * sigma_sq * (-log_s - (lq_k - lq_t) / dsize));
    Ok(L0Objective {
        value,
        psi,
        shrunk_rss: rss_k,
        ols_rss: ols_rss(ctx.data(), k),
    })
}

/// `argmin_k B(k)` over all `2^p` models; ties go to the smallest mask.
pub fn l0_minimizer(data: &Dataset, t_ref: &ModelIndicator, priors: &PriorSpec, sigma_sq: f64) -> Result<ModelIndicator> {
    let p = data.p();
    if p > ENUMERATION_CAP {
        return Err(Error::Capability(format!(
            "exhaustive L0 search supports p <= {ENUMERATION_CAP}, got p = {p}"
        )));
    }
    let ctx = ScoreContext::new(data);
    let values = (0..1u64 << p)
        .into_par_iter()
        .map(|m| Ok(l0_objective_with(&ctx, &ModelIndicator::from_mask(p, m), t_ref, priors, sigma_sq)?.value))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (m, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = m;
        }
    }
    Ok(ModelIndicator::from_mask(p, best as u64))
}

/// `‖(I − P_k) Y‖²`.
pub fn ols_rss(data: &Dataset, k: &ModelIndicator) -> f64 {
    let xk = data.x().select_columns(k.ones().collect::<Vec<_>>().iter());
    let (basis, _) = column_space(&xk, RANK_REL_TOL.sqrt());
    residual_norm_sq(&basis, data.y())
}

/// Largest eigenvalue of `X'X`.
pub fn gram_lambda_max(data: &Dataset) -> f64 {
    let x = data.x();
    let g = if data.p() <= data.n() { x.tr_mul(x) } else { x * x.transpose() };
    sym_eigenvalues(&g).last().copied().unwrap_or(0.0)
}

/// Numerical rank of `X_k`: eigenvalues of `X_k'X_k` above `1e-10 · λ_max(X'X)`.
pub fn model_rank(data: &Dataset, k: &ModelIndicator, lambda_max: f64) -> usize {
    if k.size() == 0 {
        return 0;
    }
    let xk = data.x().select_columns(k.ones().collect::<Vec<_>>().iter());
    let g = xk.tr_mul(&xk);
    sym_eigenvalues(&g)
        .into_iter()
        .filter(|&e| e > RANK_REL_TOL * lambda_max)
        .count()
}

/// The four classes of non-true models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelClass {
    True,
    /// Rank above `m_n`.
    UnrealisticallyLarge,
    /// Strict supersets of `t` with rank at most `m_n`.
    OverFitted,
    /// Miss a true covariate, rank in `(K|t|, m_n]`.
    Large,
    /// Miss a true covariate, rank at most `K|t|`.
    UnderFitted,
}

/// Labels every model (in mask order). Rank above `m_n` wins over the other
/// labels when `K|t| > m_n`.
pub fn partition_model_space(
    p: usize,
    t: &ModelIndicator,
    m_n: usize,
    k_bound: usize,
    ranks: impl Fn(&ModelIndicator) -> usize,
) -> Result<Vec<ModelClass>> {
    if p > ENUMERATION_CAP {
        return Err(Error::Capability(format!(
            "partition supports p <= {ENUMERATION_CAP}, got p = {p}"
        )));
    }
    let large_cut = k_bound * t.size();
    Ok((0..1u64 << p)
        .map(|m| {
            let k = ModelIndicator::from_mask(p, m);
            if &k == t {
                return ModelClass::True;
            }
            let r = ranks(&k);
            if r > m_n {
                ModelClass::UnrealisticallyLarge
            } else if k.contains(t) {
                ModelClass::OverFitted
            } else if r > large_cut {
                ModelClass::Large
            } else {
                ModelClass::UnderFitted
            }
        })
        .collect())
}

/// `Σ_{k ∈ class} PR(k, t)` for each class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassRatioSums {
    pub unrealistically_large: f64,
    pub over_fitted: f64,
    pub large: f64,
    pub under_fitted: f64,
}

pub fn class_ratio_sums(posterior: &ExactPosterior, t: &ModelIndicator, classes: &[ModelClass]) -> ClassRatioSums {
    let lt = posterior.log_prob(t);
    let mut sums = ClassRatioSums::default();
    for (lp, class) in posterior.log_probs().iter().zip(classes) {
        let r = (lp - lt).exp();
        match class {
            ModelClass::True => {}
            ModelClass::UnrealisticallyLarge => sums.unrealistically_large += r,
            ModelClass::OverFitted => sums.over_fitted += r,
            ModelClass::Large => sums.large += r,
            ModelClass::UnderFitted => sums.under_fitted += r,
        }
    }
    sums
}

/// OLS estimates `X_i'Y/n` for an orthogonal design.
pub fn orthogonal_ols(data: &Dataset) -> DVector<f64> {
    data.x().tr_mul(data.y()) / data.n() as f64
}
