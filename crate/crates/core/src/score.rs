//! Closed-form marginal posterior of a model indicator given `σ²`.
//!
//! Integrating `β` out of the hierarchy gives, up to a constant,
//!
//! ```text
//! P(Z = k | Y, σ²) ∝ Q_k s^{|k|} exp(−R̃_k / (2σ²))
//! Q_k  = |D_k + X'X|^{-1/2} |D_k|^{1/2} = |I + X D_k⁻¹ X'|^{-1/2}
//! R̃_k = Y'(I − X (D_k + X'X)⁻¹ X') Y  = Y'(I + X D_k⁻¹ X')⁻¹ Y
//! ```
//!
//! with `D_k = Diag(k/τ₁² + (1 − k)/τ₀²)`. Both quantities are available in a
//! `p × p` (primal) and an `n × n` (dual) form; [`ScoreContext`] evaluates
//! whichever system is smaller, always through a Cholesky factor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::indicator::ModelIndicator;
use crate::linalg::{chol_log_det, cholesky, forward_solve};
use crate::priors::PriorSpec;

/// Which linear system the score is computed through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// `p × p` system `D_k + X'X`.
    Primal,
    /// `n × n` system `I + X D_k⁻¹ X'`.
    Dual,
}

impl Formulation {
    /// The cheaper of the two: primal when `p ≤ n`.
    pub fn cheapest(n: usize, p: usize) -> Self {
        if p <= n {
            Formulation::Primal
        } else {
            Formulation::Dual
        }
    }
}

/// The pieces of the log marginal posterior of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorScore {
    pub log_q: f64,
    pub shrunk_rss: f64,
    pub size: usize,
    /// Unnormalized `log P(Z = k | Y, σ²)`.
    pub log_score: f64,
}

impl PosteriorScore {
    pub fn from_parts(log_q: f64, shrunk_rss: f64, size: usize, s: f64, sigma_sq: f64) -> Self {
        let log_score = log_q + size as f64 * s.ln() - shrunk_rss / (2.0 * sigma_sq);
        Self {
            log_q,
            shrunk_rss,
            size,
            log_score,
        }
    }
}

/// `P(Z = k | Y, σ²) / P(Z = t | Y, σ²)`, kept in both forms since the ratio
/// itself can overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorRatio {
    pub log_ratio: f64,
    pub ratio: f64,
}

/// Diagonal of the prior precision `D_k` (per unit `σ²`).
pub fn precision_diag(k: &ModelIndicator, priors: &PriorSpec) -> DVector<f64> {
    DVector::from_iterator(k.p(), k.bits().iter().map(|&b| 1.0 / priors.tau_sq(b)))
}

/// `R̃_k`, the residual sum of squares of the `D_k`-shrunk fit.
pub fn shrunk_rss(data: &Dataset, k: &ModelIndicator, priors: &PriorSpec) -> Result<f64> {
    Ok(ScoreContext::new(data).components(k, priors)?.1)
}

/// `log Q_k` through the cheaper formulation.
pub fn log_qk(data: &Dataset, k: &ModelIndicator, priors: &PriorSpec) -> Result<f64> {
    Ok(ScoreContext::new(data).components(k, priors)?.0)
}

/// `log Q_k = ½ log|D_k| − ½ log|D_k + X'X|`.
pub fn log_qk_primal(data: &Dataset, k: &ModelIndicator, priors: &PriorSpec) -> Result<f64> {
    Ok(ScoreContext::with_formulation(data, Formulation::Primal)
        .components(k, priors)?
        .0)
}

/// `log Q_k = −½ log|I + X D_k⁻¹ X'|`.
pub fn log_qk_dual(data: &Dataset, k: &ModelIndicator, priors: &PriorSpec) -> Result<f64> {
    Ok(ScoreContext::with_formulation(data, Formulation::Dual)
        .components(k, priors)?
        .0)
}

pub fn log_posterior_score(
    data: &Dataset,
    k: &ModelIndicator,
    priors: &PriorSpec,
    sigma_sq: f64,
) -> Result<PosteriorScore> {
    ScoreContext::new(data).score(k, priors, sigma_sq)
}

pub fn posterior_ratio(
    data: &Dataset,
    k: &ModelIndicator,
    t: &ModelIndicator,
    priors: &PriorSpec,
    sigma_sq: f64,
) -> Result<PosteriorRatio> {
    if k == t {
        check_sigma_sq(sigma_sq)?;
        check_len(data, k)?;
        return Ok(PosteriorRatio {
            log_ratio: 0.0,
            ratio: 1.0,
        });
    }
    let ctx = ScoreContext::new(data);
    let sk = ctx.score(k, priors, sigma_sq)?;
    let st = ctx.score(t, priors, sigma_sq)?;
    let log_ratio = sk.log_score - st.log_score;
    Ok(PosteriorRatio {
        log_ratio,
        ratio: log_ratio.exp(),
    })
}

/// Cross-products of one dataset, computed once and reused for many models.
#[derive(Debug, Clone)]
pub struct ScoreContext<'a> {
    data: &'a Dataset,
    formulation: Formulation,
    /// `X'X` (primal) or `XX'` (dual).
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl<'a> ScoreContext<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        Self::with_formulation(data, Formulation::cheapest(data.n(), data.p()))
    }

    pub fn with_formulation(data: &'a Dataset, formulation: Formulation) -> Self {
        let x = data.x();
        let gram = match formulation {
            Formulation::Primal => x.tr_mul(x),
            Formulation::Dual => x * x.transpose(),
        };
        Self {
            data,
            formulation,
            gram,
            xty: x.tr_mul(data.y()),
            yty: data.y().norm_squared(),
        }
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    /// `(log Q_k, R̃_k)`.
    pub fn components(&self, k: &ModelIndicator, priors: &PriorSpec) -> Result<(f64, f64)> {
        check_len(self.data, k)?;
        match self.formulation {
            Formulation::Primal => {
                let d = precision_diag(k, priors);
                let mut a = self.gram.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += d[i];
                }
                let chol = cholesky(a, "D_k + X'X")?;
                let log_q = 0.5 * d.iter().map(|v| v.ln()).sum::<f64>() - 0.5 * chol_log_det(&chol);
                let mut w = self.xty.clone();
                forward_solve(&chol, &mut w);
                let rss = (self.yty - w.norm_squared()).clamp(0.0, self.yty);
                Ok((log_q, rss))
            }
            Formulation::Dual => {
                let m = dual_system(self.data.x(), &self.gram, k, priors);
                let chol = cholesky(m, "I + X D_k^-1 X'")?;
                let log_q = -0.5 * chol_log_det(&chol);
                let mut w = self.data.y().clone();
                forward_solve(&chol, &mut w);
                Ok((log_q, w.norm_squared().min(self.yty)))
            }
        }
    }

    pub fn score(&self, k: &ModelIndicator, priors: &PriorSpec, sigma_sq: f64) -> Result<PosteriorScore> {
        check_sigma_sq(sigma_sq)?;
        let (log_q, rss) = self.components(k, priors)?;
        Ok(PosteriorScore::from_parts(log_q, rss, k.size(), priors.s(), sigma_sq))
    }
}

/// `I + X D_k⁻¹ X' = I + τ₀² XX' + (τ₁² − τ₀²) X_k X_k'`, given `XX'`.
pub(crate) fn dual_system(
    x: &DMatrix<f64>,
    xxt: &DMatrix<f64>,
    k: &ModelIndicator,
    priors: &PriorSpec,
) -> DMatrix<f64> {
    let n = x.nrows();
    let mut m = xxt * priors.tau0_sq();
    let extra = priors.tau1_sq() - priors.tau0_sq();
    if extra != 0.0 {
        for j in k.ones() {
            let col = x.column(j);
            m.ger(extra, &col, &col, 1.0);
        }
    }
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    m
}

fn check_sigma_sq(sigma_sq: f64) -> Result<()> {
    if sigma_sq > 0.0 && sigma_sq.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("need sigma_sq > 0, got {sigma_sq}")))
    }
}

fn check_len(data: &Dataset, k: &ModelIndicator) -> Result<()> {
    if k.p() == data.p() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "indicator has length {} but data has {} covariates",
            k.p(),
            data.p()
        )))
    }
}
