//! Turning marginal inclusion probabilities into a model, and fitting the
//! chosen model for prediction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gibbs::PosteriorSummary;
use crate::indicator::ModelIndicator;

/// Default cutoff for the median probability model.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum Rule {
    Median { threshold: f64 },
    Bic { max_size: usize },
}

/// OLS fit with intercept on a subset of columns. Coefficients are stored for
/// all `p` columns, zero outside the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub rank_deficient: bool,
}

impl Refit {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * DVector::from_column_slice(&self.coefficients) + DVector::from_element(x.nrows(), self.intercept)
    }

    /// Mean squared prediction error on `data`.
    pub fn mspe(&self, data: &Dataset) -> f64 {
        (self.predict(data.x()) - data.y()).norm_squared() / data.n() as f64
    }

    /// The same fit expressed on the raw scale of a standardized dataset.
    pub fn to_raw(&self, data: &Dataset) -> Refit {
        let (coefficients, intercept) = data.to_raw_coefficients(&self.coefficients, self.intercept);
        Refit {
            coefficients,
            intercept,
            rank_deficient: self.rank_deficient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: ModelIndicator,
    pub rule: Rule,
    /// Probability cutoff implied by the rule; for BIC, the smallest marginal
    /// probability among the selected covariates (1 if none).
    pub threshold_used: f64,
    pub refit: Option<Refit>,
}

impl SelectionResult {
    pub fn with_refit(mut self, data: &Dataset) -> Result<Self> {
        self.refit = Some(refit_ols(data, &self.selected)?);
        Ok(self)
    }
}

/// Covariates whose marginal probability strictly exceeds `threshold`.
pub fn median_model(summary: &PosteriorSummary, threshold: f64) -> Result<SelectionResult> {
    median_from_probs(&summary.marginal_probs, threshold)
}

pub fn median_from_probs(probs: &[f64], threshold: f64) -> Result<SelectionResult> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Parameter(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    Ok(SelectionResult {
        selected: ModelIndicator::from_bits(probs.iter().map(|&pr| pr > threshold).collect()),
        rule: Rule::Median { threshold },
        threshold_used: threshold,
        refit: None,
    })
}

/// Column indices ordered by decreasing probability, ties by index.
pub fn rank_by_probability(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order
}

/// BIC along the probability ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicPath {
    pub order: Vec<usize>,
    /// `BIC(m)` for `m = 0..=max_size`; `None` where the top-`m` design is
    /// rank deficient.
    pub bic: Vec<Option<f64>>,
    pub best_size: usize,
}

/// Ranks covariates by marginal probability and picks the prefix size with
/// the smallest `n log(RSS/n) + m log n` (OLS with intercept).
pub fn bic_model(summary: &PosteriorSummary, data: &Dataset, max_size: usize) -> Result<(SelectionResult, BicPath)> {
    bic_from_probs(&summary.marginal_probs, data, max_size)
}

pub fn bic_from_probs(probs: &[f64], data: &Dataset, max_size: usize) -> Result<(SelectionResult, BicPath)> {
    let (n, p) = (data.n(), data.p());
    if probs.len() != p {
        return Err(Error::Dimension(format!("{} probabilities for {p} covariates", probs.len())));
    }
    if n < 3 || max_size > p.min(n - 2) {
        return Err(Error::Parameter(format!("need max_size <= min(p, n - 2), got {max_size} with n={n}, p={p}")));
    }
    let order = rank_by_probability(probs);
    let nf = n as f64;
    let mut basis = Basis::with_intercept(n);
    let mut resid = basis.residual(data.y());
    let mut bic = vec![Some(nf * (resid.norm_squared() / nf).ln())];
    let mut deficient = false;
    for m in 1..=max_size {
        if !deficient {
            let col = data.x().column(order[m - 1]).clone_owned();
            match basis.push(&col) {
                Some(q) => {
                    let c = q.dot(&resid);
                    resid -= q * c;
                }
                None => {
                    log::warn!("top-{m} design is rank deficient; larger sizes skipped");
                    deficient = true;
                }
            }
        }
        bic.push((!deficient).then(|| nf * (resid.norm_squared() / nf).ln() + m as f64 * nf.ln()));
    }
    let mut best_size = 0;
    for (m, b) in bic.iter().enumerate() {
        if let (Some(b), Some(best)) = (b, bic[best_size]) {
            if *b < best {
                best_size = m;
            }
        }
    }
    let selected = ModelIndicator::from_indices(p, &order[..best_size]);
    let threshold_used = order[..best_size].iter().map(|&j| probs[j]).fold(1.0, f64::min);
    Ok((
        SelectionResult {
            selected,
            rule: Rule::Bic { max_size },
            threshold_used,
            refit: None,
        },
        BicPath { order, bic, best_size },
    ))
}

/// Incremental modified Gram-Schmidt with one reorthogonalization pass.
struct Basis {
    vectors: Vec<DVector<f64>>,
}

impl Basis {
    fn with_intercept(n: usize) -> Self {
        Basis {
            vectors: vec![DVector::from_element(n, 1.0 / (n as f64).sqrt())],
        }
    }

    fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &self.vectors {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        r
    }

    /// Adds `v` and returns the new unit vector, or `None` if `v` is
    /// (numerically) in the current span.
    fn push(&mut self, v: &DVector<f64>) -> Option<DVector<f64>> {
        let r = self.residual(v);
        let norm = r.norm();
        if norm <= RANK_TOL.sqrt() * v.norm().max(f64::MIN_POSITIVE) {
            return None;
        }
        let q = r / norm;
        self.vectors.push(q.clone());
        Some(q)
    }
}

/// Least squares with intercept on the columns in `k`, through an SVD
/// pseudo-inverse. Rank deficiency is flagged, not fatal.
pub fn refit_ols(data: &Dataset, k: &ModelIndicator) -> Result<Refit> {
    let (n, p) = (data.n(), data.p());
    if k.p() != p {
        return Err(Error::Dimension(format!("model has p = {}, data has p = {p}", k.p())));
    }
    let y_mean = data.y().mean();
    let cols = k.indices();
    let mut coefficients = vec![0.0; p];
    if cols.is_empty() {
        return Ok(Refit {
            coefficients,
            intercept: y_mean,
            rank_deficient: false,
        });
    }
    let mut xk = data.x().select_columns(cols.iter());
    let means: Vec<f64> = (0..cols.len()).map(|j| xk.column(j).mean()).collect();
    for (j, m) in means.iter().enumerate() {
        xk.column_mut(j).add_scalar_mut(-m);
    }
    let yc = data.y().add_scalar(-y_mean);
    let svd = xk.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let rank_deficient = rank < cols.len() || cols.len() + 1 > n;
    if rank_deficient {
        log::warn!("refit design has rank {rank} for {} columns; using the pseudo-inverse", cols.len());
    }
    let b = svd
        .solve(&yc, eps)
        .map_err(|e| Error::Numerical(format!("least squares: {e}")))?;
    let mut intercept = y_mean;
    for (idx, &j) in cols.iter().enumerate() {
        coefficients[j] = b[idx];
        intercept -= b[idx] * means[idx];
    }
    Ok(Refit {
        coefficients,
        intercept,
        rank_deficient,
    })
}

/// Prediction from the posterior mean of `β` on the data's own scale.
pub fn posterior_mean_predict(summary: &PosteriorSummary, data: &Dataset, x: &DMatrix<f64>) -> DVector<f64> {
    let raw = Refit {
        coefficients: summary.beta_mean.clone(),
        intercept: 0.0,
        rank_deficient: false,
    };
    raw.predict(x).add_scalar(data.y().mean())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    /// Columns kept, forced columns first, then by decreasing `|corr|`.
    pub kept: Vec<usize>,
    /// `|corr(X_j, Y)|` for every column (0 for zero-variance columns).
    pub abs_correlations: Vec<f64>,
    pub forced: Vec<usize>,
}

impl ScreenReport {
    /// Predictors entering the model after screening: the kept columns plus
    /// the intercept.
    pub fn predictor_count(&self) -> usize {
        self.kept.len() + 1
    }
}

pub fn marginal_screen(data: &Dataset, keep: usize) -> Result<ScreenReport> {
    marginal_screen_with(data, keep, &[])
}

/// Keeps the `keep` columns most correlated with `Y` in absolute value, in
/// addition to the `forced` ones.
pub fn marginal_screen_with(data: &Dataset, keep: usize, forced: &[usize]) -> Result<ScreenReport> {
    let p = data.p();
    if let Some(&bad) = forced.iter().find(|&&j| j >= p) {
        return Err(Error::Parameter(format!("forced column {bad} out of range for p = {p}")));
    }
    let available = p - forced.len();
    if keep < 1 || keep > available {
        return Err(Error::Parameter(format!("need 1 <= keep <= {available}, got {keep}")));
    }
    let y = data.y();
    let yc = y.add_scalar(-y.mean());
    let ynorm = yc.norm();
    let abs_correlations: Vec<f64> = (0..p)
        .map(|j| {
            let col = data.x().column(j);
            let xc = col.add_scalar(-col.mean());
            let denom = xc.norm() * ynorm;
            if data.degenerate()[j] || denom == 0.0 {
                0.0
            } else {
                (xc.dot(&yc) / denom).abs()
            }
        })
        .collect();
    let mut kept: Vec<usize> = forced.to_vec();
    let ranked = rank_by_probability(&abs_correlations);
    kept.extend(ranked.into_iter().filter(|j| !forced.contains(j)).take(keep));
    Ok(ScreenReport {
        kept,
        abs_correlations,
        forced: forced.to_vec(),
    })
}

/// Test-set MSPE of the OLS refit on the top-`m` covariates by probability,
/// for `m = 0..=max_size`.
pub fn mspe_by_size(probs: &[f64], train: &Dataset, test: &Dataset, max_size: usize) -> Result<Vec<(usize, f64)>> {
    if train.p() != test.p() || probs.len() != train.p() {
        return Err(Error::Dimension("training, test and probability dimensions differ".into()));
    }
    let order = rank_by_probability(probs);
    (0..=max_size.min(train.p()))
        .map(|m| {
            let k = ModelIndicator::from_indices(train.p(), &order[..m]);
            Ok((m, refit_ols(train, &k)?.mspe(test)))
        })
        .collect()
}
