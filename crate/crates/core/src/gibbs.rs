//! Three-block Gibbs sampler over `(β, Z, σ²)`.
//!
//! Every block is an exact conjugate draw:
//!
//! * `β | Z = k, σ²  ~ N(V X'Y, σ² V)` with `V = (X'X + D_k)⁻¹`
//! * `Z_i | β, σ²` independent Bernoulli, odds `q φ(β_i; σ²τ₁²) / ((1 − q) φ(β_i; σ²τ₀²))`
//! * `σ² | β, Z = k ~ IG(α₁ + n/2 + p/2, α₂ + β'D_kβ/2 + ‖Y − Xβ‖²/2)`
//!
//! The `β` block factorizes `X'X + D_k` when `p ≤ n`. When `p > n` it uses an
//! auxiliary-variable draw that only factorizes the `n × n` matrix
//! `I + X D_k⁻¹ X'`, so no `p × p` system is ever formed.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::indicator::ModelIndicator;
use crate::linalg::{backward_solve, cholesky, forward_solve};
use crate::priors::{sample_variance, PriorSpec};
use crate::score::{dual_system, precision_diag, Formulation};

/// Number of distinct visited models retained in [`PosteriorSummary::model_counts`].
pub const MODEL_COUNT_CAP: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum SigmaMode {
    /// `σ²` held at the given value; no `σ²` block.
    Fixed(f64),
    /// `σ²` sampled from its Inverse-Gamma conditional.
    InverseGamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub iterations: usize,
    pub seed: u64,
    pub sigma_mode: SigmaMode,
    pub rao_blackwell: bool,
    pub thin: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            iterations: 5000,
            seed: 0,
            sigma_mode: SigmaMode::InverseGamma,
            rao_blackwell: true,
            thin: 1,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Parameter("iterations must be at least 1".into()));
        }
        if self.thin < 1 {
            return Err(Error::Parameter("thin must be at least 1".into()));
        }
        if let SigmaMode::Fixed(s) = self.sigma_mode {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Parameter(format!("fixed sigma^2 must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Estimates of `P(Z_i = 1 | Y)`.
    pub marginal_probs: Vec<f64>,
    /// Posterior mean of `β` over the retained sweeps.
    pub beta_mean: Vec<f64>,
    /// Sampled `σ²` values; empty in fixed mode.
    pub sigma_trace: Vec<f64>,
    /// Most visited models with visit counts, most frequent first (ties by bit pattern).
    pub model_counts: Vec<(ModelIndicator, u64)>,
    pub n_samples: usize,
}

impl PosteriorSummary {
    pub fn p(&self) -> usize {
        self.marginal_probs.len()
    }
}

/// Draws `β | Z = k, σ²` for one dataset, reusing the cross-products.
#[derive(Debug, Clone)]
pub struct BetaSampler<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    formulation: Formulation,
    /// `X'X` (primal) or `XX'` (dual).
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

impl<'a> BetaSampler<'a> {
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
            x,
            y: data.y(),
            formulation,
            gram,
            xty: x.tr_mul(data.y()),
        }
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn draw<R: Rng + ?Sized>(
        &self,
        k: &ModelIndicator,
        sigma_sq: f64,
        priors: &PriorSpec,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let sigma = sigma_sq.sqrt();
        match self.formulation {
            Formulation::Primal => {
                // β = L'⁻¹ (L⁻¹ X'Y + σ z) with L L' = X'X + D_k.
                let d = precision_diag(k, priors);
                let mut a = self.gram.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += d[i];
                }
                let chol = cholesky(a, "X'X + D_k")?;
                let mut w = self.xty.clone();
                forward_solve(&chol, &mut w);
                for wi in w.iter_mut() {
                    *wi += sigma * rng.sample::<f64, _>(StandardNormal);
                }
                backward_solve(&chol, &mut w);
                Ok(w)
            }
            Formulation::Dual => {
                // θ = u + D⁻¹X'w with u ~ N(0, D⁻¹), v = Xu + δ, (I + X D⁻¹ X') w = Y/σ − v,
                // gives θ ~ N((X'X + D)⁻¹X'Y/σ, (X'X + D)⁻¹); β = σθ.
                let p = self.x.ncols();
                let n = self.x.nrows();
                let tau_sq: Vec<f64> = k.bits().iter().map(|&b| priors.tau_sq(b)).collect();
                let u = DVector::from_fn(p, |i, _| tau_sq[i].sqrt() * rng.sample::<f64, _>(StandardNormal));
                let delta = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let v = self.x * &u + delta;
                let m = dual_system(self.x, &self.gram, k, priors);
                let chol = cholesky(m, "I + X D_k^-1 X'")?;
                let mut w = self.y / sigma - v;
                forward_solve(&chol, &mut w);
                backward_solve(&chol, &mut w);
                let xtw = self.x.tr_mul(&w);
                Ok(DVector::from_fn(p, |i, _| sigma * (u[i] + tau_sq[i] * xtw[i])))
            }
        }
    }
}

/// One draw of `β | Z = k, σ²`.
pub fn draw_beta<R: Rng + ?Sized>(
    data: &Dataset,
    k: &ModelIndicator,
    sigma_sq: f64,
    priors: &PriorSpec,
    rng: &mut R,
) -> Result<DVector<f64>> {
    BetaSampler::new(data).draw(k, sigma_sq, priors, rng)
}

/// `P(Z_i = 1 | β_i, σ²)` evaluated through the log odds.
pub fn inclusion_probability(beta_i: f64, sigma_sq: f64, priors: &PriorSpec) -> f64 {
    let (t0, t1) = (priors.tau0_sq(), priors.tau1_sq());
    let log_odds = priors.s().ln() - 0.5 * (t1 / t0).ln() + beta_i * beta_i / (2.0 * sigma_sq) * (1.0 / t0 - 1.0 / t1);
    logistic(log_odds)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Draws every `Z_i` from its conditional; also returns the conditional probabilities.
pub fn draw_z<R: Rng + ?Sized>(
    beta: &DVector<f64>,
    sigma_sq: f64,
    priors: &PriorSpec,
    rng: &mut R,
) -> (ModelIndicator, Vec<f64>) {
    let probs: Vec<f64> = beta.iter().map(|&b| inclusion_probability(b, sigma_sq, priors)).collect();
    let bits = probs.iter().map(|&pr| rng.random::<f64>() < pr).collect();
    (ModelIndicator::from_bits(bits), probs)
}

/// Shape and scale of the `σ² | β, Z = k` Inverse-Gamma conditional.
pub fn sigma_sq_conditional(
    data: &Dataset,
    beta: &DVector<f64>,
    k: &ModelIndicator,
    priors: &PriorSpec,
) -> (f64, f64) {
    let (n, p) = (data.n() as f64, data.p() as f64);
    let shape = priors.alpha1() + 0.5 * n + 0.5 * p;
    let d = precision_diag(k, priors);
    let quad: f64 = beta.iter().zip(d.iter()).map(|(b, di)| di * b * b).sum();
    let resid = data.y() - data.x() * beta;
    let scale = priors.alpha2() + 0.5 * quad + 0.5 * resid.norm_squared();
    (shape, scale)
}

pub fn draw_sigma_sq<R: Rng + ?Sized>(
    data: &Dataset,
    beta: &DVector<f64>,
    k: &ModelIndicator,
    priors: &PriorSpec,
    rng: &mut R,
) -> f64 {
    let (shape, scale) = sigma_sq_conditional(data, beta, k, priors);
    draw_inverse_gamma(shape, scale, rng)
}

/// `IG(shape, scale)` as `scale / Gamma(shape, 1)`.
pub fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    scale / g
}

/// The RNG for chain `stream` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn run_chain(data: &Dataset, priors: &PriorSpec, config: &ChainConfig) -> Result<PosteriorSummary> {
    run_chain_on_stream(data, priors, config, 0, None)
}

/// Like [`run_chain`], also writing one CSV row `iteration,z,sigma_sq` per
/// retained sweep to `trace`.
pub fn run_chain_traced(
    data: &Dataset,
    priors: &PriorSpec,
    config: &ChainConfig,
    trace: &mut dyn Write,
) -> Result<PosteriorSummary> {
    run_chain_on_stream(data, priors, config, 0, Some(trace))
}

/// Runs `n_chains` independent chains (one RNG stream each, possibly in
/// parallel) and pools them in chain order.
pub fn run_chains(
    data: &Dataset,
    priors: &PriorSpec,
    config: &ChainConfig,
    n_chains: usize,
) -> Result<PosteriorSummary> {
    if n_chains == 0 {
        return Err(Error::Parameter("need at least one chain".into()));
    }
    let summaries = (0..n_chains as u64)
        .into_par_iter()
        .map(|stream| run_chain_on_stream(data, priors, config, stream, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(pool(summaries))
}

fn pool(summaries: Vec<PosteriorSummary>) -> PosteriorSummary {
    let total: usize = summaries.iter().map(|s| s.n_samples).sum();
    let p = summaries[0].p();
    let weighted = |f: &dyn Fn(&PosteriorSummary) -> &Vec<f64>| -> Vec<f64> {
        (0..p)
            .map(|i| {
                summaries
                    .iter()
                    .map(|s| f(s)[i] * s.n_samples as f64)
                    .sum::<f64>()
                    / total as f64
            })
            .collect()
    };
    let marginal_probs = weighted(&|s| &s.marginal_probs);
    let beta_mean = weighted(&|s| &s.beta_mean);
    let mut counts: HashMap<ModelIndicator, u64> = HashMap::new();
    for s in &summaries {
        for (k, c) in &s.model_counts {
            *counts.entry(k.clone()).or_default() += c;
        }
    }
    PosteriorSummary {
        marginal_probs,
        beta_mean,
        sigma_trace: summaries.iter().flat_map(|s| s.sigma_trace.iter().copied()).collect(),
        model_counts: top_models(counts),
        n_samples: total,
    }
}

fn top_models(counts: HashMap<ModelIndicator, u64>) -> Vec<(ModelIndicator, u64)> {
    let mut v: Vec<_> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(MODEL_COUNT_CAP);
    v
}

fn run_chain_on_stream(
    data: &Dataset,
    priors: &PriorSpec,
    config: &ChainConfig,
    stream: u64,
    mut trace: Option<&mut dyn Write>,
) -> Result<PosteriorSummary> {
    config.validate()?;
    if !data.is_standardized() {
        log::warn!("running the sampler on unstandardized data; default priors assume standardized covariates");
    }
    let p = data.p();
    let mut rng = chain_rng(config.seed, stream);
    let sampler = BetaSampler::new(data);
    // Zero-variance columns stay in the spike and are never counted as included.
    let pinned = data.degenerate().to_vec();

    let mut sigma_sq = match config.sigma_mode {
        SigmaMode::Fixed(s) => s,
        SigmaMode::InverseGamma => sample_variance(data.y().as_slice())?,
    };
    let mut z = ModelIndicator::empty(p);
    let mut prob_sum = vec![0.0; p];
    let mut beta_sum = vec![0.0; p];
    let mut sigma_trace = Vec::new();
    let mut counts: HashMap<ModelIndicator, u64> = HashMap::new();
    let mut n_samples = 0usize;

    if let Some(w) = trace.as_deref_mut() {
        writeln!(w, "iteration,z,sigma_sq")?;
    }
    for iter in 0..config.burn_in + config.iterations {
        let beta = sampler
            .draw(&z, sigma_sq, priors, &mut rng)
            .map_err(|e| Error::Chain {
                iteration: iter,
                source: Box::new(e),
            })?;
        let (mut z_new, mut probs) = draw_z(&beta, sigma_sq, priors, &mut rng);
        for (i, &pin) in pinned.iter().enumerate() {
            if pin {
                z_new.set(i, false);
                probs[i] = 0.0;
            }
        }
        z = z_new;
        if config.sigma_mode == SigmaMode::InverseGamma {
            sigma_sq = draw_sigma_sq(data, &beta, &z, priors, &mut rng);
            if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
                return Err(Error::Chain {
                    iteration: iter,
                    source: Box::new(Error::Numerical(format!("sigma^2 draw {sigma_sq}"))),
                });
            }
        }

        if iter < config.burn_in || !(iter - config.burn_in).is_multiple_of(config.thin) {
            continue;
        }
        n_samples += 1;
        for i in 0..p {
            prob_sum[i] += if config.rao_blackwell {
                probs[i]
            } else if z.get(i) {
                1.0
            } else {
                0.0
            };
            beta_sum[i] += beta[i];
        }
        if config.sigma_mode == SigmaMode::InverseGamma {
            sigma_trace.push(sigma_sq);
        }
        if let Some(w) = trace.as_deref_mut() {
            writeln!(w, "{iter},{z},{sigma_sq}")?;
        }
        *counts.entry(z.clone()).or_default() += 1;
    }

    let ns = n_samples as f64;
    Ok(PosteriorSummary {
        marginal_probs: prob_sum.into_iter().map(|s| (s / ns).clamp(0.0, 1.0)).collect(),
        beta_mean: beta_sum.into_iter().map(|s| s / ns).collect(),
        sigma_trace,
        model_counts: top_models(counts),
        n_samples,
    })
}
