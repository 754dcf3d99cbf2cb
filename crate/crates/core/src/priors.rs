//! Hyperparameters of the spike-and-slab hierarchy and their sample-size
//! dependent defaults.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Default Inverse-Gamma shape and scale for `σ²`.
pub const DEFAULT_IG_SHAPE: f64 = 0.01;
pub const DEFAULT_IG_SCALE: f64 = 0.01;

/// Default prior mass on models larger than `K`.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// Spike/slab variances, inclusion probability and the `σ²` prior.
///
/// Coefficient `i` has prior `N(0, σ² tau0_sq)` when excluded and
/// `N(0, σ² tau1_sq)` when included; inclusion has prior probability `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    tau0_sq: f64,
    tau1_sq: f64,
    q: f64,
    alpha1: f64,
    alpha2: f64,
    s: f64,
}

impl PriorSpec {
    pub fn new(tau0_sq: f64, tau1_sq: f64, q: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(tau0_sq > 0.0 && tau1_sq > tau0_sq && tau1_sq.is_finite()) {
            return Err(Error::Parameter(format!(
                "need 0 < tau0_sq < tau1_sq, got tau0_sq={tau0_sq}, tau1_sq={tau1_sq}"
            )));
        }
        Self::build(tau0_sq, tau1_sq, q, alpha1, alpha2)
    }

    /// Spike and slab collapsed to one variance. Not a selection prior: every
    /// covariate gets the same shrinkage, so posteriors over `Z` reduce to the
    /// prior odds. Used for symmetry checks.
    pub fn equal_variances(tau_sq: f64, q: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(tau_sq > 0.0 && tau_sq.is_finite()) {
            return Err(Error::Parameter(format!("need tau_sq > 0, got {tau_sq}")));
        }
        Self::build(tau_sq, tau_sq, q, alpha1, alpha2)
    }

    fn build(tau0_sq: f64, tau1_sq: f64, q: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Parameter(format!("need 0 < q < 1, got {q}")));
        }
        if !(alpha1 > 0.0 && alpha2 > 0.0) {
            return Err(Error::Parameter(format!(
                "need positive Inverse-Gamma parameters, got ({alpha1}, {alpha2})"
            )));
        }
        Ok(Self {
            tau0_sq,
            tau1_sq,
            q,
            alpha1,
            alpha2,
            s: q / (1.0 - q),
        })
    }

    /// Spike variance.
    pub fn tau0_sq(&self) -> f64 {
        self.tau0_sq
    }

    /// Slab variance.
    pub fn tau1_sq(&self) -> f64 {
        self.tau1_sq
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    /// Prior inclusion odds `q / (1 - q)`.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Prior variance multiplier (of `σ²`) for coefficient state `included`.
    pub fn tau_sq(&self, included: bool) -> f64 {
        if included {
            self.tau1_sq
        } else {
            self.tau0_sq
        }
    }

    /// Same spec with every variance multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::build(self.tau0_sq * c, self.tau1_sq * c, self.q, self.alpha1, self.alpha2)
    }
}

/// `K = max(10, ⌈log n⌉)`, capped at `p`.
pub fn default_k(n: usize, p: usize) -> usize {
    ((n as f64).ln().ceil() as usize).max(10).min(p)
}

/// Sample-size dependent defaults:
/// `tau0_sq = σ̂²/(10n)`, `tau1_sq = σ̂² max(p^2.1/(100n), log n)`, `q` from
/// [`solve_qn`], and `alpha1 = alpha2 = 0.01`.
pub fn default_priors(n: usize, p: usize, sigma_hat_sq: f64, k: usize, alpha: f64) -> Result<PriorSpec> {
    if n < 2 || p < 1 {
        return Err(Error::Parameter(format!("need n >= 2 and p >= 1, got n={n}, p={p}")));
    }
    if !(sigma_hat_sq > 0.0 && sigma_hat_sq.is_finite()) {
        return Err(Error::Parameter(format!("need sigma_hat_sq > 0, got {sigma_hat_sq}")));
    }
    if k < 1 || k > p {
        return Err(Error::Parameter(format!("need 1 <= K <= p, got K={k}, p={p}")));
    }
    let nf = n as f64;
    let tau0_sq = sigma_hat_sq / (10.0 * nf);
    let tau1_sq = sigma_hat_sq * ((p as f64).powf(2.1) / (100.0 * nf)).max(nf.ln());
    let q = solve_qn(p, k, alpha)?;
    PriorSpec::new(tau0_sq, tau1_sq, q, DEFAULT_IG_SHAPE, DEFAULT_IG_SCALE)
}

/// Prior inclusion probability `q = c/p` where `c` solves
/// `Φ((K − c)/√c) = 1 − α`, so that roughly `α` prior mass sits on models
/// larger than `K`.
///
/// With `z = Φ⁻¹(1 − α)` and `r = √c` the equation is `r² + z r − K = 0`, whose
/// positive root is taken in closed form.
pub fn solve_qn(p: usize, k: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("need 0 < alpha < 1, got {alpha}")));
    }
    if k < 1 || k > p {
        return Err(Error::Parameter(format!("need 1 <= K <= p, got K={k}, p={p}")));
    }
    let kf = k as f64;
    let z = standard_normal().inverse_cdf(1.0 - alpha);
    let r = 2.0 * kf / (z + (z * z + 4.0 * kf).sqrt());
    let c = r * r;
    // c ≤ K exactly when z ≥ 0; fall back to the K endpoint when rounding lands just past it.
    if z < 0.0 || !(c > 0.0) {
        return Err(Error::Parameter(format!(
            "no c in (0, K] with Phi((K-c)/sqrt(c)) = 1 - alpha for K={k}, alpha={alpha}"
        )));
    }
    let q = c.min(kf) / p as f64;
    if q >= 1.0 {
        return Err(Error::Parameter(format!(
            "solution q = {q} is not a probability (K={k}, p={p}, alpha={alpha})"
        )));
    }
    Ok(q)
}

/// Unbiased sample variance (divisor `n - 1`).
pub fn sample_variance(y: &[f64]) -> Result<f64> {
    if y.len() < 2 {
        return Err(Error::Degenerate("need at least two observations".into()));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::Degenerate("response is constant".into()));
    }
    Ok(var)
}

pub(crate) fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    /// Bisection on the untransformed equation, kept separate from the
    /// closed form used in `solve_qn`.
    fn bisect_c(k: f64, alpha: f64) -> f64 {
        let phi = standard_normal();
        let f = |c: f64| phi.cdf((k - c) / c.sqrt()) - (1.0 - alpha);
        let (mut lo, mut hi) = (1e-12, k);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn binomial_upper_tail(p: usize, q: f64, k: usize) -> f64 {
        // P[Bin(p, q) > k] by direct summation of the pmf in log space.
        let lf = |m: usize| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
        (k + 1..=p)
            .map(|j| {
                (lf(p) - lf(j) - lf(p - j) + j as f64 * q.ln() + (p - j) as f64 * (1.0 - q).ln()).exp()
            })
            .sum()
    }

    #[test]
    fn solve_qn_matches_bisection_and_binomial_tail() {
        let q = solve_qn(100, 10, 0.1).unwrap();
        let c = bisect_c(10.0, 0.1);
        assert!((q * 100.0 - c).abs() < 1e-9);
        assert!((c - 6.686).abs() < 1e-3);
        assert!((q - 0.0669).abs() < 1e-4);
        let tail = binomial_upper_tail(100, q, 10);
        assert!((tail - 0.1).abs() < 0.03, "tail {tail}");
    }

    #[test]
    fn solve_qn_satisfies_defining_equation() {
        let phi = standard_normal();
        for &(p, k, alpha) in &[(100, 10, 0.1), (500, 10, 0.1), (500, 50, 0.1), (20, 3, 0.01), (1000, 7, 0.3)] {
            let c = solve_qn(p, k, alpha).unwrap() * p as f64;
            let lhs = phi.cdf((k as f64 - c) / c.sqrt());
            assert!((lhs - (1.0 - alpha)).abs() < 1e-10, "{p} {k} {alpha}: {lhs}");
        }
    }

    #[test]
    fn solve_qn_is_monotone_in_alpha() {
        let qs: Vec<f64> = [1e-6, 1e-3, 0.01, 0.1, 0.3, 0.5]
            .iter()
            .map(|&a| solve_qn(200, 10, a).unwrap())
            .collect();
        assert!(qs.windows(2).all(|w| w[0] < w[1]));
        assert!(qs[0] < 0.015);
    }

    #[test]
    fn solve_qn_edge_cases() {
        let q = solve_qn(30, 29, 0.5).unwrap();
        assert!(q > 0.0 && q < 1.0);
        assert!(matches!(solve_qn(30, 29, 0.7), Err(Error::Parameter(_))));
        assert!(matches!(solve_qn(30, 31, 0.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn default_priors_examples() {
        let pr = default_priors(100, 500, 1.0, 10, 0.1).unwrap();
        assert!((pr.tau0_sq() - 1e-3).abs() < 1e-15);
        let expected = 500f64.powf(2.1) / 1e4;
        assert!((pr.tau1_sq() - expected).abs() < 1e-9);
        assert!((pr.tau1_sq() - 46.54).abs() < 0.005);

        let pr = default_priors(100, 100, 1.0, 10, 0.1).unwrap();
        assert!((pr.tau1_sq() - 100f64.ln()).abs() < 1e-12);
        assert_eq!(pr.alpha1(), 0.01);
        assert_eq!(pr.alpha2(), 0.01);
        assert_eq!(pr.s(), pr.q() / (1.0 - pr.q()));

        let scaled = default_priors(100, 100, 3.0, 10, 0.1).unwrap();
        assert!((scaled.tau0_sq() - 3.0 * pr.tau0_sq()).abs() < 1e-15);
        assert!((scaled.tau1_sq() - 3.0 * pr.tau1_sq()).abs() < 1e-12);

        assert!(matches!(default_priors(100, 5, 1.0, 6, 0.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn default_priors_scaling_invariants() {
        for &(n, p) in &[(10, 3), (100, 100), (200, 1000), (5000, 20)] {
            let pr = default_priors(n, p, 2.5, 3.min(p), 0.1).unwrap();
            assert!((n as f64 * pr.tau0_sq() - 0.25).abs() < 1e-12);
            assert!(pr.tau1_sq() >= 2.5 * (n as f64).ln());
        }
    }

    #[test]
    fn sample_variance_cases() {
        assert_eq!(sample_variance(&[0.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(sample_variance(&[3.0; 5]), Err(Error::Degenerate(_))));
        assert!(matches!(sample_variance(&[3.0]), Err(Error::Degenerate(_))));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let y: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!((sample_variance(&y).unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn prior_spec_validation() {
        assert!(PriorSpec::new(1.0, 1.0, 0.5, 1.0, 1.0).is_err());
        assert!(PriorSpec::new(0.1, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(PriorSpec::new(0.1, 1.0, 0.5, 0.0, 1.0).is_err());
        assert!(PriorSpec::equal_variances(1.0, 0.5, 1.0, 1.0).is_ok());
    }
}
