//! Simulation cases with known truth, run end to end over replications and
//! summarized as selection metrics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::diagnostics::Truth;
use crate::error::{Error, Result};
use crate::gibbs::{chain_rng, run_chain, ChainConfig, PosteriorSummary};
use crate::indicator::ModelIndicator;
use crate::priors::{default_k, default_priors, sample_variance, DEFAULT_ALPHA};
use crate::selection::{bic_model, median_model, mspe_by_size, refit_ols, SelectionResult, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Correlation {
    /// Unit variances, common pairwise correlation.
    Compound { rho: f64 },
    /// Active block `rho_active`, active-inactive pairs `rho_cross`, inactive
    /// block `rho_inactive`.
    Block { rho_active: f64, rho_cross: f64, rho_inactive: f64 },
    /// `Σ = AA'/p` with `A` a `p × p` standard normal matrix, redrawn each
    /// replication, so that `E[Σ] = I`.
    Wishart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficients {
    Fixed { values: Vec<f64> },
    /// Drawn i.i.d. `U(low, high)` each replication.
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub case_id: u8,
    pub n: usize,
    pub p: usize,
    pub correlation: Correlation,
    pub t_size: usize,
    pub coefficients: Coefficients,
    pub replications: usize,
    pub seed: u64,
}

const STRONG: [f64; 5] = [0.6, 1.2, 1.8, 2.4, 3.0];

impl CaseSpec {
    /// Case `id` at its first published `(n, p)`.
    pub fn standard(id: u8) -> Result<Self> {
        let (n, p) = match id {
            1 => (100, 100),
            2..=5 => (100, 500),
            6 => (100, 50),
            _ => return Err(Error::Parameter(format!("case must be 1..=6, got {id}"))),
        };
        Self::new(id, n, p)
    }

    /// Case `id` at size `(n, p)`, with 100 replications when `p ≤ n` and 50
    /// otherwise.
    pub fn new(id: u8, n: usize, p: usize) -> Result<Self> {
        let compound = Correlation::Compound { rho: 0.25 };
        let fixed = |v: Vec<f64>| Coefficients::Fixed { values: v };
        let (correlation, t_size, coefficients) = match id {
            1 | 2 => (compound, 5, fixed(STRONG.to_vec())),
            3 => (compound, 5, fixed(vec![0.6; 5])),
            4 => (
                Correlation::Block {
                    rho_active: 0.25,
                    rho_cross: 0.5,
                    rho_inactive: 0.75,
                },
                5,
                fixed(STRONG.to_vec()),
            ),
            5 => (compound, 25, fixed((0..25).map(|i| 1.0 + 2.0 * i as f64 / 24.0).collect())),
            6 => (Correlation::Wishart, 3, Coefficients::Uniform { low: 0.0, high: 3.0 }),
            _ => return Err(Error::Parameter(format!("case must be 1..=6, got {id}"))),
        };
        let spec = CaseSpec {
            case_id: id,
            n,
            p,
            correlation,
            t_size,
            coefficients,
            replications: if p <= n { 100 } else { 50 },
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_replications(mut self, r: usize) -> Self {
        self.replications = r;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Replaces the compound-symmetry correlation (case 5 is also run at 0.75).
    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        match &mut self.correlation {
            Correlation::Compound { rho: r } => *r = rho,
            _ => return Err(Error::Parameter(format!("case {} has no single rho", self.case_id))),
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        let (n, p) = (self.n, self.p);
        if n < 3 || p < 1 {
            return bad(format!("need n >= 3 and p >= 1, got n={n}, p={p}"));
        }
        match self.case_id {
            1 if n != p => return bad(format!("case 1 has p = n, got n={n}, p={p}")),
            2 if p <= n => return bad(format!("case 2 has p > n, got n={n}, p={p}")),
            6 if n <= p => return bad(format!("case 6 has n > p, got n={n}, p={p}")),
            1..=6 => {}
            id => return bad(format!("case must be 1..=6, got {id}")),
        }
        if self.t_size > p {
            return bad(format!("true model size {} exceeds p = {p}", self.t_size));
        }
        if let Coefficients::Fixed { values } = &self.coefficients {
            if values.len() != self.t_size {
                return bad(format!("{} coefficients for a true model of size {}", values.len(), self.t_size));
            }
        }
        if let Coefficients::Uniform { low, high } = self.coefficients {
            if !(low < high) {
                return bad(format!("empty coefficient range [{low}, {high}]"));
            }
        }
        if self.replications < 1 {
            return bad("need at least one replication".into());
        }
        // Positive definiteness of the structured covariances.
        match self.correlation {
            Correlation::Compound { rho } => {
                let lo = if p > 1 { -1.0 / (p as f64 - 1.0) } else { -1.0 };
                if !(rho > lo && rho < 1.0) {
                    return bad(format!("compound correlation {rho} is not positive definite for p = {p}"));
                }
            }
            Correlation::Block { .. } => {
                self.covariance_factor()?;
            }
            Correlation::Wishart => {}
        }
        Ok(())
    }

    pub fn true_model(&self) -> ModelIndicator {
        ModelIndicator::from_indices(self.p, &(0..self.t_size).collect::<Vec<_>>())
    }

    fn covariance(&self) -> Option<DMatrix<f64>> {
        let (p, t) = (self.p, self.t_size);
        match self.correlation {
            Correlation::Compound { rho } => Some(DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })),
            Correlation::Block {
                rho_active,
                rho_cross,
                rho_inactive,
            } => Some(DMatrix::from_fn(p, p, |i, j| match (i == j, i < t, j < t) {
                (true, _, _) => 1.0,
                (false, true, true) => rho_active,
                (false, false, false) => rho_inactive,
                _ => rho_cross,
            })),
            Correlation::Wishart => None,
        }
    }

    /// Lower Cholesky factor of the fixed covariance, if there is one.
    fn covariance_factor(&self) -> Result<Option<DMatrix<f64>>> {
        self.covariance()
            .map(|s| {
                s.cholesky()
                    .map(|c| c.l())
                    .ok_or_else(|| Error::Parameter(format!("case {} covariance is not positive definite", self.case_id)))
            })
            .transpose()
    }
}

/// One generated replication.
#[derive(Debug, Clone)]
pub struct Replication {
    pub train: Dataset,
    pub test: Dataset,
    pub truth: Truth,
}

/// Draws training and test sets for replication `rep`. Deterministic in
/// `(spec.seed, rep)`.
pub fn gen_case(spec: &CaseSpec, rep: usize) -> Result<Replication> {
    spec.validate()?;
    let factor = spec.covariance_factor()?;
    gen_with_factor(spec, rep, factor.as_ref())
}

fn gen_with_factor(spec: &CaseSpec, rep: usize, factor: Option<&DMatrix<f64>>) -> Result<Replication> {
    let (n, p) = (spec.n, spec.p);
    let mut rng = chain_rng(spec.seed, 1 + 2 * rep as u64);
    let normal = |rng: &mut ChaCha8Rng, r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mixing = match factor {
        Some(l) => l.clone(),
        None => normal(&mut rng, p, p) / (p as f64).sqrt(),
    };
    let active: Vec<f64> = match &spec.coefficients {
        Coefficients::Fixed { values } => values.clone(),
        Coefficients::Uniform { low, high } => {
            let u = Uniform::new(*low, *high).map_err(|e| Error::Parameter(e.to_string()))?;
            (0..spec.t_size).map(|_| rng.sample(u)).collect()
        }
    };
    let mut beta = vec![0.0; p];
    beta[..spec.t_size].copy_from_slice(&active);
    let bvec = DVector::from_column_slice(&beta);
    let draw = |rng: &mut ChaCha8Rng| -> Result<Dataset> {
        let x = normal(rng, n, p) * mixing.transpose();
        let e = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * &bvec + e;
        Dataset::new(x, y)
    };
    let train = draw(&mut rng)?;
    let test = draw(&mut rng)?;
    Ok(Replication {
        train,
        test,
        truth: Truth::new(spec.true_model(), beta, 1.0)?,
    })
}

/// Outcome of one selection rule on one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub exact_match: bool,
    pub superset: bool,
    pub fdr: f64,
    pub mspe: f64,
    pub size: usize,
}

/// `mspe` is left at zero; see [`evaluate_with_refit`].
pub fn evaluate(selected: &ModelIndicator, truth: &Truth) -> Outcome {
    let false_pos = selected.and(&truth.t.complement()).size();
    Outcome {
        exact_match: selected == &truth.t,
        superset: selected.contains(&truth.t),
        fdr: false_pos as f64 / selected.size().max(1) as f64,
        mspe: 0.0,
        size: selected.size(),
    }
}

/// Scores `selected`, refitting OLS on `train` (standardized) and predicting
/// the raw `test` set.
pub fn evaluate_with_refit(selected: &ModelIndicator, truth: &Truth, train: &Dataset, test: &Dataset) -> Result<Outcome> {
    let refit = refit_ols(train, selected)?.to_raw(train);
    Ok(Outcome {
        mspe: refit.mspe(test),
        ..evaluate(selected, truth)
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pp0: f64,
    pub pp1: f64,
    pub exact_match: f64,
    pub superset: f64,
    pub fdr: f64,
    pub mspe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleMetrics {
    pub rule: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub pp0: f64,
    pub pp1: f64,
    pub median: Outcome,
    pub bic: Outcome,
    /// Test MSPE by model size along the probability ranking.
    pub size_sweep: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub chain: ChainConfig,
    /// Prior size bound; `None` uses `max(10, ⌈log n⌉)`.
    pub k: Option<usize>,
    pub alpha: f64,
    pub threshold: f64,
    /// Largest model size for the MSPE-by-size sweep; 0 disables it.
    pub sweep_size: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            chain: ChainConfig::default(),
            k: None,
            alpha: DEFAULT_ALPHA,
            threshold: DEFAULT_THRESHOLD,
            sweep_size: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub spec: CaseSpec,
    pub config: BenchConfig,
    pub k: usize,
    pub bic_max_size: usize,
    pub rows: Vec<RuleMetrics>,
    pub completed: usize,
    pub failures: Vec<(usize, String)>,
    pub records: Vec<ReplicationRecord>,
    /// Average test MSPE by model size (empty when the sweep is off).
    pub size_sweep: Vec<f64>,
}

impl BenchReport {
    pub fn median(&self) -> &Metrics {
        &self.rows[0].metrics
    }

    pub fn bic(&self) -> &Metrics {
        &self.rows[1].metrics
    }
}

/// Largest size the BIC rule considers: `min(p, n − 2, 2K)`.
pub fn bic_max_size(n: usize, p: usize, k: usize) -> usize {
    p.min(n.saturating_sub(2)).min(2 * k)
}

/// Per-replication chain seed, derived from the case seed.
fn replication_seed(seed: u64, rep: usize) -> u64 {
    seed ^ (rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn run_replication(spec: &CaseSpec, config: &BenchConfig, rep: usize, factor: Option<&DMatrix<f64>>) -> Result<ReplicationRecord> {
    let Replication { train, test, truth } = gen_with_factor(spec, rep, factor)?;
    let (n, p) = (spec.n, spec.p);
    let k = config.k.unwrap_or_else(|| default_k(n, p));
    let data = train.standardize();
    let sigma_hat_sq = sample_variance(data.y().as_slice())?;
    let priors = default_priors(n, p, sigma_hat_sq, k, config.alpha)?;
    let chain = ChainConfig {
        seed: replication_seed(config.chain.seed, rep),
        ..config.chain.clone()
    };
    let summary = run_chain(&data, &priors, &chain)?;
    let (pp0, pp1) = average_probs(&summary, &truth.t);
    let median = median_model(&summary, config.threshold)?;
    let (bic, _) = bic_model(&summary, &data, bic_max_size(n, p, k))?;
    let score = |sel: &SelectionResult| evaluate_with_refit(&sel.selected, &truth, &data, &test);
    let size_sweep = if config.sweep_size > 0 {
        let std_test = data
            .standardization()
            .ok_or_else(|| Error::Parameter("training set is not standardized".into()))?
            .apply(&test)?;
        mspe_by_size(&summary.marginal_probs, &data, &std_test, config.sweep_size)?
            .into_iter()
            .map(|(_, m)| m)
            .collect()
    } else {
        Vec::new()
    };
    Ok(ReplicationRecord {
        rep,
        pp0,
        pp1,
        median: score(&median)?,
        bic: score(&bic)?,
        size_sweep,
    })
}

fn average_probs(summary: &PosteriorSummary, t: &ModelIndicator) -> (f64, f64) {
    let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0usize, 0.0, 0usize);
    for (i, &pr) in summary.marginal_probs.iter().enumerate() {
        if t.get(i) {
            s1 += pr;
            n1 += 1;
        } else {
            s0 += pr;
            n0 += 1;
        }
    }
    let avg = |s: f64, c: usize| if c == 0 { f64::NAN } else { s / c as f64 };
    (avg(s0, n0), avg(s1, n1))
}

/// Runs all replications (in parallel) and averages in replication order.
pub fn run_benchmark(spec: &CaseSpec, config: &BenchConfig) -> Result<BenchReport> {
    spec.validate()?;
    config.chain.validate()?;
    let factor = spec.covariance_factor()?;
    let results: Vec<Result<ReplicationRecord>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| run_replication(spec, config, rep, factor.as_ref()))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                failures.push((rep, e.to_string()));
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Degenerate(format!("all {} replications failed", spec.replications)));
    }
    let k = config.k.unwrap_or_else(|| default_k(spec.n, spec.p));
    let rows = vec![
        RuleMetrics {
            rule: "median".into(),
            metrics: aggregate(&records, |r| &r.median),
        },
        RuleMetrics {
            rule: "bic".into(),
            metrics: aggregate(&records, |r| &r.bic),
        },
    ];
    let size_sweep = if config.sweep_size > 0 {
        let len = records[0].size_sweep.len();
        (0..len)
            .map(|m| records.iter().map(|r| r.size_sweep[m]).sum::<f64>() / records.len() as f64)
            .collect()
    } else {
        Vec::new()
    };
    Ok(BenchReport {
        spec: spec.clone(),
        config: config.clone(),
        k,
        bic_max_size: bic_max_size(spec.n, spec.p, k),
        rows,
        completed: records.len(),
        failures,
        records,
        size_sweep,
    })
}

fn aggregate(records: &[ReplicationRecord], pick: impl Fn(&ReplicationRecord) -> &Outcome) -> Metrics {
    let m = records.len() as f64;
    let mean = |f: &dyn Fn(&ReplicationRecord) -> f64| records.iter().map(f).sum::<f64>() / m;
    Metrics {
        pp0: mean(&|r| r.pp0),
        pp1: mean(&|r| r.pp1),
        exact_match: mean(&|r| pick(r).exact_match as u8 as f64),
        superset: mean(&|r| pick(r).superset as u8 as f64),
        fdr: mean(&|r| pick(r).fdr),
        mspe: mean(&|r| pick(r).mspe),
    }
}
