#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sdvs::priors::{default_k, default_priors};
use sdvs::{Dataset, ModelIndicator, PriorSpec};

/// Small Gaussian regression with `active` leading coefficients drawn
/// from [0.3, 1.5] and unit noise, standardized.
pub struct Instance {
    pub data: Dataset,
    pub truth: ModelIndicator,
    pub priors: PriorSpec,
}

pub fn random_instance(seed: u64, n_range: (usize, usize), p_range: (usize, usize)) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(n_range.0..=n_range.1);
    let p = rng.random_range(p_range.0..=p_range.1);
    let active = rng.random_range(1..=p.min(3));
    let rho: f64 = rng.random_range(0.0..0.5);
    let shared = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DMatrix::from_fn(n, p, |i, _| {
        rho.sqrt() * shared[i] + (1.0 - rho).sqrt() * rng.sample::<f64, _>(StandardNormal)
    });
    let beta = DVector::from_fn(p, |j, _| if j < active { rng.random_range(0.3..1.5) } else { 0.0 });
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * &beta + noise;
    let data = Dataset::new(x, y).unwrap().standardize();
    let priors = default_priors(n, p, 1.0, default_k(n, p), 0.1).unwrap();
    Instance {
        data,
        truth: ModelIndicator::from_indices(p, &(0..active).collect::<Vec<_>>()),
        priors,
    }
}

/// Columns 1..=p of the Sylvester-Hadamard matrix of order `n` (a power of
/// two): centered, mutually orthogonal, `X'X = nI`.
pub fn walsh(n: usize, p: usize) -> DMatrix<f64> {
    assert!(n.is_power_of_two() && p < n);
    DMatrix::from_fn(n, p, |i, j| if (i & (j + 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
}

pub fn write_csv(path: &std::path::Path, data: &Dataset) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header = vec!["y".to_string()];
    header.extend((0..data.p()).map(|j| format!("x{}", j + 1)));
    w.write_record(&header).unwrap();
    for i in 0..data.n() {
        let mut row = vec![data.y()[i].to_string()];
        row.extend((0..data.p()).map(|j| data.x()[(i, j)].to_string()));
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
}
