//! Response vector and design matrix, with the centering/scaling metadata
//! needed to map fitted coefficients back to the raw scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold under which a column's standard deviation counts as zero.
const DEGENERATE_REL_TOL: f64 = 1e-12;

/// Column means and scales removed by [`Dataset::standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_means: Vec<f64>,
    /// Sample standard deviations (divisor `n - 1`); 1.0 for degenerate columns.
    pub x_scales: Vec<f64>,
    pub y_mean: f64,
    /// Sample standard deviation of the response; 1.0 if it is constant.
    pub y_scale: f64,
}

impl Standardization {
    /// Applies the same centering and scaling to another design/response
    /// pair (a held-out set, say).
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.p() != self.x_means.len() {
            return Err(Error::Dimension(format!(
                "standardization is for {} columns, data has {}",
                self.x_means.len(),
                data.p()
            )));
        }
        let x = DMatrix::from_fn(data.n(), data.p(), |i, j| (data.x[(i, j)] - self.x_means[j]) / self.x_scales[j]);
        let y = data.y.map(|v| (v - self.y_mean) / self.y_scale);
        let mut out = Dataset::new(x, y)?;
        out.degenerate = data.degenerate.clone();
        out.names = data.names.clone();
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    standardization: Option<Standardization>,
    degenerate: Vec<bool>,
    names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has length {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Dimension("empty design matrix".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite value in data".into()));
        }
        let degenerate = (0..x.ncols())
            .map(|j| column_sd(&x, j).1 <= DEGENERATE_REL_TOL * column_scale_ref(&x, j))
            .collect();
        Ok(Self {
            x,
            y,
            standardization: None,
            degenerate,
            names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::Dimension(format!(
                "{} column names for {} covariates",
                names.len(),
                self.p()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    /// Centers and scales every column and the response to unit sample
    /// variance. Degenerate columns are centered (leaving zeros) and kept.
    pub fn standardize(&self) -> Self {
        if self.standardization.is_some() {
            return self.clone();
        }
        let (n, p) = self.x.shape();
        let mut x = self.x.clone();
        let mut x_means = Vec::with_capacity(p);
        let mut x_scales = Vec::with_capacity(p);
        for j in 0..p {
            let (mean, sd) = column_sd(&self.x, j);
            let scale = if self.degenerate[j] { 1.0 } else { sd };
            for i in 0..n {
                x[(i, j)] = (x[(i, j)] - mean) / scale;
            }
            x_means.push(mean);
            x_scales.push(scale);
        }
        let y_mean = self.y.mean();
        let y_sd = vector_sd(&self.y, y_mean);
        let y_scale = if y_sd > DEGENERATE_REL_TOL * self.y.amax() { y_sd } else { 1.0 };
        let y = self.y.map(|v| (v - y_mean) / y_scale);
        Self {
            x,
            y,
            standardization: Some(Standardization {
                x_means,
                x_scales,
                y_mean,
                y_scale,
            }),
            degenerate: self.degenerate.clone(),
            names: self.names.clone(),
        }
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization.is_some()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn degenerate_columns(&self) -> Vec<usize> {
        self.degenerate
            .iter()
            .enumerate()
            .filter_map(|(j, &d)| d.then_some(j))
            .collect()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Name of column `j`, falling back to `x{j+1}`.
    pub fn name(&self, j: usize) -> String {
        self.names
            .as_ref()
            .map(|n| n[j].clone())
            .unwrap_or_else(|| format!("x{}", j + 1))
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let x = self.x.select_columns(columns.iter());
        let standardization = self.standardization.as_ref().map(|s| Standardization {
            x_means: columns.iter().map(|&j| s.x_means[j]).collect(),
            x_scales: columns.iter().map(|&j| s.x_scales[j]).collect(),
            y_mean: s.y_mean,
            y_scale: s.y_scale,
        });
        Self {
            x,
            y: self.y.clone(),
            standardization,
            degenerate: columns.iter().map(|&j| self.degenerate[j]).collect(),
            names: self
                .names
                .as_ref()
                .map(|n| columns.iter().map(|&j| n[j].clone()).collect()),
        }
    }

    /// Maps coefficients and intercept fitted on the standardized scale back to
    /// the raw scale. Identity when the dataset is not standardized.
    pub fn to_raw_coefficients(&self, coef: &[f64], intercept: f64) -> (Vec<f64>, f64) {
        match &self.standardization {
            None => (coef.to_vec(), intercept),
            Some(s) => {
                let raw: Vec<f64> = coef
                    .iter()
                    .zip(&s.x_scales)
                    .map(|(b, sc)| b * s.y_scale / sc)
                    .collect();
                let shift: f64 = raw.iter().zip(&s.x_means).map(|(b, m)| b * m).sum();
                (raw, s.y_mean + s.y_scale * intercept - shift)
            }
        }
    }
}

fn column_sd(x: &DMatrix<f64>, j: usize) -> (f64, f64) {
    let col = x.column(j);
    let n = col.len() as f64;
    let mean = col.sum() / n;
    if col.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn vector_sd(v: &DVector<f64>, mean: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

fn column_scale_ref(x: &DMatrix<f64>, j: usize) -> f64 {
    x.column(j).iter().fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()))
}
