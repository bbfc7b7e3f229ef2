//! Regression core: ordinary least squares with model-based inference and
//! binomial (logit) fitting by iteratively reweighted least squares.

mod dist;
mod logistic;
pub mod qr;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use dist::{tail_p_value, Reference};
pub use logistic::{fit_logistic, IrlsOptions};
use qr::{PivotedQr, RANK_TOLERANCE};

/// Dense `n x p` regressor matrix with labelled columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    p: usize,
    /// Column-major.
    values: Vec<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn from_columns(labels: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                found: labels.len(),
            });
        }
        let p = columns.len();
        if p == 0 {
            return Err(Error::InvalidDesign("design has no columns".into()));
        }
        let n = columns[0].len();
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        if n < p {
            return Err(Error::InvalidDesign(format!("{n} rows cannot identify {p} columns")));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidDesign(format!("duplicate column label `{l}`")));
            }
        }
        for (l, c) in labels.iter().zip(&columns) {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(l.clone()));
            }
        }
        Ok(Self {
            n,
            p,
            values: columns.concat(),
            labels,
        })
    }

    pub fn from_rows(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = labels.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: bad.len(),
            });
        }
        let columns = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::from_columns(labels, columns)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.p).map(|j| self.get(i, j)).collect()
    }

    /// Column-major storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// `X b`.
    pub fn mul_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (j, bj) in b.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.column(j)) {
                *o += x * bj;
            }
        }
        out
    }

    /// `X^T v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.p)
            .map(|j| self.column(j).iter().zip(v).map(|(x, y)| x * y).sum())
            .collect()
    }

    /// Pivoted QR of the design, failing with the dependent column labels
    /// when it is rank deficient.
    pub(crate) fn factor(&self) -> Result<PivotedQr> {
        let qr = PivotedQr::new(&self.values, self.n, self.p);
        let dependent = qr.dependent_columns(RANK_TOLERANCE);
        if !dependent.is_empty() {
            return Err(Error::RankDeficient {
                columns: dependent.into_iter().map(|j| self.labels[j].clone()).collect(),
            });
        }
        Ok(qr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Binomial,
}

/// Fitted coefficients with their classical covariance and Wald/t tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub standard_errors: Vec<f64>,
    pub test_statistics: Vec<f64>,
    pub p_values: Vec<f64>,
    /// `RSS / (n - p)`; NaN when `n == p`. Zero for the binomial family.
    pub residual_variance: f64,
    pub degrees_of_freedom: usize,
    pub family: Family,
    pub converged: bool,
}

impl FitSummary {
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn from_parts(
        labels: Vec<String>,
        coefficients: Vec<f64>,
        covariance: Vec<Vec<f64>>,
        residual_variance: f64,
        degrees_of_freedom: usize,
        family: Family,
        converged: bool,
    ) -> Self {
        let reference = match family {
            Family::Gaussian => Reference::StudentT(degrees_of_freedom as f64),
            Family::Binomial => Reference::Normal,
        };
        let standard_errors: Vec<f64> = (0..coefficients.len())
            .map(|k| {
                // f64::max would turn a NaN variance into 0
                let v = covariance[k][k];
                if v.is_nan() {
                    v
                } else {
                    v.max(0.0).sqrt()
                }
            })
            .collect();
        let test_statistics: Vec<f64> = coefficients
            .iter()
            .zip(&standard_errors)
            .map(|(&c, &se)| if c == 0.0 && se == 0.0 { 0.0 } else { c / se })
            .collect();
        let p_values = test_statistics
            .iter()
            .map(|&t| {
                if degrees_of_freedom == 0 && family == Family::Gaussian {
                    f64::NAN
                } else {
                    tail_p_value(t, reference)
                }
            })
            .collect();
        Self {
            labels,
            coefficients,
            covariance,
            standard_errors,
            test_statistics,
            p_values,
            residual_variance,
            degrees_of_freedom,
            family,
            converged,
        }
    }
}

pub(crate) fn square(flat: &[f64], p: usize, scale: f64) -> Vec<Vec<f64>> {
    flat.chunks(p)
        .map(|row| row.iter().map(|v| v * scale).collect())
        .collect()
}

/// Ordinary least squares with homoskedastic model-based covariance
/// `s^2 (X^T X)^{-1}` and t tests on `n - p` degrees of freedom.
pub fn solve_least_squares(x: &DesignMatrix, y: &[f64]) -> Result<FitSummary> {
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response".into()));
    }
    let qr = x.factor()?;
    let coefficients = qr.solve(y);
    let fitted = x.mul_vec(&coefficients);
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    let df = x.nrows() - x.ncols();
    let residual_variance = if df > 0 { rss / df as f64 } else { f64::NAN };
    let covariance = square(&qr.unscaled_covariance(), x.ncols(), residual_variance);
    Ok(FitSummary::from_parts(
        x.labels().to_vec(),
        coefficients,
        covariance,
        residual_variance,
        df,
        Family::Gaussian,
        true,
    ))
}
