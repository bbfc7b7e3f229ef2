//! Design assembly and single-shot DID estimation.
//!
//! Columns always start `intercept, arm, post, gamma` where `gamma` is the
//! arm-by-period interaction. The detrending model appends one polynomial
//! time-trend column per trend unit and degree, with time rescaled to the
//! study window, then any covariates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{fit_logistic, solve_least_squares, DesignMatrix, Family, FitSummary, IrlsOptions};
use crate::panel::{Arm, PanelDataset};

pub const GAMMA_LABEL: &str = "gamma";
pub const MAX_TREND_DEGREE: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Original,
    Detrending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendGranularity {
    PerGroup,
    PerArm,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "original" => Ok(Method::Original),
            "detrending" => Ok(Method::Detrending),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Original => "original",
            Method::Detrending => "detrending",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub method: Method,
    pub family: Family,
    pub trend_granularity: TrendGranularity,
    pub trend_degree: u32,
    pub include_covariates: bool,
}

impl ModelSpec {
    pub fn original() -> Self {
        Self {
            method: Method::Original,
            family: Family::Gaussian,
            trend_granularity: TrendGranularity::PerGroup,
            trend_degree: 1,
            include_covariates: false,
        }
    }

    pub fn detrending() -> Self {
        Self {
            method: Method::Detrending,
            ..Self::original()
        }
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn with_covariates(mut self, include: bool) -> Self {
        self.include_covariates = include;
        self
    }

    pub fn with_trend(mut self, granularity: TrendGranularity, degree: u32) -> Self {
        self.trend_granularity = granularity;
        self.trend_degree = degree;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.method == Method::Detrending && !(1..=MAX_TREND_DEGREE).contains(&self.trend_degree) {
            return Err(Error::InvalidSpec(format!(
                "trend degree must be in 1..={MAX_TREND_DEGREE}, got {}",
                self.trend_degree
            )));
        }
        Ok(())
    }
}

/// Intervention effect extracted from a fitted DID model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidEstimate {
    pub gamma_hat: f64,
    pub se: f64,
    pub p_value: f64,
    pub fit: FitSummary,
    pub spec: ModelSpec,
}

/// Trend units with the predicate selecting their records.
fn trend_units(dataset: &PanelDataset, granularity: TrendGranularity) -> Vec<(String, TrendUnit)> {
    match granularity {
        TrendGranularity::PerArm => vec![
            (Arm::Intervention.label().to_string(), TrendUnit::Arm(Arm::Intervention)),
            (Arm::Reference.label().to_string(), TrendUnit::Arm(Arm::Reference)),
        ],
        TrendGranularity::PerGroup => {
            let mut groups = dataset.groups_in(Arm::Intervention);
            groups.extend(dataset.groups_in(Arm::Reference));
            groups.into_iter().map(|g| (g.clone(), TrendUnit::Group(g))).collect()
        }
    }
}

enum TrendUnit {
    Arm(Arm),
    Group(String),
}

fn check_cells(dataset: &PanelDataset) -> Result<()> {
    let counts = dataset.cell_counts();
    for (a, arm) in [Arm::Intervention, Arm::Reference].into_iter().enumerate() {
        for (p, period) in ["pre", "post"].into_iter().enumerate() {
            if counts[a][p] == 0 {
                return Err(Error::EmptyCell(format!("{arm}/{period}")));
            }
        }
    }
    Ok(())
}

/// Assemble the regressor matrix and response for `spec`.
pub fn build_design(dataset: &PanelDataset, spec: &ModelSpec) -> Result<(DesignMatrix, Vec<f64>)> {
    spec.validate()?;
    if spec.include_covariates && dataset.covariate_names().is_empty() {
        return Err(Error::InvalidSpec(
            "covariates requested but the dataset has none".into(),
        ));
    }
    check_cells(dataset)?;

    let records = dataset.records();
    let n = records.len();
    let arm: Vec<f64> = records.iter().map(|r| r.arm.indicator()).collect();
    let post: Vec<f64> = records
        .iter()
        .map(|r| if dataset.is_post(r) { 1.0 } else { 0.0 })
        .collect();
    let interaction: Vec<f64> = arm.iter().zip(&post).map(|(a, b)| a * b).collect();

    let mut labels = vec![
        "intercept".to_string(),
        "arm".to_string(),
        "post".to_string(),
        GAMMA_LABEL.to_string(),
    ];
    let mut columns = vec![vec![1.0; n], arm, post, interaction];

    if spec.method == Method::Detrending {
        let scale = dataset.study_length();
        for (name, unit) in trend_units(dataset, spec.trend_granularity) {
            for d in 1..=spec.trend_degree {
                let col = records
                    .iter()
                    .map(|r| {
                        let inside = match &unit {
                            TrendUnit::Arm(a) => r.arm == *a,
                            TrendUnit::Group(g) => r.group_id == *g,
                        };
                        if inside {
                            (r.time / scale).powi(d as i32)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                labels.push(if d == 1 {
                    format!("trend[{name}]")
                } else {
                    format!("trend[{name}]^{d}")
                });
                columns.push(col);
            }
        }
    }

    if spec.include_covariates {
        for (k, name) in dataset.covariate_names().iter().enumerate() {
            labels.push(format!("z_{name}"));
            columns.push(records.iter().map(|r| r.covariates[k]).collect());
        }
    }

    let x = DesignMatrix::from_columns(labels, columns)?;
    Ok((x, dataset.outcomes()))
}

pub(crate) fn fit_design(x: &DesignMatrix, y: &[f64], family: Family) -> Result<FitSummary> {
    let fitted = match family {
        Family::Gaussian => solve_least_squares(x, y),
        Family::Binomial => {
            let opts = IrlsOptions::default();
            fit_logistic(x, y, opts.max_iter, opts.tol)
        }
    };
    fitted.map_err(|e| match e {
        Error::RankDeficient { columns } if trends_cause_deficiency(x) => Error::CollinearTrend { columns },
        other => other,
    })
}

fn is_trend(label: &str) -> bool {
    label.starts_with("trend[")
}

/// True when the design minus its trend columns has full rank.
fn trends_cause_deficiency(x: &DesignMatrix) -> bool {
    let (labels, columns): (Vec<String>, Vec<Vec<f64>>) = x
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| !is_trend(l))
        .map(|(j, l)| (l.clone(), x.column(j).to_vec()))
        .unzip();
    if labels.len() == x.ncols() {
        return false;
    }
    DesignMatrix::from_columns(labels, columns)
        .and_then(|d| d.factor().map(|_| ()))
        .is_ok()
}

/// Fit the original or detrending DID model and extract the interaction.
pub fn estimate_did(dataset: &PanelDataset, spec: &ModelSpec) -> Result<DidEstimate> {
    let (x, y) = build_design(dataset, spec)?;
    let fit = fit_design(&x, &y, spec.family)?;
    let k = fit.index_of(GAMMA_LABEL).expect("design always has a gamma column");
    Ok(DidEstimate {
        gamma_hat: fit.coefficients[k],
        se: fit.standard_errors[k],
        p_value: fit.p_values[k],
        fit,
        spec: *spec,
    })
}

/// Split-sample fits `Y = a1 + b1 B` (intervention) and `Y = a0 + b0 B`
/// (reference). Returns `(b1, b0, b1 - b0)`, which must equal the joint
/// original-model interaction.
pub fn gamma_identity_check(dataset: &PanelDataset) -> Result<(f64, f64, f64)> {
    check_cells(dataset)?;
    let slope = |arm: Arm| -> Result<f64> {
        let (post, y): (Vec<f64>, Vec<f64>) = dataset
            .records()
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| (if dataset.is_post(r) { 1.0 } else { 0.0 }, r.outcome))
            .unzip();
        let x = DesignMatrix::from_columns(vec!["intercept".into(), "post".into()], vec![vec![1.0; y.len()], post])?;
        Ok(solve_least_squares(&x, &y)?.coefficients[1])
    };
    let b1 = slope(Arm::Intervention)?;
    let b0 = slope(Arm::Reference)?;
    Ok((b1, b0, b1 - b0))
}
