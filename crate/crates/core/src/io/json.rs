//! Canonical result JSON.
//!
//! Documents have the top-level keys `schema_version`, `kind`, `payload`,
//! `seed_info` in that order. Keys inside payloads follow struct field order.
//! Floats are written with 17 significant digits so they parse back to the
//! identical value; non-finite values are written as `null`.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::ser::Formatter;

use crate::did::{DidEstimate, Method, TrendGranularity};
use crate::error::{Error, Result};
use crate::experiments::{ExperimentReport, ReportRow, ScenarioGrid};
use crate::glm::Family;
use crate::perm::PdDidResult;

pub const SCHEMA_VERSION: &str = "1";

fn nullable_f64<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub label: String,
    #[serde(deserialize_with = "nullable_f64")]
    pub estimate: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub se: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub statistic: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidPayload {
    pub method: Method,
    pub family: Family,
    pub trend_granularity: TrendGranularity,
    pub trend_degree: u32,
    pub include_covariates: bool,
    #[serde(deserialize_with = "nullable_f64")]
    pub gamma_hat: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub se: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub p_value: f64,
    pub degrees_of_freedom: usize,
    #[serde(deserialize_with = "nullable_f64")]
    pub residual_variance: f64,
    pub converged: bool,
    pub coefficients: Vec<CoefficientRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdPayload {
    pub method: Method,
    pub family: Family,
    pub trend_granularity: TrendGranularity,
    pub trend_degree: u32,
    pub include_covariates: bool,
    pub gamma_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub m: usize,
    pub seed: u64,
    pub failures: usize,
    pub null_mean: f64,
    pub null_draws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPayload {
    pub gammas: Vec<f64>,
    pub ls: Vec<f64>,
    pub rhos: Vec<f64>,
    pub replications: usize,
    pub alpha: f64,
    pub rows: Vec<ExperimentRowOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRowOut {
    pub gamma: f64,
    pub l: f64,
    pub rho: f64,
    pub method: String,
    #[serde(deserialize_with = "nullable_f64")]
    pub mean_estimate: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub bias: f64,
    pub rejection_count: usize,
    #[serde(deserialize_with = "nullable_f64")]
    pub rejection_rate: f64,
    pub replications: usize,
    pub failures: usize,
}

impl From<&ReportRow> for ExperimentRowOut {
    fn from(r: &ReportRow) -> Self {
        Self {
            gamma: r.gamma,
            l: r.l,
            rho: r.rho,
            method: r.method.to_string(),
            mean_estimate: r.mean_estimate,
            bias: r.bias,
            rejection_count: r.rejection_count,
            rejection_rate: r.rejection_rate,
            replications: r.replications,
            failures: r.failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub perm_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum ResultBody {
    DidEstimate(DidPayload),
    PdDid(PdPayload),
    Experiment(ExperimentPayload),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: String,
    #[serde(flatten)]
    pub body: ResultBody,
    pub seed_info: Option<SeedInfo>,
}

impl ResultDocument {
    pub fn did(est: &DidEstimate) -> Self {
        let f = &est.fit;
        let coefficients = (0..f.coefficients.len())
            .map(|k| CoefficientRow {
                label: f.labels[k].clone(),
                estimate: f.coefficients[k],
                se: f.standard_errors[k],
                statistic: f.test_statistics[k],
                p_value: f.p_values[k],
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION.into(),
            body: ResultBody::DidEstimate(DidPayload {
                method: est.spec.method,
                family: est.spec.family,
                trend_granularity: est.spec.trend_granularity,
                trend_degree: est.spec.trend_degree,
                include_covariates: est.spec.include_covariates,
                gamma_hat: est.gamma_hat,
                se: est.se,
                p_value: est.p_value,
                degrees_of_freedom: f.degrees_of_freedom,
                residual_variance: f.residual_variance,
                converged: f.converged,
                coefficients,
            }),
            seed_info: None,
        }
    }

    pub fn pd(res: &PdDidResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            body: ResultBody::PdDid(PdPayload {
                method: res.spec.method,
                family: res.spec.family,
                trend_granularity: res.spec.trend_granularity,
                trend_degree: res.spec.trend_degree,
                include_covariates: res.spec.include_covariates,
                gamma_hat: res.gamma_hat,
                ci_low: res.ci_low,
                ci_high: res.ci_high,
                p_value: res.p_value,
                alpha: res.config.alpha,
                m: res.config.m,
                seed: res.config.seed,
                failures: res.failures,
                null_mean: res.null.mean(),
                null_draws: res.null.draws().to_vec(),
            }),
            seed_info: Some(SeedInfo {
                seed: res.config.seed,
                perm_seed: None,
                m: Some(res.config.m),
            }),
        }
    }

    pub fn experiment(report: &ExperimentReport, grid: &ScenarioGrid) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            body: ResultBody::Experiment(ExperimentPayload {
                gammas: grid.gammas.clone(),
                ls: grid.ls.clone(),
                rhos: grid.rhos.clone(),
                replications: grid.replications,
                alpha: grid.alpha,
                rows: report.rows.iter().map(ExperimentRowOut::from).collect(),
            }),
            seed_info: Some(SeedInfo {
                seed: grid.master_seed,
                perm_seed: Some(grid.perm.seed),
                m: Some(grid.perm.m),
            }),
        }
    }
}

/// Compact JSON with every float printed to 17 significant digits.
struct CanonicalFloats;

impl Formatter for CanonicalFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn results_json_string(doc: &ResultDocument) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFloats);
    doc.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_results_json(doc: &ResultDocument, path: impl AsRef<Path>) -> Result<()> {
    let text = results_json_string(doc)?;
    let mut file = File::create(path)?;
    file.write_all(text.as_bytes())?;
    file.flush()?;
    Ok(())
}

pub fn read_results_json(path: impl AsRef<Path>) -> Result<ResultDocument> {
    let text = std::fs::read_to_string(path)?;
    let doc: ResultDocument = serde_json::from_str(&text)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidDataset(format!(
            "unsupported schema_version `{}`",
            doc.schema_version
        )));
    }
    Ok(doc)
}
