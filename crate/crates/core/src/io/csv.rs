use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::ExperimentReport;
use crate::panel::{Arm, ObservationRecord, PanelDataset};

const REQUIRED: [&str; 5] = ["unit_id", "group_id", "arm", "time", "outcome"];
const COVARIATE_PREFIX: &str = "z_";

pub const REPORT_HEADER: [&str; 9] = [
    "gamma",
    "l",
    "rho",
    "method",
    "mean_estimate",
    "bias",
    "rejection_rate",
    "replications",
    "failures",
];

fn parse_arm(row: usize, raw: &str) -> Result<Arm> {
    match raw.trim() {
        s if s.eq_ignore_ascii_case("i") || s == "1" => Ok(Arm::Intervention),
        s if s.eq_ignore_ascii_case("r") || s == "0" => Ok(Arm::Reference),
        _ => Err(Error::BadArmLabel {
            row,
            value: raw.to_string(),
        }),
    }
}

fn parse_number(row: usize, column: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::NonNumeric {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })
}

/// Load a panel from CSV. The study length is the largest observed time.
pub fn load_panel_csv(path: impl AsRef<Path>, cutoff: f64) -> Result<PanelDataset> {
    read_panel_csv(File::open(path)?, cutoff)
}

/// Parse panel CSV from any reader. Rows are numbered from 1 after the header.
pub fn read_panel_csv<R: Read>(reader: R, cutoff: f64) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let [unit, group, arm, time, outcome] = [
        index(REQUIRED[0])?,
        index(REQUIRED[1])?,
        index(REQUIRED[2])?,
        index(REQUIRED[3])?,
        index(REQUIRED[4])?,
    ];
    let covariates: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix(COVARIATE_PREFIX).map(|name| (i, name.to_string())))
        .collect();

    let mut records = Vec::new();
    let mut arms = std::collections::HashMap::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let n = k + 1;
        let record = ObservationRecord {
            unit_id: row[unit].to_string(),
            group_id: row[group].to_string(),
            arm: parse_arm(n, &row[arm])?,
            time: parse_number(n, REQUIRED[3], &row[time])?,
            outcome: parse_number(n, REQUIRED[4], &row[outcome])?,
            covariates: covariates
                .iter()
                .map(|(i, name)| parse_number(n, &format!("{COVARIATE_PREFIX}{name}"), &row[*i]))
                .collect::<Result<_>>()?,
        };
        if *arms.entry(record.group_id.clone()).or_insert(record.arm) != record.arm {
            return Err(Error::InconsistentArm(record.group_id));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::InvalidDataset("CSV has no data rows".into()));
    }
    let study_length = records.iter().map(|r| r.time).fold(f64::NEG_INFINITY, f64::max);
    let names = covariates.into_iter().map(|(_, n)| n).collect();
    PanelDataset::new(records, study_length, cutoff, names)
}

pub fn write_panel_csv(dataset: &PanelDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut file = File::create(path)?;
    write_panel_csv_to(dataset, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn write_panel_csv_to<W: Write>(dataset: &PanelDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    header.extend(
        dataset
            .covariate_names()
            .iter()
            .map(|n| format!("{COVARIATE_PREFIX}{n}")),
    );
    w.write_record(&header)?;
    for r in dataset.records() {
        let mut fields = vec![
            r.unit_id.clone(),
            r.group_id.clone(),
            r.arm.label().to_string(),
            r.time.to_string(),
            r.outcome.to_string(),
        ];
        fields.extend(r.covariates.iter().map(f64::to_string));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_csv(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    let mut file = File::create(path)?;
    write_report_csv_to(report, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn write_report_csv_to<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for row in &report.rows {
        w.write_record([
            row.gamma.to_string(),
            row.l.to_string(),
            row.rho.to_string(),
            row.method.to_string(),
            row.mean_estimate.to_string(),
            row.bias.to_string(),
            row.rejection_rate.to_string(),
            row.replications.to_string(),
            row.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
