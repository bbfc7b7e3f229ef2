//! Panel observations and study-window metadata.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Intervention,
    Reference,
}

impl Arm {
    pub fn indicator(self) -> f64 {
        match self {
            Arm::Intervention => 1.0,
            Arm::Reference => 0.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Arm::Intervention => "I",
            Arm::Reference => "R",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Arm::Intervention => Arm::Reference,
            Arm::Reference => Arm::Intervention,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Intervention => "intervention",
            Arm::Reference => "reference",
        })
    }
}

/// One outcome measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub unit_id: String,
    pub group_id: String,
    pub arm: Arm,
    /// Days since study start.
    pub time: f64,
    pub outcome: f64,
    pub covariates: Vec<f64>,
}

/// Validated collection of observations. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    records: Vec<ObservationRecord>,
    study_length: f64,
    cutoff: f64,
    covariate_names: Vec<String>,
}

impl PanelDataset {
    pub fn new(
        records: Vec<ObservationRecord>,
        study_length: f64,
        cutoff: f64,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if !(study_length.is_finite() && study_length > 0.0) {
            return Err(Error::InvalidDataset(format!(
                "study length must be positive, got {study_length}"
            )));
        }
        if !(cutoff > 0.0 && cutoff < study_length) {
            return Err(Error::InvalidDataset(format!(
                "cutoff {cutoff} must lie strictly inside (0, {study_length})"
            )));
        }
        let mut arms: BTreeMap<&str, Arm> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if !(r.time.is_finite() && (0.0..=study_length).contains(&r.time)) {
                return Err(Error::InvalidDataset(format!(
                    "record {i}: time {} outside [0, {study_length}]",
                    r.time
                )));
            }
            if !r.outcome.is_finite() {
                return Err(Error::NonFinite(format!("outcome of record {i}")));
            }
            if r.covariates.len() != covariate_names.len() {
                return Err(Error::InvalidDataset(format!(
                    "record {i} has {} covariates, expected {}",
                    r.covariates.len(),
                    covariate_names.len()
                )));
            }
            if r.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("covariates of record {i}")));
            }
            match arms.insert(r.group_id.as_str(), r.arm) {
                Some(prev) if prev != r.arm => {
                    return Err(Error::InconsistentArm(r.group_id.clone()));
                }
                _ => {}
            }
        }
        Ok(Self {
            records,
            study_length,
            cutoff,
            covariate_names,
        })
    }

    /// Same slots with records replaced; caller guarantees validity.
    pub(crate) fn with_records(&self, records: Vec<ObservationRecord>) -> Self {
        Self {
            records,
            study_length: self.study_length,
            cutoff: self.cutoff,
            covariate_names: self.covariate_names.clone(),
        }
    }

    pub fn records(&self) -> &[ObservationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn study_length(&self) -> f64 {
        self.study_length
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Post-period indicator; records exactly at the cutoff are pre-period.
    pub fn is_post(&self, record: &ObservationRecord) -> bool {
        record.time > self.cutoff
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.outcome).collect()
    }

    /// Record counts per (arm, post) cell, indexed `[arm == reference][post]`.
    pub fn cell_counts(&self) -> [[usize; 2]; 2] {
        let mut counts = [[0; 2]; 2];
        for r in &self.records {
            let a = usize::from(r.arm == Arm::Reference);
            counts[a][usize::from(self.is_post(r))] += 1;
        }
        counts
    }

    /// Record indices of each arm, intervention first.
    pub fn arm_slots(&self) -> [Vec<usize>; 2] {
        let mut slots = [Vec::new(), Vec::new()];
        for (i, r) in self.records.iter().enumerate() {
            slots[usize::from(r.arm == Arm::Reference)].push(i);
        }
        slots
    }

    /// Distinct group ids of an arm in sorted order.
    pub fn groups_in(&self, arm: Arm) -> Vec<String> {
        let mut groups: Vec<String> = self
            .records
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| r.group_id.clone())
            .collect();
        groups.sort();
        groups.dedup();
        groups
    }
}
