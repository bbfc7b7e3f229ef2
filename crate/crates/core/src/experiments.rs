//! Scenario grids for size, bias and power of the three estimators.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::did::{estimate_did, ModelSpec, TrendGranularity};
use crate::error::{Error, Result};
use crate::perm::{pd_did, PermutationConfig};
use crate::rng::{derive_seed, stream};
use crate::sim::{simulate_panel, DgpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Original,
    Detrending,
    Pd,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Original, Estimator::Detrending, Estimator::Pd];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Original => "original",
            Estimator::Detrending => "detrending",
            Estimator::Pd => "pd",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "original" => Ok(Estimator::Original),
            "detrending" => Ok(Estimator::Detrending),
            "pd" => Ok(Estimator::Pd),
            other => Err(format!(
                "unknown method `{other}` (expected original, detrending or pd)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub gammas: Vec<f64>,
    pub ls: Vec<f64>,
    pub rhos: Vec<f64>,
    pub replications: usize,
    pub methods: Vec<Estimator>,
    pub perm: PermutationConfig,
    pub dgp_base: DgpConfig,
    pub trend_granularity: TrendGranularity,
    pub alpha: f64,
    pub master_seed: u64,
}

/// `lo, lo + step, ..., hi` built from integer multiples to avoid drift.
fn steps(lo_tenths: i32, hi_tenths: i32, denom: f64) -> Vec<f64> {
    (lo_tenths..=hi_tenths).map(|k| f64::from(k) / denom).collect()
}

impl ScenarioGrid {
    fn base(gammas: Vec<f64>, ls: Vec<f64>, rhos: Vec<f64>, replications: usize, m: usize) -> Self {
        Self {
            gammas,
            ls,
            rhos,
            replications,
            methods: Estimator::ALL.to_vec(),
            perm: PermutationConfig {
                m,
                seed: 0,
                alpha: 0.05,
            },
            dgp_base: DgpConfig::default(),
            trend_granularity: TrendGranularity::PerGroup,
            alpha: 0.05,
            master_seed: 0,
        }
    }

    /// Null-size grid at desk scale: `l` in {-0.2, 0, 0.2}, `rho` in {0, 0.5}.
    pub fn size_desk() -> Self {
        Self::base(vec![0.0], vec![-0.2, 0.0, 0.2], vec![0.0, 0.5], 500, 200)
    }

    /// Full null-size grid: 11 slopes by 3 correlations, 1000 replications.
    pub fn size_full() -> Self {
        Self::base(vec![0.0], steps(-5, 5, 10.0), vec![0.0, 0.5, 0.9], 1000, 1000)
    }

    /// Power grid at desk scale: `gamma` in {0, 0.1, ..., 0.5}, `rho = 0.5`.
    pub fn power_desk() -> Self {
        Self::base(steps(0, 5, 10.0), vec![-0.2, 0.0, 0.2], vec![0.5], 300, 200)
    }

    /// Full power grid: `gamma` in {0, 0.05, ..., 0.5}, 1000 replications.
    pub fn power_full() -> Self {
        Self::base(steps(0, 10, 20.0), vec![-0.2, 0.0, 0.2], vec![0.5], 1000, 1000)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() || self.ls.is_empty() || self.rhos.is_empty() {
            return Err(Error::ConfigInvalid("gamma, l and rho lists must be nonempty".into()));
        }
        if self.replications == 0 {
            return Err(Error::ConfigInvalid("replications must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::ConfigInvalid("at least one method is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::ConfigInvalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.methods.contains(&Estimator::Pd) {
            self.perm.validate()?;
        }
        for cell in self.cells() {
            self.cell_config(&cell, 0).validate()?;
        }
        Ok(())
    }

    /// Cells in `gamma`-major, then `l`, then `rho` order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &gamma in &self.gammas {
            for &l in &self.ls {
                for &rho in &self.rhos {
                    out.push(Cell { gamma, l, rho });
                }
            }
        }
        out
    }

    fn cell_config(&self, cell: &Cell, seed: u64) -> DgpConfig {
        DgpConfig {
            gamma: cell.gamma,
            trend_l: cell.l,
            rho: cell.rho,
            seed,
            ..self.dgp_base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub gamma: f64,
    pub l: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub gamma: f64,
    pub l: f64,
    pub rho: f64,
    pub method: Estimator,
    pub mean_estimate: f64,
    pub bias: f64,
    pub rejection_count: usize,
    pub rejection_rate: f64,
    pub replications: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

/// Estimate and rejection flag, or `None` when the fit failed.
type Outcome = Option<(f64, bool)>;

fn run_replicate(grid: &ScenarioGrid, cell: &Cell, cell_index: usize, r: usize) -> Vec<Outcome> {
    let rep_seed = derive_seed(derive_seed(grid.master_seed, cell_index as u64), r as u64);
    let config = grid.cell_config(cell, rep_seed);
    let Ok(data) = simulate_panel(&config, &mut stream(rep_seed, 0)) else {
        return vec![None; grid.methods.len()];
    };
    let detrending = ModelSpec::detrending().with_trend(grid.trend_granularity, 1);
    grid.methods
        .iter()
        .map(|method| match method {
            Estimator::Original => estimate_did(&data, &ModelSpec::original())
                .ok()
                .map(|e| (e.gamma_hat, e.p_value < grid.alpha)),
            Estimator::Detrending => estimate_did(&data, &detrending)
                .ok()
                .map(|e| (e.gamma_hat, e.p_value < grid.alpha)),
            Estimator::Pd => {
                let perm = PermutationConfig {
                    seed: derive_seed(rep_seed, grid.perm.seed),
                    ..grid.perm
                };
                pd_did(&data, &detrending, &perm)
                    .ok()
                    .map(|res| (res.gamma_hat, res.p_value < grid.alpha))
            }
        })
        .collect()
}

/// Simulate every cell `replications` times and apply each method to the
/// same datasets. Rows come out in cell order, methods in grid order.
pub fn run_grid(grid: &ScenarioGrid) -> Result<ExperimentReport> {
    grid.validate()?;
    let cells = grid.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..grid.replications).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<Vec<Outcome>> = jobs
        .par_iter()
        .map(|&(c, r)| run_replicate(grid, &cells[c], c, r))
        .collect();

    let mut rows = Vec::with_capacity(cells.len() * grid.methods.len());
    for (c, cell) in cells.iter().enumerate() {
        let block = &outcomes[c * grid.replications..(c + 1) * grid.replications];
        for (k, &method) in grid.methods.iter().enumerate() {
            let (mut sum, mut ok, mut rejected) = (0.0, 0usize, 0usize);
            for (estimate, reject) in block.iter().filter_map(|o| o[k]) {
                sum += estimate;
                ok += 1;
                rejected += usize::from(reject);
            }
            let mean_estimate = if ok > 0 { sum / ok as f64 } else { f64::NAN };
            rows.push(ReportRow {
                gamma: cell.gamma,
                l: cell.l,
                rho: cell.rho,
                method,
                mean_estimate,
                bias: mean_estimate - cell.gamma,
                rejection_count: rejected,
                rejection_rate: if ok > 0 { rejected as f64 / ok as f64 } else { f64::NAN },
                replications: grid.replications,
                failures: grid.replications - ok,
            });
        }
    }
    Ok(ExperimentReport { rows })
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

/// `(gamma, rejection_rate, mean_estimate)` for one method/l/rho slice,
/// ascending in `gamma`.
pub fn power_curve(report: &ExperimentReport, method: Estimator, l: f64, rho: f64) -> Result<Vec<(f64, f64, f64)>> {
    let mut points: Vec<(f64, f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.method == method && same(r.l, l) && same(r.rho, rho))
        .map(|r| (r.gamma, r.rejection_rate, r.mean_estimate))
        .collect();
    if points.is_empty() {
        return Err(Error::SliceEmpty {
            method: method.to_string(),
            l,
            rho,
        });
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(points)
}
