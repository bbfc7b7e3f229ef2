//! `pddid` command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pddid_core::experiments::Estimator;
use pddid_core::io::{
    load_panel_csv, power_chart_svg, results_json_string, write_panel_csv_to, write_report_csv_to, Curve,
    ResultDocument,
};
use pddid_core::{
    estimate_did, pd_did, power_curve, run_grid, DgpConfig, Family, Method, ModelSpec, PanelDataset, PermutationConfig,
    ScenarioGrid, TrendGranularity,
};

const THREADS_VAR: &str = "PDDID_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "pddid",
    version,
    about = "Difference-in-differences estimation with permutational detrending"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit an original or detrending DID model to a panel CSV and write JSON.
    Fit(FitArgs),
    /// Run the permutational detrending test on a panel CSV and write JSON.
    Permtest(PermArgs),
    /// Simulate a panel dataset and write it as CSV.
    Simulate(SimArgs),
    /// Run a Monte Carlo size/power grid and write the report.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliMethod {
    Original,
    Detrending,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliFamily {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliTrend {
    PerGroup,
    PerArm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Size,
    Power,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Panel CSV with unit_id, group_id, arm, time, outcome and optional z_* columns
    input: PathBuf,
    /// Last pre-intervention time; records with time > cutoff are post
    #[arg(long)]
    cutoff: f64,
    #[arg(long, value_enum)]
    method: Option<CliMethod>,
    #[arg(long, value_enum, default_value = "gaussian")]
    family: CliFamily,
    #[arg(long, value_enum, default_value = "per-group")]
    trend: CliTrend,
    /// Polynomial degree of the trend terms
    #[arg(long, default_value_t = 1)]
    degree: u32,
    /// Ignore z_* covariate columns
    #[arg(long)]
    no_covariates: bool,
    /// Output path; standard output when omitted
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl ModelArgs {
    /// Covariates are used whenever the dataset has any, unless disabled.
    fn spec(&self, default_method: CliMethod, data: &PanelDataset) -> ModelSpec {
        let method = match self.method.unwrap_or(default_method) {
            CliMethod::Original => Method::Original,
            CliMethod::Detrending => Method::Detrending,
        };
        let family = match self.family {
            CliFamily::Gaussian => Family::Gaussian,
            CliFamily::Binomial => Family::Binomial,
        };
        let granularity = match self.trend {
            CliTrend::PerGroup => TrendGranularity::PerGroup,
            CliTrend::PerArm => TrendGranularity::PerArm,
        };
        let base = match method {
            Method::Original => ModelSpec::original(),
            Method::Detrending => ModelSpec::detrending(),
        };
        base.with_family(family)
            .with_trend(granularity, self.degree)
            .with_covariates(!self.no_covariates && !data.covariate_names().is_empty())
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct PermArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of permutation replicates
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Two-sided level of the confidence interval
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

/// Data-generating process overrides; unset fields keep the defaults.
#[derive(Debug, Args)]
struct DgpArgs {
    /// Start from the alternative setting (alpha_arm 5, unit variances)
    #[arg(long)]
    second_setting: bool,
    #[arg(long)]
    alpha_arm: Option<f64>,
    #[arg(long)]
    sigma_u: Option<f64>,
    #[arg(long)]
    sigma_v: Option<f64>,
    #[arg(long)]
    sigma_w: Option<f64>,
    #[arg(long)]
    groups_per_arm: Option<usize>,
    #[arg(long)]
    n_per_group: Option<usize>,
    #[arg(long)]
    study_length: Option<f64>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    obs_min: Option<usize>,
    #[arg(long)]
    obs_max: Option<usize>,
}

impl DgpArgs {
    fn config(&self) -> DgpConfig {
        let mut c = if self.second_setting {
            DgpConfig::second_setting()
        } else {
            DgpConfig::default()
        };
        c.alpha_arm = self.alpha_arm.unwrap_or(c.alpha_arm);
        c.sigma_u = self.sigma_u.unwrap_or(c.sigma_u);
        c.sigma_v = self.sigma_v.unwrap_or(c.sigma_v);
        c.sigma_w = self.sigma_w.unwrap_or(c.sigma_w);
        c.groups_per_arm = self.groups_per_arm.unwrap_or(c.groups_per_arm);
        c.n_per_group = self.n_per_group.unwrap_or(c.n_per_group);
        c.study_length = self.study_length.unwrap_or(c.study_length);
        c.cutoff = self.cutoff.unwrap_or(c.cutoff);
        c.obs_min = self.obs_min.unwrap_or(c.obs_min);
        c.obs_max = self.obs_max.unwrap_or(c.obs_max);
        c
    }
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Trend slope: intervention drifts by +l and reference by -l over the window
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    l: f64,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[command(flatten)]
    dgp: DgpArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "size")]
    preset: Preset,
    /// Use the full-scale grid instead of the desk-scale one
    #[arg(long)]
    full: bool,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gammas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ls: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    rhos: Option<Vec<f64>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_estimator)]
    methods: Option<Vec<Estimator>>,
    /// Permutation replicates for the pd method
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    #[arg(long, default_value_t = 0)]
    perm_seed: u64,
    /// Rejection level
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "per-group")]
    trend: CliTrend,
    #[command(flatten)]
    dgp: DgpArgs,
    /// Report CSV path; standard output when omitted
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write the report as JSON
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also write an SVG chart of rejection rate against gamma
    #[arg(long)]
    chart: Option<PathBuf>,
}

fn parse_estimator(s: &str) -> std::result::Result<Estimator, String> {
    s.parse()
}

impl ExperimentArgs {
    fn grid(&self) -> ScenarioGrid {
        let mut g = match (self.preset, self.full) {
            (Preset::Size, false) => ScenarioGrid::size_desk(),
            (Preset::Size, true) => ScenarioGrid::size_full(),
            (Preset::Power, false) => ScenarioGrid::power_desk(),
            (Preset::Power, true) => ScenarioGrid::power_full(),
        };
        if let Some(v) = &self.gammas {
            g.gammas = v.clone();
        }
        if let Some(v) = &self.ls {
            g.ls = v.clone();
        }
        if let Some(v) = &self.rhos {
            g.rhos = v.clone();
        }
        if let Some(v) = &self.methods {
            g.methods = v.clone();
        }
        g.replications = self.replications.unwrap_or(g.replications);
        g.perm.m = self.m.unwrap_or(g.perm.m);
        g.perm.seed = self.perm_seed;
        g.master_seed = self.master_seed;
        if let Some(a) = self.alpha {
            g.alpha = a;
            g.perm.alpha = a;
        }
        g.trend_granularity = match self.trend {
            CliTrend::PerGroup => TrendGranularity::PerGroup,
            CliTrend::PerArm => TrendGranularity::PerArm,
        };
        g.dgp_base = self.dgp.config();
        g
    }
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn fit(args: &FitArgs) -> Result<()> {
    let m = &args.model;
    let data = load_panel_csv(&m.input, m.cutoff).with_context(|| format!("reading {}", m.input.display()))?;
    let est = estimate_did(&data, &m.spec(CliMethod::Original, &data))?;
    let text = results_json_string(&ResultDocument::did(&est))?;
    emit(m.output.as_deref(), text.as_bytes())
}

fn permtest(args: &PermArgs) -> Result<()> {
    let m = &args.model;
    let data = load_panel_csv(&m.input, m.cutoff).with_context(|| format!("reading {}", m.input.display()))?;
    let cfg = PermutationConfig {
        m: args.m,
        seed: args.seed,
        alpha: args.alpha,
    };
    let res = pd_did(&data, &m.spec(CliMethod::Detrending, &data), &cfg)?;
    if res.failures > 0 {
        eprintln!("warning: {} of {} permutation refits failed", res.failures, cfg.m);
    }
    let text = results_json_string(&ResultDocument::pd(&res))?;
    emit(m.output.as_deref(), text.as_bytes())
}

fn simulate(args: &SimArgs) -> Result<()> {
    let config = DgpConfig {
        gamma: args.gamma,
        trend_l: args.l,
        rho: args.rho,
        seed: args.seed,
        ..args.dgp.config()
    };
    let data = config.simulate()?;
    let mut buf = Vec::new();
    write_panel_csv_to(&data, &mut buf)?;
    emit(args.output.as_deref(), &buf)
}

fn chart_curves(report: &pddid_core::ExperimentReport, grid: &ScenarioGrid) -> Result<Vec<Curve>> {
    let mut curves = Vec::new();
    for &method in &grid.methods {
        for &rho in &grid.rhos {
            for &l in &grid.ls {
                let points = power_curve(report, method, l, rho)?;
                let label = format!("{method}, l = {l}, rho = {rho}");
                let xy = points
                    .into_iter()
                    .filter(|p| p.1.is_finite())
                    .map(|(g, rate, _)| (g, rate))
                    .collect::<Vec<_>>();
                if !xy.is_empty() {
                    curves.push((label, xy));
                }
            }
        }
    }
    Ok(curves)
}

fn experiment(args: &ExperimentArgs) -> Result<()> {
    let grid = args.grid();
    let report = run_grid(&grid)?;
    let failed: usize = report.rows.iter().map(|r| r.failures).sum();
    if failed > 0 {
        eprintln!("warning: {failed} estimator fits failed across the grid");
    }
    let mut csv = Vec::new();
    write_report_csv_to(&report, &mut csv)?;
    emit(args.output.as_deref(), &csv)?;
    if let Some(path) = &args.json {
        let text = results_json_string(&ResultDocument::experiment(&report, &grid))?;
        emit(Some(path), text.as_bytes())?;
    }
    if let Some(path) = &args.chart {
        let svg = power_chart_svg(&chart_curves(&report, &grid)?)?;
        emit(Some(path), svg.as_bytes())?;
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => bail!("{THREADS_VAR} must be a positive integer, got `{raw}`"),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Permtest(a) => permtest(a),
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
