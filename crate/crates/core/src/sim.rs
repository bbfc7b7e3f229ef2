//! Panel data-generating process for the simulation studies.
//!
//! `Y = gamma * I + lambda_g * t + alpha_g + u_g + v_i + w_it` with a random
//! group effect `u_g`, equicorrelated individual effects `v_i` and stationary
//! AR(1) noise `w` along each individual's visits.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Arm, ObservationRecord, PanelDataset};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub gamma: f64,
    /// Trend slope parameter: intervention groups drift by `+l` over the study
    /// window, reference groups by `-l`.
    pub trend_l: f64,
    pub rho: f64,
    pub alpha_arm: f64,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub sigma_w: f64,
    pub groups_per_arm: usize,
    pub n_per_group: usize,
    pub study_length: f64,
    pub cutoff: f64,
    pub obs_min: usize,
    pub obs_max: usize,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            trend_l: 0.0,
            rho: 0.0,
            alpha_arm: 0.5,
            sigma_u: 0.1,
            sigma_v: 1.0,
            sigma_w: 0.1,
            groups_per_arm: 2,
            n_per_group: 200,
            study_length: 365.0,
            cutoff: 182.0,
            obs_min: 1,
            obs_max: 7,
            seed: 0,
        }
    }
}

impl DgpConfig {
    /// Alternative parameter setting with larger arm offsets and unit variances.
    pub fn second_setting() -> Self {
        Self {
            alpha_arm: 5.0,
            sigma_u: 1.0,
            sigma_v: 1.0,
            sigma_w: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        for (name, v) in [
            ("gamma", self.gamma),
            ("trend_l", self.trend_l),
            ("alpha_arm", self.alpha_arm),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        for (name, s) in [
            ("sigma_u", self.sigma_u),
            ("sigma_v", self.sigma_v),
            ("sigma_w", self.sigma_w),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("{name} must be a nonnegative real, got {s}"));
            }
        }
        if self.groups_per_arm == 0 || self.n_per_group == 0 {
            return bad("groups_per_arm and n_per_group must be positive".into());
        }
        if !(self.study_length.is_finite() && self.study_length >= 1.0) {
            return bad(format!(
                "study_length must be at least one day, got {}",
                self.study_length
            ));
        }
        if !(self.cutoff > 0.0 && self.cutoff < self.study_length) {
            return bad(format!(
                "cutoff {} must lie inside (0, {})",
                self.cutoff, self.study_length
            ));
        }
        let days = self.study_length.floor() as usize;
        if self.obs_min == 0 || self.obs_min > self.obs_max || self.obs_max > days {
            return bad(format!(
                "need 1 <= obs_min <= obs_max <= {days}, got {}..{}",
                self.obs_min, self.obs_max
            ));
        }
        Ok(())
    }

    /// Generate the dataset for this configuration's own seed.
    pub fn simulate(&self) -> Result<PanelDataset> {
        simulate_panel(self, &mut stream(self.seed, 0))
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

/// `v_i = sqrt(rho) a + sqrt(1 - rho) b_i` with shared `a` and independent
/// `b_i`, all `N(0, sigma^2)`. Each entry has variance `sigma^2` and every
/// pair has correlation `rho`.
pub fn correlated_effects<R: Rng + ?Sized>(n: usize, rho: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    let shared = normal(rng, sigma);
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    (0..n).map(|_| a * shared + b * normal(rng, sigma)).collect()
}

/// Stationary AR(1) path with marginal variance `sigma^2` and lag-one
/// correlation `rho`.
pub fn ar1_path<R: Rng + ?Sized>(k: usize, rho: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    let innovation = sigma * (1.0 - rho * rho).sqrt();
    let mut path = Vec::with_capacity(k);
    let mut prev = normal(rng, sigma);
    path.push(prev);
    for _ in 1..k {
        prev = rho * prev + normal(rng, innovation);
        path.push(prev);
    }
    path.truncate(k);
    path
}

pub fn simulate_panel<R: Rng + ?Sized>(config: &DgpConfig, rng: &mut R) -> Result<PanelDataset> {
    config.validate()?;
    let days = config.study_length.floor() as usize;
    let mut records =
        Vec::with_capacity(2 * config.groups_per_arm * config.n_per_group * (config.obs_min + config.obs_max) / 2);
    for arm in [Arm::Intervention, Arm::Reference] {
        let sign = if arm == Arm::Intervention { 1.0 } else { -1.0 };
        let alpha_g = sign * config.alpha_arm;
        let slope = sign * config.trend_l / config.study_length;
        for g in 1..=config.groups_per_arm {
            let group_id = format!("{}{g}", arm.label());
            let u_g = normal(rng, config.sigma_u);
            let v = correlated_effects(config.n_per_group, config.rho, config.sigma_v, rng);
            for (i, v_i) in v.into_iter().enumerate() {
                let k = rng.random_range(config.obs_min..=config.obs_max);
                let mut visits: Vec<usize> = sample(rng, days, k).into_iter().map(|d| d + 1).collect();
                visits.sort_unstable();
                let w = ar1_path(k, config.rho, config.sigma_w, rng);
                let unit_id = format!("{group_id}.{i}");
                for (day, w_it) in visits.into_iter().zip(w) {
                    let t = day as f64;
                    let treated = if arm == Arm::Intervention && t > config.cutoff {
                        1.0
                    } else {
                        0.0
                    };
                    records.push(ObservationRecord {
                        unit_id: unit_id.clone(),
                        group_id: group_id.clone(),
                        arm,
                        time: t,
                        outcome: config.gamma * treated + slope * t + alpha_g + u_g + v_i + w_it,
                        covariates: Vec::new(),
                    });
                }
            }
        }
    }
    PanelDataset::new(records, config.study_length, config.cutoff, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::did::{estimate_did, ModelSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noiseless(gamma: f64, l: f64) -> DgpConfig {
        DgpConfig {
            gamma,
            trend_l: l,
            sigma_u: 0.0,
            sigma_v: 0.0,
            sigma_w: 0.0,
            ..DgpConfig::default()
        }
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn variance(a: &[f64]) -> f64 {
        let n = a.len() as f64;
        let m = a.iter().sum::<f64>() / n;
        a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn degenerate_arms_are_constant() {
        let ds = noiseless(0.0, 0.0).simulate().unwrap();
        for r in ds.records() {
            let expected = if r.arm == Arm::Intervention { 0.5 } else { -0.5 };
            assert_eq!(r.outcome, expected);
        }
    }

    #[test]
    fn noiseless_outcomes_lie_on_arm_lines() {
        let cfg = noiseless(0.25, 0.2);
        let ds = cfg.simulate().unwrap();
        for r in ds.records() {
            let s = if r.arm == Arm::Intervention { 1.0 } else { -1.0 };
            let post = if r.arm == Arm::Intervention && r.time > 182.0 {
                0.25
            } else {
                0.0
            };
            let line = s * 0.5 + s * 0.2 * r.time / 365.0 + post;
            assert!((r.outcome - line).abs() < 1e-15);
        }
        let det = estimate_did(&ds, &ModelSpec::detrending()).unwrap();
        assert!((det.gamma_hat - 0.25).abs() < 1e-8);
        let orig = estimate_did(&noiseless(0.0, 0.2).simulate().unwrap(), &ModelSpec::original()).unwrap();
        assert!((orig.gamma_hat - 0.2).abs() < 0.03, "{}", orig.gamma_hat);
    }

    #[test]
    fn visits_are_distinct_sorted_and_counted() {
        let mut total_obs = 0usize;
        let mut individuals = 0usize;
        for seed in 0..50 {
            let ds = DgpConfig {
                seed,
                ..DgpConfig::default()
            }
            .simulate()
            .unwrap();
            assert!((800..=5600).contains(&ds.len()));
            let mut last: Option<(&str, f64)> = None;
            for r in ds.records() {
                if let Some((u, t)) = last {
                    if u == r.unit_id {
                        assert!(r.time > t);
                    } else {
                        individuals += 1;
                    }
                } else {
                    individuals += 1;
                }
                assert!((1.0..=365.0).contains(&r.time));
                last = Some((&r.unit_id, r.time));
            }
            total_obs += ds.len();
        }
        assert_eq!(individuals, 50 * 800);
        let mean = total_obs as f64 / individuals as f64;
        assert!((mean - 4.0).abs() < 0.15, "{mean}");
    }

    #[test]
    fn same_seed_same_dataset() {
        let cfg = DgpConfig {
            seed: 99,
            rho: 0.5,
            trend_l: 0.2,
            ..DgpConfig::default()
        };
        assert_eq!(cfg.simulate().unwrap(), cfg.simulate().unwrap());
        let other = DgpConfig { seed: 100, ..cfg };
        assert_ne!(cfg.simulate().unwrap(), other.simulate().unwrap());
    }

    #[test]
    fn correlated_effect_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut first, mut second) = (Vec::new(), Vec::new());
        for _ in 0..100_000 {
            let v = correlated_effects(2, 0.5, 1.0, &mut rng);
            first.push(v[0]);
            second.push(v[1]);
        }
        assert!((variance(&first) - 1.0).abs() < 0.03);
        assert!((corr(&first, &second) - 0.5).abs() < 0.03);

        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..100_000 {
            let v = correlated_effects(2, 0.0, 2.0, &mut rng);
            a.push(v[0]);
            b.push(v[1]);
        }
        assert!(corr(&a, &b).abs() < 0.02);
        assert!((variance(&a) - 4.0).abs() < 0.12);

        let v = correlated_effects(10, 1.0 - 1e-12, 1.0, &mut rng);
        assert!(v.iter().all(|x| (x - v[0]).abs() < 1e-4));
    }

    #[test]
    fn ar1_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut w1, mut w2) = (Vec::new(), Vec::new());
        for _ in 0..100_000 {
            let w = ar1_path(2, 0.9, 0.1, &mut rng);
            w1.push(w[0]);
            w2.push(w[1]);
        }
        assert!((variance(&w2) / 0.01 - 1.0).abs() < 0.05);
        assert!((corr(&w1, &w2) - 0.9).abs() < 0.02);
        assert!(ar1_path(5, 0.3, 0.0, &mut rng).iter().all(|&x| x == 0.0));
        assert_eq!(ar1_path(1, 0.3, 1.0, &mut rng).len(), 1);

        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..50_000 {
            let w = ar1_path(2, 0.0, 1.0, &mut rng);
            a.push(w[0]);
            b.push(w[1]);
        }
        assert!(corr(&a, &b).abs() < 0.02);
    }

    #[test]
    fn config_validation() {
        let d = DgpConfig::default();
        assert!(d.validate().is_ok());
        assert!(DgpConfig::second_setting().validate().is_ok());
        for bad in [
            DgpConfig { rho: 1.0, ..d },
            DgpConfig { rho: -0.1, ..d },
            DgpConfig { sigma_v: -1.0, ..d },
            DgpConfig {
                obs_min: 5,
                obs_max: 3,
                ..d
            },
            DgpConfig { obs_min: 0, ..d },
            DgpConfig { cutoff: 400.0, ..d },
            DgpConfig { n_per_group: 0, ..d },
            DgpConfig { obs_max: 400, ..d },
        ] {
            assert!(matches!(bad.simulate(), Err(Error::ConfigInvalid(_))));
        }
    }

    #[test]
    fn arm_symmetry_of_original_bias() {
        let spec = ModelSpec::original();
        let mean_gamma = |l: f64| {
            (0..200u64)
                .map(|seed| {
                    let cfg = DgpConfig {
                        trend_l: l,
                        rho: 0.5,
                        seed,
                        ..DgpConfig::default()
                    };
                    estimate_did(&cfg.simulate().unwrap(), &spec).unwrap().gamma_hat
                })
                .sum::<f64>()
                / 200.0
        };
        let up = mean_gamma(0.2);
        let down = mean_gamma(-0.2);
        assert!((up + down).abs() < 0.02, "{up} {down}");

        // Swapping arm labels mirrors the estimate exactly on a fixed dataset.
        let ds = DgpConfig {
            trend_l: 0.2,
            seed: 3,
            ..DgpConfig::default()
        }
        .simulate()
        .unwrap();
        let swapped: Vec<_> = ds
            .records()
            .iter()
            .cloned()
            .map(|mut r| {
                r.arm = r.arm.flipped();
                r
            })
            .collect();
        let swapped = PanelDataset::new(swapped, 365.0, 182.0, vec![]).unwrap();
        let a = estimate_did(&ds, &spec).unwrap().gamma_hat;
        let b = estimate_did(&swapped, &spec).unwrap().gamma_hat;
        assert!((a + b).abs() < 1e-10);
    }
}
