use super::{square, DesignMatrix, Family, FitSummary};
use crate::error::{Error, Result};

/// Coefficient sup-norm beyond which the fit is declared separated.
const DIVERGENCE_BOUND: f64 = 1e3;
/// Upper bound on the weight floor. A weight below the floor means a fitted
/// probability collapsed to 0 or 1 (`|eta| > 18`), which in practice only
/// happens along a separating direction. Under quasi-separation the score
/// can only fall below `tol` once those weights are below `tol`, so the floor
/// tracks `tol` when it is tighter.
const WEIGHT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-8,
        }
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn weighted_design(x: &DesignMatrix, sqrt_w: &[f64]) -> Result<DesignMatrix> {
    let cols = (0..x.ncols())
        .map(|j| x.column(j).iter().zip(sqrt_w).map(|(a, w)| a * w).collect())
        .collect();
    DesignMatrix::from_columns(x.labels().to_vec(), cols)
}

/// Logistic regression by Newton-Raphson / IRLS from all-zero coefficients.
///
/// `converged` is true iff the sup-norm of the score `X^T (y - mu)` fell below
/// `tol` within `max_iter` updates. Covariance is the inverse Fisher
/// information at the final iterate; tests are Wald z-tests.
pub fn fit_logistic(x: &DesignMatrix, y: &[f64], max_iter: usize, tol: f64) -> Result<FitSummary> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if let Some((row, &value)) = y.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
        return Err(Error::NonBinaryOutcome { row, value });
    }
    let ones = y.iter().filter(|v| **v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::AllSameClass);
    }
    // Surface collinearity before iterating.
    x.factor()?;

    let floor = tol.min(WEIGHT_FLOOR);
    let mut beta = vec![0.0; x.ncols()];
    let mut converged = false;
    let mut iter = 0;
    let (mu, w) = loop {
        let eta = x.mul_vec(&beta);
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        if let Some(i) = w.iter().position(|&wi| wi < floor) {
            return Err(Error::Separation(format!(
                "fitted probability of row {i} reached 0 or 1 after {iter} iterations"
            )));
        }
        let resid: Vec<f64> = y.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let score = x.tr_mul_vec(&resid);
        if score.iter().all(|s| s.abs() < tol) {
            converged = true;
            break (mu, w);
        }
        if iter == max_iter {
            break (mu, w);
        }

        // Newton step solves the weighted problem sqrt(W) X d ~ (y - mu) / sqrt(W).
        let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let xw = weighted_design(x, &sqrt_w)?;
        let qr = xw
            .factor()
            .map_err(|_| Error::Separation(format!("weighted design lost rank at iteration {iter}")))?;
        let z: Vec<f64> = resid
            .iter()
            .zip(&sqrt_w)
            .map(|(r, s)| if *s > 0.0 { r / s } else { 0.0 })
            .collect();
        let step = qr.solve(&z);
        for (b, d) in beta.iter_mut().zip(&step) {
            *b += d;
        }
        if beta.iter().any(|b| !b.is_finite() || b.abs() > DIVERGENCE_BOUND) {
            return Err(Error::Separation(format!(
                "coefficients exceeded {DIVERGENCE_BOUND} at iteration {}",
                iter + 1
            )));
        }
        iter += 1;
    };
    debug_assert_eq!(mu.len(), n);

    let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let qr = weighted_design(x, &sqrt_w)?
        .factor()
        .map_err(|_| Error::Separation("Fisher information is singular at the optimum".into()))?;
    let covariance = square(&qr.unscaled_covariance(), x.ncols(), 1.0);
    Ok(FitSummary::from_parts(
        x.labels().to_vec(),
        beta,
        covariance,
        0.0,
        n - x.ncols(),
        Family::Binomial,
        converged,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(cols: Vec<Vec<f64>>) -> DesignMatrix {
        let labels = (0..cols.len()).map(|j| format!("x{j}")).collect();
        DesignMatrix::from_columns(labels, cols).unwrap()
    }

    fn log_likelihood(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> f64 {
        x.mul_vec(beta)
            .iter()
            .zip(y)
            .map(|(&eta, &yi)| {
                // log(1 + e^eta) computed stably
                let softplus = if eta > 0.0 {
                    eta + (-eta).exp().ln_1p()
                } else {
                    eta.exp().ln_1p()
                };
                yi * eta - softplus
            })
            .sum()
    }

    /// Coordinate-wise grid refinement: scan each coordinate on a grid around
    /// the incumbent, shrink the grid when no coordinate improves.
    fn grid_mle(x: &DesignMatrix, y: &[f64]) -> Vec<f64> {
        let p = x.ncols();
        let mut beta = vec![0.0; p];
        let mut best = log_likelihood(x, y, &beta);
        let mut width = 4.0;
        while width > 1e-9 {
            let mut improved = false;
            for k in 0..p {
                let centre = beta[k];
                for step in -20..=20 {
                    let mut trial = beta.clone();
                    trial[k] = centre + width * step as f64 / 20.0;
                    let ll = log_likelihood(x, y, &trial);
                    if ll > best {
                        best = ll;
                        beta = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                width /= 4.0;
            }
        }
        beta
    }

    #[test]
    fn intercept_only_half_ones() {
        let x = design(vec![vec![1.0; 6]]);
        let fit = fit_logistic(&x, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0], 50, 1e-8).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert!(fit.converged);
        assert_eq!(fit.p_values[0], 1.0);
    }

    #[test]
    fn two_by_two_log_odds_ratio() {
        // x = 1: 3 events, 7 non-events; x = 0: 8 events, 2 non-events.
        let (a, b, c, d) = (3, 7, 8, 2);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (xv, yv, count) in [(1.0, 1.0, a), (1.0, 0.0, b), (0.0, 1.0, c), (0.0, 0.0, d)] {
            for _ in 0..count {
                xs.push(xv);
                ys.push(yv);
            }
        }
        let x = design(vec![vec![1.0; xs.len()], xs]);
        let fit = fit_logistic(&x, &ys, 50, 1e-8).unwrap();
        let oracle = ((a * d) as f64 / (b * c) as f64).ln();
        assert!((fit.coefficients[1] - oracle).abs() < 1e-9);
        assert!((fit.coefficients[0] - (c as f64 / d as f64).ln()).abs() < 1e-9);
        // Woolf standard error of the log odds ratio.
        let woolf = (1.0 / a as f64 + 1.0 / b as f64 + 1.0 / c as f64 + 1.0 / d as f64).sqrt();
        assert!((fit.standard_errors[1] - woolf).abs() < 1e-8);
    }

    #[test]
    fn matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20;
        let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let y: Vec<f64> = x1
            .iter()
            .zip(&x2)
            .map(|(a, b)| {
                let p = sigmoid(0.3 + 0.8 * a - 0.6 * b);
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let x = design(vec![vec![1.0; n], x1, x2]);
        let fit = fit_logistic(&x, &y, 50, 1e-8).unwrap();
        let oracle = grid_mle(&x, &y);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        let resid: Vec<f64> = y
            .iter()
            .zip(x.mul_vec(&fit.coefficients))
            .map(|(yi, e)| yi - sigmoid(e))
            .collect();
        assert!(x.tr_mul_vec(&resid).iter().all(|s| s.abs() < 1e-8));
    }

    #[test]
    fn separation_is_reported() {
        let xs = vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let y = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let x = design(vec![vec![1.0; 6], xs]);
        assert!(matches!(fit_logistic(&x, &y, 50, 1e-8), Err(Error::Separation(_))));
    }

    #[test]
    fn quasi_separation_is_reported() {
        // x = 1 always has y = 1; x = 0 is mixed.
        let xs = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let y = vec![0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let x = design(vec![vec![1.0; 7], xs]);
        assert!(matches!(fit_logistic(&x, &y, 50, 1e-8), Err(Error::Separation(_))));
    }

    #[test]
    fn single_class_and_non_binary() {
        let x = design(vec![vec![1.0; 3]]);
        assert!(matches!(
            fit_logistic(&x, &[1.0, 1.0, 1.0], 50, 1e-8),
            Err(Error::AllSameClass)
        ));
        assert!(matches!(
            fit_logistic(&x, &[1.0, 0.5, 0.0], 50, 1e-8),
            Err(Error::NonBinaryOutcome { row: 1, .. })
        ));
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let x = design(vec![vec![1.0; 4], vec![2.0; 4]]);
        assert!(matches!(
            fit_logistic(&x, &[1.0, 0.0, 1.0, 0.0], 50, 1e-8),
            Err(Error::RankDeficient { .. })
        ));
    }
}
