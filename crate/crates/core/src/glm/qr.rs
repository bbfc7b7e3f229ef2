//! Householder QR with column pivoting on a column-major matrix.
//!
//! Pivoting picks the remaining column of largest norm at each step, so the
//! diagonal of `R` is non-increasing in magnitude and a small trailing pivot
//! identifies the columns that are (numerically) spanned by the others.

/// Relative pivot tolerance below which a column counts as dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct PivotedQr {
    n: usize,
    p: usize,
    /// Column-major. Upper triangle holds `R`; below the diagonal, column `k`
    /// holds the Householder vector `v_k` with an implicit leading 1.
    factors: Vec<f64>,
    tau: Vec<f64>,
    /// `perm[k]` is the original index of the column in pivoted position `k`.
    perm: Vec<usize>,
}

impl PivotedQr {
    /// Factor an `n x p` column-major matrix (`n >= p`).
    pub fn new(columns: &[f64], n: usize, p: usize) -> Self {
        debug_assert_eq!(columns.len(), n * p);
        let mut a = columns.to_vec();
        let mut tau = vec![0.0; p];
        let mut perm: Vec<usize> = (0..p).collect();

        for k in 0..p {
            // Exact norms of the trailing parts; p is small so recomputing is
            // cheaper than maintaining downdated norms and never drifts.
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..p {
                let col = &a[j * n + k..(j + 1) * n];
                let s: f64 = col.iter().map(|v| v * v).sum();
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            if best != k {
                for i in 0..n {
                    a.swap(k * n + i, best * n + i);
                }
                perm.swap(k, best);
            }

            let (head, tail) = a.split_at_mut((k + 1) * n);
            let col = &mut head[k * n..];
            let norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                tau[k] = 0.0;
                continue;
            }
            let x0 = col[k];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let v0 = x0 - alpha;
            for v in col[k + 1..].iter_mut() {
                *v /= v0;
            }
            tau[k] = (alpha - x0) / alpha;
            col[k] = alpha;

            let v_tail = &col[k + 1..];
            for j in 0..p - k - 1 {
                let target = &mut tail[j * n..(j + 1) * n];
                let mut s = target[k];
                for (t, v) in target[k + 1..].iter().zip(v_tail) {
                    s += t * v;
                }
                s *= tau[k];
                target[k] -= s;
                for (t, v) in target[k + 1..].iter_mut().zip(v_tail) {
                    *t -= s * v;
                }
            }
        }

        Self {
            n,
            p,
            factors: a,
            tau,
            perm,
        }
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.p
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.factors[j * self.n + i]
    }

    /// Original column indices found dependent at `tol`, or empty when the
    /// matrix has full column rank.
    pub fn dependent_columns(&self, tol: f64) -> Vec<usize> {
        let lead = self.r(0, 0).abs();
        if lead == 0.0 {
            return self.perm.clone();
        }
        match (1..self.p).find(|&k| self.r(k, k).abs() <= tol * lead) {
            Some(k) => {
                let mut cols = self.perm[k..].to_vec();
                cols.sort_unstable();
                cols
            }
            None => Vec::new(),
        }
    }

    /// Apply `Q^T` in place to a length-`n` vector.
    pub fn apply_qt(&self, y: &mut [f64]) {
        let n = self.n;
        for k in 0..self.p {
            let v_tail = &self.factors[k * n + k + 1..(k + 1) * n];
            let mut s = y[k];
            for (yi, v) in y[k + 1..].iter().zip(v_tail) {
                s += yi * v;
            }
            s *= self.tau[k];
            y[k] -= s;
            for (yi, v) in y[k + 1..].iter_mut().zip(v_tail) {
                *yi -= s * v;
            }
        }
    }

    /// Apply `Q` in place to a length-`n` vector.
    pub fn apply_q(&self, y: &mut [f64]) {
        let n = self.n;
        for k in (0..self.p).rev() {
            let v_tail = &self.factors[k * n + k + 1..(k + 1) * n];
            let mut s = y[k];
            for (yi, v) in y[k + 1..].iter().zip(v_tail) {
                s += yi * v;
            }
            s *= self.tau[k];
            y[k] -= s;
            for (yi, v) in y[k + 1..].iter_mut().zip(v_tail) {
                *yi -= s * v;
            }
        }
    }

    /// Least-squares coefficients in the original column order.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let mut z = vec![0.0; self.p];
        for k in (0..self.p).rev() {
            let mut s = qty[k];
            for (j, zj) in z.iter().enumerate().skip(k + 1) {
                s -= self.r(k, j) * zj;
            }
            z[k] = s / self.r(k, k);
        }
        let mut coef = vec![0.0; self.p];
        for (k, &orig) in self.perm.iter().enumerate() {
            coef[orig] = z[k];
        }
        coef
    }

    /// Inverse of the leading `p x p` upper-triangular `R`, row-major.
    fn r_inverse(&self) -> Vec<f64> {
        let p = self.p;
        let mut inv = vec![0.0; p * p];
        for j in 0..p {
            inv[j * p + j] = 1.0 / self.r(j, j);
            for i in (0..j).rev() {
                let mut s = 0.0;
                for k in i + 1..=j {
                    s += self.r(i, k) * inv[k * p + j];
                }
                inv[i * p + j] = -s / self.r(i, i);
            }
        }
        inv
    }

    /// `(X^T X)^{-1}` in the original column order, row-major `p x p`.
    pub fn unscaled_covariance(&self) -> Vec<f64> {
        let p = self.p;
        let inv = self.r_inverse();
        let mut out = vec![0.0; p * p];
        for a in 0..p {
            for b in a..p {
                // (R^{-1} R^{-T})[a][b] = sum_k inv[a][k] inv[b][k]
                let start = a.max(b);
                let s: f64 = (start..p).map(|k| inv[a * p + k] * inv[b * p + k]).sum();
                let (oa, ob) = (self.perm[a], self.perm[b]);
                out[oa * p + ob] = s;
                out[ob * p + oa] = s;
            }
        }
        out
    }

    /// Weights `h` such that `h . y` equals the least-squares coefficient of
    /// original column `col` for any response `y`.
    pub fn contrast_weights(&self, col: usize) -> Vec<f64> {
        let p = self.p;
        let pos = self.perm.iter().position(|&c| c == col).expect("column index in range");
        let inv = self.r_inverse();
        let mut h = vec![0.0; self.n];
        h[..p].copy_from_slice(&inv[pos * p..(pos + 1) * p]);
        self.apply_q(&mut h);
        h
    }
}
