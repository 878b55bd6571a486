//! Rank-correlation objectives over all pairs `i < i'`.
//!
//! With `S_p = sign(y_i - y_i')` and margin `Z_p = (X_i - X_i')^T b`, and
//! `N = n(n-1)/2`:
//!
//! * exact objective: `(1/N) sum_p S_p sign(Z_p)`, in `[-1, 1]`;
//! * smoothed loss: `-(1/N) sum_p F(S_p alpha Z_p)`, in `[-1, 0]`;
//! * saturated loss: the `alpha -> inf` limit of the smoothed loss, where each
//!   pair contributes `-1`, `0` or `-1/2` depending on whether `S_p Z_p` is
//!   positive, negative or zero.
//!
//! Without response ties or zero margins the saturated loss equals
//! `-(1 + exact)/2`. The gap bound [`smoothing_gap_bound`] controls
//! `|smoothed - saturated|`: pairs with `S_p Z_p != 0` differ from their limit
//! by exactly `1 - F(alpha |Z_p|)`, and pairs with `S_p Z_p = 0` contribute
//! `-1/2` to both, so the triangle inequality gives the bound.
//!
//! Margins are computed as differences of the index `u = X b`; every pairwise
//! sum runs in the fixed lexicographic pair order, so results do not depend on
//! thread count.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::{check_dims, concordance_signs, AnchoredCoefficients, Dataset};
use crate::error::{Error, Result};
use crate::kendall;
use crate::kernels::SmoothingKernel;

impl AsRef<[f64]> for AnchoredCoefficients {
    fn as_ref(&self) -> &[f64] {
        self.values()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must be positive and finite, got {alpha}")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("lambda must be non-negative, got {lambda}")))
    }
}

/// Pair weight `2 / (n (n-1))`.
fn pair_weight(n: usize) -> f64 {
    1.0 / kendall::pair_count(n) as f64
}

/// Precomputed concordance signs for repeated evaluation of the smoothed loss
/// at different index vectors.
#[derive(Debug, Clone)]
pub(crate) struct SmoothedPairs {
    signs: Vec<i8>,
    n: usize,
    alpha: f64,
    kernel: SmoothingKernel,
    weight: f64,
}

impl SmoothedPairs {
    pub(crate) fn new(y: &[f64], alpha: f64, kernel: SmoothingKernel) -> Self {
        Self {
            signs: concordance_signs(y),
            n: y.len(),
            alpha,
            kernel,
            weight: pair_weight(y.len()),
        }
    }

    /// Smoothed loss at index `u`.
    pub(crate) fn loss(&self, u: &[f64]) -> f64 {
        let (n, a, k) = (self.n, self.alpha, self.kernel);
        let mut acc = 0.0;
        let mut p = 0;
        for i in 0..n {
            let ui = u[i];
            let mut row = 0.0;
            for &uk in &u[i + 1..n] {
                let s = f64::from(self.signs[p]);
                row += k.cdf(s * a * (ui - uk));
                p += 1;
            }
            acc += row;
        }
        -self.weight * acc
    }

    /// Smoothed loss at `u`, and per-observation residuals
    /// `r_i = sum_{i'>i} w_{ii'} - sum_{i'<i} w_{i'i}` with
    /// `w = S F'(S alpha Z)`, so that the gradient is
    /// `-(alpha / N) X^T r`.
    pub(crate) fn loss_and_residual(&self, u: &[f64], r: &mut [f64]) -> f64 {
        let (n, a, k) = (self.n, self.alpha, self.kernel);
        r.iter_mut().for_each(|v| *v = 0.0);
        let mut acc = 0.0;
        let mut p = 0;
        for i in 0..n {
            let ui = u[i];
            let mut row = 0.0;
            let mut ri = 0.0;
            for (off, &uk) in u[i + 1..n].iter().enumerate() {
                let s = f64::from(self.signs[p]);
                let (f, fp) = k.cdf_pdf(s * a * (ui - uk));
                row += f;
                let w = s * fp;
                ri += w;
                r[i + 1 + off] -= w;
                p += 1;
            }
            r[i] += ri;
            acc += row;
        }
        -self.weight * acc
    }

    /// Gradient component `j` from residuals.
    pub(crate) fn gradient_component(&self, column: &[f64], r: &[f64]) -> f64 {
        let dot: f64 = column.iter().zip(r).map(|(x, r)| x * r).sum();
        -self.alpha * self.weight * dot
    }

    pub(crate) fn gradient(&self, data: &Dataset, r: &[f64]) -> Vec<f64> {
        (0..data.d())
            .map(|j| self.gradient_component(data.column(j), r))
            .collect()
    }

    pub(crate) fn hessian(&self, data: &Dataset, u: &[f64]) -> DMatrix<f64> {
        let (n, a, k) = (self.n, self.alpha, self.kernel);
        let mut lap = DMatrix::<f64>::zeros(n, n);
        let mut p = 0;
        for i in 0..n {
            for m in i + 1..n {
                let s = f64::from(self.signs[p]);
                let c = k.curvature(s * a * (u[i] - u[m]));
                lap[(i, i)] += c;
                lap[(m, m)] += c;
                lap[(i, m)] -= c;
                lap[(m, i)] -= c;
                p += 1;
            }
        }
        let x = data.x();
        let mut h = x.transpose() * (lap * x);
        h *= -a * a * self.weight;
        // Symmetrize exactly; the product above is symmetric up to rounding.
        let h_t = h.transpose();
        (h + h_t) * 0.5
    }
}

/// Exact pairwise rank-correlation score in `[-1, 1]`.
pub fn exact_mrc_objective(data: &Dataset, coef: impl AsRef<[f64]>) -> Result<f64> {
    let coef = coef.as_ref();
    check_dims(data, coef)?;
    let u = data.index(coef);
    Ok(kendall::tau_a(data.y(), &u))
}

/// Smoothed loss `-(1/N) sum_p F(S_p alpha Z_p)`.
pub fn smoothed_loss(
    data: &Dataset,
    coef: impl AsRef<[f64]>,
    alpha: f64,
    kernel: SmoothingKernel,
) -> Result<f64> {
    let coef = coef.as_ref();
    check_alpha(alpha)?;
    check_dims(data, coef)?;
    let u = data.index(coef);
    Ok(SmoothedPairs::new(data.y(), alpha, kernel).loss(&u))
}

/// Analytic gradient of [`smoothed_loss`], including the anchor coordinate.
pub fn smoothed_gradient(
    data: &Dataset,
    coef: impl AsRef<[f64]>,
    alpha: f64,
    kernel: SmoothingKernel,
) -> Result<Vec<f64>> {
    let coef = coef.as_ref();
    check_alpha(alpha)?;
    check_dims(data, coef)?;
    let u = data.index(coef);
    let pairs = SmoothedPairs::new(data.y(), alpha, kernel);
    let mut r = vec![0.0; data.n()];
    pairs.loss_and_residual(&u, &mut r);
    Ok(pairs.gradient(data, &r))
}

/// Analytic Hessian
/// `-(alpha^2 / N) sum_p (X_i - X_i')(X_i - X_i')^T F''(S_p alpha Z_p)`.
pub fn smoothed_hessian(
    data: &Dataset,
    coef: impl AsRef<[f64]>,
    alpha: f64,
    kernel: SmoothingKernel,
) -> Result<DMatrix<f64>> {
    let coef = coef.as_ref();
    check_alpha(alpha)?;
    check_dims(data, coef)?;
    let u = data.index(coef);
    Ok(SmoothedPairs::new(data.y(), alpha, kernel).hessian(data, &u))
}

/// `lambda * sum_{j != anchor} |coef_j|`.
pub fn l1_penalty(coef: &[f64], anchor_index: usize, lambda: f64) -> f64 {
    lambda
        * coef
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != anchor_index)
            .map(|(_, b)| b.abs())
            .sum::<f64>()
}

/// Smoothed loss plus the L1 penalty on the non-anchor coordinates.
pub fn penalized_objective(
    data: &Dataset,
    coef: &AnchoredCoefficients,
    alpha: f64,
    lambda: f64,
    kernel: SmoothingKernel,
) -> Result<f64> {
    check_lambda(lambda)?;
    let loss = smoothed_loss(data, coef, alpha, kernel)?;
    Ok(loss + l1_penalty(coef.values(), coef.anchor_index(), lambda))
}

/// The `alpha -> inf` limit of [`smoothed_loss`].
pub fn saturated_loss(data: &Dataset, coef: impl AsRef<[f64]>) -> Result<f64> {
    let coef = coef.as_ref();
    check_dims(data, coef)?;
    let u = data.index(coef);
    let y = data.y();
    let n = data.n();
    let mut acc = 0.0;
    for i in 0..n {
        for k in i + 1..n {
            let sz = (y[i] - y[k]).signum() * (u[i] - u[k]);
            let tie = y[i] == y[k] || u[i] == u[k];
            acc += if tie {
                0.5
            } else if sz > 0.0 {
                1.0
            } else {
                0.0
            };
        }
    }
    Ok(-pair_weight(n) * acc)
}

/// `(1/N) sum_{S_p != 0, Z_p != 0} (1 - F(alpha |Z_p|))`, an upper bound on
/// `|smoothed_loss - saturated_loss|`.
pub fn smoothing_gap_bound(
    data: &Dataset,
    coef: impl AsRef<[f64]>,
    alpha: f64,
    kernel: SmoothingKernel,
) -> Result<f64> {
    let coef = coef.as_ref();
    check_alpha(alpha)?;
    check_dims(data, coef)?;
    let u = data.index(coef);
    let y = data.y();
    let n = data.n();
    let mut acc = 0.0;
    for i in 0..n {
        for k in i + 1..n {
            let z = u[i] - u[k];
            if y[i] != y[k] && z != 0.0 {
                // 1 - F(t) == F(-t) by symmetry, without cancellation.
                acc += kernel.cdf(-alpha * z.abs());
            }
        }
    }
    Ok(pair_weight(n) * acc)
}

/// Default PSD tolerance `1e-8 (1 + max diagonal)`.
pub fn default_psd_tolerance(h: &DMatrix<f64>) -> f64 {
    let max_diag = h.diagonal().iter().cloned().fold(0.0f64, f64::max);
    1e-8 * (1.0 + max_diag)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(h: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(h)?;
    if h.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = SymmetricEigen::new(h.clone());
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

fn check_symmetric(h: &DMatrix<f64>) -> Result<()> {
    if !h.is_square() {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{}, not square",
            h.nrows(),
            h.ncols()
        )));
    }
    let scale = 1.0 + h.amax();
    for i in 0..h.nrows() {
        for j in i + 1..h.ncols() {
            if (h[(i, j)] - h[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// True iff the smallest eigenvalue is at least `-tol`.
pub fn hessian_is_psd(h: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(min_eigenvalue(h)? >= -tol)
}
