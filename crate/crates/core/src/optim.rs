//! Penalized coordinate descent for the smoothed rank objective, plus the
//! lasso and hinge baselines.
//!
//! The rank solvers run cyclic sweeps over the free coordinates in ascending
//! order. Each coordinate takes a proximal step
//! `b_j <- soft_threshold(b_j - eta g_j, eta lambda)` with `eta` halved from
//! `init_step` until the smooth part satisfies the proximal sufficient-decrease
//! condition `f(new) <= f + g delta + delta^2 / (2 eta)` and the composite
//! objective has not increased. The anchor coordinate stays at exactly 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{concordance_signs, make_anchored, AnchoredCoefficients, Dataset};
use crate::error::{Error, Result};
use crate::kendall;
use crate::kernels::SmoothingKernel;
use crate::loss::{l1_penalty, penalized_objective, smoothing_gap_bound, SmoothedPairs};

/// Where the coordinate descent starts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartStrategy {
    /// `e_anchor + sign(L_j*) e_j*` from marginal Kendall correlations.
    #[default]
    MarginalKendall,
    /// A caller-supplied vector (re-anchored).
    Supplied(Vec<f64>),
    /// `e_anchor`.
    AnchorOnly,
}

/// Solver hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub kernel: SmoothingKernel,
    pub anchor_index: usize,
    pub max_sweeps: usize,
    /// Stop when the largest coordinate change in a sweep falls below this.
    pub coord_tol: f64,
    /// Stop when the relative objective decrease of a sweep falls below this.
    pub obj_tol: f64,
    pub init_step: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub start: StartStrategy,
    /// Record the smoothing gap bound in every trace entry.
    pub trace_diagnostics: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            lambda: 0.0,
            kernel: SmoothingKernel::GaussianCdf,
            anchor_index: 0,
            max_sweeps: 500,
            coord_tol: 1e-4,
            obj_tol: 1e-6,
            init_step: 1.0,
            backtrack_factor: 0.5,
            max_backtracks: 50,
            start: StartStrategy::MarginalKendall,
            trace_diagnostics: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.coord_tol >= 0.0 && self.obj_tol >= 0.0) {
            return bad("tolerances must be non-negative".into());
        }
        if !(self.init_step.is_finite() && self.init_step > 0.0) {
            return bad(format!("init_step must be positive, got {}", self.init_step));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            ));
        }
        Ok(())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }
}

/// One completed sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Penalized objective after the sweep.
    pub objective: f64,
    pub penalty: f64,
    pub max_change: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_bound: Option<f64>,
}

/// Output of every solver.
///
/// For the rank solvers `coef[anchor_index] == 1` exactly and `objective` is
/// the minimized penalized objective. The lasso leaves the anchor free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coef: Vec<f64>,
    pub anchor_index: usize,
    pub objective: f64,
    pub sweeps_used: usize,
    pub converged: bool,
    pub trace: Vec<SweepRecord>,
    pub warm_start_used: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl FitResult {
    /// Coefficients rescaled so the anchor is 1.
    pub fn anchored(&self) -> Result<AnchoredCoefficients> {
        let a = self.coef[self.anchor_index];
        if a == 0.0 {
            return Err(Error::Domain(
                "anchor coefficient is zero; normalization undefined".into(),
            ));
        }
        if a == 1.0 {
            return make_anchored(&self.coef, self.anchor_index);
        }
        let scaled: Vec<f64> = self.coef.iter().map(|b| b / a).collect();
        make_anchored(&scaled, self.anchor_index)
    }

    /// Indices of nonzero non-anchor coefficients.
    pub fn selected(&self, zero_tol: f64) -> Vec<usize> {
        self.coef
            .iter()
            .enumerate()
            .filter(|&(j, b)| j != self.anchor_index && b.abs() > zero_tol)
            .map(|(j, _)| j)
            .collect()
    }
}

/// `sign(v) max(|v| - t, 0)`.
pub fn soft_threshold(v: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("threshold must be non-negative, got {t}")));
    }
    Ok(soft(v, t))
}

#[inline]
fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Kendall numerators `sum_{i<i'} sign(y_i - y_i') sign(x_ij - x_i'j)` for
/// every column.
pub fn marginal_kendall_numerators(data: &Dataset) -> Vec<i64> {
    (0..data.d())
        .map(|j| kendall::concordance_numerator(data.y(), data.column(j)))
        .collect()
}

/// Marginal Kendall correlations `L_j`.
pub fn marginal_kendall_scores(data: &Dataset) -> Vec<f64> {
    let total = kendall::pair_count(data.n()) as f64;
    marginal_kendall_numerators(data)
        .into_iter()
        .map(|s| s as f64 / total)
        .collect()
}

/// `e_anchor + sign(L_j*) e_j*` with `j* = argmax_{j != anchor} |L_j|`
/// (smallest index on ties).
pub fn marginal_kendall_start(data: &Dataset, anchor_index: usize) -> Result<AnchoredCoefficients> {
    let d = data.d();
    if anchor_index >= d {
        return Err(Error::IndexOutOfRange {
            index: anchor_index,
            len: d,
        });
    }
    let scores = marginal_kendall_numerators(data);
    let mut best: Option<(usize, i64)> = None;
    for (j, &s) in scores.iter().enumerate() {
        if j == anchor_index {
            continue;
        }
        if best.is_none_or(|(_, b)| s.abs() > b.abs()) {
            best = Some((j, s));
        }
    }
    let mut raw = vec![0.0; d];
    if let Some((j, s)) = best {
        raw[j] = s.signum() as f64;
    }
    make_anchored(&raw, anchor_index)
}

fn resolve_start(data: &Dataset, config: &FitConfig) -> Result<AnchoredCoefficients> {
    match &config.start {
        StartStrategy::MarginalKendall => marginal_kendall_start(data, config.anchor_index),
        StartStrategy::AnchorOnly => AnchoredCoefficients::anchor_only(data.d(), config.anchor_index),
        StartStrategy::Supplied(v) => {
            if v.len() != data.d() {
                return Err(Error::DimensionMismatch {
                    expected: data.d(),
                    got: v.len(),
                });
            }
            make_anchored(v, config.anchor_index)
        }
    }
}

/// Smooth part of a pairwise objective, evaluated through the index `u = Xb`.
trait PairObjective {
    /// Value at `u`; fills `r` so that the `j`-th partial derivative is
    /// [`PairObjective::partial`] of column `j` against `r`.
    fn value_and_residual(&self, u: &[f64], r: &mut [f64]) -> f64;
    fn partial(&self, column: &[f64], r: &[f64]) -> f64;
}

impl PairObjective for SmoothedPairs {
    fn value_and_residual(&self, u: &[f64], r: &mut [f64]) -> f64 {
        self.loss_and_residual(u, r)
    }

    fn partial(&self, column: &[f64], r: &[f64]) -> f64 {
        self.gradient_component(column, r)
    }
}

/// Negated hinge relaxation
/// `-(1/(n(n-1))) sum_{S_p != 0} max(0, S_p Z_p + 1)`.
struct HingePairs {
    signs: Vec<i8>,
    n: usize,
    weight: f64,
}

impl HingePairs {
    fn new(y: &[f64]) -> Self {
        let n = y.len();
        Self {
            signs: concordance_signs(y),
            n,
            weight: 1.0 / (n as f64 * (n as f64 - 1.0)),
        }
    }
}

impl PairObjective for HingePairs {
    fn value_and_residual(&self, u: &[f64], r: &mut [f64]) -> f64 {
        r.iter_mut().for_each(|v| *v = 0.0);
        let n = self.n;
        let mut acc = 0.0;
        let mut p = 0;
        for i in 0..n {
            for k in i + 1..n {
                let s = self.signs[p];
                p += 1;
                if s == 0 {
                    continue;
                }
                let s = f64::from(s);
                let h = s * (u[i] - u[k]) + 1.0;
                // Subgradient at the kink is taken as 0.
                if h > 0.0 {
                    acc += h;
                    r[i] += s;
                    r[k] -= s;
                }
            }
        }
        -self.weight * acc
    }

    fn partial(&self, column: &[f64], r: &[f64]) -> f64 {
        let dot: f64 = column.iter().zip(r).map(|(x, r)| x * r).sum();
        -self.weight * dot
    }
}

/// Hinge relaxation objective to be maximized:
/// `(1/(n(n-1))) sum_{i != i'} 1(y_i > y_i') max(0, (X_i - X_i')^T b + 1) - lambda sum_{j != anchor} |b_j|`.
pub fn hinge_objective(data: &Dataset, coef: &AnchoredCoefficients, lambda: f64) -> Result<f64> {
    crate::data::check_dims(data, coef.values())?;
    let u = data.index(coef.values());
    let mut r = vec![0.0; data.n()];
    let value = -HingePairs::new(data.y()).value_and_residual(&u, &mut r);
    Ok(value - l1_penalty(coef.values(), coef.anchor_index(), lambda))
}

struct UnboundedGuard {
    limit: f64,
    sweeps: usize,
}

fn coordinate_descent<O: PairObjective>(
    data: &Dataset,
    objective: &O,
    config: &FitConfig,
    lambda: f64,
    guard: Option<UnboundedGuard>,
) -> Result<(Vec<f64>, Vec<f64>, usize, bool, Vec<SweepRecord>, Option<String>)> {
    let n = data.n();
    let anchor = config.anchor_index;
    let start = resolve_start(data, config)?;
    let warm = start.values().to_vec();
    let mut beta = warm.clone();

    let mut u = data.index(&beta);
    let mut r = vec![0.0; n];
    let mut u_trial = vec![0.0; n];
    let mut r_trial = vec![0.0; n];
    let mut f = objective.value_and_residual(&u, &mut r);
    if !f.is_finite() {
        return Err(Error::NonFinite("objective at the starting point".into()));
    }
    let mut pen = l1_penalty(&beta, anchor, lambda);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut diagnostic = None;
    let mut growth_streak = 0usize;
    let mut sweeps = 0usize;

    while sweeps < config.max_sweeps {
        sweeps += 1;
        let start_total = f + pen;
        let mut max_change = 0.0f64;
        let mut attempted = 0usize;
        let mut failed = 0usize;

        for j in 0..data.d() {
            if j == anchor {
                continue;
            }
            let col = data.column(j);
            let g = objective.partial(col, &r);
            let old = beta[j];
            let mut eta = config.init_step;
            let mut tried = false;
            let mut accepted = false;
            for _ in 0..=config.max_backtracks {
                let new = soft(old - eta * g, eta * lambda);
                let delta = new - old;
                if delta == 0.0 {
                    accepted = true;
                    break;
                }
                tried = true;
                for ((t, &ui), &xj) in u_trial.iter_mut().zip(&u).zip(col) {
                    *t = ui + delta * xj;
                }
                let f_trial = objective.value_and_residual(&u_trial, &mut r_trial);
                if !f_trial.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "objective during update of coordinate {j} in sweep {sweeps}"
                    )));
                }
                let pen_trial = pen + lambda * (new.abs() - old.abs());
                let model = f + g * delta + delta * delta / (2.0 * eta);
                if f_trial <= model && f_trial + pen_trial <= f + pen {
                    beta[j] = new;
                    std::mem::swap(&mut u, &mut u_trial);
                    std::mem::swap(&mut r, &mut r_trial);
                    f = f_trial;
                    pen = pen_trial;
                    max_change = max_change.max(delta.abs());
                    accepted = true;
                    break;
                }
                eta *= config.backtrack_factor;
            }
            if tried {
                attempted += 1;
                if !accepted {
                    failed += 1;
                }
            }
        }

        let total = f + pen;
        let gap_bound = if config.trace_diagnostics && guard.is_none() {
            Some(smoothing_gap_bound(data, &beta, config.alpha, config.kernel)?)
        } else {
            None
        };
        trace.push(SweepRecord {
            objective: total,
            penalty: pen,
            max_change,
            gap_bound,
        });

        if attempted > 0 && failed == attempted {
            diagnostic = Some(format!(
                "no coordinate found a non-increasing step in sweep {sweeps}"
            ));
            break;
        }
        if let Some(g) = &guard {
            let largest = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
            if total < start_total && largest > g.limit {
                growth_streak += 1;
            } else {
                growth_streak = 0;
            }
            if growth_streak >= g.sweeps {
                diagnostic = Some(format!(
                    "objective unbounded: still improving with max |b_j| = {largest:e}"
                ));
                break;
            }
        }
        if max_change < config.coord_tol {
            converged = true;
            break;
        }
        let rel = (start_total - total) / start_total.abs().max(f64::MIN_POSITIVE);
        if rel < config.obj_tol {
            converged = true;
            break;
        }
    }
    Ok((beta, warm, sweeps, converged, trace, diagnostic))
}

fn check_rank_inputs(data: &Dataset, config: &FitConfig) -> Result<()> {
    config.validate()?;
    if data.d() < 2 {
        return Err(Error::InvalidInput(
            "rank estimators need d >= 2 (one anchor plus free coordinates)".into(),
        ));
    }
    if config.anchor_index >= data.d() {
        return Err(Error::IndexOutOfRange {
            index: config.anchor_index,
            len: data.d(),
        });
    }
    Ok(())
}

/// Smoothed, L1-penalized rank-correlation fit.
pub fn fit_rmrce(data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    check_rank_inputs(data, config)?;
    let pairs = SmoothedPairs::new(data.y(), config.alpha, config.kernel);
    let (coef, warm, sweeps, converged, trace, diagnostic) =
        coordinate_descent(data, &pairs, config, config.lambda, None)?;
    let anchored = make_anchored(&coef, config.anchor_index)?;
    let objective = penalized_objective(data, &anchored, config.alpha, config.lambda, config.kernel)?;
    if !objective.is_finite() {
        return Err(Error::NonFinite("final objective".into()));
    }
    Ok(FitResult {
        coef,
        anchor_index: config.anchor_index,
        objective,
        sweeps_used: sweeps,
        converged,
        trace,
        warm_start_used: warm,
        diagnostic,
    })
}

/// Hinge-relaxation baseline. `objective` holds the minimized value, i.e. the
/// negated [`hinge_objective`].
pub fn fit_hinge(data: &Dataset, lambda: f64, config: &FitConfig) -> Result<FitResult> {
    let config = config.with_lambda(lambda);
    check_rank_inputs(data, &config)?;
    let pairs = HingePairs::new(data.y());
    let guard = UnboundedGuard {
        limit: 1e6,
        sweeps: 3,
    };
    let (coef, warm, sweeps, converged, trace, diagnostic) =
        coordinate_descent(data, &pairs, &config, lambda, Some(guard))?;
    let anchored = make_anchored(&coef, config.anchor_index)?;
    let objective = -hinge_objective(data, &anchored, lambda)?;
    Ok(FitResult {
        coef,
        anchor_index: config.anchor_index,
        objective,
        sweeps_used: sweeps,
        converged,
        trace,
        warm_start_used: warm,
        diagnostic,
    })
}

/// Lasso objective `(1/(2n)) ||y_c - X_c b||^2 + lambda sum_{j != anchor} |b_j|`
/// on centered data.
pub fn lasso_objective(data: &Dataset, coef: &[f64], lambda: f64, anchor: usize) -> f64 {
    let (yc, xc) = centered(data);
    let n = data.n();
    let mut resid = yc;
    for (j, &b) in coef.iter().enumerate() {
        for (r, x) in resid.iter_mut().zip(&xc[j]) {
            *r -= b * x;
        }
    }
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    rss / (2.0 * n as f64) + l1_penalty(coef, anchor, lambda)
}

fn centered(data: &Dataset) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = data.n() as f64;
    let center = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|x| x - m).collect::<Vec<f64>>()
    };
    let yc = center(data.y());
    let xc = (0..data.d()).map(|j| center(data.column(j))).collect();
    (yc, xc)
}

/// Smallest lambda at which every penalized lasso coefficient is zero: the
/// largest `|x_j^T r| / n` over penalized columns, where `r` is the centered
/// response after regressing out the unpenalized anchor.
pub fn lasso_lambda_max(data: &Dataset, anchor_unpenalized: usize) -> Result<f64> {
    if anchor_unpenalized >= data.d() {
        return Err(Error::IndexOutOfRange { index: anchor_unpenalized, len: data.d() });
    }
    let (yc, xc) = centered(data);
    let xa = &xc[anchor_unpenalized];
    let ss: f64 = xa.iter().map(|x| x * x).sum();
    let coef = if ss > 0.0 {
        xa.iter().zip(&yc).map(|(x, y)| x * y).sum::<f64>() / ss
    } else {
        0.0
    };
    let r: Vec<f64> = yc.iter().zip(xa).map(|(y, x)| y - coef * x).collect();
    let n = data.n() as f64;
    Ok((0..data.d())
        .filter(|&j| j != anchor_unpenalized)
        .map(|j| xc[j].iter().zip(&r).map(|(x, r)| x * r).sum::<f64>().abs() / n)
        .fold(0.0, f64::max))
}

const LASSO_TOL: f64 = 1e-10;
const LASSO_MAX_SWEEPS: usize = 100_000;

/// Lasso by cyclic coordinate descent with an intercept (via centering); the
/// anchor coordinate is unpenalized and estimated freely.
pub fn fit_lasso(data: &Dataset, lambda: f64, anchor_unpenalized: usize) -> Result<FitResult> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be non-negative, got {lambda}")));
    }
    let d = data.d();
    if anchor_unpenalized >= d {
        return Err(Error::IndexOutOfRange {
            index: anchor_unpenalized,
            len: d,
        });
    }
    let n = data.n() as f64;
    let (yc, xc) = centered(data);
    let sq: Vec<f64> = xc.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / n).collect();
    let scale = yc.iter().map(|v| v * v).sum::<f64>() / n;
    let mut skipped = Vec::new();
    for (j, &s) in sq.iter().enumerate() {
        if s <= 1e-14 * (1.0 + scale) {
            log::warn!("lasso: column {j} has zero variance; skipping");
            skipped.push(j);
        }
    }
    let mut beta = vec![0.0; d];
    let mut resid = yc;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..d {
            if skipped.contains(&j) {
                continue;
            }
            let col = &xc[j];
            let rho: f64 = col.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n + sq[j] * beta[j];
            let thresh = if j == anchor_unpenalized { 0.0 } else { lambda };
            let new = soft(rho, thresh) / sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, x) in resid.iter_mut().zip(col) {
                    *r -= delta * x;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs() * sq[j].sqrt());
            }
        }
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        let objective = rss / (2.0 * n) + l1_penalty(&beta, anchor_unpenalized, lambda);
        trace.push(SweepRecord {
            objective,
            penalty: l1_penalty(&beta, anchor_unpenalized, lambda),
            max_change,
            gap_bound: None,
        });
        if max_change < LASSO_TOL * (1.0 + scale.sqrt()) {
            converged = true;
            break;
        }
    }
    let objective = lasso_objective(data, &beta, lambda, anchor_unpenalized);
    if !objective.is_finite() {
        return Err(Error::NonFinite("lasso objective".into()));
    }
    Ok(FitResult {
        coef: beta,
        anchor_index: anchor_unpenalized,
        objective,
        sweeps_used: sweeps,
        converged,
        trace,
        warm_start_used: vec![0.0; d],
        diagnostic: (!skipped.is_empty()).then(|| format!("zero-variance columns skipped: {skipped:?}")),
    })
}

/// Estimator choice for benchmarks and tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rmrce,
    Lasso,
    Hinge,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rmrce => "rmrce",
            Method::Lasso => "lasso",
            Method::Hinge => "hinge",
        }
    }

    /// Fits with `lambda`; the rest of `config` applies to the rank methods,
    /// and only `anchor_index` to the lasso.
    pub fn fit(self, data: &Dataset, lambda: f64, config: &FitConfig) -> Result<FitResult> {
        match self {
            Method::Rmrce => fit_rmrce(data, &config.with_lambda(lambda)),
            Method::Lasso => fit_lasso(data, lambda, config.anchor_index),
            Method::Hinge => fit_hinge(data, lambda, config),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rmrce" => Ok(Method::Rmrce),
            "lasso" => Ok(Method::Lasso),
            "hinge" => Ok(Method::Hinge),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}
