//! Evaluation and diagnostics: selection rates, estimation error, Hessian
//! definiteness, stacking curves, the split-half Spearman test and the motif
//! validation ratio.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::SmoothingKernel;
use crate::loss::{default_psd_tolerance, hessian_is_psd, smoothed_hessian};
use crate::optim::{fit_rmrce, FitConfig, Method};
use crate::simulate::{generate_dataset, SimSpec, DEFAULT_BETA0_HEAD};

pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Runs `f(base_seed + r)` for `r in 0..reps` in parallel; results keep
/// replication order.
pub fn replicate<T, F>(reps: usize, base_seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    (0..reps as u64)
        .into_par_iter()
        .map(|r| f(base_seed.wrapping_add(r)))
        .collect()
}

/// Mean and standard error, summed in index order.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub selected: Vec<usize>,
}

/// True and false positive rates of the nonzero pattern of `coef`, with the
/// anchor excluded from every count.
pub fn selection_metrics(
    coef: &[f64],
    anchor: usize,
    true_support: &[usize],
    zero_tol: f64,
) -> Result<SelectionMetrics> {
    let d = coef.len();
    if anchor >= d {
        return Err(Error::IndexOutOfRange { index: anchor, len: d });
    }
    let truth: BTreeSet<usize> = true_support.iter().copied().collect();
    if truth.is_empty() {
        return Err(Error::InvalidInput("true support is empty".into()));
    }
    if truth.contains(&anchor) {
        return Err(Error::InvalidInput("true support must not contain the anchor".into()));
    }
    if let Some(&j) = truth.iter().find(|&&j| j >= d) {
        return Err(Error::IndexOutOfRange { index: j, len: d });
    }
    let selected: Vec<usize> = (0..d)
        .filter(|&j| j != anchor && coef[j].abs() > zero_tol)
        .collect();
    let tp = selected.iter().filter(|j| truth.contains(j)).count();
    let negatives = d - 1 - truth.len();
    let fpr = if negatives == 0 {
        0.0
    } else {
        (selected.len() - tp) as f64 / negatives as f64
    };
    Ok(SelectionMetrics {
        tpr: tp as f64 / truth.len() as f64,
        fpr,
        selected,
    })
}

/// `|| estimate / estimate[anchor] - beta_star ||_2`.
pub fn normalized_l2_error(estimate: &[f64], beta_star: &[f64], anchor: usize) -> Result<f64> {
    if estimate.len() != beta_star.len() {
        return Err(Error::DimensionMismatch { expected: beta_star.len(), got: estimate.len() });
    }
    let a = *estimate
        .get(anchor)
        .ok_or(Error::IndexOutOfRange { index: anchor, len: estimate.len() })?;
    if a == 0.0 {
        return Err(Error::Domain("anchor estimate is zero; normalization undefined".into()));
    }
    Ok(estimate
        .iter()
        .zip(beta_star)
        .map(|(e, b)| (e / a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub lambda: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub reps_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub failed_fits: usize,
}

/// Selection rates per lambda, averaged over replications drawn from `spec`
/// with seeds `spec.seed + r`.
pub fn roc_curve(
    spec: &SimSpec,
    lambdas: &[f64],
    reps: usize,
    method: Method,
    config: &FitConfig,
    zero_tol: f64,
) -> Result<RocCurve> {
    if lambdas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidInput("lambda ladder must be sorted descending".into()));
    }
    spec.validate()?;
    let support = spec.true_support();
    let per_rep: Vec<Result<Vec<Option<SelectionMetrics>>>> = replicate(reps, spec.seed, |seed| {
        let sim = generate_dataset(&spec.clone().with_seed(seed))?;
        lambdas
            .iter()
            .map(|&l| match method.fit(&sim.dataset, l, config) {
                Ok(fit) => selection_metrics(&fit.coef, config.anchor_index, &support, zero_tol).map(Some),
                Err(e) => {
                    log::warn!("fit failed at lambda={l}, seed={seed}: {e}");
                    Ok(None)
                }
            })
            .collect()
    });
    let per_rep: Vec<Vec<Option<SelectionMetrics>>> = per_rep.into_iter().collect::<Result<_>>()?;
    let mut failed = 0;
    let points = lambdas
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let ok: Vec<&SelectionMetrics> = per_rep.iter().filter_map(|r| r[k].as_ref()).collect();
            failed += per_rep.len() - ok.len();
            let m = ok.len().max(1) as f64;
            RocPoint {
                lambda,
                fpr: ok.iter().map(|s| s.fpr).sum::<f64>() / m,
                tpr: ok.iter().map(|s| s.tpr).sum::<f64>() / m,
                reps_used: ok.len(),
            }
        })
        .collect();
    Ok(RocCurve { points, failed_fits: failed })
}

/// Fraction of replications whose smoothed Hessian at the truth is positive
/// semidefinite (within the default tolerance).
pub fn hessian_pd_experiment(
    spec: &SimSpec,
    reps: usize,
    alpha: f64,
    kernel: SmoothingKernel,
    seed: u64,
) -> Result<f64> {
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    spec.validate()?;
    let flags: Vec<Result<bool>> = replicate(reps, seed, |s| {
        let sim = generate_dataset(&spec.clone().with_seed(s))?;
        let h = smoothed_hessian(&sim.dataset, &sim.beta_star, alpha, kernel)?;
        hessian_is_psd(&h, default_psd_tolerance(&h))
    });
    let flags: Vec<bool> = flags.into_iter().collect::<Result<_>>()?;
    Ok(flags.iter().filter(|&&b| b).count() as f64 / reps as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingRow {
    pub n: usize,
    pub d: usize,
    pub rescaled_n: f64,
    pub mean_error: f64,
    pub stderr: f64,
    pub reps_used: usize,
}

/// `beta0` with the first `s` default entries and zeros elsewhere.
pub fn sparse_beta0(d: usize, s: usize) -> Result<Vec<f64>> {
    if s == 0 || s > DEFAULT_BETA0_HEAD.len() || s > d {
        return Err(Error::InvalidInput(format!(
            "sparsity must be in 1..={} and at most d",
            DEFAULT_BETA0_HEAD.len()
        )));
    }
    Ok((0..d).map(|j| if j < s { DEFAULT_BETA0_HEAD[j] } else { 0.0 }).collect())
}

/// Mean RMRCE estimation error on a grid of `(n, d)` with sparsity `s`, along
/// with the rescaled sample size `n / (s ln d)`.
pub fn stacking_curves(
    grid: &[(usize, usize)],
    s: usize,
    reps: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<Vec<StackingRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("stacking grid is empty".into()));
    }
    grid.iter()
        .map(|&(n, d)| {
            let mut spec = SimSpec::new(n, d, seed);
            spec.beta0 = sparse_beta0(d, s)?;
            spec.validate()?;
            let errs: Vec<Option<f64>> = replicate(reps, seed, |r| {
                let sim = generate_dataset(&spec.clone().with_seed(r)).ok()?;
                let fit = fit_rmrce(&sim.dataset, config).ok()?;
                normalized_l2_error(&fit.coef, &sim.beta_star, config.anchor_index).ok()
            });
            let ok: Vec<f64> = errs.into_iter().flatten().collect();
            let (mean_error, stderr) = mean_stderr(&ok);
            Ok(StackingRow {
                n,
                d,
                rescaled_n: n as f64 / (s as f64 * (d as f64).ln()),
                mean_error,
                stderr,
                reps_used: ok.len(),
            })
        })
        .collect()
}

/// Mid-ranks (1-based) of `v`.
pub fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation with mid-rank ties; `None` if either side is constant.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&mid_ranks(a), &mid_ranks(b))
}

/// Exact upper-tail permutation p-value of the Spearman statistic.
pub fn spearman_exact_p(a: &[f64], b: &[f64]) -> f64 {
    let ra = mid_ranks(a);
    let mut rb = mid_ranks(b);
    let dot = |p: &[f64]| ra.iter().zip(p).map(|(x, y)| x * y).sum::<f64>();
    let observed = dot(&rb);
    let tol = 1e-9 * observed.abs().max(1.0);
    // Heap's algorithm over all orderings of rb.
    let n = rb.len();
    let mut c = vec![0usize; n];
    let (mut hits, mut total) = (u64::from(dot(&rb) >= observed - tol), 1u64);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                rb.swap(0, i);
            } else {
                rb.swap(c[i], i);
            }
            hits += u64::from(dot(&rb) >= observed - tol);
            total += 1;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

/// Upper-tail p-value from `t = rho sqrt((m-2)/(1-rho^2))` on `m - 2` degrees
/// of freedom.
pub fn spearman_t_p(rho: f64, m: usize) -> f64 {
    if rho >= 1.0 {
        return 0.0;
    }
    if rho <= -1.0 {
        return 1.0;
    }
    let df = (m - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    dist.sf(t)
}

pub const EXACT_PERMUTATION_MAX: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticResult {
    pub rho: f64,
    pub p_value: f64,
    pub adjusted_p: f64,
    pub pass: bool,
    pub n_train: usize,
    pub n_test: usize,
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// One-sided Spearman test of held-out `y` against held-out predictions
/// `x^T beta`, given a coefficient vector fitted elsewhere.
pub fn spearman_held_out(y: &[f64], pred: &[f64], m_tests: usize, n_train: usize) -> DiagnosticResult {
    let m = y.len();
    let exact = m <= EXACT_PERMUTATION_MAX;
    match spearman_rho(y, pred) {
        None => DiagnosticResult {
            rho: 0.0,
            p_value: 1.0,
            adjusted_p: 1.0,
            pass: false,
            n_train,
            n_test: m,
            exact,
            diagnostic: Some("constant_predictions".into()),
        },
        Some(rho) => {
            let p_value = if exact { spearman_exact_p(y, pred) } else { spearman_t_p(rho, m) };
            let adjusted_p = (m_tests as f64 * p_value).min(1.0);
            DiagnosticResult {
                rho,
                p_value,
                adjusted_p,
                pass: adjusted_p < 0.05,
                n_train,
                n_test: m,
                exact,
                diagnostic: None,
            }
        }
    }
}

/// Split-half monotonicity check: fit on a random half, then test for a
/// positive Spearman correlation on the other half.
pub fn spearman_monotonicity_test(
    data: &Dataset,
    config: &FitConfig,
    split_seed: u64,
    m_tests: usize,
) -> Result<DiagnosticResult> {
    let n = data.n();
    if n < 8 {
        return Err(Error::InvalidInput(format!("need at least 8 observations, got {n}")));
    }
    if m_tests == 0 {
        return Err(Error::InvalidInput("m_tests must be at least 1".into()));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha20Rng::seed_from_u64(split_seed));
    let (first, second) = perm.split_at(n / 2);
    let mut first = first.to_vec();
    let mut second = second.to_vec();
    first.sort_unstable();
    second.sort_unstable();
    let fit = fit_rmrce(&data.subset(&first)?, config)?;
    let held = data.subset(&second)?;
    let pred = held.index(&fit.coef);
    Ok(spearman_held_out(held.y(), &pred, m_tests, first.len()))
}

/// `sum |A_i & M_i| / sum |A_i|`; zero (with a warning) when nothing was
/// predicted.
pub fn motif_validation_ratio(predicted: &[BTreeSet<usize>], validated: &[BTreeSet<usize>]) -> Result<f64> {
    if predicted.len() != validated.len() {
        return Err(Error::DimensionMismatch { expected: predicted.len(), got: validated.len() });
    }
    let total: usize = predicted.iter().map(BTreeSet::len).sum();
    if total == 0 {
        log::warn!("no predictions; validation ratio reported as 0");
        return Ok(0.0);
    }
    let hits: usize = predicted
        .iter()
        .zip(validated)
        .map(|(a, m)| a.intersection(m).count())
        .sum();
    Ok(hits as f64 / total as f64)
}
