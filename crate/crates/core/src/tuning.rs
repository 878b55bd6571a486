//! K-fold cross-validation with a within-fold Kendall score and (lambda, alpha)
//! grid search.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kendall::tau_a;
use crate::optim::{fit_rmrce, FitConfig, Method};

pub const DEFAULT_ALPHAS: [f64; 5] = [1.0, 3.0, 5.0, 7.0, 9.0];

/// `count` log-spaced points on `[lo, hi]`, ascending.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvGrid {
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvGrid {
    fn default() -> Self {
        Self {
            lambdas: log_spaced(1e-3, 1.0, 20),
            alphas: DEFAULT_ALPHAS.to_vec(),
            folds: 5,
            seed: 0,
        }
    }
}

impl CvGrid {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.lambdas.is_empty() || self.alphas.is_empty() {
            return Err(Error::InvalidInput("lambda and alpha lists must be nonempty".into()));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidInput("lambdas must be positive and finite".into()));
        }
        if self.lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("lambdas must be sorted ascending".into()));
        }
        if self.alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidInput("alphas must be positive and finite".into()));
        }
        check_folds(n, self.folds)
    }
}

fn check_folds(n: usize, folds: usize) -> Result<()> {
    if folds < 2 {
        return Err(Error::InvalidInput(format!("folds must be at least 2, got {folds}")));
    }
    if folds > n {
        return Err(Error::InvalidInput(format!("folds ({folds}) exceed the number of observations ({n})")));
    }
    if n / folds < 2 {
        return Err(Error::InvalidInput(format!(
            "{folds} folds over {n} observations leave a fold with fewer than 2 points"
        )));
    }
    Ok(())
}

/// Seeded fold labels. Sizes differ by at most one and the larger folds come
/// first.
pub fn fold_assignments(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    check_folds(n, folds)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut labels = vec![0; n];
    let mut pos = 0;
    for k in 0..folds {
        let size = base + usize::from(k < extra);
        for &i in &perm[pos..pos + size] {
            labels[i] = k;
        }
        pos += size;
    }
    Ok(labels)
}

fn fold_rows(assignments: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assignments.len()).partition(|&i| assignments[i] != k)
}

/// Kendall tau-a on the held-out rows of fold `k` for coefficients produced by
/// `fit` on the remaining rows.
fn fold_score<F>(data: &Dataset, assignments: &[usize], k: usize, fit: &F) -> Result<f64>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    let (train, test) = fold_rows(assignments, k);
    if test.len() < 2 {
        return Err(Error::InvalidInput(format!("fold {k} has fewer than 2 observations")));
    }
    let coef = fit(&data.subset(&train)?)?;
    let held = data.subset(&test)?;
    let u = held.index(&coef);
    Ok(tau_a(held.y(), &u))
}

/// Per-fold held-out scores for an arbitrary fitter and a fixed split.
pub fn cv_fold_scores_with<F>(data: &Dataset, assignments: &[usize], fit: &F) -> Result<Vec<f64>>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    if assignments.len() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), got: assignments.len() });
    }
    let folds = assignments.iter().max().map_or(0, |m| m + 1);
    (0..folds)
        .into_par_iter()
        .map(|k| fold_score(data, assignments, k, fit))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean held-out within-fold Kendall score of `fit_rmrce` under `config`.
pub fn cv_score(data: &Dataset, config: &FitConfig, folds: usize, seed: u64) -> Result<f64> {
    config.validate()?;
    let assignments = fold_assignments(data.n(), folds, seed)?;
    let scores = cv_fold_scores_with(data, &assignments, &|train: &Dataset| {
        fit_rmrce(train, config).map(|r| r.coef)
    })?;
    Ok(mean(&scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub lambda: f64,
    pub alpha: f64,
    /// `None` when a fold fit failed.
    pub score: Option<f64>,
    pub fold_scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub score_table: Vec<CvCell>,
    pub best_lambda: f64,
    pub best_alpha: f64,
    pub best_score: f64,
    pub fold_assignments: Vec<usize>,
}

impl CvResult {
    pub fn score(&self, lambda: f64, alpha: f64) -> Option<f64> {
        self.score_table
            .iter()
            .find(|c| c.lambda == lambda && c.alpha == alpha)
            .and_then(|c| c.score)
    }
}

/// Evaluates every `(lambda, alpha)` cell on one shared fold split and picks
/// the best mean score. Ties go to the smallest lambda, then the smallest
/// alpha, then the earliest cell.
pub fn grid_search(data: &Dataset, grid: &CvGrid, base: &FitConfig) -> Result<CvResult> {
    grid.validate(data.n())?;
    base.validate()?;
    let assignments = fold_assignments(data.n(), grid.folds, grid.seed)?;
    let cells: Vec<(f64, f64)> = grid
        .lambdas
        .iter()
        .flat_map(|&l| grid.alphas.iter().map(move |&a| (l, a)))
        .collect();

    let table: Vec<CvCell> = cells
        .par_iter()
        .map(|&(lambda, alpha)| {
            let config = FitConfig { lambda, alpha, ..base.clone() };
            let fitter = |train: &Dataset| fit_rmrce(train, &config).map(|r| r.coef);
            match cv_fold_scores_with(data, &assignments, &fitter) {
                Ok(fold_scores) => CvCell {
                    lambda,
                    alpha,
                    score: Some(mean(&fold_scores)),
                    fold_scores,
                    error: None,
                },
                Err(e) => {
                    log::warn!("cv cell lambda={lambda} alpha={alpha} failed: {e}");
                    CvCell { lambda, alpha, score: None, fold_scores: Vec::new(), error: Some(e.to_string()) }
                }
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..table.len()).collect();
    order.sort_by(|&p, &q| {
        let (a, b) = (&table[p], &table[q]);
        a.lambda.total_cmp(&b.lambda).then(a.alpha.total_cmp(&b.alpha))
    });
    let mut best: Option<usize> = None;
    for i in order {
        if let Some(s) = table[i].score {
            if best.is_none_or(|b| s > table[b].score.unwrap_or(f64::NEG_INFINITY)) {
                best = Some(i);
            }
        }
    }
    let best = best.ok_or(Error::AllCellsFailed)?;
    Ok(CvResult {
        best_lambda: table[best].lambda,
        best_alpha: table[best].alpha,
        best_score: table[best].score.unwrap_or(f64::NAN),
        score_table: table,
        fold_assignments: assignments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub score: f64,
    /// Mean score per candidate; `None` where a fold fit failed.
    pub scores: Vec<Option<f64>>,
}

/// Picks lambda for any [`Method`] by the same within-fold Kendall score,
/// with one shared split. Ties go to the smallest lambda.
pub fn cv_select_lambda(
    data: &Dataset,
    method: Method,
    lambdas: &[f64],
    config: &FitConfig,
    folds: usize,
    seed: u64,
) -> Result<LambdaSelection> {
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("lambda list is empty".into()));
    }
    let assignments = fold_assignments(data.n(), folds, seed)?;
    let scores: Vec<Option<f64>> = lambdas
        .par_iter()
        .map(|&l| {
            let fitter = |train: &Dataset| method.fit(train, l, config).map(|r| r.coef);
            cv_fold_scores_with(data, &assignments, &fitter).ok().map(|s| mean(&s))
        })
        .collect();
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]));
    let best = order
        .into_iter()
        .filter(|&i| scores[i].is_some())
        .fold(None::<usize>, |best, i| match best {
            Some(b) if scores[b] >= scores[i] => Some(b),
            _ => Some(i),
        })
        .ok_or(Error::AllCellsFailed)?;
    Ok(LambdaSelection {
        lambda: lambdas[best],
        score: scores[best].unwrap_or(f64::NAN),
        scores,
    })
}

/// Smoothing rate `(n / (s ln d))^{1/3}`.
pub fn recommended_alpha(n: usize, s: usize, d: f64) -> Result<f64> {
    if n == 0 || s == 0 {
        return Err(Error::Domain("n and s must be at least 1".into()));
    }
    if !(d >= 2.0) {
        return Err(Error::Domain(format!("dimension must be at least 2, got {d}")));
    }
    Ok((n as f64 / (s as f64 * d.ln())).cbrt())
}

/// Rule of thumb `10 ln d <= n^{1/3}`. Returns the verdict and a message.
pub fn dimension_rule_check(n: usize, d: f64) -> (bool, String) {
    let lhs = 10.0 * d.ln();
    let rhs = (n as f64).cbrt();
    let ok = lhs <= rhs;
    let msg = if ok {
        format!("10 ln d = {lhs:.3} <= n^(1/3) = {rhs:.3}")
    } else {
        format!("dimension rule violated: 10 ln d = {lhs:.3} > n^(1/3) = {rhs:.3}; estimates may be unreliable")
    };
    (ok, msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kendall::brute_force_numerator;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::E;

    fn linear(seed: u64, n: usize, beta: &[f64], noise: f64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| beta.iter().map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let y = rows
            .iter()
            .map(|r| {
                let e: f64 = rng.sample(StandardNormal);
                r.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>() + noise * e
            })
            .collect();
        Dataset::from_rows(y, &rows).unwrap()
    }

    #[test]
    fn folds_are_balanced_and_reproducible() {
        let a = fold_assignments(23, 5, 9).unwrap();
        assert_eq!(a, fold_assignments(23, 5, 9).unwrap());
        assert_ne!(a, fold_assignments(23, 5, 10).unwrap());
        let sizes: Vec<usize> = (0..5).map(|k| a.iter().filter(|&&f| f == k).count()).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        assert!(fold_assignments(9, 5, 0).is_err());
        assert!(fold_assignments(10, 11, 0).is_err());
        assert!(fold_assignments(10, 1, 0).is_err());
    }

    #[test]
    fn oracle_coefficients_on_noiseless_data_score_one() {
        let beta = [1.0, -0.5, 2.0];
        let data = linear(1, 40, &beta, 0.0);
        let data = data.with_response(data.y().iter().map(|v| v.exp()).collect()).unwrap();
        let a = fold_assignments(40, 5, 3).unwrap();
        let scores = cv_fold_scores_with(&data, &a, &|_: &Dataset| Ok(beta.to_vec())).unwrap();
        assert_eq!(scores, vec![1.0; 5]);
    }

    #[test]
    fn hand_enumerated_two_fold_score() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0], vec![3.0, -1.0]];
        let y = vec![0.5, 0.1, 0.9, 0.2];
        let data = Dataset::from_rows(y, &rows).unwrap();
        let coef = vec![1.0, 2.0];
        // Fold 0 = {0, 2}: u = 1, 6; y = 0.5, 0.9 -> concordant.
        // Fold 1 = {1, 3}: u = 2, 1; y = 0.1, 0.2 -> discordant.
        let a = vec![0, 1, 0, 1];
        let scores = cv_fold_scores_with(&data, &a, &|_: &Dataset| Ok(coef.clone())).unwrap();
        assert_eq!(scores, vec![1.0, -1.0]);
    }

    #[test]
    fn within_fold_score_matches_brute_force() {
        let data = linear(2, 30, &[1.0, 0.7, -0.3], 1.0);
        let a = fold_assignments(30, 3, 4).unwrap();
        let coef = vec![1.0, 0.2, 0.1];
        let scores = cv_fold_scores_with(&data, &a, &|_: &Dataset| Ok(coef.clone())).unwrap();
        for (k, s) in scores.iter().enumerate() {
            let rows: Vec<usize> = (0..30).filter(|&i| a[i] == k).collect();
            let y: Vec<f64> = rows.iter().map(|&i| data.y()[i]).collect();
            let u: Vec<f64> = rows.iter().map(|&i| data.index(&coef)[i]).collect();
            let m = rows.len() as f64;
            assert_eq!(*s, brute_force_numerator(&y, &u) as f64 / (m * (m - 1.0) / 2.0));
        }
    }

    #[test]
    fn anchor_only_score_is_centered_under_null() {
        let scores: Vec<f64> = (0..50)
            .map(|seed| {
                let data = linear(100 + seed, 60, &[0.0, 0.0, 0.0], 1.0);
                let a = fold_assignments(60, 5, seed).unwrap();
                let s = cv_fold_scores_with(&data, &a, &|_: &Dataset| Ok(vec![1.0, 0.0, 0.0])).unwrap();
                mean(&s)
            })
            .collect();
        let m = mean(&scores);
        let sd = (scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / 49.0).sqrt();
        assert!(m.abs() <= 3.0 * sd / 50f64.sqrt(), "mean {m} sd {sd}");
    }

    #[test]
    fn training_fit_ignores_held_out_rows() {
        let data = linear(3, 40, &[1.0, 0.5, 0.0, -0.4], 0.5);
        let a = fold_assignments(40, 4, 1).unwrap();
        let (train, test) = fold_rows(&a, 2);
        let mut perm_rows: Vec<usize> = (0..40).collect();
        let mut shuffled = test.clone();
        shuffled.reverse();
        for (&dst, &src) in test.iter().zip(&shuffled) {
            perm_rows[dst] = src;
        }
        let permuted = data.subset(&perm_rows).unwrap();
        let cfg = FitConfig { lambda: 0.02, ..FitConfig::default() };
        let f1 = fit_rmrce(&data.subset(&train).unwrap(), &cfg).unwrap();
        let f2 = fit_rmrce(&permuted.subset(&fold_rows(&a, 2).0).unwrap(), &cfg).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn cv_score_is_bounded_and_reproducible() {
        let data = linear(4, 50, &[1.0, 0.8, 0.0, 0.0], 0.5);
        let cfg = FitConfig { lambda: 0.01, ..FitConfig::default() };
        let s = cv_score(&data, &cfg, 5, 11).unwrap();
        assert!((-1.0..=1.0).contains(&s));
        assert_eq!(s, cv_score(&data, &cfg, 5, 11).unwrap());
        assert!(s > 0.5);
    }

    #[test]
    fn grid_search_single_cell_and_ties() {
        let data = linear(5, 40, &[1.0, 0.6, 0.0], 0.5);
        let grid = CvGrid { lambdas: vec![0.02], alphas: vec![3.0], folds: 4, seed: 2 };
        let r = grid_search(&data, &grid, &FitConfig::default()).unwrap();
        assert_eq!((r.best_lambda, r.best_alpha), (0.02, 3.0));
        assert_eq!(r.score_table.len(), 1);

        let dup = CvGrid { lambdas: vec![0.02, 0.02], alphas: vec![3.0], folds: 4, seed: 2 };
        let r2 = grid_search(&data, &dup, &FitConfig::default()).unwrap();
        assert_eq!(r2.score_table[0].score, r2.score_table[1].score);
        assert_eq!(r2.best_score, r.best_score);
        assert_eq!(r2.fold_assignments, r.fold_assignments);
    }

    #[test]
    fn grid_search_avoids_everything_zero_lambda() {
        let data = linear(6, 60, &[1.0, 1.5, -1.0, 0.0, 0.0], 0.3);
        let grid = CvGrid { lambdas: vec![0.01, 1e6], alphas: vec![5.0], folds: 5, seed: 8 };
        let r = grid_search(&data, &grid, &FitConfig::default()).unwrap();
        let good = r.score(0.01, 5.0).unwrap();
        let zero = r.score(1e6, 5.0).unwrap();
        assert!(good > zero);
        assert_eq!(r.best_lambda, 0.01);
        assert!(r.score_table.iter().all(|c| c.score.is_none_or(|s| (-1.0..=1.0).contains(&s))));
        assert_eq!(r, grid_search(&data, &grid, &FitConfig::default()).unwrap());
    }

    #[test]
    fn grid_search_rejects_bad_grids() {
        let data = linear(7, 20, &[1.0, 0.5], 0.5);
        let bad = CvGrid { lambdas: vec![0.1, 0.01], ..CvGrid::default() };
        assert!(grid_search(&data, &bad, &FitConfig::default()).is_err());
        let folds = CvGrid { folds: 21, ..CvGrid::default() };
        assert!(grid_search(&data, &folds, &FitConfig::default()).is_err());
    }

    #[test]
    fn lambda_selection_matches_grid_search_for_rmrce() {
        let data = linear(9, 50, &[1.0, 0.9, 0.0, -0.5], 0.5);
        let lambdas = [0.005, 0.02, 0.5];
        let cfg = FitConfig::default();
        let sel = cv_select_lambda(&data, Method::Rmrce, &lambdas, &cfg, 5, 3).unwrap();
        let grid = CvGrid { lambdas: lambdas.to_vec(), alphas: vec![cfg.alpha], folds: 5, seed: 3 };
        let r = grid_search(&data, &grid, &cfg).unwrap();
        assert_eq!(sel.lambda, r.best_lambda);
        assert_eq!(sel.score, r.best_score);
        let lasso = cv_select_lambda(&data, Method::Lasso, &lambdas, &cfg, 5, 3).unwrap();
        assert!(lambdas.contains(&lasso.lambda));
    }

    #[test]
    fn default_grid_shape() {
        let g = CvGrid::default();
        assert_eq!(g.lambdas.len(), 20);
        assert!((g.lambdas[0] - 1e-3).abs() < 1e-15 && (g.lambdas[19] - 1.0).abs() < 1e-12);
        assert_eq!(g.alphas, vec![1.0, 3.0, 5.0, 7.0, 9.0]);
        assert_eq!(g.folds, 5);
    }

    #[test]
    fn recommended_alpha_values() {
        assert!((recommended_alpha(8, 1, E).unwrap() - 2.0).abs() < 1e-12);
        assert!((recommended_alpha(5, 5, E).unwrap() - 1.0).abs() < 1e-12);
        let v = recommended_alpha(1000, 8, 200.0).unwrap();
        let oracle = (1000.0 / (8.0 * 200f64.ln())).powf(1.0 / 3.0);
        assert!((v - oracle).abs() < 1e-12 && (v - 2.868).abs() < 1e-3);
        assert!(recommended_alpha(10, 1, 1.5).is_err());
        assert!(recommended_alpha(10, 0, 3.0).is_err());
    }

    #[test]
    fn dimension_rule() {
        assert!(dimension_rule_check(1_000_000, 2.0).0);
        assert!(!dimension_rule_check(57, 200.0).0);
        assert!(dimension_rule_check(1000, E).0);
    }
}
