//! Synthetic data for the monotone-link regression benchmarks.
//!
//! Random numbers come from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64`; normals use `rand_distr::StandardNormal`. A dataset draws
//! its design first (row by row, AR(1) recursion across columns) and then, per
//! observation, one uniform deciding the noise component followed by one
//! noise draw. The link is applied last, so datasets that differ only in their
//! link share the same design and noise.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{default_names, Dataset};
use crate::error::{Error, Result};

/// Leading entries of the default coefficient vector; the rest are zero.
pub const DEFAULT_BETA0_HEAD: [f64; 8] = [5.0, 4.0, 3.0, 2.0, 1.0, -1.0, -3.0, -5.0];

/// Strictly increasing map applied to `x^T beta0 + eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Identity,
    Cubic,
    Exp,
}

impl Link {
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Link::Identity => t,
            Link::Cubic => t * t * t,
            Link::Exp => t.exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Cubic => "cubic",
            Link::Exp => "exp",
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Link::Identity),
            "cubic" | "cube" => Ok(Link::Cubic),
            "exp" => Ok(Link::Exp),
            other => Err(Error::InvalidInput(format!("unknown link '{other}'"))),
        }
    }
}

/// Gaussian noise with an optional Cauchy-contaminated fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub gaussian_sd: f64,
    pub outlier_fraction: f64,
    pub cauchy_scale: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            gaussian_sd: 1.0,
            outlier_fraction: 0.0,
            cauchy_scale: 0.01,
        }
    }
}

/// Full description of a synthetic data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub d: usize,
    pub beta0: Vec<f64>,
    pub ar1_rho: f64,
    pub link: Link,
    pub noise: NoiseSpec,
    pub seed: u64,
}

/// `(5, 4, 3, 2, 1, -1, -3, -5, 0, ..., 0)` truncated or padded to `d`.
pub fn default_beta0(d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| DEFAULT_BETA0_HEAD.get(j).copied().unwrap_or(0.0))
        .collect()
}

impl SimSpec {
    /// AR(0.5) Gaussian design, default coefficients, standard normal noise.
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            beta0: default_beta0(d),
            ar1_rho: 0.5,
            link: Link::Identity,
            noise: NoiseSpec::default(),
            seed,
        }
    }

    pub fn with_link(mut self, link: Link) -> Self {
        self.link = link;
        self
    }

    pub fn with_outliers(mut self, fraction: f64) -> Self {
        self.noise.outlier_fraction = fraction;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n < 2 || self.d < 1 {
            return bad(format!("need n >= 2 and d >= 1, got n={}, d={}", self.n, self.d));
        }
        if self.beta0.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: self.beta0.len(),
            });
        }
        if self.beta0[0] == 0.0 || self.beta0.iter().any(|b| !b.is_finite()) {
            return bad("beta0 must be finite with a nonzero first entry".into());
        }
        if !(self.ar1_rho.abs() < 1.0) {
            return bad(format!("ar1_rho must lie in (-1, 1), got {}", self.ar1_rho));
        }
        let nz = &self.noise;
        if !(nz.gaussian_sd > 0.0 && nz.gaussian_sd.is_finite()) {
            return bad(format!("gaussian_sd must be positive, got {}", nz.gaussian_sd));
        }
        if !(0.0..1.0).contains(&nz.outlier_fraction) {
            return bad(format!(
                "outlier_fraction must lie in [0, 1), got {}",
                nz.outlier_fraction
            ));
        }
        if !(nz.cauchy_scale > 0.0 && nz.cauchy_scale.is_finite()) {
            return bad(format!("cauchy_scale must be positive, got {}", nz.cauchy_scale));
        }
        Ok(())
    }

    /// `beta0 / beta0[0]`.
    pub fn beta_star(&self) -> Vec<f64> {
        let b1 = self.beta0[0];
        let mut out: Vec<f64> = self.beta0.iter().map(|b| b / b1).collect();
        out[0] = 1.0;
        out
    }

    /// Indices of nonzero `beta0` entries other than the first.
    pub fn true_support(&self) -> Vec<usize> {
        self.beta0
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// A generated dataset with its anchored truth.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: Dataset,
    pub beta_star: Vec<f64>,
    /// True where the noise was drawn from the Cauchy component.
    pub outlier_mask: Vec<bool>,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("|rho| must be < 1, got {rho}")))
    }
}

fn draw_design(rng: &mut ChaCha20Rng, n: usize, d: usize, rho: f64) -> DMatrix<f64> {
    let innovation = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let v = if j == 0 { z } else { rho * prev + innovation * z };
            x[(i, j)] = v;
            prev = v;
        }
    }
    x
}

/// Rows i.i.d. `N_d(0, Sigma)` with `Sigma_jk = rho^|j-k|`.
pub fn ar1_gaussian_design(n: usize, d: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>> {
    check_rho(rho)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(draw_design(&mut rng, n, d, rho))
}

/// Draws a dataset `y = G(x^T beta0 + eps)` from `spec`.
pub fn generate_dataset(spec: &SimSpec) -> Result<SimulatedData> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let x = draw_design(&mut rng, spec.n, spec.d, spec.ar1_rho);
    let noise = &spec.noise;
    let mut y = Vec::with_capacity(spec.n);
    let mut mask = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let pick: f64 = rng.random();
        let outlier = pick < noise.outlier_fraction;
        let eps = if outlier {
            let u: f64 = rng.random();
            noise.cauchy_scale * (std::f64::consts::PI * (u - 0.5)).tan()
        } else {
            let z: f64 = rng.sample(StandardNormal);
            noise.gaussian_sd * z
        };
        let index: f64 = (0..spec.d).map(|j| x[(i, j)] * spec.beta0[j]).sum();
        y.push(spec.link.apply(index + eps));
        mask.push(outlier);
    }
    let dataset = Dataset::new(y, x, default_names(spec.d))?;
    Ok(SimulatedData {
        dataset,
        beta_star: spec.beta_star(),
        outlier_mask: mask,
    })
}
