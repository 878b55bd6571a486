//! Smooth surrogates for the pairwise indicator `1(u > 0)`.
//!
//! Each family is a symmetric CDF `F` with `F(-u) = 1 - F(u)` and
//! `F(0) = 1/2`. The loss uses `F`, the gradient `F'`, and the Hessian `F''`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

/// Beyond this magnitude the exponential families are evaluated on their
/// saturated branch.
const SATURATION: f64 = 700.0;

/// The smoothing CDF family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothingKernel {
    /// Logistic CDF `1 / (1 + e^{-u})`.
    Sigmoid,
    /// Standard normal CDF.
    #[default]
    #[serde(rename = "gaussian")]
    GaussianCdf,
    /// Standard Laplace CDF.
    #[serde(rename = "doubleexp")]
    DoubleExponential,
}

impl SmoothingKernel {
    pub const ALL: [SmoothingKernel; 3] = [
        SmoothingKernel::Sigmoid,
        SmoothingKernel::GaussianCdf,
        SmoothingKernel::DoubleExponential,
    ];

    /// Token used in config files and on the command line.
    pub fn token(self) -> &'static str {
        match self {
            SmoothingKernel::Sigmoid => "sigmoid",
            SmoothingKernel::GaussianCdf => "gaussian",
            SmoothingKernel::DoubleExponential => "doubleexp",
        }
    }

    /// `F(u)`. Unchecked: callers guarantee `u` is finite.
    #[inline]
    pub fn cdf(self, u: f64) -> f64 {
        match self {
            SmoothingKernel::Sigmoid => {
                if u > SATURATION {
                    1.0
                } else if u < -SATURATION {
                    0.0
                } else if u >= 0.0 {
                    1.0 / (1.0 + (-u).exp())
                } else {
                    let e = u.exp();
                    e / (1.0 + e)
                }
            }
            SmoothingKernel::GaussianCdf => 0.5 * erfc(-u * FRAC_1_SQRT_2),
            SmoothingKernel::DoubleExponential => {
                if u > SATURATION {
                    1.0
                } else if u < -SATURATION {
                    0.0
                } else if u >= 0.0 {
                    1.0 - 0.5 * (-u).exp()
                } else {
                    0.5 * u.exp()
                }
            }
        }
    }

    /// `F'(u)`.
    #[inline]
    pub fn pdf(self, u: f64) -> f64 {
        match self {
            SmoothingKernel::Sigmoid => {
                if u.abs() > SATURATION {
                    0.0
                } else {
                    let e = (-u.abs()).exp();
                    e / ((1.0 + e) * (1.0 + e))
                }
            }
            SmoothingKernel::GaussianCdf => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
            SmoothingKernel::DoubleExponential => {
                if u.abs() > SATURATION {
                    0.0
                } else {
                    0.5 * (-u.abs()).exp()
                }
            }
        }
    }

    /// `F''(u)`, with `F''(0) = 0` for the double-exponential family.
    #[inline]
    pub fn curvature(self, u: f64) -> f64 {
        match self {
            SmoothingKernel::Sigmoid => {
                if u.abs() > SATURATION {
                    0.0
                } else {
                    // e = e^{-|u|}; F'(1 - 2F) written in terms of e so that
                    // the sign is exact on either side of 0.
                    let e = (-u.abs()).exp();
                    let mag = e * (1.0 - e) / ((1.0 + e) * (1.0 + e) * (1.0 + e));
                    -u.signum() * mag
                }
            }
            SmoothingKernel::GaussianCdf => -u * self.pdf(u),
            SmoothingKernel::DoubleExponential => {
                if u == 0.0 || u.abs() > SATURATION {
                    0.0
                } else {
                    -u.signum() * 0.5 * (-u.abs()).exp()
                }
            }
        }
    }

    /// `F(u)` and `F'(u)` in one call.
    #[inline]
    pub fn cdf_pdf(self, u: f64) -> (f64, f64) {
        (self.cdf(u), self.pdf(u))
    }
}

impl fmt::Display for SmoothingKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for SmoothingKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(SmoothingKernel::Sigmoid),
            "gaussian" => Ok(SmoothingKernel::GaussianCdf),
            "doubleexp" => Ok(SmoothingKernel::DoubleExponential),
            other => Err(Error::InvalidInput(format!(
                "unknown kernel '{other}' (expected sigmoid, gaussian or doubleexp)"
            ))),
        }
    }
}

fn check_finite(u: f64) -> Result<()> {
    if u.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("kernel argument must be finite, got {u}")))
    }
}

/// Checked `F(u)`.
pub fn kernel_cdf(kernel: SmoothingKernel, u: f64) -> Result<f64> {
    check_finite(u)?;
    Ok(kernel.cdf(u))
}

/// Checked `F'(u)`.
pub fn kernel_pdf(kernel: SmoothingKernel, u: f64) -> Result<f64> {
    check_finite(u)?;
    Ok(kernel.pdf(u))
}

/// Checked `F''(u)`.
pub fn kernel_curvature(kernel: SmoothingKernel, u: f64) -> Result<f64> {
    check_finite(u)?;
    Ok(kernel.curvature(u))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson integration of the normal density, independent of
    /// any erf routine.
    fn normal_cdf_quadrature(u: f64) -> f64 {
        let steps = 200_000;
        let h = u / steps as f64;
        let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
        let mut acc = phi(0.0) + phi(u);
        for k in 1..steps {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * phi(k as f64 * h);
        }
        0.5 + acc * h / 3.0
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(kernel_cdf(SmoothingKernel::Sigmoid, 0.0).unwrap(), 0.5);
        let de = kernel_cdf(SmoothingKernel::DoubleExponential, 2f64.ln()).unwrap();
        assert!((de - 0.75).abs() < 1e-15);
        let oracle = normal_cdf_quadrature(1.0);
        let got = kernel_cdf(SmoothingKernel::GaussianCdf, 1.0).unwrap();
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
        assert!((got - 0.841345).abs() < 1e-6);
    }

    #[test]
    fn gaussian_cdf_matches_quadrature_on_a_grid() {
        for &u in &[-6.0, -3.5, -1.0, -0.25, 0.3, 2.0, 4.5] {
            let oracle = normal_cdf_quadrature(u);
            let got = SmoothingKernel::GaussianCdf.cdf(u);
            assert!((got - oracle).abs() < 1e-12, "u={u}: {got} vs {oracle}");
        }
    }

    #[test]
    fn pdf_examples() {
        assert_eq!(kernel_pdf(SmoothingKernel::Sigmoid, 0.0).unwrap(), 0.25);
        let g0 = kernel_pdf(SmoothingKernel::GaussianCdf, 0.0).unwrap();
        assert!((g0 - 0.398942).abs() < 1e-6);
        let h = 1e-6;
        let k = SmoothingKernel::Sigmoid;
        let fd = (k.cdf(2.0 + h) - k.cdf(2.0 - h)) / (2.0 * h);
        let got = kernel_pdf(k, 2.0).unwrap();
        assert!((got - fd).abs() < 1e-9);
        assert!((got - 0.104994).abs() < 1e-6);
    }

    #[test]
    fn curvature_examples() {
        assert_eq!(kernel_curvature(SmoothingKernel::GaussianCdf, 0.0).unwrap(), 0.0);
        assert_eq!(kernel_curvature(SmoothingKernel::Sigmoid, 0.0).unwrap(), 0.0);
        assert_eq!(
            kernel_curvature(SmoothingKernel::DoubleExponential, 0.0).unwrap(),
            0.0
        );
        let k = SmoothingKernel::GaussianCdf;
        let h = 1e-4;
        let fd = (k.cdf(1.0 + h) - 2.0 * k.cdf(1.0) + k.cdf(1.0 - h)) / (h * h);
        let got = kernel_curvature(k, 1.0).unwrap();
        assert!((got - fd).abs() < 1e-6, "{got} vs {fd}");
        assert!((got + 0.241971).abs() < 1e-6);
    }

    #[test]
    fn non_finite_arguments_are_rejected() {
        for k in SmoothingKernel::ALL {
            assert!(matches!(kernel_cdf(k, f64::NAN), Err(Error::Domain(_))));
            assert!(kernel_pdf(k, f64::INFINITY).is_err());
            assert!(kernel_curvature(k, f64::NEG_INFINITY).is_err());
        }
    }

    #[test]
    fn symmetry_and_range_on_grid() {
        for k in SmoothingKernel::ALL {
            assert_eq!(k.cdf(0.0), 0.5);
            let mut prev = 0.0;
            for step in -4000..=4000 {
                let u = step as f64 * 0.01;
                let f = k.cdf(u);
                assert!((0.0..=1.0).contains(&f));
                assert!(f >= prev, "{k} not monotone at {u}");
                prev = f;
                assert!((k.cdf(-u) - (1.0 - f)).abs() <= 1e-12, "{k} asymmetric at {u}");
            }
        }
    }

    #[test]
    fn pdf_matches_central_differences() {
        let h = 1e-5;
        for k in SmoothingKernel::ALL {
            for step in -200..=200 {
                let u = step as f64 * 0.05;
                if k == SmoothingKernel::DoubleExponential && u == 0.0 {
                    continue;
                }
                let fd = (k.cdf(u + h) - k.cdf(u - h)) / (2.0 * h);
                assert!((k.pdf(u) - fd).abs() <= 1e-6, "{k} at {u}");
                assert!(k.pdf(u) >= 0.0);
                if u != 0.0 {
                    assert!(k.curvature(u) * u.signum() <= 0.0, "{k} at {u}");
                }
            }
        }
    }

    #[test]
    fn tail_decay_is_exponential() {
        // Per-family constants with 1 - F(u) <= c1 * exp(-c2 u) on [0, 40]:
        // logistic tail 1/(1+e^u) <= e^{-u}; Laplace tail e^{-u}/2;
        // normal tail <= e^{-u^2/2}/2 <= (sqrt(e)/2) e^{-u}.
        let constants = [
            (SmoothingKernel::Sigmoid, 1.0, 1.0),
            (SmoothingKernel::GaussianCdf, 0.5 * 0.5f64.exp(), 1.0),
            (SmoothingKernel::DoubleExponential, 0.5, 1.0),
        ];
        for (k, c1, c2) in constants {
            for step in 0..=4000 {
                let u = step as f64 * 0.01;
                // 1 - F(u) computed through the symmetric branch for accuracy.
                let tail = k.cdf(-u);
                assert!(tail <= c1 * (-c2 * u).exp() * (1.0 + 1e-12), "{k} at {u}");
            }
        }
    }

    #[test]
    fn sharpening_approaches_the_indicator() {
        for k in SmoothingKernel::ALL {
            for &z in &[0.05, 0.5, 2.0] {
                let mut prev_pos = 0.0;
                let mut prev_neg = 1.0;
                for a in [1.0, 10.0, 100.0, 1e3, 1e4, 1e5] {
                    let pos = k.cdf(a * z);
                    let neg = k.cdf(-a * z);
                    assert!(pos >= prev_pos && neg <= prev_neg);
                    prev_pos = pos;
                    prev_neg = neg;
                }
                assert!((prev_pos - 1.0).abs() < 1e-9 && prev_neg < 1e-9);
            }
        }
    }

    #[test]
    fn saturated_branch() {
        for k in [SmoothingKernel::Sigmoid, SmoothingKernel::DoubleExponential] {
            assert_eq!(k.cdf(800.0), 1.0);
            assert_eq!(k.cdf(-800.0), 0.0);
            assert_eq!(k.pdf(800.0), 0.0);
            assert_eq!(k.curvature(-800.0), 0.0);
        }
    }

    #[test]
    fn tokens_round_trip() {
        for k in SmoothingKernel::ALL {
            assert_eq!(k.token().parse::<SmoothingKernel>().unwrap(), k);
        }
        assert_eq!(
            "GAUSSIAN".parse::<SmoothingKernel>().unwrap(),
            SmoothingKernel::GaussianCdf
        );
        assert!("cauchy".parse::<SmoothingKernel>().is_err());
    }
}
