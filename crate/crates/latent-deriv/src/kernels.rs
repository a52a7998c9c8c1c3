//! Kernels defined through compactly supported Fourier transforms, and the
//! deconvolution kernel
//!
//! ```text
//! K̂(u) = (1/2π) ∫ e^{−itu} K^ft(t) / f̂ε^ft(t/b) dt
//! ```
//!
//! evaluated by trapezoid quadrature on the characteristic-function grid.
//! K^ft lives on [−1, 1] with K^ft(0) = 1, so the integral runs over
//! |t| ≤ 1/b once rescaled, which is why the grid must cover [−1/b, 1/b].

use num_complex::Complex64;

use crate::charfun::{ridge, CharFunSet};
use crate::error::{Error, Result};

/// Kernels shipped with the crate, named by their Fourier transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSpec {
    /// K^ft is 1 on [−1/2, 1/2] and ramps linearly to 0 at ±1. Flat near the
    /// origin, so every kernel moment vanishes ("infinite order"); the
    /// default choice, forgiving to bandwidth selection.
    FlatTopTrapezoid,
    /// K^ft(t) = (1−t²)³ on [−1, 1]. A literal second-order kernel
    /// (∫u²K ≠ 0) for sensitivity checks against the flat-top default.
    PolynomialOrder2,
}

/// Kernel order α: number of vanishing moments plus one, or infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelOrder {
    Finite(u32),
    Infinite,
}

impl KernelSpec {
    /// Evaluate K^ft(t). Even, bounded by 1, zero outside [−1, 1], exactly 1
    /// at t = 0.
    pub fn kft(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            KernelSpec::FlatTopTrapezoid => {
                if a <= 0.5 {
                    1.0
                } else if a <= 1.0 {
                    2.0 * (1.0 - a)
                } else {
                    0.0
                }
            }
            KernelSpec::PolynomialOrder2 => {
                if a <= 1.0 {
                    let s = 1.0 - t * t;
                    s * s * s
                } else {
                    0.0
                }
            }
        }
    }

    pub fn order(self) -> KernelOrder {
        match self {
            KernelSpec::FlatTopTrapezoid => KernelOrder::Infinite,
            KernelSpec::PolynomialOrder2 => KernelOrder::Finite(2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelSpec::FlatTopTrapezoid => "flat_top_trapezoid",
            KernelSpec::PolynomialOrder2 => "polynomial_order2",
        }
    }

    /// Parse a CLI/config kernel name.
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "flat_top_trapezoid" | "flat-top" | "flat_top" | "flattop" => {
                Ok(KernelSpec::FlatTopTrapezoid)
            }
            "polynomial_order2" | "poly2" | "polynomial2" => Ok(KernelSpec::PolynomialOrder2),
            other => Err(Error::InvalidConfig(format!(
                "unknown kernel {other:?}; expected flat_top_trapezoid or polynomial_order2"
            ))),
        }
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A validated positive bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(b: f64) -> Result<Self> {
        if b.is_finite() && b > 0.0 {
            Ok(Bandwidth(b))
        } else {
            Err(Error::InvalidConfig(format!("bandwidth must be positive, got {b}")))
        }
    }

    /// The default rule b = sd(X) · n^{−1/6}. The rate keeps the variance
    /// side of the bandwidth conditions comfortable under the flat-top
    /// kernel; the simulation harness is the calibration instrument.
    pub fn auto(sd_x: f64, n: usize) -> Result<Self> {
        if !(sd_x.is_finite() && sd_x > 0.0) {
            return Err(Error::InvalidInput(format!(
                "automatic bandwidth needs sd(X) > 0, got {sd_x}"
            )));
        }
        Bandwidth::new(sd_x * (n as f64).powf(-1.0 / 6.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_grid_covers(cfs: &CharFunSet, b: Bandwidth) -> Result<()> {
    let needed = 1.0 / b.value();
    if cfs.grid().t_max() + 1e-12 * needed < needed {
        return Err(Error::InvalidConfig(format!(
            "grid t_max {} does not cover 1/b = {}",
            cfs.grid().t_max(),
            needed
        )));
    }
    Ok(())
}

fn feps_or_err(cfs: &CharFunSet) -> Result<&[Complex64]> {
    cfs.feps_ft()
        .ok_or_else(|| Error::InvalidState("deconvolution kernel needs feps_ft on the grid".into()))
}

const IMAG_RESIDUAL_TOL: f64 = 1e-8;

/// Evaluate the deconvolution kernel K̂(u) (or its derivative) for every
/// u = u0 + m·du, m = 0..count, sharing one sweep over the frequency grid.
/// The imaginary part must cancel by conjugate symmetry; a residual above
/// 1e−8 is reported as a numerical failure.
fn deconv_row(
    spec: KernelSpec,
    cfs: &CharFunSet,
    b: Bandwidth,
    u0: f64,
    du: f64,
    count: usize,
    deriv: bool,
) -> Result<Vec<f64>> {
    check_grid_covers(cfs, b)?;
    let feps = feps_or_err(cfs)?;
    let grid = cfs.grid();
    let dt = grid.spacing();
    let bv = b.value();
    let rho = cfs.rho();
    let mut acc = vec![Complex64::ZERO; count];
    const ANCHOR: usize = 64;
    for (g, &tau) in grid.values().iter().enumerate() {
        let kft = spec.kft(bv * tau);
        if kft == 0.0 {
            continue;
        }
        let trap = if g == 0 || g == grid.len() - 1 { 0.5 } else { 1.0 };
        let mut coef = Complex64::new(trap * kft, 0.0) / ridge(feps[g], rho);
        if deriv {
            coef *= Complex64::new(0.0, -bv * tau);
        }
        // phase e^{−i·b·tau·u_m}, recurrence over m
        let step = Complex64::from_polar(1.0, -bv * tau * du);
        let mut ph = Complex64::from_polar(1.0, -bv * tau * u0);
        for (m, a) in acc.iter_mut().enumerate() {
            if m > 0 {
                ph = if m % ANCHOR == 0 {
                    Complex64::from_polar(1.0, -bv * tau * (u0 + m as f64 * du))
                } else {
                    ph * step
                };
            }
            *a += coef * ph;
        }
    }
    let scale = bv * dt / (2.0 * std::f64::consts::PI);
    let mut out = Vec::with_capacity(count);
    for (m, a) in acc.iter().enumerate() {
        let v = a * scale;
        if v.im.abs() > IMAG_RESIDUAL_TOL {
            return Err(Error::Numerical(format!(
                "deconvolution kernel at u = {} has imaginary residual {:.3e}",
                u0 + m as f64 * du,
                v.im
            )));
        }
        out.push(v.re);
    }
    Ok(out)
}

/// K̂(u) = (1/2π)∫ e^{−itu} K^ft(t)/f̂ε^ft(t/b) dt by trapezoid quadrature
/// over the grid carried by `cfs`. Errors if the grid does not cover
/// [−1/b, 1/b].
pub fn deconv_kernel_eval(
    spec: KernelSpec,
    cfs: &CharFunSet,
    b: Bandwidth,
    u: f64,
) -> Result<f64> {
    Ok(deconv_row(spec, cfs, b, u, 0.0, 1, false)?[0])
}

/// K̂′(u), the −it factor inside the same inverse-Fourier integral.
pub fn deconv_kernel_deriv_eval(
    spec: KernelSpec,
    cfs: &CharFunSet,
    b: Bandwidth,
    u: f64,
) -> Result<f64> {
    Ok(deconv_row(spec, cfs, b, u, 0.0, 1, true)?[0])
}

/// Evaluate K̂ (or K̂′ with `deriv`) on a uniformly spaced run of arguments.
/// Exposed for the literal double-sum estimator, which needs per-observation
/// kernel tables over an x-grid.
pub fn deconv_kernel_uniform(
    spec: KernelSpec,
    cfs: &CharFunSet,
    b: Bandwidth,
    u0: f64,
    du: f64,
    count: usize,
    deriv: bool,
) -> Result<Vec<f64>> {
    deconv_row(spec, cfs, b, u0, du, count, deriv)
}

/// Deconvolution density estimate of the latent regressor on `xgrid`:
/// f̌(x) = (1/nb) Σⱼ K̂((x−Xⱼ)/b), evaluated through the empirical CF of
/// `sample_x` so the cost is O((n + |xgrid|)·G).
pub fn deconv_density(
    sample_x: &[f64],
    spec: KernelSpec,
    cfs: &CharFunSet,
    b: Bandwidth,
    xgrid: &[f64],
) -> Result<Vec<f64>> {
    check_grid_covers(cfs, b)?;
    let feps = feps_or_err(cfs)?;
    if sample_x.is_empty() {
        return Err(Error::InvalidInput("deconv_density needs a nonempty sample".into()));
    }
    let grid = cfs.grid();
    let dt = grid.spacing();
    let bv = b.value();
    let rho = cfs.rho();
    let ones = vec![1.0; sample_x.len()];
    let ecf = crate::charfun::ecf_multi(sample_x, &[&ones], grid).pop().expect("one output");
    let coefs: Vec<Complex64> = grid
        .values()
        .iter()
        .enumerate()
        .map(|(g, &tau)| {
            let trap = if g == 0 || g == grid.len() - 1 { 0.5 } else { 1.0 };
            ecf[g] * (trap * spec.kft(bv * tau)) / ridge(feps[g], rho)
        })
        .collect();
    let scale = dt / (2.0 * std::f64::consts::PI);
    let mut out = Vec::with_capacity(xgrid.len());
    for &x in xgrid {
        let step = Complex64::from_polar(1.0, -dt * x);
        let mut ph = Complex64::from_polar(1.0, -grid.values()[0] * x);
        let mut acc = Complex64::ZERO;
        const ANCHOR: usize = 64;
        for (g, coef) in coefs.iter().enumerate() {
            if g > 0 {
                ph = if g % ANCHOR == 0 {
                    Complex64::from_polar(1.0, -grid.values()[g] * x)
                } else {
                    ph * step
                };
            }
            acc += coef * ph;
        }
        let v = acc * scale;
        if v.im.abs() > IMAG_RESIDUAL_TOL {
            return Err(Error::Numerical(format!(
                "density at x = {x} has imaginary residual {:.3e}",
                v.im
            )));
        }
        out.push(v.re);
    }
    Ok(out)
}
