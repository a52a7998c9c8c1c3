//! Variance estimation through the influence function and the one-sided
//! test of H₀: θ_c ≥ 0 against H₁: θ_c < 0.
//!
//! The estimator satisfies √n(θ̂_c − θ_c) →d N(0, Var[ξ_c]) with a mean-zero
//! influence function ξ_c, estimated per observation as
//!
//! ```text
//! ξ̂_c(y,x,w) = (1/π) ∫ it { [ĥ_c^ft(−t) − (y−cw) f̂^ft(−t)] e^{itx}/f̂ε^ft(t)
//!              + [f̂^ft(t)ĥ_c^ft(−t) − f̂^ft(−t)ĥ_c^ft(t)]
//!                · [ −e^{itx}/f̂_X^ft(t)
//!                    + ∫₀ᵗ (−i μ̂₃(s)/f̂_W^ft(s) + ix) e^{isw}/f̂_W^ft(s) ds ] }
//!              K^ft(tb) dt
//! ```
//!
//! where K^ft(tb) regularizes the integration. The first branch is the
//! randomness of the known-error estimator; the second carries the cost of
//! estimating the error CF and vanishes when both h_c and f are symmetric.
//! The variance estimate is ŝ_c² = n⁻¹ Σ ξ̂², without centering (E[ξ_c] = 0),
//! the standard error is √(ŝ_c²/n), and the test rejects when Φ(z) < size.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charfun::{cumtrapz_from_center_into, ridge, CharFunSet};
use crate::error::{Error, Result};
use crate::estimator::{theta_from_cfs, EstimatorConfig};
use crate::sample::Sample;
use crate::stats::normal_cdf;

/// Per-observation influence values split into the known-error branch and
/// the CF-estimation branch.
#[derive(Debug, Clone)]
pub struct XiDecomposition {
    pub total: Vec<f64>,
    pub branch1: Vec<f64>,
    pub branch2: Vec<f64>,
    /// Largest imaginary magnitude discarded across observations.
    pub max_imag_residual: f64,
}

/// Influence values ξ̂_c(Yⱼ, Xⱼ, Wⱼ) for every observation.
pub fn xi_hat_all(sample: &Sample, cfs: &CharFunSet, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    Ok(xi_hat_decomposed(sample, cfs, cfg)?.total)
}

/// As [`xi_hat_all`], also returning the two branches separately.
pub fn xi_hat_decomposed(
    sample: &Sample,
    cfs: &CharFunSet,
    cfg: &EstimatorConfig,
) -> Result<XiDecomposition> {
    let f_ft = cfs
        .f_ft()
        .ok_or_else(|| Error::InvalidState("xi_hat needs f_ft".into()))?;
    let feps = cfs
        .feps_ft()
        .ok_or_else(|| Error::InvalidState("xi_hat needs feps_ft".into()))?;
    let h_ft = cfs
        .h_ft()
        .ok_or_else(|| Error::InvalidState("xi_hat needs h_ft".into()))?;
    if cfs.h_c() != Some(cfg.c) {
        return Err(Error::InvalidState(format!(
            "h_ft was computed for c = {:?}, estimator uses c = {}",
            cfs.h_c(),
            cfg.c
        )));
    }
    if cfs.grid() != &cfg.grid {
        return Err(Error::InvalidState(
            "CharFunSet grid differs from the estimator grid".into(),
        ));
    }

    let grid = cfs.grid();
    let g_len = grid.len();
    let mid = grid.center();
    let dt = grid.spacing();
    let b = cfg.bandwidth.value();
    let rho = cfg.rho;
    let pi = std::f64::consts::PI;

    // Observation-independent factors, one pass over the grid.
    let mut outer = vec![Complex64::ZERO; g_len]; // it·K^ft(tb)/π · trapezoid weight
    let mut inv_feps = vec![Complex64::ZERO; g_len];
    let mut inv_mu1 = vec![Complex64::ZERO; g_len];
    let mut q = vec![Complex64::ZERO; g_len];
    let mut spre1 = vec![Complex64::ZERO; g_len]; // −i μ̂₃ / f̂_W²  (ridged)
    let mut spre2 = vec![Complex64::ZERO; g_len]; // 1 / f̂_W      (ridged)
    for (g, &t) in grid.values().iter().enumerate() {
        let wt = if g == 0 || g == g_len - 1 { 0.5 * dt } else { dt };
        // The spectral window is K^ft(tb)², the Fourier transform of the
        // autocorrelation kernel K∗K that the pair statistic actually
        // applies: the variance estimate then matches the estimator's own
        // smoothing. A single K^ft factor regularizes the integral just as
        // well asymptotically but over-covers at finite bandwidths.
        let kft = cfg.kernel.kft(t * b);
        outer[g] = Complex64::new(0.0, t * kft * kft / pi * wt);
        inv_feps[g] = Complex64::new(1.0, 0.0) / ridge(feps[g], rho);
        inv_mu1[g] = Complex64::new(1.0, 0.0) / ridge(cfs.mu1()[g], rho);
        q[g] = f_ft[g] * h_ft[g].conj() - f_ft[g].conj() * h_ft[g];
        let inv_mu2 = Complex64::new(1.0, 0.0) / ridge(cfs.mu2()[g], rho);
        spre1[g] = Complex64::new(0.0, -1.0) * cfs.mu3()[g] * inv_mu2 * inv_mu2;
        spre2[g] = inv_mu2;
    }

    let n = sample.len();
    let mut total = Vec::with_capacity(n);
    let mut branch1 = Vec::with_capacity(n);
    let mut branch2 = Vec::with_capacity(n);
    let mut max_imag: f64 = 0.0;

    // Reused per-observation buffers.
    let mut px = vec![Complex64::ZERO; g_len];
    let mut pw = vec![Complex64::ZERO; g_len];
    let mut f1 = vec![Complex64::ZERO; g_len];
    let mut f2 = vec![Complex64::ZERO; g_len];
    let mut s1 = vec![Complex64::ZERO; g_len];
    let mut s2 = vec![Complex64::ZERO; g_len];

    for j in 0..n {
        let x = sample.x()[j];
        let w = sample.w()[j];
        let r = sample.y()[j] - cfg.c * w;

        phases_into(x, dt, mid, &mut px);
        phases_into(w, dt, mid, &mut pw);
        for g in 0..g_len {
            f1[g] = spre1[g] * pw[g];
            f2[g] = spre2[g] * pw[g];
        }
        cumtrapz_from_center_into(&f1, dt, mid, &mut s1);
        cumtrapz_from_center_into(&f2, dt, mid, &mut s2);

        let ix = Complex64::new(0.0, x);
        let mut acc1 = Complex64::ZERO;
        let mut acc2 = Complex64::ZERO;
        for g in 0..g_len {
            if outer[g] == Complex64::ZERO {
                continue;
            }
            let b1 = (h_ft[g].conj() - r * f_ft[g].conj()) * px[g] * inv_feps[g];
            let bracket = -px[g] * inv_mu1[g] + s1[g] + ix * s2[g];
            acc1 += outer[g] * b1;
            acc2 += outer[g] * (q[g] * bracket);
        }
        let xi = acc1 + acc2;
        let imag = xi.im.abs();
        if imag > 1e-6 * xi.re.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "xi imaginary residual {imag:.3e} at observation {j}"
            )));
        }
        max_imag = max_imag.max(imag);
        total.push(xi.re);
        branch1.push(acc1.re);
        branch2.push(acc2.re);
    }
    Ok(XiDecomposition { total, branch1, branch2, max_imag_residual: max_imag })
}

/// Phase array e^{i t_g v} over the grid, exact conjugate reflection for
/// t < 0 and a periodic sincos re-anchor against drift.
fn phases_into(v: f64, dt: f64, mid: usize, out: &mut [Complex64]) {
    const ANCHOR: usize = 64;
    let step = Complex64::from_polar(1.0, dt * v);
    let mut ph = Complex64::new(1.0, 0.0);
    out[mid] = ph;
    let half = out.len() - 1 - mid;
    for k in 1..=half {
        ph = if k % ANCHOR == 0 {
            Complex64::from_polar(1.0, k as f64 * dt * v)
        } else {
            ph * step
        };
        out[mid + k] = ph;
        out[mid - k] = ph.conj();
    }
}

/// ŝ_c² = n⁻¹ Σ ξ̂² (no centering; the influence function is mean zero).
pub fn variance_estimate(xi: &[f64]) -> Result<f64> {
    if xi.is_empty() {
        return Err(Error::InvalidInput("variance of an empty array".into()));
    }
    Ok(xi.iter().map(|v| v * v).sum::<f64>() / xi.len() as f64)
}

/// Outcome of the one-sided test, JSON-serializable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub theta_hat: f64,
    pub c: f64,
    pub n: usize,
    /// ŝ_c² = n⁻¹ Σ ξ̂²; the variance of √n·θ̂.
    pub s_hat_sq: f64,
    /// √(ŝ_c²/n); the standard error of θ̂ itself.
    pub std_error: f64,
    pub z: f64,
    /// One-sided lower-tail p-value Φ(z).
    pub p_value: f64,
    /// Two-sided companion 2·Φ(−|z|), reported for completeness.
    pub p_value_two_sided: f64,
    pub reject: bool,
    pub size: f64,
}

/// Form z = θ̂/√(ŝ²/n) and the lower-tail decision at the given size.
///
/// ŝ² = 0 with θ̂ = 0 is the exactly-degenerate case (e.g. Y ≡ cW); it maps
/// to z = 0, p = 0.5. ŝ² = 0 with θ̂ ≠ 0 is a degenerate-variance error.
pub fn studentize(
    theta_hat: f64,
    s_hat_sq: f64,
    n: usize,
    c: f64,
    size: f64,
) -> Result<TestResult> {
    if !(size > 0.0 && size < 1.0) {
        return Err(Error::InvalidConfig(format!("size must lie in (0,1), got {size}")));
    }
    if s_hat_sq < 0.0 || !s_hat_sq.is_finite() {
        return Err(Error::Numerical(format!("variance estimate {s_hat_sq} invalid")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    let std_error = (s_hat_sq / n as f64).sqrt();
    let z = if theta_hat == 0.0 && std_error == 0.0 {
        0.0
    } else if std_error == 0.0 {
        return Err(Error::Numerical(
            "degenerate variance: s_hat_sq = 0 with nonzero theta".into(),
        ));
    } else {
        theta_hat / std_error
    };
    let p_value = normal_cdf(z);
    Ok(TestResult {
        theta_hat,
        c,
        n,
        s_hat_sq,
        std_error,
        z,
        p_value,
        p_value_two_sided: 2.0 * normal_cdf(-z.abs()),
        reject: p_value < size,
        size,
    })
}

/// Full pipeline: CFs, point estimate, influence values, studentized
/// one-sided test.
pub fn run_test(sample: &Sample, cfg: &EstimatorConfig, size: f64) -> Result<TestResult> {
    if !(size > 0.0 && size < 1.0) {
        return Err(Error::InvalidConfig(format!("size must lie in (0,1), got {size}")));
    }
    let cfs = CharFunSet::estimate_all(sample, cfg.grid.clone(), cfg.rho, cfg.c)?;
    let theta = theta_from_cfs(sample, cfg, &cfs)?;
    let xi = xi_hat_all(sample, &cfs, cfg)?;
    let s_hat_sq = variance_estimate(&xi)?;
    studentize(theta.theta_hat, s_hat_sq, sample.len(), cfg.c, size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charfun::FreqGrid;
    use crate::estimator::EstimatorSettings;
    use crate::sample::Provenance;
    use crate::simulate::{dgp_draw, rep_rng};
    use crate::stats;
    use approx::assert_abs_diff_eq;

    #[test]
    fn variance_trivial_cases() {
        assert_eq!(variance_estimate(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(variance_estimate(&[1.0, -1.0]).unwrap(), 1.0);
        assert!(variance_estimate(&[]).is_err());
    }

    #[test]
    fn studentize_reproduces_application_numbers() {
        // theta = -0.0607, se = 0.0052, n = 5976: z = theta/se ~ -11.67.
        let n = 5976;
        let se = 0.0052;
        let s_hat_sq = se * se * n as f64;
        let res = studentize(-0.0607, s_hat_sq, n, 1.0, 0.05).unwrap();
        assert_abs_diff_eq!(res.std_error, se, epsilon = 1e-12);
        assert_abs_diff_eq!(res.z, -0.0607 / 0.0052, epsilon = 1e-9);
        assert!((res.z + 11.67).abs() < 0.01);
        assert!(res.p_value < 1e-15);
        assert!(res.reject);
    }

    #[test]
    fn studentize_zero_theta_is_coin_flip() {
        let res = studentize(0.0, 1.0, 100, 1.0, 0.05).unwrap();
        assert_eq!(res.z, 0.0);
        assert_eq!(res.p_value, 0.5);
        assert!(!res.reject);
    }

    #[test]
    fn studentize_degenerate_cases() {
        // Exactly degenerate: theta = 0 and variance 0 is the Y = cW case.
        let res = studentize(0.0, 0.0, 10, 1.0, 0.05).unwrap();
        assert_eq!((res.z, res.p_value), (0.0, 0.5));
        assert!(!res.reject);
        // Variance 0 with a nonzero point estimate cannot be studentized.
        assert!(studentize(0.1, 0.0, 10, 1.0, 0.05).is_err());
        assert!(studentize(0.1, 1.0, 10, 1.0, 0.0).is_err());
    }

    #[test]
    fn p_value_matches_quantile_and_is_monotone() {
        // z = -1.6449 is the 5% point.
        let res = studentize(-1.6449, 4.0, 4, 0.0, 0.05).unwrap();
        assert_abs_diff_eq!(res.z, -1.6449, epsilon = 1e-12);
        assert_abs_diff_eq!(res.p_value, 0.05, epsilon = 1e-4);
        let mut last = 0.0;
        for i in -40..40 {
            let theta = i as f64 * 0.1;
            let p = studentize(theta, 4.0, 4, 0.0, 0.05).unwrap().p_value;
            assert!(p >= last, "p not monotone at z = {theta}");
            last = p;
        }
    }

    #[test]
    fn run_test_on_degenerate_fixture() {
        // Y = W exactly: theta = 0, all xi = 0, p = 1/2, no rejection.
        let s = dgp_draw(50, 0.2, &mut rep_rng(1, 0, 0, 0)).unwrap();
        let fix = Sample::new(
            s.w().to_vec(),
            s.x().to_vec(),
            s.w().to_vec(),
            Provenance::Synthetic,
        )
        .unwrap();
        let cfg = EstimatorSettings { grid_points: 257, ..EstimatorSettings::new(1.0) }
            .resolve(&fix)
            .unwrap();
        let res = run_test(&fix, &cfg, 0.05).unwrap();
        assert_eq!(res.theta_hat, 0.0);
        assert_eq!(res.p_value, 0.5);
        assert!(!res.reject);
    }

    #[test]
    fn xi_mean_is_small_in_the_simulation_design() {
        let n = 500;
        let s = dgp_draw(n, 0.0, &mut rep_rng(77, 0, 0, 0)).unwrap();
        let cfg = EstimatorSettings::new(1.0).resolve(&s).unwrap();
        let cfs = CharFunSet::estimate_all(&s, cfg.grid.clone(), cfg.rho, cfg.c).unwrap();
        let xi = xi_hat_all(&s, &cfs, &cfg).unwrap();
        let mean = stats::mean(&xi);
        let sd = stats::sd(&xi);
        assert!(
            mean.abs() <= 3.0 * sd / (n as f64).sqrt(),
            "mean {mean} vs 3 sd/sqrt(n) {}",
            3.0 * sd / (n as f64).sqrt()
        );
    }

    #[test]
    fn xi_imag_residual_is_recorded_and_tiny() {
        let s = dgp_draw(200, 0.3, &mut rep_rng(5, 0, 0, 0)).unwrap();
        let cfg = EstimatorSettings { grid_points: 1025, ..EstimatorSettings::new(1.0) }
            .resolve(&s)
            .unwrap();
        let cfs = CharFunSet::estimate_all(&s, cfg.grid.clone(), cfg.rho, cfg.c).unwrap();
        let dec = xi_hat_decomposed(&s, &cfs, &cfg).unwrap();
        assert!(dec.max_imag_residual <= 1e-6);
    }

    #[test]
    fn xi_branch2_vanishes_with_true_symmetric_cfs() {
        // delta and c chosen so h_c = (1-delta-c)·x·phi(x) is identically 0,
        // hence even; f is standard normal, even. Branch 2 must die.
        let delta = 0.3;
        let c = 1.0 - delta;
        let n = 100;
        let s = dgp_draw(n, delta, &mut rep_rng(9, 0, 0, 0)).unwrap();
        let grid = FreqGrid::new(4.0, 513).unwrap();
        let gauss = |v: f64, t: f64| (-0.5 * v * t * t).exp();
        let cfs = CharFunSet::from_true_cfs(
            grid.clone(),
            0.0,
            move |t| Complex64::new(gauss(2.0, t), 0.0), // f_X: var 2
            move |t| Complex64::new(gauss(2.0, t), 0.0), // f_W: var 2
            move |t| Complex64::new(0.0, t * gauss(2.0, t)), // E[X e^{itW}] = it e^{-t^2}
            move |t| Complex64::new(gauss(1.0, t), 0.0), // f*: var 1
            move |t| Complex64::new(gauss(1.0, t), 0.0), // f_eps: var 1
            |_t| Complex64::ZERO,                        // h_c == 0
            c,
        );
        let cfg = EstimatorConfig::new(
            c,
            crate::kernels::Bandwidth::new(0.5).unwrap(),
            crate::kernels::KernelSpec::FlatTopTrapezoid,
            grid,
            0.0,
        )
        .unwrap();
        let dec = xi_hat_decomposed(&s, &cfs, &cfg).unwrap();
        for (&b2, &b1) in dec.branch2.iter().zip(&dec.branch1) {
            assert!(b2.abs() <= 1e-6, "branch2 = {b2}");
            assert!(b1.is_finite());
        }
    }

    #[test]
    fn xi_requires_matching_c_and_populated_arrays() {
        let s = dgp_draw(30, 0.2, &mut rep_rng(2, 0, 0, 0)).unwrap();
        let cfg = EstimatorSettings { grid_points: 65, ..EstimatorSettings::new(1.0) }
            .resolve(&s)
            .unwrap();
        let cfs = CharFunSet::estimate_all(&s, cfg.grid.clone(), cfg.rho, 0.25).unwrap();
        assert!(matches!(
            xi_hat_all(&s, &cfs, &cfg),
            Err(Error::InvalidState(_))
        ));
        let bare = crate::charfun::empirical_cfs(&s, cfg.grid.clone(), cfg.rho).unwrap();
        assert!(matches!(
            xi_hat_all(&s, &bare, &cfg),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn variance_stable_across_seeds() {
        // Coefficient of variation of s^2 over replications stays moderate.
        let reps = 60;
        let mut vals = Vec::with_capacity(reps);
        for r in 0..reps {
            let s = dgp_draw(500, 0.0, &mut rep_rng(1234, 0, 0, r)).unwrap();
            let cfg = EstimatorSettings::new(1.0).resolve(&s).unwrap();
            let cfs = CharFunSet::estimate_all(&s, cfg.grid.clone(), cfg.rho, cfg.c).unwrap();
            let s2 = variance_estimate(&xi_hat_all(&s, &cfs, &cfg).unwrap()).unwrap();
            assert!(s2 > 0.0);
            vals.push(s2);
        }
        let cov = stats::sd(&vals) / stats::mean(&vals);
        assert!(cov < 0.5, "coefficient of variation {cov}");
    }

    #[test]
    fn z_stable_under_grid_refinement() {
        let s = dgp_draw(500, 0.2, &mut rep_rng(321, 0, 0, 0)).unwrap();
        let base = EstimatorSettings::new(1.0);
        let z1 = run_test(&s, &base.resolve(&s).unwrap(), 0.05).unwrap().z;
        let fine =
            EstimatorSettings { grid_points: 2 * crate::estimator::DEFAULT_GRID_POINTS - 1, ..base };
        let z2 = run_test(&s, &fine.resolve(&s).unwrap(), 0.05).unwrap().z;
        assert!((z1 - z2).abs() < 1e-3, "z moved {z1} -> {z2}");
    }
}
