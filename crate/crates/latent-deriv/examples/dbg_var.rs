use latent_deriv::charfun::{CharFunSet, FreqGrid};
use latent_deriv::estimator::{EstimatorConfig, EstimatorSettings};
use latent_deriv::inference::{variance_estimate, xi_hat_decomposed};
use latent_deriv::kernels::{Bandwidth, KernelSpec};
use latent_deriv::simulate::{dgp_draw, rep_rng};
use num_complex::Complex64;
use rayon::prelude::*;

// delta = 0, c = 1 throughout: h_c == 0, the cleanest null configuration.

fn main() {
    for &n in &[250usize, 500, 1000] {
        let b = 2f64.sqrt() * (n as f64).powf(-1.0 / 6.0);
        // (i) empirical n Var(theta) and (ii) mean s2 over reps
        let reps = 600;
        let pairs: Vec<(f64, f64)> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = rep_rng(7, 0, 0, r);
                let s = dgp_draw(n, 0.0, &mut rng).unwrap();
                let mut set = EstimatorSettings::new(1.0);
                set.bandwidth = Some(b);
                let cfg = set.resolve(&s).unwrap();
                let cfs =
                    CharFunSet::estimate_all(&s, cfg.grid.clone(), cfg.rho, cfg.c).unwrap();
                let th = latent_deriv::estimator::theta_from_cfs(&s, &cfg, &cfs)
                    .unwrap()
                    .theta_hat;
                let xi = xi_hat_decomposed(&s, &cfs, &cfg).unwrap();
                (th, variance_estimate(&xi.total).unwrap())
            })
            .collect();
        let th: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let s2: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let nvar = latent_deriv::stats::sd(&th).powi(2) * n as f64;
        let s2m = latent_deriv::stats::mean(&s2);

        // (iv) population variance of the paper xi with TRUE CFs (one big draw)
        let big = dgp_draw(120_000, 0.0, &mut rep_rng(1000 + n as u64, 0, 0, 0)).unwrap();
        let grid = FreqGrid::new(1.0 / b, 4097).unwrap();
        let gauss = |v: f64, t: f64| (-0.5 * v * t * t).exp();
        let cfs_true = CharFunSet::from_true_cfs(
            grid.clone(),
            0.0,
            move |t| Complex64::new(gauss(2.0, t), 0.0),
            move |t| Complex64::new(gauss(2.0, t), 0.0),
            move |t| Complex64::new(0.0, t * gauss(2.0, t)),
            move |t| Complex64::new(gauss(1.0, t), 0.0),
            move |t| Complex64::new(gauss(1.0, t), 0.0),
            |_t| Complex64::ZERO,
            1.0,
        );
        let cfg_true = EstimatorConfig::new(
            1.0,
            Bandwidth::new(b).unwrap(),
            KernelSpec::FlatTopTrapezoid,
            grid,
            0.0,
        )
        .unwrap();
        let xi_true = xi_hat_decomposed(&big, &cfs_true, &cfg_true).unwrap();
        let var_true_formula = variance_estimate(&xi_true.total).unwrap();

        // (iii) projection variance with the effective (autocorrelation) window:
        // Var = 8 E[g'(X)^2], g^ft = -it e^{-t^2} kft(tb)^2, X ~ N(0,2)
        let proj = projection_var(b, 2);
        // same with single kft window (what the paper's xi converges to)
        let proj_kft1 = projection_var(b, 1);

        println!(
            "n {n:5} b {b:.3}: nVar(th) {nvar:.4}  mean s2 {s2m:.4}  Var[xi_true_formula] {var_true_formula:.4}  proj(kft^2) {proj:.4}  proj(kft) {proj_kft1:.4}"
        );
    }
}

// Var[-2 r g'(X)] with r ~ N(0,2) indep, g' the C_b- or K_b-smoothed fX'.
// g'(x) = (1/2pi) int (-it) e^{-t^2} kft(tb)^power e^{-itx} dt
fn projection_var(b: f64, power: i32) -> f64 {
    let m = 40_001usize;
    let t_hi = 1.0 / b;
    let dt = 2.0 * t_hi / (m - 1) as f64;
    let xs: Vec<f64> = (0..2001).map(|i| -8.0 + 16.0 * i as f64 / 2000.0).collect();
    let dx = xs[1] - xs[0];
    let mut e2 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let mut acc = Complex64::ZERO;
        for k in 0..m {
            let t = -t_hi + k as f64 * dt;
            let kft = KernelSpec::FlatTopTrapezoid.kft(t * b).powi(power);
            let w = if k == 0 || k == m - 1 { 0.5 } else { 1.0 };
            acc += Complex64::new(0.0, -t)
                * (-t * t).exp()
                * kft
                * Complex64::from_polar(1.0, -t * x)
                * w;
        }
        let gp = (acc * dt).re / (2.0 * std::f64::consts::PI);
        let fx = (-(x * x) / 4.0).exp() / (4.0 * std::f64::consts::PI).sqrt();
        let w = if i == 0 || i == xs.len() - 1 { 0.5 } else { 1.0 };
        e2 += w * gp * gp * fx * dx;
    }
    8.0 * e2
}
