use latent_deriv::estimator::EstimatorSettings;
use latent_deriv::inference::run_test;
use latent_deriv::simulate::{dgp_draw, rep_rng};
use rayon::prelude::*;

fn cell(n: usize, delta: f64, reps: usize, scale: f64, seed: u64) -> (f64, f64, f64, f64, f64) {
    let outcomes: Vec<(bool, f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rep_rng(seed, 0, 0, r);
            let s = dgp_draw(n, delta, &mut rng).unwrap();
            let sd = latent_deriv::stats::sd(s.x());
            let b = scale * sd * (n as f64).powf(-1.0 / 6.0);
            let mut set = EstimatorSettings::new(1.0);
            set.bandwidth = Some(b);
            let cfg = set.resolve(&s).unwrap();
            let res = run_test(&s, &cfg, 0.05).unwrap();
            (res.reject, res.s_hat_sq, res.theta_hat)
        })
        .collect();
    let rej = outcomes.iter().filter(|o| o.0).count() as f64 / reps as f64;
    let s2: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    let th: Vec<f64> = outcomes.iter().map(|o| o.2).collect();
    let cov = latent_deriv::stats::sd(&s2) / latent_deriv::stats::mean(&s2);
    let var_emp = {
        let v = latent_deriv::stats::sd(&th);
        v * v * n as f64
    };
    (rej, cov, var_emp, latent_deriv::stats::mean(&s2), latent_deriv::stats::mean(&th))
}

fn main() {
    // analytic projection variance at delta = 0, c = 1:
    // xi = -2 (Y-W) fX'(X), fX = N(0,2): Var = 4*2*E[fX'(X)^2]
    // E[fX'(X)^2] = integral (x/2)^2 fX(x)^3 dx
    let mut acc = 0.0;
    let m = 200_001;
    let lo = -12.0;
    let dx = 24.0 / (m - 1) as f64;
    for i in 0..m {
        let x = lo + i as f64 * dx;
        let fx = (-(x * x) / 4.0).exp() / (4.0 * std::f64::consts::PI).sqrt();
        let w = if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
        acc += w * (x / 2.0) * (x / 2.0) * fx * fx * fx * dx;
    }
    println!("projection Var[xi] (delta=0, c=1) = {:.5}", 8.0 * acc);
    for &scale in &[1.5, 2.0, 2.5, 3.0] {
        for &n in &[250usize, 500] {
            let (rej0, cov, var_emp, s2m, _) = cell(n, 0.0, 400, scale, 91);
            let (rej5, _, _, _, _) = cell(n, 0.5, 150, scale, 92);
            println!(
                "scale {scale:4.2} n {n:4}: size {rej0:.3} power(d=.5) {rej5:.3} cov {cov:.3} nVar(th) {var_emp:.3} mean s2 {s2m:.3}"
            );
        }
    }
    // bias check for criterion 4 at the candidate scales
    for &scale in &[1.5, 2.0, 2.5, 3.0] {
        let (_, _, _, _, mth) = cell(2000, 0.3, 60, scale, 93);
        println!("scale {scale:4.2} n 2000 d 0.3: mean theta {mth:+.5} (target -0.08463)");
    }
}
