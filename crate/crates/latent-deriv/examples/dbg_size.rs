use latent_deriv::estimator::EstimatorSettings;
use latent_deriv::inference::run_test;
use latent_deriv::simulate::{dgp_draw, rep_rng};
use rayon::prelude::*;

fn cell(n: usize, delta: f64, reps: usize, scale: f64) -> (f64, f64, f64, f64) {
    let outcomes: Vec<(bool, f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rep_rng(90, 0, 0, r);
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
    // ratio of empirical sd(theta) to mean reported se
    let se_emp = latent_deriv::stats::sd(&th);
    let se_rep = (latent_deriv::stats::mean(&s2) / n as f64).sqrt();
    (rej, cov, se_emp / se_rep, latent_deriv::stats::mean(&th))
}

fn main() {
    for &scale in &[1.0, 1.25, 1.5] {
        for &n in &[250usize, 500] {
            let (rej0, cov, ratio, mth) = cell(n, 0.0, 300, scale);
            let (rej5, _, _, _) = cell(n, 0.5, 120, scale);
            println!(
                "scale {scale:4.2} n {n:4}: size {rej0:.3} power(d=.5) {rej5:.3} cov(s2) {cov:.3} sd(th)/se {ratio:.3} mean(th) {mth:+.4}"
            );
        }
    }
}
