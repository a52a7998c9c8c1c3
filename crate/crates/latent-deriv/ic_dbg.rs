use latent_deriv::charfun::*;
use latent_deriv::sample::{Provenance, Sample};
use latent_deriv::simulate::{dgp_draw, rep_rng};
use num_complex::Complex64;

fn main() {
    let s = dgp_draw(2_000, 0.2, &mut rep_rng(3, 0, 0, 0)).unwrap();
    let m = 1.75;
    let shifted = Sample::new(
        s.y().to_vec(),
        s.x().iter().map(|v| v + m).collect(),
        s.w().iter().map(|v| v + m).collect(),
        Provenance::Synthetic,
    )
    .unwrap();
    let g = FreqGrid::new(2.0, 129).unwrap();
    let rho = (s.len() as f64).powf(-0.5);
    let a = CharFunSet::estimate_all(&s, g.clone(), rho, 1.0).unwrap();
    let b = CharFunSet::estimate_all(&shifted, g, rho, 1.0).unwrap();
    let mut worst = (0.0f64, 0.0f64);
    for (k, &t) in a.grid().values().iter().enumerate() {
        let d = (a.feps_ft().unwrap()[k] - b.feps_ft().unwrap()[k]).norm();
        if d > worst.0 { worst = (d, t); }
        let rot = Complex64::from_polar(1.0, t * m);
        let dm = (a.mu1()[k] * rot - b.mu1()[k]).norm();
        if k < 5 || d > 1e-8 {
            println!("t={t:7.3} |dfeps|={d:.3e} |dmu1rot|={dm:.3e} |f|={:.4} |mu2|={:.4}", a.f_ft().unwrap()[k].norm(), a.mu2()[k].norm());
        }
    }
    println!("worst {worst:?}, rho={rho}");
}
