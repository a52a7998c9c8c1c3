//! Monte Carlo harness: the baseline data-generating process
//! Y = (1−δ)X* + U, X = X* + ε, W = X* + ν with standard normal
//! (X*, U, ε, ν), rejection frequencies over a (δ, N) grid, and CSV/SVG
//! emission of the resulting power curves.
//!
//! Reproducibility contract: replication r of cell (δ-index i, n-index j)
//! draws from a stream keyed by (seed, i, j, r), so results are identical
//! bytes no matter how many worker threads run or in which order cells
//! complete. Normal variates come from the inverse CDF of open-interval
//! uniforms, never from rejection samplers, for the same reason.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::EstimatorSettings;
use crate::inference::run_test;
use crate::sample::{Provenance, Sample};
use crate::stats::normal_quantile;

/// Simulation study configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Deviations from the null; the study design spans [0, 0.5].
    pub delta_grid: Vec<f64>,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub size: f64,
    pub seed: u64,
    pub estimator: EstimatorSettings,
    /// Permit δ outside [0, 0.5] (explicit override of the design range).
    pub allow_delta_outside: bool,
}

impl SimConfig {
    pub fn new(delta_grid: Vec<f64>, n_list: Vec<usize>, reps: usize, size: f64, seed: u64) -> Self {
        SimConfig {
            delta_grid,
            n_list,
            reps,
            size,
            seed,
            estimator: EstimatorSettings::new(1.0),
            allow_delta_outside: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.delta_grid.is_empty() {
            return Err(Error::InvalidConfig("empty delta grid".into()));
        }
        if !self.allow_delta_outside {
            if let Some(d) = self.delta_grid.iter().find(|d| !(0.0..=0.5).contains(*d)) {
                return Err(Error::InvalidConfig(format!(
                    "delta {d} outside the design range [0, 0.5]; pass the explicit override to allow it"
                )));
            }
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return Err(Error::InvalidConfig("n_list must hold sizes >= 2".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be >= 1".into()));
        }
        if !(self.size > 0.0 && self.size < 1.0) {
            return Err(Error::InvalidConfig(format!("size must lie in (0,1), got {}", self.size)));
        }
        Ok(())
    }

    /// `# key = value` lines embedded in emitted artifacts.
    pub fn comment_lines(&self) -> Vec<String> {
        let deltas: Vec<String> = self.delta_grid.iter().map(|d| d.to_string()).collect();
        let ns: Vec<String> = self.n_list.iter().map(|n| n.to_string()).collect();
        vec![
            format!("deltas = {}", deltas.join(" ")),
            format!("n = {}", ns.join(" ")),
            format!("reps = {}", self.reps),
            format!("size = {}", self.size),
            format!("seed = {}", self.seed),
            format!("c = {}", self.estimator.c),
            format!("kernel = {}", self.estimator.kernel),
            format!(
                "bandwidth = {}",
                self.estimator.bandwidth.map_or("auto".into(), |b| b.to_string())
            ),
            format!("grid_points = {}", self.estimator.grid_points),
            format!(
                "rho = {}",
                self.estimator.rho.map_or("auto".into(), |r| r.to_string())
            ),
        ]
    }
}

/// One (δ, n) cell of the power table.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub delta: f64,
    pub n: usize,
    /// Replications that completed and entered the frequency.
    pub reps: usize,
    pub rejections: usize,
    pub rejection_frequency: f64,
    /// √(p̂(1−p̂)/reps).
    pub mc_std_error: f64,
    /// Replications excluded because the estimator failed.
    pub excluded: usize,
}

/// Rejection frequencies over the (δ, n) grid, with the configuration that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    pub rows: Vec<PowerRow>,
    pub config_comments: Vec<String>,
    pub nominal_size: f64,
}

impl PowerTable {
    pub fn row(&self, delta: f64, n: usize) -> Option<&PowerRow> {
        self.rows.iter().find(|r| r.delta == delta && r.n == n)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for line in &self.config_comments {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("delta,n,reps,rejections,rejection_frequency,mc_std_error,excluded\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.delta, r.n, r.reps, r.rejections, r.rejection_frequency, r.mc_std_error, r.excluded
            ));
        }
        out
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic stream for replication `rep` of cell (`delta_idx`,
/// `n_idx`): the coordinates are hashed into a 256-bit ChaCha key, which
/// splits the master seed into independent streams.
pub fn rep_rng(seed: u64, delta_idx: usize, n_idx: usize, rep: usize) -> ChaCha12Rng {
    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut state = mix64(seed ^ 0x6C62_272E_07BB_0142);
    for coord in [delta_idx as u64, n_idx as u64, rep as u64] {
        state = mix64(state.wrapping_add(GOLDEN).wrapping_add(coord));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state.wrapping_add(GOLDEN));
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Uniform draw strictly inside (0, 1): 53 random bits centered in the
/// half-open cell, so the inverse CDF below never sees 0 or 1.
fn uniform_open01(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Standard normal by inverse-CDF transform. Deterministic and
/// platform-stable, unlike rejection samplers.
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    normal_quantile(uniform_open01(rng)).expect("u in (0,1)")
}

/// Draw a sample of size n from the baseline design: per observation the
/// stream yields (X*, U, ε, ν) in that order.
pub fn dgp_draw(n: usize, delta: f64, rng: &mut impl RngCore) -> Result<Sample> {
    if n == 0 {
        return Err(Error::InvalidInput("dgp_draw needs n >= 1".into()));
    }
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        let xstar = standard_normal(rng);
        let u = standard_normal(rng);
        let eps = standard_normal(rng);
        let nu = standard_normal(rng);
        y.push((1.0 - delta) * xstar + u);
        x.push(xstar + eps);
        w.push(xstar + nu);
    }
    Sample::new(y, x, w, Provenance::Synthetic)
}

/// Run the full grid. Replications are independent rayon tasks merged in
/// cell-then-replication order; a failed replication is excluded and
/// counted, and more than 1% exclusions in a cell fails the run.
pub fn run_power_curve(cfg: &SimConfig) -> Result<PowerTable> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.delta_grid.len() * cfg.n_list.len());
    for (d_idx, &delta) in cfg.delta_grid.iter().enumerate() {
        for (n_idx, &n) in cfg.n_list.iter().enumerate() {
            let outcomes: Vec<Result<bool>> = (0..cfg.reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = rep_rng(cfg.seed, d_idx, n_idx, rep);
                    let sample = dgp_draw(n, delta, &mut rng)?;
                    let est_cfg = cfg.estimator.resolve(&sample)?;
                    Ok(run_test(&sample, &est_cfg, cfg.size)?.reject)
                })
                .collect();
            let mut rejections = 0usize;
            let mut used = 0usize;
            let mut excluded = 0usize;
            for o in outcomes {
                match o {
                    Ok(r) => {
                        used += 1;
                        if r {
                            rejections += 1;
                        }
                    }
                    Err(_) => excluded += 1,
                }
            }
            if excluded * 100 > cfg.reps {
                return Err(Error::Numerical(format!(
                    "cell (delta={delta}, n={n}): {excluded}/{} replications failed, above the 1% budget",
                    cfg.reps
                )));
            }
            let p = rejections as f64 / used as f64;
            rows.push(PowerRow {
                delta,
                n,
                reps: used,
                rejections,
                rejection_frequency: p,
                mc_std_error: (p * (1.0 - p) / used as f64).sqrt(),
                excluded,
            });
        }
    }
    Ok(PowerTable { rows, config_comments: cfg.comment_lines(), nominal_size: cfg.size })
}

/// Write `<prefix>_power.csv` and `<prefix>_power.svg`. Returns the two
/// paths. Errors before creating any file when the table is empty.
pub fn emit_power_outputs(table: &PowerTable, path_prefix: &str) -> Result<(PathBuf, PathBuf)> {
    if table.rows.is_empty() {
        return Err(Error::InvalidInput("empty power table".into()));
    }
    let csv_path = PathBuf::from(format!("{path_prefix}_power.csv"));
    let svg_path = PathBuf::from(format!("{path_prefix}_power.svg"));
    if let Some(dir) = csv_path.parent() {
        if !dir.as_os_str().is_empty() && !dir.exists() {
            return Err(Error::InvalidInput(format!(
                "output directory {} does not exist",
                dir.display()
            )));
        }
    }
    write_atomic(&csv_path, table.to_csv_string().as_bytes())?;
    write_atomic(&svg_path, power_svg(table).as_bytes())?;
    Ok((csv_path, svg_path))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

/// Render the power curves: one `<polyline>` per sample size (rejection
/// frequency against δ) and a single dashed reference `<line>` at the
/// nominal size. Axes are drawn as `<path>` elements so structural checks
/// can count curves exactly.
fn power_svg(table: &PowerTable) -> String {
    const W: f64 = 640.0;
    const H: f64 = 440.0;
    const ML: f64 = 64.0; // left margin
    const MR: f64 = 24.0;
    const MT: f64 = 28.0;
    const MB: f64 = 56.0;

    let mut ns: Vec<usize> = table.rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut deltas: Vec<f64> = table.rows.iter().map(|r| r.delta).collect();
    deltas.sort_by(|a, b| a.partial_cmp(b).expect("finite deltas"));
    deltas.dedup();

    let d_lo = *deltas.first().expect("nonempty");
    let d_hi = *deltas.last().expect("nonempty");
    let d_span = if d_hi > d_lo { d_hi - d_lo } else { 1.0 };
    let px = |d: f64| ML + (d - d_lo) / d_span * (W - ML - MR);
    let py = |p: f64| H - MB - p * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // axes
    svg.push_str(&format!(
        "<path d=\"M {ML} {MT} L {ML} {y0} L {x1} {y0}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n",
        y0 = H - MB,
        x1 = W - MR,
    ));
    // y ticks at 0, .25, .5, .75, 1
    for i in 0..=4 {
        let p = i as f64 * 0.25;
        let y = py(p);
        svg.push_str(&format!(
            "<path d=\"M {x0} {y} L {ML} {y}\" stroke=\"black\" stroke-width=\"1\"/>\n",
            x0 = ML - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-size=\"12\" text-anchor=\"end\" dominant-baseline=\"middle\">{p}</text>\n",
            x = ML - 8.0,
            y = y + 1.0
        ));
    }
    // x ticks at each delta
    for &d in &deltas {
        let x = px(d);
        svg.push_str(&format!(
            "<path d=\"M {x} {y0} L {x} {y1}\" stroke=\"black\" stroke-width=\"1\"/>\n",
            y0 = H - MB,
            y1 = H - MB + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-size=\"12\" text-anchor=\"middle\">{d}</text>\n",
            y = H - MB + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-size=\"13\" text-anchor=\"middle\">deviation from the null (delta)</text>\n",
        x = (ML + W - MR) / 2.0,
        y = H - 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{y}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {y})\">rejection frequency</text>\n",
        y = (MT + H - MB) / 2.0
    ));
    // nominal-size reference line
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"gray\" stroke-width=\"1\" stroke-dasharray=\"2,3\"/>\n",
        y = py(table.nominal_size),
        x1 = W - MR
    ));
    // one curve per n; smaller sizes dashed, largest solid
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"];
    for (i, &n) in ns.iter().enumerate() {
        let mut pts = Vec::new();
        for &d in &deltas {
            if let Some(row) = table.row(d, n) {
                pts.push(format!("{},{}", px(d), py(row.rejection_frequency)));
            }
        }
        let dash = if i + 1 == ns.len() { "" } else { " stroke-dasharray=\"6,4\"" };
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{dash}/>\n",
            pts.join(" "),
            palette[i % palette.len()],
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-size=\"12\" fill=\"{}\">N = {n}</text>\n",
            palette[i % palette.len()],
            x = W - MR - 90.0,
            y = MT + 16.0 * (i as f64 + 1.0),
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
