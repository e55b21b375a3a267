//! Shared setup for the acceptance gate in `tests/acceptance.rs`.

use std::time::{Duration, Instant};

use hankel_nullspace::estimator::{GridAxis, MomentGrid, SearchOptions};
use hankel_nullspace::sim::{add_noise, generate_dataset, InitialState, NoiseFamily, NoiseSpec};
use hankel_nullspace::{Dataset, Result, StateSpace};

pub const NT: usize = 10_000;
pub const SAMPLES: usize = 30;
pub const DEPTH: usize = 2;
pub const M1: f64 = 1.0;
pub const M2: f64 = 5.0;
pub const NULLITY: usize = 3;
pub const SEED: u64 = 1;

/// Moment grid over `[0, 1.5] × [2.5, 7]` with 200 points per axis.
pub fn benchmark_grid() -> MomentGrid {
    MomentGrid::identical(
        GridAxis { lo: 0.0, hi: 1.5, points: 200 },
        GridAxis { lo: 2.5, hi: 7.0, points: 200 },
    )
}

pub fn benchmark_options() -> SearchOptions {
    SearchOptions::new(NULLITY)
}

pub fn noise(family: NoiseFamily) -> NoiseSpec {
    NoiseSpec::from_moments(family, M1, M2).expect("feasible moments")
}

/// Noiseless and noisy benchmark ensembles with identical input/output noise.
pub fn benchmark_data(nt: usize, family: NoiseFamily, seed: u64) -> Result<(Dataset, Dataset)> {
    let ss = StateSpace::benchmark();
    let clean = generate_dataset(&ss, nt, SAMPLES, DEPTH, InitialState::default(), seed)?;
    let spec = noise(family);
    let noisy = add_noise(&clean, &spec, &spec, seed)?;
    Ok((clean, noisy))
}

pub fn timed<R>(f: impl FnOnce() -> R) -> (R, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
