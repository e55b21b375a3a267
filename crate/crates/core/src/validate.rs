//! Model-based oracles and subspace error metrics.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::estimator::{grid_search, MomentGrid, SearchOptions};
use crate::hankel::{stacked_hankel, DEFAULT_RANK_TOL};
use crate::linalg::{self, SubspaceBasis};
use crate::rng::{child_seed, derived, Purpose};
use crate::sim::{add_noise, generate_dataset, generate_pe_input, InitialState, NoiseSpec, StateSpace};
use crate::stats::aggregate_experiments;
use crate::{Error, Real, Result};

/// Relative cutoff for the numerical rank reported on the landscape.
pub const DEFAULT_EPS_RANK: f64 = 1e-2;

/// Orthonormality slack accepted by [`subspace_angle`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Expected left null space dimension `pL − n`.
pub fn expected_nullity(n: usize, p: usize, depth: usize) -> Result<usize> {
    (p * depth).checked_sub(n).ok_or_else(|| {
        Error::invalid(format!(
            "depth L = {depth} is too small: pL = {} < n = {n}",
            p * depth
        ))
    })
}

/// Left null space of the stacked Hankel matrix of one long noiseless
/// experiment whose input is persistently exciting of order `L + n`.
pub fn true_nullspace<T: Real>(
    ss: &StateSpace<T>,
    depth: usize,
    seed: u64,
) -> Result<SubspaceBasis<T>> {
    let (n, m, p) = (ss.n(), ss.m(), ss.p());
    if depth == 0 {
        return Err(Error::invalid("depth L must be at least 1"));
    }
    let expected = expected_nullity(n, p, depth)?;
    let d = (m + p) * depth;
    let order = depth + n;
    let samples = 2 * ((m + 1) * order + depth) + d;

    let mut rng = derived(seed, Purpose::Oracle, 0);
    let u = generate_pe_input::<T, _>(samples, m, order, &mut rng)?;
    let x0 = DVector::from_fn(n, |_, _| T::lit(rng.random_range(-1.0..1.0)));
    let e = ss.simulate(&x0, &u)?;
    let h = stacked_hankel(&e, depth)?;

    // SVD of Hᵀ: its right singular vectors span R^d because Nc ≥ d.
    let spectrum = linalg::svd(&h.matrix().transpose())?;
    let cutoff = T::lit(DEFAULT_RANK_TOL) * spectrum.sigma_max();
    let found = spectrum.values.iter().filter(|&&s| s < cutoff).count();
    if found != expected {
        return Err(Error::OracleFailure { expected, found });
    }
    if expected == 0 {
        return Ok(SubspaceBasis::empty(d));
    }
    Ok(spectrum.trailing_basis(expected))
}

/// Principal-angle comparison of two subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceError<T: Real> {
    /// Largest principal angle in radians, in `[0, π/2]`.
    pub theta_max: T,
    /// Cosines of the principal angles (singular values of `V_true V̂ᵀ`),
    /// descending, clamped to `[0, 1]`.
    pub cosines: DVector<T>,
}

/// `θ_max = arccos(σ_min(V_true V̂ᵀ))`.
pub fn subspace_angle<T: Real>(
    v_true: &SubspaceBasis<T>,
    v_hat: &SubspaceBasis<T>,
) -> Result<SubspaceError<T>> {
    if v_true.dim() != v_hat.dim() || v_true.ambient_dim() != v_hat.ambient_dim() {
        return Err(Error::invalid(format!(
            "subspace shapes differ: {}x{} vs {}x{}",
            v_true.dim(),
            v_true.ambient_dim(),
            v_hat.dim(),
            v_hat.ambient_dim()
        )));
    }
    let tol = T::lit(ORTHONORMAL_TOL);
    for (name, b) in [("true", v_true), ("estimated", v_hat)] {
        let err = b.orthonormality_error();
        if !matches!(err.partial_cmp(&tol), Some(Ordering::Less | Ordering::Equal)) {
            return Err(Error::invalid(format!(
                "{name} basis is not orthonormal (max |VVᵀ - I| = {err:e})"
            )));
        }
    }
    if v_true.dim() == 0 {
        return Ok(SubspaceError {
            theta_max: T::zero(),
            cosines: DVector::zeros(0),
        });
    }
    let inner: DMatrix<T> = v_true.rows() * v_hat.rows().transpose();
    let cosines = linalg::singular_values(&inner)?.map(|c| c.clamp(T::zero(), T::one()));
    let mut theta_max = cosines[cosines.len() - 1].acos();
    if theta_max < T::lit(0.5) {
        // arccos loses half the digits near 1; the sine of the same angle is
        // the spectral norm of V̂ minus its projection onto span(V_true).
        let residual = v_hat.rows() - &inner.transpose() * v_true.rows();
        let sine = linalg::singular_values(&residual)?[0].min(T::one());
        theta_max = sine.asin();
    }
    Ok(SubspaceError { theta_max, cosines })
}

/// Everything a convergence study needs besides the `Nt` ladder.
#[derive(Debug, Clone)]
pub struct StudySetup<T: Real> {
    pub system: StateSpace<T>,
    pub samples: usize,
    pub depth: usize,
    pub x0: InitialState,
    pub noise_u: NoiseSpec,
    pub noise_y: NoiseSpec,
    pub grid: MomentGrid,
    pub options: SearchOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub nt: usize,
    pub seed: u64,
    /// `None` when the grid search admitted no candidate.
    pub theta_max: Option<f64>,
}

impl StudyRow {
    pub fn admitted(&self) -> bool {
        self.theta_max.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub nt: usize,
    pub median_theta_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<StudyRow>,
    pub summary: Vec<StudySummary>,
}

/// Median with runs that admitted nothing counted as the worst angle, π/2.
pub fn median_theta(values: &[Option<f64>]) -> f64 {
    let mut v: Vec<f64> = values
        .iter()
        .map(|t| t.unwrap_or(std::f64::consts::FRAC_PI_2))
        .collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// For each replicate seed, generates the largest ensemble once and evaluates
/// every `Nt` on its prefix (experiment streams do not depend on `Nt`, so a
/// prefix is exactly the smaller ensemble).
pub fn convergence_study<T: Real>(
    setup: &StudySetup<T>,
    nt_list: &[usize],
    seeds: usize,
) -> Result<ConvergenceTable> {
    if nt_list.is_empty() || nt_list.windows(2).any(|w| w[0] >= w[1]) || nt_list[0] == 0 {
        return Err(Error::invalid("Nt list must be positive and strictly ascending"));
    }
    if seeds == 0 {
        return Err(Error::invalid("need at least one seed"));
    }
    let truth = true_nullspace(&setup.system, setup.depth, setup.seed)?;
    let nt_max = *nt_list.last().expect("nonempty");

    let per_seed = (0..seeds as u64)
        .into_par_iter()
        .map(|j| {
            let seed = child_seed(setup.seed, j);
            let clean = generate_dataset(&setup.system, nt_max, setup.samples, setup.depth, setup.x0, seed)?;
            let noisy = add_noise(&clean, &setup.noise_u, &setup.noise_y, seed)?;
            nt_list
                .par_iter()
                .map(|&nt| {
                    let st = aggregate_experiments(&noisy.experiments()[..nt], setup.depth)?
                        .finalize()?;
                    let result = grid_search(&st, &setup.grid, &setup.options)?;
                    let theta_max = match result.best() {
                        Some(best) => Some(subspace_angle(&truth, &best.nullspace)?.theta_max.as_f64()),
                        None => None,
                    };
                    Ok(StudyRow { nt, seed: j, theta_max })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<StudyRow> = per_seed.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.nt, r.seed));
    let summary = nt_list
        .iter()
        .map(|&nt| {
            let thetas: Vec<Option<f64>> =
                rows.iter().filter(|r| r.nt == nt).map(|r| r.theta_max).collect();
            StudySummary {
                nt,
                median_theta_max: median_theta(&thetas),
            }
        })
        .collect();
    Ok(ConvergenceTable { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::GridAxis;
    use nalgebra::{dmatrix, DMatrix};

    fn scalar(a: f64, b: f64) -> StateSpace<f64> {
        StateSpace::new(dmatrix![a], dmatrix![b], dmatrix![1.0], dmatrix![0.0]).unwrap()
    }

    fn basis(rows: DMatrix<f64>) -> SubspaceBasis<f64> {
        SubspaceBasis::new(rows, 1e-12).unwrap()
    }

    #[test]
    fn benchmark_nullspace_has_three_rows() {
        let v = true_nullspace(&StateSpace::<f64>::benchmark(), 2, 1).unwrap();
        assert_eq!((v.dim(), v.ambient_dim()), (3, 10));
        assert!(v.orthonormality_error() < 1e-12);
    }

    #[test]
    fn scalar_depth_one_is_empty() {
        let v = true_nullspace(&scalar(0.5, 2.0), 1, 1).unwrap();
        assert_eq!((v.dim(), v.ambient_dim()), (0, 2));
    }

    #[test]
    fn scalar_depth_two_matches_recursion() {
        let (a, b) = (0.5, 2.0);
        let v = true_nullspace(&scalar(a, b), 2, 3).unwrap();
        let hand = dmatrix![-b, 0.0, -a, 1.0];
        let hand = basis(&hand / hand.norm());
        assert!(subspace_angle(&hand, &v).unwrap().theta_max < 1e-8);
    }

    #[test]
    fn too_shallow_is_rejected() {
        assert!(expected_nullity(3, 1, 2).is_err());
        assert_eq!(expected_nullity(3, 3, 2).unwrap(), 3);
        assert!(true_nullspace(&StateSpace::<f64>::benchmark(), 0, 1).is_err());
    }

    #[test]
    fn basis_annihilates_fresh_experiments() {
        let ss = StateSpace::<f64>::benchmark();
        let v = true_nullspace(&ss, 2, 5).unwrap();
        let init = InitialState::RandomBounded { half_width: 1.0 };
        let ds = generate_dataset(&ss, 100, 30, 2, init, 77).unwrap();
        for e in ds.experiments() {
            let h = stacked_hankel(e, 2).unwrap();
            let r = v.rows() * h.matrix();
            assert!(r.amax() <= 1e-8, "{}", r.amax());
        }
    }

    #[test]
    fn windows_are_trajectories_and_perturbations_are_not() {
        let ss = StateSpace::<f64>::benchmark();
        let v = true_nullspace(&ss, 2, 5).unwrap();
        let init = InitialState::RandomBounded { half_width: 1.0 };
        let ds = generate_dataset(&ss, 1, 40, 2, init, 8).unwrap();
        let h = stacked_hankel(&ds.experiments()[0], 2).unwrap();
        let dir = v.rows().row(0).transpose();
        for z in h.matrix().column_iter() {
            assert!((v.rows() * z).norm() <= 1e-8);
            let bad = z + &dir * 0.1;
            assert!((v.rows() * bad).norm() > 1e-3);
        }
    }

    #[test]
    fn identical_subspaces_have_zero_angle() {
        let v = true_nullspace(&StateSpace::<f64>::benchmark(), 2, 1).unwrap();
        let e = subspace_angle(&v, &v).unwrap();
        assert!(e.theta_max < 1e-12);
        assert!(e.cosines.iter().all(|&c| (0.0..=1.0).contains(&c)));
    }

    #[test]
    fn rotation_invariance_and_symmetry() {
        let v = true_nullspace(&StateSpace::<f64>::benchmark(), 2, 1).unwrap();
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let r = dmatrix![c, -s, 0.0; s, c, 0.0; 0.0, 0.0, -1.0];
        let w = v.rebased(&r).unwrap();
        assert!(subspace_angle(&v, &w).unwrap().theta_max < 1e-12);

        let other = SubspaceBasis::orthonormalize(&DMatrix::from_fn(3, 10, |i, j| {
            ((i * 10 + j) as f64 * 0.37).sin()
        }))
        .unwrap();
        let t1 = subspace_angle(&v, &other).unwrap().theta_max;
        let t2 = subspace_angle(&other, &v).unwrap().theta_max;
        let t3 = subspace_angle(&w, &other).unwrap().theta_max;
        assert!((t1 - t2).abs() <= 1e-10);
        assert!((t1 - t3).abs() <= 1e-10);
    }

    #[test]
    fn planar_angle() {
        let x = basis(dmatrix![1.0, 0.0]);
        for theta in [0.1, 0.7, 1.2, std::f64::consts::FRAC_PI_2] {
            let y = basis(dmatrix![theta.cos(), theta.sin()]);
            let got = subspace_angle(&x, &y).unwrap().theta_max;
            assert!((got - theta).abs() < 1e-12, "{got} vs {theta}");
        }
    }

    #[test]
    fn angle_rejects_bad_inputs() {
        let x = basis(dmatrix![1.0, 0.0]);
        let y = basis(dmatrix![1.0, 0.0, 0.0]);
        assert!(subspace_angle(&x, &y).is_err());
        let z = basis(dmatrix![1.0, 0.0; 0.0, 1.0]);
        assert!(subspace_angle(&x, &z).is_err());
        let loose = SubspaceBasis::new(dmatrix![1.1, 0.0], 1.0).unwrap();
        assert!(subspace_angle(&x, &loose).is_err());
    }

    #[test]
    fn median_counts_missing_runs_as_worst() {
        assert_eq!(median_theta(&[Some(0.1), None, Some(0.3)]), 0.3);
        assert_eq!(median_theta(&[Some(0.1), Some(0.3)]), 0.2);
        assert!(median_theta(&[]).is_nan());
    }

    fn noiseless_setup() -> StudySetup<f64> {
        StudySetup {
            system: StateSpace::benchmark(),
            samples: 30,
            depth: 2,
            x0: InitialState::RandomBounded { half_width: 1.0 },
            noise_u: NoiseSpec::NONE,
            noise_y: NoiseSpec::NONE,
            grid: MomentGrid::identical(
                GridAxis::new(0.0, 1.0, 2).unwrap(),
                GridAxis::new(0.0, 2.0, 2).unwrap(),
            ),
            options: SearchOptions::new(3),
            seed: 4,
        }
    }

    #[test]
    fn noiseless_study_recovers_exactly() {
        let t = convergence_study(&noiseless_setup(), &[5, 20, 40], 3).unwrap();
        assert_eq!(t.rows.len(), 9);
        assert_eq!(t.summary.len(), 3);
        for r in &t.rows {
            assert!(r.theta_max.unwrap() <= 1e-8, "{r:?}");
        }
    }

    #[test]
    fn study_rejects_bad_ladders() {
        let s = noiseless_setup();
        assert!(convergence_study(&s, &[], 1).is_err());
        assert!(convergence_study(&s, &[10, 10], 1).is_err());
        assert!(convergence_study(&s, &[0, 10], 1).is_err());
        assert!(convergence_study(&s, &[10], 0).is_err());
    }
}
