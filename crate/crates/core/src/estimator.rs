//! Moment-corrected correlation matrix and the SVD grid search over noise
//! moments.
//!
//! For rows `r, s` of the stacked Hankel matrix with noise means `µ(r)` and raw
//! second moments `ν(r)` (input or output moments, chosen by row kind):
//!
//! ```text
//! M̂[r][r] = Ḡ[r][r] − 2 µ(r) r̄[r] + Nc (2 µ(r)² − ν(r))
//! M̂[r][s] = Ḡ[r][s] − µ(r) r̄[s] − µ(s) r̄[r] + Nc µ(r) µ(s)      (r ≠ s)
//! ```
//!
//! Distinct rows never share a noise sample at the same time and channel, so
//! their noise cross term has expectation `Nc µ(r) µ(s)`; the diagonal picks up
//! `Nc ν(r)` instead. With equal input and output moments this is exactly the
//! identical-moment form, and both modes run through the same code.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hankel::{stacked_hankel, RowKind};
use crate::linalg::{self, rank_of_values, Spectrum, SubspaceBasis};
use crate::sim::Dataset;
use crate::stats::AveragedStats;
use crate::{Error, Real, Result};

/// Admission threshold on singular values used by the reference setup.
pub const DEFAULT_EPS_SIGMA: f64 = 1e-3;

/// Candidate raw noise moments for the input and output channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint<T: Real> {
    pub m1u: T,
    pub m2u: T,
    pub m1y: T,
    pub m2y: T,
}

impl<T: Real> MomentPoint<T> {
    pub fn new(m1u: T, m2u: T, m1y: T, m2y: T) -> Self {
        MomentPoint { m1u, m2u, m1y, m2y }
    }

    /// Same moments on inputs and outputs.
    pub fn identical(m1: T, m2: T) -> Self {
        MomentPoint::new(m1, m2, m1, m2)
    }

    pub fn zero() -> Self {
        MomentPoint::identical(T::zero(), T::zero())
    }

    pub fn is_identical(&self) -> bool {
        self.m1u == self.m1y && self.m2u == self.m2y
    }

    /// `m2 ≥ m1²` on both channels, i.e. a nonnegative variance.
    pub fn is_feasible(&self) -> bool {
        self.m2u >= self.m1u * self.m1u && self.m2y >= self.m1y * self.m1y
    }

    /// `(µ, ν)` for rows of `kind`.
    pub fn moments(&self, kind: RowKind) -> (T, T) {
        match kind {
            RowKind::Input => (self.m1u, self.m2u),
            RowKind::Output => (self.m1y, self.m2y),
        }
    }
}

/// Corrected correlation matrix `M̂(pt)`, symmetrized.
pub fn assemble_m<T: Real>(st: &AveragedStats<T>, pt: &MomentPoint<T>) -> DMatrix<T> {
    let layout = st.layout();
    let d = st.d();
    let g = st.gram_mean();
    let rbar = st.rowsum_mean();
    let nc = T::from_count(st.cols());
    let two = T::lit(2.0);
    let mu: Vec<(T, T)> = (0..d).map(|r| pt.moments(layout.row_kind(r))).collect();
    let raw = DMatrix::from_fn(d, d, |r, s| {
        let (mu_r, nu_r) = mu[r];
        if r == s {
            g[(r, r)] - two * mu_r * rbar[r] + nc * (two * mu_r * mu_r - nu_r)
        } else {
            let mu_s = mu[s].0;
            g[(r, s)] - mu_r * rbar[s] - mu_s * rbar[r] + nc * mu_r * mu_s
        }
    });
    linalg::symmetrize(&raw)
}

/// `(1/Nt) Σᵢ Hᵢ Hᵢᵀ` computed directly from the experiments.
pub fn noiseless_m<T: Real>(ds: &Dataset<T>, depth: usize) -> Result<DMatrix<T>> {
    let mut acc: Option<DMatrix<T>> = None;
    for e in ds.experiments() {
        let h = stacked_hankel(e, depth)?;
        let hh = h.matrix() * h.matrix().transpose();
        acc = Some(match acc {
            None => hh,
            Some(a) => a + hh,
        });
    }
    let sum = acc.ok_or(Error::EmptyEnsemble)?;
    Ok(sum / T::from_count(ds.nt()))
}

/// `vᵀ M_D v` evaluated as `(1/Nt) Σᵢ ‖Hᵢᵀ v‖²`, a sum of nonnegative terms
/// that is exactly zero on the common left null space.
pub fn noiseless_quadratic_form<T: Real>(ds: &Dataset<T>, depth: usize, v: &DVector<T>) -> Result<T> {
    let mut total = T::zero();
    for e in ds.experiments() {
        let h = stacked_hankel(e, depth)?;
        if v.len() != h.rows() {
            return Err(Error::invalid(format!("vector has length {}, expected {}", v.len(), h.rows())));
        }
        total += (h.matrix().transpose() * v).norm_squared();
    }
    Ok(total / T::from_count(ds.nt()))
}

/// Full SVD of the symmetrized matrix: descending singular values and
/// orthonormal singular vectors as columns.
pub fn svd_spectrum<T: Real>(m: &DMatrix<T>) -> Result<Spectrum<T>> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid("expected a square matrix"));
    }
    linalg::svd(&linalg::symmetrize(m))
}

pub fn numerical_rank<T: Real>(m: &DMatrix<T>, eps_rank: T) -> Result<usize> {
    linalg::numerical_rank(m, eps_rank)
}

/// `points` uniformly spaced values on `[lo, hi]`; a single point sits at `lo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        let axis = GridAxis { lo, hi, points };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo >= self.hi || self.points == 0
        {
            return Err(Error::invalid(format!(
                "grid axis needs finite lo < hi and at least one point, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.points == 1 {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }
}

/// Search grid over the noise moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum MomentGrid {
    /// Shared moments on inputs and outputs: a 2-D grid.
    Identical { m1: GridAxis, m2: GridAxis },
    /// Separate input and output moments: a 4-D grid.
    Distinct {
        m1u: GridAxis,
        m2u: GridAxis,
        m1y: GridAxis,
        m2y: GridAxis,
    },
}

impl MomentGrid {
    pub fn identical(m1: GridAxis, m2: GridAxis) -> Self {
        MomentGrid::Identical { m1, m2 }
    }

    fn axes(&self) -> Vec<&GridAxis> {
        match self {
            MomentGrid::Identical { m1, m2 } => vec![m1, m2],
            MomentGrid::Distinct { m1u, m2u, m1y, m2y } => vec![m1u, m2u, m1y, m2y],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.axes().into_iter().try_for_each(GridAxis::validate)
    }

    pub fn len(&self) -> usize {
        self.axes().iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_identical(&self) -> bool {
        matches!(self, MomentGrid::Identical { .. })
    }

    /// Point `i` in row-major order (first axis slowest).
    pub fn point<T: Real>(&self, i: usize) -> MomentPoint<T> {
        let axes = self.axes();
        let mut rem = i;
        let mut coords = vec![0.0; axes.len()];
        for (k, axis) in axes.iter().enumerate().rev() {
            coords[k] = axis.value(rem % axis.points);
            rem /= axis.points;
        }
        let c: Vec<T> = coords.into_iter().map(T::lit).collect();
        match self {
            MomentGrid::Identical { .. } => MomentPoint::identical(c[0], c[1]),
            MomentGrid::Distinct { .. } => MomentPoint::new(c[0], c[1], c[2], c[3]),
        }
    }
}

/// How `eps_sigma` is compared against singular values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    /// `σ < eps_sigma`.
    #[default]
    Absolute,
    /// `σ < eps_sigma · σ_max`.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub eps_sigma: f64,
    pub threshold: Threshold,
    /// Relative cutoff for the reported numerical rank.
    pub eps_rank: f64,
    /// Expected dimension of the left null space, `pL − n`.
    pub nullity: usize,
}

impl SearchOptions {
    pub fn new(nullity: usize) -> Self {
        SearchOptions {
            eps_sigma: DEFAULT_EPS_SIGMA,
            threshold: Threshold::Absolute,
            eps_rank: crate::validate::DEFAULT_EPS_RANK,
            nullity,
        }
    }

    fn cutoff<T: Real>(&self, sigma_max: T) -> T {
        match self.threshold {
            Threshold::Absolute => T::lit(self.eps_sigma),
            Threshold::Relative => T::lit(self.eps_sigma) * sigma_max,
        }
    }

    /// Number of singular values below the admission cutoff.
    pub fn small_count<T: Real>(&self, values: &DVector<T>) -> usize {
        let cutoff = self.cutoff(values.get(0).copied().unwrap_or_else(T::zero));
        values.iter().filter(|&&s| s < cutoff).count()
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapePoint<T: Real> {
    pub point: MomentPoint<T>,
    pub sigma_min: T,
    pub rank: usize,
    pub admitted: bool,
}

/// An admitted grid point with its estimated left null space.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T: Real> {
    pub point: MomentPoint<T>,
    pub sigma_min: T,
    pub singular_values: DVector<T>,
    pub nullspace: SubspaceBasis<T>,
}

#[derive(Debug, Clone)]
pub struct SearchResult<T: Real> {
    /// Every grid point in row-major order.
    pub landscape: Vec<LandscapePoint<T>>,
    /// Admitted points in row-major order.
    pub candidates: Vec<Candidate<T>>,
    /// Index into `candidates` of the smallest `sigma_min` (first on ties).
    pub best_index: Option<usize>,
}

impl<T: Real> SearchResult<T> {
    pub fn best(&self) -> Option<&Candidate<T>> {
        self.best_index.map(|i| &self.candidates[i])
    }
}

/// Admits `pt` if exactly `nullity` singular values of `M̂(pt)` fall below the
/// cutoff, returning the candidate with its trailing singular vectors.
pub fn evaluate<T: Real>(
    st: &AveragedStats<T>,
    pt: &MomentPoint<T>,
    opts: &SearchOptions,
) -> Result<(Spectrum<T>, bool)> {
    let spectrum = svd_spectrum(&assemble_m(st, pt))?;
    let admitted = opts.small_count(&spectrum.values) == opts.nullity;
    Ok((spectrum, admitted))
}

/// Index of the smallest `sigma_min`; the earliest wins ties.
pub fn select_best<T: Real>(candidates: &[Candidate<T>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        match best {
            Some(b) if candidates[b].sigma_min <= c.sigma_min => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Evaluates every grid point and selects the admitted point with the
/// smallest minimum singular value.
pub fn grid_search<T: Real>(
    st: &AveragedStats<T>,
    grid: &MomentGrid,
    opts: &SearchOptions,
) -> Result<SearchResult<T>> {
    grid.validate()?;
    let d = st.d();
    if opts.nullity == 0 || opts.nullity >= d {
        return Err(Error::invalid(format!(
            "nullity must lie in [1, {}], got {}",
            d.saturating_sub(1),
            opts.nullity
        )));
    }
    if !(opts.eps_sigma.is_finite() && opts.eps_sigma > 0.0) {
        return Err(Error::invalid("eps_sigma must be positive"));
    }
    let eps_rank = T::lit(opts.eps_rank);

    let landscape = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let point = grid.point::<T>(i);
            let values = linalg::singular_values(&assemble_m(st, &point))?;
            Ok(LandscapePoint {
                point,
                sigma_min: values[d - 1],
                rank: rank_of_values(&values, eps_rank),
                admitted: opts.small_count(&values) == opts.nullity,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let candidates = landscape
        .par_iter()
        .filter(|lp| lp.admitted)
        .map(|lp| {
            let spectrum = svd_spectrum(&assemble_m(st, &lp.point))?;
            Ok(Candidate {
                point: lp.point,
                sigma_min: lp.sigma_min,
                nullspace: spectrum.trailing_basis(opts.nullity),
                singular_values: spectrum.values,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best_index = select_best(&candidates);
    Ok(SearchResult {
        landscape,
        candidates,
        best_index,
    })
}
