//! Single-pass mergeable aggregates of the noisy stacked Hankel rows.
//!
//! The corrected matrix for any moment point depends on the data only through
//! `G = Σᵢ H̃ᵢ H̃ᵢᵀ` and `rowsum = Σᵢ H̃ᵢ 1`. Both are plain sums, so shards can
//! be aggregated independently and merged.
//!
//! [`aggregate`] fixes the summation tree by the experiment count alone
//! (balanced halving down to [`LEAF_SIZE`]), which makes its result
//! bit-identical for any thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::hankel::{stacked_hankel, Layout, StackedHankel};
use crate::sim::{Dataset, Experiment};
use crate::{Error, Real, Result};

/// Experiments accumulated sequentially at the bottom of the summation tree.
pub const LEAF_SIZE: usize = 16;

/// Running sums over absorbed experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats<T: Real> {
    layout: Layout,
    cols: usize,
    count: u64,
    gram: DMatrix<T>,
    rowsum: DVector<T>,
}

impl<T: Real> SufficientStats<T> {
    /// Empty aggregate for `layout` and `Nc = cols` Hankel columns.
    pub fn new(layout: Layout, cols: usize) -> Self {
        let d = layout.rows();
        SufficientStats {
            layout,
            cols,
            count: 0,
            gram: DMatrix::zeros(d, d),
            rowsum: DVector::zeros(d),
        }
    }

    /// Rebuilds an aggregate from stored parts (e.g. a snapshot file).
    pub fn from_parts(
        layout: Layout,
        cols: usize,
        count: u64,
        gram: DMatrix<T>,
        rowsum: DVector<T>,
    ) -> Result<Self> {
        let d = layout.rows();
        if gram.shape() != (d, d) || rowsum.len() != d {
            return Err(Error::invalid(format!(
                "aggregate parts do not match d = {d}: G is {}x{}, rowsum has {}",
                gram.nrows(),
                gram.ncols(),
                rowsum.len()
            )));
        }
        if gram.iter().chain(rowsum.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("aggregate"));
        }
        Ok(SufficientStats {
            layout,
            cols,
            count,
            gram,
            rowsum,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// `(m + p) L`.
    pub fn d(&self) -> usize {
        self.layout.rows()
    }

    /// `N − L + 1`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    pub fn rowsum(&self) -> &DVector<T> {
        &self.rowsum
    }

    fn check_shape(&self, layout: Layout, cols: usize) -> Result<()> {
        if layout != self.layout || cols != self.cols {
            return Err(Error::invalid(format!(
                "shape mismatch: aggregate has {:?} with Nc = {}, got {:?} with Nc = {}",
                self.layout, self.cols, layout, cols
            )));
        }
        Ok(())
    }

    /// Absorbs one stacked Hankel matrix: `G += H Hᵀ`, `rowsum += H 1`.
    pub fn accumulate(&mut self, h: &StackedHankel<T>) -> Result<()> {
        self.check_shape(h.layout(), h.cols())?;
        let mat = h.matrix();
        let mut outer = mat * mat.transpose();
        outer.fill_upper_triangle_with_lower_triangle();
        self.gram += outer;
        for (r, row) in mat.row_iter().enumerate() {
            self.rowsum[r] += row.sum();
        }
        self.count += 1;
        Ok(())
    }

    pub fn accumulate_experiment(&mut self, e: &Experiment<T>) -> Result<()> {
        self.accumulate(&stacked_hankel(e, self.layout.depth)?)
    }

    /// Componentwise sum. Floating-point addition is commutative, so
    /// `a.merge(b) == b.merge(a)` bit for bit.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        self.check_shape(other.layout, other.cols)?;
        Ok(SufficientStats {
            layout: self.layout,
            cols: self.cols,
            count: self.count + other.count,
            gram: &self.gram + &other.gram,
            rowsum: &self.rowsum + &other.rowsum,
        })
    }

    /// Empirical means `Ḡ = G / Nt`, `r̄ = rowsum / Nt`.
    pub fn finalize(&self) -> Result<AveragedStats<T>> {
        if self.count == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let inv = T::one() / T::lit(self.count as f64);
        Ok(AveragedStats {
            layout: self.layout,
            cols: self.cols,
            count: self.count,
            gram_mean: &self.gram * inv,
            rowsum_mean: &self.rowsum * inv,
        })
    }
}

/// Ensemble means of the row inner products and row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedStats<T: Real> {
    layout: Layout,
    cols: usize,
    count: u64,
    gram_mean: DMatrix<T>,
    rowsum_mean: DVector<T>,
}

impl<T: Real> AveragedStats<T> {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn d(&self) -> usize {
        self.layout.rows()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `Ḡ[r][s] = (1/Nt) Σᵢ h̃ᵣ h̃ₛᵀ`.
    pub fn gram_mean(&self) -> &DMatrix<T> {
        &self.gram_mean
    }

    /// `r̄[r] = (1/Nt) Σᵢ h̃ᵣ 1`.
    pub fn rowsum_mean(&self) -> &DVector<T> {
        &self.rowsum_mean
    }
}

fn leaf<T: Real>(exps: &[Experiment<T>], layout: Layout, cols: usize) -> Result<SufficientStats<T>> {
    let mut st = SufficientStats::new(layout, cols);
    for e in exps {
        st.accumulate_experiment(e)?;
    }
    Ok(st)
}

fn tree<T: Real>(exps: &[Experiment<T>], layout: Layout, cols: usize) -> Result<SufficientStats<T>> {
    if exps.len() <= LEAF_SIZE {
        return leaf(exps, layout, cols);
    }
    let (lo, hi) = exps.split_at(exps.len() / 2);
    let (a, b) = rayon::join(|| tree(lo, layout, cols), || tree(hi, layout, cols));
    a?.merge(&b?)
}

fn shape_of<T: Real>(exps: &[Experiment<T>], depth: usize) -> Result<(Layout, usize)> {
    let first = exps.first().ok_or(Error::EmptyEnsemble)?;
    if first.len() < depth {
        return Err(Error::invalid(format!(
            "experiments have N = {} < L = {depth}",
            first.len()
        )));
    }
    Ok((Layout::new(first.m(), first.p(), depth)?, first.len() - depth + 1))
}

/// Aggregates a slice of experiments with balanced pairwise summation.
pub fn aggregate_experiments<T: Real>(
    exps: &[Experiment<T>],
    depth: usize,
) -> Result<SufficientStats<T>> {
    let (layout, cols) = shape_of(exps, depth)?;
    tree(exps, layout, cols)
}

/// Aggregates the whole dataset in one pass.
pub fn aggregate<T: Real>(ds: &Dataset<T>, depth: usize) -> Result<SufficientStats<T>> {
    aggregate_experiments(ds.experiments(), depth)
}

/// Splits into `shards` contiguous chunks, aggregates each independently and
/// merges them in shard order.
pub fn aggregate_sharded<T: Real>(
    ds: &Dataset<T>,
    depth: usize,
    shards: usize,
) -> Result<SufficientStats<T>> {
    let exps = ds.experiments();
    let (layout, cols) = shape_of(exps, depth)?;
    let shards = shards.clamp(1, exps.len());
    let chunk = exps.len().div_ceil(shards);
    let parts = exps
        .par_chunks(chunk)
        .map(|c| tree(c, layout, cols))
        .collect::<Result<Vec<_>>>()?;
    let mut acc = SufficientStats::new(layout, cols);
    for p in &parts {
        acc = acc.merge(p)?;
    }
    Ok(acc)
}
