//! Block-Hankel matrices, the stacked input/output Hankel matrix and the
//! persistence-of-excitation test.
//!
//! Rows are channel-major within each lag block: for a `c`-channel signal the
//! row `lag * c + channel` holds `signal[lag + k][channel]` in column `k`.
//! The stacked matrix puts all `mL` input rows above the `pL` output rows.

use nalgebra::DMatrix;

use crate::linalg::numerical_rank;
use crate::sim::Experiment;
use crate::{Error, Real, Result};

/// Relative singular-value cutoff used for exact-rank questions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    Input,
    Output,
}

/// Dimensions that fix the row map of a stacked Hankel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Layout {
    pub m: usize,
    pub p: usize,
    #[serde(rename = "L")]
    pub depth: usize,
}

impl Layout {
    pub fn new(m: usize, p: usize, depth: usize) -> Result<Self> {
        if m == 0 || p == 0 || depth == 0 {
            return Err(Error::invalid("m, p and L must be positive"));
        }
        Ok(Layout { m, p, depth })
    }

    /// `(m + p) L`.
    pub fn rows(&self) -> usize {
        (self.m + self.p) * self.depth
    }

    pub fn input_rows(&self) -> usize {
        self.m * self.depth
    }

    pub fn row_index(&self, kind: RowKind, channel: usize, lag: usize) -> Result<usize> {
        row_index(kind, channel, lag, self.m, self.p, self.depth)
    }

    /// Inverse of [`Layout::row_index`]: `(kind, channel, lag)` of row `r`.
    pub fn row_origin(&self, r: usize) -> Result<(RowKind, usize, usize)> {
        if r >= self.rows() {
            return Err(Error::invalid(format!("row {r} out of range 0..{}", self.rows())));
        }
        let (kind, local, c) = if r < self.input_rows() {
            (RowKind::Input, r, self.m)
        } else {
            (RowKind::Output, r - self.input_rows(), self.p)
        };
        Ok((kind, local % c, local / c))
    }

    pub fn row_kind(&self, r: usize) -> RowKind {
        if r < self.input_rows() {
            RowKind::Input
        } else {
            RowKind::Output
        }
    }
}

/// Position of `(kind, channel, lag)` in the stacked Hankel row order.
pub fn row_index(
    kind: RowKind,
    channel: usize,
    lag: usize,
    m: usize,
    p: usize,
    depth: usize,
) -> Result<usize> {
    let channels = match kind {
        RowKind::Input => m,
        RowKind::Output => p,
    };
    if lag >= depth || channel >= channels {
        return Err(Error::invalid(format!(
            "({kind:?}, channel {channel}, lag {lag}) out of range for m={m}, p={p}, L={depth}"
        )));
    }
    let local = lag * channels + channel;
    Ok(match kind {
        RowKind::Input => local,
        RowKind::Output => m * depth + local,
    })
}

/// Depth-`depth` block-Hankel matrix of an `N × c` signal:
/// `(c·depth) × (N − depth + 1)`.
pub fn hankel<T: Real>(seq: &DMatrix<T>, depth: usize) -> Result<DMatrix<T>> {
    let (samples, c) = seq.shape();
    if depth == 0 || samples < depth {
        return Err(Error::invalid(format!(
            "Hankel depth must satisfy 1 <= L <= N, got L = {depth}, N = {samples}"
        )));
    }
    let cols = samples - depth + 1;
    Ok(DMatrix::from_fn(c * depth, cols, |row, k| {
        seq[(k + row / c, row % c)]
    }))
}

/// `[H_L(u); H_L(y)]` of one experiment together with its row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedHankel<T: Real> {
    matrix: DMatrix<T>,
    layout: Layout,
}

impl<T: Real> StackedHankel<T> {
    pub fn new(e: &Experiment<T>, depth: usize) -> Result<Self> {
        let layout = Layout::new(e.m(), e.p(), depth)?;
        let hu = hankel(&e.u, depth)?;
        let hy = hankel(&e.y, depth)?;
        let cols = hu.ncols();
        let mut matrix = DMatrix::zeros(layout.rows(), cols);
        matrix.rows_mut(0, hu.nrows()).copy_from(&hu);
        matrix.rows_mut(hu.nrows(), hy.nrows()).copy_from(&hy);
        Ok(StackedHankel { matrix, layout })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// `(m + p) L`.
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// `N − L + 1`.
    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

pub fn stacked_hankel<T: Real>(e: &Experiment<T>, depth: usize) -> Result<StackedHankel<T>> {
    StackedHankel::new(e, depth)
}

/// True iff `H_order(u)` has numerical rank `m · order` (relative cutoff
/// `tol · σ_max`). Too-short signals are never persistently exciting.
pub fn pe_order_check<T: Real>(u: &DMatrix<T>, order: usize, tol: T) -> bool {
    let m = u.ncols();
    match hankel(u, order) {
        Ok(h) if h.ncols() >= m * order => {
            numerical_rank(&h, tol).map(|r| r == m * order).unwrap_or(false)
        }
        _ => false,
    }
}
