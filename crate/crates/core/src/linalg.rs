//! Dense SVD helpers, numerical rank and orthonormal subspace bases.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Real, Result};

/// Singular values (descending) and the matching right singular vectors as
/// columns.
#[derive(Debug, Clone)]
pub struct Spectrum<T: Real> {
    pub values: DVector<T>,
    pub vectors: DMatrix<T>,
}

impl<T: Real> Spectrum<T> {
    pub fn sigma_max(&self) -> T {
        self.values.get(0).copied().unwrap_or_else(T::zero)
    }

    pub fn sigma_min(&self) -> T {
        self.values.iter().last().copied().unwrap_or_else(T::zero)
    }

    /// Orthonormal rows spanning the directions of the `k` smallest singular
    /// values. For a symmetric matrix these are also left singular vectors.
    pub fn trailing_basis(&self, k: usize) -> SubspaceBasis<T> {
        let total = self.vectors.ncols();
        let cols = self.vectors.columns(total - k, k);
        SubspaceBasis {
            basis: cols.transpose(),
        }
    }
}

fn ensure_finite<T: Real>(m: &DMatrix<T>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn descending_order<T: Real>(values: &DVector<T>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

/// Singular values of `m`, descending.
pub fn singular_values<T: Real>(m: &DMatrix<T>) -> Result<DVector<T>> {
    ensure_finite(m, "singular value input")?;
    if m.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let mut values = m.clone().svd(false, false).singular_values;
    values
        .as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(values)
}

/// Full SVD of `m`: singular values descending and the right singular
/// vectors (`ncols × min(nrows, ncols)`) in matching order.
pub fn svd<T: Real>(m: &DMatrix<T>) -> Result<Spectrum<T>> {
    ensure_finite(m, "SVD input")?;
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let order = descending_order(&svd.singular_values);
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| svd.singular_values[i]));
    let mut vectors = DMatrix::zeros(m.ncols(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v_t.row(src).transpose());
    }
    Ok(Spectrum { values, vectors })
}

/// Count of values strictly above `eps * max`.
pub fn rank_of_values<T: Real>(values: &DVector<T>, eps: T) -> usize {
    let max = values.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let cutoff = eps * max;
    values.iter().filter(|&&s| s > cutoff).count()
}

/// Number of singular values above `eps · σ_max`.
pub fn numerical_rank<T: Real>(m: &DMatrix<T>, eps: T) -> Result<usize> {
    Ok(rank_of_values(&singular_values(m)?, eps))
}

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    (m + m.transpose()) * half
}

/// Orthonormal basis of a subspace, stored as the rows of a `k × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis<T: Real> {
    basis: DMatrix<T>,
}

impl<T: Real> SubspaceBasis<T> {
    /// Wraps `rows` after checking `rows · rowsᵀ = I` to `tol` (max entry).
    pub fn new(rows: DMatrix<T>, tol: T) -> Result<Self> {
        ensure_finite(&rows, "subspace basis")?;
        let basis = SubspaceBasis { basis: rows };
        let err = basis.orthonormality_error();
        if err > tol {
            return Err(Error::invalid(format!(
                "basis rows are not orthonormal (max |VVᵀ - I| = {err:e})"
            )));
        }
        Ok(basis)
    }

    /// Orthonormal basis for the row space of `rows` (full row rank assumed).
    pub fn orthonormalize(rows: &DMatrix<T>) -> Result<Self> {
        ensure_finite(rows, "subspace basis")?;
        let q = rows.transpose().qr().q();
        Ok(SubspaceBasis {
            basis: q.transpose(),
        })
    }

    pub fn empty(ambient: usize) -> Self {
        SubspaceBasis {
            basis: DMatrix::zeros(0, ambient),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn rows(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn into_rows(self) -> DMatrix<T> {
        self.basis
    }

    pub fn orthonormality_error(&self) -> T {
        let k = self.dim();
        let gram = &self.basis * self.basis.transpose();
        (gram - DMatrix::<T>::identity(k, k)).amax()
    }

    /// Same subspace expressed in the basis `rotation · V`.
    pub fn rebased(&self, rotation: &DMatrix<T>) -> Result<Self> {
        if rotation.nrows() != self.dim() || rotation.ncols() != self.dim() {
            return Err(Error::invalid("rotation must be k×k"));
        }
        Ok(SubspaceBasis {
            basis: rotation * &self.basis,
        })
    }
}
