//! Dense complex linear algebra on small matrices.
//!
//! Every operator in the crate (unitaries, Kraus operators, density matrices,
//! dilations) is a [`CMatrix`]. Dimensions stay below ~16, so everything is
//! plain dense storage backed by `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Absolute tolerance for algebraic identities.
pub const ALGEBRA_TOL: f64 = 1e-10;
/// Residual below which a Gram-Schmidt candidate is treated as dependent.
pub const GRAM_SCHMIDT_SKIP: f64 = 1e-8;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Builds a matrix from real row-major entries.
pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> CMatrix {
    assert_eq!(rows * cols, entries.len());
    CMatrix::from_row_iterator(rows, cols, entries.iter().map(|&x| cr(x)))
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Entry-wise comparison with an explicit absolute tolerance.
pub fn approx_eq(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    a.shape() == b.shape() && max_abs(&(a - b)) <= tol
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().sum()
}

/// Max-entry residual of `m - m†`.
pub fn hermitian_residual(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Max-entry residual of `m†m - 1`.
pub fn unitarity_residual(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(m.adjoint() * m - identity(m.nrows())))
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |acc: f64, &s| acc.max(s))
}

/// The two factors of a bipartite tensor product space, `A ⊗ B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bipartition {
    pub dim_a: usize,
    pub dim_b: usize,
}

impl Bipartition {
    pub fn new(dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 {
            return Err(Error::InvalidArgument(format!(
                "bipartition factors must be positive, got {dim_a}x{dim_b}"
            )));
        }
        Ok(Self { dim_a, dim_b })
    }

    pub fn total(&self) -> usize {
        self.dim_a * self.dim_b
    }
}

/// Which tensor factor to trace out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Kronecker product `a ⊗ b`. The index of `a` is the slow one.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Traces out one factor of `m` acting on `A ⊗ B`.
pub fn partial_trace(m: &CMatrix, part: Bipartition, side: Side) -> Result<CMatrix> {
    let n = part.total();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "partial trace expects {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let (da, db) = (part.dim_a, part.dim_b);
    let out = match side {
        Side::A => CMatrix::from_fn(db, db, |i, j| {
            (0..da).map(|k| m[(k * db + i, k * db + j)]).sum()
        }),
        Side::B => CMatrix::from_fn(da, da, |i, j| {
            (0..db).map(|k| m[(i * db + k, j * db + k)]).sum()
        }),
    };
    Ok(out)
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, aligned with `values`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn reconstruct(&self) -> CMatrix {
        let diag = CMatrix::from_diagonal(&DVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&v| cr(v)),
        ));
        &self.vectors * diag * self.vectors.adjoint()
    }

    /// Rebuilds `Σ f(λ) |v⟩⟨v|`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let diag = DVector::from_iterator(self.values.len(), self.values.iter().map(|&v| f(v)));
        &self.vectors * CMatrix::from_diagonal(&diag) * self.vectors.adjoint()
    }
}

fn check_hermitian(m: &CMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let res = hermitian_residual(m);
    if res > ALGEBRA_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(res));
    }
    Ok(())
}

pub fn eig_hermitian(m: &CMatrix) -> Result<HermitianEigen> {
    check_hermitian(m)?;
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok(HermitianEigen { values, vectors })
}

/// `exp(-i h tau)` for Hermitian `h`.
pub fn matrix_exp_hermitian_generator(h: &CMatrix, tau: f64) -> Result<CMatrix> {
    let eig = eig_hermitian(h)?;
    Ok(eig.map_spectrum(|lambda| Complex64::from_polar(1.0, -lambda * tau)))
}

/// Sum of singular values.
pub fn trace_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.sum()
}

/// Moore-Penrose pseudo-inverse with an absolute singular-value cutoff,
/// together with the numerical rank.
pub fn pseudo_inverse(m: &CMatrix, cutoff: f64) -> (CMatrix, usize) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut pinv = CMatrix::zeros(m.ncols(), m.nrows());
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            rank += 1;
            let v = v_t.row(k).adjoint();
            let u_k = u.column(k);
            pinv += (v * u_k.adjoint()).scale(1.0 / s);
        }
    }
    (pinv, rank)
}

/// Extends orthonormal columns to a unitary; the given columns come first.
pub fn complete_to_unitary(columns: &CMatrix, total_dim: usize) -> Result<CMatrix> {
    let positions: Vec<usize> = (0..columns.ncols()).collect();
    complete_to_unitary_at(columns, &positions, total_dim)
}

/// Extends orthonormal columns to a unitary, placing column `k` of `columns`
/// at index `positions[k]`. The remaining columns are canonical basis vectors
/// taken in index order and orthogonalized by modified Gram-Schmidt; vectors
/// whose residual falls below [`GRAM_SCHMIDT_SKIP`] are dropped. They fill the
/// free positions in ascending order.
pub fn complete_to_unitary_at(
    columns: &CMatrix,
    positions: &[usize],
    total_dim: usize,
) -> Result<CMatrix> {
    if columns.nrows() != total_dim
        || columns.ncols() != positions.len()
        || positions.len() > total_dim
    {
        return Err(Error::DimensionMismatch(format!(
            "cannot place {}x{} columns at {} positions in dimension {total_dim}",
            columns.nrows(),
            columns.ncols(),
            positions.len()
        )));
    }
    let mut taken = vec![false; total_dim];
    for &p in positions {
        if p >= total_dim || taken[p] {
            return Err(Error::InvalidArgument(format!(
                "invalid or repeated column position {p}"
            )));
        }
        taken[p] = true;
    }
    let gram = columns.adjoint() * columns;
    let res = max_abs(&(gram - identity(columns.ncols())));
    if res > ALGEBRA_TOL {
        return Err(Error::NotOrthonormal(res));
    }

    let mut basis: Vec<CVector> = columns.column_iter().map(|col| col.into_owned()).collect();
    let mut extra = Vec::with_capacity(total_dim - basis.len());
    for k in 0..total_dim {
        if basis.len() == total_dim {
            break;
        }
        let mut v = CVector::zeros(total_dim);
        v[k] = cr(1.0);
        // two sweeps keep the new vector orthogonal to working precision
        for _ in 0..2 {
            for b in &basis {
                let overlap = b.dotc(&v);
                v -= b * overlap;
            }
        }
        let norm = v.norm();
        if norm < GRAM_SCHMIDT_SKIP {
            continue;
        }
        v.unscale_mut(norm);
        basis.push(v.clone());
        extra.push(v);
    }
    if basis.len() != total_dim {
        return Err(Error::NotOrthonormal(f64::NAN));
    }

    let mut out = CMatrix::zeros(total_dim, total_dim);
    for (k, &p) in positions.iter().enumerate() {
        out.set_column(p, &columns.column(k));
    }
    let free = (0..total_dim).filter(|&p| !taken[p]);
    for (p, v) in free.zip(extra) {
        out.set_column(p, &v);
    }
    Ok(out)
}

/// Row-major vectorization `vec(E_ab) = e_{a*n + b}`.
pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_iterator(m.len(), m.transpose().iter().copied())
}

pub fn unvectorize(v: &CVector, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, v.iter().copied())
}

/// Matrix unit `E_ab` of shape `n x n`.
pub fn matrix_unit(n: usize, a: usize, b: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    m[(a, b)] = cr(1.0);
    m
}

pub fn pauli_x() -> CMatrix {
    real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)])
}

pub fn pauli_z() -> CMatrix {
    real_matrix(2, 2, &[1.0, 0.0, 0.0, -1.0])
}
