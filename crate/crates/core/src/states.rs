//! Quantum states, generalized Gell-Mann bases and Bloch vectors.
//!
//! Bloch convention used everywhere in the crate: for a `q x q` operator `ρ`,
//! the components are `α_k = Tr(ρ σ_k)` and the reconstruction reads
//! `ρ = 1/q + ½ Σ_k α_k σ_k`, with `Tr(σ_i σ_j) = 2 δ_ij`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{
    c, cr, eig_hermitian, hermitian_residual, identity, trace, trace_norm, CMatrix, CVector,
    ALGEBRA_TOL,
};

/// Eigenvalue floor accepted as positive semidefinite.
pub const PSD_FLOOR: f64 = -1e-9;

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureStateVector {
    amplitudes: CVector,
}

impl PureStateVector {
    /// Accepts amplitudes whose norm is 1 within `1e-10`.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidState("empty amplitude vector".into()));
        }
        let norm_sq = amplitudes.norm_squared();
        if (norm_sq - 1.0).abs() > ALGEBRA_TOL {
            return Err(Error::InvalidState(format!(
                "amplitudes have squared norm {norm_sq}"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if amplitudes.is_empty() || norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        Ok(Self {
            amplitudes: amplitudes.unscale(norm),
        })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for dim {dim}"
            )));
        }
        let mut v = CVector::zeros(dim);
        v[index] = cr(1.0);
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.is_empty() {
            return Err(Error::InvalidState(format!(
                "density matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let herm = hermitian_residual(&matrix);
        if herm > ALGEBRA_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = trace(&matrix);
        if (tr - cr(1.0)).norm() > ALGEBRA_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min = eig_hermitian(&matrix)?.min();
        if min < PSD_FLOOR {
            return Err(Error::NotPositive(min));
        }
        Ok(Self { matrix })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: identity(dim).unscale(dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eig_hermitian(&self.matrix)
            .map(|e| e.min())
            .unwrap_or(f64::NAN)
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, u: &CMatrix) -> Result<Self> {
        if u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot conjugate dim {} state by {}x{} matrix",
                self.dim(),
                u.nrows(),
                u.ncols()
            )));
        }
        Self::new(u * &self.matrix * u.adjoint())
    }

    /// `p·self + (1-p)·other`.
    pub fn mix(&self, other: &Self, p: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(
                "mixing states of different dimension".into(),
            ));
        }
        Self::new(self.matrix.scale(p) + other.matrix.scale(1.0 - p))
    }
}

/// Generalized Gell-Mann matrices for dimension `q`.
///
/// Ordering: symmetric off-diagonal pairs `(j, k)` with `j < k` in row-major
/// order, then the antisymmetric pairs in the same order, then the `q - 1`
/// diagonal members. For `q = 2` this is `(σx, σy, σz)`.
#[derive(Debug, Clone)]
pub struct GellMannBasis {
    dim: usize,
    elements: Vec<CMatrix>,
}

impl GellMannBasis {
    pub fn new(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidArgument(format!(
                "Gell-Mann basis needs q >= 2, got {q}"
            )));
        }
        let pairs: Vec<(usize, usize)> = (0..q)
            .flat_map(|j| (j + 1..q).map(move |k| (j, k)))
            .collect();
        let mut elements = Vec::with_capacity(q * q - 1);
        for &(j, k) in &pairs {
            let mut m = CMatrix::zeros(q, q);
            m[(j, k)] = cr(1.0);
            m[(k, j)] = cr(1.0);
            elements.push(m);
        }
        for &(j, k) in &pairs {
            let mut m = CMatrix::zeros(q, q);
            m[(j, k)] = c(0.0, -1.0);
            m[(k, j)] = c(0.0, 1.0);
            elements.push(m);
        }
        for l in 1..q {
            let scale = (2.0 / (l * (l + 1)) as f64).sqrt();
            let mut m = CMatrix::zeros(q, q);
            for i in 0..l {
                m[(i, i)] = cr(scale);
            }
            m[(l, l)] = cr(-(l as f64) * scale);
            elements.push(m);
        }
        Ok(Self { dim: q, elements })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of elements, `q² - 1`.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn element(&self, k: usize) -> &CMatrix {
        &self.elements[k]
    }

    /// `Tr(m σ_k)` for every element; the imaginary residue is dropped.
    pub fn components(&self, m: &CMatrix) -> Result<Vec<f64>> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, basis dimension is {}",
                m.nrows(),
                m.ncols(),
                self.dim
            )));
        }
        Ok(self.elements.iter().map(|s| hs_inner(m, s).re).collect())
    }

    /// `½ Σ_k v_k σ_k` (no identity part).
    pub fn combine(&self, v: &[f64]) -> CMatrix {
        assert_eq!(
            v.len(),
            self.len(),
            "coefficient count must match basis size"
        );
        self.elements
            .iter()
            .zip(v)
            .fold(CMatrix::zeros(self.dim, self.dim), |acc, (s, &x)| {
                acc + s.scale(0.5 * x)
            })
    }
}

/// `Tr(a b)` without forming the product.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> num_complex::Complex64 {
    let n = a.nrows();
    let mut acc = cr(0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn gell_mann_basis(q: usize) -> Result<GellMannBasis> {
    GellMannBasis::new(q)
}

/// Real coordinates of a state in a Gell-Mann basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochVector {
    dim: usize,
    components: Vec<f64>,
}

impl BlochVector {
    pub fn new(dim: usize, components: Vec<f64>) -> Result<Self> {
        if dim < 2 || components.len() != dim * dim - 1 {
            return Err(Error::DimensionMismatch(format!(
                "Bloch vector of dim {dim} needs {} components, got {}",
                (dim * dim).saturating_sub(1),
                components.len()
            )));
        }
        Ok(Self { dim, components })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            components: vec![0.0; dim * dim - 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.components)
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn bloch_vector(rho: &DensityMatrix, basis: &GellMannBasis) -> Result<BlochVector> {
    let comps = basis.components(rho.matrix())?;
    BlochVector::new(basis.dim(), comps)
}

/// `1/q + ½ Σ v_k σ_k` without any positivity check.
pub fn bloch_to_matrix(v: &BlochVector, basis: &GellMannBasis) -> Result<CMatrix> {
    if v.dim() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "Bloch vector dim {} vs basis dim {}",
            v.dim(),
            basis.dim()
        )));
    }
    let q = basis.dim();
    Ok(identity(q).unscale(q as f64) + basis.combine(v.components()))
}

/// Reconstructs a state; fails when the vector lies outside state space.
pub fn from_bloch(v: &BlochVector, basis: &GellMannBasis) -> Result<DensityMatrix> {
    DensityMatrix::new(bloch_to_matrix(v, basis)?)
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    hs_inner(rho.matrix(), rho.matrix()).re
}

/// `‖a - b‖₁` (no factor ½).
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "trace distance between dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(trace_norm(&(a.matrix() - b.matrix())))
}

/// Haar-random pure state from normalized complex Gaussian amplitudes.
pub fn random_pure_state(dim: usize, seed: u64) -> Result<PureStateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_pure_state_with(dim, &mut rng)
}

pub fn random_pure_state_with(dim: usize, rng: &mut impl rand::Rng) -> Result<PureStateVector> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "state dimension must be >= 1".into(),
        ));
    }
    let amps = CVector::from_fn(dim, |_, _| {
        c(
            StandardNormal.sample(&mut *rng),
            StandardNormal.sample(&mut *rng),
        )
    });
    PureStateVector::normalized(amps)
}
