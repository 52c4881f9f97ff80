//! Effective dynamics induced on coarse-grained states.
//!
//! Given a dilation `V` of the coarse graining, an underlying state `ψ₀` and
//! a unitary `U_t`, the virtual state `χ₀ = V(ψ₀ ⊗ |0⟩⟨0| ⊗ |0⟩⟨0|)V†` is
//! split as `ω₀ ⊗ ρ₀ + (χ₀ - ω₀ ⊗ ρ₀)`. Propagating both pieces with
//! `W_t = V(U_t ⊗ 1 ⊗ 1)V†` and tracing out the inaccessible factor gives
//!
//! ```text
//! Γ_t(ρ₀) = Σ_ij M_ij ρ₀ M_ij† + Σ_ij Θ_ij Tr_Dr(W_t σ_i ⊗ σ_j W_t†)
//! ```
//!
//! with effective Kraus operators `M_ij = √p_j (⟨φ_i| ⊗ 1) W_t (|φ_j⟩ ⊗ 1)`
//! built from the spectral decomposition `ω₀ = Σ p_j |φ_j⟩⟨φ_j|`, and the
//! correlation matrix `Θ` holding the product Gell-Mann coefficients of the
//! difference operator.

use nalgebra::DMatrix;

use crate::channels::{choi_of_map, Dilation, KrausChannel};
use crate::error::{Error, Result};
use crate::linalg::{
    eig_hermitian, identity, kron, max_abs, operator_norm, partial_trace, pseudo_inverse,
    unitarity_residual, unvectorize, vectorize, Bipartition, CMatrix, Side,
};
use crate::states::{hs_inner, DensityMatrix, GellMannBasis, PSD_FLOOR};

/// Eigenvalues of `ω₀` below this contribute no effective Kraus operators.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
/// Singular-value cutoff for the pseudo-inverse in the divisibility check.
pub const PINV_CUTOFF: f64 = 1e-9;
/// Max-entry residual above which `N_k ≠ Γ ∘ N_j`.
pub const FACTORIZATION_TOL: f64 = 1e-8;

/// `χ₀` on `(H_D ⊗ H_r) ⊗ H_d`.
#[derive(Debug, Clone)]
pub struct VirtualState {
    pub split: Bipartition,
    pub chi: DensityMatrix,
}

pub fn build_virtual_state(dil: &Dilation, psi0: &DensityMatrix) -> Result<VirtualState> {
    let chi = DensityMatrix::new(dil.lift(psi0.matrix())?)?;
    Ok(VirtualState {
        split: dil.split(),
        chi,
    })
}

/// `χ₀ = ω₀ ⊗ ρ₀ + correlation`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub split: Bipartition,
    pub omega0: DensityMatrix,
    pub rho0: DensityMatrix,
    pub correlation: CMatrix,
}

impl Decomposition {
    pub fn product(&self) -> CMatrix {
        kron(self.omega0.matrix(), self.rho0.matrix())
    }
}

pub fn decompose(state: &VirtualState) -> Result<Decomposition> {
    let chi = state.chi.matrix();
    let omega0 = DensityMatrix::new(partial_trace(chi, state.split, Side::B)?)?;
    let rho0 = DensityMatrix::new(partial_trace(chi, state.split, Side::A)?)?;
    let correlation = chi - kron(omega0.matrix(), rho0.matrix());
    Ok(Decomposition {
        split: state.split,
        omega0,
        rho0,
        correlation,
    })
}

/// `W_t = V (U_t ⊗ 1 ⊗ 1) V†`.
pub fn intertwined_unitary(dil: &Dilation, u_t: &CMatrix) -> Result<CMatrix> {
    if u_t.nrows() != dil.in_dim() || u_t.ncols() != dil.in_dim() {
        return Err(Error::DimensionMismatch(format!(
            "evolution must be {0}x{0}, got {1}x{2}",
            dil.in_dim(),
            u_t.nrows(),
            u_t.ncols()
        )));
    }
    let res = unitarity_residual(u_t);
    if res > 1e-8 {
        return Err(Error::NotUnitary(res));
    }
    let v = dil.unitary();
    Ok(v * kron(u_t, &identity(dil.aux_dim() * dil.out_dim())) * v.adjoint())
}

/// `(⟨a| ⊗ 1) W (|b⟩ ⊗ 1)` for vectors `a, b` on the first factor.
fn sandwich(
    w: &CMatrix,
    a: &[num_complex::Complex64],
    b: &[num_complex::Complex64],
    d: usize,
) -> CMatrix {
    let mut out = CMatrix::zeros(d, d);
    for (ia, ca) in a.iter().enumerate() {
        if ca.norm() == 0.0 {
            continue;
        }
        for (ib, cb) in b.iter().enumerate() {
            if cb.norm() == 0.0 {
                continue;
            }
            let weight = ca.conj() * cb;
            out += w.view((ia * d, ib * d), (d, d)).map(|z| z * weight);
        }
    }
    out
}

/// Effective Kraus operators `M_ij`, with `i` running over the full
/// eigenbasis of `ω₀` and `j` over eigenvectors with `p_j ≥ 1e-12`.
pub fn effective_kraus(dec: &Decomposition, w_t: &CMatrix) -> Result<Vec<CMatrix>> {
    let n = dec.split.total();
    if w_t.nrows() != n || w_t.ncols() != n {
        return Err(Error::DimensionMismatch(format!("W_t must be {n}x{n}")));
    }
    let eig = eig_hermitian(dec.omega0.matrix())?;
    Ok(kraus_from_spectrum(
        &eig.values,
        &eig.vectors,
        w_t,
        dec.split.dim_b,
    ))
}

fn kraus_from_spectrum(p: &[f64], phi: &CMatrix, w_t: &CMatrix, d: usize) -> Vec<CMatrix> {
    let cols: Vec<Vec<_>> = phi
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    let mut out = Vec::new();
    for (j, &pj) in p.iter().enumerate() {
        if pj < PROBABILITY_FLOOR {
            continue;
        }
        for phi_i in &cols {
            out.push(sandwich(w_t, phi_i, &cols[j], d).scale(pj.sqrt()));
        }
    }
    out
}

/// Real matrix `Θ` of shape `((Dr)² - 1) x (d² - 1)` with
/// `χ₀ - ω₀ ⊗ ρ₀ = Σ_ij Θ_ij σ_i ⊗ σ_j`.
pub fn correlation_matrix(
    dec: &Decomposition,
    basis_a: &GellMannBasis,
    basis_b: &GellMannBasis,
) -> Result<DMatrix<f64>> {
    if basis_a.dim() != dec.split.dim_a || basis_b.dim() != dec.split.dim_b {
        return Err(Error::DimensionMismatch(format!(
            "bases of dims ({}, {}) for a ({}, {}) split",
            basis_a.dim(),
            basis_b.dim(),
            dec.split.dim_a,
            dec.split.dim_b
        )));
    }
    let mut theta = DMatrix::zeros(basis_a.len(), basis_b.len());
    for (i, sa) in basis_a.elements().iter().enumerate() {
        for (j, sb) in basis_b.elements().iter().enumerate() {
            theta[(i, j)] = hs_inner(&dec.correlation, &kron(sa, sb)).re / 4.0;
        }
    }
    Ok(theta)
}

/// `Σ_ij Θ_ij σ_i ⊗ σ_j`.
pub fn expand_correlation(
    theta: &DMatrix<f64>,
    basis_a: &GellMannBasis,
    basis_b: &GellMannBasis,
) -> CMatrix {
    let n = basis_a.dim() * basis_b.dim();
    let mut out = CMatrix::zeros(n, n);
    for (i, sa) in basis_a.elements().iter().enumerate() {
        for (j, sb) in basis_b.elements().iter().enumerate() {
            let t = theta[(i, j)];
            if t != 0.0 {
                out += kron(sa, sb).scale(t);
            }
        }
    }
    out
}

/// Correlation contribution `ζ = Σ_ij Θ_ij Tr_Dr(W_t σ_i ⊗ σ_j W_t†)`.
pub fn zeta(
    theta: &DMatrix<f64>,
    w_t: &CMatrix,
    basis_a: &GellMannBasis,
    basis_b: &GellMannBasis,
    split: Bipartition,
) -> Result<CMatrix> {
    if theta.nrows() != basis_a.len()
        || theta.ncols() != basis_b.len()
        || w_t.nrows() != split.total()
    {
        return Err(Error::DimensionMismatch(
            "inconsistent dimensions for ζ".into(),
        ));
    }
    let expanded = expand_correlation(theta, basis_a, basis_b);
    partial_trace(&(w_t * expanded * w_t.adjoint()), split, Side::A)
}

/// Everything that defines `Γ_t` for one generating state and one time.
#[derive(Debug, Clone)]
pub struct EffectiveMapComponents {
    pub split: Bipartition,
    pub w_t: CMatrix,
    /// Eigenvalues of `ω₀`, ascending.
    pub probabilities: Vec<f64>,
    /// Eigenvectors of `ω₀` as columns.
    pub eigenvectors: CMatrix,
    pub kraus: Vec<CMatrix>,
    pub theta: DMatrix<f64>,
    pub basis_a: GellMannBasis,
    pub basis_b: GellMannBasis,
    pub decomposition: Decomposition,
    zeta: CMatrix,
}

/// Output of `Γ_t`, which need not be positive away from its domain.
#[derive(Debug, Clone)]
pub struct EffectiveOutput {
    pub matrix: CMatrix,
    pub min_eigenvalue: f64,
}

impl EffectiveOutput {
    fn new(matrix: CMatrix) -> Result<Self> {
        let herm = (&matrix + matrix.adjoint()).scale(0.5);
        let min_eigenvalue = eig_hermitian(&herm)?.min();
        Ok(Self {
            matrix,
            min_eigenvalue,
        })
    }

    pub fn is_positive(&self) -> bool {
        self.min_eigenvalue >= PSD_FLOOR
    }

    pub fn into_state(self) -> Result<DensityMatrix> {
        DensityMatrix::new(self.matrix)
    }
}

impl EffectiveMapComponents {
    pub fn build(dil: &Dilation, psi0: &DensityMatrix, u_t: &CMatrix) -> Result<Self> {
        let basis_a = GellMannBasis::new(dil.split().dim_a)?;
        let basis_b = GellMannBasis::new(dil.out_dim())?;
        Self::build_with_bases(dil, psi0, u_t, basis_a, basis_b)
    }

    /// Same as [`build`](Self::build) with caller-provided bases, so that a
    /// time sweep does not rebuild them at every step.
    pub fn build_with_bases(
        dil: &Dilation,
        psi0: &DensityMatrix,
        u_t: &CMatrix,
        basis_a: GellMannBasis,
        basis_b: GellMannBasis,
    ) -> Result<Self> {
        let split = dil.split();
        let virt = build_virtual_state(dil, psi0)?;
        let dec = decompose(&virt)?;
        let w_t = intertwined_unitary(dil, u_t)?;
        let eig = eig_hermitian(dec.omega0.matrix())?;
        let kraus = kraus_from_spectrum(&eig.values, &eig.vectors, &w_t, split.dim_b);
        let theta = correlation_matrix(&dec, &basis_a, &basis_b)?;
        let zeta = zeta(&theta, &w_t, &basis_a, &basis_b, split)?;
        Ok(Self {
            split,
            w_t,
            probabilities: eig.values,
            eigenvectors: eig.vectors,
            kraus,
            theta,
            basis_a,
            basis_b,
            decomposition: dec,
            zeta,
        })
    }

    /// `Σ M ρ M†`.
    pub fn kraus_part(&self, rho: &CMatrix) -> Result<CMatrix> {
        let d = self.split.dim_b;
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "effective input must be {d}x{d}"
            )));
        }
        Ok(self
            .kraus
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, m| acc + m * rho * m.adjoint()))
    }

    pub fn zeta(&self) -> &CMatrix {
        &self.zeta
    }

    /// Operator norm of `Σ M†M - 1_d`.
    pub fn completeness_residual(&self) -> f64 {
        let d = self.split.dim_b;
        let sum = self
            .kraus
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, m| acc + m.adjoint() * m);
        operator_norm(&(sum - identity(d)))
    }

    pub fn theta_norm(&self) -> f64 {
        self.theta.norm()
    }

    /// Γ_t with the correlation term written as `Tr_Dr(W_t (χ₀ - ω₀⊗ρ₀) W_t†)`.
    pub fn evolve_with_correlation_operator(&self, rho: &CMatrix) -> Result<CMatrix> {
        let corr = &self.decomposition.correlation;
        let term = partial_trace(
            &(&self.w_t * corr * self.w_t.adjoint()),
            self.split,
            Side::A,
        )?;
        Ok(self.kraus_part(rho)? + term)
    }
}

/// Γ_t(ρ) in the Θ form. The input is not checked against the map's domain;
/// the minimum output eigenvalue is reported instead.
pub fn effective_evolve(
    components: &EffectiveMapComponents,
    rho0: &DensityMatrix,
) -> Result<EffectiveOutput> {
    let out = components.kraus_part(rho0.matrix())? + &components.zeta;
    EffectiveOutput::new(out)
}

/// Direct path `Λ(U ψ₀ U†)`.
pub fn direct_evolve(
    ch: &KrausChannel,
    psi0: &DensityMatrix,
    u_t: &CMatrix,
) -> Result<DensityMatrix> {
    DensityMatrix::new(ch.apply_operator(&(u_t * psi0.matrix() * u_t.adjoint()))?)
}

/// Outcome of the CP-divisibility check for one interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivisibilityStatus {
    Cp,
    NotCp,
    Indeterminate,
}

impl DivisibilityStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Cp => "CP",
            Self::NotCp => "NOT-CP",
            Self::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntermediateMap {
    /// `Γ_(k,j) = N_k ∘ pinv(N_j)` on row-major vectorized `d x d` operators.
    pub transfer: CMatrix,
    /// Choi matrix of `Γ_(k,j)`, input factor first. Not necessarily positive.
    pub choi: CMatrix,
    pub min_eig: f64,
    /// Numerical rank of `N_j`; full rank is `d²`.
    pub rank: usize,
    /// Max-entry residual of `N_k - Γ_(k,j) ∘ N_j`.
    pub factorization_residual: f64,
    pub status: DivisibilityStatus,
}

/// Transfer matrix of `X ↦ Λ(U X U†)` realized through the dilation.
pub fn composite_transfer(dil: &Dilation, u: &CMatrix) -> Result<CMatrix> {
    let (din, dout) = (dil.in_dim(), dil.out_dim());
    let mut s = CMatrix::zeros(dout * dout, din * din);
    for a in 0..din {
        for b in 0..din {
            let e = crate::linalg::matrix_unit(din, a, b);
            let image = dil.apply_operator(&(u * e * u.adjoint()))?;
            s.set_column(a * din + b, &vectorize(&image));
        }
    }
    Ok(s)
}

/// Intermediate map between grid times `t_j ≤ t_k` of `N_t = Λ ∘ U_t`.
///
/// The map is `N_k ∘ pinv(N_j)`. When `N_j` is rank deficient, or when no
/// linear map factorizes `N_k` through `N_j`, the interval is reported as
/// indeterminate.
pub fn intermediate_map(
    dil: &Dilation,
    u_grid: &[CMatrix],
    k: usize,
    j: usize,
) -> Result<IntermediateMap> {
    if k >= u_grid.len() || j >= u_grid.len() {
        return Err(Error::InvalidArgument(format!(
            "grid indices ({k}, {j}) out of range"
        )));
    }
    if k < j {
        return Err(Error::InvalidArgument(format!(
            "intermediate map needs t_k >= t_j, got k={k} < j={j}"
        )));
    }
    let s_k = composite_transfer(dil, &u_grid[k])?;
    let s_j = composite_transfer(dil, &u_grid[j])?;
    intermediate_from_transfers(&s_k, &s_j, dil.out_dim())
}

/// [`intermediate_map`] from precomputed transfer matrices of `N_k` and `N_j`.
pub fn intermediate_from_transfers(
    s_k: &CMatrix,
    s_j: &CMatrix,
    d: usize,
) -> Result<IntermediateMap> {
    if s_k.shape() != s_j.shape() || s_k.nrows() != d * d {
        return Err(Error::DimensionMismatch(
            "transfer matrices disagree in shape".into(),
        ));
    }
    let (pinv, rank) = pseudo_inverse(s_j, PINV_CUTOFF);
    let transfer = s_k * pinv;
    let factorization_residual = max_abs(&(s_k - &transfer * s_j));

    let choi = choi_of_map(d, d, |e| unvectorize(&(&transfer * vectorize(e)), d, d));
    let herm = (&choi + choi.adjoint()).scale(0.5);
    let min_eig = eig_hermitian(&herm)?.min();

    let status = if rank < d * d || factorization_residual > FACTORIZATION_TOL {
        DivisibilityStatus::Indeterminate
    } else if min_eig >= PSD_FLOOR {
        DivisibilityStatus::Cp
    } else {
        DivisibilityStatus::NotCp
    };
    Ok(IntermediateMap {
        transfer,
        choi,
        min_eig,
        rank,
        factorization_residual,
        status,
    })
}

/// Trace of the correlation contribution, kept as a diagnostic.
pub fn zeta_trace(components: &EffectiveMapComponents) -> f64 {
    crate::linalg::trace(&components.zeta).norm()
}
