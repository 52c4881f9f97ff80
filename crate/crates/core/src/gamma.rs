//! Geometry of underlying Bloch vectors ("γ-space").
//!
//! For a coarse graining `Λ: L(H_D) → L(H_d)` the effective Bloch vector is an
//! affine function of the underlying one,
//!
//! ```text
//! α_k(γ) = Tr[Λ(1/D) σ_k] + Σ_m ½ Tr[Λ(σ_m) σ_k] γ_m = offset_k + ⟨v_k, γ⟩,
//! ```
//!
//! so each `α_k` fixes a hyperplane with normal `v_k`. Moving `γ` inside the
//! span of the normals changes the effective state only; moving it orthogonally
//! to that span keeps the effective state fixed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channels::KrausChannel;
use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, identity};
use crate::states::{
    bloch_to_matrix, bloch_vector, BlochVector, DensityMatrix, GellMannBasis, PSD_FLOOR,
};

/// Least-squares residual below which a query lies in the normal span.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// γ-space separation below which two sampled members count as the same.
const DISTINCT_TOL: f64 = 1e-9;
/// Relative singular-value cutoff for the span of the normals.
const RANK_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct HyperplaneSystem {
    ambient_dim: usize,
    /// Row `k` is the normal `v_k`.
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
    /// Orthonormal columns spanning `span{v_k}`.
    span: DMatrix<f64>,
    basis_in: GellMannBasis,
    basis_out: GellMannBasis,
}

/// A displaced underlying Bloch vector together with its validity.
#[derive(Debug, Clone)]
pub struct Move {
    pub gamma: BlochVector,
    /// Smallest eigenvalue of the reconstructed underlying operator.
    pub min_eig: f64,
    pub psd_ok: bool,
}

#[derive(Debug, Clone)]
pub struct Membership {
    pub member: bool,
    pub residual: f64,
    pub psd_ok: bool,
    /// Least-squares coefficients `c` of `γ_query - γ₀ ≈ Σ c_k v_k`.
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ConvexityReport {
    pub samples: usize,
    /// Pairs whose members are more than 1e-9 apart in γ-space.
    pub nontrivial: usize,
    pub violations: usize,
    pub max_residual: f64,
}

impl HyperplaneSystem {
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn normal(&self, k: usize) -> DVector<f64> {
        self.normals.row(k).transpose()
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn basis_in(&self) -> &GellMannBasis {
        &self.basis_in
    }

    pub fn basis_out(&self) -> &GellMannBasis {
        &self.basis_out
    }

    /// Dimension of `span{v_k}`.
    pub fn normal_rank(&self) -> usize {
        self.span.ncols()
    }

    /// Dimension of the directions that leave the effective state unchanged.
    pub fn parallel_dim(&self) -> usize {
        self.ambient_dim - self.normal_rank()
    }

    fn check_gamma(&self, gamma: &BlochVector) -> Result<()> {
        if gamma.components().len() != self.ambient_dim {
            return Err(Error::DimensionMismatch(format!(
                "γ has {} components, expected {}",
                gamma.components().len(),
                self.ambient_dim
            )));
        }
        Ok(())
    }

    /// Projection of `x` onto `span{v_k}`.
    pub fn project_normal(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.span * (self.span.transpose() * x)
    }

    /// Underlying operator `1/D + ½ Σ γ_m σ_m` and its smallest eigenvalue.
    pub fn underlying(&self, gamma: &BlochVector) -> Result<(crate::linalg::CMatrix, f64)> {
        let m = bloch_to_matrix(gamma, &self.basis_in)?;
        let min = eig_hermitian(&m)?.min();
        Ok((m, min))
    }

    pub fn underlying_state(&self, gamma: &BlochVector) -> Result<DensityMatrix> {
        crate::states::from_bloch(gamma, &self.basis_in)
    }

    pub fn gamma_of(&self, psi: &DensityMatrix) -> Result<BlochVector> {
        bloch_vector(psi, &self.basis_in)
    }

    fn make_move(&self, components: DVector<f64>) -> Result<Move> {
        let gamma = BlochVector::new(self.basis_in.dim(), components.iter().copied().collect())?;
        let (_, min_eig) = self.underlying(&gamma)?;
        Ok(Move {
            gamma,
            min_eig,
            psd_ok: min_eig >= PSD_FLOOR,
        })
    }
}

pub fn hyperplanes(
    ch: &KrausChannel,
    basis_in: &GellMannBasis,
    basis_out: &GellMannBasis,
) -> Result<HyperplaneSystem> {
    if ch.in_dim() != basis_in.dim() || ch.out_dim() != basis_out.dim() {
        return Err(Error::DimensionMismatch(format!(
            "channel {}→{} with bases of dims {} and {}",
            ch.in_dim(),
            ch.out_dim(),
            basis_in.dim(),
            basis_out.dim()
        )));
    }
    let ambient_dim = basis_in.len();
    let mut normals = DMatrix::zeros(basis_out.len(), ambient_dim);
    for (m, sigma) in basis_in.elements().iter().enumerate() {
        let image = ch.apply_operator(sigma)?;
        for (k, comp) in basis_out.components(&image)?.into_iter().enumerate() {
            normals[(k, m)] = 0.5 * comp;
        }
    }
    let dim = ch.in_dim();
    let mixed = ch.apply_operator(&identity(dim).unscale(dim as f64))?;
    let offsets = DVector::from_vec(basis_out.components(&mixed)?);

    let svd = normals.transpose().svd(true, false);
    let u = svd.u.expect("svd requested u");
    let top = svd.singular_values.iter().fold(0.0_f64, |a, &s| a.max(s));
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > RANK_CUTOFF * top.max(1.0))
        .collect();
    let span = DMatrix::from_fn(ambient_dim, kept.len(), |r, c| u[(r, kept[c])]);

    Ok(HyperplaneSystem {
        ambient_dim,
        normals,
        offsets,
        span,
        basis_in: basis_in.clone(),
        basis_out: basis_out.clone(),
    })
}

/// Effective Bloch vector `α = offsets + N γ`.
pub fn effective_state_from_gamma(
    sys: &HyperplaneSystem,
    gamma: &BlochVector,
) -> Result<BlochVector> {
    sys.check_gamma(gamma)?;
    let alpha = &sys.offsets + &sys.normals * gamma.as_dvector();
    BlochVector::new(sys.basis_out.dim(), alpha.iter().copied().collect())
}

/// `γ = γ₀ + Σ c_k v_k`; positivity of the result is reported, not enforced.
pub fn perpendicular_move(
    sys: &HyperplaneSystem,
    gamma0: &BlochVector,
    coeffs: &[f64],
) -> Result<Move> {
    sys.check_gamma(gamma0)?;
    if coeffs.len() != sys.normals.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} hyperplanes",
            coeffs.len(),
            sys.normals.nrows()
        )));
    }
    let c = DVector::from_column_slice(coeffs);
    sys.make_move(gamma0.as_dvector() + sys.normals.transpose() * c)
}

/// Steps `step` along the unit vector of `direction` after removing its
/// component in the normal span.
pub fn parallel_move(
    sys: &HyperplaneSystem,
    gamma0: &BlochVector,
    direction: &[f64],
    step: f64,
) -> Result<Move> {
    sys.check_gamma(gamma0)?;
    if direction.len() != sys.ambient_dim {
        return Err(Error::DimensionMismatch(
            "direction length differs from γ-space dimension".into(),
        ));
    }
    let dir = DVector::from_column_slice(direction);
    let parallel = &dir - sys.project_normal(&dir);
    let norm = parallel.norm();
    if norm <= 1e-12 * dir.norm().max(1.0) {
        return Err(Error::InvalidArgument(
            "direction lies entirely in the normal span".into(),
        ));
    }
    sys.make_move(gamma0.as_dvector() + parallel * (step / norm))
}

pub fn in_domain(
    sys: &HyperplaneSystem,
    gamma0: &BlochVector,
    query: &BlochVector,
) -> Result<Membership> {
    sys.check_gamma(gamma0)?;
    sys.check_gamma(query)?;
    let delta = query.as_dvector() - gamma0.as_dvector();
    let residual = (&delta - sys.project_normal(&delta)).norm();
    let coefficients = sys
        .normals
        .transpose()
        .svd(true, true)
        .solve(&delta, RANK_CUTOFF)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let (_, min_eig) = sys.underlying(query)?;
    let psd_ok = min_eig >= PSD_FLOOR;
    Ok(Membership {
        member: residual < MEMBERSHIP_TOL && psd_ok,
        residual,
        psd_ok,
        coefficients: coefficients.iter().copied().collect(),
    })
}

/// Largest `s ≥ 0` (up to `cap`) with `γ₀ + s Σ c_k v_k` positive semidefinite.
pub fn max_perpendicular_step(
    sys: &HyperplaneSystem,
    gamma0: &BlochVector,
    coeffs: &[f64],
    cap: f64,
) -> Result<f64> {
    let at = |s: f64| -> Result<f64> {
        let scaled: Vec<f64> = coeffs.iter().map(|c| c * s).collect();
        Ok(perpendicular_move(sys, gamma0, &scaled)?.min_eig)
    };
    const FLOOR: f64 = -1e-12;
    if at(0.0)? < FLOOR {
        return Ok(0.0);
    }
    if at(cap)? >= FLOOR {
        return Ok(cap);
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? >= FLOOR {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Random positive member `γ₀ + Σ c_k v_k`, with the coefficient vector.
pub fn sample_member(
    sys: &HyperplaneSystem,
    gamma0: &BlochVector,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Move)> {
    let n = sys.normals.nrows();
    let dir: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let s_max = max_perpendicular_step(sys, gamma0, &dir, 1e3)?;
    let s = rng.random::<f64>() * s_max;
    let coeffs: Vec<f64> = dir.iter().map(|c| c * s).collect();
    let mv = perpendicular_move(sys, gamma0, &coeffs)?;
    Ok((coeffs, mv))
}

/// Samples pairs of domain members and checks that their mixtures stay in
/// the domain with the averaged coefficients and the averaged effective state.
pub fn convexity_probe(
    sys: &HyperplaneSystem,
    gamma0: &BlochVector,
    samples: usize,
    seed: u64,
) -> Result<ConvexityReport> {
    sys.check_gamma(gamma0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConvexityReport {
        samples,
        ..Default::default()
    };
    for _ in 0..samples {
        let (ca, a) = sample_member(sys, gamma0, &mut rng)?;
        let (cb, b) = sample_member(sys, gamma0, &mut rng)?;
        let p: f64 = rng.random();
        let psi_a = sys.underlying_state(&a.gamma)?;
        let psi_b = sys.underlying_state(&b.gamma)?;
        let psi = psi_a.mix(&psi_b, p)?;
        let gamma = sys.gamma_of(&psi)?;

        let averaged: Vec<f64> = ca
            .iter()
            .zip(&cb)
            .map(|(x, y)| p * x + (1.0 - p) * y)
            .collect();
        let expected = perpendicular_move(sys, gamma0, &averaged)?;
        let coeff_err = gamma
            .components()
            .iter()
            .zip(expected.gamma.components())
            .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()));

        let alpha = effective_state_from_gamma(sys, &gamma)?;
        let alpha_a = effective_state_from_gamma(sys, &a.gamma)?;
        let alpha_b = effective_state_from_gamma(sys, &b.gamma)?;
        let alpha_err = alpha
            .components()
            .iter()
            .zip(alpha_a.components().iter().zip(alpha_b.components()))
            .fold(0.0_f64, |acc, (x, (ya, yb))| {
                acc.max((x - (p * ya + (1.0 - p) * yb)).abs())
            });

        let membership = in_domain(sys, gamma0, &gamma)?;
        report.max_residual = report.max_residual.max(membership.residual);
        if (a.gamma.as_dvector() - b.gamma.as_dvector()).norm() > DISTINCT_TOL {
            report.nontrivial += 1;
        }
        if !membership.member || coeff_err > 1e-10 || alpha_err > 1e-10 {
            report.violations += 1;
        }
    }
    Ok(report)
}
