//! CPTP maps in Kraus, Choi and Stinespring-dilation form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    approx_eq, complete_to_unitary_at, cr, eig_hermitian, identity, kron, matrix_unit, max_abs,
    operator_norm, partial_trace, unitarity_residual, Bipartition, CMatrix, Side, ALGEBRA_TOL,
};
use crate::states::{DensityMatrix, PSD_FLOOR};

/// Eigenvalues of a Choi matrix below this are discarded when extracting Kraus operators.
pub const KRAUS_EIG_CUTOFF: f64 = 1e-10;
/// Choi-matrix tolerance for channel equality.
pub const CHOI_EQ_TOL: f64 = 1e-9;

/// Completeness and complete-positivity diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CptpReport {
    /// Operator norm of `Σ K†K - 1`.
    pub completeness_residual: f64,
    pub choi_min_eig: f64,
}

impl CptpReport {
    pub fn passes(&self) -> bool {
        self.completeness_residual <= ALGEBRA_TOL && self.choi_min_eig >= PSD_FLOOR
    }
}

fn check_shapes(in_dim: usize, out_dim: usize, ops: &[CMatrix]) -> Result<()> {
    if in_dim == 0 || out_dim == 0 || ops.is_empty() {
        return Err(Error::InvalidArgument(
            "channel needs positive dims and at least one operator".into(),
        ));
    }
    for (i, k) in ops.iter().enumerate() {
        if k.nrows() != out_dim || k.ncols() != in_dim {
            return Err(Error::DimensionMismatch(format!(
                "Kraus operator {i} is {}x{}, expected {out_dim}x{in_dim}",
                k.nrows(),
                k.ncols()
            )));
        }
    }
    Ok(())
}

fn apply_operators(ops: &[CMatrix], m: &CMatrix) -> CMatrix {
    ops.iter()
        .map(|k| k * m * k.adjoint())
        .fold(CMatrix::zeros(ops[0].nrows(), ops[0].nrows()), |acc, x| {
            acc + x
        })
}

/// Checks an arbitrary operator list without requiring it to be a channel.
pub fn verify_operators(in_dim: usize, out_dim: usize, ops: &[CMatrix]) -> Result<CptpReport> {
    check_shapes(in_dim, out_dim, ops)?;
    let sum = ops.iter().fold(CMatrix::zeros(in_dim, in_dim), |acc, k| {
        acc + k.adjoint() * k
    });
    let completeness_residual = operator_norm(&(sum - identity(in_dim)));
    let choi = choi_of_map(in_dim, out_dim, |e| apply_operators(ops, e));
    let choi_min_eig = eig_hermitian(&choi)?.min();
    Ok(CptpReport {
        completeness_residual,
        choi_min_eig,
    })
}

/// Choi matrix `J = Σ_ab E_ab ⊗ Λ(E_ab)` of any linear map, input factor first.
pub fn choi_of_map(in_dim: usize, out_dim: usize, map: impl Fn(&CMatrix) -> CMatrix) -> CMatrix {
    let mut j = CMatrix::zeros(in_dim * out_dim, in_dim * out_dim);
    for a in 0..in_dim {
        for b in 0..in_dim {
            let image = map(&matrix_unit(in_dim, a, b));
            j.view_mut((a * out_dim, b * out_dim), (out_dim, out_dim))
                .copy_from(&image);
        }
    }
    j
}

/// A trace-preserving channel `ρ ↦ Σ K_i ρ K_i†` from `in_dim` to `out_dim`.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<CMatrix>,
}

impl KrausChannel {
    /// Validates shapes and `Σ K†K = 1` within `1e-10`.
    pub fn new(in_dim: usize, out_dim: usize, kraus: Vec<CMatrix>) -> Result<Self> {
        check_shapes(in_dim, out_dim, &kraus)?;
        let sum = kraus.iter().fold(CMatrix::zeros(in_dim, in_dim), |acc, k| {
            acc + k.adjoint() * k
        });
        let residual = operator_norm(&(sum - identity(in_dim)));
        if residual > ALGEBRA_TOL {
            return Err(Error::NotCptp(format!(
                "completeness residual {residual:.3e}"
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            kraus,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            in_dim: dim,
            out_dim: dim,
            kraus: vec![identity(dim)],
        }
    }

    pub fn unitary(u: &CMatrix) -> Result<Self> {
        let res = unitarity_residual(u);
        if res > ALGEBRA_TOL {
            return Err(Error::NotUnitary(res));
        }
        Ok(Self {
            in_dim: u.ncols(),
            out_dim: u.nrows(),
            kraus: vec![u.clone()],
        })
    }

    /// Partial trace over one factor of `A ⊗ B`, keeping the other.
    pub fn partial_trace(part: Bipartition, traced: Side) -> Self {
        let (kept, dropped) = match traced {
            Side::A => (part.dim_b, part.dim_a),
            Side::B => (part.dim_a, part.dim_b),
        };
        let kraus = (0..dropped)
            .map(|j| {
                let mut bra = CMatrix::zeros(1, dropped);
                bra[(0, j)] = cr(1.0);
                match traced {
                    Side::A => kron(&bra, &identity(kept)),
                    Side::B => kron(&identity(kept), &bra),
                }
            })
            .collect();
        Self {
            in_dim: part.total(),
            out_dim: kept,
            kraus,
        }
    }

    /// The blurred, saturated two-atom detector: `|00⟩` is resolved, while
    /// `|01⟩`, `|10⟩` and `|11⟩` all map onto the single outcome `|1⟩`.
    pub fn blurred_detector() -> Self {
        let s = 1.0 / 3f64.sqrt();
        let rows = |top: [f64; 4], bottom: [f64; 4]| {
            CMatrix::from_row_iterator(2, 4, top.into_iter().chain(bottom).map(cr))
        };
        let kraus = vec![
            rows([1.0, 0.0, 0.0, 0.0], [0.0, s, s, s]),
            rows([0.0; 4], [0.0, s, 0.0, -s]),
            rows([0.0; 4], [0.0, s, -s, 0.0]),
            rows([0.0; 4], [0.0, 0.0, s, -s]),
        ];
        Self {
            in_dim: 4,
            out_dim: 2,
            kraus,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// Action on an arbitrary (not necessarily positive) operator.
    pub fn apply_operator(&self, m: &CMatrix) -> Result<CMatrix> {
        if m.nrows() != self.in_dim || m.ncols() != self.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "channel input is {}x{}, operator is {}x{}",
                self.in_dim,
                self.in_dim,
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(apply_operators(&self.kraus, m))
    }

    /// Heisenberg-picture action `Y ↦ Σ K† Y K`.
    pub fn apply_adjoint(&self, y: &CMatrix) -> Result<CMatrix> {
        if y.nrows() != self.out_dim || y.ncols() != self.out_dim {
            return Err(Error::DimensionMismatch(
                "adjoint channel input has wrong shape".into(),
            ));
        }
        Ok(self
            .kraus
            .iter()
            .fold(CMatrix::zeros(self.in_dim, self.in_dim), |acc, k| {
                acc + k.adjoint() * y * k
            }))
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &KrausChannel) -> Result<KrausChannel> {
        if next.in_dim != self.out_dim {
            return Err(Error::DimensionMismatch(
                "composed channels do not chain".into(),
            ));
        }
        let kraus = next
            .kraus
            .iter()
            .flat_map(|b| self.kraus.iter().map(move |a| b * a))
            .collect();
        Ok(KrausChannel {
            in_dim: self.in_dim,
            out_dim: next.out_dim,
            kraus,
        })
    }

    /// Transfer matrix on row-major vectorized operators, `Σ K ⊗ K̄`.
    pub fn superoperator(&self) -> CMatrix {
        self.kraus.iter().fold(
            CMatrix::zeros(self.out_dim * self.out_dim, self.in_dim * self.in_dim),
            |acc, k| acc + kron(k, &k.conjugate()),
        )
    }

    pub fn to_record(&self) -> ChannelRecord {
        ChannelRecord {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            kraus: self
                .kraus
                .iter()
                .map(|k| k.transpose().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }
}

/// Serialized channel: `{in_dim, out_dim, kraus: [[[re, im], ...], ...]}`,
/// each operator flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub in_dim: usize,
    pub out_dim: usize,
    pub kraus: Vec<Vec<[f64; 2]>>,
}

impl ChannelRecord {
    /// Operators without any completeness check.
    pub fn operators(&self) -> Result<Vec<CMatrix>> {
        self.kraus
            .iter()
            .enumerate()
            .map(|(i, flat)| {
                if flat.len() != self.in_dim * self.out_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "Kraus operator {i} has {} entries, expected {}",
                        flat.len(),
                        self.in_dim * self.out_dim
                    )));
                }
                Ok(CMatrix::from_row_iterator(
                    self.out_dim,
                    self.in_dim,
                    flat.iter()
                        .map(|&[re, im]| num_complex::Complex64::new(re, im)),
                ))
            })
            .collect()
    }

    pub fn into_channel(&self) -> Result<KrausChannel> {
        KrausChannel::new(self.in_dim, self.out_dim, self.operators()?)
    }
}

pub fn apply(ch: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    DensityMatrix::new(ch.apply_operator(rho.matrix())?)
}

pub fn verify_cptp(ch: &KrausChannel) -> Result<CptpReport> {
    verify_operators(ch.in_dim, ch.out_dim, &ch.kraus)
}

pub fn blurred_detector_channel() -> KrausChannel {
    KrausChannel::blurred_detector()
}

/// Choi matrix of a CPTP channel.
#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    in_dim: usize,
    out_dim: usize,
    matrix: CMatrix,
}

impl ChoiMatrix {
    /// Validates positivity and `Tr_out J = 1_in`.
    pub fn new(in_dim: usize, out_dim: usize, matrix: CMatrix) -> Result<Self> {
        let n = in_dim * out_dim;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix must be {n}x{n}"
            )));
        }
        let min = eig_hermitian(&matrix)?.min();
        if min < PSD_FLOOR {
            return Err(Error::NotPositive(min));
        }
        let marginal = partial_trace(&matrix, Bipartition::new(in_dim, out_dim)?, Side::B)?;
        let res = max_abs(&(marginal - identity(in_dim)));
        if res > 1e-9 {
            return Err(Error::NotCptp(format!(
                "Choi marginal differs from identity by {res:.3e}"
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            matrix,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eig_hermitian(&self.matrix)
            .map(|e| e.min())
            .unwrap_or(f64::NAN)
    }

    /// `Λ(X) = Tr_in[(Xᵀ ⊗ 1) J]`.
    pub fn apply_operator(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.nrows() != self.in_dim || x.ncols() != self.in_dim {
            return Err(Error::DimensionMismatch(
                "Choi action input has wrong shape".into(),
            ));
        }
        let lifted = kron(&x.transpose(), &identity(self.out_dim)) * &self.matrix;
        partial_trace(
            &lifted,
            Bipartition::new(self.in_dim, self.out_dim)?,
            Side::A,
        )
    }
}

pub fn choi(ch: &KrausChannel) -> ChoiMatrix {
    let matrix = choi_of_map(ch.in_dim, ch.out_dim, |e| apply_operators(&ch.kraus, e));
    ChoiMatrix {
        in_dim: ch.in_dim,
        out_dim: ch.out_dim,
        matrix,
    }
}

/// Canonical Kraus operators from the eigendecomposition of `J`.
pub fn kraus_from_choi(j: &ChoiMatrix) -> Result<KrausChannel> {
    let eig = eig_hermitian(&j.matrix)?;
    if eig.min() < PSD_FLOOR {
        return Err(Error::NotPositive(eig.min()));
    }
    let (d_in, d_out) = (j.in_dim, j.out_dim);
    let kraus: Vec<CMatrix> = eig
        .values
        .iter()
        .enumerate()
        .rev()
        .filter(|(_, &lambda)| lambda >= KRAUS_EIG_CUTOFF)
        .map(|(idx, &lambda)| {
            let v = eig.vectors.column(idx);
            let scale = lambda.sqrt();
            CMatrix::from_fn(d_out, d_in, |m, a| v[a * d_out + m] * scale)
        })
        .collect();
    KrausChannel::new(d_in, d_out, kraus)
}

/// Channels are equivalent iff their Choi matrices agree within `1e-9`.
pub fn kraus_equivalent(a: &KrausChannel, b: &KrausChannel) -> bool {
    a.in_dim == b.in_dim
        && a.out_dim == b.out_dim
        && approx_eq(choi(a).matrix(), choi(b).matrix(), CHOI_EQ_TOL)
}

/// Unitary `V` on `H_D ⊗ H_r ⊗ H_d` with `Λ(ψ) = Tr_{Dr}[V(ψ ⊗ |0⟩⟨0| ⊗ |0⟩⟨0|)V†]`.
#[derive(Debug, Clone)]
pub struct Dilation {
    d_in: usize,
    r: usize,
    d_out: usize,
    v: CMatrix,
}

impl Dilation {
    pub fn new(d_in: usize, r: usize, d_out: usize, v: CMatrix) -> Result<Self> {
        let n = d_in * r * d_out;
        if n == 0 || v.nrows() != n || v.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "dilation unitary must be {n}x{n}"
            )));
        }
        let res = unitarity_residual(&v);
        if res > ALGEBRA_TOL {
            return Err(Error::NotUnitary(res));
        }
        Ok(Self { d_in, r, d_out, v })
    }

    pub fn in_dim(&self) -> usize {
        self.d_in
    }

    pub fn aux_dim(&self) -> usize {
        self.r
    }

    pub fn out_dim(&self) -> usize {
        self.d_out
    }

    pub fn total_dim(&self) -> usize {
        self.d_in * self.r * self.d_out
    }

    pub fn unitary(&self) -> &CMatrix {
        &self.v
    }

    /// `(D·r) ⊗ d` split of the dilated space.
    pub fn split(&self) -> Bipartition {
        Bipartition {
            dim_a: self.d_in * self.r,
            dim_b: self.d_out,
        }
    }

    /// `X ⊗ |0⟩⟨0| ⊗ |0⟩⟨0|`.
    pub fn embed(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.nrows() != self.d_in || x.ncols() != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "dilation input must be {0}x{0}, got {1}x{2}",
                self.d_in,
                x.nrows(),
                x.ncols()
            )));
        }
        let ancilla = matrix_unit(self.r * self.d_out, 0, 0);
        Ok(kron(x, &ancilla))
    }

    /// `V (X ⊗ |0⟩⟨0| ⊗ |0⟩⟨0|) V†` for any operator `X`.
    pub fn lift(&self, x: &CMatrix) -> Result<CMatrix> {
        Ok(&self.v * self.embed(x)? * self.v.adjoint())
    }

    pub fn apply_operator(&self, x: &CMatrix) -> Result<CMatrix> {
        partial_trace(&self.lift(x)?, self.split(), Side::A)
    }
}

/// Builds `V` from `V(|ψ⟩⊗|0⟩⊗|0⟩) = Σ_ij |i⟩⊗|j⟩⊗K_ij|ψ⟩` with `r = ⌈N/D⌉`,
/// zero-padding the Kraus list to `D·r` operators, then completing the
/// remaining columns deterministically.
pub fn dilation_from_kraus(ch: &KrausChannel) -> Result<Dilation> {
    let (d_in, d_out) = (ch.in_dim, ch.out_dim);
    let n = ch.kraus.len();
    let r = n.div_ceil(d_in);
    let total = d_in * r * d_out;
    let mut columns = CMatrix::zeros(total, d_in);
    for (idx, k) in ch.kraus.iter().enumerate() {
        let (i, j) = (idx / r, idx % r);
        let offset = i * r * d_out + j * d_out;
        for col in 0..d_in {
            for m in 0..d_out {
                columns[(offset + m, col)] = k[(m, col)];
            }
        }
    }
    let positions: Vec<usize> = (0..d_in).map(|k| k * r * d_out).collect();
    let v = complete_to_unitary_at(&columns, &positions, total).map_err(|e| match e {
        Error::NotOrthonormal(res) => {
            Error::NotCptp(format!("dilation columns not orthonormal ({res:.3e})"))
        }
        other => other,
    })?;
    Dilation::new(d_in, r, d_out, v)
}

pub fn apply_dilation(dil: &Dilation, psi: &DensityMatrix) -> Result<DensityMatrix> {
    DensityMatrix::new(dil.apply_operator(psi.matrix())?)
}

/// Reference 8x8 dilation of the detector, with a trivial auxiliary factor (r = 1).
pub fn reference_detector_dilation() -> Dilation {
    let s = 1.0 / 3f64.sqrt();
    #[rustfmt::skip]
    let entries = [
        1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, s,   0.0, s,   0.0, s,   0.0,
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, s,   -s,  0.0, 0.0, -s,  0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, s,   s,   -s,  0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 0.0, s,   s,   0.0, -s,  0.0,
    ];
    let v = crate::linalg::real_matrix(8, 8, &entries);
    Dilation::new(4, 1, 2, v).expect("reference dilation is unitary")
}

/// Expected detector output for `|a⟩⟨b|`, `a, b ∈ {00, 01, 10, 11}`: the
/// ground state maps to `|0⟩`, the three excited states merge into `|1⟩`,
/// coherences with the ground state are damped by `1/√3` and coherences
/// among excited states are lost.
pub fn detector_table_entry(a: usize, b: usize) -> CMatrix {
    let outcome = |x: usize| if x == 0 { 0 } else { 1 };
    let weight = match (a, b) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 1.0 / 3f64.sqrt(),
        (x, y) if x == y => 1.0,
        _ => 0.0,
    };
    crate::linalg::matrix_unit(2, outcome(a), outcome(b)).scale(weight)
}

/// Largest entrywise deviation of `map(|a⟩⟨b|)` from the detector table.
pub fn detector_table_error(map: impl Fn(&CMatrix) -> Result<CMatrix>) -> Result<f64> {
    let mut worst = 0.0_f64;
    for a in 0..4 {
        for b in 0..4 {
            let out = map(&crate::linalg::matrix_unit(4, a, b))?;
            if out.shape() != (2, 2) {
                return Err(Error::DimensionMismatch(
                    "detector table needs a 4→2 map".into(),
                ));
            }
            worst = worst.max(max_abs(&(out - detector_table_entry(a, b))));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testutil::{random_unitary, rng};
    use crate::linalg::{c, hermitian_residual, trace, CVector};
    use crate::states::{random_pure_state, PureStateVector};

    fn s3() -> f64 {
        1.0 / 3f64.sqrt()
    }

    fn table_entry(a: usize, b: usize) -> CMatrix {
        detector_table_entry(a, b)
    }

    #[test]
    fn detector_matches_table() {
        let ch = blurred_detector_channel();
        for a in 0..4 {
            for b in 0..4 {
                let out = ch.apply_operator(&matrix_unit(4, a, b)).unwrap();
                assert!(approx_eq(&out, &table_entry(a, b), 1e-15), "|{a}⟩⟨{b}|");
            }
        }
        let out = ch.apply_operator(&matrix_unit(4, 1, 0)).unwrap();
        assert!(approx_eq(&out, &matrix_unit(2, 1, 0).scale(s3()), 1e-15));
        assert!(approx_eq(
            &ch.apply_operator(&matrix_unit(4, 1, 2)).unwrap(),
            &CMatrix::zeros(2, 2),
            0.0
        ));
        assert!(approx_eq(
            &ch.apply_operator(&matrix_unit(4, 2, 2)).unwrap(),
            &matrix_unit(2, 1, 1),
            1e-15
        ));
    }

    #[test]
    fn detector_on_general_pure_state() {
        let psi = random_pure_state(4, 3).unwrap();
        let cc = psi.amplitudes();
        let out = apply(&blurred_detector_channel(), &psi.to_density()).unwrap();
        let tail = cc[1].conj() + cc[2].conj() + cc[3].conj();
        assert!((out.matrix()[(0, 0)] - cr(cc[0].norm_sqr())).norm() < 1e-14);
        assert!((out.matrix()[(0, 1)] - cc[0] * tail * s3()).norm() < 1e-14);
        let rest = cc[1].norm_sqr() + cc[2].norm_sqr() + cc[3].norm_sqr();
        assert!((out.matrix()[(1, 1)] - cr(rest)).norm() < 1e-14);
    }

    #[test]
    fn identity_channel_is_identity() {
        let rho = random_pure_state(3, 1).unwrap().to_density();
        let out = apply(&KrausChannel::identity(3), &rho).unwrap();
        assert!(approx_eq(out.matrix(), rho.matrix(), 0.0));
        assert!(apply(&KrausChannel::identity(2), &rho).is_err());
    }

    #[test]
    fn verify_reports() {
        let rep = verify_cptp(&blurred_detector_channel()).unwrap();
        assert!(rep.completeness_residual < 1e-12);
        assert!(rep.choi_min_eig >= -1e-10);
        assert!(rep.passes());

        let scaled: Vec<CMatrix> = blurred_detector_channel()
            .kraus()
            .iter()
            .map(|k| k.scale(0.9))
            .collect();
        let rep = verify_operators(4, 2, &scaled).unwrap();
        assert!((rep.completeness_residual - 0.19).abs() < 1e-12);
        assert!(!rep.passes());

        let mut r = rng(1);
        let u = random_unitary(&mut r, 3);
        let rep = verify_cptp(&KrausChannel::unitary(&u).unwrap()).unwrap();
        assert!(rep.completeness_residual < 1e-12);
        assert!(rep.choi_min_eig.abs() < 1e-12);
    }

    #[test]
    fn channel_constructor_validates() {
        let scaled: Vec<CMatrix> = blurred_detector_channel()
            .kraus()
            .iter()
            .map(|k| k.scale(0.9))
            .collect();
        assert!(matches!(
            KrausChannel::new(4, 2, scaled),
            Err(Error::NotCptp(_))
        ));
        assert!(matches!(
            KrausChannel::new(4, 2, vec![identity(4)]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(KrausChannel::new(4, 2, vec![]).is_err());
    }

    #[test]
    fn choi_examples() {
        let j = choi(&KrausChannel::identity(2));
        let phi = CVector::from_vec(vec![cr(1.0), cr(0.0), cr(0.0), cr(1.0)]);
        assert!(approx_eq(j.matrix(), &(&phi * phi.adjoint()), 0.0));

        let j = choi(&blurred_detector_channel());
        assert_eq!(j.matrix().nrows(), 8);
        assert!((trace(j.matrix()) - cr(4.0)).norm() < 1e-12);
        assert!(j.min_eigenvalue() >= -1e-12);
        assert!(ChoiMatrix::new(4, 2, j.matrix().clone()).is_ok());

        let transpose = choi_of_map(2, 2, |x| x.transpose());
        let min = eig_hermitian(&transpose).unwrap().min();
        assert!((min + 1.0).abs() < 1e-12);
        assert!(matches!(
            ChoiMatrix::new(2, 2, transpose),
            Err(Error::NotPositive(_))
        ));
    }

    #[test]
    fn choi_action_agrees_with_kraus() {
        let ch = blurred_detector_channel();
        let j = choi(&ch);
        for seed in 0..10 {
            let x = random_pure_state(4, seed).unwrap().to_density();
            let a = j.apply_operator(x.matrix()).unwrap();
            let b = ch.apply_operator(x.matrix()).unwrap();
            assert!(approx_eq(&a, &b, 1e-12));
        }
    }

    #[test]
    fn kraus_from_choi_round_trips() {
        let id = kraus_from_choi(&choi(&KrausChannel::identity(2))).unwrap();
        assert_eq!(id.kraus().len(), 1);
        let k = &id.kraus()[0];
        let phase = k[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!(approx_eq(k, &identity(2).map(|z| z * phase), 1e-12));

        let det = blurred_detector_channel();
        let rebuilt = kraus_from_choi(&choi(&det)).unwrap();
        assert!(approx_eq(
            choi(&rebuilt).matrix(),
            choi(&det).matrix(),
            1e-10
        ));
        assert!(kraus_equivalent(&rebuilt, &det));
        for seed in 0..10 {
            let x = random_pure_state(4, 100 + seed).unwrap().to_density();
            let a = apply(&rebuilt, &x).unwrap();
            let b = apply(&det, &x).unwrap();
            assert!(approx_eq(a.matrix(), b.matrix(), 1e-9));
        }
    }

    #[test]
    fn kraus_from_choi_rejects_non_cp() {
        let transpose = ChoiMatrix {
            in_dim: 2,
            out_dim: 2,
            matrix: choi_of_map(2, 2, |x| x.transpose()),
        };
        assert!(matches!(
            kraus_from_choi(&transpose),
            Err(Error::NotPositive(_))
        ));
    }

    #[test]
    fn kraus_equivalence_under_mixing() {
        let det = blurred_detector_channel();
        assert!(kraus_equivalent(&det, &det));
        let mut r = rng(2);
        let u = random_unitary(&mut r, 4);
        let mixed: Vec<CMatrix> = (0..4)
            .map(|i| {
                (0..4).fold(CMatrix::zeros(2, 4), |acc, j| {
                    acc + det.kraus()[j].map(|z| z * u[(i, j)])
                })
            })
            .collect();
        let mixed = KrausChannel::new(4, 2, mixed).unwrap();
        assert!(kraus_equivalent(&det, &mixed));

        let tr2 = KrausChannel::partial_trace(Bipartition::new(2, 2).unwrap(), Side::B);
        assert!(!kraus_equivalent(&det, &tr2));
        let e01 = matrix_unit(4, 1, 1);
        assert!(!approx_eq(
            &det.apply_operator(&e01).unwrap(),
            &tr2.apply_operator(&e01).unwrap(),
            1e-3
        ));
        assert!(!kraus_equivalent(&det, &KrausChannel::identity(4)));
    }

    #[test]
    fn dilation_of_unitary_channel() {
        let mut r = rng(3);
        let u = random_unitary(&mut r, 3);
        let dil = dilation_from_kraus(&KrausChannel::unitary(&u).unwrap()).unwrap();
        assert_eq!(dil.aux_dim(), 1);
        assert_eq!(dil.total_dim(), 9);
        // column k·d holds |0⟩ ⊗ U|k⟩ in the first output block
        for k in 0..3 {
            for m in 0..3 {
                assert!((dil.unitary()[(m, k * 3)] - u[(m, k)]).norm() < 1e-15);
            }
        }
        let rho = random_pure_state(3, 5).unwrap().to_density();
        let out = apply_dilation(&dil, &rho).unwrap();
        assert!(approx_eq(
            out.matrix(),
            &(&u * rho.matrix() * u.adjoint()),
            1e-12
        ));
    }

    #[test]
    fn detector_dilation() {
        let det = blurred_detector_channel();
        let dil = dilation_from_kraus(&det).unwrap();
        assert_eq!(
            (dil.in_dim(), dil.aux_dim(), dil.out_dim(), dil.total_dim()),
            (4, 1, 2, 8)
        );
        assert!(unitarity_residual(dil.unitary()) < 1e-10);
        for seed in 0..20 {
            let psi = random_pure_state(4, 200 + seed).unwrap().to_density();
            let a = apply_dilation(&dil, &psi).unwrap();
            let b = apply(&det, &psi).unwrap();
            assert!(approx_eq(a.matrix(), b.matrix(), 1e-10));
        }
    }

    #[test]
    fn dilation_with_aux_space() {
        // five Kraus operators on a qubit, cut from a 10x2 isometry, need r = 3
        let mut r = rng(4);
        let u = random_unitary(&mut r, 10);
        let kraus: Vec<CMatrix> = (0..5)
            .map(|i| u.view((2 * i, 0), (2, 2)).into_owned())
            .collect();
        let ch = KrausChannel::new(2, 2, kraus).unwrap();
        let dil = dilation_from_kraus(&ch).unwrap();
        assert_eq!(dil.aux_dim(), 3);
        assert_eq!(dil.total_dim(), 12);
        for seed in 0..10 {
            let psi = random_pure_state(2, 300 + seed).unwrap().to_density();
            let a = apply_dilation(&dil, &psi).unwrap();
            assert!(approx_eq(
                a.matrix(),
                apply(&ch, &psi).unwrap().matrix(),
                1e-10
            ));
        }
    }

    #[test]
    fn reference_dilation_reproduces_table() {
        let dil = reference_detector_dilation();
        assert!(unitarity_residual(dil.unitary()) < 1e-12);
        for a in 0..4 {
            for b in 0..4 {
                let out = dil.apply_operator(&matrix_unit(4, a, b)).unwrap();
                assert!(approx_eq(&out, &table_entry(a, b), 1e-12));
            }
        }
        let zero = PureStateVector::basis(4, 0).unwrap().to_density();
        let out = apply_dilation(&dil, &zero).unwrap();
        assert!(approx_eq(out.matrix(), &matrix_unit(2, 0, 0), 1e-12));
    }

    #[test]
    fn composition_matches_sequential_application() {
        let det = blurred_detector_channel();
        let mut r = rng(5);
        let u = KrausChannel::unitary(&random_unitary(&mut r, 4)).unwrap();
        let composed = u.then(&det).unwrap();
        let j = choi(&composed);
        for a in 0..4 {
            for b in 0..4 {
                let e = matrix_unit(4, a, b);
                let seq = det.apply_operator(&u.apply_operator(&e).unwrap()).unwrap();
                assert!(approx_eq(
                    &composed.apply_operator(&e).unwrap(),
                    &seq,
                    1e-10
                ));
                let block = j.matrix().view((a * 2, b * 2), (2, 2)).into_owned();
                assert!(approx_eq(&block, &seq, 1e-10));
            }
        }
    }

    #[test]
    fn apply_preserves_trace_and_hermiticity() {
        let det = blurred_detector_channel();
        for seed in 0..20 {
            let psi = random_pure_state(4, 400 + seed).unwrap().to_density();
            let out = det.apply_operator(psi.matrix()).unwrap();
            assert!((trace(&out) - cr(1.0)).norm() < 1e-12);
            assert!(hermitian_residual(&out) < 1e-15);
        }
    }

    #[test]
    fn superoperator_matches_action() {
        let det = blurred_detector_channel();
        let s = det.superoperator();
        let x = random_pure_state(4, 9).unwrap().to_density();
        let via = crate::linalg::unvectorize(&(s * crate::linalg::vectorize(x.matrix())), 2, 2);
        assert!(approx_eq(
            &via,
            &det.apply_operator(x.matrix()).unwrap(),
            1e-14
        ));
    }

    #[test]
    fn adjoint_is_dual() {
        let det = blurred_detector_channel();
        let x = random_pure_state(4, 10).unwrap().to_density();
        let y = CMatrix::from_row_slice(2, 2, &[cr(0.3), c(0.1, 0.4), c(0.1, -0.4), cr(-0.7)]);
        let lhs = crate::states::hs_inner(&det.apply_operator(x.matrix()).unwrap(), &y);
        let rhs = crate::states::hs_inner(x.matrix(), &det.apply_adjoint(&y).unwrap());
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn record_round_trip() {
        let det = blurred_detector_channel();
        let json = serde_json::to_string(&det.to_record()).unwrap();
        let back: ChannelRecord = serde_json::from_str(&json).unwrap();
        let ch = back.into_channel().unwrap();
        for (a, b) in ch.kraus().iter().zip(det.kraus()) {
            assert!(approx_eq(a, b, 1e-15));
        }
        let bad = ChannelRecord {
            in_dim: 4,
            out_dim: 2,
            kraus: vec![vec![[1.0, 0.0]; 3]],
        };
        assert!(bad.operators().is_err());
    }
}
