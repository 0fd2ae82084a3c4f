//! Quantum-state algebra shared by the simulators and the likelihood filters.
//!
//! Two-level conventions: basis order is `(|e⟩, |g⟩)`, `σz|e⟩ = +|e⟩` and
//! `σ⁻ = |g⟩⟨e|`, so the atomic inversion `⟨σz⟩` is `-1` in the ground state.

pub mod matrix;

pub use matrix::{ComplexMatrix, C64};

use crate::error::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const PSD_TOL: f64 = 1e-9;

#[inline]
fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_row_major(&[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
        .expect("2x2")
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
}

/// `σ⁻ = |g⟩⟨e|`
pub fn sigma_minus() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]])
}

/// `|i⟩⟨j|` in a `dim`-dimensional space.
pub fn ket_bra(dim: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim);
    m[(i, j)] = c(1.0, 0.0);
    m
}

/// `AB − BA`
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.check_same_dim(b)?;
    Ok(&(a * b) - &(b * a))
}

/// `AB + BA`
pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.check_same_dim(b)?;
    Ok(&(a * b) + &(b * a))
}

/// `D[J](ρ) = JρJ† − {J†J, ρ}/2`
pub fn lindblad_dissipator(j: &ComplexMatrix, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    j.check_same_dim(rho)?;
    let jdj = &j.adjoint() * j;
    let mut out = ComplexMatrix::sandwich(j, rho);
    out -= &anticommutator(&jdj, rho)?.scale_real(0.5);
    Ok(out)
}

/// Hermitian, unit-trace, positive-semidefinite state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates all state invariants.
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        let state = Self { mat };
        state.validate()?;
        Ok(state)
    }

    pub(crate) fn from_normalized_unchecked(mat: ComplexMatrix) -> Self {
        Self { mat }
    }

    /// `|k⟩⟨k|`
    pub fn basis_state(dim: usize, k: usize) -> Self {
        Self {
            mat: ket_bra(dim, k, k),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            mat: ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
        }
    }

    /// `(𝟙 + r·σ)/2`; requires `‖r‖ ≤ 1`.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let mut m = ComplexMatrix::identity(2);
        m += &sigma_x().scale_real(r[0]);
        m += &sigma_y().scale_real(r[1]);
        m += &sigma_z().scale_real(r[2]);
        Self::new(m.scale_real(0.5))
    }

    pub fn validate(&self) -> Result<()> {
        let defect = self.mat.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (defect {defect:e})")));
        }
        let tr = self.mat.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let min_ev = self.mat.hermitian_eigenvalues()[0];
        if min_ev < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_ev:e}")));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    /// `tr(Aρ)`
    pub fn expectation(&self, op: &ComplexMatrix) -> C64 {
        (op * &self.mat).trace()
    }
}

/// A Hermitian matrix with positive trace; the trace carries the running likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct UnnormalizedState {
    mat: ComplexMatrix,
}

impl UnnormalizedState {
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        if mat.hermiticity_defect() > HERMITIAN_TOL * mat.norm_max().max(1.0) {
            return Err(Error::InvalidState("unnormalized state is not Hermitian".into()));
        }
        Ok(Self { mat })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }
}

impl From<DensityMatrix> for UnnormalizedState {
    fn from(rho: DensityMatrix) -> Self {
        Self { mat: rho.mat }
    }
}

/// Hermitizes `state` and scales it to unit trace, returning the log of the input trace.
pub fn renormalize(state: &UnnormalizedState) -> Result<(DensityMatrix, f64)> {
    let (mat, log_trace) = renormalize_matrix(&state.mat, 0)?;
    Ok((DensityMatrix::from_normalized_unchecked(mat), log_trace))
}

pub(crate) fn renormalize_matrix(m: &ComplexMatrix, step: usize) -> Result<(ComplexMatrix, f64)> {
    let h = m.hermitized();
    let tr = h.trace().re;
    if !(tr.is_finite() && tr > 0.0) {
        return Err(Error::NonPositiveTrace { trace: tr, step });
    }
    Ok((h.scale_real(1.0 / tr), tr.ln()))
}

/// `r_k = tr(ρ σ_k)` for a two-level state.
pub fn bloch_vector(rho: &DensityMatrix) -> Result<[f64; 3]> {
    if rho.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            expected: 2,
            actual: rho.dim(),
        });
    }
    Ok([
        rho.expectation(&sigma_x()).re,
        rho.expectation(&sigma_y()).re,
        rho.expectation(&sigma_z()).re,
    ])
}

/// Hamiltonian, monitored collapse operator and unmonitored Lindblad operators.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSet {
    pub hamiltonian: ComplexMatrix,
    pub collapse: ComplexMatrix,
    pub hidden: Vec<ComplexMatrix>,
}

impl OperatorSet {
    pub fn new(
        hamiltonian: ComplexMatrix,
        collapse: ComplexMatrix,
        hidden: Vec<ComplexMatrix>,
    ) -> Result<Self> {
        let dim = hamiltonian.dim();
        for m in std::iter::once(&collapse).chain(hidden.iter()) {
            hamiltonian.check_same_dim(m)?;
        }
        if hamiltonian.hermiticity_defect() > HERMITIAN_TOL {
            return Err(Error::InvalidState("Hamiltonian is not Hermitian".into()));
        }
        debug_assert!(dim > 0);
        Ok(Self {
            hamiltonian,
            collapse,
            hidden,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    /// Right-hand side of the unconditional master equation,
    /// `−i[H,ρ] + D[c](ρ) + Σ D[J](ρ)`.
    pub fn lindblad_rhs(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut out = commutator(&self.hamiltonian, rho)?.scale(c(0.0, -1.0));
        out += &lindblad_dissipator(&self.collapse, rho)?;
        for j in &self.hidden {
            out += &lindblad_dissipator(j, rho)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_matrix(dim: usize, vals: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_fn(dim, |i, j| {
            let k = 2 * (i * dim + j);
            c(vals[k % vals.len()], vals[(k + 1) % vals.len()])
        })
    }

    #[test]
    fn identity_commutes() {
        let b = random_matrix(3, &[0.3, -1.2, 0.7, 2.0, -0.4]);
        let z = commutator(&ComplexMatrix::identity(3), &b).unwrap();
        assert!(z.norm_max() < 1e-15);
    }

    #[test]
    fn pauli_commutator() {
        let lhs = commutator(&sigma_x(), &sigma_z()).unwrap();
        let rhs = sigma_y().scale(c(0.0, -2.0));
        assert!(lhs.max_abs_diff(&rhs) < 1e-15);
    }

    #[test]
    fn commutator_matches_elementwise_oracle() {
        let a = random_matrix(3, &[0.1, 0.9, -0.3, 0.4, 1.7, -2.2, 0.05]);
        let b = random_matrix(3, &[-0.8, 0.2, 0.6, 1.1, -0.5]);
        let got = commutator(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut expect = c(0.0, 0.0);
                for k in 0..3 {
                    expect += a[(i, k)] * b[(k, j)] - b[(i, k)] * a[(k, j)];
                }
                assert!((got[(i, j)] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn commutator_dimension_mismatch() {
        let err = commutator(&ComplexMatrix::identity(2), &ComplexMatrix::identity(3));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        assert!(lindblad_dissipator(&ComplexMatrix::identity(2), &ComplexMatrix::identity(4)).is_err());
    }

    #[test]
    fn dissipator_of_zero_operator() {
        let rho = DensityMatrix::maximally_mixed(2);
        let d = lindblad_dissipator(&ComplexMatrix::zeros(2), rho.matrix()).unwrap();
        assert!(d.is_zero());
    }

    #[test]
    fn single_decay_channel() {
        let gamma: f64 = 0.55;
        let j = sigma_minus().scale_real(gamma.sqrt());
        let excited = DensityMatrix::basis_state(2, 0);
        let d = lindblad_dissipator(&j, excited.matrix()).unwrap();
        let expect = ComplexMatrix::diagonal(&[c(-gamma, 0.0), c(gamma, 0.0)]);
        assert!(d.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn bloch_vectors_of_reference_states() {
        let g = DensityMatrix::basis_state(2, 1);
        assert_eq!(bloch_vector(&g).unwrap(), [0.0, 0.0, -1.0]);
        assert_eq!(bloch_vector(&DensityMatrix::maximally_mixed(2)).unwrap(), [0.0, 0.0, 0.0]);
        let plus = DensityMatrix::new(ComplexMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        let r = bloch_vector(&plus).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15 && r[1].abs() < 1e-15 && r[2].abs() < 1e-15);
        assert!(bloch_vector(&DensityMatrix::maximally_mixed(4)).is_err());
    }

    #[test]
    fn renormalize_examples() {
        let rho = DensityMatrix::basis_state(2, 1);
        let (out, lt) = renormalize(&rho.clone().into()).unwrap();
        assert_eq!(out, rho);
        assert_eq!(lt, 0.0);

        let doubled = UnnormalizedState::new(rho.matrix().scale_real(2.0)).unwrap();
        let (out, lt) = renormalize(&doubled).unwrap();
        assert_eq!(out, rho);
        assert!((lt - 2f64.ln()).abs() < 1e-15);

        let tiny = UnnormalizedState::new(rho.matrix().scale_real(1e-300)).unwrap();
        let (out, lt) = renormalize(&tiny).unwrap();
        assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-15);
        assert!((lt - (-690.7755278982137)).abs() < 1e-9);
    }

    #[test]
    fn renormalize_rejects_zero_trace() {
        let zero = UnnormalizedState::new(ComplexMatrix::zeros(2)).unwrap();
        assert!(matches!(renormalize(&zero), Err(Error::NonPositiveTrace { .. })));
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(ComplexMatrix::identity(2)).is_err());
        let neg = ComplexMatrix::from_real_rows(&[&[1.5, 0.0], &[0.0, -0.5]]);
        assert!(DensityMatrix::new(neg).is_err());
        let non_herm = ComplexMatrix::from_real_rows(&[&[0.5, 0.2], &[0.0, 0.5]]);
        assert!(DensityMatrix::new(non_herm).is_err());
    }

    fn hermitian_strategy(dim: usize) -> impl Strategy<Value = ComplexMatrix> {
        proptest::collection::vec(-2.0f64..2.0, 2 * dim * dim).prop_map(move |v| {
            let m = ComplexMatrix::from_fn(dim, |i, j| c(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1]));
            m.hermitized()
        })
    }

    fn any_matrix(dim: usize) -> impl Strategy<Value = ComplexMatrix> {
        proptest::collection::vec(-2.0f64..2.0, 2 * dim * dim)
            .prop_map(move |v| ComplexMatrix::from_fn(dim, |i, j| c(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1])))
    }

    proptest! {
        #[test]
        fn dissipator_is_traceless(j in any_matrix(3), rho in hermitian_strategy(3)) {
            let d = lindblad_dissipator(&j, &rho).unwrap();
            prop_assert!(d.trace().norm() < 1e-12);
        }

        #[test]
        fn bloch_round_trip(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let n = (x * x + y * y + z * z).sqrt();
            let s = if n > 1.0 { 1.0 / n } else { 1.0 };
            let r = [x * s, y * s, z * s];
            let rho = DensityMatrix::from_bloch(r).unwrap();
            let back = bloch_vector(&rho).unwrap();
            for k in 0..3 {
                prop_assert!((back[k] - r[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn renormalize_preserves_direction(m in hermitian_strategy(3), shift in 0.5f64..5.0) {
            // shift the spectrum to make the trace positive
            let mut m = m;
            for i in 0..3 { m[(i, i)] += c(shift + 2.0, 0.0); }
            let state = UnnormalizedState::new(m.clone()).unwrap();
            let (rho, lt) = renormalize(&state).unwrap();
            let back = rho.matrix().scale_real(lt.exp());
            prop_assert!(back.max_abs_diff(&m.hermitized()) < 1e-12);
        }
    }
}
