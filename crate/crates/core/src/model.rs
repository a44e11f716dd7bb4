//! States, the controlled system, and the frames the tracking problem is
//! solved in.
//!
//! A [`Frame`] is the time-dependent unitary `S(t)` with
//! `rho_frame(t) = S(t) rho_lab(t) S(t)^dagger`:
//!
//! | kind            | `S(t)`                 |
//! |-----------------|------------------------|
//! | `Schrodinger`   | `I`                    |
//! | `Interaction`   | `exp(+i H0 t)`         |
//! | `Diagonalized`  | `U_f exp(+i H0 t)`     |
//!
//! In the last two the free target is stationary: `rho_f0`, resp. the
//! diagonal `D_f = U_f rho_f0 U_f^dagger`.

use serde::{Deserialize, Serialize};

use crate::hermat::{
    self, conjugate_unchecked, eig_hermitian, CMatrix, EigenPair, ExpSign, C64, HERMITIAN_TOL,
};
use crate::{Error, Result};

/// Tolerance of the density-matrix invariants (hermiticity, unit trace,
/// eigenvalue floor).
pub const DENSITY_TOL: f64 = 1e-10;

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates `m`; each failed invariant has its own error.
    pub fn new(m: CMatrix) -> Result<Self> {
        let herm = m.hermiticity_residual();
        if herm > DENSITY_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > DENSITY_TOL || tr.im.abs() > DENSITY_TOL {
            return Err(Error::TraceNotOne(tr.re));
        }
        let min = *eig_hermitian(&m)?.values.last().expect("n >= 1");
        if min < -DENSITY_TOL {
            return Err(Error::NegativeEigenvalue(min));
        }
        Ok(Self(m))
    }

    /// `|psi><psi|` for a normalized `psi`.
    pub fn from_ket(psi: &[C64]) -> Result<Self> {
        let norm = hermat::vec_norm(psi);
        if (norm - 1.0).abs() > DENSITY_TOL {
            return Err(Error::Precondition(format!("ket norm {norm} is not 1")));
        }
        Self::new(CMatrix::projector(psi))
    }

    /// For states valid by construction.
    pub(crate) fn new_unchecked(m: CMatrix) -> Self {
        Self(m)
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self(CMatrix::identity(n).scale(1.0 / n as f64))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        purity(&self.0)
    }

    /// Eigenvalues, descending.
    pub fn spectrum(&self) -> Vec<f64> {
        eig_hermitian(&self.0).expect("validated Hermitian").values
    }
}

impl AsRef<CMatrix> for DensityMatrix {
    fn as_ref(&self) -> &CMatrix {
        &self.0
    }
}

impl AsRef<CMatrix> for CMatrix {
    fn as_ref(&self) -> &CMatrix {
        self
    }
}

/// Wraps `m` as a [`DensityMatrix`] iff all invariants hold.
pub fn validate_density(m: CMatrix) -> Result<DensityMatrix> {
    DensityMatrix::new(m)
}

/// `Re tr(rho^2)`; defined for any matrix so it can score drifting states.
pub fn purity(rho: &CMatrix) -> f64 {
    hermat::trace_product_unchecked(rho, rho).re
}

/// The controlled system, its target and the feedback gains.
///
/// Energies are in units with hbar = 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemModel {
    h0: CMatrix,
    controls: Vec<CMatrix>,
    gains: Vec<f64>,
    rho0: DensityMatrix,
    rho_f0: DensityMatrix,
}

impl SystemModel {
    /// A gain of zero switches its channel off; negative gains are rejected.
    pub fn new(
        h0: CMatrix,
        controls: Vec<CMatrix>,
        gains: Vec<f64>,
        rho0: DensityMatrix,
        rho_f0: DensityMatrix,
    ) -> Result<Self> {
        let n = h0.dim();
        let herm = h0.hermiticity_residual();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidModel(format!(
                "H0 is not Hermitian (residual {herm:e})"
            )));
        }
        if controls.is_empty() {
            return Err(Error::InvalidModel("at least one control Hamiltonian is required".into()));
        }
        if controls.len() != gains.len() {
            return Err(Error::InvalidModel(format!(
                "{} controls but {} gains",
                controls.len(),
                gains.len()
            )));
        }
        for (m, h) in controls.iter().enumerate() {
            if h.dim() != n {
                return Err(Error::InvalidModel(format!(
                    "H_{} is {}x{}, H0 is {n}x{n}",
                    m + 1,
                    h.dim(),
                    h.dim()
                )));
            }
            let herm = h.hermiticity_residual();
            if herm > HERMITIAN_TOL {
                return Err(Error::InvalidModel(format!(
                    "H_{} is not Hermitian (residual {herm:e})",
                    m + 1
                )));
            }
        }
        if let Some(&k) = gains.iter().find(|k| !k.is_finite() || **k < 0.0) {
            return Err(Error::NegativeGain(k));
        }
        if rho0.dim() != n || rho_f0.dim() != n {
            return Err(Error::InvalidModel(format!(
                "state dimensions ({}, {}) do not match H0 ({n})",
                rho0.dim(),
                rho_f0.dim()
            )));
        }
        Ok(Self {
            h0,
            controls,
            gains,
            rho0,
            rho_f0,
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn h0(&self) -> &CMatrix {
        &self.h0
    }

    pub fn controls(&self) -> &[CMatrix] {
        &self.controls
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn rho0(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn rho_f0(&self) -> &DensityMatrix {
        &self.rho_f0
    }

    pub fn with_gains(&self, gains: Vec<f64>) -> Result<Self> {
        Self::new(
            self.h0.clone(),
            self.controls.clone(),
            gains,
            self.rho0.clone(),
            self.rho_f0.clone(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Schrodinger,
    Interaction,
    Diagonalized,
}

/// A picture change `S(t)` together with the cached spectral data needed
/// to evaluate it.
#[derive(Clone, Debug)]
pub struct Frame {
    kind: FrameKind,
    uf: Option<CMatrix>,
    h0_eig: EigenPair,
    controls: Vec<CMatrix>,
    rho_f0: DensityMatrix,
}

impl Frame {
    fn build(model: &SystemModel, kind: FrameKind, uf: Option<CMatrix>) -> Result<Self> {
        Ok(Self {
            kind,
            uf,
            h0_eig: eig_hermitian(model.h0())?,
            controls: model.controls().to_vec(),
            rho_f0: model.rho_f0().clone(),
        })
    }

    pub fn schrodinger(model: &SystemModel) -> Result<Self> {
        Self::build(model, FrameKind::Schrodinger, None)
    }

    pub fn interaction(model: &SystemModel) -> Result<Self> {
        Self::build(model, FrameKind::Interaction, None)
    }

    /// Interaction picture followed by the constant `U_f` that makes the
    /// target diagonal with descending entries.
    pub fn diagonalizing(model: &SystemModel) -> Result<Self> {
        let uf = eig_hermitian(model.rho_f0().matrix())?.basis.adjoint();
        Self::build(model, FrameKind::Diagonalized, Some(uf))
    }

    pub fn of_kind(model: &SystemModel, kind: FrameKind) -> Result<Self> {
        match kind {
            FrameKind::Schrodinger => Self::schrodinger(model),
            FrameKind::Interaction => Self::interaction(model),
            FrameKind::Diagonalized => Self::diagonalizing(model),
        }
    }

    pub fn kind(&self) -> FrameKind {
        self.kind
    }

    pub fn uf(&self) -> Option<&CMatrix> {
        self.uf.as_ref()
    }

    pub fn h0_eig(&self) -> &EigenPair {
        &self.h0_eig
    }

    pub fn dim(&self) -> usize {
        self.h0_eig.dim()
    }

    pub fn control_count(&self) -> usize {
        self.controls.len()
    }

    /// `S(t)`.
    pub fn unitary(&self, t: f64) -> CMatrix {
        match self.kind {
            FrameKind::Schrodinger => CMatrix::identity(self.dim()),
            FrameKind::Interaction => self.h0_eig.exp_i(t, ExpSign::Plus),
            FrameKind::Diagonalized => {
                let uf = self.uf.as_ref().expect("diagonalized frame carries U_f");
                uf * &self.h0_eig.exp_i(t, ExpSign::Plus)
            }
        }
    }

    /// `exp(-i H0 t)`, the free propagator in the lab frame.
    pub fn free_propagator(&self, t: f64) -> CMatrix {
        self.h0_eig.exp_i(t, ExpSign::Minus)
    }

    pub fn to_frame(&self, rho_lab: &CMatrix, t: f64) -> CMatrix {
        conjugate_unchecked(&self.unitary(t), rho_lab)
    }

    pub fn to_lab(&self, rho_frame: &CMatrix, t: f64) -> CMatrix {
        conjugate_unchecked(&self.unitary(t).adjoint(), rho_frame)
    }

    /// `S(t) H_m S(t)^dagger`.
    pub fn control_hamiltonian(&self, m: usize, t: f64) -> Result<CMatrix> {
        let h = self.controls.get(m).ok_or(Error::ControlIndex {
            index: m,
            count: self.controls.len(),
        })?;
        Ok(conjugate_unchecked(&self.unitary(t), h))
    }

    /// All `S(t) H_m S(t)^dagger`, sharing one evaluation of `S(t)`.
    pub fn control_hamiltonians(&self, t: f64) -> Vec<CMatrix> {
        let s = self.unitary(t);
        let sd = s.adjoint();
        self.controls.iter().map(|h| &(&s * h) * &sd).collect()
    }

    /// The target as seen in this frame; constant for the interaction and
    /// diagonalized kinds.
    pub fn target_in_frame(&self) -> CMatrix {
        self.to_frame(self.rho_f0.matrix(), 0.0)
    }

    /// `exp(-i H0 t) rho_f0 exp(+i H0 t)`, evaluated exactly.
    pub fn free_target_state(&self, t: f64) -> DensityMatrix {
        let u = self.free_propagator(t);
        DensityMatrix(conjugate_unchecked(&u, self.rho_f0.matrix()).hermitian_part())
    }
}

/// See [`Frame::control_hamiltonian`].
pub fn interaction_control_hamiltonian(frame: &Frame, m: usize, t: f64) -> Result<CMatrix> {
    frame.control_hamiltonian(m, t)
}

/// See [`Frame::free_target_state`].
pub fn free_target_state(frame: &Frame, t: f64) -> DensityMatrix {
    frame.free_target_state(t)
}

/// See [`Frame::diagonalizing`].
pub fn diagonalizing_frame(model: &SystemModel) -> Result<Frame> {
    Frame::diagonalizing(model)
}

/// Two-level state as `rho = (I + x sx + y sy + z sz) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn radius(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// `tr(rho^2) = (1 + r^2) / 2`.
    pub fn purity(&self) -> f64 {
        0.5 * (1.0 + self.radius().powi(2))
    }

    /// Components of any 2x2 matrix; no density-matrix checks.
    pub fn of_matrix(rho: &CMatrix) -> Result<Self> {
        if rho.dim() != 2 {
            return Err(Error::NotTwoLevel(rho.dim()));
        }
        let off = rho[(0, 1)];
        Ok(Self {
            x: 2.0 * off.re,
            y: -2.0 * off.im,
            z: rho[(0, 0)].re - rho[(1, 1)].re,
        })
    }
}

pub fn to_bloch(rho: &DensityMatrix) -> Result<BlochVector> {
    BlochVector::of_matrix(rho.matrix())
}

pub fn from_bloch(b: BlochVector) -> Result<DensityMatrix> {
    let r = b.radius();
    if r > 1.0 + 1e-12 {
        return Err(Error::BlochNorm(r));
    }
    let half = |v: f64| C64::new(0.5 * v, 0.0);
    let m = CMatrix::new(
        2,
        vec![
            half(1.0 + b.z),
            C64::new(0.5 * b.x, -0.5 * b.y),
            C64::new(0.5 * b.x, 0.5 * b.y),
            half(1.0 - b.z),
        ],
    )?;
    DensityMatrix::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermat::frobenius_distance_sq;

    fn real(rows: &[&[f64]]) -> CMatrix {
        CMatrix::from_real_rows(rows).unwrap()
    }

    fn rho0_52() -> DensityMatrix {
        DensityMatrix::new(real(&[&[0.45, 0.274], &[0.274, 0.55]])).unwrap()
    }

    fn rhof0_52() -> DensityMatrix {
        DensityMatrix::new(real(&[&[0.762, -0.094], &[-0.094, 0.238]])).unwrap()
    }

    fn model(h0: CMatrix, h1: CMatrix, rho0: DensityMatrix, rho_f0: DensityMatrix) -> SystemModel {
        SystemModel::new(h0, vec![h1], vec![1.0], rho0, rho_f0).unwrap()
    }

    fn dist(a: &CMatrix, b: &CMatrix) -> f64 {
        frobenius_distance_sq(a, b).unwrap().sqrt()
    }

    #[test]
    fn density_validation() {
        let mixed = validate_density(CMatrix::identity(2).scale(0.5)).unwrap();
        assert!((mixed.purity() - 0.5).abs() < 1e-15);
        assert!(validate_density(rho0_52().into_matrix()).is_ok());
        assert!(matches!(
            validate_density(CMatrix::from_real_diag(&[1.2, -0.2])),
            Err(Error::NegativeEigenvalue(_))
        ));
        assert!(matches!(
            validate_density(CMatrix::from_real_diag(&[0.7, 0.2])),
            Err(Error::TraceNotOne(_))
        ));
        assert!(matches!(
            validate_density(real(&[&[0.5, 0.1], &[0.0, 0.5]])),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn model_validation() {
        let r = rho0_52();
        let h = CMatrix::pauli_x();
        let ok = SystemModel::new(CMatrix::pauli_z(), vec![h.clone()], vec![0.1], r.clone(), r.clone());
        assert!(ok.is_ok());
        let bad = SystemModel::new(CMatrix::pauli_z(), vec![], vec![], r.clone(), r.clone());
        assert!(matches!(bad, Err(Error::InvalidModel(_))));
        let bad = SystemModel::new(CMatrix::pauli_z(), vec![h.clone()], vec![-1.0], r.clone(), r.clone());
        assert!(matches!(bad, Err(Error::NegativeGain(_))));
        let bad = SystemModel::new(real(&[&[1.0, 1.0], &[0.0, 1.0]]), vec![h], vec![1.0], r.clone(), r);
        assert!(matches!(bad, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn interaction_hamiltonian_examples() {
        let m = model(CMatrix::pauli_z(), CMatrix::pauli_x(), rho0_52(), rhof0_52());
        let frame = Frame::interaction(&m).unwrap();
        let h0 = interaction_control_hamiltonian(&frame, 0, 0.0).unwrap();
        assert!(dist(&h0, &CMatrix::pauli_x()) < 1e-15);

        for omega in [1.0, 0.7] {
            let m = model(CMatrix::pauli_z().scale(omega), CMatrix::pauli_x(), rho0_52(), rhof0_52());
            let frame = Frame::interaction(&m).unwrap();
            for t in [0.3, 1.1, 7.9] {
                let got = frame.control_hamiltonian(0, t).unwrap();
                let a = 2.0 * omega * t;
                let want = &CMatrix::pauli_x().scale(a.cos()) - &CMatrix::pauli_y().scale(a.sin());
                assert!(dist(&got, &want) < 1e-13);
            }
        }

        let m = model(CMatrix::from_real_diag(&[0.3, -1.2]), CMatrix::from_real_diag(&[1.0, 2.0]), rho0_52(), rhof0_52());
        let frame = Frame::interaction(&m).unwrap();
        let got = frame.control_hamiltonian(0, 3.3).unwrap();
        assert!(dist(&got, &CMatrix::from_real_diag(&[1.0, 2.0])) < 1e-15);

        assert_eq!(
            frame.control_hamiltonian(1, 0.0),
            Err(Error::ControlIndex { index: 1, count: 1 })
        );
    }

    #[test]
    fn interaction_hamiltonian_is_periodic() {
        // Gap 2 * omega, period pi / omega.
        let omega = 1.3;
        let m = model(CMatrix::pauli_z().scale(omega), CMatrix::pauli_x(), rho0_52(), rhof0_52());
        let frame = Frame::interaction(&m).unwrap();
        let period = std::f64::consts::PI / omega;
        for t in [0.0, 0.4, 2.5] {
            let a = frame.control_hamiltonian(0, t).unwrap();
            let b = frame.control_hamiltonian(0, t + period).unwrap();
            assert!(dist(&a, &b) < 1e-12);
            assert!(a.is_hermitian(1e-14));
        }
    }

    #[test]
    fn free_target_examples() {
        let m = model(CMatrix::pauli_z(), CMatrix::pauli_x(), rho0_52(), rhof0_52());
        let frame = Frame::interaction(&m).unwrap();
        assert!(dist(frame.free_target_state(0.0).matrix(), rhof0_52().matrix()) < 1e-15);

        let diag = DensityMatrix::new(CMatrix::from_real_diag(&[0.7, 0.3])).unwrap();
        let m2 = model(CMatrix::pauli_z(), CMatrix::pauli_x(), rho0_52(), diag.clone());
        let f2 = Frame::interaction(&m2).unwrap();
        assert!(dist(f2.free_target_state(12.0).matrix(), diag.matrix()) < 1e-15);

        // z = 0.762 - 0.238, radius = 0.77835 - 0.22165.
        let spec0 = rhof0_52().spectrum();
        for t in [0.5, 3.0, 40.0] {
            let s = frame.free_target_state(t);
            let b = to_bloch(&s).unwrap();
            assert!((b.z - 0.524).abs() < 1e-12);
            assert!((b.radius() - 0.5567).abs() < 1e-4);
            let spec = s.spectrum();
            assert!(spec.iter().zip(&spec0).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn diagonalizing_frame_examples() {
        let d = DensityMatrix::new(CMatrix::from_real_diag(&[0.8, 0.2])).unwrap();
        let m = model(CMatrix::pauli_z(), CMatrix::pauli_x(), rho0_52(), d);
        let f = diagonalizing_frame(&m).unwrap();
        assert!(dist(f.uf().unwrap(), &CMatrix::identity(2)) < 1e-15);

        let m = model(CMatrix::pauli_z(), CMatrix::pauli_x(), rho0_52(), rhof0_52());
        let f = diagonalizing_frame(&m).unwrap();
        assert_eq!(f.kind(), FrameKind::Diagonalized);
        let uf = f.uf().unwrap();
        assert!(uf.is_unitary(1e-12));
        let want = [[0.985, 0.171], [0.171, 0.985]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((uf[(i, j)].norm() - want[i][j]).abs() < 1e-3);
            }
        }
        let df = f.target_in_frame();
        assert!(df.offdiag_norm() < 1e-8);
        assert!((df[(0, 0)].re - 0.778).abs() < 1e-3);
        assert!((df[(1, 1)].re - 0.222).abs() < 1e-3);
        assert!(df[(0, 0)].re > df[(1, 1)].re);

        let m = model(CMatrix::pauli_z(), CMatrix::pauli_x(), rho0_52(), DensityMatrix::maximally_mixed(2));
        let f = diagonalizing_frame(&m).unwrap();
        assert!(dist(f.uf().unwrap(), &CMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn frames_round_trip() {
        let m = model(CMatrix::pauli_z(), CMatrix::pauli_x(), rho0_52(), rhof0_52());
        for kind in [FrameKind::Schrodinger, FrameKind::Interaction, FrameKind::Diagonalized] {
            let f = Frame::of_kind(&m, kind).unwrap();
            let lab = rho0_52().into_matrix();
            let back = f.to_lab(&f.to_frame(&lab, 2.7), 2.7);
            assert!(dist(&back, &lab) < 1e-14);
            // The target is stationary in the frame.
            if kind != FrameKind::Schrodinger {
                let t = 5.1;
                let in_frame = f.to_frame(f.free_target_state(t).matrix(), t);
                assert!(dist(&in_frame, &f.target_in_frame()) < 1e-13);
            }
        }
    }

    #[test]
    fn bloch_examples() {
        let up = DensityMatrix::new(CMatrix::from_real_diag(&[1.0, 0.0])).unwrap();
        assert_eq!(to_bloch(&up).unwrap(), BlochVector { x: 0.0, y: 0.0, z: 1.0 });
        let mixed = DensityMatrix::maximally_mixed(2);
        assert_eq!(to_bloch(&mixed).unwrap(), BlochVector { x: 0.0, y: 0.0, z: 0.0 });
        let b = to_bloch(&rhof0_52()).unwrap();
        assert!((b.x + 0.188).abs() < 1e-12 && b.y == 0.0 && (b.z - 0.524).abs() < 1e-12);

        let back = from_bloch(b).unwrap();
        assert!(dist(back.matrix(), rhof0_52().matrix()) < 1e-12);
        assert!((b.purity() - rhof0_52().purity()).abs() < 1e-12);

        assert!(matches!(
            from_bloch(BlochVector { x: 1.0, y: 0.5, z: 0.0 }),
            Err(Error::BlochNorm(_))
        ));
        let three = DensityMatrix::maximally_mixed(3);
        assert_eq!(to_bloch(&three), Err(Error::NotTwoLevel(3)));
    }

    #[test]
    fn bloch_complex_coherence() {
        let b = BlochVector { x: 0.3, y: -0.4, z: 0.5 };
        let rho = from_bloch(b).unwrap();
        let sx = crate::hermat::trace_product(&CMatrix::pauli_x(), rho.matrix()).unwrap().re;
        let sy = crate::hermat::trace_product(&CMatrix::pauli_y(), rho.matrix()).unwrap().re;
        assert!((sx - 0.3).abs() < 1e-15 && (sy + 0.4).abs() < 1e-15);
        let back = to_bloch(&rho).unwrap();
        assert!((back.x - b.x).abs() < 1e-15 && (back.y - b.y).abs() < 1e-15);
    }
}
