//! The Lyapunov function `V = tr(P rho)` and the feedback it induces.
//!
//! Under `i d/dt rho = [sum_m f_m H_m(t), rho]`,
//!
//! ```text
//! dV/dt = -sum_m f_m tr(i H_m(t) [rho, P])
//! ```
//!
//! and the feedback `f_m = -k_m tr(i H_m(t) [P, rho])` makes every term of
//! the sum non-positive: `dV/dt = -sum_m f_m^2 / k_m`.

use serde::{Deserialize, Serialize};

use crate::hermat::{self, CMatrix, EigenPair, C64, HERMITIAN_TOL};
use crate::{Error, Result};

/// Bound on the imaginary residue of the feedback trace (scaled by
/// `max(1, |H|_F |[rho, P]|_F)`).
pub const REALNESS_TOL: f64 = 1e-12;

/// Largest `|[rho_f, P]|_F` accepted by [`curvature_at_target`].
pub const STATIONARY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Given,
    DiagonalDesign,
    SuperpositionDesign,
}

/// The designed observable `P` in `V = tr(P rho)`.
#[derive(Clone, Debug)]
pub struct VirtualObservable {
    mat: CMatrix,
    eig: EigenPair,
    provenance: Provenance,
}

impl VirtualObservable {
    /// Requires a Hermitian, positive semidefinite `mat`.
    pub fn new(mat: CMatrix, provenance: Provenance) -> Result<Self> {
        let herm = mat.hermiticity_residual();
        if herm > HERMITIAN_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let mat = mat.hermitian_part();
        let eig = hermat::eig_hermitian(&mat)?;
        let min = *eig.values.last().expect("n >= 1");
        if min < -HERMITIAN_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(Self {
            mat,
            eig,
            provenance,
        })
    }

    pub fn given(mat: CMatrix) -> Result<Self> {
        Self::new(mat, Provenance::Given)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn eig(&self) -> &EigenPair {
        &self.eig
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    /// `P + c I` with the same provenance.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let shift = CMatrix::identity(self.dim()).scale(c);
        Self::new(&self.mat + &shift, self.provenance)
    }
}

/// Feedback field values `f_m(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub t: f64,
    pub values: Vec<f64>,
}

fn check_dim(p: &VirtualObservable, m: &CMatrix) -> Result<()> {
    if p.dim() != m.dim() {
        return Err(hermat::LinalgError::DimensionMismatch(p.dim(), m.dim()).into());
    }
    Ok(())
}

/// `V = tr(P rho)`.
pub fn lyapunov_value(p: &VirtualObservable, rho: &impl AsRef<CMatrix>) -> Result<f64> {
    let rho = rho.as_ref();
    check_dim(p, rho)?;
    Ok(hermat::trace_product_unchecked(&p.mat, rho).re)
}

/// `tr(i H_m [rho, P])` for every control, after checking each is real.
pub fn feedback_traces(
    p: &VirtualObservable,
    rho: &impl AsRef<CMatrix>,
    hms_t: &[CMatrix],
) -> Result<Vec<f64>> {
    let rho = rho.as_ref();
    check_dim(p, rho)?;
    for h in hms_t {
        check_dim(p, h)?;
    }
    feedback_traces_raw(&p.mat, rho, hms_t)
}

/// [`feedback_traces`] for a bare `P` of matching dimension.
pub(crate) fn feedback_traces_raw(p: &CMatrix, rho: &CMatrix, hms_t: &[CMatrix]) -> Result<Vec<f64>> {
    let comm = &(rho * p) - &(p * rho);
    let comm_norm = comm.frobenius_norm();
    hms_t
        .iter()
        .map(|h| {
            // tr(i H C) = i tr(H C)
            let z: C64 = hermat::trace_product_unchecked(h, &comm) * C64::new(0.0, 1.0);
            let scale = (h.frobenius_norm() * comm_norm).max(1.0);
            if z.im.abs() > REALNESS_TOL * scale {
                return Err(Error::ImaginaryResidue(z.im));
            }
            Ok(z.re)
        })
        .collect()
}

/// `f_m = -k_m tr(i H_m(t) [P, rho])`.
///
/// All fields vanish when `[rho, P] = 0`.
pub fn control_fields(
    t: f64,
    p: &VirtualObservable,
    rho: &impl AsRef<CMatrix>,
    hms_t: &[CMatrix],
    gains: &[f64],
) -> Result<FieldSample> {
    if hms_t.len() != gains.len() {
        return Err(Error::LengthMismatch {
            expected: hms_t.len(),
            got: gains.len(),
        });
    }
    if let Some(&k) = gains.iter().find(|k| **k < 0.0) {
        return Err(Error::NegativeGain(k));
    }
    let traces = feedback_traces(p, rho, hms_t)?;
    Ok(FieldSample {
        t,
        values: traces.iter().zip(gains).map(|(x, k)| k * x).collect(),
    })
}

/// `dV/dt = -sum_m f_m tr(i H_m(t) [rho, P])` for arbitrary fields.
pub fn lyapunov_rate(
    p: &VirtualObservable,
    rho: &impl AsRef<CMatrix>,
    hms_t: &[CMatrix],
    fields: &[f64],
) -> Result<f64> {
    if hms_t.len() != fields.len() {
        return Err(Error::LengthMismatch {
            expected: hms_t.len(),
            got: fields.len(),
        });
    }
    let traces = feedback_traces(p, rho, hms_t)?;
    Ok(-traces.iter().zip(fields).map(|(x, f)| f * x).sum::<f64>())
}

/// Second derivative of `V` at a stationary target under unit probe fields:
/// `sum_m tr([H_m, rho_f] [H_m, P])`.
///
/// Each term expands to `-sum_ij (l_i - l_j)(p_i - p_j) |H_ij|^2` in the
/// common eigenbasis, so it is positive exactly when every coupled level
/// pair is anti-ordered. Zero or negative means `rho_f` is not a strict
/// minimum along the directions the controls can move it.
pub fn curvature_at_target(
    p: &VirtualObservable,
    rho_f: &impl AsRef<CMatrix>,
    hms_t: &[CMatrix],
) -> Result<f64> {
    let rho_f = rho_f.as_ref();
    check_dim(p, rho_f)?;
    let res = hermat::commutator(rho_f, &p.mat)?.frobenius_norm();
    if res >= STATIONARY_TOL {
        return Err(Error::Precondition(format!(
            "target does not commute with P (|[rho_f, P]| = {res:e})"
        )));
    }
    let mut acc = 0.0;
    for h in hms_t {
        check_dim(p, h)?;
        let a = hermat::commutator(h, rho_f)?;
        let b = hermat::commutator(h, &p.mat)?;
        acc += hermat::trace_product_unchecked(&a, &b).re;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DensityMatrix;

    fn p51() -> VirtualObservable {
        VirtualObservable::given(
            CMatrix::from_real_rows(&[&[1.775, -0.59529404498], &[-0.59529404498, 0.425]]).unwrap(),
        )
        .unwrap()
    }

    fn rho0_51() -> DensityMatrix {
        let a = (1.0f64 / 3.0).sqrt();
        let b = (2.0f64 / 3.0).sqrt();
        DensityMatrix::from_ket(&[C64::new(a, 0.0), C64::new(b, 0.0)]).unwrap()
    }

    fn psi_f_51() -> Vec<C64> {
        vec![C64::new((1.0f64 / 8.0).sqrt(), 0.0), C64::new((7.0f64 / 8.0).sqrt(), 0.0)]
    }

    #[test]
    fn observable_must_be_positive() {
        let neg = CMatrix::from_real_diag(&[1.0, -0.5]);
        assert!(matches!(VirtualObservable::given(neg), Err(Error::NotPositive(_))));
        let p = VirtualObservable::given(CMatrix::from_real_diag(&[0.1, 0.2])).unwrap();
        assert_eq!(p.eig().values, vec![0.2, 0.1]);
        assert_eq!(p.provenance(), Provenance::Given);
    }

    #[test]
    fn value_examples() {
        let id = VirtualObservable::given(CMatrix::identity(2)).unwrap();
        assert!((lyapunov_value(&id, &rho0_51()).unwrap() - 1.0).abs() < 1e-15);

        let p = VirtualObservable::given(CMatrix::from_real_diag(&[0.1, 0.2])).unwrap();
        let df = CMatrix::from_real_diag(&[0.778, 0.222]);
        assert!((lyapunov_value(&p, &df).unwrap() - 0.1222).abs() < 1e-12);

        let rho_f = DensityMatrix::from_ket(&psi_f_51()).unwrap();
        assert!((lyapunov_value(&p51(), &rho_f).unwrap() - 0.2).abs() < 1e-9);

        assert!(lyapunov_value(&p, &CMatrix::identity(3)).is_err());
    }

    #[test]
    fn fields_vanish_when_commuting() {
        let p = VirtualObservable::given(CMatrix::from_real_diag(&[0.1, 0.2])).unwrap();
        let rho = CMatrix::from_real_diag(&[0.6, 0.4]);
        let f = control_fields(0.0, &p, &rho, &[CMatrix::pauli_x()], &[3.0]).unwrap();
        assert_eq!(f.values, vec![0.0]);
    }

    #[test]
    fn fields_at_superposition_setup() {
        // i[rho0, P] = 0.438 sy for the real symmetric pair.
        let f = control_fields(0.0, &p51(), &rho0_51(), &[CMatrix::pauli_x()], &[0.1]).unwrap();
        assert!(f.values[0].abs() < 1e-15);

        // H_1 = -sy: f = -k tr(i H [P, rho]) = k tr(-sy * 0.438 sy) = -0.0876.
        let h = CMatrix::pauli_y().scale(-1.0);
        let f = control_fields(0.0, &p51(), &rho0_51(), std::slice::from_ref(&h), &[0.1]).unwrap();
        assert!((f.values[0] + 0.0876).abs() < 1e-4, "{:?}", f.values);
        let rate = lyapunov_rate(&p51(), &rho0_51(), &[h], &f.values).unwrap();
        assert!((rate + f.values[0].powi(2) / 0.1).abs() < 1e-15);
        assert!(rate < 0.0);
    }

    #[test]
    fn rate_examples() {
        let hs = [CMatrix::pauli_x(), CMatrix::pauli_y()];
        assert_eq!(lyapunov_rate(&p51(), &rho0_51(), &hs, &[0.0, 0.0]).unwrap(), 0.0);
        let gains = [0.4, 2.5];
        let f = control_fields(1.0, &p51(), &rho0_51(), &hs, &gains).unwrap();
        let rate = lyapunov_rate(&p51(), &rho0_51(), &hs, &f.values).unwrap();
        let want: f64 = -f.values.iter().zip(&gains).map(|(f, k)| f * f / k).sum::<f64>();
        assert!((rate - want).abs() < 1e-14);
        assert!(rate <= 0.0);

        assert!(matches!(
            lyapunov_rate(&p51(), &rho0_51(), &hs, &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            control_fields(0.0, &p51(), &rho0_51(), &hs, &[1.0, -1.0]),
            Err(Error::NegativeGain(_))
        ));
    }

    #[test]
    fn feedback_rejects_complex_trace() {
        // A non-Hermitian "control" makes tr(i H [rho, P]) complex.
        let h = CMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let err = control_fields(0.0, &p51(), &rho0_51(), &[h], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::ImaginaryResidue(_)));
    }

    #[test]
    fn curvature_examples() {
        let rf = CMatrix::from_real_diag(&[0.778, 0.222]);
        let sx = [CMatrix::pauli_x()];

        // P aligned with rho_f is a maximum along sx, not a minimum.
        let aligned = VirtualObservable::given(rf.clone()).unwrap();
        assert!(curvature_at_target(&aligned, &rf, &sx).unwrap() <= 0.0);

        // (l1 - l2)(p1 - p2) = 0.556 * (-0.1) < 0.
        let p = VirtualObservable::given(CMatrix::from_real_diag(&[0.1, 0.2])).unwrap();
        let c = curvature_at_target(&p, &rf, &sx).unwrap();
        // Oracle: -2 (l1 - l2)(p1 - p2) |H_12|^2.
        assert!((c - 2.0 * 0.556 * 0.1).abs() < 1e-12, "{c}");

        let mixed = CMatrix::identity(2).scale(0.5);
        assert_eq!(curvature_at_target(&p, &mixed, &sx).unwrap(), 0.0);

        let not_stationary = CMatrix::from_real_rows(&[&[0.5, 0.2], &[0.2, 0.5]]).unwrap();
        assert!(matches!(
            curvature_at_target(&p, &not_stationary, &sx),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn gauge_shift_leaves_fields_unchanged() {
        let hs = [CMatrix::pauli_x(), CMatrix::pauli_y()];
        let base = control_fields(0.0, &p51(), &rho0_51(), &hs, &[1.0, 1.0]).unwrap();
        for c in [-0.15, 0.0, 2.0, 17.5] {
            let shifted = p51().shifted(c).unwrap();
            let f = control_fields(0.0, &shifted, &rho0_51(), &hs, &[1.0, 1.0]).unwrap();
            for (a, b) in f.values.iter().zip(&base.values) {
                assert!((a - b).abs() < 1e-12);
            }
            let dv = lyapunov_value(&shifted, &rho0_51()).unwrap() - lyapunov_value(&p51(), &rho0_51()).unwrap();
            assert!((dv - c).abs() < 1e-12);
        }
    }
}
