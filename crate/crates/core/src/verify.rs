//! Checks of the standing assumptions: strongly regular drift, fully
//! connected controls, and an initial state on the target's unitary orbit.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::hermat::{self, eig_hermitian, CMatrix};
use crate::model::SystemModel;
use crate::Result;

/// Default tolerance for spectral comparisons.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Why a drift Hamiltonian is not strongly regular. Levels are 1-based in
/// ascending energy order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegularityWitness {
    /// Two levels share an energy.
    Degenerate { levels: (usize, usize), gap: f64 },
    /// Two transitions share a frequency.
    Clash {
        first: (usize, usize),
        second: (usize, usize),
        gap: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityCheck {
    pub ok: bool,
    pub witness: Option<RegularityWitness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityCheck {
    pub ok: bool,
    /// Connected components of the coupling graph (1-based levels in the
    /// drift eigenbasis), present only when there is more than one.
    pub partition: Option<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    pub ok: bool,
    /// Descending spectra of the two states.
    pub spectrum_a: Vec<f64>,
    pub spectrum_b: Vec<f64>,
    /// Largest elementwise spectral difference.
    pub mismatch: f64,
    /// `U` with `a = U b U^dagger`, when `ok`.
    #[serde(skip)]
    pub unitary: Option<CMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub strongly_regular: RegularityCheck,
    pub fully_connected: ConnectivityCheck,
    pub unitarily_equivalent: EquivalenceCheck,
}

impl AssumptionReport {
    pub fn flags(&self) -> [bool; 3] {
        [
            self.strongly_regular.ok,
            self.fully_connected.ok,
            self.unitarily_equivalent.ok,
        ]
    }

    pub fn all_ok(&self) -> bool {
        self.flags().iter().all(|b| *b)
    }
}

/// All transition frequencies `l_j - l_k` (j > k, ascending levels) must be
/// nonzero and pairwise separated by more than `tol`.
pub fn strong_regularity(h0: &CMatrix, tol: f64) -> Result<RegularityCheck> {
    let mut levels = eig_hermitian(h0)?.values;
    levels.reverse();
    let n = levels.len();
    let mut transitions = Vec::with_capacity(n * (n - 1) / 2);
    for j in 1..n {
        for k in 0..j {
            let gap = levels[j] - levels[k];
            if gap <= tol {
                return Ok(RegularityCheck {
                    ok: false,
                    witness: Some(RegularityWitness::Degenerate {
                        levels: (k + 1, j + 1),
                        gap,
                    }),
                });
            }
            transitions.push(((j + 1, k + 1), gap));
        }
    }
    for (a, &(first, da)) in transitions.iter().enumerate() {
        for &(second, db) in &transitions[a + 1..] {
            if (da - db).abs() <= tol {
                return Ok(RegularityCheck {
                    ok: false,
                    witness: Some(RegularityWitness::Clash {
                        first,
                        second,
                        gap: (da - db).abs(),
                    }),
                });
            }
        }
    }
    Ok(RegularityCheck { ok: true, witness: None })
}

/// Connectivity of the graph whose edges are the level pairs coupled by
/// some control, with matrix elements taken in the eigenbasis of `h0`.
pub fn fully_connected(h0: &CMatrix, hms: &[CMatrix], tol: f64) -> Result<ConnectivityCheck> {
    let eig = eig_hermitian(h0)?;
    // Ascending energy, matching the level numbering of strong_regularity.
    let n = eig.dim();
    let b = CMatrix::from_fn(n, |i, j| eig.basis[(i, n - 1 - j)]);
    let bd = b.adjoint();
    let mut adjacent = vec![vec![false; n]; n];
    for h in hms {
        let hb = hermat::unitary_conjugate(&bd, h)?;
        for j in 0..n {
            for k in 0..n {
                if j != k && hb[(j, k)].norm() > tol {
                    adjacent[j][k] = true;
                }
            }
        }
    }
    let mut component = vec![usize::MAX; n];
    let mut parts: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = parts.len();
        let mut members = Vec::new();
        let mut queue = VecDeque::from([start]);
        component[start] = id;
        while let Some(j) = queue.pop_front() {
            members.push(j + 1);
            for k in 0..n {
                if adjacent[j][k] && component[k] == usize::MAX {
                    component[k] = id;
                    queue.push_back(k);
                }
            }
        }
        members.sort_unstable();
        parts.push(members);
    }
    Ok(if parts.len() == 1 {
        ConnectivityCheck { ok: true, partition: None }
    } else {
        ConnectivityCheck { ok: false, partition: Some(parts) }
    })
}

/// Compares sorted spectra. When they agree within `tol` the transporting
/// unitary `B_a B_b^dagger` is returned as well.
pub fn unitary_equivalent(a: &CMatrix, b: &CMatrix, tol: f64) -> Result<EquivalenceCheck> {
    if a.dim() != b.dim() {
        return Err(hermat::LinalgError::DimensionMismatch(a.dim(), b.dim()).into());
    }
    let ea = eig_hermitian(a)?;
    let eb = eig_hermitian(b)?;
    let mismatch = ea
        .values
        .iter()
        .zip(&eb.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let ok = mismatch <= tol;
    let unitary = ok.then(|| &ea.basis * &eb.basis.adjoint());
    Ok(EquivalenceCheck {
        ok,
        spectrum_a: ea.values,
        spectrum_b: eb.values,
        mismatch,
        unitary,
    })
}

/// Runs all three checks on a model. `equivalence_tol` applies to the
/// spectral comparison of the initial and target states only.
pub fn check_assumptions(model: &SystemModel, tol: f64, equivalence_tol: f64) -> Result<AssumptionReport> {
    Ok(AssumptionReport {
        strongly_regular: strong_regularity(model.h0(), tol)?,
        fully_connected: fully_connected(model.h0(), model.controls(), tol)?,
        unitarily_equivalent: unitary_equivalent(
            model.rho0().matrix(),
            model.rho_f0().matrix(),
            equivalence_tol,
        )?,
    })
}
