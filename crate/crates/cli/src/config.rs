//! Scenario documents.
//!
//! A scenario is a JSON object. Complex numbers are `[re, im]` pairs and
//! matrices are row-major nested arrays of them:
//!
//! ```json
//! {
//!   "name": "pure",
//!   "model": {
//!     "h0": [[[1, 0], [0, 0]], [[0, 0], [-1, 0]]],
//!     "controls": [[[[0, 0], [1, 0]], [[1, 0], [0, 0]]]],
//!     "gains": [0.1],
//!     "rho0": {"ket": [[0.6, 0], [0.8, 0]]},
//!     "rho_f0": {"density": [[[0.5, 0], [0.5, 0]], [[0.5, 0], [0.5, 0]]]}
//!   },
//!   "p": {"superposition": {"p1": 0.2, "weights": [10]}},
//!   "sim": {"t_final": 50, "sample_stride": 100}
//! }
//! ```
//!
//! `p` is one of `{"explicit": matrix}`, `{"superposition": params}` or
//! `"diagonal"`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qorbit_core::designer::DesignParams;
use qorbit_core::model::{DensityMatrix, FrameKind, SystemModel};
use qorbit_core::simulator::SimConfig;
use qorbit_core::{CMatrix, C64};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpec {
    Ket(Vec<C64>),
    Density(CMatrix),
}

impl StateSpec {
    pub fn to_density(&self) -> qorbit_core::Result<DensityMatrix> {
        match self {
            StateSpec::Ket(psi) => DensityMatrix::from_ket(psi),
            StateSpec::Density(m) => DensityMatrix::new(m.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub h0: CMatrix,
    pub controls: Vec<CMatrix>,
    pub gains: Vec<f64>,
    pub rho0: StateSpec,
    pub rho_f0: StateSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PSpec {
    Explicit(CMatrix),
    Superposition(DesignParams),
    Diagonal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameChoice {
    /// Diagonalized for mixed targets, interaction otherwise.
    #[default]
    Auto,
    Interaction,
    Diagonalized,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_stride() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    #[serde(default)]
    pub frame: FrameChoice,
    #[serde(default = "yes")]
    pub hermitize: bool,
}

fn default_tol() -> f64 {
    qorbit_core::verify::DEFAULT_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Tolerance of the spectral comparison between the initial state and
    /// the target; `tol` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence_tol: Option<f64>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            equivalence_tol: None,
        }
    }
}

impl VerifySpec {
    pub fn equivalence_tol(&self) -> f64 {
        self.equivalence_tol.unwrap_or(self.tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: ModelSpec,
    pub p: PSpec,
    pub sim: SimSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    /// Output directory, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(format!("invalid scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios serialize")
    }

    pub fn build_model(&self) -> Result<SystemModel, CliError> {
        let bad = |what: &str, e: qorbit_core::Error| CliError::Parse(format!("{what}: {e}"));
        let m = &self.model;
        SystemModel::new(
            m.h0.clone(),
            m.controls.clone(),
            m.gains.clone(),
            m.rho0.to_density().map_err(|e| bad("rho0", e))?,
            m.rho_f0.to_density().map_err(|e| bad("rho_f0", e))?,
        )
        .map_err(|e| bad("model", e))
    }

    /// Resolves `auto` against the target's purity.
    pub fn frame_kind(&self, model: &SystemModel) -> FrameKind {
        match self.sim.frame {
            FrameChoice::Interaction => FrameKind::Interaction,
            FrameChoice::Diagonalized => FrameKind::Diagonalized,
            FrameChoice::Auto => {
                if model.rho_f0().purity() < 1.0 - 1e-9 {
                    FrameKind::Diagonalized
                } else {
                    FrameKind::Interaction
                }
            }
        }
    }

    pub fn sim_config(&self, frame: FrameKind) -> Result<SimConfig, CliError> {
        let cfg = SimConfig {
            dt: self.sim.dt,
            t_final: self.sim.t_final,
            sample_stride: self.sim.sample_stride,
            frame,
            hermitize: self.sim.hermitize,
        };
        cfg.steps().map_err(|e| CliError::Parse(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "m",
        "model": {
            "h0": [[[1, 0], [0, 0]], [[0, 0], [-1, 0]]],
            "controls": [[[[0, 0], [1, 0]], [[1, 0], [0, 0]]]],
            "gains": [0.5],
            "rho0": {"ket": [[0.6, 0], [0.8, 0]]},
            "rho_f0": {"density": [[[0.7, 0], [0, 0]], [[0, 0], [0.3, 0]]]}
        },
        "p": "diagonal",
        "sim": {"t_final": 2}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.sim.dt, 1e-3);
        assert_eq!(s.sim.sample_stride, 1);
        assert!(s.sim.hermitize);
        assert_eq!(s.sim.frame, FrameChoice::Auto);
        assert_eq!(s.verify.tol, 1e-8);
        assert_eq!(s.verify.equivalence_tol(), 1e-8);
        assert_eq!(s.p, PSpec::Diagonal);
        let model = s.build_model().unwrap();
        assert_eq!(s.frame_kind(&model), FrameKind::Diagonalized);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = MINIMAL.replace("\"t_final\": 2", "\"t_final\": 2, \"tfinal\": 3");
        assert!(matches!(Scenario::from_json(&bad), Err(CliError::Parse(_))));
    }

    #[test]
    fn invalid_state_is_a_parse_error() {
        let bad = MINIMAL.replace("[0.8, 0]]}", "[0.9, 0]]}");
        let s = Scenario::from_json(&bad).unwrap();
        assert!(matches!(s.build_model(), Err(CliError::Parse(_))));
    }
}
