//! verify, design, simulate, replay.

use serde::Serialize;

use qorbit_core::designer::{self, ConvergenceCertificate};
use qorbit_core::lyapunov::{Provenance, VirtualObservable};
use qorbit_core::model::{DensityMatrix, Frame, FrameKind, SystemModel};
use qorbit_core::simulator::{self, SimConfig, Trajectory};
use qorbit_core::verify::{self, AssumptionReport};
use qorbit_core::{CMatrix, C64};

use crate::config::{PSpec, Scenario, StateSpec};
use crate::error::CliError;

/// `v` level whose first crossing is reported.
pub const V_THRESHOLD: f64 = 1e-4;
/// Radius tolerance of the orbit-entry diagnostic.
pub const ORBIT_TOL: f64 = 5e-3;

/// Everything fixed before integration starts.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub model: SystemModel,
    pub frame: Frame,
    pub report: AssumptionReport,
    pub p: VirtualObservable,
    pub certificate: ConvergenceCertificate,
    pub cfg: SimConfig,
    /// Set when `--force` carried the run past failed assumptions.
    pub forced: bool,
}

fn frame_state(frame: &Frame, rho_lab: &CMatrix) -> Result<DensityMatrix, CliError> {
    DensityMatrix::new(frame.to_frame(rho_lab, 0.0).hermitian_part()).map_err(CliError::Design)
}

/// Runs the assumption checks only.
pub fn check(scenario: &Scenario) -> Result<(SystemModel, AssumptionReport), CliError> {
    let model = scenario.build_model()?;
    let report = verify::check_assumptions(&model, scenario.verify.tol, scenario.verify.equivalence_tol())
        .map_err(CliError::Design)?;
    Ok((model, report))
}

pub fn describe_failures(report: &AssumptionReport) -> String {
    let mut parts = Vec::new();
    if let Some(w) = &report.strongly_regular.witness {
        parts.push(format!("H0 is not strongly regular ({w:?})"));
    }
    if let Some(p) = &report.fully_connected.partition {
        parts.push(format!("controls are not fully connected (levels split as {p:?})"));
    }
    if !report.unitarily_equivalent.ok {
        parts.push(format!(
            "initial state and target are not unitarily equivalent (spectra {:?} vs {:?})",
            report.unitarily_equivalent.spectrum_a, report.unitarily_equivalent.spectrum_b
        ));
    }
    parts.join("; ")
}

fn superposition_target(scenario: &Scenario, frame: &Frame, target: &DensityMatrix) -> Result<Vec<C64>, CliError> {
    if let (StateSpec::Ket(psi), FrameKind::Interaction) = (&scenario.model.rho_f0, frame.kind()) {
        return Ok(psi.clone());
    }
    if target.purity() < 1.0 - 1e-9 {
        return Err(CliError::Design(qorbit_core::Error::Precondition(
            "a superposition design needs a pure target".into(),
        )));
    }
    let eig = qorbit_core::hermat::eig_hermitian(target.matrix()).map_err(|e| CliError::Design(e.into()))?;
    Ok(eig.vector(0))
}

fn build_p(scenario: &Scenario, frame: &Frame, target: &DensityMatrix, rho0: &DensityMatrix) -> Result<VirtualObservable, CliError> {
    let n = target.dim();
    let p = match &scenario.p {
        PSpec::Explicit(m) => {
            if m.dim() != n {
                return Err(CliError::Parse(format!("P is {0}x{0} for an n = {n} model", m.dim())));
            }
            VirtualObservable::new(m.clone(), Provenance::Given)
        }
        PSpec::Superposition(params) => {
            let psi_f = superposition_target(scenario, frame, target)?;
            designer::design_superposition_p(&psi_f, rho0, params)
        }
        PSpec::Diagonal => {
            let tol = scenario.verify.equivalence_tol();
            let equiv = verify::unitary_equivalent(rho0.matrix(), target.matrix(), tol).map_err(CliError::Design)?;
            let u = equiv
                .unitary
                .ok_or(CliError::Design(qorbit_core::Error::NotEquivalent(equiv.mismatch)))?;
            designer::design_diagonal_p(target, rho0, &u, tol)
        }
    };
    p.map_err(CliError::Design)
}

/// Verifies, builds `P` and certifies it. Failed assumptions abort unless
/// `force` is set.
pub fn prepare(scenario: &Scenario, force: bool) -> Result<Prepared, CliError> {
    let (model, report) = check(scenario)?;
    let forced = !report.all_ok();
    if forced && !force {
        return Err(CliError::Assumption(describe_failures(&report)));
    }
    let kind = scenario.frame_kind(&model);
    let cfg = scenario.sim_config(kind)?;
    let frame = Frame::of_kind(&model, kind).map_err(CliError::Design)?;
    let target = frame_state(&frame, model.rho_f0().matrix())?;
    let rho0 = frame_state(&frame, model.rho0().matrix())?;
    let p = build_p(scenario, &frame, &target, &rho0)?;
    let certificate = designer::certify(&p, &target, &rho0, &report).map_err(CliError::Design)?;
    Ok(Prepared {
        model,
        frame,
        report,
        p,
        certificate,
        cfg,
        forced,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub frame: FrameKind,
    pub dt: f64,
    pub t_final: f64,
    pub final_v: f64,
    #[serde(rename = "final_V")]
    pub final_lyapunov: f64,
    pub max_trace_drift: f64,
    pub max_purity_drift: f64,
    pub max_v_increase: Option<f64>,
    pub orbit_entry_time: Option<f64>,
    pub time_to_threshold: Option<f64>,
    pub replay_final_v: f64,
    pub certificate_passed: bool,
    pub forced: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub prepared: Prepared,
    pub trajectory: Trajectory,
    pub replay: Trajectory,
    pub summary: Summary,
}

/// The full pipeline without touching the file system.
pub fn execute(scenario: &Scenario, force: bool) -> Result<RunOutput, CliError> {
    let prepared = prepare(scenario, force)?;
    let trajectory = simulator::propagate_closed_loop(&prepared.model, &prepared.frame, &prepared.p, &prepared.cfg)
        .map_err(CliError::Integrator)?;
    let replay = simulator::replay_open_loop(&prepared.model, &trajectory.field_record, &prepared.cfg)
        .map_err(CliError::Integrator)?;
    let conservation = simulator::conservation_report(&trajectory);
    let last = trajectory.last();
    let summary = Summary {
        name: scenario.name.clone(),
        frame: prepared.frame.kind(),
        dt: prepared.cfg.dt,
        t_final: last.t,
        final_v: last.perf_index,
        final_lyapunov: last.lyapunov.expect("closed-loop samples carry V"),
        max_trace_drift: conservation.max_trace_drift,
        max_purity_drift: conservation.max_purity_drift,
        max_v_increase: conservation.max_v_increase,
        orbit_entry_time: simulator::orbit_entry_time(&trajectory, ORBIT_TOL),
        time_to_threshold: simulator::time_to_threshold(&trajectory, V_THRESHOLD),
        replay_final_v: replay.last().perf_index,
        certificate_passed: prepared.certificate.passed,
        forced: prepared.forced,
    };
    Ok(RunOutput {
        prepared,
        trajectory,
        replay,
        summary,
    })
}
