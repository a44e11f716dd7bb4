//! Fixed-step RK4 integration of the closed loop, open-loop replay of a
//! recorded field, and tracking diagnostics.
//!
//! Every integrator here advances `d rho/dt = -i [G(t, rho), rho]` for some
//! generator `G`; they differ only in how `G` is formed:
//!
//! * [`propagate_closed_loop`]: `sum_m f_m H_m(t)` in a rotating frame,
//!   with the fields recomputed from the stage state at every RK4 stage.
//! * [`propagate_lab_closed_loop`]: `H0 + sum_m f_m H_m` in the lab frame
//!   with the same feedback written for `S(t)^dagger P S(t)`.
//! * [`replay_open_loop`]: `H0 + sum_m f_m H_m` with `f_m` held from a
//!   recorded field for the whole step.

use serde::{Deserialize, Serialize};

use crate::hermat::{self, eig_hermitian, CMatrix, C64};
use crate::lyapunov::{self, FieldSample, VirtualObservable};
use crate::model::{purity, Frame, FrameKind, SystemModel};
use crate::{Error, Result};

/// Trace drift or eigenvalue undershoot beyond this aborts a run.
pub const ABORT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Record every `sample_stride`-th step. The final step is always
    /// recorded.
    pub sample_stride: usize,
    pub frame: FrameKind,
    /// Replace the state by its Hermitian part after every step.
    pub hermitize: bool,
}

impl SimConfig {
    pub fn new(t_final: f64, frame: FrameKind) -> Self {
        Self {
            dt: 1e-3,
            t_final,
            sample_stride: 1,
            frame,
            hermitize: true,
        }
    }

    /// Number of steps, `round(t_final / dt)`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(Error::Config(format!(
                "t_final = {} must be at least dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.sample_stride == 0 {
            return Err(Error::Config("sample_stride must be at least 1".into()));
        }
        Ok((self.t_final / self.dt).round() as usize)
    }
}

/// One recorded point of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// State in the frame the run was integrated in.
    pub rho_frame: CMatrix,
    pub rho_lab: CMatrix,
    pub rho_target_lab: CMatrix,
    pub fields: FieldSample,
    /// `tr(P rho)`; absent for open-loop runs.
    pub lyapunov: Option<f64>,
    /// `|rho_lab - rho_target_lab|_F^2`.
    pub perf_index: f64,
    pub purity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Step-start fields of every step, at `t = j dt`.
    pub field_record: Vec<FieldSample>,
    pub dt: f64,
    pub frame: FrameKind,
    /// Largest single-step increase of `V` (closed loop only).
    pub max_v_increase: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories are nonempty")
    }
}

fn rhs(g: &CMatrix, rho: &CMatrix) -> CMatrix {
    (&(g * rho) - &(rho * g)).scale_c(C64::new(0.0, -1.0))
}

fn axpy(rho: &CMatrix, k: &CMatrix, h: f64) -> CMatrix {
    rho + &k.scale(h)
}

fn weighted_sum(base: &CMatrix, terms: &[(&CMatrix, f64)], h: f64) -> CMatrix {
    let mut out = base.clone();
    for (k, w) in terms {
        out = &out + &k.scale(w * h);
    }
    out
}

/// Generator, fields and Lyapunov value for one integrator.
trait Dynamics {
    type Ctx;
    /// Time-dependent data for stage time `t` of step `j`.
    fn context(&self, j: usize, t: f64) -> Result<Self::Ctx>;
    fn generator(&self, ctx: &Self::Ctx, rho: &CMatrix) -> Result<(CMatrix, Vec<f64>)>;
    fn lyapunov(&self, ctx: &Self::Ctx, rho: &CMatrix) -> Option<f64>;
    fn sample(&self, t: f64, rho: &CMatrix, fields: FieldSample, lyapunov: Option<f64>) -> Sample;
}

fn check_state(t: f64, rho: &CMatrix) -> Result<()> {
    if rho.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::IntegratorAbort {
            t,
            reason: "state is not finite".into(),
        });
    }
    let drift = (rho.trace().re - 1.0).abs();
    if drift > ABORT_TOL {
        return Err(Error::IntegratorAbort {
            t,
            reason: format!("trace drift {drift:e}"),
        });
    }
    let min = *eig_hermitian(&rho.hermitian_part())?.values.last().expect("n >= 1");
    if min < -ABORT_TOL {
        return Err(Error::IntegratorAbort {
            t,
            reason: format!("negative eigenvalue {min:e}"),
        });
    }
    Ok(())
}

fn drive<D: Dynamics>(dynamics: &D, rho0: CMatrix, cfg: &SimConfig, frame: FrameKind) -> Result<Trajectory> {
    let n_steps = cfg.steps()?;
    let dt = cfg.dt;
    let mut rho = rho0;
    let mut samples = Vec::with_capacity(n_steps / cfg.sample_stride + 2);
    let mut field_record = Vec::with_capacity(n_steps);
    let mut v_prev: Option<f64> = None;
    let mut max_inc: Option<f64> = None;

    for j in 0..n_steps {
        let t = j as f64 * dt;
        let c1 = dynamics.context(j, t)?;
        let v = dynamics.lyapunov(&c1, &rho);
        if let (Some(a), Some(b)) = (v_prev, v) {
            let inc = b - a;
            max_inc = Some(max_inc.map_or(inc, |m: f64| m.max(inc)));
        }
        v_prev = v;

        let (g1, f1) = dynamics.generator(&c1, &rho)?;
        let fields = FieldSample { t, values: f1 };
        if j % cfg.sample_stride == 0 {
            samples.push(dynamics.sample(t, &rho, fields.clone(), v));
        }
        field_record.push(fields);

        let k1 = rhs(&g1, &rho);
        let c2 = dynamics.context(j, t + 0.5 * dt)?;
        let r2 = axpy(&rho, &k1, 0.5 * dt);
        let k2 = rhs(&dynamics.generator(&c2, &r2)?.0, &r2);
        let r3 = axpy(&rho, &k2, 0.5 * dt);
        let k3 = rhs(&dynamics.generator(&c2, &r3)?.0, &r3);
        let c4 = dynamics.context(j, t + dt)?;
        let r4 = axpy(&rho, &k3, dt);
        let k4 = rhs(&dynamics.generator(&c4, &r4)?.0, &r4);
        rho = weighted_sum(&rho, &[(&k1, 1.0), (&k2, 2.0), (&k3, 2.0), (&k4, 1.0)], dt / 6.0);
        if cfg.hermitize {
            rho = rho.hermitian_part();
        }
        check_state(t + dt, &rho)?;
    }

    let t = n_steps as f64 * dt;
    let c = dynamics.context(n_steps, t)?;
    let v = dynamics.lyapunov(&c, &rho);
    if let (Some(a), Some(b)) = (v_prev, v) {
        let inc = b - a;
        max_inc = Some(max_inc.map_or(inc, |m: f64| m.max(inc)));
    }
    let (_, f) = dynamics.generator(&c, &rho)?;
    samples.push(dynamics.sample(t, &rho, FieldSample { t, values: f }, v));

    Ok(Trajectory {
        samples,
        field_record,
        dt,
        frame,
        max_v_increase: max_inc,
    })
}

fn combine(base: Option<&CMatrix>, hms: &[CMatrix], fields: &[f64], n: usize) -> CMatrix {
    let mut g = base.cloned().unwrap_or_else(|| CMatrix::zeros(n));
    for (h, f) in hms.iter().zip(fields) {
        if *f != 0.0 {
            g = &g + &h.scale(*f);
        }
    }
    g
}

struct FrameLoop<'a> {
    frame: &'a Frame,
    p: &'a VirtualObservable,
    gains: &'a [f64],
}

impl Dynamics for FrameLoop<'_> {
    type Ctx = (f64, Vec<CMatrix>);

    fn context(&self, _j: usize, t: f64) -> Result<Self::Ctx> {
        Ok((t, self.frame.control_hamiltonians(t)))
    }

    fn generator(&self, (t, hms): &Self::Ctx, rho: &CMatrix) -> Result<(CMatrix, Vec<f64>)> {
        let f = lyapunov::control_fields(*t, self.p, rho, hms, self.gains)?.values;
        Ok((combine(None, hms, &f, rho.dim()), f))
    }

    fn lyapunov(&self, _ctx: &Self::Ctx, rho: &CMatrix) -> Option<f64> {
        Some(hermat::trace_product_unchecked(self.p.matrix(), rho).re)
    }

    fn sample(&self, t: f64, rho: &CMatrix, fields: FieldSample, lyapunov: Option<f64>) -> Sample {
        let rho_lab = self.frame.to_lab(rho, t);
        let target = self.frame.free_target_state(t).into_matrix();
        Sample {
            t,
            perf_index: performance_index(&rho_lab, &target),
            purity: purity(rho),
            rho_frame: rho.clone(),
            rho_lab,
            rho_target_lab: target,
            fields,
            lyapunov,
        }
    }
}

/// Closed-loop run in the rotating frame `frame`, starting from
/// `S(0) rho0 S(0)^dagger`.
///
/// `cfg.frame` must name the same frame; the Schrodinger picture is not a
/// valid closed-loop frame here (see [`propagate_lab_closed_loop`]).
pub fn propagate_closed_loop(
    model: &SystemModel,
    frame: &Frame,
    p: &VirtualObservable,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    if cfg.frame != frame.kind() {
        return Err(Error::Config(format!(
            "config names the {:?} frame but a {:?} frame was given",
            cfg.frame,
            frame.kind()
        )));
    }
    if frame.kind() == FrameKind::Schrodinger {
        return Err(Error::Config(
            "closed-loop runs need the interaction or diagonalized frame".into(),
        ));
    }
    if p.dim() != model.dim() || frame.dim() != model.dim() {
        return Err(hermat::LinalgError::DimensionMismatch(model.dim(), p.dim()).into());
    }
    let dynamics = FrameLoop {
        frame,
        p,
        gains: model.gains(),
    };
    let rho0 = frame.to_frame(model.rho0().matrix(), 0.0);
    drive(&dynamics, rho0, cfg, frame.kind())
}

struct LabLoop<'a> {
    frame: &'a Frame,
    p: &'a VirtualObservable,
    model: &'a SystemModel,
}

impl Dynamics for LabLoop<'_> {
    /// `(t, S(t)^dagger P S(t))`.
    type Ctx = (f64, CMatrix);

    fn context(&self, _j: usize, t: f64) -> Result<Self::Ctx> {
        let sd = self.frame.unitary(t).adjoint();
        Ok((t, hermat::unitary_conjugate(&sd, self.p.matrix())?))
    }

    fn generator(&self, (_, p_lab): &Self::Ctx, rho: &CMatrix) -> Result<(CMatrix, Vec<f64>)> {
        let hms = self.model.controls();
        let x = lyapunov::feedback_traces_raw(p_lab, rho, hms)?;
        let f: Vec<f64> = x.iter().zip(self.model.gains()).map(|(x, k)| k * x).collect();
        Ok((combine(Some(self.model.h0()), hms, &f, rho.dim()), f))
    }

    fn lyapunov(&self, (_, p_lab): &Self::Ctx, rho: &CMatrix) -> Option<f64> {
        Some(hermat::trace_product_unchecked(p_lab, rho).re)
    }

    fn sample(&self, t: f64, rho: &CMatrix, fields: FieldSample, lyapunov: Option<f64>) -> Sample {
        lab_sample(self.frame, t, rho, fields, lyapunov)
    }
}

fn lab_sample(frame: &Frame, t: f64, rho: &CMatrix, fields: FieldSample, lyapunov: Option<f64>) -> Sample {
    let target = frame.free_target_state(t).into_matrix();
    Sample {
        t,
        perf_index: performance_index(rho, &target),
        purity: purity(rho),
        rho_frame: rho.clone(),
        rho_lab: rho.clone(),
        rho_target_lab: target,
        fields,
        lyapunov,
    }
}

/// The closed loop of [`propagate_closed_loop`] integrated directly in the
/// lab frame, where the drift stays in the generator and `P` rotates as
/// `S(t)^dagger P S(t)`.
///
/// Mathematically this is the same trajectory; numerically it is an
/// independent computation, which makes it an oracle for the frame
/// transformations.
pub fn propagate_lab_closed_loop(
    model: &SystemModel,
    frame: &Frame,
    p: &VirtualObservable,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    if p.dim() != model.dim() || frame.dim() != model.dim() {
        return Err(hermat::LinalgError::DimensionMismatch(model.dim(), p.dim()).into());
    }
    let dynamics = LabLoop { frame, p, model };
    drive(&dynamics, model.rho0().matrix().clone(), cfg, FrameKind::Schrodinger)
}

struct Replay<'a> {
    frame: Frame,
    model: &'a SystemModel,
    record: &'a [FieldSample],
}

impl Dynamics for Replay<'_> {
    /// The held generator and its fields.
    type Ctx = (CMatrix, Vec<f64>);

    fn context(&self, j: usize, _t: f64) -> Result<Self::Ctx> {
        let f = self.record[j.min(self.record.len() - 1)].values.clone();
        Ok((combine(Some(self.model.h0()), self.model.controls(), &f, self.model.dim()), f))
    }

    fn generator(&self, ctx: &Self::Ctx, _rho: &CMatrix) -> Result<(CMatrix, Vec<f64>)> {
        Ok(ctx.clone())
    }

    fn lyapunov(&self, _ctx: &Self::Ctx, _rho: &CMatrix) -> Option<f64> {
        None
    }

    fn sample(&self, t: f64, rho: &CMatrix, fields: FieldSample, lyapunov: Option<f64>) -> Sample {
        lab_sample(&self.frame, t, rho, fields, lyapunov)
    }
}

/// Applies `recorded` to the uncontrolled-frame equation
/// `d rho/dt = -i [H0 + sum_m f_m H_m, rho]` from `rho0`, holding each
/// record for its whole step. The target is evaluated exactly.
pub fn replay_open_loop(model: &SystemModel, recorded: &[FieldSample], cfg: &SimConfig) -> Result<Trajectory> {
    let n_steps = cfg.steps()?;
    if recorded.len() < n_steps {
        return Err(Error::FieldRecord(format!(
            "{} records for {n_steps} steps",
            recorded.len()
        )));
    }
    let m = model.controls().len();
    for (j, r) in recorded.iter().take(n_steps).enumerate() {
        let t = j as f64 * cfg.dt;
        if (r.t - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::FieldRecord(format!("record {j} is at t = {} instead of {t}", r.t)));
        }
        if r.values.len() != m {
            return Err(Error::FieldRecord(format!(
                "record {j} has {} values for {m} controls",
                r.values.len()
            )));
        }
        if r.values.iter().any(|f| !f.is_finite()) {
            return Err(Error::FieldRecord(format!("record {j} is not finite")));
        }
    }
    let dynamics = Replay {
        frame: Frame::schrodinger(model)?,
        model,
        record: &recorded[..n_steps],
    };
    drive(&dynamics, model.rho0().matrix().clone(), cfg, FrameKind::Schrodinger)
}

/// `|rho - target|_F^2`.
pub fn performance_index(rho_lab: &CMatrix, rho_target_lab: &CMatrix) -> f64 {
    hermat::frobenius_distance_sq(rho_lab, rho_target_lab).expect("equal dimensions")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub max_trace_drift: f64,
    /// Against the purity of the first sample.
    pub max_purity_drift: f64,
    pub max_hermiticity_residual: f64,
    /// Largest increase of `V` between consecutive steps (closed loop).
    pub max_v_increase: Option<f64>,
}

/// Worst-case invariant drift over the samples of a trajectory.
pub fn conservation_report(traj: &Trajectory) -> ConservationReport {
    let p0 = traj.samples.first().map_or(1.0, |s| purity(&s.rho_frame));
    let mut r = ConservationReport {
        max_trace_drift: 0.0,
        max_purity_drift: 0.0,
        max_hermiticity_residual: 0.0,
        max_v_increase: traj.max_v_increase,
    };
    for s in &traj.samples {
        let tr = s.rho_frame.trace();
        r.max_trace_drift = r.max_trace_drift.max((tr - C64::new(1.0, 0.0)).norm());
        r.max_purity_drift = r.max_purity_drift.max((purity(&s.rho_frame) - p0).abs());
        r.max_hermiticity_residual = r.max_hermiticity_residual.max(s.rho_frame.hermiticity_residual());
    }
    r
}

/// `sqrt((n tr(rho^2) - 1) / (n - 1))`, the Bloch radius for `n = 2`.
pub fn bloch_radius(rho: &CMatrix) -> f64 {
    let n = rho.dim() as f64;
    ((n * purity(rho) - 1.0) / (n - 1.0)).max(0.0).sqrt()
}

/// First sample time at which the radius of the controlled state is within
/// `tol` of the target's.
pub fn orbit_entry_time(traj: &Trajectory, tol: f64) -> Option<f64> {
    traj.samples
        .iter()
        .find(|s| (bloch_radius(&s.rho_lab) - bloch_radius(&s.rho_target_lab)).abs() < tol)
        .map(|s| s.t)
}

/// First sample time with `v <= threshold`.
pub fn time_to_threshold(traj: &Trajectory, threshold: f64) -> Option<f64> {
    traj.samples.iter().find(|s| s.perf_index <= threshold).map(|s| s.t)
}
