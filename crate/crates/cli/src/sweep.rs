//! One-parameter sweeps over a scenario, run in parallel.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::config::{PSpec, Scenario};
use crate::error::CliError;
use crate::pipeline;

/// What a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Param {
    /// Weight `g_k`, k >= 2, of a superposition design.
    Weight(usize),
    /// Every gain at once.
    AllGains,
    /// Gain of control `m`, 1-based.
    Gain(usize),
    Dt,
}

impl Param {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Parse(format!("unknown sweep parameter {s:?}; expected g<k>, k, k<m> or dt"));
        let index = |rest: &str| rest.parse::<usize>().map_err(|_| bad());
        match s {
            "dt" => Ok(Param::Dt),
            "k" => Ok(Param::AllGains),
            _ if s.starts_with('g') => {
                let k = index(&s[1..])?;
                if k < 2 {
                    return Err(CliError::Parse(format!("{s}: weights are numbered from g2")));
                }
                Ok(Param::Weight(k))
            }
            _ if s.starts_with('k') => {
                let m = index(&s[1..])?;
                if m == 0 {
                    return Err(bad());
                }
                Ok(Param::Gain(m))
            }
            _ => Err(bad()),
        }
    }

    /// Copy of `base` with the parameter set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario, CliError> {
        let mut s = base.clone();
        match self {
            Param::Dt => s.sim.dt = value,
            Param::AllGains => s.model.gains.iter_mut().for_each(|g| *g = value),
            Param::Gain(m) => {
                let count = s.model.gains.len();
                *s.model
                    .gains
                    .get_mut(m - 1)
                    .ok_or_else(|| CliError::Parse(format!("k{m}: the model has {count} controls")))? = value;
            }
            Param::Weight(k) => match &mut s.p {
                PSpec::Superposition(params) => {
                    let count = params.weights.len();
                    *params
                        .weights
                        .get_mut(k - 2)
                        .ok_or_else(|| CliError::Parse(format!("g{k}: the design has {count} weights")))? = value;
                }
                _ => return Err(CliError::Parse(format!("g{k} needs a superposition design"))),
            },
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub value: f64,
    pub time_to_threshold: Option<f64>,
    pub final_v: Option<f64>,
    /// `ok`, or `failed: <class>: <message>`.
    pub status: String,
}

fn run_one(base: &Scenario, param: Param, value: f64, force: bool) -> Row {
    let result = param.apply(base, value).and_then(|s| pipeline::execute(&s, force));
    match result {
        Ok(out) => Row {
            value,
            time_to_threshold: out.summary.time_to_threshold,
            final_v: Some(out.summary.final_v),
            status: "ok".into(),
        },
        Err(e) => Row {
            value,
            time_to_threshold: None,
            final_v: None,
            status: format!("failed: {}: {e}", e.class()),
        },
    }
}

fn threads(jobs: usize) -> usize {
    let cap = std::env::var("QORBIT_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(jobs).max(1)
}

/// Runs every value; failed points are reported in their row and do not
/// stop the sweep. Rows come back in input order.
pub fn run(base: &Scenario, param: Param, values: &[f64], t_final: Option<f64>, force: bool) -> Result<Vec<Row>, CliError> {
    let mut base = base.clone();
    if let Some(t) = t_final {
        base.sim.t_final = t;
    }
    // Reject bad parameter names before spawning anything.
    if let Some(&v) = values.first() {
        param.apply(&base, v)?;
    }
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<Row>>> = Mutex::new(vec![None; values.len()]);
    std::thread::scope(|scope| {
        for _ in 0..threads(values.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&v) = values.get(i) else { break };
                let row = run_one(&base, param, v, force);
                rows.lock().expect("no panics while holding the lock")[i] = Some(row);
            });
        }
    });
    Ok(rows
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every index was claimed"))
        .collect())
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.16e}"))
}

pub fn to_csv(param: &str, rows: &[Row]) -> String {
    let mut s = format!("{param},time_to_1e-4,final_v,status\n");
    for r in rows {
        let status = r.status.replace(['"', '\n'], " ");
        s += &format!("{:.16e},{},{},\"{status}\"\n", r.value, opt(r.time_to_threshold), opt(r.final_v));
    }
    s
}

pub fn parse_values(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Parse(format!("bad sweep value {v:?}")))
        })
        .collect()
}
