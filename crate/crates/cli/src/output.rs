//! `trajectory.csv`, `certificate.json` and `summary.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use qorbit_core::designer::ConvergenceCertificate;
use qorbit_core::lyapunov::Provenance;
use qorbit_core::model::{BlochVector, FrameKind};
use qorbit_core::simulator::Trajectory;
use qorbit_core::verify::AssumptionReport;
use qorbit_core::CMatrix;

use crate::error::CliError;
use crate::pipeline::RunOutput;

fn header(n: usize, m: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=m).map(|k| format!("f_{k}")));
    cols.extend(["V", "v", "purity"].map(String::from));
    if n == 2 {
        cols.extend(["bx", "by", "bz", "tbx", "tby", "tbz"].map(String::from));
    } else {
        for prefix in ["", "t"] {
            for i in 1..=n {
                for j in i..=n {
                    cols.push(format!("{prefix}re_{i}_{j}"));
                    cols.push(format!("{prefix}im_{i}_{j}"));
                }
            }
        }
    }
    cols
}

fn state_columns(rho: &CMatrix, out: &mut Vec<f64>) {
    let n = rho.dim();
    if n == 2 {
        let b = BlochVector::of_matrix(rho).expect("two-level");
        out.extend([b.x, b.y, b.z]);
    } else {
        for i in 0..n {
            for j in i..n {
                out.push(rho[(i, j)].re);
                out.push(rho[(i, j)].im);
            }
        }
    }
}

/// One row per sample, floats with 17 significant digits.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let first = &traj.samples[0];
    let n = first.rho_lab.dim();
    let m = first.fields.values.len();
    let mut s = header(n, m).join(",");
    s.push('\n');
    let mut row = Vec::new();
    for sample in &traj.samples {
        row.clear();
        row.push(sample.t);
        row.extend(&sample.fields.values);
        row.push(sample.lyapunov.unwrap_or(f64::NAN));
        row.push(sample.perf_index);
        row.push(sample.purity);
        state_columns(&sample.rho_lab, &mut row);
        state_columns(&sample.rho_target_lab, &mut row);
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{x:.16e}").expect("writing to a String");
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
pub struct CertificateDocument<'a> {
    pub scenario: &'a str,
    pub frame: FrameKind,
    pub provenance: Provenance,
    pub p: &'a CMatrix,
    pub p_eigenvalues: &'a [f64],
    pub assumptions: &'a AssumptionReport,
    pub certificate: &'a ConvergenceCertificate,
}

pub fn certificate_json(name: &str, out: &RunOutputParts) -> String {
    let doc = CertificateDocument {
        scenario: name,
        frame: out.frame,
        provenance: out.provenance,
        p: out.p,
        p_eigenvalues: out.p_eigenvalues,
        assumptions: out.report,
        certificate: out.certificate,
    };
    serde_json::to_string_pretty(&doc).expect("certificates serialize")
}

/// Borrowed pieces of a prepared run needed by [`certificate_json`].
pub struct RunOutputParts<'a> {
    pub frame: FrameKind,
    pub provenance: Provenance,
    pub p: &'a CMatrix,
    pub p_eigenvalues: &'a [f64],
    pub report: &'a AssumptionReport,
    pub certificate: &'a ConvergenceCertificate,
}

impl<'a> RunOutputParts<'a> {
    pub fn of(prepared: &'a crate::pipeline::Prepared) -> Self {
        Self {
            frame: prepared.frame.kind(),
            provenance: prepared.p.provenance(),
            p: prepared.p.matrix(),
            p_eigenvalues: &prepared.p.eig().values,
            report: &prepared.report,
            certificate: &prepared.certificate,
        }
    }
}

/// Writes the three output files into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trajectory.csv"), trajectory_csv(&out.trajectory))?;
    let parts = RunOutputParts::of(&out.prepared);
    fs::write(dir.join("certificate.json"), certificate_json(&out.summary.name, &parts))?;
    let summary = serde_json::to_string_pretty(&out.summary).expect("summaries serialize");
    fs::write(dir.join("summary.json"), summary)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers() {
        assert_eq!(
            header(2, 1).join(","),
            "t,f_1,V,v,purity,bx,by,bz,tbx,tby,tbz"
        );
        let h3 = header(3, 2);
        assert_eq!(&h3[..6], &["t", "f_1", "f_2", "V", "v", "purity"]);
        assert_eq!(h3.len(), 6 + 2 * 2 * 6);
        assert_eq!(h3[6], "re_1_1");
        assert_eq!(h3[7], "im_1_1");
        assert_eq!(h3[18], "tre_1_1");
        assert_eq!(h3.last().unwrap(), "tim_3_3");
    }
}
