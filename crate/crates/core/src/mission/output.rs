use super::svg;
use super::{PerceptionOutcome, RunReport, Sample, ScenarioError};
use crate::geometry::Vec3;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

pub const CSV_HEADER: &str =
    "t,px,py,pz,vx,vy,vz,h,ex,ey,ez,epsi,ux,uy,uz,yawrate,F_contact,percep_outcome";

/// Renders the time series; every number carries 9 significant digits.
pub fn write_run_csv(series: &[Sample]) -> String {
    let mut out = String::with_capacity(series.len() * 260);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in series {
        let numbers = [
            s.t,
            s.p.x,
            s.p.y,
            s.p.z,
            s.v.x,
            s.v.y,
            s.v.z,
            s.h,
            s.e.x,
            s.e.y,
            s.e.z,
            s.e_psi,
            s.u.x,
            s.u.y,
            s.u.z,
            s.yaw_rate,
            s.contact_force,
        ];
        for x in numbers {
            let _ = write!(out, "{x:.8e},");
        }
        let _ = writeln!(out, "{}", s.perception);
    }
    out
}

fn bad_row(line: usize, what: &str) -> ScenarioError {
    ScenarioError::Parse(format!("run.csv line {line}: {what}"))
}

pub fn read_run_csv(text: &str) -> Result<Vec<Sample>, ScenarioError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad_row(1, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 18 {
                return Err(bad_row(i + 2, "expected 18 columns"));
            }
            let n = fields[..17]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad_row(i + 2, &e.to_string()))?;
            let perception = PerceptionOutcome::parse(fields[17])
                .ok_or_else(|| bad_row(i + 2, "unknown perception outcome"))?;
            Ok(Sample {
                t: n[0],
                p: Vec3::new(n[1], n[2], n[3]),
                v: Vec3::new(n[4], n[5], n[6]),
                h: n[7],
                e: Vec3::new(n[8], n[9], n[10]),
                e_psi: n[11],
                u: Vec3::new(n[12], n[13], n[14]),
                yaw_rate: n[15],
                contact_force: n[16],
                perception,
            })
        })
        .collect()
}

/// Writes `run.csv`, `summary.json` and the SVG plots into `out_dir`
/// (created if missing).
pub fn emit_outputs(report: &RunReport, out_dir: &Path) -> Result<(), ScenarioError> {
    if report.series.is_empty() {
        return Err(ScenarioError::InvalidConfig("report has no samples".into()));
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("run.csv"), write_run_csv(&report.series))?;
    let summary = serde_json::to_string_pretty(&report.summary).map_err(io::Error::other)?;
    fs::write(out_dir.join("summary.json"), summary + "\n")?;

    let series = &report.series;
    let t: Vec<f64> = series.iter().map(|s| s.t).collect();
    let column = |f: &dyn Fn(&Sample) -> f64| series.iter().map(f).collect::<Vec<f64>>();
    let plots = [
        (
            "h.svg",
            svg::line_plot(
                "Barrier value",
                "t [s]",
                "h [m]",
                &t,
                &[("h", column(&|s| s.h))],
            ),
        ),
        (
            "errors.svg",
            svg::line_plot(
                "Tip position in target frame",
                "t [s]",
                "error [m]",
                &t,
                &[
                    ("ex", column(&|s| s.e.x)),
                    ("ey", column(&|s| s.e.y)),
                    ("ez", column(&|s| s.e.z)),
                ],
            ),
        ),
        (
            "command.svg",
            svg::line_plot(
                "Commanded velocity",
                "t [s]",
                "u [m/s]",
                &t,
                &[
                    ("ux", column(&|s| s.u.x)),
                    ("uy", column(&|s| s.u.y)),
                    ("uz", column(&|s| s.u.z)),
                ],
            ),
        ),
        (
            "funnel.svg",
            svg::funnel_plot(
                report.barrier.a,
                &series.iter().map(|s| s.e).collect::<Vec<_>>(),
            ),
        ),
    ];
    for (name, body) in plots {
        fs::write(out_dir.join(name), body)?;
    }
    Ok(())
}
