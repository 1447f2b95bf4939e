//! Run metrics and trajectory output.
//!
//! CSV columns, in order: `t`, `w_<bus>` per bus, `p_<from>_<to>` per
//! line, `pc_<bus>` per bus, `pm_<gen>` and `alpha_<gen>` per generator,
//! then (proposed controller only) `u_<bus>`, `muhi_<f>_<t>`,
//! `mulo_<f>_<t>`, `phi_<k>`, and finally `v0`, `v1` when a reference
//! equilibrium was supplied. Numbers are written with 17 significant digits.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::Scenario;
use crate::sim::{Sample, Trajectory};

/// Default settling band on the largest frequency deviation (p.u.).
pub const SETTLING_BAND: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed trajectory CSV: {0}")]
    Parse(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    /// Largest `|omega|` over all buses and samples after the onset (p.u.).
    pub nadir: f64,
    pub nadir_hz: f64,
    /// Last time the largest deviation exceeded the band; zero if never.
    pub settling_time: f64,
    /// Final largest frequency deviation (p.u.).
    pub final_deviation: f64,
    /// `(line index, amount by which the final flow leaves its limits)` for
    /// every bounded line.
    pub line_violation: Vec<(usize, f64)>,
    /// Final `S p - psi` per inter-area constraint.
    pub interarea_residual: Vec<f64>,
    /// Final `sum pC + sum pD`.
    pub power_balance: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub fn metrics(traj: &Trajectory, scenario: &Scenario) -> RunMetrics {
    metrics_with_band(traj, scenario, SETTLING_BAND)
}

pub fn metrics_with_band(traj: &Trajectory, scenario: &Scenario, band: f64) -> RunMetrics {
    let after: Vec<&Sample> = traj.samples.iter().filter(|s| s.t >= 0.0).collect();
    let nadir = after.iter().map(|s| inf_norm(&s.omega)).fold(0.0, f64::max);
    let settling_time = after
        .iter()
        .rev()
        .find(|s| inf_norm(&s.omega) > band)
        .map(|s| s.t)
        .unwrap_or(0.0);
    let Some(last) = traj.samples.last() else {
        return RunMetrics {
            nadir: 0.0,
            nadir_hz: 0.0,
            settling_time: 0.0,
            final_deviation: 0.0,
            line_violation: Vec::new(),
            interarea_residual: Vec::new(),
            power_balance: 0.0,
        };
    };
    let net = &scenario.network;
    let line_violation = net
        .lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.limits.is_bounded())
        .map(|(j, l)| {
            let p = last.flow[j];
            (j, (p - l.limits.upper).max(l.limits.lower - p).max(0.0))
        })
        .collect();
    let interarea_residual = net
        .areas
        .iter()
        .map(|a| {
            a.members
                .iter()
                .map(|m| f64::from(m.sign) * last.flow[m.line])
                .sum::<f64>()
                - a.psi
        })
        .collect();
    RunMetrics {
        nadir,
        nadir_hz: nadir * scenario.sim.nominal_hz,
        settling_time,
        final_deviation: inf_norm(&last.omega),
        line_violation,
        interarea_residual,
        power_balance: last.pc.iter().sum::<f64>() + scenario.total_disturbance(),
    }
}

pub fn csv_header(traj: &Trajectory) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let lines: Vec<String> = traj
        .line_labels
        .iter()
        .map(|(f, t)| format!("{f}_{t}"))
        .collect();
    h.extend(traj.bus_ids.iter().map(|b| format!("w_{b}")));
    h.extend(lines.iter().map(|l| format!("p_{l}")));
    h.extend(traj.bus_ids.iter().map(|b| format!("pc_{b}")));
    h.extend(traj.gen_ids.iter().map(|g| format!("pm_{g}")));
    h.extend(traj.gen_ids.iter().map(|g| format!("alpha_{g}")));
    if traj.internals {
        h.extend(traj.bus_ids.iter().map(|b| format!("u_{b}")));
        h.extend(lines.iter().map(|l| format!("muhi_{l}")));
        h.extend(lines.iter().map(|l| format!("mulo_{l}")));
        h.extend((1..=traj.n_areas).map(|k| format!("phi_{k}")));
    }
    if traj.lyapunov {
        h.push("v0".into());
        h.push("v1".into());
    }
    h
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn sample_row(traj: &Trajectory, s: &Sample) -> Vec<f64> {
    let mut row = vec![s.t];
    for part in [&s.omega, &s.flow, &s.pc, &s.pm, &s.alpha] {
        row.extend_from_slice(part);
    }
    if traj.internals {
        for part in [&s.u, &s.mu_hi, &s.mu_lo, &s.phi] {
            row.extend_from_slice(part);
        }
    }
    if traj.lyapunov {
        row.push(s.v0.unwrap_or(f64::NAN));
        row.push(s.v1.unwrap_or(f64::NAN));
    }
    row
}

pub fn to_csv(traj: &Trajectory) -> String {
    let mut out = csv_header(traj).join(",");
    out.push('\n');
    for s in &traj.samples {
        let row: Vec<String> = sample_row(traj, s).into_iter().map(num).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Reads rows written by [`to_csv`] back into samples of `template`'s
/// shape. The header must match the template exactly.
pub fn parse_csv(text: &str, template: &Trajectory) -> Result<Trajectory, ReportError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ReportError::Parse("missing header".into()))?;
    let expected = csv_header(template).join(",");
    if header != expected {
        return Err(ReportError::Parse(
            "header does not match the trajectory shape".into(),
        ));
    }
    let n = template.bus_ids.len();
    let m = template.line_labels.len();
    let g = template.gen_ids.len();
    let a = template.n_areas;
    let mut traj = template.empty_like();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ReportError::Parse(format!("row {}: {e}", ln + 1)))?;
        let width = 1
            + 2 * n
            + m
            + 2 * g
            + if template.internals { n + 2 * m + a } else { 0 }
            + if template.lyapunov { 2 } else { 0 };
        if vals.len() != width {
            return Err(ReportError::Parse(format!(
                "row {} has {} fields, expected {width}",
                ln + 1,
                vals.len()
            )));
        }
        let mut it = vals.into_iter();
        let mut take = |k: usize| it.by_ref().take(k).collect::<Vec<f64>>();
        let t = take(1)[0];
        let omega = take(n);
        let flow = take(m);
        let pc = take(n);
        let pm = take(g);
        let alpha = take(g);
        let (u, mu_hi, mu_lo, phi) = if template.internals {
            (take(n), take(m), take(m), take(a))
        } else {
            Default::default()
        };
        let (v0, v1) = if template.lyapunov {
            let v = take(2);
            (Some(v[0]), Some(v[1]))
        } else {
            (None, None)
        };
        traj.samples.push(Sample {
            t,
            omega,
            flow,
            pc,
            pm,
            alpha,
            u,
            mu_hi,
            mu_lo,
            phi,
            v0,
            v1,
        });
    }
    Ok(traj)
}

pub fn write_csv(traj: &Trajectory, path: &Path) -> Result<(), ReportError> {
    fs::write(path, to_csv(traj)).map_err(io_err(path))
}

/// Whitespace-separated series for plotting:
///
/// * `freq.dat`: time, then frequency deviation of every generator in Hz
/// * `line_<f>_<t>.dat`: time and flow, one file per bounded line
/// * `interarea.dat`: time, then `S p` per inter-area constraint
pub fn plot_data(traj: &Trajectory, scenario: &Scenario) -> Vec<(String, String)> {
    let net = &scenario.network;
    let hz = scenario.sim.nominal_hz;
    let gens = net.generators();
    let mut files = Vec::new();

    let mut freq = format!(
        "# t {}\n",
        gens.iter()
            .map(|&i| format!("w_{}_hz", net.buses[i].id))
            .collect::<Vec<_>>()
            .join(" ")
    );
    for s in &traj.samples {
        freq.push_str(&num(s.t));
        for &i in &gens {
            freq.push(' ');
            freq.push_str(&num(s.omega[i] * hz));
        }
        freq.push('\n');
    }
    files.push(("freq.dat".to_string(), freq));

    for (j, l) in net.lines.iter().enumerate() {
        if !l.limits.is_bounded() {
            continue;
        }
        let (f, t) = net.line_label(j);
        let mut body = format!("# t p_{f}_{t}\n");
        for s in &traj.samples {
            body.push_str(&format!("{} {}\n", num(s.t), num(s.flow[j])));
        }
        files.push((format!("line_{f}_{t}.dat"), body));
    }

    if !net.areas.is_empty() {
        let mut body = format!(
            "# t {}\n",
            (1..=net.areas.len())
                .map(|k| format!("tie_{k}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        for s in &traj.samples {
            body.push_str(&num(s.t));
            for a in &net.areas {
                let v: f64 = a
                    .members
                    .iter()
                    .map(|m| f64::from(m.sign) * s.flow[m.line])
                    .sum();
                body.push(' ');
                body.push_str(&num(v));
            }
            body.push('\n');
        }
        files.push(("interarea.dat".to_string(), body));
    }
    files
}

pub fn write_plot_data(
    traj: &Trajectory,
    scenario: &Scenario,
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut out = Vec::new();
    for (name, body) in plot_data(traj, scenario) {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
        out.push(path);
    }
    Ok(out)
}
