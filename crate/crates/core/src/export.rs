//! CSV and report writers.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::simulator::{RecordKind, Trajectory};

/// Seventeen significant digits, which round-trips every `f64`.
pub fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// Records exported at roughly `interval` spacing: the first record, the
/// first record at or after each multiple of `interval`, and the last one.
/// `interval = 0` keeps everything.
pub fn export_indices(traj: &Trajectory, interval: f64) -> Vec<usize> {
    let n = traj.records.len();
    if interval <= 0.0 {
        return (0..n).collect();
    }
    let mut out = vec![0];
    let mut mark = 1u64;
    for (k, r) in traj.records.iter().enumerate().skip(1) {
        if r.kind == RecordKind::PreJump {
            continue;
        }
        if r.t >= mark as f64 * interval {
            out.push(k);
            mark = (r.t / interval).floor() as u64 + 1;
        }
    }
    if *out.last().unwrap() != n - 1 {
        out.push(n - 1);
    }
    out
}

pub const TRAJECTORY_HEADER: &str = "t,j,agent,theta,vartheta,vartheta_hat,a_hat,theta_hat,tau,u,d";
pub const METRICS_HEADER: &str = "t,j,eta_norm,dist_A,uniform_norm,V";
pub const EVENTS_HEADER: &str = "t,j,agent,broadcast_value,tau_reset";

pub fn write_trajectory_csv(mut w: impl Write, traj: &Trajectory, idx: &[usize]) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for &k in idx {
        let r = &traj.records[k];
        for (p, s) in r.agents.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt_f(r.t),
                r.j,
                p + 1,
                fmt_f(s.theta),
                fmt_f(s.vartheta),
                fmt_f(s.vartheta_hat),
                fmt_f(s.a_hat),
                fmt_f(s.theta_hat),
                fmt_f(s.tau),
                fmt_f(s.u),
                fmt_f(s.d)
            )?;
        }
    }
    Ok(())
}

pub fn write_metrics_csv(mut w: impl Write, traj: &Trajectory, idx: &[usize]) -> io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for &k in idx {
        let r = &traj.records[k];
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f(r.t),
            r.j,
            fmt_f(r.eta_norm),
            fmt_f(r.dist_a),
            fmt_f(r.uniform_norm),
            fmt_f(r.v.unwrap_or(f64::NAN))
        )?;
    }
    Ok(())
}

pub fn write_events_csv(mut w: impl Write, traj: &Trajectory) -> io::Result<()> {
    writeln!(w, "{EVENTS_HEADER}")?;
    for e in &traj.events {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f(e.t),
            e.j,
            e.agent + 1,
            fmt_f(e.broadcast_value),
            fmt_f(e.tau_reset)
        )?;
    }
    Ok(())
}

fn write_long(path: &Path, traj: &Trajectory, idx: &[usize], value: impl Fn(usize, usize) -> f64) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,j,agent,value")?;
    for &k in idx {
        let r = &traj.records[k];
        for p in 0..r.agents.len() {
            writeln!(w, "{},{},{},{}", fmt_f(r.t), r.j, p + 1, fmt_f(value(k, p)))?;
        }
    }
    w.flush()
}

/// Writes `fig1.csv` … `fig6.csv` into `dir`: software times, software
/// clock rates, drift estimation errors, hardware-time estimation errors,
/// disagreement with the tolerance line, and timers over `window`.
pub fn write_figure_csvs(
    dir: &Path,
    traj: &Trajectory,
    idx: &[usize],
    window: [f64; 2],
    nu: f64,
) -> io::Result<Vec<PathBuf>> {
    let path = |name: &str| dir.join(name);
    let rec = |k: usize, p: usize| traj.records[k].agents[p];
    write_long(&path("fig1.csv"), traj, idx, |k, p| rec(k, p).vartheta)?;
    write_long(&path("fig2.csv"), traj, idx, |k, p| {
        let s = rec(k, p);
        traj.drifts[p] + s.d + s.u
    })?;
    write_long(&path("fig3.csv"), traj, idx, |k, p| traj.drifts[p] - rec(k, p).a_hat)?;
    write_long(&path("fig4.csv"), traj, idx, |k, p| {
        let s = rec(k, p);
        s.theta - s.theta_hat
    })?;

    let mut w = BufWriter::new(File::create(path("fig5.csv"))?);
    writeln!(w, "t,j,eta_norm,dist_A,nu")?;
    for &k in idx {
        let r = &traj.records[k];
        writeln!(w, "{},{},{},{},{}", fmt_f(r.t), r.j, fmt_f(r.eta_norm), fmt_f(r.dist_a), fmt_f(nu))?;
    }
    w.flush()?;

    let inside: Vec<usize> = traj
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.t >= window[0] && r.t <= window[1])
        .map(|(k, _)| k)
        .collect();
    write_long(&path("fig6.csv"), traj, &inside, |k, p| rec(k, p).tau)?;

    Ok((1..=6).map(|i| path(&format!("fig{i}.csv"))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReportValue {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Floats(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
    Pairs(Vec<[usize; 2]>),
}

impl From<f64> for ReportValue {
    fn from(x: f64) -> Self {
        ReportValue::Float(x)
    }
}
impl From<usize> for ReportValue {
    fn from(x: usize) -> Self {
        ReportValue::Int(x as i64)
    }
}
impl From<u64> for ReportValue {
    fn from(x: u64) -> Self {
        ReportValue::Int(x as i64)
    }
}
impl From<bool> for ReportValue {
    fn from(x: bool) -> Self {
        ReportValue::Bool(x)
    }
}
impl From<&str> for ReportValue {
    fn from(x: &str) -> Self {
        ReportValue::Text(x.into())
    }
}
impl From<Vec<f64>> for ReportValue {
    fn from(x: Vec<f64>) -> Self {
        ReportValue::Floats(x)
    }
}

/// A TOML document whose floats are written with 17 significant digits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    sections: Vec<(String, Vec<(String, ReportValue)>)>,
}

impl Report {
    pub fn section(&mut self, name: &str) -> &mut Self {
        self.sections.push((name.into(), Vec::new()));
        self
    }

    pub fn put(&mut self, key: &str, value: impl Into<ReportValue>) -> &mut Self {
        if self.sections.is_empty() {
            self.section("report");
        }
        self.sections.last_mut().unwrap().1.push((key.into(), value.into()));
        self
    }

    pub fn render(&self) -> String {
        let floats = |v: &[f64]| v.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        for (i, (name, entries)) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{name}]");
            for (key, value) in entries {
                let text = match value {
                    ReportValue::Float(x) => fmt_f(*x),
                    ReportValue::Int(x) => x.to_string(),
                    ReportValue::Bool(x) => x.to_string(),
                    ReportValue::Text(s) => format!("{s:?}"),
                    ReportValue::Floats(v) => format!("[{}]", floats(v)),
                    ReportValue::Pairs(v) => {
                        let body: Vec<String> = v.iter().map(|[a, b]| format!("[{a}, {b}]")).collect();
                        format!("[{}]", body.join(", "))
                    }
                    ReportValue::Matrix(rows) => {
                        let body: Vec<String> = rows.iter().map(|r| format!("  [{}],", floats(r))).collect();
                        format!("[\n{}\n]", body.join("\n"))
                    }
                };
                let _ = writeln!(out, "{key} = {text}");
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.render())
    }
}
