//! Command implementations behind the `chronosync` binary.
//!
//! Exit codes: 0 success or feasible, 1 configuration error, 2 infeasible
//! certificate, 3 numerical failure.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::certificate::{
    gpes_constants, search_certificate, sync_time, Certificate, CertificateReport, GpesConstants,
    SearchOutcome, SyncTime,
};
use crate::config::Config;
use crate::ensemble::{build_f, Timers};
use crate::error::Error;
use crate::export::{self, Report, ReportValue};
use crate::graph::{build_graph, spectral_basis, SpectralData};
use crate::metrics::{self, VerificationReport};
use crate::seeds::{self, Purpose};
use crate::simulator::{run_batch, simulate_with, RunSummary, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError { code: exit_code(&e), message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: EXIT_CONFIG, message: format!("i/o: {e}") }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotFeasible => EXIT_INFEASIBLE,
        Error::NumericalBlowup { .. } | Error::ZenoGuard { .. } | Error::InsufficientTransient(_) => EXIT_NUMERICAL,
        Error::Run { source, .. } => exit_code(source),
        _ => EXIT_CONFIG,
    }
}

/// What a command produced: exit code, written files and a short summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError {
                code: EXIT_CONFIG,
                message: format!("cannot read {}: {e}", p.display()),
            })?;
            Ok(Config::from_toml(&text)?)
        }
    }
}

/// Graph, timers and the certificate search result for a config.
pub struct Certified {
    pub spectral: SpectralData,
    pub timers: Timers,
    pub outcome: SearchOutcome,
    pub constants: Option<GpesConstants>,
}

impl Certified {
    pub fn feasible(&self) -> Option<(&Certificate, &CertificateReport, &GpesConstants)> {
        match (&self.outcome, &self.constants) {
            (SearchOutcome::Feasible { certificate, report, .. }, Some(gc)) => Some((certificate, report, gc)),
            _ => None,
        }
    }
}

pub fn run_certification(cfg: &Config) -> Result<Certified, CliError> {
    let spectral = spectral_basis(&build_graph(&cfg.graph.spec()?)?)?;
    let timers = Timers::from_params(&cfg.agent_params(cfg.seed)?);
    let g = cfg.gains();
    let fm = build_f(&spectral, g.k_u, g.k_a, g.k_theta)?;
    let outcome = search_certificate(&fm, &spectral, g, &timers, &cfg.search_settings())?;
    let constants = match &outcome {
        SearchOutcome::Feasible { report, .. } => Some(gpes_constants(
            report,
            &timers,
            cfg.certificate.epsilon,
            cfg.certificate.kappa_fraction,
        )?),
        SearchOutcome::Infeasible { .. } => None,
    };
    Ok(Certified { spectral, timers, outcome, constants })
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> ReportValue {
    ReportValue::Matrix((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
}

fn certificate_report(cfg: &Config, c: &Certified, initial_distance: Option<f64>) -> Report {
    let mut r = Report::default();
    r.section("graph")
        .put("n", c.spectral.n_agents())
        .put("fiedler", c.spectral.fiedler)
        .put("lambda_max", c.spectral.lambda_max())
        .put(
            "edges",
            ReportValue::Pairs(c.spectral.edges().iter().map(|&(a, b)| [a + 1, b + 1]).collect()),
        );
    match &c.outcome {
        SearchOutcome::Feasible { certificate, report, evaluations } => {
            r.section("certificate")
                .put("feasible", report.feasible)
                .put("mu", report.mu)
                .put("mu_is_exact", report.exact)
                .put("alpha1", report.alpha1)
                .put("alpha2", report.alpha2)
                .put("p_t2_norm", report.p_t2_norm)
                .put("sampled_min_margin", report.sampled_min_margin)
                .put("lambda_max_at_zero", report.lambda_max_at_zero)
                .put("corollary_check", report.corollary_check)
                .put("corollary_lambda_max", report.corollary_lambda_max)
                .put("samples", report.samples)
                .put("worst_tau", report.worst_tau.clone())
                .put("search_evaluations", *evaluations)
                .put("sigma", certificate.sigma)
                .put("p2_weights", certificate.p2_weights.iter().copied().collect::<Vec<_>>())
                .put("p1", matrix_rows(&certificate.p1))
                .put("p3", matrix_rows(&certificate.p3));
        }
        SearchOutcome::Infeasible { best, best_margin, evaluations } => {
            r.section("certificate")
                .put("feasible", false)
                .put("best_mu", *best_margin)
                .put("search_evaluations", *evaluations)
                .put("sigma", best.sigma);
        }
    }
    if let Some(gc) = &c.constants {
        r.section("constants")
            .put("kappa", gc.kappa)
            .put("mu_bar", gc.mu_bar)
            .put("epsilon", gc.epsilon)
            .put("kappa1", gc.kappa1)
            .put("kappa2", gc.kappa2)
            .put("alpha", gc.alpha)
            .put("delta_max", gc.delta_max)
            .put("delta_max_is_bound", gc.delta_max_is_bound)
            .put("t_min", gc.t_min)
            .put("t_max", gc.t_max)
            .put("b_min", gc.b_min)
            .put("b_max", gc.b_max);
        let nu = cfg.output.nu;
        r.section("sync").put("nu", nu);
        if let Some(d0) = initial_distance {
            r.put("initial_distance", d0);
            match sync_time(gc, nu, d0) {
                SyncTime::Bound(t) => r.put("guaranteed", true).put("sync_time", t),
                SyncTime::NotGuaranteed => r.put("guaranteed", false),
            };
        }
    }
    r
}

fn initial_distance(cfg: &Config, seed: u64, sd: &SpectralData) -> Result<f64, CliError> {
    let sim = cfg.resolve(seed)?;
    let ic = &sim.initial;
    let states: Vec<crate::agent::AgentState> = (0..sim.n_agents())
        .map(|p| crate::agent::AgentState {
            index: p,
            theta: ic.theta[p],
            vartheta: ic.vartheta[p],
            vartheta_hat: ic.vartheta_hat[p],
            a_hat: ic.a_hat[p],
            theta_hat: ic.theta_hat[p],
            tau: ic.tau[p],
            neighbors: Vec::new(),
            neighbor_samples: Default::default(),
        })
        .collect();
    let drifts: Vec<f64> = sim.agents.iter().map(|a| a.drift).collect();
    Ok(metrics::distance_to_attractor(&crate::ensemble::pack(&states, &drifts, sd, 0.0, 0)?))
}

pub fn cmd_certify(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    fs::create_dir_all(out)?;
    let c = run_certification(cfg)?;
    let d0 = initial_distance(cfg, cfg.seed, &c.spectral)?;
    let path = out.join("certificate.toml");
    certificate_report(cfg, &c, Some(d0)).write(&path)?;
    let (code, summary) = match c.feasible() {
        Some((_, rep, gc)) => (
            EXIT_OK,
            format!(
                "feasible: mu = {:.6e}, alpha1 = {:.6e}, alpha2 = {:.6e}, kappa2 = {:.6e}, alpha = {:.6e}",
                rep.mu, rep.alpha1, rep.alpha2, gc.kappa2, gc.alpha
            ),
        ),
        None => (EXIT_INFEASIBLE, "infeasible: no certificate found".to_string()),
    };
    Ok(Outcome { code, files: vec![path], summary })
}

fn write_trajectory_files(cfg: &Config, traj: &Trajectory, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let idx = export::export_indices(traj, cfg.output.sample_interval);
    let t = out.join("trajectory.csv");
    let m = out.join("metrics.csv");
    let e = out.join("events.csv");
    export::write_trajectory_csv(BufWriter::new(File::create(&t)?), traj, &idx)?;
    export::write_metrics_csv(BufWriter::new(File::create(&m)?), traj, &idx)?;
    export::write_events_csv(BufWriter::new(File::create(&e)?), traj)?;
    Ok(vec![t, m, e])
}

fn write_manifest(
    cfg: &Config,
    out: &Path,
    command: &str,
    seed: u64,
    files: &[PathBuf],
    started: Instant,
) -> Result<PathBuf, CliError> {
    let path = out.join("manifest.toml");
    let mut doc = toml::Table::new();
    let mut m = toml::Table::new();
    m.insert("tool".into(), "chronosync".into());
    m.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    m.insert("command".into(), command.into());
    m.insert("seed".into(), toml::Value::Integer(seed as i64));
    m.insert(
        "artifacts".into(),
        toml::Value::Array(
            files
                .iter()
                .map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default().into())
                .collect(),
        ),
    );
    m.insert("wall_clock_seconds".into(), started.elapsed().as_secs_f64().into());
    doc.insert("manifest".into(), toml::Value::Table(m));
    let mut echo = cfg.clone();
    echo.seed = seed;
    let echo: toml::Table = toml::from_str(&echo.to_toml()).expect("config echo parses");
    doc.insert("config".into(), toml::Value::Table(echo));
    fs::write(&path, toml::to_string(&doc).expect("manifest serializes"))?;
    Ok(path)
}

pub fn cmd_simulate(cfg: &Config, out: &Path, seed: u64) -> Result<Outcome, CliError> {
    let started = Instant::now();
    fs::create_dir_all(out)?;
    let sim = cfg.resolve(seed)?;
    let traj = simulate_with(&sim, None)?;
    let mut files = write_trajectory_files(cfg, &traj, out)?;
    files.push(write_manifest(cfg, out, "simulate", seed, &files, started)?);
    let last = traj.last();
    let summary = format!(
        "t = {}, jumps = {}, final eta_norm = {:.6e}, final dist_A = {:.6e}",
        last.t, last.j, last.eta_norm, last.dist_a
    );
    Ok(Outcome { code: EXIT_OK, files, summary })
}

fn verification_report(rep: &VerificationReport, fit: Option<f64>, traj: &Trajectory, nu: f64) -> Report {
    let mut r = Report::default();
    r.section("verification")
        .put("nu", nu)
        .put("lyap_jump_violations", rep.lyap_jump_violations)
        .put("lyap_flow_violations", rep.lyap_flow_violations)
        .put("envelope_violations", rep.envelope_violations)
        .put("envelope_ok", rep.envelope_ok)
        .put("max_timer_interval_violations", rep.max_timer_interval_violations)
        .put("domain_bound_violations", rep.domain_bound_violations)
        .put("domain_bound_violations_corrected", rep.domain_bound_violations_corrected)
        .put("max_jump_increase", rep.max_jump_increase)
        .put("max_flow_excess", rep.max_flow_excess)
        .put("v_log_mismatch", rep.v_log_mismatch)
        .put("jumps_checked", rep.jumps_checked)
        .put("flow_intervals_checked", rep.flow_intervals_checked)
        .put("intervals_checked", rep.intervals_checked)
        .put("records_checked", rep.records_checked)
        .put("nu_sync_checked_to", traj.last().t);
    match rep.nu_sync_time_observed {
        Some(t) => r.put("nu_sync_time_observed", t),
        None => r.put("nu_sync_time_observed", "none"),
    };
    match fit {
        Some(s) => r.put("fitted_rate", s),
        None => r.put("fitted_rate", "insufficient transient"),
    };
    let last = traj.last();
    r.put("final_t", last.t)
        .put("final_j", last.j)
        .put("final_eta_norm", last.eta_norm)
        .put("final_dist_a", last.dist_a)
        .put("final_uniform_norm", last.uniform_norm);
    r
}

fn verify_pipeline(cfg: &Config, out: &Path, seed: u64, command: &str, figures: bool) -> Result<Outcome, CliError> {
    let started = Instant::now();
    fs::create_dir_all(out)?;
    let c = run_certification(cfg)?;
    let d0 = initial_distance(cfg, seed, &c.spectral)?;
    let cert_path = out.join("certificate.toml");
    let mut cfg_seeded = cfg.clone();
    cfg_seeded.seed = seed;
    certificate_report(&cfg_seeded, &c, Some(d0)).write(&cert_path)?;
    let Some((cert, _, gc)) = c.feasible() else {
        return Ok(Outcome {
            code: EXIT_INFEASIBLE,
            files: vec![cert_path],
            summary: "infeasible: no certificate found, nothing to verify".into(),
        });
    };
    let sim = cfg.resolve(seed)?;
    let traj = simulate_with(&sim, Some(cert))?;
    let mut files = vec![cert_path];
    files.extend(write_trajectory_files(cfg, &traj, out)?);
    let nu = cfg.output.nu;
    let rep = metrics::verify_trajectory(&traj, cert, gc, nu, sim.event_tol)?;
    let fit = metrics::envelope_fit(&traj, gc.kappa2).ok();
    let vpath = out.join("verification.toml");
    verification_report(&rep, fit, &traj, nu).write(&vpath)?;
    files.push(vpath);
    if figures {
        let idx = export::export_indices(&traj, cfg.output.sample_interval);
        files.extend(export::write_figure_csvs(out, &traj, &idx, cfg.output.timer_window, nu)?);
    }
    files.push(write_manifest(cfg, out, command, seed, &files, started)?);

    let mut summary = String::new();
    let _ = write!(
        summary,
        "mu = {:.6e}, kappa2 = {:.6e}; V jump/flow violations = {}/{}, envelope violations = {}, timer violations = {}, ",
        gc.mu, gc.kappa2, rep.lyap_jump_violations, rep.lyap_flow_violations, rep.envelope_violations,
        rep.max_timer_interval_violations
    );
    let _ = write!(
        summary,
        "hybrid-time bound violations = {} (corrected form: {}); ",
        rep.domain_bound_violations, rep.domain_bound_violations_corrected
    );
    match rep.nu_sync_time_observed {
        Some(t) => {
            let _ = write!(summary, "nu-synchronized from t+j = {t:.6} (checked to t = {})", traj.last().t);
        }
        None => summary.push_str("nu-synchronization not reached within the horizon"),
    }
    Ok(Outcome { code: EXIT_OK, files, summary })
}

pub fn cmd_verify(cfg: &Config, out: &Path, seed: u64) -> Result<Outcome, CliError> {
    verify_pipeline(cfg, out, seed, "verify", false)
}

/// The reference pipeline: certify, simulate, verify and write figure data.
pub fn cmd_reproduce(cfg: &Config, out: &Path, seed: u64) -> Result<Outcome, CliError> {
    verify_pipeline(cfg, out, seed, "reproduce", true)
}

/// Seed of batch run `k`.
pub fn batch_seed(master: u64, k: usize) -> u64 {
    seeds::derive_seed(master, Purpose::Batch, k as u64)
}

pub const BATCH_HEADER: &str = "run,seed,final_eta_norm,final_dist_A,final_uniform_norm,eta_tail_max,max_inter_event,min_inter_event,timer_interval_violations,domain_bound_violations,domain_bound_violations_corrected,lyap_jump_violations,lyap_flow_violations,envelope_violations,nu_sync_time,max_rate_error,max_a_tilde,max_theta_tilde";

pub fn cmd_batch(cfg: &Config, out: &Path, seed: u64, runs: usize) -> Result<Outcome, CliError> {
    let started = Instant::now();
    if runs == 0 {
        return Err(CliError { code: EXIT_CONFIG, message: "--runs must be at least 1".into() });
    }
    fs::create_dir_all(out)?;
    let c = run_certification(cfg)?;
    let check = c.feasible().map(|(cert, _, gc)| (cert, gc));
    let seeds: Vec<u64> = (0..runs).map(|k| batch_seed(seed, k)).collect();
    let summaries = run_batch(|s| cfg.resolve(s), &seeds, check, cfg.output.nu)?;
    let path = out.join("batch.csv");
    fs::write(&path, batch_csv(&summaries))?;
    let files = vec![path.clone()];
    let manifest = write_manifest(cfg, out, "batch", seed, &files, started)?;
    let worst = summaries.iter().map(|s| s.final_eta_norm).fold(0.0, f64::max);
    let synced = summaries.iter().filter(|s| s.nu_sync_time.is_some()).count();
    Ok(Outcome {
        code: EXIT_OK,
        files: vec![path, manifest],
        summary: format!("{runs} runs: {synced} nu-synchronized, worst final eta_norm = {worst:.6e}"),
    })
}

pub fn batch_csv(summaries: &[RunSummary]) -> String {
    let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::new();
    let _ = writeln!(s, "{BATCH_HEADER}");
    for r in summaries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.run,
            r.seed,
            export::fmt_f(r.final_eta_norm),
            export::fmt_f(r.final_dist_a),
            export::fmt_f(r.final_uniform_norm),
            export::fmt_f(r.eta_tail_max),
            export::fmt_f(r.max_inter_event.iter().copied().fold(0.0, f64::max)),
            export::fmt_f(r.min_inter_event.iter().copied().fold(f64::INFINITY, f64::min)),
            r.timer_interval_violations,
            r.domain_bound_violations,
            r.domain_bound_violations_corrected,
            opt(r.lyap_jump_violations),
            opt(r.lyap_flow_violations),
            opt(r.envelope_violations),
            r.nu_sync_time.map(export::fmt_f).unwrap_or_default(),
            export::fmt_f(r.max_rate_error),
            export::fmt_f(r.max_a_tilde),
            export::fmt_f(r.max_theta_tilde),
        );
    }
    s
}
