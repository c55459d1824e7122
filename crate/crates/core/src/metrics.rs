//! Post-hoc checks on simulated trajectories.

use crate::certificate::{Certificate, GpesConstants};
use crate::ensemble::EnsembleState;
use crate::error::{Error, Result};
use crate::simulator::{RecordKind, Trajectory};

/// `|ξ|_𝒜 = ‖z‖`.
pub fn distance_to_attractor(xi: &EnsembleState) -> f64 {
    xi.z().norm()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub lyap_jump_violations: usize,
    pub lyap_flow_violations: usize,
    pub envelope_violations: usize,
    pub envelope_ok: bool,
    /// First logged `t + j` after which `‖ϑ‖_∞ ≤ ν` holds to the horizon.
    pub nu_sync_time_observed: Option<f64>,
    pub max_timer_interval_violations: usize,
    /// Records violating `(j/N − 1)·T_min/b_max ≤ t ≤ j·T_max/(N·b_min)`.
    pub domain_bound_violations: usize,
    /// Records violating `(j/N − 1)·T_min/b_max ≤ t ≤ (j/N + 1)·T_max/b_min`.
    pub domain_bound_violations_corrected: usize,
    /// Largest logged `V` that differs from the recomputed one.
    pub v_log_mismatch: f64,
    pub max_jump_increase: f64,
    pub max_flow_excess: f64,
    pub jumps_checked: usize,
    pub flow_intervals_checked: usize,
    pub records_checked: usize,
    pub intervals_checked: usize,
}

/// `V` at every record, recomputed from the logged agent states.
pub fn lyapunov_series(traj: &Trajectory, cert: &Certificate) -> Result<Vec<f64>> {
    if cert.n_agents() != traj.n_agents() {
        return Err(Error::CertificateMismatch(format!(
            "certificate for {} agents, trajectory has {}",
            cert.n_agents(),
            traj.n_agents()
        )));
    }
    (0..traj.records.len())
        .map(|k| {
            let xi = traj.xi(k)?;
            let tau: Vec<f64> = xi.tau.iter().copied().collect();
            Ok(cert.lyapunov_value(&xi.z(), &tau))
        })
        .collect()
}

/// Right-hand side of the certified envelope on `|ξ|_𝒜²` at hybrid time `t + j`.
pub fn envelope_bound(gc: &GpesConstants, initial_distance: f64, hybrid_time: f64) -> f64 {
    gc.alpha2 / gc.alpha1
        * initial_distance.powi(2)
        * (gc.mu_bar * (1.0 - gc.epsilon) * gc.t_min).exp()
        * (-2.0 * gc.alpha * hybrid_time).exp()
        + gc.kappa2.powi(2)
}

/// Jump, flow and envelope checks of `V` along `traj`.
pub fn lyapunov_monitor(traj: &Trajectory, cert: &Certificate, gc: &GpesConstants) -> Result<VerificationReport> {
    let v = lyapunov_series(traj, cert)?;
    let mut rep = VerificationReport::default();
    rep.v_log_mismatch = traj
        .records
        .iter()
        .zip(&v)
        .filter_map(|(r, v)| r.v.map(|logged| (logged - v).abs()))
        .fold(0.0, f64::max);
    let floor = gc.p_t2_norm * gc.delta_max.powi(2) / (gc.mu_bar * gc.kappa);
    let d0 = traj.records[0].dist_a;
    for k in 0..traj.records.len() {
        let r = &traj.records[k];
        if !(r.dist_a.powi(2) <= envelope_bound(gc, d0, r.t + r.j as f64)) {
            rep.envelope_violations += 1;
        }
        if k == 0 {
            continue;
        }
        let prev = &traj.records[k - 1];
        if r.kind == RecordKind::PostJump {
            rep.jumps_checked += 1;
            let inc = v[k] - v[k - 1];
            rep.max_jump_increase = rep.max_jump_increase.max(inc);
            if !(inc <= 1e-12) {
                rep.lyap_jump_violations += 1;
            }
        } else if r.j == prev.j {
            rep.flow_intervals_checked += 1;
            let dt = r.t - prev.t;
            let bound = v[k - 1] * (-gc.mu_bar * dt).exp() + floor;
            let excess = v[k] - bound;
            rep.max_flow_excess = rep.max_flow_excess.max(excess);
            if !(excess <= 1e-9 * (1.0 + v[k - 1])) {
                rep.lyap_flow_violations += 1;
            }
        }
    }
    rep.envelope_ok = rep.envelope_violations == 0;
    rep.records_checked = traj.records.len();
    Ok(rep)
}

/// Inter-event intervals (including the first, from `t = 0`) outside
/// `[T1_p/(b_p+δ_p), T2_p/(b_p−δ_p)]` by more than `tol`. Returns
/// `(violations, intervals checked)`.
pub fn timer_interval_violations(traj: &Trajectory, tol: f64) -> (usize, usize) {
    let tm = &traj.timers;
    let mut last = vec![0.0; traj.n_agents()];
    let (mut bad, mut count) = (0, 0);
    for e in &traj.events {
        let p = e.agent;
        let lo = tm.t1[p] / (tm.rate[p] + tm.delta[p]);
        let hi = tm.t2[p] / (tm.rate[p] - tm.delta[p]);
        let dt = e.t - last[p];
        count += 1;
        if !(dt >= lo - tol && dt <= hi + tol) {
            bad += 1;
        }
        last[p] = e.t;
    }
    (bad, count)
}

/// `(literal, corrected)` violation counts of the hybrid-time domain bounds.
pub fn domain_bound_violations(traj: &Trajectory) -> (usize, usize) {
    let tm = &traj.timers;
    let n = traj.n_agents() as f64;
    let (t_min, t_max, b_min, b_max) = (tm.t_min(), tm.t_max(), tm.b_min(), tm.b_max());
    let slack = 1e-12;
    let mut literal = 0;
    let mut corrected = 0;
    for r in &traj.records {
        let jn = r.j as f64 / n;
        let lower_ok = (jn - 1.0) * t_min / b_max <= r.t + slack;
        if !(lower_ok && r.t <= jn * t_max / b_min + slack) {
            literal += 1;
        }
        if !(lower_ok && r.t <= (jn + 1.0) * t_max / b_min + slack) {
            corrected += 1;
        }
    }
    (literal, corrected)
}

/// Smallest logged `t + j` from which `‖ϑ‖_∞ ≤ ν` at every later record.
pub fn nu_sync_detect(traj: &Trajectory, nu: f64) -> Option<f64> {
    let recs = &traj.records;
    match recs.iter().rposition(|r| r.uniform_norm > nu) {
        None => recs.first().map(|r| r.t + r.j as f64),
        Some(k) if k + 1 < recs.len() => Some(recs[k + 1].t + recs[k + 1].j as f64),
        Some(_) => None,
    }
}

/// Least-squares slope of `ln y` against `x` over points with `y > threshold`.
pub fn fit_exponential_rate(points: &[(f64, f64)], threshold: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > threshold && y.is_finite())
        .map(|&(x, y)| (x, y.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientTransient(pts.len()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientTransient(pts.len()));
    }
    Ok(sxy / sxx)
}

/// Fitted decay rate of `|ξ|_𝒜` in `t` over the transient above
/// `max(10·κ2, 1e-10)`.
pub fn envelope_fit(traj: &Trajectory, kappa2: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = traj.records.iter().map(|r| (r.t, r.dist_a)).collect();
    fit_exponential_rate(&pts, (10.0 * kappa2).max(1e-10))
}

/// Every trajectory-level check in one report.
pub fn verify_trajectory(
    traj: &Trajectory,
    cert: &Certificate,
    gc: &GpesConstants,
    nu: f64,
    event_tol: f64,
) -> Result<VerificationReport> {
    let mut rep = lyapunov_monitor(traj, cert, gc)?;
    let (bad, count) = timer_interval_violations(traj, event_tol);
    rep.max_timer_interval_violations = bad;
    rep.intervals_checked = count;
    let (literal, corrected) = domain_bound_violations(traj);
    rep.domain_bound_violations = literal;
    rep.domain_bound_violations_corrected = corrected;
    rep.nu_sync_time_observed = nu_sync_detect(traj, nu);
    Ok(rep)
}
