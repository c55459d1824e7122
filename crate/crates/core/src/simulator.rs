//! Fixed-step hybrid integrator for the networked agents.
//!
//! Each agent integrates its own clocks with a four-stage Runge–Kutta step.
//! The disturbance is held constant over a step and every `ϑ̂` flows at
//! `a*`, so the consensus term and the timer rate are constant within a
//! step: `ϑ̂` and `τ` advance in closed form and the step is shortened to
//! land exactly on the next timer expiry or disturbance window boundary.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::agent::{
    agent_flow_channels, controller_input, on_timer_expiry, AgentParams, AgentState,
    ChannelDisturbance, ResetRule, ResetSampler,
};
use crate::certificate::{sync_time, Certificate, GpesConstants, SyncTime};
use crate::disturbance::{Disturbance, DisturbanceModel};
use crate::ensemble::{apply_jump, pack, EnsembleState, Timers};
use crate::error::{Error, Result};
use crate::metrics;
use crate::graph::{build_graph, edge_uniform_norm, spectral_basis, GraphSpec, SpectralData};

const BLOWUP: f64 = 1e12;

/// Explicit initial values, one entry per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub theta: Vec<f64>,
    pub vartheta: Vec<f64>,
    pub vartheta_hat: Vec<f64>,
    pub a_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub graph: GraphSpec,
    pub agents: Vec<AgentParams>,
    pub initial: InitialState,
    pub disturbance: DisturbanceModel,
    pub independent_channels: bool,
    pub t_end: f64,
    pub h: f64,
    pub event_tol: f64,
    pub reset: ResetRule,
    pub seed: u64,
    /// Log every `log_stride`-th flow step; jumps and the last step are
    /// always logged.
    pub log_stride: usize,
}

impl SimConfig {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n_agents();
        if n < 2 {
            return Err(Error::param("graph", "need at least two agents"));
        }
        if self.agents.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.agents.len() });
        }
        for p in &self.agents {
            p.validate()?;
        }
        let ic = &self.initial;
        for (name, v) in [
            ("theta", &ic.theta),
            ("vartheta", &ic.vartheta),
            ("vartheta_hat", &ic.vartheta_hat),
            ("a_hat", &ic.a_hat),
            ("theta_hat", &ic.theta_hat),
            ("tau", &ic.tau),
        ] {
            if v.len() != n {
                return Err(Error::param(
                    format!("initial.{name}"),
                    format!("expected {n} values, got {}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::param(format!("initial.{name}"), "must be finite"));
            }
        }
        for (p, (tau, a)) in ic.tau.iter().zip(&self.agents).enumerate() {
            if *tau < a.t1 || *tau > a.t2 {
                return Err(Error::param(
                    "initial.tau",
                    format!("agent {}: {tau} outside [{}, {}]", p + 1, a.t1, a.t2),
                ));
            }
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::param("h", "must be positive"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", "must be positive"));
        }
        if !(self.event_tol >= 0.0 && self.event_tol < self.agents.iter().map(|a| a.t1).fold(f64::INFINITY, f64::min)) {
            return Err(Error::param("event_tol", "must be nonnegative and below T1"));
        }
        if self.log_stride == 0 {
            return Err(Error::param("log_stride", "must be at least 1"));
        }
        if let ResetRule::Fixed(v) = self.reset {
            if self.agents.iter().any(|a| v < a.t1 || v > a.t2) {
                return Err(Error::param("reset", "fixed value outside some [T1, T2]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSnapshot {
    pub theta: f64,
    pub vartheta: f64,
    pub vartheta_hat: f64,
    pub a_hat: f64,
    pub theta_hat: f64,
    pub tau: f64,
    pub u: f64,
    /// Hardware-channel disturbance over the step that ended here.
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Initial,
    Flow,
    PreJump,
    PostJump,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub j: u64,
    pub kind: RecordKind,
    pub agents: Vec<AgentSnapshot>,
    pub eta_norm: f64,
    pub dist_a: f64,
    pub uniform_norm: f64,
    /// Lyapunov value when a certificate was supplied.
    pub v: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    /// Jump counter after this event.
    pub j: u64,
    pub agent: usize,
    pub broadcast_value: f64,
    pub tau_reset: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub events: Vec<Event>,
    pub drifts: Vec<f64>,
    pub spectral: SpectralData,
    pub timers: Timers,
    pub a_star: f64,
}

impl Trajectory {
    pub fn n_agents(&self) -> usize {
        self.drifts.len()
    }

    /// Ensemble state of record `k`.
    pub fn xi(&self, k: usize) -> Result<EnsembleState> {
        let r = &self.records[k];
        xi_of(&r.agents, &self.drifts, &self.spectral, r.t, r.j)
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("a trajectory always has its initial record")
    }

    /// Software clock rate `a_p + d_p + u_p` of every agent at record `k`.
    pub fn software_rates(&self, k: usize) -> Vec<f64> {
        self.records[k].agents.iter().zip(&self.drifts).map(|(s, a)| a + s.d + s.u).collect()
    }
}

fn xi_of(agents: &[AgentSnapshot], drifts: &[f64], sd: &SpectralData, t: f64, j: u64) -> Result<EnsembleState> {
    let n = sd.n_agents();
    let vt = DVector::from_iterator(n, agents.iter().map(|s| s.vartheta));
    Ok(EnsembleState {
        eta: sd.v.tr_mul(&vt),
        vartheta_tilde: DVector::from_iterator(n, agents.iter().map(|s| s.vartheta - s.vartheta_hat)),
        a_tilde: DVector::from_iterator(n, agents.iter().zip(drifts).map(|(s, a)| a - s.a_hat)),
        theta_tilde: DVector::from_iterator(n, agents.iter().map(|s| s.theta - s.theta_hat)),
        tau: DVector::from_iterator(n, agents.iter().map(|s| s.tau)),
        t,
        j,
    })
}

struct Run<'a> {
    params: &'a [AgentParams],
    states: Vec<AgentState>,
    sd: SpectralData,
    timers: Timers,
    drifts: Vec<f64>,
    cert: Option<&'a Certificate>,
    records: Vec<Record>,
    events: Vec<Event>,
    last_d: Vec<ChannelDisturbance>,
}

impl Run<'_> {
    fn snapshot(&self) -> Result<Vec<AgentSnapshot>> {
        self.states
            .iter()
            .zip(self.params)
            .zip(&self.last_d)
            .map(|((s, p), d)| {
                Ok(AgentSnapshot {
                    theta: s.theta,
                    vartheta: s.vartheta,
                    vartheta_hat: s.vartheta_hat,
                    a_hat: s.a_hat,
                    theta_hat: s.theta_hat,
                    tau: s.tau,
                    u: controller_input(s, p)?,
                    d: d.hardware,
                })
            })
            .collect()
    }

    fn record_xi(&mut self, kind: RecordKind, xi: &EnsembleState) -> Result<()> {
        let agents = self.snapshot()?;
        let z = xi.z();
        let vt: Vec<f64> = agents.iter().map(|s| s.vartheta).collect();
        let tau: Vec<f64> = xi.tau.iter().copied().collect();
        self.records.push(Record {
            t: xi.t,
            j: xi.j,
            kind,
            eta_norm: xi.eta.norm(),
            dist_a: z.norm(),
            uniform_norm: edge_uniform_norm(self.sd.edges(), &vt),
            v: self.cert.map(|c| c.lyapunov_value(&z, &tau)),
            agents,
        });
        Ok(())
    }

    fn record(&mut self, kind: RecordKind, t: f64, j: u64) -> Result<EnsembleState> {
        let xi = pack(&self.states, &self.drifts, &self.sd, t, j)?;
        self.record_xi(kind, &xi)?;
        Ok(xi)
    }
}

/// RK4 over `(θ, ϑ, â, θ̂)` with a constant consensus term and disturbance.
fn rk4_clocks(st: &AgentState, params: &AgentParams, consensus: f64, d: ChannelDisturbance, s: f64) -> Result<[f64; 4]> {
    let f = |x: [f64; 4]| -> Result<[f64; 4]> {
        let stage = AgentState {
            index: st.index,
            theta: x[0],
            vartheta: x[1],
            vartheta_hat: 0.0,
            a_hat: x[2],
            theta_hat: x[3],
            tau: 0.0,
            neighbors: Vec::new(),
            neighbor_samples: BTreeMap::new(),
        };
        let u = params.a_star - x[2] + consensus;
        let r = agent_flow_channels(&stage, params, u, d)?;
        Ok([r.theta, r.vartheta, r.a_hat, r.theta_hat])
    };
    let add = |x: [f64; 4], k: [f64; 4], c: f64| [x[0] + c * k[0], x[1] + c * k[1], x[2] + c * k[2], x[3] + c * k[3]];
    let x0 = [st.theta, st.vartheta, st.a_hat, st.theta_hat];
    let k1 = f(x0)?;
    let k2 = f(add(x0, k1, 0.5 * s))?;
    let k3 = f(add(x0, k2, 0.5 * s))?;
    let k4 = f(add(x0, k3, s))?;
    let mut out = x0;
    for i in 0..4 {
        out[i] += s / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    simulate_with(cfg, None)
}

/// Like [`simulate`], additionally logging `V` under `cert`.
pub fn simulate_with(cfg: &SimConfig, cert: Option<&Certificate>) -> Result<Trajectory> {
    cfg.validate()?;
    let graph = build_graph(&cfg.graph)?;
    let sd = spectral_basis(&graph)?;
    let n = sd.n_agents();
    if let Some(c) = cert {
        if c.n_agents() != n {
            return Err(Error::CertificateMismatch(format!(
                "certificate for {} agents, scenario has {n}",
                c.n_agents()
            )));
        }
    }
    let params = &cfg.agents;
    let timers = Timers::from_params(params);
    let delta: Vec<f64> = params.iter().map(|p| p.delta).collect();
    let dist = Disturbance::new(cfg.disturbance.clone(), &delta, cfg.seed, cfg.independent_channels)?;
    let mut reset = ResetSampler::new(cfg.reset, n, cfg.seed);
    let ic = &cfg.initial;

    let states: Vec<AgentState> = (0..n)
        .map(|p| {
            let neighbors = graph.neighbors(p).to_vec();
            let neighbor_samples = neighbors.iter().map(|&q| (q, ic.vartheta_hat[q])).collect();
            AgentState {
                index: p,
                theta: ic.theta[p],
                vartheta: ic.vartheta[p],
                vartheta_hat: ic.vartheta_hat[p],
                a_hat: ic.a_hat[p],
                theta_hat: ic.theta_hat[p],
                tau: ic.tau[p],
                neighbors,
                neighbor_samples,
            }
        })
        .collect();

    let mut window = 0u64;
    let mut run = Run {
        params,
        states,
        drifts: params.iter().map(|p| p.drift).collect(),
        timers,
        cert,
        records: Vec::new(),
        events: Vec::new(),
        last_d: (0..n).map(|p| dist.sample(p, 0.0, 0)).collect(),
        sd,
    };
    run.record(RecordKind::Initial, 0.0, 0)?;

    let zeno_limit = 10 * n;
    let mut t = 0.0f64;
    let mut j = 0u64;
    let mut steps = 0usize;
    let mut jumps_at_t = (f64::NAN, 0usize);
    let hold = dist.hold();
    while t < cfg.t_end {
        let d: Vec<ChannelDisturbance> = (0..n).map(|p| dist.sample(p, t, window)).collect();
        let mut s = cfg.h.min(cfg.t_end - t);
        let mut to_end = cfg.t_end - t <= cfg.h;
        let mut to_window = false;
        if let Some(hold) = hold {
            let sb = (window + 1) as f64 * hold - t;
            if sb <= 0.0 {
                window += 1;
                continue;
            }
            if sb < s {
                s = sb;
                to_end = false;
                to_window = true;
            }
        }
        let rates: Vec<f64> = (0..n).map(|p| params[p].timer_rate - d[p].timer).collect();
        let mut landing: Vec<usize> = Vec::new();
        for p in 0..n {
            let sp = run.states[p].tau / rates[p];
            if sp < s {
                s = sp;
                landing.clear();
                landing.push(p);
                to_end = false;
                to_window = false;
            } else if sp == s {
                landing.push(p);
            }
        }

        for p in 0..n {
            let prm = &params[p];
            let consensus = run.states[p].consensus_term(prm.gains.k_u)?;
            let x = rk4_clocks(&run.states[p], prm, consensus, d[p], s)?;
            let st = &mut run.states[p];
            st.theta = x[0];
            st.vartheta = x[1];
            st.a_hat = x[2];
            st.theta_hat = x[3];
            st.advance_samples(prm.a_star, s);
            st.tau -= rates[p] * s;
        }
        t = if to_end { cfg.t_end } else { t + s };
        if to_window {
            window += 1;
        }
        for &p in &landing {
            run.states[p].tau = 0.0;
        }
        for st in &mut run.states {
            if st.tau < 0.0 {
                st.tau = 0.0;
            }
        }
        run.last_d = d;
        steps += 1;

        for st in &run.states {
            for (what, v) in [("theta", st.theta), ("vartheta", st.vartheta), ("a_hat", st.a_hat), ("theta_hat", st.theta_hat)] {
                if !(v.abs() <= BLOWUP) {
                    return Err(Error::NumericalBlowup { t, what: format!("{what}[{}]", st.index + 1) });
                }
            }
        }

        let expiring: Vec<usize> = (0..n).filter(|&p| run.states[p].tau <= cfg.event_tol).collect();
        if expiring.is_empty() {
            if steps % cfg.log_stride == 0 || t >= cfg.t_end {
                run.record(RecordKind::Flow, t, j)?;
            }
            continue;
        }
        if jumps_at_t.0 != t {
            jumps_at_t = (t, 0);
        }
        jumps_at_t.1 += expiring.len();
        if jumps_at_t.1 > zeno_limit {
            return Err(Error::ZenoGuard { t, limit: zeno_limit });
        }
        let mut xi = run.record(RecordKind::PreJump, t, j)?;
        for p in expiring {
            let expiry = on_timer_expiry(&mut run.states[p], &params[p], &mut reset, cfg.event_tol)?;
            let neighbors = run.states[p].neighbors.clone();
            for q in neighbors {
                run.states[q].receive(p, expiry.broadcast_value);
            }
            xi = apply_jump(&xi, p, expiry.new_tau, &run.timers, cfg.event_tol)?;
            j = xi.j;
            run.events.push(Event {
                t,
                j,
                agent: p,
                broadcast_value: expiry.broadcast_value,
                tau_reset: expiry.new_tau,
            });
            run.record_xi(RecordKind::PostJump, &xi)?;
        }
    }

    Ok(Trajectory {
        records: run.records,
        events: run.events,
        drifts: run.drifts,
        spectral: run.sd,
        timers: run.timers,
        a_star: params[0].a_star,
    })
}

/// Per-run digest kept by [`run_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub final_t: f64,
    pub final_j: u64,
    pub initial_distance: f64,
    pub final_eta_norm: f64,
    pub final_dist_a: f64,
    pub final_uniform_norm: f64,
    /// Largest `‖η‖` over the last tenth of the horizon.
    pub eta_tail_max: f64,
    pub min_inter_event: Vec<f64>,
    pub max_inter_event: Vec<f64>,
    pub timer_interval_violations: usize,
    pub domain_bound_violations: usize,
    pub domain_bound_violations_corrected: usize,
    pub lyap_jump_violations: Option<usize>,
    pub lyap_flow_violations: Option<usize>,
    pub envelope_violations: Option<usize>,
    pub nu_sync_time: Option<f64>,
    pub sync_time_bound: Option<SyncTime>,
    /// Second-half maxima of `|ϑ̇_p − a*|`, `|ã_p|` and `|θ̃_p|`.
    pub max_rate_error: f64,
    pub max_a_tilde: f64,
    pub max_theta_tilde: f64,
}

impl RunSummary {
    pub fn lyapunov_violations(&self) -> Option<usize> {
        Some(self.lyap_jump_violations? + self.lyap_flow_violations?)
    }
}

pub fn summarize(
    traj: &Trajectory,
    run: usize,
    seed: u64,
    check: Option<(&Certificate, &GpesConstants)>,
    nu: f64,
    event_tol: f64,
) -> Result<RunSummary> {
    let n = traj.n_agents();
    let last = traj.last();
    let mut min_iv = vec![f64::INFINITY; n];
    let mut max_iv = vec![0.0f64; n];
    let mut prev = vec![0.0; n];
    for e in &traj.events {
        let dt = e.t - prev[e.agent];
        min_iv[e.agent] = min_iv[e.agent].min(dt);
        max_iv[e.agent] = max_iv[e.agent].max(dt);
        prev[e.agent] = e.t;
    }
    let (timer_bad, _) = metrics::timer_interval_violations(traj, event_tol);
    let (literal, corrected) = metrics::domain_bound_violations(traj);
    let half = last.t / 2.0;
    let tail = 0.9 * last.t;
    let (mut rate, mut at, mut tt, mut eta_tail) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (k, r) in traj.records.iter().enumerate() {
        if r.t >= tail {
            eta_tail = eta_tail.max(r.eta_norm);
        }
        if r.t < half {
            continue;
        }
        for (s, (a, v)) in r.agents.iter().zip(traj.drifts.iter().zip(traj.software_rates(k))) {
            rate = rate.max((v - traj.a_star).abs());
            at = at.max((a - s.a_hat).abs());
            tt = tt.max((s.theta - s.theta_hat).abs());
        }
    }
    let initial_distance = traj.records[0].dist_a;
    let (mut jump, mut flow, mut env, mut bound) = (None, None, None, None);
    if let Some((cert, gc)) = check {
        let rep = metrics::lyapunov_monitor(traj, cert, gc)?;
        jump = Some(rep.lyap_jump_violations);
        flow = Some(rep.lyap_flow_violations);
        env = Some(rep.envelope_violations);
        bound = Some(sync_time(gc, nu, initial_distance));
    }
    Ok(RunSummary {
        run,
        seed,
        final_t: last.t,
        final_j: last.j,
        initial_distance,
        final_eta_norm: last.eta_norm,
        final_dist_a: last.dist_a,
        final_uniform_norm: last.uniform_norm,
        eta_tail_max: eta_tail,
        min_inter_event: min_iv,
        max_inter_event: max_iv,
        timer_interval_violations: timer_bad,
        domain_bound_violations: literal,
        domain_bound_violations_corrected: corrected,
        lyap_jump_violations: jump,
        lyap_flow_violations: flow,
        envelope_violations: env,
        nu_sync_time: metrics::nu_sync_detect(traj, nu),
        sync_time_bound: bound,
        max_rate_error: rate,
        max_a_tilde: at,
        max_theta_tilde: tt,
    })
}

/// Simulates one run per seed (`make` builds each run's config) and
/// summarizes it. Runs may execute in parallel; results are in run order
/// and the first failing run's error is returned with its index.
pub fn run_batch<F>(
    make: F,
    seeds: &[u64],
    check: Option<(&Certificate, &GpesConstants)>,
    nu: f64,
) -> Result<Vec<RunSummary>>
where
    F: Fn(u64) -> Result<SimConfig> + Sync,
{
    let results: Vec<Result<RunSummary>> = seeds
        .par_iter()
        .enumerate()
        .map(|(run, &seed)| {
            let cfg = make(seed)?;
            let traj = simulate_with(&cfg, check.map(|c| c.0))?;
            summarize(&traj, run, seed, check, nu, cfg.event_tol)
        })
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(run, r)| r.map_err(|e| Error::Run { run, source: Box::new(e) }))
        .collect()
}
