//! The closed-loop ensemble as a hybrid system in error coordinates.
//!
//! The state is `ξ = (z, τ)` with `z = (η, ϑ̃, ã, θ̃)`, where `η = Vᵀϑ`,
//! `ϑ̃ = ϑ − ϑ̂`, `ã = a − â` and `θ̃ = θ − θ̂`. During flows
//! `ż = F·z + (Vᵀd, d, 0, d)` and `τ̇ = −b + d`; when `τ_p = 0` the jump
//! zeroes `ϑ̃_p`, restarts `τ_p` in `[T1_p, T2_p]` and leaves the rest alone.

use nalgebra::{DMatrix, DVector};

use crate::agent::{AgentParams, AgentState};
use crate::error::{Error, Result};
use crate::graph::SpectralData;

/// Per-agent timer data and the aggregate constants derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Timers {
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub rate: Vec<f64>,
    pub delta: Vec<f64>,
}

impl Timers {
    pub fn from_params(params: &[AgentParams]) -> Self {
        Self {
            t1: params.iter().map(|p| p.t1).collect(),
            t2: params.iter().map(|p| p.t2).collect(),
            rate: params.iter().map(|p| p.timer_rate).collect(),
            delta: params.iter().map(|p| p.delta).collect(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.t1.len()
    }

    pub fn t_min(&self) -> f64 {
        self.t1.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn t_max(&self) -> f64 {
        self.t2.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `min_p (b_p − δ_p)`.
    pub fn b_min(&self) -> f64 {
        self.rate
            .iter()
            .zip(&self.delta)
            .map(|(b, d)| b - d)
            .fold(f64::INFINITY, f64::min)
    }

    /// `max_p (b_p + δ_p)`.
    pub fn b_max(&self) -> f64 {
        self.rate
            .iter()
            .zip(&self.delta)
            .map(|(b, d)| b + d)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub eta: DVector<f64>,
    pub vartheta_tilde: DVector<f64>,
    pub a_tilde: DVector<f64>,
    pub theta_tilde: DVector<f64>,
    pub tau: DVector<f64>,
    pub t: f64,
    pub j: u64,
}

impl EnsembleState {
    pub fn n_agents(&self) -> usize {
        self.tau.len()
    }

    /// `z = (η, ϑ̃, ã, θ̃)`, length `4N − 1`.
    pub fn z(&self) -> DVector<f64> {
        let n = self.n_agents();
        let mut z = DVector::zeros(4 * n - 1);
        z.rows_mut(0, n - 1).copy_from(&self.eta);
        z.rows_mut(n - 1, n).copy_from(&self.vartheta_tilde);
        z.rows_mut(2 * n - 1, n).copy_from(&self.a_tilde);
        z.rows_mut(3 * n - 1, n).copy_from(&self.theta_tilde);
        z
    }

    pub fn from_z(z: &DVector<f64>, tau: DVector<f64>, t: f64, j: u64) -> Result<Self> {
        let n = tau.len();
        if z.len() != 4 * n - 1 {
            return Err(Error::DimensionMismatch { expected: 4 * n - 1, got: z.len() });
        }
        Ok(Self {
            eta: z.rows(0, n - 1).into_owned(),
            vartheta_tilde: z.rows(n - 1, n).into_owned(),
            a_tilde: z.rows(2 * n - 1, n).into_owned(),
            theta_tilde: z.rows(3 * n - 1, n).into_owned(),
            tau,
            t,
            j,
        })
    }

    /// `τ_p ∈ [0, T2_p]` for every agent.
    pub fn in_flow_set(&self, timers: &Timers) -> bool {
        self.tau
            .iter()
            .zip(&timers.t2)
            .all(|(&tau, &t2)| (0.0..=t2).contains(&tau))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    pub f: DMatrix<f64>,
    n: usize,
}

impl FlowMatrix {
    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        4 * self.n - 1
    }
}

/// Assembles
///
/// ```text
/// ⎡ −k_u·D    k_u·D·Vᵀ   Vᵀ    0      ⎤
/// ⎢ −k_u·V·D  k_u·L      I     0      ⎥
/// ⎢ 0         0          0     −k_a·I ⎥
/// ⎣ 0         0          I     −k_θ·I ⎦
/// ```
pub fn build_f(sd: &SpectralData, k_u: f64, k_a: f64, k_theta: f64) -> Result<FlowMatrix> {
    if !(k_u >= 0.0 && k_a > 0.0 && k_theta > 0.0) || !(k_u + k_a + k_theta).is_finite() {
        return Err(Error::param("gains", "need k_u >= 0 and k_a, k_theta > 0"));
    }
    let n = sd.n_agents();
    let m = n - 1;
    let d = sd.d_matrix();
    let vt = sd.v.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut f = DMatrix::zeros(4 * n - 1, 4 * n - 1);

    let (eta, vt_, at, tt) = (0, m, m + n, m + 2 * n);
    f.view_mut((eta, eta), (m, m)).copy_from(&(&d * -k_u));
    f.view_mut((eta, vt_), (m, n)).copy_from(&(&d * &vt * k_u));
    f.view_mut((eta, at), (m, n)).copy_from(&vt);
    f.view_mut((vt_, eta), (n, m)).copy_from(&(&sd.v * &d * -k_u));
    f.view_mut((vt_, vt_), (n, n)).copy_from(&(&sd.laplacian * k_u));
    f.view_mut((vt_, at), (n, n)).copy_from(&eye);
    f.view_mut((at, tt), (n, n)).copy_from(&(&eye * -k_a));
    f.view_mut((tt, at), (n, n)).copy_from(&eye);
    f.view_mut((tt, tt), (n, n)).copy_from(&(&eye * -k_theta));
    Ok(FlowMatrix { f, n })
}

/// `(Vᵀd, d, 0_N, d)`, the disturbance's image in z-coordinates.
pub fn stack_disturbance(sd: &SpectralData, d: &[f64]) -> Result<DVector<f64>> {
    let n = sd.n_agents();
    if d.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: d.len() });
    }
    let dv = DVector::from_column_slice(d);
    let mut out = DVector::zeros(4 * n - 1);
    out.rows_mut(0, n - 1).copy_from(&sd.v.tr_mul(&dv));
    out.rows_mut(n - 1, n).copy_from(&dv);
    out.rows_mut(3 * n - 1, n).copy_from(&dv);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRates {
    pub z: DVector<f64>,
    pub tau: DVector<f64>,
}

pub fn ensemble_flow(
    xi: &EnsembleState,
    fm: &FlowMatrix,
    sd: &SpectralData,
    timers: &Timers,
    d: &[f64],
) -> Result<EnsembleRates> {
    let n = fm.n_agents();
    if xi.n_agents() != n || timers.n_agents() != n {
        return Err(Error::DimensionMismatch { expected: n, got: xi.n_agents() });
    }
    for (p, (&dp, &bound)) in d.iter().zip(&timers.delta).enumerate() {
        if dp.abs() > bound {
            return Err(Error::DisturbanceOutOfBound { agent: p, value: dp, bound });
        }
    }
    let z = &fm.f * xi.z() + stack_disturbance(sd, d)?;
    let tau = DVector::from_iterator(n, timers.rate.iter().zip(d).map(|(b, dp)| -b + dp));
    Ok(EnsembleRates { z, tau })
}

/// Agents whose timer has expired, ascending. Simultaneous expiries are
/// processed one jump at a time in this order.
pub fn jump_set_agents(xi: &EnsembleState, tol: f64) -> Vec<usize> {
    xi.tau
        .iter()
        .enumerate()
        .filter(|(_, &tau)| tau <= tol)
        .map(|(p, _)| p)
        .collect()
}

/// One jump of agent `p`: `ϑ̃_p⁺ = 0`, `τ_p⁺ = tau_reset`, `j⁺ = j + 1`.
pub fn apply_jump(
    xi: &EnsembleState,
    p: usize,
    tau_reset: f64,
    timers: &Timers,
    tol: f64,
) -> Result<EnsembleState> {
    let tau = *xi
        .tau
        .get(p)
        .ok_or(Error::DimensionMismatch { expected: xi.n_agents(), got: p + 1 })?;
    if tau > tol {
        return Err(Error::NotInJumpSet { agent: p, tau });
    }
    if !(timers.t1[p]..=timers.t2[p]).contains(&tau_reset) {
        return Err(Error::param(
            "tau_reset",
            format!("{tau_reset} outside [{}, {}]", timers.t1[p], timers.t2[p]),
        ));
    }
    let mut next = xi.clone();
    next.vartheta_tilde[p] = 0.0;
    next.tau[p] = tau_reset;
    next.j += 1;
    Ok(next)
}

/// Builds `ξ` from raw agent states; `drifts` holds the true `a_p`.
pub fn pack(
    states: &[AgentState],
    drifts: &[f64],
    sd: &SpectralData,
    t: f64,
    j: u64,
) -> Result<EnsembleState> {
    let n = sd.n_agents();
    if states.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: states.len() });
    }
    if drifts.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: drifts.len() });
    }
    let vartheta = DVector::from_iterator(n, states.iter().map(|s| s.vartheta));
    Ok(EnsembleState {
        eta: sd.v.tr_mul(&vartheta),
        vartheta_tilde: DVector::from_iterator(n, states.iter().map(|s| s.vartheta - s.vartheta_hat)),
        a_tilde: DVector::from_iterator(n, states.iter().zip(drifts).map(|(s, a)| a - s.a_hat)),
        theta_tilde: DVector::from_iterator(n, states.iter().map(|s| s.theta - s.theta_hat)),
        tau: DVector::from_iterator(n, states.iter().map(|s| s.tau)),
        t,
        j,
    })
}

/// Per-agent view of `ξ`. Raw clocks are not recoverable from `η`, only the
/// disagreement component `S·ϑ = V·η`.
#[derive(Debug, Clone, PartialEq)]
pub struct TildeView {
    pub disagreement: f64,
    pub vartheta_tilde: f64,
    pub a_tilde: f64,
    pub theta_tilde: f64,
    pub tau: f64,
}

pub fn unpack(xi: &EnsembleState, sd: &SpectralData) -> Result<Vec<TildeView>> {
    let n = sd.n_agents();
    if xi.n_agents() != n || xi.eta.len() != n - 1 {
        return Err(Error::DimensionMismatch { expected: n, got: xi.n_agents() });
    }
    let perp = &sd.v * &xi.eta;
    Ok((0..n)
        .map(|p| TildeView {
            disagreement: perp[p],
            vartheta_tilde: xi.vartheta_tilde[p],
            a_tilde: xi.a_tilde[p],
            theta_tilde: xi.theta_tilde[p],
            tau: xi.tau[p],
        })
        .collect())
}

/// Inverse of [`unpack`] on the z-coordinates.
pub fn pack_views(views: &[TildeView], sd: &SpectralData, t: f64, j: u64) -> Result<EnsembleState> {
    let n = sd.n_agents();
    if views.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: views.len() });
    }
    let perp = DVector::from_iterator(n, views.iter().map(|v| v.disagreement));
    Ok(EnsembleState {
        eta: sd.v.tr_mul(&perp),
        vartheta_tilde: DVector::from_iterator(n, views.iter().map(|v| v.vartheta_tilde)),
        a_tilde: DVector::from_iterator(n, views.iter().map(|v| v.a_tilde)),
        theta_tilde: DVector::from_iterator(n, views.iter().map(|v| v.theta_tilde)),
        tau: DVector::from_iterator(n, views.iter().map(|v| v.tau)),
        t,
        j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, spectral_basis, GraphSpec};
    use approx::assert_abs_diff_eq;

    fn sd(spec: GraphSpec) -> SpectralData {
        spectral_basis(&build_graph(&spec).unwrap()).unwrap()
    }

    fn timers(n: usize) -> Timers {
        Timers {
            t1: vec![0.05; n],
            t2: vec![0.1; n],
            rate: vec![1.0; n],
            delta: vec![2e-5; n],
        }
    }

    fn zero_state(n: usize) -> EnsembleState {
        EnsembleState::from_z(&DVector::zeros(4 * n - 1), DVector::from_element(n, 0.07), 0.0, 0)
            .unwrap()
    }

    #[test]
    fn f_for_two_node_path() {
        let fm = build_f(&sd(GraphSpec::Path { n: 2 }), 0.72, 4.2, 3.0).unwrap();
        assert_eq!(fm.f.shape(), (7, 7));
        assert_abs_diff_eq!(fm.f[(0, 0)], -1.44, epsilon = 1e-12);
    }

    #[test]
    fn f_rank_is_3n_minus_1() {
        for (spec, n) in [
            (GraphSpec::Path { n: 2 }, 2),
            (GraphSpec::Ring { n: 6 }, 6),
            (GraphSpec::RandomConnected { n: 9, p: 0.3, seed: 5 }, 9),
        ] {
            let fm = build_f(&sd(spec), 0.72, 4.2, 3.0).unwrap();
            let svd = fm.f.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let rank = svd.singular_values.iter().filter(|&&s| s > 1e-8 * smax).count();
            assert_eq!(rank, 3 * n - 1);
        }
    }

    #[test]
    fn zero_coupling_gain_leaves_only_estimator_coupling() {
        let n = 4;
        let fm = build_f(&sd(GraphSpec::Ring { n }), 0.0, 4.2, 3.0).unwrap();
        let top = 2 * n - 1;
        for r in 0..top {
            for c in 0..top {
                assert_eq!(fm.f[(r, c)], 0.0);
            }
        }
        assert!(fm.f.view((0, top), (top, n)).amax() > 0.0);
        assert!(build_f(&sd(GraphSpec::Ring { n }), -1.0, 4.2, 3.0).is_err());
    }

    #[test]
    fn attractor_is_flow_invariant_without_disturbance() {
        let s = sd(GraphSpec::Ring { n: 5 });
        let fm = build_f(&s, 0.72, 4.2, 3.0).unwrap();
        let r = ensemble_flow(&zero_state(5), &fm, &s, &timers(5), &[0.0; 5]).unwrap();
        assert_eq!(r.z.amax(), 0.0);
        assert!(r.tau.iter().all(|&x| x == -1.0));
    }

    #[test]
    fn uniform_disturbance_invisible_to_eta() {
        let s = sd(GraphSpec::Ring { n: 5 });
        let stacked = stack_disturbance(&s, &[2e-5; 5]).unwrap();
        assert!(stacked.rows(0, 4).amax() < 1e-18);
        assert!(ensemble_flow(&zero_state(5), &build_f(&s, 0.72, 4.2, 3.0).unwrap(), &s, &timers(5), &[3e-5; 5]).is_err());
    }

    #[test]
    fn jump_set_ordering() {
        let mut xi = zero_state(6);
        assert!(jump_set_agents(&xi, 1e-9).is_empty());
        xi.tau[2] = 0.0;
        assert_eq!(jump_set_agents(&xi, 1e-9), vec![2]);
        xi.tau[5] = 0.0;
        xi.tau[1] = 0.0;
        assert_eq!(jump_set_agents(&xi, 1e-9), vec![1, 2, 5]);
    }

    #[test]
    fn jump_zeroes_one_component() {
        let mut xi = zero_state(2);
        xi.vartheta_tilde = DVector::from_vec(vec![0.3, -0.1]);
        xi.eta[0] = 0.7;
        xi.tau[0] = 0.0;
        let next = apply_jump(&xi, 0, 0.08, &timers(2), 1e-9).unwrap();
        assert_eq!(next.vartheta_tilde.as_slice(), &[0.0, -0.1]);
        assert_eq!(next.eta, xi.eta);
        assert_eq!(next.tau[0], 0.08);
        assert_eq!(next.tau[1], xi.tau[1]);
        assert_eq!(next.j, 1);
        assert_eq!(next.t, xi.t);
        assert!(next.in_flow_set(&timers(2)));

        assert!(matches!(apply_jump(&xi, 1, 0.08, &timers(2), 1e-9), Err(Error::NotInJumpSet { .. })));
        assert!(apply_jump(&xi, 0, 0.2, &timers(2), 1e-9).is_err());
    }

    #[test]
    fn pack_two_node_eta() {
        let s = sd(GraphSpec::Path { n: 2 });
        let mk = |index, v: f64| AgentState {
            index,
            theta: 0.0,
            vartheta: v,
            vartheta_hat: v,
            a_hat: 1.0,
            theta_hat: 0.0,
            tau: 0.05,
            neighbors: vec![1 - index],
            neighbor_samples: Default::default(),
        };
        let xi = pack(&[mk(0, 3.0), mk(1, 1.0)], &[1.0, 1.0], &s, 0.0, 0).unwrap();
        assert_abs_diff_eq!(xi.eta[0], 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(xi.vartheta_tilde.amax(), 0.0);

        let agreed = pack(&[mk(0, 2.0), mk(1, 2.0)], &[1.0, 1.0], &s, 0.0, 0).unwrap();
        assert!(agreed.z().amax() < 1e-15);
    }
}
