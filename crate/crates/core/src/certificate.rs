//! Lyapunov certificates for the ensemble and the constants they imply.
//!
//! A certificate `(σ, P1, P2-weights, P3)` defines
//!
//! ```text
//! P(τ) = diag(P1, P2(τ), P3),   P2(τ) = diag(w_k · exp(σ·τ_k))
//! Q(τ) = −σ·b_min · diag(0, P2(τ), 0)
//! M(τ) = Fᵀ·P(τ) + P(τ)·F + Q(τ)
//! ```
//!
//! and is valid when `M(τ) ≺ 0` on the whole timer box `∏ [0, T2_p]`.
//! `M` is affine in the diagonal entries of `P2(τ)`, each of which is
//! monotone in one `τ_k`, so `λ_max(M(τ))` is a convex function of those
//! entries and its supremum over the box is attained at a corner. Corner
//! enumeration therefore gives the exact `μ = −sup λ_max(M(τ))` whenever all
//! `2^N` corners are visited.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::agent::Gains;
use crate::ensemble::{FlowMatrix, Timers};
use crate::error::{Error, Result};
use crate::graph::SpectralData;
use crate::linalg;
use crate::seeds::{self, Purpose};

/// Agents up to this count get every corner of the timer box sampled.
pub const MAX_CORNER_BITS: usize = 12;

/// Agents up to this count get `δ_max` by exhaustive sign enumeration.
pub const MAX_DELTA_CORNER_BITS: usize = 20;

const PD_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub sigma: f64,
    pub p1: DMatrix<f64>,
    pub p2_weights: DVector<f64>,
    pub p3: DMatrix<f64>,
}

impl Certificate {
    pub fn new(
        sigma: f64,
        p1: DMatrix<f64>,
        p2_weights: DVector<f64>,
        p3: DMatrix<f64>,
    ) -> Result<Self> {
        let n = p2_weights.len();
        if n < 2 || p1.shape() != (n - 1, n - 1) || p3.shape() != (2 * n, 2 * n) {
            return Err(Error::CertificateMismatch(format!(
                "P1 {:?}, P2 {}, P3 {:?}",
                p1.shape(),
                n,
                p3.shape()
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", "must be positive"));
        }
        if p2_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::param("p2_weights", "must be positive"));
        }
        for (name, m) in [("p1", &p1), ("p3", &p3)] {
            if (m - m.transpose()).amax() > 1e-9 * m.amax().max(1.0) {
                return Err(Error::param(name, "must be symmetric"));
            }
            if linalg::lambda_min(m) <= PD_EPS {
                return Err(Error::param(name, "must be positive definite"));
            }
        }
        Ok(Self { sigma, p1: linalg::symmetrize(&p1), p2_weights, p3: linalg::symmetrize(&p3) })
    }

    pub fn n_agents(&self) -> usize {
        self.p2_weights.len()
    }

    pub fn dim(&self) -> usize {
        4 * self.n_agents() - 1
    }

    /// Diagonal of `P2(τ)`.
    pub fn p2_diag(&self, tau: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.n_agents(),
            self.p2_weights.iter().zip(tau).map(|(w, t)| w * (self.sigma * t).exp()),
        )
    }

    /// Dense `P(τ)`.
    pub fn p_matrix(&self, tau: &[f64]) -> DMatrix<f64> {
        let n = self.n_agents();
        let mut p = DMatrix::zeros(self.dim(), self.dim());
        p.view_mut((0, 0), (n - 1, n - 1)).copy_from(&self.p1);
        p.view_mut((n - 1, n - 1), (n, n)).set_diagonal(&self.p2_diag(tau));
        p.view_mut((2 * n - 1, 2 * n - 1), (2 * n, 2 * n)).copy_from(&self.p3);
        p
    }

    /// `V(ξ) = zᵀ·P(τ)·z`, evaluated block by block.
    ///
    /// The `P2` contribution is summed last, so a jump that only zeroes one
    /// `ϑ̃_p` can never increase the floating-point value.
    pub fn lyapunov_value(&self, z: &DVector<f64>, tau: &[f64]) -> f64 {
        let n = self.n_agents();
        let eta = z.rows(0, n - 1);
        let est = z.rows(2 * n - 1, 2 * n);
        let rest = eta.dot(&(&self.p1 * eta)) + est.dot(&(&self.p3 * est));
        let mut p2 = 0.0;
        for k in 0..n {
            let x = z[n - 1 + k];
            p2 += self.p2_weights[k] * (self.sigma * tau[k]).exp() * x * x;
        }
        rest + p2
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            sigma: self.sigma,
            p1: &self.p1 * c,
            p2_weights: &self.p2_weights * c,
            p3: &self.p3 * c,
        }
    }

    fn check_dims(&self, fm: &FlowMatrix) -> Result<()> {
        if fm.n_agents() != self.n_agents() {
            return Err(Error::CertificateMismatch(format!(
                "certificate for {} agents, flow matrix for {}",
                self.n_agents(),
                fm.n_agents()
            )));
        }
        Ok(())
    }
}

fn check_tau(tau: &[f64], timers: &Timers) -> Result<()> {
    if tau.len() != timers.n_agents() {
        return Err(Error::DimensionMismatch { expected: timers.n_agents(), got: tau.len() });
    }
    for (p, (&t, &upper)) in tau.iter().zip(&timers.t2).enumerate() {
        if !(0.0..=upper).contains(&t) {
            return Err(Error::TauOutOfRange { agent: p, tau: t, upper });
        }
    }
    Ok(())
}

/// Dense reference assembly of `M(τ)`.
pub fn m_of_tau(cert: &Certificate, fm: &FlowMatrix, timers: &Timers, tau: &[f64]) -> Result<DMatrix<f64>> {
    cert.check_dims(fm)?;
    check_tau(tau, timers)?;
    Ok(assemble_m(cert.sigma, &cert.p_matrix(tau), fm, &cert.p2_diag(tau), timers.b_min()))
}

fn assemble_m(sigma: f64, p: &DMatrix<f64>, fm: &FlowMatrix, p2: &DVector<f64>, b_min: f64) -> DMatrix<f64> {
    let n = fm.n_agents();
    let mut m = fm.f.transpose() * p + p * &fm.f;
    for k in 0..n {
        m[(n - 1 + k, n - 1 + k)] -= sigma * b_min * p2[k];
    }
    linalg::symmetrize(&m)
}

/// `M(τ)` split into its τ-independent part and the rows of `F` that the
/// `P2(τ)` entries multiply; assembling a sample costs `O(N·dim)`.
struct MAssembler {
    fixed: DMatrix<f64>,
    f: DMatrix<f64>,
    weights: DVector<f64>,
    sigma: f64,
    b_min: f64,
    n: usize,
}

impl MAssembler {
    fn new(cert: &Certificate, fm: &FlowMatrix, b_min: f64) -> Self {
        let n = cert.n_agents();
        let mut p = cert.p_matrix(&vec![0.0; n]);
        p.view_mut((n - 1, n - 1), (n, n)).fill(0.0);
        let fixed = fm.f.transpose() * &p + &p * &fm.f;
        Self {
            fixed,
            f: fm.f.clone(),
            weights: cert.p2_weights.clone(),
            sigma: cert.sigma,
            b_min,
            n,
        }
    }

    fn at(&self, tau: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut m = self.fixed.clone();
        for k in 0..n {
            let r = n - 1 + k;
            let x = self.weights[k] * (self.sigma * tau[k]).exp();
            for c in 0..m.ncols() {
                let v = x * self.f[(r, c)];
                m[(r, c)] += v;
                m[(c, r)] += v;
            }
            m[(r, r)] -= self.sigma * self.b_min * x;
        }
        linalg::symmetrize(&m)
    }

    fn lambda_max(&self, tau: &[f64]) -> f64 {
        linalg::lambda_max(&self.at(tau))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    /// `−max λ_max(M(τ))` over the sample set; exact when `exact` is set.
    pub mu: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub p_t2_norm: f64,
    pub feasible: bool,
    pub corollary_check: bool,
    /// `λ_max` of the restricted `Q(0)` in the complement test.
    pub corollary_lambda_max: f64,
    /// Largest `λ_max(M(τ))` seen; equals `−mu`.
    pub sampled_min_margin: f64,
    pub lambda_max_at_zero: f64,
    pub worst_tau: Vec<f64>,
    pub samples: usize,
    pub exact: bool,
}

/// The τ points a certification visits: `0`, `T2`, box corners (all of
/// them up to [`MAX_CORNER_BITS`] agents, a seeded subset beyond that) and
/// `grid_size` Halton points.
pub fn sample_set(timers: &Timers, grid_size: usize) -> (Vec<Vec<f64>>, bool) {
    let n = timers.n_agents();
    let t2 = &timers.t2;
    let mut out = vec![vec![0.0; n], t2.clone()];
    let exact = n <= MAX_CORNER_BITS;
    let bits = n.min(MAX_CORNER_BITS);
    for k in 0..(1u64 << bits) {
        let corner: Vec<f64> = if exact {
            (0..n).map(|p| if k >> p & 1 == 1 { t2[p] } else { 0.0 }).collect()
        } else {
            (0..n)
                .map(|p| if seeds::unit_from_counter(k, p as u64) < 0.5 { 0.0 } else { t2[p] })
                .collect()
        };
        out.push(corner);
    }
    let primes = first_primes(n);
    for i in 1..=grid_size as u64 {
        out.push((0..n).map(|p| t2[p] * halton(i, primes[p])).collect());
    }
    (out, exact)
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(count);
    let mut c = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn max_over(assembler: &MAssembler, taus: &[Vec<f64>]) -> (f64, usize) {
    let values: Vec<f64> = taus.par_iter().map(|t| assembler.lambda_max(t)).collect();
    values
        .iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |acc, (i, &v)| if v > acc.0 { (v, i) } else { acc })
}

pub fn certify(cert: &Certificate, fm: &FlowMatrix, timers: &Timers, grid_size: usize) -> Result<CertificateReport> {
    cert.check_dims(fm)?;
    let n = cert.n_agents();
    let b_min = timers.b_min();
    let assembler = MAssembler::new(cert, fm, b_min);
    let (taus, exact) = sample_set(timers, grid_size);
    let (worst, idx) = max_over(&assembler, &taus);
    let zero = vec![0.0; n];
    let lambda_max_at_zero = assembler.lambda_max(&zero);

    // Complement test: F̃ spans ker(Fᵀ), and Q(0) is restricted to it.
    let f_tilde = linalg::left_null_space(&fm.f, 1e-8);
    let mut q0 = DMatrix::zeros(cert.dim(), cert.dim());
    let p2_0 = cert.p2_diag(&zero);
    for k in 0..n {
        q0[(n - 1 + k, n - 1 + k)] = -cert.sigma * b_min * p2_0[k];
    }
    let restricted = f_tilde.transpose() * q0 * &f_tilde;
    let corollary_lambda_max = if restricted.nrows() == 0 {
        f64::NAN
    } else {
        linalg::lambda_max(&linalg::symmetrize(&restricted))
    };

    let p0 = cert.p_matrix(&zero);
    let pt2 = cert.p_matrix(&timers.t2);
    let mu = -worst;
    Ok(CertificateReport {
        mu,
        alpha1: linalg::lambda_min(&p0),
        alpha2: linalg::lambda_max(&pt2),
        p_t2_norm: linalg::sym_norm(&pt2),
        feasible: mu > 0.0 && lambda_max_at_zero < 0.0,
        corollary_check: corollary_lambda_max < 0.0,
        corollary_lambda_max,
        sampled_min_margin: worst,
        lambda_max_at_zero,
        worst_tau: taus[idx].clone(),
        samples: taus.len(),
        exact,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSettings {
    pub sigma: f64,
    /// Maximum number of objective evaluations.
    pub budget: usize,
    pub seed: u64,
    /// Halton points used by the final certification.
    pub grid_size: usize,
    pub tune_sigma: bool,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self { sigma: 35.0, budget: 400, seed: 0, grid_size: 1000, tune_sigma: true }
    }
}

#[derive(Debug, Clone)]
pub enum SearchOutcome {
    Feasible { certificate: Certificate, report: CertificateReport, evaluations: usize },
    Infeasible { best: Certificate, best_margin: f64, evaluations: usize },
}

impl SearchOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            SearchOutcome::Feasible { certificate, .. } => Some(certificate),
            SearchOutcome::Infeasible { .. } => None,
        }
    }
}

/// Candidate structure for the search: fixed shapes, log-scale multipliers.
struct Shapes {
    p1: DMatrix<f64>,
    p3: DMatrix<f64>,
    n: usize,
}

impl Shapes {
    fn build(&self, x: &[f64; 3]) -> Certificate {
        Certificate {
            sigma: x[2].exp(),
            p1: &self.p1 * x[0].exp(),
            p2_weights: DVector::from_element(self.n, 1.0),
            p3: &self.p3 * x[1].exp(),
        }
    }
}

/// Search score: feasible candidates beat infeasible ones; among feasible
/// ones larger is better for `μ·√α1 / α2^{3/2}` (the practical bound `κ2` is
/// inversely proportional to it); infeasible ones compare by `μ/α2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Score(u8, f64);

fn score(cert: &Certificate, assembler: &MAssembler, taus: &[Vec<f64>], timers: &Timers) -> (Score, f64) {
    let (worst, _) = max_over(assembler, taus);
    let mu = -worst;
    let n = cert.n_agents();
    let alpha1 = linalg::lambda_min(&cert.p_matrix(&vec![0.0; n]));
    let alpha2 = linalg::lambda_max(&cert.p_matrix(&timers.t2));
    let s = if !(mu.is_finite() && alpha1.is_finite() && alpha2.is_finite()) {
        Score(0, f64::NEG_INFINITY)
    } else if mu > 0.0 {
        Score(1, mu.ln() + 0.5 * alpha1.ln() - 1.5 * alpha2.ln())
    } else {
        Score(0, mu / alpha2)
    };
    (s, mu)
}

/// Best-effort certificate search.
///
/// `P3` starts from the Lyapunov solution of the estimator block
/// `[[0, −k_a·I], [I, −k_θ·I]]`, `P1` from that of `−k_u·D` (identity when
/// `k_u = 0`), with unit `P2` weights. Coordinate descent then adjusts the
/// log-scales of `P1`, `P3` and `σ` (the `P2` scale is the normalization) on
/// a small screening set of τ points. Each locally optimal candidate is
/// certified on the full sample set; corners that refute it join the
/// screening set and the descent resumes.
pub fn search_certificate(
    fm: &FlowMatrix,
    sd: &SpectralData,
    gains: Gains,
    timers: &Timers,
    settings: &SearchSettings,
) -> Result<SearchOutcome> {
    if settings.budget == 0 {
        return Err(Error::param("budget", "must be positive"));
    }
    let n = sd.n_agents();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut est = DMatrix::zeros(2 * n, 2 * n);
    est.view_mut((0, n), (n, n)).copy_from(&(&eye * -gains.k_a));
    est.view_mut((n, 0), (n, n)).copy_from(&eye);
    est.view_mut((n, n), (n, n)).copy_from(&(&eye * -gains.k_theta));
    let p3 = linalg::solve_lyapunov(&est, &DMatrix::identity(2 * n, 2 * n))?;
    let p1 = if gains.k_u > 0.0 {
        linalg::solve_lyapunov(&(sd.d_matrix() * -gains.k_u), &DMatrix::identity(n - 1, n - 1))?
    } else {
        DMatrix::identity(n - 1, n - 1)
    };
    let shapes = Shapes { p1, p3, n };
    let b_min = timers.b_min();

    let mut rng = seeds::stream(settings.seed, Purpose::CertificateSearch, n as u64);
    let mut screen: Vec<Vec<f64>> = vec![vec![0.0; n], timers.t2.clone()];
    for k in 0..n {
        let mut hot = vec![0.0; n];
        hot[k] = timers.t2[k];
        let mut cold = timers.t2.clone();
        cold[k] = 0.0;
        screen.push(hot);
        screen.push(cold);
    }
    for k in 0..16u64 {
        let key = seeds::derive_seed(settings.seed, Purpose::CertificateSearch, k);
        screen.push(
            (0..n)
                .map(|p| if seeds::unit_from_counter(key, p as u64) < 0.5 { 0.0 } else { timers.t2[p] })
                .collect(),
        );
    }

    // σ·T2 beyond ~40 makes P(T2) overflow long before it could help.
    let sigma_range = (1e-2f64.ln(), (40.0 / timers.t_max()).ln());
    if !(settings.sigma > 0.0) {
        return Err(Error::param("sigma", "must be positive"));
    }
    let mut x = [0.0, 0.0, settings.sigma.ln().clamp(sigma_range.0, sigma_range.1)];
    let mut evaluations = 0usize;
    let eval = |x: &[f64; 3], screen: &[Vec<f64>], evaluations: &mut usize| {
        *evaluations += 1;
        let cert = shapes.build(x);
        let assembler = MAssembler::new(&cert, fm, b_min);
        score(&cert, &assembler, screen, timers)
    };
    let (mut best, mut best_mu) = eval(&x, &screen, &mut evaluations);
    let coords: Vec<usize> = if settings.tune_sigma { vec![0, 1, 2] } else { vec![0, 1] };

    loop {
        let mut step = 4f64.ln();
        while step > 1e-3 && evaluations < settings.budget {
            let mut improved = false;
            let mut order = coords.clone();
            order.shuffle(&mut rng);
            for &c in &order {
                for dir in [1.0, -1.0] {
                    if evaluations >= settings.budget {
                        break;
                    }
                    let mut trial = x;
                    trial[c] += dir * step;
                    if c == 2 && !(sigma_range.0..=sigma_range.1).contains(&trial[2]) {
                        continue;
                    }
                    let (s, mu) = eval(&trial, &screen, &mut evaluations);
                    if s > best {
                        x = trial;
                        best = s;
                        best_mu = mu;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }

        let candidate = shapes.build(&x);
        if best.0 == 1 {
            let report = certify(&candidate, fm, timers, settings.grid_size)?;
            if report.feasible {
                return Ok(SearchOutcome::Feasible { certificate: candidate, report, evaluations });
            }
            best_mu = report.mu;
            if evaluations < settings.budget && !screen.contains(&report.worst_tau) {
                screen.push(report.worst_tau.clone());
                let (s, _) = eval(&x, &screen, &mut evaluations);
                best = s;
                continue;
            }
        }
        return Ok(SearchOutcome::Infeasible { best: candidate, best_margin: best_mu, evaluations });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpesConstants {
    pub n_agents: usize,
    pub mu: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub p_t2_norm: f64,
    pub kappa: f64,
    pub mu_bar: f64,
    pub epsilon: f64,
    /// Overshoot factor, without the initial-distance factor.
    pub kappa1: f64,
    pub kappa2: f64,
    pub alpha: f64,
    pub delta_max: f64,
    /// `delta_max` is the upper bound `√3·‖δ‖` rather than the exact value.
    pub delta_max_is_bound: bool,
    pub t_min: f64,
    pub t_max: f64,
    pub b_min: f64,
    pub b_max: f64,
}

/// Radius of the practical neighborhood, `√(‖P(T2)‖ / (α1·μ̄·κ)) · δ_max`.
pub fn kappa2_from(p_t2_norm: f64, alpha1: f64, mu_bar: f64, kappa: f64, delta_max: f64) -> f64 {
    (p_t2_norm / (alpha1 * mu_bar * kappa)).sqrt() * delta_max
}

/// `sup ‖(Vᵀd, d, 0, d)‖` over `|d_p| ≤ δ_p`.
///
/// The norm is convex, so the sup sits on a corner `d_p = ±δ_p`; with
/// `‖Vᵀd‖ = ‖S·d‖` each corner costs `O(N)`. Returns `(value, is_bound)`.
pub fn delta_max(delta: &[f64]) -> (f64, bool) {
    let n = delta.len();
    let sq: f64 = delta.iter().map(|d| d * d).sum();
    if n > MAX_DELTA_CORNER_BITS {
        return ((3.0 * sq).sqrt(), true);
    }
    // Flipping every sign gives the same norm, so fix the sign of d_0.
    let mut best = 0.0f64;
    for mask in 0..(1u64 << (n - 1)) {
        let mut sum = delta[0];
        for (p, d) in delta.iter().enumerate().skip(1) {
            sum += if mask >> (p - 1) & 1 == 1 { -d } else { *d };
        }
        best = best.max(3.0 * sq - sum * sum / n as f64);
    }
    (best.sqrt(), false)
}

pub fn gpes_constants(
    report: &CertificateReport,
    timers: &Timers,
    epsilon: f64,
    kappa_fraction: f64,
) -> Result<GpesConstants> {
    if !report.feasible {
        return Err(Error::NotFeasible);
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param("epsilon", "must lie in (0, 1)"));
    }
    if !(kappa_fraction > 0.0 && kappa_fraction < 1.0) {
        return Err(Error::param("kappa_fraction", "must lie in (0, 1)"));
    }
    let n = timers.n_agents();
    let kappa = kappa_fraction * report.mu / report.p_t2_norm;
    let mu_bar = (report.mu - kappa * report.p_t2_norm) / report.alpha2;
    let (dmax, is_bound) = delta_max(&timers.delta);
    let t_min = timers.t_min();
    let kappa1 = (report.alpha2 / report.alpha1 * (mu_bar * (1.0 - epsilon) * t_min).exp()).sqrt();
    let kappa2 = kappa2_from(report.p_t2_norm, report.alpha1, mu_bar, kappa, dmax);
    let alpha = 0.5 * (mu_bar * epsilon).min(mu_bar * (1.0 - epsilon) * t_min / n as f64);
    Ok(GpesConstants {
        n_agents: n,
        mu: report.mu,
        alpha1: report.alpha1,
        alpha2: report.alpha2,
        p_t2_norm: report.p_t2_norm,
        kappa,
        mu_bar,
        epsilon,
        kappa1,
        kappa2,
        alpha,
        delta_max: dmax,
        delta_max_is_bound: is_bound,
        t_min,
        t_max: timers.t_max(),
        b_min: timers.b_min(),
        b_max: timers.b_max(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyncTime {
    /// Hybrid time `t + j` after which the tolerance is guaranteed.
    Bound(f64),
    /// The disturbance floor `√2·κ2` is not below the tolerance.
    NotGuaranteed,
}

pub fn sync_time(gc: &GpesConstants, nu: f64, initial_distance: f64) -> SyncTime {
    let target = nu / std::f64::consts::SQRT_2;
    if target <= gc.kappa2 {
        return SyncTime::NotGuaranteed;
    }
    if target >= gc.kappa1 * initial_distance + gc.kappa2 {
        return SyncTime::Bound(0.0);
    }
    let ratio = std::f64::consts::SQRT_2 * gc.kappa1 * initial_distance
        / (nu - std::f64::consts::SQRT_2 * gc.kappa2);
    SyncTime::Bound(ratio.ln() / gc.alpha)
}
