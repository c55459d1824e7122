mod common;

use approx::assert_relative_eq;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chronosync::agent::Gains;
use chronosync::certificate::{
    certify, gpes_constants, m_of_tau, sample_set, search_certificate, sync_time, GpesConstants, SearchOutcome,
    SearchSettings, SyncTime,
};
use chronosync::ensemble::{build_f, FlowMatrix, Timers};
use chronosync::graph::{build_graph, spectral_basis, GraphSpec, SpectralData};
use chronosync::Error;

fn setup(spec: GraphSpec, k_u: f64) -> (SpectralData, FlowMatrix, Timers) {
    let sd = spectral_basis(&build_graph(&spec).unwrap()).unwrap();
    let fm = build_f(&sd, k_u, 4.2, 3.0).unwrap();
    let timers = Timers::from_params(&vec![common::reference_params(1.0); sd.n_agents()]);
    (sd, fm, timers)
}

fn path2() -> (SpectralData, FlowMatrix, Timers, SearchOutcome) {
    let (sd, fm, timers) = setup(GraphSpec::Path { n: 2 }, 0.72);
    let out = search_certificate(&fm, &sd, common::GAINS, &timers, &SearchSettings::default()).unwrap();
    (sd, fm, timers, out)
}

#[test]
fn two_agent_path_is_certified() {
    let (_, fm, timers, out) = path2();
    let SearchOutcome::Feasible { certificate, report, .. } = &out else { panic!("expected a certificate") };
    assert!(report.feasible && report.exact && report.corollary_check);
    assert_relative_eq!(report.mu, 1.767726949420365, max_relative = 1e-9);
    assert_relative_eq!(report.alpha1, 0.5374458102375536, max_relative = 1e-9);
    assert_relative_eq!(report.alpha2, 3.4532602719197367, max_relative = 1e-9);
    assert_relative_eq!(report.corollary_lambda_max, -4.936206080681118, max_relative = 1e-9);
    assert_relative_eq!(certificate.sigma, 12.391132474155148, max_relative = 1e-9);

    let m0 = m_of_tau(certificate, &fm, &timers, &[0.0, 0.0]).unwrap();
    let mut eig: Vec<f64> = m0.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let pinned = [
        -12.49393976207684,
        -9.657206333411752,
        -3.9316750064193844,
        -2.7903938199324,
        -2.790393819932403,
        -2.687338709361249,
        -1.767726949420365,
    ];
    for (a, b) in eig.iter().zip(pinned) {
        assert_relative_eq!(*a, b, max_relative = 1e-8);
    }
}

#[test]
fn p2_at_zero_is_the_weights() {
    let (_, _, _, out) = path2();
    let cert = out.certificate().unwrap();
    assert_eq!(cert.p2_diag(&[0.0, 0.0]), cert.p2_weights);
}

#[test]
fn sampled_flow_condition_holds_for_random_directions() {
    let (_, fm, timers, out) = path2();
    let SearchOutcome::Feasible { certificate, report, .. } = &out else { panic!() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (taus, _) = sample_set(&timers, 200);
    for tau in &taus {
        let m = m_of_tau(certificate, &fm, &timers, tau).unwrap();
        for _ in 0..5 {
            let z = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
            assert!(z.dot(&(&m * &z)) <= -report.mu * z.norm_squared() + 1e-9);
        }
        let p = certificate.p_matrix(tau).symmetric_eigen().eigenvalues;
        assert!(p.min() >= report.alpha1 * (1.0 - 1e-12));
        assert!(p.max() <= report.alpha2 * (1.0 + 1e-12));
    }
}

#[test]
fn without_consensus_gain_no_certificate_exists() {
    let (sd, fm, timers) = setup(GraphSpec::Path { n: 2 }, 0.0);
    let gains = Gains { k_u: 0.0, ..common::GAINS };
    let out = search_certificate(&fm, &sd, gains, &timers, &SearchSettings::default()).unwrap();
    match out {
        SearchOutcome::Infeasible { best_margin, evaluations, .. } => {
            assert!(best_margin <= 0.0);
            assert!(evaluations <= SearchSettings::default().budget);
        }
        SearchOutcome::Feasible { .. } => panic!("k_u = 0 must not certify"),
    }
}

#[test]
fn search_is_deterministic() {
    let (sd, fm, timers) = setup(GraphSpec::Ring { n: 5 }, 0.72);
    let s = SearchSettings { seed: 9, ..SearchSettings::default() };
    let a = search_certificate(&fm, &sd, common::GAINS, &timers, &s).unwrap();
    let b = search_certificate(&fm, &sd, common::GAINS, &timers, &s).unwrap();
    assert_eq!(a.certificate(), b.certificate());
    assert!(a.certificate().is_some());
}

#[test]
fn scaling_scales_the_report() {
    let (_, fm, timers, out) = path2();
    let cert = out.certificate().unwrap();
    let base = certify(cert, &fm, &timers, 100).unwrap();
    for c in [0.25, 3.0, 40.0] {
        let r = certify(&cert.scaled(c), &fm, &timers, 100).unwrap();
        assert_relative_eq!(r.mu, c * base.mu, max_relative = 1e-9);
        assert_relative_eq!(r.alpha1, c * base.alpha1, max_relative = 1e-9);
        assert_relative_eq!(r.alpha2, c * base.alpha2, max_relative = 1e-9);
        assert_eq!(r.feasible, base.feasible);
    }
}

#[test]
fn constants_follow_their_definitions() {
    let (_, _, timers, out) = path2();
    let SearchOutcome::Feasible { report, .. } = &out else { panic!() };
    let gc = gpes_constants(report, &timers, 0.5, 0.5).unwrap();
    let kappa = 0.5 * report.mu / report.p_t2_norm;
    let mu_bar = (report.mu - kappa * report.p_t2_norm) / report.alpha2;
    let dmax = (3.0f64 * 2.0 * 4e-10).sqrt();
    assert_relative_eq!(gc.kappa, kappa, max_relative = 1e-12);
    assert_relative_eq!(gc.mu_bar, mu_bar, max_relative = 1e-12);
    assert_relative_eq!(gc.delta_max, dmax, max_relative = 1e-12);
    assert_relative_eq!(
        gc.kappa2,
        (report.p_t2_norm / (report.alpha1 * mu_bar * kappa)).sqrt() * dmax,
        max_relative = 1e-12
    );
    assert_relative_eq!(gc.alpha, 0.5 * (mu_bar * 0.5).min(mu_bar * 0.5 * 0.05 / 2.0), max_relative = 1e-12);

    let quiet = Timers { delta: vec![0.0; 2], ..timers.clone() };
    let gc0 = gpes_constants(report, &quiet, 0.5, 0.5).unwrap();
    assert_eq!(gc0.delta_max, 0.0);
    assert_eq!(gc0.kappa2, 0.0);

    let near_one = gpes_constants(report, &timers, 1.0 - 1e-9, 0.5).unwrap();
    assert_relative_eq!(near_one.alpha, 0.5 * near_one.mu_bar * 1e-9 * 0.05 / 2.0, max_relative = 1e-6);

    let mut bad = report.clone();
    bad.feasible = false;
    assert_eq!(gpes_constants(&bad, &timers, 0.5, 0.5), Err(Error::NotFeasible));
    assert!(gpes_constants(report, &timers, 1.0, 0.5).is_err());
    assert!(gpes_constants(report, &timers, 0.5, 0.0).is_err());
}

fn unit_constants(kappa1: f64, kappa2: f64, alpha: f64) -> GpesConstants {
    GpesConstants {
        n_agents: 2,
        mu: 1.0,
        alpha1: 1.0,
        alpha2: 1.0,
        p_t2_norm: 1.0,
        kappa: 0.5,
        mu_bar: 0.5,
        epsilon: 0.5,
        kappa1,
        kappa2,
        alpha,
        delta_max: 0.0,
        delta_max_is_bound: false,
        t_min: 0.05,
        t_max: 0.1,
        b_min: 1.0,
        b_max: 1.0,
    }
}

#[test]
fn sync_time_cases() {
    let gc = unit_constants(1.0, 0.0, 1.0);
    let nu = std::f64::consts::SQRT_2 / std::f64::consts::E;
    match sync_time(&gc, nu, 1.0) {
        SyncTime::Bound(t) => assert_relative_eq!(t, 1.0, max_relative = 1e-12),
        SyncTime::NotGuaranteed => panic!(),
    }
    assert_eq!(sync_time(&gc, nu, 0.0), SyncTime::Bound(0.0));

    let floor = unit_constants(1.0, 0.01, 1.0);
    assert_eq!(sync_time(&floor, std::f64::consts::SQRT_2 * 0.01, 1.0), SyncTime::NotGuaranteed);
    assert_eq!(sync_time(&floor, 0.005, 1.0), SyncTime::NotGuaranteed);
    assert_eq!(sync_time(&floor, 10.0, 1.0), SyncTime::Bound(0.0));
}
