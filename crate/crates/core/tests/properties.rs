mod common;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chronosync::agent::{ResetRule, ResetSampler};
use chronosync::certificate::{
    certify, delta_max, m_of_tau, search_certificate, sync_time, Certificate, CertificateReport,
    SearchSettings, SyncTime,
};
use chronosync::config::Config;
use chronosync::disturbance::{Disturbance, DisturbanceModel};
use chronosync::ensemble::{
    apply_jump, build_f, ensemble_flow, pack, pack_views, stack_disturbance, unpack, EnsembleState, FlowMatrix,
    Timers,
};
use chronosync::graph::{build_graph, disagreement, spectral_basis, GraphSpec, SpectralData};

fn graph_strategy() -> impl Strategy<Value = SpectralData> {
    (2usize..=10, 0.1f64..0.9, any::<u64>()).prop_map(|(n, p, seed)| {
        spectral_basis(&build_graph(&GraphSpec::RandomConnected { n, p, seed }).unwrap()).unwrap()
    })
}

fn timers(n: usize) -> Timers {
    Timers::from_params(&vec![common::reference_params(1.0); n])
}

struct Fixture {
    sd: SpectralData,
    fm: FlowMatrix,
    timers: Timers,
    cert: Certificate,
    report: CertificateReport,
}

fn ring4() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let sd = spectral_basis(&build_graph(&GraphSpec::Ring { n: 4 }).unwrap()).unwrap();
        let fm = build_f(&sd, 0.72, 4.2, 3.0).unwrap();
        let timers = timers(4);
        let out = search_certificate(&fm, &sd, common::GAINS, &timers, &SearchSettings::default()).unwrap();
        let cert = out.certificate().expect("ring of four is certifiable").clone();
        let report = certify(&cert, &fm, &timers, 200).unwrap();
        Fixture { sd, fm, timers, cert, report }
    })
}

fn ensemble_state(n: usize, values: &[f64], tau: &[f64]) -> EnsembleState {
    let z = DVector::from_column_slice(&values[..4 * n - 1]);
    EnsembleState::from_z(&z, DVector::from_column_slice(&tau[..n]), 0.0, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_norm_matches_eta(sd in graph_strategy(), seed in any::<u64>()) {
        let n = sd.n_agents();
        let z: Vec<f64> = (0..n).map(|k| ((seed >> (k % 60)) as f64 % 97.0) - 48.0 + 0.5 * k as f64).collect();
        let z = DVector::from_vec(z);
        prop_assert!(((&sd.s * &z).norm() - sd.v.tr_mul(&z).norm()).abs() <= 1e-10 * (1.0 + z.norm()));
        prop_assert!(sd.v.tr_mul(&DVector::from_element(n, 1.0)).amax() <= 1e-10);
    }

    #[test]
    fn uniform_norm_at_most_root_two_eta(sd in graph_strategy(), theta in prop::collection::vec(-50.0f64..50.0, 10)) {
        let n = sd.n_agents();
        let dis = disagreement(&sd, &theta[..n]).unwrap();
        prop_assert!(dis.uniform_norm <= std::f64::consts::SQRT_2 * dis.eta_norm * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn shifting_all_clocks_keeps_disagreement(sd in graph_strategy(), theta in prop::collection::vec(-5.0f64..5.0, 10), c in -1e3f64..1e3) {
        let n = sd.n_agents();
        let a = disagreement(&sd, &theta[..n]).unwrap();
        let shifted: Vec<f64> = theta[..n].iter().map(|x| x + c).collect();
        let b = disagreement(&sd, &shifted).unwrap();
        prop_assert!((&a.eta - &b.eta).amax() <= 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn unpack_then_pack_is_identity(
        sd in graph_strategy(),
        values in prop::collection::vec(-10.0f64..10.0, 39),
        tau in prop::collection::vec(0.0f64..0.1, 10),
    ) {
        let n = sd.n_agents();
        let xi = ensemble_state(n, &values, &tau);
        let back = pack_views(&unpack(&xi, &sd).unwrap(), &sd, 0.0, 0).unwrap();
        prop_assert!((back.z() - xi.z()).amax() <= 1e-10);
        prop_assert_eq!(back.tau, xi.tau);
    }

    #[test]
    fn stacked_flow_matches_agents(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_graph(&mut rng, 2, 8);
        let sd = spectral_basis(&g).unwrap();
        let (states, params) = common::random_agents(&mut rng, &g);
        let drifts: Vec<f64> = params.iter().map(|p| p.drift).collect();
        let fm = build_f(&sd, 0.72, 4.2, 3.0).unwrap();
        let d: Vec<f64> = (0..g.n_agents()).map(|p| if p % 2 == 0 { 2e-5 } else { -1e-5 }).collect();
        let xi = pack(&states, &drifts, &sd, 0.0, 0).unwrap();
        let rates = ensemble_flow(&xi, &fm, &sd, &Timers::from_params(&params), &d).unwrap();
        let (z, tau) = common::composed_rates(&states, &params, &sd, &d);
        prop_assert!((rates.z - z).amax() <= 1e-9);
        prop_assert!((rates.tau - tau).amax() <= 1e-12);
    }

    #[test]
    fn disturbance_stack_norm(sd in graph_strategy(), d in prop::collection::vec(-1.0f64..1.0, 10)) {
        let n = sd.n_agents();
        let d = &d[..n];
        let stacked = stack_disturbance(&sd, d).unwrap();
        let sq: f64 = d.iter().map(|x| x * x).sum();
        let sum: f64 = d.iter().sum();
        prop_assert!((stacked.norm_squared() - (3.0 * sq - sum * sum / n as f64)).abs() <= 1e-10);
    }

    #[test]
    fn jump_touches_only_the_jumping_agent(
        values in prop::collection::vec(-10.0f64..10.0, 15),
        tau in prop::collection::vec(0.0f64..0.1, 4),
        p in 0usize..4,
        reset in 0.05f64..=0.1,
    ) {
        let f = ring4();
        let mut tau = tau;
        tau[p] = 0.0;
        let xi = ensemble_state(4, &values, &tau);
        let next = apply_jump(&xi, p, reset, &f.timers, 1e-9).unwrap();
        prop_assert_eq!(next.j, xi.j + 1);
        prop_assert_eq!(next.vartheta_tilde[p], 0.0);
        prop_assert_eq!(next.tau[p], reset);
        prop_assert_eq!(&next.eta, &xi.eta);
        prop_assert_eq!(&next.a_tilde, &xi.a_tilde);
        prop_assert_eq!(&next.theta_tilde, &xi.theta_tilde);
        for q in (0..4).filter(|&q| q != p) {
            prop_assert_eq!(next.vartheta_tilde[q], xi.vartheta_tilde[q]);
            prop_assert_eq!(next.tau[q], xi.tau[q]);
        }
        let before = f.cert.lyapunov_value(&xi.z(), xi.tau.as_slice());
        let after = f.cert.lyapunov_value(&next.z(), next.tau.as_slice());
        prop_assert!(after <= before);
    }

    #[test]
    fn lyapunov_value_is_quadratic_form(values in prop::collection::vec(-10.0f64..10.0, 15), tau in prop::collection::vec(0.0f64..=0.1, 4)) {
        let f = ring4();
        let xi = ensemble_state(4, &values, &tau);
        let z = xi.z();
        let p = f.cert.p_matrix(&tau);
        let dense = z.dot(&(&p * &z));
        let v = f.cert.lyapunov_value(&z, &tau);
        prop_assert!((v - dense).abs() <= 1e-9 * (1.0 + dense.abs()));
        let zz = z.norm_squared();
        prop_assert!(v >= f.report.alpha1 * zz * (1.0 - 1e-9));
        prop_assert!(v <= f.report.alpha2 * zz * (1.0 + 1e-9));
    }

    #[test]
    fn flow_matrix_condition_holds_inside_the_box(tau in prop::collection::vec(0.0f64..=0.1, 4), c in 0.01f64..100.0) {
        let f = ring4();
        let m = m_of_tau(&f.cert, &f.fm, &f.timers, &tau).unwrap();
        let top = m.clone().symmetric_eigen().eigenvalues.max();
        prop_assert!(top <= -f.report.mu * (1.0 - 1e-9));
        let scaled = m_of_tau(&f.cert.scaled(c), &f.fm, &f.timers, &tau).unwrap();
        prop_assert!((scaled - m * c).amax() <= 1e-9 * c);
    }

    #[test]
    fn disturbances_respect_bound(seed in any::<u64>(), t in 0.0f64..1e3, model in 0usize..4, p in 0usize..5) {
        let delta = [2e-5, 1e-5, 5e-5, 0.0, 3e-5];
        let model = match model {
            0 => DisturbanceModel::Zero,
            1 => DisturbanceModel::Constant { levels: vec![1.0, -1.0, 0.5, 1.0, -0.25] },
            2 => DisturbanceModel::Sinusoid { fraction: 1.0, frequency: 3.7 },
            _ => DisturbanceModel::PiecewiseRandom { hold: 1e-3 },
        };
        for independent in [false, true] {
            let d = Disturbance::new(model.clone(), &delta, seed, independent).unwrap();
            let s = d.sample(p, t, d.window_index(t));
            for v in [s.hardware, s.software, s.timer] {
                prop_assert!(v.abs() <= delta[p]);
            }
            if !independent {
                prop_assert!(s.hardware == s.software && s.software == s.timer);
            }
        }
    }

    #[test]
    fn reset_draws_stay_in_window(seed in any::<u64>(), agent in 0usize..6, t1 in 0.01f64..0.5, width in 0.0f64..0.5) {
        let mut sampler = ResetSampler::new(ResetRule::Uniform, 6, seed);
        for _ in 0..20 {
            let r = sampler.draw(agent, t1, t1 + width).unwrap();
            prop_assert!(r >= t1 && r <= t1 + width);
        }
    }

    #[test]
    fn delta_max_matches_corner_search(delta in prop::collection::vec(0.0f64..1e-4, 2..8)) {
        let n = delta.len();
        let sd = spectral_basis(&build_graph(&GraphSpec::Path { n }).unwrap()).unwrap();
        let mut best = 0.0f64;
        for mask in 0..(1u32 << n) {
            let d: Vec<f64> = (0..n).map(|p| if mask >> p & 1 == 1 { delta[p] } else { -delta[p] }).collect();
            best = best.max(stack_disturbance(&sd, &d).unwrap().norm());
        }
        let (dm, is_bound) = delta_max(&delta);
        prop_assert!(!is_bound);
        prop_assert!((dm - best).abs() <= 1e-12 * (1.0 + best));
        let sq: f64 = delta.iter().map(|x| x * x).sum();
        prop_assert!(dm <= (3.0 * sq).sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn sync_time_shrinks_as_tolerance_grows(d0 in 0.1f64..100.0, nu in 0.05f64..1.0) {
        let f = ring4();
        let gc = chronosync::certificate::gpes_constants(&f.report, &f.timers, 0.5, 0.5).unwrap();
        match (sync_time(&gc, nu, d0), sync_time(&gc, 2.0 * nu, d0)) {
            (SyncTime::Bound(a), SyncTime::Bound(b)) => prop_assert!(b <= a && b >= 0.0),
            (SyncTime::NotGuaranteed, _) => prop_assert!(nu / std::f64::consts::SQRT_2 <= gc.kappa2),
            (SyncTime::Bound(_), SyncTime::NotGuaranteed) => prop_assert!(false),
        }
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), n in 2usize..30, t_end in 0.1f64..500.0) {
        let mut cfg = Config::default();
        cfg.seed = seed;
        cfg.graph.n = n;
        cfg.simulation.t_end = t_end;
        let back = Config::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn lower_norm_bound_fails_on_a_long_ramp() {
    let n = 8;
    let sd = spectral_basis(&build_graph(&GraphSpec::Path { n }).unwrap()).unwrap();
    let ramp: Vec<f64> = (0..n).map(|p| p as f64).collect();
    let dis = disagreement(&sd, &ramp).unwrap();
    assert_eq!(dis.uniform_norm, 1.0);
    assert!(dis.eta_norm / (n as f64).sqrt() > 1.0);
}

#[test]
fn flow_condition_is_checked_densely() {
    let f = ring4();
    let p = f.cert.p_matrix(&[0.1; 4]);
    assert!((p.clone().symmetric_eigen().eigenvalues.max() - f.report.p_t2_norm).abs() <= 1e-9 * f.report.p_t2_norm);
    let m = m_of_tau(&f.cert, &f.fm, &f.timers, &[0.0, 0.1, 0.0, 0.1]).unwrap();
    let f_dense: &DMatrix<f64> = &f.fm.f;
    let p = f.cert.p_matrix(&[0.0, 0.1, 0.0, 0.1]);
    let mut q = DMatrix::zeros(15, 15);
    for k in 0..4 {
        q[(3 + k, 3 + k)] = -f.cert.sigma * f.timers.b_min() * p[(3 + k, 3 + k)];
    }
    let oracle = f_dense.transpose() * &p + &p * f_dense + q;
    assert!((&m - &oracle).amax() <= 1e-9 * oracle.amax());
    assert_eq!(f.sd.n_agents(), 4);
}
