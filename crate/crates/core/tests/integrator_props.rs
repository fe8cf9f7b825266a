mod common;

use chns_core::diagnostics::{balance_residual, energy_report, BalanceRecorder, SnapshotRecorder};
use chns_core::init::{random_scalar, random_velocity, InitialCondition};
use chns_core::integrator::{
    em_order_probe, exact_linear_solution, simulate, step, OrderReference, RunControl, SchemeConfig, SystemState,
};
use chns_core::noise::{NoiseModel, WienerIncrement};
use chns_core::spectral::{GridSpec, PhysicsParams, SpectralField, VectorField, VelocityField};
use chns_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid(n: usize) -> GridSpec {
    GridSpec::with_modes(n).unwrap()
}

fn run(initial: &SystemState, p: &PhysicsParams, noise: &NoiseModel, scheme: &SchemeConfig, t: f64, member: u64) -> SystemState {
    let mut ctl = RunControl::new(member);
    simulate(initial, p, noise, scheme, t, &mut ctl).unwrap()
}

#[test]
fn zero_horizon_returns_the_initial_state() {
    let g = grid(16);
    let p = PhysicsParams::default();
    let s0 = InitialCondition::default().build(g);
    let noise = NoiseModel::with_decay(g, 4, 0.3, 1.0, 1.0, 0.5, 1).unwrap();
    let end = run(&s0, &p, &noise, &SchemeConfig::stabilized(0.01, &p), 0.0, 0);
    assert_eq!(end, s0);
}

#[test]
fn same_member_is_bit_identical_and_members_differ() {
    let g = grid(16);
    let p = PhysicsParams::default();
    let s0 = InitialCondition::default().build(g);
    let noise = NoiseModel::with_decay(g, 4, 0.3, 1.0, 1.0, 0.5, 1).unwrap();
    let sch = SchemeConfig::stabilized(0.01, &p);
    let a = run(&s0, &p, &noise, &sch, 0.5, 3);
    let b = run(&s0, &p, &noise, &sch, 0.5, 3);
    let c = run(&s0, &p, &noise, &sch, 0.5, 4);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.step, 50);
}

#[test]
fn one_step_matches_the_implicit_multiplier() {
    // kappa = 0, no noise, single modes: every nonlinear term vanishes, so a
    // step multiplies mode k of u by 1/(1 + dt |k|^2) and of phi by
    // 1/(1 + dt nu2 nu1 |k|^4).
    let g = grid(16);
    let p = PhysicsParams {
        kappa: 0.0,
        nu1: 0.7,
        nu2: 1.3,
        ..PhysicsParams::default()
    };
    let dt = 0.03;
    let phi = SpectralField::cosine(g, 2, 1, 0.8);
    let s0 = SystemState::new(VelocityField::zeros(g), phi).unwrap();
    let (s1, _) = step(&s0, &p, &NoiseModel::none(g), &SchemeConfig::new(dt, 0.0), &WienerIncrement::zero(0, dt)).unwrap();
    let k4 = 25.0;
    let expect = 0.4 / (1.0 + dt * p.nu2 * p.nu1 * k4);
    assert!((s1.phi.mode(2, 1).re - expect).abs() < 1e-15);

    let u = VelocityField::try_from_vector(
        VectorField::new(SpectralField::sine(g, 0, 3, 1.0), SpectralField::zeros(g)).unwrap(),
        1e-14,
    )
    .unwrap();
    let s0 = SystemState::new(u, SpectralField::zeros(g)).unwrap();
    let (s1, _) = step(&s0, &p, &NoiseModel::none(g), &SchemeConfig::new(dt, 0.0), &WienerIncrement::zero(0, dt)).unwrap();
    let ratio = s1.u.x().mode(0, 3).im / s0.u.x().mode(0, 3).im;
    assert!((ratio - 1.0 / (1.0 + 9.0 * dt)).abs() < 1e-15);
}

#[test]
fn exact_linear_reference_is_approached_at_first_order() {
    let g = grid(16);
    let p = PhysicsParams {
        kappa: 0.0,
        ..PhysicsParams::default()
    };
    let s0 = SystemState::new(VelocityField::zeros(g), SpectralField::cosine(g, 1, 1, 1.0)).unwrap();
    let exact = exact_linear_solution(&s0, &p, 0.5);
    // phi(k, t) = exp(-nu2 nu1 |k|^4 t) phi(k, 0) with |k|^4 = 4
    assert!((exact.phi.mode(1, 1).re - 0.5 * (-p.nu2 * p.nu1 * 4.0 * 0.5f64).exp()).abs() < 1e-15);
    let r = em_order_probe(
        &s0,
        &p,
        &NoiseModel::none(g),
        &SchemeConfig::new(0.01, 0.0),
        &[0.02, 0.01, 0.005],
        0.5,
        1,
        OrderReference::ExactLinear,
    )
    .unwrap();
    assert!((r.slope - 1.0).abs() < 0.1, "slope {}", r.slope);
    assert!(r.errors.windows(2).all(|e| e[1] < e[0]));
}

#[test]
fn exact_reference_rejects_noise_and_short_lists() {
    let g = grid(8);
    let p = PhysicsParams::default();
    let s0 = SystemState::rest(g, 0.0);
    let noise = NoiseModel::with_decay(g, 2, 0.1, 1.0, 1.0, 0.0, 1).unwrap();
    let sch = SchemeConfig::stabilized(0.01, &p);
    assert!(em_order_probe(&s0, &p, &noise, &sch, &[0.02, 0.01, 0.005], 0.1, 1, OrderReference::ExactLinear).is_err());
    assert!(em_order_probe(&s0, &p, &noise, &sch, &[0.02, 0.01], 0.1, 1, OrderReference::Fine { refinement: 2 }).is_err());
    assert!(em_order_probe(&s0, &p, &noise, &sch, &[0.01, 0.02, 0.005], 0.1, 1, OrderReference::Fine { refinement: 2 }).is_err());
}

#[test]
fn blow_up_aborts_with_the_last_good_state() {
    let g = grid(16);
    let p = PhysicsParams {
        kappa: 50.0,
        ..PhysicsParams::default()
    };
    let mut s0 = InitialCondition::default().build(g);
    s0.phi = s0.phi.scale(40.0);
    let mut ctl = RunControl::new(0);
    let err = simulate(&s0, &p, &NoiseModel::none(g), &SchemeConfig::new(0.1, 0.0), 100.0, &mut ctl).unwrap_err();
    assert!(matches!(err.error, Error::BlowUp { .. }), "{}", err.error);
    assert!(err.last_good.is_finite());
}

#[test]
fn balance_residual_shrinks_with_dt() {
    let g = grid(16);
    let p = PhysicsParams::default();
    let s0 = InitialCondition::default().build(g);
    let noise = NoiseModel::with_decay(g, 4, 0.3, 1.0, 1.0, 0.5, 9).unwrap();
    let mut means = Vec::new();
    for dt in [0.02, 0.01, 0.005] {
        let mut sum = 0.0;
        for m in 0..8 {
            let mut rec = BalanceRecorder::new(&s0, p);
            {
                let mut ctl = RunControl::new(m).observer(&mut rec);
                simulate(&s0, &p, &noise, &SchemeConfig::stabilized(dt, &p), 0.5, &mut ctl).unwrap();
            }
            sum += balance_residual(rec.trace()).unwrap();
        }
        means.push((sum / 8.0).abs());
    }
    assert!(means[0] > 1.5 * means[1] && means[1] > 1.5 * means[2], "{means:?}");
}

#[test]
fn holder_bound_grows_with_refinement_and_alpha() {
    let g = grid(16);
    let p = PhysicsParams::default();
    let s0 = InitialCondition::default().build(g);
    let noise = NoiseModel::with_decay(g, 4, 0.3, 1.0, 1.0, 0.5, 9).unwrap();
    let sch = SchemeConfig::stabilized(0.005, &p);
    let mut coarse = SnapshotRecorder::new(&s0, 32);
    let mut fine = SnapshotRecorder::new(&s0, 16);
    {
        let mut ctl = RunControl::new(0).observer(&mut coarse).observer(&mut fine);
        simulate(&s0, &p, &noise, &sch, 0.96, &mut ctl).unwrap();
    }
    for s in [-1.0, 0.0] {
        let c = coarse.velocity.holder_seminorm(0.3, s).unwrap();
        let f = fine.velocity.holder_seminorm(0.3, s).unwrap();
        assert!(f >= c, "subgrid sup must not exceed the finer one");
        // all gaps are below 1, so |dt|^alpha falls as alpha grows
        let lo = fine.phase.holder_seminorm(0.1, s).unwrap();
        let hi = fine.phase.holder_seminorm(0.4, s).unwrap();
        assert!(hi >= lo);
    }
}

fn random_state(seed: u64, n: usize, rms: f64) -> SystemState {
    let g = grid(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_velocity(g, &mut rng, 4, rms);
    let mut phi = random_scalar(g, &mut rng, 4, 0.6);
    phi.set_mode(0, 0, (0.1 * (seed % 7) as f64 - 0.3).into());
    SystemState::new(u, phi).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mass_and_divergence_are_preserved(seed in 0u64..10_000, member in 0u64..100) {
        let s0 = random_state(seed, 16, 0.5);
        let g = s0.grid();
        let p = PhysicsParams::default();
        let noise = NoiseModel::with_decay(g, 6, 0.4, 0.5, 1.0, 0.7, seed).unwrap();
        let end = run(&s0, &p, &noise, &SchemeConfig::stabilized(0.005, &p), 0.1, member);
        prop_assert!((end.phi.mean() - s0.phi.mean()).abs() <= 1e-12);
        prop_assert!(end.u.max_divergence() <= 1e-12);
        prop_assert!(end.u.mean().0.abs() <= 1e-15 && end.u.mean().1.abs() <= 1e-15);
    }

    #[test]
    fn deterministic_energy_never_rises(seed in 0u64..10_000) {
        let s = random_state(seed, 16, 0.3);
        let g = s.grid();
        let p = PhysicsParams::default();
        let sch = SchemeConfig::stabilized(1e-3, &p);
        let none = NoiseModel::none(g);
        let mut cur = s;
        let mut e = energy_report(&cur, &p).total;
        for _ in 0..40 {
            cur = step(&cur, &p, &none, &sch, &WienerIncrement::zero(0, 1e-3)).unwrap().0;
            let next = energy_report(&cur, &p).total;
            prop_assert!(next <= e + 1e-10 * e.abs());
            e = next;
        }
    }
}
