mod common;

use approx::assert_relative_eq;
use chns_core::init::{random_scalar, random_velocity};
use chns_core::spectral::*;
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid(n: usize) -> GridSpec {
    GridSpec::with_modes(n).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn params() -> PhysicsParams {
    PhysicsParams::new(0.7, 1.3, 0.9, 1.1, 0.6).unwrap()
}

#[test]
fn to_spectral_matches_direct_dft() {
    let g = grid(16);
    let f = random_scalar(g, &mut rng(1), 7, 1.0);
    let vals: Vec<f64> = sample(&f, 16).iter().map(|s| s.0).collect();
    let fast = to_spectral(&vals, g).unwrap();
    let slow = direct_dft(&vals, 16, g);
    assert!(max_coeff_diff(&fast, &slow) < 1e-13);
    let phys = to_physical(&f);
    for (a, b) in phys.iter().zip(&vals) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn a0_and_a1_match_multiplier() {
    let g = grid(16);
    let u = random_velocity(g, &mut rng(2), 7, 1.0);
    let au = a0_apply(&u);
    let phi = random_scalar(g, &mut rng(3), 7, 1.0);
    let ap = a1_apply(&phi);
    // -Laplacian from direct pointwise evaluation, transformed back directly.
    for (field, out) in [(u.x(), au.x()), (u.y(), au.y()), (&phi, &ap)] {
        let lap: Vec<f64> = sample(field, 16).iter().map(|s| -s.3).collect();
        let oracle = direct_dft(&lap, 16, g);
        assert!(max_coeff_diff(out, &oracle) < 1e-13 * (1.0 + oracle.max_abs()));
    }
}

#[test]
fn f_eval_of_cosine_is_cubic_identity() {
    let g = grid(16);
    let phi = SpectralField::cosine(g, 1, 0, 1.0);
    let p = PhysicsParams::new(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
    let out = f_eval(&phi, &p);
    let expected = &SpectralField::cosine(g, 1, 0, 0.75) + &SpectralField::cosine(g, 3, 0, 0.25);
    assert!(max_coeff_diff(&out, &expected) < 1e-15);
    // quadrature oracle on a fine grid
    let vals: Vec<f64> = sample(&phi, 32).iter().map(|s| s.0.powi(3)).collect();
    let oracle = direct_dft(&vals, 32, g);
    assert!(max_coeff_diff(&out, &oracle) < 1e-14);
}

#[test]
fn f_eval_and_mu_of_random_field_match_quadrature() {
    let g = grid(16);
    let p = params();
    let phi = random_scalar(g, &mut rng(4), 7, 0.8);
    let vals: Vec<f64> = sample(&phi, 32).iter().map(|s| p.f(s.0)).collect();
    let f_oracle = direct_dft(&vals, 32, g);
    assert!(max_coeff_diff(&f_eval(&phi, &p), &f_oracle) < 1e-13);
    let lap: Vec<f64> = sample(&phi, 16).iter().map(|s| -s.3).collect();
    let mut mu_oracle = direct_dft(&lap, 16, g).scale(p.nu1);
    mu_oracle.axpy(p.kappa, &f_oracle).unwrap();
    let mu = chemical_potential(&phi, &p);
    assert!(max_coeff_diff(&mu, &mu_oracle) < 1e-12);
}

#[test]
fn bilinear_terms_match_quadrature() {
    let g = grid(16);
    let p = params();
    let u = random_velocity(g, &mut rng(5), 7, 1.0);
    let v = random_velocity(g, &mut rng(6), 7, 1.0);
    let phi = random_scalar(g, &mut rng(7), 7, 1.0);
    let m = 32;
    let ux = sample(u.x(), m);
    let uy = sample(u.y(), m);
    let vx = sample(v.x(), m);
    let vy = sample(v.y(), m);
    let sp = sample(&phi, m);

    // b0
    let cx: Vec<f64> = (0..m * m).map(|i| ux[i].0 * vx[i].1 + uy[i].0 * vx[i].2).collect();
    let cy: Vec<f64> = (0..m * m).map(|i| ux[i].0 * vy[i].1 + uy[i].0 * vy[i].2).collect();
    let (ox, oy) = project_modes(&direct_dft(&cx, m, g), &direct_dft(&cy, m, g));
    let b0 = b0_apply(&u, &v).unwrap();
    assert!(max_coeff_diff(b0.x(), &ox) < 1e-11);
    assert!(max_coeff_diff(b0.y(), &oy) < 1e-11);

    // b1 = P nu1 (-lap phi) grad phi
    let fx: Vec<f64> = sp.iter().map(|s| p.nu1 * -s.3 * s.1).collect();
    let fy: Vec<f64> = sp.iter().map(|s| p.nu1 * -s.3 * s.2).collect();
    let (ox, oy) = project_modes(&direct_dft(&fx, m, g), &direct_dft(&fy, m, g));
    let b1 = b1_apply(&phi, &p);
    assert!(max_coeff_diff(b1.x(), &ox) < 1e-11);
    assert!(max_coeff_diff(b1.y(), &oy) < 1e-11);

    // b2 = u . grad phi
    let a: Vec<f64> = (0..m * m).map(|i| ux[i].0 * sp[i].1 + uy[i].0 * sp[i].2).collect();
    let b2 = b2_apply(&u, &phi).unwrap();
    assert!(max_coeff_diff(&b2, &direct_dft(&a, m, g)) < 1e-11);
}

#[test]
fn free_energy_of_cosine_and_random_field() {
    let g = grid(16);
    let p = PhysicsParams::new(0.8, 1.0, 0.0, 1.0, 1.0).unwrap();
    let phi = SpectralField::cosine(g, 1, 0, 1.0);
    // nu1/2 * int sin^2 x = nu1/2 * 2 pi^2
    assert_relative_eq!(free_energy(&phi, &p), 0.8 * std::f64::consts::PI.powi(2), max_relative = 1e-13);

    let p = params();
    let phi = random_scalar(g, &mut rng(8), 7, 0.9);
    let s = sample(&phi, 40);
    let dens: Vec<f64> = s
        .iter()
        .map(|v| 0.5 * p.nu1 * (v.1 * v.1 + v.2 * v.2) + p.kappa * potential(v.0, &p))
        .collect();
    assert_relative_eq!(free_energy(&phi, &p), quadrature(&dens, g), max_relative = 1e-12);
}

#[test]
fn parseval_for_sobolev_zero() {
    let g = grid(16);
    let phi = random_scalar(g, &mut rng(9), 7, 1.3);
    let vals: Vec<f64> = sample(&phi, 16).iter().map(|s| s.0 * s.0).collect();
    assert_relative_eq!(phi.sobolev_norm(0.0).powi(2), quadrature(&vals, g), max_relative = 1e-12);
}

fn vel(seed: u64, n: usize) -> VelocityField {
    random_velocity(grid(n), &mut rng(seed), (n / 2 - 1) as i64, 1.0)
}

fn scal(seed: u64, n: usize) -> SpectralField {
    random_scalar(grid(n), &mut rng(seed), (n / 2 - 1) as i64, 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trilinear_cancellations(seed in 0u64..1_000_000) {
        let u = vel(seed, 16);
        let v = vel(seed + 1, 16);
        let phi = scal(seed + 2, 16);
        let b0 = trilinear_b0(&u, &v, &v).unwrap();
        let b2 = trilinear_b2(&u, &phi, &phi).unwrap();
        prop_assert!(b0.abs() <= 1e-11 * u.l2_norm() * v.l2_norm() * v.l2_norm());
        prop_assert!(b2.abs() <= 1e-11 * u.l2_norm() * phi.l2_norm() * phi.l2_norm());
    }

    #[test]
    fn projection_idempotent_and_self_adjoint(seed in 0u64..1_000_000) {
        let g = grid(16);
        let a = VectorField::new(scal(seed, 16), scal(seed + 1, 16)).unwrap();
        let b = VectorField::new(scal(seed + 2, 16), scal(seed + 3, 16)).unwrap();
        let pa = leray_project(&a);
        let ppa = leray_project(pa.as_vector());
        prop_assert!(pa.max_divergence() <= 1e-13);
        prop_assert!(max_coeff_diff(pa.x(), ppa.x()) <= 1e-14);
        prop_assert!(max_coeff_diff(pa.y(), ppa.y()) <= 1e-14);
        let pb = leray_project(&b);
        let lhs = pa.as_vector().inner(&b);
        let rhs = a.inner(pb.as_vector());
        prop_assert!((lhs - rhs).abs() <= 1e-13 * a.l2_norm() * b.l2_norm());
        let _ = g;
    }

    #[test]
    fn linear_operators_superpose(seed in 0u64..1_000_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (p, q) = (scal(seed, 16), scal(seed + 1, 16));
        let mut comb = p.scale(a);
        comb.axpy(b, &q).unwrap();
        let mut expect = a1_apply(&p).scale(a);
        expect.axpy(b, &a1_apply(&q)).unwrap();
        prop_assert!(max_coeff_diff(&a1_apply(&comb), &expect) <= 1e-12);

        let (u, w) = (vel(seed + 2, 16), vel(seed + 3, 16));
        let mut uv = u.scale(a);
        uv.axpy(b, &w).unwrap();
        let mut ev = a0_apply(&u).scale(a);
        ev.axpy(b, &a0_apply(&w)).unwrap();
        let got = a0_apply(&uv);
        prop_assert!(max_coeff_diff(got.x(), ev.x()) <= 1e-12);
        prop_assert!(max_coeff_diff(got.y(), ev.y()) <= 1e-12);
    }

    #[test]
    fn spectral_round_trip(seed in 0u64..1_000_000) {
        let f = scal(seed, 16);
        let back = to_spectral(&to_physical(&f), f.grid()).unwrap();
        prop_assert!(max_coeff_diff(&f, &back) <= 1e-12);
    }
}
