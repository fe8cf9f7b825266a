//! Deterministic random smooth initial data.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::integrator::SystemState;
use crate::spectral::{leray_project, GridSpec, SpectralField, VectorField, VelocityField};

/// Zero-mean field with modes `|k_i| <= cutoff`, spectrum `~ 1/(1 + |k|^2)`,
/// rescaled to the given root-mean-square value.
pub fn random_scalar<R: Rng + ?Sized>(grid: GridSpec, rng: &mut R, cutoff: i64, rms: f64) -> SpectralField {
    let mut f = SpectralField::zeros(grid);
    let h = (grid.n() / 2) as i64 - 1;
    let c = cutoff.clamp(1, h);
    for kx in 0..=c {
        for ky in -c..=c {
            if kx == 0 && ky <= 0 {
                continue;
            }
            let k2 = (kx * kx + ky * ky) as f64;
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            f.set_mode(kx, ky, Complex64::new(re, im) / (1.0 + k2));
        }
    }
    rescale(f, rms, grid)
}

/// Divergence-free zero-mean velocity with modes `|k_i| <= cutoff`.
pub fn random_velocity<R: Rng + ?Sized>(grid: GridSpec, rng: &mut R, cutoff: i64, rms: f64) -> VelocityField {
    let v = VectorField {
        x: random_scalar(grid, rng, cutoff, 1.0),
        y: random_scalar(grid, rng, cutoff, 1.0),
    };
    let u = leray_project(&v);
    let norm = u.l2_norm() / grid.area().sqrt();
    if norm == 0.0 {
        u
    } else {
        u.scale(rms / norm)
    }
}

fn rescale(f: SpectralField, rms: f64, grid: GridSpec) -> SpectralField {
    let norm = f.l2_norm() / grid.area().sqrt();
    if norm == 0.0 {
        f
    } else {
        f.scale(rms / norm)
    }
}

/// Random smooth initial state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialCondition {
    pub phi_mean: f64,
    pub phi_rms: f64,
    pub u_rms: f64,
    pub cutoff: i64,
    pub seed: u64,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self {
            phi_mean: 0.0,
            phi_rms: 0.5,
            u_rms: 0.2,
            cutoff: 3,
            seed: 7,
        }
    }
}

impl InitialCondition {
    pub fn build(&self, grid: GridSpec) -> SystemState {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut phi = random_scalar(grid, &mut rng, self.cutoff, self.phi_rms);
        phi.axpy(1.0, &SpectralField::constant(grid, self.phi_mean))
            .expect("same grid");
        let u = random_velocity(grid, &mut rng, self.cutoff, self.u_rms);
        SystemState::new(u, phi).expect("same grid")
    }
}
