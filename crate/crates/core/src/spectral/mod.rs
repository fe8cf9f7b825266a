//! Fourier representation of fields on the doubly periodic square `[0, L)^2`
//! and the spatial operators of the weak formulation.
//!
//! Coefficients are stored Hermitian-packed: `n` rows in FFT order for `ky`
//! and `n/2 + 1` columns for `kx >= 0`. The Nyquist row and column are kept
//! at zero so that every stored field is the Fourier series of a real
//! function, `f(x) = sum_k coeff(k) exp(i k.x)`, and `coeff(0)` is the mean.

mod field;
mod ops;
pub(crate) mod transform;

pub use field::{to_physical, to_spectral, SobolevNorm, SpectralField, VectorField, VelocityField};
pub use ops::{
    a0_apply, a1_apply, b0_apply, b1_apply, b2_apply, capillary_product, chemical_potential,
    convective_product, f_eval, free_energy, gradient, leray_project, potential, trilinear_b0,
    trilinear_b1, trilinear_b2,
};
pub(crate) use ops::{potential_integral, project_in_place};

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Resolution and geometry of the periodic domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    n: usize,
    length: f64,
    pad: usize,
}

impl GridSpec {
    /// `n` modes per dimension on a `[0, length)^2` torus; products are formed
    /// on an `(n * pad)^2` collocation grid.
    pub fn new(n: usize, length: f64, pad: usize) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "N must be even and at least 8, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("L must be positive, got {length}")));
        }
        if pad == 0 {
            return Err(Error::InvalidGrid("dealias pad must be at least 1".into()));
        }
        Ok(Self { n, length, pad })
    }

    /// `n` modes on the `2 pi` torus with padding factor 2.
    pub fn with_modes(n: usize) -> Result<Self> {
        Self::new(n, 2.0 * PI, 2)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn with_pad(self, pad: usize) -> Result<Self> {
        Self::new(self.n, self.length, pad)
    }

    /// Stored columns (`kx = 0..=n/2`).
    pub fn cols(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn len(&self) -> usize {
        self.n * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn padded_size(&self) -> usize {
        self.n * self.pad
    }

    pub fn area(&self) -> f64 {
        self.length * self.length
    }

    /// Physical wavenumber of one integer step, `2 pi / L`.
    pub fn k_unit(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Signed integer wavenumber of storage row `row`.
    pub fn signed(&self, row: usize) -> i64 {
        if row <= self.n / 2 {
            row as i64
        } else {
            row as i64 - self.n as i64
        }
    }

    /// Whether the integer wavevector is retained (Nyquist excluded).
    pub fn is_retained(&self, kx: i64, ky: i64) -> bool {
        let h = (self.n / 2) as i64;
        kx.abs() < h && ky.abs() < h
    }

    /// Storage index of `(kx, ky)` with `kx >= 0`.
    pub fn index(&self, kx: i64, ky: i64) -> Option<usize> {
        if kx < 0 || !self.is_retained(kx, ky) {
            return None;
        }
        let row = ky.rem_euclid(self.n as i64) as usize;
        Some(row * self.cols() + kx as usize)
    }

    /// Integer wavevector stored at `idx`.
    pub fn wavevector(&self, idx: usize) -> (i64, i64) {
        let row = idx / self.cols();
        let col = idx % self.cols();
        (col as i64, self.signed(row))
    }

    /// Physical wavevector stored at `idx`.
    pub fn kvec(&self, idx: usize) -> (f64, f64) {
        let (kx, ky) = self.wavevector(idx);
        let u = self.k_unit();
        (kx as f64 * u, ky as f64 * u)
    }

    pub fn k2(&self, idx: usize) -> f64 {
        let (kx, ky) = self.kvec(idx);
        kx * kx + ky * ky
    }

    /// `|k|^2` for every stored index.
    pub(crate) fn k2_table(&self) -> Vec<f64> {
        let unit = self.k_unit();
        let mut out = Vec::with_capacity(self.len());
        for row in 0..self.n {
            let ky = self.signed(row) as f64 * unit;
            out.extend((0..self.cols()).map(|c| {
                let kx = c as f64 * unit;
                kx * kx + ky * ky
            }));
        }
        out
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: format!("{self:?}"),
                right: format!("{other:?}"),
            })
        }
    }
}

/// Physical coefficients of the coupled system.
///
/// `nu1` is the interface coefficient, `nu2` the mobility, `kappa` the
/// potential strength and `f(s) = c1 s^3 - c2 s` the potential derivative.
/// `kappa`, `c1` and `c2` may be zero to switch off the potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicsParams {
    pub nu1: f64,
    pub nu2: f64,
    pub kappa: f64,
    pub c1: f64,
    pub c2: f64,
}

impl PhysicsParams {
    pub fn new(nu1: f64, nu2: f64, kappa: f64, c1: f64, c2: f64) -> Result<Self> {
        let p = Self {
            nu1,
            nu2,
            kappa,
            c1,
            c2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("nu1", self.nu1), ("nu2", self.nu2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [("kappa", self.kappa), ("c1", self.c1), ("c2", self.c2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Pointwise `f(s) = c1 s^3 - c2 s`.
    pub fn f(&self, s: f64) -> f64 {
        self.c1 * s * s * s - self.c2 * s
    }

    /// Pointwise minimum of `kappa F`, attained at `s^2 = c2 / c1`.
    pub fn potential_floor(&self) -> f64 {
        if self.c1 > 0.0 {
            -self.kappa * self.c2 * self.c2 / (4.0 * self.c1)
        } else if self.c2 > 0.0 && self.kappa > 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    }
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            nu1: 0.5,
            nu2: 1.0,
            kappa: 1.0,
            c1: 1.0,
            c2: 1.0,
        }
    }
}
