use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use super::transform::plan;
use super::GridSpec;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Real scalar field stored as truncated, Hermitian-packed Fourier coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![ZERO; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(value, 0.0);
        f
    }

    /// Builds a field from packed coefficients; the Nyquist entries must be
    /// zero and the `kx = 0` column is symmetrized.
    pub fn from_coeffs(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: coeffs.len(),
            });
        }
        let mut f = Self { grid, coeffs };
        let (n, gc) = (grid.n(), grid.cols());
        for c in &mut f.coeffs[(n / 2) * gc..(n / 2 + 1) * gc] {
            *c = ZERO;
        }
        for row in 0..n {
            f.coeffs[row * gc + n / 2] = ZERO;
        }
        f.enforce_hermitian();
        Ok(f)
    }

    /// Packed coefficients taken verbatim (no symmetrization), for bit-exact restore.
    pub(crate) fn from_raw(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    /// Sum of `amp * exp(i k.x) + conj` style terms: sets `coeff(k) = c` and
    /// `coeff(-k) = conj(c)`.
    pub fn set_mode(&mut self, kx: i64, ky: i64, c: Complex64) {
        let (kx, ky, c) = if kx < 0 || (kx == 0 && ky < 0) {
            (-kx, -ky, c.conj())
        } else {
            (kx, ky, c)
        };
        if let Some(idx) = self.grid.index(kx, ky) {
            if kx == 0 && ky == 0 {
                self.coeffs[idx] = Complex64::new(c.re, 0.0);
                return;
            }
            self.coeffs[idx] = c;
            if kx == 0 {
                let partner = self.grid.index(0, -ky).expect("retained partner");
                self.coeffs[partner] = c.conj();
            }
        }
    }

    /// Coefficient of integer wavevector `(kx, ky)`, zero if not retained.
    pub fn mode(&self, kx: i64, ky: i64) -> Complex64 {
        if kx < 0 {
            self.grid.index(-kx, -ky).map_or(ZERO, |i| self.coeffs[i].conj())
        } else {
            self.grid.index(kx, ky).map_or(ZERO, |i| self.coeffs[i])
        }
    }

    /// `cos(kx x + ky y)` with integer wavenumbers in units of `2 pi / L`.
    pub fn cosine(grid: GridSpec, kx: i64, ky: i64, amplitude: f64) -> Self {
        let mut f = Self::zeros(grid);
        if kx == 0 && ky == 0 {
            f.coeffs[0] = Complex64::new(amplitude, 0.0);
        } else {
            f.set_mode(kx, ky, Complex64::new(0.5 * amplitude, 0.0));
        }
        f
    }

    /// `sin(kx x + ky y)`.
    pub fn sine(grid: GridSpec, kx: i64, ky: i64, amplitude: f64) -> Self {
        let mut f = Self::zeros(grid);
        if kx != 0 || ky != 0 {
            f.set_mode(kx, ky, Complex64::new(0.0, -0.5 * amplitude));
        }
        f
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Spatial mean, `<f> = coeff(0)`.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Applies a real multiplier `m(kx, ky)` (physical wavevector) modewise.
    pub fn map_modes(&self, mut m: impl FnMut(f64, f64) -> f64) -> Self {
        let mut out = self.clone();
        let gc = self.grid.cols();
        let unit = self.grid.k_unit();
        for (row, chunk) in out.coeffs.chunks_exact_mut(gc).enumerate() {
            let ky = self.grid.signed(row) as f64 * unit;
            for (col, c) in chunk.iter_mut().enumerate() {
                *c *= m(col as f64 * unit, ky);
            }
        }
        out
    }

    /// Applies a complex multiplier modewise.
    pub fn map_modes_complex(&self, mut m: impl FnMut(f64, f64) -> Complex64) -> Self {
        let mut out = self.clone();
        let gc = self.grid.cols();
        let unit = self.grid.k_unit();
        for (row, chunk) in out.coeffs.chunks_exact_mut(gc).enumerate() {
            let ky = self.grid.signed(row) as f64 * unit;
            for (col, c) in chunk.iter_mut().enumerate() {
                *c *= m(col as f64 * unit, ky);
            }
        }
        out
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= a);
        out
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o * a;
        }
        Ok(())
    }

    /// L2 inner product `int f g dx` over the torus.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let gc = self.grid.cols();
        let mut sum = 0.0;
        for (ra, rb) in self.coeffs.chunks_exact(gc).zip(other.coeffs.chunks_exact(gc)) {
            sum += (ra[0] * rb[0].conj()).re;
            for (a, b) in ra[1..].iter().zip(&rb[1..]) {
                sum += 2.0 * (a * b.conj()).re;
            }
        }
        sum * self.grid.area()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.weighted_norm_sq(|_| 1.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `||grad f||^2`.
    pub fn grad_norm_sq(&self) -> f64 {
        self.weighted_norm_sq(|k2| k2)
    }

    /// `area * sum_k w(|k|^2) |coeff(k)|^2` over the full spectrum.
    pub fn weighted_norm_sq(&self, w: impl Fn(f64) -> f64) -> f64 {
        let gc = self.grid.cols();
        let unit = self.grid.k_unit();
        let mut sum = 0.0;
        for (row, chunk) in self.coeffs.chunks_exact(gc).enumerate() {
            let ky = self.grid.signed(row) as f64 * unit;
            for (col, c) in chunk.iter().enumerate() {
                let kx = col as f64 * unit;
                let weight = if col == 0 { 1.0 } else { 2.0 };
                sum += weight * w(kx * kx + ky * ky) * c.norm_sqr();
            }
        }
        sum * self.grid.area()
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest violation of `coeff(-k) = conj(coeff(k))` on the `kx = 0` column.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n() as i64;
        let mut worst = self.coeffs[0].im.abs();
        for ky in 1..n / 2 {
            let a = self.mode_raw(0, ky);
            let b = self.mode_raw(0, -ky);
            worst = worst.max((a - b.conj()).norm());
        }
        worst
    }

    fn mode_raw(&self, kx: i64, ky: i64) -> Complex64 {
        self.grid.index(kx, ky).map_or(ZERO, |i| self.coeffs[i])
    }

    /// Symmetrizes the `kx = 0` column so the physical field is real.
    pub(crate) fn enforce_hermitian(&mut self) {
        let cols = self.grid.cols();
        let n = self.grid.n();
        self.coeffs[0].im = 0.0;
        for row in 1..n / 2 {
            let partner = n - row;
            let a = self.coeffs[row * cols];
            let b = self.coeffs[partner * cols];
            let avg = (a + b.conj()) * 0.5;
            self.coeffs[row * cols] = avg;
            self.coeffs[partner * cols] = avg.conj();
        }
    }

    /// Values on the padded `(n pad)^2` collocation grid.
    pub fn to_padded(&self) -> Vec<f64> {
        plan(self.grid.padded_size()).synthesize(self)
    }

    /// Truncated forward transform of values on the padded collocation grid.
    pub fn from_padded(grid: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        let m = grid.padded_size();
        if values.len() != m * m {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                actual: values.len(),
            });
        }
        Ok(plan(m).analyze(&mut values, grid))
    }
}

/// Values of `field` at the `n x n` collocation points `x_j = j L / n`,
/// row-major `[iy][ix]`.
pub fn to_physical(field: &SpectralField) -> Vec<f64> {
    plan(field.grid.n()).synthesize(field)
}

/// Forward transform of `n x n` collocation values with hard truncation.
/// The Nyquist row and column are discarded.
pub fn to_spectral(values: &[f64], grid: GridSpec) -> Result<SpectralField> {
    let n = grid.n();
    if values.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            actual: values.len(),
        });
    }
    let mut data = values.to_vec();
    Ok(plan(n).analyze(&mut data, grid))
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs).expect("grid mismatch in field addition");
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs).expect("grid mismatch in field subtraction");
        out
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, a: f64) -> SpectralField {
        self.scale(a)
    }
}

/// Pair of scalar fields on a common grid, no constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub x: SpectralField,
    pub y: SpectralField,
}

impl VectorField {
    pub fn new(x: SpectralField, y: SpectralField) -> Result<Self> {
        x.grid().check_same(&y.grid())?;
        Ok(Self { x, y })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            x: SpectralField::zeros(grid),
            y: SpectralField::zeros(grid),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.x.grid()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            x: self.x.scale(a),
            y: self.y.scale(a),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) -> Result<()> {
        self.x.axpy(a, &other.x)?;
        self.y.axpy(a, &other.y)
    }

    pub fn inner(&self, other: &VectorField) -> f64 {
        self.x.inner(&other.x) + self.y.inner(&other.y)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.x.l2_norm_sq() + self.y.l2_norm_sq()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.x.grad_norm_sq() + self.y.grad_norm_sq()
    }

    /// `max_k |k . v(k)|` over retained modes.
    pub fn max_divergence(&self) -> f64 {
        let grid = self.grid();
        (0..grid.len())
            .map(|idx| {
                let (kx, ky) = grid.kvec(idx);
                (self.x.coeffs()[idx] * kx + self.y.coeffs()[idx] * ky).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Mean vector `(coeff_x(0), coeff_y(0))`.
    pub fn mean(&self) -> (f64, f64) {
        (self.x.mean(), self.y.mean())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Divergence-free, zero-mean velocity. Only produced by Leray projection
/// or by modewise operations that preserve both properties.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField(VectorField);

impl VelocityField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self(VectorField::zeros(grid))
    }

    /// Accepts `v` without projecting if it already satisfies the invariants
    /// within `tol` (divergence and mean).
    pub fn try_from_vector(v: VectorField, tol: f64) -> Result<Self> {
        let div = v.max_divergence();
        let (mx, my) = v.mean();
        if div > tol || mx.abs() > tol || my.abs() > tol {
            return Err(crate::error::invalid(
                "velocity",
                format!("not divergence-free/zero-mean (div {div:e}, mean ({mx:e}, {my:e}))"),
            ));
        }
        Ok(Self(v))
    }

    pub(crate) fn from_vector_unchecked(v: VectorField) -> Self {
        Self(v)
    }

    pub fn x(&self) -> &SpectralField {
        &self.0.x
    }

    pub fn y(&self) -> &SpectralField {
        &self.0.y
    }

    pub fn as_vector(&self) -> &VectorField {
        &self.0
    }

    pub fn into_vector(self) -> VectorField {
        self.0
    }

    pub fn grid(&self) -> GridSpec {
        self.0.grid()
    }

    /// Multiplication by a real scalar keeps both invariants.
    pub fn scale(&self, a: f64) -> Self {
        Self(self.0.scale(a))
    }

    /// Linear combination of two velocities is again a velocity.
    pub fn axpy(&mut self, a: f64, other: &VelocityField) -> Result<()> {
        self.0.axpy(a, &other.0)
    }

    /// Modewise real multiplier, applied identically to both components.
    pub fn map_modes(&self, mut m: impl FnMut(f64, f64) -> f64) -> Self {
        let grid = self.grid();
        let mult: Vec<f64> = (0..grid.len())
            .map(|i| {
                let (kx, ky) = grid.kvec(i);
                m(kx, ky)
            })
            .collect();
        let mut v = self.0.clone();
        for (i, f) in mult.iter().enumerate() {
            v.x.coeffs_mut()[i] *= *f;
            v.y.coeffs_mut()[i] *= *f;
        }
        Self(v)
    }
}

impl AsRef<VectorField> for VelocityField {
    fn as_ref(&self) -> &VectorField {
        &self.0
    }
}

impl std::ops::Deref for VelocityField {
    type Target = VectorField;
    fn deref(&self) -> &VectorField {
        &self.0
    }
}

impl Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField {
            x: &self.x - &rhs.x,
            y: &self.y - &rhs.y,
        }
    }
}

impl Sub for &VelocityField {
    type Output = VelocityField;
    fn sub(self, rhs: &VelocityField) -> VelocityField {
        VelocityField(&self.0 - &rhs.0)
    }
}

/// Hilbert-scale norm `(area sum_k (1 + |k|^2)^s |f(k)|^2)^(1/2)`.
pub trait SobolevNorm {
    fn sobolev_norm_sq(&self, s: f64) -> f64;

    fn sobolev_norm(&self, s: f64) -> f64 {
        self.sobolev_norm_sq(s).sqrt()
    }
}

impl SobolevNorm for SpectralField {
    fn sobolev_norm_sq(&self, s: f64) -> f64 {
        self.weighted_norm_sq(|k2| (1.0 + k2).powf(s))
    }
}

impl SobolevNorm for VectorField {
    fn sobolev_norm_sq(&self, s: f64) -> f64 {
        self.x.sobolev_norm_sq(s) + self.y.sobolev_norm_sq(s)
    }
}

impl SobolevNorm for VelocityField {
    fn sobolev_norm_sq(&self, s: f64) -> f64 {
        self.0.sobolev_norm_sq(s)
    }
}
