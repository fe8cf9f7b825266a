//! Independent evaluation by direct trigonometric summation. Nothing here
//! goes through the FFT path.
#![allow(dead_code)]

use std::f64::consts::PI;

use chns_core::spectral::{GridSpec, SpectralField};
use num_complex::Complex64;

/// Retained modes of the full (unpacked) spectrum with their coefficients.
pub fn full_modes(f: &SpectralField) -> Vec<(i64, i64, Complex64)> {
    let g = f.grid();
    let h = (g.n() / 2) as i64;
    let mut out = Vec::new();
    for kx in -h + 1..h {
        for ky in -h + 1..h {
            let c = f.mode(kx, ky);
            if c.norm() > 0.0 {
                out.push((kx, ky, c));
            }
        }
    }
    out
}

/// Value and gradient of `f` at `(x, y)`.
pub fn eval_with_grad(modes: &[(i64, i64, Complex64)], unit: f64, x: f64, y: f64) -> (f64, f64, f64, f64) {
    let (mut v, mut gx, mut gy, mut lap) = (0.0, 0.0, 0.0, 0.0);
    for &(kx, ky, c) in modes {
        let (px, py) = (kx as f64 * unit, ky as f64 * unit);
        let e = Complex64::from_polar(1.0, px * x + py * y) * c;
        v += e.re;
        gx += (e * Complex64::new(0.0, px)).re;
        gy += (e * Complex64::new(0.0, py)).re;
        lap -= (px * px + py * py) * e.re;
    }
    (v, gx, gy, lap)
}

/// Collocation points of an `m x m` grid over `[0, L)^2`, row-major `[iy][ix]`.
pub fn points(grid: GridSpec, m: usize) -> Vec<(f64, f64)> {
    let h = grid.length() / m as f64;
    (0..m)
        .flat_map(|iy| (0..m).map(move |ix| (ix as f64 * h, iy as f64 * h)))
        .collect()
}

/// Values, gradients and Laplacians on an `m x m` grid.
pub fn sample(f: &SpectralField, m: usize) -> Vec<(f64, f64, f64, f64)> {
    let modes = full_modes(f);
    let unit = f.grid().k_unit();
    points(f.grid(), m)
        .into_iter()
        .map(|(x, y)| eval_with_grad(&modes, unit, x, y))
        .collect()
}

/// Direct DFT of `values` on an `m x m` grid, retained modes of `grid` only.
pub fn direct_dft(values: &[f64], m: usize, grid: GridSpec) -> SpectralField {
    let pts = points(grid, m);
    let unit = grid.k_unit();
    let h = (grid.n() / 2) as i64;
    let mut f = SpectralField::zeros(grid);
    for kx in 0..h {
        for ky in -h + 1..h {
            if kx == 0 && ky < 0 {
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for (v, &(x, y)) in values.iter().zip(&pts) {
                acc += Complex64::from_polar(*v, -(kx as f64 * unit * x + ky as f64 * unit * y));
            }
            f.set_mode(kx, ky, acc / (m * m) as f64);
        }
    }
    f
}

/// `int values dx` by the rectangle rule (spectrally exact for trig polynomials).
pub fn quadrature(values: &[f64], grid: GridSpec) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64 * grid.area()
}

/// Leray projection written out from the multiplier formula.
pub fn project_modes(x: &SpectralField, y: &SpectralField) -> (SpectralField, SpectralField) {
    let g = x.grid();
    let h = (g.n() / 2) as i64;
    let unit = g.k_unit();
    let mut px = SpectralField::zeros(g);
    let mut py = SpectralField::zeros(g);
    for kx in 0..h {
        for ky in -h + 1..h {
            if (kx == 0 && ky <= 0) || !g.is_retained(kx, ky) {
                continue;
            }
            let (a, b) = (kx as f64 * unit, ky as f64 * unit);
            let k2 = a * a + b * b;
            let (vx, vy) = (x.mode(kx, ky), y.mode(kx, ky));
            let dot = (vx * a + vy * b) / k2;
            px.set_mode(kx, ky, vx - dot * a);
            py.set_mode(kx, ky, vy - dot * b);
        }
    }
    (px, py)
}

pub fn max_coeff_diff(a: &SpectralField, b: &SpectralField) -> f64 {
    a.coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}

pub fn two_pi() -> f64 {
    2.0 * PI
}
