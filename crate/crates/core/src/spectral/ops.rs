//! Spatial operators. Pointwise products are formed on the padded grid and
//! re-truncated, which is exact for up to cubic products when `pad = 2`.

use num_complex::Complex64;

use super::field::{SpectralField, VectorField, VelocityField};
use super::{GridSpec, PhysicsParams};
use crate::error::Result;

/// Modewise `I - k k^T / |k|^2`; the mean is removed.
pub fn leray_project(v: &VectorField) -> VelocityField {
    let grid = v.grid();
    let mut out = v.clone();
    project_in_place(grid, out.x.coeffs_mut(), out.y.coeffs_mut());
    VelocityField::from_vector_unchecked(out)
}

pub(crate) fn project_in_place(grid: GridSpec, xs: &mut [Complex64], ys: &mut [Complex64]) {
    let gc = grid.cols();
    let unit = grid.k_unit();
    for row in 0..grid.n() {
        let ky = grid.signed(row) as f64 * unit;
        let base = row * gc;
        for col in 0..gc {
            let kx = col as f64 * unit;
            let k2 = kx * kx + ky * ky;
            let idx = base + col;
            if k2 == 0.0 {
                xs[idx] = Complex64::new(0.0, 0.0);
                ys[idx] = Complex64::new(0.0, 0.0);
                continue;
            }
            let dot = (xs[idx] * kx + ys[idx] * ky) / k2;
            xs[idx] -= dot * kx;
            ys[idx] -= dot * ky;
        }
    }
}

/// Stokes operator `-P Laplacian`.
pub fn a0_apply(u: &VelocityField) -> VelocityField {
    u.map_modes(|kx, ky| kx * kx + ky * ky)
}

/// `-Laplacian`.
pub fn a1_apply(phi: &SpectralField) -> SpectralField {
    phi.map_modes(|kx, ky| kx * kx + ky * ky)
}

pub fn gradient(phi: &SpectralField) -> VectorField {
    VectorField {
        x: phi.map_modes_complex(|kx, _| Complex64::new(0.0, kx)),
        y: phi.map_modes_complex(|_, ky| Complex64::new(0.0, ky)),
    }
}

/// `F(s) = c1 s^4 / 4 - c2 s^2 / 2`, the antiderivative of `f` with `F(0) = 0`.
pub fn potential(s: f64, params: &PhysicsParams) -> f64 {
    let s2 = s * s;
    0.25 * params.c1 * s2 * s2 - 0.5 * params.c2 * s2
}

/// Truncated `f(phi) = c1 phi^3 - c2 phi`.
pub fn f_eval(phi: &SpectralField, params: &PhysicsParams) -> SpectralField {
    let mut vals = phi.to_padded();
    vals.iter_mut().for_each(|v| *v = params.f(*v));
    SpectralField::from_padded(phi.grid(), vals).expect("padded size matches grid")
}

/// `mu = nu1 A1 phi + kappa f(phi)`.
pub fn chemical_potential(phi: &SpectralField, params: &PhysicsParams) -> SpectralField {
    let mut mu = a1_apply(phi).scale(params.nu1);
    if params.kappa != 0.0 {
        mu.axpy(params.kappa, &f_eval(phi, params))
            .expect("same grid");
    }
    mu
}

/// Truncated `(u . grad) v` without projection.
pub fn convective_product(u: &VectorField, v: &VectorField) -> Result<VectorField> {
    u.grid().check_same(&v.grid())?;
    let grid = u.grid();
    let ux = u.x.to_padded();
    let uy = u.y.to_padded();
    let mut comps = Vec::with_capacity(2);
    for comp in [&v.x, &v.y] {
        let g = gradient(comp);
        let gx = g.x.to_padded();
        let gy = g.y.to_padded();
        let prod: Vec<f64> = (0..ux.len()).map(|i| ux[i] * gx[i] + uy[i] * gy[i]).collect();
        comps.push(SpectralField::from_padded(grid, prod)?);
    }
    let y = comps.pop().expect("two components");
    let x = comps.pop().expect("two components");
    Ok(VectorField { x, y })
}

/// `b0(u, v) = P (u . grad) v`.
pub fn b0_apply(u: &VelocityField, v: &VelocityField) -> Result<VelocityField> {
    Ok(leray_project(&convective_product(u, v)?))
}

/// Truncated `nu1 (A1 phi) grad phi` without projection.
pub fn capillary_product(phi: &SpectralField, params: &PhysicsParams) -> VectorField {
    let grid = phi.grid();
    let lap = a1_apply(phi).to_padded();
    let g = gradient(phi);
    let gx = g.x.to_padded();
    let gy = g.y.to_padded();
    let fx: Vec<f64> = lap.iter().zip(&gx).map(|(a, b)| params.nu1 * a * b).collect();
    let fy: Vec<f64> = lap.iter().zip(&gy).map(|(a, b)| params.nu1 * a * b).collect();
    VectorField {
        x: SpectralField::from_padded(grid, fx).expect("padded size"),
        y: SpectralField::from_padded(grid, fy).expect("padded size"),
    }
}

/// `b1(nu1 A1 phi, phi) = P nu1 (A1 phi) grad phi`, the capillary forcing
/// with the `grad F(phi)` part absorbed into the pressure.
pub fn b1_apply(phi: &SpectralField, params: &PhysicsParams) -> VelocityField {
    leray_project(&capillary_product(phi, params))
}

/// Truncated `u . grad phi`.
pub fn b2_apply(u: &VectorField, phi: &SpectralField) -> Result<SpectralField> {
    u.grid().check_same(&phi.grid())?;
    let ux = u.x.to_padded();
    let uy = u.y.to_padded();
    let g = gradient(phi);
    let gx = g.x.to_padded();
    let gy = g.y.to_padded();
    let prod: Vec<f64> = (0..ux.len()).map(|i| ux[i] * gx[i] + uy[i] * gy[i]).collect();
    SpectralField::from_padded(phi.grid(), prod)
}

/// `B0(u, v, w) = int ((u . grad) v) . w dx`.
pub fn trilinear_b0(u: &VectorField, v: &VectorField, w: &VectorField) -> Result<f64> {
    w.grid().check_same(&u.grid())?;
    Ok(convective_product(u, v)?.inner(w))
}

/// `B1(mu, phi, w) = int mu (grad phi . w) dx`.
pub fn trilinear_b1(mu: &SpectralField, phi: &SpectralField, w: &VectorField) -> Result<f64> {
    mu.grid().check_same(&phi.grid())?;
    w.grid().check_same(&phi.grid())?;
    let g = gradient(phi);
    let m = mu.to_padded();
    let gx = g.x.to_padded();
    let gy = g.y.to_padded();
    let px: Vec<f64> = m.iter().zip(&gx).map(|(a, b)| a * b).collect();
    let py: Vec<f64> = m.iter().zip(&gy).map(|(a, b)| a * b).collect();
    let grid = phi.grid();
    let prod = VectorField {
        x: SpectralField::from_padded(grid, px)?,
        y: SpectralField::from_padded(grid, py)?,
    };
    Ok(prod.inner(w))
}

/// `B2(u, phi, rho) = int (u . grad phi) rho dx`.
pub fn trilinear_b2(u: &VectorField, phi: &SpectralField, rho: &SpectralField) -> Result<f64> {
    rho.grid().check_same(&phi.grid())?;
    Ok(b2_apply(u, phi)?.inner(rho))
}

/// `E(phi) = int nu1/2 |grad phi|^2 + kappa F(phi) dx`.
///
/// The quartic term is integrated on the padded grid, which is exact for
/// `pad >= 2`.
pub fn free_energy(phi: &SpectralField, params: &PhysicsParams) -> f64 {
    0.5 * params.nu1 * phi.grad_norm_sq() + params.kappa * potential_integral(phi, params)
}

/// `(F(phi), 1)`.
pub(crate) fn potential_integral(phi: &SpectralField, params: &PhysicsParams) -> f64 {
    let vals = phi.to_padded();
    let mean = vals.iter().map(|&s| potential(s, params)).sum::<f64>() / vals.len() as f64;
    mean * phi.grid().area()
}
