//! Truncated cylindrical Wiener process and the multiplicative intensity `h`.
//!
//! The default family is
//!
//! ```text
//! h(u, grad phi) e_k = sigma_k P( c0 g_k + c1 P_N(u m_k) ),   m_k(x) = cos(q_k . x)
//! ```
//!
//! with unit-norm divergence-free shapes `g_k` and bounded masks `|m_k| <= 1`.
//! Since `||P P_N(u m_k)|| <= ||u||`,
//!
//! ```text
//! ||h e_k||^2 <= sigma_k^2 (c0 + c1 ||u||)^2 <= 2 sigma_k^2 max(c0^2, c1^2) (1 + ||u||^2)
//! ```
//!
//! so C.1 holds with `K0 = 2 sum sigma_k^2 max(c0^2, c1^2)`. The map is affine
//! in `u`, hence `||h(s1) - h(s2)||^2 <= sum sigma_k^2 c1^2 ||u1 - u2||^2`,
//! giving `K1 = sum sigma_k^2 c1^2`. The default family ignores `grad phi`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::integrator::SystemState;
use crate::spectral::{
    gradient, leray_project, project_in_place, GridSpec, PhysicsParams, SpectralField, VectorField, VelocityField,
};

/// Words of the ChaCha stream reserved for one step's draws.
const WORDS_PER_STEP_LOG2: u32 = 24;

/// Brownian increments `d beta_k` over one step.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerIncrement {
    pub dt: f64,
    pub dbeta: Vec<f64>,
}

impl WienerIncrement {
    pub fn zero(k: usize, dt: f64) -> Self {
        Self {
            dt,
            dbeta: vec![0.0; k],
        }
    }

    /// Sum of consecutive increments (Brownian path coarsening).
    pub fn combine(parts: &[WienerIncrement]) -> Self {
        let k = parts.first().map_or(0, |p| p.dbeta.len());
        let mut out = Self::zero(k, 0.0);
        for p in parts {
            out.dt += p.dt;
            for (a, b) in out.dbeta.iter_mut().zip(&p.dbeta) {
                *a += b;
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct NoiseModel {
    grid: GridSpec,
    sigma: Vec<f64>,
    wavevectors: Vec<(i64, i64)>,
    shapes: Vec<VelocityField>,
    c0: f64,
    c1: f64,
    seed: u64,
}

impl NoiseModel {
    /// `sigma.len()` modes with amplitudes `sigma`, additive weight `c0` and
    /// multiplicative weight `c1`.
    pub fn new(grid: GridSpec, sigma: Vec<f64>, c0: f64, c1: f64, seed: u64) -> Result<Self> {
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid("sigma", "amplitudes must be finite and non-negative"));
        }
        for (name, v) in [("c0", c0), ("c1", c1)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        let wavevectors = forcing_wavevectors(grid, sigma.len())?;
        let shapes = wavevectors.iter().map(|&q| shape_field(grid, q)).collect();
        Ok(Self {
            grid,
            sigma,
            wavevectors,
            shapes,
            c0,
            c1,
            seed,
        })
    }

    /// `sigma_k = sigma0 k^(-decay)` for `k = 1..=modes`.
    pub fn with_decay(
        grid: GridSpec,
        modes: usize,
        sigma0: f64,
        decay: f64,
        c0: f64,
        c1: f64,
        seed: u64,
    ) -> Result<Self> {
        let sigma = (1..=modes).map(|k| sigma0 * (k as f64).powf(-decay)).collect();
        Self::new(grid, sigma, c0, c1, seed)
    }

    /// No noise (`h = 0`).
    pub fn none(grid: GridSpec) -> Self {
        Self::new(grid, Vec::new(), 0.0, 0.0, 0).expect("empty model is valid")
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn modes(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Shape `g_k`, 1-based.
    pub fn shape(&self, k: usize) -> Result<&VelocityField> {
        self.check_mode(k)?;
        Ok(&self.shapes[k - 1])
    }

    /// Integer wavevector `q_k` of shape and mask, 1-based.
    pub fn wavevector(&self, k: usize) -> Result<(i64, i64)> {
        self.check_mode(k)?;
        Ok(self.wavevectors[k - 1])
    }

    pub fn is_zero(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0.0) || (self.c0 == 0.0 && self.c1 == 0.0)
    }

    pub fn sigma_sq_sum(&self) -> f64 {
        self.sigma.iter().map(|s| s * s).sum()
    }

    /// Closed-form growth constant of C.1.
    pub fn k0(&self) -> f64 {
        2.0 * self.sigma_sq_sum() * (self.c0 * self.c0).max(self.c1 * self.c1)
    }

    /// Closed-form Lipschitz constant of C.2.
    pub fn k1(&self) -> f64 {
        self.sigma_sq_sum() * self.c1 * self.c1
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.modes() {
            Err(Error::ModeOutOfRange {
                index: k,
                count: self.modes(),
            })
        } else {
            Ok(())
        }
    }

    /// Gaussian increments keyed by `(seed, member, step_index)`.
    ///
    /// Each key selects a disjoint window of a ChaCha8 stream, so the result
    /// does not depend on call order or thread.
    pub fn sample_increment(&self, step_index: u64, member: u64, dt: f64) -> Result<WienerIncrement> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(invalid("dt", format!("must be non-negative, got {dt}")));
        }
        let k = self.modes();
        if dt == 0.0 {
            return Ok(WienerIncrement::zero(k, 0.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(member);
        rng.set_word_pos((step_index as u128) << WORDS_PER_STEP_LOG2);
        let sd = dt.sqrt();
        let dbeta = (0..k)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect();
        Ok(WienerIncrement { dt, dbeta })
    }

    /// `h(u, grad phi) e_k`, 1-based `k`.
    pub fn h_apply(&self, u: &VelocityField, grad_phi: &VectorField, k: usize) -> Result<VelocityField> {
        self.check_mode(k)?;
        self.grid.check_same(&u.grid())?;
        self.grid.check_same(&grad_phi.grid())?;
        Ok(self.h_mode(u, k - 1))
    }

    fn h_mode(&self, u: &VelocityField, i: usize) -> VelocityField {
        let mut bx = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        let mut by = bx.clone();
        self.h_mode_into(u, i, &mut bx, &mut by);
        VelocityField::from_vector_unchecked(VectorField {
            x: SpectralField::from_raw(self.grid, bx).expect("length matches grid"),
            y: SpectralField::from_raw(self.grid, by).expect("length matches grid"),
        })
    }

    /// `h e_i` written into packed buffers.
    fn h_mode_into(&self, u: &VelocityField, i: usize, bx: &mut [Complex64], by: &mut [Complex64]) {
        let sigma = self.sigma[i];
        if self.c1 != 0.0 {
            let q = self.wavevectors[i];
            mask_product_into(u.x(), q, self.c1, bx);
            mask_product_into(u.y(), q, self.c1, by);
        } else {
            bx.fill(Complex64::new(0.0, 0.0));
            by.fill(Complex64::new(0.0, 0.0));
        }
        if self.c0 != 0.0 {
            let g = &self.shapes[i];
            for (b, s) in bx.iter_mut().zip(g.x().coeffs()) {
                *b += s * self.c0;
            }
            for (b, s) in by.iter_mut().zip(g.y().coeffs()) {
                *b += s * self.c0;
            }
        }
        project_in_place(self.grid, bx, by);
        for b in bx.iter_mut().chain(by.iter_mut()) {
            *b *= sigma;
        }
    }

    /// `||h(u, grad phi)||^2_{L2(H; L2)} = sum_k ||h e_k||^2`.
    pub fn hs_norm_sq(&self, u: &VelocityField, grad_phi: &VectorField) -> Result<f64> {
        self.grid.check_same(&u.grid())?;
        self.grid.check_same(&grad_phi.grid())?;
        Ok((0..self.modes())
            .map(|i| self.h_mode(u, i).l2_norm_sq())
            .sum())
    }

    /// `sum_k h e_k d beta_k` together with the Hilbert-Schmidt norm squared
    /// at the same state.
    pub fn forcing(&self, u: &VelocityField, incr: &WienerIncrement) -> Result<(VelocityField, f64)> {
        if incr.dbeta.len() != self.modes() {
            return Err(Error::DimensionMismatch {
                expected: self.modes(),
                actual: incr.dbeta.len(),
            });
        }
        let len = self.grid.len();
        let zero = Complex64::new(0.0, 0.0);
        let (mut xs, mut ys) = (vec![zero; len], vec![zero; len]);
        let (mut bx, mut by) = (vec![zero; len], vec![zero; len]);
        let gc = self.grid.cols();
        let mut hs = 0.0;
        for (i, db) in incr.dbeta.iter().enumerate() {
            if self.sigma[i] == 0.0 {
                continue;
            }
            self.h_mode_into(u, i, &mut bx, &mut by);
            let mut norm = 0.0;
            for (rx, ry) in bx.chunks_exact(gc).zip(by.chunks_exact(gc)) {
                norm += rx[0].norm_sqr() + ry[0].norm_sqr();
                for (a, b) in rx[1..].iter().zip(&ry[1..]) {
                    norm += 2.0 * (a.norm_sqr() + b.norm_sqr());
                }
            }
            hs += norm * self.grid.area();
            for (x, b) in xs.iter_mut().zip(&bx) {
                *x += b * *db;
            }
            for (y, b) in ys.iter_mut().zip(&by) {
                *y += b * *db;
            }
        }
        let xi = VelocityField::from_vector_unchecked(VectorField {
            x: SpectralField::from_raw(self.grid, xs)?,
            y: SpectralField::from_raw(self.grid, ys)?,
        });
        Ok((xi, hs))
    }

    /// Evaluates C.1-C.4 on `samples`.
    ///
    /// The C.1 ratio is `||h||^2_HS / (1 + ||u||^2 + ||grad phi||^2)` and the
    /// C.2 quotient `||h(s1) - h(s2)||^2_HS / (||u1 - u2||^2 + ||grad(phi1 - phi2)||^2)`.
    /// `C` is the squared Poincare constant of zero-mean fields, `(L / 2 pi)^2`.
    pub fn check_conditions(
        &self,
        samples: &[SystemState],
        params: &PhysicsParams,
    ) -> Result<ConditionReport> {
        if samples.is_empty() {
            return Err(Error::InsufficientData("no sample states".into()));
        }
        let grads: Vec<VectorField> = samples.iter().map(|s| gradient(&s.phi)).collect();
        let mut k0_emp: f64 = 0.0;
        let mut hs_fields: Vec<Vec<VelocityField>> = Vec::with_capacity(samples.len());
        for (s, g) in samples.iter().zip(&grads) {
            let hs: Vec<VelocityField> = (0..self.modes()).map(|i| self.h_mode(&s.u, i)).collect();
            let norm: f64 = hs.iter().map(|h| h.l2_norm_sq()).sum();
            let denom = 1.0 + s.u.l2_norm_sq() + g.l2_norm_sq();
            k0_emp = k0_emp.max(norm / denom);
            hs_fields.push(hs);
        }
        let mut k1_emp: f64 = 0.0;
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                let mut du = samples[i].u.as_vector().clone();
                du.axpy(-1.0, samples[j].u.as_vector())?;
                let dphi = &samples[i].phi - &samples[j].phi;
                let denom = du.l2_norm_sq() + dphi.grad_norm_sq();
                if denom <= 0.0 {
                    continue;
                }
                let num: f64 = hs_fields[i]
                    .iter()
                    .zip(&hs_fields[j])
                    .map(|(a, b)| {
                        let mut d = a.as_vector().clone();
                        d.axpy(-1.0, b.as_vector()).expect("same grid");
                        d.l2_norm_sq()
                    })
                    .sum();
                k1_emp = k1_emp.max(num / denom);
            }
        }
        let c = (self.grid.length() / (2.0 * PI)).powi(2);
        let k0 = self.k0();
        let k1 = self.k1();
        let rel = 1e-9;
        let c4 = c4_threshold(params, k0, c, self.grid.area());
        Ok(ConditionReport {
            samples: samples.len(),
            k0,
            k1,
            k0_empirical: k0_emp,
            k1_empirical: k1_emp,
            c1_holds: k0_emp <= k0 * (1.0 + rel) + f64::MIN_POSITIVE,
            c2_holds: k1_emp <= k1 * (1.0 + rel) + 1e-300,
            poincare: c,
            c3_holds: c * k0 <= 2.0,
            delta: c4.map(|(d, _)| d),
            nu2_threshold: c4.map(|(_, t)| t),
            nu2: params.nu2,
            c4_holds: c4.is_some_and(|(_, t)| 2.0 * params.nu2 > t),
        })
    }
}

/// Largest `delta` with
/// `max(C delta/2 + c2 delta^2 / (2|D|) + K0, c1 delta / sqrt|D|) <= min(nu1, kappa)`
/// and the resulting bound `C / (2 delta)` that `2 nu2` must exceed.
fn c4_threshold(params: &PhysicsParams, k0: f64, c: f64, area: f64) -> Option<(f64, f64)> {
    let budget = params.nu1.min(params.kappa);
    let room = budget - k0;
    if room <= 0.0 {
        return None;
    }
    // c2/(2|D|) d^2 + C/2 d - room <= 0
    let a = params.c2 / (2.0 * area);
    let b = c / 2.0;
    let d1 = if a > 0.0 {
        (-b + (b * b + 4.0 * a * room).sqrt()) / (2.0 * a)
    } else {
        room / b
    };
    let d2 = if params.c1 > 0.0 {
        budget * area.sqrt() / params.c1
    } else {
        f64::INFINITY
    };
    let delta = d1.min(d2);
    Some((delta, c / (2.0 * delta)))
}

/// Outcome of [`NoiseModel::check_conditions`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub samples: usize,
    pub k0: f64,
    pub k1: f64,
    pub k0_empirical: f64,
    pub k1_empirical: f64,
    pub c1_holds: bool,
    pub c2_holds: bool,
    pub poincare: f64,
    pub c3_holds: bool,
    pub delta: Option<f64>,
    pub nu2_threshold: Option<f64>,
    pub nu2: f64,
    pub c4_holds: bool,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.c1_holds && self.c2_holds && self.c3_holds && self.c4_holds
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = |b: bool| if b { "PASS" } else { "FAIL" };
        writeln!(
            f,
            "C.1 {}  empirical K0 = {:.6e} <= K0 = {:.6e} ({} samples)",
            tag(self.c1_holds),
            self.k0_empirical,
            self.k0,
            self.samples
        )?;
        writeln!(
            f,
            "C.2 {}  empirical K1 = {:.6e} <= K1 = {:.6e}",
            tag(self.c2_holds),
            self.k1_empirical,
            self.k1
        )?;
        writeln!(
            f,
            "C.3 {}  C K0 = {:.6e} <= 2 (C = {:.6e})",
            tag(self.c3_holds),
            self.poincare * self.k0,
            self.poincare
        )?;
        match (self.delta, self.nu2_threshold) {
            (Some(d), Some(t)) => write!(
                f,
                "C.4 {}  2 nu2 = {:.6e} > C/(2 delta) = {:.6e} (delta = {:.6e})",
                tag(self.c4_holds),
                2.0 * self.nu2,
                t,
                d
            ),
            _ => write!(
                f,
                "C.4 FAIL  no admissible delta: K0 = {:.6e} exceeds min(nu1, kappa)",
                self.k0
            ),
        }
    }
}

/// `||W||^2_{H0} = sum_k beta_k^2 k^-2` for a path value `beta`.
pub fn h0_norm_sq(beta: &[f64]) -> f64 {
    beta.iter()
        .enumerate()
        .map(|(i, b)| b * b / ((i + 1) * (i + 1)) as f64)
        .sum()
}

/// First `count` wavevectors of the upper half plane ordered by `|q|` then angle.
fn forcing_wavevectors(grid: GridSpec, count: usize) -> Result<Vec<(i64, i64)>> {
    let h = (grid.n() / 2) as i64 - 1;
    let mut qs: Vec<(i64, i64)> = (0..=h)
        .flat_map(|a| (-h..=h).map(move |b| (a, b)))
        .filter(|&(a, b)| a > 0 || (a == 0 && b > 0))
        .collect();
    qs.sort_by(|p, q| {
        let np = p.0 * p.0 + p.1 * p.1;
        let nq = q.0 * q.0 + q.1 * q.1;
        np.cmp(&nq).then_with(|| {
            let ap = (p.1 as f64).atan2(p.0 as f64);
            let aq = (q.1 as f64).atan2(q.0 as f64);
            ap.total_cmp(&aq)
        })
    });
    if count > qs.len() {
        return Err(invalid(
            "K",
            format!("{count} noise modes exceed the {} available wavevectors", qs.len()),
        ));
    }
    qs.truncate(count);
    Ok(qs)
}

/// `sqrt(2)/L * q_perp/|q| * cos(q . x)`: divergence-free, zero mean, unit L2 norm.
fn shape_field(grid: GridSpec, q: (i64, i64)) -> VelocityField {
    let norm = ((q.0 * q.0 + q.1 * q.1) as f64).sqrt();
    let amp = 2f64.sqrt() / grid.length();
    let x = SpectralField::cosine(grid, q.0, q.1, -amp * q.1 as f64 / norm);
    let y = SpectralField::cosine(grid, q.0, q.1, amp * q.0 as f64 / norm);
    leray_project(&VectorField { x, y })
}

/// Galerkin projection of `field * cos(q . x)`: `(c(k - q) + c(k + q)) / 2`.
#[cfg(test)]
pub(crate) fn mask_product(field: &SpectralField, q: (i64, i64)) -> SpectralField {
    let mut out = vec![Complex64::new(0.0, 0.0); field.grid().len()];
    mask_product_into(field, q, 1.0, &mut out);
    SpectralField::from_raw(field.grid(), out).expect("length matches grid")
}

/// `scale * P_N(field * cos(q . x))` into a packed buffer.
fn mask_product_into(field: &SpectralField, q: (i64, i64), scale: f64, out: &mut [Complex64]) {
    let grid = field.grid();
    let n = grid.n() as i64;
    let h = n / 2;
    let gc = grid.cols();
    let src = field.coeffs();
    let get = |kx: i64, ky: i64| -> Complex64 {
        if kx.abs() >= h || ky.abs() >= h {
            return Complex64::new(0.0, 0.0);
        }
        let wrap = |k: i64| (if k < 0 { k + n } else { k }) as usize;
        if kx >= 0 {
            src[wrap(ky) * gc + kx as usize]
        } else {
            src[wrap(-ky) * gc + (-kx) as usize].conj()
        }
    };
    let half = 0.5 * scale;
    for (row, chunk) in out.chunks_exact_mut(gc).enumerate() {
        let ky = grid.signed(row);
        if ky.abs() >= h {
            chunk.fill(Complex64::new(0.0, 0.0));
            continue;
        }
        for (kx, c) in chunk.iter_mut().enumerate() {
            let kx = kx as i64;
            *c = if kx >= h {
                Complex64::new(0.0, 0.0)
            } else {
                (get(kx - q.0, ky - q.1) + get(kx + q.0, ky + q.1)) * half
            };
        }
    }
}
