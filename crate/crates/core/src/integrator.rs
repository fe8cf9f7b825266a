//! Semi-implicit Euler-Maruyama time stepping of the Galerkin system.
//!
//! Stiff linear parts (`A0`, `nu1 nu2 Laplacian^2` and the stabilization
//! `S nu2 (-Laplacian)`) are implicit and diagonal in Fourier space; convection,
//! capillary forcing, `f(phi)` and the noise are explicit at the start-of-step
//! state (Ito convention).

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::noise::{NoiseModel, WienerIncrement};
use crate::spectral::{
    gradient, leray_project, GridSpec, PhysicsParams, SpectralField,
    VectorField, VelocityField,
};

/// Markov state `U = (u, phi)` with its clock.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub u: VelocityField,
    pub phi: SpectralField,
    pub t: f64,
    pub step: u64,
}

impl SystemState {
    pub fn new(u: VelocityField, phi: SpectralField) -> Result<Self> {
        u.grid().check_same(&phi.grid())?;
        Ok(Self {
            u,
            phi,
            t: 0.0,
            step: 0,
        })
    }

    /// `u = 0`, `phi = mean`.
    pub fn rest(grid: GridSpec, phi_mean: f64) -> Self {
        Self {
            u: VelocityField::zeros(grid),
            phi: SpectralField::constant(grid, phi_mean),
            t: 0.0,
            step: 0,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.phi.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.phi.is_finite() && self.t.is_finite()
    }

    /// `||u||^2 + ||phi||^2_{H^1}`.
    pub fn h_norm_sq(&self) -> f64 {
        self.u.l2_norm_sq() + self.phi.l2_norm_sq() + self.phi.grad_norm_sq()
    }

    /// Difference in the state-space norm, `||U1 - U2||_H`.
    pub fn h_distance(&self, other: &SystemState) -> f64 {
        let mut du = self.u.as_vector().clone();
        du.axpy(-1.0, other.u.as_vector()).expect("same grid");
        let dphi = &self.phi - &other.phi;
        (du.l2_norm_sq() + dphi.l2_norm_sq() + dphi.grad_norm_sq()).sqrt()
    }
}

/// Time-step settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    pub dt: f64,
    /// Coefficient `S` of the implicit stabilization; `0` disables it.
    pub stabilization: f64,
    /// Convection and capillary coupling (`b0`, `b1`, `b2`); off gives the
    /// linear decoupled regime.
    pub convection: bool,
}

impl SchemeConfig {
    pub fn new(dt: f64, stabilization: f64) -> Self {
        Self {
            dt,
            stabilization,
            convection: true,
        }
    }

    /// Stabilized scheme with the smallest admissible `S = kappa c2`.
    pub fn stabilized(dt: f64, params: &PhysicsParams) -> Self {
        Self::new(dt, params.kappa * params.c2)
    }

    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt, ..self }
    }

    pub fn without_convection(self) -> Self {
        Self {
            convection: false,
            ..self
        }
    }

    pub fn validate(&self, params: &PhysicsParams) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        let s = self.stabilization;
        if !(s.is_finite() && s >= 0.0) {
            return Err(invalid("stabilization", format!("must be non-negative, got {s}")));
        }
        let floor = params.kappa * params.c2;
        if s > 0.0 && s < floor * (1.0 - 1e-12) {
            return Err(invalid(
                "stabilization",
                format!("S = {s} is below kappa c2 = {floor}"),
            ));
        }
        Ok(())
    }
}

/// Per-step quantities entering the energy balance, all evaluated at the
/// start-of-step state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepRecord {
    pub dt: f64,
    /// `||grad u||^2 + nu2 ||grad mu||^2`.
    pub dissipation_rate: f64,
    /// `(sum_k h e_k d beta_k, u_n)`.
    pub martingale: f64,
    /// `||h||^2_HS dt`.
    pub ito_correction: f64,
}

struct ExplicitTerms {
    /// `-(u . grad) u + nu1 (A1 phi) grad phi`, not projected.
    momentum: VectorField,
    advection: SpectralField,
    f: SpectralField,
}

/// Evaluates all explicit nonlinear terms from one set of padded syntheses.
fn explicit_terms(state: &SystemState, params: &PhysicsParams, convection: bool) -> ExplicitTerms {
    let grid = state.grid();
    let phi = state.phi.to_padded();
    let f = if params.kappa != 0.0 {
        let vals: Vec<f64> = phi.iter().map(|&s| params.f(s)).collect();
        SpectralField::from_padded(grid, vals).expect("padded size")
    } else {
        SpectralField::zeros(grid)
    };
    if !convection {
        return ExplicitTerms {
            momentum: VectorField::zeros(grid),
            advection: SpectralField::zeros(grid),
            f,
        };
    }
    let ux = state.u.x().to_padded();
    let uy = state.u.y().to_padded();
    let gux = gradient(state.u.x());
    let guy = gradient(state.u.y());
    let (dxux, dyux) = (gux.x.to_padded(), gux.y.to_padded());
    let (dxuy, dyuy) = (guy.x.to_padded(), guy.y.to_padded());
    let gphi = gradient(&state.phi);
    let (px, py) = (gphi.x.to_padded(), gphi.y.to_padded());
    let lap = state.phi.map_modes(|kx, ky| kx * kx + ky * ky).to_padded();
    let len = phi.len();
    let mut mx = vec![0.0; len];
    let mut my = vec![0.0; len];
    let mut adv = vec![0.0; len];
    for i in 0..len {
        let cap = params.nu1 * lap[i];
        mx[i] = -(ux[i] * dxux[i] + uy[i] * dyux[i]) + cap * px[i];
        my[i] = -(ux[i] * dxuy[i] + uy[i] * dyuy[i]) + cap * py[i];
        adv[i] = ux[i] * px[i] + uy[i] * py[i];
    }
    ExplicitTerms {
        momentum: VectorField {
            x: SpectralField::from_padded(grid, mx).expect("padded size"),
            y: SpectralField::from_padded(grid, my).expect("padded size"),
        },
        advection: SpectralField::from_padded(grid, adv).expect("padded size"),
        f,
    }
}

/// One IMEX Euler-Maruyama step driven by `incr`.
///
/// ```text
/// (1 + dt |k|^2) u_{n+1} = u_n + dt P[-(u.grad)u + nu1 (A1 phi) grad phi] + sum_k h_k d beta_k
/// (1 + dt nu2 (nu1 |k|^4 + S |k|^2)) phi_{n+1}
///     = (1 + dt S nu2 |k|^2) phi_n - dt nu2 |k|^2 kappa f(phi_n) - dt u_n.grad phi_n
/// ```
///
/// The zeroth `phi` mode is copied through.
pub fn step(
    state: &SystemState,
    params: &PhysicsParams,
    noise: &NoiseModel,
    scheme: &SchemeConfig,
    incr: &WienerIncrement,
) -> Result<(SystemState, StepRecord)> {
    let grid = state.grid();
    let dt = scheme.dt;
    let terms = explicit_terms(state, params, scheme.convection);
    let forcing = leray_project(&terms.momentum);
    let (xi, hs) = if noise.modes() > 0 {
        noise.forcing(&state.u, incr)?
    } else {
        (VelocityField::zeros(grid), 0.0)
    };

    let mut mu = state.phi.map_modes(|kx, ky| params.nu1 * (kx * kx + ky * ky));
    mu.axpy(params.kappa, &terms.f)?;
    let record = StepRecord {
        dt,
        dissipation_rate: state.u.grad_norm_sq() + params.nu2 * mu.grad_norm_sq(),
        martingale: xi.inner(state.u.as_vector()),
        ito_correction: hs * dt,
    };

    let mut ux = state.u.x().clone();
    let mut uy = state.u.y().clone();
    let mut phi = state.phi.clone();
    let s = scheme.stabilization;
    {
        let (fx, fy) = (forcing.x().coeffs(), forcing.y().coeffs());
        let (xx, xy) = (xi.x().coeffs(), xi.y().coeffs());
        let fhat = terms.f.coeffs();
        let adv = terms.advection.coeffs();
        let k2s = grid.k2_table();
        let cx = ux.coeffs_mut();
        for idx in 0..grid.len() {
            let k2 = k2s[idx];
            cx[idx] = (cx[idx] + fx[idx] * dt + xx[idx]) / (1.0 + dt * k2);
        }
        let cy = uy.coeffs_mut();
        for idx in 0..grid.len() {
            let k2 = k2s[idx];
            cy[idx] = (cy[idx] + fy[idx] * dt + xy[idx]) / (1.0 + dt * k2);
        }
        let cp = phi.coeffs_mut();
        for idx in 1..grid.len() {
            let k2 = k2s[idx];
            let lhs = 1.0 + dt * params.nu2 * (params.nu1 * k2 * k2 + s * k2);
            let rhs = cp[idx] * (1.0 + dt * s * params.nu2 * k2)
                - fhat[idx] * (dt * params.nu2 * k2 * params.kappa)
                - adv[idx] * dt;
            cp[idx] = rhs / lhs;
        }
    }
    let next = SystemState {
        u: VelocityField::from_vector_unchecked(VectorField { x: ux, y: uy }),
        phi,
        t: state.t + dt,
        step: state.step + 1,
    };
    if !next.is_finite() {
        return Err(Error::BlowUp {
            step: next.step,
            t: next.t,
        });
    }
    Ok((next, record))
}

/// Receives simulation output.
pub trait Observer {
    /// Observation stride in steps.
    fn stride(&self) -> u64 {
        1
    }

    /// Called after every step whose index is a multiple of `stride`.
    fn observe(&mut self, state: &SystemState) -> Result<()>;

    /// Called after every step with the start-of-step state.
    fn record(&mut self, _before: &SystemState, _record: &StepRecord) -> Result<()> {
        Ok(())
    }
}

/// Trajectory-level settings for [`simulate`].
pub struct RunControl<'a> {
    /// Ensemble member; selects the noise stream.
    pub member: u64,
    /// Checkpoint cadence in steps, `0` for none.
    pub checkpoint_every: u64,
    pub observers: Vec<&'a mut dyn Observer>,
    pub checkpoints: Option<&'a mut dyn FnMut(&SystemState) -> Result<()>>,
}

impl<'a> RunControl<'a> {
    pub fn new(member: u64) -> Self {
        Self {
            member,
            checkpoint_every: 0,
            observers: Vec::new(),
            checkpoints: None,
        }
    }

    pub fn observer(mut self, obs: &'a mut dyn Observer) -> Self {
        self.observers.push(obs);
        self
    }
}

/// Abort of [`simulate`], carrying the most recent checkpointed state.
#[derive(Debug)]
pub struct SimulationFailure {
    pub error: Error,
    pub last_good: Box<SystemState>,
}

impl fmt::Display for SimulationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (last good checkpoint at step {}, t = {})",
            self.error, self.last_good.step, self.last_good.t
        )
    }
}

impl std::error::Error for SimulationFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Number of steps of size `dt` covering `horizon`; the two must agree.
pub fn step_count(horizon: f64, dt: f64) -> Result<u64> {
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(invalid("T", format!("must be non-negative, got {horizon}")));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(dt) {
        return Err(invalid(
            "T",
            format!("horizon {horizon} is not a multiple of dt = {dt}"),
        ));
    }
    Ok(n as u64)
}

/// Advances `initial` over `horizon`, sampling the noise from the stream of
/// `ctl.member`.
pub fn simulate(
    initial: &SystemState,
    params: &PhysicsParams,
    noise: &NoiseModel,
    scheme: &SchemeConfig,
    horizon: f64,
    ctl: &mut RunControl<'_>,
) -> std::result::Result<SystemState, SimulationFailure> {
    let fail = |error: Error, last: &SystemState| SimulationFailure {
        error,
        last_good: Box::new(last.clone()),
    };
    let steps = scheme
        .validate(params)
        .and_then(|_| params.validate())
        .and_then(|_| step_count(horizon, scheme.dt))
        .map_err(|e| fail(e, initial))?;
    let t0 = initial.t;
    let mut state = initial.clone();
    let mut last_good = initial.clone();
    for i in 0..steps {
        let incr = noise
            .sample_increment(state.step, ctl.member, scheme.dt)
            .map_err(|e| fail(e, &last_good))?;
        let (mut next, rec) =
            step(&state, params, noise, scheme, &incr).map_err(|e| fail(e, &last_good))?;
        next.t = t0 + (i + 1) as f64 * scheme.dt;
        for obs in ctl.observers.iter_mut() {
            obs.record(&state, &rec).map_err(|e| fail(e, &last_good))?;
        }
        for obs in ctl.observers.iter_mut() {
            let stride = obs.stride().max(1);
            if next.step % stride == 0 {
                obs.observe(&next).map_err(|e| fail(e, &last_good))?;
            }
        }
        if ctl.checkpoint_every > 0 && next.step % ctl.checkpoint_every == 0 {
            if let Some(sink) = ctl.checkpoints.as_mut() {
                sink(&next).map_err(|e| fail(e, &last_good))?;
            }
            last_good = next.clone();
        }
        state = next;
    }
    Ok(state)
}

/// Reference solution for [`em_order_probe`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OrderReference {
    /// Modewise exponential of the linear operator; valid when the noise is
    /// zero and every nonlinear term vanishes along the trajectory.
    ExactLinear,
    /// Same Brownian path integrated with `min(dt_list) / refinement`.
    Fine { refinement: u64 },
}

/// Strong errors at a fixed horizon and their fitted log-log slope.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub dts: Vec<f64>,
    /// Root-mean-square `||U_dt(T) - U_ref(T)||_H` over the sampled paths.
    pub errors: Vec<f64>,
    pub slope: f64,
    pub reference_dt: Option<f64>,
}

/// Exact solution of the linear system (`h = 0`, `c1 kappa = 0`, vanishing
/// nonlinear terms): `u(k, t) = exp(-|k|^2 t) u(k, 0)` and
/// `phi(k, t) = exp(-nu2 |k|^2 (nu1 |k|^2 - kappa c2) t) phi(k, 0)`.
pub fn exact_linear_solution(initial: &SystemState, params: &PhysicsParams, t: f64) -> SystemState {
    let u = initial.u.map_modes(|kx, ky| (-(kx * kx + ky * ky) * t).exp());
    let phi = initial.phi.map_modes(|kx, ky| {
        let k2 = kx * kx + ky * ky;
        (-params.nu2 * k2 * (params.nu1 * k2 - params.kappa * params.c2) * t).exp()
    });
    SystemState {
        u,
        phi,
        t: initial.t + t,
        step: initial.step,
    }
}

/// Least-squares slope of `log(err)` against `log(dt)`.
pub fn fitted_slope(dts: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Strong convergence study of the scheme at horizon `horizon`.
///
/// Each path `p` uses the noise stream of member `p`; for a fine reference the
/// coarse increments are sums of the fine ones.
#[allow(clippy::too_many_arguments)]
pub fn em_order_probe(
    initial: &SystemState,
    params: &PhysicsParams,
    noise: &NoiseModel,
    scheme: &SchemeConfig,
    dt_list: &[f64],
    horizon: f64,
    paths: u64,
    reference: OrderReference,
) -> Result<ConvergenceReport> {
    if dt_list.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "order probe needs at least 3 step sizes, got {}",
            dt_list.len()
        )));
    }
    if dt_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("dt_list", "step sizes must be strictly descending"));
    }
    if paths == 0 {
        return Err(invalid("paths", "need at least one path"));
    }
    let finest = *dt_list.last().expect("non-empty");
    let (ref_dt, ratios) = match reference {
        OrderReference::ExactLinear => {
            if !noise.is_zero() {
                return Err(invalid("reference", "exact reference requires zero noise"));
            }
            (None, Vec::new())
        }
        OrderReference::Fine { refinement } => {
            let r = finest / refinement.max(1) as f64;
            let ratios = dt_list
                .iter()
                .map(|dt| {
                    let q = (dt / r).round();
                    if (q * r - dt).abs() > 1e-9 * dt {
                        Err(invalid("dt_list", format!("{dt} is not a multiple of {r}")))
                    } else {
                        Ok(q as u64)
                    }
                })
                .collect::<Result<Vec<u64>>>()?;
            (Some(r), ratios)
        }
    };
    let mut sq_err = vec![0.0; dt_list.len()];
    for p in 0..paths {
        let (reference_state, fine) = match ref_dt {
            None => (exact_linear_solution(initial, params, horizon), Vec::new()),
            Some(r) => {
                let n = step_count(horizon, r)?;
                let fine: Vec<WienerIncrement> = (0..n)
                    .map(|j| noise.sample_increment(j, p, r))
                    .collect::<Result<_>>()?;
                let sch = scheme.with_dt(r);
                let mut s = initial.clone();
                for inc in &fine {
                    s = step(&s, params, noise, &sch, inc)?.0;
                }
                (s, fine)
            }
        };
        for (i, &dt) in dt_list.iter().enumerate() {
            let sch = scheme.with_dt(dt);
            let n = step_count(horizon, dt)?;
            let mut s = initial.clone();
            for j in 0..n as usize {
                let inc = if ref_dt.is_some() {
                    let q = ratios[i] as usize;
                    let mut inc = WienerIncrement::combine(&fine[j * q..(j + 1) * q]);
                    inc.dt = dt;
                    inc
                } else {
                    WienerIncrement::zero(noise.modes(), dt)
                };
                s = step(&s, params, noise, &sch, &inc)?.0;
            }
            sq_err[i] += s.h_distance(&reference_state).powi(2);
        }
    }
    let errors: Vec<f64> = sq_err.iter().map(|e| (e / paths as f64).sqrt()).collect();
    Ok(ConvergenceReport {
        dts: dt_list.to_vec(),
        slope: fitted_slope(dt_list, &errors),
        errors,
        reference_dt: ref_dt,
    })
}
