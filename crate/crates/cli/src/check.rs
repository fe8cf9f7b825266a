//! `check`: noise conditions on sampled states plus the discrete property suite.

use std::fmt;

use chns_core::config::RunConfig;
use chns_core::diagnostics::energy_report;
use chns_core::init::{random_scalar, random_velocity};
use chns_core::integrator::{simulate, Observer, RunControl, SchemeConfig, SystemState};
use chns_core::noise::{ConditionReport, NoiseModel};
use chns_core::spectral::{a1_apply, trilinear_b0, trilinear_b1, trilinear_b2, GridSpec, PhysicsParams};
use chns_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{CliError, CliResult, Options};

/// Tolerance for the cancellations, relative to the product of `L^2` norms.
pub const CANCELLATION_TOL: f64 = 1e-11;
pub const DUALITY_TOL: f64 = 1e-10;
pub const CONSERVATION_TOL: f64 = 1e-12;
pub const DISSIPATION_TOL: f64 = 1e-10;

/// Steps of the sampling and dissipation runs.
pub const CHECK_STEPS: u64 = 200;
pub const CHECK_TRIPLES: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckReport {
    pub rows: Vec<PropertyRow>,
}

impl CheckReport {
    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.rows.push(PropertyRow {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect()
    }

    pub fn row(&self, name: &str) -> Option<&PropertyRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
        for r in &self.rows {
            let tag = if r.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag}  {:width$}  {}", r.name, r.detail)?;
        }
        Ok(())
    }
}

/// Worst normalized values over random full-band triples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrilinearStats {
    pub triples: usize,
    /// `max |B0(u, v, v)| / (|u| |v|^2)`
    pub b0: f64,
    /// `max |B2(u, phi, phi)| / (|u| |phi|^2)`
    pub b2: f64,
    /// `max |B2(u, phi, mu) - B1(mu, phi, u)| / max(|B2|, |B1|)` with `mu = nu1 A1 phi`
    pub duality: f64,
}

/// Evaluates the trilinear identities on `triples` random triples whose modes
/// fill the whole retained band.
pub fn trilinear_suite(grid: GridSpec, params: &PhysicsParams, triples: usize, seed: u64) -> Result<TrilinearStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = (grid.n() / 2) as i64 - 1;
    let mut stats = TrilinearStats {
        triples,
        ..Default::default()
    };
    for _ in 0..triples {
        let u = random_velocity(grid, &mut rng, band, 1.0);
        let v = random_velocity(grid, &mut rng, band, 1.0);
        let phi = random_scalar(grid, &mut rng, band, 1.0);
        let b0 = trilinear_b0(&u, &v, &v)?;
        let b2 = trilinear_b2(&u, &phi, &phi)?;
        stats.b0 = stats.b0.max(b0.abs() / (u.l2_norm() * v.l2_norm_sq()));
        stats.b2 = stats.b2.max(b2.abs() / (u.l2_norm() * phi.l2_norm_sq()));
        let mu = a1_apply(&phi).scale(params.nu1);
        let lhs = trilinear_b2(&u, &phi, &mu)?;
        let rhs = trilinear_b1(&mu, &phi, &u)?;
        let scale = lhs.abs().max(rhs.abs());
        if scale > 0.0 {
            stats.duality = stats.duality.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(stats)
}

/// Per-step mass drift, divergence and energy increase.
struct StepAudit {
    params: PhysicsParams,
    mass0: f64,
    energy: f64,
    mass_drift: f64,
    divergence: f64,
    energy_rise: f64,
    samples: Vec<SystemState>,
    sample_every: u64,
}

impl StepAudit {
    fn new(initial: &SystemState, params: PhysicsParams, sample_every: u64) -> Self {
        Self {
            params,
            mass0: initial.phi.mean(),
            energy: energy_report(initial, &params).total,
            mass_drift: 0.0,
            divergence: initial.u.max_divergence(),
            energy_rise: 0.0,
            samples: vec![initial.clone()],
            sample_every: sample_every.max(1),
        }
    }
}

impl Observer for StepAudit {
    fn observe(&mut self, state: &SystemState) -> Result<()> {
        self.mass_drift = self.mass_drift.max((state.phi.mean() - self.mass0).abs());
        self.divergence = self.divergence.max(state.u.max_divergence());
        let e = energy_report(state, &self.params).total;
        let rise = (e - self.energy) / self.energy.abs().max(f64::MIN_POSITIVE);
        self.energy_rise = self.energy_rise.max(rise);
        self.energy = e;
        if state.step % self.sample_every == 0 {
            self.samples.push(state.clone());
        }
        Ok(())
    }
}

fn audit_run(
    initial: &SystemState,
    params: &PhysicsParams,
    noise: &NoiseModel,
    scheme: &SchemeConfig,
    steps: u64,
) -> (StepAudit, Option<String>) {
    let mut audit = StepAudit::new(initial, *params, (steps / 16).max(1));
    let horizon = steps as f64 * scheme.dt;
    let res = {
        let mut ctl = RunControl::new(0).observer(&mut audit);
        simulate(initial, params, noise, scheme, horizon, &mut ctl)
    };
    (audit, res.err().map(|f| f.error.to_string()))
}

fn conditions_rows(report: &mut CheckReport, c: &ConditionReport) {
    let text = c.to_string();
    let lines: Vec<&str> = text.lines().collect();
    let flags = [c.c1_holds, c.c2_holds, c.c3_holds, c.c4_holds];
    for (i, (line, ok)) in lines.iter().zip(flags).enumerate() {
        let detail = line.splitn(3, ' ').nth(2).unwrap_or("").trim();
        report.push(&format!("C.{}", i + 1), ok, detail.to_string());
    }
}

/// Runs the whole suite for `cfg`.
pub fn run_checks(cfg: &RunConfig) -> CliResult<CheckReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let noise = cfg.noise_model()?;
    let scheme = cfg.scheme_config();
    scheme.validate(&cfg.physics)?;
    let params = cfg.physics;
    let initial = cfg.initial.build(grid);
    let steps = cfg.steps()?.clamp(1, CHECK_STEPS);
    let mut report = CheckReport::default();

    let (audit, failure) = audit_run(&initial, &params, &noise, &scheme, steps);
    report.push(
        "stochastic run",
        failure.is_none(),
        failure.unwrap_or_else(|| format!("{steps} steps, {} sampled states", audit.samples.len())),
    );
    let conditions = noise.check_conditions(&audit.samples, &params)?;
    conditions_rows(&mut report, &conditions);

    let tri = trilinear_suite(grid, &params, CHECK_TRIPLES, cfg.noise.seed)?;
    report.push(
        "trilinear B0 cancellation",
        tri.b0 <= CANCELLATION_TOL,
        format!("max |B0(u,v,v)| / norms = {:.3e} (tol {CANCELLATION_TOL:.0e}, pad {})", tri.b0, grid.pad()),
    );
    report.push(
        "trilinear B2 cancellation",
        tri.b2 <= CANCELLATION_TOL,
        format!("max |B2(u,phi,phi)| / norms = {:.3e} (tol {CANCELLATION_TOL:.0e})", tri.b2),
    );
    report.push(
        "B2/B1 duality",
        tri.duality <= DUALITY_TOL,
        format!("max relative defect = {:.3e} (tol {DUALITY_TOL:.0e})", tri.duality),
    );
    report.push(
        "mass conservation",
        audit.mass_drift <= CONSERVATION_TOL,
        format!("max |<phi_n> - <phi_0>| = {:.3e}", audit.mass_drift),
    );
    report.push(
        "divergence-free",
        audit.divergence <= CONSERVATION_TOL,
        format!("max |k . u(k)| = {:.3e}", audit.divergence),
    );

    let det = NoiseModel::none(grid);
    let (dissipation, failure) = audit_run(&initial, &params, &det, &scheme, steps);
    let ok = failure.is_none() && dissipation.energy_rise <= DISSIPATION_TOL;
    report.push(
        "deterministic dissipation",
        ok,
        failure.unwrap_or_else(|| {
            format!("max relative energy increase = {:.3e} over {steps} steps", dissipation.energy_rise.max(0.0))
        }),
    );
    Ok(report)
}

/// `chns check`: prints the table, fails with exit 4 if any row fails.
pub fn cmd_check(cfg: &RunConfig, opts: &Options) -> CliResult<CheckReport> {
    let report = run_checks(cfg)?;
    print!("{report}");
    if report.passed() {
        opts.note("all checks passed");
        Ok(report)
    } else {
        Err(CliError::Property(format!("failed: {}", report.failures().join(", "))))
    }
}
