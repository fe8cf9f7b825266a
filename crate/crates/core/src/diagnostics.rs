//! Scalar observables, energy bookkeeping and trajectory seminorms.
//!
//! Energies are stored in the Lyapunov convention
//! `E = 1/2 ||u||^2 + nu1/2 ||grad phi||^2 + kappa (F(phi), 1)`; the balance
//! residual works with `2E`.

use std::io::Write;
use std::ops::Sub;

use crate::error::{Error, Result};
use crate::integrator::{Observer, StepRecord, SystemState};
use crate::spectral::{potential, potential_integral, PhysicsParams, SobolevNorm, SpectralField, VelocityField};

/// Time-indexed scalar observable.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSeries {
    name: String,
    unit: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ObservableSeries {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_parts(
        name: impl Into<String>,
        unit: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut s = Self::new(name, unit);
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                actual: values.len(),
            });
        }
        for (t, v) in times.into_iter().zip(values) {
            s.push(t, v)?;
        }
        Ok(s)
    }

    /// Appends a sample; times must increase strictly.
    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::InvalidParameter {
                    name: "t",
                    reason: format!("sample time {t} does not follow {last}"),
                });
            }
        }
        self.times.push(t);
        self.values.push(value);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV column header, `name[unit]`.
    pub fn header(&self) -> String {
        format!("{}[{}]", self.name, self.unit)
    }
}

/// Norms of a state. `state` is `||U||_H = (||u||^2 + ||phi||^2_{H^1})^(1/2)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StateNorms {
    pub u: f64,
    pub grad_phi: f64,
    pub phi_h1: f64,
    pub state: f64,
}

pub fn state_norms(state: &SystemState) -> StateNorms {
    let u2 = state.u.l2_norm_sq();
    let g2 = state.phi.grad_norm_sq();
    let h1 = state.phi.l2_norm_sq() + g2;
    StateNorms {
        u: u2.sqrt(),
        grad_phi: g2.sqrt(),
        phi_h1: h1.sqrt(),
        state: (u2 + h1).sqrt(),
    }
}

/// Lyapunov energy split into its parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyReport {
    /// `1/2 ||u||^2`
    pub kinetic: f64,
    /// `nu1/2 ||grad phi||^2`
    pub interfacial: f64,
    /// `kappa (F(phi), 1)`
    pub potential: f64,
    pub total: f64,
}

pub fn energy_report(state: &SystemState, params: &PhysicsParams) -> EnergyReport {
    let kinetic = 0.5 * state.u.l2_norm_sq();
    let interfacial = 0.5 * params.nu1 * state.phi.grad_norm_sq();
    let potential = params.kappa * potential_integral(&state.phi, params);
    EnergyReport {
        kinetic,
        interfacial,
        potential,
        total: kinetic + interfacial + potential,
    }
}

/// `||u||^2 + nu1 ||grad phi||^2 + 2 kappa (|F(phi)|, 1)`, a positive scale
/// for the doubled energy.
fn balance_scale(state: &SystemState, params: &PhysicsParams) -> f64 {
    let vals = state.phi.to_padded();
    let abs_f = vals.iter().map(|&s| potential(s, params).abs()).sum::<f64>() / vals.len() as f64
        * state.grid().area();
    state.u.l2_norm_sq() + params.nu1 * state.phi.grad_norm_sq() + 2.0 * params.kappa * abs_f
}

/// Energy and per-step balance terms along one trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BalanceTrace {
    /// Snapshot times, one more than `steps`.
    pub times: Vec<f64>,
    /// Lyapunov energy at each snapshot.
    pub energy: Vec<f64>,
    /// Normalization scale at each snapshot.
    pub scale: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

/// Terms of the doubled energy balance over a window.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BalanceTerms {
    /// `2 E(end) - 2 E(start)`
    pub energy_change: f64,
    /// `2 sum dt (||grad u||^2 + nu2 ||grad mu||^2)`
    pub dissipation: f64,
    /// `2 sum (h d beta, u)`
    pub martingale: f64,
    /// `sum ||h||^2_HS dt`
    pub ito: f64,
    /// Positive scale of the start state.
    pub scale: f64,
}

impl BalanceTerms {
    /// `(LHS - RHS) / scale`.
    pub fn residual(&self) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        (self.energy_change + self.dissipation - self.martingale - self.ito) / self.scale
    }
}

impl BalanceTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Balance terms between snapshot indices `start <= end`.
    pub fn terms(&self, start: usize, end: usize) -> Result<BalanceTerms> {
        if self.times.len() < 2 || self.steps.len() + 1 != self.times.len() {
            return Err(Error::InsufficientData(format!(
                "balance window needs at least 2 snapshots, trace has {}",
                self.times.len()
            )));
        }
        if start > end || end >= self.times.len() {
            return Err(Error::WindowUnavailable {
                t0: start as f64,
                t1: end as f64,
                first: 0.0,
                last: (self.times.len() - 1) as f64,
            });
        }
        let mut terms = BalanceTerms {
            energy_change: 2.0 * (self.energy[end] - self.energy[start]),
            scale: self.scale[start],
            ..Default::default()
        };
        for rec in &self.steps[start..end] {
            terms.dissipation += 2.0 * rec.dt * rec.dissipation_rate;
            terms.martingale += 2.0 * rec.martingale;
            terms.ito += rec.ito_correction;
        }
        Ok(terms)
    }
}

/// Discrete energy balance residual over the whole trace, normalized by the
/// initial scale. A trace that never advanced gives 0.
pub fn balance_residual(trace: &BalanceTrace) -> Result<f64> {
    if trace.times.len() == 1 && trace.steps.is_empty() {
        return Ok(0.0);
    }
    Ok(trace.terms(0, trace.len().saturating_sub(1))?.residual())
}

/// Observer collecting a [`BalanceTrace`]; must run at stride 1.
#[derive(Clone, Debug)]
pub struct BalanceRecorder {
    params: PhysicsParams,
    trace: BalanceTrace,
}

impl BalanceRecorder {
    pub fn new(initial: &SystemState, params: PhysicsParams) -> Self {
        let mut rec = Self {
            params,
            trace: BalanceTrace::default(),
        };
        rec.push_snapshot(initial);
        rec
    }

    fn push_snapshot(&mut self, state: &SystemState) {
        self.trace.times.push(state.t);
        self.trace.energy.push(energy_report(state, &self.params).total);
        self.trace.scale.push(balance_scale(state, &self.params));
    }

    pub fn trace(&self) -> &BalanceTrace {
        &self.trace
    }

    pub fn into_trace(self) -> BalanceTrace {
        self.trace
    }
}

impl Observer for BalanceRecorder {
    fn observe(&mut self, state: &SystemState) -> Result<()> {
        self.push_snapshot(state);
        Ok(())
    }

    fn record(&mut self, _before: &SystemState, record: &StepRecord) -> Result<()> {
        self.trace.steps.push(*record);
        Ok(())
    }
}

/// Snapshots of a field-valued path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SnapshotSeries<T> {
    times: Vec<f64>,
    fields: Vec<T>,
}

impl<T> SnapshotSeries<T> {
    pub fn new() -> Self {
        Self {
            times: Vec::new(),
            fields: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, field: T) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::InvalidParameter {
                    name: "t",
                    reason: format!("snapshot time {t} does not follow {last}"),
                });
            }
        }
        self.times.push(t);
        self.fields.push(field);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[T] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

impl<T> SnapshotSeries<T>
where
    T: SobolevNorm,
    for<'a> &'a T: Sub<&'a T, Output = T>,
{
    /// `max_{i<j} ||X(t_j) - X(t_i)||_{H^s} / |t_j - t_i|^alpha` over the
    /// stored pairs, a lower bound for the seminorm of the continuous path.
    pub fn holder_seminorm(&self, alpha: f64, s: f64) -> Result<f64> {
        if self.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "Holder seminorm needs 2 snapshots, got {}",
                self.len()
            )));
        }
        let mut best: f64 = 0.0;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let d = (&self.fields[j] - &self.fields[i]).sobolev_norm(s);
                let gap = (self.times[j] - self.times[i]).powf(alpha);
                best = best.max(d / gap);
            }
        }
        Ok(best)
    }
}

/// Observer storing `u` and `phi` every `stride` steps.
#[derive(Clone, Debug)]
pub struct SnapshotRecorder {
    stride: u64,
    pub velocity: SnapshotSeries<VelocityField>,
    pub phase: SnapshotSeries<SpectralField>,
}

impl SnapshotRecorder {
    pub const DEFAULT_STRIDE: u64 = 32;

    pub fn new(initial: &SystemState, stride: u64) -> Self {
        let mut rec = Self {
            stride: stride.max(1),
            velocity: SnapshotSeries::new(),
            phase: SnapshotSeries::new(),
        };
        rec.observe(initial).expect("first snapshot");
        rec
    }
}

impl Observer for SnapshotRecorder {
    fn stride(&self) -> u64 {
        self.stride
    }

    fn observe(&mut self, state: &SystemState) -> Result<()> {
        self.velocity.push(state.t, state.u.clone())?;
        self.phase.push(state.t, state.phi.clone())
    }
}

/// Running trapezoidal integral of `||U||^2_H` for one member.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentAccumulator {
    stride: u64,
    last_t: f64,
    last_value: f64,
    integral: f64,
    times: Vec<f64>,
    integrals: Vec<f64>,
    values: Vec<f64>,
}

impl MomentAccumulator {
    /// Starts at `initial`, accumulating on every `stride`-th step when used
    /// as an observer.
    pub fn new(initial: &SystemState, stride: u64) -> Self {
        let v = initial.h_norm_sq();
        Self {
            stride: stride.max(1),
            last_t: initial.t,
            last_value: v,
            integral: 0.0,
            times: vec![initial.t],
            integrals: vec![0.0],
            values: vec![v],
        }
    }

    /// Trapezoidal update to `state.t`.
    pub fn accumulate(&mut self, state: &SystemState) -> Result<()> {
        let dt = state.t - self.last_t;
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "t",
                reason: format!("state time {} does not follow {}", state.t, self.last_t),
            });
        }
        let v = state.h_norm_sq();
        self.integral += 0.5 * dt * (self.last_value + v);
        self.last_t = state.t;
        self.last_value = v;
        self.times.push(state.t);
        self.integrals.push(self.integral);
        self.values.push(v);
        Ok(())
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn t(&self) -> f64 {
        self.last_t
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `int_0^t ||U||^2_H` at each accumulation time.
    pub fn integrals(&self) -> &[f64] {
        &self.integrals
    }

    /// `||U||^2_H` at each accumulation time.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Observer for MomentAccumulator {
    fn stride(&self) -> u64 {
        self.stride
    }

    fn observe(&mut self, state: &SystemState) -> Result<()> {
        self.accumulate(state)
    }
}

/// Member-averaged moment integral on a common time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleMoments {
    pub members: usize,
    pub times: Vec<f64>,
    pub mean_integral: Vec<f64>,
    pub mean_value: Vec<f64>,
}

impl EnsembleMoments {
    /// Merges in slice order, so the result depends only on that order.
    pub fn merge(members: &[MomentAccumulator]) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InsufficientData("no ensemble members to merge".into()))?;
        let len = first.times.len();
        let mut integral = vec![0.0; len];
        let mut value = vec![0.0; len];
        for m in members {
            if m.times != first.times {
                return Err(Error::InvalidParameter {
                    name: "members",
                    reason: "accumulators were sampled on different time grids".into(),
                });
            }
            for i in 0..len {
                integral[i] += m.integrals[i];
                value[i] += m.values[i];
            }
        }
        let n = members.len() as f64;
        Ok(Self {
            members: members.len(),
            times: first.times.clone(),
            mean_integral: integral.into_iter().map(|x| x / n).collect(),
            mean_value: value.into_iter().map(|x| x / n).collect(),
        })
    }

    /// `(1/t) int_0^t` of the mean, for `t > 0`.
    pub fn running_ratio(&self) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.mean_integral)
            .filter(|(t, _)| **t > 0.0)
            .map(|(&t, &i)| (t, i / t))
            .collect()
    }
}

/// Standard observables of a state, in CSV column order.
pub const STATE_COLUMNS: [(&str, &str); 8] = [
    ("u_l2", "1"),
    ("grad_phi_l2", "1"),
    ("phi_h1", "1"),
    ("state_h", "1"),
    ("kinetic", "energy"),
    ("interfacial", "energy"),
    ("potential", "energy"),
    ("energy", "energy"),
];

/// Observer filling one [`ObservableSeries`] per entry of [`STATE_COLUMNS`],
/// plus `phi_mean` and `max_div`.
#[derive(Clone, Debug)]
pub struct StateObserver {
    stride: u64,
    params: PhysicsParams,
    pub series: Vec<ObservableSeries>,
}

impl StateObserver {
    pub fn new(params: PhysicsParams, stride: u64) -> Self {
        let mut series: Vec<ObservableSeries> = STATE_COLUMNS
            .iter()
            .map(|(n, u)| ObservableSeries::new(*n, *u))
            .collect();
        series.push(ObservableSeries::new("phi_mean", "1"));
        series.push(ObservableSeries::new("max_div", "1/length"));
        Self {
            stride: stride.max(1),
            params,
            series,
        }
    }

    pub fn series(&self, name: &str) -> Option<&ObservableSeries> {
        self.series.iter().find(|s| s.name() == name)
    }
}

impl Observer for StateObserver {
    fn stride(&self) -> u64 {
        self.stride
    }

    fn observe(&mut self, state: &SystemState) -> Result<()> {
        let n = state_norms(state);
        let e = energy_report(state, &self.params);
        let vals = [
            n.u,
            n.grad_phi,
            n.phi_h1,
            n.state,
            e.kinetic,
            e.interfacial,
            e.potential,
            e.total,
            state.phi.mean(),
            state.u.max_divergence(),
        ];
        for (s, v) in self.series.iter_mut().zip(vals) {
            s.push(state.t, v)?;
        }
        Ok(())
    }
}

/// Writes series sharing one time axis as CSV: a `t[time]` column, then one
/// `name[unit]` column per series, values with 17 significant digits.
pub fn write_csv<W: Write>(out: &mut W, series: &[&ObservableSeries]) -> Result<()> {
    let times = match series.first() {
        Some(s) => s.times(),
        None => &[],
    };
    for s in series {
        if s.times() != times {
            return Err(Error::InvalidParameter {
                name: "series",
                reason: format!("column {} has a different time axis", s.name()),
            });
        }
    }
    let mut header = String::from("t[time]");
    for s in series {
        header.push(',');
        header.push_str(&s.header());
    }
    writeln!(out, "{header}")?;
    let mut line = String::new();
    for (i, t) in times.iter().enumerate() {
        line.clear();
        line.push_str(&format!("{t:.16e}"));
        for s in series {
            line.push_str(&format!(",{:.16e}", s.values()[i]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Parses CSV written by [`write_csv`] back into series.
pub fn read_csv(text: &str) -> Result<Vec<ObservableSeries>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InsufficientData("empty CSV".into()))?;
    let cols: Vec<(String, String)> = header
        .split(',')
        .map(|h| match h.split_once('[') {
            Some((n, rest)) => (n.to_string(), rest.trim_end_matches(']').to_string()),
            None => (h.to_string(), String::new()),
        })
        .collect();
    if cols.len() < 2 || cols[0].0 != "t" {
        return Err(Error::Config {
            line: 1,
            message: "expected a leading t[time] column".into(),
        });
    }
    let mut out: Vec<ObservableSeries> =
        cols[1..].iter().map(|(n, u)| ObservableSeries::new(n.clone(), u.clone())).collect();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Config {
                line: lineno + 1,
                message: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::Config {
                line: lineno + 1,
                message: format!("bad number {s:?}: {e}"),
            })
        };
        let t = parse(fields[0])?;
        for (series, f) in out.iter_mut().zip(&fields[1..]) {
            series.push(t, parse(f)?)?;
        }
    }
    Ok(out)
}
