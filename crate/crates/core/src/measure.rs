//! Time-averaged empirical measures, tightness profiles and a Feller probe.

use std::fmt;
use std::str::FromStr;

use crate::diagnostics::{energy_report, ObservableSeries};
use crate::error::{invalid, Error, Result};
use crate::integrator::{simulate, RunControl, SchemeConfig, SystemState};
use crate::noise::NoiseModel;
use crate::spectral::{PhysicsParams, SpectralField};

/// Squared norms of the state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    /// `||u||^2`
    Velocity,
    /// `||grad phi||^2`
    GradPhi,
    /// `||phi||^2_{H^1}`
    PhaseH1,
    /// `||U||^2_H`
    State,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyPart {
    Kinetic,
    Interfacial,
    Potential,
    Total,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Ux,
    Uy,
    Phi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Cos,
    Sin,
}

/// `scale / |D| * int X cos(k . x)` (or `sin`) for one component `X` of `U`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestFunctional {
    pub component: Component,
    pub parity: Parity,
    pub kx: i64,
    pub ky: i64,
    pub scale: f64,
}

impl TestFunctional {
    pub fn new(component: Component, parity: Parity, kx: i64, ky: i64) -> Self {
        Self {
            component,
            parity,
            kx,
            ky,
            scale: 1.0,
        }
    }

    pub fn with_scale(self, scale: f64) -> Self {
        Self { scale, ..self }
    }

    pub fn evaluate(&self, state: &SystemState) -> f64 {
        let field: &SpectralField = match self.component {
            Component::Ux => state.u.x(),
            Component::Uy => state.u.y(),
            Component::Phi => &state.phi,
        };
        let c = field.mode(self.kx, self.ky);
        let zero_mode = self.kx == 0 && self.ky == 0;
        let v = match (self.parity, zero_mode) {
            (Parity::Cos, true) => c.re,
            (Parity::Sin, true) => 0.0,
            (Parity::Cos, false) => c.re,
            (Parity::Sin, false) => -c.im,
        };
        self.scale * v
    }
}

/// Scalar function of the state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObservableSpec {
    Norm(NormKind),
    Energy(EnergyPart),
    Linear(TestFunctional),
    /// `tanh` of a linear functional.
    Bounded(TestFunctional),
}

impl ObservableSpec {
    pub fn evaluate(&self, state: &SystemState, params: &PhysicsParams) -> f64 {
        match self {
            Self::Norm(kind) => match kind {
                NormKind::Velocity => state.u.l2_norm_sq(),
                NormKind::GradPhi => state.phi.grad_norm_sq(),
                NormKind::PhaseH1 => state.phi.l2_norm_sq() + state.phi.grad_norm_sq(),
                NormKind::State => state.h_norm_sq(),
            },
            Self::Energy(part) => {
                let e = energy_report(state, params);
                match part {
                    EnergyPart::Kinetic => e.kinetic,
                    EnergyPart::Interfacial => e.interfacial,
                    EnergyPart::Potential => e.potential,
                    EnergyPart::Total => e.total,
                }
            }
            Self::Linear(f) => f.evaluate(state),
            Self::Bounded(f) => f.evaluate(state).tanh(),
        }
    }

    /// `sup |phi|` when finite.
    pub fn bound(&self) -> Option<f64> {
        match self {
            Self::Bounded(_) => Some(1.0),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Norm(k) => match k {
                NormKind::Velocity => "u_sq".into(),
                NormKind::GradPhi => "grad_phi_sq".into(),
                NormKind::PhaseH1 => "phi_h1_sq".into(),
                NormKind::State => "state_sq".into(),
            },
            Self::Energy(p) => format!("energy_{}", energy_word(*p)),
            Self::Linear(f) => format!("lin_{}", functional_tag(f)),
            Self::Bounded(f) => format!("tanh_{}", functional_tag(f)),
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Self::Energy(_) => "energy",
            _ => "1",
        }
    }

    /// Series of this observable over stored states.
    pub fn series(&self, states: &[SystemState], params: &PhysicsParams) -> Result<ObservableSeries> {
        let mut s = ObservableSeries::new(self.name(), self.unit());
        for st in states {
            s.push(st.t, self.evaluate(st, params))?;
        }
        Ok(s)
    }
}

fn energy_word(p: EnergyPart) -> &'static str {
    match p {
        EnergyPart::Kinetic => "kinetic",
        EnergyPart::Interfacial => "interfacial",
        EnergyPart::Potential => "potential",
        EnergyPart::Total => "total",
    }
}

fn component_word(c: Component) -> &'static str {
    match c {
        Component::Ux => "ux",
        Component::Uy => "uy",
        Component::Phi => "phi",
    }
}

fn parity_word(p: Parity) -> &'static str {
    match p {
        Parity::Cos => "cos",
        Parity::Sin => "sin",
    }
}

fn functional_tag(f: &TestFunctional) -> String {
    format!("{}_{}_{}_{}", component_word(f.component), parity_word(f.parity), f.kx, f.ky)
}

impl fmt::Display for ObservableSpec {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lin = |out: &mut fmt::Formatter<'_>, kw: &str, f: &TestFunctional| {
            write!(
                out,
                "{kw} {} {} {} {} {:?}",
                component_word(f.component),
                parity_word(f.parity),
                f.kx,
                f.ky,
                f.scale
            )
        };
        match self {
            Self::Norm(k) => {
                let w = match k {
                    NormKind::Velocity => "u",
                    NormKind::GradPhi => "grad_phi",
                    NormKind::PhaseH1 => "phi_h1",
                    NormKind::State => "state",
                };
                write!(out, "norm {w}")
            }
            Self::Energy(p) => write!(out, "energy {}", energy_word(*p)),
            Self::Linear(f) => lin(out, "linear", f),
            Self::Bounded(f) => lin(out, "bounded", f),
        }
    }
}

/// Accepts `norm u|grad_phi|phi_h1|state`, `energy kinetic|interfacial|potential|total`,
/// and `linear|bounded ux|uy|phi cos|sin KX KY [SCALE]`.
impl FromStr for ObservableSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let bad = || invalid("observable", format!("cannot parse {s:?}"));
        match words.as_slice() {
            ["norm", w] => Ok(Self::Norm(match *w {
                "u" => NormKind::Velocity,
                "grad_phi" => NormKind::GradPhi,
                "phi_h1" => NormKind::PhaseH1,
                "state" => NormKind::State,
                _ => return Err(bad()),
            })),
            ["energy", w] => Ok(Self::Energy(match *w {
                "kinetic" => EnergyPart::Kinetic,
                "interfacial" => EnergyPart::Interfacial,
                "potential" => EnergyPart::Potential,
                "total" => EnergyPart::Total,
                _ => return Err(bad()),
            })),
            [kind @ ("linear" | "bounded"), comp, par, kx, ky, rest @ ..] if rest.len() <= 1 => {
                let component = match *comp {
                    "ux" => Component::Ux,
                    "uy" => Component::Uy,
                    "phi" => Component::Phi,
                    _ => return Err(bad()),
                };
                let parity = match *par {
                    "cos" => Parity::Cos,
                    "sin" => Parity::Sin,
                    _ => return Err(bad()),
                };
                let kx = kx.parse().map_err(|_| bad())?;
                let ky = ky.parse().map_err(|_| bad())?;
                let scale = match rest.first() {
                    Some(v) => v.parse().map_err(|_| bad())?,
                    None => 1.0,
                };
                let f = TestFunctional::new(component, parity, kx, ky).with_scale(scale);
                Ok(if *kind == "linear" {
                    Self::Linear(f)
                } else {
                    Self::Bounded(f)
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Time-averaged distribution of one observable over `[t0, t1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    pub name: String,
    pub t0: f64,
    pub t1: f64,
    pub mean: f64,
    pub variance: f64,
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Samples with time in `[t0, t1)`.
    pub samples: usize,
}

/// Weight of each sample in `[t0, t1]`, reading the series as piecewise
/// constant from each sample time to the next.
fn window_weights(series: &ObservableSeries, t0: f64, t1: f64) -> Result<Vec<f64>> {
    if !(t1 > t0 && t0 >= 0.0) {
        return Err(invalid("window", format!("need T > T0 >= 0, got [{t0}, {t1}]")));
    }
    let times = series.times();
    let (first, last) = match (times.first(), times.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => {
            return Err(Error::InsufficientData(format!(
                "series {} has no samples",
                series.name()
            )))
        }
    };
    if first > t0 || last < t1 {
        return Err(Error::WindowUnavailable { t0, t1, first, last });
    }
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let end = times.get(i + 1).copied().unwrap_or(t);
            (end.min(t1) - t.max(t0)).max(0.0)
        })
        .collect())
}

fn histogram(values: &[f64], bins: usize) -> (Vec<f64>, Vec<u64>) {
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return (vec![0.0; bins + 1], vec![0; bins]);
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + i as f64 * width })
        .collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let b = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    (edges, counts)
}

/// Krylov-Bogoliubov average `1/(T - T0) int_{T0}^{T} phi(U(t)) dt` with a
/// histogram of the samples in the window.
pub fn kb_average(series: &ObservableSeries, t0: f64, t1: f64, bins: usize) -> Result<EmpiricalMeasure> {
    let w = window_weights(series, t0, t1)?;
    let span = t1 - t0;
    let vals = series.values();
    // Shifting by an in-window value makes constant series average exactly.
    let shift = w.iter().zip(vals).find(|(w, _)| **w > 0.0).map_or(0.0, |(_, v)| *v);
    let mean = shift + w.iter().zip(vals).map(|(w, v)| w * (v - shift)).sum::<f64>() / span;
    let variance = w.iter().zip(vals).map(|(w, v)| w * (v - mean).powi(2)).sum::<f64>() / span;
    let inside: Vec<f64> = series
        .times()
        .iter()
        .zip(vals)
        .filter(|(t, _)| **t >= t0 && **t < t1)
        .map(|(_, v)| *v)
        .collect();
    if inside.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no samples of {} in [{t0}, {t1})",
            series.name()
        )));
    }
    let (edges, counts) = histogram(&inside, bins);
    Ok(EmpiricalMeasure {
        name: series.name().to_string(),
        t0,
        t1,
        mean,
        variance,
        edges,
        counts,
        samples: inside.len(),
    })
}

/// Ensemble version: the member-mean of the window averages, with pooled
/// histogram and variance about that mean. Members are combined in order.
pub fn kb_average_ensemble(
    members: &[ObservableSeries],
    t0: f64,
    t1: f64,
    bins: usize,
) -> Result<EmpiricalMeasure> {
    let first = members
        .first()
        .ok_or_else(|| Error::InsufficientData("empty ensemble".into()))?;
    let per: Vec<EmpiricalMeasure> = members
        .iter()
        .map(|m| kb_average(m, t0, t1, 1))
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mean = per.iter().map(|m| m.mean).sum::<f64>() / n;
    let second = per.iter().map(|m| m.variance + m.mean * m.mean).sum::<f64>() / n;
    let pooled: Vec<f64> = members
        .iter()
        .flat_map(|m| {
            m.times()
                .iter()
                .zip(m.values())
                .filter(|(t, _)| **t >= t0 && **t < t1)
                .map(|(_, v)| *v)
        })
        .collect();
    let (edges, counts) = histogram(&pooled, bins);
    Ok(EmpiricalMeasure {
        name: first.name().to_string(),
        t0,
        t1,
        mean,
        variance: (second - mean * mean).max(0.0),
        edges,
        counts,
        samples: pooled.len(),
    })
}

/// Agreement of window averages.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub windows: Vec<(f64, f64)>,
    pub averages: Vec<f64>,
    /// Largest relative difference between consecutive windows.
    pub max_discrepancy: f64,
    pub threshold: f64,
    pub stationary: bool,
}

/// Default relative threshold for [`convergence_diagnostic`].
pub const STATIONARITY_THRESHOLD: f64 = 0.05;

/// Compares window averages pairwise in order. Differences are relative to
/// `max(|a|, |b|, floor)`; a positive `floor` (the bound of a bounded
/// observable) keeps near-zero means from dominating.
pub fn convergence_diagnostic(
    averages_of: impl Fn(f64, f64) -> Result<f64>,
    windows: &[(f64, f64)],
    threshold: f64,
    floor: f64,
) -> Result<ConvergenceReport> {
    if windows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "convergence diagnostic needs 2 windows, got {}",
            windows.len()
        )));
    }
    let averages: Vec<f64> = windows
        .iter()
        .map(|&(a, b)| averages_of(a, b))
        .collect::<Result<_>>()?;
    let max_discrepancy = averages
        .windows(2)
        .map(|p| relative_gap(p[0], p[1], floor))
        .fold(0.0, f64::max);
    Ok(ConvergenceReport {
        windows: windows.to_vec(),
        averages,
        max_discrepancy,
        threshold,
        stationary: max_discrepancy <= threshold,
    })
}

/// [`convergence_diagnostic`] on one series.
pub fn series_convergence(
    series: &ObservableSeries,
    windows: &[(f64, f64)],
    threshold: f64,
    floor: f64,
) -> Result<ConvergenceReport> {
    convergence_diagnostic(|a, b| Ok(kb_average(series, a, b, 1)?.mean), windows, threshold, floor)
}

pub fn relative_gap(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TightnessPoint {
    pub r: f64,
    /// Fraction of samples with `||U||_H > R`.
    pub fraction: f64,
    /// `mean ||U||^2_H / R^2`.
    pub envelope: f64,
}

/// Exit fractions and Chebyshev envelopes on samples of `||U||^2_H`.
///
/// Both sides are accumulated term by term with the same weights, so
/// `fraction <= envelope` holds in floating point, not just in exact arithmetic.
pub fn tightness_profile(norm_sq: &[f64], r_grid: &[f64]) -> Result<Vec<TightnessPoint>> {
    if norm_sq.is_empty() {
        return Err(Error::InsufficientData("tightness profile needs samples".into()));
    }
    let n = norm_sq.len() as f64;
    r_grid
        .iter()
        .map(|&r| {
            if !(r >= 0.0) {
                return Err(invalid("R", format!("radius must be non-negative, got {r}")));
            }
            let r2 = r * r;
            let mut exits = 0.0;
            let mut env = 0.0;
            for &x in norm_sq {
                if x > r2 {
                    exits += 1.0;
                }
                env += if r2 > 0.0 { x / r2 } else { f64::INFINITY };
            }
            Ok(TightnessPoint {
                r,
                fraction: exits / n,
                envelope: env / n,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FellerRow {
    pub epsilon: f64,
    /// Ensemble mean of the observable from the perturbed start.
    pub estimate: f64,
    /// `|estimate(eps) - estimate(0)|`.
    pub gap: f64,
    /// Standard error of the paired differences.
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FellerReport {
    pub mode: i64,
    pub t_eval: f64,
    pub members: usize,
    pub base_estimate: f64,
    /// In the order the amplitudes were given.
    pub rows: Vec<FellerRow>,
}

impl FellerReport {
    /// Whether gaps shrink as `epsilon` decreases, allowing two combined
    /// standard errors between neighbours.
    pub fn monotone(&self) -> bool {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        rows.windows(2).all(|p| {
            let slack = 2.0 * (p[0].std_error.powi(2) + p[1].std_error.powi(2)).sqrt();
            p[1].gap <= p[0].gap + slack
        })
    }
}

/// `eps cos(m x) / ||cos(m x)||_{H^1}` added to `phi`; mass is unchanged.
pub fn perturb(state: &SystemState, mode: i64, eps: f64) -> SystemState {
    let g = state.grid();
    let shape = SpectralField::cosine(g, mode, 0, 1.0);
    let norm = (shape.l2_norm_sq() + shape.grad_norm_sq()).sqrt();
    let mut out = state.clone();
    out.phi.axpy(eps / norm, &shape).expect("same grid");
    out
}

/// Setup shared by the runs of [`feller_probe`].
#[derive(Clone, Copy, Debug)]
pub struct FellerSetup<'a> {
    pub params: &'a PhysicsParams,
    pub noise: &'a NoiseModel,
    pub scheme: &'a SchemeConfig,
    pub t_eval: f64,
    pub members: usize,
}

/// Estimates `(P_t phi)(U0 + eps e_m)` for each amplitude with common noise
/// paths: member `j` of every run uses stream `j`.
pub fn feller_probe(
    base: &SystemState,
    mode: i64,
    amplitudes: &[f64],
    spec: &ObservableSpec,
    setup: &FellerSetup<'_>,
) -> Result<FellerReport> {
    if setup.members < 2 {
        return Err(invalid("members", format!("need at least 2, got {}", setup.members)));
    }
    if spec.bound().is_none() {
        return Err(invalid("observable", format!("{spec} is not bounded")));
    }
    let g = base.grid();
    if mode <= 0 || !g.is_retained(mode, 0) {
        return Err(Error::ModeOutOfRange {
            index: mode.max(0) as usize,
            count: g.n() / 2 - 1,
        });
    }
    let eval = |start: &SystemState, member: usize| -> Result<f64> {
        let mut ctl = RunControl::new(member as u64);
        let end = simulate(start, setup.params, setup.noise, setup.scheme, setup.t_eval, &mut ctl)
            .map_err(|f| f.error)?;
        Ok(spec.evaluate(&end, setup.params))
    };
    let base_vals: Vec<f64> = (0..setup.members)
        .map(|j| eval(base, j))
        .collect::<Result<_>>()?;
    let n = setup.members as f64;
    let base_estimate = base_vals.iter().sum::<f64>() / n;
    let mut rows = Vec::with_capacity(amplitudes.len());
    for &eps in amplitudes {
        let start = perturb(base, mode, eps);
        let vals: Vec<f64> = (0..setup.members)
            .map(|j| eval(&start, j))
            .collect::<Result<_>>()?;
        let diffs: Vec<f64> = vals.iter().zip(&base_vals).map(|(a, b)| a - b).collect();
        let mean_diff = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (n - 1.0);
        rows.push(FellerRow {
            epsilon: eps,
            estimate: vals.iter().sum::<f64>() / n,
            gap: mean_diff.abs(),
            std_error: (var / n).sqrt(),
        });
    }
    Ok(FellerReport {
        mode,
        t_eval: setup.t_eval,
        members: setup.members,
        base_estimate,
        rows,
    })
}
