//! `measure`: time averages, stationarity and tightness over a checkpoint archive.
//!
//! Spec file:
//!
//! ```text
//! [observables]
//! u = norm u
//! cos01 = bounded phi cos 0 1 2
//!
//! [windows]
//! early = 50, 100
//! late = 100, 200
//!
//! [options]
//! bins = 20
//! threshold = 0.05
//! tightness = 1, 2, 4, 8
//! ```
//!
//! Windows are compared in file order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chns_core::checkpoint::{self, Checkpoint};
use chns_core::diagnostics::ObservableSeries;
use chns_core::measure::{
    convergence_diagnostic, kb_average_ensemble, tightness_profile, ConvergenceReport, EmpiricalMeasure,
    ObservableSpec, TightnessPoint, STATIONARITY_THRESHOLD,
};
use chns_core::spectral::PhysicsParams;

use crate::run::CHECKPOINT_DIR;
use crate::{io_err, write_atomic, CliError, CliResult, Options};

pub const WINDOWS_CSV: &str = "measure_windows.csv";
pub const HISTOGRAMS_CSV: &str = "histograms.csv";
pub const TIGHTNESS_CSV: &str = "tightness.csv";
pub const SUMMARY_TXT: &str = "measure_summary.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSpec {
    pub observables: Vec<(String, ObservableSpec)>,
    pub windows: Vec<(String, f64, f64)>,
    pub bins: usize,
    pub threshold: f64,
    pub radii: Vec<f64>,
}

fn spec_err(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("measure spec line {line}: {msg}"))
}

fn parse_list(text: &str, line: usize) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| spec_err(line, format!("{x:?}: {e}"))))
        .collect()
}

impl MeasureSpec {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut spec = MeasureSpec {
            observables: Vec::new(),
            windows: Vec::new(),
            bins: 20,
            threshold: STATIONARITY_THRESHOLD,
            radii: Vec::new(),
        };
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.split(['#', ';']).next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            if let Some(name) = l.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                section = name.trim().to_string();
                if !matches!(section.as_str(), "observables" | "windows" | "options") {
                    return Err(spec_err(line, format!("unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = l
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| spec_err(line, "expected key = value"))?;
            match section.as_str() {
                "observables" => {
                    let obs: ObservableSpec = value.parse().map_err(|e| spec_err(line, e))?;
                    if spec.observables.iter().any(|(n, _)| n == key) {
                        return Err(spec_err(line, format!("duplicate observable {key}")));
                    }
                    spec.observables.push((key.to_string(), obs));
                }
                "windows" => {
                    let v = parse_list(value, line)?;
                    if v.len() != 2 || !(v[1] > v[0] && v[0] >= 0.0) {
                        return Err(spec_err(line, format!("window {key} needs T0, T with T > T0 >= 0")));
                    }
                    spec.windows.push((key.to_string(), v[0], v[1]));
                }
                "options" => match key {
                    "bins" => {
                        spec.bins = value
                            .parse()
                            .ok()
                            .filter(|b| *b > 0)
                            .ok_or_else(|| spec_err(line, "bins must be a positive integer"))?;
                    }
                    "threshold" => {
                        spec.threshold = value
                            .parse()
                            .ok()
                            .filter(|t: &f64| *t > 0.0)
                            .ok_or_else(|| spec_err(line, "threshold must be positive"))?;
                    }
                    "tightness" => {
                        spec.radii = parse_list(value, line)?;
                        if spec.radii.iter().any(|r| !(*r > 0.0)) {
                            return Err(spec_err(line, "radii must be positive"));
                        }
                    }
                    _ => return Err(spec_err(line, format!("unknown option {key}"))),
                },
                _ => return Err(spec_err(line, "key outside a section")),
            }
        }
        if spec.observables.is_empty() {
            return Err(CliError::Config("measure spec lists no observables".into()));
        }
        if spec.windows.is_empty() {
            return Err(CliError::Config("measure spec lists no windows".into()));
        }
        Ok(spec)
    }
}

/// Checkpoint files of one trajectory, ordered by step.
fn checkpoint_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("ckpt_") && name.ends_with(".chns") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(io_err(dir, "no checkpoint files"));
    }
    Ok(files)
}

/// Checkpoint directories of an archive: `member_*/checkpoints` for an
/// ensemble, otherwise `checkpoints`.
pub fn trajectory_dirs(archive: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(archive).map_err(|e| io_err(archive, e))?;
    let mut members = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(archive, e))?.path();
        let is_member = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("member_"));
        if is_member && path.is_dir() {
            members.push(path.join(CHECKPOINT_DIR));
        }
    }
    members.sort();
    if members.is_empty() {
        members.push(archive.join(CHECKPOINT_DIR));
    }
    Ok(members)
}

/// Loads every checkpoint of every trajectory of the archive.
pub fn load_archive(archive: &Path) -> CliResult<Vec<Vec<Checkpoint>>> {
    trajectory_dirs(archive)?
        .iter()
        .map(|dir| {
            checkpoint_files(dir)?
                .iter()
                .map(|f| checkpoint::load(f).map_err(|e| io_err(f, e)))
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ObservableReport {
    pub name: String,
    pub spec: ObservableSpec,
    pub windows: Vec<EmpiricalMeasure>,
    pub convergence: Option<ConvergenceReport>,
}

#[derive(Clone, Debug)]
pub struct MeasureReport {
    pub members: usize,
    pub observables: Vec<ObservableReport>,
    pub tightness: Vec<TightnessPoint>,
    /// Samples of `||U||^2_H` behind the tightness profile.
    pub tightness_samples: usize,
}

/// Evaluates `spec` on loaded trajectories.
pub fn measure_trajectories(trajectories: &[Vec<Checkpoint>], spec: &MeasureSpec) -> CliResult<MeasureReport> {
    let params: Vec<PhysicsParams> = trajectories
        .iter()
        .map(|t| t.first().map(|c| c.params).ok_or_else(|| CliError::Io("empty trajectory".into())))
        .collect::<CliResult<_>>()?;
    let mut observables = Vec::new();
    for (name, obs) in &spec.observables {
        let series: Vec<ObservableSeries> = trajectories
            .iter()
            .zip(&params)
            .map(|(traj, p)| {
                let states: Vec<_> = traj.iter().map(|c| c.state.clone()).collect();
                obs.series(&states, p)
            })
            .collect::<chns_core::Result<_>>()?;
        let windows: Vec<EmpiricalMeasure> = spec
            .windows
            .iter()
            .map(|(_, t0, t1)| kb_average_ensemble(&series, *t0, *t1, spec.bins))
            .collect::<chns_core::Result<_>>()?;
        let convergence = if windows.len() >= 2 {
            let spans: Vec<(f64, f64)> = spec.windows.iter().map(|(_, a, b)| (*a, *b)).collect();
            let lookup = |a: f64, b: f64| {
                Ok(windows
                    .iter()
                    .find(|w| w.t0 == a && w.t1 == b)
                    .map(|w| w.mean)
                    .expect("window computed"))
            };
            Some(convergence_diagnostic(lookup, &spans, spec.threshold, obs.bound().unwrap_or(0.0))?)
        } else {
            None
        };
        observables.push(ObservableReport {
            name: name.clone(),
            spec: *obs,
            windows,
            convergence,
        });
    }
    let start = spec.windows.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    let end = spec.windows.iter().map(|w| w.2).fold(f64::NEG_INFINITY, f64::max);
    let norm_sq: Vec<f64> = trajectories
        .iter()
        .flatten()
        .filter(|c| c.state.t >= start && c.state.t <= end)
        .map(|c| c.state.h_norm_sq())
        .collect();
    let tightness = if spec.radii.is_empty() {
        Vec::new()
    } else {
        tightness_profile(&norm_sq, &spec.radii)?
    };
    Ok(MeasureReport {
        members: trajectories.len(),
        observables,
        tightness,
        tightness_samples: norm_sq.len(),
    })
}

fn window_name<'a>(spec: &'a MeasureSpec, w: &EmpiricalMeasure) -> &'a str {
    spec.windows
        .iter()
        .find(|(_, a, b)| *a == w.t0 && *b == w.t1)
        .map_or("", |(n, _, _)| n.as_str())
}

fn windows_csv(report: &MeasureReport, spec: &MeasureSpec) -> String {
    let mut s = String::from("observable,window,t0[time],t1[time],mean,variance,samples\n");
    for o in &report.observables {
        for w in &o.windows {
            let _ = writeln!(
                s,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                o.name,
                window_name(spec, w),
                w.t0,
                w.t1,
                w.mean,
                w.variance,
                w.samples
            );
        }
    }
    s
}

fn histograms_csv(report: &MeasureReport, spec: &MeasureSpec) -> String {
    let mut s = String::from("observable,window,bin,lower,upper,count\n");
    for o in &report.observables {
        for w in &o.windows {
            for (b, c) in w.counts.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{b},{:.16e},{:.16e},{c}",
                    o.name,
                    window_name(spec, w),
                    w.edges[b],
                    w.edges[b + 1]
                );
            }
        }
    }
    s
}

fn tightness_csv(report: &MeasureReport) -> String {
    let mut s = String::from("R,fraction,envelope\n");
    for p in &report.tightness {
        let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", p.r, p.fraction, p.envelope);
    }
    s
}

pub fn summary(report: &MeasureReport, spec: &MeasureSpec) -> String {
    let mut s = format!("members: {}\n", report.members);
    for o in &report.observables {
        let _ = writeln!(s, "{} ({}):", o.name, o.spec);
        for w in &o.windows {
            let _ = writeln!(
                s,
                "  {:<12} [{}, {}]  mean {:.6e}  var {:.3e}  samples {}",
                window_name(spec, w),
                w.t0,
                w.t1,
                w.mean,
                w.variance,
                w.samples
            );
        }
        if let Some(c) = &o.convergence {
            let _ = writeln!(
                s,
                "  discrepancy {:.3e} (threshold {}): {}",
                c.max_discrepancy,
                c.threshold,
                if c.stationary { "stationary" } else { "drifting" }
            );
        }
    }
    if !report.tightness.is_empty() {
        let _ = writeln!(s, "tightness over {} samples:", report.tightness_samples);
        for p in &report.tightness {
            let _ = writeln!(s, "  R {:<8} fraction {:.4e}  envelope {:.4e}", p.r, p.fraction, p.envelope);
        }
    }
    s
}

/// `chns measure`: reads the archive, writes the reports into `out`.
pub fn cmd_measure(archive: &Path, spec_path: &Path, out: &Path, opts: &Options) -> CliResult<MeasureReport> {
    let text = fs::read_to_string(spec_path).map_err(|e| io_err(spec_path, e))?;
    let spec = MeasureSpec::parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", spec_path.display())),
        other => other,
    })?;
    let trajectories = load_archive(archive)?;
    let report = measure_trajectories(&trajectories, &spec)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_atomic(&out.join(WINDOWS_CSV), windows_csv(&report, &spec).as_bytes())?;
    write_atomic(&out.join(HISTOGRAMS_CSV), histograms_csv(&report, &spec).as_bytes())?;
    if !report.tightness.is_empty() {
        write_atomic(&out.join(TIGHTNESS_CSV), tightness_csv(&report).as_bytes())?;
    }
    let text = summary(&report, &spec);
    write_atomic(&out.join(SUMMARY_TXT), text.as_bytes())?;
    if !opts.quiet {
        print!("{text}");
    }
    Ok(report)
}
