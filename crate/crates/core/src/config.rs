//! INI-style run configuration.
//!
//! ```text
//! [domain]   N, L, dealias_pad
//! [physics]  nu1, nu2, kappa, c1, c2
//! [noise]    K, sigma0, sigma_decay, c0, c1_mult, seed
//! [time]     dt, T, burn_in, checkpoint_every, observe_every
//! [scheme]   stabilization (number or `auto` = kappa c2), convection
//! [initial]  phi_mean, phi_rms, u_rms, cutoff, seed
//! [output]   directory, formats
//! [em_order] dt_list, paths, T, reference (`exact` or `fine`), refinement
//! ```
//!
//! Missing keys take their defaults. `#` and `;` start comments. A
//! `[manifest]` section is accepted and ignored, so manifests parse as configs.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::init::InitialCondition;
use crate::integrator::{step_count, OrderReference, SchemeConfig};
use crate::noise::NoiseModel;
use crate::spectral::{GridSpec, PhysicsParams};

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseConfig {
    pub modes: usize,
    pub sigma0: f64,
    pub sigma_decay: f64,
    pub c0: f64,
    /// Multiplicative weight `c1` of the noise (not the potential's `C1`).
    pub c1_mult: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeConfig {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub checkpoint_every: u64,
    pub observe_every: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stabilization {
    /// `kappa c2`, the smallest energy-stable value.
    Auto,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSection {
    pub stabilization: Stabilization,
    pub convection: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmOrderConfig {
    pub dt_list: Vec<f64>,
    pub paths: usize,
    pub horizon: f64,
    pub reference: OrderReference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub length: f64,
    pub dealias_pad: usize,
    pub physics: PhysicsParams,
    pub noise: NoiseConfig,
    pub time: TimeConfig,
    pub scheme: SchemeSection,
    pub initial: InitialCondition,
    pub output: OutputConfig,
    pub em_order: EmOrderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 32,
            length: 2.0 * PI,
            dealias_pad: 2,
            physics: PhysicsParams::default(),
            noise: NoiseConfig {
                modes: 4,
                sigma0: 0.3,
                sigma_decay: 1.0,
                c0: 1.0,
                c1_mult: 0.5,
                seed: 2024,
            },
            time: TimeConfig {
                dt: 2e-3,
                horizon: 10.0,
                burn_in: 2.0,
                checkpoint_every: 1000,
                observe_every: 10,
            },
            scheme: SchemeSection {
                stabilization: Stabilization::Auto,
                convection: true,
            },
            initial: InitialCondition::default(),
            output: OutputConfig {
                directory: PathBuf::from("out"),
                formats: vec!["csv".into()],
            },
            em_order: EmOrderConfig {
                dt_list: vec![0.01, 0.005, 0.0025],
                paths: 16,
                horizon: 1.0,
                reference: OrderReference::Fine { refinement: 8 },
            },
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

type Sections = BTreeMap<String, BTreeMap<String, Entry>>;

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

const KNOWN: &[(&str, &[&str])] = &[
    ("domain", &["N", "L", "dealias_pad"]),
    ("physics", &["nu1", "nu2", "kappa", "c1", "c2"]),
    ("noise", &["K", "sigma0", "sigma_decay", "c0", "c1_mult", "seed"]),
    ("time", &["dt", "T", "burn_in", "checkpoint_every", "observe_every"]),
    ("scheme", &["stabilization", "convection"]),
    ("initial", &["phi_mean", "phi_rms", "u_rms", "cutoff", "seed"]),
    ("output", &["directory", "formats"]),
    ("em_order", &["dt_list", "paths", "T", "reference", "refinement"]),
];

fn split_sections(text: &str) -> Result<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| config_err(line, format!("malformed section header {body:?}")))?
                .trim();
            if name != "manifest" && !KNOWN.iter().any(|(s, _)| *s == name) {
                return Err(config_err(line, format!("unknown section [{name}]")));
            }
            current = Some(name.to_string());
            out.entry(name.to_string()).or_default();
            continue;
        }
        let section = current
            .clone()
            .ok_or_else(|| config_err(line, "key outside of any section"))?;
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| config_err(line, format!("expected key = value, found {body:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if section == "manifest" {
            continue;
        }
        let known = KNOWN.iter().find(|(s, _)| *s == section).expect("checked").1;
        if !known.contains(&key) {
            return Err(config_err(line, format!("unknown key {section}.{key}")));
        }
        let map = out.get_mut(&section).expect("inserted at header");
        if let Some(prev) = map.get(key) {
            return Err(config_err(
                line,
                format!("duplicate key {section}.{key} (first set at line {})", prev.line),
            ));
        }
        map.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }
    Ok(out)
}

struct Reader<'a> {
    sections: &'a Sections,
}

impl Reader<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|m| m.get(key))
    }

    fn line(&self, section: &str, key: &str) -> usize {
        self.get(section, key).map_or(0, |e| e.line)
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => e.value.parse().map_err(|err| {
                config_err(e.line, format!("{section}.{key}: cannot parse {:?}: {err}", e.value))
            }),
        }
    }

    fn f64_list(&self, section: &str, key: &str, default: Vec<f64>) -> Result<Vec<f64>> {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => e
                .value
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|err| {
                        config_err(e.line, format!("{section}.{key}: cannot parse {v:?}: {err}"))
                    })
                })
                .collect(),
        }
    }
}

impl RunConfig {
    /// Parses and validates; errors carry the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let sections = split_sections(text)?;
        let r = Reader {
            sections: &sections,
        };
        let d = Self::default();
        let stabilization = match r.get("scheme", "stabilization") {
            None => d.scheme.stabilization,
            Some(e) if e.value == "auto" => Stabilization::Auto,
            Some(_) => Stabilization::Value(r.parse("scheme", "stabilization", 0.0)?),
        };
        let reference = match r.get("em_order", "reference").map(|e| (e.value.as_str(), e.line)) {
            None | Some(("fine", _)) => OrderReference::Fine {
                refinement: r.parse(
                    "em_order",
                    "refinement",
                    match d.em_order.reference {
                        OrderReference::Fine { refinement } => refinement,
                        OrderReference::ExactLinear => 8,
                    },
                )?,
            },
            Some(("exact", _)) => OrderReference::ExactLinear,
            Some((other, line)) => {
                return Err(config_err(
                    line,
                    format!("em_order.reference must be exact or fine, got {other:?}"),
                ))
            }
        };
        let cfg = Self {
            n: r.parse("domain", "N", d.n)?,
            length: r.parse("domain", "L", d.length)?,
            dealias_pad: r.parse("domain", "dealias_pad", d.dealias_pad)?,
            physics: PhysicsParams {
                nu1: r.parse("physics", "nu1", d.physics.nu1)?,
                nu2: r.parse("physics", "nu2", d.physics.nu2)?,
                kappa: r.parse("physics", "kappa", d.physics.kappa)?,
                c1: r.parse("physics", "c1", d.physics.c1)?,
                c2: r.parse("physics", "c2", d.physics.c2)?,
            },
            noise: NoiseConfig {
                modes: r.parse("noise", "K", d.noise.modes)?,
                sigma0: r.parse("noise", "sigma0", d.noise.sigma0)?,
                sigma_decay: r.parse("noise", "sigma_decay", d.noise.sigma_decay)?,
                c0: r.parse("noise", "c0", d.noise.c0)?,
                c1_mult: r.parse("noise", "c1_mult", d.noise.c1_mult)?,
                seed: r.parse("noise", "seed", d.noise.seed)?,
            },
            time: TimeConfig {
                dt: r.parse("time", "dt", d.time.dt)?,
                horizon: r.parse("time", "T", d.time.horizon)?,
                burn_in: r.parse("time", "burn_in", d.time.burn_in)?,
                checkpoint_every: r.parse("time", "checkpoint_every", d.time.checkpoint_every)?,
                observe_every: r.parse("time", "observe_every", d.time.observe_every)?,
            },
            scheme: SchemeSection {
                stabilization,
                convection: r.parse("scheme", "convection", d.scheme.convection)?,
            },
            initial: InitialCondition {
                phi_mean: r.parse("initial", "phi_mean", d.initial.phi_mean)?,
                phi_rms: r.parse("initial", "phi_rms", d.initial.phi_rms)?,
                u_rms: r.parse("initial", "u_rms", d.initial.u_rms)?,
                cutoff: r.parse("initial", "cutoff", d.initial.cutoff)?,
                seed: r.parse("initial", "seed", d.initial.seed)?,
            },
            output: OutputConfig {
                directory: r
                    .get("output", "directory")
                    .map_or(d.output.directory.clone(), |e| PathBuf::from(&e.value)),
                formats: r.get("output", "formats").map_or(d.output.formats.clone(), |e| {
                    e.value
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                }),
            },
            em_order: EmOrderConfig {
                dt_list: r.f64_list("em_order", "dt_list", d.em_order.dt_list.clone())?,
                paths: r.parse("em_order", "paths", d.em_order.paths)?,
                horizon: r.parse("em_order", "T", d.em_order.horizon)?,
                reference,
            },
        };
        cfg.validate_with(|s, k| r.line(s, k))?;
        Ok(cfg)
    }

    /// Checks every invariant; `line` is 0 for values that did not come from a file.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(|_, _| 0)
    }

    fn validate_with(&self, line: impl Fn(&str, &str) -> usize) -> Result<()> {
        let fail = |s: &str, k: &str, msg: String| config_err(line(s, k), format!("{s}.{k} {msg}"));
        if self.n < 8 || self.n % 2 != 0 {
            return Err(fail("domain", "N", format!("must be even and >= 8, got {}", self.n)));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(fail("domain", "L", format!("must be positive, got {}", self.length)));
        }
        if self.dealias_pad < 1 {
            return Err(fail("domain", "dealias_pad", "must be >= 1".into()));
        }
        let p = &self.physics;
        for (k, v) in [("nu1", p.nu1), ("nu2", p.nu2), ("kappa", p.kappa), ("c1", p.c1), ("c2", p.c2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(fail("physics", k, format!("must be positive, got {v}")));
            }
        }
        let nz = &self.noise;
        for (k, v) in [("sigma0", nz.sigma0), ("c0", nz.c0), ("c1_mult", nz.c1_mult)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(fail("noise", k, format!("must be non-negative, got {v}")));
            }
        }
        if !nz.sigma_decay.is_finite() {
            return Err(fail("noise", "sigma_decay", "must be finite".into()));
        }
        let grid = self.grid().map_err(|e| fail("domain", "N", e.to_string()))?;
        self.noise_model_on(grid)
            .map_err(|e| fail("noise", "K", e.to_string()))?;
        let t = &self.time;
        if !(t.dt.is_finite() && t.dt > 0.0) {
            return Err(fail("time", "dt", format!("must be positive, got {}", t.dt)));
        }
        step_count(t.horizon, t.dt).map_err(|e| fail("time", "T", e.to_string()))?;
        if !(t.burn_in >= 0.0 && t.burn_in <= t.horizon) {
            return Err(fail(
                "time",
                "burn_in",
                format!("must lie in [0, T = {}], got {}", t.horizon, t.burn_in),
            ));
        }
        if t.observe_every == 0 {
            return Err(fail("time", "observe_every", "must be >= 1".into()));
        }
        if let Stabilization::Value(s) = self.scheme.stabilization {
            self.scheme_config()
                .validate(&self.physics)
                .map_err(|e| fail("scheme", "stabilization", format!("{s}: {e}")))?;
        }
        let ini = &self.initial;
        for (k, v) in [("phi_mean", ini.phi_mean), ("phi_rms", ini.phi_rms), ("u_rms", ini.u_rms)] {
            if !v.is_finite() || (k != "phi_mean" && v < 0.0) {
                return Err(fail("initial", k, format!("invalid value {v}")));
            }
        }
        if ini.cutoff < 1 {
            return Err(fail("initial", "cutoff", "must be >= 1".into()));
        }
        if self.output.directory.as_os_str().is_empty() {
            return Err(fail("output", "directory", "must not be empty".into()));
        }
        for f in &self.output.formats {
            if f != "csv" && f != "checkpoint" {
                return Err(fail("output", "formats", format!("unknown format {f:?}")));
            }
        }
        let em = &self.em_order;
        if em.dt_list.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(fail("em_order", "dt_list", "entries must be positive".into()));
        }
        if em.paths == 0 {
            return Err(fail("em_order", "paths", "must be >= 1".into()));
        }
        if !(em.horizon.is_finite() && em.horizon > 0.0) {
            return Err(fail("em_order", "T", "must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.length, self.dealias_pad)
    }

    fn noise_model_on(&self, grid: GridSpec) -> Result<NoiseModel> {
        let nz = &self.noise;
        NoiseModel::with_decay(grid, nz.modes, nz.sigma0, nz.sigma_decay, nz.c0, nz.c1_mult, nz.seed)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        self.noise_model_on(self.grid()?)
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        let s = match self.scheme.stabilization {
            Stabilization::Auto => self.physics.kappa * self.physics.c2,
            Stabilization::Value(v) => v,
        };
        let sc = SchemeConfig::new(self.time.dt, s);
        if self.scheme.convection {
            sc
        } else {
            sc.without_convection()
        }
    }

    pub fn steps(&self) -> Result<u64> {
        step_count(self.time.horizon, self.time.dt)
    }

    /// Serializes every key; `parse(to_ini())` returns an equal config.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let p = &self.physics;
        let nz = &self.noise;
        let t = &self.time;
        let ini = &self.initial;
        let stab = match self.scheme.stabilization {
            Stabilization::Auto => "auto".to_string(),
            Stabilization::Value(v) => v.to_string(),
        };
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let (reference, refinement) = match self.em_order.reference {
            OrderReference::ExactLinear => ("exact", None),
            OrderReference::Fine { refinement } => ("fine", Some(refinement)),
        };
        let _ = write!(
            s,
            "[domain]\nN = {}\nL = {}\ndealias_pad = {}\n\n\
             [physics]\nnu1 = {}\nnu2 = {}\nkappa = {}\nc1 = {}\nc2 = {}\n\n\
             [noise]\nK = {}\nsigma0 = {}\nsigma_decay = {}\nc0 = {}\nc1_mult = {}\nseed = {}\n\n\
             [time]\ndt = {}\nT = {}\nburn_in = {}\ncheckpoint_every = {}\nobserve_every = {}\n\n\
             [scheme]\nstabilization = {}\nconvection = {}\n\n\
             [initial]\nphi_mean = {}\nphi_rms = {}\nu_rms = {}\ncutoff = {}\nseed = {}\n\n\
             [output]\ndirectory = {}\nformats = {}\n\n\
             [em_order]\ndt_list = {}\npaths = {}\nT = {}\nreference = {}\n",
            self.n,
            self.length,
            self.dealias_pad,
            p.nu1,
            p.nu2,
            p.kappa,
            p.c1,
            p.c2,
            nz.modes,
            nz.sigma0,
            nz.sigma_decay,
            nz.c0,
            nz.c1_mult,
            nz.seed,
            t.dt,
            t.horizon,
            t.burn_in,
            t.checkpoint_every,
            t.observe_every,
            stab,
            self.scheme.convection,
            ini.phi_mean,
            ini.phi_rms,
            ini.u_rms,
            ini.cutoff,
            ini.seed,
            self.output.directory.display(),
            self.output.formats.join(", "),
            join(&self.em_order.dt_list),
            self.em_order.paths,
            self.em_order.horizon,
            reference,
        );
        if let Some(r) = refinement {
            let _ = writeln!(s, "refinement = {r}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let d = RunConfig::default();
        d.validate().unwrap();
        let back = RunConfig::parse(&d.to_ini()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_ini(), d.to_ini());
    }

    #[test]
    fn empty_text_is_the_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn bad_value_names_field_and_line() {
        let text = "[domain]\nN = 16\n\n[physics]\nnu1 = 0.5\nnu2 = -1\n";
        match RunConfig::parse(text) {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("physics.nu2"), "{message}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let cases = [
            ("N = 8\n", 1),
            ("[domain]\nN 8\n", 2),
            ("[domain]\nN = 8\nN = 16\n", 3),
            ("[domain]\nM = 8\n", 2),
            ("[nonsense]\n", 1),
            ("[time]\ndt = abc\n", 2),
            ("[time]\ndt = 0.003\nT = 1\n", 3),
        ];
        for (text, want) in cases {
            match RunConfig::parse(text) {
                Err(Error::Config { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn manifest_section_is_ignored() {
        let mut text = RunConfig::default().to_ini();
        text.push_str("\n[manifest]\nstatus = ok\nanything = goes\n");
        assert_eq!(RunConfig::parse(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn explicit_stabilization_is_checked() {
        assert!(RunConfig::parse("[scheme]\nstabilization = 0.5\n").is_err());
        let c = RunConfig::parse("[scheme]\nstabilization = 2\nconvection = false\n").unwrap();
        assert_eq!(c.scheme_config().stabilization, 2.0);
        assert!(!c.scheme_config().convection);
    }
}
