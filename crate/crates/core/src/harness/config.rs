//! Run configuration and its file format.
//!
//! Config files are TOML with four flat sections:
//!
//! ```toml
//! [physics]
//! nu_f = 1.0
//! nu_s = 1.0
//! alpha = 4.0
//! t_final = 0.25
//!
//! [discretization]
//! degree = 1
//! levels = [5, 6, 7, 8]
//! scheme = "splitting"      # or "monolithic"
//! lambda0 = "auto"          # "projected" | "zero"
//! tol = 1e-12
//!
//! [interface]
//! spec = "horizontal:0.75"  # or "slanted:0.25,0.75"
//!
//! [outputs]
//! csv = "table1.csv"
//! markdown = true
//! functional_log = "functionals.csv"
//! check_identity = false
//!
//! [injection]
//! preset = "all"
//! ```
//!
//! Every key is optional; missing keys take the values of `RunConfig::default`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::DEFAULT_TOL;
use crate::mesh::InterfaceSpec;
use crate::splitting::{Field, ResidualInjection};

pub const MAX_LEVEL: u32 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Splitting,
    Monolithic,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "splitting" | "split" => Ok(Scheme::Splitting),
            "monolithic" => Ok(Scheme::Monolithic),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Splitting => "splitting",
            Scheme::Monolithic => "monolithic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lambda0Mode {
    /// Projected exact flux for error sweeps, zero for injection runs.
    Auto,
    Projected,
    Zero,
}

impl FromStr for Lambda0Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(Lambda0Mode::Auto),
            "projected" | "a" => Ok(Lambda0Mode::Projected),
            "zero" | "b" => Ok(Lambda0Mode::Zero),
            other => Err(Error::Config(format!("unknown lambda0 mode `{other}`"))),
        }
    }
}

/// Named residual injections for stability runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectionPreset {
    /// No injected data; only the initial state drives the run.
    None,
    /// Volume sources b₁, b₂.
    Sources,
    /// Robin perturbations ε₁, ε₂.
    Interface,
    All,
}

impl InjectionPreset {
    pub const NAMES: [&'static str; 4] = ["none", "sources", "interface", "all"];

    pub fn injection(self) -> ResidualInjection {
        let b1: Field = Arc::new(|p, t| (1.0 + t) * (2.0 * p[0]).cos() * p[1]);
        let b2: Field = Arc::new(|p, t| (3.0 * t).sin() + p[0] * (1.0 - p[1]));
        let eps1: Field = Arc::new(|p, t| 0.5 * (std::f64::consts::PI * p[0]).cos() * (-t).exp());
        let eps2: Field = Arc::new(|p, t| 0.25 * (1.0 + p[0] * p[0]) * (2.0 * t).cos());
        let (sources, interface) = match self {
            InjectionPreset::None => (false, false),
            InjectionPreset::Sources => (true, false),
            InjectionPreset::Interface => (false, true),
            InjectionPreset::All => (true, true),
        };
        ResidualInjection {
            b1: sources.then_some(b1),
            b2: sources.then_some(b2),
            eps1: interface.then_some(eps1),
            eps2: interface.then_some(eps2),
        }
    }
}

impl FromStr for InjectionPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(InjectionPreset::None),
            "sources" => Ok(InjectionPreset::Sources),
            "interface" => Ok(InjectionPreset::Interface),
            "all" => Ok(InjectionPreset::All),
            other => Err(Error::Config(format!(
                "unknown injection preset `{other}` (expected one of {})",
                InjectionPreset::NAMES.join(", ")
            ))),
        }
    }
}

impl fmt::Display for InjectionPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = *self as usize;
        f.write_str(InjectionPreset::NAMES[i])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outputs {
    pub csv: Option<PathBuf>,
    pub markdown: bool,
    /// Per-step Z, S, forcing and identity residual.
    pub functional_log: Option<PathBuf>,
    pub check_identity: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nu_f: f64,
    pub nu_s: f64,
    pub alpha: f64,
    pub t_final: f64,
    pub interface: InterfaceSpec,
    pub degree: usize,
    /// h = Δt = 2⁻ᵏ for every k.
    pub levels: Vec<u32>,
    pub scheme: Scheme,
    pub lambda0: Lambda0Mode,
    pub tol: f64,
    pub outputs: Outputs,
    pub injection: Option<InjectionPreset>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            nu_f: 1.0,
            nu_s: 1.0,
            alpha: 4.0,
            t_final: 0.25,
            interface: InterfaceSpec::Horizontal { y0: 0.75 },
            degree: 1,
            levels: vec![4, 5, 6, 7, 8],
            scheme: Scheme::Splitting,
            lambda0: Lambda0Mode::Auto,
            tol: DEFAULT_TOL,
            outputs: Outputs { markdown: true, ..Default::default() },
            injection: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("nu_f", self.nu_f), ("nu_s", self.nu_s), ("alpha", self.alpha), ("t_final", self.t_final), ("tol", self.tol)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        self.interface.validate()?;
        if self.degree != 1 && self.degree != 2 {
            return Err(Error::Config(format!("degree must be 1 or 2, got {}", self.degree)));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("no levels given".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("levels must be strictly increasing: {:?}", self.levels)));
        }
        for &k in &self.levels {
            if !(1..=MAX_LEVEL).contains(&k) {
                return Err(Error::Config(format!("level {k} outside 1..={MAX_LEVEL}")));
            }
            let steps = self.t_final * f64::from(1u32 << k);
            if (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
                return Err(Error::Config(format!("t_final = {} is not a whole number of steps at level {k}", self.t_final)));
            }
        }
        if self.injection.is_none() && self.nu_f != self.nu_s {
            return Err(Error::Config("the manufactured solution requires nu_f == nu_s".into()));
        }
        if self.injection.is_some() && self.scheme == Scheme::Monolithic {
            return Err(Error::Config("injection presets apply to the splitting scheme only".into()));
        }
        Ok(())
    }

    pub fn steps(&self, level: u32) -> usize {
        (self.t_final * f64::from(1u32 << level)).round() as usize
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: FileConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut c = RunConfig::default();
        if let Some(p) = file.physics {
            set(&mut c.nu_f, p.nu_f);
            set(&mut c.nu_s, p.nu_s);
            set(&mut c.alpha, p.alpha);
            set(&mut c.t_final, p.t_final);
        }
        if let Some(d) = file.discretization {
            set(&mut c.degree, d.degree);
            set(&mut c.levels, d.levels);
            set(&mut c.tol, d.tol);
            if let Some(s) = d.scheme {
                c.scheme = s.parse()?;
            }
            if let Some(s) = d.lambda0 {
                c.lambda0 = s.parse()?;
            }
        }
        if let Some(i) = file.interface {
            if let Some(s) = i.spec {
                c.interface = s.parse()?;
            }
        }
        if let Some(o) = file.outputs {
            c.outputs.csv = o.csv.or(c.outputs.csv);
            c.outputs.functional_log = o.functional_log.or(c.outputs.functional_log);
            set(&mut c.outputs.markdown, o.markdown);
            set(&mut c.outputs.check_identity, o.check_identity);
        }
        if let Some(i) = file.injection {
            if let Some(p) = i.preset {
                c.injection = Some(p.parse()?);
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses "5,6,7", "5..8" (inclusive) or a single level.
pub fn parse_levels(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Config(format!("cannot parse levels `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    physics: Option<PhysicsSection>,
    discretization: Option<DiscretizationSection>,
    interface: Option<InterfaceSection>,
    outputs: Option<OutputsSection>,
    injection: Option<InjectionSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhysicsSection {
    nu_f: Option<f64>,
    nu_s: Option<f64>,
    alpha: Option<f64>,
    #[serde(alias = "T")]
    t_final: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscretizationSection {
    degree: Option<usize>,
    levels: Option<Vec<u32>>,
    scheme: Option<String>,
    lambda0: Option<String>,
    tol: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InterfaceSection {
    spec: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputsSection {
    csv: Option<PathBuf>,
    markdown: Option<bool>,
    functional_log: Option<PathBuf>,
    check_identity: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InjectionSection {
    preset: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.levels.last(), Some(&8));
        assert_eq!(c.steps(5), 8);
    }

    #[test]
    fn full_file() {
        let c = RunConfig::from_toml(
            r#"
            [physics]
            alpha = 8.0
            T = 0.5
            [discretization]
            degree = 2
            levels = [3, 4]
            scheme = "monolithic"
            lambda0 = "zero"
            [interface]
            spec = "slanted:0.25,0.75"
            [outputs]
            csv = "out.csv"
            check_identity = true
            "#,
        )
        .unwrap();
        assert_eq!(c.alpha, 8.0);
        assert_eq!(c.t_final, 0.5);
        assert_eq!(c.degree, 2);
        assert_eq!(c.levels, vec![3, 4]);
        assert_eq!(c.scheme, Scheme::Monolithic);
        assert_eq!(c.lambda0, Lambda0Mode::Zero);
        assert_eq!(c.interface, InterfaceSpec::Slanted { y_left: 0.25, y_right: 0.75 });
        assert_eq!(c.outputs.csv.as_deref(), Some(Path::new("out.csv")));
        assert!(c.outputs.check_identity && c.outputs.markdown);
        c.validate().unwrap();
    }

    #[test]
    fn rejects() {
        assert!(RunConfig::from_toml("[physics]\nbogus = 1").is_err());
        assert!(RunConfig::from_toml("[discretization]\nscheme = \"explicit\"").is_err());
        assert!(RunConfig::from_toml("[injection]\npreset = \"loud\"").is_err());
        let mut c = RunConfig { levels: vec![5, 4], ..Default::default() };
        assert!(c.validate().unwrap_err().is_config());
        c.levels = vec![1];
        assert!(c.validate().is_err());
        c.levels = vec![4];
        c.nu_s = 2.0;
        assert!(c.validate().is_err());
        c.injection = Some(InjectionPreset::None);
        c.validate().unwrap();
        c.degree = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn level_lists() {
        assert_eq!(parse_levels("5,6, 7").unwrap(), vec![5, 6, 7]);
        assert_eq!(parse_levels("4..6").unwrap(), vec![4, 5, 6]);
        assert_eq!(parse_levels("4..=6").unwrap(), vec![4, 5, 6]);
        assert_eq!(parse_levels("8").unwrap(), vec![8]);
        assert!(parse_levels("a,b").is_err());
    }

    #[test]
    fn presets_roundtrip() {
        for name in InjectionPreset::NAMES {
            let p: InjectionPreset = name.parse().unwrap();
            assert_eq!(p.to_string(), name);
        }
        assert!(InjectionPreset::None.injection().is_zero());
        let all = InjectionPreset::All.injection();
        assert!(all.b1.is_some() && all.eps2.is_some());
    }
}
