//! Sectioned `key = value` scenario files.
//!
//! ```text
//! [scenario]
//! name = nonholonomic
//!
//! [parameters]
//! epsilon = 0.1      # omega defaults to 2 * epsilon
//!
//! [candidate]
//! psi0 = 0, 0, -1
//!
//! [run]
//! dt = 1e-2
//! ```

use std::fmt::Write as _;
use std::path::Path;

use lambdaset_core::scenarios::{
    BouncingBallParams, Builtin, FrictionParams, NonholonomicParams, ScenarioParams, TemperatureParams,
};
use lambdaset_core::Sense;

use crate::CliError;

pub const SECTIONS: [&str; 4] = ["scenario", "parameters", "candidate", "run"];

const CANDIDATE_KEYS: &[&str] = &["psi0", "sense", "nu", "q0", "psi_scalar0", "shift_axis", "shift_weight"];
const RUN_KEYS: &[&str] = &[
    "dt",
    "event_tol",
    "seed",
    "n_paths",
    "workers",
    "tol",
    "loewner_tol",
    "grid_deg",
    "epsilons",
    "omega_ratio",
    "bracket_lo",
    "bracket_hi",
    "scan",
    "variation_eps",
];

/// Where a value came from, for error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag,
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Line(n) => write!(f, "line {n}"),
            Self::Flag => f.write_str("--set"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub origin: Origin,
}

/// Splits text into entries. Syntax errors and duplicates are all collected.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, CliError> {
    let mut issues = Vec::new();
    let mut entries: Vec<Entry> = Vec::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("");
        let indent = line.len() - line.trim_start().len();
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            match rest.strip_suffix(']').map(str::trim) {
                Some(name) if SECTIONS.contains(&name) => section = Some(name.to_string()),
                Some(name) => {
                    issues.push(format!("line {n}, col {}: unknown section [{name}] (expected one of {})", indent + 2, SECTIONS.join(", ")));
                    section = None;
                }
                None => issues.push(format!("line {n}, col {}: section header is missing ']'", indent + line.len() + 1)),
            }
            continue;
        }
        let Some(eq) = line.find('=') else {
            issues.push(format!("line {n}, col {}: expected 'key = value'", indent + 1));
            continue;
        };
        let key = line[..eq].trim();
        let value = line[eq + 1..].trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            issues.push(format!("line {n}, col {}: malformed key '{key}'", indent + 1));
            continue;
        }
        if value.is_empty() {
            issues.push(format!("line {n}, col {}: key '{key}' has no value", indent + eq + 2));
            continue;
        }
        let Some(sec) = &section else {
            if issues.iter().all(|m: &String| !m.contains("unknown section")) {
                issues.push(format!("line {n}, col {}: key '{key}' appears before any section header", indent + 1));
            }
            continue;
        };
        if let Some(prev) = entries.iter().find(|e| &e.section == sec && e.key == key) {
            issues.push(format!("line {n}: duplicate key '{key}' in [{sec}] (first set on {})", prev.origin));
            continue;
        }
        entries.push(Entry { section: sec.clone(), key: key.to_string(), value: value.to_string(), origin: Origin::Line(n) });
    }
    if issues.is_empty() {
        Ok(entries)
    } else {
        Err(CliError::Config(issues.join("\n")))
    }
}

/// Parameter block of the chosen builtin.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Nonholonomic(NonholonomicParams),
    Friction(FrictionParams),
    BouncingBall(BouncingBallParams),
    Temperature(TemperatureParams),
}

impl Params {
    pub fn defaults(b: Builtin) -> Self {
        match b {
            Builtin::Nonholonomic => Self::Nonholonomic(Default::default()),
            Builtin::Friction => Self::Friction(Default::default()),
            Builtin::BouncingBall => Self::BouncingBall(Default::default()),
            Builtin::Temperature => Self::Temperature(Default::default()),
        }
    }

    pub fn builtin(&self) -> Builtin {
        match self {
            Self::Nonholonomic(_) => Builtin::Nonholonomic,
            Self::Friction(_) => Builtin::Friction,
            Self::BouncingBall(_) => Builtin::BouncingBall,
            Self::Temperature(_) => Builtin::Temperature,
        }
    }

    pub fn keys(&self) -> &'static [&'static str] {
        match self {
            Self::Nonholonomic(_) => NonholonomicParams::keys(),
            Self::Friction(_) => FrictionParams::keys(),
            Self::BouncingBall(_) => BouncingBallParams::keys(),
            Self::Temperature(_) => TemperatureParams::keys(),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> lambdaset_core::Result<()> {
        match self {
            Self::Nonholonomic(p) => p.set(key, value),
            Self::Friction(p) => p.set(key, value),
            Self::BouncingBall(p) => p.set(key, value),
            Self::Temperature(p) => p.set(key, value),
        }
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        match self {
            Self::Nonholonomic(p) => p.entries(),
            Self::Friction(p) => p.entries(),
            Self::BouncingBall(p) => p.entries(),
            Self::Temperature(p) => p.entries(),
        }
    }

    pub fn validate(&self) -> lambdaset_core::Result<()> {
        match self {
            Self::Nonholonomic(p) => p.validate(),
            Self::Friction(p) => p.validate(),
            Self::BouncingBall(p) => p.validate(),
            Self::Temperature(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSpec {
    pub psi0: Option<Vec<f64>>,
    pub sense: Sense,
    /// Jump multipliers, one per event.
    pub nu: Option<Vec<f64>>,
    /// Diagonal of `Q(0)`.
    pub q0: Option<Vec<f64>>,
    pub psi_scalar0: f64,
    /// Measure variation moving weight from `−e_axis` to `+e_axis`.
    pub shift_axis: Option<usize>,
    pub shift_weight: f64,
}

impl Default for CandidateSpec {
    fn default() -> Self {
        Self { psi0: None, sense: Sense::Minimize, nu: None, q0: None, psi_scalar0: 0.0, shift_axis: None, shift_weight: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    /// Step size; `None` picks a per-command default.
    pub dt: Option<f64>,
    pub event_tol: f64,
    pub seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub workers: Option<usize>,
    pub tol: f64,
    pub loewner_tol: f64,
    pub grid_deg: Option<f64>,
    pub epsilons: Vec<f64>,
    pub omega_ratio: f64,
    pub bracket: (f64, f64),
    pub scan: usize,
    pub variation_eps: Vec<f64>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            dt: None,
            event_tol: 1e-10,
            seed: None,
            n_paths: None,
            workers: None,
            tol: 1e-6,
            loewner_tol: 1e-9,
            grid_deg: None,
            epsilons: vec![0.2, 0.1, 0.05, 0.02, 0.01],
            omega_ratio: 2.0,
            bracket: (0.05, 50.0),
            scan: 41,
            variation_eps: vec![0.1, 0.05, 0.025, -0.025, -0.05, -0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: Params,
    pub candidate: CandidateSpec,
    pub run: RunSpec,
}

impl ScenarioConfig {
    pub fn builtin(b: Builtin) -> Self {
        Self { params: Params::defaults(b), candidate: CandidateSpec::default(), run: RunSpec::default() }
    }

    pub fn scenario(&self) -> Builtin {
        self.params.builtin()
    }

    /// Resolves entries, with `builtin` overriding `[scenario] name`.
    pub fn from_entries(entries: &[Entry], builtin: Option<Builtin>) -> Result<Self, CliError> {
        let mut issues = Vec::new();
        let named = entries.iter().find(|e| e.section == "scenario" && e.key == "name");
        let b = match (builtin, named) {
            (Some(b), _) => b,
            (None, Some(e)) => match e.value.parse::<Builtin>() {
                Ok(b) => b,
                Err(err) => return Err(CliError::Config(format!("{}: {err}", e.origin))),
            },
            (None, None) => return Err(CliError::Config("missing required key 'name' in [scenario] (or pass --builtin)".into())),
        };
        let mut cfg = Self::builtin(b);
        for e in entries {
            let r = match e.section.as_str() {
                "scenario" if e.key == "name" => Ok(()),
                "scenario" => Err(format!("unknown key '{}' in [scenario] (expected name)", e.key)),
                "parameters" => cfg.params.set(&e.key, &e.value).map_err(|err| err.to_string()),
                "candidate" => cfg.candidate.set(&e.key, &e.value),
                "run" => cfg.run.set(&e.key, &e.value),
                s => Err(format!("unknown section [{s}]")),
            };
            if let Err(m) = r {
                issues.push(format!("{}: {m}", e.origin));
            }
        }
        if issues.is_empty() {
            if let Err(err) = cfg.params.validate() {
                issues.push(format!("[parameters]: {err}"));
            }
        }
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::Config(issues.join("\n")))
        }
    }

    /// Sectioned text that [`load_str`] reads back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[scenario]\nname = {}\n\n[parameters]", self.scenario());
        for (k, v) in self.params.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n[candidate]\n");
        for (k, v) in self.candidate.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n[run]\n");
        for (k, v) in self.run.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Routes a `--set key=value` override to the section that owns the key.
/// `section.key` is also accepted.
pub fn override_entry(spec: &str, params: &Params) -> Result<Entry, CliError> {
    let (key, value) = spec
        .split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{spec}'")))?;
    let (section, key) = match key.split_once('.') {
        Some((s, k)) if SECTIONS.contains(&s) => (s, k),
        Some((s, _)) => return Err(CliError::Config(format!("--set {spec}: unknown section '{s}'"))),
        None if params.keys().contains(&key) => ("parameters", key),
        None if CANDIDATE_KEYS.contains(&key) => ("candidate", key),
        None if RUN_KEYS.contains(&key) => ("run", key),
        None => {
            return Err(CliError::Config(format!(
                "--set {spec}: unknown key '{key}' for {} (parameters: {}; candidate: {}; run: {})",
                params.builtin(),
                params.keys().join(", "),
                CANDIDATE_KEYS.join(", "),
                RUN_KEYS.join(", ")
            )))
        }
    };
    Ok(Entry { section: section.into(), key: key.into(), value: value.into(), origin: Origin::Flag })
}

/// Replaces or appends overrides; file duplicates were already rejected.
pub fn apply_overrides(entries: &mut Vec<Entry>, overrides: Vec<Entry>) {
    for o in overrides {
        match entries.iter_mut().find(|e| e.section == o.section && e.key == o.key) {
            Some(e) => *e = o,
            None => entries.push(o),
        }
    }
}

pub fn load_str(text: &str, builtin: Option<Builtin>) -> Result<ScenarioConfig, CliError> {
    ScenarioConfig::from_entries(&parse_entries(text)?, builtin)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = read_text(path)?;
    load_str(&text, None)
}

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.trim().parse::<T>().map_err(|_| format!("{key}: cannot parse '{value}'"))
}

fn parse_finite(key: &str, value: &str) -> Result<f64, String> {
    match parse_num::<f64>(key, value)? {
        v if v.is_finite() => Ok(v),
        _ => Err(format!("{key}: expected a finite number, got '{value}'")),
    }
}

fn parse_positive(key: &str, value: &str) -> Result<f64, String> {
    match parse_finite(key, value)? {
        v if v > 0.0 => Ok(v),
        v => Err(format!("{key} must be positive, got {v}")),
    }
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, String> {
    value.split(',').map(|s| parse_finite(key, s)).collect()
}

pub fn format_list(v: &[f64]) -> String {
    v.iter().map(|x| crate::output::real_text(*x)).collect::<Vec<_>>().join(", ")
}

impl CandidateSpec {
    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "psi0" => self.psi0 = Some(parse_list(key, value)?),
            "sense" => self.sense = value.parse().map_err(|e: lambdaset_core::Error| e.to_string())?,
            "nu" => self.nu = Some(if value == "none" { vec![] } else { parse_list(key, value)? }),
            "q0" => self.q0 = Some(parse_list(key, value)?),
            "psi_scalar0" => self.psi_scalar0 = parse_finite(key, value)?,
            "shift_axis" => match parse_num::<usize>(key, value)? {
                a @ (0 | 1) => self.shift_axis = Some(a),
                a => return Err(format!("shift_axis must be 0 or 1, got {a}")),
            },
            "shift_weight" => match parse_finite(key, value)? {
                w if (0.0..=1.0).contains(&w) => self.shift_weight = w,
                w => return Err(format!("shift_weight must lie in [0, 1], got {w}")),
            },
            _ => return Err(format!("unknown key '{key}' in [candidate] (expected one of {})", CANDIDATE_KEYS.join(", "))),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Some(p) = &self.psi0 {
            out.push(("psi0", format_list(p)));
        }
        out.push(("sense", self.sense.to_string()));
        if let Some(n) = &self.nu {
            out.push(("nu", if n.is_empty() { "none".into() } else { format_list(n) }));
        }
        if let Some(q) = &self.q0 {
            out.push(("q0", format_list(q)));
        }
        out.push(("psi_scalar0", self.psi_scalar0.to_string()));
        if let Some(a) = self.shift_axis {
            out.push(("shift_axis", a.to_string()));
        }
        out.push(("shift_weight", self.shift_weight.to_string()));
        out
    }
}

impl RunSpec {
    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "dt" => self.dt = Some(parse_positive(key, value)?),
            "event_tol" => self.event_tol = parse_positive(key, value)?,
            "seed" => self.seed = Some(parse_num(key, value)?),
            "n_paths" => match parse_num::<usize>(key, value)? {
                0 => return Err("n_paths must be at least 1".into()),
                n => self.n_paths = Some(n),
            },
            "workers" => match parse_num::<usize>(key, value)? {
                0 => return Err("workers must be at least 1".into()),
                n => self.workers = Some(n),
            },
            "tol" => self.tol = parse_positive(key, value)?,
            "loewner_tol" => self.loewner_tol = parse_positive(key, value)?,
            "grid_deg" => self.grid_deg = Some(parse_positive(key, value)?),
            "epsilons" => self.epsilons = parse_list(key, value)?,
            "omega_ratio" => self.omega_ratio = parse_positive(key, value)?,
            "bracket_lo" => self.bracket.0 = parse_positive(key, value)?,
            "bracket_hi" => self.bracket.1 = parse_positive(key, value)?,
            "scan" => self.scan = parse_num(key, value)?,
            "variation_eps" => self.variation_eps = parse_list(key, value)?,
            _ => return Err(format!("unknown key '{key}' in [run] (expected one of {})", RUN_KEYS.join(", "))),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Some(dt) = self.dt {
            out.push(("dt", dt.to_string()));
        }
        out.push(("event_tol", self.event_tol.to_string()));
        if let Some(s) = self.seed {
            out.push(("seed", s.to_string()));
        }
        if let Some(n) = self.n_paths {
            out.push(("n_paths", n.to_string()));
        }
        if let Some(w) = self.workers {
            out.push(("workers", w.to_string()));
        }
        out.push(("tol", self.tol.to_string()));
        out.push(("loewner_tol", self.loewner_tol.to_string()));
        if let Some(g) = self.grid_deg {
            out.push(("grid_deg", g.to_string()));
        }
        out.push(("epsilons", format_list(&self.epsilons)));
        out.push(("omega_ratio", self.omega_ratio.to_string()));
        out.push(("bracket_lo", self.bracket.0.to_string()));
        out.push(("bracket_hi", self.bracket.1.to_string()));
        out.push(("scan", self.scan.to_string()));
        out.push(("variation_eps", format_list(&self.variation_eps)));
        out
    }
}
