//! Trajectory CSV and run reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lambdaset_core::{DVector, Trajectory};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LAMBDA_OUT_DIR";

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("lambdaset-out"))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t,x0..x{n-1},mode,u0..u{m-1}` with LF endings and 17 significant digits.
/// `n` and `m` fix the header when the trajectory is empty.
pub fn trajectory_csv(tr: &Trajectory, n: usize, m: usize) -> String {
    let mut s = String::from("t");
    for i in 0..n {
        let _ = write!(s, ",x{i}");
    }
    s.push_str(",mode");
    for j in 0..m {
        let _ = write!(s, ",u{j}");
    }
    s.push('\n');
    for k in 0..tr.len() {
        s.push_str(&num(tr.times[k]));
        for v in tr.states[k].iter() {
            s.push(',');
            s.push_str(&num(*v));
        }
        let _ = write!(s, ",{}", tr.modes[k]);
        if let Some(u) = tr.controls.get(k) {
            for v in u.iter() {
                s.push(',');
                s.push_str(&num(*v));
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_trajectory_csv(path: &Path, tr: &Trajectory, n: usize, m: usize) -> Result<(), CliError> {
    write_file(path, &trajectory_csv(tr, n, m))
}

/// Reads a CSV written by [`trajectory_csv`] back into a trajectory.
pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory, CliError> {
    let bad = |line: usize, msg: String| CliError::Config(format!("CSV line {line}: {msg}"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "missing header".into()))?.split(',').collect();
    let mode_col = header.iter().position(|h| *h == "mode").ok_or_else(|| bad(1, "no mode column".into()))?;
    if header.first() != Some(&"t") {
        return Err(bad(1, "first column must be t".into()));
    }
    let n = mode_col - 1;
    let m = header.len() - mode_col - 1;
    let mut tr = Trajectory::default();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != header.len() {
            return Err(bad(i + 2, format!("expected {} columns, got {}", header.len(), cols.len())));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 2, format!("cannot parse '{s}'")));
        tr.times.push(f(cols[0])?);
        tr.states.push(DVector::from_vec(cols[1..=n].iter().map(|s| f(s)).collect::<Result<_, _>>()?));
        tr.modes.push(cols[mode_col].parse().map_err(|_| bad(i + 2, format!("bad mode '{}'", cols[mode_col])))?);
        if m > 0 {
            tr.controls.push(DVector::from_vec(cols[mode_col + 1..].iter().map(|s| f(s)).collect::<Result<_, _>>()?));
        }
    }
    tr.validate()?;
    Ok(tr)
}

/// Shortest round-trip text, in exponent form for very small or large values.
pub fn real_text(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

pub trait ReportValue {
    fn render(&self) -> String;
}

impl ReportValue for f64 {
    fn render(&self) -> String {
        real_text(*self)
    }
}

macro_rules! display_value {
    ($($t:ty),*) => {$(
        impl ReportValue for $t {
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_value!(usize, u64, bool, String, &str, lambdaset_core::Verdict);

/// Echo of a run, written as sectioned `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: Vec<(String, String)>,
    pub command: String,
    pub metrics: Vec<(String, String)>,
    pub artifacts: Vec<(String, PathBuf)>,
    pub wall_clock: f64,
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> Self {
        Self { scenario: Vec::new(), command: command.into(), metrics: Vec::new(), artifacts: Vec::new(), wall_clock: 0.0 }
    }

    pub fn metric(&mut self, key: impl Into<String>, value: impl ReportValue) {
        self.metrics.push((key.into(), value.render()));
    }

    pub fn vector(&mut self, key: impl Into<String>, v: &DVector<f64>) {
        self.metric(key, v.iter().map(|x| x.render()).collect::<Vec<_>>().join(", "));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.metrics.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("[scenario]\n");
        for (k, v) in &self.scenario {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[run]\ncommand = {}\nwall_clock_s = {:.3}", self.command, self.wall_clock);
        s.push_str("\n[metrics]\n");
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n[artifacts]\n");
        for (k, p) in &self.artifacts {
            let _ = writeln!(s, "{k} = {}", p.display());
        }
        s
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}
