//! Checked-in regression values stored as exact `f64` bit patterns.
//!
//! A fixture file looks like
//!
//! ```text
//! # how the value was produced
//! value = 320.2378434844851
//! bits = 0x40740...
//! ```
//!
//! Missing files are written on first use; set `LAMBDA_REGEN_FIXTURES=1` to
//! overwrite existing ones.

use std::path::{Path, PathBuf};

use crate::output::write_file;
use crate::CliError;

pub const REGEN_ENV: &str = "LAMBDA_REGEN_FIXTURES";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixtureOutcome {
    Matched,
    Mismatch { expected: f64 },
    Written,
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_text(value: f64, provenance: &str) -> String {
    let mut s: String = provenance.lines().map(|l| format!("# {l}\n")).collect();
    s.push_str(&format!("value = {value:?}\nbits = {:#018x}\n", value.to_bits()));
    s
}

pub fn parse_fixture(text: &str) -> Result<f64, CliError> {
    let bits = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == "bits")
        .map(|(_, v)| v.trim())
        .ok_or_else(|| CliError::Config("fixture has no bits line".into()))?;
    let raw = bits.strip_prefix("0x").unwrap_or(bits);
    u64::from_str_radix(raw, 16).map(f64::from_bits).map_err(|_| CliError::Config(format!("bad fixture bits '{bits}'")))
}

/// Compares `value` bit-for-bit with the stored fixture `name`.
pub fn check_fixture(dir: &Path, name: &str, value: f64, provenance: &str) -> Result<FixtureOutcome, CliError> {
    let path = dir.join(format!("{name}.fixture"));
    let regen = std::env::var_os(REGEN_ENV).is_some_and(|v| !v.is_empty() && v != "0");
    if regen || !path.exists() {
        write_file(&path, &fixture_text(value, provenance))?;
        return Ok(FixtureOutcome::Written);
    }
    let expected = parse_fixture(&crate::config::read_text(&path)?)?;
    Ok(if expected.to_bits() == value.to_bits() { FixtureOutcome::Matched } else { FixtureOutcome::Mismatch { expected } })
}
