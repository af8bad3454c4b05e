use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::MAX_POINTS;

/// Parameters of a convergence study over degrees and uniform mesh levels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyConfig {
    pub problem: String,
    pub degrees: Vec<usize>,
    /// Elements per direction, in space and time alike.
    pub levels: Vec<usize>,
    /// Gauss points per span for assembly; `p + 1` if absent.
    pub quad_points: Option<usize>,
    pub tol: f64,
    /// Krylov iteration cap; `10 · 2N` if absent.
    pub max_iter: Option<usize>,
    /// Largest accepted block-system size `2N`.
    pub max_dof: usize,
    pub out: PathBuf,
    pub dump_matrices: Option<PathBuf>,
    pub infsup: bool,
    pub check_rates: bool,
    /// Worker threads; all available cores if absent.
    pub threads: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            problem: "example1".into(),
            degrees: vec![1, 2, 3, 4],
            levels: vec![4, 8, 16, 32, 64],
            quad_points: None,
            tol: 1e-10,
            max_iter: None,
            max_dof: 2_000_000,
            out: PathBuf::from("results.csv"),
            dump_matrices: None,
            infsup: false,
            check_rates: false,
            threads: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "problem",
    "degrees",
    "levels",
    "quad-points",
    "quadrature-points",
    "tol",
    "max-iter",
    "max-dof",
    "out",
    "dump-matrices",
    "infsup",
    "check-rates",
    "threads",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse '{value}'")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::config(key, format!("expected true or false, got '{other}'"))),
    }
}

impl StudyConfig {
    /// Sets one `key = value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "problem" => self.problem = value.to_string(),
            "degrees" => self.degrees = parse_list(key, value)?,
            "levels" => self.levels = parse_list(key, value)?,
            "quad-points" | "quadrature-points" => self.quad_points = Some(parse_num(key, value)?),
            "tol" => self.tol = parse_num(key, value)?,
            "max-iter" => self.max_iter = Some(parse_num(key, value)?),
            "max-dof" => self.max_dof = parse_num::<f64>(key, value)? as usize,
            "out" => self.out = PathBuf::from(value),
            "dump-matrices" => self.dump_matrices = Some(PathBuf::from(value)),
            "infsup" => self.infsup = parse_bool(key, value)?,
            "check-rates" => self.check_rates = parse_bool(key, value)?,
            "threads" => self.threads = Some(parse_num(key, value)?),
            _ => return Err(Error::config(key, format!("unknown key (expected one of {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are skipped; keys may use `-` or `_`.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), format!("expected key = value, got '{line}'")))?;
            cfg.set(&key.trim().replace('_', "-"), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_key_values(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.problem.as_str(), "example1" | "example2") {
            return Err(Error::config("problem", format!("unknown problem '{}'", self.problem)));
        }
        if self.degrees.is_empty() {
            return Err(Error::config("degrees", "no degrees given"));
        }
        // p + 2 points per span are needed for the error norms
        if let Some(&p) = self.degrees.iter().find(|&&p| p == 0 || p + 2 > MAX_POINTS) {
            return Err(Error::config("degrees", format!("degree {p} outside 1..={}", MAX_POINTS - 2)));
        }
        if self.levels.is_empty() {
            return Err(Error::config("levels", "no mesh levels given"));
        }
        if self.levels.contains(&0) {
            return Err(Error::config("levels", "a level needs at least one element"));
        }
        if let Some(q) = self.quad_points {
            if !(1..=MAX_POINTS).contains(&q) {
                return Err(Error::config("quad-points", format!("{q} outside 1..={MAX_POINTS}")));
            }
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::config("tol", format!("{} outside (0, 1)", self.tol)));
        }
        if self.max_iter == Some(0) {
            return Err(Error::config("max-iter", "must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be positive"));
        }
        Ok(())
    }
}
