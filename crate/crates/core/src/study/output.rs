use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::StudyResult;
use crate::error::{Error, Result};
use crate::par;

pub const CSV_HEADER: &str =
    "problem,p,h,dof,E_u1,E_u2,E_v1,E_v2,rate_u1,rate_u2,rate_v1,rate_v2,iters,residual,seconds";

/// Shortest round-trip scientific form, or an empty cell.
fn sci(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn csv_text(result: &StudyResult) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for c in &result.cells {
        let e = c.errors.as_ref();
        let r = c.rates.map(|r| r.as_array()).unwrap_or([None; 4]);
        let solve = c.solve.as_ref();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.problem,
            c.p,
            sci(Some(c.h)),
            c.dof,
            sci(e.map(|e| e.e_u1)),
            sci(e.map(|e| e.e_u2)),
            sci(e.map(|e| e.e_v1)),
            sci(e.map(|e| e.e_v2)),
            sci(r[0]),
            sci(r[1]),
            sci(r[2]),
            sci(r[3]),
            solve.map(|s| s.iterations.to_string()).unwrap_or_default(),
            sci(solve.map(|s| s.relative_residual)),
            sci(Some(c.seconds)),
        );
    }
    s
}

/// `results.csv` → `results.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the CSV table and a JSON sidecar with the configuration, the
/// environment, per-cell solver details and the rate checks.
pub fn emit_results(result: &StudyResult, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, csv_text(result)).map_err(|e| Error::io(path, e))?;

    let sidecar = json!({
        "config": result.config,
        "environment": {
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "os": std::env::consts::OS,
            "arch": std::env::consts::ARCH,
            "parallel_feature": cfg!(feature = "parallel"),
            "threads": result.config.threads.unwrap_or_else(par::current_threads),
        },
        "cells": result.cells.iter().map(|c| json!({
            "p": c.p,
            "elements": c.elements,
            "method": c.solve.as_ref().map(|s| s.method.to_string()),
            "solve_seconds": c.solve.as_ref().map(|s| s.seconds),
            "infsup": c.infsup,
            "failure": c.failure,
        })).collect::<Vec<_>>(),
        "rate_checks": result.rate_checks(),
        "all_succeeded": result.all_succeeded(),
    });
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::io(&side, e.into()))?;
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Rows of a results file as optional numbers (blank cells → `None`);
/// the first column (problem name) is skipped.
pub fn parse_results_csv(text: &str) -> Result<Vec<Vec<Option<f64>>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(CSV_HEADER) => {}
        other => return Err(Error::config("header", format!("unexpected header {other:?}"))),
    }
    lines
        .map(|line| {
            line.split(',')
                .skip(1)
                .map(|cell| {
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse()
                            .map(Some)
                            .map_err(|_| Error::config("csv", format!("bad number '{cell}'")))
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::{run_study, StudyConfig};

    #[test]
    fn csv_round_trip_and_blank_rates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/results.csv");
        let cfg = StudyConfig {
            degrees: vec![2],
            levels: vec![2, 4],
            out: path.clone(),
            ..StudyConfig::default()
        };
        let res = run_study(&cfg).unwrap();
        emit_results(&res, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        let rows = parse_results_csv(&text).unwrap();
        assert_eq!(rows.len(), 2);
        // columns after the name: p, h, dof, four errors, four rates, ...
        for (row, cell) in rows.iter().zip(&res.cells) {
            let e = cell.errors.as_ref().unwrap();
            assert_eq!(&row[3..7], &[Some(e.e_u1), Some(e.e_u2), Some(e.e_v1), Some(e.e_v2)]);
        }
        assert!(rows[0][7..11].iter().all(Option::is_none));
        assert!(rows[1][7..11].iter().all(Option::is_some));
        let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side["config"]["problem"], "example1");
        assert_eq!(side["all_succeeded"], true);
    }
}
