//! Cross-algorithm comparison: read result CSVs, group by algorithm and
//! horizon, and report geometric-mean speedups alongside the evaluation and
//! wall-time totals. Runtime numbers are reported, never asserted.

use super::experiment::{fmt_sig6, geomean, parse_sequence_field, Algorithm, ResultRow, CSV_HEADER};
use super::HarnessError;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

pub fn read_result_csv(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| bad_csv(path, e.to_string()))?
        .clone();
    let expected: Vec<&str> = CSV_HEADER.to_vec();
    let found: Vec<&str> = headers.iter().take(expected.len()).collect();
    if found != expected {
        return Err(bad_csv(
            path,
            format!("unexpected columns {found:?}, want {expected:?}"),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| bad_csv(path, e.to_string()))?;
        let get = |i: usize| r.get(i).unwrap_or("").to_string();
        let parse_u64 = |i: usize| -> Result<u64, HarnessError> {
            get(i)
                .parse()
                .map_err(|_| bad_csv(path, format!("column {} not an integer", CSV_HEADER[i])))
        };
        let parse_f64 = |i: usize| -> Result<f64, HarnessError> {
            get(i)
                .parse()
                .map_err(|_| bad_csv(path, format!("column {} not a real", CSV_HEADER[i])))
        };
        rows.push(ResultRow {
            benchmark: get(0),
            algorithm: get(1),
            length: parse_u64(2)? as usize,
            seed: parse_u64(3)?,
            best_sequence: parse_sequence_field(&get(4))?,
            cycles_noopt: parse_u64(5)?,
            cycles_best: parse_u64(6)?,
            cycles_o3: parse_u64(7)?,
            speedup_vs_noopt: parse_f64(8)?,
            speedup_vs_o3: parse_f64(9)?,
            evaluations_used: parse_u64(10)?,
            wall_ms: parse_u64(11)?,
        });
    }
    Ok(rows)
}

fn bad_csv(path: &Path, message: String) -> HarnessError {
    HarnessError::Input {
        path: path.display().to_string(),
        message,
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CompareCell {
    pub rows: usize,
    pub geomean_speedup_vs_noopt: f64,
    pub geomean_speedup_vs_o3: f64,
    pub total_evaluations: u64,
    pub total_wall_ms: u64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareReport {
    /// (algorithm, L) cells in canonical algorithm order, then L.
    pub cells: BTreeMap<String, BTreeMap<usize, CompareCell>>,
    pub lengths: Vec<usize>,
}

pub fn compare_report(rows: &[ResultRow]) -> CompareReport {
    let mut grouped: BTreeMap<(String, usize), Vec<&ResultRow>> = BTreeMap::new();
    let mut lengths: Vec<usize> = Vec::new();
    for r in rows {
        grouped
            .entry((r.algorithm.clone(), r.length))
            .or_default()
            .push(r);
        if !lengths.contains(&r.length) {
            lengths.push(r.length);
        }
    }
    lengths.sort_unstable();

    let mut cells: BTreeMap<String, BTreeMap<usize, CompareCell>> = BTreeMap::new();
    for ((algo, length), rs) in grouped {
        cells.entry(algo).or_default().insert(
            length,
            CompareCell {
                rows: rs.len(),
                geomean_speedup_vs_noopt: geomean(rs.iter().map(|r| r.speedup_vs_noopt)),
                geomean_speedup_vs_o3: geomean(rs.iter().map(|r| r.speedup_vs_o3)),
                total_evaluations: rs.iter().map(|r| r.evaluations_used).sum(),
                total_wall_ms: rs.iter().map(|r| r.wall_ms).sum(),
            },
        );
    }
    CompareReport { cells, lengths }
}

impl CompareReport {
    /// Fixed-width text table in canonical algorithm order; one line per
    /// algorithm per metric group, one column per horizon.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let lengths = &self.lengths;
        let _ = writeln!(
            out,
            "{:<12} {:>4} {:>18} {:>18} {:>14} {:>12}",
            "algorithm", "L", "geomean vs noopt", "geomean vs o3", "evaluations", "wall_ms"
        );
        for algo in Algorithm::ALL {
            let name = algo.name();
            for &l in lengths {
                match self.cells.get(name).and_then(|m| m.get(&l)) {
                    Some(c) => {
                        let _ = writeln!(
                            out,
                            "{:<12} {:>4} {:>18} {:>18} {:>14} {:>12}",
                            name,
                            l,
                            fmt_sig6(c.geomean_speedup_vs_noopt),
                            fmt_sig6(c.geomean_speedup_vs_o3),
                            c.total_evaluations,
                            c.total_wall_ms
                        );
                    }
                    None => {
                        let _ = writeln!(
                            out,
                            "{:<12} {:>4} {:>18} {:>18} {:>14} {:>12}",
                            name, l, "-", "-", "-", "-"
                        );
                    }
                }
            }
        }
        // algorithms outside the canonical set (future-proofing) are ignored
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn cell(&self, algorithm: &str, length: usize) -> Option<&CompareCell> {
        self.cells.get(algorithm).and_then(|m| m.get(&length))
    }
}
