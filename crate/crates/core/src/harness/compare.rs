//! Side-by-side statistics for two sets of replications.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{expand_run_dirs, load_curve, load_record, RunRecord, ARCHIVE_LOG};
use super::{Algorithm, HarnessError};
use crate::stats::{count_above, quartile_curve, quartiles, wilcoxon_signed_rank, QuartilePoint, WilcoxonResult};

/// Outperform counts of side A's archives against side B's median curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutperformPoint {
    pub frames: u64,
    /// B's median performance at these frames.
    pub threshold: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug)]
pub struct ComparisonReport {
    pub dirs_a: Vec<PathBuf>,
    pub dirs_b: Vec<PathBuf>,
    pub finals_a: Vec<f64>,
    pub finals_b: Vec<f64>,
    pub curve_a: Vec<QuartilePoint>,
    pub curve_b: Vec<QuartilePoint>,
    /// Paired by replication order; A minus B.
    pub wilcoxon: Result<WilcoxonResult, HarnessError>,
    /// Present when side A is MAP-Elites.
    pub outperform: Option<Vec<OutperformPoint>>,
}

struct Side {
    dirs: Vec<PathBuf>,
    records: Vec<RunRecord>,
    curves: Vec<Vec<(u64, f64)>>,
}

fn load_side(paths: &[PathBuf]) -> Result<Side, HarnessError> {
    let dirs = expand_run_dirs(paths)?;
    let records = dirs.iter().map(|d| load_record(d)).collect::<Result<Vec<_>, _>>()?;
    let curves = dirs.iter().map(|d| load_curve(d)).collect::<Result<Vec<_>, _>>()?;
    Ok(Side { dirs, records, curves })
}

/// Cell fitnesses over time from an insertion log, as
/// `(frames, cell, fitness)` rows in log order.
pub fn load_insertions(dir: &Path) -> Result<Vec<(u64, usize, f64)>, HarnessError> {
    let path = dir.join(ARCHIVE_LOG);
    let text = fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(n, line)| {
            let c: Vec<&str> = line.split(',').collect();
            let parsed = (|| Some((c.get(1)?.parse().ok()?, c.get(2)?.parse().ok()?, c.get(3)?.parse().ok()?)))();
            parsed.ok_or_else(|| HarnessError::Format(format!("{}: malformed row {}", path.display(), n + 2)))
        })
        .collect()
}

/// Elite fitnesses of the archive as it stood once `frames` frames were spent.
fn archive_at(log: &[(u64, usize, f64)], frames: u64) -> impl Iterator<Item = f64> {
    let mut cells: HashMap<usize, f64> = HashMap::new();
    for &(f, cell, fitness) in log {
        if f > frames {
            break;
        }
        cells.insert(cell, fitness);
    }
    cells.into_values()
}

fn median_at(curve: &[QuartilePoint], frames: u64) -> Option<f64> {
    let k = curve.partition_point(|p| p.frames <= frames);
    (k > 0).then(|| curve[k - 1].median)
}

/// Loads both sides (run directories or parents of run directories) and
/// computes the report; writes CSVs into `out` when given.
pub fn compare(a: &[PathBuf], b: &[PathBuf], out: Option<&Path>) -> Result<ComparisonReport, HarnessError> {
    let side_a = load_side(a)?;
    let side_b = load_side(b)?;

    let mut grid: Vec<u64> = side_a.curves.iter().chain(&side_b.curves).flatten().map(|&(f, _)| f).collect();
    grid.sort_unstable();
    grid.dedup();
    let curve_a = quartile_curve(&side_a.curves, &grid);
    let curve_b = quartile_curve(&side_b.curves, &grid);

    let finals_a: Vec<f64> = side_a.records.iter().map(|r| r.final_performance).collect();
    let finals_b: Vec<f64> = side_b.records.iter().map(|r| r.final_performance).collect();
    let wilcoxon = if finals_a.len() != finals_b.len() {
        Err(HarnessError::MismatchedReplications { a: finals_a.len(), b: finals_b.len() })
    } else {
        wilcoxon_signed_rank(&finals_a, &finals_b).map_err(HarnessError::from)
    };

    let a_is_me = side_a.records.iter().all(|r| r.algorithm == Algorithm::MapElites.as_str());
    let outperform = if a_is_me {
        let logs = side_a.dirs.iter().map(|d| load_insertions(d)).collect::<Result<Vec<_>, _>>()?;
        let mut a_frames: Vec<u64> = side_a.curves.iter().flatten().map(|&(f, _)| f).collect();
        a_frames.sort_unstable();
        a_frames.dedup();
        let mut points = Vec::new();
        for f in a_frames {
            let Some(threshold) = median_at(&curve_b, f) else { continue };
            let counts: Vec<f64> = logs.iter().map(|log| count_above(archive_at(log, f), threshold) as f64).collect();
            let (q1, median, q3) = quartiles(&counts)?;
            points.push(OutperformPoint { frames: f, threshold, q1, median, q3 });
        }
        Some(points)
    } else {
        None
    };

    let report = ComparisonReport {
        dirs_a: side_a.dirs,
        dirs_b: side_b.dirs,
        finals_a,
        finals_b,
        curve_a,
        curve_b,
        wilcoxon,
        outperform,
    };
    if let Some(out) = out {
        write_report(out, &report)?;
    }
    Ok(report)
}

fn curve_csv(curve: &[QuartilePoint]) -> String {
    let mut s = String::from("frames,q1_meters,median_meters,q3_meters,runs,quantile_method\n");
    for p in curve {
        writeln!(s, "{},{},{},{},{},linear", p.frames, p.q1, p.median, p.q3, p.runs).unwrap();
    }
    s
}

fn write_report(out: &Path, r: &ComparisonReport) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        fs::write(&p, text).map_err(HarnessError::io(&p))
    };
    write("quartiles_a.csv", curve_csv(&r.curve_a))?;
    write("quartiles_b.csv", curve_csv(&r.curve_b))?;

    let mut finals = String::from("replication,run_a,final_a_meters,run_b,final_b_meters\n");
    for i in 0..r.finals_a.len().max(r.finals_b.len()) {
        let name = |d: &[PathBuf]| d.get(i).map(|p| p.display().to_string()).unwrap_or_default();
        let val = |v: &[f64]| v.get(i).map(|x| x.to_string()).unwrap_or_default();
        writeln!(finals, "{i},{},{},{},{}", name(&r.dirs_a), val(&r.finals_a), name(&r.dirs_b), val(&r.finals_b)).unwrap();
    }
    write("finals.csv", finals)?;

    let mut test = String::from("statistic,p_value,n_effective,method,sidedness,error\n");
    match &r.wilcoxon {
        Ok(w) => writeln!(test, "{},{},{},{},two-sided,", w.statistic, w.p_value, w.n_effective, w.method.as_str()),
        Err(e) => writeln!(test, ",,,,two-sided,{}", e.to_string().replace(',', ";")),
    }
    .unwrap();
    write("wilcoxon.csv", test)?;

    if let Some(points) = &r.outperform {
        let mut s = String::from("frames,threshold_meters,q1_count,median_count,q3_count\n");
        for p in points {
            writeln!(s, "{},{},{},{},{}", p.frames, p.threshold, p.q1, p.median, p.q3).unwrap();
        }
        write("outperform.csv", s)?;
    }
    Ok(())
}
