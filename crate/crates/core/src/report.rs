//! Consolidated plain-text report over a run directory's artifacts.
//!
//! Every number in the bundle is copied from a file in the run directory and
//! the file is named next to it. Anything that was not produced is listed as
//! `absent`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::Result;
use crate::metrics::MetricReport;
use crate::nn::checkpoint::write_atomic;
use crate::run::{CONFIG_FILE, TRAIN_LOG};

pub const REPORT_FILE: &str = "report.txt";

fn sorted_files(dir: &Path, ext: &str) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .filter_map(|e| e.file_name().to_str().map(String::from))
                .filter(|n| n.ends_with(ext))
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    names
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "absent".into())
}

/// Builds `report.txt` from the artifacts in `run_dir` and returns its text.
/// Metric rows follow the dataset order declared in the run's config.
pub fn report_bundle(run_dir: &Path) -> Result<String> {
    let mut out = String::from("# fingersynth run report\n");
    let cfg = RunConfig::load(&run_dir.join(CONFIG_FILE)).ok();
    match &cfg {
        Some(c) => {
            let task = c.task.map(|t| t.to_string()).unwrap_or_else(|| "absent".into());
            writeln!(out, "task {task}\nseed {}\nsource {CONFIG_FILE}", c.seed()).unwrap();
        }
        None => writeln!(out, "config absent").unwrap(),
    }

    out.push_str("\n## training\n");
    match fs::read_to_string(run_dir.join(TRAIN_LOG)) {
        Ok(log) => {
            let rows: Vec<&str> = log.lines().filter(|l| !l.starts_with('#')).collect();
            let epochs = rows.len().saturating_sub(1);
            writeln!(out, "epochs_logged {epochs}").unwrap();
            if let (Some(header), Some(last)) = (rows.first(), rows.last().filter(|_| epochs > 0)) {
                writeln!(out, "columns {header}\nlast {last}").unwrap();
            }
            writeln!(out, "source {TRAIN_LOG}").unwrap();
        }
        Err(_) => writeln!(out, "train_log absent").unwrap(),
    }
    let ckpts = sorted_files(&run_dir.join("checkpoints"), ".ckpt");
    writeln!(out, "checkpoints {}", if ckpts.is_empty() { "absent".into() } else { ckpts.join(" ") }).unwrap();
    let grids = sorted_files(&run_dir.join("grids"), ".png");
    writeln!(out, "grids {}", if grids.is_empty() { "absent".into() } else { grids.join(" ") }).unwrap();

    out.push_str("\n## metrics\n");
    let mut names: Vec<String> = cfg
        .as_ref()
        .and_then(|c| c.evaluate.as_ref())
        .and_then(|e| e.datasets.as_ref())
        .map(|d| d.iter().map(|n| n.name.clone()).collect())
        .unwrap_or_default();
    for extra in sorted_files(&run_dir.join("metrics"), ".txt") {
        let stem = extra.trim_end_matches(".txt").to_string();
        if !names.contains(&stem) {
            names.push(stem);
        }
    }
    if names.is_empty() {
        out.push_str("metrics absent\n");
    } else {
        out.push_str("dataset,fid,kid,precision,recall,density,coverage,source\n");
        for name in names {
            let rel = format!("metrics/{name}.txt");
            match fs::read_to_string(run_dir.join(&rel)).ok().and_then(|t| MetricReport::from_text(&t).ok()) {
                Some(r) => writeln!(
                    out,
                    "{name},{},{},{},{},{},{},{rel}",
                    cell(r.fid),
                    cell(r.kid),
                    cell(r.precision),
                    cell(r.recall),
                    cell(r.density),
                    cell(r.coverage)
                )
                .unwrap(),
                None => writeln!(out, "{name},absent,absent,absent,absent,absent,absent,{rel}").unwrap(),
            }
        }
    }

    out.push_str("\n## far\n");
    match fs::read_to_string(run_dir.join("far_report.csv")) {
        Ok(t) => {
            out.push_str(&t);
            out.push_str("source far_report.csv\n");
        }
        Err(_) => out.push_str("far_report absent\n"),
    }
    let curves = sorted_files(&run_dir.join("far_curves"), ".csv");
    if curves.is_empty() {
        out.push_str("far_curves absent\n");
    }
    for c in curves {
        let points = fs::read_to_string(run_dir.join("far_curves").join(&c))
            .map(|t| t.lines().count().saturating_sub(1))
            .unwrap_or(0);
        writeln!(out, "curve far_curves/{c} points {points}").unwrap();
    }

    out.push_str("\n## spoof histograms\n");
    let hists = sorted_files(&run_dir.join("histograms"), ".txt");
    if hists.is_empty() {
        out.push_str("histograms absent\n");
    }
    for h in hists {
        let summary = fs::read_to_string(run_dir.join("histograms").join(&h))
            .ok()
            .and_then(|t| t.lines().next().map(|l| l.trim_start_matches("# ").to_string()))
            .unwrap_or_else(|| "absent".into());
        writeln!(out, "{} {summary} source histograms/{h}", h.trim_end_matches(".txt")).unwrap();
    }
    match fs::read_to_string(run_dir.join("overlap.csv")) {
        Ok(t) => {
            out.push_str(&t);
            out.push_str("source overlap.csv\n");
        }
        Err(_) => out.push_str("overlap absent\n"),
    }

    write_atomic(&run_dir.join(REPORT_FILE), out.as_bytes())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_metrics_are_marked_absent_and_bundle_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = "task = \"evaluate\"\nseed = 3\n[data]\nreal_dir = \"r\"\n[evaluate]\ndatasets = [{ name = \"zeta\", dir = \"z\" }, { name = \"alpha\", dir = \"a\" }]\n";
        fs::write(dir.path().join(CONFIG_FILE), cfg).unwrap();
        let r = MetricReport { fid: Some(1.5), n_a: 3, n_b: 3, ..Default::default() };
        fs::create_dir_all(dir.path().join("metrics")).unwrap();
        fs::write(dir.path().join("metrics/zeta.txt"), r.to_text()).unwrap();
        let first = report_bundle(dir.path()).unwrap();
        assert!(first.contains("zeta,1.500000,absent,absent,absent,absent,absent,metrics/zeta.txt"), "{first}");
        assert!(first.contains("alpha,absent"));
        assert!(first.find("zeta,").unwrap() < first.find("alpha,").unwrap());
        assert!(first.contains("far_report absent"));
        let bytes = fs::read(dir.path().join(REPORT_FILE)).unwrap();
        report_bundle(dir.path()).unwrap();
        assert_eq!(fs::read(dir.path().join(REPORT_FILE)).unwrap(), bytes);
    }
}
