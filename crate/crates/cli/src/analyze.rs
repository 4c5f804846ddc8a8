use std::path::{Path, PathBuf};

use agewatch::candidacy::build_report;
use agewatch::heap::{load_snapshot, HeapError, SnapshotSeries};
use serde_json::json;

use crate::config::Config;
use crate::error::CliError;
use crate::output::{Clock, Manifest, Output};

/// `*.json` files directly inside `dir`, by name.
pub fn snapshot_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Input(format!("{}: no snapshot files (*.json)", dir.display())));
    }
    Ok(paths)
}

/// Loads every snapshot and orders the series by timestamp.
pub fn load_dir(dir: &Path) -> Result<SnapshotSeries, CliError> {
    let mut snapshots = Vec::new();
    for path in snapshot_files(dir)? {
        let snap = load_snapshot(&path).map_err(|e| match e {
            e @ (HeapError::Io { .. } | HeapError::Parse { .. }) => e,
            other => HeapError::InFile {
                path: path.clone(),
                source: Box::new(other),
            },
        })?;
        snapshots.push(snap);
    }
    snapshots.sort_by(|a, b| a.timestamp().total_cmp(&b.timestamp()));
    Ok(SnapshotSeries::new(snapshots)?)
}

pub struct AnalyzeArgs<'a> {
    pub snapshots: &'a Path,
    pub config_path: Option<&'a Path>,
    pub config: Config,
    pub out: &'a Path,
    pub quiet: bool,
}

pub fn analyze(args: AnalyzeArgs, clock: Clock) -> Result<(), CliError> {
    let series = load_dir(args.snapshots)?;
    let report = build_report(&series, &args.config.candidacy)?;
    let list = report.rejuvenation_list();

    let out = Output::create(args.out)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.write("report.csv", csv)?;
    out.write("report.json", report.to_json_string())?;
    out.write("rejuvenation_list.json", list.to_json_string())?;
    out.write_json(
        "manifest.json",
        &Manifest::new(
            "analyze",
            clock,
            json!({
                "snapshots": args.snapshots,
                "config": args.config_path,
                "snapshot_ids": report.snapshot_ids,
            }),
        ),
    )?;

    if !args.quiet {
        println!(
            "{}: {} containers across {} snapshots, {} selected for rejuvenation",
            report.process_name,
            report.rows.len(),
            series.len(),
            list.containers.len()
        );
        for name in &list.containers {
            println!("  {name}");
        }
    }
    Ok(())
}
