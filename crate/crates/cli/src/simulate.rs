use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use agewatch::heap::write_snapshot;
use agewatch::indicators::{read_indicator_csv, write_indicator_csv};
use agewatch::sim::{run_all, summarize, ComparisonTable, RequestAudit, RunIndicators, SimSpec, Trace};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{indicator_error, CliError};
use crate::output::{Clock, Manifest, Output};
use crate::plot;

/// Launch-time bin width of the line chart.
const PLOT_BIN_S: f64 = 600.0;

/// `run.json`: what `report` needs to rebuild the comparison, plus bookkeeping.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment_id: String,
    pub baseline: String,
    pub seed: u64,
    pub horizon_s: f64,
    pub failure_threshold_ms: f64,
    pub audit: RequestAudit,
    pub rejuvenation_times_s: Vec<f64>,
    pub reboot_times_s: Vec<f64>,
    pub snapshot_ids: Vec<String>,
    pub snapshot_bloat_bytes: Vec<u64>,
}

pub struct SimulateArgs<'a> {
    pub spec: &'a Path,
    pub seed: Option<u64>,
    pub out: &'a Path,
    pub plots: bool,
    pub quiet: bool,
}

fn write_run(out: &Output, spec: &SimSpec, trace: &Trace) -> Result<(), CliError> {
    let dir = out.subdir(&trace.experiment_id)?;
    let mut csv = Vec::new();
    write_indicator_csv(&mut csv, &trace.indicators).map_err(|e| indicator_error(&dir.path("indicators.csv"), e))?;
    dir.write("indicators.csv", csv)?;

    let mut log = String::new();
    for event in &trace.events {
        log.push_str(&serde_json::to_string(event).expect("events serialize"));
        log.push('\n');
    }
    dir.write("events.jsonl", log)?;

    if spec.record_requests {
        let mut lines = String::new();
        for r in &trace.requests {
            lines.push_str(&serde_json::to_string(r).expect("requests serialize"));
            lines.push('\n');
        }
        dir.write("requests.jsonl", lines)?;
    }

    let snaps = dir.subdir("snapshots")?;
    for snap in &trace.snapshots {
        write_snapshot(snap, snaps.path(&format!("{}.json", snap.snapshot_id())))?;
    }

    dir.write_json(
        "run.json",
        &RunRecord {
            experiment_id: trace.experiment_id.clone(),
            baseline: spec.baseline.clone(),
            seed: trace.seed,
            horizon_s: trace.horizon_s,
            failure_threshold_ms: trace.failure_threshold_ms,
            audit: trace.audit.clone(),
            rejuvenation_times_s: trace.rejuvenation_times.clone(),
            reboot_times_s: trace.reboot_times.clone(),
            snapshot_ids: trace.snapshots.iter().map(|s| s.snapshot_id().to_string()).collect(),
            snapshot_bloat_bytes: trace.snapshot_bloat.clone(),
        },
    )?;
    Ok(())
}

fn write_comparison(
    out: &Output,
    table: &ComparisonTable,
    runs: &[RunIndicators],
    plots: bool,
) -> Result<(), CliError> {
    let mut csv = Vec::new();
    table
        .write_csv(&mut csv)
        .map_err(|e| CliError::Input(format!("{}: {e}", out.path("comparison.csv").display())))?;
    out.write("comparison.csv", csv)?;
    out.write("comparison.md", table.to_markdown())?;
    if plots {
        let dir = out.subdir("plots")?;
        dir.write("launch_time.svg", plot::launch_time_chart(runs, PLOT_BIN_S))?;
        dir.write("ttaf.svg", plot::ttaf_chart(table))?;
    }
    Ok(())
}

fn print_summary(table: &ComparisonTable) {
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:+.1}%"));
    for exp in &table.experiments {
        println!(
            "{} vs {}: mean Gain_LT {}, mean Gain_TTAF {}",
            exp.experiment_id,
            table.baseline_id,
            show(exp.mean_gain_lt_pct),
            show(exp.mean_gain_ttaf_pct)
        );
    }
}

pub fn simulate(args: SimulateArgs, clock: Clock) -> Result<(), CliError> {
    let spec = SimSpec::load(args.spec)?;
    let seed = args.seed.unwrap_or(spec.seed);
    let traces = run_all(&spec, seed)?;
    let runs: Vec<RunIndicators> = traces
        .iter()
        .map(|t| RunIndicators {
            experiment_id: t.experiment_id.clone(),
            indicators: t.indicator_set(),
        })
        .collect();
    let table = summarize(&runs, &spec.baseline, spec.duration_s, spec.failure_threshold_ms)?;

    let out = Output::create(args.out)?;
    for trace in &traces {
        write_run(&out, &spec, trace)?;
    }
    write_comparison(&out, &table, &runs, args.plots)?;
    out.write_json(
        "manifest.json",
        &Manifest::new("simulate", clock, json!({ "spec": args.spec, "seed": seed })),
    )?;
    if !args.quiet {
        print_summary(&table);
    }
    Ok(())
}

pub struct ReportArgs<'a> {
    pub runs: &'a Path,
    pub out: &'a Path,
    pub plots: bool,
    pub quiet: bool,
}

fn read_run(dir: &Path) -> Result<(RunRecord, RunIndicators), CliError> {
    let path = dir.join("run.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let record: RunRecord =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let path = dir.join("indicators.csv");
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let indicators = read_indicator_csv(BufReader::new(file)).map_err(|e| indicator_error(&path, e))?;
    let run = RunIndicators {
        experiment_id: record.experiment_id.clone(),
        indicators,
    };
    Ok((record, run))
}

pub fn report(args: ReportArgs, clock: Clock) -> Result<(), CliError> {
    let entries = std::fs::read_dir(args.runs).map_err(|e| CliError::io(args.runs, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(args.runs, e))?.path();
        if path.join("run.json").is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no run directories (with run.json) found",
            args.runs.display()
        )));
    }
    let mut records = Vec::new();
    let mut runs = Vec::new();
    for dir in &dirs {
        let (record, run) = read_run(dir)?;
        records.push(record);
        runs.push(run);
    }
    let first = &records[0];
    if let Some(odd) = records.iter().find(|r| {
        r.baseline != first.baseline
            || r.horizon_s != first.horizon_s
            || r.failure_threshold_ms != first.failure_threshold_ms
    }) {
        return Err(CliError::Input(format!(
            "runs {} and {} disagree on baseline, horizon or threshold",
            first.experiment_id, odd.experiment_id
        )));
    }
    let table = summarize(&runs, &first.baseline, first.horizon_s, first.failure_threshold_ms)?;

    let out = Output::create(args.out)?;
    write_comparison(&out, &table, &runs, args.plots)?;
    let ids: Vec<&str> = records.iter().map(|r| r.experiment_id.as_str()).collect();
    out.write_json(
        "manifest.json",
        &Manifest::new("report", clock, json!({ "runs": args.runs, "experiments": ids })),
    )?;
    if !args.quiet {
        print_summary(&table);
    }
    Ok(())
}
