use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use agewatch::detector::{run_detector, write_event_log, AgingAlarm, AgingAlert, Decision, DetectorEvent};
use agewatch::indicators::read_indicator_csv;
use serde::Serialize;
use serde_json::json;

use crate::config::Config;
use crate::error::{indicator_error, CliError};
use crate::output::{Clock, Manifest, Output};

pub struct DetectArgs<'a> {
    pub indicators: &'a Path,
    pub config_path: Option<&'a Path>,
    pub config: Config,
    pub out: &'a Path,
    pub quiet: bool,
}

#[derive(Serialize)]
struct Summary<'a> {
    indicators: usize,
    samples: usize,
    aging_detected: bool,
    alerts: Vec<&'a AgingAlert>,
    alarms: Vec<&'a AgingAlarm>,
    events: usize,
}

fn hours(ttaf_s: Option<f64>) -> String {
    ttaf_s.map_or_else(|| "none".to_string(), |s| format!("{:.2}h", s / 3600.0))
}

fn snake(value: impl Serialize) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(v) => v.to_string(),
        Err(_) => String::new(),
    }
}

fn describe(event: &DetectorEvent) -> String {
    match event {
        DetectorEvent::Alert { t, alert } => format!(
            "alert    t={t} {} slope={:.6}/s p={:.2e} ttaf={}",
            alert.indicator,
            alert.slope,
            alert.p_value,
            hours(alert.ttaf_s)
        ),
        DetectorEvent::AlertCleared { t, indicator } => format!("cleared  t={t} {indicator}"),
        DetectorEvent::Alarm { t, alarm } => {
            let names: Vec<&str> = alarm.contributing_alerts.iter().map(|a| a.indicator.as_str()).collect();
            format!(
                "alarm    t={t} confidence={} ttaf={} [{}]",
                snake(alarm.confidence),
                hours(alarm.ttaf_s),
                names.join(", ")
            )
        }
        DetectorEvent::Decision { t, decision, .. } => match decision {
            Decision::Warn => format!("decision t={t} warn"),
            Decision::RejuvenateNow => format!("decision t={t} rejuvenate now"),
            Decision::RejuvenateAt { at } => format!("decision t={t} rejuvenate at t={at}"),
        },
        DetectorEvent::Reset { t } => format!("reset    t={t}"),
    }
}

pub fn detect(args: DetectArgs, clock: Clock) -> Result<(), CliError> {
    let file = File::open(args.indicators).map_err(|e| CliError::io(args.indicators, e))?;
    let set = read_indicator_csv(BufReader::new(file)).map_err(|e| indicator_error(args.indicators, e))?;
    let events = run_detector(&set, &args.config.detector)?;

    let alerts: Vec<&AgingAlert> = events
        .iter()
        .filter_map(|e| match e {
            DetectorEvent::Alert { alert, .. } => Some(alert),
            _ => None,
        })
        .collect();
    let alarms: Vec<&AgingAlarm> = events
        .iter()
        .filter_map(|e| match e {
            DetectorEvent::Alarm { alarm, .. } => Some(alarm),
            _ => None,
        })
        .collect();
    let summary = Summary {
        indicators: set.len(),
        samples: set.iter().map(|s| s.len()).sum(),
        aging_detected: !alerts.is_empty(),
        alerts,
        alarms,
        events: events.len(),
    };

    let out = Output::create(args.out)?;
    let mut log = Vec::new();
    write_event_log(&mut log, &events).map_err(|e| CliError::io(&out.path("events.jsonl"), e))?;
    out.write("events.jsonl", log)?;
    out.write_json("summary.json", &summary)?;
    out.write_json(
        "manifest.json",
        &Manifest::new(
            "detect",
            clock,
            json!({ "indicators": args.indicators, "config": args.config_path }),
        ),
    )?;

    if !args.quiet {
        for event in &events {
            println!("{}", describe(event));
        }
        if !summary.aging_detected {
            println!("no aging detected");
        }
    }
    Ok(())
}
