//! Report types and their on-disk forms.
//!
//! Reports go through `serde_json::Value` before hitting disk: object keys
//! come out sorted and every float is rounded to 12 significant digits, so
//! identical runs give identical bytes and a parsed report re-serializes to
//! the same text.

use std::fs;
use std::path::{Path, PathBuf};

use qcoop_core::robotnet::TrajectoryRecord;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::HarnessError;
use crate::scenario::{Experiment, Scenario};

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_CSV_FILE: &str = "summary.csv";
pub const EVENT_FILE: &str = "events.ndjson";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    #[default]
    Ok,
    /// A key exchange aborted, normally because the error rate revealed an
    /// eavesdropper.
    Aborted,
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Aborted => 3,
            RunStatus::Failed => 4,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InterferometerSummary {
    pub delta: f64,
    pub arm2_blocked: bool,
    pub p_detector_b: f64,
    pub p_detector_c: f64,
    pub p_absorbed: f64,
    pub photons: u64,
    pub count_b: u64,
    pub count_c: u64,
    pub count_absorbed: u64,
    pub fraction_b: f64,
    pub fraction_c: f64,
    pub fraction_absorbed: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QkdSummary {
    pub photons_sent: u64,
    pub photons_detected: u64,
    pub intercepted: u64,
    pub sifted_length: u64,
    pub sifted_fraction: f64,
    pub compared: u64,
    pub mismatches: u64,
    pub qber: f64,
    pub eve_detected: bool,
    pub abort: bool,
    pub final_key_length: u64,
    pub keys_identical: bool,
    /// FNV-1a of the final key as a `0`/`1` string.
    pub final_key_digest: String,
    pub channel_messages: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntanglementSummary {
    pub pairs_generated: u64,
    pub signal_wavelength_nm: f64,
    pub idler_wavelength_nm: f64,
    /// Largest |1/pump - 1/signal - 1/idler| over all pairs, in 1/nm.
    pub max_energy_residual: f64,
    pub analyzer_a_deg: f64,
    pub analyzer_b_deg: f64,
    pub signal_transmit_fraction: f64,
    pub anticorrelated_fraction: f64,
    pub events_a: u64,
    pub events_b: u64,
    pub dark_events_a: u64,
    pub dark_events_b: u64,
    pub coincidences: u64,
    pub true_coincidences: u64,
    pub accidental_coincidences: u64,
    /// (2 tau + 1) * rate_a * rate_b * duration for the observed singles.
    pub expected_accidentals: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TriggerSummary {
    pub pair: u64,
    pub task_id: u32,
    pub tick: u64,
    pub robots: [u32; 2],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub label: String,
    pub sender: u32,
    pub receiver: u32,
    pub qkd: QkdSummary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub agent: u32,
    pub key_length: u64,
    /// `tick:command` entries in issue order.
    pub commands: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub displacement: f64,
    /// `(task_id, tick)` entries.
    pub task_log: Vec<(u32, u64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RobotsSummary {
    pub pairs_generated: u64,
    pub coincidences: u64,
    pub trigger: Option<TriggerSummary>,
    pub sessions: Vec<SessionSummary>,
    pub aborted: bool,
    pub plans: Vec<PlanSummary>,
    pub agents: Vec<AgentSummary>,
    pub trajectory_rows: u64,
    /// FNV-1a of the trajectory CSV.
    pub trajectory_digest: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamDraws {
    pub stream: String,
    pub draws: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub name: String,
    pub seed: u64,
    pub experiment: Option<Experiment>,
    pub status: RunStatus,
    pub failure: Option<String>,
    pub scenario: Option<Scenario>,
    pub interferometer: Option<InterferometerSummary>,
    pub qkd: Option<QkdSummary>,
    pub entanglement: Option<EntanglementSummary>,
    pub robots: Option<RobotsSummary>,
    pub streams: Vec<StreamDraws>,
    pub event_log: String,
    pub event_count: u64,
}

impl Default for SimulationReport {
    fn default() -> Self {
        Self {
            name: String::new(),
            seed: 0,
            experiment: None,
            status: RunStatus::Ok,
            failure: None,
            scenario: None,
            interferometer: None,
            qkd: None,
            entanglement: None,
            robots: None,
            streams: Vec::new(),
            event_log: EVENT_FILE.into(),
            event_count: 0,
        }
    }
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Tick, slot index or detector timestamp in ns, depending on the stream.
    pub t: i64,
    pub stream: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub payload: Value,
}

impl Event {
    pub fn new(t: i64, stream: impl Into<String>, kind: impl Into<String>, payload: Value) -> Self {
        Self { t, stream: stream.into(), kind: kind.into(), payload }
    }
}

/// A report plus the bulky artifacts kept out of it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutput {
    pub report: SimulationReport,
    pub events: Vec<Event>,
    pub trajectory: Vec<TrajectoryRecord>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Round to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Sorted keys, rounded floats.
pub fn canonical_value<T: Serialize>(x: &T) -> Result<Value, HarnessError> {
    let mut v = serde_json::to_value(x).map_err(|e| HarnessError::Internal(e.to_string()))?;
    round_value(&mut v);
    Ok(v)
}

pub fn report_json(report: &SimulationReport) -> Result<String, HarnessError> {
    let v = canonical_value(report)?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| HarnessError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(text: &str) -> Result<SimulationReport, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Internal(format!("report: {e}")))
}

pub fn events_ndjson(events: &[Event]) -> Result<String, HarnessError> {
    let mut out = String::new();
    for e in events {
        let v = canonical_value(e)?;
        out.push_str(&serde_json::to_string(&v).map_err(|e| HarnessError::Internal(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Flatten a JSON value to `(dotted.path, scalar)` rows.
fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, x)| flatten(&key(k), x, rows)),
        Value::Array(items) => items.iter().enumerate().for_each(|(i, x)| flatten(&key(&i.to_string()), x, rows)),
        Value::Null => rows.push((prefix.into(), String::new())),
        Value::String(s) => rows.push((prefix.into(), s.clone())),
        other => rows.push((prefix.into(), other.to_string())),
    }
}

fn csv_text<F>(write: F) -> Result<String, HarnessError>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).map_err(|e| HarnessError::Internal(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| HarnessError::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Internal(e.to_string()))
}

pub fn summary_csv(report: &SimulationReport) -> Result<String, HarnessError> {
    let mut rows = Vec::new();
    flatten("", &canonical_value(report)?, &mut rows);
    csv_text(|w| {
        w.write_record(["key", "value"])?;
        for (k, v) in &rows {
            w.write_record([k, v])?;
        }
        Ok(())
    })
}

pub fn trajectory_csv(trajectory: &[TrajectoryRecord]) -> Result<String, HarnessError> {
    csv_text(|w| {
        w.write_record(["tick", "agent", "x", "y", "z", "command"])?;
        for r in trajectory {
            w.write_record([
                r.tick.to_string(),
                r.agent.0.to_string(),
                round_sig(r.x).to_string(),
                round_sig(r.y).to_string(),
                round_sig(r.z).to_string(),
                r.command.map(|c| c.label()).unwrap_or("").to_string(),
            ])?;
        }
        Ok(())
    })
}

fn write_file(path: PathBuf, text: &str) -> Result<PathBuf, HarnessError> {
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// Write the report, the event log and, for robot runs, the trajectory
/// table into `out_dir`. Returns the paths written.
pub fn write_report(output: &RunOutput, out_dir: &Path, format: Format) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut paths = Vec::new();
    paths.push(match format {
        Format::Json => write_file(out_dir.join(REPORT_FILE), &report_json(&output.report)?)?,
        Format::Csv => write_file(out_dir.join(SUMMARY_CSV_FILE), &summary_csv(&output.report)?)?,
    });
    paths.push(write_file(out_dir.join(&output.report.event_log), &events_ndjson(&output.events)?)?);
    if !output.trajectory.is_empty() {
        paths.push(write_file(out_dir.join(TRAJECTORY_FILE), &trajectory_csv(&output.trajectory)?)?);
    }
    Ok(paths)
}
