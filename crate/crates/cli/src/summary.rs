use std::process::ExitCode;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use speckledic::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Points of interest per second.
pub fn throughput_report(n_points: usize, elapsed_seconds: f64) -> speckledic::Result<f64> {
    if !(elapsed_seconds > 0.0) || !elapsed_seconds.is_finite() {
        return Err(Error::Parameter(format!(
            "elapsed time must be a positive number of seconds, got {elapsed_seconds}"
        )));
    }
    Ok(n_points as f64 / elapsed_seconds)
}

/// Computing-time record: frame size, time and throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRecord {
    pub frame_width: usize,
    pub frame_height: usize,
    pub points: usize,
    pub time_s: f64,
    pub poi_per_s: f64,
}

impl ThroughputRecord {
    pub fn new(frame_width: usize, frame_height: usize, points: usize, time_s: f64) -> speckledic::Result<Self> {
        Ok(Self {
            frame_width,
            frame_height,
            points,
            time_s,
            poi_per_s: throughput_report(points, time_s)?,
        })
    }
}

/// Wraps command-specific fields with the schema version and command name.
pub fn summary(command: &str, fields: Value) -> Value {
    let mut out = json!({ "schema_version": SCHEMA_VERSION, "command": command });
    if let (Value::Object(o), Value::Object(f)) = (&mut out, fields) {
        o.extend(f);
    }
    out
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Parameter(_) => "parameter",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::FlowFormat { .. } => "flow_format",
        Error::InverseMapping { .. } => "inverse_mapping",
        Error::Placement { .. } => "placement",
        Error::SearchRange { .. } => "search_range",
        Error::OutOfRange { .. } => "out_of_range",
        Error::ScreeningBudget { .. } => "screening_budget",
        Error::Pair { .. } => "pair",
        Error::Io { .. } => "io",
        Error::Codec(_) => "codec",
        Error::Json(_) => "json",
    }
}

pub fn error_value(e: &anyhow::Error) -> Value {
    let k = e.downcast_ref::<Error>().map_or("other", kind);
    json!({ "error": { "kind": k, "message": format!("{e:#}") } })
}

pub fn fail(e: &anyhow::Error) -> ExitCode {
    eprintln!("{}", error_value(e));
    ExitCode::from(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_arithmetic_and_guard() {
        assert_eq!(throughput_report(1_002_000, 1.0).unwrap(), 1.002e6);
        assert_eq!(throughput_report(1_002_000, 4.0).unwrap(), 250_500.0);
        assert!(throughput_report(10, 0.0).is_err());
        assert!(throughput_report(10, f64::NAN).is_err());
    }

    #[test]
    fn record_round_trips() {
        let r = ThroughputRecord::new(2000, 501, 1_002_000, 2.5).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<ThroughputRecord>(&text).unwrap(), r);
    }

    #[test]
    fn error_kinds() {
        let e = anyhow::Error::new(Error::Parameter("x".into()));
        assert_eq!(error_value(&e)["error"]["kind"], "parameter");
        assert_eq!(error_value(&anyhow::anyhow!("plain"))["error"]["kind"], "other");
    }
}
