//! JSON serialization of measurement records.

use std::collections::BTreeMap;
use std::path::Path;

use qtraj_core::{DiffusionRecord, JumpRecord, MeasurementKind, Record};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// On-disk record: one JSON object holding the measurement and its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordFile {
    pub kind: MeasurementKind,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    /// Click times (photon counting).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clicks: Option<Vec<f64>>,
    /// Homodyne increments, one per step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dy: Option<Vec<f64>>,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

impl RecordFile {
    pub fn from_record(record: &Record, model: &str) -> Self {
        let (clicks, dy) = match record {
            Record::Jump(r) => (Some(r.clicks().to_vec()), None),
            Record::Diffusion(r) => (None, Some(r.increments().to_vec())),
        };
        Self {
            kind: record.kind(),
            horizon: record.horizon(),
            dt: record.dt(),
            clicks,
            dy,
            model: model.to_string(),
            theta: None,
            seed: None,
            config_digest: None,
        }
    }

    pub fn to_record(&self) -> CliResult<Record> {
        let record: Record = match (self.kind, &self.clicks, &self.dy) {
            (MeasurementKind::Jump, Some(c), None) => JumpRecord::new(self.horizon, self.dt, c.clone())?.into(),
            (MeasurementKind::Diffusion, None, Some(d)) => DiffusionRecord::new(self.horizon, self.dt, d.clone())?.into(),
            (MeasurementKind::Jump, _, _) => {
                return Err(CliError::Config("jump record needs `clicks` and no `dy`".into()));
            }
            (MeasurementKind::Diffusion, _, _) => {
                return Err(CliError::Config("diffusion record needs `dy` and no `clicks`".into()));
            }
        };
        Ok(record)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed record: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jump_round_trip() {
        let r: Record = JumpRecord::new(2.0, 0.01, vec![0.1, 0.73, 1.99]).unwrap().into();
        let f = RecordFile::from_record(&r, "two_level");
        let back = RecordFile::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_record().unwrap(), r);
    }

    #[test]
    fn diffusion_round_trip_is_bit_exact() {
        let dy = vec![0.1 / 3.0, -1e-300, 7.123456789012345e-5, f64::MIN_POSITIVE];
        let r: Record = DiffusionRecord::new(0.04, 0.01, dy.clone()).unwrap().into();
        let back = RecordFile::from_json(&RecordFile::from_record(&r, "two_level").to_json()).unwrap();
        let got = back.dy.unwrap();
        assert!(got.iter().zip(&dy).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn mismatched_payload_rejected() {
        let f = RecordFile {
            kind: MeasurementKind::Jump,
            horizon: 1.0,
            dt: 0.1,
            clicks: None,
            dy: Some(vec![0.0; 10]),
            model: "two_level".into(),
            theta: None,
            seed: None,
            config_digest: None,
        };
        assert!(f.to_record().is_err());
        assert!(RecordFile::from_json("{\"kind\": \"jump\"").is_err());
    }
}
