//! Certificate files: pretty-printed JSON with a schema version, the full
//! system echo, one entry per stage with every inequality, the seed and a
//! timestamp. Everything except `created_unix` is a pure function of the
//! inputs and the seed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::skewproduct::{Inequality, SkewSystem};

pub const REPLAY_STAGE: &str = "replay";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub valid: bool,
    #[serde(default)]
    pub inequalities: Vec<Inequality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl StageRecord {
    pub fn new(name: impl Into<String>, valid: bool, inequalities: Vec<Inequality>) -> Self {
        StageRecord {
            name: name.into(),
            valid,
            inequalities,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: Option<String>) -> Self {
        self.detail = detail;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub schema_version: u32,
    /// Subcommand that produced the file.
    pub command: String,
    /// Payload type, e.g. `covering`, `cycle`, `tangency`.
    pub kind: String,
    pub seed: u64,
    pub created_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SkewSystem>,
    pub stages: Vec<StageRecord>,
    pub valid: bool,
    pub slack: Option<f64>,
    pub payload: Value,
}

impl CertificateFile {
    pub fn new<T: Serialize>(
        command: &str,
        kind: &str,
        seed: u64,
        system: Option<&SkewSystem>,
        stages: Vec<StageRecord>,
        payload: &T,
    ) -> Result<Self> {
        // replay drift is a consistency check, not a margin of the object
        let slack = stages
            .iter()
            .filter(|s| s.name != REPLAY_STAGE)
            .flat_map(|s| s.inequalities.iter().map(|i| i.slack))
            .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.min(s))));
        Ok(CertificateFile {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            kind: kind.into(),
            seed,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            system: system.cloned(),
            valid: stages.iter().all(|s| s.valid),
            stages,
            slack,
            payload: serde_json::to_value(payload).map_err(|e| Error::Input(e.to_string()))?,
        })
    }

    pub fn payload<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        serde_json::from_value(self.payload.clone()).map_err(|e| Error::Input(format!("{} payload does not parse: {e}", self.kind)))
    }

    pub fn expect_kind(&self, kinds: &[&str]) -> Result<()> {
        if kinds.contains(&self.kind.as_str()) {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "expected a {} certificate, found `{}`",
                kinds.join(" or "),
                self.kind
            )))
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("certificate values are finite or null");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let file: CertificateFile =
            serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Input(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }
}
