use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::{Cli, Outcome};

/// Record of one run: enough to replay it and to see what it touched.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full command line, program name first; `replay` re-runs it.
    pub argv: Vec<String>,
    /// Every option after defaults and environment were applied.
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub threads: usize,
    pub duration_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub(crate) fn new(
        cli: &Cli,
        argv: Vec<String>,
        outcome: &Outcome,
        threads: usize,
        duration: Duration,
        error: Option<String>,
    ) -> Self {
        let params = serde_json::to_value(&cli.command).unwrap_or(serde_json::Value::Null);
        let command = params
            .as_object()
            .and_then(|o| o.keys().next().cloned())
            .unwrap_or_default();
        let params = params.get(&command).cloned().unwrap_or(params);
        Self {
            command,
            argv,
            params,
            seed: outcome.seed,
            inputs: outcome.inputs.clone(),
            outputs: outcome.outputs.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads,
            duration_seconds: duration.as_secs_f64(),
            error,
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// `<output>.manifest.json`, or `<dir>/manifest.json` for a directory output.
pub(crate) fn default_location(output: &Path, explicit: bool) -> PathBuf {
    if explicit {
        return output.to_path_buf();
    }
    if output.is_dir() {
        return output.join("manifest.json");
    }
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
