use std::path::Path;
use std::time::Instant;

use endodepth::error::{Error, Result};
use serde_json::{json, Value};

pub const FILE: &str = "run-log.json";

/// Every run log carries exactly these keys.
pub const KEYS: [&str; 8] = [
    "command",
    "config",
    "version",
    "seed",
    "exec",
    "wall_time_s",
    "outputs",
    "status",
];

pub struct RunLog {
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    exec: &'static str,
    start: Instant,
}

impl RunLog {
    pub fn start(command: &'static str, config: Value, seed: Option<u64>, exec: &'static str) -> Self {
        Self {
            command,
            config,
            seed,
            exec,
            start: Instant::now(),
        }
    }

    pub fn finish(self, out: &Path, outputs: &[String], status: std::result::Result<(), String>) -> Result<()> {
        let (status, error) = match status {
            Ok(()) => ("ok".to_string(), None),
            Err(e) => ("error".to_string(), Some(e)),
        };
        let mut doc = json!({
            "command": self.command,
            "config": self.config,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "exec": self.exec,
            "wall_time_s": self.start.elapsed().as_secs_f64(),
            "outputs": outputs,
            "status": status,
        });
        if let Some(e) = error {
            doc["config"]["error"] = Value::String(e);
        }
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join(FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Checks that a run log has the fixed key set, no more and no less.
pub fn validate(doc: &Value) -> std::result::Result<(), String> {
    let obj = doc.as_object().ok_or("run log is not a JSON object")?;
    let missing: Vec<&str> = KEYS.iter().copied().filter(|k| !obj.contains_key(*k)).collect();
    let extra: Vec<&String> = obj.keys().filter(|k| !KEYS.contains(&k.as_str())).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(format!("run log keys: missing {missing:?}, unexpected {extra:?}"));
    }
    if !obj["outputs"].is_array() || !obj["wall_time_s"].is_number() {
        return Err("run log outputs must be a list and wall_time_s a number".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn written_logs_validate() {
        let dir = tempfile::tempdir().unwrap();
        let log = RunLog::start("gen", json!({"scenes": 1}), Some(3), "sequential");
        log.finish(dir.path(), &["a".into()], Ok(())).unwrap();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(FILE)).unwrap()).unwrap();
        validate(&doc).unwrap();
        let mut broken = doc.clone();
        broken.as_object_mut().unwrap().remove("seed");
        assert!(validate(&broken).unwrap_err().contains("seed"));
    }
}
