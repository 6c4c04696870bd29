//! Run configuration: defaults, then the `--config` file, then flags.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";
pub const LOG_FILE: &str = "rwt.log";

/// Why a run stopped. Usage errors exit with 2, everything else with 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

pub type RunResult<T> = Result<T, Failure>;

/// Recursive merge; objects merge key by key, anything else replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (_, Value::Null) => {}
        (slot, v) => *slot = v,
    }
}

pub fn read_config_file(path: &Path) -> RunResult<Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Failure::Usage(format!("config {} must hold a JSON object", path.display())));
    }
    Ok(v)
}

/// Layers `file` and `flags` over the defaults of `S`.
pub fn resolve<S>(file: Option<&Path>, flags: Value) -> RunResult<(S, Value)>
where
    S: Serialize + DeserializeOwned + Default,
{
    let mut v = serde_json::to_value(S::default())?;
    if let Some(path) = file {
        merge(&mut v, read_config_file(path)?);
    }
    merge(&mut v, flags);
    let settings: S = serde_json::from_value(v).map_err(|e| Failure::Usage(format!("bad setting: {e}")))?;
    // Round-trip so the echoed config holds exactly what the run used.
    let echoed = serde_json::to_value(&settings)?;
    Ok((settings, echoed))
}

/// Drops `None` fields so they never mask file values.
pub fn flags(pairs: &[(&str, Option<Value>)]) -> Value {
    let mut m = Map::new();
    for (k, v) in pairs {
        if let Some(v) = v {
            m.insert((*k).to_string(), v.clone());
        }
    }
    Value::Object(m)
}

pub fn some<T: Serialize>(v: &Option<T>) -> Option<Value> {
    v.as_ref().map(|x| serde_json::to_value(x).expect("plain flag value"))
}

/// Directory that receives the effective config and the log.
pub fn prepare_run_dir(dir: &Path, command: &str, effective: &Value, verbose: bool) -> RunResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| anyhow::anyhow!("cannot create {}: {e}", dir.display()))?;
    let mut echoed = effective.clone();
    if let Value::Object(m) = &mut echoed {
        m.insert("command".into(), Value::String(command.into()));
    }
    let path = dir.join(EFFECTIVE_CONFIG);
    fs::write(&path, serde_json::to_string_pretty(&echoed)? + "\n")
        .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
    init_logging(&dir.join(LOG_FILE), verbose)?;
    log::info!("rwt {command}: effective config in {}", path.display());
    Ok(dir.to_path_buf())
}

/// Parent directory of a file output, `.` for bare names.
pub fn dir_of(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

struct Tee {
    file: File,
    echo: bool,
}

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if self.echo {
            io::stderr().write_all(buf)?;
        }
        self.file.write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.file.flush()
    }
}

fn init_logging(path: &Path, verbose: bool) -> RunResult<()> {
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| anyhow::anyhow!("cannot open log {}: {e}", path.display()))?;
    let level = if verbose { log::LevelFilter::Debug } else { log::LevelFilter::Info };
    // Only the first call per process installs a logger; tests call twice.
    let _ = env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .filter_module("rwt", level)
        .filter_module("rwt_core", level)
        .filter_module("rwt_vetting", level)
        .target(env_logger::Target::Pipe(Box::new(Tee { file, echo: verbose })))
        .try_init();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use serde_json::json;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(default)]
    struct Inner {
        a: u32,
        b: u32,
    }

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(default)]
    struct Outer {
        name: String,
        inner: Inner,
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"name": "file", "inner": {"a": 1, "b": 2}}"#).unwrap();
        let (s, _): (Outer, _) = resolve(Some(&cfg), json!({"inner": {"b": 9}})).unwrap();
        assert_eq!(s, Outer { name: "file".into(), inner: Inner { a: 1, b: 9 } });
    }

    #[test]
    fn none_flags_are_dropped() {
        let v = flags(&[("x", some(&Some(3))), ("y", some::<u32>(&None))]);
        assert_eq!(v, json!({"x": 3}));
    }

    #[test]
    fn bad_config_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, "[1, 2]").unwrap();
        assert!(matches!(resolve::<Outer>(Some(&cfg), json!({})), Err(Failure::Usage(_))));
    }
}
