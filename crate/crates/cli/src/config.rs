//! Settings resolution: built-in defaults, then the config file, then flags.
//!
//! The config file is TOML. Top-level `data_dir`, `seed` and `threads` apply
//! to every command; a table named after a command (`[train]`, `[probe]`,
//! ...) holds that command's settings under the same names as its flags,
//! with dashes replaced by underscores.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

/// Version of the metadata embedded in every artifact.
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Global {
    /// Base directory for relative paths.
    pub data_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

impl Default for Global {
    fn default() -> Self {
        Global {
            data_dir: PathBuf::from("."),
            seed: 0,
            threads: 1,
        }
    }
}

impl Global {
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }
}

/// Fully resolved configuration of one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig<S> {
    pub format_version: u32,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub global: Global,
    pub settings: S,
}

impl<S: Serialize> RunConfig<S> {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("settings serialize")
    }
}

fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn toml_to_json(v: toml::Value) -> Value {
    match v {
        toml::Value::String(s) => Value::String(s),
        toml::Value::Integer(i) => Value::from(i),
        toml::Value::Float(f) => Value::from(f),
        toml::Value::Boolean(b) => Value::Bool(b),
        toml::Value::Datetime(d) => Value::String(d.to_string()),
        toml::Value::Array(a) => Value::Array(a.into_iter().map(toml_to_json).collect()),
        toml::Value::Table(t) => Value::Object(t.into_iter().map(|(k, v)| (k, toml_to_json(v))).collect()),
    }
}

/// Parsed config file, split into the global part and per-command tables.
#[derive(Debug, Default)]
pub struct ConfigFile {
    global: Map<String, Value>,
    commands: Map<String, Value>,
}

pub const COMMANDS: [&str; 8] = ["ingest", "prepare", "synth", "train", "ppl", "probe", "analyze", "play"];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        let mut out = ConfigFile::default();
        for (k, v) in table {
            let v = toml_to_json(v);
            if COMMANDS.contains(&k.as_str()) {
                if !v.is_object() {
                    return Err(format!("`{k}` must be a table"));
                }
                out.commands.insert(k, v);
            } else {
                out.global.insert(k, v);
            }
        }
        Ok(out)
    }

    /// Script-level settings with `flags` (only the options actually given) on top.
    pub fn global(&self, flags: Value) -> Result<Global, CliError> {
        resolve(Global::default(), &Value::Object(self.global.clone()), flags)
    }

    pub fn command<S: Serialize + DeserializeOwned>(&self, name: &str, defaults: S, flags: Value) -> Result<S, CliError> {
        let file = self.commands.get(name).cloned().unwrap_or(Value::Object(Map::new()));
        resolve(defaults, &file, flags)
    }
}

fn resolve<S: Serialize + DeserializeOwned>(defaults: S, file: &Value, flags: Value) -> Result<S, CliError> {
    let mut v = serde_json::to_value(defaults).expect("defaults serialize");
    overlay(&mut v, file.clone());
    overlay(&mut v, flags);
    serde_json::from_value(v).map_err(|e| CliError::usage(format!("invalid settings: {e}")))
}

/// Writes `value` as pretty JSON, atomically.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Path of the metadata file written next to `artifact`.
pub fn sidecar(artifact: &Path, suffix: &str) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    artifact.with_file_name(name)
}
