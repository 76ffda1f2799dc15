//! Training configuration files (TOML) with dotted-path overrides.
//!
//! A file may name a `preset` ("desk" or "paper"); every other key
//! overrides the preset value at the same path. Keys left out keep the
//! preset default, and `admission.c_comb` defaults to the environment's
//! threshold.

use std::path::Path;

use sagail_core::env::EnvConfig;
use sagail_core::train::{Algo, Preset, TrainConfig};
use toml::{Table, Value};

use crate::{AppError, AppResult};

fn to_table<T: serde::Serialize>(x: &T) -> AppResult<Table> {
    match Value::try_from(x).map_err(|e| AppError::Config(e.to_string()))? {
        Value::Table(t) => Ok(t),
        other => Err(AppError::Config(format!("expected a table, got {other}"))),
    }
}

fn from_table<T: serde::de::DeserializeOwned>(t: Table, context: &str) -> AppResult<T> {
    Value::Table(t)
        .try_into()
        .map_err(|e: toml::de::Error| AppError::Config(format!("{context}{}", e.message())))
}

fn parse_preset(v: &Value) -> AppResult<Preset> {
    match v.as_str() {
        Some("desk") => Ok(Preset::Desk),
        Some("paper") => Ok(Preset::Paper),
        _ => Err(AppError::Config(format!("preset must be \"desk\" or \"paper\", got {v}"))),
    }
}

/// Parse the right-hand side of `key=value`: TOML syntax when it parses,
/// a bare string otherwise.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(table: &mut Table, path: &str, value: Value) -> AppResult<()> {
    let mut parts = path.split('.').peekable();
    let mut cur = table;
    while let Some(key) = parts.next() {
        if key.is_empty() {
            return Err(AppError::Config(format!("bad override path `{path}`")));
        }
        if parts.peek().is_none() {
            cur.insert(key.to_string(), value);
            return Ok(());
        }
        let next = cur.entry(key.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| AppError::Config(format!("override `{path}`: `{key}` is not a table")))?;
    }
    Ok(())
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if k != "env" => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `env = "planarrotate"` is shorthand for `[env] id = "planarrotate"`.
fn normalize_env(user: &mut Table) -> AppResult<Option<EnvConfig>> {
    let Some(v) = user.remove("env") else { return Ok(None) };
    let env = match v {
        Value::String(s) => s.parse::<EnvConfig>()?,
        Value::Table(mut t) => {
            // Accept `bitflip8` style ids inside the table as well.
            if let Some(Value::String(id)) = t.get("id").cloned() {
                let base: EnvConfig = id.parse()?;
                let mut full = to_table(&base)?;
                t.remove("id");
                merge(&mut full, t);
                from_table(full, "env: ")?
            } else {
                return Err(AppError::Config("env table needs an `id`".into()));
            }
        }
        other => return Err(AppError::Config(format!("env must be a string or table, got {other}"))),
    };
    Ok(Some(env))
}

/// Build a configuration from optional file contents and `path=value`
/// overrides, applied in order after the file.
pub fn resolve(file: Option<&str>, overrides: &[String]) -> AppResult<TrainConfig> {
    let mut user: Table = match file {
        Some(text) => text.parse().map_err(|e: toml::de::Error| AppError::Config(e.message().to_string()))?,
        None => Table::new(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| AppError::Config(format!("override `{o}` is not of the form path=value")))?;
        set_path(&mut user, k.trim(), parse_value(v.trim()))?;
    }
    let preset = match user.remove("preset") {
        Some(v) => parse_preset(&v)?,
        None => Preset::Desk,
    };
    let env = normalize_env(&mut user)?;
    let algo = match user.get("algo") {
        Some(v) => v
            .as_str()
            .ok_or_else(|| AppError::Config("algo must be a string".into()))?
            .parse::<Algo>()?,
        None => Algo::GoalSagail,
    };
    let defaults = TrainConfig::preset(preset);
    let env = env.unwrap_or(defaults.env);
    let base_cfg = TrainConfig::for_env(preset, env, algo);
    let mut base = to_table(&base_cfg)?;
    merge(&mut base, user);
    let cfg: TrainConfig = from_table(base, "")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> AppResult<TrainConfig> {
    let text = match path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(AppError::io(p))?),
        None => None,
    };
    resolve(text.as_deref(), overrides)
}

/// The fully resolved configuration as TOML, for run directories.
pub fn to_toml(cfg: &TrainConfig) -> AppResult<String> {
    toml::to_string_pretty(cfg).map_err(|e| AppError::Runtime(e.to_string()))
}
