use std::path::PathBuf;

use copo_core::trainer::TrainerConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

/// Top-level run description. Trainer fields live under `[trainer]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Built-in scene name or path to a scene file.
    pub scene: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Iterations between checkpoints.
    pub checkpoint_every: usize,
    /// Agent transitions per seed.
    pub max_env_steps: u64,
    pub trainer: TrainerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: "intersection4".into(),
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            checkpoint_every: 10,
            max_env_steps: 1_000_000,
            trainer: TrainerConfig::default(),
        }
    }
}

const TOP_LEVEL: [&str; 6] = ["scene", "seeds", "output_dir", "checkpoint_every", "max_env_steps", "trainer"];

fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies one `key=value` override. Keys that are not top-level go to `[trainer]`;
/// `seed=N` is shorthand for `seeds=[N]`.
pub fn apply_override(table: &mut Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {item:?} is not of the form key=value")))?;
    let key = key.trim();
    let mut value = parse_value(raw.trim());
    let path: Vec<&str> = match key {
        "seed" => {
            value = Value::Array(vec![value]);
            vec!["seeds"]
        }
        k if k.contains('.') => k.split('.').collect(),
        k if TOP_LEVEL.contains(&k) => vec![k],
        k => vec!["trainer", k],
    };
    let mut node = table;
    for part in &path[..path.len() - 1] {
        node = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {part} is not a table")))?;
    }
    node.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_text(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.trainer.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        if self.checkpoint_every == 0 || self.max_env_steps == 0 {
            return Err(CliError::Config("checkpoint_every and max_env_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
