use std::path::{Path, PathBuf};

use propex_core::indexer::BuildParams;
use propex_core::providers::ProviderConfig;
use propex_core::retrieval::RetrievalParams;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Off,
    Error,
    #[default]
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    pub fn filter(self) -> log::LevelFilter {
        match self {
            Self::Off => log::LevelFilter::Off,
            Self::Error => log::LevelFilter::Error,
            Self::Warn => log::LevelFilter::Warn,
            Self::Info => log::LevelFilter::Info,
            Self::Debug => log::LevelFilter::Debug,
            Self::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub index: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    /// Directory holding `prompts.toml`; the bundled set is used when unset.
    pub prompts: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    pub embed_dim: usize,
    pub seed: u64,
    /// JSON array of canned chat rules consulted before the heuristics.
    pub fixtures: Option<PathBuf>,
}

impl Default for MockSettings {
    fn default() -> Self {
        Self {
            embed_dim: 512,
            seed: 0,
            fixtures: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub log_level: LogLevel,
    pub char_budget: usize,
    pub provider: ProviderConfig,
    pub retrieval: RetrievalParams,
    pub index: BuildParams,
    pub paths: Paths,
    pub mock: MockSettings,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            log_level: LogLevel::default(),
            char_budget: propex_core::answer::DEFAULT_CHAR_BUDGET,
            provider: ProviderConfig::default(),
            retrieval: RetrievalParams::default(),
            index: BuildParams::default(),
            paths: Paths::default(),
            mock: MockSettings::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config: reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config: {origin}: {message}")]
    Invalid { origin: String, message: String },
}

fn invalid(origin: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        origin: origin.to_string(),
        message: message.to_string(),
    }
}

/// Overlays `top` onto `base`, table by table.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back to
/// a bare string.
fn parse_scalar(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_dotted(root: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid("--set", format!("bad key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut table = root;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => return Err(invalid("--set", format!("`{p}` in `{key}` is not a table"))),
        };
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Overrides given as `dotted.key=value`.
#[derive(Debug, Clone, Default)]
pub struct Overrides(pub Vec<(String, String)>);

impl Overrides {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
        let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
        Ok((k.trim().to_string(), v.trim().to_string()))
    }
}

/// Defaults, then the file (if any), then flag overrides.
pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<AppConfig, ConfigError> {
    let mut tree = Table::try_from(AppConfig::default()).map_err(|e| invalid("defaults", e))?;
    if let Some(path) = file {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let doc: Table = src.parse().map_err(|e| invalid(&path.display().to_string(), e))?;
        merge(&mut tree, doc);
    }
    for (k, v) in &overrides.0 {
        set_dotted(&mut tree, k, parse_scalar(v))?;
    }
    let origin = file.map_or_else(|| "flags".to_string(), |p| p.display().to_string());
    let cfg: AppConfig = Value::Table(tree).try_into().map_err(|e| invalid(&origin, e))?;
    cfg.retrieval.validate().map_err(|e| invalid(&origin, e))?;
    cfg.index.validate().map_err(|e| invalid(&origin, e))?;
    Ok(cfg)
}
