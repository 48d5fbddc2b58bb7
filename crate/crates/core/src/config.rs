//! Run configuration: a flat TOML file composed with command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{ScoringOptions, DEFAULT_K};
use crate::translate::{DEFAULT_DOC_CHAR_LIMIT, DEFAULT_TEMPERATURE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid setting: {0}")]
    Invalid(String),
}

/// Attention scale: the embedding dimension, or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "DkRepr", into = "DkRepr")]
pub enum DkSetting {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DkRepr {
    Fixed(usize),
    Named(String),
}

impl TryFrom<DkRepr> for DkSetting {
    type Error = String;
    fn try_from(r: DkRepr) -> Result<Self, String> {
        match r {
            DkRepr::Fixed(0) => Err("d_k must be positive".into()),
            DkRepr::Fixed(n) => Ok(DkSetting::Fixed(n)),
            DkRepr::Named(s) if s == "auto" => Ok(DkSetting::Auto),
            DkRepr::Named(s) => Err(format!("d_k must be \"auto\" or a positive integer, got {s:?}")),
        }
    }
}

impl From<DkSetting> for DkRepr {
    fn from(d: DkSetting) -> Self {
        match d {
            DkSetting::Auto => DkRepr::Named("auto".into()),
            DkSetting::Fixed(n) => DkRepr::Fixed(n),
        }
    }
}

impl std::str::FromStr for DkSetting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.parse::<usize>() {
            Ok(n) => DkSetting::try_from(DkRepr::Fixed(n)),
            Err(_) => DkSetting::try_from(DkRepr::Named(s.to_string())),
        }
    }
}

impl fmt::Display for DkSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DkSetting::Auto => f.write_str("auto"),
            DkSetting::Fixed(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    File,
    Service,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marginals {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k: usize,
    pub marginals: Marginals,
    pub d_k: DkSetting,
    pub weights: [f64; 2],
    pub normalize_fused: bool,
    pub include_cls_row: bool,
    /// Worker threads for document scoring; 0 means one per core.
    pub threads: usize,
    pub provider: ProviderKind,
    pub store: Option<PathBuf>,
    pub embed_url: Option<String>,
    pub embed_batch_size: usize,
    pub embed_concurrency: usize,
    pub llm_base: Option<String>,
    pub llm_model: String,
    pub llm_api_key_env: String,
    pub temperature: f64,
    pub doc_char_limit: usize,
    pub llm_concurrency: usize,
    pub cache: Option<PathBuf>,
    pub timeout_secs: u64,
    /// Reserved; nothing in the pipeline is random.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: DEFAULT_K,
            marginals: Marginals::Uniform,
            d_k: DkSetting::Auto,
            weights: [1.0, 1.0],
            normalize_fused: true,
            include_cls_row: false,
            threads: 0,
            provider: ProviderKind::File,
            store: None,
            embed_url: None,
            embed_batch_size: 32,
            embed_concurrency: 4,
            llm_base: None,
            llm_model: "gpt-4o".into(),
            llm_api_key_env: "OPENAI_API_KEY".into(),
            temperature: DEFAULT_TEMPERATURE,
            doc_char_limit: DEFAULT_DOC_CHAR_LIMIT,
            llm_concurrency: 4,
            cache: None,
            timeout_secs: 120,
            seed: None,
        }
    }
}

/// Values given on the command line; `None` leaves the file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub k: Option<usize>,
    pub d_k: Option<DkSetting>,
    pub weights: Option<[f64; 2]>,
    pub no_normalize_fused: bool,
    pub include_cls_row: bool,
    pub threads: Option<usize>,
    pub provider: Option<ProviderKind>,
    pub store: Option<PathBuf>,
    pub embed_url: Option<String>,
    pub llm_base: Option<String>,
    pub llm_model: Option<String>,
    pub cache: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Parses `"w1,w2"`.
pub fn parse_weights(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        return Err(format!("expected two comma-separated weights, got {s:?}"));
    };
    let parse = |x: &str| x.parse::<f64>().map_err(|_| format!("{x:?} is not a number"));
    Ok([parse(a)?, parse(b)?])
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    /// File values (or defaults), then flags on top, then validation.
    pub fn resolve(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        if let Some(k) = o.k {
            self.k = k;
        }
        if let Some(d) = o.d_k {
            self.d_k = d;
        }
        if let Some(w) = o.weights {
            self.weights = w;
        }
        if o.no_normalize_fused {
            self.normalize_fused = false;
        }
        if o.include_cls_row {
            self.include_cls_row = true;
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
        if let Some(p) = o.provider {
            self.provider = p;
        }
        if let Some(s) = &o.store {
            self.store = Some(s.clone());
        }
        if let Some(u) = &o.embed_url {
            self.embed_url = Some(u.clone());
        }
        if let Some(b) = &o.llm_base {
            self.llm_base = Some(b.clone());
        }
        if let Some(m) = &o.llm_model {
            self.llm_model = m.clone();
        }
        if let Some(c) = &o.cache {
            self.cache = Some(c.clone());
        }
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.k == 0 {
            return invalid("k must be at least 1".into());
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return invalid(format!("weights must be finite, got {:?}", self.weights));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return invalid(format!("temperature must be a nonnegative number, got {}", self.temperature));
        }
        if self.doc_char_limit == 0 || self.embed_batch_size == 0 {
            return invalid("doc_char_limit and embed_batch_size must be positive".into());
        }
        if self.embed_concurrency == 0 || self.llm_concurrency == 0 {
            return invalid("concurrency bounds must be positive".into());
        }
        Ok(())
    }

    pub fn scoring(&self) -> ScoringOptions {
        ScoringOptions {
            d_k: match self.d_k {
                DkSetting::Auto => None,
                DkSetting::Fixed(n) => Some(n),
            },
            normalize: self.normalize_fused,
            weights: (self.weights[0], self.weights[1]),
            include_cls_row: self.include_cls_row,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.k, 100);
        assert_eq!(c.weights, [1.0, 1.0]);
        assert!(c.normalize_fused);
        assert_eq!(c.d_k, DkSetting::Auto);
        assert_eq!(c.temperature, 0.5);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig {
            d_k: DkSetting::Fixed(64),
            store: Some("emb.bin".into()),
            ..RunConfig::default()
        };
        let back = RunConfig::from_toml_str(&c.to_toml(), Path::new("x")).unwrap();
        assert_eq!(back, c);
        let text = RunConfig::default().to_toml();
        assert!(text.contains("d_k = \"auto\""));
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "k = 20\nweights = [2.0, 0.5]\nthreads = 3\n").unwrap();
        let o = ConfigOverrides {
            k: Some(5),
            no_normalize_fused: true,
            ..Default::default()
        };
        let c = RunConfig::resolve(Some(&path), &o).unwrap();
        assert_eq!(c.k, 5);
        assert_eq!(c.weights, [2.0, 0.5]);
        assert_eq!(c.threads, 3);
        assert!(!c.normalize_fused);
    }

    #[test]
    fn invalid_values() {
        let o = ConfigOverrides {
            k: Some(0),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(None, &o), Err(ConfigError::Invalid(_))));
        assert!(RunConfig::from_toml_str("d_k = 0", Path::new("x")).is_err());
        assert!(RunConfig::from_toml_str("d_k = \"big\"", Path::new("x")).is_err());
        assert!(RunConfig::from_toml_str("bogus = 1", Path::new("x")).is_err());
        assert_eq!(parse_weights("1, 0.5").unwrap(), [1.0, 0.5]);
        assert!(parse_weights("1").is_err());
        assert_eq!("auto".parse::<DkSetting>().unwrap(), DkSetting::Auto);
        assert_eq!("8".parse::<DkSetting>().unwrap(), DkSetting::Fixed(8));
    }
}
