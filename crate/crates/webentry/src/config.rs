//! Analysis configuration, loaded from a TOML file.
//!
//! ```toml
//! anonymization = "last-octet"   # none | last-octet | full-hash
//! bucket = "month"               # day | week | month (drill-down default)
//! precision = 2                  # decimals for rendered indicators
//! top_k = 1000                   # per-entity cap on query/referer maps
//!
//! [policy]
//! methods = ["GET"]
//! statuses = ["2xx", "304"]      # classes, exact codes or ranges (200-206)
//! include_paths = ["/irs/*"]     # globs over the normalized page path
//! exclude_paths = ["*.gif", "*.css"]
//! internal_hosts = ["www.example.org"]
//! bot_patterns = ["bot", "crawler"]   # case-insensitive UA substrings
//! bot_handling = "count"         # count | exclude
//!
//! [registry]
//! use_defaults = true            # keep the built-in engines
//!
//! [[registry.engines]]
//! id = "scholar"
//! host = "scholar.example.net"   # `name.` matches any `name.<tld>` host
//! path_hint = "/search"          # optional, case-sensitive substring
//! params = ["q", "query"]
//!
//! [[labels]]
//! prefix = "/irs/"
//! label = "Journal IRS"
//! ```
//!
//! Every key is optional. User engines are tried before the built-ins and
//! replace a built-in with the same id.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use webentry_core::classifier::{CountingPolicy, EngineRule, Registry};
use webentry_core::{default_registry, Anonymization, Granularity};

use crate::error::{Error, Result};

pub const DEFAULT_TOP_K: usize = 1000;
pub const DEFAULT_PRECISION: u32 = 2;
pub const MAX_PRECISION: u32 = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistryConfig {
    pub use_defaults: bool,
    pub engines: Vec<EngineRule>,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self { use_defaults: true, engines: Vec::new() }
    }
}

/// Names a path prefix, e.g. a journal or a volume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRule {
    pub prefix: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub anonymization: Anonymization,
    pub bucket: Granularity,
    pub precision: u32,
    pub top_k: usize,
    pub policy: CountingPolicy,
    pub registry: RegistryConfig,
    pub labels: Vec<LabelRule>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            anonymization: Anonymization::LastOctet,
            bucket: Granularity::Month,
            precision: DEFAULT_PRECISION,
            top_k: DEFAULT_TOP_K,
            policy: CountingPolicy::default(),
            registry: RegistryConfig::default(),
            labels: Vec::new(),
        }
    }
}

/// The parts of a configuration that change what gets counted.
#[derive(Serialize)]
struct CountingView<'a> {
    anonymization: Anonymization,
    top_k: usize,
    policy: &'a CountingPolicy,
    engines: &'a [EngineRule],
}

impl AnalysisConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|msg| Error::Config { path: path.into(), msg })
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.policy.validate().map_err(|e| e.to_string())?;
        self.registry().map_err(|e| e.to_string())?;
        if self.top_k == 0 {
            return Err("top_k must be at least 1".into());
        }
        if self.precision > MAX_PRECISION {
            return Err(format!("precision must be at most {MAX_PRECISION}"));
        }
        Ok(())
    }

    /// Built-ins (if enabled) merged with the user's engines.
    pub fn registry(&self) -> std::result::Result<Registry, webentry_core::classifier::RuleError> {
        let user: Vec<EngineRule> = self
            .registry
            .engines
            .iter()
            .map(|r| EngineRule { host: r.host.to_ascii_lowercase(), ..r.clone() })
            .collect();
        let base = if self.registry.use_defaults { default_registry() } else { Registry::default() };
        base.with_user_rules(user)
    }

    pub fn counting_policy(&self) -> CountingPolicy {
        self.policy.clone().normalized()
    }

    /// SHA-256 over the counting-relevant settings (anonymization, top-K,
    /// policy, effective engine list). Presentation settings are left out,
    /// so stores built with different precisions still merge.
    pub fn fingerprint(&self) -> String {
        let registry = self.registry().unwrap_or_default();
        let policy = self.counting_policy();
        let view = CountingView {
            anonymization: self.anonymization,
            top_k: self.top_k,
            policy: &policy,
            engines: registry.rules(),
        };
        let bytes = serde_json::to_vec(&view).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }

    /// Label of the longest matching prefix.
    pub fn label_for(&self, path: &str) -> Option<&str> {
        self.labels
            .iter()
            .filter(|l| path.starts_with(&l.prefix))
            .max_by_key(|l| l.prefix.len())
            .map(|l| l.label.as_str())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
