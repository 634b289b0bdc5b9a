//! The aggregate store: a versioned, canonical JSON document.
//!
//! ```text
//! {
//!   "format": "webentry-store",
//!   "version": 1,
//!   "config_fingerprint": "<sha256 hex>",
//!   "config": { ...AnalysisConfig... },
//!   "summary": { "lines", "counted", "internal", "excluded", "malformed",
//!                "malformed_by_reason": { "<reason>": n } },
//!   "inputs": [ { "name", "sha256", "lines", "malformed" } ],
//!   "tree": {
//!     "fingerprint", "time_range": { "first", "last" } | null, "clamped_paths",
//!     "nodes": [ { "entity", "kind", "stats": {d_se, d_bl, d_da, d_total,
//!                  d_internal, d_excluded}, "drill": { "engines", "backlinks",
//!                  "backlink_overflow"?, "direct_days" } } ]
//!   }
//! }
//! ```
//!
//! All maps are key-sorted and nodes are sorted by path, so a given set of
//! counts has exactly one serialization. Only anonymized aggregates are
//! stored; no raw log lines.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use webentry_core::{EntityTree, MalformedReason};

use crate::config::AnalysisConfig;
use crate::error::{Error, Result};

pub const FORMAT: &str = "webentry-store";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub lines: u64,
    /// Entries inside `d_total`.
    pub counted: u64,
    pub internal: u64,
    pub excluded: u64,
    pub malformed: u64,
    pub malformed_by_reason: BTreeMap<MalformedReason, u64>,
}

impl Summary {
    pub fn add(&mut self, other: &Summary) {
        self.lines += other.lines;
        self.counted += other.counted;
        self.internal += other.internal;
        self.excluded += other.excluded;
        self.malformed += other.malformed;
        for (r, n) in &other.malformed_by_reason {
            *self.malformed_by_reason.entry(*r).or_default() += n;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InputFile {
    pub name: String,
    pub sha256: String,
    pub lines: u64,
    pub malformed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Store {
    pub format: String,
    pub version: u32,
    pub config_fingerprint: String,
    pub config: AnalysisConfig,
    pub summary: Summary,
    pub inputs: Vec<InputFile>,
    pub tree: EntityTree,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u32>,
}

impl Store {
    pub fn new(config: AnalysisConfig) -> Self {
        let fp = config.fingerprint();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config_fingerprint: fp.clone(),
            config,
            summary: Summary::default(),
            inputs: Vec::new(),
            tree: EntityTree::new(fp),
        }
    }

    pub fn to_canonical(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("store serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let header: Header =
            serde_json::from_str(text).map_err(|e| Error::Store(format!("not a store file: {e}")))?;
        if header.format.as_deref() != Some(FORMAT) {
            return Err(Error::Store("not a webentry store (missing format tag)".into()));
        }
        match header.version {
            Some(VERSION) => {}
            Some(v) => {
                return Err(Error::Store(format!(
                    "store format version {v} is not supported (this build reads version {VERSION})"
                )))
            }
            None => return Err(Error::Store("store has no format version".into())),
        }
        let store: Store =
            serde_json::from_str(text).map_err(|e| Error::Store(format!("corrupt store: {e}")))?;
        if store.tree.fingerprint != store.config_fingerprint {
            return Err(Error::Store("store tree and config fingerprints disagree".into()));
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Store(msg) => Error::Store(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical()).map_err(|e| Error::io(path, e))
    }

    /// Combines two stores built under the same counting configuration.
    /// The result is compacted to the configured top-K again.
    pub fn merge(self, other: Store) -> Result<Store> {
        if self.config_fingerprint != other.config_fingerprint {
            return Err(Error::Mismatch(format!(
                "stores were built under different configurations ({} vs {})",
                &self.config_fingerprint[..12.min(self.config_fingerprint.len())],
                &other.config_fingerprint[..12.min(other.config_fingerprint.len())]
            )));
        }
        let mut tree = self.tree.merge(other.tree).map_err(|e| Error::Mismatch(e.to_string()))?;
        tree.compact(self.config.top_k);
        let mut summary = self.summary;
        summary.add(&other.summary);
        let mut inputs = self.inputs;
        inputs.extend(other.inputs);
        inputs.sort();
        Ok(Store {
            format: FORMAT.into(),
            version: VERSION,
            config_fingerprint: self.config_fingerprint,
            config: self.config,
            summary,
            inputs,
            tree,
        })
    }
}
