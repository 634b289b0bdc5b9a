//! The site / directory / page hierarchy and its segmented counters.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::classifier::AccessType;
use crate::drilldown::DrillTallies;
use crate::time::LogTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Site,
    Directory,
    Page,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Site => "site",
            Self::Directory => "directory",
            Self::Page => "page",
        })
    }
}

/// Synthetic page name for requests to a bare directory URL.
pub const INDEX_PAGE: &str = "index";

/// A node of the hierarchy. The site is `/`, directories end with `/`, pages
/// never do. Orders by path first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId {
    pub path: String,
    pub kind: EntityKind,
}

impl EntityId {
    pub fn site() -> Self {
        Self { path: "/".into(), kind: EntityKind::Site }
    }

    /// Interprets a user-supplied entity reference: `/` or `site` is the
    /// site, a trailing `/` names a directory, anything else a page.
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        if s == "/" || s.eq_ignore_ascii_case("site") || s.is_empty() {
            return Self::site();
        }
        if s.ends_with('/') {
            let norm = normalize_path(s);
            let dir = norm.path.strip_suffix(INDEX_PAGE).unwrap_or(&norm.path);
            if dir == "/" {
                return Self::site();
            }
            return Self { path: dir.into(), kind: EntityKind::Directory };
        }
        Self { path: normalize_path(s).path, kind: EntityKind::Page }
    }

    /// Count of path segments: 0 for the site, 1 for `/irs/` and `/index`.
    pub fn depth(&self) -> usize {
        self.path.split('/').filter(|s| !s.is_empty()).count()
    }

    /// Directories from deepest to shallowest, then the site.
    pub fn ancestors(&self) -> Vec<EntityId> {
        let mut out = Vec::new();
        if self.kind == EntityKind::Site {
            return out;
        }
        let trimmed = self.path.trim_end_matches('/');
        let mut end = trimmed.rfind('/').unwrap_or(0);
        while end > 0 {
            out.push(EntityId { path: self.path[..=end].into(), kind: EntityKind::Directory });
            end = self.path[..end].rfind('/').unwrap_or(0);
        }
        out.push(Self::site());
        out
    }

    /// The directory (or site) directly containing this entity.
    pub fn parent(&self) -> Option<EntityId> {
        self.ancestors().into_iter().next()
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedPath {
    /// Always a page path: starts with `/`, never ends with `/`.
    pub path: String,
    /// `..` tried to climb above the root.
    pub clamped: bool,
}

/// Normalizes a request path into a page path: query and fragment dropped,
/// empty and `.` segments removed, `..` resolved (clamped at the root), and
/// directory requests mapped to `<dir>index`.
pub fn normalize_path(raw: &str) -> NormalizedPath {
    let mut p = raw.split(['?', '#']).next().unwrap_or("");
    for scheme in ["http://", "https://"] {
        if let Some(rest) = p.strip_prefix(scheme) {
            p = rest.find('/').map_or("/", |i| &rest[i..]);
        }
    }
    let mut segments: Vec<&str> = Vec::new();
    let mut clamped = false;
    let mut is_dir = true;
    for seg in p.split('/') {
        match seg {
            "" | "." => is_dir = true,
            ".." => {
                if segments.pop().is_none() {
                    clamped = true;
                }
                is_dir = true;
            }
            s => {
                segments.push(s);
                is_dir = false;
            }
        }
    }
    // A non-empty last segment means a page; `/a/b/`, `/a/.` and `/a/..`
    // are directories.
    let last_is_sep = p.ends_with('/') || p.is_empty();
    let dir_request = is_dir || last_is_sep;
    let mut path = String::with_capacity(p.len() + INDEX_PAGE.len() + 1);
    for s in &segments {
        path.push('/');
        path.push_str(s);
    }
    if dir_request {
        path.push('/');
        path.push_str(INDEX_PAGE);
    }
    if path.is_empty() {
        path.push('/');
        path.push_str(INDEX_PAGE);
    }
    NormalizedPath { path, clamped }
}

/// The page entity a request path lands on, with its ancestors (root-last).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityPath {
    pub page: EntityId,
    pub ancestors: Vec<EntityId>,
    pub clamped: bool,
}

pub fn entity_of(path: &str) -> EntityPath {
    let norm = normalize_path(path);
    let page = EntityId { path: norm.path, kind: EntityKind::Page };
    let ancestors = page.ancestors();
    EntityPath { page, ancestors, clamped: norm.clamped }
}

/// Segmented download counters. `d_total` covers only the three entry
/// types; internal and excluded requests are kept beside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EntityStats {
    pub d_se: u64,
    pub d_bl: u64,
    pub d_da: u64,
    pub d_total: u64,
    pub d_internal: u64,
    pub d_excluded: u64,
}

impl EntityStats {
    pub fn new(d_se: u64, d_bl: u64, d_da: u64) -> Self {
        Self { d_se, d_bl, d_da, d_total: d_se + d_bl + d_da, ..Self::default() }
    }

    pub fn record(&mut self, access: &AccessType) {
        match access {
            AccessType::SearchEngine { .. } => {
                self.d_se += 1;
                self.d_total += 1;
            }
            AccessType::Backlink { .. } => {
                self.d_bl += 1;
                self.d_total += 1;
            }
            AccessType::Direct => {
                self.d_da += 1;
                self.d_total += 1;
            }
            AccessType::Internal => self.d_internal += 1,
            AccessType::Excluded(_) => self.d_excluded += 1,
        }
    }

    pub fn add(&mut self, other: &EntityStats) {
        self.d_se += other.d_se;
        self.d_bl += other.d_bl;
        self.d_da += other.d_da;
        self.d_total += other.d_total;
        self.d_internal += other.d_internal;
        self.d_excluded += other.d_excluded;
    }

    pub fn is_partitioned(&self) -> bool {
        self.d_se + self.d_bl + self.d_da == self.d_total
    }
}

/// A classified request, ready to be counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifiedEntry {
    /// The request path as logged.
    pub path: String,
    pub time: LogTime,
    pub access: AccessType,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EntityNode {
    pub stats: EntityStats,
    pub drill: DrillTallies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub first: LogTime,
    pub last: LogTime,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot merge trees built under different configurations ({left} vs {right})")]
pub struct FingerprintMismatch {
    pub left: String,
    pub right: String,
}

/// Per-entity counters and drill-down tallies for one configuration.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EntityTree {
    pub fingerprint: String,
    pub time_range: Option<TimeRange>,
    /// Requests whose path tried to escape the root.
    pub clamped_paths: u64,
    #[serde(with = "node_list")]
    nodes: BTreeMap<EntityId, EntityNode>,
}

impl EntityTree {
    pub fn new(fingerprint: impl Into<String>) -> Self {
        Self { fingerprint: fingerprint.into(), ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn get(&self, id: &EntityId) -> Option<&EntityNode> {
        self.nodes.get(id)
    }

    pub fn stats(&self, id: &EntityId) -> Option<&EntityStats> {
        self.nodes.get(id).map(|n| &n.stats)
    }

    /// Site totals; zero for an empty tree.
    pub fn site_stats(&self) -> EntityStats {
        self.stats(&EntityId::site()).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityId, &EntityNode)> {
        self.nodes.iter()
    }

    /// Direct children: sub-directories and pages one level down.
    pub fn children<'a>(&'a self, id: &'a EntityId) -> impl Iterator<Item = (&'a EntityId, &'a EntityNode)> {
        self.nodes
            .iter()
            .filter(move |(child, _)| child.kind != EntityKind::Site && child.parent().as_ref() == Some(id))
    }

    /// Counts one entry on its page and every ancestor.
    pub fn accumulate(&mut self, entry: &ClassifiedEntry) {
        let target = entity_of(&entry.path);
        if target.clamped {
            self.clamped_paths += 1;
        }
        self.extend_time_range(entry.time);
        let day = entry.time.date;
        for id in core::iter::once(target.page).chain(target.ancestors) {
            let node = match self.nodes.get_mut(&id) {
                Some(n) => n,
                None => self.nodes.entry(id).or_default(),
            };
            node.stats.record(&entry.access);
            node.drill.record(&entry.access, day);
        }
    }

    fn extend_time_range(&mut self, t: LogTime) {
        match &mut self.time_range {
            Some(r) => {
                if t < r.first {
                    r.first = t;
                }
                if t > r.last {
                    r.last = t;
                }
            }
            None => self.time_range = Some(TimeRange { first: t, last: t }),
        }
    }

    /// Counter-wise sum over the union of entities.
    pub fn merge(mut self, mut other: EntityTree) -> Result<EntityTree, FingerprintMismatch> {
        if self.fingerprint != other.fingerprint {
            return Err(FingerprintMismatch { left: self.fingerprint, right: other.fingerprint });
        }
        if other.nodes.len() > self.nodes.len() {
            core::mem::swap(&mut self, &mut other);
        }
        self.clamped_paths += other.clamped_paths;
        if let Some(r) = other.time_range {
            self.extend_time_range(r.first);
            self.extend_time_range(r.last);
        }
        for (id, node) in other.nodes {
            match self.nodes.get_mut(&id) {
                Some(mine) => {
                    mine.stats.add(&node.stats);
                    mine.drill.merge(node.drill);
                }
                None => {
                    self.nodes.insert(id, node);
                }
            }
        }
        Ok(self)
    }

    /// Bounds every drill-down map to `top_k` keys, folding the rest into
    /// overflow buckets.
    pub fn compact(&mut self, top_k: usize) {
        for node in self.nodes.values_mut() {
            node.drill.compact(top_k);
        }
    }
}

mod node_list {
    use super::{EntityId, EntityKind, EntityNode};
    use alloc::collections::BTreeMap;
    use alloc::string::String;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize)]
    struct NodeRef<'a> {
        entity: &'a str,
        kind: EntityKind,
        #[serde(flatten)]
        node: &'a EntityNode,
    }

    #[derive(Deserialize)]
    struct NodeOwned {
        entity: String,
        kind: EntityKind,
        #[serde(flatten)]
        node: EntityNode,
    }

    pub fn serialize<S: Serializer>(
        nodes: &BTreeMap<EntityId, EntityNode>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(
            nodes.iter().map(|(id, node)| NodeRef { entity: &id.path, kind: id.kind, node }),
        )
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<EntityId, EntityNode>, D::Error> {
        let list = Vec::<NodeOwned>::deserialize(deserializer)?;
        Ok(list
            .into_iter()
            .map(|n| (EntityId { path: n.entity, kind: n.kind }, n.node))
            .collect())
    }
}
