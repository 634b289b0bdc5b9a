//! Entry classification: every counted request is a search-engine entry, a
//! backlink entry or a direct entry, decided from its referer.
//!
//! Evaluation order is fixed: excluded, direct, internal, search engine,
//! backlink. Internal and excluded requests are tallied but sit outside the
//! entry total.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entities::normalize_path;
use crate::logmodel::LogRecord;
use crate::url::{form_decode, query_pairs, RefererUrl};

/// Recognises one search engine from its referer URLs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineRule {
    pub id: String,
    /// `google.` matches any host with a `google.` label sequence
    /// (`www.google.de`, `google.co.uk`); `bing.com` matches that domain and
    /// its subdomains.
    pub host: String,
    /// Substring the referer path must contain, case-sensitive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_hint: Option<String>,
    /// Candidate query parameters carrying the search terms, tried in order.
    pub params: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("engine rule has an empty id")]
    EmptyId,
    #[error("engine rule `{0}` has an empty host pattern")]
    EmptyHost(String),
    #[error("engine rule `{0}` names no query parameter")]
    NoParams(String),
    #[error("duplicate engine id `{0}`")]
    DuplicateId(String),
}

impl EngineRule {
    pub fn new(id: &str, host: &str, path_hint: Option<&str>, params: &[&str]) -> Self {
        Self {
            id: id.into(),
            host: host.to_ascii_lowercase(),
            path_hint: path_hint.map(Into::into),
            params: params.iter().map(|p| (*p).into()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        if self.id.is_empty() {
            return Err(RuleError::EmptyId);
        }
        if self.host.trim_matches('.').is_empty() {
            return Err(RuleError::EmptyHost(self.id.clone()));
        }
        if self.params.iter().all(|p| p.is_empty()) {
            return Err(RuleError::NoParams(self.id.clone()));
        }
        Ok(())
    }

    /// `host` must already be lowercase.
    pub fn matches_host(&self, host: &str) -> bool {
        let pattern = self.host.as_str();
        if pattern.ends_with('.') {
            host.starts_with(pattern)
                || host
                    .match_indices(pattern)
                    .any(|(i, _)| i > 0 && host.as_bytes()[i - 1] == b'.')
        } else {
            host == pattern
                || (host.len() > pattern.len()
                    && host.ends_with(pattern)
                    && host.as_bytes()[host.len() - pattern.len() - 1] == b'.')
        }
    }

    fn matches(&self, host: &str, path: &str) -> bool {
        self.matches_host(host) && self.path_hint.as_deref().is_none_or(|h| path.contains(h))
    }
}

/// Ordered engine rules; the first matching rule wins.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Registry {
    rules: Vec<EngineRule>,
}

impl Registry {
    pub fn new(rules: Vec<EngineRule>) -> Result<Self, RuleError> {
        let mut seen = BTreeSet::new();
        for r in &rules {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(RuleError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { rules })
    }

    pub fn rules(&self) -> &[EngineRule] {
        &self.rules
    }

    /// User rules take precedence: they are placed first, and a user rule
    /// with an existing id replaces the built-in one.
    pub fn with_user_rules(self, user: Vec<EngineRule>) -> Result<Self, RuleError> {
        let ids: BTreeSet<&str> = user.iter().map(|r| r.id.as_str()).collect();
        let kept: Vec<EngineRule> =
            self.rules.into_iter().filter(|r| !ids.contains(r.id.as_str())).collect();
        let mut rules = user;
        rules.extend(kept);
        Self::new(rules)
    }

    fn find(&self, host: &str, path: &str) -> Option<&EngineRule> {
        self.rules.iter().find(|r| r.matches(host, path))
    }
}

/// Built-in search engines.
pub fn default_registry() -> Registry {
    let rules = [
        EngineRule::new("google", "google.", None, &["q", "as_q"]),
        EngineRule::new("yahoo", "search.yahoo.", None, &["p", "va"]),
        EngineRule::new("bing", "bing.com", None, &["q"]),
        EngineRule::new("msn", "search.msn.", None, &["q"]),
        EngineRule::new("live", "search.live.com", None, &["q"]),
        EngineRule::new("altavista", "altavista.", None, &["q"]),
        EngineRule::new("alltheweb", "alltheweb.com", None, &["q"]),
        EngineRule::new("aol", "search.aol.", None, &["query", "q"]),
        EngineRule::new("ask", "ask.com", None, &["q", "ask"]),
        EngineRule::new("lycos", "lycos.", None, &["query", "q"]),
        EngineRule::new("web.de", "suche.web.de", None, &["su", "q"]),
        EngineRule::new("t-online", "suche.t-online.de", None, &["q"]),
        EngineRule::new("fireball", "fireball.de", None, &["q", "query"]),
        EngineRule::new("duckduckgo", "duckduckgo.com", None, &["q"]),
        EngineRule::new("baidu", "baidu.com", None, &["wd", "word"]),
        EngineRule::new("yandex", "yandex.", None, &["text"]),
        EngineRule::new("ecosia", "ecosia.org", None, &["q"]),
    ];
    Registry::new(rules.into()).expect("built-in registry is valid")
}

/// One allowed status code or class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusPattern {
    /// `2xx`
    Class(u8),
    /// `304`
    Exact(u16),
    /// `200-206`
    Range(u16, u16),
}

impl StatusPattern {
    pub fn matches(self, status: u16) -> bool {
        match self {
            Self::Class(c) => status / 100 == u16::from(c),
            Self::Exact(s) => status == s,
            Self::Range(lo, hi) => (lo..=hi).contains(&status),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid status pattern `{0}`")]
pub struct BadStatusPattern(pub String);

impl FromStr for StatusPattern {
    type Err = BadStatusPattern;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadStatusPattern(s.into());
        let code = |t: &str| -> Result<u16, BadStatusPattern> {
            match t.parse::<u16>() {
                Ok(v) if t.len() == 3 && (100..=599).contains(&v) => Ok(v),
                _ => Err(bad()),
            }
        };
        if let Some(d) = s.strip_suffix("xx").or_else(|| s.strip_suffix("XX")) {
            return match d.as_bytes() {
                [c @ b'1'..=b'5'] => Ok(Self::Class(c - b'0')),
                _ => Err(bad()),
            };
        }
        if let Some((lo, hi)) = s.split_once('-') {
            let (lo, hi) = (code(lo)?, code(hi)?);
            return if lo <= hi { Ok(Self::Range(lo, hi)) } else { Err(bad()) };
        }
        code(s).map(Self::Exact)
    }
}

impl fmt::Display for StatusPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Class(c) => write!(f, "{c}xx"),
            Self::Exact(s) => write!(f, "{s}"),
            Self::Range(lo, hi) => write!(f, "{lo}-{hi}"),
        }
    }
}

impl Serialize for StatusPattern {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StatusPattern {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BotHandling {
    /// Bots are classified like any other client.
    #[default]
    Count,
    /// User agents matching a bot pattern are excluded.
    Exclude,
}

/// Which requests count as downloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountingPolicy {
    pub methods: Vec<String>,
    pub statuses: Vec<StatusPattern>,
    /// Glob patterns over the normalized page path (`*` and `?`). Empty
    /// means everything is included.
    pub include_paths: Vec<String>,
    pub exclude_paths: Vec<String>,
    /// The server's own host names, compared case-insensitively.
    pub internal_hosts: Vec<String>,
    /// Case-insensitive user-agent substrings.
    pub bot_patterns: Vec<String>,
    pub bot_handling: BotHandling,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("counting policy needs at least one status pattern")]
    NoStatuses,
    #[error("counting policy needs at least one method")]
    NoMethods,
}

pub const DEFAULT_BOT_PATTERNS: &[&str] = &[
    "bot", "crawler", "spider", "slurp", "crawl", "archiver", "fetcher", "scooter", "teoma",
    "bingpreview", "mediapartners", "facebookexternalhit", "wget", "curl/", "python-requests",
];

impl Default for CountingPolicy {
    fn default() -> Self {
        Self {
            methods: ["GET".into()].into(),
            statuses: [StatusPattern::Class(2), StatusPattern::Exact(304)].into(),
            include_paths: Vec::new(),
            exclude_paths: Vec::new(),
            internal_hosts: Vec::new(),
            bot_patterns: DEFAULT_BOT_PATTERNS.iter().map(|p| (*p).into()).collect(),
            bot_handling: BotHandling::Count,
        }
    }
}

impl CountingPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.statuses.is_empty() {
            return Err(PolicyError::NoStatuses);
        }
        if self.methods.is_empty() {
            return Err(PolicyError::NoMethods);
        }
        Ok(())
    }

    /// Lowercases the host and pattern lists so matching can compare bytes.
    pub fn normalized(mut self) -> Self {
        for h in &mut self.internal_hosts {
            *h = h.to_ascii_lowercase();
        }
        for p in &mut self.bot_patterns {
            *p = p.to_ascii_lowercase();
        }
        self
    }

    pub fn is_bot(&self, user_agent: Option<&str>) -> bool {
        let Some(ua) = user_agent else { return false };
        let ua = ua.to_ascii_lowercase();
        self.bot_patterns.iter().any(|p| !p.is_empty() && ua.contains(&p.to_ascii_lowercase()))
    }

    fn is_internal(&self, host: &str) -> bool {
        self.internal_hosts.iter().any(|h| h.eq_ignore_ascii_case(host))
    }

    fn path_counted(&self, path: &str) -> bool {
        (self.include_paths.is_empty() || self.include_paths.iter().any(|g| glob_match(g, path)))
            && !self.exclude_paths.iter().any(|g| glob_match(g, path))
    }
}

/// `*` matches any run of characters (including `/`), `?` exactly one.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Method,
    Status,
    Path,
    Bot,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Method => "method",
            Self::Status => "status",
            Self::Path => "path",
            Self::Bot => "bot",
        })
    }
}

/// A decoded search query.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SearchQuery {
    pub decoded: String,
    pub terms: Vec<String>,
}

/// The classification of one record, with its evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessType {
    SearchEngine { engine: String, query: SearchQuery },
    /// `url` is the normalized referer, or the raw referer when it is not a URL.
    Backlink { url: String, is_url: bool },
    Direct,
    Internal,
    Excluded(ExclusionReason),
}

impl AccessType {
    pub fn is_entry(&self) -> bool {
        matches!(self, Self::SearchEngine { .. } | Self::Backlink { .. } | Self::Direct)
    }
}

/// Splits a query on whitespace, keeping double-quoted phrases (and any
/// operator glued to them, as in `+"two words"`) as single terms.
pub fn tokenize_query(query: &str) -> Vec<String> {
    let mut terms = Vec::new();
    let mut current = String::new();
    let mut in_quote = false;
    for ch in query.chars() {
        if ch == '"' {
            in_quote = !in_quote;
            current.push(ch);
        } else if ch.is_whitespace() && !in_quote {
            if !current.is_empty() {
                terms.push(core::mem::take(&mut current));
            }
        } else {
            current.push(ch);
        }
    }
    if !current.is_empty() {
        terms.push(current);
    }
    terms
}

/// Decodes the first candidate parameter of `rule` present in the referer's
/// query. No candidate present yields an empty query.
pub fn extract_query_terms(referer: &str, rule: &EngineRule) -> SearchQuery {
    let Some(query) = RefererUrl::parse(referer).and_then(|u| u.query) else {
        return SearchQuery::default();
    };
    query_value(query, rule)
}

fn query_value(query: &str, rule: &EngineRule) -> SearchQuery {
    for param in &rule.params {
        if let Some((_, v)) = query_pairs(query).find(|(k, _)| k == param) {
            let decoded = form_decode(v);
            let terms = tokenize_query(&decoded);
            return SearchQuery { decoded, terms };
        }
    }
    SearchQuery::default()
}

/// Assigns exactly one access type to a parsed record.
pub fn classify(record: &LogRecord, policy: &CountingPolicy, registry: &Registry) -> AccessType {
    if !policy.methods.contains(&record.method) {
        return AccessType::Excluded(ExclusionReason::Method);
    }
    if !policy.statuses.iter().any(|s| s.matches(record.status)) {
        return AccessType::Excluded(ExclusionReason::Status);
    }
    if !(policy.include_paths.is_empty() && policy.exclude_paths.is_empty())
        && !policy.path_counted(&normalize_path(&record.path).path)
    {
        return AccessType::Excluded(ExclusionReason::Path);
    }
    if policy.bot_handling == BotHandling::Exclude && policy.is_bot(record.user_agent.as_deref()) {
        return AccessType::Excluded(ExclusionReason::Bot);
    }
    let Some(referer) = record.referer.as_deref() else {
        return AccessType::Direct;
    };
    let Some(url) = RefererUrl::parse(referer) else {
        return AccessType::Backlink { url: referer.trim().to_string(), is_url: false };
    };
    let host = url.host().to_ascii_lowercase();
    if policy.is_internal(&host) {
        return AccessType::Internal;
    }
    if let Some(rule) = registry.find(&host, url.path) {
        let query = url.query.map(|q| query_value(q, rule)).unwrap_or_default();
        return AccessType::SearchEngine { engine: rule.id.clone(), query };
    }
    AccessType::Backlink { url: url.normalized(), is_url: true }
}
