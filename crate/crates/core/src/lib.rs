//! Web entry analysis over access logs.
//!
//! Each counted download is attributed to one of three entry types from its
//! referer: a search engine, a backlink from another document, or direct
//! access with no referer. Counts roll up a site / directory / page
//! hierarchy, and every entity gets three indicators, the share of its
//! downloads per entry type, plus drill-down tallies (engines and queries,
//! referring URLs and their use over time, direct access over time).
//!
//! The crate is `no_std` and needs only `alloc`; IO, configuration files and
//! the command line live in the `webentry` crate.

#![no_std]

extern crate alloc;

pub mod classifier;
pub mod drilldown;
pub mod entities;
pub mod indicators;
pub mod logmodel;
pub mod time;
pub mod url;

pub use classifier::{
    classify, default_registry, extract_query_terms, AccessType, BotHandling, CountingPolicy,
    EngineRule, ExclusionReason, Registry, SearchQuery, StatusPattern,
};
pub use drilldown::{
    drill_bl, drill_da, drill_se, BacklinkBreakdown, SearchEngineBreakdown, TimeSeries, UnknownEntity,
};
pub use entities::{entity_of, ClassifiedEntry, EntityId, EntityKind, EntityStats, EntityTree};
pub use indicators::{indicators, rank_entities, IndicatorSet, RankKey, Ratio};
pub use logmodel::{anonymize, parse_line, Anonymization, LogRecord, MalformedLine, MalformedReason, ParseOutcome};
pub use time::{CivilDate, Granularity, LogTime};

/// Classifies a parsed record and packages it for [`EntityTree::accumulate`].
pub fn classify_record(record: LogRecord, policy: &CountingPolicy, registry: &Registry) -> ClassifiedEntry {
    let access = classify(&record, policy, registry);
    ClassifiedEntry { path: record.path, time: record.timestamp, access }
}
