//! Drill-down: what an entity's search-engine, backlink and direct counts
//! are made of.
//!
//! Tallies are collected during ingestion and stored with the tree, so
//! queries never need the raw logs. Every map can be capped to a top-K with
//! an overflow bucket; sums always include the overflow.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classifier::AccessType;
use crate::entities::{EntityId, EntityTree};
use crate::time::{CivilDate, Granularity};

/// String-keyed counts with an overflow bucket for keys dropped by
/// compaction.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub overflow: u64,
}

fn is_zero(n: &u64) -> bool {
    *n == 0
}

impl Tally {
    pub fn add(&mut self, key: &str, n: u64) {
        match self.counts.get_mut(key) {
            Some(c) => *c += n,
            None => {
                self.counts.insert(key.into(), n);
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum::<u64>() + self.overflow
    }

    pub fn merge(&mut self, other: Tally) {
        self.overflow += other.overflow;
        for (k, n) in other.counts {
            *self.counts.entry(k).or_default() += n;
        }
    }

    pub fn compact(&mut self, top_k: usize) {
        if self.counts.len() <= top_k {
            return;
        }
        let keep = top_keys(self.counts.iter().map(|(k, n)| (k, *n)), top_k);
        let old = core::mem::take(&mut self.counts);
        for (k, n) in old {
            if keep.contains(&k) {
                self.counts.insert(k, n);
            } else {
                self.overflow += n;
            }
        }
    }

    /// Count descending, then key ascending.
    pub fn ranked(&self) -> Vec<Counted> {
        let mut v: Vec<Counted> =
            self.counts.iter().map(|(k, n)| Counted { key: k.clone(), count: *n }).collect();
        v.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.key.cmp(&b.key)));
        v
    }
}

fn top_keys<'a>(items: impl Iterator<Item = (&'a String, u64)>, k: usize) -> BTreeSet<String> {
    let mut v: Vec<(&String, u64)> = items.collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().take(k).map(|(key, _)| key.clone()).collect()
}

/// Counts per local calendar day.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DayCounts(pub BTreeMap<CivilDate, u64>);

impl DayCounts {
    pub fn add(&mut self, day: CivilDate, n: u64) {
        *self.0.entry(day).or_default() += n;
    }

    pub fn merge(&mut self, other: DayCounts) {
        for (d, n) in other.0 {
            self.add(d, n);
        }
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn series(&self, granularity: Granularity) -> TimeSeries {
        let mut buckets: BTreeMap<CivilDate, u64> = BTreeMap::new();
        for (d, n) in &self.0 {
            *buckets.entry(d.bucket_start(granularity)).or_default() += n;
        }
        TimeSeries {
            granularity,
            points: buckets
                .into_iter()
                .filter(|(_, n)| *n > 0)
                .map(|(start, count)| Bucket { start, count })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EngineTally {
    pub count: u64,
    /// Whole decoded query strings; sums to `count`.
    pub queries: Tally,
    /// Individual terms; a query contributes one count per term.
    pub terms: Tally,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UrlTally {
    pub count: u64,
    /// The referer was not a parseable URL and is kept verbatim.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub non_url: bool,
    pub days: DayCounts,
}

impl UrlTally {
    fn merge(&mut self, other: UrlTally) {
        self.count += other.count;
        self.non_url |= other.non_url;
        self.days.merge(other.days);
    }
}

/// Per-entity raw material for drill-down queries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DrillTallies {
    pub engines: BTreeMap<String, EngineTally>,
    pub backlinks: BTreeMap<String, UrlTally>,
    #[serde(default, skip_serializing_if = "UrlTally::is_empty")]
    pub backlink_overflow: UrlTally,
    pub direct_days: DayCounts,
}

impl UrlTally {
    fn is_empty(&self) -> bool {
        self.count == 0
    }
}

impl DrillTallies {
    pub fn record(&mut self, access: &AccessType, day: CivilDate) {
        match access {
            AccessType::SearchEngine { engine, query } => {
                let e = match self.engines.get_mut(engine.as_str()) {
                    Some(e) => e,
                    None => self.engines.entry(engine.clone()).or_default(),
                };
                e.count += 1;
                e.queries.add(&query.decoded, 1);
                for term in &query.terms {
                    e.terms.add(term, 1);
                }
            }
            AccessType::Backlink { url, is_url } => {
                let u = match self.backlinks.get_mut(url.as_str()) {
                    Some(u) => u,
                    None => self.backlinks.entry(url.clone()).or_default(),
                };
                u.count += 1;
                u.non_url |= !is_url;
                u.days.add(day, 1);
            }
            AccessType::Direct => self.direct_days.add(day, 1),
            AccessType::Internal | AccessType::Excluded(_) => {}
        }
    }

    pub fn merge(&mut self, other: DrillTallies) {
        for (id, e) in other.engines {
            let mine = self.engines.entry(id).or_default();
            mine.count += e.count;
            mine.queries.merge(e.queries);
            mine.terms.merge(e.terms);
        }
        for (url, u) in other.backlinks {
            self.backlinks.entry(url).or_default().merge(u);
        }
        self.backlink_overflow.merge(other.backlink_overflow);
        self.direct_days.merge(other.direct_days);
    }

    pub fn compact(&mut self, top_k: usize) {
        for e in self.engines.values_mut() {
            e.queries.compact(top_k);
            e.terms.compact(top_k);
        }
        if self.backlinks.len() > top_k {
            let keep = top_keys(self.backlinks.iter().map(|(k, u)| (k, u.count)), top_k);
            let old = core::mem::take(&mut self.backlinks);
            for (url, u) in old {
                if keep.contains(&url) {
                    self.backlinks.insert(url, u);
                } else {
                    self.backlink_overflow.merge(u);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counted {
    pub key: String,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub start: CivilDate,
    pub count: u64,
}

/// Bucketed counts; starts strictly increasing, empty buckets omitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub granularity: Granularity,
    pub points: Vec<Bucket>,
}

impl TimeSeries {
    pub fn total(&self) -> u64 {
        self.points.iter().map(|b| b.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineBreakdown {
    pub engine: String,
    pub count: u64,
    pub queries: Vec<Counted>,
    pub query_overflow: u64,
    pub terms: Vec<Counted>,
    pub term_overflow: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchEngineBreakdown {
    pub entity: EntityId,
    pub d_se: u64,
    /// Count descending, then engine id.
    pub engines: Vec<EngineBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferrerBreakdown {
    pub url: String,
    pub non_url: bool,
    pub count: u64,
    pub series: TimeSeries,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacklinkBreakdown {
    pub entity: EntityId,
    pub d_bl: u64,
    /// Count descending, then URL.
    pub referers: Vec<ReferrerBreakdown>,
    /// Referers folded away by top-K compaction.
    pub overflow: Option<ReferrerBreakdown>,
}

pub const OVERFLOW_KEY: &str = "(other)";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown entity `{0}`")]
pub struct UnknownEntity(pub String);

fn node<'a>(tree: &'a EntityTree, id: &EntityId) -> Result<&'a crate::entities::EntityNode, UnknownEntity> {
    tree.get(id).ok_or_else(|| UnknownEntity(id.path.clone()))
}

pub fn drill_se(tree: &EntityTree, entity: &EntityId) -> Result<SearchEngineBreakdown, UnknownEntity> {
    let n = node(tree, entity)?;
    let mut engines: Vec<EngineBreakdown> = n
        .drill
        .engines
        .iter()
        .filter(|(_, e)| e.count > 0)
        .map(|(id, e)| EngineBreakdown {
            engine: id.clone(),
            count: e.count,
            queries: e.queries.ranked(),
            query_overflow: e.queries.overflow,
            terms: e.terms.ranked(),
            term_overflow: e.terms.overflow,
        })
        .collect();
    engines.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.engine.cmp(&b.engine)));
    Ok(SearchEngineBreakdown { entity: entity.clone(), d_se: n.stats.d_se, engines })
}

pub fn drill_bl(
    tree: &EntityTree,
    entity: &EntityId,
    granularity: Granularity,
) -> Result<BacklinkBreakdown, UnknownEntity> {
    let n = node(tree, entity)?;
    let mut referers: Vec<ReferrerBreakdown> = n
        .drill
        .backlinks
        .iter()
        .map(|(url, u)| ReferrerBreakdown {
            url: url.clone(),
            non_url: u.non_url,
            count: u.count,
            series: u.days.series(granularity),
        })
        .collect();
    referers.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.url.cmp(&b.url)));
    let o = &n.drill.backlink_overflow;
    let overflow = (o.count > 0).then(|| ReferrerBreakdown {
        url: OVERFLOW_KEY.into(),
        non_url: o.non_url,
        count: o.count,
        series: o.days.series(granularity),
    });
    Ok(BacklinkBreakdown { entity: entity.clone(), d_bl: n.stats.d_bl, referers, overflow })
}

pub fn drill_da(
    tree: &EntityTree,
    entity: &EntityId,
    granularity: Granularity,
) -> Result<TimeSeries, UnknownEntity> {
    Ok(node(tree, entity)?.drill.direct_days.series(granularity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{classify, default_registry, CountingPolicy};
    use crate::entities::{ClassifiedEntry, EntityKind};
    use crate::logmodel::parse_line;
    use crate::time::LogTime;
    use alloc::format;
    use alloc::string::ToString;

    const SAMPLES: [&str; 3] = [
        r#"141.20.20.xx - - [20/Jul/2002:22:50:55 +0200] "GET /~wumsta/ubach/fuss.htm HTTP/1.1" 200 54988 "http://www.referrer.com/article11.htm" "Mozilla/4.0 (compatible; MSIE 6.0; Windows NT 5.1)""#,
        r#"203.122.23.xxx - - [20/Jul/2002:23:14:37 +0200] "GET /~pbruhn/gruppe04.htm HTTP/1.1" 200 62766 "http://www.google.de/search?q=%2B%22russische+Frauen%22" "Mozilla/4.0 (compatible; MSIE 6.0; Windows NT 5.0)""#,
        r#"200.109.102.xxx - - [20/Jul/2002:23:14:38 +0200] "GET /index.html HTTP/1.0" 200 279 "-" "BlitzBOT@tricus.net (Mozilla compatible)""#,
    ];

    fn sample_tree() -> EntityTree {
        let mut tree = EntityTree::new("fp");
        let policy = CountingPolicy::default();
        let reg = default_registry();
        for (i, l) in SAMPLES.iter().enumerate() {
            let r = parse_line(l, i as u64 + 1).unwrap();
            let access = classify(&r, &policy, &reg);
            tree.accumulate(&ClassifiedEntry { path: r.path, time: r.timestamp, access });
        }
        tree
    }

    fn page(p: &str) -> EntityId {
        EntityId { path: p.into(), kind: EntityKind::Page }
    }

    #[test]
    fn search_engine_sample() {
        let tree = sample_tree();
        let b = drill_se(&tree, &page("/~pbruhn/gruppe04.htm")).unwrap();
        assert_eq!(b.d_se, 1);
        assert_eq!(b.engines.len(), 1);
        assert_eq!(b.engines[0].engine, "google");
        assert_eq!(b.engines[0].count, 1);
        assert_eq!(
            b.engines[0].queries,
            [Counted { key: r#"+"russische Frauen""#.into(), count: 1 }]
        );
        let site = drill_se(&tree, &EntityId::site()).unwrap();
        assert_eq!(site.engines, b.engines);
    }

    #[test]
    fn zero_se_is_empty() {
        let tree = sample_tree();
        let b = drill_se(&tree, &page("/index.html")).unwrap();
        assert_eq!(b.d_se, 0);
        assert!(b.engines.is_empty());
    }

    #[test]
    fn unknown_entity() {
        let tree = sample_tree();
        assert_eq!(drill_se(&tree, &page("/nope")), Err(UnknownEntity("/nope".into())));
        assert!(drill_bl(&tree, &page("/nope"), Granularity::Day).is_err());
        assert!(drill_da(&tree, &page("/nope"), Granularity::Day).is_err());
    }

    #[test]
    fn backlink_sample() {
        let tree = sample_tree();
        let b = drill_bl(&tree, &page("/~wumsta/ubach/fuss.htm"), Granularity::Day).unwrap();
        assert_eq!(b.d_bl, 1);
        assert_eq!(b.referers.len(), 1);
        let r = &b.referers[0];
        assert_eq!(r.url, "www.referrer.com/article11.htm");
        assert_eq!(r.count, 1);
        assert_eq!(r.series.points, [Bucket { start: CivilDate::new(2002, 7, 20).unwrap(), count: 1 }]);
        assert!(b.overflow.is_none());
    }

    #[test]
    fn direct_sample() {
        let tree = sample_tree();
        let s = drill_da(&tree, &page("/index.html"), Granularity::Month).unwrap();
        assert_eq!(s.points, [Bucket { start: CivilDate::new(2002, 7, 1).unwrap(), count: 1 }]);
        let none = drill_da(&tree, &page("/~wumsta/ubach/fuss.htm"), Granularity::Month).unwrap();
        assert!(none.points.is_empty());
    }

    #[test]
    fn monthly_buckets_split_months() {
        let mut tree = EntityTree::new("fp");
        for ts in ["30/Jun/2002:10:00:00 +0200", "01/Jul/2002:10:00:00 +0200"] {
            tree.accumulate(&ClassifiedEntry {
                path: "/a.htm".into(),
                time: LogTime::parse_clf(ts).unwrap(),
                access: AccessType::Backlink { url: "x.org/".into(), is_url: true },
            });
        }
        let b = drill_bl(&tree, &page("/a.htm"), Granularity::Month).unwrap();
        assert_eq!(b.referers.len(), 1);
        let counts: Vec<u64> = b.referers[0].series.points.iter().map(|p| p.count).collect();
        assert_eq!(counts, [1, 1]);
        // Same days fall in one week bucket (Sun 30 Jun / Mon 1 Jul do not).
        let w = drill_bl(&tree, &page("/a.htm"), Granularity::Week).unwrap();
        assert_eq!(w.referers[0].series.points.len(), 2);
    }

    #[test]
    fn local_date_is_used_for_buckets() {
        // 23:30 at -0500 is already the next day in UTC.
        let mut tree = EntityTree::new("fp");
        tree.accumulate(&ClassifiedEntry {
            path: "/a".into(),
            time: LogTime::parse_clf("31/Jul/2002:23:30:00 -0500").unwrap(),
            access: AccessType::Direct,
        });
        let s = drill_da(&tree, &page("/a"), Granularity::Month).unwrap();
        assert_eq!(s.points[0].start, CivilDate::new(2002, 7, 1).unwrap());
    }

    #[test]
    fn compaction_conserves_counts() {
        let mut tree = EntityTree::new("fp");
        let t = LogTime::parse_clf("20/Jul/2002:22:50:55 +0200").unwrap();
        for i in 0..50u64 {
            for _ in 0..=(i % 7) {
                tree.accumulate(&ClassifiedEntry {
                    path: "/p.htm".into(),
                    time: t,
                    access: AccessType::Backlink { url: format!("ref{i}.org/"), is_url: true },
                });
                tree.accumulate(&ClassifiedEntry {
                    path: "/p.htm".into(),
                    time: t,
                    access: AccessType::SearchEngine {
                        engine: "google".into(),
                        query: crate::classifier::SearchQuery {
                            decoded: format!("q{i}"),
                            terms: [format!("q{i}"), "x".to_string()].into(),
                        },
                    },
                });
            }
        }
        let before = tree.clone();
        tree.compact(5);
        let id = page("/p.htm");
        let bl = drill_bl(&tree, &id, Granularity::Day).unwrap();
        assert_eq!(bl.referers.len(), 5);
        let sum: u64 = bl.referers.iter().map(|r| r.count).sum::<u64>() + bl.overflow.as_ref().unwrap().count;
        assert_eq!(sum, bl.d_bl);
        assert_eq!(bl.overflow.unwrap().series.total(), sum - bl.referers.iter().map(|r| r.count).sum::<u64>());
        let se = drill_se(&tree, &id).unwrap();
        let e = &se.engines[0];
        assert_eq!(e.queries.len(), 5);
        assert_eq!(e.queries.iter().map(|q| q.count).sum::<u64>() + e.query_overflow, e.count);
        // The highest counts survive.
        assert!(e.queries.iter().all(|q| q.count == 7));
        let full = drill_se(&before, &id).unwrap();
        assert_eq!(full.engines[0].query_overflow, 0);
        assert_eq!(full.engines[0].queries.len(), 50);
    }
}
