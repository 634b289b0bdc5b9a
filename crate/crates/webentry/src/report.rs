//! Rendering stores as reports and drill-downs.
//!
//! Report JSON is an array of rows:
//!
//! ```text
//! [ { "entity": "/irs/article.htm", "kind": "page",
//!     "d_se": 2000, "d_bl": 7000, "d_da": 1000, "d_total": 10000,
//!     "i_se": 0.2, "i_bl": 0.7, "i_da": 0.1, "label": "IRS" } ]
//! ```
//!
//! Indicators are rounded to the report precision and `null` when
//! `d_total` is zero; `label` is present only when a label rule matches.
//! CSV has the same columns in the same order (label last), with empty cells
//! for undefined indicators. Drill-down JSON and CSV use the column names of
//! the corresponding table.

use std::fmt::Write as _;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use webentry_core::drilldown::OVERFLOW_KEY;
use webentry_core::indicators::rank_cmp;
use webentry_core::{
    drill_bl, drill_da, drill_se, indicators, EntityId, EntityKind, EntityStats, Granularity, IndicatorSet,
    RankKey, Ratio, TimeSeries,
};

use crate::error::{Error, Result};
use crate::store::Store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Level {
    Site,
    Directory,
    Page,
    #[default]
    All,
}

impl Level {
    fn admits(self, kind: EntityKind) -> bool {
        match self {
            Level::All => true,
            Level::Site => kind == EntityKind::Site,
            Level::Directory => kind == EntityKind::Directory,
            Level::Page => kind == EntityKind::Page,
        }
    }
}

/// Digit grouping in tables. `Paper` writes 10000 as `10.000`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Locale {
    #[default]
    Plain,
    Paper,
}

impl Locale {
    pub fn int(self, n: u64) -> String {
        let digits = n.to_string();
        if self == Locale::Plain || digits.len() <= 3 {
            return digits;
        }
        let mut out = String::with_capacity(digits.len() + digits.len() / 3);
        for (i, c) in digits.chars().enumerate() {
            if i > 0 && (digits.len() - i).is_multiple_of(3) {
                out.push('.');
            }
            out.push(c);
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    pub level: Level,
    /// `None` keeps path order.
    pub sort: Option<RankKey>,
    pub min_total: u64,
    pub max_depth: Option<usize>,
    pub limit: Option<usize>,
    pub precision: u32,
    pub locale: Locale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub entity: EntityId,
    pub stats: EntityStats,
    pub indicators: IndicatorSet,
    pub label: Option<String>,
}

/// One row of JSON report output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonRow {
    pub entity: String,
    pub kind: EntityKind,
    pub d_se: u64,
    pub d_bl: u64,
    pub d_da: u64,
    pub d_total: u64,
    pub i_se: Option<f64>,
    pub i_bl: Option<f64>,
    pub i_da: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

pub fn report_rows(store: &Store, opts: &ReportOptions) -> Vec<ReportRow> {
    let mut picked: Vec<(&EntityId, &EntityStats)> = store
        .tree
        .iter()
        .filter(|(id, n)| {
            opts.level.admits(id.kind)
                && n.stats.d_total >= opts.min_total
                && opts.max_depth.is_none_or(|d| id.depth() <= d)
        })
        .map(|(id, n)| (id, &n.stats))
        .collect();
    if let Some(key) = opts.sort {
        picked.sort_by(|a, b| rank_cmp(key, *a, *b));
    }
    if let Some(limit) = opts.limit {
        picked.truncate(limit);
    }
    picked
        .into_iter()
        .map(|(id, s)| ReportRow {
            entity: id.clone(),
            stats: *s,
            indicators: indicators(s),
            label: store.config.label_for(&id.path).map(str::to_string),
        })
        .collect()
}

fn rounded(value: Option<Ratio>, precision: u32) -> Option<f64> {
    value.map(|r| r.render(precision).parse().expect("rendered ratio is a decimal"))
}

fn kind_title(kind: EntityKind) -> &'static str {
    match kind {
        EntityKind::Site => "Site",
        EntityKind::Directory => "Directory",
        EntityKind::Page => "Page",
    }
}

pub fn render_report(store: &Store, opts: &ReportOptions, format: Format) -> String {
    let rows = report_rows(store, opts);
    let p = opts.precision;
    match format {
        Format::Table => {
            let with_labels = rows.iter().any(|r| r.label.is_some());
            let mut headers = vec!["Entity", "URL", "D_se (I_se)", "D_bl (I_bl)", "D_da (I_da)", "D_total"];
            if with_labels {
                headers.push("Label");
            }
            let cell = |n: u64, r: Option<Ratio>| format!("{} ({})", opts.locale.int(n), IndicatorSet::render(r, p));
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut v = vec![
                        kind_title(r.entity.kind).to_string(),
                        r.entity.path.clone(),
                        cell(r.stats.d_se, r.indicators.i_se()),
                        cell(r.stats.d_bl, r.indicators.i_bl()),
                        cell(r.stats.d_da, r.indicators.i_da()),
                        opts.locale.int(r.stats.d_total),
                    ];
                    if with_labels {
                        v.push(r.label.clone().unwrap_or_default());
                    }
                    v
                })
                .collect();
            layout(&headers, &body)
        }
        Format::Json => {
            let out: Vec<JsonRow> = rows
                .into_iter()
                .map(|r| JsonRow {
                    entity: r.entity.path,
                    kind: r.entity.kind,
                    d_se: r.stats.d_se,
                    d_bl: r.stats.d_bl,
                    d_da: r.stats.d_da,
                    d_total: r.stats.d_total,
                    i_se: rounded(r.indicators.i_se(), p),
                    i_bl: rounded(r.indicators.i_bl(), p),
                    i_da: rounded(r.indicators.i_da(), p),
                    label: r.label,
                })
                .collect();
            json(&out)
        }
        Format::Csv => {
            let opt = |r: Option<Ratio>| r.map(|r| r.render(p)).unwrap_or_default();
            let mut w = csv::Writer::from_writer(Vec::new());
            write_csv_record(
                &mut w,
                ["entity", "kind", "d_se", "d_bl", "d_da", "d_total", "i_se", "i_bl", "i_da", "label"].map(String::from),
            );
            for r in rows {
                write_csv_record(
                    &mut w,
                    [
                        r.entity.path,
                        r.entity.kind.to_string(),
                        r.stats.d_se.to_string(),
                        r.stats.d_bl.to_string(),
                        r.stats.d_da.to_string(),
                        r.stats.d_total.to_string(),
                        opt(r.indicators.i_se()),
                        opt(r.indicators.i_bl()),
                        opt(r.indicators.i_da()),
                        r.label.unwrap_or_default(),
                    ],
                );
            }
            finish_csv(w)
        }
    }
}

fn write_csv_record<I: IntoIterator<Item = String>>(w: &mut csv::Writer<Vec<u8>>, record: I) {
    w.write_record(record).expect("writing to memory");
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv of strings is utf-8")
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializes");
    s.push('\n');
    s
}

/// Left-aligned columns separated by two spaces.
fn layout<H: AsRef<str>>(headers: &[H], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.as_ref().chars().count()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut l = String::new();
        for (i, c) in cells.enumerate() {
            if i > 0 {
                l.push_str("  ");
            }
            let _ = write!(l, "{c:<w$}", w = widths[i]);
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(&mut headers.iter().map(|h| h.as_ref()));
    for row in rows {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DrillType {
    /// Search engines.
    Se,
    /// Backlinks.
    Bl,
    /// Direct access.
    Da,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DrillBy {
    Engine,
    Query,
    Term,
    Referer,
    Time,
}

impl DrillType {
    pub fn default_by(self) -> DrillBy {
        match self {
            DrillType::Se => DrillBy::Engine,
            DrillType::Bl => DrillBy::Referer,
            DrillType::Da => DrillBy::Time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Text(String),
    Int(u64),
    Bool(bool),
}

/// A drill-down result as named columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(headers: &[&'static str]) -> Self {
        Self { headers: headers.to_vec(), rows: Vec::new() }
    }

    pub fn render(&self, format: Format, locale: Locale) -> String {
        match format {
            Format::Table => {
                let body: Vec<Vec<String>> = self
                    .rows
                    .iter()
                    .map(|r| {
                        r.iter()
                            .map(|c| match c {
                                Cell::Text(s) => s.clone(),
                                Cell::Int(n) => locale.int(*n),
                                Cell::Bool(b) => b.to_string(),
                            })
                            .collect()
                    })
                    .collect();
                layout(&self.headers, &body)
            }
            Format::Json => {
                let rows: Vec<serde_json::Map<String, serde_json::Value>> = self
                    .rows
                    .iter()
                    .map(|r| {
                        self.headers
                            .iter()
                            .zip(r)
                            .map(|(h, c)| (h.to_string(), serde_json::to_value(c).expect("cell serializes")))
                            .collect()
                    })
                    .collect();
                json(&rows)
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                write_csv_record(&mut w, self.headers.iter().map(|h| h.to_string()));
                for r in &self.rows {
                    write_csv_record(
                        &mut w,
                        r.iter().map(|c| match c {
                            Cell::Text(s) => s.clone(),
                            Cell::Int(n) => n.to_string(),
                            Cell::Bool(b) => b.to_string(),
                        }),
                    );
                }
                finish_csv(w)
            }
        }
    }
}

fn series_rows(table: &mut Table, series: &TimeSeries) {
    for b in &series.points {
        table.rows.push(vec![Cell::Text(b.start.to_string()), Cell::Int(b.count)]);
    }
}

/// Up to three entity paths closest to `wanted`.
pub fn suggestions(store: &Store, wanted: &str) -> Vec<String> {
    let mut scored: Vec<(usize, &str)> =
        store.tree.iter().map(|(id, _)| (strsim::levenshtein(wanted, &id.path), id.path.as_str())).collect();
    scored.sort();
    scored.into_iter().take(3).map(|(_, p)| p.to_string()).collect()
}

fn unknown(store: &Store, entity: &EntityId) -> Error {
    let near = suggestions(store, &entity.path);
    if near.is_empty() {
        Error::Usage(format!("unknown entity `{}` (the store is empty)", entity.path))
    } else {
        Error::Usage(format!("unknown entity `{}`; did you mean: {}", entity.path, near.join(", ")))
    }
}

pub fn drilldown(
    store: &Store,
    entity: &EntityId,
    kind: DrillType,
    by: DrillBy,
    bucket: Granularity,
) -> Result<Table> {
    let tree = &store.tree;
    let bad_by = |allowed: &str| Error::Usage(format!("this drill-down supports --by {allowed}"));
    match kind {
        DrillType::Se => {
            let b = drill_se(tree, entity).map_err(|_| unknown(store, entity))?;
            let mut t;
            match by {
                DrillBy::Engine => {
                    t = Table::new(&["engine", "count"]);
                    for e in &b.engines {
                        t.rows.push(vec![Cell::Text(e.engine.clone()), Cell::Int(e.count)]);
                    }
                }
                DrillBy::Query | DrillBy::Term => {
                    let name = if by == DrillBy::Query { "query" } else { "term" };
                    t = Table::new(&["engine", name, "count"]);
                    for e in &b.engines {
                        let (items, overflow) =
                            if by == DrillBy::Query { (&e.queries, e.query_overflow) } else { (&e.terms, e.term_overflow) };
                        for c in items {
                            t.rows.push(vec![Cell::Text(e.engine.clone()), Cell::Text(c.key.clone()), Cell::Int(c.count)]);
                        }
                        if overflow > 0 {
                            t.rows.push(vec![
                                Cell::Text(e.engine.clone()),
                                Cell::Text(OVERFLOW_KEY.into()),
                                Cell::Int(overflow),
                            ]);
                        }
                    }
                }
                _ => return Err(bad_by("engine, query or term")),
            }
            Ok(t)
        }
        DrillType::Bl => {
            let b = drill_bl(tree, entity, bucket).map_err(|_| unknown(store, entity))?;
            match by {
                DrillBy::Referer => {
                    let mut t = Table::new(&["referer", "is_url", "count"]);
                    for r in b.referers.iter().chain(&b.overflow) {
                        t.rows.push(vec![Cell::Text(r.url.clone()), Cell::Bool(!r.non_url), Cell::Int(r.count)]);
                    }
                    Ok(t)
                }
                DrillBy::Time => {
                    let mut points = std::collections::BTreeMap::new();
                    for r in b.referers.iter().chain(&b.overflow) {
                        for p in &r.series.points {
                            *points.entry(p.start).or_insert(0u64) += p.count;
                        }
                    }
                    let mut t = Table::new(&["start", "count"]);
                    for (start, count) in points {
                        t.rows.push(vec![Cell::Text(start.to_string()), Cell::Int(count)]);
                    }
                    Ok(t)
                }
                _ => Err(bad_by("referer or time")),
            }
        }
        DrillType::Da => {
            let s = drill_da(tree, entity, bucket).map_err(|_| unknown(store, entity))?;
            if by != DrillBy::Time {
                return Err(bad_by("time"));
            }
            let mut t = Table::new(&["start", "count"]);
            series_rows(&mut t, &s);
            Ok(t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AnalysisConfig;
    use crate::ingest::Analyzer;

    const SAMPLES: &str = include_str!("../tests/fixtures/samples.log");

    fn sample_store() -> Store {
        Analyzer::new(AnalysisConfig::default()).unwrap().analyze_text("samples.log", SAMPLES)
    }

    fn opts() -> ReportOptions {
        ReportOptions { precision: 2, ..Default::default() }
    }

    #[test]
    fn grouping() {
        assert_eq!(Locale::Paper.int(10000), "10.000");
        assert_eq!(Locale::Paper.int(1234567), "1.234.567");
        assert_eq!(Locale::Paper.int(999), "999");
        assert_eq!(Locale::Plain.int(10000), "10000");
    }

    #[test]
    fn empty_store_has_header_only() {
        let store = Store::new(AnalysisConfig::default());
        let t = render_report(&store, &opts(), Format::Table);
        assert_eq!(t.lines().count(), 1);
        assert!(t.starts_with("Entity  URL  D_se (I_se)"));
        assert_eq!(render_report(&store, &opts(), Format::Json).trim(), "[]");
        assert_eq!(render_report(&store, &opts(), Format::Csv).lines().count(), 1);
    }

    #[test]
    fn site_row() {
        let store = sample_store();
        let o = ReportOptions { level: Level::Site, ..opts() };
        let t = render_report(&store, &o, Format::Table);
        assert_eq!(t.lines().nth(1).unwrap(), "Site    /    1 (0.33)     1 (0.33)     1 (0.33)     3");
        let rows: Vec<JsonRow> = serde_json::from_str(&render_report(&store, &o, Format::Json)).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].d_total, rows[0].i_se), (3, Some(0.33)));
    }

    #[test]
    fn levels_and_depth() {
        let store = sample_store();
        let pages = report_rows(&store, &ReportOptions { level: Level::Page, ..opts() });
        assert_eq!(pages.len(), 3);
        let shallow = report_rows(&store, &ReportOptions { max_depth: Some(1), ..opts() });
        assert!(shallow.iter().all(|r| r.entity.depth() <= 1));
        assert_eq!(shallow.len(), 4);
    }

    #[test]
    fn csv_matches_json() {
        let store = sample_store();
        let rows: Vec<JsonRow> = serde_json::from_str(&render_report(&store, &opts(), Format::Json)).unwrap();
        let csv_text = render_report(&store, &opts(), Format::Csv);
        let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
        let parsed: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(parsed.len(), rows.len());
        for (rec, row) in parsed.iter().zip(&rows) {
            assert_eq!(&rec[0], row.entity);
            assert_eq!(rec[5].parse::<u64>().unwrap(), row.d_total);
            assert_eq!(rec[6].parse::<f64>().ok(), row.i_se);
        }
    }

    #[test]
    fn drill_query() {
        let store = sample_store();
        let t = drilldown(&store, &EntityId::site(), DrillType::Se, DrillBy::Query, Granularity::Month).unwrap();
        assert_eq!(
            t.rows,
            vec![vec![Cell::Text("google".into()), Cell::Text(r#"+"russische Frauen""#.into()), Cell::Int(1)]]
        );
        let text = t.render(Format::Table, Locale::Plain);
        assert_eq!(text.lines().nth(1).unwrap(), r#"google  +"russische Frauen"  1"#);
    }

    #[test]
    fn drill_without_backlinks_is_empty() {
        let store = sample_store();
        let t = drilldown(&store, &EntityId::parse("/index.html"), DrillType::Bl, DrillBy::Referer, Granularity::Day)
            .unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.render(Format::Json, Locale::Plain).trim(), "[]");
    }

    #[test]
    fn unknown_entity_suggests() {
        let store = sample_store();
        let err = drilldown(&store, &EntityId::parse("/index.htm"), DrillType::Da, DrillBy::Time, Granularity::Day)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("did you mean: /index.html"), "{msg}");
        assert_eq!(err.exit_code(), crate::error::exit::USAGE);
    }

    #[test]
    fn wrong_by_is_usage_error() {
        let store = sample_store();
        assert!(drilldown(&store, &EntityId::site(), DrillType::Da, DrillBy::Engine, Granularity::Day).is_err());
        assert!(drilldown(&store, &EntityId::site(), DrillType::Se, DrillBy::Time, Granularity::Day).is_err());
    }

    #[test]
    fn sorted_and_limited() {
        let store = sample_store();
        let o = ReportOptions { sort: Some(RankKey::DTotal), limit: Some(2), ..opts() };
        let rows = report_rows(&store, &o);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].entity, EntityId::site());
        assert!(rows[0].stats.d_total >= rows[1].stats.d_total);
    }
}
