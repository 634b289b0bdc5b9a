//! Synthetic combined-format logs with ground truth.
//!
//! A generator spec (TOML) declares entities and how their entries split
//! across entry types; the generator writes a shuffled log and a truth
//! document with a label for every line and the counters every entity
//! should end up with. The truth side is computed here, from what was
//! generated, without going through the analysis code.
//!
//! ```toml
//! seed = 7
//! start = "2002-07-01"       # first day (log-local)
//! days = 30
//! offsets = ["+0200"]        # UTC offsets to draw from
//! internal_host = "www.example.org"
//! backlinks = ["http://www.ub.example.edu/links.htm"]
//!
//! [[engines]]
//! id = "google"                          # engine id the registry reports
//! referer = "http://www.google.de/search?q="   # query is appended, form-encoded
//! queries = ["open access", "+\"russische Frauen\""]
//!
//! [[entities]]
//! path = "/irs/article.htm"
//! count = 10000
//! mix = [0.2, 0.7, 0.1]      # search engine, backlink, direct; must sum to 1
//! # counts = [2000, 7000, 1000]   # or exact counts instead of count + mix
//! internal = 0               # extra lines referred from internal_host
//! excluded = 0               # extra lines the default policy excludes
//! malformed = 0              # extra unparseable lines
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const DEFAULT_INTERNAL_HOST: &str = "www.example.org";
const MIX_TOLERANCE: f64 = 1e-9;
const MONTHS: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];
const AGENTS: [&str; 4] = [
    "Mozilla/4.0 (compatible; MSIE 6.0; Windows NT 5.1)",
    "Mozilla/5.0 (X11; Linux x86_64; rv:109.0) Gecko/20100101 Firefox/115.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/605.1.15 Safari/605.1.15",
    "Opera/9.80 (Windows NT 6.1) Presto/2.12.388 Version/12.16",
];

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("{0}")]
    Parse(String),
    #[error("entity `{path}`: mix sums to {sum}, not 1")]
    MixSum { path: String, sum: f64 },
    #[error("entity `{path}`: {msg}")]
    Entity { path: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    pub id: String,
    pub referer: String,
    pub queries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntitySpec {
    pub path: String,
    pub count: Option<u64>,
    pub mix: Option<[f64; 3]>,
    pub counts: Option<[u64; 3]>,
    pub internal: u64,
    pub excluded: u64,
    pub malformed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub seed: u64,
    pub start: String,
    pub days: u32,
    pub offsets: Vec<String>,
    pub internal_host: String,
    pub engines: Vec<EngineSpec>,
    pub backlinks: Vec<String>,
    pub entities: Vec<EntitySpec>,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            start: "2002-07-01".into(),
            days: 30,
            offsets: vec!["+0200".into()],
            internal_host: DEFAULT_INTERNAL_HOST.into(),
            engines: vec![EngineSpec {
                id: "google".into(),
                referer: "http://www.google.de/search?q=".into(),
                queries: vec!["open access".into()],
            }],
            backlinks: vec!["http://www.ub.example.edu/links.htm".into()],
            entities: Vec::new(),
        }
    }
}

/// Counters of one entity, as the analysis should report them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TruthCounts {
    pub d_se: u64,
    pub d_bl: u64,
    pub d_da: u64,
    pub d_total: u64,
    pub d_internal: u64,
    pub d_excluded: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    SearchEngine,
    Backlink,
    Direct,
    Internal,
    Excluded,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineLabel {
    pub line: u64,
    pub access: Access,
    /// The page the line counts for; absent for malformed lines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    /// Log-local date.
    pub date: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    /// The referring URL without its scheme, host lowercased.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub referer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub internal_host: String,
    pub lines: u64,
    pub counted: u64,
    pub internal: u64,
    pub excluded: u64,
    pub malformed: u64,
    /// Every page, directory and the site (`/`).
    pub entities: BTreeMap<String, TruthCounts>,
    /// Empty unless requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<LineLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Day {
    y: i32,
    m: u32,
    d: u32,
}

fn month_len(y: i32, m: u32) -> u32 {
    match m {
        2 if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    }
}

impl Day {
    fn parse(s: &str) -> Option<Day> {
        let mut it = s.split('-');
        let y: i32 = it.next()?.parse().ok()?;
        let m: u32 = it.next()?.parse().ok()?;
        let d: u32 = it.next()?.parse().ok()?;
        if it.next().is_some() || !(1..=12).contains(&m) || d == 0 || d > month_len(y, m) || !(1..=9999).contains(&y) {
            return None;
        }
        Some(Day { y, m, d })
    }

    fn next(self) -> Day {
        if self.d < month_len(self.y, self.m) {
            Day { d: self.d + 1, ..self }
        } else if self.m < 12 {
            Day { m: self.m + 1, d: 1, ..self }
        } else {
            Day { y: self.y + 1, m: 1, d: 1 }
        }
    }

    fn iso(self) -> String {
        format!("{:04}-{:02}-{:02}", self.y, self.m, self.d)
    }
}

fn valid_offset(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 5
        && (b[0] == b'+' || b[0] == b'-')
        && b[1..].iter().all(u8::is_ascii_digit)
        && s[3..].parse::<u32>().is_ok_and(|m| m < 60)
}

/// Splits `total` by `weights` into integers that sum to `total`, giving
/// leftover units to the largest fractional parts (earlier index on ties).
pub fn largest_remainder(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned) as usize) {
        out[i] += 1;
    }
    out
}

/// The generator's own reading of a referer URL: scheme dropped, host part
/// lowercased, `/` for an empty path.
fn referer_key(url: &str) -> String {
    let rest = url.split_once("://").map_or(url, |(_, r)| r);
    let rest = rest.split('#').next().unwrap_or(rest);
    let cut = rest.find(['/', '?']).unwrap_or(rest.len());
    let (host, tail) = rest.split_at(cut);
    let host = host.rsplit('@').next().unwrap_or(host).to_ascii_lowercase();
    if tail.starts_with('?') || tail.is_empty() {
        format!("{host}/{tail}")
    } else {
        format!("{host}{tail}")
    }
}

/// The page a request path counts for, and the directories above it.
fn rollup(path: &str) -> Vec<String> {
    let page = if path.ends_with('/') { format!("{path}index") } else { path.to_string() };
    let mut out = vec![page.clone()];
    let idx: Vec<usize> = page.match_indices('/').map(|(i, _)| i).collect();
    for i in idx.into_iter().rev() {
        out.push(page[..=i].to_string());
    }
    out
}

#[derive(Clone, Copy)]
enum Slot {
    Se,
    Bl,
    Da,
    Internal,
    Excluded,
    Malformed,
}

struct Resolved {
    path: String,
    slots: [u64; 6],
}

impl GenSpec {
    pub fn from_toml(text: &str) -> Result<Self, SpecError> {
        toml::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))
    }

    fn resolve(&self) -> Result<Vec<Resolved>, SpecError> {
        if Day::parse(&self.start).is_none() {
            return Err(SpecError::Invalid(format!("start `{}` is not a YYYY-MM-DD date", self.start)));
        }
        if self.days == 0 {
            return Err(SpecError::Invalid("days must be at least 1".into()));
        }
        if self.offsets.is_empty() || !self.offsets.iter().all(|o| valid_offset(o)) {
            return Err(SpecError::Invalid("offsets must be non-empty and look like +hhmm".into()));
        }
        if self.entities.is_empty() {
            return Err(SpecError::Invalid("no entities declared".into()));
        }
        let mut out = Vec::with_capacity(self.entities.len());
        for e in &self.entities {
            let err = |msg: &str| SpecError::Entity { path: e.path.clone(), msg: msg.into() };
            if !e.path.starts_with('/') || e.path.contains("//") || e.path.split('/').any(|s| s == "." || s == "..") {
                return Err(err("path must be absolute and free of empty, `.` or `..` segments"));
            }
            if e.path.contains(['?', '#', ' ', '"', '%']) {
                return Err(err("path may not contain `?`, `#`, `%`, quotes or spaces"));
            }
            let [se, bl, da] = match (e.mix, e.counts) {
                (Some(mix), None) => {
                    let count = e.count.ok_or_else(|| err("`mix` needs `count`"))?;
                    if mix.iter().any(|m| !m.is_finite() || *m < 0.0) {
                        return Err(err("mix shares must be non-negative"));
                    }
                    let sum: f64 = mix.iter().sum();
                    if (sum - 1.0).abs() > MIX_TOLERANCE {
                        return Err(SpecError::MixSum { path: e.path.clone(), sum });
                    }
                    let v = largest_remainder(count, &mix);
                    [v[0], v[1], v[2]]
                }
                (None, Some(c)) => {
                    if e.count.is_some_and(|n| n != c.iter().sum::<u64>()) {
                        return Err(err("`count` disagrees with `counts`"));
                    }
                    c
                }
                (Some(_), Some(_)) => return Err(err("give either `mix` or `counts`, not both")),
                (None, None) if e.count.unwrap_or(0) == 0 => [0, 0, 0],
                (None, None) => return Err(err("`count` needs `mix`")),
            };
            out.push(Resolved { path: e.path.clone(), slots: [se, bl, da, e.internal, e.excluded, e.malformed] });
        }
        if out.iter().any(|r| r.slots[0] > 0)
            && (self.engines.is_empty() || self.engines.iter().any(|g| g.queries.is_empty()))
        {
            return Err(SpecError::Invalid("search-engine entries need engines, each with queries".into()));
        }
        if out.iter().any(|r| r.slots[1] > 0) && self.backlinks.is_empty() {
            return Err(SpecError::Invalid("backlink entries need a backlink pool".into()));
        }
        if out.iter().any(|r| r.slots[3] > 0) && self.internal_host.is_empty() {
            return Err(SpecError::Invalid("internal entries need internal_host".into()));
        }
        Ok(out)
    }

    /// Total lines the spec produces.
    pub fn line_count(&self) -> Result<u64, SpecError> {
        Ok(self.resolve()?.iter().map(|r| r.slots.iter().sum::<u64>()).sum())
    }

    /// A random but valid spec producing exactly `lines` lines.
    pub fn random(seed: u64, lines: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_5bec);
        let dirs = ["/", "/irs/", "/irs/2002/", "/irs/2003/", "/lib/", "/lib/a/b/", "/~wumsta/ubach/", "/docs/"];
        let names = ["article.htm", "index.html", "paper.pdf", "fuss.htm", "vol1.pdf", "abstract.html", "data.csv"];
        let n_entities = rng.random_range(1..=lines.clamp(1, 40)) as usize;
        let mut paths: Vec<String> = Vec::new();
        while paths.len() < n_entities {
            let dir = dirs[rng.random_range(0..dirs.len())];
            let p = if rng.random_bool(0.08) {
                dir.to_string()
            } else {
                format!("{dir}{}{}", rng.random_range(0..6), names[rng.random_range(0..names.len())])
            };
            if !paths.contains(&p) {
                paths.push(p);
            }
        }
        let weights: Vec<f64> = paths.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let per_entity = largest_remainder(lines, &weights);
        let entities = paths
            .into_iter()
            .zip(per_entity)
            .map(|(path, n)| {
                let w: Vec<f64> = (0..6)
                    .map(|i| if i >= 3 { rng.random_range(0.0..0.15) } else { rng.random_range(0.0..1.0) })
                    .collect();
                let s = largest_remainder(n, &w);
                EntitySpec {
                    path,
                    counts: Some([s[0], s[1], s[2]]),
                    internal: s[3],
                    excluded: s[4],
                    malformed: s[5],
                    ..Default::default()
                }
            })
            .collect();
        let words = [
            "open", "access", "usage", "impact", "\"russische Frauen\"", "+\"web entry\"", "Universität", "R&D",
            "100%", "a+b", "x=y", "log", "analysis", "-spam", "citation",
        ];
        let query = |rng: &mut ChaCha8Rng| {
            let k = rng.random_range(1..=3);
            (0..k).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
        };
        let engine_defs = [
            ("google", "http://www.google.de/search?hl=de&q="),
            ("google", "https://www.google.com/search?q="),
            ("yahoo", "http://search.yahoo.com/search?p="),
            ("bing", "https://www.bing.com/search?form=QBLH&q="),
            ("baidu", "http://www.baidu.com/s?wd="),
            ("yandex", "https://yandex.ru/search/?text="),
        ];
        let engines = engine_defs
            .iter()
            .map(|(id, referer)| EngineSpec {
                id: id.to_string(),
                referer: referer.to_string(),
                queries: (0..rng.random_range(1..12)).map(|_| query(&mut rng)).collect(),
            })
            .collect();
        let backlinks = (0..rng.random_range(1..60))
            .map(|i| match i % 4 {
                0 => format!("http://www.Site{i}.example.edu/links.htm"),
                1 => format!("https://blog{i}.example.net/post?id={i}"),
                2 => format!("http://library.example.com/list{i}/"),
                _ => format!("http://forum.example.org:8080/t/{i}#top"),
            })
            .collect();
        let offsets = ["+0200", "+0000", "-0500", "+0530"];
        GenSpec {
            seed,
            start: format!("{}-{:02}-{:02}", rng.random_range(1999..2024), rng.random_range(1..=12), rng.random_range(1..=28)),
            days: rng.random_range(1..120),
            offsets: offsets[..rng.random_range(1..=offsets.len())].iter().map(|s| s.to_string()).collect(),
            internal_host: DEFAULT_INTERNAL_HOST.into(),
            engines,
            backlinks,
            entities,
        }
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    // Skewed towards the front, like real referrer distributions.
    let u: f64 = rng.random();
    &items[((u * u) * items.len() as f64) as usize % items.len()]
}

fn encode_query(q: &str) -> String {
    form_urlencoded::byte_serialize(q.as_bytes()).collect()
}

/// Writes the log to `out` and returns the truth. Per-line labels are kept
/// only when `labels` is set.
pub fn generate<W: Write>(spec: &GenSpec, out: &mut W, labels: bool) -> Result<Truth, GenerateError> {
    let resolved = spec.resolve()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut days = Vec::with_capacity(spec.days as usize);
    let mut day = Day::parse(&spec.start).expect("validated");
    for _ in 0..spec.days {
        days.push(day);
        day = day.next();
    }

    let mut slots: Vec<(u32, Slot)> = Vec::new();
    for (i, r) in resolved.iter().enumerate() {
        let kinds = [Slot::Se, Slot::Bl, Slot::Da, Slot::Internal, Slot::Excluded, Slot::Malformed];
        for (k, n) in kinds.iter().zip(r.slots) {
            slots.extend(std::iter::repeat_n((i as u32, *k), n as usize));
        }
    }
    slots.shuffle(&mut rng);

    let mut truth = Truth { seed: spec.seed, internal_host: spec.internal_host.clone(), ..Truth::default() };
    let mut line = String::with_capacity(256);
    for (n, (entity, slot)) in slots.into_iter().enumerate() {
        let path = &resolved[entity as usize].path;
        let day = days[rng.random_range(0..days.len())];
        let offset = &spec.offsets[rng.random_range(0..spec.offsets.len())];
        let client = format!(
            "{}.{}.{}.{}",
            rng.random_range(1..224),
            rng.random_range(0..256),
            rng.random_range(0..256),
            rng.random_range(1..255)
        );
        let stamp = format!(
            "{:02}/{}/{:04}:{:02}:{:02}:{:02} {}",
            day.d,
            MONTHS[day.m as usize - 1],
            day.y,
            rng.random_range(0..24),
            rng.random_range(0..60),
            rng.random_range(0..60),
            offset
        );
        let agent = AGENTS[rng.random_range(0..AGENTS.len())];
        let mut label = LineLabel {
            line: n as u64 + 1,
            access: Access::Direct,
            entity: Some(rollup(path).swap_remove(0)),
            date: day.iso(),
            engine: None,
            query: None,
            referer: None,
        };
        let (method, status, referer) = match slot {
            Slot::Se => {
                let e = pick(&mut rng, &spec.engines);
                let q = pick(&mut rng, &e.queries).clone();
                label.access = Access::SearchEngine;
                label.engine = Some(e.id.clone());
                let url = format!("{}{}", e.referer, encode_query(&q));
                label.query = Some(q);
                ("GET", 200, url)
            }
            Slot::Bl => {
                let url = pick(&mut rng, &spec.backlinks).clone();
                label.access = Access::Backlink;
                label.referer = Some(referer_key(&url));
                ("GET", if rng.random_bool(0.1) { 304 } else { 200 }, url)
            }
            Slot::Da => ("GET", 200, "-".to_string()),
            Slot::Internal => {
                label.access = Access::Internal;
                ("GET", 200, format!("http://{}/nav/menu{}.htm", spec.internal_host, rng.random_range(0..5)))
            }
            Slot::Excluded => {
                label.access = Access::Excluded;
                let referer = if rng.random_bool(0.5) { "-".into() } else { pick(&mut rng, &spec.backlinks).clone() };
                match rng.random_range(0..3) {
                    0 => ("GET", 404, referer),
                    1 => ("POST", 200, referer),
                    _ => ("GET", 500, referer),
                }
            }
            Slot::Malformed => {
                label.access = Access::Malformed;
                label.entity = None;
                ("", 0, String::new())
            }
        };
        line.clear();
        if let Slot::Malformed = slot {
            match rng.random_range(0..5) {
                0 => {
                    let _ = write!(line, "garbage line {}", n + 1);
                }
                1 => {
                    let _ = write!(line, "{client} - - [99/Foo/2002:25:61:00 +0200] \"GET {path} HTTP/1.1\" 200 10 \"-\" \"{agent}\"");
                }
                2 => {
                    let _ = write!(line, "{client} - - [{stamp}] \"GET {path} HTTP/1.1\" OK 10 \"-\" \"{agent}\"");
                }
                3 => {
                    let _ = write!(line, "{client} - - [{stamp}] \"GET {path} HTTP/1.1 200 10");
                }
                _ => {
                    let _ = write!(line, "{client} - - [{stamp}] \"GET\" 200 10 \"-\" \"{agent}\"");
                }
            }
        } else {
            let bytes = if status == 304 { "-".to_string() } else { rng.random_range(200..90_000u32).to_string() };
            let _ = write!(line, "{client} - - [{stamp}] \"{method} {path} HTTP/1.1\" {status} {bytes} \"{referer}\" \"{agent}\"");
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
        tally(&mut truth, path, label.access);
        if labels {
            truth.labels.push(label);
        }
    }
    truth.lines = truth.counted + truth.internal + truth.excluded + truth.malformed;
    Ok(truth)
}

fn tally(truth: &mut Truth, path: &str, access: Access) {
    match access {
        Access::Malformed => {
            truth.malformed += 1;
            return;
        }
        Access::Internal => truth.internal += 1,
        Access::Excluded => truth.excluded += 1,
        _ => truth.counted += 1,
    }
    for id in rollup(path) {
        let c = truth.entities.entry(id).or_default();
        match access {
            Access::SearchEngine => c.d_se += 1,
            Access::Backlink => c.d_bl += 1,
            Access::Direct => c.d_da += 1,
            Access::Internal => c.d_internal += 1,
            Access::Excluded => c.d_excluded += 1,
            Access::Malformed => unreachable!(),
        }
        if matches!(access, Access::SearchEngine | Access::Backlink | Access::Direct) {
            c.d_total += 1;
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Generates into memory.
pub fn generate_string(spec: &GenSpec, labels: bool) -> Result<(String, Truth), SpecError> {
    let mut buf = Vec::new();
    let truth = generate(spec, &mut buf, labels).map_err(|e| match e {
        GenerateError::Spec(s) => s,
        GenerateError::Io(e) => unreachable!("writing to memory: {e}"),
    })?;
    Ok((String::from_utf8(buf).expect("generated text is utf-8"), truth))
}
