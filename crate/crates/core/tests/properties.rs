use std::collections::BTreeMap;

use proptest::prelude::*;
use webentry_core::classifier::{tokenize_query, EngineRule, SearchQuery};
use webentry_core::drilldown::{drill_bl, drill_da, drill_se};
use webentry_core::entities::{normalize_path, EntityKind};
use webentry_core::indicators::rank_cmp;
use webentry_core::*;

fn access_strategy() -> impl Strategy<Value = AccessType> {
    prop_oneof![
        (0..3usize, 0..4usize).prop_map(|(e, q)| AccessType::SearchEngine {
            engine: ["google", "yahoo", "bing"][e].into(),
            query: SearchQuery {
                decoded: format!("query {q}"),
                terms: vec!["query".into(), q.to_string()],
            },
        }),
        (0..5usize).prop_map(|u| AccessType::Backlink { url: format!("ref{u}.org/p"), is_url: true }),
        Just(AccessType::Direct),
        Just(AccessType::Internal),
        Just(AccessType::Excluded(ExclusionReason::Status)),
    ]
}

fn entry_strategy() -> impl Strategy<Value = ClassifiedEntry> {
    let paths = prop::sample::select(vec![
        "/irs/article.htm",
        "/irs/",
        "/irs/vol1/a.pdf",
        "/irs/vol1/b.pdf",
        "/about.htm",
        "/",
        "/x/y/z/deep.htm",
    ]);
    (paths, access_strategy(), 1u8..29, 0u8..24, prop::sample::select(vec![-300i16, 0, 120]))
        .prop_map(|(path, access, day, hour, off)| ClassifiedEntry {
            path: path.into(),
            time: LogTime {
                date: CivilDate::new(2002, if day % 2 == 0 { 7 } else { 8 }, day).unwrap(),
                hour,
                minute: 0,
                second: 0,
                offset_minutes: off,
            },
            access,
        })
}

fn build(entries: &[ClassifiedEntry]) -> EntityTree {
    let mut t = EntityTree::new("fp");
    for e in entries {
        t.accumulate(e);
    }
    t
}

/// Independent normalizer: resolves segments with a stack over the
/// already-split path.
fn oracle_normalize(raw: &str) -> String {
    let cut = raw.find(['?', '#']).unwrap_or(raw.len());
    let p = &raw[..cut];
    let mut stack: Vec<String> = Vec::new();
    let parts: Vec<&str> = p.split('/').collect();
    for part in &parts {
        if *part == ".." {
            stack.pop();
        } else if !part.is_empty() && *part != "." {
            stack.push(part.to_string());
        }
    }
    let last = parts.last().copied().unwrap_or("");
    let dir = last.is_empty() || last == "." || last == "..";
    let mut out = String::new();
    for s in &stack {
        out += "/";
        out += s;
    }
    if dir {
        out += "/index";
    }
    out
}

proptest! {
    #[test]
    fn normalization_matches_oracle(segs in prop::collection::vec(prop::sample::select(vec!["a", "b", ".", "..", "", "c.htm"]), 0..8),
                                    query in prop::option::of("[a-z=&]{0,6}")) {
        let mut raw = String::from("/");
        raw += &segs.join("/");
        if let Some(q) = query {
            raw += "?";
            raw += &q;
        }
        let n = normalize_path(&raw);
        prop_assert_eq!(&n.path, &oracle_normalize(&raw));
        // Idempotent.
        prop_assert_eq!(normalize_path(&n.path).path, n.path);
    }

    #[test]
    fn partition_and_rollup(entries in prop::collection::vec(entry_strategy(), 0..200)) {
        let tree = build(&entries);
        for (id, node) in tree.iter() {
            prop_assert!(node.stats.is_partitioned());
            if id.kind != EntityKind::Page {
                let mut sum = EntityStats::default();
                for (_, child) in tree.children(id) {
                    sum.add(&child.stats);
                }
                prop_assert_eq!(sum, node.stats, "{}", id);
            }
        }
        let site = tree.site_stats();
        prop_assert_eq!(site.d_total + site.d_internal + site.d_excluded, entries.len() as u64);
    }

    #[test]
    fn brute_force_recount(entries in prop::collection::vec(entry_strategy(), 0..300)) {
        let tree = build(&entries);
        // Naive recount: for each entity, scan every entry.
        for (id, node) in tree.iter() {
            let mut expect = EntityStats::default();
            for e in &entries {
                let target = entity_of(&e.path);
                if target.page == *id || target.ancestors.contains(id) {
                    expect.record(&e.access);
                }
            }
            prop_assert_eq!(expect, node.stats);
        }
    }

    #[test]
    fn order_invariance(entries in prop::collection::vec(entry_strategy(), 0..150), seed in any::<u64>()) {
        let mut shuffled = entries.clone();
        let mut s = seed | 1;
        for i in (1..shuffled.len()).rev() {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            shuffled.swap(i, (s % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(build(&entries), build(&shuffled));
    }

    #[test]
    fn merge_is_commutative_monoid(a in prop::collection::vec(entry_strategy(), 0..80),
                                   b in prop::collection::vec(entry_strategy(), 0..80),
                                   c in prop::collection::vec(entry_strategy(), 0..80)) {
        let (ta, tb, tc) = (build(&a), build(&b), build(&c));
        let ab = ta.clone().merge(tb.clone()).unwrap();
        prop_assert_eq!(&ab, &tb.clone().merge(ta.clone()).unwrap());
        let left = ab.merge(tc.clone()).unwrap();
        let right = ta.clone().merge(tb.merge(tc).unwrap()).unwrap();
        prop_assert_eq!(&left, &right);
        let whole: Vec<_> = a.iter().chain(&b).chain(&c).cloned().collect();
        prop_assert_eq!(&left, &build(&whole));
        prop_assert_eq!(ta.clone().merge(EntityTree::new("fp")).unwrap(), ta);
    }

    #[test]
    fn drilldown_conservation(entries in prop::collection::vec(entry_strategy(), 0..200),
                              gran in prop::sample::select(vec![Granularity::Day, Granularity::Week, Granularity::Month]),
                              top_k in prop::option::of(1usize..4)) {
        let mut tree = build(&entries);
        if let Some(k) = top_k {
            tree.compact(k);
        }
        for (id, node) in tree.iter() {
            let se = drill_se(&tree, id).unwrap();
            prop_assert_eq!(se.engines.iter().map(|e| e.count).sum::<u64>(), node.stats.d_se);
            for e in &se.engines {
                prop_assert_eq!(e.queries.iter().map(|q| q.count).sum::<u64>() + e.query_overflow, e.count);
            }
            let bl = drill_bl(&tree, id, gran).unwrap();
            let mut sum = 0;
            for r in bl.referers.iter().chain(bl.overflow.as_ref()) {
                prop_assert_eq!(r.series.total(), r.count);
                prop_assert!(r.series.points.windows(2).all(|w| w[0].start < w[1].start));
                prop_assert!(r.series.points.iter().all(|p| p.count > 0));
                sum += r.count;
            }
            prop_assert_eq!(sum, node.stats.d_bl);
            let da = drill_da(&tree, id, gran).unwrap();
            prop_assert_eq!(da.total(), node.stats.d_da);
        }
    }

    #[test]
    fn indicators_sum_to_one(se in 0u64..1_000_000, bl in 0u64..1_000_000, da in 0u64..1_000_000, k in 1u64..1000) {
        let stats = EntityStats::new(se, bl, da);
        let set = indicators(&stats);
        match set.values {
            None => prop_assert_eq!(stats.d_total, 0),
            Some(v) => {
                prop_assert_eq!(v.i_se.num + v.i_bl.num + v.i_da.num, v.i_se.den);
                for r in [v.i_se, v.i_bl, v.i_da] {
                    prop_assert!(r.num <= r.den);
                }
                let scaled = indicators(&EntityStats::new(se * k, bl * k, da * k));
                prop_assert_eq!(scaled, IndicatorSet { d_total: stats.d_total * k, ..set });
                prop_assert_eq!(scaled.values, set.values);
            }
        }
    }

    #[test]
    fn ranking_matches_full_sort(entries in prop::collection::vec(entry_strategy(), 0..200),
                                 key in prop::sample::select(vec![RankKey::ISe, RankKey::IBl, RankKey::IDa, RankKey::DSe, RankKey::DTotal]),
                                 min_total in 1u64..6) {
        let tree = build(&entries);
        let ranked = rank_entities(&tree, key, min_total, None);
        // Oracle: float keys with explicit ties resolved the same way.
        let mut all: Vec<(EntityId, EntityStats)> = tree.iter().map(|(i, n)| (i.clone(), n.stats)).collect();
        let value = |s: &EntityStats| -> (u64, u64) {
            match key {
                RankKey::ISe => (s.d_se, s.d_total),
                RankKey::IBl => (s.d_bl, s.d_total),
                RankKey::IDa => (s.d_da, s.d_total),
                RankKey::DSe => (s.d_se, 1),
                RankKey::DBl => (s.d_bl, 1),
                RankKey::DDa => (s.d_da, 1),
                RankKey::DTotal => (s.d_total, 1),
            }
        };
        all.sort_by(|a, b| {
            let (an, ad) = value(&a.1);
            let (bn, bd) = value(&b.1);
            ((bn as u128) * (ad as u128)).cmp(&((an as u128) * (bd as u128)))
                .then(b.1.d_total.cmp(&a.1.d_total))
                .then(a.0.path.cmp(&b.0.path))
                .then(a.0.kind.cmp(&b.0.kind))
        });
        let expect: Vec<EntityId> = all.iter().filter(|(_, s)| s.d_total >= min_total).map(|(i, _)| i.clone()).collect();
        let got: Vec<EntityId> = ranked.iter().map(|r| r.entity.clone()).collect();
        prop_assert_eq!(&got, &expect);
        // Filtering never reorders: the filtered list is a subsequence of the unfiltered one.
        let unfiltered: Vec<EntityId> = rank_entities(&tree, key, 1, None).into_iter().map(|r| r.entity).collect();
        let mut it = unfiltered.iter();
        prop_assert!(got.iter().all(|g| it.any(|u| u == g)));
        let _ = rank_cmp;
    }

    #[test]
    fn ranking_scale_invariant(counts in prop::collection::vec((0u64..50, 0u64..50, 1u64..50), 1..12), k in 2u64..5) {
        let ids: Vec<EntityId> = (0..counts.len()).map(|i| EntityId { path: format!("/p{i}.htm"), kind: EntityKind::Page }).collect();
        for key in [RankKey::ISe, RankKey::IBl, RankKey::IDa, RankKey::DTotal] {
            let order = |scale: u64| {
                let mut v: Vec<(EntityId, EntityStats)> = ids.iter().cloned().zip(counts.iter().map(|(a, b, c)| EntityStats::new(a * scale, b * scale, c * scale))).collect();
                v.sort_by(|a, b| rank_cmp(key, (&a.0, &a.1), (&b.0, &b.1)));
                v.into_iter().map(|(i, _)| i).collect::<Vec<_>>()
            };
            prop_assert_eq!(order(1), order(k));
        }
    }

    #[test]
    fn query_terms_round_trip(terms in prop::collection::vec(
        prop_oneof![
            "[a-zA-Z0-9äöüß+&=%/:.-]{1,10}".prop_map(String::from),
            "[a-z]{1,6} [a-z]{1,6}".prop_map(|p| format!("\"{p}\"")),
        ], 1..6)) {
        let joined = terms.join(" ");
        let encoded: String = form_urlencoded::byte_serialize(joined.as_bytes()).collect();
        let referer = format!("http://www.google.de/search?hl=de&q={encoded}&ie=UTF-8");
        let rule = EngineRule::new("google", "google.", None, &["q"]);
        let q = extract_query_terms(&referer, &rule);
        prop_assert_eq!(&q.decoded, &joined);
        prop_assert_eq!(&q.terms, &terms);
        prop_assert_eq!(tokenize_query(&joined), terms);
    }

    #[test]
    fn parse_roundtrip(client in "[0-9]{1,3}\\.[0-9]{1,3}\\.[0-9]{1,3}\\.[0-9]{1,3}",
                       path in "/[a-zA-Z0-9_./~%-]{0,30}",
                       status in 100u16..600,
                       bytes in prop::option::of(0u64..10_000_000),
                       referer in prop::option::of("https?://[a-z.]{1,12}/[a-zA-Z0-9?=&%+\"\\\\]{0,20}"),
                       ua in prop::option::of("[ -~]{1,40}")) {
        let ua = ua.filter(|u| u.trim() != "-" && !u.trim().is_empty() && u.trim() == u);
        let esc = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let line = format!(
            "{client} - - [20/Jul/2002:22:50:55 +0200] \"GET {path} HTTP/1.1\" {status} {} \"{}\" \"{}\"",
            bytes.map_or("-".into(), |b| b.to_string()),
            referer.as_deref().map_or("-".into(), esc),
            ua.as_deref().map_or("-".into(), esc),
        );
        let r = parse_line(&line, 42).unwrap();
        prop_assert_eq!(r.status, status);
        prop_assert_eq!(r.bytes, bytes);
        prop_assert_eq!(r.referer.as_deref(), referer.as_deref());
        prop_assert_eq!(r.user_agent.as_deref(), ua.as_deref());
        prop_assert_eq!(&r.path, &path);
        prop_assert_eq!(r.to_combined(), line);
    }

    #[test]
    fn parse_is_total(lines in prop::collection::vec("[ -~]{0,80}", 0..50)) {
        let text = lines.join("\n");
        let outcomes: Vec<ParseOutcome> = text.split('\n').enumerate().map(|(i, l)| parse_line(l, i as u64 + 1)).collect();
        let ok = outcomes.iter().filter(|o| o.is_ok()).count();
        prop_assert_eq!(ok + (outcomes.len() - ok), text.split('\n').count());
        for (i, o) in outcomes.iter().enumerate() {
            if let Err(e) = o {
                prop_assert_eq!(e.line_number, i as u64 + 1);
            }
        }
    }
}

#[test]
fn classification_is_an_exhaustive_partition() {
    let policy = CountingPolicy { internal_hosts: vec!["www.example.org".into()], ..Default::default() };
    let reg = default_registry();
    let referers = ["-", "http://www.example.org/x", "http://www.google.de/search?q=a", "http://other.net/", "not a url"];
    let statuses = [200u16, 304, 404];
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for r in referers {
        for s in statuses {
            let line = format!("1.2.3.4 - - [20/Jul/2002:22:50:55 +0200] \"GET /a HTTP/1.1\" {s} 1 \"{r}\" \"ua\"");
            let rec = parse_line(&line, 1).unwrap();
            let kind = match classify(&rec, &policy, &reg) {
                AccessType::SearchEngine { .. } => "se",
                AccessType::Backlink { .. } => "bl",
                AccessType::Direct => "da",
                AccessType::Internal => "internal",
                AccessType::Excluded(_) => "excluded",
            };
            *seen.entry(kind).or_default() += 1;
        }
    }
    assert_eq!(seen["excluded"], 5);
    assert_eq!(seen["da"], 2);
    assert_eq!(seen["internal"], 2);
    assert_eq!(seen["se"], 2);
    assert_eq!(seen["bl"], 4);
}
