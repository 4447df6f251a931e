//! Index search against an independent brute-force implementation.

use std::collections::BTreeSet;

use adma_core::index::FacetRecord;
use adma_core::{
    BBox, EntityId, Geo, LogicalPath, MetadataDoc, Mode, Privilege, QueryFilter, SemanticIndex, TimeRange,
};
use proptest::prelude::*;

/// Reference feature-hashing embedder written from the rule, not the crate.
fn reference_embed(text: &str) -> Vec<f64> {
    let mut counts = [0i64; 256];
    let lower = text.to_lowercase();
    for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in token.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        counts[(h % 256) as usize] += if h >> 63 == 0 { 1 } else { -1 };
    }
    let norm = (counts.iter().map(|c| (c * c) as f64).sum::<f64>()).sqrt();
    counts.iter().map(|&c| if norm == 0.0 { 0.0 } else { c as f64 / norm }).collect()
}

fn reference_matches(f: &QueryFilter, d: &MetadataDoc) -> bool {
    f.mode.is_none_or(|m| m == d.mode)
        && f.format.as_ref().is_none_or(|x| *x == d.format)
        && f.category.as_ref().is_none_or(|x| *x == d.category)
        && f.labels.as_ref().is_none_or(|l| l.is_empty() || l.iter().any(|x| d.labels.contains(x)))
        && f.privilege.is_none_or(|p| p == d.privilege)
        && f.realtime.is_none_or(|r| r == d.realtime)
        && f.time_range.is_none_or(|q| d.time_range.is_some_and(|t| t.start <= q.end && q.start <= t.end))
        && f.spatial_bbox.is_none_or(|q| match d.geo {
            None => false,
            Some(Geo::Point { lat, lon }) => {
                q.min_lat <= lat && lat <= q.max_lat && q.min_lon <= lon && lon <= q.max_lon
            }
            Some(Geo::Bbox(b)) => {
                b.min_lat <= q.max_lat && q.min_lat <= b.max_lat && b.min_lon <= q.max_lon && q.min_lon <= b.max_lon
            }
        })
}

const WORDS: [&str; 8] = ["maize", "soil", "ndvi", "yield", "drought", "wheat", "2021", "plot"];

fn doc_strategy() -> impl Strategy<Value = MetadataDoc> {
    (
        0..2usize,
        0..6usize,
        0..4usize,
        proptest::collection::btree_set(0..4usize, 0..3),
        proptest::collection::vec(0..WORDS.len(), 0..4),
        any::<bool>(),
        any::<bool>(),
        proptest::option::of((0i64..100, 0i64..50)),
        proptest::option::of((-10.0f64..10.0, -10.0f64..10.0, any::<bool>())),
        any::<u32>(),
    )
        .prop_map(|(owner, name, mode, labels, desc, public, realtime, time, geo, salt)| {
            let owner = ["ann", "ben"][owner];
            let ext = ["csv", "tif", "py", "png", "txt", "shp"][name];
            let path = LogicalPath::parse(&format!("/{owner}/ag_data/f{salt}.{ext}")).unwrap();
            MetadataDoc {
                entity_id: EntityId::from_random_bytes((salt as u128 + ((name as u128) << 40)).to_be_bytes()),
                format: path.format(),
                path,
                mode: Mode::ALL[mode],
                is_folder: false,
                owner: owner.into(),
                category: ["soil", "imagery", ""][name % 3].into(),
                labels: labels.into_iter().map(|l| format!("l{l}")).collect(),
                privilege: if public { Privilege::Public } else { Privilege::Private },
                realtime,
                time_range: time.map(|(s, len)| TimeRange::new(s, s + len).unwrap()),
                geo: geo.map(|(lat, lon, point)| {
                    if point {
                        Geo::Point { lat, lon }
                    } else {
                        Geo::Bbox(BBox { min_lat: lat, min_lon: lon, max_lat: lat + 1.0, max_lon: lon + 1.0 })
                    }
                }),
                description: desc.into_iter().map(|w| WORDS[w]).collect::<Vec<_>>().join(" "),
                size_bytes: 0,
                content_hash: String::new(),
                created_at: 0,
                updated_at: 0,
                members: None,
            }
        })
}

fn filter_strategy() -> impl Strategy<Value = QueryFilter> {
    (
        proptest::option::of(0..4usize),
        proptest::option::of(0..3usize),
        proptest::option::of(proptest::collection::btree_set(0..4usize, 0..2)),
        proptest::option::of(any::<bool>()),
        proptest::option::of(any::<bool>()),
        proptest::option::of((0i64..100, 0i64..30)),
        proptest::option::of((-10.0f64..10.0, -10.0f64..10.0)),
    )
        .prop_map(|(mode, format, labels, public, realtime, time, bbox)| QueryFilter {
            mode: mode.map(|m| Mode::ALL[m]),
            format: format.map(|f| ["csv", "tif", "py"][f].into()),
            category: None,
            labels: labels.map(|s| s.into_iter().map(|l| format!("l{l}")).collect()),
            privilege: public.map(|p| if p { Privilege::Public } else { Privilege::Private }),
            realtime,
            time_range: time.map(|(s, len)| TimeRange::new(s, s + len).unwrap()),
            spatial_bbox: bbox.map(|(lat, lon)| BBox { min_lat: lat, min_lon: lon, max_lat: lat + 4.0, max_lon: lon + 4.0 }),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn search_equals_brute_force(
        docs in proptest::collection::vec(doc_strategy(), 0..60),
        filter in filter_strategy(),
        query in proptest::collection::vec(0..WORDS.len(), 0..4),
        k in 1..20usize,
        requester in 0..2usize,
    ) {
        let requester = ["ann", "ben"][requester];
        let mut index = SemanticIndex::default();
        let mut live = std::collections::BTreeMap::new();
        let mut taken = BTreeSet::new();
        for d in docs {
            if taken.insert(d.path.clone()) {
                index.upsert(&d);
                live.insert(d.entity_id, d);
            }
        }
        let query: String = query.into_iter().map(|w| WORDS[w]).collect::<Vec<_>>().join(" ");
        let q = reference_embed(&query);
        let mut expected: Vec<(f64, String, EntityId)> = live
            .values()
            .filter(|d| (d.owner == requester || d.privilege == Privilege::Public) && reference_matches(&filter, d))
            .map(|d| {
                let v = reference_embed(&adma_core::metadata_to_text(d));
                let sim: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                (sim, d.path.as_str().to_string(), d.entity_id)
            })
            .collect();
        expected.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        expected.truncate(k);
        let got = index.search(&query, &filter, k, requester).unwrap();
        prop_assert_eq!(got.len(), expected.len());
        for (hit, (sim, path, id)) in got.iter().zip(&expected) {
            prop_assert_eq!(hit.entity_id, *id);
            prop_assert_eq!(hit.path.as_str(), path.as_str());
            prop_assert_eq!(hit.similarity.to_bits(), sim.to_bits());
            prop_assert_eq!(&FacetRecord::from(&live[id]), &index.get(*id).unwrap().facets);
        }
    }
}
