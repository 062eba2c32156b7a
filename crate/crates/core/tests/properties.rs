mod common;

use std::collections::{BTreeMap, HashSet};

use chrono::NaiveDate;
use proptest::prelude::*;

use episynth::event_graph::{apply_interval, validate_event_graph, GraphRules, RawEdge, RawEventNode, TimeInterval, TimeUnit};
use episynth::extract::{extract_json, parse_raw_event_graph};
use episynth::metrics::compute_retrieval_metrics;
use episynth::profile::{dedup_personas, PersonaAttribute};
use episynth::retrieval::{encode_embedding_file, EmbeddingRecord, RecordMeta, VectorIndex};
use episynth::stats::{compute_stats, Distribution};
use episynth::store::EpisodeStore;

fn arb_date() -> impl Strategy<Value = NaiveDate> {
    (1950i32..2050, 1u32..=12, 1u32..=28).prop_map(|(y, m, d)| NaiveDate::from_ymd_opt(y, m, d).unwrap())
}

fn arb_unit() -> impl Strategy<Value = TimeUnit> {
    prop::sample::select(TimeUnit::ALL.to_vec())
}

/// A valid chain-shaped graph: every child is one to 40 days after a parent
/// chosen among the earlier nodes.
fn arb_graph() -> impl Strategy<Value = Vec<RawEventNode>> {
    (
        (2012i32..2020, 1u32..=12, 1u32..=28),
        prop::collection::vec((any::<prop::sample::Index>(), 1u64..40, any::<bool>(), "[a-z ]{1,20}"), 4..10),
    )
        .prop_map(|((y, m, d), steps)| {
            let root = NaiveDate::from_ymd_opt(y, m, d).unwrap();
            let mut dates = vec![root];
            let mut nodes = vec![RawEventNode {
                id: "0".into(),
                event: "Start.".into(),
                date: root.format("%Y.%m.%d").to_string(),
                caused_by: None,
            }];
            for (i, (parent, gap, update, text)) in steps.into_iter().enumerate() {
                let parent = parent.index(dates.len());
                let date = dates[parent] + chrono::Days::new(gap);
                dates.push(date);
                nodes.push(RawEventNode {
                    id: (i + 1).to_string(),
                    event: format!("Event \"{text}\" {{}} [x]."),
                    date: date.format("%Y.%m.%d").to_string(),
                    caused_by: Some(RawEdge {
                        parent_id: parent.to_string(),
                        time_interval: format!("{gap} day"),
                        experience_op: if update { "update" } else { "add" }.into(),
                        experience: text,
                    }),
                });
            }
            nodes
        })
}

fn arb_persona() -> impl Strategy<Value = PersonaAttribute> {
    (
        prop::sample::select(vec!["Hobby", "Food"]),
        prop::sample::select(vec!["sport", "Sport", "dish"]),
        prop::sample::select(vec!["tennis", " Tennis", "sushi", "soup"]),
        "[a-z]{0,6}",
    )
        .prop_map(|(c, k, v, s)| PersonaAttribute {
            subject: "I".into(),
            category: c.into(),
            entity_key: k.into(),
            entity_value: v.into(),
            sentence: s,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_graphs_validate(graph in arb_graph()) {
        prop_assert!(validate_event_graph(&graph, &GraphRules::default()).is_empty());
    }

    #[test]
    fn event_graph_extraction_is_idempotent(graph in arb_graph(), prose in "[A-Za-z ,.]{0,40}") {
        let json = serde_json::to_string_pretty(&graph).unwrap();
        let text = format!("{prose}\n```json\n{json}\n```\n{prose}");
        let once = parse_raw_event_graph(&text).unwrap();
        prop_assert_eq!(&once, &graph);
        let again = parse_raw_event_graph(&serde_json::to_string(&once).unwrap()).unwrap();
        prop_assert_eq!(again, once);
        let value = extract_json(&text).unwrap();
        prop_assert_eq!(extract_json(&value.to_string()).unwrap(), value);
    }

    #[test]
    fn intervals_never_move_backwards(date in arb_date(), count in 0u32..500, unit in arb_unit()) {
        prop_assert!(apply_interval(date, TimeInterval::new(count, unit)) >= date);
    }

    #[test]
    fn day_steps_compose(date in arb_date(), a in 0u32..400, b in 0u32..400) {
        let step = |d, n| apply_interval(d, TimeInterval::new(n, TimeUnit::Day));
        prop_assert_eq!(step(step(date, a), b), step(date, a + b));
    }

    #[test]
    fn dedup_is_idempotent(mut attrs in prop::collection::vec(arb_persona(), 0..20)) {
        let original = attrs.clone();
        dedup_personas(&mut attrs);
        let once = attrs.clone();
        prop_assert_eq!(dedup_personas(&mut attrs), 0);
        prop_assert_eq!(&attrs, &once);
        let keys: HashSet<_> = once
            .iter()
            .map(|a| (a.category.clone(), a.entity_key.to_lowercase(), a.entity_value.trim().to_lowercase()))
            .collect();
        prop_assert_eq!(keys.len(), once.len());
        let mut rest = original.iter();
        for kept in &once {
            prop_assert!(rest.any(|a| a == kept), "kept attributes are not a subsequence");
        }
    }

    #[test]
    fn distribution_ratios_sum_to_one(counts in prop::collection::btree_map("[a-e]", 0usize..50, 0..5)) {
        let d = Distribution::from_counts(counts.clone());
        let sum: f64 = d.ratios.values().sum();
        if counts.values().sum::<usize>() > 0 {
            prop_assert!((sum - 1.0).abs() < 1e-9);
        } else {
            prop_assert!(d.ratios.is_empty());
        }
    }

    #[test]
    fn metrics_stay_in_range(ranks in prop::collection::vec(prop::option::of(0usize..30), 1..40)) {
        let mut rankings = BTreeMap::new();
        let mut gold = BTreeMap::new();
        for (q, rank) in ranks.iter().enumerate() {
            let list: Vec<String> = (0..30).map(|i| format!("d{i}")).collect();
            gold.insert(format!("q{q}"), rank.map_or("absent".into(), |r| format!("d{r}")));
            rankings.insert(format!("q{q}"), list);
        }
        let m = compute_retrieval_metrics(&rankings, &gold, &[1, 5, 10]).unwrap();
        let hits_at = |k: usize| ranks.iter().filter(|r| r.is_some_and(|r| r < k)).count() as f64 / ranks.len() as f64;
        for k in [1, 5, 10] {
            prop_assert_eq!(m.recall[&k], hits_at(k));
        }
        let mrr = ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / (r + 1) as f64)).sum::<f64>() / ranks.len() as f64;
        prop_assert!((m.mrr - mrr).abs() < 1e-12);
    }

    #[test]
    fn embedding_file_round_trips(
        rows in prop::collection::btree_map("[a-z0-9-]{1,12}", ("[ -~]{0,30}", prop::collection::vec(-1.0f32..1.0, 4)), 1..20)
    ) {
        let records: Vec<EmbeddingRecord> = rows
            .iter()
            .filter(|(_, (_, v))| v.iter().any(|x| x.abs() > 1e-3))
            .map(|(id, (caption, v))| EmbeddingRecord {
                id: id.clone(),
                vector: v.clone(),
                metadata: RecordMeta { caption: caption.clone(), source_corpus: "p".into() },
            })
            .collect();
        let mut bytes = Vec::new();
        encode_embedding_file(&mut bytes, 4, Some("p"), &records).unwrap();
        let index = VectorIndex::read_from(&bytes[..]).unwrap();
        prop_assert_eq!(index.len(), records.len());
        for r in &records {
            let back = index.get(&r.id).unwrap();
            prop_assert_eq!(&back.metadata, &r.metadata);
            let hit = index.search(&r.vector, 1).unwrap();
            prop_assert!(hit[0].score > 0.9999);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn store_round_trips(picks in prop::collection::vec((0usize..6, 1usize..7, "[a-z]{1,8}"), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let store = EpisodeStore::create(dir.path().join("p.jsonl")).unwrap();
        let episodes: Vec<_> = picks
            .iter()
            .enumerate()
            .map(|(i, (src, sessions, name))| {
                let mut ep = common::episode(*src, &format!("p-{i}"));
                ep.name = name.clone();
                ep.sessions.truncate(*sessions);
                ep
            })
            .collect();
        for ep in &episodes {
            store.write_episode(ep).unwrap();
        }
        prop_assert_eq!(store.read_all().unwrap(), episodes);
    }

    #[test]
    fn stats_match_a_recount(picks in prop::collection::vec((0usize..6, 0usize..7), 1..8)) {
        let episodes: Vec<_> = picks
            .iter()
            .enumerate()
            .map(|(i, (src, sessions))| {
                let mut ep = common::episode(*src, &format!("s-{i}"));
                ep.sessions.truncate(*sessions);
                ep
            })
            .collect();
        let report = compute_stats(&episodes).unwrap();
        let sessions: usize = episodes.iter().map(|e| e.sessions.len()).sum();
        let turns: usize = episodes.iter().flat_map(|e| &e.sessions).map(|s| s.turns.len()).sum();
        let shared: usize = episodes.iter().flat_map(|e| &e.sessions).map(|s| s.sharing_turns().count()).sum();
        let gaps: usize = episodes.iter().map(|e| e.sessions.len().saturating_sub(1)).sum();
        prop_assert_eq!(report.episodes, episodes.len());
        prop_assert_eq!(report.sessions, sessions);
        prop_assert_eq!(report.utterances, turns);
        prop_assert_eq!(report.shared_images, shared);
        prop_assert_eq!(report.session_intervals.total(), gaps);
        prop_assert_eq!(report.image_sources.total(), shared);
        prop_assert_eq!(report.age_groups.total(), episodes.len());
        for d in [&report.age_groups, &report.genders, &report.residences, &report.image_sources, &report.experience_ops] {
            if d.total() > 0 {
                prop_assert!((d.ratios.values().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
