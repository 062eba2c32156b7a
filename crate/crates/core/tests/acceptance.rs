//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use episynth::aligner::{plan_module, validate_rewrite, ClassWords, PlanKind};
use episynth::config::PipelineConfig;
use episynth::dialogue::{ImageResolution, SharingInfo};
use episynth::event_graph::{
    apply_interval, validate_event_graph, CausalEdge, EventGraph, EventNode, ExperienceOp, GraphRules,
    GraphViolation, RawEdge, RawEventNode, TimeInterval, TimeUnit,
};
use episynth::extract::EVENT_KEYS;
use episynth::filter::{tally, FilterChain, FilterConfig, FilterReason};
use episynth::gateway::{ChatRequest, Gateway, MockChatBackend};
use episynth::lexicon::Lexicon;
use episynth::metrics::compute_retrieval_metrics;
use episynth::pipeline::run_generate;
use episynth::profile::{sample_demographics_with, Relation};
use episynth::prompts::{self, NthRound, ProfileFields};
use episynth::retrieval::{EmbeddingRecord, RecordMeta, VectorIndex};
use episynth::stats::{compute_stats, IntervalBucket};
use episynth::store::{missing_artifacts, validate_episode, Episode, EpisodeRules, EpisodeStore};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("end-to-end mock run", end_to_end),
        ("prompt fidelity", prompt_fidelity),
        ("event-graph validator", graph_validator),
        ("retrieval exactness", retrieval_exactness),
        ("retrieval metrics", metrics),
        ("planner fidelity", planner_fidelity),
        ("filter tallies", filter_tallies),
        ("dataset statistics", stats),
        ("demographic sampling", sampling),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name:<24} {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<24} {detail}");
            }
        }
    }
    println!("\n{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn mock_config(dir: &Path, seed: u64) -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.seed = seed;
    config.backends.mock = true;
    config.output = dir.join("episodes.jsonl");
    config
}

fn mock_episodes(seed: u64, n: usize) -> Vec<Episode> {
    let dir = tempfile::tempdir().unwrap();
    let config = mock_config(dir.path(), seed);
    run_generate(&config, n).unwrap();
    EpisodeStore::new(&config.output).read_all().unwrap()
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = mock_config(dir.path(), 42);
    let started = Instant::now();
    let summary = run_generate(&config, 20).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    ensure!(summary.attempted == 20 && summary.failed == 0, "{summary:?}");

    let store = EpisodeStore::new(&config.output);
    let scan = store.scan().map_err(|e| e.to_string())?;
    ensure!(scan.corrupt.is_empty(), "corrupt lines: {:?}", scan.corrupt);
    ensure!(!scan.episodes.is_empty(), "no episodes stored");
    let artifacts = store.artifacts().map_err(|e| e.to_string())?;
    let lexicon = Lexicon::bundled();
    for (line, ep) in &scan.episodes {
        let report = validate_episode(ep, &lexicon, &EpisodeRules::default());
        ensure!(report.is_empty(), "line {line}: {:?}", report.kinds());
        let missing = missing_artifacts(ep, &artifacts);
        ensure!(missing.is_empty(), "line {line}: missing artifacts {missing:?}");
    }

    let first = std::fs::read(&config.output).unwrap();
    run_generate(&config, 20).map_err(|e| e.to_string())?;
    let second = std::fs::read(&config.output).unwrap();
    ensure!(first == second, "rerun differs");
    Ok(format!(
        "{} stored, 0 violations, {:.1}s, rerun byte-identical",
        scan.episodes.len(),
        elapsed.as_secs_f64()
    ))
}

struct Golden {
    system: String,
    instruction: String,
}

fn golden(name: &str) -> Golden {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let rest = text.strip_prefix("=== system ===\n").expect("system header");
    let (system, instruction) = rest.split_once("\n=== instruction ===\n").expect("instruction header");
    Golden {
        system: system.to_string(),
        instruction: instruction.trim_end_matches('\n').to_string(),
    }
}

fn substitute(template: &str, vars: &[(&str, &str)]) -> String {
    vars.iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

/// Trailing whitespace on a line is not significant.
fn normalized(text: &str) -> String {
    text.lines().map(str::trim_end).collect::<Vec<_>>().join("\n").trim().to_string()
}

fn compare(name: &str, request: &ChatRequest, vars: &[(&str, &str)]) -> Result<(), String> {
    let g = golden(name);
    let system = substitute(&g.system, vars);
    let instruction = substitute(&g.instruction, vars);
    for (part, want, got) in [
        ("system", &system, &request.system_message),
        ("instruction", &instruction, &request.instruction),
    ] {
        let (want, got) = (normalized(want), normalized(got));
        if want != got {
            let line = want
                .lines()
                .zip(got.lines())
                .position(|(a, b)| a != b)
                .unwrap_or(want.lines().count().min(got.lines().count()));
            return Err(format!("{name} {part} differs at line {}", line + 1));
        }
    }
    Ok(())
}

fn prompt_fidelity() -> Outcome {
    let profile = ProfileFields {
        name: "Mina",
        age: 29,
        gender: "Female",
        birthplace: "South Korea",
        residence: "Canada",
    };
    let profile_vars = [
        ("name", "Mina"),
        ("age", "29"),
        ("gender", "Female"),
        ("birthplace", "South Korea"),
        ("residence", "Canada"),
    ];
    let mut checked = 0;

    let mut vars = profile_vars.to_vec();
    vars.extend([
        ("few-shot example", prompts::PERSONA_FEW_SHOT),
        ("target persona category", "Hobby"),
        ("target persona entity", "sport"),
    ]);
    compare("persona", &prompts::persona_request(&profile, "Hobby", "sport"), &vars)?;
    checked += 1;

    let demographic = "I am a 29-year-old woman.";
    let persona = "I love climbing.";
    for (name, relation) in [
        ("commonsense_routine", Relation::RoutinesHabits),
        ("commonsense_goal", Relation::GoalsPlans),
        ("commonsense_relationship", Relation::Relationships),
        ("commonsense_experience", Relation::Experiences),
        ("commonsense_characteristic", Relation::Characteristics),
    ] {
        compare(
            name,
            &prompts::commonsense_request(relation, demographic, persona),
            &[("demographic sentence", demographic), ("persona sentence", persona)],
        )?;
        checked += 1;
    }

    let form = "My name is Mina. I love climbing.";
    compare(
        "narrative",
        &prompts::narrative_request(form),
        &[("narrative sentence form", form)],
    )?;
    checked += 1;

    let event = "Mina joins a climbing gym.";
    compare(
        "event_graph",
        &prompts::event_graph_request("Mina", event),
        &[("name", "Mina"), ("event", event)],
    )?;
    checked += 1;

    let narrative = "Mina lives in Toronto and climbs every weekend.";
    compare(
        "device",
        &prompts::device_request(narrative, "Mina"),
        &[("narrative", narrative), ("name", "Mina")],
    )?;
    checked += 1;

    let listing = prompts::device_listing([(0, "A selfie at the gym"), (1, "A photo of a cliff")]);
    let mut vars = profile_vars.to_vec();
    vars.extend([
        ("device-stored image descriptions", listing.as_str()),
        ("date", "2023.05.01"),
        ("event", event),
    ]);
    compare(
        "dialogue_first",
        &prompts::dialogue_first_request(&profile, &listing, "2023.05.01", event),
        &vars,
    )?;
    checked += 1;

    let history = prompts::event_history([("2023.05.01", event)]);
    let round = NthRound {
        event_history: &history,
        time_interval: "2 week",
        last_date: "2023.05.01",
        date: "2023.05.15",
        experience: "She finishes her first outdoor route.",
        event: "Mina plans a trip to the Rockies.",
    };
    let mut vars = profile_vars.to_vec();
    vars.extend([
        ("device-stored image descriptions", listing.as_str()),
        ("event history", history.as_str()),
        ("time interval", "2 week"),
        ("last date", "2023.05.01"),
        ("date", "2023.05.15"),
        ("experience", "She finishes her first outdoor route."),
        ("event", "Mina plans a trip to the Rockies."),
    ]);
    compare("dialogue_nth", &prompts::dialogue_nth_request(&profile, &listing, &round), &vars)?;
    checked += 1;

    let description = "A photo of a cliff at sunset";
    compare(
        "plan",
        &prompts::plan_request("Mina", "Female", 29, description),
        &[
            ("name", "Mina"),
            ("gender", "Female"),
            ("age", "29"),
            ("image description", description),
        ],
    )?;
    checked += 1;

    let dialogue = "Mina: Hi!\nAI Assistant: Hello, Mina.";
    compare(
        "summary_first",
        &prompts::summary_first_request("Mina", "2023.05.01", dialogue),
        &[("name", "Mina"), ("current_date", "2023.05.01"), ("dialogue", dialogue)],
    )?;
    checked += 1;
    compare(
        "summary_nth",
        &prompts::summary_nth_request(
            "Mina",
            "2023.05.15",
            dialogue,
            "Mina talked about climbing",
            "2 week",
            "2023.05.01",
        ),
        &[
            ("name", "Mina"),
            ("current_date", "2023.05.15"),
            ("dialogue", dialogue),
            ("previous_summary", "Mina talked about climbing"),
            ("time_interval", "2 week"),
            ("last_date", "2023.05.01"),
        ],
    )?;
    checked += 1;

    let keys = EVENT_KEYS.iter().map(|k| format!("\"{k}\"")).collect::<Vec<_>>().join(", ");
    ensure!(
        prompts::EVENT_GRAPH_SYSTEM.contains(&format!("following keys: {keys}.")),
        "event graph key list is not {keys}"
    );
    ensure!(
        prompts::PLAN_SYSTEM.contains("\u{201c}<class_word> [img]\u{201d}"),
        "plan prompt lacks the class-word format"
    );
    Ok(format!("{checked} rendered prompts match goldens; key list and class-word literal present"))
}

fn edge(parent: &str, interval: &str, op: &str) -> Option<RawEdge> {
    Some(RawEdge {
        parent_id: parent.into(),
        time_interval: interval.into(),
        experience_op: op.into(),
        experience: "something happens".into(),
    })
}

fn node(id: &str, date: &str, caused_by: Option<RawEdge>) -> RawEventNode {
    RawEventNode {
        id: id.into(),
        event: format!("event {id}"),
        date: date.into(),
        caused_by,
    }
}

/// Five events, each one week after its parent.
fn chain() -> Vec<RawEventNode> {
    vec![
        node("e1", "2022.01.01", None),
        node("e2", "2022.01.08", edge("e1", "1 week", "add")),
        node("e3", "2022.01.15", edge("e2", "1 week", "add")),
        node("e4", "2022.01.22", edge("e3", "1 week", "update")),
        node("e5", "2022.01.29", edge("e4", "1 week", "add")),
    ]
}

fn violation_fixtures() -> Vec<(GraphViolation, Vec<RawEventNode>)> {
    use GraphViolation::*;
    let mut out = Vec::new();

    let mut g = chain();
    g.push(node("e5", "2022.02.05", edge("e4", "2 week", "add")));
    out.push((DuplicateId, g));

    let mut g = chain();
    g[4].caused_by = edge("e9", "1 week", "add");
    out.push((DanglingParent, g));

    let g = vec![
        node("e1", "2022.01.01", None),
        node("e2", "2022.01.08", edge("e1", "1 week", "add")),
        node("e3", "2022.03.01", edge("e4", "3 hour", "add")),
        node("e4", "2022.03.01", edge("e3", "3 hour", "add")),
        node("e5", "2022.01.15", edge("e2", "1 week", "add")),
    ];
    out.push((Cycle, g));

    let mut g = chain();
    g[2].date = "2022.01.05".into();
    out.push((CausalityViolation, g));

    let mut g = chain();
    g[4].date = "2024.06.01".into();
    out.push((DateHorizon, g));

    let mut g = chain();
    g.truncate(4);
    out.push((TooFewEvents, g));

    let mut g = chain();
    g[4].date = "2022/01/29".into();
    out.push((BadDateFormat, g));

    let mut g = chain();
    g[2].caused_by = edge("e2", "1 fortnight", "add");
    out.push((BadUnit, g));

    let mut g = chain();
    g[2].caused_by = edge("e2", "1 week", "remove");
    out.push((BadOp, g));

    let mut g = chain();
    g[0].caused_by = edge("e0", "1 month", "add");
    g.push(node("e0", "2021.12.01", None));
    out.push((NonEmptyRootEdge, g));

    out
}

/// A random graph that satisfies every rule: unique ids, parents listed
/// earlier, children strictly later (or the same day under an hour edge).
fn random_valid_graph(rng: &mut ChaCha8Rng) -> Vec<RawEventNode> {
    let n = rng.gen_range(5..=12);
    let root = NaiveDate::from_ymd_opt(rng.gen_range(2010..=2020), rng.gen_range(1..=12), rng.gen_range(1..=28)).unwrap();
    let mut dates = vec![root];
    let mut nodes = vec![node("n0", &root.format("%Y.%m.%d").to_string(), None)];
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let (interval, gap) = match rng.gen_range(0..5) {
            0 => {
                let h = rng.gen_range(1..=23);
                (format!("{h} hour"), 0)
            }
            1 => {
                let d = rng.gen_range(1..=6);
                (format!("{d} day"), d)
            }
            2 => {
                let w = rng.gen_range(1..=4);
                (format!("{w} week"), 7 * w)
            }
            3 => {
                let m = rng.gen_range(1..=3);
                (format!("{m} month"), 30 * m)
            }
            _ => ("1 year".to_string(), 365),
        };
        let date = dates[parent] + chrono::Days::new(gap);
        let op = if rng.gen_bool(0.5) { "add" } else { "update" };
        dates.push(date);
        nodes.push(node(
            &format!("n{i}"),
            &date.format("%Y.%m.%d").to_string(),
            edge(&format!("n{parent}"), &interval, op),
        ));
    }
    nodes
}

fn is_leap(y: i64) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn days_in_month(y: i64, m: i64) -> i64 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        _ if is_leap(y) => 29,
        _ => 28,
    }
}

/// Counts days forward one at a time, then steps months by arithmetic on
/// (year, month) with the day clamped to the month's length.
fn oracle_apply(y: i64, m: i64, d: i64, count: i64, unit: TimeUnit) -> (i64, i64, i64) {
    let add_days = |(mut y, mut m, mut d): (i64, i64, i64), mut n: i64| {
        while n > 0 {
            let left = days_in_month(y, m) - d;
            if n <= left {
                d += n;
                n = 0;
            } else {
                n -= left + 1;
                d = 1;
                m += 1;
                if m > 12 {
                    m = 1;
                    y += 1;
                }
            }
        }
        (y, m, d)
    };
    let add_months = |months: i64| {
        let total = y * 12 + (m - 1) + months;
        let (ny, nm) = (total.div_euclid(12), total.rem_euclid(12) + 1);
        (ny, nm, d.min(days_in_month(ny, nm)))
    };
    match unit {
        TimeUnit::Hour => add_days((y, m, d), count / 24),
        TimeUnit::Day => add_days((y, m, d), count),
        TimeUnit::Week => add_days((y, m, d), count * 7),
        TimeUnit::Month => add_months(count),
        TimeUnit::Year => add_months(count * 12),
    }
}

fn graph_validator() -> Outcome {
    let rules = GraphRules::default();
    let fixtures = violation_fixtures();
    for (expected, graph) in &fixtures {
        let kinds = validate_event_graph(graph, &rules).kinds();
        ensure!(kinds == vec![*expected], "{expected:?} fixture reported {kinds:?}");
    }
    let mut distinct: Vec<_> = fixtures.iter().map(|(k, _)| *k).collect();
    distinct.sort();
    distinct.dedup();
    ensure!(distinct.len() == 10, "only {} violation classes covered", distinct.len());
    ensure!(validate_event_graph(&chain(), &rules).is_empty(), "base chain rejected");

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let graph = random_valid_graph(&mut rng);
        let report = validate_event_graph(&graph, &rules);
        ensure!(report.is_empty(), "random graph {i} rejected: {:?}", report.violations);
    }

    let mut mismatches = 0;
    for _ in 0..10_000 {
        let y = rng.gen_range(1900..=2100);
        let m = rng.gen_range(1..=12);
        let d = rng.gen_range(1..=days_in_month(y, m));
        let unit = TimeUnit::ALL[rng.gen_range(0..TimeUnit::ALL.len())];
        let count = match unit {
            TimeUnit::Hour => rng.gen_range(0..2000),
            TimeUnit::Day => rng.gen_range(0..1500),
            TimeUnit::Week => rng.gen_range(0..300),
            TimeUnit::Month => rng.gen_range(0..240),
            TimeUnit::Year => rng.gen_range(0..30),
        };
        let date = NaiveDate::from_ymd_opt(y as i32, m as u32, d as u32).unwrap();
        let got = apply_interval(date, TimeInterval::new(count as u32, unit));
        let want = oracle_apply(y, m, d, count, unit);
        if (i64::from(got.year()), i64::from(got.month()), i64::from(got.day())) != want {
            mismatches += 1;
        }
    }
    ensure!(mismatches == 0, "apply_interval disagrees with the calendar oracle on {mismatches} pairs");
    Ok("10 violation fixtures exact; 1000 random graphs valid; 10000 interval pairs exact".into())
}

fn brute_force(vectors: &[(String, Vec<f32>)], query: &[f32], k: usize) -> Vec<String> {
    let norm = |v: &[f32]| v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut scored: Vec<(f64, &str)> = vectors
        .iter()
        .map(|(id, v)| {
            let dot: f64 = v.iter().zip(query).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
            (dot / (norm(v) * qn), id.as_str())
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id.to_string()).collect()
}

fn record(id: &str, vector: Vec<f32>) -> EmbeddingRecord {
    EmbeddingRecord {
        id: id.into(),
        vector,
        metadata: RecordMeta {
            caption: format!("caption {id}"),
            source_corpus: "fixture".into(),
        },
    }
}

fn retrieval_exactness() -> Outcome {
    let dim = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let random_vec = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect::<Vec<_>>();
    let vectors: Vec<(String, Vec<f32>)> = (0..1000).map(|i| (format!("v{i:04}"), random_vec(&mut rng))).collect();
    let index = VectorIndex::from_records(dim, vectors.iter().map(|(id, v)| record(id, v.clone()))).map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    for _ in 0..100 {
        let query = random_vec(&mut rng);
        for k in [1, 5, 10] {
            let got: Vec<String> = index.search(&query, k).unwrap().into_iter().map(|h| h.id).collect();
            if got != brute_force(&vectors, &query, k) {
                mismatches += 1;
            }
        }
    }
    ensure!(mismatches == 0, "{mismatches} of 300 searches differ from brute force");

    let base = random_vec(&mut rng);
    let scaled: Vec<f32> = base.iter().map(|x| x * 3.0).collect();
    let mut records = vec![
        record("dup-c", base.clone()),
        record("dup-a", scaled),
        record("dup-b", base.clone()),
    ];
    records.extend((0..20).map(|i| record(&format!("other{i}"), random_vec(&mut rng))));
    let mut shuffled = records.clone();
    shuffled.shuffle(&mut rng);
    for recs in [records, shuffled] {
        let index = VectorIndex::from_records(dim, recs).map_err(|e| e.to_string())?;
        let ids: Vec<String> = index.search(&base, 3).unwrap().into_iter().map(|h| h.id).collect();
        ensure!(ids == ["dup-a", "dup-b", "dup-c"], "duplicate ties ordered {ids:?}");
    }
    Ok("300 searches equal brute force; duplicate ties ordered by id".into())
}

fn metrics() -> Outcome {
    let rankings: BTreeMap<String, Vec<String>> = BTreeMap::from([
        ("q1".into(), vec!["x".into(), "a".into()]),
        ("q2".into(), vec!["x".into(), "y".into(), "z".into(), "b".into()]),
    ]);
    let gold = BTreeMap::from([("q1".to_string(), "a".to_string()), ("q2".into(), "b".into())]);
    let m = compute_retrieval_metrics(&rankings, &gold, &[1, 5, 10]).map_err(|e| e.to_string())?;
    ensure!(m.mrr == 0.375, "mrr {}", m.mrr);
    ensure!(m.recall[&1] == 0.0 && m.recall[&5] == 1.0 && m.recall[&10] == 1.0, "recall {:?}", m.recall);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..100 {
        let queries = rng.gen_range(1..30);
        let mut rankings = BTreeMap::new();
        let mut gold = BTreeMap::new();
        for q in 0..queries {
            let mut items: Vec<String> = (0..rng.gen_range(1..25)).map(|j| format!("d{j}")).collect();
            items.shuffle(&mut rng);
            gold.insert(format!("q{q}"), format!("d{}", rng.gen_range(0..25)));
            rankings.insert(format!("q{q}"), items);
        }
        let m = compute_retrieval_metrics(&rankings, &gold, &[1, 5, 10]).map_err(|e| e.to_string())?;
        ensure!(
            m.recall[&1] <= m.recall[&5] && m.recall[&5] <= m.recall[&10],
            "fixture {i}: {:?} mrr {}",
            m.recall,
            m.mrr
        );
        ensure!(m.recall[&1] <= m.mrr, "fixture {i}: mrr below R@1");
    }
    Ok("MRR 0.375 exact on rank-{2,4} fixture; R@1<=R@5<=R@10 on 100 fixtures".into())
}

fn planner_fidelity() -> Outcome {
    let gateway = Gateway::new(Arc::new(MockChatBackend::new()));
    let class_words = ClassWords::default();
    let cases = [
        (
            "A selfie of Tom smiling at the Golden State Warriors' arena during a game",
            PlanKind::PersonalizedT2i,
        ),
        ("A screenshot of chatbot development code using Python", PlanKind::Retrieval),
        (
            "A photo of Manchester United lifting the 2023-24 FA Cup trophy",
            PlanKind::WebSearch,
        ),
    ];
    for (description, expected) in cases {
        let plan = plan_module(&gateway, "Tom", "Male", 21, description, &class_words).map_err(|e| e.to_string())?;
        ensure!(plan.kind == expected, "`{description}` routed to {:?}", plan.kind);
        if expected == PlanKind::PersonalizedT2i {
            let modified = plan.modified_description.clone().unwrap_or_default();
            let report = validate_rewrite(description, &modified, "Tom", &class_words);
            ensure!(report.is_empty(), "rewrite `{modified}` rejected: {:?}", report.kinds());
        }
    }
    Ok("three worked examples route as labeled; rewrite valid".into())
}

fn filter_tallies() -> Outcome {
    let base = mock_episodes(11, 10);
    ensure!(base.len() == 10, "only {} base episodes kept", base.len());
    let mut episodes: Vec<Episode> = (0..100)
        .map(|i| {
            let mut ep = base[i % base.len()].clone();
            ep.episode_id = format!("fixture-{i:03}");
            ep
        })
        .collect();

    for ep in &mut episodes[0..12] {
        ep.sessions.truncate(3);
    }
    for ep in &mut episodes[12..19] {
        let first = ep.persona_attributes[0].clone();
        ep.persona_attributes = vec![first; 6];
    }
    for ep in &mut episodes[19..24] {
        let image = ep
            .device_images
            .iter_mut()
            .find_map(|d| d.aligned_image.as_mut())
            .or_else(|| {
                ep.sessions.iter_mut().flat_map(|s| &mut s.turns).find_map(|t| match &mut t.image {
                    Some(ImageResolution::Aligned { image }) => Some(image),
                    _ => None,
                })
            })
            .expect("an aligned image to corrupt");
        image.caption = Some("zebra quartz violin harbor".into());
    }

    let config = FilterConfig {
        strict: true,
        ..FilterConfig::default()
    };
    let chain = FilterChain::with_mocks(config);
    let decisions: Vec<_> = episodes
        .iter_mut()
        .map(|ep| chain.filter_episode(ep))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let counts = tally(&decisions);
    let get = |r: FilterReason| counts.get(&r).copied().unwrap_or(0);
    let observed = (
        get(FilterReason::SessionCount),
        get(FilterReason::DuplicatePersona),
        get(FilterReason::UnalignedImage),
    );
    ensure!(observed == (12, 7, 5), "tallied {observed:?}, full tally {counts:?}");
    let kept = decisions.iter().filter(|d| d.kept).count();
    ensure!(kept == 76, "{kept} kept, tally {counts:?}");
    Ok("(12, 7, 5) dropped; 76 clean episodes kept".into())
}

fn planted_episode(template: &Episode, id: usize) -> Episode {
    let mut ep = template.clone();
    ep.episode_id = format!("planted-{id}");
    let start = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
    let interval = TimeInterval::new(1, TimeUnit::Week);
    let mut nodes = vec![EventNode {
        id: "e0".into(),
        event: "start".into(),
        date: start,
        caused_by: None,
    }];
    for (i, op) in [ExperienceOp::Add, ExperienceOp::Add, ExperienceOp::Update, ExperienceOp::Add]
        .into_iter()
        .enumerate()
    {
        nodes.push(EventNode {
            id: format!("e{}", i + 1),
            event: format!("event {}", i + 1),
            date: apply_interval(start, TimeInterval::new(i as u32 + 1, TimeUnit::Week)),
            caused_by: Some(CausalEdge {
                parent_id: format!("e{i}"),
                time_interval: interval,
                experience_op: op,
                experience: "x".into(),
            }),
        });
    }
    ep.event_graph = EventGraph::new(nodes);

    let turn = template.sessions[0].turns[0].clone();
    let session = template.sessions[0].clone();
    let mut date = start;
    ep.sessions = [0u64, 0, 3, 10, 100]
        .into_iter()
        .enumerate()
        .map(|(si, gap)| {
            date = date + chrono::Days::new(gap);
            let mut s = session.clone();
            s.round_index = si as u32;
            s.date = date;
            s.turns = (0..10)
                .map(|ti| {
                    let mut t = turn.clone();
                    t.utterance_id = ti.to_string();
                    t.image = None;
                    t.sharing_info = match ti {
                        0..=2 => SharingInfo {
                            image_source: Some("mobile".into()),
                            ..SharingInfo::default()
                        },
                        3 => SharingInfo {
                            image_source: Some("internet".into()),
                            ..SharingInfo::default()
                        },
                        _ => SharingInfo::default(),
                    };
                    t
                })
                .collect();
            s
        })
        .collect();
    ep
}

fn stats() -> Outcome {
    let template = mock_episodes(5, 1).remove(0);
    let episodes: Vec<Episode> = (0..4).map(|i| planted_episode(&template, i)).collect();
    let report = compute_stats(&episodes).map_err(|e| e.to_string())?;

    ensure!(report.avg_utterances_per_session == 10.0, "U/S {}", report.avg_utterances_per_session);
    ensure!(report.avg_sessions_per_episode == 5.0, "S/E {}", report.avg_sessions_per_episode);
    ensure!(report.avg_images_per_session == 4.0, "I/S {}", report.avg_images_per_session);
    ensure!(report.experience_ops.ratio("add") == 0.75, "add {}", report.experience_ops.ratio("add"));
    ensure!(report.experience_ops.ratio("update") == 0.25, "update {}", report.experience_ops.ratio("update"));
    ensure!(report.image_sources.ratio("mobile") == 0.75, "mobile {}", report.image_sources.ratio("mobile"));
    ensure!(report.image_sources.ratio("internet") == 0.25, "internet {}", report.image_sources.ratio("internet"));
    for bucket in IntervalBucket::ALL {
        let want = if bucket == IntervalBucket::of_days(400) { 0.0 } else { 0.25 };
        let got = report.session_intervals.ratio(bucket.label());
        ensure!(got == want, "interval {} = {got}", bucket.label());
    }

    let text = report.render_text();
    for needle in [
        "episodes",
        "sessions",
        "utterances",
        "shared images",
        "utterances / session",
        "images / session",
        "Age groups",
        "Gender",
        "Birthplace",
        "Residence",
        "Intervals between sessions",
        "Image source",
        "Experience operation",
        "Reference values",
        "10.5",
        "60.8:39.2",
        "82.9:17.1",
    ] {
        ensure!(text.contains(needle), "rendered report lacks `{needle}`");
    }
    Ok("planted 0.75/0.25 ratios and 10 U/S exact; all sections and references rendered".into())
}

fn sampling() -> Outcome {
    let lexicon = Lexicon::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let draws = 10_000;
    let mut same = 0;
    let mut groups: HashMap<String, usize> = HashMap::new();
    for _ in 0..draws {
        let d = sample_demographics_with(&lexicon, &mut rng, 0.7).map_err(|e| e.to_string())?;
        if d.birthplace == d.residence {
            same += 1;
        }
        *groups.entry(d.age_group.clone()).or_default() += 1;
    }
    let same_ratio = same as f64 / draws as f64;
    ensure!((same_ratio - 0.70).abs() <= 0.02, "same-residence fraction {same_ratio}");
    let expected = 1.0 / lexicon.age_groups.len() as f64;
    for group in &lexicon.age_groups {
        let got = groups.get(&group.label).copied().unwrap_or(0) as f64 / draws as f64;
        ensure!((got - expected).abs() <= 0.02, "age group {} at {got}", group.label);
    }
    Ok(format!(
        "same-residence {same_ratio:.3}; {} age groups within 2% of {expected:.3}",
        lexicon.age_groups.len()
    ))
}
