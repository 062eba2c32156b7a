//! Corpus statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::Datelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::category_bucket;
use crate::event_graph::ExperienceOp;
use crate::store::Episode;

pub const TOP_N: usize = 10;

/// Published corpus-level values, shown next to computed ones for
/// comparison. They are not targets.
pub const REFERENCE_VALUES: [(&str, &str); 3] = [
    ("avg utterances per session", "10.5"),
    ("image source internet:mobile", "60.8:39.2"),
    ("experience op add:update", "82.9:17.1"),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("store holds no episodes")]
    EmptyStore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalBucket {
    SameDay,
    UnderWeek,
    UnderMonth,
    UnderYear,
    YearOrMore,
}

impl IntervalBucket {
    pub const ALL: [IntervalBucket; 5] = [
        IntervalBucket::SameDay,
        IntervalBucket::UnderWeek,
        IntervalBucket::UnderMonth,
        IntervalBucket::UnderYear,
        IntervalBucket::YearOrMore,
    ];

    pub fn of_days(days: i64) -> Self {
        match days {
            i64::MIN..=0 => IntervalBucket::SameDay,
            1..=6 => IntervalBucket::UnderWeek,
            7..=29 => IntervalBucket::UnderMonth,
            30..=364 => IntervalBucket::UnderYear,
            _ => IntervalBucket::YearOrMore,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            IntervalBucket::SameDay => "same day",
            IntervalBucket::UnderWeek => "< 1 week",
            IntervalBucket::UnderMonth => "< 1 month",
            IntervalBucket::UnderYear => "< 1 year",
            IntervalBucket::YearOrMore => ">= 1 year",
        }
    }
}

/// Counts plus their share of the partition.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Distribution {
    pub counts: BTreeMap<String, usize>,
    pub ratios: BTreeMap<String, f64>,
}

impl Distribution {
    pub fn from_counts(counts: BTreeMap<String, usize>) -> Self {
        let total: usize = counts.values().sum();
        let ratios = if total == 0 {
            BTreeMap::new()
        } else {
            counts.iter().map(|(k, c)| (k.clone(), *c as f64 / total as f64)).collect()
        };
        Self { counts, ratios }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn ratio(&self, key: &str) -> f64 {
        self.ratios.get(key).copied().unwrap_or(0.0)
    }

    /// Most frequent keys first, ties in key order.
    pub fn top(&self, n: usize) -> Vec<(String, usize)> {
        let mut items: Vec<(String, usize)> = self.counts.iter().map(|(k, c)| (k.clone(), *c)).collect();
        items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        items.truncate(n);
        items
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub episodes: usize,
    pub sessions: usize,
    pub utterances: usize,
    /// Image-sharing turns across all sessions.
    pub shared_images: usize,
    pub device_images: usize,
    pub avg_sessions_per_episode: f64,
    pub avg_utterances_per_session: f64,
    pub avg_images_per_episode: f64,
    pub avg_images_per_session: f64,
    pub age_groups: Distribution,
    pub genders: Distribution,
    pub birthplaces: Distribution,
    pub residences: Distribution,
    pub persona_categories: Distribution,
    pub device_categories: Distribution,
    pub session_years: Distribution,
    pub session_intervals: Distribution,
    pub image_sources: Distribution,
    pub experience_ops: Distribution,
}

fn bump(map: &mut BTreeMap<String, usize>, key: impl Into<String>) {
    *map.entry(key.into()).or_insert(0) += 1;
}

pub fn compute_stats(episodes: &[Episode]) -> Result<StatsReport, StatsError> {
    if episodes.is_empty() {
        return Err(StatsError::EmptyStore);
    }
    let mut sessions = 0;
    let mut utterances = 0;
    let mut shared = 0;
    let mut device = 0;
    let mut age = BTreeMap::new();
    let mut gender = BTreeMap::new();
    let mut birth = BTreeMap::new();
    let mut residence = BTreeMap::new();
    let mut persona = BTreeMap::new();
    let mut device_cats = BTreeMap::new();
    let mut years = BTreeMap::new();
    let mut intervals: BTreeMap<String, usize> = IntervalBucket::ALL.iter().map(|b| (b.label().to_string(), 0)).collect();
    let mut sources = BTreeMap::new();
    let mut ops = BTreeMap::new();

    for ep in episodes {
        let d = &ep.demographics;
        bump(&mut age, d.age_group.clone());
        bump(&mut gender, d.gender.as_str());
        bump(&mut birth, d.birthplace.clone());
        bump(&mut residence, d.residence.clone());
        for p in &ep.persona_attributes {
            bump(&mut persona, p.category.clone());
        }
        device += ep.device_images.len();
        for img in &ep.device_images {
            for tag in &img.categories {
                bump(&mut device_cats, category_bucket(tag));
            }
        }
        for node in &ep.event_graph.nodes {
            if let Some(edge) = &node.caused_by {
                bump(&mut ops, edge.experience_op.as_str());
            }
        }
        sessions += ep.sessions.len();
        let mut previous: Option<chrono::NaiveDate> = None;
        for s in &ep.sessions {
            utterances += s.turns.len();
            bump(&mut years, s.date.year().to_string());
            if let Some(prev) = previous {
                let days = (s.date - prev).num_days();
                bump(&mut intervals, IntervalBucket::of_days(days).label());
            }
            previous = Some(s.date);
            for t in s.sharing_turns() {
                shared += 1;
                bump(&mut sources, t.sharing_info.source().unwrap_or_else(|| "unknown".into()));
            }
        }
    }
    for op in [ExperienceOp::Add, ExperienceOp::Update] {
        ops.entry(op.as_str().to_string()).or_insert(0);
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(StatsReport {
        episodes: episodes.len(),
        sessions,
        utterances,
        shared_images: shared,
        device_images: device,
        avg_sessions_per_episode: ratio(sessions, episodes.len()),
        avg_utterances_per_session: ratio(utterances, sessions),
        avg_images_per_episode: ratio(shared, episodes.len()),
        avg_images_per_session: ratio(shared, sessions),
        age_groups: Distribution::from_counts(age),
        genders: Distribution::from_counts(gender),
        birthplaces: Distribution::from_counts(birth),
        residences: Distribution::from_counts(residence),
        persona_categories: Distribution::from_counts(persona),
        device_categories: Distribution::from_counts(device_cats),
        session_years: Distribution::from_counts(years),
        session_intervals: Distribution::from_counts(intervals),
        image_sources: Distribution::from_counts(sources),
        experience_ops: Distribution::from_counts(ops),
    })
}

fn pct(r: f64) -> String {
    format!("{:.1}%", r * 100.0)
}

fn section(out: &mut String, title: &str, dist: &Distribution, keys: Option<Vec<String>>) {
    let _ = writeln!(out, "\n{title}");
    let keys = keys.unwrap_or_else(|| dist.counts.keys().cloned().collect());
    for k in keys {
        let _ = writeln!(out, "  {:<40} {:>8} {:>8}", k, dist.counts.get(&k).copied().unwrap_or(0), pct(dist.ratio(&k)));
    }
}

fn top_section(out: &mut String, title: &str, dist: &Distribution) {
    let _ = writeln!(out, "\n{title} (top {TOP_N})");
    for (k, c) in dist.top(TOP_N) {
        let _ = writeln!(out, "  {:<40} {:>8} {:>8}", k, c, pct(dist.ratio(&k)));
    }
}

impl StatsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialization is infallible")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Counts");
        let _ = writeln!(out, "  {:<40} {:>8}", "episodes", self.episodes);
        let _ = writeln!(out, "  {:<40} {:>8}", "sessions", self.sessions);
        let _ = writeln!(out, "  {:<40} {:>8}", "utterances", self.utterances);
        let _ = writeln!(out, "  {:<40} {:>8}", "shared images", self.shared_images);
        let _ = writeln!(out, "  {:<40} {:>8}", "device images", self.device_images);
        let _ = writeln!(out, "\nAverages");
        let _ = writeln!(out, "  {:<40} {:>8.2}", "sessions / episode", self.avg_sessions_per_episode);
        let _ = writeln!(out, "  {:<40} {:>8.2}", "utterances / session", self.avg_utterances_per_session);
        let _ = writeln!(out, "  {:<40} {:>8.2}", "images / episode", self.avg_images_per_episode);
        let _ = writeln!(out, "  {:<40} {:>8.2}", "images / session", self.avg_images_per_session);
        section(&mut out, "Age groups", &self.age_groups, None);
        section(&mut out, "Gender", &self.genders, None);
        top_section(&mut out, "Birthplace", &self.birthplaces);
        top_section(&mut out, "Residence", &self.residences);
        top_section(&mut out, "Persona categories", &self.persona_categories);
        top_section(&mut out, "Device image categories", &self.device_categories);
        section(&mut out, "Session years", &self.session_years, None);
        section(
            &mut out,
            "Intervals between sessions",
            &self.session_intervals,
            Some(IntervalBucket::ALL.iter().map(|b| b.label().to_string()).collect()),
        );
        section(&mut out, "Image source", &self.image_sources, None);
        section(&mut out, "Experience operation", &self.experience_ops, None);
        let _ = writeln!(out, "\nReference values (published corpus, not asserted)");
        for (label, value) in REFERENCE_VALUES {
            let _ = writeln!(out, "  {label:<40} {value:>10}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_buckets() {
        assert_eq!(IntervalBucket::of_days(0), IntervalBucket::SameDay);
        assert_eq!(IntervalBucket::of_days(6), IntervalBucket::UnderWeek);
        assert_eq!(IntervalBucket::of_days(7), IntervalBucket::UnderMonth);
        assert_eq!(IntervalBucket::of_days(29), IntervalBucket::UnderMonth);
        assert_eq!(IntervalBucket::of_days(30), IntervalBucket::UnderYear);
        assert_eq!(IntervalBucket::of_days(365), IntervalBucket::YearOrMore);
    }

    #[test]
    fn empty_store() {
        assert_eq!(compute_stats(&[]), Err(StatsError::EmptyStore));
    }

    #[test]
    fn distribution_ratios_sum_to_one() {
        let d = Distribution::from_counts(BTreeMap::from([("a".into(), 1), ("b".into(), 2)]));
        assert!((d.ratios.values().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(d.top(1), [("b".to_string(), 2)]);
    }
}
