//! Recall@K and mean reciprocal rank.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("query `{0}` has no gold id")]
    MissingGold(String),
    #[error("no queries to score")]
    NoQueries,
    #[error("K must be positive")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub queries: usize,
    /// K to the fraction of queries whose gold id is in the top K.
    pub recall: BTreeMap<usize, f64>,
    pub mrr: f64,
}

/// Scores ranked id lists against one gold id per query. A gold id missing
/// from its ranking contributes zero to every metric.
pub fn compute_retrieval_metrics(
    rankings: &BTreeMap<String, Vec<String>>,
    gold: &BTreeMap<String, String>,
    ks: &[usize],
) -> Result<RetrievalMetrics, MetricsError> {
    if ks.contains(&0) {
        return Err(MetricsError::ZeroK);
    }
    if rankings.is_empty() {
        return Err(MetricsError::NoQueries);
    }
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|k| (*k, 0)).collect();
    let mut reciprocal = 0.0;
    for (query, ranking) in rankings {
        let target = gold.get(query).ok_or_else(|| MetricsError::MissingGold(query.clone()))?;
        if let Some(pos) = ranking.iter().position(|id| id == target) {
            let rank = pos + 1;
            reciprocal += 1.0 / rank as f64;
            for (k, count) in hits.iter_mut() {
                if rank <= *k {
                    *count += 1;
                }
            }
        }
    }
    let n = rankings.len() as f64;
    Ok(RetrievalMetrics {
        queries: rankings.len(),
        recall: hits.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
        mrr: reciprocal / n,
    })
}

impl RetrievalMetrics {
    /// A one-row table with an `R@K` column per K followed by `MRR`.
    pub fn render_table(&self) -> String {
        let mut header = String::new();
        let mut row = String::new();
        for (k, r) in &self.recall {
            let _ = write!(header, "{:>8} |", format!("R@{k}"));
            let _ = write!(row, "{:>8.4} |", r);
        }
        let _ = write!(header, "{:>8}", "MRR");
        let _ = write!(row, "{:>8.4}", self.mrr);
        format!("{header}\n{row}\n")
    }
}
