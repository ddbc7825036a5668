//! Pure decision and timing rules used by the step loop.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{FormatId, GlobalStatistics, MediaType, SquareMatrix};
use crate::world::FormatCollection;

/// kB per GB (decimal units) for the migrated-size matrix.
pub const KB_PER_GB: f64 = 1e6;
/// Relevance below which a decision is judged irrelevant (percent).
pub const RELEVANCE_LOW: f64 = 10.0;
/// Relevance above which a decision is judged relevant (percent).
pub const RELEVANCE_HIGH: f64 = 50.0;
pub const ESTIMATE_NOISE: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("cannot estimate the migration time of an empty collection")]
    EmptyCollection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionOutcome {
    GoodAction,
    FalsePositive,
    FalseNegative,
    Indifferent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecisionCounts {
    pub good: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub indifferent: u64,
}

impl DecisionCounts {
    pub fn record(&mut self, outcome: DecisionOutcome) {
        match outcome {
            DecisionOutcome::GoodAction => self.good += 1,
            DecisionOutcome::FalsePositive => self.false_positive += 1,
            DecisionOutcome::FalseNegative => self.false_negative += 1,
            DecisionOutcome::Indifferent => self.indifferent += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.good + self.false_positive + self.false_negative + self.indifferent
    }

    /// Percentages (good, false positive, false negative, indifferent);
    /// all zero before any decision.
    pub fn percentages(&self) -> [f64; 4] {
        let total = self.total();
        if total == 0 {
            return [0.0; 4];
        }
        [self.good, self.false_positive, self.false_negative, self.indifferent]
            .map(|c| 100.0 * c as f64 / total as f64)
    }
}

/// Cycles needed to migrate `total_kb`: ceil(size·M[src][dst]/resources), at least 1.
pub fn migration_time(
    total_kb: f64,
    src: FormatId,
    dst: FormatId,
    resources: f64,
    m: &SquareMatrix,
) -> u64 {
    cycles_for(total_kb * m.get(src, dst) / resources)
}

fn cycles_for(raw: f64) -> u64 {
    if !raw.is_finite() {
        return u64::MAX;
    }
    (raw.ceil() as u64).max(1)
}

/// Migration time estimated by timing the smallest cluster (with ±10%
/// measurement noise) and extrapolating to the whole collection.
pub fn estimate_time<R: Rng + ?Sized>(
    collection: &FormatCollection,
    src: FormatId,
    dst: FormatId,
    resources: f64,
    m: &SquareMatrix,
    rng: &mut R,
) -> Result<u64, EngineError> {
    let smallest = collection
        .smallest_cluster_kb()
        .ok_or(EngineError::EmptyCollection)?;
    let noise = rng.random_range(1.0 - ESTIMATE_NOISE..=1.0 + ESTIMATE_NOISE);
    let trial_cycles = smallest * m.get(src, dst) * noise / resources;
    let per_kb = trial_cycles / smallest;
    Ok(cycles_for(per_kb * collection.total_kb))
}

pub fn accept_time(cycles: u64, limit: u64) -> bool {
    cycles <= limit
}

/// Table of decision classes; `None` relevance means no global evidence.
pub fn classify(relevance: Option<f64>, migrated: bool) -> DecisionOutcome {
    let Some(r) = relevance else {
        return DecisionOutcome::Indifferent;
    };
    if (RELEVANCE_LOW..=RELEVANCE_HIGH).contains(&r) {
        return DecisionOutcome::Indifferent;
    }
    match (migrated, r < RELEVANCE_LOW) {
        (true, true) => DecisionOutcome::FalsePositive,
        (true, false) => DecisionOutcome::GoodAction,
        (false, true) => DecisionOutcome::GoodAction,
        (false, false) => DecisionOutcome::FalseNegative,
    }
}

/// Classifies a (possibly refused) migration against the global migrated
/// sizes and updates the decision counters.
pub fn analyse_migration(
    stats: &mut GlobalStatistics,
    t: MediaType,
    src: FormatId,
    dst: FormatId,
    migrated: bool,
) -> DecisionOutcome {
    let outcome = classify(stats.relevance(t, src, dst), migrated);
    stats.record_decision(outcome);
    outcome
}
