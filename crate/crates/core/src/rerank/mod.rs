//! Second-pass ranking of a shortlist with a pairwise GBDT model.

pub mod features;
pub mod gbdt;
pub mod io;

use std::collections::BTreeMap;
use std::ops::Range;

use thiserror::Error;

use crate::model::{QueryLogEntry, RouteSummary};
pub use features::{CityProfile, FeatureSpace, QueryFeatures, Scaler, TravelContext};
pub use gbdt::{pair_gradient, pair_loss, Ensemble, GbdtParams, RoundInfo};

/// Bumped whenever feature emission changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("tau must be in (0, 1], got {0}")]
    InvalidTau(f64),
    #[error("invalid training parameters: {0}")]
    InvalidParams(String),
    #[error("no training pairs: the log has no usable feedback")]
    NoPairs,
    #[error("feature vector has {found} values, model expects {expected}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
}

impl TravelContext {
    pub fn of_entry(e: &QueryLogEntry) -> Self {
        Self {
            city: e.city.clone(),
            timestamp: e.timestamp,
            origin: e.origin,
            destination: e.destination,
            weather: e.weather.clone(),
        }
    }
}

/// Preference pairs `(preferred, other)` over one query's routes, given each
/// route's earliest feedback time. A route with feedback beats every route
/// with later or no feedback; equal times and feedback-less routes give no pair.
pub fn make_pairs(first_feedback: &[Option<i64>]) -> Vec<(usize, usize)> {
    let mut with: Vec<(i64, usize)> = first_feedback.iter().enumerate().filter_map(|(i, t)| t.map(|t| (t, i))).collect();
    with.sort();
    let mut out = Vec::new();
    for (ti, i) in with {
        for (j, tj) in first_feedback.iter().enumerate() {
            if j != i && tj.is_none_or(|tj| ti < tj) {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub query: usize,
    /// Row indices into [`TrainingSet::rows`].
    pub preferred: usize,
    pub other: usize,
}

/// Scaled feature rows grouped by query.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub space: FeatureSpace,
    pub names: Vec<String>,
    pub scaler: Scaler,
    pub rows: Vec<Vec<f64>>,
    pub query_ids: Vec<String>,
    pub queries: Vec<Range<usize>>,
    pub pairs: Vec<TrainingPair>,
    /// Log entries without any pair.
    pub skipped: usize,
}

/// Builds features for every log entry that yields at least one pair, then
/// fits the vocabularies and scaling statistics on them.
pub fn build_training_set(log: &[QueryLogEntry], profiles: &BTreeMap<String, CityProfile>) -> TrainingSet {
    let mut kept = Vec::new();
    let mut skipped = 0;
    for e in log {
        let pairs = make_pairs(&e.first_feedback());
        if pairs.is_empty() {
            skipped += 1;
            continue;
        }
        let summaries: Vec<RouteSummary> = e.presented_routes.iter().map(|r| r.summary.clone()).collect();
        let q = QueryFeatures::new(&TravelContext::of_entry(e), &summaries, profiles.get(&e.city));
        kept.push((e, summaries, q, pairs));
    }
    let space = FeatureSpace::fit(profiles, kept.iter().map(|k| (&k.2, k.1.as_slice())));
    let names = space.names();
    let mut rows = Vec::new();
    let mut queries = Vec::new();
    let mut query_ids = Vec::new();
    let mut pairs = Vec::new();
    for (qi, (e, summaries, q, ps)) in kept.iter().enumerate() {
        let base = rows.len();
        rows.extend(summaries.iter().map(|r| space.raw(q, r)));
        queries.push(base..rows.len());
        query_ids.push(e.query_id.clone());
        pairs.extend(ps.iter().map(|&(a, b)| TrainingPair { query: qi, preferred: base + a, other: base + b }));
    }
    let scaler = Scaler::fit(rows.iter(), names.len());
    for r in &mut rows {
        scaler.apply(r);
    }
    TrainingSet { space, names, scaler, rows, query_ids, queries, pairs, skipped }
}

impl TrainingSet {
    /// Eq.-4-style objective: summed pair loss minus `λ1·τ²` per pair plus
    /// `λ2/2·‖X‖₂` per query. The extra terms do not depend on the scores.
    pub fn objective_offset(&self, p: &GbdtParams) -> f64 {
        let norms: f64 =
            self.queries.iter().map(|r| self.rows[r.clone()].iter().flatten().map(|v| v * v).sum::<f64>().sqrt()).sum();
        -p.lambda1 * p.tau * p.tau * self.pairs.len() as f64 + 0.5 * p.lambda2 * norms
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingRound {
    pub round: usize,
    pub loss: f64,
    pub objective: f64,
    pub active_pairs: usize,
}

/// A trained ranker with everything needed to featurize at serving time.
#[derive(Debug, Clone, PartialEq)]
pub struct RankModel {
    pub schema_version: u32,
    pub space: FeatureSpace,
    pub names: Vec<String>,
    pub scaler: Scaler,
    pub params: GbdtParams,
    pub ensemble: Ensemble,
}

pub fn train(set: &TrainingSet, params: &GbdtParams, mut observer: impl FnMut(&TrainingRound)) -> Result<RankModel, RerankError> {
    let offset = set.objective_offset(params);
    let pairs: Vec<(usize, usize)> = set.pairs.iter().map(|p| (p.preferred, p.other)).collect();
    let ensemble = gbdt::train(&set.rows, &pairs, params, |r| {
        observer(&TrainingRound { round: r.round, loss: r.loss, objective: r.loss + offset, active_pairs: r.active_pairs })
    })?;
    Ok(RankModel {
        schema_version: SCHEMA_VERSION,
        space: set.space.clone(),
        names: set.names.clone(),
        scaler: set.scaler.clone(),
        params: params.clone(),
        ensemble,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reranked {
    /// Shortlist positions, best first.
    pub order: Vec<usize>,
    /// Score per shortlist position.
    pub scores: Vec<f64>,
    /// Feature values clamped into [0, 1] across the shortlist.
    pub clamped: usize,
}

impl RankModel {
    /// Scaled (and clamped) feature vector plus its clamp count.
    pub fn features(&self, q: &QueryFeatures, route: &RouteSummary) -> (Vec<f64>, usize) {
        let mut v = self.space.raw(q, route);
        let c = self.scaler.apply(&mut v);
        (v, c)
    }

    pub fn score(&self, fv: &[f64]) -> Result<f64, RerankError> {
        if fv.len() != self.names.len() {
            return Err(RerankError::SchemaMismatch { expected: self.names.len(), found: fv.len() });
        }
        Ok(self.ensemble.score(fv))
    }

    /// Orders the shortlist by descending score; ties keep shortlist order.
    pub fn rerank(
        &self,
        ctx: &TravelContext,
        shortlist: &[RouteSummary],
        profile: Option<&CityProfile>,
    ) -> Result<Reranked, RerankError> {
        let q = QueryFeatures::new(ctx, shortlist, profile);
        let mut clamped = 0;
        let mut scores = Vec::with_capacity(shortlist.len());
        for r in shortlist {
            let (v, c) = self.features(&q, r);
            clamped += c;
            scores.push(self.score(&v)?);
        }
        let mut order: Vec<usize> = (0..shortlist.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Ok(Reranked { order, scores, clamped })
    }

    /// `(feature name, relative gain)`, top feature = 1.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        self.ensemble.importance().into_iter().map(|(i, g)| (self.names[i].clone(), g)).collect()
    }
}

#[cfg(test)]
mod tests;
