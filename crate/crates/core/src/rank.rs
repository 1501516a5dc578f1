//! First-pass ranking: drop inferior candidates, group by mode, order each
//! group by a weighted cost and take group winners round-robin into a short
//! list.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::TransportMode;
use crate::search::RouteCandidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRules {
    /// Jaccard similarity of segment sets above which the costlier route goes.
    pub similarity_threshold: f64,
    /// Routes longer than this multiple of the shortest are detours.
    pub detour_ratio: f64,
    /// Mode sequences (after collapsing repeats) that may not appear
    /// contiguously in a route.
    pub forbidden_patterns: Vec<Vec<TransportMode>>,
}

impl Default for FilterRules {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.8,
            detour_ratio: 2.0,
            forbidden_patterns: vec![vec![TransportMode::Metro, TransportMode::Bus, TransportMode::Metro]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub w_time: f64,
    pub w_dist: f64,
    pub w_walk: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w_time: 0.6, w_dist: 0.2, w_walk: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShortlistRange {
    pub min: usize,
    pub max: usize,
}

impl Default for ShortlistRange {
    fn default() -> Self {
        Self { min: 5, max: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModeGroup {
    BusOnly,
    MetroOnly,
    Mixed,
    Other,
}

impl ModeGroup {
    pub const ALL: [ModeGroup; 4] = [ModeGroup::BusOnly, ModeGroup::MetroOnly, ModeGroup::Mixed, ModeGroup::Other];

    pub fn of(modes: &[TransportMode]) -> ModeGroup {
        let distinct: BTreeSet<TransportMode> = modes.iter().copied().filter(|m| *m != TransportMode::Walk).collect();
        match distinct.len() {
            0 => ModeGroup::Other,
            1 => match distinct.first() {
                Some(TransportMode::Bus) => ModeGroup::BusOnly,
                Some(TransportMode::Metro) => ModeGroup::MetroOnly,
                _ => ModeGroup::Other,
            },
            _ => ModeGroup::Mixed,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeGroup::BusOnly => "bus_only",
            ModeGroup::MetroOnly => "metro_only",
            ModeGroup::Mixed => "mixed",
            ModeGroup::Other => "other",
        }
    }
}

/// Mode sequence with consecutive repeats collapsed.
pub fn collapsed_modes(modes: &[TransportMode]) -> Vec<TransportMode> {
    let mut out: Vec<TransportMode> = Vec::with_capacity(modes.len());
    for &m in modes {
        if m != TransportMode::Walk && out.last() != Some(&m) {
            out.push(m);
        }
    }
    out
}

fn matches_pattern(modes: &[TransportMode], pattern: &[TransportMode]) -> bool {
    !pattern.is_empty() && modes.windows(pattern.len()).any(|w| w == pattern)
}

fn segment_keys(c: &RouteCandidate) -> BTreeSet<(u32, u32, u32)> {
    c.segments.iter().map(|s| (s.line, s.board, s.alight)).collect()
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Indices of the candidates that survive the rules, cheapest (by ETA,
/// then signature) first. Never empty for non-empty input.
pub fn filter_inferior(candidates: &[RouteCandidate], rules: &FilterRules) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&candidates[a], &candidates[b]);
        x.duration_s.total_cmp(&y.duration_s).then(x.signature.cmp(&y.signature)).then(a.cmp(&b))
    });
    let Some(&cheapest) = order.first() else {
        return Vec::new();
    };
    let min_dist = candidates.iter().map(|c| c.distance_m).fold(f64::INFINITY, f64::min);
    let mut kept: Vec<usize> = Vec::new();
    let mut kept_keys: Vec<BTreeSet<(u32, u32, u32)>> = Vec::new();
    for i in order {
        let c = &candidates[i];
        if c.distance_m > rules.detour_ratio * min_dist {
            continue;
        }
        let modes = collapsed_modes(&c.modes());
        if rules.forbidden_patterns.iter().any(|p| matches_pattern(&modes, p)) {
            continue;
        }
        let keys = segment_keys(c);
        if kept_keys.iter().any(|k| jaccard(k, &keys) > rules.similarity_threshold) {
            continue;
        }
        kept.push(i);
        kept_keys.push(keys);
    }
    if kept.is_empty() {
        kept.push(cheapest);
    }
    kept
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortlistEntry {
    /// Index into the candidate slice given to [`primary_rank`].
    pub index: usize,
    pub group: ModeGroup,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortlist {
    pub entries: Vec<ShortlistEntry>,
    pub after_filter: usize,
    pub groups: usize,
}

impl Shortlist {
    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }
}

/// Min-max normalizes each factor over `idx` and combines them.
fn weighted_costs(candidates: &[RouteCandidate], idx: &[usize], w: &CostWeights) -> Vec<f64> {
    let norm = |f: &dyn Fn(&RouteCandidate) -> f64| -> Vec<f64> {
        let vals: Vec<f64> = idx.iter().map(|&i| f(&candidates[i])).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        vals.iter().map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }).collect()
    };
    let t = norm(&|c| c.duration_s);
    let d = norm(&|c| c.distance_m);
    let k = norm(&|c| c.walk_m());
    (0..idx.len()).map(|j| w.w_time * t[j] + w.w_dist * d[j] + w.w_walk * k[j]).collect()
}

/// Filter, group, sort and select. Groups are visited in order of their
/// best member's cost; each round takes the next member of every group.
/// Selection stops at the end of the first round that reaches
/// `range.min`, and never exceeds `range.max`.
pub fn primary_rank(
    candidates: &[RouteCandidate],
    rules: &FilterRules,
    weights: &CostWeights,
    range: ShortlistRange,
) -> Shortlist {
    let kept = filter_inferior(candidates, rules);
    let costs = weighted_costs(candidates, &kept, weights);
    let mut groups: BTreeMap<ModeGroup, Vec<ShortlistEntry>> = BTreeMap::new();
    for (j, &i) in kept.iter().enumerate() {
        let group = ModeGroup::of(&candidates[i].modes());
        groups.entry(group).or_default().push(ShortlistEntry { index: i, group, cost: costs[j] });
    }
    let mut groups: Vec<Vec<ShortlistEntry>> = groups.into_values().collect();
    for g in &mut groups {
        g.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(candidates[a.index].signature.cmp(&candidates[b.index].signature)));
    }
    groups.sort_by(|a, b| a[0].cost.total_cmp(&b[0].cost).then(a[0].group.cmp(&b[0].group)));

    let n_groups = groups.len();
    let mut entries = Vec::new();
    let mut round = 0;
    'outer: loop {
        let mut took = false;
        for g in &groups {
            if let Some(e) = g.get(round) {
                if entries.len() >= range.max {
                    break 'outer;
                }
                entries.push(e.clone());
                took = true;
            }
        }
        round += 1;
        if !took || entries.len() >= range.min {
            break;
        }
    }
    Shortlist { entries, after_filter: kept.len(), groups: n_groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::fixtures::{candidate as cand, ride_segment as seg, synthetic_candidates};

    #[test]
    fn identical_signatures_keep_one() {
        let a = cand(7, vec![seg(1, 1, 2, TransportMode::Bus)], 100.0, 1000.0, 0.0);
        let kept = filter_inferior(&[a.clone(), a], &FilterRules::default());
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn metro_bus_metro_is_forbidden() {
        let mbm = cand(
            1,
            vec![seg(1, 1, 2, TransportMode::Metro), seg(2, 2, 3, TransportMode::Bus), seg(3, 3, 4, TransportMode::Metro)],
            100.0,
            1000.0,
            0.0,
        );
        let ok = cand(2, vec![seg(4, 1, 4, TransportMode::Bus)], 500.0, 1500.0, 0.0);
        assert_eq!(filter_inferior(&[mbm, ok], &FilterRules::default()), vec![1]);
    }

    #[test]
    fn repeated_modes_collapse_before_matching() {
        let modes = [TransportMode::Metro, TransportMode::Metro, TransportMode::Bus, TransportMode::Metro];
        assert_eq!(collapsed_modes(&modes), [TransportMode::Metro, TransportMode::Bus, TransportMode::Metro]);
    }

    #[test]
    fn lone_failing_candidate_is_kept() {
        let mbm = cand(
            1,
            vec![seg(1, 1, 2, TransportMode::Metro), seg(2, 2, 3, TransportMode::Bus), seg(3, 3, 4, TransportMode::Metro)],
            100.0,
            1000.0,
            0.0,
        );
        assert_eq!(filter_inferior(&[mbm], &FilterRules::default()), vec![0]);
    }

    #[test]
    fn detours_are_dropped() {
        let a = cand(1, vec![seg(1, 1, 2, TransportMode::Bus)], 100.0, 1000.0, 0.0);
        let b = cand(2, vec![seg(2, 1, 2, TransportMode::Bus)], 90.0, 2500.0, 0.0);
        assert_eq!(filter_inferior(&[a, b], &FilterRules::default()), vec![0]);
    }

    #[test]
    fn sixty_candidates_reduce_to_five_to_seven_covering_all_groups() {
        let cands = synthetic_candidates(60, 1);
        let s = primary_rank(&cands, &FilterRules::default(), &CostWeights::default(), ShortlistRange::default());
        assert!((5..=7).contains(&s.entries.len()), "{}", s.entries.len());
        let groups: BTreeSet<ModeGroup> = s.entries.iter().map(|e| e.group).collect();
        assert_eq!(groups.len(), 3);
    }

    #[test]
    fn two_candidates_give_two() {
        let cands = synthetic_candidates(2, 2);
        let s = primary_rank(&cands, &FilterRules::default(), &CostWeights::default(), ShortlistRange::default());
        assert_eq!(s.entries.len(), 2);
    }

    #[test]
    fn equal_cost_ties_follow_signature() {
        let a = cand(9, vec![seg(1, 1, 2, TransportMode::Bus)], 100.0, 1000.0, 0.0);
        let b = cand(3, vec![seg(2, 1, 5, TransportMode::Bus)], 100.0, 1000.0, 0.0);
        let s = primary_rank(&[a, b], &FilterRules::default(), &CostWeights::default(), ShortlistRange::default());
        assert_eq!(s.indices(), vec![1, 0]);
    }

    #[test]
    fn group_labels() {
        use TransportMode::*;
        assert_eq!(ModeGroup::of(&[Bus, Bus]), ModeGroup::BusOnly);
        assert_eq!(ModeGroup::of(&[Metro]), ModeGroup::MetroOnly);
        assert_eq!(ModeGroup::of(&[Metro, Bus]), ModeGroup::Mixed);
        assert_eq!(ModeGroup::of(&[Ferry]), ModeGroup::Other);
    }

    proptest! {
        #[test]
        fn shortlist_bounds_and_scale_invariance(n in 1usize..100, seed in 0u64..500, scale in 0.01f64..100.0) {
            let cands = synthetic_candidates(n, seed);
            let w = CostWeights::default();
            let s = primary_rank(&cands, &FilterRules::default(), &w, ShortlistRange::default());
            prop_assert!(s.entries.len() <= 7);
            prop_assert!(s.entries.len() >= s.after_filter.min(5));
            let groups: BTreeSet<ModeGroup> = s.entries.iter().map(|e| e.group).collect();
            prop_assert_eq!(groups.len(), s.groups);
            let scaled = CostWeights { w_time: w.w_time * scale, w_dist: w.w_dist * scale, w_walk: w.w_walk * scale };
            let t = primary_rank(&cands, &FilterRules::default(), &scaled, ShortlistRange::default());
            prop_assert_eq!(s.indices(), t.indices());
        }
    }
}
