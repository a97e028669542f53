use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Map images ordered by relevance, best first.
///
/// `universe`, when set, is the number of map images the list ranks over;
/// ids absent from the list then share the rank `universe + 1`. Without it
/// absent ids take `len + 1`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RankedList {
    items: Vec<(u32, f64)>,
    rank_of: HashMap<u32, usize>,
    universe: Option<usize>,
}

#[derive(Serialize)]
struct RankedItem {
    rank: usize,
    id: u32,
    score: f64,
}

impl RankedList {
    /// Sort `(id, score)` pairs by descending score, ascending id on ties.
    pub fn from_scores(scores: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut items: Vec<(u32, f64)> = scores.into_iter().collect();
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self::from_ordered(items)
    }

    /// Take items in the given order. Panics on duplicate ids or on scores
    /// that increase along the list.
    pub fn from_ordered(items: Vec<(u32, f64)>) -> Self {
        assert!(
            items.windows(2).all(|w| w[0].1 >= w[1].1),
            "scores must be non-increasing"
        );
        let rank_of: HashMap<u32, usize> = items.iter().enumerate().map(|(i, &(id, _))| (id, i + 1)).collect();
        assert_eq!(rank_of.len(), items.len(), "duplicate ids in ranked list");
        Self {
            items,
            rank_of,
            universe: None,
        }
    }

    /// Plain id order, scores `len - i`.
    pub fn from_ids(ids: &[u32]) -> Self {
        let n = ids.len();
        Self::from_ordered(ids.iter().enumerate().map(|(i, &id)| (id, (n - i) as f64)).collect())
    }

    pub fn with_universe(mut self, universe: usize) -> Self {
        self.universe = Some(universe);
        self
    }

    pub fn universe(&self) -> Option<usize> {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[(u32, f64)] {
        &self.items
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.items.iter().map(|&(id, _)| id)
    }

    pub fn top(&self) -> Option<u32> {
        self.items.first().map(|&(id, _)| id)
    }

    /// 1-based rank, if present.
    pub fn rank_of(&self, id: u32) -> Option<usize> {
        self.rank_of.get(&id).copied()
    }

    pub fn missing_rank(&self) -> usize {
        self.universe.map_or(self.items.len(), |n| n.max(self.items.len())) + 1
    }

    pub fn rank_or_missing(&self, id: u32) -> usize {
        self.rank_of(id).unwrap_or_else(|| self.missing_rank())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let items: Vec<RankedItem> = self
            .items
            .iter()
            .enumerate()
            .map(|(i, &(id, score))| RankedItem { rank: i + 1, id, score })
            .collect();
        serde_json::to_value(items).expect("ranked list serializes")
    }
}

/// Reciprocal-rank fusion: each id scores `Σ 1/rank_i(id)` over the input
/// lists, with absent ids ranked just past the end of a list.
pub fn strong_query(lists: &[RankedList]) -> Result<RankedList> {
    if lists.is_empty() {
        return Err(Error::EmptyInput("no ranked lists to fuse"));
    }
    let mut ids: Vec<u32> = lists.iter().flat_map(|l| l.ids()).collect();
    ids.sort_unstable();
    ids.dedup();
    let scores = ids.into_iter().map(|id| {
        let terms = lists.iter().map(|l| 1.0 / l.rank_or_missing(id) as f64);
        (id, canonical_sum(terms))
    });
    let mut out = RankedList::from_scores(scores);
    if let Some(u) = lists.iter().filter_map(|l| l.universe).max() {
        out = out.with_universe(u);
    }
    Ok(out)
}

/// Order-independent sum: terms are added in ascending order so that
/// permuting the inputs never changes the result bitwise.
pub(crate) fn canonical_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = terms.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}
