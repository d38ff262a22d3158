//! Personalized fixed-size cascade view for one target user.
//!
//! Pass 1 keeps influencers and users the target follows, in cascade order.
//! Remaining slots are filled with the other cascade members ranked by
//! reposter-embedding similarity to the target, then padded with
//! [`PAD_NODE`].
use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{FollowerGraph, UserId};
use crate::error::{Error, Result};
use crate::influence::{reposter_similarity, InfluenceModel};

pub const PAD_NODE: UserId = UserId::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalizedView {
    /// Exactly `m` entries; the tail past `real_length` is [`PAD_NODE`].
    pub nodes: Vec<UserId>,
    pub real_length: usize,
}

impl PersonalizedView {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn real_nodes(&self) -> &[UserId] {
        &self.nodes[..self.real_length]
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.nodes.len()).map(|i| i < self.real_length).collect()
    }

    fn padded(mut nodes: Vec<UserId>, m: usize) -> Self {
        let real_length = nodes.len();
        nodes.resize(m, PAD_NODE);
        PersonalizedView { nodes, real_length }
    }
}

fn check(v_t: &[UserId], graph: &FollowerGraph, model: &InfluenceModel, target: UserId, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Invalid("view size m must be at least 1".into()));
    }
    let n = model.node_count().min(graph.node_count());
    if target as usize >= n {
        return Err(Error::UnknownUser(target));
    }
    if let Some(&bad) = v_t.iter().find(|&&v| v as usize >= model.node_count()) {
        return Err(Error::UnknownUser(bad));
    }
    Ok(())
}

pub fn select_local_influence(
    v_t: &[UserId],
    graph: &FollowerGraph,
    model: &InfluenceModel,
    influencers: &HashSet<UserId>,
    target: UserId,
    m: usize,
) -> Result<PersonalizedView> {
    check(v_t, graph, model, target, m)?;
    let mut kept = Vec::with_capacity(m);
    let mut rest = Vec::new();
    for (pos, &v) in v_t.iter().enumerate() {
        if influencers.contains(&v) || graph.has_edge(target, v) {
            if kept.len() < m {
                kept.push(v);
            }
        } else {
            rest.push((pos, v));
        }
    }
    let need = m.saturating_sub(kept.len()).min(rest.len());
    if need > 0 {
        let t = model.reposter_embedding(target);
        let mut scored: Vec<(f64, usize, UserId)> = rest
            .into_iter()
            .map(|(pos, v)| (t.dot(&model.reposter_embedding(v)), pos, v))
            .collect();
        let cmp = |a: &(f64, usize, UserId), b: &(f64, usize, UserId)| {
            b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
        };
        if need < scored.len() {
            scored.select_nth_unstable_by(need - 1, cmp);
            scored.truncate(need);
        }
        scored.sort_unstable_by(cmp);
        kept.extend(scored.into_iter().map(|(_, _, v)| v));
    }
    Ok(PersonalizedView::padded(kept, m))
}

/// Same as [`select_local_influence`] with the model's own influencer set.
pub fn select_with_model_influencers(
    v_t: &[UserId],
    graph: &FollowerGraph,
    model: &InfluenceModel,
    target: UserId,
    m: usize,
) -> Result<PersonalizedView> {
    let influencers: HashSet<UserId> = model.influencers().iter().copied().collect();
    select_local_influence(v_t, graph, model, &influencers, target, m)
}

/// Unoptimized reference used to cross-check [`select_local_influence`].
pub fn oracle_select(
    v_t: &[UserId],
    graph: &FollowerGraph,
    model: &InfluenceModel,
    influencers: &HashSet<UserId>,
    target: UserId,
    m: usize,
) -> Result<PersonalizedView> {
    check(v_t, graph, model, target, m)?;
    let mut selected: Vec<UserId> = Vec::new();
    let mut taken = vec![false; v_t.len()];
    for j in 0..v_t.len() {
        let v = v_t[j];
        let neighbour = graph.followees(target).contains(&v);
        if influencers.contains(&v) || neighbour {
            taken[j] = true;
            selected.push(v);
        }
    }
    if selected.len() > m {
        selected.truncate(m);
    }
    while selected.len() < m {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..v_t.len() {
            if taken[j] {
                continue;
            }
            let sim = reposter_similarity(model, target, v_t[j]);
            match best {
                Some((_, s)) if !(sim > s) => {}
                _ => best = Some((j, sim)),
            }
        }
        match best {
            Some((j, _)) => {
                taken[j] = true;
                selected.push(v_t[j]);
            }
            None => break,
        }
    }
    let real_length = selected.len();
    while selected.len() < m {
        selected.push(PAD_NODE);
    }
    Ok(PersonalizedView {
        nodes: selected,
        real_length,
    })
}
