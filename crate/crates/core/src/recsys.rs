//! Top-k recommendation: score every anime the user has no labeled edge to,
//! clamp to `[1, 10]`, sort descending with an ascending-id tie-break.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gnn::{decoder_forward, encoder_forward, ModelConfig, ModelParams};
use crate::graph::{Adjacency, HeteroGraph};
use crate::numkit::{Matrix, Scalar};
use crate::train::clamp_rating;

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecItem {
    pub anime_id: String,
    #[serde(skip)]
    pub anime_index: usize,
    pub predicted_rating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecList {
    pub user_id: String,
    pub items: Vec<RecItem>,
}

/// Numeric order when both ids parse as integers, byte order otherwise.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

/// Shared embeddings plus the per-user exclusion sets.
pub struct Recommender<'a, T> {
    params: &'a ModelParams<T>,
    graph: &'a HeteroGraph<T>,
    user_z: Matrix<T>,
    anime_z: Matrix<T>,
    rated: Vec<HashSet<usize>>,
}

impl<'a, T: Scalar> Recommender<'a, T> {
    /// `message` is the adjacency used for message passing (train edges);
    /// exclusion always uses every labeled edge of `graph`.
    pub fn new(
        params: &'a ModelParams<T>,
        config: &ModelConfig,
        graph: &'a HeteroGraph<T>,
        message: &Adjacency,
    ) -> Result<Self> {
        let (user_z, anime_z, _) = encoder_forward(params, config, graph, message)?;
        let mut rated = vec![HashSet::new(); graph.num_users()];
        for &(u, a) in &graph.edges {
            rated[u].insert(a);
        }
        Ok(Recommender {
            params,
            graph,
            user_z,
            anime_z,
            rated,
        })
    }

    pub fn user_index(&self, user_id: &str) -> Result<usize> {
        self.graph.user_ids.get(user_id).ok_or_else(|| unknown_user(self.graph, user_id))
    }

    /// Clamped scores of every candidate anime for `user`, unsorted.
    pub fn candidate_scores(&self, user: usize) -> Result<Vec<(usize, f64)>> {
        let candidates: Vec<usize> = (0..self.graph.num_anime())
            .filter(|a| !self.rated[user].contains(a))
            .collect();
        let pairs: Vec<(usize, usize)> = candidates.iter().map(|&a| (user, a)).collect();
        let pred = decoder_forward(self.params, &self.user_z, &self.anime_z, &pairs)?;
        Ok(candidates
            .into_iter()
            .zip(pred)
            .map(|(a, p)| (a, clamp_rating(p.as_f64())))
            .collect())
    }

    pub fn recommend(&self, user_id: &str, k: usize) -> Result<RecList> {
        check_k(k)?;
        let user = self.user_index(user_id)?;
        let ids = &self.graph.anime_ids;
        let mut scored = self.candidate_scores(user)?;
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| compare_ids(ids.id(a.0), ids.id(b.0)))
        });
        scored.truncate(k);
        Ok(RecList {
            user_id: user_id.to_string(),
            items: scored
                .into_iter()
                .map(|(a, p)| RecItem {
                    anime_id: ids.id(a).to_string(),
                    anime_index: a,
                    predicted_rating: p,
                })
                .collect(),
        })
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    Ok(())
}

fn unknown_user<T>(graph: &HeteroGraph<T>, user_id: &str) -> Error {
    let ids = graph.user_ids.ids();
    let mut near: Vec<&String> = ids.iter().collect();
    near.sort_by_key(|id| (edit_distance(id, user_id), (*id).clone()));
    near.truncate(3);
    let near: Vec<&str> = near.into_iter().map(String::as_str).collect();
    Error::Lookup(format!(
        "unknown user id `{user_id}` ({} known users; nearest: {})",
        ids.len(),
        near.join(", ")
    ))
}

fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

pub fn recommend_topk<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    graph: &HeteroGraph<T>,
    message: &Adjacency,
    user_id: &str,
    k: usize,
) -> Result<RecList> {
    check_k(k)?;
    if graph.user_ids.get(user_id).is_none() {
        return Err(unknown_user(graph, user_id));
    }
    Recommender::new(params, config, graph, message)?.recommend(user_id, k)
}

/// One encoder pass shared by all users. Every id is checked before any
/// list is produced.
pub fn batch_recommend<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    graph: &HeteroGraph<T>,
    message: &Adjacency,
    user_ids: &[&str],
    k: usize,
) -> Result<Vec<RecList>> {
    check_k(k)?;
    if let Some(bad) = user_ids.iter().find(|id| graph.user_ids.get(id).is_none()) {
        return Err(unknown_user(graph, bad));
    }
    if user_ids.is_empty() {
        return Ok(Vec::new());
    }
    let rec = Recommender::new(params, config, graph, message)?;
    user_ids.iter().map(|id| rec.recommend(id, k)).collect()
}
