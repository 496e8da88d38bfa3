//! The user–anime bipartite graph.
//!
//! Two node types with their own feature tables, one labeled relation
//! `(user, rates, anime)` and its mirror `(anime, rev_rates, user)`.
//! Parallel edges are allowed: a repeated `(user, anime)` pair is a second
//! labeled edge, not an update.
//!
//! During training only train-split edges carry messages; test edges supply
//! labels only. [`EdgeSplit::message_adjacency`] builds that view.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Rng, Scalar};

/// Bijection between external ids and row indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    /// Row `i` gets `ids[i]`. Duplicate ids are rejected.
    pub fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate id `{id}`")));
            }
        }
        Ok(IdMap { ids, index })
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph<T> {
    pub user_x: Matrix<T>,
    pub anime_x: Matrix<T>,
    /// `(user_index, anime_index)` for the `rates` relation.
    pub edges: Vec<(usize, usize)>,
    /// `(anime_index, user_index)`, element-wise mirror of `edges`.
    pub rev_edges: Vec<(usize, usize)>,
    pub labels: Vec<T>,
    pub user_ids: IdMap,
    pub anime_ids: IdMap,
}

/// Which relation to read neighbors from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Destination anime, source users (`rates`).
    UserToAnime,
    /// Destination users, source anime (`rev_rates`).
    AnimeToUser,
}

/// Per-destination neighbor lists for both relations, sources sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    /// For each anime, the users pointing at it.
    pub to_anime: Vec<Vec<usize>>,
    /// For each user, the anime pointing at it.
    pub to_user: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn from_pairs(
        num_users: usize,
        num_anime: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut to_anime = vec![Vec::new(); num_anime];
        let mut to_user = vec![Vec::new(); num_users];
        for (u, a) in pairs {
            to_anime[a].push(u);
            to_user[u].push(a);
        }
        for list in to_anime.iter_mut().chain(to_user.iter_mut()) {
            list.sort_unstable();
        }
        Adjacency { to_anime, to_user }
    }

    pub fn neighbors(&self, direction: Direction) -> &[Vec<usize>] {
        match direction {
            Direction::UserToAnime => &self.to_anime,
            Direction::AnimeToUser => &self.to_user,
        }
    }

    pub fn num_users(&self) -> usize {
        self.to_user.len()
    }

    pub fn num_anime(&self) -> usize {
        self.to_anime.len()
    }
}

/// Assembles a graph, mirroring every edge into `rev_edges`.
pub fn build_graph<T: Scalar>(
    user_x: Matrix<T>,
    anime_x: Matrix<T>,
    edges: Vec<(usize, usize)>,
    labels: Vec<T>,
    user_ids: IdMap,
    anime_ids: IdMap,
) -> Result<HeteroGraph<T>> {
    if user_x.rows() != user_ids.len() {
        return Err(Error::Validation(format!(
            "user feature rows {} != user id count {}",
            user_x.rows(),
            user_ids.len()
        )));
    }
    if anime_x.rows() != anime_ids.len() {
        return Err(Error::Validation(format!(
            "anime feature rows {} != anime id count {}",
            anime_x.rows(),
            anime_ids.len()
        )));
    }
    if edges.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} edges but {} labels",
            edges.len(),
            labels.len()
        )));
    }
    let (nu, na) = (user_x.rows(), anime_x.rows());
    let (lo, hi) = (T::one(), T::lit(10.0));
    for (i, (&(u, a), &y)) in edges.iter().zip(&labels).enumerate() {
        if u >= nu || a >= na {
            return Err(Error::Validation(format!(
                "edge {i} = ({u}, {a}) out of range for {nu} users and {na} anime"
            )));
        }
        if !(y >= lo && y <= hi) {
            return Err(Error::Validation(format!(
                "edge {i} label {y} is outside [1, 10]"
            )));
        }
    }
    let rev_edges = edges.iter().map(|&(u, a)| (a, u)).collect();
    Ok(HeteroGraph {
        user_x,
        anime_x,
        edges,
        rev_edges,
        labels,
        user_ids,
        anime_ids,
    })
}

impl<T: Scalar> HeteroGraph<T> {
    pub fn num_users(&self) -> usize {
        self.user_x.rows()
    }

    pub fn num_anime(&self) -> usize {
        self.anime_x.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Adjacency over every labeled edge.
    pub fn adjacency(&self) -> Adjacency {
        Adjacency::from_pairs(self.num_users(), self.num_anime(), self.edges.iter().copied())
    }

    pub fn neighbor_lists(&self, direction: Direction) -> Vec<Vec<usize>> {
        neighbor_lists(self, direction)
    }
}

/// Sorted source lists per destination node for one relation.
pub fn neighbor_lists<T: Scalar>(g: &HeteroGraph<T>, direction: Direction) -> Vec<Vec<usize>> {
    let mut adj = g.adjacency();
    match direction {
        Direction::UserToAnime => std::mem::take(&mut adj.to_anime),
        Direction::AnimeToUser => std::mem::take(&mut adj.to_user),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledEdge<T> {
    /// Position in [`HeteroGraph::edges`].
    pub edge: usize,
    pub user: usize,
    pub anime: usize,
    pub rating: T,
    pub weight: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Test,
}

impl SplitPart {
    pub fn name(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitPart::Train),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::Argument(format!(
                "unknown split `{other}` (expected train or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSplit<T> {
    pub train: Vec<LabeledEdge<T>>,
    pub test: Vec<LabeledEdge<T>>,
    pub seed: u64,
    pub ratio: f64,
}

pub const DEFAULT_SPLIT_RATIO: f64 = 0.8;

/// Seeded shuffle of all labeled edges, then the first `round(ratio * n)`
/// go to train and the rest to test. Missing weights default to 1.
pub fn split_edges<T: Scalar>(
    g: &HeteroGraph<T>,
    ratio: f64,
    seed: u64,
    weights: Option<&[T]>,
) -> Result<EdgeSplit<T>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Argument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let n = g.num_edges();
    if n == 0 {
        return Err(Error::Validation("no edges to split".into()));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Validation(format!(
                "{} weights for {n} edges",
                w.len()
            )));
        }
        if let Some(i) = w.iter().position(|&x| !(x > T::zero())) {
            return Err(Error::Validation(format!(
                "edge {i} weight {} is not positive",
                w[i]
            )));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let n_train = (ratio * n as f64).round() as usize;
    let to_edge = |i: usize| {
        let (user, anime) = g.edges[i];
        LabeledEdge {
            edge: i,
            user,
            anime,
            rating: g.labels[i],
            weight: weights.map_or(T::one(), |w| w[i]),
        }
    };
    Ok(EdgeSplit {
        train: order[..n_train].iter().map(|&i| to_edge(i)).collect(),
        test: order[n_train..].iter().map(|&i| to_edge(i)).collect(),
        seed,
        ratio,
    })
}

impl<T: Scalar> EdgeSplit<T> {
    pub fn part(&self, part: SplitPart) -> &[LabeledEdge<T>] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Test => &self.test,
        }
    }

    /// Message-passing adjacency: train edges only.
    pub fn message_adjacency(&self, g: &HeteroGraph<T>) -> Adjacency {
        Adjacency::from_pairs(
            g.num_users(),
            g.num_anime(),
            self.train.iter().map(|e| (e.user, e.anime)),
        )
    }

    /// Total number of labeled edges in both parts.
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn pairs<T>(edges: &[LabeledEdge<T>]) -> Vec<(usize, usize)> {
    edges.iter().map(|e| (e.user, e.anime)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> IdMap {
        IdMap::from_ids((0..n).map(|i| format!("{prefix}{i}")).collect()).unwrap()
    }

    fn graph(nu: usize, na: usize, edges: Vec<(usize, usize)>, labels: Vec<f64>) -> Result<HeteroGraph<f64>> {
        build_graph(
            Matrix::identity(nu),
            Matrix::zeros(na, 2),
            edges,
            labels,
            ids("u", nu),
            ids("a", na),
        )
    }

    fn ten_edge_graph() -> HeteroGraph<f64> {
        let edges: Vec<_> = (0..10).map(|i| (i % 3, i % 4)).collect();
        let labels = (0..10).map(|i| 1.0 + i as f64 * 0.5).collect();
        graph(3, 4, edges, labels).unwrap()
    }

    #[test]
    fn reverse_edges_generated() {
        let g = graph(2, 3, vec![(0, 1), (1, 2)], vec![8.0, 5.0]).unwrap();
        assert_eq!(g.rev_edges, vec![(1, 0), (2, 1)]);
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        let round_trip: Vec<_> = g.rev_edges.iter().map(|&(a, u)| (u, a)).collect();
        assert_eq!(round_trip, g.edges);
    }

    #[test]
    fn out_of_range_edge_rejected() {
        let err = graph(2, 3, vec![(5, 0)], vec![5.0]).unwrap_err();
        assert!(err.to_string().contains("(5, 0)"), "{err}");
    }

    #[test]
    fn label_range_checked() {
        assert!(graph(2, 3, vec![(0, 0)], vec![11.0]).is_err());
        assert!(graph(2, 3, vec![(0, 0)], vec![0.5]).is_err());
        assert!(graph(2, 3, vec![(0, 0)], vec![f64::NAN]).is_err());
    }

    #[test]
    fn empty_graph_is_valid() {
        let g = graph(2, 3, vec![], vec![]).unwrap();
        assert_eq!(g.num_edges(), 0);
        assert!(split_edges(&g, 0.8, 1, None).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let g = ten_edge_graph();
        let s = split_edges(&g, 0.8, 5, None).unwrap();
        assert_eq!(s.train.len(), 8);
        assert_eq!(s.test.len(), 2);
        assert_eq!(s, split_edges(&g, 0.8, 5, None).unwrap());
        assert!(s.train.iter().chain(&s.test).all(|e| e.weight == 1.0));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).map(|e| e.edge).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let g = ten_edge_graph();
        assert!(split_edges(&g, 1.0, 0, None).is_err());
        assert!(split_edges(&g, 0.0, 0, None).is_err());
        assert!(split_edges(&g, 0.5, 0, Some(&[1.0; 3])).is_err());
        let mut w = vec![1.0; 10];
        w[4] = 0.0;
        assert!(split_edges(&g, 0.5, 0, Some(&w)).is_err());
    }

    #[test]
    fn neighbor_list_contracts() {
        let g = graph(2, 3, vec![(1, 1), (0, 1), (0, 1)], vec![5.0; 3]).unwrap();
        let to_anime = g.neighbor_lists(Direction::UserToAnime);
        assert_eq!(to_anime[1], vec![0, 0, 1]);
        assert!(to_anime[0].is_empty());
        assert!(to_anime[2].is_empty());
        let to_user = g.neighbor_lists(Direction::AnimeToUser);
        assert_eq!(to_user, vec![vec![1, 1], vec![1]]);
    }

    #[test]
    fn message_adjacency_uses_train_only() {
        let g = ten_edge_graph();
        let s = split_edges(&g, 0.5, 3, None).unwrap();
        let adj = s.message_adjacency(&g);
        let total: usize = adj.to_anime.iter().map(Vec::len).sum();
        assert_eq!(total, s.train.len());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_is_a_partition(n in 1usize..60, ratio in 0.05f64..0.95, seed in any::<u64>()) {
                let edges: Vec<_> = (0..n).map(|i| (i % 4, i % 5)).collect();
                let g = graph(4, 5, edges, vec![3.0; n]).unwrap();
                let s = split_edges(&g, ratio, seed, None).unwrap();
                prop_assert_eq!(s.train.len() + s.test.len(), n);
                prop_assert_eq!(s.train.len(), (ratio * n as f64).round() as usize);
                let mut seen = vec![false; n];
                for e in s.train.iter().chain(&s.test) {
                    prop_assert!(!seen[e.edge]);
                    seen[e.edge] = true;
                    prop_assert_eq!((e.user, e.anime), g.edges[e.edge]);
                }
                prop_assert_eq!(s, split_edges(&g, ratio, seed, None).unwrap());
            }
        }
    }
}
