//! Synthetic data: small random graphs for gradient checks and overfitting
//! runs, and a genre-affinity rating generator that writes CSV files in the
//! same layout as the real anime and rating tables.
//!
//! Generated ratings follow `3 + 6·affinity(user, anime) + N(0, σ²)`,
//! rounded and clamped to `[1, 10]`, where `affinity` is the user's mean
//! preference over the anime's genres (so it lies in `[0, 1]`). Which pairs
//! get rated is biased toward liked anime: a uniformly drawn pair is kept
//! with probability `affinity^watch_bias`.

use std::collections::HashSet;
use std::path::Path;

use crate::encoders::Table;
use crate::error::{Error, Result};
use crate::graph::{build_graph, HeteroGraph, IdMap};
use crate::numkit::{Matrix, Rng};

/// Random bipartite graph with identity user features, anime features of
/// `embed_dim` uniform values in `[-1, 1]` followed by `genre_dim` random
/// 0/1 flags, and integer ratings drawn uniformly from `1..=10`. Edges are
/// distinct `(user, anime)` pairs.
pub fn random_graph(
    num_users: usize,
    num_anime: usize,
    num_edges: usize,
    embed_dim: usize,
    genre_dim: usize,
    rng: &mut Rng,
) -> Result<HeteroGraph<f64>> {
    let width = embed_dim + genre_dim;
    let mut anime_x = Matrix::zeros(num_anime, width);
    for r in 0..num_anime {
        let row = anime_x.row_mut(r);
        for v in &mut row[..embed_dim] {
            *v = rng.uniform_in(-1.0, 1.0);
        }
        for v in &mut row[embed_dim..] {
            *v = if rng.uniform() < 0.4 { 1.0 } else { 0.0 };
        }
    }
    if num_edges > num_users * num_anime {
        return Err(Error::Argument(format!(
            "{num_edges} edges requested but only {} distinct pairs exist",
            num_users * num_anime
        )));
    }
    let mut seen = HashSet::with_capacity(num_edges);
    let mut edges = Vec::with_capacity(num_edges);
    let mut labels = Vec::with_capacity(num_edges);
    while edges.len() < num_edges {
        let e = (rng.below(num_users), rng.below(num_anime));
        if seen.insert(e) {
            edges.push(e);
            labels.push((1 + rng.below(10)) as f64);
        }
    }
    build_graph(
        Matrix::identity(num_users),
        anime_x,
        edges,
        labels,
        numbered_ids("u", num_users),
        numbered_ids("a", num_anime),
    )
}

fn numbered_ids(prefix: &str, n: usize) -> IdMap {
    IdMap::from_ids((0..n).map(|i| format!("{prefix}{i}")).collect()).expect("distinct ids")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_anime: usize,
    /// Distinct `(user, anime)` pairs to rate.
    pub num_ratings: usize,
    pub num_genres: usize,
    pub noise_sigma: f64,
    /// 0 rates uniformly random pairs.
    pub watch_bias: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 200,
            num_anime: 300,
            num_ratings: 5000,
            num_genres: 8,
            noise_sigma: 0.5,
            watch_bias: 2.0,
            seed: 7,
        }
    }
}

pub const GENRE_NAMES: [&str; 16] = [
    "Action", "Comedy", "Drama", "Fantasy", "Romance", "Sci-Fi", "Horror", "Mystery", "Sports",
    "Music", "Mecha", "Slice of Life", "Supernatural", "Historical", "Psychological", "Adventure",
];

const GENRE_WORDS: [[&str; 4]; 16] = [
    ["battle", "sword", "explosion", "fight"],
    ["joke", "silly", "laugh", "prank"],
    ["tears", "family", "loss", "struggle"],
    ["magic", "dragon", "kingdom", "spell"],
    ["love", "confession", "heart", "date"],
    ["spaceship", "android", "future", "laser"],
    ["ghost", "blood", "curse", "scream"],
    ["detective", "clue", "murder", "secret"],
    ["tournament", "team", "coach", "championship"],
    ["band", "concert", "guitar", "idol"],
    ["robot", "pilot", "cockpit", "mech"],
    ["cafe", "everyday", "neighbors", "quiet"],
    ["spirit", "demon", "shrine", "power"],
    ["samurai", "empire", "shogun", "era"],
    ["mind", "trauma", "identity", "obsession"],
    ["journey", "treasure", "island", "quest"],
];

const FILLER: [&str; 8] = ["young", "city", "world", "day", "story", "friend", "school", "life"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Columns `MAL_ID, Name, Genres, sypnopsis`.
    pub anime: Table,
    /// Columns `user_id, anime_id, rating`.
    pub ratings: Table,
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    if cfg.num_genres == 0 || cfg.num_genres > GENRE_NAMES.len() {
        return Err(Error::Argument(format!(
            "num_genres must be in 1..={}",
            GENRE_NAMES.len()
        )));
    }
    if !(cfg.watch_bias >= 0.0 && cfg.watch_bias <= 8.0) {
        return Err(Error::Argument("watch_bias must lie in [0, 8]".into()));
    }
    if cfg.num_users == 0 || cfg.num_anime == 0 {
        return Err(Error::Argument("need at least one user and one anime".into()));
    }
    if cfg.num_ratings > cfg.num_users * cfg.num_anime {
        return Err(Error::Argument(format!(
            "{} ratings requested but only {} distinct pairs exist",
            cfg.num_ratings,
            cfg.num_users * cfg.num_anime
        )));
    }
    let mut rng = Rng::new(cfg.seed);
    let g = cfg.num_genres;

    let mut anime_genres: Vec<Vec<usize>> = Vec::with_capacity(cfg.num_anime);
    let mut anime_rows = Vec::with_capacity(cfg.num_anime);
    for i in 0..cfg.num_anime {
        let k = 1 + rng.below(3.min(g));
        let mut gs: Vec<usize> = Vec::with_capacity(k);
        while gs.len() < k {
            let c = rng.below(g);
            if !gs.contains(&c) {
                gs.push(c);
            }
        }
        let mut words = Vec::new();
        for _ in 0..12 {
            if rng.uniform() < 0.7 {
                let genre = gs[rng.below(gs.len())];
                words.push(GENRE_WORDS[genre][rng.below(4)]);
            } else {
                words.push(FILLER[rng.below(FILLER.len())]);
            }
        }
        let synopsis = format!("The {}.", words.join(" "));
        let genre_cell = gs.iter().map(|&c| GENRE_NAMES[c]).collect::<Vec<_>>().join(", ");
        anime_rows.push(vec![
            anime_id(i),
            format!("Title {i}"),
            genre_cell,
            synopsis,
        ]);
        anime_genres.push(gs);
    }

    let affinity: Vec<Vec<f64>> = (0..cfg.num_users)
        .map(|_| (0..g).map(|_| rng.uniform()).collect())
        .collect();

    let mut seen = HashSet::with_capacity(cfg.num_ratings);
    let mut rating_rows = Vec::with_capacity(cfg.num_ratings);
    while rating_rows.len() < cfg.num_ratings {
        let (u, a) = (rng.below(cfg.num_users), rng.below(cfg.num_anime));
        if seen.contains(&(u, a)) {
            continue;
        }
        let gs = &anime_genres[a];
        let dot = gs.iter().map(|&c| affinity[u][c]).sum::<f64>() / gs.len() as f64;
        if rng.uniform() >= dot.powf(cfg.watch_bias) {
            continue;
        }
        seen.insert((u, a));
        let raw = 3.0 + 6.0 * dot + rng.normal(0.0, cfg.noise_sigma);
        let rating = raw.round().clamp(1.0, 10.0);
        rating_rows.push(vec![user_id(u), anime_id(a), format!("{rating}")]);
    }

    Ok(SyntheticData {
        anime: Table {
            headers: ["MAL_ID", "Name", "Genres", "sypnopsis"].map(String::from).to_vec(),
            rows: anime_rows,
        },
        ratings: Table {
            headers: ["user_id", "anime_id", "rating"].map(String::from).to_vec(),
            rows: rating_rows,
        },
    })
}

fn anime_id(i: usize) -> String {
    (3 * i + 1).to_string()
}

fn user_id(u: usize) -> String {
    (1000 + u).to_string()
}

pub fn write_table(table: &Table, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format(None, e.to_string());
    w.write_record(&table.headers).map_err(csv_err)?;
    for r in &table.rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(None, e.to_string()))?;
    crate::util::write_atomic(path, &bytes)
}

impl SyntheticData {
    /// Writes `anime.csv` and `ratings.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_table(&self.anime, &dir.join("anime.csv"))?;
        write_table(&self.ratings, &dir.join("ratings.csv"))
    }
}
