//! The prepare pipeline and the on-disk data directory.
//!
//! Layout of a data directory:
//!
//! ```text
//! manifest.json   counts, dims, seed, split ratio, genre vocab, id maps, names
//! user_x.bin      feature matrix (see below)
//! anime_x.bin     feature matrix
//! edges.csv       user,anime,rating,weight,split,pos   (graph edge order)
//! ```
//!
//! Matrix files are the 8 magic bytes `HSMATRX1`, then `rows` and `cols` as
//! little-endian u64, then `rows * cols` little-endian f64 in row-major order.
//! `pos` is the position of the edge inside its split part, so a reload
//! reproduces the split order exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoders::{
    build_anime_features, build_genre_vocab, build_user_features, clean_rows, collect_user_ids,
    load_edge_table, load_embedding_file, AnimeColumns, EmbeddingProvider, GenreVocab, HashingEmbedder,
    RatingColumns, Table, DEFAULT_GENRE_SEPARATOR, DEFAULT_HASH_DIM,
};
use crate::error::{Error, Result};
use crate::graph::{build_graph, split_edges, EdgeSplit, HeteroGraph, IdMap, LabeledEdge, DEFAULT_SPLIT_RATIO};
use crate::numkit::Matrix;

pub const DATADIR_FORMAT_VERSION: u64 = 1;
const MATRIX_MAGIC: &[u8; 8] = b"HSMATRX1";

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingSource {
    /// Precomputed embedding CSV.
    File { path: PathBuf, allow_missing: bool },
    /// Feature-hashed bag of words of this width.
    Hashing { dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOptions {
    pub embeddings: EmbeddingSource,
    pub max_users: Option<usize>,
    pub ratio: f64,
    pub seed: u64,
    pub genre_separator: String,
    /// Keep only the first rating of each `(user, anime)` pair.
    pub dedup: bool,
    pub anime_columns: AnimeColumns,
    pub rating_columns: RatingColumns,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            embeddings: EmbeddingSource::Hashing { dim: DEFAULT_HASH_DIM },
            max_users: None,
            ratio: DEFAULT_SPLIT_RATIO,
            seed: 0,
            genre_separator: DEFAULT_GENRE_SEPARATOR.to_string(),
            dedup: false,
            anime_columns: AnimeColumns::default(),
            rating_columns: RatingColumns::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepareStats {
    pub anime_rows_dropped: usize,
    pub rating_rows_dropped: usize,
    /// Rating rows whose user or anime id is not part of the graph.
    pub ratings_skipped: usize,
    pub duplicates_removed: usize,
    pub unknown_genres: usize,
    pub missing_embeddings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: HeteroGraph<f64>,
    pub split: EdgeSplit<f64>,
    pub vocab: GenreVocab,
    pub embed_dim: usize,
    pub anime_names: Vec<String>,
    pub weighted: bool,
    pub stats: PrepareStats,
}

impl Dataset {
    pub fn genre_dim(&self) -> usize {
        self.vocab.len()
    }
}

pub fn prepare(anime: &Table, ratings: &Table, opts: &PrepareOptions) -> Result<Dataset> {
    let acols = &opts.anime_columns;
    let rcols = &opts.rating_columns;
    let (anime, anime_report) = clean_rows(anime, &acols.required())?;
    let (ratings, rating_report) = clean_rows(ratings, &rcols.required())?;
    if anime.is_empty() {
        return Err(Error::Validation("no anime rows left after cleaning".into()));
    }

    let genre_cells = anime.column(&acols.genres)?;
    let vocab = build_genre_vocab(&genre_cells, &opts.genre_separator);

    let anime_ids: Vec<String> = anime.column(&acols.id)?.iter().map(|s| s.trim().to_string()).collect();
    let mut missing_embeddings = 0;
    let provider: Box<dyn EmbeddingProvider> = match &opts.embeddings {
        EmbeddingSource::File { path, allow_missing } => {
            let t = load_embedding_file(path, &anime_ids, *allow_missing)?;
            missing_embeddings = t.missing.len();
            Box::new(t)
        }
        EmbeddingSource::Hashing { dim } => Box::new(HashingEmbedder { dim: *dim }),
    };
    let embed_dim = provider.dim();
    let nodes = build_anime_features(&anime, acols, &vocab, provider.as_ref())?;

    let user_ids = collect_user_ids(&ratings, rcols, &nodes.table.ids, opts.max_users)?;
    let users = build_user_features(user_ids)?;
    let mut table = load_edge_table(&ratings, rcols, &users.ids, &nodes.table.ids)?;
    let duplicates_removed = if opts.dedup { table.dedup() } else { 0 };

    let graph = build_graph(
        users.features,
        nodes.table.features,
        table.edges,
        table.labels,
        users.ids,
        nodes.table.ids,
    )?;
    let split = split_edges(&graph, opts.ratio, opts.seed, table.weights.as_deref())?;
    Ok(Dataset {
        graph,
        split,
        vocab,
        embed_dim,
        anime_names: nodes.names,
        weighted: table.weights.is_some(),
        stats: PrepareStats {
            anime_rows_dropped: anime_report.dropped,
            rating_rows_dropped: rating_report.dropped,
            ratings_skipped: table.skipped,
            duplicates_removed,
            unknown_genres: nodes.unknown_genres,
            missing_embeddings,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u64,
    num_users: usize,
    num_anime: usize,
    num_edges: usize,
    num_train: usize,
    num_test: usize,
    user_dim: usize,
    anime_dim: usize,
    embed_dim: usize,
    genre_dim: usize,
    seed: u64,
    ratio: f64,
    weighted: bool,
    genre_separator: String,
    genres: Vec<String>,
    user_ids: Vec<String>,
    anime_ids: Vec<String>,
    anime_names: Vec<String>,
    stats: PrepareStats,
}

pub fn encode_matrix(m: &Matrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.as_slice().len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix<f64>> {
    let bad = |msg: &str| Error::format(None, format!("matrix file: {msg}"));
    if bytes.len() < 24 || &bytes[..8] != MATRIX_MAGIC {
        return Err(bad("bad magic or truncated header"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(8) as usize, word(16) as usize);
    let body = &bytes[24..];
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(8)) != Some(body.len()) {
        return Err(bad(&format!("{} data bytes for a {rows}x{cols} matrix", body.len())));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn edges_csv(ds: &Dataset) -> Result<Vec<u8>> {
    let g = &ds.graph;
    let mut placement = vec![None; g.num_edges()];
    for (part, edges) in [("train", &ds.split.train), ("test", &ds.split.test)] {
        for (pos, e) in edges.iter().enumerate() {
            placement[e.edge] = Some((part, pos, e.weight));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Internal(e.to_string());
    w.write_record(["user", "anime", "rating", "weight", "split", "pos"]).map_err(err)?;
    for (i, &(u, a)) in g.edges.iter().enumerate() {
        let (part, pos, weight) =
            placement[i].ok_or_else(|| Error::Internal(format!("edge {i} is in neither split part")))?;
        w.write_record([
            u.to_string(),
            a.to_string(),
            g.labels[i].to_string(),
            weight.to_string(),
            part.to_string(),
            pos.to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Internal(e.to_string()))
}

/// Writes the data directory. Files are staged in a sibling directory that
/// replaces `dir` once everything is written.
pub fn write_datadir(ds: &Dataset, dir: &Path) -> Result<()> {
    let g = &ds.graph;
    let manifest = Manifest {
        version: DATADIR_FORMAT_VERSION,
        num_users: g.num_users(),
        num_anime: g.num_anime(),
        num_edges: g.num_edges(),
        num_train: ds.split.train.len(),
        num_test: ds.split.test.len(),
        user_dim: g.user_x.cols(),
        anime_dim: g.anime_x.cols(),
        embed_dim: ds.embed_dim,
        genre_dim: ds.genre_dim(),
        seed: ds.split.seed,
        ratio: ds.split.ratio,
        weighted: ds.weighted,
        genre_separator: ds.vocab.separator().to_string(),
        genres: ds.vocab.genres().to_vec(),
        user_ids: g.user_ids.ids().to_vec(),
        anime_ids: g.anime_ids.ids().to_vec(),
        anime_names: ds.anime_names.clone(),
        stats: ds.stats.clone(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
    json.push('\n');
    let files: [(&str, Vec<u8>); 4] = [
        ("manifest.json", json.into_bytes()),
        ("user_x.bin", encode_matrix(&g.user_x)),
        ("anime_x.bin", encode_matrix(&g.anime_x)),
        ("edges.csv", edges_csv(ds)?),
    ];

    let staging = crate::util::tmp_sibling(dir);
    let _ = fs::remove_dir_all(&staging);
    let result = (|| {
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        for (name, bytes) in &files {
            let p = staging.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_datadir(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join("manifest.json");
    let m: Manifest = serde_json::from_slice(&read_file(&mpath)?)
        .map_err(|e| Error::format(Some(e.line()), format!("{}: {e}", mpath.display())))?;
    if m.version != DATADIR_FORMAT_VERSION {
        return Err(Error::format(
            None,
            format!(
                "data directory version {} is not supported (supported: {DATADIR_FORMAT_VERSION})",
                m.version
            ),
        ));
    }
    let mismatch = |what: &str, a: usize, b: usize| {
        Error::format(None, format!("manifest says {a} {what}, stored data has {b}"))
    };
    let user_x = decode_matrix(&read_file(&dir.join("user_x.bin"))?)?;
    let anime_x = decode_matrix(&read_file(&dir.join("anime_x.bin"))?)?;
    if user_x.shape() != (m.num_users, m.user_dim) {
        return Err(mismatch("user feature rows", m.num_users, user_x.rows()));
    }
    if anime_x.shape() != (m.num_anime, m.anime_dim) || m.anime_dim != m.embed_dim + m.genre_dim {
        return Err(mismatch("anime feature rows", m.num_anime, anime_x.rows()));
    }
    for (what, a, b) in [
        ("user ids", m.num_users, m.user_ids.len()),
        ("anime ids", m.num_anime, m.anime_ids.len()),
        ("anime names", m.num_anime, m.anime_names.len()),
        ("genres", m.genre_dim, m.genres.len()),
    ] {
        if a != b {
            return Err(mismatch(what, a, b));
        }
    }

    let epath = dir.join("edges.csv");
    let table = Table::read_csv(&epath)?;
    let col = |name: &str| table.column_index(name);
    let (cu, ca, cr, cw, cs, cp) = (col("user")?, col("anime")?, col("rating")?, col("weight")?, col("split")?, col("pos")?);
    let parse = |row: usize, cell: &str| -> Result<f64> {
        cell.parse::<f64>().map_err(|_| Error::Parse {
            row,
            value: cell.to_string(),
        })
    };
    let parse_index = |row: usize, cell: &str| -> Result<usize> {
        cell.parse::<usize>().map_err(|_| Error::Parse {
            row,
            value: cell.to_string(),
        })
    };
    let mut edges = Vec::with_capacity(table.len());
    let mut labels = Vec::with_capacity(table.len());
    let mut weights = Vec::with_capacity(table.len());
    let mut placed: Vec<(bool, usize)> = Vec::with_capacity(table.len());
    for (row, r) in table.rows.iter().enumerate() {
        edges.push((parse_index(row, &r[cu])?, parse_index(row, &r[ca])?));
        labels.push(parse(row, &r[cr])?);
        weights.push(parse(row, &r[cw])?);
        let train = match r[cs].as_str() {
            "train" => true,
            "test" => false,
            other => return Err(Error::format(Some(row + 2), format!("unknown split `{other}`"))),
        };
        placed.push((train, parse_index(row, &r[cp])?));
    }
    if edges.len() != m.num_edges {
        return Err(mismatch("edges", m.num_edges, edges.len()));
    }
    let graph = build_graph(
        user_x,
        anime_x,
        edges,
        labels,
        IdMap::from_ids(m.user_ids)?,
        IdMap::from_ids(m.anime_ids)?,
    )?;

    let mut train: Vec<Option<LabeledEdge<f64>>> = vec![None; m.num_train];
    let mut test: Vec<Option<LabeledEdge<f64>>> = vec![None; m.num_test];
    for (i, &(is_train, pos)) in placed.iter().enumerate() {
        let slot = if is_train { train.get_mut(pos) } else { test.get_mut(pos) };
        let slot = match slot {
            Some(s) if s.is_none() => s,
            _ => return Err(Error::format(Some(i + 2), format!("bad or repeated split position {pos}"))),
        };
        let (user, anime) = graph.edges[i];
        *slot = Some(LabeledEdge {
            edge: i,
            user,
            anime,
            rating: graph.labels[i],
            weight: weights[i],
        });
    }
    let collect = |v: Vec<Option<LabeledEdge<f64>>>, what: &str| -> Result<Vec<LabeledEdge<f64>>> {
        v.into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::format(None, format!("{what} split positions have gaps")))
    };
    let split = EdgeSplit {
        train: collect(train, "train")?,
        test: collect(test, "test")?,
        seed: m.seed,
        ratio: m.ratio,
    };
    Ok(Dataset {
        graph,
        split,
        vocab: GenreVocab::from_genres(m.genres, &m.genre_separator)?,
        embed_dim: m.embed_dim,
        anime_names: m.anime_names,
        weighted: m.weighted,
        stats: m.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tables() -> (Table, Table) {
        let anime = Table::from_reader(
            "MAL_ID,Name,Genres,sypnopsis\n\
             1,Alpha,\"Action, Comedy\",A fight and a joke.\n\
             2,Beta,Drama,Tears.\n\
             3,Gamma,,No genre.\n\
             4,Delta,\"Comedy, Sci-Fi\",Robots laugh.\n"
                .as_bytes(),
        )
        .unwrap();
        let ratings = Table::from_reader(
            "user_id,anime_id,rating\n7,1,8\n7,2,5\n8,4,9\n8,1,3\n9,99,4\n9,2,6\n7,1,10\n8,2,\n"
                .as_bytes(),
        )
        .unwrap();
        (anime, ratings)
    }

    #[test]
    fn prepare_small_tables() {
        let (anime, ratings) = tables();
        let opts = PrepareOptions {
            embeddings: EmbeddingSource::Hashing { dim: 8 },
            ..PrepareOptions::default()
        };
        let ds = prepare(&anime, &ratings, &opts).unwrap();
        assert_eq!(ds.stats.anime_rows_dropped, 1);
        assert_eq!(ds.stats.rating_rows_dropped, 1);
        assert_eq!(ds.stats.ratings_skipped, 1);
        assert_eq!(ds.graph.num_anime(), 3);
        assert_eq!(ds.graph.user_x, Matrix::identity(3));
        assert_eq!(ds.vocab.genres(), &["Action", "Comedy", "Drama", "Sci-Fi"]);
        assert_eq!(ds.graph.anime_x.cols(), 8 + 4);
        assert_eq!(ds.graph.num_edges(), 6);
        assert_eq!(ds.split.len(), 6);

        let dd = prepare(&anime, &ratings, &PrepareOptions { dedup: true, ..opts.clone() }).unwrap();
        assert_eq!(dd.stats.duplicates_removed, 1);
        assert_eq!(dd.graph.labels[0], 8.0);

        let sub = prepare(&anime, &ratings, &PrepareOptions { max_users: Some(1), ..opts }).unwrap();
        assert_eq!(sub.graph.user_ids.ids(), &["7"]);
        assert_eq!(sub.graph.num_edges(), 3);
    }

    #[test]
    fn datadir_round_trip_and_bytes() {
        let (anime, ratings) = tables();
        let opts = PrepareOptions {
            embeddings: EmbeddingSource::Hashing { dim: 8 },
            seed: 3,
            ..PrepareOptions::default()
        };
        let ds = prepare(&anime, &ratings, &opts).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        write_datadir(&ds, &a).unwrap();
        write_datadir(&ds, &b).unwrap();
        for f in ["manifest.json", "user_x.bin", "anime_x.bin", "edges.csv"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
        assert_eq!(read_datadir(&a).unwrap(), ds);
        // Overwriting an existing directory leaves no staging directory behind.
        write_datadir(&ds, &a).unwrap();
        let names: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2);
    }

    #[test]
    fn matrix_codec() {
        let m = Matrix::from_rows(&[[1.0, -0.0, f64::MIN_POSITIVE], [3.5, 1e300, -2.25]]).unwrap();
        let bytes = encode_matrix(&m);
        assert_eq!(&bytes[..8], b"HSMATRX1");
        assert_eq!(bytes.len(), 24 + 48);
        assert_eq!(decode_matrix(&bytes).unwrap(), m);
        assert!(decode_matrix(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_matrix(b"garbage").is_err());
    }

    #[test]
    fn corrupt_manifest_counts_rejected() {
        let (anime, ratings) = tables();
        let opts = PrepareOptions {
            embeddings: EmbeddingSource::Hashing { dim: 4 },
            ..PrepareOptions::default()
        };
        let ds = prepare(&anime, &ratings, &opts).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("d");
        write_datadir(&ds, &dir).unwrap();
        let p = dir.join("manifest.json");
        let text = fs::read_to_string(&p).unwrap().replace("\"num_edges\": 6", "\"num_edges\": 7");
        fs::write(&p, text).unwrap();
        assert!(matches!(read_datadir(&dir), Err(Error::Format { .. })));
    }
}
