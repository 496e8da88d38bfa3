//! CSV ingestion and node/edge feature encoders.
//!
//! Anime rows become `[synopsis embedding ‖ multi-hot genres]`. Users carry
//! no attributes, so their features are a one-hot identity matrix. Synopsis
//! embeddings come from a precomputed file ([`load_embedding_file`]) or from
//! the deterministic feature-hashing fallback ([`hash_embed`]).

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::IdMap;
use crate::numkit::Matrix;

/// Default width of the hashing embedder.
pub const DEFAULT_HASH_DIM: usize = 384;
pub const DEFAULT_GENRE_SEPARATOR: &str = ",";

/// A parsed CSV file: header plus string cells.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| csv_error(&e))?
            .iter()
            .map(|h| h.trim_start_matches('\u{feff}').to_string())
            .collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(&e))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(Table { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let c = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[c].as_str()).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn csv_error(e: &csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    Error::format(line, e.to_string())
}

fn is_null(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty()
        || ["nan", "null", "none", "n/a"]
            .iter()
            .any(|n| t.eq_ignore_ascii_case(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CleanReport {
    pub kept: usize,
    pub dropped: usize,
}

/// Drops rows with an empty or null value in any of the `required` columns.
///
/// Cells that are blank or read `nan`, `null`, `none`, `n/a` (any case)
/// count as null.
pub fn clean_rows(table: &Table, required: &[&str]) -> Result<(Table, CleanReport)> {
    let cols = required
        .iter()
        .map(|c| table.column_index(c))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .filter(|r| cols.iter().all(|&c| !is_null(&r[c])))
        .cloned()
        .collect();
    let report = CleanReport {
        kept: rows.len(),
        dropped: table.rows.len() - rows.len(),
    };
    Ok((
        Table {
            headers: table.headers.clone(),
            rows,
        },
        report,
    ))
}

/// Distinct genres in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenreVocab {
    genres: Vec<String>,
    index: HashMap<String, usize>,
    separator: String,
}

impl GenreVocab {
    pub fn from_genres(genres: Vec<String>, separator: &str) -> Result<Self> {
        let mut index = HashMap::with_capacity(genres.len());
        for (i, g) in genres.iter().enumerate() {
            if index.insert(g.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate genre `{g}` in vocabulary")));
            }
        }
        Ok(GenreVocab {
            genres,
            index,
            separator: separator.to_string(),
        })
    }

    pub fn genres(&self) -> &[String] {
        &self.genres
    }

    pub fn separator(&self) -> &str {
        &self.separator
    }

    pub fn len(&self) -> usize {
        self.genres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genres.is_empty()
    }
}

fn genre_tokens<'a>(cell: &'a str, separator: &'a str) -> impl Iterator<Item = &'a str> {
    cell.split(separator).map(str::trim).filter(|g| !g.is_empty())
}

pub fn build_genre_vocab(cells: &[&str], separator: &str) -> GenreVocab {
    let mut genres = Vec::new();
    let mut index = HashMap::new();
    for cell in cells {
        for g in genre_tokens(cell, separator) {
            if !index.contains_key(g) {
                index.insert(g.to_string(), genres.len());
                genres.push(g.to_string());
            }
        }
    }
    GenreVocab {
        genres,
        index,
        separator: separator.to_string(),
    }
}

/// Multi-hot genre vector plus the number of genres not in the vocabulary.
pub fn encode_genres(cell: &str, vocab: &GenreVocab) -> (Vec<f64>, usize) {
    let mut out = vec![0.0; vocab.len()];
    let mut unknown = 0;
    for g in genre_tokens(cell, &vocab.separator) {
        match vocab.index.get(g) {
            Some(&i) => out[i] = 1.0,
            None => unknown += 1,
        }
    }
    (out, unknown)
}

/// Parses a numeric column into an `n × 1` matrix.
pub fn identity_encode(column: &[&str]) -> Result<Matrix<f64>> {
    let data = column
        .iter()
        .enumerate()
        .map(|(row, cell)| {
            cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                row,
                value: cell.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_vec(data.len(), 1, data)
}

const STOP_WORDS: [&str; 26] = [
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "he", "in", "is", "it",
    "its", "of", "on", "that", "the", "to", "was", "were", "will", "with", "",
];

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Signed feature-hashing text embedding, L2-normalized.
///
/// Lowercases, splits on anything outside `[a-z0-9]`, drops stop words, then
/// adds ±1 to bucket `fnv1a_64(token) % dim` (sign from the top hash bit).
/// Text with no surviving tokens maps to the zero vector.
pub fn hash_embed(text: &str, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::Shape {
            op: "hash_embed",
            left: (1, 0),
            right: (1, 1),
        });
    }
    let lower = text.to_lowercase();
    let mut v = vec![0.0f64; dim];
    for token in lower.split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit())) {
        if STOP_WORDS.contains(&token) {
            continue;
        }
        let h = fnv1a_64(token.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    Ok(v)
}

/// Source of per-anime synopsis vectors.
pub trait EmbeddingProvider {
    fn dim(&self) -> usize;
    fn embed(&self, id: &str, synopsis: &str) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl EmbeddingProvider for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _id: &str, synopsis: &str) -> Result<Vec<f64>> {
        hash_embed(synopsis, self.dim)
    }
}

/// Precomputed embeddings keyed by anime id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: HashMap<String, Vec<f64>>,
    /// Expected ids absent from the file (filled with zeros).
    pub missing: Vec<String>,
}

impl EmbeddingTable {
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.rows.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl EmbeddingProvider for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, id: &str, _synopsis: &str) -> Result<Vec<f64>> {
        self.rows
            .get(id)
            .cloned()
            .ok_or_else(|| Error::Lookup(format!("no embedding for anime id `{id}`")))
    }
}

pub fn load_embedding_file(path: &Path, expected: &[String], allow_missing: bool) -> Result<EmbeddingTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(file, expected, allow_missing)
}

/// Parses the embedding CSV: header `id,e0,...,e{D-1}`, then one row of
/// exactly `D + 1` fields per id.
pub fn read_embeddings<R: Read>(reader: R, expected: &[String], allow_missing: bool) -> Result<EmbeddingTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::format(Some(1), "empty embedding file"))?
        .map_err(|e| csv_error(&e))?;
    let dim = header.len().saturating_sub(1);
    let header_ok = header.get(0).map(|h| h.trim_start_matches('\u{feff}')) == Some("id")
        && dim >= 1
        && header
            .iter()
            .skip(1)
            .enumerate()
            .all(|(i, h)| h == format!("e{i}"));
    if !header_ok {
        return Err(Error::format(
            Some(1),
            "embedding header must be exactly `id,e0,e1,...,e{D-1}`",
        ));
    }

    let mut rows = HashMap::new();
    for record in records {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != dim + 1 {
            return Err(Error::format(
                Some(line),
                format!("expected {} fields, found {}", dim + 1, record.len()),
            ));
        }
        let id = record[0].to_string();
        let values = record
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(Some(line), format!("`{v}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.insert(id.clone(), values).is_some() {
            return Err(Error::format(Some(line), format!("duplicate id `{id}`")));
        }
    }

    let missing: Vec<String> = expected
        .iter()
        .filter(|id| !rows.contains_key(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        if !allow_missing {
            let shown: Vec<&str> = missing.iter().take(10).map(String::as_str).collect();
            return Err(Error::Validation(format!(
                "{} expected ids have no embedding (first: {})",
                missing.len(),
                shown.join(", ")
            )));
        }
        for id in &missing {
            rows.insert(id.clone(), vec![0.0; dim]);
        }
    }
    Ok(EmbeddingTable { dim, rows, missing })
}

/// Feature matrix plus the id ↔ row bijection.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub features: Matrix<f64>,
    pub ids: IdMap,
}

/// Column names of the anime table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnimeColumns {
    pub id: String,
    pub name: String,
    pub genres: String,
    pub synopsis: String,
}

impl Default for AnimeColumns {
    fn default() -> Self {
        AnimeColumns {
            id: "MAL_ID".into(),
            name: "Name".into(),
            genres: "Genres".into(),
            synopsis: "sypnopsis".into(),
        }
    }
}

impl AnimeColumns {
    pub fn required(&self) -> [&str; 4] {
        [&self.id, &self.name, &self.genres, &self.synopsis]
    }
}

/// Column names of the rating table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingColumns {
    pub user: String,
    pub anime: String,
    pub rating: String,
    pub weight: Option<String>,
}

impl Default for RatingColumns {
    fn default() -> Self {
        RatingColumns {
            user: "user_id".into(),
            anime: "anime_id".into(),
            rating: "rating".into(),
            weight: None,
        }
    }
}

impl RatingColumns {
    pub fn required(&self) -> Vec<&str> {
        let mut cols = vec![self.user.as_str(), self.anime.as_str(), self.rating.as_str()];
        cols.extend(self.weight.as_deref());
        cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnimeNodes {
    pub table: NodeTable,
    pub names: Vec<String>,
    /// Genre tokens seen in rows but absent from the vocabulary.
    pub unknown_genres: usize,
}

/// One row per anime: `[embedding ‖ multi-hot genres]`, rows in table order.
pub fn build_anime_features(
    table: &Table,
    cols: &AnimeColumns,
    vocab: &GenreVocab,
    provider: &dyn EmbeddingProvider,
) -> Result<AnimeNodes> {
    let ids = table.column(&cols.id)?;
    let names = table.column(&cols.name)?;
    let genres = table.column(&cols.genres)?;
    let synopses = table.column(&cols.synopsis)?;
    let edim = provider.dim();
    let width = edim + vocab.len();
    let mut features = Matrix::zeros(table.len(), width);
    let mut unknown_genres = 0;
    for r in 0..table.len() {
        let id = ids[r].trim();
        let emb = provider.embed(id, synopses[r])?;
        if emb.len() != edim {
            return Err(Error::Internal(format!(
                "provider returned {} values for `{id}`, expected {edim}",
                emb.len()
            )));
        }
        let (hot, unknown) = encode_genres(genres[r], vocab);
        unknown_genres += unknown;
        let row = features.row_mut(r);
        row[..edim].copy_from_slice(&emb);
        row[edim..].copy_from_slice(&hot);
    }
    let id_map = IdMap::from_ids(ids.iter().map(|s| s.trim().to_string()).collect())?;
    Ok(AnimeNodes {
        table: NodeTable {
            features,
            ids: id_map,
        },
        names: names.iter().map(|s| s.to_string()).collect(),
        unknown_genres,
    })
}

/// One-hot identity features: user `i` is row `i` with a single 1 on the diagonal.
pub fn build_user_features(ids: Vec<String>) -> Result<NodeTable> {
    if ids.is_empty() {
        return Err(Error::Validation("no users".into()));
    }
    let id_map = IdMap::from_ids(ids)?;
    Ok(NodeTable {
        features: Matrix::identity(id_map.len()),
        ids: id_map,
    })
}

/// Distinct user ids in file order, counting only rows whose anime is known.
/// With `max_users`, only the first `N` distinct ids are kept.
pub fn collect_user_ids(
    ratings: &Table,
    cols: &RatingColumns,
    anime: &IdMap,
    max_users: Option<usize>,
) -> Result<Vec<String>> {
    let users = ratings.column(&cols.user)?;
    let items = ratings.column(&cols.anime)?;
    let limit = max_users.unwrap_or(usize::MAX);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (u, a) in users.iter().zip(&items) {
        if out.len() >= limit {
            break;
        }
        let u = u.trim();
        if anime.get(a.trim()).is_some() && seen.insert(u) {
            out.push(u.to_string());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTable {
    pub edges: Vec<(usize, usize)>,
    pub labels: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    /// Rows dropped because their user or anime id is not mapped.
    pub skipped: usize,
}

/// Maps rating rows onto node indices. Rows with an unmapped user or anime
/// are skipped and counted; kept ratings must lie in `[1, 10]`.
pub fn load_edge_table(ratings: &Table, cols: &RatingColumns, users: &IdMap, anime: &IdMap) -> Result<EdgeTable> {
    let user_col = ratings.column(&cols.user)?;
    let anime_col = ratings.column(&cols.anime)?;
    let rating_col = ratings.column(&cols.rating)?;
    let weight_col = cols.weight.as_deref().map(|w| ratings.column(w)).transpose()?;

    let mut edges = Vec::new();
    let mut labels = Vec::new();
    let mut weights = weight_col.as_ref().map(|_| Vec::new());
    let mut skipped = 0;
    for row in 0..ratings.len() {
        let (Some(u), Some(a)) = (users.get(user_col[row].trim()), anime.get(anime_col[row].trim())) else {
            skipped += 1;
            continue;
        };
        let rating = parse_cell(rating_col[row], row)?;
        if !(1.0..=10.0).contains(&rating) {
            return Err(Error::Validation(format!(
                "row {row}: rating {rating} is outside [1, 10]"
            )));
        }
        if let (Some(ws), Some(col)) = (weights.as_mut(), weight_col.as_ref()) {
            let w = parse_cell(col[row], row)?;
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Validation(format!("row {row}: weight {w} is not positive")));
            }
            ws.push(w);
        }
        edges.push((u, a));
        labels.push(rating);
    }
    Ok(EdgeTable {
        edges,
        labels,
        weights,
        skipped,
    })
}

fn parse_cell(cell: &str, row: usize) -> Result<f64> {
    Ok(identity_encode(&[cell])
        .map_err(|_| Error::Parse {
            row,
            value: cell.to_string(),
        })?
        .get(0, 0))
}

impl EdgeTable {
    /// Keeps the first occurrence of every `(user, anime)` pair. Returns the
    /// number of edges removed.
    pub fn dedup(&mut self) -> usize {
        let mut seen = HashSet::new();
        let keep: Vec<bool> = self.edges.iter().map(|&e| seen.insert(e)).collect();
        let before = self.edges.len();
        let mut it = keep.iter();
        self.edges.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.labels.retain(|_| *it.next().unwrap());
        if let Some(w) = self.weights.as_mut() {
            let mut it = keep.iter();
            w.retain(|_| *it.next().unwrap());
        }
        before - self.edges.len()
    }
}
