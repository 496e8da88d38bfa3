use std::io::Write;

use serde::Serialize;

use crate::dataset::{prepare, read_datadir, write_datadir, Dataset, EmbeddingSource, PrepareOptions};
use crate::encoders::Table;
use crate::error::{Error, Result};
use crate::gnn::gradcheck::{gradcheck, GradcheckConfig, DEFAULT_TOLERANCE};
use crate::gnn::{load_model, save_model, ModelConfig, ModelParams};
use crate::recsys::batch_recommend;
use crate::synth::{generate, SyntheticConfig};
use crate::train::{baseline_global_mean, evaluate, train_with_observer, Metrics, TrainConfig};

use super::{
    Command, EvaluateArgs, GradcheckArgs, OutputFormat, PrepareArgs, RecommendArgs, SynthArgs, TrainArgs,
};

fn w(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

pub(super) fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Prepare(a) => cmd_prepare(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out, err),
        Command::Recommend(a) => cmd_recommend(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

fn metrics_line(split: &str, m: &Metrics) -> String {
    format!(
        "split={split} rmse={:.6} weighted_rmse={:.6} accuracy={:.6} n={}",
        m.rmse, m.weighted_rmse, m.accuracy, m.n
    )
}

fn cmd_prepare(a: PrepareArgs, out: &mut dyn Write) -> Result<i32> {
    let anime = Table::read_csv(&a.anime)?;
    let ratings = Table::read_csv(&a.ratings)?;
    let mut opts = PrepareOptions {
        embeddings: match a.embeddings {
            Some(path) => EmbeddingSource::File {
                path,
                allow_missing: a.allow_missing,
            },
            None => EmbeddingSource::Hashing { dim: a.hash_dim },
        },
        max_users: a.max_users,
        ratio: a.ratio,
        seed: a.seed,
        genre_separator: a.genre_sep,
        dedup: a.dedup,
        ..PrepareOptions::default()
    };
    opts.rating_columns.weight = a.weight_column;
    let ds = prepare(&anime, &ratings, &opts)?;
    write_datadir(&ds, &a.out)?;

    let g = &ds.graph;
    let s = &ds.stats;
    writeln!(out, "users={} anime={} edges={}", g.num_users(), g.num_anime(), g.num_edges()).map_err(w)?;
    writeln!(
        out,
        "user_x=[{}, {}] anime_x=[{}, {}] embed_dim={} genres={}",
        g.user_x.rows(),
        g.user_x.cols(),
        g.anime_x.rows(),
        g.anime_x.cols(),
        ds.embed_dim,
        ds.genre_dim()
    )
    .map_err(w)?;
    writeln!(out, "train={} test={}", ds.split.train.len(), ds.split.test.len()).map_err(w)?;
    writeln!(
        out,
        "dropped_anime={} dropped_ratings={} skipped_ratings={} duplicates_removed={} unknown_genres={} missing_embeddings={}",
        s.anime_rows_dropped,
        s.rating_rows_dropped,
        s.ratings_skipped,
        s.duplicates_removed,
        s.unknown_genres,
        s.missing_embeddings
    )
    .map_err(w)?;
    Ok(0)
}

fn model_config_for(ds: &Dataset, hidden: usize) -> ModelConfig {
    ModelConfig::new(hidden, ds.embed_dim, ds.genre_dim(), ds.graph.num_users())
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let mut model = ModelConfig {
        aggr: a.aggr,
        normalize: a.normalize,
        normalize_final: a.normalize_final,
        ..ModelConfig::new(a.hidden, 1, 0, 1)
    };
    // Flags are checked before the data directory is touched.
    model.validate()?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed,
        log_every: a.log_every,
        clamp_eval: a.clamp_eval,
        mean_init: a.mean_init,
    };
    cfg.validate()?;
    let ds = read_datadir(&a.data)?;
    let base = model_config_for(&ds, a.hidden);
    model.embed_dim = base.embed_dim;
    model.genre_dim = base.genre_dim;
    model.num_users = base.num_users;
    model.validate()?;

    let mut io_err = None;
    let outcome = train_with_observer(&ds.graph, &ds.split, &model, &cfg, |r| {
        if io_err.is_none() {
            if let Err(e) = writeln!(out, "epoch={} loss={:.6} rmse={:.6}", r.epoch, r.loss, r.rmse) {
                io_err = Some(e);
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(w(e));
    }
    save_model(&outcome.params, &model, &a.model)?;
    writeln!(out, "{}", metrics_line("train", &outcome.final_train)).map_err(w)?;
    Ok(0)
}

fn load_for(data: &std::path::Path, model: &std::path::Path) -> Result<(Dataset, ModelParams<f64>, ModelConfig)> {
    let ds = read_datadir(data)?;
    let (params, config) = load_model::<f64>(model)?;
    config.check_graph(&ds.graph)?;
    Ok((ds, params, config))
}

fn cmd_evaluate(a: EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (ds, params, config) = load_for(&a.data, &a.model)?;
    let m = evaluate(&params, &config, &ds.graph, &ds.split, a.split, a.clamp_eval)?;
    let b = baseline_global_mean(&ds.split, a.split)?;
    writeln!(out, "{}", metrics_line(a.split.name(), &m)).map_err(w)?;
    writeln!(out, "baseline=global_mean {}", metrics_line(a.split.name(), &b)).map_err(w)?;
    writeln!(err, "note: accuracy is exact-match accuracy of the rounded, clamped prediction").map_err(w)?;
    Ok(0)
}

#[derive(Serialize)]
struct JsonItem<'a> {
    rank: usize,
    anime_id: &'a str,
    name: &'a str,
    predicted_rating: f64,
}

#[derive(Serialize)]
struct JsonList<'a> {
    user_id: &'a str,
    items: Vec<JsonItem<'a>>,
}

fn cmd_recommend(a: RecommendArgs, out: &mut dyn Write) -> Result<i32> {
    let (ds, params, config) = load_for(&a.data, &a.model)?;
    let adj = ds.split.message_adjacency(&ds.graph);
    let users: Vec<&str> = a.users.iter().map(String::as_str).collect();
    let lists = batch_recommend(&params, &config, &ds.graph, &adj, &users, a.k)?;
    for list in &lists {
        match a.format {
            OutputFormat::Text => {
                writeln!(out, "user={}", list.user_id).map_err(w)?;
                for (i, item) in list.items.iter().enumerate() {
                    writeln!(
                        out,
                        "rank={} anime={} name={} pred={:.2}",
                        i + 1,
                        item.anime_id,
                        ds.anime_names[item.anime_index],
                        item.predicted_rating
                    )
                    .map_err(w)?;
                }
            }
            OutputFormat::Json => {
                let doc = JsonList {
                    user_id: &list.user_id,
                    items: list
                        .items
                        .iter()
                        .enumerate()
                        .map(|(i, item)| JsonItem {
                            rank: i + 1,
                            anime_id: &item.anime_id,
                            name: &ds.anime_names[item.anime_index],
                            predicted_rating: item.predicted_rating,
                        })
                        .collect(),
                };
                let text = serde_json::to_string(&doc).map_err(|e| Error::Internal(e.to_string()))?;
                writeln!(out, "{text}").map_err(w)?;
            }
        }
    }
    Ok(0)
}

fn cmd_gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = GradcheckConfig {
        seed: a.seed,
        aggr: a.aggr,
        normalize: a.normalize,
        normalize_final: a.normalize_final,
        corrupt: a.corrupt_backward,
        ..GradcheckConfig::default()
    };
    let report = gradcheck(&cfg)?;
    writeln!(
        out,
        "checked={} worst={} max_rel_err={:e}",
        report.checked, report.worst, report.max_rel_err
    )
    .map_err(w)?;
    let report = report.into_result()?;
    writeln!(out, "max_rel_err<={DEFAULT_TOLERANCE:e}").map_err(w)?;
    let _ = report;
    Ok(0)
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = SyntheticConfig {
        num_users: a.users,
        num_anime: a.anime,
        num_ratings: a.ratings,
        num_genres: a.genres,
        noise_sigma: a.noise,
        watch_bias: a.watch_bias,
        seed: a.seed,
    };
    let data = generate(&cfg)?;
    data.write_csvs(&a.out)?;
    writeln!(
        out,
        "wrote {} anime and {} ratings to {}",
        data.anime.len(),
        data.ratings.len(),
        a.out.display()
    )
    .map_err(w)?;
    Ok(0)
}
