//! Two-layer heterogeneous GraphSAGE encoder and edge-MLP rating decoder.
//!
//! Every layer has a hand-written backward pass; [`gradcheck`] verifies them
//! against central finite differences.
//!
//! Forward pass:
//!
//! ```text
//! h1 = SAGE_1(x)            per relation: x_dst·W_self + mean(x_src[N])·W_neigh + b
//! a1 = relu(norm?(h1))      L2 row normalization, on by default
//! z  = norm_final?(SAGE_2(a1))
//! pred(u, a) = relu([z_u ‖ z_a]·W1 + b1)·W2 + b2
//! ```

pub mod gradcheck;
mod io;
mod model;
mod sage;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::numkit::{xavier_uniform, Matrix, Rng, Scalar};

pub use io::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};
pub use model::{
    decoder_forward, encoder_forward, hetero_layer_forward, model_backward, model_forward,
    DecoderCache, EncoderCache, ForwardCache,
};
pub use sage::{sage_backward, sage_forward, SageGrads};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeType {
    User,
    Anime,
}

/// Typed relation of the bipartite graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    /// `(user, rates, anime)`: messages flow user → anime.
    Rates,
    /// `(anime, rev_rates, user)`: messages flow anime → user.
    RevRates,
}

impl Relation {
    pub const ALL: [Relation; 2] = [Relation::Rates, Relation::RevRates];

    pub fn src(self) -> NodeType {
        match self {
            Relation::Rates => NodeType::User,
            Relation::RevRates => NodeType::Anime,
        }
    }

    pub fn dst(self) -> NodeType {
        match self {
            Relation::Rates => NodeType::Anime,
            Relation::RevRates => NodeType::User,
        }
    }

    /// Short name used in parameter keys.
    pub fn key(self) -> &'static str {
        match self {
            Relation::Rates => "u2a",
            Relation::RevRates => "a2u",
        }
    }
}

/// How outputs of different relations arriving at one node type are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggr {
    #[default]
    Sum,
    Mean,
    Max,
}

impl FromStr for Aggr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Aggr::Sum),
            "mean" => Ok(Aggr::Mean),
            "max" => Ok(Aggr::Max),
            other => Err(Error::Argument(format!(
                "unknown aggregation `{other}` (expected sum, mean or max)"
            ))),
        }
    }
}

impl fmt::Display for Aggr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggr::Sum => "sum",
            Aggr::Mean => "mean",
            Aggr::Max => "max",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub aggr: Aggr,
    /// L2 row normalization after layer 1.
    pub normalize: bool,
    /// L2 row normalization of the final embeddings.
    #[serde(default)]
    pub normalize_final: bool,
    pub embed_dim: usize,
    pub genre_dim: usize,
    pub num_users: usize,
}

impl ModelConfig {
    pub fn new(hidden: usize, embed_dim: usize, genre_dim: usize, num_users: usize) -> Self {
        ModelConfig {
            hidden,
            aggr: Aggr::Sum,
            normalize: true,
            normalize_final: false,
            embed_dim,
            genre_dim,
            num_users,
        }
    }

    pub fn anime_dim(&self) -> usize {
        self.embed_dim + self.genre_dim
    }

    pub fn user_dim(&self) -> usize {
        self.num_users
    }

    fn input_dim(&self, t: NodeType) -> usize {
        match t {
            NodeType::User => self.user_dim(),
            NodeType::Anime => self.anime_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Argument("hidden must be at least 1".into()));
        }
        if self.num_users == 0 || self.anime_dim() == 0 {
            return Err(Error::Config(format!(
                "feature dims must be positive: users {}, anime {}",
                self.num_users,
                self.anime_dim()
            )));
        }
        Ok(())
    }

    /// Checks that the graph's feature tables have the widths this model expects.
    pub fn check_graph<T: Scalar>(&self, g: &HeteroGraph<T>) -> Result<()> {
        if g.user_x.cols() != self.user_dim() {
            return Err(Error::Validation(format!(
                "model expects user feature dim {}, data has {}",
                self.user_dim(),
                g.user_x.cols()
            )));
        }
        if g.anime_x.cols() != self.anime_dim() {
            return Err(Error::Validation(format!(
                "model expects anime feature dim {}, data has {}",
                self.anime_dim(),
                g.anime_x.cols()
            )));
        }
        Ok(())
    }
}

/// Weights of one relation's SAGE convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SageParams<T> {
    /// `in_dim_dst × out`.
    pub w_self: Matrix<T>,
    /// `in_dim_src × out`.
    pub w_neigh: Matrix<T>,
    /// `1 × out`.
    pub bias: Matrix<T>,
}

impl<T: Scalar> SageParams<T> {
    pub fn out_dim(&self) -> usize {
        self.w_self.cols()
    }

    pub fn zeros_like(&self) -> Self {
        SageParams {
            w_self: Matrix::zeros(self.w_self.rows(), self.w_self.cols()),
            w_neigh: Matrix::zeros(self.w_neigh.rows(), self.w_neigh.cols()),
            bias: Matrix::zeros(1, self.bias.cols()),
        }
    }

    fn check(&self) -> Result<()> {
        let out = self.w_self.cols();
        if self.w_neigh.cols() != out || self.bias.shape() != (1, out) {
            return Err(Error::Config(format!(
                "inconsistent SAGE output widths: w_self {:?}, w_neigh {:?}, bias {:?}",
                self.w_self.shape(),
                self.w_neigh.shape(),
                self.bias.shape()
            )));
        }
        Ok(())
    }
}

pub type LayerParams<T> = BTreeMap<Relation, SageParams<T>>;

/// All learnable weights. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub layer1: LayerParams<T>,
    pub layer2: LayerParams<T>,
    /// `2·hidden × hidden`.
    pub dec_w1: Matrix<T>,
    /// `1 × hidden`.
    pub dec_b1: Matrix<T>,
    /// `hidden × 1`.
    pub dec_w2: Matrix<T>,
    /// `1 × 1`.
    pub dec_b2: Matrix<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros_like(&self) -> Self {
        let zl = |layer: &LayerParams<T>| layer.iter().map(|(&r, p)| (r, p.zeros_like())).collect();
        let z = |m: &Matrix<T>| Matrix::zeros(m.rows(), m.cols());
        ModelParams {
            layer1: zl(&self.layer1),
            layer2: zl(&self.layer2),
            dec_w1: z(&self.dec_w1),
            dec_b1: z(&self.dec_b1),
            dec_w2: z(&self.dec_w2),
            dec_b2: z(&self.dec_b2),
        }
    }

    /// Every tensor with its stable name, in a fixed order:
    /// `l1.u2a.{w_self,w_neigh,bias}`, `l1.a2u.*`, `l2.*`, `dec.{w1,b1,w2,b2}`.
    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = Vec::with_capacity(16);
        for (prefix, layer) in [("l1", &self.layer1), ("l2", &self.layer2)] {
            for (rel, p) in layer {
                let base = format!("{prefix}.{}", rel.key());
                out.push((format!("{base}.w_self"), &p.w_self));
                out.push((format!("{base}.w_neigh"), &p.w_neigh));
                out.push((format!("{base}.bias"), &p.bias));
            }
        }
        out.push(("dec.w1".into(), &self.dec_w1));
        out.push(("dec.b1".into(), &self.dec_b1));
        out.push(("dec.w2".into(), &self.dec_w2));
        out.push(("dec.b2".into(), &self.dec_b2));
        out
    }

    /// Mutable view in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out = Vec::with_capacity(16);
        for (prefix, layer) in [("l1", &mut self.layer1), ("l2", &mut self.layer2)] {
            for (rel, p) in layer.iter_mut() {
                let base = format!("{prefix}.{}", rel.key());
                out.push((format!("{base}.w_self"), &mut p.w_self));
                out.push((format!("{base}.w_neigh"), &mut p.w_neigh));
                out.push((format!("{base}.bias"), &mut p.bias));
            }
        }
        out.push(("dec.w1".into(), &mut self.dec_w1));
        out.push(("dec.b1".into(), &mut self.dec_b1));
        out.push(("dec.w2".into(), &mut self.dec_w2));
        out.push(("dec.b2".into(), &mut self.dec_b2));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.rows() * m.cols()).sum()
    }

    /// Checks every tensor shape against `config`.
    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        let h = config.hidden;
        for (name, layer, first) in [("layer1", &self.layer1, true), ("layer2", &self.layer2, false)] {
            for rel in Relation::ALL {
                let p = layer
                    .get(&rel)
                    .ok_or_else(|| Error::Config(format!("{name} has no parameters for relation {}", rel.key())))?;
                p.check()?;
                let (dst_in, src_in) = if first {
                    (config.input_dim(rel.dst()), config.input_dim(rel.src()))
                } else {
                    (h, h)
                };
                if p.w_self.shape() != (dst_in, h) || p.w_neigh.shape() != (src_in, h) {
                    return Err(Error::Config(format!(
                        "{name}.{}: expected w_self {:?} and w_neigh {:?}, found {:?} and {:?}",
                        rel.key(),
                        (dst_in, h),
                        (src_in, h),
                        p.w_self.shape(),
                        p.w_neigh.shape()
                    )));
                }
            }
        }
        let expect = [
            ("dec.w1", &self.dec_w1, (2 * h, h)),
            ("dec.b1", &self.dec_b1, (1, h)),
            ("dec.w2", &self.dec_w2, (h, 1)),
            ("dec.b2", &self.dec_b2, (1, 1)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::Config(format!(
                    "{name}: expected shape {shape:?}, found {:?}",
                    m.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Xavier-uniform weights, zero biases. Draw order follows
/// [`ModelParams::tensors`].
pub fn init_model<T: Scalar>(config: &ModelConfig, rng: &mut Rng) -> Result<ModelParams<T>> {
    config.validate()?;
    let h = config.hidden;
    let mut layer = |first: bool| -> Result<LayerParams<T>> {
        let mut out = BTreeMap::new();
        for rel in Relation::ALL {
            let (dst_in, src_in) = if first {
                (config.input_dim(rel.dst()), config.input_dim(rel.src()))
            } else {
                (h, h)
            };
            let w_self = xavier_uniform(dst_in, h, rng)?;
            let w_neigh = xavier_uniform(src_in, h, rng)?;
            out.insert(
                rel,
                SageParams {
                    w_self,
                    w_neigh,
                    bias: Matrix::zeros(1, h),
                },
            );
        }
        Ok(out)
    };
    let layer1 = layer(true)?;
    let layer2 = layer(false)?;
    let dec_w1 = xavier_uniform(2 * h, h, rng)?;
    let dec_w2 = xavier_uniform(h, 1, rng)?;
    Ok(ModelParams {
        layer1,
        layer2,
        dec_w1,
        dec_b1: Matrix::zeros(1, h),
        dec_w2,
        dec_b2: Matrix::zeros(1, 1),
    })
}
