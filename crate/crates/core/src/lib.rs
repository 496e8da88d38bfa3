//! Hybrid anime recommender: a heterogeneous user–anime graph with fused
//! genre and synopsis features, a two-layer GraphSAGE encoder and an edge-MLP
//! decoder that regresses ratings.
//!
//! The numeric core is generic over [`numkit::Scalar`] (`f32` or `f64`); the
//! data pipeline, training and command line use `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod numkit;
pub mod recsys;
pub mod synth;
pub mod train;
mod util;

pub use error::{Error, Result};

pub type Matrix = numkit::Matrix<f64>;
pub type MatrixF32 = numkit::Matrix<f32>;
pub type Graph = graph::HeteroGraph<f64>;
pub type GraphF32 = graph::HeteroGraph<f32>;
pub type Params = gnn::ModelParams<f64>;
pub type ParamsF32 = gnn::ModelParams<f32>;
pub type Split = graph::EdgeSplit<f64>;
