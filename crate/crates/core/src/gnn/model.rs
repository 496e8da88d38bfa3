use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Direction, HeteroGraph};
use crate::numkit::{l2_normalize_rows, matmul, matmul_nt, matmul_tn, relu, Matrix, Scalar, NORM_FLOOR};

use super::sage::{sage_backward, sage_forward_with_agg};
use super::{Aggr, LayerParams, ModelConfig, ModelParams, NodeType, Relation, SageParams};

/// One value per node type.
#[derive(Debug, Clone, PartialEq)]
pub struct ByNode<M> {
    pub user: M,
    pub anime: M,
}

impl<M> ByNode<M> {
    fn get(&self, t: NodeType) -> &M {
        match t {
            NodeType::User => &self.user,
            NodeType::Anime => &self.anime,
        }
    }

    fn get_mut(&mut self, t: NodeType) -> &mut M {
        match t {
            NodeType::User => &mut self.user,
            NodeType::Anime => &mut self.anime,
        }
    }

    fn as_ref(&self) -> ByNode<&M> {
        ByNode {
            user: &self.user,
            anime: &self.anime,
        }
    }
}

fn direction(rel: Relation) -> Direction {
    match rel {
        Relation::Rates => Direction::UserToAnime,
        Relation::RevRates => Direction::AnimeToUser,
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RelationCache<T> {
    agg: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerCache<T> {
    relations: BTreeMap<Relation, RelationCache<T>>,
    /// For `Aggr::Max`: per node type, index (into the inbound relation
    /// list) of the relation that won each element.
    argmax: ByNode<Option<Vec<u8>>>,
}

fn inbound(t: NodeType) -> impl Iterator<Item = Relation> {
    Relation::ALL.into_iter().filter(move |r| r.dst() == t)
}

fn relation_params<T>(layer: &LayerParams<T>, rel: Relation) -> Result<&SageParams<T>> {
    layer
        .get(&rel)
        .ok_or_else(|| Error::Config(format!("no parameters for relation {}", rel.key())))
}

fn combine<T: Scalar>(outputs: Vec<Matrix<T>>, aggr: Aggr) -> Result<(Matrix<T>, Option<Vec<u8>>)> {
    let n = outputs.len();
    let mut it = outputs.into_iter();
    let mut acc = it
        .next()
        .ok_or_else(|| Error::Config("node type has no inbound relation".into()))?;
    match aggr {
        Aggr::Sum | Aggr::Mean => {
            for m in it {
                acc.add_assign(&m)?;
            }
            if aggr == Aggr::Mean && n > 1 {
                acc = acc.scale(T::one() / T::lit(n as f64));
            }
            Ok((acc, None))
        }
        Aggr::Max => {
            let mut arg = vec![0u8; acc.as_slice().len()];
            for (r, m) in it.enumerate() {
                for (k, (a, &b)) in acc.as_mut_slice().iter_mut().zip(m.as_slice()).enumerate() {
                    if b > *a {
                        *a = b;
                        arg[k] = (r + 1) as u8;
                    }
                }
            }
            Ok((acc, Some(arg)))
        }
    }
}

fn combine_backward<T: Scalar>(d: &Matrix<T>, aggr: Aggr, n: usize, slot: usize, argmax: Option<&[u8]>) -> Matrix<T> {
    match aggr {
        Aggr::Sum => d.clone(),
        Aggr::Mean => d.scale(T::one() / T::lit(n as f64)),
        Aggr::Max => {
            let arg = argmax.expect("max combine records its argmax");
            let mut out = d.clone();
            for (v, &a) in out.as_mut_slice().iter_mut().zip(arg) {
                if a as usize != slot {
                    *v = T::zero();
                }
            }
            out
        }
    }
}

fn layer_forward<T: Scalar>(
    layer: &LayerParams<T>,
    x: ByNode<&Matrix<T>>,
    adj: &Adjacency,
    aggr: Aggr,
) -> Result<(ByNode<Matrix<T>>, LayerCache<T>)> {
    let mut relations = BTreeMap::new();
    let mut run = |t: NodeType| -> Result<(Matrix<T>, Option<Vec<u8>>)> {
        let mut outs = Vec::new();
        for rel in inbound(t) {
            let p = relation_params(layer, rel)?;
            let (out, agg) =
                sage_forward_with_agg(p, x.get(rel.dst()), x.get(rel.src()), adj.neighbors(direction(rel)))?;
            relations.insert(rel, RelationCache { agg });
            outs.push(out);
        }
        combine(outs, aggr)
    };
    let (user, user_arg) = run(NodeType::User)?;
    let (anime, anime_arg) = run(NodeType::Anime)?;
    Ok((
        ByNode { user, anime },
        LayerCache {
            relations,
            argmax: ByNode {
                user: user_arg,
                anime: anime_arg,
            },
        },
    ))
}

/// Applies one heterogeneous SAGE layer: anime rows from the `rates`
/// relation, user rows from `rev_rates`, relation outputs combined per `aggr`.
pub fn hetero_layer_forward<T: Scalar>(
    layer: &LayerParams<T>,
    user_x: &Matrix<T>,
    anime_x: &Matrix<T>,
    adj: &Adjacency,
    aggr: Aggr,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let (h, _) = layer_forward(layer, ByNode { user: user_x, anime: anime_x }, adj, aggr)?;
    Ok((h.user, h.anime))
}

/// Parameter gradients and, when requested, gradients of the layer inputs.
type LayerGrads<T> = (LayerParams<T>, Option<ByNode<Matrix<T>>>);

fn layer_backward<T: Scalar>(
    layer: &LayerParams<T>,
    cache: &LayerCache<T>,
    x: ByNode<&Matrix<T>>,
    adj: &Adjacency,
    aggr: Aggr,
    d_h: &ByNode<Matrix<T>>,
    input_grads: bool,
) -> Result<LayerGrads<T>> {
    let mut grads = BTreeMap::new();
    let mut d_x = input_grads.then(|| ByNode {
        user: Matrix::zeros(x.user.rows(), x.user.cols()),
        anime: Matrix::zeros(x.anime.rows(), x.anime.cols()),
    });
    for t in [NodeType::User, NodeType::Anime] {
        let rels: Vec<Relation> = inbound(t).collect();
        for (slot, &rel) in rels.iter().enumerate() {
            let p = relation_params(layer, rel)?;
            let rc = cache
                .relations
                .get(&rel)
                .ok_or_else(|| Error::Internal(format!("cache has no entry for relation {}", rel.key())))?;
            let d_out = combine_backward(d_h.get(t), aggr, rels.len(), slot, cache.argmax.get(t).as_deref());
            let g = sage_backward(
                p,
                x.get(rel.dst()),
                &rc.agg,
                adj.neighbors(direction(rel)),
                x.get(rel.src()).rows(),
                &d_out,
                input_grads,
            )?;
            if let Some(d_x) = d_x.as_mut() {
                d_x.get_mut(rel.dst()).add_assign(g.d_x_dst.as_ref().expect("requested"))?;
                d_x.get_mut(rel.src()).add_assign(g.d_x_src.as_ref().expect("requested"))?;
            }
            grads.insert(rel, g.params);
        }
    }
    Ok((grads, d_x))
}

/// Reverse pass of [`l2_normalize_rows`]: `dx = (dy − y·(y·dy)) / ‖x‖`, with
/// pass-through for rows at or below the norm floor.
fn normalize_backward<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
    let floor = T::lit(NORM_FLOOR);
    let mut dx = dy.clone();
    for r in 0..x.rows() {
        let norm = x.row(r).iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
        if norm <= floor {
            continue;
        }
        let yr = y.row(r);
        let dot = yr.iter().zip(dy.row(r)).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        for (d, &yv) in dx.row_mut(r).iter_mut().zip(yr) {
            *d = (*d - yv * dot) / norm;
        }
    }
    dx
}

fn mask_positive<T: Scalar>(d: &mut Matrix<T>, pre: &Matrix<T>) {
    for (g, &p) in d.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Intermediates of [`encoder_forward`] needed by the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderCache<T> {
    l1: LayerCache<T>,
    h1: ByNode<Matrix<T>>,
    n1: ByNode<Matrix<T>>,
    a1: ByNode<Matrix<T>>,
    l2: LayerCache<T>,
    h2: ByNode<Matrix<T>>,
    z: ByNode<Matrix<T>>,
    normalize: bool,
    normalize_final: bool,
    aggr: Aggr,
}

impl<T> EncoderCache<T> {
    pub fn user_z(&self) -> &Matrix<T> {
        &self.z.user
    }

    pub fn anime_z(&self) -> &Matrix<T> {
        &self.z.anime
    }
}

fn check_adjacency<T: Scalar>(g: &HeteroGraph<T>, adj: &Adjacency) -> Result<()> {
    if adj.num_users() != g.num_users() || adj.num_anime() != g.num_anime() {
        return Err(Error::Validation(format!(
            "adjacency covers {} users / {} anime, graph has {} / {}",
            adj.num_users(),
            adj.num_anime(),
            g.num_users(),
            g.num_anime()
        )));
    }
    Ok(())
}

/// Layer 1 → optional L2 row-normalize → ReLU → layer 2 → optional final
/// normalize. Returns `(user_z, anime_z, cache)`.
pub fn encoder_forward<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    graph: &HeteroGraph<T>,
    adj: &Adjacency,
) -> Result<(Matrix<T>, Matrix<T>, EncoderCache<T>)> {
    params.check(config)?;
    config.check_graph(graph)?;
    check_adjacency(graph, adj)?;
    let x = ByNode {
        user: &graph.user_x,
        anime: &graph.anime_x,
    };
    let (h1, l1) = layer_forward(&params.layer1, x, adj, config.aggr)?;
    let n1 = if config.normalize {
        ByNode {
            user: l2_normalize_rows(&h1.user),
            anime: l2_normalize_rows(&h1.anime),
        }
    } else {
        h1.clone()
    };
    let a1 = ByNode {
        user: relu(&n1.user),
        anime: relu(&n1.anime),
    };
    let (h2, l2) = layer_forward(&params.layer2, a1.as_ref(), adj, config.aggr)?;
    let z = if config.normalize_final {
        ByNode {
            user: l2_normalize_rows(&h2.user),
            anime: l2_normalize_rows(&h2.anime),
        }
    } else {
        h2.clone()
    };
    let cache = EncoderCache {
        l1,
        h1,
        n1,
        a1,
        l2,
        h2,
        z: z.clone(),
        normalize: config.normalize,
        normalize_final: config.normalize_final,
        aggr: config.aggr,
    };
    Ok((z.user, z.anime, cache))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderCache<T> {
    z_cat: Matrix<T>,
    pre: Matrix<T>,
    hid: Matrix<T>,
}

fn decoder_forward_cached<T: Scalar>(
    params: &ModelParams<T>,
    user_z: &Matrix<T>,
    anime_z: &Matrix<T>,
    pairs: &[(usize, usize)],
) -> Result<(Vec<T>, DecoderCache<T>)> {
    let h = user_z.cols();
    if anime_z.cols() != h || params.dec_w1.rows() != 2 * h {
        return Err(Error::Shape {
            op: "decoder_forward",
            left: (user_z.cols(), anime_z.cols()),
            right: params.dec_w1.shape(),
        });
    }
    let mut z_cat = Matrix::zeros(pairs.len(), 2 * h);
    for (e, &(u, a)) in pairs.iter().enumerate() {
        if u >= user_z.rows() || a >= anime_z.rows() {
            return Err(Error::Validation(format!(
                "pair {e} = ({u}, {a}) out of range for {} users and {} anime",
                user_z.rows(),
                anime_z.rows()
            )));
        }
        let row = z_cat.row_mut(e);
        row[..h].copy_from_slice(user_z.row(u));
        row[h..].copy_from_slice(anime_z.row(a));
    }
    let mut pre = matmul(&z_cat, &params.dec_w1)?;
    pre.add_row_broadcast(params.dec_b1.as_slice())?;
    let hid = relu(&pre);
    let mut out = matmul(&hid, &params.dec_w2)?;
    out.add_row_broadcast(params.dec_b2.as_slice())?;
    Ok((out.into_vec(), DecoderCache { z_cat, pre, hid }))
}

/// Rating prediction per `(user, anime)` pair:
/// `relu([z_u ‖ z_a]·W1 + b1)·W2 + b2`, unclamped, in input order.
pub fn decoder_forward<T: Scalar>(
    params: &ModelParams<T>,
    user_z: &Matrix<T>,
    anime_z: &Matrix<T>,
    pairs: &[(usize, usize)],
) -> Result<Vec<T>> {
    Ok(decoder_forward_cached(params, user_z, anime_z, pairs)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache<T> {
    pub encoder: EncoderCache<T>,
    pub decoder: DecoderCache<T>,
    pairs: Vec<(usize, usize)>,
}

/// Encoder plus decoder on `pairs`, with everything the backward pass needs.
pub fn model_forward<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    graph: &HeteroGraph<T>,
    adj: &Adjacency,
    pairs: &[(usize, usize)],
) -> Result<(Vec<T>, ForwardCache<T>)> {
    let (uz, az, encoder) = encoder_forward(params, config, graph, adj)?;
    let (pred, decoder) = decoder_forward_cached(params, &uz, &az, pairs)?;
    Ok((
        pred,
        ForwardCache {
            encoder,
            decoder,
            pairs: pairs.to_vec(),
        },
    ))
}

fn check_cache<T: Scalar>(
    config: &ModelConfig,
    graph: &HeteroGraph<T>,
    pairs: &[(usize, usize)],
    d_pred: &[T],
    cache: &ForwardCache<T>,
) -> Result<()> {
    let enc = &cache.encoder;
    let stale = cache.pairs != pairs
        || d_pred.len() != pairs.len()
        || enc.normalize != config.normalize
        || enc.normalize_final != config.normalize_final
        || enc.aggr != config.aggr
        || enc.z.user.shape() != (graph.num_users(), config.hidden)
        || enc.z.anime.shape() != (graph.num_anime(), config.hidden);
    if stale {
        return Err(Error::Internal(
            "forward cache does not match the backward inputs".into(),
        ));
    }
    Ok(())
}

/// Gradients of `Σ_e d_pred[e] · pred[e]` with respect to every parameter.
pub fn model_backward<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    graph: &HeteroGraph<T>,
    adj: &Adjacency,
    pairs: &[(usize, usize)],
    d_pred: &[T],
    cache: &ForwardCache<T>,
) -> Result<ModelParams<T>> {
    check_cache(config, graph, pairs, d_pred, cache)?;
    let h = config.hidden;
    let enc = &cache.encoder;
    let dec = &cache.decoder;

    // Decoder.
    let d = Matrix::from_vec(d_pred.len(), 1, d_pred.to_vec())?;
    let dec_b2 = Matrix::from_vec(1, 1, d.col_sums())?;
    let dec_w2 = matmul_tn(&dec.hid, &d)?;
    let mut d_pre = matmul_nt(&d, &params.dec_w2)?;
    mask_positive(&mut d_pre, &dec.pre);
    let dec_b1 = Matrix::from_vec(1, h, d_pre.col_sums())?;
    let dec_w1 = matmul_tn(&dec.z_cat, &d_pre)?;
    let d_zcat = matmul_nt(&d_pre, &params.dec_w1)?;

    let mut d_z = ByNode {
        user: Matrix::zeros(graph.num_users(), h),
        anime: Matrix::zeros(graph.num_anime(), h),
    };
    for (e, &(u, a)) in pairs.iter().enumerate() {
        let row = d_zcat.row(e);
        for (acc, &g) in d_z.user.row_mut(u).iter_mut().zip(&row[..h]) {
            *acc += g;
        }
        for (acc, &g) in d_z.anime.row_mut(a).iter_mut().zip(&row[h..]) {
            *acc += g;
        }
    }

    // Encoder, layer 2.
    let d_h2 = if config.normalize_final {
        ByNode {
            user: normalize_backward(&enc.h2.user, &enc.z.user, &d_z.user),
            anime: normalize_backward(&enc.h2.anime, &enc.z.anime, &d_z.anime),
        }
    } else {
        d_z
    };
    let (layer2, d_a1) = layer_backward(&params.layer2, &enc.l2, enc.a1.as_ref(), adj, config.aggr, &d_h2, true)?;
    let mut d_n1 = d_a1.expect("input grads requested");

    // ReLU, optional normalization, layer 1.
    mask_positive(&mut d_n1.user, &enc.n1.user);
    mask_positive(&mut d_n1.anime, &enc.n1.anime);
    let d_h1 = if config.normalize {
        ByNode {
            user: normalize_backward(&enc.h1.user, &enc.n1.user, &d_n1.user),
            anime: normalize_backward(&enc.h1.anime, &enc.n1.anime, &d_n1.anime),
        }
    } else {
        d_n1
    };
    let x = ByNode {
        user: &graph.user_x,
        anime: &graph.anime_x,
    };
    let (layer1, _) = layer_backward(&params.layer1, &enc.l1, x, adj, config.aggr, &d_h1, false)?;

    Ok(ModelParams {
        layer1,
        layer2,
        dec_w1,
        dec_b1,
        dec_w2,
        dec_b2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::init_model;
    use crate::graph::{build_graph, IdMap};
    use crate::numkit::Rng;

    fn ids(n: usize) -> IdMap {
        IdMap::from_ids((0..n).map(|i| i.to_string()).collect()).unwrap()
    }

    fn small_graph() -> HeteroGraph<f64> {
        let anime_x = Matrix::from_rows(&[[0.5, 1.0, 0.0], [-0.2, 0.0, 1.0], [0.9, 1.0, 1.0]]).unwrap();
        build_graph(
            Matrix::identity(2),
            anime_x,
            vec![(0, 0), (0, 2), (1, 1), (1, 2)],
            vec![8.0, 5.0, 3.0, 9.0],
            ids(2),
            ids(3),
        )
        .unwrap()
    }

    fn zero_params(cfg: &ModelConfig) -> ModelParams<f64> {
        init_model::<f64>(cfg, &mut Rng::new(0)).unwrap().zeros_like()
    }

    #[test]
    fn zero_weights_give_bias_rows() {
        let g = small_graph();
        let cfg = ModelConfig::new(4, 2, 1, 2);
        let mut p = zero_params(&cfg);
        for sp in p.layer1.values_mut() {
            sp.bias = Matrix::from_rows(&[[0.5, -1.0, 2.0, 0.0]]).unwrap();
        }
        let (uh, ah) = hetero_layer_forward(&p.layer1, &g.user_x, &g.anime_x, &g.adjacency(), Aggr::Sum).unwrap();
        assert_eq!(uh.shape(), (2, 4));
        assert_eq!(ah.shape(), (3, 4));
        for r in 0..2 {
            assert_eq!(uh.row(r), &[0.5, -1.0, 2.0, 0.0]);
        }
        for r in 0..3 {
            assert_eq!(ah.row(r), &[0.5, -1.0, 2.0, 0.0]);
        }
    }

    #[test]
    fn single_relation_layer_matches_sage_forward() {
        let g = small_graph();
        let cfg = ModelConfig::new(3, 2, 1, 2);
        let p: ModelParams<f64> = init_model(&cfg, &mut Rng::new(7)).unwrap();
        let adj = g.adjacency();
        for aggr in [Aggr::Sum, Aggr::Mean, Aggr::Max] {
            let (uh, ah) = hetero_layer_forward(&p.layer1, &g.user_x, &g.anime_x, &adj, aggr).unwrap();
            let ah_ref = crate::gnn::sage_forward(&p.layer1[&Relation::Rates], &g.anime_x, &g.user_x, &adj.to_anime).unwrap();
            let uh_ref = crate::gnn::sage_forward(&p.layer1[&Relation::RevRates], &g.user_x, &g.anime_x, &adj.to_user).unwrap();
            assert_eq!(ah, ah_ref);
            assert_eq!(uh, uh_ref);
        }
    }

    #[test]
    fn missing_relation_is_config_error() {
        let g = small_graph();
        let cfg = ModelConfig::new(3, 2, 1, 2);
        let mut p: ModelParams<f64> = init_model(&cfg, &mut Rng::new(7)).unwrap();
        p.layer1.remove(&Relation::Rates);
        let err = hetero_layer_forward(&p.layer1, &g.user_x, &g.anime_x, &g.adjacency(), Aggr::Sum).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let g = small_graph();
        let cfg = ModelConfig {
            normalize: false,
            ..ModelConfig::new(4, 2, 1, 2)
        };
        let p = zero_params(&cfg);
        let (uz, az, _) = encoder_forward(&p, &cfg, &g, &g.adjacency()).unwrap();
        assert_eq!(uz, Matrix::zeros(2, 4));
        assert_eq!(az, Matrix::zeros(3, 4));
    }

    #[test]
    fn passthrough_layer2_reproduces_layer1_activations() {
        let g = small_graph();
        let cfg = ModelConfig::new(4, 2, 1, 2);
        let mut p: ModelParams<f64> = init_model(&cfg, &mut Rng::new(3)).unwrap();
        for sp in p.layer2.values_mut() {
            sp.w_self = Matrix::identity(4);
            sp.w_neigh = Matrix::zeros(4, 4);
            sp.bias = Matrix::zeros(1, 4);
        }
        let adj = g.adjacency();
        let (uz, az, _) = encoder_forward(&p, &cfg, &g, &adj).unwrap();
        // Direct evaluation of layer 1 → normalize → relu.
        let (uh, ah) = hetero_layer_forward(&p.layer1, &g.user_x, &g.anime_x, &adj, Aggr::Sum).unwrap();
        assert_eq!(uz, relu(&l2_normalize_rows(&uh)));
        assert_eq!(az, relu(&l2_normalize_rows(&ah)));
    }

    #[test]
    fn decoder_constant_bias() {
        let cfg = ModelConfig::new(3, 2, 1, 2);
        let mut p = zero_params(&cfg);
        p.dec_b2 = Matrix::filled(1, 1, 7.0);
        let uz = Matrix::filled(2, 3, 0.4);
        let az = Matrix::filled(3, 3, -0.1);
        let pairs = [(0, 0), (1, 2), (0, 1), (1, 1), (0, 0)];
        let pred = decoder_forward(&p, &uz, &az, &pairs).unwrap();
        assert_eq!(pred, vec![7.0; 5]);
        assert!(decoder_forward(&p, &uz, &az, &[(2, 0)]).is_err());
    }

    #[test]
    fn decoder_one_hidden_unit_by_hand() {
        // hidden = 1: z = [zu, za], pre = zu*w1a + za*w1b + b1, pred = relu(pre)*w2 + b2.
        let cfg = ModelConfig::new(1, 2, 1, 2);
        let mut p = zero_params(&cfg);
        p.dec_w1 = Matrix::from_rows(&[[0.5], [-2.0]]).unwrap();
        p.dec_b1 = Matrix::filled(1, 1, 0.25);
        p.dec_w2 = Matrix::filled(1, 1, 3.0);
        p.dec_b2 = Matrix::filled(1, 1, 1.5);
        let uz = Matrix::from_rows(&[[2.0], [-1.0]]).unwrap();
        let az = Matrix::from_rows(&[[0.1], [1.0]]).unwrap();
        let pred = decoder_forward(&p, &uz, &az, &[(0, 0), (1, 1)]).unwrap();
        let by_hand = |zu: f64, za: f64| {
            let pre: f64 = zu * 0.5 + za * -2.0 + 0.25;
            pre.max(0.0) * 3.0 + 1.5
        };
        assert_eq!(pred, vec![by_hand(2.0, 0.1), by_hand(-1.0, 1.0)]);
        assert_eq!(pred[1], 1.5);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let g = small_graph();
        let cfg = ModelConfig::new(3, 2, 1, 2);
        let p: ModelParams<f64> = init_model(&cfg, &mut Rng::new(1)).unwrap();
        let adj = g.adjacency();
        let pairs = g.edges.clone();
        let (_, cache) = model_forward(&p, &cfg, &g, &adj, &pairs).unwrap();
        let grads = model_backward(&p, &cfg, &g, &adj, &pairs, &[0.0; 4], &cache).unwrap();
        assert_eq!(grads, p.zeros_like());
        for ((n1, a), (n2, b)) in grads.tensors().iter().zip(p.tensors()) {
            assert_eq!(n1, &n2);
            assert_eq!(a.shape(), b.shape());
        }
    }

    #[test]
    fn stale_cache_rejected() {
        let g = small_graph();
        let cfg = ModelConfig::new(3, 2, 1, 2);
        let p: ModelParams<f64> = init_model(&cfg, &mut Rng::new(1)).unwrap();
        let adj = g.adjacency();
        let (_, cache) = model_forward(&p, &cfg, &g, &adj, &[(0, 0), (1, 1)]).unwrap();
        let err = model_backward(&p, &cfg, &g, &adj, &[(0, 0)], &[1.0], &cache).unwrap_err();
        assert!(matches!(err, Error::Internal(_)));
        let other = ModelConfig {
            normalize: false,
            ..cfg.clone()
        };
        let err = model_backward(&p, &other, &g, &adj, &[(0, 0), (1, 1)], &[1.0, 1.0], &cache).unwrap_err();
        assert!(matches!(err, Error::Internal(_)));
    }

    #[test]
    fn decoder_locality() {
        let g = small_graph();
        let cfg = ModelConfig::new(3, 2, 1, 2);
        let p: ModelParams<f64> = init_model(&cfg, &mut Rng::new(2)).unwrap();
        let (uz, mut az, _) = encoder_forward(&p, &cfg, &g, &g.adjacency()).unwrap();
        let pairs = [(0, 0), (0, 1), (1, 2), (1, 1)];
        let before = decoder_forward(&p, &uz, &az, &pairs).unwrap();
        az.row_mut(1).iter_mut().for_each(|v| *v += 0.7);
        let after = decoder_forward(&p, &uz, &az, &pairs).unwrap();
        for (i, &(_, a)) in pairs.iter().enumerate() {
            if a != 1 {
                assert_eq!(before[i], after[i]);
            }
        }
    }

    #[test]
    fn isolated_nodes_stay_finite() {
        let anime_x = Matrix::from_rows(&[[0.5, 1.0], [0.0, 0.0]]).unwrap();
        let g = build_graph(Matrix::identity(3), anime_x, vec![(0, 0)], vec![5.0], ids(3), ids(2)).unwrap();
        let cfg = ModelConfig::new(4, 1, 1, 3);
        let p: ModelParams<f64> = init_model(&cfg, &mut Rng::new(2)).unwrap();
        let (uz, az, _) = encoder_forward(&p, &cfg, &g, &g.adjacency()).unwrap();
        assert!(uz.is_finite() && az.is_finite());
    }

    #[test]
    fn runs_in_f32() {
        let g64 = small_graph();
        let g = build_graph(
            Matrix::<f32>::identity(2),
            Matrix::from_vec(3, 3, g64.anime_x.as_slice().iter().map(|&v| v as f32).collect()).unwrap(),
            g64.edges.clone(),
            g64.labels.iter().map(|&v| v as f32).collect(),
            ids(2),
            ids(3),
        )
        .unwrap();
        let cfg = ModelConfig::new(3, 2, 1, 2);
        let p: ModelParams<f32> = init_model(&cfg, &mut Rng::new(1)).unwrap();
        let adj = g.adjacency();
        let (pred, cache) = model_forward(&p, &cfg, &g, &adj, &g.edges).unwrap();
        assert_eq!(pred.len(), 4);
        let grads = model_backward(&p, &cfg, &g, &adj, &g.edges, &[1.0f32; 4], &cache).unwrap();
        assert!(grads.tensors().iter().all(|(_, m)| m.is_finite()));
    }
}
