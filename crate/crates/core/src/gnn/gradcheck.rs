//! Central finite-difference check of [`model_backward`].
//!
//! The objective is `L = Σ_e g_e · pred_e` with a fixed random `g`, so the
//! analytic gradient is `model_backward(.., d_pred = g, ..)` and every
//! parameter entry `θ` is compared against `(L(θ + h) − L(θ − h)) / 2h`
//! using `|a − fd| / max(|a|, |fd|, 1e-8)`.

use crate::error::{Error, Result};
use crate::graph::{Adjacency, HeteroGraph};
use crate::numkit::Rng;
use crate::synth::random_graph;

use super::{init_model, model_backward, model_forward, Aggr, ModelConfig, ModelParams};

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub num_users: usize,
    pub num_anime: usize,
    pub num_edges: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub genre_dim: usize,
    pub step: f64,
    pub tolerance: f64,
    pub aggr: Aggr,
    pub normalize: bool,
    pub normalize_final: bool,
    /// Scales the analytic gradient of `l1.u2a.w_neigh` by `1 + 1e-3`.
    /// Negative control for the checker itself.
    pub corrupt: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seed: 0,
            num_users: 6,
            num_anime: 8,
            num_edges: 20,
            hidden: 8,
            embed_dim: 5,
            genre_dim: 3,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            aggr: Aggr::Sum,
            normalize: true,
            normalize_final: false,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    /// Parameter holding the worst entry, e.g. `l1.a2u.w_self[3]`.
    pub worst: String,
    /// Worst relative error per parameter, in tensor order.
    pub per_param: Vec<(String, f64)>,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }

    /// `Ok` when passed, otherwise [`Error::GradcheckFailed`].
    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::GradcheckFailed {
                param: self.worst,
                rel_err: self.max_rel_err,
                tolerance: self.tolerance,
            })
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

fn objective(
    params: &ModelParams<f64>,
    config: &ModelConfig,
    graph: &HeteroGraph<f64>,
    adj: &Adjacency,
    g: &[f64],
) -> Result<f64> {
    let (pred, _) = model_forward(params, config, graph, adj, &graph.edges)?;
    Ok(pred.iter().zip(g).map(|(p, w)| p * w).sum())
}

pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if !(cfg.step > 0.0) || !(cfg.tolerance > 0.0) {
        return Err(Error::Argument("step and tolerance must be positive".into()));
    }
    let mut rng = Rng::new(cfg.seed);
    let graph = random_graph(
        cfg.num_users,
        cfg.num_anime,
        cfg.num_edges,
        cfg.embed_dim,
        cfg.genre_dim,
        &mut rng,
    )?;
    let mut config = ModelConfig::new(cfg.hidden, cfg.embed_dim, cfg.genre_dim, cfg.num_users);
    config.aggr = cfg.aggr;
    config.normalize = cfg.normalize;
    config.normalize_final = cfg.normalize_final;
    config.validate()?;

    let mut params: ModelParams<f64> = init_model(&config, &mut rng)?;
    // Non-zero biases keep pre-activations away from the ReLU kink.
    for (name, m) in params.tensors_mut() {
        if name.ends_with("bias") || name.starts_with("dec.b") {
            for v in m.as_mut_slice() {
                *v = rng.uniform_in(-0.2, 0.2);
            }
        }
    }
    let g: Vec<f64> = (0..graph.num_edges()).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let adj = graph.adjacency();

    let (_, cache) = model_forward(&params, &config, &graph, &adj, &graph.edges)?;
    let mut grads = model_backward(&params, &config, &graph, &adj, &graph.edges, &g, &cache)?;
    if cfg.corrupt {
        for (name, m) in grads.tensors_mut() {
            if name == "l1.u2a.w_neigh" {
                *m = m.scale(1.0 + 1e-3);
            }
        }
    }
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, m)| (n, m.as_slice().to_vec()))
        .collect();

    let h = cfg.step;
    let mut report = GradcheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        per_param: Vec::with_capacity(analytic.len()),
        checked: 0,
        tolerance: cfg.tolerance,
    };
    for (ti, (name, a)) in analytic.iter().enumerate() {
        let mut worst_here = 0.0f64;
        for (k, &ak) in a.iter().enumerate() {
            let orig = params.tensors()[ti].1.as_slice()[k];
            let set = |p: &mut ModelParams<f64>, v: f64| p.tensors_mut()[ti].1.as_mut_slice()[k] = v;
            set(&mut params, orig + h);
            let plus = objective(&params, &config, &graph, &adj, &g)?;
            set(&mut params, orig - h);
            let minus = objective(&params, &config, &graph, &adj, &g)?;
            set(&mut params, orig);
            let err = relative_error(ak, (plus - minus) / (2.0 * h));
            if err > worst_here {
                worst_here = err;
            }
            if report.worst.is_empty() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = format!("{name}[{k}]");
            }
            report.checked += 1;
        }
        report.per_param.push((name.clone(), worst_here));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1e-9, 0.0), 0.1);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
    }

    #[test]
    fn default_passes_every_parameter() {
        let r = gradcheck(&GradcheckConfig::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.per_param.len(), 16);
        let p: ModelParams<f64> = init_model(&ModelConfig::new(8, 5, 3, 6), &mut Rng::new(0)).unwrap();
        assert_eq!(r.checked, p.num_scalars());
    }

    #[test]
    fn passes_for_other_settings() {
        for (seed, aggr, normalize, normalize_final) in [
            (1, Aggr::Mean, true, true),
            (2, Aggr::Max, false, false),
            (3, Aggr::Sum, false, true),
        ] {
            let cfg = GradcheckConfig {
                seed,
                aggr,
                normalize,
                normalize_final,
                ..GradcheckConfig::default()
            };
            let r = gradcheck(&cfg).unwrap();
            assert!(r.passed(), "{cfg:?}: {r:?}");
        }
    }

    #[test]
    fn corrupted_gradient_detected() {
        let cfg = GradcheckConfig {
            corrupt: true,
            ..GradcheckConfig::default()
        };
        let r = gradcheck(&cfg).unwrap();
        assert!(!r.passed());
        assert!(r.worst.starts_with("l1.u2a.w_neigh"), "{}", r.worst);
        assert!(matches!(r.into_result(), Err(Error::GradcheckFailed { .. })));
    }

    #[test]
    fn repeatable() {
        let a = gradcheck(&GradcheckConfig::default()).unwrap();
        let b = gradcheck(&GradcheckConfig::default()).unwrap();
        assert_eq!(a.max_rel_err.to_bits(), b.max_rel_err.to_bits());
    }
}
