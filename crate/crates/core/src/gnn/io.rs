//! JSON model file:
//!
//! ```text
//! {"version":1,
//!  "config":{"hidden":..,"aggr":"sum","normalize":true,...},
//!  "params":{"l1.u2a.w_self":{"shape":[r,c],"data":[...]}, ...}}
//! ```
//!
//! Floats are written in shortest round-trip form, so a load after a save is
//! bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar};

use super::{ModelConfig, ModelParams, Relation, SageParams};

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u64,
    config: ModelConfig,
    params: BTreeMap<String, TensorRecord>,
}

pub fn model_to_json<T: Scalar>(params: &ModelParams<T>, config: &ModelConfig) -> Result<String> {
    params.check(config)?;
    let mut records = BTreeMap::new();
    for (name, m) in params.tensors() {
        if !m.is_finite() {
            return Err(Error::Validation(format!("{name} contains non-finite values")));
        }
        records.insert(
            name,
            TensorRecord {
                shape: [m.rows(), m.cols()],
                data: m.as_slice().iter().map(|v| v.as_f64()).collect(),
            },
        );
    }
    let file = ModelFile {
        version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        params: records,
    };
    serde_json::to_string(&file).map_err(|e| Error::format(None, e.to_string()))
}

pub fn model_from_json<T: Scalar>(text: &str) -> Result<(ModelParams<T>, ModelConfig)> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::format(Some(e.line()), format!("model file: {e}")))?;
    let version = value.get("version").and_then(serde_json::Value::as_u64);
    if version != Some(MODEL_FORMAT_VERSION) {
        let found = value
            .get("version")
            .map_or_else(|| "none".to_string(), ToString::to_string);
        return Err(Error::format(
            None,
            format!("model file version {found} is not supported (supported: {MODEL_FORMAT_VERSION})"),
        ));
    }
    let mut file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::format(None, format!("model file: {e}")))?;

    let mut take = |name: &str| -> Result<Matrix<T>> {
        let rec = file
            .params
            .remove(name)
            .ok_or_else(|| Error::format(None, format!("model file has no parameter `{name}`")))?;
        let data = rec.data.into_iter().map(T::lit).collect();
        Matrix::from_vec(rec.shape[0], rec.shape[1], data)
            .map_err(|_| Error::format(None, format!("parameter `{name}`: data length does not match shape")))
    };
    let mut layer = |prefix: &str| -> Result<BTreeMap<Relation, SageParams<T>>> {
        let mut out = BTreeMap::new();
        for rel in Relation::ALL {
            let base = format!("{prefix}.{}", rel.key());
            out.insert(
                rel,
                SageParams {
                    w_self: take(&format!("{base}.w_self"))?,
                    w_neigh: take(&format!("{base}.w_neigh"))?,
                    bias: take(&format!("{base}.bias"))?,
                },
            );
        }
        Ok(out)
    };
    let layer1 = layer("l1")?;
    let layer2 = layer("l2")?;
    let params = ModelParams {
        layer1,
        layer2,
        dec_w1: take("dec.w1")?,
        dec_b1: take("dec.b1")?,
        dec_w2: take("dec.w2")?,
        dec_b2: take("dec.b2")?,
    };
    if let Some(extra) = file.params.keys().next() {
        return Err(Error::format(None, format!("unknown parameter `{extra}` in model file")));
    }
    params
        .check(&file.config)
        .map_err(|e| Error::format(None, e.to_string()))?;
    Ok((params, file.config))
}

/// Writes the model to `path` through a temporary sibling and a rename, so
/// a failed save never leaves a partial file behind.
pub fn save_model<T: Scalar>(params: &ModelParams<T>, config: &ModelConfig, path: &Path) -> Result<()> {
    let text = model_to_json(params, config)?;
    crate::util::write_atomic(path, text.as_bytes())
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<(ModelParams<T>, ModelConfig)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::init_model;
    use crate::numkit::Rng;

    fn model() -> (ModelParams<f64>, ModelConfig) {
        let cfg = ModelConfig::new(4, 3, 2, 5);
        let mut p: ModelParams<f64> = init_model(&cfg, &mut Rng::new(9)).unwrap();
        p.dec_b2 = Matrix::filled(1, 1, 0.1 + 0.2);
        p.dec_b1.as_mut_slice()[0] = 1e-300;
        p.dec_b1.as_mut_slice()[1] = -std::f64::consts::PI;
        (p, cfg)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (p, cfg) = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&p, &cfg, &path).unwrap();
        let (q, cfg2) = load_model::<f64>(&path).unwrap();
        assert_eq!(cfg, cfg2);
        for ((_, a), (_, b)) in p.tensors().iter().zip(q.tensors()) {
            let bits = |m: &Matrix<f64>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let (p, cfg) = model();
        let text = model_to_json(&p, &cfg).unwrap().replacen("\"version\":1", "\"version\":7", 1);
        let msg = model_from_json::<f64>(&text).unwrap_err().to_string();
        assert!(msg.contains('7') && msg.contains("supported: 1"), "{msg}");
    }

    #[test]
    fn truncated_file_rejected() {
        let (p, cfg) = model();
        let text = model_to_json(&p, &cfg).unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(model_from_json::<f64>(cut), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_and_misshapen_params_rejected() {
        let (p, cfg) = model();
        let text = model_to_json(&p, &cfg).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["params"].as_object_mut().unwrap().remove("dec.w2");
        assert!(model_from_json::<f64>(&v.to_string()).unwrap_err().to_string().contains("dec.w2"));

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["params"]["dec.b1"]["shape"] = serde_json::json!([1, 3]);
        assert!(model_from_json::<f64>(&v.to_string()).is_err());
    }

    #[test]
    fn file_layout() {
        let (p, cfg) = model();
        let v: serde_json::Value = serde_json::from_str(&model_to_json(&p, &cfg).unwrap()).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["config"]["hidden"], 4);
        assert_eq!(v["config"]["aggr"], "sum");
        assert_eq!(v["params"]["l1.u2a.w_self"]["shape"], serde_json::json!([5, 4]));
        assert_eq!(v["params"].as_object().unwrap().len(), 16);
    }
}
