//! Checkpoint directory: `weights.bin`, `bundle.json` and `loss_history.csv`.
//!
//! `weights.bin` is a sequence of little-endian records
//! `u32 name_len | name (UTF-8) | u32 rank | u32 dims[rank] | f32 data[...]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{Layer, NetworkParams, Tensor};
use crate::physics::CoefficientSet;
use crate::raster::Health;
use crate::{Error, Result};

use super::config::TrainConfig;
use super::train::{LossRecord, ModelBundle};

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const BUNDLE_FILE: &str = "bundle.json";
pub const LOSS_CSV_FILE: &str = "loss_history.csv";

#[derive(Serialize, Deserialize)]
struct Topologies {
    generator: Vec<Layer>,
    d1: Vec<Layer>,
    d2: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    config: TrainConfig,
    coeffs: CoefficientSet,
    loss_history: Vec<LossRecord>,
    class: Option<Health>,
    dates: Vec<String>,
    date_index: u32,
    topology: Topologies,
}

fn encode_weights(nets: [&NetworkParams<f32>; 3]) -> Vec<u8> {
    let mut out = Vec::new();
    for net in nets {
        for (name, t) in &net.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format { path: self.path.into(), reason: format!("truncated while reading {what}") });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

fn decode_weights(bytes: &[u8], path: &Path) -> Result<BTreeMap<String, Tensor<f32>>> {
    let format_err = |reason: String| Error::Format { path: path.into(), reason };
    let mut r = Reader { bytes, pos: 0, path };
    let mut tensors = BTreeMap::new();
    while r.pos < bytes.len() {
        let len = r.u32("name length")?;
        let name = String::from_utf8(r.take(len, "tensor name")?.to_vec())
            .map_err(|_| format_err("tensor name is not UTF-8".into()))?;
        let rank = r.u32("rank")?;
        if rank > 8 {
            return Err(format_err(format!("tensor `{name}` has implausible rank {rank}")));
        }
        let shape: Vec<usize> = (0..rank).map(|_| r.u32("dimension")).collect::<Result<_>>()?;
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let count = count.filter(|c| c.checked_mul(4).is_some()).ok_or_else(|| format_err(format!("tensor `{name}` is too large")))?;
        let data = r
            .take(count * 4, &format!("data of `{name}`"))?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if tensors.insert(name.clone(), Tensor::from_vec(&shape, data)?).is_some() {
            return Err(format_err(format!("duplicate tensor `{name}`")));
        }
    }
    Ok(tensors)
}

pub fn write_loss_csv(history: &[LossRecord], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in history {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_bundle(bundle: &ModelBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let weights = dir.join(WEIGHTS_FILE);
    fs::write(&weights, encode_weights([&bundle.generator, &bundle.d1, &bundle.d2]))
        .map_err(|e| Error::io(&weights, e))?;
    let meta = BundleMeta {
        config: bundle.config.clone(),
        coeffs: bundle.coeffs,
        loss_history: bundle.loss_history.clone(),
        class: bundle.class,
        dates: bundle.dates.clone(),
        date_index: bundle.date_index,
        topology: Topologies {
            generator: bundle.generator.topology.clone(),
            d1: bundle.d1.topology.clone(),
            d2: bundle.d2.topology.clone(),
        },
    };
    let json_path = dir.join(BUNDLE_FILE);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&json_path, e))?;
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    write_loss_csv(&bundle.loss_history, &dir.join(LOSS_CSV_FILE))
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let json_path = dir.join(BUNDLE_FILE);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let meta: BundleMeta = serde_json::from_str(&text).map_err(|e| Error::json(&json_path, e))?;
    meta.config.validate()?;

    let weights = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&weights).map_err(|e| Error::io(&weights, e))?;
    let mut all = decode_weights(&bytes, &weights)?;
    let mut take = |topology: Vec<Layer>| -> Result<NetworkParams<f32>> {
        let mut net = NetworkParams { topology, tensors: BTreeMap::new() };
        for name in net.tensor_names() {
            if let Some(t) = all.remove(&name) {
                net.tensors.insert(name, t);
            }
        }
        net.validate().map_err(|e| Error::Format { path: weights.clone(), reason: e.to_string() })?;
        Ok(net)
    };
    let generator = take(meta.topology.generator)?;
    let d1 = take(meta.topology.d1)?;
    let d2 = take(meta.topology.d2)?;
    if let Some(extra) = all.keys().next() {
        return Err(Error::Format { path: weights, reason: format!("unexpected tensor `{extra}`") });
    }
    Ok(ModelBundle {
        generator,
        d1,
        d2,
        coeffs: meta.coeffs,
        config: meta.config,
        loss_history: meta.loss_history,
        class: meta.class,
        dates: meta.dates,
        date_index: meta.date_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::train::init_networks;

    fn bundle() -> ModelBundle {
        let config = TrainConfig { base_channels: 2, latent_dim: 20, ..TrainConfig::default() };
        let [generator, d1, d2] = init_networks(&config);
        ModelBundle {
            generator,
            d1,
            d2,
            coeffs: CoefficientSet { g: 0.2, h: 3.0, k: 0.6, rho: 0.4, fit_residual: 1e-3, converged: true },
            config,
            loss_history: vec![LossRecord { step: 5, d1_loss: 1.3, d2_loss: 1.2, g_loss: 0.9, sr_loss: 0.01 }],
            class: Some(Health::Unhealthy),
            dates: vec!["date_0".into()],
            date_index: 0,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle();
        save_bundle(&b, dir.path()).unwrap();
        assert_eq!(load_bundle(dir.path()).unwrap(), b);
        let csv = fs::read_to_string(dir.path().join(LOSS_CSV_FILE)).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "step,d1_loss,d2_loss,g_loss,sr_loss");
    }

    #[test]
    fn truncated_weights_are_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle(), dir.path()).unwrap();
        let path = dir.path().join(WEIGHTS_FILE);
        let bytes = fs::read(&path).unwrap();
        for cut in [bytes.len() - 3, bytes.len() / 2, 2] {
            fs::write(&path, &bytes[..cut]).unwrap();
            assert!(matches!(load_bundle(dir.path()), Err(Error::Format { .. })), "cut at {cut}");
        }
    }
}
