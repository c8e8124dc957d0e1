use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{invalid, Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"FNMTPARM";

/// Stable handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named model parameters in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(invalid(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Zeroed gradient accumulators with one tensor per parameter.
    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            grads: self.values.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    /// Writes the container: magic, manifest length, JSON manifest, then
    /// every parameter as little-endian `f64` in manifest order.
    pub fn write_to<W: Write>(&self, out: &mut W, metadata: serde_json::Value) -> Result<()> {
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            precision: "f64".to_string(),
            params: self
                .iter()
                .map(|(name, t)| ManifestEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            metadata,
        };
        let json = serde_json::to_vec(&manifest)?;
        out.write_all(MAGIC)?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        let mut payload = Vec::with_capacity(self.num_scalars() * 8);
        for t in &self.values {
            for x in t.data() {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.write_all(&payload)?;
        Ok(())
    }

    /// Reads a container written by [`ParamStore::write_to`]. Payloads stored
    /// as `f32` are widened.
    pub fn read_from<R: Read>(input: &mut R) -> Result<(ParamStore, serde_json::Value)> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(ParamStore, serde_json::Value)> {
        let corrupt = |m: &str| Error::CorruptModel(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("missing container header"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() < len {
            return Err(corrupt("truncated manifest"));
        }
        let manifest: Manifest =
            serde_json::from_slice(&body[..len]).map_err(|e| Error::CorruptModel(format!("bad manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::CorruptModel(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        let width = match manifest.precision.as_str() {
            "f64" => 8,
            "f32" => 4,
            other => return Err(Error::CorruptModel(format!("unknown precision {other:?}"))),
        };
        let mut payload = &body[len..];
        let mut store = ParamStore::new();
        for entry in manifest.params {
            let count: usize = entry.shape.iter().product();
            if payload.len() < count * width {
                return Err(Error::CorruptModel(format!(
                    "payload truncated in parameter {:?}",
                    entry.name
                )));
            }
            let (chunk, rest) = payload.split_at(count * width);
            payload = rest;
            let data = if width == 8 {
                chunk
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect()
            } else {
                chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                    .collect()
            };
            store
                .insert(&entry.name, Tensor::new(entry.shape, data)?)
                .map_err(|e| Error::CorruptModel(e.to_string()))?;
        }
        if !payload.is_empty() {
            return Err(corrupt("trailing bytes after payload"));
        }
        Ok((store, manifest.metadata))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    precision: String,
    params: Vec<ManifestEntry>,
    #[serde(default)]
    metadata: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

/// Gradient accumulators matching a [`ParamStore`] tensor for tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.grads.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    /// Builds accumulators from raw tensors, e.g. for clipping tests.
    pub fn from_tensors(grads: Vec<Tensor>) -> Self {
        Gradients { grads }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore {
        let mut store = ParamStore::new();
        store
            .insert("enc.w", Tensor::matrix(2, 2, vec![1.0, -2.5, 3.25, 1e-300]).unwrap())
            .unwrap();
        store.insert("enc.b", Tensor::vector(vec![0.1, 0.2])).unwrap();
        store
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let store = sample();
        let mut buf = Vec::new();
        store
            .write_to(&mut buf, serde_json::json!({"variant": "word"}))
            .unwrap();
        let (back, meta) = ParamStore::from_bytes(&buf).unwrap();
        assert_eq!(back, store);
        assert_eq!(meta["variant"], "word");
    }

    #[test]
    fn truncation_is_corrupt_not_panic() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf, serde_json::Value::Null).unwrap();
        for cut in [0, 7, 15, 20, buf.len() - 1] {
            match ParamStore::from_bytes(&buf[..cut]) {
                Err(Error::CorruptModel(_)) => {}
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = sample();
        assert!(store.insert("enc.w", Tensor::scalar(0.0)).is_err());
    }

    #[test]
    fn grads_match_param_shapes() {
        let store = sample();
        let grads = store.zero_grads();
        for (id, (_, t)) in store.ids().zip(store.iter()) {
            assert_eq!(grads.get(id).shape(), t.shape());
        }
    }
}
