//! Binary checkpoints: `MMCK`, a version byte, a length-prefixed JSON
//! metadata block, then parameters and Adam moments as raw f64 tensors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Architecture, ModelDims};
use crate::numerics::Tensor;
use crate::ssplabel::{AnchorState, PseudoLabelStore};

pub const MAGIC: &[u8; 4] = b"MMCK";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub dims: ModelDims,
    pub architecture: Architecture,
    pub params: Vec<Tensor>,
    pub adam: AdamState,
    pub store: PseudoLabelStore,
    pub anchors: AnchorState,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    config_hash: String,
    dims: ModelDims,
    architecture: Architecture,
    epochs_done: u32,
    adam_step: u64,
    n_params: usize,
    store: String,
    anchors: AnchorState,
}

impl Checkpoint {
    pub fn epochs_done(&self) -> u32 {
        self.store.epoch() - 1
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let meta = Meta {
            config: self.config.clone(),
            config_hash: self.config.hash(),
            dims: self.dims,
            architecture: self.architecture,
            epochs_done: self.epochs_done(),
            adam_step: self.adam.step,
            n_params: self.params.len(),
            store: self.store.to_json()?,
            anchors: self.anchors.clone(),
        };
        let meta = serde_json::to_vec(&meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&len_u32(meta.len())?.to_le_bytes());
        out.extend_from_slice(&meta);
        let tensors: Vec<&Tensor> = self
            .params
            .iter()
            .chain(&self.adam.m)
            .chain(&self.adam.v)
            .collect();
        out.extend_from_slice(&len_u32(tensors.len())?.to_le_bytes());
        for t in tensors {
            out.push(u8::try_from(t.rank()).map_err(|_| Error::contract("tensor rank too large"))?);
            for &d in t.dims() {
                out.extend_from_slice(&len_u32(d)?.to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let fail = |msg: String| Error::load(origin, msg);
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4).ok_or_else(|| fail("truncated header".into()))?;
        if magic != MAGIC {
            return Err(fail("not a checkpoint (bad magic)".into()));
        }
        let version = r.take(1).ok_or_else(|| fail("truncated header".into()))?[0];
        if version != VERSION {
            return Err(fail(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u32().ok_or_else(|| fail("truncated header".into()))? as usize;
        let meta = r
            .take(meta_len)
            .ok_or_else(|| fail("truncated metadata".into()))?;
        let meta: Meta =
            serde_json::from_slice(meta).map_err(|e| fail(format!("bad metadata: {e}")))?;
        if meta.config.hash() != meta.config_hash {
            return Err(fail("config hash mismatch".into()));
        }
        let count = r
            .u32()
            .ok_or_else(|| fail("truncated tensor table".into()))? as usize;
        if count != 3 * meta.n_params {
            return Err(fail(format!(
                "expected {} tensors, found {count}",
                3 * meta.n_params
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for i in 0..count {
            let truncated = || fail(format!("truncated tensor {i}"));
            let ndim = r.take(1).ok_or_else(truncated)?[0] as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u32().ok_or_else(truncated)? as usize);
            }
            let numel: usize = dims.iter().product();
            let raw = r
                .take(numel.checked_mul(8).ok_or_else(truncated)?)
                .ok_or_else(truncated)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push(Tensor::new(dims, data).map_err(|e| fail(e.to_string()))?);
        }
        if r.pos != bytes.len() {
            return Err(fail(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let store = PseudoLabelStore::from_json(&meta.store)?;
        if store.epoch() - 1 != meta.epochs_done {
            return Err(fail("epoch counter mismatch".into()));
        }
        let v = tensors.split_off(2 * meta.n_params);
        let m = tensors.split_off(meta.n_params);
        Ok(Self {
            config: meta.config,
            dims: meta.dims,
            architecture: meta.architecture,
            params: tensors,
            adam: AdamState {
                step: meta.adam_step,
                m,
                v,
            },
            store,
            anchors: meta.anchors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::contract(format!("length {n} exceeds u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}
