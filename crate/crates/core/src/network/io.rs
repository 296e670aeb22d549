//! Single-file binary model format, all integers and floats little-endian:
//!
//! ```text
//! "CCNN"                magic
//! u32                   format version (1)
//! u64                   length of the JSON header in bytes
//! [u8]                  JSON header: {"spec": NetworkSpec, "input_mean": [r, g, b]}
//! u32                   number of classes K
//! f64 ...               for each conv/fc layer in spec order: weights, then biases
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Params, TrainedNetwork};
use super::spec::NetworkSpec;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CCNN";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    input_mean: [f64; 3],
}

pub fn to_bytes(net: &TrainedNetwork) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        spec: net.spec().clone(),
        input_mean: net.input_mean(),
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(32 + header.len() + 8 * net.spec().param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(net.class_count() as u32).to_le_bytes());
    for p in net.params().iter().flatten() {
        for v in p.weight.data().iter().chain(p.bias.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::ModelFormat(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::ModelFormat("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<TrainedNetwork> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let len = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::ModelFormat(format!("header: {e}")))?;
    let k = r.u32()? as usize;
    if k != header.spec.num_classes {
        return Err(Error::ModelFormat(format!(
            "class count {k} disagrees with spec ({})",
            header.spec.num_classes
        )));
    }
    let template = TrainedNetwork::zeros(header.spec.clone())?;
    let mut params = Vec::with_capacity(template.params().len());
    for slot in template.params() {
        params.push(match slot {
            Some(p) => {
                let w = r.f64s(p.weight.len())?;
                let b = r.f64s(p.bias.len())?;
                Some(Params {
                    weight: Tensor::from_vec(p.weight.shape(), w)?,
                    bias: Tensor::from_vec(p.bias.shape(), b)?,
                })
            }
            None => None,
        });
    }
    if r.pos != buf.len() {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes",
            buf.len() - r.pos
        )));
    }
    TrainedNetwork::from_params(header.spec, params, header.input_mean)
}

pub fn save(net: &TrainedNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainedNetwork> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}
