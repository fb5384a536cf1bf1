//! `NNC1` parameter files: the magic bytes, one JSON header line, then the
//! raw little-endian f32 payload of every tensor in header order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use super::tensor::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NNC1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    dtype: String,
    endian: String,
}

pub fn encode(named: &[(String, &Tensor)]) -> Vec<u8> {
    let header = Header {
        names: named.iter().map(|(n, _)| n.clone()).collect(),
        shapes: named.iter().map(|(_, t)| t.shape().to_vec()).collect(),
        dtype: "f32".into(),
        endian: "little".into(),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(serde_json::to_string(&header).unwrap().as_bytes());
    out.push(b'\n');
    for (_, t) in named {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format("magic", "expected NNC1"));
    }
    let rest = &bytes[4..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("header", "missing newline"))?;
    let header: Header = serde_json::from_slice(&rest[..nl]).map_err(|e| Error::format("header", e.to_string()))?;
    if header.dtype != "f32" || header.endian != "little" {
        return Err(Error::format("header", "only little-endian f32 is supported"));
    }
    if header.names.len() != header.shapes.len() {
        return Err(Error::format("shapes", "names and shapes differ in length"));
    }
    let mut payload = &rest[nl + 1..];
    let mut out = Vec::with_capacity(header.names.len());
    for (name, shape) in header.names.into_iter().zip(header.shapes) {
        let n: usize = shape.iter().product();
        if payload.len() < 4 * n {
            return Err(Error::format(name, "payload truncated"));
        }
        let data = payload[..4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        payload = &payload[4 * n..];
        out.push((name, Tensor::new(shape, data)?));
    }
    if !payload.is_empty() {
        return Err(Error::format("payload", format!("{} trailing bytes", payload.len())));
    }
    Ok(out)
}

pub fn save(path: &Path, named: &[(String, &Tensor)]) -> Result<()> {
    let bytes = encode(named);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Tensor names used for an MLP's parameters: `layer{i}.weight`, `layer{i}.bias`.
pub fn mlp_names(net: &Mlp) -> Vec<String> {
    (0..net.params.len())
        .map(|i| {
            let kind = if i % 2 == 0 { "weight" } else { "bias" };
            format!("layer{}.{kind}", i / 2)
        })
        .collect()
}

pub fn save_mlp(path: &Path, net: &Mlp) -> Result<()> {
    let named: Vec<_> = mlp_names(net).into_iter().zip(net.params.iter()).collect();
    save(path, &named)
}

/// Rebuilds an MLP; layer sizes are recovered from the weight shapes.
pub fn load_mlp(path: &Path, activation: Activation) -> Result<Mlp> {
    let named = load(path)?;
    let params: Vec<Tensor> = named.into_iter().map(|(_, t)| t).collect();
    let mut sizes = Vec::new();
    for (i, w) in params.iter().step_by(2).enumerate() {
        if w.shape().len() != 2 {
            return Err(Error::format(format!("layer{i}.weight"), "expected a matrix"));
        }
        if i == 0 {
            sizes.push(w.shape()[1]);
        }
        sizes.push(w.shape()[0]);
    }
    Mlp::from_params(&sizes, activation, params)
}
