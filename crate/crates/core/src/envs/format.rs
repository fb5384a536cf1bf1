//! `DSET` files: magic, a version byte, one JSON header line, then raw
//! little-endian column payloads in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetMetadata, OfflineDataset, ACT_DIM, OBS_DIM};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DSET";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Column {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Counts {
    transitions: usize,
    episodes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    columns: Vec<Column>,
    counts: Counts,
    metadata: DatasetMetadata,
}

const LAYOUT: [(&str, usize, &str); 6] = [
    ("observations", OBS_DIM, "f32"),
    ("actions", ACT_DIM, "f32"),
    ("rewards", 1, "f32"),
    ("terminals", 1, "u8"),
    ("next_observations", OBS_DIM, "f32"),
    ("episode_ends", 1, "u8"),
];

fn shape(n: usize, width: usize) -> Vec<usize> {
    if width == 1 {
        vec![n]
    } else {
        vec![n, width]
    }
}

pub fn encode(ds: &OfflineDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let n = ds.len();
    let header = Header {
        columns: LAYOUT
            .iter()
            .map(|&(name, width, dtype)| Column {
                name: name.into(),
                shape: shape(n, width),
                dtype: dtype.into(),
            })
            .collect(),
        counts: Counts {
            transitions: n,
            episodes: ds.episodes().len(),
        },
        metadata: ds.metadata.clone(),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(serde_json::to_string(&header).unwrap().as_bytes());
    out.push(b'\n');
    let floats = |out: &mut Vec<u8>, v: &[f32]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    floats(&mut out, &ds.observations);
    floats(&mut out, &ds.actions);
    floats(&mut out, &ds.rewards);
    out.extend_from_slice(&ds.terminals);
    floats(&mut out, &ds.next_observations);
    out.extend_from_slice(&ds.episode_ends);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<OfflineDataset> {
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(Error::format("magic", "expected DSET"));
    }
    if bytes[4] != VERSION {
        return Err(Error::format("version", format!("unsupported version {}", bytes[4])));
    }
    let rest = &bytes[5..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("header", "missing newline"))?;
    let header: Header = serde_json::from_slice(&rest[..nl]).map_err(|e| Error::format("header", e.to_string()))?;
    let n = header.counts.transitions;
    if header.columns.len() != LAYOUT.len() {
        return Err(Error::format("columns", format!("expected {} columns", LAYOUT.len())));
    }
    for (col, &(name, width, dtype)) in header.columns.iter().zip(&LAYOUT) {
        if col.name != name || col.dtype != dtype {
            return Err(Error::format(name, format!("expected column `{name}` of {dtype}")));
        }
        if col.shape != shape(n, width) {
            return Err(Error::format(
                name,
                format!("shape {:?} does not match {n} transitions", col.shape),
            ));
        }
    }

    let mut payload = &rest[nl + 1..];
    let mut take = |name: &str, len: usize| -> Result<&[u8]> {
        if payload.len() < len {
            return Err(Error::format(name, "payload truncated"));
        }
        let (head, tail) = payload.split_at(len);
        payload = tail;
        Ok(head)
    };
    let to_f32 = |b: &[u8]| -> Vec<f32> {
        b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    };
    let observations = to_f32(take("observations", 4 * n * OBS_DIM)?);
    let actions = to_f32(take("actions", 4 * n * ACT_DIM)?);
    let rewards = to_f32(take("rewards", 4 * n)?);
    let terminals = take("terminals", n)?.to_vec();
    let next_observations = to_f32(take("next_observations", 4 * n * OBS_DIM)?);
    let episode_ends = take("episode_ends", n)?.to_vec();
    if !payload.is_empty() {
        return Err(Error::format("payload", format!("{} trailing bytes", payload.len())));
    }

    let ds = OfflineDataset {
        observations,
        actions,
        rewards,
        terminals,
        next_observations,
        episode_ends,
        metadata: header.metadata,
    };
    ds.validate()?;
    if ds.episodes().len() != header.counts.episodes {
        return Err(Error::format("counts", "episode count does not match episode_ends"));
    }
    Ok(ds)
}

pub fn write_dataset(ds: &OfflineDataset, path: &Path) -> Result<()> {
    let bytes = encode(ds)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<OfflineDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::corruption::Variant;
    use crate::envs::dataset::{generate_dataset, GENERATOR_VERSION};
    use crate::envs::maze::Maze;

    fn sample() -> OfflineDataset {
        let m = Maze::named("toy-open").unwrap();
        generate_dataset(&m, Variant::Noisy, 4, 2).unwrap().0
    }

    #[test]
    fn round_trip_through_file() {
        let ds = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.dset");
        write_dataset(&ds, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"DSET");
        assert_eq!(bytes[4], 1);
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = OfflineDataset::empty(DatasetMetadata {
            env: "none".into(),
            variant: Variant::Clean,
            seed: 0,
            generator_version: GENERATOR_VERSION,
        });
        assert_eq!(decode(&encode(&ds).unwrap()).unwrap(), ds);
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = encode(&sample()).unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        for cut in [0, 3, 5, nl, nl + 1, nl + 17, bytes.len() - 1] {
            assert!(
                matches!(decode(&bytes[..cut]), Err(Error::Format { .. })),
                "cut at {cut}"
            );
        }
        match decode(&bytes[..bytes.len() - 1]) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "episode_ends"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn column_length_mismatch_names_field() {
        let ds = sample();
        let bytes = encode(&ds).unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let mut header: serde_json::Value = serde_json::from_slice(&bytes[5..nl]).unwrap();
        header["columns"][1]["shape"] = serde_json::json!([ds.len() + 1, 2]);
        let mut forged = bytes[..5].to_vec();
        forged.extend_from_slice(header.to_string().as_bytes());
        forged.extend_from_slice(&bytes[nl..]);
        match decode(&forged) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "actions"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode(&bytes), Err(Error::Format { ref field, .. }) if field == "version"));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format { ref field, .. }) if field == "magic"));
    }
}
