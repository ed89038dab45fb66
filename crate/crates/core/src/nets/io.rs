//! Weights file: a magic tag, a little-endian `u32` header length, a JSON
//! header describing every network and tensor, then the tensor data as
//! little-endian `f64` in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Architecture, NetError, NetworkParams, Role};

const MAGIC: &[u8; 8] = b"NAVSIMW\0";
pub const WEIGHTS_FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    role: Role,
    arch: Architecture,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    format: u32,
    dtype: String,
    networks: Vec<NetworkHeader>,
}

pub fn weights_to_bytes(nets: &[&NetworkParams]) -> Result<Vec<u8>, NetError> {
    let mut headers = Vec::new();
    for n in nets {
        n.validate()?;
        headers.push(NetworkHeader {
            role: n.role,
            arch: n.arch.clone(),
            tensors: n
                .names()
                .into_iter()
                .zip(&n.tensors)
                .map(|(name, t)| TensorHeader {
                    name,
                    shape: [t.nrows(), t.ncols()],
                })
                .collect(),
        });
    }
    let header = serde_json::to_vec(&FileHeader {
        format: WEIGHTS_FORMAT,
        dtype: "f64le".into(),
        networks: headers,
    })?;
    let mut out = Vec::with_capacity(header.len() + 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for n in nets {
        for t in &n.tensors {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn weights_from_bytes(bytes: &[u8]) -> Result<Vec<NetworkParams>, NetError> {
    let bad = |m: &str| NetError::Format(m.to_string());
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("not a weights file"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: FileHeader = serde_json::from_slice(body)?;
    if header.format != WEIGHTS_FORMAT {
        return Err(NetError::Format(format!("unsupported weights format {}", header.format)));
    }
    if header.dtype != "f64le" {
        return Err(NetError::Format(format!("unsupported dtype {}", header.dtype)));
    }
    let mut data = &bytes[12 + hlen..];
    let mut nets = Vec::new();
    for nh in header.networks {
        let expected = nh.arch.tensor_shapes();
        let mut tensors = Vec::new();
        for (i, th) in nh.tensors.iter().enumerate() {
            if let Some((name, shape)) = expected.get(i) {
                if *name != th.name || *shape != (th.shape[0], th.shape[1]) {
                    return Err(NetError::ArchMismatch {
                        tensor: th.name.clone(),
                        expected: format!("{name} {shape:?}"),
                        found: format!("{:?}", th.shape),
                    });
                }
            }
            let n = th.shape[0] * th.shape[1];
            if data.len() < 8 * n {
                return Err(bad("truncated tensor data"));
            }
            let values: Vec<f64> = data[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            data = &data[8 * n..];
            tensors.push(Array2::from_shape_vec((th.shape[0], th.shape[1]), values).expect("shape"));
        }
        let p = NetworkParams {
            role: nh.role,
            arch: nh.arch,
            tensors,
        };
        p.validate()?;
        nets.push(p);
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok(nets)
}

/// Writes atomically: a temporary sibling is renamed over the target.
pub fn save_weights(path: &Path, nets: &[&NetworkParams]) -> Result<(), NetError> {
    let bytes = weights_to_bytes(nets)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<Vec<NetworkParams>, NetError> {
    weights_from_bytes(&fs::read(path)?)
}

/// Loads the network with `role` and checks it against `expected`.
pub fn load_network(path: &Path, role: Role, expected: &Architecture) -> Result<NetworkParams, NetError> {
    let net = load_weights(path)?
        .into_iter()
        .find(|n| n.role == role)
        .ok_or_else(|| NetError::Format(format!("no {role:?} network in {}", path.display())))?;
    net.check_arch(expected)?;
    Ok(net)
}
