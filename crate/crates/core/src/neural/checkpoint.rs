//! Model checkpoints: `"STBFCKPT"`, a u32 (LE) JSON header length, the JSON
//! header, a u32 tensor count, then one STBF block per tensor in the order
//! listed by the header.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::spec::NetworkSpec;
use super::Scalar;
use crate::error::{Error, Result};
use crate::stbf::{Tensor, TensorData};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STBFCKPT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: NetworkSpec,
    pub seed: u64,
    pub epoch: usize,
    #[serde(default)]
    pub metrics: serde_json::Value,
    /// Caller-defined data stored alongside the network.
    #[serde(default)]
    pub extra: serde_json::Value,
    #[serde(default)]
    pub lhuc_speakers: Vec<String>,
    /// Tensor names in file order.
    #[serde(default)]
    pub tensors: Vec<String>,
}

impl CheckpointHeader {
    pub fn new(spec: NetworkSpec, seed: u64) -> Self {
        CheckpointHeader {
            spec,
            seed,
            epoch: 0,
            metrics: serde_json::Value::Null,
            extra: serde_json::Value::Null,
            lhuc_speakers: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

fn tensor_of<F: Scalar>(data: &[F]) -> Tensor {
    let payload = match F::DTYPE {
        crate::stbf::DType::F32 => TensorData::F32(data.iter().map(|v| v.f64() as f32).collect()),
        crate::stbf::DType::F64 => TensorData::F64(data.iter().map(|v| v.f64()).collect()),
    };
    Tensor {
        shape: vec![data.len()],
        data: payload,
    }
}

/// Serialises `net` with `header`; the header's spec, speaker and tensor
/// lists are filled in from the network.
pub fn write_checkpoint<F: Scalar, W: Write>(w: &mut W, net: &Network<F>, header: &CheckpointHeader) -> Result<()> {
    let state = net.state();
    let mut header = header.clone();
    header.spec = net.spec().clone();
    header.lhuc_speakers = net.lhuc_speakers();
    header.tensors = state.iter().map(|(id, _)| id.to_string()).collect();
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for (_, data) in &state {
        buf.extend_from_slice(&tensor_of(data).encode());
    }
    w.write_all(&buf).map_err(|e| Error::Stbf(format!("checkpoint write failed: {e}")))
}

/// Parses a checkpoint, converting stored values to `F`.
pub fn read_checkpoint<F: Scalar, R: Read>(r: &mut R) -> Result<(Network<F>, CheckpointHeader)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Stbf(format!("checkpoint read failed: {e}")))?;
    let short = || Error::Stbf("truncated checkpoint".into());
    if bytes.get(..8) != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::Stbf("not a checkpoint".into()));
    }
    let len = u32::from_le_bytes(bytes.get(8..12).ok_or_else(short)?.try_into().expect("4 bytes")) as usize;
    let json = bytes.get(12..12 + len).ok_or_else(short)?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    let mut pos = 12 + len;
    let count = u32::from_le_bytes(bytes.get(pos..pos + 4).ok_or_else(short)?.try_into().expect("4 bytes")) as usize;
    pos += 4;

    let mut net = Network::<F>::new(header.spec.clone(), header.seed)?;
    net.register_speakers(&header.lhuc_speakers);
    let mut state = net.state_mut();
    if count != state.len() || header.tensors.len() != count {
        return Err(Error::Stbf(format!(
            "checkpoint holds {count} tensors, network needs {}",
            state.len()
        )));
    }
    for ((id, dst), name) in state.iter_mut().zip(&header.tensors) {
        if id.to_string() != *name {
            return Err(Error::Stbf(format!("tensor `{name}` where `{id}` was expected")));
        }
        let (t, used) = Tensor::decode(&bytes[pos..])?;
        pos += used;
        if t.data.len() != dst.len() {
            return Err(Error::Stbf(format!(
                "tensor `{name}` has {} values, expected {}",
                t.data.len(),
                dst.len()
            )));
        }
        for (d, v) in dst.iter_mut().zip(t.data.to_f64()) {
            *d = F::of(v);
        }
    }
    if pos != bytes.len() {
        return Err(Error::Stbf(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok((net, header))
}

pub fn save_checkpoint<F: Scalar>(path: &Path, net: &Network<F>, header: &CheckpointHeader) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(&mut f, net, header)
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<(Network<F>, CheckpointHeader)> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::network::{Batch, Mode};
    use crate::neural::spec::{HeadSpec, LayerSpec};
    use ndarray::Array2;

    fn net() -> Network<f32> {
        let spec = NetworkSpec {
            input_dim: 3,
            trunk: vec![
                LayerSpec::Affine { in_dim: 3, out_dim: 5 },
                LayerSpec::BatchNorm { dim: 5 },
                LayerSpec::Lhuc { dim: 5, key: "k".into() },
            ],
            heads: vec![HeadSpec::softmax("h", 5, 2)],
        };
        let mut n = Network::new(spec, 11).unwrap();
        n.register_speakers(&["a", "b"]);
        n.lhuc_vector_mut("k", "b").unwrap().fill(0.7);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * j) as f32);
        let out = n.forward(&Batch::new(x.view()), Mode::Train, None).unwrap();
        n.update_running_stats(&out);
        n
    }

    #[test]
    fn round_trip_preserves_state() {
        let n = net();
        let mut header = CheckpointHeader::new(n.spec().clone(), 11);
        header.epoch = 7;
        header.metrics = serde_json::json!({"val_loss": 0.5});
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &n, &header).unwrap();
        let (back, h) = read_checkpoint::<f32, _>(&mut buf.as_slice()).unwrap();
        assert_eq!(back, n);
        assert_eq!(h.epoch, 7);
        assert_eq!(h.lhuc_speakers, vec!["a", "b"]);
    }

    #[test]
    fn corrupted_checkpoint_fails() {
        let n = net();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &n, &CheckpointHeader::new(n.spec().clone(), 11)).unwrap();
        let last = buf.len() - 10;
        buf[last] ^= 0x10;
        assert!(read_checkpoint::<f32, _>(&mut buf.as_slice()).is_err());
        assert!(read_checkpoint::<f32, _>(&mut &buf[..20]).is_err());
    }
}
