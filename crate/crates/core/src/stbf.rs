//! STBF: a minimal self-describing binary tensor format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "STBF" | version u16 | dtype u8 | n_dims u8 | shape u64 × n_dims | payload | crc32 u32
//! ```
//!
//! The payload is the row-major element data; the CRC32 covers everything
//! from the magic through the payload.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"STBF";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            c => Err(Error::Stbf(format!("unknown dtype code {c}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Element data of a tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    /// Elements widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} elements, data has {}",
                data.len()
            )));
        }
        if shape.len() > usize::from(u8::MAX) {
            return Err(Error::Shape(format!("{} dimensions exceed the format limit", shape.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_array2(a: &Array2<f64>) -> Self {
        Tensor {
            shape: a.shape().to_vec(),
            data: TensorData::F64(a.iter().copied().collect()),
        }
    }

    /// The tensor as an f64 array of its own shape.
    pub fn to_array(&self) -> ArrayD<f64> {
        ArrayD::from_shape_vec(IxDyn(&self.shape), self.data.to_f64()).expect("shape checked on construction")
    }

    /// Serialises to bytes.
    pub fn encode(&self) -> Vec<u8> {
        let dtype = self.data.dtype();
        let mut out = Vec::with_capacity(8 + 8 * self.shape.len() + dtype.size() * self.data.len() + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(dtype.code());
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses one tensor from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        let short = || Error::Stbf("truncated tensor".into());
        if bytes.len() < 8 {
            return Err(short());
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Stbf("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Stbf(format!("unsupported version {version}")));
        }
        let dtype = DType::from_code(bytes[6])?;
        let n_dims = usize::from(bytes[7]);
        let mut pos = 8;
        let mut shape = Vec::with_capacity(n_dims);
        let mut count: usize = 1;
        for _ in 0..n_dims {
            let raw = bytes.get(pos..pos + 8).ok_or_else(short)?;
            let d = u64::from_le_bytes(raw.try_into().expect("8 bytes"));
            let d = usize::try_from(d).map_err(|_| Error::Stbf("dimension overflows usize".into()))?;
            count = count
                .checked_mul(d)
                .ok_or_else(|| Error::Stbf("element count overflows".into()))?;
            shape.push(d);
            pos += 8;
        }
        let payload_len = count
            .checked_mul(dtype.size())
            .ok_or_else(|| Error::Stbf("payload size overflows".into()))?;
        let end = pos.checked_add(payload_len).ok_or_else(short)?;
        if bytes.len() < end + 4 {
            return Err(short());
        }
        let stored = u32::from_le_bytes(bytes[end..end + 4].try_into().expect("4 bytes"));
        if crc32fast::hash(&bytes[..end]) != stored {
            return Err(Error::Stbf("checksum mismatch".into()));
        }
        let payload = &bytes[pos..end];
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        Ok((Tensor { shape, data }, end + 4))
    }
}

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    w.write_all(&t.encode())
        .map_err(|e| Error::Stbf(format!("write failed: {e}")))
}

/// Writes a single tensor file.
pub fn save(path: &Path, t: &Tensor) -> Result<()> {
    std::fs::write(path, t.encode()).map_err(|e| Error::io(path, e))
}

/// Reads a single tensor file; trailing bytes are an error.
pub fn load(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let (t, used) = Tensor::decode(&bytes)?;
    if used != bytes.len() {
        return Err(Error::Stbf(format!("{} trailing bytes", bytes.len() - used)));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(rng: &mut ChaCha8Rng) -> Tensor {
        let dims = rng.random_range(0..4);
        let shape: Vec<usize> = (0..dims).map(|_| rng.random_range(1..6)).collect();
        let n = shape.iter().product();
        let data = if rng.random() {
            TensorData::F32((0..n).map(|_| rng.random::<f32>() * 100.0 - 50.0).collect())
        } else {
            TensorData::F64((0..n).map(|_| rng.random::<f64>() * 1e6 - 5e5).collect())
        };
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = sample(&mut rng);
            let bytes = t.encode();
            let (back, used) = Tensor::decode(&bytes).unwrap();
            assert_eq!(used, bytes.len());
            assert_eq!(back, t);
        }
    }

    #[test]
    fn special_values_survive() {
        let t = Tensor::new(vec![4], TensorData::F64(vec![f64::NAN, f64::INFINITY, -0.0, f64::MIN_POSITIVE])).unwrap();
        let (back, _) = Tensor::decode(&t.encode()).unwrap();
        let (TensorData::F64(a), TensorData::F64(b)) = (&t.data, &back.data) else { panic!() };
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let t = sample(&mut rng);
            let mut bytes = t.encode();
            let i = rng.random_range(0..bytes.len());
            let bit = 1u8 << rng.random_range(0..8);
            bytes[i] ^= bit;
            assert!(Tensor::decode(&bytes).is_err(), "flip at byte {i} went unnoticed");
        }
    }

    #[test]
    fn truncation_is_detected() {
        let t = Tensor::from_array2(&Array2::from_elem((3, 3), 1.5));
        let bytes = t.encode();
        for cut in 0..bytes.len() {
            assert!(Tensor::decode(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::new(vec![2, 2], TensorData::F32(vec![0.0; 3])).is_err());
    }
}
