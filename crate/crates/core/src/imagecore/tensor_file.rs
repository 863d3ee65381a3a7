//! DQTF: a minimal little-endian binary tensor container.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "DQTF"
//! 4       4           version, u32 LE (= 1)
//! 8       1           dtype: 0 = f32 LE, 1 = f64 LE
//! 9       1           ndim
//! 10      8 * ndim    dims, u64 LE each
//! ...     prod(dims)  payload, row-major
//! ```

use std::path::Path;

use super::DistortionMap;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DQTF";
pub const VERSION: u32 = 1;

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

    fn dtype_id(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::F64(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl RawTensor {
    pub fn f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, TensorData::F32(data))
    }

    pub fn f64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(dims, TensorData::F64(data))
    }

    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!("{} dims exceed the format limit", dims.len())));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::DimMismatch(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    /// Values widened to f64 regardless of storage dtype.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let width = match self.data {
            TensorData::F32(_) => 4,
            TensorData::F64(_) => 8,
        };
        let mut out = Vec::with_capacity(10 + 8 * self.dims.len() + width * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.data.dtype_id());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let need = |expected: usize| {
            if bytes.len() < expected {
                Err(Error::Truncated {
                    expected,
                    found: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(4)?;
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        need(10)?;
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let dtype = bytes[8];
        let width = match dtype {
            0 => 4,
            1 => 8,
            other => return Err(Error::UnknownDtype(other)),
        };
        let ndim = bytes[9] as usize;
        let header = 10 + 8 * ndim;
        need(header)?;
        let dims: Vec<usize> = bytes[10..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| Error::DimMismatch(format!("dims {dims:?} overflow")))?;
        need(header + count)?;
        if bytes.len() > header + count {
            return Err(Error::TrailingBytes(bytes.len() - header - count));
        }
        let payload = &bytes[header..];
        let data = match dtype {
            0 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            _ => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(Self { dims, data })
    }
}

pub fn write_tensor(tensor: &RawTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<RawTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    RawTensor::decode(&bytes)
}

impl From<&DistortionMap> for RawTensor {
    fn from(map: &DistortionMap) -> Self {
        let (n, h, w) = map.dims();
        RawTensor {
            dims: vec![n, h, w],
            data: TensorData::F32(map.data().to_vec()),
        }
    }
}

impl TryFrom<RawTensor> for DistortionMap {
    type Error = Error;

    fn try_from(t: RawTensor) -> Result<Self> {
        let [n, h, w] = t.dims[..] else {
            return Err(Error::DimMismatch(format!("distortion map needs 3 dims, got {:?}", t.dims)));
        };
        match t.data {
            TensorData::F32(v) => DistortionMap::new(n, h, w, v),
            TensorData::F64(_) => Err(Error::InvalidArgument("distortion maps are stored as f32".into())),
        }
    }
}

pub fn write_map(map: &DistortionMap, path: impl AsRef<Path>) -> Result<()> {
    write_tensor(&RawTensor::from(map), path)
}

pub fn read_map(path: impl AsRef<Path>) -> Result<DistortionMap> {
    DistortionMap::try_from(read_tensor(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_layout() {
        let t = RawTensor::f32(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = t.encode();
        assert_eq!(&bytes[0..4], b"DQTF");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(bytes[8], 0);
        assert_eq!(bytes[9], 2);
        assert_eq!(&bytes[10..18], &2u64.to_le_bytes());
        assert_eq!(&bytes[18..26], &2u64.to_le_bytes());
        let payload = &bytes[26..];
        assert_eq!(payload.len(), 16);
        for (i, v) in [1.0f32, 2.0, 3.0, 4.0].iter().enumerate() {
            assert_eq!(&payload[4 * i..4 * i + 4], &v.to_le_bytes());
        }
    }

    #[test]
    fn map_file_round_trip() {
        let mut rng = crate::Rng::new(11);
        let data: Vec<f32> = (0..96).map(|_| rng.next_f64() as f32).collect();
        let map = DistortionMap::new(6, 4, 4, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.dqtf");
        write_map(&map, &p).unwrap();
        let back = read_map(&p).unwrap();
        let bits = |m: &DistortionMap| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&map), bits(&back));
    }

    #[test]
    fn distinct_errors() {
        let good = RawTensor::f32(vec![2], vec![1.0, 2.0]).unwrap().encode();

        let mut bad_magic = good.clone();
        bad_magic[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(RawTensor::decode(&bad_magic), Err(Error::BadMagic { .. })));

        let mut bad_version = good.clone();
        bad_version[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            RawTensor::decode(&bad_version),
            Err(Error::VersionMismatch { found: 2, .. })
        ));

        assert!(matches!(RawTensor::decode(&good[..good.len() - 1]), Err(Error::Truncated { .. })));
        assert!(matches!(RawTensor::decode(&good[..7]), Err(Error::Truncated { .. })));

        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(RawTensor::decode(&extra), Err(Error::TrailingBytes(1))));

        let mut bad_dtype = good;
        bad_dtype[8] = 9;
        assert!(matches!(RawTensor::decode(&bad_dtype), Err(Error::UnknownDtype(9))));
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(
            dims in prop::collection::vec(1usize..5, 0..4),
            seed in any::<u64>(),
            wide in any::<bool>(),
        ) {
            let n: usize = dims.iter().product();
            let mut rng = crate::Rng::new(seed);
            let t = if wide {
                RawTensor::f64(dims, (0..n).map(|_| f64::from_bits(rng.next_u64())).collect()).unwrap()
            } else {
                RawTensor::f32(dims, (0..n).map(|_| f32::from_bits(rng.next_u64() as u32)).collect()).unwrap()
            };
            let back = RawTensor::decode(&t.encode()).unwrap();
            // Compare bit patterns so NaN payloads count as equal.
            prop_assert_eq!(&back.dims, &t.dims);
            prop_assert_eq!(back.encode(), t.encode());
        }
    }
}
