//! The `FPT1` binary tensor file format and its JSON sidecar.
//!
//! Layout, all little-endian, no padding:
//!
//! ```text
//! offset  size       field
//! 0       4          magic "FPT1"
//! 4       1          dtype: 0x00 binary32, 0x01 E4M3 bytes, 0x02 E5M2 bytes
//! 5       1          rank, 1..=8
//! 6       2          reserved, zero
//! 8       8 * rank   dims, u64 each
//! ...     n * size   payload
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::format::{encode_exact, Fp8Format};
use crate::scaling::{Granularity, ScaleSet};
use crate::tensor::{Fp8Tensor, Tensor};
use crate::Error;

pub const MAGIC: [u8; 4] = *b"FPT1";
pub const MAX_RANK: usize = 8;
pub const MAX_ELEMENTS: u64 = 1 << 40;
const FIXED_HEADER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32 = 0x00,
    E4M3 = 0x01,
    E5M2 = 0x02,
}

impl Dtype {
    pub fn from_byte(b: u8) -> Result<Self, Error> {
        match b {
            0x00 => Ok(Dtype::F32),
            0x01 => Ok(Dtype::E4M3),
            0x02 => Ok(Dtype::E5M2),
            other => Err(Error::BadDtype(other)),
        }
    }

    pub fn element_size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::E4M3 | Dtype::E5M2 => 1,
        }
    }

    pub fn fp8_format(self) -> Option<Fp8Format> {
        match self {
            Dtype::F32 => None,
            Dtype::E4M3 => Some(Fp8Format::E4M3),
            Dtype::E5M2 => Some(Fp8Format::E5M2),
        }
    }

    pub fn for_format(f: Fp8Format) -> Self {
        match f.kind {
            crate::format::FormatKind::E4M3 => Dtype::E4M3,
            crate::format::FormatKind::E5M2 => Dtype::E5M2,
        }
    }
}

/// Contents of an `FPT1` file.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorFile {
    F32(Tensor),
    Fp8(Fp8Tensor),
}

impl TensorFile {
    pub fn dtype(&self) -> Dtype {
        match self {
            TensorFile::F32(_) => Dtype::F32,
            TensorFile::Fp8(t) => Dtype::for_format(t.format()),
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            TensorFile::F32(t) => t.shape(),
            TensorFile::Fp8(t) => t.shape(),
        }
    }

    /// The binary32 tensor, widening FP8 payloads exactly (no unscaling).
    pub fn into_f32(self) -> Tensor {
        match self {
            TensorFile::F32(t) => t,
            TensorFile::Fp8(t) => t.decode(),
        }
    }
}

/// Serializes a header. Fails on rank 0 or rank above [`MAX_RANK`].
pub fn encode_header(shape: &[usize], dtype: Dtype) -> Result<Vec<u8>, Error> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::RankOutOfRange(shape.len()));
    }
    let mut out = Vec::with_capacity(FIXED_HEADER + 8 * shape.len());
    out.extend_from_slice(&MAGIC);
    out.push(dtype as u8);
    out.push(shape.len() as u8);
    out.extend_from_slice(&[0, 0]);
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    Ok(out)
}

pub fn encode(file: &TensorFile) -> Result<Vec<u8>, Error> {
    let mut out = encode_header(file.shape(), file.dtype())?;
    match file {
        TensorFile::F32(t) => {
            out.reserve(t.len() * 4);
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        TensorFile::Fp8(t) => out.extend_from_slice(t.bytes()),
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: usize, n: usize, what: &'static str) -> Result<&'a [u8], Error> {
    bytes.get(at..at + n).ok_or(Error::TruncatedHeader(what))
}

pub fn decode(bytes: &[u8]) -> Result<TensorFile, Error> {
    let magic = take(bytes, 0, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic.try_into().unwrap()));
    }
    let dtype = Dtype::from_byte(take(bytes, 4, 1, "dtype")?[0])?;
    let rank = take(bytes, 5, 1, "rank")?[0] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::RankOutOfRange(rank));
    }
    let reserved = take(bytes, 6, 2, "reserved")?;
    if reserved != [0, 0] {
        return Err(Error::BadReserved([reserved[0], reserved[1]]));
    }
    let dim_bytes = take(bytes, FIXED_HEADER, 8 * rank, "dims")?;
    let dims: Vec<u64> = dim_bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let count = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .filter(|&c| c <= MAX_ELEMENTS)
        .ok_or(Error::TooManyElements(dims.clone()))?;
    let shape: Vec<usize> = dims.iter().map(|&d| d as usize).collect();

    let payload = &bytes[FIXED_HEADER + 8 * rank..];
    let expected = count as usize * dtype.element_size();
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            got: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::TrailingBytes(payload.len() - expected));
    }
    Ok(match dtype.fp8_format() {
        None => {
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            TensorFile::F32(Tensor::new(shape, data)?)
        }
        Some(f) => TensorFile::Fp8(Fp8Tensor::new(shape, f, payload.to_vec())?),
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorFile, Error> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes)
}

pub fn write_file(path: impl AsRef<Path>, file: &TensorFile) -> Result<(), Error> {
    let path = path.as_ref();
    fs::write(path, encode(file)?).map_err(io_err(path))
}

/// Writes a binary32 tensor as `dtype`. FP8 dtypes require every element to
/// be exactly representable in that format.
pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor, dtype: Dtype) -> Result<(), Error> {
    let file = match dtype.fp8_format() {
        None => TensorFile::F32(tensor.clone()),
        Some(f) => {
            let bytes = tensor
                .data()
                .iter()
                .map(|&x| encode_exact(x, f).map(|v| v.bits))
                .collect::<Result<Vec<u8>, Error>>()?;
            TensorFile::Fp8(Fp8Tensor::new(tensor.shape().to_vec(), f, bytes)?)
        }
    };
    write_file(path, &file)
}

/// `<path>.meta.json` describing how to unscale an FP8 file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: Fp8Format,
    /// The per-tensor scale; `None` for per-channel files.
    pub scale: Option<f32>,
    /// `"tensor"` or `"channel"`.
    pub granularity: String,
    pub axis: Option<usize>,
    pub per_channel_scales: Option<Vec<f32>>,
}

impl Sidecar {
    pub fn new(format: Fp8Format, scales: &ScaleSet) -> Self {
        let values: Vec<f32> = scales.scales.iter().map(|s| s.value).collect();
        match scales.granularity {
            Granularity::PerTensor => Sidecar {
                format,
                scale: values.first().copied(),
                granularity: "tensor".into(),
                axis: None,
                per_channel_scales: None,
            },
            Granularity::PerChannel { axis } => Sidecar {
                format,
                scale: None,
                granularity: "channel".into(),
                axis: Some(axis),
                per_channel_scales: Some(values),
            },
        }
    }
}

pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    let mut s = path.as_ref().as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_sidecar(path: impl AsRef<Path>, meta: &Sidecar) -> Result<(), Error> {
    let p = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).expect("sidecar serializes");
    fs::write(&p, json + "\n").map_err(io_err(&p))
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<Sidecar, Error> {
    let p = sidecar_path(path);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    serde_json::from_str(&text).map_err(|e| Error::BadSidecar(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_size_for_rank_one() {
        let t = Tensor::from_vec(vec![1.0, 2.0, 3.0]).unwrap();
        let bytes = encode(&TensorFile::F32(t)).unwrap();
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[..8], b"FPT1\x00\x01\x00\x00");
        assert_eq!(&bytes[8..16], &3u64.to_le_bytes());
        assert_eq!(&bytes[16..20], &1f32.to_le_bytes());
    }

    #[test]
    fn rank_checks() {
        assert!(matches!(encode_header(&[], Dtype::F32), Err(Error::RankOutOfRange(0))));
        assert!(matches!(encode_header(&[1; 9], Dtype::F32), Err(Error::RankOutOfRange(9))));
        let mut bytes = encode_header(&[1], Dtype::F32).unwrap();
        bytes[5] = 0;
        assert!(matches!(decode(&bytes), Err(Error::RankOutOfRange(0))));
    }

    #[test]
    fn malformed_headers() {
        let good = encode(&TensorFile::F32(Tensor::from_vec(vec![1.0]).unwrap())).unwrap();
        let mut b = good.clone();
        b[3] = b'2';
        assert!(matches!(decode(&b), Err(Error::BadMagic(m)) if &m == b"FPT2"));
        let mut b = good.clone();
        b[4] = 7;
        assert!(matches!(decode(&b), Err(Error::BadDtype(7))));
        let mut b = good.clone();
        b[6] = 1;
        assert!(matches!(decode(&b), Err(Error::BadReserved(_))));
        assert!(matches!(decode(&good[..good.len() - 1]), Err(Error::TruncatedPayload { expected: 4, got: 3 })));
        assert!(matches!(decode(&good[..10]), Err(Error::TruncatedHeader("dims"))));
        assert!(matches!(decode(&good[..2]), Err(Error::TruncatedHeader("magic"))));
        let mut b = good.clone();
        b.push(0);
        assert!(matches!(decode(&b), Err(Error::TrailingBytes(1))));
        let mut b = encode_header(&[1 << 21, 1 << 20], Dtype::E4M3).unwrap();
        b.push(0);
        assert!(matches!(decode(&b), Err(Error::TooManyElements(_))));
    }

    #[test]
    fn fp8_payload_decodes() {
        let mut b = encode_header(&[1], Dtype::E4M3).unwrap();
        b.push(0x7E);
        let t = decode(&b).unwrap();
        assert_eq!(t.dtype(), Dtype::E4M3);
        assert_eq!(t.into_f32().data(), &[448.0]);
    }

    #[test]
    fn sidecar_shapes() {
        let set = ScaleSet::per_channel(1, vec![crate::scaling::ScaleFactor::ONE; 2]);
        let meta = Sidecar::new(Fp8Format::E5M2, &set);
        let json = serde_json::to_value(&meta).unwrap();
        assert_eq!(json["format"], "e5m2");
        assert_eq!(json["granularity"], "channel");
        assert_eq!(json["axis"], 1);
        assert_eq!(json["per_channel_scales"][1], 1.0);
        assert!(json["scale"].is_null());
        assert_eq!(sidecar_path("a/b.fpt"), PathBuf::from("a/b.fpt.meta.json"));
    }
}
