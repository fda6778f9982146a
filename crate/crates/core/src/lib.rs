//! Software emulation of the E4M3 and E5M2 8-bit floating point formats.
//!
//! - [`format`]: the two encodings, classification, exact decoding, ordering.
//! - [`convert`]: binary32 to FP8 with nearest-even, stochastic or
//!   toward-zero rounding, saturating or not.
//! - [`scaling`]: scale factors and exponent-bias emulation.
//! - [`calibrate`]: max, percentile and MSE scale selection.
//! - [`quantsim`]: tensor fake quantization and error reports.
//! - [`tensorio`]: the `FPT1` tensor file format.
//! - [`cli`]: the `fp8` command line tool.

use std::path::PathBuf;

pub mod calibrate;
pub mod cli;
pub mod convert;
pub mod format;
pub mod quantsim;
pub mod scaling;
pub mod tensor;
pub mod tensorio;

pub use calibrate::{calibrate, calibrate_best_of, CalibrationMethod, CalibrationResult};
pub use convert::{convert_to_binary32, convert_to_fp8, OverflowMode, Rounding, RoundingMode};
pub use format::{classify, decode, encode_exact, enumerate, ClassKind, Fp8Format, Fp8Value, FpClass, Sign};
pub use quantsim::{bias_sweep, fake_quantize, QuantConfig, QuantReport, ScaleSource};
pub use scaling::{Granularity, ScaleConstraint, ScaleFactor, ScaleSet};
pub use tensor::{Fp8Tensor, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{value} is not representable in {format}")]
    NotRepresentable { value: f32, format: Fp8Format },
    #[error("unknown format {0:?}, expected e4m3 or e5m2")]
    UnknownFormat(String),
    #[error("invalid scale factor {0}")]
    InvalidScale(f32),
    #[error("exponent bias {0} outside the supported window -8..=31")]
    BiasOutOfRange(i32),
    #[error("percentile {0} outside (0, 100]")]
    InvalidPercentile(f64),
    #[error("channel slice {channel} has no finite elements")]
    EmptySlice { channel: usize },
    #[error("no calibration methods given")]
    NoMethods,
    #[error("expected {expected} scale factors, got {got}")]
    ScaleCount { expected: usize, got: usize },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("bad magic {0:?}, expected \"FPT1\"")]
    BadMagic([u8; 4]),
    #[error("bad dtype byte 0x{0:02x}")]
    BadDtype(u8),
    #[error("rank {0} outside 1..=8")]
    RankOutOfRange(usize),
    #[error("reserved header bytes {0:?} are not zero")]
    BadReserved([u8; 2]),
    #[error("header truncated in field {0}")]
    TruncatedHeader(&'static str),
    #[error("dims {0:?} exceed 2^40 elements")]
    TooManyElements(Vec<u64>),
    #[error("payload truncated: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("bad sidecar: {0}")]
    BadSidecar(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}
