//! The two FP8 encodings, their derived limits, and classification/decoding
//! of every 8-bit pattern.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Which of the two encodings a format describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatKind {
    E4M3,
    E5M2,
}

/// How the all-ones exponent field is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpecialPolicy {
    /// No infinities; only `S.1111.111` is NaN, every other pattern in the
    /// top binade is a normal number.
    ReclaimedNaNOnly,
    /// IEEE 754 conventions: `S.11..1.00` is infinity, other mantissas are NaN.
    FullIeee,
}

/// Descriptor of an 8-bit floating point format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fp8Format {
    pub kind: FormatKind,
    pub exponent_bits: u32,
    pub mantissa_bits: u32,
    pub exponent_bias: i32,
    pub special_policy: SpecialPolicy,
}

impl Fp8Format {
    pub const E4M3: Fp8Format = Fp8Format {
        kind: FormatKind::E4M3,
        exponent_bits: 4,
        mantissa_bits: 3,
        exponent_bias: 7,
        special_policy: SpecialPolicy::ReclaimedNaNOnly,
    };

    pub const E5M2: Fp8Format = Fp8Format {
        kind: FormatKind::E5M2,
        exponent_bits: 5,
        mantissa_bits: 2,
        exponent_bias: 15,
        special_policy: SpecialPolicy::FullIeee,
    };

    pub const fn from_kind(kind: FormatKind) -> Fp8Format {
        match kind {
            FormatKind::E4M3 => Self::E4M3,
            FormatKind::E5M2 => Self::E5M2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FormatKind::E4M3 => "e4m3",
            FormatKind::E5M2 => "e5m2",
        }
    }

    pub(crate) const fn mantissa_mask(&self) -> u8 {
        (1u8 << self.mantissa_bits) - 1
    }

    pub(crate) const fn exponent_field_max(&self) -> u8 {
        (1u8 << self.exponent_bits) - 1
    }

    /// Unbiased exponent of the smallest normal binade.
    pub const fn min_exponent(&self) -> i32 {
        1 - self.exponent_bias
    }

    /// Unbiased exponent of the binade holding `max_normal`.
    pub const fn max_exponent(&self) -> i32 {
        match self.special_policy {
            SpecialPolicy::ReclaimedNaNOnly => self.exponent_field_max() as i32 - self.exponent_bias,
            SpecialPolicy::FullIeee => self.exponent_field_max() as i32 - 1 - self.exponent_bias,
        }
    }

    /// Bit pattern (sign clear) of the largest finite value.
    pub const fn max_normal_bits(&self) -> u8 {
        match self.special_policy {
            SpecialPolicy::ReclaimedNaNOnly => 0x7E,
            SpecialPolicy::FullIeee => ((self.exponent_field_max() - 1) << self.mantissa_bits) | self.mantissa_mask(),
        }
    }

    /// Canonical NaN pattern emitted on encode, sign clear.
    pub const fn canonical_nan_bits(&self) -> u8 {
        match self.special_policy {
            SpecialPolicy::ReclaimedNaNOnly => 0x7F,
            SpecialPolicy::FullIeee => 0x7E,
        }
    }

    /// Positive infinity pattern, if the format has one.
    pub const fn infinity_bits(&self) -> Option<u8> {
        match self.special_policy {
            SpecialPolicy::ReclaimedNaNOnly => None,
            SpecialPolicy::FullIeee => Some(self.exponent_field_max() << self.mantissa_bits),
        }
    }

    pub fn max_normal(&self) -> f32 {
        decode_bits(*self, self.max_normal_bits())
    }

    pub fn min_normal(&self) -> f32 {
        decode_bits(*self, 1 << self.mantissa_bits)
    }

    pub fn max_subnormal(&self) -> f32 {
        decode_bits(*self, self.mantissa_mask())
    }

    pub fn min_subnormal(&self) -> f32 {
        decode_bits(*self, 0x01)
    }

    /// Spacing between adjacent values in the top binade.
    pub fn top_ulp(&self) -> f32 {
        exp2i(self.max_exponent() - self.mantissa_bits as i32)
    }

    /// Number of binades spanned from the smallest subnormal to the largest
    /// normal, `ceil(log2(max_normal / min_subnormal))`.
    pub fn binade_count(&self) -> u32 {
        (self.max_normal() as f64 / self.min_subnormal() as f64).log2().ceil() as u32
    }

    pub fn limits(&self) -> FormatLimits {
        FormatLimits {
            exponent_bias: self.exponent_bias,
            max_normal: self.max_normal(),
            min_normal: self.min_normal(),
            max_subnormal: self.max_subnormal(),
            min_subnormal: self.min_subnormal(),
        }
    }
}

impl fmt::Display for Fp8Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Fp8Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "e4m3" => Ok(Self::E4M3),
            "e5m2" => Ok(Self::E5M2),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

impl Serialize for Fp8Format {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Fp8Format {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The extremal constants of a format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FormatLimits {
    pub exponent_bias: i32,
    pub max_normal: f32,
    pub min_normal: f32,
    pub max_subnormal: f32,
    pub min_subnormal: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sign {
    Pos,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ClassKind {
    Zero,
    Subnormal,
    Normal,
    Infinity,
    NaN,
}

/// Class of a pattern together with its sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FpClass {
    pub kind: ClassKind,
    pub sign: Sign,
}

impl FpClass {
    pub fn is_finite(&self) -> bool {
        !matches!(self.kind, ClassKind::Infinity | ClassKind::NaN)
    }
}

/// An 8-bit pattern tagged with its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fp8Value {
    pub bits: u8,
    pub format: Fp8Format,
}

impl Fp8Value {
    pub const fn new(bits: u8, format: Fp8Format) -> Self {
        Fp8Value { bits, format }
    }

    pub fn classify(&self) -> FpClass {
        classify(*self)
    }

    pub fn decode(&self) -> f32 {
        decode(*self)
    }

    pub fn is_nan(&self) -> bool {
        self.classify().kind == ClassKind::NaN
    }

    pub fn sign(&self) -> Sign {
        if self.bits & 0x80 != 0 {
            Sign::Neg
        } else {
            Sign::Pos
        }
    }

    pub fn total_order_key(&self) -> Option<i16> {
        total_order_key(*self)
    }
}

/// Numeric comparison; `-0 == +0`, and NaN is unordered.
impl PartialOrd for Fp8Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        compare(*self, *other)
    }
}

impl fmt::Display for Fp8Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(0x{:02X} = {})", self.format, self.bits, self.decode())
    }
}

/// Exact power of two as binary32; `k` must lie in the normal range.
pub(crate) fn exp2i(k: i32) -> f32 {
    debug_assert!((-126..=127).contains(&k));
    f32::from_bits(((k + 127) as u32) << 23)
}

pub fn classify(v: Fp8Value) -> FpClass {
    let f = v.format;
    let sign = v.sign();
    let exp = (v.bits & 0x7F) >> f.mantissa_bits;
    let mant = v.bits & f.mantissa_mask();
    let kind = match (exp, f.special_policy) {
        (0, _) if mant == 0 => ClassKind::Zero,
        (0, _) => ClassKind::Subnormal,
        (e, SpecialPolicy::ReclaimedNaNOnly) if e == f.exponent_field_max() && mant == f.mantissa_mask() => {
            ClassKind::NaN
        }
        (e, SpecialPolicy::FullIeee) if e == f.exponent_field_max() => {
            if mant == 0 {
                ClassKind::Infinity
            } else {
                ClassKind::NaN
            }
        }
        _ => ClassKind::Normal,
    };
    FpClass { kind, sign }
}

fn decode_bits(f: Fp8Format, bits: u8) -> f32 {
    decode(Fp8Value::new(bits, f))
}

/// Exact widening to binary32.
pub fn decode(v: Fp8Value) -> f32 {
    let f = v.format;
    let class = classify(v);
    let magnitude = match class.kind {
        ClassKind::NaN => f32::NAN,
        ClassKind::Infinity => f32::INFINITY,
        ClassKind::Zero => 0.0,
        ClassKind::Subnormal | ClassKind::Normal => {
            let exp = ((v.bits & 0x7F) >> f.mantissa_bits) as i32;
            let mant = (v.bits & f.mantissa_mask()) as u32;
            let m = f.mantissa_bits as i32;
            if exp == 0 {
                mant as f32 * exp2i(f.min_exponent() - m)
            } else {
                ((1u32 << m) + mant) as f32 * exp2i(exp - f.exponent_bias - m)
            }
        }
    };
    match class.sign {
        Sign::Pos => magnitude,
        Sign::Neg => -magnitude,
    }
}

/// Returns the pattern whose decode is bitwise equal to `x`.
///
/// NaN maps to the canonical NaN pattern carrying the input's sign.
pub fn encode_exact(x: f32, f: Fp8Format) -> Result<Fp8Value, Error> {
    let sign = if x.is_sign_negative() { 0x80 } else { 0x00 };
    if x.is_nan() {
        return Ok(Fp8Value::new(f.canonical_nan_bits() | sign, f));
    }
    let v = crate::convert::convert_to_fp8(
        x,
        f,
        &mut crate::convert::RoundingMode::NearestEven,
        crate::convert::OverflowMode::Saturate,
    );
    if decode(v).to_bits() == x.to_bits() {
        Ok(v)
    } else {
        Err(Error::NotRepresentable { value: x, format: f })
    }
}

/// One row of a format's enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Entry {
    pub bits: u8,
    pub value: f32,
    pub class: FpClass,
}

/// All 256 patterns of `f`, ordered by bit pattern.
pub fn enumerate(f: Fp8Format) -> Vec<Entry> {
    (0..=255u8)
        .map(|bits| {
            let v = Fp8Value::new(bits, f);
            Entry {
                bits,
                value: decode(v),
                class: classify(v),
            }
        })
        .collect()
}

/// Integer key whose ordering matches numeric ordering for every non-NaN
/// pattern. Both zeros map to key 0. Returns `None` for NaN.
pub fn total_order_key(v: Fp8Value) -> Option<i16> {
    if classify(v).kind == ClassKind::NaN {
        return None;
    }
    let magnitude = (v.bits & 0x7F) as i16;
    Some(if v.bits & 0x80 != 0 { -magnitude } else { magnitude })
}

pub fn compare(a: Fp8Value, b: Fp8Value) -> Option<Ordering> {
    Some(total_order_key(a)?.cmp(&total_order_key(b)?))
}
