//! Scale factors: selection from a maximum magnitude, scaled casts, and
//! emulation of a non-default exponent bias as a power-of-two scale.

use serde::{Deserialize, Serialize};

use crate::convert::{convert_to_fp8, OverflowMode, RoundingMode};
use crate::format::{decode, exp2i, Fp8Format, Fp8Value};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleConstraint {
    #[default]
    Free,
    PowerOfTwo,
}

/// A positive, finite multiplier applied before casting to FP8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub value: f32,
    pub constraint: ScaleConstraint,
}

impl ScaleFactor {
    pub const ONE: ScaleFactor = ScaleFactor {
        value: 1.0,
        constraint: ScaleConstraint::PowerOfTwo,
    };

    pub fn new(value: f32, constraint: ScaleConstraint) -> Result<Self, Error> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidScale(value));
        }
        if constraint == ScaleConstraint::PowerOfTwo && !is_power_of_two(value) {
            return Err(Error::InvalidScale(value));
        }
        Ok(ScaleFactor { value, constraint })
    }

    pub fn free(value: f32) -> Result<Self, Error> {
        Self::new(value, ScaleConstraint::Free)
    }

    /// `2^k` as a power-of-two scale.
    pub fn pow2(k: i32) -> Result<Self, Error> {
        if !(-126..=127).contains(&k) {
            return Err(Error::InvalidScale(2f32.powi(k)));
        }
        Ok(ScaleFactor {
            value: exp2i(k),
            constraint: ScaleConstraint::PowerOfTwo,
        })
    }

    /// The binary32-rounded inverse used for unscaling.
    pub fn reciprocal(&self) -> f32 {
        1.0 / self.value
    }
}

fn is_power_of_two(v: f32) -> bool {
    let bits = v.to_bits();
    let exp = (bits >> 23) & 0xFF;
    let frac = bits & 0x7F_FFFF;
    if exp == 0 {
        frac.is_power_of_two()
    } else {
        frac == 0
    }
}

/// Per-tensor or per-channel scaling layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Granularity {
    PerTensor,
    PerChannel { axis: usize },
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    /// Parses `tensor` or `channel:<axis>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "tensor" {
            return Ok(Granularity::PerTensor);
        }
        s.strip_prefix("channel:")
            .and_then(|a| a.parse().ok())
            .map(|axis| Granularity::PerChannel { axis })
            .ok_or_else(|| Error::Usage(format!("bad granularity {s:?}, expected tensor or channel:<axis>")))
    }
}

/// One scale per tensor, or one per slice along an axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub granularity: Granularity,
    pub scales: Vec<ScaleFactor>,
}

impl ScaleSet {
    pub fn per_tensor(scale: ScaleFactor) -> Self {
        ScaleSet {
            granularity: Granularity::PerTensor,
            scales: vec![scale],
        }
    }

    pub fn per_channel(axis: usize, scales: Vec<ScaleFactor>) -> Self {
        ScaleSet {
            granularity: Granularity::PerChannel { axis },
            scales,
        }
    }

    pub fn identity() -> Self {
        Self::per_tensor(ScaleFactor::ONE)
    }

    /// Checks the set against a tensor shape.
    pub fn validate(&self, shape: &[usize]) -> Result<(), Error> {
        match self.granularity {
            Granularity::PerTensor if self.scales.len() == 1 => Ok(()),
            Granularity::PerTensor => Err(Error::ScaleCount {
                expected: 1,
                got: self.scales.len(),
            }),
            Granularity::PerChannel { axis } => {
                let extent = *shape.get(axis).ok_or(Error::AxisOutOfRange { axis, rank: shape.len() })?;
                if extent == self.scales.len() {
                    Ok(())
                } else {
                    Err(Error::ScaleCount {
                        expected: extent,
                        got: self.scales.len(),
                    })
                }
            }
        }
    }
}

/// Picks a scale that maps `amax` to the largest normal of `f`, never past
/// it in binary32 arithmetic.
///
/// A zero `amax` gives scale 1. Ratios beyond the binary32 range are
/// clamped to the largest finite scale.
pub fn scale_for_amax(amax: f32, f: Fp8Format, constraint: ScaleConstraint) -> ScaleFactor {
    debug_assert!(amax.is_finite() && amax >= 0.0);
    if amax == 0.0 {
        return ScaleFactor { value: 1.0, constraint };
    }
    let max = f.max_normal();
    match constraint {
        ScaleConstraint::Free => {
            let mut v = max / amax;
            if !v.is_finite() {
                v = f32::MAX;
            }
            // the rounded quotient can push amax a binary32 ulp past max
            while amax * v > max {
                v = v.next_down();
            }
            ScaleFactor { value: v, constraint }
        }
        ScaleConstraint::PowerOfTwo => {
            let ratio = max as f64 / amax as f64;
            let mut k = ratio.log2().floor() as i32;
            // log2 may be off by one near exact powers of two
            while amax as f64 * 2f64.powi(k) > max as f64 {
                k -= 1;
            }
            while amax as f64 * 2f64.powi(k + 1) <= max as f64 {
                k += 1;
            }
            ScaleFactor {
                value: exp2i(k.clamp(-126, 127)),
                constraint,
            }
        }
    }
}

/// `x * s` in binary32, then narrowed to FP8.
pub fn quantize_scaled(
    x: f32,
    s: ScaleFactor,
    f: Fp8Format,
    round: &mut RoundingMode,
    overflow: OverflowMode,
) -> Fp8Value {
    convert_to_fp8(x * s.value, f, round, overflow)
}

pub fn dequantize(v: Fp8Value, s: ScaleFactor) -> f32 {
    dequantize_with_reciprocal(v, s.reciprocal())
}

/// Unscaling with a reciprocal computed once by the caller.
pub fn dequantize_with_reciprocal(v: Fp8Value, inv_scale: f32) -> f32 {
    decode(v) * inv_scale
}

/// Exponent biases accepted by [`emulate_bias_cast`].
pub const BIAS_WINDOW: std::ops::RangeInclusive<i32> = -8..=31;

/// The power-of-two scale equivalent to storing `f` with exponent bias `bias`.
pub fn bias_scale(f: Fp8Format, bias: i32) -> Result<ScaleFactor, Error> {
    if !BIAS_WINDOW.contains(&bias) {
        return Err(Error::BiasOutOfRange(bias));
    }
    ScaleFactor::pow2(bias - f.exponent_bias)
}

/// The value `x` would round to in a format identical to `f` except for
/// its exponent bias.
pub fn emulate_bias_cast(
    x: f32,
    f: Fp8Format,
    bias: i32,
    round: &mut RoundingMode,
    overflow: OverflowMode,
) -> Result<f32, Error> {
    let s = bias_scale(f, bias)?;
    Ok(dequantize(quantize_scaled(x, s, f, round, overflow), s))
}
