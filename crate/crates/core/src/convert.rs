//! Narrowing binary32 to FP8 under a rounding mode and an overflow policy.
//!
//! Rounding is done in integer arithmetic on the binary32 significand, so
//! every mode is exact: there is no intermediate floating point rounding.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::format::{decode, Fp8Format, Fp8Value, SpecialPolicy};

/// What to do with finite values whose rounded magnitude exceeds the
/// largest normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowMode {
    /// Clamp to `±max_normal`.
    #[default]
    Saturate,
    /// NaN for E4M3, `±inf` for E5M2.
    #[serde(rename = "nonsat")]
    NonSaturating,
}

/// Counter-based random source for stochastic rounding.
///
/// Draw `i` of a stream seeded with `seed` is the `i`-th 32-bit word of a
/// ChaCha8 keystream, so any element of a bulk conversion can be produced
/// independently with [`StochasticRng::at_index`].
#[derive(Debug, Clone)]
pub struct StochasticRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl StochasticRng {
    pub fn new(seed: u64) -> Self {
        StochasticRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A stream positioned so that its next draw is draw number `index`.
    pub fn at_index(seed: u64, index: u64) -> Self {
        let mut rng = Self::new(seed);
        rng.inner.set_word_pos(index as u128);
        rng
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_draw(&mut self) -> u32 {
        self.inner.next_u32()
    }
}

impl PartialEq for StochasticRng {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.inner.get_word_pos() == other.inner.get_word_pos()
    }
}

/// Rounding mode together with any state it needs.
// The stochastic stream lives inline: a mode is created once per conversion
// run and mutated in place, so boxing would only add an indirection.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum RoundingMode {
    NearestEven,
    Stochastic(StochasticRng),
    TowardZero,
}

impl RoundingMode {
    pub fn stochastic(seed: u64) -> Self {
        RoundingMode::Stochastic(StochasticRng::new(seed))
    }

    /// Resolves the mode for a single conversion, consuming one draw when
    /// stochastic.
    pub fn next_rounding(&mut self) -> Rounding {
        match self {
            RoundingMode::NearestEven => Rounding::NearestEven,
            RoundingMode::TowardZero => Rounding::TowardZero,
            RoundingMode::Stochastic(rng) => Rounding::Stochastic(rng.next_draw()),
        }
    }
}

/// A rounding decision for exactly one value. `Stochastic` carries the
/// uniform 32-bit draw used to decide the direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    NearestEven,
    TowardZero,
    Stochastic(u32),
}

/// Full outcome of one narrowing conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conversion {
    pub value: Fp8Value,
    /// A finite input whose rounded magnitude exceeded `max_normal`.
    pub overflowed: bool,
    /// No information was lost (finite input that was representable, or a
    /// special that maps to the same special).
    pub exact: bool,
}

/// Magnitude threshold at or above which round-to-nearest-even treats a
/// finite value as overflowing: `max_normal + top_ulp / 2`.
pub fn nearest_even_overflow_threshold(f: Fp8Format) -> f64 {
    f.max_normal() as f64 + f.top_ulp() as f64 / 2.0
}

enum Magnitude {
    /// Rounded magnitude in units of the smallest subnormal.
    Units { units: u64, exact: bool },
    Overflow,
}

/// Rounds a finite, nonzero magnitude onto the format grid with an
/// unbounded exponent range above.
fn round_magnitude(bits: u32, f: Fp8Format, rounding: Rounding) -> Magnitude {
    let exp_field = ((bits >> 23) & 0xFF) as i32;
    let frac = (bits & 0x7F_FFFF) as u64;
    let (sig, exp) = if exp_field == 0 {
        (frac, -149)
    } else {
        (frac | (1 << 23), exp_field - 150)
    };
    debug_assert!(sig != 0);
    let binade = exp + (63 - sig.leading_zeros() as i32);
    if binade > f.max_exponent() {
        return Magnitude::Overflow;
    }

    let m = f.mantissa_bits as i32;
    let unit_exp = f.min_exponent() - m;
    let quantum_exp = binade.max(f.min_exponent()) - m;

    let (mut count, exact) = if exp >= quantum_exp {
        (sig << (exp - quantum_exp), true)
    } else {
        let shift = (quantum_exp - exp) as u32;
        // sig < 2^24, so past this point it is entirely below half a quantum.
        let (count, rem) = if shift >= 64 { (0, sig) } else { (sig >> shift, sig & ((1u64 << shift) - 1)) };
        let up = rem != 0
            && match rounding {
                Rounding::TowardZero => false,
                Rounding::NearestEven => {
                    if shift >= 64 {
                        false
                    } else {
                        let half = 1u64 << (shift - 1);
                        rem > half || (rem == half && count & 1 == 1)
                    }
                }
                Rounding::Stochastic(draw) => stochastic_up(draw, rem, shift),
            };
        (count + up as u64, rem == 0)
    };
    count <<= quantum_exp - unit_exp;
    Magnitude::Units { units: count, exact }
}

/// Rounds up with probability `rem / 2^shift`, resolved to 32 bits of the
/// draw: up iff `draw * 2^shift < rem * 2^32`.
fn stochastic_up(draw: u32, rem: u64, shift: u32) -> bool {
    if shift <= 32 {
        (draw as u64) < (rem << (32 - shift))
    } else if shift - 32 < 96 {
        ((draw as u128) << (shift - 32)) < rem as u128
    } else {
        draw == 0
    }
}

/// Encodes a magnitude given in smallest-subnormal units. The magnitude must
/// be on the grid and not exceed `max_normal`.
fn units_to_bits(units: u64, f: Fp8Format) -> u8 {
    let m = f.mantissa_bits;
    if units < (1 << m) {
        return units as u8;
    }
    let top = 63 - units.leading_zeros();
    let shift = top - m;
    (((shift as u64) << m) + (units >> shift)) as u8
}

fn max_normal_units(f: Fp8Format) -> u64 {
    let x = f.max_normal() / f.min_subnormal();
    x as u64
}

fn overflow_bits(f: Fp8Format, overflow: OverflowMode) -> u8 {
    match (overflow, f.special_policy) {
        (OverflowMode::Saturate, _) => f.max_normal_bits(),
        (OverflowMode::NonSaturating, SpecialPolicy::ReclaimedNaNOnly) => f.canonical_nan_bits(),
        (OverflowMode::NonSaturating, SpecialPolicy::FullIeee) => f.infinity_bits().unwrap(),
    }
}

/// Converts one binary32 value with an already-resolved rounding decision.
pub fn round_to_fp8(x: f32, f: Fp8Format, rounding: Rounding, overflow: OverflowMode) -> Conversion {
    let sign = if x.is_sign_negative() { 0x80u8 } else { 0 };
    let out = |bits: u8, overflowed: bool, exact: bool| Conversion {
        value: Fp8Value::new(bits | sign, f),
        overflowed,
        exact,
    };

    if x.is_nan() {
        return out(f.canonical_nan_bits(), false, true);
    }
    if x.is_infinite() {
        return match f.infinity_bits() {
            Some(inf) => out(inf, false, true),
            None => out(f.canonical_nan_bits(), false, false),
        };
    }
    if x == 0.0 {
        return out(0, false, true);
    }

    if rounding == Rounding::NearestEven && x.abs() as f64 >= nearest_even_overflow_threshold(f) {
        return out(overflow_bits(f, overflow), true, false);
    }
    match round_magnitude(x.to_bits() & 0x7FFF_FFFF, f, rounding) {
        Magnitude::Units { units, exact } if units <= max_normal_units(f) => out(units_to_bits(units, f), false, exact),
        _ => out(overflow_bits(f, overflow), true, false),
    }
}

/// Narrows `x` to FP8. Stochastic modes advance their random stream by one
/// draw per call, whether or not rounding was needed.
pub fn convert_to_fp8(x: f32, f: Fp8Format, round: &mut RoundingMode, overflow: OverflowMode) -> Fp8Value {
    round_to_fp8(x, f, round.next_rounding(), overflow).value
}

/// Exact widening; the same as [`decode`].
pub fn convert_to_binary32(v: Fp8Value) -> f32 {
    decode(v)
}

/// Narrows a binary16 bit pattern to E5M2. The two formats share their
/// exponent layout, so for finite inputs this amounts to rounding the
/// 10-bit mantissa to 2 bits.
pub fn e5m2_from_binary16_bits(h: u16, round: &mut RoundingMode, overflow: OverflowMode) -> Fp8Value {
    let wide = half::f16::from_bits(h).to_f32();
    convert_to_fp8(wide, Fp8Format::E5M2, round, overflow)
}
