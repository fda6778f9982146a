//! Test-only oracles. Nothing here calls the library's rounding or decoding
//! paths; value sets are rebuilt from the bit-field layout.

#![allow(dead_code)]

use fp8::{Fp8Format, OverflowMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Kind of an oracle pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleClass {
    Finite,
    Inf,
    NaN,
}

/// `(bits, value, class)` for all 256 patterns, from the sign/exponent/
/// mantissa formula with the format's special-value rules. `bias` may
/// differ from the format default.
pub fn table_with_bias(e_bits: u32, m_bits: u32, bias: i32, ieee_specials: bool) -> Vec<(u8, f64, OracleClass)> {
    let e_max = (1u32 << e_bits) - 1;
    let m_max = (1u32 << m_bits) - 1;
    (0..=255u32)
        .map(|bits| {
            let sign = if bits & 0x80 != 0 { -1.0 } else { 1.0 };
            let e = (bits >> m_bits) & e_max;
            let m = bits & m_max;
            let class = if ieee_specials && e == e_max {
                if m == 0 {
                    OracleClass::Inf
                } else {
                    OracleClass::NaN
                }
            } else if !ieee_specials && e == e_max && m == m_max {
                OracleClass::NaN
            } else {
                OracleClass::Finite
            };
            let frac = m as f64 / (1u32 << m_bits) as f64;
            let value = match class {
                OracleClass::NaN => f64::NAN,
                OracleClass::Inf => sign * f64::INFINITY,
                OracleClass::Finite if e == 0 => sign * frac * 2f64.powi(1 - bias),
                OracleClass::Finite => sign * (1.0 + frac) * 2f64.powi(e as i32 - bias),
            };
            (bits as u8, value, class)
        })
        .collect()
}

pub fn table(f: Fp8Format) -> Vec<(u8, f64, OracleClass)> {
    match f.kind {
        fp8::format::FormatKind::E4M3 => table_with_bias(4, 3, 7, false),
        fp8::format::FormatKind::E5M2 => table_with_bias(5, 2, 15, true),
    }
}

/// Finite `(bits, value)` pairs of a table.
pub fn finite(table: &[(u8, f64, OracleClass)]) -> Vec<(u8, f64)> {
    table
        .iter()
        .filter(|e| e.2 == OracleClass::Finite)
        .map(|e| (e.0, e.1))
        .collect()
}

/// Brute-force nearest-with-ties-to-even over `finite`, returning the bit
/// pattern. Handles specials and the nearest-even overflow threshold.
pub fn oracle_rne(x: f32, f: Fp8Format, finite: &[(u8, f64)], overflow: OverflowMode) -> u8 {
    let sign = if x.is_sign_negative() { 0x80 } else { 0 };
    let is_e4m3 = f.kind == fp8::format::FormatKind::E4M3;
    let nan = if is_e4m3 { 0x7F } else { 0x7E };
    if x.is_nan() {
        return nan | sign;
    }
    if x.is_infinite() {
        return if is_e4m3 { nan | sign } else { 0x7C | sign };
    }
    let (max, half_ulp) = if is_e4m3 { (448.0, 16.0) } else { (57344.0, 4096.0) };
    let xd = x as f64;
    if overflow == OverflowMode::NonSaturating && xd.abs() >= max + half_ulp {
        return if is_e4m3 { nan | sign } else { 0x7C | sign };
    }
    if x == 0.0 {
        return sign;
    }
    // far beyond the grid every f64 distance rounds to the same value
    if xd.abs() >= 2.0 * max {
        return (if is_e4m3 { 0x7E } else { 0x7B }) | sign;
    }
    let mut best: Option<(u8, f64)> = None;
    for &(bits, v) in finite {
        if v.to_bits() == (-0.0f64).to_bits() {
            continue;
        }
        let d = (xd - v).abs();
        best = match best {
            None => Some((bits, d)),
            Some((bb, bd)) => {
                if d < bd || (d == bd && bits & 1 == 0 && bb & 1 == 1) {
                    Some((bits, d))
                } else {
                    Some((bb, bd))
                }
            }
        };
    }
    let bits = best.unwrap().0;
    // a negative input that rounds to zero keeps its sign
    if bits & 0x7F == 0 {
        sign
    } else {
        bits
    }
}

/// Stratified binary32 inputs: raw random bit patterns, log-uniform
/// magnitudes over the format's range, the subnormal band, exact midpoints
/// and their binary32 neighbours, and the overflow boundary.
pub fn stratified_inputs(f: Fp8Format, n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fin = finite(&table(f));
    let mut pos: Vec<f64> = fin.iter().map(|e| e.1).filter(|v| *v > 0.0).collect();
    pos.sort_by(f64::total_cmp);
    let (min_sub, max) = (pos[0], *pos.last().unwrap());
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let sign = if rng.gen::<bool>() { -1.0f32 } else { 1.0 };
        let x = match out.len() % 6 {
            0 => f32::from_bits(rng.gen()),
            1 => {
                let lo = (min_sub / 4.0).log2();
                let hi = (max * 4.0).log2();
                sign * 2f64.powf(rng.gen_range(lo..hi)) as f32
            }
            2 => sign * (rng.gen_range(0.0..pos[1 << f.mantissa_bits] * 1.01)) as f32,
            3 => {
                let i = rng.gen_range(0..pos.len() - 1);
                let mid = ((pos[i] + pos[i + 1]) / 2.0) as f32;
                let step: i32 = rng.gen_range(-2..=2);
                sign * f32::from_bits((mid.to_bits() as i64 + step as i64) as u32)
            }
            4 => {
                let threshold = (max + if f.mantissa_bits == 3 { 16.0 } else { 4096.0 }) as f32;
                let step: i32 = rng.gen_range(-3..=3);
                sign * f32::from_bits((threshold.to_bits() as i64 + step as i64) as u32)
            }
            _ => sign * rng.gen_range(0.0..max * 1.2) as f32,
        };
        out.push(x);
    }
    out
}

/// Nearest value of `finite` to `x` with ties to the even pattern, clamped
/// to the largest magnitude (saturating). Zero results keep `x`'s sign.
pub fn oracle_nearest_value(x: f64, finite: &[(u8, f64)]) -> f64 {
    let max = finite.iter().map(|e| e.1).fold(0.0, f64::max);
    if x.abs() >= 2.0 * max {
        return max.copysign(x);
    }
    let mut best = (0u8, f64::INFINITY, 0.0);
    for &(bits, v) in finite {
        let d = (x - v).abs();
        if d < best.1 || (d == best.1 && bits & 1 == 0 && best.0 & 1 == 1) {
            best = (bits, d, v);
        }
    }
    if best.2 == 0.0 {
        0.0f64.copysign(x)
    } else {
        best.2
    }
}
