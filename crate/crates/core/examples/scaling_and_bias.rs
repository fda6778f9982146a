//! Scale factors and exponent-bias emulation. A power-of-two scale is the
//! same as moving the exponent bias, so small values that vanish at the
//! default bias survive at a larger one.
//!
//!     cargo run --example scaling_and_bias

use fp8::scaling::{dequantize, emulate_bias_cast, quantize_scaled, scale_for_amax};
use fp8::{Fp8Format, OverflowMode, RoundingMode, ScaleConstraint};

fn main() {
    let f = Fp8Format::E4M3;
    let amax = 3.7f32;
    for constraint in [ScaleConstraint::Free, ScaleConstraint::PowerOfTwo] {
        let s = scale_for_amax(amax, f, constraint);
        let q = quantize_scaled(1.234, s, f, &mut RoundingMode::NearestEven, OverflowMode::Saturate);
        println!(
            "{constraint:?} scale for amax {amax}: {}; 1.234 -> 0x{:02X} -> {}",
            s.value,
            q.bits,
            dequantize(q, s)
        );
    }

    let x = 3e-4f32;
    for bias in [7, 9, 11, 13] {
        let y = emulate_bias_cast(x, f, bias, &mut RoundingMode::NearestEven, OverflowMode::Saturate).unwrap();
        println!("bias {bias:>2}: {x} -> {y}");
    }
}
