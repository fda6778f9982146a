//! Narrows a few binary32 values to both formats under each overflow mode.
//!
//!     cargo run --example convert_scalar

use fp8::{convert_to_binary32, convert_to_fp8, Fp8Format, OverflowMode, RoundingMode};

fn main() {
    let inputs = [0.2f32, 1.0, -3.3, 300.0, 460.0, 470.0, 60000.0, 1e-4, f32::INFINITY, f32::NAN];
    for f in [Fp8Format::E4M3, Fp8Format::E5M2] {
        println!("{}:", f.name());
        for x in inputs {
            let sat = convert_to_fp8(x, f, &mut RoundingMode::NearestEven, OverflowMode::Saturate);
            let nonsat = convert_to_fp8(x, f, &mut RoundingMode::NearestEven, OverflowMode::NonSaturating);
            println!(
                "  {x:>10} -> 0x{:02X} ({}) saturating, 0x{:02X} ({}) non-saturating",
                sat.bits,
                convert_to_binary32(sat),
                nonsat.bits,
                convert_to_binary32(nonsat)
            );
        }
    }
}
