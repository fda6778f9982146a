//! Stochastic rounding is unbiased: the mean of many roundings of a value
//! between two grid points converges to the value itself.
//!
//!     cargo run --example stochastic_rounding

use fp8::{convert_to_fp8, decode, Fp8Format, OverflowMode, RoundingMode};

fn main() {
    let f = Fp8Format::E4M3;
    let trials = 100_000;
    for x in [1.03f32, 1.0625, 1.1, 300.0, 0.005] {
        let mut round = RoundingMode::stochastic(42);
        let mut sum = 0.0f64;
        for _ in 0..trials {
            sum += decode(convert_to_fp8(x, f, &mut round, OverflowMode::Saturate)) as f64;
        }
        let nearest = decode(convert_to_fp8(x, f, &mut RoundingMode::NearestEven, OverflowMode::Saturate));
        println!(
            "{x:>8}: nearest-even {nearest:>8}, stochastic mean over {trials} draws {:.6}",
            sum / trials as f64
        );
    }
}
