//! Sweeps the E4M3 exponent bias over a heavy-tailed tensor and compares
//! the best single bias with per-tensor max calibration.
//!
//!     cargo run --example bias_sweep

use fp8::quantsim::SweepMetric;
use fp8::{bias_sweep, fake_quantize, CalibrationMethod, Fp8Format, Granularity, QuantConfig, ScaleSource, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let d = LogNormal::new(0.0, 2.0).unwrap();
    let t = Tensor::from_vec((0..100_000).map(|_| d.sample(&mut rng) as f32).collect()).unwrap();
    let f = Fp8Format::E4M3;

    let points = bias_sweep(&t, f, 0, 15, SweepMetric::Mse).unwrap();
    for p in &points {
        println!("bias {:>2}: mse {:.4}", p.bias, p.value);
    }
    let best = points.iter().min_by(|a, b| a.value.total_cmp(&b.value)).unwrap();
    let cfg = QuantConfig::unscaled(f).with_scale_source(ScaleSource::Auto(CalibrationMethod::Max, Granularity::PerTensor));
    let (_, max) = fake_quantize(&t, &cfg).unwrap();
    println!("best bias {} (mse {:.4}); max calibration mse {:.4}", best.bias, best.value, max.mse);
}
