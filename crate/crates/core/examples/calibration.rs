//! Compares max, percentile and MSE calibration on a Gaussian tensor with a
//! few large outliers, per tensor and per channel.
//!
//!     cargo run --example calibration

use fp8::{calibrate, calibrate_best_of, CalibrationMethod, Fp8Format, Granularity, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut data: Vec<f32> = (0..4 * 4096).map(|_| StandardNormal.sample(&mut rng)).collect();
    for i in (0..data.len()).step_by(3000) {
        data[i] *= 40.0;
    }
    let t = Tensor::new(vec![4, 4096], data).unwrap();
    let f = Fp8Format::E4M3;
    let methods = [CalibrationMethod::Max, CalibrationMethod::Percentile(99.9), CalibrationMethod::Mse];

    for g in [Granularity::PerTensor, Granularity::PerChannel { axis: 0 }] {
        println!("{g:?}:");
        for m in methods {
            let r = calibrate(&t, f, m, g).unwrap();
            let scales: Vec<f32> = r.scale_set.scales.iter().map(|s| s.value).collect();
            println!(
                "  {:<16} mse {:.3e}, clipped {:.4}%, scales {scales:?}",
                m.label(),
                r.mse,
                100.0 * r.clipped_fraction
            );
        }
        let best = calibrate_best_of(&t, f, &methods, g).unwrap();
        println!("  best of the three: {}", best.method.label());
    }
}
