//! Fake-quantizes the two inputs of a GEMM with the default per-role
//! configuration and reports the error of each, then compares the product
//! against the binary32 one.
//!
//!     cargo run --example fake_quantize

use fp8::quantsim::{quantize_pair_gemm_io, TensorRole};
use fp8::{fake_quantize, QuantConfig, RoundingMode, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            for j in 0..n {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

fn main() {
    let (m, k, n) = (64, 256, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w: Vec<f32> = (0..m * k).map(|i| Normal::new(0.0, 0.02 * (1 + i / k) as f32).unwrap().sample(&mut rng)).collect();
    let a: Vec<f32> = (0..k * n).map(|_| Normal::new(0.0, 3.0).unwrap().sample(&mut rng)).collect();
    let weights = Tensor::new(vec![m, k], w).unwrap();
    let acts = Tensor::new(vec![k, n], a).unwrap();

    let io = quantize_pair_gemm_io(&weights, &acts, None, None).unwrap();
    for (name, r) in [("weights", &io.weight_report), ("activations", &io.activation_report)] {
        println!(
            "{name}: {} mse {:.3e}, SQNR {:.1} dB, {} scale(s)",
            r.format.name(),
            r.mse,
            r.sqnr_db.db(),
            r.scale_set_used.scales.len()
        );
    }

    let exact = matmul(weights.data(), acts.data(), m, k, n);
    let approx = matmul(io.weights.data(), io.activations.data(), m, k, n);
    let err: f64 = exact.iter().zip(&approx).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
    let sig: f64 = exact.iter().map(|x| (*x as f64).powi(2)).sum();
    println!("GEMM output SQNR {:.1} dB", 10.0 * (sig / err).log10());

    let grads = Tensor::from_vec(acts.data().iter().map(|x| x * 1e-5).collect()).unwrap();
    for (label, cfg) in [
        ("nearest-even", QuantConfig::for_role(TensorRole::Gradient)),
        ("stochastic", QuantConfig::for_role(TensorRole::Gradient).with_rounding(RoundingMode::stochastic(3))),
    ] {
        let (_, r) = fake_quantize(&grads, &cfg).unwrap();
        println!("gradients, {label}: {} mse {:.3e}", r.format.name(), r.mse);
    }
}
