//! Fake quantization of tensors (cast to FP8 and back to binary32), with
//! error and overflow statistics.
//!
//! Work is split into fixed chunks of [`CHUNK_SIZE`] elements. Each chunk
//! accumulates its statistics in f64 and chunks are combined in index
//! order, so results do not depend on how chunks are scheduled. Stochastic
//! rounding draws element `i`'s random word from position `i` of the
//! stream seeded by the configured seed.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::calibrate::{calibrate, calibrate_best_of, CalibrationMethod};
use crate::convert::{round_to_fp8, OverflowMode, Rounding, RoundingMode, StochasticRng};
use crate::format::Fp8Format;
use crate::scaling::{bias_scale, dequantize_with_reciprocal, Granularity, ScaleSet};
use crate::tensor::{ChannelLayout, Fp8Tensor, Tensor};
use crate::Error;

pub const CHUNK_SIZE: usize = 4096;

/// Where the scale factors of a fake-quantization come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ScaleSource {
    Explicit(ScaleSet),
    Auto(CalibrationMethod, Granularity),
    /// Calibrate with each method and keep the lowest tensor MSE.
    BestOf(Vec<CalibrationMethod>, Granularity),
    /// Cast without scaling.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantConfig {
    pub format: Fp8Format,
    pub round: RoundingMode,
    pub overflow: OverflowMode,
    pub scale_source: ScaleSource,
}

impl QuantConfig {
    /// Nearest-even, saturating, unscaled cast to `format`.
    pub fn unscaled(format: Fp8Format) -> Self {
        QuantConfig {
            format,
            round: RoundingMode::NearestEven,
            overflow: OverflowMode::Saturate,
            scale_source: ScaleSource::None,
        }
    }

    pub fn with_scale_source(mut self, scale_source: ScaleSource) -> Self {
        self.scale_source = scale_source;
        self
    }

    pub fn with_rounding(mut self, round: RoundingMode) -> Self {
        self.round = round;
        self
    }

    pub fn with_overflow(mut self, overflow: OverflowMode) -> Self {
        self.overflow = overflow;
        self
    }

    /// Default configuration for a tensor of the given role.
    pub fn for_role(role: TensorRole) -> Self {
        let source = match role {
            TensorRole::Weight => ScaleSource::Auto(CalibrationMethod::Max, Granularity::PerChannel { axis: 0 }),
            TensorRole::Activation => ScaleSource::BestOf(
                vec![
                    CalibrationMethod::Max,
                    CalibrationMethod::Percentile(99.99),
                    CalibrationMethod::Mse,
                ],
                Granularity::PerTensor,
            ),
            TensorRole::Gradient => ScaleSource::Auto(CalibrationMethod::Max, Granularity::PerTensor),
        };
        Self::unscaled(role.default_format()).with_scale_source(source)
    }

    fn resolve_scales(&self, t: &Tensor) -> Result<ScaleSet, Error> {
        let set = match &self.scale_source {
            ScaleSource::Explicit(set) => set.clone(),
            ScaleSource::Auto(method, g) => calibrate(t, self.format, *method, *g)?.scale_set,
            ScaleSource::BestOf(methods, g) => calibrate_best_of(t, self.format, methods, *g)?.scale_set,
            ScaleSource::None => ScaleSet::identity(),
        };
        set.validate(t.shape())?;
        Ok(set)
    }
}

/// What a tensor feeds in a GEMM, which fixes its default encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorRole {
    Weight,
    Activation,
    Gradient,
}

impl TensorRole {
    pub fn default_format(self) -> Fp8Format {
        match self {
            TensorRole::Weight | TensorRole::Activation => Fp8Format::E4M3,
            TensorRole::Gradient => Fp8Format::E5M2,
        }
    }
}

/// Signal-to-quantization-noise ratio in dB; `Infinite` when the error is
/// exactly zero. Serializes as a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sqnr {
    Db(f64),
    Infinite,
}

impl Sqnr {
    pub fn db(&self) -> f64 {
        match self {
            Sqnr::Db(v) => *v,
            Sqnr::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for Sqnr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Sqnr::Db(v) => serializer.serialize_f64(*v),
            Sqnr::Infinite => serializer.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantReport {
    pub format: Fp8Format,
    pub element_count: usize,
    /// Mean squared error over finite inputs with finite outputs.
    pub mse: f64,
    pub max_abs_err: f64,
    pub sqnr_db: Sqnr,
    /// Finite inputs whose scaled value overflowed the format.
    pub overflow_count: usize,
    /// Nonzero finite inputs that came out as a signed zero.
    pub underflow_to_zero_count: usize,
    /// NaN and infinite inputs.
    pub special_in_count: usize,
    pub scale_set_used: ScaleSet,
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    sse: f64,
    signal: f64,
    max_abs_err: f64,
    measured: usize,
    overflow: usize,
    underflow: usize,
    special: usize,
}

impl Stats {
    fn merge(mut self, o: Stats) -> Stats {
        self.sse += o.sse;
        self.signal += o.signal;
        self.max_abs_err = self.max_abs_err.max(o.max_abs_err);
        self.measured += o.measured;
        self.overflow += o.overflow;
        self.underflow += o.underflow;
        self.special += o.special;
        self
    }
}

struct Quantized {
    bytes: Vec<u8>,
    values: Vec<f32>,
    report: QuantReport,
}

fn quantize_with(t: &Tensor, cfg: &QuantConfig, scales: ScaleSet) -> Result<Quantized, Error> {
    let f = cfg.format;
    let layout = match scales.granularity {
        Granularity::PerTensor => None,
        Granularity::PerChannel { axis } => Some(t.layout(axis)?),
    };
    let inverses: Vec<f32> = scales.scales.iter().map(|s| s.reciprocal()).collect();
    let seed = match &cfg.round {
        RoundingMode::Stochastic(rng) => Some(rng.seed()),
        _ => None,
    };

    let chunks: Vec<(Vec<u8>, Vec<f32>, Stats)> = t
        .data()
        .par_chunks(CHUNK_SIZE)
        .enumerate()
        .map(|(ci, chunk)| {
            let start = ci * CHUNK_SIZE;
            let mut rng = seed.map(|s| StochasticRng::at_index(s, start as u64));
            let mut bytes = Vec::with_capacity(chunk.len());
            let mut values = Vec::with_capacity(chunk.len());
            let mut st = Stats::default();
            for (i, &x) in chunk.iter().enumerate() {
                let c = channel_for(layout, start + i);
                let rounding = match (&mut rng, &cfg.round) {
                    (Some(r), _) => Rounding::Stochastic(r.next_draw()),
                    (None, RoundingMode::TowardZero) => Rounding::TowardZero,
                    (None, _) => Rounding::NearestEven,
                };
                let conv = round_to_fp8(x * scales.scales[c].value, f, rounding, cfg.overflow);
                let q = dequantize_with_reciprocal(conv.value, inverses[c]);
                bytes.push(conv.value.bits);
                values.push(q);
                if !x.is_finite() {
                    st.special += 1;
                    continue;
                }
                st.overflow += conv.overflowed as usize;
                if x != 0.0 && q == 0.0 {
                    st.underflow += 1;
                }
                if q.is_finite() {
                    let err = (x as f64 - q as f64).abs();
                    st.sse += err * err;
                    st.signal += x as f64 * x as f64;
                    st.max_abs_err = st.max_abs_err.max(err);
                    st.measured += 1;
                }
            }
            (bytes, values, st)
        })
        .collect();

    let mut bytes = Vec::with_capacity(t.len());
    let mut values = Vec::with_capacity(t.len());
    let mut st = Stats::default();
    for (b, v, s) in chunks {
        bytes.extend(b);
        values.extend(v);
        st = st.merge(s);
    }

    let report = QuantReport {
        format: f,
        element_count: t.len(),
        mse: if st.measured == 0 { 0.0 } else { st.sse / st.measured as f64 },
        max_abs_err: st.max_abs_err,
        sqnr_db: if st.sse == 0.0 {
            Sqnr::Infinite
        } else {
            Sqnr::Db(10.0 * (st.signal / st.sse).log10())
        },
        overflow_count: st.overflow,
        underflow_to_zero_count: st.underflow,
        special_in_count: st.special,
        scale_set_used: scales,
    };
    Ok(Quantized { bytes, values, report })
}

fn channel_for(layout: Option<ChannelLayout>, index: usize) -> usize {
    layout.map_or(0, |l| l.channel_of(index))
}

/// Quantize-dequantize every element of `t`.
pub fn fake_quantize(t: &Tensor, cfg: &QuantConfig) -> Result<(Tensor, QuantReport), Error> {
    let scales = cfg.resolve_scales(t)?;
    let q = quantize_with(t, cfg, scales)?;
    Ok((Tensor::new(t.shape().to_vec(), q.values)?, q.report))
}

/// Quantizes `t` and keeps the raw FP8 bytes; dequantize them with the
/// report's `scale_set_used`.
pub fn quantize_to_fp8(t: &Tensor, cfg: &QuantConfig) -> Result<(Fp8Tensor, QuantReport), Error> {
    let scales = cfg.resolve_scales(t)?;
    let q = quantize_with(t, cfg, scales)?;
    Ok((Fp8Tensor::new(t.shape().to_vec(), cfg.format, q.bytes)?, q.report))
}

/// Fake-quantized GEMM inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GemmInputs {
    pub weights: Tensor,
    pub activations: Tensor,
    pub weight_report: QuantReport,
    pub activation_report: QuantReport,
}

/// Fake-quantizes the two inputs of a GEMM. Missing configurations default
/// to [`QuantConfig::for_role`]: E4M3 for both, per-channel max calibration
/// along axis 0 for weights, per-tensor best-of calibration for activations.
pub fn quantize_pair_gemm_io(
    weights: &Tensor,
    acts: &Tensor,
    cfg_w: Option<&QuantConfig>,
    cfg_a: Option<&QuantConfig>,
) -> Result<GemmInputs, Error> {
    let default_w = QuantConfig::for_role(TensorRole::Weight);
    let default_a = QuantConfig::for_role(TensorRole::Activation);
    let (w, weight_report) = fake_quantize(weights, cfg_w.unwrap_or(&default_w))?;
    let (a, activation_report) = fake_quantize(acts, cfg_a.unwrap_or(&default_a))?;
    Ok(GemmInputs {
        weights: w,
        activations: a,
        weight_report,
        activation_report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    Mse,
    MaxAbsErr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasPoint {
    pub bias: i32,
    pub value: f64,
}

/// Error of casting `t` to `f` re-biased to each exponent bias in
/// `lo..=hi`, without any other scaling. Nearest-even, saturating.
pub fn bias_sweep(t: &Tensor, f: Fp8Format, lo: i32, hi: i32, metric: SweepMetric) -> Result<Vec<BiasPoint>, Error> {
    if lo > hi {
        return Err(Error::Usage(format!("empty bias range {lo}..={hi}")));
    }
    (lo..=hi)
        .map(|bias| {
            let s = bias_scale(f, bias)?;
            let cfg = QuantConfig::unscaled(f).with_scale_source(ScaleSource::Explicit(ScaleSet::per_tensor(s)));
            let (_, report) = fake_quantize(t, &cfg)?;
            let value = match metric {
                SweepMetric::Mse => report.mse,
                SweepMetric::MaxAbsErr => report.max_abs_err,
            };
            Ok(BiasPoint { bias, value })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::enumerate;
    use crate::scaling::ScaleFactor;

    #[test]
    fn representable_values_are_fixed_points() {
        let vals: Vec<f32> = enumerate(Fp8Format::E4M3)
            .into_iter()
            .filter(|e| e.class.is_finite())
            .map(|e| e.value)
            .collect();
        let t = Tensor::from_vec(vals.clone()).unwrap();
        let (out, r) = fake_quantize(&t, &QuantConfig::unscaled(Fp8Format::E4M3)).unwrap();
        assert!(out.data().iter().zip(&vals).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(r.mse, 0.0);
        assert_eq!(r.sqnr_db, Sqnr::Infinite);
    }

    #[test]
    fn saturation_is_counted() {
        let t = Tensor::from_vec(vec![600.0]).unwrap();
        let (out, r) = fake_quantize(&t, &QuantConfig::unscaled(Fp8Format::E4M3)).unwrap();
        assert_eq!(out.data(), &[448.0]);
        assert_eq!(r.overflow_count, 1);
        assert_eq!(r.max_abs_err, 152.0);
    }

    #[test]
    fn specials_and_underflow_are_counted() {
        let t = Tensor::from_vec(vec![f32::NAN, f32::INFINITY, 1e-6, -1e-6, 0.0, 1.0]).unwrap();
        let (out, r) = fake_quantize(&t, &QuantConfig::unscaled(Fp8Format::E4M3)).unwrap();
        assert_eq!(r.special_in_count, 2);
        assert_eq!(r.underflow_to_zero_count, 2);
        assert!(out.data()[0].is_nan() && out.data()[1].is_nan());
        assert_eq!(out.data()[3].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn nonsaturating_overflow_is_excluded_from_error() {
        let t = Tensor::from_vec(vec![1000.0, 1.0]).unwrap();
        let cfg = QuantConfig::unscaled(Fp8Format::E5M2).with_overflow(OverflowMode::NonSaturating);
        let (_, r) = fake_quantize(&t, &cfg).unwrap();
        assert_eq!(r.overflow_count, 0);
        let t = Tensor::from_vec(vec![1e6, 1.0]).unwrap();
        let (out, r) = fake_quantize(&t, &cfg).unwrap();
        assert_eq!(r.overflow_count, 1);
        assert_eq!(out.data()[0], f32::INFINITY);
        assert_eq!(r.mse, 0.0);
    }

    #[test]
    fn explicit_per_channel_scales() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 10.0, 20.0]).unwrap();
        let set = ScaleSet::per_channel(0, vec![ScaleFactor::free(224.0).unwrap(), ScaleFactor::free(22.4).unwrap()]);
        let cfg = QuantConfig::unscaled(Fp8Format::E4M3).with_scale_source(ScaleSource::Explicit(set));
        let (_, r) = fake_quantize(&t, &cfg).unwrap();
        assert_eq!(r.overflow_count, 0);
        let bad = ScaleSet::per_channel(0, vec![ScaleFactor::ONE; 3]);
        let cfg = QuantConfig::unscaled(Fp8Format::E4M3).with_scale_source(ScaleSource::Explicit(bad));
        assert!(matches!(fake_quantize(&t, &cfg), Err(Error::ScaleCount { .. })));
    }

    #[test]
    fn fp8_bytes_match_fake_quantization() {
        let t = Tensor::from_vec((0..100).map(|i| (i as f32 - 50.0) * 0.37).collect()).unwrap();
        let cfg = QuantConfig::unscaled(Fp8Format::E4M3)
            .with_scale_source(ScaleSource::Auto(CalibrationMethod::Max, Granularity::PerTensor));
        let (bytes, r1) = quantize_to_fp8(&t, &cfg).unwrap();
        let (fq, r2) = fake_quantize(&t, &cfg).unwrap();
        assert_eq!(r1, r2);
        let inv = r1.scale_set_used.scales[0].reciprocal();
        for (v, q) in bytes.values().zip(fq.data()) {
            assert_eq!(dequantize_with_reciprocal(v, inv), *q);
        }
    }

    #[test]
    fn role_defaults() {
        assert_eq!(QuantConfig::for_role(TensorRole::Weight).format, Fp8Format::E4M3);
        assert_eq!(QuantConfig::for_role(TensorRole::Activation).format, Fp8Format::E4M3);
        assert_eq!(QuantConfig::for_role(TensorRole::Gradient).format, Fp8Format::E5M2);
    }

    #[test]
    fn bias_sweep_on_ones() {
        let t = Tensor::from_vec(vec![1.0; 64]).unwrap();
        let pts = bias_sweep(&t, Fp8Format::E4M3, 4, 12, SweepMetric::Mse).unwrap();
        assert_eq!(pts.len(), 9);
        assert!(pts.iter().all(|p| p.value == 0.0));
        assert!(bias_sweep(&t, Fp8Format::E4M3, 5, 4, SweepMetric::Mse).is_err());
    }

    #[test]
    fn sqnr_serializes_inf_marker() {
        assert_eq!(serde_json::to_string(&Sqnr::Infinite).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&Sqnr::Db(30.5)).unwrap(), "30.5");
    }
}
