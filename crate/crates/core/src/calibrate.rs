//! Scale selection from tensor statistics: max, percentile and MSE search.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::convert::{round_to_fp8, OverflowMode, Rounding};
use crate::format::Fp8Format;
use crate::scaling::{dequantize_with_reciprocal, scale_for_amax, Granularity, ScaleConstraint, ScaleFactor, ScaleSet};
use crate::tensor::Tensor;
use crate::Error;

/// Number of quarter-binade steps searched above the max-calibrated scale.
pub const MSE_SEARCH_STEPS: i32 = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationMethod {
    Max,
    /// Percentile of finite magnitudes, `p` in `(0, 100]`.
    Percentile(f64),
    Mse,
}

impl CalibrationMethod {
    pub fn validate(&self) -> Result<(), Error> {
        match *self {
            CalibrationMethod::Percentile(p) if !(p > 0.0 && p <= 100.0) => Err(Error::InvalidPercentile(p)),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            CalibrationMethod::Max => "max".into(),
            CalibrationMethod::Percentile(p) => format!("percentile({p})"),
            CalibrationMethod::Mse => "mse".into(),
        }
    }
}

impl Serialize for CalibrationMethod {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

/// One evaluated candidate of an MSE search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub channel: usize,
    pub scale: f32,
    /// Mean squared quantization error of the slice at this scale.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub method: CalibrationMethod,
    pub scale_set: ScaleSet,
    /// Fraction of finite elements whose scaled magnitude exceeds `max_normal`.
    pub clipped_fraction: f64,
    /// Mean squared error of fake quantization (nearest-even, saturating)
    /// with the chosen scales, over all finite elements.
    pub mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_trace: Option<Vec<TracePoint>>,
}

/// Squared error of quantizing `values` at scale `s`, summed in f64 in
/// slice order.
pub fn slice_sse(values: &[f32], s: ScaleFactor, f: Fp8Format) -> f64 {
    let inv = s.reciprocal();
    values
        .iter()
        .map(|&x| {
            let q = round_to_fp8(x * s.value, f, Rounding::NearestEven, OverflowMode::Saturate).value;
            let d = x as f64 - dequantize_with_reciprocal(q, inv) as f64;
            d * d
        })
        .sum()
}

/// Linearly interpolated percentile of the magnitudes in `sorted_abs`
/// (ascending, finite, non-empty).
pub fn percentile_of_sorted(sorted_abs: &[f32], p: f64) -> f32 {
    let pos = p / 100.0 * (sorted_abs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted_abs.len() {
        return sorted_abs[lo.min(sorted_abs.len() - 1)];
    }
    let a = sorted_abs[lo] as f64;
    let b = sorted_abs[lo + 1] as f64;
    (a + frac * (b - a)) as f32
}

struct SliceOutcome {
    scale: ScaleFactor,
    clipped: usize,
    sse: f64,
    count: usize,
    trace: Vec<TracePoint>,
}

fn amax(values: &[f32]) -> f32 {
    values.iter().fold(0.0f32, |m, x| m.max(x.abs()))
}

fn calibrate_slice(channel: usize, values: &[f32], f: Fp8Format, method: CalibrationMethod) -> SliceOutcome {
    let (scale, trace) = match method {
        CalibrationMethod::Max => (scale_for_amax(amax(values), f, ScaleConstraint::Free), Vec::new()),
        CalibrationMethod::Percentile(p) => {
            let mut sorted: Vec<f32> = values.iter().map(|x| x.abs()).collect();
            sorted.sort_by(f32::total_cmp);
            let clip = percentile_of_sorted(&sorted, p);
            (scale_for_amax(clip, f, ScaleConstraint::Free), Vec::new())
        }
        CalibrationMethod::Mse => {
            let n = values.len() as f64;
            let base = scale_for_amax(amax(values), f, ScaleConstraint::Free).value as f64;
            let mut best: Option<(ScaleFactor, f64)> = None;
            let mut trace = Vec::with_capacity(MSE_SEARCH_STEPS as usize + 1);
            for k in 0..=MSE_SEARCH_STEPS {
                let v = (base * 2f64.powf(k as f64 / 4.0)) as f32;
                let Ok(s) = ScaleFactor::free(v) else { break };
                let objective = slice_sse(values, s, f) / n;
                trace.push(TracePoint {
                    channel,
                    scale: s.value,
                    objective,
                });
                // ties go to the larger scale, which comes later
                if best.is_none_or(|(_, b)| objective <= b) {
                    best = Some((s, objective));
                }
            }
            (best.expect("at least one candidate").0, trace)
        }
    };
    let max = f.max_normal();
    SliceOutcome {
        scale,
        clipped: values.iter().filter(|&&x| (x * scale.value).abs() > max).count(),
        sse: slice_sse(values, scale, f),
        count: values.len(),
        trace,
    }
}

/// Finite elements of each calibration unit.
fn finite_slices(t: &Tensor, granularity: Granularity) -> Result<Vec<Vec<f32>>, Error> {
    let slices: Vec<Vec<f32>> = match granularity {
        Granularity::PerTensor => vec![t.data().iter().copied().filter(|x| x.is_finite()).collect()],
        Granularity::PerChannel { axis } => {
            let layout = t.layout(axis)?;
            (0..layout.extent)
                .map(|c| t.channel(layout, c).filter(|x| x.is_finite()).collect())
                .collect()
        }
    };
    if let Some(channel) = slices.iter().position(|s| s.is_empty()) {
        return Err(Error::EmptySlice { channel });
    }
    Ok(slices)
}

pub fn calibrate(
    t: &Tensor,
    f: Fp8Format,
    method: CalibrationMethod,
    granularity: Granularity,
) -> Result<CalibrationResult, Error> {
    method.validate()?;
    let slices = finite_slices(t, granularity)?;
    let outcomes: Vec<SliceOutcome> = slices
        .par_iter()
        .enumerate()
        .map(|(c, values)| calibrate_slice(c, values, f, method))
        .collect();

    let total: usize = outcomes.iter().map(|o| o.count).sum();
    let clipped: usize = outcomes.iter().map(|o| o.clipped).sum();
    let sse: f64 = outcomes.iter().map(|o| o.sse).sum();
    let search_trace = (method == CalibrationMethod::Mse).then(|| outcomes.iter().flat_map(|o| o.trace.iter().copied()).collect());
    let scales = outcomes.into_iter().map(|o| o.scale).collect();
    Ok(CalibrationResult {
        method,
        scale_set: ScaleSet { granularity, scales },
        clipped_fraction: clipped as f64 / total as f64,
        mse: sse / total as f64,
        search_trace,
    })
}

/// Runs every method and keeps the one with the lowest tensor MSE; the
/// earliest method wins ties.
pub fn calibrate_best_of(
    t: &Tensor,
    f: Fp8Format,
    methods: &[CalibrationMethod],
    granularity: Granularity,
) -> Result<CalibrationResult, Error> {
    let mut best: Option<CalibrationResult> = None;
    for &method in methods {
        let r = calibrate(t, f, method, granularity)?;
        if best.as_ref().is_none_or(|b| r.mse < b.mse) {
            best = Some(r);
        }
    }
    best.ok_or(Error::NoMethods)
}
