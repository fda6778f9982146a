//! The `fp8` command line tool. JSON goes to stdout, diagnostics to stderr.
//! Exit codes: 0 success, 1 data error, 2 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::calibrate::{calibrate, calibrate_best_of, percentile_of_sorted, CalibrationMethod};
use crate::convert::{round_to_fp8, OverflowMode, RoundingMode};
use crate::format::{enumerate, Fp8Format};
use crate::quantsim::{bias_sweep, fake_quantize, quantize_to_fp8, QuantConfig, ScaleSource, SweepMetric};
use crate::scaling::{Granularity, ScaleFactor, ScaleSet};
use crate::tensorio::{read_tensor, write_file, write_sidecar, Sidecar, TensorFile};
use crate::Error;

pub const DEFAULT_PERCENTILE: f64 = 99.99;

#[derive(Debug, Parser)]
#[command(name = "fp8", version, about = "Inspect, convert and fake-quantize FP8 (E4M3/E5M2) data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    E4m3,
    E5m2,
}

impl From<FormatArg> for Fp8Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::E4m3 => Fp8Format::E4M3,
            FormatArg::E5m2 => Fp8Format::E5M2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoundArg {
    Rne,
    Stochastic,
    TowardZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OverflowArg {
    Saturate,
    Nonsat,
}

impl From<OverflowArg> for OverflowMode {
    fn from(o: OverflowArg) -> Self {
        match o {
            OverflowArg::Saturate => OverflowMode::Saturate,
            OverflowArg::Nonsat => OverflowMode::NonSaturating,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Max,
    Percentile,
    Mse,
    /// Best of max, percentile and mse by tensor MSE.
    Best,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Mse,
    MaxAbsErr,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ConversionArgs {
    #[arg(long, value_enum, default_value = "e4m3")]
    pub format: FormatArg,
    #[arg(long, value_enum, default_value = "rne")]
    pub round: RoundArg,
    /// Seed for stochastic rounding.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "saturate")]
    pub overflow: OverflowArg,
}

impl ConversionArgs {
    fn rounding(&self) -> RoundingMode {
        match self.round {
            RoundArg::Rne => RoundingMode::NearestEven,
            RoundArg::Stochastic => RoundingMode::stochastic(self.seed),
            RoundArg::TowardZero => RoundingMode::TowardZero,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// All 256 patterns of a format plus its limits.
    Table {
        #[arg(long, value_enum)]
        format: FormatArg,
    },
    /// Convert one value.
    Convert {
        /// Decimal, hex-float (0x1.cp8), inf or nan.
        #[arg(allow_hyphen_values = true)]
        value: String,
        #[command(flatten)]
        conv: ConversionArgs,
    },
    /// Fake-quantize an FPT1 tensor file.
    Quantize {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        conv: ConversionArgs,
        /// auto:max, auto:percentile, auto:mse, auto:best, fixed:<f> or none.
        #[arg(long, default_value = "auto:max")]
        scale: String,
        /// tensor or channel:<axis>.
        #[arg(long, default_value = "tensor")]
        granularity: String,
        #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
        percentile: f64,
        /// Write raw FP8 bytes plus a .meta.json sidecar instead of binary32.
        #[arg(long)]
        emit_fp8: bool,
    },
    /// Choose scale factors for an FPT1 tensor file.
    Calibrate {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "e4m3")]
        format: FormatArg,
        #[arg(long, value_enum, default_value = "max")]
        method: MethodArg,
        #[arg(long, default_value = "tensor")]
        granularity: String,
        #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
        percentile: f64,
        /// Include the MSE search trace.
        #[arg(long)]
        trace: bool,
    },
    /// Error of an unscaled cast at each exponent bias in lo..=hi.
    SweepBias {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "e4m3")]
        format: FormatArg,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        lo: i32,
        #[arg(long, default_value_t = 15, allow_hyphen_values = true)]
        hi: i32,
        #[arg(long, value_enum, default_value = "mse")]
        metric: MetricArg,
        /// Also write bias,value rows to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Magnitude statistics of an FPT1 tensor file.
    Stats { input: PathBuf },
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Usage(m) => Failure::Usage(m),
            other => Failure::Data(other),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli.command) {
        Ok(doc) => {
            let text = serde_json::to_string_pretty(&doc).expect("json output");
            if writeln!(out, "{text}").is_err() {
                return 1;
            }
            0
        }
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

/// JSON has no NaN or infinity; those are written as strings.
pub fn json_f32(x: f32) -> Value {
    json_f64(x as f64)
}

fn json_f64(x: f64) -> Value {
    if x.is_nan() {
        json!("nan")
    } else if x.is_infinite() {
        json!(if x > 0.0 { "inf" } else { "-inf" })
    } else {
        json!(x)
    }
}

pub fn parse_value(s: &str) -> Result<f32, Error> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let unsigned = lower.trim_start_matches(['+', '-']);
    if unsigned.starts_with("0x") {
        return hexf_parse::parse_hexf32(t, false).map_err(|e| Error::Usage(format!("bad hex-float {s:?}: {e}")));
    }
    lower.parse::<f32>().map_err(|_| Error::Usage(format!("cannot parse {s:?} as a number")))
}

fn parse_scale_spec(spec: &str, percentile: f64, granularity: Granularity) -> Result<ScaleSource, Error> {
    let method = |m: CalibrationMethod| ScaleSource::Auto(m, granularity);
    Ok(match spec {
        "none" => ScaleSource::None,
        "auto:max" => method(CalibrationMethod::Max),
        "auto:percentile" => method(CalibrationMethod::Percentile(percentile)),
        "auto:mse" => method(CalibrationMethod::Mse),
        "auto:best" => ScaleSource::BestOf(all_methods(percentile), granularity),
        _ => {
            let v = spec
                .strip_prefix("fixed:")
                .ok_or_else(|| Error::Usage(format!("bad --scale {spec:?}")))?;
            let v = parse_value(v)?;
            let s = ScaleFactor::free(v).map_err(|_| Error::Usage(format!("fixed scale {v} must be positive and finite")))?;
            ScaleSource::Explicit(ScaleSet::per_tensor(s))
        }
    })
}

fn all_methods(percentile: f64) -> Vec<CalibrationMethod> {
    vec![
        CalibrationMethod::Max,
        CalibrationMethod::Percentile(percentile),
        CalibrationMethod::Mse,
    ]
}

fn check_percentile(p: f64) -> Result<(), Error> {
    CalibrationMethod::Percentile(p)
        .validate()
        .map_err(|e| Error::Usage(e.to_string()))
}

fn execute(cmd: Command) -> Result<Value, Failure> {
    match cmd {
        Command::Table { format } => Ok(cmd_table(format.into())),
        Command::Convert { value, conv } => {
            let x = parse_value(&value)?;
            Ok(cmd_convert(x, conv.format.into(), &mut conv.rounding(), conv.overflow.into()))
        }
        Command::Quantize {
            input,
            output,
            conv,
            scale,
            granularity,
            percentile,
            emit_fp8,
        } => {
            check_percentile(percentile)?;
            let g: Granularity = granularity.parse()?;
            let cfg = QuantConfig {
                format: conv.format.into(),
                round: conv.rounding(),
                overflow: conv.overflow.into(),
                scale_source: parse_scale_spec(&scale, percentile, g)?,
            };
            let t = read_tensor(&input)?.into_f32();
            let report = if emit_fp8 {
                let (q, report) = quantize_to_fp8(&t, &cfg)?;
                write_file(&output, &TensorFile::Fp8(q))?;
                write_sidecar(&output, &Sidecar::new(cfg.format, &report.scale_set_used))?;
                report
            } else {
                let (q, report) = fake_quantize(&t, &cfg)?;
                write_file(&output, &TensorFile::F32(q))?;
                report
            };
            Ok(serde_json::to_value(report).expect("report serializes"))
        }
        Command::Calibrate {
            input,
            format,
            method,
            granularity,
            percentile,
            trace,
        } => {
            check_percentile(percentile)?;
            let g: Granularity = granularity.parse()?;
            let t = read_tensor(&input)?.into_f32();
            let f = format.into();
            let mut r = match method {
                MethodArg::Max => calibrate(&t, f, CalibrationMethod::Max, g)?,
                MethodArg::Percentile => calibrate(&t, f, CalibrationMethod::Percentile(percentile), g)?,
                MethodArg::Mse => calibrate(&t, f, CalibrationMethod::Mse, g)?,
                MethodArg::Best => calibrate_best_of(&t, f, &all_methods(percentile), g)?,
            };
            if !trace {
                r.search_trace = None;
            }
            Ok(serde_json::to_value(r).expect("calibration serializes"))
        }
        Command::SweepBias {
            input,
            format,
            lo,
            hi,
            metric,
            csv,
        } => {
            if lo > hi {
                return Err(Failure::Usage(format!("--lo {lo} is greater than --hi {hi}")));
            }
            let t = read_tensor(&input)?.into_f32();
            let metric = match metric {
                MetricArg::Mse => SweepMetric::Mse,
                MetricArg::MaxAbsErr => SweepMetric::MaxAbsErr,
            };
            let points = bias_sweep(&t, format.into(), lo, hi, metric)?;
            if let Some(path) = csv {
                write_sweep_csv(&path, &points)?;
            }
            Ok(json!({
                "format": Fp8Format::from(format).name(),
                "metric": metric,
                "points": points.iter().map(|p| json!({"bias": p.bias, "value": json_f64(p.value)})).collect::<Vec<_>>(),
            }))
        }
        Command::Stats { input } => {
            let t = read_tensor(&input)?.into_f32();
            Ok(cmd_stats(t.data()))
        }
    }
}

fn write_sweep_csv(path: &std::path::Path, points: &[crate::quantsim::BiasPoint]) -> Result<(), Error> {
    let io = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    w.write_record(["bias", "value"]).map_err(|e| io(e.into()))?;
    for p in points {
        w.write_record([p.bias.to_string(), p.value.to_string()])
            .map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

pub fn cmd_table(f: Fp8Format) -> Value {
    let limits = f.limits();
    let entries: Vec<Value> = enumerate(f)
        .into_iter()
        .map(|e| {
            json!({
                "bits": format!("0x{:02X}", e.bits),
                "value": json_f32(e.value),
                "class": e.class.kind,
                "sign": e.class.sign,
            })
        })
        .collect();
    json!({
        "format": f.name(),
        "exponent_bits": f.exponent_bits,
        "mantissa_bits": f.mantissa_bits,
        "binades": f.binade_count(),
        "limits": {
            "exponent_bias": limits.exponent_bias,
            "max_normal": limits.max_normal,
            "min_normal": limits.min_normal,
            "max_subnormal": limits.max_subnormal,
            "min_subnormal": limits.min_subnormal,
        },
        "entries": entries,
    })
}

pub fn cmd_convert(x: f32, f: Fp8Format, round: &mut RoundingMode, overflow: OverflowMode) -> Value {
    let c = round_to_fp8(x, f, round.next_rounding(), overflow);
    json!({
        "input": json_f32(x),
        "format": f.name(),
        "bits_hex": format!("0x{:02X}", c.value.bits),
        "decoded": json_f32(c.value.decode()),
        "class": c.value.classify().kind,
        "exact": c.exact,
        "overflowed": c.overflowed,
    })
}

pub fn cmd_stats(data: &[f32]) -> Value {
    let mut mags: Vec<f32> = data.iter().filter(|x| x.is_finite()).map(|x| x.abs()).collect();
    mags.sort_by(f32::total_cmp);
    let mut histogram: BTreeMap<i32, usize> = BTreeMap::new();
    for &m in mags.iter().filter(|&&m| m > 0.0) {
        *histogram.entry((m as f64).log2().floor() as i32).or_default() += 1;
    }
    let percentiles: serde_json::Map<String, Value> = if mags.is_empty() {
        serde_json::Map::new()
    } else {
        [50.0, 90.0, 99.0, 99.9, 99.99, 100.0]
            .iter()
            .map(|&p| (p.to_string(), json_f32(percentile_of_sorted(&mags, p))))
            .collect()
    };
    json!({
        "count": data.len(),
        "finite": mags.len(),
        "amax": mags.last().copied().map_or(Value::Null, json_f32),
        "percentiles": percentiles,
        "log2_histogram": histogram.iter().map(|(k, v)| json!({"log2": k, "count": v})).collect::<Vec<_>>(),
        "specials": {
            "nan": data.iter().filter(|x| x.is_nan()).count(),
            "pos_inf": data.iter().filter(|&&x| x == f32::INFINITY).count(),
            "neg_inf": data.iter().filter(|&&x| x == f32::NEG_INFINITY).count(),
            "zero": data.iter().filter(|&&x| x == 0.0).count(),
        },
    })
}
