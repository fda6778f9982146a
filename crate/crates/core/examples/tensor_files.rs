//! Writes a tensor as binary32 FPT1, quantizes it to raw E4M3 bytes with a
//! sidecar holding the scales, and reads both back.
//!
//!     cargo run --example tensor_files

use fp8::quantsim::quantize_to_fp8;
use fp8::scaling::dequantize;
use fp8::tensorio::{read_sidecar, read_tensor, sidecar_path, write_file, write_sidecar, write_tensor, Dtype, Sidecar, TensorFile};
use fp8::{CalibrationMethod, Granularity, QuantConfig, ScaleFactor, ScaleSource, Tensor};

fn main() -> Result<(), fp8::Error> {
    let dir = std::env::temp_dir().join("fp8-tensor-files-example");
    std::fs::create_dir_all(&dir).map_err(|source| fp8::Error::Io { path: dir.clone(), source })?;
    let data: Vec<f32> = (0..12).map(|i| (i as f32 - 5.5) * 0.37).collect();
    let t = Tensor::new(vec![3, 4], data)?;

    let f32_path = dir.join("x.fpt");
    write_tensor(&f32_path, &t, Dtype::F32)?;
    let bytes = std::fs::metadata(&f32_path).map(|m| m.len()).unwrap_or(0);
    println!("wrote {} ({bytes} bytes)", f32_path.display());

    let cfg = QuantConfig::for_role(fp8::quantsim::TensorRole::Weight)
        .with_scale_source(ScaleSource::Auto(CalibrationMethod::Max, Granularity::PerChannel { axis: 0 }));
    let (q, report) = quantize_to_fp8(&read_tensor(&f32_path)?.into_f32(), &cfg)?;
    let fp8_path = dir.join("x.e4m3.fpt");
    write_file(&fp8_path, &TensorFile::Fp8(q))?;
    write_sidecar(&fp8_path, &Sidecar::new(cfg.format, &report.scale_set_used))?;
    println!("wrote {} and {}", fp8_path.display(), sidecar_path(&fp8_path).display());

    let meta = read_sidecar(&fp8_path)?;
    let TensorFile::Fp8(back) = read_tensor(&fp8_path)? else {
        unreachable!("written as fp8")
    };
    let scales = meta.per_channel_scales.unwrap_or_default();
    for (i, v) in back.values().enumerate() {
        let s = ScaleFactor::free(scales[i / 4])?;
        println!("  {:>7.4} -> 0x{:02X} -> {:>7.4}", t.data()[i], v.bits, dequantize(v, s));
    }
    Ok(())
}
