use fp8::tensorio::{
    decode, encode, read_sidecar, read_tensor, sidecar_path, write_file, write_sidecar, write_tensor, Dtype,
    Sidecar, TensorFile,
};
use fp8::{Error, Fp8Format, Fp8Tensor, Granularity, ScaleFactor, ScaleSet, Tensor};
use proptest::prelude::*;

fn bits(t: &Tensor) -> Vec<u32> {
    t.data().iter().map(|x| x.to_bits()).collect()
}

#[test]
fn binary32_roundtrip_keeps_nan_payloads_and_negative_zero() {
    let data = vec![
        -0.0,
        0.0,
        f32::from_bits(0x7FC0_1234),
        f32::from_bits(0xFF80_0001),
        f32::INFINITY,
        f32::NEG_INFINITY,
        f32::MIN_POSITIVE / 8.0,
        -3.25,
    ];
    let t = Tensor::new(vec![2, 4], data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.fpt");
    write_tensor(&path, &t, Dtype::F32).unwrap();
    match read_tensor(&path).unwrap() {
        TensorFile::F32(back) => {
            assert_eq!(back.shape(), &[2, 4]);
            assert_eq!(bits(&back), bits(&t));
        }
        other => panic!("wrong dtype {:?}", other.dtype()),
    }
}

#[test]
fn fp8_roundtrip_covers_every_pattern() {
    let dir = tempfile::tempdir().unwrap();
    for f in [Fp8Format::E4M3, Fp8Format::E5M2] {
        let t = Fp8Tensor::new(vec![16, 16], f, (0..=255u8).collect()).unwrap();
        let path = dir.path().join(format!("{}.fpt", f.name()));
        write_file(&path, &TensorFile::Fp8(t.clone())).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.dtype(), Dtype::for_format(f));
        assert_eq!(back, TensorFile::Fp8(t));
    }
}

#[test]
fn writing_fp8_requires_representable_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.fpt");
    let ok = Tensor::from_vec(vec![448.0, -0.0, 0.001953125, f32::NAN]).unwrap();
    write_tensor(&path, &ok, Dtype::E4M3).unwrap();
    let back = read_tensor(&path).unwrap().into_f32();
    assert_eq!(back.data()[0], 448.0);
    assert_eq!(back.data()[1].to_bits(), (-0.0f32).to_bits());
    assert!(back.data()[3].is_nan());
    let bad = Tensor::from_vec(vec![0.1]).unwrap();
    assert!(matches!(write_tensor(&path, &bad, Dtype::E4M3), Err(Error::NotRepresentable { .. })));
    let inf = Tensor::from_vec(vec![f32::INFINITY]).unwrap();
    assert!(write_tensor(&path, &inf, Dtype::E4M3).is_err());
    write_tensor(&path, &inf, Dtype::E5M2).unwrap();
}

#[test]
fn header_layout() {
    let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
    let bytes = encode(&TensorFile::F32(t)).unwrap();
    assert_eq!(bytes.len(), 28);
    assert_eq!(&bytes[..8], b"FPT1\x00\x01\x00\x00");
    assert_eq!(&bytes[8..16], &3u64.to_le_bytes());
    assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
}

#[test]
fn corrupted_files_give_named_errors() {
    let t = Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
    let good = encode(&TensorFile::F32(t)).unwrap();

    for i in 0..4 {
        let mut b = good.clone();
        b[i] ^= 0x20;
        assert!(matches!(decode(&b), Err(Error::BadMagic(_))), "byte {i}");
    }
    let mut b = good.clone();
    b[4] = 7;
    assert!(matches!(decode(&b), Err(Error::BadDtype(7))));
    let mut b = good.clone();
    b[5] = 0;
    assert!(matches!(decode(&b), Err(Error::RankOutOfRange(0))));
    let mut b = good.clone();
    b[5] = 9;
    assert!(matches!(decode(&b), Err(Error::RankOutOfRange(9))));
    let mut b = good.clone();
    b[7] = 1;
    assert!(matches!(decode(&b), Err(Error::BadReserved([0, 1]))));
    assert!(matches!(decode(&good[..3]), Err(Error::TruncatedHeader("magic"))));
    assert!(matches!(decode(&good[..20]), Err(Error::TruncatedHeader("dims"))));
    for cut in 1..24 {
        let b = &good[..good.len() - cut];
        assert!(
            matches!(decode(b), Err(Error::TruncatedPayload { expected: 24, got }) if got == 24 - cut),
            "cut {cut}"
        );
    }
    let mut b = good.clone();
    b.push(0);
    assert!(matches!(decode(&b), Err(Error::TrailingBytes(1))));
    let mut b = good.clone();
    b[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
    assert!(matches!(decode(&b), Err(Error::TooManyElements(_))));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_tensor(dir.path().join("nope")), Err(Error::Io { .. })));
}

#[test]
fn sidecar_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.fpt");
    assert_eq!(sidecar_path(&path), dir.path().join("w.fpt.meta.json"));

    let per_tensor = Sidecar::new(Fp8Format::E5M2, &ScaleSet::per_tensor(ScaleFactor::free(3.5).unwrap()));
    write_sidecar(&path, &per_tensor).unwrap();
    assert_eq!(read_sidecar(&path).unwrap(), per_tensor);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
    assert_eq!(json["format"], "e5m2");
    assert_eq!(json["scale"], 3.5);
    assert_eq!(json["granularity"], "tensor");

    let scales = vec![ScaleFactor::free(2.0).unwrap(), ScaleFactor::free(0.5).unwrap()];
    let per_channel = Sidecar::new(Fp8Format::E4M3, &ScaleSet::per_channel(1, scales));
    write_sidecar(&path, &per_channel).unwrap();
    let back = read_sidecar(&path).unwrap();
    assert_eq!(back, per_channel);
    assert_eq!(back.axis, Some(1));
    assert_eq!(back.per_channel_scales, Some(vec![2.0, 0.5]));
    assert_eq!(
        ScaleSet::per_channel(1, vec![ScaleFactor::ONE; 2]).granularity,
        Granularity::PerChannel { axis: 1 }
    );

    std::fs::write(sidecar_path(&path), "{not json").unwrap();
    assert!(matches!(read_sidecar(&path), Err(Error::BadSidecar(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn arbitrary_binary32_tensors_roundtrip(
        (shape, raw) in prop::collection::vec(1usize..5, 1..=4).prop_flat_map(|shape| {
            let n: usize = shape.iter().product();
            (Just(shape), prop::collection::vec(any::<u32>(), n))
        }),
    ) {
        let t = Tensor::new(shape.clone(), raw.into_iter().map(f32::from_bits).collect()).unwrap();
        let back = decode(&encode(&TensorFile::F32(t.clone())).unwrap()).unwrap();
        prop_assert_eq!(back.shape(), &shape[..]);
        prop_assert_eq!(bits(&back.into_f32()), bits(&t));
    }
}
