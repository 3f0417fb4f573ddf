use proptest::prelude::*;

use scr_core::analysis::{analyze, bench_decode, BenchRun};
use scr_core::net::{ConvLayerParams, Network};
use scr_core::pipeline::{
    decode_bytes, decode_traced, encode_traced, hyper_side, latent_shapes, round_trip_report, EncodeOptions, RateReport,
};
use scr_core::reference::{reference_model, reference_weights, synthetic_corpus, synthetic_image, ReferenceConfig};
use scr_core::{
    decode_image, encode_continuous, encode_image, Image, LatentTensor, MaskMode, ScrBitstream, ScrError,
    WeightContainer,
};

fn zeroed(l: &ConvLayerParams) -> ConvLayerParams {
    ConvLayerParams::new(
        l.kind,
        l.in_channels,
        l.out_channels,
        l.kernel_h,
        l.kernel_w,
        l.stride,
        l.padding,
        l.activation,
        vec![0.0; l.kernel().len()],
        vec![0.0; l.bias().len()],
    )
    .unwrap()
}

fn zero_net(n: &Network) -> Network {
    Network::new(n.layers().iter().map(zeroed).collect()).unwrap()
}

fn zero_model() -> WeightContainer {
    let w = reference_model();
    WeightContainer::new(
        zero_net(&w.encoder),
        zero_net(&w.decoder),
        zero_net(&w.hyper_encoder),
        zero_net(&w.hyper_decoder),
        zeroed(&w.importance_head),
        w.rate_vectors.clone(),
        w.hyper_sigma.clone(),
    )
    .unwrap()
}

fn mode_strategy() -> impl Strategy<Value = MaskMode> {
    prop_oneof![
        Just(MaskMode::Deterministic),
        any::<u64>().prop_map(MaskMode::Stochastic),
        Just(MaskMode::Baseline2d),
        Just(MaskMode::Full),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn latent_transport_is_lossless(
        seed in any::<u64>(),
        width in 8usize..80,
        height in 8usize..80,
        q in 1.0f64..=8.0,
        mode in mode_strategy(),
        zero_mean in any::<bool>(),
    ) {
        let w = reference_model();
        let img = synthetic_image(seed, width, height);
        let opts = EncodeOptions::new(q).with_mask_mode(mode).with_zero_mean(zero_mean);
        let enc = encode_traced(&img, &w, &opts).unwrap();
        let bytes = enc.bitstream.write().unwrap();
        let dec = decode_bytes(&bytes, &w).unwrap();
        prop_assert_eq!(&dec.z_symbols, &enc.z_symbols);
        prop_assert_eq!(&dec.mask, &enc.mask);
        prop_assert_eq!(&dec.y_symbols, &enc.y_symbols);
        prop_assert_eq!(dec.y_symbols_decoded, enc.mask.popcount() as u64);
        prop_assert_eq!((dec.image.width(), dec.image.height()), (width, height));
        // The coded values are exactly the quantized latent under the mask.
        let expected: Vec<i32> = enc.y_hat.data().iter().zip(enc.mask.bits())
            .filter(|(_, &m)| m).map(|(&v, _)| v as i32).collect();
        prop_assert_eq!(&dec.y_symbols, &expected);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = ScrBitstream::read(&bytes);
    }

    #[test]
    fn mutated_streams_are_rejected(pos in any::<prop::sample::Index>(), xor in 1u8..=255) {
        let w = reference_model();
        let img = synthetic_image(3, 40, 40);
        let bytes = encode_image(&img, &w, 2.0, MaskMode::Deterministic).unwrap().write().unwrap();
        let mut b = bytes.clone();
        b[pos.index(bytes.len())] ^= xor;
        prop_assert!(decode_bytes(&b, &w).is_err());
    }
}

#[test]
fn low_quality_uses_fewer_bits_and_elements() {
    let w = reference_model();
    for img in synthetic_corpus(40, 4, 64, 64) {
        let (lo, _) = round_trip_report(&img, &w, &EncodeOptions::new(1.0)).unwrap();
        let (hi, _) = round_trip_report(&img, &w, &EncodeOptions::new(8.0)).unwrap();
        assert!(lo.bpp < hi.bpp);
        assert!(lo.selection_ratio < hi.selection_ratio);
    }
}

#[test]
fn rate_comes_from_stored_bytes() {
    let w = reference_model();
    let img = synthetic_image(8, 72, 40);
    let (report, _) = round_trip_report(&img, &w, &EncodeOptions::new(5.0)).unwrap();
    let bytes = encode_image(&img, &w, 5.0, MaskMode::Deterministic)
        .unwrap()
        .write()
        .unwrap();
    assert_eq!(report.bits_total, bytes.len() as u64 * 8);
    assert_eq!(report.n_pixels, 72 * 40);
    assert_eq!(report.bpp, (bytes.len() * 8) as f64 / (72.0 * 40.0));
    assert_eq!(report.bits_total, report.bits_y + report.bits_z + report.bits_header);
    let again = RateReport::from_stored(&bytes, report.selection_ratio).unwrap();
    assert_eq!(again.bpp, report.bpp);
    let t = report.decode.unwrap();
    assert_eq!(
        t.total(),
        t.hyper_net + t.mask_gen + t.entropy_decode + t.reshape + t.decoder_net
    );
}

#[test]
fn integer_quality_endpoints_match() {
    let w = reference_model();
    let img = synthetic_image(12, 64, 48);
    for k in 1..=8 {
        let a = encode_continuous(&img, &w, k as f64).unwrap().write().unwrap();
        let b = encode_image(&img, &w, k as f64, MaskMode::Deterministic)
            .unwrap()
            .write()
            .unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn fractional_quality_is_carried_in_fixed_point() {
    let w = reference_model();
    let img = synthetic_image(13, 64, 64);
    let bs = encode_continuous(&img, &w, 3.8).unwrap();
    assert_eq!(bs.header.quality_fixed, 972);
    assert_eq!(bs.header.quality(), 3.796875);
    let enc = encode_traced(&img, &w, &EncodeOptions::new(3.8)).unwrap();
    let dec = decode_traced(&ScrBitstream::read(&bs.write().unwrap()).unwrap(), &w).unwrap();
    assert_eq!(enc.quality.value(), 3.796875);
    assert_eq!(dec.quality.value(), 3.796875);
    assert_eq!(dec.y_symbols, enc.y_symbols);
}

#[test]
fn empty_mask_decodes_from_zero_latent() {
    let w = reference_weights(&ReferenceConfig {
        importance_bias: -5.0,
        ..ReferenceConfig::default()
    })
    .unwrap();
    let img = synthetic_image(2, 48, 48);
    let enc = encode_traced(&img, &w, &EncodeOptions::new(1.0)).unwrap();
    assert_eq!(enc.mask.popcount(), 0);
    let dec = decode_bytes(&enc.bitstream.write().unwrap(), &w).unwrap();
    assert!(dec.y_symbols.is_empty());
    let (latent, _) = latent_shapes(&w, 48, 48).unwrap();
    let from_zero = Image::from_tensor(w.decoder.forward(&LatentTensor::zeros(latent)).unwrap()).unwrap();
    assert_eq!(dec.image, from_zero.cropped(48, 48).unwrap());
}

#[test]
fn zero_model_round_trips() {
    let w = zero_model();
    let img = synthetic_image(4, 50, 30);
    for mode in [
        MaskMode::Deterministic,
        MaskMode::Stochastic(5),
        MaskMode::Baseline2d,
        MaskMode::Full,
    ] {
        let bs = encode_image(&img, &w, 4.0, mode).unwrap();
        let out = decode_image(&ScrBitstream::read(&bs.write().unwrap()).unwrap(), &w).unwrap();
        assert_eq!((out.width(), out.height()), (50, 30));
        // Clip01 of a zero pre-activation.
        assert!(out.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn wrong_model_is_a_digest_error() {
    let w = reference_model();
    let other = reference_weights(&ReferenceConfig {
        seed: 99,
        ..ReferenceConfig::default()
    })
    .unwrap();
    let bs = encode_image(&synthetic_image(1, 32, 32), &w, 2.0, MaskMode::Deterministic).unwrap();
    assert_eq!(decode_image(&bs, &other).unwrap_err(), ScrError::DigestMismatch);
}

#[test]
fn quality_out_of_range() {
    let w = reference_model();
    let img = synthetic_image(1, 32, 32);
    for q in [0.5, 8.01, f64::NAN] {
        assert!(matches!(
            encode_image(&img, &w, q, MaskMode::Deterministic),
            Err(ScrError::QualityOutOfRange { .. })
        ));
    }
}

#[test]
fn hyper_outputs_are_well_formed() {
    let w = reference_model();
    for seed in 0..5 {
        let img = synthetic_image(seed, 96, 64);
        let t = encode_traced(&img, &w, &EncodeOptions::new(1.0)).unwrap();
        let z = LatentTensor::new(
            t.bitstream.header.hyper,
            t.z_symbols.iter().map(|&v| f64::from(v)).collect(),
        )
        .unwrap();
        let side = hyper_side(&w, &z).unwrap();
        assert_eq!(side.importance.shape(), t.y.shape());
        assert_eq!(side.sigma.shape(), t.y.shape());
        assert!(side.sigma.data().iter().all(|&s| s >= scr_core::entropy::SIGMA_FLOOR));
    }
}

#[test]
fn analytics_tables() {
    let w = reference_model();
    let corpus = synthetic_corpus(100, 4, 64, 64);
    let a = analyze(&corpus, &w).unwrap();
    assert_eq!(a.rates.len(), 4 * 8);
    assert_eq!(a.reuse.len(), 8 * 9 / 2);
    for r in a.reuse.iter().filter(|r| r.q_lo == r.q_hi) {
        assert_eq!(r.reuse, 1.0);
    }
    assert!(a.rates.iter().all(|r| r.selection_ratio > 0.0 && r.bpp > 0.0));
    for c in &a.correlations {
        assert!(c.ratio_bpp_r > 0.9, "image {} r {}", c.image, c.ratio_bpp_r);
    }
    assert_eq!(a.manifest, w.manifest());
}

#[test]
fn bench_reports_both_runs() {
    let w = reference_model();
    let corpus = synthetic_corpus(200, 2, 64, 64);
    let rows = bench_decode(&corpus, &w, &[1.0, 8.0], 10).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].run, BenchRun::Selective);
    assert_eq!(rows[1].run, BenchRun::FullMask);
    assert!(rows.iter().all(|r| r.repetitions == 10 && r.images == 2));
    assert!(rows[0].symbols < rows[2].symbols);
    assert_eq!(rows[1].symbols, rows[3].symbols);
    // Fewer symbols at the low level: a large gap, so timing noise cannot
    // reverse it.
    assert!(rows[0].entropy_decode < rows[2].entropy_decode);
    assert!(rows[0].entropy_decode < rows[1].entropy_decode);
}
