//! Committed golden files. Set `SCR_BLESS=1` to rewrite them.

use std::path::PathBuf;

use scr_core::entropy::{discretize_cdf, DEFAULT_PRECISION};
use scr_core::pipeline::{decode_traced, encode_traced, EncodeOptions};
use scr_core::range_coder::{decode, encode};
use scr_core::reference::{golden_image, reference_model, GOLDEN_QUALITY};
use scr_core::{ScrBitstream, WeightContainer};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn check_or_bless(name: &str, actual: &[u8]) {
    let path = fixture(name);
    if std::env::var_os("SCR_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from the committed fixture");
}

fn range_coder_case() -> (Vec<i32>, Vec<scr_core::entropy::DiscretizedCdf>) {
    let n = 300;
    let cdfs = (0..n)
        .map(|i| {
            let mu = ((i * 37) % 23) as f64 / 4.0 - 2.5;
            let sigma = 0.05 + ((i * 11) % 17) as f64 * 0.6;
            discretize_cdf(mu, sigma, DEFAULT_PRECISION)
        })
        .collect();
    // Mostly near the mean, with a few escapes.
    let symbols = (0..n)
        .map(|i| match i % 50 {
            7 => 40_000,
            19 => -123_456,
            _ => (((i * 29) % 13) - 6) / 2,
        })
        .collect();
    (symbols, cdfs)
}

#[test]
fn reference_container_is_reproducible() {
    let bytes = reference_model().to_bytes();
    check_or_bless("reference.scrw", &bytes);
    let loaded = WeightContainer::from_bytes(&std::fs::read(fixture("reference.scrw")).unwrap()).unwrap();
    assert_eq!(loaded, reference_model());
}

#[test]
fn golden_bitstream() {
    let w = reference_model();
    let trace = encode_traced(&golden_image(), &w, &EncodeOptions::new(GOLDEN_QUALITY)).unwrap();
    check_or_bless("golden_q4.scr", &trace.bitstream.write().unwrap());

    let stored = std::fs::read(fixture("golden_q4.scr")).unwrap();
    let decoded = decode_traced(&ScrBitstream::read(&stored).unwrap(), &w).unwrap();
    assert_eq!(decoded.y_symbols, trace.y_symbols);
    let recon: Vec<u8> = decoded
        .image
        .data()
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    check_or_bless("golden_q4_recon.f32", &recon);
}

#[test]
fn golden_reconstruction_within_tolerance() {
    let w = reference_model();
    let stored = std::fs::read(fixture("golden_q4.scr")).unwrap();
    let image = decode_traced(&ScrBitstream::read(&stored).unwrap(), &w).unwrap().image;
    let expected: Vec<f32> = std::fs::read(fixture("golden_q4_recon.f32"))
        .unwrap()
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    assert_eq!((image.width(), image.height()), (80, 56));
    assert_eq!(expected.len(), image.data().len());
    for (a, &b) in image.data().iter().zip(&expected) {
        assert!((a - f64::from(b)).abs() <= 1e-3);
    }
}

#[test]
fn golden_range_coder_bytes() {
    let (symbols, cdfs) = range_coder_case();
    let stream = encode(&symbols, &cdfs).unwrap();
    check_or_bless("range_coder.bin", stream.bytes());
    assert_eq!(decode(&stream, &cdfs).unwrap(), symbols);
}
