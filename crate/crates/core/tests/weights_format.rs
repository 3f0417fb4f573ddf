use scr_core::reference::{reference_model, reference_weights, ReferenceConfig};
use scr_core::weights::{WEIGHTS_MAGIC, WEIGHTS_VERSION};
use scr_core::{ScrError, WeightContainer};

#[test]
fn save_load_is_exact() {
    let w = reference_model();
    let bytes = w.to_bytes();
    let back = WeightContainer::from_bytes(&bytes).unwrap();
    assert_eq!(back, w);
    assert_eq!(back.id(), w.id());
    assert_eq!(back.to_bytes(), bytes);
}

#[test]
fn header_fields() {
    let bytes = reference_model().to_bytes();
    assert_eq!(bytes[..4], WEIGHTS_MAGIC);
    assert_eq!(bytes[4], WEIGHTS_VERSION);
    assert_eq!(bytes[5], 5);
    assert_eq!(&bytes[6..14], b"\x07encoder");
}

#[test]
fn any_corrupted_byte_fails_the_digest() {
    let bytes = reference_model().to_bytes();
    let step = bytes.len() / 400;
    for pos in (0..bytes.len()).step_by(step).chain(bytes.len() - 16..bytes.len()) {
        let mut b = bytes.clone();
        b[pos] ^= 0x20;
        assert_eq!(
            WeightContainer::from_bytes(&b),
            Err(ScrError::DigestMismatch),
            "byte {pos}"
        );
    }
    assert!(WeightContainer::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    assert!(WeightContainer::from_bytes(&bytes[..10]).is_err());
}

#[test]
fn manifest_matches_recount() {
    let w = reference_model();
    let mut total = 0;
    for net in [&w.encoder, &w.decoder, &w.hyper_encoder, &w.hyper_decoder] {
        for l in net.layers() {
            total += l.kernel().len() + l.bias().len();
        }
    }
    let head = w.importance_head.kernel().len() + w.importance_head.bias().len();
    total += head;
    let vectors: usize = [w.rate_vectors.qv(), w.rate_vectors.iqv(), w.rate_vectors.gamma()]
        .iter()
        .flat_map(|f| f.iter())
        .map(|v| v.len())
        .sum();
    total += vectors + w.hyper_sigma.len();

    let m = w.manifest();
    assert_eq!(m.total(), total);
    assert_eq!(m.selective_overhead(), head + vectors);
    // The selective parts stay a small share of the model.
    assert!((m.selective_overhead() as f64) < 0.05 * m.total() as f64);
}

#[test]
fn different_seeds_give_different_ids() {
    let other = reference_weights(&ReferenceConfig {
        seed: 1,
        ..ReferenceConfig::default()
    })
    .unwrap();
    assert_ne!(other.id(), reference_model().id());
    assert_eq!(reference_model().id(), reference_model().id());
}
