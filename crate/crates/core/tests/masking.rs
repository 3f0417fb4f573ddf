use proptest::prelude::*;

use scr_core::entropy::masked_params;
use scr_core::mask::{adjust, binarize, generate_mask, selection_stats, stochastic_binarize};
use scr_core::tensor::select;
use scr_core::{BinaryMask, ChannelVector, ImportanceMap, LatentTensor, MaskMode, Shape};

fn map_strategy() -> impl Strategy<Value = ImportanceMap> {
    (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(c, h, w)| {
        let s = Shape::new(c, h, w);
        prop::collection::vec(0.001f64..0.999, s.len())
            .prop_map(move |v| ImportanceMap::new(LatentTensor::new(s, v).unwrap()).unwrap())
    })
}

proptest! {
    #[test]
    fn selection_shrinks_as_gamma_grows(
        im in map_strategy(),
        base in 0.05f64..5.0,
        t in 1.0f64..10.0,
    ) {
        let c = im.shape().channels;
        let g1 = ChannelVector::new((0..c).map(|i| base * (1.0 + 0.3 * i as f64)).collect()).unwrap();
        let g2 = ChannelVector::new(g1.values().iter().map(|g| g * t).collect()).unwrap();
        let m1 = binarize(&adjust(&im, &g1).unwrap());
        let m2 = binarize(&adjust(&im, &g2).unwrap());
        prop_assert!(m2.popcount() <= m1.popcount());
        // Pointwise: anything kept at the larger exponent was kept before.
        for (a, b) in m1.bits().iter().zip(m2.bits()) {
            prop_assert!(!b || *a);
        }
    }

    #[test]
    fn masked_params_follow_selection_order(
        (mu, sigma, mask) in (1usize..5, 1usize..5, 1usize..5).prop_flat_map(|(c, h, w)| {
            let s = Shape::new(c, h, w);
            (
                prop::collection::vec(-10.0f64..10.0, s.len()),
                prop::collection::vec(0.01f64..10.0, s.len()),
                prop::collection::vec(any::<bool>(), s.len()),
            ).prop_map(move |(m, sg, b)| (
                LatentTensor::new(s, m).unwrap(),
                LatentTensor::new(s, sg).unwrap(),
                BinaryMask::new(s, b).unwrap(),
            ))
        }),
        step in 0.1f64..3.0,
    ) {
        let qv = ChannelVector::new(vec![step; mu.shape().channels]).unwrap();
        let p = masked_params(&mu, &sigma, &qv, &mask, false).unwrap();
        let s = mu.shape();
        let mut k = 0;
        for c in 0..s.channels {
            for y in 0..s.height {
                for x in 0..s.width {
                    if mask.get(c, y, x) {
                        prop_assert_eq!(p.mu()[k], mu.get(c, y, x) / step);
                        prop_assert_eq!(p.sigma()[k], (sigma.get(c, y, x) / step).max(scr_core::entropy::SIGMA_FLOOR));
                        k += 1;
                    }
                }
            }
        }
        prop_assert_eq!(k, p.len());
        prop_assert_eq!(select(&mu, &mask).unwrap().count(), p.len());
        let zm = masked_params(&mu, &sigma, &qv, &mask, true).unwrap();
        prop_assert!(zm.mu().iter().all(|&m| m == 0.0));
    }
}

fn constant_map(value: f64, len: usize) -> ImportanceMap {
    ImportanceMap::new(LatentTensor::filled(Shape::new(1, 1, len), value)).unwrap()
}

#[test]
fn stochastic_frequency_matches_probability() {
    let n = 100_000;
    let mask = stochastic_binarize(&constant_map(0.3, n), 2022);
    let freq = mask.popcount() as f64 / n as f64;
    assert!((freq - 0.3).abs() <= 0.005, "{freq}");
}

#[test]
fn stochastic_mask_is_seeded() {
    let im = constant_map(0.5, 4096);
    assert_eq!(stochastic_binarize(&im, 1), stochastic_binarize(&im, 1));
    assert_ne!(stochastic_binarize(&im, 1), stochastic_binarize(&im, 2));
}

#[test]
fn every_mode_respects_degenerate_maps() {
    let s = Shape::new(4, 3, 5);
    let ones = ImportanceMap::new(LatentTensor::filled(s, 1.0)).unwrap();
    let zeros = ImportanceMap::new(LatentTensor::filled(s, 0.0)).unwrap();
    let g = ChannelVector::new(vec![0.7, 1.0, 2.0, 5.0]).unwrap();
    for mode in [MaskMode::Deterministic, MaskMode::Stochastic(9), MaskMode::Baseline2d] {
        assert_eq!(selection_stats(&generate_mask(&ones, &g, mode).unwrap()), 1.0, "{mode}");
        assert_eq!(
            selection_stats(&generate_mask(&zeros, &g, mode).unwrap()),
            0.0,
            "{mode}"
        );
    }
    assert_eq!(generate_mask(&zeros, &g, MaskMode::Full).unwrap(), BinaryMask::ones(s));
}

#[test]
fn baseline_mask_is_channel_prefix() {
    let s = Shape::new(8, 4, 4);
    let values: Vec<f64> = (0..s.len()).map(|i| ((i * 7919) % 101) as f64 / 100.0).collect();
    let im = ImportanceMap::new(LatentTensor::new(s, values).unwrap()).unwrap();
    let mask = generate_mask(&im, &ChannelVector::ones(8), MaskMode::Baseline2d).unwrap();
    for y in 0..4 {
        for x in 0..4 {
            let count = (0..8).filter(|&c| mask.get(c, y, x)).count();
            assert!((0..8).all(|c| mask.get(c, y, x) == (c < count)));
            let mean = (0..8).map(|c| im.as_tensor().get(c, y, x)).sum::<f64>() / 8.0;
            assert_eq!(count, (mean * 8.0).round() as usize);
        }
    }
}

#[test]
fn mask_mode_text_round_trip() {
    for mode in [
        MaskMode::Deterministic,
        MaskMode::Stochastic(0),
        MaskMode::Stochastic(u64::MAX),
        MaskMode::Baseline2d,
        MaskMode::Full,
    ] {
        assert_eq!(mode.to_string().parse::<MaskMode>().unwrap(), mode);
    }
    assert!("stoch:".parse::<MaskMode>().is_err());
    assert!("stoch:-1".parse::<MaskMode>().is_err());
    assert!("3d".parse::<MaskMode>().is_err());
}
