mod common;

use dmt::masking::{
    downscale_mask, gen_freeform_mask, gen_random_cells_mask, gen_stationary_mask, grid_to_tokens,
    mask_update, token_scatter, token_select, GridIndex, MaskMap, MaskSequence,
};
use dmt::numerics::{SlidingWindowSpec, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn mask_from_bits(bits: u32, h: usize, w: usize) -> MaskMap {
    MaskMap::from_fn(h, w, |y, x| bits >> (y * w + x) & 1 == 1)
}

#[test]
fn stride_one_activation_is_dilation_exhaustive_4x4() {
    for k in [2usize, 3] {
        for p in 0..k {
            let spec = SlidingWindowSpec::new(k, 1, p).unwrap();
            for bits in 0..1u32 << 16 {
                let m = mask_from_bits(bits, 4, 4);
                assert_eq!(
                    mask_update(&m, spec).unwrap(),
                    common::dilate(&m, k - 1),
                    "k={k} p={p} bits={bits:#06x}"
                );
            }
        }
    }
}

#[test]
fn matches_literal_algorithm_on_random_cases() {
    let mut r = common::rng(2024);
    for case in 0..200 {
        let k = r.random_range(1..=4);
        let s = [1, 2, 3][case % 3];
        let p = r.random_range(0..=k.min(2));
        let h = r.random_range(k.max(3)..=9);
        let w = r.random_range(k.max(3)..=9);
        let density = r.random_range(0.05..0.6);
        let m = MaskMap::from_fn(h, w, |_, _| r.random_bool(density));
        let spec = SlidingWindowSpec::new(k, s, p).unwrap();
        assert_eq!(
            mask_update(&m, spec).unwrap(),
            common::algorithm1(&m, k, s, p),
            "case {case}: k={k} s={s} p={p}"
        );
    }
}

#[test]
fn stride_two_center_pixel() {
    let m = MaskMap::from_fn(7, 7, |y, x| (y, x) == (3, 3));
    let spec = SlidingWindowSpec::new(3, 2, 1).unwrap();
    let out = mask_update(&m, spec).unwrap();
    assert_eq!(out, common::algorithm1(&m, 3, 2, 1));
    // windows at top-left rows/cols 1 and 3 (padded) see the pixel
    assert_eq!(
        out,
        MaskMap::from_fn(7, 7, |y, x| (1..=5).contains(&y) && (1..=5).contains(&x))
    );
}

#[test]
fn downscale_uses_any_valid_pooling() {
    let m = MaskMap::from_fn(8, 8, |y, x| (y, x) == (5, 2));
    let d = downscale_mask(&m, 4).unwrap();
    assert_eq!(d, MaskMap::from_fn(2, 2, |y, x| (y, x) == (1, 0)));
    assert!(downscale_mask(&MaskMap::all_valid(8, 8), 4)
        .unwrap()
        .is_all_valid());
    assert_eq!(
        downscale_mask(&MaskMap::all_invalid(8, 8), 4)
            .unwrap()
            .count_valid(),
        0
    );
    assert!(downscale_mask(&m, 3).is_err());
}

#[test]
fn token_selection_examples() {
    let m = MaskMap::from_binary(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
    let f = Tensor::new(&[4, 3], (0..12).map(f64::from).collect()).unwrap();
    let b = token_select(&f, &MaskSequence::new(vec![m]).unwrap()).unwrap();
    assert_eq!(b.len(), 1);
    assert_eq!(b.index_map(), &[GridIndex { t: 0, y: 0, x: 0 }]);
    assert_eq!(b.tokens().data(), &[0.0, 1.0, 2.0]);

    let none = token_select(
        &f,
        &MaskSequence::new(vec![MaskMap::all_invalid(2, 2)]).unwrap(),
    )
    .unwrap();
    assert!(none.is_empty());
    assert!(token_scatter(&none)
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn generators_meet_their_contracts() {
    let m = gen_freeform_mask(64, 64, 0.6, 7).unwrap();
    let ratio = 1.0 - m.validity_fraction();
    assert!((0.57..=0.63).contains(&ratio), "ratio {ratio}");
    assert_eq!(m, gen_freeform_mask(64, 64, 0.6, 7).unwrap());
    assert!(gen_freeform_mask(32, 32, 0.0, 1).unwrap().is_all_valid());

    let s = gen_stationary_mask(8, 8, 0.25, 0).unwrap();
    assert_eq!(
        s,
        MaskMap::from_fn(8, 8, |y, x| !((2..6).contains(&y) && (2..6).contains(&x)))
    );
    assert_eq!(gen_stationary_mask(6, 6, 1.0, 0).unwrap().count_valid(), 0);
    let half = gen_stationary_mask(10, 10, 0.5, 0).unwrap().count_invalid();
    assert!((49..=51).contains(&half), "{half}");

    assert_eq!(
        gen_random_cells_mask(5, 7, 11, 3).unwrap().count_invalid(),
        11
    );
}

fn mask_strategy(h: usize, w: usize) -> impl Strategy<Value = MaskMap> {
    proptest::collection::vec(any::<bool>(), h * w)
        .prop_map(move |cells| MaskMap::from_cells(h, w, cells).unwrap())
}

fn small_spec() -> impl Strategy<Value = SlidingWindowSpec> {
    (1usize..=4, 1usize..=3, 0usize..=2)
        .prop_map(|(k, s, p)| SlidingWindowSpec::new(k, s, p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn activation_is_monotone(a in mask_strategy(6, 7), extra in mask_strategy(6, 7), spec in small_spec()) {
        let b = MaskMap::from_fn(6, 7, |y, x| a.get(y, x) || extra.get(y, x));
        let (ua, ub) = (mask_update(&a, spec).unwrap(), mask_update(&b, spec).unwrap());
        prop_assert!(ua.is_subset_of(&ub));
    }

    #[test]
    fn stride_one_never_loses_validity(m in mask_strategy(6, 6), k in 1usize..=4, p_off in 0usize..=3) {
        let p = p_off.min(k - 1);
        let spec = SlidingWindowSpec::new(k, 1, p).unwrap();
        let once = mask_update(&m, spec).unwrap();
        prop_assert!(m.is_subset_of(&once));
        prop_assert!(once.is_subset_of(&mask_update(&once, spec).unwrap()));
    }

    #[test]
    fn select_and_scatter_are_inverse(
        masks in proptest::collection::vec(mask_strategy(3, 4), 1..=3),
        d in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let t = masks.len();
        let seq = MaskSequence::new(masks).unwrap();
        let mut r = common::rng(seed);
        let grid = Tensor::new(&[t, d, 3, 4], common::uniform(&mut r, t * d * 12, -1.0, 1.0)).unwrap();
        let batch = token_select(&grid_to_tokens(&grid).unwrap(), &seq).unwrap();
        prop_assert_eq!(batch.len(), seq.count_valid());
        prop_assert_eq!(batch.len() as f64, seq.validity_fraction() * (t * 12) as f64);
        let scattered = token_scatter(&batch).unwrap();
        let again = token_select(&grid_to_tokens(&scattered).unwrap(), &seq).unwrap();
        prop_assert_eq!(again.tokens().data(), batch.tokens().data());
        prop_assert_eq!(again.index_map(), batch.index_map());
        for (f, m) in seq.frames().iter().enumerate() {
            for y in 0..3 {
                for x in 0..4 {
                    for c in 0..d {
                        let v = scattered.data()[((f * d + c) * 3 + y) * 4 + x];
                        if m.get(y, x) {
                            prop_assert_eq!(v, grid.data()[((f * d + c) * 3 + y) * 4 + x]);
                        } else {
                            prop_assert_eq!(v.to_bits(), 0.0f64.to_bits());
                        }
                    }
                }
            }
        }
    }
}
