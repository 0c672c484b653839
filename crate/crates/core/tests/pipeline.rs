mod common;

use dmt::dmt::DmtConfig;
use dmt::masking::{gen_freeform_mask, MaskMap, MaskSequence};
use dmt::numerics::{finite_diff_check, GradCheckOptions, ParamSet, Tensor};
use dmt::pipeline::{
    checkpoint_bytes, decode, encode, forward, load_checkpoint, parse_checkpoint, save_checkpoint,
    FrameSequence, ModelConfig, ModelParams, FORMAT_VERSION,
};
use dmt::training::l1_loss;
use dmt::{CheckpointError, Error};
use proptest::prelude::*;
use rand::Rng;

fn tiny_model(layers: usize) -> ModelConfig {
    ModelConfig {
        dmt: DmtConfig {
            layers,
            ..common::tiny_config(8, 2)
        },
        channels: 6,
    }
}

fn frames(t: usize, h: usize, w: usize, seed: u64) -> FrameSequence {
    let mut r = common::rng(seed);
    FrameSequence::new(t, h, w, common::uniform(&mut r, t * 3 * h * w, 0.0, 1.0)).unwrap()
}

fn freeform(t: usize, h: usize, w: usize, ratio: f64, seed: u64) -> MaskSequence {
    MaskSequence::new(
        (0..t)
            .map(|i| gen_freeform_mask(h, w, ratio, seed + i as u64).unwrap())
            .collect(),
    )
    .unwrap()
}

#[test]
fn forward_shapes_and_bookkeeping() {
    let params = ModelParams::init(tiny_model(2), 1).unwrap();
    let (t, h, w) = (2, 16, 12);
    let masks = freeform(t, h, w, 0.4, 3);
    let out = forward(&frames(t, h, w, 2), &masks, &params, true).unwrap();
    assert_eq!(out.raw.tensor().shape(), &[t, 3, h, w]);
    assert_eq!(out.composed.tensor().shape(), &[t, 3, h, w]);
    assert_eq!(out.masks.len(), 3);
    assert_eq!(out.masks[0], masks.downscale(4).unwrap());
    assert_eq!(out.stats.len(), 2);
    assert_eq!(out.stats[0].tokens, out.masks[0].count_valid());
    let trace = out.trace.unwrap();
    assert_eq!(trace.len(), 2);
    assert_eq!(trace.entries[0].grid.shape(), &[t, 8, 4, 3]);
    assert!(out
        .raw
        .tensor()
        .data()
        .iter()
        .all(|v| (0.0..=1.0).contains(v)));
    assert!(forward(
        &frames(1, 10, 12, 0),
        &freeform(1, 10, 12, 0.1, 0),
        &params,
        false
    )
    .is_err());
}

#[test]
fn composition_keeps_valid_pixels_bitwise() {
    let params = ModelParams::init(tiny_model(1), 4).unwrap();
    let (t, h, w) = (2, 16, 16);
    let input = frames(t, h, w, 5);
    let masks = freeform(t, h, w, 0.5, 6);
    let out = forward(&input, &masks, &params, false).unwrap();
    for f in 0..t {
        let m = &masks.frames()[f];
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let i = ((f * 3 + c) * h + y) * w + x;
                    let got = out.composed.tensor().data()[i];
                    let want = if m.get(y, x) {
                        input.tensor().data()[i]
                    } else {
                        out.raw.tensor().data()[i]
                    };
                    assert_eq!(got.to_bits(), want.to_bits());
                }
            }
        }
    }
}

#[test]
fn hole_pixels_do_not_reach_the_encoder() {
    let params = ModelParams::init(tiny_model(2), 7).unwrap();
    let (t, h, w) = (2, 16, 16);
    let mut r = common::rng(8);
    for trial in 0..10 {
        let masks = freeform(t, h, w, 0.4, 100 + trial);
        let a = frames(t, h, w, trial);
        let mut noisy = a.tensor().to_vec();
        for f in 0..t {
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        if !masks.frames()[f].get(y, x) {
                            noisy[((f * 3 + c) * h + y) * w + x] = r.random();
                        }
                    }
                }
            }
        }
        let b = FrameSequence::new(t, h, w, noisy).unwrap();
        let ea = encode(&a, &masks, &params).unwrap();
        let eb = encode(&b, &masks, &params).unwrap();
        assert_eq!(ea.data(), eb.data());
        let ra = forward(&a, &masks, &params, false).unwrap().raw;
        let rb = forward(&b, &masks, &params, false).unwrap().raw;
        assert_eq!(ra.tensor().data(), rb.tensor().data(), "trial {trial}");
    }
}

#[test]
fn all_valid_input_is_returned_unchanged() {
    let params = ModelParams::init(tiny_model(1), 9).unwrap();
    let input = frames(1, 8, 8, 10);
    let out = forward(
        &input,
        &MaskSequence::uniform(MaskMap::all_valid(8, 8), 1).unwrap(),
        &params,
        false,
    )
    .unwrap();
    assert_eq!(out.composed.tensor().data(), input.tensor().data());
}

#[test]
fn zero_decoder_outputs_one_half() {
    let mut params = ModelParams::init(tiny_model(1), 11).unwrap();
    for name in ["dec.conv2.weight", "dec.conv2.bias"] {
        let shape = params.params.get(name).unwrap().shape().to_vec();
        params.params.replace(name, Tensor::zeros(&shape)).unwrap();
    }
    let raw = decode(&common::random(&[2, 6, 3, 3], 12), &params).unwrap();
    assert_eq!(raw.tensor().shape(), &[2, 3, 12, 12]);
    assert!(raw.tensor().data().iter().all(|&v| v == 0.5));
}

#[test]
fn frame_sequence_clamps_and_checks_shape() {
    let f = FrameSequence::new(1, 1, 1, vec![-0.5, 0.25, 3.0]).unwrap();
    assert_eq!(f.tensor().data(), &[0.0, 0.25, 1.0]);
    assert!(FrameSequence::new(1, 2, 2, vec![0.0; 11]).is_err());
    assert!(FrameSequence::from_tensor(Tensor::zeros(&[1, 4, 2, 2])).is_err());
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let cfg = ModelConfig {
        dmt: DmtConfig {
            layers: 1,
            ..common::tiny_config(4, 2)
        },
        channels: 3,
    };
    let params = ModelParams::init(cfg, 13).unwrap();
    let (t, h, w) = (2, 8, 8);
    let input = frames(t, h, w, 14);
    let target = frames(t, h, w, 15);
    let masks = freeform(t, h, w, 0.3, 16);
    let f = |s: &ParamSet| {
        let p = ModelParams {
            config: cfg,
            params: s.clone(),
        };
        l1_loss(
            forward(&input, &masks, &p, false)?.raw.tensor(),
            target.tensor(),
        )
    };
    let opts = GradCheckOptions {
        max_coords_per_tensor: Some(12),
        ..GradCheckOptions::default()
    };
    let report = finite_diff_check(f, &params.params, &opts).unwrap();
    assert!(report.checked > 200, "{report:?}");
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let params = ModelParams::init(tiny_model(2), 20).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.dmtc");
    save_checkpoint(&params, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.config, params.config);
    assert_eq!(checkpoint_bytes(&loaded), std::fs::read(&path).unwrap());
    let input = frames(1, 8, 8, 1);
    let masks = freeform(1, 8, 8, 0.3, 1);
    let a = forward(&input, &masks, &params, false).unwrap();
    let b = forward(&input, &masks, &loaded, false).unwrap();
    assert_eq!(a.raw.tensor().data(), b.raw.tensor().data());
}

fn checkpoint_err(bytes: &[u8]) -> CheckpointError {
    match parse_checkpoint(bytes) {
        Err(Error::Checkpoint(e)) => e,
        other => panic!("expected a checkpoint error, got {other:?}"),
    }
}

fn with_params(config: ModelConfig, params: impl IntoIterator<Item = (String, Tensor)>) -> Vec<u8> {
    let mut set = ParamSet::new();
    for (n, t) in params {
        set.insert(n, t).unwrap();
    }
    checkpoint_bytes(&ModelParams {
        config,
        params: set,
    })
}

#[test]
fn corrupt_checkpoints_get_distinct_errors() {
    let params = ModelParams::init(tiny_model(1), 21).unwrap();
    let good = checkpoint_bytes(&params);
    let owned = || {
        params
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
    };

    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(matches!(checkpoint_err(&bad), CheckpointError::BadMagic(m) if &m == b"XMTC"));

    let mut bad = good.clone();
    bad[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    assert!(matches!(
        checkpoint_err(&bad),
        CheckpointError::VersionMismatch {
            found: 2,
            expected: 1
        }
    ));

    assert!(matches!(
        checkpoint_err(&good[..good.len() - 3]),
        CheckpointError::Truncated("tensor data")
    ));
    assert!(matches!(
        checkpoint_err(&good[..2]),
        CheckpointError::Truncated("magic")
    ));

    let mut bad = good.clone();
    bad.push(0);
    assert!(matches!(
        checkpoint_err(&bad),
        CheckpointError::Malformed(_)
    ));

    // token_selection flag is the tenth config word
    let mut bad = good.clone();
    bad[8 + 9 * 8] = 7;
    assert!(matches!(
        checkpoint_err(&bad),
        CheckpointError::Malformed(_)
    ));

    // heads = 3 does not divide d = 8
    let mut bad = good.clone();
    bad[8 + 2 * 8] = 3;
    assert!(matches!(
        checkpoint_err(&bad),
        CheckpointError::Malformed(_)
    ));

    let missing = with_params(params.config, owned().filter(|(n, _)| n != "tok.bias"));
    assert!(
        matches!(checkpoint_err(&missing), CheckpointError::MissingTensor(n) if n == "tok.bias")
    );

    let extra = with_params(
        params.config,
        owned().chain([("zz.extra".to_string(), Tensor::zeros(&[1]))]),
    );
    assert!(
        matches!(checkpoint_err(&extra), CheckpointError::UnexpectedTensor(n) if n == "zz.extra")
    );

    let reshaped = with_params(
        params.config,
        owned().map(|(n, t)| {
            if n == "tok.bias" {
                (n, Tensor::zeros(&[9]))
            } else {
                (n, t)
            }
        }),
    );
    match checkpoint_err(&reshaped) {
        CheckpointError::ShapeMismatch {
            name,
            expected,
            found,
        } => {
            assert_eq!(
                (name.as_str(), expected, found),
                ("tok.bias", vec![8], vec![9])
            );
        }
        e => panic!("{e:?}"),
    }

    // last value of the last record
    let mut bad = good.clone();
    let n = bad.len();
    bad[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(matches!(
        checkpoint_err(&bad),
        CheckpointError::Malformed(_)
    ));

    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_checkpoint(dir.path().join("absent")),
        Err(Error::Io(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_truncation_is_rejected(cut in 0.0f64..1.0) {
        let params = ModelParams::init(tiny_model(1), 22).unwrap();
        let good = checkpoint_bytes(&params);
        let len = (cut * good.len() as f64) as usize;
        prop_assert!(matches!(parse_checkpoint(&good[..len]), Err(Error::Checkpoint(CheckpointError::Truncated(_)))));
    }
}
