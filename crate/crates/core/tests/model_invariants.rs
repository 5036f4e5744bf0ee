use dsc_jscc::channel::{Channel, ChannelConfig};
use dsc_jscc::model::{build_variant, default_base_architecture, CodecModel, InputShape, LayerKind, VariantId};
use dsc_jscc::tensor::Tensor4;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn image(n: usize, side: usize, seed: u64) -> Tensor4 {
    Tensor4::random_uniform([n, 3, side, side], 0.0, 255.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn reconstruction_keeps_the_input_shape() {
    for (side, variant) in [
        (32, VariantId::Baseline),
        (64, VariantId::R60E3D2),
        (256, VariantId::R100),
    ] {
        let base = default_base_architecture(InputShape::square(side), 8).unwrap();
        let model = CodecModel::new(build_variant(variant, &base).unwrap(), variant, 1.0, 1).unwrap();
        let x = image(1, side, 2);
        let z = model.encode(&x).unwrap();
        assert_eq!(z[0].len(), 8 * (side / 4) * (side / 4) / 2);
        let mut ch = Channel::new(ChannelConfig::from_snr(10.0, 1.0, 3).unwrap()).unwrap();
        let out = model.reconstruct(&x, &mut ch).unwrap();
        assert_eq!(out.shape(), x.shape());
        assert!(out.data().iter().all(|v| (0.0..=255.0).contains(v)));
    }
}

#[test]
fn builder_leaves_the_base_untouched() {
    let base = default_base_architecture(InputShape::REFERENCE, 8).unwrap();
    let snapshot = base.clone();
    for v in VariantId::ALL {
        let built = build_variant(v, &base).unwrap();
        assert_eq!(base, snapshot);
        assert_eq!(build_variant(v, &base).unwrap(), built, "building is deterministic");
        // Only layer kinds change; channel plumbing and geometry stay fixed.
        for (b, l) in base.layers().zip(built.layers()) {
            assert_eq!(
                (b.in_channels, b.out_channels, b.stride, b.padding),
                (l.in_channels, l.out_channels, l.stride, l.padding)
            );
            assert_eq!(b.output_padding, l.output_padding);
            assert_eq!(b.activation, l.activation);
        }
        assert_eq!(
            built.encoder.iter().map(|l| l.kind).collect::<Vec<_>>(),
            v.encoder_kinds()
        );
        assert_eq!(
            built.decoder.iter().map(|l| l.kind).collect::<Vec<_>>(),
            v.decoder_kinds()
        );
    }
}

#[test]
fn replacement_ratio_matches_the_name() {
    for v in VariantId::ALL {
        let (e, d) = (v.encoder_kinds(), v.decoder_kinds());
        let replaced = e.iter().chain(&d).filter(|k| k.is_separable()).count();
        let expected = match v {
            VariantId::Baseline => 0,
            VariantId::R20 => 2,
            VariantId::R40 => 4,
            VariantId::R80 => 8,
            VariantId::R100 => 10,
            _ => 6,
        };
        assert_eq!(replaced, expected, "{v}");
        assert!(e.iter().all(|k| matches!(k, LayerKind::Conv | LayerKind::DSConv)));
        assert!(d.iter().all(|k| matches!(k, LayerKind::TConv | LayerKind::DSTConv)));
    }
}

#[test]
fn output_padding_mirrors_the_encoder() {
    let base = default_base_architecture(InputShape::REFERENCE, 8).unwrap();
    let ops: Vec<usize> = base.decoder.iter().map(|l| l.output_padding.unwrap()).collect();
    assert_eq!(ops, [0, 0, 0, 1, 1]);
    assert_eq!(base.latent_hw, (64, 64));
}

#[test]
fn inference_does_not_mutate_the_model() {
    let base = default_base_architecture(InputShape::square(16), 4).unwrap();
    let model = CodecModel::new(build_variant(VariantId::R40, &base).unwrap(), VariantId::R40, 1.0, 5).unwrap();
    let before = model.clone();
    let mut ch = Channel::new(ChannelConfig::from_snr(0.0, 1.0, 1).unwrap()).unwrap();
    model.reconstruct(&image(2, 16, 9), &mut ch).unwrap();
    assert_eq!(model, before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Any side round-trips to its own size; even `c` keeps the symbol count whole.
    #[test]
    fn every_variant_round_trips_shapes(side in 5usize..40, c in (1usize..4).prop_map(|h| 2 * h), v in 0usize..11, seed in any::<u64>()) {
        let variant = VariantId::ALL[v];
        let base = default_base_architecture(InputShape::square(side), c).unwrap();
        let model = CodecModel::new(build_variant(variant, &base).unwrap(), variant, 1.0, seed).unwrap();
        let x = image(1, side, seed);
        let z = model.encode(&x).unwrap();
        prop_assert_eq!(z[0].len(), model.bandwidth().k);
        prop_assert_eq!(model.decode(&z).unwrap().shape(), x.shape());
    }
}
