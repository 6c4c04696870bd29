use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(variant: ModelVariant) -> ModelConfig {
    ModelConfig {
        variant,
        image_side: 32,
        head_width: 4,
        kernel_size: 9,
        seed: 11,
        ..ModelConfig::default()
    }
}

fn random_image(h: usize, w: usize, seed: u64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageTensor::new(h, w, (0..3 * h * w).map(|_| rng.random::<f32>()).collect()).unwrap()
}

fn random_map(h: usize, w: usize, seed: u64) -> ScoreMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScoreMap::new(h, w, (0..2 * h * w).map(|_| rng.random::<f32>()).collect()).unwrap()
}

#[test]
fn variant_names() {
    for v in ModelVariant::ALL {
        assert_eq!(v.as_str().parse::<ModelVariant>().unwrap(), v);
        assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.as_str()));
    }
    assert_eq!("craft-masked".parse::<ModelVariant>().unwrap(), ModelVariant::CraftMasked);
    assert!("splitnet".parse::<ModelVariant>().is_err());
}

#[test]
fn identity_mask_equals_unmasked_head() {
    let masked = OverlayModel::new(small(ModelVariant::CraftMasked)).unwrap();
    let plain = OverlayModel::new(small(ModelVariant::UnmaskedResnet)).unwrap();
    plain.params().copy_from(masked.params(), "head.").unwrap();
    let mut p = AttentionParams::zeros(9);
    p.bias = 1.0;
    masked.set_attention_params(&p).unwrap();

    let img = random_image(32, 32, 1);
    let map = random_map(16, 16, 2);
    let a = masked.forward(&img, &map).unwrap();
    let b = plain.forward(&img, &map).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn zero_mask_ignores_image() {
    let model = OverlayModel::new(small(ModelVariant::CraftMasked)).unwrap();
    model.set_attention_params(&AttentionParams::zeros(9)).unwrap();
    let map = random_map(16, 16, 3);
    let a = model.forward(&random_image(32, 32, 4), &map).unwrap();
    let b = model.forward(&random_image(32, 32, 5), &map).unwrap();
    let zero = ImageTensor::filled(32, 32, 0.0).unwrap();
    let x = images_to_tensor(&[&zero]).unwrap();
    let z = model.head_logits(&x, false).unwrap();
    let c = f64::from(candle_nn::ops::sigmoid(&z).unwrap().to_vec1::<f32>().unwrap()[0]);
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn deterministic_across_instances() {
    let img = random_image(32, 32, 6);
    let map = random_map(16, 16, 7);
    for v in ModelVariant::ALL {
        let a = OverlayModel::new(small(v)).unwrap().forward(&img, &map).unwrap();
        let b = OverlayModel::new(small(v)).unwrap().forward(&img, &map).unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "{v}");
        assert!(a > 0.0 && a < 1.0);
    }
}

#[test]
fn masked_image_bounded_by_mask_max() {
    let model = OverlayModel::new(small(ModelVariant::CraftMasked)).unwrap();
    let img = random_image(32, 32, 8);
    let map = random_map(16, 16, 9);
    let mask = model.mask(&maps_to_tensor(&[&map]).unwrap()).unwrap();
    let m = mask.flatten_all().unwrap().to_vec1::<f32>().unwrap();
    let mmax = m.iter().cloned().fold(0f32, f32::max);
    assert!(m.iter().all(|&v| v >= 0.0));
    let y = images_to_tensor(&[&img]).unwrap().broadcast_mul(&mask).unwrap();
    let y = y.flatten_all().unwrap().to_vec1::<f32>().unwrap();
    for (yv, xv) in y.iter().zip(img.data()) {
        assert!(*yv >= 0.0 && *yv <= xv * mmax + 1e-7);
    }
}

#[test]
fn dimension_mismatch_rejected() {
    let model = OverlayModel::new(small(ModelVariant::CraftMasked)).unwrap();
    let err = model.forward(&random_image(32, 32, 1), &random_map(8, 8, 1));
    assert!(matches!(err, Err(Error::ShapeMismatch(_))));
}

#[test]
fn binarized_features_layout() {
    let grid = (112, 112);
    let zero = ScoreMap::zeros(112, 112).unwrap();
    let f = binarized_features(&zero, grid).unwrap();
    assert_eq!(f.len(), 25088);
    assert!(f.iter().all(|&v| v == 0.0));

    let mut data = vec![0f32; 2 * 112 * 112];
    data[112 * 112 + 5 * 112 + 7] = 0.5;
    let one = ScoreMap::new(112, 112, data).unwrap();
    let f = binarized_features(&one, grid).unwrap();
    let idx = feature_index(grid, 1, 5, 7);
    assert_eq!(idx, 12544 + 567);
    assert_eq!(f[idx], 0.5);
    assert_eq!(f.iter().filter(|&&v| v != 0.0).count(), 1);

    let coarse = binarized_features(&ScoreMap::zeros(56, 56).unwrap(), grid).unwrap();
    assert_eq!(coarse.len(), 25088);
}

#[test]
fn linear_logit_is_dot_product() {
    let model = OverlayModel::new(small(ModelVariant::BinarizedLinear)).unwrap();
    let map = random_map(16, 16, 12);
    let w = model.params().get(LINEAR_WEIGHT).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
    let b = model.params().get(LINEAR_BIAS).unwrap().to_vec1::<f32>().unwrap()[0];
    let z: f64 = w.iter().zip(map.data()).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>() + b as f64;
    let p = model.forward(&random_image(32, 32, 1), &map).unwrap();
    assert!((p - 1.0 / (1.0 + (-z).exp())).abs() < 1e-5);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = random_image(32, 32, 13);
    let map = random_map(16, 16, 14);
    for v in ModelVariant::ALL {
        let mut cfg = small(v);
        cfg.seed = 99;
        let model = OverlayModel::new(cfg).unwrap();
        let path = dir.path().join(format!("{v}.rwt"));
        model.save(&path).unwrap();
        let back = OverlayModel::load(&path).unwrap();
        assert_eq!(back.config(), model.config());
        assert_eq!(back.params().to_raw().unwrap(), model.params().to_raw().unwrap());
        assert_eq!(back.forward(&img, &map).unwrap(), model.forward(&img, &map).unwrap());
    }
    let (meta, _) = read_bundle(&dir.path().join("craft_masked.rwt")).unwrap();
    assert_eq!(meta["kernel_normalization"], "sum_to_one");
}

#[test]
fn head_tensor_names_are_stable() {
    let model = OverlayModel::new(small(ModelVariant::CraftMasked)).unwrap();
    let names: Vec<_> = model.params().iter().map(|p| p.name.clone()).collect();
    assert_eq!(names[0], ATTENTION_KERNEL);
    assert_eq!(names[1], ATTENTION_BIAS);
    assert_eq!(names[2], STEM_WEIGHT);
    assert!(names.contains(&"head.layer4.1.bn2.running_var".to_string()));
    assert!(names.contains(&"head.layer2.0.downsample.0.weight".to_string()));
    // Stem, 16 block convolutions and 3 downsample projections; the fc layer
    // brings the weighted layer count to 18 along the main path.
    let convs = names.iter().filter(|n| n.ends_with(".weight") && model.params().get(n).unwrap().rank() == 4).count();
    assert_eq!(convs, 1 + 16 + 3);
}

fn bce(z: &Tensor, y: &Tensor) -> Tensor {
    let y = y.to_dtype(z.dtype()).unwrap();
    let relu = z.relu().unwrap();
    let soft = (z.abs().unwrap().neg().unwrap().exp().unwrap() + 1.0).unwrap().log().unwrap();
    ((relu - (z * y).unwrap()).unwrap() + soft).unwrap().mean_all().unwrap()
}

/// Norm-wise relative gap between the `f32` analytic gradient of one tensor
/// and central differences taken on an `f64` copy of the model.
fn gradient_error(cfg: &ModelConfig, prepare: impl Fn(&OverlayModel), name: &str, x: &Tensor, f: &Tensor, y: &Tensor) -> f64 {
    let m32 = OverlayModel::new(cfg.clone()).unwrap();
    prepare(&m32);
    let var = m32.params().get(name).unwrap().clone();
    let loss = bce(&m32.logits(x, f, true).unwrap(), y);
    let g = loss.backward().unwrap().get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();

    let m64 = OverlayModel::with_dtype(cfg.clone(), DType::F64).unwrap();
    m64.params().copy_from(m32.params(), "").unwrap();
    let var = m64.params().get(name).unwrap().clone();
    let base = var.as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    let shape = var.dims().to_vec();
    let eps = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let idx: Vec<usize> = if base.len() <= 32 {
        (0..base.len()).collect()
    } else {
        (0..32).map(|_| rng.random_range(0..base.len())).collect()
    };
    let (mut num, mut den_a, mut den_n) = (0f64, 0f64, 0f64);
    for &i in &idx {
        let at = |d: f64| {
            let mut v = base.clone();
            v[i] += d;
            var.set(&Tensor::from_vec(v, shape.clone(), &Device::Cpu).unwrap()).unwrap();
            bce(&m64.logits(x, f, true).unwrap(), y).to_scalar::<f64>().unwrap()
        };
        let fd = (at(eps) - at(-eps)) / (2.0 * eps);
        num += (fd - g[i] as f64).powi(2);
        den_a += (g[i] as f64).powi(2);
        den_n += fd * fd;
    }
    num.sqrt() / den_a.sqrt().max(den_n.sqrt())
}

#[test]
fn gradients_match_finite_differences() {
    let cfg = small(ModelVariant::CraftMasked);
    let lift_bias = |m: &OverlayModel| {
        let mut p = m.attention_params().unwrap();
        p.bias = 0.05;
        m.set_attention_params(&p).unwrap();
    };
    let imgs: Vec<_> = (0..4).map(|i| random_image(32, 32, 20 + i)).collect();
    let maps: Vec<_> = (0..4).map(|i| random_map(16, 16, 30 + i)).collect();
    let x = images_to_tensor(&imgs.iter().collect::<Vec<_>>()).unwrap();
    let f = maps_to_tensor(&maps.iter().collect::<Vec<_>>()).unwrap();
    let y = Tensor::new(&[1f32, 0.0, 1.0, 0.0], &Device::Cpu).unwrap();
    for name in [ATTENTION_KERNEL, ATTENTION_BIAS, STEM_WEIGHT] {
        let err = gradient_error(&cfg, lift_bias, name, &x, &f, &y);
        assert!(err < 1e-3, "{name}: relative error {err}");
    }
}

