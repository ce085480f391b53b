use kspace_recon::fourier::RealImage;
use kspace_recon::nn::{NetConfig, Param, RdUnet, Visit};
use kspace_recon::simulate::{forward_acquire, make_sensitivities, random_phantom, SamplingMask};
use kspace_recon::train::{
    augment_pairs, normalize, train_loop, train_loop_with, Precision, SamplePair, Sgd, TrainConfig,
};
use kspace_recon::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pairs(n: usize, size: usize, seed: u64) -> Vec<SamplePair> {
    let sens = make_sensitivities(4, size, size).unwrap();
    let mask = SamplingMask::build(size, 4, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let full = forward_acquire(&random_phantom(size, size, &mut rng).unwrap(), &sens).unwrap();
            SamplePair::from_kspace(&full, &mask).unwrap()
        })
        .collect()
}

fn tiny() -> NetConfig {
    NetConfig { depth: 1, base_channels: 4, ..Default::default() }
}

fn trainable(net: &RdUnet<f64>) -> Vec<f64> {
    let mut v = Vec::new();
    net.visit("", &mut |_, p| {
        if p.trainable {
            v.extend(&p.value)
        }
    });
    v
}

fn cfg(steps: usize) -> TrainConfig {
    TrainConfig {
        epochs: usize::MAX,
        max_steps: Some(steps),
        batch_size: 1,
        precision: Precision::F64,
        ..TrainConfig::default()
    }
}

#[test]
fn single_sample_overfits() {
    let data = pairs(1, 16, 1);
    let mut net = RdUnet::<f64>::new(tiny(), 4).unwrap();
    let h = train_loop(&data, &mut net, &cfg(50)).unwrap();
    assert_eq!(h.steps.len(), 50);
    assert!(h.steps[49] < 0.5 * h.steps[0], "{} -> {}", h.steps[0], h.steps[49]);
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let data = pairs(3, 16, 2);
    let mut net = RdUnet::<f64>::new(tiny(), 5).unwrap();
    let before = trainable(&net);
    train_loop(&data, &mut net, &TrainConfig { lr0: 0.0, epochs: 3, max_steps: None, ..cfg(0) }).unwrap();
    assert_eq!(trainable(&net), before);
}

#[test]
fn seeded_runs_repeat_exactly() {
    let data = pairs(4, 16, 3);
    let c = TrainConfig { epochs: 3, batch_size: 3, max_steps: None, ..cfg(0) };
    let run = || {
        let mut net = RdUnet::<f64>::new(tiny(), 6).unwrap();
        let h = train_loop(&data, &mut net, &c).unwrap();
        (h, trainable(&net))
    };
    let (a, wa) = run();
    let (b, wb) = run();
    assert_eq!(a, b);
    assert_eq!(wa, wb);
    // 4 samples in batches of 3: the partial batch is kept
    assert_eq!(a.steps.len(), 6);
    assert_eq!(a.epochs.len(), 3);
}

#[test]
fn epoch_records_and_checkpoints() {
    let data = pairs(2, 16, 4);
    let c = TrainConfig { epochs: 5, checkpoint_every: 2, lr_halve_every: 2, max_steps: None, ..cfg(0) };
    let mut net = RdUnet::<f64>::new(tiny(), 7).unwrap();
    let mut saved = Vec::new();
    let h = train_loop_with(&data, &mut net, &c, &mut |e, _| {
        saved.push(e);
        Ok(())
    })
    .unwrap();
    assert_eq!(saved, [2, 4, 5]);
    let lrs: Vec<f64> = h.epochs.iter().map(|r| r.lr).collect();
    assert_eq!(lrs, [0.02, 0.02, 0.01, 0.01, 0.005]);
    for r in &h.epochs {
        assert!((r.loss.total - r.loss.l2_term - r.loss.alpha * r.loss.fourier_term).abs() < 1e-12);
    }

    let mut net = RdUnet::<f64>::new(tiny(), 7).unwrap();
    let mut saved = Vec::new();
    let empty = TrainConfig { epochs: 0, ..c };
    let h = train_loop_with(&data, &mut net, &empty, &mut |e, _| {
        saved.push(e);
        Ok(())
    })
    .unwrap();
    assert!(h.steps.is_empty());
    assert_eq!(saved, [0]);
}

#[test]
fn momentum_free_training_is_gradient_descent() {
    let data = pairs(1, 16, 5);
    let c = TrainConfig { momentum: 0.0, ..cfg(3) };
    let mut trained = RdUnet::<f64>::new(tiny(), 8).unwrap();
    train_loop(&data, &mut trained, &c).unwrap();

    let mut manual = RdUnet::<f64>::new(tiny(), 8).unwrap();
    let x = kspace_recon::nn::image_to_tensor::<f64>(&data[0].input);
    let y = kspace_recon::nn::image_to_tensor::<f64>(&data[0].target);
    for _ in 0..3 {
        let pred = manual.forward(&x, kspace_recon::nn::Mode::Train).unwrap();
        let (_, g) = kspace_recon::loss::loss_and_grad(&pred, &y, c.alpha).unwrap();
        manual.backward(&g).unwrap();
        manual.visit_mut("", &mut |_, p: &mut Param<f64>| {
            if p.trainable {
                let g = p.grad.clone().unwrap();
                p.value.iter_mut().zip(g).for_each(|(w, g)| *w -= 0.02 * g);
            }
        });
    }
    assert_eq!(trainable(&trained), trainable(&manual));
}

#[test]
fn training_errors() {
    let mut net = RdUnet::<f64>::new(NetConfig { depth: 2, base_channels: 2, ..Default::default() }, 1).unwrap();
    let odd = vec![SamplePair::from_images(&RealImage::zeros(6, 6), &RealImage::zeros(6, 6)).unwrap()];
    assert!(matches!(train_loop(&odd, &mut net, &cfg(1)), Err(Error::ShapeMismatch(_))));
    assert!(matches!(train_loop(&[], &mut net, &cfg(1)), Err(Error::Config(_))));

    let data = pairs(1, 16, 6);
    let mut net = RdUnet::<f64>::new(tiny(), 2).unwrap();
    let wild = TrainConfig { lr0: 1e6, epochs: 50, max_steps: None, ..cfg(0) };
    match train_loop(&data, &mut net, &wild) {
        Err(Error::DivergedTraining { epoch }) => assert!(epoch < 50),
        other => panic!("expected divergence, got {other:?}"),
    }

    let mut sgd = Sgd::<f64>::new(0.5);
    let mut fresh = RdUnet::<f64>::new(tiny(), 2).unwrap();
    assert!(matches!(sgd.step(&mut fresh, 0.1), Err(Error::NoGradient(_))));
}

#[test]
fn augmentation_multiplies_the_dataset_by_eight() {
    let data = pairs(3, 16, 7);
    let aug = augment_pairs(&data).unwrap();
    assert_eq!(aug.len(), 24);
    for (i, p) in data.iter().enumerate() {
        assert_eq!(&aug[8 * i], p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_postconditions(v in proptest::collection::vec(-1e3f64..1e3, 16), shift in -1e3f64..1e3) {
        let img = RealImage::from_vec(4, 4, v.iter().map(|x| x + shift).collect()).unwrap();
        let n = normalize(&img);
        let mean = n.data.iter().sum::<f64>() / 16.0;
        let std = (n.data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 16.0).sqrt();
        let raw_mean = img.data.iter().sum::<f64>() / 16.0;
        let raw_std = (img.data.iter().map(|x| (x - raw_mean).powi(2)).sum::<f64>() / 16.0).sqrt();
        if raw_std > 1e-6 {
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((std - 1.0).abs() < 1e-6);
            let again = normalize(&n);
            for (a, b) in again.data.iter().zip(&n.data) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
