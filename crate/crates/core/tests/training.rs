use vaereg::baselines::fit_nn_regressor;
use vaereg::data::{generate_synthetic, Dataset, SyntheticSpec};
use vaereg::evaluation::r2_score;
use vaereg::model::{ModelConfig, VaeRegressor};
use vaereg::nn::Parameterized;
use vaereg::rng::{derive, standard_normals, Stream};
use vaereg::tensor::{dot, mean};
use vaereg::training::{fit_vae, train, TrainConfig};
use vaereg::Tensor;

fn synthetic(n: usize, sigma_z: f64, noise_x: f64, seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        n,
        sigma_z,
        noise_x,
        ..Default::default()
    };
    generate_synthetic(&spec, seed).unwrap().dataset
}

#[test]
fn smoothed_training_loss_does_not_increase() {
    let data = synthetic(500, 0.1, 0.05, 4);
    let config = TrainConfig {
        epochs: 200,
        ..Default::default()
    };
    let (_, trace) = fit_vae(&data, &ModelConfig::default(), &config).unwrap();
    let totals = trace.totals();
    // Rolling window-5 mean. Minibatch and reparametrization noise leave plateau
    // wiggles of up to ~0.4%, so rises are allowed within 1% of the current level.
    let smoothed: Vec<f64> = totals.windows(5).map(mean).collect();
    for (i, w) in smoothed.windows(2).enumerate() {
        assert!(w[1] <= w[0] + 1e-2 * w[0].abs(), "epoch {i}: {} -> {}", w[0], w[1]);
    }
    let (head, tail) = (smoothed[0], *smoothed.last().unwrap());
    assert!(tail < head - 0.1 * head.abs(), "{head} -> {tail}");
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let data = synthetic(64, 0.1, 0.05, 1);
    let (std, _) = data.standardize().unwrap();
    let config = ModelConfig {
        input_dim: data.dim(),
        ..Default::default()
    };
    let model = VaeRegressor::new(&config, &mut derive(0, Stream::Init, &[])).unwrap();
    let tc = TrainConfig {
        epochs: 0,
        ..Default::default()
    };
    let (trained, trace) = train(model.clone(), &std, &tc).unwrap();
    assert!(trace.records.is_empty());
    assert_eq!(trained.flatten(), model.flatten());
}

#[test]
fn training_is_reproducible_and_seed_sensitive() {
    let data = synthetic(100, 0.1, 0.05, 2);
    let tc = TrainConfig {
        epochs: 20,
        seed: 9,
        ..Default::default()
    };
    let (a, ta) = fit_vae(&data, &ModelConfig::default(), &tc).unwrap();
    let (b, tb) = fit_vae(&data, &ModelConfig::default(), &tc).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    assert!(ta.same_values(&tb));
    let (c, _) = fit_vae(&data, &ModelConfig::default(), &TrainConfig { seed: 10, ..tc }).unwrap();
    assert_ne!(a.to_bytes().unwrap(), c.to_bytes().unwrap());
}

#[test]
fn batch_larger_than_dataset_is_rejected() {
    let data = synthetic(20, 0.1, 0.05, 2);
    let tc = TrainConfig {
        batch_size: 21,
        ..Default::default()
    };
    assert!(fit_vae(&data, &ModelConfig::default(), &tc).is_err());
}

#[test]
fn nn_regressor_fits_noiseless_linear_data() {
    let mut rng = derive(3, Stream::Synthetic, &[]);
    let (n, d) = (200, 5);
    let x = Tensor::matrix(n, d, standard_normals(&mut rng, n * d)).unwrap();
    let w = [0.5, -0.3, 0.2, 0.1, -0.4];
    let y: Vec<f64> = (0..n).map(|i| dot(x.row(i), &w)).collect();
    let model_config = ModelConfig {
        input_dim: d,
        ..Default::default()
    };
    let nn = fit_nn_regressor(&x, &y, &model_config, &TrainConfig::default()).unwrap();
    let r2 = r2_score(&y, &nn.predict(&x).unwrap()).unwrap();
    assert!(r2 > 0.99, "r2 {r2}");
}

#[test]
fn reconstruction_captures_most_variance_on_noiseless_data() {
    let data = synthetic(400, 0.0, 0.0, 6);
    let (ck, _) = fit_vae(&data, &ModelConfig::default(), &TrainConfig::default()).unwrap();
    let (std, _) = data.standardize().unwrap();
    let z = ck.model.encode(&std.x).unwrap().mean;
    let recon = ck.model.decode(&z).unwrap();
    let mse = recon
        .values()
        .iter()
        .zip(std.x.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / std.x.len() as f64;
    // standardized features have unit variance
    assert!(mse < 0.1, "mse {mse}");
}

#[test]
fn predictions_are_in_target_units() {
    let data = synthetic(200, 0.1, 0.05, 5);
    let (ck, _) = fit_vae(&data, &ModelConfig::default(), &TrainConfig { epochs: 100, ..Default::default() }).unwrap();
    let pred = ck.predict(&data.x).unwrap();
    let m = mean(&pred.mean);
    assert!((18.0..=86.0).contains(&m), "mean prediction {m}");
    assert!(pred.std.iter().all(|s| *s > 0.0));
}
