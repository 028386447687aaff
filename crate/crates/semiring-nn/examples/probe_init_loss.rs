use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semiring_nn::data;
use semiring_nn::model::FcModel;
use semiring_nn::tape::Tape;
use semiring_nn::tensor::Tensor;
use semiring_nn::train::{DatasetKey, TrainConfig, Variant};

fn main() {
    for (ds, variant, mu, w) in [
        (DatasetKey::Iris, Variant::Relu, None, 4),
        (DatasetKey::Iris, Variant::MaxPlus, None, 4),
        (DatasetKey::Iris, Variant::LogPlus, Some(1.0), 4),
        (DatasetKey::Circles, Variant::Relu, None, 16),
        (DatasetKey::Circles, Variant::LogPlus, Some(1.0), 16),
        (DatasetKey::Spheres, Variant::MaxPlus, None, 32),
    ] {
        let cfg = TrainConfig {
            dataset: ds, variant, mu,
            epochs: 1, batchsize: 16, width: w,
            lr_linear: 0.02, lr_tropical: 0.01, lr_logarithmic: 0.008,
            weight_decay: 0.01, warmup_epochs: 0, warmup_factor: 0.1,
            annihilation_factor: 0.001, seed: 42, runs: 1,
            data_dir: data::default_data_dir(), synth_n: 400, synth_noise_sd: 0.45,
        };
        let (train, _) = semiring_nn::train::load_dataset(&cfg).unwrap();
        for seed in [7u64, 42] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = FcModel::<f32>::init(cfg.model_config(train.n_features(), train.n_classes), &mut rng).unwrap();
            let n = train.n_features();
            let b = train.len();
            let mut xd = Vec::new();
            let mut labels = Vec::new();
            for i in 0..b { xd.extend(train.features.row(i).iter().map(|&v| v as f32)); labels.push(train.labels[i]); }
            let x = Tensor::new(vec![b, n], xd).unwrap();
            let mut tape = Tape::new();
            let xv = tape.leaf("x", x);
            let pass = model.forward(&mut tape, xv).unwrap();
            let loss = tape.cross_entropy(pass.output, &labels).unwrap();
            let lnc = (train.n_classes as f64).ln();
            println!("{:?} {:?} mu={:?} seed={}: init loss {:.4} (ln c = {:.4}, ratio {:.2})",
                ds, variant, mu, seed, tape.value(loss).data()[0], lnc, tape.value(loss).data()[0] as f64 / lnc);
        }
    }
}
