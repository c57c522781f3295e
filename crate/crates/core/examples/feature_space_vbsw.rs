//! Train a network, weight its training set in the penultimate feature
//! space and refit only the output layer.

use locvar::dataset::{two_moons, WeightedDataset};
use locvar::models::{evaluate, train, Activation, HeadFit, Loss, MlpSpec, Optimizer, TrainConfig};
use locvar::vbsw::{feature_space_vbsw, VbswConfig};

fn main() -> locvar::error::Result<()> {
    let train_ds = two_moons(300, 0.1, 4)?;
    let test = two_moons(1000, 0.1, 99)?;
    let spec = MlpSpec::new(vec![2, 16, 16, 1], Activation::Sigmoid);
    let cfg = TrainConfig {
        optimizer: Optimizer::adam(),
        learning_rate: 1e-2,
        batch_size: 300,
        epochs: 500,
        loss: Loss::WeightedBce,
        seed: 4,
    };
    let base = train(&WeightedDataset::uniform(train_ds.clone()), &spec, &cfg)?;
    let head = HeadFit::Gradient {
        cfg: TrainConfig { epochs: 200, ..cfg.clone() },
        output: Activation::Sigmoid,
        init: None,
    };
    let vcfg = VbswConfig { k: 20, m: 20.0, categorical: Some(2) };
    let fit = feature_space_vbsw(&base, &train_ds, &vcfg, &head, true)?;
    let a = evaluate(&base, &test)?.accuracy.unwrap_or(f64::NAN);
    let b = evaluate(&fit.model, &test)?.accuracy.unwrap_or(f64::NAN);
    println!("base accuracy {a:.4}, retrained head {b:.4}");
    Ok(())
}
