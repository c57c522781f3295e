//! Feature-space VBSW on a double moon with corrupted training labels,
//! scored on clean test data.

use locvar::experiments::{run_label_noise, LabelNoiseConfig, Task, VbswToyConfig};
use locvar::models::{Loss, Optimizer, TrainConfig};

fn main() -> locvar::error::Result<()> {
    let cfg = LabelNoiseConfig {
        base: VbswToyConfig {
            task: Task::default(),
            hidden: vec![16],
            train: TrainConfig {
                optimizer: Optimizer::adam(),
                learning_rate: 1e-2,
                batch_size: 300,
                epochs: 500,
                loss: Loss::WeightedBce,
                seed: 0,
            },
            feature_space: true,
            ..VbswToyConfig::default()
        },
        levels: vec![0.1, 0.2, 0.3, 0.4],
    };
    let out = run_label_noise(&cfg, &[0, 1, 2])?;
    for s in &out.summaries {
        println!("{:<14} accuracy {:.4}", s.arm, s.stats["accuracy"].mean);
    }
    Ok(())
}
