#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

/// A small config covering every CLI subcommand.
pub const TINY_CONFIG: &str = r#"
[toy1d]
function = "tanh"
train = { optimizer = { kind = "adam", beta1 = 0.9, beta2 = 0.999, eps = 1e-7 }, learning_rate = 1e-2, batch_size = 16, epochs = 150, loss = "weighted_mse", seed = 0 }
test_points = 200

[bateman]
n = 120
n_prime = 120
n_gmm = 3
hidden = [8]
train = { optimizer = { kind = "adam", beta1 = 0.9, beta2 = 0.999, eps = 1e-7 }, learning_rate = 1e-2, batch_size = 240, epochs = 20, loss = "weighted_mse", seed = 0 }
n_test = 500
grid = 4
t_grid = 5

[vbsw]
task = { kind = "double-moon", n_train = 80, n_test = 200, noise = 0.1, test_seed = 3 }
vbsw = { k = 6, m = 10.0 }
train = { optimizer = { kind = "sgd" }, learning_rate = 0.05, batch_size = 40, epochs = 40, loss = "weighted_bce", seed = 0 }

[hyper_grid]
m_min = 2.0
m_max = 10.0
m_count = 2
k_min = 4
k_max = 8
k_count = 2
[hyper_grid.base]
task = { kind = "double-moon", n_train = 60, n_test = 100, noise = 0.1, test_seed = 3 }
train = { optimizer = { kind = "sgd" }, learning_rate = 0.05, batch_size = 30, epochs = 20, loss = "weighted_bce", seed = 0 }

[label_noise]
levels = [0.1, 0.3]
[label_noise.base]
task = { kind = "double-moon", n_train = 60, n_test = 100, noise = 0.1, test_seed = 3 }
vbsw = { k = 6, m = 10.0 }
train = { optimizer = { kind = "sgd" }, learning_rate = 0.05, batch_size = 30, epochs = 20, loss = "weighted_bce", seed = 0 }

[tbs_sample]
function = "runge"

[vbsw_weights]
task = { kind = "double-moon", n_train = 100, n_test = 10, noise = 0.1, test_seed = 3 }
vbsw = { k = 10, m = 100.0 }
"#;

pub const SUBCOMMANDS: [&str; 7] = [
    "toy1d",
    "bateman",
    "vbsw",
    "hypergrid",
    "noise",
    "tbs-sample",
    "vbsw-weights",
];

pub fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_locvar"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

/// Every CSV file in `dir`, by name.
pub fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("output dir") {
        let path = entry.expect("entry").path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(name, std::fs::read(&path).expect("read csv"));
        }
    }
    out
}
