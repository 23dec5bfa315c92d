#![allow(dead_code)]

use std::path::PathBuf;

use alasso::{BaseDataset, Dataset, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Learnable synthetic classification data: every class has a random
/// prototype in `[0, 1]^dim`, examples are prototype plus uniform noise of
/// width `noise`.
pub fn synthetic(
    n_train: usize,
    n_test: usize,
    dim: usize,
    classes: usize,
    noise: f64,
    seed: u64,
) -> BaseDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let protos: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut make = |n: usize| {
        let mut pixels = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % classes;
            labels.push(c);
            for &p in &protos[c][..dim] {
                let v: f64 = p + noise * (rng.random::<f64>() - 0.5);
                pixels.push(v.clamp(0.0, 1.0));
            }
        }
        Dataset::new(Matrix::from_vec(n, dim, pixels).unwrap(), labels, classes).unwrap()
    };
    let train = make(n_train);
    let test = make(n_test);
    BaseDataset::new(train, test).unwrap()
}

/// Directory with the canonical MNIST files, if present.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("MNIST_DIR")
        .or_else(|| std::env::var_os("ALASSO_DATASET_DIR"))
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let has = |stem: &str| dir.join(stem).exists() || dir.join(format!("{stem}.gz")).exists();
    has("train-images-idx3-ubyte").then_some(dir)
}
