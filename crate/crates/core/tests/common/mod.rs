#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

/// Raw IDX bytes for `n` synthetic 28x28 digits: class `c` lights the
/// pixels of rows `2c+4..2c+7`, plus a deterministic sprinkle of others.
pub fn idx_bytes(n: usize, offset: usize) -> (Vec<u8>, Vec<u8>) {
    let mut images = vec![0, 0, 8, 3];
    images.extend_from_slice(&(n as u32).to_be_bytes());
    images.extend_from_slice(&28u32.to_be_bytes());
    images.extend_from_slice(&28u32.to_be_bytes());
    let mut labels = vec![0, 0, 8, 1];
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    for i in 0..n {
        let label = (i + offset) % 10;
        labels.push(label as u8);
        for p in 0..784 {
            let row = p / 28;
            let lit = row >= 2 * label + 4 && row < 2 * label + 7 && (p % 28) > 6 && (p % 28) < 22;
            let noise = ((p * 31 + i * 17) % 97) == 0;
            images.push(if lit { 255 } else if noise { 128 } else { 0 });
        }
    }
    (images, labels)
}

pub fn write_mnist(dir: &Path, n_train: usize, n_test: usize) {
    std::fs::create_dir_all(dir).unwrap();
    let (ti, tl) = idx_bytes(n_train, 0);
    std::fs::write(dir.join("train-images-idx3-ubyte"), ti).unwrap();
    std::fs::write(dir.join("train-labels-idx1-ubyte"), tl).unwrap();
    let (si, sl) = idx_bytes(n_test, 3);
    std::fs::write(dir.join("t10k-images-idx3-ubyte"), si).unwrap();
    std::fs::write(dir.join("t10k-labels-idx1-ubyte"), sl).unwrap();
}

pub fn loco_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_loco"))
}

/// Runs the binary and returns (exit code, stdout, stderr).
pub fn loco(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(loco_bin())
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Small but complete config for the synthetic data.
pub fn small_config(mnist: &Path, out: &Path) -> String {
    format!(
        "mnist_dir = {}\noutput_dir = {}\nlayers = 784,20,10\ntrain_subset = 200\ntest_subset = 50\nepochs = 1\n\
         eval_every = 50\nprojector.buffer = 64\nprojector.refresh = 20\n",
        mnist.display(),
        out.display()
    )
}
