mod common;

use std::path::PathBuf;

use loco::data::{load_nettalk, ALPHABET, WINDOW};
use loco::experiments::{run_standard, ExperimentConfig};

/// Words over a few letters whose phoneme is the letter itself; the first
/// letter carries primary stress.
fn synthetic_corpus(words: usize) -> String {
    let letters: Vec<char> = "abdfklmnpst".chars().collect();
    let mut state = 12345u64;
    let mut next = |n: usize| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) % n as u64) as usize
    };
    let mut text = String::new();
    for _ in 0..words {
        let len = 2 + next(5);
        let word: String = (0..len).map(|_| letters[next(letters.len())]).collect();
        let stress: String = (0..len).map(|i| if i == 0 { '1' } else { '0' }).collect();
        text.push_str(&format!("{word}\t{word}\t{stress}\t0\n"));
    }
    text
}

#[test]
fn training_on_corpus_beats_chance() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, synthetic_corpus(400)).unwrap();
    let (all, codebook) = load_nettalk(&corpus).unwrap();
    assert_eq!(all.input_dim, WINDOW * ALPHABET.len());

    let cfg = ExperimentConfig::parse(&format!(
        "dataset = nettalk\nnettalk_path = {}\noutput_dir = {}\nlayers = 203,60,26\nepochs = 10\n\
         train_subset = 0\ntest_subset = 0\nrule = loco\neta = 0.05\nsigma = 0.25\n",
        corpus.display(),
        dir.path().join("out").display()
    ))
    .unwrap();
    let o = run_standard(&cfg).unwrap();
    let chance = 1.0 / codebook.classes.len() as f64;
    eprintln!("accuracy {:.4}, chance {chance:.4}", o.final_eval.accuracy);
    assert!(o.final_eval.accuracy > chance, "accuracy {} vs chance {chance}", o.final_eval.accuracy);
}

#[test]
fn layer_sizes_must_fit_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, synthetic_corpus(10)).unwrap();
    let cfg = ExperimentConfig::parse(&format!(
        "dataset = nettalk\nnettalk_path = {}\noutput_dir = {}\nlayers = 784,10,10\n",
        corpus.display(),
        dir.path().join("out").display()
    ))
    .unwrap();
    assert_eq!(run_standard(&cfg).err().unwrap().exit_code(), 3);
}

/// The full corpus is not redistributed with the repository; point
/// `LOCO_NETTALK` at it to check the class inventory.
#[test]
fn real_corpus_has_116_classes() {
    let path = std::env::var_os("LOCO_NETTALK")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/nettalk/nettalk.data"));
    if !path.is_file() {
        eprintln!("NETtalk corpus not found at {}; skipping", path.display());
        return;
    }
    let (ds, codebook) = load_nettalk(&path).unwrap();
    assert_eq!(codebook.classes.len(), 116);
    ds.validate().unwrap();
}
