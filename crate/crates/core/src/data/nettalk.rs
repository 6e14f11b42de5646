//! NETtalk text-to-phoneme corpus.
//!
//! Each line is `word<TAB>phonemes<TAB>stress[<TAB>tag]` with one phoneme
//! and one stress symbol per letter. Every letter becomes a sample: the
//! input is a 7-letter window centred on it (space-padded at word edges),
//! each letter one-hot over a 29-symbol alphabet; the class is the
//! (phoneme, stress) pair of the centre letter. Outputs use a 26-unit code:
//! 21 articulatory features of the phoneme and 5 stress units.

use std::collections::BTreeSet;
use std::path::Path;

use super::{Dataset, Readout, Sample, Split};
use crate::error::{Error, Result};

/// Input alphabet: 26 letters, padding, and two punctuation markers.
pub const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz -.";
pub const WINDOW: usize = 7;

const FEATURES: [&str; 21] = [
    "Labial", "Dental", "Alveolar", "Palatal", "Velar", "Glottal", "Stop", "Nasal", "Fricative",
    "Affricative", "Glide", "Liquid", "Voiced", "Front", "Central", "Back", "High", "Medium", "Low",
    "Tensed", "Rounded",
];
const STRESS: &str = "<>012";
const PHONEME_TABLE: &str = include_str!("../../assets/nettalk_phonemes.txt");

fn alphabet_index(c: char) -> usize {
    let c = c.to_ascii_lowercase();
    match c {
        'a'..='z' => c as usize - 'a' as usize,
        ' ' => 26,
        '-' | '\'' => 27,
        _ => 28,
    }
}

/// Phoneme feature table plus the corpus's observed class inventory.
#[derive(Clone, Debug, PartialEq)]
pub struct NettalkCodebook {
    phonemes: Vec<(char, Vec<f64>)>,
    /// Observed (phoneme, stress) classes, sorted; index = class label.
    pub classes: Vec<(char, char)>,
}

impl NettalkCodebook {
    /// Parses the bundled phoneme table.
    pub fn builtin() -> Self {
        Self::parse_table(PHONEME_TABLE).expect("bundled phoneme table is well formed")
    }

    fn parse_table(text: &str) -> Result<Self> {
        let mut phonemes = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let symbol = fields[0].chars().next().filter(|_| fields.len() >= 2 && fields[0].chars().count() == 1);
            let Some(symbol) = symbol else {
                return Err(Error::format("phoneme table", format!("line {}: malformed", n + 1)));
            };
            let mut bits = vec![0.0; FEATURES.len()];
            if fields[1] != "none" {
                for name in fields[1].split(',') {
                    let idx = FEATURES.iter().position(|f| *f == name).ok_or_else(|| {
                        Error::format("phoneme table", format!("line {}: unknown feature {name}", n + 1))
                    })?;
                    bits[idx] = 1.0;
                }
            }
            phonemes.push((symbol, bits));
        }
        Ok(Self {
            phonemes,
            classes: Vec::new(),
        })
    }

    pub fn output_dim() -> usize {
        FEATURES.len() + STRESS.len()
    }

    /// 26-unit code of a (phoneme, stress) pair.
    pub fn code(&self, phoneme: char, stress: char) -> Option<Vec<f64>> {
        let (_, bits) = self.phonemes.iter().find(|(p, _)| *p == phoneme)?;
        let s = STRESS.find(stress)?;
        let mut row = bits.clone();
        row.extend((0..STRESS.len()).map(|k| if k == s { 1.0 } else { 0.0 }));
        Some(row)
    }

    pub fn readout(&self) -> Readout {
        Readout::Codebook {
            rows: self
                .classes
                .iter()
                .map(|&(p, s)| self.code(p, s).expect("classes are validated on load"))
                .collect(),
        }
    }
}

/// Encodes the window centred on `word[center]`.
fn window_rates(word: &[char], center: usize) -> Vec<f64> {
    let mut rates = vec![0.0; WINDOW * ALPHABET.len()];
    let half = (WINDOW / 2) as isize;
    for slot in 0..WINDOW {
        let pos = center as isize + slot as isize - half;
        let c = if pos < 0 || pos >= word.len() as isize {
            ' '
        } else {
            word[pos as usize]
        };
        rates[slot * ALPHABET.len() + alphabet_index(c)] = 1.0;
    }
    rates
}

/// Parses corpus text. `source_name` labels error messages.
pub fn parse_nettalk(text: &str, source_name: &str) -> Result<(Dataset, NettalkCodebook)> {
    let mut codebook = NettalkCodebook::builtin();
    let mut rows: Vec<(Vec<f64>, (char, char))> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::format(
                source_name,
                format!("line {line_no}: expected 3 or 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let word: Vec<char> = fields[0].chars().collect();
        let phonemes: Vec<char> = fields[1].chars().collect();
        let stress: Vec<char> = fields[2].chars().collect();
        if word.is_empty() || phonemes.len() != word.len() || stress.len() != word.len() {
            return Err(Error::format(
                source_name,
                format!("line {line_no}: word, phoneme and stress strings differ in length"),
            ));
        }
        for i in 0..word.len() {
            let class = (phonemes[i], stress[i]);
            if codebook.code(class.0, class.1).is_none() {
                return Err(Error::format(
                    source_name,
                    format!("line {line_no}: unknown phoneme/stress pair {:?}", class),
                ));
            }
            rows.push((window_rates(&word, i), class));
        }
    }
    let inventory: BTreeSet<(char, char)> = rows.iter().map(|(_, c)| *c).collect();
    codebook.classes = inventory.into_iter().collect();
    let samples = rows
        .into_iter()
        .map(|(rates, class)| Sample {
            rates,
            label: codebook.classes.binary_search(&class).expect("class in inventory"),
            task_id: 0,
        })
        .collect();
    let dataset = Dataset {
        samples,
        num_classes: codebook.classes.len(),
        input_dim: WINDOW * ALPHABET.len(),
        split: Split::Train,
        readout: codebook.readout(),
    };
    Ok((dataset, codebook))
}

pub fn load_nettalk(path: &Path) -> Result<(Dataset, NettalkCodebook)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nettalk(&text, &path.display().to_string())
}
