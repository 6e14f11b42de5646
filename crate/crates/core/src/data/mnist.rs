//! MNIST in its big-endian IDX container.

use std::path::Path;

use super::{Dataset, Readout, Sample, Split};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_SIDE: usize = 28;
const CLASSES: usize = 10;

fn read_u32(bytes: &[u8], offset: usize, name: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(name, "truncated header"))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX image file and its label file into a rate-coded dataset.
/// Pixels are scaled by `1/255`.
pub fn parse_mnist(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset> {
    if read_u32(images, 0, "images")? != IMAGES_MAGIC {
        return Err(Error::format("images", "bad magic number"));
    }
    if read_u32(labels, 0, "labels")? != LABELS_MAGIC {
        return Err(Error::format("labels", "bad magic number"));
    }
    let count = read_u32(images, 4, "images")? as usize;
    let rows = read_u32(images, 8, "images")? as usize;
    let cols = read_u32(images, 12, "images")? as usize;
    let label_count = read_u32(labels, 4, "labels")? as usize;
    if rows != MNIST_SIDE || cols != MNIST_SIDE {
        return Err(Error::format("images", format!("expected 28x28 images, got {rows}x{cols}")));
    }
    if count != label_count {
        return Err(Error::format(
            "labels",
            format!("{count} images but {label_count} labels"),
        ));
    }
    let pixels = rows * cols;
    let image_data = &images[16..];
    let label_data = &labels[8..];
    if image_data.len() != count * pixels {
        return Err(Error::format("images", format!("expected {} pixel bytes, found {}", count * pixels, image_data.len())));
    }
    if label_data.len() != count {
        return Err(Error::format("labels", format!("expected {count} label bytes, found {}", label_data.len())));
    }

    let samples = image_data
        .chunks_exact(pixels)
        .zip(label_data)
        .enumerate()
        .map(|(i, (img, &label))| {
            if label as usize >= CLASSES {
                return Err(Error::format("labels", format!("label {label} at index {i}")));
            }
            Ok(Sample {
                rates: img.iter().map(|&p| p as f64 / 255.0).collect(),
                label: label as usize,
                task_id: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset {
        samples,
        num_classes: CLASSES,
        input_dim: pixels,
        split,
        readout: Readout::OneHot { classes: CLASSES },
    })
}

pub fn load_mnist(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;
    parse_mnist(&images, &labels, split)
}

/// Loads `{train,t10k}-{images-idx3,labels-idx1}-ubyte` from `dir`.
pub fn load_mnist_dir(dir: &Path, split: Split) -> Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    load_mnist(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
        split,
    )
}

/// Serialises rates back to IDX image bytes, rounding `rate * 255`.
pub fn encode_idx_images(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + ds.len() * ds.input_dim);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    out.extend_from_slice(&(MNIST_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(MNIST_SIDE as u32).to_be_bytes());
    for s in &ds.samples {
        out.extend(s.rates.iter().map(|r| (r * 255.0).round() as u8));
    }
    out
}

pub fn encode_idx_labels(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + ds.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    out.extend(ds.samples.iter().map(|s| s.label as u8));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two 28x28 images built byte by byte: the first is black except pixel
    /// 0 (255) and pixel 783 (51); the second is uniformly 102.
    pub(crate) fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut images = vec![0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        let mut first = vec![0u8; 784];
        first[0] = 255;
        first[783] = 51;
        images.extend(first);
        images.extend(vec![102u8; 784]);
        let labels = vec![0x00, 0x00, 0x08, 0x01, 0, 0, 0, 2, 7, 3];
        (images, labels)
    }

    #[test]
    fn fixture_parses_to_exact_rates() {
        let (images, labels) = fixture();
        let ds = parse_mnist(&images, &labels, Split::Train).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.input_dim, 784);
        assert_eq!(ds.samples[0].label, 7);
        assert_eq!(ds.samples[1].label, 3);
        assert_eq!(ds.samples[0].rates[0], 1.0);
        assert_eq!(ds.samples[0].rates[1], 0.0);
        assert_eq!(ds.samples[0].rates[783], 0.2);
        assert!(ds.samples[1].rates.iter().all(|&r| r == 0.4));
        ds.validate().unwrap();
    }

    #[test]
    fn fixture_round_trips() {
        let (images, labels) = fixture();
        let ds = parse_mnist(&images, &labels, Split::Test).unwrap();
        assert_eq!(encode_idx_images(&ds), images);
        assert_eq!(encode_idx_labels(&ds), labels);
    }

    #[test]
    fn bad_magic_rejected() {
        let (mut images, labels) = fixture();
        images[3] = 0x04;
        assert!(matches!(parse_mnist(&images, &labels, Split::Train), Err(Error::Format { .. })));
    }

    #[test]
    fn count_mismatch_rejected() {
        let (images, mut labels) = fixture();
        labels[7] = 3;
        labels.push(1);
        assert!(matches!(parse_mnist(&images, &labels, Split::Train), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_file_rejected() {
        let (images, labels) = fixture();
        assert!(matches!(parse_mnist(&images[..images.len() - 1], &labels, Split::Train), Err(Error::Format { .. })));
        assert!(matches!(parse_mnist(&images[..10], &labels, Split::Train), Err(Error::Format { .. })));
    }
}
