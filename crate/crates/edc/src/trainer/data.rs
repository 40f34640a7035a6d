//! Dataset ingestion and synthetic fixtures.
//!
//! [`load_idx`] reads the big-endian IDX container (magic `0x00000803` for
//! images, `0x00000801` for labels). [`synthetic_dataset`] builds the fast
//! 8x8 test fixture; [`synthetic_digits`] renders a 28x28 ten-class digit
//! set for desk-scale runs when the real IDX files are not on disk.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::net::Tensor4;
use crate::{scalar, Scalar};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Labeled image batch with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `(n, c, h, w)`
    pub images: Tensor4<f32>,
    pub labels: Vec<u8>,
    pub classes: usize,
    pub split: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copies the first `n` samples (or fewer if the set is smaller).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let stride = self.sample_stride();
        Dataset {
            images: Tensor4::new(
                [n, self.images.dims()[1], self.images.dims()[2], self.images.dims()[3]],
                self.images.data()[..n * stride].to_vec(),
            ),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
            split: self.split.clone(),
        }
    }

    fn sample_stride(&self) -> usize {
        let [_, c, h, w] = self.images.dims();
        c * h * w
    }

    /// Gathers the given samples into a batch tensor of scalar type `T`.
    pub fn batch<T: Scalar>(&self, idxs: &[usize]) -> (Tensor4<T>, Vec<u8>) {
        let [_, c, h, w] = self.images.dims();
        let stride = self.sample_stride();
        let mut data = Vec::with_capacity(idxs.len() * stride);
        let mut labels = Vec::with_capacity(idxs.len());
        for &i in idxs {
            data.extend(
                self.images.data()[i * stride..(i + 1) * stride]
                    .iter()
                    .map(|&v| scalar::<T>(v as f64)),
            );
            labels.push(self.labels[i]);
        }
        (Tensor4::new([idxs.len(), c, h, w], data), labels)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, TrainError> {
    std::fs::read(path).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, TrainError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| TrainError::Truncated {
            path: path.display().to_string(),
            wanted: offset + 4,
            had: bytes.len(),
        })
}

/// Loads an IDX image/label file pair into a normalized dataset.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset, TrainError> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let img = read_file(images_path)?;
    let magic = be_u32(&img, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(TrainError::BadMagic {
            path: images_path.display().to_string(),
            expected: IDX_IMAGES_MAGIC,
            got: magic,
        });
    }
    let n = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let wanted = 16 + n * rows * cols;
    if img.len() < wanted {
        return Err(TrainError::Truncated {
            path: images_path.display().to_string(),
            wanted,
            had: img.len(),
        });
    }

    let lab = read_file(labels_path)?;
    let magic = be_u32(&lab, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(TrainError::BadMagic {
            path: labels_path.display().to_string(),
            expected: IDX_LABELS_MAGIC,
            got: magic,
        });
    }
    let n_labels = be_u32(&lab, 4, labels_path)? as usize;
    if lab.len() < 8 + n_labels {
        return Err(TrainError::Truncated {
            path: labels_path.display().to_string(),
            wanted: 8 + n_labels,
            had: lab.len(),
        });
    }
    if n != n_labels {
        return Err(TrainError::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }

    let data: Vec<f32> = img[16..wanted].iter().map(|&b| b as f32 / 255.0).collect();
    let labels = lab[8..8 + n].to_vec();
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    Ok(Dataset {
        images: Tensor4::new([n, 1, rows, cols], data),
        labels,
        classes,
        split: "idx".into(),
    })
}

/// Seeded 8x8 single-channel blob images, linearly separable by
/// construction: class `k` lights its own block of pixels. Labels are
/// assigned round-robin, so counts per class are balanced.
pub fn synthetic_dataset(seed: u64, n: usize, classes: usize) -> Dataset {
    assert!(classes >= 1 && n >= classes, "need n >= classes >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = 64usize;
    let region = pixels / classes;
    let mut data = Vec::with_capacity(n * pixels);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let start = class * region;
        let end = if class == classes - 1 { pixels } else { start + region };
        for p in 0..pixels {
            let v = if (start..end).contains(&p) {
                0.7 + 0.3 * rng.random::<f32>()
            } else {
                0.15 * rng.random::<f32>()
            };
            data.push(v);
        }
        labels.push(class as u8);
    }
    Dataset {
        images: Tensor4::new([n, 1, 8, 8], data),
        labels,
        classes,
        split: "synthetic".into(),
    }
}

/// Classic 5x7 bitmaps for the digits 0-9, row-major, one bit per pixel.
const DIGIT_FONT: [[u8; 7]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110], // 0
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110], // 1
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111], // 2
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110], // 3
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010], // 4
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110], // 5
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110], // 6
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000], // 7
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110], // 8
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100], // 9
];

/// Seeded 28x28 ten-class digit renderings: an upscaled 5x7 glyph with
/// random placement, stroke-pixel dropout, intensity jitter, and background
/// noise. Balanced labels, deterministic for a given seed. Serves as the
/// desk-scale stand-in when MNIST IDX files are unavailable.
pub fn synthetic_digits(seed: u64, n: usize) -> Dataset {
    const SIDE: usize = 28;
    const SCALE: usize = 3; // glyph becomes 15x21
    let glyph_w = 5 * SCALE;
    let glyph_h = 7 * SCALE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0f32; n * SIDE * SIDE];
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 10;
        let img = &mut data[i * SIDE * SIDE..(i + 1) * SIDE * SIDE];
        for v in img.iter_mut() {
            *v = 0.25 * rng.random::<f32>();
        }
        let off_y = rng.random_range(0..=(SIDE - glyph_h));
        let off_x = rng.random_range(0..=(SIDE - glyph_w));
        let brightness = 0.5 + 0.5 * rng.random::<f32>();
        for gy in 0..7 {
            for gx in 0..5 {
                if DIGIT_FONT[class][gy] >> (4 - gx) & 1 == 0 {
                    continue;
                }
                for dy in 0..SCALE {
                    for dx in 0..SCALE {
                        // eroded strokes: some sub-pixels stay background
                        if rng.random::<f32>() < 0.18 {
                            continue;
                        }
                        let y = off_y + gy * SCALE + dy;
                        let x = off_x + gx * SCALE + dx;
                        let jitter = 0.7 + 0.3 * rng.random::<f32>();
                        img[y * SIDE + x] = (brightness * jitter).min(1.0);
                    }
                }
            }
        }
        labels.push(class as u8);
    }
    Dataset {
        images: Tensor4::new([n, 1, SIDE, SIDE], data),
        labels,
        classes: 10,
        split: "digits".into(),
    }
}
