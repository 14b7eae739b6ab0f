//! MNIST-style datasets and pixel-to-current encoding.

pub mod idx;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::snn::saturating_current;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Images stored as raw bytes; intensities are `byte / 255`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn from_parts(split: Split, rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        let dim = rows * cols;
        if dim == 0 || pixels.len() % dim != 0 {
            return Err(Error::Parse(format!(
                "pixel buffer of {} bytes is not a whole number of {rows}x{cols} images",
                pixels.len()
            )));
        }
        let n = pixels.len() / dim;
        if n != labels.len() {
            return Err(Error::CountMismatch {
                images: n,
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= 10) {
            return Err(Error::Parse(format!("label {bad} outside 0..10")));
        }
        Ok(Self {
            split,
            rows,
            cols,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn raw(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.pixels[i * d..(i + 1) * d]
    }

    /// Intensities of image `i` in `[0, 1]`.
    pub fn image(&self, i: usize) -> Vec<f64> {
        self.raw(i).iter().map(|&p| p as f64 / 255.0).collect()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// First `n` images (all of them if `n` exceeds the size).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            split: self.split,
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..n * self.dim()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// `n` images drawn without replacement with a seeded shuffle.
    pub fn shuffled_subset(&self, n: usize, seed: u64) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n.min(self.len()));
        let mut pixels = Vec::with_capacity(idx.len() * self.dim());
        let mut labels = Vec::with_capacity(idx.len());
        for &i in &idx {
            pixels.extend_from_slice(self.raw(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            split: self.split,
            rows: self.rows,
            cols: self.cols,
            pixels,
            labels,
        }
    }

    /// Mean fraction of non-zero pixels per image.
    pub fn active_pixel_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.pixels.iter().filter(|&&p| p > 0).count() as f64 / self.pixels.len() as f64
    }
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [format!("{stem}.gz"), stem.to_string()] {
        let p = dir.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::io(
        dir.join(stem),
        std::io::Error::new(std::io::ErrorKind::NotFound, "no such IDX file (plain or .gz)"),
    ))
}

/// Loads `{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]` from `dir`.
pub fn load_mnist(dir: &Path, split: Split) -> Result<Dataset> {
    let img_path = find_file(dir, &format!("{}-images-idx3-ubyte", split.prefix()))?;
    let lbl_path = find_file(dir, &format!("{}-labels-idx1-ubyte", split.prefix()))?;
    let images = idx::parse_images(&idx::read_maybe_gz(&img_path)?, &img_path)?;
    let labels = idx::parse_labels(&idx::read_maybe_gz(&lbl_path)?, &lbl_path)?;
    if images.count != labels.len() {
        return Err(Error::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    Dataset::from_parts(split, images.rows, images.cols, images.pixels, labels)
}

/// Linear intensity-to-current map onto `[0, i_max]`, with `i_max` the
/// smallest current that drives an isolated neuron at the maximum rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputEncoder {
    pub i_max: f64,
}

impl InputEncoder {
    pub fn calibrate(params: &HyperParams) -> Self {
        // a hair above the saturation edge so rounding cannot drop below it
        let edge = saturating_current(params, params.u_th * 1e-9);
        Self {
            i_max: edge + params.u_th * 1e-6,
        }
    }

    pub fn encode(&self, intensities: &[f64]) -> Vec<f64> {
        intensities.iter().map(|&x| x.clamp(0.0, 1.0) * self.i_max).collect()
    }

    pub fn encode_raw(&self, pixels: &[u8]) -> Vec<f64> {
        pixels.iter().map(|&p| p as f64 / 255.0 * self.i_max).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::fi_curve;

    #[test]
    fn from_parts_checks_counts() {
        let err = Dataset::from_parts(Split::Train, 1, 2, vec![0; 4], vec![1]).unwrap_err();
        assert!(matches!(err, Error::CountMismatch { images: 2, labels: 1 }));
    }

    #[test]
    fn subsets() {
        let d = Dataset::from_parts(Split::Test, 1, 1, vec![0, 10, 20, 30], vec![0, 1, 2, 3]).unwrap();
        assert_eq!(d.take(2).labels(), &[0, 1]);
        let s = d.shuffled_subset(3, 7);
        assert_eq!(s.len(), 3);
        for i in 0..3 {
            assert_eq!(s.raw(i)[0] as usize, 10 * s.label(i));
        }
        assert_eq!(s, d.shuffled_subset(3, 7));
    }

    #[test]
    fn encoder_endpoints() {
        let p = HyperParams::default();
        let enc = InputEncoder::calibrate(&p);
        let c = enc.encode(&[0.0, 1.0]);
        assert_eq!(c[0], 0.0);
        assert_eq!(fi_curve(&p, c[1], 1000), p.max_rate());
        assert!(fi_curve(&p, c[1] * 0.999, 1000) < p.max_rate());
    }
}
