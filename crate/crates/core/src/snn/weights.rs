use rand::Rng;

use super::Topology;
use crate::error::{Error, Result};

/// Dense row-major weight matrix between two adjacent layers.
///
/// Entry `(i, j)` couples neuron `i` of the lower layer with neuron `j` of
/// the upper layer and scales spikes travelling in either direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Block {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                what: "weight block",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, w: f64) {
        self.data[i * self.cols + j] = w;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, dw: f64) {
        self.data[i * self.cols + j] += dw;
    }

    /// Weights from lower neuron `i` to every upper neuron.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Symmetric inter-layer weights plus per-neuron biases.
///
/// `biases[0]` is always empty: input neurons are clamped and carry no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub blocks: Vec<Block>,
    pub biases: Vec<Vec<f64>>,
}

impl WeightStore {
    pub fn zeros(topology: &Topology) -> Self {
        let blocks = (0..topology.n_blocks())
            .map(|b| {
                let (r, c) = topology.block_shape(b);
                Block::zeros(r, c)
            })
            .collect();
        let biases = (0..topology.n_layers())
            .map(|l| {
                if l == 0 {
                    Vec::new()
                } else {
                    vec![0.0; topology.layer_size(l)]
                }
            })
            .collect();
        Self { blocks, biases }
    }

    /// Uniform initialisation in `±sqrt(6 / (fan_in + fan_out))` per block,
    /// biases at zero.
    pub fn glorot<R: Rng + ?Sized>(topology: &Topology, rng: &mut R) -> Self {
        Self::uniform_scaled(topology, 1.0, rng)
    }

    /// Like [`glorot`](Self::glorot) with every bound multiplied by `gain`.
    pub fn uniform_scaled<R: Rng + ?Sized>(topology: &Topology, gain: f64, rng: &mut R) -> Self {
        let mut w = Self::zeros(topology);
        for block in &mut w.blocks {
            let limit = gain * (6.0 / (block.rows + block.cols) as f64).sqrt();
            for x in block.as_mut_slice() {
                *x = rng.gen_range(-limit..=limit);
            }
        }
        w
    }

    /// Checks that every block and bias vector agrees with `topology`.
    pub fn check_matches(&self, topology: &Topology) -> Result<()> {
        if self.blocks.len() != topology.n_blocks() {
            return Err(Error::Shape {
                what: "number of weight blocks",
                expected: topology.n_blocks(),
                actual: self.blocks.len(),
            });
        }
        for (b, block) in self.blocks.iter().enumerate() {
            let (r, c) = topology.block_shape(b);
            if block.rows != r || block.cols != c {
                return Err(Error::Shape {
                    what: "weight block size",
                    expected: r * c,
                    actual: block.rows * block.cols,
                });
            }
        }
        if self.biases.len() != topology.n_layers() {
            return Err(Error::Shape {
                what: "number of bias vectors",
                expected: topology.n_layers(),
                actual: self.biases.len(),
            });
        }
        for (l, b) in self.biases.iter().enumerate() {
            let expected = if l == 0 { 0 } else { topology.layer_size(l) };
            if b.len() != expected {
                return Err(Error::Shape {
                    what: "bias vector",
                    expected,
                    actual: b.len(),
                });
            }
        }
        Ok(())
    }

    /// Shared weight between two adjacent neurons given by global index, in
    /// either order. `None` if they are not connected.
    pub fn between(&self, topology: &Topology, a: usize, b: usize) -> Option<f64> {
        let (la, lb) = (topology.layer_of(a), topology.layer_of(b));
        let (lo, hi, llo) = if la + 1 == lb {
            (a, b, la)
        } else if lb + 1 == la {
            (b, a, lb)
        } else {
            return None;
        };
        let i = lo - topology.offset(llo);
        let j = hi - topology.offset(llo + 1);
        Some(self.blocks[llo].get(i, j))
    }

    /// Bias of global neuron `n` (zero for input neurons).
    pub fn bias_of(&self, topology: &Topology, n: usize) -> f64 {
        let l = topology.layer_of(n);
        if l == 0 {
            0.0
        } else {
            self.biases[l][n - topology.offset(l)]
        }
    }

    /// Frobenius-style sum of absolute values over every weight and bias.
    pub fn l1_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.as_slice())
            .chain(self.biases.iter().flatten())
            .map(|x| x.abs())
            .sum()
    }

    /// Element-wise `self - other`, for measuring accumulated updates.
    pub fn difference(&self, other: &WeightStore) -> WeightStore {
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| Block {
                rows: a.rows,
                cols: a.cols,
                data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
            })
            .collect();
        let biases = self
            .biases
            .iter()
            .zip(&other.biases)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        WeightStore { blocks, biases }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let t = Topology::new(vec![784, 100, 10]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = WeightStore::glorot(&t, &mut rng);
        w.check_matches(&t).unwrap();
        let lim0 = (6.0f64 / 884.0).sqrt();
        assert!(w.blocks[0].as_slice().iter().all(|x| x.abs() <= lim0));
        assert!(w.biases[1].iter().chain(&w.biases[2]).all(|&b| b == 0.0));
        assert!(w.biases[0].is_empty());
    }

    #[test]
    fn between_is_symmetric() {
        let t = Topology::new(vec![2, 3, 1]).unwrap();
        let mut w = WeightStore::zeros(&t);
        w.blocks[0].set(1, 2, 0.25);
        w.blocks[1].set(2, 0, -0.5);
        assert_eq!(w.between(&t, 1, 4), Some(0.25));
        assert_eq!(w.between(&t, 4, 1), Some(0.25));
        assert_eq!(w.between(&t, 5, 4), Some(-0.5));
        assert_eq!(w.between(&t, 0, 5), None);
        assert_eq!(w.between(&t, 0, 1), None);
    }

    #[test]
    fn shape_checks() {
        let t = Topology::new(vec![2, 3, 1]).unwrap();
        let other = Topology::new(vec![2, 4, 1]).unwrap();
        let w = WeightStore::zeros(&t);
        assert!(w.check_matches(&other).is_err());
        assert!(Block::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
