//! Binary checkpoint, all integers and floats little-endian:
//!
//! ```text
//! magic "EQSPIKE\0" | version u8
//! n_layers u32 | layer sizes u32 * n_layers
//! hyper: gamma_lif gamma_li u_th beta eta_r (f64) tau n_filt t_free t_nudge (u64) t_refract (u32) dt input_lr_scale (f64)
//! trainer: target_hi target_lo skip_threshold (f64) skip_nudge (u8) nudge_rates (u8) init_gain lr_decay (f64) epochs seed (u64)
//! epoch u64 | synops_cumulative u64
//! rng: seed [u8; 32] | stream u64 | word_pos u128
//! blocks in order, each rows*cols f64 row-major
//! biases per layer, layer_size f64 each
//! ```

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::data::InputEncoder;
use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::snn::{Topology, WeightStore};
use crate::trainer::{NudgeRates, Trainer, TrainerConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EQSPIKE\0";
pub const CHECKPOINT_VERSION: u8 = 1;

/// Complete trainer state; restoring it resumes training bit-exactly.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub topology: Topology,
    pub config: TrainerConfig,
    pub epoch: usize,
    pub synops_cumulative: u64,
    pub rng: ChaCha8Rng,
    pub weights: WeightStore,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        Self {
            topology: t.topology.clone(),
            config: t.config.clone(),
            epoch: t.epoch,
            synops_cumulative: t.synops_cumulative,
            rng: t.rng.clone(),
            weights: t.weights.clone(),
        }
    }

    pub fn into_trainer(self) -> Result<Trainer> {
        self.config.validate()?;
        self.weights.check_matches(&self.topology)?;
        Ok(Trainer {
            encoder: InputEncoder::calibrate(&self.config.hyper),
            topology: self.topology,
            config: self.config,
            weights: self.weights,
            rng: self.rng,
            epoch: self.epoch,
            synops_cumulative: self.synops_cumulative,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.0.push(CHECKPOINT_VERSION);
        let sizes = self.topology.layer_sizes();
        w.u32(sizes.len() as u32);
        for &s in sizes {
            w.u32(s as u32);
        }
        let h = &self.config.hyper;
        for x in [h.gamma_lif, h.gamma_li, h.u_th, h.beta, h.eta_r] {
            w.f64(x);
        }
        for x in [h.tau, h.n_filt, h.t_free, h.t_nudge] {
            w.u64(x as u64);
        }
        w.u32(h.t_refract);
        w.f64(h.dt);
        w.f64(h.input_lr_scale);
        let c = &self.config;
        for x in [c.target_rate_hi, c.target_rate_lo, c.skip_threshold] {
            w.f64(x);
        }
        w.0.push(c.skip_nudge as u8);
        w.0.push(match c.nudge_rates {
            NudgeRates::Instantaneous => 0,
            NudgeRates::FreePhase => 1,
        });
        w.f64(c.init_gain);
        w.f64(c.lr_decay);
        w.u64(c.epochs as u64);
        w.u64(c.seed);
        w.u64(self.epoch as u64);
        w.u64(self.synops_cumulative);
        w.0.extend_from_slice(&self.rng.get_seed());
        w.u64(self.rng.get_stream());
        w.0.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        for b in &self.weights.blocks {
            for &x in b.as_slice() {
                w.f64(x);
            }
        }
        for layer in &self.weights.biases {
            for &x in layer {
                w.f64(x);
            }
        }
        w.0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.take(1)?[0];
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let n_layers = r.u32()? as usize;
        if n_layers > 1024 {
            return Err(Error::Checkpoint(format!("implausible layer count {n_layers}")));
        }
        let sizes = (0..n_layers).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
        let topology = Topology::new(sizes)?;
        let hyper = HyperParams {
            gamma_lif: r.f64()?,
            gamma_li: r.f64()?,
            u_th: r.f64()?,
            beta: r.f64()?,
            eta_r: r.f64()?,
            tau: r.u64()? as usize,
            n_filt: r.u64()? as usize,
            t_free: r.u64()? as usize,
            t_nudge: r.u64()? as usize,
            t_refract: r.u32()?,
            dt: r.f64()?,
            input_lr_scale: r.f64()?,
        };
        let mut config = TrainerConfig::new(hyper);
        config.target_rate_hi = r.f64()?;
        config.target_rate_lo = r.f64()?;
        config.skip_threshold = r.f64()?;
        config.skip_nudge = match r.take(1)?[0] {
            0 => false,
            1 => true,
            x => return Err(Error::Checkpoint(format!("bad skip_nudge flag {x}"))),
        };
        config.nudge_rates = match r.take(1)?[0] {
            0 => NudgeRates::Instantaneous,
            1 => NudgeRates::FreePhase,
            x => return Err(Error::Checkpoint(format!("bad nudge_rates tag {x}"))),
        };
        config.init_gain = r.f64()?;
        config.lr_decay = r.f64()?;
        config.epochs = r.u64()? as usize;
        config.seed = r.u64()?;
        let epoch = r.u64()? as usize;
        let synops_cumulative = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        let mut weights = WeightStore::zeros(&topology);
        for b in &mut weights.blocks {
            for x in b.as_mut_slice() {
                *x = r.f64()?;
            }
        }
        for layer in &mut weights.biases {
            for x in layer.iter_mut() {
                *x = r.f64()?;
            }
        }
        if r.at != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        Ok(Self {
            topology,
            config,
            epoch,
            synops_cumulative,
            rng,
            weights,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_file(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&super::read_file(path)?)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at + n;
        let s = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| Error::Checkpoint(format!("file ends at byte {}, needed {end}", self.bytes.len())))?;
        self.at = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
