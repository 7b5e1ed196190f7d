//! Binary checkpoint, little-endian throughout:
//!
//! ```text
//! "IMPCKPT v1\n"
//! u32 layer count, then per layer: weight tensor, bias tensor
//! log_sigma_l tensor, log_sigma_u tensor, u8 sigma_u_learnable
//! u64 optimizer step, f64 learning rate, u32 count, accumulator tensors
//! [u8; 32] rng seed, u64 rng stream, u128 rng word position
//! u64 iteration, [u8; 32] config digest
//! tensor = u32 rank, u64 dims..., f64 values...
//! ```

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::optim::OptState;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::protonets::{Dense, EmbeddingParams};

pub const CHECKPOINT_TAG: &[u8] = b"IMPCKPT v1\n";

/// Position of a ChaCha8 stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub opt: OptState,
    pub rng: RngState,
    pub iteration: u64,
    pub config_digest: [u8; 32],
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.extend((t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend((d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend(v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::InvalidArgument(format!(
                "checkpoint truncated at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let n = self.u32()? as usize;
        // Every element needs at least 8 bytes, which bounds corrupt counts.
        if n > (self.buf.len() - self.pos) / 8 + 1 {
            return Err(Error::InvalidArgument(format!("checkpoint: implausible {what} count {n}")));
        }
        Ok(n)
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.count("rank")?;
        let shape = (0..rank)
            .map(|_| self.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let len = match len {
            Some(l) if l <= (self.buf.len() - self.pos) / 8 => l,
            _ => return Err(Error::InvalidArgument(format!("checkpoint: bad tensor shape {shape:?}"))),
        };
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::new(shape, data)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = CHECKPOINT_TAG.to_vec();
        let layers = &self.params.embedding.layers;
        out.extend((layers.len() as u32).to_le_bytes());
        for l in layers {
            put_tensor(&mut out, &l.weight);
            put_tensor(&mut out, &l.bias);
        }
        put_tensor(&mut out, &self.params.log_sigma_l);
        put_tensor(&mut out, &self.params.log_sigma_u);
        out.push(self.params.sigma_u_learnable as u8);
        out.extend(self.opt.step.to_le_bytes());
        out.extend(self.opt.lr.to_le_bytes());
        out.extend((self.opt.v.len() as u32).to_le_bytes());
        for v in &self.opt.v {
            put_tensor(&mut out, v);
        }
        out.extend(self.rng.seed);
        out.extend(self.rng.stream.to_le_bytes());
        out.extend(self.rng.word_pos.to_le_bytes());
        out.extend(self.iteration.to_le_bytes());
        out.extend(self.config_digest);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if !buf.starts_with(CHECKPOINT_TAG) {
            return Err(Error::InvalidArgument("not an IMPCKPT v1 checkpoint".into()));
        }
        let mut r = Reader {
            buf,
            pos: CHECKPOINT_TAG.len(),
        };
        let n_layers = r.count("layer")?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let weight = r.tensor()?;
            let bias = r.tensor()?;
            layers.push(Dense { weight, bias });
        }
        let embedding = EmbeddingParams { layers };
        embedding.validate()?;
        let log_sigma_l = r.tensor()?;
        let log_sigma_u = r.tensor()?;
        let sigma_u_learnable = match r.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::InvalidArgument(format!("checkpoint: bad flag byte {b}"))),
        };
        let params = ModelParams {
            embedding,
            log_sigma_l,
            log_sigma_u,
            sigma_u_learnable,
        };
        let step = r.u64()?;
        let lr = r.f64()?;
        let n_v = r.count("accumulator")?;
        let v = (0..n_v).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
        let shapes_match = v.len() == params.tensors().len()
            && v.iter().zip(params.tensors()).all(|(a, b)| a.shape() == b.shape());
        if !shapes_match {
            return Err(Error::InvalidArgument(
                "checkpoint: optimizer state does not match the parameters".into(),
            ));
        }
        let rng = RngState {
            seed: r.array()?,
            stream: r.u64()?,
            word_pos: u128::from_le_bytes(r.array()?),
        };
        let iteration = r.u64()?;
        let config_digest = r.array()?;
        if r.pos != buf.len() {
            return Err(Error::InvalidArgument(format!(
                "checkpoint: {} trailing bytes",
                buf.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            params,
            opt: OptState { v, step, lr },
            rng,
            iteration,
            config_digest,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
