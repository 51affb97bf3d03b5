//! Reproducible Gaussian increment streams.
//!
//! Every stream is a ChaCha12 keystream keyed by the master seed and
//! selected by a stream number derived from `(replica, channel)`. Because
//! the cipher is counter based, a stream can be regenerated in isolation
//! and streams never depend on the order in which workers request them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Which Brownian motion a stream realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// Fast noise of the coupled process.
    BX,
    /// Slow noise, shared by the coupled, averaged and auxiliary runs.
    BY,
    /// Independent fast noise of the auxiliary process.
    BXtilde,
    /// Standard normals used to draw initial fast states.
    Init,
}

impl Channel {
    fn index(self) -> u64 {
        match self {
            Channel::BX => 0,
            Channel::BY => 1,
            Channel::BXtilde => 2,
            Channel::Init => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub replica: u64,
    pub channel: Channel,
}

impl StreamId {
    pub fn new(replica: u64, channel: Channel) -> Self {
        Self { replica, channel }
    }

    fn stream_number(self) -> u64 {
        (self.replica << 3) | self.channel.index()
    }
}

/// Offset applied to replica indices of dt-refinement runs so that they
/// never collide with the main replicas.
pub const REFINEMENT_REPLICA_OFFSET: u64 = 1 << 56;

/// Matrix of i.i.d. `N(0, step * Id)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub stream_id: StreamId,
    pub step: f64,
    dim: usize,
    increments: Vec<f64>,
}

impl NoisePath {
    pub fn steps(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.increments.len() / self.dim
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Sums consecutive blocks of `factor` rows, giving the increments of
    /// the same Brownian path on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> NoisePath {
        assert!(factor >= 1 && self.steps().is_multiple_of(factor));
        let coarse_steps = self.steps() / factor;
        let mut increments = vec![0.0; coarse_steps * self.dim];
        for k in 0..coarse_steps {
            for j in 0..factor {
                let row = self.row(k * factor + j);
                for (acc, v) in increments[k * self.dim..(k + 1) * self.dim].iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        NoisePath {
            stream_id: self.stream_id,
            step: self.step * factor as f64,
            dim: self.dim,
            increments,
        }
    }

    /// Cumulative sum of the rows, i.e. the Brownian path on the grid
    /// (starting from zero, `steps + 1` points).
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = vec![0.0; (self.steps() + 1) * self.dim];
        for k in 0..self.steps() {
            for d in 0..self.dim {
                out[(k + 1) * self.dim + d] = out[k * self.dim + d] + self.increments[k * self.dim + d];
            }
        }
        out
    }
}

fn stream_rng(seed: u64, id: StreamId) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(id.stream_number());
    rng
}

/// Generates `steps` rows of `N(0, step * Id_dim)` increments for stream
/// `id` under master seed `seed`.
pub fn generate_noise(seed: u64, id: StreamId, steps: usize, step: f64, dim: usize) -> NoisePath {
    let mut rng = stream_rng(seed, id);
    let scale = step.sqrt();
    let increments = (0..steps * dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    NoisePath { stream_id: id, step, dim, increments }
}

/// `count` standard normal draws from stream `id`.
pub fn standard_normals(seed: u64, id: StreamId, count: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, id);
    (0..count).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// A general-purpose generator for auxiliary sampling (bootstrap,
/// probe pairs) keyed the same way as the noise streams.
pub fn auxiliary_rng(seed: u64, replica: u64) -> ChaCha12Rng {
    stream_rng(seed ^ 0x9e37_79b9_7f4a_7c15, StreamId::new(replica, Channel::Init))
}
