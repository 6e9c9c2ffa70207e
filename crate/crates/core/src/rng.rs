//! Counter-based Gaussian noise.
//!
//! Every random number is a pure function of `(seed, stream, lane, index)`, so a
//! particle's increments do not depend on how the work is scheduled across
//! threads. Lanes index particles or replicas; indices count base time steps.
//!
//! A [`NoisePlan`] with `substeps = c` builds each increment of size `h` as the
//! sum of `c` base increments of size `h / c`. Plans that share a seed and the
//! base step therefore sample the *same* Brownian path at different
//! resolutions, which is what pathwise h-refinement tests need.

use std::f64::consts::PI;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const LANE_MUL: u64 = 0xd1b5_4a32_d192_ed03;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Named random stream. Distinct streams are statistically independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream(pub u64);

impl Stream {
    /// Per-particle driving noise `W` of the law-flow ensemble.
    pub const W: Stream = Stream(1);
    /// Per-particle `W~` of the law-flow ensemble.
    pub const W_TILDE: Stream = Stream(2);
    /// The designated common `W~` path of a law flow.
    pub const SHARED_W_TILDE: Stream = Stream(3);
    /// Initial-position sampling for ensembles.
    pub const INITIAL: Stream = Stream(4);
    /// Replica (pass-2) `W`.
    pub const REPLICA_W: Stream = Stream(5);
    /// Replica (pass-2) `W~`.
    pub const REPLICA_W_TILDE: Stream = Stream(6);
    /// Replica initial points / pair selection.
    pub const REPLICA_INITIAL: Stream = Stream(7);
    /// Duplicate-breaking jitter.
    pub const JITTER: Stream = Stream(8);
    /// Independent `W` for directly simulated comparison paths.
    pub const DIRECT_W: Stream = Stream(9);
    /// Random probes (dissipativity checks and similar).
    pub const PROBE: Stream = Stream(10);
}

/// Stateless counter-based generator keyed by a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    fn lane_key(&self, stream: Stream, lane: u64) -> u64 {
        let s = mix64(self.seed.wrapping_add(stream.0.wrapping_mul(GOLDEN)));
        mix64(s ^ lane.wrapping_add(1).wrapping_mul(LANE_MUL))
    }

    #[inline]
    fn word(key: u64, counter: u64) -> u64 {
        mix64(key.wrapping_add(mix64(counter.wrapping_add(1).wrapping_mul(GOLDEN))))
    }

    #[inline]
    fn unit(w: u64) -> f64 {
        // (0, 1), never exactly 0
        ((w >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw in (0, 1).
    pub fn uniform(&self, stream: Stream, lane: u64, index: u64) -> f64 {
        Self::unit(Self::word(self.lane_key(stream, lane), index))
    }

    /// Fills `out` with i.i.d. standard normals for `(stream, lane, index)`.
    /// At most 128 values per index.
    pub fn standard_normals(&self, stream: Stream, lane: u64, index: u64, out: &mut [f64]) {
        debug_assert!(out.len() <= 128);
        let key = self.lane_key(stream, lane);
        let base = index << 8;
        let mut c = 0u64;
        for pair in out.chunks_mut(2) {
            let u1 = Self::unit(Self::word(key, base + c));
            let u2 = Self::unit(Self::word(key, base + c + 1));
            c += 2;
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, co) = (2.0 * PI * u2).sin_cos();
            pair[0] = r * co;
            if pair.len() > 1 {
                pair[1] = r * s;
            }
        }
    }
}

/// Time grid plus the counter-based source of Brownian increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePlan {
    pub seed: u64,
    /// Step size of the increments handed out.
    pub h: f64,
    /// Number of base increments summed into one increment.
    pub substeps: u32,
}

impl NoisePlan {
    pub fn new(seed: u64, h: f64) -> Self {
        Self { seed, h, substeps: 1 }
    }

    /// A plan with step `h` built from `substeps` base steps of `h / substeps`.
    pub fn refined(seed: u64, h: f64, substeps: u32) -> Self {
        assert!(substeps >= 1);
        Self { seed, h, substeps }
    }

    pub fn rng(&self) -> CounterRng {
        CounterRng::new(self.seed)
    }

    /// Base step of the underlying Brownian path.
    pub fn base_h(&self) -> f64 {
        self.h / self.substeps as f64
    }

    /// Number of steps of size `h` in `[0, horizon]`, or `None` if `horizon`
    /// is not (to 1e-9 relative) a multiple of `h`.
    pub fn steps_for(&self, horizon: f64) -> Option<usize> {
        let j = (horizon / self.h).round();
        if j < 0.0 || (j * self.h - horizon).abs() > 1e-9 * horizon.abs().max(self.h) {
            None
        } else {
            Some(j as usize)
        }
    }

    /// Same Brownian path, twice the step size.
    pub fn coarsened(&self) -> Self {
        Self { seed: self.seed, h: self.h * 2.0, substeps: self.substeps * 2 }
    }

    /// Increment `ΔW ~ N(0, h I)` for `(stream, lane, step)` written into `out`.
    pub fn increment(&self, stream: Stream, lane: u64, step: usize, out: &mut [f64]) {
        let rng = self.rng();
        let scale = self.base_h().sqrt();
        if self.substeps == 1 {
            rng.standard_normals(stream, lane, step as u64, out);
            out.iter_mut().for_each(|v| *v *= scale);
            return;
        }
        let mut tmp = [0.0f64; 128];
        let tmp = &mut tmp[..out.len()];
        out.iter_mut().for_each(|v| *v = 0.0);
        let first = step as u64 * self.substeps as u64;
        for k in 0..self.substeps as u64 {
            rng.standard_normals(stream, lane, first + k, tmp);
            for (o, z) in out.iter_mut().zip(tmp.iter()) {
                *o += scale * z;
            }
        }
    }

    /// `steps` consecutive increments of dimension `dim`, row-major.
    pub fn path_increments(&self, stream: Stream, lane: u64, steps: usize, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; steps * dim];
        for (j, row) in out.chunks_mut(dim.max(1)).enumerate().take(steps) {
            self.increment(stream, lane, j, row);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replayable() {
        let p = NoisePlan::new(42, 0.01);
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        p.increment(Stream::W, 7, 11, &mut a);
        p.increment(Stream::W, 7, 11, &mut b);
        assert_eq!(a, b);
        p.increment(Stream::W, 8, 11, &mut b);
        assert_ne!(a, b);
        p.increment(Stream::W_TILDE, 7, 11, &mut b);
        assert_ne!(a, b);
    }

    #[test]
    fn moments() {
        let rng = CounterRng::new(3);
        let n = 200_000;
        let mut buf = [0.0; 2];
        let (mut s1, mut s2, mut s12) = (0.0, 0.0, 0.0);
        for i in 0..n {
            rng.standard_normals(Stream::W, 0, i, &mut buf);
            s1 += buf[0];
            s2 += buf[0] * buf[0];
            s12 += buf[0] * buf[1];
        }
        let n = n as f64;
        assert!((s1 / n).abs() < 0.01);
        assert!((s2 / n - 1.0).abs() < 0.01);
        assert!((s12 / n).abs() < 0.01);
    }

    #[test]
    fn coarsening_sums_fine_increments() {
        let fine = NoisePlan::new(5, 0.01);
        let coarse = fine.coarsened();
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        let mut c = [0.0; 2];
        fine.increment(Stream::W, 3, 6, &mut a);
        fine.increment(Stream::W, 3, 7, &mut b);
        coarse.increment(Stream::W, 3, 3, &mut c);
        for k in 0..2 {
            assert!((a[k] + b[k] - c[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn steps_for_grid() {
        let p = NoisePlan::new(0, 0.01);
        assert_eq!(p.steps_for(0.5), Some(50));
        assert_eq!(p.steps_for(0.505), None);
    }
}
