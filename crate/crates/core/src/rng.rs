//! Counter-based Brownian increments.
//!
//! Every increment is a pure function of `(master_seed, stream, replica,
//! step)`: the seed and stream select a ChaCha8 key, the replica selects the
//! ChaCha stream and the step selects the word position. Nothing depends on
//! the order in which increments are requested, so parallel and sequential
//! runs see bit-identical noise.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Which family of increments to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseStream {
    /// The base path of each replica.
    Main,
    /// Fresh continuation `branch` spawned at step `origin` of the base path.
    Branch { origin: u64, branch: u64 },
}

#[derive(Clone, Debug)]
pub struct BrownianDriver {
    master_seed: u64,
    replicas: usize,
    dt: f64,
    main_key: [u8; 32],
}

impl BrownianDriver {
    pub fn new(master_seed: u64, replicas: usize, dt: f64) -> Self {
        BrownianDriver {
            master_seed,
            replicas,
            dt,
            main_key: derive_key(master_seed, NoiseStream::Main),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Same seed and replica count, different step size (for path refinement).
    pub fn with_dt(&self, dt: f64) -> Self {
        BrownianDriver { dt, ..self.clone() }
    }

    /// Two independent standard normals for `(stream, replica, step)`.
    pub fn standard_normals(&self, stream: NoiseStream, replica: usize, step: u64) -> [f64; 2] {
        let key = match stream {
            NoiseStream::Main => self.main_key,
            other => derive_key(self.master_seed, other),
        };
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(replica as u64);
        rng.set_word_pos(step as u128 * 4);
        let a = rng.next_u64();
        let b = rng.next_u64();
        box_muller(a, b)
    }

    /// `W_{(step+1) dt} - W_{step dt}` of the base path of `replica`.
    pub fn increment(&self, replica: usize, step: u64) -> [f64; 2] {
        self.increment_in(NoiseStream::Main, replica, step)
    }

    pub fn increment_in(&self, stream: NoiseStream, replica: usize, step: u64) -> [f64; 2] {
        let z = self.standard_normals(stream, replica, step);
        let s = self.dt.sqrt();
        [s * z[0], s * z[1]]
    }

    /// `W_{steps dt}` of the base path, summed in step order.
    pub fn path_value(&self, replica: usize, steps: u64) -> [f64; 2] {
        let mut w = [0.0; 2];
        for s in 0..steps {
            let d = self.increment(replica, s);
            w[0] += d[0];
            w[1] += d[1];
        }
        w
    }
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, stream: NoiseStream) -> [u8; 32] {
    let (tag, a, b) = match stream {
        NoiseStream::Main => (0u64, 0u64, 0u64),
        NoiseStream::Branch { origin, branch } => (1, origin, branch),
    };
    let mut state = seed;
    let mut mix = splitmix(&mut state) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    mix = splitmix(&mut mix) ^ a;
    mix = splitmix(&mut mix) ^ b.rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut mix).to_le_bytes());
    }
    key
}

fn box_muller(a: u64, b: u64) -> [f64; 2] {
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 / (1u64 << 53) as f64;
    let u2 = (b >> 11) as f64 / (1u64 << 53) as f64;
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    [r * c, r * s]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_independent() {
        let d = BrownianDriver::new(42, 8, 1e-3);
        let forward: Vec<[f64; 2]> = (0..50).map(|s| d.increment(3, s)).collect();
        let backward: Vec<[f64; 2]> = (0..50).rev().map(|s| d.increment(3, s)).collect();
        for (a, b) in forward.iter().zip(backward.iter().rev()) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let d = BrownianDriver::new(1, 2, 1.0);
        let main = d.increment(0, 5);
        let other_replica = d.increment(1, 5);
        let branch = d.increment_in(NoiseStream::Branch { origin: 5, branch: 0 }, 0, 5);
        let branch2 = d.increment_in(NoiseStream::Branch { origin: 5, branch: 1 }, 0, 5);
        assert_ne!(main, other_replica);
        assert_ne!(main, branch);
        assert_ne!(branch, branch2);
        assert_ne!(BrownianDriver::new(2, 2, 1.0).increment(0, 5), main);
    }

    #[test]
    fn increments_have_right_moments() {
        let dt = 4e-3;
        let r = 20_000;
        let d = BrownianDriver::new(7, r, dt);
        let mut mean = [0.0; 2];
        let mut var = [0.0; 2];
        let mut cross = 0.0;
        for rep in 0..r {
            let w = d.increment(rep, 11);
            for c in 0..2 {
                mean[c] += w[c];
                var[c] += w[c] * w[c];
            }
            cross += w[0] * w[1];
        }
        for c in 0..2 {
            mean[c] /= r as f64;
            var[c] /= r as f64;
            assert!(mean[c].abs() <= 4.0 * dt.sqrt() / (r as f64).sqrt());
            // var of the sample second moment is 2 dt^2 / r
            assert!((var[c] - dt).abs() <= 5.0 * dt * (2.0 / r as f64).sqrt());
        }
        assert!((cross / r as f64).abs() <= 5.0 * dt / (r as f64).sqrt());
    }
}
