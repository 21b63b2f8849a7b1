//! Counter-addressed random streams.
//!
//! Every Gaussian the simulator consumes is a pure function of
//! `(seed, purpose, stream, atom)`. Each atom owns a fixed block of ChaCha8
//! output words, so a value never depends on which thread produced it or on
//! how many values were drawn before it.

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Vec3;
use crate::scalar::Real;

/// 32-bit words reserved per atom: four uniforms, three of which feed the
/// Box-Muller transform of a 3-vector.
const WORDS_PER_ATOM: u128 = 8;

/// 32-bit words reserved per particle when sampling initial conditions.
const WORDS_PER_SAMPLE: u128 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Purpose {
    Increment,
    AtomChoice,
    Initial,
}

impl Purpose {
    fn salt(self) -> u64 {
        match self {
            Purpose::Increment => 0x9e37_79b9_7f4a_7c15,
            Purpose::AtomChoice => 0xc2b2_ae3d_27d4_eb4f,
            Purpose::Initial => 0x1656_67b1_9e37_79f9,
        }
    }
}

/// Deterministic source of standard 3-d Gaussian increments addressed by
/// `(step, atom)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng(&self, purpose: Purpose, stream: u64, word: u128) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ purpose.salt());
        rng.set_stream(stream);
        rng.set_word_pos(word);
        rng
    }

    /// The increment for `(step, atom)`.
    pub fn gaussian<T: Real>(&self, step: u64, atom: u64) -> Vec3<T> {
        self.cursor(step, atom).next_gaussian()
    }

    /// Sequential reader starting at `first_atom`; the k-th value it yields
    /// equals `gaussian(step, first_atom + k)`.
    pub fn cursor(&self, step: u64, first_atom: u64) -> GaussianCursor {
        GaussianCursor { rng: self.rng(Purpose::Increment, step, first_atom as u128 * WORDS_PER_ATOM) }
    }

    /// Uniform atom choices in `0..n` for the subsampled noise mode,
    /// addressed by `(step, slot)`.
    pub(crate) fn atom_choices(&self, step: u64, first_slot: u64) -> ChoiceCursor {
        ChoiceCursor { rng: self.rng(Purpose::AtomChoice, step, first_slot as u128 * 2) }
    }

    /// Reader for the variates of initial particle `index`.
    pub(crate) fn initial(&self, stream: u64, index: u64) -> SampleCursor {
        SampleCursor { rng: self.rng(Purpose::Initial, stream, index as u128 * WORDS_PER_SAMPLE) }
    }
}

#[inline]
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    // (0, 1]: never zero, so the logarithm below stays finite.
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn box_muller(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let r = (-2.0 * open_unit(rng).ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * open_unit(rng)).sin_cos();
    (r * c, r * s)
}

fn gaussian3(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let (a, b) = box_muller(rng);
    let (c, _) = box_muller(rng);
    [a, b, c]
}

pub struct GaussianCursor {
    rng: ChaCha8Rng,
}

impl GaussianCursor {
    #[inline]
    pub fn next_gaussian<T: Real>(&mut self) -> Vec3<T> {
        let g = gaussian3(&mut self.rng);
        Vec3::new(T::lit(g[0]), T::lit(g[1]), T::lit(g[2]))
    }
}

pub(crate) struct ChoiceCursor {
    rng: ChaCha8Rng,
}

impl ChoiceCursor {
    /// Uniform index in `0..n` (multiply-shift; bias below 2^-32 for any
    /// realistic `n`).
    #[inline]
    pub(crate) fn next_index(&mut self, n: usize) -> usize {
        ((self.rng.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

pub(crate) struct SampleCursor {
    rng: ChaCha8Rng,
}

impl SampleCursor {
    pub(crate) fn gaussian3(&mut self) -> [f64; 3] {
        gaussian3(&mut self.rng)
    }

    pub(crate) fn uniform(&mut self) -> f64 {
        open_unit(&mut self.rng)
    }
}
