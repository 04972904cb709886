//! Counter-based pseudo-random generator.
//!
//! Every draw is a pure function of `(seed, stream, counter)`, so any
//! worker can be handed an independent stream and any run can be replayed
//! exactly from its seed. The mixer is the SplitMix64 finalizer applied
//! twice, which is statistically solid for Monte-Carlo use at the sample
//! counts this crate draws.

// Pulls in sqrt/ln/cos on builds without std.
#[allow(unused_imports)]
use num_traits::Float;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_A: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_B: u64 = 0x94D0_49BB_1331_11EB;

#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_A);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_B);
    z ^ (z >> 31)
}

/// Stateless mix of the three stream coordinates into one word.
#[inline]
fn mix(seed: u64, stream: u64, counter: u64) -> u64 {
    let mut z = seed ^ finalize(stream.wrapping_add(GOLDEN));
    z = finalize(z.wrapping_add(counter.wrapping_mul(GOLDEN)));
    finalize(z.wrapping_add(GOLDEN))
}

/// A seekable random stream identified by `(seed, stream)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    stream: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    pub fn stream(seed: u64, stream: u64) -> Self {
        Rng { seed, stream, counter: 0 }
    }

    /// Derive an independent sub-stream; the child starts at counter 0 and
    /// never collides with the parent or with siblings of different `id`.
    pub fn fork(&self, id: u64) -> Rng {
        Rng {
            seed: self.seed,
            stream: finalize(self.stream.wrapping_mul(GOLDEN) ^ id.wrapping_add(GOLDEN)),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.seed, self.stream, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u64 << 24) as f32)
    }

    /// Uniform integer in `[0, n)`, unbiased via rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let limit = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < limit {
                return v % n;
            }
        }
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no caching,
    /// so the stream position stays a simple function of the draw count).
    pub fn normal(&mut self) -> f64 {
        let u = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let v = self.next_f64();
        (-2.0 * u.ln()).sqrt() * (2.0 * core::f64::consts::PI * v).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }

    /// Uniform point on the unit sphere.
    pub fn unit_vector(&mut self) -> [f64; 3] {
        loop {
            let v = [self.normal(), self.normal(), self.normal()];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-12 {
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }
}
