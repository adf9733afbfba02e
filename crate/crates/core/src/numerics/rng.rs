//! Counter-based splittable random streams.
//!
//! A stream is keyed by `(seed, stream_id)`. Output `i` is a pure function of
//! the key and the counter `i`, so a stream can be re-created at any point and
//! child streams can be derived without touching the parent's state. The
//! mixing function is the SplitMix64 finalizer applied to a Weyl sequence
//! whose increment is itself derived from the key, which keeps sibling streams
//! from being shifted copies of one another.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// Variant finalizer (Stafford "mix13") used for deriving increments.
#[inline]
fn mix_gamma(mut z: u64) -> u64 {
    z = (z ^ (z >> 33)).wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    z = (z ^ (z >> 33)).wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    (z ^ (z >> 33)) | 1
}

/// A reproducible random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    key: u64,
    gamma: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let key = mix64(seed ^ mix64(stream_id.wrapping_add(GOLDEN)));
        let gamma = mix_gamma(key.wrapping_add(stream_id.wrapping_mul(GOLDEN)) ^ seed.rotate_left(17));
        Self {
            seed,
            stream_id,
            key,
            gamma,
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 64-bit words drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Derives an independent child stream. Depends only on this stream's
    /// identity, not on how many values have been drawn from it.
    pub fn substream(&self, index: u64) -> RngStream {
        let child_id = mix64(self.key ^ mix64(index ^ 0xD1B5_4A32_D192_ED03));
        RngStream::new(self.seed ^ self.gamma.rotate_left(29), child_id)
    }

    /// Value at an arbitrary counter position, without advancing.
    #[inline]
    pub fn word_at(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_mul(self.gamma)))
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        let w = self.word_at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        w
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_word() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_word() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift; the bias is < n / 2^64.
        ((self.next_word() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw by inversion of an open uniform.
    pub fn standard_normal(&mut self) -> f64 {
        crate::analytic::normal_quantile(self.uniform_open()).expect("open uniform is in (0,1)")
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_word() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_word()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let w = self.next_word().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_keys_give_identical_sequences() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_word(), b.next_word());
        }
    }

    #[test]
    fn word_at_is_random_access() {
        let mut a = RngStream::new(11, 0);
        let probe = a.clone();
        for i in 0..50 {
            assert_eq!(a.next_word(), probe.word_at(i));
        }
    }

    #[test]
    fn substream_ignores_parent_position() {
        let mut a = RngStream::new(5, 9);
        let child_before = a.substream(4);
        for _ in 0..10 {
            a.next_word();
        }
        assert_eq!(child_before, a.substream(4));
        assert_ne!(a.substream(4), a.substream(5));
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 200_000;
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 1);
        let (mut sab, mut sa, mut sb, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.uniform();
            let y = b.uniform();
            sab += x * y;
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
        }
        let nf = n as f64;
        let cov = sab / nf - (sa / nf) * (sb / nf);
        let corr = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
        // 5 standard errors of a null correlation estimate
        assert!(corr.abs() < 5.0 / nf.sqrt(), "corr = {corr}");
        assert!((sa / nf - 0.5).abs() < 5.0 * (1.0 / 12.0 / nf).sqrt());
    }

    #[test]
    fn uniforms_stay_in_range() {
        let mut r = RngStream::new(0, 0);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            let v = r.uniform_open();
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn below_is_roughly_uniform() {
        let mut r = RngStream::new(2, 2);
        let mut counts = [0usize; 6];
        for _ in 0..60_000 {
            counts[r.below(6)] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 500.0, "{counts:?}");
        }
    }
}
