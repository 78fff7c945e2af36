//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, domain, stream, counter, lane)`, so
//! the noise seen by a particle never depends on evaluation order or thread
//! count. Brownian increments for particle `(label, i)` at fine step `k` are
//! keyed on exactly those integers.

/// Domain tags separating independent uses of the same seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Brownian = 0x42_52_4f_57,
    Mark = 0x4d_41_52_4b,
    Shuffle = 0x53_48_55_46,
    Probe = 0x50_52_4f_42,
    Auxiliary = 0x41_55_58_31,
}

#[inline(always)]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a key tuple into 64 random bits.
#[inline]
pub fn hash_key(seed: u64, domain: Domain, stream: u64, counter: u64, lane: u64) -> u64 {
    let mut h = splitmix(seed ^ (domain as u64).rotate_left(17));
    h = splitmix(h ^ stream);
    h = splitmix(h ^ counter.rotate_left(29));
    splitmix(h ^ lane.rotate_left(47))
}

/// Uniform in the open interval (0, 1).
#[inline]
pub fn bits_to_open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn uniform(seed: u64, domain: Domain, stream: u64, counter: u64, lane: u64) -> f64 {
    bits_to_open_unit(hash_key(seed, domain, stream, counter, lane))
}

/// Fill `out` with independent standard normals for one `(stream, counter)` cell.
pub fn normals(seed: u64, domain: Domain, stream: u64, counter: u64, out: &mut [f64]) {
    let mut j = 0;
    let mut pair = 0u64;
    while j < out.len() {
        let u1 = uniform(seed, domain, stream, counter, 2 * pair);
        let u2 = uniform(seed, domain, stream, counter, 2 * pair + 1);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        out[j] = r * theta.cos();
        if j + 1 < out.len() {
            out[j + 1] = r * theta.sin();
        }
        j += 2;
        pair += 1;
    }
}

/// Stream identifier of particle `index` in label `label`.
#[inline]
pub fn stream_id(label: usize, index: usize) -> u64 {
    ((label as u64) << 32) | index as u64
}

/// Sequential generator over a single counter-based stream.
#[derive(Clone, Debug)]
pub struct StreamRng {
    seed: u64,
    domain: Domain,
    stream: u64,
    counter: u64,
}

impl StreamRng {
    pub fn new(seed: u64, domain: Domain, stream: u64) -> Self {
        Self {
            seed,
            domain,
            stream,
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = hash_key(self.seed, self.domain, self.stream, self.counter, 0);
        self.counter += 1;
        v
    }

    pub fn next_f64(&mut self) -> f64 {
        bits_to_open_unit(self.next_u64())
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }
}
