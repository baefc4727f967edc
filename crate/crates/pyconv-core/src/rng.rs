//! Counter-based deterministic random numbers.
//!
//! Every draw is a pure function of `(seed, index)`, so initialization and
//! data synthesis are independent of iteration order and thread schedule:
//! the same seed reproduces the same buffer bit-for-bit, element by element.

/// SplitMix64 output function; a full-avalanche mix of the input word.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a label (e.g. a parameter name).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the parent seed.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(seed ^ h)
}

#[inline]
fn element_word(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xA24B_AED4_963E_E407))
}

/// Uniform draw in the half-open interval (0, 1], indexed by `(seed, index)`.
#[inline]
pub fn unit_uniform(seed: u64, index: u64) -> f64 {
    let z = element_word(seed, index);
    ((z >> 11) + 1) as f64 / (1u64 << 53) as f64
}

/// Standard normal draw indexed by `(seed, index)`, via Box-Muller.
#[inline]
pub fn standard_normal(seed: u64, index: u64) -> f64 {
    let z1 = element_word(seed, index);
    let z2 = splitmix64(z1);
    let u1 = ((z1 >> 11) + 1) as f64 / (1u64 << 53) as f64;
    let u2 = (z2 >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Deterministic Fisher-Yates permutation of `0..n`.
pub fn permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (element_word(seed, i as u64) % (i as u64 + 1)) as usize;
        p.swap(i, j);
    }
    p
}
