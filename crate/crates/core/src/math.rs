//! Numerically stable scalar math used across likelihoods, samplers and attacks.

use ndarray::ArrayView1;

/// Stable `log(1 + exp(x))`.
///
/// Branchless form: `log(1+exp(x)) = max(x,0) + log(1+exp(-|x|))`;
/// the exponential argument is never positive, so it cannot overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    x.max(0.0) + e.ln_1p()
}

/// Stable sigmoid `1 / (1 + exp(-x))`, computed from a single `exp(-|x|)`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    let recip = 1.0 / (1.0 + e);
    if x >= 0.0 {
        recip
    } else {
        e * recip
    }
}

/// Stable `log(sigmoid(x)) = -softplus(-x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `log(sum(exp(v)))` with the usual max shift.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// Log-density of `N(x; mean, sd^2)` with the normalization constant.
#[inline]
pub fn log_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - 0.5 * z * z
}

/// Euclidean norm scaled against overflow/underflow of the squared sum.
pub fn stable_norm(x: ArrayView1<'_, f64>) -> f64 {
    let m = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    let s: f64 = x.iter().map(|v| (v / m) * (v / m)).sum();
    m * s.sqrt()
}

/// FNV-1a over bytes; used for config fingerprints and sub-seed derivation.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// SplitMix64 finalizer; spreads entropy of a derived seed.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic sub-seed: master seed mixed with a domain tag and an index.
///
/// All randomness in the library flows from one master seed through this
/// function, so parallel schedules cannot change results.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    mix64(master ^ fnv1a(tag.as_bytes()).rotate_left(17) ^ mix64(index))
}
