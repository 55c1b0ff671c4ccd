//! Seeded randomness, the Laplace sampler and policy normalization.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Default lower bound every policy entry is clipped to before renormalizing.
pub const DEFAULT_POLICY_FLOOR: f64 = 0.01;

const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto ChaCha's native stream
/// counter, so distinct ids give independent sequences and the output is
/// identical across platforms.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    /// Stream for one lane (world or agent) of one replica.
    ///
    /// Lane 0 is reserved for the environment; agent `i` uses lane `i + 1`.
    pub fn for_lane(seed: u64, replica_id: u64, lane: u64) -> Self {
        Self::new(seed, (replica_id << 20) | (lane & 0xF_FFFF))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in the open interval (0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * TWO_POW_MINUS_53
    }

    /// Uniform index in `0..n`, consuming one uniform.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Bernoulli gate. A probability of zero (or less) consumes no randomness,
    /// which keeps disabled branches from perturbing the rest of the trace.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        self.uniform() < p
    }
}

/// Scale `b` of a zero-mean Laplace distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplaceScale<S>(S);

impl<S: Scalar> LaplaceScale<S> {
    pub fn new(b: S) -> Result<Self> {
        if b > S::zero() && b.is_finite() {
            Ok(Self(b))
        } else {
            Err(Error::param(format!("Laplace scale must be positive, got {b}")))
        }
    }

    /// `b = sensitivity / epsilon`.
    pub fn from_sensitivity(sensitivity: S, epsilon: S) -> Result<Self> {
        if !(epsilon > S::zero()) {
            return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
        }
        Self::new(sensitivity / epsilon)
    }

    pub fn b(self) -> S {
        self.0
    }
}

/// Draws one Laplace(0, b) sample by inverting the CDF of a single uniform.
pub fn laplace_sample<S: Scalar>(scale: LaplaceScale<S>, rng: &mut RngStream) -> S {
    let b = scale.b().as_f64();
    let centered = rng.uniform() - 0.5;
    let x = -b * centered.signum() * (1.0 - 2.0 * centered.abs()).ln();
    S::lit(x)
}

/// `Pr(Lap(b) > delta) = exp(-delta / b) / 2`.
pub fn laplace_tail_prob<S: Scalar>(b: S, delta: S) -> Result<S> {
    if !(b > S::zero()) {
        return Err(Error::param(format!("Laplace scale must be positive, got {b}")));
    }
    if !(delta >= S::zero()) {
        return Err(Error::param(format!("tail threshold must be non-negative, got {delta}")));
    }
    Ok(S::lit(0.5) * (-delta / b).exp())
}

/// Clips every entry up to `floor` and rescales so the entries sum to one.
pub fn normalize_policy<S: Scalar>(raw: &[S], floor: S) -> Result<Vec<S>> {
    let k = raw.len();
    if k == 0 {
        return Err(Error::param("cannot normalize an empty policy"));
    }
    if !(floor > S::zero()) || floor * S::lit(k as f64) >= S::one() {
        return Err(Error::param(format!(
            "policy floor {floor} invalid for {k} actions (need 0 < floor*k < 1)"
        )));
    }
    // `!(x >= floor)` also maps NaN to the floor.
    let clipped: Vec<S> = raw
        .iter()
        .map(|&x| if x >= floor { x } else { floor })
        .collect();
    let total: S = clipped.iter().copied().sum();
    Ok(clipped.into_iter().map(|x| x / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_open_interval_and_replayable() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..1000 {
            let u = a.uniform();
            assert!(u > 0.0 && u < 1.0);
            assert_eq!(u.to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn zero_probability_gate_consumes_nothing() {
        let mut a = RngStream::new(1, 1);
        let mut b = RngStream::new(1, 1);
        assert!(!a.bernoulli(0.0));
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn laplace_scale_rejects_non_positive() {
        assert!(LaplaceScale::new(0.0_f64).is_err());
        assert!(LaplaceScale::new(-1.0_f64).is_err());
        assert!(LaplaceScale::new(f64::NAN).is_err());
        assert!(LaplaceScale::from_sensitivity(3.0_f64, 0.0).is_err());
        assert_eq!(LaplaceScale::from_sensitivity(3.0_f64, 1.5).unwrap().b(), 2.0);
    }

    #[test]
    fn laplace_sample_consumes_one_uniform() {
        let scale = LaplaceScale::new(1.0_f64).unwrap();
        let mut a = RngStream::new(11, 0);
        let mut b = RngStream::new(11, 0);
        laplace_sample(scale, &mut a);
        b.uniform();
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn laplace_sign_and_tail_frequencies() {
        let scale = LaplaceScale::new(1.0_f64).unwrap();
        let mut rng = RngStream::new(2024, 0);
        let n = 1_000_000;
        let (mut pos, mut over_one) = (0usize, 0usize);
        for _ in 0..n {
            let x = laplace_sample(scale, &mut rng);
            pos += (x > 0.0) as usize;
            over_one += (x > 1.0) as usize;
        }
        let p_pos = pos as f64 / n as f64;
        let p_one = over_one as f64 / n as f64;
        assert!((p_pos - 0.5).abs() < 0.002, "{p_pos}");
        assert!((p_one - 0.5 * (-1.0f64).exp()).abs() < 0.005, "{p_one}");
    }

    #[test]
    fn tail_prob_values() {
        assert_eq!(laplace_tail_prob(1.0_f64, 0.0).unwrap(), 0.5);
        assert!((laplace_tail_prob(1.0_f64, 1.0).unwrap() - 0.183_939_720_585_721).abs() < 1e-12);
        assert!((laplace_tail_prob(2.0_f64, 2.0).unwrap() - 0.183_939_720_585_721).abs() < 1e-12);
        assert!(laplace_tail_prob(0.0_f64, 1.0).is_err());
        assert!(laplace_tail_prob(1.0_f64, -0.1).is_err());
    }

    #[test]
    fn normalize_examples() {
        let p = normalize_policy(&[0.25_f64; 4], 0.01).unwrap();
        for x in p {
            assert!((x - 0.25).abs() < 1e-12);
        }

        // (0.9, 0.01, 0.1, 0.1) / 1.11
        let p = normalize_policy(&[0.9_f64, -0.1, 0.1, 0.1], 0.01).unwrap();
        let want = [0.810_810_810_81, 0.009_009_009_01, 0.090_090_090_09, 0.090_090_090_09];
        for (x, w) in p.iter().zip(want) {
            assert!((x - w).abs() < 1e-9, "{x} vs {w}");
        }

        let p = normalize_policy(&[1.0_f64, 1.0], 0.01).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn normalize_errors() {
        assert!(normalize_policy::<f64>(&[], 0.01).is_err());
        assert!(normalize_policy(&[0.5_f64, 0.5], 0.5).is_err());
        assert!(normalize_policy(&[0.5_f64, 0.5], 0.0).is_err());
    }

    #[test]
    fn normalize_works_in_f32() {
        let p = normalize_policy(&[0.9_f32, -0.1, 0.1, 0.1], 0.01).unwrap();
        let s: f32 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}
