//! Analog over-the-air gradient aggregation.
//!
//! Each selected user maps its gradient onto `D` channel uses. The server
//! observes the superposition through a unit-norm receive beamformer `q`,
//! rescales, and de-normalizes with the per-user normalizers received over
//! the digital side link.
//!
//! Two transmit conventions are provided:
//!
//! * [`Precoding::FullPower`]: every user transmits with zero phase and the
//!   largest normalizer at full power; the server scales by
//!   `η = 1 / max_u |q^H h_u|`. Recovery is exact only when the effective
//!   gains `q^H h_u` are equal and real; this is the model behind
//!   [`theoretical_mse`].
//! * [`Precoding::ChannelInversion`]: each user pre-compensates its effective
//!   channel so the noiseless estimate equals the weighted sum exactly; the
//!   common amplitude is set by the weakest user's power budget. Its noise
//!   power is the second term of the communication penalty.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::complex_gaussian;
use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{inner, norm_sqr, C64};

/// Relative slack on the per-user power constraint.
const POWER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precoding {
    FullPower,
    #[default]
    ChannelInversion,
}

/// How gradient entries ride on complex symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    /// Real gradient in the in-phase component; the server keeps `Re(·)`.
    #[default]
    Real,
    /// Gradient treated as complex-valued; the server keeps the full symbol.
    Complex,
}

/// Per-user transmit amplitudes and normalizers for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitPlan {
    pub amplitudes: Vec<C64>,
    pub normalizers: Vec<f64>,
    pub p_a: f64,
}

impl TransmitPlan {
    pub fn power_ok(&self) -> bool {
        self.amplitudes
            .iter()
            .all(|a| a.norm_sqr() <= self.p_a * (1.0 + POWER_TOL) + POWER_TOL)
    }
}

/// Output of one aggregation. `e2 = target − g_hat` componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub g_hat: Vec<C64>,
    pub target: Vec<f64>,
    pub e2: Vec<C64>,
    pub noise_draws: usize,
    pub plan: TransmitPlan,
}

impl AggregateResult {
    /// Real part of the estimate (the model update direction).
    pub fn g_hat_real(&self) -> Vec<f64> {
        self.g_hat.iter().map(|v| v.re).collect()
    }

    pub fn squared_error(&self) -> f64 {
        norm_sqr(&self.e2)
    }
}

/// Inputs of one aggregation round. All slices are indexed by selected user.
#[derive(Debug, Clone, Copy)]
pub struct Round<'a> {
    pub channels: &'a [&'a [C64]],
    pub q: &'a [C64],
    pub gradients: &'a [&'a [f64]],
    /// Combining weights; `None` means a plain sum.
    pub weights: Option<&'a [f64]>,
    pub sigma_n2: f64,
    pub p_a: f64,
    pub precoding: Precoding,
    pub embedding: Embedding,
}

/// `v = ‖g‖ / √D`.
pub fn grad_normalizer(g: &[f64]) -> Result<f64> {
    if g.is_empty() {
        return Err(Error::InvalidArgument("gradient has no entries".into()));
    }
    ensure_finite("gradient", g)?;
    let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::ZeroGradient { user: None });
    }
    Ok(n / (g.len() as f64).sqrt())
}

/// `f[n] = a · g[n] / v`.
pub fn precode_symbols(g: &[f64], a: C64, v: f64) -> Result<Vec<C64>> {
    if !(v > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "normalizer must be positive, got {v}"
        )));
    }
    Ok(g.iter().map(|&x| a * (x / v)).collect())
}

/// `η = 1 / max_u |q^H h_u|`.
pub fn receive_scaling_eta(q: &[C64], channels: &[&[C64]]) -> Result<f64> {
    if channels.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut best = 0.0f64;
    for h in channels {
        if h.len() != q.len() {
            return Err(Error::InvalidArgument("channel/beamformer size mismatch".into()));
        }
        best = best.max(inner(q, h).norm());
    }
    if !(best > 0.0) {
        return Err(Error::DegenerateChannel(
            "every selected user has zero effective gain".into(),
        ));
    }
    Ok(1.0 / best)
}

/// `K σ² ‖g‖² / (P_a · max_gain)`.
pub fn theoretical_mse(k: usize, sigma_n2: f64, g_norm2: f64, p_a: f64, max_gain: f64) -> Result<f64> {
    if !(max_gain > 0.0) {
        return Err(Error::DegenerateChannel(format!(
            "maximum gain must be positive, got {max_gain}"
        )));
    }
    if !(p_a > 0.0) || k == 0 {
        return Err(Error::InvalidArgument(
            "power must be positive and at least one user selected".into(),
        ));
    }
    Ok(k as f64 * sigma_n2 * g_norm2 / (p_a * max_gain))
}

/// Builds the transmit plan and the receiver's post-scaling for a round.
///
/// Returns the plan, the complex receive gain applied to `q^H y`, and the
/// factor that restores gradient units afterwards.
fn plan_round(round: &Round, normalizers: &[f64], effective: &[C64]) -> Result<(TransmitPlan, C64, f64)> {
    let k = normalizers.len();
    let sqrt_p = round.p_a.sqrt();
    match round.precoding {
        Precoding::FullPower => {
            let eta = receive_scaling_eta(round.q, round.channels)?;
            let v_max = normalizers.iter().copied().fold(0.0, f64::max);
            let amplitudes = normalizers
                .iter()
                .map(|&v| C64::new(sqrt_p * v / v_max, 0.0))
                .collect();
            let plan = TransmitPlan {
                amplitudes,
                normalizers: normalizers.to_vec(),
                p_a: round.p_a,
            };
            Ok((plan, C64::new(eta, 0.0), v_max / sqrt_p))
        }
        Precoding::ChannelInversion => {
            let weights = match round.weights {
                Some(w) => w.to_vec(),
                None => vec![1.0; k],
            };
            // ζ = P_a · min_u |c_u|^2 / (w_u v_u)^2
            let mut zeta = f64::INFINITY;
            for u in 0..k {
                let c2 = effective[u].norm_sqr();
                let wv = weights[u] * normalizers[u];
                if wv == 0.0 {
                    continue;
                }
                if !(c2 > 0.0) {
                    return Err(Error::DegenerateChannel(format!(
                        "selected user {u} has zero effective gain"
                    )));
                }
                zeta = zeta.min(round.p_a * c2 / (wv * wv));
            }
            if !zeta.is_finite() {
                return Err(Error::InvalidArgument("all combining weights are zero".into()));
            }
            let sz = zeta.sqrt();
            let amplitudes = (0..k)
                .map(|u| {
                    let c = effective[u];
                    if c.norm_sqr() == 0.0 {
                        C64::new(0.0, 0.0)
                    } else {
                        sz * weights[u] * normalizers[u] * c.conj() / c.norm_sqr()
                    }
                })
                .collect();
            let plan = TransmitPlan {
                amplitudes,
                normalizers: normalizers.to_vec(),
                p_a: round.p_a,
            };
            Ok((plan, C64::new(1.0, 0.0), 1.0 / sz))
        }
    }
}

/// Simulates one aggregation: precoding, superposition over the channels,
/// AWGN with power `σ_n²` per receive antenna, beamformed recovery.
pub fn receive_and_combine(round: &Round, rng_seed: u64) -> Result<AggregateResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    receive_and_combine_with(round, &mut rng)
}

/// As [`receive_and_combine`] with a caller-owned RNG stream.
pub fn receive_and_combine_with<R: rand::Rng + ?Sized>(round: &Round, rng: &mut R) -> Result<AggregateResult> {
    let k = round.channels.len();
    if k == 0 {
        return Err(Error::EmptySelection);
    }
    if round.gradients.len() != k || round.weights.is_some_and(|w| w.len() != k) {
        return Err(Error::InvalidArgument(
            "channels, gradients and weights must have one entry per selected user".into(),
        ));
    }
    if !(round.p_a > 0.0) || round.sigma_n2 < 0.0 {
        return Err(Error::InvalidArgument("power must be positive and noise nonnegative".into()));
    }
    let n_t = round.q.len();
    let qn = norm_sqr(round.q).sqrt();
    if (qn - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("beamformer norm is {qn}, expected 1")));
    }
    let d = round.gradients[0].len();
    let mut normalizers = Vec::with_capacity(k);
    for (u, g) in round.gradients.iter().enumerate() {
        if g.len() != d {
            return Err(Error::InvalidArgument("gradients differ in length".into()));
        }
        if round.channels[u].len() != n_t {
            return Err(Error::InvalidArgument("channel/beamformer size mismatch".into()));
        }
        normalizers.push(grad_normalizer(g).map_err(|e| match e {
            Error::ZeroGradient { .. } => Error::ZeroGradient { user: Some(u) },
            other => other,
        })?);
    }
    let effective: Vec<C64> = round.channels.iter().map(|h| inner(round.q, h)).collect();
    let (plan, rx_gain, restore) = plan_round(round, &normalizers, &effective)?;
    debug_assert!(plan.power_ok());

    let mut target = vec![0.0; d];
    for (u, g) in round.gradients.iter().enumerate() {
        let w = round.weights.map_or(1.0, |w| w[u]);
        for (t, &x) in target.iter_mut().zip(g.iter()) {
            *t += w * x;
        }
    }

    // Per-user complex coefficient multiplying g_u[n] after q^H: c_u a_u / v_u.
    let coeff: Vec<C64> = (0..k)
        .map(|u| effective[u] * plan.amplitudes[u] / normalizers[u])
        .collect();
    let mut g_hat = Vec::with_capacity(d);
    let mut noise_draws = 0;
    let mut y = vec![C64::new(0.0, 0.0); n_t];
    for n in 0..d {
        let mut z = C64::new(0.0, 0.0);
        if round.sigma_n2 > 0.0 {
            // Full received vector so the beamformer sees genuine per-antenna noise.
            for yi in y.iter_mut() {
                *yi = complex_gaussian(rng, round.sigma_n2);
            }
            noise_draws += n_t;
            z = inner(round.q, &y);
        }
        for u in 0..k {
            z += coeff[u] * round.gradients[u][n];
        }
        let mut est = rx_gain * z * restore;
        if round.embedding == Embedding::Real {
            est = C64::new(est.re, 0.0);
        }
        g_hat.push(est);
    }
    let e2 = target
        .iter()
        .zip(&g_hat)
        .map(|(&t, &g)| C64::new(t, 0.0) - g)
        .collect();
    Ok(AggregateResult {
        g_hat,
        target,
        e2,
        noise_draws,
        plan,
    })
}

/// Expected `‖e2‖²` of the channel-inversion scheme under real embedding:
/// `σ² D max_u (w_u v_u)² / (2 P_a |q^H h_u|²)`.
pub fn channel_inversion_mse(
    q: &[C64],
    channels: &[&[C64]],
    gradients: &[&[f64]],
    weights: &[f64],
    sigma_n2: f64,
    p_a: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for ((h, g), &w) in channels.iter().zip(gradients).zip(weights) {
        let c2 = inner(q, h).norm_sqr();
        let g2: f64 = g.iter().map(|x| x * x).sum();
        if w * w * g2 == 0.0 {
            continue;
        }
        if !(c2 > 0.0) {
            return Err(Error::DegenerateChannel("zero effective gain".into()));
        }
        worst = worst.max(w * w * g2 / c2);
    }
    Ok(sigma_n2 * worst / (2.0 * p_a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn normalizer_cases() {
        assert!((grad_normalizer(&[3.0, 4.0]).unwrap() - 5.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((grad_normalizer(&[1.0; 7]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(grad_normalizer(&[0.0, 0.0]), Err(Error::ZeroGradient { user: None })));
    }

    #[test]
    fn precoding_cases() {
        let g = [3.0, 4.0];
        let f = precode_symbols(&g, c(2.0, 0.0), 2.0).unwrap();
        assert_eq!(f, vec![c(3.0, 0.0), c(4.0, 0.0)]);
        let v = grad_normalizer(&g).unwrap();
        let f = precode_symbols(&g, c(1.0, 0.0), v).unwrap();
        assert!((norm_sqr(&f) / 2.0 - 1.0).abs() < 1e-12);
        assert!(precode_symbols(&g, c(1.0, 0.0), 0.0).is_err());
        let plan = TransmitPlan {
            amplitudes: vec![c(0.0, 1.0)],
            normalizers: vec![1.0],
            p_a: 1.0,
        };
        assert!(plan.power_ok());
    }

    #[test]
    fn eta_cases() {
        let q = [c(1.0, 0.0)];
        let h1 = [c(2.0, 0.0)];
        assert_eq!(receive_scaling_eta(&q, &[&h1]).unwrap(), 0.5);
        let (a, b, d) = ([c(1.0, 0.0)], [c(0.0, 4.0)], [c(-2.0, 0.0)]);
        assert_eq!(receive_scaling_eta(&q, &[&a, &b, &d]).unwrap(), 0.25);
        assert!(matches!(receive_scaling_eta(&q, &[]), Err(Error::EmptySelection)));
    }

    #[test]
    fn theoretical_mse_cases() {
        assert_eq!(theoretical_mse(1, 1.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((theoretical_mse(5, 0.01, 4.0, 1.0, 2.0).unwrap() - 0.1).abs() < 1e-15);
        let a = theoretical_mse(3, 0.2, 1.5, 2.0, 1.0).unwrap();
        let b = theoretical_mse(3, 0.2, 1.5, 2.0, 2.0).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-15);
        assert!(theoretical_mse(1, 1.0, 1.0, 1.0, 0.0).is_err());
    }

    fn aligned(h: &[C64]) -> Vec<C64> {
        let n = norm_sqr(h).sqrt();
        h.iter().map(|v| v / n).collect()
    }

    #[test]
    fn noiseless_single_user_recovers_gradient() {
        let h = [c(0.3, -0.4), c(1.0, 0.2)];
        let q = aligned(&h);
        let g = [0.5, -1.5, 2.0];
        for precoding in [Precoding::FullPower, Precoding::ChannelInversion] {
            let round = Round {
                channels: &[&h],
                q: &q,
                gradients: &[&g],
                weights: None,
                sigma_n2: 0.0,
                p_a: 2.0,
                precoding,
                embedding: Embedding::Real,
            };
            let out = receive_and_combine(&round, 1).unwrap();
            for (a, b) in out.g_hat_real().iter().zip(&g) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!((out.plan.amplitudes[0].norm_sqr() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_identical_channels_superpose() {
        let h = [c(0.5, 0.5), c(-0.2, 0.9)];
        let q = aligned(&h);
        let g1 = [1.0, 2.0];
        let g2 = [-3.0, 0.5];
        let round = Round {
            channels: &[&h, &h],
            q: &q,
            gradients: &[&g1, &g2],
            weights: None,
            sigma_n2: 0.0,
            p_a: 1.0,
            precoding: Precoding::FullPower,
            embedding: Embedding::Real,
        };
        let out = receive_and_combine(&round, 0).unwrap();
        let g = out.g_hat_real();
        assert!((g[0] + 2.0).abs() < 1e-9 && (g[1] - 2.5).abs() < 1e-9);
    }

    #[test]
    fn channel_inversion_is_exact_for_unequal_channels_and_weights() {
        let h1 = [c(0.5, 0.5), c(-0.2, 0.9)];
        let h2 = [c(0.01, -0.3), c(0.2, 0.05)];
        let q = aligned(&[c(1.0, 0.0), c(0.3, 0.3)]);
        let g1 = [1.0, 2.0, 0.0];
        let g2 = [-3.0, 0.5, 7.0];
        let w = [0.25, 0.75];
        let round = Round {
            channels: &[&h1, &h2],
            q: &q,
            gradients: &[&g1, &g2],
            weights: Some(&w),
            sigma_n2: 0.0,
            p_a: 0.5,
            precoding: Precoding::ChannelInversion,
            embedding: Embedding::Complex,
        };
        let out = receive_and_combine(&round, 0).unwrap();
        assert!(out.plan.power_ok());
        assert!(out.squared_error() < 1e-20);
        let tight = out
            .plan
            .amplitudes
            .iter()
            .any(|a| (a.norm_sqr() - 0.5).abs() < 1e-12);
        assert!(tight);
    }

    #[test]
    fn zero_gradient_user_is_reported() {
        let h = [c(1.0, 0.0)];
        let g0 = [0.0, 0.0];
        let g1 = [1.0, 0.0];
        let round = Round {
            channels: &[&h, &h],
            q: &[c(1.0, 0.0)],
            gradients: &[&g1, &g0],
            weights: None,
            sigma_n2: 0.1,
            p_a: 1.0,
            precoding: Precoding::FullPower,
            embedding: Embedding::Real,
        };
        assert!(matches!(
            receive_and_combine(&round, 0),
            Err(Error::ZeroGradient { user: Some(1) })
        ));
    }
}
