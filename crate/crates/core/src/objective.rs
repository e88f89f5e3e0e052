//! Per-round communication penalty and the resulting convergence bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inner, C64};

/// Relaxed or binary participation vector with per-user sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionVector {
    pub e: Vec<f64>,
    pub samples: Vec<f64>,
    pub binary: bool,
}

impl SelectionVector {
    pub fn from_mask(mask: &[bool], samples: &[f64]) -> Result<Self> {
        if mask.len() != samples.len() {
            return Err(Error::InvalidArgument("mask/sample count length mismatch".into()));
        }
        Ok(SelectionVector {
            e: mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
            samples: samples.to_vec(),
            binary: true,
        })
    }

    pub fn relaxed(e: Vec<f64>, samples: &[f64]) -> Result<Self> {
        if e.len() != samples.len() {
            return Err(Error::InvalidArgument("selection/sample count length mismatch".into()));
        }
        if e.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("relaxed selection must lie in [0, 1]".into()));
        }
        Ok(SelectionVector {
            e,
            samples: samples.to_vec(),
            binary: false,
        })
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    pub fn selected(&self) -> Vec<usize> {
        (0..self.e.len()).filter(|&u| self.e[u] > 0.0).collect()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.e.iter().map(|&v| v > 0.0).collect()
    }

    pub fn selected_count(&self) -> usize {
        self.e.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn selected_samples(&self) -> f64 {
        self.e.iter().zip(&self.samples).map(|(e, s)| e * s).sum()
    }

    pub fn total_samples(&self) -> f64 {
        self.samples.iter().sum()
    }
}

/// The two additive pieces of the communication penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyTerms {
    /// `(4/U²)(Σ(1−e)S)²`: cost of excluded data.
    pub exclusion: f64,
    /// `σ²/(P_a(ΣeS)²) · max_u e S²/|q^H h_u|²`: receiver noise at the bottleneck user.
    pub noise: f64,
}

impl PenaltyTerms {
    pub fn total(&self) -> f64 {
        self.exclusion + self.noise
    }
}

pub fn comm_penalty_terms(
    sel: &SelectionVector,
    q: &[C64],
    channels: &[&[C64]],
    sigma_n2: f64,
    p_a: f64,
) -> Result<PenaltyTerms> {
    let u_count = sel.len();
    if channels.len() != u_count {
        return Err(Error::InvalidArgument(format!(
            "{} channels for {} users",
            channels.len(),
            u_count
        )));
    }
    if !(p_a > 0.0) {
        return Err(Error::InvalidArgument("power must be positive".into()));
    }
    let selected = sel.selected_samples();
    if !(selected > 0.0) {
        return Err(Error::EmptySelection);
    }
    let excluded: f64 = sel
        .e
        .iter()
        .zip(&sel.samples)
        .map(|(e, s)| (1.0 - e) * s)
        .sum();
    let uf = u_count as f64;
    let exclusion = 4.0 / (uf * uf) * excluded * excluded;
    let mut worst = 0.0f64;
    for (u, h) in channels.iter().enumerate() {
        let e = sel.e[u];
        if e == 0.0 {
            continue;
        }
        if h.len() != q.len() {
            return Err(Error::InvalidArgument("channel/beamformer size mismatch".into()));
        }
        let gain = inner(q, h).norm_sqr();
        if !(gain > 0.0) {
            return Err(Error::DegenerateChannel(format!(
                "selected user {u} has zero effective gain"
            )));
        }
        let s = sel.samples[u];
        worst = worst.max(e * s * s / gain);
    }
    let noise = sigma_n2 / (p_a * selected * selected) * worst;
    Ok(PenaltyTerms { exclusion, noise })
}

/// `r(q, e)`, the per-round surrogate the optimizers minimize.
pub fn comm_penalty(
    sel: &SelectionVector,
    q: &[C64],
    channels: &[&[C64]],
    sigma_n2: f64,
    p_a: f64,
) -> Result<f64> {
    comm_penalty_terms(sel, q, channels, sigma_n2, p_a).map(|t| t.total())
}

/// Loss-function constants of the convergence bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    pub mu: f64,
    pub l: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub lr: f64,
    /// Multiplier of `r` inside the contraction factor; `None` means `2 α₂`.
    pub noise_coefficient: Option<f64>,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            mu: 1.0,
            l: 10.0,
            alpha1: 1.0,
            alpha2: 1.0,
            lr: 0.05,
            noise_coefficient: None,
        }
    }
}

impl BoundParams {
    pub fn coefficient(&self) -> f64 {
        self.noise_coefficient.unwrap_or(2.0 * self.alpha2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0) || !(self.mu >= 0.0) || self.mu > self.l {
            return Err(Error::Config("bound constants need 0 <= mu <= L, L > 0".into()));
        }
        if self.alpha1 < 0.0 || self.alpha2 < 1.0 {
            return Err(Error::Config("bound constants need alpha1 >= 0, alpha2 >= 1".into()));
        }
        Ok(())
    }
}

/// `φ = 1 − (μ/L)(1 − c·r)` with `c` from [`BoundParams::coefficient`].
pub fn contraction_factor(params: &BoundParams, r: f64) -> f64 {
    1.0 - params.mu / params.l * (1.0 - params.coefficient() * r)
}

/// Closed-form T-round bound
/// `(∏φ_t)·gap + (α₁/L)[Σ_{t<T−1}(∏_{τ>t}φ_τ) r_t + r_{T−1}]`.
pub fn bound_after_t(params: &BoundParams, r_list: &[f64], initial_gap: f64) -> Result<f64> {
    if r_list.is_empty() {
        return Err(Error::InvalidArgument("need at least one round".into()));
    }
    let phi: Vec<f64> = r_list.iter().map(|&r| contraction_factor(params, r)).collect();
    let t = r_list.len();
    // suffix[t] = ∏_{τ=t}^{T−1} φ_τ
    let mut suffix = vec![1.0; t + 1];
    for i in (0..t).rev() {
        suffix[i] = suffix[i + 1] * phi[i];
    }
    let mut acc = 0.0;
    for i in 0..t {
        acc += suffix[i + 1] * r_list[i];
    }
    Ok(suffix[0] * initial_gap + params.alpha1 / params.l * acc)
}

/// Noisy gradient-descent recursion `gap ← φ_t gap + (L lr²/2)(σ² + r_t)`.
pub fn noisy_gd_recursion(
    params: &BoundParams,
    r_list: &[f64],
    sigma2: f64,
    initial_gap: f64,
) -> Result<f64> {
    if !(params.lr > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let psi_scale = params.l * params.lr * params.lr / 2.0;
    Ok(r_list.iter().fold(initial_gap, |gap, &r| {
        contraction_factor(params, r) * gap + psi_scale * (sigma2 + r)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_hand_value() {
        let sel = SelectionVector::from_mask(&[true, false], &[1.0, 2.0]).unwrap();
        let h1 = [C64::new(1.0, 0.0)];
        let h2 = [C64::new(0.0, 0.0)];
        let r = comm_penalty(&sel, &[C64::new(1.0, 0.0)], &[&h1, &h2], 1.0, 1.0).unwrap();
        assert!((r - 5.0).abs() < 1e-12);
    }

    #[test]
    fn all_selected_equal_gains() {
        let u = 5;
        let sel = SelectionVector::from_mask(&vec![true; u], &vec![1.0; u]).unwrap();
        let h = [C64::new(0.0, 2.0)];
        let chans: Vec<&[C64]> = vec![&h; u];
        let t = comm_penalty_terms(&sel, &[C64::new(1.0, 0.0)], &chans, 0.3, 2.0).unwrap();
        assert_eq!(t.exclusion, 0.0);
        assert!((t.noise - 0.3 / (2.0 * 25.0 * 4.0)).abs() < 1e-15);
    }

    #[test]
    fn empty_and_dead_selections_fail() {
        let h = [C64::new(1.0, 0.0)];
        let sel = SelectionVector::from_mask(&[false], &[1.0]).unwrap();
        assert!(matches!(
            comm_penalty(&sel, &[C64::new(1.0, 0.0)], &[&h], 1.0, 1.0),
            Err(Error::EmptySelection)
        ));
        let z = [C64::new(0.0, 0.0)];
        let sel = SelectionVector::from_mask(&[true], &[1.0]).unwrap();
        assert!(matches!(
            comm_penalty(&sel, &[C64::new(1.0, 0.0)], &[&z], 1.0, 1.0),
            Err(Error::DegenerateChannel(_))
        ));
    }

    #[test]
    fn contraction_cases() {
        let p = BoundParams::default();
        assert!((contraction_factor(&p, 0.0) - 0.9).abs() < 1e-15);
        let eq = BoundParams { mu: 10.0, ..p };
        assert_eq!(contraction_factor(&eq, 0.0), 0.0);
        let half = BoundParams { mu: 5.0, ..p };
        assert!((contraction_factor(&half, 0.25) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn bound_base_cases() {
        let p = BoundParams::default();
        let one = bound_after_t(&p, &[0.1], 3.0).unwrap();
        assert!((one - (contraction_factor(&p, 0.1) * 3.0 + 0.1 / 10.0)).abs() < 1e-15);
        let zero_phi = BoundParams { mu: 10.0, ..p };
        let v = bound_after_t(&zero_phi, &[0.0, 0.0, 0.7], 5.0).unwrap();
        assert!((v - 0.07).abs() < 1e-15);
        assert!(bound_after_t(&p, &[], 1.0).is_err());
    }

    #[test]
    fn clean_contraction() {
        let p = BoundParams::default();
        let g = noisy_gd_recursion(&p, &[0.0; 6], 0.0, 2.0).unwrap();
        assert!((g - 2.0 * 0.9f64.powi(6)).abs() < 1e-15);
    }
}
