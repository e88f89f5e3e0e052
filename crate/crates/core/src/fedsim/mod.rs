//! Federated training with over-the-air gradient aggregation.
//!
//! Each round the planner picks users, a receive beamformer and antenna
//! layouts; the selected users compute full-batch gradients, the channel sums
//! them, and the server steps `w ← w − lr·Re ĝ`. The server weights user `u`
//! by `S_u / Σ_sel S_v`, so a noiseless, perfectly aligned round is exactly the
//! centralized gradient step on the selected users' pooled data.

pub mod data;
pub mod model;
pub mod plan;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::linalg::{dbm_to_mw, C64};
use crate::ota::{receive_and_combine_with, Embedding, Precoding, Round};
use crate::pdd::PddConfig;

pub use data::{DatasetConfig, DatasetKind, FederatedData, UserData};
pub use model::{accuracy, global_gradient, global_loss, LogisticRegression, Model};
pub use plan::{is_deterministic, plan_round, BaselineConfig, Method, PlanInputs, RoundPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub rounds: usize,
    pub lr: f64,
    /// L2 weight on the model weights (biases are not penalized).
    pub l2: f64,
    pub p_a_dbm: f64,
    pub sigma_n2_dbm: f64,
    /// Noise power override in mW; `Some(0.0)` gives a noiseless channel.
    pub sigma_n2_mw: Option<f64>,
    pub precoding: Precoding,
    pub embedding: Embedding,
    /// Reuse the first round's plan while channels are static.
    pub cache_plan: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rounds: 25,
            lr: 0.05,
            l2: 1e-3,
            p_a_dbm: 0.0,
            sigma_n2_dbm: -20.0,
            sigma_n2_mw: None,
            precoding: Precoding::default(),
            embedding: Embedding::default(),
            cache_plan: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("train.rounds must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::Config("train.lr must be positive and train.l2 nonnegative".into()));
        }
        if !self.p_a_dbm.is_finite() || !self.sigma_n2_dbm.is_finite() {
            return Err(Error::Config("power levels must be finite".into()));
        }
        if self.sigma_n2_mw.is_some_and(|v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("train.sigma_n2_mw must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn p_a(&self) -> f64 {
        dbm_to_mw(self.p_a_dbm)
    }

    pub fn sigma_n2(&self) -> f64 {
        self.sigma_n2_mw.unwrap_or_else(|| dbm_to_mw(self.sigma_n2_dbm))
    }
}

/// Metrics after one round's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub selected_count: usize,
    pub r_value: f64,
    pub max_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub w: Vec<f64>,
    pub trace: Vec<RoundRecord>,
}

impl TrainState {
    pub fn zeros(dim: usize) -> Self {
        TrainState { w: vec![0.0; dim], trace: Vec::new() }
    }
}

/// Aggregated update direction of one round; `None` when every selected
/// gradient is exactly zero.
pub fn aggregate_gradient<M: Model, R: rand::Rng + ?Sized>(
    model: &M,
    w: &[f64],
    users: &[UserData],
    plan: &RoundPlan,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Option<Vec<f64>>> {
    let selected = plan.selection.selected();
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    if users.len() != plan.channels.len() {
        return Err(Error::InvalidArgument("one data shard per channel required".into()));
    }
    if selected.iter().any(|&u| users[u].is_empty()) {
        return Err(Error::InvalidArgument("a selected user holds no samples".into()));
    }
    let grads: Vec<(usize, Vec<f64>)> = selected
        .par_iter()
        .map(|&u| (u, model.gradient(w, &users[u])))
        .collect();
    // A zero gradient has no normalizer: that user stays silent and its
    // samples leave the round's weighting.
    let active: Vec<&(usize, Vec<f64>)> = grads.iter().filter(|(_, g)| g.iter().any(|v| *v != 0.0)).collect();
    if active.is_empty() {
        return Ok(None);
    }
    let total: f64 = active.iter().map(|(u, _)| users[*u].len() as f64).sum();
    let h: Vec<&[C64]> = active.iter().map(|(u, _)| plan.channels[*u].h()).collect();
    let g: Vec<&[f64]> = active.iter().map(|(_, g)| g.as_slice()).collect();
    let weights: Vec<f64> = active.iter().map(|(u, _)| users[*u].len() as f64 / total).collect();
    // Full-power transmission cannot weight users individually; it sums the
    // gradients and the server rescales by the mean weight, which is exact
    // when the selected shards are equally large.
    let (round_weights, post) = match cfg.precoding {
        Precoding::ChannelInversion => (Some(weights.as_slice()), 1.0),
        Precoding::FullPower => (None, weights.iter().sum::<f64>() / weights.len() as f64),
    };
    let round = Round {
        channels: &h,
        q: &plan.q,
        gradients: &g,
        weights: round_weights,
        sigma_n2: cfg.sigma_n2(),
        p_a: cfg.p_a(),
        precoding: cfg.precoding,
        embedding: cfg.embedding,
    };
    let agg = receive_and_combine_with(&round, rng)?;
    Ok(Some(agg.g_hat_real().into_iter().map(|v| post * v).collect()))
}

/// One round: aggregate, step, record metrics.
pub fn fed_round<M: Model, R: rand::Rng + ?Sized>(
    model: &M,
    data: &FederatedData,
    state: &mut TrainState,
    plan: &RoundPlan,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<()> {
    if let Some(g) = aggregate_gradient(model, &state.w, &data.users, plan, cfg, rng)? {
        for (w, d) in state.w.iter_mut().zip(&g) {
            *w -= cfg.lr * d;
        }
    }
    state.trace.push(RoundRecord {
        round: state.trace.len(),
        train_loss: global_loss(model, &state.w, &data.users),
        test_loss: model.loss(&state.w, &data.test),
        test_accuracy: accuracy(model, &state.w, &data.test),
        selected_count: plan.selection.selected_count(),
        r_value: plan.r_value,
        max_gain: plan.max_gain,
    });
    Ok(())
}

/// Result of a training run: the final state and every plan used.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub plans: Vec<RoundPlan>,
}

/// Trains for `cfg.rounds` rounds over static channels. Planning randomness
/// and channel noise come from separate streams of `seed`.
pub fn train<M: Model>(
    model: &M,
    data: &FederatedData,
    channels: &[ChannelRealization],
    method: Method,
    cfg: &TrainConfig,
    pdd: &PddConfig,
    baselines: &BaselineConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let samples = data.samples();
    let inp = PlanInputs {
        channels,
        samples: &samples,
        sigma_n2: cfg.sigma_n2(),
        p_a: cfg.p_a(),
        pdd,
        baselines,
    };
    let mut plan_rng = ChaCha8Rng::seed_from_u64(seed);
    plan_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(2);
    let reuse = cfg.cache_plan && is_deterministic(method, baselines);
    let mut state = TrainState::zeros(model.dim());
    let mut plans: Vec<RoundPlan> = Vec::with_capacity(if reuse { 1 } else { cfg.rounds });
    for t in 0..cfg.rounds {
        let wrap = |e: Error| Error::Round { round: t, source: Box::new(e) };
        if !(reuse && t > 0) {
            plans.push(plan_round(method, &inp, &mut plan_rng).map_err(wrap)?);
        }
        let plan = plans.last().expect("a plan exists after round 0");
        fed_round(model, data, &mut state, plan, cfg, &mut noise_rng).map_err(wrap)?;
    }
    Ok(TrainOutcome { state, plans })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_powers_in_milliwatts() {
        let c = TrainConfig::default();
        assert!((c.p_a() - 1.0).abs() < 1e-15);
        assert!((c.sigma_n2() - 0.01).abs() < 1e-15);
        assert_eq!(TrainConfig { sigma_n2_mw: Some(0.0), ..c }.sigma_n2(), 0.0);
    }

    #[test]
    fn rejects_zero_rounds() {
        assert!(TrainConfig { rounds: 0, ..Default::default() }.validate().is_err());
    }
}
