//! Independent numeric cross-checks, shared by the test suites and the
//! `oracle-suite` command. Every check recomputes its reference by a route
//! that does not reuse the code under test.

pub mod numeric;
pub mod pdd;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channel::{effective_gain, max_gain_bound, sample_channels, ChannelConfig, ChannelModel};
use crate::error::Result;
use crate::fedsim::data::{gaussian_mixture, UserData};
use crate::fedsim::model::{global_gradient, global_loss, LogisticRegression, Model};
use crate::fedsim::plan::RoundPlan;
use crate::fedsim::{fed_round, TrainConfig, TrainState};
use crate::linalg::{inner, norm, C64};
use crate::objective::{noisy_gd_recursion, bound_after_t, contraction_factor, BoundParams, SelectionVector};
use crate::ota::{receive_and_combine_with, theoretical_mse, Embedding, Precoding, Round};
use crate::pdd::{Block, PddConfig, SWEEP_ORDER};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let s = norm(&v);
    v.into_iter().map(|z| z / s).collect()
}

/// Worst deviations of the closed-form block updates over random states.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormReport {
    pub states: usize,
    pub checks: usize,
    pub failures: Vec<pdd::VarCheck>,
    /// Largest deviation per block, in sweep order.
    pub worst: Vec<(Block, f64)>,
}

/// Runs every block's numeric comparison on `states` random instances
/// (`users` users, `n` antennas).
pub fn closed_form_suite(seed: u64, states: usize, users: usize, n: usize, tol: f64) -> Result<ClosedFormReport> {
    let per_state: Vec<Vec<pdd::VarCheck>> = (0..states)
        .into_par_iter()
        .map(|k| -> Result<Vec<pdd::VarCheck>> {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
            let inst = pdd::random_instance(s, users, n)?;
            let mut out = Vec::new();
            for block in SWEEP_ORDER {
                out.extend(pdd::block_checks(block, &inst, s)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut worst: Vec<(Block, f64)> = SWEEP_ORDER.iter().map(|&b| (b, 0.0)).collect();
    let mut failures = Vec::new();
    let mut checks = 0;
    for c in per_state.into_iter().flatten() {
        checks += 1;
        if let Some(slot) = worst.iter_mut().find(|(b, _)| *b == c.block) {
            slot.1 = slot.1.max(c.deviation);
        }
        if !c.passed(tol) {
            failures.push(c);
        }
    }
    Ok(ClosedFormReport { states, checks, failures, worst })
}

/// Block-wise descent of the augmented Lagrangian over random instances.
pub fn monotonicity_suite(seed: u64, instances: usize, users: usize, n: usize, sweeps: usize) -> Result<pdd::DescentReport> {
    let reps: Vec<pdd::DescentReport> = (0..instances)
        .into_par_iter()
        .map(|k| {
            let inst = pdd::random_instance(seed.wrapping_mul(7_919).wrapping_add(k as u64), users, n)?;
            pdd::block_descent(&inst, sweeps)
        })
        .collect::<Result<_>>()?;
    Ok(reps.into_iter().fold(pdd::DescentReport::default(), |acc, r| pdd::DescentReport {
        updates: acc.updates + r.updates,
        worst_increase: acc.worst_increase.max(r.worst_increase),
        evaluation_mismatch: acc.evaluation_mismatch.max(r.evaluation_mismatch),
    }))
}

/// Solver against enumeration on instances with `users_range` users.
pub fn exhaustive_suite(
    seed: u64,
    instances: usize,
    users_range: std::ops::RangeInclusive<usize>,
    n: usize,
    config: &PddConfig,
) -> Result<Vec<pdd::ExhaustiveComparison>> {
    let span = users_range.end() - users_range.start() + 1;
    (0..instances)
        .into_par_iter()
        .map(|k| {
            let users = users_range.start() + k % span;
            pdd::compare_with_exhaustive(seed.wrapping_mul(104_729).wrapping_add(k as u64), users, n, config)
        })
        .collect()
}

/// One Monte-Carlo configuration of the aggregation error law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseCase {
    pub k: usize,
    pub n_antennas: usize,
    pub dim: usize,
    pub sigma_n2: f64,
    pub p_a: f64,
}

/// Standard cases: two single-user, two five-user and one twenty-user.
pub const MSE_CASES: [MseCase; 5] = [
    MseCase { k: 1, n_antennas: 4, dim: 8, sigma_n2: 0.01, p_a: 1.0 },
    MseCase { k: 1, n_antennas: 2, dim: 8, sigma_n2: 0.1, p_a: 0.5 },
    MseCase { k: 5, n_antennas: 4, dim: 8, sigma_n2: 0.01, p_a: 1.0 },
    MseCase { k: 5, n_antennas: 4, dim: 8, sigma_n2: 0.05, p_a: 2.0 },
    MseCase { k: 20, n_antennas: 4, dim: 8, sigma_n2: 0.01, p_a: 1.0 },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseReport {
    pub case: MseCase,
    pub trials: usize,
    pub empirical: f64,
    pub standard_error: f64,
    /// The closed-form law with its factor `K`.
    pub theoretical: f64,
    /// `σ² ‖g‖² / (P_a · max_gain)`: the noise power actually left after the
    /// receiver's `1/max|q^H h|` scaling.
    pub noise_only: f64,
}

impl MseReport {
    pub fn within(&self, reference: f64, n_se: f64) -> bool {
        (self.empirical - reference).abs() <= n_se * self.standard_error
    }
}

/// Full-power aggregation with complex embedding, equal gradient norms and
/// equal aligned gains, repeated over independent noise draws.
pub fn mse_law(seed: u64, case: MseCase, trials: usize) -> Result<MseReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h: Vec<C64> = (0..case.n_antennas)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let q: Vec<C64> = h.iter().map(|z| z / norm(&h)).collect();
    let g_norm = 1.5;
    let grads: Vec<Vec<f64>> = (0..case.k)
        .map(|_| {
            let v: Vec<f64> = (0..case.dim).map(|_| rng.sample(StandardNormal)).collect();
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| g_norm * x / s).collect()
        })
        .collect();
    let channels: Vec<&[C64]> = vec![h.as_slice(); case.k];
    let gradients: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
    let round = Round {
        channels: &channels,
        q: &q,
        gradients: &gradients,
        weights: None,
        sigma_n2: case.sigma_n2,
        p_a: case.p_a,
        precoding: Precoding::FullPower,
        embedding: Embedding::Complex,
    };
    let gain = inner(&q, &h).norm_sqr();
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..trials {
        let e = receive_and_combine_with(&round, &mut rng)?.squared_error();
        sum += e;
        sum2 += e * e;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = (sum2 - n * mean * mean) / (n - 1.0);
    Ok(MseReport {
        case,
        trials,
        empirical: mean,
        standard_error: (var.max(0.0) / n).sqrt(),
        theoretical: theoretical_mse(case.k, case.sigma_n2, g_norm * g_norm, case.p_a, gain)?,
        noise_only: case.sigma_n2 * g_norm * g_norm / (case.p_a * gain),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainReport {
    pub configurations: usize,
    pub beamformers: usize,
    /// Largest `gain / bound` over random unit beamformers.
    pub worst_random_ratio: f64,
    /// Smallest `gain / bound` of the channel-aligned beamformer.
    pub aligned_min_ratio: f64,
}

/// Random unit beamformers against the `|β|² N` ceiling on line-of-sight
/// channels with 1 to 8 antennas.
pub fn gain_bound(seed: u64, per_configuration: usize) -> Result<GainReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = GainReport { worst_random_ratio: 0.0, aligned_min_ratio: f64::INFINITY, ..Default::default() };
    for n in [1, 2, 3, 4, 6, 8] {
        let cfg = ChannelConfig { n_antennas: n, model: ChannelModel::Los, ..Default::default() };
        for ch in sample_channels(rng.random(), 3, &cfg)? {
            let bound = max_gain_bound(ch.params.beta, n);
            for _ in 0..per_configuration {
                let q = unit_vector(&mut rng, n);
                rep.worst_random_ratio = rep.worst_random_ratio.max(effective_gain(&q, ch.h())? / bound);
            }
            let h = ch.h();
            let q: Vec<C64> = h.iter().map(|z| z / norm(h)).collect();
            rep.aligned_min_ratio = rep.aligned_min_ratio.min(effective_gain(&q, h)? / bound);
            rep.configurations += 1;
            rep.beamformers += per_configuration;
        }
    }
    Ok(rep)
}

impl Default for GainReport {
    fn default() -> Self {
        GainReport { configurations: 0, beamformers: 0, worst_random_ratio: 0.0, aligned_min_ratio: 0.0 }
    }
}

fn random_bound_params(rng: &mut ChaCha8Rng) -> BoundParams {
    let l = rng.random_range(1.0..20.0);
    BoundParams {
        mu: rng.random_range(0.01..1.0) * l,
        l,
        alpha1: rng.random_range(0.0..3.0),
        alpha2: rng.random_range(1.0..3.0),
        lr: rng.random_range(0.01..0.2),
        noise_coefficient: None,
    }
}

/// Largest relative gap between the closed-form bound and the round-by-round
/// recursion `gap ← φ_t gap + (α₁/L) r_t` over random five-round instances.
pub fn bound_recursion_gap(seed: u64, instances: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let p = random_bound_params(&mut rng);
        let r: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..0.4) / p.coefficient()).collect();
        let gap0 = rng.random_range(0.1..10.0);
        let mut gap = gap0;
        for &rt in &r {
            gap = contraction_factor(&p, rt) * gap + p.alpha1 / p.l * rt;
        }
        let closed = bound_after_t(&p, &r, gap0)?;
        worst = worst.max((closed - gap).abs() / gap.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Largest relative gap between the noise-free recursion and `(1 − μ/L)^T`.
pub fn noiseless_contraction_gap(seed: u64, instances: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let p = random_bound_params(&mut rng);
        let t = rng.random_range(1..=30);
        let gap0 = rng.random_range(0.1..10.0);
        let got = noisy_gd_recursion(&p, &vec![0.0; t], 0.0, gap0)?;
        let want = gap0 * (1.0 - p.mu / p.l).powi(t as i32);
        worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

fn small_problem(seed: u64) -> Result<(LogisticRegression, Vec<UserData>, UserData)> {
    let data = gaussian_mixture(4, 3, 5, 30, 40, 1.0, seed);
    Ok((LogisticRegression::new(3, 5, 1e-2), data.users, data.test))
}

fn random_weights(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Largest absolute gap between the analytic gradient and central
/// differences of the loss.
pub fn gradient_fd_error(seed: u64) -> Result<f64> {
    let (model, users, _) = small_problem(seed)?;
    let w = random_weights(seed ^ 0xABCD, model.dim());
    let g = model.gradient(&w, &users[0]);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..w.len() {
        let (mut wp, mut wm) = (w.clone(), w.clone());
        wp[i] += h;
        wm[i] -= h;
        let fd = (model.loss(&wp, &users[0]) - model.loss(&wm, &users[0])) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs());
    }
    Ok(worst)
}

/// Gap between the sample-weighted per-user loss and the loss of the pooled
/// dataset.
pub fn pooled_loss_error(seed: u64) -> Result<f64> {
    let (model, users, _) = small_problem(seed)?;
    let w = random_weights(seed ^ 0x1234, model.dim());
    let pooled = UserData::pooled(&users)?;
    Ok((global_loss(&model, &w, &users) - model.loss(&w, &pooled)).abs())
}

/// Largest entry gap between a noiseless all-user round and one step of
/// gradient descent on the pooled loss.
pub fn centralized_step_error(seed: u64) -> Result<f64> {
    let (model, users, test) = small_problem(seed)?;
    let data = crate::fedsim::data::FederatedData { users, test, classes: 3, features: 5 };
    let cfg = ChannelConfig { n_antennas: 4, ..Default::default() };
    let channels = sample_channels(seed, data.users.len(), &cfg)?;
    let samples: Vec<f64> = data.users.iter().map(|u| u.len() as f64).collect();
    let h: Vec<&[C64]> = channels.iter().map(|c| c.h()).collect();
    let q = crate::linalg::principal_eigenvector(&h)?;
    let selection = SelectionVector::from_mask(&vec![true; samples.len()], &samples)?;
    let plan = RoundPlan::new(selection, q, channels, 1e-3, 1.0)?;
    let train = TrainConfig { sigma_n2_mw: Some(0.0), ..Default::default() };
    let w0 = random_weights(seed ^ 0x77, model.dim());
    let pooled = UserData::pooled(&data.users)?;
    let step: Vec<f64> = w0.iter().zip(model.gradient(&w0, &pooled)).map(|(w, g)| w - train.lr * g).collect();
    let mut state = TrainState { w: w0, trace: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fed_round(&model, &data, &mut state, &plan, &train, &mut rng)?;
    debug_assert_eq!(global_gradient(&model, &state.w, &data.users).len(), model.dim());
    Ok(state.w.iter().zip(&step).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// A reduced suite that finishes in seconds.
pub fn run_suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();

    let cf = closed_form_suite(seed, 8, 3, 2, 1e-6)?;
    out.push(Check::new(
        "closed-form block updates",
        cf.failures.is_empty(),
        format!("{} comparisons on {} states, {} outside 1e-6", cf.checks, cf.states, cf.failures.len()),
    ));

    let mono = monotonicity_suite(seed, 10, 4, 2, 5)?;
    out.push(Check::new(
        "augmented Lagrangian descent",
        mono.worst_increase <= 1e-9 && mono.evaluation_mismatch <= 1e-12,
        format!("worst increase {:.3e}, evaluation mismatch {:.3e}", mono.worst_increase, mono.evaluation_mismatch),
    ));

    let cmp = exhaustive_suite(seed, 4, 3..=6, 2, &PddConfig::default())?;
    let worst = cmp.iter().map(|c| c.ratio()).fold(0.0, f64::max);
    let res = cmp.iter().map(|c| c.final_residual).fold(0.0, f64::max);
    out.push(Check::new(
        "solver against enumeration",
        worst <= 1.1 && res <= 1e-5,
        format!("worst penalty ratio {worst:.4}, worst residual {res:.2e}"),
    ));

    let m = mse_law(seed, MSE_CASES[0], 20_000)?;
    out.push(Check::new(
        "single-user aggregation error",
        m.within(m.theoretical, 3.0),
        format!("empirical {:.5e} ± {:.1e}, law {:.5e}", m.empirical, m.standard_error, m.theoretical),
    ));

    let g = gain_bound(seed, 200)?;
    out.push(Check::new(
        "beamforming gain ceiling",
        g.worst_random_ratio <= 1.0 + 1e-12 && g.aligned_min_ratio >= 0.999,
        format!("worst random ratio {:.6}, aligned ratio {:.9}", g.worst_random_ratio, g.aligned_min_ratio),
    ));

    let b = bound_recursion_gap(seed, 100)?;
    let c = noiseless_contraction_gap(seed, 100)?;
    out.push(Check::new(
        "convergence bound recursion",
        b <= 1e-12 && c <= 1e-12,
        format!("closed vs unrolled {b:.2e}, noiseless contraction {c:.2e}"),
    ));

    let fd = gradient_fd_error(seed)?;
    let pl = pooled_loss_error(seed)?;
    let cs = centralized_step_error(seed)?;
    out.push(Check::new(
        "model gradient and aggregation",
        fd <= 1e-5 && pl <= 1e-12 && cs <= 1e-9,
        format!("finite differences {fd:.2e}, pooled loss {pl:.2e}, centralized step {cs:.2e}"),
    ));
    Ok(out)
}
