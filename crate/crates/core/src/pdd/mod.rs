//! Penalty dual decomposition solver for joint user selection, receive
//! beamforming and antenna positioning.
//!
//! The outer loop either ascends the multipliers (when the constraint
//! residual is already small) or shrinks the penalty `κ`. The inner loop
//! cycles the closed-form blocks of [`blocks`] until the augmented
//! Lagrangian stalls.

pub mod blocks;
pub mod state;

use serde::{Deserialize, Serialize};

use crate::baselines::{beamformer_for, greedy_selection, QRule};
use crate::channel::{AntennaLayout, ChannelModel, ChannelRealization};
use crate::error::{Error, Result};
use crate::linalg::{inner, norm, normalized, principal_eigenvector, C64};
use crate::objective::{comm_penalty, SelectionVector};

pub use blocks::{
    apply_block, box_rank_one_minimizer, gain_pair_minimizer, position_surrogate, project_q_tilde, update_b, update_b_element,
    update_block1, update_block2, update_block3, update_e, update_e_aux, update_position_element,
    update_positions, update_q_tilde, Block, SWEEP_ORDER,
};
pub use state::{
    augmented_lagrangian, ascend_duals, base_objective, pair_list, residual_inf_norm, residuals, DualState,
    PddState, Problem, Residuals, UserDuals, UserResiduals, UserVars, Weights,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PddConfig {
    pub kappa0: f64,
    pub c_pen: f64,
    /// Inner tolerance at outer step `t`: `max(eps_inner0 · eps_inner_decay^t, eps_inner_min)`.
    pub eps_inner0: f64,
    pub eps_inner_decay: f64,
    pub eps_inner_min: f64,
    pub eps_outer: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub threshold: f64,
    /// Local add/remove/swap search on the binarized selection.
    pub greedy_refine: bool,
}

impl Default for PddConfig {
    fn default() -> Self {
        PddConfig {
            kappa0: 1e-3,
            c_pen: 0.7,
            eps_inner0: 1e-3,
            eps_inner_decay: 0.5,
            eps_inner_min: 1e-7,
            eps_outer: 1e-5,
            max_inner: 200,
            max_outer: 60,
            threshold: 0.5,
            greedy_refine: true,
        }
    }
}

impl PddConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_pen > 0.0 && self.c_pen < 1.0) {
            return Err(Error::Config("pdd.c_pen must lie in (0, 1)".into()));
        }
        if !(self.kappa0 > 0.0 && self.eps_inner0 > 0.0 && self.eps_inner_min > 0.0 && self.eps_outer > 0.0) {
            return Err(Error::Config("pdd penalty and tolerances must be positive".into()));
        }
        if !(self.eps_inner_decay > 0.0 && self.eps_inner_decay <= 1.0) {
            return Err(Error::Config("pdd.eps_inner_decay must lie in (0, 1]".into()));
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::Config("pdd iteration limits must be at least 1".into()));
        }
        Ok(())
    }

    pub fn eps_inner(&self, outer: usize) -> f64 {
        (self.eps_inner0 * self.eps_inner_decay.powi(outer as i32)).max(self.eps_inner_min)
    }
}

/// One line of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub aug_lagrangian: f64,
    pub residual_inf: f64,
    pub kappa: f64,
    /// Physical penalty at the relaxed iterate (`NaN` if nothing is selected).
    pub r_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PddSolution {
    pub selection: SelectionVector,
    pub q: Vec<C64>,
    pub layouts: Vec<AntennaLayout>,
    /// `comm_penalty` at the returned solution.
    pub r: f64,
    pub relaxed_e: Vec<f64>,
    pub final_residual: f64,
    pub converged: bool,
    /// Largest coordinate shift applied by the exit feasibility repair.
    pub repair_shift: f64,
    pub trace: Vec<TraceRecord>,
}

impl PddSolution {
    pub fn channels(&self, base: &[ChannelRealization]) -> Result<Vec<ChannelRealization>> {
        base.iter()
            .zip(&self.layouts)
            .map(|(ch, l)| ch.with_layout(l.clone()))
            .collect()
    }
}

/// Normalized problem, consistent initial state and zero multipliers.
pub fn setup(
    channels: &[ChannelRealization],
    samples: &[f64],
    sigma_n2: f64,
    p_a: f64,
    kappa0: f64,
) -> Result<(Problem, PddState, DualState)> {
    let users = channels.len();
    if users == 0 {
        return Err(Error::InvalidArgument("need at least one user".into()));
    }
    if samples.len() != users || samples.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("one positive sample count per user required".into()));
    }
    if !(p_a > 0.0) || sigma_n2 < 0.0 {
        return Err(Error::InvalidArgument("power must be positive and noise nonnegative".into()));
    }
    let n = channels[0].n_antennas();
    if n == 0 || channels.iter().any(|c| c.n_antennas() != n) {
        return Err(Error::InvalidArgument("all users need the same nonzero antenna count".into()));
    }
    let movable = channels.iter().all(|c| c.model() == ChannelModel::Los);
    let s_ref = samples.iter().sum::<f64>() / users as f64;
    // Geometric mean of per-element channel power keeps normalized gains near one.
    let logs: Vec<f64> = channels
        .iter()
        .map(|c| norm(c.h()).powi(2) / n as f64)
        .filter(|g| *g > 0.0)
        .map(f64::ln)
        .collect();
    if logs.is_empty() {
        return Err(Error::DegenerateChannel("every channel is zero".into()));
    }
    let beta_ref = (logs.iter().sum::<f64>() / logs.len() as f64 / 2.0).exp();
    let s: Vec<f64> = samples.iter().map(|v| v / s_ref).collect();
    let first = channels[0].layout();
    let problem = Problem {
        m_total: s.iter().sum(),
        s,
        rho: sigma_n2 / (p_a * beta_ref * beta_ref * s_ref * s_ref),
        beta: channels
            .iter()
            .map(|c| if movable { c.params.beta / beta_ref } else { C64::new(1.0, 0.0) })
            .collect(),
        dir: channels.iter().map(|c| c.params.direction()).collect(),
        k0: 2.0 * std::f64::consts::PI / channels[0].params.wavelength,
        region: first.region,
        v_x: first.v_x,
        v_y: first.v_y,
        movable,
        n_antennas: n,
        s_ref,
        beta_ref,
        weights: Weights::unit(users),
        obj_scale: 1.0,
    };

    let scaled: Vec<Vec<C64>> = channels
        .iter()
        .map(|c| c.h().iter().map(|h| h / beta_ref).collect())
        .collect();
    let refs: Vec<&[C64]> = scaled.iter().map(|v| v.as_slice()).collect();
    let q = principal_eigenvector(&refs)?;
    let pairs = pair_list(n);

    let mut users_vars = Vec::with_capacity(users);
    for (u, ch) in channels.iter().enumerate() {
        let l = ch.layout();
        let b = if movable {
            problem.steering(u, &l.x, &l.y)
        } else {
            scaled[u].clone()
        };
        let gamma = inner(&q, &b) * problem.beta[u];
        let alpha = gamma.norm_sqr().max(1e-12);
        users_vars.push(UserVars {
            e: 1.0,
            e_tilde: 1.0,
            e_hat: 1.0,
            e_bar: 1.0,
            alpha,
            alpha_tilde: alpha,
            alpha_hat: 0.0,
            gamma,
            b,
            x: l.x.clone(),
            y: l.y.clone(),
            dx: pairs.iter().map(|&(i, j)| l.x[i] - l.x[j]).collect(),
            dy: pairs.iter().map(|&(i, j)| l.y[i] - l.y[j]).collect(),
            sign_x: vec![-1.0; pairs.len()],
            sign_y: vec![-1.0; pairs.len()],
        });
    }
    let c_tilde = users_vars
        .iter()
        .zip(&problem.s)
        .map(|(uv, su)| uv.e_bar * su * su / uv.alpha_tilde)
        .fold(0.0, f64::max);
    for uv in &mut users_vars {
        uv.alpha_hat = uv.alpha_tilde * c_tilde;
    }
    let m = problem.m_total;
    let mut state = PddState {
        users: users_vars,
        q_tilde: q.clone(),
        q,
        eta: problem.rho * c_tilde / (m * m),
        eta_tilde: m,
        eta_hat: m,
        eta_bar: m * m,
        c: c_tilde,
        c_tilde,
    };
    state.refresh_linearization(n);
    let mut problem = problem;
    problem.weights = starting_weights(&problem, &state);
    let f0 = base_objective(&problem, &state);
    problem.obj_scale = if f0 > 0.0 && f0.is_finite() { 1.0 / f0 } else { 1.0 };
    let duals = DualState::zeros(users, n, kappa0);
    Ok((problem, state, duals))
}

/// Reciprocal sizes of each weighted coupling's terms at the starting point.
fn starting_weights(p: &Problem, s: &PddState) -> Weights {
    let inv = |v: f64| if v > 0.0 && v.is_finite() { 1.0 / v } else { 1.0 };
    let m = p.m_total;
    Weights {
        c: inv(s.c),
        eta_tilde: inv(m),
        eta_bar: inv(m * m),
        sum_e_tilde: inv(m),
        sum_e_hat: inv(m),
        noise: inv(p.rho * s.c),
        alpha: s.users.iter().map(|uv| inv(uv.alpha)).collect(),
        alpha_hat: s.users.iter().map(|uv| inv(uv.alpha_hat)).collect(),
        gain: p.s.iter().map(|v| inv(v * v)).collect(),
        // |q^H b| ≤ √N for any unit q, so |β| sets the size of γ.
        gamma: p.beta.iter().map(|b| inv(b.norm())).collect(),
        // Differences measured in radians of steering phase.
        position: p.k0,
    }
}

/// One full inner sweep in the fixed block order.
pub fn inner_sweep(p: &Problem, s: &mut PddState, d: &DualState) -> Result<()> {
    for block in SWEEP_ORDER {
        apply_block(block, p, s, d)?;
    }
    Ok(())
}

/// Physical penalty at the relaxed iterate.
pub fn relaxed_penalty(p: &Problem, s: &PddState) -> f64 {
    let e: Vec<f64> = s.users.iter().map(|uv| uv.e.clamp(0.0, 1.0)).collect();
    let Ok(q) = normalized(&s.q) else {
        return f64::NAN;
    };
    let h: Vec<Vec<C64>> = (0..p.users())
        .map(|u| {
            if p.movable {
                let uv = &s.users[u];
                p.steering(u, &uv.x, &uv.y).into_iter().map(|a| a * p.beta[u]).collect()
            } else {
                s.users[u].b.clone()
            }
        })
        .collect();
    let refs: Vec<&[C64]> = h.iter().map(|v| v.as_slice()).collect();
    let sel = SelectionVector { e, samples: p.s.clone(), binary: false };
    comm_penalty(&sel, &q, &refs, p.rho, 1.0)
        .map(|r| r * p.s_ref * p.s_ref)
        .unwrap_or(f64::NAN)
}

/// Runs the outer/inner iteration on a prepared state. Returns the trace and
/// whether the residual target was met.
pub fn iterate(config: &PddConfig, p: &Problem, s: &mut PddState, d: &mut DualState) -> Result<(Vec<TraceRecord>, bool)> {
    let mut trace = Vec::new();
    let mut converged = false;
    let mut gate = config.eps_inner0;
    for outer in 0..config.max_outer {
        let eps = config.eps_inner(outer);
        s.refresh_linearization(p.n_antennas);
        let mut prev = augmented_lagrangian(p, s, d);
        for inner_iter in 0..config.max_inner {
            inner_sweep(p, s, d).map_err(|e| match e {
                Error::NumericDegeneracy(what) => Error::SolverFailure {
                    reason: format!("numeric degeneracy in {what}"),
                    iterations: trace.len(),
                },
                other => other,
            })?;
            let al = augmented_lagrangian(p, s, d);
            let res = residual_inf_norm(p, s);
            trace.push(TraceRecord {
                outer_iter: outer,
                inner_iter,
                aug_lagrangian: al,
                residual_inf: res,
                kappa: d.kappa,
                r_value: relaxed_penalty(p, s),
            });
            if !al.is_finite() {
                return Err(Error::SolverFailure {
                    reason: "augmented Lagrangian diverged".into(),
                    iterations: trace.len(),
                });
            }
            let stalled = (prev - al).abs() <= eps * al.abs().max(1.0);
            prev = al;
            if stalled {
                break;
            }
        }
        let res = residual_inf_norm(p, s);
        if res <= config.eps_outer {
            converged = true;
            break;
        }
        // Multipliers move when the residual meets the scheduled tolerance or
        // has shrunk by a tenth since the previous outer step; otherwise the
        // penalty tightens.
        if res <= gate.max(eps) {
            ascend_duals(p, s, d);
        } else {
            d.kappa *= config.c_pen;
        }
        gate = 0.9 * res;
    }
    Ok((trace, converged))
}

/// Solves one instance: iterate, binarize, repair layouts, refine the selection.
pub fn solve(
    config: &PddConfig,
    channels: &[ChannelRealization],
    samples: &[f64],
    sigma_n2: f64,
    p_a: f64,
) -> Result<PddSolution> {
    config.validate()?;
    let (p, mut s, mut d) = setup(channels, samples, sigma_n2, p_a, config.kappa0)?;
    let (trace, converged) = iterate(config, &p, &mut s, &mut d)?;
    let final_residual = residual_inf_norm(&p, &s);
    let relaxed_e: Vec<f64> = s.users.iter().map(|uv| uv.e).collect();

    let mut mask: Vec<bool> = relaxed_e.iter().map(|&e| e >= config.threshold).collect();
    if !mask.iter().any(|&m| m) {
        let best = (0..relaxed_e.len())
            .max_by(|&a, &b| (relaxed_e[a] * samples[a]).total_cmp(&(relaxed_e[b] * samples[b])))
            .ok_or(Error::SolverFailure { reason: "no users".into(), iterations: trace.len() })?;
        mask[best] = true;
    }

    let mut layouts = Vec::with_capacity(channels.len());
    let mut repair_shift = 0.0f64;
    for (ch, uv) in channels.iter().zip(&s.users) {
        let mut l = ch.layout().clone();
        if p.movable {
            l.x = uv.x.clone();
            l.y = uv.y.clone();
            let (fixed, shift) = repair_layout(&l);
            repair_shift = repair_shift.max(shift);
            l = fixed;
        }
        layouts.push(l);
    }
    let final_channels: Vec<ChannelRealization> = channels
        .iter()
        .zip(&layouts)
        .map(|(c, l)| c.with_layout(l.clone()))
        .collect::<Result<_>>()?;
    let h: Vec<&[C64]> = final_channels.iter().map(|c| c.h()).collect();
    let q_solver = normalized(&s.q).ok();

    let evaluate = |mask: &[bool]| -> Option<(f64, Vec<C64>)> {
        let sel = SelectionVector::from_mask(mask, samples).ok()?;
        let mut best: Option<(f64, Vec<C64>)> = None;
        let rule_q = beamformer_for(QRule::Eig, &h, mask).ok();
        for q in [q_solver.clone(), rule_q].into_iter().flatten() {
            if let Ok(r) = comm_penalty(&sel, &q, &h, sigma_n2, p_a) {
                if best.as_ref().is_none_or(|(b, _)| r < *b) {
                    best = Some((r, q));
                }
            }
        }
        best
    };

    let (_, mut best_q) = evaluate(&mask).ok_or_else(|| Error::SolverFailure {
        reason: "binarized selection has no finite penalty".into(),
        iterations: trace.len(),
    })?;
    if config.greedy_refine {
        // Local search from the binarized iterate, from a forward-greedy
        // selection, from the full set and from every single user; the best
        // local optimum wins.
        let u = mask.len();
        let mut starts = vec![mask.clone(), vec![true; u]];
        starts.extend((0..u).map(|k| (0..u).map(|j| j == k).collect::<Vec<bool>>()));
        if let Ok(g) = greedy_selection(&h, samples, QRule::Eig, sigma_n2, p_a) {
            starts.push(g.selection.mask());
        }
        let mut best: Option<(f64, Vec<C64>, Vec<bool>)> = None;
        for start in starts {
            let Some((r0, q0)) = evaluate(&start) else { continue };
            let (r, q, m) = local_search(start, r0, q0, &evaluate);
            if best.as_ref().is_none_or(|(b, _, _)| r < *b * (1.0 - 1e-12)) {
                best = Some((r, q, m));
            }
        }
        if let Some((_, q, m)) = best {
            best_q = q;
            mask = m;
        }
    }
    let selection = SelectionVector::from_mask(&mask, samples)?;
    let r = comm_penalty(&selection, &best_q, &h, sigma_n2, p_a)?;
    Ok(PddSolution {
        selection,
        q: best_q,
        layouts,
        r,
        relaxed_e,
        final_residual,
        converged,
        repair_shift,
        trace,
    })
}

/// Best-improvement search over single flips, swaps and pair additions until
/// no move lowers `r`.
fn local_search<F>(mut mask: Vec<bool>, mut best_r: f64, mut best_q: Vec<C64>, evaluate: &F) -> (f64, Vec<C64>, Vec<bool>)
where
    F: Fn(&[bool]) -> Option<(f64, Vec<C64>)>,
{
    let u = mask.len();
    loop {
        let mut improved: Option<(f64, Vec<C64>, Vec<bool>)> = None;
        let mut consider = |cand: Vec<bool>| {
            if !cand.iter().any(|&m| m) {
                return;
            }
            if let Some((r, q)) = evaluate(&cand) {
                let bar = improved.as_ref().map_or(best_r, |(b, _, _)| *b);
                if r < bar * (1.0 - 1e-12) {
                    improved = Some((r, q, cand));
                }
            }
        };
        for a in 0..u {
            let mut cand = mask.clone();
            cand[a] = !cand[a];
            consider(cand);
            for b in (a + 1)..u {
                // Swaps, and joint additions for pairs that only pay off together.
                if mask[a] != mask[b] || !mask[a] {
                    let mut cand = mask.clone();
                    cand[a] = !cand[a];
                    cand[b] = !cand[b];
                    consider(cand);
                }
            }
        }
        match improved {
            Some((r, q, m)) => {
                best_r = r;
                best_q = q;
                mask = m;
            }
            None => return (best_r, best_q, mask),
        }
    }
}

/// Nearest point (per axis, order preserved) satisfying the spacing and region
/// constraints. Returns the layout and the largest coordinate shift.
pub fn repair_layout(layout: &AntennaLayout) -> (AntennaLayout, f64) {
    if layout.is_feasible() {
        return (layout.clone(), 0.0);
    }
    let r = layout.region;
    let x = project_axis(&layout.x, layout.v_x, r.x_min, r.x_max);
    let y = project_axis(&layout.y, layout.v_y, r.y_min, r.y_max);
    let shift = layout
        .x
        .iter()
        .zip(&x)
        .chain(layout.y.iter().zip(&y))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut out = layout.clone();
    out.x = x;
    out.y = y;
    (out, shift)
}

/// Least-squares projection of `z` onto `{sorted gaps ≥ v, lo ≤ z ≤ hi}` with
/// the current ordering fixed: isotonic regression on `z_(k) − k v`, then clamp.
fn project_axis(z: &[f64], v: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = z.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    let t: Vec<f64> = order.iter().enumerate().map(|(k, &i)| z[i] - k as f64 * v).collect();
    // Pool-adjacent-violators: blocks of (mean, weight).
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &val in &t {
        blocks.push((val, 1));
        while blocks.len() > 1 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            *last = ((m1 * w1 as f64 + m2 * w2 as f64) / (w1 + w2) as f64, w1 + w2);
        }
    }
    let upper = hi - v * n.saturating_sub(1) as f64;
    let mut out = vec![0.0; n];
    let mut k = 0;
    for (m, w) in blocks {
        let val = m.clamp(lo, upper.max(lo));
        for _ in 0..w {
            out[order[k]] = val + k as f64 * v;
            k += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channels, ChannelConfig, Region};

    #[test]
    fn axis_projection_spreads_a_cluster() {
        let out = project_axis(&[0.5, 0.5, 0.5], 0.1, 0.0, 1.0);
        let mut s = out.clone();
        s.sort_by(f64::total_cmp);
        assert!((s[1] - s[0] - 0.1).abs() < 1e-12 && (s[2] - s[1] - 0.1).abs() < 1e-12);
        assert!((s.iter().sum::<f64>() / 3.0 - 0.5).abs() < 1e-12);
        let edge = project_axis(&[1.0, 1.0], 0.3, 0.0, 1.0);
        assert!(edge.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(((edge[0] - edge[1]).abs() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn repair_leaves_feasible_layouts_alone() {
        let l = AntennaLayout::staircase(3, Region::square(1.0), 0.2, 0.2, 0.25);
        let (r, shift) = repair_layout(&l);
        assert_eq!(r, l);
        assert_eq!(shift, 0.0);
    }

    #[test]
    fn initial_state_is_consistent() {
        let ch = sample_channels(3, 4, &ChannelConfig { n_antennas: 2, ..Default::default() }).unwrap();
        let (p, s, d) = setup(&ch, &[270.0; 4], 0.01, 1.0, 1.0).unwrap();
        assert!(residual_inf_norm(&p, &s) < 1e-9);
        let al = augmented_lagrangian(&p, &s, &d);
        assert!((al - base_objective(&p, &s)).abs() < 1e-9);
    }
}
