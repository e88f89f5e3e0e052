//! Variables, multipliers, residuals and the augmented Lagrangian.
//!
//! Everything here lives in normalized units: sample counts are divided by
//! `s_ref` and channels by `beta_ref`, so the noise weight becomes
//! `rho = σ² / (P_a β_ref² s_ref²)` and the physical penalty is
//! `s_ref²` times the normalized one.
//!
//! Couplings (each enters as `(1/2κ)|res + κλ|²`):
//!
//! | residual                | multiplier            |
//! |-------------------------|-----------------------|
//! | `e − ẽ`, `e − ê`, `e − ē` | `l_e_tilde`, `l_e_hat`, `l_e_bar` |
//! | `γ − q^H b β`           | `l_gamma`             |
//! | `a(x, y) − b`           | `l_b`                 |
//! | `α − α̃`                 | `l_alpha`             |
//! | `α̂ − α̃ c̃`               | `l_alpha_hat`         |
//! | `x̃_ij − (x_i − x_j)`    | `l_dx` (same for y)   |
//! | `c − c̃`                 | `l_c`                 |
//! | `η̃ − η̂`                 | `l_eta_tilde`         |
//! | `η̄ − η̂ η̃`               | `l_eta_bar`           |
//! | `q − q̃`                 | `l_q`                 |
//! | `η̂ − Σ ẽ s`             | `l_sum_e_tilde`       |
//! | `η̃ − Σ ê s`             | `l_sum_e_hat`         |
//! | `η η̄ − ρ c`             | `l_noise`             |
//!
//! The inequality `ē s² ≤ α̂` enters as
//! `(1/2κ)[max(0, w(ē s² − α̂) + κμ)² − (κμ)²]`.
//!
//! The scalar couplings on the noise chain and the gain couplings are scaled
//! by fixed weights `w` (see [`Weights`]) so every residual is relative to the
//! size of its terms at the starting point; unweighted couplings have `w = 1`.
//! The objective is divided by its starting value. Neither changes the
//! feasible set or the minimizers, but together they keep block coordinate
//! descent from stalling on couplings whose terms differ by orders of
//! magnitude.

use serde::{Deserialize, Serialize};

use crate::channel::Region;
use crate::linalg::{inner, C64};

/// Static data of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    /// Normalized sample counts `S_u / s_ref`.
    pub s: Vec<f64>,
    /// `Σ s`.
    pub m_total: f64,
    pub rho: f64,
    /// Normalized path gains; all ones when positions are fixed.
    pub beta: Vec<C64>,
    /// Direction cosines `(cos θ_u, sin φ_u)`.
    pub dir: Vec<[f64; 2]>,
    /// `2π/λ`.
    pub k0: f64,
    pub region: Region,
    pub v_x: f64,
    pub v_y: f64,
    /// False for channels whose response does not depend on positions; `b`
    /// then holds the normalized channel and never moves.
    pub movable: bool,
    pub n_antennas: usize,
    pub s_ref: f64,
    pub beta_ref: f64,
    pub weights: Weights,
    /// Multiplies the objective; the reciprocal of its starting value.
    pub obj_scale: f64,
}

/// Residual weights; each coupling enters as `w · residual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub c: f64,
    pub eta_tilde: f64,
    pub eta_bar: f64,
    pub sum_e_tilde: f64,
    pub sum_e_hat: f64,
    pub noise: f64,
    /// Per user, for `α − α̃`.
    pub alpha: Vec<f64>,
    /// Per user, for `α̂ − α̃ c̃`.
    pub alpha_hat: Vec<f64>,
    /// Per user, for `ē s² − α̂`.
    pub gain: Vec<f64>,
    /// Per user, for `γ − β q^H b`.
    pub gamma: Vec<f64>,
    /// Pairwise differences, for `x̃ − (x_i − x_j)` and its `y` twin.
    pub position: f64,
}

impl Weights {
    pub fn unit(users: usize) -> Self {
        Weights {
            c: 1.0,
            eta_tilde: 1.0,
            eta_bar: 1.0,
            sum_e_tilde: 1.0,
            sum_e_hat: 1.0,
            noise: 1.0,
            alpha: vec![1.0; users],
            alpha_hat: vec![1.0; users],
            gain: vec![1.0; users],
            gamma: vec![1.0; users],
            position: 1.0,
        }
    }
}

impl Problem {
    pub fn users(&self) -> usize {
        self.s.len()
    }

    pub fn pairs(&self) -> usize {
        self.n_antennas * self.n_antennas.saturating_sub(1) / 2
    }

    /// Steering vector at the given element positions.
    pub fn steering(&self, u: usize, x: &[f64], y: &[f64]) -> Vec<C64> {
        let [px, py] = self.dir[u];
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| C64::from_polar(1.0, self.k0 * (px * xi + py * yi)))
            .collect()
    }
}

/// Ordered element pairs `(i, j)`, `i < j`.
pub fn pair_list(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push((i, j));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserVars {
    pub e: f64,
    pub e_tilde: f64,
    pub e_hat: f64,
    pub e_bar: f64,
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub alpha_hat: f64,
    pub gamma: C64,
    pub b: Vec<C64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Pairwise-difference auxiliaries, indexed like [`pair_list`].
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    /// Orientation of each pair at the current linearization point (±1).
    pub sign_x: Vec<f64>,
    pub sign_y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PddState {
    pub users: Vec<UserVars>,
    pub q: Vec<C64>,
    pub q_tilde: Vec<C64>,
    pub eta: f64,
    pub eta_tilde: f64,
    pub eta_hat: f64,
    pub eta_bar: f64,
    pub c: f64,
    pub c_tilde: f64,
}

impl PddState {
    /// Re-anchors the pairwise linearization at the current positions.
    pub fn refresh_linearization(&mut self, n: usize) {
        let pairs = pair_list(n);
        for uv in &mut self.users {
            for (k, &(i, j)) in pairs.iter().enumerate() {
                uv.sign_x[k] = orientation(uv.x[i] - uv.x[j]);
                uv.sign_y[k] = orientation(uv.y[i] - uv.y[j]);
            }
        }
    }
}

fn orientation(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDuals {
    pub l_e_tilde: f64,
    pub l_e_hat: f64,
    pub l_e_bar: f64,
    pub l_gamma: C64,
    pub l_b: Vec<C64>,
    pub l_alpha: f64,
    pub l_alpha_hat: f64,
    pub l_dx: Vec<f64>,
    pub l_dy: Vec<f64>,
    /// Multiplier of `ē s² ≤ α̂`; kept nonnegative.
    pub mu_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub users: Vec<UserDuals>,
    pub l_c: f64,
    pub l_eta_tilde: f64,
    pub l_eta_bar: f64,
    pub l_q: Vec<C64>,
    pub l_sum_e_tilde: f64,
    pub l_sum_e_hat: f64,
    pub l_noise: f64,
    pub kappa: f64,
}

impl DualState {
    pub fn zeros(users: usize, n: usize, kappa: f64) -> Self {
        let pairs = n * n.saturating_sub(1) / 2;
        DualState {
            users: (0..users)
                .map(|_| UserDuals {
                    l_e_tilde: 0.0,
                    l_e_hat: 0.0,
                    l_e_bar: 0.0,
                    l_gamma: C64::new(0.0, 0.0),
                    l_b: vec![C64::new(0.0, 0.0); n],
                    l_alpha: 0.0,
                    l_alpha_hat: 0.0,
                    l_dx: vec![0.0; pairs],
                    l_dy: vec![0.0; pairs],
                    mu_gain: 0.0,
                })
                .collect(),
            l_c: 0.0,
            l_eta_tilde: 0.0,
            l_eta_bar: 0.0,
            l_q: vec![C64::new(0.0, 0.0); n],
            l_sum_e_tilde: 0.0,
            l_sum_e_hat: 0.0,
            l_noise: 0.0,
            kappa,
        }
    }
}

/// Weighted constraint residuals, shaped like [`DualState`].
#[derive(Debug, Clone, PartialEq)]
pub struct UserResiduals {
    pub e_tilde: f64,
    pub e_hat: f64,
    pub e_bar: f64,
    pub gamma: C64,
    pub b: Vec<C64>,
    pub alpha: f64,
    pub alpha_hat: f64,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    /// `w(ē s² − α̂)` (feasible when ≤ 0).
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub users: Vec<UserResiduals>,
    pub c: f64,
    pub eta_tilde: f64,
    pub eta_bar: f64,
    pub q: Vec<C64>,
    pub sum_e_tilde: f64,
    pub sum_e_hat: f64,
    pub noise: f64,
}

pub fn residuals(p: &Problem, s: &PddState) -> Residuals {
    let w = &p.weights;
    let pairs = pair_list(p.n_antennas);
    let users = s
        .users
        .iter()
        .enumerate()
        .map(|(u, uv)| {
            let (b_res, dx, dy) = if p.movable {
                let a = p.steering(u, &uv.x, &uv.y);
                let b_res = a.iter().zip(&uv.b).map(|(ai, bi)| ai - bi).collect();
                let dx = pairs
                    .iter()
                    .enumerate()
                    .map(|(k, &(i, j))| w.position * (uv.dx[k] - (uv.x[i] - uv.x[j])))
                    .collect();
                let dy = pairs
                    .iter()
                    .enumerate()
                    .map(|(k, &(i, j))| w.position * (uv.dy[k] - (uv.y[i] - uv.y[j])))
                    .collect();
                (b_res, dx, dy)
            } else {
                (Vec::new(), Vec::new(), Vec::new())
            };
            UserResiduals {
                e_tilde: uv.e - uv.e_tilde,
                e_hat: uv.e - uv.e_hat,
                e_bar: uv.e - uv.e_bar,
                gamma: (uv.gamma - inner(&s.q, &uv.b) * p.beta[u]) * w.gamma[u],
                b: b_res,
                alpha: w.alpha[u] * (uv.alpha - uv.alpha_tilde),
                alpha_hat: w.alpha_hat[u] * (uv.alpha_hat - uv.alpha_tilde * s.c_tilde),
                dx,
                dy,
                gain: w.gain[u] * (uv.e_bar * p.s[u] * p.s[u] - uv.alpha_hat),
            }
        })
        .collect();
    let sum_t: f64 = s.users.iter().zip(&p.s).map(|(uv, su)| uv.e_tilde * su).sum();
    let sum_h: f64 = s.users.iter().zip(&p.s).map(|(uv, su)| uv.e_hat * su).sum();
    Residuals {
        users,
        c: w.c * (s.c - s.c_tilde),
        eta_tilde: w.eta_tilde * (s.eta_tilde - s.eta_hat),
        eta_bar: w.eta_bar * (s.eta_bar - s.eta_hat * s.eta_tilde),
        q: s.q.iter().zip(&s.q_tilde).map(|(a, b)| a - b).collect(),
        sum_e_tilde: w.sum_e_tilde * (s.eta_hat - sum_t),
        sum_e_hat: w.sum_e_hat * (s.eta_tilde - sum_h),
        noise: w.noise * (s.eta * s.eta_bar - p.rho * s.c),
    }
}

/// `‖residual‖_∞`; the inequality contributes its positive part.
pub fn residual_inf_norm(p: &Problem, s: &PddState) -> f64 {
    let r = residuals(p, s);
    let mut m = [r.c, r.eta_tilde, r.eta_bar, r.sum_e_tilde, r.sum_e_hat, r.noise]
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    m = r.q.iter().fold(m, |a, v| a.max(v.norm()));
    for ur in &r.users {
        for v in [ur.e_tilde, ur.e_hat, ur.e_bar, ur.alpha, ur.alpha_hat] {
            m = m.max(v.abs());
        }
        m = m.max(ur.gamma.norm()).max(ur.gain.max(0.0));
        m = ur.b.iter().fold(m, |a, v| a.max(v.norm()));
        m = ur.dx.iter().chain(&ur.dy).fold(m, |a, v| a.max(v.abs()));
    }
    m
}

/// `obj_scale · ((4/U²)(M − η̂)² + η)`.
pub fn base_objective(p: &Problem, s: &PddState) -> f64 {
    let u = p.users() as f64;
    let gap = p.m_total - s.eta_hat;
    p.obj_scale * (4.0 / (u * u) * gap * gap + s.eta)
}

fn sq(res: f64, lam: f64, kappa: f64) -> f64 {
    let t = res + kappa * lam;
    t * t / (2.0 * kappa)
}

fn csq(res: C64, lam: C64, kappa: f64) -> f64 {
    (res + kappa * lam).norm_sqr() / (2.0 * kappa)
}

/// Inequality term for `g ≤ 0` with multiplier `μ ≥ 0`.
pub(crate) fn ineq_term(g: f64, mu: f64, kappa: f64) -> f64 {
    let t = (g + kappa * mu).max(0.0);
    (t * t - (kappa * mu) * (kappa * mu)) / (2.0 * kappa)
}

pub fn augmented_lagrangian(p: &Problem, s: &PddState, d: &DualState) -> f64 {
    let k = d.kappa;
    let r = residuals(p, s);
    let mut total = base_objective(p, s);
    total += sq(r.c, d.l_c, k)
        + sq(r.eta_tilde, d.l_eta_tilde, k)
        + sq(r.eta_bar, d.l_eta_bar, k)
        + sq(r.sum_e_tilde, d.l_sum_e_tilde, k)
        + sq(r.sum_e_hat, d.l_sum_e_hat, k)
        + sq(r.noise, d.l_noise, k);
    total += r.q.iter().zip(&d.l_q).map(|(&a, &l)| csq(a, l, k)).sum::<f64>();
    for (ur, ud) in r.users.iter().zip(&d.users) {
        total += sq(ur.e_tilde, ud.l_e_tilde, k)
            + sq(ur.e_hat, ud.l_e_hat, k)
            + sq(ur.e_bar, ud.l_e_bar, k)
            + sq(ur.alpha, ud.l_alpha, k)
            + sq(ur.alpha_hat, ud.l_alpha_hat, k)
            + csq(ur.gamma, ud.l_gamma, k)
            + ineq_term(ur.gain, ud.mu_gain, k);
        total += ur.b.iter().zip(&ud.l_b).map(|(&a, &l)| csq(a, l, k)).sum::<f64>();
        total += ur.dx.iter().zip(&ud.l_dx).map(|(&a, &l)| sq(a, l, k)).sum::<f64>();
        total += ur.dy.iter().zip(&ud.l_dy).map(|(&a, &l)| sq(a, l, k)).sum::<f64>();
    }
    total
}

/// Dual ascent `λ ← λ + res/κ`; the inequality multiplier is projected onto `μ ≥ 0`.
pub fn ascend_duals(p: &Problem, s: &PddState, d: &mut DualState) {
    let k = d.kappa;
    let r = residuals(p, s);
    d.l_c += r.c / k;
    d.l_eta_tilde += r.eta_tilde / k;
    d.l_eta_bar += r.eta_bar / k;
    d.l_sum_e_tilde += r.sum_e_tilde / k;
    d.l_sum_e_hat += r.sum_e_hat / k;
    d.l_noise += r.noise / k;
    for (l, v) in d.l_q.iter_mut().zip(&r.q) {
        *l += v / k;
    }
    for (ud, ur) in d.users.iter_mut().zip(&r.users) {
        ud.l_e_tilde += ur.e_tilde / k;
        ud.l_e_hat += ur.e_hat / k;
        ud.l_e_bar += ur.e_bar / k;
        ud.l_alpha += ur.alpha / k;
        ud.l_alpha_hat += ur.alpha_hat / k;
        ud.l_gamma += ur.gamma / k;
        for (l, v) in ud.l_b.iter_mut().zip(&ur.b) {
            *l += v / k;
        }
        for (l, v) in ud.l_dx.iter_mut().zip(&ur.dx) {
            *l += v / k;
        }
        for (l, v) in ud.l_dy.iter_mut().zip(&ur.dy) {
            *l += v / k;
        }
        ud.mu_gain = (ud.mu_gain + ur.gain / k).max(0.0);
    }
}
