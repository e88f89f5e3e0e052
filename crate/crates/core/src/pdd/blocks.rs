//! Closed-form block updates. Each one exactly minimizes the augmented
//! Lagrangian over its variables with everything else held fixed, except
//! the element positions, which minimize a quadratic majorizer of it.

use crate::error::{Error, Result};
use crate::linalg::{inner, solve_identity_plus_gram, C64};

use super::state::{pair_list, DualState, PddState, Problem};

/// Extra curvature for a lone element, whose phase term alone is rank one.
const LONE_ELEMENT_PROX: f64 = 1e-6;

/// `e_u = clamp((ẽ + ê + ē − κ(λ₁ + λ₂ + λ₃)) / 3, 0, 1)`.
pub fn update_e(_p: &Problem, s: &mut PddState, d: &DualState) {
    let k = d.kappa;
    for (uv, ud) in s.users.iter_mut().zip(&d.users) {
        let v = (uv.e_tilde + uv.e_hat + uv.e_bar - k * (ud.l_e_tilde + ud.l_e_hat + ud.l_e_bar)) / 3.0;
        uv.e = v.clamp(0.0, 1.0);
    }
}

/// Real roots of `t³ + a t + b = 0`.
fn depressed_cubic_roots(a: f64, b: f64) -> Vec<f64> {
    let disc = (b / 2.0).powi(2) + (a / 3.0).powi(3);
    if disc > 0.0 {
        let sq = disc.sqrt();
        vec![(-b / 2.0 + sq).cbrt() + (-b / 2.0 - sq).cbrt()]
    } else if a == 0.0 {
        vec![0.0]
    } else {
        let r = (-a / 3.0).sqrt();
        let cos_arg = ((-b / 2.0) / r.powi(3)).clamp(-1.0, 1.0);
        let th = cos_arg.acos();
        (0..3)
            .map(|k| 2.0 * r * ((th - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos())
            .collect()
    }
}

/// Minimizes `W(α − A)² + |γ − G|²` subject to `α ≤ |γ|²`, `W > 0`.
pub fn gain_pair_minimizer(weight: f64, a_target: f64, g_target: C64, fallback_phase: f64) -> (f64, C64) {
    let gm = g_target.norm();
    if a_target <= gm * gm {
        return (a_target, g_target);
    }
    // On the boundary α = t², γ = t e^{j∠G}: stationary points of W(t² − A)² + (t − |G|)².
    let f = |t: f64| weight * (t * t - a_target).powi(2) + (t - gm).powi(2);
    let mut best = 0.0;
    let mut best_val = f(0.0);
    for mut t in depressed_cubic_roots(0.5 / weight - a_target, -gm / (2.0 * weight)) {
        // One Newton polish against cancellation in the closed form.
        let dv = 4.0 * weight * t * t * t + (2.0 - 4.0 * weight * a_target) * t - 2.0 * gm;
        let dd = 12.0 * weight * t * t + 2.0 - 4.0 * weight * a_target;
        if dd.abs() > 1e-300 {
            let next = t - dv / dd;
            if f(next.max(0.0)) <= f(t.max(0.0)) {
                t = next;
            }
        }
        if t >= 0.0 && f(t) < best_val {
            best = t;
            best_val = f(t);
        }
    }
    let phase = if gm > 0.0 { g_target.arg() } else { fallback_phase };
    (best * best, C64::from_polar(best, phase))
}

/// Block 1: `(α, γ)`, `α̂`, `c`, `η̃` and the pairwise-difference auxiliaries.
pub fn update_block1(p: &Problem, s: &mut PddState, d: &DualState) -> Result<()> {
    let k = d.kappa;
    let w = &p.weights;
    let pairs = pair_list(p.n_antennas);
    for (u, (uv, ud)) in s.users.iter_mut().zip(&d.users).enumerate() {
        let (wa, wg) = (w.alpha[u], w.gamma[u]);
        let a_t = uv.alpha_tilde - k * ud.l_alpha / wa;
        let g_t = inner(&s.q, &uv.b) * p.beta[u] - k * ud.l_gamma / wg;
        let (alpha, gamma) = gain_pair_minimizer((wa / wg).powi(2), a_t, g_t, uv.gamma.arg());
        uv.alpha = alpha;
        uv.gamma = gamma;

        let (wa, wg) = (w.alpha_hat[u], w.gain[u]);
        let target = uv.alpha_tilde * s.c_tilde - k * ud.l_alpha_hat / wa;
        let floor = uv.e_bar * p.s[u] * p.s[u] + k * ud.mu_gain / wg;
        uv.alpha_hat = if target >= floor {
            target
        } else {
            (wa * wa * target + wg * wg * floor) / (wa * wa + wg * wg)
        };

        if p.movable {
            for (kk, &(i, j)) in pairs.iter().enumerate() {
                let tx = uv.x[i] - uv.x[j] - k * ud.l_dx[kk] / w.position;
                uv.dx[kk] = project_half_line(tx, uv.sign_x[kk], p.v_x);
                let ty = uv.y[i] - uv.y[j] - k * ud.l_dy[kk] / w.position;
                uv.dy[kk] = project_half_line(ty, uv.sign_y[kk], p.v_y);
            }
        }
    }
    let (wc, wn) = (w.c * w.c, w.noise * w.noise);
    s.c = (wc * (s.c_tilde - k * d.l_c / w.c) + wn * p.rho * (s.eta * s.eta_bar + k * d.l_noise / w.noise))
        / (wc + wn * p.rho * p.rho);

    let sum_hat: f64 = s.users.iter().zip(&p.s).map(|(uv, su)| uv.e_hat * su).sum();
    let eh = s.eta_hat;
    let (wt, wb, wh) = (w.eta_tilde * w.eta_tilde, w.eta_bar * w.eta_bar, w.sum_e_hat * w.sum_e_hat);
    s.eta_tilde = (wt * (eh - k * d.l_eta_tilde / w.eta_tilde)
        + wb * eh * (s.eta_bar + k * d.l_eta_bar / w.eta_bar)
        + wh * (sum_hat - k * d.l_sum_e_hat / w.sum_e_hat))
        / (wt + wb * eh * eh + wh);
    Ok(())
}

/// Closest point to `t` on `{z : sign·z ≥ v}`.
fn project_half_line(t: f64, sign: f64, v: f64) -> f64 {
    if sign * t >= v {
        t
    } else {
        sign * v
    }
}

/// `q̃ = (q + κλ) / ‖q + κλ‖`.
pub fn project_q_tilde(q: &[C64], dual: &[C64], kappa: f64) -> Result<Vec<C64>> {
    let v: Vec<C64> = q.iter().zip(dual).map(|(a, l)| a + kappa * l).collect();
    crate::linalg::normalized(&v)
}

pub fn update_q_tilde(_p: &Problem, s: &mut PddState, d: &DualState) -> Result<()> {
    s.q_tilde = project_q_tilde(&s.q, &d.l_q, d.kappa)?;
    Ok(())
}

/// One element of the unit-modulus sweep: `b_i = exp(j∠(d_i + conj(w_i) r_i))`.
pub fn update_b_element(p: &Problem, s: &mut PddState, d: &DualState, u: usize, i: usize) {
    let k = d.kappa;
    let ud = &d.users[u];
    let uv = &s.users[u];
    let a = p.steering(u, &uv.x, &uv.y);
    let w: Vec<C64> = s.q.iter().map(|qk| p.beta[u] * qk.conj()).collect();
    let mut others = C64::new(0.0, 0.0);
    for (kk, (wk, bk)) in w.iter().zip(&uv.b).enumerate() {
        if kk != i {
            others += wk * bk;
        }
    }
    let wg = p.weights.gamma[u];
    let r_i = uv.gamma + k * ud.l_gamma / wg - others;
    let coeff = a[i] + k * ud.l_b[i] + wg * wg * w[i].conj() * r_i;
    if coeff.norm() > 0.0 {
        s.users[u].b[i] = C64::from_polar(1.0, coeff.arg());
    }
}

pub fn update_b(p: &Problem, s: &mut PddState, d: &DualState, sweeps: usize) {
    if !p.movable {
        return;
    }
    for _ in 0..sweeps {
        for u in 0..p.users() {
            for i in 0..p.n_antennas {
                update_b_element(p, s, d, u, i);
            }
        }
    }
}

/// Minimizes `Σ (v_u − p_u)² + (h − Σ s_u v_u)²` over `v ∈ [0, 1]^U`.
///
/// Stationarity gives `v_u = clamp(p_u + s_u t, 0, 1)` with `t = h − Σ s_u v_u`;
/// the right side is nonincreasing in `t`, so the root is unique and bisection
/// finds it.
pub fn box_rank_one_minimizer(p: &[f64], s: &[f64], h: f64) -> Vec<f64> {
    let at = |t: f64| -> f64 { t - h + p.iter().zip(s).map(|(pu, su)| su * (pu + su * t).clamp(0.0, 1.0)).sum::<f64>() };
    let total: f64 = s.iter().sum();
    let mut lo = -(h.abs() + total + 1.0);
    let mut hi = h.abs() + total + 1.0;
    debug_assert!(at(lo) <= 0.0 && at(hi) >= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    p.iter().zip(s).map(|(pu, su)| (pu + su * t).clamp(0.0, 1.0)).collect()
}

/// Block 2a: `ẽ`, `ê` (each a rank-one-coupled quadratic over the unit box)
/// and `ē`.
pub fn update_e_aux(p: &Problem, s: &mut PddState, d: &DualState) {
    let k = d.kappa;
    let w = &p.weights;

    let (wt, wh) = (w.sum_e_tilde, w.sum_e_hat);
    let st: Vec<f64> = p.s.iter().map(|v| wt * v).collect();
    let pt: Vec<f64> = s.users.iter().zip(&d.users).map(|(uv, ud)| uv.e + k * ud.l_e_tilde).collect();
    let et = box_rank_one_minimizer(&pt, &st, wt * s.eta_hat + k * d.l_sum_e_tilde);
    let sh: Vec<f64> = p.s.iter().map(|v| wh * v).collect();
    let ph: Vec<f64> = s.users.iter().zip(&d.users).map(|(uv, ud)| uv.e + k * ud.l_e_hat).collect();
    let eh = box_rank_one_minimizer(&ph, &sh, wh * s.eta_tilde + k * d.l_sum_e_hat);
    for ((uv, a), b) in s.users.iter_mut().zip(et).zip(eh) {
        uv.e_tilde = a;
        uv.e_hat = b;
    }

    for (u, (uv, ud)) in s.users.iter_mut().zip(&d.users).enumerate() {
        let target = uv.e + k * ud.l_e_bar;
        let wg = w.gain[u];
        let cap = uv.alpha_hat - k * ud.mu_gain / wg;
        let s2 = p.s[u] * p.s[u];
        let g = wg * wg * s2;
        uv.e_bar = if s2 * target <= cap {
            target
        } else {
            (target + g * cap) / (1.0 + g * s2)
        };
    }
}

/// Block 2b: `α̃`, `η̂`, `η` and the beamformer `q`.
pub fn update_block2(p: &Problem, s: &mut PddState, d: &DualState) -> Result<()> {
    let k = d.kappa;
    let w = &p.weights;
    let ct = s.c_tilde;
    for (u, (uv, ud)) in s.users.iter_mut().zip(&d.users).enumerate() {
        let wa = w.alpha[u] * w.alpha[u];
        let wh = w.alpha_hat[u] * w.alpha_hat[u];
        uv.alpha_tilde = (wa * (uv.alpha + k * ud.l_alpha / w.alpha[u])
            + wh * ct * (uv.alpha_hat + k * ud.l_alpha_hat / w.alpha_hat[u]))
            / (wa + wh * ct * ct);
    }

    let uf = p.users() as f64;
    let wd = 8.0 * p.obj_scale / (uf * uf);
    let et = s.eta_tilde;
    let (wt, wb, ws) = (w.eta_tilde * w.eta_tilde, w.eta_bar * w.eta_bar, w.sum_e_tilde * w.sum_e_tilde);
    let sum_t: f64 = s.users.iter().zip(&p.s).map(|(uv, su)| uv.e_tilde * su).sum();
    let num = wd * p.m_total
        + (wt * (et + k * d.l_eta_tilde / w.eta_tilde)
            + wb * et * (s.eta_bar + k * d.l_eta_bar / w.eta_bar)
            + ws * (sum_t - k * d.l_sum_e_tilde / w.sum_e_tilde))
            / k;
    let den = wd + (wt + wb * et * et + ws) / k;
    s.eta_hat = num / den;

    if s.eta_bar == 0.0 || !s.eta_bar.is_finite() {
        return Err(Error::NumericDegeneracy("noise-level update (eta_bar vanished)"));
    }
    let wn = w.noise * w.noise;
    s.eta = (p.rho * s.c - k * d.l_noise / w.noise) / s.eta_bar - k * p.obj_scale / (wn * s.eta_bar * s.eta_bar);

    let z: Vec<Vec<C64>> = s
        .users
        .iter()
        .enumerate()
        .map(|(u, uv)| uv.b.iter().map(|bi| bi * p.beta[u] * w.gamma[u]).collect())
        .collect();
    let mut rhs: Vec<C64> = s.q_tilde.iter().zip(&d.l_q).map(|(qt, l)| qt - k * l).collect();
    for (u, ((zu, uv), ud)) in z.iter().zip(&s.users).zip(&d.users).enumerate() {
        let coef = (uv.gamma * w.gamma[u] + k * ud.l_gamma).conj();
        for (r, zi) in rhs.iter_mut().zip(zu) {
            *r += zi * coef;
        }
    }
    let zrefs: Vec<&[C64]> = z.iter().map(|v| v.as_slice()).collect();
    s.q = solve_identity_plus_gram(&zrefs, &rhs)?;
    Ok(())
}

/// Quadratic data `(A, rhs, const-free)` of the per-element position surrogate
/// `J(p) = pᵀAp − 2 rhsᵀp + const`.
struct ElementQuadratic {
    a: [[f64; 2]; 2],
    rhs: [f64; 2],
}

impl ElementQuadratic {
    fn value(&self, pt: [f64; 2]) -> f64 {
        let ap0 = self.a[0][0] * pt[0] + self.a[0][1] * pt[1];
        let ap1 = self.a[1][0] * pt[0] + self.a[1][1] * pt[1];
        pt[0] * ap0 + pt[1] * ap1 - 2.0 * (self.rhs[0] * pt[0] + self.rhs[1] * pt[1])
    }
}

/// Ingredients of the surrogate for element `i` of user `u`.
struct SurrogateParts {
    /// `|d_i|` and the majorized phase target `θ'`.
    weight: f64,
    phase_target: f64,
    mx: Vec<f64>,
    my: Vec<f64>,
    /// Squared weight of the pairwise-difference couplings.
    pair_weight: f64,
    prox: f64,
    current: [f64; 2],
}

fn surrogate_parts(p: &Problem, s: &PddState, d: &DualState, u: usize, i: usize) -> SurrogateParts {
    let k = d.kappa;
    let uv = &s.users[u];
    let ud = &d.users[u];
    let [px, py] = p.dir[u];
    let di = uv.b[i] - k * ud.l_b[i];
    let theta0 = p.k0 * (px * uv.x[i] + py * uv.y[i]);
    let delta = theta0 - di.arg();
    let wp = p.weights.position;
    let (mut mx, mut my) = (Vec::new(), Vec::new());
    for (kk, &(a, b)) in pair_list(p.n_antennas).iter().enumerate() {
        if a == i {
            mx.push(uv.dx[kk] + uv.x[b] + k * ud.l_dx[kk] / wp);
            my.push(uv.dy[kk] + uv.y[b] + k * ud.l_dy[kk] / wp);
        } else if b == i {
            mx.push(uv.x[a] - uv.dx[kk] - k * ud.l_dx[kk] / wp);
            my.push(uv.y[a] - uv.dy[kk] - k * ud.l_dy[kk] / wp);
        }
    }
    let weight = di.norm();
    let prox = if p.n_antennas == 1 {
        LONE_ELEMENT_PROX * (1.0 + weight * p.k0 * p.k0)
    } else {
        0.0
    };
    SurrogateParts {
        weight,
        phase_target: theta0 - delta.sin(),
        mx,
        my,
        pair_weight: wp * wp,
        prox,
        current: [uv.x[i], uv.y[i]],
    }
}

/// Majorizer of the position-dependent part of the augmented Lagrangian
/// (times `2κ`) for one element, tight at the current position:
/// `|d_i|(k₀πᵀp − θ')² + w² Σ_j [(x − m_j)² + (y − n_j)²]`.
pub fn position_surrogate(p: &Problem, s: &PddState, d: &DualState, u: usize, i: usize, pt: [f64; 2]) -> f64 {
    let sp = surrogate_parts(p, s, d, u, i);
    let [px, py] = p.dir[u];
    let ph = p.k0 * (px * pt[0] + py * pt[1]) - sp.phase_target;
    let mut v = sp.weight * ph * ph;
    v += sp.pair_weight * sp.mx.iter().map(|m| (pt[0] - m).powi(2)).sum::<f64>();
    v += sp.pair_weight * sp.my.iter().map(|m| (pt[1] - m).powi(2)).sum::<f64>();
    v += sp.prox * ((pt[0] - sp.current[0]).powi(2) + (pt[1] - sp.current[1]).powi(2));
    v
}

/// Exact minimizer of [`position_surrogate`] over the region.
pub fn update_position_element(p: &Problem, s: &mut PddState, d: &DualState, u: usize, i: usize) {
    let sp = surrogate_parts(p, s, d, u, i);
    let [px, py] = p.dir[u];
    let nn = sp.pair_weight * sp.mx.len() as f64 + sp.prox;
    let wk2 = sp.weight * p.k0 * p.k0;
    let a = [[nn + wk2 * px * px, wk2 * px * py], [wk2 * px * py, nn + wk2 * py * py]];
    let lin = sp.weight * p.k0 * sp.phase_target;
    let rhs = [
        lin * px + sp.pair_weight * sp.mx.iter().sum::<f64>() + sp.prox * sp.current[0],
        lin * py + sp.pair_weight * sp.my.iter().sum::<f64>() + sp.prox * sp.current[1],
    ];
    let quad = ElementQuadratic { a, rhs };
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    debug_assert!(det > 0.0, "position system is positive definite");
    let interior = [
        (rhs[0] * a[1][1] - rhs[1] * a[0][1]) / det,
        (a[0][0] * rhs[1] - a[1][0] * rhs[0]) / det,
    ];
    let reg = p.region;
    let best = if reg.contains(interior[0], interior[1]) {
        interior
    } else {
        // Convex quadratic: the constrained minimum lies on an edge.
        let mut cands = Vec::with_capacity(4);
        for x in [reg.x_min, reg.x_max] {
            let y = ((rhs[1] - a[1][0] * x) / a[1][1]).clamp(reg.y_min, reg.y_max);
            cands.push([x, y]);
        }
        for y in [reg.y_min, reg.y_max] {
            let x = ((rhs[0] - a[0][1] * y) / a[0][0]).clamp(reg.x_min, reg.x_max);
            cands.push([x, y]);
        }
        cands
            .into_iter()
            .min_by(|l, r| quad.value(*l).total_cmp(&quad.value(*r)))
            .unwrap()
    };
    let uv = &mut s.users[u];
    uv.x[i] = best[0];
    uv.y[i] = best[1];
}

/// Block 3a: Gauss-Seidel pass over every element of every user.
pub fn update_positions(p: &Problem, s: &mut PddState, d: &DualState) {
    if !p.movable {
        return;
    }
    for u in 0..p.users() {
        for i in 0..p.n_antennas {
            update_position_element(p, s, d, u, i);
        }
    }
}

/// Block 3b: `η̄` and `c̃`.
pub fn update_block3(p: &Problem, s: &mut PddState, d: &DualState) -> Result<()> {
    let k = d.kappa;
    let w = &p.weights;
    let (wb, wn) = (w.eta_bar * w.eta_bar, w.noise * w.noise);
    s.eta_bar = (wb * (s.eta_hat * s.eta_tilde - k * d.l_eta_bar / w.eta_bar)
        + wn * s.eta * (p.rho * s.c - k * d.l_noise / w.noise))
        / (wb + wn * s.eta * s.eta);
    let wc = w.c * w.c;
    let mut num = wc * (s.c + k * d.l_c / w.c);
    let mut den = wc;
    for (u, (uv, ud)) in s.users.iter().zip(&d.users).enumerate() {
        let wa = w.alpha_hat[u] * w.alpha_hat[u];
        num += wa * uv.alpha_tilde * (uv.alpha_hat + k * ud.l_alpha_hat / w.alpha_hat[u]);
        den += wa * uv.alpha_tilde * uv.alpha_tilde;
    }
    s.c_tilde = num / den;
    if !s.c_tilde.is_finite() || !s.eta_bar.is_finite() {
        return Err(Error::NumericDegeneracy("block 3 update"));
    }
    Ok(())
}

/// The blocks of one inner sweep, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    E,
    Block1,
    QTilde,
    B,
    EAux,
    Block2,
    Positions,
    Block3,
}

pub const SWEEP_ORDER: [Block; 8] = [
    Block::E,
    Block::Block1,
    Block::QTilde,
    Block::B,
    Block::EAux,
    Block::Block2,
    Block::Positions,
    Block::Block3,
];

pub fn apply_block(block: Block, p: &Problem, s: &mut PddState, d: &DualState) -> Result<()> {
    match block {
        Block::E => update_e(p, s, d),
        Block::Block1 => update_block1(p, s, d)?,
        Block::QTilde => update_q_tilde(p, s, d)?,
        Block::B => update_b(p, s, d, 1),
        Block::EAux => update_e_aux(p, s, d),
        Block::Block2 => update_block2(p, s, d)?,
        Block::Positions => update_positions(p, s, d),
        Block::Block3 => update_block3(p, s, d)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_roots_are_roots() {
        for (a, b) in [(-3.0, 1.0), (1.0, -2.0), (-0.5, -0.1), (0.0, -1.0)] {
            for t in depressed_cubic_roots(a, b) {
                assert!((t * t * t + a * t + b).abs() < 1e-10, "a={a} b={b} t={t}");
            }
        }
    }

    #[test]
    fn gain_pair_inactive_and_active() {
        let (a, g) = gain_pair_minimizer(1.0, 0.5, C64::new(1.0, 1.0), 0.0);
        assert_eq!((a, g), (0.5, C64::new(1.0, 1.0)));
        let (a, g) = gain_pair_minimizer(1.0, 4.0, C64::new(0.0, 1.0), 0.0);
        assert!((a - g.norm_sqr()).abs() < 1e-12);
        assert!((g.arg() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        // Brute-force over the boundary.
        let f = |t: f64| (t * t - 4.0f64).powi(2) + (t - 1.0f64).powi(2);
        let brute = (0..200_000).map(|k| k as f64 * 1e-5).map(f).fold(f64::INFINITY, f64::min);
        assert!((f(a.sqrt()) - brute).abs() < 1e-8);
    }

    #[test]
    fn q_tilde_projection() {
        let q = [C64::new(3.0, 0.0), C64::new(4.0, 0.0)];
        let zero = [C64::new(0.0, 0.0); 2];
        let v = project_q_tilde(&q, &zero, 0.7).unwrap();
        assert!((v[0].re - 0.6).abs() < 1e-15 && (v[1].re - 0.8).abs() < 1e-15);
        assert!(project_q_tilde(&zero, &zero, 1.0).is_err());
    }
}
