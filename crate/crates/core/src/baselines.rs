//! Reference schemes: Select-All, MRT beamforming, random and grid-searched
//! antenna positions, greedy selection, and an exhaustive selection oracle
//! for small instances.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{effective_gain, AntennaLayout, ChannelRealization, Region};
use crate::error::{Error, Result};
use crate::linalg::{normalized, principal_eigenvector, C64};
use crate::objective::{comm_penalty, SelectionVector};

/// Largest instance the exhaustive oracle accepts.
pub const ORACLE_MAX_USERS: usize = 12;

/// How the receive beamformer is derived from a selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QRule {
    /// Normalized sum of the selected channels.
    MrtSum,
    /// Principal eigenvector of `Σ h_u h_u^H` over the selected users.
    Eig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RfaRedraw {
    #[default]
    PerRun,
    PerRound,
}

pub fn select_all(samples: &[f64]) -> SelectionVector {
    SelectionVector {
        e: vec![1.0; samples.len()],
        samples: samples.to_vec(),
        binary: true,
    }
}

/// `q = Σ_{selected} h_u / ‖Σ h_u‖`.
pub fn mrt_beamformer(channels: &[&[C64]], mask: &[bool]) -> Result<Vec<C64>> {
    let n = channels.first().map(|h| h.len()).ok_or(Error::EmptySelection)?;
    let mut sum = vec![C64::new(0.0, 0.0); n];
    let mut any = false;
    for (h, &m) in channels.iter().zip(mask) {
        if m {
            any = true;
            for (s, v) in sum.iter_mut().zip(h.iter()) {
                *s += v;
            }
        }
    }
    if !any {
        return Err(Error::EmptySelection);
    }
    normalized(&sum).map_err(|_| Error::DegenerateChannel("selected channels sum to zero".into()))
}

pub fn beamformer_for(rule: QRule, channels: &[&[C64]], mask: &[bool]) -> Result<Vec<C64>> {
    match rule {
        QRule::MrtSum => mrt_beamformer(channels, mask),
        QRule::Eig => {
            let sel: Vec<&[C64]> = channels
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(h, _)| *h)
                .collect();
            if sel.is_empty() {
                return Err(Error::EmptySelection);
            }
            principal_eigenvector(&sel)
        }
    }
}

/// Uniform rejection sampling of a feasible layout.
pub fn random_fa_positions<R: Rng + ?Sized>(
    region: Region,
    n: usize,
    v_x: f64,
    v_y: f64,
    rng: &mut R,
) -> Result<AntennaLayout> {
    const RESTARTS: usize = 1000;
    const TRIES_PER_ELEMENT: usize = 200;
    if n == 0 {
        return Err(Error::InvalidArgument("layout needs at least one element".into()));
    }
    for _ in 0..RESTARTS {
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        'element: for _ in 0..n {
            for _ in 0..TRIES_PER_ELEMENT {
                let cx = rng.random_range(region.x_min..=region.x_max);
                let cy = rng.random_range(region.y_min..=region.y_max);
                let ok = x
                    .iter()
                    .zip(&y)
                    .all(|(&px, &py): (&f64, &f64)| (cx - px).abs() >= v_x && (cy - py).abs() >= v_y);
                if ok {
                    x.push(cx);
                    y.push(cy);
                    continue 'element;
                }
            }
            break;
        }
        if x.len() == n {
            return AntennaLayout::new(x, y, region, v_x, v_y);
        }
    }
    Err(Error::Packing {
        elements: n,
        attempts: RESTARTS,
    })
}

/// Result of the grid position search.
#[derive(Debug, Clone, PartialEq)]
pub struct ApsResult {
    pub layout: AntennaLayout,
    /// Gain after every accepted move, starting with the initial gain.
    pub gain_trace: Vec<f64>,
}

/// Coordinate-wise grid search: each element in turn moves to the feasible
/// grid point maximizing `|q^H h|²` with the other elements fixed.
pub fn aps_positions(channel: &ChannelRealization, q: &[C64], grid_step: f64, rounds: usize) -> Result<ApsResult> {
    if !(grid_step > 0.0) {
        return Err(Error::InvalidArgument("grid step must be positive".into()));
    }
    let mut ch = channel.clone();
    let region = ch.layout().region;
    let xs = grid_axis(region.x_min, region.x_max, grid_step);
    let ys = grid_axis(region.y_min, region.y_max, grid_step);
    let mut gain = effective_gain(q, ch.h())?;
    let mut trace = vec![gain];
    let n = ch.n_antennas();
    for _ in 0..rounds {
        let mut moved = false;
        for i in 0..n {
            let base = ch.layout().clone();
            let mut best: Option<(f64, f64, f64)> = None;
            for &gx in &xs {
                for &gy in &ys {
                    let mut cand = base.clone();
                    cand.x[i] = gx;
                    cand.y[i] = gy;
                    if !cand.is_feasible() {
                        continue;
                    }
                    let g = effective_gain(q, &crate::channel::channel_vector(&ch.params, &cand)?)?;
                    if best.is_none_or(|(bg, _, _)| g > bg) {
                        best = Some((g, gx, gy));
                    }
                }
            }
            if let Some((g, gx, gy)) = best {
                if g > gain * (1.0 + 1e-12) {
                    let mut next = base;
                    next.x[i] = gx;
                    next.y[i] = gy;
                    ch.set_layout(next)?;
                    gain = g;
                    trace.push(gain);
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    Ok(ApsResult {
        layout: ch.layout().clone(),
        gain_trace: trace,
    })
}

fn grid_axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=count).map(|k| lo + k as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionChoice {
    pub selection: SelectionVector,
    pub q: Vec<C64>,
    pub r: f64,
}

fn evaluate_mask(
    mask: &[bool],
    channels: &[&[C64]],
    samples: &[f64],
    rule: QRule,
    sigma_n2: f64,
    p_a: f64,
) -> Option<(f64, Vec<C64>)> {
    let q = beamformer_for(rule, channels, mask).ok()?;
    let sel = SelectionVector::from_mask(mask, samples).ok()?;
    let r = comm_penalty(&sel, &q, channels, sigma_n2, p_a).ok()?;
    r.is_finite().then_some((r, q))
}

/// `a` beats `b`: smaller r, then more selected samples, then lexicographically smaller mask.
fn better(a: (f64, f64, &[bool]), b: (f64, f64, &[bool])) -> bool {
    if a.0 != b.0 {
        return a.0 < b.0;
    }
    if a.1 != b.1 {
        return a.1 > b.1;
    }
    // Lexicographic on the mask read as a bit string, selected first.
    for (x, y) in a.2.iter().zip(b.2) {
        if x != y {
            return *x && !*y;
        }
    }
    false
}

/// Minimum of `comm_penalty` over every nonempty selection, with `q` set by `rule`.
pub fn exhaustive_selection_oracle(
    channels: &[&[C64]],
    samples: &[f64],
    rule: QRule,
    sigma_n2: f64,
    p_a: f64,
) -> Result<SelectionChoice> {
    let u = channels.len();
    if u > ORACLE_MAX_USERS {
        return Err(Error::Size(format!(
            "exhaustive oracle supports at most {ORACLE_MAX_USERS} users, got {u}"
        )));
    }
    if u == 0 || samples.len() != u {
        return Err(Error::InvalidArgument("one sample count per user required".into()));
    }
    let mut best: Option<(f64, f64, Vec<bool>, Vec<C64>)> = None;
    for bits in 1u32..(1u32 << u) {
        let mask: Vec<bool> = (0..u).map(|k| bits & (1 << k) != 0).collect();
        let Some((r, q)) = evaluate_mask(&mask, channels, samples, rule, sigma_n2, p_a) else {
            continue;
        };
        let total: f64 = mask.iter().zip(samples).filter(|(m, _)| **m).map(|(_, s)| s).sum();
        let wins = match &best {
            None => true,
            Some((br, bt, bm, _)) => better((r, total, &mask), (*br, *bt, bm)),
        };
        if wins {
            best = Some((r, total, mask, q));
        }
    }
    let (r, _, mask, q) = best.ok_or(Error::EmptySelection)?;
    Ok(SelectionChoice {
        selection: SelectionVector::from_mask(&mask, samples)?,
        q,
        r,
    })
}

/// Greedy selection: start from the best single user, add the user that
/// lowers `r` most until no addition helps, then drop users while that helps.
pub fn greedy_selection(
    channels: &[&[C64]],
    samples: &[f64],
    rule: QRule,
    sigma_n2: f64,
    p_a: f64,
) -> Result<SelectionChoice> {
    let u = channels.len();
    if u == 0 || samples.len() != u {
        return Err(Error::InvalidArgument("one sample count per user required".into()));
    }
    let mut mask = vec![false; u];
    let mut current: Option<(f64, Vec<C64>)> = None;
    loop {
        let mut step: Option<(usize, f64, Vec<C64>)> = None;
        for k in 0..u {
            if mask[k] {
                continue;
            }
            mask[k] = true;
            if let Some((r, q)) = evaluate_mask(&mask, channels, samples, rule, sigma_n2, p_a) {
                let bar = step.as_ref().map(|s| s.1).or(current.as_ref().map(|c| c.0));
                if bar.is_none_or(|b| r < b) {
                    step = Some((k, r, q));
                }
            }
            mask[k] = false;
        }
        match step {
            Some((k, r, q)) => {
                mask[k] = true;
                current = Some((r, q));
            }
            None => break,
        }
    }
    let (mut r, mut q) = current.ok_or_else(|| Error::DegenerateChannel("no user has a usable channel".into()))?;
    loop {
        let mut step: Option<(usize, f64, Vec<C64>)> = None;
        for k in 0..u {
            if !mask[k] || mask.iter().filter(|&&m| m).count() == 1 {
                continue;
            }
            mask[k] = false;
            if let Some((rr, qq)) = evaluate_mask(&mask, channels, samples, rule, sigma_n2, p_a) {
                if rr < step.as_ref().map_or(r, |s| s.1) {
                    step = Some((k, rr, qq));
                }
            }
            mask[k] = true;
        }
        match step {
            Some((k, rr, qq)) => {
                mask[k] = false;
                r = rr;
                q = qq;
            }
            None => break,
        }
    }
    Ok(SelectionChoice {
        selection: SelectionVector::from_mask(&mask, samples)?,
        q,
        r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{min_distance_ok, sample_channels, ChannelConfig};
    use crate::linalg::norm_sqr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn select_all_cases() {
        let s = select_all(&[1.0, 2.0, 3.0]);
        assert_eq!(s.e, vec![1.0; 3]);
        assert_eq!(s.selected_samples(), 6.0);
    }

    #[test]
    fn mrt_single_and_duplicate() {
        let h = [C64::new(1.0, 1.0), C64::new(0.0, -2.0)];
        let q1 = mrt_beamformer(&[&h], &[true]).unwrap();
        assert!((effective_gain(&q1, &h).unwrap() - norm_sqr(&h)).abs() < 1e-12);
        let q2 = mrt_beamformer(&[&h, &h], &[true, true]).unwrap();
        for (a, b) in q1.iter().zip(&q2) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(mrt_beamformer(&[&h], &[false]).is_err());
    }

    #[test]
    fn random_layouts_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..=4 {
            let l = random_fa_positions(Region::square(0.4), n, 0.05, 0.05, &mut rng).unwrap();
            assert!(min_distance_ok(&l) && l.in_region());
        }
        assert!(matches!(
            random_fa_positions(Region::square(0.1), 4, 0.05, 0.05, &mut rng),
            Err(Error::Packing { .. })
        ));
    }

    #[test]
    fn aps_degenerate_grid_keeps_layout() {
        let ch = sample_channels(1, 1, &ChannelConfig::default()).unwrap().remove(0);
        let q = normalized(ch.h()).unwrap();
        let out = aps_positions(&ch, &q, 10.0, 3).unwrap();
        assert!(out.gain_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(out.layout.is_feasible());
    }

    #[test]
    fn oracle_small_cases() {
        let h = [C64::new(1.0, 0.0)];
        let z = [C64::new(0.0, 0.0)];
        let one = exhaustive_selection_oracle(&[&h], &[1.0], QRule::MrtSum, 1.0, 1.0).unwrap();
        assert_eq!(one.selection.e, vec![1.0]);
        let two = exhaustive_selection_oracle(&[&h, &z], &[1.0, 1.0], QRule::Eig, 1e-3, 1.0).unwrap();
        assert_eq!(two.selection.e, vec![1.0, 0.0]);
        let many: Vec<&[C64]> = vec![&h; 13];
        assert!(matches!(
            exhaustive_selection_oracle(&many, &[1.0; 13], QRule::Eig, 1.0, 1.0),
            Err(Error::Size(_))
        ));
    }
}
