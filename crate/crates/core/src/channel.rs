//! Fluid-antenna line-of-sight channel model.
//!
//! Every user sees the server array through its own set of movable element
//! positions. The array response of element `i` has phase
//! `2π/λ · (x_i cos θ + y_i sin φ)`, and the channel is the complex path gain
//! times that response. A Rayleigh mode ignores positions entirely and draws
//! an i.i.d. small-scale vector instead.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{inner, norm_sqr, C64};

/// Axis-aligned region the antenna elements may move within (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn square(side: f64) -> Self {
        Region {
            x_min: 0.0,
            x_max: side,
            y_min: 0.0,
            y_max: side,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// Element coordinates of one user's fluid-antenna array.
///
/// Feasibility is reported, not enforced: solver iterates pass through
/// layouts that violate the spacing rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaLayout {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub region: Region,
    pub v_x: f64,
    pub v_y: f64,
}

impl AntennaLayout {
    pub fn new(x: Vec<f64>, y: Vec<f64>, region: Region, v_x: f64, v_y: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "layout has {} x and {} y coordinates",
                x.len(),
                y.len()
            )));
        }
        Ok(AntennaLayout {
            x,
            y,
            region,
            v_x,
            v_y,
        })
    }

    /// Staircase layout: element `i` sits at `(x0 + i·s, y0 + i·s)`, centred in the region.
    /// Both axes need pairwise separation, so a rectangular grid would not do.
    pub fn staircase(n: usize, region: Region, v_x: f64, v_y: f64, spacing: f64) -> Self {
        let span = spacing * n.saturating_sub(1) as f64;
        let x0 = region.x_min + 0.5 * (region.width() - span).max(0.0);
        let y0 = region.y_min + 0.5 * (region.height() - span).max(0.0);
        let x = (0..n).map(|i| x0 + spacing * i as f64).collect();
        let y = (0..n).map(|i| y0 + spacing * i as f64).collect();
        AntennaLayout {
            x,
            y,
            region,
            v_x,
            v_y,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn in_region(&self) -> bool {
        self.x
            .iter()
            .zip(&self.y)
            .all(|(&x, &y)| self.region.contains(x, y))
    }

    /// Region membership and pairwise spacing on both axes.
    pub fn is_feasible(&self) -> bool {
        self.in_region() && min_distance_ok(self)
    }
}

/// Line-of-sight parameters of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub beta: C64,
    pub theta: f64,
    pub phi: f64,
    pub wavelength: f64,
}

impl ChannelParams {
    /// Direction cosines `(cos θ, sin φ)` that multiply `(x, y)` in the phase.
    pub fn direction(&self) -> [f64; 2] {
        [self.theta.cos(), self.phi.sin()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelModel {
    #[default]
    Los,
    Rayleigh,
}

/// One user's channel. `h` is kept in sync with `layout`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub params: ChannelParams,
    pub distance_m: f64,
    layout: AntennaLayout,
    /// Position-independent small-scale vector (Rayleigh mode only).
    fading: Option<Vec<C64>>,
    h: Vec<C64>,
}

impl ChannelRealization {
    pub fn los(params: ChannelParams, layout: AntennaLayout, distance_m: f64) -> Result<Self> {
        let h = channel_vector(&params, &layout)?;
        Ok(ChannelRealization {
            params,
            distance_m,
            layout,
            fading: None,
            h,
        })
    }

    pub fn rayleigh(
        params: ChannelParams,
        layout: AntennaLayout,
        distance_m: f64,
        h: Vec<C64>,
    ) -> Result<Self> {
        if h.len() != layout.len() {
            return Err(Error::InvalidArgument(
                "fading vector length differs from antenna count".into(),
            ));
        }
        Ok(ChannelRealization {
            params,
            distance_m,
            layout,
            fading: Some(h.clone()),
            h,
        })
    }

    pub fn model(&self) -> ChannelModel {
        if self.fading.is_some() {
            ChannelModel::Rayleigh
        } else {
            ChannelModel::Los
        }
    }

    pub fn h(&self) -> &[C64] {
        &self.h
    }

    pub fn layout(&self) -> &AntennaLayout {
        &self.layout
    }

    pub fn n_antennas(&self) -> usize {
        self.h.len()
    }

    /// Replaces the layout and recomputes `h` (LoS); Rayleigh channels ignore positions.
    pub fn set_layout(&mut self, layout: AntennaLayout) -> Result<()> {
        if layout.len() != self.layout.len() {
            return Err(Error::InvalidArgument(
                "layout size cannot change after construction".into(),
            ));
        }
        if self.fading.is_none() {
            self.h = channel_vector(&self.params, &layout)?;
        }
        self.layout = layout;
        Ok(())
    }

    pub fn with_layout(&self, layout: AntennaLayout) -> Result<Self> {
        let mut out = self.clone();
        out.set_layout(layout)?;
        Ok(out)
    }
}

/// `a(x, y)`: unit-modulus steering vector of a layout.
pub fn array_response(
    layout: &AntennaLayout,
    theta: f64,
    phi: f64,
    wavelength: f64,
) -> Result<Vec<C64>> {
    ensure_finite("angles", &[theta, phi, wavelength])?;
    ensure_finite("x coordinates", &layout.x)?;
    ensure_finite("y coordinates", &layout.y)?;
    if !(wavelength > 0.0) {
        return Err(Error::InvalidArgument("wavelength must be positive".into()));
    }
    if layout.is_empty() {
        return Err(Error::InvalidArgument("layout has no elements".into()));
    }
    let k = 2.0 * PI / wavelength;
    let (c, s) = (theta.cos(), phi.sin());
    Ok(layout
        .x
        .iter()
        .zip(&layout.y)
        .map(|(&x, &y)| C64::from_polar(1.0, k * (x * c + y * s)))
        .collect())
}

/// `h = β · a(x, y)`.
pub fn channel_vector(params: &ChannelParams, layout: &AntennaLayout) -> Result<Vec<C64>> {
    ensure_finite("path gain", &[params.beta.re, params.beta.im])?;
    let a = array_response(layout, params.theta, params.phi, params.wavelength)?;
    Ok(a.into_iter().map(|ai| params.beta * ai).collect())
}

/// COST-Hata path loss in dB for a distance in meters.
pub fn cost_hata_pl_db(distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    Ok(139.1 + 35.22 * (distance_m / 1000.0).log10())
}

/// `|q^H h|^2` for a unit-norm receive beamformer.
pub fn effective_gain(q: &[C64], h: &[C64]) -> Result<f64> {
    if q.len() != h.len() {
        return Err(Error::InvalidArgument(format!(
            "beamformer has {} entries, channel has {}",
            q.len(),
            h.len()
        )));
    }
    let qn = norm_sqr(q).sqrt();
    if (qn - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "beamformer must have unit norm, got {qn}"
        )));
    }
    Ok(inner(q, h).norm_sqr())
}

/// Cauchy-Schwarz ceiling `|β|^2 N_T` on the gain of any unit beamformer.
pub fn max_gain_bound(beta: C64, n_antennas: usize) -> f64 {
    beta.norm_sqr() * n_antennas as f64
}

/// Pairwise separation on both axes; equality counts as feasible.
pub fn min_distance_ok(layout: &AntennaLayout) -> bool {
    let n = layout.len();
    // Small relative slack so layouts built by adding v to a coordinate pass.
    let tol = 1e-12 * (1.0 + layout.v_x.abs().max(layout.v_y.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (layout.x[i] - layout.x[j]).abs() + tol < layout.v_x
                || (layout.y[i] - layout.y[j]).abs() + tol < layout.v_y
            {
                return false;
            }
        }
    }
    true
}

/// Geometry and propagation settings for drawing channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub model: ChannelModel,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    pub n_antennas: usize,
    /// Side of the square fluid region, in wavelengths.
    pub region_wavelengths: f64,
    /// Minimum element separation on each axis, in wavelengths.
    pub min_separation_wavelengths: f64,
    pub distance_min_m: f64,
    pub distance_max_m: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            model: ChannelModel::Los,
            wavelength: 0.1,
            n_antennas: 4,
            region_wavelengths: 4.0,
            min_separation_wavelengths: 0.5,
            distance_min_m: 10.0,
            distance_max_m: 100.0,
        }
    }
}

impl ChannelConfig {
    pub fn region(&self) -> Region {
        Region::square(self.region_wavelengths * self.wavelength)
    }

    pub fn min_separation(&self) -> f64 {
        self.min_separation_wavelengths * self.wavelength
    }

    /// The starting layout every user gets before any positioning.
    pub fn initial_layout(&self) -> AntennaLayout {
        let v = self.min_separation();
        let spacing = v.max(0.5 * self.wavelength);
        AntennaLayout::staircase(self.n_antennas, self.region(), v, v, spacing)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) {
            return Err(Error::Config("channel.wavelength must be positive".into()));
        }
        if self.n_antennas == 0 {
            return Err(Error::Config("channel.n_antennas must be at least 1".into()));
        }
        if !(self.distance_min_m > 0.0 && self.distance_max_m >= self.distance_min_m) {
            return Err(Error::Config("channel distance range is invalid".into()));
        }
        if !(self.region_wavelengths > 0.0) || self.min_separation_wavelengths < 0.0 {
            return Err(Error::Config("channel region/separation is invalid".into()));
        }
        let needed = self.min_separation_wavelengths * (self.n_antennas as f64 - 1.0);
        if needed > self.region_wavelengths + 1e-12 {
            return Err(Error::Config(format!(
                "{} antennas at {} wavelength spacing do not fit in a {} wavelength region",
                self.n_antennas, self.min_separation_wavelengths, self.region_wavelengths
            )));
        }
        Ok(())
    }
}

/// Draws static per-user channels: distance `U[d_min, d_max]`, complex Gaussian
/// path gain with `E|β|^2 = 1/PL`, AoAs uniform on `[-π/2, π/2]`.
pub fn sample_channels(
    seed: u64,
    users: usize,
    config: &ChannelConfig,
) -> Result<Vec<ChannelRealization>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = config.initial_layout();
    let mut out = Vec::with_capacity(users);
    for _ in 0..users {
        let d = rng.random_range(config.distance_min_m..=config.distance_max_m);
        let pl = 10f64.powf(cost_hata_pl_db(d)? / 10.0);
        let beta = complex_gaussian(&mut rng, 1.0 / pl);
        let theta = rng.random_range(-PI / 2.0..=PI / 2.0);
        let phi = rng.random_range(-PI / 2.0..=PI / 2.0);
        let params = ChannelParams {
            beta,
            theta,
            phi,
            wavelength: config.wavelength,
        };
        let realization = match config.model {
            ChannelModel::Los => ChannelRealization::los(params, layout.clone(), d)?,
            ChannelModel::Rayleigh => {
                let h = (0..config.n_antennas)
                    .map(|_| complex_gaussian(&mut rng, 1.0 / pl))
                    .collect();
                ChannelRealization::rayleigh(params, layout.clone(), d, h)?
            }
        };
        out.push(realization);
    }
    Ok(out)
}

/// `CN(0, variance)`: real and imaginary parts each carry half the variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(x: Vec<f64>, y: Vec<f64>) -> AntennaLayout {
        AntennaLayout::new(x, y, Region::square(1.0), 0.1, 0.1).unwrap()
    }

    #[test]
    fn single_element_at_origin_has_zero_phase() {
        let a = array_response(&layout(vec![0.0], vec![0.0]), 0.3, -1.1, 0.1).unwrap();
        assert_eq!(a, vec![C64::new(1.0, 0.0)]);
    }

    #[test]
    fn half_wavelength_step_flips_sign() {
        let a = array_response(&layout(vec![0.0, 0.5], vec![0.0, 0.0]), 0.0, 0.0, 1.0).unwrap();
        assert!((a[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((a[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_layout_gives_all_ones() {
        let a = array_response(&layout(vec![0.0; 4], vec![0.0; 4]), 1.0, 0.4, 0.1).unwrap();
        assert!(a.iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let l = layout(vec![0.0], vec![0.0]);
        assert!(array_response(&l, f64::NAN, 0.0, 0.1).is_err());
        assert!(array_response(&l, 0.0, 0.0, 0.0).is_err());
        assert!(array_response(&layout(vec![f64::INFINITY], vec![0.0]), 0.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn channel_vector_scalar_cases() {
        let l = layout(vec![0.0; 3], vec![0.0; 3]);
        let mut p = ChannelParams {
            beta: C64::new(0.0, 2.0),
            theta: 0.2,
            phi: 0.1,
            wavelength: 0.1,
        };
        let h = channel_vector(&p, &l).unwrap();
        assert!(h.iter().all(|v| (v - C64::new(0.0, 2.0)).norm() < 1e-15));
        p.beta = C64::new(0.0, 0.0);
        assert!(channel_vector(&p, &l).unwrap().iter().all(|v| v.norm() == 0.0));
        p.beta = C64::new(1.0, 0.0);
        let l2 = layout(vec![0.1, 0.37], vec![0.2, 0.05]);
        assert_eq!(
            channel_vector(&p, &l2).unwrap(),
            array_response(&l2, 0.2, 0.1, 0.1).unwrap()
        );
    }

    #[test]
    fn cost_hata_values() {
        assert!((cost_hata_pl_db(1000.0).unwrap() - 139.1).abs() < 1e-12);
        assert!((cost_hata_pl_db(100.0).unwrap() - 103.88).abs() < 1e-9);
        assert!((cost_hata_pl_db(10.0).unwrap() - 68.66).abs() < 1e-9);
        assert!(cost_hata_pl_db(0.0).is_err());
        assert!(cost_hata_pl_db(-5.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_handles_zero_users() {
        let cfg = ChannelConfig::default();
        let a = sample_channels(7, 5, &cfg).unwrap();
        let b = sample_channels(7, 5, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(sample_channels(7, 0, &cfg).unwrap().is_empty());
        for ch in &a {
            assert!((10.0..=100.0).contains(&ch.distance_m));
            assert!(ch.layout().is_feasible());
        }
    }

    #[test]
    fn effective_gain_cases() {
        let h = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.3)];
        let hn = norm_sqr(&h).sqrt();
        let q: Vec<C64> = h.iter().map(|v| v / hn).collect();
        assert!((effective_gain(&q, &h).unwrap() - norm_sqr(&h)).abs() < 1e-12);
        let perp = vec![-h[1].conj() / hn, h[0].conj() / hn];
        assert!(effective_gain(&perp, &h).unwrap() < 1e-24);
        assert!(effective_gain(&q[..1], &h).is_err());
        let not_unit = vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        assert!(effective_gain(&not_unit, &h).is_err());
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(max_gain_bound(C64::new(0.0, 2.0), 4), 16.0);
    }

    #[test]
    fn min_distance_cases() {
        let r = Region::square(1.0);
        let one = AntennaLayout::new(vec![0.3], vec![0.3], r, 0.2, 0.2).unwrap();
        assert!(min_distance_ok(&one));
        let close = AntennaLayout::new(vec![0.0, 0.1], vec![0.0, 0.5], r, 0.2, 0.2).unwrap();
        assert!(!min_distance_ok(&close));
        let edge = AntennaLayout::new(vec![0.0, 0.2], vec![0.0, 0.2], r, 0.2, 0.2).unwrap();
        assert!(min_distance_ok(&edge));
    }

    #[test]
    fn rayleigh_ignores_positions() {
        let cfg = ChannelConfig {
            model: ChannelModel::Rayleigh,
            ..Default::default()
        };
        let mut ch = sample_channels(3, 1, &cfg).unwrap().remove(0);
        let before = ch.h().to_vec();
        let mut l = ch.layout().clone();
        l.x[0] += 0.01;
        ch.set_layout(l).unwrap();
        assert_eq!(ch.h(), &before[..]);
    }
}
