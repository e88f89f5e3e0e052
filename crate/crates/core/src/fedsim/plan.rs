//! Per-round resource plans: which users transmit, the receive beamformer and
//! the antenna layouts, as chosen by each compared scheme.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{aps_positions, beamformer_for, greedy_selection, random_fa_positions, select_all, QRule};
use crate::channel::{effective_gain, ChannelRealization};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::objective::{comm_penalty, SelectionVector};
use crate::pdd::{self, PddConfig, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Joint selection, beamforming and positioning by the PDD solver.
    PddFa,
    /// Every user, fixed antennas, principal-eigenvector beamformer.
    SelectAll,
    /// Greedy selection with the matched-filter beamformer, fixed antennas.
    Mrt,
    /// Random feasible antenna positions, then greedy selection.
    Rfa,
    /// Grid-searched antenna positions, then greedy selection.
    Aps,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::PddFa, Method::SelectAll, Method::Mrt, Method::Rfa, Method::Aps];

    pub fn name(self) -> &'static str {
        match self {
            Method::PddFa => "pdd_fa",
            Method::SelectAll => "select_all",
            Method::Mrt => "mrt",
            Method::Rfa => "rfa",
            Method::Aps => "aps",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings the baselines need beyond the shared channel and power values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Grid pitch of the position search, in wavelengths.
    pub aps_grid_wavelengths: f64,
    /// Sweeps over the elements in the position search.
    pub aps_rounds: usize,
    pub rfa_redraw: crate::baselines::RfaRedraw,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { aps_grid_wavelengths: 0.25, aps_rounds: 3, rfa_redraw: Default::default() }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.aps_grid_wavelengths > 0.0) {
            return Err(Error::Config("baselines.aps_grid_wavelengths must be positive".into()));
        }
        Ok(())
    }
}

/// What one round transmits with.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundPlan {
    pub selection: SelectionVector,
    pub q: Vec<C64>,
    /// Every user's channel under the planned layout.
    pub channels: Vec<ChannelRealization>,
    pub r_value: f64,
    /// Largest `|q^H h_u|²` over the selected users.
    pub max_gain: f64,
    /// Solver iterations, empty for the baselines.
    pub trace: Vec<TraceRecord>,
}

impl RoundPlan {
    pub fn new(selection: SelectionVector, q: Vec<C64>, channels: Vec<ChannelRealization>, sigma_n2: f64, p_a: f64) -> Result<Self> {
        let h: Vec<&[C64]> = channels.iter().map(|c| c.h()).collect();
        let r_value = comm_penalty(&selection, &q, &h, sigma_n2, p_a)?;
        let mut max_gain = 0.0f64;
        for u in selection.selected() {
            max_gain = max_gain.max(effective_gain(&q, h[u])?);
        }
        Ok(RoundPlan { selection, q, channels, r_value, max_gain, trace: Vec::new() })
    }
}

/// Everything a planner reads.
#[derive(Debug, Clone, Copy)]
pub struct PlanInputs<'a> {
    pub channels: &'a [ChannelRealization],
    pub samples: &'a [f64],
    pub sigma_n2: f64,
    pub p_a: f64,
    pub pdd: &'a PddConfig,
    pub baselines: &'a BaselineConfig,
}

fn greedy_plan(channels: Vec<ChannelRealization>, rule: QRule, inp: &PlanInputs) -> Result<RoundPlan> {
    let h: Vec<&[C64]> = channels.iter().map(|c| c.h()).collect();
    let choice = greedy_selection(&h, inp.samples, rule, inp.sigma_n2, inp.p_a)?;
    RoundPlan::new(choice.selection, choice.q, channels, inp.sigma_n2, inp.p_a)
}

/// Plans one round. Only [`Method::Rfa`] draws from `rng`.
pub fn plan_round<R: Rng + ?Sized>(method: Method, inp: &PlanInputs, rng: &mut R) -> Result<RoundPlan> {
    if inp.channels.is_empty() || inp.samples.len() != inp.channels.len() {
        return Err(Error::InvalidArgument("one sample count per user required".into()));
    }
    match method {
        Method::SelectAll => {
            let h: Vec<&[C64]> = inp.channels.iter().map(|c| c.h()).collect();
            let mask = vec![true; h.len()];
            let q = beamformer_for(QRule::Eig, &h, &mask)?;
            RoundPlan::new(select_all(inp.samples), q, inp.channels.to_vec(), inp.sigma_n2, inp.p_a)
        }
        Method::Mrt => greedy_plan(inp.channels.to_vec(), QRule::MrtSum, inp),
        Method::Rfa => {
            let moved = inp
                .channels
                .iter()
                .map(|c| {
                    let l = c.layout();
                    let layout = random_fa_positions(l.region, l.len(), l.v_x, l.v_y, rng)?;
                    c.with_layout(layout)
                })
                .collect::<Result<Vec<_>>>()?;
            greedy_plan(moved, QRule::Eig, inp)
        }
        Method::Aps => {
            let h: Vec<&[C64]> = inp.channels.iter().map(|c| c.h()).collect();
            let q0 = beamformer_for(QRule::Eig, &h, &vec![true; h.len()])?;
            let step = inp.baselines.aps_grid_wavelengths * inp.channels[0].params.wavelength;
            let moved = inp
                .channels
                .iter()
                .map(|c| c.with_layout(aps_positions(c, &q0, step, inp.baselines.aps_rounds)?.layout))
                .collect::<Result<Vec<_>>>()?;
            greedy_plan(moved, QRule::Eig, inp)
        }
        Method::PddFa => {
            let sol = pdd::solve(inp.pdd, inp.channels, inp.samples, inp.sigma_n2, inp.p_a)?;
            let channels = sol.channels(inp.channels)?;
            let mut plan = RoundPlan::new(sol.selection, sol.q, channels, inp.sigma_n2, inp.p_a)?;
            plan.trace = sol.trace;
            Ok(plan)
        }
    }
}

/// Whether a method's plan depends on nothing but the (static) channels.
pub fn is_deterministic(method: Method, baselines: &BaselineConfig) -> bool {
    !(method == Method::Rfa && baselines.rfa_redraw == crate::baselines::RfaRedraw::PerRound)
}
