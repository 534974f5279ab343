//! Connection-point transport model: line loading per region, overload
//! detection, and the DSO's 2-ISP-ahead congestion flags.

use crate::error::{Result, SimError};
use crate::market::{RegState, DT_H};

/// How many ISPs ahead the DSO announces congestion.
pub const FLAG_LEAD_ISPS: usize = 2;

/// One region: a single aggregate connection line with exogenous
/// baseload/PV profiles and a set of attached BRP groups.
#[derive(Debug, Clone)]
pub struct Region {
    pub id: String,
    pub line_rating_mw: f64,
    /// MW per ISP, consumption-positive.
    pub baseload_mw: Vec<f64>,
    /// MW per ISP, generation-positive.
    pub pv_mw: Vec<f64>,
    /// Indices of the BRP groups connected in this region.
    pub groups: Vec<usize>,
}

impl Region {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.line_rating_mw <= 0.0 {
            return Err(SimError::Validation(format!(
                "region {}: line rating must be positive",
                self.id
            )));
        }
        if self.baseload_mw.len() != horizon || self.pv_mw.len() != horizon {
            return Err(SimError::Validation(format!(
                "region {}: profile length does not match horizon {horizon}",
                self.id
            )));
        }
        Ok(())
    }
}

/// Per-ISP congestion flags for one region. The flag for ISP `t` is
/// produced by the forecast made at `t - FLAG_LEAD_ISPS`; the first two
/// ISPs of a horizon can never be flagged.
#[derive(Debug, Clone)]
pub struct CongestionFlags {
    pub flags: Vec<bool>,
}

/// What the DSO knows about one BRP group when projecting flows:
/// the schedule and the headroom around it.
#[derive(Debug, Clone)]
pub struct GroupSchedule {
    /// kWh bought day-ahead per ISP.
    pub e_da: Vec<f64>,
    /// Scheduled VB energy per ISP induced by `e_da` (kWh).
    pub e_planned: Vec<f64>,
    /// Power-bound energy per ISP (p_charge_max * dt, kWh).
    pub cap_kwh: Vec<f64>,
    pub e_upper: Vec<f64>,
    pub e_lower: Vec<f64>,
}

/// Signed line flow in MW: baseload minus PV plus BRP consumption.
/// Negative = reverse flow toward the transmission network.
pub fn connection_flow(region: &Region, t: usize, brp_kwh: &[f64]) -> f64 {
    let brp_mw: f64 = region
        .groups
        .iter()
        .map(|&g| brp_kwh[g] / DT_H / 1000.0)
        .sum();
    region.baseload_mw[t] - region.pv_mw[t] + brp_mw
}

/// Loading fraction; overload iff strictly above 1.0.
pub fn loading(flow_mw: f64, rating_mw: f64) -> f64 {
    flow_mw.abs() / rating_mw
}

pub fn is_overload(loading: f64) -> bool {
    loading > 1.0
}

/// Profitable deviation direction implied by the current imbalance price
/// relative to day-ahead: positive = consume more (shortage), negative =
/// consume less (surplus), zero = no incentive.
fn incentive_direction(
    state: RegState,
    lambda_up: f64,
    lambda_down: f64,
    lambda_da: f64,
) -> f64 {
    let applied = match state {
        RegState::Short => lambda_up,
        RegState::Long => lambda_down,
        RegState::Balanced | RegState::Both => (lambda_up + lambda_down) / 2.0,
    };
    if applied < lambda_da {
        1.0
    } else if applied > lambda_da {
        -1.0
    } else {
        0.0
    }
}

/// Project the line loading for ISPs `t+1` and `t+2` using only
/// information available at `t`: exogenous forecasts, the e-programs,
/// and (if `worst_case`) the envelope-feasible full-power deviation in
/// the direction the current prices incentivize.
///
/// Returns `(isp, flagged)` pairs; truncated at the horizon.
#[allow(clippy::too_many_arguments)]
pub fn dso_congestion_forecast(
    region: &Region,
    t: usize,
    schedules: &[GroupSchedule],
    state: RegState,
    lambda_up: f64,
    lambda_down: f64,
    lambda_da: f64,
    worst_case: bool,
    threshold: f64,
) -> Vec<(usize, bool)> {
    let horizon = region.baseload_mw.len();
    let direction = if worst_case {
        incentive_direction(state, lambda_up, lambda_down, lambda_da)
    } else {
        0.0
    };
    let mut out = Vec::new();
    for tau in t + 1..=t + FLAG_LEAD_ISPS {
        if tau >= horizon {
            break;
        }
        let mut kwh = vec![0.0; schedules.len()];
        for &g in &region.groups {
            let s = &schedules[g];
            let mut e = s.e_da[tau];
            if direction > 0.0 {
                // Consume more: power headroom capped by the upper envelope.
                let headroom = (s.cap_kwh[tau] - s.e_da[tau])
                    .min(s.e_upper[tau] - s.e_planned[tau])
                    .max(0.0);
                e += headroom;
            } else if direction < 0.0 {
                // Consume less: schedule capped by the lower envelope.
                let headroom = s.e_da[tau].min(s.e_planned[tau] - s.e_lower[tau]).max(0.0);
                e -= headroom;
            }
            kwh[g] = e;
        }
        let flow = connection_flow(region, tau, &kwh);
        out.push((tau, loading(flow, region.line_rating_mw) > threshold));
    }
    out
}
