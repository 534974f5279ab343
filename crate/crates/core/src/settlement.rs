//! Ex-post imbalance settlement per ISP: single, two-price and dual-price
//! mechanisms, the Dutch mid-price simplification, and the
//! congestion-dependent mechanism selection.
//!
//! Sign conventions: `dev` is in kWh with surplus (consumed less than the
//! e-program) positive and shortage negative. Cashflow is in €, positive
//! when the BRP receives money: `cash = price * dev / 1000`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::market::RegState;

/// Imbalance pricing mechanism id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Single,
    TwoPrice,
    DualPrice,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mechanism::Single => "single",
            Mechanism::TwoPrice => "two_price",
            Mechanism::DualPrice => "dual_price",
        };
        write!(f, "{s}")
    }
}

/// Single-price variant: the simplified Dutch rule (mid-price in states 0
/// and 2) or the full rule (dual-price in state 2, mid-price guards).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingleVariant {
    #[default]
    NlSimplified,
    NlFull,
}

/// One settled ISP.
#[derive(Debug, Clone, PartialEq)]
pub struct SettlementRecord {
    pub isp: usize,
    pub mechanism: Mechanism,
    pub reg_state: RegState,
    /// kWh, surplus positive.
    pub dev: f64,
    /// €/MWh actually applied to `dev` (volume-weighted if the two sides
    /// of a state-2 dual settlement differ).
    pub applied_price: f64,
    /// €, positive = BRP receives.
    pub cashflow: f64,
}

fn record(
    isp: usize,
    mechanism: Mechanism,
    state: RegState,
    dev: f64,
    price: f64,
) -> SettlementRecord {
    SettlementRecord {
        isp,
        mechanism,
        reg_state: state,
        dev,
        applied_price: price,
        cashflow: price * dev / 1000.0,
    }
}

/// Single-price settlement: one price for the whole deviation, chosen by
/// the regulation state.
pub fn settle_single(
    isp: usize,
    dev: f64,
    state: RegState,
    lambda_up: f64,
    lambda_down: f64,
    variant: SingleVariant,
) -> Result<SettlementRecord> {
    let mid = (lambda_up + lambda_down) / 2.0;
    let price = match state {
        RegState::Short => lambda_up,
        RegState::Long => lambda_down,
        RegState::Balanced => mid,
        RegState::Both => match variant {
            SingleVariant::NlSimplified => mid,
            // Full Dutch rule: dual-price in state 2.
            SingleVariant::NlFull => {
                return Ok(SettlementRecord {
                    mechanism: Mechanism::Single,
                    ..settle_dual(isp, dev, lambda_up, lambda_down)
                })
            }
        },
    };
    let price = match variant {
        SingleVariant::NlSimplified => price,
        // Mid-price guards: upward price below mid, or downward above mid.
        SingleVariant::NlFull => match state {
            RegState::Short if lambda_up < mid => mid,
            RegState::Long if lambda_down > mid => mid,
            _ => price,
        },
    };
    Ok(record(isp, Mechanism::Single, state, dev, price))
}

/// Two-price settlement: the side aligned with the system direction gets
/// the regulation price, the counter-system side gets the DA price.
pub fn settle_two_price(
    isp: usize,
    dev: f64,
    state: RegState,
    lambda_up: f64,
    lambda_down: f64,
    lambda_da: f64,
) -> Result<SettlementRecord> {
    let price = match state {
        // System short: shortage at lambda_up, surplus at lambda_da.
        RegState::Short => {
            if dev < 0.0 {
                lambda_up
            } else {
                lambda_da
            }
        }
        // System long: surplus at lambda_down, shortage at lambda_da.
        RegState::Long => {
            if dev > 0.0 {
                lambda_down
            } else {
                lambda_da
            }
        }
        RegState::Balanced | RegState::Both => (lambda_up + lambda_down) / 2.0,
    };
    Ok(record(isp, Mechanism::TwoPrice, state, dev, price))
}

/// Dual-price settlement: shortages always at lambda_up, surpluses always
/// at lambda_down, regardless of the regulation state.
pub fn settle_dual(isp: usize, dev: f64, lambda_up: f64, lambda_down: f64) -> SettlementRecord {
    let price = if dev > 0.0 { lambda_down } else { lambda_up };
    let mut rec = record(isp, Mechanism::DualPrice, RegState::Both, dev, price);
    // Caller overwrites reg_state; dual settlement itself is state-free.
    rec.reg_state = RegState::Balanced;
    rec
}

/// Apply one mechanism at realized prices/state.
pub fn settle(
    mechanism: Mechanism,
    isp: usize,
    dev: f64,
    state: RegState,
    lambda_up: f64,
    lambda_down: f64,
    lambda_da: f64,
) -> Result<SettlementRecord> {
    let mut rec = match mechanism {
        Mechanism::Single => settle_single(
            isp,
            dev,
            state,
            lambda_up,
            lambda_down,
            SingleVariant::NlSimplified,
        )?,
        Mechanism::TwoPrice => settle_two_price(isp, dev, state, lambda_up, lambda_down, lambda_da)?,
        Mechanism::DualPrice => settle_dual(isp, dev, lambda_up, lambda_down),
    };
    rec.reg_state = state;
    Ok(rec)
}

/// Congestion-dependent mechanism selection: congested regions get the
/// configured alternative, everything else stays on single price.
pub fn select_mechanism(region_congested: bool, alt: Mechanism) -> Result<Mechanism> {
    if alt == Mechanism::Single {
        return Err(SimError::Validation(
            "alt mechanism must be two_price or dual_price".to_string(),
        ));
    }
    Ok(if region_congested { alt } else { Mechanism::Single })
}

/// One ledger row of the settlement file.
pub fn ledger_header() -> &'static str {
    "isp,brp_id,mechanism,state,dev_kwh,price_eur_mwh,cash_eur"
}

pub fn ledger_row(brp_id: &str, rec: &SettlementRecord) -> String {
    format!(
        "{},{},{},{},{:.6},{:.6},{:.8}",
        rec.isp, brp_id, rec.mechanism, rec.reg_state, rec.dev, rec.applied_price, rec.cashflow
    )
}
