//! Per-ISP market data: day-ahead price, imbalance prices and regulation
//! state, plus a synthetic stress-series generator.
//!
//! Prices are always €/MWh, energies kWh; cashflow arithmetic divides by
//! 1000 at the point of settlement.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SimError};

/// ISPs per day (15-minute periods).
pub const ISPS_PER_DAY: usize = 96;
/// Duration of one ISP in hours.
pub const DT_H: f64 = 0.25;

/// System regulation state for one ISP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegState {
    /// System long (surplus), -1.
    Long,
    /// Balanced, 0.
    Balanced,
    /// System short (deficit), +1.
    Short,
    /// Both directions activated, 2.
    Both,
}

impl RegState {
    pub fn from_i8(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(RegState::Long),
            0 => Ok(RegState::Balanced),
            1 => Ok(RegState::Short),
            2 => Ok(RegState::Both),
            other => Err(SimError::Validation(format!(
                "regulation state {other} outside {{-1,0,1,2}}"
            ))),
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            RegState::Long => -1,
            RegState::Balanced => 0,
            RegState::Short => 1,
            RegState::Both => 2,
        }
    }
}

impl fmt::Display for RegState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

/// Validated per-ISP market series. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MarketSeries {
    lambda_da: Vec<f64>,
    lambda_up: Vec<f64>,
    lambda_down: Vec<f64>,
    reg_state: Vec<RegState>,
}

impl MarketSeries {
    /// Build a series, enforcing the type invariants:
    /// equal lengths, a multiple of 96, and DA price constant per hour.
    pub fn new(
        lambda_da: Vec<f64>,
        lambda_up: Vec<f64>,
        lambda_down: Vec<f64>,
        reg_state: Vec<RegState>,
    ) -> Result<Self> {
        let n = lambda_da.len();
        if lambda_up.len() != n || lambda_down.len() != n || reg_state.len() != n {
            return Err(SimError::Validation(format!(
                "series length mismatch: da={} up={} down={} state={}",
                n,
                lambda_up.len(),
                lambda_down.len(),
                reg_state.len()
            )));
        }
        if n == 0 || n % ISPS_PER_DAY != 0 {
            return Err(SimError::Validation(format!(
                "series length {n} is not a positive multiple of {ISPS_PER_DAY}"
            )));
        }
        for block in lambda_da.chunks(4) {
            if block.iter().any(|&v| v != block[0]) {
                return Err(SimError::Validation(
                    "lambda_da not constant within an hour block".to_string(),
                ));
            }
        }
        for series in [&lambda_da, &lambda_up, &lambda_down] {
            if series.iter().any(|v| !v.is_finite()) {
                return Err(SimError::Validation("non-finite price in series".to_string()));
            }
        }
        Ok(Self {
            lambda_da,
            lambda_up,
            lambda_down,
            reg_state,
        })
    }

    pub fn len(&self) -> usize {
        self.lambda_da.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_da.is_empty()
    }

    pub fn days(&self) -> usize {
        self.len() / ISPS_PER_DAY
    }

    pub fn lambda_da(&self) -> &[f64] {
        &self.lambda_da
    }

    pub fn lambda_up(&self) -> &[f64] {
        &self.lambda_up
    }

    pub fn lambda_down(&self) -> &[f64] {
        &self.lambda_down
    }

    pub fn reg_state(&self) -> &[RegState] {
        &self.reg_state
    }

    /// Mid-price (arithmetic mean of up/down regulation price) at an ISP.
    pub fn mid_price(&self, t: usize) -> f64 {
        (self.lambda_up[t] + self.lambda_down[t]) / 2.0
    }
}

const HEADER: &str = "isp,lambda_da,lambda_up,lambda_down,reg_state";

/// Load a market file: `isp,lambda_da,lambda_up,lambda_down,reg_state`,
/// one row per ISP in order.
pub fn load_market_data(path: &Path) -> Result<MarketSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    parse_market_data(&text, path)
}

fn parse_market_data(text: &str, path: &Path) -> Result<MarketSeries> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some((_, h)) => {
            return Err(SimError::parse(
                path,
                1,
                format!("bad header {h:?}, expected {HEADER:?}"),
            ))
        }
        None => return Err(SimError::parse(path, 1, "empty file")),
    }

    let mut lambda_da = Vec::new();
    let mut lambda_up = Vec::new();
    let mut lambda_down = Vec::new();
    let mut reg_state = Vec::new();

    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(SimError::parse(
                path,
                lineno,
                format!("expected 5 fields, got {}", fields.len()),
            ));
        }
        let isp: usize = fields[0]
            .trim()
            .parse()
            .map_err(|e| SimError::parse(path, lineno, format!("bad isp index: {e}")))?;
        if isp != lambda_da.len() {
            return Err(SimError::parse(
                path,
                lineno,
                format!("isp index {isp} out of order, expected {}", lambda_da.len()),
            ));
        }
        let mut prices = [0.0; 3];
        for (slot, field) in prices.iter_mut().zip(&fields[1..4]) {
            *slot = field
                .trim()
                .parse()
                .map_err(|e| SimError::parse(path, lineno, format!("bad price {field:?}: {e}")))?;
        }
        let state_raw: i8 = fields[4]
            .trim()
            .parse()
            .map_err(|e| SimError::parse(path, lineno, format!("bad reg_state: {e}")))?;
        let state = RegState::from_i8(state_raw).map_err(|_| {
            SimError::Validation(format!(
                "{}:{lineno}: reg_state {state_raw} outside {{-1,0,1,2}}",
                path.display()
            ))
        })?;

        lambda_da.push(prices[0]);
        lambda_up.push(prices[1]);
        lambda_down.push(prices[2]);
        reg_state.push(state);
    }

    MarketSeries::new(lambda_da, lambda_up, lambda_down, reg_state)
}

/// Write a series in the same wire format `load_market_data` reads.
pub fn write_market_data(series: &MarketSeries, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(series.len() * 32);
    out.push_str(HEADER);
    out.push('\n');
    for t in 0..series.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            t,
            series.lambda_da[t],
            series.lambda_up[t],
            series.lambda_down[t],
            series.reg_state[t]
        ));
    }
    std::fs::write(path, out).map_err(|e| SimError::io(path, e))
}

/// One configured price spike in a stress series.
#[derive(Debug, Clone)]
pub struct SpikeSpec {
    pub isps: Vec<usize>,
    pub lambda_down: f64,
    pub state: RegState,
}

/// Synthesize a smooth baseline series plus configured spikes.
/// Deterministic for a given seed.
///
/// The baseline keeps regulation state 0 everywhere, DA prices on a daily
/// sinus around 80 €/MWh (constant per hour), and up/down prices bracketing
/// the DA price with mild noise.
pub fn synthesize_stress_series(days: usize, spikes: &[SpikeSpec], seed: u64) -> Result<MarketSeries> {
    if days == 0 {
        return Err(SimError::Validation("days must be >= 1".to_string()));
    }
    let n = days * ISPS_PER_DAY;
    for spike in spikes {
        if let Some(&bad) = spike.isps.iter().find(|&&t| t >= n) {
            return Err(SimError::Validation(format!(
                "spike isp {bad} out of range (horizon {n})"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 5.0).expect("valid stddev");

    let mut lambda_da = Vec::with_capacity(n);
    let mut lambda_up = Vec::with_capacity(n);
    let mut lambda_down = Vec::with_capacity(n);
    let mut reg_state = vec![RegState::Balanced; n];

    for hour in 0..days * 24 {
        let tod = (hour % 24) as f64;
        // Morning/evening humps, cheap at night.
        let base = 80.0 + 30.0 * (std::f64::consts::TAU * (tod - 8.0) / 24.0).sin();
        let da = (base * 100.0).round() / 100.0;
        for _ in 0..4 {
            lambda_da.push(da);
        }
    }
    for t in 0..n {
        let eps_up: f64 = noise.sample(&mut rng);
        let eps_dn: f64 = noise.sample(&mut rng);
        lambda_up.push(((lambda_da[t] + 15.0 + eps_up.abs()) * 100.0).round() / 100.0);
        lambda_down.push(((lambda_da[t] - 15.0 - eps_dn.abs()) * 100.0).round() / 100.0);
    }

    for spike in spikes {
        for &t in &spike.isps {
            lambda_down[t] = spike.lambda_down;
            reg_state[t] = spike.state;
            if spike.state == RegState::Short {
                // Symmetric treatment when a spike is declared on the short
                // side: move the upward price instead.
                lambda_up[t] = -spike.lambda_down;
            }
        }
    }

    MarketSeries::new(lambda_da, lambda_up, lambda_down, reg_state)
}
