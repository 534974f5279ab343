//! Equiprobable price scenario sets: the day-ahead noise set and the
//! real-time up×down cross-product fan.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Da,
    RtUp,
    RtDown,
    RtJoint,
}

/// An equiprobable scenario set. For `RtJoint` the rows pair an upward
/// price series (`scenarios`) with a downward series (`down`); the series
/// are indexed from `t0` (row index 0 = ISP `t0`).
#[derive(Debug, Clone)]
pub struct PriceScenarioSet {
    pub kind: ScenarioKind,
    pub probabilities: Vec<f64>,
    /// DA/upward prices, one row per scenario.
    pub scenarios: Vec<Vec<f64>>,
    /// Downward prices, rows parallel to `scenarios` (RtJoint only).
    pub down: Vec<Vec<f64>>,
    /// Global ISP index of row position 0.
    pub t0: usize,
}

impl PriceScenarioSet {
    pub fn n(&self) -> usize {
        self.scenarios.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || self.probabilities.len() != n {
            return Err(SimError::Validation("scenario/probability mismatch".into()));
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(SimError::Validation(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Multiplicative-Gaussian DA scenarios around the base series:
/// `row_s[t] = base[t] * (1 + eps)`, `eps ~ N(0, sigma_rel)`.
pub fn da_scenarios(
    base: &[f64],
    n: usize,
    noise_sigma_rel: f64,
    seed: u64,
) -> Result<PriceScenarioSet> {
    if n == 0 {
        return Err(SimError::Validation("need at least one DA scenario".into()));
    }
    if noise_sigma_rel < 0.0 {
        return Err(SimError::Validation("noise_sigma_rel must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, noise_sigma_rel.max(f64::MIN_POSITIVE))
        .map_err(|e| SimError::Validation(e.to_string()))?;
    let scenarios: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            base.iter()
                .map(|&v| {
                    let eps = if noise_sigma_rel == 0.0 {
                        0.0
                    } else {
                        dist.sample(&mut rng)
                    };
                    v * (1.0 + eps)
                })
                .collect()
        })
        .collect();
    let set = PriceScenarioSet {
        kind: ScenarioKind::Da,
        probabilities: vec![1.0 / n as f64; n],
        scenarios,
        down: Vec::new(),
        t0: 0,
    };
    set.validate()?;
    Ok(set)
}

/// Real-time fan at decision step `t0`: the cross product of `n_up`
/// upward-noise draws and `n_down` downward-noise draws over
/// `[t0, horizon)`. Every row carries the actual prices at `t0` itself;
/// later steps get multiplicative Gaussian noise with `sigma_rel`.
///
/// The RNG stream is derived from `(seed, t0)` so parallel rolling-horizon
/// steps reproduce independently of execution order.
pub fn rt_fan(
    actual_up: &[f64],
    actual_down: &[f64],
    t0: usize,
    n_up: usize,
    n_down: usize,
    sigma_rel: f64,
    seed: u64,
) -> Result<PriceScenarioSet> {
    let horizon = actual_up.len();
    if actual_down.len() != horizon {
        return Err(SimError::Validation("up/down series length mismatch".into()));
    }
    if t0 >= horizon {
        return Err(SimError::Validation(format!(
            "t0 {t0} out of range (horizon {horizon})"
        )));
    }
    if n_up == 0 || n_down == 0 {
        return Err(SimError::Validation("fan counts must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t0 as u64 + 1);
    let dist = Normal::new(0.0, sigma_rel.max(f64::MIN_POSITIVE))
        .map_err(|e| SimError::Validation(e.to_string()))?;
    let mut noisy = |actual: &[f64], count: usize| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                actual[t0..]
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        if i == 0 || sigma_rel == 0.0 {
                            v
                        } else {
                            v * (1.0 + dist.sample(&mut rng))
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let up_draws = noisy(actual_up, n_up);
    let down_draws = noisy(actual_down, n_down);

    let n = n_up * n_down;
    let mut scenarios = Vec::with_capacity(n);
    let mut down = Vec::with_capacity(n);
    for u in &up_draws {
        for d in &down_draws {
            scenarios.push(u.clone());
            down.push(d.clone());
        }
    }
    let set = PriceScenarioSet {
        kind: ScenarioKind::RtJoint,
        probabilities: vec![1.0 / n as f64; n],
        scenarios,
        down,
        t0,
    };
    set.validate()?;
    Ok(set)
}

/// Optional scenario dump: one row per (scenario, isp).
pub fn dump_scenarios(set: &PriceScenarioSet, path: &std::path::Path) -> Result<()> {
    let mut out = String::from("scenario,isp,price,price_down\n");
    for (s, row) in set.scenarios.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            let down = set.down.get(s).map(|d| d[i]);
            match down {
                Some(d) => out.push_str(&format!("{},{},{},{}\n", s, set.t0 + i, v, d)),
                None => out.push_str(&format!("{},{},{},\n", s, set.t0 + i, v)),
            }
        }
    }
    std::fs::write(path, out).map_err(|e| SimError::io(path, e))
}
