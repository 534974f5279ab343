//! Synthetic EV sessions and virtual-battery envelopes.
//!
//! A virtual battery aggregates one group of EVs into an energy envelope:
//! the upper path is the sum of per-EV ASAP (charge as soon as possible)
//! paths, the lower path the sum of ALAP (as late as possible) paths, with
//! arrival energy added and departure energy removed at the session
//! boundaries.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::MobilityParams;
use crate::error::{Result, SimError};
use crate::market::{DT_H, ISPS_PER_DAY};

/// One vehicle's plug-in interval, energy need and ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvSession {
    pub arrival_isp: usize,
    pub departure_isp: usize,
    /// kWh, 50 or 75.
    pub capacity: f64,
    /// kW, 3.7 (paired with 50 kWh) or 11 (paired with 75 kWh).
    pub p_max: f64,
    /// kWh at arrival.
    pub soc_init: f64,
    /// kWh required at departure.
    pub e_target: f64,
    /// kWh consumed while away.
    pub e_trip: f64,
}

impl EvSession {
    pub fn validate(&self, eta: f64) -> Result<()> {
        if self.arrival_isp >= self.departure_isp {
            return Err(SimError::Validation(format!(
                "session arrival {} not before departure {}",
                self.arrival_isp, self.departure_isp
            )));
        }
        if !(0.0 <= self.soc_init && self.soc_init <= self.e_target && self.e_target <= self.capacity)
        {
            return Err(SimError::Validation(format!(
                "session energies out of order: 0 <= {} <= {} <= {}",
                self.soc_init, self.e_target, self.capacity
            )));
        }
        let window = (self.departure_isp - self.arrival_isp) as f64;
        if (self.e_target - self.soc_init) / eta > self.p_max * DT_H * window + 1e-9 {
            return Err(SimError::Validation(format!(
                "session infeasible: needs {} kWh in {} ISPs at {} kW",
                self.e_target - self.soc_init,
                window,
                self.p_max
            )));
        }
        let pair_ok = (self.capacity == 50.0 && self.p_max == 3.7)
            || (self.capacity == 75.0 && self.p_max == 11.0);
        if !pair_ok {
            return Err(SimError::Validation(format!(
                "capacity {} kWh not paired with rate {} kW",
                self.capacity, self.p_max
            )));
        }
        Ok(())
    }

    /// Truncate the session at `horizon`, lowering the target to the
    /// original ALAP path's value there: charging the EV could have
    /// postponed past the horizon is dropped, so truncation never creates
    /// artificial urgency. Sessions entirely outside the horizon are
    /// dropped (None).
    pub fn clamped(&self, horizon: usize, eta: f64) -> Option<EvSession> {
        if self.arrival_isp >= horizon {
            return None;
        }
        if self.departure_isp <= horizon {
            return Some(self.clone());
        }
        let beyond = (self.departure_isp - horizon) as f64;
        let alap_at_horizon =
            (self.e_target - eta * self.p_max * DT_H * beyond).max(self.soc_init);
        let mut s = self.clone();
        s.departure_isp = horizon;
        s.e_target = alap_at_horizon;
        Some(s)
    }
}

/// Cumulative stored energy per ISP over a session window; entry `i` is
/// the energy at the end of ISP `arrival + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPath(pub Vec<f64>);

/// Charge at full rate from arrival until the target is reached.
pub fn asap_path(s: &EvSession, eta: f64) -> EnergyPath {
    let step = eta * s.p_max * DT_H;
    let len = s.departure_isp - s.arrival_isp;
    let mut values = Vec::with_capacity(len);
    let mut cur = s.soc_init;
    for _ in 0..len {
        cur = (cur + step).min(s.e_target);
        values.push(cur);
    }
    EnergyPath(values)
}

/// Stay flat at the arrival SOC, then charge at full rate ending exactly
/// at departure with the target energy.
pub fn alap_path(s: &EvSession, eta: f64) -> EnergyPath {
    let step = eta * s.p_max * DT_H;
    let len = s.departure_isp - s.arrival_isp;
    let mut values = vec![0.0; len];
    let mut cur = s.e_target;
    for i in (0..len).rev() {
        values[i] = cur;
        cur = (cur - step).max(s.soc_init);
    }
    EnergyPath(values)
}

/// Aggregated energy envelope of one EV group.
#[derive(Debug, Clone)]
pub struct VirtualBattery {
    /// kWh upper envelope per ISP (sum of ASAP paths of parked EVs).
    pub e_upper: Vec<f64>,
    /// kWh lower envelope per ISP (sum of ALAP paths of parked EVs).
    pub e_lower: Vec<f64>,
    /// kW maximum aggregate charging power per ISP.
    pub p_charge_max: Vec<f64>,
    /// kWh entering with arriving EVs per ISP.
    pub e_arr: Vec<f64>,
    /// kWh leaving with departing EVs per ISP.
    pub e_dep: Vec<f64>,
    pub n_parked: Vec<usize>,
    /// kWh in the battery before the first ISP.
    pub e_init: f64,
}

impl VirtualBattery {
    pub fn horizon(&self) -> usize {
        self.e_upper.len()
    }

    /// Maximum energy a feasible trajectory can add during ISP t.
    pub fn max_charge_kwh(&self, t: usize) -> f64 {
        self.p_charge_max[t] * DT_H
    }
}

/// Sum per-EV paths into the group envelope.
pub fn build_virtual_battery(
    sessions: &[EvSession],
    horizon: usize,
    eta: f64,
) -> Result<VirtualBattery> {
    let mut vb = VirtualBattery {
        e_upper: vec![0.0; horizon],
        e_lower: vec![0.0; horizon],
        p_charge_max: vec![0.0; horizon],
        e_arr: vec![0.0; horizon],
        e_dep: vec![0.0; horizon],
        n_parked: vec![0; horizon],
        e_init: 0.0,
    };
    for s in sessions {
        s.validate(eta)?;
        if s.departure_isp > horizon {
            return Err(SimError::Validation(format!(
                "session departing at {} exceeds horizon {}",
                s.departure_isp, horizon
            )));
        }
        let asap = asap_path(s, eta);
        let alap = alap_path(s, eta);
        for i in 0..(s.departure_isp - s.arrival_isp) {
            let t = s.arrival_isp + i;
            vb.e_upper[t] += asap.0[i];
            vb.e_lower[t] += alap.0[i];
            vb.p_charge_max[t] += s.p_max;
            vb.n_parked[t] += 1;
        }
        vb.e_arr[s.arrival_isp] += s.soc_init;
        if s.departure_isp < horizon {
            vb.e_dep[s.departure_isp] += s.e_target;
        }
    }
    // The envelope ordering e_lower <= e_upper holds per session; the
    // group sums can cross by a few ulps because the two paths accumulate
    // in different orders. Restore the invariant exactly.
    for t in 0..horizon {
        vb.e_lower[t] = vb.e_lower[t].min(vb.e_upper[t]);
    }
    Ok(vb)
}

/// Draw `group_size * params.horizon_days` feasible sessions, one per EV
/// per night. Deterministic per seed.
pub fn generate_sessions(
    group_size: usize,
    params: &MobilityParams,
    seed: u64,
) -> Result<Vec<EvSession>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrival_dist = normal(params.arrival_mean_h, params.arrival_sigma_h)?;
    let departure_dist = normal(params.departure_mean_h, params.departure_sigma_h)?;

    let mut sessions = Vec::with_capacity(group_size * params.horizon_days);
    for _ in 0..group_size {
        let (capacity, p_max): (f64, f64) = if rng.gen_bool(0.5) {
            (50.0, 3.7)
        } else {
            (75.0, 11.0)
        };
        let target = 0.9 * capacity;
        for night in 0..params.horizon_days {
            let mut attempt = 0;
            let session = loop {
                attempt += 1;
                if attempt > 50 {
                    return Err(SimError::Validation(
                        "mobility parameters produce infeasible sessions".to_string(),
                    ));
                }
                let arrival_h = arrival_dist.sample(&mut rng).clamp(12.0, 23.75);
                let departure_h = departure_dist.sample(&mut rng).clamp(0.25, 12.0);
                let arrival = night * ISPS_PER_DAY + (arrival_h / DT_H).round() as usize;
                let departure = (night + 1) * ISPS_PER_DAY + (departure_h / DT_H).round() as usize;
                if departure <= arrival {
                    continue;
                }
                let window = (departure - arrival) as f64;
                // Bound the trip so the night suffices at full rate with
                // headroom for any charging efficiency down to 0.85.
                let trip_cap = (target)
                    .min(0.85 * p_max * DT_H * window)
                    .min(params.trip_kwh_max);
                if trip_cap < params.trip_kwh_min {
                    continue;
                }
                let e_trip = rng.gen_range(params.trip_kwh_min..=trip_cap);
                let s = EvSession {
                    arrival_isp: arrival,
                    departure_isp: departure,
                    capacity,
                    p_max,
                    soc_init: target - e_trip,
                    e_target: target,
                    e_trip,
                };
                // eta = 1 is the loosest bound; callers re-validate with
                // their configured efficiency via build_virtual_battery.
                if s.validate(1.0).is_ok() {
                    break s;
                }
            };
            sessions.push(session);
        }
    }
    Ok(sessions)
}

fn normal(mean: f64, sigma: f64) -> Result<Normal<f64>> {
    Normal::new(mean, sigma.max(0.0))
        .map_err(|e| SimError::Validation(format!("bad mobility distribution: {e}")))
}

const FLEET_HEADER: &str =
    "ev_id,arrival_isp,departure_isp,capacity_kwh,p_max_kw,soc_init_kwh,e_target_kwh,e_trip_kwh";

pub fn write_fleet(sessions: &[EvSession], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(FLEET_HEADER);
    out.push('\n');
    for (id, s) in sessions.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            id, s.arrival_isp, s.departure_isp, s.capacity, s.p_max, s.soc_init, s.e_target, s.e_trip
        ));
    }
    std::fs::write(path, out).map_err(|e| SimError::io(path, e))
}

pub fn load_fleet(path: &Path) -> Result<Vec<EvSession>> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == FLEET_HEADER => {}
        _ => return Err(SimError::parse(path, 1, format!("expected header {FLEET_HEADER:?}"))),
    }
    let mut sessions = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(SimError::parse(
                path,
                lineno,
                format!("expected 8 fields, got {}", fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse()
                .map_err(|e| SimError::parse(path, lineno, format!("bad field {:?}: {e}", fields[i])))
        };
        sessions.push(EvSession {
            arrival_isp: num(1)? as usize,
            departure_isp: num(2)? as usize,
            capacity: num(3)?,
            p_max: num(4)?,
            soc_init: num(5)?,
            e_target: num(6)?,
            e_trip: num(7)?,
        });
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(arrival: usize, departure: usize, soc: f64, target: f64) -> EvSession {
        EvSession {
            arrival_isp: arrival,
            departure_isp: departure,
            capacity: 50.0,
            p_max: 3.7,
            soc_init: soc,
            e_target: target,
            e_trip: 0.0,
        }
    }

    #[test]
    fn asap_full_rate_then_flat() {
        // 50 kWh EV, 3.7 kW, eta 1, needs 7.4 kWh from isp 72:
        // 8 increments of 0.925 kWh, flat after.
        let s = session(72, 128, 10.0, 17.4);
        let path = asap_path(&s, 1.0);
        assert_eq!(path.0.len(), 56);
        for i in 0..8 {
            let expected = 10.0 + 0.925 * (i + 1) as f64;
            assert!((path.0[i] - expected).abs() < 1e-12, "step {i}");
        }
        assert!(path.0[8..].iter().all(|&v| (v - 17.4).abs() < 1e-12));
    }

    #[test]
    fn asap_fractional_final_step() {
        // Needs 1.0 kWh at a 0.925 kWh step: one full step then 0.075.
        let s = session(0, 8, 10.0, 11.0);
        let path = asap_path(&s, 1.0);
        assert!((path.0[0] - 10.925).abs() < 1e-12);
        assert!((path.0[1] - 11.0).abs() < 1e-12);
        assert!((path.0[7] - 11.0).abs() < 1e-12);
    }

    #[test]
    fn asap_already_full_is_flat() {
        let s = session(0, 8, 17.4, 17.4);
        assert!(asap_path(&s, 1.0).0.iter().all(|&v| v == 17.4));
        assert!(alap_path(&s, 1.0).0.iter().all(|&v| v == 17.4));
    }

    #[test]
    fn alap_charges_at_the_end() {
        // The 8-step example anchored at departure 128: charging occupies
        // ISPs 120..127 (window indices 48..55).
        let s = session(72, 128, 10.0, 17.4);
        let path = alap_path(&s, 1.0);
        assert!(path.0[..48].iter().all(|&v| (v - 10.0).abs() < 1e-12));
        for i in 0..8 {
            let expected = 10.0 + 0.925 * (i + 1) as f64;
            assert!((path.0[48 + i] - expected).abs() < 1e-12, "step {i}");
        }
        assert!((path.0[55] - 17.4).abs() < 1e-12);
    }

    #[test]
    fn alap_below_asap_on_random_sessions() {
        let params = MobilityParams::default();
        let sessions = generate_sessions(1000, &params, 99).unwrap();
        assert_eq!(sessions.len(), 1000);
        for s in &sessions {
            let asap = asap_path(s, 0.95);
            let alap = alap_path(s, 0.95);
            for (a, b) in alap.0.iter().zip(&asap.0) {
                assert!(a <= &(b + 1e-9));
            }
        }
    }

    #[test]
    fn generated_sessions_feasible_and_deterministic() {
        let params = MobilityParams::default();
        let a = generate_sessions(100, &params, 7).unwrap();
        assert_eq!(a.len(), 100);
        for s in &a {
            s.validate(1.0).unwrap();
        }
        let b = generate_sessions(100, &params, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_sessions(100, &params, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fixed_mobility_yields_56_isp_sessions() {
        let params = MobilityParams {
            arrival_sigma_h: 0.0,
            departure_sigma_h: 0.0,
            trip_kwh_min: 7.4,
            trip_kwh_max: 7.4,
            ..MobilityParams::default()
        };
        let sessions = generate_sessions(50, &params, 3).unwrap();
        for s in &sessions {
            assert_eq!(s.departure_isp - s.arrival_isp, 56);
            assert!((s.e_trip - 7.4).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_fleet_builds_zero_battery() {
        let vb = build_virtual_battery(&[], 96, 0.95).unwrap();
        assert!(vb.e_upper.iter().all(|&v| v == 0.0));
        assert!(vb.p_charge_max.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singleton_battery_equals_its_paths() {
        let s = session(10, 40, 5.0, 12.4);
        let vb = build_virtual_battery(std::slice::from_ref(&s), 96, 1.0).unwrap();
        let asap = asap_path(&s, 1.0);
        let alap = alap_path(&s, 1.0);
        for i in 0..30 {
            assert_eq!(vb.e_upper[10 + i], asap.0[i]);
            assert_eq!(vb.e_lower[10 + i], alap.0[i]);
        }
        assert_eq!(vb.e_arr[10], 5.0);
        assert_eq!(vb.e_dep[40], 12.4);
        assert_eq!(vb.p_charge_max[10], 3.7);
        assert_eq!(vb.p_charge_max[40], 0.0);
    }

    #[test]
    fn two_identical_evs_double_the_envelope() {
        let s = session(10, 40, 5.0, 12.4);
        let single = build_virtual_battery(std::slice::from_ref(&s), 96, 1.0).unwrap();
        let double = build_virtual_battery(&[s.clone(), s], 96, 1.0).unwrap();
        for t in 0..96 {
            assert!((double.e_upper[t] - 2.0 * single.e_upper[t]).abs() < 1e-12);
            assert!((double.e_lower[t] - 2.0 * single.e_lower[t]).abs() < 1e-12);
            assert!((double.p_charge_max[t] - 2.0 * single.p_charge_max[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn hundred_ev_group_envelope_ordered() {
        let params = MobilityParams::default();
        let sessions = generate_sessions(100, &params, 11).unwrap();
        let horizon = sessions.iter().map(|s| s.departure_isp).max().unwrap();
        let vb = build_virtual_battery(&sessions, horizon, 0.95).unwrap();
        for t in 0..horizon {
            assert!(vb.e_lower[t] <= vb.e_upper[t] + 1e-9);
        }
        // p_charge_max steps down at each departure.
        for s in &sessions {
            if s.departure_isp < horizon && s.departure_isp > 0 {
                assert!(vb.p_charge_max[s.departure_isp] <= vb.p_charge_max[s.departure_isp - 1]);
            }
        }
    }

    #[test]
    fn envelope_is_additive_over_disjoint_sets() {
        let a = generate_sessions(10, &MobilityParams::default(), 1).unwrap();
        let b = generate_sessions(10, &MobilityParams::default(), 2).unwrap();
        let horizon = 2 * ISPS_PER_DAY;
        let eta = 0.95;
        let clamp = |set: &[EvSession]| -> Vec<EvSession> {
            set.iter().filter_map(|s| s.clamped(horizon, eta)).collect()
        };
        let (a, b) = (clamp(&a), clamp(&b));
        let mut both = a.clone();
        both.extend(b.clone());
        let vb_a = build_virtual_battery(&a, horizon, eta).unwrap();
        let vb_b = build_virtual_battery(&b, horizon, eta).unwrap();
        let vb_ab = build_virtual_battery(&both, horizon, eta).unwrap();
        for t in 0..horizon {
            assert!((vb_ab.e_upper[t] - vb_a.e_upper[t] - vb_b.e_upper[t]).abs() < 1e-9);
            assert!((vb_ab.e_lower[t] - vb_a.e_lower[t] - vb_b.e_lower[t]).abs() < 1e-9);
        }
    }

    #[test]
    fn fleet_file_round_trips() {
        let sessions = generate_sessions(20, &MobilityParams::default(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fleet.csv");
        write_fleet(&sessions, &path).unwrap();
        let loaded = load_fleet(&path).unwrap();
        assert_eq!(sessions, loaded);
    }
}
