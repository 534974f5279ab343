//! End-to-end case runner: day-ahead stage per BRP, DSO congestion
//! flags, per-region mechanism assignment, rolling-horizon real-time
//! solves, settlement, and result assembly.

use rayon::prelude::*;

use crate::config::{Scope, SimConfig};
use crate::error::{Result, SimError};
use crate::fleet::{build_virtual_battery, EvSession, VirtualBattery};
use crate::grid::{
    connection_flow, dso_congestion_forecast, is_overload, loading, CongestionFlags,
    GroupSchedule, Region, FLAG_LEAD_ISPS,
};
use crate::market::{MarketSeries, ISPS_PER_DAY};
use crate::optimizer::{
    rolling_horizon_day, solve_da_stage, EProgram, RtParams, RtStep, Window,
};
use crate::scenario::da_scenarios;
use crate::settlement::{settle, Mechanism, SettlementRecord};

/// Extra ISPs appended to each day-ahead solve so overnight charging
/// sessions close before the optimization window does.
pub const DA_LOOKAHEAD_ISPS: usize = 48;

/// Everything needed to run one case deterministically.
#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub config: SimConfig,
    pub base: Mechanism,
    pub alt: Mechanism,
    pub scope: Scope,
    pub market: MarketSeries,
    /// EV sessions per BRP group, region-major order matching the
    /// config's region list.
    pub fleets: Vec<Vec<EvSession>>,
}

/// One BRP's full-horizon outcome.
#[derive(Debug, Clone)]
pub struct BrpResult {
    pub group: usize,
    pub region: usize,
    /// kWh bought day-ahead per ISP.
    pub e_da: Vec<f64>,
    pub steps: Vec<RtStep>,
    pub ledger: Vec<SettlementRecord>,
    /// € earned in the day-ahead stage (retail minus DA price on volume).
    pub da_margin: f64,
    /// € of imbalance settlement cash.
    pub settlement_cash: f64,
}

/// One region's loading trace.
#[derive(Debug, Clone)]
pub struct RegionResult {
    pub id: String,
    pub flags: CongestionFlags,
    pub mechanism: Vec<Mechanism>,
    pub flow_mw: Vec<f64>,
    pub loading: Vec<f64>,
    pub scheduled_loading: Vec<f64>,
    pub overload: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub brps: Vec<BrpResult>,
    pub regions: Vec<RegionResult>,
    /// Aggregate BRP benefit, €.
    pub benefit: f64,
}

fn stage_err(stage: &str, e: SimError) -> SimError {
    match e {
        SimError::Solver(m) => SimError::Solver(format!("{stage}: {m}")),
        SimError::Infeasible(m) => SimError::Infeasible(format!("{stage}: {m}")),
        other => other,
    }
}

/// Run one case end to end. Identical specs (including seeds) produce
/// identical results.
pub fn run_case(spec: &CaseSpec) -> Result<CaseResult> {
    let config = &spec.config;
    let horizon = spec.market.len();
    let days = spec.market.days();
    if spec.scope != Scope::None && spec.alt == spec.base {
        return Err(SimError::Validation(
            "alt mechanism equals the base mechanism".into(),
        ));
    }

    // Region-major group layout.
    let mut regions = Vec::new();
    let mut group_region = Vec::new();
    {
        let mut next_group = 0;
        for (r, rc) in config.regions.iter().enumerate() {
            let groups: Vec<usize> = (next_group..next_group + rc.n_batteries).collect();
            next_group += rc.n_batteries;
            for _ in 0..rc.n_batteries {
                group_region.push(r);
            }
            regions.push(Region {
                id: rc.id.clone(),
                line_rating_mw: rc.line_rating_mw,
                baseload_mw: rc.baseload(horizon)?,
                pv_mw: rc.pv(horizon)?,
                groups,
            });
        }
    }
    let n_groups = group_region.len();
    if spec.fleets.len() != n_groups {
        return Err(SimError::Validation(format!(
            "expected {n_groups} fleet groups, got {}",
            spec.fleets.len()
        )));
    }

    // Virtual batteries, sessions clamped to the simulated horizon.
    let mut vbs: Vec<VirtualBattery> = Vec::with_capacity(n_groups);
    for sessions in &spec.fleets {
        let clamped: Vec<EvSession> = sessions
            .iter()
            .filter_map(|s| s.clamped(horizon, config.eta))
            .collect();
        vbs.push(build_virtual_battery(&clamped, horizon, config.eta)?);
    }

    // Day-ahead stage: chained per day on the planned energy state.
    let eprograms: Vec<Vec<EProgram>> = (0..n_groups)
        .into_par_iter()
        .map(|g| {
            let vb = &vbs[g];
            let mut programs = Vec::with_capacity(days);
            let mut e_plan = vb.e_init;
            for day in 0..days {
                // Overnight sessions straddle midnight; solving with a
                // lookahead into the next morning pins the total volume
                // (the envelope closes at every departure), so purchases
                // land at the cheap hours instead of piling up before the
                // window boundary. Only the day itself is committed.
                let start = day * ISPS_PER_DAY;
                let window = Window {
                    start,
                    len: (ISPS_PER_DAY + DA_LOOKAHEAD_ISPS).min(horizon - start),
                };
                let base = &spec.market.lambda_da()[window.start..window.end()];
                let seed = config
                    .seeds
                    .da
                    .wrapping_add(g as u64)
                    .wrapping_mul(0x9e3779b97f4a7c15)
                    .wrapping_add(day as u64);
                let da_set = da_scenarios(
                    base,
                    config.scenarios.da_count,
                    config.scenarios.da_sigma_rel,
                    seed,
                )?;
                let full = solve_da_stage(
                    vb,
                    &da_set,
                    config.retail_price,
                    config.eta,
                    window,
                    e_plan,
                )
                .map_err(|e| stage_err(&format!("DA stage group {g} day {day}"), e))?;
                let prog = EProgram {
                    window: Window {
                        start,
                        len: ISPS_PER_DAY,
                    },
                    e_da: full.e_da[..ISPS_PER_DAY].to_vec(),
                    objective_value: full.objective_value,
                };
                for (i, &e) in prog.e_da.iter().enumerate() {
                    let t = start + i;
                    e_plan += vb.e_arr[t] - vb.e_dep[t] + config.eta * e;
                }
                programs.push(prog);
            }
            Ok(programs)
        })
        .collect::<Result<_>>()?;

    // What the DSO can see: schedules and envelope headroom per group.
    let schedules: Vec<GroupSchedule> = (0..n_groups)
        .map(|g| {
            let vb = &vbs[g];
            let e_da: Vec<f64> = eprograms[g].iter().flat_map(|p| p.e_da.clone()).collect();
            let mut e_planned = Vec::with_capacity(horizon);
            let mut e = vb.e_init;
            for (t, &e_da_t) in e_da.iter().enumerate() {
                e += vb.e_arr[t] - vb.e_dep[t] + config.eta * e_da_t;
                e_planned.push(e);
            }
            GroupSchedule {
                e_da,
                e_planned,
                cap_kwh: (0..horizon).map(|t| vb.max_charge_kwh(t)).collect(),
                e_upper: vb.e_upper.clone(),
                e_lower: vb.e_lower.clone(),
            }
        })
        .collect();

    // DSO flags: the flag for ISP t comes from the forecast made at
    // t - FLAG_LEAD_ISPS, which only reads market data at that step.
    let flags: Vec<CongestionFlags> = regions
        .iter()
        .map(|region| {
            let mut f = vec![false; horizon];
            for t in 0..horizon.saturating_sub(FLAG_LEAD_ISPS) {
                let forecast = dso_congestion_forecast(
                    region,
                    t,
                    &schedules,
                    spec.market.reg_state()[t],
                    spec.market.lambda_up()[t],
                    spec.market.lambda_down()[t],
                    spec.market.lambda_da()[t],
                    config.dso.worst_case,
                    config.dso.threshold,
                );
                for (tau, flagged) in forecast {
                    if tau == t + FLAG_LEAD_ISPS {
                        f[tau] = flagged;
                    }
                }
            }
            CongestionFlags { flags: f }
        })
        .collect();

    // Mechanism per region per ISP.
    let any_flagged: Vec<bool> = (0..horizon)
        .map(|t| flags.iter().any(|f| f.flags[t]))
        .collect();
    let mechanism: Vec<Vec<Mechanism>> = (0..regions.len())
        .map(|r| {
            (0..horizon)
                .map(|t| match spec.scope {
                    Scope::None => spec.base,
                    Scope::Global => {
                        if any_flagged[t] {
                            spec.alt
                        } else {
                            spec.base
                        }
                    }
                    Scope::Local => {
                        if flags[r].flags[t] {
                            spec.alt
                        } else {
                            spec.base
                        }
                    }
                })
                .collect()
        })
        .collect();

    // Real-time stage: rolling horizon per group, chained on the
    // realized energy state; groups are independent.
    let rt_params_base = RtParams {
        n_up: config.scenarios.rt_up_count,
        n_down: config.scenarios.rt_down_count,
        sigma_rel: config.scenarios.rt_sigma_rel,
        seed: 0,
        lookahead_isps: config.rt.lookahead_isps,
        gap_tol: 1e-6,
        time_limit: None,
    };
    let brps: Vec<BrpResult> = (0..n_groups)
        .into_par_iter()
        .map(|g| {
            let vb = &vbs[g];
            let r = group_region[g];
            let mut steps: Vec<RtStep> = Vec::with_capacity(horizon);
            let mut energy = vb.e_init;
            for day in 0..days {
                let prog = &eprograms[g][day];
                let window = prog.window;
                let params = RtParams {
                    seed: config
                        .seeds
                        .rt
                        .wrapping_add(g as u64)
                        .wrapping_mul(0x9e3779b97f4a7c15)
                        .wrapping_add(day as u64),
                    ..rt_params_base.clone()
                };
                let trace = rolling_horizon_day(
                    vb,
                    prog,
                    &mechanism[r][window.start..window.end()],
                    &spec.market,
                    &params,
                    energy,
                    config.eta,
                )
                .map_err(|e| stage_err(&format!("RT stage group {g} day {day}"), e))?;
                energy = trace.end_energy;
                steps.extend(trace.steps);
            }

            let e_da: Vec<f64> = eprograms[g].iter().flat_map(|p| p.e_da.clone()).collect();
            let mut ledger = Vec::with_capacity(horizon);
            let mut settlement_cash = 0.0;
            for step in &steps {
                let t = step.isp;
                let rec = settle(
                    step.mechanism,
                    t,
                    step.dev(),
                    spec.market.reg_state()[t],
                    spec.market.lambda_up()[t],
                    spec.market.lambda_down()[t],
                    spec.market.lambda_da()[t],
                )?;
                settlement_cash += rec.cashflow;
                ledger.push(rec);
            }
            let da_margin: f64 = e_da
                .iter()
                .zip(spec.market.lambda_da())
                .map(|(&e, &l)| e * (config.retail_price - l) / 1000.0)
                .sum();
            Ok(BrpResult {
                group: g,
                region: r,
                e_da,
                steps,
                ledger,
                da_margin,
                settlement_cash,
            })
        })
        .collect::<Result<_>>()?;

    // Loading traces from the realized and scheduled energies.
    let region_results: Vec<RegionResult> = regions
        .iter()
        .enumerate()
        .map(|(r, region)| {
            let mut flow_mw = Vec::with_capacity(horizon);
            let mut load = Vec::with_capacity(horizon);
            let mut sched_load = Vec::with_capacity(horizon);
            let mut overload = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let rt_kwh: Vec<f64> = brps.iter().map(|b| b.steps[t].e_rt).collect();
                let da_kwh: Vec<f64> = brps.iter().map(|b| b.e_da[t]).collect();
                let f = connection_flow(region, t, &rt_kwh);
                let fs = connection_flow(region, t, &da_kwh);
                flow_mw.push(f);
                let l = loading(f, region.line_rating_mw);
                load.push(l);
                sched_load.push(loading(fs, region.line_rating_mw));
                overload.push(is_overload(l));
            }
            RegionResult {
                id: region.id.clone(),
                flags: flags[r].clone(),
                mechanism: mechanism[r].clone(),
                flow_mw,
                loading: load,
                scheduled_loading: sched_load,
                overload,
            }
        })
        .collect();

    let benefit: f64 = brps.iter().map(|b| b.da_margin + b.settlement_cash).sum();
    // Cross-check the aggregate against a trace-level recomputation.
    let recomputed: f64 = brps
        .iter()
        .map(|b| {
            let margin: f64 = b
                .e_da
                .iter()
                .zip(spec.market.lambda_da())
                .map(|(&e, &l)| e * (config.retail_price - l) / 1000.0)
                .sum();
            let cash: f64 = b.ledger.iter().map(|rec| rec.cashflow).sum();
            margin + cash
        })
        .sum();
    if (benefit - recomputed).abs() > 1e-6 {
        return Err(SimError::Solver(format!(
            "benefit accounting mismatch: {benefit} vs {recomputed}"
        )));
    }

    Ok(CaseResult {
        brps,
        regions: region_results,
        benefit,
    })
}
