//! BRP decision models: the day-ahead stochastic purchase LP and the
//! per-ISP rolling-horizon real-time MILPs for each pricing mechanism.
//!
//! Everything is stated consumption-positive: `e_da`/`e_rt` are energies
//! bought/consumed in kWh, and `dev = e_da - e_rt` so a surplus (consumed
//! less than scheduled) is positive. The constant day-ahead margin
//! `e_da * (retail - lambda_da)` is excluded from the RT objective and
//! re-added in accounting.

use std::time::Duration;

use crate::error::{Result, SimError};
use crate::fleet::VirtualBattery;
use crate::lp::{solve_lp, LpOutcome, LpProblem, LpRow};
use crate::market::{MarketSeries, RegState};
use crate::milp::{solve_milp, MilpModel};
use crate::scenario::{rt_fan, PriceScenarioSet, ScenarioKind};
use crate::settlement::Mechanism;

/// Secondary objective weight steering indifferent optima toward the
/// schedule (€/kWh on |dev|).
pub const DEV_TIE_BREAK: f64 = 1e-6;

/// Contiguous ISP window `[start, start + len)`.
#[derive(Debug, Clone, Copy)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

impl Window {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Scheduled energy per ISP over one day window, consumption-positive.
#[derive(Debug, Clone)]
pub struct EProgram {
    pub window: Window,
    /// kWh bought day-ahead per ISP of the window.
    pub e_da: Vec<f64>,
    /// Expected objective of the DA stage, €.
    pub objective_value: f64,
}

/// One committed real-time step.
#[derive(Debug, Clone)]
pub struct RtStep {
    pub isp: usize,
    /// kWh actually consumed.
    pub e_rt: f64,
    /// Surplus component, kWh >= 0.
    pub dev_up: f64,
    /// Shortage magnitude, kWh >= 0.
    pub dev_down: f64,
    pub mechanism: Mechanism,
    /// Optimal horizon objective of the solve that committed this step, €.
    pub objective: f64,
    /// VB energy after this step, kWh.
    pub energy: f64,
}

impl RtStep {
    /// Signed deviation, surplus positive.
    pub fn dev(&self) -> f64 {
        self.dev_up - self.dev_down
    }
}

/// Full-day realized trace.
#[derive(Debug, Clone)]
pub struct RtTrace {
    pub steps: Vec<RtStep>,
    /// VB energy at the end of the day, kWh.
    pub end_energy: f64,
}

/// Solve the DA purchase LP over one day window.
///
/// The scenario set only enters through the expected price (purchases are
/// scenario-independent first-stage decisions), so the stochastic
/// objective collapses to its mean.
pub fn solve_da_stage(
    vb: &VirtualBattery,
    da_set: &PriceScenarioSet,
    retail: f64,
    eta: f64,
    window: Window,
    e_init: f64,
) -> Result<EProgram> {
    if da_set.kind != ScenarioKind::Da {
        return Err(SimError::Validation("expected a DA scenario set".into()));
    }
    if da_set.scenarios.iter().any(|r| r.len() != window.len) {
        return Err(SimError::Validation(
            "DA scenario rows do not match the window".into(),
        ));
    }
    if window.end() > vb.horizon() {
        return Err(SimError::Validation("window exceeds the VB horizon".into()));
    }
    let len = window.len;

    // Variables: e_da[i] (0..len), then E[i] (len..2len).
    let mut obj = vec![0.0; 2 * len];
    let mut lower = vec![0.0; 2 * len];
    let mut upper = vec![0.0; 2 * len];
    for i in 0..len {
        let t = window.start + i;
        let mean_price: f64 = da_set
            .scenarios
            .iter()
            .zip(&da_set.probabilities)
            .map(|(row, p)| p * row[i])
            .sum();
        obj[i] = (retail - mean_price) / 1000.0;
        upper[i] = vb.max_charge_kwh(t);
        lower[len + i] = vb.e_lower[t];
        upper[len + i] = vb.e_upper[t];
    }

    let mut rows = Vec::with_capacity(len);
    let mut row_names = Vec::with_capacity(len);
    for i in 0..len {
        let t = window.start + i;
        let mut coeffs = vec![(len + i, 1.0), (i, -eta)];
        let mut rhs = vb.e_arr[t] - vb.e_dep[t];
        if i == 0 {
            rhs += e_init;
        } else {
            coeffs.push((len + i - 1, -1.0));
        }
        rows.push(LpRow::eq(coeffs, rhs));
        row_names.push(format!("isp {t}"));
    }

    let lp = LpProblem {
        obj,
        lower,
        upper,
        rows,
    };
    match solve_lp(&lp)? {
        LpOutcome::Optimal { x, objective } => Ok(EProgram {
            window,
            e_da: x[..len].to_vec(),
            objective_value: objective,
        }),
        LpOutcome::Infeasible { violated_rows } => {
            let first = violated_rows
                .first()
                .map(|&i| row_names[i].clone())
                .unwrap_or_else(|| "bounds".into());
            Err(SimError::Infeasible(format!(
                "DA envelope infeasible, first violation at {first}"
            )))
        }
        LpOutcome::Unbounded => Err(SimError::Solver("DA stage unbounded".into())),
    }
}

/// Surplus/shortage price coefficients (€/MWh) for one mechanism at one
/// ISP: cash = alpha * surplus - beta * shortage (per MWh).
fn price_coeffs(
    mech: Mechanism,
    state: RegState,
    lambda_up: f64,
    lambda_down: f64,
    lambda_da: f64,
) -> (f64, f64) {
    let mid = (lambda_up + lambda_down) / 2.0;
    match mech {
        Mechanism::Single => match state {
            RegState::Short => (lambda_up, lambda_up),
            RegState::Long => (lambda_down, lambda_down),
            RegState::Balanced | RegState::Both => (mid, mid),
        },
        Mechanism::TwoPrice => match state {
            RegState::Short => (lambda_da, lambda_up),
            RegState::Long => (lambda_down, lambda_da),
            RegState::Balanced | RegState::Both => (mid, mid),
        },
        Mechanism::DualPrice => (lambda_down, lambda_up),
    }
}

/// The built RT model plus the indices of the committed (first-stage)
/// variables.
#[derive(Debug, Clone)]
pub struct RtModel {
    pub model: MilpModel,
    pub devp0: usize,
    pub devn0: usize,
}

/// Build the rolling-horizon MILP at decision step `t0`.
///
/// First-stage deviation variables at `t0` are scenario-independent;
/// later ISPs are scenario-indexed. The binary exclusivity indicator
/// `u_t` (and its coupling rows) is only materialized for ISPs where some
/// scenario makes a simultaneous surplus+shortage profitable — everywhere
/// else the LP relaxation is already exact.
#[allow(clippy::too_many_arguments)]
pub fn build_rt_model(
    vb: &VirtualBattery,
    eprog: &EProgram,
    mech: Mechanism,
    states: &[RegState],
    fan: &PriceScenarioSet,
    lambda_da: &[f64],
    t0: usize,
    window_end: usize,
    e_init: f64,
    eta: f64,
) -> Result<RtModel> {
    if fan.kind != ScenarioKind::RtJoint {
        return Err(SimError::Validation("expected an rt_joint fan".into()));
    }
    if fan.t0 != t0 {
        return Err(SimError::Validation(format!(
            "fan anchored at {} but t0 is {t0}",
            fan.t0
        )));
    }
    if t0 < eprog.window.start || t0 >= eprog.window.end() || window_end > eprog.window.end() {
        return Err(SimError::Validation("t0/window outside the e-program".into()));
    }
    let len = window_end - t0;
    let n_s = fan.n();
    if fan.scenarios.iter().any(|r| r.len() < len) {
        return Err(SimError::Validation("fan rows shorter than the window".into()));
    }

    let cap = |t: usize| vb.max_charge_kwh(t);
    let e_da = |t: usize| eprog.e_da[t - eprog.window.start];

    // Variable layout: first stage [devp0, devn0, E0], then per scenario s
    // and offset i in 1..len: [devp, devn, E], then the u_t block.
    let n_second = 3 * n_s * (len - 1);
    let mut obj = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut names = Vec::new();

    let mut push_var = |name: String, l: f64, u: f64, c: f64| {
        names.push(name);
        lower.push(l);
        upper.push(u.max(l));
        obj.push(c);
    };

    // Which window offsets need the exclusivity binary.
    let mut needs_u = vec![false; len];
    let coeffs_at = |s: usize, i: usize| -> (f64, f64) {
        let t = t0 + i;
        price_coeffs(
            mech,
            states[t],
            fan.scenarios[s][i],
            fan.down[s][i],
            lambda_da[t],
        )
    };
    for i in 0..len {
        for s in 0..n_s {
            let (alpha, beta) = coeffs_at(s, i);
            if alpha > beta + 1e-9 {
                needs_u[i] = true;
                break;
            }
        }
    }

    // First stage: every scenario shares the t0 prices, so the expected
    // coefficient is the common one.
    {
        let (alpha, beta) = coeffs_at(0, 0);
        let c = cap(t0);
        push_var(
            format!("devp_{t0}"),
            0.0,
            e_da(t0).min(c),
            alpha / 1000.0 - DEV_TIE_BREAK,
        );
        push_var(
            format!("devn_{t0}"),
            0.0,
            (c - e_da(t0)).max(0.0),
            -beta / 1000.0 - DEV_TIE_BREAK,
        );
        push_var(format!("e_{t0}"), vb.e_lower[t0], vb.e_upper[t0], 0.0);
    }
    for s in 0..n_s {
        let pi = fan.probabilities[s];
        for i in 1..len {
            let t = t0 + i;
            let (alpha, beta) = coeffs_at(s, i);
            let c = cap(t);
            push_var(
                format!("devp_s{s}_{t}"),
                0.0,
                e_da(t).min(c),
                pi * (alpha / 1000.0 - DEV_TIE_BREAK),
            );
            push_var(
                format!("devn_s{s}_{t}"),
                0.0,
                (c - e_da(t)).max(0.0),
                pi * (-beta / 1000.0 - DEV_TIE_BREAK),
            );
            push_var(format!("e_s{s}_{t}"), vb.e_lower[t], vb.e_upper[t], 0.0);
        }
    }
    let u_base = 3 + n_second;
    let mut u_index = vec![usize::MAX; len];
    let mut binaries = Vec::new();
    let mut n_u = 0;
    for i in 0..len {
        if needs_u[i] {
            u_index[i] = u_base + n_u;
            binaries.push(u_base + n_u);
            n_u += 1;
            push_var(format!("u_{}", t0 + i), 0.0, 1.0, 0.0);
        }
    }
    drop(push_var);

    let var_devp = |s: usize, i: usize| -> usize {
        if i == 0 {
            0
        } else {
            3 + 3 * (s * (len - 1) + (i - 1))
        }
    };

    let mut rows = Vec::new();
    let mut row_names = Vec::new();

    // Dynamics: E_i - E_{i-1} + eta*devp - eta*devn = arr - dep + eta*e_da.
    // The shared first stage gets one row; each scenario then chains its
    // own rows off E_{t0}.
    rows.push(LpRow::eq(
        vec![(0, eta), (1, -eta), (2, 1.0)],
        e_init + vb.e_arr[t0] - vb.e_dep[t0] + eta * e_da(t0),
    ));
    row_names.push(format!("dyn isp {t0}"));
    for s in 0..n_s {
        for i in 1..len {
            let t = t0 + i;
            let base = var_devp(s, i);
            let prev = if i == 1 { 2 } else { var_devp(s, i - 1) + 2 };
            rows.push(LpRow::eq(
                vec![(base, eta), (base + 1, -eta), (base + 2, 1.0), (prev, -1.0)],
                vb.e_arr[t] - vb.e_dep[t] + eta * e_da(t),
            ));
            row_names.push(format!("dyn isp {t} scenario {s}"));
        }
    }

    // Exclusivity coupling for flagged ISPs.
    for i in 0..len {
        if !needs_u[i] {
            continue;
        }
        let t = t0 + i;
        let c = cap(t);
        let u = u_index[i];
        let s_range = if i == 0 { 0..1 } else { 0..n_s };
        for s in s_range {
            let base = var_devp(s, i);
            rows.push(LpRow::le(vec![(base, 1.0), (u, c)], c));
            row_names.push(format!("excl_up isp {t} scenario {s}"));
            rows.push(LpRow::le(vec![(base + 1, 1.0), (u, -c)], 0.0));
            row_names.push(format!("excl_down isp {t} scenario {s}"));
        }
    }

    let model = MilpModel {
        lp: LpProblem {
            obj,
            lower,
            upper,
            rows,
        },
        binaries,
        var_names: names,
        row_names,
    };
    Ok(RtModel {
        model,
        devp0: 0,
        devn0: 1,
    })
}

/// Rolling-horizon parameters.
#[derive(Debug, Clone)]
pub struct RtParams {
    pub n_up: usize,
    pub n_down: usize,
    pub sigma_rel: f64,
    pub seed: u64,
    /// 0 = to the end of the day.
    pub lookahead_isps: usize,
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
}

impl Default for RtParams {
    fn default() -> Self {
        RtParams {
            n_up: 5,
            n_down: 5,
            sigma_rel: 0.5,
            seed: 1,
            lookahead_isps: 0,
            gap_tol: 1e-6,
            time_limit: None,
        }
    }
}

/// Run the per-ISP rolling horizon over one day: build + solve the RT
/// model at each step, commit the first-stage decision, advance the VB
/// state with the realized energy.
#[allow(clippy::too_many_arguments)]
pub fn rolling_horizon_day(
    vb: &VirtualBattery,
    eprog: &EProgram,
    mech_schedule: &[Mechanism],
    market: &MarketSeries,
    params: &RtParams,
    e_init: f64,
    eta: f64,
) -> Result<RtTrace> {
    let window = eprog.window;
    if mech_schedule.len() != window.len {
        return Err(SimError::Validation(
            "mechanism schedule does not cover the day".into(),
        ));
    }
    let day_up = &market.lambda_up()[window.start..window.end()];
    let day_down = &market.lambda_down()[window.start..window.end()];

    let mut energy = e_init;
    let mut steps = Vec::with_capacity(window.len);
    for offset in 0..window.len {
        let t0 = window.start + offset;
        let fan_rel = rt_fan(
            day_up,
            day_down,
            offset,
            params.n_up,
            params.n_down,
            params.sigma_rel,
            params.seed,
        )?;
        // Re-anchor the fan at the global ISP index.
        let fan = PriceScenarioSet { t0, ..fan_rel };

        let window_end = if params.lookahead_isps == 0 {
            window.end()
        } else {
            window.end().min(t0 + params.lookahead_isps)
        };
        let mech = mech_schedule[offset];
        let rt = build_rt_model(
            vb,
            eprog,
            mech,
            market.reg_state(),
            &fan,
            market.lambda_da(),
            t0,
            window_end,
            energy,
            eta,
        )?;
        let sol = solve_milp(&rt.model, params.gap_tol, params.time_limit)
            .map_err(|e| SimError::Solver(format!("RT solve failed at isp {t0}: {e}")))?;

        let snap = |v: f64| if v.abs() < 1e-9 { 0.0 } else { v };
        let dev_up = snap(sol.x[rt.devp0]);
        let dev_down = snap(sol.x[rt.devn0]);
        let e_rt = eprog.e_da[offset] - dev_up + dev_down;
        energy += vb.e_arr[t0] - vb.e_dep[t0] + eta * e_rt;
        // fp hygiene: pull the recurrence back onto the envelope when the
        // drift is below reporting precision.
        if energy < vb.e_lower[t0] && vb.e_lower[t0] - energy < 5e-9 {
            energy = vb.e_lower[t0];
        }
        if energy > vb.e_upper[t0] && energy - vb.e_upper[t0] < 5e-9 {
            energy = vb.e_upper[t0];
        }
        steps.push(RtStep {
            isp: t0,
            e_rt,
            dev_up,
            dev_down,
            mechanism: mech,
            objective: sol.objective,
            energy,
        });
    }
    Ok(RtTrace {
        steps,
        end_energy: energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::{build_virtual_battery, EvSession};
    use crate::scenario::da_scenarios;

    fn night_session() -> EvSession {
        EvSession {
            arrival_isp: 72,
            departure_isp: 96,
            capacity: 50.0,
            p_max: 3.7,
            soc_init: 37.6,
            e_target: 45.0,
            e_trip: 7.4,
        }
    }

    /// Tiny hand-built battery: one ISP window with the given bounds.
    fn toy_vb(cap_kw: Vec<f64>, e_lower: Vec<f64>, e_upper: Vec<f64>) -> VirtualBattery {
        let n = cap_kw.len();
        VirtualBattery {
            e_upper,
            e_lower,
            p_charge_max: cap_kw,
            e_arr: vec![0.0; n],
            e_dep: vec![0.0; n],
            n_parked: vec![1; n],
            e_init: 0.0,
        }
    }

    fn flat_market(n_days: usize, lambda: f64) -> MarketSeries {
        let n = 96 * n_days;
        MarketSeries::new(
            vec![lambda; n],
            vec![lambda; n],
            vec![lambda; n],
            vec![RegState::Balanced; n],
        )
        .unwrap()
    }

    #[test]
    fn da_empty_fleet_buys_nothing() {
        let vb = build_virtual_battery(&[], 8, 1.0).unwrap();
        let da = da_scenarios(&[50.0; 8], 1, 0.0, 1).unwrap();
        let prog =
            solve_da_stage(&vb, &da, 100.0, 1.0, Window { start: 0, len: 8 }, 0.0).unwrap();
        assert!(prog.e_da.iter().all(|&e| e.abs() < 1e-9));
        assert!(prog.objective_value.abs() < 1e-9);
    }

    #[test]
    fn da_total_purchase_matches_need() {
        for eta in [1.0, 0.95] {
            let vb = build_virtual_battery(&[night_session()], 96, eta).unwrap();
            let da = da_scenarios(&[50.0; 96], 3, 0.0, 1).unwrap();
            let prog =
                solve_da_stage(&vb, &da, 100.0, eta, Window { start: 0, len: 96 }, 0.0).unwrap();
            let total: f64 = prog.e_da.iter().sum();
            let need = 7.4 / eta;
            assert!((total - need).abs() < 1e-7, "eta {eta}: total {total}");
            let expect_obj = need * (100.0 - 50.0) / 1000.0;
            assert!((prog.objective_value - expect_obj).abs() < 1e-7);
        }
    }

    #[test]
    fn da_buys_at_the_cheap_isp() {
        let vb = toy_vb(vec![4.0, 4.0], vec![0.0, 1.0], vec![1.0, 1.0]);
        let da = da_scenarios(&[10.0, 200.0], 1, 0.0, 1).unwrap();
        let prog =
            solve_da_stage(&vb, &da, 100.0, 1.0, Window { start: 0, len: 2 }, 0.0).unwrap();
        assert!((prog.e_da[0] - 1.0).abs() < 1e-9);
        assert!(prog.e_da[1].abs() < 1e-9);
        assert!((prog.objective_value - 0.09).abs() < 1e-9);
    }

    #[test]
    fn da_infeasible_envelope_names_the_isp() {
        // Only 1 kWh can be added per ISP but the lower envelope demands 10.
        let vb = toy_vb(vec![4.0, 4.0], vec![0.0, 10.0], vec![10.0, 10.0]);
        let da = da_scenarios(&[50.0, 50.0], 1, 0.0, 1).unwrap();
        let err = solve_da_stage(&vb, &da, 100.0, 1.0, Window { start: 0, len: 2 }, 0.0)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("isp"), "message: {msg}");
    }

    #[test]
    fn rt_zero_noise_sticks_to_schedule() {
        let vb = build_virtual_battery(&[night_session()], 96, 1.0).unwrap();
        let market = flat_market(1, 50.0);
        let da = da_scenarios(market.lambda_da(), 1, 0.0, 1).unwrap();
        let prog =
            solve_da_stage(&vb, &da, 100.0, 1.0, Window { start: 0, len: 96 }, 0.0).unwrap();
        let params = RtParams {
            n_up: 1,
            n_down: 1,
            sigma_rel: 0.0,
            ..RtParams::default()
        };
        let trace = rolling_horizon_day(
            &vb,
            &prog,
            &vec![Mechanism::Single; 96],
            &market,
            &params,
            0.0,
            1.0,
        )
        .unwrap();
        for (step, &e_da) in trace.steps.iter().zip(&prog.e_da) {
            assert!(step.dev().abs() < 1e-7, "isp {} dev {}", step.isp, step.dev());
            assert!((step.e_rt - e_da).abs() < 1e-7);
        }
        assert!((trace.end_energy - 45.0).abs() < 1e-6);
    }

    #[test]
    fn rt_negative_down_price_rewards_shortage() {
        let vb = toy_vb(vec![4.0], vec![0.0], vec![1.0]);
        let prog = EProgram {
            window: Window { start: 0, len: 1 },
            e_da: vec![0.0],
            objective_value: 0.0,
        };
        let fan = rt_fan(&[50.0], &[-400.0], 0, 1, 1, 0.0, 1).unwrap();
        let rt = build_rt_model(
            &vb,
            &prog,
            Mechanism::Single,
            &[RegState::Long],
            &fan,
            &[50.0],
            0,
            1,
            0.0,
            1.0,
        )
        .unwrap();
        let sol = solve_milp(&rt.model, 1e-9, None).unwrap();
        // Shortage of 1 kWh at -400 €/MWh earns 0.40 € (minus tie-break).
        assert!((sol.x[rt.devn0] - 1.0).abs() < 1e-9);
        assert!(sol.x[rt.devp0].abs() < 1e-9);
        assert!((sol.objective - (0.4 - DEV_TIE_BREAK)).abs() < 1e-9);
    }

    #[test]
    fn rt_argmax_invariant_under_price_scaling() {
        let vb = toy_vb(vec![4.0], vec![0.0], vec![1.0]);
        let prog = EProgram {
            window: Window { start: 0, len: 1 },
            e_da: vec![0.5],
            objective_value: 0.0,
        };
        let mut devs = Vec::new();
        for k in [1.0, 7.0] {
            let fan = rt_fan(&[k * 50.0], &[k * -400.0], 0, 1, 1, 0.0, 1).unwrap();
            let rt = build_rt_model(
                &vb,
                &prog,
                Mechanism::Single,
                &[RegState::Long],
                &fan,
                &[k * 50.0],
                0,
                1,
                0.0,
                1.0,
            )
            .unwrap();
            let sol = solve_milp(&rt.model, 1e-9, None).unwrap();
            devs.push(sol.x[rt.devp0] - sol.x[rt.devn0]);
        }
        assert!((devs[0] - devs[1]).abs() < 1e-9);
    }

    #[test]
    fn dual_coefficients_ignore_lambda_da() {
        for state in [RegState::Long, RegState::Balanced, RegState::Short] {
            let a = price_coeffs(Mechanism::DualPrice, state, 60.0, 40.0, 55.0);
            let b = price_coeffs(Mechanism::DualPrice, state, 60.0, 40.0, -999.0);
            assert_eq!(a, b);
            assert_eq!(a, (40.0, 60.0));
        }
    }

    #[test]
    fn rt_three_isp_dual_matches_u_enumeration() {
        // Crossed prices (lambda_down > lambda_up) make simultaneous
        // surplus+shortage profitable, forcing real branching.
        let vb = toy_vb(vec![4.0; 3], vec![0.0; 3], vec![2.0; 3]);
        let prog = EProgram {
            window: Window { start: 0, len: 3 },
            e_da: vec![0.5, 0.5, 0.5],
            objective_value: 0.0,
        };
        let up = [10.0, 20.0, 30.0];
        let down = [90.0, 15.0, 80.0];
        let fan = rt_fan(&up, &down, 0, 1, 1, 0.0, 1).unwrap();
        let rt = build_rt_model(
            &vb,
            &prog,
            Mechanism::DualPrice,
            &[RegState::Balanced; 3],
            &fan,
            &[50.0; 3],
            0,
            3,
            0.0,
            1.0,
        )
        .unwrap();
        assert!(!rt.model.binaries.is_empty());
        let sol = solve_milp(&rt.model, 1e-9, None).unwrap();

        // Oracle: enumerate every binary assignment, solve the fixed LP.
        let mut best = f64::NEG_INFINITY;
        let k = rt.model.binaries.len();
        for mask in 0..(1u32 << k) {
            let mut lp = rt.model.lp.clone();
            for (b, &j) in rt.model.binaries.iter().enumerate() {
                let v = if mask >> b & 1 == 1 { 1.0 } else { 0.0 };
                lp.lower[j] = v;
                lp.upper[j] = v;
            }
            if let LpOutcome::Optimal { objective, .. } = solve_lp(&lp).unwrap() {
                best = best.max(objective);
            }
        }
        assert!(
            (sol.objective - best).abs() <= 1e-6 * (1.0 + best.abs()),
            "milp {} oracle {best}",
            sol.objective
        );
    }

    /// Stress day: flat prices except two Long-state ISPs with
    /// lambda_down = -400 before the scheduled charging window.
    fn stress_market() -> MarketSeries {
        let mut da = vec![50.0; 96];
        for t in 88..96 {
            da[t] = 30.0; // cheap late hours attract the DA schedule
        }
        let mut up = vec![65.0; 96];
        let mut down = vec![35.0; 96];
        let mut state = vec![RegState::Balanced; 96];
        for t in [76, 80] {
            down[t] = -400.0;
            up[t] = 35.0;
            state[t] = RegState::Long;
        }
        MarketSeries::new(da, up, down, state).unwrap()
    }

    fn stress_trace(mech: Mechanism) -> (EProgram, RtTrace, VirtualBattery) {
        let vb = build_virtual_battery(&[night_session()], 96, 1.0).unwrap();
        let market = stress_market();
        let da = da_scenarios(market.lambda_da(), 1, 0.0, 1).unwrap();
        let prog =
            solve_da_stage(&vb, &da, 100.0, 1.0, Window { start: 0, len: 96 }, 0.0).unwrap();
        let params = RtParams {
            n_up: 1,
            n_down: 1,
            sigma_rel: 0.0,
            ..RtParams::default()
        };
        let trace = rolling_horizon_day(
            &vb,
            &prog,
            &vec![mech; 96],
            &market,
            &params,
            0.0,
            1.0,
        )
        .unwrap();
        (prog, trace, vb)
    }

    #[test]
    fn rt_single_price_chases_the_spike() {
        let (prog, trace, vb) = stress_trace(Mechanism::Single);
        // DA buys only in the cheap block.
        let early: f64 = prog.e_da[..88].iter().sum();
        assert!(early.abs() < 1e-7, "early DA purchase {early}");
        // Shortage committed at both spike ISPs, at the power bound.
        for t in [76usize, 80] {
            assert!(
                trace.steps[t].dev_down > 0.9,
                "isp {t} dev_down {}",
                trace.steps[t].dev_down
            );
            assert!(trace.steps[t].dev_up.abs() < 1e-9);
        }
        // Exclusivity and envelope safety along the whole trace.
        for step in &trace.steps {
            assert!(step.dev_up * step.dev_down < 1e-9);
            assert!(step.energy >= vb.e_lower[step.isp] - 1e-9);
            assert!(step.energy <= vb.e_upper[step.isp] + 1e-9);
        }
        assert!((trace.end_energy - 45.0).abs() < 1e-6);
    }

    #[test]
    fn rt_dual_price_deviates_less_than_single() {
        let (_, single, _) = stress_trace(Mechanism::Single);
        let (_, dual, _) = stress_trace(Mechanism::DualPrice);
        for t in [76usize, 80] {
            let s = single.steps[t].dev().abs();
            let d = dual.steps[t].dev().abs();
            assert!(d < s, "isp {t}: dual {d} vs single {s}");
            assert!(d < 1e-7, "dual should stick to schedule, got {d}");
        }
    }

    #[test]
    fn rt_first_solve_dominates_zero_deviation() {
        // At the first step the schedule itself is feasible, so the
        // optimum must be at least the zero-deviation payoff (zero).
        let (prog, _, vb) = stress_trace(Mechanism::Single);
        let market = stress_market();
        for mech in [Mechanism::Single, Mechanism::TwoPrice, Mechanism::DualPrice] {
            let fan = rt_fan(market.lambda_up(), market.lambda_down(), 0, 1, 1, 0.0, 1).unwrap();
            let rt = build_rt_model(
                &vb,
                &prog,
                mech,
                market.reg_state(),
                &fan,
                market.lambda_da(),
                0,
                96,
                0.0,
                1.0,
            )
            .unwrap();
            let sol = solve_milp(&rt.model, 1e-6, None).unwrap();
            assert!(sol.objective >= -1e-6, "{mech}: {}", sol.objective);
        }
    }

    #[test]
    fn rt_lookahead_window_limits_the_model() {
        let vb = build_virtual_battery(&[night_session()], 96, 1.0).unwrap();
        let market = flat_market(1, 50.0);
        let da = da_scenarios(market.lambda_da(), 1, 0.0, 1).unwrap();
        let prog =
            solve_da_stage(&vb, &da, 100.0, 1.0, Window { start: 0, len: 96 }, 0.0).unwrap();
        let params = RtParams {
            n_up: 1,
            n_down: 1,
            sigma_rel: 0.0,
            lookahead_isps: 8,
            ..RtParams::default()
        };
        let trace = rolling_horizon_day(
            &vb,
            &prog,
            &vec![Mechanism::Single; 96],
            &market,
            &params,
            0.0,
            1.0,
        )
        .unwrap();
        for step in &trace.steps {
            assert!(step.dev().abs() < 1e-7);
        }
        assert!((trace.end_energy - 45.0).abs() < 1e-6);
    }
}
