//! Aggregation and reporting: congestion frequency, benefit comparison,
//! and plot-ready report files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SimError};
use crate::market::{DT_H, ISPS_PER_DAY};
use crate::orchestrator::CaseResult;
use crate::settlement::{ledger_header, ledger_row};

/// How often a line was overloaded, in progressively coarser buckets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongestionStats {
    pub isps: usize,
    pub days: usize,
    pub weeks: usize,
    pub hours: f64,
}

/// Count overloaded ISPs and the distinct days/weeks containing one.
/// Weeks are calendar-free: week = floor(day / 7) from the start.
pub fn congestion_frequency(loading: &[f64], limit: f64) -> CongestionStats {
    let mut isps = 0;
    let mut days = std::collections::BTreeSet::new();
    for (t, &l) in loading.iter().enumerate() {
        if l > limit {
            isps += 1;
            days.insert(t / ISPS_PER_DAY);
        }
    }
    let weeks: std::collections::BTreeSet<usize> = days.iter().map(|d| d / 7).collect();
    CongestionStats {
        isps,
        days: days.len(),
        weeks: weeks.len(),
        hours: isps as f64 * DT_H,
    }
}

/// One row of the benefit comparison table.
#[derive(Debug, Clone)]
pub struct BenefitRow {
    pub case_name: String,
    pub benefit: f64,
    /// Percentage delta vs. the baseline, rounded half-away-from-zero
    /// to one decimal.
    pub delta_pct: f64,
}

/// Round half-away-from-zero to one decimal place.
fn round_pct(v: f64) -> f64 {
    (v * 10.0).abs().round() * v.signum() / 10.0
}

/// Compare case benefits against the first entry (the baseline).
pub fn benefit_summary(cases: &[(String, f64)]) -> Result<Vec<BenefitRow>> {
    let Some((_, baseline)) = cases.first() else {
        return Ok(Vec::new());
    };
    if *baseline == 0.0 {
        return Err(SimError::Validation(
            "baseline benefit is zero; percentage deltas undefined".into(),
        ));
    }
    Ok(cases
        .iter()
        .map(|(name, b)| BenefitRow {
            case_name: name.clone(),
            benefit: *b,
            delta_pct: round_pct((b - baseline) / baseline * 100.0),
        })
        .collect())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| SimError::io(&path, e))
}

/// Write the full report bundle for one or more finished cases into
/// `dir`: benefit summary, congestion stats, loading traces, the
/// deviation-vs-price scatter, and the settlement ledger.
pub fn emit_report(
    cases: &[(String, CaseResult)],
    lambda_applied: Option<&[f64]>,
    dir: &Path,
    limit: f64,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;

    // benefit_summary.csv
    let pairs: Vec<(String, f64)> = cases
        .iter()
        .map(|(n, r)| (n.clone(), r.benefit))
        .collect();
    let mut out = String::from("case,benefit_eur,delta_pct\n");
    if !pairs.is_empty() {
        for row in benefit_summary(&pairs)? {
            writeln!(
                out,
                "{},{:.6},{:.1}",
                row.case_name, row.benefit, row.delta_pct
            )
            .unwrap();
        }
    }
    write_file(dir, "benefit_summary.csv", &out)?;

    // congestion_stats.csv
    let mut out = String::from("case,region,isps,days,weeks,hours\n");
    for (name, result) in cases {
        for region in &result.regions {
            let s = congestion_frequency(&region.loading, limit);
            writeln!(
                out,
                "{},{},{},{},{},{:.2}",
                name, region.id, s.isps, s.days, s.weeks, s.hours
            )
            .unwrap();
        }
    }
    write_file(dir, "congestion_stats.csv", &out)?;

    // loading_trace.csv
    let mut out = String::from("isp,region,flow_mw,loading,scheduled_loading,overload,flagged\n");
    for (_, result) in cases {
        for region in &result.regions {
            for t in 0..region.loading.len() {
                writeln!(
                    out,
                    "{},{},{:.6},{:.6},{:.6},{},{}",
                    t,
                    region.id,
                    region.flow_mw[t],
                    region.loading[t],
                    region.scheduled_loading[t],
                    region.overload[t],
                    region.flags.flags[t],
                )
                .unwrap();
            }
        }
    }
    write_file(dir, "loading_trace.csv", &out)?;

    // deviation_scatter.csv: per-ISP deviation against the applied price.
    let mut out = String::from("isp,brp_id,dev_kwh,price_eur_mwh\n");
    for (_, result) in cases {
        for brp in &result.brps {
            for rec in &brp.ledger {
                let price = lambda_applied
                    .map(|l| l[rec.isp])
                    .unwrap_or(rec.applied_price);
                writeln!(
                    out,
                    "{},{},{:.6},{:.6}",
                    rec.isp, brp.group, rec.dev, price
                )
                .unwrap();
            }
        }
    }
    write_file(dir, "deviation_scatter.csv", &out)?;

    // settlement_ledger.csv
    let mut out = String::from(ledger_header());
    out.push('\n');
    for (_, result) in cases {
        for brp in &result.brps {
            for rec in &brp.ledger {
                out.push_str(&ledger_row(&brp.group.to_string(), rec));
                out.push('\n');
            }
        }
    }
    write_file(dir, "settlement_ledger.csv", &out)?;
    Ok(())
}

/// Hand-rolled SVG polyline plot of one per-ISP loading series with the
/// loading limit as a dashed red line.
pub fn svg_loading_plot(loading: &[f64]) -> String {
    let n = loading.len();
    let w = 960.0;
    let h = 320.0;
    let max_y = loading.iter().cloned().fold(1.0_f64, f64::max).max(1e-9);
    let mut points = String::new();
    for (t, &l) in loading.iter().enumerate() {
        let x = t as f64 / (n.max(2) - 1) as f64 * w;
        let y = h - l / max_y * h;
        write!(points, "{x:.2},{y:.2} ").unwrap();
    }
    let limit_y = h - 1.0 / max_y * h;
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" ",
            "viewBox=\"0 0 {w} {h}\" width=\"{w}\" height=\"{h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<line x1=\"0\" y1=\"{ly:.2}\" x2=\"{w}\" y2=\"{ly:.2}\" ",
            "stroke=\"red\" stroke-dasharray=\"6 4\"/>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" points=\"{pts}\"/>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        ly = limit_y,
        pts = points.trim_end(),
    )
}

/// Emit one SVG per region of each case; numeric payloads match
/// `loading_trace.csv`.
pub fn emit_svg_plots(cases: &[(String, CaseResult)], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    for (name, result) in cases {
        for region in &result.regions {
            if region.loading.is_empty() {
                continue;
            }
            write_file(
                dir,
                &format!("loading_{}_{}.svg", name, region.id),
                &svg_loading_plot(&region.loading),
            )?;
        }
    }
    Ok(())
}
