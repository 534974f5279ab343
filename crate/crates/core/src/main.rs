//! Command-line entry point: fleet generation, case runs, and report
//! conversion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use brpsim::config::{Scope, SimConfig};
use brpsim::fleet::{generate_sessions, load_fleet, write_fleet, EvSession};
use brpsim::market::load_market_data;
use brpsim::metrics::{congestion_frequency, emit_report, emit_svg_plots, svg_loading_plot};
use brpsim::orchestrator::{run_case, CaseSpec};
use brpsim::settlement::Mechanism;
use brpsim::{Result, SimError};

#[derive(Parser)]
#[command(name = "brpsim", version, about = "BRP passive-balancing simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the EV fleet files for every BRP group in the config.
    GenerateFleet(GenerateFleetArgs),
    /// Run one simulation case end to end and write the report bundle.
    Run(RunArgs),
    /// Convert an existing report bundle (csv summaries or svg plots).
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateFleetArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseName {
    /// Uniform single pricing.
    Sp,
    /// Uniform two-price.
    Tp,
    /// Uniform dual pricing.
    Dp,
    /// Single pricing, two-price during congestion.
    ProposedTp,
    /// Single pricing, dual pricing during congestion.
    ProposedDp,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    None,
    Global,
    Local,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Scope {
        match s {
            ScopeArg::None => Scope::None,
            ScopeArg::Global => Scope::Global,
            ScopeArg::Local => Scope::Local,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    case: CaseName,
    #[arg(long, value_enum)]
    scope: Option<ScopeArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Svg,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    in_dir: PathBuf,
    #[arg(long, value_enum)]
    format: ReportFormat,
}

fn group_seed(base: u64, group: usize) -> u64 {
    base.wrapping_add(group as u64).wrapping_mul(0x9e3779b97f4a7c15)
}

fn n_groups(config: &SimConfig) -> usize {
    config.regions.iter().map(|r| r.n_batteries).sum()
}

fn fleet_path(dir: &Path, group: usize) -> PathBuf {
    dir.join(format!("fleet_g{group:03}.csv"))
}

fn generate_fleet(args: &GenerateFleetArgs) -> Result<()> {
    let config = SimConfig::from_file(&args.config)?;
    std::fs::create_dir_all(&args.out).map_err(|e| SimError::io(&args.out, e))?;
    let mut mobility = config.mobility.clone();
    mobility.horizon_days = config.horizon_days;
    let mut group = 0;
    for region in &config.regions {
        for _ in 0..region.n_batteries {
            let sessions = generate_sessions(
                region.group_size,
                &mobility,
                group_seed(config.seeds.fleet, group),
            )?;
            write_fleet(&sessions, &fleet_path(&args.out, group))?;
            group += 1;
        }
    }
    println!("wrote {group} fleet files to {}", args.out.display());
    Ok(())
}

/// Load fleets from `dir` when present, otherwise generate them from the
/// config seeds (identical to `generate-fleet` output).
fn load_or_generate_fleets(config: &SimConfig, dir: &Path) -> Result<Vec<Vec<EvSession>>> {
    let total = n_groups(config);
    let mut mobility = config.mobility.clone();
    mobility.horizon_days = config.horizon_days;
    let mut fleets = Vec::with_capacity(total);
    let mut region_iter = config.regions.iter();
    let mut remaining = 0;
    let mut group_size = 0;
    for group in 0..total {
        if remaining == 0 {
            let r = region_iter.next().expect("group/region layout");
            remaining = r.n_batteries;
            group_size = r.group_size;
        }
        remaining -= 1;
        let path = fleet_path(dir, group);
        if path.is_file() {
            fleets.push(load_fleet(&path)?);
        } else {
            fleets.push(generate_sessions(
                group_size,
                &mobility,
                group_seed(config.seeds.fleet, group),
            )?);
        }
    }
    Ok(fleets)
}

fn run(args: &RunArgs) -> Result<()> {
    let config = SimConfig::from_file(&args.config)?;
    let scope: Scope = args.scope.map(Into::into).unwrap_or(config.scope);
    let (base, alt) = match args.case {
        CaseName::Sp => (Mechanism::Single, config.alt_mechanism),
        CaseName::Tp => (Mechanism::TwoPrice, config.alt_mechanism),
        CaseName::Dp => (Mechanism::DualPrice, config.alt_mechanism),
        CaseName::ProposedTp => (Mechanism::Single, Mechanism::TwoPrice),
        CaseName::ProposedDp => (Mechanism::Single, Mechanism::DualPrice),
    };
    if matches!(args.case, CaseName::ProposedTp | CaseName::ProposedDp)
        && scope == Scope::None
    {
        return Err(SimError::Validation(
            "proposed cases require --scope global or local".into(),
        ));
    }
    let market = load_market_data(&config.market_file)?;
    if market.days() != config.horizon_days {
        return Err(SimError::Validation(format!(
            "market file covers {} days but horizon_days is {}",
            market.days(),
            config.horizon_days
        )));
    }
    let fleets = load_or_generate_fleets(&config, &args.out)?;
    let spec = CaseSpec {
        config,
        base,
        alt,
        scope,
        market,
        fleets,
    };
    let result = run_case(&spec)?;
    let case_label = format!(
        "{}-{}",
        match args.case {
            CaseName::Sp => "sp",
            CaseName::Tp => "tp",
            CaseName::Dp => "dp",
            CaseName::ProposedTp => "proposed-tp",
            CaseName::ProposedDp => "proposed-dp",
        },
        match scope {
            Scope::None => "none",
            Scope::Global => "global",
            Scope::Local => "local",
        }
    );
    println!("case {case_label}: benefit {:.2} €", result.benefit);
    let cases = vec![(case_label, result)];
    emit_report(&cases, None, &args.out, spec.config.dso.threshold)?;
    emit_svg_plots(&cases, &args.out)?;
    Ok(())
}

/// Parse `loading_trace.csv` back into per-region loading series,
/// preserving first-seen region order.
fn parse_loading_trace(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.starts_with("isp,region,flow_mw,loading") => {}
        _ => return Err(SimError::parse(path, 1, "unexpected loading trace header")),
    }
    let mut order = Vec::new();
    let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (idx, line) in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(SimError::parse(path, idx + 1, "expected 7 columns"));
        }
        let region = cols[1].to_string();
        let loading: f64 = cols[3]
            .parse()
            .map_err(|_| SimError::parse(path, idx + 1, "bad loading value"))?;
        if !series.contains_key(&region) {
            order.push(region.clone());
        }
        series.entry(region).or_default().push(loading);
    }
    Ok(order
        .into_iter()
        .map(|r| {
            let s = series.remove(&r).unwrap();
            (r, s)
        })
        .collect())
}

fn report(args: &ReportArgs) -> Result<()> {
    let trace_path = args.in_dir.join("loading_trace.csv");
    let regions = parse_loading_trace(&trace_path)?;
    match args.format {
        ReportFormat::Csv => {
            let mut out = String::from("region,isps,days,weeks,hours\n");
            for (region, loading) in &regions {
                let s = congestion_frequency(loading, 1.0);
                out.push_str(&format!(
                    "{},{},{},{},{:.2}\n",
                    region, s.isps, s.days, s.weeks, s.hours
                ));
            }
            let path = args.in_dir.join("congestion_report.csv");
            std::fs::write(&path, &out).map_err(|e| SimError::io(&path, e))?;
            print!("{out}");
        }
        ReportFormat::Svg => {
            for (region, loading) in &regions {
                let path = args.in_dir.join(format!("loading_{region}.svg"));
                std::fs::write(&path, svg_loading_plot(loading))
                    .map_err(|e| SimError::io(&path, e))?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::GenerateFleet(args) => generate_fleet(args),
        Cmd::Run(args) => run(args),
        Cmd::Report(args) => report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
