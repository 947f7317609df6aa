//! `midr`: run mechanisms and verification suites on instance files.
//!
//! Exit codes: 0 when everything passes, 1 when a verification fails (a
//! witness file is written), 2 on input errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use midr_core::io::{self, Ratio, Scenario};
use midr_core::mechanism;
use midr_core::rational::{self, Rational};
use midr_core::verify::{self, CheckResult, TruthfulnessOptions, VerificationReport};
use midr_core::{Error, FamilyTag};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Run,
    VerifyTruthfulness,
    VerifyRatio,
    VerifyNoMoney,
    Decompose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Parser)]
#[command(
    name = "midr",
    version,
    about = "Exact truthful-in-expectation mechanisms and their verification"
)]
struct Args {
    /// Instance file (JSON).
    #[arg(long)]
    instance: PathBuf,

    #[arg(long, value_enum)]
    mode: Mode,

    /// Comma-separated value grid for the verify modes, e.g. "0,1,2,3" or "0,1/2,1".
    #[arg(long, default_value = "0,1,2,3")]
    grid: String,

    /// Misreport grid; defaults to the value grid.
    #[arg(long)]
    misreport_grid: Option<String>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory, created if missing.
    #[arg(long, default_value = "midr-out")]
    out: PathBuf,

    #[arg(long, value_enum, default_value = "json")]
    format: Format,

    /// Cap on pipeline runs for verify-truthfulness.
    #[arg(long, default_value_t = verify::DEFAULT_BUDGET)]
    budget: usize,
}

fn parse_grid(text: &str, flag: &str) -> Result<Vec<Rational>, Error> {
    let grid = text
        .split(',')
        .map(|t| rational::parse(t).map_err(|e| Error::Input(format!("{flag}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if grid.is_empty() {
        return Err(Error::Input(format!("{flag}: empty grid")));
    }
    Ok(grid)
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn prepare_out(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Input(format!("{}: {e}", dir.display())))
}

/// Prints one line per check, writes the report, and on failure a witness
/// file holding only the failing rows. Returns whether everything passed.
fn finish(args: &Args, stem: &str, report: &VerificationReport) -> Result<bool, Error> {
    for c in &report.checks {
        println!("{}", c.summary());
    }
    println!(
        "domain: family {} n={} m={} grid [{}]",
        report.domain.family,
        report.domain.n,
        report.domain.m,
        report.domain.value_grid.join(", ")
    );
    let (json, csv) = match args.format {
        Format::Json => (true, false),
        Format::Csv => (false, true),
        Format::Both => (true, true),
    };
    io::write_report(&args.out, stem, report, json, csv)?;
    if report.passed() {
        return Ok(true);
    }
    let failing = VerificationReport {
        domain: report.domain.clone(),
        checks: report
            .checks
            .iter()
            .filter(|c| !c.passed())
            .cloned()
            .collect::<Vec<CheckResult>>(),
    };
    let path = args.out.join(format!("{stem}-witness.json"));
    write(&path, &io::report_to_json(&failing))?;
    println!("witness: {}", path.display());
    Ok(false)
}

#[derive(Serialize)]
struct DecompositionFile {
    family: String,
    point: Vec<Ratio>,
    scale: Ratio,
    terms: Vec<io::DistributionRow>,
    distribution: Vec<io::DistributionRow>,
}

fn without_money(args: &Args, scenario: &Scenario) -> Result<bool, Error> {
    let inst = &scenario.instance;
    let profile = &scenario.profile;
    let (x, dist) = mechanism::run_without_money(inst, profile)?;
    let realized = midr_core::rounding::sample(&dist, args.seed);
    let path = args.out.join(if args.mode == Mode::Run {
        "outcome.json"
    } else {
        "decomposition.json"
    });
    let body = serde_json::json!({
        "family": inst.tag().as_str(),
        "seed": args.seed,
        "point": x.coords().iter().map(rational::format).collect::<Vec<_>>(),
        "distribution": io::distribution_rows(&dist),
        "realized": realized.bitmasks(),
    });
    write(&path, &serde_json::to_string_pretty(&body).expect("json"))?;
    println!(
        "{}: {} outcomes -> {}",
        args.mode.to_possible_value().unwrap().get_name(),
        dist.len(),
        path.display()
    );
    Ok(true)
}

fn run(args: &Args) -> Result<bool, Error> {
    let scenario: Scenario = io::load_scenario(&args.instance)?;
    let inst = &scenario.instance;
    let profile = &scenario.profile;
    prepare_out(&args.out)?;
    let grid = parse_grid(&args.grid, "--grid")?;
    let misreport_grid = match &args.misreport_grid {
        Some(g) => parse_grid(g, "--misreport-grid")?,
        None => grid.clone(),
    };
    match args.mode {
        Mode::Run | Mode::Decompose if !inst.tag().is_auction() => without_money(args, &scenario),
        Mode::Run => {
            let out = mechanism::run_with_rule(inst, profile, args.seed, scenario.payment_rule)?;
            let path = args.out.join("outcome.json");
            write(&path, &io::outcome_to_json(inst, &out))?;
            let file = io::outcome_file(inst, &out);
            println!(
                "run: winners {:?}, payments [{}] -> {}",
                file.winners,
                out.expected_payments
                    .iter()
                    .map(rational::format)
                    .collect::<Vec<_>>()
                    .join(", "),
                path.display()
            );
            Ok(true)
        }
        Mode::Decompose => {
            let a = mechanism::allocate_traced(inst, profile)?;
            let scale = inst.spec().point_scale.clone();
            let check =
                verify::check_decomposition_identities(inst, std::slice::from_ref(&a.point))?;
            let file = DecompositionFile {
                family: inst.tag().to_string(),
                point: a.point.coords().iter().cloned().map(Ratio).collect(),
                scale: Ratio(scale),
                terms: a
                    .decomposition
                    .terms()
                    .iter()
                    .map(|(w, z)| io::DistributionRow {
                        bitmasks: z.bitmasks(),
                        bundles: z.bundles().iter().map(|b| b.to_string()).collect(),
                        probability: Ratio(w.clone()),
                    })
                    .collect(),
                distribution: io::distribution_rows(&a.distribution),
            };
            let path = args.out.join("decomposition.json");
            write(&path, &serde_json::to_string_pretty(&file).expect("json"))?;
            let report = VerificationReport {
                domain: verify::Domain::new(inst, &[], &[], false),
                checks: vec![check],
            };
            finish(args, "decomposition-report", &report)
        }
        Mode::VerifyTruthfulness => {
            let opts = TruthfulnessOptions::new(grid, misreport_grid)
                .with_rule(scenario.payment_rule)
                .with_budget(args.budget);
            let report = verify::check_truthfulness_with(inst, &opts)?;
            finish(args, "truthfulness-report", &report)
        }
        Mode::VerifyRatio => {
            let mut report = verify::check_ratio_grid(inst, &grid)?;
            let own = verify::check_approximation(inst, profile)?;
            println!(
                "instance profile: E[f] = {}, OPT = {}, guarantee {}",
                rational::format(&own.expected_welfare),
                rational::format(&own.opt),
                rational::format(&own.guarantee)
            );
            let mut check = CheckResult::new("approximation-instance-profile");
            check.cases = 1;
            if !own.passed {
                check.failures = 1;
                check.witnesses.push(verify::Witness {
                    profile_id: 0,
                    profile: verify::describe_profile(profile),
                    bidder: None,
                    misreport: None,
                    lhs: &own.guarantee * &own.opt,
                    rhs: own.expected_welfare.clone(),
                });
            }
            report.checks.push(check);
            finish(args, "ratio-report", &report)
        }
        Mode::VerifyNoMoney => {
            if inst.tag().is_auction() {
                return Err(Error::UnsupportedFamily(inst.tag().to_string()));
            }
            let grid = if inst.tag() == FamilyTag::SinglePeaked {
                grid.into_iter()
                    .filter(|g| {
                        g.is_integer()
                            && *g >= rational::zero()
                            && *g < rational::int(inst.num_items() as i64)
                    })
                    .collect()
            } else {
                grid
            };
            let mut report = verify::check_without_money_grid(inst, &grid, &rational::one())?;
            let own = verify::check_without_money(inst, profile, &rational::one())?;
            for mut c in own.checks {
                c.name = format!("{}-instance-profile", c.name);
                report.checks.push(c);
            }
            finish(args, "no-money-report", &report)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
