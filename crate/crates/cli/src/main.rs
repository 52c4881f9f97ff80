//! `cgdyn`: scenario runs for coarse-grained quantum dynamics.
//!
//! Exit codes: 0 success, 1 a checked property failed, 2 malformed input.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cgdyn::experiments::{self, Scenario, ScenarioConfig, Table};
use cgdyn::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cgdyn",
    version,
    about = "Effective dynamics of coarse-grained quantum systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file; CSV for trajectories and tables, JSON for find-pair.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the scenario's RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run `distance` even if the two states generate different effective maps.
    #[arg(long, global = true)]
    override_same_map_check: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Completeness, Choi positivity and detector-table conformance.
    CheckChannel,
    /// Purity and Bloch trajectory of one initial state.
    Simulate,
    /// Trace-distance evolution of two initial states.
    Distance,
    /// Search for a same-map partner whose effective distance overshoots.
    FindPair,
    /// Convexity and membership checks on the domain of the effective map.
    DomainProbe,
    /// CP-divisibility table over pairs of grid times.
    Divisibility,
}

/// Outcome of a command that ran to completion.
enum Verdict {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Validation(_) => 1,
                _ => 2,
            })
        }
    }
}

fn load(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let mut cfg = ScenarioConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn scenario(cfg: &ScenarioConfig) -> Result<Scenario, Error> {
    let scn = Scenario::from_config(cfg)?;
    for w in &scn.warnings {
        eprintln!("warning: {w}");
    }
    Ok(scn)
}

/// Writes the table to `--out`, or to stdout when no path is given.
fn emit_table(table: &Table, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => table.write_csv(BufWriter::new(File::create(path)?)),
        None => table.write_csv(io::stdout().lock()),
    }
}

/// Summary lines go to stdout unless stdout carries the CSV.
fn summary(out: Option<&Path>) -> Box<dyn Write> {
    if out.is_some() {
        Box::new(io::stdout())
    } else {
        Box::new(io::stderr())
    }
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn run(cli: &Cli) -> Result<Verdict, Error> {
    let cfg = load(cli)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::CheckChannel => {
            let check = experiments::check_channel(&cfg)?;
            println!(
                "completeness_residual {:.3e}",
                check.report.completeness_residual
            );
            println!("choi_min_eigenvalue {:.3e}", check.report.choi_min_eig);
            if let Some(err) = check.table_error {
                println!("detector_table_error {err:.3e}");
            }
            println!("{}", pass_fail(check.passes()));
            Ok(if check.passes() {
                Verdict::Pass
            } else {
                Verdict::Fail
            })
        }
        Command::Simulate => {
            let run = experiments::simulate(&scenario(&cfg)?)?;
            emit_table(&run.table, out)?;
            writeln!(summary(out), "max_discrepancy {:.3e}", run.max_discrepancy)?;
            Ok(Verdict::Pass)
        }
        Command::Distance => {
            let run = experiments::distance(&scenario(&cfg)?, cli.override_same_map_check)?;
            emit_table(&run.table, out)?;
            let mut s = summary(out);
            for (i, m) in run.memberships.iter().enumerate() {
                writeln!(
                    s,
                    "same_map[{i}] member={} residual={:.3e} psd={}",
                    m.member, m.residual, m.psd_ok
                )?;
            }
            writeln!(s, "eff_distance_0 {:.12}", run.eff_distance_0)?;
            writeln!(s, "underlying_distance_0 {:.12}", run.underlying_distance_0)?;
            writeln!(s, "max_excess {:.6e}", run.max_excess)?;
            writeln!(s, "max_discrepancy {:.3e}", run.max_discrepancy)?;
            Ok(Verdict::Pass)
        }
        Command::FindPair => {
            let scn = scenario(&cfg)?;
            let found = experiments::find_pair(&scn, scn.search_budget)?;
            println!(
                "candidates {} (distinct from seed: {})",
                found.candidates, found.valid_candidates
            );
            println!("coefficients {:?}", found.coefficients);
            println!(
                "in_domain member={} residual={:.3e}",
                found.membership.member, found.membership.residual
            );
            println!("underlying_distance_0 {:.12}", found.underlying_distance_0);
            println!("eff_distance_0 {:.12}", found.eff_distance_0);
            println!("excess {:.6e}", found.excess);
            let pair = found.pair_config(&cfg).to_json()?;
            match out {
                Some(path) => std::fs::write(path, pair + "\n")?,
                None => println!("{pair}"),
            }
            Ok(Verdict::Pass)
        }
        Command::DomainProbe => {
            let scn = scenario(&cfg)?;
            let probe = experiments::domain_probe(&scn, scn.samples)?;
            let c = &probe.convexity;
            println!("samples {} (distinct pairs: {})", c.samples, c.nontrivial);
            println!("max_residual {:.3e}", c.max_residual);
            for (i, m) in probe.memberships.iter().enumerate() {
                println!(
                    "state[{}] member={} residual={:.3e} psd={}",
                    i + 1,
                    m.member,
                    m.residual,
                    m.psd_ok
                );
            }
            println!("violations {}", c.violations);
            println!("{}", pass_fail(probe.passes()));
            Ok(if probe.passes() {
                Verdict::Pass
            } else {
                Verdict::Fail
            })
        }
        Command::Divisibility => {
            let rows = experiments::divisibility(&scenario(&cfg)?)?;
            emit_table(&experiments::divisibility_table(&rows), out)?;
            let count = |label: &str| rows.iter().filter(|r| r.status.label() == label).count();
            writeln!(
                summary(out),
                "intervals {}: CP {}, NOT-CP {}, indeterminate {}",
                rows.len(),
                count("CP"),
                count("NOT-CP"),
                count("indeterminate")
            )?;
            Ok(Verdict::Pass)
        }
    }
}
