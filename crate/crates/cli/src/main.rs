//! `cipherobs`: design, run, verify and benchmark the encrypted observer.

mod bench;
mod config;
mod verify;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cipherobs_core::pipeline::{first_detection, run_encrypted, run_quantized, run_reference, write_csv, EncOptions, Mode};
use cipherobs_core::zerodyn::relative_degree;

use config::RunConfig;
use verify::Mutation;

#[derive(Parser)]
#[command(name = "cipherobs", version, about = "Encrypted state observer with attack detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the observer design and the parameter checks.
    Design(Common),
    /// Run the closed loop and write per-step CSV.
    Simulate(SimulateArgs),
    /// Run the self-check suites.
    Verify(VerifyArgs),
    /// Time encrypted observer updates.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Seed for the insecure test generator; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the full LWE dimension instead of the reduced test one.
    #[arg(long)]
    full_lwe: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    steps: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run encrypted mode even if a parameter check fails.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum)]
    mutate: Option<Mutation>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// LWE dimensions to time.
    #[arg(long, value_delimiter = ',', default_values_t = vec![64, 1024, 4096])]
    sizes: Vec<usize>,
    /// Observer updates per measurement.
    #[arg(long, default_value_t = 3)]
    steps: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Reference,
    Quantized,
    Encrypted,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Reference => Mode::Reference,
            ModeArg::Quantized => Mode::Quantized,
            ModeArg::Encrypted => Mode::Encrypted,
        }
    }
}

/// Exit 1 for a failed check, 2 for anything wrong with the inputs.
enum Failure {
    Verification(String),
    Config(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

impl From<cipherobs_core::Error> for Failure {
    fn from(e: cipherobs_core::Error) -> Self {
        Failure::Config(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design(c) => design(&c),
        Command::Simulate(a) => simulate(&a),
        Command::Verify(a) => run_verify(&a),
        Command::Bench(a) => run_bench(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn seed_of(common: &Common, cfg: &RunConfig) -> Option<u64> {
    common.seed.or(cfg.seed)
}

fn design(c: &Common) -> Result<(), Failure> {
    let cfg = RunConfig::load(&c.config)?;
    let d = cfg.design(c.full_lwe)?;
    let p = d.params();
    let mut out = io::stdout().lock();
    let mut w = || -> io::Result<()> {
        write!(out, "{}", d.bank.report())?;
        writeln!(out, "M = {:.6e}", p.m_bound)?;
        writeln!(out, "z_ini bound = {:.6}", p.ztilde_ini)?;
        writeln!(out, "|G_bar|_inf = {}", d.map.gbar.inf_norm())?;
        writeln!(out, "q = {}, L = {}, N = {}", p.modulus.q(), p.lfac, p.lwe_dim)?;
        Ok(())
    };
    w().context("writing report")?;

    let gbar = &d.qobs.gbar;
    let fbar = d.qobs.fbar.to_mod(&p.modulus);
    let mut nus = Vec::with_capacity(d.bank.n_r());
    for j in 0..d.bank.n_r() {
        let h = d.qobs.hbar.row(j);
        nus.push(relative_degree(&h, &fbar, gbar, d.bank.l(), j)?);
    }
    let list: Vec<String> = nus.iter().map(usize::to_string).collect();
    println!("relative degrees = [{}]", list.join(", "));
    println!("max relative degree = {}", nus.iter().max().copied().unwrap_or(0));
    print!("{}", d.bounds);
    println!("all parameter checks: {}", if d.bounds.all_passed() { "PASS" } else { "FAIL" });
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(&a.common.config)?;
    let mode: Mode = a.mode.map(Into::into).unwrap_or(cfg.mode);
    let steps = a.steps.unwrap_or(cfg.steps);
    let d = cfg.design(a.common.full_lwe)?;
    let traj = d.simulate(steps);

    let records = match mode {
        Mode::Reference => run_reference(&d, &traj),
        Mode::Quantized => {
            d.calibrate(steps)?.into_result()?;
            run_quantized(&d, &traj)?.into_iter().map(|s| s.record).collect()
        }
        Mode::Encrypted => {
            if !d.bounds.all_passed() {
                let failing: Vec<&str> = d.bounds.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
                if !a.force {
                    return Err(Failure::Config(anyhow::anyhow!(
                        "parameter check failed ({}); pass --force to run anyway",
                        failing.join(", ")
                    )));
                }
                eprintln!("warning: running with failed parameter checks: {}", failing.join(", "));
            }
            d.calibrate(steps)?.into_result()?;
            let setup = d.enc_setup()?;
            let opts = EncOptions {
                seed: seed_of(&a.common, &cfg),
                ..Default::default()
            };
            let run = run_encrypted(&d, &setup, &traj, &opts)?;
            let mismatched: Vec<usize> = run.steps.iter().filter(|s| !s.disclosure_exact).map(|s| s.record.step).collect();
            if !mismatched.is_empty() {
                return Err(Failure::Verification(format!("disclosed residue differs at steps {mismatched:?}")));
            }
            run.records()
        }
    };

    match &a.out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            write_csv(&mut w, &records, mode)?;
            w.flush().context("writing csv")?;
        }
        None => write_csv(&mut io::stdout().lock(), &records, mode)?,
    }
    let flagged = records.iter().filter(|r| r.detected).count();
    match first_detection(&records) {
        Some(t) => eprintln!("{} mode: {steps} steps, first detection at step {t}, {flagged} flagged", mode.as_str()),
        None => eprintln!("{} mode: {steps} steps, no detection", mode.as_str()),
    }
    Ok(())
}

fn run_verify(a: &VerifyArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(&a.common.config)?;
    let d = cfg.design(a.common.full_lwe)?;
    let setup = d.enc_setup()?;
    let seed = seed_of(&a.common, &cfg).unwrap_or(0);
    let results = verify::run_all(&d, &setup, a.steps.unwrap_or(cfg.steps), seed, a.mutate)?;
    for r in &results {
        println!("{:<16} {}  ({})", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed.join(", ")))
    }
}

fn run_bench(a: &BenchArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(&a.common.config)?;
    let d = cfg.design(false)?;
    let seed = seed_of(&a.common, &cfg).unwrap_or(0);
    let rows = bench::run(&d, &a.sizes, a.steps, seed)?;
    println!("{:>6} {:>8} {:>14} {:>9}", "N", "threads", "ms/step", "speedup");
    for r in &rows {
        let base = rows
            .iter()
            .find(|b| b.lwe_dim == r.lwe_dim && b.threads == 1)
            .map_or(r.per_step_ms, |b| b.per_step_ms);
        println!("{:>6} {:>8} {:>14.3} {:>9.2}", r.lwe_dim, r.threads, r.per_step_ms, base / r.per_step_ms);
    }
    Ok(())
}
