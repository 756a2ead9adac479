//! Argument parsing and file plumbing for the `aes-imc` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use aes_imc_core::config::RunConfig;
use aes_imc_core::metrics::BUNDLED_BASELINES;
use clap::{Args, Parser, Subcommand};

use crate::{cmd_encrypt, cmd_metrics, cmd_sweep, cmd_verify, parse_hex_lines, parse_key, parse_knob, sweep_csv, trace_jsonl, CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "aes-imc", version, about = "AES-128 on a simulated resistive crossbar")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// key = value configuration file
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write the micro-op trace as JSON lines
    #[arg(long, global = true, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    /// Write the primary output here instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    pub blocks: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub banks: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encrypt hex plaintext lines under the key in KEY
    Encrypt { input: PathBuf, key: PathBuf },
    /// Compare the datapath with the reference cipher on random blocks
    Verify,
    /// Regenerate the metric tables and audit the baseline dataset
    Metrics {
        /// Baseline CSV (defaults to the bundled dataset)
        #[arg(long, value_name = "PATH")]
        baselines: Option<PathBuf>,
    },
    /// Sweep the peripheral unit counts and bank count
    Sweep {
        #[arg(long, default_value = "1..2")]
        sbox_units: String,
        #[arg(long, default_value = "2")]
        m2_units: String,
        /// Bank counts to try (defaults to --banks or the configured count)
        #[arg(long)]
        bank_counts: Option<String>,
    },
}

const DEFAULT_VERIFY_BLOCKS: usize = 10_000;
const DEFAULT_SWEEP_BLOCKS: usize = 16;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Config file plus command-line overrides.
pub fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::parse(&read(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(b) = g.banks {
        if b == 0 {
            return Err(CliError::Config("--banks must be at least 1".into()));
        }
        cfg.banks = b;
    }
    if g.trace.is_some() {
        cfg.trace_path = g.trace.clone();
    }
    if g.out.is_some() {
        cfg.out_path = g.out.clone();
    }
    Ok(cfg)
}

/// Runs one command. Primary output goes to `--out` when given, otherwise
/// to `stdout`; diagnostics go to `stderr` (or `stdout` when the primary
/// output is in a file).
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let to_file = cfg.out_path.is_some();
    let emit = |text: &str, stdout: &mut dyn Write| -> Result<()> {
        match &cfg.out_path {
            Some(p) => write_file(p, text),
            None => Ok(stdout.write_all(text.as_bytes())?),
        }
    };

    match &cli.command {
        Command::Encrypt { input, key } => {
            let plaintexts = parse_hex_lines(&read_input(input)?, &input.display().to_string())?;
            let key = parse_key(&read_input(key)?, &key.display().to_string())?;
            let out = cmd_encrypt(&cfg, &plaintexts, &key, cfg.trace_path.is_some())?;
            emit(&out.ciphertext_text(), stdout)?;
            if let Some(p) = &cfg.trace_path {
                write_file(p, &trace_jsonl(&out.trace))?;
            }
            let log: &mut dyn Write = if to_file { stdout } else { stderr };
            for b in &out.per_block {
                writeln!(log, "block {} cycles {} energy_pJ {}", b.index, b.cycles, b.energy_pj)?;
            }
            writeln!(log, "{}", serde_json::to_string(&out.report).expect("report serializes"))?;
        }
        Command::Verify => {
            let n = cli.global.blocks.unwrap_or(DEFAULT_VERIFY_BLOCKS);
            let report = cmd_verify(&cfg, n, cfg.seed)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            emit(&json, stdout)?;
            if let Some(m) = &report.first_mismatch {
                return Err(CliError::Mismatch(format!(
                    "{} of {} blocks differ; first at index {}: pt {} key {} expected {} got {}",
                    report.mismatches, report.blocks, m.index, m.plaintext, m.key, m.expected, m.simulated
                )));
            }
            let log: &mut dyn Write = if to_file { stdout } else { stderr };
            writeln!(log, "verified {} blocks, report {}", report.blocks, report.report_hash)?;
        }
        Command::Metrics { baselines } => {
            let csv = match baselines {
                Some(p) => read(p)?,
                None => BUNDLED_BASELINES.to_string(),
            };
            let out = cmd_metrics(&cfg, &csv)?;
            if to_file {
                emit(&aes_imc_core::metrics::write_comparison_csv(&out.comparison), stdout)?;
                stdout.write_all(out.render(false).as_bytes())?;
            } else {
                stdout.write_all(out.render(true).as_bytes())?;
            }
        }
        Command::Sweep {
            sbox_units,
            m2_units,
            bank_counts,
        } => {
            let sbox = parse_knob(sbox_units, "sbox-units")?;
            let m2 = parse_knob(m2_units, "m2-units")?;
            let banks = match bank_counts {
                Some(b) => parse_knob(b, "bank-counts")?,
                None => vec![cfg.banks],
            };
            let blocks = cli.global.blocks.unwrap_or(DEFAULT_SWEEP_BLOCKS);
            let points = cmd_sweep(&cfg, &sbox, &m2, &banks, blocks)?;
            emit(&sweep_csv(&points), stdout)?;
        }
    }
    Ok(())
}
