//! Batch commands behind the `aes-imc` binary: encrypt files, verify the
//! datapath against the reference cipher, regenerate the metric tables and
//! sweep the parallelism knobs.
//!
//! Random blocks come from SplitMix64 seeded with the run seed. Each
//! (plaintext, key) pair consumes four outputs: two for the plaintext, two
//! for the key, each written big-endian. Seed 0 yields `0xe220a8397b1dcdaf`
//! as its first output.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use aes_imc_core::config::RunConfig;
use aes_imc_core::metrics::{self, AuditEntry, AuditFrequencies, AuditStatus, BaselineRow, ComparisonRow, MetricsReport};
use aes_imc_core::{block_to_hex, encrypt_block, parse_block_hex, AggregateReport, BankFarm, Block, MicroOpEvent, ParallelismConfig};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub mod cli;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Mismatch(String),
    #[error("{path}:{line}: {msg}")]
    Input { path: String, line: usize, msg: String },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Mismatch(_) => 1,
            CliError::Input { .. } => 2,
            CliError::Config(_) | CliError::Io(_) => 3,
        }
    }

    fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn sha256_hex(bytes: &[u8], digits: usize) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(2 * digest.len());
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s.truncate(digits);
    s
}

/// Parses one block per non-blank line. `path` is only used in messages.
pub fn parse_hex_lines(text: &str, path: &str) -> Result<Vec<Block>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_block_hex(l.trim()).map_err(|e| CliError::Input {
                path: path.into(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn parse_key(text: &str, path: &str) -> Result<Block> {
    let keys = parse_hex_lines(text, path)?;
    match keys.as_slice() {
        [k] => Ok(*k),
        _ => Err(CliError::Input {
            path: path.into(),
            line: 1,
            msg: format!("expected exactly one key line, found {}", keys.len()),
        }),
    }
}

/// `n` seeded (plaintext, key) pairs.
pub fn random_pairs(seed: u64, n: usize) -> Vec<(Block, Block)> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut block = || {
        let mut b = [0u8; 16];
        b[..8].copy_from_slice(&rng.next_u64().to_be_bytes());
        b[8..].copy_from_slice(&rng.next_u64().to_be_bytes());
        b
    };
    (0..n).map(|_| (block(), block())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockStat {
    pub index: usize,
    pub cycles: u64,
    #[serde(rename = "energy_pJ")]
    pub energy_pj: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncryptOutput {
    pub ciphertexts: Vec<Block>,
    pub per_block: Vec<BlockStat>,
    pub report: AggregateReport,
    pub trace: Vec<MicroOpEvent>,
}

impl EncryptOutput {
    pub fn ciphertext_text(&self) -> String {
        self.ciphertexts.iter().map(|c| block_to_hex(c) + "\n").collect()
    }
}

pub fn trace_jsonl(events: &[MicroOpEvent]) -> String {
    events
        .iter()
        .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
        .collect()
}

/// Encrypts every plaintext under `key` across the configured banks.
pub fn cmd_encrypt(cfg: &RunConfig, plaintexts: &[Block], key: &Block, trace: bool) -> Result<EncryptOutput> {
    let pipeline = cfg.pipeline().map_err(CliError::config)?;
    let farm = BankFarm::new(cfg.banks).map_err(CliError::config)?;
    let blocks: Vec<_> = plaintexts.iter().map(|pt| (*pt, *key)).collect();
    let run = pipeline.run_banked(&farm, &blocks, trace).map_err(CliError::config)?;
    let per_block_energy = run.report.energy_per_block_pj;
    let per_block = (0..blocks.len())
        .map(|index| BlockStat {
            index,
            cycles: pipeline.block_latency(),
            energy_pj: per_block_energy,
        })
        .collect();
    Ok(EncryptOutput {
        ciphertexts: run.ciphertexts,
        per_block,
        report: run.report,
        trace: run.trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub index: usize,
    pub plaintext: String,
    pub key: String,
    pub expected: String,
    pub simulated: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub blocks: u64,
    pub seed: u64,
    pub mismatches: u64,
    pub first_mismatch: Option<Mismatch>,
    pub ciphertext_digest: String,
    pub aggregate: AggregateReport,
    pub report_hash: String,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

/// Runs `n` seeded random blocks through the datapath and the reference
/// cipher and compares them.
pub fn cmd_verify(cfg: &RunConfig, n: usize, seed: u64) -> Result<VerifyReport> {
    if n == 0 {
        return Err(CliError::Config("block count must be at least 1".into()));
    }
    let pipeline = cfg.pipeline().map_err(CliError::config)?;
    let farm = BankFarm::new(cfg.banks).map_err(CliError::config)?;
    let pairs = random_pairs(seed, n);
    let run = pipeline.run_banked(&farm, &pairs, false).map_err(CliError::config)?;
    let expected: Vec<Block> = pairs.par_iter().map(|(pt, key)| encrypt_block(pt, key)).collect();
    let bad: Vec<usize> = (0..n).filter(|&i| expected[i] != run.ciphertexts[i]).collect();
    let first_mismatch = bad.first().map(|&i| Mismatch {
        index: i,
        plaintext: block_to_hex(&pairs[i].0),
        key: block_to_hex(&pairs[i].1),
        expected: block_to_hex(&expected[i]),
        simulated: block_to_hex(&run.ciphertexts[i]),
    });
    let mut report = VerifyReport {
        blocks: n as u64,
        seed,
        mismatches: bad.len() as u64,
        first_mismatch,
        ciphertext_digest: sha256_hex(&run.ciphertexts.concat(), 64),
        aggregate: run.report,
        report_hash: String::new(),
    };
    report.report_hash = sha256_hex(serde_json::to_string(&report).expect("report serializes").as_bytes(), 16);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsOutput {
    pub latency: u64,
    pub report: MetricsReport,
    pub regenerated: Vec<BaselineRow>,
    pub audit: Vec<AuditEntry>,
    pub comparison: Vec<ComparisonRow>,
    pub config_hash: String,
}

impl MetricsOutput {
    pub fn audit_lines(&self) -> String {
        let mut s = String::new();
        for e in &self.audit {
            let derived = e.derived.map_or("-".to_string(), |d| format!("{d:.6}"));
            let err = e.rel_err.map_or("-".to_string(), |r| format!("{:.3}%", 100.0 * r));
            let _ = writeln!(
                s,
                "{:<13} table {:<3} {:<26} {:<28} {:<13} published {:<10} derived {:<14} err {}",
                e.status,
                e.table,
                e.work_label,
                e.device,
                e.column,
                e.published,
                derived,
                err
            );
        }
        s
    }

    pub fn flagged(&self) -> impl Iterator<Item = &AuditEntry> {
        self.audit.iter().filter(|e| e.status == AuditStatus::Flagged)
    }

    /// Full text report: regenerated rows, audit, comparison.
    pub fn render(&self, include_comparison: bool) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# config {} latency {} cycles", self.config_hash, self.latency);
        let _ = writeln!(
            s,
            "# Thr {:.2} Mbps, Thr/SLC {:.4} Mbps, Thr* {:.2} Mbps, E {:.4} uJ, E/bit {:.4} nJ, DPR {:.2} GB/s",
            self.report.thr_bps / 1e6,
            self.report.thr_per_slc / 1e6,
            self.report.thr_star_bps / 1e6,
            self.report.energy_j * 1e6,
            self.report.energy_per_bit_j * 1e9,
            self.report.dpr_bps / 1e9
        );
        s += "# regenerated rows\n";
        s += &metrics::write_rows_csv(&self.regenerated);
        s += "# audit\n";
        s += &self.audit_lines();
        if include_comparison {
            s += "# comparison\n";
            s += &metrics::write_comparison_csv(&self.comparison);
        }
        s
    }
}

pub fn cmd_metrics(cfg: &RunConfig, baselines_csv: &str) -> Result<MetricsOutput> {
    let pipeline = cfg.pipeline().map_err(CliError::config)?;
    let latency = pipeline.block_latency();
    let input = cfg.metrics_input(latency);
    let report = metrics::build_report(&input).map_err(CliError::config)?;
    let baselines = metrics::parse_baselines(baselines_csv).map_err(CliError::config)?;
    let freqs = AuditFrequencies {
        f_rf_hz: input.f_rf_hz,
        f_uniform_hz: input.f_uniform_hz,
    };
    let hash = cfg.hash();
    Ok(MetricsOutput {
        latency,
        report,
        regenerated: ["I", "II", "III", "IV"]
            .iter()
            .map(|t| BaselineRow::from_report(&report, &input, t))
            .collect(),
        audit: metrics::audit(&baselines, freqs),
        comparison: metrics::compare_against_baselines(&report, &baselines, &hash),
        config_hash: hash,
    })
}

/// Inclusive integer range written `a..b`, a single value, or a
/// comma-separated list.
pub fn parse_knob(text: &str, name: &str) -> Result<Vec<usize>> {
    let bad = || CliError::Config(format!("invalid {name} range {text:?}"));
    let values: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        RangeInclusive::new(a, b).collect()
    } else {
        text.split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(bad());
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub sbox_units: usize,
    pub m2_units: usize,
    pub banks: usize,
    pub sbox_batches_per_row: usize,
    pub m2_batches_per_row: usize,
    pub cycles_per_block: u64,
    pub cycles_total: u64,
    #[serde(rename = "energy_per_block_pJ")]
    pub energy_per_block_pj: f64,
    pub thr_mbps: f64,
    pub e_per_bit_nj: f64,
    pub config_hash: String,
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::new();
    out += "sbox_units,m2_units,banks,sbox_batches_per_row,m2_batches_per_row,cycles_per_block,cycles_total,energy_per_block_pJ,thr_Mbps,e_per_bit_nJ,config_hash\n";
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.sbox_units,
            p.m2_units,
            p.banks,
            p.sbox_batches_per_row,
            p.m2_batches_per_row,
            p.cycles_per_block,
            p.cycles_total,
            p.energy_per_block_pj,
            p.thr_mbps,
            p.e_per_bit_nj,
            p.config_hash
        );
    }
    out
}

/// Every combination of the knob values, in row-major order of
/// (sbox_units, m2_units, banks). Each point runs `blocks` seeded blocks.
pub fn cmd_sweep(cfg: &RunConfig, sbox: &[usize], m2: &[usize], banks: &[usize], blocks: usize) -> Result<Vec<SweepPoint>> {
    if blocks == 0 {
        return Err(CliError::Config("block count must be at least 1".into()));
    }
    let pairs = random_pairs(cfg.seed, blocks);
    let mut grid = Vec::new();
    for &s in sbox {
        for &m in m2 {
            for &b in banks {
                grid.push((s, m, b));
            }
        }
    }
    grid.par_iter()
        .map(|&(s, m, b)| {
            let mut point_cfg = cfg.clone();
            point_cfg.sim.parallelism = ParallelismConfig { sbox_units: s, m2_units: m };
            point_cfg.banks = b;
            let pipeline = point_cfg.pipeline().map_err(CliError::config)?;
            let run = pipeline
                .run_banked(&BankFarm::new(b).map_err(CliError::config)?, &pairs, false)
                .map_err(CliError::config)?;
            for ((pt, key), ct) in pairs.iter().zip(&run.ciphertexts) {
                if *ct != encrypt_block(pt, key) {
                    return Err(CliError::Mismatch(format!(
                        "sbox_units={s} m2_units={m} banks={b}: wrong ciphertext for {}",
                        block_to_hex(pt)
                    )));
                }
            }
            let report = metrics::build_report(&point_cfg.metrics_input(pipeline.block_latency())).map_err(CliError::config)?;
            let bpr = point_cfg.sim.layout.bytes_per_row;
            Ok(SweepPoint {
                sbox_units: s,
                m2_units: m,
                banks: b,
                sbox_batches_per_row: point_cfg.sim.parallelism.sbox_batches(bpr),
                m2_batches_per_row: point_cfg.sim.parallelism.m2_batches(bpr),
                cycles_per_block: pipeline.block_latency(),
                cycles_total: run.report.cycles_total,
                energy_per_block_pj: run.report.energy_per_block_pj,
                thr_mbps: report.thr_bps / 1e6,
                e_per_bit_nj: report.energy_per_bit_j * 1e9,
                config_hash: point_cfg.hash(),
            })
        })
        .collect()
}
