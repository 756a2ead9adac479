//! Round scheduling across the two lanes of a block and across banks.
//!
//! A block runs as a fixed sequence of stages. Each stage occupies
//! `max(budget, slowest lane's summed op latency)` cycles, so the stage
//! budgets act as a floor: with zero-latency costs the schedule alone sets
//! the timing, and with latency-bound costs the micro-ops do.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aes::{Block, NR};
use crate::crossbar::{CostTable, MicroOpEvent, OpCounts, OpKind};
use crate::sequencer::{KeyGenerator, LaneLayout, LanePair, ParallelismConfig, SequencerError, LANES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("inconsistent configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sequencer(#[from] SequencerError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "phase")]
pub enum Phase {
    Load,
    InitialAddRoundKey,
    /// SubBytes with ShiftRows fused into the write-back.
    SubShift { round: u8 },
    /// MixColumns, round-key update and AddRoundKey (rounds 1–9).
    MixKey { round: u8 },
    /// Round-key update and AddRoundKey of the last round.
    FinalKey,
    /// Ciphertext readout.
    Drain,
}

/// Minimum cycles granted to each kind of stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StageBudgets {
    pub load: u64,
    pub initial_ark: u64,
    pub sub_shift: u64,
    pub mix_key: u64,
    pub final_sub_shift: u64,
    pub final_key: u64,
    pub drain: u64,
}

impl StageBudgets {
    /// 1 load + 1 initial ARK + 9×2 + 2 for the last round + 4 drain = 26.
    pub fn calibrated() -> Self {
        StageBudgets {
            load: 1,
            initial_ark: 1,
            sub_shift: 1,
            mix_key: 1,
            final_sub_shift: 1,
            final_key: 1,
            drain: 4,
        }
    }

    pub fn budget(&self, phase: Phase) -> u64 {
        match phase {
            Phase::Load => self.load,
            Phase::InitialAddRoundKey => self.initial_ark,
            Phase::SubShift { round } if round as usize == NR => self.final_sub_shift,
            Phase::SubShift { .. } => self.sub_shift,
            Phase::MixKey { .. } => self.mix_key,
            Phase::FinalKey => self.final_key,
            Phase::Drain => self.drain,
        }
    }

    pub fn fields(&self) -> [(&'static str, u64); 7] {
        [
            ("load", self.load),
            ("initial_ark", self.initial_ark),
            ("sub_shift", self.sub_shift),
            ("mix_key", self.mix_key),
            ("final_sub_shift", self.final_sub_shift),
            ("final_key", self.final_key),
            ("drain", self.drain),
        ]
    }

    pub fn set(&mut self, name: &str, v: u64) -> bool {
        let slot = match name {
            "load" => &mut self.load,
            "initial_ark" => &mut self.initial_ark,
            "sub_shift" => &mut self.sub_shift,
            "mix_key" => &mut self.mix_key,
            "final_sub_shift" => &mut self.final_sub_shift,
            "final_key" => &mut self.final_key,
            "drain" => &mut self.drain,
            _ => return false,
        };
        *slot = v;
        true
    }
}

impl Default for StageBudgets {
    fn default() -> Self {
        StageBudgets::calibrated()
    }
}

/// Stage order of one AES-128 block.
pub fn block_phases() -> Vec<Phase> {
    let mut v = vec![Phase::Load, Phase::InitialAddRoundKey];
    for round in 1..NR as u8 {
        v.push(Phase::SubShift { round });
        v.push(Phase::MixKey { round });
    }
    v.push(Phase::SubShift { round: NR as u8 });
    v.push(Phase::FinalKey);
    v.push(Phase::Drain);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub phase: Phase,
    pub lanes: [bool; LANES],
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub stages: Vec<Stage>,
}

impl Schedule {
    /// The budget floors alone, before any op latency is considered.
    pub fn from_budgets(b: &StageBudgets) -> Result<Self> {
        if let Some((name, _)) = b.fields().into_iter().find(|&(_, v)| v == 0) {
            return Err(PipelineError::Config(format!("stage budget {name} must be at least 1")));
        }
        Ok(Schedule {
            stages: block_phases()
                .into_iter()
                .map(|phase| Stage {
                    phase,
                    lanes: [true; LANES],
                    cycles: b.budget(phase),
                })
                .collect(),
        })
    }

    pub fn total_cycles_per_block(&self) -> u64 {
        self.stages.iter().map(|s| s.cycles).sum()
    }
}

/// Everything that determines simulated timing, energy and results.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub rows: usize,
    pub cols: usize,
    pub layout: LaneLayout,
    pub parallelism: ParallelismConfig,
    pub cost: CostTable,
    pub budgets: StageBudgets,
    /// Extra cycles per nibble crossing the lane port.
    pub port_cycles: u64,
    /// Cycles between successive block starts on one bank; `None` means
    /// no overlap (one block latency).
    pub initiation_interval: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rows: 16,
            cols: 16,
            layout: LaneLayout::default(),
            parallelism: ParallelismConfig::default(),
            cost: CostTable::calibrated(),
            budgets: StageBudgets::calibrated(),
            port_cycles: 0,
            initiation_interval: None,
        }
    }
}

/// Outcome of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRun {
    pub ciphertext: Block,
    pub cycles: u64,
    pub energy_pj: f64,
    pub counts: OpCounts,
    pub stage_cycles: Vec<u64>,
    /// Empty unless tracing was requested.
    pub trace: Vec<MicroOpEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub blocks: u64,
    /// Wall-clock cycles from the first block start to the last completion.
    pub cycles_total: u64,
    #[serde(rename = "energy_pJ_total")]
    pub energy_pj_total: f64,
    /// Single-block latency.
    pub cycles_per_block: u64,
    #[serde(rename = "energy_per_block_pJ")]
    pub energy_per_block_pj: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRun {
    pub ciphertexts: Vec<Block>,
    pub report: AggregateReport,
    pub counts: OpCounts,
    pub trace: Vec<MicroOpEvent>,
}

/// A set of identically configured banks fed by one key generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankFarm {
    banks: usize,
}

impl BankFarm {
    pub fn new(banks: usize) -> Result<Self> {
        if banks == 0 {
            return Err(PipelineError::Config("bank count must be at least 1".into()));
        }
        Ok(BankFarm { banks })
    }

    pub fn banks(&self) -> usize {
        self.banks
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    config: SimConfig,
    schedule: Schedule,
    initiation_interval: u64,
    config_hash: String,
}

/// Indexed ciphertexts, op counts and trace produced by one bank.
type BankOutput = (Vec<(usize, Block)>, OpCounts, Vec<MicroOpEvent>);

impl Pipeline {
    pub fn new(config: SimConfig) -> Result<Self> {
        Self::with_hash(config, String::new())
    }

    /// Builds the pipeline and resolves the schedule against the cost table
    /// with a dry run (op sequences do not depend on data).
    pub fn with_hash(config: SimConfig, config_hash: String) -> Result<Self> {
        Schedule::from_budgets(&config.budgets)?;
        let mut probe = Pipeline {
            config,
            schedule: Schedule { stages: Vec::new() },
            initiation_interval: 0,
            config_hash,
        };
        let dry = probe.run_block(&[0; 16], &[0; 16])?;
        probe.schedule = Schedule {
            stages: block_phases()
                .into_iter()
                .zip(&dry.stage_cycles)
                .map(|(phase, &cycles)| Stage {
                    phase,
                    lanes: [true; LANES],
                    cycles,
                })
                .collect(),
        };
        let latency = probe.schedule.total_cycles_per_block();
        probe.initiation_interval = match probe.config.initiation_interval {
            None => latency,
            Some(ii) if (1..=latency).contains(&ii) => ii,
            Some(ii) => {
                return Err(PipelineError::Config(format!(
                    "initiation interval {ii} outside 1..={latency}"
                )))
            }
        };
        Ok(probe)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Stage durations after applying op latencies to the budget floors.
    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn block_latency(&self) -> u64 {
        self.schedule.total_cycles_per_block()
    }

    pub fn initiation_interval(&self) -> u64 {
        self.initiation_interval
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn new_pair(&self, bank: u32, trace: bool) -> Result<LanePair> {
        let c = &self.config;
        let mut pair = LanePair::new(
            c.rows,
            c.cols,
            c.cost,
            c.layout.clone(),
            c.parallelism,
            c.port_cycles,
            bank,
        )?;
        pair.set_tracing(trace);
        Ok(pair)
    }

    pub fn run_block(&self, pt: &Block, key: &Block) -> Result<BlockRun> {
        self.run_block_with(pt, key, false)
    }

    pub fn run_block_traced(&self, pt: &Block, key: &Block) -> Result<BlockRun> {
        self.run_block_with(pt, key, true)
    }

    fn run_block_with(&self, pt: &Block, key: &Block, trace: bool) -> Result<BlockRun> {
        let mut pair = self.new_pair(0, trace)?;
        let keygen = KeyGenerator::new(key);
        self.execute(&mut pair, &keygen, pt)
    }

    /// Runs one block on `pair`, whose lanes must be idle. Clocks and
    /// counters restart at zero.
    fn execute(&self, pair: &mut LanePair, keygen: &KeyGenerator, pt: &Block) -> Result<BlockRun> {
        for lane in pair.lanes_mut().iter_mut() {
            lane.reset_clock();
            lane.reset_counts();
        }
        let budgets = &self.config.budgets;
        let mut stage_cycles = Vec::with_capacity(2 * NR + 3);
        let mut stage = |pair: &mut LanePair, phase: Phase, body: &mut dyn FnMut(&mut LanePair) -> Result<()>| -> Result<()> {
            let start = pair.clock();
            body(pair)?;
            let end = pair.clock().max(start + budgets.budget(phase));
            pair.lanes_mut().iter_mut().for_each(|l| l.barrier(end));
            stage_cycles.push(end - start);
            Ok(())
        };

        let key = keygen.cipher_key();
        stage(pair, Phase::Load, &mut |p| Ok(p.load_block(pt, &key)?))?;
        stage(pair, Phase::InitialAddRoundKey, &mut |p| Ok(p.add_round_key()?))?;
        for round in 1..NR {
            stage(pair, Phase::SubShift { round: round as u8 }, &mut |p| {
                Ok(p.sub_bytes_shift_rows()?)
            })?;
            stage(pair, Phase::MixKey { round: round as u8 }, &mut |p| {
                p.mix_columns()?;
                p.key_round_update(keygen, round)?;
                Ok(p.add_round_key()?)
            })?;
        }
        stage(pair, Phase::SubShift { round: NR as u8 }, &mut |p| Ok(p.sub_bytes_shift_rows()?))?;
        stage(pair, Phase::FinalKey, &mut |p| {
            p.key_round_update(keygen, NR)?;
            p.add_round_key()?;
            p.finish();
            Ok(())
        })?;
        let mut ciphertext = [0u8; 16];
        stage(pair, Phase::Drain, &mut |p| {
            ciphertext = p.readout_block()?;
            Ok(())
        })?;

        let mut counts = OpCounts::default();
        for lane in pair.lanes() {
            counts.add(&lane.counts());
        }
        let mut trace: Vec<MicroOpEvent> = pair.lanes_mut().iter_mut().flat_map(|l| l.take_trace()).collect();
        trace.sort_by_key(|e| (e.cycle, e.lane));
        Ok(BlockRun {
            ciphertext,
            cycles: stage_cycles.iter().sum(),
            energy_pj: counts.energy_pj(&self.config.cost),
            counts,
            stage_cycles,
            trace,
        })
    }

    /// Back-to-back blocks on a single bank.
    pub fn run_stream(&self, blocks: &[(Block, Block)]) -> Result<StreamRun> {
        self.run_banked(&BankFarm { banks: 1 }, blocks, false)
    }

    /// Round-robin distribution of `blocks` over the farm's banks. Banks run
    /// on parallel workers; results are reduced in bank order.
    pub fn run_banked(&self, farm: &BankFarm, blocks: &[(Block, Block)], trace: bool) -> Result<StreamRun> {
        let mut keygens: HashMap<Block, KeyGenerator> = HashMap::new();
        for (_, key) in blocks {
            keygens.entry(*key).or_insert_with(|| KeyGenerator::new(key));
        }
        let ii = self.initiation_interval;
        let per_bank: Vec<Result<BankOutput>> = (0..farm.banks)
            .into_par_iter()
            .map(|bank| {
                let mut pair = self.new_pair(bank as u32, trace)?;
                let mut out = Vec::new();
                let mut counts = OpCounts::default();
                let mut events = Vec::new();
                for (slot, idx) in (bank..blocks.len()).step_by(farm.banks).enumerate() {
                    let (pt, key) = &blocks[idx];
                    let run = self.execute(&mut pair, &keygens[key], pt)?;
                    counts.add(&run.counts);
                    let offset = slot as u64 * ii;
                    events.extend(run.trace.into_iter().map(|mut e| {
                        e.cycle += offset;
                        e
                    }));
                    out.push((idx, run.ciphertext));
                }
                Ok((out, counts, events))
            })
            .collect();

        let mut ciphertexts = vec![[0u8; 16]; blocks.len()];
        let mut counts = OpCounts::default();
        let mut trace_out = Vec::new();
        for bank in per_bank {
            let (cts, c, ev) = bank?;
            for (idx, ct) in cts {
                ciphertexts[idx] = ct;
            }
            counts.add(&c);
            trace_out.extend(ev);
        }
        let n = blocks.len() as u64;
        let waves = n.div_ceil(farm.banks as u64);
        let cycles_total = if n == 0 { 0 } else { self.block_latency() + (waves - 1) * ii };
        let energy = counts.energy_pj(&self.config.cost);
        Ok(StreamRun {
            ciphertexts,
            report: AggregateReport {
                blocks: n,
                cycles_total,
                energy_pj_total: energy,
                cycles_per_block: self.block_latency(),
                energy_per_block_pj: if n == 0 { 0.0 } else { energy / n as f64 },
                config_hash: self.config_hash.clone(),
            },
            counts,
            trace: trace_out,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("event {index} on bank {bank} lane {lane} starts at {cycle} before the lane is free at {free}")]
    Overlap {
        index: usize,
        bank: u32,
        lane: u8,
        cycle: u64,
        free: u64,
    },
}

/// Recomputes a block's completion cycle from its trace alone: checks that
/// no lane starts an op before its previous op finished and returns the
/// latest finish time.
pub fn replay_completion(events: &[MicroOpEvent], cost: &CostTable, port_cycles: u64) -> std::result::Result<u64, ReplayError> {
    let mut free: HashMap<(u32, u8), u64> = HashMap::new();
    let mut done = 0;
    let mut ordered: Vec<(usize, &MicroOpEvent)> = events.iter().enumerate().collect();
    ordered.sort_by_key(|(i, e)| (e.bank, e.lane, e.cycle, *i));
    for (index, e) in ordered {
        let mut latency = cost.latency(e.op);
        if e.op == OpKind::OffsetWrite && e.dst_lane.is_some_and(|d| d != e.lane) {
            latency += port_cycles;
        }
        let slot = free.entry((e.bank, e.lane)).or_insert(0);
        if e.cycle < *slot {
            return Err(ReplayError::Overlap {
                index,
                bank: e.bank,
                lane: e.lane,
                cycle: e.cycle,
                free: *slot,
            });
        }
        *slot = e.cycle + latency;
        done = done.max(*slot);
    }
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::{encrypt_block, parse_block_hex};

    fn h(s: &str) -> Block {
        parse_block_hex(s).unwrap()
    }

    #[test]
    fn default_budgets_total_26() {
        let s = Schedule::from_budgets(&StageBudgets::calibrated()).unwrap();
        assert_eq!(s.stages.len(), 23);
        assert_eq!(s.total_cycles_per_block(), 26);
    }

    #[test]
    fn zero_budget_is_config_error() {
        let mut b = StageBudgets::calibrated();
        b.drain = 0;
        assert!(matches!(Schedule::from_budgets(&b), Err(PipelineError::Config(_))));
    }

    #[test]
    fn fips_block_default_preset() {
        let p = Pipeline::new(SimConfig::default()).unwrap();
        let run = p.run_block(&h("3243f6a8885a308d313198a2e0370734"), &h("2b7e151628aed2a6abf7158809cf4f3c")).unwrap();
        assert_eq!(run.ciphertext, h("3925841d02dc09fbdc118597196a0b32"));
        assert_eq!(run.cycles, 26);
        assert_eq!(p.block_latency(), 26);
    }

    #[test]
    fn calibrated_block_energy() {
        let p = Pipeline::new(SimConfig::default()).unwrap();
        let run = p.run_block(&[0; 16], &[0; 16]).unwrap();
        let mix: Vec<u64> = OpKind::COSTED.iter().map(|&k| run.counts.get(k)).collect();
        assert_eq!(mix, [732, 96, 358, 80, 72, 320, 366]);
        let expected_pj = 0.098 * 26.0 / 13.56e6 * 1e12;
        assert!((run.energy_pj - expected_pj).abs() < 1e-6 * expected_pj);
    }

    #[test]
    fn zero_cost_table() {
        let cfg = SimConfig {
            cost: CostTable::zero(),
            ..SimConfig::default()
        };
        let p = Pipeline::new(cfg).unwrap();
        let run = p.run_block(&[7; 16], &[9; 16]).unwrap();
        assert_eq!(run.cycles, 26);
        assert_eq!(run.energy_pj, 0.0);
        assert_eq!(run.ciphertext, encrypt_block(&[7; 16], &[9; 16]));
    }

    #[test]
    fn initiation_interval_bounds() {
        let bad = SimConfig {
            initiation_interval: Some(27),
            ..SimConfig::default()
        };
        assert!(Pipeline::new(bad).is_err());
        let zero = SimConfig {
            initiation_interval: Some(0),
            ..SimConfig::default()
        };
        assert!(Pipeline::new(zero).is_err());
    }

    #[test]
    fn bank_farm_needs_a_bank() {
        assert!(BankFarm::new(0).is_err());
        assert_eq!(BankFarm::new(3).unwrap().banks(), 3);
    }

    #[test]
    fn empty_stream() {
        let p = Pipeline::new(SimConfig::default()).unwrap();
        let r = p.run_stream(&[]).unwrap();
        assert_eq!(r.report.cycles_total, 0);
        assert!(r.ciphertexts.is_empty());
    }
}
