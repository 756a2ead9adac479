//! Cycle-level simulation of AES-128 encryption on a multi-level resistive
//! crossbar with sense-amplifier XOR, shared LUT peripherals and a two-lane
//! round pipeline, plus the throughput/energy metrics derived from it.

pub mod aes;
pub mod config;
pub mod crossbar;
pub mod gf;
pub mod metrics;
pub mod pipeline;
pub mod sequencer;

pub use config::{ConfigError, RunConfig};
pub use aes::{block_to_hex, encrypt_block, expand_key, parse_block_hex, AesState, Block, KeySchedule};
pub use crossbar::{ColMask, CostTable, CrossbarArray, CrossbarError, MicroOpEvent, OpCost, OpCounts, OpKind};
pub use gf::GfByte;
pub use pipeline::{AggregateReport, BankFarm, BlockRun, Phase, Pipeline, PipelineError, Schedule, SimConfig, Stage, StageBudgets, StreamRun};
pub use sequencer::{KeyGenerator, LaneLayout, LanePair, LaneStatus, ParallelismConfig, SequencerError};
