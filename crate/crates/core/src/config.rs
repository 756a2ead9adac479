//! Run configuration: flat `key = value` text with dotted section names.
//!
//! ```text
//! # comment
//! geometry.rows = 16
//! cost.preset = calibrated
//! cost.sbox_eval.cycles = 1
//! ```
//!
//! Every key is optional; omitted keys take the calibrated defaults. The
//! config hash covers the fully expanded canonical form, so it does not
//! depend on key order, comments or whether a default was spelled out.
//! Output paths are excluded from the hash.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::crossbar::{CostTable, OpCost, OpKind};
use crate::metrics::MetricsInput;
use crate::pipeline::{Pipeline, PipelineError, SimConfig, StageBudgets};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("{key}: {msg}")]
    Value { key: String, msg: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Platform figures that are measured rather than simulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlatformConfig {
    pub f_max_hz: f64,
    pub f_rf_hz: f64,
    pub f_uniform_hz: f64,
    pub slices: u64,
    pub power_w: f64,
    pub ciphers: u64,
    pub bytes_per_cipher: u64,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        let m = MetricsInput::aes_imc(1);
        PlatformConfig {
            f_max_hz: m.f_max_hz,
            f_rf_hz: m.f_rf_hz,
            f_uniform_hz: m.f_uniform_hz,
            slices: m.slices,
            power_w: m.power_w,
            ciphers: m.ciphers,
            bytes_per_cipher: m.bytes_per_cipher,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub platform: PlatformConfig,
    pub banks: usize,
    pub seed: u64,
    pub trace_path: Option<PathBuf>,
    pub out_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sim: SimConfig::default(),
            platform: PlatformConfig::default(),
            banks: 1,
            seed: 0,
            trace_path: None,
            out_path: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        msg: format!("cannot parse {v:?}"),
    })
}

fn parse_rows(key: &str, v: &str) -> Result<[usize; 4]> {
    let parts: Vec<usize> = v
        .split(',')
        .map(|p| parse_value(key, p.trim()))
        .collect::<Result<_>>()?;
    parts.try_into().map_err(|p: Vec<usize>| ConfigError::Value {
        key: key.into(),
        msg: format!("expected 4 rows, got {}", p.len()),
    })
}

fn join(rows: &[usize]) -> String {
    rows.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected key = value, got {content:?}"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    msg: "empty key".into(),
                });
            }
            if entries.insert(k.to_string(), (line, v.to_string())).is_some() {
                return Err(ConfigError::DuplicateKey { line, key: k.into() });
            }
        }
        Self::from_entries(entries)
    }

    fn from_entries(entries: BTreeMap<String, (usize, String)>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut cost_preset = "calibrated".to_string();
        let mut cost_overrides: Vec<(String, OpKind, bool, String)> = Vec::new();
        let mut scratch_explicit = false;

        for (key, (line, v)) in &entries {
            let key = key.as_str();
            let sim = &mut cfg.sim;
            match key {
                "geometry.rows" => sim.rows = parse_value(key, v)?,
                "geometry.cols" => sim.cols = parse_value(key, v)?,
                "layout.data_rows" => sim.layout.data_rows = parse_rows(key, v)?,
                "layout.key_rows" => sim.layout.key_rows = parse_rows(key, v)?,
                "layout.m2_rows" => sim.layout.m2_rows = parse_rows(key, v)?,
                "layout.t_row" => sim.layout.t_row = parse_value(key, v)?,
                "layout.bytes_per_row" => sim.layout.bytes_per_row = parse_value(key, v)?,
                "layout.scratch_rows" => {
                    scratch_explicit = true;
                    sim.layout.scratch_rows = if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split(',').map(|p| parse_value(key, p.trim())).collect::<Result<_>>()?
                    };
                }
                "parallelism.sbox_units" => sim.parallelism.sbox_units = parse_value(key, v)?,
                "parallelism.m2_units" => sim.parallelism.m2_units = parse_value(key, v)?,
                "cost.preset" => cost_preset = v.clone(),
                "schedule.preset" => {
                    if schedule_preset(v).is_none() {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            msg: format!("unknown schedule preset {v:?}"),
                        });
                    }
                }
                "pipeline.port_cycles" => sim.port_cycles = parse_value(key, v)?,
                "pipeline.initiation_interval" => sim.initiation_interval = Some(parse_value(key, v)?),
                "freq.f_max_hz" => cfg.platform.f_max_hz = parse_value(key, v)?,
                "freq.f_rf_hz" => cfg.platform.f_rf_hz = parse_value(key, v)?,
                "freq.f_uniform_hz" => cfg.platform.f_uniform_hz = parse_value(key, v)?,
                "platform.slices" => cfg.platform.slices = parse_value(key, v)?,
                "platform.power_w" => cfg.platform.power_w = parse_value(key, v)?,
                "platform.ciphers" => cfg.platform.ciphers = parse_value(key, v)?,
                "platform.bytes_per_cipher" => cfg.platform.bytes_per_cipher = parse_value(key, v)?,
                "banks" => cfg.banks = parse_value(key, v)?,
                "seed" => cfg.seed = parse_value(key, v)?,
                "output.trace" => cfg.trace_path = Some(PathBuf::from(v)),
                "output.out" => cfg.out_path = Some(PathBuf::from(v)),
                _ => {
                    if let Some(stage) = key.strip_prefix("schedule.") {
                        let budget = parse_value(key, v)?;
                        if !sim.budgets.set(stage, budget) {
                            return Err(ConfigError::UnknownKey { line: *line, key: key.into() });
                        }
                    } else if let Some(rest) = key.strip_prefix("cost.") {
                        let (kind, field) = rest
                            .rsplit_once('.')
                            .and_then(|(k, f)| Some((OpKind::from_config_name(k)?, f)))
                            .filter(|(_, f)| matches!(*f, "cycles" | "energy_pj"))
                            .ok_or_else(|| ConfigError::UnknownKey { line: *line, key: key.into() })?;
                        cost_overrides.push((key.to_string(), kind, field == "cycles", v.clone()));
                    } else {
                        return Err(ConfigError::UnknownKey { line: *line, key: key.into() });
                    }
                }
            }
        }

        let mut cost = match cost_preset.as_str() {
            "calibrated" | "custom" => CostTable::calibrated(),
            "zero" => CostTable::zero(),
            other => {
                return Err(ConfigError::Value {
                    key: "cost.preset".into(),
                    msg: format!("unknown cost preset {other:?}"),
                })
            }
        };
        if cost_preset == "custom" && cost_overrides.len() != 2 * OpKind::COSTED.len() {
            return Err(ConfigError::Value {
                key: "cost.preset".into(),
                msg: format!(
                    "custom cost table needs cycles and energy_pj for all {} op kinds",
                    OpKind::COSTED.len()
                ),
            });
        }
        for (key, kind, is_cycles, v) in cost_overrides {
            let mut c: OpCost = cost.get(kind);
            if is_cycles {
                c.cycles = parse_value(&key, &v)?;
            } else {
                c.energy_pj = parse_value(&key, &v)?;
            }
            cost.set(kind, c).map_err(|e| ConfigError::Value { key, msg: e.to_string() })?;
        }
        cfg.sim.cost = cost;

        if !scratch_explicit {
            cfg.sim.layout = cfg.sim.layout.clone().with_derived_scratch(cfg.sim.rows);
        }
        if cfg.banks == 0 {
            return Err(ConfigError::Value {
                key: "banks".into(),
                msg: "must be at least 1".into(),
            });
        }
        cfg.metrics_input(1).validate().map_err(|e| ConfigError::Value {
            key: "platform".into(),
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Sorted `key=value` lines of every setting that affects results.
    /// Parsing this text back yields the same configuration.
    pub fn canonical(&self) -> String {
        let s = &self.sim;
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            kv.insert(k.to_string(), v);
        };
        put("geometry.rows", s.rows.to_string());
        put("geometry.cols", s.cols.to_string());
        put("layout.data_rows", join(&s.layout.data_rows));
        put("layout.key_rows", join(&s.layout.key_rows));
        put("layout.m2_rows", join(&s.layout.m2_rows));
        put("layout.t_row", s.layout.t_row.to_string());
        put("layout.scratch_rows", join(&s.layout.scratch_rows));
        put("layout.bytes_per_row", s.layout.bytes_per_row.to_string());
        put("parallelism.sbox_units", s.parallelism.sbox_units.to_string());
        put("parallelism.m2_units", s.parallelism.m2_units.to_string());
        put("cost.preset", "custom".into());
        for (kind, c) in s.cost.iter() {
            put(&format!("cost.{}.cycles", kind.config_name()), c.cycles.to_string());
            put(&format!("cost.{}.energy_pj", kind.config_name()), format!("{:?}", c.energy_pj));
        }
        for (name, v) in s.budgets.fields() {
            put(&format!("schedule.{name}"), v.to_string());
        }
        put("pipeline.port_cycles", s.port_cycles.to_string());
        if let Some(ii) = s.initiation_interval {
            put("pipeline.initiation_interval", ii.to_string());
        }
        let p = &self.platform;
        put("freq.f_max_hz", format!("{:?}", p.f_max_hz));
        put("freq.f_rf_hz", format!("{:?}", p.f_rf_hz));
        put("freq.f_uniform_hz", format!("{:?}", p.f_uniform_hz));
        put("platform.slices", p.slices.to_string());
        put("platform.power_w", format!("{:?}", p.power_w));
        put("platform.ciphers", p.ciphers.to_string());
        put("platform.bytes_per_cipher", p.bytes_per_cipher.to_string());
        put("banks", self.banks.to_string());
        put("seed", self.seed.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        Ok(Pipeline::with_hash(self.sim.clone(), self.hash())?)
    }

    pub fn metrics_input(&self, latency_cycles: u64) -> MetricsInput {
        let p = &self.platform;
        MetricsInput {
            f_max_hz: p.f_max_hz,
            f_rf_hz: p.f_rf_hz,
            f_uniform_hz: p.f_uniform_hz,
            block_size_bits: crate::metrics::BLOCK_BITS,
            latency_cycles,
            slices: p.slices,
            power_w: p.power_w,
            ciphers: p.ciphers,
            bytes_per_cipher: p.bytes_per_cipher,
        }
    }
}

/// Budgets named by a schedule preset.
pub fn schedule_preset(name: &str) -> Option<StageBudgets> {
    (name == "calibrated").then(StageBudgets::calibrated)
}
