//! Throughput, energy and data-rate figures of merit, plus the bundled
//! baseline dataset with its regeneration audit.
//!
//! Internal units are SI (Hz, bit/s, J, byte/s). Dataset columns keep the
//! units of the published tables (MHz, Mbps, μJ, nJ, GB/s).

use std::fmt;

use serde::Serialize;

/// Baseline rows of the published comparison tables, as CSV.
pub const BUNDLED_BASELINES: &str = include_str!("../data/baselines.csv");

pub const F_RF_HZ: f64 = 13.56e6;
pub const F_UNIFORM_HZ: f64 = 30e6;
pub const BLOCK_BITS: u64 = 128;
pub const BYTES_PER_CIPHER: u64 = 16;

/// Row label used for this design in the dataset.
pub const AES_IMC_LABEL: &str = "AES-IMC";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("{0} must not be negative")]
    Negative(&'static str),
    #[error("no baseline {label:?} in table {table}")]
    UnknownBaseline { table: String, label: String },
    #[error("dataset line {line}: {msg}")]
    Dataset { line: u64, msg: String },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(MetricsError::NonPositive(name))
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(MetricsError::Negative(name))
    }
}

/// `f_max × B / L` in bit/s.
pub fn throughput(f_max_hz: f64, block_bits: u64, latency: u64) -> Result<f64> {
    positive("latency", latency as f64)?;
    positive("block size", block_bits as f64)?;
    Ok(positive("f_max", f_max_hz)? * block_bits as f64 / latency as f64)
}

pub fn throughput_per_slice(thr_bps: f64, slices: u64) -> Result<f64> {
    positive("slices", slices as f64)?;
    Ok(non_negative("throughput", thr_bps)? / slices as f64)
}

/// Throughput at the RF carrier frequency.
pub fn throughput_star(f_rf_hz: f64, block_bits: u64, latency: u64) -> Result<f64> {
    throughput(f_rf_hz, block_bits, latency).map_err(|e| match e {
        MetricsError::NonPositive("f_max") => MetricsError::NonPositive("f_rf"),
        e => e,
    })
}

/// `P × L / f` in joules.
pub fn energy_per_block(power_w: f64, latency: u64, f_hz: f64) -> Result<f64> {
    positive("latency", latency as f64)?;
    Ok(non_negative("power", power_w)? * latency as f64 / positive("frequency", f_hz)?)
}

pub fn energy_per_bit(energy_j: f64, block_bits: u64) -> Result<f64> {
    positive("block size", block_bits as f64)?;
    Ok(non_negative("energy", energy_j)? / block_bits as f64)
}

/// Encrypted bytes per second over all ciphers fitting the area budget.
pub fn data_processing_rate(ciphers: u64, f_hz: f64, bytes_per_cipher: u64, latency: u64) -> Result<f64> {
    positive("ciphers", ciphers as f64)?;
    positive("bytes per cipher", bytes_per_cipher as f64)?;
    positive("latency", latency as f64)?;
    Ok(ciphers as f64 * positive("frequency", f_hz)? * bytes_per_cipher as f64 / latency as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsInput {
    pub f_max_hz: f64,
    pub f_rf_hz: f64,
    pub f_uniform_hz: f64,
    pub block_size_bits: u64,
    pub latency_cycles: u64,
    pub slices: u64,
    pub power_w: f64,
    pub ciphers: u64,
    pub bytes_per_cipher: u64,
}

impl MetricsInput {
    /// The measured platform figures of this design with a simulated latency.
    pub fn aes_imc(latency_cycles: u64) -> Self {
        MetricsInput {
            f_max_hz: 108.9e6,
            f_rf_hz: F_RF_HZ,
            f_uniform_hz: F_UNIFORM_HZ,
            block_size_bits: BLOCK_BITS,
            latency_cycles,
            slices: 468,
            power_w: 0.098,
            ciphers: 24096,
            bytes_per_cipher: BYTES_PER_CIPHER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("f_max", self.f_max_hz)?;
        positive("f_rf", self.f_rf_hz)?;
        positive("f_uniform", self.f_uniform_hz)?;
        positive("block size", self.block_size_bits as f64)?;
        positive("latency", self.latency_cycles as f64)?;
        positive("slices", self.slices as f64)?;
        positive("power", self.power_w)?;
        positive("ciphers", self.ciphers as f64)?;
        positive("bytes per cipher", self.bytes_per_cipher as f64)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub thr_bps: f64,
    pub thr_per_slc: f64,
    pub thr_star_bps: f64,
    pub energy_j: f64,
    pub energy_per_bit_j: f64,
    /// Bytes per second.
    pub dpr_bps: f64,
}

pub fn build_report(input: &MetricsInput) -> Result<MetricsReport> {
    input.validate()?;
    let thr = throughput(input.f_max_hz, input.block_size_bits, input.latency_cycles)?;
    let energy = energy_per_block(input.power_w, input.latency_cycles, input.f_rf_hz)?;
    Ok(MetricsReport {
        thr_bps: thr,
        thr_per_slc: throughput_per_slice(thr, input.slices)?,
        thr_star_bps: throughput_star(input.f_rf_hz, input.block_size_bits, input.latency_cycles)?,
        energy_j: energy,
        energy_per_bit_j: energy_per_bit(energy, input.block_size_bits)?,
        dpr_bps: data_processing_rate(
            input.ciphers,
            input.f_uniform_hz,
            input.bytes_per_cipher,
            input.latency_cycles,
        )?,
    })
}

/// A number as printed in a table: its value and how many decimals were shown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Published {
    pub value: f64,
    pub decimals: u32,
    /// Printed with a leading `~`.
    pub approximate: bool,
}

impl Published {
    pub fn exact(value: f64) -> Self {
        Published {
            value,
            decimals: 0,
            approximate: false,
        }
    }

    fn parse(text: &str) -> std::result::Result<Option<Self>, String> {
        let t = text.trim();
        if t.is_empty() {
            return Ok(None);
        }
        let (approximate, digits) = match t.strip_prefix('~') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let value: f64 = digits.parse().map_err(|_| format!("not a number: {t:?}"))?;
        let decimals = digits.split_once('.').map_or(0, |(_, frac)| frac.len() as u32);
        Ok(Some(Published {
            value,
            decimals,
            approximate,
        }))
    }

    /// Half a unit in the last printed place.
    pub fn rounding_half_width(&self) -> f64 {
        0.5 * 10f64.powi(-(self.decimals as i32))
    }
}

impl fmt::Display for Published {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.approximate {
            f.write_str("~")?;
        }
        write!(f, "{:.*}", self.decimals as usize, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PowerUnit {
    #[serde(rename = "W")]
    Watt,
    #[serde(rename = "mW")]
    Milliwatt,
}

impl PowerUnit {
    pub fn to_watts(self, v: f64) -> f64 {
        match self {
            PowerUnit::Watt => v,
            PowerUnit::Milliwatt => v * 1e-3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            PowerUnit::Watt => "W",
            PowerUnit::Milliwatt => "mW",
        }
    }
}

/// One row of a published comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub table: String,
    pub work_label: String,
    pub device: String,
    pub state_bits: Option<Published>,
    pub key_bits: Option<Published>,
    pub ff: Option<Published>,
    pub lut: Option<Published>,
    pub slc: Option<Published>,
    pub fmax_mhz: Option<Published>,
    pub latency: Option<Published>,
    pub thr_mbps: Option<Published>,
    pub thr_per_slc: Option<Published>,
    pub thr_star_mbps: Option<Published>,
    pub power: Option<(Published, PowerUnit)>,
    pub e_uj: Option<Published>,
    pub e_per_bit_nj: Option<Published>,
    pub area_um2: Option<Published>,
    pub ciphers: Option<Published>,
    pub dpr_gbps: Option<Published>,
}

pub const DATASET_COLUMNS: [&str; 20] = [
    "table",
    "work_label",
    "device",
    "state_bits",
    "key_bits",
    "ff",
    "lut",
    "slc",
    "fmax_MHz",
    "L",
    "thr_Mbps",
    "thr_per_slc",
    "thr_star_Mbps",
    "P_value",
    "P_unit",
    "E_uJ",
    "E_per_bit_nJ",
    "area_um2",
    "ciphers",
    "dpr_GBps",
];

impl BaselineRow {
    fn empty(table: &str, label: &str, device: &str) -> Self {
        BaselineRow {
            table: table.into(),
            work_label: label.into(),
            device: device.into(),
            state_bits: None,
            key_bits: None,
            ff: None,
            lut: None,
            slc: None,
            fmax_mhz: None,
            latency: None,
            thr_mbps: None,
            thr_per_slc: None,
            thr_star_mbps: None,
            power: None,
            e_uj: None,
            e_per_bit_nj: None,
            area_um2: None,
            ciphers: None,
            dpr_gbps: None,
        }
    }

    /// A row carrying this design's figures in the units of `table`.
    pub fn from_report(report: &MetricsReport, input: &MetricsInput, table: &str) -> Self {
        let mut row = BaselineRow::empty(table, AES_IMC_LABEL, "");
        let x = Published::exact;
        row.latency = Some(x(input.latency_cycles as f64));
        match table {
            "I" => {
                row.state_bits = Some(x(input.block_size_bits as f64));
                row.slc = Some(x(input.slices as f64));
                row.fmax_mhz = Some(x(input.f_max_hz / 1e6));
                row.thr_mbps = Some(x(report.thr_bps / 1e6));
                row.thr_per_slc = Some(x(report.thr_per_slc / 1e6));
                row.thr_star_mbps = Some(x(report.thr_star_bps / 1e6));
            }
            "II" => {
                row.state_bits = Some(x(input.block_size_bits as f64));
                row.power = Some((x(input.power_w), PowerUnit::Watt));
                row.e_uj = Some(x(report.energy_j * 1e6));
                row.e_per_bit_nj = Some(x(report.energy_per_bit_j * 1e9));
            }
            "III" => {
                let thr = throughput(input.f_uniform_hz, input.block_size_bits, input.latency_cycles);
                row.fmax_mhz = Some(x(input.f_uniform_hz / 1e6));
                row.thr_mbps = thr.ok().map(|t| x(t / 1e6));
                row.power = Some((x(input.power_w), PowerUnit::Watt));
                row.e_uj = energy_per_block(input.power_w, input.latency_cycles, input.f_uniform_hz)
                    .ok()
                    .map(|e| x(e * 1e6));
            }
            _ => {
                row.ciphers = Some(x(input.ciphers as f64));
                row.dpr_gbps = Some(x(report.dpr_bps / 1e9));
            }
        }
        row
    }

    pub fn is_aes_imc(&self) -> bool {
        self.work_label == AES_IMC_LABEL
    }

    fn record(&self) -> Vec<String> {
        let full = |v: &Option<Published>| v.map(|p| format!("{}", p.value)).unwrap_or_default();
        vec![
            self.table.clone(),
            self.work_label.clone(),
            self.device.clone(),
            full(&self.state_bits),
            full(&self.key_bits),
            full(&self.ff),
            full(&self.lut),
            full(&self.slc),
            full(&self.fmax_mhz),
            full(&self.latency),
            full(&self.thr_mbps),
            full(&self.thr_per_slc),
            full(&self.thr_star_mbps),
            self.power.map(|(v, _)| format!("{}", v.value)).unwrap_or_default(),
            self.power.map(|(_, u)| u.name().to_string()).unwrap_or_default(),
            full(&self.e_uj),
            full(&self.e_per_bit_nj),
            full(&self.area_um2),
            full(&self.ciphers),
            full(&self.dpr_gbps),
        ]
    }
}

/// Parses the dataset CSV. The header must list exactly [`DATASET_COLUMNS`];
/// an empty input yields no rows.
pub fn parse_baselines(text: &str) -> Result<Vec<BaselineRow>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| MetricsError::Dataset { line: 1, msg: e.to_string() })?
        .clone();
    if header.iter().map(str::trim).ne(DATASET_COLUMNS) {
        return Err(MetricsError::Dataset {
            line: 1,
            msg: format!("expected header {}", DATASET_COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| MetricsError::Dataset {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |msg: String| MetricsError::Dataset { line, msg };
        let num = |i: usize| Published::parse(&rec[i]).map_err(|m| err(format!("{}: {m}", DATASET_COLUMNS[i])));
        let table = rec[0].trim();
        if !matches!(table, "I" | "II" | "III" | "IV") {
            return Err(err(format!("unknown table {table:?}")));
        }
        let power = match (num(13)?, rec[14].trim()) {
            (None, "") => None,
            (Some(v), "W") => Some((v, PowerUnit::Watt)),
            (Some(v), "mW") => Some((v, PowerUnit::Milliwatt)),
            (Some(_), u) => return Err(err(format!("unknown power unit {u:?}"))),
            (None, _) => return Err(err("power unit without a value".into())),
        };
        let mut row = BaselineRow::empty(table, rec[1].trim(), rec[2].trim());
        row.state_bits = num(3)?;
        row.key_bits = num(4)?;
        row.ff = num(5)?;
        row.lut = num(6)?;
        row.slc = num(7)?;
        row.fmax_mhz = num(8)?;
        row.latency = num(9)?;
        row.thr_mbps = num(10)?;
        row.thr_per_slc = num(11)?;
        row.thr_star_mbps = num(12)?;
        row.power = power;
        row.e_uj = num(15)?;
        row.e_per_bit_nj = num(16)?;
        row.area_um2 = num(17)?;
        row.ciphers = num(18)?;
        row.dpr_gbps = num(19)?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn bundled_baselines() -> Vec<BaselineRow> {
    parse_baselines(BUNDLED_BASELINES).expect("bundled dataset parses")
}

pub fn write_rows_csv(rows: &[BaselineRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DATASET_COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record(r.record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AuditStatus {
    Pass,
    Flagged,
    NotDerivable,
}

impl fmt::Display for AuditStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuditStatus::Pass => "pass",
            AuditStatus::Flagged => "flagged",
            AuditStatus::NotDerivable => "not-derivable",
        })
    }
}

/// Relative tolerance for a dataset column: 5% for the energy columns,
/// whose published values went through two roundings, 1% otherwise.
pub fn column_tolerance(column: &str) -> f64 {
    match column {
        "E_uJ" | "E_per_bit_nJ" => 0.05,
        _ => 0.01,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    pub table: String,
    pub work_label: String,
    pub device: String,
    pub column: &'static str,
    pub published: f64,
    pub derived: Option<f64>,
    pub rel_err: Option<f64>,
    pub tolerance: f64,
    pub status: AuditStatus,
}

/// Frequencies used when a row does not state its own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditFrequencies {
    pub f_rf_hz: f64,
    pub f_uniform_hz: f64,
}

impl Default for AuditFrequencies {
    fn default() -> Self {
        AuditFrequencies {
            f_rf_hz: F_RF_HZ,
            f_uniform_hz: F_UNIFORM_HZ,
        }
    }
}

fn judge(column: &'static str, row: &BaselineRow, published: Published, derived: Option<f64>) -> AuditEntry {
    let tolerance = column_tolerance(column);
    let rel_err = derived.map(|d| {
        if published.value == 0.0 {
            d.abs()
        } else {
            ((d - published.value) / published.value).abs()
        }
    });
    let status = match (derived, rel_err) {
        (Some(d), Some(r)) => {
            if r <= tolerance || (d - published.value).abs() <= published.rounding_half_width() {
                AuditStatus::Pass
            } else {
                AuditStatus::Flagged
            }
        }
        _ => AuditStatus::NotDerivable,
    };
    AuditEntry {
        table: row.table.clone(),
        work_label: row.work_label.clone(),
        device: row.device.clone(),
        column,
        published: published.value,
        derived,
        rel_err,
        tolerance,
        status,
    }
}

fn count(p: Option<Published>) -> Option<u64> {
    p.map(|p| p.value).filter(|v| *v >= 1.0 && v.fract() == 0.0).map(|v| v as u64)
}

/// Recomputes every published derived column from the same row's inputs.
/// A row passes within its column tolerance or when the derived value
/// rounds to the printed one.
pub fn audit(rows: &[BaselineRow], freqs: AuditFrequencies) -> Vec<AuditEntry> {
    let mut out = Vec::new();
    for row in rows {
        let bits = count(row.state_bits).unwrap_or(BLOCK_BITS);
        let latency = count(row.latency);
        let watts = row.power.map(|(v, u)| u.to_watts(v.value));
        let fmax_hz = row.fmax_mhz.map(|f| f.value * 1e6);
        match row.table.as_str() {
            "I" => {
                let thr = match (fmax_hz, latency) {
                    (Some(f), Some(l)) => throughput(f, bits, l).ok(),
                    _ => None,
                };
                if let Some(p) = row.thr_mbps {
                    out.push(judge("thr_Mbps", row, p, thr.map(|t| t / 1e6)));
                }
                if let Some(p) = row.thr_per_slc {
                    let d = thr.zip(count(row.slc)).and_then(|(t, s)| throughput_per_slice(t, s).ok());
                    out.push(judge("thr_per_slc", row, p, d.map(|t| t / 1e6)));
                }
                if let Some(p) = row.thr_star_mbps {
                    let d = latency.and_then(|l| throughput_star(freqs.f_rf_hz, bits, l).ok());
                    out.push(judge("thr_star_Mbps", row, p, d.map(|t| t / 1e6)));
                }
            }
            "II" => {
                let e = watts.zip(latency).and_then(|(w, l)| energy_per_block(w, l, freqs.f_rf_hz).ok());
                if let Some(p) = row.e_uj {
                    out.push(judge("E_uJ", row, p, e.map(|e| e * 1e6)));
                }
                if let Some(p) = row.e_per_bit_nj {
                    let d = e.and_then(|e| energy_per_bit(e, bits).ok());
                    out.push(judge("E_per_bit_nJ", row, p, d.map(|e| e * 1e9)));
                }
            }
            "III" => {
                let f = fmax_hz.unwrap_or(freqs.f_uniform_hz);
                if let Some(p) = row.thr_mbps {
                    let d = latency.and_then(|l| throughput(f, bits, l).ok());
                    out.push(judge("thr_Mbps", row, p, d.map(|t| t / 1e6)));
                }
                if let Some(p) = row.e_uj {
                    let d = watts.zip(latency).and_then(|(w, l)| energy_per_block(w, l, f).ok());
                    out.push(judge("E_uJ", row, p, d.map(|e| e * 1e6)));
                }
            }
            _ => {
                if let Some(p) = row.dpr_gbps {
                    let d = count(row.ciphers)
                        .zip(latency)
                        .and_then(|(c, l)| data_processing_rate(c, freqs.f_uniform_hz, BYTES_PER_CIPHER, l).ok());
                    out.push(judge("dpr_GBps", row, p, d.map(|r| r / 1e9)));
                }
            }
        }
    }
    out
}

pub fn write_audit_csv(entries: &[AuditEntry]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in entries {
        w.serialize(e).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// One compared quantity against one baseline row; `ratio` is this
/// design's value divided by the baseline's.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub metric: &'static str,
    pub baseline_table: String,
    pub baseline_label: String,
    pub baseline_device: String,
    pub aes_imc_value: f64,
    pub baseline_value: f64,
    pub ratio: f64,
    pub config_hash: String,
}

/// Metrics compared per table, with this design's value in table units.
fn table_metrics(table: &str, report: &MetricsReport) -> Vec<(&'static str, f64)> {
    match table {
        "I" => vec![
            ("thr_Mbps", report.thr_bps / 1e6),
            ("thr_per_slc", report.thr_per_slc / 1e6),
            ("thr_star_Mbps", report.thr_star_bps / 1e6),
        ],
        "II" => vec![
            ("E_uJ", report.energy_j * 1e6),
            ("E_per_bit_nJ", report.energy_per_bit_j * 1e9),
        ],
        "IV" => vec![("dpr_GBps", report.dpr_bps / 1e9)],
        _ => Vec::new(),
    }
}

fn published_metric(row: &BaselineRow, metric: &str) -> Option<f64> {
    match metric {
        "thr_Mbps" => row.thr_mbps,
        "thr_per_slc" => row.thr_per_slc,
        "thr_star_Mbps" => row.thr_star_mbps,
        "E_uJ" => row.e_uj,
        "E_per_bit_nJ" => row.e_per_bit_nj,
        "dpr_GBps" => row.dpr_gbps,
        _ => None,
    }
    .map(|p| p.value)
}

fn compare_row(report: &MetricsReport, row: &BaselineRow, config_hash: &str) -> Vec<ComparisonRow> {
    table_metrics(&row.table, report)
        .into_iter()
        .filter_map(|(metric, ours)| {
            let theirs = published_metric(row, metric)?;
            Some(ComparisonRow {
                metric,
                baseline_table: row.table.clone(),
                baseline_label: row.work_label.clone(),
                baseline_device: row.device.clone(),
                aes_imc_value: ours,
                baseline_value: theirs,
                ratio: ours / theirs,
                config_hash: config_hash.to_string(),
            })
        })
        .collect()
}

/// Ratios against every other design in the dataset, in dataset order.
pub fn compare_against_baselines(report: &MetricsReport, baselines: &[BaselineRow], config_hash: &str) -> Vec<ComparisonRow> {
    baselines
        .iter()
        .filter(|r| !r.is_aes_imc())
        .flat_map(|r| compare_row(report, r, config_hash))
        .collect()
}

/// Comparison against a single baseline, selected by table and label (and
/// device, when the label alone is ambiguous).
pub fn compare_with(
    report: &MetricsReport,
    baselines: &[BaselineRow],
    table: &str,
    label: &str,
    device: Option<&str>,
    config_hash: &str,
) -> Result<Vec<ComparisonRow>> {
    let row = baselines
        .iter()
        .find(|r| r.table == table && r.work_label == label && device.is_none_or(|d| r.device == d))
        .ok_or_else(|| MetricsError::UnknownBaseline {
            table: table.into(),
            label: label.into(),
        })?;
    Ok(compare_row(report, row, config_hash))
}

pub fn write_comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record([
        "metric",
        "baseline_table",
        "baseline_label",
        "baseline_device",
        "aes_imc_value",
        "baseline_value",
        "ratio",
        "config_hash",
    ])
    .expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        ((a - b) / b).abs() <= rel
    }

    #[test]
    fn throughput_examples() {
        assert!(close(throughput(108.9e6, 128, 26).unwrap(), 536.12e6, 1e-4));
        assert_eq!(throughput(5e6, 128, 128).unwrap(), 5e6);
        assert!(close(throughput(311.72e6, 128, 59).unwrap(), 676.276e6, 1e-4));
        assert_eq!(throughput(1.0, 128, 0), Err(MetricsError::NonPositive("latency")));
    }

    #[test]
    fn per_slice_examples() {
        assert!(close(throughput_per_slice(536.12e6, 468).unwrap(), 1.144e6, 5e-3));
        assert_eq!(throughput_per_slice(3.5, 1).unwrap(), 3.5);
        assert!(close(throughput_per_slice(316.12e6, 88).unwrap(), 3.592e6, 1e-3));
        assert!(throughput_per_slice(1.0, 0).is_err());
    }

    #[test]
    fn throughput_star_examples() {
        assert!(close(throughput_star(13.56e6, 128, 26).unwrap(), 66.76e6, 1e-3));
        assert!(close(throughput_star(13.56e6, 128, 55).unwrap(), 15.78e6 * 2.0, 1e-3));
        assert!(close(throughput_star(13.56e6, 64, 55).unwrap(), 15.78e6, 1e-3));
        assert_eq!(throughput_star(13.56e6, 64, 64).unwrap(), 13.56e6);
        assert_eq!(throughput_star(0.0, 64, 64), Err(MetricsError::NonPositive("f_rf")));
    }

    #[test]
    fn energy_examples() {
        let e = energy_per_block(0.098, 26, 13.56e6).unwrap();
        assert!(close(e, 0.188e-6, 2e-3));
        assert_eq!(energy_per_block(0.0, 26, 13.56e6).unwrap(), 0.0);
        assert!(close(energy_per_block(21.31e-3, 55, 13.56e6).unwrap(), 0.0864e-6, 1e-3));
        assert!(close(energy_per_bit(0.188e-6, 128).unwrap(), 1.47e-9, 1e-3));
        assert_eq!(energy_per_bit(0.0, 128).unwrap(), 0.0);
        assert!(close(energy_per_bit(0.086e-6, 64).unwrap(), 1.35e-9, 5e-3));
        assert!(energy_per_block(1.0, 1, 0.0).is_err());
    }

    #[test]
    fn dpr_examples() {
        assert!(close(data_processing_rate(24096, 30e6, 16, 26).unwrap(), 444.9e9, 1e-3));
        assert!(close(data_processing_rate(454, 30e6, 16, 84).unwrap(), 2.595e9, 1e-3));
        assert!(close(data_processing_rate(12902, 30e6, 16, 220).unwrap(), 28.15e9, 1e-3));
    }

    #[test]
    fn identity_inputs() {
        let input = MetricsInput {
            f_max_hz: 1.0,
            f_rf_hz: 1.0,
            f_uniform_hz: 1.0,
            block_size_bits: 1,
            latency_cycles: 1,
            slices: 1,
            power_w: 1.0,
            ciphers: 1,
            bytes_per_cipher: 1,
        };
        let r = build_report(&input).unwrap();
        assert_eq!(
            r,
            MetricsReport {
                thr_bps: 1.0,
                thr_per_slc: 1.0,
                thr_star_bps: 1.0,
                energy_j: 1.0,
                energy_per_bit_j: 1.0,
                dpr_bps: 1.0
            }
        );
        let bad = MetricsInput { slices: 0, ..input };
        assert_eq!(build_report(&bad), Err(MetricsError::NonPositive("slices")));
    }

    #[test]
    fn published_parsing() {
        let p = Published::parse("0.013").unwrap().unwrap();
        assert_eq!((p.value, p.decimals, p.approximate), (0.013, 3, false));
        let p = Published::parse("~24096").unwrap().unwrap();
        assert_eq!((p.value, p.decimals, p.approximate), (24096.0, 0, true));
        assert_eq!(p.to_string(), "~24096");
        assert_eq!(Published::parse(" ").unwrap(), None);
        assert!(Published::parse("1.2.3").is_err());
    }

    #[test]
    fn bundled_dataset_shape() {
        let rows = bundled_baselines();
        let per_table = |t: &str| rows.iter().filter(|r| r.table == t).count();
        assert_eq!((per_table("I"), per_table("II"), per_table("III"), per_table("IV")), (20, 18, 6, 6));
        assert!(rows.iter().filter(|r| r.table == "I" || r.table == "II").all(|r| !r.device.is_empty()));
    }

    #[test]
    fn dataset_errors() {
        assert_eq!(parse_baselines("").unwrap(), vec![]);
        assert!(matches!(parse_baselines("a,b\n1,2\n"), Err(MetricsError::Dataset { line: 1, .. })));
        let header = DATASET_COLUMNS.join(",");
        let bad = format!("{header}\nI,x,y,abc,,,,,,,,,,,,,,,,\n");
        assert!(matches!(parse_baselines(&bad), Err(MetricsError::Dataset { line: 2, .. })));
        let unit = format!("{header}\nII,x,y,,,,,,,,,,,1,kW,,,,,\n");
        assert!(matches!(parse_baselines(&unit), Err(MetricsError::Dataset { line: 2, .. })));
    }

    #[test]
    fn regenerated_rows_round_trip() {
        let input = MetricsInput::aes_imc(26);
        let report = build_report(&input).unwrap();
        let rows: Vec<_> = ["I", "II", "III", "IV"]
            .iter()
            .map(|t| BaselineRow::from_report(&report, &input, t))
            .collect();
        let text = write_rows_csv(&rows);
        let back = parse_baselines(&text).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back[0].thr_mbps.unwrap().value, report.thr_bps / 1e6);
    }

    #[test]
    fn unknown_baseline() {
        let report = build_report(&MetricsInput::aes_imc(26)).unwrap();
        let err = compare_with(&report, &bundled_baselines(), "IV", "nope", None, "").unwrap_err();
        assert!(matches!(err, MetricsError::UnknownBaseline { .. }));
    }

    #[test]
    fn bundled_audit() {
        let entries = audit(&bundled_baselines(), AuditFrequencies::default());
        let flagged: Vec<_> = entries
            .iter()
            .filter(|e| e.status != AuditStatus::Pass)
            .map(|e| (e.table.as_str(), e.work_label.as_str(), e.column))
            .collect();
        assert!(entries.iter().all(|e| e.status != AuditStatus::NotDerivable));
        assert!(flagged.iter().all(|(t, _, _)| *t == "III" || *t == "IV"));
        assert!(flagged.contains(&("III", "CMOS ASIC [45]", "thr_Mbps")));
        assert!(flagged.contains(&("III", "AES-IMC", "E_uJ")));
        assert!(flagged.contains(&("IV", "DW-AES Baseline [52]", "dpr_GBps")));
        assert_eq!(flagged.len(), 12);
    }
}
