//! Behavioral model of a memristor crossbar with its peripheral circuitry.
//!
//! Each cross-point holds a 4-bit multi-level cell. Every column has one
//! sense amplifier with a capacitor slot and a latch slot; the array also
//! carries a row buffer feeding the write driver and a bank of single-bit
//! latches used while routing shifted S-box outputs.
//!
//! All mutating operations charge the configured [`CostTable`]: they advance
//! the array-local clock by the op latency, bump the per-kind counters, and
//! (when tracing is enabled) append a [`MicroOpEvent`].

use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of resistive levels per cell.
pub const CELL_LEVELS: u8 = 16;
/// Widest supported array (column masks are 64-bit).
pub const MAX_COLS: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CrossbarError {
    #[error("address out of range: row {row:?}, col {col:?} (geometry {rows}x{cols})")]
    AddressOutOfRange {
        row: Option<usize>,
        col: Option<usize>,
        rows: usize,
        cols: usize,
    },
    #[error("cell value {0} does not fit in 4 bits")]
    ValueOutOfRange(u8),
    #[error("sense amplifier at column {col} has no {slot} value")]
    UninitializedSense { col: usize, slot: &'static str },
    #[error("row buffer is empty, nothing to write back to row {row}")]
    EmptyBuffer { row: usize },
    #[error("invalid geometry {rows}x{cols}")]
    InvalidGeometry { rows: usize, cols: usize },
    #[error("cost table has no entry for {0}")]
    MissingCostEntry(&'static str),
    #[error("negative or non-finite energy for {0}")]
    InvalidCost(&'static str),
}

pub type Result<T> = std::result::Result<T, CrossbarError>;

/// A 4-bit resistive cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MrCell {
    level: u8,
}

impl MrCell {
    pub fn new(level: u8) -> Result<Self> {
        if level >= CELL_LEVELS {
            return Err(CrossbarError::ValueOutOfRange(level));
        }
        Ok(MrCell { level })
    }

    pub fn level(&self) -> u8 {
        self.level
    }
}

/// Micro-operation kinds appearing in the trace. `Barrier` marks the end of
/// a schedule stage and carries no cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OpKind {
    RowRead,
    RowWrite,
    SaXor,
    SboxEval,
    M2Eval,
    OffsetWrite,
    BufferWriteback,
    Barrier,
}

impl OpKind {
    /// Kinds that carry a cost entry.
    pub const COSTED: [OpKind; 7] = [
        OpKind::RowRead,
        OpKind::RowWrite,
        OpKind::SaXor,
        OpKind::SboxEval,
        OpKind::M2Eval,
        OpKind::OffsetWrite,
        OpKind::BufferWriteback,
    ];

    fn slot(self) -> Option<usize> {
        OpKind::COSTED.iter().position(|&k| k == self)
    }

    /// Lowercase name used in config keys (`cost.<name>.cycles`).
    pub fn config_name(self) -> &'static str {
        match self {
            OpKind::RowRead => "row_read",
            OpKind::RowWrite => "row_write",
            OpKind::SaXor => "sa_xor",
            OpKind::SboxEval => "sbox_eval",
            OpKind::M2Eval => "m2_eval",
            OpKind::OffsetWrite => "offset_write",
            OpKind::BufferWriteback => "buffer_writeback",
            OpKind::Barrier => "barrier",
        }
    }

    pub fn from_config_name(name: &str) -> Option<OpKind> {
        OpKind::COSTED.into_iter().find(|k| k.config_name() == name)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.config_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OpCost {
    pub cycles: u64,
    pub energy_pj: f64,
}

/// Latency and energy per micro-op kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTable {
    entries: [OpCost; 7],
}

impl CostTable {
    /// Preset calibrated so that the default schedule runs a block in 26
    /// cycles and spends `0.098 W × 26 / 13.56 MHz` of energy per block.
    ///
    /// Latencies are zero: with 26 cycles spread over 23 stages, per-op
    /// timing is entirely absorbed by the stage budgets. Energies keep the
    /// relative weights below (non-volatile writes dominate) and are scaled
    /// to the per-block target.
    pub fn calibrated() -> Self {
        let e = |w: f64| OpCost {
            cycles: 0,
            energy_pj: w * CALIBRATED_ENERGY_UNIT_PJ,
        };
        CostTable {
            entries: [e(1.0), e(8.0), e(0.5), e(2.0), e(1.0), e(0.5), e(8.0)],
        }
    }

    pub fn zero() -> Self {
        CostTable {
            entries: [OpCost::default(); 7],
        }
    }

    pub fn uniform(cycles: u64, energy_pj: f64) -> Self {
        CostTable {
            entries: [OpCost { cycles, energy_pj }; 7],
        }
    }

    /// Builds a table from explicit entries; every costed kind must appear.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (OpKind, OpCost)>,
    {
        let mut slots: [Option<OpCost>; 7] = [None; 7];
        for (kind, cost) in entries {
            if let Some(i) = kind.slot() {
                slots[i] = Some(cost);
            }
        }
        let mut out = CostTable::zero();
        for (i, slot) in slots.into_iter().enumerate() {
            let kind = OpKind::COSTED[i];
            let cost = slot.ok_or(CrossbarError::MissingCostEntry(kind.config_name()))?;
            out.set(kind, cost)?;
        }
        Ok(out)
    }

    pub fn get(&self, kind: OpKind) -> OpCost {
        kind.slot().map(|i| self.entries[i]).unwrap_or_default()
    }

    pub fn set(&mut self, kind: OpKind, cost: OpCost) -> Result<()> {
        if !cost.energy_pj.is_finite() || cost.energy_pj < 0.0 {
            return Err(CrossbarError::InvalidCost(kind.config_name()));
        }
        if let Some(i) = kind.slot() {
            self.entries[i] = cost;
        }
        Ok(())
    }

    #[inline]
    pub fn latency(&self, kind: OpKind) -> u64 {
        self.get(kind).cycles
    }

    #[inline]
    pub fn energy(&self, kind: OpKind) -> f64 {
        self.get(kind).energy_pj
    }

    pub fn iter(&self) -> impl Iterator<Item = (OpKind, OpCost)> + '_ {
        OpKind::COSTED.into_iter().zip(self.entries)
    }

    /// Same energies, every latency multiplied by `factor`.
    pub fn scale_latencies(&self, factor: u64) -> Self {
        let mut out = *self;
        for e in out.entries.iter_mut() {
            e.cycles *= factor;
        }
        out
    }
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable::calibrated()
    }
}

/// Energy of one unit of weight in the calibrated preset.
///
/// A default-configuration block issues ops worth 4999 weight units
/// (732 reads, 96 writes, 358 XORs, 80 S-box and 72 doubling lookups,
/// 320 offset writes, 366 write-backs). The unit is chosen so that those
/// add up to 0.098 W over 26 cycles at 13.56 MHz.
pub const CALIBRATED_ENERGY_UNIT_PJ: f64 = 0.098 * 26.0 / 13.56e6 * 1e12 / 4999.0;

/// Column selection over up to 64 cell positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColMask(pub u64);

impl ColMask {
    pub const EMPTY: ColMask = ColMask(0);

    pub fn single(col: usize) -> Self {
        ColMask(1 << col)
    }

    /// Columns `start..end`.
    pub fn range(start: usize, end: usize) -> Self {
        (start..end).fold(ColMask::EMPTY, |m, c| m.with(c))
    }

    pub fn with(self, col: usize) -> Self {
        ColMask(self.0 | (1 << col))
    }

    pub fn contains(self, col: usize) -> bool {
        col < MAX_COLS && self.0 & (1 << col) != 0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            (bits != 0).then(|| {
                let c = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                c
            })
        })
    }

    fn highest(self) -> Option<usize> {
        (self.0 != 0).then(|| 63 - self.0.leading_zeros() as usize)
    }
}

impl FromIterator<usize> for ColMask {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        iter.into_iter().fold(ColMask::EMPTY, |m, c| m.with(c))
    }
}

/// One timed, energy-costed operation. Serialized one object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroOpEvent {
    pub cycle: u64,
    pub bank: u32,
    pub lane: u8,
    pub op: OpKind,
    pub row: Option<u32>,
    pub col_mask: ColMask,
    #[serde(rename = "energy_pJ")]
    pub energy_pj: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_col: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst_col: Option<u32>,
    /// Set on offset writes routed through the cross-lane port.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst_lane: Option<u8>,
    /// Levels written, in ascending column order of `col_mask`
    /// (write-class events only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<u8>,
}

impl MicroOpEvent {
    pub fn is_write(&self) -> bool {
        matches!(self.op, OpKind::RowWrite | OpKind::BufferWriteback)
    }
}

/// Per-kind operation counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct OpCounts([u64; 7]);

impl OpCounts {
    pub fn get(&self, kind: OpKind) -> u64 {
        kind.slot().map(|i| self.0[i]).unwrap_or(0)
    }

    fn bump(&mut self, kind: OpKind) {
        if let Some(i) = kind.slot() {
            self.0[i] += 1;
        }
    }

    pub fn add(&mut self, other: &OpCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }

    /// Energy in pJ. Summed per kind so the result does not depend on the
    /// order in which events were issued.
    pub fn energy_pj(&self, cost: &CostTable) -> f64 {
        OpKind::COSTED
            .iter()
            .zip(self.0)
            .map(|(&k, n)| n as f64 * cost.energy(k))
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct SenseAmp {
    capacitor: Option<u8>,
    latch: Option<u8>,
}

/// A rows×cols grid of [`MrCell`] with its sense amplifiers, row buffer and
/// single-bit latches.
#[derive(Debug, Clone)]
pub struct CrossbarArray {
    rows: usize,
    cols: usize,
    cells: Vec<MrCell>,
    sense: Vec<SenseAmp>,
    row_buffer: Vec<Option<u8>>,
    bit_latches: Vec<[bool; 4]>,
    cost: CostTable,
    bank: u32,
    lane: u8,
    clock: u64,
    counts: OpCounts,
    trace: Option<Vec<MicroOpEvent>>,
}

impl CrossbarArray {
    pub fn new(rows: usize, cols: usize, cost: CostTable) -> Result<Self> {
        if rows == 0 || cols == 0 || cols > MAX_COLS || rows > u32::MAX as usize {
            return Err(CrossbarError::InvalidGeometry { rows, cols });
        }
        Ok(CrossbarArray {
            rows,
            cols,
            cells: vec![MrCell::default(); rows * cols],
            sense: vec![SenseAmp::default(); cols],
            row_buffer: vec![None; cols],
            bit_latches: vec![[false; 4]; cols],
            cost,
            bank: 0,
            lane: 0,
            clock: 0,
            counts: OpCounts::default(),
            trace: None,
        })
    }

    pub fn with_ids(mut self, bank: u32, lane: u8) -> Self {
        self.bank = bank;
        self.lane = lane;
        self
    }

    /// Starts (or stops) keeping a full event trace.
    pub fn set_tracing(&mut self, on: bool) {
        match (on, self.trace.is_some()) {
            (true, false) => self.trace = Some(Vec::new()),
            (false, true) => self.trace = None,
            _ => {}
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn lane(&self) -> u8 {
        self.lane
    }

    pub fn bank(&self) -> u32 {
        self.bank
    }

    pub fn cost(&self) -> &CostTable {
        &self.cost
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Moves the local clock forward; never backwards.
    pub fn advance_to(&mut self, cycle: u64) {
        self.clock = self.clock.max(cycle);
    }

    pub fn reset_clock(&mut self) {
        self.clock = 0;
    }

    pub fn counts(&self) -> OpCounts {
        self.counts
    }

    pub fn reset_counts(&mut self) {
        self.counts = OpCounts::default();
    }

    pub fn energy_pj(&self) -> f64 {
        self.counts.energy_pj(&self.cost)
    }

    /// Drains the recorded trace. Empty when tracing is off.
    pub fn take_trace(&mut self) -> Vec<MicroOpEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn check_row(&self, row: usize) -> Result<()> {
        if row >= self.rows {
            return Err(self.oob(Some(row), None));
        }
        Ok(())
    }

    fn check_col(&self, col: usize) -> Result<()> {
        if col >= self.cols {
            return Err(self.oob(None, Some(col)));
        }
        Ok(())
    }

    fn check_mask(&self, mask: ColMask) -> Result<()> {
        match mask.highest() {
            Some(c) if c >= self.cols => Err(self.oob(None, Some(c))),
            _ => Ok(()),
        }
    }

    fn oob(&self, row: Option<usize>, col: Option<usize>) -> CrossbarError {
        CrossbarError::AddressOutOfRange {
            row,
            col,
            rows: self.rows,
            cols: self.cols,
        }
    }

    fn check_level(v: u8) -> Result<()> {
        if v >= CELL_LEVELS {
            return Err(CrossbarError::ValueOutOfRange(v));
        }
        Ok(())
    }

    fn cell_mut(&mut self, row: usize, col: usize) -> &mut MrCell {
        &mut self.cells[row * self.cols + col]
    }

    fn level(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.cols + col].level
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        op: OpKind,
        row: Option<usize>,
        mask: ColMask,
        extra_cycles: u64,
        src_dst: Option<(usize, usize, Option<u8>)>,
        values: &[u8],
    ) {
        let cost = self.cost.get(op);
        let cycle = self.clock;
        self.clock += cost.cycles + extra_cycles;
        self.counts.bump(op);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(MicroOpEvent {
                cycle,
                bank: self.bank,
                lane: self.lane,
                op,
                row: row.map(|r| r as u32),
                col_mask: mask,
                energy_pj: cost.energy_pj,
                src_col: src_dst.map(|(s, _, _)| s as u32),
                dst_col: src_dst.map(|(_, d, _)| d as u32),
                dst_lane: src_dst.and_then(|(_, _, l)| l),
                values: values.to_vec(),
            });
        }
    }

    /// Records a stage boundary at `cycle` and moves the clock there.
    pub fn barrier(&mut self, cycle: u64) {
        self.advance_to(cycle);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(MicroOpEvent {
                cycle: self.clock,
                bank: self.bank,
                lane: self.lane,
                op: OpKind::Barrier,
                row: None,
                col_mask: ColMask::EMPTY,
                energy_pj: 0.0,
                src_col: None,
                dst_col: None,
                dst_lane: None,
                values: Vec::new(),
            });
        }
    }

    /// Programs one cell. Costs one ROW_WRITE.
    pub fn write_cell(&mut self, row: usize, col: usize, v: u8) -> Result<()> {
        self.check_row(row)?;
        self.check_col(col)?;
        Self::check_level(v)?;
        self.cell_mut(row, col).level = v;
        self.emit(OpKind::RowWrite, Some(row), ColMask::single(col), 0, None, &[v]);
        Ok(())
    }

    /// Programs the masked cells of one row in a single batched write.
    /// `values` pairs with the mask's columns in ascending order.
    pub fn write_row(&mut self, row: usize, mask: ColMask, values: &[u8]) -> Result<()> {
        self.check_row(row)?;
        self.check_mask(mask)?;
        assert_eq!(mask.count(), values.len(), "one value per selected column");
        for &v in values {
            Self::check_level(v)?;
        }
        for (col, &v) in mask.iter().zip(values) {
            self.cell_mut(row, col).level = v;
        }
        self.emit(OpKind::RowWrite, Some(row), mask, 0, None, values);
        Ok(())
    }

    /// Inspects a cell directly, outside the sense path. No cost.
    pub fn read_cell(&self, row: usize, col: usize) -> Result<u8> {
        self.check_row(row)?;
        self.check_col(col)?;
        Ok(self.level(row, col))
    }

    /// Inspects a whole row. No cost.
    pub fn peek_row(&self, row: usize) -> Result<Vec<u8>> {
        self.check_row(row)?;
        Ok((0..self.cols).map(|c| self.level(row, c)).collect())
    }

    fn read_row_into(&mut self, row: usize, mask: ColMask, to_latch: bool) -> Result<Vec<u8>> {
        self.check_row(row)?;
        self.check_mask(mask)?;
        let mut out = Vec::with_capacity(mask.count());
        for col in mask.iter() {
            let v = self.level(row, col);
            let sa = &mut self.sense[col];
            if to_latch {
                sa.latch = Some(v);
            } else {
                sa.capacitor = Some(v);
            }
            out.push(v);
        }
        self.emit(OpKind::RowRead, Some(row), mask, 0, None, &[]);
        Ok(out)
    }

    /// Activates the first word-line: selected levels land in the SA capacitors.
    pub fn read_row_to_capacitor(&mut self, row: usize, mask: ColMask) -> Result<Vec<u8>> {
        self.read_row_into(row, mask, false)
    }

    /// Activates the second word-line: selected levels land in the SA latches.
    pub fn read_row_to_latch(&mut self, row: usize, mask: ColMask) -> Result<Vec<u8>> {
        self.read_row_into(row, mask, true)
    }

    /// Column-parallel XOR of capacitor and latch; the result stays latched.
    pub fn sa_xor(&mut self, mask: ColMask) -> Result<Vec<u8>> {
        self.check_mask(mask)?;
        let mut out = Vec::with_capacity(mask.count());
        for col in mask.iter() {
            let sa = self.sense[col];
            let cap = sa.capacitor.ok_or(CrossbarError::UninitializedSense { col, slot: "capacitor" })?;
            let latch = sa.latch.ok_or(CrossbarError::UninitializedSense { col, slot: "latch" })?;
            out.push(cap ^ latch);
        }
        for (col, &v) in mask.iter().zip(&out) {
            self.sense[col].latch = Some(v);
        }
        self.emit(OpKind::SaXor, None, mask, 0, None, &[]);
        Ok(out)
    }

    /// Current latch contents of the selected columns. No cost.
    pub fn latched(&self, mask: ColMask) -> Result<Vec<u8>> {
        self.check_mask(mask)?;
        mask.iter()
            .map(|col| {
                self.sense[col]
                    .latch
                    .ok_or(CrossbarError::UninitializedSense { col, slot: "latch" })
            })
            .collect()
    }

    /// Evaluates a byte-wide lookup unit on latched nibble pairs. Each entry
    /// of `byte_cols` names the high-nibble column; the low nibble sits at
    /// the next column. One event of `kind` covers the whole batch.
    pub fn lut_eval(&mut self, kind: OpKind, byte_cols: &[usize], lut: &[u8; 256]) -> Result<Vec<u8>> {
        let mut mask = ColMask::EMPTY;
        for &c in byte_cols {
            self.check_col(c + 1)?;
            mask = mask.with(c).with(c + 1);
        }
        let nibbles = self.latched(mask)?;
        let mut out = Vec::with_capacity(byte_cols.len());
        for &c in byte_cols {
            let hi = self.sense[c].latch.unwrap_or(0);
            let lo = self.sense[c + 1].latch.unwrap_or(0);
            out.push(lut[((hi << 4) | lo) as usize]);
        }
        debug_assert_eq!(nibbles.len(), 2 * byte_cols.len());
        self.emit(kind, None, mask, 0, None, &[]);
        Ok(out)
    }

    /// Places a value in the row buffer without touching the array. Models
    /// the wire from the SA/peripheral outputs to the write driver.
    pub fn stage(&mut self, col: usize, v: u8) -> Result<()> {
        self.check_col(col)?;
        Self::check_level(v)?;
        self.row_buffer[col] = Some(v);
        Ok(())
    }

    /// Copies latch contents of the selected columns into the row buffer.
    pub fn stage_latched(&mut self, mask: ColMask) -> Result<()> {
        let vals = self.latched(mask)?;
        for (col, v) in mask.iter().zip(vals) {
            self.row_buffer[col] = Some(v);
        }
        Ok(())
    }

    pub fn row_buffer(&self) -> &[Option<u8>] {
        &self.row_buffer
    }

    pub fn clear_row_buffer(&mut self) {
        self.row_buffer.iter_mut().for_each(|v| *v = None);
    }

    /// Routes `v` through the column decoder with an offset: bits are held
    /// in the single-bit latches of `dst_col` and staged in the row buffer.
    pub fn offset_write(&mut self, src_col: usize, dst_col: usize, v: u8) -> Result<()> {
        self.check_col(src_col)?;
        self.check_col(dst_col)?;
        Self::check_level(v)?;
        self.latch_bits(dst_col, v);
        self.emit(
            OpKind::OffsetWrite,
            None,
            ColMask::single(dst_col),
            0,
            Some((src_col, dst_col, None)),
            &[],
        );
        Ok(())
    }

    fn latch_bits(&mut self, col: usize, v: u8) {
        self.bit_latches[col] = std::array::from_fn(|b| (v >> b) & 1 == 1);
        self.row_buffer[col] = Some(v);
    }

    pub fn bit_latches(&self, col: usize) -> Result<[bool; 4]> {
        self.check_col(col)?;
        Ok(self.bit_latches[col])
    }

    /// Commits the staged row buffer entries to `row` and clears the buffer.
    pub fn write_back_row(&mut self, row: usize) -> Result<()> {
        self.check_row(row)?;
        let mut mask = ColMask::EMPTY;
        let mut values = Vec::new();
        for col in 0..self.cols {
            if let Some(v) = self.row_buffer[col] {
                mask = mask.with(col);
                values.push(v);
            }
        }
        if mask.is_empty() {
            return Err(CrossbarError::EmptyBuffer { row });
        }
        for (col, &v) in mask.iter().zip(&values) {
            self.cell_mut(row, col).level = v;
        }
        self.clear_row_buffer();
        self.emit(OpKind::BufferWriteback, Some(row), mask, 0, None, &values);
        Ok(())
    }

    /// Forgets all sense-amplifier contents.
    pub fn clear_sense(&mut self) {
        self.sense.iter_mut().for_each(|s| *s = SenseAmp::default());
    }
}

/// Offset write across arrays: the source lane drives the cross-lane port,
/// the value lands in the destination's single-bit latches and row buffer.
/// Charged as one OFFSET_WRITE on the source plus `port_cycles`.
pub fn port_offset_write(
    src: &mut CrossbarArray,
    dst: &mut CrossbarArray,
    src_col: usize,
    dst_col: usize,
    v: u8,
    port_cycles: u64,
) -> Result<()> {
    src.check_col(src_col)?;
    dst.check_col(dst_col)?;
    CrossbarArray::check_level(v)?;
    dst.latch_bits(dst_col, v);
    let dst_lane = dst.lane;
    src.emit(
        OpKind::OffsetWrite,
        None,
        ColMask::single(dst_col),
        port_cycles,
        Some((src_col, dst_col, Some(dst_lane))),
        &[],
    );
    Ok(())
}

/// Rebuilds cell levels from a single array's write events, starting from an
/// all-zero grid.
pub fn replay_writes<'a, I>(rows: usize, cols: usize, events: I) -> Vec<u8>
where
    I: IntoIterator<Item = &'a MicroOpEvent>,
{
    let mut grid = vec![0u8; rows * cols];
    for ev in events.into_iter().filter(|e| e.is_write()) {
        let row = ev.row.expect("write events carry a row") as usize;
        for (col, &v) in ev.col_mask.iter().zip(&ev.values) {
            grid[row * cols + col] = v;
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn array() -> CrossbarArray {
        let mut a = CrossbarArray::new(4, 8, CostTable::uniform(1, 1.0)).unwrap();
        a.set_tracing(true);
        a
    }

    #[test]
    fn cell_range() {
        assert!(MrCell::new(15).is_ok());
        assert_eq!(MrCell::new(16), Err(CrossbarError::ValueOutOfRange(16)));
    }

    #[test]
    fn write_cell_readback() {
        let mut a = array();
        a.write_cell(1, 2, 0xA).unwrap();
        assert_eq!(a.read_cell(1, 2).unwrap(), 0xA);
        assert_eq!(a.write_cell(1, 2, 16), Err(CrossbarError::ValueOutOfRange(16)));
        a.write_cell(1, 2, 0x3).unwrap();
        assert_eq!(a.read_cell(1, 2).unwrap(), 0x3);
        assert!(matches!(a.write_cell(4, 0, 1), Err(CrossbarError::AddressOutOfRange { .. })));
        assert!(matches!(a.write_cell(0, 8, 1), Err(CrossbarError::AddressOutOfRange { .. })));
        assert_eq!(a.counts().get(OpKind::RowWrite), 2);
    }

    #[test]
    fn read_to_capacitor() {
        let mut a = array();
        a.write_row(0, ColMask::range(0, 4), &[1, 2, 3, 4]).unwrap();
        let first = a.read_row_to_capacitor(0, ColMask::range(0, 4)).unwrap();
        let second = a.read_row_to_capacitor(0, ColMask::range(0, 4)).unwrap();
        assert_eq!(first, vec![1, 2, 3, 4]);
        assert_eq!(first, second);
        let before = a.counts().get(OpKind::RowRead);
        assert!(a.read_row_to_capacitor(0, ColMask::EMPTY).unwrap().is_empty());
        assert_eq!(a.counts().get(OpKind::RowRead), before + 1);
        assert!(a.read_row_to_capacitor(9, ColMask::EMPTY).is_err());
    }

    #[test]
    fn read_to_latch() {
        let mut a = array();
        a.write_row(2, ColMask::range(0, 4), &[1, 2, 3, 4]).unwrap();
        let first = a.read_row_to_latch(2, ColMask::range(0, 4)).unwrap();
        assert_eq!(first, vec![1, 2, 3, 4]);
        assert_eq!(a.read_row_to_latch(2, ColMask::range(0, 4)).unwrap(), first);
        assert_eq!(a.latched(ColMask::range(0, 4)).unwrap(), first);
        let n = a.counts().get(OpKind::RowRead);
        assert!(a.read_row_to_latch(2, ColMask::EMPTY).unwrap().is_empty());
        assert_eq!(a.counts().get(OpKind::RowRead), n + 1);
        assert!(a.read_row_to_latch(2, ColMask::single(8)).is_err());
    }

    #[test]
    fn sa_xor_semantics() {
        let mut a = array();
        let m = ColMask::range(0, 2);
        assert!(matches!(a.sa_xor(m), Err(CrossbarError::UninitializedSense { .. })));
        a.write_row(0, m, &[0x5, 0x9]).unwrap();
        a.read_row_to_capacitor(0, m).unwrap();
        a.read_row_to_latch(0, m).unwrap();
        assert_eq!(a.sa_xor(m).unwrap(), vec![0, 0]);
        a.write_row(1, m, &[0, 0]).unwrap();
        a.write_row(2, m, &[0x7, 0xC]).unwrap();
        a.read_row_to_capacitor(1, m).unwrap();
        a.read_row_to_latch(2, m).unwrap();
        assert_eq!(a.sa_xor(m).unwrap(), vec![0x7, 0xC]);
        assert_eq!(a.latched(m).unwrap(), vec![0x7, 0xC]);
    }

    #[test]
    fn sa_xor_exhaustive_pairs() {
        let mut a = CrossbarArray::new(2, 1, CostTable::zero()).unwrap();
        let m = ColMask::single(0);
        for x in 0..16u8 {
            for y in 0..16u8 {
                a.write_row(0, m, &[x]).unwrap();
                a.write_row(1, m, &[y]).unwrap();
                a.read_row_to_capacitor(0, m).unwrap();
                a.read_row_to_latch(1, m).unwrap();
                assert_eq!(a.sa_xor(m).unwrap(), vec![x ^ y]);
            }
        }
    }

    #[test]
    fn write_back_semantics() {
        let mut a = array();
        a.write_row(3, ColMask::range(0, 8), &[9; 8]).unwrap();
        for (i, v) in [5, 6, 7, 8].into_iter().enumerate() {
            a.stage(i, v).unwrap();
        }
        a.write_back_row(3).unwrap();
        assert_eq!(a.peek_row(3).unwrap(), vec![5, 6, 7, 8, 9, 9, 9, 9]);
        assert_eq!(a.write_back_row(3), Err(CrossbarError::EmptyBuffer { row: 3 }));
        assert!(a.write_back_row(7).is_err());
    }

    #[test]
    fn offset_write_semantics() {
        let mut a = array();
        a.offset_write(2, 2, 0x4).unwrap();
        assert_eq!(a.row_buffer()[2], Some(0x4));
        a.offset_write(0, 3, 0x9).unwrap();
        assert_eq!(a.row_buffer()[3], Some(0x9));
        assert_eq!(a.bit_latches(3).unwrap(), [true, false, false, true]);
        assert!(matches!(a.offset_write(0, 8, 1), Err(CrossbarError::AddressOutOfRange { .. })));
        let ev = a.take_trace().pop().unwrap();
        assert_eq!((ev.src_col, ev.dst_col), (Some(0), Some(3)));
    }

    #[test]
    fn lut_eval_reads_nibble_pairs() {
        let mut a = array();
        a.write_row(0, ColMask::range(0, 4), &[0x5, 0x3, 0x0, 0x0]).unwrap();
        a.read_row_to_latch(0, ColMask::range(0, 4)).unwrap();
        let out = a.lut_eval(OpKind::SboxEval, &[0, 2], &crate::gf::SBOX).unwrap();
        assert_eq!(out, vec![0xED, 0x63]);
        assert_eq!(a.counts().get(OpKind::SboxEval), 1);
    }

    #[test]
    fn clock_and_energy_accounting() {
        let mut a = CrossbarArray::new(2, 2, CostTable::uniform(3, 2.5)).unwrap();
        a.set_tracing(true);
        a.write_cell(0, 0, 1).unwrap();
        a.read_row_to_latch(0, ColMask::single(0)).unwrap();
        assert_eq!(a.clock(), 6);
        assert_eq!(a.energy_pj(), 5.0);
        let trace = a.take_trace();
        assert_eq!(trace[1].cycle, 3);
        assert_eq!(trace.iter().map(|e| e.energy_pj).sum::<f64>(), a.energy_pj());
    }

    #[test]
    fn cost_table_requires_all_entries() {
        let partial = OpKind::COSTED[..6].iter().map(|&k| (k, OpCost::default()));
        assert_eq!(
            CostTable::from_entries(partial),
            Err(CrossbarError::MissingCostEntry("buffer_writeback"))
        );
        let full = OpKind::COSTED.iter().map(|&k| (k, OpCost { cycles: 2, energy_pj: 1.0 }));
        assert_eq!(CostTable::from_entries(full).unwrap(), CostTable::uniform(2, 1.0));
        let bad = OpKind::COSTED.iter().map(|&k| (k, OpCost { cycles: 0, energy_pj: -1.0 }));
        assert!(CostTable::from_entries(bad).is_err());
    }

    #[test]
    fn event_json_shape() {
        let mut a = array();
        a.write_row(1, ColMask::range(0, 2), &[3, 4]).unwrap();
        let line = serde_json::to_string(&a.take_trace()[0]).unwrap();
        assert_eq!(
            line,
            r#"{"cycle":0,"bank":0,"lane":0,"op":"ROW_WRITE","row":1,"col_mask":3,"energy_pJ":1.0,"values":[3,4]}"#
        );
        let back: MicroOpEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back.values, vec![3, 4]);
    }
}
