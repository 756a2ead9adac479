//! Micro-op programs that run each AES phase inside a pair of crossbar lanes.
//!
//! The 128-bit state is split across two 64-bit lanes: lane 0 holds state
//! columns 0–1 and lane 1 columns 2–3. Within a lane, state row `i` lives in
//! data row `data_rows[i]`; each byte occupies two adjacent cells, high
//! nibble first. ShiftRows is the only phase that moves bytes between
//! lanes, through an explicit cross-lane port.

use crate::aes::{expand_key, AesState, Block, KeySchedule, NR};
use crate::crossbar::{port_offset_write, ColMask, CostTable, CrossbarArray, CrossbarError, OpKind};
use crate::gf::{M2_LUT, SBOX};

pub const LANES: usize = 2;
const STATE_ROWS: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SequencerError {
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
    #[error("round {0} outside 1..=10")]
    InvalidRound(usize),
    #[error("key rows do not hold round key {expected}; rounds must advance in order")]
    KeySequence { expected: usize },
    #[error("lanes are busy")]
    LaneBusy,
    #[error("no block loaded")]
    NotLoaded,
    #[error("invalid lane layout: {0}")]
    Layout(String),
    #[error("parallelism units must be at least 1")]
    Parallelism,
}

pub type Result<T> = std::result::Result<T, SequencerError>;

/// Row assignment inside one lane's crossbar.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LaneLayout {
    pub data_rows: [usize; 4],
    pub key_rows: [usize; 4],
    pub m2_rows: [usize; 4],
    pub t_row: usize,
    pub scratch_rows: Vec<usize>,
    pub bytes_per_row: usize,
}

impl Default for LaneLayout {
    /// Rows 0–3 data, 4–7 key, 8–11 doubled bytes, 12 T-row, 13–15 scratch.
    fn default() -> Self {
        LaneLayout {
            data_rows: [0, 1, 2, 3],
            key_rows: [4, 5, 6, 7],
            m2_rows: [8, 9, 10, 11],
            t_row: 12,
            scratch_rows: vec![13, 14, 15],
            bytes_per_row: 2,
        }
    }
}

impl LaneLayout {
    /// Fills `scratch_rows` with every row not otherwise assigned.
    pub fn with_derived_scratch(mut self, rows: usize) -> Self {
        let used = self.assigned_rows();
        self.scratch_rows = (0..rows).filter(|r| !used.contains(r)).collect();
        self
    }

    fn assigned_rows(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .data_rows
            .iter()
            .chain(&self.key_rows)
            .chain(&self.m2_rows)
            .copied()
            .collect();
        v.push(self.t_row);
        v
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.bytes_per_row * LANES != 4 {
            return Err(SequencerError::Layout(format!(
                "bytes_per_row must be 2 for two 64-bit lanes, got {}",
                self.bytes_per_row
            )));
        }
        if 2 * self.bytes_per_row > cols {
            return Err(SequencerError::Layout(format!(
                "{} columns cannot hold {} bytes",
                cols, self.bytes_per_row
            )));
        }
        let mut all = self.assigned_rows();
        all.extend(&self.scratch_rows);
        if let Some(&r) = all.iter().find(|&&r| r >= rows) {
            return Err(SequencerError::Layout(format!("row {r} outside {rows} rows")));
        }
        let mut sorted = all.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != all.len() {
            return Err(SequencerError::Layout("row sets overlap".into()));
        }
        Ok(())
    }

    /// Cells occupied by the lane's bytes in any row.
    pub fn byte_mask(&self) -> ColMask {
        ColMask::range(0, 2 * self.bytes_per_row)
    }

    /// High-nibble column of each byte slot.
    pub fn byte_cols(&self) -> Vec<usize> {
        (0..self.bytes_per_row).map(|s| 2 * s).collect()
    }
}

/// Number of S-box and doubling units per lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParallelismConfig {
    pub sbox_units: usize,
    pub m2_units: usize,
}

impl Default for ParallelismConfig {
    fn default() -> Self {
        ParallelismConfig {
            sbox_units: 2,
            m2_units: 2,
        }
    }
}

impl ParallelismConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sbox_units == 0 || self.m2_units == 0 {
            return Err(SequencerError::Parallelism);
        }
        Ok(())
    }

    pub fn sbox_batches(&self, bytes_in_row: usize) -> usize {
        bytes_in_row.div_ceil(self.sbox_units)
    }

    pub fn m2_batches(&self, bytes_in_row: usize) -> usize {
        bytes_in_row.div_ceil(self.m2_units)
    }
}

/// Decoded MixColumns intermediates of one lane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixScratch {
    /// `T_j` per lane-local column.
    pub t_values: Vec<u8>,
    /// `2·S_{i,j}` per data row `i`, per lane-local column.
    pub m2_values: [Vec<u8>; 4],
}

/// Round-key source shared by every bank. The schedule is expanded once and
/// handed out read-only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyGenerator {
    schedule: KeySchedule,
}

impl KeyGenerator {
    pub fn new(key: &Block) -> Self {
        KeyGenerator {
            schedule: expand_key(key),
        }
    }

    pub fn cipher_key(&self) -> Block {
        self.schedule.round_key(0)
    }

    /// Round key `round` in 0..=10.
    pub fn round_key(&self, round: usize) -> Result<Block> {
        if round > NR {
            return Err(SequencerError::InvalidRound(round));
        }
        Ok(self.schedule.round_key(round))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneStatus {
    Idle,
    Loaded,
    Busy,
    Done,
}

fn nibbles(b: u8) -> [u8; 2] {
    [b >> 4, b & 0x0f]
}

fn join(hi: u8, lo: u8) -> u8 {
    (hi << 4) | lo
}

/// Which lane and slot hold state column `col`.
fn lane_slot(col: usize, bytes_per_row: usize) -> (usize, usize) {
    (col / bytes_per_row, col % bytes_per_row)
}

/// Two crossbar lanes processing one 128-bit block.
#[derive(Debug, Clone)]
pub struct LanePair {
    lanes: [CrossbarArray; LANES],
    layout: LaneLayout,
    parallelism: ParallelismConfig,
    port_cycles: u64,
    status: LaneStatus,
}

impl LanePair {
    pub fn new(
        rows: usize,
        cols: usize,
        cost: CostTable,
        layout: LaneLayout,
        parallelism: ParallelismConfig,
        port_cycles: u64,
        bank: u32,
    ) -> Result<Self> {
        layout.validate(rows, cols)?;
        parallelism.validate()?;
        let a = CrossbarArray::new(rows, cols, cost)?.with_ids(bank, 0);
        let b = CrossbarArray::new(rows, cols, cost)?.with_ids(bank, 1);
        Ok(LanePair {
            lanes: [a, b],
            layout,
            parallelism,
            port_cycles,
            status: LaneStatus::Idle,
        })
    }

    pub fn set_tracing(&mut self, on: bool) {
        self.lanes.iter_mut().for_each(|l| l.set_tracing(on));
    }

    pub fn lanes(&self) -> &[CrossbarArray; LANES] {
        &self.lanes
    }

    pub fn lanes_mut(&mut self) -> &mut [CrossbarArray; LANES] {
        &mut self.lanes
    }

    pub fn layout(&self) -> &LaneLayout {
        &self.layout
    }

    pub fn parallelism(&self) -> ParallelismConfig {
        self.parallelism
    }

    pub fn status(&self) -> LaneStatus {
        self.status
    }

    /// Latest clock across both lanes.
    pub fn clock(&self) -> u64 {
        self.lanes.iter().map(|l| l.clock()).max().unwrap_or(0)
    }

    /// Cross-lane barrier: both lanes continue from the later clock.
    pub fn sync(&mut self) {
        let t = self.clock();
        self.lanes.iter_mut().for_each(|l| l.advance_to(t));
    }

    fn begin_phase(&mut self) -> Result<()> {
        if self.status == LaneStatus::Idle {
            return Err(SequencerError::NotLoaded);
        }
        self.status = LaneStatus::Busy;
        Ok(())
    }

    /// Marks encryption complete so the block can be read out.
    pub fn finish(&mut self) {
        if self.status == LaneStatus::Busy {
            self.status = LaneStatus::Done;
        }
    }

    /// Writes the plaintext state and cipher key into both lanes.
    pub fn load_block(&mut self, plaintext: &Block, key: &Block) -> Result<()> {
        if self.status != LaneStatus::Idle {
            return Err(SequencerError::LaneBusy);
        }
        let state = AesState::from_block(plaintext);
        let key = AesState::from_block(key);
        self.write_state_rows(&state, RowSet::Data)?;
        self.write_state_rows(&key, RowSet::Key)?;
        self.lanes.iter_mut().for_each(|l| l.clear_sense());
        self.status = LaneStatus::Loaded;
        Ok(())
    }

    fn write_state_rows(&mut self, s: &AesState, which: RowSet) -> Result<()> {
        let bpr = self.layout.bytes_per_row;
        let mask = self.layout.byte_mask();
        for (lane_idx, lane) in self.lanes.iter_mut().enumerate() {
            for i in 0..STATE_ROWS {
                let row = match which {
                    RowSet::Data => self.layout.data_rows[i],
                    RowSet::Key => self.layout.key_rows[i],
                };
                let values: Vec<u8> = (0..bpr)
                    .flat_map(|slot| nibbles(s.get(i, lane_idx * bpr + slot)))
                    .collect();
                lane.write_row(row, mask, &values)?;
            }
        }
        Ok(())
    }

    fn decode_rows(&self, rows: &[usize; 4]) -> AesState {
        let bpr = self.layout.bytes_per_row;
        let mut s = AesState::default();
        for (i, &row) in rows.iter().enumerate() {
            for col in 0..4 {
                let (lane, slot) = lane_slot(col, bpr);
                let arr = &self.lanes[lane];
                let hi = arr.read_cell(row, 2 * slot).unwrap_or(0);
                let lo = arr.read_cell(row, 2 * slot + 1).unwrap_or(0);
                s.set(i, col, join(hi, lo));
            }
        }
        s
    }

    /// State currently held in the data rows. No cost.
    pub fn decode_state(&self) -> AesState {
        self.decode_rows(&self.layout.data_rows)
    }

    /// Round key currently held in the key rows. No cost.
    pub fn decode_key(&self) -> Block {
        self.decode_rows(&self.layout.key_rows).to_block()
    }

    pub fn decode_mix_scratch(&self, lane: usize) -> MixScratch {
        let arr = &self.lanes[lane];
        let decode_row = |row: usize| -> Vec<u8> {
            self.layout
                .byte_cols()
                .into_iter()
                .map(|c| join(arr.read_cell(row, c).unwrap_or(0), arr.read_cell(row, c + 1).unwrap_or(0)))
                .collect()
        };
        MixScratch {
            t_values: decode_row(self.layout.t_row),
            m2_values: self.layout.m2_rows.map(decode_row),
        }
    }

    /// Reads the ciphertext out of the data rows and releases the lanes.
    pub fn readout_block(&mut self) -> Result<Block> {
        match self.status {
            LaneStatus::Busy => return Err(SequencerError::LaneBusy),
            LaneStatus::Idle => return Err(SequencerError::NotLoaded),
            LaneStatus::Loaded | LaneStatus::Done => {}
        }
        let bpr = self.layout.bytes_per_row;
        let mask = self.layout.byte_mask();
        let mut s = AesState::default();
        for (lane_idx, lane) in self.lanes.iter_mut().enumerate() {
            for i in 0..STATE_ROWS {
                let cells = lane.read_row_to_latch(self.layout.data_rows[i], mask)?;
                for slot in 0..bpr {
                    s.set(i, lane_idx * bpr + slot, join(cells[2 * slot], cells[2 * slot + 1]));
                }
            }
        }
        self.status = LaneStatus::Idle;
        Ok(s.to_block())
    }

    /// Per data row: data → capacitors, key → latches, SA XOR, write back.
    pub fn add_round_key(&mut self) -> Result<()> {
        self.begin_phase()?;
        let mask = self.layout.byte_mask();
        for lane in self.lanes.iter_mut() {
            for i in 0..STATE_ROWS {
                lane.read_row_to_capacitor(self.layout.data_rows[i], mask)?;
                lane.read_row_to_latch(self.layout.key_rows[i], mask)?;
                lane.sa_xor(mask)?;
                lane.stage_latched(mask)?;
                lane.write_back_row(self.layout.data_rows[i])?;
            }
        }
        Ok(())
    }

    /// Latches row `row` and runs the S-box units over its bytes in batches
    /// of `sbox_units`. Returns the substituted bytes in slot order.
    fn sbox_row(lane: &mut CrossbarArray, layout: &LaneLayout, units: usize, row: usize) -> Result<Vec<u8>> {
        lane.read_row_to_latch(row, layout.byte_mask())?;
        let mut out = Vec::with_capacity(layout.bytes_per_row);
        for batch in layout.byte_cols().chunks(units) {
            out.extend(lane.lut_eval(OpKind::SboxEval, batch, &SBOX)?);
        }
        Ok(out)
    }

    /// SubBytes on its own: substituted bytes are staged in place and each
    /// row is written back once.
    pub fn sub_bytes(&mut self) -> Result<()> {
        self.begin_phase()?;
        let units = self.parallelism.sbox_units;
        for lane in self.lanes.iter_mut() {
            for i in 0..STATE_ROWS {
                let row = self.layout.data_rows[i];
                let subbed = Self::sbox_row(lane, &self.layout, units, row)?;
                for (slot, b) in subbed.into_iter().enumerate() {
                    let [hi, lo] = nibbles(b);
                    lane.stage(2 * slot, hi)?;
                    lane.stage(2 * slot + 1, lo)?;
                }
                lane.write_back_row(row)?;
            }
        }
        Ok(())
    }

    /// ShiftRows on its own: each row is latched and every nibble is routed
    /// to its rotated column, crossing lanes where needed.
    pub fn shift_rows(&mut self) -> Result<()> {
        self.begin_phase()?;
        let mask = self.layout.byte_mask();
        for i in 0..STATE_ROWS {
            let row = self.layout.data_rows[i];
            let mut bytes = [[0u8; 2]; LANES];
            for (lane_idx, lane) in self.lanes.iter_mut().enumerate() {
                let cells = lane.read_row_to_latch(row, mask)?;
                for slot in 0..self.layout.bytes_per_row {
                    bytes[lane_idx][slot] = join(cells[2 * slot], cells[2 * slot + 1]);
                }
            }
            self.route_shifted_row(i, &bytes)?;
        }
        Ok(())
    }

    /// SubBytes with ShiftRows folded into the write path: S-box outputs are
    /// staged directly at their rotated destinations, so each row is written
    /// back once for both phases.
    pub fn sub_bytes_shift_rows(&mut self) -> Result<()> {
        self.begin_phase()?;
        let units = self.parallelism.sbox_units;
        for i in 0..STATE_ROWS {
            let row = self.layout.data_rows[i];
            let mut bytes = [[0u8; 2]; LANES];
            for (lane_idx, lane) in self.lanes.iter_mut().enumerate() {
                let subbed = Self::sbox_row(lane, &self.layout, units, row)?;
                bytes[lane_idx].copy_from_slice(&subbed);
            }
            self.route_shifted_row(i, &bytes)?;
        }
        Ok(())
    }

    /// Offset-writes row `i` (`bytes[lane][slot]`) rotated left by `i`, then
    /// writes the row back in both lanes after a cross-lane barrier.
    fn route_shifted_row(&mut self, i: usize, bytes: &[[u8; 2]; LANES]) -> Result<()> {
        let bpr = self.layout.bytes_per_row;
        let row = self.layout.data_rows[i];
        for (src_lane, lane_bytes) in bytes.iter().enumerate() {
            for (src_slot, &byte) in lane_bytes.iter().enumerate().take(bpr) {
                let src_state_col = src_lane * bpr + src_slot;
                let dst_state_col = (src_state_col + 4 - i) % 4;
                let (dst_lane, dst_slot) = lane_slot(dst_state_col, bpr);
                for (n, v) in nibbles(byte).into_iter().enumerate() {
                    let src_col = 2 * src_slot + n;
                    let dst_col = 2 * dst_slot + n;
                    if src_lane == dst_lane {
                        self.lanes[src_lane].offset_write(src_col, dst_col, v)?;
                    } else {
                        let (lo, hi) = self.lanes.split_at_mut(1);
                        let (src, dst) = if src_lane == 0 {
                            (&mut lo[0], &mut hi[0])
                        } else {
                            (&mut hi[0], &mut lo[0])
                        };
                        port_offset_write(src, dst, src_col, dst_col, v, self.port_cycles)?;
                    }
                }
            }
        }
        self.sync();
        for lane in self.lanes.iter_mut() {
            lane.write_back_row(row)?;
        }
        Ok(())
    }

    /// Doubling pass: every data row through the M-2 units, staged and
    /// written to the matching buffer row.
    pub fn mix_m2_pass(&mut self) -> Result<()> {
        self.begin_phase()?;
        let units = self.parallelism.m2_units;
        for lane in self.lanes.iter_mut() {
            for i in 0..STATE_ROWS {
                lane.read_row_to_latch(self.layout.data_rows[i], self.layout.byte_mask())?;
                let mut doubled = Vec::with_capacity(self.layout.bytes_per_row);
                for batch in self.layout.byte_cols().chunks(units) {
                    doubled.extend(lane.lut_eval(OpKind::M2Eval, batch, &M2_LUT)?);
                }
                for (slot, b) in doubled.into_iter().enumerate() {
                    let [hi, lo] = nibbles(b);
                    lane.stage(2 * slot, hi)?;
                    lane.stage(2 * slot + 1, lo)?;
                }
                lane.write_back_row(self.layout.m2_rows[i])?;
            }
        }
        Ok(())
    }

    /// `T_j` for all columns at once: three pairwise XORs, each result
    /// written to the T-row.
    pub fn mix_t_pass(&mut self) -> Result<()> {
        self.begin_phase()?;
        let mask = self.layout.byte_mask();
        let d = self.layout.data_rows;
        let t = self.layout.t_row;
        for lane in self.lanes.iter_mut() {
            lane.read_row_to_capacitor(d[0], mask)?;
            lane.read_row_to_latch(d[1], mask)?;
            lane.sa_xor(mask)?;
            lane.stage_latched(mask)?;
            lane.write_back_row(t)?;
            for &row in &d[2..] {
                lane.read_row_to_capacitor(row, mask)?;
                lane.read_row_to_latch(t, mask)?;
                lane.sa_xor(mask)?;
                lane.stage_latched(mask)?;
                lane.write_back_row(t)?;
            }
        }
        Ok(())
    }

    /// Final combination, six steps per output row: latch `T_j`, XOR in
    /// `2·S_i`, XOR in `2·S_{i+1}`, XOR in `S_i`, stage, write back over `S_i`.
    pub fn mix_combine(&mut self) -> Result<()> {
        self.begin_phase()?;
        let mask = self.layout.byte_mask();
        let l = &self.layout;
        for lane in self.lanes.iter_mut() {
            for i in 0..STATE_ROWS {
                lane.read_row_to_latch(l.t_row, mask)?;
                for row in [l.m2_rows[i], l.m2_rows[(i + 1) % 4], l.data_rows[i]] {
                    lane.read_row_to_capacitor(row, mask)?;
                    lane.sa_xor(mask)?;
                }
                lane.stage_latched(mask)?;
                lane.write_back_row(l.data_rows[i])?;
            }
        }
        Ok(())
    }

    pub fn mix_columns(&mut self) -> Result<()> {
        self.mix_m2_pass()?;
        self.mix_t_pass()?;
        self.mix_combine()
    }

    /// Overwrites the key rows with round key `round`, which must follow the
    /// key currently held there.
    pub fn key_round_update(&mut self, keygen: &KeyGenerator, round: usize) -> Result<Block> {
        if !(1..=NR).contains(&round) {
            return Err(SequencerError::InvalidRound(round));
        }
        self.begin_phase()?;
        if self.decode_key() != keygen.round_key(round - 1)? {
            return Err(SequencerError::KeySequence { expected: round - 1 });
        }
        let rk = keygen.round_key(round)?;
        self.write_state_rows(&AesState::from_block(&rk), RowSet::Key)?;
        Ok(rk)
    }
}

#[derive(Clone, Copy)]
enum RowSet {
    Data,
    Key,
}
