//! Bit-exact AES-128 encryption used as the golden model for the in-memory
//! datapath.
//!
//! State bytes are loaded column-major from the 128-bit block: block byte
//! `k` lands at row `k % 4`, column `k / 4`.

use std::fmt;

use crate::gf::{sbox_lut, xtime};

pub const BLOCK_BYTES: usize = 16;
/// Key length in 32-bit words.
pub const NK: usize = 4;
/// Block length in 32-bit words.
pub const NB: usize = 4;
/// Rounds for a 128-bit key.
pub const NR: usize = 10;

pub type Block = [u8; BLOCK_BYTES];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HexError {
    #[error("expected 32 hex characters, found {0}")]
    Length(usize),
    #[error("invalid hex digit")]
    Digit,
}

/// Parses a 128-bit block from 32 hex characters (no prefix).
pub fn parse_block_hex(s: &str) -> Result<Block, HexError> {
    if s.len() != 2 * BLOCK_BYTES {
        return Err(HexError::Length(s.len()));
    }
    let mut out = [0u8; BLOCK_BYTES];
    hex::decode_to_slice(s, &mut out).map_err(|_| HexError::Digit)?;
    Ok(out)
}

/// Lowercase hex, no prefix.
pub fn block_to_hex(b: &Block) -> String {
    hex::encode(b)
}

/// The 4×4 byte matrix `S[row][col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AesState {
    bytes: [[u8; 4]; 4],
}

impl AesState {
    pub fn from_block(block: &Block) -> Self {
        let mut bytes = [[0u8; 4]; 4];
        for (k, &b) in block.iter().enumerate() {
            bytes[k % 4][k / 4] = b;
        }
        AesState { bytes }
    }

    pub fn to_block(&self) -> Block {
        let mut out = [0u8; BLOCK_BYTES];
        for (k, b) in out.iter_mut().enumerate() {
            *b = self.bytes[k % 4][k / 4];
        }
        out
    }

    pub fn from_rows(rows: [[u8; 4]; 4]) -> Self {
        AesState { bytes: rows }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.bytes[row][col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.bytes[row][col] = v;
    }

    pub fn rows(&self) -> &[[u8; 4]; 4] {
        &self.bytes
    }

    pub fn column(&self, col: usize) -> [u8; 4] {
        [self.bytes[0][col], self.bytes[1][col], self.bytes[2][col], self.bytes[3][col]]
    }

    pub fn set_column(&mut self, col: usize, c: [u8; 4]) {
        for (row, v) in c.into_iter().enumerate() {
            self.bytes[row][col] = v;
        }
    }
}

impl fmt::Display for AesState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&block_to_hex(&self.to_block()))
    }
}

pub fn sub_bytes(s: &AesState) -> AesState {
    let mut out = *s;
    for row in out.bytes.iter_mut() {
        for b in row.iter_mut() {
            *b = sbox_lut(*b);
        }
    }
    out
}

/// Row `i` rotates left by `i` positions.
pub fn shift_rows(s: &AesState) -> AesState {
    let mut out = *s;
    for (i, row) in out.bytes.iter_mut().enumerate() {
        row.rotate_left(i);
    }
    out
}

/// One column through the circulant (2 3 1 1) matrix.
pub fn mix_single_column(c: [u8; 4]) -> [u8; 4] {
    let m3 = |x: u8| xtime(x) ^ x;
    [
        xtime(c[0]) ^ m3(c[1]) ^ c[2] ^ c[3],
        c[0] ^ xtime(c[1]) ^ m3(c[2]) ^ c[3],
        c[0] ^ c[1] ^ xtime(c[2]) ^ m3(c[3]),
        m3(c[0]) ^ c[1] ^ c[2] ^ xtime(c[3]),
    ]
}

/// The shared-term form used by the in-memory datapath:
/// `S'_i = T ⊕ 2·S_i ⊕ 2·S_{i+1} ⊕ S_i` with `T = S_0 ⊕ S_1 ⊕ S_2 ⊕ S_3`.
pub fn mix_single_column_shared_term(c: [u8; 4]) -> [u8; 4] {
    let t = c[0] ^ c[1] ^ c[2] ^ c[3];
    std::array::from_fn(|i| t ^ xtime(c[i]) ^ xtime(c[(i + 1) % 4]) ^ c[i])
}

pub fn mix_columns(s: &AesState) -> AesState {
    let mut out = *s;
    for col in 0..4 {
        out.set_column(col, mix_single_column(s.column(col)));
    }
    out
}

pub fn add_round_key(s: &AesState, round_key: &Block) -> AesState {
    let key = AesState::from_block(round_key);
    let mut out = *s;
    for r in 0..4 {
        for c in 0..4 {
            out.bytes[r][c] ^= key.bytes[r][c];
        }
    }
    out
}

/// Round constants for rounds 1..=10, stored as the high byte of a word.
pub const RCON: [u32; NR] = {
    let mut out = [0u32; NR];
    let mut rc = 1u8;
    let mut i = 0;
    while i < NR {
        out[i] = (rc as u32) << 24;
        rc = xtime(rc);
        i += 1;
    }
    out
};

pub fn rot_word(w: u32) -> u32 {
    w.rotate_left(8)
}

pub fn sub_word(w: u32) -> u32 {
    u32::from_be_bytes(w.to_be_bytes().map(sbox_lut))
}

/// Produces the four words of round key `round` (1..=10) from the previous
/// round key's words.
pub fn next_round_words(prev: [u32; 4], round: usize) -> [u32; 4] {
    debug_assert!((1..=NR).contains(&round));
    let t = sub_word(rot_word(prev[3])) ^ RCON[round - 1];
    let w0 = prev[0] ^ t;
    let w1 = prev[1] ^ w0;
    let w2 = prev[2] ^ w1;
    let w3 = prev[3] ^ w2;
    [w0, w1, w2, w3]
}

/// The 44 expanded key words `W_0..W_43`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySchedule {
    words: [u32; NB * (NR + 1)],
}

impl KeySchedule {
    pub fn words(&self) -> &[u32; NB * (NR + 1)] {
        &self.words
    }

    pub fn word(&self, i: usize) -> u32 {
        self.words[i]
    }

    /// Round key `round` (0 = cipher key) as a 16-byte block.
    pub fn round_key(&self, round: usize) -> Block {
        let mut out = [0u8; BLOCK_BYTES];
        for (i, chunk) in out.chunks_exact_mut(4).enumerate() {
            chunk.copy_from_slice(&self.words[NB * round + i].to_be_bytes());
        }
        out
    }
}

pub fn expand_key(key: &Block) -> KeySchedule {
    let mut words = [0u32; NB * (NR + 1)];
    for (i, chunk) in key.chunks_exact(4).enumerate() {
        words[i] = u32::from_be_bytes(chunk.try_into().unwrap());
    }
    for i in NK..words.len() {
        let mut t = words[i - 1];
        if i % NK == 0 {
            t = sub_word(rot_word(t)) ^ RCON[i / NK - 1];
        }
        words[i] = words[i - NK] ^ t;
    }
    KeySchedule { words }
}

pub fn encrypt_block(plaintext: &Block, key: &Block) -> Block {
    let ks = expand_key(key);
    let mut s = add_round_key(&AesState::from_block(plaintext), &ks.round_key(0));
    for round in 1..NR {
        s = sub_bytes(&s);
        s = shift_rows(&s);
        s = mix_columns(&s);
        s = add_round_key(&s, &ks.round_key(round));
    }
    s = sub_bytes(&s);
    s = shift_rows(&s);
    s = add_round_key(&s, &ks.round_key(NR));
    s.to_block()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(s: &str) -> Block {
        parse_block_hex(s).unwrap()
    }

    #[test]
    fn column_major_loading() {
        let b: Block = std::array::from_fn(|i| i as u8);
        let s = AesState::from_block(&b);
        assert_eq!(s.get(0, 0), 0);
        assert_eq!(s.get(1, 0), 1);
        assert_eq!(s.get(0, 1), 4);
        assert_eq!(s.get(2, 3), 14);
        assert_eq!(s.to_block(), b);
    }

    #[test]
    fn sub_bytes_zero_state() {
        let s = sub_bytes(&AesState::default());
        assert!(s.rows().iter().flatten().all(|&b| b == 0x63));
    }

    #[test]
    fn shift_rows_definition() {
        let s = AesState::from_rows([[1, 2, 3, 4], [0xa, 0xb, 0xc, 0xd], [5, 6, 7, 8], [9, 10, 11, 12]]);
        let t = shift_rows(&s);
        assert_eq!(t.rows()[0], [1, 2, 3, 4]);
        assert_eq!(t.rows()[1], [0xb, 0xc, 0xd, 0xa]);
        assert_eq!(t.rows()[2], [7, 8, 5, 6]);
        assert_eq!(t.rows()[3], [12, 9, 10, 11]);
        let mut u = s;
        for _ in 0..4 {
            u = shift_rows(&u);
        }
        assert_eq!(u, s);
        let constant_rows = AesState::from_rows([[7; 4], [8; 4], [9; 4], [1; 4]]);
        assert_eq!(shift_rows(&constant_rows), constant_rows);
    }

    #[test]
    fn mix_columns_examples() {
        assert_eq!(mix_single_column([0; 4]), [0; 4]);
        assert_eq!(mix_single_column([0x00, 0x44, 0x88, 0xCC])[0], 0x88);
        // classic test column
        assert_eq!(mix_single_column([0xdb, 0x13, 0x53, 0x45]), [0x8e, 0x4d, 0xa1, 0xbc]);
    }

    #[test]
    fn add_round_key_examples() {
        let s = AesState::from_block(&h("00112233445566778899aabbccddeeff"));
        assert_eq!(add_round_key(&s, &[0; 16]), s);
        let k = h("0f0e0d0c0b0a09080706050403020100");
        assert_eq!(add_round_key(&add_round_key(&s, &k), &k), s);
    }

    #[test]
    fn key_expansion_examples() {
        let ks = expand_key(&[0; 16]);
        assert_eq!(ks.word(4), 0x6263_6363);
        let key = h("2b7e151628aed2a6abf7158809cf4f3c");
        let ks = expand_key(&key);
        assert_eq!(ks.round_key(0), key);
        assert_eq!(ks.word(4), 0xa0fa_fe17);
        assert_eq!(ks.word(43), 0xb663_0ca6);
        assert_eq!(RCON[0], 0x0100_0000);
        assert_eq!(RCON[9], 0x3600_0000);
    }

    #[test]
    fn incremental_words_match_schedule() {
        let ks = expand_key(&h("2b7e151628aed2a6abf7158809cf4f3c"));
        let mut w = [ks.word(0), ks.word(1), ks.word(2), ks.word(3)];
        for round in 1..=NR {
            w = next_round_words(w, round);
            assert_eq!(&w[..], &ks.words()[4 * round..4 * round + 4]);
        }
    }

    #[test]
    fn hex_errors() {
        assert_eq!(parse_block_hex("abc"), Err(HexError::Length(3)));
        assert_eq!(parse_block_hex(&"zz".repeat(16)), Err(HexError::Digit));
        assert_eq!(block_to_hex(&h("000102030405060708090A0B0C0D0E0F")), "000102030405060708090a0b0c0d0e0f");
    }
}
