#![allow(dead_code)]

use aes_imc_core::{parse_block_hex, Block};
use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

pub const VECTORS: &str = include_str!("../data/aes128_vectors.txt");
pub const SBOX_TABLE: &str = include_str!("../data/fips197_sbox.txt");
pub const ROUND1: &str = include_str!("../data/fips197_round1.txt");

/// (key, plaintext, ciphertext) triples.
pub fn vectors() -> Vec<(Block, Block, Block)> {
    VECTORS
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<Block> = l.split_whitespace().map(|h| parse_block_hex(h).unwrap()).collect();
            (f[0], f[1], f[2])
        })
        .collect()
}

pub fn sbox_table() -> Vec<u8> {
    SBOX_TABLE.split_whitespace().map(|h| u8::from_str_radix(h, 16).unwrap()).collect()
}

pub fn round1(tag: &str) -> Block {
    let line = ROUND1.lines().find(|l| l.split_whitespace().next() == Some(tag)).unwrap();
    parse_block_hex(line.split_whitespace().nth(1).unwrap()).unwrap()
}

pub fn h(s: &str) -> Block {
    parse_block_hex(s).unwrap()
}

pub fn random_blocks(seed: u64, n: usize) -> Vec<(Block, Block)> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut block = || {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        b
    };
    (0..n).map(|_| (block(), block())).collect()
}

/// Product in GF(2^8) by carry-less multiply and long division.
pub fn gf_mul_ref(a: u8, b: u8) -> u8 {
    let mut p: u16 = 0;
    for i in 0..8 {
        if (b >> i) & 1 == 1 {
            p ^= (a as u16) << i;
        }
    }
    for d in (8..16).rev() {
        if p & (1 << d) != 0 {
            p ^= 0x11B << (d - 8);
        }
    }
    p as u8
}

/// MixColumns by the circulant matrix, written directly from its definition.
pub fn mix_column_ref(c: [u8; 4]) -> [u8; 4] {
    const M: [[u8; 4]; 4] = [[2, 3, 1, 1], [1, 2, 3, 1], [1, 1, 2, 3], [3, 1, 1, 2]];
    std::array::from_fn(|r| (0..4).fold(0, |acc, k| acc ^ gf_mul_ref(M[r][k], c[k])))
}
