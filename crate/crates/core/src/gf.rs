//! Arithmetic in GF(2^8) modulo the AES polynomial x^8 + x^4 + x^3 + x + 1.
//!
//! Everything here is `const fn` so the substitution and doubling tables can
//! be built at compile time from the same routines that the tests exercise.

use std::fmt;
use std::ops::{BitXor, BitXorAssign, Mul};

/// The reduction polynomial including the x^8 term.
pub const AES_MODULUS: u16 = 0x11B;

/// Additive constant of the S-box affine map.
pub const AFFINE_CONSTANT: u8 = 0x63;

/// Multiplication by `{02}`: shift left, reduce by 0x11B when bit 8 is set.
#[inline]
pub const fn xtime(a: u8) -> u8 {
    let wide = (a as u16) << 1;
    if wide & 0x100 != 0 {
        (wide ^ AES_MODULUS) as u8
    } else {
        wide as u8
    }
}

/// Multiplication by `{03}` as `2·a ⊕ a`.
#[inline]
pub const fn mul3(a: u8) -> u8 {
    xtime(a) ^ a
}

/// General field product via shift-and-add over the bits of `b`.
pub const fn gf_mul(a: u8, b: u8) -> u8 {
    let mut acc = 0u8;
    let mut a = a;
    let mut b = b;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        a = xtime(a);
        b >>= 1;
    }
    acc
}

/// Multiplicative inverse, computed as `a^254`. Zero maps to zero.
pub const fn gf_inverse(a: u8) -> u8 {
    // a^254 = a^(2+4+8+16+32+64+128)
    let mut result = 1u8;
    let mut square = gf_mul(a, a);
    let mut i = 1;
    while i < 8 {
        result = gf_mul(result, square);
        square = gf_mul(square, square);
        i += 1;
    }
    result
}

/// S-box value from first principles: inverse followed by the affine map
/// `b ⊕ rotl(b,1) ⊕ rotl(b,2) ⊕ rotl(b,3) ⊕ rotl(b,4) ⊕ 0x63`.
pub const fn sbox_computed(a: u8) -> u8 {
    let b = gf_inverse(a);
    b ^ b.rotate_left(1) ^ b.rotate_left(2) ^ b.rotate_left(3) ^ b.rotate_left(4) ^ AFFINE_CONSTANT
}

const fn build_sbox() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        table[i] = sbox_computed(i as u8);
        i += 1;
    }
    table
}

const fn build_m2() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        table[i] = xtime(i as u8);
        i += 1;
    }
    table
}

/// Precomputed substitution table (the ROM contents of the S-box unit).
pub static SBOX: [u8; 256] = build_sbox();

/// Precomputed multiply-by-two table used by the MixColumns peripheral.
pub static M2_LUT: [u8; 256] = build_m2();

#[inline]
pub fn sbox_lut(a: u8) -> u8 {
    SBOX[a as usize]
}

/// An element of GF(2^8).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct GfByte(pub u8);

impl GfByte {
    pub const ZERO: GfByte = GfByte(0);
    pub const ONE: GfByte = GfByte(1);

    pub const fn xtime(self) -> Self {
        GfByte(xtime(self.0))
    }

    pub const fn mul3(self) -> Self {
        GfByte(mul3(self.0))
    }

    pub const fn inverse(self) -> Self {
        GfByte(gf_inverse(self.0))
    }

    pub fn sbox(self) -> Self {
        GfByte(sbox_lut(self.0))
    }
}

impl From<u8> for GfByte {
    fn from(v: u8) -> Self {
        GfByte(v)
    }
}

impl From<GfByte> for u8 {
    fn from(v: GfByte) -> Self {
        v.0
    }
}

impl BitXor for GfByte {
    type Output = GfByte;
    fn bitxor(self, rhs: Self) -> Self {
        GfByte(self.0 ^ rhs.0)
    }
}

impl BitXorAssign for GfByte {
    fn bitxor_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

impl Mul for GfByte {
    type Output = GfByte;
    fn mul(self, rhs: Self) -> Self {
        GfByte(gf_mul(self.0, rhs.0))
    }
}

impl fmt::Display for GfByte {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02x}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Carry-less product followed by polynomial long division by 0x11B.
    /// Shares no code with `gf_mul`.
    fn clmul_reduce(a: u8, b: u8) -> u8 {
        let mut prod: u16 = 0;
        for bit in 0..8 {
            if (b >> bit) & 1 == 1 {
                prod ^= (a as u16) << bit;
            }
        }
        for deg in (8..16).rev() {
            if prod & (1 << deg) != 0 {
                prod ^= AES_MODULUS << (deg - 8);
            }
        }
        prod as u8
    }

    #[test]
    fn xtime_examples() {
        assert_eq!(xtime(0x00), 0x00);
        assert_eq!(xtime(0x57), 0xAE);
        assert_eq!(xtime(0xAE), 0x47);
        assert_eq!(clmul_reduce(0x57, 2), 0xAE);
        assert_eq!(clmul_reduce(0xAE, 2), 0x47);
    }

    #[test]
    fn mul3_examples() {
        assert_eq!(mul3(0x00), 0x00);
        assert_eq!(mul3(0x57), 0xF9);
        assert_eq!(mul3(0x44), 0xCC);
        assert_eq!(clmul_reduce(0x57, 3), 0xF9);
        assert_eq!(clmul_reduce(0x44, 3), 0xCC);
    }

    #[test]
    fn gf_mul_examples() {
        for a in 0..=255u8 {
            assert_eq!(gf_mul(a, 0x01), a);
            assert_eq!(gf_mul(0x02, a), xtime(a));
        }
        assert_eq!(gf_mul(0x53, 0xCA), 0x01);
    }

    #[test]
    fn gf_mul_matches_clmul_exhaustively() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(gf_mul(a, b), clmul_reduce(a, b), "{a:02x}*{b:02x}");
            }
        }
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(gf_inverse(0x00), 0x00);
        assert_eq!(gf_inverse(0x01), 0x01);
        assert_eq!(gf_inverse(0x53), 0xCA);
        let searched = (1..=255u8).find(|&b| clmul_reduce(0x53, b) == 1).unwrap();
        assert_eq!(searched, 0xCA);
    }

    #[test]
    fn inverse_is_inverse() {
        for a in 1..=255u8 {
            assert_eq!(gf_mul(a, gf_inverse(a)), 1);
        }
    }

    #[test]
    fn sbox_examples() {
        assert_eq!(sbox_computed(0x00), 0x63);
        assert_eq!(sbox_computed(0x53), 0xED);
        for a in 0..=255u8 {
            assert_eq!(sbox_computed(a), sbox_lut(a));
        }
    }

    #[test]
    fn newtype_ops() {
        let a = GfByte(0x57);
        assert_eq!(a * GfByte(0x13), GfByte(0xFE));
        assert_eq!(a.xtime(), GfByte(0xAE));
        assert_eq!(a ^ a, GfByte::ZERO);
        assert_eq!(GfByte(0x53).inverse(), GfByte(0xCA));
        assert_eq!(format!("{}", GfByte(0x0a)), "0a");
    }
}
