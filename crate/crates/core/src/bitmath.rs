//! Bit strings over `Z_{2^n}`, the odd/even Hamming-weight classes, and the
//! stable bit permutation that top-aligns the set bits of a key.
//!
//! Bit `j` of a [`BitString`] is bit `j` of its integer value, so bit `width - 1`
//! is the most significant. Quantum registers use the same convention: qubit `j`
//! is bit `j` of the basis-state index.

use std::fmt;

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Widest bit string representable.
pub const MAX_WIDTH: usize = 64;

/// Widest class that [`enumerate_class`] will materialise.
pub const ENUMERATION_GUARD: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    value: u64,
    width: usize,
}

impl BitString {
    pub fn new(value: u64, width: usize) -> Result<Self> {
        if width == 0 || width > MAX_WIDTH {
            return Err(Error::WidthTooLarge { width, max: MAX_WIDTH });
        }
        if width < 64 && value >> width != 0 {
            return Err(Error::ValueOutOfRange { value, width });
        }
        Ok(Self { value, width })
    }

    pub fn zero(width: usize) -> Result<Self> {
        Self::new(0, width)
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Value as an index into a `2^width` array.
    pub fn index(&self) -> usize {
        self.value as usize
    }

    pub fn bit(&self, j: usize) -> bool {
        j < self.width && (self.value >> j) & 1 == 1
    }

    pub fn hamming_weight(&self) -> u32 {
        self.value.count_ones()
    }

    pub fn classify(&self) -> ParityClass {
        ParityClass::of_weight(self.hamming_weight())
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        if self.width != other.width {
            return Err(Error::WidthMismatch { left: self.width, right: other.width });
        }
        Ok(BitString { value: self.value ^ other.value, width: self.width })
    }

    /// Splits into `parts` equal blocks, most significant block first.
    pub fn split(&self, parts: usize) -> Result<Vec<BitString>> {
        if parts == 0 || self.width % parts != 0 {
            return Err(Error::InvalidParameter(format!(
                "cannot split {} bits into {parts} equal parts",
                self.width
            )));
        }
        let m = self.width / parts;
        let mask = low_mask(m);
        Ok((0..parts)
            .map(|q| {
                let shift = (parts - 1 - q) * m;
                BitString { value: (self.value >> shift) & mask, width: m }
            })
            .collect())
    }

    /// Concatenates blocks, the first block becoming the most significant.
    pub fn concat(blocks: &[BitString]) -> Result<BitString> {
        let width: usize = blocks.iter().map(|b| b.width).sum();
        if width == 0 || width > MAX_WIDTH {
            return Err(Error::WidthTooLarge { width, max: MAX_WIDTH });
        }
        let value = blocks.iter().fold(0u64, |acc, b| {
            if b.width == 64 {
                b.value
            } else {
                (acc << b.width) | b.value
            }
        });
        BitString::new(value, width)
    }

    /// Lowercase hex, most significant digit first, `ceil(width / 4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = self.width.div_ceil(4);
        format!("{:0digits$x}", self.value)
    }

    pub fn from_hex(hex: &str, width: usize) -> Result<Self> {
        let value = u64::from_str_radix(hex, 16)
            .map_err(|e| Error::InvalidParameter(format!("bad hex {hex:?}: {e}")))?;
        Self::new(value, width)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0w$b}", self.value, w = self.width)
    }
}

#[derive(Serialize, Deserialize)]
struct BitStringJson {
    width: usize,
    hex: String,
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        BitStringJson { width: self.width, hex: self.to_hex() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = BitStringJson::deserialize(deserializer)?;
        BitString::from_hex(&raw.hex, raw.width).map_err(D::Error::custom)
    }
}

pub(crate) fn low_mask(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

pub fn hamming_weight(x: &BitString) -> u32 {
    x.hamming_weight()
}

pub fn classify(x: &BitString) -> ParityClass {
    x.classify()
}

/// Odd (`Omega`) or even (`Pi`) Hamming weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParityClass {
    Omega,
    Pi,
}

impl ParityClass {
    pub fn of_weight(weight: u32) -> Self {
        if weight % 2 == 1 {
            ParityClass::Omega
        } else {
            ParityClass::Pi
        }
    }

    pub fn contains(&self, x: &BitString) -> bool {
        x.classify() == *self
    }

    fn parity_bit(&self) -> u64 {
        match self {
            ParityClass::Omega => 1,
            ParityClass::Pi => 0,
        }
    }
}

/// All `2^(n-1)` members of the class, ascending.
pub fn enumerate_class(n: usize, class: ParityClass) -> Result<Vec<BitString>> {
    if n == 0 || n > ENUMERATION_GUARD {
        return Err(Error::WidthTooLarge { width: n, max: ENUMERATION_GUARD });
    }
    Ok((0..1u64 << n)
        .filter(|v| ParityClass::of_weight(v.count_ones()) == class)
        .map(|value| BitString { value, width: n })
        .collect())
}

/// Uniform draw from the class: `n - 1` free high bits, bit 0 fixes the parity.
pub fn sample_class<R: Rng + ?Sized>(n: usize, class: ParityClass, rng: &mut R) -> Result<BitString> {
    if n == 0 || n > MAX_WIDTH {
        return Err(Error::WidthTooLarge { width: n, max: MAX_WIDTH });
    }
    let free = if n == 1 { 0 } else { rng.random::<u64>() & low_mask(n - 1) };
    Ok(with_parity(free << 1, n, class))
}

/// Sets bit 0 of `high` (whose bit 0 must be clear) so the result lands in `class`.
pub(crate) fn with_parity(high: u64, n: usize, class: ParityClass) -> BitString {
    let high = high & low_mask(n) & !1;
    let fix = (u64::from(high.count_ones()) & 1) ^ class.parity_bit();
    BitString { value: high | fix, width: n }
}

/// Bijection on bit positions: bit `j` of the output is bit `mapping[j]` of the input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitPermutation {
    mapping: Vec<usize>,
}

impl BitPermutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        if n == 0 || n > MAX_WIDTH {
            return Err(Error::WidthTooLarge { width: n, max: MAX_WIDTH });
        }
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || seen[m] {
                return Err(Error::InvalidPermutation(format!("{mapping:?} is not a bijection")));
            }
            seen[m] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new((0..n).collect())
    }

    pub fn width(&self) -> usize {
        self.mapping.len()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn inverse(&self) -> BitPermutation {
        let mut inv = vec![0; self.mapping.len()];
        for (j, &m) in self.mapping.iter().enumerate() {
            inv[m] = j;
        }
        BitPermutation { mapping: inv }
    }

    pub fn apply(&self, x: &BitString) -> Result<BitString> {
        if x.width != self.width() {
            return Err(Error::WidthMismatch { left: self.width(), right: x.width });
        }
        let value = self
            .mapping
            .iter()
            .enumerate()
            .fold(0u64, |acc, (j, &src)| acc | (((x.value >> src) & 1) << j));
        Ok(BitString { value, width: x.width })
    }

    /// Transpositions `(a, b)` which, swapped in order, realise this permutation.
    /// At most `width - 1` of them.
    pub fn transpositions(&self) -> Vec<(usize, usize)> {
        let n = self.width();
        let mut current: Vec<usize> = (0..n).collect();
        let mut swaps = Vec::new();
        for j in 0..n {
            if current[j] == self.mapping[j] {
                continue;
            }
            let t = (j + 1..n)
                .find(|&t| current[t] == self.mapping[j])
                .expect("mapping is a bijection");
            current.swap(j, t);
            swaps.push((j, t));
        }
        swaps
    }
}

/// Stable permutation sending the set bits of `k` to the top `W_H(k)` positions.
pub fn permutation_for(k: &BitString) -> Result<BitPermutation> {
    if k.value == 0 {
        return Err(Error::ZeroKey);
    }
    let n = k.width;
    // Sources listed from the most significant output position downwards.
    let set = (0..n).rev().filter(|&j| k.bit(j));
    let unset = (0..n).rev().filter(|&j| !k.bit(j));
    let mut mapping = vec![0; n];
    for (slot, src) in set.chain(unset).enumerate() {
        mapping[n - 1 - slot] = src;
    }
    BitPermutation::new(mapping)
}

pub fn apply_permutation(p: &BitPermutation, x: &BitString) -> Result<BitString> {
    p.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bs(value: u64, width: usize) -> BitString {
        BitString::new(value, width).unwrap()
    }

    #[test]
    fn hamming_weight_examples() {
        assert_eq!(hamming_weight(&bs(0, 4)), 0);
        assert_eq!(hamming_weight(&bs(0b101, 3)), 2);
        assert_eq!(hamming_weight(&bs(0b1110, 4)), 3);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&bs(0b1, 2)), ParityClass::Omega);
        assert_eq!(classify(&bs(0b11, 2)), ParityClass::Pi);
        assert_eq!(classify(&bs(0, 5)), ParityClass::Pi);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(matches!(BitString::new(4, 2), Err(Error::ValueOutOfRange { .. })));
        assert!(BitString::new(0, 0).is_err());
        assert!(BitString::new(u64::MAX, 64).is_ok());
    }

    #[test]
    fn xor_requires_equal_widths() {
        assert_eq!(bs(0b10, 2).xor(&bs(0b11, 2)).unwrap(), bs(0b01, 2));
        assert!(matches!(bs(1, 2).xor(&bs(1, 3)), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn enumerate_examples() {
        let v = |n, c| -> Vec<u64> { enumerate_class(n, c).unwrap().iter().map(|b| b.value()).collect() };
        assert_eq!(v(2, ParityClass::Omega), vec![0b01, 0b10]);
        assert_eq!(v(3, ParityClass::Omega), vec![0b001, 0b010, 0b100, 0b111]);
        assert_eq!(v(1, ParityClass::Pi), vec![0]);
        assert!(matches!(enumerate_class(25, ParityClass::Pi), Err(Error::WidthTooLarge { .. })));
    }

    #[test]
    fn classes_partition_the_space() {
        for n in 1..=12 {
            let omega = enumerate_class(n, ParityClass::Omega).unwrap();
            let pi = enumerate_class(n, ParityClass::Pi).unwrap();
            assert_eq!(omega.len(), 1 << (n - 1));
            assert_eq!(pi.len(), 1 << (n - 1));
            let mut all: Vec<u64> = omega.iter().chain(pi.iter()).map(|b| b.value()).collect();
            all.sort_unstable();
            assert_eq!(all, (0..1u64 << n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn sample_class_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(sample_class(1, ParityClass::Omega, &mut rng).unwrap().value(), 1);
        assert_eq!(sample_class(1, ParityClass::Pi, &mut rng).unwrap().value(), 0);
        for _ in 0..100 {
            let s = sample_class(3, ParityClass::Omega, &mut rng).unwrap();
            assert!([1, 2, 4, 7].contains(&s.value()));
            let p = sample_class(40, ParityClass::Pi, &mut rng).unwrap();
            assert_eq!(p.classify(), ParityClass::Pi);
        }
    }

    #[test]
    fn sample_class_is_uniform() {
        // Chi-square over 10^5 draws on the 8 members of Omega_4.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let members = enumerate_class(4, ParityClass::Omega).unwrap();
        let mut counts = [0u64; 16];
        let draws = 100_000;
        for _ in 0..draws {
            counts[sample_class(4, ParityClass::Omega, &mut rng).unwrap().index()] += 1;
        }
        let expected = draws as f64 / 8.0;
        let chi2: f64 = members
            .iter()
            .map(|m| (counts[m.index()] as f64 - expected).powi(2) / expected)
            .sum();
        let total: u64 = members.iter().map(|m| counts[m.index()]).sum();
        assert_eq!(total, draws);
        let p = crate::stats::chi_square_sf(chi2, 7.0);
        assert!(p > 0.01, "chi2 = {chi2}, p = {p}");
    }

    #[test]
    fn permutation_examples() {
        let p = permutation_for(&bs(0b0101, 4)).unwrap();
        assert_eq!(p.apply(&bs(0b0101, 4)).unwrap(), bs(0b1100, 4));
        let q = permutation_for(&bs(0b1110, 4)).unwrap();
        assert_eq!(q.apply(&bs(0b1110, 4)).unwrap(), bs(0b1110, 4));
        let x = bs(0b1011, 4);
        assert_eq!(p.inverse().apply(&p.apply(&x).unwrap()).unwrap(), x);
        assert_eq!(permutation_for(&bs(0, 3)), Err(Error::ZeroKey));
    }

    #[test]
    fn identity_and_width_checks() {
        let id = BitPermutation::identity(5).unwrap();
        for v in 0..32 {
            assert_eq!(id.apply(&bs(v, 5)).unwrap(), bs(v, 5));
        }
        assert!(matches!(id.apply(&bs(1, 4)), Err(Error::WidthMismatch { .. })));
        assert!(BitPermutation::new(vec![0, 0, 1]).is_err());
        assert!(BitPermutation::new(vec![0, 3]).is_err());
    }

    #[test]
    fn permutation_top_aligns_and_is_linear() {
        for n in 1..=6 {
            let all: Vec<BitString> = (0..1u64 << n).map(|v| bs(v, n)).collect();
            for k in all.iter().filter(|k| k.value() != 0) {
                let p = permutation_for(k).unwrap();
                let w = k.hamming_weight() as usize;
                let top = (1u64 << n) - (1u64 << (n - w));
                assert_eq!(p.apply(k).unwrap().value(), top);
                for x in &all {
                    for y in &all {
                        let lhs = p.apply(&x.xor(y).unwrap()).unwrap();
                        let rhs = p.apply(x).unwrap().xor(&p.apply(y).unwrap()).unwrap();
                        assert_eq!(lhs, rhs);
                    }
                }
            }
        }
    }

    #[test]
    fn permutation_preserves_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = permutation_for(&bs(0b1001_0110, 8)).unwrap();
        for _ in 0..100 {
            let x = bs(rng.random::<u64>() & 0xff, 8);
            assert_eq!(p.apply(&x).unwrap().hamming_weight(), x.hamming_weight());
        }
    }

    #[test]
    fn transpositions_realise_the_permutation() {
        for n in 1..=6 {
            for k in 1..1u64 << n {
                let p = permutation_for(&bs(k, n)).unwrap();
                let swaps = p.transpositions();
                assert!(swaps.len() < n.max(1));
                for x in 0..1u64 << n {
                    let mut v = x;
                    for &(a, b) in &swaps {
                        let (ba, bb) = ((v >> a) & 1, (v >> b) & 1);
                        if ba != bb {
                            v ^= (1 << a) | (1 << b);
                        }
                    }
                    assert_eq!(v, p.apply(&bs(x, n)).unwrap().value());
                }
            }
        }
    }

    #[test]
    fn split_and_concat() {
        let x = bs(0b1101_0010, 8);
        let halves = x.split(2).unwrap();
        assert_eq!(halves, vec![bs(0b1101, 4), bs(0b0010, 4)]);
        assert_eq!(BitString::concat(&halves).unwrap(), x);
        assert!(x.split(3).is_err());
    }

    #[test]
    fn json_form() {
        let x = bs(0x1a5, 10);
        let json = serde_json::to_string(&x).unwrap();
        assert_eq!(json, r#"{"width":10,"hex":"1a5"}"#);
        assert_eq!(serde_json::from_str::<BitString>(&json).unwrap(), x);
        assert!(serde_json::from_str::<BitString>(r#"{"width":2,"hex":"f"}"#).is_err());
    }
}
