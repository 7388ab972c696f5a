//! Ciphertext state families and their ensemble density matrices.
//!
//! A label-`x` state for keys `k_1..k_w` and one-time key `i` is the uniform
//! superposition over the coset `{i ⊕ x'_1 k_1 ⊕ … ⊕ x'_w k_w}` with sign
//! `(-1)^{x · x'}`. The sign of the `|i⟩` branch is always `+`, so for the
//! single-bit scheme the phase of label 1 sits on the `|i ⊕ k⟩` branch.
//!
//! The register is split into `w` equal blocks, block 0 being the most
//! significant. Key `k_j` has odd weight on block `j` and even weight on every
//! other block, which is what lets a `Z` pattern on block `j` flip bit `x_j`
//! without knowledge of the keys.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bitmath::{self, BitPermutation, BitString, ParityClass};
use crate::circuit::{Circuit, GateOp, Register};
use crate::error::{Error, Result};
use crate::linalg::{DensityMatrix, StateVector, SymmetricMatrix};
use crate::Budget;

use std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    SingleBit,
    TwoBit,
    /// `l` plaintext bits per ciphertext.
    MultiBit(usize),
}

impl Scheme {
    /// Plaintext bits carried per ciphertext.
    pub fn bits(&self) -> usize {
        match self {
            Scheme::SingleBit => 1,
            Scheme::TwoBit => 2,
            Scheme::MultiBit(l) => *l,
        }
    }

    pub fn check_width(&self, n: usize) -> Result<()> {
        let l = self.bits();
        if l == 0 {
            return Err(Error::SchemeMismatch("multi-bit scheme needs l >= 1".into()));
        }
        if n == 0 || n > bitmath::MAX_WIDTH {
            return Err(Error::WidthTooLarge { width: n, max: bitmath::MAX_WIDTH });
        }
        if n % l != 0 {
            return Err(Error::SchemeMismatch(format!("{self} needs n divisible by {l}, got n = {n}")));
        }
        Ok(())
    }

    /// Width of each parity block.
    pub fn block_width(&self, n: usize) -> usize {
        n / self.bits()
    }

    /// Build from the command-line form: `1bit`, `2bit`, or `lbit` with `l`.
    pub fn from_flag(name: &str, l: Option<usize>) -> Result<Self> {
        match (name, l) {
            ("1bit", _) => Ok(Scheme::SingleBit),
            ("2bit", _) => Ok(Scheme::TwoBit),
            ("lbit", Some(l)) if l >= 1 => Ok(Scheme::MultiBit(l)),
            ("lbit", _) => Err(Error::InvalidParameter("scheme lbit requires l >= 1".into())),
            _ => name.parse(),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::SingleBit => f.write_str("1bit"),
            Scheme::TwoBit => f.write_str("2bit"),
            Scheme::MultiBit(l) => write!(f, "lbit({l})"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1bit" => Ok(Scheme::SingleBit),
            "2bit" => Ok(Scheme::TwoBit),
            _ => s
                .strip_prefix("lbit(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|l| l.parse().ok())
                .filter(|&l| l >= 1)
                .map(Scheme::MultiBit)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown scheme {s:?}"))),
        }
    }
}

impl Serialize for Scheme {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(D::Error::custom)
    }
}

/// Plaintext bits `x_1 … x_w`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Plaintext(Vec<bool>);

impl Plaintext {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(width: usize) -> Self {
        Self(vec![false; width])
    }

    /// `x_1` is the most significant bit of `value`.
    pub fn from_index(value: usize, width: usize) -> Self {
        Self((0..width).map(|j| (value >> (width - 1 - j)) & 1 == 1).collect())
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    /// All `2^width` plaintexts in index order.
    pub fn all(width: usize) -> Vec<Plaintext> {
        (0..1usize << width).map(|v| Self::from_index(v, width)).collect()
    }
}

impl fmt::Display for Plaintext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Plaintext {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::InvalidParameter("empty plaintext".into()));
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::InvalidParameter(format!("plaintext {s:?} is not a bit string"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Plaintext)
    }
}

impl Serialize for Plaintext {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Plaintext {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(D::Error::custom)
    }
}

/// Keys for one ciphertext with a valid parity structure.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyTuple {
    pub n: usize,
    pub scheme: Scheme,
    pub keys: Vec<BitString>,
}

impl KeyTuple {
    pub fn new(n: usize, scheme: Scheme, keys: Vec<BitString>) -> Result<Self> {
        validate_keys(n, scheme, &keys)?;
        Ok(Self { n, scheme, keys })
    }
}

/// Block `j` of key `j` odd, every other block even.
pub fn validate_keys(n: usize, scheme: Scheme, keys: &[BitString]) -> Result<()> {
    scheme.check_width(n)?;
    let l = scheme.bits();
    if keys.len() != l {
        return Err(Error::InvalidKey(format!("{scheme} needs {l} keys, got {}", keys.len())));
    }
    for (j, k) in keys.iter().enumerate() {
        if k.width() != n {
            return Err(Error::WidthMismatch { left: n, right: k.width() });
        }
        for (q, part) in k.split(l)?.iter().enumerate() {
            let want = if q == j { ParityClass::Omega } else { ParityClass::Pi };
            if part.classify() != want {
                return Err(Error::InvalidKey(format!(
                    "key {} = {k} has block {} of {} weight",
                    j + 1,
                    q + 1,
                    if want == ParityClass::Omega { "even" } else { "odd" }
                )));
            }
        }
    }
    Ok(())
}

/// Every valid key tuple, in lexicographic order of `(k_1, …, k_w)` values.
pub fn enumerate_key_tuples(n: usize, scheme: Scheme) -> Result<Vec<Vec<BitString>>> {
    scheme.check_width(n)?;
    let l = scheme.bits();
    let m = scheme.block_width(n);
    let odd = bitmath::enumerate_class(m, ParityClass::Omega)?;
    let even = bitmath::enumerate_class(m, ParityClass::Pi)?;
    let keys_for = |j: usize| -> Result<Vec<BitString>> {
        let mut acc: Vec<Vec<BitString>> = vec![Vec::new()];
        for q in 0..l {
            let class = if q == j { &odd } else { &even };
            acc = acc
                .into_iter()
                .flat_map(|prefix| {
                    class.iter().map(move |b| {
                        let mut p = prefix.clone();
                        p.push(*b);
                        p
                    })
                })
                .collect();
        }
        acc.iter().map(|blocks| BitString::concat(blocks)).collect()
    };
    let mut tuples: Vec<Vec<BitString>> = vec![Vec::new()];
    for j in 0..l {
        let choices = keys_for(j)?;
        tuples = tuples
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |k| {
                    let mut t = prefix.clone();
                    t.push(*k);
                    t
                })
            })
            .collect();
    }
    Ok(tuples)
}

/// Number of valid key tuples, `2^{l(n-l)}`.
pub fn key_tuple_count(n: usize, scheme: Scheme) -> Result<u128> {
    scheme.check_width(n)?;
    let l = scheme.bits() as u32;
    let exp = l * (n as u32 - l);
    if exp >= 128 {
        return Err(Error::Infeasible(format!("2^{exp} key tuples")));
    }
    Ok(1u128 << exp)
}

/// A ciphertext (or public-key) state plus its public metadata.
///
/// The plaintext label is kept only for test oracles; it is never serialised
/// and adversary-facing code only sees [`CipherState::vector`].
#[derive(Debug, Clone, PartialEq)]
pub struct CipherState {
    n: usize,
    scheme: Scheme,
    vector: StateVector,
    label: Option<Plaintext>,
}

impl CipherState {
    pub fn from_vector(n: usize, scheme: Scheme, vector: StateVector) -> Result<Self> {
        scheme.check_width(n)?;
        if vector.qubits() != n {
            return Err(Error::DimensionMismatch { left: 1 << n, right: vector.dim() });
        }
        Ok(Self { n, scheme, vector, label: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn vector(&self) -> &StateVector {
        &self.vector
    }

    /// Plaintext this state was prepared with, if known. Oracle use only.
    pub fn label(&self) -> Option<&Plaintext> {
        self.label.as_ref()
    }

    /// `2^w` nonzero amplitudes, each of magnitude `2^{-w/2}`.
    pub fn check_structure(&self) -> Result<()> {
        let w = self.scheme.bits();
        let magnitude = (-(w as f64) / 2.0).exp2();
        let support = self.vector.support(1e-12);
        if support.len() != 1 << w {
            return Err(Error::DecryptionIntegrity(format!(
                "support has {} entries, expected {}",
                support.len(),
                1 << w
            )));
        }
        if let Some(&j) = support.iter().find(|&&j| (self.vector.amplitudes()[j].abs() - magnitude).abs() > 1e-9) {
            return Err(Error::DecryptionIntegrity(format!("amplitude at {j} has the wrong magnitude")));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CipherStateJson {
    n: usize,
    scheme: Scheme,
    amplitudes: Vec<f64>,
}

impl Serialize for CipherState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CipherStateJson { n: self.n, scheme: self.scheme, amplitudes: self.vector.amplitudes().to_vec() }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CipherState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = CipherStateJson::deserialize(deserializer)?;
        let vector = StateVector::new(raw.amplitudes).map_err(D::Error::custom)?;
        CipherState::from_vector(raw.n, raw.scheme, vector).map_err(D::Error::custom)
    }
}

fn check_i(n: usize, i: &BitString) -> Result<()> {
    if i.width() != n {
        return Err(Error::WidthMismatch { left: n, right: i.width() });
    }
    Ok(())
}

fn check_label(scheme: Scheme, label: &Plaintext) -> Result<()> {
    if label.width() != scheme.bits() {
        return Err(Error::PlaintextWidth { expected: scheme.bits(), got: label.width() });
    }
    Ok(())
}

/// `(|i⟩ + (-1)^b |i ⊕ k⟩) / √2` for `k ∈ Ω_n`.
pub fn pure_single(n: usize, k: &BitString, i: &BitString, b: bool) -> Result<CipherState> {
    validate_keys(n, Scheme::SingleBit, std::slice::from_ref(k))?;
    check_i(n, i)?;
    let mut amps = vec![0.0; 1 << n];
    amps[i.index()] = FRAC_1_SQRT_2;
    amps[i.xor(k)?.index()] = if b { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    Ok(CipherState {
        n,
        scheme: Scheme::SingleBit,
        vector: StateVector::from_raw(amps),
        label: Some(Plaintext::new(vec![b])),
    })
}

/// Two-bit state on the coset `{i, i⊕k1, i⊕k2, i⊕k1⊕k2}`. Signs, in that
/// order, are `++++`, `++--`, `+-+-`, `+--+` for `xy = 00, 01, 10, 11`.
pub fn pure_two_bit(n: usize, k1: &BitString, k2: &BitString, i: &BitString, xy: &Plaintext) -> Result<CipherState> {
    validate_keys(n, Scheme::TwoBit, &[*k1, *k2])?;
    check_i(n, i)?;
    check_label(Scheme::TwoBit, xy)?;
    let signs: [f64; 4] = match (xy.bits()[0], xy.bits()[1]) {
        (false, false) => [1.0, 1.0, 1.0, 1.0],
        (false, true) => [1.0, 1.0, -1.0, -1.0],
        (true, false) => [1.0, -1.0, 1.0, -1.0],
        (true, true) => [1.0, -1.0, -1.0, 1.0],
    };
    let coset = [*i, i.xor(k1)?, i.xor(k2)?, i.xor(k1)?.xor(k2)?];
    let mut amps = vec![0.0; 1 << n];
    for (c, s) in coset.iter().zip(signs) {
        amps[c.index()] = 0.5 * s;
    }
    Ok(CipherState { n, scheme: Scheme::TwoBit, vector: StateVector::from_raw(amps), label: Some(xy.clone()) })
}

/// Sparse `(index, amplitude)` entries of the general `l`-bit state.
fn coset_entries(keys: &[BitString], i: &BitString, label: &Plaintext) -> Vec<(usize, f64)> {
    let l = keys.len();
    let amp = (-(l as f64) / 2.0).exp2();
    let x = label.index();
    (0..1usize << l)
        .map(|choice| {
            // choice bit (l - 1 - j) selects k_j, matching Plaintext::index.
            let mut idx = i.value();
            for (j, k) in keys.iter().enumerate() {
                if (choice >> (l - 1 - j)) & 1 == 1 {
                    idx ^= k.value();
                }
            }
            let sign = if (choice & x).count_ones() % 2 == 0 { amp } else { -amp };
            (idx as usize, sign)
        })
        .collect()
}

/// `2^{-l/2} Σ_{x'} (-1)^{x·x'} |i ⊕ x'_1 k_1 ⊕ … ⊕ x'_l k_l⟩`.
pub fn pure_multi(n: usize, l: usize, keys: &[BitString], i: &BitString, xs: &Plaintext) -> Result<CipherState> {
    let scheme = Scheme::MultiBit(l);
    validate_keys(n, scheme, keys)?;
    check_i(n, i)?;
    check_label(scheme, xs)?;
    let mut amps = vec![0.0; 1 << n];
    for (idx, a) in coset_entries(keys, i, xs) {
        amps[idx] += a;
    }
    Ok(CipherState { n, scheme, vector: StateVector::from_raw(amps), label: Some(xs.clone()) })
}

/// State for any scheme, dispatching to the dedicated constructors.
pub fn pure_state(scheme: Scheme, keys: &[BitString], i: &BitString, label: &Plaintext) -> Result<CipherState> {
    let n = i.width();
    check_label(scheme, label)?;
    match scheme {
        Scheme::SingleBit => {
            let k = keys.first().ok_or_else(|| Error::InvalidKey("missing key".into()))?;
            if keys.len() != 1 {
                return Err(Error::InvalidKey(format!("1bit needs 1 key, got {}", keys.len())));
            }
            pure_single(n, k, i, label.bits()[0])
        }
        Scheme::TwoBit => {
            if keys.len() != 2 {
                return Err(Error::InvalidKey(format!("2bit needs 2 keys, got {}", keys.len())));
            }
            pure_two_bit(n, &keys[0], &keys[1], i, label)
        }
        Scheme::MultiBit(l) => pure_multi(n, l, keys, i, label),
    }
}

/// Gate sequence building `(|i⟩ + |i ⊕ k⟩)/√2`: a `W_H(k)`-qubit GHZ block on
/// the top qubits, X gates imprinting the permuted `i`, then swaps undoing the
/// top-aligning permutation of `k`.
pub fn prepare_via_ghz(n: usize, k: &BitString, i: &BitString) -> Result<(Circuit, CipherState)> {
    validate_keys(n, Scheme::SingleBit, std::slice::from_ref(k))?;
    let circuit = ghz_circuit(n, k, i)?;
    let vector = circuit.simulate()?;
    let state = CipherState { n, scheme: Scheme::SingleBit, vector, label: Some(Plaintext::zeros(1)) };
    Ok((circuit, state))
}

/// Circuit preparing `(|i⟩ + |i ⊕ k⟩)/√2` for any nonzero `k`.
pub fn ghz_circuit(n: usize, k: &BitString, i: &BitString) -> Result<Circuit> {
    if k.width() != n {
        return Err(Error::WidthMismatch { left: n, right: k.width() });
    }
    check_i(n, i)?;
    let perm = bitmath::permutation_for(k)?;
    let weight = k.hamming_weight() as usize;
    let permuted_i = perm.apply(i)?;

    let mut circuit = Circuit::new(n);
    let top = n - 1;
    circuit.push(GateOp::H { target: top })?;
    for j in 1..weight {
        circuit.push(GateOp::Cnot { control: top, target: top - j })?;
    }
    for q in (0..n).filter(|&q| permuted_i.bit(q)) {
        circuit.push(GateOp::X { target: q })?;
    }
    let undo: BitPermutation = perm.inverse();
    for (a, b) in undo.transpositions() {
        circuit.push(GateOp::Swap { a, b })?;
    }
    Ok(circuit)
}

/// `Z` on every qubit of each block `j` with `x_j = 1`.
pub fn z_pattern(n: usize, scheme: Scheme, label: &Plaintext) -> Result<Circuit> {
    scheme.check_width(n)?;
    check_label(scheme, label)?;
    let l = scheme.bits();
    let m = scheme.block_width(n);
    let mut circuit = Circuit::new(n);
    for (j, &x) in label.bits().iter().enumerate() {
        if x {
            let low = (l - 1 - j) * m;
            for q in low..low + m {
                circuit.push(GateOp::Z { target: q })?;
            }
        }
    }
    Ok(circuit)
}

/// Applies the `Z` pattern for `label` to `state`. Needs no key material.
/// The result's label is the XOR of the old label (if known) and `label`.
pub fn apply_z_pattern(state: &CipherState, label: &Plaintext) -> Result<CipherState> {
    let circuit = z_pattern(state.n, state.scheme, label)?;
    let mut reg = Register::from_state(&state.vector);
    reg.run(&circuit)?;
    let new_label = state.label.as_ref().map(|old| {
        Plaintext::new(old.bits().iter().zip(label.bits()).map(|(a, b)| a ^ b).collect())
    });
    Ok(CipherState { n: state.n, scheme: state.scheme, vector: reg.into_state()?, label: new_label })
}

/// `Z^{⊗n}`: turns a single-bit label-0 state into label 1, up to global sign.
pub fn encode_bit(state: &CipherState) -> Result<CipherState> {
    if state.scheme != Scheme::SingleBit {
        return Err(Error::SchemeMismatch(format!("encode_bit needs 1bit, got {}", state.scheme)));
    }
    apply_z_pattern(state, &Plaintext::new(vec![true]))
}

fn check_dim(n: usize, budget: &Budget) -> Result<()> {
    let dim = 1usize << n;
    if dim > budget.max_dim {
        return Err(Error::DimensionCap { dim, cap: budget.max_dim });
    }
    Ok(())
}

/// `2^{-n} Σ_i |ψ_{keys,i}^label⟩⟨ψ_{keys,i}^label|`.
pub fn mixed_over_i(n: usize, scheme: Scheme, keys: &[BitString], label: &Plaintext, budget: &Budget) -> Result<DensityMatrix> {
    validate_keys(n, scheme, keys)?;
    check_label(scheme, label)?;
    check_dim(n, budget)?;
    let dim = 1usize << n;
    let mut acc = SymmetricMatrix::zeros(dim);
    let weight = 1.0 / dim as f64;
    for i in 0..dim as u64 {
        let i = BitString::new(i, n)?;
        acc.add_sparse_outer(&coset_entries(keys, &i, label), weight);
    }
    DensityMatrix::from_ensemble(acc)
}

/// Uniform average over every valid key tuple and every `i`. Terms are added
/// in ascending key order, then ascending `i`, so results are reproducible.
pub fn mixed_full_ensemble(n: usize, scheme: Scheme, label: &Plaintext, budget: &Budget) -> Result<DensityMatrix> {
    scheme.check_width(n)?;
    check_label(scheme, label)?;
    check_dim(n, budget)?;
    let tuples = key_tuple_count(n, scheme)?;
    let terms = tuples.saturating_mul(1u128 << n);
    if terms > budget.max_terms as u128 {
        return Err(Error::Infeasible(format!(
            "{scheme} ensemble at n = {n} needs {terms} rank-1 terms (budget {})",
            budget.max_terms
        )));
    }
    let dim = 1usize << n;
    let weight = 1.0 / terms as f64;
    let mut acc = SymmetricMatrix::zeros(dim);
    for keys in enumerate_key_tuples(n, scheme)? {
        for i in 0..dim as u64 {
            let i = BitString::new(i, n)?;
            acc.add_sparse_outer(&coset_entries(&keys, &i, label), weight);
        }
    }
    DensityMatrix::from_ensemble(acc)
}

/// `(4 / 2^{2n}) A_odd`, where `A_odd[i][j] = 1` iff `W_H(i)` and `W_H(j)`
/// have different parity. Equals `ρ_odd^0 − ρ_odd^1` for the single-bit scheme.
pub fn analytic_diff(n: usize, budget: &Budget) -> Result<SymmetricMatrix> {
    check_dim(n, budget)?;
    let scale = 4.0 / (1u64 << (2 * n)) as f64;
    SymmetricMatrix::from_fn(1 << n, |i, j| {
        if (i.count_ones() + j.count_ones()) % 2 == 1 {
            scale
        } else {
            0.0
        }
    })
}

/// `A_odd` itself (unscaled).
pub fn a_odd(n: usize, budget: &Budget) -> Result<SymmetricMatrix> {
    Ok(analytic_diff(n, budget)?.scale((1u64 << (2 * n)) as f64 / 4.0))
}
