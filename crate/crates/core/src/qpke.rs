//! Key generation, encryption and circuit-based decryption.
//!
//! The private key is a 256-bit seed standing in for a random map `F` from
//! public tags `s` to key tuples. `F(s)` hashes the seed with `s` and fixes one
//! bit per block so the tuple has the scheme's parity structure. Each public
//! key pairs a fresh `s` with a label-zero state under a fresh one-time `i`.
//!
//! Decryption runs the controlled-XOR circuit on one ancilla per plaintext bit
//! (`H`, `C_{k_j}`, `H`) and reads the ancillas. For a well-formed ciphertext
//! every ancilla ends in a basis state, so the readout is deterministic.

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bitmath::{self, BitString, ParityClass};
use crate::circuit::{Circuit, GateOp, Register};
use crate::error::{Error, Result};
use crate::linalg::StateVector;
use crate::states::{self, CipherState, Plaintext, Scheme};

/// Ancilla readout must be within this of 0 or 1.
pub const READOUT_TOLERANCE: f64 = 1e-9;

/// Where public tags `s` are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagDomain {
    /// Odd-weight `n`-bit strings (the default).
    Omega,
    /// Any `m`-bit string.
    Wide(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyMode {
    /// A fresh tag per public key; no reuse budget.
    FreshTag,
    /// Every public key uses this tag (and so the same key tuple).
    FixedKey { s: BitString },
}

pub struct PrivateKey {
    n: usize,
    scheme: Scheme,
    seed: [u8; 32],
    domain: TagDomain,
    mode: KeyMode,
    used: AtomicUsize,
    t_max: AtomicUsize,
}

impl Clone for PrivateKey {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            scheme: self.scheme,
            seed: self.seed,
            domain: self.domain,
            mode: self.mode,
            used: AtomicUsize::new(self.used.load(Ordering::SeqCst)),
            t_max: AtomicUsize::new(self.t_max.load(Ordering::SeqCst)),
        }
    }
}

impl std::fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrivateKey")
            .field("n", &self.n)
            .field("scheme", &self.scheme)
            .field("domain", &self.domain)
            .field("mode", &self.mode)
            .field("used", &self.used.load(Ordering::SeqCst))
            .finish_non_exhaustive()
    }
}

/// Default reuse budget for fixed-key mode.
pub fn default_t_max(n: usize) -> usize {
    n.saturating_sub(1)
}

/// Build a fresh-tag private key.
pub fn keygen(n: usize, scheme: Scheme, seed: [u8; 32]) -> Result<PrivateKey> {
    scheme.check_width(n)?;
    Ok(PrivateKey {
        n,
        scheme,
        seed,
        domain: TagDomain::Omega,
        mode: KeyMode::FreshTag,
        used: AtomicUsize::new(0),
        t_max: AtomicUsize::new(usize::MAX),
    })
}

/// Expands a `u64` into a 32-byte seed.
pub fn seed_from_u64(seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"qpke-seed");
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

impl PrivateKey {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn domain(&self) -> TagDomain {
        self.domain
    }

    pub fn mode(&self) -> KeyMode {
        self.mode
    }

    pub fn used(&self) -> usize {
        self.used.load(Ordering::SeqCst)
    }

    /// Draw tags from all `m`-bit strings instead of `Ω_n`.
    pub fn with_wide_tags(mut self, m: usize) -> Result<Self> {
        if m == 0 || m > bitmath::MAX_WIDTH {
            return Err(Error::WidthTooLarge { width: m, max: bitmath::MAX_WIDTH });
        }
        self.domain = TagDomain::Wide(m);
        Ok(self)
    }

    /// Switch to fixed-key mode on tag `s` with the default budget `n - 1`.
    pub fn with_fixed_key(mut self, s: BitString) -> Result<Self> {
        self.check_tag(&s)?;
        self.mode = KeyMode::FixedKey { s };
        self.t_max.store(default_t_max(self.n), Ordering::SeqCst);
        Ok(self)
    }

    pub fn is_admissible(&self, s: &BitString) -> bool {
        self.check_tag(s).is_ok()
    }

    fn check_tag(&self, s: &BitString) -> Result<()> {
        match self.domain {
            TagDomain::Omega => {
                if s.width() != self.n {
                    return Err(Error::WidthMismatch { left: self.n, right: s.width() });
                }
                if s.classify() != ParityClass::Omega {
                    return Err(Error::InvalidKey(format!("tag {s} has even weight")));
                }
            }
            TagDomain::Wide(m) => {
                if s.width() != m {
                    return Err(Error::WidthMismatch { left: m, right: s.width() });
                }
            }
        }
        Ok(())
    }

    pub fn sample_tag<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BitString> {
        match self.domain {
            TagDomain::Omega => bitmath::sample_class(self.n, ParityClass::Omega, rng),
            TagDomain::Wide(m) => BitString::new(rng.random::<u64>() & bitmath::low_mask(m), m),
        }
    }

    /// `F(s)`: deterministic key tuple with the scheme's parity structure.
    pub fn f_eval(&self, s: &BitString) -> Result<Vec<BitString>> {
        self.check_tag(s)?;
        let l = self.scheme.bits();
        let m = self.scheme.block_width(self.n);
        let mut stream = KeyStream::new(&self.seed, s);
        (0..l)
            .map(|j| {
                let blocks: Vec<BitString> = (0..l)
                    .map(|q| {
                        let class = if q == j { ParityClass::Omega } else { ParityClass::Pi };
                        bitmath::with_parity(stream.take(m), m, class)
                    })
                    .collect();
                BitString::concat(&blocks)
            })
            .collect()
    }

    fn reserve_copy(&self) -> Result<()> {
        if let KeyMode::FixedKey { .. } = self.mode {
            let t_max = self.t_max.load(Ordering::SeqCst);
            self.used
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| (u < t_max).then_some(u + 1))
                .map_err(|used| Error::BudgetExceeded { used, t_max })?;
        } else {
            self.used.fetch_add(1, Ordering::SeqCst);
        }
        Ok(())
    }

    /// A new public key: fresh tag (or the fixed one) and a fresh uniform `i`.
    pub fn publish<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PublicKey> {
        Ok(self.publish_traced(rng)?.0)
    }

    /// As [`publish`](Self::publish), also returning the hidden key material.
    /// For oracles and tests.
    pub fn publish_traced<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(PublicKey, KeyMaterial)> {
        let s = match self.mode {
            KeyMode::FreshTag => self.sample_tag(rng)?,
            KeyMode::FixedKey { s } => s,
        };
        let keys = self.f_eval(&s)?;
        let i = BitString::new(rng.random::<u64>() & bitmath::low_mask(self.n), self.n)?;
        let state = states::pure_state(self.scheme, &keys, &i, &Plaintext::zeros(self.scheme.bits()))?;
        self.reserve_copy()?;
        Ok((PublicKey { s, state }, KeyMaterial { keys, i }))
    }
}

/// SHA-256 counter-mode bit stream keyed by `(seed, s)`.
struct KeyStream {
    base: Sha256,
    counter: u32,
    buffer: Vec<bool>,
}

impl KeyStream {
    fn new(seed: &[u8; 32], s: &BitString) -> Self {
        let mut base = Sha256::new();
        base.update(b"qpke-f");
        base.update(seed);
        base.update((s.width() as u32).to_le_bytes());
        base.update(s.value().to_le_bytes());
        Self { base, counter: 0, buffer: Vec::new() }
    }

    fn take(&mut self, bits: usize) -> u64 {
        while self.buffer.len() < bits {
            let mut h = self.base.clone();
            h.update(self.counter.to_le_bytes());
            self.counter += 1;
            let digest = h.finalize();
            for byte in digest.iter().rev() {
                for b in 0..8 {
                    self.buffer.push((byte >> b) & 1 == 1);
                }
            }
        }
        self.buffer.drain(..bits).enumerate().fold(0u64, |acc, (j, b)| acc | (u64::from(b) << j))
    }
}

/// Hidden material behind a public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    pub keys: Vec<BitString>,
    pub i: BitString,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicKey {
    pub s: BitString,
    pub state: CipherState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ciphertext {
    pub s: BitString,
    pub state: CipherState,
}

/// Applies the plaintext's `Z` pattern to the public-key state.
pub fn encrypt(public: &PublicKey, plaintext: &Plaintext) -> Result<Ciphertext> {
    let state = states::apply_z_pattern(&public.state, plaintext)?;
    Ok(Ciphertext { s: public.s, state })
}

/// Register after the decryption circuit, ancillas above the data qubits.
#[derive(Debug, Clone)]
pub struct DecryptionRun {
    pub register: Register,
    /// Ancilla readout distribution, indexed by plaintext index.
    pub readout: Vec<f64>,
    pub circuit: Circuit,
}

/// Ancilla for bit `x_j` sits at qubit `n + (w - 1 - j)`, so the ancilla
/// register value is the plaintext index.
pub fn decryption_circuit(n: usize, keys: &[BitString]) -> Result<Circuit> {
    let w = keys.len();
    let mut circuit = Circuit::new(n + w);
    for (j, k) in keys.iter().enumerate() {
        let control = n + (w - 1 - j);
        circuit.push(GateOp::H { target: control })?;
        circuit.push(GateOp::CXorK { control, k: *k, offset: 0 })?;
        circuit.push(GateOp::H { target: control })?;
    }
    Ok(circuit)
}

fn check_ciphertext(private: &PrivateKey, ct: &Ciphertext) -> Result<Vec<BitString>> {
    if ct.state.n() != private.n || ct.state.scheme() != private.scheme {
        return Err(Error::SchemeMismatch(format!(
            "ciphertext is {} over {} qubits, key is {} over {}",
            ct.state.scheme(),
            ct.state.n(),
            private.scheme,
            private.n
        )));
    }
    private.f_eval(&ct.s)
}

/// Simulates the decryption circuit without interpreting the readout.
pub fn run_decryption(private: &PrivateKey, ct: &Ciphertext) -> Result<DecryptionRun> {
    let keys = check_ciphertext(private, ct)?;
    let circuit = decryption_circuit(private.n, &keys)?;
    let mut register = Register::with_ancillas(ct.state.vector(), keys.len());
    register.run(&circuit)?;
    let readout = register.marginal_of_top(keys.len());
    Ok(DecryptionRun { register, readout, circuit })
}

/// Support must lie in one coset of `span{k_j}`.
fn check_single_coset(vector: &StateVector, keys: &[BitString]) -> Result<()> {
    let mut span: HashSet<u64> = HashSet::from([0]);
    for k in keys {
        let shifted: Vec<u64> = span.iter().map(|v| v ^ k.value()).collect();
        span.extend(shifted);
    }
    let support = vector.support(1e-12);
    let Some(&anchor) = support.first() else {
        return Err(Error::DecryptionIntegrity("empty support".into()));
    };
    if let Some(&j) = support.iter().find(|&&j| !span.contains(&((j ^ anchor) as u64))) {
        return Err(Error::DecryptionIntegrity(format!(
            "basis states {anchor} and {j} lie in different cosets of the key span"
        )));
    }
    Ok(())
}

/// Decryption result with the post-circuit data register.
#[derive(Debug, Clone)]
pub struct Decrypted {
    pub plaintext: Plaintext,
    pub data: StateVector,
}

/// Deterministic decryption; any ancilla readout strictly between 0 and 1,
/// or support spread over several cosets, is an integrity error.
pub fn decrypt_full(private: &PrivateKey, ct: &Ciphertext) -> Result<Decrypted> {
    let keys = check_ciphertext(private, ct)?;
    decrypt_with_keys(&keys, &ct.state)
}

/// The decryption circuit for explicit keys, bypassing `F`.
pub fn decrypt_with_keys(keys: &[BitString], state: &CipherState) -> Result<Decrypted> {
    let n = state.n();
    states::validate_keys(n, state.scheme(), keys)?;
    check_single_coset(state.vector(), keys)?;
    let circuit = decryption_circuit(n, keys)?;
    let mut register = Register::with_ancillas(state.vector(), keys.len());
    register.run(&circuit)?;
    let readout = register.marginal_of_top(keys.len());
    let (index, p) = readout
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one outcome");
    if p < 1.0 - READOUT_TOLERANCE {
        return Err(Error::DecryptionIntegrity(format!("ancilla readout is not deterministic (max probability {p})")));
    }
    let data = register.condition_top(n, index).expect("branch has probability close to 1");
    Ok(Decrypted { plaintext: Plaintext::from_index(index, keys.len()), data })
}

pub fn decrypt(private: &PrivateKey, ct: &Ciphertext) -> Result<Plaintext> {
    Ok(decrypt_full(private, ct)?.plaintext)
}

/// Born-rule readout of the ancillas, for ciphertexts that may be disturbed.
#[derive(Debug, Clone)]
pub struct SampledDecryption {
    pub plaintext: Plaintext,
    /// The readout distribution was concentrated on one outcome.
    pub deterministic: bool,
}

pub fn decrypt_sampled<R: Rng + ?Sized>(private: &PrivateKey, ct: &Ciphertext, rng: &mut R) -> Result<SampledDecryption> {
    let run = run_decryption(private, ct)?;
    let w = private.scheme.bits();
    let deterministic = run.readout.iter().any(|&p| p >= 1.0 - READOUT_TOLERANCE);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut index = run.readout.len() - 1;
    for (j, &p) in run.readout.iter().enumerate() {
        acc += p;
        if u < acc {
            index = j;
            break;
        }
    }
    Ok(SampledDecryption { plaintext: Plaintext::from_index(index, w), deterministic })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub n: usize,
    pub mode: String,
    pub used: usize,
    pub t_max: Option<usize>,
    pub remaining: Option<usize>,
    /// `sqrt(2^{t - n})` at `t = used`.
    pub bound_at_used: f64,
    /// `sqrt(2^{t - n})` at `t = t_max`.
    pub bound_at_t_max: Option<f64>,
    pub policy: String,
}

pub fn reuse_bound(n: usize, t: usize) -> f64 {
    ((t as f64 - n as f64) / 2.0).exp2()
}

/// Sets the fixed-key budget to `t_max` and reports usage. In fresh-tag mode
/// no budget applies and `t_max` is ignored.
pub fn enforce_budget(private: &PrivateKey, t_max: usize) -> UsageReport {
    let used = private.used();
    match private.mode {
        KeyMode::FixedKey { .. } => {
            private.t_max.store(t_max, Ordering::SeqCst);
            UsageReport {
                n: private.n,
                mode: "fixed-key".into(),
                used,
                t_max: Some(t_max),
                remaining: Some(t_max.saturating_sub(used)),
                bound_at_used: reuse_bound(private.n, used),
                bound_at_t_max: Some(reuse_bound(private.n, t_max)),
                policy: format!(
                    "policy choice: t_max defaults to n - 1 = {}; the copy bound only requires t = o(n)",
                    default_t_max(private.n)
                ),
            }
        }
        KeyMode::FreshTag => UsageReport {
            n: private.n,
            mode: "fresh-tag".into(),
            used,
            t_max: None,
            remaining: None,
            bound_at_used: reuse_bound(private.n, used),
            bound_at_t_max: None,
            policy: "fresh tag and one-time key per public key; no reuse budget applies".into(),
        },
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct PrivateKeyJson {
    n: usize,
    scheme: Scheme,
    seed_hex: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s_width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixed_s: Option<BitString>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    used: Option<usize>,
}

impl Serialize for PrivateKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let fixed = match self.mode {
            KeyMode::FixedKey { s } => Some(s),
            KeyMode::FreshTag => None,
        };
        PrivateKeyJson {
            n: self.n,
            scheme: self.scheme,
            seed_hex: hex::encode(self.seed),
            s_width: match self.domain {
                TagDomain::Wide(m) => Some(m),
                TagDomain::Omega => None,
            },
            fixed_s: fixed,
            t_max: fixed.map(|_| self.t_max.load(Ordering::SeqCst)),
            used: fixed.map(|_| self.used()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PrivateKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = PrivateKeyJson::deserialize(deserializer)?;
        let bytes = hex::decode(&raw.seed_hex).map_err(D::Error::custom)?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| D::Error::custom("seed-hex must encode 32 bytes"))?;
        let mut key = keygen(raw.n, raw.scheme, seed).map_err(D::Error::custom)?;
        if let Some(m) = raw.s_width {
            key = key.with_wide_tags(m).map_err(D::Error::custom)?;
        }
        if let Some(s) = raw.fixed_s {
            key = key.with_fixed_key(s).map_err(D::Error::custom)?;
            if let Some(t) = raw.t_max {
                key.t_max.store(t, Ordering::SeqCst);
            }
            key.used.store(raw.used.unwrap_or(0), Ordering::SeqCst);
        }
        Ok(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{enumerate_key_tuples, pure_single, pure_two_bit};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bs(v: u64, w: usize) -> BitString {
        BitString::new(v, w).unwrap()
    }

    fn pt(s: &str) -> Plaintext {
        s.parse().unwrap()
    }

    /// Private key whose `F` is replaced by fixed keys, for exhaustive checks.
    fn ciphertext_for(state: CipherState, s: BitString) -> Ciphertext {
        Ciphertext { s, state }
    }

    #[test]
    fn f_eval_parity_and_determinism() {
        let key = keygen(8, Scheme::SingleBit, seed_from_u64(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s = key.sample_tag(&mut rng).unwrap();
            let k = key.f_eval(&s).unwrap();
            assert_eq!(k[0].classify(), ParityClass::Omega);
            assert_eq!(k, key.f_eval(&s).unwrap());
        }
        let one = keygen(1, Scheme::SingleBit, seed_from_u64(9)).unwrap();
        assert_eq!(one.f_eval(&bs(1, 1)).unwrap(), vec![bs(1, 1)]);
    }

    #[test]
    fn f_eval_respects_parity_for_many_seeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..10_000u64 {
            let key = keygen(6, Scheme::TwoBit, seed_from_u64(trial)).unwrap();
            let s = key.sample_tag(&mut rng).unwrap();
            states::validate_keys(6, Scheme::TwoBit, &key.f_eval(&s).unwrap()).unwrap();
        }
    }

    #[test]
    fn f_eval_multi_bit_structure() {
        let key = keygen(6, Scheme::MultiBit(2), seed_from_u64(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let keys = key.f_eval(&key.sample_tag(&mut rng).unwrap()).unwrap();
            for (j, k) in keys.iter().enumerate() {
                for (q, part) in k.split(2).unwrap().iter().enumerate() {
                    assert_eq!(part.classify() == ParityClass::Omega, q == j);
                }
            }
        }
    }

    #[test]
    fn different_seeds_rarely_collide() {
        let a = keygen(8, Scheme::SingleBit, seed_from_u64(100)).unwrap();
        let b = keygen(8, Scheme::SingleBit, seed_from_u64(200)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let agree = (0..1000)
            .filter(|_| {
                let s = a.sample_tag(&mut rng).unwrap();
                a.f_eval(&s).unwrap() == b.f_eval(&s).unwrap()
            })
            .count();
        assert!(agree < 50, "{agree} agreements");
    }

    #[test]
    fn keygen_rejects_bad_widths() {
        assert!(matches!(keygen(3, Scheme::TwoBit, [0; 32]), Err(Error::SchemeMismatch(_))));
        assert!(matches!(keygen(7, Scheme::MultiBit(3), [0; 32]), Err(Error::SchemeMismatch(_))));
        let key = keygen(4, Scheme::SingleBit, [0; 32]).unwrap();
        assert!(key.f_eval(&bs(0b11, 4)).is_err());
        assert!(key.f_eval(&bs(1, 5)).is_err());
    }

    #[test]
    fn wide_tags() {
        let key = keygen(4, Scheme::SingleBit, [7; 32]).unwrap().with_wide_tags(20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = key.sample_tag(&mut rng).unwrap();
        assert_eq!(s.width(), 20);
        assert_eq!(key.f_eval(&s).unwrap()[0].classify(), ParityClass::Omega);
        let pk = key.publish(&mut rng).unwrap();
        assert_eq!(decrypt(&key, &encrypt(&pk, &pt("1")).unwrap()).unwrap(), pt("1"));
    }

    #[test]
    fn publish_examples() {
        let key = keygen(8, Scheme::SingleBit, seed_from_u64(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pk = key.publish(&mut rng).unwrap();
        assert_eq!(pk.state.vector().support(0.0).len(), 2);
        pk.state.check_structure().unwrap();
        for b in ["0", "1"] {
            for _ in 0..100 {
                let pk = key.publish(&mut rng).unwrap();
                assert_eq!(decrypt(&key, &encrypt(&pk, &pt(b)).unwrap()).unwrap(), pt(b));
            }
        }
    }

    #[test]
    fn fresh_one_time_keys() {
        // 10^4 publications at n = 8: consecutive one-time keys coincide with
        // probability 2^-8, so expect about 39 repeats.
        let key = keygen(8, Scheme::SingleBit, seed_from_u64(12)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut prev = key.publish_traced(&mut rng).unwrap().1.i;
        let mut repeats = 0;
        for _ in 0..10_000 {
            let i = key.publish_traced(&mut rng).unwrap().1.i;
            repeats += usize::from(i == prev);
            prev = i;
        }
        assert!((10..=80).contains(&repeats), "{repeats} repeats");
    }

    #[test]
    fn encrypt_examples() {
        let key = keygen(4, Scheme::SingleBit, seed_from_u64(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (pk, material) = key.publish_traced(&mut rng).unwrap();
        let ct0 = encrypt(&pk, &pt("0")).unwrap();
        assert_eq!(ct0.state.vector(), pk.state.vector());
        let ct1 = encrypt(&pk, &pt("1")).unwrap();
        let want = pure_single(4, &material.keys[0], &material.i, true).unwrap();
        assert!(ct1.state.vector().equals_up_to_sign(want.vector(), 1e-15));
        assert!(matches!(encrypt(&pk, &pt("10")), Err(Error::PlaintextWidth { .. })));

        let key = keygen(4, Scheme::TwoBit, seed_from_u64(3)).unwrap();
        let (pk, m) = key.publish_traced(&mut rng).unwrap();
        let ct = encrypt(&pk, &pt("10")).unwrap();
        let a = ct.state.vector().amplitudes();
        let (k1, k2, i) = (m.keys[0].value(), m.keys[1].value(), m.i.value());
        let signs: Vec<f64> = [i, i ^ k1, i ^ k2, i ^ k1 ^ k2]
            .iter()
            .map(|&j| a[j as usize] / a[i as usize])
            .collect();
        assert_eq!(signs, vec![1.0, -1.0, 1.0, -1.0]);
    }

    fn decrypt_with(keys: &[BitString], state: &CipherState) -> (Plaintext, StateVector) {
        let out = decrypt_with_keys(keys, state).unwrap();
        (out.plaintext, out.data)
    }

    #[test]
    fn circuit_decrypts_every_single_bit_state() {
        for n in [3, 4] {
            for k in bitmath::enumerate_class(n, ParityClass::Omega).unwrap() {
                for i in 0..1u64 << n {
                    for b in [false, true] {
                        let s = pure_single(n, &k, &bs(i, n), b).unwrap();
                        let (p, data) = decrypt_with(&[k], &s);
                        assert_eq!(p, Plaintext::new(vec![b]));
                        assert!(data.equals_up_to_sign(s.vector(), 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn circuit_decrypts_every_two_bit_state() {
        let n = 4;
        for keys in enumerate_key_tuples(n, Scheme::TwoBit).unwrap() {
            for i in 0..16 {
                for xy in Plaintext::all(2) {
                    let s = pure_two_bit(n, &keys[0], &keys[1], &bs(i, n), &xy).unwrap();
                    let (p, data) = decrypt_with(&keys, &s);
                    assert_eq!(p, xy);
                    assert!(data.equals_up_to_sign(s.vector(), 1e-12));
                }
            }
        }
    }

    #[test]
    fn decryption_is_non_demolition() {
        let key = keygen(4, Scheme::TwoBit, seed_from_u64(21)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for xy in Plaintext::all(2) {
            let ct = encrypt(&key.publish(&mut rng).unwrap(), &xy).unwrap();
            let out = decrypt_full(&key, &ct).unwrap();
            assert_eq!(out.plaintext, xy);
            assert!(out.data.equals_up_to_sign(ct.state.vector(), 1e-12));
        }
    }

    #[test]
    fn multi_bit_round_trip() {
        let key = keygen(6, Scheme::MultiBit(3), seed_from_u64(30)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            for x in Plaintext::all(3) {
                let ct = encrypt(&key.publish(&mut rng).unwrap(), &x).unwrap();
                assert_eq!(decrypt(&key, &ct).unwrap(), x);
            }
        }
    }

    #[test]
    fn corrupted_ciphertexts_fail_integrity() {
        let key = keygen(3, Scheme::SingleBit, seed_from_u64(40)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let pk = key.publish(&mut rng).unwrap();
        let support = pk.state.vector().support(0.0);
        // Collapse onto one branch, as a computational-basis measurement would.
        let collapsed = StateVector::basis(3, support[0]).unwrap();
        let ct = ciphertext_for(CipherState::from_vector(3, Scheme::SingleBit, collapsed).unwrap(), pk.s);
        assert!(matches!(decrypt(&key, &ct), Err(Error::DecryptionIntegrity(_))));
        let sampled = decrypt_sampled(&key, &ct, &mut rng).unwrap();
        assert!(!sampled.deterministic);
        // Superposition over two cosets with deterministic readout is still rejected.
        let k = key.f_eval(&pk.s).unwrap()[0].value() as usize;
        let other = (0..8).find(|&j| j != support[0] && j != support[0] ^ k).unwrap();
        let mut amps = vec![0.0; 8];
        for j in [support[0], support[0] ^ k, other, other ^ k] {
            amps[j] = 0.5;
        }
        let spread = StateVector::new(amps).unwrap();
        let ct = ciphertext_for(CipherState::from_vector(3, Scheme::SingleBit, spread).unwrap(), pk.s);
        assert!(matches!(decrypt(&key, &ct), Err(Error::DecryptionIntegrity(_))));
    }

    #[test]
    fn budget_in_fixed_key_mode() {
        let key = keygen(6, Scheme::SingleBit, seed_from_u64(50)).unwrap().with_fixed_key(bs(0b000111, 6)).unwrap();
        let report = enforce_budget(&key, 3);
        assert_eq!(report.t_max, Some(3));
        assert!((report.bound_at_t_max.unwrap() - (2f64.powi(-3)).sqrt()).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..3 {
            key.publish(&mut rng).unwrap();
        }
        assert_eq!(key.publish(&mut rng), Err(Error::BudgetExceeded { used: 3, t_max: 3 }));
        let report = enforce_budget(&key, 3);
        assert_eq!(report.remaining, Some(0));
        assert!(report.policy.contains("policy"));
    }

    #[test]
    fn fixed_key_default_budget_is_n_minus_one() {
        let key = keygen(4, Scheme::SingleBit, [1; 32]).unwrap().with_fixed_key(bs(1, 4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let keys: Vec<_> = (0..3).map(|_| key.publish_traced(&mut rng).unwrap().1.keys).collect();
        assert!(keys.windows(2).all(|w| w[0] == w[1]));
        assert!(matches!(key.publish(&mut rng), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn fresh_tag_mode_has_no_budget() {
        let key = keygen(3, Scheme::SingleBit, [2; 32]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..100 {
            key.publish(&mut rng).unwrap();
        }
        let report = enforce_budget(&key, 1);
        assert_eq!(report.t_max, None);
        assert_eq!(report.used, 100);
        key.publish(&mut rng).unwrap();
    }

    #[test]
    fn concurrent_publish_respects_budget() {
        let key = keygen(8, Scheme::SingleBit, [3; 32]).unwrap().with_fixed_key(bs(1, 8)).unwrap();
        enforce_budget(&key, 5);
        let ok = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..8u64)
                .map(|t| {
                    let key = &key;
                    scope.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(t);
                        usize::from(key.publish(&mut rng).is_ok())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).sum::<usize>()
        });
        assert_eq!(ok, 5);
        assert_eq!(key.used(), 5);
    }

    #[test]
    fn key_json_round_trip() {
        let key = keygen(4, Scheme::TwoBit, seed_from_u64(60)).unwrap();
        let json = serde_json::to_value(&key).unwrap();
        assert_eq!(json["n"], 4);
        assert_eq!(json["scheme"], "2bit");
        assert_eq!(json["seed-hex"].as_str().unwrap().len(), 64);
        let back: PrivateKey = serde_json::from_value(json).unwrap();
        let s = bs(0b0111, 4);
        assert_eq!(back.f_eval(&s).unwrap(), key.f_eval(&s).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let pk = key.publish(&mut rng).unwrap();
        let json = serde_json::to_value(&pk).unwrap();
        assert_eq!(json["s"]["width"], 4);
        assert_eq!(json["state"]["scheme"], "2bit");
        let back: PublicKey = serde_json::from_value(json).unwrap();
        let ct = encrypt(&back, &pt("11")).unwrap();
        let ct: Ciphertext = serde_json::from_str(&serde_json::to_string(&ct).unwrap()).unwrap();
        assert_eq!(decrypt(&key, &ct).unwrap(), pt("11"));
    }
}
