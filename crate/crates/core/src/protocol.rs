//! In-process simulation of Bob, the public register, Alice and Eve.
//!
//! Each message runs publish, fetch, encrypt, channel-send, an optional
//! eavesdrop and decrypt, and every step is logged as a transcript event. All
//! randomness derives from the session seed: Bob, Eve and the message source
//! draw from separate ChaCha streams, so adding a passive Eve never changes
//! Bob's draws.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{self, HelstromMeasurement};
use crate::bitmath::BitString;
use crate::error::{Error, Result};
use crate::linalg::StateVector;
use crate::qpke::{self, Ciphertext, PrivateKey, PublicKey};
use crate::states::{CipherState, Plaintext, Scheme};
use crate::Budget;

const BOB_STREAM: u64 = 0;
const EVE_STREAM: u64 = 1;
const MESSAGE_STREAM: u64 = 2;

/// Largest `n` for which the Helstrom measurement is built by brute force.
pub const HELSTROM_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Alice,
    Bob,
    Eve,
    Register,
}

/// Public keys awaiting pickup. Each key can be fetched once.
#[derive(Debug, Default)]
pub struct PublicRegister {
    queue: VecDeque<u64>,
    store: BTreeMap<u64, PublicKey>,
    fetched: BTreeSet<u64>,
    next_id: u64,
}

impl PublicRegister {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn post(&mut self, key: PublicKey) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.queue.push_back(id);
        self.store.insert(id, key);
        id
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    /// Oldest unfetched key.
    pub fn fetch_next(&mut self) -> Result<(u64, PublicKey)> {
        let id = *self.queue.front().ok_or(Error::RegisterEmpty)?;
        Ok((id, self.fetch(id)?))
    }

    pub fn fetch(&mut self, id: u64) -> Result<PublicKey> {
        if self.fetched.contains(&id) {
            return Err(Error::AlreadyFetched(id));
        }
        let key = self.store.remove(&id).ok_or(Error::UnknownKey(id))?;
        self.queue.retain(|&q| q != id);
        self.fetched.insert(id);
        Ok(key)
    }
}

/// Ordered single-producer, single-consumer queue for one edge.
#[derive(Debug)]
pub struct Channel<T> {
    queue: VecDeque<T>,
}

impl<T> Default for Channel<T> {
    fn default() -> Self {
        Self { queue: VecDeque::new() }
    }
}

impl<T> Channel<T> {
    pub fn send(&mut self, item: T) {
        self.queue.push_back(item);
    }

    pub fn recv(&mut self) -> Option<T> {
        self.queue.pop_front()
    }
}

/// Holds the private key; publishes and decrypts.
pub struct Bob {
    key: PrivateKey,
    rng: ChaCha8Rng,
    integrity_failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Received {
    pub plaintext: Plaintext,
    /// `strict` for a deterministic readout, `sampled` after an integrity error.
    pub mode: String,
    pub integrity_error: Option<String>,
}

impl Bob {
    pub fn new(key: PrivateKey, rng: ChaCha8Rng) -> Self {
        Self { key, rng, integrity_failures: 0 }
    }

    pub fn key(&self) -> &PrivateKey {
        &self.key
    }

    pub fn publish(&mut self) -> Result<PublicKey> {
        self.key.publish(&mut self.rng)
    }

    /// Strict decryption first; on an integrity error the failure is counted
    /// and the ancillas are read by Born-rule sampling instead.
    pub fn receive(&mut self, ct: &Ciphertext) -> Result<Received> {
        match qpke::decrypt(&self.key, ct) {
            Ok(plaintext) => Ok(Received { plaintext, mode: "strict".into(), integrity_error: None }),
            Err(Error::DecryptionIntegrity(reason)) => {
                self.integrity_failures += 1;
                let sampled = qpke::decrypt_sampled(&self.key, ct, &mut self.rng)?;
                Ok(Received { plaintext: sampled.plaintext, mode: "sampled".into(), integrity_error: Some(reason) })
            }
            Err(e) => Err(e),
        }
    }

    pub fn integrity_failures(&self) -> u64 {
        self.integrity_failures
    }
}

/// Encrypts with whatever public key the register hands out. Never sees the seed.
#[derive(Debug, Default)]
pub struct Alice;

impl Alice {
    pub fn encrypt(&self, key: &PublicKey, message: &Plaintext) -> Result<Ciphertext> {
        qpke::encrypt(key, message)
    }
}

/// What Eve did to one in-flight ciphertext.
#[derive(Debug, Clone)]
pub struct Interception {
    pub forwarded: Ciphertext,
    /// Guess of the first plaintext bit, if the strategy makes one.
    pub guess: Option<bool>,
    pub detail: serde_json::Value,
}

pub trait EveStrategy {
    fn name(&self) -> &'static str;
    fn intercept(&mut self, ct: Ciphertext, rng: &mut ChaCha8Rng) -> Result<Interception>;
    /// `½ + ½ D` for the first plaintext bit, when known.
    fn bound(&self) -> Option<f64>;
}

pub struct NoEve;

impl EveStrategy for NoEve {
    fn name(&self) -> &'static str {
        "none"
    }

    fn intercept(&mut self, ct: Ciphertext, _rng: &mut ChaCha8Rng) -> Result<Interception> {
        Ok(Interception { forwarded: ct, guess: None, detail: serde_json::Value::Null })
    }

    fn bound(&self) -> Option<f64> {
        None
    }
}

/// Measures in the computational basis, forwards the outcome, and guesses the
/// first bit as the parity of the first block of the outcome.
pub struct PassiveMeasure {
    n: usize,
    block: usize,
    bound: Option<f64>,
}

impl EveStrategy for PassiveMeasure {
    fn name(&self) -> &'static str {
        "passive-measure"
    }

    fn intercept(&mut self, ct: Ciphertext, rng: &mut ChaCha8Rng) -> Result<Interception> {
        let amps = ct.state.vector().amplitudes();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut outcome = amps.len() - 1;
        for (j, a) in amps.iter().enumerate() {
            acc += a * a;
            if u < acc {
                outcome = j;
                break;
            }
        }
        let first_block = outcome >> (self.n - self.block);
        let guess = first_block.count_ones() % 2 == 1;
        let state = CipherState::from_vector(self.n, ct.state.scheme(), StateVector::basis(self.n, outcome)?)?;
        Ok(Interception {
            forwarded: Ciphertext { s: ct.s, state },
            guess: Some(guess),
            detail: json!({ "outcome": outcome, "guess": u8::from(guess) }),
        })
    }

    fn bound(&self) -> Option<f64> {
        self.bound
    }
}

/// Applies the optimal two-outcome measurement for the first plaintext bit
/// and forwards the post-measurement state.
pub struct HelstromGuess {
    n: usize,
    measurement: HelstromMeasurement,
}

impl EveStrategy for HelstromGuess {
    fn name(&self) -> &'static str {
        "helstrom-guess"
    }

    fn intercept(&mut self, ct: Ciphertext, rng: &mut ChaCha8Rng) -> Result<Interception> {
        let (guess, post) = self.measurement.measure(ct.state.vector(), rng);
        let state = CipherState::from_vector(self.n, ct.state.scheme(), post)?;
        Ok(Interception {
            forwarded: Ciphertext { s: ct.s, state },
            guess: Some(guess),
            detail: json!({ "guess": u8::from(guess) }),
        })
    }

    fn bound(&self) -> Option<f64> {
        Some(0.5 + 0.5 * self.measurement.distance)
    }
}

pub const EVE_STRATEGIES: [&str; 3] = ["none", "passive-measure", "helstrom-guess"];

pub fn eve_strategies() -> &'static [&'static str] {
    &EVE_STRATEGIES
}

/// Builds a strategy by name for ciphertexts of `scheme` at width `n`.
pub fn strategy(name: &str, n: usize, scheme: Scheme, budget: &Budget) -> Result<Box<dyn EveStrategy>> {
    scheme.check_width(n)?;
    let measurement = || -> Result<HelstromMeasurement> {
        if n > HELSTROM_MAX_N {
            return Err(Error::Infeasible(format!("optimal measurement needs n <= {HELSTROM_MAX_N}, got {n}")));
        }
        HelstromMeasurement::first_bit(n, scheme, budget)
    };
    match name {
        "none" => Ok(Box::new(NoEve)),
        "passive-measure" => Ok(Box::new(PassiveMeasure {
            n,
            block: scheme.block_width(n),
            bound: measurement().ok().map(|m| 0.5 + 0.5 * m.distance),
        })),
        "helstrom-guess" => Ok(Box::new(HelstromGuess { n, measurement: measurement()? })),
        other => Err(Error::UnknownStrategy(other.into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Publish,
    Fetch,
    Encrypt,
    ChannelSend,
    Eavesdrop,
    Decrypt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    pub actor: Role,
    pub message: usize,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub seed: u64,
    pub n: usize,
    pub scheme: Scheme,
    pub eve: Option<String>,
    pub events: Vec<Event>,
}

impl Transcript {
    fn log(&mut self, kind: EventKind, actor: Role, message: usize, detail: serde_json::Value) {
        let seq = self.events.len() as u64;
        self.events.push(Event { seq, kind, actor, message, detail });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serialises")
    }

    /// Sequence numbers increase by one, and per message publish, fetch,
    /// encrypt, send and decrypt appear in that order.
    pub fn check_causality(&self) -> Result<()> {
        let mut last: BTreeMap<usize, EventKind> = BTreeMap::new();
        for (j, e) in self.events.iter().enumerate() {
            if e.seq != j as u64 {
                return Err(Error::InvalidParameter(format!("event {j} has sequence number {}", e.seq)));
            }
            let ok = match (last.get(&e.message), e.kind) {
                (None, EventKind::Publish) => true,
                (Some(prev), kind) => kind > *prev,
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidParameter(format!("event {j} ({:?}) is out of order", e.kind)));
            }
            last.insert(e.message, e.kind);
        }
        if let Some((m, kind)) = last.iter().find(|(_, k)| **k != EventKind::Decrypt) {
            return Err(Error::InvalidParameter(format!("message {m} ends at {kind:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub n: usize,
    pub scheme: Scheme,
    pub messages: Vec<Plaintext>,
    pub eve: Option<String>,
    pub seed: u64,
    /// Reuse one tag for every public key (fixed-key mode).
    pub fixed_key: Option<BitString>,
    /// Budget for fixed-key mode; defaults to `n - 1`.
    pub t_max: Option<usize>,
    /// Draw tags from all `m`-bit strings.
    pub wide_tags: Option<usize>,
}

impl SessionConfig {
    pub fn new(n: usize, scheme: Scheme, messages: Vec<Plaintext>, seed: u64) -> Self {
        Self { n, scheme, messages, eve: None, seed, fixed_key: None, t_max: None, wide_tags: None }
    }

    pub fn with_eve(mut self, eve: &str) -> Self {
        self.eve = Some(eve.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub success_rate: f64,
    /// Fraction of messages whose first bit Eve guessed correctly.
    pub eve_accuracy: Option<f64>,
    pub eve_bound: Option<f64>,
    pub n: usize,
    pub scheme: Scheme,
    pub trials: usize,
    pub seed: u64,
    pub eve: Option<String>,
    pub integrity_failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub transcript: Transcript,
    pub stats: SessionStats,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Uniform random messages for `scheme`, from the session seed's message stream.
pub fn random_messages(scheme: Scheme, count: usize, seed: u64) -> Vec<Plaintext> {
    let mut rng = stream(seed, MESSAGE_STREAM);
    let w = scheme.bits();
    (0..count).map(|_| Plaintext::new((0..w).map(|_| rng.random()).collect())).collect()
}

pub fn run_session(config: &SessionConfig, budget: &Budget) -> Result<Session> {
    let (n, scheme) = (config.n, config.scheme);
    if let Some(bad) = config.messages.iter().find(|m| m.width() != scheme.bits()) {
        return Err(Error::PlaintextWidth { expected: scheme.bits(), got: bad.width() });
    }
    let mut key = qpke::keygen(n, scheme, qpke::seed_from_u64(config.seed))?;
    if let Some(m) = config.wide_tags {
        key = key.with_wide_tags(m)?;
    }
    if let Some(s) = config.fixed_key {
        key = key.with_fixed_key(s)?;
        qpke::enforce_budget(&key, config.t_max.unwrap_or_else(|| qpke::default_t_max(n)));
    }
    let mut eve = match config.eve.as_deref() {
        Some(name) => Some(strategy(name, n, scheme, budget)?),
        None => None,
    };

    let mut bob = Bob::new(key, stream(config.seed, BOB_STREAM));
    let alice = Alice;
    let mut eve_rng = stream(config.seed, EVE_STREAM);
    let mut register = PublicRegister::new();
    let mut channel: Channel<(u64, Ciphertext)> = Channel::default();
    let mut transcript = Transcript { seed: config.seed, n, scheme, eve: config.eve.clone(), events: Vec::new() };

    let mut successes = 0usize;
    let mut eve_hits = 0usize;
    let mut eve_guesses = 0usize;
    for (m, message) in config.messages.iter().enumerate() {
        let pk = bob.publish()?;
        let s = pk.s;
        let id = register.post(pk);
        transcript.log(EventKind::Publish, Role::Bob, m, json!({ "key": id, "s": s.to_string() }));

        let (id, pk) = register.fetch_next()?;
        transcript.log(EventKind::Fetch, Role::Alice, m, json!({ "key": id }));

        let ct = alice.encrypt(&pk, message)?;
        transcript.log(EventKind::Encrypt, Role::Alice, m, json!({ "key": id, "plaintext": message.to_string() }));

        channel.send((id, ct));
        transcript.log(EventKind::ChannelSend, Role::Alice, m, json!({ "key": id, "to": "bob" }));

        let (id, mut ct) = channel.recv().expect("just sent");
        if let Some(eve) = eve.as_mut() {
            let cut = eve.intercept(ct, &mut eve_rng)?;
            if let Some(g) = cut.guess {
                eve_guesses += 1;
                eve_hits += usize::from(g == message.bits()[0]);
            }
            transcript.log(EventKind::Eavesdrop, Role::Eve, m, json!({ "key": id, "strategy": eve.name(), "action": cut.detail }));
            ct = cut.forwarded;
        }

        let got = bob.receive(&ct)?;
        let correct = got.plaintext == *message;
        successes += usize::from(correct);
        transcript.log(
            EventKind::Decrypt,
            Role::Bob,
            m,
            json!({
                "key": id,
                "plaintext": got.plaintext.to_string(),
                "correct": correct,
                "mode": got.mode,
                "integrity-error": got.integrity_error,
            }),
        );
    }

    let trials = config.messages.len();
    let stats = SessionStats {
        success_rate: if trials == 0 { 1.0 } else { successes as f64 / trials as f64 },
        eve_accuracy: (eve_guesses > 0).then(|| eve_hits as f64 / eve_guesses as f64),
        eve_bound: eve.as_ref().and_then(|e| e.bound()),
        n,
        scheme,
        trials,
        seed: config.seed,
        eve: config.eve.clone(),
        integrity_failures: bob.integrity_failures(),
    };
    Ok(Session { transcript, stats })
}

/// Exact Bob success under `passive-measure`, for comparison with a session.
pub fn passive_measure_oracle(n: usize, scheme: Scheme, budget: &Budget) -> Result<f64> {
    analysis::passive_measure_bob_success(n, scheme, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::binomial_sigma;

    fn session(n: usize, scheme: Scheme, count: usize, eve: Option<&str>, seed: u64) -> Session {
        let mut config = SessionConfig::new(n, scheme, random_messages(scheme, count, seed), seed);
        config.eve = eve.map(String::from);
        run_session(&config, &Budget::default()).unwrap()
    }

    #[test]
    fn no_eve_is_perfect() {
        let s = session(4, Scheme::SingleBit, 100, None, 1);
        assert_eq!(s.stats.success_rate, 1.0);
        assert_eq!(s.stats.eve_accuracy, None);
        assert_eq!(s.transcript.events.len(), 500);
        s.transcript.check_causality().unwrap();
        for scheme in [Scheme::TwoBit, Scheme::MultiBit(3)] {
            assert_eq!(session(6, scheme, 20, None, 2).stats.success_rate, 1.0);
        }
    }

    #[test]
    fn none_strategy_matches_no_eve() {
        let a = session(4, Scheme::SingleBit, 50, None, 3);
        let b = session(4, Scheme::SingleBit, 50, Some("none"), 3);
        assert_eq!(a.stats.success_rate, b.stats.success_rate);
        assert_eq!(a.stats.integrity_failures, b.stats.integrity_failures);
        let strip = |t: &Transcript| t.events.iter().filter(|e| e.kind != EventKind::Eavesdrop).map(|e| (e.kind, e.detail.clone())).collect::<Vec<_>>();
        assert_eq!(strip(&a.transcript), strip(&b.transcript));
    }

    #[test]
    fn replay_is_byte_identical() {
        let a = session(4, Scheme::SingleBit, 30, Some("passive-measure"), 42);
        let b = session(4, Scheme::SingleBit, 30, Some("passive-measure"), 42);
        assert_eq!(a.transcript.to_json(), b.transcript.to_json());
        let c = session(4, Scheme::SingleBit, 30, Some("passive-measure"), 43);
        assert_ne!(a.transcript.to_json(), c.transcript.to_json());
    }

    #[test]
    fn passive_measure_disturbs() {
        let s = session(1, Scheme::SingleBit, 10_000, Some("passive-measure"), 5);
        let exact = passive_measure_oracle(1, Scheme::SingleBit, &Budget::default()).unwrap();
        assert!((exact - 0.5).abs() < 1e-12);
        assert!((s.stats.success_rate - exact).abs() < 4.0 * binomial_sigma(exact, 10_000));
        assert_eq!(s.stats.integrity_failures, 10_000);
        let acc = s.stats.eve_accuracy.unwrap();
        assert!(acc <= s.stats.eve_bound.unwrap() + 4.0 * binomial_sigma(0.5, 10_000));
    }

    #[test]
    fn passive_measure_n4() {
        let s = session(4, Scheme::SingleBit, 4000, Some("passive-measure"), 6);
        assert!(s.stats.success_rate < 1.0);
        let sigma = binomial_sigma(0.5, 4000);
        assert!((s.stats.success_rate - 0.5).abs() < 4.0 * sigma);
        assert!((s.stats.eve_accuracy.unwrap() - 0.5).abs() < 4.0 * sigma);
    }

    #[test]
    fn helstrom_guess_accuracy() {
        let trials = 20_000;
        let s = session(3, Scheme::SingleBit, trials, Some("helstrom-guess"), 7);
        let target = 0.5 + 2f64.powi(-3);
        let acc = s.stats.eve_accuracy.unwrap();
        assert!((acc - target).abs() < 3.0 * binomial_sigma(target, trials as u64), "{acc}");
        assert!((s.stats.eve_bound.unwrap() - target).abs() < 1e-12);
    }

    #[test]
    fn helstrom_guess_two_bit_respects_bound() {
        let trials = 5000;
        let s = session(4, Scheme::TwoBit, trials, Some("helstrom-guess"), 8);
        let bound = s.stats.eve_bound.unwrap();
        assert!(s.stats.eve_accuracy.unwrap() <= bound + 4.0 * binomial_sigma(bound.min(0.99), trials as u64));
    }

    #[test]
    fn unknown_strategy() {
        assert!(matches!(strategy("replay", 4, Scheme::SingleBit, &Budget::default()), Err(Error::UnknownStrategy(_))));
        assert_eq!(eve_strategies(), ["none", "passive-measure", "helstrom-guess"]);
    }

    #[test]
    fn register_single_use() {
        let key = qpke::keygen(3, Scheme::SingleBit, [0; 32]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut register = PublicRegister::new();
        assert_eq!(register.fetch_next().unwrap_err(), Error::RegisterEmpty);
        let id = register.post(key.publish(&mut rng).unwrap());
        register.fetch(id).unwrap();
        assert_eq!(register.fetch(id).unwrap_err(), Error::AlreadyFetched(id));
        assert_eq!(register.fetch(99).unwrap_err(), Error::UnknownKey(99));
        assert!(register.is_empty());
    }

    #[test]
    fn fixed_key_session_hits_budget() {
        let mut config = SessionConfig::new(4, Scheme::SingleBit, random_messages(Scheme::SingleBit, 5, 10), 10);
        config.fixed_key = Some(BitString::new(0b0001, 4).unwrap());
        assert!(matches!(run_session(&config, &Budget::default()), Err(Error::BudgetExceeded { used: 3, t_max: 3 })));
        config.messages.truncate(3);
        assert_eq!(run_session(&config, &Budget::default()).unwrap().stats.success_rate, 1.0);
    }

    #[test]
    fn rejects_wrong_message_width() {
        let config = SessionConfig::new(4, Scheme::TwoBit, vec![Plaintext::zeros(1)], 0);
        assert!(matches!(run_session(&config, &Budget::default()), Err(Error::PlaintextWidth { .. })));
    }

    #[test]
    fn causality_check_catches_reordering() {
        let mut s = session(2, Scheme::SingleBit, 2, None, 11);
        s.transcript.events.swap(1, 2);
        for (j, e) in s.transcript.events.iter_mut().enumerate() {
            e.seq = j as u64;
        }
        assert!(s.transcript.check_causality().is_err());
    }

    #[test]
    fn stats_json_fields() {
        let s = session(2, Scheme::SingleBit, 3, None, 12);
        let v = serde_json::to_value(&s.stats).unwrap();
        for field in ["success_rate", "eve_accuracy", "n", "scheme", "trials", "seed"] {
            assert!(v.get(field).is_some(), "{field}");
        }
    }
}
