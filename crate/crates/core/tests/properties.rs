use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qpke_core::bitmath::{self, BitString, ParityClass};
use qpke_core::protocol::{self, SessionConfig};
use qpke_core::qpke::{self, Ciphertext, PublicKey};
use qpke_core::states::{self, Plaintext, Scheme};
use qpke_core::Budget;

fn scheme_and_width() -> impl Strategy<Value = (Scheme, usize)> {
    prop_oneof![
        (1usize..=8).prop_map(|n| (Scheme::SingleBit, n)),
        (1usize..=4).prop_map(|h| (Scheme::TwoBit, 2 * h)),
        (1usize..=4, 1usize..=2).prop_map(|(l, m)| (Scheme::MultiBit(l), l * m)),
    ]
}

fn label(width: usize) -> impl Strategy<Value = Plaintext> {
    prop::collection::vec(any::<bool>(), width).prop_map(Plaintext::new)
}

/// Keys and `i` for a random private key and tag.
fn material(scheme: Scheme, n: usize, seed: u64) -> (Vec<BitString>, BitString) {
    let key = qpke::keygen(n, scheme, qpke::seed_from_u64(seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, m) = key.publish_traced(&mut rng).unwrap();
    (m.keys, m.i)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn permutation_is_xor_linear(n in 1usize..=40, k in any::<u64>(), x in any::<u64>(), y in any::<u64>()) {
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        prop_assume!(k & mask != 0);
        let k = BitString::new(k & mask, n).unwrap();
        let (x, y) = (BitString::new(x & mask, n).unwrap(), BitString::new(y & mask, n).unwrap());
        let p = bitmath::permutation_for(&k).unwrap();
        let lhs = bitmath::apply_permutation(&p, &x.xor(&y).unwrap()).unwrap();
        let rhs = bitmath::apply_permutation(&p, &x).unwrap().xor(&bitmath::apply_permutation(&p, &y).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
        let top = bitmath::apply_permutation(&p, &k).unwrap().value();
        let w = k.hamming_weight() as usize;
        prop_assert_eq!(top, ((1u64 << w) - 1) << (n - w));
        prop_assert_eq!(p.inverse().apply(&p.apply(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn sampled_class_members(n in 1usize..=64, seed in any::<u64>(), odd in any::<bool>()) {
        let class = if odd { ParityClass::Omega } else { ParityClass::Pi };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = bitmath::sample_class(n, class, &mut rng).unwrap();
        prop_assert_eq!(x.classify(), class);
        prop_assert!(class.contains(&x));
    }

    #[test]
    fn states_are_normalised_with_coset_support((scheme, n) in scheme_and_width(), seed in any::<u64>(), xs in label(4)) {
        let (keys, i) = material(scheme, n, seed);
        let x = Plaintext::new(xs.bits()[..scheme.bits()].to_vec());
        let s = states::pure_state(scheme, &keys, &i, &x).unwrap();
        prop_assert!((s.vector().norm() - 1.0).abs() < 1e-12);
        prop_assert_eq!(s.vector().support(1e-14).len(), 1 << scheme.bits());
        s.check_structure().unwrap();
    }

    #[test]
    fn different_labels_are_orthogonal((scheme, n) in scheme_and_width(), seed in any::<u64>(), a in 0usize..16, b in 0usize..16) {
        let w = scheme.bits();
        let (a, b) = (a % (1 << w), b % (1 << w));
        prop_assume!(a != b);
        let (keys, i) = material(scheme, n, seed);
        let sa = states::pure_state(scheme, &keys, &i, &Plaintext::from_index(a, w)).unwrap();
        let sb = states::pure_state(scheme, &keys, &i, &Plaintext::from_index(b, w)).unwrap();
        prop_assert!(sa.vector().inner(sb.vector()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn z_patterns_compose((scheme, n) in scheme_and_width(), seed in any::<u64>(), a in 0usize..16, b in 0usize..16) {
        let w = scheme.bits();
        let (a, b) = (Plaintext::from_index(a % (1 << w), w), Plaintext::from_index(b % (1 << w), w));
        let (keys, i) = material(scheme, n, seed);
        let base = states::pure_state(scheme, &keys, &i, &Plaintext::zeros(w)).unwrap();
        let twice = states::apply_z_pattern(&states::apply_z_pattern(&base, &a).unwrap(), &b).unwrap();
        let want = states::pure_state(scheme, &keys, &i, &Plaintext::from_index(a.index() ^ b.index(), w)).unwrap();
        prop_assert!(twice.vector().equals_up_to_sign(want.vector(), 1e-12));
    }

    #[test]
    fn round_trip_and_non_demolition((scheme, n) in scheme_and_width(), seed in any::<u64>(), xs in label(4)) {
        let key = qpke::keygen(n, scheme, qpke::seed_from_u64(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = Plaintext::new(xs.bits()[..scheme.bits()].to_vec());
        let ct = qpke::encrypt(&key.publish(&mut rng).unwrap(), &x).unwrap();
        let out = qpke::decrypt_full(&key, &ct).unwrap();
        prop_assert_eq!(&out.plaintext, &x);
        prop_assert!(out.data.equals_up_to_sign(ct.state.vector(), 1e-12));
        let run = qpke::run_decryption(&key, &ct).unwrap();
        prop_assert!((run.readout[x.index()] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f_eval_structure((scheme, n) in scheme_and_width(), seed in any::<[u8; 32]>(), s_seed in any::<u64>()) {
        let key = qpke::keygen(n, scheme, seed).unwrap();
        let s = key.sample_tag(&mut ChaCha8Rng::seed_from_u64(s_seed)).unwrap();
        let keys = key.f_eval(&s).unwrap();
        states::validate_keys(n, scheme, &keys).unwrap();
        prop_assert_eq!(keys, key.f_eval(&s).unwrap());
    }

    #[test]
    fn wire_format_round_trip((scheme, n) in scheme_and_width(), seed in any::<u64>()) {
        let key = qpke::keygen(n, scheme, qpke::seed_from_u64(seed)).unwrap();
        let pk = key.publish(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let back: PublicKey = serde_json::from_str(&serde_json::to_string(&pk).unwrap()).unwrap();
        // The simulator's label is not part of the wire format.
        prop_assert_eq!(&back.s, &pk.s);
        prop_assert_eq!(back.state.vector(), pk.state.vector());
        prop_assert!(back.state.label().is_none());
        let x = Plaintext::from_index(0, scheme.bits());
        let ct: Ciphertext = serde_json::from_str(&serde_json::to_string(&qpke::encrypt(&back, &x).unwrap()).unwrap()).unwrap();
        let key_back: qpke::PrivateKey = serde_json::from_str(&serde_json::to_string(&key).unwrap()).unwrap();
        prop_assert_eq!(qpke::decrypt(&key_back, &ct).unwrap(), x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ensemble_diagonals_are_uniform((scheme, n) in scheme_and_width(), xs in label(4)) {
        prop_assume!(n <= 4);
        let x = Plaintext::new(xs.bits()[..scheme.bits()].to_vec());
        let rho = states::mixed_full_ensemble(n, scheme, &x, &Budget::default()).unwrap();
        let want = 1.0 / (1u64 << n) as f64;
        prop_assert!(rho.matrix().diagonal().iter().all(|d| (d - want).abs() < 1e-14));
    }

    #[test]
    fn sessions_replay_and_succeed((scheme, n) in scheme_and_width(), seed in any::<u64>()) {
        let config = SessionConfig::new(n, scheme, protocol::random_messages(scheme, 8, seed), seed);
        let a = protocol::run_session(&config, &Budget::default()).unwrap();
        let b = protocol::run_session(&config, &Budget::default()).unwrap();
        prop_assert_eq!(a.stats.success_rate, 1.0);
        prop_assert_eq!(a.transcript.to_json(), b.transcript.to_json());
        a.transcript.check_causality().unwrap();
    }
}
