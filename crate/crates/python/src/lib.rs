//! Python bindings. Keys and ciphertexts cross the boundary as their JSON
//! wire format; reports come back as dicts.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qpke_core::analysis;
use qpke_core::protocol::{self, SessionConfig};
use qpke_core::qpke::{self as core, Ciphertext, PrivateKey, PublicKey};
use qpke_core::states::{Plaintext, Scheme};
use qpke_core::Budget;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let body = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (body,))
}

fn parse<T: serde::de::DeserializeOwned>(body: &str) -> PyResult<T> {
    serde_json::from_str(body).map_err(err)
}

fn scheme(name: &str, l: Option<usize>) -> PyResult<Scheme> {
    Scheme::from_flag(name, l).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (n, scheme="1bit", l=None, seed=1))]
fn keygen(n: usize, scheme: &str, l: Option<usize>, seed: u64) -> PyResult<String> {
    let key = core::keygen(n, self::scheme(scheme, l)?, core::seed_from_u64(seed)).map_err(err)?;
    serde_json::to_string(&key).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (key, seed=1))]
fn publish(key: &str, seed: u64) -> PyResult<String> {
    let key: PrivateKey = parse(key)?;
    let pk = key.publish(&mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?;
    serde_json::to_string(&pk).map_err(err)
}

#[pyfunction]
fn encrypt(public: &str, message: &str) -> PyResult<String> {
    let pk: PublicKey = parse(public)?;
    let message: Plaintext = message.parse().map_err(err)?;
    let ct = core::encrypt(&pk, &message).map_err(err)?;
    serde_json::to_string(&ct).map_err(err)
}

#[pyfunction]
fn decrypt(key: &str, ciphertext: &str) -> PyResult<String> {
    let key: PrivateKey = parse(key)?;
    let ct: Ciphertext = parse(ciphertext)?;
    Ok(core::decrypt(&key, &ct).map_err(err)?.to_string())
}

#[pyfunction]
fn verify_lemma4(py: Python<'_>, n: usize) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &analysis::verify_lemma4(n, &Budget::default()).map_err(err)?)
}

#[pyfunction]
fn verify_appendix(py: Python<'_>, n: usize) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &analysis::verify_appendix_all(n, &Budget::default()).map_err(err)?)
}

#[pyfunction]
fn multicopy_norm(py: Python<'_>, n: usize, t: usize) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &analysis::multicopy_norm(n, t, &Budget::default()).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (n, trials, seed=1))]
fn helstrom_experiment(py: Python<'_>, n: usize, trials: u64, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    to_py(py, &analysis::helstrom_experiment(n, trials, &mut rng, &Budget::default()).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (n, scheme="1bit", l=None, messages=100, eve=None, seed=1))]
fn run_session<'py>(
    py: Python<'py>,
    n: usize,
    scheme: &str,
    l: Option<usize>,
    messages: usize,
    eve: Option<String>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let scheme = self::scheme(scheme, l)?;
    let mut config = SessionConfig::new(n, scheme, protocol::random_messages(scheme, messages, seed), seed);
    config.eve = eve;
    let session = protocol::run_session(&config, &Budget::default()).map_err(err)?;
    to_py(py, &session.stats)
}

#[pymodule]
fn qpke(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(keygen, m)?)?;
    m.add_function(wrap_pyfunction!(publish, m)?)?;
    m.add_function(wrap_pyfunction!(encrypt, m)?)?;
    m.add_function(wrap_pyfunction!(decrypt, m)?)?;
    m.add_function(wrap_pyfunction!(verify_lemma4, m)?)?;
    m.add_function(wrap_pyfunction!(verify_appendix, m)?)?;
    m.add_function(wrap_pyfunction!(multicopy_norm, m)?)?;
    m.add_function(wrap_pyfunction!(helstrom_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    Ok(())
}
