//! Simulator and verification suite for a quantum public-key encryption scheme
//! whose ciphertexts are parity-coset superpositions hidden by a one-time key.
//!
//! - [`bitmath`]: bit strings, odd/even weight classes, key permutations.
//! - [`linalg`]: real states, density matrices, Jacobi spectra, trace distance.
//! - [`circuit`]: gate list and state-vector simulator.
//! - [`states`]: ciphertext state families and ensemble density matrices.
//! - [`qpke`]: key generation, encryption, circuit decryption, reuse budget.
//! - [`analysis`]: numeric checks of every distinguishability bound.
//! - [`protocol`]: Bob / register / Alice / Eve session simulation.
//! - [`report`]: JSON and CSV report output.

pub mod analysis;
pub mod bitmath;
pub mod circuit;
pub mod error;
pub mod linalg;
pub mod protocol;
pub mod qpke;
pub mod report;
pub mod states;
pub mod stats;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Size limits shared by every builder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Largest matrix side length that may be allocated.
    pub max_dim: usize,
    /// Largest number of rank-1 terms an ensemble sum may enumerate.
    pub max_terms: u64,
    /// Largest matrix handed to the Jacobi eigensolver; bigger operators must
    /// take the Walsh-Hadamard route.
    pub jacobi_max_dim: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self { max_dim: linalg::DEFAULT_DIM_CAP, max_terms: 1 << 28, jacobi_max_dim: 256 }
    }
}
