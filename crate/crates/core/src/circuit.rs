//! Gate list and a real-amplitude state-vector simulator.

use serde::{Deserialize, Serialize};

use crate::bitmath::BitString;
use crate::error::{Error, Result};
use crate::linalg::StateVector;

use std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "kebab-case")]
pub enum GateOp {
    H { target: usize },
    X { target: usize },
    Z { target: usize },
    Cnot { control: usize, target: usize },
    Swap { a: usize, b: usize },
    /// Controlled-XOR of `k` into qubits `offset .. offset + k.width()`:
    /// `|1⟩|i⟩ ↦ |1⟩|i ⊕ k⟩`.
    CXorK { control: usize, k: BitString, offset: usize },
}

impl GateOp {
    fn qubits(&self) -> Vec<usize> {
        match self {
            GateOp::H { target } | GateOp::X { target } | GateOp::Z { target } => vec![*target],
            GateOp::Cnot { control, target } => vec![*control, *target],
            GateOp::Swap { a, b } => vec![*a, *b],
            GateOp::CXorK { control, k, offset } => {
                let mut q = vec![*control];
                q.extend((0..k.width()).filter(|&j| k.bit(j)).map(|j| offset + j));
                q
            }
        }
    }

    /// Controlled-XOR as a fan of CNOTs sharing one control; other gates unchanged.
    pub fn decompose(&self) -> Vec<GateOp> {
        match self {
            GateOp::CXorK { control, k, offset } => (0..k.width())
                .filter(|&j| k.bit(j))
                .map(|j| GateOp::Cnot { control: *control, target: offset + j })
                .collect(),
            other => vec![other.clone()],
        }
    }

    fn validate(&self, width: usize) -> Result<()> {
        let qubits = self.qubits();
        if let Some(&q) = qubits.iter().find(|&&q| q >= width) {
            return Err(Error::InvalidParameter(format!("{self:?} touches qubit {q} of a {width}-qubit register")));
        }
        let distinct = match self {
            GateOp::Cnot { control, target } => control != target,
            GateOp::Swap { a, b } => a != b,
            GateOp::CXorK { control, .. } => qubits[1..].iter().all(|q| q != control),
            _ => true,
        };
        if !distinct {
            return Err(Error::InvalidParameter(format!("{self:?} reuses a qubit")));
        }
        Ok(())
    }
}

/// Working register; amplitudes need not be normalised mid-circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct Register {
    qubits: usize,
    amps: Vec<f64>,
}

impl Register {
    /// `|0…0⟩`.
    pub fn zeros(qubits: usize) -> Self {
        let mut amps = vec![0.0; 1 << qubits];
        amps[0] = 1.0;
        Self { qubits, amps }
    }

    pub fn from_state(state: &StateVector) -> Self {
        Self { qubits: state.qubits(), amps: state.amplitudes().to_vec() }
    }

    /// `|0…0⟩_ancilla ⊗ |ψ⟩`, with the ancillas above the data qubits.
    pub fn with_ancillas(state: &StateVector, ancillas: usize) -> Self {
        let mut amps = vec![0.0; 1 << (state.qubits() + ancillas)];
        amps[..state.dim()].copy_from_slice(state.amplitudes());
        Self { qubits: state.qubits() + ancillas, amps }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amps
    }

    pub fn into_state(self) -> Result<StateVector> {
        StateVector::new(self.amps)
    }

    pub fn apply(&mut self, gate: &GateOp) -> Result<()> {
        gate.validate(self.qubits)?;
        match gate {
            GateOp::H { target } => {
                let bit = 1usize << target;
                for j in 0..self.amps.len() {
                    if j & bit == 0 {
                        let (a, b) = (self.amps[j], self.amps[j | bit]);
                        self.amps[j] = FRAC_1_SQRT_2 * (a + b);
                        self.amps[j | bit] = FRAC_1_SQRT_2 * (a - b);
                    }
                }
            }
            GateOp::X { target } => {
                let bit = 1usize << target;
                for j in 0..self.amps.len() {
                    if j & bit == 0 {
                        self.amps.swap(j, j | bit);
                    }
                }
            }
            GateOp::Z { target } => {
                let bit = 1usize << target;
                for (j, a) in self.amps.iter_mut().enumerate() {
                    if j & bit != 0 {
                        *a = -*a;
                    }
                }
            }
            GateOp::Cnot { control, target } => self.xor_when_set(*control, 1usize << target),
            GateOp::Swap { a, b } => {
                let (ba, bb) = (1usize << a, 1usize << b);
                for j in 0..self.amps.len() {
                    if j & ba != 0 && j & bb == 0 {
                        self.amps.swap(j, j ^ ba ^ bb);
                    }
                }
            }
            GateOp::CXorK { control, k, offset } => {
                self.xor_when_set(*control, (k.value() as usize) << offset);
            }
        }
        Ok(())
    }

    fn xor_when_set(&mut self, control: usize, mask: usize) {
        let cbit = 1usize << control;
        for j in 0..self.amps.len() {
            // Visit each swapped pair once.
            if j & cbit != 0 && j < j ^ mask {
                self.amps.swap(j, j ^ mask);
            }
        }
    }

    pub fn run(&mut self, circuit: &Circuit) -> Result<()> {
        for gate in &circuit.gates {
            self.apply(gate)?;
        }
        Ok(())
    }

    /// Probability that `qubit` reads 1.
    pub fn probability_one(&self, qubit: usize) -> f64 {
        let bit = 1usize << qubit;
        self.amps
            .iter()
            .enumerate()
            .filter(|(j, _)| j & bit != 0)
            .map(|(_, a)| a * a)
            .sum()
    }

    /// Distribution of the top `count` qubits, indexed by their joint value.
    pub fn marginal_of_top(&self, count: usize) -> Vec<f64> {
        let low = self.qubits - count;
        let mut probs = vec![0.0; 1 << count];
        for (j, a) in self.amps.iter().enumerate() {
            probs[j >> low] += a * a;
        }
        probs
    }

    /// Amplitudes of the low `data` qubits given the top qubits read `value`,
    /// renormalised. `None` if that branch has zero weight.
    pub fn condition_top(&self, data: usize, value: usize) -> Option<StateVector> {
        let dim = 1usize << data;
        let slice = &self.amps[value * dim..(value + 1) * dim];
        let norm = slice.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return None;
        }
        Some(StateVector::from_raw(slice.iter().map(|a| a / norm).collect()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub qubits: usize,
    pub gates: Vec<GateOp>,
}

impl Circuit {
    pub fn new(qubits: usize) -> Self {
        Self { qubits, gates: Vec::new() }
    }

    pub fn push(&mut self, gate: GateOp) -> Result<()> {
        gate.validate(self.qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Same circuit with every controlled-XOR expanded into CNOTs.
    pub fn decomposed(&self) -> Circuit {
        Circuit { qubits: self.qubits, gates: self.gates.iter().flat_map(GateOp::decompose).collect() }
    }

    pub fn simulate(&self) -> Result<StateVector> {
        let mut reg = Register::zeros(self.qubits);
        reg.run(self)?;
        reg.into_state()
    }
}
