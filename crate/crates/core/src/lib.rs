//! Simulator and compiler for a globally-addressed optical-lattice quantum
//! register controlled through a single mobile pointer atom.
//!
//! The register stores one atom per lattice site. Each atom has four internal
//! levels: the qubit states |0⟩ and |1⟩ pinned by the main lattice, and two
//! auxiliary states |P⟩ and |P′⟩ carried by a second, state-selective lattice
//! whose phase can be shifted. All control is global — Raman pulses hit every
//! atom, shifts move every mobile atom — and site-selectivity comes only from
//! parking the pointer on a target site, where a collisional or molecular
//! resonance produces a conditional phase.
//!
//! The crate is organised around that control model:
//!
//! - [`lattice`] — the joint quantum state of all atoms and the physical
//!   primitives (global Raman pulses, lattice shifts, collisional phases,
//!   molecular pulses, |P′⟩ measurement and reset).
//! - [`isa`] — the textual pulse instruction set and a deterministic executor.
//! - [`compiler`] — lowering of circuit-level operations (local gates,
//!   measurements, controlled unitaries, GHZ/graph/cluster preparation,
//!   one-way rotations) into pulse programs.
//! - [`graph`] — graph-state algebra: stabilizers, local complementation,
//!   orbit search for edge-minimal representatives, star decomposition.
//! - [`oracle`] — an independent dense state-vector simulator used as ground
//!   truth when verifying compiled programs.
//! - [`resources`] — closed-form cost formulas and program audits.
//! - [`photo`] — light shifts, scattering rates and decoherence budgets for
//!   the trapping lattices.

pub mod compiler;
pub mod graph;
pub mod isa;
pub mod lattice;
pub mod oracle;
pub mod photo;
pub mod resources;

pub use lattice::{
    BasisConfig, CollisionPhaseTable, InternalState, LatticeError, LatticeSpec, PointerFactor,
    Position, QuantumState, RamanPair, RegisterState, ShiftDelta,
};

pub use isa::{ExecutionTrace, Instruction, InstructionKind, IsaError, PulseProgram};

pub use compiler::{CircuitOp, CompileError, Mat2, PointerPlan};

pub use graph::{GraphError, GraphSpec, PauliString, StabilizerTableau};

pub use oracle::{OracleError, QubitState, VerifyReport};

pub use resources::{AuditError, CostReport};

pub use photo::{AtomicLine, LineSet, PhotoError, Polarization, StateClass, TrapContext};

/// Complex amplitude type used across the crate.
pub type Complex64 = num_complex::Complex64;
