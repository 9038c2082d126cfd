//! Global-control instruction set and a deterministic executor.
//!
//! A pulse program is an ordered list of instructions plus the named
//! collision-phase tables it references. Programs are replayable: identical
//! (program, initial state, seed) triples produce bit-identical traces.
//!
//! Text format, one instruction per line, `#` starts a comment:
//!
//! ```text
//! TABLE <id> 0P=<rad> 1P=<rad> 0P'=<rad> 1P'=<rad> PP=<rad> PP'=<rad> P'P'=<rad>
//! RAMAN <pair> <theta_rad> <phi_rad>     # pair ∈ {01, 1P, 1P', PP'}
//! SHIFTP <d0>[,<d1>[,<d2>]]
//! COLLIDE <table-id>
//! MOLPULSE
//! LPZ1PP
//! MEASPP <tag>
//! RESETPP
//! ZENO <count>
//! ```

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::lattice::{
    CollisionPhaseTable, LatticeError, Position, QuantumState, RamanPair, ShiftDelta,
};

/// Errors from building, parsing or executing pulse programs.
#[derive(Debug, Error, PartialEq)]
pub enum IsaError {
    #[error("instruction {index} ({kind:?}): {source}")]
    Lattice {
        index: usize,
        kind: InstructionKind,
        source: LatticeError,
    },
    #[error("instruction {index}: guard measurement found |P'⟩ population (leakage)")]
    ZenoLeak { index: usize },
    #[error("instruction {index}: COLLIDE references unknown table '{id}'")]
    UnknownTable { index: usize, id: String },
    #[error("table '{0}' declared twice with different contents")]
    TableConflict(String),
    #[error("ZENO count must be at least 1")]
    BadZenoCount,
    #[error("program contains a non-unitary instruction ({0:?}); cannot reverse")]
    NotUnitary(InstructionKind),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One global instruction.
#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    /// Raman rotation R(θ, φ) on a driven pair, applied to every atom.
    Raman { pair: RamanPair, theta: f64, phi: f64 },
    /// Shift the transport lattice, moving all |P⟩/|P′⟩ atoms.
    ShiftP(ShiftDelta),
    /// Collisional wait using a named phase table.
    Collide(String),
    /// 2π molecular pulse: sign flip per co-located (|1⟩, |P⟩) site.
    MolecularPulse,
    /// Conditional π on |1⟩ at pointer sites (measurement-protocol phase).
    LocalPhaseZ1Pp,
    /// Global projective measurement of |P′⟩ occupancy.
    MeasurePprime(String),
    /// Reset all |P′⟩ atoms to |1⟩.
    ResetPprime,
    /// `count` consecutive |P′⟩ guard measurements, all asserted false.
    ZenoGuard(u32),
}

/// Instruction classification used for histograms and audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InstructionKind {
    Raman,
    ShiftP,
    Collide,
    MolecularPulse,
    LocalPhaseZ1Pp,
    MeasurePprime,
    ResetPprime,
}

impl Instruction {
    pub fn kind(&self) -> InstructionKind {
        match self {
            Instruction::Raman { .. } => InstructionKind::Raman,
            Instruction::ShiftP(_) => InstructionKind::ShiftP,
            Instruction::Collide(_) => InstructionKind::Collide,
            Instruction::MolecularPulse => InstructionKind::MolecularPulse,
            Instruction::LocalPhaseZ1Pp => InstructionKind::LocalPhaseZ1Pp,
            Instruction::MeasurePprime(_) => InstructionKind::MeasurePprime,
            Instruction::ResetPprime => InstructionKind::ResetPprime,
            // guards expand to measurements before execution
            Instruction::ZenoGuard(_) => InstructionKind::MeasurePprime,
        }
    }
}

/// Structured compile output attached to a program. The instruction stream is
/// self-contained; this records bookkeeping the verifier consumes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProgramMetadata {
    pub description: String,
    /// Sites whose qubits carry a recorded local-Z correction (preparation
    /// frames are recorded, not compiled into pulses, unless requested).
    pub z_frame: Vec<Position>,
    /// Sites the program is declared to act on; empty means the whole lattice.
    pub support: Vec<Position>,
    /// Named instruction-index marks (e.g. section boundaries).
    pub marks: Vec<(String, usize)>,
}

/// Ordered instructions plus the collision tables they reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PulseProgram {
    pub instructions: Vec<Instruction>,
    pub tables: BTreeMap<String, CollisionPhaseTable>,
    pub metadata: ProgramMetadata,
}

/// Record of one execution.
#[derive(Debug, Clone)]
pub struct ExecutionTrace {
    /// (tag, outcome) per measurement, in execution order, guards included.
    pub outcomes: Vec<(String, bool)>,
    pub final_state: QuantumState,
    pub histogram: BTreeMap<InstructionKind, usize>,
}

impl PulseProgram {
    pub fn new() -> Self {
        PulseProgram::default()
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn push(&mut self, instruction: Instruction) {
        self.instructions.push(instruction);
    }

    /// Register a table, rejecting a conflicting redefinition.
    pub fn add_table(&mut self, id: &str, table: CollisionPhaseTable) -> Result<(), IsaError> {
        match self.tables.get(id) {
            Some(existing) if *existing != table => Err(IsaError::TableConflict(id.to_string())),
            _ => {
                self.tables.insert(id.to_string(), table);
                Ok(())
            }
        }
    }

    /// Check that every referenced table resolves and guard counts are sane.
    pub fn validate(&self) -> Result<(), IsaError> {
        for (index, ins) in self.instructions.iter().enumerate() {
            match ins {
                Instruction::Collide(id) => {
                    if !self.tables.contains_key(id) {
                        return Err(IsaError::UnknownTable {
                            index,
                            id: id.clone(),
                        });
                    }
                }
                Instruction::ZenoGuard(0) => return Err(IsaError::BadZenoCount),
                _ => {}
            }
        }
        Ok(())
    }

    /// Concatenate two programs. Table namespaces must be disjoint or agree.
    pub fn concat(&self, other: &PulseProgram) -> Result<PulseProgram, IsaError> {
        let mut out = self.clone();
        for (id, table) in &other.tables {
            out.add_table(id, table.clone())?;
        }
        let offset = out.instructions.len();
        out.instructions.extend(other.instructions.iter().cloned());
        for (name, at) in &other.metadata.marks {
            out.metadata.marks.push((name.clone(), at + offset));
        }
        if !other.metadata.description.is_empty() {
            if !out.metadata.description.is_empty() {
                out.metadata.description.push_str("; ");
            }
            out.metadata.description.push_str(&other.metadata.description);
        }
        out.metadata.z_frame.extend(other.metadata.z_frame.iter().copied());
        out.metadata.support.extend(other.metadata.support.iter().copied());
        Ok(out)
    }

    /// Invert a purely unitary program: instructions reversed, each one
    /// inverted. Self-inverse diagonals keep their table; others get a
    /// negated table under a derived name. Involution on its domain.
    pub fn reverse_unitary(&self) -> Result<PulseProgram, IsaError> {
        let mut out = PulseProgram {
            instructions: Vec::with_capacity(self.instructions.len()),
            tables: BTreeMap::new(),
            metadata: ProgramMetadata {
                description: if self.metadata.description.is_empty() {
                    String::new()
                } else {
                    format!("reverse of: {}", self.metadata.description)
                },
                ..ProgramMetadata::default()
            },
        };
        for ins in self.instructions.iter().rev() {
            let inv = match ins {
                Instruction::Raman { pair, theta, phi } => Instruction::Raman {
                    pair: *pair,
                    theta: -theta,
                    phi: *phi,
                },
                Instruction::ShiftP(d) => Instruction::ShiftP(d.negate()),
                Instruction::MolecularPulse => Instruction::MolecularPulse,
                Instruction::LocalPhaseZ1Pp => Instruction::LocalPhaseZ1Pp,
                Instruction::Collide(id) => {
                    let table = self
                        .tables
                        .get(id)
                        .cloned()
                        .unwrap_or_else(CollisionPhaseTable::zero);
                    if table.is_self_inverse() {
                        out.add_table(id, table)?;
                        Instruction::Collide(id.clone())
                    } else {
                        let inv_id = match id.strip_suffix("~inv") {
                            Some(base) => base.to_string(),
                            None => format!("{id}~inv"),
                        };
                        out.add_table(&inv_id, table.negated())?;
                        Instruction::Collide(inv_id)
                    }
                }
                Instruction::MeasurePprime(_)
                | Instruction::ResetPprime
                | Instruction::ZenoGuard(_) => return Err(IsaError::NotUnitary(ins.kind())),
            };
            out.instructions.push(inv);
        }
        Ok(out)
    }

    /// Run the program. Guards expand to individual measurements whose
    /// outcomes must all be false; a true outcome aborts with a leak error.
    pub fn execute<R: Rng>(
        &self,
        initial: &QuantumState,
        rng: &mut R,
    ) -> Result<ExecutionTrace, IsaError> {
        self.validate()?;
        let mut state = initial.clone();
        let mut outcomes = Vec::new();
        let mut histogram: BTreeMap<InstructionKind, usize> = BTreeMap::new();
        for (index, ins) in self.instructions.iter().enumerate() {
            let lattice_err = |source: LatticeError| IsaError::Lattice {
                index,
                kind: ins.kind(),
                source,
            };
            match ins {
                Instruction::Raman { pair, theta, phi } => {
                    state = state.global_raman(*pair, *theta, *phi).map_err(lattice_err)?;
                    *histogram.entry(InstructionKind::Raman).or_insert(0) += 1;
                }
                Instruction::ShiftP(delta) => {
                    state = state.shift_pointer_lattice(*delta).map_err(lattice_err)?;
                    *histogram.entry(InstructionKind::ShiftP).or_insert(0) += 1;
                }
                Instruction::Collide(id) => {
                    let table = &self.tables[id];
                    state = state.collision_wait(table);
                    *histogram.entry(InstructionKind::Collide).or_insert(0) += 1;
                }
                Instruction::MolecularPulse => {
                    state = state.molecular_pulse();
                    *histogram.entry(InstructionKind::MolecularPulse).or_insert(0) += 1;
                }
                Instruction::LocalPhaseZ1Pp => {
                    state = state.local_phase_z1pp();
                    *histogram.entry(InstructionKind::LocalPhaseZ1Pp).or_insert(0) += 1;
                }
                Instruction::MeasurePprime(tag) => {
                    let (outcome, post) = state.measure_pprime(rng);
                    outcomes.push((tag.clone(), outcome));
                    state = post;
                    *histogram.entry(InstructionKind::MeasurePprime).or_insert(0) += 1;
                }
                Instruction::ResetPprime => {
                    state = state.reset_pprime().map_err(lattice_err)?;
                    *histogram.entry(InstructionKind::ResetPprime).or_insert(0) += 1;
                }
                Instruction::ZenoGuard(count) => {
                    for _ in 0..*count {
                        let (outcome, post) = state.measure_pprime(rng);
                        outcomes.push(("zeno".to_string(), outcome));
                        state = post;
                        *histogram.entry(InstructionKind::MeasurePprime).or_insert(0) += 1;
                        if outcome {
                            return Err(IsaError::ZenoLeak { index });
                        }
                    }
                }
            }
        }
        Ok(ExecutionTrace {
            outcomes,
            final_state: state,
            histogram,
        })
    }

    /// Number of executable instructions after guard expansion.
    pub fn expanded_len(&self) -> usize {
        self.instructions
            .iter()
            .map(|i| match i {
                Instruction::ZenoGuard(c) => *c as usize,
                _ => 1,
            })
            .sum()
    }

    /// Serialise to the line-oriented text format. Metadata is emitted as
    /// comments; only tables and instructions are read back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.metadata.description.is_empty() {
            out.push_str(&format!("# {}\n", self.metadata.description));
        }
        if !self.metadata.z_frame.is_empty() {
            let frame: Vec<String> = self.metadata.z_frame.iter().map(|p| p.render(3)).collect();
            out.push_str(&format!("# zframe: {}\n", frame.join(" ")));
        }
        for (id, table) in &self.tables {
            out.push_str(&format!("TABLE {id}"));
            for (key, value) in table.entries() {
                out.push_str(&format!(" {key}={value}"));
            }
            out.push('\n');
        }
        for ins in &self.instructions {
            match ins {
                Instruction::Raman { pair, theta, phi } => {
                    out.push_str(&format!("RAMAN {} {} {}\n", pair.token(), theta, phi));
                }
                Instruction::ShiftP(d) => {
                    // always emit all three axes; trailing zeros are harmless
                    let dims = if d.0[2] != 0 {
                        3
                    } else if d.0[1] != 0 {
                        2
                    } else {
                        1
                    };
                    out.push_str(&format!("SHIFTP {}\n", d.render(dims)));
                }
                Instruction::Collide(id) => out.push_str(&format!("COLLIDE {id}\n")),
                Instruction::MolecularPulse => out.push_str("MOLPULSE\n"),
                Instruction::LocalPhaseZ1Pp => out.push_str("LPZ1PP\n"),
                Instruction::MeasurePprime(tag) => out.push_str(&format!("MEASPP {tag}\n")),
                Instruction::ResetPprime => out.push_str("RESETPP\n"),
                Instruction::ZenoGuard(count) => out.push_str(&format!("ZENO {count}\n")),
            }
        }
        out
    }

    /// Parse the text format. Unknown tokens are errors.
    pub fn from_text(text: &str) -> Result<PulseProgram, IsaError> {
        let mut program = PulseProgram::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(at) => &raw[..at],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| IsaError::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let mut tokens = line.split_whitespace();
            let head = tokens.next().unwrap();
            match head {
                "TABLE" => {
                    let id = tokens.next().ok_or_else(|| err("TABLE needs an id"))?;
                    let mut table = CollisionPhaseTable::zero();
                    for kv in tokens {
                        let (key, value) = kv
                            .split_once('=')
                            .ok_or_else(|| err("table entries look like KEY=radians"))?;
                        let value: f64 =
                            value.parse().map_err(|_| err("bad table phase value"))?;
                        if !table.set_entry(key, value) {
                            return Err(err(&format!("unknown table key '{key}'")));
                        }
                    }
                    program
                        .add_table(id, table)
                        .map_err(|_| err("table redeclared with different contents"))?;
                }
                "RAMAN" => {
                    let pair_tok = tokens.next().ok_or_else(|| err("RAMAN needs a pair"))?;
                    let pair = RamanPair::from_token(pair_tok)
                        .ok_or_else(|| err(&format!("unknown Raman pair '{pair_tok}'")))?;
                    let theta: f64 = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err("bad theta"))?;
                    let phi: f64 = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err("bad phi"))?;
                    if tokens.next().is_some() {
                        return Err(err("trailing tokens"));
                    }
                    program.push(Instruction::Raman { pair, theta, phi });
                }
                "SHIFTP" => {
                    let spec = tokens.next().ok_or_else(|| err("SHIFTP needs offsets"))?;
                    let parts: Option<Vec<i32>> =
                        spec.split(',').map(|t| t.parse().ok()).collect();
                    let parts = parts.ok_or_else(|| err("bad shift offsets"))?;
                    if parts.is_empty() || parts.len() > 3 {
                        return Err(err("shift needs 1-3 axis offsets"));
                    }
                    if tokens.next().is_some() {
                        return Err(err("trailing tokens"));
                    }
                    program.push(Instruction::ShiftP(ShiftDelta::new(&parts)));
                }
                "COLLIDE" => {
                    let id = tokens.next().ok_or_else(|| err("COLLIDE needs a table id"))?;
                    if tokens.next().is_some() {
                        return Err(err("trailing tokens"));
                    }
                    program.push(Instruction::Collide(id.to_string()));
                }
                "MOLPULSE" => {
                    if tokens.next().is_some() {
                        return Err(err("trailing tokens"));
                    }
                    program.push(Instruction::MolecularPulse);
                }
                "LPZ1PP" => {
                    if tokens.next().is_some() {
                        return Err(err("trailing tokens"));
                    }
                    program.push(Instruction::LocalPhaseZ1Pp);
                }
                "MEASPP" => {
                    let tag = tokens.next().ok_or_else(|| err("MEASPP needs a tag"))?;
                    if tokens.next().is_some() {
                        return Err(err("trailing tokens"));
                    }
                    program.push(Instruction::MeasurePprime(tag.to_string()));
                }
                "RESETPP" => {
                    if tokens.next().is_some() {
                        return Err(err("trailing tokens"));
                    }
                    program.push(Instruction::ResetPprime);
                }
                "ZENO" => {
                    let count: u32 = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err("bad guard count"))?;
                    if count == 0 {
                        return Err(err("guard count must be at least 1"));
                    }
                    if tokens.next().is_some() {
                        return Err(err("trailing tokens"));
                    }
                    program.push(Instruction::ZenoGuard(count));
                }
                other => return Err(err(&format!("unknown instruction '{other}'"))),
            }
        }
        program.validate()?;
        Ok(program)
    }
}

impl fmt::Display for PulseProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{LatticeSpec, QuantumState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn chain(n: u32) -> LatticeSpec {
        LatticeSpec::new(&[n]).unwrap()
    }

    fn pointered(n: u32) -> QuantumState {
        QuantumState::init_register(chain(n), Some(Position::new(&[0]))).unwrap()
    }

    #[test]
    fn empty_program_is_identity() {
        let st = pointered(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = PulseProgram::new().execute(&st, &mut rng).unwrap();
        assert!(trace.outcomes.is_empty());
        assert!((st.fidelity(&trace.final_state).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn raman_pair_cancels() {
        let mut p = PulseProgram::new();
        p.push(Instruction::Raman {
            pair: RamanPair::S0S1,
            theta: PI,
            phi: 0.0,
        });
        p.push(Instruction::Raman {
            pair: RamanPair::S0S1,
            theta: -PI,
            phi: 0.0,
        });
        let st = pointered(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = p.execute(&st, &mut rng).unwrap();
        assert!((st.fidelity(&trace.final_state).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zeno_guard_on_clean_register() {
        let mut p = PulseProgram::new();
        p.push(Instruction::ZenoGuard(5));
        let st = pointered(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = p.execute(&st, &mut rng).unwrap();
        assert_eq!(trace.outcomes.len(), 5);
        assert!(trace.outcomes.iter().all(|(tag, o)| tag == "zeno" && !o));
        assert_eq!(trace.histogram[&InstructionKind::MeasurePprime], 5);
        assert_eq!(st.to_text(), trace.final_state.to_text());
    }

    #[test]
    fn zeno_guard_leak_is_error() {
        let mut p = PulseProgram::new();
        // deliberately promote |1⟩ → |P'⟩ population: H then 1P' π-pulse
        p.push(Instruction::Raman {
            pair: RamanPair::S0S1,
            theta: PI / 2.0,
            phi: PI / 2.0,
        });
        p.push(Instruction::Raman {
            pair: RamanPair::S1Pp,
            theta: PI,
            phi: 0.0,
        });
        p.push(Instruction::ZenoGuard(4));
        let st = QuantumState::init_register(chain(1), None).unwrap();
        // scan seeds until the guard fires; with p(true) = 1/2 this is quick
        let mut leaked = false;
        for seed in 0..16 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if let Err(IsaError::ZenoLeak { index }) = p.execute(&st, &mut rng) {
                assert_eq!(index, 2);
                leaked = true;
                break;
            }
        }
        assert!(leaked);
    }

    #[test]
    fn histogram_counts_expansion() {
        let mut p = PulseProgram::new();
        p.push(Instruction::ZenoGuard(3));
        p.push(Instruction::MolecularPulse);
        p.push(Instruction::MeasurePprime("m".into()));
        let st = pointered(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = p.execute(&st, &mut rng).unwrap();
        let total: usize = trace.histogram.values().sum();
        assert_eq!(total, p.expanded_len());
        assert_eq!(trace.histogram[&InstructionKind::MeasurePprime], 4);
    }

    #[test]
    fn concat_identity_and_associativity() {
        let empty = PulseProgram::new();
        let mut p = PulseProgram::new();
        p.push(Instruction::MolecularPulse);
        assert_eq!(empty.concat(&p).unwrap().instructions, p.instructions);

        let mut q = PulseProgram::new();
        q.push(Instruction::ShiftP(ShiftDelta::new(&[1])));
        let mut r = PulseProgram::new();
        r.push(Instruction::ResetPprime);
        let left = p.concat(&q).unwrap().concat(&r).unwrap();
        let right = p.concat(&q.concat(&r).unwrap()).unwrap();
        assert_eq!(left.instructions, right.instructions);
    }

    #[test]
    fn concat_table_conflict() {
        let mut a = PulseProgram::new();
        a.add_table("t", CollisionPhaseTable::default()).unwrap();
        let mut b = PulseProgram::new();
        b.add_table("t", CollisionPhaseTable::zero()).unwrap();
        assert_eq!(
            a.concat(&b).unwrap_err(),
            IsaError::TableConflict("t".to_string())
        );
        // identical tables merge fine
        let mut c = PulseProgram::new();
        c.add_table("t", CollisionPhaseTable::default()).unwrap();
        assert!(a.concat(&c).is_ok());
    }

    #[test]
    fn concat_executes_like_sequential_runs() {
        let mut a = PulseProgram::new();
        a.push(Instruction::Raman {
            pair: RamanPair::S0S1,
            theta: 0.8,
            phi: 0.2,
        });
        a.push(Instruction::MeasurePprime("x".into()));
        let mut b = PulseProgram::new();
        b.push(Instruction::Raman {
            pair: RamanPair::S1Pp,
            theta: 0.5,
            phi: 0.0,
        });
        b.push(Instruction::MeasurePprime("y".into()));

        let st = pointered(2);
        let mut rng1 = ChaCha8Rng::seed_from_u64(5);
        let t1 = a.execute(&st, &mut rng1).unwrap();
        let t2 = b.execute(&t1.final_state, &mut rng1).unwrap();

        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        let joint = a.concat(&b).unwrap().execute(&st, &mut rng2).unwrap();
        let mut seq: Vec<(String, bool)> = t1.outcomes.clone();
        seq.extend(t2.outcomes.clone());
        assert_eq!(joint.outcomes, seq);
        assert!(
            (joint.final_state.fidelity(&t2.final_state).unwrap() - 1.0).abs() < 1e-12
        );
    }

    #[test]
    fn reverse_of_shift() {
        let mut p = PulseProgram::new();
        p.push(Instruction::ShiftP(ShiftDelta::new(&[1])));
        let rev = p.reverse_unitary().unwrap();
        assert_eq!(
            rev.instructions,
            vec![Instruction::ShiftP(ShiftDelta::new(&[-1]))]
        );
    }

    #[test]
    fn reverse_of_molecular_pulse_is_itself() {
        let mut p = PulseProgram::new();
        p.push(Instruction::MolecularPulse);
        let rev = p.reverse_unitary().unwrap();
        assert_eq!(rev.instructions, p.instructions);
    }

    #[test]
    fn reverse_rejects_measurement() {
        let mut p = PulseProgram::new();
        p.push(Instruction::MeasurePprime("m".into()));
        assert_eq!(
            p.reverse_unitary().unwrap_err(),
            IsaError::NotUnitary(InstructionKind::MeasurePprime)
        );
    }

    #[test]
    fn reverse_negates_general_tables_and_is_involutive() {
        let mut table = CollisionPhaseTable::zero();
        table.s0_p = 0.7;
        let mut p = PulseProgram::new();
        p.add_table("t", table).unwrap();
        p.push(Instruction::Collide("t".into()));
        p.push(Instruction::Raman {
            pair: RamanPair::S0S1,
            theta: 0.3,
            phi: 0.1,
        });
        let rev = p.reverse_unitary().unwrap();
        assert_eq!(
            rev.instructions[1],
            Instruction::Collide("t~inv".to_string())
        );
        assert!((rev.tables["t~inv"].s0_p + 0.7).abs() < 1e-15);
        let back = rev.reverse_unitary().unwrap();
        assert_eq!(back.instructions, p.instructions);
        assert_eq!(back.tables, p.tables);
    }

    #[test]
    fn program_then_reverse_is_identity() {
        let mut p = PulseProgram::new();
        p.add_table("w", CollisionPhaseTable::default()).unwrap();
        p.push(Instruction::Raman {
            pair: RamanPair::S0S1,
            theta: 1.2,
            phi: 0.4,
        });
        p.push(Instruction::ShiftP(ShiftDelta::new(&[1])));
        p.push(Instruction::Collide("w".into()));
        p.push(Instruction::MolecularPulse);
        p.push(Instruction::ShiftP(ShiftDelta::new(&[-1])));
        let round = p.concat(&p.reverse_unitary().unwrap()).unwrap();
        let st = pointered(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = round.execute(&st, &mut rng).unwrap();
        assert!((st.fidelity(&trace.final_state).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn text_round_trip() {
        let mut p = PulseProgram::new();
        p.add_table("default", CollisionPhaseTable::default()).unwrap();
        p.push(Instruction::Raman {
            pair: RamanPair::S1Pp,
            theta: PI / 2.0,
            phi: PI / 2.0,
        });
        p.push(Instruction::ShiftP(ShiftDelta::new(&[1, -1])));
        p.push(Instruction::Collide("default".into()));
        p.push(Instruction::MolecularPulse);
        p.push(Instruction::LocalPhaseZ1Pp);
        p.push(Instruction::MeasurePprime("q0".into()));
        p.push(Instruction::ResetPprime);
        p.push(Instruction::ZenoGuard(3));
        let text = p.to_text();
        let back = PulseProgram::from_text(&text).unwrap();
        assert_eq!(back.instructions, p.instructions);
        assert_eq!(back.tables, p.tables);
        // serialisation is stable
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn parse_rejects_unknown_tokens() {
        assert!(PulseProgram::from_text("WOBBLE 3\n").is_err());
        assert!(PulseProgram::from_text("RAMAN 0P 1 0\n").is_err());
        assert!(PulseProgram::from_text("TABLE t XX=1\n").is_err());
        assert!(PulseProgram::from_text("COLLIDE missing\n").is_err());
        assert!(PulseProgram::from_text("ZENO 0\n").is_err());
        assert!(PulseProgram::from_text("MOLPULSE extra\n").is_err());
    }

    #[test]
    fn parse_accepts_comments_and_blanks() {
        let p = PulseProgram::from_text("# header\n\nMOLPULSE # trailing\n").unwrap();
        assert_eq!(p.instructions, vec![Instruction::MolecularPulse]);
    }

    #[test]
    fn replay_determinism() {
        let mut p = PulseProgram::new();
        p.push(Instruction::Raman {
            pair: RamanPair::S0S1,
            theta: PI / 2.0,
            phi: PI / 2.0,
        });
        p.push(Instruction::Raman {
            pair: RamanPair::S1Pp,
            theta: 1.0,
            phi: 0.3,
        });
        p.push(Instruction::MeasurePprime("a".into()));
        p.push(Instruction::MeasurePprime("b".into()));
        let st = QuantumState::init_register(chain(2), None).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let t = p.execute(&st, &mut rng).unwrap();
            (t.outcomes.clone(), t.final_state.to_text())
        };
        assert_eq!(run(), run());
    }
}
