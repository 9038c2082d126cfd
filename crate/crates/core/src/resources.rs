//! Closed-form resource counts and instruction-level program audits.

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::isa::{Instruction, PulseProgram};
use crate::lattice::RamanPair;

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error("qubit separation m must be at least 1")]
    ZeroSeparation,
    #[error("unpaired entangling brackets: {0} half-π (P,P') composites is not a multiple of 4")]
    UnpairedBrackets(usize),
}

/// Aggregate cost of a computation or compiled program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CostReport {
    pub rows_moved: usize,
    pub columns_moved: usize,
    pub single_qubit_rotations: usize,
    pub measurements: usize,
    pub entangling_passes: usize,
}

impl CostReport {
    pub fn add(&self, other: &CostReport) -> CostReport {
        CostReport {
            rows_moved: self.rows_moved + other.rows_moved,
            columns_moved: self.columns_moved + other.columns_moved,
            single_qubit_rotations: self.single_qubit_rotations + other.single_qubit_rotations,
            measurements: self.measurements + other.measurements,
            entangling_passes: self.entangling_passes + other.entangling_passes,
        }
    }

    /// CSV row `m,rows,cols,rotations,measurements,passes`.
    pub fn csv_row(&self, m: usize) -> String {
        format!(
            "{},{},{},{},{},{}",
            m,
            self.rows_moved,
            self.columns_moved,
            self.single_qubit_rotations,
            self.measurements,
            self.entangling_passes
        )
    }

    pub fn csv_header() -> &'static str {
        "m,rows,cols,rotations,measurements,passes"
    }
}

/// Rows the entangled pointer crosses in a network-model two-qubit gate
/// between qubits separated by `m` on the circuit diagram: ⌈2√m⌉.
pub fn network_move_rows(m: usize) -> Result<usize, AuditError> {
    if m == 0 {
        return Err(AuditError::ZeroSeparation);
    }
    Ok((2.0 * (m as f64).sqrt()).ceil() as usize)
}

/// Cluster-computation cost of the same gate: the pointer crosses 4m rows
/// and 6 columns, and 15m single-qubit rotations and measurements are spent.
/// The 15m total is the contract; lacking a finer attribution it is split
/// evenly, rotations taking the odd one.
pub fn cluster_gate_cost(m: usize) -> Result<CostReport, AuditError> {
    if m == 0 {
        return Err(AuditError::ZeroSeparation);
    }
    let ops = 15 * m;
    Ok(CostReport {
        rows_moved: 4 * m,
        columns_moved: 6,
        single_qubit_rotations: ops - ops / 2,
        measurements: ops / 2,
        entangling_passes: 0,
    })
}

/// A one-way single-qubit rotation consumes five rotations and five
/// measurements, independent of the rotation itself.
pub fn one_way_1q_cost() -> CostReport {
    CostReport {
        rows_moved: 0,
        columns_moved: 0,
        single_qubit_rotations: 5,
        measurements: 5,
        entangling_passes: 0,
    }
}

/// Audit a compiled program from its instruction stream.
///
/// - rows/columns: unit shift instructions per axis (axis 0 → rows, the
///   remaining axes → columns);
/// - measurements: |P′⟩ measurements, guard expansions included;
/// - entangling passes: groups of four half-π (P, P′) Hadamard composites
///   (bracket open/close and their reverse); a count that is not a multiple
///   of four flags a malformed program;
/// - rotations: maximal contiguous runs of {Raman(0,1), molecular pulse,
///   shift} instructions outside entangling brackets that contain at least
///   one molecular pulse — i.e. localized gate blocks. Back-to-back gate
///   blocks with no separating instruction merge into one counted rotation.
pub fn audit(program: &PulseProgram) -> Result<CostReport, AuditError> {
    let mut report = CostReport::default();

    // entangling-bracket composites
    let half_pi_ppp: Vec<usize> = program
        .instructions
        .iter()
        .enumerate()
        .filter(|(_, i)| {
            matches!(i, Instruction::Raman { pair: RamanPair::PPp, theta, .. }
                     if (theta.abs() - FRAC_PI_2).abs() < 1e-9)
        })
        .map(|(at, _)| at)
        .collect();
    if half_pi_ppp.len() % 4 != 0 {
        return Err(AuditError::UnpairedBrackets(half_pi_ppp.len()));
    }
    report.entangling_passes = half_pi_ppp.len() / 4;

    // instruction index ranges covered by entangling brackets
    let mut bracketed = vec![false; program.instructions.len()];
    for group in half_pi_ppp.chunks(4) {
        for slot in bracketed
            .iter_mut()
            .take(group[3] + 1)
            .skip(group[0])
        {
            *slot = true;
        }
    }

    let mut in_block = false;
    let mut block_has_pulse = false;
    for (at, ins) in program.instructions.iter().enumerate() {
        match ins {
            Instruction::ShiftP(d) => {
                report.rows_moved += d.0[0].unsigned_abs() as usize;
                report.columns_moved +=
                    d.0[1].unsigned_abs() as usize + d.0[2].unsigned_abs() as usize;
            }
            Instruction::MeasurePprime(_) => report.measurements += 1,
            Instruction::ZenoGuard(count) => report.measurements += *count as usize,
            _ => {}
        }

        let block_member = !bracketed[at]
            && matches!(
                ins,
                Instruction::ShiftP(_)
                    | Instruction::MolecularPulse
                    | Instruction::Raman {
                        pair: RamanPair::S0S1,
                        ..
                    }
            );
        if block_member {
            in_block = true;
            if matches!(ins, Instruction::MolecularPulse) {
                block_has_pulse = true;
            }
        } else if in_block {
            if block_has_pulse {
                report.single_qubit_rotations += 1;
            }
            in_block = false;
            block_has_pulse = false;
        }
    }
    if in_block && block_has_pulse {
        report.single_qubit_rotations += 1;
    }
    Ok(report)
}
