//! Independent dense n-qubit simulator used as ground truth.
//!
//! Gate action here is implemented directly on a dense amplitude vector with
//! bit-indexed loops and shares no code with the lattice simulator, so
//! agreement between the two is evidence rather than tautology.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::compiler::{self, CircuitOp, Mat2, PointerPlan};
use crate::lattice::{LatticeSpec, Position, QuantumState};

/// Errors from the dense oracle.
#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("qubit index {0} out of range")]
    QubitOutOfRange(usize),
    #[error("gate sites must be distinct")]
    SitesNotDistinct,
    #[error("state sizes differ")]
    SizeMismatch,
    #[error("register of {0} qubits exceeds the dense limit of 12")]
    TooLarge(usize),
    #[error("verification harness: {0}")]
    Harness(String),
}

/// Dense state over n ≤ 12 qubits. Bit `i` of an index is qubit `i`,
/// least significant bit first, matching the lattice register convention.
#[derive(Debug, Clone)]
pub struct QubitState {
    n: usize,
    pub amps: Vec<Complex64>,
}

impl QubitState {
    pub fn zeros(n: usize) -> Result<Self, OracleError> {
        if n > 12 {
            return Err(OracleError::TooLarge(n));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(QubitState { n, amps })
    }

    pub fn from_amps(amps: Vec<Complex64>) -> Result<Self, OracleError> {
        let n = amps.len().trailing_zeros() as usize;
        if amps.len() != 1 << n {
            return Err(OracleError::SizeMismatch);
        }
        if n > 12 {
            return Err(OracleError::TooLarge(n));
        }
        Ok(QubitState { n, amps })
    }

    /// Haar-like random state: normalised complex normals from a seeded
    /// generator (Box–Muller on uniform draws).
    pub fn random(n: usize, seed: u64) -> Result<Self, OracleError> {
        if n > 12 {
            return Err(OracleError::TooLarge(n));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amps = Vec::with_capacity(1 << n);
        for _ in 0..(1 << n) {
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            amps.push(Complex64::new(
                r * (2.0 * std::f64::consts::PI * u2).cos(),
                r * (2.0 * std::f64::consts::PI * u2).sin(),
            ));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in amps.iter_mut() {
            *a /= norm;
        }
        Ok(QubitState { n, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, q: usize) -> Result<(), OracleError> {
        if q < self.n {
            Ok(())
        } else {
            Err(OracleError::QubitOutOfRange(q))
        }
    }

    /// Apply an arbitrary single-qubit unitary.
    pub fn apply_1q(&mut self, q: usize, u: &Mat2) -> Result<(), OracleError> {
        self.check_qubit(q)?;
        let mask = 1usize << q;
        let m = u.elems();
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            let a0 = self.amps[base];
            let a1 = self.amps[base | mask];
            self.amps[base] = m[0][0] * a0 + m[0][1] * a1;
            self.amps[base | mask] = m[1][0] * a0 + m[1][1] * a1;
        }
        Ok(())
    }

    pub fn h(&mut self, q: usize) -> Result<(), OracleError> {
        self.apply_1q(q, &Mat2::h())
    }

    pub fn x(&mut self, q: usize) -> Result<(), OracleError> {
        self.apply_1q(q, &Mat2::x())
    }

    pub fn z(&mut self, q: usize) -> Result<(), OracleError> {
        self.apply_1q(q, &Mat2::z())
    }

    pub fn cz(&mut self, a: usize, b: usize) -> Result<(), OracleError> {
        if a == b {
            return Err(OracleError::SitesNotDistinct);
        }
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        let mask = (1usize << a) | (1usize << b);
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            if idx & mask == mask {
                *amp = -*amp;
            }
        }
        Ok(())
    }

    /// Controlled application of a single-qubit unitary.
    pub fn apply_controlled(
        &mut self,
        control: usize,
        target: usize,
        u: &Mat2,
    ) -> Result<(), OracleError> {
        if control == target {
            return Err(OracleError::SitesNotDistinct);
        }
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        let m = u.elems();
        for base in 0..self.amps.len() {
            if base & cmask == 0 || base & tmask != 0 {
                continue;
            }
            let a0 = self.amps[base];
            let a1 = self.amps[base | tmask];
            self.amps[base] = m[0][0] * a0 + m[0][1] * a1;
            self.amps[base | tmask] = m[1][0] * a0 + m[1][1] * a1;
        }
        Ok(())
    }

    /// Probability that qubit `q` reads 1 in the computational basis.
    pub fn prob_one(&self, q: usize) -> Result<f64, OracleError> {
        self.check_qubit(q)?;
        let mask = 1usize << q;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Project qubit `q` onto `value` and renormalise.
    pub fn project(&mut self, q: usize, value: bool) -> Result<(), OracleError> {
        self.check_qubit(q)?;
        let mask = 1usize << q;
        let p: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| ((i & mask) != 0) == value)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if p <= 0.0 {
            return Err(OracleError::Harness("projection onto zero-probability branch".into()));
        }
        let scale = 1.0 / p.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if ((i & mask) != 0) == value {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        Ok(())
    }

    /// Density matrix of the qubits NOT in `traced_out`, by partial trace.
    pub fn reduced_density(&self, traced_out: &[usize]) -> Vec<Vec<Complex64>> {
        let keep: Vec<usize> = (0..self.n).filter(|q| !traced_out.contains(q)).collect();
        let kd = 1usize << keep.len();
        let mut rho = vec![vec![Complex64::new(0.0, 0.0); kd]; kd];
        let extract = |idx: usize| -> usize {
            let mut v = 0usize;
            for (pos, &q) in keep.iter().enumerate() {
                if idx & (1 << q) != 0 {
                    v |= 1 << pos;
                }
            }
            v
        };
        let env = |idx: usize| -> usize {
            let mut v = 0usize;
            for (pos, &q) in traced_out.iter().enumerate() {
                if idx & (1 << q) != 0 {
                    v |= 1 << pos;
                }
            }
            v
        };
        for (i, a) in self.amps.iter().enumerate() {
            for (j, b) in self.amps.iter().enumerate() {
                if env(i) == env(j) {
                    rho[extract(i)][extract(j)] += a * b.conj();
                }
            }
        }
        rho
    }
}

/// |⟨a|b⟩|² — invariant under a global phase on either argument.
pub fn fidelity_up_to_global_phase(a: &[Complex64], b: &[Complex64]) -> Result<f64, OracleError> {
    if a.len() != b.len() {
        return Err(OracleError::SizeMismatch);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    Ok(acc.norm_sqr())
}

/// Outcome of verifying one compiled operation against the oracle.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub op_name: String,
    pub trials: usize,
    pub min_fidelity: f64,
    pub pointer_ok: bool,
    pub support_ok: bool,
    /// (trial index, fidelity) for every trial below threshold.
    pub failures: Vec<(usize, f64)>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.pointer_ok && self.support_ok
    }

    pub fn line(&self) -> String {
        format!(
            "OP {} TRIALS {} MIN_FID {} POINTER_OK {}",
            self.op_name, self.trials, self.min_fidelity, self.pointer_ok
        )
    }
}

/// Apply the ideal action of a circuit operation to a dense state.
/// Preparation ops ignore the input and return the ideal preparation.
pub fn ideal_action(
    op: &CircuitOp,
    spec: &LatticeSpec,
    input: &QubitState,
) -> Result<QubitState, OracleError> {
    let site_index = |p: Position| -> Result<usize, OracleError> {
        spec.index_of(p)
            .ok_or_else(|| OracleError::Harness(format!("site {} not on lattice", p.render(spec.dims()))))
    };
    let mut out = input.clone();
    match op {
        CircuitOp::Local1q { site, u } => {
            out.apply_1q(site_index(*site)?, u)?;
        }
        CircuitOp::ControlledU { control, targets, u } => {
            let c = site_index(*control)?;
            for t in targets {
                out.apply_controlled(c, site_index(*t)?, u)?;
            }
        }
        CircuitOp::MeasureZ { .. } => {
            return Err(OracleError::Harness(
                "measurement has no single ideal unitary; use the measurement harness".into(),
            ));
        }
        CircuitOp::PrepGhz { sites } => {
            out = QubitState::zeros(input.num_qubits())?;
            let idxs: Vec<usize> = sites
                .iter()
                .map(|&s| site_index(s))
                .collect::<Result<_, _>>()?;
            // (|0…0⟩ + |1…1⟩)/√2 on the listed sites
            out.h(idxs[0])?;
            for w in idxs.windows(2) {
                // CNOT via H-CZ-H on the target
                out.h(w[1])?;
                out.cz(w[0], w[1])?;
                out.h(w[1])?;
            }
        }
        CircuitOp::PrepGraph { graph } => {
            out = QubitState::zeros(input.num_qubits())?;
            for q in 0..out.num_qubits() {
                out.h(q)?;
            }
            for (a, b) in graph.edge_positions() {
                out.cz(site_index(a)?, site_index(b)?)?;
            }
        }
        CircuitOp::PrepCluster => {
            out = QubitState::zeros(input.num_qubits())?;
            for q in 0..out.num_qubits() {
                out.h(q)?;
            }
            // nearest-neighbour edges of the lattice
            for i in 0..spec.site_count() {
                let p = spec.site_at(i);
                for axis in 0..spec.dims() {
                    let mut c = [p.coord(0), p.coord(1), p.coord(2)];
                    c[axis] += 1;
                    let q = Position::new(&c[..spec.dims()]);
                    if let Some(j) = spec.index_of(q) {
                        out.cz(i, j)?;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Run `trials` random-input checks of a compiled operation against the
/// oracle: compile, execute on the lattice, factor the pointer off, compare
/// with the ideal action up to a global phase, and confirm that qubits
/// outside the declared support kept their reduced state.
pub fn verify_program(
    op: &CircuitOp,
    spec: &LatticeSpec,
    plan: &PointerPlan,
    trials: usize,
    seed: u64,
) -> Result<VerifyReport, OracleError> {
    let n = spec.site_count();
    if n > 5 {
        return Err(OracleError::TooLarge(n));
    }
    if trials == 0 {
        return Err(OracleError::Harness("trials must be positive".into()));
    }
    let program = compiler::compile_op(op, spec, plan)
        .map_err(|e| OracleError::Harness(format!("compile failed: {e}")))?;
    verify_compiled(op, &program, spec, plan, trials, seed)
}

/// Like [`verify_program`] but takes an already-compiled program, so callers
/// can inject mutations before verification.
pub fn verify_compiled(
    op: &CircuitOp,
    program: &crate::isa::PulseProgram,
    spec: &LatticeSpec,
    plan: &PointerPlan,
    trials: usize,
    seed: u64,
) -> Result<VerifyReport, OracleError> {
    let n = spec.site_count();
    let uses_pointer = !matches!(op, CircuitOp::PrepCluster);
    let preparation = matches!(
        op,
        CircuitOp::PrepGhz { .. } | CircuitOp::PrepGraph { .. } | CircuitOp::PrepCluster
    );
    let support = op.support(spec);
    let complement: Vec<usize> = (0..n)
        .filter(|&i| !support.contains(&spec.site_at(i)))
        .collect();

    let mut min_fidelity = f64::INFINITY;
    let mut pointer_ok = true;
    let mut support_ok = true;
    let mut failures = Vec::new();
    let effective_trials = if preparation { 1 } else { trials };

    for trial in 0..effective_trials {
        let input = if preparation {
            QubitState::zeros(n)?
        } else {
            QubitState::random(n, seed.wrapping_add(trial as u64))?
        };
        let pointer_site = uses_pointer.then_some(plan.rest);
        let initial = QuantumState::from_register(*spec, &input.amps, pointer_site)
            .map_err(|e| OracleError::Harness(format!("embedding failed: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed ^ trial as u64);
        let trace = match program.execute(&initial, &mut rng) {
            Ok(t) => t,
            Err(e) => {
                // execution failure counts as fidelity zero for this trial
                min_fidelity = 0.0;
                failures.push((trial, 0.0));
                pointer_ok = false;
                let _ = e;
                continue;
            }
        };
        let register = if uses_pointer {
            match trace.final_state.factor_pointer() {
                Ok((reg, ptr)) => {
                    if ptr.definite() != Some((plan.rest, crate::lattice::InternalState::P)) {
                        pointer_ok = false;
                    }
                    reg
                }
                Err(_) => {
                    pointer_ok = false;
                    min_fidelity = 0.0;
                    failures.push((trial, 0.0));
                    continue;
                }
            }
        } else {
            match trace.final_state.to_register_state() {
                Ok(reg) => reg,
                Err(_) => {
                    min_fidelity = 0.0;
                    failures.push((trial, 0.0));
                    continue;
                }
            }
        };

        // undo the recorded local-Z correction frame before comparing
        let mut observed = QubitState::from_amps(register.amps)?;
        for &site in &program.metadata.z_frame {
            let q = spec
                .index_of(site)
                .ok_or_else(|| OracleError::Harness("z-frame site off lattice".into()))?;
            observed.z(q)?;
        }

        let ideal = ideal_action(op, spec, &input)?;
        let fid = fidelity_up_to_global_phase(&observed.amps, &ideal.amps)?;
        if fid < min_fidelity {
            min_fidelity = fid;
        }
        if fid < 1.0 - 1e-9 {
            failures.push((trial, fid));
        }

        // reduced state on the complement of the declared support
        if !complement.is_empty() && !preparation {
            let traced: Vec<usize> = (0..n).filter(|q| !complement.contains(q)).collect();
            let before = input.reduced_density(&traced);
            let after = observed.reduced_density(&traced);
            let mut max_diff = 0.0f64;
            for (ra, rb) in before.iter().zip(&after) {
                for (a, b) in ra.iter().zip(rb) {
                    max_diff = max_diff.max((a - b).norm());
                }
            }
            // entrywise 1.25e-11 bounds the trace distance of a ≤2-qubit
            // complement by 1e-10, hence fidelity ≥ 1 − 1e-10
            if max_diff > 1.25e-11 {
                support_ok = false;
            }
        }
    }

    Ok(VerifyReport {
        op_name: op.name(),
        trials: effective_trials,
        min_fidelity,
        pointer_ok,
        support_ok,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn h_on_zero() {
        let mut st = QubitState::zeros(1).unwrap();
        st.h(0).unwrap();
        let h = 1.0 / 2.0f64.sqrt();
        assert!((st.amps[0] - c(h, 0.0)).norm() < 1e-15);
        assert!((st.amps[1] - c(h, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn cz_flips_11() {
        let mut st = QubitState::zeros(2).unwrap();
        st.x(0).unwrap();
        st.x(1).unwrap();
        st.cz(0, 1).unwrap();
        assert!((st.amps[3] - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn two_qubit_cluster_state() {
        // CZ·(H⊗H)|00⟩, the definition
        let mut st = QubitState::zeros(2).unwrap();
        st.h(0).unwrap();
        st.h(1).unwrap();
        st.cz(0, 1).unwrap();
        let expect = [0.5, 0.5, 0.5, -0.5];
        for (a, e) in st.amps.iter().zip(expect) {
            assert!((a - c(e, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn fidelity_identities() {
        let a = QubitState::random(3, 1).unwrap();
        assert!((fidelity_up_to_global_phase(&a.amps, &a.amps).unwrap() - 1.0).abs() < 1e-12);
        let mut b = a.clone();
        for amp in b.amps.iter_mut() {
            *amp *= Complex64::from_polar(1.0, 0.9);
        }
        assert!((fidelity_up_to_global_phase(&a.amps, &b.amps).unwrap() - 1.0).abs() < 1e-12);
        let mut z = QubitState::zeros(3).unwrap();
        z.x(0).unwrap();
        let zero = QubitState::zeros(3).unwrap();
        assert!(fidelity_up_to_global_phase(&z.amps, &zero.amps).unwrap() < 1e-15);
    }

    #[test]
    fn random_states_are_seeded() {
        let a = QubitState::random(4, 7).unwrap();
        let b = QubitState::random(4, 7).unwrap();
        assert_eq!(a.amps, b.amps);
        let d = QubitState::random(4, 8).unwrap();
        assert!(fidelity_up_to_global_phase(&a.amps, &d.amps).unwrap() < 0.999);
        assert!((a.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn controlled_u_matches_cz_for_z() {
        let mut a = QubitState::random(2, 3).unwrap();
        let mut b = a.clone();
        a.cz(0, 1).unwrap();
        b.apply_controlled(0, 1, &Mat2::z()).unwrap();
        assert!((fidelity_up_to_global_phase(&a.amps, &b.amps).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reduced_density_of_product() {
        let mut st = QubitState::zeros(2).unwrap();
        st.h(0).unwrap();
        let rho = st.reduced_density(&[0]);
        // qubit 1 remains |0⟩⟨0|
        assert!((rho[0][0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(rho[1][1].norm() < 1e-12);
    }

    #[test]
    fn size_guard() {
        assert!(matches!(QubitState::zeros(13), Err(OracleError::TooLarge(13))));
    }
}
