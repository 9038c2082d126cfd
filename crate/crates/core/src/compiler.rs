//! Lowers circuit-level operations into globally-addressed pulse programs.
//!
//! Everything here reduces to three tricks:
//!
//! 1. A molecular pulse is a Z on the qubit sharing a site with a |P⟩
//!    pointer, so `V† Z V` sandwiches of global Raman pulses implement any
//!    localized single-qubit gate — the globals cancel wherever the Z did
//!    not fire.
//! 2. A Hadamard on (P, P′) before and after a pointer–control collision
//!    parks the pointer in |P′⟩ conditioned on the control qubit, turning
//!    subsequent localized gates into controlled ones; running the opening
//!    steps in reverse afterwards disentangles the pointer again.
//! 3. Promoting |1⟩ components to |P⟩ and shifting the transport lattice one
//!    site entangles every neighbouring pair at once (cluster preparation).
//!
//! The driven Raman rotations R(θ, φ) all have determinant one, so a true
//! Hadamard is only reachable up to a phase: the composite used here equals
//! −i·H. Wherever a Hadamard pair must cancel exactly on spectator atoms the
//! closing pulse pair is the exact inverse composite (+i·H), which leaves
//! sandwiched conditional phases unaffected.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

use crate::graph::{star_decomposition, GraphError, GraphSpec};
use crate::isa::{Instruction, IsaError, PulseProgram};
use crate::lattice::{CollisionPhaseTable, LatticeSpec, Position, RamanPair, ShiftDelta};

const DECOMP_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CompileError {
    #[error("site {0} is not on the lattice")]
    SiteOffLattice(String),
    #[error("matrix is not unitary")]
    NotUnitary,
    #[error("gate decomposition residual {0} exceeds 1e-9")]
    DecompositionResidual(f64),
    #[error("control site appears among the targets")]
    ControlAmongTargets,
    #[error("duplicate target site")]
    DuplicateTarget,
    #[error("at least one site required")]
    EmptySites,
    #[error("cluster initialisation moves the register atoms; remove the pointer first")]
    PointerPresent,
    #[error("one-way chain invalid: {0}")]
    BadChain(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error("circuit parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// 2×2 complex matrix with the handful of algebra the compiler needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2([[Complex64; 2]; 2]);

impl Mat2 {
    pub fn new(m: [[Complex64; 2]; 2]) -> Self {
        Mat2(m)
    }

    pub fn from_rows(r0: [Complex64; 2], r1: [Complex64; 2]) -> Self {
        Mat2([r0, r1])
    }

    pub fn elems(&self) -> &[[Complex64; 2]; 2] {
        &self.0
    }

    pub fn identity() -> Self {
        Mat2([
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ])
    }

    pub fn x() -> Self {
        Mat2([
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        ])
    }

    pub fn y() -> Self {
        Mat2([
            [Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0)],
            [Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)],
        ])
    }

    pub fn z() -> Self {
        Mat2([
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)],
        ])
    }

    pub fn h() -> Self {
        let h = Complex64::new(1.0 / 2.0f64.sqrt(), 0.0);
        Mat2([[h, h], [h, -h]])
    }

    /// exp(−iθ/2·Z)
    pub fn rz(theta: f64) -> Self {
        Mat2([
            [Complex64::from_polar(1.0, -theta / 2.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, theta / 2.0)],
        ])
    }

    /// exp(−iθ/2·X)
    pub fn rx(theta: f64) -> Self {
        let c = Complex64::new((theta / 2.0).cos(), 0.0);
        let s = Complex64::new(0.0, -(theta / 2.0).sin());
        Mat2([[c, s], [s, c]])
    }

    /// Raman pulse matrix R(θ, φ) = exp(−iθ/2·(cosφ·X + sinφ·Y)).
    pub fn raman(theta: f64, phi: f64) -> Self {
        let c = Complex64::new((theta / 2.0).cos(), 0.0);
        let s = (theta / 2.0).sin();
        Mat2([
            [c, Complex64::new(0.0, -1.0) * Complex64::from_polar(s, -phi)],
            [Complex64::new(0.0, -1.0) * Complex64::from_polar(s, phi), c],
        ])
    }

    /// Pauli matrix along a unit axis: v·σ.
    pub fn pauli_axis(v: [f64; 3]) -> Self {
        Mat2([
            [
                Complex64::new(v[2], 0.0),
                Complex64::new(v[0], -v[1]),
            ],
            [
                Complex64::new(v[0], v[1]),
                Complex64::new(-v[2], 0.0),
            ],
        ])
    }

    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for (k, bk) in b.iter().enumerate() {
                    out[i][j] += a[i][k] * bk[j];
                }
            }
        }
        Mat2(out)
    }

    pub fn dagger(&self) -> Mat2 {
        Mat2([
            [self.0[0][0].conj(), self.0[1][0].conj()],
            [self.0[0][1].conj(), self.0[1][1].conj()],
        ])
    }

    pub fn scale(&self, s: Complex64) -> Mat2 {
        let mut out = self.0;
        for row in out.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        Mat2(out)
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let p = self.dagger().mul(self);
        let id = Mat2::identity();
        p.distance(&id) < tol
    }

    /// Max-entry distance.
    pub fn distance(&self, other: &Mat2) -> f64 {
        let mut d = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        d
    }

    /// 1 − |tr(A†B)|/2, zero iff equal up to a global phase (for unitaries).
    pub fn distance_up_to_phase(&self, other: &Mat2) -> f64 {
        (1.0 - self.dagger().mul(other).trace().norm() / 2.0).max(0.0)
    }

    /// Split a unitary into a special-unitary part and its determinant phase:
    /// `self = e^{iδ/2}·g` with det g = 1 and δ = arg det(self).
    pub fn su2_normalize(&self) -> Result<(Mat2, f64), CompileError> {
        if !self.is_unitary(1e-12) {
            return Err(CompileError::NotUnitary);
        }
        let delta = self.det().arg();
        let g = self.scale(Complex64::from_polar(1.0, -delta / 2.0));
        Ok((g, delta))
    }
}

/// Deterministic unit vector orthogonal to `n`.
fn orthogonal_unit(n: [f64; 3]) -> [f64; 3] {
    // cross with the coordinate axis least aligned with n
    let abs = [n[0].abs(), n[1].abs(), n[2].abs()];
    let axis = if abs[0] <= abs[1] && abs[0] <= abs[2] {
        [1.0, 0.0, 0.0]
    } else if abs[1] <= abs[2] {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let c = cross(n, axis);
    let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    [c[0] / norm, c[1] / norm, c[2] / norm]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Write g ∈ SU(2) as an ordered product of Pauli-axis matrices,
/// g = σ_v · σ_w, returned in application order `[w, v]`. The identity needs
/// no factors; −1 needs two anti-parallel axes. Each factor is realised as a
/// molecular-pulse Z conjugated by one Raman pulse.
pub fn su2_axis_factors(g: &Mat2) -> Result<Vec<[f64; 3]>, CompileError> {
    let e = g.elems();
    // g = c·I − i·(w·σ)
    let c = (e[0][0] + e[1][1]).re / 2.0;
    let wx = (Complex64::new(0.0, 1.0) * (e[0][1] + e[1][0]) / 2.0).re;
    let wy = ((e[1][0] - e[0][1]) / 2.0).re;
    let wz = (Complex64::new(0.0, 1.0) * (e[0][0] - e[1][1]) / 2.0).re;
    let s = (wx * wx + wy * wy + wz * wz).sqrt();

    let axes: Vec<[f64; 3]> = if s < 1e-12 {
        if c > 0.0 {
            vec![]
        } else {
            // g = −I = σ_{−z}·σ_z read right-to-left
            vec![[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]
        }
    } else {
        let n = [wx / s, wy / s, wz / s];
        let e1 = orthogonal_unit(n);
        let e2 = cross(n, e1);
        // σ_v σ_w = (v·w)·I + i(v×w)·σ with v = e1, w = c·e1 − s·e2
        let v = e1;
        let w = [
            c * e1[0] - s * e2[0],
            c * e1[1] - s * e2[1],
            c * e1[2] - s * e2[2],
        ];
        vec![w, v]
    };

    // verify the reconstruction
    let mut check = Mat2::identity();
    for axis in axes.iter().rev() {
        check = check.mul(&Mat2::pauli_axis(*axis));
    }
    let residual = check.distance(g);
    if residual > DECOMP_TOL {
        return Err(CompileError::DecompositionResidual(residual));
    }
    Ok(axes)
}

/// The single Raman pulse V with V† Z V = σ_axis, or None when the axis is
/// +z and no conjugation is needed.
fn axis_conjugation_pulse(axis: [f64; 3]) -> Option<(f64, f64)> {
    let theta = axis[2].clamp(-1.0, 1.0).acos();
    if theta.abs() < 1e-15 {
        return None;
    }
    let phi = axis[1].atan2(axis[0]);
    Some((theta, phi - FRAC_PI_2))
}

/// Pointer bookkeeping: compiled programs take the pointer from `rest` and
/// return it there in |P⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointerPlan {
    pub rest: Position,
}

impl PointerPlan {
    pub fn new(rest: Position) -> Self {
        PointerPlan { rest }
    }
}

/// Circuit-level operations accepted by the compiler.
#[derive(Debug, Clone, PartialEq)]
pub enum CircuitOp {
    Local1q { site: Position, u: Mat2 },
    MeasureZ { site: Position, tag: String },
    ControlledU {
        control: Position,
        targets: Vec<Position>,
        u: Mat2,
    },
    PrepGhz { sites: Vec<Position> },
    PrepGraph { graph: GraphSpec },
    PrepCluster,
}

impl CircuitOp {
    pub fn name(&self) -> String {
        match self {
            CircuitOp::Local1q { .. } => "LOCAL1Q".into(),
            CircuitOp::MeasureZ { .. } => "MEASZ".into(),
            CircuitOp::ControlledU { .. } => "CU".into(),
            CircuitOp::PrepGhz { .. } => "GHZ".into(),
            CircuitOp::PrepGraph { .. } => "GRAPH".into(),
            CircuitOp::PrepCluster => "CLUSTER".into(),
        }
    }

    /// Sites the operation is declared to act on; qubits elsewhere keep
    /// their reduced state. Preparations own the whole lattice.
    pub fn support(&self, spec: &LatticeSpec) -> Vec<Position> {
        match self {
            CircuitOp::Local1q { site, .. } | CircuitOp::MeasureZ { site, .. } => vec![*site],
            CircuitOp::ControlledU { control, targets, .. } => {
                let mut v = vec![*control];
                v.extend(targets.iter().copied());
                v
            }
            CircuitOp::PrepGhz { sites } => sites.clone(),
            CircuitOp::PrepGraph { .. } | CircuitOp::PrepCluster => spec.sites().collect(),
        }
    }
}

fn check_site(site: Position, spec: &LatticeSpec) -> Result<(), CompileError> {
    if spec.contains(site) {
        Ok(())
    } else {
        Err(CompileError::SiteOffLattice(site.render(spec.dims())))
    }
}

/// Axis-ordered unit moves taking the pointer from `from` to `to`.
fn path_moves(from: Position, to: Position, dims: usize) -> Vec<Instruction> {
    let mut moves = Vec::new();
    for axis in 0..dims {
        let d = to.coord(axis) - from.coord(axis);
        let step = if d >= 0 { 1 } else { -1 };
        for _ in 0..d.abs() {
            moves.push(Instruction::ShiftP(ShiftDelta::axis(axis, step)));
        }
    }
    moves
}

/// Pulse pair realising −i·H on the given pair (apply in list order).
pub fn hadamard_pulses(pair: RamanPair) -> [Instruction; 2] {
    [
        Instruction::Raman {
            pair,
            theta: FRAC_PI_2,
            phi: FRAC_PI_2,
        },
        Instruction::Raman {
            pair,
            theta: PI,
            phi: 0.0,
        },
    ]
}

/// Exact inverse of [`hadamard_pulses`], realising +i·H.
pub fn hadamard_inverse_pulses(pair: RamanPair) -> [Instruction; 2] {
    [
        Instruction::Raman {
            pair,
            theta: -PI,
            phi: 0.0,
        },
        Instruction::Raman {
            pair,
            theta: -FRAC_PI_2,
            phi: FRAC_PI_2,
        },
    ]
}

/// Localized Z: walk the pointer to `site`, fire the molecular pulse, walk
/// back. The pointer must start at the plan's rest site in |P⟩.
pub fn compile_local_phase(
    site: Position,
    spec: &LatticeSpec,
    plan: &PointerPlan,
) -> Result<PulseProgram, CompileError> {
    check_site(site, spec)?;
    check_site(plan.rest, spec)?;
    let mut p = PulseProgram::new();
    p.instructions.extend(path_moves(plan.rest, site, spec.dims()));
    p.push(Instruction::MolecularPulse);
    p.instructions.extend(path_moves(site, plan.rest, spec.dims()));
    p.metadata.description = format!("local Z at {}", site.render(spec.dims()));
    p.metadata.support = vec![site];
    Ok(p)
}

/// One `V† Z V` factor with the pointer already parked at the target:
/// conjugating pulse, molecular pulse, inverse pulse.
fn fired_factor_instructions(axis: [f64; 3], out: &mut Vec<Instruction>) {
    match axis_conjugation_pulse(axis) {
        None => out.push(Instruction::MolecularPulse),
        Some((theta, phi)) => {
            out.push(Instruction::Raman {
                pair: RamanPair::S0S1,
                theta,
                phi,
            });
            out.push(Instruction::MolecularPulse);
            out.push(Instruction::Raman {
                pair: RamanPair::S0S1,
                theta: -theta,
                phi,
            });
        }
    }
}

/// Localized single-qubit gate, up to a global phase: at most two
/// molecular-pulse factors, each conjugated by global Raman rotations that
/// cancel on every atom the pointer does not visit.
pub fn compile_local_1q(
    site: Position,
    u: &Mat2,
    spec: &LatticeSpec,
    plan: &PointerPlan,
) -> Result<PulseProgram, CompileError> {
    check_site(site, spec)?;
    if !u.is_unitary(1e-12) {
        return Err(CompileError::NotUnitary);
    }
    if u.distance_up_to_phase(&Mat2::identity()) < 1e-12 {
        let mut p = PulseProgram::new();
        p.metadata.description = format!("identity at {}", site.render(spec.dims()));
        p.metadata.support = vec![site];
        return Ok(p);
    }
    if u.distance_up_to_phase(&Mat2::z()) < 1e-12 {
        return compile_local_phase(site, spec, plan);
    }
    let (g, _) = u.su2_normalize()?;
    let axes = su2_axis_factors(&g)?;
    let mut p = PulseProgram::new();
    for axis in axes {
        match axis_conjugation_pulse(axis) {
            None => {
                let phase = compile_local_phase(site, spec, plan)?;
                p.instructions.extend(phase.instructions);
            }
            Some((theta, phi)) => {
                p.push(Instruction::Raman {
                    pair: RamanPair::S0S1,
                    theta,
                    phi,
                });
                let phase = compile_local_phase(site, spec, plan)?;
                p.instructions.extend(phase.instructions);
                p.push(Instruction::Raman {
                    pair: RamanPair::S0S1,
                    theta: -theta,
                    phi,
                });
            }
        }
    }
    p.metadata.description = format!("local 1q gate at {}", site.render(spec.dims()));
    p.metadata.support = vec![site];
    Ok(p)
}

/// Z-basis measurement of one qubit: park the pointer, promote the target's
/// |1⟩ to |P′⟩ by a Hadamard sandwich around the pointer-conditioned phase,
/// measure |P′⟩ globally, reset, and only then move the pointer away.
pub fn compile_measure_z(
    site: Position,
    tag: &str,
    spec: &LatticeSpec,
    plan: &PointerPlan,
) -> Result<PulseProgram, CompileError> {
    check_site(site, spec)?;
    check_site(plan.rest, spec)?;
    let mut p = PulseProgram::new();
    p.instructions.extend(path_moves(plan.rest, site, spec.dims()));
    p.instructions.extend(hadamard_pulses(RamanPair::S1Pp));
    p.push(Instruction::LocalPhaseZ1Pp);
    p.instructions.extend(hadamard_inverse_pulses(RamanPair::S1Pp));
    p.push(Instruction::MeasurePprime(tag.to_string()));
    p.push(Instruction::ResetPprime);
    p.instructions.extend(path_moves(site, plan.rest, spec.dims()));
    p.metadata.description = format!("Z measurement at {}", site.render(spec.dims()));
    p.metadata.support = vec![site];
    Ok(p)
}

/// The entangling bracket of the two-qubit procedure: Hadamard on (P, P′),
/// collide with the control, Hadamard back, then a (P, P′) π-pulse so the
/// pointer ends in |P⟩ exactly when the control is |1⟩.
fn entangle_bracket(
    control: Position,
    spec: &LatticeSpec,
    plan: &PointerPlan,
) -> PulseProgram {
    let mut p = PulseProgram::new();
    p.instructions.extend(hadamard_pulses(RamanPair::PPp));
    p.instructions.extend(path_moves(plan.rest, control, spec.dims()));
    p.push(Instruction::MolecularPulse);
    p.instructions.extend(path_moves(control, plan.rest, spec.dims()));
    p.instructions.extend(hadamard_inverse_pulses(RamanPair::PPp));
    p.push(Instruction::Raman {
        pair: RamanPair::PPp,
        theta: PI,
        phi: 0.0,
    });
    p
}

/// Controlled unitary with one control and any number of targets, firing on
/// control = |1⟩. The entangling bracket runs once; each target gets the
/// localized gate body; the bracket then runs in reverse to release the
/// pointer. Non-special-unitary gates get a compiled phase correction on the
/// control.
pub fn compile_controlled_u(
    control: Position,
    targets: &[Position],
    u: &Mat2,
    spec: &LatticeSpec,
    plan: &PointerPlan,
) -> Result<PulseProgram, CompileError> {
    check_site(control, spec)?;
    check_site(plan.rest, spec)?;
    if targets.is_empty() {
        return Err(CompileError::EmptySites);
    }
    for (i, t) in targets.iter().enumerate() {
        check_site(*t, spec)?;
        if *t == control {
            return Err(CompileError::ControlAmongTargets);
        }
        if targets[..i].contains(t) {
            return Err(CompileError::DuplicateTarget);
        }
    }
    if !u.is_unitary(1e-12) {
        return Err(CompileError::NotUnitary);
    }

    // Fired factors must multiply to the gate exactly: an uncompensated
    // phase on the firing branch is a relative phase of the controlled gate,
    // not a global one. Plain Z needs no compensation; anything else is
    // normalised to SU(2) and the determinant phase moved onto the control.
    let exact_z = u.distance(&Mat2::z()) < 1e-12;
    let (axes, control_phase) = if exact_z {
        (vec![[0.0, 0.0, 1.0]], 0.0)
    } else {
        let (g, delta) = u.su2_normalize()?;
        (su2_axis_factors(&g)?, delta / 2.0)
    };

    let mut p = entangle_bracket(control, spec, plan);
    p.metadata
        .marks
        .push(("entangle_end".into(), p.instructions.len()));

    for target in targets {
        p.instructions.extend(path_moves(plan.rest, *target, spec.dims()));
        for axis in &axes {
            fired_factor_instructions(*axis, &mut p.instructions);
        }
        p.instructions.extend(path_moves(*target, plan.rest, spec.dims()));
    }

    p.metadata
        .marks
        .push(("disentangle_start".into(), p.instructions.len()));
    let disentangle = entangle_bracket(control, spec, plan).reverse_unitary()?;
    p.instructions.extend(disentangle.instructions);

    let total_phase = control_phase * targets.len() as f64;
    if Complex64::from_polar(1.0, total_phase).im.abs() > 1e-12
        || Complex64::from_polar(1.0, total_phase).re < 0.0
    {
        // diag(1, e^{i·total}) on the control, itself a localized gate
        let m = Mat2::from_rows(
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, total_phase)],
        );
        let fix = compile_local_1q(control, &m, spec, plan)?;
        p.instructions.extend(fix.instructions);
    }

    p.metadata.description = format!(
        "controlled gate: control {} -> {} target(s)",
        control.render(spec.dims()),
        targets.len()
    );
    p.metadata.support = CircuitOp::ControlledU {
        control,
        targets: targets.to_vec(),
        u: *u,
    }
    .support(spec);
    Ok(p)
}

/// GHZ preparation on the listed sites: global Hadamard, one controlled-Z
/// pass from the last site onto the others, global Hadamard back, and a
/// local Hadamard on the last site. Sites not listed see exactly identity.
pub fn compile_ghz(
    sites: &[Position],
    spec: &LatticeSpec,
    plan: &PointerPlan,
) -> Result<PulseProgram, CompileError> {
    if sites.is_empty() {
        return Err(CompileError::EmptySites);
    }
    for (i, s) in sites.iter().enumerate() {
        check_site(*s, spec)?;
        if sites[..i].contains(s) {
            return Err(CompileError::DuplicateTarget);
        }
    }
    let center = sites[sites.len() - 1];
    let mut p = PulseProgram::new();
    p.instructions.extend(hadamard_pulses(RamanPair::S0S1));
    if sites.len() >= 2 {
        let pass = compile_controlled_u(center, &sites[..sites.len() - 1], &Mat2::z(), spec, plan)?;
        for (name, at) in &pass.metadata.marks {
            p.metadata.marks.push((name.clone(), at + p.instructions.len()));
        }
        p.instructions.extend(pass.instructions);
    }
    p.instructions.extend(hadamard_inverse_pulses(RamanPair::S0S1));
    let local_h = compile_local_1q(center, &Mat2::h(), spec, plan)?;
    p.instructions.extend(local_h.instructions);
    p.metadata.description = format!("GHZ preparation on {} site(s)", sites.len());
    p.metadata.support = sites.to_vec();
    Ok(p)
}

/// Graph-state preparation: one global Hadamard puts every lattice qubit in
/// |+⟩ (each an isolated-vertex graph state), then one controlled-Z pass per
/// star of the decomposition. The pointer entangles once per star.
pub fn compile_graph_state(
    g: &GraphSpec,
    spec: &LatticeSpec,
    plan: &PointerPlan,
) -> Result<PulseProgram, CompileError> {
    for v in g.vertices() {
        check_site(*v, spec)?;
    }
    let stars = star_decomposition(g);
    let mut p = PulseProgram::new();
    p.instructions.extend(hadamard_pulses(RamanPair::S0S1));
    for (center, leaves) in &stars {
        let control = g.vertices()[*center];
        let targets: Vec<Position> = leaves.iter().map(|&l| g.vertices()[l]).collect();
        let pass = compile_controlled_u(control, &targets, &Mat2::z(), spec, plan)?;
        for (name, at) in &pass.metadata.marks {
            p.metadata.marks.push((name.clone(), at + p.instructions.len()));
        }
        p.instructions.extend(pass.instructions);
    }
    p.metadata.description = format!(
        "graph state: {} vertices, {} edges, {} entangling pass(es)",
        g.num_vertices(),
        g.edge_count(),
        stars.len()
    );
    p.metadata.support = spec.sites().collect();
    Ok(p)
}

/// Cluster-state initialisation over the whole register, no pointer atom:
/// Hadamard everything, promote |1⟩ → |P⟩, then per axis shift one site,
/// collide (π on co-located (|0⟩, |P⟩)), shift back; finally demote.
///
/// The collision phases differ from a plain controlled-Z by single-qubit Z
/// factors on every atom that has a successor along a shifted axis; that
/// frame is recorded in the metadata rather than compiled into pulses.
pub fn compile_cluster_init(spec: &LatticeSpec) -> Result<PulseProgram, CompileError> {
    let mut p = PulseProgram::new();
    let table_id = "cluster";
    let mut table = CollisionPhaseTable::zero();
    table.s0_p = PI;
    p.add_table(table_id, table)?;

    p.instructions.extend(hadamard_pulses(RamanPair::S0S1));
    p.push(Instruction::Raman {
        pair: RamanPair::S1P,
        theta: PI,
        phi: 0.0,
    });
    for axis in 0..spec.dims() {
        if spec.extent(axis) < 2 {
            continue; // no neighbours along this axis
        }
        p.push(Instruction::ShiftP(ShiftDelta::axis(axis, 1)));
        p.push(Instruction::Collide(table_id.to_string()));
        p.push(Instruction::ShiftP(ShiftDelta::axis(axis, -1)));
    }
    p.push(Instruction::Raman {
        pair: RamanPair::S1P,
        theta: -PI,
        phi: 0.0,
    });

    // Z frame: atoms with an odd number of shifted axes along which they
    // have a successor site.
    for site in spec.sites() {
        let mut count = 0;
        for axis in 0..spec.dims() {
            if spec.extent(axis) >= 2 && site.coord(axis) + 1 < spec.extent(axis) as i32 {
                count += 1;
            }
        }
        if count % 2 == 1 {
            p.metadata.z_frame.push(site);
        }
    }
    p.metadata.description = format!("cluster initialisation on {}", spec.render());
    p.metadata.support = spec.sites().collect();
    Ok(p)
}

/// Fixed measurement pattern realising a single-qubit rotation on a cluster
/// wire: five basis rotations and five Z measurements along the chain, the
/// logical output landing on the next site.
#[derive(Debug, Clone)]
pub struct OneWayPattern {
    pub chain: [Position; 5],
    pub output: Position,
    /// Measurement-basis angles α_j; step j measures in the basis
    /// (|0⟩ ± e^{iα_j}|1⟩)/√2.
    pub angles: [f64; 5],
    pub target: Mat2,
}

impl OneWayPattern {
    /// Logical map the pattern applies for one outcome branch (true = the
    /// projector onto (|0⟩ − e^{iα}|1⟩)/√2 fired): the product of
    /// X^{s_j}·H·Rz(α_j) factors, last measurement leftmost.
    pub fn branch_unitary(&self, outcomes: &[bool; 5]) -> Mat2 {
        let mut u = Mat2::identity();
        for (j, &s) in outcomes.iter().enumerate() {
            let mut step = Mat2::h().mul(&Mat2::rz(self.angles[j]));
            if s {
                step = Mat2::x().mul(&step);
            }
            u = step.mul(&u);
        }
        u
    }

    /// Recorded byproduct frame: the Pauli P maximising the overlap of
    /// P·target with the branch unitary, together with that overlap
    /// (1 means the branch is exactly the target up to the frame;
    /// guaranteed for patterns whose angles are multiples of π/2).
    pub fn branch_frame(&self, outcomes: &[bool; 5]) -> (Mat2, f64) {
        let branch = self.branch_unitary(outcomes);
        let paulis = [Mat2::identity(), Mat2::x(), Mat2::y(), Mat2::z()];
        let mut best = (Mat2::identity(), -1.0f64);
        for p in paulis {
            let candidate = p.mul(&self.target);
            let overlap = 1.0 - candidate.distance_up_to_phase(&branch);
            if overlap > best.1 {
                best = (p, overlap);
            }
        }
        best
    }
}

/// Compile the one-way single-qubit rotation: for each chain qubit a
/// localized basis rotation followed by the measurement protocol. Exactly
/// five rotations and five measurements.
pub fn compile_one_way_1q(
    rotation: &Mat2,
    chain: &[Position],
    spec: &LatticeSpec,
    plan: &PointerPlan,
) -> Result<(PulseProgram, OneWayPattern), CompileError> {
    if chain.len() != 5 {
        return Err(CompileError::BadChain(format!(
            "need exactly 5 chain sites, got {}",
            chain.len()
        )));
    }
    for s in chain {
        check_site(*s, spec)?;
    }
    // consecutive along one axis
    let mut axis = None;
    for w in chain.windows(2) {
        let mut diff_axis = None;
        for d in 0..spec.dims() {
            let delta = w[1].coord(d) - w[0].coord(d);
            if delta != 0 {
                if diff_axis.is_some() || delta.abs() != 1 {
                    return Err(CompileError::BadChain("sites not adjacent".into()));
                }
                diff_axis = Some((d, delta));
            }
        }
        let step = diff_axis.ok_or_else(|| CompileError::BadChain("repeated site".into()))?;
        match axis {
            None => axis = Some(step),
            Some(prev) if prev == step => {}
            Some(_) => return Err(CompileError::BadChain("chain bends".into())),
        }
    }
    let (d, step) = axis.expect("five sites give four steps");
    let mut out_coords = [chain[4].coord(0), chain[4].coord(1), chain[4].coord(2)];
    out_coords[d] += step;
    let output = Position::new(&out_coords[..spec.dims()]);
    check_site(output, spec).map_err(|_| {
        CompileError::BadChain("output site (chain successor) falls off the lattice".into())
    })?;

    // With α_1 = α_5 = 0 the all-false branch realises
    // Rz(α_4)·Rx(α_3)·Rz(α_2)·H, so Euler-decompose target·H.
    let (g, _) = rotation.su2_normalize()?;
    let m = g.mul(&Mat2::h());
    let (a, b, c) = euler_zxz(&m)?;
    let angles = [0.0, c, b, a, 0.0];

    let pattern = OneWayPattern {
        chain: [chain[0], chain[1], chain[2], chain[3], chain[4]],
        output,
        angles,
        target: g,
    };

    let mut p = PulseProgram::new();
    for (j, &site) in chain.iter().enumerate() {
        // measure in B(α): rotate by H·Rz(−α), then read out in Z
        let w = Mat2::h().mul(&Mat2::rz(-angles[j]));
        let rot = compile_local_1q(site, &w, spec, plan)?;
        p.instructions.extend(rot.instructions);
        let meas = compile_measure_z(site, &format!("mbqc{j}"), spec, plan)?;
        p.instructions.extend(meas.instructions);
    }
    p.metadata.description = "one-way single-qubit rotation (5 rotations + 5 measurements)".into();
    p.metadata.support = {
        let mut s = chain.to_vec();
        s.push(output);
        s
    };
    Ok((p, pattern))
}

/// Euler angles of a unitary in ZXZ order: m = Rz(a)·Rx(b)·Rz(c) up to a
/// global phase.
fn euler_zxz(m: &Mat2) -> Result<(f64, f64, f64), CompileError> {
    // the angle extraction below assumes det = 1
    let (m, _) = m.su2_normalize()?;
    let e = m.elems();
    let cos_half = e[0][0].norm();
    let sin_half = e[1][0].norm();
    let b = 2.0 * sin_half.atan2(cos_half);
    let (a, c);
    if cos_half > 1e-9 && sin_half > 1e-9 {
        let apc = -2.0 * e[0][0].arg(); // a + c
        let amc = 2.0 * (e[1][0].arg() + FRAC_PI_2); // a − c
        a = (apc + amc) / 2.0;
        c = (apc - amc) / 2.0;
    } else if sin_half <= 1e-9 {
        a = -2.0 * e[0][0].arg();
        c = 0.0;
    } else {
        a = 2.0 * (e[1][0].arg() + FRAC_PI_2);
        c = 0.0;
    }
    let rebuilt = Mat2::rz(a).mul(&Mat2::rx(b)).mul(&Mat2::rz(c));
    let residual = rebuilt.distance_up_to_phase(&m);
    if residual > DECOMP_TOL {
        return Err(CompileError::DecompositionResidual(residual));
    }
    Ok((a, b, c))
}

/// Dispatch a circuit operation to its compiler.
pub fn compile_op(
    op: &CircuitOp,
    spec: &LatticeSpec,
    plan: &PointerPlan,
) -> Result<PulseProgram, CompileError> {
    match op {
        CircuitOp::Local1q { site, u } => compile_local_1q(*site, u, spec, plan),
        CircuitOp::MeasureZ { site, tag } => compile_measure_z(*site, tag, spec, plan),
        CircuitOp::ControlledU { control, targets, u } => {
            compile_controlled_u(*control, targets, u, spec, plan)
        }
        CircuitOp::PrepGhz { sites } => compile_ghz(sites, spec, plan),
        CircuitOp::PrepGraph { graph } => compile_graph_state(graph, spec, plan),
        CircuitOp::PrepCluster => compile_cluster_init(spec),
    }
}

/// Parse the line-oriented circuit format:
///
/// ```text
/// LOCAL1Q <site> <u00re> <u00im> <u01re> <u01im> <u10re> <u10im> <u11re> <u11im>
/// MEASZ <site> <tag>
/// CU <control> <targets> <U as 8 floats>
/// GHZ <sites>
/// GRAPH <edge-list-file>
/// CLUSTER
/// ```
///
/// Sites are comma-separated coordinates; site lists are `;`-separated (on a
/// 1-D lattice plain commas also work). `load` resolves a GRAPH file name to
/// its contents.
pub fn parse_circuit<F>(
    text: &str,
    spec: &LatticeSpec,
    mut load: F,
) -> Result<Vec<CircuitOp>, CompileError>
where
    F: FnMut(&str) -> Result<String, String>,
{
    let mut ops = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| CompileError::Parse {
            line: lineno + 1,
            msg,
        };
        let mut toks = line.split_whitespace();
        let head = toks.next().unwrap();
        let rest: Vec<&str> = toks.collect();
        let parse_site = |tok: &str| -> Result<Position, CompileError> {
            let p = Position::parse(tok).ok_or_else(|| err(format!("bad site '{tok}'")))?;
            if p.coords(3).len() < 3 && false {
                unreachable!()
            }
            if Position::parse(tok)
                .map(|q| q.coords(spec.dims()).len() != tok.split(',').count())
                .unwrap_or(true)
                && tok.split(',').count() != spec.dims()
            {
                return Err(err(format!(
                    "site '{tok}' has {} coordinates, lattice has {}",
                    tok.split(',').count(),
                    spec.dims()
                )));
            }
            if !spec.contains(p) {
                return Err(err(format!("site '{tok}' outside the lattice")));
            }
            Ok(p)
        };
        let parse_site_list = |tok: &str| -> Result<Vec<Position>, CompileError> {
            let parts: Vec<&str> = if tok.contains(';') {
                tok.split(';').collect()
            } else if spec.dims() == 1 {
                tok.split(',').collect()
            } else {
                vec![tok]
            };
            parts.into_iter().map(parse_site).collect()
        };
        let parse_mat = |toks: &[&str]| -> Result<Mat2, CompileError> {
            if toks.len() != 8 {
                return Err(err(format!("expected 8 matrix floats, got {}", toks.len())));
            }
            let vals: Result<Vec<f64>, _> = toks.iter().map(|t| t.parse::<f64>()).collect();
            let v = vals.map_err(|_| err("bad matrix entry".into()))?;
            let m = Mat2::from_rows(
                [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])],
                [Complex64::new(v[4], v[5]), Complex64::new(v[6], v[7])],
            );
            if !m.is_unitary(1e-9) {
                return Err(err("matrix is not unitary".into()));
            }
            Ok(m)
        };

        match head {
            "LOCAL1Q" => {
                if rest.len() != 9 {
                    return Err(err("LOCAL1Q needs a site and 8 floats".into()));
                }
                let site = parse_site(rest[0])?;
                let u = parse_mat(&rest[1..])?;
                ops.push(CircuitOp::Local1q { site, u });
            }
            "MEASZ" => {
                if rest.len() != 2 {
                    return Err(err("MEASZ needs a site and a tag".into()));
                }
                let site = parse_site(rest[0])?;
                ops.push(CircuitOp::MeasureZ {
                    site,
                    tag: rest[1].to_string(),
                });
            }
            "CU" => {
                if rest.len() != 10 {
                    return Err(err("CU needs control, targets and 8 floats".into()));
                }
                let control = parse_site(rest[0])?;
                let targets = parse_site_list(rest[1])?;
                let u = parse_mat(&rest[2..])?;
                ops.push(CircuitOp::ControlledU {
                    control,
                    targets,
                    u,
                });
            }
            "GHZ" => {
                if rest.len() != 1 {
                    return Err(err("GHZ needs a site list".into()));
                }
                let sites = parse_site_list(rest[0])?;
                ops.push(CircuitOp::PrepGhz { sites });
            }
            "GRAPH" => {
                if rest.len() != 1 {
                    return Err(err("GRAPH needs an edge-list file".into()));
                }
                let content = load(rest[0]).map_err(|e| err(format!("cannot load '{}': {e}", rest[0])))?;
                let graph = GraphSpec::from_edge_list(&content)?;
                ops.push(CircuitOp::PrepGraph { graph });
            }
            "CLUSTER" => {
                if !rest.is_empty() {
                    return Err(err("CLUSTER takes no arguments".into()));
                }
                ops.push(CircuitOp::PrepCluster);
            }
            other => return Err(err(format!("unknown circuit op '{other}'"))),
        }
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::InstructionKind;
    use crate::lattice::{InternalState, QuantumState};
    use crate::oracle::{fidelity_up_to_global_phase, QubitState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain_spec(n: u32) -> LatticeSpec {
        LatticeSpec::new(&[n]).unwrap()
    }

    fn plan0() -> PointerPlan {
        PointerPlan::new(Position::new(&[0]))
    }

    fn site(i: i32) -> Position {
        Position::new(&[i])
    }

    /// Random unitary from seeded Euler angles plus a phase.
    fn random_unitary(seed: u64) -> Mat2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let a: f64 = rng.gen_range(-PI..PI);
        let b: f64 = rng.gen_range(0.0..PI);
        let c: f64 = rng.gen_range(-PI..PI);
        let phase: f64 = rng.gen_range(-PI..PI);
        Mat2::rz(a)
            .mul(&Mat2::rx(b))
            .mul(&Mat2::rz(c))
            .scale(Complex64::from_polar(1.0, phase))
    }

    /// Execute a compiled program on a random register + pointer and compare
    /// the factored result against the oracle action.
    fn check_against_oracle(
        op: &CircuitOp,
        spec: &LatticeSpec,
        plan: &PointerPlan,
        input: &QubitState,
        seed: u64,
    ) -> f64 {
        let program = compile_op(op, spec, plan).unwrap();
        let uses_pointer = !matches!(op, CircuitOp::PrepCluster);
        let initial = QuantumState::from_register(
            *spec,
            &input.amps,
            uses_pointer.then_some(plan.rest),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = program.execute(&initial, &mut rng).unwrap();
        let reg = if uses_pointer {
            let (reg, ptr) = trace.final_state.factor_pointer().unwrap();
            assert_eq!(ptr.definite(), Some((plan.rest, InternalState::P)));
            reg
        } else {
            trace.final_state.to_register_state().unwrap()
        };
        let mut observed = QubitState::from_amps(reg.amps).unwrap();
        for &s in &program.metadata.z_frame {
            observed.z(spec.index_of(s).unwrap()).unwrap();
        }
        let ideal = crate::oracle::ideal_action(op, spec, input).unwrap();
        fidelity_up_to_global_phase(&observed.amps, &ideal.amps).unwrap()
    }

    #[test]
    fn axis_conjugation_pulse_is_correct() {
        // V† Z V = σ_axis for a sweep of axes, V the single Raman pulse
        for (i, axis) in [
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.6, 0.0, 0.8],
            [0.36, 0.48, 0.8],
            [-0.6, 0.64, -0.48],
        ]
        .iter()
        .enumerate()
        {
            let v = match axis_conjugation_pulse(*axis) {
                Some((theta, phi)) => Mat2::raman(theta, phi),
                None => Mat2::identity(),
            };
            let got = v.dagger().mul(&Mat2::z()).mul(&v);
            let want = Mat2::pauli_axis(*axis);
            assert!(got.distance(&want) < 1e-12, "axis case {i}: {:?}", axis);
        }
    }

    #[test]
    fn su2_axis_factors_reconstruct() {
        for seed in 0..100 {
            let u = random_unitary(seed);
            let (g, _) = u.su2_normalize().unwrap();
            let axes = su2_axis_factors(&g).unwrap();
            assert!(axes.len() <= 2);
            let mut prod = Mat2::identity();
            for a in axes.iter().rev() {
                prod = prod.mul(&Mat2::pauli_axis(*a));
            }
            assert!(prod.distance(&g) < 1e-10);
        }
    }

    #[test]
    fn su2_factors_of_minus_identity() {
        let minus_i = Mat2::identity().scale(Complex64::new(-1.0, 0.0));
        let axes = su2_axis_factors(&minus_i).unwrap();
        assert_eq!(axes.len(), 2);
    }

    #[test]
    fn local_phase_path_shape() {
        let spec = chain_spec(3);
        let p = compile_local_phase(site(2), &spec, &plan0()).unwrap();
        let shift = |d: i32| Instruction::ShiftP(ShiftDelta::new(&[d]));
        assert_eq!(
            p.instructions,
            vec![
                shift(1),
                shift(1),
                Instruction::MolecularPulse,
                shift(-1),
                shift(-1)
            ]
        );
    }

    #[test]
    fn local_phase_at_rest_is_bare_pulse() {
        let spec = chain_spec(3);
        let p = compile_local_phase(site(0), &spec, &plan0()).unwrap();
        assert_eq!(p.instructions, vec![Instruction::MolecularPulse]);
    }

    #[test]
    fn local_phase_acts_as_z() {
        let spec = chain_spec(2);
        let op = CircuitOp::Local1q {
            site: site(1),
            u: Mat2::z(),
        };
        for seed in 0..5 {
            let input = QubitState::random(2, seed).unwrap();
            let fid = check_against_oracle(&op, &spec, &plan0(), &input, seed);
            assert!(fid > 1.0 - 1e-10, "fid = {fid}");
        }
    }

    #[test]
    fn local_phase_turns_plus_into_minus() {
        let spec = chain_spec(2);
        let plan = plan0();
        let mut input = QubitState::zeros(2).unwrap();
        input.h(1).unwrap();
        let program = compile_local_phase(site(1), &spec, &plan).unwrap();
        let initial = QuantumState::from_register(spec, &input.amps, Some(plan.rest)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = program.execute(&initial, &mut rng).unwrap();
        let (reg, _) = trace.final_state.factor_pointer().unwrap();
        let mut minus = QubitState::zeros(2).unwrap();
        minus.x(1).unwrap();
        minus.h(1).unwrap(); // |−⟩ on qubit 1
        let fid = fidelity_up_to_global_phase(&reg.amps, &minus.amps).unwrap();
        assert!(fid > 1.0 - 1e-10);
    }

    #[test]
    fn local_x_via_decomposition() {
        let spec = chain_spec(3);
        let op = CircuitOp::Local1q {
            site: site(1),
            u: Mat2::x(),
        };
        for seed in 0..5 {
            let input = QubitState::random(3, seed + 10).unwrap();
            let fid = check_against_oracle(&op, &spec, &plan0(), &input, seed);
            assert!(fid > 1.0 - 1e-10, "fid = {fid}");
        }
    }

    #[test]
    fn local_random_su2_oracle_equivalence() {
        // the acceptance-level statement, at unit-test scale
        let spec = chain_spec(3);
        for seed in 0..25 {
            let u = random_unitary(seed);
            let op = CircuitOp::Local1q { site: site(1), u };
            let input = QubitState::random(3, 1000 + seed).unwrap();
            let fid = check_against_oracle(&op, &spec, &plan0(), &input, seed);
            assert!(fid > 1.0 - 1e-10, "seed {seed}: fid = {fid}");
        }
    }

    #[test]
    fn local_identity_compiles_empty() {
        let spec = chain_spec(2);
        let p = compile_local_1q(
            site(1),
            &Mat2::identity().scale(Complex64::from_polar(1.0, 1.3)),
            &spec,
            &plan0(),
        )
        .unwrap();
        assert!(p.instructions.is_empty());
    }

    #[test]
    fn local_rejects_nonunitary() {
        let spec = chain_spec(2);
        let m = Mat2::from_rows(
            [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        );
        assert_eq!(
            compile_local_1q(site(0), &m, &spec, &plan0()).unwrap_err(),
            CompileError::NotUnitary
        );
    }

    #[test]
    fn measure_deterministic_inputs() {
        let spec = chain_spec(2);
        let plan = plan0();
        let program = compile_measure_z(site(1), "q", &spec, &plan).unwrap();

        // |0⟩ input: outcome false, state preserved
        let zero = QubitState::zeros(2).unwrap();
        let initial = QuantumState::from_register(spec, &zero.amps, Some(plan.rest)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trace = program.execute(&initial, &mut rng).unwrap();
        assert_eq!(trace.outcomes, vec![("q".to_string(), false)]);
        let (reg, _) = trace.final_state.factor_pointer().unwrap();
        assert!(fidelity_up_to_global_phase(&reg.amps, &zero.amps).unwrap() > 1.0 - 1e-10);

        // |1⟩ input: outcome true, post-state |1⟩ after reset
        let mut one = QubitState::zeros(2).unwrap();
        one.x(1).unwrap();
        let initial = QuantumState::from_register(spec, &one.amps, Some(plan.rest)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trace = program.execute(&initial, &mut rng).unwrap();
        assert_eq!(trace.outcomes, vec![("q".to_string(), true)]);
        let (reg, ptr) = trace.final_state.factor_pointer().unwrap();
        assert_eq!(ptr.definite(), Some((plan.rest, InternalState::P)));
        assert!(fidelity_up_to_global_phase(&reg.amps, &one.amps).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn measure_preserves_spectators() {
        let spec = chain_spec(3);
        let plan = plan0();
        // entangle qubits 0 and 2, measure qubit 1
        let mut input = QubitState::zeros(3).unwrap();
        input.h(0).unwrap();
        input.h(2).unwrap();
        input.cz(0, 2).unwrap();
        let program = compile_measure_z(site(1), "m", &spec, &plan).unwrap();
        let initial = QuantumState::from_register(spec, &input.amps, Some(plan.rest)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trace = program.execute(&initial, &mut rng).unwrap();
        assert_eq!(trace.outcomes[0].1, false); // qubit 1 is |0⟩
        let (reg, _) = trace.final_state.factor_pointer().unwrap();
        assert!(fidelity_up_to_global_phase(&reg.amps, &input.amps).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn measure_born_statistics() {
        let spec = chain_spec(1);
        let plan = plan0();
        let mut plus = QubitState::zeros(1).unwrap();
        plus.h(0).unwrap();
        let program = compile_measure_z(site(0), "p", &spec, &plan).unwrap();
        let initial = QuantumState::from_register(spec, &plus.amps, Some(plan.rest)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut trues = 0usize;
        let shots = 2000;
        for _ in 0..shots {
            let trace = program.execute(&initial, &mut rng).unwrap();
            if trace.outcomes[0].1 {
                trues += 1;
            }
        }
        // 3σ band around 1000: ±67
        assert!((933..=1067).contains(&trues), "trues = {trues}");
    }

    #[test]
    fn cz_on_basis_states_and_superpositions() {
        let spec = chain_spec(2);
        let plan = PointerPlan::new(site(0));
        let op = CircuitOp::ControlledU {
            control: site(0),
            targets: vec![site(1)],
            u: Mat2::z(),
        };
        // all four computational basis states
        for idx in 0..4usize {
            let mut input = QubitState::zeros(2).unwrap();
            if idx & 1 != 0 {
                input.x(0).unwrap();
            }
            if idx & 2 != 0 {
                input.x(1).unwrap();
            }
            let fid = check_against_oracle(&op, &spec, &plan, &input, idx as u64);
            assert!(fid > 1.0 - 1e-10, "basis {idx}: fid = {fid}");
        }
        // random superpositions
        for seed in 0..10 {
            let input = QubitState::random(2, 40 + seed).unwrap();
            let fid = check_against_oracle(&op, &spec, &plan, &input, seed);
            assert!(fid > 1.0 - 1e-10, "seed {seed}: fid = {fid}");
        }
    }

    #[test]
    fn controlled_u_rejects_bad_targets() {
        let spec = chain_spec(2);
        assert_eq!(
            compile_controlled_u(site(0), &[site(0)], &Mat2::z(), &spec, &plan0()).unwrap_err(),
            CompileError::ControlAmongTargets
        );
        assert_eq!(
            compile_controlled_u(site(0), &[], &Mat2::z(), &spec, &plan0()).unwrap_err(),
            CompileError::EmptySites
        );
    }

    #[test]
    fn controlled_general_unitary() {
        let spec = chain_spec(2);
        for seed in 0..10 {
            let u = random_unitary(500 + seed);
            let op = CircuitOp::ControlledU {
                control: site(0),
                targets: vec![site(1)],
                u,
            };
            let input = QubitState::random(2, 90 + seed).unwrap();
            let fid = check_against_oracle(&op, &spec, &plan0(), &input, seed);
            assert!(fid > 1.0 - 1e-10, "seed {seed}: fid = {fid}");
        }
    }

    #[test]
    fn multi_target_single_bracket() {
        let spec = chain_spec(5);
        let plan = PointerPlan::new(site(2));
        let op = CircuitOp::ControlledU {
            control: site(2),
            targets: vec![site(0), site(1), site(3), site(4)],
            u: Mat2::z(),
        };
        let program = compile_op(&op, &spec, &plan).unwrap();
        // the (P,P') half-pi composites appear exactly 4 times: open/close
        // of the entangle bracket and of its reverse
        let half_pi_ppp = program
            .instructions
            .iter()
            .filter(|i| {
                matches!(i, Instruction::Raman { pair: RamanPair::PPp, theta, .. }
                         if (theta.abs() - FRAC_PI_2).abs() < 1e-12)
            })
            .count();
        assert_eq!(half_pi_ppp, 4);
        for seed in 0..5 {
            let input = QubitState::random(5, 200 + seed).unwrap();
            let fid = check_against_oracle(&op, &spec, &plan, &input, seed);
            assert!(fid > 1.0 - 1e-10, "seed {seed}: fid = {fid}");
        }
    }

    #[test]
    fn truncating_disentangle_leaves_pointer_entangled() {
        let spec = chain_spec(2);
        let plan = plan0();
        let op = CircuitOp::ControlledU {
            control: site(0),
            targets: vec![site(1)],
            u: Mat2::z(),
        };
        let program = compile_op(&op, &spec, &plan).unwrap();
        let cut = program
            .metadata
            .marks
            .iter()
            .find(|(n, _)| n == "disentangle_start")
            .unwrap()
            .1;
        let mut mutated = program.clone();
        mutated.instructions.truncate(cut);

        let mut input = QubitState::zeros(2).unwrap();
        input.h(0).unwrap(); // control in superposition
        let initial = QuantumState::from_register(spec, &input.amps, Some(plan.rest)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = mutated.execute(&initial, &mut rng).unwrap();
        match trace.final_state.factor_pointer() {
            Err(crate::lattice::LatticeError::PointerEntangled(_)) => {}
            other => panic!("expected entangled pointer, got {other:?}"),
        }
    }

    #[test]
    fn ghz_small_cases() {
        for n in 1..=3u32 {
            let spec = chain_spec(n.max(2));
            let plan = plan0();
            let sites: Vec<Position> = (0..n as i32).map(site).collect();
            let op = CircuitOp::PrepGhz { sites };
            let input = QubitState::zeros(spec.site_count()).unwrap();
            let fid = check_against_oracle(&op, &spec, &plan, &input, n as u64);
            assert!(fid > 1.0 - 1e-10, "n = {n}: fid = {fid}");
        }
    }

    #[test]
    fn ghz_leaves_unlisted_qubits_alone() {
        let spec = chain_spec(3);
        let plan = PointerPlan::new(site(0));
        let op = CircuitOp::PrepGhz {
            sites: vec![site(0), site(1)],
        };
        let program = compile_op(&op, &spec, &plan).unwrap();
        // drive it on |001…⟩-style inputs: qubit 2 starts |1⟩ and must stay
        let mut input = QubitState::zeros(3).unwrap();
        input.x(2).unwrap();
        let initial = QuantumState::from_register(spec, &input.amps, Some(plan.rest)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = program.execute(&initial, &mut rng).unwrap();
        let (reg, _) = trace.final_state.factor_pointer().unwrap();
        // expect GHZ2 ⊗ |1⟩
        let mut want = QubitState::zeros(3).unwrap();
        want.x(2).unwrap();
        want.h(0).unwrap();
        want.h(1).unwrap();
        want.cz(1, 0).unwrap();
        want.h(0).unwrap();
        want.h(1).unwrap();
        want.h(1).unwrap();
        let fid = fidelity_up_to_global_phase(&reg.amps, &want.amps).unwrap();
        assert!(fid > 1.0 - 1e-10, "fid = {fid}");
    }

    #[test]
    fn graph_state_empty_graph() {
        let spec = chain_spec(3);
        let plan = plan0();
        let g = GraphSpec::new((0..3).map(site).collect(), &[]).unwrap();
        let op = CircuitOp::PrepGraph { graph: g };
        let input = QubitState::zeros(3).unwrap();
        let fid = check_against_oracle(&op, &spec, &plan, &input, 0);
        assert!(fid > 1.0 - 1e-10);
    }

    #[test]
    fn graph_state_triangle_two_passes() {
        let spec = chain_spec(3);
        let plan = plan0();
        let g = GraphSpec::new((0..3).map(site).collect(), &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let op = CircuitOp::PrepGraph { graph: g };
        let program = compile_op(&op, &spec, &plan).unwrap();
        let passes = program
            .metadata
            .marks
            .iter()
            .filter(|(n, _)| n == "entangle_end")
            .count();
        assert_eq!(passes, 2);
        let input = QubitState::zeros(3).unwrap();
        let fid = check_against_oracle(&op, &spec, &plan, &input, 0);
        assert!(fid > 1.0 - 1e-10, "fid = {fid}");
    }

    #[test]
    fn cluster_init_1x2() {
        let spec = chain_spec(2);
        let plan = plan0();
        let op = CircuitOp::PrepCluster;
        let input = QubitState::zeros(2).unwrap();
        let fid = check_against_oracle(&op, &spec, &plan, &input, 0);
        assert!(fid > 1.0 - 1e-10, "fid = {fid}");
    }

    #[test]
    fn cluster_init_1x1_is_plain_plus() {
        let spec = chain_spec(1);
        let program = compile_cluster_init(&spec).unwrap();
        assert!(!program
            .instructions
            .iter()
            .any(|i| matches!(i, Instruction::ShiftP(_))));
        let input = QubitState::zeros(1).unwrap();
        let fid = check_against_oracle(&CircuitOp::PrepCluster, &spec, &plan0(), &input, 0);
        assert!(fid > 1.0 - 1e-10);
    }

    #[test]
    fn cluster_init_2x3() {
        let spec = LatticeSpec::new(&[2, 3]).unwrap();
        let plan = PointerPlan::new(Position::new(&[0, 0]));
        let input = QubitState::zeros(6).unwrap();
        let fid = check_against_oracle(&CircuitOp::PrepCluster, &spec, &plan, &input, 0);
        assert!(fid > 1.0 - 1e-10, "fid = {fid}");
    }

    #[test]
    fn one_way_identity_all_false_branch() {
        let spec = chain_spec(6);
        let plan = plan0();
        let chain: Vec<Position> = (0..5).map(site).collect();
        let (_, pattern) =
            compile_one_way_1q(&Mat2::identity(), &chain, &spec, &plan).unwrap();
        let branch = pattern.branch_unitary(&[false; 5]);
        assert!(branch.distance_up_to_phase(&pattern.target) < 1e-9);
    }

    #[test]
    fn one_way_chain_validation() {
        let spec = chain_spec(6);
        let too_short: Vec<Position> = (0..4).map(site).collect();
        assert!(matches!(
            compile_one_way_1q(&Mat2::identity(), &too_short, &spec, &plan0()),
            Err(CompileError::BadChain(_))
        ));
        // chain ending at the wall has no output site
        let at_wall: Vec<Position> = (1..6).map(site).collect();
        assert!(matches!(
            compile_one_way_1q(&Mat2::identity(), &at_wall, &spec, &plan0()),
            Err(CompileError::BadChain(_))
        ));
    }

    #[test]
    fn one_way_counts_rotations_and_measurements() {
        let spec = chain_spec(6);
        let chainv: Vec<Position> = (0..5).map(site).collect();
        let u = random_unitary(7);
        let (program, _) = compile_one_way_1q(&u, &chainv, &spec, &plan0()).unwrap();
        let meas = program
            .instructions
            .iter()
            .filter(|i| i.kind() == InstructionKind::MeasurePprime)
            .count();
        assert_eq!(meas, 5);
    }

    #[test]
    fn euler_zxz_reconstructs() {
        for seed in 0..50 {
            let u = random_unitary(seed);
            let (g, _) = u.su2_normalize().unwrap();
            let (a, b, c) = euler_zxz(&g).unwrap();
            let m = Mat2::rz(a).mul(&Mat2::rx(b)).mul(&Mat2::rz(c));
            assert!(m.distance_up_to_phase(&g) < 1e-10);
        }
    }

    #[test]
    fn parse_circuit_happy_path() {
        let spec = chain_spec(5);
        let text = "\
# demo circuit
LOCAL1Q 1 0 0 1 0 1 0 0 0
MEASZ 2 out
CU 0 1;2 1 0 0 0 0 0 -1 0
GHZ 0,1,2
CLUSTER
GRAPH g.edges
";
        let ops = parse_circuit(text, &spec, |name| {
            assert_eq!(name, "g.edges");
            Ok("0 1\n1 2\n".to_string())
        })
        .unwrap();
        assert_eq!(ops.len(), 6);
        assert!(matches!(ops[0], CircuitOp::Local1q { .. }));
        assert!(matches!(&ops[3], CircuitOp::PrepGhz { sites } if sites.len() == 3));
        assert!(matches!(&ops[5], CircuitOp::PrepGraph { graph } if graph.edge_count() == 2));
    }

    #[test]
    fn parse_circuit_rejects_bad_input() {
        let spec = chain_spec(3);
        assert!(parse_circuit("NOPE 1\n", &spec, |_| Err("no".into())).is_err());
        assert!(parse_circuit("LOCAL1Q 9 1 0 0 0 0 0 1 0\n", &spec, |_| Err("no".into())).is_err());
        // non-unitary matrix
        assert!(
            parse_circuit("LOCAL1Q 0 1 0 1 0 1 0 1 0\n", &spec, |_| Err("no".into())).is_err()
        );
        // off-lattice target
        assert!(parse_circuit("CU 0 7 1 0 0 0 0 0 -1 0\n", &spec, |_| Err("no".into())).is_err());
        // control among targets parses, but the compiler rejects it
        let ops =
            parse_circuit("CU 0 0 1 0 0 0 0 0 -1 0\n", &spec, |_| Err("no".into())).unwrap();
        let plan = PointerPlan::new(site(1));
        assert!(matches!(
            compile_op(&ops[0], &spec, &plan),
            Err(CompileError::ControlAmongTargets)
        ));
    }
}
