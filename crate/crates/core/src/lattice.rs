//! Joint quantum state of the trapped atoms and the global physical primitives.
//!
//! The state is a sparse map from classical atom configurations to complex
//! amplitudes. A configuration lists, per atom, its lattice site and internal
//! level. Pulse programs populate few branches, so the map stays small even
//! though the full configuration space is exponentially large.
//!
//! All operations are pure: they take a state by reference and return a new
//! one. Measurement randomness comes only from a caller-supplied generator.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/// Index of an atom in the fixed register ordering.
pub type AtomId = usize;

/// Norm drift allowed before an operation result is considered corrupt.
pub const NORM_TOL: f64 = 1e-10;

/// Errors produced by lattice-level operations.
#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("position {0} outside the lattice")]
    OutOfBounds(String),
    #[error("shift would move a mobile atom past the transport margin")]
    ShiftOutOfBounds,
    #[error("raman pair ({0:?}, {1:?}) is not a driven transition")]
    DisallowedPair(InternalState, InternalState),
    #[error("site holds {0} atoms (at most 2, one of them mobile, allowed)")]
    OccupancyViolation(usize),
    #[error("stationary atom parked outside the register lattice")]
    StationaryOutsideLattice,
    #[error("|P'⟩ occupancy differs across branches; reset would not be a classical operation")]
    ResetOnSuperposition,
    #[error("states live on different lattices or atom rosters")]
    RosterMismatch,
    #[error("register atom still holds |P⟩/|P'⟩ population")]
    ResidualMobileRegister,
    #[error("pointer is entangled with the register (largest Schmidt weight {0:.12})")]
    PointerEntangled(f64),
    #[error("state has no pointer atom")]
    NoPointer,
    #[error("register atom away from its home site")]
    AtomDisplaced,
    #[error("malformed state snapshot: {0}")]
    BadSnapshot(String),
    #[error("lattice spec invalid: {0}")]
    BadSpec(String),
}

/// Internal level of one atom.
///
/// `S0`/`S1` are the qubit states pinned by the main lattice; `P`/`Pp`
/// (|P⟩ and |P′⟩) ride the state-selective transport lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InternalState {
    S0,
    S1,
    P,
    Pp,
}

impl InternalState {
    /// True for states carried by the transport lattice.
    pub fn is_mobile(self) -> bool {
        matches!(self, InternalState::P | InternalState::Pp)
    }

    /// Snapshot token: `0`, `1`, `P`, `P'`.
    pub fn token(self) -> &'static str {
        match self {
            InternalState::S0 => "0",
            InternalState::S1 => "1",
            InternalState::P => "P",
            InternalState::Pp => "P'",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "0" => Some(InternalState::S0),
            "1" => Some(InternalState::S1),
            "P" => Some(InternalState::P),
            "P'" => Some(InternalState::Pp),
            _ => None,
        }
    }
}

/// Driven Raman transitions. Pairs are ordered by the fixed level ordering
/// S0 < S1 < P < P′; the first member maps to basis index 0 of the 2×2 pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RamanPair {
    S0S1,
    S1P,
    S1Pp,
    PPp,
}

impl RamanPair {
    pub fn levels(self) -> (InternalState, InternalState) {
        match self {
            RamanPair::S0S1 => (InternalState::S0, InternalState::S1),
            RamanPair::S1P => (InternalState::S1, InternalState::P),
            RamanPair::S1Pp => (InternalState::S1, InternalState::Pp),
            RamanPair::PPp => (InternalState::P, InternalState::Pp),
        }
    }

    /// Build from an unordered pair of levels; anything undriven is an error.
    pub fn try_new(a: InternalState, b: InternalState) -> Result<Self, LatticeError> {
        use InternalState::*;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match (lo, hi) {
            (S0, S1) => Ok(RamanPair::S0S1),
            (S1, P) => Ok(RamanPair::S1P),
            (S1, Pp) => Ok(RamanPair::S1Pp),
            (P, Pp) => Ok(RamanPair::PPp),
            _ => Err(LatticeError::DisallowedPair(a, b)),
        }
    }

    /// Instruction-text token.
    pub fn token(self) -> &'static str {
        match self {
            RamanPair::S0S1 => "01",
            RamanPair::S1P => "1P",
            RamanPair::S1Pp => "1P'",
            RamanPair::PPp => "PP'",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "01" => Some(RamanPair::S0S1),
            "1P" => Some(RamanPair::S1P),
            "1P'" => Some(RamanPair::S1Pp),
            "PP'" => Some(RamanPair::PPp),
            _ => None,
        }
    }
}

/// Lattice site coordinates. Unused trailing dimensions stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Position {
    c: [i32; 3],
}

impl Position {
    pub fn new(coords: &[i32]) -> Self {
        let mut c = [0i32; 3];
        for (i, &v) in coords.iter().take(3).enumerate() {
            c[i] = v;
        }
        Position { c }
    }

    pub fn coord(&self, axis: usize) -> i32 {
        self.c[axis]
    }

    pub fn coords(&self, dims: usize) -> &[i32] {
        &self.c[..dims]
    }

    pub fn offset(&self, delta: &ShiftDelta) -> Position {
        let mut c = self.c;
        for (i, d) in delta.0.iter().enumerate() {
            c[i] += d;
        }
        Position { c }
    }

    /// Render as comma-separated coordinates for the first `dims` axes.
    pub fn render(&self, dims: usize) -> String {
        self.c[..dims]
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parse comma-separated coordinates; the count fixes the dimension.
    pub fn parse(text: &str) -> Option<Position> {
        let coords: Option<Vec<i32>> = text.split(',').map(|t| t.trim().parse().ok()).collect();
        let coords = coords?;
        if coords.is_empty() || coords.len() > 3 {
            return None;
        }
        Some(Position::new(&coords))
    }
}

/// Per-axis shift applied to all mobile atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ShiftDelta(pub [i32; 3]);

impl ShiftDelta {
    pub fn new(d: &[i32]) -> Self {
        let mut a = [0i32; 3];
        for (i, &v) in d.iter().take(3).enumerate() {
            a[i] = v;
        }
        ShiftDelta(a)
    }

    pub fn axis(axis: usize, step: i32) -> Self {
        let mut a = [0i32; 3];
        a[axis] = step;
        ShiftDelta(a)
    }

    pub fn negate(&self) -> Self {
        ShiftDelta([-self.0[0], -self.0[1], -self.0[2]])
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0, 0, 0]
    }

    pub fn render(&self, dims: usize) -> String {
        self.0[..dims]
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Geometry of the register: 1–3 dimensions of hard-walled sites.
///
/// Stationary atoms must sit on register sites. Mobile atoms may additionally
/// occupy a one-site transport margin past each wall — the transport lattice
/// extends just beyond the register, which the cluster-initialisation shift
/// relies on at the boundary — but never further.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSpec {
    dims: usize,
    extents: [u32; 3],
}

impl LatticeSpec {
    pub fn new(extents: &[u32]) -> Result<Self, LatticeError> {
        if extents.is_empty() || extents.len() > 3 {
            return Err(LatticeError::BadSpec(format!(
                "need 1-3 dimensions, got {}",
                extents.len()
            )));
        }
        if extents.iter().any(|&e| e == 0) {
            return Err(LatticeError::BadSpec("zero extent".into()));
        }
        let mut a = [1u32; 3];
        for (i, &e) in extents.iter().enumerate() {
            a[i] = e;
        }
        Ok(LatticeSpec {
            dims: extents.len(),
            extents: a,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn extent(&self, axis: usize) -> u32 {
        self.extents[axis]
    }

    pub fn site_count(&self) -> usize {
        self.extents[..self.dims].iter().product::<u32>() as usize
    }

    /// True when `p` is a register site.
    pub fn contains(&self, p: Position) -> bool {
        (0..self.dims).all(|d| p.c[d] >= 0 && (p.c[d] as u32) < self.extents[d])
            && (self.dims..3).all(|d| p.c[d] == 0)
    }

    /// True when `p` is reachable by a mobile atom (register plus margin).
    pub fn contains_mobile(&self, p: Position) -> bool {
        (0..self.dims).all(|d| p.c[d] >= -1 && p.c[d] <= self.extents[d] as i32)
            && (self.dims..3).all(|d| p.c[d] == 0)
    }

    /// Site of register atom `i`, row-major with the last axis fastest.
    pub fn site_at(&self, mut i: usize) -> Position {
        let mut c = [0i32; 3];
        for d in (0..self.dims).rev() {
            let e = self.extents[d] as usize;
            c[d] = (i % e) as i32;
            i /= e;
        }
        Position { c }
    }

    /// Register-atom index of a site (inverse of [`site_at`](Self::site_at)).
    pub fn index_of(&self, p: Position) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let mut i = 0usize;
        for d in 0..self.dims {
            i = i * self.extents[d] as usize + p.c[d] as usize;
        }
        Some(i)
    }

    pub fn sites(&self) -> impl Iterator<Item = Position> + '_ {
        (0..self.site_count()).map(|i| self.site_at(i))
    }

    pub fn render(&self) -> String {
        self.extents[..self.dims]
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }
}

/// One classical configuration: site and internal level per atom, indexed by
/// the fixed [`AtomId`] ordering.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisConfig {
    atoms: Vec<(Position, InternalState)>,
}

impl BasisConfig {
    pub fn new(atoms: Vec<(Position, InternalState)>) -> Self {
        BasisConfig { atoms }
    }

    pub fn atoms(&self) -> &[(Position, InternalState)] {
        &self.atoms
    }

    pub fn atom(&self, id: AtomId) -> (Position, InternalState) {
        self.atoms[id]
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Occupancy and placement rules: stationary atoms on register sites,
    /// mobile atoms within the transport margin, at most two atoms per site
    /// and any co-located pair must include a mobile atom.
    fn validate(&self, spec: &LatticeSpec) -> Result<(), LatticeError> {
        let mut by_site: BTreeMap<Position, Vec<InternalState>> = BTreeMap::new();
        for &(pos, st) in &self.atoms {
            if st.is_mobile() {
                if !spec.contains_mobile(pos) {
                    return Err(LatticeError::ShiftOutOfBounds);
                }
            } else if !spec.contains(pos) {
                return Err(LatticeError::StationaryOutsideLattice);
            }
            by_site.entry(pos).or_default().push(st);
        }
        for states in by_site.values() {
            if states.len() > 2 {
                return Err(LatticeError::OccupancyViolation(states.len()));
            }
            if states.len() == 2 && !states.iter().any(|s| s.is_mobile()) {
                return Err(LatticeError::OccupancyViolation(2));
            }
        }
        Ok(())
    }

    /// Unordered co-located pairs, for diagonal interactions.
    fn colocated_pairs(&self) -> Vec<(InternalState, InternalState)> {
        let mut by_site: BTreeMap<Position, Vec<InternalState>> = BTreeMap::new();
        for &(pos, st) in &self.atoms {
            by_site.entry(pos).or_default().push(st);
        }
        let mut pairs = Vec::new();
        for states in by_site.values() {
            for i in 0..states.len() {
                for j in (i + 1)..states.len() {
                    pairs.push((states[i], states[j]));
                }
            }
        }
        pairs
    }

    /// Number of sites holding a co-located (|1⟩, |P⟩) pair.
    fn s1_p_sites(&self) -> usize {
        self.colocated_pairs()
            .into_iter()
            .filter(|&(a, b)| {
                matches!(
                    (a, b),
                    (InternalState::S1, InternalState::P) | (InternalState::P, InternalState::S1)
                )
            })
            .count()
    }
}

/// Collisional phases (radians) accumulated by each kind of co-located pair
/// during one [`QuantumState::collision_wait`].
///
/// The default table realises the conditional-π phase gate: a (|1⟩, |P⟩)
/// pair picks up π and everything else nothing, the irrelevant common phase
/// having been set to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionPhaseTable {
    pub s0_p: f64,
    pub s1_p: f64,
    pub s0_pp: f64,
    pub s1_pp: f64,
    pub p_p: f64,
    pub p_pp: f64,
    pub pp_pp: f64,
}

impl Default for CollisionPhaseTable {
    fn default() -> Self {
        CollisionPhaseTable {
            s0_p: 0.0,
            s1_p: std::f64::consts::PI,
            s0_pp: 0.0,
            s1_pp: 0.0,
            p_p: 0.0,
            p_pp: 0.0,
            pp_pp: 0.0,
        }
    }
}

impl CollisionPhaseTable {
    pub fn zero() -> Self {
        CollisionPhaseTable {
            s0_p: 0.0,
            s1_p: 0.0,
            s0_pp: 0.0,
            s1_pp: 0.0,
            p_p: 0.0,
            p_pp: 0.0,
            pp_pp: 0.0,
        }
    }

    /// Phase for an unordered co-located pair. Two stationary atoms never
    /// share a site, so such pairs contribute nothing.
    pub fn pair_phase(&self, a: InternalState, b: InternalState) -> f64 {
        use InternalState::*;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match (lo, hi) {
            (S0, P) => self.s0_p,
            (S1, P) => self.s1_p,
            (S0, Pp) => self.s0_pp,
            (S1, Pp) => self.s1_pp,
            (P, P) => self.p_p,
            (P, Pp) => self.p_pp,
            (Pp, Pp) => self.pp_pp,
            _ => 0.0,
        }
    }

    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("0P", self.s0_p),
            ("1P", self.s1_p),
            ("0P'", self.s0_pp),
            ("1P'", self.s1_pp),
            ("PP", self.p_p),
            ("PP'", self.p_pp),
            ("P'P'", self.pp_pp),
        ]
    }

    pub fn set_entry(&mut self, key: &str, value: f64) -> bool {
        match key {
            "0P" => self.s0_p = value,
            "1P" => self.s1_p = value,
            "0P'" => self.s0_pp = value,
            "1P'" => self.s1_pp = value,
            "PP" => self.p_p = value,
            "PP'" => self.p_pp = value,
            "P'P'" => self.pp_pp = value,
            _ => return false,
        }
        true
    }

    pub fn negated(&self) -> Self {
        CollisionPhaseTable {
            s0_p: -self.s0_p,
            s1_p: -self.s1_p,
            s0_pp: -self.s0_pp,
            s1_pp: -self.s1_pp,
            p_p: -self.p_p,
            p_pp: -self.p_pp,
            pp_pp: -self.pp_pp,
        }
    }

    /// True when every entry is a multiple of π, i.e. the diagonal is ±1 and
    /// the wait is its own inverse.
    pub fn is_self_inverse(&self) -> bool {
        self.entries().iter().all(|(_, v)| {
            let r = v / std::f64::consts::PI;
            (r - r.round()).abs() < 1e-12
        })
    }
}

/// The register state as a plain n-qubit amplitude vector.
///
/// Bit `i` of an index gives atom `i`'s qubit value, least significant bit
/// first; `sites[i]` is that atom's lattice site.
#[derive(Debug, Clone)]
pub struct RegisterState {
    pub amps: Vec<Complex64>,
    pub sites: Vec<Position>,
}

impl RegisterState {
    pub fn num_qubits(&self) -> usize {
        self.sites.len()
    }
}

/// Pointer factor returned by [`QuantumState::factor_pointer`].
#[derive(Debug, Clone)]
pub struct PointerFactor {
    /// Amplitudes over the pointer's (site, level) basis, unit norm.
    pub amplitudes: Vec<((Position, InternalState), Complex64)>,
}

impl PointerFactor {
    /// The classical (site, level) when the pointer is in a definite one.
    pub fn definite(&self) -> Option<(Position, InternalState)> {
        let mut best = None;
        for &(key, amp) in &self.amplitudes {
            if amp.norm_sqr() > 1.0 - 1e-9 {
                best = Some(key);
            }
        }
        best
    }
}

/// Sparse joint state of all atoms.
#[derive(Debug, Clone)]
pub struct QuantumState {
    spec: LatticeSpec,
    amps: BTreeMap<BasisConfig, Complex64>,
    prune_eps: f64,
    pointer: Option<AtomId>,
}

/// 2×2 pulse matrix for a Raman rotation R(θ, φ) = exp(−iθ/2·(cosφ·X + sinφ·Y)).
fn raman_matrix(theta: f64, phi: f64) -> [[Complex64; 2]; 2] {
    let c = Complex64::new((theta / 2.0).cos(), 0.0);
    let s = (theta / 2.0).sin();
    let m01 = Complex64::new(0.0, -1.0) * Complex64::from_polar(s, -phi);
    let m10 = Complex64::new(0.0, -1.0) * Complex64::from_polar(s, phi);
    [[c, m01], [m10, c]]
}

impl QuantumState {
    /// Product state: one |0⟩ atom per site, plus an optional pointer in |P⟩.
    pub fn init_register(
        spec: LatticeSpec,
        pointer_site: Option<Position>,
    ) -> Result<Self, LatticeError> {
        let mut atoms: Vec<(Position, InternalState)> =
            spec.sites().map(|p| (p, InternalState::S0)).collect();
        let pointer = match pointer_site {
            Some(p) => {
                if !spec.contains(p) {
                    return Err(LatticeError::OutOfBounds(p.render(spec.dims())));
                }
                atoms.push((p, InternalState::P));
                Some(atoms.len() - 1)
            }
            None => None,
        };
        let mut amps = BTreeMap::new();
        amps.insert(BasisConfig::new(atoms), Complex64::new(1.0, 0.0));
        Ok(QuantumState {
            spec,
            amps,
            prune_eps: 1e-12,
            pointer,
        })
    }

    /// Embed a plain n-qubit register state into the lattice, atoms at their
    /// home sites, plus an optional pointer in |P⟩. Used when driving compiled
    /// programs from oracle-side inputs.
    pub fn from_register(
        spec: LatticeSpec,
        amps: &[Complex64],
        pointer_site: Option<Position>,
    ) -> Result<Self, LatticeError> {
        let n = spec.site_count();
        if amps.len() != 1 << n {
            return Err(LatticeError::RosterMismatch);
        }
        if let Some(p) = pointer_site {
            if !spec.contains(p) {
                return Err(LatticeError::OutOfBounds(p.render(spec.dims())));
            }
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(LatticeError::BadSnapshot("register state not normalised".into()));
        }
        let mut map = BTreeMap::new();
        for (idx, &a) in amps.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let mut atoms: Vec<(Position, InternalState)> = (0..n)
                .map(|i| {
                    let st = if (idx >> i) & 1 == 1 {
                        InternalState::S1
                    } else {
                        InternalState::S0
                    };
                    (spec.site_at(i), st)
                })
                .collect();
            if let Some(p) = pointer_site {
                atoms.push((p, InternalState::P));
            }
            map.insert(BasisConfig::new(atoms), a);
        }
        Ok(QuantumState {
            spec,
            amps: map,
            prune_eps: 1e-12,
            pointer: pointer_site.map(|_| n),
        })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn pointer(&self) -> Option<AtomId> {
        self.pointer
    }

    pub fn num_atoms(&self) -> usize {
        self.amps.keys().next().map_or(0, |c| c.len())
    }

    pub fn num_configs(&self) -> usize {
        self.amps.len()
    }

    pub fn configs(&self) -> impl Iterator<Item = (&BasisConfig, &Complex64)> {
        self.amps.iter()
    }

    pub fn amplitude(&self, config: &BasisConfig) -> Complex64 {
        self.amps
            .get(config)
            .copied()
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    fn rebuild(&self, amps: BTreeMap<BasisConfig, Complex64>) -> QuantumState {
        QuantumState {
            spec: self.spec,
            amps,
            prune_eps: self.prune_eps,
            pointer: self.pointer,
        }
    }

    fn pruned(mut map: BTreeMap<BasisConfig, Complex64>, eps: f64) -> BTreeMap<BasisConfig, Complex64> {
        map.retain(|_, a| a.norm() >= eps);
        map
    }

    fn validate_all(&self) -> Result<(), LatticeError> {
        for cfg in self.amps.keys() {
            cfg.validate(&self.spec)?;
        }
        Ok(())
    }

    /// Apply the Raman rotation R(θ, φ) to the `{a, b}` subspace of every atom
    /// simultaneously. Atoms outside the subspace are untouched.
    pub fn global_raman(
        &self,
        pair: RamanPair,
        theta: f64,
        phi: f64,
    ) -> Result<QuantumState, LatticeError> {
        let (a, b) = pair.levels();
        let m = raman_matrix(theta, phi);
        let n = self.num_atoms();
        let mut cur = self.amps.clone();
        for atom in 0..n {
            let mut next: BTreeMap<BasisConfig, Complex64> = BTreeMap::new();
            for (cfg, &amp) in &cur {
                let (pos, st) = cfg.atom(atom);
                if st != a && st != b {
                    *next.entry(cfg.clone()).or_insert_with(|| Complex64::new(0.0, 0.0)) += amp;
                    continue;
                }
                let col = if st == a { 0 } else { 1 };
                for (row, target) in [(0usize, a), (1usize, b)] {
                    let coeff = m[row][col];
                    if coeff.norm_sqr() == 0.0 {
                        continue;
                    }
                    let mut atoms = cfg.atoms().to_vec();
                    atoms[atom] = (pos, target);
                    *next
                        .entry(BasisConfig::new(atoms))
                        .or_insert_with(|| Complex64::new(0.0, 0.0)) += coeff * amp;
                }
            }
            cur = Self::pruned(next, self.prune_eps);
        }
        let out = self.rebuild(cur);
        out.validate_all()?;
        Ok(out)
    }

    /// Translate every mobile atom by `delta`; pinned atoms stay put.
    /// Errors if any branch would push a mobile atom past the transport margin.
    pub fn shift_pointer_lattice(&self, delta: ShiftDelta) -> Result<QuantumState, LatticeError> {
        let mut next = BTreeMap::new();
        for (cfg, &amp) in &self.amps {
            let mut atoms = cfg.atoms().to_vec();
            for entry in atoms.iter_mut() {
                if entry.1.is_mobile() {
                    let moved = entry.0.offset(&delta);
                    if !self.spec.contains_mobile(moved) {
                        return Err(LatticeError::ShiftOutOfBounds);
                    }
                    entry.0 = moved;
                }
            }
            next.insert(BasisConfig::new(atoms), amp);
        }
        let out = self.rebuild(next);
        out.validate_all()?;
        Ok(out)
    }

    /// Diagonal collisional phase: each branch picks up the sum of table
    /// entries over its co-located pairs.
    pub fn collision_wait(&self, table: &CollisionPhaseTable) -> QuantumState {
        let mut next = BTreeMap::new();
        for (cfg, &amp) in &self.amps {
            let phase: f64 = cfg
                .colocated_pairs()
                .into_iter()
                .map(|(a, b)| table.pair_phase(a, b))
                .sum();
            next.insert(cfg.clone(), amp * Complex64::from_polar(1.0, phase));
        }
        self.rebuild(next)
    }

    /// 2π molecular pulse: each branch is negated once per site holding a
    /// co-located (|1⟩, |P⟩) pair. The resonance exists only for that pair.
    pub fn molecular_pulse(&self) -> QuantumState {
        let mut next = BTreeMap::new();
        for (cfg, &amp) in &self.amps {
            let k = cfg.s1_p_sites();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            next.insert(cfg.clone(), amp * sign);
        }
        self.rebuild(next)
    }

    /// Conditional phase used inside the measurement protocol: π on the |1⟩
    /// component at every site holding a |P⟩ pointer. Same diagonal as
    /// [`molecular_pulse`](Self::molecular_pulse); kept as its own operation
    /// because the instruction set names it separately.
    pub fn local_phase_z1pp(&self) -> QuantumState {
        self.molecular_pulse()
    }

    /// Two-outcome projective measurement of "some atom is in |P′⟩".
    ///
    /// Deterministic branches (probability exactly 0 or 1) do not consume
    /// randomness and return the state untouched up to projection, so guard
    /// measurements on |P′⟩-free states are exact no-ops.
    pub fn measure_pprime<R: Rng>(&self, rng: &mut R) -> (bool, QuantumState) {
        let mut p_true = 0.0f64;
        let mut p_false = 0.0f64;
        for (cfg, amp) in &self.amps {
            let has_pp = cfg.atoms().iter().any(|&(_, s)| s == InternalState::Pp);
            if has_pp {
                p_true += amp.norm_sqr();
            } else {
                p_false += amp.norm_sqr();
            }
        }
        let outcome = if p_true == 0.0 {
            return (false, self.clone());
        } else if p_false == 0.0 {
            return (true, self.clone());
        } else {
            rng.gen::<f64>() < p_true
        };
        let keep = |cfg: &BasisConfig| {
            cfg.atoms().iter().any(|&(_, s)| s == InternalState::Pp) == outcome
        };
        let weight = if outcome { p_true } else { p_false };
        let scale = 1.0 / weight.sqrt();
        let mut next = BTreeMap::new();
        for (cfg, &amp) in &self.amps {
            if keep(cfg) {
                next.insert(cfg.clone(), amp * scale);
            }
        }
        (outcome, self.rebuild(Self::pruned(next, self.prune_eps)))
    }

    /// Replace every |P′⟩ atom by |1⟩ in place. Requires the |P′⟩ occupancy to
    /// be the same classical set in every branch (call it after a measurement).
    pub fn reset_pprime(&self) -> Result<QuantumState, LatticeError> {
        let mut pp_set: Option<Vec<AtomId>> = None;
        for cfg in self.amps.keys() {
            let set: Vec<AtomId> = cfg
                .atoms()
                .iter()
                .enumerate()
                .filter(|(_, &(_, s))| s == InternalState::Pp)
                .map(|(i, _)| i)
                .collect();
            match &pp_set {
                None => pp_set = Some(set),
                Some(prev) if *prev == set => {}
                Some(_) => return Err(LatticeError::ResetOnSuperposition),
            }
        }
        let mut next = BTreeMap::new();
        for (cfg, &amp) in &self.amps {
            let atoms = cfg
                .atoms()
                .iter()
                .map(|&(p, s)| {
                    if s == InternalState::Pp {
                        (p, InternalState::S1)
                    } else {
                        (p, s)
                    }
                })
                .collect();
            next.insert(BasisConfig::new(atoms), amp);
        }
        let out = self.rebuild(next);
        out.validate_all()?;
        Ok(out)
    }

    /// ⟨self|other⟩.
    pub fn overlap(&self, other: &QuantumState) -> Result<Complex64, LatticeError> {
        if self.spec != other.spec
            || self.num_atoms() != other.num_atoms()
            || self.pointer != other.pointer
        {
            return Err(LatticeError::RosterMismatch);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (cfg, amp) in &self.amps {
            if let Some(b) = other.amps.get(cfg) {
                acc += amp.conj() * b;
            }
        }
        Ok(acc)
    }

    /// |⟨self|other⟩|².
    pub fn fidelity(&self, other: &QuantumState) -> Result<f64, LatticeError> {
        Ok(self.overlap(other)?.norm_sqr())
    }

    /// Split off the pointer: requires every register atom back in the qubit
    /// subspace and the pointer unentangled (largest Schmidt weight within
    /// 1e−10 of one). Returns the register as a plain n-qubit state.
    pub fn factor_pointer(&self) -> Result<(RegisterState, PointerFactor), LatticeError> {
        let pointer = self.pointer.ok_or(LatticeError::NoPointer)?;
        let n = self.num_atoms() - 1;

        // register index and pointer key per config
        let mut pointer_keys: Vec<(Position, InternalState)> = Vec::new();
        let mut entries: Vec<(usize, usize, Complex64)> = Vec::new();
        for (cfg, &amp) in &self.amps {
            let mut idx = 0usize;
            for (i, &(pos, st)) in cfg.atoms().iter().enumerate() {
                if i == pointer {
                    continue;
                }
                let bit = match st {
                    InternalState::S0 => 0usize,
                    InternalState::S1 => 1usize,
                    _ => return Err(LatticeError::ResidualMobileRegister),
                };
                if pos != self.spec.site_at(i) {
                    return Err(LatticeError::AtomDisplaced);
                }
                idx |= bit << i;
            }
            let pkey = cfg.atom(pointer);
            let pcol = match pointer_keys.iter().position(|&k| k == pkey) {
                Some(c) => c,
                None => {
                    pointer_keys.push(pkey);
                    pointer_keys.len() - 1
                }
            };
            entries.push((idx, pcol, amp));
        }

        let k = pointer_keys.len();
        // Gram matrix of the pointer factor: G[c][d] = Σ_idx conj(M[idx][c])·M[idx][d]
        let mut columns: BTreeMap<usize, Vec<Complex64>> = BTreeMap::new();
        for &(idx, pcol, amp) in &entries {
            let row = columns
                .entry(idx)
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); k]);
            row[pcol] += amp;
        }
        let mut gram = vec![vec![Complex64::new(0.0, 0.0); k]; k];
        for row in columns.values() {
            for c in 0..k {
                for d in 0..k {
                    gram[c][d] += row[c].conj() * row[d];
                }
            }
        }

        // dominant eigenpair of the k×k Gram matrix by power iteration;
        // k is tiny and eigenvalues sum to 1, so convergence is immediate
        // whenever the factor is close to rank one.
        let mut v = vec![Complex64::new(0.0, 0.0); k];
        let start = (0..k)
            .max_by(|&a, &b| {
                gram[a][a]
                    .re
                    .partial_cmp(&gram[b][b].re)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);
        v[start] = Complex64::new(1.0, 0.0);
        let mut lambda = 0.0f64;
        for _ in 0..128 {
            let mut w = vec![Complex64::new(0.0, 0.0); k];
            for c in 0..k {
                for d in 0..k {
                    w[c] += gram[c][d] * v[d];
                }
            }
            let norm: f64 = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            for x in w.iter_mut() {
                *x /= norm;
            }
            lambda = norm;
            v = w;
        }
        let schmidt = lambda.sqrt();
        if schmidt < 1.0 - 1e-10 {
            return Err(LatticeError::PointerEntangled(schmidt));
        }

        // register amplitudes: M·v / sqrt(lambda)
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        for (idx, row) in &columns {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..k {
                acc += row[c] * v[c].conj();
            }
            amps[*idx] = acc / lambda.sqrt();
        }
        let sites = (0..n).map(|i| self.spec.site_at(i)).collect();
        let pointer_amps = pointer_keys.into_iter().zip(v).collect();
        Ok((
            RegisterState { amps, sites },
            PointerFactor {
                amplitudes: pointer_amps,
            },
        ))
    }

    /// Interpret a pointerless state as a plain n-qubit register state.
    /// Every atom must be in the qubit subspace at its home site.
    pub fn to_register_state(&self) -> Result<RegisterState, LatticeError> {
        if self.pointer.is_some() {
            return Err(LatticeError::RosterMismatch);
        }
        let n = self.num_atoms();
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        for (cfg, &amp) in &self.amps {
            let mut idx = 0usize;
            for (i, &(pos, st)) in cfg.atoms().iter().enumerate() {
                let bit = match st {
                    InternalState::S0 => 0usize,
                    InternalState::S1 => 1usize,
                    _ => return Err(LatticeError::ResidualMobileRegister),
                };
                if pos != self.spec.site_at(i) {
                    return Err(LatticeError::AtomDisplaced);
                }
                idx |= bit << i;
            }
            amps[idx] = amp;
        }
        let sites = (0..n).map(|i| self.spec.site_at(i)).collect();
        Ok(RegisterState { amps, sites })
    }

    /// Line-oriented snapshot: `re im ; (pos,state) (pos,state) ...` per
    /// branch, in canonical configuration order.
    pub fn to_text(&self) -> String {
        let dims = self.spec.dims();
        let mut out = String::new();
        for (cfg, amp) in &self.amps {
            out.push_str(&format!("{} {} ;", amp.re, amp.im));
            for &(pos, st) in cfg.atoms() {
                out.push_str(&format!(" ({},{})", pos.render(dims), st.token()));
            }
            out.push('\n');
        }
        out
    }

    /// Parse a snapshot produced by [`to_text`](Self::to_text).
    pub fn from_text(
        spec: LatticeSpec,
        pointer: Option<AtomId>,
        text: &str,
    ) -> Result<QuantumState, LatticeError> {
        let mut amps = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| LatticeError::BadSnapshot(format!("line {}: {}", lineno + 1, msg));
            let (amppart, cfgpart) = line.split_once(';').ok_or_else(|| bad("missing ';'"))?;
            let mut it = amppart.split_whitespace();
            let re: f64 = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad("bad real part"))?;
            let im: f64 = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad("bad imaginary part"))?;
            if it.next().is_some() {
                return Err(bad("trailing amplitude tokens"));
            }
            let mut atoms = Vec::new();
            for tok in cfgpart.split_whitespace() {
                let inner = tok
                    .strip_prefix('(')
                    .and_then(|t| t.strip_suffix(')'))
                    .ok_or_else(|| bad("atom token not parenthesised"))?;
                let (coords, state_tok) =
                    inner.rsplit_once(',').ok_or_else(|| bad("atom token too short"))?;
                let st = InternalState::from_token(state_tok)
                    .ok_or_else(|| bad("unknown internal state"))?;
                let pos = Position::parse(coords).ok_or_else(|| bad("bad coordinates"))?;
                atoms.push((pos, st));
            }
            if atoms.is_empty() {
                return Err(bad("empty configuration"));
            }
            amps.insert(BasisConfig::new(atoms), Complex64::new(re, im));
        }
        let state = QuantumState {
            spec,
            amps,
            prune_eps: 1e-12,
            pointer,
        };
        state.validate_all()?;
        let counts: Vec<usize> = state.amps.keys().map(|c| c.len()).collect();
        if counts.windows(2).any(|w| w[0] != w[1]) {
            return Err(LatticeError::BadSnapshot("atom count differs across lines".into()));
        }
        Ok(state)
    }
}

impl fmt::Display for QuantumState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_text())
    }
}
