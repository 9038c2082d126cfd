//! Light shifts, photon-scattering rates and decoherence budgets for the
//! trapping lattices, summed over a set of atomic lines.
//!
//! The model is the standard two-level dipole expression per fine-structure
//! line, counter-rotating term included:
//!
//! ```text
//! U(I)  = −(3πc²/2ω₀³) · Γ · s · (1/(ω₀−ω) + 1/(ω₀+ω)) · I
//! Γ_sc  =  (3πc²/2ħω₀³) · (ω/ω₀)³ · Γ² · s · (1/(ω₀−ω) + 1/(ω₀+ω))² · I
//! ```
//!
//! Red detuning gives an attractive (negative) shift. Hyperfine structure is
//! not resolved; state dependence enters through per-line strength
//! coefficients for the clock-state qubit class and for the magnetically
//! sensitive pointer class under σ⁺/σ⁻/π light.

use thiserror::Error;

/// Speed of light, m/s.
pub const C: f64 = 2.997_924_58e8;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant, J·s.
pub const H_PLANCK: f64 = 6.626_070_15e-34;
/// Mass of ⁸⁷Rb, kg.
pub const RB87_MASS: f64 = 1.443_160_6e-25;

#[derive(Debug, Error, PartialEq)]
pub enum PhotoError {
    #[error("wavelength {lambda_nm} nm is within the guard band of line {label}")]
    PoleGuard { label: String, lambda_nm: f64 },
    #[error("zero light shift at {lambda_nm} nm: class is untrappable there")]
    Untrappable { lambda_nm: f64 },
    #[error("no sign change of the light shift across the bracket")]
    NoSignChange,
    #[error("atomic data parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad input: {0}")]
    BadInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    SigmaPlus,
    SigmaMinus,
    Pi,
}

impl Polarization {
    pub fn token(self) -> &'static str {
        match self {
            Polarization::SigmaPlus => "sigma+",
            Polarization::SigmaMinus => "sigma-",
            Polarization::Pi => "pi",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "sigma+" => Some(Polarization::SigmaPlus),
            "sigma-" => Some(Polarization::SigmaMinus),
            "pi" => Some(Polarization::Pi),
            _ => None,
        }
    }
}

/// Which internal levels see the light: the m_F = 0 clock pair used for the
/// qubit, or the magnetically sensitive pointer pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateClass {
    Qubit,
    Pointer,
}

impl StateClass {
    pub fn token(self) -> &'static str {
        match self {
            StateClass::Qubit => "qubit",
            StateClass::Pointer => "pointer",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "qubit" => Some(StateClass::Qubit),
            "pointer" => Some(StateClass::Pointer),
            _ => None,
        }
    }
}

/// One optical transition with polarisation-resolved strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicLine {
    pub label: String,
    pub wavelength_nm: f64,
    /// Natural linewidth of the coupling, rad/s.
    pub gamma: f64,
    pub s_qubit: f64,
    pub s_ptr_sigma_plus: f64,
    pub s_ptr_sigma_minus: f64,
    pub s_pi: f64,
}

impl AtomicLine {
    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * C / (self.wavelength_nm * 1e-9)
    }

    /// Strength coefficient for a state class in a given polarisation. The
    /// clock-state qubit shift is scalar, so its coefficient ignores
    /// polarisation; the pointer picks its σ⁺/σ⁻/π column.
    pub fn strength(&self, pol: Polarization, class: StateClass) -> f64 {
        match class {
            StateClass::Qubit => self.s_qubit,
            StateClass::Pointer => match pol {
                Polarization::SigmaPlus => self.s_ptr_sigma_plus,
                Polarization::SigmaMinus => self.s_ptr_sigma_minus,
                Polarization::Pi => self.s_pi,
            },
        }
    }
}

/// Line data plus the pole guard band.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSet {
    pub lines: Vec<AtomicLine>,
    /// Minimum detuning from any line, Hz. Default 1 GHz.
    pub guard_band_hz: f64,
}

/// Default ⁸⁷Rb data: the two D lines and the much weaker 5s→6p doublet.
/// D-line linewidths are the measured values; the 6p couplings derive from
/// published oscillator strengths (f ≈ 0.0062 and 0.0133), two orders of
/// magnitude weaker in squared dipole moment than the D lines. Pointer
/// strengths are representative vector-shift weightings, not hyperfine-
/// resolved values; they are the dominant uncertainty and live in an
/// editable data file.
pub const RB_DEFAULT_DATA: &str = "\
# label  lambda_nm  gamma_MHz  s_qubit  s_ptr_sigma+  s_ptr_sigma-  s_pi
LINE 5p1/2 794.979 5.746 0.333333 0.166667 0.5 0.333333
LINE 5p3/2 780.241 6.065 0.666667 0.833333 0.5 0.666667
LINE 6p1/2 421.671 0.185 0.333333 0.166667 0.5 0.333333
LINE 6p3/2 420.298 0.400 0.666667 0.833333 0.5 0.666667
";

impl LineSet {
    pub fn rb_default() -> Self {
        LineSet::parse(RB_DEFAULT_DATA).expect("built-in data parses")
    }

    /// Parse `LINE <label> <wavelength_nm> <gamma_MHz> <s_qubit>
    /// <s_ptr_sigma+> <s_ptr_sigma-> <s_pi>` lines.
    pub fn parse(text: &str) -> Result<Self, PhotoError> {
        let mut lines = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(at) => &raw[..at],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| PhotoError::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 8 || toks[0] != "LINE" {
                return Err(err("expected: LINE label lambda_nm gamma_MHz s_qubit s+ s- s_pi"));
            }
            let nums: Result<Vec<f64>, _> = toks[2..].iter().map(|t| t.parse::<f64>()).collect();
            let n = nums.map_err(|_| err("bad number"))?;
            if n[0] <= 0.0 || n[1] <= 0.0 {
                return Err(err("wavelength and linewidth must be positive"));
            }
            if n[2..].iter().any(|&s| s < 0.0) {
                return Err(err("strengths must be non-negative"));
            }
            lines.push(AtomicLine {
                label: toks[1].to_string(),
                wavelength_nm: n[0],
                gamma: 2.0 * std::f64::consts::PI * n[1] * 1e6,
                s_qubit: n[2],
                s_ptr_sigma_plus: n[3],
                s_ptr_sigma_minus: n[4],
                s_pi: n[5],
            });
        }
        if lines.is_empty() {
            return Err(PhotoError::BadInput("no LINE entries".into()));
        }
        Ok(LineSet {
            lines,
            guard_band_hz: 1e9,
        })
    }

    fn check_guard(&self, lambda_m: f64) -> Result<(), PhotoError> {
        let f = C / lambda_m;
        for line in &self.lines {
            let f0 = C / (line.wavelength_nm * 1e-9);
            if (f - f0).abs() < self.guard_band_hz {
                return Err(PhotoError::PoleGuard {
                    label: line.label.clone(),
                    lambda_nm: lambda_m * 1e9,
                });
            }
        }
        Ok(())
    }
}

/// Trap parameters from which the ground-state length derives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapContext {
    pub trap_frequency_hz: f64,
    pub mass_kg: f64,
    pub lattice_wavelength_m: f64,
}

impl TrapContext {
    /// Harmonic-oscillator length a₀ = √(ħ/(m·2πν)).
    pub fn ground_state_length(&self) -> f64 {
        (HBAR / (self.mass_kg * 2.0 * std::f64::consts::PI * self.trap_frequency_hz)).sqrt()
    }
}

/// AC Stark shift in Hz of a state class at the given intensity (W/m²).
pub fn light_shift(
    lines: &LineSet,
    lambda_m: f64,
    pol: Polarization,
    class: StateClass,
    intensity: f64,
) -> Result<f64, PhotoError> {
    if lambda_m <= 0.0 {
        return Err(PhotoError::BadInput("wavelength must be positive".into()));
    }
    lines.check_guard(lambda_m)?;
    let omega = 2.0 * std::f64::consts::PI * C / lambda_m;
    let mut shift_joule = 0.0f64;
    for line in &lines.lines {
        let s = line.strength(pol, class);
        if s == 0.0 {
            continue;
        }
        let w0 = line.omega0();
        let prefactor = 3.0 * std::f64::consts::PI * C * C / (2.0 * w0.powi(3));
        let detuning_sum = 1.0 / (w0 - omega) + 1.0 / (w0 + omega);
        shift_joule += -prefactor * line.gamma * s * detuning_sum * intensity;
    }
    Ok(shift_joule / H_PLANCK)
}

/// Photon scattering rate (s⁻¹) at the given intensity.
pub fn scattering_rate(
    lines: &LineSet,
    lambda_m: f64,
    pol: Polarization,
    class: StateClass,
    intensity: f64,
) -> Result<f64, PhotoError> {
    if lambda_m <= 0.0 {
        return Err(PhotoError::BadInput("wavelength must be positive".into()));
    }
    lines.check_guard(lambda_m)?;
    let omega = 2.0 * std::f64::consts::PI * C / lambda_m;
    let mut rate = 0.0f64;
    for line in &lines.lines {
        let s = line.strength(pol, class);
        if s == 0.0 {
            continue;
        }
        let w0 = line.omega0();
        let prefactor = 3.0 * std::f64::consts::PI * C * C / (2.0 * HBAR * w0.powi(3));
        let detuning_sum = 1.0 / (w0 - omega) + 1.0 / (w0 + omega);
        rate += prefactor
            * (omega / w0).powi(3)
            * line.gamma.powi(2)
            * s
            * detuning_sum.powi(2)
            * intensity;
    }
    Ok(rate)
}

/// Lattice depth needed for harmonic frequency ν in a standing wave:
/// ν = (2/λ)·√(U₀/2m), hence U₀ = m·ν²·λ²/2.
pub fn trap_depth_joule(nu_hz: f64, mass_kg: f64, lambda_m: f64) -> f64 {
    mass_kg * nu_hz * nu_hz * lambda_m * lambda_m / 2.0
}

/// Peak intensity giving trap frequency `nu_hz` for the class at `lambda_m`.
pub fn intensity_for_trap_frequency(
    lines: &LineSet,
    lambda_m: f64,
    pol: Polarization,
    class: StateClass,
    nu_hz: f64,
    mass_kg: f64,
) -> Result<f64, PhotoError> {
    if nu_hz <= 0.0 || mass_kg <= 0.0 {
        return Err(PhotoError::BadInput("trap frequency and mass must be positive".into()));
    }
    let shift_hz_per_intensity = light_shift(lines, lambda_m, pol, class, 1.0)?;
    let depth_per_intensity = shift_hz_per_intensity.abs() * H_PLANCK;
    if depth_per_intensity < 1e-60 {
        return Err(PhotoError::Untrappable {
            lambda_nm: lambda_m * 1e9,
        });
    }
    Ok(trap_depth_joule(nu_hz, mass_kg, lambda_m) / depth_per_intensity)
}

/// Scattering suppression of order (2πa₀/λ)² for atoms at the nodes of a
/// blue-detuned lattice.
pub fn blue_suppression_factor(ctx: &TrapContext) -> f64 {
    let a0 = ctx.ground_state_length();
    (2.0 * std::f64::consts::PI * a0 / ctx.lattice_wavelength_m).powi(2)
}

/// Fraction of the peak intensity a node-trapped atom actually samples:
/// the ground-state Gaussian average of sin²(kx),
/// (1 − exp(−(2πa₀/λ)²))/2 ≈ ½(2πa₀/λ)².
pub fn ground_state_intensity_fraction(ctx: &TrapContext) -> f64 {
    (1.0 - (-blue_suppression_factor(ctx)).exp()) / 2.0
}

/// Effective scattering rate of a node-trapped qubit at trap frequency
/// `nu_hz`: peak-intensity rate times the sampled-intensity fraction.
pub fn trapped_qubit_rate(
    lines: &LineSet,
    lambda_m: f64,
    nu_hz: f64,
    mass_kg: f64,
) -> Result<f64, PhotoError> {
    let intensity =
        intensity_for_trap_frequency(lines, lambda_m, Polarization::Pi, StateClass::Qubit, nu_hz, mass_kg)?;
    let peak = scattering_rate(lines, lambda_m, Polarization::Pi, StateClass::Qubit, intensity)?;
    let ctx = TrapContext {
        trap_frequency_hz: nu_hz,
        mass_kg,
        lattice_wavelength_m: lambda_m,
    };
    Ok(peak * ground_state_intensity_fraction(&ctx))
}

/// Average scattering rate of the four internal states in the
/// pointer-transport lattice (σ⁺, trap frequency `nu_hz` for the pointer):
/// two qubit states and two pointer states at peak intensity.
pub fn four_state_average_rate(
    lines: &LineSet,
    lambda_m: f64,
    nu_hz: f64,
    mass_kg: f64,
) -> Result<f64, PhotoError> {
    let intensity = intensity_for_trap_frequency(
        lines,
        lambda_m,
        Polarization::SigmaPlus,
        StateClass::Pointer,
        nu_hz,
        mass_kg,
    )?;
    let qubit = scattering_rate(lines, lambda_m, Polarization::Pi, StateClass::Qubit, intensity)?;
    let pointer = scattering_rate(
        lines,
        lambda_m,
        Polarization::SigmaPlus,
        StateClass::Pointer,
        intensity,
    )?;
    Ok((2.0 * qubit + 2.0 * pointer) / 4.0)
}

/// Probability of a spontaneous emission during one pointer move: the
/// four-state average with the qubit states exposed to half the transport
/// intensity, times the move time.
pub fn move_emission_probability(
    lines: &LineSet,
    lambda_m: f64,
    nu_hz: f64,
    move_time_s: f64,
    mass_kg: f64,
) -> Result<f64, PhotoError> {
    if move_time_s < 0.0 {
        return Err(PhotoError::BadInput("move time must be non-negative".into()));
    }
    let intensity = intensity_for_trap_frequency(
        lines,
        lambda_m,
        Polarization::SigmaPlus,
        StateClass::Pointer,
        nu_hz,
        mass_kg,
    )?;
    let qubit_half = scattering_rate(
        lines,
        lambda_m,
        Polarization::Pi,
        StateClass::Qubit,
        intensity / 2.0,
    )?;
    let pointer = scattering_rate(
        lines,
        lambda_m,
        Polarization::SigmaPlus,
        StateClass::Pointer,
        intensity,
    )?;
    let average = (2.0 * qubit_half + 2.0 * pointer) / 4.0;
    Ok(average * move_time_s)
}

/// Bisection root of the light shift inside a sign-changing bracket,
/// resolved to 1e-4 nm.
pub fn find_zero_shift_wavelength(
    lines: &LineSet,
    pol: Polarization,
    class: StateClass,
    bracket_nm: (f64, f64),
) -> Result<f64, PhotoError> {
    let (mut lo, mut hi) = (bracket_nm.0 * 1e-9, bracket_nm.1 * 1e-9);
    if lo >= hi {
        return Err(PhotoError::BadInput("bracket must have lo < hi".into()));
    }
    let mut f_lo = light_shift(lines, lo, pol, class, 1.0)?;
    let f_hi = light_shift(lines, hi, pol, class, 1.0)?;
    if f_lo == 0.0 {
        return Ok(lo * 1e9);
    }
    if f_hi == 0.0 {
        return Ok(hi * 1e9);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(PhotoError::NoSignChange);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = light_shift(lines, mid, pol, class, 1.0)?;
        if f_mid == 0.0 {
            return Ok(mid * 1e9);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi) * 1e9)
}

/// One row of a wavelength scan.
#[derive(Debug, Clone, Copy)]
pub struct ScanRow {
    pub lambda_nm: f64,
    /// Shift in Hz at the fixed reference intensity, None inside guard bands.
    pub shift_hz: Option<f64>,
    /// Scattering rate at the intensity holding trap frequency ν, None
    /// inside guard bands or where the class is untrappable.
    pub scatter_per_s: Option<f64>,
}

impl ScanRow {
    pub fn csv(&self) -> String {
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x}"),
            None => "skipped".to_string(),
        };
        format!("{},{},{}", self.lambda_nm, fmt(self.shift_hz), fmt(self.scatter_per_s))
    }
}

/// Reference intensity used for the shift column of scans (W/m²).
pub const SCAN_REFERENCE_INTENSITY: f64 = 1e9;

/// Scan a wavelength window: per row, the light shift at the reference
/// intensity and the scattering rate at the trap-frequency-normalised
/// intensity (which peaks sharply near zero crossings, where holding the
/// trap requires diverging power).
pub fn scan(
    lines: &LineSet,
    lo_nm: f64,
    hi_nm: f64,
    step_nm: f64,
    pol: Polarization,
    class: StateClass,
    nu_hz: f64,
    mass_kg: f64,
) -> Result<Vec<ScanRow>, PhotoError> {
    if step_nm <= 0.0 || hi_nm < lo_nm {
        return Err(PhotoError::BadInput("need lo ≤ hi and a positive step".into()));
    }
    let mut rows = Vec::new();
    let steps = ((hi_nm - lo_nm) / step_nm).round() as usize;
    for i in 0..=steps {
        let lambda_nm = lo_nm + step_nm * i as f64;
        if lambda_nm > hi_nm + 1e-9 {
            break;
        }
        let lambda_m = lambda_nm * 1e-9;
        let shift = light_shift(lines, lambda_m, pol, class, SCAN_REFERENCE_INTENSITY).ok();
        let scatter = intensity_for_trap_frequency(lines, lambda_m, pol, class, nu_hz, mass_kg)
            .and_then(|intensity| scattering_rate(lines, lambda_m, pol, class, intensity))
            .ok();
        rows.push(ScanRow {
            lambda_nm,
            shift_hz: shift,
            scatter_per_s: scatter,
        });
    }
    Ok(rows)
}
