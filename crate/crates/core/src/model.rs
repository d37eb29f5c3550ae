//! Physical parameters and scalar conversions.
//!
//! Everything inside the engine is SI: watts, metres, and angular rates in
//! rad/s. Degrees per hour only appear at I/O boundaries through
//! [`DEG_PER_HOUR`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// One degree per hour expressed in rad/s.
pub const DEG_PER_HOUR: f64 = PI / (180.0 * 3600.0);

/// CODATA 2018 constants. Not user-configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Speed of light in vacuum (m/s).
    pub c: f64,
    /// Reduced Planck constant (J s).
    pub hbar: f64,
    /// Vacuum permittivity (F/m).
    pub eps0: f64,
}

impl PhysicalConstants {
    pub const CODATA: Self = Self {
        c: 299_792_458.0,
        hbar: 1.054_571_817e-34,
        eps0: 8.854_187_812_8e-12,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA
    }
}

/// Ring geometry, material and loss description.
///
/// The second-harmonic wavelength is always `lambda1 / 2`; it is never
/// stored separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    pub radius: f64,
    pub index_n0: f64,
    pub lambda1: f64,
    pub qi1: f64,
    pub qi2: f64,
    /// Back-scattering rate between CW and CCW at the fundamental (rad/s).
    pub beta1: f64,
    /// Back-scattering rate at the second harmonic (rad/s).
    pub beta2: f64,
    /// Nonlinear coupling strength (rad/s).
    pub chi: f64,
}

impl ResonatorParams {
    pub fn lambda2(&self) -> f64 {
        self.lambda1 / 2.0
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("radius", self.radius)?;
        positive("index_n0", self.index_n0)?;
        positive("lambda1", self.lambda1)?;
        at_least_one("Qi1", self.qi1)?;
        at_least_one("Qi2", self.qi2)?;
        non_negative("beta1", self.beta1)?;
        non_negative("beta2", self.beta2)?;
        non_negative("chi", self.chi)?;
        Ok(())
    }
}

/// Which harmonics are externally driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectionScheme {
    Fundamental,
    SecondHarmonic,
    Dual,
    Undriven,
}

impl InjectionScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Fundamental => "fundamental",
            Self::SecondHarmonic => "second-harmonic",
            Self::Dual => "dual",
            Self::Undriven => "undriven",
        }
    }
}

impl std::str::FromStr for InjectionScheme {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fundamental" => Ok(Self::Fundamental),
            "second-harmonic" => Ok(Self::SecondHarmonic),
            "dual" => Ok(Self::Dual),
            "undriven" => Ok(Self::Undriven),
            other => Err(ModelError::UnknownName(other.to_string())),
        }
    }
}

/// Input powers are per waveguide port; both CW and CCW ports receive the
/// same power and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub p1: f64,
    pub p2: f64,
    pub psi1: f64,
    pub psi2: f64,
}

impl DriveParams {
    pub fn scheme(&self) -> InjectionScheme {
        match (self.p1 > 0.0, self.p2 > 0.0) {
            (true, false) => InjectionScheme::Fundamental,
            (false, true) => InjectionScheme::SecondHarmonic,
            (true, true) => InjectionScheme::Dual,
            (false, false) => InjectionScheme::Undriven,
        }
    }

    /// Total injected power summed over harmonics, for one port.
    pub fn total_power(&self) -> f64 {
        self.p1 + self.p2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub qc1: f64,
    pub qc2: f64,
}

/// Rotation rate and the Sagnac shift it induces at the fundamental.
///
/// `delta1` is kept consistent with `omega` by the constructors; the
/// second-harmonic shift is always exactly twice `delta1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationParams {
    pub omega: f64,
    pub delta1: f64,
}

impl RotationParams {
    pub fn from_omega(omega: f64, resonator: &ResonatorParams) -> Self {
        let delta1 = sagnac_shift(omega, resonator.radius, resonator.lambda1, resonator.index_n0);
        Self { omega, delta1 }
    }

    pub fn from_delta1(delta1: f64, resonator: &ResonatorParams) -> Self {
        let omega = omega_from_delta(delta1, resonator.radius, resonator.lambda1, resonator.index_n0);
        Self { omega, delta1 }
    }

    pub fn delta2(&self) -> f64 {
        2.0 * self.delta1
    }
}

/// Balanced-homodyne detection constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Photodetector responsivity (A/W).
    pub responsivity: f64,
    /// Propagation phases of the fundamental and second-harmonic outputs.
    pub phi1: f64,
    pub phi2: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            responsivity: 0.58,
            phi1: 0.0,
            phi2: 0.0,
        }
    }
}

/// Full description of one gyroscope configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub constants: PhysicalConstants,
    pub resonator: ResonatorParams,
    pub drive: DriveParams,
    pub coupling: CouplingParams,
    pub rotation: RotationParams,
    pub detection: DetectionParams,
}

/// Per-mode rates derived from a [`ModelParams`], in the canonical mode
/// order `[1cw, 1ccw, 2cw, 2ccw]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub omega: [f64; 2],
    pub kappa: [f64; 2],
    pub gamma: [f64; 2],
    pub beta: [f64; 2],
    pub delta: [f64; 2],
    pub chi: f64,
}

impl Rates {
    /// Half the total amplitude decay rate of harmonic `h` (0 or 1).
    pub fn half_width(&self, h: usize) -> f64 {
        0.5 * (self.kappa[h] + self.gamma[h])
    }

    pub fn kappa_of_mode(&self, m: usize) -> f64 {
        self.kappa[m / 2]
    }

    pub fn gamma_of_mode(&self, m: usize) -> f64 {
        self.gamma[m / 2]
    }
}

impl ModelParams {
    /// Parameter set used throughout the thin-film lithium niobate study:
    /// 1590 nm fundamental, n = 2.2, R = 20 mm, Qi = 1e7 / 1e6,
    /// beta = 5.4e4 / 5.4e5 rad/s, chi = 1.26e6 rad/s, R = 0.58 A/W.
    /// Drives and couplings must be set by the caller.
    pub fn tfln_reference() -> Self {
        let resonator = ResonatorParams {
            radius: 20e-3,
            index_n0: 2.2,
            lambda1: 1590e-9,
            qi1: 1e7,
            qi2: 1e6,
            beta1: 5.4e4,
            beta2: 5.4e5,
            chi: 1.26e6,
        };
        Self {
            constants: PhysicalConstants::CODATA,
            resonator,
            drive: DriveParams {
                p1: 0.0,
                p2: 0.0,
                psi1: 0.0,
                psi2: 0.0,
            },
            coupling: CouplingParams { qc1: 1e7, qc2: 1e6 },
            rotation: RotationParams {
                omega: 0.0,
                delta1: 0.0,
            },
            detection: DetectionParams::default(),
        }
    }

    pub fn with_drive(mut self, p1: f64, p2: f64) -> Self {
        self.drive.p1 = p1;
        self.drive.p2 = p2;
        self
    }

    pub fn with_coupling(mut self, qc1: f64, qc2: f64) -> Self {
        self.coupling = CouplingParams { qc1, qc2 };
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.rotation = RotationParams::from_omega(omega, &self.resonator);
        self
    }

    pub fn with_delta1(mut self, delta1: f64) -> Self {
        self.rotation = RotationParams::from_delta1(delta1, &self.resonator);
        self
    }

    pub fn omega1(&self) -> f64 {
        angular_frequency(self.resonator.lambda1, &self.constants).expect("validated wavelength")
    }

    pub fn omega2(&self) -> f64 {
        2.0 * self.omega1()
    }

    pub fn rates(&self) -> Rates {
        let w1 = self.omega1();
        let w2 = 2.0 * w1;
        Rates {
            omega: [w1, w2],
            kappa: [w1 / self.coupling.qc1, w2 / self.coupling.qc2],
            gamma: [w1 / self.resonator.qi1, w2 / self.resonator.qi2],
            beta: [self.resonator.beta1, self.resonator.beta2],
            delta: [self.rotation.delta1, self.rotation.delta2()],
            chi: self.resonator.chi,
        }
    }

    /// Photon fluxes N1, N2 injected per port.
    pub fn photon_fluxes(&self) -> [f64; 2] {
        [
            photon_flux(self.drive.p1, self.omega1(), &self.constants),
            photon_flux(self.drive.p2, self.omega2(), &self.constants),
        ]
    }

    /// Classical input amplitudes `[b1cw, b1ccw, b2cw, b2ccw]`.
    pub fn input_amplitudes(&self) -> [num_complex::Complex64; 4] {
        use num_complex::Complex64;
        let [n1, n2] = self.photon_fluxes();
        let b1 = Complex64::from_polar(n1.sqrt(), self.drive.psi1);
        let b2 = Complex64::from_polar(n2.sqrt(), self.drive.psi2);
        [b1, b1, b2, b2]
    }

    /// Detector constants A1 = R hbar w1 and A2 = R hbar w2 (A s).
    pub fn detector_constants(&self) -> [f64; 2] {
        let r = self.detection.responsivity * self.constants.hbar;
        [r * self.omega1(), r * self.omega2()]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.resonator.validate()?;
        non_negative("P1", self.drive.p1)?;
        non_negative("P2", self.drive.p2)?;
        at_least_one("Qc1", self.coupling.qc1)?;
        at_least_one("Qc2", self.coupling.qc2)?;
        non_negative("responsivity", self.detection.responsivity)?;
        let expected = sagnac_shift(
            self.rotation.omega,
            self.resonator.radius,
            self.resonator.lambda1,
            self.resonator.index_n0,
        );
        let scale = expected.abs().max(self.rotation.delta1.abs()).max(f64::MIN_POSITIVE);
        if (expected - self.rotation.delta1).abs() > 1e-9 * scale {
            return Err(ModelError::Inconsistent(
                "delta1 does not match Omega through the Sagnac relation".into(),
            ));
        }
        Ok(())
    }
}

/// Scalar model parameters addressable by name, used by sweeps,
/// continuation and the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKey {
    P1,
    P2,
    Qc1,
    Qc2,
    Qi1,
    Qi2,
    Chi,
    Beta1,
    Beta2,
    Omega,
    Radius,
    Psi1,
    Psi2,
    Responsivity,
}

impl ParamKey {
    pub const ALL: [ParamKey; 14] = [
        ParamKey::P1,
        ParamKey::P2,
        ParamKey::Qc1,
        ParamKey::Qc2,
        ParamKey::Qi1,
        ParamKey::Qi2,
        ParamKey::Chi,
        ParamKey::Beta1,
        ParamKey::Beta2,
        ParamKey::Omega,
        ParamKey::Radius,
        ParamKey::Psi1,
        ParamKey::Psi2,
        ParamKey::Responsivity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ParamKey::P1 => "P1",
            ParamKey::P2 => "P2",
            ParamKey::Qc1 => "Qc1",
            ParamKey::Qc2 => "Qc2",
            ParamKey::Qi1 => "Qi1",
            ParamKey::Qi2 => "Qi2",
            ParamKey::Chi => "chi",
            ParamKey::Beta1 => "beta1",
            ParamKey::Beta2 => "beta2",
            ParamKey::Omega => "Omega",
            ParamKey::Radius => "radius",
            ParamKey::Psi1 => "psi1",
            ParamKey::Psi2 => "psi2",
            ParamKey::Responsivity => "responsivity",
        }
    }

    /// SI unit label used in CSV headers.
    pub fn si_unit(&self) -> &'static str {
        match self {
            ParamKey::P1 | ParamKey::P2 => "W",
            ParamKey::Qc1 | ParamKey::Qc2 | ParamKey::Qi1 | ParamKey::Qi2 => "",
            ParamKey::Chi | ParamKey::Beta1 | ParamKey::Beta2 | ParamKey::Omega => "rad/s",
            ParamKey::Radius => "m",
            ParamKey::Psi1 | ParamKey::Psi2 => "rad",
            ParamKey::Responsivity => "A/W",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }

    pub fn get(&self, p: &ModelParams) -> f64 {
        match self {
            ParamKey::P1 => p.drive.p1,
            ParamKey::P2 => p.drive.p2,
            ParamKey::Qc1 => p.coupling.qc1,
            ParamKey::Qc2 => p.coupling.qc2,
            ParamKey::Qi1 => p.resonator.qi1,
            ParamKey::Qi2 => p.resonator.qi2,
            ParamKey::Chi => p.resonator.chi,
            ParamKey::Beta1 => p.resonator.beta1,
            ParamKey::Beta2 => p.resonator.beta2,
            ParamKey::Omega => p.rotation.omega,
            ParamKey::Radius => p.resonator.radius,
            ParamKey::Psi1 => p.drive.psi1,
            ParamKey::Psi2 => p.drive.psi2,
            ParamKey::Responsivity => p.detection.responsivity,
        }
    }

    /// Sets the parameter, keeping the Sagnac shift consistent with the
    /// rotation rate when either the rate or the radius changes.
    pub fn set(&self, p: &mut ModelParams, value: f64) {
        match self {
            ParamKey::P1 => p.drive.p1 = value,
            ParamKey::P2 => p.drive.p2 = value,
            ParamKey::Qc1 => p.coupling.qc1 = value,
            ParamKey::Qc2 => p.coupling.qc2 = value,
            ParamKey::Qi1 => p.resonator.qi1 = value,
            ParamKey::Qi2 => p.resonator.qi2 = value,
            ParamKey::Chi => p.resonator.chi = value,
            ParamKey::Beta1 => p.resonator.beta1 = value,
            ParamKey::Beta2 => p.resonator.beta2 = value,
            ParamKey::Omega => p.rotation = RotationParams::from_omega(value, &p.resonator),
            ParamKey::Radius => {
                p.resonator.radius = value;
                p.rotation = RotationParams::from_omega(p.rotation.omega, &p.resonator);
            }
            ParamKey::Psi1 => p.drive.psi1 = value,
            ParamKey::Psi2 => p.drive.psi2 = value,
            ParamKey::Responsivity => p.detection.responsivity = value,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ModelError::Domain { name, value: v })
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Domain { name, value: v })
    }
}

fn at_least_one(name: &'static str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() && v >= 1.0 {
        Ok(())
    } else {
        Err(ModelError::Domain { name, value: v })
    }
}

/// `2 pi c / lambda`.
pub fn angular_frequency(lambda: f64, constants: &PhysicalConstants) -> Result<f64, ModelError> {
    positive("wavelength", lambda)?;
    Ok(2.0 * PI * constants.c / lambda)
}

/// Coupling and intrinsic amplitude decay rates `(omega/Qc, omega/Qi)`.
pub fn rates_from_quality(omega: f64, qc: f64, qi: f64) -> Result<(f64, f64), ModelError> {
    positive("omega", omega)?;
    at_least_one("Qc", qc)?;
    at_least_one("Qi", qi)?;
    Ok((omega / qc, omega / qi))
}

/// Sagnac resonance shift `2 pi R Omega / (lambda n0)`. The sign follows
/// `omega`.
pub fn sagnac_shift(omega: f64, radius: f64, lambda: f64, n0: f64) -> f64 {
    2.0 * PI * radius * omega / (lambda * n0)
}

/// Inverse of [`sagnac_shift`].
pub fn omega_from_delta(delta: f64, radius: f64, lambda: f64, n0: f64) -> f64 {
    lambda * n0 / (2.0 * PI * radius) * delta
}

/// Photon flux `P / (hbar omega)` in photons per second.
pub fn photon_flux(power: f64, omega: f64, constants: &PhysicalConstants) -> f64 {
    power / (constants.hbar * omega)
}

/// Ring nonlinear coupling from the material susceptibility and the
/// cross-sectional overlap `zeta` (1/m), with `omega2 = 2 omega1` and
/// relative permittivities `eps_rel = n^2`.
pub fn nonlinear_coupling(
    chi2: f64,
    zeta: f64,
    radius: f64,
    omega1: f64,
    eps_rel1: f64,
    eps_rel2: f64,
    constants: &PhysicalConstants,
) -> f64 {
    let omega2 = 2.0 * omega1;
    let prefactor = (constants.hbar * omega1 * omega1 * omega2 / (constants.eps0 * 2.0 * PI * radius)).sqrt();
    prefactor * zeta / (eps_rel1 * eps_rel2.sqrt()) * 3.0 * chi2 / (4.0 * 2f64.sqrt())
}

/// Minimum detectable rotation from a minimum detectable fundamental shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationRate {
    pub rad_per_s: f64,
    pub deg_per_hour: f64,
}

impl RotationRate {
    pub fn from_rad_per_s(rad_per_s: f64) -> Self {
        Self {
            rad_per_s,
            deg_per_hour: rad_per_s / DEG_PER_HOUR,
        }
    }
}

pub fn omega_min_from_delta(delta_min: f64, resonator: &ResonatorParams) -> Result<RotationRate, ModelError> {
    non_negative("delta_min", delta_min)?;
    Ok(RotationRate::from_rad_per_s(omega_from_delta(
        delta_min,
        resonator.radius,
        resonator.lambda1,
        resonator.index_n0,
    )))
}
