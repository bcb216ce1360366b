//! Physical parameters, validation, unit system and SI conversions.
//!
//! Simulation units throughout: `ħ = 1`, time in `1/Γ` (`Γ` is the atomic
//! half-linewidth), length in `1/k₀`, momentum in `ħk₀`, energy and
//! temperature in `ħΓ` (i.e. temperatures are `k_B T` in units of `ħΓ`).
//! All paper-style inputs (detuning, pump rate, trap frequency, delay) are
//! quoted in these units; the `SiReference` block carries what is needed to
//! convert times and temperatures back to SI.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reduced Planck constant, J s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const KB_SI: f64 = 1.380_649e-23;
/// Atomic mass unit, kg.
pub const AMU_SI: f64 = 1.660_539_066_60e-27;
/// Speed of light, m/s.
pub const C_SI: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("config line {line}: value for `{key}` is not a number: `{text}`")]
    NotANumber {
        line: usize,
        key: String,
        text: String,
    },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("{field} must be finite")]
    NonFinite { field: &'static str },
    #[error("{field} must be positive")]
    NotPositive { field: &'static str },
    #[error("{field} must be non-negative")]
    Negative { field: &'static str },
    #[error("trap_offset must lie in (-1/2, 1/2] wavelengths, got {0}")]
    TrapOffsetRange(f64),
    #[error("missing SI reference data")]
    MissingSiReference,
}

/// SI-side anchors for unit conversion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SiReference {
    /// Transition wavelength λ, metres.
    pub lambda: f64,
    /// Half-linewidth Γ, rad/s.
    pub gamma: f64,
    /// Atomic mass, kg.
    pub mass: f64,
}

/// Validated physical parameters in simulation units.
///
/// Defaults reproduce the ⁸⁵Rb baseline: `|A|² = 62.5 Γ/(2π)`, `Δ = -10 Γ`,
/// `τ = 0.25/Γ`, `w = 0.7 µm`, with λ = 780.24 nm and Γ = 2π × 3.03 MHz
/// (half the D2 natural linewidth).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PhysicalParams {
    /// Atomic half-linewidth; fixed to 1 by the choice of time unit.
    pub gamma: f64,
    /// Pump detuning Δ = ω_a - ω₀ in units of Γ (negative = red).
    pub detuning: f64,
    /// Atom–field coupling g (continuum normalization), units of √Γ.
    pub coupling_g: f64,
    /// Pump power |A|², photons per unit time, units of Γ.
    pub pump_rate: f64,
    /// Atom–mirror light travel time τ, units of 1/Γ.
    pub delay_tau: f64,
    /// Pump wavenumber; fixed to 1 by the choice of length unit.
    pub k0: f64,
    /// Atom mass in units of ħk₀²/Γ.
    pub mass: f64,
    /// Trap frequency ω_t as a multiple of 2πΓ (the paper quotes e.g. 0.5×2πΓ).
    pub trap_omega: f64,
    /// Trap-center offset x₀′ from the nearest pump node, units of λ.
    pub trap_offset: f64,
    /// Gaussian mode waist w, units of 1/k₀.
    pub waist: f64,
    pub si_reference: SiReference,
}

impl PhysicalParams {
    /// Trap angular frequency ω_t in rad per unit time (units of Γ).
    pub fn trap_omega_rad(&self) -> f64 {
        2.0 * PI * self.trap_omega
    }

    /// Trap spring constant k_t = m ω_t².
    pub fn trap_spring(&self) -> f64 {
        let w = self.trap_omega_rad();
        self.mass * w * w
    }

    /// Pump wavelength in simulation units (2π/k₀).
    pub fn lambda(&self) -> f64 {
        2.0 * PI / self.k0
    }

    /// Pump optical frequency ω₀ in units of Γ; numerically equal to the
    /// speed of light in simulation units since k₀ = 1.
    pub fn omega0(&self) -> f64 {
        2.0 * PI * C_SI / self.si_reference.lambda / self.si_reference.gamma
    }

    /// Trap-center offset from the nearest node as a phase, k₀x₀′.
    pub fn trap_offset_phase(&self) -> f64 {
        self.trap_offset * 2.0 * PI
    }

    /// Convert a temperature in ħΓ/k_B units to kelvin.
    pub fn temperature_to_si(&self, t_sim: f64) -> Result<f64, ConfigError> {
        let r = &self.si_reference;
        if !(r.gamma.is_finite() && r.gamma > 0.0) {
            return Err(ConfigError::MissingSiReference);
        }
        Ok(t_sim * HBAR_SI * r.gamma / KB_SI)
    }

    /// Convert kelvin to ħΓ/k_B units.
    pub fn temperature_from_si(&self, t_kelvin: f64) -> Result<f64, ConfigError> {
        let r = &self.si_reference;
        if !(r.gamma.is_finite() && r.gamma > 0.0) {
            return Err(ConfigError::MissingSiReference);
        }
        Ok(t_kelvin * KB_SI / (HBAR_SI * r.gamma))
    }

    /// Convert a time in 1/Γ units to seconds.
    pub fn time_to_si(&self, t_sim: f64) -> f64 {
        t_sim / self.si_reference.gamma
    }

    /// Non-fatal validity notes (adiabatic-elimination regime and the like).
    pub fn validity_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.detuning.abs() < 5.0 * self.gamma {
            w.push(format!(
                "|detuning| = {:.3} Γ is not large compared to Γ; adiabatic elimination is marginal",
                self.detuning.abs()
            ));
        }
        w
    }
}

/// Parameters derived from `PhysicalParams` by adiabatic elimination of the
/// internal atomic dynamics, plus the discrete-model per-photon rates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DerivedParams {
    /// D(Δ) = Δ/(Δ² + Γ²).
    pub d_delta: f64,
    /// Maximum saturation parameter s = g²|A|²/(Δ² + Γ²).
    pub saturation_s: f64,
    /// Atomic radiative cross-section σ_a = 3λ²/(2π).
    pub sigma_a: f64,
    /// Light shift per photon U₀ = g² D(Δ) δω (discrete model).
    pub light_shift_u0: f64,
    /// Photon scattering rate per photon γ = g² Γ/(Δ²+Γ²) δω.
    pub scatter_gamma: f64,
    /// Pump-mode photon number |A|²/δω for the discrete grid.
    pub pump_photons: f64,
}

/// Derive the adiabatic-elimination quantities.
///
/// `mode_spacing` is the discrete-grid spacing δω used to map the continuum
/// coupling onto per-photon rates. The discretization samples the frequency
/// continuum as α_k = a(ω_k)√δω, which fixes U₀ = g²D(Δ)δω, γ likewise, and
/// the monochromatic pump amplitude |α_pump|² = |A|²/δω. This is the unique
/// choice that reproduces the continuum at both first order — potential
/// depth U₀|α_pump|² = g²D(Δ)|A|² — and second order, where the delayed
/// friction scales as (U₀/δω)·U₀|α_pump|² and therefore also requires
/// U₀/δω = g²D(Δ). Any rescaling of the pair (U₀, |α_pump|²) that preserves
/// only the product changes every back-action effect (friction, capture,
/// steady-state temperature) by the same factor.
pub fn derive(params: &PhysicalParams, mode_spacing: f64) -> Result<DerivedParams, ConfigError> {
    if !(mode_spacing > 0.0) {
        return Err(ConfigError::NotPositive {
            field: "mode_spacing",
        });
    }
    let g2 = params.coupling_g * params.coupling_g;
    let denom = params.detuning * params.detuning + params.gamma * params.gamma;
    let d_delta = params.detuning / denom;
    let lambda = params.lambda();
    Ok(DerivedParams {
        d_delta,
        saturation_s: g2 * params.pump_rate / denom,
        sigma_a: 3.0 * lambda * lambda / (2.0 * PI),
        light_shift_u0: g2 * d_delta * mode_spacing,
        scatter_gamma: g2 * params.gamma / denom * mode_spacing,
        pump_photons: params.pump_rate / mode_spacing,
    })
}

/// Numerical and experiment-level settings resolved from the same config file.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SimSettings {
    /// Number of discrete field modes.
    pub n_modes: usize,
    /// Mode spacing δω in units of Γ.
    pub mode_spacing: f64,
    /// Integrator time step in units of 1/Γ.
    pub dt: f64,
    /// Trajectory end time in units of 1/Γ.
    pub t_end: f64,
    /// Record every n-th step.
    pub sample_every: usize,
    /// Trajectories per ensemble.
    pub n_traj: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            n_modes: 256,
            mode_spacing: 0.1,
            dt: 1e-3,
            t_end: 50.0,
            sample_every: 100,
            n_traj: 64,
        }
    }
}

/// Fully resolved run configuration; this is what `dump-config` emits.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub params: PhysicalParams,
    pub sim: SimSettings,
    pub derived: DerivedParams,
    /// The noise model is an approximation: momentum variance rate 2D(x)
    /// from the lowest-order standing-wave diffusion, rank-1 field noise,
    /// zero momentum–field cross-correlation.
    pub noise_model: String,
}

/// Flat `key = value` config map, `#` starts a comment.
pub type ConfigMap = BTreeMap<String, f64>;

pub const CONFIG_KEYS: &[&str] = &[
    "detuning",
    "pump_rate",
    "delay_tau",
    "trap_omega",
    "trap_offset",
    "waist_um",
    "lambda_nm",
    "gamma_mhz",
    "mass_amu",
    "coupling_g",
    "n_modes",
    "mode_spacing",
    "dt",
    "t_end",
    "sample_every",
    "n_traj",
];

/// Parse the plain-text config format.
pub fn parse_config(text: &str) -> Result<ConfigMap, ConfigError> {
    let mut map = ConfigMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.trim().to_string(),
        })?;
        let key = key.trim().to_string();
        let value = value.trim();
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        let v: f64 = value.parse().map_err(|_| ConfigError::NotANumber {
            line: i + 1,
            key: key.clone(),
            text: value.to_string(),
        })?;
        map.insert(key, v);
    }
    Ok(map)
}

/// Apply a `key=value` override string (the CLI `--set` form) onto a map.
pub fn apply_override(map: &mut ConfigMap, setting: &str) -> Result<(), ConfigError> {
    let (key, value) = setting.split_once('=').ok_or_else(|| ConfigError::Syntax {
        line: 0,
        text: setting.to_string(),
    })?;
    let key = key.trim().to_string();
    if !CONFIG_KEYS.contains(&key.as_str()) {
        return Err(ConfigError::UnknownKey(key));
    }
    let v: f64 = value.trim().parse().map_err(|_| ConfigError::NotANumber {
        line: 0,
        key: key.clone(),
        text: value.trim().to_string(),
    })?;
    map.insert(key, v);
    Ok(())
}

fn get(map: &ConfigMap, key: &str, default: f64) -> f64 {
    map.get(key).copied().unwrap_or(default)
}

fn require_finite(value: f64, field: &'static str) -> Result<f64, ConfigError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::NonFinite { field })
    }
}

fn require_positive(value: f64, field: &'static str) -> Result<f64, ConfigError> {
    let v = require_finite(value, field)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::NotPositive { field })
    }
}

/// Build validated `PhysicalParams` from a config map; every key is optional
/// and defaults to the paper baseline.
pub fn make_params(map: &ConfigMap) -> Result<PhysicalParams, ConfigError> {
    let lambda_si = require_positive(get(map, "lambda_nm", 780.24), "lambda_nm")? * 1e-9;
    let gamma_si = require_positive(get(map, "gamma_mhz", 3.03), "gamma_mhz")? * 2.0 * PI * 1e6;
    let mass_si = require_positive(get(map, "mass_amu", 85.0), "mass_amu")? * AMU_SI;
    let k0_si = 2.0 * PI / lambda_si;

    // Mass in units of ħk₀²/Γ, i.e. fixed by the recoil frequency in Γ units.
    let mass = mass_si * gamma_si / (HBAR_SI * k0_si * k0_si);
    let waist = require_positive(get(map, "waist_um", 0.7), "waist_um")? * 1e-6 * k0_si;

    // g from the waist via 2πg²/Γ = 4σ_a/(πw²) unless overridden.
    let coupling_g = match map.get("coupling_g") {
        Some(&g) => require_positive(g, "coupling_g")?,
        None => {
            let lambda = 2.0 * PI; // simulation units
            let sigma_a = 3.0 * lambda * lambda / (2.0 * PI);
            (2.0 * sigma_a / (PI * PI * waist * waist)).sqrt()
        }
    };

    let pump_rate = require_finite(get(map, "pump_rate", 62.5 / (2.0 * PI)), "pump_rate")?;
    if pump_rate < 0.0 {
        return Err(ConfigError::Negative { field: "pump_rate" });
    }
    let delay_tau = require_positive(get(map, "delay_tau", 0.25), "delay_tau")?;
    let detuning = require_finite(get(map, "detuning", -10.0), "detuning")?;
    let trap_omega = require_finite(get(map, "trap_omega", 0.5), "trap_omega")?;
    if trap_omega < 0.0 {
        return Err(ConfigError::Negative {
            field: "trap_omega",
        });
    }
    let trap_offset = require_finite(get(map, "trap_offset", -3.0 / 16.0), "trap_offset")?;
    if !(trap_offset > -0.5 && trap_offset <= 0.5) {
        return Err(ConfigError::TrapOffsetRange(trap_offset));
    }

    Ok(PhysicalParams {
        gamma: 1.0,
        detuning,
        coupling_g,
        pump_rate,
        delay_tau,
        k0: 1.0,
        mass,
        trap_omega,
        trap_offset,
        waist,
        si_reference: SiReference {
            lambda: lambda_si,
            gamma: gamma_si,
            mass: mass_si,
        },
    })
}

/// Resolve numerical settings from the same map.
pub fn make_sim_settings(map: &ConfigMap) -> Result<SimSettings, ConfigError> {
    let d = SimSettings::default();
    let n_modes = require_positive(get(map, "n_modes", d.n_modes as f64), "n_modes")? as usize;
    let mode_spacing = require_positive(get(map, "mode_spacing", d.mode_spacing), "mode_spacing")?;
    let dt = require_positive(get(map, "dt", d.dt), "dt")?;
    let t_end = require_finite(get(map, "t_end", d.t_end), "t_end")?;
    if t_end < 0.0 {
        return Err(ConfigError::Negative { field: "t_end" });
    }
    let sample_every =
        require_positive(get(map, "sample_every", d.sample_every as f64), "sample_every")? as usize;
    let n_traj = require_positive(get(map, "n_traj", d.n_traj as f64), "n_traj")? as usize;
    Ok(SimSettings {
        n_modes,
        mode_spacing,
        dt,
        t_end,
        sample_every,
        n_traj,
    })
}

/// Resolve the full run configuration from a config map.
pub fn resolve(map: &ConfigMap) -> Result<RunConfig, ConfigError> {
    let params = make_params(map)?;
    let sim = make_sim_settings(map)?;
    let derived = derive(&params, sim.mode_spacing)?;
    Ok(RunConfig {
        params,
        sim,
        derived,
        noise_model: "momentum:2D(x) lowest-order; field:rank-1 sqrt(gamma dt) f_k; cross:0"
            .to_string(),
    })
}
