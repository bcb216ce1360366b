//! Closed-form results for the delayed-dipole cooling scheme: static force,
//! friction in all flavors, trapped-atom heating rate, capture range,
//! diffusion and steady-state temperatures.
//!
//! Position arguments `x0` are the trap-center offset x₀′ from the nearest
//! pump node, in simulation length units (1/k₀). The absolute atom–mirror
//! distance is x₀ = cτ + x₀′ with cτ snapped to the nearest node, so every
//! sub-wavelength factor (sin 4k₀x₀ and friends) can be evaluated from x₀′
//! alone; only the non-delay term of the full friction force needs the
//! absolute distance. Trap frequencies `omega_t` are angular, in Γ units
//! (the paper's "0.5 × 2πΓ" is `omega_t = 0.5 * 2π`).

use std::f64::consts::PI;

use thiserror::Error;

use crate::params::PhysicalParams;
use crate::specfun::{sinc, spatial_average_integral, J1_FIRST_ZERO};

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("unbounded excursion: zero trap frequency with nonzero peak momentum")]
    UnboundedExcursion,
    #[error("no finite capture range at this position")]
    NoCaptureRange,
    #[error("no crossing in scan window [{0} Γ, {1} Γ]")]
    NoCrossover(f64, f64),
}

/// A force value together with its named physical contributions.
#[derive(Debug, Clone)]
pub struct ForceResult {
    /// Total force, units of ħk₀Γ.
    pub value: f64,
    /// Named contributions summing to `value`.
    pub breakdown: Vec<(&'static str, f64)>,
}

impl ForceResult {
    fn from_terms(terms: Vec<(&'static str, f64)>) -> Self {
        let value = terms.iter().map(|(_, v)| v).sum();
        ForceResult {
            value,
            breakdown: terms,
        }
    }
}

/// Steady-state temperatures, units of ħΓ/k_B.
#[derive(Debug, Clone)]
pub struct TemperatureResult {
    pub t_mirror: f64,
    pub t_doppler: f64,
    pub t_combined: f64,
    /// False in heating regions (a temperature is negative) or where the
    /// mirror-cooling formula divides by zero.
    pub valid: bool,
    pub reason: Option<String>,
}

/// Absolute atom–mirror distance: cτ snapped to the nearest pump node plus
/// the sub-wavelength offset.
pub fn absolute_position(p: &PhysicalParams, x0: f64) -> f64 {
    let c = p.omega0() / p.k0;
    (c * p.delay_tau * p.k0 / PI).round() * PI / p.k0 + x0
}

fn g2d(p: &PhysicalParams) -> f64 {
    let g2 = p.coupling_g * p.coupling_g;
    g2 * p.detuning / (p.detuning * p.detuning + p.gamma * p.gamma)
}

fn saturation(p: &PhysicalParams) -> f64 {
    p.coupling_g * p.coupling_g * p.pump_rate / (p.detuning * p.detuning + p.gamma * p.gamma)
}

/// Static dipole force on an atom at rest: pump-interaction term plus the
/// lowest-order back-action correction.
pub fn static_force(p: &PhysicalParams, x0: f64) -> ForceResult {
    let xi = p.k0 * x0;
    let gd = g2d(p);
    let pref = p.pump_rate * gd * p.k0;
    let pump = pref * (2.0 * xi).sin();
    let s2 = xi.sin() * xi.sin();
    let c2 = xi.cos() * xi.cos();
    let back_action = -pref * PI / 2.0 * gd * s2 * (4.0 * c2 - 1.0);
    ForceResult::from_terms(vec![("pump-interaction", pump), ("back-action", back_action)])
}

/// Longitudinal friction on an atom moving at constant velocity `v`.
///
/// With `approx = false` both terms are returned: the instantaneous
/// (non-delay) part and the dominant retarded part; `approx = true` keeps
/// only the retarded term, which the rest of the theory builds on.
pub fn friction_longitudinal(p: &PhysicalParams, x0: f64, v: f64, approx: bool) -> ForceResult {
    let xi = p.k0 * x0;
    let gd2 = g2d(p) * g2d(p);
    let k2 = p.k0 * p.k0;
    let delay = -2.0 * PI * k2 * v * p.delay_tau * p.pump_rate * gd2 * (4.0 * xi).sin();
    if approx {
        return ForceResult::from_terms(vec![("delay", delay)]);
    }
    let c = p.omega0() / p.k0;
    let s = (2.0 * p.k0 * absolute_position(p, x0)).sin();
    let non_delay = 2.0 * PI * p.k0 / c * v * p.pump_rate * gd2 * s * s;
    ForceResult::from_terms(vec![("non-delay", non_delay), ("delay", delay)])
}

/// Retarded longitudinal friction rewritten in saturation/cross-section
/// parameters; valid for |Δ| ≫ Γ.
pub fn friction_familiar(p: &PhysicalParams, x0: f64, v: f64) -> ForceResult {
    let xi = p.k0 * x0;
    let lambda = p.lambda();
    let sigma_a = 3.0 * lambda * lambda / (2.0 * PI);
    let value = -4.0 * v * saturation(p) * p.gamma * sigma_a / (PI * p.waist * p.waist)
        * p.k0
        * p.k0
        * p.delay_tau
        * (4.0 * xi).sin();
    ForceResult::from_terms(vec![("delay (familiar form)", value)])
}

/// Friction transverse to the pump for a Gaussian mode g(r) = g·exp(-r²/w²),
/// evaluated at transverse offset `r0`.
pub fn friction_transverse(p: &PhysicalParams, x0: f64, v: f64, r0: f64) -> ForceResult {
    let xi = p.k0 * x0;
    let w2 = p.waist * p.waist;
    let g_r = p.coupling_g * (-r0 * r0 / w2).exp();
    let g_prime = -2.0 * r0 / w2 * g_r;
    let denom = p.detuning * p.detuning + p.gamma * p.gamma;
    let factor = 2.0 * g_r * g_prime * p.detuning / denom;
    let value =
        -4.0 * PI * v * p.delay_tau * p.pump_rate * factor * factor * xi.sin().powi(3) * xi.cos();
    ForceResult::from_terms(vec![("delay (transverse)", value)])
}

/// Retarded friction for an atom oscillating in the trap at peak velocity
/// `v_m`: the τ → τ·sinc(2ω_tτ) substitution of the untrapped form.
pub fn friction_trapped(p: &PhysicalParams, x0: f64, v_m: f64, omega_t: f64) -> ForceResult {
    let xi = p.k0 * x0;
    let gd2 = g2d(p) * g2d(p);
    let tau_eff = p.delay_tau * sinc(2.0 * omega_t * p.delay_tau);
    let value =
        -2.0 * PI * p.k0 * p.k0 * v_m * tau_eff * p.pump_rate * gd2 * (4.0 * xi).sin();
    ForceResult::from_terms(vec![("delay (trapped)", value)])
}

/// Heating coefficient Υ in dp²/dt = Υp² (equivalently dT/dt = ΥT) for the
/// untrapped retarded friction; negative in cooling regions.
pub fn heating_coefficient(p: &PhysicalParams, x0: f64) -> f64 {
    let xi = p.k0 * x0;
    let gd2 = g2d(p) * g2d(p);
    -4.0 * PI / p.mass * p.k0 * p.k0 * p.delay_tau * p.pump_rate * gd2 * (4.0 * xi).sin()
}

/// Oscillation-averaged ⟨dp²/dt⟩ for an atom in the trap with peak momentum
/// `p0`; includes the finite spatial excursion x_m = p0/(mω_t) and the
/// delay periodicity. Normalized so the small-x_m limit is half the
/// untrapped (sinc-corrected) rate.
pub fn heating_rate_avg(
    p: &PhysicalParams,
    x0: f64,
    p0: f64,
    omega_t: f64,
) -> Result<f64, AnalyticError> {
    if omega_t <= 0.0 {
        if p0 > 0.0 {
            return Err(AnalyticError::UnboundedExcursion);
        }
        return Ok(0.0);
    }
    let x_m = p0 / (p.mass * omega_t);
    let a = 4.0 * p.k0 * x0;
    let b = 4.0 * p.k0 * x_m;
    let gd2 = g2d(p) * g2d(p);
    let tau_eff = p.delay_tau * sinc(2.0 * omega_t * p.delay_tau);
    Ok(-2.0 * p.k0 * p.k0 * p0 * p0 / p.mass
        * tau_eff
        * p.pump_rate
        * gd2
        * spatial_average_integral(a, b))
}

/// Largest peak momentum that is still cooled in the trap.
///
/// At x₀′ = -3λ/16 the averaged rate is ∝ J₁(4k₀x_m), so the edge is the
/// first Bessel zero, p₀ = (j₁,₁/4)·mω_t/k₀ ≈ 0.958·mω_t/k₀. Elsewhere the
/// smallest positive root of the averaged rate is bracketed and bisected.
pub fn capture_range(p: &PhysicalParams, omega_t: f64, x0: f64) -> Result<f64, AnalyticError> {
    assert!(omega_t > 0.0, "capture_range requires omega_t > 0");
    let xi = p.k0 * x0;
    if (xi + 3.0 * PI / 8.0).abs() < 1e-12 {
        return Ok(J1_FIRST_ZERO / 4.0 * p.mass * omega_t / p.k0);
    }
    // Cooling near the trap center requires sin(4k₀x₀) > 0.
    let a = 4.0 * xi;
    if a.sin() <= 0.0 {
        return Err(AnalyticError::NoCaptureRange);
    }
    let rate_sign = |p0: f64| spatial_average_integral(a, 4.0 * p0 / (p.mass * omega_t));
    let p_min = 1e-6;
    let p_max = 20.0 * p.mass * omega_t / p.k0;
    // Scan for the first sign change, then bisect.
    let n = 2000;
    let mut lo = p_min;
    let mut f_lo = rate_sign(lo);
    let mut hi = None;
    for i in 1..=n {
        let x = p_min + (p_max - p_min) * i as f64 / n as f64;
        let f = rate_sign(x);
        if f_lo > 0.0 && f <= 0.0 {
            hi = Some(x);
            break;
        }
        lo = x;
        f_lo = f;
    }
    let mut hi = hi.ok_or(AnalyticError::NoCaptureRange)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate_sign(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Lowest-order momentum diffusion of the standing-wave pump,
/// D = ħ²k₀²Γs[cos²(k₀x) + (2/5)sin²(k₀x)].
pub fn diffusion_coefficient(p: &PhysicalParams, x: f64) -> f64 {
    let xi = p.k0 * x;
    let s = saturation(p);
    let c2 = xi.cos() * xi.cos();
    p.k0 * p.k0 * p.gamma * s * (c2 + 0.4 * (1.0 - c2))
}

/// Doppler temperature for red detuning, k_BT_D = -ħ(Δ²+Γ²)/(2Δ).
pub fn doppler_temperature(p: &PhysicalParams) -> f64 {
    -(p.detuning * p.detuning + p.gamma * p.gamma) / (2.0 * p.detuning)
}

fn mirror_temperature(p: &PhysicalParams, x0: f64, omega_t: f64) -> f64 {
    let xi = p.k0 * x0;
    let g2 = p.coupling_g * p.coupling_g;
    let c2 = xi.cos() * xi.cos();
    let denom = (2.0 * omega_t * p.delay_tau).sin() * (4.0 * xi).sin();
    1.0 / (5.0 * PI) * omega_t * p.gamma / g2 * (2.0 + 3.0 * c2) / denom
}

/// Steady-state temperatures: delayed-dipole cooling, Doppler cooling, and
/// their harmonic combination 1/T = 1/T_M + 1/T_D.
pub fn steady_state_temperatures(
    p: &PhysicalParams,
    x0: f64,
    omega_t: f64,
) -> TemperatureResult {
    let xi = p.k0 * x0;
    let denom = (2.0 * omega_t * p.delay_tau).sin() * (4.0 * xi).sin();
    let t_doppler = doppler_temperature(p);
    if denom == 0.0 {
        return TemperatureResult {
            t_mirror: f64::INFINITY,
            t_doppler,
            t_combined: t_doppler,
            valid: false,
            reason: Some("sin(2ω_tτ)·sin(4k₀x₀) = 0: no delayed-dipole friction here".into()),
        };
    }
    let t_mirror = mirror_temperature(p, x0, omega_t);
    let t_combined = 1.0 / (1.0 / t_mirror + 1.0 / t_doppler);
    let valid = t_mirror > 0.0 && t_doppler > 0.0;
    TemperatureResult {
        t_mirror,
        t_doppler,
        t_combined,
        valid,
        reason: if valid {
            None
        } else {
            Some("negative temperature: heating region".into())
        },
    }
}

/// Approximate delayed-dipole temperature at the point of maximum friction,
/// k_BT_M ≈ (ħ/τ)·πw²/(8σ_a).
pub fn steady_state_temperature_approx(p: &PhysicalParams) -> f64 {
    let lambda = p.lambda();
    let sigma_a = 3.0 * lambda * lambda / (2.0 * PI);
    PI * p.waist * p.waist / (8.0 * sigma_a * p.delay_tau)
}

/// |Δ| at which the delayed-dipole and Doppler steady-state temperatures
/// cross, holding the saturation parameter fixed as Δ varies (the pump rate
/// rescales with Δ²+Γ², which neither temperature depends on).
pub fn crossover_detuning(
    p: &PhysicalParams,
    x0: f64,
    omega_t: f64,
) -> Result<f64, AnalyticError> {
    let (d_min, d_max) = (1.0 * p.gamma, 100.0 * p.gamma);
    let t_m = mirror_temperature(p, x0, omega_t);
    let t_d = |abs_delta: f64| (abs_delta * abs_delta + p.gamma * p.gamma) / (2.0 * abs_delta);
    if !(t_m > 0.0) || t_m < t_d(d_min) || t_m > t_d(d_max) {
        return Err(AnalyticError::NoCrossover(d_min, d_max));
    }
    let (mut lo, mut hi) = (d_min, d_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_d(mid) < t_m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
