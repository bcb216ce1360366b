//! Monte-Carlo ensemble orchestration: heating-rate estimation, friction
//! curves, capture-range bisection, and steady-state temperature extraction.
//!
//! Trajectories are integrated in parallel; every per-trajectory random
//! stream is keyed by (master seed, trajectory index), and aggregation runs
//! in trajectory-index order with compensated summation, so results do not
//! depend on scheduling or completion order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::params::{DerivedParams, PhysicalParams, SimSettings};
use crate::sde::{run_trajectory, ModeGrid, NoiseSpec, SdeError, SystemState, Trajectory, TrapSpec};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("need at least 2 trajectories, got {0}")]
    TooFewTrajectories(usize),
    #[error("initial temperature must be nonnegative, got {0}")]
    NegativeTemperature(f64),
    #[error("trajectory {index} failed: {source}")]
    Trajectory { index: usize, source: SdeError },
    #[error(
        "measurement window [{lo}, {hi}] shorter than half a trap period; \
         increase t_end or lower the trap frequency"
    )]
    WindowTooShort { lo: f64, hi: f64 },
    #[error("no zero crossing of the heating rate for p0 in [{lo}, {hi}]")]
    NoCrossing { lo: f64, hi: f64 },
    #[error(
        "no stable positive root of the fitted rate curve \
         dT/dt = {c0:.6e} + {c1:.6e}·T + {c2:.6e}·T²"
    )]
    NoRoot { c0: f64, c1: f64, c2: f64 },
}

/// How initial momenta are drawn.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum InitialMomenta {
    /// All trajectories share the same oscillation amplitude: peak momentum
    /// p0, uniformly random trap phase (untrapped: all start at the trap
    /// center with momentum p0).
    Fixed(f64),
    /// Thermal ensemble: p ~ Normal(0, √(m·k_B·T0)), T0 in ħΓ/k_B.
    Thermal(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    pub init: InitialMomenta,
    pub noise: NoiseSpec,
    pub master_seed: u64,
}

/// Aggregated ensemble observables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    /// Common sample-time grid (1/Γ).
    pub times: Vec<f64>,
    /// ⟨p²⟩(t) over the ensemble (ħ²k₀²).
    pub mean_p2: Vec<f64>,
    /// Standard error of ⟨p²⟩(t).
    pub se_p2: Vec<f64>,
    /// k_B·T(t) = ⟨p²⟩/m (ħΓ).
    pub temperature: Vec<f64>,
    /// Squared-momentum-amplitude envelope ⟨p² + m·k_t·(x−x_t)² +
    /// 2m·ΔU_dip(x)⟩(t) = 2m⟨E⟩ − const: free of the trap-cycle oscillation
    /// of p² itself, this is what the rate is fit to.
    pub envelope: Vec<f64>,
    /// Heating rate of the envelope, d(p_max²)/dt = 2m·d⟨E⟩/dt. This is the
    /// quantity the oscillation-averaged analytic rate predicts; untrapped
    /// the envelope reduces to p² and this is d⟨p²⟩/dt.
    pub rate_p2: f64,
    pub rate_p2_se: f64,
    /// dT/dt for T = ⟨p²⟩/m: over a trap cycle ⟨p²⟩ = envelope/2, so this is
    /// rate_p2/(2m) when trapped and rate_p2/m otherwise.
    pub rate_temp: f64,
    pub rate_temp_se: f64,
    /// Regression window actually used (snapped to half trap periods).
    pub window: (f64, f64),
    /// Per-trajectory terminal flags: true if the trajectory's final trap
    /// energy exceeds twice its initial energy plus a ħΓ/2 margin.
    pub escaped: Vec<bool>,
    /// True if any trajectory was capped at the mode-grid recurrence time.
    pub capped: bool,
}

/// Per-trajectory seed: splitmix64 of the master seed and index, so streams
/// are decorrelated and independent of execution order.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Initial (position, momentum) for one trajectory. `Fixed` places the atom
/// on the trap orbit of peak momentum p0 at a uniformly random phase.
/// `Thermal` draws the Gibbs ensemble of the trap — momentum N(0, √(mT0))
/// and, when trapped, position N(center, √(T0/m)/ω). Both start the ensemble
/// phase-mixed, so no coherent breathing pollutes the rate fit.
fn initial_condition(
    spec: &EnsembleSpec,
    params: &PhysicalParams,
    center: f64,
    index: usize,
) -> (f64, f64) {
    // A dedicated stream, distinct from the trajectory's noise stream,
    // keyed by the same (seed, index) pair.
    let seed = trajectory_seed(spec.master_seed ^ 0x5157_3A0B_11C0_FFEE, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = params.trap_omega_rad();
    match spec.init {
        InitialMomenta::Fixed(p0) => {
            if omega > 0.0 && p0 != 0.0 {
                let theta: f64 = rand_distr::Uniform::new(0.0, 2.0 * PI).sample(&mut rng);
                let x_m = p0 / (params.mass * omega);
                (center + x_m * theta.sin(), p0 * theta.cos())
            } else {
                (center, p0)
            }
        }
        InitialMomenta::Thermal(t0) => {
            let unit = Normal::new(0.0, 1.0).unwrap();
            let p = (params.mass * t0).sqrt() * unit.sample(&mut rng);
            let x = if omega > 0.0 {
                center + (t0 / params.mass).sqrt() / omega * unit.sample(&mut rng)
            } else {
                center
            };
            (x, p)
        }
    }
}

/// Integrate the ensemble and collect trajectories in index order.
fn integrate(
    params: &PhysicalParams,
    derived: &DerivedParams,
    sim: &SimSettings,
    spec: &EnsembleSpec,
) -> Result<(Vec<Trajectory>, TrapSpec), EnsembleError> {
    if spec.n_traj < 2 {
        return Err(EnsembleError::TooFewTrajectories(spec.n_traj));
    }
    if let InitialMomenta::Thermal(t0) = spec.init {
        if t0 < 0.0 {
            return Err(EnsembleError::NegativeTemperature(t0));
        }
    }
    let grid = ModeGrid::new(params, sim.n_modes, sim.mode_spacing);
    let trap = TrapSpec {
        spring: params.trap_spring(),
        center: params.trap_offset_phase(),
    };
    let trajectories: Result<Vec<Trajectory>, EnsembleError> = (0..spec.n_traj)
        .into_par_iter()
        .map(|i| {
            let (x0, p0) = initial_condition(spec, params, trap.center, i);
            let init = SystemState::pump_only(&grid, derived.pump_photons, x0, p0);
            run_trajectory(
                init,
                &grid,
                params,
                derived,
                &trap,
                sim,
                &spec.noise,
                trajectory_seed(spec.master_seed, i as u64),
            )
            .map_err(|source| EnsembleError::Trajectory { index: i, source })
        })
        .collect();
    Ok((trajectories?, trap))
}

/// Weighted linear regression y = a + b·t; returns (b, se_b).
///
/// With informative per-point standard errors the weights are 1/se²; for a
/// deterministic ensemble (all se = 0, e.g. noiseless fixed-p0 runs) the fit
/// is unweighted and the slope error comes from the residual variance.
fn regress_rate(times: &[f64], y: &[f64], se: &[f64]) -> (f64, f64) {
    let informative = se.iter().any(|s| *s > 0.0);
    let floor = se.iter().cloned().fold(0.0, f64::max) * 1e-6;
    let w: Vec<f64> = if informative {
        se.iter().map(|s| 1.0 / (s * s).max(floor * floor)).collect()
    } else {
        vec![1.0; times.len()]
    };
    let sw = kahan_sum(w.iter().cloned());
    let tbar = kahan_sum(w.iter().zip(times).map(|(w, t)| w * t)) / sw;
    let ybar = kahan_sum(w.iter().zip(y).map(|(w, y)| w * y)) / sw;
    let stt = kahan_sum(w.iter().zip(times).map(|(w, t)| w * (t - tbar) * (t - tbar)));
    let sty = kahan_sum(
        w.iter()
            .zip(times)
            .zip(y)
            .map(|((w, t), y)| w * (t - tbar) * (y - ybar)),
    );
    let b = sty / stt;
    let se_b = if informative {
        (1.0 / stt).sqrt()
    } else {
        let a = ybar - b * tbar;
        let n = times.len() as f64;
        if n > 2.0 {
            let ss = kahan_sum(
                times
                    .iter()
                    .zip(y)
                    .map(|(t, y)| (y - a - b * t) * (y - a - b * t)),
            );
            (ss / (n - 2.0) / stt).sqrt()
        } else {
            0.0
        }
    };
    (b, se_b)
}

/// Aggregate a set of equally-gridded trajectories into ensemble statistics.
/// Exposed separately so order-insensitivity can be verified directly.
pub fn aggregate(
    trajectories: &[Trajectory],
    params: &PhysicalParams,
    derived: &DerivedParams,
    sim: &SimSettings,
    trap: &TrapSpec,
) -> Result<EnsembleStats, EnsembleError> {
    let n = trajectories.len() as f64;
    let n_samples = trajectories[0].samples.len();
    let times: Vec<f64> = trajectories[0].samples.iter().map(|s| s.t).collect();
    // 2m × mechanical energy, up to a constant: kinetic + trap + the static
    // dipole potential U₀|α|²sin²(k₀x). Including the dipole term keeps the
    // trap-cycle exchange with the optical potential out of the envelope.
    // Subtracting the zero-mean kick compensator removes the random walk the
    // diffusion kicks imprint on the envelope without biasing the drift.
    let u_depth = derived.light_shift_u0 * derived.pump_photons;
    let envelope_of = |s: &crate::sde::Sample| {
        let dip = u_depth * (s.x.sin().powi(2) - trap.center.sin().powi(2));
        s.p * s.p - s.noise_comp
            + params.mass * trap.spring * (s.x - trap.center) * (s.x - trap.center)
            + 2.0 * params.mass * dip
    };
    let mut mean_p2 = Vec::with_capacity(n_samples);
    let mut se_p2 = Vec::with_capacity(n_samples);
    let mut mean_env = Vec::with_capacity(n_samples);
    let mut se_env = Vec::with_capacity(n_samples);
    for j in 0..n_samples {
        let m = kahan_sum(trajectories.iter().map(|tr| {
            let p = tr.samples[j].p;
            p * p
        })) / n;
        let var = kahan_sum(trajectories.iter().map(|tr| {
            let d = tr.samples[j].p * tr.samples[j].p - m;
            d * d
        })) / (n - 1.0).max(1.0);
        mean_p2.push(m);
        se_p2.push((var / n).sqrt());
        let me = kahan_sum(trajectories.iter().map(|tr| envelope_of(&tr.samples[j]))) / n;
        let var_e = kahan_sum(trajectories.iter().map(|tr| {
            let d = envelope_of(&tr.samples[j]) - me;
            d * d
        })) / (n - 1.0).max(1.0);
        mean_env.push(me);
        se_env.push((var_e / n).sqrt());
    }
    let temperature: Vec<f64> = mean_p2.iter().map(|p2| p2 / params.mass).collect();

    let escaped: Vec<bool> = trajectories
        .iter()
        .map(|tr| {
            let energy = |s: &crate::sde::Sample| {
                s.p * s.p / (2.0 * params.mass)
                    + 0.5 * trap.spring * (s.x - trap.center) * (s.x - trap.center)
            };
            let first = energy(tr.samples.first().unwrap());
            let last = energy(tr.samples.last().unwrap());
            last > 2.0 * first + 0.5
        })
        .collect();

    // Measurement window: after the field transient (round trip plus one
    // linewidth), before the discrete-grid echo, snapped to an integer
    // number of half trap periods so the oscillating p² averages out.
    let recurrence = 2.0 * PI / sim.mode_spacing;
    let lo = 2.0 * params.delay_tau + 1.0;
    let mut hi = times.last().copied().unwrap_or(0.0).min(0.8 * recurrence);
    let omega = params.trap_omega_rad();
    if omega > 0.0 {
        let half = PI / omega;
        let k = ((hi - lo) / half).floor();
        if k < 1.0 {
            return Err(EnsembleError::WindowTooShort { lo, hi });
        }
        hi = lo + k * half;
    } else if hi <= lo {
        return Err(EnsembleError::WindowTooShort { lo, hi });
    }
    let idx: Vec<usize> = (0..n_samples)
        .filter(|&j| times[j] >= lo && times[j] <= hi + 1e-12)
        .collect();
    if idx.len() < 3 {
        return Err(EnsembleError::WindowTooShort { lo, hi });
    }
    let wt: Vec<f64> = idx.iter().map(|&j| times[j]).collect();
    let wy: Vec<f64> = idx.iter().map(|&j| mean_env[j]).collect();
    let ws: Vec<f64> = idx.iter().map(|&j| se_env[j]).collect();
    let (rate_p2, rate_p2_se) = regress_rate(&wt, &wy, &ws);
    // T = ⟨p²⟩/m; over a trap cycle ⟨p²⟩ = envelope/2, untrapped the
    // envelope *is* p².
    let temp_div = if trap.spring > 0.0 { 2.0 } else { 1.0 } * params.mass;

    Ok(EnsembleStats {
        times,
        mean_p2,
        se_p2,
        temperature,
        envelope: mean_env,
        rate_p2,
        rate_p2_se,
        rate_temp: rate_p2 / temp_div,
        rate_temp_se: rate_p2_se / temp_div,
        window: (lo, hi),
        escaped,
        capped: trajectories.iter().any(|t| t.capped),
    })
}

/// Run `n_traj` trajectories and estimate the initial heating rate by
/// weighted linear regression of ⟨p²⟩(t) over the measurement window.
/// Deterministic for a given master seed.
pub fn run_ensemble(
    params: &PhysicalParams,
    derived: &DerivedParams,
    sim: &SimSettings,
    spec: &EnsembleSpec,
) -> Result<EnsembleStats, EnsembleError> {
    let (trajectories, trap) = integrate(params, derived, sim, spec)?;
    aggregate(&trajectories, params, derived, sim, &trap)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FrictionPoint {
    pub p0: f64,
    pub p0_sq: f64,
    pub rate_p2: f64,
    pub rate_p2_se: f64,
}

/// Heating rate dp²/dt versus squared initial momentum (noiseless protocol:
/// the atom starts at the trap center with momentum +p0).
pub fn friction_curve(
    params: &PhysicalParams,
    derived: &DerivedParams,
    sim: &SimSettings,
    base: &EnsembleSpec,
    p0_grid: &[f64],
) -> Result<Vec<FrictionPoint>, EnsembleError> {
    p0_grid
        .iter()
        .map(|&p0| {
            let spec = EnsembleSpec {
                init: InitialMomenta::Fixed(p0),
                noise: NoiseSpec::off(),
                ..*base
            };
            let stats = run_ensemble(params, derived, sim, &spec)?;
            Ok(FrictionPoint {
                p0,
                p0_sq: p0 * p0,
                rate_p2: stats.rate_p2,
                rate_p2_se: stats.rate_p2_se,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CaptureEntry {
    /// Trap frequency as a multiple of 2πΓ.
    pub trap_omega: f64,
    /// Largest initial momentum that still cools (ħk₀); None if the heating
    /// rate never changes sign in the scan window.
    pub capture_momentum: Option<f64>,
    /// Temperature equivalent p_c²/(m·k_B) in ħΓ.
    pub capture_temperature: Option<f64>,
}

/// For each trap frequency, bisect on the initial momentum for the zero
/// crossing of the heating rate (noiseless protocol).
pub fn capture_scan(
    params: &PhysicalParams,
    sim: &SimSettings,
    base: &EnsembleSpec,
    omega_grid: &[f64],
) -> Result<Vec<CaptureEntry>, EnsembleError> {
    omega_grid
        .iter()
        .map(|&trap_omega| {
            let mut p = *params;
            p.trap_omega = trap_omega;
            let d = crate::params::derive(&p, sim.mode_spacing).expect("valid spacing");
            let rate_at = |p0: f64| -> Result<f64, EnsembleError> {
                let spec = EnsembleSpec {
                    init: InitialMomenta::Fixed(p0),
                    noise: NoiseSpec::off(),
                    ..*base
                };
                Ok(run_ensemble(&p, &d, sim, &spec)?.rate_p2)
            };
            // Scale of the expected crossing: the trap-averaged rate changes
            // sign when the oscillation amplitude 4k₀x_m reaches the first
            // Bessel-J₁ zero, i.e. p_c ~ j₁₁·mω_t/(4k₀).
            let scale = crate::specfun::J1_FIRST_ZERO * p.mass * p.trap_omega_rad() / (4.0 * p.k0);
            let mut lo = 0.2 * scale;
            let mut hi = lo;
            let mut r_lo = rate_at(lo)?;
            let mut found = false;
            for _ in 0..12 {
                hi *= 1.5;
                let r_hi = rate_at(hi)?;
                if r_lo < 0.0 && r_hi >= 0.0 {
                    found = true;
                    break;
                }
                lo = hi;
                r_lo = r_hi;
            }
            if !found {
                return Ok(CaptureEntry {
                    trap_omega,
                    capture_momentum: None,
                    capture_temperature: None,
                });
            }
            for _ in 0..14 {
                let mid = 0.5 * (lo + hi);
                if rate_at(mid)? < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let pc = 0.5 * (lo + hi);
            Ok(CaptureEntry {
                trap_omega,
                capture_momentum: Some(pc),
                capture_temperature: Some(pc * pc / p.mass),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteadyStateFit {
    /// Fitted steady-state temperature (ħΓ/k_B): smallest positive root of
    /// the quadratic rate curve with negative slope (stable equilibrium).
    pub t_ss: f64,
    /// 1σ uncertainty propagated from the fit-parameter covariance.
    pub t_ss_se: f64,
    /// Quadratic coefficients of dT/dt = c0 + c1·T + c2·T².
    pub coeffs: [f64; 3],
    /// 1/e cooling time from the linear coefficient, −1/c1 (1/Γ); None if
    /// c1 ≥ 0.
    pub cooling_time: Option<f64>,
    /// (T0, dT/dt, se) per scanned initial temperature.
    pub points: Vec<(f64, f64, f64)>,
}

fn solve3(mut m: [[f64; 4]; 3]) -> [f64; 3] {
    // Gaussian elimination with partial pivoting on a 3x4 augmented matrix.
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    [m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]]
}

fn invert3(a: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut inv = [[0.0; 3]; 3];
    for col in 0..3 {
        let mut aug = [[0.0; 4]; 3];
        for r in 0..3 {
            aug[r][..3].copy_from_slice(&a[r]);
            aug[r][3] = if r == col { 1.0 } else { 0.0 };
        }
        let x = solve3(aug);
        for r in 0..3 {
            inv[r][col] = x[r];
        }
    }
    inv
}

/// Scan initial temperatures, estimate dT/dt for each, and locate the
/// steady state as the stable root of a weighted quadratic fit.
pub fn steady_state_scan(
    params: &PhysicalParams,
    derived: &DerivedParams,
    sim: &SimSettings,
    base: &EnsembleSpec,
    t0_grid: &[f64],
) -> Result<SteadyStateFit, EnsembleError> {
    assert!(t0_grid.len() >= 5, "need at least 5 initial temperatures");
    let mut points = Vec::with_capacity(t0_grid.len());
    for &t0 in t0_grid {
        let spec = EnsembleSpec {
            init: InitialMomenta::Thermal(t0),
            noise: NoiseSpec::on(),
            ..*base
        };
        let stats = run_ensemble(params, derived, sim, &spec)?;
        points.push((t0, stats.rate_temp, stats.rate_temp_se));
    }
    fit_rate_curve(points)
}

/// Weighted quadratic fit of (T0, dT/dt, se) points and stable-root
/// extraction; the steady state is the smallest positive root with
/// negative slope.
pub fn fit_rate_curve(points: Vec<(f64, f64, f64)>) -> Result<SteadyStateFit, EnsembleError> {
    // Weighted least squares for dT/dt = c0 + c1·T + c2·T².
    let max_se = points.iter().map(|p| p.2).fold(0.0, f64::max);
    let weight = |se: f64| {
        if max_se > 0.0 {
            1.0 / (se * se).max(1e-12 * max_se * max_se)
        } else {
            1.0
        }
    };
    let mut xtw_x = [[0.0; 3]; 3];
    let mut xtw_y = [0.0; 3];
    for &(t, y, se) in &points {
        let w = weight(se);
        let basis = [1.0, t, t * t];
        for r in 0..3 {
            for c in 0..3 {
                xtw_x[r][c] += w * basis[r] * basis[c];
            }
            xtw_y[r] += w * basis[r] * y;
        }
    }
    let mut aug = [[0.0; 4]; 3];
    for r in 0..3 {
        aug[r][..3].copy_from_slice(&xtw_x[r]);
        aug[r][3] = xtw_y[r];
    }
    let c = solve3(aug);
    let cov = invert3(xtw_x);
    let no_root = EnsembleError::NoRoot {
        c0: c[0],
        c1: c[1],
        c2: c[2],
    };

    // Roots of c0 + c1 T + c2 T².
    let mut roots = Vec::new();
    if c[2].abs() < 1e-30 {
        if c[1].abs() > 0.0 {
            roots.push(-c[0] / c[1]);
        }
    } else {
        let disc = c[1] * c[1] - 4.0 * c[2] * c[0];
        if disc >= 0.0 {
            let sq = disc.sqrt();
            roots.push((-c[1] - sq) / (2.0 * c[2]));
            roots.push((-c[1] + sq) / (2.0 * c[2]));
        }
    }
    let t_ss = roots
        .into_iter()
        .filter(|&t| t > 0.0 && c[1] + 2.0 * c[2] * t < 0.0)
        .fold(f64::INFINITY, f64::min);
    if !t_ss.is_finite() {
        return Err(no_root);
    }
    // Propagate the root uncertainty: with f(T; c) = 0,
    // ∂T/∂c_i = −T^i / f'(T), so var(T) = gᵀ·cov·g.
    let fp = c[1] + 2.0 * c[2] * t_ss;
    let g = [-1.0 / fp, -t_ss / fp, -t_ss * t_ss / fp];
    let mut var = 0.0;
    for r in 0..3 {
        for col in 0..3 {
            var += g[r] * cov[r][col] * g[col];
        }
    }
    Ok(SteadyStateFit {
        t_ss,
        t_ss_se: var.max(0.0).sqrt(),
        coeffs: c,
        cooling_time: if c[1] < 0.0 { Some(-1.0 / c[1]) } else { None },
        points,
    })
}
