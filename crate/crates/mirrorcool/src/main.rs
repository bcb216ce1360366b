//! Command-line front end: resolves a configuration, runs one of the
//! analytic or Monte-Carlo protocols, writes CSV tables plus a JSON run
//! manifest, and prints a human summary with SI conversions.

use std::error::Error;
use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use mirrorcool::analytic;
use mirrorcool::ensemble::{
    capture_scan, friction_curve, steady_state_scan, EnsembleSpec, InitialMomenta,
};
use mirrorcool::output::RunWriter;
use mirrorcool::params::{
    apply_override, parse_config, resolve, ConfigMap, PhysicalParams, RunConfig,
};
use mirrorcool::sde::{run_trajectory, ModeGrid, NoiseSpec, SystemState, TrapSpec};

#[derive(Parser)]
#[command(
    name = "mirrorcool",
    version,
    about = "Cooling of a trapped two-level atom by the retarded dipole force of a \
             retroflected beam: closed-form scans and a multimode stochastic simulator"
)]
struct Cli {
    /// Plain-text config file of `key = value` lines (# starts a comment).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key, e.g. --set detuning=-20 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Master random seed; reruns with the same seed reproduce every table
    /// byte for byte.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Worker threads (default: MIRRORCOOL_WORKERS env var, else all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory for CSV tables and the run manifest.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the fully resolved configuration (including derived quantities)
    /// as JSON on stdout.
    DumpConfig,
    /// Tabulate the closed-form force, friction, diffusion and steady-state
    /// temperature formulas over one wavelength of trap positions.
    AnalyticScan {
        /// Number of positions across one wavelength.
        #[arg(long, default_value_t = 257)]
        points: usize,
    },
    /// Simulated heating rate d(p_max²)/dt versus initial peak momentum,
    /// next to the oscillation-averaged analytic prediction.
    FrictionCurve {
        /// Number of momentum points.
        #[arg(long, default_value_t = 8)]
        points: usize,
        /// Largest peak momentum (ħk₀); default 0.9× the analytic capture
        /// range at the configured trap.
        #[arg(long)]
        p0_max: Option<f64>,
    },
    /// Capture momentum versus trap frequency: bisect the sign change of the
    /// simulated heating rate, next to the analytic capture range.
    CaptureScan {
        /// Trap frequencies as multiples of 2πΓ, comma separated.
        #[arg(long = "omega", value_delimiter = ',', default_values_t = vec![0.25, 0.5, 0.75, 1.0])]
        omegas: Vec<f64>,
    },
    /// Steady-state temperature: scan initial temperatures, fit the cooling
    /// rate curve dT/dt(T), and locate its stable root.
    SteadyState {
        /// Initial temperatures in µK, comma separated; default brackets the
        /// analytic prediction.
        #[arg(long = "t0-uk", value_delimiter = ',')]
        t0_uk: Option<Vec<f64>>,
    },
    /// Detuning |Δ| at which the retarded-dipole and Doppler steady-state
    /// temperatures cross (at fixed saturation).
    Crossover,
    /// Integrate and dump a single trajectory.
    Trajectory {
        /// Initial momentum (ħk₀); the atom starts at the trap center.
        #[arg(long, default_value_t = 0.0)]
        p0: f64,
        /// Enable the stochastic terms (default: deterministic).
        #[arg(long)]
        noise: bool,
    },
}

fn error_chain(err: &dyn Error) -> String {
    let mut out = err.to_string();
    let mut src = err.source();
    while let Some(e) = src {
        out.push_str(": ");
        out.push_str(&e.to_string());
        src = e.source();
    }
    out.replace('\n', " ")
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", error_chain(e.as_ref()));
        std::process::exit(1);
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Box<dyn Error>> {
    let mut map = match &cli.config {
        Some(path) => parse_config(&fs::read_to_string(path)?)?,
        None => ConfigMap::new(),
    };
    for setting in &cli.set {
        apply_override(&mut map, setting)?;
    }
    Ok(resolve(&map)?)
}

fn configure_workers(cli: &Cli) -> Result<(), Box<dyn Error>> {
    let n = match cli.workers {
        Some(n) => Some(n),
        None => match std::env::var("MIRRORCOOL_WORKERS") {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                format!("MIRRORCOOL_WORKERS must be a positive integer, got `{v}`")
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err("worker count must be at least 1".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

/// Format a simulation-unit temperature with its µK equivalent.
fn fmt_temp(p: &PhysicalParams, t: f64) -> String {
    match p.temperature_to_si(t) {
        Ok(si) => format!("{t:.4} ħΓ/k_B ({:.1} µK)", si * 1e6),
        Err(_) => format!("{t:.4} ħΓ/k_B"),
    }
}

/// Format a simulation-unit time with its ms equivalent.
fn fmt_time(p: &PhysicalParams, t: f64) -> String {
    format!("{t:.3} 1/Γ ({:.4} ms)", p.time_to_si(t) * 1e3)
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    configure_workers(&cli)?;
    let config = load_config(&cli)?;
    for w in config.params.validity_warnings() {
        eprintln!("warning: {w}");
    }
    match &cli.command {
        Command::DumpConfig => {
            println!("{}", serde_json::to_string_pretty(&config)?);
            Ok(())
        }
        Command::AnalyticScan { points } => analytic_scan(&cli, &config, *points),
        Command::FrictionCurve { points, p0_max } => {
            friction_curve_cmd(&cli, &config, *points, *p0_max)
        }
        Command::CaptureScan { omegas } => capture_scan_cmd(&cli, &config, omegas),
        Command::SteadyState { t0_uk } => steady_state_cmd(&cli, &config, t0_uk.as_deref()),
        Command::Crossover => crossover_cmd(&config),
        Command::Trajectory { p0, noise } => trajectory_cmd(&cli, &config, *p0, *noise),
    }
}

fn analytic_scan(cli: &Cli, config: &RunConfig, points: usize) -> Result<(), Box<dyn Error>> {
    if points < 2 {
        return Err("analytic-scan needs at least 2 points".into());
    }
    let p = &config.params;
    let omega = p.trap_omega_rad();
    let lambda = p.lambda();
    let mut rows = Vec::with_capacity(points);
    let mut best: Option<(f64, f64)> = None; // (x0 in λ, T_combined)
    for i in 0..points {
        let frac = -0.5 + (i as f64 + 1.0) / points as f64; // (-1/2, 1/2] in λ
        let x0 = frac * lambda;
        let temps = analytic::steady_state_temperatures(p, x0, omega);
        if temps.valid && best.map_or(true, |(_, t)| temps.t_combined < t) {
            best = Some((frac, temps.t_combined));
        }
        rows.push(vec![
            frac,
            analytic::static_force(p, x0).value,
            analytic::friction_longitudinal(p, x0, 1.0, true).value,
            analytic::heating_coefficient(p, x0),
            analytic::diffusion_coefficient(p, x0),
            temps.t_mirror,
            temps.t_doppler,
            temps.t_combined,
        ]);
    }
    let mut writer = RunWriter::new(&cli.out, "analytic-scan", config, cli.seed)?;
    writer.write_table(
        "analytic_scan",
        "closed-form position scan over one wavelength of trap-center offsets",
        &[
            ("x0", "lambda"),
            ("static_force", "hbar k0 Gamma"),
            ("friction_per_v", "hbar k0^2"),
            ("heating_coeff", "Gamma"),
            ("diffusion", "hbar^2 k0^2 Gamma"),
            ("t_mirror", "hbar Gamma / k_B"),
            ("t_doppler", "hbar Gamma / k_B"),
            ("t_combined", "hbar Gamma / k_B"),
        ],
        &rows,
    )?;
    let manifest = writer.finish()?;
    println!(
        "analytic-scan: {points} positions at trap frequency {} x 2 pi Gamma",
        p.trap_omega
    );
    match best {
        Some((frac, t)) => println!(
            "lowest combined steady-state temperature {} at x0 = {frac:.4} lambda",
            fmt_temp(p, t)
        ),
        None => println!("no cooling position in this scan (all temperatures invalid)"),
    }
    println!("wrote {}", manifest.display());
    Ok(())
}

fn base_spec(config: &RunConfig, seed: u64) -> EnsembleSpec {
    EnsembleSpec {
        n_traj: config.sim.n_traj,
        init: InitialMomenta::Fixed(0.0),
        noise: NoiseSpec::off(),
        master_seed: seed,
    }
}

fn friction_curve_cmd(
    cli: &Cli,
    config: &RunConfig,
    points: usize,
    p0_max: Option<f64>,
) -> Result<(), Box<dyn Error>> {
    if points == 0 {
        return Err("friction-curve needs at least 1 point".into());
    }
    let p = &config.params;
    let omega = p.trap_omega_rad();
    if !(omega > 0.0) {
        return Err("friction-curve requires trap_omega > 0".into());
    }
    let x0 = p.trap_offset_phase() / p.k0;
    let p_max = match p0_max {
        Some(v) if v > 0.0 => v,
        Some(v) => return Err(format!("p0_max must be positive, got {v}").into()),
        None => match analytic::capture_range(p, omega, x0) {
            Ok(pc) => 0.9 * pc,
            Err(_) => p.mass * omega / p.k0,
        },
    };
    let p0_grid: Vec<f64> = (1..=points)
        .map(|i| p_max * i as f64 / points as f64)
        .collect();
    let start = Instant::now();
    let curve = friction_curve(
        p,
        &config.derived,
        &config.sim,
        &base_spec(config, cli.seed),
        &p0_grid,
    )?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let mut rows = Vec::with_capacity(curve.len());
    let mut ratio_sum = 0.0;
    let mut ratio_n = 0usize;
    for pt in &curve {
        let predicted = analytic::heating_rate_avg(p, x0, pt.p0, omega)?;
        if predicted != 0.0 {
            ratio_sum += pt.rate_p2 / predicted;
            ratio_n += 1;
        }
        rows.push(vec![pt.p0, pt.p0_sq, pt.rate_p2, pt.rate_p2_se, predicted]);
    }
    let mut writer = RunWriter::new(&cli.out, "friction-curve", config, cli.seed)?;
    writer.timing("ensembles", elapsed);
    writer.write_table(
        "friction_curve",
        "envelope heating rate d(p_max^2)/dt vs initial peak momentum, simulated and analytic",
        &[
            ("p0", "hbar k0"),
            ("p0_sq", "hbar^2 k0^2"),
            ("rate_sim", "hbar^2 k0^2 Gamma"),
            ("rate_sim_se", "hbar^2 k0^2 Gamma"),
            ("rate_analytic", "hbar^2 k0^2 Gamma"),
        ],
        &rows,
    )?;
    let manifest = writer.finish()?;
    println!(
        "friction-curve: {points} momenta up to {p_max:.2} hbar k0, {} trajectories each, {elapsed:.0} ms",
        config.sim.n_traj
    );
    if ratio_n > 0 {
        println!(
            "mean simulated/analytic rate ratio: {:.3}",
            ratio_sum / ratio_n as f64
        );
    }
    println!("wrote {}", manifest.display());
    Ok(())
}

fn capture_scan_cmd(cli: &Cli, config: &RunConfig, omegas: &[f64]) -> Result<(), Box<dyn Error>> {
    if omegas.is_empty() {
        return Err("capture-scan needs at least one trap frequency".into());
    }
    let p = &config.params;
    let x0 = p.trap_offset_phase() / p.k0;
    let start = Instant::now();
    let entries = capture_scan(p, &config.sim, &base_spec(config, cli.seed), omegas)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let mut rows = Vec::with_capacity(entries.len());
    for e in &entries {
        let analytic_pc = analytic::capture_range(p, 2.0 * PI * e.trap_omega, x0)
            .unwrap_or(f64::NAN);
        rows.push(vec![
            e.trap_omega,
            e.capture_momentum.unwrap_or(f64::NAN),
            e.capture_temperature.unwrap_or(f64::NAN),
            analytic_pc,
        ]);
    }
    let mut writer = RunWriter::new(&cli.out, "capture-scan", config, cli.seed)?;
    writer.timing("bisections", elapsed);
    writer.write_table(
        "capture_scan",
        "largest still-cooled initial momentum vs trap frequency, simulated and analytic",
        &[
            ("trap_omega", "2 pi Gamma"),
            ("pc_sim", "hbar k0"),
            ("tc_sim", "hbar Gamma / k_B"),
            ("pc_analytic", "hbar k0"),
        ],
        &rows,
    )?;
    let manifest = writer.finish()?;
    println!("capture-scan: {} trap frequencies, {elapsed:.0} ms", omegas.len());
    for (e, row) in entries.iter().zip(&rows) {
        match e.capture_momentum {
            Some(pc) => println!(
                "omega_t = {:.3} x 2 pi Gamma: p_c = {pc:.2} hbar k0 ({}), analytic {:.2}",
                e.trap_omega,
                fmt_temp(p, e.capture_temperature.unwrap_or(f64::NAN)),
                row[3]
            ),
            None => println!(
                "omega_t = {:.3} x 2 pi Gamma: no sign change found",
                e.trap_omega
            ),
        }
    }
    println!("wrote {}", manifest.display());
    Ok(())
}

fn steady_state_cmd(
    cli: &Cli,
    config: &RunConfig,
    t0_uk: Option<&[f64]>,
) -> Result<(), Box<dyn Error>> {
    let p = &config.params;
    let omega = p.trap_omega_rad();
    let x0 = p.trap_offset_phase() / p.k0;
    let t0_grid: Vec<f64> = match t0_uk {
        Some(list) => list
            .iter()
            .map(|&uk| p.temperature_from_si(uk * 1e-6))
            .collect::<Result<_, _>>()?,
        None => {
            let temps = analytic::steady_state_temperatures(p, x0, omega);
            if !temps.valid {
                return Err(format!(
                    "no analytic prediction to bracket ({}); pass --t0-uk explicitly",
                    temps.reason.unwrap_or_default()
                )
                .into());
            }
            [0.5, 0.8, 1.1, 1.5, 2.0]
                .iter()
                .map(|f| f * temps.t_combined)
                .collect()
        }
    };
    if t0_grid.len() < 5 {
        return Err("steady-state needs at least 5 initial temperatures".into());
    }
    let spec = EnsembleSpec {
        noise: NoiseSpec::on(),
        ..base_spec(config, cli.seed)
    };
    let start = Instant::now();
    let fit = steady_state_scan(p, &config.derived, &config.sim, &spec, &t0_grid)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let rows: Vec<Vec<f64>> = fit
        .points
        .iter()
        .map(|&(t0, rate, se)| {
            let predicted = fit.coeffs[0] + fit.coeffs[1] * t0 + fit.coeffs[2] * t0 * t0;
            vec![t0, rate, se, predicted]
        })
        .collect();
    let mut writer = RunWriter::new(&cli.out, "steady-state", config, cli.seed)?;
    writer.timing("ensembles", elapsed);
    writer.write_table(
        "steady_state_points",
        "temperature rate dT/dt vs initial temperature, with the quadratic fit",
        &[
            ("t0", "hbar Gamma / k_B"),
            ("rate", "hbar Gamma^2 / k_B"),
            ("rate_se", "hbar Gamma^2 / k_B"),
            ("rate_fit", "hbar Gamma^2 / k_B"),
        ],
        &rows,
    )?;
    writer.write_table(
        "steady_state_fit",
        "stable root and coefficients of the fitted rate curve dT/dt = c0 + c1 T + c2 T^2",
        &[
            ("t_ss", "hbar Gamma / k_B"),
            ("t_ss_se", "hbar Gamma / k_B"),
            ("c0", "hbar Gamma^2 / k_B"),
            ("c1", "Gamma"),
            ("c2", "Gamma k_B / (hbar Gamma)"),
            ("cooling_time", "1/Gamma"),
        ],
        &[vec![
            fit.t_ss,
            fit.t_ss_se,
            fit.coeffs[0],
            fit.coeffs[1],
            fit.coeffs[2],
            fit.cooling_time.unwrap_or(f64::NAN),
        ]],
    )?;
    let manifest = writer.finish()?;
    println!(
        "steady-state: {} initial temperatures x {} trajectories, {elapsed:.0} ms",
        t0_grid.len(),
        config.sim.n_traj
    );
    println!(
        "steady-state temperature: {} +/- {}",
        fmt_temp(p, fit.t_ss),
        fmt_temp(p, fit.t_ss_se)
    );
    if let Some(tc) = fit.cooling_time {
        println!("1/e cooling time: {}", fmt_time(p, tc));
    }
    println!("wrote {}", manifest.display());
    Ok(())
}

fn crossover_cmd(config: &RunConfig) -> Result<(), Box<dyn Error>> {
    let p = &config.params;
    let omega = p.trap_omega_rad();
    let x0 = p.trap_offset_phase() / p.k0;
    let delta = analytic::crossover_detuning(p, x0, omega)?;
    let temps = analytic::steady_state_temperatures(p, x0, omega);
    println!(
        "retarded-dipole temperature equals the Doppler temperature at |detuning| = {delta:.3} Gamma"
    );
    println!(
        "at the configured detuning ({} Gamma): T_mirror = {}, T_doppler = {}",
        p.detuning,
        fmt_temp(p, temps.t_mirror),
        fmt_temp(p, temps.t_doppler)
    );
    Ok(())
}

fn trajectory_cmd(
    cli: &Cli,
    config: &RunConfig,
    p0: f64,
    noise: bool,
) -> Result<(), Box<dyn Error>> {
    let p = &config.params;
    let grid = ModeGrid::new(p, config.sim.n_modes, config.sim.mode_spacing);
    let trap = TrapSpec {
        spring: p.trap_spring(),
        center: p.trap_offset_phase(),
    };
    let init = SystemState::pump_only(&grid, config.derived.pump_photons, trap.center, p0);
    let noise_spec = if noise { NoiseSpec::on() } else { NoiseSpec::off() };
    let start = Instant::now();
    let traj = run_trajectory(
        init,
        &grid,
        p,
        &config.derived,
        &trap,
        &config.sim,
        &noise_spec,
        cli.seed,
    )?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let rows: Vec<Vec<f64>> = traj
        .samples
        .iter()
        .map(|s| vec![s.t, s.x, s.p, s.photon_total, s.field_re, s.field_im])
        .collect();
    let mut writer = RunWriter::new(&cli.out, "trajectory", config, cli.seed)?;
    writer.timing("integrate", elapsed);
    if traj.capped {
        writer.warn("t_end capped at the mode-grid recurrence time".to_string());
    }
    writer.write_table(
        "trajectory",
        "single-trajectory phase-space and field samples (x is the offset from the reference node)",
        &[
            ("t", "1/Gamma"),
            ("x", "1/k0"),
            ("p", "hbar k0"),
            ("photon_total", "photons"),
            ("field_at_atom_re", "sqrt(photons)"),
            ("field_at_atom_im", "sqrt(photons)"),
        ],
        &rows,
    )?;
    let manifest = writer.finish()?;
    let first = traj.samples.first().expect("nonempty trajectory");
    let last = traj.samples.last().expect("nonempty trajectory");
    println!(
        "trajectory: {} samples to t = {}, noise {}, {elapsed:.0} ms",
        traj.samples.len(),
        fmt_time(p, last.t),
        if noise { "on" } else { "off" }
    );
    println!(
        "p: {:.3} -> {:.3} hbar k0; photons: {:.6} -> {:.6}",
        first.p, last.p, first.photon_total, last.photon_total
    );
    if traj.capped {
        println!("note: t_end capped at the mode-grid recurrence time");
    }
    println!("wrote {}", manifest.display());
    Ok(())
}
