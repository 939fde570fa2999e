//! Subcommand implementations.
//!
//! Each command merges its flag overrides into a copy of the run config
//! first, so the provenance header on every output records the values that
//! actually took effect, then loads inputs, runs the library, and writes its
//! artifacts through [`OutputContext`].

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use ecmkit::hppc::generate_profile;
use ecmkit::param_fit::{identifiability_report, FitProblem};
use ecmkit::thermal::{cosimulate, CylMesh};
use ecmkit::{
    segment_pulses, ColumnMap, CurrentVoltageTrace, EcmState, Error, Result, SocParameterTable,
    Termination,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{file_error, RunConfig};
use crate::report::OutputContext;
use crate::{Cli, FitOcvArgs, FitParamsArgs, HppcGenArgs, SimulateArgs, ThermalArgs};

fn load_trace(path: &Path) -> Result<CurrentVoltageTrace> {
    let file = File::open(path).map_err(|err| file_error(path, err))?;
    CurrentVoltageTrace::read_csv(BufReader::new(file), &ColumnMap::default())
}

/// Excitation for commands that drive the model: an explicit trace file if
/// one is configured, otherwise a profile generated from `[profile]`.
fn excitation(cfg: &RunConfig) -> Result<CurrentVoltageTrace> {
    if let Some(path) = cfg.inputs.trace_csv.as_deref() {
        return load_trace(path);
    }
    match &cfg.profile {
        Some(spec) => generate_profile(spec),
        None => Err(Error::Config(
            "no excitation: pass --trace, set [inputs] trace_csv, or add a [profile] section"
                .into(),
        )),
    }
}

/// Measured trace for the fitting commands. Unlike [`excitation`] there is
/// no generated fallback: fits need a voltage column.
fn measured_trace(cfg: &RunConfig) -> Result<CurrentVoltageTrace> {
    let path = cfg.inputs.trace_csv.as_deref().ok_or_else(|| {
        Error::Config("no input trace: pass --trace or set [inputs] trace_csv".into())
    })?;
    load_trace(path)
}

fn load_params(cfg: &RunConfig) -> Result<SocParameterTable> {
    let path = cfg.inputs.params_csv.as_deref().ok_or_else(|| {
        Error::Config("no component table: pass --params or set [inputs] params_csv".into())
    })?;
    let file = File::open(path).map_err(|err| file_error(path, err))?;
    SocParameterTable::from_csv(BufReader::new(file))
}

/// Default integrator step cap: the profile's typical sample interval,
/// capped at 2.5 s so coarse traces still resolve fast branch dynamics.
fn default_dt(profile: &CurrentVoltageTrace) -> f64 {
    profile.median_interval_s().unwrap_or(2.5).min(2.5)
}

/// Adds zero-mean Gaussian noise (Box–Muller over the seeded stream), so a
/// given seed always produces the same synthetic measurement.
fn add_noise(voltages: &mut [f64], sigma_v: f64, seed: u64) {
    if sigma_v <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in voltages.iter_mut() {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        *v += sigma_v * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    }
}

/// Rising edges of the thresholded current — the number of (possibly
/// truncated) pulses actually present in the samples.
fn count_pulses(currents: &[f64], threshold_a: f64) -> usize {
    let mut n = 0;
    let mut high = false;
    for &i in currents {
        let now = i > threshold_a;
        n += usize::from(now && !high);
        high = now;
    }
    n
}

pub fn hppc_gen(cli: &Cli, cfg: &RunConfig, args: &HppcGenArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    let mut spec = cfg.profile.unwrap_or_default();
    if let Some(v) = args.amps {
        spec.amplitude_a = v;
    }
    if let Some(v) = args.freq {
        spec.frequency_hz = v;
    }
    if let Some(v) = args.duty {
        spec.duty_cycle = v;
    }
    if let Some(v) = args.duration {
        spec.duration_s = v;
    }
    if let Some(v) = args.dt {
        spec.sample_interval_s = v;
    }
    if let Some(v) = args.phase {
        spec.phase = v.into();
    }
    cfg.profile = Some(spec);

    let profile = generate_profile(&spec)?;
    let ctx = OutputContext::new("hppc-gen", cli.seed, cli.out.as_deref(), &cfg, cli.quiet)?;
    let (path, mut writer) = ctx.create_commented("profile.csv")?;
    profile.write_csv(&mut writer)?;
    writer.flush()?;

    let pulses = count_pulses(profile.currents_a(), spec.amplitude_a / 2.0);
    ctx.note(format!(
        "wrote {}: {} samples over {:.1} s, {} pulses of {:.1} s every {:.1} s",
        path.display(),
        profile.len(),
        profile.duration_s(),
        pulses,
        spec.duty_cycle / spec.frequency_hz,
        1.0 / spec.frequency_hz,
    ));
    Ok(())
}

pub fn simulate(cli: &Cli, cfg: &RunConfig, args: &SimulateArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(p) = &args.trace {
        cfg.inputs.trace_csv = Some(p.clone());
    }
    if let Some(p) = &args.params {
        cfg.inputs.params_csv = Some(p.clone());
    }
    if let Some(v) = args.initial_soc {
        cfg.simulate.initial_soc = v;
    }
    if let Some(v) = args.noise_mv {
        cfg.simulate.noise_mv = v;
    }
    if args.plot_script {
        cfg.simulate.plot_script = true;
    }

    let spec = cfg.cell_spec()?;
    let poly = cfg.ocv_polynomial()?;
    let table = load_params(&cfg)?;
    let profile = excitation(&cfg)?;
    let dt_max = cfg.simulate.dt_max_s.unwrap_or_else(|| default_dt(&profile));
    let initial = EcmState::at_rest(cfg.simulate.initial_soc);
    let sim = ecmkit::simulate(&profile, &spec, &table, &poly, &initial, dt_max)?;

    let clean = sim.trace.voltages_v().expect("simulation always writes voltages");
    let mut written = clean.to_vec();
    add_noise(&mut written, cfg.simulate.noise_mv * 1e-3, cli.seed);

    let ctx = OutputContext::new("simulate", cli.seed, cli.out.as_deref(), &cfg, cli.quiet)?;
    let (trace_path, mut writer) = ctx.create_commented("sim_trace.csv")?;
    writeln!(writer, "time_s,current_A,voltage_V,soc")?;
    for k in 0..sim.trace.len() {
        writeln!(
            writer,
            "{},{},{},{}",
            sim.trace.times_s()[k],
            sim.trace.currents_a()[k],
            written[k],
            sim.soc[k]
        )?;
    }
    writer.flush()?;

    #[derive(Serialize)]
    struct Summary {
        termination: Termination,
        final_soc: f64,
        /// Minimum of the noise-free model voltage, V.
        min_voltage_v: f64,
        samples: usize,
        duration_s: f64,
        noise_mv: f64,
        seed: u64,
    }
    let summary = Summary {
        termination: sim.termination,
        final_soc: sim.final_state.soc,
        min_voltage_v: clean.iter().copied().fold(f64::INFINITY, f64::min),
        samples: sim.trace.len(),
        duration_s: sim.trace.duration_s(),
        noise_mv: cfg.simulate.noise_mv,
        seed: cli.seed,
    };
    ctx.write_json("sim_summary.json", &summary)?;

    if cfg.simulate.plot_script {
        let (_, mut writer) = ctx.create_commented("sim_plot.gp")?;
        writeln!(writer, "set datafile separator \",\"")?;
        writeln!(writer, "set xlabel \"time (s)\"")?;
        writeln!(writer, "set ylabel \"voltage (V)\"")?;
        writeln!(writer, "set y2label \"SOC\"")?;
        writeln!(writer, "set y2tics")?;
        writeln!(writer, "set y2range [0:1]")?;
        writeln!(
            writer,
            "plot \"sim_trace.csv\" using 1:3 axes x1y1 with lines title \"terminal voltage\", \\"
        )?;
        writeln!(writer, "     \"sim_trace.csv\" using 1:4 axes x1y2 with lines title \"SOC\"")?;
        writer.flush()?;
    }

    ctx.note(format!(
        "wrote {}: {} samples, final SOC {:.4}",
        trace_path.display(),
        summary.samples,
        summary.final_soc,
    ));
    Ok(())
}

pub fn fit_ocv(cli: &Cli, cfg: &RunConfig, args: &FitOcvArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(p) = &args.trace {
        cfg.inputs.trace_csv = Some(p.clone());
    }
    if let Some(v) = args.degree {
        cfg.fit_ocv.degree = v;
    }
    if let Some(v) = args.initial_soc {
        cfg.fit_ocv.initial_soc = v;
    }
    if let Some(v) = args.threshold {
        cfg.fit_ocv.threshold_a = Some(v);
    }

    let spec = cfg.cell_spec()?;
    let trace = measured_trace(&cfg)?;
    let threshold = cfg.fit_ocv.threshold_a.unwrap_or_else(|| trace.max_abs_current_a() / 2.0);
    cfg.fit_ocv.threshold_a = Some(threshold);

    let seg = segment_pulses(&trace, threshold)?;
    let samples = ecmkit::extract_ocv_points(&trace, &seg, &spec, cfg.fit_ocv.initial_soc)?;
    let report = ecmkit::fit_polynomial(&samples, cfg.fit_ocv.degree)?;

    let ctx = OutputContext::new("fit-ocv", cli.seed, cli.out.as_deref(), &cfg, cli.quiet)?;
    let (points_path, mut writer) = ctx.create_commented("ocv_points.csv")?;
    writeln!(writer, "soc,ocv_V,source_pulse,deviated")?;
    for p in &samples.points {
        writeln!(writer, "{},{},{},{}", p.soc, p.ocv_v, p.source_pulse, p.deviated)?;
    }
    writer.flush()?;

    #[derive(Serialize)]
    struct Report<'a> {
        /// Highest degree first.
        coefficients: &'a [f64],
        r_squared: f64,
        residual_rms_v: f64,
        n_points: usize,
        n_excluded_short: usize,
        degree: usize,
        threshold_a: f64,
        n_pulses: usize,
    }
    let json_path = ctx.write_json(
        "ocv_fit.json",
        &Report {
            coefficients: &report.coefficients,
            r_squared: report.r_squared,
            residual_rms_v: report.residual_rms_v,
            n_points: report.n_points,
            n_excluded_short: samples.n_excluded_short,
            degree: cfg.fit_ocv.degree,
            threshold_a: threshold,
            n_pulses: seg.len(),
        },
    )?;
    ctx.note(format!(
        "wrote {} and {}: {} points, r² = {:.6}, rms {:.3} mV",
        points_path.display(),
        json_path.display(),
        report.n_points,
        report.r_squared,
        report.residual_rms_v * 1e3,
    ));
    Ok(())
}

pub fn fit_params(cli: &Cli, cfg: &RunConfig, args: &FitParamsArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(p) = &args.trace {
        cfg.inputs.trace_csv = Some(p.clone());
    }
    if let Some(v) = args.breakpoints {
        cfg.fit_params.n_breakpoints = v;
    }
    if let Some(v) = args.max_iterations {
        cfg.fit_params.max_iterations = v;
    }
    if let Some(p) = &args.initial_table {
        cfg.fit_params.initial_table_csv = Some(p.clone());
    }

    let spec = cfg.cell_spec()?;
    let poly = cfg.ocv_polynomial()?;
    let trace = measured_trace(&cfg)?;

    let n = cfg.fit_params.n_breakpoints;
    if n == 0 {
        return Err(Error::Config("n_breakpoints must be at least 1".into()));
    }
    let mut problem = FitProblem::new(trace, poly, spec)?;
    problem.breakpoints = (1..=n).map(|k| k as f64 / n as f64).collect();
    problem.max_iterations = cfg.fit_params.max_iterations;
    problem.strategy = cfg.fit_params.strategy;
    if let Some(path) = &cfg.fit_params.initial_table_csv {
        let file = File::open(path).map_err(|err| file_error(path, err))?;
        problem.initial_table = Some(SocParameterTable::from_csv(BufReader::new(file))?);
    }

    let result = ecmkit::fit(&problem)?;
    let ident = identifiability_report(&problem, &result)?;

    let ctx = OutputContext::new("fit-params", cli.seed, cli.out.as_deref(), &cfg, cli.quiet)?;
    let (table_path, mut writer) = ctx.create_commented("params_fit.csv")?;
    result.table.to_csv(&mut writer)?;
    writer.flush()?;

    #[derive(Serialize)]
    struct WeakEntry {
        soc: f64,
        component: &'static str,
    }
    #[derive(Serialize)]
    struct Report<'a> {
        rms_error_v: f64,
        max_error_v: f64,
        iterations: usize,
        converged: bool,
        truncated: bool,
        /// Indexed like the breakpoint grid; null where the trace never
        /// visits the breakpoint.
        per_breakpoint_rms_v: &'a [f64],
        weakly_identified: Vec<WeakEntry>,
        n_weak: usize,
        sensitivity_floor_v: f64,
    }
    let weak: Vec<WeakEntry> = ident
        .entries
        .iter()
        .filter(|e| e.weakly_identified)
        .map(|e| WeakEntry { soc: e.soc, component: e.component.label() })
        .collect();
    let json_path = ctx.write_json(
        "params_fit.json",
        &Report {
            rms_error_v: result.rms_error_v,
            max_error_v: result.max_error_v,
            iterations: result.iterations,
            converged: result.converged,
            truncated: result.truncated,
            per_breakpoint_rms_v: &result.per_breakpoint_rms_v,
            n_weak: weak.len(),
            weakly_identified: weak,
            sensitivity_floor_v: ident.floor_v,
        },
    )?;
    ctx.note(format!(
        "wrote {} and {}: rms {:.3} mV over {} breakpoints, {} weakly identified",
        table_path.display(),
        json_path.display(),
        result.rms_error_v * 1e3,
        n,
        ident.n_weak(),
    ));
    Ok(())
}

pub fn thermal(cli: &Cli, cfg: &RunConfig, args: &ThermalArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(p) = &args.trace {
        cfg.inputs.trace_csv = Some(p.clone());
    }
    if let Some(p) = &args.params {
        cfg.inputs.params_csv = Some(p.clone());
    }
    if let Some(v) = args.n_r {
        cfg.thermal.n_r = v;
    }
    if let Some(v) = args.n_z {
        cfg.thermal.n_z = v;
    }
    if let Some(v) = args.dt {
        cfg.thermal.dt_s = v;
    }

    let spec = cfg.cell_spec()?;
    let poly = cfg.ocv_polynomial()?;
    let table = load_params(&cfg)?;
    let profile = excitation(&cfg)?;
    let mesh = CylMesh::for_cell(&spec, cfg.thermal.n_r, cfg.thermal.n_z)?;
    let result = cosimulate(
        &profile,
        &spec,
        &table,
        &poly,
        &mesh,
        &cfg.thermal.props,
        &cfg.thermal.boundary,
        cfg.thermal.dt_s,
    )?;

    let ctx = OutputContext::new("thermal", cli.seed, cli.out.as_deref(), &cfg, cli.quiet)?;
    let (trace_path, mut writer) = ctx.create_commented("thermal_trace.csv")?;
    result.write_trace_csv(&mut writer)?;
    writer.flush()?;

    let (_, mut writer) = ctx.create_commented("thermal_field.csv")?;
    result.final_field().write_csv(&mesh, &mut writer)?;
    writer.flush()?;

    // VTK owns its first bytes (a format magic line), so the provenance for
    // this one lives in the summary JSON instead of a comment header.
    let (_, mut writer) = ctx.create_raw("thermal_field.vtk")?;
    result.final_field().write_vtk(&mesh, &mut writer)?;
    writer.flush()?;

    #[derive(Serialize)]
    struct Summary {
        rise_k: f64,
        final_t_avg_k: f64,
        /// Hottest minus coldest cell at the final snapshot, K.
        end_spread_k: f64,
        energy_source_j: f64,
        energy_loss_j: f64,
        energy_stored_j: f64,
        n_windows: usize,
        termination: Termination,
    }
    let summary = Summary {
        rise_k: result.rise_k(),
        final_t_avg_k: *result.t_avg_k.last().expect("at least the initial snapshot"),
        end_spread_k: result.t_max_k.last().unwrap() - result.t_min_k.last().unwrap(),
        energy_source_j: result.energy_source_j,
        energy_loss_j: result.energy_loss_j,
        energy_stored_j: result.energy_stored_j(&mesh, &cfg.thermal.props),
        n_windows: result.times_s.len() - 1,
        termination: result.electrical.termination,
    };
    let rise = summary.rise_k;
    let spread = summary.end_spread_k;
    ctx.write_json("thermal_summary.json", &summary)?;
    ctx.note(format!(
        "wrote {}: peak rise {:.2} K, end spread {:.3} K",
        trace_path.display(),
        rise,
        spread,
    ));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_counting_tracks_rising_edges() {
        let currents = [0.0, 1.5, 1.5, 0.0, 0.0, 1.5, 0.0, 1.5];
        assert_eq!(count_pulses(&currents, 0.75), 3);
        assert_eq!(count_pulses(&[], 0.75), 0);
        assert_eq!(count_pulses(&[0.0, 0.0], 0.75), 0);
    }

    #[test]
    fn noise_is_deterministic_per_seed_and_zero_mean_at_scale() {
        let mut a = vec![0.0; 4096];
        let mut b = vec![0.0; 4096];
        add_noise(&mut a, 1e-3, 42);
        add_noise(&mut b, 1e-3, 42);
        assert_eq!(a, b);

        let mut c = vec![0.0; 4096];
        add_noise(&mut c, 1e-3, 43);
        assert_ne!(a, c);

        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let var = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 1e-4, "mean {mean}");
        let sigma = var.sqrt();
        assert!((0.8e-3..1.2e-3).contains(&sigma), "sigma {sigma}");
    }

    #[test]
    fn zero_noise_leaves_voltages_untouched() {
        let mut v = vec![1.5, 1.4];
        add_noise(&mut v, 0.0, 1);
        assert_eq!(v, vec![1.5, 1.4]);
    }

    #[test]
    fn default_step_is_the_typical_interval_capped() {
        let fine =
            CurrentVoltageTrace::new(vec![0.0, 0.5, 1.0, 1.5, 9.0], vec![0.0; 5], None).unwrap();
        assert_eq!(default_dt(&fine), 0.5);
        let coarse = CurrentVoltageTrace::new(vec![0.0, 10.0], vec![0.0; 2], None).unwrap();
        assert_eq!(default_dt(&coarse), 2.5);
    }
}
