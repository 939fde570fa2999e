//! Equivalent-circuit state equations and the time integrator.
//!
//! The circuit is an OCV source in series with an ohmic resistance and two RC
//! branches; all five passive components vary with SOC through a
//! [`SocParameterTable`]. Positive current means discharge, so branch
//! overpotentials charge positive and subtract from the terminal voltage.

use serde::{Deserialize, Serialize};

use crate::cell::CellSpec;
use crate::error::{Error, Result};
use crate::ocv::OcvPolynomial;
use crate::params::SocParameterTable;
use crate::trace::CurrentVoltageTrace;

/// Dynamic state of the circuit: SOC plus the two branch overpotentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcmState {
    /// State of charge, clamped to [0, 1].
    pub soc: f64,
    /// First RC branch voltage, volts.
    pub v1_v: f64,
    /// Second RC branch voltage, volts.
    pub v2_v: f64,
    /// Simulation time, seconds.
    pub t_s: f64,
    /// True once SOC clamping has occurred anywhere in the state's history.
    pub saturated: bool,
}

impl EcmState {
    /// Relaxed state (zero branch voltages) at the given SOC and t = 0.
    /// SOC outside [0, 1] is clamped and flagged.
    pub fn at_rest(soc: f64) -> Self {
        let clamped = soc.clamp(0.0, 1.0);
        EcmState {
            soc: clamped,
            v1_v: 0.0,
            v2_v: 0.0,
            t_s: 0.0,
            saturated: clamped != soc,
        }
    }
}

/// Why a simulation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    /// Ran through the whole excitation profile.
    ProfileEnd,
    /// Terminal voltage fell below the cell's cutoff.
    CutoffVoltage { t_s: f64, voltage_v: f64 },
    /// Coulomb counting reached SOC = 0 under discharge.
    SocDepleted { t_s: f64 },
}

/// Output of [`simulate`]: the voltage trace plus bookkeeping.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    /// Simulated (t, I, V) samples. Times coincide with the profile's except
    /// for an optional final sample at the exact SOC-depletion instant.
    pub trace: CurrentVoltageTrace,
    /// SOC at every emitted sample.
    pub soc: Vec<f64>,
    pub termination: Termination,
    pub final_state: EcmState,
    has_crossing_sample: bool,
}

impl SimulationResult {
    /// Number of leading samples whose timestamps coincide with the input
    /// profile's; anything past that is the depletion-crossing sample.
    pub fn aligned_len(&self) -> usize {
        self.trace.len() - usize::from(self.has_crossing_sample)
    }
}

/// Continuous-time derivatives (d soc/dt, d v1/dt, d v2/dt) at the given
/// state and applied current. SOC drains at η·I/Q; each branch relaxes with
/// its own time constant while the current charges it through the capacitor.
pub fn state_derivatives(
    state: &EcmState,
    current_a: f64,
    spec: &CellSpec,
    table: &SocParameterTable,
) -> Result<(f64, f64, f64)> {
    if !current_a.is_finite() {
        return Err(Error::Numeric(format!("non-finite current: {current_a}")));
    }
    if !(state.soc.is_finite() && state.v1_v.is_finite() && state.v2_v.is_finite()) {
        return Err(Error::Numeric("non-finite circuit state".into()));
    }
    let p = table.interpolate(state.soc);
    if p.tau_1() == 0.0 || p.tau_2() == 0.0 {
        return Err(Error::Numeric(
            "branch time constant is zero; continuous derivative undefined".into(),
        ));
    }
    let d_soc = -spec.coulombic_efficiency * current_a / spec.nominal_capacity_c;
    let d_v1 = -state.v1_v / p.tau_1() + current_a / p.c_1;
    let d_v2 = -state.v2_v / p.tau_2() + current_a / p.c_2;
    Ok((d_soc, d_v1, d_v2))
}

/// Terminal voltage V = OCV(soc) − v1 − v2 − R_s(soc)·I.
pub fn terminal_voltage(
    state: &EcmState,
    current_a: f64,
    poly: &OcvPolynomial,
    table: &SocParameterTable,
) -> f64 {
    let p = table.interpolate(state.soc);
    poly.eval(state.soc) - state.v1_v - state.v2_v - p.r_s * current_a
}

/// Advances the state by `dt_s` under constant current.
///
/// The RC branches use the exact solution for constant current,
/// v ← v·e^(−dt/τ) + I·R·(1 − e^(−dt/τ)), with parameters frozen at the
/// starting SOC; SOC integrates the constant current exactly. This remains
/// stable for branch time constants at or below the step, which the
/// reference table contains (down to ~1.3 s against multi-second sampling).
pub fn step(
    state: &EcmState,
    current_a: f64,
    dt_s: f64,
    spec: &CellSpec,
    table: &SocParameterTable,
) -> Result<EcmState> {
    if !(dt_s > 0.0) {
        return Err(Error::Argument(format!("step length must be positive, got {dt_s}")));
    }
    if !current_a.is_finite() {
        return Err(Error::Numeric(format!("non-finite current: {current_a}")));
    }
    let p = table.interpolate(state.soc);
    // growth = 1 − e^(−dt/τ) via expm1 for accuracy at tiny dt/τ. A zero time
    // constant (R = 0) degenerates gracefully: decay = 0, growth = 1, I·R = 0.
    let branch = |v: f64, r: f64, tau: f64| {
        let x = -dt_s / tau;
        v * x.exp() + current_a * r * (-x.exp_m1())
    };
    let v1 = branch(state.v1_v, p.r_1, p.tau_1());
    let v2 = branch(state.v2_v, p.r_2, p.tau_2());
    let raw_soc =
        state.soc - spec.coulombic_efficiency * current_a * dt_s / spec.nominal_capacity_c;
    let soc = raw_soc.clamp(0.0, 1.0);
    Ok(EcmState {
        soc,
        v1_v: v1,
        v2_v: v2,
        t_s: state.t_s + dt_s,
        saturated: state.saturated || soc != raw_soc,
    })
}

/// Simulates the circuit over a current profile.
///
/// The profile's voltage column, if any, is ignored. Over each profile
/// interval the applied current is held constant at the endpoint average
/// (trapezoid-consistent hold), so the coulombs consumed match the
/// trapezoidal integral of the profile exactly; intervals longer than
/// `dt_max_s` are subdivided so SOC-dependent parameters track the discharge.
/// Emitted voltages use the instantaneous profile current at each timestamp.
///
/// The run stops early when the terminal voltage drops below the cutoff or
/// SOC reaches zero under discharge; depletion emits one extra sample at the
/// exact crossing instant. The initial state's time is ignored — the
/// profile's time axis is authoritative.
pub fn simulate(
    profile: &CurrentVoltageTrace,
    spec: &CellSpec,
    table: &SocParameterTable,
    poly: &OcvPolynomial,
    initial: &EcmState,
    dt_max_s: f64,
) -> Result<SimulationResult> {
    if !(dt_max_s > 0.0) {
        return Err(Error::Argument(format!(
            "maximum internal step must be positive, got {dt_max_s}"
        )));
    }
    let times = profile.times_s();
    let currents = profile.currents_a();
    let mut st = EcmState { t_s: times[0], ..*initial };

    let mut out_t = Vec::with_capacity(times.len());
    let mut out_i = Vec::with_capacity(times.len());
    let mut out_v = Vec::with_capacity(times.len());
    let mut out_soc = Vec::with_capacity(times.len());
    let mut emit = |st: &EcmState, i: f64, v: f64| {
        out_t.push(st.t_s);
        out_i.push(i);
        out_v.push(v);
        out_soc.push(st.soc);
    };

    let v0 = terminal_voltage(&st, currents[0], poly, table);
    emit(&st, currents[0], v0);
    let mut termination = Termination::ProfileEnd;
    let mut has_crossing_sample = false;

    if v0 < spec.cutoff_voltage_v {
        termination = Termination::CutoffVoltage { t_s: st.t_s, voltage_v: v0 };
    } else {
        'intervals: for k in 0..times.len() - 1 {
            let dt_total = times[k + 1] - times[k];
            let i_held = 0.5 * (currents[k] + currents[k + 1]);
            let n_sub = (dt_total / dt_max_s).ceil().max(1.0) as usize;
            let dt_sub = dt_total / n_sub as f64;
            for _ in 0..n_sub {
                let drain =
                    spec.coulombic_efficiency * i_held * dt_sub / spec.nominal_capacity_c;
                if i_held > 0.0 && st.soc - drain <= 0.0 {
                    // Depletion inside this substep: land exactly on the
                    // crossing instant and emit it as the final sample.
                    let dt_star =
                        st.soc * spec.nominal_capacity_c / (spec.coulombic_efficiency * i_held);
                    if st.t_s + dt_star <= st.t_s {
                        // SOC was already zero at an emitted sample, or the
                        // remaining sliver is below the time axis's
                        // resolution — no distinct crossing sample exists.
                        st.soc = 0.0;
                        termination = Termination::SocDepleted { t_s: st.t_s };
                        break 'intervals;
                    }
                    st = step(&st, i_held, dt_star, spec, table)?;
                    st.soc = 0.0;
                    let v = terminal_voltage(&st, i_held, poly, table);
                    emit(&st, i_held, v);
                    has_crossing_sample = true;
                    termination = Termination::SocDepleted { t_s: st.t_s };
                    break 'intervals;
                }
                st = step(&st, i_held, dt_sub, spec, table)?;
            }
            st.t_s = times[k + 1];
            let v = terminal_voltage(&st, currents[k + 1], poly, table);
            emit(&st, currents[k + 1], v);
            if v < spec.cutoff_voltage_v {
                termination = Termination::CutoffVoltage { t_s: st.t_s, voltage_v: v };
                break;
            }
        }
    }

    let trace = CurrentVoltageTrace::new(out_t, out_i, Some(out_v))?;
    Ok(SimulationResult { trace, soc: out_soc, termination, final_state: st, has_crossing_sample })
}
