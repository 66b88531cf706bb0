//! Equivalent-circuit model of the series/parallel pack.
//!
//! Each cell is an OCV source behind a constant internal resistance. The
//! four cells of a group share one terminal voltage; an internal short on a
//! cell is a resistor from that cell's terminals, so its drain current is
//! supplied through the cell's internal resistance and discharges its SOC.

use serde::{Deserialize, Serialize};

use super::layout::{CellSpec, PackLayout};
use crate::error::{Error, Result};

/// OCV polynomial coefficients, highest power first (degree 6).
pub const OCV_COEFFS: [f64; 7] = [-34.39, 127.38, -182.10, 127.24, -45.57, 8.40, 3.19];

/// Open-circuit voltage of one cell. `soc` is clamped to `[0, 1]`.
pub fn ocv_of_soc(soc: f64) -> f64 {
    let s = soc.clamp(0.0, 1.0);
    OCV_COEFFS.iter().fold(0.0, |acc, &c| acc * s + c)
}

/// Counters for conditions the simulator tolerates but reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimDiagnostics {
    /// Number of OCV evaluations whose SOC fell outside `[0, 1]`.
    pub soc_clamps: u64,
}

impl SimDiagnostics {
    pub fn ocv(&mut self, soc: f64) -> f64 {
        if !(0.0..=1.0).contains(&soc) {
            self.soc_clamps += 1;
        }
        ocv_of_soc(soc)
    }
}

/// An internal short circuit injected into one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    /// 1-based cell serial number.
    pub fault_cell: usize,
    /// Ω
    pub r_short: f64,
    /// Radius of the equivalent short-circuit sphere, m.
    pub r_equiv: f64,
    /// s
    pub onset: f64,
}

impl FaultSpec {
    pub fn validate(&self, n_cells: usize) -> Result<()> {
        if self.fault_cell < 1 || self.fault_cell > n_cells {
            return Err(Error::key(
                "fault_cell",
                format!("must be in [1, {n_cells}], got {}", self.fault_cell),
            ));
        }
        if !(self.r_short.is_finite() && self.r_short > 0.0) {
            return Err(Error::key("r_short", "must be > 0"));
        }
        if !(self.r_equiv.is_finite() && self.r_equiv > 0.0) {
            return Err(Error::key("r_equiv", "must be > 0"));
        }
        if !(self.onset.is_finite() && self.onset >= 0.0) {
            return Err(Error::key("onset", "must be ≥ 0"));
        }
        Ok(())
    }

    pub fn active_at(&self, t: f64) -> bool {
        t >= self.onset
    }

    /// 0-based index of the faulted cell.
    pub fn cell_index(&self) -> usize {
        self.fault_cell - 1
    }
}

/// Volumetric heat release of a short of resistance `r_short` at terminal
/// voltage `v`, spread over a sphere of radius `r_equiv` (W/m³).
pub fn isc_power_density(v: f64, fault: &FaultSpec) -> f64 {
    3.0 * v * v / (4.0 * std::f64::consts::PI * fault.r_equiv.powi(3) * fault.r_short)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectricalState {
    pub soc: Vec<f64>,
    /// Terminal current of each cell into the group bus (A, discharge > 0).
    pub branch_current: Vec<f64>,
    /// Current drawn by an internal short, zero on healthy cells.
    pub drain_current: Vec<f64>,
    pub group_voltage: Vec<f64>,
    pub pack_current: f64,
}

impl ElectricalState {
    /// Open-circuit state with every cell at `soc`.
    pub fn at_rest(layout: &PackLayout, soc: f64) -> Self {
        let n = layout.n_cells();
        let v = ocv_of_soc(soc);
        ElectricalState {
            soc: vec![soc.clamp(0.0, 1.0); n],
            branch_current: vec![0.0; n],
            drain_current: vec![0.0; n],
            group_voltage: vec![v; layout.n_groups()],
            pack_current: 0.0,
        }
    }

    /// Current through the internal resistance of each cell.
    pub fn cell_current(&self, cell: usize) -> f64 {
        self.branch_current[cell] + self.drain_current[cell]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Running,
    /// A cell reached SOC = 0 while discharging.
    Depleted,
}

/// Solution of one parallel group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSolution {
    pub voltage: f64,
    pub branch: Vec<f64>,
    pub drain: Vec<f64>,
}

/// Solves a parallel group: cells `i` with source `ocv[i]` behind
/// `resistance[i]`, an optional shunt conductance `shunt[i]` across the cell
/// terminals, and the group bus delivering `pack_current`.
pub fn solve_group(
    group: usize,
    ocv: &[f64],
    resistance: &[f64],
    shunt: &[f64],
    pack_current: f64,
) -> Result<GroupSolution> {
    let mut g_sum = 0.0;
    let mut source = 0.0;
    for (i, &r) in resistance.iter().enumerate() {
        let g = 1.0 / r;
        g_sum += g + shunt[i];
        source += ocv[i] * g;
    }
    if !g_sum.is_finite() || g_sum <= 0.0 || !source.is_finite() {
        return Err(Error::SingularNetwork { group });
    }
    let voltage = (source - pack_current) / g_sum;
    let drain: Vec<f64> = shunt.iter().map(|g| g * voltage).collect();
    let branch = ocv
        .iter()
        .zip(resistance)
        .zip(&drain)
        .map(|((e, r), d)| (e - voltage) / r - d)
        .collect();
    Ok(GroupSolution {
        voltage,
        branch,
        drain,
    })
}

/// Advances the electrical network by `dt`: solves every group at the
/// current SOC, then integrates coulomb counting over the step.
#[allow(clippy::too_many_arguments)]
pub fn step_electrical(
    state: &ElectricalState,
    pack_current: f64,
    layout: &PackLayout,
    spec: &CellSpec,
    fault: Option<&FaultSpec>,
    t: f64,
    dt: f64,
    diag: &mut SimDiagnostics,
) -> Result<(ElectricalState, StepStatus)> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("dt must be > 0, got {dt}")));
    }
    let n = layout.n_cells();
    let mut next = ElectricalState {
        soc: state.soc.clone(),
        branch_current: vec![0.0; n],
        drain_current: vec![0.0; n],
        group_voltage: vec![0.0; layout.n_groups()],
        pack_current,
    };
    let shorted = fault.filter(|f| f.active_at(t)).map(FaultSpec::cell_index);

    for (g, cells) in layout.series_groups.iter().enumerate() {
        let ocv: Vec<f64> = cells.iter().map(|&c| diag.ocv(state.soc[c])).collect();
        let res = vec![spec.internal_resistance; cells.len()];
        let shunt: Vec<f64> = cells
            .iter()
            .map(|&c| match (shorted, fault) {
                (Some(sc), Some(f)) if sc == c => 1.0 / f.r_short,
                _ => 0.0,
            })
            .collect();
        let sol = solve_group(g, &ocv, &res, &shunt, pack_current)?;
        next.group_voltage[g] = sol.voltage;
        for (k, &c) in cells.iter().enumerate() {
            next.branch_current[c] = sol.branch[k];
            next.drain_current[c] = sol.drain[k];
        }
    }

    let coulombs = 3600.0 * spec.nominal_capacity;
    let mut status = StepStatus::Running;
    for c in 0..n {
        let soc = state.soc[c] - next.cell_current(c) * dt / coulombs;
        if soc <= 0.0 {
            status = StepStatus::Depleted;
        }
        next.soc[c] = soc.clamp(0.0, 1.0);
    }
    Ok((next, status))
}

/// Joule heat of each cell, I²·R over the internal resistance (W).
pub fn heat_generation(state: &ElectricalState, spec: &CellSpec) -> Vec<f64> {
    (0..state.soc.len())
        .map(|c| state.cell_current(c).powi(2) * spec.internal_resistance)
        .collect()
}

/// Heat released in the short itself, V²/R_short (W), if the fault is active.
pub fn isc_power(state: &ElectricalState, layout: &PackLayout, fault: &FaultSpec, t: f64) -> f64 {
    if !fault.active_at(t) {
        return 0.0;
    }
    let group = layout.group_of()[fault.cell_index()];
    let v = state.group_voltage[group];
    v * v / fault.r_short
}
