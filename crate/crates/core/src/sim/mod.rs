//! Coupled electro-thermal simulator of the 24-cell pack.

pub mod electrical;
pub mod layout;
pub mod thermal;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use electrical::{
    heat_generation, isc_power, isc_power_density, ocv_of_soc, step_electrical, ElectricalState, FaultSpec,
    SimDiagnostics, StepStatus,
};
pub use layout::{build_layout, CellSpec, Grid, PackLayout};
pub use thermal::{distribute_heat, step_thermal, ThermalField, ThermalParams};

use crate::error::{Error, Result};

/// One sampled time step of pack measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryFrame {
    pub t: f64,
    /// Per-cell temperature, K, indexed by `serial - 1`.
    pub temperatures: Vec<f64>,
    /// Per parallel-group terminal voltage, V.
    pub voltages: Vec<f64>,
    /// Pack current, A.
    pub current: f64,
    /// True once the injected fault is active.
    pub abnormal: bool,
}

/// Initial temperature field of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialTemperature {
    /// Uniform at ambient.
    Ambient,
    /// Steady state of the healthy pack under the configured load, i.e. a
    /// pack that has been cycling long enough to settle thermally.
    #[default]
    Steady,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Integration step, s.
    pub dt: f64,
    /// s
    pub duration: f64,
    /// Spacing between telemetry frames, s.
    pub sample_interval: f64,
    /// K
    pub ambient: f64,
    /// m/s, informational; the forced coefficient carries its effect.
    pub airflow_speed: f64,
    pub convective_coeff_forced: f64,
    pub convective_coeff_natural: f64,
    /// K
    pub temp_noise_std: f64,
    /// V
    pub voltage_noise_std: f64,
    /// A
    pub current_noise_std: f64,
    pub rng_seed: u64,
    /// Constant discharge load as a C-rate of one cell's capacity.
    pub discharge_rate: f64,
    pub initial_soc: f64,
    pub initial_temperature: InitialTemperature,
    pub fault: Option<FaultSpec>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.5,
            duration: 2000.0,
            sample_interval: 1.0,
            ambient: 293.15,
            airflow_speed: 1.0,
            convective_coeff_forced: 25.0,
            convective_coeff_natural: 5.0,
            temp_noise_std: 0.05,
            voltage_noise_std: 0.001,
            current_noise_std: 0.0,
            rng_seed: 1,
            discharge_rate: 2.0,
            initial_soc: 0.9,
            initial_temperature: InitialTemperature::Steady,
            fault: None,
        }
    }
}

impl SimConfig {
    pub fn pack_current(&self, spec: &CellSpec) -> f64 {
        self.discharge_rate * spec.nominal_capacity
    }

    pub fn thermal_params(&self, spec: &CellSpec) -> ThermalParams {
        ThermalParams::from_spec(
            spec,
            self.ambient,
            self.convective_coeff_forced,
            self.convective_coeff_natural,
        )
    }

    fn steps_per_sample(&self) -> Result<usize> {
        let steps = (self.sample_interval / self.dt).round();
        if steps < 1.0 || (steps * self.dt - self.sample_interval).abs() > 1e-9 * self.sample_interval {
            return Err(Error::key(
                "dt",
                format!(
                    "sample_interval {} is not a whole multiple of dt {}",
                    self.sample_interval, self.dt
                ),
            ));
        }
        Ok(steps as usize)
    }

    pub fn n_frames(&self) -> usize {
        (self.duration / self.sample_interval + 1e-9).floor() as usize
    }

    pub fn validate(&self, layout: &PackLayout, spec: &CellSpec) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("duration", self.duration),
            ("sample_interval", self.sample_interval),
            ("ambient", self.ambient),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::key(k, format!("must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("airflow_speed", self.airflow_speed),
            ("convective_coeff_forced", self.convective_coeff_forced),
            ("convective_coeff_natural", self.convective_coeff_natural),
            ("temp_noise_std", self.temp_noise_std),
            ("voltage_noise_std", self.voltage_noise_std),
            ("current_noise_std", self.current_noise_std),
        ];
        for (k, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::key(k, format!("must be ≥ 0, got {v}")));
            }
        }
        if self.duration < self.dt {
            return Err(Error::key("duration", "must be ≥ dt"));
        }
        if !self.discharge_rate.is_finite() {
            return Err(Error::key("discharge_rate", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(Error::key("initial_soc", "must be in [0, 1]"));
        }
        self.steps_per_sample()?;
        self.thermal_params(spec).check_stability(&layout.grid, self.dt)?;
        if let Some(f) = &self.fault {
            f.validate(layout.n_cells())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Depleted,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub frames: Vec<TelemetryFrame>,
    pub status: RunStatus,
    pub diagnostics: SimDiagnostics,
    /// Heat injected into the field over the run, J.
    pub injected_heat: f64,
    /// Thermal energy of the field at the first and last step, J.
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Largest |Σ branch − pack current| seen in any group, A.
    pub max_current_imbalance: f64,
    pub final_field: ThermalField,
}

/// Steady temperature field of the healthy pack carrying `pack_current`.
pub fn steady_field(
    layout: &PackLayout,
    spec: &CellSpec,
    params: &ThermalParams,
    pack_current: f64,
) -> ThermalField {
    let grid = layout.grid;
    // Fully insulated packs have no steady state. Checked up front because
    // LU on the singular stencil can still return a (meaningless) solution.
    if params.h_forced == 0.0 && params.h_natural == 0.0 {
        return ThermalField::uniform(&grid, params.ambient);
    }
    let n = grid.len();
    let branch = pack_current / layout.series_groups[0].len() as f64;
    let watts = vec![branch * branch * spec.internal_resistance; layout.n_cells()];
    let mut sources = vec![0.0; n];
    distribute_heat(layout, &watts, &mut sources);

    // Assemble the same stencil as `step_thermal` with dT/dt = 0.
    let c = params.heat_capacity_vol;
    let cx = params.kx / grid.dx.powi(2);
    let cy = params.ky / grid.dy.powi(2);
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let i = grid.index(ix, iy);
            b[i] = -sources[i] / c;
            let robin = |h: f64, d: f64, a: &mut DMatrix<f64>, b: &mut DVector<f64>| {
                let g = h / (c * d);
                a[(i, i)] -= g;
                b[i] -= g * params.ambient;
            };
            if ix > 0 {
                a[(i, i)] -= cx;
                a[(i, i - 1)] += cx;
            } else {
                robin(params.h_forced, grid.dx, &mut a, &mut b);
            }
            if ix + 1 < grid.nx {
                a[(i, i)] -= cx;
                a[(i, i + 1)] += cx;
            } else {
                robin(params.h_natural, grid.dx, &mut a, &mut b);
            }
            if iy > 0 {
                a[(i, i)] -= cy;
                a[(i, i - grid.nx)] += cy;
            } else {
                robin(params.h_natural, grid.dy, &mut a, &mut b);
            }
            if iy + 1 < grid.ny {
                a[(i, i)] -= cy;
                a[(i, i + grid.nx)] += cy;
            } else {
                robin(params.h_natural, grid.dy, &mut a, &mut b);
            }
        }
    }
    match a.lu().solve(&b) {
        Some(t) => ThermalField {
            temperatures: t.iter().copied().collect(),
            time: 0.0,
        },
        None => ThermalField::uniform(&grid, params.ambient),
    }
}

/// Runs the simulator and samples one frame per `sample_interval`.
pub fn simulate(cfg: &SimConfig, layout: &PackLayout, spec: &CellSpec) -> Result<SimOutput> {
    cfg.validate(layout, spec)?;
    let params = cfg.thermal_params(spec);
    let pack_current = cfg.pack_current(spec);
    let steps = cfg.steps_per_sample()?;
    let n_frames = cfg.n_frames();
    let fault = cfg.fault.as_ref();
    let fault_group = fault.map(|f| layout.group_of()[f.cell_index()]);

    let mut field = match cfg.initial_temperature {
        InitialTemperature::Ambient => ThermalField::uniform(&layout.grid, cfg.ambient),
        InitialTemperature::Steady => steady_field(layout, spec, &params, pack_current),
    };
    let mut elec = ElectricalState::at_rest(layout, cfg.initial_soc);
    let mut diag = SimDiagnostics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut noise = |sigma: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    };

    let node_volume = layout.node_volume();
    let initial_energy = field.thermal_energy(layout, spec.heat_capacity_vol);
    let mut injected_heat = 0.0;
    let mut max_imbalance: f64 = 0.0;
    let mut sources = vec![0.0; layout.grid.len()];
    let mut frames = Vec::with_capacity(n_frames);
    let mut status = RunStatus::Completed;

    'frames: for k in 0..n_frames {
        let t_frame = k as f64 * cfg.sample_interval;
        for s in 0..steps {
            let t = t_frame + s as f64 * cfg.dt;
            let (next, step_status) =
                step_electrical(&elec, pack_current, layout, spec, fault, t, cfg.dt, &mut diag)?;

            for cells in &layout.series_groups {
                let sum: f64 = cells.iter().map(|&c| next.branch_current[c]).sum();
                max_imbalance = max_imbalance.max((sum - pack_current).abs());
            }

            if s == 0 {
                let temperatures = field
                    .cell_means(layout)
                    .into_iter()
                    .map(|t| t + noise(cfg.temp_noise_std))
                    .collect();
                let voltages = next
                    .group_voltage
                    .iter()
                    .map(|v| v + noise(cfg.voltage_noise_std))
                    .collect();
                frames.push(TelemetryFrame {
                    t: t_frame,
                    temperatures,
                    voltages,
                    current: pack_current + noise(cfg.current_noise_std),
                    abnormal: fault.is_some_and(|f| f.active_at(t_frame)),
                });
            }

            let mut watts = heat_generation(&next, spec);
            if let (Some(f), Some(g)) = (fault, fault_group) {
                if f.active_at(t) {
                    let v = next.group_voltage[g];
                    watts[f.cell_index()] += v * v / f.r_short;
                }
            }
            injected_heat += watts.iter().sum::<f64>() * cfg.dt;
            distribute_heat(layout, &watts, &mut sources);
            debug_assert!({
                let total: f64 = sources.iter().sum::<f64>() * node_volume;
                (total - watts.iter().sum::<f64>()).abs() < 1e-9
            });
            field = step_thermal(&field, &sources, &params, &layout.grid, cfg.dt)?;
            elec = next;

            if step_status == StepStatus::Depleted {
                status = RunStatus::Depleted;
                break 'frames;
            }
        }
    }

    Ok(SimOutput {
        frames,
        status,
        diagnostics: diag,
        injected_heat,
        initial_energy,
        final_energy: field.thermal_energy(layout, spec.heat_capacity_vol),
        max_current_imbalance: max_imbalance,
        final_field: field,
    })
}
