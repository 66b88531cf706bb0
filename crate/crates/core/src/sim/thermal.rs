//! Explicit finite-volume solver for the 2-D pack temperature field.
//!
//! Nodes are cell-centred. Interior faces exchange heat by the homogenized
//! diffusivities; boundary faces lose heat by convection to ambient
//! (Robin condition), with a forced coefficient on the x = 0 edge.

use super::layout::{CellSpec, Grid, PackLayout};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalField {
    /// Kelvin, row-major with `grid.index(ix, iy)`.
    pub temperatures: Vec<f64>,
    /// s
    pub time: f64,
}

impl ThermalField {
    pub fn uniform(grid: &Grid, temperature: f64) -> Self {
        ThermalField {
            temperatures: vec![temperature; grid.len()],
            time: 0.0,
        }
    }

    /// Footprint-mean temperature of every cell.
    pub fn cell_means(&self, layout: &PackLayout) -> Vec<f64> {
        layout
            .cell_footprints
            .iter()
            .map(|nodes| nodes.iter().map(|&n| self.temperatures[n]).sum::<f64>() / nodes.len() as f64)
            .collect()
    }

    /// Stored heat relative to 0 K, C_vol·ΣT·V_node (J).
    pub fn thermal_energy(&self, layout: &PackLayout, heat_capacity_vol: f64) -> f64 {
        heat_capacity_vol * layout.node_volume() * self.temperatures.iter().sum::<f64>()
    }
}

/// Boundary and material constants used by [`step_thermal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    pub kx: f64,
    pub ky: f64,
    pub heat_capacity_vol: f64,
    pub ambient: f64,
    /// W/(m²·K) on the x = 0 (airflow) edge.
    pub h_forced: f64,
    /// W/(m²·K) on the other three edges.
    pub h_natural: f64,
}

impl ThermalParams {
    pub fn from_spec(spec: &CellSpec, ambient: f64, h_forced: f64, h_natural: f64) -> Self {
        ThermalParams {
            kx: spec.kx,
            ky: spec.ky,
            heat_capacity_vol: spec.heat_capacity_vol,
            ambient,
            h_forced,
            h_natural,
        }
    }

    /// Diffusion-only bound `min(dx², dy²) / (2 (kx + ky))`.
    pub fn diffusion_dt_bound(&self, grid: &Grid) -> f64 {
        grid.dx.powi(2).min(grid.dy.powi(2)) / (2.0 * (self.kx + self.ky))
    }

    /// Largest stable explicit step: the diffusion bound, tightened so the
    /// diagonal coefficient of the update at a corner node (two convective
    /// edges) stays non-negative.
    pub fn max_stable_dt(&self, grid: &Grid) -> f64 {
        let h = self.h_forced.max(self.h_natural);
        let rate = 2.0 * self.kx / grid.dx.powi(2)
            + 2.0 * self.ky / grid.dy.powi(2)
            + h / (self.heat_capacity_vol * grid.dx)
            + h / (self.heat_capacity_vol * grid.dy);
        self.diffusion_dt_bound(grid).min(1.0 / rate)
    }

    pub fn check_stability(&self, grid: &Grid, dt: f64) -> Result<()> {
        let bound = self.max_stable_dt(grid);
        if !(dt > 0.0 && dt <= bound) {
            return Err(Error::config(format!(
                "dt = {dt} s violates the explicit stability bound {bound:.6} s"
            )));
        }
        Ok(())
    }
}

/// One explicit step of the heat equation with volumetric `sources` (W/m³)
/// per node.
pub fn step_thermal(
    field: &ThermalField,
    sources: &[f64],
    params: &ThermalParams,
    grid: &Grid,
    dt: f64,
) -> Result<ThermalField> {
    let Grid { nx, ny, dx, dy } = *grid;
    let t = &field.temperatures;
    let cx = params.kx / (dx * dx);
    let cy = params.ky / (dy * dy);
    let c = params.heat_capacity_vol;
    let mut out = vec![0.0; t.len()];

    for iy in 0..ny {
        for ix in 0..nx {
            let i = grid.index(ix, iy);
            let ti = t[i];
            let mut rate = sources[i] / c;
            if ix > 0 {
                rate += cx * (t[i - 1] - ti);
            } else {
                rate -= params.h_forced * (ti - params.ambient) / (c * dx);
            }
            if ix + 1 < nx {
                rate += cx * (t[i + 1] - ti);
            } else {
                rate -= params.h_natural * (ti - params.ambient) / (c * dx);
            }
            if iy > 0 {
                rate += cy * (t[i - nx] - ti);
            } else {
                rate -= params.h_natural * (ti - params.ambient) / (c * dy);
            }
            if iy + 1 < ny {
                rate += cy * (t[i + nx] - ti);
            } else {
                rate -= params.h_natural * (ti - params.ambient) / (c * dy);
            }
            let v = ti + dt * rate;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    ix,
                    iy,
                    time: field.time + dt,
                });
            }
            out[i] = v;
        }
    }
    Ok(ThermalField {
        temperatures: out,
        time: field.time + dt,
    })
}

/// Spreads per-cell heat (W) uniformly over each cell footprint (W/m³).
pub fn distribute_heat(layout: &PackLayout, cell_watts: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|s| *s = 0.0);
    let v = layout.node_volume();
    for (cell, nodes) in layout.cell_footprints.iter().enumerate() {
        let density = cell_watts[cell] / (nodes.len() as f64 * v);
        for &n in nodes {
            out[n] += density;
        }
    }
}
