//! Pack geometry: cell lattice, series/parallel topology and the thermal grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of cells in the benchmark pack.
pub const BENCH_CELLS: usize = 24;

/// Physical and thermal parameters of one cylindrical cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    /// m
    pub diameter: f64,
    /// m
    pub height: f64,
    /// Ah
    pub nominal_capacity: f64,
    /// V
    pub nominal_voltage: f64,
    /// Ω, constant over SOC and temperature.
    pub internal_resistance: f64,
    /// Volumetric heat capacity, J/(m³·K).
    pub heat_capacity_vol: f64,
    /// Homogenized thermal diffusivity along x, m²/s.
    pub kx: f64,
    /// Homogenized thermal diffusivity along y, m²/s.
    pub ky: f64,
}

impl Default for CellSpec {
    fn default() -> Self {
        CellSpec {
            diameter: 0.021,
            height: 0.070,
            nominal_capacity: 4.8,
            nominal_voltage: 3.7,
            internal_resistance: 0.03,
            heat_capacity_vol: 2.0e6,
            kx: 5.0e-8,
            ky: 5.0e-8,
        }
    }
}

impl CellSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("diameter", self.diameter),
            ("height", self.height),
            ("nominal_capacity", self.nominal_capacity),
            ("nominal_voltage", self.nominal_voltage),
            ("internal_resistance", self.internal_resistance),
            ("heat_capacity_vol", self.heat_capacity_vol),
            ("kx", self.kx),
            ("ky", self.ky),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::key(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Uniform rectangular grid of cell-centred nodes covering `[0, width] × [0, depth]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node % self.nx, node / self.nx)
    }

    pub fn node_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [(ix as f64 + 0.5) * self.dx, (iy as f64 + 0.5) * self.dy]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackLayout {
    pub rows: usize,
    pub cols: usize,
    pub gap: f64,
    /// Centre-to-centre spacing, diameter + gap.
    pub pitch: f64,
    /// Domain extent along x (x_b).
    pub width: f64,
    /// Domain extent along y (y_b).
    pub depth: f64,
    /// Cell centres indexed by `serial - 1`.
    pub cell_centers: Vec<[f64; 2]>,
    /// Series-connected groups, each a list of parallel-connected cell indices.
    pub series_groups: Vec<Vec<usize>>,
    pub grid: Grid,
    /// Grid nodes belonging to each cell.
    pub cell_footprints: Vec<Vec<usize>>,
    /// Owning cell of each grid node, if any.
    pub node_owner: Vec<Option<usize>>,
    /// Cell height, used to turn node areas into volumes.
    pub cell_height: f64,
}

impl PackLayout {
    pub fn n_cells(&self) -> usize {
        self.cell_centers.len()
    }

    pub fn n_groups(&self) -> usize {
        self.series_groups.len()
    }

    /// Volume represented by one grid node.
    pub fn node_volume(&self) -> f64 {
        self.grid.dx * self.grid.dy * self.cell_height
    }

    /// Group index of every cell.
    pub fn group_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_cells()];
        for (g, cells) in self.series_groups.iter().enumerate() {
            for &c in cells {
                out[c] = g;
            }
        }
        out
    }

    /// The 4 × 6 benchmark pack with 4 nodes per pitch.
    pub fn benchmark(spec: &CellSpec) -> Result<Self> {
        build_layout(4, 6, spec, 0.002, 4, true)
    }
}

/// Lays `rows × cols` cells on a square lattice with the given wall gap.
///
/// Cells are numbered column by column starting at the domain corner
/// (x = 0 is the airflow side), so serials 1..=rows form the first parallel
/// group and each column is one series stage.
pub fn build_layout(
    rows: usize,
    cols: usize,
    spec: &CellSpec,
    gap: f64,
    grid_res: usize,
    require_benchmark_topology: bool,
) -> Result<PackLayout> {
    spec.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::Layout("rows and cols must be positive".into()));
    }
    if require_benchmark_topology && rows * cols != BENCH_CELLS {
        return Err(Error::Layout(format!(
            "benchmark topology needs {BENCH_CELLS} cells, got {rows}×{cols} = {}",
            rows * cols
        )));
    }
    if grid_res < 2 {
        return Err(Error::Layout(format!("grid_res must be ≥ 2, got {grid_res}")));
    }
    if !(gap.is_finite() && gap >= 0.0) {
        return Err(Error::Layout(format!("gap must be ≥ 0, got {gap}")));
    }

    let pitch = spec.diameter + gap;
    let width = cols as f64 * pitch;
    let depth = rows as f64 * pitch;
    let grid = Grid {
        nx: cols * grid_res,
        ny: rows * grid_res,
        dx: pitch / grid_res as f64,
        dy: pitch / grid_res as f64,
    };

    let mut cell_centers = Vec::with_capacity(rows * cols);
    let mut series_groups = Vec::with_capacity(cols);
    for col in 0..cols {
        let mut group = Vec::with_capacity(rows);
        for row in 0..rows {
            group.push(cell_centers.len());
            cell_centers.push([(col as f64 + 0.5) * pitch, (row as f64 + 0.5) * pitch]);
        }
        series_groups.push(group);
    }

    let radius = 0.5 * spec.diameter;
    let mut node_owner = vec![None; grid.len()];
    let mut cell_footprints = vec![Vec::new(); cell_centers.len()];
    for (cell, c) in cell_centers.iter().enumerate() {
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let p = grid.node_center(ix, iy);
                let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                if d2 <= radius * radius {
                    let node = grid.index(ix, iy);
                    if node_owner[node].is_some() {
                        return Err(Error::Layout(format!("node ({ix}, {iy}) claimed by two cells")));
                    }
                    node_owner[node] = Some(cell);
                    cell_footprints[cell].push(node);
                }
            }
        }
    }
    if let Some(cell) = cell_footprints.iter().position(Vec::is_empty) {
        return Err(Error::Layout(format!(
            "grid too coarse: cell #{} has no grid node",
            cell + 1
        )));
    }

    Ok(PackLayout {
        rows,
        cols,
        gap,
        pitch,
        width,
        depth,
        cell_centers,
        series_groups,
        grid,
        cell_footprints,
        node_owner,
        cell_height: spec.height,
    })
}
