//! Space-time separation of a temperature window and the spatial and
//! temporal entropies built on it.
//!
//! A window `Y` (sensors × samples) is factored by truncated SVD into
//! spatial basis functions (columns of `phi`), singular values and temporal
//! coefficients (rows of `a`). Spatial entropy measures how one-sided the
//! drift of the basis functions away from a reference decomposition is;
//! temporal entropy is the singular-value weighted fuzzy entropy of the
//! temporal coefficients.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncated SVD of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// N × n, orthonormal columns.
    pub phi: DMatrix<f64>,
    /// n singular values, descending.
    pub lambda: Vec<f64>,
    /// n × W, orthonormal rows.
    pub a: DMatrix<f64>,
    /// Number of modes with non-negligible singular value (≤ n).
    pub effective_rank: usize,
}

impl Decomposition {
    pub fn order(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.phi.nrows()
    }

    /// True when the window had fewer than `order` significant modes; the
    /// missing modes are zero.
    pub fn is_degenerate(&self) -> bool {
        self.effective_rank < self.order()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.phi.clone();
        for (j, l) in self.lambda.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*l);
        }
        scaled * &self.a
    }

    pub fn temporal_coefficients(&self, mode: usize) -> Vec<f64> {
        self.a.row(mode).iter().copied().collect()
    }
}

/// Truncated rank-`n` SVD of `window` (N × W).
///
/// With a `reference`, each mode is sign-flipped (basis column together
/// with its temporal row) so that it has a non-negative inner product with
/// the reference mode. Without one, the entry of largest magnitude in each
/// basis column is made positive.
/// Leading left singular vector and value by power iteration on YYᵀ.
/// Raw temperature windows have one overwhelmingly dominant mode, so this
/// converges in a few sweeps; `None` when it does not, and the caller falls
/// back to the full SVD.
fn dominant_mode(window: &DMatrix<f64>, reference: Option<&Decomposition>) -> Option<(DMatrix<f64>, f64)> {
    let gram = window * window.transpose();
    let mut v = match reference {
        Some(r) => r.phi.column(0).into_owned(),
        None => window.column_sum(),
    };
    let norm = v.norm();
    if !(norm > 0.0) {
        return None;
    }
    v /= norm;
    for _ in 0..60 {
        let w = &gram * &v;
        let lambda = v.dot(&w);
        let norm = w.norm();
        if !(norm > 0.0) {
            return None;
        }
        let next = w / norm;
        let delta = (&next - &v).norm();
        v = next;
        if delta < 1e-14 {
            let resid = (&gram * &v - &v * lambda).norm();
            if resid <= 1e-12 * lambda {
                return Some((
                    DMatrix::from_column_slice(v.len(), 1, v.as_slice()),
                    lambda.max(0.0).sqrt(),
                ));
            }
        }
    }
    None
}

pub fn decompose_window(
    window: &DMatrix<f64>,
    n: usize,
    reference: Option<&Decomposition>,
) -> Result<Decomposition> {
    let (rows, cols) = window.shape();
    if n == 0 || n > rows || n > cols {
        return Err(Error::Dimension(format!(
            "model order {n} needs 1 ≤ n ≤ min({rows}, {cols})"
        )));
    }
    if let Some(r) = reference {
        if r.n_sensors() != rows || r.order() != n {
            return Err(Error::Dimension(format!(
                "reference is {}×{}, window needs {rows}×{n}",
                r.n_sensors(),
                r.order()
            )));
        }
    }

    let (u, singular_values) = match (n == 1).then(|| dominant_mode(window, reference)).flatten() {
        Some((u, s)) => (u, DVector::from_element(1, s)),
        None => {
            // Right vectors are recovered as uᵀY/λ, which is cheaper than
            // asking the SVD for the full Vᵀ when W ≫ N.
            let svd = SVD::new(window.clone(), true, false);
            (svd.u.expect("left vectors requested"), svd.singular_values)
        }
    };
    let mut order: Vec<usize> = (0..singular_values.len()).collect();
    order.sort_by(|&i, &j| singular_values[j].total_cmp(&singular_values[i]));

    let s_max = singular_values.iter().copied().fold(0.0, f64::max);
    let tol = s_max * rows.max(cols) as f64 * f64::EPSILON;

    let mut phi = DMatrix::zeros(rows, n);
    let mut a = DMatrix::zeros(n, cols);
    let mut lambda = vec![0.0; n];
    let mut effective_rank = 0;
    for (mode, &src) in order.iter().take(n).enumerate() {
        let s = singular_values[src];
        if !(s > tol) {
            break;
        }
        effective_rank += 1;
        lambda[mode] = s;
        let mut col = u.column(src).into_owned();
        let flip = match reference {
            Some(r) => col.dot(&r.phi.column(mode)) < 0.0,
            None => {
                let (imax, _) =
                    col.iter().enumerate().fold(
                        (0, 0.0),
                        |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) },
                    );
                col[imax] < 0.0
            }
        };
        if flip {
            col.neg_mut();
        }
        let row = (col.transpose() * window) / s;
        phi.set_column(mode, &col);
        a.set_row(mode, &row);
    }

    Ok(Decomposition {
        phi,
        lambda,
        a,
        effective_rank,
    })
}

/// Assignment of sensors to the lower and upper half of each spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSplit {
    /// `lower[axis][sensor]`
    lower: [Vec<bool>; 2],
}

impl AxisSplit {
    /// Sorts sensors by coordinate along each axis (ties by index) and puts
    /// the first ⌈N/2⌉ in the lower half.
    pub fn from_coordinates(coords: &[[f64; 2]]) -> Self {
        let n = coords.len();
        let lower_count = n.div_ceil(2);
        let split = |axis: usize| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&i, &j| coords[i][axis].total_cmp(&coords[j][axis]).then(i.cmp(&j)));
            let mut lower = vec![false; n];
            for &i in idx.iter().take(lower_count) {
                lower[i] = true;
            }
            lower
        };
        AxisSplit {
            lower: [split(0), split(1)],
        }
    }

    pub fn n_sensors(&self) -> usize {
        self.lower[0].len()
    }

    pub fn is_lower(&self, axis: usize, sensor: usize) -> bool {
        self.lower[axis][sensor]
    }
}

/// Distribution of basis-function drift over the sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialPdf {
    /// ΔΦ(i) = Σ_j |φ_j(i) − φ_j⁰(i)|
    pub variation: Vec<f64>,
    /// G = Σ_i ΔΦ(i)
    pub total: f64,
    pub probabilities: Vec<f64>,
    /// (P₁, P₂) for the x and y axes.
    pub halves: [(f64, f64); 2],
    /// Set when G ≈ 0; the spatial entropy is then 0.
    pub null: bool,
}

/// Drift of `current`'s basis functions from `initial`'s.
pub fn sbf_variation(
    current: &Decomposition,
    initial: &Decomposition,
    split: &AxisSplit,
) -> Result<SpatialPdf> {
    if current.phi.shape() != initial.phi.shape() {
        return Err(Error::Dimension(format!(
            "basis shapes differ: {:?} vs {:?}",
            current.phi.shape(),
            initial.phi.shape()
        )));
    }
    let n_sensors = current.n_sensors();
    if split.n_sensors() != n_sensors {
        return Err(Error::Dimension("axis split sensor count".into()));
    }
    let variation: Vec<f64> = (0..n_sensors)
        .map(|i| {
            (0..current.order())
                .map(|j| (current.phi[(i, j)] - initial.phi[(i, j)]).abs())
                .sum()
        })
        .collect();
    let total: f64 = variation.iter().sum();
    if total < 1e-12 {
        return Ok(SpatialPdf {
            probabilities: vec![0.0; n_sensors],
            variation,
            total,
            halves: [(0.0, 0.0); 2],
            null: true,
        });
    }
    let probabilities: Vec<f64> = variation.iter().map(|v| v / total).collect();
    let half = |axis: usize| {
        let p1: f64 = (0..n_sensors)
            .filter(|&i| split.is_lower(axis, i))
            .map(|i| probabilities[i])
            .sum();
        (p1, 1.0 - p1)
    };
    Ok(SpatialPdf {
        halves: [half(0), half(1)],
        variation,
        total,
        probabilities,
        null: false,
    })
}

fn plog2p(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * p.log2()
    }
}

/// `1 + P₁log₂P₁ + P₂log₂P₂` for one axis.
pub fn axis_entropy(p1: f64, p2: f64) -> f64 {
    (1.0 + plog2p(p1) + plog2p(p2)).clamp(0.0, 1.0)
}

/// Mean of the x- and y-axis entropies; 0 for a null pdf.
pub fn spatial_entropy(pdf: &SpatialPdf) -> f64 {
    if pdf.null {
        return 0.0;
    }
    pdf.halves
        .iter()
        .map(|&(p1, p2)| axis_entropy(p1, p2))
        .sum::<f64>()
        / 2.0
}

/// Similarity tolerance of the fuzzy membership function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    /// Fixed r.
    Absolute(f64),
    /// r = factor × population standard deviation of each series.
    RelativeToStd(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzyParams {
    /// Embedding dimension m.
    pub m: usize,
    pub tolerance: Tolerance,
}

impl Default for FuzzyParams {
    fn default() -> Self {
        FuzzyParams {
            m: 2,
            tolerance: Tolerance::RelativeToStd(0.2),
        }
    }
}

impl FuzzyParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::config("embedding dimension must be ≥ 1"));
        }
        let r = match self.tolerance {
            Tolerance::Absolute(r) | Tolerance::RelativeToStd(r) => r,
        };
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::config("fuzzy tolerance must be > 0"));
        }
        Ok(())
    }

    fn radius(&self, series: &[f64]) -> f64 {
        match self.tolerance {
            Tolerance::Absolute(r) => r,
            Tolerance::RelativeToStd(f) => {
                let n = series.len() as f64;
                let mu = series.iter().sum::<f64>() / n;
                f * (series.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt()
            }
        }
    }
}

/// |x_j(l) − u(j)| for the `count` baseline-removed delay vectors of
/// dimension `dim`, one column per component `l`.
fn abs_deviations(series: &[f64], dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(count); dim];
    for j in 0..count {
        let v = &series[j..j + dim];
        let u = v.iter().sum::<f64>() / dim as f64;
        for (col, x) in out.iter_mut().zip(v) {
            col.push((x - u).abs());
        }
    }
    out
}

/// Mean of D_jq over ordered pairs j ≠ q. `buf` is scratch space.
fn mean_similarity(devs: &[Vec<f64>], count: usize, r: f64, buf: &mut Vec<f64>) -> f64 {
    let c = -std::f64::consts::LN_2 / (r * r);
    let mut sum = 0.0;
    for j in 0..count.saturating_sub(1) {
        // Chebyshev distance from vector j to every later vector.
        buf.clear();
        buf.resize(count - j - 1, 0.0);
        for col in devs {
            let xj = col[j];
            for (d, xq) in buf.iter_mut().zip(&col[j + 1..count]) {
                *d = d.max((xj - xq).abs());
            }
        }
        sum += if r == 0.0 {
            // Only identical vectors are similar at zero tolerance.
            buf.iter().filter(|&&d| d == 0.0).count() as f64
        } else {
            buf.iter().map(|d| (c * d * d).exp()).sum::<f64>()
        };
    }
    2.0 * sum / (count * (count - 1)) as f64
}

/// Fuzzy entropy `ln S^m − ln S^{m+1}`, both averages taken over the same
/// `len − m` delay vectors.
pub fn fuzzy_entropy(series: &[f64], params: &FuzzyParams) -> Result<f64> {
    let m = params.m;
    if series.len() < m + 2 {
        return Err(Error::WindowTooShort { len: series.len(), m });
    }
    let count = series.len() - m;
    let r = params.radius(series);
    let mut buf = Vec::with_capacity(count);
    let s_m = mean_similarity(&abs_deviations(series, m, count), count, r, &mut buf);
    let s_m1 = mean_similarity(&abs_deviations(series, m + 1, count), count, r, &mut buf);
    Ok(s_m.ln() - s_m1.ln())
}

/// `Σ_i λ_i · fuzzy_entropy(a_i)`.
pub fn temporal_entropy(dec: &Decomposition, params: &FuzzyParams) -> Result<f64> {
    let mut h = 0.0;
    for mode in 0..dec.order() {
        let l = dec.lambda[mode];
        if l == 0.0 {
            continue;
        }
        h += l * fuzzy_entropy(&dec.temporal_coefficients(mode), params)?;
    }
    Ok(h)
}
