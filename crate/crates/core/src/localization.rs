//! Fault localization from the spatial-basis contribution map.

use std::io::Write;

use crate::error::{Error, Result};
use crate::pipeline::{window_decompositions, EntropyConfig};
use crate::sim::{PackLayout, TelemetryFrame};
use crate::spatiotemporal::Decomposition;

/// Per-sensor contribution C(z_i) over the alarm window.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMap {
    pub contributions: Vec<f64>,
    /// Alarm window `[start, end]` as frame indices.
    pub window: (usize, usize),
}

impl ContributionMap {
    /// Sensor with the largest contribution; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.contributions.iter().enumerate() {
            if c > self.contributions[best] {
                best = i;
            }
        }
        best
    }

    /// Writes `cell,serial,x,y,C` rows.
    pub fn write_csv<W: Write>(&self, layout: &PackLayout, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cell,serial,x,y,C")?;
        for (i, c) in self.contributions.iter().enumerate() {
            let [x, y] = layout.cell_centers[i];
            writeln!(out, "{i},{},{x:.6},{y:.6},{c:.12e}", i + 1)?;
        }
        Ok(())
    }
}

/// C(z_i) = 1/(nW) Σ_k Σ_j |φ_j^k(z_i) − φ_j^0(z_i)| over the supplied
/// window decompositions, which must already be sign-aligned to `initial`.
pub fn contribution(
    decs: &[Decomposition],
    initial: &Decomposition,
    window: (usize, usize),
) -> Result<ContributionMap> {
    if decs.is_empty() {
        return Err(Error::Dimension("no decompositions in the alarm window".into()));
    }
    let n_sensors = initial.n_sensors();
    let order = initial.order();
    let mut c = vec![0.0; n_sensors];
    for d in decs {
        if d.n_sensors() != n_sensors || d.order() != order {
            return Err(Error::Dimension(format!(
                "decomposition is {}×{}, reference is {n_sensors}×{order}",
                d.n_sensors(),
                d.order()
            )));
        }
        for j in 0..order {
            for (i, ci) in c.iter_mut().enumerate() {
                *ci += (d.phi[(i, j)] - initial.phi[(i, j)]).abs();
            }
        }
    }
    let scale = 1.0 / (order * decs.len()) as f64;
    c.iter_mut().for_each(|v| *v *= scale);
    Ok(ContributionMap {
        contributions: c,
        window,
    })
}

/// Serial number (1-based) of the cell owning the top contributor.
pub fn localize(map: &ContributionMap) -> usize {
    map.argmax() + 1
}

/// Contribution map of the `W` windows ending at alarm frame `t_f`,
/// recomputed from the raw frames.
pub fn contribution_at(
    frames: &[TelemetryFrame],
    cfg: &EntropyConfig,
    t_f: usize,
) -> Result<ContributionMap> {
    let w = cfg.window;
    if t_f + 1 < w {
        return Err(Error::AlarmInWarmup { t_f, window: w });
    }
    if t_f >= frames.len() {
        return Err(Error::Dimension(format!(
            "alarm frame {t_f} is past the end of a {}-frame dataset",
            frames.len()
        )));
    }
    // Windows ending before the first full window are skipped.
    let start = (t_f + 1).saturating_sub(w).max(w - 1);
    let (initial, decs) = window_decompositions(frames, cfg, start..=t_f)?;
    contribution(&decs, &initial, (start, t_f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatiotemporal::decompose_window;
    use nalgebra::DMatrix;

    fn dec_with_phi(phi: DMatrix<f64>) -> Decomposition {
        let n = phi.ncols();
        Decomposition {
            phi,
            lambda: vec![1.0; n],
            a: DMatrix::zeros(n, 3),
            effective_rank: n,
        }
    }

    #[test]
    fn identical_decompositions_give_zero() {
        let y = DMatrix::from_fn(6, 5, |i, j| 1.0 + (i * 3 + j * j) as f64 * 0.1);
        let d = decompose_window(&y, 2, None).unwrap();
        let map = contribution(&[d.clone(), d.clone()], &d, (0, 1)).unwrap();
        assert!(map.contributions.iter().all(|&c| c == 0.0));
        assert_eq!(localize(&map), 1);
    }

    #[test]
    fn single_mode_single_frame_is_absolute_difference() {
        let init = dec_with_phi(DMatrix::from_column_slice(3, 1, &[0.6, 0.0, 0.8]));
        let cur = dec_with_phi(DMatrix::from_column_slice(3, 1, &[0.0, 0.6, 0.8]));
        let map = contribution(&[cur], &init, (4, 4)).unwrap();
        assert_eq!(map.contributions, vec![0.6, 0.6, 0.0]);
    }

    #[test]
    fn perturbed_sensor_wins() {
        let init = dec_with_phi(DMatrix::from_element(6, 2, 0.4));
        let mut phi = DMatrix::from_element(6, 2, 0.4);
        phi[(3, 0)] += 0.3;
        phi[(3, 1)] -= 0.2;
        let map = contribution(&[dec_with_phi(phi)], &init, (0, 0)).unwrap();
        assert_eq!(localize(&map), 4);
        assert!((map.contributions[3] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lowest_serial() {
        let map = ContributionMap {
            contributions: vec![0.1, 0.5, 0.2, 0.5],
            window: (0, 0),
        };
        assert_eq!(localize(&map), 2);
    }

    #[test]
    fn scaling_keeps_argmax() {
        let map = ContributionMap {
            contributions: vec![0.3, 0.1, 0.7, 0.2],
            window: (0, 0),
        };
        let scaled = ContributionMap {
            contributions: map.contributions.iter().map(|c| c * 17.5).collect(),
            ..map.clone()
        };
        assert_eq!(localize(&map), localize(&scaled));
    }
}
