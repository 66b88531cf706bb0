//! Dissimilarity entropy of the parallel-group voltages.
//!
//! Each group voltage gets a sliding coefficient of variation over the last
//! `W` samples; the CVs are Z-scored across groups and the asymmetry of the
//! Z-scores (absolute third moment over the 3/2 power of the variance) is
//! the dissimilarity entropy. All moments are population moments.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Spreads below this are treated as zero.
pub const DEGENERATE_SPREAD: f64 = 1e-15;

/// Fixed-capacity ring of the last `W` samples of several signals.
#[derive(Debug, Clone)]
pub struct SlidingWindowBuffer {
    capacity: usize,
    signals: Vec<VecDeque<f64>>,
}

impl SlidingWindowBuffer {
    pub fn new(n_signals: usize, capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be ≥ 1");
        SlidingWindowBuffer {
            capacity,
            signals: vec![VecDeque::with_capacity(capacity); n_signals],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn push(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.signals.len() {
            return Err(Error::Dimension(format!(
                "expected {} signals, got {}",
                self.signals.len(),
                sample.len()
            )));
        }
        for (ring, &v) in self.signals.iter_mut().zip(sample) {
            if ring.len() == self.capacity {
                ring.pop_front();
            }
            ring.push_back(v);
        }
        Ok(())
    }

    /// True once `W` samples are held.
    pub fn is_warm(&self) -> bool {
        self.signals.first().is_some_and(|r| r.len() == self.capacity)
    }

    pub fn signal(&self, i: usize) -> &VecDeque<f64> {
        &self.signals[i]
    }

    /// Sliding CV of every signal, `None` while warming up.
    pub fn cvs(&self) -> Option<Result<Vec<f64>>> {
        if !self.is_warm() {
            return None;
        }
        Some(
            self.signals
                .iter()
                .enumerate()
                .map(|(i, ring)| {
                    let (a, b) = ring.as_slices();
                    let mut window = Vec::with_capacity(ring.len());
                    window.extend_from_slice(a);
                    window.extend_from_slice(b);
                    sliding_cv(&window).map_err(|_| Error::ZeroMeanWindow { signal: i })
                })
                .collect(),
        )
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64], mu: f64) -> f64 {
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// σ/μ of one window.
pub fn sliding_cv(window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::Dimension("empty window".into()));
    }
    let mu = mean(window);
    if mu.abs() < 1e-12 {
        return Err(Error::ZeroMeanWindow { signal: 0 });
    }
    Ok(population_std(window, mu) / mu)
}

/// Z-scores of the CVs, with a flag set when their spread is degenerate
/// (all scores are then zero).
pub fn z_scores(cvs: &[f64]) -> (Vec<f64>, bool) {
    let mu = mean(cvs);
    let sigma = population_std(cvs, mu);
    if sigma < DEGENERATE_SPREAD {
        return (vec![0.0; cvs.len()], true);
    }
    (cvs.iter().map(|x| (x - mu).abs() / sigma).collect(), false)
}

/// Absolute-third-moment skewness of the Z-scores; 0 when they do not vary.
pub fn dissimilarity_entropy(z: &[f64]) -> f64 {
    let mu = mean(z);
    let var = z.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / z.len() as f64;
    if var < DEGENERATE_SPREAD {
        return 0.0;
    }
    let m3 = z.iter().map(|v| (v - mu).abs().powi(3)).sum::<f64>() / z.len() as f64;
    m3 / var.powf(1.5)
}

/// One step of the lumped-entropy stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedEntropy {
    pub cvs: Vec<f64>,
    pub z: Vec<f64>,
    pub degenerate: bool,
    pub h_d: f64,
}

/// Streams dissimilarity entropy from group-voltage samples.
#[derive(Debug, Clone)]
pub struct LumpedEntropyTracker {
    buffer: SlidingWindowBuffer,
}

impl LumpedEntropyTracker {
    pub fn new(n_groups: usize, window: usize) -> Self {
        LumpedEntropyTracker {
            buffer: SlidingWindowBuffer::new(n_groups, window),
        }
    }

    /// Pushes one sample; returns the entropy once the window is warm.
    pub fn push(&mut self, voltages: &[f64]) -> Result<Option<LumpedEntropy>> {
        self.buffer.push(voltages)?;
        let Some(cvs) = self.buffer.cvs() else {
            return Ok(None);
        };
        let cvs = cvs?;
        let (z, degenerate) = z_scores(&cvs);
        let h_d = dissimilarity_entropy(&z);
        Ok(Some(LumpedEntropy {
            cvs,
            z,
            degenerate,
            h_d,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cv_examples() {
        assert_eq!(sliding_cv(&[3.7; 10]).unwrap(), 0.0);
        assert!((sliding_cv(&[3.0, 5.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            sliding_cv(&[1.0, -1.0]),
            Err(Error::ZeroMeanWindow { .. })
        ));
    }

    #[test]
    fn z_score_example() {
        let (z, degenerate) = z_scores(&[1.0, 1.0, 1.0, 3.0]);
        assert!(!degenerate);
        let s = 0.75f64.sqrt();
        for (got, want) in z.iter().zip([0.5 / s, 0.5 / s, 0.5 / s, 1.5 / s]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((z[0] - 0.5774).abs() < 1e-4 && (z[3] - 1.7321).abs() < 1e-4);
    }

    #[test]
    fn z_scores_degenerate() {
        let (z, degenerate) = z_scores(&[0.2; 6]);
        assert!(degenerate);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn entropy_examples() {
        assert!((dissimilarity_entropy(&[0.0, 0.0, 2.0, 2.0]) - 1.0).abs() < 1e-12);
        assert_eq!(dissimilarity_entropy(&[0.7; 5]), 0.0);
        // Z = {0,0,0,3}: μ = 0.75, |dev| = {0.75 ×3, 2.25}.
        let m3 = (3.0 * 0.75f64.powi(3) + 2.25f64.powi(3)) / 4.0;
        let m2 = (3.0 * 0.75f64.powi(2) + 2.25f64.powi(2)) / 4.0;
        let want = m3 / m2.powf(1.5);
        assert!((dissimilarity_entropy(&[0.0, 0.0, 0.0, 3.0]) - want).abs() < 1e-12);
    }

    #[test]
    fn buffer_warms_and_evicts() {
        let mut buf = SlidingWindowBuffer::new(2, 3);
        for k in 0..2 {
            buf.push(&[k as f64 + 1.0, 2.0]).unwrap();
            assert!(!buf.is_warm());
        }
        buf.push(&[3.0, 2.0]).unwrap();
        assert!(buf.is_warm());
        buf.push(&[4.0, 2.0]).unwrap();
        assert_eq!(
            buf.signal(0).iter().copied().collect::<Vec<_>>(),
            vec![2.0, 3.0, 4.0]
        );
        assert!(buf.push(&[1.0]).is_err());
    }

    /// Closed form for a two-valued multiset with `k` copies of `a` and
    /// `n - k` copies of `b`: (p³q + q³p) / (pq)^{3/2} with p = k/n.
    fn two_valued(k: usize, n: usize) -> f64 {
        let p = k as f64 / n as f64;
        let q = 1.0 - p;
        (p * q.powi(3) + q * p.powi(3)) / (p * q).powf(1.5)
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut xs in prop::collection::vec(0.01f64..1.0, 6), seed in any::<u64>()) {
            let (z, _) = z_scores(&xs);
            let h = dissimilarity_entropy(&z);
            let k = (seed % 6) as usize;
            xs.rotate_left(k);
            xs.swap(0, 5);
            let (z2, _) = z_scores(&xs);
            prop_assert!((dissimilarity_entropy(&z2) - h).abs() < 1e-9);
        }

        #[test]
        fn affine_invariant(xs in prop::collection::vec(0.01f64..1.0, 6), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let (z, deg) = z_scores(&xs);
            prop_assume!(!deg);
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let (zy, _) = z_scores(&ys);
            prop_assert!((dissimilarity_entropy(&z) - dissimilarity_entropy(&zy)).abs() < 1e-6);
        }

        #[test]
        fn two_valued_matches_closed_form(lo in -3.0f64..3.0, gap in 0.01f64..5.0, n in 2usize..12, k_raw in 1usize..11) {
            let k = 1 + k_raw % (n - 1);
            let z: Vec<f64> = (0..n).map(|i| if i < k { lo } else { lo + gap }).collect();
            prop_assert!((dissimilarity_entropy(&z) - two_valued(k, n)).abs() < 1e-9);
        }

        #[test]
        fn output_depends_only_on_last_window(prefix_a in prop::collection::vec(3.0f64..4.2, 1..20),
                                              prefix_b in prop::collection::vec(3.0f64..4.2, 1..20),
                                              suffix in prop::collection::vec(3.0f64..4.2, 8)) {
            let run = |prefix: &[f64]| {
                let mut t = LumpedEntropyTracker::new(2, 8);
                for v in prefix {
                    t.push(&[*v, 3.6]).unwrap();
                }
                let mut last = None;
                for (j, v) in suffix.iter().enumerate() {
                    last = t.push(&[*v, 3.7 + 0.01 * (j % 3) as f64]).unwrap();
                }
                last
            };
            prop_assert_eq!(run(&prefix_a), run(&prefix_b));
        }
    }
}
