//! Frame-by-frame evaluation of the three entropies and their fusion.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fusion::{
    detect, fit_kde, multiscale_statistic, threshold_from_kde, DetectionOutcome, DetectorParams,
};
use crate::lumped::LumpedEntropyTracker;
use crate::sim::TelemetryFrame;
use crate::spatiotemporal::{
    decompose_window, sbf_variation, spatial_entropy, temporal_entropy, AxisSplit, Decomposition,
    FuzzyParams, Tolerance,
};

/// Frames used for normalizers and threshold.
pub const TRAINING_FRAMES: usize = 600;

/// Window-dependent settings of the entropy computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyConfig {
    pub window: usize,
    pub model_order: usize,
    pub fuzzy: FuzzyParams,
}

impl EntropyConfig {
    pub fn from_params(p: &DetectorParams) -> Self {
        EntropyConfig {
            window: p.window,
            model_order: p.model_order,
            fuzzy: FuzzyParams {
                m: p.embedding,
                tolerance: Tolerance::RelativeToStd(p.tolerance),
            },
        }
    }
}

/// The three entropies at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropySample {
    pub h_d: f64,
    pub h_s: f64,
    pub h_t: f64,
}

impl EntropySample {
    pub fn as_array(&self) -> [f64; 3] {
        [self.h_d, self.h_s, self.h_t]
    }
}

/// Streaming evaluator. The first full temperature window becomes the
/// reference decomposition for the spatial entropy.
#[derive(Debug, Clone)]
pub struct EntropyPipeline {
    cfg: EntropyConfig,
    split: AxisSplit,
    lumped: LumpedEntropyTracker,
    temps: VecDeque<Vec<f64>>,
    initial: Option<Decomposition>,
    keep_decompositions: usize,
    recent: VecDeque<Decomposition>,
}

impl EntropyPipeline {
    pub fn new(cfg: EntropyConfig, coords: &[[f64; 2]], n_groups: usize) -> Result<Self> {
        cfg.fuzzy.validate()?;
        if cfg.window < cfg.fuzzy.m + 2 {
            return Err(Error::key("window", format!("must be ≥ {}", cfg.fuzzy.m + 2)));
        }
        if cfg.model_order < 1 || cfg.model_order > cfg.window.min(coords.len()) {
            return Err(Error::key("model_order", "must be in [1, min(window, sensors)]"));
        }
        Ok(EntropyPipeline {
            cfg,
            split: AxisSplit::from_coordinates(coords),
            lumped: LumpedEntropyTracker::new(n_groups, cfg.window),
            temps: VecDeque::with_capacity(cfg.window),
            initial: None,
            keep_decompositions: 0,
            recent: VecDeque::new(),
        })
    }

    /// Retains the last `count` aligned decompositions for localization.
    pub fn retain_decompositions(mut self, count: usize) -> Self {
        self.keep_decompositions = count;
        self
    }

    pub fn config(&self) -> &EntropyConfig {
        &self.cfg
    }

    pub fn initial(&self) -> Option<&Decomposition> {
        self.initial.as_ref()
    }

    pub fn recent_decompositions(&self) -> impl Iterator<Item = &Decomposition> {
        self.recent.iter()
    }

    fn window_matrix(&self) -> DMatrix<f64> {
        let n = self.temps[0].len();
        DMatrix::from_fn(n, self.temps.len(), |i, j| self.temps[j][i])
    }

    pub fn push(&mut self, temperatures: &[f64], voltages: &[f64]) -> Result<Option<EntropySample>> {
        if temperatures.len() != self.split.n_sensors() {
            return Err(Error::Dimension(format!(
                "expected {} temperatures, got {}",
                self.split.n_sensors(),
                temperatures.len()
            )));
        }
        let lumped = self.lumped.push(voltages)?;
        if self.temps.len() == self.cfg.window {
            self.temps.pop_front();
        }
        self.temps.push_back(temperatures.to_vec());
        let Some(lumped) = lumped else {
            return Ok(None);
        };

        let y = self.window_matrix();
        let dec = decompose_window(&y, self.cfg.model_order, self.initial.as_ref())?;
        let initial = self.initial.get_or_insert_with(|| dec.clone());
        let h_s = spatial_entropy(&sbf_variation(&dec, initial, &self.split)?);
        let h_t = temporal_entropy(&dec, &self.cfg.fuzzy)?;
        if self.keep_decompositions > 0 {
            if self.recent.len() == self.keep_decompositions {
                self.recent.pop_front();
            }
            self.recent.push_back(dec);
        }
        Ok(Some(EntropySample {
            h_d: lumped.h_d,
            h_s,
            h_t,
        }))
    }
}

/// Entropy stream of a recorded dataset, `None` for warm-up frames.
pub fn entropy_streams(
    frames: &[TelemetryFrame],
    cfg: EntropyConfig,
    coords: &[[f64; 2]],
) -> Result<Vec<Option<EntropySample>>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let mut pipe = EntropyPipeline::new(cfg, coords, first.voltages.len())?;
    frames
        .iter()
        .map(|f| pipe.push(&f.temperatures, &f.voltages))
        .collect()
}

/// Aligned decompositions of the windows ending at each frame in
/// `ends` (inclusive), recomputed from the raw frames, plus the reference.
pub fn window_decompositions(
    frames: &[TelemetryFrame],
    cfg: &EntropyConfig,
    ends: std::ops::RangeInclusive<usize>,
) -> Result<(Decomposition, Vec<Decomposition>)> {
    let w = cfg.window;
    if frames.len() < w {
        return Err(Error::Dimension(format!(
            "{} frames cannot fill a window of {w}",
            frames.len()
        )));
    }
    let matrix = |end: usize| {
        let n = frames[0].temperatures.len();
        DMatrix::from_fn(n, w, |i, j| frames[end + 1 - w + j].temperatures[i])
    };
    let initial = decompose_window(&matrix(w - 1), cfg.model_order, None)?;
    let mut out = Vec::new();
    for end in ends {
        if end + 1 < w || end >= frames.len() {
            continue;
        }
        out.push(decompose_window(&matrix(end), cfg.model_order, Some(&initial))?);
    }
    Ok((initial, out))
}

/// Applies the fusion weights and normalizers to an entropy stream.
pub fn fuse(stream: &[Option<EntropySample>], params: &DetectorParams) -> Vec<Option<f64>> {
    let norm = params.normalizers();
    stream
        .iter()
        .map(|s| s.map(|s| multiscale_statistic(s.as_array(), &params.alpha, &norm)))
        .collect()
}

/// Training maxima of the three entropies over the ready frames of `stream`.
pub fn training_maxima(stream: &[Option<EntropySample>]) -> Result<[f64; 3]> {
    let mut max = [f64::NEG_INFINITY; 3];
    let mut count = 0;
    for s in stream.iter().flatten() {
        count += 1;
        for (m, h) in max.iter_mut().zip(s.as_array()) {
            *m = m.max(h);
        }
    }
    if count == 0 {
        return Err(Error::DegenerateTraining(
            "training segment is shorter than the window".into(),
        ));
    }
    for (name, m) in ["h_d", "h_s", "h_t"].iter().zip(max) {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::DegenerateTraining(format!(
                "{name} never rises above 0 on the training segment"
            )));
        }
    }
    Ok(max)
}

/// Fills the normalizers and threshold of `params` from training streams
/// (each a normal-condition segment).
pub fn calibrate(params: &DetectorParams, training: &[&[Option<EntropySample>]]) -> Result<DetectorParams> {
    let mut max = [f64::NEG_INFINITY; 3];
    for stream in training {
        let m = training_maxima(stream)?;
        for k in 0..3 {
            max[k] = max[k].max(m[k]);
        }
    }
    let mut out = params.clone();
    [out.max_hd, out.max_hs, out.max_ht] = max;
    let h: Vec<f64> = training.iter().flat_map(|s| fuse(s, &out)).flatten().collect();
    let kde = fit_kde(&h)?;
    out.threshold = threshold_from_kde(&kde, out.beta)?;
    Ok(out)
}

/// Calibrates on the first `training` frames of `stream`, then runs the
/// alarm rule over the whole stream.
pub fn calibrate_and_detect(
    params: &DetectorParams,
    stream: &[Option<EntropySample>],
    training: usize,
) -> Result<(DetectorParams, DetectionOutcome)> {
    let cut = training.min(stream.len());
    let calibrated = calibrate(params, &[&stream[..cut]])?;
    let outcome = detect(&fuse(stream, &calibrated), calibrated.threshold);
    Ok((calibrated, outcome))
}
