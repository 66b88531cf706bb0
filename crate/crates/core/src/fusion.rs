//! Multiscale statistic, KDE reference threshold and the alarm rule.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Detector configuration and calibration.
///
/// `window` and `alpha` are the tuned design variables; the normalizers and
/// `threshold` come from a normal-condition training segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Sliding window W, samples.
    pub window: usize,
    /// Weights of the dissimilarity, spatial and temporal entropy.
    pub alpha: [f64; 3],
    /// KDE confidence level β.
    pub beta: f64,
    /// Number of retained space-time modes.
    pub model_order: usize,
    /// Fuzzy-entropy embedding dimension m.
    pub embedding: usize,
    /// Fuzzy tolerance as a multiple of each series' standard deviation.
    pub tolerance: f64,
    /// Training maxima of h_d, h_s, h_t.
    pub max_hd: f64,
    pub max_hs: f64,
    pub max_ht: f64,
    /// Reference signal H_r.
    pub threshold: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            window: 27,
            alpha: [0.216, 0.573, 0.211],
            beta: 0.99,
            model_order: 1,
            embedding: 2,
            tolerance: 0.2,
            max_hd: 1.0,
            max_hs: 1.0,
            max_ht: 1.0,
            threshold: 1.0,
        }
    }
}

/// Params tuned on the shipped scenarios, including normalizers and
/// threshold fitted on a healthy run.
const TUNED: &str = include_str!("../../../scenarios/tuned_params.toml");

impl DetectorParams {
    pub fn tuned() -> Self {
        toml::from_str(TUNED).expect("shipped tuned params parse")
    }

    pub fn normalizers(&self) -> [f64; 3] {
        [self.max_hd, self.max_hs, self.max_ht]
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::key("window", "must be ≥ 1"));
        }
        if self.window < self.embedding + 2 {
            return Err(Error::key(
                "window",
                format!("must be ≥ embedding + 2 = {}", self.embedding + 2),
            ));
        }
        if self.model_order < 1 || self.model_order > self.window {
            return Err(Error::key("model_order", "must be in [1, window]"));
        }
        if self.embedding < 1 {
            return Err(Error::key("embedding", "must be ≥ 1"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::key("tolerance", "must be > 0"));
        }
        if self.alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::key("alpha", "each weight must be in [0, 1]"));
        }
        if (self.alpha.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::key("alpha", "weights must sum to 1"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::key("beta", "must be in (0, 1)"));
        }
        for (k, v) in [
            ("max_hd", self.max_hd),
            ("max_hs", self.max_hs),
            ("max_ht", self.max_ht),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::key(k, "training maximum must be > 0"));
            }
        }
        if !self.threshold.is_finite() {
            return Err(Error::key("threshold", "must be finite"));
        }
        Ok(())
    }
}

/// `value / training_max`, not clipped.
pub fn normalize(value: f64, training_max: f64) -> Result<f64> {
    if !(training_max > 0.0) {
        return Err(Error::config(format!(
            "training maximum must be > 0, got {training_max}"
        )));
    }
    Ok(value / training_max)
}

/// H = α₁[h_d] + α₂[h_s] + α₃[h_t].
pub fn multiscale_statistic(entropies: [f64; 3], alpha: &[f64; 3], normalizers: &[f64; 3]) -> f64 {
    entropies
        .iter()
        .zip(alpha)
        .zip(normalizers)
        .map(|((h, a), m)| a * h / m)
        .sum()
}

/// Gaussian kernel density estimate of the training statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    samples: Vec<f64>,
    bandwidth: f64,
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl KdeModel {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn density(&self, w: f64) -> f64 {
        let b = self.bandwidth;
        self.samples
            .iter()
            .map(|h| {
                let z = (w - h) / b;
                INV_SQRT_2PI * (-0.5 * z * z).exp()
            })
            .sum::<f64>()
            / (b * self.samples.len() as f64)
    }

    /// ∫_{-∞}^{w} g, in closed form through the normal CDF of each kernel.
    pub fn cdf(&self, w: f64) -> f64 {
        let b = self.bandwidth;
        self.samples
            .iter()
            .map(|h| 0.5 * erfc(-(w - h) / (b * std::f64::consts::SQRT_2)))
            .sum::<f64>()
            / self.samples.len() as f64
    }
}

/// Fits a KDE with bandwidth `1.06 σ_H L^{-1/5}` (σ_H the sample standard
/// deviation).
pub fn fit_kde(training: &[f64]) -> Result<KdeModel> {
    let n = training.len();
    if n < 2 {
        return Err(Error::DegenerateTraining(format!(
            "need ≥ 2 training samples, got {n}"
        )));
    }
    if training.iter().any(|h| !h.is_finite()) {
        return Err(Error::DegenerateTraining("non-finite training statistic".into()));
    }
    let mean = training.iter().sum::<f64>() / n as f64;
    let var = training.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sigma = var.sqrt();
    if !(sigma > 0.0) || training.iter().all(|&h| h == training[0]) {
        return Err(Error::DegenerateTraining(
            "training statistic has zero spread".into(),
        ));
    }
    Ok(KdeModel {
        samples: training.to_vec(),
        bandwidth: 1.06 * sigma * (n as f64).powf(-0.2),
    })
}

/// Smallest H_r with CDF(H_r) ≥ β, to within 1e-10.
///
/// Safeguarded Newton from the empirical β-quantile: steps that leave the
/// current bracket are replaced by bisection, and the root is confirmed by
/// a bracket of width 1e-10 around it.
pub fn threshold_from_kde(model: &KdeModel, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::key("beta", "must be in (0, 1)"));
    }
    const TOL: f64 = 1e-10;
    let b = model.bandwidth;
    let mut sorted = model.samples.clone();
    sorted.sort_by(f64::total_cmp);
    let mut lo = sorted[0] - 40.0 * b;
    let mut hi = sorted[sorted.len() - 1] + 40.0 * b;
    let mut x = sorted[((beta * sorted.len() as f64) as usize).min(sorted.len() - 1)];
    for _ in 0..100 {
        let fx = model.cdf(x) - beta;
        if fx >= 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= TOL {
            return Ok(hi);
        }
        let step = fx / model.density(x);
        if step.abs() < 0.1 * TOL {
            let (a, c) = (x - 0.5 * TOL, x + 0.5 * TOL);
            if model.cdf(a) < beta && model.cdf(c) >= beta {
                return Ok(c);
            }
        }
        let next = x - step;
        x = if step.is_finite() && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    // Newton stalled; finish by plain bisection.
    for _ in 0..400 {
        if hi - lo <= TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if model.cdf(mid) >= beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutcome {
    /// H(k) per frame, `None` during warm-up.
    pub statistic: Vec<Option<f64>>,
    pub alarms: Vec<bool>,
    /// Frame index of the first alarm (t_f).
    pub first_alarm: Option<usize>,
}

impl DetectionOutcome {
    pub fn is_normal(&self) -> bool {
        self.first_alarm.is_none()
    }

    /// First alarm at or after `from`.
    pub fn first_alarm_from(&self, from: usize) -> Option<usize> {
        self.alarms
            .iter()
            .enumerate()
            .skip(from)
            .find_map(|(k, &a)| a.then_some(k))
    }
}

/// Alarm wherever H(k) > H_r strictly; warm-up frames never alarm.
pub fn detect(statistic: &[Option<f64>], threshold: f64) -> DetectionOutcome {
    let alarms: Vec<bool> = statistic
        .iter()
        .map(|h| h.is_some_and(|h| h > threshold))
        .collect();
    let first_alarm = alarms.iter().position(|&a| a);
    DetectionOutcome {
        statistic: statistic.to_vec(),
        alarms,
        first_alarm,
    }
}
