//! Detection metrics and the modified genetic algorithm over (W, α).

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fusion::{detect, DetectionOutcome, DetectorParams};
use crate::pipeline::{calibrate, entropy_streams, fuse, EntropyConfig, EntropySample, TRAINING_FRAMES};
use crate::sim::TelemetryFrame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    /// Reference time t_r used to scale detection delay, s.
    pub reference_time: f64,
    /// First frame that is scored; earlier frames are used for calibration.
    pub test_start: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            reference_time: 1000.0,
            test_start: TRAINING_FRAMES,
        }
    }
}

/// Alarm counts of one labeled run over its scored frames.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScenarioCounts {
    /// Alarms on abnormal frames.
    pub n_da: usize,
    /// Abnormal frames.
    pub n_ta: usize,
    /// Alarms on normal frames.
    pub n_f: usize,
    /// Normal frames past warm-up.
    pub n_tn: usize,
    /// Time of the first abnormal frame, s.
    pub onset: Option<f64>,
    /// Time of the first alarm at or after onset, s.
    pub detection: Option<f64>,
    /// Length of the abnormal segment, s.
    pub abnormal_duration: f64,
}

impl ScenarioCounts {
    pub fn from_outcome(
        outcome: &DetectionOutcome,
        frames: &[TelemetryFrame],
        test_start: usize,
    ) -> Result<Self> {
        if outcome.alarms.len() != frames.len() {
            return Err(Error::Dimension(format!(
                "{} alarms for {} frames",
                outcome.alarms.len(),
                frames.len()
            )));
        }
        let mut c = ScenarioCounts::default();
        for (k, f) in frames.iter().enumerate().skip(test_start) {
            let alarm = outcome.alarms[k];
            if f.abnormal {
                c.n_ta += 1;
                c.n_da += alarm as usize;
                if c.onset.is_none() {
                    c.onset = Some(f.t);
                }
                if alarm && c.detection.is_none() {
                    c.detection = Some(f.t);
                }
            } else if outcome.statistic[k].is_some() {
                c.n_tn += 1;
                c.n_f += alarm as usize;
            }
        }
        if let Some(onset) = c.onset {
            let step = match frames {
                [a, b, ..] => b.t - a.t,
                _ => 0.0,
            };
            c.abnormal_duration = frames.last().map_or(0.0, |f| f.t) - onset + step;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationResult {
    /// η₁, abnormal detection rate.
    pub adr: f64,
    /// η₂, false alarm rate.
    pub far: f64,
    /// η₃, mean relative detection delay.
    pub relative_delay: f64,
    pub objective: f64,
}

impl EvaluationResult {
    pub fn infeasible() -> Self {
        EvaluationResult {
            adr: 0.0,
            far: 1.0,
            relative_delay: f64::INFINITY,
            objective: f64::INFINITY,
        }
    }
}

/// η₁ = N_da / N_ta.
pub fn detection_rate(n_da: usize, n_ta: usize) -> Result<f64> {
    if n_ta == 0 {
        return Err(Error::Labeling("no abnormal frames".into()));
    }
    Ok(n_da as f64 / n_ta as f64)
}

/// η₂ = N_f / N_tn.
pub fn false_alarm_rate(n_f: usize, n_tn: usize) -> Result<f64> {
    if n_tn == 0 {
        return Err(Error::Labeling("no normal frames".into()));
    }
    Ok(n_f as f64 / n_tn as f64)
}

/// η₃ = (t_d − t_a) / t_r.
pub fn relative_delay(t_d: f64, t_a: f64, reference_time: f64) -> f64 {
    (t_d - t_a) / reference_time
}

/// F = 1/η₁ + η₂ + η₃; +∞ when nothing is detected.
pub fn objective(adr: f64, far: f64, relative_delay: f64) -> f64 {
    if adr <= 0.0 {
        return f64::INFINITY;
    }
    1.0 / adr + far + relative_delay
}

/// Pools counts over runs. A run that never alarms after onset is charged
/// its whole abnormal segment as delay.
pub fn compute_metrics(runs: &[ScenarioCounts], cfg: &MetricsConfig) -> Result<EvaluationResult> {
    let sum = |f: fn(&ScenarioCounts) -> usize| runs.iter().map(f).sum::<usize>();
    let adr = detection_rate(sum(|c| c.n_da), sum(|c| c.n_ta))?;
    let far = false_alarm_rate(sum(|c| c.n_f), sum(|c| c.n_tn))?;
    let delays: Vec<f64> = runs
        .iter()
        .filter_map(|c| {
            let onset = c.onset?;
            Some(match c.detection {
                Some(t_d) => relative_delay(t_d, onset, cfg.reference_time),
                None => c.abnormal_duration / cfg.reference_time,
            })
        })
        .collect();
    let eta3 = delays.iter().sum::<f64>() / delays.len() as f64;
    Ok(EvaluationResult {
        adr,
        far,
        relative_delay: eta3,
        objective: objective(adr, far, eta3),
    })
}

/// Design variables of the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub window: usize,
    pub alpha: [f64; 3],
}

impl Candidate {
    pub fn from_params(p: &DetectorParams) -> Self {
        Candidate {
            window: p.window,
            alpha: p.alpha,
        }
    }

    pub fn apply(&self, base: &DetectorParams) -> DetectorParams {
        DetectorParams {
            window: self.window,
            alpha: self.alpha,
            ..base.clone()
        }
    }

    fn key(&self) -> (usize, [u64; 3]) {
        (self.window, self.alpha.map(f64::to_bits))
    }
}

/// Euclidean projection onto {α ≥ 0, Σα = 1}.
pub fn project_to_simplex(v: [f64; 3]) -> [f64; 3] {
    let mut u = v;
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut out = v.map(|x| (x - theta).max(0.0));
    // Rounding can leave the sum a few ulps off.
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= s);
    out
}

/// Uniform draw on the 2-simplex.
pub fn sample_simplex<R: Rng>(rng: &mut R) -> [f64; 3] {
    let mut a: f64 = rng.random();
    let mut b: f64 = rng.random();
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    [a, b - a, 1.0 - b]
}

pub trait Evaluator {
    fn evaluate(&mut self, candidate: &Candidate) -> Result<EvaluationResult>;
}

/// Scores candidates on labeled runs: each run is calibrated on its own
/// first `test_start` frames and scored on the rest. Entropy streams are
/// cached per window size and shared by every α at that size.
pub struct PipelineEvaluator<'a> {
    runs: Vec<&'a [TelemetryFrame]>,
    coords: &'a [[f64; 2]],
    base: DetectorParams,
    metrics: MetricsConfig,
    streams: HashMap<usize, Vec<Vec<Option<EntropySample>>>>,
    memo: HashMap<(usize, [u64; 3]), EvaluationResult>,
    evaluations: usize,
}

impl<'a> PipelineEvaluator<'a> {
    pub fn new(
        runs: Vec<&'a [TelemetryFrame]>,
        coords: &'a [[f64; 2]],
        base: DetectorParams,
        metrics: MetricsConfig,
    ) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Labeling("no runs to evaluate on".into()));
        }
        if !runs
            .iter()
            .any(|r| r.iter().skip(metrics.test_start).any(|f| f.abnormal))
        {
            return Err(Error::Labeling(
                "no run has abnormal frames after calibration".into(),
            ));
        }
        Ok(PipelineEvaluator {
            runs,
            coords,
            base,
            metrics,
            streams: HashMap::new(),
            memo: HashMap::new(),
            evaluations: 0,
        })
    }

    /// Number of distinct candidates scored so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    fn streams_for(&mut self, window: usize) -> Result<&Vec<Vec<Option<EntropySample>>>> {
        if !self.streams.contains_key(&window) {
            let cfg = EntropyConfig::from_params(&DetectorParams {
                window,
                ..self.base.clone()
            });
            let s = self
                .runs
                .iter()
                .map(|r| entropy_streams(r, cfg, self.coords))
                .collect::<Result<Vec<_>>>()?;
            self.streams.insert(window, s);
        }
        Ok(&self.streams[&window])
    }

    fn score(&mut self, c: &Candidate) -> Result<EvaluationResult> {
        let params = c.apply(&self.base);
        params.validate()?;
        let test_start = self.metrics.test_start;
        let metrics = self.metrics;
        let runs = self.runs.clone();
        let streams = self.streams_for(c.window)?;
        let mut counts = Vec::with_capacity(runs.len());
        for (frames, stream) in runs.iter().zip(streams) {
            let cut = test_start.min(stream.len());
            let cal = calibrate(&params, &[&stream[..cut]])?;
            let outcome = detect(&fuse(stream, &cal), cal.threshold);
            counts.push(ScenarioCounts::from_outcome(&outcome, frames, test_start)?);
        }
        compute_metrics(&counts, &metrics)
    }
}

impl Evaluator for PipelineEvaluator<'_> {
    /// Candidates that fail calibration score as infeasible rather than
    /// aborting the search.
    fn evaluate(&mut self, c: &Candidate) -> Result<EvaluationResult> {
        if let Some(r) = self.memo.get(&c.key()) {
            return Ok(*r);
        }
        let r = match self.score(c) {
            Ok(r) => r,
            Err(Error::DegenerateTraining(msg)) => {
                log::warn!("candidate W={} α={:?} infeasible: {msg}", c.window, c.alpha);
                EvaluationResult::infeasible()
            }
            Err(e) => return Err(e),
        };
        self.evaluations += 1;
        self.memo.insert(c.key(), r);
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Gaussian σ of α mutation at the first and last generation.
    pub mutation_scale: (f64, f64),
    /// Largest W step at the first generation; shrinks with the α scale.
    pub window_step: usize,
    pub elites: usize,
    /// Fresh random individuals injected per generation.
    pub immigrants: usize,
    pub window_bounds: (usize, usize),
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 30,
            generations: 50,
            tournament: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.3,
            mutation_scale: (0.2, 0.02),
            window_step: 12,
            elites: 2,
            immigrants: 3,
            window_bounds: (5, 200),
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.window_bounds;
        if lo < 4 || hi < lo {
            return Err(Error::key("window_bounds", "need 4 ≤ lower ≤ upper"));
        }
        if self.population < 4 || self.tournament < 1 || self.generations < 1 {
            return Err(Error::config("population ≥ 4, tournament ≥ 1, generations ≥ 1"));
        }
        if self.elites + self.immigrants >= self.population {
            return Err(Error::config("elites + immigrants must leave room for offspring"));
        }
        for (k, p) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::key(k, "must be in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationLog {
    pub generation: usize,
    pub best_objective: f64,
    pub mean_objective: f64,
    pub best: Candidate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub best: Candidate,
    pub result: EvaluationResult,
    pub history: Vec<GenerationLog>,
    /// True when no feasible candidate was found and `best` is the default.
    pub fallback: bool,
}

/// Writes the per-generation log as CSV.
pub fn write_log<W: Write>(history: &[GenerationLog], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "generation,best_objective,mean_objective,best_window,best_alpha1,best_alpha2,best_alpha3"
    )?;
    for g in history {
        let [a1, a2, a3] = g.best.alpha;
        writeln!(
            out,
            "{},{:.9},{:.9},{},{a1:.9},{a2:.9},{a3:.9}",
            g.generation, g.best_objective, g.mean_objective, g.best.window
        )?;
    }
    Ok(())
}

fn random_candidate<R: Rng>(rng: &mut R, bounds: (usize, usize)) -> Candidate {
    Candidate {
        window: rng.random_range(bounds.0..=bounds.1),
        alpha: sample_simplex(rng),
    }
}

struct Scored {
    c: Candidate,
    r: EvaluationResult,
}

fn score_all<E: Evaluator>(ev: &mut E, pop: Vec<Candidate>) -> Result<Vec<Scored>> {
    let mut out = pop
        .into_iter()
        .map(|c| {
            Ok(Scored {
                r: ev.evaluate(&c)?,
                c,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // Stable: earlier individuals win ties.
    out.sort_by(|a, b| a.r.objective.total_cmp(&b.r.objective));
    Ok(out)
}

fn tournament<'p, R: Rng>(pop: &'p [Scored], k: usize, rng: &mut R) -> &'p Candidate {
    // `pop` is sorted, so the lowest drawn index is the fittest.
    let best = (0..k).map(|_| rng.random_range(0..pop.len())).min().unwrap();
    &pop[best].c
}

fn blend<R: Rng>(a: f64, b: f64, rng: &mut R) -> f64 {
    let (lo, hi) = (a.min(b), a.max(b));
    let d = 0.5 * (hi - lo);
    if d == 0.0 {
        return lo;
    }
    rng.random_range(lo - d..=hi + d)
}

/// Genetic search over W ∈ window_bounds and α on the simplex. The
/// population is seeded with the base parameters; elites survive unchanged,
/// so the best objective never worsens between generations.
pub fn mga_optimize<E: Evaluator>(ev: &mut E, base: &DetectorParams, ga: &GaConfig) -> Result<GaOutcome> {
    ga.validate()?;
    let (lo, hi) = ga.window_bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(ga.seed);
    let clamp_w = |w: f64| (w.round().max(lo as f64).min(hi as f64)) as usize;

    let mut pop = vec![Candidate {
        window: base.window.clamp(lo, hi),
        alpha: project_to_simplex(base.alpha),
    }];
    while pop.len() < ga.population {
        pop.push(random_candidate(&mut rng, ga.window_bounds));
    }
    let mut scored = score_all(ev, pop)?;
    let mut history = Vec::with_capacity(ga.generations);

    for g in 0..ga.generations {
        let frac = if ga.generations > 1 {
            g as f64 / (ga.generations - 1) as f64
        } else {
            0.0
        };
        let sigma = ga.mutation_scale.0 + (ga.mutation_scale.1 - ga.mutation_scale.0) * frac;
        let step = ((ga.window_step as f64 * sigma / ga.mutation_scale.0).round() as i64).max(1);
        let gauss = Normal::new(0.0, sigma.max(1e-12)).expect("finite σ");

        let mut next: Vec<Candidate> = scored.iter().take(ga.elites).map(|s| s.c).collect();
        for _ in 0..ga.immigrants {
            next.push(random_candidate(&mut rng, ga.window_bounds));
        }
        while next.len() < ga.population {
            let p1 = *tournament(&scored, ga.tournament, &mut rng);
            let p2 = *tournament(&scored, ga.tournament, &mut rng);
            let mut child = p1;
            if rng.random_bool(ga.crossover_rate) {
                child.window = clamp_w(blend(p1.window as f64, p2.window as f64, &mut rng));
                let a: [f64; 3] = std::array::from_fn(|i| blend(p1.alpha[i], p2.alpha[i], &mut rng));
                child.alpha = project_to_simplex(a);
            }
            if rng.random_bool(ga.mutation_rate) {
                let a: [f64; 3] = std::array::from_fn(|i| child.alpha[i] + gauss.sample(&mut rng));
                child.alpha = project_to_simplex(a);
            }
            if rng.random_bool(ga.mutation_rate) {
                let d = rng.random_range(1..=step) * if rng.random_bool(0.5) { 1 } else { -1 };
                child.window = clamp_w(child.window as f64 + d as f64);
            }
            next.push(child);
        }
        scored = score_all(ev, next)?;

        let mean = scored.iter().map(|s| s.r.objective).sum::<f64>() / scored.len() as f64;
        history.push(GenerationLog {
            generation: g + 1,
            best_objective: scored[0].r.objective,
            mean_objective: mean,
            best: scored[0].c,
        });
        log::debug!(
            "generation {}: best {:.4} (W={}, α={:?})",
            g + 1,
            scored[0].r.objective,
            scored[0].c.window,
            scored[0].c.alpha
        );
    }

    let best = &scored[0];
    if best.r.objective.is_finite() {
        Ok(GaOutcome {
            best: best.c,
            result: best.r,
            history,
            fallback: false,
        })
    } else {
        log::warn!("no feasible candidate found; keeping the default parameters");
        let d = DetectorParams::default();
        Ok(GaOutcome {
            best: Candidate::from_params(&d),
            result: best.r,
            history,
            fallback: true,
        })
    }
}

/// Baseline: `samples` uniform draws, best kept.
pub fn random_search<E: Evaluator>(
    ev: &mut E,
    samples: usize,
    bounds: (usize, usize),
    seed: u64,
) -> Result<(Candidate, EvaluationResult)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Candidate, EvaluationResult)> = None;
    for _ in 0..samples.max(1) {
        let c = random_candidate(&mut rng, bounds);
        let r = ev.evaluate(&c)?;
        if best.is_none_or(|(_, b)| r.objective < b.objective) {
            best = Some((c, r));
        }
    }
    Ok(best.expect("at least one sample"))
}
