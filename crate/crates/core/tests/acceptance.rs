//! Acceptance suite. Prints one PASS/FAIL line per criterion with the
//! measured values next to the pinned tolerances, then exits non-zero if
//! any criterion failed.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mif_core::benchmark::{load_scenarios, run_benchmark, simulate_scenario, REFERENCE_RESULTS};
use mif_core::fusion::{fit_kde, DetectorParams};
use mif_core::io::{load_scenario, write_telemetry};
use mif_core::lumped::dissimilarity_entropy;
use mif_core::optimizer::{
    detection_rate, mga_optimize, random_search, relative_delay, Candidate, EvaluationResult, Evaluator,
    GaConfig, MetricsConfig, PipelineEvaluator,
};
use mif_core::pipeline::{calibrate, entropy_streams, fuse, EntropyConfig, TRAINING_FRAMES};
use mif_core::sim::{simulate, CellSpec, FaultSpec, PackLayout, SimConfig};
use mif_core::spatiotemporal::{
    axis_entropy, decompose_window, fuzzy_entropy, sbf_variation, spatial_entropy, AxisSplit, Decomposition,
    FuzzyParams, Tolerance,
};
use mif_core::Result;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn identities() -> Result<Verdict> {
    let mut worst_two_valued: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let half = rng.random_range(1..20);
        let (lo, hi) = (rng.random_range(-5.0..5.0), rng.random_range(5.5..20.0));
        let mut z: Vec<f64> = (0..half).flat_map(|_| [lo, hi]).collect();
        let shift = rng.random_range(0..z.len());
        z.rotate_left(shift);
        worst_two_valued = worst_two_valued.max((dissimilarity_entropy(&z) - 1.0).abs());
    }
    let all_equal = dissimilarity_entropy(&[0.7; 6]);

    let layout = PackLayout::benchmark(&CellSpec::default())?;
    let split = AxisSplit::from_coordinates(&layout.cell_centers);
    let basis = |phi: Vec<f64>| Decomposition {
        phi: DMatrix::from_column_slice(24, 1, &phi),
        lambda: vec![1.0],
        a: DMatrix::from_element(1, 1, 1.0),
        effective_rank: 1,
    };
    let initial = basis(vec![0.2; 24]);
    let balanced = spatial_entropy(&sbf_variation(&basis(vec![0.3; 24]), &initial, &split)?);
    let one_sided: Vec<f64> = (0..24)
        .map(|i| {
            if split.is_lower(0, i) && split.is_lower(1, i) {
                0.5
            } else {
                0.2
            }
        })
        .collect();
    // Only cells in the lower half of both axes drift.
    let corner = spatial_entropy(&sbf_variation(&basis(one_sided), &initial, &split)?);
    let mut in_range = true;
    for _ in 0..200 {
        let phi: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = spatial_entropy(&sbf_variation(&basis(phi), &initial, &split)?);
        in_range &= (0.0..=1.0).contains(&h);
    }
    let axis_one = axis_entropy(1.0, 0.0);
    let constant = fuzzy_entropy(&[3.3; 30], &FuzzyParams::default())?;

    let ok = worst_two_valued <= 1e-9
        && all_equal == 0.0
        && balanced.abs() <= 1e-12
        && (corner - 1.0).abs() <= 1e-12
        && (axis_one - 1.0).abs() <= 1e-12
        && in_range
        && constant.abs() <= 1e-12;
    Ok(verdict(
        ok,
        format!(
            "two-valued |h_d-1|={worst_two_valued:.1e} (≤1e-9), all-equal h_d={all_equal}, \
             balanced h_s={balanced:.1e}, one-sided h_s={corner:.15} (1±1e-12), h_s in [0,1]: {in_range}, \
             constant fuzzy={constant:.1e} (±1e-12)"
        ),
    ))
}

fn oracles() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_svd: f64 = 0.0;
    for _ in 0..200 {
        let rows = rng.random_range(1..=8);
        let cols = rng.random_range(1..=8);
        let y = common::separated_window(&mut rng, rows, cols);
        let n = rng.random_range(1..=rows.min(cols));
        let got = decompose_window(&y, n, None)?.reconstruct();
        let want = common::rank_n_by_eigen(&y, n);
        worst_svd = worst_svd.max((got - want).abs().max());
    }
    let mut worst_fe: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(1..=3);
        let len = rng.random_range(m + 3..=12);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let factor = rng.random_range(0.1..0.5);
        let params = FuzzyParams {
            m,
            tolerance: Tolerance::RelativeToStd(factor),
        };
        let got = fuzzy_entropy(&x, &params)?;
        let want = common::fuzzy_entropy_by_pairs(&x, m, factor);
        worst_fe = worst_fe.max((got - want).abs());
    }
    Ok(verdict(
        worst_svd <= 1e-8 && worst_fe <= 1e-10,
        format!("rank-n max err {worst_svd:.1e} (≤1e-8), fuzzy max err {worst_fe:.1e} (≤1e-10)"),
    ))
}

fn threshold() -> Result<Verdict> {
    let cfg = load_scenario(&scenarios_dir().join("normal.toml"))?;
    let layout = PackLayout::benchmark(&cfg.cell)?;
    let sim = SimConfig {
        duration: TRAINING_FRAMES as f64,
        ..cfg.sim.clone()
    };
    let frames = simulate(&sim, &layout, &cfg.cell)?.frames;
    let params = DetectorParams::tuned();
    let stream = entropy_streams(&frames, EntropyConfig::from_params(&params), &layout.cell_centers)?;
    let cal = calibrate(&params, &[&stream])?;
    let h: Vec<f64> = fuse(&stream, &cal).into_iter().flatten().collect();
    let below = h.iter().filter(|&&x| x <= cal.threshold).count() as f64 / h.len() as f64;

    let kde = fit_kde(&h)?;
    let lo = h.iter().copied().fold(f64::INFINITY, f64::min) - 12.0 * kde.bandwidth();
    let hi = h.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 12.0 * kde.bandwidth();
    let steps = 20_000;
    let dx = (hi - lo) / steps as f64;
    let integral: f64 = (0..=steps)
        .map(|i| {
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * kde.density(lo + i as f64 * dx)
        })
        .sum::<f64>()
        * dx;
    let beta = cal.beta;
    Ok(verdict(
        below >= beta - 0.02 && (integral - 1.0).abs() <= 1e-3,
        format!(
            "coverage {:.4} over {} samples (≥ {:.2}), KDE integral {integral:.6} (1±1e-3)",
            below,
            h.len(),
            beta - 0.02
        ),
    ))
}

fn metric_arithmetic() -> Result<Verdict> {
    let adr = format!("{:.2}%", 100.0 * detection_rate(922, 1000)?);
    let eta = format!("{:.3}", relative_delay(1011.0, 1000.0, 1000.0));
    Ok(verdict(
        adr == "92.20%" && eta == "0.011",
        format!("ADR {adr} (92.20%), η3 {eta} (0.011)"),
    ))
}

fn benchmark() -> Result<Verdict> {
    let scenarios = load_scenarios(&scenarios_dir())?;
    let report = run_benchmark(&scenarios, &DetectorParams::tuned(), 0);
    let t = report.targets;
    for (row, r) in report.rows.iter().zip(REFERENCE_RESULTS) {
        let add = row.add.map_or("-".into(), |a| format!("{a:.0}"));
        let est = row.estimated_cell.map_or("-".into(), |c| format!("#{c}"));
        println!(
            "    scenario {}: ADD {add} s (≤{:.0}, ref {:.0}) ADR {:.1}% (≥{:.0}, ref {:.1}) \
             FAR {:.2}% (≤{:.0}, ref {:.2}) cell {est} vs #{} (ref #{}){}",
            row.id,
            t.max_add,
            r.0,
            100.0 * row.adr,
            100.0 * t.min_adr,
            r.1,
            100.0 * row.far,
            100.0 * t.max_far,
            r.2,
            row.true_cell,
            r.3,
            row.error
                .as_deref()
                .map(|e| format!(" error: {e}"))
                .unwrap_or_default()
        );
    }
    Ok(verdict(report.passed(), report.summary()))
}

/// Passes candidates through and checks each against the design-variable
/// constraints.
struct Audited<'e, E> {
    inner: &'e mut E,
    bounds: (usize, usize),
    violations: usize,
    seen: usize,
}

impl<E: Evaluator> Evaluator for Audited<'_, E> {
    fn evaluate(&mut self, c: &Candidate) -> Result<EvaluationResult> {
        self.seen += 1;
        let sum: f64 = c.alpha.iter().sum();
        let feasible = c.alpha.iter().all(|&a| a >= 0.0)
            && (sum - 1.0).abs() <= 4.0 * f64::EPSILON
            && (self.bounds.0..=self.bounds.1).contains(&c.window);
        if !feasible {
            self.violations += 1;
        }
        self.inner.evaluate(c)
    }
}

fn optimizer() -> Result<Verdict> {
    let scenarios = load_scenarios(&scenarios_dir())?;
    let sims = scenarios
        .iter()
        .map(|c| simulate_scenario(c, 0))
        .collect::<Result<Vec<_>>>()?;
    let coords = sims[0].0.cell_centers.clone();
    let runs: Vec<&[_]> = sims.iter().map(|(_, f)| f.as_slice()).collect();
    let base = DetectorParams::default();
    let mut ev = PipelineEvaluator::new(runs, &coords, base.clone(), MetricsConfig::default())?;
    let mut wins = 0;
    let mut violations = 0;
    let mut seen = 0;
    for seed in 0..10 {
        let ga = GaConfig {
            seed,
            ..GaConfig::default()
        };
        let mut audited = Audited {
            inner: &mut ev,
            bounds: ga.window_bounds,
            violations: 0,
            seen: 0,
        };
        let out = mga_optimize(&mut audited, &base, &ga)?;
        violations += audited.violations;
        seen += audited.seen;
        let (_, random) = random_search(&mut ev, 200, ga.window_bounds, 10_000 + seed)?;
        let won = out.result.objective < random.objective;
        wins += won as usize;
        println!(
            "    seed {seed}: GA {:.4} (W={}, α=[{:.3}, {:.3}, {:.3}]) vs random {:.4} {}",
            out.result.objective,
            out.best.window,
            out.best.alpha[0],
            out.best.alpha[1],
            out.best.alpha[2],
            random.objective,
            if won { "win" } else { "loss" }
        );
    }
    Ok(verdict(
        wins >= 9 && violations == 0,
        format!("GA wins {wins}/10 (≥9), infeasible individuals {violations}/{seen} (0)"),
    ))
}

fn physics() -> Result<Verdict> {
    let spec = CellSpec::default();
    let layout = PackLayout::benchmark(&spec)?;
    let fault = |cell, onset| FaultSpec {
        fault_cell: cell,
        r_short: 1.0,
        r_equiv: 0.005,
        onset,
    };
    let insulated = SimConfig {
        duration: 600.0,
        convective_coeff_forced: 0.0,
        convective_coeff_natural: 0.0,
        temp_noise_std: 0.0,
        voltage_noise_std: 0.0,
        fault: Some(fault(10, 50.0)),
        ..SimConfig::default()
    };
    let out = simulate(&insulated, &layout, &spec)?;
    let energy_err = ((out.final_energy - out.initial_energy) - out.injected_heat).abs() / out.injected_heat;

    let loaded = SimConfig {
        duration: 600.0,
        fault: Some(fault(4, 100.0)),
        ..SimConfig::default()
    };
    let a = simulate(&loaded, &layout, &spec)?;
    let b = simulate(&loaded, &layout, &spec)?;
    let bytes = |frames| {
        let mut buf = Vec::new();
        write_telemetry(frames, &mut buf).expect("in-memory write");
        buf
    };
    let identical = bytes(&a.frames) == bytes(&b.frames);
    let imbalance = a.max_current_imbalance.max(out.max_current_imbalance);
    Ok(verdict(
        energy_err <= 0.005 && imbalance <= 1e-9 && identical,
        format!(
            "energy error {:.3}% (≤0.5%), current imbalance {imbalance:.1e} A (≤1e-9), byte-identical rerun: {identical}",
            100.0 * energy_err
        ),
    ))
}

type Criterion = (usize, &'static str, Duration, fn() -> Result<Verdict>);

fn main() {
    let criteria: [Criterion; 7] = [
        (1, "entropy identities", Duration::from_secs(1), identities),
        (2, "oracle equivalence", Duration::from_secs(10), oracles),
        (3, "threshold calibration", Duration::from_secs(5), threshold),
        (4, "metric arithmetic", Duration::from_secs(1), metric_arithmetic),
        (5, "end-to-end benchmark", Duration::from_secs(300), benchmark),
        (6, "optimizer sanity", Duration::from_secs(600), optimizer),
        (7, "simulator physics", Duration::from_secs(30), physics),
    ];
    let only: Option<usize> = std::env::var("MIF_ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let v = run().unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        let took = start.elapsed();
        let passed = v.passed && took <= budget;
        failed += !passed as usize;
        println!(
            "criterion {id} [{}] {name}: {} | {:.2} s (budget {} s)",
            if passed { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
