//! Experiment orchestration: scene specification, end-to-end pipeline runs
//! (gridless ANM in decoupled or full form, or the basis-pursuit baseline),
//! matching metrics against the ground truth, and plot-ready artifacts.
//!
//! A run writes `scene.json`, `solution.json`, `metrics.json`,
//! `dualpoly.csv` and `supports.csv` into the output directory. Timings go
//! to a separate `timings.json` so that `metrics.json` is byte-identical
//! across reruns of the same configuration.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::baseline::{
    basis_pursuit, build_dictionary, support_from_coeffs, BpOptions, GridSpec,
};
use crate::certificate::{
    dual_from_multipliers, eval_q_grid, extract_support, solve_amplitudes, uniform_f_grid,
    uniform_theta_grid, verify_certificate, wrap_dist, CertTolerances, CertificateReport,
    DualPolynomial, Estimate, ExtractOptions, QCorrection,
};
use crate::conic::{assemble_decoupled, assemble_full};
use crate::model::{add_noise, synthesize, ChirpComponent, ChirpScene, Measurements};
use crate::solver::{solve, SolverOptions, SolverStatus};
use crate::{Error, Result};

/// Which reconstruction path a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    AnmDecoupled,
    AnmFull,
    Bp,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::AnmDecoupled => "anm-decoupled",
            Method::AnmFull => "anm-full",
            Method::Bp => "bp",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anm-decoupled" => Ok(Method::AnmDecoupled),
            "anm-full" => Ok(Method::AnmFull),
            "bp" => Ok(Method::Bp),
            other => Err(Error::Precondition(format!("unknown method '{other}'"))),
        }
    }
}

/// Scene source: explicit components or a seeded random generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", untagged)]
pub enum SceneSpec {
    Components(Vec<ChirpComponent>),
    Random(RandomScene),
}

/// Seeded scene generator: `k` unit-amplitude components with random phase,
/// wraparound frequency separation at least `min_f_separation`, and rates
/// drawn from `[rate_lo, rate_hi] * rate_bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomScene {
    pub k: usize,
    pub seed: u64,
    #[serde(default = "default_min_sep")]
    pub min_f_separation: f64,
    #[serde(default = "default_rate_lo")]
    pub rate_lo: f64,
    #[serde(default = "default_rate_hi")]
    pub rate_hi: f64,
}

fn default_min_sep() -> f64 {
    0.0
}
fn default_rate_lo() -> f64 {
    0.1
}
fn default_rate_hi() -> f64 {
    0.9
}

/// Noise injection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

/// A complete experiment description, deserializable from a JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n: usize,
    pub rate_bound: f64,
    pub scene: SceneSpec,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    pub solver: SolverOptions,
    pub extract: ExtractOptions,
    pub certificate: CertTolerances,
    /// Verification / dual-polynomial dump grid (f cells, theta cells).
    pub grid: (usize, usize),
    pub bp_grid: GridSpec,
    pub bp: BpOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 25,
            rate_bound: 0.02,
            scene: SceneSpec::Components(Vec::new()),
            method: Method::AnmDecoupled,
            noise: None,
            solver: SolverOptions {
                // Splitting penalty matched to the scale of the assembled
                // atomic-norm programs; the paper-size problems converge in
                // a fraction of the iterations needed from 1.0.
                penalty: 0.01,
                ..SolverOptions::default()
            },
            extract: ExtractOptions::default(),
            certificate: CertTolerances::default(),
            grid: (2048, 512),
            bp_grid: GridSpec::default(),
            bp: BpOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn scene(&self) -> Result<ChirpScene> {
        match &self.scene {
            SceneSpec::Components(c) => ChirpScene::new(self.n, self.rate_bound, c.clone()),
            SceneSpec::Random(r) => random_scene(self.n, self.rate_bound, r),
        }
    }
}

/// Draws a random scene per [`RandomScene`], rejecting frequency layouts
/// closer than the separation rule.
pub fn random_scene(n: usize, rate_bound: f64, spec: &RandomScene) -> Result<ChirpScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut unit = move || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let mut freqs: Vec<f64> = Vec::with_capacity(spec.k);
    let mut guard = 0;
    while freqs.len() < spec.k {
        guard += 1;
        if guard > 100_000 {
            return Err(Error::Precondition(
                "could not satisfy the frequency separation rule".into(),
            ));
        }
        let f = unit();
        if freqs.iter().all(|&g| wrap_dist(f, g) >= spec.min_f_separation) {
            freqs.push(f);
        }
    }
    let components = freqs
        .into_iter()
        .map(|f| {
            let theta = rate_bound * (spec.rate_lo + (spec.rate_hi - spec.rate_lo) * unit());
            let phase = std::f64::consts::TAU * unit();
            ChirpComponent::new(Complex64::from_polar(1.0, phase), f, theta)
        })
        .collect::<Result<Vec<_>>>()?;
    ChirpScene::new(n, rate_bound, components)
}

/// One matched truth/estimate pair with its errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub truth_f: f64,
    pub truth_theta: f64,
    pub est_f: f64,
    pub est_theta: f64,
    /// Wraparound distance, in `[0, 0.5]`.
    pub f_error: f64,
    pub theta_error: f64,
    /// `|c_est - c_true|`; absent when the estimate carries no amplitude.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude_error: Option<f64>,
}

/// Matching of estimated against true supports.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_truth: usize,
    pub unmatched_estimate: usize,
}

impl MatchReport {
    pub fn max_f_error(&self) -> f64 {
        self.pairs.iter().map(|p| p.f_error).fold(0.0, f64::max)
    }

    pub fn max_theta_error(&self) -> f64 {
        self.pairs.iter().map(|p| p.theta_error).fold(0.0, f64::max)
    }

    pub fn max_amplitude_error(&self) -> f64 {
        self.pairs
            .iter()
            .filter_map(|p| p.amplitude_error)
            .fold(0.0, f64::max)
    }
}

const MATCH_EXHAUSTIVE_LIMIT: usize = 6;

/// Minimum-cost matching of `min(K, K-hat)` pairs under the cost
/// `wrap(f, f') + N * |theta - theta'|`; exhaustive over assignments for up
/// to six components per side.
pub fn match_supports(
    truth: &[ChirpComponent],
    estimate: &[ChirpComponent],
    n: usize,
) -> MatchReport {
    let k_t = truth.len();
    let k_e = estimate.len();
    let k = k_t.min(k_e);
    if k == 0 {
        return MatchReport {
            pairs: Vec::new(),
            unmatched_truth: k_t,
            unmatched_estimate: k_e,
        };
    }
    let cost = |t: &ChirpComponent, e: &ChirpComponent| -> f64 {
        wrap_dist(t.freq(), e.freq()) + n as f64 * (t.rate() - e.rate()).abs()
    };
    // Exhaustive assignment over the smaller side into the larger.
    let (small, large, truth_small) = if k_t <= k_e {
        (truth, estimate, true)
    } else {
        (estimate, truth, false)
    };
    assert!(
        small.len() <= MATCH_EXHAUSTIVE_LIMIT,
        "matching supports up to {MATCH_EXHAUSTIVE_LIMIT} components"
    );
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut assignment = Vec::with_capacity(small.len());
    fn recurse(
        small: &[ChirpComponent],
        large: &[ChirpComponent],
        cost: &impl Fn(&ChirpComponent, &ChirpComponent) -> f64,
        used: &mut Vec<usize>,
        acc: f64,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        let i = used.len();
        if i == small.len() {
            if best.as_ref().map(|(c, _)| acc < *c).unwrap_or(true) {
                *best = Some((acc, used.clone()));
            }
            return;
        }
        for j in 0..large.len() {
            if used.contains(&j) {
                continue;
            }
            used.push(j);
            recurse(small, large, cost, used, acc + cost(&small[i], &large[j]), best);
            used.pop();
        }
    }
    let c2 = |a: &ChirpComponent, b: &ChirpComponent| {
        if truth_small {
            cost(a, b)
        } else {
            cost(b, a)
        }
    };
    recurse(small, large, &c2, &mut assignment, 0.0, &mut best);
    let (_, picks) = best.expect("nonempty matching");
    let mut pairs = Vec::with_capacity(k);
    for (i, &j) in picks.iter().enumerate() {
        let (t, e) = if truth_small {
            (&small[i], &large[j])
        } else {
            (&large[j], &small[i])
        };
        pairs.push(MatchedPair {
            truth_f: t.freq(),
            truth_theta: t.rate(),
            est_f: e.freq(),
            est_theta: e.rate(),
            f_error: wrap_dist(t.freq(), e.freq()),
            theta_error: (t.rate() - e.rate()).abs(),
            amplitude_error: Some((t.amplitude() - e.amplitude()).norm()),
        });
    }
    pairs.sort_by(|a, b| a.truth_f.partial_cmp(&b.truth_f).unwrap());
    MatchReport {
        pairs,
        unmatched_truth: k_t - k,
        unmatched_estimate: k_e - k,
    }
}

/// Wall-clock stage timings (seconds). Kept out of `metrics.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub synthesize: f64,
    pub assemble: f64,
    pub solve: f64,
    pub extract: f64,
    pub verify: f64,
    pub total: f64,
}

/// Metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: Method,
    pub matching: MatchReport,
    pub objective: f64,
    pub solver_status: Option<SolverStatus>,
    pub solver_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateReport>,
    #[serde(skip)]
    pub timings: StageTimings,
}

/// Everything a pipeline run produces in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scene: ChirpScene,
    pub measurements: Measurements,
    pub estimate: Option<Estimate>,
    pub dual: Option<DualPolynomial>,
    pub q_correction: Option<QCorrection>,
    pub solver_status: Option<SolverStatus>,
    pub bp_supports: Vec<(f64, f64, Complex64)>,
    pub metrics: MetricsReport,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Precondition(format!("stage {name}: {e}")))
}

/// Runs the configured pipeline. With an output directory, writes
/// `scene.json`, `solution.json`, `metrics.json`, `dualpoly.csv`,
/// `supports.csv` and `timings.json` there.
pub fn run(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunOutput> {
    let t_total = Instant::now();
    let mut timings = StageTimings::default();

    let t0 = Instant::now();
    let scene = stage("synthesize", config.scene())?;
    let clean = synthesize(&scene);
    let measurements = match &config.noise {
        Some(noise) => add_noise(&clean, noise.snr_db, noise.seed),
        None => clean,
    };
    timings.synthesize = t0.elapsed().as_secs_f64();

    let mut output = match config.method {
        Method::AnmDecoupled | Method::AnmFull => {
            run_anm(config, &scene, &measurements, &mut timings)?
        }
        Method::Bp => run_bp(config, &scene, &measurements, &mut timings)?,
    };
    timings.total = t_total.elapsed().as_secs_f64();
    output.metrics.timings = timings;

    if let Some(dir) = out_dir {
        write_artifacts(config, &output, dir)?;
    }
    Ok(output)
}

fn run_anm(
    config: &ExperimentConfig,
    scene: &ChirpScene,
    x: &Measurements,
    timings: &mut StageTimings,
) -> Result<RunOutput> {
    let dims = scene.dims();
    let t0 = Instant::now();
    let problem = match config.method {
        Method::AnmDecoupled => stage("assemble", assemble_decoupled(x, config.rate_bound, dims))?,
        Method::AnmFull => stage("assemble", assemble_full(x, config.rate_bound, dims))?,
        Method::Bp => unreachable!(),
    };
    timings.assemble = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let result = stage("solve", solve(&problem, &config.solver))?;
    timings.solve = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let dual = stage("dual", dual_from_multipliers(&result, x, dims))?;
    let support = stage("extract", extract_support(&dual, config.rate_bound, &config.extract))?;
    let points: Vec<(f64, f64)> = support.points.iter().map(|p| (p.f, p.theta)).collect();
    let fit = stage("amplitudes", solve_amplitudes(x, &points, dims))?;
    timings.extract = t0.elapsed().as_secs_f64();

    let components: Vec<ChirpComponent> = points
        .iter()
        .zip(fit.amplitudes.iter())
        .filter(|(_, &(re, im))| re != 0.0 || im != 0.0)
        .map(|(&(f, theta), &(re, im))| {
            ChirpComponent::new(Complex64::new(re, im), f, theta)
        })
        .collect::<Result<Vec<_>>>()
        .or_else(|_| Ok::<_, Error>(Vec::new()))?;

    let t0 = Instant::now();
    let targets: Vec<(f64, f64, Complex64)> = components
        .iter()
        .map(|c| (c.freq(), c.rate(), c.sign()))
        .collect();
    let mut tol = config.certificate.clone();
    if config.noise.is_some() {
        tol.enforce_sign = false;
    }
    let certificate = stage(
        "verify",
        verify_certificate(&dual, &targets, config.rate_bound, config.grid, &tol),
    )?;
    timings.verify = t0.elapsed().as_secs_f64();

    let estimate = Estimate {
        components: components.clone(),
        residual: fit.residual,
        certificate: certificate.clone(),
    };
    let matching = match_supports(scene.components(), &components, dims.n());
    let metrics = MetricsReport {
        method: config.method,
        matching,
        objective: result.objective_value,
        solver_status: Some(result.status),
        solver_iterations: Some(result.iterations),
        certificate: Some(certificate),
        timings: StageTimings::default(),
    };
    Ok(RunOutput {
        scene: scene.clone(),
        measurements: x.clone(),
        q_correction: Some(dual.correction()),
        dual: Some(dual),
        estimate: Some(estimate),
        solver_status: Some(result.status),
        bp_supports: Vec::new(),
        metrics,
    })
}

fn run_bp(
    config: &ExperimentConfig,
    scene: &ChirpScene,
    x: &Measurements,
    timings: &mut StageTimings,
) -> Result<RunOutput> {
    let dims = scene.dims();
    let t0 = Instant::now();
    let mut grid = config.bp_grid;
    if grid.theta_max > config.rate_bound {
        grid.theta_max = config.rate_bound;
    }
    let dict = stage("assemble", build_dictionary(&grid, dims))?;
    timings.assemble = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let eta = match &config.noise {
        // Noise ball sized at the expected noise norm.
        Some(noise) => {
            let sigma2 =
                (x.norm().powi(2) / dims.n() as f64) * 10f64.powf(-noise.snr_db / 10.0);
            (sigma2 * dims.n() as f64).sqrt()
        }
        None => 0.0,
    };
    let sol = stage("solve", basis_pursuit(x, &dict, eta, &config.bp))?;
    timings.solve = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let supports = support_from_coeffs(&sol, &dict, None);
    timings.extract = t0.elapsed().as_secs_f64();

    let components: Vec<ChirpComponent> = supports
        .iter()
        .map(|&(f, t, c)| ChirpComponent::new(c, f, t))
        .collect::<Result<Vec<_>>>()?;
    let matching = match_supports(
        scene.components(),
        &components[..components.len().min(MATCH_EXHAUSTIVE_LIMIT)],
        dims.n(),
    );
    let metrics = MetricsReport {
        method: Method::Bp,
        matching,
        objective: sol.objective,
        solver_status: None,
        solver_iterations: Some(sol.iterations),
        certificate: None,
        timings: StageTimings::default(),
    };
    Ok(RunOutput {
        scene: scene.clone(),
        measurements: x.clone(),
        estimate: None,
        dual: None,
        q_correction: None,
        solver_status: None,
        bp_supports: supports,
        metrics,
    })
}

#[derive(Serialize)]
struct SceneDoc<'a> {
    scene: &'a ChirpScene,
    measurements: &'a Measurements,
}

#[derive(Deserialize)]
struct SceneDocOwned {
    scene: ChirpScene,
    measurements: Measurements,
}

/// Reads back a `scene.json` artifact.
pub fn load_scene_doc(path: &Path) -> Result<(ChirpScene, Measurements)> {
    let text = std::fs::read_to_string(path)?;
    let doc: SceneDocOwned = serde_json::from_str(&text)?;
    Ok((doc.scene, doc.measurements))
}

#[derive(Deserialize)]
struct SolutionDocOwned {
    #[serde(default)]
    q: Option<Vec<ReImOwned>>,
    #[serde(default)]
    estimate: Option<Estimate>,
}

#[derive(Deserialize)]
struct ReImOwned {
    re: f64,
    im: f64,
}

/// Reads back a `solution.json` artifact: the dual-polynomial coefficients
/// and the estimated components, when present.
pub fn load_solution(path: &Path) -> Result<(Option<DualPolynomial>, Vec<ChirpComponent>)> {
    let text = std::fs::read_to_string(path)?;
    let doc: SolutionDocOwned = serde_json::from_str(&text)?;
    let dual = doc.q.map(|q| {
        DualPolynomial::new(q.iter().map(|v| Complex64::new(v.re, v.im)).collect())
    });
    let components = doc.estimate.map(|e| e.components).unwrap_or_default();
    Ok((dual, components))
}

#[derive(Serialize)]
struct SolutionDoc<'a> {
    method: Method,
    objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_status: Option<SolverStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_correction: Option<QCorrection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<Vec<ReIm>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<&'a Estimate>,
}

#[derive(Serialize)]
struct ReIm {
    re: f64,
    im: f64,
}

fn write_artifacts(config: &ExperimentConfig, output: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let scene_doc = SceneDoc {
        scene: &output.scene,
        measurements: &output.measurements,
    };
    std::fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&scene_doc)?)?;

    let solution = SolutionDoc {
        method: config.method,
        objective: output.metrics.objective,
        solver_status: output.solver_status,
        q_correction: output.q_correction,
        q: output.dual.as_ref().map(|d| {
            d.coefficients()
                .iter()
                .map(|c| ReIm { re: c.re, im: c.im })
                .collect()
        }),
        estimate: output.estimate.as_ref(),
    };
    std::fs::write(
        dir.join("solution.json"),
        serde_json::to_string_pretty(&solution)?,
    )?;
    std::fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&output.metrics)?,
    )?;
    std::fs::write(
        dir.join("timings.json"),
        serde_json::to_string_pretty(&output.metrics.timings)?,
    )?;

    if let Some(dual) = &output.dual {
        let f_grid = uniform_f_grid(config.grid.0);
        let t_grid = uniform_theta_grid(config.grid.1, config.rate_bound);
        let grid = eval_q_grid(dual, &f_grid, &t_grid)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("dualpoly.csv"))?);
        grid.write_csv(&mut w)?;
    }

    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("supports.csv"))?);
    writeln!(w, "source,f,theta,abs_c,phase_c")?;
    for c in output.scene.components() {
        writeln!(
            w,
            "truth,{},{},{},{}",
            c.freq(),
            c.rate(),
            c.amplitude().norm(),
            c.amplitude().arg()
        )?;
    }
    if let Some(est) = &output.estimate {
        for c in &est.components {
            writeln!(
                w,
                "estimate,{},{},{},{}",
                c.freq(),
                c.rate(),
                c.amplitude().norm(),
                c.amplitude().arg()
            )?;
        }
    }
    for &(f, t, c) in &output.bp_supports {
        writeln!(w, "bp,{},{},{},{}", f, t, c.norm(), c.arg())?;
    }
    Ok(())
}
