//! Runs the experiments named by a config and writes their artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use pingpong_core::collision_map::{simulate_orbit, write_orbit_csv, StopConditions};
use pingpong_core::fragmentation::{
    complexity_count, evolve_curve, growth_experiment, random_unstable_curve,
    write_fragmentation_csv, FragmentationRow, GrowthParams,
};
use pingpong_core::hyperbolicity::{
    check_cone_invariance, check_expansion, expansion_constants, least_expansion_sigma,
};
use pingpong_core::limit_map::{
    approximation_fit, multiple_points, singularity_set, torus_orbit, write_singularity_csv,
    write_torus_orbit_csv, SingularityKind,
};
use pingpong_core::sampling::{par_chunks, stream_rng, uniform_torus_point};
use pingpong_core::statistics::{
    autocorrelation, birkhoff_average, classify_orbit, clt_experiment, escape_fraction, gamma_mean,
    mixing_box_estimator, recurrence_stats, ClassifyThresholds, CltConfig, CorrelationConfig,
    EscapeConfig, MixingConfig, RecurrenceConfig,
};
use pingpong_core::{
    CollisionState, ConeFamily, CylinderObservable, Observable, StatReport, Tolerance, TorusPoint,
    WallMotion,
};

use crate::config::{section_names, Config};
use crate::error::{CliError, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const STATS_EXPERIMENTS: [&str; 8] = [
    "gamma",
    "birkhoff",
    "correlation",
    "clt",
    "recurrence",
    "approximation",
    "escape",
    "mixing",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    VerifyCones,
    Fragmentation,
    Stats,
    Singularities,
    /// Every section present in the config.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VerifyCones => "verify-cones",
            Command::Fragmentation => "fragmentation",
            Command::Stats => "stats",
            Command::Singularities => "singularities",
            Command::Report => "report",
        }
    }

    fn from_section(name: &str) -> Option<Self> {
        [
            Command::Simulate,
            Command::VerifyCones,
            Command::Fragmentation,
            Command::Stats,
            Command::Singularities,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub name: String,
    /// Whether a failure makes the run fail.
    pub hard: bool,
    pub pass: bool,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub command: String,
    pub seed: u64,
    pub profile: String,
    pub regime: String,
    pub experiments: Vec<ExperimentOutcome>,
    pub all_hard_passed: bool,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        if self.all_hard_passed {
            0
        } else {
            1
        }
    }
}

struct Ctx<'a> {
    cfg: &'a Config,
    wall: WallMotion,
    seed: u64,
    out: PathBuf,
}

impl Ctx<'_> {
    fn write(&self, name: &str, bytes: &[u8]) -> Result<String> {
        fs::write(self.out.join(name), bytes)?;
        Ok(name.to_string())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<String> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Independent seed for the `k`-th experiment of a run.
    fn seed_for(&self, k: u64) -> u64 {
        self.seed
            .wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

/// Applies command-line overrides, runs `cmd` and writes `manifest.json`.
pub fn run(cfg: &Config, cmd: Command, opts: &RunOptions) -> Result<RunManifest> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.set_global("seed", seed.to_string());
    }
    let threads = match opts.threads {
        Some(t) => Some(t),
        None => cfg.global().get::<usize>("threads")?,
    };
    if threads == Some(0) {
        return Err(CliError::Usage("thread count must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(&cfg, cmd, opts))
}

fn run_inner(cfg: &Config, cmd: Command, opts: &RunOptions) -> Result<RunManifest> {
    let seed = cfg.seed()?;
    let (profile, wall) = cfg.wall()?;
    let out = match &opts.out {
        Some(p) => p.clone(),
        None => PathBuf::from(cfg.global().string("out", "pingpong-out")),
    };
    fs::create_dir_all(&out)?;
    let ctx = Ctx {
        cfg,
        wall,
        seed,
        out,
    };

    let commands: Vec<Command> = if cmd == Command::Report {
        let present: Vec<Command> = section_names()
            .filter(|s| cfg.has_section(s))
            .filter_map(Command::from_section)
            .collect();
        if present.is_empty() {
            return Err(CliError::Usage(
                "report needs at least one experiment section in the config".into(),
            ));
        }
        present
    } else {
        vec![cmd]
    };

    let mut experiments = Vec::new();
    for c in commands {
        let mut outcomes = match c {
            Command::Simulate => vec![simulate(&ctx)?],
            Command::VerifyCones => vec![verify_cones(&ctx)?],
            Command::Fragmentation => vec![fragmentation(&ctx)?],
            Command::Stats => stats(&ctx)?,
            Command::Singularities => vec![singularities(&ctx)?],
            Command::Report => unreachable!("expanded above"),
        };
        experiments.append(&mut outcomes);
    }

    let hash = Sha256::digest(format!(
        "{}profile_text:\n{}",
        cfg.canonical_text(),
        ctx.wall.to_profile_text()
    ));
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: hex::encode(hash),
        command: cmd.name().to_string(),
        seed,
        profile,
        regime: ctx.wall.classify_regime().to_string(),
        all_hard_passed: experiments.iter().all(|e| e.pass || !e.hard),
        experiments,
    };
    ctx.write_json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn simulate(ctx: &Ctx<'_>) -> Result<ExperimentOutcome> {
    let s = ctx.cfg.section("simulate");
    let t0 = s.f64("t0", 0.25)?;
    let v0 = s.f64("v0", 0.5)?;
    let n = s.size("n_steps", 1)?;
    let map = s.choice("map", &["collision", "limit"], "collision")?;
    let mut csv = Vec::new();
    let summary = if map == "collision" {
        let stop = StopConditions {
            escape_velocity: s.get::<f64>("escape_velocity")?,
        };
        let rec = simulate_orbit(CollisionState::new(t0, v0, &ctx.wall), &ctx.wall, n, stop);
        write_orbit_csv(&rec, &mut csv)?;
        json!({
            "map": map,
            "start": [t0, v0],
            "steps": rec.states.len() - 1,
            "termination": rec.termination,
            "v_min": rec.v_min,
            "v_max": rec.v_max,
            "label": classify_orbit(&rec, &ClassifyThresholds::default()),
        })
    } else {
        let start = TorusPoint::reduce(t0, v0, ctx.wall.g());
        let (orbit, err) = torus_orbit(start, &ctx.wall, n);
        write_torus_orbit_csv(&orbit, &mut csv)?;
        json!({
            "map": map,
            "start": [start.t, start.v],
            "steps": orbit.len() - 1,
            "termination": err.map(|e| e.to_string()).unwrap_or_else(|| "completed".into()),
        })
    };
    let outputs = vec![
        ctx.write("simulate.csv", &csv)?,
        ctx.write_json("simulate.json", &summary)?,
    ];
    Ok(ExperimentOutcome {
        name: "simulate".into(),
        hard: false,
        pass: true,
        outputs,
    })
}

fn verify_cones(ctx: &Ctx<'_>) -> Result<ExperimentOutcome> {
    let s = ctx.cfg.section("verify-cones");
    let n = s.size("n_samples", 1_000_000)?;
    let family = match s
        .choice("family", &["hyperbolic", "quadrant"], "hyperbolic")?
        .as_str()
    {
        "quadrant" => ConeFamily::Quadrant,
        _ => ConeFamily::Hyperbolic,
    };
    let sigma_samples = s.size("sigma_samples", 2000)?;
    let w = &ctx.wall;
    let consts = expansion_constants(w)?;
    let cones = check_cone_invariance(w, family, n, ctx.seed_for(1))?;
    let expansion = check_expansion(w, consts.lambda, n, ctx.seed_for(2))?;

    let mut rng = stream_rng(ctx.seed_for(3), 0);
    let (mut sigma_min, mut sigma_points) = (f64::INFINITY, 0usize);
    for _ in 0..sigma_samples {
        let p = uniform_torus_point(&mut rng, w.g());
        if let Ok(sg) = least_expansion_sigma(p, w, consts.n0 as usize) {
            sigma_min = sigma_min.min(sg);
            sigma_points += 1;
        }
    }
    let pass =
        cones.violations() == 0 && expansion.violations == 0 && sigma_points > 0 && sigma_min > 3.0;
    let report = json!({
        "regime": w.classify_regime().to_string(),
        "family": format!("{family:?}").to_lowercase(),
        "lambda": consts.lambda,
        "lambda_1": consts.lambda_1,
        "lambda_2": consts.lambda_2,
        "n0": consts.n0,
        "empirical": consts.empirical,
        "sigma_one_step_min": consts.sigma_one_step_min,
        "sigma_min": sigma_min,
        "sigma_points": sigma_points,
        "violations": cones.violations(),
        "cones": cones,
        "expansion": expansion,
        "pass": pass,
    });
    let outputs = vec![ctx.write_json("verify_cones.json", &report)?];
    Ok(ExperimentOutcome {
        name: "verify-cones".into(),
        hard: true,
        pass,
        outputs,
    })
}

fn fragmentation(ctx: &Ctx<'_>) -> Result<ExperimentOutcome> {
    let s = ctx.cfg.section("fragmentation");
    let n_max = s.size("n_max", 10)?;
    let trials = s.size("n_trials", 1000)?;
    let n0_trials = s.size("n0_trials", 100)?;
    let curve_length = s.f64("curve_length", 1e-4)?;
    let growth_n = s.size("growth_n", 3)?;
    let growth_trials = s.size("growth_trials", 200)?;
    let growth_length = s.f64("growth_length", 1e-2)?;
    let delta2 = s.f64("delta2", 1e-2)?;
    if !(curve_length > 0.0 && curve_length <= 1e-3) {
        return Err(CliError::config(
            0,
            "fragmentation.curve_length must be in (0, 1e-3]",
        ));
    }
    let w = &ctx.wall;
    let consts = expansion_constants(w)?;
    let n0 = consts.n0 as usize;

    let mut rows = Vec::new();
    let mut complexity = Vec::new();
    let mut pass = true;
    for n in 1..=n_max {
        let r = complexity_count(w, n, trials, ctx.seed_for(10 + n as u64))?;
        let ok = r.max_components <= r.bound;
        pass &= ok;
        for (trial, (&c, &sum)) in r.counts.iter().zip(&r.sums).enumerate() {
            rows.push(FragmentationRow {
                trial,
                n,
                components: c,
                sum_inv_lambda: sum,
                max_bound_6n: 6 * n,
            });
        }
        complexity.push(json!({
            "n": n,
            "trials": r.trials,
            "epsilon": r.epsilon,
            "max_components": r.max_components,
            "mean_components": r.mean_components,
            "bound": r.bound,
            "pass": ok,
        }));
    }

    let chunks = par_chunks(n0_trials, ctx.seed_for(9), |rng, count| {
        (0..count)
            .map(|_| {
                let c = random_unstable_curve(rng, w, curve_length).expect("admissible");
                let rec = evolve_curve(&c, w, n0);
                (rec.components.len(), rec.sum_inv_expansion())
            })
            .collect::<Vec<_>>()
    });
    let n0_results: Vec<(usize, f64)> = chunks.into_iter().flatten().collect();
    for (trial, &(c, sum)) in n0_results.iter().enumerate() {
        rows.push(FragmentationRow {
            trial,
            n: n0,
            components: c,
            sum_inv_lambda: sum,
            max_bound_6n: 6 * n0,
        });
    }
    let max_sum = n0_results.iter().map(|r| r.1).fold(0.0, f64::max);
    let n0_ok = max_sum < 1.0;
    pass &= n0_ok;

    let eps_grid = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    let growth = growth_experiment(
        w,
        &GrowthParams {
            n: growth_n,
            trials: growth_trials,
            curve_length: growth_length,
            eps_grid: &eps_grid,
            delta2,
            lambda: consts.lambda,
            seed: ctx.seed_for(8),
        },
    )?;

    let mut csv = Vec::new();
    write_fragmentation_csv(&rows, &mut csv)?;
    let report = json!({
        "lambda": consts.lambda,
        "n0": n0,
        "complexity": complexity,
        "n0_step": {
            "trials": n0_results.len(),
            "curve_length": curve_length,
            "max_sum_inv_lambda": max_sum,
            "mean_sum_inv_lambda": n0_results.iter().map(|r| r.1).sum::<f64>() / n0_results.len() as f64,
            "max_components": n0_results.iter().map(|r| r.0).max().unwrap_or(0),
            "pass": n0_ok,
        },
        "growth": growth,
        "pass": pass,
    });
    let outputs = vec![
        ctx.write("fragmentation.csv", &csv)?,
        ctx.write_json("fragmentation.json", &report)?,
    ];
    Ok(ExperimentOutcome {
        name: "fragmentation".into(),
        hard: true,
        pass,
        outputs,
    })
}

fn observable(name: &str, wall: &WallMotion) -> Result<Observable> {
    Observable::builtin(name, wall).ok_or_else(|| {
        CliError::config(
            0,
            format!(
                "unknown observable '{name}' (one of {})",
                Observable::BUILTIN_NAMES.join(", ")
            ),
        )
    })
}

fn cylinder_observable(name: &str) -> Result<CylinderObservable> {
    CylinderObservable::builtin(name).ok_or_else(|| {
        CliError::config(
            0,
            format!("unknown cylinder observable '{name}' (one, cos2pi_t)"),
        )
    })
}

fn checks_pass(checks: &[StatReport]) -> bool {
    checks.iter().all(|c| c.pass)
}

fn stats(ctx: &Ctx<'_>) -> Result<Vec<ExperimentOutcome>> {
    let s = ctx.cfg.section("stats");
    let wanted: Vec<String> = s.list("experiments", &STATS_EXPERIMENTS.map(String::from))?;
    for e in &wanted {
        if !STATS_EXPERIMENTS.contains(&e.as_str()) {
            return Err(CliError::config(
                0,
                format!("unknown stats experiment '{e}'"),
            ));
        }
    }
    let w = &ctx.wall;
    let g = w.g();
    let obs = observable(&s.string("observable", "cos2pi_t"), w)?;
    let mut json_out: BTreeMap<String, Value> = BTreeMap::new();
    let mut outcomes = Vec::new();

    for (idx, name) in STATS_EXPERIMENTS.iter().enumerate() {
        if !wanted.iter().any(|e| e == name) {
            continue;
        }
        let seed = ctx.seed_for(100 + idx as u64);
        let mut outputs = Vec::new();
        let (hard, checks, report): (bool, Vec<StatReport>, Value) = match *name {
            "gamma" => {
                let r = gamma_mean(w, s.size("gamma_samples", 1_000_000)?, seed);
                (
                    true,
                    vec![r.stat_report(s.f64("gamma_k_se", 3.0)?)],
                    serde_json::to_value(r)?,
                )
            }
            "birkhoff" => {
                let n = s.size("birkhoff_steps", 1_000_000)?;
                let tol = s.f64("birkhoff_tol", 0.01)?;
                let start = uniform_torus_point(&mut stream_rng(seed, 0), g);
                let mut list = vec![obs.clone()];
                if obs.name != "v_mod" {
                    list.push(Observable::v_mod(g));
                }
                let mut checks = Vec::new();
                let mut results = Vec::new();
                for o in &list {
                    let r = birkhoff_average(o, start, w, n);
                    let mean = o.mean.ok_or_else(|| {
                        CliError::config(0, format!("{} has no known mean", o.name))
                    })?;
                    // the velocity average scales with g
                    let t = if o.name == "v_mod" { tol * g } else { tol };
                    checks.push(StatReport::new(
                        format!("birkhoff_{}", o.name),
                        n as u64,
                        r.average,
                        0.0,
                        mean,
                        Tolerance::Absolute(t),
                    ));
                    results.push(json!({"observable": o.name, "result": r}));
                }
                (
                    true,
                    checks,
                    json!({"start": [start.t, start.v], "averages": results}),
                )
            }
            "correlation" => {
                let max_lag = s.size("max_lag", 50)?;
                let lo = s.size("corr_lag_lo", 20)?;
                if lo > max_lag {
                    return Err(CliError::config(
                        0,
                        "stats.corr_lag_lo must not exceed stats.max_lag",
                    ));
                }
                let cfg = CorrelationConfig {
                    max_lag,
                    ensemble: s.size("corr_ensemble", 1_000_000)?,
                    seed,
                    control: true,
                };
                let r = autocorrelation(&obs, w, &cfg);
                let ratio = r.max_ratio(lo, max_lag);
                let check = StatReport::new(
                    "correlation_ratio",
                    cfg.ensemble as u64,
                    ratio,
                    0.0,
                    0.0,
                    Tolerance::AtMost(s.f64("corr_ratio", 0.05)?),
                );
                let mut csv = String::from("lag,c,se,control_c,control_se\n");
                for (i, row) in r.rows.iter().enumerate() {
                    let ctrl = r.control.as_ref().map(|c| c[i]);
                    let (cc, cs) = ctrl
                        .map(|c| (c.c.to_string(), c.se.to_string()))
                        .unwrap_or_default();
                    csv.push_str(&format!("{},{},{},{cc},{cs}\n", row.lag, row.c, row.se));
                }
                outputs.push(ctx.write("correlation.csv", csv.as_bytes())?);
                let mut v = serde_json::to_value(&r)?;
                v["truncation_lag"] = json!(r.truncation_lag());
                (true, vec![check], v)
            }
            "clt" => {
                let cfg = CltConfig {
                    n: s.size("clt_n", 10_000)?,
                    ensembles: s.size("clt_ensembles", 10_000)?,
                    corr_ensemble: s.size("clt_corr_ensemble", 1_000_000)?,
                    corr_max_lag: s.size("clt_max_lag", 50)?,
                    seed,
                };
                let r = clt_experiment(&obs, w, &cfg)?;
                let checks = vec![
                    r.ks_report(s.f64("ks_tol", 0.02)?),
                    r.variance_report(s.f64("variance_tol", 0.1)?),
                ];
                outputs.push(ctx.write(
                    "clt_histogram.csv",
                    histogram(&r.normalized_sums, r.sigma2_hat).as_bytes(),
                )?);
                (true, checks, serde_json::to_value(&r)?)
            }
            "recurrence" => {
                let cfg = RecurrenceConfig {
                    v_lo: s.f64("rec_v_lo", 20.0)?,
                    v_hi: s.f64("rec_v_hi", 22.0)?,
                    epsilon: s.f64("rec_epsilon", 0.5)?,
                    horizon: s.size("rec_horizon", 100_000)?,
                    n_orbits: s.size("rec_orbits", 1000)?,
                    seed,
                };
                let r = recurrence_stats(w, &cfg)?;
                let check = StatReport::new(
                    "recurrence_fraction",
                    r.returned.trials,
                    r.returned.fraction,
                    0.0,
                    1.0,
                    Tolerance::AtLeast(s.f64("rec_min_fraction", 0.99)?),
                );
                (true, vec![check], json!({"config": cfg, "result": r}))
            }
            "approximation" => {
                let fit = approximation_fit(
                    w,
                    s.f64("approx_v_lo", 1e2)?,
                    s.f64("approx_v_hi", 1e5)?,
                    s.size("approx_levels", 7)?,
                    s.size("approx_samples", 400)?,
                    seed,
                );
                let check = StatReport::new(
                    "approximation_slope",
                    fit.velocities.len() as u64,
                    fit.slope,
                    0.0,
                    -1.0,
                    Tolerance::Absolute(s.f64("approx_slope_tol", 0.15)?),
                );
                let mut csv = String::from("v,median_deviation\n");
                for (v, d) in fit.velocities.iter().zip(&fit.median_deviation) {
                    csv.push_str(&format!("{v},{d}\n"));
                }
                outputs.push(ctx.write("approximation.csv", csv.as_bytes())?);
                (true, vec![check], serde_json::to_value(&fit)?)
            }
            "escape" => {
                let cfg = EscapeConfig {
                    v_lo: s.f64("esc_v_lo", 20.0)?,
                    v_hi: s.f64("esc_v_hi", 22.0)?,
                    multiplier: s.f64("esc_multiplier", 2.0)?,
                    horizon: s.size("esc_horizon", 1000)?,
                    window: s.f64("esc_window", 10.0)?,
                    n_orbits: s.size("esc_orbits", 1000)?,
                    seed,
                };
                let r = escape_fraction(w, &cfg)?;
                (false, Vec::new(), json!({"config": cfg, "result": r}))
            }
            "mixing" => {
                let cfg = MixingConfig {
                    v_center: s.f64("mix_v_center", 1000.0)?,
                    box_heights: s.list("mix_heights", &[1.0, 4.0, 16.0])?,
                    steps: s.list("mix_steps", &[0, 1, 2, 5, 10])?,
                    samples: s.size("mix_samples", 100_000)?,
                    seed,
                };
                let phi1 = cylinder_observable(&s.string("mix_phi1", "cos2pi_t"))?;
                let phi2 = cylinder_observable(&s.string("mix_phi2", "cos2pi_t"))?;
                let rows = mixing_box_estimator(&phi1, &phi2, w, &cfg)?;
                let mut csv = String::from("box_height,n,estimate,se,product,aborted\n");
                for r in &rows {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        r.box_height, r.n, r.estimate, r.se, r.product, r.aborted
                    ));
                }
                outputs.push(ctx.write("mixing.csv", csv.as_bytes())?);
                (
                    false,
                    Vec::new(),
                    json!({"phi1": phi1.name, "phi2": phi2.name, "rows": rows}),
                )
            }
            _ => unreachable!("validated above"),
        };
        let pass = checks_pass(&checks);
        json_out.insert(
            name.to_string(),
            json!({"hard": hard, "pass": pass, "checks": checks, "report": report}),
        );
        outcomes.push(ExperimentOutcome {
            name: format!("stats.{name}"),
            hard,
            pass,
            outputs,
        });
    }
    let file = ctx.write_json("stats.json", &json_out)?;
    for o in &mut outcomes {
        o.outputs.insert(0, file.clone());
    }
    Ok(outcomes)
}

/// 40 equal bins over `±4σ`, with the count outside folded into the end bins.
fn histogram(xs: &[f64], variance: f64) -> String {
    const BINS: usize = 40;
    let sd = variance.max(0.0).sqrt();
    let (lo, hi) = (-4.0 * sd, 4.0 * sd);
    let width = (hi - lo) / BINS as f64;
    let mut counts = [0u64; BINS];
    for &x in xs {
        let i = if width > 0.0 {
            ((x - lo) / width).floor()
        } else {
            0.0
        };
        counts[(i.max(0.0) as usize).min(BINS - 1)] += 1;
    }
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in counts.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{c}\n",
            lo + i as f64 * width,
            lo + (i + 1) as f64 * width
        ));
    }
    out
}

fn singularities(ctx: &Ctx<'_>) -> Result<ExperimentOutcome> {
    let s = ctx.cfg.section("singularities");
    let kinds = match s
        .choice("kind", &["plus", "minus", "both"], "both")?
        .as_str()
    {
        "plus" => vec![SingularityKind::Plus],
        "minus" => vec![SingularityKind::Minus],
        _ => vec![SingularityKind::Plus, SingularityKind::Minus],
    };
    let generations = s.size("generations", 2)?;
    let resolution = s.f64("resolution", 1e-3)?;
    if resolution <= 0.0 {
        return Err(CliError::config(
            0,
            "singularities.resolution must be positive",
        ));
    }
    let mut segments = Vec::new();
    let mut summary = Vec::new();
    for kind in kinds {
        let forest = singularity_set(&ctx.wall, kind, generations, resolution);
        let segs = forest.segments();
        let mut entry = json!({
            "kind": kind.label(),
            "segments": segs.len(),
            "vertices": segs.iter().map(|s| s.points.len()).sum::<usize>(),
        });
        if kind == SingularityKind::Plus {
            entry["multiple_points"] = json!(multiple_points(&forest).len());
        }
        summary.push(entry);
        segments.extend(segs);
    }
    let mut csv = Vec::new();
    write_singularity_csv(&segments, &mut csv)?;
    let report = json!({"generations": generations, "resolution": resolution, "sets": summary});
    let outputs = vec![
        ctx.write("singularities.csv", &csv)?,
        ctx.write_json("singularities.json", &report)?,
    ];
    Ok(ExperimentOutcome {
        name: "singularities".into(),
        hard: false,
        pass: true,
        outputs,
    })
}

/// Example profile files shipped with the tool.
pub const EXAMPLE_PROFILES: [(&str, &str); 3] = [
    (
        "profiles/q1.profile",
        include_str!("../profiles/q1.profile"),
    ),
    (
        "profiles/n2.profile",
        include_str!("../profiles/n2.profile"),
    ),
    (
        "profiles/skewed.profile",
        include_str!("../profiles/skewed.profile"),
    ),
];

/// The built-in catalog, with the regime of a few members at gravity `g`.
pub fn list_profiles(g: f64, mut out: impl Write) -> Result<()> {
    writeln!(out, "families:")?;
    for (name, desc) in pingpong_core::wall_motion::catalog() {
        writeln!(out, "  {name:<6} {desc}")?;
    }
    writeln!(out, "members at g = {g}:")?;
    for name in ["Q(0.5)", "Q(1)", "Q(2)", "N(1)", "N(2)", "N(3)", "S(0.2)"] {
        let w = WallMotion::builtin(name, g).expect("catalog name");
        writeln!(out, "  {name:<8} {}", w.classify_regime())?;
    }
    writeln!(out, "example files:")?;
    for (path, text) in EXAMPLE_PROFILES {
        let regime = match WallMotion::parse_profile(text) {
            Ok(w) => format!("g = {}, {}", w.g(), w.classify_regime()),
            Err(e) => format!("invalid: {e}"),
        };
        writeln!(out, "  {path:<24} {regime}")?;
    }
    Ok(())
}
