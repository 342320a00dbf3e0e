//! Seed sweeps, aggregation and result files.
//!
//! A suite trains every variant on every seed, writes one JSON-lines log and one
//! checkpoint per run, and summarises the runs into a table with one row per variant.
//! A run is non-convergent (stuck) when its final evaluation reward is at or below the
//! environment's floor; stuck runs are counted but excluded from the reward and step
//! columns.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use safeshield_core::safeguard::{CenterSource, JacobianKind, MapKind, SafeguardKind};
use safeshield_core::shac::{mix, train, EvalRecord, LaneExecutor, SafetySetup, Sequential, TrainLog};
use safeshield_core::stats::{bootstrap_ci, mean, steps_to_within};
use serde::{Deserialize, Serialize};

use crate::config::{EnvId, Experiment, Variant};
use crate::error::{core_exit_code, BenchError, Result};
use crate::exec::{thread_pool, StdClock};
use crate::formats::{read_log, write_checkpoint, write_log};
use crate::plot::{line_plot_svg, Series};

/// Resamples for every bootstrap interval in the summary.
pub const RESAMPLES: usize = 1000;
/// A run converged at the first evaluation within this fraction of its final reward.
pub const CONVERGED_FRAC: f64 = 0.05;

/// Short description of a safeguard and its modification.
pub fn describe(kind: &SafeguardKind) -> String {
    match kind {
        SafeguardKind::None => "none".into(),
        SafeguardKind::BoundaryProjection { regularization } => format!("bp c_d={regularization}"),
        SafeguardKind::RayMask(c) => {
            let centre = match c.center_source {
                CenterSource::Explicit => "explicit".to_string(),
                CenterSource::Zonotopic { n_dirs } => format!("zonotopic/{n_dirs}"),
                CenterSource::Orthogonal => "orthogonal".into(),
            };
            let map = match c.map_kind {
                MapKind::Linear => "linear",
                MapKind::Hyperbolic => "hyperbolic",
            };
            let jac = match c.jacobian_kind {
                JacobianKind::Exact => "",
                JacobianKind::Passthrough => " passthrough",
            };
            format!("rm {map} {centre}{jac} c_d={}", c.regularization)
        }
    }
}

/// Result of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub variant: String,
    pub seed: u64,
    pub outcome: std::result::Result<Vec<EvalRecord>, RunFault>,
}

/// A run aborted by an error; the suite records it and continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFault {
    pub variant: String,
    pub seed: u64,
    pub exit_code: i32,
    pub message: String,
}

impl RunRecord {
    pub fn evals(&self) -> Option<&[EvalRecord]> {
        self.outcome.as_ref().ok().map(|v| v.as_slice())
    }

    pub fn final_reward(&self) -> Option<f64> {
        self.evals()?.last().map(|e| e.eval_reward_mean)
    }

    pub fn wall_s(&self) -> Option<f64> {
        self.evals()?.last().map(|e| e.wall_s)
    }
}

pub fn run_stem(variant: &str, seed: u64) -> String {
    format!("{variant}__seed{seed}")
}

/// Trains one variant on one seed.
pub fn train_variant<X: LaneExecutor>(exp: &Experiment, variant: &Variant, seed: u64, exec: &X) -> Result<TrainLog> {
    let env = exp.build_env()?;
    let safety = SafetySetup {
        safe_states: exp.safe_states.clone(),
        kind: variant.kind,
    };
    let cfg = exp.train_config(seed);
    Ok(train(env.as_ref(), &safety, &cfg, exec, &StdClock::start())?)
}

/// Runs directory of an experiment.
pub fn runs_dir(exp: &Experiment) -> PathBuf {
    exp.out_dir.join("runs")
}

/// Writes the log and checkpoint of a finished run.
pub fn write_run(dir: &Path, variant: &str, seed: u64, log: &TrainLog) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let stem = run_stem(variant, seed);
    write_log(&dir.join(format!("{stem}.jsonl")), &log.evals)?;
    write_checkpoint(&dir.join(format!("{stem}.ckpt")), &log.agent)
}

/// Runs listed in `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub env: EnvId,
    pub stuck_floor: f64,
    pub variants: Vec<ManifestVariant>,
    pub seeds: Vec<u64>,
    pub faults: Vec<RunFault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestVariant {
    pub name: String,
    pub safeguard: String,
    pub reference_reward: Option<f64>,
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variant: String,
    pub safeguard: String,
    pub runs: usize,
    /// Mean steps to convergence over convergent runs.
    pub steps: Option<f64>,
    /// Mean final reward over convergent runs.
    pub reward: Option<f64>,
    pub reward_ci_low: Option<f64>,
    pub reward_ci_high: Option<f64>,
    pub stuck: usize,
    pub faults: usize,
    pub violations: u64,
    pub interventions_per_step: f64,
    pub reference_reward: Option<f64>,
}

/// Training interventions per step over a whole run.
fn run_intervention_rate(evals: &[EvalRecord]) -> (f64, u64) {
    let mut prev = 0;
    let mut total = 0.0;
    for e in evals {
        total += e.interventions_per_step * (e.step - prev) as f64;
        prev = e.step;
    }
    (total, prev)
}

/// Aggregates the runs of one variant.
pub fn summarize(variant: &ManifestVariant, runs: &[RunRecord], floor: f64) -> SummaryRow {
    let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.variant == variant.name).collect();
    let finished: Vec<&[EvalRecord]> = mine
        .iter()
        .filter_map(|r| r.evals())
        .filter(|e| !e.is_empty())
        .collect();
    let converged: Vec<&[EvalRecord]> = finished
        .iter()
        .copied()
        .filter(|e| e.last().expect("non-empty").eval_reward_mean > floor)
        .collect();
    let finals: Vec<f64> = converged
        .iter()
        .map(|e| e.last().expect("non-empty").eval_reward_mean)
        .collect();
    let steps: Vec<f64> = converged
        .iter()
        .filter_map(|e| {
            let curve: Vec<(u64, f64)> = e.iter().map(|r| (r.step, r.eval_reward_mean)).collect();
            steps_to_within(&curve, CONVERGED_FRAC).map(|s| s as f64)
        })
        .collect();
    let (ci_low, ci_high) = if finals.is_empty() {
        (None, None)
    } else {
        let (lo, hi) = bootstrap_ci(&finals, RESAMPLES, 0.95, 0x5EED);
        (Some(lo), Some(hi))
    };
    let (interventions, total_steps) = finished
        .iter()
        .map(|e| run_intervention_rate(e))
        .fold((0.0, 0u64), |(a, b), (c, d)| (a + c, b + d));
    SummaryRow {
        variant: variant.name.clone(),
        safeguard: variant.safeguard.clone(),
        runs: mine.len(),
        steps: (!steps.is_empty()).then(|| mean(&steps)),
        reward: (!finals.is_empty()).then(|| mean(&finals)),
        reward_ci_low: ci_low,
        reward_ci_high: ci_high,
        stuck: finished.len() - converged.len(),
        faults: mine.len() - finished.len(),
        violations: finished.iter().map(|e| e.last().expect("non-empty").violations).sum(),
        interventions_per_step: if total_steps > 0 {
            interventions / total_steps as f64
        } else {
            0.0
        },
        reference_reward: variant.reference_reward,
    }
}

pub fn summary_table(manifest: &Manifest, runs: &[RunRecord]) -> Vec<SummaryRow> {
    manifest
        .variants
        .iter()
        .map(|v| summarize(v, runs, manifest.stuck_floor))
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::format(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| BenchError::format(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

/// Mean learning curve across runs with a bootstrap band over seeds.
pub fn learning_curve(variant: &str, runs: &[RunRecord]) -> Series {
    let curves: Vec<&[EvalRecord]> = runs
        .iter()
        .filter(|r| r.variant == variant)
        .filter_map(|r| r.evals())
        .collect();
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    let points = (0..len)
        .map(|i| {
            let ys: Vec<f64> = curves.iter().map(|c| c[i].eval_reward_mean).collect();
            let (lo, hi) = bootstrap_ci(&ys, RESAMPLES, 0.95, mix(0xC0DE, i as u64));
            (curves[0][i].step as f64, mean(&ys), lo, hi)
        })
        .collect();
    Series {
        name: variant.into(),
        points,
    }
}

pub fn write_curves_svg(path: &Path, manifest: &Manifest, runs: &[RunRecord]) -> Result<()> {
    let series: Vec<Series> = manifest
        .variants
        .iter()
        .map(|v| learning_curve(&v.name, runs))
        .collect();
    let title = format!("{:?} evaluation reward", manifest.env).to_lowercase();
    let svg = line_plot_svg(&title, "environment steps", "reward", &series);
    std::fs::write(path, svg).map_err(|e| BenchError::io(path, e))
}

/// Wall-clock cost of a variant relative to the unsafe baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadRow {
    pub variant: String,
    pub wall_s: f64,
    pub ratio: Option<f64>,
}

/// Mean training wall time per variant divided by that of the first variant without a
/// safeguard. Only runs that reached the same final step count as the baseline enter.
pub fn overhead_report(manifest: &Manifest, runs: &[RunRecord]) -> Vec<OverheadRow> {
    let wall = |name: &str| -> Option<(f64, u64)> {
        let v: Vec<(f64, u64)> = runs
            .iter()
            .filter(|r| r.variant == name)
            .filter_map(|r| r.evals().and_then(|e| e.last()).map(|e| (e.wall_s, e.step)))
            .collect();
        if v.is_empty() {
            return None;
        }
        let steps = v[0].1;
        v.iter()
            .all(|x| x.1 == steps)
            .then(|| (v.iter().map(|x| x.0).sum::<f64>() / v.len() as f64, steps))
    };
    let baseline = manifest
        .variants
        .iter()
        .find(|v| v.safeguard == "none")
        .and_then(|v| wall(&v.name));
    manifest
        .variants
        .iter()
        .filter_map(|v| {
            let (w, steps) = wall(&v.name)?;
            let ratio = baseline.and_then(|(b, bs)| (bs == steps && b > 0.0).then(|| w / b));
            Some(OverheadRow {
                variant: v.name.clone(),
                wall_s: w,
                ratio,
            })
        })
        .collect()
}

pub fn write_overhead_csv(path: &Path, rows: &[OverheadRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::format(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| BenchError::format(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub manifest: Manifest,
    pub runs: Vec<RunRecord>,
    pub rows: Vec<SummaryRow>,
    pub overhead: Vec<OverheadRow>,
}

impl SuiteOutput {
    pub fn faults(&self) -> &[RunFault] {
        &self.manifest.faults
    }
}

fn manifest_for(exp: &Experiment, faults: Vec<RunFault>) -> Manifest {
    Manifest {
        env: exp.env_id,
        stuck_floor: exp.env_id.stuck_floor(),
        variants: exp
            .variants
            .iter()
            .map(|v| ManifestVariant {
                name: v.name.clone(),
                safeguard: describe(&v.kind),
                reference_reward: v.reference_reward,
            })
            .collect(),
        seeds: exp.seeds.clone(),
        faults,
    }
}

/// Trains every variant on every seed, seeds in parallel on up to `threads` workers,
/// and writes `runs/`, `manifest.json`, `summary.csv`, `curves.svg` and `overhead.csv`
/// under the output directory.
pub fn run_suite(exp: &Experiment, threads: Option<usize>) -> Result<SuiteOutput> {
    let dir = runs_dir(exp);
    std::fs::create_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
    let jobs: Vec<(&Variant, u64)> = exp
        .variants
        .iter()
        .flat_map(|v| exp.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = thread_pool(threads)?;
    let results: Vec<(String, u64, std::result::Result<TrainLog, BenchError>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, seed)| (v.name.clone(), seed, train_variant(exp, v, seed, &Sequential)))
            .collect()
    });
    let mut runs = Vec::with_capacity(results.len());
    let mut faults = Vec::new();
    for (variant, seed, res) in results {
        let outcome = match res {
            Ok(log) => {
                write_run(&dir, &variant, seed, &log)?;
                Ok(log.evals)
            }
            Err(e) => {
                let fault = RunFault {
                    variant: variant.clone(),
                    seed,
                    exit_code: fault_code(&e),
                    message: e.to_string(),
                };
                faults.push(fault.clone());
                Err(fault)
            }
        };
        runs.push(RunRecord { variant, seed, outcome });
    }
    let manifest = manifest_for(exp, faults);
    write_manifest(&dir.join("manifest.json"), &manifest)?;
    let rows = summary_table(&manifest, &runs);
    write_summary_csv(&exp.out_dir.join("summary.csv"), &rows)?;
    write_curves_svg(&exp.out_dir.join("curves.svg"), &manifest, &runs)?;
    let overhead = overhead_report(&manifest, &runs);
    write_overhead_csv(&exp.out_dir.join("overhead.csv"), &overhead)?;
    Ok(SuiteOutput {
        manifest,
        runs,
        rows,
        overhead,
    })
}

fn fault_code(e: &BenchError) -> i32 {
    match e {
        BenchError::Core(c) => core_exit_code(c),
        other => other.exit_code(),
    }
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m).expect("plain data serialises");
    std::fs::write(path, text + "\n").map_err(|e| BenchError::io(path, e))
}

/// Reads a runs directory written by [`run_suite`] back into run records.
pub fn load_runs(dir: &Path) -> Result<(Manifest, Vec<RunRecord>)> {
    let mpath = dir.join("manifest.json");
    let text = std::fs::read_to_string(&mpath).map_err(|e| BenchError::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| BenchError::format(&mpath, e))?;
    let mut runs = Vec::new();
    for v in &manifest.variants {
        for &seed in &manifest.seeds {
            let fault = manifest.faults.iter().find(|f| f.variant == v.name && f.seed == seed);
            let outcome = match fault {
                Some(f) => Err(f.clone()),
                None => Ok(read_log(&dir.join(format!("{}.jsonl", run_stem(&v.name, seed))))?),
            };
            runs.push(RunRecord {
                variant: v.name.clone(),
                seed,
                outcome,
            });
        }
    }
    Ok((manifest, runs))
}

/// Renders summary rows as an aligned text table.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let opt = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |v| format!("{v:.p$}"));
    let mut out = format!(
        "{:<16} {:>10} {:>10} {:>22} {:>6} {:>7} {:>10} {:>10}\n",
        "variant", "#steps", "reward", "95% ci", "#stuck", "faults", "violations", "reference"
    );
    for r in rows {
        let ci = match (r.reward_ci_low, r.reward_ci_high) {
            (Some(lo), Some(hi)) => format!("[{lo:.3}, {hi:.3}]"),
            _ => "-".into(),
        };
        out += &format!(
            "{:<16} {:>10} {:>10} {:>22} {:>6} {:>7} {:>10} {:>10}\n",
            r.variant,
            opt(r.steps, 0),
            opt(r.reward, 3),
            ci,
            r.stuck,
            r.faults,
            r.violations,
            opt(r.reference_reward, 3)
        );
    }
    out
}
