//! Training logs, parameter checkpoints and trajectory files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use safeshield_core::envsim::{StepRecord, TrajectoryBuffer};
use safeshield_core::gradnet::{GaussianPolicy, MlpArch};
use safeshield_core::shac::{Agent, EvalRecord};
use safeshield_core::Vector;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::sets::BoxJson;

/// One line of a training log. Non-finite losses (before the first update) are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub step: u64,
    pub eval_reward_mean: f64,
    pub eval_reward_ci: [f64; 2],
    pub interventions_per_step: f64,
    pub violations: u64,
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub wall_s: f64,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl From<&EvalRecord> for LogLine {
    fn from(r: &EvalRecord) -> Self {
        LogLine {
            step: r.step,
            eval_reward_mean: r.eval_reward_mean,
            eval_reward_ci: [r.eval_reward_ci.0, r.eval_reward_ci.1],
            interventions_per_step: r.interventions_per_step,
            violations: r.violations,
            actor_loss: finite(r.actor_loss),
            critic_loss: finite(r.critic_loss),
            wall_s: r.wall_s,
        }
    }
}

impl From<&LogLine> for EvalRecord {
    fn from(l: &LogLine) -> Self {
        EvalRecord {
            step: l.step,
            eval_reward_mean: l.eval_reward_mean,
            eval_reward_ci: (l.eval_reward_ci[0], l.eval_reward_ci[1]),
            interventions_per_step: l.interventions_per_step,
            violations: l.violations,
            actor_loss: l.actor_loss.unwrap_or(f64::NAN),
            critic_loss: l.critic_loss.unwrap_or(f64::NAN),
            wall_s: l.wall_s,
        }
    }
}

pub fn write_log(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(&LogLine::from(r)).expect("plain data serialises");
        writeln!(w, "{line}").map_err(|e| BenchError::io(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<EvalRecord>> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BenchError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogLine =
            serde_json::from_str(&line).map_err(|e| BenchError::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(EvalRecord::from(&rec));
    }
    Ok(out)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"SGCKPT1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    policy_widths: Vec<usize>,
    policy_params: usize,
    actions: BoxJson,
    critic_widths: Vec<usize>,
    critic_params: usize,
}

/// Writes an agent as magic bytes, a little-endian `u64` header length, a JSON header
/// describing both networks, and the policy then critic parameters as little-endian
/// `f64`.
pub fn write_checkpoint(path: &Path, agent: &Agent) -> Result<()> {
    let header = CheckpointHeader {
        policy_widths: agent.policy.arch.widths.clone(),
        policy_params: agent.policy_params.len(),
        actions: BoxJson::from(&agent.policy.actions),
        critic_widths: agent.critic.widths.clone(),
        critic_params: agent.critic_params.len(),
    };
    let json = serde_json::to_vec(&header).expect("plain data serialises");
    let mut bytes = Vec::with_capacity(16 + json.len() + 8 * (header.policy_params + header.critic_params));
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for x in agent.policy_params.iter().chain(agent.critic_params.iter()) {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| BenchError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Agent> {
    let bytes = std::fs::read(path).map_err(|e| BenchError::io(path, e))?;
    let bad = |m: &str| BenchError::format(path, m);
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| BenchError::format(path, e))?;
    let floats = read_f64s(&bytes[16 + hlen..]).ok_or_else(|| bad("parameter block is not a whole number of f64"))?;
    let policy = GaussianPolicy {
        arch: MlpArch {
            widths: header.policy_widths,
        },
        actions: header.actions.to_box()?,
    };
    let critic = MlpArch {
        widths: header.critic_widths,
    };
    if policy.num_params() != header.policy_params
        || critic.num_params() != header.critic_params
        || floats.len() != header.policy_params + header.critic_params
    {
        return Err(bad("parameter counts do not match the architecture"));
    }
    Ok(Agent {
        policy,
        policy_params: Vector::from_column_slice(&floats[..header.policy_params]),
        critic,
        critic_params: Vector::from_column_slice(&floats[header.policy_params..]),
    })
}

fn read_f64s(bytes: &[u8]) -> Option<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    )
}

pub const TRAJECTORY_MAGIC: &[u8; 7] = b"SGTRAJ1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub width: usize,
}

/// Sidecar metadata stored next to a trajectory file as `<file>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub format: String,
    pub env: String,
    pub steps: usize,
    pub lanes: usize,
    /// Rows are ordered step-major: row `t * lanes + lane`.
    pub rows: usize,
    pub columns: Vec<ColumnSpec>,
}

/// Column-major table read back from a trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub meta: TrajectoryMeta,
    /// One entry per column, `rows * width` values, row-major within the column.
    pub data: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn column(&self, name: &str) -> Option<(&ColumnSpec, &[f64])> {
        let i = self.meta.columns.iter().position(|c| c.name == name)?;
        Some((&self.meta.columns[i], &self.data[i]))
    }

    /// Value block of row `row` in column `name`.
    pub fn get(&self, name: &str, row: usize) -> Option<&[f64]> {
        let (spec, data) = self.column(name)?;
        data.get(row * spec.width..(row + 1) * spec.width)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `buffer` as the magic bytes followed by each column in turn, little-endian `f64`.
pub fn write_trajectory(path: &Path, env: &str, buffer: &TrajectoryBuffer) -> Result<TrajectoryMeta> {
    let steps = buffer.steps.len();
    let lanes = buffer.steps.first().map_or(0, |s| s.len());
    let first = buffer.steps.first().and_then(|s| s.first());
    let sd = first.map_or(0, |r| r.state.len());
    let ad = first.map_or(0, |r| r.raw_action.len());
    type Extract = fn(usize, usize, &StepRecord) -> Vec<f64>;
    let columns: [(&str, usize, Extract); 8] = [
        ("step_lane", 2, |t, lane, _| vec![t as f64, lane as f64]),
        ("state", sd, |_, _, r| r.state.iter().copied().collect()),
        ("raw_action", ad, |_, _, r| r.raw_action.iter().copied().collect()),
        ("safe_action", ad, |_, _, r| r.safe_action.iter().copied().collect()),
        ("noise", sd, |_, _, r| r.noise.iter().copied().collect()),
        ("reward", 1, |_, _, r| vec![r.reward]),
        ("intervened", 1, |_, _, r| vec![r.intervened as u8 as f64]),
        ("violation", 1, |_, _, r| vec![r.violation as u8 as f64]),
    ];
    let mut bytes = Vec::new();
    bytes.extend_from_slice(TRAJECTORY_MAGIC);
    let mut specs = Vec::new();
    for (name, width, extract) in columns {
        specs.push(ColumnSpec {
            name: name.into(),
            width,
        });
        for (t, records) in buffer.steps.iter().enumerate() {
            for (lane, r) in records.iter().enumerate() {
                let vals = extract(t, lane, r);
                if vals.len() != width {
                    return Err(BenchError::format(path, format!("ragged column {name}")));
                }
                for v in vals {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    let meta = TrajectoryMeta {
        format: "SGTRAJ1".into(),
        env: env.into(),
        steps,
        lanes,
        rows: steps * lanes,
        columns: specs,
    };
    std::fs::write(path, bytes).map_err(|e| BenchError::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&meta).expect("plain data serialises");
    std::fs::write(&side, json + "\n").map_err(|e| BenchError::io(&side, e))?;
    Ok(meta)
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryTable> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| BenchError::io(&side, e))?;
    let meta: TrajectoryMeta = serde_json::from_str(&text).map_err(|e| BenchError::format(&side, e))?;
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| BenchError::io(path, e))?;
    if bytes.len() < TRAJECTORY_MAGIC.len() || &bytes[..TRAJECTORY_MAGIC.len()] != TRAJECTORY_MAGIC {
        return Err(BenchError::format(path, "missing SGTRAJ1 magic"));
    }
    let floats = read_f64s(&bytes[TRAJECTORY_MAGIC.len()..])
        .ok_or_else(|| BenchError::format(path, "data is not a whole number of f64"))?;
    let expected: usize = meta.columns.iter().map(|c| c.width * meta.rows).sum();
    if floats.len() != expected {
        return Err(BenchError::format(
            path,
            format!("expected {expected} values from the sidecar, found {}", floats.len()),
        ));
    }
    let mut data = Vec::with_capacity(meta.columns.len());
    let mut offset = 0;
    for c in &meta.columns {
        let n = c.width * meta.rows;
        data.push(floats[offset..offset + n].to_vec());
        offset += n;
    }
    Ok(TrajectoryTable { meta, data })
}
