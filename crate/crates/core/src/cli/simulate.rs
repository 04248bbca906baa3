use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{sidecar, write_snapshot_file, CliError, Context, Outcome};
use crate::dynamics::SlowFastState;
use crate::harness::output::{write_csv, write_json};
use crate::harness::{HarnessError, TimeGrid};
use crate::spectral::snapshot::read_snapshot;
use crate::spectral::{norm, NormKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u64,
    pub t: f64,
    pub x_norm: f64,
    /// `‖X‖₁`
    pub x_h1: f64,
    pub y_norm: f64,
    pub root_seed: u64,
    /// Sample index of the slow and fast streams.
    pub sample: u64,
}

/// Sidecar of a checkpoint snapshot; together they restore a run exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub n: usize,
    pub eps: f64,
    pub dt: f64,
    pub sample: u64,
    pub step: u64,
    pub t: f64,
    pub slow_counter: u64,
    pub fast_counter: u64,
    /// Snapshot file name, relative to the sidecar.
    pub snapshot: String,
    pub trajectory: Vec<TrajectoryRow>,
}

#[derive(Serialize)]
struct Summary {
    eps: f64,
    dt: f64,
    steps: u64,
    sample: u64,
    t: f64,
    x_norm: f64,
    y_norm: f64,
    slow_counter: u64,
    fast_counter: u64,
    root_seed: u64,
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Harness(HarnessError::Io { path: path.display().to_string(), source: e })
}

fn row(s: &SlowFastState, seed: u64, sample: u64) -> TrajectoryRow {
    TrajectoryRow {
        step: s.step,
        t: s.t,
        x_norm: s.x.l2_norm(),
        x_h1: norm(&s.x, NormKind::Sobolev(1.0)).expect("H^1 norm is defined"),
        y_norm: s.y.l2_norm(),
        root_seed: seed,
        sample,
    }
}

pub(super) fn cmd_simulate(
    ctx: &Context,
    name: &str,
    steps: Option<u64>,
    sample: u64,
    checkpoint_every: Option<u64>,
    resume: Option<&Path>,
) -> Result<Outcome, CliError> {
    let cfg = &ctx.cfg;
    if checkpoint_every == Some(0) {
        return Err(CliError::Config("--checkpoint-every must be positive".into()));
    }
    let model = cfg.model()?;
    let space = model.slow_cov().space().clone();
    let eps = cfg.eps[0];
    let grid = TimeGrid::for_eps(&cfg.time, cfg.t_final, eps);
    let total = steps.unwrap_or(grid.steps);
    let hash = cfg.hash();

    let (mut state, mut trajectory) = match resume {
        None => {
            let (x, y) = cfg.initial_data(&space);
            let s = SlowFastState::new(x, y, cfg.seed, sample);
            let first = row(&s, cfg.seed, sample);
            (s, vec![first])
        }
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
            let ck: Checkpoint = serde_json::from_str(&text)
                .map_err(|e| CliError::Resume(format!("{} is not a checkpoint sidecar: {e}", path.display())))?;
            if ck.n != cfg.n {
                return Err(CliError::Resume(format!("checkpoint has N={}, config has N={}", ck.n, cfg.n)));
            }
            if ck.config_hash != hash {
                return Err(CliError::Resume(format!(
                    "checkpoint config hash {} does not match the current config {hash}",
                    ck.config_hash
                )));
            }
            if ck.sample != sample || ck.eps != eps || ck.dt != grid.dt {
                return Err(CliError::Resume("checkpoint sample, eps or dt differs from this run".into()));
            }
            let snap = path.parent().unwrap_or(Path::new(".")).join(&ck.snapshot);
            let file = std::fs::File::open(&snap).map_err(|e| io(&snap, e))?;
            let fields = read_snapshot(std::io::BufReader::new(file), &space)
                .map_err(|e| CliError::Resume(format!("{}: {e}", snap.display())))?;
            let [x, y]: [_; 2] =
                fields.try_into().map_err(|_| CliError::Resume("checkpoint snapshot must hold [X, Y]".into()))?;
            let mut s = SlowFastState::new(x, y, cfg.seed, sample);
            s.t = ck.t;
            s.step = ck.step;
            s.slow.set_counter(ck.slow_counter);
            s.fast.set_counter(ck.fast_counter);
            (s, ck.trajectory)
        }
    };

    let stop = Arc::new(AtomicBool::new(false));
    if checkpoint_every.is_some() {
        for sig in [signal_hook::consts::SIGINT, signal_hook::consts::SIGTERM] {
            signal_hook::flag::register(sig, Arc::clone(&stop))
                .map_err(|e| CliError::Harness(HarnessError::Other(format!("signal handler: {e}"))))?;
        }
    }
    let write_checkpoint = |s: &SlowFastState, traj: &[TrajectoryRow]| -> Result<Vec<PathBuf>, CliError> {
        let snap = ctx.path(".ckpt.nsef");
        write_snapshot_file(&snap, &[s.x.clone(), s.y.clone()])?;
        let side = ctx.path(".ckpt.json");
        let ck = Checkpoint {
            config_hash: hash.clone(),
            n: cfg.n,
            eps,
            dt: grid.dt,
            sample,
            step: s.step,
            t: s.t,
            slow_counter: s.slow.counter(),
            fast_counter: s.fast.counter(),
            snapshot: snap.file_name().expect("file name").to_string_lossy().into_owned(),
            trajectory: traj.to_vec(),
        };
        write_json(&side, &ck)?;
        Ok(vec![snap, side])
    };

    let mut checkpoints = Vec::new();
    while state.step < total {
        if stop.load(Ordering::Relaxed) {
            return Err(CliError::Interrupted(write_checkpoint(&state, &trajectory)?));
        }
        state = model.step_slow_fast(&state, grid.dt, eps).map_err(HarnessError::from)?;
        if state.step % grid.record_every == 0 {
            trajectory.push(row(&state, cfg.seed, sample));
        }
        if let Some(k) = checkpoint_every {
            if state.step % k == 0 {
                checkpoints = write_checkpoint(&state, &trajectory)?;
            }
        }
    }

    if trajectory.last().map(|r| r.step) != Some(state.step) {
        trajectory.push(row(&state, cfg.seed, sample));
    }
    let nsef = ctx.path(".nsef");
    write_snapshot_file(&nsef, &[state.x.clone(), state.y.clone()])?;
    let csv = ctx.path(".csv");
    write_csv(&csv, &trajectory)?;
    let summary = Summary {
        eps,
        dt: grid.dt,
        steps: total,
        sample,
        t: state.t,
        x_norm: state.x.l2_norm(),
        y_norm: state.y.l2_norm(),
        slow_counter: state.slow.counter(),
        fast_counter: state.fast.counter(),
        root_seed: cfg.seed,
    };
    let json = sidecar(ctx, name, &summary)?;
    let mut artifacts = vec![nsef, csv, json];
    artifacts.extend(checkpoints);
    Ok(Outcome { artifacts, violation: None })
}
