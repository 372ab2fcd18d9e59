use std::fs;

use anyhow::{bail, Context, Result};
use gfssm_core::{train_toy, FirInit, ModelConfig, TaskKind, ToyTask};
use serde::Serialize;

use super::{group_config, Outcome};
use crate::args::{FirInitArg, TaskArg, TrainArgs};
use crate::output::{csv_writer, write_row};

pub const HEADER: [&str; 3] = ["step", "loss", "grad_norm"];
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Metrics {
    schema_version: u32,
    command: &'static str,
    task: &'static str,
    vocab: usize,
    len: usize,
    recall: usize,
    groups: usize,
    order: usize,
    state_dim: usize,
    channels: usize,
    steps: usize,
    lr: f64,
    clip: Option<f64>,
    seed: u64,
    data_seed: u64,
    steps_run: usize,
    initial_loss: f64,
    final_loss: Option<f64>,
    loss_ratio: Option<f64>,
    initial_eval_loss: f64,
    final_eval_loss: Option<f64>,
    final_eval_accuracy: Option<f64>,
    diverged_at: Option<usize>,
    passed: bool,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn train(args: &TrainArgs) -> Result<Outcome> {
    if !(args.lr >= 0.0 && args.lr.is_finite()) {
        bail!("--lr must be a non-negative number (got {})", args.lr);
    }
    if !args.no_clip && !(args.clip > 0.0) {
        bail!("--clip must be positive; use --no-clip to disable clipping");
    }
    let data_seed = args.data_seed.unwrap_or(args.seed);
    let task = ToyTask {
        kind: match args.task {
            TaskArg::SelectiveCopy => TaskKind::SelectiveCopy,
            TaskArg::DelayedRecall => TaskKind::DelayedRecall,
        },
        vocab: args.vocab as usize,
        len: args.t as usize,
        recall: args.recall as usize,
        seed: data_seed,
    };
    task.validate()?;
    let mc = ModelConfig {
        cfg: group_config(args.q, args.n)?,
        state_dim: args.state_dim as usize,
        channels: args.channels as usize,
        train_size: args.train_size as usize,
        eval_size: args.eval_size as usize,
        clip: (!args.no_clip).then_some(args.clip),
        raw_decay: args.raw_decay,
        init_decay: args.init_decay,
        fir_init: match args.fir_init {
            FirInitArg::Unit => FirInit::Unit,
            FirInitArg::Uniform => FirInit::Uniform,
        },
    };
    let report = train_toy(&task, &mc, args.steps as usize, args.lr, args.seed)?;

    let mut out = csv_writer(args.out.as_deref())?;
    out.write_record(HEADER)?;
    for r in &report.curve {
        write_row(&mut out, &[r.step.to_string(), r.loss.to_string(), r.grad_norm.to_string()])?;
    }
    out.flush()?;

    let ratio = finite(report.final_loss / report.initial_loss);
    let within = match (args.max_ratio, ratio) {
        (Some(max), Some(r)) => r <= max,
        (Some(_), None) => false,
        (None, _) => true,
    };
    let passed = report.diverged_at.is_none() && within;
    let metrics = Metrics {
        schema_version: SCHEMA_VERSION,
        command: "train",
        task: task.kind.name(),
        vocab: task.vocab,
        len: task.len,
        recall: task.recall,
        groups: mc.cfg.groups,
        order: mc.cfg.order,
        state_dim: mc.state_dim,
        channels: mc.channels,
        steps: args.steps as usize,
        lr: args.lr,
        clip: mc.clip,
        seed: args.seed,
        data_seed,
        steps_run: report.curve.len(),
        initial_loss: report.initial_loss,
        final_loss: finite(report.final_loss),
        loss_ratio: ratio,
        initial_eval_loss: report.initial_eval_loss,
        final_eval_loss: finite(report.final_eval_loss),
        final_eval_accuracy: finite(report.final_eval_accuracy),
        diverged_at: report.diverged_at,
        passed,
    };
    let json = serde_json::to_string_pretty(&metrics)?;
    match &args.metrics {
        Some(path) => fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => eprintln!("{json}"),
    }
    if let Some(step) = report.diverged_at {
        eprintln!("train: diverged at step {step}");
    }
    Ok(Outcome::from_pass(passed))
}
