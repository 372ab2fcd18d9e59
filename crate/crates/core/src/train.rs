//! Toy sequence tasks and a full-batch gradient-descent loop for
//! embedding → grouped layer → linear readout.
//!
//! Token ids: `0` blank, `1` recall cue, `2..vocab` data. Loss is softmax
//! cross-entropy at cue positions only.

use crate::error::{Error, Result};
use crate::gfssm::{FirCoefficients, GfssmInstance, GroupConfig};
use crate::grad::gfssm_backward;
use crate::rng::SeededRng;
use crate::scalar::{dot, sigmoid};
use crate::sink::{init_fresh, PromptBank};
use crate::ssd::SsdInstance;

pub const BLANK: usize = 0;
pub const CUE: usize = 1;
const FIRST_DATA: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    /// Data tokens at random positions among blanks, recalled in order at
    /// the trailing cues.
    SelectiveCopy,
    /// Data tokens at the start of the sequence, recalled in order at the
    /// trailing cues (fixed lag).
    DelayedRecall,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::SelectiveCopy => "selective-copy",
            TaskKind::DelayedRecall => "delayed-recall",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyTask {
    pub kind: TaskKind,
    pub vocab: usize,
    pub len: usize,
    /// Number of data tokens to recall.
    pub recall: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub targets: Vec<Option<usize>>,
}

impl ToyTask {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < FIRST_DATA + 1 {
            return Err(Error::Invalid(format!(
                "vocab must hold blank, cue and at least one data token (got {})",
                self.vocab
            )));
        }
        if self.recall == 0 || self.len < 2 * self.recall {
            return Err(Error::Invalid(format!(
                "sequence length {} cannot hold {} data tokens and their cues",
                self.len, self.recall
            )));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut SeededRng) -> Example {
        let data_span = self.len - self.recall;
        let positions: Vec<usize> = match self.kind {
            TaskKind::DelayedRecall => (0..self.recall).collect(),
            TaskKind::SelectiveCopy => {
                // Partial Fisher-Yates over the data span.
                let mut pool: Vec<usize> = (0..data_span).collect();
                for i in 0..self.recall {
                    let j = i + rng.below(data_span - i);
                    pool.swap(i, j);
                }
                let mut chosen = pool[..self.recall].to_vec();
                chosen.sort_unstable();
                chosen
            }
        };
        let mut tokens = vec![BLANK; self.len];
        let mut targets = vec![None; self.len];
        for (i, &pos) in positions.iter().enumerate() {
            let tok = FIRST_DATA + rng.below(self.vocab - FIRST_DATA);
            tokens[pos] = tok;
            tokens[data_span + i] = CUE;
            targets[data_span + i] = Some(tok);
        }
        Example { tokens, targets }
    }

    pub fn dataset(&self, rng: &mut SeededRng, count: usize) -> Vec<Example> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FirInit {
    Unit,
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub cfg: GroupConfig,
    pub state_dim: usize,
    pub channels: usize,
    pub train_size: usize,
    pub eval_size: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip: Option<f64>,
    /// Train `a` directly instead of through `a = σ(α)`.
    pub raw_decay: bool,
    pub init_decay: f64,
    pub fir_init: FirInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            cfg: GroupConfig::default(),
            state_dim: 8,
            channels: 8,
            train_size: 256,
            eval_size: 256,
            clip: Some(1.0),
            raw_decay: false,
            init_decay: 0.95,
            fir_init: FirInit::Unit,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Training-set loss before each update.
    pub curve: Vec<StepRecord>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
    pub final_eval_accuracy: f64,
    /// Step at which the loss or gradient stopped being finite.
    pub diverged_at: Option<usize>,
}

/// Parameters of embedding → grouped layer → readout, all in double
/// precision.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub embed: Vec<Vec<f64>>,
    /// `α_t` (logistic) or `a_t` (raw), per position.
    pub decay: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub k: Vec<f64>,
    pub bank: PromptBank<f64>,
    pub w_out: Vec<Vec<f64>>,
    pub b_out: Vec<f64>,
    raw_decay: bool,
    cfg: GroupConfig,
}

struct Evaluation {
    loss: f64,
    correct: usize,
    count: usize,
}

impl ToyModel {
    pub fn init(task: &ToyTask, mc: &ModelConfig, rng: &mut SeededRng) -> Self {
        let (n, p, len, vocab) = (mc.state_dim, mc.channels, task.len, task.vocab);
        let mut mat = |rows: usize, cols: usize, scale: f64| -> Vec<Vec<f64>> {
            (0..rows).map(|_| rng.vec(cols, -scale, scale)).collect()
        };
        let embed = mat(vocab, p, 1.0);
        let b = mat(len, n, 1.0 / (n as f64).sqrt());
        let c = mat(len, n, 1.0 / (n as f64).sqrt());
        let w_out = mat(vocab, p, 0.01);
        let prompts = mat(mc.cfg.groups, p, 0.1);
        let prompt_b = mat(mc.cfg.groups, n, 0.1);
        let decay0 = if mc.raw_decay {
            mc.init_decay
        } else {
            (mc.init_decay / (1.0 - mc.init_decay)).ln()
        };
        let k = match mc.fir_init {
            FirInit::Unit => FirCoefficients::<f64>::unit(mc.cfg.order).k,
            FirInit::Uniform => FirCoefficients::<f64>::uniform(mc.cfg.order).k,
        };
        Self {
            embed,
            decay: vec![decay0; len],
            b,
            c,
            k,
            bank: PromptBank { prompts, prompt_b },
            w_out,
            b_out: vec![0.0; vocab],
            raw_decay: mc.raw_decay,
            cfg: mc.cfg,
        }
    }

    pub fn decays(&self) -> Vec<f64> {
        if self.raw_decay {
            self.decay.clone()
        } else {
            self.decay.iter().map(|&al| sigmoid(al)).collect()
        }
    }

    fn layer_instance(&self, tokens: &[usize]) -> Result<GfssmInstance<f64>> {
        let x = tokens.iter().map(|&tok| self.embed[tok].clone()).collect();
        let base = SsdInstance::new(self.decays(), self.b.clone(), self.c.clone(), x)?;
        GfssmInstance::new(base, self.cfg, FirCoefficients::new(self.k.clone())?)
    }

    fn logits(&self, y: &[f64]) -> Vec<f64> {
        self.w_out
            .iter()
            .zip(&self.b_out)
            .map(|(w, &bias)| dot(w, y) + bias)
            .collect()
    }

    fn evaluate(&self, data: &[Example]) -> Result<Evaluation> {
        let mut ev = Evaluation {
            loss: 0.0,
            correct: 0,
            count: 0,
        };
        for ex in data {
            let (y, _) = init_fresh(&self.bank, &self.layer_instance(&ex.tokens)?)?;
            for (t, target) in ex.targets.iter().enumerate() {
                if let Some(target) = *target {
                    let probs = softmax(&self.logits(&y[t]));
                    ev.loss -= probs[target].max(f64::MIN_POSITIVE).ln();
                    let argmax = probs
                        .iter()
                        .enumerate()
                        .fold(0, |best, (i, &pr)| if pr > probs[best] { i } else { best });
                    ev.correct += usize::from(argmax == target);
                    ev.count += 1;
                }
            }
        }
        ev.loss /= ev.count.max(1) as f64;
        Ok(ev)
    }

    fn evaluate_or_diverged(&self, data: &[Example]) -> Result<Evaluation> {
        match self.evaluate(data) {
            Err(Error::NonFiniteState { .. }) => Ok(Evaluation {
                loss: f64::INFINITY,
                correct: 0,
                count: 1,
            }),
            other => other,
        }
    }

    /// Mean cue-position cross-entropy over `data` and its gradient, laid
    /// out like the parameters.
    fn loss_and_grad(&self, data: &[Example]) -> Result<(f64, ToyModel)> {
        let mut grad = self.zeros_like();
        let count: usize = data.iter().map(|ex| ex.targets.iter().flatten().count()).sum();
        let norm = 1.0 / count.max(1) as f64;
        let mut loss = 0.0;
        let a = self.decays();
        for ex in data {
            let inst = self.layer_instance(&ex.tokens)?;
            let (y, _) = init_fresh(&self.bank, &inst)?;
            let mut upstream = vec![vec![0.0; y[0].len()]; y.len()];
            for (t, target) in ex.targets.iter().enumerate() {
                let Some(target) = *target else { continue };
                let mut d_logits = softmax(&self.logits(&y[t]));
                loss -= d_logits[target].max(f64::MIN_POSITIVE).ln() * norm;
                d_logits[target] -= 1.0;
                for (v, dl) in d_logits.iter().enumerate() {
                    let dl = dl * norm;
                    grad.b_out[v] += dl;
                    for (p, &yp) in y[t].iter().enumerate() {
                        grad.w_out[v][p] += dl * yp;
                        upstream[t][p] += dl * self.w_out[v][p];
                    }
                }
            }
            let lg = gfssm_backward(&inst, &self.bank, &upstream)?;
            let decay_grad = if self.raw_decay {
                lg.grad_a.clone()
            } else {
                lg.logit_decay_grad(&a)
            };
            add_into(&mut grad.decay, &decay_grad);
            add_rows(&mut grad.b, &lg.grad_b);
            add_rows(&mut grad.c, &lg.grad_c);
            add_into(&mut grad.k, &lg.grad_k);
            add_rows(&mut grad.bank.prompts, &lg.grad_prompts);
            add_rows(&mut grad.bank.prompt_b, &lg.grad_prompt_b);
            for (&tok, gx) in ex.tokens.iter().zip(&lg.grad_x) {
                add_into(&mut grad.embed[tok], gx);
            }
        }
        Ok((loss, grad))
    }

    fn zeros_like(&self) -> ToyModel {
        let mut z = self.clone();
        z.for_each_pair(&self.clone(), |p, _| *p = 0.0);
        z
    }

    /// Visit every parameter alongside the matching entry of `other`.
    fn for_each_pair(&mut self, other: &ToyModel, mut f: impl FnMut(&mut f64, f64)) {
        fn rows(dst: &mut [Vec<f64>], src: &[Vec<f64>], f: &mut impl FnMut(&mut f64, f64)) {
            for (d, s) in dst.iter_mut().zip(src) {
                flat(d, s, f);
            }
        }
        fn flat(dst: &mut [f64], src: &[f64], f: &mut impl FnMut(&mut f64, f64)) {
            for (d, &s) in dst.iter_mut().zip(src) {
                f(d, s);
            }
        }
        rows(&mut self.embed, &other.embed, &mut f);
        flat(&mut self.decay, &other.decay, &mut f);
        rows(&mut self.b, &other.b, &mut f);
        rows(&mut self.c, &other.c, &mut f);
        flat(&mut self.k, &other.k, &mut f);
        rows(&mut self.bank.prompts, &other.bank.prompts, &mut f);
        rows(&mut self.bank.prompt_b, &other.bank.prompt_b, &mut f);
        rows(&mut self.w_out, &other.w_out, &mut f);
        flat(&mut self.b_out, &other.b_out, &mut f);
    }

    fn norm(&self) -> f64 {
        let mut sq = 0.0;
        self.clone().for_each_pair(self, |_, v| sq += v * v);
        sq.sqrt()
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn add_rows(dst: &mut [Vec<f64>], src: &[Vec<f64>]) {
    for (d, s) in dst.iter_mut().zip(src) {
        add_into(d, s);
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Full-batch gradient descent on a fixed training set drawn from
/// `task.seed`; model initialization draws from `seed`.
pub fn train_toy(task: &ToyTask, mc: &ModelConfig, steps: usize, lr: f64, seed: u64) -> Result<TrainReport> {
    task.validate()?;
    mc.cfg.validate()?;
    if steps == 0 || !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::Invalid(format!(
            "steps must be positive and lr non-negative (steps={steps}, lr={lr})"
        )));
    }
    if mc.train_size == 0 || mc.eval_size == 0 || mc.state_dim == 0 || mc.channels == 0 {
        return Err(Error::Invalid("model and dataset sizes must be positive".into()));
    }
    let mut data_rng = SeededRng::new(task.seed);
    let train = task.dataset(&mut data_rng, mc.train_size);
    let eval = task.dataset(&mut data_rng, mc.eval_size);
    let mut model = ToyModel::init(task, mc, &mut SeededRng::new(seed));

    let initial_eval = model.evaluate_or_diverged(&eval)?;
    let mut curve = Vec::with_capacity(steps);
    let mut diverged_at = None;
    for step in 0..steps {
        let (loss, mut grad) = match model.loss_and_grad(&train) {
            Err(Error::NonFiniteState { .. }) => {
                curve.push(StepRecord {
                    step,
                    loss: f64::NAN,
                    grad_norm: f64::NAN,
                });
                diverged_at = Some(step);
                break;
            }
            other => other?,
        };
        let grad_norm = grad.norm();
        curve.push(StepRecord { step, loss, grad_norm });
        if !loss.is_finite() || !grad_norm.is_finite() {
            diverged_at = Some(step);
            break;
        }
        if let Some(clip) = mc.clip {
            if grad_norm > clip {
                let scale = clip / grad_norm;
                grad.for_each_pair(&model, |g, _| *g *= scale);
            }
        }
        model.for_each_pair(&grad, |p, g| *p -= lr * g);
    }
    let final_eval = model.evaluate_or_diverged(&eval)?;
    let (final_loss, _) = if diverged_at.is_none() {
        model.loss_and_grad(&train)?
    } else {
        (f64::NAN, model.clone())
    };
    Ok(TrainReport {
        initial_loss: curve[0].loss,
        final_loss,
        curve,
        initial_eval_loss: initial_eval.loss,
        final_eval_loss: final_eval.loss,
        final_eval_accuracy: final_eval.correct as f64 / final_eval.count.max(1) as f64,
        diverged_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(kind: TaskKind) -> ToyTask {
        ToyTask {
            kind,
            vocab: 8,
            len: 16,
            recall: 2,
            seed: 3,
        }
    }

    fn small_model() -> ModelConfig {
        ModelConfig {
            cfg: GroupConfig::new(2, 2).unwrap(),
            state_dim: 3,
            channels: 4,
            train_size: 4,
            eval_size: 4,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn samples_are_well_formed() {
        let mut rng = SeededRng::new(1);
        for kind in [TaskKind::SelectiveCopy, TaskKind::DelayedRecall] {
            let t = task(kind);
            for _ in 0..50 {
                let ex = t.sample(&mut rng);
                let data: Vec<usize> = ex.tokens[..14].iter().copied().filter(|&v| v >= 2).collect();
                let targets: Vec<usize> = ex.targets.iter().flatten().copied().collect();
                assert_eq!(data, targets);
                assert_eq!(&ex.tokens[14..], &[CUE, CUE]);
                assert!(ex.targets[..14].iter().all(Option::is_none));
            }
        }
    }

    #[test]
    fn task_validation() {
        let mut t = task(TaskKind::SelectiveCopy);
        t.vocab = 2;
        assert!(t.validate().is_err());
        let mut t = task(TaskKind::SelectiveCopy);
        t.len = 3;
        assert!(t.validate().is_err());
    }

    #[test]
    fn model_gradient_matches_finite_differences() {
        let t = task(TaskKind::SelectiveCopy);
        let mc = small_model();
        let mut rng = SeededRng::new(5);
        let data = t.dataset(&mut rng, 3);
        let model = ToyModel::init(&t, &mc, &mut rng);
        let (_, grad) = model.loss_and_grad(&data).unwrap();

        let mut analytic = Vec::new();
        grad.clone().for_each_pair(&grad, |_, g| analytic.push(g));
        let count = analytic.len();
        let eps = 1e-6;
        for idx in (0..count).step_by(7) {
            let perturbed = |delta: f64| {
                let mut m = model.clone();
                let mut i = 0;
                m.for_each_pair(&model, |p, _| {
                    if i == idx {
                        *p += delta;
                    }
                    i += 1;
                });
                m.loss_and_grad(&data).unwrap().0
            };
            let fd = (perturbed(eps) - perturbed(-eps)) / (2.0 * eps);
            let err = (fd - analytic[idx]).abs() / fd.abs().max(analytic[idx].abs()).max(1e-3);
            assert!(err < 1e-5, "param {idx}: fd {fd} analytic {}", analytic[idx]);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let rep = train_toy(&task(TaskKind::DelayedRecall), &small_model(), 5, 0.0, 1).unwrap();
        assert!(rep.curve.iter().all(|r| r.loss == rep.curve[0].loss));
        assert_eq!(rep.final_loss, rep.initial_loss);
    }

    #[test]
    fn same_seed_same_curve() {
        let a = train_toy(&task(TaskKind::SelectiveCopy), &small_model(), 10, 0.5, 9).unwrap();
        let b = train_toy(&task(TaskKind::SelectiveCopy), &small_model(), 10, 0.5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn delayed_recall_learns() {
        let rep = train_toy(&task(TaskKind::DelayedRecall), &small_model(), 200, 1.0, 2).unwrap();
        assert!(rep.final_loss < 0.5 * rep.initial_loss, "{} -> {}", rep.initial_loss, rep.final_loss);
    }

    #[test]
    fn divergence_is_reported() {
        let mc = ModelConfig {
            raw_decay: true,
            init_decay: 1e300,
            clip: None,
            ..small_model()
        };
        let rep = train_toy(&task(TaskKind::DelayedRecall), &mc, 3, 1.0, 1).unwrap();
        assert_eq!(rep.diverged_at, Some(0));
        assert!(rep.final_loss.is_nan());
    }
}
