//! Reverse-mode gradients of the prompt-initialized grouped layer and a
//! central-difference checker.
//!
//! The differentiated quantity is `Σ_t ⟨g_t, y_t⟩` where `y` is the output
//! of [`init_fresh`] and `g` the upstream gradient. The backward pass walks
//! the prompt-extended sequence in reverse, keeping one adjoint per group:
//! every adjoint receives `C_t g_tᵀ` (all groups feed `y_t`), and only the
//! group updated at step `t` hands its adjoint to `s_t` and is rescaled by
//! `a_t`.

use crate::error::{check_len, Error, Result};
use crate::gfssm::{filter_products, GfssmInstance};
use crate::matrix::Mat;
use crate::scalar::{dot, Scalar};
use crate::sink::{init_fresh, prompt_extended, PromptBank};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients<S> {
    pub grad_a: Vec<S>,
    pub grad_b: Vec<Vec<S>>,
    pub grad_c: Vec<Vec<S>>,
    pub grad_x: Vec<Vec<S>>,
    pub grad_k: Vec<S>,
    pub grad_prompts: Vec<Vec<S>>,
    pub grad_prompt_b: Vec<Vec<S>>,
}

/// A parameter block of the layer, for selecting coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamBlock {
    A,
    B,
    C,
    X,
    K,
    Prompts,
    PromptB,
}

impl ParamBlock {
    pub const ALL: [ParamBlock; 7] = [
        ParamBlock::A,
        ParamBlock::B,
        ParamBlock::C,
        ParamBlock::X,
        ParamBlock::K,
        ParamBlock::Prompts,
        ParamBlock::PromptB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamBlock::A => "a",
            ParamBlock::B => "b",
            ParamBlock::C => "c",
            ParamBlock::X => "x",
            ParamBlock::K => "k",
            ParamBlock::Prompts => "prompts",
            ParamBlock::PromptB => "prompt_b",
        }
    }

    /// Flat mutable view of this block's coordinates.
    fn coords_mut<'a, S>(self, inst: &'a mut GfssmInstance<S>, bank: &'a mut PromptBank<S>) -> Vec<&'a mut S> {
        match self {
            ParamBlock::A => inst.base.a.iter_mut().collect(),
            ParamBlock::B => inst.base.b.iter_mut().flatten().collect(),
            ParamBlock::C => inst.base.c.iter_mut().flatten().collect(),
            ParamBlock::X => inst.base.x.iter_mut().flatten().collect(),
            ParamBlock::K => inst.fir.k.iter_mut().collect(),
            ParamBlock::Prompts => bank.prompts.iter_mut().flatten().collect(),
            ParamBlock::PromptB => bank.prompt_b.iter_mut().flatten().collect(),
        }
    }
}

impl<S: Scalar> LayerGradients<S> {
    /// Flattened gradient of one block, in the same order the finite
    /// difference checker visits coordinates.
    pub fn block(&self, block: ParamBlock) -> Vec<S> {
        let flat = |m: &[Vec<S>]| m.iter().flatten().copied().collect();
        match block {
            ParamBlock::A => self.grad_a.clone(),
            ParamBlock::B => flat(&self.grad_b),
            ParamBlock::C => flat(&self.grad_c),
            ParamBlock::X => flat(&self.grad_x),
            ParamBlock::K => self.grad_k.clone(),
            ParamBlock::Prompts => flat(&self.grad_prompts),
            ParamBlock::PromptB => flat(&self.grad_prompt_b),
        }
    }

    /// Gradient with respect to the logits `α` when `a = σ(α)`.
    pub fn logit_decay_grad(&self, a: &[S]) -> Vec<S> {
        self.grad_a
            .iter()
            .zip(a)
            .map(|(&g, &at)| g * at * (S::one() - at))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        ParamBlock::ALL
            .iter()
            .all(|&b| self.block(b).iter().all(|v| v.is_finite()))
    }
}

fn check_upstream<S: Scalar>(upstream: &[Vec<S>], len: usize, channels: usize) -> Result<()> {
    check_len("upstream", len, upstream.len())?;
    for g in upstream {
        check_len("upstream", channels, g.len())?;
    }
    if upstream.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            field: "upstream",
            index: 0,
        });
    }
    Ok(())
}

/// `Σ_t ⟨g_t, y_t⟩` for the prompt-initialized forward pass.
pub fn layer_objective<S: Scalar>(inst: &GfssmInstance<S>, bank: &PromptBank<S>, upstream: &[Vec<S>]) -> Result<S> {
    check_upstream(upstream, inst.len(), inst.base.channels())?;
    let (y, _) = init_fresh(bank, inst)?;
    let mut acc = S::zero();
    for (g, yt) in upstream.iter().zip(&y) {
        acc += dot(g, yt);
    }
    Ok(acc)
}

/// Exact gradients of [`layer_objective`] with respect to every parameter.
pub fn gfssm_backward<S: Scalar>(
    inst: &GfssmInstance<S>,
    bank: &PromptBank<S>,
    upstream: &[Vec<S>],
) -> Result<LayerGradients<S>> {
    let (n, p) = (inst.base.state_dim(), inst.base.channels());
    check_upstream(upstream, inst.len(), p)?;
    let ext = prompt_extended(bank, inst)?;
    let q = inst.cfg.groups;
    let order = inst.cfg.order;
    let len = ext.len();
    let base = &ext.base;

    // Forward, keeping what the reverse sweep reads.
    let products = base.input_products();
    let filtered = filter_products(&products, &ext.prompt_taps, &ext.fir.k);
    let mut state = vec![Mat::zeros(n, p); q];
    let mut before_update = Vec::with_capacity(len);
    let mut totals = Vec::with_capacity(len);
    for (e, s_e) in filtered.iter().enumerate() {
        let g = e % q;
        before_update.push(state[g].clone());
        state[g].decay_add(base.a[e], s_e);
        if !state[g].is_finite() {
            return Err(Error::NonFiniteState { step: e });
        }
        let mut total = Mat::zeros(n, p);
        for h in &state {
            total.add_scaled(S::one(), h);
        }
        totals.push(total);
    }

    // Reverse sweep over the group recurrence.
    let mut adj = vec![Mat::zeros(n, p); q];
    let mut grad_s = vec![Mat::zeros(n, p); len];
    let mut grad_a = vec![S::zero(); len];
    let mut grad_c = vec![vec![S::zero(); n]; len];
    for e in (0..len).rev() {
        if e >= q {
            let g_t = &upstream[e - q];
            let out_adj = Mat::outer(&base.c[e], g_t);
            for a in &mut adj {
                a.add_scaled(S::one(), &out_adj);
            }
            grad_c[e] = totals[e].right_contract(g_t);
        }
        let g = e % q;
        grad_s[e] = adj[g].clone();
        grad_a[e] = adj[g].inner(&before_update[e]);
        adj[g].scale(base.a[e]);
    }

    // FIR taps.
    let mut grad_k = vec![S::zero(); order];
    let mut grad_v = vec![Mat::zeros(n, p); len];
    for (e, gs) in grad_s.iter().enumerate() {
        for (j, &kj) in ext.fir.k.iter().enumerate() {
            if j > e {
                break;
            }
            grad_k[j] += gs.inner(&products[e - j]);
            grad_v[e - j].add_scaled(kj, gs);
        }
    }
    let grad_b: Vec<Vec<S>> = grad_v
        .iter()
        .zip(&base.x)
        .map(|(gv, x)| gv.right_contract(x))
        .collect();
    let grad_x: Vec<Vec<S>> = grad_v
        .iter()
        .zip(&base.b)
        .map(|(gv, b)| gv.left_contract(b))
        .collect();

    Ok(LayerGradients {
        grad_a: grad_a[q..].to_vec(),
        grad_b: grad_b[q..].to_vec(),
        grad_c: grad_c[q..].to_vec(),
        grad_x: grad_x[q..].to_vec(),
        grad_k,
        grad_prompts: grad_x[..q].to_vec(),
        grad_prompt_b: grad_b[..q].to_vec(),
    })
}

/// `(f(θ+ε) − f(θ−ε)) / 2ε`.
pub fn central_difference<S: Scalar>(mut f: impl FnMut(S) -> Result<S>, theta: S, eps: S) -> Result<S> {
    if !(eps > S::zero()) {
        return Err(Error::Invalid(format!("finite-difference step must be positive, got {eps}")));
    }
    let plus = f(theta + eps)?;
    let minus = f(theta - eps)?;
    Ok((plus - minus) / (eps + eps))
}

/// Central-difference gradient of [`layer_objective`] over every coordinate
/// of `block`.
pub fn finite_diff_grad<S: Scalar>(
    block: ParamBlock,
    inst: &GfssmInstance<S>,
    bank: &PromptBank<S>,
    upstream: &[Vec<S>],
    eps: S,
) -> Result<Vec<S>> {
    let coordinate = |i: usize, value: Option<S>| -> (GfssmInstance<S>, PromptBank<S>, S) {
        let mut pi = inst.clone();
        let mut pb = bank.clone();
        let mut coords = block.coords_mut(&mut pi, &mut pb);
        let old = *coords[i];
        if let Some(v) = value {
            *coords[i] = v;
        }
        (pi, pb, old)
    };
    let count = block.coords_mut(&mut inst.clone(), &mut bank.clone()).len();
    (0..count)
        .map(|i| {
            let (_, _, theta) = coordinate(i, None);
            central_difference(
                |v| {
                    let (pi, pb, _) = coordinate(i, Some(v));
                    layer_objective(&pi, &pb, upstream)
                },
                theta,
                eps,
            )
        })
        .collect()
}

/// Largest discrepancy between two gradient vectors: relative
/// (`|x−y| / max(|x|,|y|)`) unless both magnitudes fall below `abs_floor`,
/// in which case absolute.
pub fn max_gradient_error(analytic: &[f64], numeric: &[f64], abs_floor: f64) -> f64 {
    debug_assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&x, &y)| {
            let scale = x.abs().max(y.abs());
            if scale < abs_floor {
                (x - y).abs()
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}
