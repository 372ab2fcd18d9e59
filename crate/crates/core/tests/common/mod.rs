//! Brute-force references written directly from the recurrence definitions,
//! using plain nested vectors so they share no code with the library.

#![allow(dead_code)]

use gfssm_core::{GfssmInstance, PromptBank, SsdInstance};

pub type State = Vec<Vec<f64>>;

pub fn zero_state(n: usize, p: usize) -> State {
    vec![vec![0.0; p]; n]
}

fn outer(b: &[f64], x: &[f64]) -> State {
    b.iter().map(|&bi| x.iter().map(|&xj| bi * xj).collect()).collect()
}

fn read_out(c: &[f64], h: &State) -> Vec<f64> {
    let p = h[0].len();
    (0..p).map(|j| c.iter().zip(h).map(|(ci, row)| ci * row[j]).sum()).collect()
}

/// Plain recurrence on an SSD instance.
pub fn naive_ssd(inst: &SsdInstance<f64>) -> Vec<Vec<f64>> {
    let (n, p) = (inst.b[0].len(), inst.x[0].len());
    let mut h = zero_state(n, p);
    let mut ys = Vec::new();
    for t in 0..inst.a.len() {
        let bx = outer(&inst.b[t], &inst.x[t]);
        for r in 0..n {
            for c in 0..p {
                h[r][c] = inst.a[t] * h[r][c] + bx[r][c];
            }
        }
        ys.push(read_out(&inst.c[t], &h));
    }
    ys
}

/// Entry-by-entry quadratic form `y_t = Σ_s (Π_{s<τ≤t} a_τ)(C_t·B_s) x_s`.
pub fn naive_ssd_quadratic(inst: &SsdInstance<f64>) -> Vec<Vec<f64>> {
    let t_len = inst.a.len();
    let p = inst.x[0].len();
    (0..t_len)
        .map(|t| {
            let mut y = vec![0.0; p];
            for s in 0..=t {
                let decay: f64 = (s + 1..=t).map(|tau| inst.a[tau]).product();
                let cb: f64 = inst.c[t].iter().zip(&inst.b[s]).map(|(c, b)| c * b).sum();
                for (yj, xj) in y.iter_mut().zip(&inst.x[s]) {
                    *yj += decay * cb * xj;
                }
            }
            y
        })
        .collect()
}

/// Generic grouped FIR recurrence over global positions `start..`,
/// with `before` giving the inputs at negative positions (most recent first).
pub struct Sequence {
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
}

pub fn naive_grouped(seq: &Sequence, groups: usize, k: &[f64], offset: usize, h0: Vec<State>) -> (Vec<Vec<f64>>, Vec<State>) {
    let (n, p) = (seq.b[0].len(), seq.x[0].len());
    let mut h = h0;
    let mut ys = Vec::new();
    for t in 0..seq.a.len() {
        let mut s = zero_state(n, p);
        for (j, &kj) in k.iter().enumerate() {
            if j > t {
                break;
            }
            let bx = outer(&seq.b[t - j], &seq.x[t - j]);
            for r in 0..n {
                for c in 0..p {
                    s[r][c] += kj * bx[r][c];
                }
            }
        }
        let g = (t + offset) % groups;
        for r in 0..n {
            for c in 0..p {
                h[g][r][c] = seq.a[t] * h[g][r][c] + s[r][c];
            }
        }
        let mut total = zero_state(n, p);
        for hg in &h {
            for r in 0..n {
                for c in 0..p {
                    total[r][c] += hg[r][c];
                }
            }
        }
        ys.push(read_out(&seq.c[t], &total));
    }
    (ys, h)
}

pub fn naive_gfssm(inst: &GfssmInstance<f64>) -> Vec<Vec<f64>> {
    let seq = Sequence {
        a: inst.base.a.clone(),
        b: inst.base.b.clone(),
        c: inst.base.c.clone(),
        x: inst.base.x.clone(),
    };
    let (n, p) = (seq.b[0].len(), seq.x[0].len());
    naive_grouped(&seq, inst.cfg.groups, &inst.fir.k, 0, vec![zero_state(n, p); inst.cfg.groups]).0
}

/// Prompts prepended as ordinary tokens with unit decay and `C = B = prompt_b`,
/// run from zero state; returns outputs of the real positions.
pub fn naive_prompted(bank: &PromptBank<f64>, inst: &GfssmInstance<f64>) -> Vec<Vec<f64>> {
    let q = inst.cfg.groups;
    let mut seq = Sequence {
        a: vec![1.0; q],
        b: bank.prompt_b.clone(),
        c: bank.prompt_b.clone(),
        x: bank.prompts.clone(),
    };
    seq.a.extend(&inst.base.a);
    seq.b.extend(inst.base.b.iter().cloned());
    seq.c.extend(inst.base.c.iter().cloned());
    seq.x.extend(inst.base.x.iter().cloned());
    let (n, p) = (inst.base.state_dim(), inst.base.channels());
    let (ys, _) = naive_grouped(&seq, q, &inst.fir.k, 0, vec![zero_state(n, p); q]);
    ys[q..].to_vec()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(u, v)| (u - v).abs())
        })
        .fold(0.0, f64::max)
}
