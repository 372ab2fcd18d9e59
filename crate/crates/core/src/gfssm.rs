//! Grouped FIR-enhanced recurrence.
//!
//! ```text
//!   s_t   = Σ_{j<n} k_j B_{t-j} x_{t-j}ᵀ
//!   h_t^i = a_t h_{t-1}^i + s_t     if i = t mod Q
//!   h_t^i = h_{t-1}^i               otherwise
//!   y_t   = C_tᵀ Σ_i h_t^i
//! ```
//!
//! Unrolling the recurrence gives `y = (L ∘ C Bᵀ) x` with
//! `L = Σ_j k_j L_j`, where input `s` enters through tap `j` at step `s + j`
//! into group `(s + j) mod Q` and is afterwards scaled only by the decays
//! of that group:
//!
//! ```text
//!   L_j[t][s] = Π { a_τ : s+j < τ ≤ t, τ ≡ s+j (mod Q) }    for t ≥ s+j
//! ```
//!
//! This closed form is a reconstruction from the recurrence; the scan is
//! the reference and the matrix is checked against it.

use crate::error::{check_len, Error, Result};
use crate::matrix::Mat;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::ssd::{apply_masked, check_finite, SsdInstance, DEFAULT_MATERIALIZE_CAP};

/// FIR taps `k_0 … k_{n-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FirCoefficients<S> {
    pub k: Vec<S>,
}

impl<S: Scalar> FirCoefficients<S> {
    pub fn new(k: Vec<S>) -> Result<Self> {
        let fir = Self { k };
        fir.validate()?;
        Ok(fir)
    }

    /// `[1, 0, …, 0]`: the filter that leaves `B_t x_tᵀ` untouched.
    pub fn unit(order: usize) -> Self {
        let mut k = vec![S::zero(); order];
        if let Some(first) = k.first_mut() {
            *first = S::one();
        }
        Self { k }
    }

    /// `1/n` on every tap.
    pub fn uniform(order: usize) -> Self {
        Self {
            k: vec![S::one() / S::of(order as f64); order],
        }
    }

    pub fn order(&self) -> usize {
        self.k.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_empty() {
            return Err(Error::Invalid("FIR order must be at least 1".into()));
        }
        check_finite("k", &self.k)
    }

    pub fn cast<U: Scalar>(&self) -> FirCoefficients<U> {
        FirCoefficients {
            k: crate::scalar::cast_vec(&self.k),
        }
    }
}

/// Group count Q and FIR order n.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupConfig {
    pub groups: usize,
    pub order: usize,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self { groups: 4, order: 4 }
    }
}

impl GroupConfig {
    pub fn new(groups: usize, order: usize) -> Result<Self> {
        let cfg = Self { groups, order };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.order == 0 {
            return Err(Error::Invalid(format!(
                "group count and FIR order must be positive (Q={}, n={})",
                self.groups, self.order
            )));
        }
        Ok(())
    }

    /// Group updated at global step `t`.
    pub fn group_at(&self, t: usize) -> usize {
        t % self.groups
    }
}

/// The Q per-group states `h^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedHiddenState<S> {
    pub h: Vec<Mat<S>>,
}

impl<S: Scalar> GroupedHiddenState<S> {
    pub fn zeros(groups: usize, state_dim: usize, channels: usize) -> Self {
        Self {
            h: vec![Mat::zeros(state_dim, channels); groups],
        }
    }

    pub fn groups(&self) -> usize {
        self.h.len()
    }

    /// `Σ_i h^i`, ascending group order.
    pub fn total(&self) -> Mat<S> {
        let mut acc = Mat::zeros(self.h[0].rows(), self.h[0].cols());
        for h in &self.h {
            acc.add_scaled(S::one(), h);
        }
        acc
    }

    pub fn cast<U: Scalar>(&self) -> GroupedHiddenState<U> {
        GroupedHiddenState {
            h: self.h.iter().map(Mat::cast).collect(),
        }
    }

    fn check_shape(&self, groups: usize, state_dim: usize, channels: usize) -> Result<()> {
        check_len("h_init.groups", groups, self.h.len())?;
        for h in &self.h {
            check_len("h_init.rows", state_dim, h.rows())?;
            check_len("h_init.cols", channels, h.cols())?;
            if !h.is_finite() {
                return Err(Error::NonFinite {
                    field: "h_init",
                    index: 0,
                });
            }
        }
        Ok(())
    }
}

/// A base instance plus grouping, filter taps, and the `n-1` products that
/// stand in for `B_τ x_τᵀ` at negative τ (`prompt_taps[m-1]` is index `-m`).
#[derive(Clone, Debug, PartialEq)]
pub struct GfssmInstance<S> {
    pub base: SsdInstance<S>,
    pub cfg: GroupConfig,
    pub fir: FirCoefficients<S>,
    pub prompt_taps: Vec<Mat<S>>,
}

impl<S: Scalar> GfssmInstance<S> {
    /// Instance with all-zero prompt taps.
    pub fn new(base: SsdInstance<S>, cfg: GroupConfig, fir: FirCoefficients<S>) -> Result<Self> {
        let (n, p) = (base.state_dim(), base.channels());
        let inst = Self {
            prompt_taps: vec![Mat::zeros(n, p); cfg.order.saturating_sub(1)],
            base,
            cfg,
            fir,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_prompt_taps(mut self, taps: Vec<Mat<S>>) -> Result<Self> {
        self.prompt_taps = taps;
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.cfg.validate()?;
        self.fir.validate()?;
        check_len("fir.k", self.cfg.order, self.fir.order())?;
        check_len("prompt_taps", self.cfg.order - 1, self.prompt_taps.len())?;
        let (n, p) = (self.base.state_dim(), self.base.channels());
        for tap in &self.prompt_taps {
            check_len("prompt_taps.rows", n, tap.rows())?;
            check_len("prompt_taps.cols", p, tap.cols())?;
            if !tap.is_finite() {
                return Err(Error::NonFinite {
                    field: "prompt_taps",
                    index: 0,
                });
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> GfssmInstance<U> {
        GfssmInstance {
            base: self.base.cast(),
            cfg: self.cfg,
            fir: self.fir.cast(),
            prompt_taps: self.prompt_taps.iter().map(Mat::cast).collect(),
        }
    }

    /// Random base instance (see [`SsdInstance::random`]) with taps in [-1, 1].
    pub fn random(
        rng: &mut SeededRng,
        len: usize,
        state_dim: usize,
        channels: usize,
        cfg: GroupConfig,
        a_range: (f64, f64),
    ) -> Self {
        let base = SsdInstance::random(rng, len, state_dim, channels, a_range.0, a_range.1);
        let k = (0..cfg.order).map(|_| S::of(rng.range(-1.0, 1.0))).collect();
        Self {
            prompt_taps: vec![Mat::zeros(state_dim, channels); cfg.order - 1],
            base,
            cfg,
            fir: FirCoefficients { k },
        }
    }
}

/// `s_t = Σ_j k_j v_{t-j}` with `v_{-m}` read from `taps[m-1]`.
pub(crate) fn filter_products<S: Scalar>(products: &[Mat<S>], taps: &[Mat<S>], k: &[S]) -> Vec<Mat<S>> {
    let (n, p) = products[0].shape();
    (0..products.len())
        .map(|t| {
            let mut s = Mat::zeros(n, p);
            for (j, &kj) in k.iter().enumerate() {
                let src = if j <= t {
                    &products[t - j]
                } else {
                    match taps.get(j - t - 1) {
                        Some(tap) => tap,
                        None => continue,
                    }
                };
                s.add_scaled(kj, src);
            }
            s
        })
        .collect()
}

/// Causal FIR over the `B_t x_tᵀ` sequence.
pub fn fir_filter<S: Scalar>(inst: &GfssmInstance<S>) -> Result<Vec<Mat<S>>> {
    inst.validate()?;
    Ok(filter_products(
        &inst.base.input_products(),
        &inst.prompt_taps,
        &inst.fir.k,
    ))
}

/// Grouped scan starting at global step 0.
pub fn grouped_scan<S: Scalar>(
    inst: &GfssmInstance<S>,
    h_init: &GroupedHiddenState<S>,
) -> Result<(Vec<Vec<S>>, GroupedHiddenState<S>)> {
    grouped_scan_from(inst, h_init, 0)
}

/// Grouped scan whose first step is global step `t_offset`, so the group
/// schedule `(t + t_offset) mod Q` continues across chunk boundaries.
pub fn grouped_scan_from<S: Scalar>(
    inst: &GfssmInstance<S>,
    h_init: &GroupedHiddenState<S>,
    t_offset: usize,
) -> Result<(Vec<Vec<S>>, GroupedHiddenState<S>)> {
    grouped_scan_observed(inst, h_init, t_offset, |_, _| {})
}

/// [`grouped_scan_from`] reporting `(global step, updated group)` for every
/// step.
pub fn grouped_scan_observed<S: Scalar>(
    inst: &GfssmInstance<S>,
    h_init: &GroupedHiddenState<S>,
    t_offset: usize,
    mut observe: impl FnMut(usize, usize),
) -> Result<(Vec<Vec<S>>, GroupedHiddenState<S>)> {
    inst.validate()?;
    let (n, p) = (inst.base.state_dim(), inst.base.channels());
    h_init.check_shape(inst.cfg.groups, n, p)?;

    let filtered = filter_products(&inst.base.input_products(), &inst.prompt_taps, &inst.fir.k);
    let mut state = h_init.clone();
    let mut ys = Vec::with_capacity(inst.len());
    for (t, s_t) in filtered.iter().enumerate() {
        let global = t + t_offset;
        let g = inst.cfg.group_at(global);
        observe(global, g);
        state.h[g].decay_add(inst.base.a[t], s_t);
        if !state.h[g].is_finite() {
            return Err(Error::NonFiniteState { step: t });
        }
        ys.push(state.total().left_contract(&inst.base.c[t]));
    }
    Ok((ys, state))
}

/// Product of the decays group `u mod Q` sees between steps `u` (exclusive)
/// and `t` (inclusive).
pub(crate) fn group_path<S: Scalar>(a: &[S], groups: usize, u: usize, t: usize) -> S {
    let mut prod = S::one();
    let mut tau = u + groups;
    while tau <= t {
        prod *= a[tau];
        tau += groups;
    }
    prod
}

/// Tap-`j` component `L_j` of the grouped mask.
pub fn build_l_group<S: Scalar>(a: &[S], groups: usize, j: usize) -> Result<Mat<S>> {
    let mut l = Mat::zeros(a.len(), a.len());
    accumulate_l_group(&mut l, a, groups, j, S::one())?;
    Ok(l)
}

fn accumulate_l_group<S: Scalar>(l: &mut Mat<S>, a: &[S], groups: usize, j: usize, k: S) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Invalid("decay sequence is empty".into()));
    }
    if groups == 0 {
        return Err(Error::Invalid("group count must be positive".into()));
    }
    check_finite("a", a)?;
    let t_len = a.len();
    for s in 0..t_len {
        let u = s + j;
        if u >= t_len {
            break;
        }
        let mut prod = S::one();
        l[(u, s)] += k * prod;
        for t in u + 1..t_len {
            if (t - u) % groups == 0 {
                prod *= a[t];
            }
            l[(t, s)] += k * prod;
        }
    }
    Ok(())
}

/// `L = Σ_j k_j L_j`.
pub fn build_l_gfssm<S: Scalar>(a: &[S], cfg: GroupConfig, fir: &FirCoefficients<S>) -> Result<Mat<S>> {
    cfg.validate()?;
    fir.validate()?;
    check_len("fir.k", cfg.order, fir.order())?;
    let mut l = Mat::zeros(a.len(), a.len());
    for (j, &kj) in fir.k.iter().enumerate() {
        accumulate_l_group(&mut l, a, cfg.groups, j, kj)?;
    }
    Ok(l)
}

/// `y = (L ∘ C Bᵀ) x` with the grouped mask. Requires zero prompt taps.
pub fn gfssm_matrix_form<S: Scalar>(inst: &GfssmInstance<S>) -> Result<Vec<Vec<S>>> {
    gfssm_matrix_form_capped(inst, DEFAULT_MATERIALIZE_CAP)
}

pub fn gfssm_matrix_form_capped<S: Scalar>(inst: &GfssmInstance<S>, cap: usize) -> Result<Vec<Vec<S>>> {
    inst.validate()?;
    if inst.len() > cap {
        return Err(Error::SizeLimit {
            len: inst.len(),
            cap,
        });
    }
    if inst.prompt_taps.iter().any(|tap| !tap.is_zero()) {
        return Err(Error::Invalid(
            "matrix form needs zero prompt taps; use the streaming matrix path for seeded chunks".into(),
        ));
    }
    let l = build_l_gfssm(&inst.base.a, inst.cfg, &inst.fir)?;
    Ok(apply_masked(&l, &inst.base))
}
