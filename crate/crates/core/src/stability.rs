//! Dynamic range of the decay products in plain vs grouped masks, and
//! single- vs double-precision divergence of the scans.
//!
//! Mask statistics are accumulated in log10 space so regimes whose products
//! underflow (or overflow, for `a > 1`) in the scans themselves can still be
//! characterized. The precision experiment measures forward outputs only; it
//! is a proxy for parameter-storage precision during training, not a
//! reproduction of it.

use crate::error::{Error, Result};
use crate::gfssm::{grouped_scan, GfssmInstance, GroupedHiddenState};
use crate::scalar::Scalar;
use crate::ssd::{check_finite, ssd_scan_recurrent, HiddenState};

/// Entry statistics of one lower-triangular decay mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixStats {
    pub log10_min_nonzero: f64,
    pub log10_max: f64,
    /// `10^log10_min_nonzero`; may underflow to 0 where the log does not.
    pub min_nonzero_entry: f64,
    pub max_entry: f64,
    pub log10_dynamic_range: f64,
    /// Longest decay chain a single state is carried through: the largest
    /// residue class of `a_1 … a_{T-1}` under the group schedule.
    pub max_product_length: usize,
    /// Factor count of the longest product appearing as a nonzero entry.
    pub max_entry_factors: usize,
    /// Lower-triangular entries that are exactly zero because a factor is.
    pub zero_entries: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductProfile {
    pub len: usize,
    pub groups: usize,
    pub plain: MatrixStats,
    /// Mask of the grouped recurrence with the unit filter `k = [1, 0, …]`.
    pub grouped: MatrixStats,
}

/// Output divergence between the single- and double-precision runs of one
/// scan variant.
#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub max_abs: f64,
    pub max_rel: f64,
    /// Per-step maximum absolute difference over channels.
    pub trace: Vec<f64>,
    /// Step at which the single-precision state became non-finite.
    pub single_failure: Option<usize>,
    pub double_failure: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceReport {
    pub plain: Divergence,
    pub grouped: Divergence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub profile: ProductProfile,
    pub divergence: DivergenceReport,
}

struct StatsAccumulator {
    log_min: f64,
    log_max: f64,
    max_factors: usize,
    zeros: usize,
}

impl StatsAccumulator {
    fn new() -> Self {
        // Diagonal entries are exactly 1 with no factors.
        Self {
            log_min: 0.0,
            log_max: 0.0,
            max_factors: 0,
            zeros: 0,
        }
    }

    fn push(&mut self, log10: f64, factors: usize) {
        self.log_min = self.log_min.min(log10);
        self.log_max = self.log_max.max(log10);
        self.max_factors = self.max_factors.max(factors);
    }

    fn finish(self, max_product_length: usize) -> MatrixStats {
        MatrixStats {
            log10_min_nonzero: self.log_min,
            log10_max: self.log_max,
            min_nonzero_entry: 10f64.powf(self.log_min),
            max_entry: 10f64.powf(self.log_max),
            log10_dynamic_range: self.log_max - self.log_min,
            max_product_length,
            max_entry_factors: self.max_factors,
            zero_entries: self.zeros,
        }
    }
}

/// Log-space statistics of the mask whose entry `(t, s)` is the product of
/// `a_τ` for `τ ∈ (s, t]`, `τ ≡ s (mod groups)`. `groups = 1` is the plain
/// mask.
fn mask_stats(log_abs: &[f64], is_zero: &[bool], groups: usize) -> MatrixStats {
    let len = log_abs.len();
    let mut acc = StatsAccumulator::new();
    for s in 0..len {
        let mut sum = 0.0;
        let mut factors = 0;
        let mut dead = false;
        for t in s + 1..len {
            if (t - s) % groups == 0 {
                factors += 1;
                if is_zero[t] {
                    dead = true;
                } else {
                    sum += log_abs[t];
                }
            }
            if dead {
                acc.zeros += 1;
            } else {
                acc.push(sum, factors);
            }
        }
    }
    // Residue classes of indices 1..len-1.
    let chain = (0..groups)
        .map(|r| (1..len).filter(|tau| tau % groups == r).count())
        .max()
        .unwrap_or(0);
    acc.finish(chain)
}

/// Entry statistics of the plain mask and of the grouped unit-filter mask.
pub fn product_profile<S: Scalar>(a: &[S], groups: usize) -> Result<ProductProfile> {
    if a.len() < 2 {
        return Err(Error::Invalid("product profile needs T ≥ 2".into()));
    }
    if groups == 0 {
        return Err(Error::Invalid("group count must be positive".into()));
    }
    check_finite("a", a)?;
    let is_zero: Vec<bool> = a.iter().map(|v| *v == S::zero()).collect();
    let log_abs: Vec<f64> = a
        .iter()
        .map(|v| if *v == S::zero() { 0.0 } else { v.as_f64().abs().log10() })
        .collect();
    Ok(ProductProfile {
        len: a.len(),
        groups,
        plain: mask_stats(&log_abs, &is_zero, 1),
        grouped: mask_stats(&log_abs, &is_zero, groups),
    })
}

fn compare(single: Result<Vec<Vec<f32>>>, double: Result<Vec<Vec<f64>>>) -> Divergence {
    let failure = |e: &Error| match e {
        Error::NonFiniteState { step } => Some(*step),
        _ => None,
    };
    match (single, double) {
        (Ok(y32), Ok(y64)) => {
            let mut out = Divergence {
                max_abs: 0.0,
                max_rel: 0.0,
                trace: Vec::with_capacity(y64.len()),
                single_failure: None,
                double_failure: None,
            };
            for (r32, r64) in y32.iter().zip(&y64) {
                let mut step_max = 0.0f64;
                for (&lo, &hi) in r32.iter().zip(r64) {
                    let d = (lo as f64 - hi).abs();
                    step_max = step_max.max(d);
                    let rel = if d == 0.0 { 0.0 } else { d / hi.abs() };
                    out.max_rel = out.max_rel.max(rel);
                }
                out.max_abs = out.max_abs.max(step_max);
                out.trace.push(step_max);
            }
            out
        }
        (s, d) => Divergence {
            max_abs: f64::INFINITY,
            max_rel: f64::INFINITY,
            trace: Vec::new(),
            single_failure: s.as_ref().err().and_then(failure),
            double_failure: d.as_ref().err().and_then(failure),
        },
    }
}

fn keep_finite_failures<T>(r: Result<T>) -> Result<Result<T>> {
    match r {
        Err(Error::NonFiniteState { step }) => Ok(Err(Error::NonFiniteState { step })),
        Err(e) => Err(e),
        Ok(v) => Ok(Ok(v)),
    }
}

/// Run the plain scan on `inst.base` and the grouped scan on `inst`, each in
/// single and double precision from the same double-precision parameters.
///
/// This measures forward-pass drift only. It stands in for the effect of
/// single-precision parameter storage during training, which is not
/// simulated.
pub fn precision_divergence(inst: &GfssmInstance<f64>) -> Result<DivergenceReport> {
    inst.validate()?;
    let (n, p, q) = (inst.base.state_dim(), inst.base.channels(), inst.cfg.groups);
    let lo = inst.cast::<f32>();

    let plain32 = keep_finite_failures(ssd_scan_recurrent(&lo.base, &HiddenState::zeros(n, p)).map(|r| r.0))?;
    let plain64 = keep_finite_failures(ssd_scan_recurrent(&inst.base, &HiddenState::zeros(n, p)).map(|r| r.0))?;
    let grouped32 = keep_finite_failures(grouped_scan(&lo, &GroupedHiddenState::zeros(q, n, p)).map(|r| r.0))?;
    let grouped64 = keep_finite_failures(grouped_scan(inst, &GroupedHiddenState::zeros(q, n, p)).map(|r| r.0))?;

    Ok(DivergenceReport {
        plain: compare(plain32, plain64),
        grouped: compare(grouped32, grouped64),
    })
}

/// Both halves of the lab for one instance; the profile uses `inst.cfg.groups`.
pub fn stability_report(inst: &GfssmInstance<f64>) -> Result<StabilityReport> {
    Ok(StabilityReport {
        profile: product_profile(&inst.base.a, inst.cfg.groups)?,
        divergence: precision_divergence(inst)?,
    })
}
