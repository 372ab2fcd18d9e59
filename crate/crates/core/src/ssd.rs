//! Scalar-decay state space recurrence and its materialized 1-semiseparable
//! matrix form.
//!
//! ```text
//!   h_t = a_t h_{t-1} + B_t x_tᵀ          h_t ∈ R^{N×P}
//!   y_t = C_tᵀ h_t                        y_t ∈ R^P
//!   y   = (L ∘ C Bᵀ) x,   L[t][s] = a_t a_{t-1} ⋯ a_{s+1}
//! ```
//!
//! The recurrent form is the fast path; the matrix form is O(T²) and exists
//! as an independent oracle.

use std::ops::Range;

use crate::error::{check_len, Error, Result};
use crate::matrix::Mat;
use crate::rng::SeededRng;
use crate::scalar::{cast_vec, dot, Scalar};

/// Default cap on T for any O(T²) materialization.
pub const DEFAULT_MATERIALIZE_CAP: usize = 8192;

/// One head: per-step decay, projections and inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct SsdInstance<S> {
    pub a: Vec<S>,
    pub b: Vec<Vec<S>>,
    pub c: Vec<Vec<S>>,
    pub x: Vec<Vec<S>>,
}

/// Hidden state `h ∈ R^{N×P}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState<S> {
    pub h: Mat<S>,
}

impl<S: Scalar> HiddenState<S> {
    pub fn zeros(state_dim: usize, channels: usize) -> Self {
        Self {
            h: Mat::zeros(state_dim, channels),
        }
    }
}

pub(crate) fn check_finite<S: Scalar>(field: &'static str, v: &[S]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { field, index }),
        None => Ok(()),
    }
}

fn check_rows<S: Scalar>(field: &'static str, rows: &[Vec<S>], width: usize) -> Result<()> {
    for (t, row) in rows.iter().enumerate() {
        check_len(field, width, row.len())?;
        if let Some(i) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                field,
                index: t * width + i,
            });
        }
    }
    Ok(())
}

impl<S: Scalar> SsdInstance<S> {
    pub fn new(a: Vec<S>, b: Vec<Vec<S>>, c: Vec<Vec<S>>, x: Vec<Vec<S>>) -> Result<Self> {
        let inst = Self { a, b, c, x };
        inst.validate()?;
        Ok(inst)
    }

    /// Sequence length T.
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// State dimension N.
    pub fn state_dim(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    /// Channel dimension P.
    pub fn channels(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.len();
        if t == 0 {
            return Err(Error::Invalid("sequence length must be at least 1".into()));
        }
        check_len("b", t, self.b.len())?;
        check_len("c", t, self.c.len())?;
        check_len("x", t, self.x.len())?;
        let (n, p) = (self.state_dim(), self.channels());
        if n == 0 || p == 0 {
            return Err(Error::Invalid("state and channel dimensions must be at least 1".into()));
        }
        check_finite("a", &self.a)?;
        check_rows("b", &self.b, n)?;
        check_rows("c", &self.c, n)?;
        check_rows("x", &self.x, p)
    }

    /// Contiguous sub-sequence, used to cut chunks for streaming.
    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            a: self.a[range.clone()].to_vec(),
            b: self.b[range.clone()].to_vec(),
            c: self.c[range.clone()].to_vec(),
            x: self.x[range].to_vec(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> SsdInstance<U> {
        let rows = |m: &[Vec<S>]| m.iter().map(|r| cast_vec(r)).collect();
        SsdInstance {
            a: cast_vec(&self.a),
            b: rows(&self.b),
            c: rows(&self.c),
            x: rows(&self.x),
        }
    }

    /// `B_t x_tᵀ` for every step.
    pub fn input_products(&self) -> Vec<Mat<S>> {
        self.b
            .iter()
            .zip(&self.x)
            .map(|(b, x)| Mat::outer(b, x))
            .collect()
    }

    /// Random instance: B, C, x uniform in [-1, 1], a uniform in `(a_lo, a_hi]`.
    pub fn random(
        rng: &mut SeededRng,
        len: usize,
        state_dim: usize,
        channels: usize,
        a_lo: f64,
        a_hi: f64,
    ) -> Self {
        let mut rows = |width: usize| -> Vec<Vec<S>> {
            (0..len)
                .map(|_| (0..width).map(|_| S::of(rng.range(-1.0, 1.0))).collect())
                .collect()
        };
        let b = rows(state_dim);
        let c = rows(state_dim);
        let x = rows(channels);
        let a = (0..len)
            .map(|_| S::of(a_hi - (a_hi - a_lo) * rng.uniform()))
            .collect();
        Self { a, b, c, x }
    }
}

/// Left-to-right recurrence `h_t = a_t h_{t-1} + B_t x_tᵀ`, `y_t = C_tᵀ h_t`.
pub fn ssd_scan_recurrent<S: Scalar>(
    inst: &SsdInstance<S>,
    h0: &HiddenState<S>,
) -> Result<(Vec<Vec<S>>, HiddenState<S>)> {
    inst.validate()?;
    check_len("h0.rows", inst.state_dim(), h0.h.rows())?;
    check_len("h0.cols", inst.channels(), h0.h.cols())?;
    let mut h = h0.h.clone();
    let mut ys = Vec::with_capacity(inst.len());
    for t in 0..inst.len() {
        h.decay_add(inst.a[t], &Mat::outer(&inst.b[t], &inst.x[t]));
        if !h.is_finite() {
            return Err(Error::NonFiniteState { step: t });
        }
        ys.push(h.left_contract(&inst.c[t]));
    }
    Ok((ys, HiddenState { h }))
}

/// The 1-semiseparable mask: `L[t][s] = a_t ⋯ a_{s+1}` for `t ≥ s`, zero above
/// the diagonal.
pub fn build_l_plain<S: Scalar>(a: &[S]) -> Result<Mat<S>> {
    if a.is_empty() {
        return Err(Error::Invalid("decay sequence is empty".into()));
    }
    check_finite("a", a)?;
    let t_len = a.len();
    let mut l = Mat::zeros(t_len, t_len);
    for s in 0..t_len {
        let mut prod = S::one();
        l[(s, s)] = prod;
        for t in s + 1..t_len {
            prod *= a[t];
            l[(t, s)] = prod;
        }
    }
    Ok(l)
}

/// `y = (L ∘ C Bᵀ) x` with the default size cap.
pub fn ssd_matrix_form<S: Scalar>(inst: &SsdInstance<S>) -> Result<Vec<Vec<S>>> {
    ssd_matrix_form_capped(inst, DEFAULT_MATERIALIZE_CAP)
}

pub fn ssd_matrix_form_capped<S: Scalar>(inst: &SsdInstance<S>, cap: usize) -> Result<Vec<Vec<S>>> {
    inst.validate()?;
    if inst.len() > cap {
        return Err(Error::SizeLimit {
            len: inst.len(),
            cap,
        });
    }
    let l = build_l_plain(&inst.a)?;
    Ok(apply_masked(&l, inst))
}

/// `y_t = Σ_{s≤t} L[t][s] (C_t·B_s) x_s` for any lower-triangular mask.
pub(crate) fn apply_masked<S: Scalar>(l: &Mat<S>, inst: &SsdInstance<S>) -> Vec<Vec<S>> {
    let p = inst.channels();
    (0..inst.len())
        .map(|t| {
            let mut y = vec![S::zero(); p];
            for s in 0..=t {
                let m = l[(t, s)] * dot(&inst.c[t], &inst.b[s]);
                for (yi, &xi) in y.iter_mut().zip(&inst.x[s]) {
                    *yi += m * xi;
                }
            }
            y
        })
        .collect()
}

/// Gradients of `Σ_t ⟨g_t, y_t⟩` for the plain recurrence started at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SsdGradients<S> {
    pub grad_a: Vec<S>,
    pub grad_b: Vec<Vec<S>>,
    pub grad_c: Vec<Vec<S>>,
    pub grad_x: Vec<Vec<S>>,
}

/// Reverse-mode pass through [`ssd_scan_recurrent`] with `h0 = 0`.
pub fn ssd_backward<S: Scalar>(inst: &SsdInstance<S>, upstream: &[Vec<S>]) -> Result<SsdGradients<S>> {
    inst.validate()?;
    let (t_len, n, p) = (inst.len(), inst.state_dim(), inst.channels());
    check_len("upstream", t_len, upstream.len())?;
    check_rows("upstream", upstream, p)?;

    let mut states = Vec::with_capacity(t_len + 1);
    states.push(Mat::zeros(n, p));
    for t in 0..t_len {
        let mut h = states[t].clone();
        h.decay_add(inst.a[t], &Mat::outer(&inst.b[t], &inst.x[t]));
        states.push(h);
    }

    let mut grads = SsdGradients {
        grad_a: vec![S::zero(); t_len],
        grad_b: vec![vec![S::zero(); n]; t_len],
        grad_c: vec![vec![S::zero(); n]; t_len],
        grad_x: vec![vec![S::zero(); p]; t_len],
    };
    let mut adj = Mat::zeros(n, p);
    for t in (0..t_len).rev() {
        adj.add_scaled(S::one(), &Mat::outer(&inst.c[t], &upstream[t]));
        grads.grad_c[t] = states[t + 1].right_contract(&upstream[t]);
        grads.grad_a[t] = adj.inner(&states[t]);
        grads.grad_b[t] = adj.right_contract(&inst.x[t]);
        grads.grad_x[t] = adj.left_contract(&inst.b[t]);
        adj.scale(inst.a[t]);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_instance(x: &[f64]) -> SsdInstance<f64> {
        let t = x.len();
        SsdInstance::new(
            vec![1.0; t],
            vec![vec![1.0]; t],
            vec![vec![1.0]; t],
            x.iter().map(|&v| vec![v]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_step_is_dot_times_input() {
        let inst = SsdInstance::new(
            vec![0.3],
            vec![vec![1.0, 2.0]],
            vec![vec![0.5, -1.0]],
            vec![vec![2.0, 3.0, -1.0]],
        )
        .unwrap();
        let (y, _) = ssd_scan_recurrent(&inst, &HiddenState::zeros(2, 3)).unwrap();
        // C·B = 0.5 - 2 = -1.5
        assert_eq!(y, vec![vec![-3.0, -4.5, 1.5]]);
        assert_eq!(ssd_matrix_form(&inst).unwrap(), y);
    }

    #[test]
    fn decay_free_gives_prefix_sums() {
        let xs = [1.0, -2.0, 0.5, 4.0, 3.0];
        let (y, h) = ssd_scan_recurrent(&ones_instance(&xs), &HiddenState::zeros(1, 1)).unwrap();
        let mut acc = 0.0;
        for (t, yt) in y.iter().enumerate() {
            acc += xs[t];
            assert_eq!(yt[0], acc);
        }
        assert_eq!(h.h[(0, 0)], acc);
    }

    #[test]
    fn l_plain_matches_written_out_rows() {
        let l = build_l_plain(&[0.7, 0.5, 0.5]).unwrap();
        assert_eq!(l.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(l.row(1), &[0.5, 1.0, 0.0]);
        assert_eq!(l.row(2), &[0.25, 0.5, 1.0]);

        let a = [2.0, 3.0, 5.0];
        let l = build_l_plain(&a).unwrap();
        assert_eq!(l.row(1), &[a[1], 1.0, 0.0]);
        assert_eq!(l.row(2), &[a[2] * a[1], a[2], 1.0]);
    }

    #[test]
    fn l_plain_corner_is_full_product() {
        let mut rng = SeededRng::new(11);
        let a = rng.vec(5, 0.1, 1.0);
        let l = build_l_plain(&a).unwrap();
        let mut expected = 1.0;
        for &v in &a[1..] {
            expected *= v;
        }
        assert!((l[(4, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_decay_isolates_steps() {
        let mut rng = SeededRng::new(5);
        let mut inst = SsdInstance::<f64>::random(&mut rng, 6, 3, 2, 0.5, 1.0);
        inst.a = vec![0.0; 6];
        let y = ssd_matrix_form(&inst).unwrap();
        for t in 0..6 {
            let cb = dot(&inst.c[t], &inst.b[t]);
            for p in 0..2 {
                assert_eq!(y[t][p], cb * inst.x[t][p]);
            }
        }
    }

    #[test]
    fn shape_errors_name_the_field() {
        let mut inst = ones_instance(&[1.0, 2.0]);
        inst.c.pop();
        match ssd_scan_recurrent(&inst, &HiddenState::zeros(1, 1)) {
            Err(Error::Shape { field: "c", expected: 2, found: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let inst = ones_instance(&[1.0, 2.0]);
        assert!(matches!(
            ssd_scan_recurrent(&inst, &HiddenState::zeros(2, 1)),
            Err(Error::Shape { field: "h0.rows", .. })
        ));
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut inst = ones_instance(&[1.0, 2.0]);
        inst.x[1][0] = f64::NAN;
        assert!(matches!(
            ssd_scan_recurrent(&inst, &HiddenState::zeros(1, 1)),
            Err(Error::NonFinite { field: "x", index: 1 })
        ));
        inst.x[1][0] = 0.0;
        inst.a[0] = f64::INFINITY;
        assert!(matches!(ssd_matrix_form(&inst), Err(Error::NonFinite { field: "a", .. })));
    }

    #[test]
    fn overflowing_state_reports_step() {
        let inst = SsdInstance::new(
            vec![1e200; 4],
            vec![vec![1.0]; 4],
            vec![vec![1.0]; 4],
            vec![vec![1e200]; 4],
        )
        .unwrap();
        assert!(matches!(
            ssd_scan_recurrent(&inst, &HiddenState::zeros(1, 1)),
            Err(Error::NonFiniteState { step: 1 })
        ));
    }

    #[test]
    fn materialization_cap() {
        let inst = ones_instance(&[1.0; 10]);
        assert!(matches!(
            ssd_matrix_form_capped(&inst, 8),
            Err(Error::SizeLimit { len: 10, cap: 8 })
        ));
    }
}
