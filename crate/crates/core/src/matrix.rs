//! Small dense row-major matrix used for hidden states (N×P) and
//! materialized sequence matrices (T×T, T×Q).

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Row-major construction from a flat buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    /// `u vᵀ`.
    pub fn outer(u: &[S], v: &[S]) -> Self {
        Self::from_fn(u.len(), v.len(), |r, c| u[r] * v[c])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == S::zero())
    }

    /// `self += k * other`, element order fixed.
    pub fn add_scaled(&mut self, k: S, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (d, &o) in self.data.iter_mut().zip(&other.data) {
            *d += k * o;
        }
    }

    /// `self = a * self + other`, the single-group recurrence update.
    pub fn decay_add(&mut self, a: S, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (d, &o) in self.data.iter_mut().zip(&other.data) {
            *d = a * *d + o;
        }
    }

    pub fn scale(&mut self, k: S) {
        for d in &mut self.data {
            *d *= k;
        }
    }

    /// Frobenius inner product, ascending element order.
    pub fn inner(&self, other: &Self) -> S {
        crate::scalar::dot(&self.data, &other.data)
    }

    /// `uᵀ self` for `u` of length `rows`; the contraction `C_tᵀ h_t`.
    pub fn left_contract(&self, u: &[S]) -> Vec<S> {
        debug_assert_eq!(u.len(), self.rows);
        let mut out = vec![S::zero(); self.cols];
        for (r, &ur) in u.iter().enumerate() {
            for (o, &m) in out.iter_mut().zip(self.row(r)) {
                *o += ur * m;
            }
        }
        out
    }

    /// `self v` for `v` of length `cols`.
    pub fn right_contract(&self, v: &[S]) -> Vec<S> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| crate::scalar::dot(self.row(r), v))
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: crate::scalar::cast_vec(&self.data),
        }
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> S {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&x, &y)| m.max((x - y).abs()))
    }
}

impl<S> Index<(usize, usize)> for Mat<S> {
    type Output = S;

    fn index(&self, (r, c): (usize, usize)) -> &S {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<S> IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut S {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outer_and_contractions() {
        let m = Mat::outer(&[1.0, 2.0], &[3.0, 4.0, 5.0]);
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m[(1, 2)], 10.0);
        assert_eq!(m.left_contract(&[1.0, 1.0]), vec![9.0, 12.0, 15.0]);
        assert_eq!(m.right_contract(&[1.0, 0.0, 1.0]), vec![8.0, 16.0]);
    }

    #[test]
    fn decay_add_is_recurrence_step() {
        let mut h = Mat::from_fn(1, 2, |_, c| c as f64 + 1.0);
        h.decay_add(0.5, &Mat::from_fn(1, 2, |_, _| 1.0));
        assert_eq!(h.as_slice(), &[1.5, 2.0]);
    }
}
