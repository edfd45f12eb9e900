//! Dense-tensor arithmetic with reverse-mode automatic differentiation.
//!
//! This is the numeric substrate for the whole crate: a plain [`Tensor`]
//! value type (row-major storage, f32 or f64 element type) and a
//! define-by-run [`Graph`] that records operations during the forward
//! pass and replays them in reverse to accumulate gradients.

mod graph;
mod kernels;

pub use graph::{Graph, Var};
pub use kernels::gemm;

use std::fmt;

/// Element type for tensors: f32 for training speed, f64 for gradient
/// checking with tight tolerances.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;

    /// General matrix multiply `c := a*b + beta*c` on raw strided buffers.
    ///
    /// # Safety
    /// Pointers must cover `m`/`k`/`n` elements under the given strides.
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn into_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn into_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// A dense row-major tensor. Every extent is positive and
/// `shape.iter().product() == data.len()` always holds.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<F>) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&e| e > 0),
            "tensor shape must have positive extents, got {:?}",
            shape
        );
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "shape {:?} implies {} elements, got {}",
            shape,
            numel,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::from_vec(shape, vec![F::zero(); numel])
    }

    pub fn scalar(v: F) -> Self {
        Tensor::from_vec(vec![1, 1], vec![v])
    }

    /// Column vector `[len × 1]`.
    pub fn column(data: Vec<F>) -> Self {
        let len = data.len();
        Tensor::from_vec(vec![len, 1], data)
    }

    /// Build a matrix from rows (used mostly by tests).
    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        assert!(!rows.is_empty());
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flatten().copied().collect();
        Tensor::from_vec(vec![rows.len(), cols], data)
    }

    /// Uniform random fill over `(lo, hi)`, drawn in row-major order.
    pub fn uniform<R: rand::Rng>(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| F::from_f64(rng.gen_range(lo..hi)))
            .collect();
        Tensor::from_vec(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() needs a rank-2 tensor");
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() needs a rank-2 tensor");
        self.shape[1]
    }

    pub fn at(&self, r: usize, c: usize) -> F {
        assert_eq!(self.shape.len(), 2);
        self.data[r * self.shape[1] + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Convert element type (used when loading f32 checkpoints into f64 models).
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::from_f64(v.into_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_length_must_agree() {
        let t = Tensor::<f64>::from_vec(vec![2, 3], vec![0.0; 6]);
        assert_eq!(t.numel(), 6);
        assert_eq!(t.at(1, 2), 0.0);
    }

    #[test]
    #[should_panic(expected = "implies 6 elements")]
    fn mismatched_length_rejected() {
        let _ = Tensor::<f64>::from_vec(vec![2, 3], vec![0.0; 5]);
    }

    #[test]
    #[should_panic(expected = "positive extents")]
    fn zero_extent_rejected() {
        let _ = Tensor::<f64>::from_vec(vec![2, 0], vec![]);
    }
}
