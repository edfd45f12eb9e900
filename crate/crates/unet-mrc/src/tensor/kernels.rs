use super::{Scalar, Tensor};

/// `c := op_a(a) * op_b(b) + beta * c` for rank-2 tensors, where each
/// operand is transposed in place via strides (no copies).
///
/// `a` is read as `m x k` after optional transpose, `b` as `k x n`,
/// and `c` must be `m x n`.
pub fn gemm<F: Scalar>(
    a: &Tensor<F>,
    trans_a: bool,
    b: &Tensor<F>,
    trans_b: bool,
    beta: F,
    c: &mut Tensor<F>,
) {
    assert_eq!(a.shape().len(), 2, "gemm operand a must be rank 2");
    assert_eq!(b.shape().len(), 2, "gemm operand b must be rank 2");
    let (m, k) = if trans_a {
        (a.cols(), a.rows())
    } else {
        (a.rows(), a.cols())
    };
    let (kb, n) = if trans_b {
        (b.cols(), b.rows())
    } else {
        (b.rows(), b.cols())
    };
    assert_eq!(
        k, kb,
        "gemm inner dimensions differ: {:?}{} x {:?}{}",
        a.shape(),
        if trans_a { "^T" } else { "" },
        b.shape(),
        if trans_b { "^T" } else { "" }
    );
    assert_eq!(c.shape(), &[m, n], "gemm output must be [{m}, {n}]");

    // Row-major strides; a transposed view swaps them.
    let (rsa, csa) = if trans_a {
        (1, a.cols() as isize)
    } else {
        (a.cols() as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, b.cols() as isize)
    } else {
        (b.cols() as isize, 1)
    };
    let csc = 1;
    let rsc = n as isize;
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            a.data().as_ptr(),
            rsa,
            csa,
            b.data().as_ptr(),
            rsb,
            csb,
            beta,
            c.data_mut().as_mut_ptr(),
            rsc,
            csc,
        );
    }
}
