use std::fmt::{Debug, Display};

use num_traits::{Float, NumCast};

/// Tensor element type. Models are instantiated either at `f32` (training
/// and CLI builds) or `f64` (verification suites); one run never mixes the
/// two precisions.
pub trait Scalar: Float + Debug + Display + Send + Sync + 'static {
    /// Dense matrix multiply `C = alpha * A * B + beta * C` with explicit
    /// row/column strides, mirroring the `matrixmultiply` calling convention.
    ///
    /// # Safety
    /// The pointers must reference buffers that cover every element reached
    /// through the given dimensions and strides.
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
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

    fn of_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 converts to scalar")
    }

    fn of_f32(v: f32) -> Self {
        <Self as NumCast>::from(v).expect("finite f32 converts to scalar")
    }

    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("scalar converts to f64")
    }

    fn as_f32(self) -> f32 {
        <f32 as NumCast>::from(self).expect("scalar converts to f32")
    }
}

impl Scalar for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    // The f64 kernel accumulates every output element in ascending-k order
    // with separate multiply and add, so results are bit-identical to a
    // naive triple loop. Verification suites rely on that equality; f64 is
    // never on the training hot path.
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        for i in 0..m {
            for j in 0..n {
                let cp = c.offset(i as isize * rsc + j as isize * csc);
                *cp = if beta == 0.0 { 0.0 } else { beta * *cp };
            }
        }
        for i in 0..m {
            for kk in 0..k {
                let aik = alpha * *a.offset(i as isize * rsa + kk as isize * csa);
                for j in 0..n {
                    let cp = c.offset(i as isize * rsc + j as isize * csc);
                    *cp = *cp + aik * *b.offset(kk as isize * rsb + j as isize * csb);
                }
            }
        }
    }
}
