use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dimension list of a tensor. Always non-empty, every extent at least 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Dimension {
                op: "shape",
                detail: "shape must have at least one dimension".to_string(),
            });
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension {
                op: "shape",
                detail: format!("all extents must be >= 1, got {dims:?}"),
            });
        }
        Ok(Shape {
            dims: dims.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }
}

/// Row-major flat offset of the multi-index `idx` within `dims`.
pub fn flat_index(dims: &[usize], idx: &[usize]) -> usize {
    debug_assert_eq!(dims.len(), idx.len());
    let mut flat = 0;
    for (d, i) in dims.iter().zip(idx) {
        debug_assert!(i < d);
        flat = flat * d + i;
    }
    flat
}

/// Dense N-dimensional array of scalars in row-major order. The universal
/// value type: images, feature maps, weights and gradients are all tensors.
///
/// Tensors are immutable once constructed except for explicit in-place
/// optimizer updates; read-only sharing across threads is safe.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Shape,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(dims: &[usize], data: Vec<S>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::Dimension {
                op: "tensor",
                detail: format!(
                    "shape {dims:?} requires {} elements, got {}",
                    shape.numel(),
                    data.len()
                ),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let shape = Shape::new(dims).expect("valid shape");
        let data = vec![S::zero(); shape.numel()];
        Tensor { shape, data }
    }

    pub fn filled(dims: &[usize], value: S) -> Self {
        let shape = Shape::new(dims).expect("valid shape");
        let data = vec![value; shape.numel()];
        Tensor { shape, data }
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn at(&self, idx: &[usize]) -> S {
        self.data[flat_index(self.shape.dims(), idx)]
    }

    /// Same data, new shape; element count must match.
    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        self.clone().into_reshaped(dims)
    }

    /// Zero-copy reshape of an owned tensor.
    pub fn into_reshaped(self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(Error::Dimension {
                op: "reshape",
                detail: format!(
                    "cannot reshape {:?} ({} elements) to {dims:?} ({} elements)",
                    self.dims(),
                    self.data.len(),
                    shape.numel()
                ),
            });
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, rhs: &Self, op: &'static str, f: impl Fn(S, S) -> S) -> Result<Self> {
        if self.dims() != rhs.dims() {
            return Err(Error::Dimension {
                op,
                detail: format!("shapes differ: {:?} vs {:?}", self.dims(), rhs.dims()),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: S) -> Self {
        self.map(|v| v * factor)
    }

    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        gemm(self, false, rhs, false)
    }
}

/// Output rows per parallel band. Fixed so the work split is a pure
/// function of the shapes, keeping results bit-identical across runs
/// regardless of thread count.
const GEMM_BAND_ROWS: usize = 64;
/// Below this many multiply-adds the parallel split is not worth it.
const GEMM_PAR_MIN_MACS: usize = 1 << 21;

/// `A (x) B` where either operand may be used transposed. Both tensors must
/// be rank 2. This is the validated matrix-multiply entry point; convolution
/// and dense layers call `gemm_into` on raw slices after their own checks.
pub(crate) fn gemm<S: Scalar>(a: &Tensor<S>, ta: bool, b: &Tensor<S>, tb: bool) -> Result<Tensor<S>> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Dimension {
            op: "matmul",
            detail: format!(
                "expected rank-2 operands, got {:?} and {:?}",
                a.dims(),
                b.dims()
            ),
        });
    }
    let (ar, ac) = (a.dims()[0], a.dims()[1]);
    let (br, bc) = (b.dims()[0], b.dims()[1]);
    let k = if ta { ar } else { ac };
    let kb = if tb { bc } else { br };
    if k != kb {
        return Err(Error::Dimension {
            op: "matmul",
            detail: format!(
                "inner dimensions disagree: {:?}{} x {:?}{}",
                a.dims(),
                if ta { " transposed" } else { "" },
                b.dims(),
                if tb { " transposed" } else { "" }
            ),
        });
    }
    let m = if ta { ac } else { ar };
    let n = if tb { br } else { bc };
    let mut out = vec![S::zero(); m * n];
    gemm_into(a.data(), (ar, ac), ta, b.data(), (br, bc), tb, &mut out);
    Tensor::new(&[m, n], out)
}

/// Unchecked gemm on raw row-major slices: `out = op(A) * op(B)` where
/// `op` optionally transposes. `out` must hold exactly m*n elements and is
/// overwritten.
///
/// Large products are split over fixed 64-row output bands; the banding is
/// a pure function of the shapes, so results are bit-identical across runs
/// whatever the thread count.
pub(crate) fn gemm_into<S: Scalar>(
    a: &[S],
    (ar, ac): (usize, usize),
    ta: bool,
    b: &[S],
    (br, bc): (usize, usize),
    tb: bool,
    out: &mut [S],
) {
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let n = if tb { br } else { bc };
    debug_assert_eq!(a.len(), ar * ac);
    debug_assert_eq!(b.len(), br * bc);
    debug_assert_eq!(out.len(), m * n);
    debug_assert_eq!(k, if tb { bc } else { br });

    let (rsa, csa) = if ta {
        (1isize, ac as isize)
    } else {
        (ac as isize, 1isize)
    };
    let (rsb, csb) = if tb {
        (1isize, bc as isize)
    } else {
        (bc as isize, 1isize)
    };

    let ap = a.as_ptr() as usize;
    let bp = b.as_ptr() as usize;
    let macs = m * k * n;

    if m >= 2 * GEMM_BAND_ROWS && macs >= GEMM_PAR_MIN_MACS {
        out.par_chunks_mut(GEMM_BAND_ROWS * n)
            .enumerate()
            .for_each(|(band, chunk)| {
                let r0 = band * GEMM_BAND_ROWS;
                let rows = chunk.len() / n;
                // Offset A to the band's first output row.
                let a_off = if ta { r0 } else { r0 * ac };
                unsafe {
                    S::gemm(
                        rows,
                        k,
                        n,
                        S::one(),
                        (ap as *const S).add(a_off),
                        rsa,
                        csa,
                        bp as *const S,
                        rsb,
                        csb,
                        S::zero(),
                        chunk.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            });
    } else {
        unsafe {
            S::gemm(
                m,
                k,
                n,
                S::one(),
                ap as *const S,
                rsa,
                csa,
                bp as *const S,
                rsb,
                csb,
                S::zero(),
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (m, k) = (a.dims()[0], a.dims()[1]);
        let n = b.dims()[1];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += a.data()[i * k + l] * b.data()[l * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        Tensor::new(&[m, n], out).unwrap()
    }

    fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::new(dims, data).unwrap()
    }

    #[test]
    fn matmul_identity_case() {
        let i = Tensor::new(&[2, 2], vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
        let a = Tensor::new(&[2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(i.matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let a = Tensor::new(&[1, 2], vec![1.0f64, 2.0]).unwrap();
        let b = Tensor::new(&[2, 1], vec![3.0, 4.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.dims(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_naive_oracle_7x5x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_tensor(&mut rng, &[7, 5]);
        let b = random_tensor(&mut rng, &[5, 3]);
        let got = a.matmul(&b).unwrap();
        let want = naive_matmul(&a, &b);
        assert_eq!(got, want);
    }

    #[test]
    fn matmul_identity_left_and_right() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1usize, 2, 5, 9] {
            let a = random_tensor(&mut rng, &[n, n]);
            let mut eye = Tensor::zeros(&[n, n]);
            for i in 0..n {
                eye.data_mut()[i * n + i] = 1.0;
            }
            assert_eq!(eye.matmul(&a).unwrap(), a);
            assert_eq!(a.matmul(&eye).unwrap(), a);
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[4, 2]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn gemm_transpose_variants_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_tensor(&mut rng, &[4, 6]);
        let b = random_tensor(&mut rng, &[6, 5]);
        let want = naive_matmul(&a, &b);

        // A^T path: store A transposed, ask for the transpose back.
        let mut at = Tensor::zeros(&[6, 4]);
        for i in 0..4 {
            for j in 0..6 {
                at.data_mut()[j * 4 + i] = a.data()[i * 6 + j];
            }
        }
        assert_eq!(gemm(&at, true, &b, false).unwrap(), want);

        let mut bt = Tensor::zeros(&[5, 6]);
        for i in 0..6 {
            for j in 0..5 {
                bt.data_mut()[j * 6 + i] = b.data()[i * 5 + j];
            }
        }
        assert_eq!(gemm(&a, false, &bt, true).unwrap(), want);
    }

    #[test]
    fn elementwise_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&mut rng, &[3, 4]);
        let zeros = Tensor::zeros(&[3, 4]);
        assert_eq!(x.add(&zeros).unwrap(), x);
        assert_eq!(x.scale(1.0), x);
        assert_eq!(x.sub(&x).unwrap(), zeros);
    }

    #[test]
    fn elementwise_shape_mismatch() {
        let a = Tensor::<f64>::zeros(&[2, 2]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(
            a.add(&b),
            Err(Error::Dimension { op: "add", .. })
        ));
    }

    #[test]
    fn reshape_round_trip() {
        let t = Tensor::new(&[2, 3], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let flat = t.reshape(&[6]).unwrap();
        assert_eq!(flat.dims(), &[6]);
        let back = flat.reshape(&[2, 3]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn reshape_preserves_element_count_check() {
        assert!(Tensor::<f64>::zeros(&[128, 8, 11]).reshape(&[11264]).is_ok());
        let t = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(
            t.reshape(&[5]),
            Err(Error::Dimension { op: "reshape", .. })
        ));
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(Shape::new(&[]).is_err());
        assert!(Shape::new(&[3, 0, 2]).is_err());
        assert!(Tensor::new(&[2, 2], vec![1.0f64; 3]).is_err());
    }

    proptest! {
        // Row-major contract: walking coordinates in odometer order visits
        // flat offsets 0, 1, 2, ...
        #[test]
        fn row_major_indexing_matches_coordinate_iteration(
            dims in proptest::collection::vec(1usize..5, 1..4)
        ) {
            let total: usize = dims.iter().product();
            let mut idx = vec![0usize; dims.len()];
            for expected_flat in 0..total {
                prop_assert_eq!(flat_index(&dims, &idx), expected_flat);
                // odometer increment
                for axis in (0..dims.len()).rev() {
                    idx[axis] += 1;
                    if idx[axis] < dims[axis] {
                        break;
                    }
                    idx[axis] = 0;
                }
            }
        }

        #[test]
        fn matmul_matches_oracle_on_random_shapes(
            m in 1usize..16, k in 1usize..16, n in 1usize..16, seed in 0u64..1000
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_tensor(&mut rng, &[m, k]);
            let b = random_tensor(&mut rng, &[k, n]);
            prop_assert_eq!(a.matmul(&b).unwrap(), naive_matmul(&a, &b));
        }
    }

    #[test]
    fn f32_matmul_close_to_f64_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a64 = random_tensor(&mut rng, &[16, 16]);
        let b64 = random_tensor(&mut rng, &[16, 16]);
        let a32 = Tensor::new(&[16, 16], a64.data().iter().map(|&v| v as f32).collect()).unwrap();
        let b32 = Tensor::new(&[16, 16], b64.data().iter().map(|&v| v as f32).collect()).unwrap();
        let got = a32.matmul(&b32).unwrap();
        let want = naive_matmul(&a64, &b64);
        for (g, w) in got.data().iter().zip(want.data()) {
            let rel = ((*g as f64) - w).abs() / w.abs().max(1.0);
            assert!(rel < 1e-5, "got {g}, want {w}");
        }
    }

    #[test]
    fn banded_parallel_path_matches_single_call() {
        // 192 rows and >2^21 multiply-adds crosses the banding threshold;
        // the result must still equal the sequential naive product.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a = random_tensor(&mut rng, &[192, 200]);
        let b = random_tensor(&mut rng, &[200, 64]);
        assert_eq!(a.matmul(&b).unwrap(), naive_matmul(&a, &b));
    }
}
