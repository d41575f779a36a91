//! Slim third-order tensors (`k × m × n`: latent dim × views × samples) and
//! the Fourier-domain machinery behind the t-SVD tensor nuclear norm.
//!
//! The FFT runs along the sample mode, unnormalized forward and `1/n`
//! inverse. Frontal slice `j` of the spectrum is the complex `k × m` matrix
//! `T_f^(j)`; the tensor nuclear norm is `sum_j ||T_f^(j)||_*` and its
//! proximal map thresholds every slice's singular values by `n * rho`.
//! Real tensors have conjugate-symmetric spectra, so only slices
//! `0..=n/2` are factorized and the remainder are mirrored.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{nuclear_norm, singular_value_threshold};

#[derive(Debug, Clone, PartialEq)]
pub struct SlimTensor {
    k: usize,
    m: usize,
    n: usize,
    /// Tube-major storage: entry `(i, v, j)` lives at `(v * k + i) * n + j`.
    data: Vec<f64>,
}

impl SlimTensor {
    pub fn zeros(k: usize, m: usize, n: usize) -> Self {
        SlimTensor {
            k,
            m,
            n,
            data: vec![0.0; k * m * n],
        }
    }

    pub fn from_fn(k: usize, m: usize, n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(k, m, n);
        for v in 0..m {
            for i in 0..k {
                for j in 0..n {
                    t.data[(v * k + i) * n + j] = f(i, v, j);
                }
            }
        }
        t
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.k, self.m, self.n)
    }

    pub fn get(&self, i: usize, v: usize, j: usize) -> f64 {
        self.data[(v * self.k + i) * self.n + j]
    }

    /// Mode-3 fiber at `(i, v)`.
    pub fn tube(&self, i: usize, v: usize) -> &[f64] {
        let start = (v * self.k + i) * self.n;
        &self.data[start..start + self.n]
    }

    /// Frontal slice `j` as a `k × m` matrix.
    pub fn frontal_slice(&self, j: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.k, self.m, |i, v| self.get(i, v, j))
    }

    pub fn frobenius_norm_squared(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    pub fn scale(&self, alpha: f64) -> SlimTensor {
        SlimTensor {
            data: self.data.iter().map(|x| alpha * x).collect(),
            ..self.clone()
        }
    }

    pub fn max_abs_diff(&self, other: &SlimTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Inverse of [`stack_rotate`]: lateral slice `v` back as a `k × n` matrix.
    pub fn unstack(&self) -> Vec<DMatrix<f64>> {
        (0..self.m)
            .map(|v| DMatrix::from_fn(self.k, self.n, |i, j| self.get(i, v, j)))
            .collect()
    }
}

/// Stacks `m` matrices of shape `k × n` so that entry `(i, v, j)` is
/// `mats[v][(i, j)]`.
pub fn stack_rotate(mats: &[DMatrix<f64>]) -> Result<SlimTensor> {
    let Some(first) = mats.first() else {
        return Err(Error::Shape("cannot stack an empty list".into()));
    };
    let (k, n) = first.shape();
    if k == 0 || n == 0 {
        return Err(Error::Shape(format!("cannot stack {k}x{n} matrices")));
    }
    if let Some((v, bad)) = mats.iter().enumerate().find(|(_, a)| a.shape() != (k, n)) {
        return Err(Error::Shape(format!(
            "matrix {v} is {}x{}, expected {k}x{n}",
            bad.nrows(),
            bad.ncols()
        )));
    }
    let m = mats.len();
    let mut data = Vec::with_capacity(k * m * n);
    for a in mats {
        for i in 0..k {
            data.extend(a.row(i).iter());
        }
    }
    Ok(SlimTensor { k, m, n, data })
}

/// The mode-3 spectrum of a slim tensor as `n` complex `k × m` slices.
#[derive(Debug, Clone)]
pub struct FourierSlices {
    pub slices: Vec<DMatrix<Complex64>>,
    /// Set when the spectrum came from a real tensor (slice `n - j` is the
    /// conjugate of slice `j`).
    pub conjugate_symmetric: bool,
}

impl FourierSlices {
    pub fn n(&self) -> usize {
        self.slices.len()
    }
}

pub fn fft_mode3(t: &SlimTensor) -> FourierSlices {
    let (k, m, n) = t.shape();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut slices = vec![DMatrix::<Complex64>::zeros(k, m); n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for v in 0..m {
        for i in 0..k {
            for (b, x) in buf.iter_mut().zip(t.tube(i, v)) {
                *b = Complex64::new(*x, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (j, z) in buf.iter().enumerate() {
                slices[j][(i, v)] = *z;
            }
        }
    }
    FourierSlices {
        slices,
        conjugate_symmetric: true,
    }
}

/// Inverse FFT along the sample mode. The imaginary residual must stay
/// below `1e-8 * (1 + max|real|)`; anything larger is reported as a numeric
/// failure because the spectrum was not that of a real tensor.
pub fn ifft_mode3(f: &FourierSlices) -> Result<SlimTensor> {
    let n = f.n();
    let Some(first) = f.slices.first() else {
        return Err(Error::Shape("empty spectrum".into()));
    };
    let (k, m) = first.shape();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut out = SlimTensor::zeros(k, m, n);
    let inv_n = 1.0 / n as f64;
    let mut max_im = 0.0f64;
    let mut max_re = 0.0f64;
    for v in 0..m {
        for i in 0..k {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = f.slices[j][(i, v)];
            }
            ifft.process_with_scratch(&mut buf, &mut scratch);
            let start = (v * k + i) * n;
            for (dst, z) in out.data[start..start + n].iter_mut().zip(&buf) {
                *dst = z.re * inv_n;
                max_re = max_re.max(dst.abs());
                max_im = max_im.max((z.im * inv_n).abs());
            }
        }
    }
    if max_im > 1e-8 * (1.0 + max_re) {
        return Err(Error::Numeric(format!(
            "inverse FFT left an imaginary residual of {max_im:e}"
        )));
    }
    Ok(out)
}

/// `sum_j ||T_f^(j)||_*` over all `n` Fourier slices.
pub fn tensor_nuclear_norm(t: &SlimTensor) -> Result<f64> {
    let spectrum = fft_mode3(t);
    let n = spectrum.n();
    let mut total = 0.0;
    for j in 0..=n / 2 {
        let norm = nuclear_norm(&spectrum.slices[j])?;
        // Slices j and n - j are conjugates and share singular values.
        let mirrored = j != 0 && 2 * j != n;
        total += if mirrored { 2.0 * norm } else { norm };
    }
    Ok(total)
}

/// Solves `min_K rho ||K||_tnn + 1/2 ||K - L||_F^2` by thresholding the
/// singular values of every Fourier slice by `n * rho`.
pub fn tubal_shrinkage(l: &SlimTensor, rho: f64) -> Result<SlimTensor> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::InvalidInput(format!("shrinkage rho = {rho} < 0")));
    }
    if rho == 0.0 {
        return Ok(l.clone());
    }
    let mut spectrum = fft_mode3(l);
    let n = spectrum.n();
    let tau = n as f64 * rho;
    for j in 0..=n / 2 {
        spectrum.slices[j] = singular_value_threshold(&spectrum.slices[j], tau)?;
    }
    for j in n / 2 + 1..n {
        spectrum.slices[j] = spectrum.slices[n - j].map(|z| z.conj());
    }
    ifft_mode3(&spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_tensor(rng: &mut ChaCha8Rng, k: usize, m: usize, n: usize) -> SlimTensor {
        SlimTensor::from_fn(k, m, n, |_, _, _| rng.sample(StandardNormal))
    }

    #[test]
    fn stacking_layout() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = stack_rotate(std::slice::from_ref(&a)).unwrap();
        assert_eq!(t.shape(), (2, 1, 3));
        assert_eq!(t.unstack()[0], a);

        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        let t = stack_rotate(&[a.clone(), b.clone()]).unwrap();
        for j in 0..2 {
            let s = t.frontal_slice(j);
            assert_eq!(s.column(0), a.column(j));
            assert_eq!(s.column(1), b.column(j));
        }
    }

    #[test]
    fn stacking_rejects_mismatched_shapes() {
        let a = DMatrix::<f64>::zeros(2, 3);
        let b = DMatrix::<f64>::zeros(2, 4);
        assert!(matches!(stack_rotate(&[a, b]), Err(Error::Shape(_))));
        assert!(stack_rotate(&[]).is_err());
    }

    #[test]
    fn fft_of_constant_tubes() {
        let base = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let n = 6;
        let t = SlimTensor::from_fn(2, 2, n, |i, v, _| base[(i, v)]);
        let f = fft_mode3(&t);
        for i in 0..2 {
            for v in 0..2 {
                assert!((f.slices[0][(i, v)] - Complex64::new(n as f64 * base[(i, v)], 0.0)).norm() < 1e-12);
            }
        }
        for s in &f.slices[1..] {
            assert!(s.iter().all(|z| z.norm() < 1e-12));
        }
        let expected = n as f64 * nuclear_norm(&base).unwrap();
        assert!((tensor_nuclear_norm(&t).unwrap() - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn single_sample_fft_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tensor(&mut rng, 3, 2, 1);
        let f = fft_mode3(&t);
        assert_eq!(f.n(), 1);
        for i in 0..3 {
            for v in 0..2 {
                assert_eq!(f.slices[0][(i, v)], Complex64::new(t.get(i, v, 0), 0.0));
            }
        }
    }

    #[test]
    fn fft_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_tensor(&mut rng, 3, 2, 8);
        let back = ifft_mode3(&fft_mode3(&t)).unwrap();
        assert!(back.max_abs_diff(&t) < 1e-10);
    }

    #[test]
    fn ifft_rejects_asymmetric_spectrum() {
        let mut f = fft_mode3(&SlimTensor::zeros(1, 1, 4));
        f.slices[1][(0, 0)] = Complex64::new(0.0, 1.0);
        assert!(matches!(ifft_mode3(&f), Err(Error::Numeric(_))));
    }

    #[test]
    fn zero_tensor_has_zero_norm() {
        assert_eq!(tensor_nuclear_norm(&SlimTensor::zeros(3, 2, 5)).unwrap(), 0.0);
    }

    #[test]
    fn shrinkage_with_single_sample_is_matrix_svt() {
        let l = SlimTensor::from_fn(2, 2, 1, |i, v, _| match (i, v) {
            (0, 0) => 3.0,
            (1, 1) => 1.0,
            _ => 0.0,
        });
        let k = tubal_shrinkage(&l, 2.0).unwrap();
        let s = k.frontal_slice(0);
        assert!((s - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn zero_rho_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = random_tensor(&mut rng, 3, 2, 7);
        assert_eq!(tubal_shrinkage(&l, 0.0).unwrap(), l);
        assert!(tubal_shrinkage(&l, -1.0).is_err());
    }

    #[test]
    fn shrinkage_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = random_tensor(&mut rng, 3, 2, 6);
        let rho = 0.1;
        let obj = |t: &SlimTensor| {
            rho * tensor_nuclear_norm(t).unwrap()
                + 0.5 * t.data.iter().zip(&l.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        let k = tubal_shrinkage(&l, rho).unwrap();
        let best = obj(&k);
        for i in 0..1000 {
            let eps = [1e-4, 1e-3, 1e-2, 1e-1][i % 4];
            let cand = SlimTensor::from_fn(3, 2, 6, |a, b, c| k.get(a, b, c) + eps * rng.sample::<f64, _>(StandardNormal));
            assert!(obj(&cand) >= best - 1e-10, "candidate beat the prox output");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn unstack_inverts_stack(seed in any::<u64>(), k in 1usize..5, m in 1usize..4, n in 1usize..9) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mats: Vec<_> = (0..m).map(|_| DMatrix::from_fn(k, n, |_, _| rng.sample(StandardNormal))).collect();
                prop_assert_eq!(stack_rotate(&mats).unwrap().unstack(), mats);
            }

            #[test]
            fn norm_is_absolutely_homogeneous(seed in any::<u64>(), alpha in -5.0f64..5.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let t = random_tensor(&mut rng, 3, 2, 5);
                let base = tensor_nuclear_norm(&t).unwrap();
                prop_assert!(base > 0.0);
                let scaled = tensor_nuclear_norm(&t.scale(alpha)).unwrap();
                prop_assert!((scaled - alpha.abs() * base).abs() <= 1e-10 * (1.0 + base));
            }

            #[test]
            fn shrinkage_does_not_increase_norm(seed in any::<u64>(), rho in 0.0f64..1.0, n in 1usize..10) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let l = random_tensor(&mut rng, 3, 3, n);
                let k = tubal_shrinkage(&l, rho).unwrap();
                prop_assert!(tensor_nuclear_norm(&k).unwrap() <= tensor_nuclear_norm(&l).unwrap() + 1e-10);
            }
        }
    }
}
