//! Dense matrix kernels used by the solver.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin SVD `A = U diag(sigma) V^T` with `r = min(p, q)` components.
///
/// Singular values are sorted non-increasing and each column of `U` has its
/// largest-magnitude entry made nonnegative (the sign flip is mirrored in `V`).
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (mut col, s) in us.column_iter_mut().zip(self.sigma.iter()) {
            col *= *s;
        }
        us * self.v.transpose()
    }
}

/// Scalars with a thin SVD. The factorization itself is delegated to
/// `faer`; nalgebra's own SVD can return inconsistent factors for exactly
/// rank-deficient inputs.
pub trait SvdScalar: ComplexField<RealField = f64> + Copy {
    #[doc(hidden)]
    fn factor(a: &DMatrix<Self>) -> Result<Factors<Self>>;
    #[doc(hidden)]
    fn values(a: &DMatrix<Self>) -> Result<Vec<f64>>;
}

#[doc(hidden)]
pub struct Factors<T> {
    u: DMatrix<T>,
    sigma: Vec<f64>,
    v: DMatrix<T>,
}

fn svd_failed<E: std::fmt::Debug>(rows: usize, cols: usize) -> impl FnOnce(E) -> Error {
    move |e| Error::Numeric(format!("SVD of {rows}x{cols} matrix failed: {e:?}"))
}

macro_rules! impl_svd_scalar {
    ($t:ty) => {
        impl SvdScalar for $t {
            fn factor(a: &DMatrix<Self>) -> Result<Factors<Self>> {
                let (p, q) = a.shape();
                let svd = faer::Mat::<$t>::from_fn(p, q, |i, j| a[(i, j)])
                    .thin_svd()
                    .map_err(svd_failed(p, q))?;
                let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
                Ok(Factors {
                    u: DMatrix::from_fn(p, u.ncols(), |i, j| u[(i, j)]),
                    sigma: (0..s.nrows()).map(|i| s[i].real()).collect(),
                    v: DMatrix::from_fn(q, v.ncols(), |i, j| v[(i, j)]),
                })
            }

            fn values(a: &DMatrix<Self>) -> Result<Vec<f64>> {
                let (p, q) = a.shape();
                faer::Mat::<$t>::from_fn(p, q, |i, j| a[(i, j)])
                    .singular_values()
                    .map_err(svd_failed(p, q))
            }
        }
    };
}

impl_svd_scalar!(f64);
impl_svd_scalar!(num_complex::Complex64);

fn check_finite<T: SvdScalar>(a: &DMatrix<T>) -> Result<()> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("SVD input has non-finite entries".into()));
    }
    Ok(())
}

fn svd_of<T: SvdScalar>(a: &DMatrix<T>) -> Result<Factors<T>> {
    check_finite(a)?;
    T::factor(a)
}

pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let svd = svd_of(a)?;
    let Factors { mut u, sigma, mut v } = svd;
    let sigma = DVector::from_vec(sigma);
    for j in 0..u.ncols() {
        let mut pivot = 0.0f64;
        for x in u.column(j).iter() {
            if x.abs() > pivot.abs() {
                pivot = *x;
            }
        }
        if pivot < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(ThinSvd { u, sigma, v })
}

/// Maximizes `Tr(W^T M)` over column-orthonormal `W` of the same shape as `M`.
///
/// The maximizer is `U V^T` from the thin SVD of `M`. For `M = 0` every
/// feasible `W` is optimal and `[I_k; 0]` is returned.
pub fn procrustes_max_trace(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, k) = m.shape();
    if p < k {
        return Err(Error::Shape(format!(
            "Procrustes needs rows >= cols, got {p}x{k}"
        )));
    }
    if m.iter().all(|x| *x == 0.0) {
        return Ok(DMatrix::identity(p, k));
    }
    let svd = thin_svd(m)?;
    Ok(&svd.u * svd.v.transpose())
}

/// Elementwise `sign(a) * max(|a| - gamma, 0)`.
pub fn soft_threshold(a: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    a.map(|x| {
        let mag = x.abs() - gamma;
        if mag > 0.0 {
            x.signum() * mag
        } else {
            0.0
        }
    })
}

/// Singular-value thresholding: the proximal map of `tau * ||.||_*`.
pub fn singular_value_threshold<T: SvdScalar>(
    a: &DMatrix<T>,
    tau: f64,
) -> Result<DMatrix<T>> {
    if tau == 0.0 {
        return Ok(a.clone());
    }
    let Factors { mut u, sigma, v } = svd_of(a)?;
    for (mut col, s) in u.column_iter_mut().zip(&sigma) {
        let shrunk = (s - tau).max(0.0);
        col.scale_mut(shrunk);
    }
    Ok(u * v.adjoint())
}

/// Sum of singular values.
pub fn nuclear_norm<T: SvdScalar>(a: &DMatrix<T>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    check_finite(a)?;
    Ok(T::values(a)?.iter().sum())
}

/// Largest absolute deviation of `Q^T Q` from the identity.
pub fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
    let gram = q.transpose() * q;
    let k = gram.nrows();
    (gram - DMatrix::<f64>::identity(k, k)).amax()
}
