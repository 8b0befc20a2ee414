use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::tensor::LinearMap;

/// Orthogonal `W` minimizing `Σ‖W·src_i − tgt_i‖²` over paired rows.
///
/// With `M = tgtᵀ·src = UΣVᵀ`, the minimizer is `W = UVᵀ`.
pub fn procrustes(src: ArrayView2<f64>, tgt: ArrayView2<f64>) -> Result<LinearMap> {
    if src.dim() != tgt.dim() {
        return Err(Error::shape(
            "procrustes",
            format!("{:?}", src.dim()),
            format!("{:?}", tgt.dim()),
        ));
    }
    if src.nrows() == 0 {
        return Err(Error::InvalidArgument("procrustes needs at least one pair".into()));
    }
    let cross = tgt.t().dot(&src);
    if !cross.iter().any(|&v| v != 0.0) {
        return Err(Error::Degenerate("cross-covariance matrix has rank 0".into()));
    }
    if !cross.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("cross-covariance matrix is not finite".into()));
    }
    let c = cross.ncols();
    let m = DMatrix::from_fn(c, c, |i, j| cross[[i, j]]);
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Degenerate("SVD did not converge".into())),
    };
    let w = u * v_t;
    LinearMap::new(Array2::from_shape_fn((c, c), |(i, j)| w[(i, j)]))
}
