//! Scalar special functions of the standard normal distribution and the
//! small dense symmetric positive-definite algebra used by the belief
//! updates, the acquisition function and the likelihood refit.

mod spd;
mod special;

pub use spd::{
    cholesky_jittered, is_positive_semidefinite, log_det_spd, outer_downdate, spd_inverse,
    spd_quadratic_form, symmetrize, JITTER,
};
pub use special::{
    expected_positive_part, log_norm_sf, mills_lambda, norm_cdf, norm_pdf, norm_sf,
    truncated_normal_moments, TruncatedNormalMoments,
};
