use std::f64::consts::{FRAC_1_SQRT_2, PI};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Threshold above which the Mills ratio is evaluated by continued fraction.
/// Below it `erfc` keeps full relative precision.
const MILLS_CF_THRESHOLD: f64 = 30.0;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, evaluated through `erfc` so that
/// the lower tail keeps relative precision.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Inverse Mills ratio `φ(η) / (1 - Φ(η))`, the standardized mean shift of a
/// normal variable truncated from below at `η`.
///
/// For `η` up to 30 the upper tail is taken from `erfc`, which is accurate to
/// a few ulps in relative terms. Beyond that the tail underflows long before
/// the ratio does, so the ratio is computed from the Laplace continued
/// fraction `(1 - Φ)/φ = 1/(η + 1/(η + 2/(η + 3/(η + ...))))`.
pub fn mills_lambda(eta: f64) -> f64 {
    if eta < MILLS_CF_THRESHOLD {
        let tail = norm_sf(eta);
        if tail == 0.0 {
            return eta;
        }
        norm_pdf(eta) / tail
    } else {
        mills_cf(eta)
    }
}

/// Evaluates `η + 1/(η + 2/(η + 3/(η + ...)))` by the modified Lentz method.
fn mills_cf(eta: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = eta;
    let mut c = f;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = eta + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = eta + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// `ln(1 − Φ(x))`, finite for every finite `x`.
pub fn log_norm_sf(x: f64) -> f64 {
    if x < MILLS_CF_THRESHOLD {
        norm_sf(x).ln()
    } else {
        // 1 − Φ = φ / λ
        -0.5 * x * x - (2.0 * PI).sqrt().ln() - mills_cf(x).ln()
    }
}

/// `g(u) = uΦ(u) + φ(u)`, which equals
/// `E[(G + u)⁺]` for standard normal `G`. Nonnegative for all `u`.
pub fn expected_positive_part(u: f64) -> f64 {
    if u >= 0.0 {
        u * norm_cdf(u) + norm_pdf(u)
    } else {
        // φ(u) - |u|(1 - Φ(|u|)), clamped against cancellation in the far tail
        let w = -u;
        (norm_pdf(w) - w * norm_sf(w)).max(0.0)
    }
}

/// First two moments of a normal variable truncated from below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormalMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Moments of `Y | Y > lower` for `Y ~ N(mu, var)`.
///
/// `mean = mu + s·λ(α)`, `variance = var·(1 + α·λ(α) − λ(α)²)` with
/// `s = √var` and `α = (lower − mu)/s`.
pub fn truncated_normal_moments(mu: f64, var: f64, lower: f64) -> TruncatedNormalMoments {
    debug_assert!(var > 0.0, "variance must be positive");
    let s = var.sqrt();
    let alpha = (lower - mu) / s;
    let lambda = mills_lambda(alpha);
    let factor = 1.0 - lambda * (lambda - alpha);
    // the factor lies in (0, 1]; rounding can push it out only in the far tail
    let factor = factor.clamp(f64::MIN_POSITIVE, 1.0);
    TruncatedNormalMoments {
        mean: mu + s * lambda,
        variance: var * factor,
    }
}

#[allow(dead_code)]
pub(crate) fn sqrt_2pi() -> f64 {
    (2.0 * PI).sqrt()
}
