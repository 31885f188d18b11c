//! Standard normal density, distribution and quantile functions.
//!
//! `norm_cdf` uses the Taylor series `Φ(x) = ½ + φ(x) Σ x^{2n+1}/(2n+1)!!` near
//! the origin and the Laplace continued fraction for the tails, which keeps
//! relative accuracy in the upper tail via [`norm_sf`]. The quantile has a fast
//! path (rational initial guess refined by Halley steps) and a slow bisection
//! reference; tests check one against the other.

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SERIES_LIMIT: f64 = 3.0;

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `Σ x^{2n+1}/(2n+1)!!`, summed until terms stop contributing.
fn odd_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 1.0;
    while term.abs() > 1e-17 * sum.abs() {
        k += 2.0;
        term *= x2 / k;
        sum += term;
    }
    sum
}

/// Upper tail `1 − Φ(x)` for `x ≥ SERIES_LIMIT` by backward continued-fraction evaluation.
fn tail_cf(x: f64) -> f64 {
    let mut f = x;
    for k in (1..=120).rev() {
        f = x + k as f64 / f;
    }
    norm_pdf(x) / f
}

pub fn norm_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.abs() < SERIES_LIMIT {
        0.5 + norm_pdf(x) * odd_series(x)
    } else if x > 0.0 {
        1.0 - tail_cf(x)
    } else {
        tail_cf(-x)
    }
}

/// Survival function `1 − Φ(x)`, accurate in relative terms for large `x`.
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "normal quantile needs p in (0, 1), got {p}"
        )))
    }
}

/// Acklam's rational approximation (relative error about 1e−9).
fn ppf_initial(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < p_low {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// `Φ⁻¹(p)`.
pub fn norm_ppf(p: f64) -> Result<f64> {
    check_p(p)?;
    let mut x = ppf_initial(p);
    for _ in 0..2 {
        // residual taken on the smaller tail to keep relative precision
        let e = if x > 0.0 {
            (1.0 - p) - norm_sf(x)
        } else {
            norm_cdf(x) - p
        };
        let u = e / norm_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// `Φ⁻¹(p)` by bisection on `norm_cdf` to absolute width `1e−12`.
pub fn norm_ppf_bisect(p: f64) -> Result<f64> {
    check_p(p)?;
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(VaR_α, ES_α)` of `N(μ, σ²)`.
pub fn gaussian_var_es(mu: f64, sigma: f64, alpha: f64) -> Result<(f64, f64)> {
    let z = norm_ppf(alpha)?;
    Ok((mu + sigma * z, mu + sigma * norm_pdf(z) / (1.0 - alpha)))
}

/// `E[(Y − q)⁺]` for `Y ~ N(μ, σ²)`: `σ[φ(u) − u(1 − Φ(u))]`, `u = (q − μ)/σ`.
pub fn gaussian_excess_mean(mu: f64, sigma: f64, q: f64) -> f64 {
    if sigma == 0.0 {
        return (mu - q).max(0.0);
    }
    let u = (q - mu) / sigma;
    sigma * (norm_pdf(u) - u * norm_sf(u))
}
