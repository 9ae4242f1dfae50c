//! Gamma and two-parameter Mittag-Leffler functions on the real line.
//!
//! `E_{α,β}(z)` is evaluated by one of four branches:
//!
//! * `z = 0` or small `|z|`: the defining power series with compensated
//!   summation,
//! * `α = β = 1`: the exponential,
//! * `z < -1`, `0 < α < 1`, `β = 1`: the completely-monotone Laplace
//!   representation `E_α(-t^α) = ∫_0^∞ e^{-rt} K_α(r) dr` integrated in
//!   `log r` with adaptive Gauss–Kronrod,
//! * `z ≤ -ASYMPTOTIC_THRESHOLD` (same parameter range): the algebraic
//!   asymptotic expansion, which has no exponentially small companion on
//!   the negative axis when `α < 1`.
//!
//! Anything else is rejected with [`Error::MlOutOfRange`].

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::integrate_adaptive;

/// Parameters `(α, β)` of `E_{α,β}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlParams {
    alpha: f64,
    beta: f64,
}

impl MlParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid("alpha", alpha, "Mittag-Leffler order must be > 0"));
        }
        if !beta.is_finite() {
            return Err(Error::invalid("beta", beta, "must be finite"));
        }
        Ok(Self { alpha, beta })
    }

    /// `E_{α,1}`, the relaxation function of the fractional diffusion modes.
    pub fn relaxation(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Which evaluation strategy produced (or should produce) a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlBranch {
    Series,
    Exponential,
    LaplaceIntegral,
    Asymptotic,
}

/// Negative arguments with `|z|` at most this use the power series.
pub const SERIES_NEGATIVE_LIMIT: f64 = 1.0;
/// Negative arguments with `|z|` at least this use the asymptotic expansion.
pub const ASYMPTOTIC_THRESHOLD: f64 = 1.0e3;
/// Number of terms kept in the asymptotic expansion.
pub const ASYMPTOTIC_TERMS: usize = 8;
/// Positive arguments are certified while `z^{1/α}` stays below this.
const SERIES_POSITIVE_EXPONENT_LIMIT: f64 = 600.0;

/// `Γ(x)`; poles at non-positive integers are reported as errors.
pub fn gamma_eval(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid("x", x, "Gamma argument must be finite"));
    }
    if x <= 0.0 && x == x.floor() {
        return Err(Error::GammaPole(x));
    }
    Ok(exact_factorial(x).unwrap_or_else(|| statrs::function::gamma::gamma(x)))
}

/// `Γ(x) = (x-1)!` exactly for small positive integers.
fn exact_factorial(x: f64) -> Option<f64> {
    if x >= 1.0 && x <= 23.0 && x == x.floor() {
        Some((1..x as u64).map(|k| k as f64).product())
    } else {
        None
    }
}

/// `1/Γ(x)`, entire: zero at the poles of `Γ`.
pub fn reciprocal_gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x > 170.0 {
        return (-statrs::function::gamma::ln_gamma(x)).exp();
    }
    1.0 / exact_factorial(x).unwrap_or_else(|| statrs::function::gamma::gamma(x))
}

/// The branch `ml_eval` selects for `(params, z)`, or an out-of-range error.
pub fn ml_branch(params: MlParams, z: f64) -> Result<MlBranch> {
    let MlParams { alpha, beta } = params;
    let out_of_range = |range: &str| Error::MlOutOfRange {
        alpha,
        beta,
        z,
        range: range.to_string(),
    };
    if !z.is_finite() {
        return Err(out_of_range("finite z only"));
    }
    if alpha == 1.0 && beta == 1.0 {
        return Ok(MlBranch::Exponential);
    }
    if z >= 0.0 {
        if z == 0.0 || z.powf(1.0 / alpha) <= SERIES_POSITIVE_EXPONENT_LIMIT {
            return Ok(MlBranch::Series);
        }
        return Err(out_of_range(&format!(
            "0 <= z with z^(1/alpha) <= {SERIES_POSITIVE_EXPONENT_LIMIT}"
        )));
    }
    if -z <= SERIES_NEGATIVE_LIMIT {
        return Ok(MlBranch::Series);
    }
    if alpha < 1.0 && beta == 1.0 {
        if -z >= ASYMPTOTIC_THRESHOLD {
            return Ok(MlBranch::Asymptotic);
        }
        return Ok(MlBranch::LaplaceIntegral);
    }
    Err(out_of_range(&format!(
        "z >= -{SERIES_NEGATIVE_LIMIT} for these parameters; all z <= 0 when 0 < alpha < 1 and beta = 1"
    )))
}

/// `E_{α,β}(z)` for real `z`.
pub fn ml_eval(params: MlParams, z: f64) -> Result<f64> {
    let branch = ml_branch(params, z)?;
    ml_eval_with(params, z, branch)
}

/// Evaluate with an explicitly chosen branch. Used to cross-check branches
/// on overlapping bands; callers outside the switchover tests should use
/// [`ml_eval`].
pub fn ml_eval_with(params: MlParams, z: f64, branch: MlBranch) -> Result<f64> {
    let MlParams { alpha, beta } = params;
    let unsupported = |what: &str| Error::MlOutOfRange {
        alpha,
        beta,
        z,
        range: what.to_string(),
    };
    match branch {
        MlBranch::Exponential => {
            if alpha == 1.0 && beta == 1.0 {
                Ok(z.exp())
            } else {
                Err(unsupported("exponential branch needs alpha = beta = 1"))
            }
        }
        MlBranch::Series => series(alpha, beta, z),
        MlBranch::LaplaceIntegral => {
            if !(alpha < 1.0 && beta == 1.0 && z < 0.0) {
                return Err(unsupported("Laplace branch needs 0 < alpha < 1, beta = 1, z < 0"));
            }
            laplace_integral(alpha, -z)
        }
        MlBranch::Asymptotic => {
            if !(alpha < 1.0 && beta == 1.0 && z < 0.0) {
                return Err(unsupported("asymptotic branch needs 0 < alpha < 1, beta = 1, z < 0"));
            }
            Ok(asymptotic(alpha, -z))
        }
    }
}

fn series(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    const MAX_TERMS: usize = 200_000;
    if z == 0.0 {
        return Ok(reciprocal_gamma(beta));
    }
    let ln_abs_z = z.abs().ln();
    let negative = z < 0.0;
    // Neumaier compensated sum.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut small_run = 0;
    let peak = (z.abs().powf(1.0 / alpha) / alpha).ceil() as usize;
    for k in 0..MAX_TERMS {
        let arg = alpha * k as f64 + beta;
        let term = if arg <= 0.0 && arg == arg.floor() {
            0.0
        } else if arg > 170.0 {
            let sign = if negative && k % 2 == 1 { -1.0 } else { 1.0 };
            sign * (k as f64 * ln_abs_z - statrs::function::gamma::ln_gamma(arg)).exp()
        } else {
            let sign = if negative && k % 2 == 1 { -1.0 } else { 1.0 };
            sign * (k as f64 * ln_abs_z).exp() * reciprocal_gamma(arg)
        };
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        if k > peak && term.abs() <= 1e-18 * (sum + comp).abs().max(f64::MIN_POSITIVE) {
            small_run += 1;
            if small_run >= 3 {
                return Ok(sum + comp);
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::Quadrature(format!(
        "Mittag-Leffler series did not converge in {MAX_TERMS} terms at z = {z}"
    )))
}

/// `E_α(-x)` from the Laplace representation, integrated in `u = ln ρ`
/// where `ρ = r t` and `t = x^{1/α}`:
///
/// `E_α(-x) = (sin απ / π) ∫ e^{-ρ} w / (w² + 2 w cos απ + 1) du`, `w = (ρ/t)^α`.
fn laplace_integral(alpha: f64, x: f64) -> Result<f64> {
    let ln_t = x.ln() / alpha;
    let sin_ap = (alpha * PI).sin();
    let cos_ap = (alpha * PI).cos();
    let pref = sin_ap / PI;
    let integrand = |u: f64| {
        let rho = u.exp();
        let w = (alpha * (u - ln_t)).exp();
        pref * (-rho).exp() * w / (w * w + 2.0 * w * cos_ap + 1.0)
    };
    let u_hi = 60f64.ln();
    let u_lo = ln_t.min(0.0) - 40.0 / alpha;
    // Below u_lo the integrand is pref * w to leading order.
    let w_lo = (alpha * (u_lo - ln_t)).exp();
    let tail = pref * w_lo / alpha;
    // Break at the peak of the rational factor (w ≈ 1) to help the bisection.
    let u_peak = ln_t.clamp(u_lo + 1.0, u_hi - 1.0);
    let left = integrate_adaptive(integrand, u_lo, u_peak, 1e-300, 1e-14)?;
    let right = integrate_adaptive(integrand, u_peak, u_hi, 1e-300, 1e-14)?;
    Ok(left + right + tail)
}

fn asymptotic(alpha: f64, x: f64) -> f64 {
    let mut sum = 0.0;
    let mut xpow = 1.0;
    for k in 1..=ASYMPTOTIC_TERMS {
        xpow /= x;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * xpow * reciprocal_gamma(1.0 - alpha * k as f64);
    }
    sum
}

/// L1 discretization of the Caputo derivative of `v` sampled at
/// `t_j = j * dt`, evaluated at the last sample.
pub(crate) fn l1_caputo_at_end(samples: &[f64], dt: f64, alpha: f64) -> f64 {
    let n = samples.len() - 1;
    let scale = dt.powf(-alpha) / statrs::function::gamma::gamma(2.0 - alpha);
    let mut acc = 0.0;
    for j in 0..n {
        let b = ((j + 1) as f64).powf(1.0 - alpha) - (j as f64).powf(1.0 - alpha);
        acc += b * (samples[n - j] - samples[n - j - 1]);
    }
    scale * acc
}

/// Self-test of `∂_t^α E_{α,1}(-λ t^α) = -λ E_{α,1}(-λ t^α)`.
///
/// Samples `E_{α,1}(-λ τ^α)` on `n_steps + 1` uniform points of `[0, t]` and
/// returns `|D + λ E(-λ t^α)|` with `D` the L1 Caputo quadrature. For `α = 1`
/// the ordinary derivative is taken by a centered difference instead.
pub fn ml_caputo_identity_residual(
    params: MlParams,
    lambda: f64,
    t: f64,
    n_steps: usize,
) -> Result<f64> {
    let alpha = params.alpha();
    if params.beta() != 1.0 {
        return Err(Error::invalid("beta", params.beta(), "identity holds for beta = 1"));
    }
    if !(alpha <= 1.0) {
        return Err(Error::invalid("alpha", alpha, "Caputo order must lie in (0, 1]"));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", lambda, "must be > 0"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("t", t, "must be > 0"));
    }
    if n_steps < 2 {
        return Err(Error::invalid("n_steps", n_steps, "need at least 2 steps"));
    }
    let dt = t / n_steps as f64;
    let relax = |tau: f64| ml_eval(params, -lambda * tau.powf(alpha));
    let end = relax(t)?;
    let derivative = if alpha == 1.0 {
        (relax(t + dt)? - relax(t - dt)?) / (2.0 * dt)
    } else {
        let samples = (0..=n_steps)
            .map(|j| relax(j as f64 * dt))
            .collect::<Result<Vec<_>>>()?;
        l1_caputo_at_end(&samples, dt, alpha)
    };
    Ok((derivative + lambda * end).abs())
}
