//! Log-domain modified Bessel functions of the first kind, `ln I_ν(x)`.
//!
//! Three regimes, all evaluated without forming `I_ν` itself:
//!
//! * `x < max(50, ν)`: the ascending power series, summed with a running
//!   log-scale so no term overflows.
//! * `ν < 2` and large `x`: Hankel's large-argument expansion. For the
//!   half-integer orders in this range it terminates and is exact up to the
//!   `e^{-2x}` reflection term.
//! * otherwise: Debye's uniform asymptotic expansion through `u_5`.

use std::f64::consts::PI;

/// Below this argument (or below `ν`, whichever is larger) the power series is used.
pub const SERIES_CUTOFF: f64 = 50.0;

const HANKEL_MAX_ORDER: f64 = 2.0;

pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln Σ_k (x²/4)^k / (k! (ν+1)_k)`, the series factor of
/// `I_ν(x) = (x/2)^ν / Γ(ν+1) · S`.
pub fn ln_series_factor(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let q = 0.25 * x * x;
    let ln_q = q.ln();
    // total = exp(m) * s
    let mut m = 0.0_f64;
    let mut s = 1.0_f64;
    let mut ln_term = 0.0_f64;
    let mut k = 0.0_f64;
    loop {
        k += 1.0;
        ln_term += ln_q - (k * (k + nu)).ln();
        if ln_term > m {
            s = s * (m - ln_term).exp() + 1.0;
            m = ln_term;
        } else {
            s += (ln_term - m).exp();
        }
        // past the peak and negligible
        if q < k * (k + nu) && ln_term < m - 40.0 {
            break;
        }
    }
    m + s.ln()
}

/// `ln I_ν(x)` for `ν ≥ 0`, `x ≥ 0`. Returns `-∞` for `x = 0, ν > 0`.
pub fn ln_bessel_i(nu: f64, x: f64) -> f64 {
    debug_assert!(nu >= 0.0 && x >= 0.0);
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x < SERIES_CUTOFF.max(nu) {
        nu * (0.5 * x).ln() - ln_gamma(nu + 1.0) + ln_series_factor(nu, x)
    } else if nu < HANKEL_MAX_ORDER {
        ln_bessel_hankel(nu, x)
    } else {
        ln_bessel_debye(nu, x)
    }
}

fn ln_bessel_hankel(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut k = 1.0_f64;
    loop {
        let next = -term * (mu - (2.0 * k - 1.0).powi(2)) / (8.0 * k * x);
        // terminated, or the asymptotic series stopped shrinking
        if next == 0.0 || next.abs() >= term.abs() {
            break;
        }
        sum += next;
        if next.abs() < 1e-17 * sum.abs() {
            break;
        }
        term = next;
        k += 1.0;
    }
    x - 0.5 * (2.0 * PI * x).ln() + sum.ln()
}

fn ln_bessel_debye(nu: f64, x: f64) -> f64 {
    let z = x / nu;
    let r = (1.0 + z * z).sqrt();
    let p = 1.0 / r;
    let eta = r + (z / (1.0 + r)).ln();
    let p2 = p * p;
    let u1 = p * (3.0 - 5.0 * p2) / 24.0;
    let u2 = p2 * (81.0 + p2 * (-462.0 + p2 * 385.0)) / 1152.0;
    let u3 = p * p2 * (30375.0 + p2 * (-369603.0 + p2 * (765765.0 - p2 * 425425.0))) / 414720.0;
    let u4 = p2
        * p2
        * (4465125.0
            + p2 * (-94121676.0 + p2 * (349922430.0 + p2 * (-446185740.0 + p2 * 185910725.0))))
        / 39813120.0;
    let u5 = p
        * p2
        * p2
        * (1519035525.0
            + p2 * (-49286948607.0
                + p2 * (284499769554.0
                    + p2 * (-614135872350.0 + p2 * (566098157625.0 - p2 * 188699385875.0)))))
        / 6688604160.0;
    let inv = 1.0 / nu;
    let corr = 1.0 + inv * (u1 + inv * (u2 + inv * (u3 + inv * (u4 + inv * u5))));
    -0.5 * (2.0 * PI * nu).ln() + nu * eta - 0.5 * r.ln() + corr.ln()
}

/// `I_{ν+1}(x) / I_ν(x)`, in `(0, 1)` for `x > 0`.
pub fn bessel_ratio(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x < SERIES_CUTOFF.max(nu + 1.0) {
        // the (x/2)^ν / Γ(ν+1) prefactors cancel down to x / (2(ν+1))
        x / (2.0 * (nu + 1.0)) * (ln_series_factor(nu + 1.0, x) - ln_series_factor(nu, x)).exp()
    } else {
        (ln_bessel_i(nu + 1.0, x) - ln_bessel_i(nu, x)).exp()
    }
}
