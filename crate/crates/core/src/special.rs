//! Log-gamma, digamma, trigamma and the inverse digamma function.

use crate::scalar::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// B_{2k}/(2k) for k = 1..7, used by the digamma asymptotic series.
const DIGAMMA_ASYMP: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// B_{2k} for k = 1..7, used by the trigamma asymptotic series.
const TRIGAMMA_ASYMP: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

const ASYMP_THRESHOLD: f64 = 10.0;

/// Natural log of the gamma function for `x > 0` (Lanczos approximation,
/// reflection below 0.5).
pub fn ln_gamma<T: Real>(x: T) -> T {
    let xf = x.as_f64();
    T::lit(ln_gamma_f64(xf))
}

fn ln_gamma_f64(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 && x == x.floor() {
        return f64::INFINITY;
    }
    if x < 0.5 {
        // Γ(x)Γ(1−x) = π / sin(πx)
        let s = (std::f64::consts::PI * x).sin().abs();
        return std::f64::consts::PI.ln() - s.ln() - ln_gamma_f64(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Digamma ψ(x) = d/dx ln Γ(x) for `x > 0`.
pub fn digamma<T: Real>(x: T) -> T {
    T::lit(digamma_f64(x.as_f64()))
}

fn digamma_f64(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut result = 0.0;
    let mut xx = x;
    while xx < ASYMP_THRESHOLD {
        result -= 1.0 / xx;
        xx += 1.0;
    }
    result += xx.ln() - 0.5 / xx;
    let inv2 = 1.0 / (xx * xx);
    let mut term = inv2;
    for c in DIGAMMA_ASYMP {
        result -= c * term;
        term *= inv2;
    }
    result
}

/// Trigamma ψ'(x) for `x > 0`.
pub fn trigamma<T: Real>(x: T) -> T {
    T::lit(trigamma_f64(x.as_f64()))
}

fn trigamma_f64(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut result = 0.0;
    let mut xx = x;
    while xx < ASYMP_THRESHOLD {
        result += 1.0 / (xx * xx);
        xx += 1.0;
    }
    // ψ'(x) ~ 1/x + 1/(2x²) + Σ B_{2k} / x^{2k+1}
    let inv = 1.0 / xx;
    let inv2 = inv * inv;
    result += inv + 0.5 * inv2;
    let mut term = inv2 * inv;
    for b in TRIGAMMA_ASYMP {
        result += b * term;
        term *= inv2;
    }
    result
}

/// Inverse of the digamma function: the `x > 0` with `ψ(x) = y`.
///
/// Starts from the asymptotic initial guess (`exp(y) + 1/2` for `y ≥ −2.22`,
/// `−1/(y − ψ(1))` otherwise) and polishes with Newton steps on ψ.
pub fn inv_digamma<T: Real>(y: T) -> T {
    T::lit(inv_digamma_f64(y.as_f64()))
}

fn inv_digamma_f64(y: f64) -> f64 {
    const NEG_EULER: f64 = -0.577_215_664_901_532_9;
    let mut x = if y >= -2.22 {
        y.exp() + 0.5
    } else {
        -1.0 / (y - NEG_EULER)
    };
    for _ in 0..30 {
        let step = (digamma_f64(x) - y) / trigamma_f64(x);
        let mut next = x - step;
        if next <= 0.0 {
            next = x * 0.5;
        }
        let done = (next - x).abs() <= 1e-15 * x;
        x = next;
        if done {
            break;
        }
    }
    x
}
