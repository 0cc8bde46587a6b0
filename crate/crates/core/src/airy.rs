//! Airy functions `Ai`, `Bi` on the real line.
//!
//! Maclaurin series for `|x| ≤ 6` (for `Bi` on `0 ≤ x ≤ 15`, where the series
//! has no cancellation), asymptotic expansions beyond. `Ai` on `(2, 12]`
//! comes from its Macdonald-function integral, where the series would
//! lose digits to cancellation.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// `Ai(0) = 3^{−2/3}/Γ(2/3)`.
pub const AI0: f64 = 0.355_028_053_887_817_2;
/// `−Ai′(0) = 3^{−1/3}/Γ(1/3)`.
pub const AIP0: f64 = 0.258_819_403_792_806_8;

const SERIES_LIMIT: f64 = 6.0;
const BI_SERIES_LIMIT: f64 = 15.0;
const AI_INTEGRAL_LIMIT: f64 = 12.0;
const AI_SERIES_POSITIVE: f64 = 2.0;
pub const MAX_ARGUMENT: f64 = 50.0;

/// `(f, g)` with `Ai = c₁f − c₂g`, `Bi = √3(c₁f + c₂g)`.
fn maclaurin(x: f64) -> (f64, f64) {
    let x3 = x * x * x;
    let (mut f, mut g) = (1.0, x);
    let (mut tf, mut tg) = (1.0, x);
    for k in 0..400 {
        let k = k as f64;
        tf *= x3 / ((3.0 * k + 2.0) * (3.0 * k + 3.0));
        tg *= x3 / ((3.0 * k + 3.0) * (3.0 * k + 4.0));
        f += tf;
        g += tg;
        if tf.abs() <= 1e-17 * f.abs().max(1e-300) && tg.abs() <= 1e-17 * g.abs().max(1e-300) {
            break;
        }
    }
    (f, g)
}

fn u_coeffs(n: usize) -> Vec<f64> {
    let mut u = vec![1.0];
    for k in 1..n {
        let kf = k as f64;
        let next = u[k - 1] * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf);
        u.push(next);
    }
    u
}

/// `Σ s^k c_k/ζ^k` truncated at the smallest term.
fn asymptotic_sum(c: &[f64], zeta: f64, alternate: bool) -> f64 {
    let mut sum = 0.0;
    let mut last = f64::INFINITY;
    let mut p = 1.0;
    for (k, ck) in c.iter().enumerate() {
        let term = ck * p * if alternate && k % 2 == 1 { -1.0 } else { 1.0 };
        if term.abs() > last {
            break;
        }
        sum += term;
        last = term.abs();
        p /= zeta;
    }
    sum
}

fn ai_asymptotic_positive(x: f64) -> f64 {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let u = u_coeffs(60);
    (-zeta).exp() / (2.0 * std::f64::consts::PI.sqrt()) * x.powf(-0.25) * asymptotic_sum(&u, zeta, true)
}

fn bi_asymptotic_positive(x: f64) -> f64 {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let u = u_coeffs(60);
    zeta.exp() / std::f64::consts::PI.sqrt() * x.powf(-0.25) * asymptotic_sum(&u, zeta, false)
}

fn asymptotic_negative(z: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * z.powf(1.5);
    let u = u_coeffs(60);
    let even: Vec<f64> = u.iter().step_by(2).copied().collect();
    let odd: Vec<f64> = u.iter().skip(1).step_by(2).copied().collect();
    let z2 = zeta * zeta;
    let p = asymptotic_sum(&even, z2, true);
    let q = asymptotic_sum(&odd, z2, true) / zeta;
    let th = zeta - std::f64::consts::FRAC_PI_4;
    let pre = 1.0 / (std::f64::consts::PI.sqrt() * z.powf(0.25));
    (pre * (th.cos() * p + th.sin() * q), pre * (-th.sin() * p + th.cos() * q))
}

/// `Ai(x) = (1/π)√(x/3) ∫₀^∞ exp(−ζ cosh t) cosh(t/3) dt`, trapezoid rule
/// (exponentially convergent for this integrand).
fn ai_integral(x: f64) -> f64 {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let h = 0.02;
    let mut sum = 0.5;
    let mut k = 1;
    loop {
        let t = h * k as f64;
        let e = zeta * (t.cosh() - 1.0);
        if e > 60.0 {
            break;
        }
        sum += (-e).exp() * (t / 3.0).cosh();
        k += 1;
    }
    (x / 3.0).sqrt() / std::f64::consts::PI * h * sum * (-zeta).exp()
}

fn ai_f64(x: f64) -> f64 {
    if x < -SERIES_LIMIT {
        asymptotic_negative(-x).0
    } else if x <= AI_SERIES_POSITIVE {
        let (f, g) = maclaurin(x);
        AI0 * f - AIP0 * g
    } else if x <= AI_INTEGRAL_LIMIT {
        ai_integral(x)
    } else {
        ai_asymptotic_positive(x)
    }
}

fn bi_f64(x: f64) -> f64 {
    if x < -SERIES_LIMIT {
        asymptotic_negative(-x).1
    } else if x <= BI_SERIES_LIMIT {
        let (f, g) = maclaurin(x);
        3f64.sqrt() * (AI0 * f + AIP0 * g)
    } else {
        bi_asymptotic_positive(x)
    }
}

/// `(Ai(x), Bi(x))`; `AiryOverflow` for `x > 50` or non-finite input.
pub fn airy_ai_bi<R: Real>(x: R) -> Result<(R, R)> {
    let xf = x.as_f64();
    if !xf.is_finite() || xf > MAX_ARGUMENT {
        return Err(Error::AiryOverflow(xf));
    }
    Ok((lit(ai_f64(xf)), lit(bi_f64(xf))))
}

/// Leading terms `e^{−ζ}/(2√π x^{1/4})` and `e^{ζ}/(√π x^{1/4})`, `ζ = (2/3)x^{3/2}`.
pub fn airy_leading_positive(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let pre = 1.0 / (std::f64::consts::PI.sqrt() * x.powf(0.25));
    (0.5 * pre * (-zeta).exp(), pre * zeta.exp())
}

/// Leading oscillatory terms for `x < 0`: `sin(ζ + π/4)/(√π|x|^{1/4})`,
/// `cos(ζ + π/4)/(√π|x|^{1/4})`.
pub fn airy_leading_negative(x: f64) -> (f64, f64) {
    let z = -x;
    let zeta = 2.0 / 3.0 * z.powf(1.5);
    let pre = 1.0 / (std::f64::consts::PI.sqrt() * z.powf(0.25));
    let th = zeta + std::f64::consts::FRAC_PI_4;
    (pre * th.sin(), pre * th.cos())
}
