//! Comparison of a B-type connection against the exact recursion.
//!
//! The recursion is integrated from the boundary on the imaginary-q side
//! toward the turning point, so it converges onto the solution that decays
//! away from `m_c`. Its left amplitude and right `(B, Δ)` are fitted over
//! `J^lo ≤ |m − m_c| ≤ J^hi` with both DPI forms carrying their `e^{iΦ₂}`
//! correction; the uncorrected fit is reported alongside.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use dpi_core::connect::{connect_b, connect_b_bar, BConnection, ConnectConfig};
use dpi_core::dpi::{Branch, Selector};
use dpi_core::oracle::{integrate_recursion, Direction, Seed};
use dpi_core::smooth::Bands;
use dpi_core::{Continuum, Error, Operator, Result, TurningPoint};

#[derive(Debug, Clone, Copy)]
pub struct MatchWindow {
    pub lo_exponent: f64,
    pub hi_exponent: f64,
    /// `Φ₂` integrals start `J^anchor` sites from `m_c`.
    pub anchor_exponent: f64,
}

impl Default for MatchWindow {
    fn default() -> Self {
        Self {
            lo_exponent: 0.5,
            hi_exponent: 0.6,
            anchor_exponent: 0.75,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleMatch {
    pub sigma1: i8,
    pub sigma2: i8,
    /// `+1` when the imaginary-q side lies at `m > m_c`.
    pub imaginary_side: i8,
    pub window: [f64; 2],
    pub left_sites: usize,
    pub right_sites: usize,
    pub b_over_a_predicted: f64,
    pub b_over_a_fitted: f64,
    pub delta_predicted: f64,
    pub delta_fitted: f64,
    pub amplitude_error: f64,
    pub phase_error: f64,
    pub leading_order_amplitude_error: f64,
    pub leading_order_phase_error: f64,
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

fn connection<'a>(cc: &'a Continuum, e: f64, tp: &TurningPoint, s1: i8, s2: i8, cfg: &ConnectConfig<f64>) -> Result<BConnection<'a, f64>> {
    if cc.local(tp.m_c)?.t2() > 0.0 {
        connect_b(cc, e, tp, s1, s2, 1.0, cfg)
    } else {
        connect_b_bar(cc, e, tp, s1, s2, 1.0, cfg)
    }
}

/// Weighted least squares `y ≈ p·Re u + q·Im u`.
fn fit_quadratures(u: &[Complex64], y: &[f64]) -> (f64, f64) {
    let (mut sxx, mut sxy, mut syy, mut rx, mut ry) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, &y) in u.iter().zip(y) {
        let w = 1.0 / x.norm_sqr();
        sxx += w * x.re * x.re;
        sxy += w * x.re * x.im;
        syy += w * x.im * x.im;
        rx += w * x.re * y;
        ry += w * x.im * y;
    }
    let det = sxx * syy - sxy * sxy;
    ((rx * syy - ry * sxy) / det, (ry * sxx - rx * sxy) / det)
}

fn step_mismatch(q: Complex64, ratio: Complex64) -> f64 {
    ((Complex64::i() * q).exp() - ratio).norm() / ratio.norm()
}

pub fn oracle_match(op: &Operator, cc: &Continuum, e: f64, tp: &TurningPoint, cfg: &ConnectConfig<f64>, win: &MatchWindow) -> Result<OracleMatch> {
    let j = cc.large_parameter();
    let mc = tp.m_c;

    // Side and decaying pair: the fastest decay away from m_c wins.
    let probe = connection(cc, e, tp, 1, 1, cfg)?;
    let side: f64 = if probe.left_form(mc + 2.0).is_ok() { 1.0 } else { -1.0 };
    let mut best: Option<(f64, i8, i8)> = None;
    for s1 in [1i8, -1] {
        for s2 in [1i8, -1] {
            let Ok(c) = connection(cc, e, tp, s1, s2, cfg) else { continue };
            let (Ok(near), Ok(far)) = (c.left_form(mc + 2.0 * side), c.left_form(mc + 8.0 * side)) else { continue };
            let rate = near.norm().ln() - far.norm().ln();
            if rate.is_finite() && best.is_none_or(|b| rate > b.0) {
                best = Some((rate, s1, s2));
            }
        }
    }
    let Some((_, s1, s2)) = best.filter(|b| b.0 > 0.0) else {
        return Err(Error::IllConditioned("no connection decays away from the turning point".into()));
    };
    let mut conn = connection(cc, e, tp, s1, s2, cfg)?;
    let predicted_delta = conn.result.delta_canonical;
    let ratio = conn.result.b / conn.result.a;

    let seed_dir = if side > 0.0 {
        (Seed::upper_boundary(op, 0.0, 1.0), Direction::Backward)
    } else {
        (Seed::lower_boundary(op, 1.0, 0.0), Direction::Forward)
    };
    let sol = integrate_recursion(op, e, seed_dir.0, seed_dir.1)?;
    let index = |m: f64| sol.m.iter().position(|&x| (x - m).abs() < 0.25);
    let anchor = index(mc.round()).ok_or_else(|| Error::InvalidArgument(format!("no site near m_c = {mc}")))?;
    let c = sol.relative_to(anchor);

    let (d_lo, d_hi) = (j.powf(win.lo_exponent), j.powf(win.hi_exponent));
    let (dom_lo, dom_hi) = cc.domain();
    let far = j.powf(win.anchor_exponent).min(dom_hi - mc - 0.5).min(mc - dom_lo - 0.5);
    let sites: Vec<f64> = (0..op.len()).map(|i| op.m(i)).collect();
    let pick = |s: f64| -> Vec<f64> {
        sites
            .iter()
            .copied()
            .filter(|&m| {
                let d = s * (m - mc);
                d >= d_lo && d <= d_hi.min(far - 1.0) && index(m).is_some()
            })
            .collect()
    };
    let (left, right) = (pick(side), pick(-side));
    if left.len() < 4 || right.len() < 4 {
        return Err(Error::IllConditioned(format!(
            "matching window [{d_lo:.3}, {d_hi:.3}] holds {} / {} sites",
            left.len(),
            right.len()
        )));
    }
    let at = |m: f64| c[index(m).expect("window sites are on the recursion grid")];
    let span = |s: f64| {
        let (a, b) = (mc + s * 0.5 * d_lo, mc + s * far);
        (a.min(b), a.max(b), b)
    };

    // Right side: u = s_a^{−1/2}e^{i∫q} up to the gauge, from the two
    // quadratures of the real right form.
    let b = conn.result.b;
    let mut u = Vec::with_capacity(right.len());
    for &m in &right {
        conn.result.delta_canonical = 0.0;
        let re = conn.right_form(m)?.re / b;
        conn.result.delta_canonical = -PI / 2.0;
        let im = conn.right_form(m)?.re / b;
        u.push(Complex64::new(re, im));
    }
    conn.result.delta_canonical = predicted_delta;

    // Identify the eikonal branches the two forms follow.
    let (llo, lhi, lanchor) = span(side);
    let mid_l = left[left.len() / 2];
    let lratio = conn.left_form(mid_l + 1.0)? / conn.left_form(mid_l)?;
    let mut left_branch: Option<(f64, Branch<f64, &Continuum>)> = None;
    for sigma1 in [1i8, -1] {
        for sign in [1i8, -1] {
            let Ok(br) = Branch::new(cc, e, Selector::Cos { sigma1, sign, center: 0.0 }, llo, lhi, lanchor, false) else { continue };
            let Ok(q) = br.q(mid_l) else { continue };
            let mis = step_mismatch(q, lratio);
            if left_branch.as_ref().is_none_or(|b| mis < b.0) {
                left_branch = Some((mis, br));
            }
        }
    }
    let (rlo, rhi, ranchor) = span(-side);
    let k0 = right.len() / 2;
    let (m0, m1) = (right[k0], right[k0] + 1.0);
    let k1 = right.iter().position(|&m| m == m1);
    let rratio = match k1 {
        Some(k1) => u[k1] / u[k0],
        None => u[k0] / u[k0 - 1],
    };
    let mut right_branch: Option<(f64, bool, Branch<f64, &Continuum>)> = None;
    for sigma2 in [1i8, -1] {
        for conj in [false, true] {
            let Ok(br) = Branch::new(cc, e, Selector::Complex { sigma2, conj }, rlo, rhi, ranchor, false) else { continue };
            let Ok(q) = br.q(m0) else { continue };
            let direct = step_mismatch(q, rratio);
            let conjugate = step_mismatch(q, rratio.conj());
            let (mis, u_conj) = if conjugate < direct { (conjugate, true) } else { (direct, false) };
            if right_branch.as_ref().is_none_or(|b| mis < b.0) {
                right_branch = Some((mis, u_conj, br));
            }
        }
    }
    let (Some((_, lb)), Some((_, u_conj, rb))) = (left_branch, right_branch) else {
        return Err(Error::IllConditioned("no eikonal branch matches the connection forms".into()));
    };

    let i = Complex64::i();
    let fit = |corrected: bool| -> Result<(f64, f64)> {
        let (mut num, mut den) = (0.0, 0.0);
        for &m in &left {
            let mut f = conn.left_form(m)?;
            if corrected {
                f *= (i * lb.phi2_estimate(m)?.total).exp();
            }
            let w = 1.0 / f.norm_sqr();
            num += w * f.re * at(m);
            den += w * f.re * f.re;
        }
        let a_fit = num / den;
        let mut uc = Vec::with_capacity(u.len());
        for (&m, &x) in right.iter().zip(&u) {
            if corrected {
                let p = rb.phi2_estimate(m)?.total;
                // ū following the branch means u carries the conjugate factor.
                let factor = if u_conj { (-i * p.conj()).exp() } else { (i * p).exp() };
                uc.push(x * factor);
            } else {
                uc.push(x);
            }
        }
        let y: Vec<f64> = right.iter().map(|&m| at(m) / a_fit).collect();
        let (p, q) = fit_quadratures(&uc, &y);
        Ok((p.hypot(q), (-q).atan2(p)))
    };
    let (b_fit, delta_fit) = fit(true)?;
    let (b_lead, delta_lead) = fit(false)?;
    Ok(OracleMatch {
        sigma1: s1,
        sigma2: s2,
        imaginary_side: side as i8,
        window: [d_lo, d_hi],
        left_sites: left.len(),
        right_sites: right.len(),
        b_over_a_predicted: ratio,
        b_over_a_fitted: b_fit,
        delta_predicted: predicted_delta,
        delta_fitted: delta_fit,
        amplitude_error: (b_fit / ratio - 1.0).abs(),
        phase_error: wrap(delta_fit - predicted_delta).abs(),
        leading_order_amplitude_error: (b_lead / ratio - 1.0).abs(),
        leading_order_phase_error: wrap(delta_lead - predicted_delta).abs(),
    })
}
