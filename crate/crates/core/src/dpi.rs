//! DPI branch wavefunctions `v^{−1/2} exp(i∫q dm)` with the second-order
//! phase `Φ₂` used as a validity monitor.

use std::io::Write;

use num_complex::Complex;
use serde::Serialize;

use crate::eikonal::{cosq_local, kappa_chi_local, HDerivs};
use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, sqrt_endpoint, QuadConfig};
use crate::scalar::{cplx, lit, real, Real, C};
use crate::smooth::{Bands, LocalBands};

/// Rule that picks one root `q(m)` of the eikonal equation at every `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Selector<R> {
    /// `cos q` from the `σ₁` branch; of `±acos`, the root whose imaginary
    /// part has sign `sign` (real part when `q` is real), shifted by 2π
    /// so that `Re q` lies within π of `center`.
    Cos { sigma1: i8, sign: i8, center: R },
    /// `q_a = [π] + iσ₂κ + χ` of the complex region, or `q_b = q_a*`.
    Complex { sigma2: i8, conj: bool },
}

impl<R: Real> Selector<R> {
    pub fn select(&self, l: &LocalBands<R>, e: R, m: R) -> Result<C<R>> {
        match *self {
            Selector::Cos { sigma1, sign, center } => {
                let c = cosq_local(l, e, m)?.get(sigma1);
                let q0 = c.acos();
                let tol: R = lit(1e-12);
                let want = if sign < 0 { -R::one() } else { R::one() };
                let key = |q: C<R>| if q.im.abs() > tol { q.im } else { q.re };
                let mut q = if key(q0) * want >= R::zero() { q0 } else { -q0 };
                let two_pi = R::PI() + R::PI();
                while q.re - center > R::PI() {
                    q.re -= two_pi;
                }
                while q.re - center <= -R::PI() {
                    q.re += two_pi;
                }
                Ok(q)
            }
            Selector::Complex { sigma2, conj } => {
                let k = kappa_chi_local(l, e, m, sigma2)?;
                Ok(if conj { k.q_b } else { k.q_a })
            }
        }
    }
}

/// Local wavevector data with analytic `m`-derivatives along a branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint<R> {
    pub q: C<R>,
    pub v: C<R>,
    pub q_dot: C<R>,
    pub q_ddot: C<R>,
    pub v_dot: C<R>,
    pub v_ddot: C<R>,
    /// `r = (t₁cos q + 4t₂cos 2q)/(t₁sin q + 2t₂sin 2q) = H_qq/v`.
    pub r: C<R>,
    pub r_dot: C<R>,
    /// `d²ln v/dm²`.
    pub lnv_ddot: C<R>,
    /// `(t₁ + 16t₂cos q)/(t₁ + 4t₂cos q)`.
    pub ratio: C<R>,
}

impl<R: Real> BranchPoint<R> {
    /// Implicit differentiation of `H(q(m), m) = E`.
    pub fn at(l: &LocalBands<R>, q: C<R>) -> Self {
        let d = HDerivs::at(l, q);
        let two: R = lit(2.0);
        let v = d.q;
        let q_dot = -d.m / v;
        let q_ddot = -(d.mm + d.qm * q_dot * two + d.qq * q_dot * q_dot) / v;
        let v_dot = d.qq * q_dot + d.qm;
        let v_ddot = d.qqq * q_dot * q_dot + d.qqm * q_dot * two + d.qq * q_ddot + d.qmm;
        let r = d.qq / v;
        let r_dot = ((d.qqq * q_dot + d.qqm) * v - d.qq * v_dot) / (v * v);
        let lnv_ddot = v_ddot / v - (v_dot / v) * (v_dot / v);
        let cq = q.cos();
        let four: R = lit(4.0);
        let sixteen: R = lit(16.0);
        let ratio = (real(l.t1()) + cq * (sixteen * l.t2())) / (real(l.t1()) + cq * (four * l.t2()));
        Self {
            q,
            v,
            q_dot,
            q_ddot,
            v_dot,
            v_ddot,
            r,
            r_dot,
            lnv_ddot,
            ratio,
        }
    }
}

/// The three terms of `Φ₂ = −(1/24)∫ρ q̈ dm + ṙ/8 − (1/8)∫ r (ln v)″ dm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Phi2<R> {
    pub total: Complex<R>,
    pub transport: Complex<R>,
    pub local: Complex<R>,
    pub curvature: Complex<R>,
}

/// Thresholds of the validity mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaskConfig<R> {
    pub phi2_max: R,
    pub qdot_over_v2_max: R,
}

impl<R: Real> Default for MaskConfig<R> {
    fn default() -> Self {
        Self {
            phi2_max: lit(0.1),
            qdot_over_v2_max: lit(0.1),
        }
    }
}

/// One DPI branch on an interval free of turning points (except possibly
/// the anchor at one end).
#[derive(Clone)]
pub struct Branch<R, B> {
    pub bands: B,
    pub energy: R,
    pub selector: Selector<R>,
    pub lo: R,
    pub hi: R,
    /// Phase reference `m₀`.
    pub anchor: R,
    /// The anchor is a turning point: `q − q_c ∝ √|m − m_c|` there.
    pub singular_anchor: bool,
    /// Reference point of the `Φ₂` integrals; must be a regular point.
    pub phi2_anchor: R,
    pub quad: QuadConfig<R>,
    sqrt_phase: C<R>,
}

impl<R: Real, B: Bands<R>> Branch<R, B> {
    /// Branch on `[lo, hi]` with phase anchor `anchor` (an endpoint or an
    /// interior regular point).
    pub fn new(bands: B, energy: R, selector: Selector<R>, lo: R, hi: R, anchor: R, singular_anchor: bool) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidArgument(format!("empty branch interval [{lo}, {hi}]")));
        }
        bands.check_range(lo)?;
        bands.check_range(hi)?;
        if anchor < lo - lit(1e-9) || anchor > hi + lit(1e-9) {
            return Err(Error::OutOfRange {
                m: anchor.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        let phi2_anchor = if singular_anchor {
            if (anchor - lo).abs() < (hi - anchor).abs() {
                hi
            } else {
                lo
            }
        } else {
            anchor
        };
        let mut b = Self {
            bands,
            energy,
            selector,
            lo,
            hi,
            anchor,
            singular_anchor,
            phi2_anchor,
            quad: QuadConfig::default(),
            sqrt_phase: real(R::one()),
        };
        // Fix the branch of v^{-1/2} from the regular end of the interval.
        let v_ref = b.v(phi2_anchor)?;
        if v_ref.norm() > R::zero() {
            b.sqrt_phase = (v_ref / v_ref.norm()).conj();
        }
        Ok(b)
    }

    pub fn with_phi2_anchor(mut self, m: R) -> Self {
        self.phi2_anchor = m;
        self
    }

    fn check(&self, m: R) -> Result<()> {
        let slack: R = lit(1e-9);
        if m < self.lo - slack || m > self.hi + slack {
            return Err(Error::OutOfRange {
                m: m.as_f64(),
                lo: self.lo.as_f64(),
                hi: self.hi.as_f64(),
            });
        }
        Ok(())
    }

    pub fn local(&self, m: R) -> Result<LocalBands<R>> {
        self.bands.local(m)
    }

    pub fn q(&self, m: R) -> Result<C<R>> {
        self.check(m)?;
        self.selector.select(&self.bands.local(m)?, self.energy, m)
    }

    pub fn v(&self, m: R) -> Result<C<R>> {
        let l = self.bands.local(m)?;
        let q = self.selector.select(&l, self.energy, m)?;
        Ok(crate::eikonal::velocity_local(&l, q))
    }

    pub fn point(&self, m: R) -> Result<BranchPoint<R>> {
        self.check(m)?;
        let l = self.bands.local(m)?;
        let q = self.selector.select(&l, self.energy, m)?;
        Ok(BranchPoint::at(&l, q))
    }

    fn q_integral(&self, a: R, b: R, singular_at_a: bool) -> Result<C<R>> {
        let f = |x: R| self.q(x);
        if singular_at_a {
            sqrt_endpoint(f, a, b, &self.quad)
        } else {
            adaptive_simpson(f, a, b, &self.quad)
        }
    }

    /// `Φ₀(m) = ∫_{m₀}^{m} q dm′`.
    pub fn phase_integral(&self, m: R) -> Result<C<R>> {
        self.check(m)?;
        self.q_integral(self.anchor, m, self.singular_anchor)
    }

    /// `Φ₀` on a grid, accumulated outward from the anchor.
    pub fn phase_grid(&self, grid: &[R]) -> Result<Vec<C<R>>> {
        let mut out = vec![C::new(R::zero(), R::zero()); grid.len()];
        for side in [-1i8, 1] {
            let mut idx: Vec<usize> = (0..grid.len())
                .filter(|&i| if side < 0 { grid[i] < self.anchor } else { grid[i] >= self.anchor })
                .collect();
            idx.sort_by(|&a, &b| {
                (grid[a] - self.anchor)
                    .abs()
                    .partial_cmp(&(grid[b] - self.anchor).abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut prev = self.anchor;
            let mut acc = C::new(R::zero(), R::zero());
            for i in idx {
                self.check(grid[i])?;
                acc += self.q_integral(prev, grid[i], self.singular_anchor && prev == self.anchor)?;
                out[i] = acc;
                prev = grid[i];
            }
        }
        Ok(out)
    }

    /// `e^{iΦ₁} = v^{−1/2}`, continuous along the branch.
    pub fn amplitude(&self, m: R) -> Result<C<R>> {
        let v = self.v(m)?;
        let l = self.bands.local(m)?;
        let scale = l.t1().abs() + l.t2().abs();
        if v.norm() <= lit::<R>(1e-14) * scale {
            return Err(Error::ZeroVelocity { m: m.as_f64() });
        }
        let rotated = (v * self.sqrt_phase).sqrt();
        let back = self.sqrt_phase.conj().sqrt();
        Ok((rotated * back).inv())
    }

    /// `Φ₁ = (i/2) ln v` on the same branch as [`Branch::amplitude`].
    pub fn phi1(&self, m: R) -> Result<C<R>> {
        let a = self.amplitude(m)?;
        Ok(cplx(R::zero(), R::one()) * a.inv().ln())
    }

    fn phi2_integrands(&self, x: R) -> Result<(C<R>, C<R>)> {
        let p = self.point(x)?;
        Ok((p.ratio * p.q_ddot, p.r * p.lnv_ddot))
    }

    /// `Φ₂(m)` with both integrals anchored at the regular point `phi2_anchor`.
    pub fn phi2_estimate(&self, m: R) -> Result<Phi2<R>> {
        self.check(m)?;
        let p = self.point(m)?;
        let a = self.phi2_anchor;
        let i1: C<R> = adaptive_simpson(|x| Ok(self.phi2_integrands(x)?.0), a, m, &self.quad)?;
        let i2: C<R> = adaptive_simpson(|x| Ok(self.phi2_integrands(x)?.1), a, m, &self.quad)?;
        let transport = i1 * lit::<R>(-1.0 / 24.0);
        let local = p.r_dot * lit::<R>(0.125);
        let curvature = i2 * lit::<R>(-0.125);
        Ok(Phi2 {
            total: transport + local + curvature,
            transport,
            local,
            curvature,
        })
    }

    /// `Φ₂` on a grid, with the integrals accumulated from `phi2_anchor`.
    pub fn phi2_grid(&self, grid: &[R]) -> Result<Vec<Phi2<R>>> {
        let zero = C::new(R::zero(), R::zero());
        let mut acc1 = vec![zero; grid.len()];
        let mut acc2 = vec![zero; grid.len()];
        let a = self.phi2_anchor;
        for side in [-1i8, 1] {
            let mut idx: Vec<usize> = (0..grid.len())
                .filter(|&i| if side < 0 { grid[i] < a } else { grid[i] >= a })
                .collect();
            idx.sort_by(|&x, &y| (grid[x] - a).abs().partial_cmp(&(grid[y] - a).abs()).unwrap_or(std::cmp::Ordering::Equal));
            let mut prev = a;
            let (mut s1, mut s2) = (zero, zero);
            for i in idx {
                self.check(grid[i])?;
                s1 += adaptive_simpson(|x| Ok(self.phi2_integrands(x)?.0), prev, grid[i], &self.quad)?;
                s2 += adaptive_simpson(|x| Ok(self.phi2_integrands(x)?.1), prev, grid[i], &self.quad)?;
                acc1[i] = s1;
                acc2[i] = s2;
                prev = grid[i];
            }
        }
        grid.iter()
            .enumerate()
            .map(|(i, &m)| {
                let p = self.point(m)?;
                let transport = acc1[i] * lit::<R>(-1.0 / 24.0);
                let local = p.r_dot * lit::<R>(0.125);
                let curvature = acc2[i] * lit::<R>(-0.125);
                Ok(Phi2 {
                    total: transport + local + curvature,
                    transport,
                    local,
                    curvature,
                })
            })
            .collect()
    }

    /// Sample the branch and its validity mask.
    pub fn sample(&self, grid: &[R], mask: &MaskConfig<R>) -> Result<BranchSolution<R>> {
        let phase = self.phase_grid(grid)?;
        let phi2 = self.phi2_grid(grid)?;
        let mut out = BranchSolution {
            lo: self.lo,
            hi: self.hi,
            anchor: self.anchor,
            m: grid.to_vec(),
            q: Vec::with_capacity(grid.len()),
            v: Vec::with_capacity(grid.len()),
            phi0: phase,
            phi1: Vec::with_capacity(grid.len()),
            phi2: phi2.iter().map(|p| p.total).collect(),
            qdot_over_v2: Vec::with_capacity(grid.len()),
            valid: Vec::with_capacity(grid.len()),
        };
        for (i, &m) in grid.iter().enumerate() {
            let p = self.point(m)?;
            out.q.push(p.q);
            out.v.push(p.v);
            out.phi1.push(self.phi1(m)?);
            let ratio = p.q_dot.norm() / p.v.norm_sqr();
            out.qdot_over_v2.push(ratio);
            out.valid
                .push(out.phi2[i].norm() <= mask.phi2_max && ratio <= mask.qdot_over_v2_max);
        }
        Ok(out)
    }

    /// `v^{−1/2} e^{iΦ₀}` at one point.
    pub fn evaluate(&self, m: R) -> Result<C<R>> {
        let i = cplx(R::zero(), R::one());
        Ok(self.amplitude(m)? * (i * self.phase_integral(m)?).exp())
    }
}

/// Sampled branch data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchSolution<R> {
    pub lo: R,
    pub hi: R,
    pub anchor: R,
    pub m: Vec<R>,
    pub q: Vec<Complex<R>>,
    pub v: Vec<Complex<R>>,
    pub phi0: Vec<Complex<R>>,
    pub phi1: Vec<Complex<R>>,
    pub phi2: Vec<Complex<R>>,
    pub qdot_over_v2: Vec<R>,
    pub valid: Vec<bool>,
}

/// Superposed DPI wavefunction with its validity mask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Wavefunction<R> {
    pub m: Vec<R>,
    pub c: Vec<Complex<R>>,
    pub valid: Vec<bool>,
}

/// `C_m = Σ coeff_b · v_b^{−1/2} exp(iΦ₀,b)`; a sample is valid only when
/// every contributing branch is valid there.
pub fn dpi_wavefunction<R: Real, B: Bands<R>>(
    branches: &[(&Branch<R, B>, C<R>)],
    grid: &[R],
    mask: &MaskConfig<R>,
) -> Result<Wavefunction<R>> {
    let zero = C::new(R::zero(), R::zero());
    let mut c = vec![zero; grid.len()];
    let mut valid = vec![true; grid.len()];
    let i = cplx(R::zero(), R::one());
    for (b, coeff) in branches {
        let s = b.sample(grid, mask)?;
        for k in 0..grid.len() {
            let amp = b.amplitude(grid[k])?;
            c[k] += *coeff * amp * (i * s.phi0[k]).exp();
            valid[k] &= s.valid[k];
        }
    }
    Ok(Wavefunction {
        m: grid.to_vec(),
        c,
        valid,
    })
}

/// CSV `m,Re(C),Im(C),valid`.
pub fn write_wavefunction_csv<R: Real, W: Write>(wf: &Wavefunction<R>, mut out: W) -> Result<()> {
    writeln!(out, "m,Re(C),Im(C),valid")?;
    for k in 0..wf.m.len() {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{}",
            wf.m[k].as_f64(),
            wf.c[k].re.as_f64(),
            wf.c[k].im.as_f64(),
            u8::from(wf.valid[k])
        )?;
    }
    Ok(())
}
