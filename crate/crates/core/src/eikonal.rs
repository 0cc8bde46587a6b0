//! The quartic Hamilton–Jacobi equation `E = w + 2t₁cos q + 2t₂cos 2q`:
//! roots, velocities, the `(κ, χ)` decomposition and branch tracking.

use std::io::Write;

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{cplx, lit, real, Real, C};
use crate::smooth::{Bands, Frame, LocalBands};

/// `H_sc(q) = w + 2t₁cos q + 2t₂cos 2q`.
pub fn hamiltonian<R: Real>(l: &LocalBands<R>, q: C<R>) -> C<R> {
    let two: R = lit(2.0);
    real(l.w()) + q.cos() * (two * l.t1()) + (q * two).cos() * (two * l.t2())
}

/// `v = ∂H_sc/∂q = −2 sin q (t₁ + 4t₂ cos q)`.
pub fn velocity_local<R: Real>(l: &LocalBands<R>, q: C<R>) -> C<R> {
    let two: R = lit(2.0);
    let four: R = lit(4.0);
    -(q.sin() * two) * (real(l.t1()) + q.cos() * (four * l.t2()))
}

pub fn semiclassical_energy<R: Real, B: Bands<R>>(cc: &B, q: C<R>, m: R) -> Result<C<R>> {
    Ok(hamiltonian(&cc.local(m)?, q))
}

pub fn velocity<R: Real, B: Bands<R>>(cc: &B, q: C<R>, m: R) -> Result<C<R>> {
    Ok(velocity_local(&cc.local(m)?, q))
}

/// Partial derivatives of `H_sc(q, m)` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HDerivs<R> {
    pub h: C<R>,
    pub q: C<R>,
    pub qq: C<R>,
    pub qqq: C<R>,
    pub m: C<R>,
    pub mm: C<R>,
    pub qm: C<R>,
    pub qqm: C<R>,
    pub qmm: C<R>,
}

impl<R: Real> HDerivs<R> {
    pub fn at(l: &LocalBands<R>, q: C<R>) -> Self {
        let two: R = lit(2.0);
        let four: R = lit(4.0);
        let eight: R = lit(8.0);
        let sixteen: R = lit(16.0);
        let (s1, c1) = (q.sin(), q.cos());
        let q2 = q * two;
        let (s2, c2) = (q2.sin(), q2.cos());
        // f(t) = w + 2t₁cos q + 2t₂cos 2q with each band replaced by its derivative
        let even = |t0: R, t1: R, t2: R| real(t0) + c1 * (two * t1) + c2 * (two * t2);
        let odd = |t1: R, t2: R| -(s1 * (two * t1) + s2 * (four * t2));
        let second = |t1: R, t2: R| -(c1 * (two * t1) + c2 * (eight * t2));
        Self {
            h: even(l.t[0], l.t[1], l.t[2]),
            q: odd(l.t[1], l.t[2]),
            qq: second(l.t[1], l.t[2]),
            qqq: s1 * (two * l.t[1]) + s2 * (sixteen * l.t[2]),
            m: even(l.dt[0], l.dt[1], l.dt[2]),
            mm: even(l.ddt[0], l.ddt[1], l.ddt[2]),
            qm: odd(l.dt[1], l.dt[2]),
            qqm: second(l.dt[1], l.dt[2]),
            qmm: odd(l.ddt[1], l.ddt[2]),
        }
    }
}

/// One root of the quartic at a given `(m, E)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WavevectorRoot<R> {
    pub zeta: Complex<R>,
    pub q: Complex<R>,
    pub v: Complex<R>,
    pub branch_id: u8,
    /// Sign of the square root in `cos q = (−t₁ + σ₁√D)/4t₂` closest to this root.
    pub sigma1: i8,
    /// Sign of `Im q`, absent when `q` is real.
    pub sigma2: Option<i8>,
}

/// `q = arg ζ − i ln|ζ|`, so that `ζ = e^{iq}`.
pub fn q_of_zeta<R: Real>(z: C<R>) -> C<R> {
    cplx(z.arg(), -z.norm().ln())
}

/// The four roots with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuarticSolution<R> {
    /// Ordered so that `roots[0]·roots[1] = 1` and `roots[2]·roots[3] = 1`.
    pub roots: [WavevectorRoot<R>; 4],
    /// Largest relative residual of `t₂ζ² + t₁ζ + (w−E) + t₁/ζ + t₂/ζ²`.
    pub residual: R,
    /// Largest `|ζζ′ − 1|` over the two pairs.
    pub pair_defect: R,
}

/// Relative residual of the palindromic equation at `ζ`.
pub fn quartic_residual<R: Real>(l: &LocalBands<R>, e: R, z: C<R>) -> R {
    let zi = z.inv();
    let (t1, t2, w) = (l.t1(), l.t2(), l.w() - e);
    let val = (z * z + zi * zi) * t2 + (z + zi) * t1 + real(w);
    let r = z.norm();
    let ri = R::one() / r;
    let scale = t2.abs() * (r * r + ri * ri) + t1.abs() * (r + ri) + w.abs();
    if scale > R::zero() {
        val.norm() / scale
    } else {
        val.norm()
    }
}

fn horner<R: Real>(coef: &[C<R>], z: C<R>) -> (C<R>, C<R>) {
    // coef[0] is the leading coefficient.
    let mut p = coef[0];
    let mut dp = C::<R>::new(R::zero(), R::zero());
    for &c in &coef[1..] {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Eigenvalues of an upper Hessenberg matrix by single-shift complex QR
/// with Wilkinson shifts and deflation.
pub fn hessenberg_eigenvalues<R: Real>(mut h: Vec<Vec<C<R>>>) -> Result<Vec<C<R>>> {
    let n = h.len();
    let eps = R::epsilon();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    let mut hi = n - 1;
    let mut iter = 0usize;
    let max_iter = 60 * n;
    let mut total = 0usize;
    loop {
        if hi == 0 {
            out.push(h[0][0]);
            break;
        }
        // Active block [l, hi].
        let mut l = hi;
        while l > 0 {
            let s = h[l - 1][l - 1].norm() + h[l][l].norm();
            let s = if s == R::zero() { R::one() } else { s };
            if h[l][l - 1].norm() <= eps * s {
                h[l][l - 1] = C::new(R::zero(), R::zero());
                break;
            }
            l -= 1;
        }
        if l == hi {
            out.push(h[hi][hi]);
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > max_iter {
            return Err(Error::NoConvergence("Hessenberg QR iteration".into()));
        }
        let mu = if iter.is_multiple_of(11) {
            // Exceptional shift to break cycles.
            h[hi][hi] + C::new(h[hi][hi - 1].norm() * lit(0.75), R::zero())
        } else {
            let a = h[hi - 1][hi - 1];
            let b = h[hi - 1][hi];
            let c = h[hi][hi - 1];
            let d = h[hi][hi];
            let half: R = lit(0.5);
            let mid = (a + d) * half;
            let disc = ((a - d) * (a - d) * lit::<R>(0.25) + b * c).sqrt();
            let (m1, m2) = (mid + disc, mid - disc);
            if (m1 - d).norm() < (m2 - d).norm() {
                m1
            } else {
                m2
            }
        };
        for k in l..=hi {
            h[k][k] -= mu;
        }
        let mut rots = Vec::with_capacity(hi - l);
        for k in l..hi {
            let x = h[k][k];
            let y = h[k + 1][k];
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (c, s) = if r == R::zero() {
                (R::one(), C::new(R::zero(), R::zero()))
            } else if x.norm() == R::zero() {
                (R::zero(), y.conj() / y.norm())
            } else {
                (x.norm() / r, (x / x.norm()) * y.conj() / r)
            };
            for j in k..=hi {
                let a = h[k][j];
                let b = h[k + 1][j];
                h[k][j] = a * c + s * b;
                h[k + 1][j] = -s.conj() * a + b * c;
            }
            rots.push((c, s));
        }
        for (i, k) in (l..hi).enumerate() {
            let (c, s) = rots[i];
            let top = (k + 2).min(hi);
            for row in h.iter_mut().take(top + 1).skip(l) {
                let a = row[k];
                let b = row[k + 1];
                row[k] = a * c + b * s.conj();
                row[k + 1] = -(a * s) + b * c;
            }
        }
        for k in l..=hi {
            h[k][k] += mu;
        }
    }
    Ok(out)
}

/// Roots of `coef[0] z^n + … + coef[n]` via companion-matrix QR and one
/// guarded Newton polish per root.
pub fn polynomial_roots<R: Real>(coef: &[C<R>]) -> Result<Vec<C<R>>> {
    let n = coef.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = coef[0];
    if lead.norm() == R::zero() {
        return Err(Error::InvalidArgument("leading coefficient vanishes".into()));
    }
    let zero = C::new(R::zero(), R::zero());
    let mut h = vec![vec![zero; n]; n];
    for j in 0..n {
        h[0][j] = -coef[j + 1] / lead;
    }
    for i in 1..n {
        h[i][i - 1] = C::new(R::one(), R::zero());
    }
    let mut roots = hessenberg_eigenvalues(h)?;
    for z in roots.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(coef, *z);
            if dp.norm() == R::zero() || p.norm() == R::zero() {
                break;
            }
            let cand = *z - p / dp;
            let (pc, _) = horner(coef, cand);
            if pc.norm() < p.norm() {
                *z = cand;
            } else {
                break;
            }
        }
    }
    Ok(roots)
}

fn degenerate_t2<R: Real>(l: &LocalBands<R>, e: R) -> bool {
    let scale = l.t1().abs().max((l.w() - e).abs()).max(R::one());
    l.t2().abs() < lit::<R>(1e-12) * scale
}

/// Both values of `cos q` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CosqPair<R> {
    /// `cos q` for `σ₁ = +1` and `σ₁ = −1`.
    pub plus: Complex<R>,
    pub minus: Complex<R>,
    pub discriminant: R,
    /// `f = w − 2t₂ − E`.
    pub f: R,
}

impl<R: Real> CosqPair<R> {
    pub fn get(&self, sigma1: i8) -> Complex<R> {
        if sigma1 >= 0 {
            self.plus
        } else {
            self.minus
        }
    }
}

pub fn cosq_local<R: Real>(l: &LocalBands<R>, e: R, m: R) -> Result<CosqPair<R>> {
    if degenerate_t2(l, e) {
        return Err(Error::FallbackThreeTerm { m: m.as_f64() });
    }
    let (t1, t2) = (l.t1(), l.t2());
    let f = l.w() - t2 - t2 - e;
    let d = t1 * t1 - lit::<R>(4.0) * t2 * f;
    let root = real(d).sqrt();
    let den = lit::<R>(4.0) * t2;
    Ok(CosqPair {
        plus: (real(-t1) + root) / den,
        minus: (real(-t1) - root) / den,
        discriminant: d,
        f,
    })
}

pub fn cosq_branches<R: Real, B: Bands<R>>(cc: &B, e: R, m: R) -> Result<CosqPair<R>> {
    cosq_local(&cc.local(m)?, e, m)
}

fn make_root<R: Real>(l: &LocalBands<R>, cos: &CosqPair<R>, z: C<R>, id: u8) -> WavevectorRoot<R> {
    let q = q_of_zeta(z);
    let c = (z + z.inv()) * lit::<R>(0.5);
    let sigma1 = if (c - cos.plus).norm() <= (c - cos.minus).norm() { 1 } else { -1 };
    let tol: R = lit(1e-9);
    let sigma2 = if q.im > tol {
        Some(1)
    } else if q.im < -tol {
        Some(-1)
    } else {
        None
    };
    WavevectorRoot {
        zeta: z,
        q,
        v: velocity_local(l, q),
        branch_id: id,
        sigma1,
        sigma2,
    }
}

/// The four roots `ζ = e^{iq}` of the palindromic quartic at `(m, E)` from
/// already evaluated bands.
pub fn solve_hj_local<R: Real>(l: &LocalBands<R>, e: R, m: R) -> Result<QuarticSolution<R>> {
    let cos = cosq_local(l, e, m)?;
    let (t1, t2) = (real(l.t1()), real(l.t2()));
    let coef = [t2, t1, real(l.w() - e), t1, t2];
    let z = polynomial_roots(&coef)?;
    if z.len() != 4 || z.iter().any(|r| !(r.re.is_finite() && r.im.is_finite()) || r.norm() == R::zero()) {
        return Err(Error::NoConvergence(format!("quartic roots at m = {m}")));
    }
    let pairings = [[0, 1, 2, 3], [0, 2, 1, 3], [0, 3, 1, 2]];
    let one = real(R::one());
    let defect = |p: &[usize; 4]| (z[p[0]] * z[p[1]] - one).norm() + (z[p[2]] * z[p[3]] - one).norm();
    let best = pairings
        .iter()
        .min_by(|a, b| defect(a).partial_cmp(&defect(b)).unwrap_or(std::cmp::Ordering::Equal))
        .copied()
        .unwrap_or([0, 1, 2, 3]);
    let pair_defect = (z[best[0]] * z[best[1]] - one)
        .norm()
        .max((z[best[2]] * z[best[3]] - one).norm());
    // Symmetrize each pair onto (ζ, 1/ζ).
    let mut sym = [z[0]; 4];
    for p in 0..2 {
        let (a, b) = (z[best[2 * p]], z[best[2 * p + 1]]);
        let mut r = (a / b).sqrt();
        if (r - a).norm() > (-r - a).norm() {
            r = -r;
        }
        let accept = quartic_residual(l, e, r) <= quartic_residual(l, e, a).max(quartic_residual(l, e, b.inv()));
        let r = if accept { r } else { a };
        sym[2 * p] = r;
        sym[2 * p + 1] = r.inv();
    }
    let residual = sym.iter().map(|&s| quartic_residual(l, e, s)).fold(R::zero(), R::max);
    let roots = [
        make_root(l, &cos, sym[0], 0),
        make_root(l, &cos, sym[1], 1),
        make_root(l, &cos, sym[2], 2),
        make_root(l, &cos, sym[3], 3),
    ];
    Ok(QuarticSolution {
        roots,
        residual,
        pair_defect,
    })
}

pub fn solve_hj<R: Real, B: Bands<R>>(cc: &B, e: R, m: R) -> Result<QuarticSolution<R>> {
    solve_hj_local(&cc.local(m)?, e, m)
}

/// Output of [`kappa_chi`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaChi<R> {
    pub kappa: R,
    pub chi: R,
    pub q_a: Complex<R>,
    /// `s_a = −iσ₂ v(q_a)`.
    pub s_a: Complex<R>,
    pub q_b: Complex<R>,
    pub s_b: Complex<R>,
    pub sigma2: i8,
}

/// Decompose the complex-`q` region roots as `q_a = [π] + iσ₂κ + χ` with
/// `cosh κ cos χ = −t₁/4|t₂|` and `sinh κ sin χ = √(−D)/4|t₂|` in the
/// canonical frame. The π shift applies when the frame is barred.
pub fn kappa_chi_local<R: Real>(l: &LocalBands<R>, e: R, m: R, sigma2: i8) -> Result<KappaChi<R>> {
    let frame = Frame::detect(l.t1(), l.t2());
    let lc = frame.bands(*l);
    let ec = frame.energy(e);
    let cos = cosq_local(&lc, ec, m)?;
    if cos.discriminant >= R::zero() {
        return Err(Error::RegionMismatch {
            m: m.as_f64(),
            discriminant: cos.discriminant.as_f64(),
        });
    }
    let four_t2 = lit::<R>(4.0) * lc.t2();
    let p = -lc.t1() / four_t2;
    let qq = (-cos.discriminant).sqrt() / four_t2;
    let s = R::one() + p * p + qq * qq;
    let x = (s + (s * s - lit::<R>(4.0) * p * p).max(R::zero()).sqrt()) * lit(0.5);
    let ch = x.sqrt().max(R::one());
    let kappa = (ch + (ch * ch - R::one()).sqrt()).ln();
    let chi = (p / ch).max(-R::one()).min(R::one()).acos();
    let sg: R = if sigma2 < 0 { -R::one() } else { R::one() };
    let shift = if frame.barred() { R::PI() } else { R::zero() };
    let q_a = cplx(chi + shift, sg * kappa);
    let q_b = q_a.conj();
    let s_a = cplx(R::zero(), -sg) * velocity_local(l, q_a);
    let s_b = s_a.conj();
    Ok(KappaChi {
        kappa,
        chi,
        q_a,
        s_a,
        q_b,
        s_b,
        sigma2: if sigma2 < 0 { -1 } else { 1 },
    })
}

pub fn kappa_chi<R: Real, B: Bands<R>>(cc: &B, e: R, m: R, sigma2: i8) -> Result<KappaChi<R>> {
    kappa_chi_local(&cc.local(m)?, e, m, sigma2)
}

/// Root pattern at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Topology {
    /// `|ζ| = 1`: real `q`.
    pub oscillatory: u8,
    /// `ζ > 0`: `q = iκ`.
    pub growing_decaying: u8,
    /// `ζ < 0`: `q = π + iκ`.
    pub alternating: u8,
    /// Genuinely complex `q`.
    pub complex: u8,
}

impl Topology {
    pub fn of<R: Real>(roots: &[WavevectorRoot<R>; 4]) -> Self {
        let tol: R = lit(1e-9);
        let mut t = Topology::default();
        for r in roots {
            let on_circle = (r.zeta.norm() - R::one()).abs() <= tol;
            let on_axis = r.zeta.im.abs() <= tol * r.zeta.norm();
            if on_circle {
                t.oscillatory += 1;
            } else if on_axis && r.zeta.re > R::zero() {
                t.growing_decaying += 1;
            } else if on_axis {
                t.alternating += 1;
            } else {
                t.complex += 1;
            }
        }
        t
    }
}

/// Branches tracked by continuity over a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchTracks<R> {
    pub m: Vec<R>,
    /// `roots[i][b]` is branch `b` at `m[i]`.
    pub roots: Vec<[WavevectorRoot<R>; 4]>,
    pub topology: Vec<Topology>,
    /// Grid intervals `(m[i], m[i+1])` across which the topology changes.
    pub transitions: Vec<(R, R)>,
}

impl<R: Real> BranchTracks<R> {
    pub fn branch(&self, b: usize) -> impl Iterator<Item = &WavevectorRoot<R>> + '_ {
        self.roots.iter().map(move |r| &r[b])
    }
}

const PERMUTATIONS: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

/// Assign the roots at successive grid points to four continuous branches.
pub fn track_branches<R: Real, B: Bands<R>>(cc: &B, e: R, grid: &[R]) -> Result<BranchTracks<R>> {
    for w in grid.windows(2) {
        if (w[1] - w[0]).abs() > lit(0.5 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "grid step {} exceeds half a site",
                (w[1] - w[0]).as_f64()
            )));
        }
    }
    let mut out = BranchTracks {
        m: Vec::with_capacity(grid.len()),
        roots: Vec::with_capacity(grid.len()),
        topology: Vec::with_capacity(grid.len()),
        transitions: Vec::new(),
    };
    let tie: R = lit(1e-6);
    for &m in grid {
        let sol = solve_hj(cc, e, m)?;
        let mut r = sol.roots;
        let ordered = match out.roots.last() {
            None => {
                r.sort_by(|a, b| {
                    (a.zeta.norm(), a.zeta.arg())
                        .partial_cmp(&(b.zeta.norm(), b.zeta.arg()))
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                r
            }
            Some(prev) => {
                let cost = |p: &[usize; 4]| (0..4).fold(R::zero(), |acc, b| acc + (r[p[b]].zeta - prev[b].zeta).norm());
                let mut costs: Vec<(R, usize)> = PERMUTATIONS.iter().enumerate().map(|(i, p)| (cost(p), i)).collect();
                costs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
                let mut best = PERMUTATIONS[costs[0].1];
                let second = PERMUTATIONS[costs[1].1];
                if costs[1].0 - costs[0].0 < tie {
                    let distinct = (0..4).any(|b| {
                        best[b] != second[b]
                            && (r[best[b]].zeta - r[second[b]].zeta).norm() > tie
                            && (0..4).any(|c| c != b && best[c] == second[b] && (prev[b].zeta - prev[c].zeta).norm() > tie)
                    });
                    let prev_topo = *out.topology.last().unwrap();
                    if distinct && Topology::of(&r) == prev_topo {
                        return Err(Error::AmbiguousContinuation { m: m.as_f64() });
                    }
                    // Crossing a turning point: smallest rotation of arg ζ wins.
                    let rotation = |p: &[usize; 4]| {
                        (0..4).fold(R::zero(), |acc, b| acc + (r[p[b]].zeta / prev[b].zeta).arg().abs())
                    };
                    best = costs
                        .iter()
                        .take_while(|c| c.0 - costs[0].0 < tie)
                        .map(|c| PERMUTATIONS[c.1])
                        .min_by(|a, b| rotation(a).partial_cmp(&rotation(b)).unwrap_or(std::cmp::Ordering::Equal))
                        .unwrap_or(best);
                }
                [r[best[0]], r[best[1]], r[best[2]], r[best[3]]]
            }
        };
        let mut ordered = ordered;
        for (b, root) in ordered.iter_mut().enumerate() {
            root.branch_id = b as u8;
        }
        let topo = Topology::of(&ordered);
        if let Some(&last) = out.topology.last() {
            if last != topo {
                out.transitions.push((*out.m.last().unwrap(), m));
            }
        }
        out.m.push(m);
        out.roots.push(ordered);
        out.topology.push(topo);
    }
    Ok(out)
}

/// CSV dump `m,branch,Re(q),Im(q),Re(v),Im(v)`.
pub fn write_branches_csv<R: Real, W: Write>(tracks: &BranchTracks<R>, mut out: W) -> Result<()> {
    writeln!(out, "m,branch,Re(q),Im(q),Re(v),Im(v)")?;
    for (m, roots) in tracks.m.iter().zip(&tracks.roots) {
        for r in roots {
            writeln!(
                out,
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                m.as_f64(),
                r.branch_id,
                r.q.re.as_f64(),
                r.q.im.as_f64(),
                r.v.re.as_f64(),
                r.v.im.as_f64()
            )?;
        }
    }
    Ok(())
}
