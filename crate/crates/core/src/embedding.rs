//! Embedding of a linear time-scale system into an ODE on the half-line, and
//! the perturbation maps between the two settings.
//!
//! On every gap `(t, σ(t))` the extended coefficient is the constant
//! `Log(E + μA(t))/μ` with principal eigenvalue logarithms, so the ODE flow
//! across the gap reproduces the jump factor. Branches are chosen per gap;
//! no continuity across gaps is attempted.
//!
//! The projection back to the scale is not continuous in general: a
//! perturbation supported far from the scale changes nothing, one touching a
//! gap changes the jump. The support parameter `S` must therefore be fixed
//! before comparing projections.

use crate::error::{Error, Result};
use crate::linalg::{eig, identity, min_singular_value, recompose, spectral_norm};
use crate::linstab::CoefficientMap;
use crate::num::{cabs, lit, principal_ln, to_f64, CMat, Cplx, Real};
use crate::ode::{merge_sorted, propagate, IntegratorConfig, OdeCoefficient, SumCoefficient, Transition};
use crate::timescale::TimeScale;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

/// The gap logarithm at a right-scattered point.
#[derive(Clone, Debug, PartialEq)]
pub struct GapLog<R: Real> {
    pub t: R,
    pub mu: R,
    /// `log(E + μA(t))/μ`.
    pub matrix: CMat<R>,
    /// Eigenvalues of `E + μA(t)` and the logarithms chosen for them.
    pub jump_eigenvalues: Vec<Cplx<R>>,
    pub logs: Vec<Cplx<R>>,
}

fn jump_matrix<R: Real>(a: &CMat<R>, mu: R) -> CMat<R> {
    identity::<R>(a.nrows()) + a.map(|z| z * mu)
}

fn check_jump<R: Real>(j: &CMat<R>, t: R) -> Result<()> {
    let floor = lit::<R>(1e-13) * spectral_norm(j).max(R::one());
    if min_singular_value(j) <= floor {
        return Err(Error::NonRegressiveJump { t: to_f64(t) });
    }
    Ok(())
}

/// Gap logarithm of `E + μA` with eigenvalue logarithms taken on the branch
/// closest to `reference` (principal when `None`).
fn gap_log<R: Real>(a: &CMat<R>, t: R, mu: R, reference: Option<&GapLog<R>>) -> Result<GapLog<R>> {
    let j = jump_matrix(a, mu);
    check_jump(&j, t)?;
    let e = eig(&j)?;
    let two_pi = lit::<R>(2.0 * PI);
    let logs: Vec<Cplx<R>> = e
        .values
        .iter()
        .map(|z| {
            let l = principal_ln(*z);
            let Some(r) = reference else { return l };
            let k = (0..r.jump_eigenvalues.len())
                .min_by(|&p, &q| {
                    cabs(r.jump_eigenvalues[p] - *z)
                        .partial_cmp(&cabs(r.jump_eigenvalues[q] - *z))
                        .expect("finite eigenvalues")
                })
                .expect("nonempty spectrum");
            let turns = ((r.logs[k].im - l.im) / two_pi).round();
            Cplx::new(l.re, l.im + turns * two_pi)
        })
        .collect();
    let matrix = recompose(&e, &logs).map(|z| z / mu);
    Ok(GapLog { t, mu, matrix, jump_eigenvalues: e.values, logs })
}

fn key<R: Real>(t: R) -> u64 {
    to_f64(t).to_bits()
}

/// `Ã(t)` on `t ≥ 0`: `A(t)` on dense scale points, the gap logarithm of the
/// left endpoint elsewhere.
pub struct ExtendedCoefficient<R: Real> {
    ts: TimeScale<R>,
    a: CoefficientMap<R>,
    cache: Mutex<HashMap<u64, Arc<GapLog<R>>>>,
}

impl<R: Real> std::fmt::Debug for ExtendedCoefficient<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ExtendedCoefficient({:?})", self.a)
    }
}

/// Builds `Ã` and computes every gap logarithm up to `horizon`, so errors
/// surface here. Gaps beyond the horizon are filled in lazily; a failure
/// there yields a NaN matrix.
pub fn extend_coefficients<R: Real>(ts: &TimeScale<R>, a: &CoefficientMap<R>, horizon: R) -> Result<ExtendedCoefficient<R>> {
    let ext = ExtendedCoefficient { ts: ts.clone(), a: a.clone(), cache: Mutex::new(HashMap::new()) };
    for (t, _) in ts.scattered_points(ts.min(), horizon) {
        ext.gap(t)?;
    }
    Ok(ext)
}

impl<R: Real> ExtendedCoefficient<R> {
    pub fn scale(&self) -> &TimeScale<R> {
        &self.ts
    }

    pub fn base(&self) -> &CoefficientMap<R> {
        &self.a
    }

    /// The gap record at a right-scattered point `t`.
    pub fn gap(&self, t: R) -> Result<Arc<GapLog<R>>> {
        if let Some(g) = self.cache.lock().expect("cache lock").get(&key(t)) {
            return Ok(g.clone());
        }
        let mu = self.ts.mu(t)?;
        if mu <= R::zero() {
            return Err(Error::InvalidArgument(format!("{} is not right-scattered", to_f64(t))));
        }
        let g = Arc::new(gap_log(&self.a.at(t), t, mu, None)?);
        self.cache.lock().expect("cache lock").insert(key(t), g.clone());
        Ok(g)
    }

    /// `[t]_𝕋` and whether `t` lies on a gap (including its left endpoint).
    fn locate(&self, t: R) -> (R, bool) {
        let f = self.ts.floor_scale(t.max(self.ts.min())).unwrap_or(t);
        let on_gap = match self.ts.mu(f) {
            Ok(mu) => mu > R::zero(),
            Err(_) => false,
        };
        (f, on_gap)
    }

    /// `sup ‖Ã‖₂` over `[0, horizon]`, with the gap values taken exactly.
    pub fn sup_norm(&self, horizon: R) -> Result<R> {
        let mut m = R::zero();
        for (t, _) in self.ts.scattered_points(self.ts.min(), horizon) {
            m = m.max(spectral_norm(&self.gap(t)?.matrix));
        }
        Ok(m.max(self.a.sup_norm(horizon)))
    }
}

impl<R: Real> OdeCoefficient<R> for ExtendedCoefficient<R> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn eval(&self, t: R) -> CMat<R> {
        let (f, on_gap) = self.locate(t);
        if on_gap {
            match self.gap(f) {
                Ok(g) => g.matrix.clone(),
                Err(_) => CMat::from_element(self.dim(), self.dim(), Cplx::new(lit::<R>(f64::NAN), lit::<R>(f64::NAN))),
            }
        } else {
            self.a.at(t)
        }
    }

    fn breakpoints(&self, a: R, b: R) -> Vec<R> {
        let own: Vec<R> = self.ts.boundaries(a, b).into_iter().filter(|t| *t > a && *t < b).collect();
        merge_sorted(own, self.a.breakpoints(a, b))
    }

    fn constant_on(&self, a: R, b: R) -> Option<CMat<R>> {
        let mid = (a + b) / lit(2.0);
        let (_, on_gap) = self.locate(mid);
        if on_gap && !self.ts.contains(mid) {
            Some(self.eval(mid))
        } else {
            self.a.constant_on(a, b)
        }
    }
}

/// `Φ̃(t, s)` of the extended ODE for `t ≥ s ≥ 0`.
pub fn embedded_fundamental<R: Real>(ext: &ExtendedCoefficient<R>, t: R, s: R, cfg: &IntegratorConfig<R>) -> Result<Transition<R>> {
    if t < s || s < R::zero() {
        return Err(Error::InvalidArgument("embedded fundamental matrix needs t ≥ s ≥ 0".into()));
    }
    let mut st = Transition::identity(ext.dim());
    propagate(ext, &mut st, s, t, cfg);
    Ok(st)
}

/// Distance from `t` to the scale.
pub fn distance_to_scale<R: Real>(ts: &TimeScale<R>, t: R) -> R {
    if t <= ts.min() {
        return ts.min() - t;
    }
    let lo = ts.floor_scale(t).unwrap_or(t);
    let hi = ts.ceil_scale(t);
    (t - lo).min(hi - t)
}

/// `B̂ = (A+B)~ − Ã`: `B` on dense scale points, the difference of gap
/// logarithms on gaps.
struct LiftedPerturbation<R: Real> {
    ext: Arc<ExtendedCoefficient<R>>,
    b: CoefficientMap<R>,
    cache: Mutex<HashMap<u64, CMat<R>>>,
}

impl<R: Real> LiftedPerturbation<R> {
    fn gap_value(&self, t: R) -> Result<CMat<R>> {
        if let Some(m) = self.cache.lock().expect("cache lock").get(&key(t)) {
            return Ok(m.clone());
        }
        let base = self.ext.gap(t)?;
        let sum = self.ext.a.at(t) + self.b.at(t);
        let pert = gap_log(&sum, t, base.mu, Some(&base)).map_err(|e| match e {
            Error::NonRegressiveJump { t } => Error::RegressivityLost { t },
            other => other,
        })?;
        let m = pert.matrix - &base.matrix;
        self.cache.lock().expect("cache lock").insert(key(t), m.clone());
        Ok(m)
    }
}

impl<R: Real> OdeCoefficient<R> for LiftedPerturbation<R> {
    fn dim(&self) -> usize {
        self.b.dim()
    }

    fn eval(&self, t: R) -> CMat<R> {
        let (f, on_gap) = self.ext.locate(t);
        if on_gap {
            self.gap_value(f).unwrap_or_else(|_| CMat::from_element(self.dim(), self.dim(), Cplx::new(lit::<R>(f64::NAN), lit::<R>(f64::NAN))))
        } else {
            self.b.at(t)
        }
    }

    fn breakpoints(&self, a: R, b: R) -> Vec<R> {
        let own: Vec<R> = self.ext.ts.boundaries(a, b).into_iter().filter(|t| *t > a && *t < b).collect();
        merge_sorted(own, self.b.breakpoints(a, b))
    }

    fn constant_on(&self, a: R, b: R) -> Option<CMat<R>> {
        let mid = (a + b) / lit(2.0);
        let (_, on_gap) = self.ext.locate(mid);
        if on_gap && !self.ext.ts.contains(mid) {
            Some(self.eval(mid))
        } else {
            self.b.constant_on(a, b)
        }
    }
}

/// Lifts a scale perturbation `B` with `‖B‖ ≤ δ` to the ODE perturbation
/// `B̂ = (A+B)~ − Ã`. Gap logarithms of `A + B` use the branch nearest the
/// base extension, so small `B` gives small `B̂`.
pub fn lift_perturbation<R: Real>(
    ext: &Arc<ExtendedCoefficient<R>>,
    b: &CoefficientMap<R>,
    delta: R,
    horizon: R,
) -> Result<CoefficientMap<R>> {
    if b.dim() != ext.dim() {
        return Err(Error::DimensionMismatch { expected: ext.dim(), got: b.dim() });
    }
    let ts = &ext.ts;
    let lifted = LiftedPerturbation { ext: ext.clone(), b: b.clone(), cache: Mutex::new(HashMap::new()) };
    let (n, at) = scale_sup_norm_at(ts, b, horizon, 8);
    if n > delta * lit(1.0 + 1e-12) {
        return Err(Error::PerturbationTooLarge { t: to_f64(at), norm: to_f64(n), bound: to_f64(delta) });
    }
    for (t, _) in ts.scattered_points(ts.min(), horizon) {
        lifted.gap_value(t)?;
    }
    Ok(CoefficientMap::structured(Arc::new(lifted)))
}

/// `B = L̃[B̂]` on the scale: `B̂` at dense points, the jump correction
/// `(Φ̃(σ(t),t) − E)/μ − A(t)` at right-scattered points.
struct ProjectedPerturbation<R: Real> {
    ts: TimeScale<R>,
    bhat: CoefficientMap<R>,
    jumps: HashMap<u64, CMat<R>>,
    extra: Mutex<HashMap<u64, CMat<R>>>,
    ext: Arc<ExtendedCoefficient<R>>,
    cfg: IntegratorConfig<R>,
}

fn jump_correction<R: Real>(
    ext: &Arc<ExtendedCoefficient<R>>,
    bhat: &CoefficientMap<R>,
    t: R,
    mu: R,
    cfg: &IntegratorConfig<R>,
) -> CMat<R> {
    let sum = SumCoefficient::<R> { left: ext.clone(), right: Arc::new(bhat.clone()) };
    let mut gap_cfg = *cfg;
    gap_cfg.max_step = cfg.max_step.min(mu / lit(200.0));
    let mut st = Transition::identity(ext.dim());
    propagate(&sum, &mut st, t, t + mu, &gap_cfg);
    let phi = st.matrix();
    (phi - identity::<R>(ext.dim())).map(|z| z / mu) - ext.a.at(t)
}

impl<R: Real> OdeCoefficient<R> for ProjectedPerturbation<R> {
    fn dim(&self) -> usize {
        self.bhat.dim()
    }

    fn eval(&self, t: R) -> CMat<R> {
        self.bhat.eval(t)
    }

    fn breakpoints(&self, a: R, b: R) -> Vec<R> {
        self.bhat.breakpoints(a, b)
    }

    fn constant_on(&self, a: R, b: R) -> Option<CMat<R>> {
        self.bhat.constant_on(a, b)
    }

    fn scale_value(&self, t: R) -> Option<CMat<R>> {
        let mu = self.ts.mu(t).ok()?;
        if mu <= R::zero() {
            return None;
        }
        if let Some(m) = self.jumps.get(&key(t)) {
            return Some(m.clone());
        }
        let mut extra = self.extra.lock().expect("cache lock");
        Some(extra.entry(key(t)).or_insert_with(|| jump_correction(&self.ext, &self.bhat, t, mu, &self.cfg)).clone())
    }
}

/// Default support parameter: half the largest gap.
pub fn default_support<R: Real>(ts: &TimeScale<R>, horizon: R) -> Option<R> {
    ts.grain_profile(horizon).sup_gap_value().map(|g| (g / lit(2.0)).max(lit(1e-12)))
}

/// Sample points of `B̂` on `[a, b]`: breakpoints, piece midpoints and `k`
/// uniform points per piece.
fn piece_samples<R: Real>(c: &CoefficientMap<R>, a: R, b: R, k: usize) -> Vec<R> {
    let mut cuts = vec![a];
    cuts.extend(c.breakpoints(a, b));
    cuts.push(b);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        for i in 0..=k {
            out.push(w[0] + (w[1] - w[0]) * lit::<R>(i as f64 / k as f64));
        }
    }
    out
}

/// Projects an ODE perturbation back to the scale. Checks on `[0, horizon]`
/// that `‖B̂‖ ≤ δ`, that `B̂` vanishes farther than `S` from the scale, and
/// that `A + B` stays regressive at every jump.
pub fn project_perturbation<R: Real>(
    ext: &Arc<ExtendedCoefficient<R>>,
    bhat: &CoefficientMap<R>,
    support: R,
    delta: R,
    horizon: R,
    cfg: &IntegratorConfig<R>,
) -> Result<CoefficientMap<R>> {
    let ts = ext.ts.clone();
    if bhat.dim() != ext.dim() {
        return Err(Error::DimensionMismatch { expected: ext.dim(), got: bhat.dim() });
    }
    let mut jumps = HashMap::new();
    let slack = lit::<R>(1.0 + 1e-9);
    for sp in ts.spans(ts.min(), horizon) {
        if let Some(e) = sp.end {
            if e >= horizon {
                continue;
            }
            let next = ts.sigma(e)?;
            let mu = next - e;
            for t in piece_samples(bhat, e, next, 16) {
                let m = spectral_norm(&bhat.at(t));
                if m > delta * slack {
                    return Err(Error::PerturbationTooLarge { t: to_f64(t), norm: to_f64(m), bound: to_f64(delta) });
                }
                let d = distance_to_scale(&ts, t);
                if d > support + lit::<R>(1e-12) * t.abs().max(R::one()) && m > R::zero() {
                    return Err(Error::SupportViolation { t: to_f64(t), distance: to_f64(d) });
                }
            }
            let b = jump_correction(ext, bhat, e, mu, cfg);
            let j = jump_matrix(&(ext.a.at(e) + &b), mu);
            if check_jump(&j, e).is_err() {
                return Err(Error::RegressivityLost { t: to_f64(e) });
            }
            jumps.insert(key(e), b);
        }
        let lo = sp.start;
        let hi = sp.end.unwrap_or(horizon).min(horizon);
        if hi > lo {
            for t in piece_samples(bhat, lo, hi, 8) {
                let m = spectral_norm(&bhat.at(t));
                if m > delta * slack {
                    return Err(Error::PerturbationTooLarge { t: to_f64(t), norm: to_f64(m), bound: to_f64(delta) });
                }
            }
        }
    }
    let proj = ProjectedPerturbation { ts, bhat: bhat.clone(), jumps, extra: Mutex::new(HashMap::new()), ext: ext.clone(), cfg: *cfg };
    Ok(CoefficientMap::structured(Arc::new(proj)))
}

/// `sup ‖B(t)‖₂` over scale points: all right-scattered points and a grid of
/// dense points up to `horizon`.
pub fn scale_sup_norm<R: Real>(ts: &TimeScale<R>, b: &CoefficientMap<R>, horizon: R, dense_samples: usize) -> Result<R> {
    Ok(scale_sup_norm_at(ts, b, horizon, dense_samples).0)
}

/// The supremum and a point attaining it.
fn scale_sup_norm_at<R: Real>(ts: &TimeScale<R>, b: &CoefficientMap<R>, horizon: R, dense_samples: usize) -> (R, R) {
    let mut best = (R::zero(), ts.min());
    let mut visit = |t: R| {
        let n = spectral_norm(&b.at(t));
        if n > best.0 {
            best = (n, t);
        }
    };
    for (t, _) in ts.scattered_points(ts.min(), horizon) {
        visit(t);
    }
    for sp in ts.spans(ts.min(), horizon) {
        let lo = sp.start;
        let hi = sp.end.unwrap_or(horizon).min(horizon);
        if hi > lo {
            for t in piece_samples(b, lo, hi, dense_samples.max(1)) {
                if ts.contains(t) {
                    visit(t);
                }
            }
        }
    }
    best
}

/// `M` on points within `S` of the scale, zero elsewhere.
struct SupportMasked<R: Real> {
    ts: TimeScale<R>,
    m: CMat<R>,
    support: R,
}

impl<R: Real> OdeCoefficient<R> for SupportMasked<R> {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn eval(&self, t: R) -> CMat<R> {
        if distance_to_scale(&self.ts, t) <= self.support {
            self.m.clone()
        } else {
            CMat::zeros(self.dim(), self.dim())
        }
    }

    fn breakpoints(&self, a: R, b: R) -> Vec<R> {
        let mut out = Vec::new();
        for (t, mu) in self.ts.scattered_points(self.ts.min(), b) {
            if mu > self.support * lit(2.0) {
                for p in [t + self.support, t + mu - self.support] {
                    if p > a && p < b {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    fn constant_on(&self, a: R, b: R) -> Option<CMat<R>> {
        Some(self.eval((a + b) / lit(2.0)))
    }
}

/// A perturbation equal to `m` within `support` of the scale.
pub fn masked_perturbation<R: Real>(ts: &TimeScale<R>, m: CMat<R>, support: R) -> CoefficientMap<R> {
    CoefficientMap::structured(Arc::new(SupportMasked { ts: ts.clone(), m, support }))
}

/// Empirical Lipschitz constant of the projection: the largest ratio
/// `‖L̃[B̂₁] − L̃[B̂₂]‖ / ‖B̂₁ − B̂₂‖` over `pairs` random constant matrices of
/// norm at most `δ`, masked to the support. Never below 1 (dense points map
/// identically).
pub fn empirical_lipschitz<R: Real>(
    ext: &Arc<ExtendedCoefficient<R>>,
    support: R,
    delta: R,
    horizon: R,
    pairs: usize,
    seed: u64,
    cfg: &IntegratorConfig<R>,
) -> Result<R> {
    let n = ext.dim();
    let ts = ext.ts.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = |rng: &mut ChaCha8Rng| {
        let m = CMat::<R>::from_fn(n, n, |_, _| Cplx::new(lit(rng.random_range(-1.0..1.0)), lit(rng.random_range(-1.0..1.0))));
        let s = spectral_norm(&m);
        let scale = delta * lit::<R>(rng.random_range(0.1..1.0)) / s;
        m.map(|z| z * scale)
    };
    let mut k = R::one();
    for _ in 0..pairs {
        let m1 = random(&mut rng);
        let m2 = random(&mut rng);
        let diff = spectral_norm(&(&m1 - &m2));
        if diff == R::zero() {
            continue;
        }
        let p1 = project_perturbation(ext, &masked_perturbation(&ts, m1, support), support, delta, horizon, cfg)?;
        let p2 = project_perturbation(ext, &masked_perturbation(&ts, m2, support), support, delta, horizon, cfg)?;
        for (t, _) in ts.scattered_points(ts.min(), horizon) {
            k = k.max(spectral_norm(&(p1.at(t) - p2.at(t))) / diff);
        }
    }
    Ok(k)
}
