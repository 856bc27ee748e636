use crate::error::{Error, Result};
use crate::linalg::{identity, spectral_norm, unitary_defect};
use crate::num::{cabs, lit, to_f64, vnorm, CMat, CVec, Real};
use crate::ode::{merge_sorted, OdeCoefficient, SumCoefficient};
use std::sync::Arc;

/// Parallel lines closer than this are not rotated.
pub const ALIGNMENT_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RotationStage {
    /// First rotation of a block: turns the carried solution by at most `δ`.
    Approach,
    /// Second rotation: aligns the carried solution with the block's top
    /// direction (exactly when the remaining angle is at most `δ`).
    Align,
}

/// One unit-time rotation `U(t) = exp(−θ(t)G)`, `G = vu* − uv*`, on
/// `[start, start + 1]` with `θ(t) = speed·(t − start)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationEntry<R: Real> {
    pub start: R,
    pub speed: R,
    pub u: CVec<R>,
    pub v: CVec<R>,
    pub block: usize,
    /// Index of the segment `[iT + lT₀, iT + (l+1)T₀]` holding the support.
    pub segment: usize,
    pub stage: RotationStage,
}

impl<R: Real> RotationEntry<R> {
    pub fn end(&self) -> R {
        self.start + R::one()
    }

    pub fn contains(&self, t: R) -> bool {
        t >= self.start && t <= self.end()
    }

    pub fn generator(&self) -> CMat<R> {
        &self.v * self.u.adjoint() - &self.u * self.v.adjoint()
    }

    pub fn angle_at(&self, t: R) -> R {
        self.speed * (t - self.start).max(R::zero()).min(R::one())
    }

    /// `exp(θG) = E + sin θ·G + (1 − cos θ)·G²`, valid for orthonormal `u, v`.
    fn exp_generator(&self, theta: R) -> CMat<R> {
        let g = self.generator();
        let g2 = &g * &g;
        identity::<R>(g.nrows()) + g.map(|z| z * theta.sin()) + g2.map(|z| z * (R::one() - theta.cos()))
    }

    /// `U(t)`.
    pub fn rotation(&self, t: R) -> CMat<R> {
        self.exp_generator(-self.angle_at(t))
    }

    /// `U(t)⁻¹ = U(t)*`.
    pub fn rotation_inverse(&self, t: R) -> CMat<R> {
        self.exp_generator(self.angle_at(t))
    }

    /// `U⁻¹MU − U⁻¹U̇ − M` on the support.
    pub fn perturbation(&self, m: &CMat<R>, t: R) -> CMat<R> {
        let u = self.rotation(t);
        let ui = self.rotation_inverse(t);
        let g = self.generator();
        &ui * m * &u + g.map(|z| z * self.speed) - m
    }
}

/// Orthonormal `(u, v)` with `u ∥ from` and the line of `to` equal to
/// `cos φ·u + sin φ·v` up to a unimodular factor, together with `φ ∈ [0, π/2]`.
/// `None` when the lines agree within [`ALIGNMENT_TOLERANCE`].
pub fn rotation_plane<R: Real>(from: &CVec<R>, to: &CVec<R>) -> Option<(CVec<R>, CVec<R>, R)> {
    let u = from.map(|z| z.unscale(vnorm(from)));
    let t = to.map(|z| z.unscale(vnorm(to)));
    let c = u.dotc(&t);
    let cm = cabs(c);
    let t = if cm > R::zero() { t.map(|z| z * (c.conj().unscale(cm))) } else { t };
    let w = &t - u.map(|z| z * cm);
    let r = vnorm(&w);
    let phi = r.atan2(cm);
    if phi <= lit(ALIGNMENT_TOLERANCE) {
        return None;
    }
    Some((u, w.map(|z| z.unscale(r)), phi))
}

/// The Millionschikov perturbation `B̂`: zero off the supports, the rotation
/// formula on them. `base` is the coefficient being rotated.
#[derive(Clone)]
pub struct RotationSchedule<R: Real> {
    pub entries: Vec<RotationEntry<R>>,
    pub delta: R,
    /// `a = sup ‖M‖` used for the budget `(2a + 1)δ`.
    pub bound: R,
    base: Arc<dyn OdeCoefficient<R>>,
}

impl<R: Real> std::fmt::Debug for RotationSchedule<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RotationSchedule")
            .field("entries", &self.entries.len())
            .field("delta", &to_f64(self.delta))
            .field("bound", &to_f64(self.bound))
            .finish()
    }
}

impl<R: Real> RotationSchedule<R> {
    pub fn new(base: Arc<dyn OdeCoefficient<R>>, entries: Vec<RotationEntry<R>>, delta: R, bound: R) -> Result<Self> {
        for w in entries.windows(2) {
            if !(w[0].end() <= w[1].start) {
                return Err(Error::InvalidArgument("rotation supports overlap or are unsorted".into()));
            }
        }
        for e in &entries {
            if e.speed < R::zero() || e.speed > delta * lit(1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!("rotation speed {} outside [0, δ]", to_f64(e.speed))));
            }
        }
        Ok(Self { entries, delta, bound, base })
    }

    pub fn base(&self) -> &Arc<dyn OdeCoefficient<R>> {
        &self.base
    }

    /// `(2a + 1)δ`.
    pub fn budget(&self) -> R {
        (self.bound * lit(2.0) + R::one()) * self.delta
    }

    pub fn entry_at(&self, t: R) -> Option<&RotationEntry<R>> {
        let i = self.entries.partition_point(|e| e.start <= t);
        let e = self.entries.get(i.checked_sub(1)?)?;
        e.contains(t).then_some(e)
    }

    /// Smallest distance between consecutive supports.
    pub fn min_separation(&self) -> Option<R> {
        self.entries.windows(2).map(|w| w[1].start - w[0].end()).reduce(|a, b| a.min(b))
    }

    fn samples(&self, per_support: usize) -> impl Iterator<Item = R> + '_ {
        let k = per_support.max(1);
        self.entries.iter().flat_map(move |e| (0..=k).map(move |i| e.start + lit::<R>(i as f64 / k as f64)))
    }

    /// `sup ‖B̂‖₂` sampled on every support.
    pub fn sampled_sup_norm(&self, per_support: usize) -> R {
        self.samples(per_support).fold(R::zero(), |m, t| m.max(spectral_norm(&self.eval(t))))
    }

    /// `max ‖U*U − E‖` sampled on every support.
    pub fn unitarity_defect(&self, per_support: usize) -> R {
        let mut worst = R::zero();
        for e in &self.entries {
            let k = per_support.max(1);
            for i in 0..=k {
                worst = worst.max(unitary_defect(&e.rotation(e.start + lit::<R>(i as f64 / k as f64))));
            }
        }
        worst
    }

    /// `M + B̂`.
    pub fn perturbed(self: &Arc<Self>) -> SumCoefficient<R> {
        SumCoefficient { left: self.base.clone(), right: self.clone() }
    }
}

fn support_breakpoints<R: Real>(entries: &[RotationEntry<R>], a: R, b: R, extra: impl Fn(&RotationEntry<R>) -> Vec<R>) -> Vec<R> {
    let i = entries.partition_point(|e| e.end() <= a);
    let mut out = Vec::new();
    for e in entries[i..].iter().take_while(|e| e.start < b) {
        out.push(e.start);
        out.extend(extra(e));
        out.push(e.end());
    }
    out.retain(|t| *t > a && *t < b);
    out.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    out.dedup();
    out
}

fn overlaps_support<R: Real>(entries: &[RotationEntry<R>], a: R, b: R) -> bool {
    let i = entries.partition_point(|e| e.end() <= a);
    entries.get(i).is_some_and(|e| e.start < b)
}

impl<R: Real> OdeCoefficient<R> for RotationSchedule<R> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, t: R) -> CMat<R> {
        match self.entry_at(t) {
            Some(e) => e.perturbation(&self.base.eval(t), t),
            None => CMat::zeros(self.dim(), self.dim()),
        }
    }

    fn breakpoints(&self, a: R, b: R) -> Vec<R> {
        let own = support_breakpoints(&self.entries, a, b, |_| Vec::new());
        // Base breakpoints only matter where B̂ depends on the base.
        let inner: Vec<R> = self
            .base
            .breakpoints(a, b)
            .into_iter()
            .filter(|t| self.entry_at(*t).is_some())
            .collect();
        merge_sorted(own, inner)
    }

    fn constant_on(&self, a: R, b: R) -> Option<CMat<R>> {
        (!overlaps_support(&self.entries, a, b)).then(|| CMat::zeros(self.dim(), self.dim()))
    }
}

/// `B̂` damped by linear ramps of width `ramp` at both ends of every support,
/// so the perturbation is continuous.
#[derive(Clone, Debug)]
pub struct MollifiedSchedule<R: Real> {
    pub schedule: Arc<RotationSchedule<R>>,
    pub ramp: R,
}

pub fn mollify_schedule<R: Real>(sched: Arc<RotationSchedule<R>>, ramp: R) -> Result<MollifiedSchedule<R>> {
    let half = lit::<R>(0.5);
    let limit = sched.min_separation().map_or(half, |s| half.min(s * half));
    if !(ramp > R::zero()) || ramp >= limit {
        return Err(Error::RampTooWide { ramp: to_f64(ramp), limit: to_f64(limit) });
    }
    Ok(MollifiedSchedule { schedule: sched, ramp })
}

impl<R: Real> MollifiedSchedule<R> {
    /// Ramp factor in `[0, 1]`.
    pub fn weight(&self, t: R) -> R {
        match self.schedule.entry_at(t) {
            Some(e) => ((t - e.start) / self.ramp).min((e.end() - t) / self.ramp).min(R::one()).max(R::zero()),
            None => R::zero(),
        }
    }

    pub fn sampled_sup_norm(&self, per_support: usize) -> R {
        self.schedule.samples(per_support).fold(R::zero(), |m, t| m.max(spectral_norm(&self.eval(t))))
    }

    /// `M + B̂₁`.
    pub fn perturbed(self: &Arc<Self>) -> SumCoefficient<R> {
        SumCoefficient { left: self.schedule.base.clone(), right: self.clone() }
    }
}

impl<R: Real> OdeCoefficient<R> for MollifiedSchedule<R> {
    fn dim(&self) -> usize {
        self.schedule.dim()
    }

    fn eval(&self, t: R) -> CMat<R> {
        let w = self.weight(t);
        if w == R::zero() {
            return CMat::zeros(self.dim(), self.dim());
        }
        self.schedule.eval(t).map(|z| z * w)
    }

    fn breakpoints(&self, a: R, b: R) -> Vec<R> {
        let r = self.ramp;
        let own = support_breakpoints(&self.schedule.entries, a, b, |e| vec![e.start + r, e.end() - r]);
        merge_sorted(own, self.schedule.breakpoints(a, b))
    }

    fn constant_on(&self, a: R, b: R) -> Option<CMat<R>> {
        self.schedule.constant_on(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linstab::CoefficientMap;
    use crate::num::{cdiag_real, cvec_from_real};
    use crate::ode::{ode_fundamental, IntegratorConfig, Transition};

    fn entry(start: f64, speed: f64, u: &[f64], v: &[f64]) -> RotationEntry<f64> {
        RotationEntry {
            start,
            speed,
            u: cvec_from_real(u),
            v: cvec_from_real(v),
            block: 0,
            segment: 0,
            stage: RotationStage::Approach,
        }
    }

    #[test]
    fn plane_of_two_lines() {
        let (u, v, phi) = rotation_plane(&cvec_from_real(&[2.0, 0.0]), &cvec_from_real(&[-1.0, 1.0])).unwrap();
        assert!((phi - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
        assert!((u[0].re - 1.0).abs() < 1e-15);
        // The line of (−1, 1) is the line of (1, −1).
        assert!((v[1].re + 1.0).abs() < 1e-15);
        assert!(rotation_plane(&cvec_from_real(&[1.0, 0.0]), &cvec_from_real(&[-3.0, 0.0])).is_none());
    }

    #[test]
    fn rotation_turns_u_toward_v() {
        let e = entry(2.0, 0.3, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]);
        let ui = e.rotation_inverse(3.0);
        let x = &ui * &e.u;
        assert!((x[0].re - 0.3f64.cos()).abs() < 1e-15);
        assert!((x[2].re - 0.3f64.sin()).abs() < 1e-15);
        assert!(unitary_defect(&e.rotation(2.4)) < 1e-14);
        assert!((&e.rotation(2.7) * e.rotation_inverse(2.7) - identity::<f64>(3)).norm() < 1e-14);
    }

    #[test]
    fn perturbed_flow_is_rotated_flow() {
        // Solutions of ẏ = (M + B̂)y are U⁻¹z with ż = Mz.
        let m = CoefficientMap::constant(cdiag_real(&[-1.0, 0.5]));
        let e = entry(1.0, 0.25, &[0.6, 0.8], &[-0.8, 0.6]);
        let sched = Arc::new(RotationSchedule::new(Arc::new(m.clone()), vec![e.clone()], 0.25, 1.0).unwrap());
        let cfg = IntegratorConfig { max_step: 1e-3, ..Default::default() };
        let phi = ode_fundamental(&sched.perturbed(), 2.0, 1.0, &cfg).matrix();
        let plain = ode_fundamental(&m, 2.0, 1.0, &cfg).matrix();
        let want = e.rotation_inverse(2.0) * plain;
        assert!((phi - want).norm() < 1e-10);
        // Off the support nothing changes.
        let mut st = Transition::identity(2);
        crate::ode::propagate(&sched.perturbed(), &mut st, 2.5, 4.0, &cfg);
        assert!((st.matrix() - ode_fundamental(&m, 4.0, 2.5, &cfg).matrix()).norm() < 1e-12);
    }

    #[test]
    fn budget_holds_on_support() {
        let m = CoefficientMap::constant(cdiag_real(&[-2.0, 1.5]));
        let e = entry(0.0, 0.1, &[1.0, 0.0], &[0.0, 1.0]);
        let s = RotationSchedule::new(Arc::new(m), vec![e], 0.1, 2.0).unwrap();
        let n = s.sampled_sup_norm(200);
        assert!(n > 0.1 && n <= s.budget() + 1e-12, "{n}");
    }

    #[test]
    fn mollifier_rules() {
        let m: Arc<dyn OdeCoefficient<f64>> = Arc::new(CoefficientMap::diagonal(&[1.0, -1.0]));
        let empty = Arc::new(RotationSchedule::new(m.clone(), vec![], 0.1, 1.0).unwrap());
        let mol = mollify_schedule(empty, 0.1).unwrap();
        assert_eq!(mol.eval(0.3), CMat::zeros(2, 2));
        let es = vec![entry(0.0, 0.1, &[1.0, 0.0], &[0.0, 1.0]), entry(1.5, 0.1, &[1.0, 0.0], &[0.0, 1.0])];
        let s = Arc::new(RotationSchedule::new(m, es, 0.1, 1.0).unwrap());
        assert!(matches!(mollify_schedule(s.clone(), 0.3), Err(Error::RampTooWide { .. })));
        let mol = mollify_schedule(s.clone(), 1e-3).unwrap();
        assert_eq!(mol.eval(0.5), s.eval(0.5));
        assert!(spectral_norm(&mol.eval(1e-4)) < spectral_norm(&s.eval(1e-4)));
        assert_eq!(mol.eval(0.0), CMat::zeros(2, 2));
        assert!(mol.sampled_sup_norm(50) <= s.budget());
    }

    #[test]
    fn overlapping_supports_rejected() {
        let m: Arc<dyn OdeCoefficient<f64>> = Arc::new(CoefficientMap::diagonal(&[1.0]));
        let es = vec![entry(0.0, 0.1, &[1.0], &[0.0]), entry(0.5, 0.1, &[1.0], &[0.0])];
        assert!(RotationSchedule::new(m, es, 0.1, 1.0).is_err());
    }
}
