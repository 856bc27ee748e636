//! Linear ODE propagation on the half-line, shared by the dense parts of time
//! scales and by the embedded systems.
//!
//! Coefficients announce where they change form ([`OdeCoefficient::breakpoints`])
//! and whether they are constant between breakpoints. Constant pieces are
//! propagated with the matrix exponential, the rest with classical RK4.

use crate::linalg::{expm, identity, norm1, spectral_norm};
use crate::num::{cx, lit, max_abs, to_f64, vnorm, CMat, CVec, Real};
use crate::timescale::QuadratureConfig;
use std::sync::Arc;

/// Matrix coefficient of `ẋ = M(t)x`.
pub trait OdeCoefficient<R: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: R) -> CMat<R>;

    /// Ascending points in the open interval `(a, b)` where the rule may
    /// change form.
    fn breakpoints(&self, _a: R, _b: R) -> Vec<R> {
        Vec::new()
    }

    /// The constant value on `(a, b)`, if the rule is constant there. Callers
    /// only ask about intervals free of breakpoints.
    fn constant_on(&self, _a: R, _b: R) -> Option<CMat<R>> {
        None
    }

    /// The value at a scale point when it differs from the flow rule `eval`,
    /// as for projected perturbations at right-scattered points.
    fn scale_value(&self, _t: R) -> Option<CMat<R>> {
        None
    }
}

impl<R: Real, T: OdeCoefficient<R> + ?Sized> OdeCoefficient<R> for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: R) -> CMat<R> {
        (**self).eval(t)
    }
    fn breakpoints(&self, a: R, b: R) -> Vec<R> {
        (**self).breakpoints(a, b)
    }
    fn constant_on(&self, a: R, b: R) -> Option<CMat<R>> {
        (**self).constant_on(a, b)
    }
    fn scale_value(&self, t: R) -> Option<CMat<R>> {
        (**self).scale_value(t)
    }
}

/// Pointwise sum of two coefficients.
pub struct SumCoefficient<R: Real> {
    pub left: Arc<dyn OdeCoefficient<R>>,
    pub right: Arc<dyn OdeCoefficient<R>>,
}

impl<R: Real> OdeCoefficient<R> for SumCoefficient<R> {
    fn dim(&self) -> usize {
        self.left.dim()
    }
    fn eval(&self, t: R) -> CMat<R> {
        self.left.eval(t) + self.right.eval(t)
    }
    fn breakpoints(&self, a: R, b: R) -> Vec<R> {
        merge_sorted(self.left.breakpoints(a, b), self.right.breakpoints(a, b))
    }
    fn constant_on(&self, a: R, b: R) -> Option<CMat<R>> {
        Some(self.left.constant_on(a, b)? + self.right.constant_on(a, b)?)
    }
    fn scale_value(&self, t: R) -> Option<CMat<R>> {
        let (l, r) = (self.left.scale_value(t), self.right.scale_value(t));
        if l.is_none() && r.is_none() {
            return None;
        }
        Some(l.unwrap_or_else(|| self.left.eval(t)) + r.unwrap_or_else(|| self.right.eval(t)))
    }
}

/// `M(t) + c·E`.
pub struct ShiftedCoefficient<R: Real> {
    pub base: Arc<dyn OdeCoefficient<R>>,
    pub shift: R,
}

impl<R: Real> OdeCoefficient<R> for ShiftedCoefficient<R> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn eval(&self, t: R) -> CMat<R> {
        self.base.eval(t) + identity::<R>(self.base.dim()).map(|z| z * self.shift)
    }
    fn breakpoints(&self, a: R, b: R) -> Vec<R> {
        self.base.breakpoints(a, b)
    }
    fn constant_on(&self, a: R, b: R) -> Option<CMat<R>> {
        Some(self.base.constant_on(a, b)? + identity::<R>(self.base.dim()).map(|z| z * self.shift))
    }
    fn scale_value(&self, t: R) -> Option<CMat<R>> {
        Some(self.base.scale_value(t)? + identity::<R>(self.base.dim()).map(|z| z * self.shift))
    }
}

/// The zero coefficient.
pub struct ZeroCoefficient(pub usize);

impl<R: Real> OdeCoefficient<R> for ZeroCoefficient {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _t: R) -> CMat<R> {
        CMat::zeros(self.0, self.0)
    }
    fn constant_on(&self, _a: R, _b: R) -> Option<CMat<R>> {
        Some(CMat::zeros(self.0, self.0))
    }
}

pub(crate) fn merge_sorted<R: Real>(mut a: Vec<R>, b: Vec<R>) -> Vec<R> {
    if b.is_empty() {
        return a;
    }
    a.extend(b);
    a.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    a.dedup();
    a
}

/// Integration parameters for linear propagation and simulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig<R: Real> {
    /// Upper bound on the RK4 step.
    pub max_step: R,
    /// RK4 step relative to the length of the dense piece.
    pub rel_step: R,
    /// Largest `‖M‖₁·h` handed to a single matrix exponential.
    pub exp_chunk: R,
    /// Simulation stops once `|x|` exceeds this.
    pub overflow_guard: R,
    /// Fraction of the horizon forming the tail window of exponent estimates.
    pub tail_fraction: R,
    /// Uniform sample count added to component boundaries for exponent windows.
    pub grid_samples: usize,
    pub quad: QuadratureConfig<R>,
}

impl<R: Real> Default for IntegratorConfig<R> {
    fn default() -> Self {
        Self {
            max_step: lit(1e-2),
            rel_step: lit(1e-2),
            exp_chunk: lit(16.0),
            overflow_guard: lit(1e12),
            tail_fraction: lit(0.5),
            grid_samples: 256,
            quad: QuadratureConfig::default(),
        }
    }
}

impl<R: Real> IntegratorConfig<R> {
    pub fn step_for(&self, len: R) -> R {
        (self.rel_step * len).min(self.max_step)
    }
}

/// `Φ = e^{logscale}·unit`; the unit part is rescaled whenever its largest
/// entry leaves `[1e-2, 1e2]`. Also used for single columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<R: Real> {
    pub unit: CMat<R>,
    pub logscale: R,
}

impl<R: Real> Transition<R> {
    pub fn identity(n: usize) -> Self {
        Self { unit: identity(n), logscale: R::zero() }
    }

    pub fn from_matrix(m: CMat<R>) -> Self {
        let mut t = Self { unit: m, logscale: R::zero() };
        t.renormalize();
        t
    }

    pub fn from_vector(v: &CVec<R>) -> Self {
        Self::from_matrix(CMat::from_column_slice(v.len(), 1, v.as_slice()))
    }

    pub fn renormalize(&mut self) {
        let m = max_abs(&self.unit);
        if m > R::zero() && to_f64(m).is_finite() && (m < lit(1e-2) || m > lit(1e2)) {
            let inv = R::one() / m;
            self.unit.apply(|z| *z *= inv);
            self.logscale += m.ln();
        }
    }

    /// The represented matrix. May overflow for long horizons.
    pub fn matrix(&self) -> CMat<R> {
        let s = self.logscale.exp();
        self.unit.map(|z| z * s)
    }

    /// Column `j` of the unit part as a vector.
    pub fn unit_column(&self, j: usize) -> CVec<R> {
        self.unit.column(j).into_owned()
    }

    /// `log‖Φ‖₂`.
    pub fn log_norm(&self) -> R {
        spectral_norm(&self.unit).ln() + self.logscale
    }

    /// `self ← m·self`.
    pub fn left_mul(&mut self, m: &CMat<R>) {
        self.unit = m * &self.unit;
        self.renormalize();
    }

    /// `later ∘ self`.
    pub fn then(&self, later: &Transition<R>) -> Transition<R> {
        let mut t = Transition { unit: &later.unit * &self.unit, logscale: later.logscale + self.logscale };
        t.renormalize();
        t
    }
}

/// Propagates `state` by the flow of `coef` from `a` to `b ≥ a`.
pub fn propagate<R: Real, C: OdeCoefficient<R> + ?Sized>(
    coef: &C,
    state: &mut Transition<R>,
    a: R,
    b: R,
    cfg: &IntegratorConfig<R>,
) {
    if b <= a {
        return;
    }
    let mut cuts = vec![a];
    cuts.extend(coef.breakpoints(a, b).into_iter().filter(|t| *t > a && *t < b));
    cuts.push(b);
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        match coef.constant_on(lo, hi) {
            Some(m) => propagate_constant(&m, state, hi - lo, cfg),
            None => rk4_linear(coef, state, lo, hi, cfg.step_for(hi - lo)),
        }
    }
}

/// Propagation with a constant generator, splitting long pieces so no
/// single exponential overflows.
pub fn propagate_constant<R: Real>(m: &CMat<R>, state: &mut Transition<R>, len: R, cfg: &IntegratorConfig<R>) {
    let size = norm1(m) * len;
    if size == R::zero() {
        return;
    }
    if size <= cfg.exp_chunk {
        state.left_mul(&expm(&m.map(|z| z * len)));
        return;
    }
    let k = to_f64((size / cfg.exp_chunk).ceil()) as u64;
    let h = len / R::from_u64(k).expect("chunk count");
    let e = expm(&m.map(|z| z * h));
    for _ in 0..k {
        state.left_mul(&e);
    }
}

fn rk4_linear<R: Real, C: OdeCoefficient<R> + ?Sized>(coef: &C, state: &mut Transition<R>, a: R, b: R, step: R) {
    let n = to_f64(((b - a) / step).ceil()).max(1.0) as u64;
    let h = (b - a) / R::from_u64(n).expect("step count");
    let half = h / lit(2.0);
    let sixth = cx::<R>(h / lit(6.0));
    let two = cx::<R>(lit(2.0));
    let eta = (b - a) * lit(1e-10);
    for i in 0..n {
        let t = a + h * R::from_u64(i).expect("index");
        let y = &state.unit;
        // One-sided limits at the piece ends, which may belong to the
        // neighbouring pieces.
        let m0 = coef.eval(if i == 0 { t + eta } else { t });
        let mh = coef.eval(t + half);
        let m1 = coef.eval(if i + 1 == n { b - eta } else { t + h });
        let k1 = &m0 * y;
        let k2 = &mh * (y + k1.map(|z| z * half));
        let k3 = &mh * (y + k2.map(|z| z * half));
        let k4 = &m1 * (y + k3.map(|z| z * h));
        let inc = (k1 + k2.map(|z| z * two) + k3.map(|z| z * two) + k4).map(|z| z * sixth);
        state.unit += inc;
        state.renormalize();
    }
}

/// One RK4 step of a general right side.
pub fn rk4_step<R: Real>(f: &mut impl FnMut(R, &CVec<R>) -> CVec<R>, t: R, x: &CVec<R>, h: R) -> CVec<R> {
    let half = h / lit(2.0);
    let k1 = f(t, x);
    let k2 = f(t + half, &(x + k1.map(|z| z * half)));
    let k3 = f(t + half, &(x + k2.map(|z| z * half)));
    let k4 = f(t + h, &(x + k3.map(|z| z * h)));
    let sixth = h / lit(6.0);
    let two = cx::<R>(lit(2.0));
    x + (k1 + k2.map(|z| z * two) + k3.map(|z| z * two) + k4).map(|z| z * sixth)
}

/// Fundamental matrix of the ODE from `s` to `t`.
pub fn ode_fundamental<R: Real, C: OdeCoefficient<R> + ?Sized>(
    coef: &C,
    t: R,
    s: R,
    cfg: &IntegratorConfig<R>,
) -> Transition<R> {
    let mut st = Transition::identity(coef.dim());
    propagate(coef, &mut st, s, t, cfg);
    st
}

/// Largest spectral norm over breakpoints, piece midpoints and a uniform grid
/// on `[a, b]`.
pub fn sampled_sup_norm<R: Real, C: OdeCoefficient<R> + ?Sized>(coef: &C, a: R, b: R, grid: usize) -> R {
    let mut pts = vec![a, b];
    let bps = coef.breakpoints(a, b);
    let mut prev = a;
    for t in bps.iter().copied().chain(std::iter::once(b)) {
        pts.push(t);
        pts.push((prev + t) / lit(2.0));
        prev = t;
    }
    for i in 0..grid {
        pts.push(a + (b - a) * lit::<R>(i as f64 / grid.max(1) as f64));
    }
    pts.into_iter().fold(R::zero(), |m, t| m.max(spectral_norm(&coef.eval(t))))
}

/// `|x|` for a column transition.
pub fn log_vnorm<R: Real>(x: &Transition<R>) -> R {
    vnorm(&x.unit_column(0)).ln() + x.logscale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{cdiag_real, cmat_from_real};

    struct Rotating;
    impl OdeCoefficient<f64> for Rotating {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, t: f64) -> CMat<f64> {
            cmat_from_real(2, 2, &[0.0, 1.0 + t, -1.0 - t, 0.0])
        }
    }

    #[test]
    fn rk4_matches_closed_form_for_time_dependent_rotation() {
        // θ(t) = t + t²/2 for ẋ = (1+t)J x.
        let phi = ode_fundamental(&Rotating, 2.0, 0.0, &IntegratorConfig::default()).matrix();
        let th: f64 = 2.0 + 2.0;
        let want = cmat_from_real(2, 2, &[th.cos(), th.sin(), -th.sin(), th.cos()]);
        assert!(spectral_norm(&(phi.clone() - &want)) < 1e-7, "{phi} {want}");
    }

    #[test]
    fn long_constant_pieces_keep_their_log_scale() {
        let m = cdiag_real(&[-2.0, 0.5]);
        let mut st = Transition::identity(2);
        propagate_constant(&m, &mut st, 5000.0, &IntegratorConfig::default());
        assert!((st.log_norm() - 2500.0f64).abs() < 1e-8);
        assert!(max_abs(&st.unit) <= 100.0 && max_abs(&st.unit) >= 1e-2);
    }

    #[test]
    fn transition_composition() {
        let a = Transition::from_matrix(cmat_from_real(2, 2, &[1e3, 1.0, 0.0, 2.0]));
        let b = Transition::from_matrix(cmat_from_real(2, 2, &[0.5, 0.0, 3.0, 1e-4]));
        let ab = a.then(&b).matrix();
        let want = b.matrix() * a.matrix();
        assert!(spectral_norm(&(ab - &want)) < 1e-10 * spectral_norm(&want));
    }
}
