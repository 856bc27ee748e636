use super::coefficient::CoefficientMap;
use super::stability::{growth_rate, is_strongly_stable, is_strongly_unstable};
use super::transition::propagate_on_scale;
use crate::calculus::{log_exp_generalized, ScalarCoefficient};
use crate::error::{Error, Result};
use crate::linalg::{eig, hermitian_defect, identity, spectral_norm};
use crate::num::{cabs, cx, lit, to_f64, vnorm, CMat, CVec, Cplx, Real};
use crate::ode::{IntegratorConfig, Transition};
use crate::timescale::{GrainProfile, TimeScale};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `V(x) = x*Bx` with `B` Hermitian. A Chetaev form carries its signature
/// split `(ℓ, n − ℓ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm<R: Real> {
    pub matrix: CMat<R>,
    pub split: Option<(usize, usize)>,
}

impl<R: Real> QuadraticForm<R> {
    pub fn new(matrix: CMat<R>, split: Option<(usize, usize)>) -> Result<Self> {
        let defect = hermitian_defect(&matrix);
        if defect > lit::<R>(1e-12) * spectral_norm(&matrix).max(R::one()) {
            return Err(Error::NotHermitian { defect: to_f64(defect) });
        }
        if let Some((l, m)) = split {
            if l + m != matrix.nrows() || l == 0 {
                return Err(Error::InvalidArgument(format!("bad signature split ({l}, {m})")));
            }
        }
        Ok(Self { matrix, split })
    }

    /// `|x|²`.
    pub fn identity(n: usize) -> Self {
        Self { matrix: identity(n), split: None }
    }

    /// `|x₁..x_ℓ|² − |x_{ℓ+1}..x_n|²`.
    pub fn chetaev(l: usize, n: usize) -> Result<Self> {
        let d: Vec<R> = (0..n).map(|i| if i < l { R::one() } else { -R::one() }).collect();
        Self::new(crate::num::cdiag_real(&d), Some((l, n - l)))
    }

    pub fn value(&self, x: &CVec<R>) -> R {
        (x.adjoint() * &self.matrix * x)[(0, 0)].re
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The same form in `x = Sy` coordinates: `S^{-*} B S^{-1}`.
    pub fn in_coordinates(&self, s_inv: &CMat<R>) -> Self {
        let m = s_inv.adjoint() * &self.matrix * s_inv;
        let sym = (&m + m.adjoint()).map(|z| z * lit::<R>(0.5));
        Self { matrix: sym, split: self.split }
    }
}

/// Trajectory Δ-derivative of a time-independent quadratic form.
pub fn delta_derivative_of_form<R: Real>(
    ts: &TimeScale<R>,
    v: &QuadraticForm<R>,
    f: &mut impl FnMut(R, &CVec<R>) -> CVec<R>,
    t: R,
    x: &CVec<R>,
) -> Result<R> {
    let mu = ts.mu(t)?;
    let fx = f(t, x);
    if mu > R::zero() {
        let next = x + fx.map(|z| z * mu);
        Ok((v.value(&next) - v.value(x)) / mu)
    } else {
        Ok((x.adjoint() * &v.matrix * fx)[(0, 0)].re * lit(2.0))
    }
}

/// Sampling of `(t, x)` for the certificate checkers: times in
/// `[t_start, horizon]`, states on logarithmic shells over
/// `[radius·min_radius_factor, radius]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSpec<R: Real> {
    pub t_start: R,
    pub horizon: R,
    pub radius: R,
    pub min_radius_factor: R,
    pub radii: usize,
    pub directions_per_plane: usize,
    pub random_directions: usize,
    pub seed: u64,
    pub time_samples: usize,
    /// `c` in the value bound `V ≥ c|x|²`.
    pub value_margin: R,
    /// `c` in the derivative bound `∓V^Δ ≥ c|x|²`.
    pub derivative_margin: R,
}

impl<R: Real> SampleSpec<R> {
    pub fn new(t_start: R, horizon: R, radius: R) -> Self {
        Self {
            t_start,
            horizon,
            radius,
            min_radius_factor: lit(1e-3),
            radii: 8,
            directions_per_plane: 16,
            random_directions: 16,
            seed: 0,
            time_samples: 32,
            value_margin: lit(1e-6),
            derivative_margin: lit(1e-6),
        }
    }

    pub fn with_margins(mut self, value: R, derivative: R) -> Self {
        self.value_margin = value;
        self.derivative_margin = derivative;
        self
    }

    fn times(&self, ts: &TimeScale<R>) -> Result<Vec<R>> {
        let start = ts.ceil_scale(self.t_start);
        let end = ts.floor_scale(self.horizon.max(start))?;
        let mut v = vec![start];
        let k = self.time_samples.max(1);
        for i in 1..=k {
            v.push(ts.floor_scale(start + (end - start) * lit::<R>(i as f64 / k as f64))?);
        }
        v.extend(ts.scattered_points(start, end).take(k).map(|(t, _)| t));
        let mut dense = 0;
        for sp in ts.spans(start, end) {
            if dense >= k {
                break;
            }
            let hi = sp.end.unwrap_or(end).min(end);
            let lo = sp.start.max(start);
            if hi > lo {
                v.push((lo + hi) / lit(2.0));
                dense += 1;
            }
        }
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        v.dedup();
        Ok(v)
    }

    fn directions(&self, form: &QuadraticForm<R>) -> Vec<CVec<R>> {
        let n = form.dim();
        let mut dirs = Vec::new();
        for i in 0..n {
            let mut e = CVec::zeros(n);
            e[i] = cx(R::one());
            dirs.push(e.clone());
            dirs.push(-e);
        }
        let m = self.directions_per_plane;
        for i in 0..n {
            for j in i + 1..n {
                for k in 0..m {
                    let th = lit::<R>(2.0 * std::f64::consts::PI * k as f64 / m as f64);
                    let mut e = CVec::zeros(n);
                    e[i] = cx(th.cos());
                    e[j] = cx(th.sin());
                    dirs.push(e);
                }
            }
        }
        let eig = form.matrix.clone().symmetric_eigen();
        for c in eig.eigenvectors.column_iter() {
            dirs.push(c.into_owned());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.random_directions {
            let v = CVec::from_fn(n, |_, _| {
                Cplx::new(lit::<R>(rng.random_range(-1.0..1.0)), lit::<R>(rng.random_range(-1.0..1.0)))
            });
            dirs.push(v);
        }
        dirs.into_iter()
            .filter_map(|d| {
                let l = vnorm(&d);
                (l > R::zero()).then(|| d.map(|z| z / l))
            })
            .collect()
    }

    fn radii(&self) -> Vec<R> {
        let k = self.radii.max(1);
        let lo = (self.radius * self.min_radius_factor).ln();
        let hi = self.radius.ln();
        (0..k)
            .map(|i| if k == 1 { self.radius } else { (lo + (hi - lo) * lit::<R>(i as f64 / (k - 1) as f64)).exp() })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Value,
    Derivative,
    /// No sample with `V > 0` on the smallest shell.
    NoBoundaryWitness,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation<R: Real> {
    pub kind: ViolationKind,
    pub t: R,
    pub x: CVec<R>,
    pub observed: R,
    pub required: R,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport<R: Real> {
    pub passed: bool,
    /// Samples at which the conditions were evaluated.
    pub checked: usize,
    /// Smallest `(observed − required)/|x|²` with the sign making positive good.
    pub worst_margin: R,
    pub violation_count: usize,
    /// The first violations, capped.
    pub violations: Vec<Violation<R>>,
}

const VIOLATION_CAP: usize = 32;

struct Collector<R: Real> {
    checked: usize,
    worst: R,
    count: usize,
    list: Vec<Violation<R>>,
}

impl<R: Real> Collector<R> {
    fn new() -> Self {
        Self { checked: 0, worst: lit(f64::INFINITY), count: 0, list: Vec::new() }
    }

    /// Records `observed ≥ required` as a condition on a sample of squared norm `r2`.
    fn at_least(&mut self, kind: ViolationKind, t: R, x: &CVec<R>, observed: R, required: R, r2: R) {
        let slack = (observed - required) / r2;
        self.worst = self.worst.min(slack);
        if slack < -lit::<R>(1e-12) {
            self.count += 1;
            if self.list.len() < VIOLATION_CAP {
                self.list.push(Violation { kind, t, x: x.clone(), observed, required });
            }
        }
    }

    fn finish(self) -> CertificateReport<R> {
        CertificateReport {
            passed: self.count == 0 && self.checked > 0,
            checked: self.checked,
            worst_margin: if self.checked == 0 { R::zero() } else { self.worst },
            violation_count: self.count,
            violations: self.list,
        }
    }
}

/// Checks `V ≥ c₊|x|²` and `V^Δ ≤ −c₋|x|²` on the sample grid.
pub fn check_strict_lyapunov<R: Real>(
    ts: &TimeScale<R>,
    v: &QuadraticForm<R>,
    mut f: impl FnMut(R, &CVec<R>) -> CVec<R>,
    spec: &SampleSpec<R>,
) -> Result<CertificateReport<R>> {
    let mut col = Collector::new();
    let dirs = spec.directions(v);
    let radii = spec.radii();
    for t in spec.times(ts)? {
        for r in &radii {
            for d in &dirs {
                let x = d.map(|z| z * *r);
                let r2 = *r * *r;
                col.checked += 1;
                col.at_least(ViolationKind::Value, t, &x, v.value(&x), spec.value_margin * r2, r2);
                let dv = delta_derivative_of_form(ts, v, &mut f, t, &x)?;
                col.at_least(ViolationKind::Derivative, t, &x, -dv, spec.derivative_margin * r2, r2);
            }
        }
    }
    Ok(col.finish())
}

/// Checks `V^Δ ≥ c|x|²` on the sampled part of `{V > 0}` and that `V > 0` is
/// attained on the smallest shell.
pub fn check_chetaev<R: Real>(
    ts: &TimeScale<R>,
    v: &QuadraticForm<R>,
    mut f: impl FnMut(R, &CVec<R>) -> CVec<R>,
    spec: &SampleSpec<R>,
) -> Result<CertificateReport<R>> {
    if v.split.is_none() {
        return Err(Error::NoSignSplit);
    }
    let mut col = Collector::new();
    let dirs = spec.directions(v);
    let radii = spec.radii();
    let times = spec.times(ts)?;
    let r0 = radii[0];
    if !dirs.iter().any(|d| v.value(&d.map(|z| z * r0)) > R::zero()) {
        col.count += 1;
        col.list.push(Violation {
            kind: ViolationKind::NoBoundaryWitness,
            t: times[0],
            x: CVec::zeros(v.dim()),
            observed: R::zero(),
            required: R::zero(),
        });
    }
    for t in times {
        for r in &radii {
            for d in &dirs {
                let x = d.map(|z| z * *r);
                if v.value(&x) <= R::zero() {
                    continue;
                }
                let r2 = *r * *r;
                col.checked += 1;
                let dv = delta_derivative_of_form(ts, v, &mut f, t, &x)?;
                col.at_least(ViolationKind::Derivative, t, &x, dv, spec.derivative_margin * r2, r2);
            }
        }
    }
    Ok(col.finish())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertificateMode {
    Stable,
    Unstable,
}

/// A quadratic certificate for `x^Δ = Ax`: `x = Sy` diagonalizes `A` and
/// `form` is `|y|²` or `|y⁽¹⁾|² − |y⁽²⁾|²` in `y` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCertificate<R: Real> {
    pub mode: CertificateMode,
    pub transform: CMat<R>,
    pub transform_inverse: CMat<R>,
    pub form: QuadraticForm<R>,
    /// The form in `x` coordinates.
    pub form_x: QuadraticForm<R>,
    /// `∓V^Δ ≥ κ|y|²` along the linear system.
    pub kappa: R,
    /// `‖S‖·‖S⁻¹‖`.
    pub condition: R,
    /// Tail start; the checks apply from here on.
    pub t_start: R,
    /// Eigenvalues in the order of the `y` coordinates.
    pub eigenvalues: Vec<Cplx<R>>,
    /// Nilpotent offset of the Jordan blocks; only diagonalizable matrices
    /// are supported, so it does not enter the form.
    pub delta: R,
}

impl<R: Real> QuadraticCertificate<R> {
    /// Checker margins with half of `κ` left for nonlinear terms.
    pub fn margins(&self) -> (R, R) {
        let s2 = spectral_norm(&self.transform).powi(2);
        (lit::<R>(0.5) / s2, self.kappa / (lit::<R>(2.0) * s2))
    }

    pub fn sample_spec(&self, horizon: R, radius: R) -> SampleSpec<R> {
        let (a, b) = self.margins();
        SampleSpec::new(self.t_start, horizon, radius).with_margins(a, b)
    }

    /// Runs the checker matching the mode on `x^Δ = f(t, x)`.
    pub fn check(
        &self,
        ts: &TimeScale<R>,
        f: impl FnMut(R, &CVec<R>) -> CVec<R>,
        spec: &SampleSpec<R>,
    ) -> Result<CertificateReport<R>> {
        match self.mode {
            CertificateMode::Stable => check_strict_lyapunov(ts, &self.form_x, f, spec),
            CertificateMode::Unstable => check_chetaev(ts, &self.form_x, f, spec),
        }
    }
}

fn conditions<R: Real>(profile: &GrainProfile<R>) -> Vec<Option<R>> {
    let mut v: Vec<Option<R>> = profile.attained_gaps.iter().map(|g| Some(*g)).collect();
    if profile.has_dense_tail {
        v.push(None);
    }
    v
}

pub fn build_quadratic_certificate<R: Real>(
    ts: &TimeScale<R>,
    a: &CMat<R>,
    profile: &GrainProfile<R>,
    delta: R,
    mode: CertificateMode,
) -> Result<QuadraticCertificate<R>> {
    let e = eig(a)?;
    let conds = conditions(profile);
    let n = a.nrows();
    let (perm, form, kappa) = match mode {
        CertificateMode::Stable => {
            let s = is_strongly_stable(a, profile)?;
            if !s.holds {
                return Err(Error::ModeConditionFails("matrix is not strongly stable on this scale".into()));
            }
            let mut kappa = lit::<R>(f64::INFINITY);
            for &l in &e.values {
                for &g in &conds {
                    kappa = kappa.min(-growth_rate(l, g));
                }
            }
            ((0..n).collect::<Vec<_>>(), QuadraticForm::identity(n), kappa)
        }
        CertificateMode::Unstable => {
            let u = is_strongly_unstable(a, profile)?;
            let Some((first, second)) = u.split else {
                return Err(Error::ModeConditionFails("matrix is not strongly unstable on this scale".into()));
            };
            // Map the split (indices into the sorted eigenvalue list) onto
            // eigenvector columns.
            let mut used = vec![false; n];
            let mut col_of = |lam: Cplx<R>| {
                let k = (0..n)
                    .filter(|&k| !used[k])
                    .min_by(|&i, &j| {
                        cabs(e.values[i] - lam).partial_cmp(&cabs(e.values[j] - lam)).expect("finite eigenvalues")
                    })
                    .expect("eigenvalue present");
                used[k] = true;
                k
            };
            let perm: Vec<usize> =
                first.iter().chain(second.iter()).map(|&i| col_of(u.eigenvalues[i])).collect();
            let mut kappa = lit::<R>(f64::INFINITY);
            for &g in &conds {
                let amin = first.iter().map(|&k| growth_rate(u.eigenvalues[k], g)).fold(lit(f64::INFINITY), R::min);
                let bmax = second.iter().map(|&j| growth_rate(u.eigenvalues[j], g)).fold(R::zero(), R::max);
                kappa = kappa.min((amin - bmax) / lit(2.0));
            }
            (perm, QuadraticForm::chetaev(first.len(), n)?, kappa)
        }
    };
    let s = CMat::from_fn(n, n, |i, j| e.vectors[(i, perm[j])]);
    let s_inv = CMat::from_fn(n, n, |i, j| e.inverse[(perm[i], j)]);
    let eigenvalues: Vec<Cplx<R>> = perm.iter().map(|&k| e.values[k]).collect();
    let condition = spectral_norm(&s) * spectral_norm(&s_inv);
    let form_x = form.in_coordinates(&s_inv);
    Ok(QuadraticCertificate {
        mode,
        transform: s,
        transform_inverse: s_inv,
        form,
        form_x,
        kappa,
        condition,
        t_start: ts.tail_start(),
        eigenvalues,
        delta,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpperFunctionReport<R: Real> {
    pub passed: bool,
    pub pairs: usize,
    /// Smallest `log(C|e_u(t,s)|) − log‖Φ(t,s)‖` over the pairs.
    pub worst_log_margin: R,
    pub worst_pair: (R, R),
}

/// Verifies `‖Φ(t,s)‖ ≤ C|e_u(t,s)|` on all pairs `s ≤ t` of a snapped grid of
/// `grid + 1` times over `[0, horizon]`.
pub fn upper_function_check<R: Real>(
    ts: &TimeScale<R>,
    a: &CoefficientMap<R>,
    u: &ScalarCoefficient<R>,
    c: R,
    horizon: R,
    grid: usize,
    cfg: &IntegratorConfig<R>,
) -> Result<UpperFunctionReport<R>> {
    if c <= R::zero() {
        return Err(Error::InvalidArgument("upper function constant must be positive".into()));
    }
    let t0 = ts.floor_scale(R::zero())?;
    let mut times = vec![t0];
    for i in 1..=grid {
        let t = ts.floor_scale(t0 + (horizon - t0) * lit::<R>(i as f64 / grid as f64))?;
        if t > *times.last().expect("nonempty") {
            times.push(t);
        }
    }
    let mut cum = vec![R::zero()];
    for w in times.windows(2) {
        let l = log_exp_generalized(ts, u, w[1], w[0], &cfg.quad)?.re;
        cum.push(cum.last().copied().expect("nonempty") + l);
    }
    let lc = c.ln();
    let mut worst = lit::<R>(f64::INFINITY);
    let mut worst_pair = (t0, t0);
    let mut pairs = 0;
    for (i, &s) in times.iter().enumerate() {
        let mut st = Transition::identity(a.dim());
        let later = &times[i..];
        let mut k = i;
        propagate_on_scale(ts, a, &mut st, s, *later.last().expect("nonempty"), cfg, later, |t, phi| {
            while times[k] < t {
                k += 1;
            }
            let margin = lc + cum[k] - cum[i] - phi.log_norm();
            pairs += 1;
            if margin < worst {
                worst = margin;
                worst_pair = (s, t);
            }
        })?;
    }
    let tol = lit::<R>(1e-9) * worst_pair.1.abs().max(R::one());
    Ok(UpperFunctionReport { passed: worst >= -tol, pairs, worst_log_margin: worst, worst_pair })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{cdiag_real, cmat_from_real, cvec_from_real};
    use crate::timescale::{Component, GapBound, Tail};

    fn gaps(g: &[f64], dense: bool) -> GrainProfile<f64> {
        GrainProfile {
            attained_gaps: g.to_vec(),
            has_dense_tail: dense,
            sup_gap: GapBound::Finite(g.iter().cloned().fold(0.0, f64::max)),
            exact: true,
        }
    }

    fn scale_with_gap(interval: f64, gap: f64) -> TimeScale<f64> {
        TimeScale::new(
            vec![],
            Tail::Periodic { period: interval + gap, pattern: vec![Component::Interval { start: 0.0, end: interval }] },
        )
        .unwrap()
    }

    #[test]
    fn delta_derivative_examples() {
        let v = QuadraticForm::<f64>::identity(2);
        let x = cvec_from_real(&[1.0, 2.0]);
        let r = TimeScale::<f64>::reals();
        let d = delta_derivative_of_form(&r, &v, &mut |_, x: &CVec<f64>| -x.clone(), 5.0, &x).unwrap();
        assert!((d + 10.0).abs() < 1e-12);
        let z = TimeScale::<f64>::integers();
        let d = delta_derivative_of_form(&z, &v, &mut |_, x: &CVec<f64>| -x.clone(), 5.0, &x).unwrap();
        assert!((d + 5.0).abs() < 1e-12);
        let d = delta_derivative_of_form(&z, &v, &mut |_, x: &CVec<f64>| x.clone(), 5.0, &x).unwrap();
        assert!((d - 15.0).abs() < 1e-12);
    }

    #[test]
    fn strict_lyapunov_checker_examples() {
        let r = TimeScale::<f64>::reals();
        let v = QuadraticForm::identity(1);
        let spec = SampleSpec::new(1.0, 10.0, 1.0).with_margins(0.5, 2.0);
        assert!(check_strict_lyapunov(&r, &v, |_, x| -x.clone(), &spec).unwrap().passed);

        let six = TimeScale::<f64>::lattice(6.0).unwrap();
        let a = cdiag_real(&[-2.0, -0.5]);
        let rep = check_strict_lyapunov(&six, &QuadraticForm::identity(2), |_, x| &a * x, &SampleSpec::new(0.0, 60.0, 1.0)).unwrap();
        assert!(!rep.passed);
        assert!(rep.violations.iter().all(|v| v.kind == ViolationKind::Derivative));

        let z = TimeScale::<f64>::integers();
        let spec = SampleSpec::new(0.0, 20.0, 1e-2).with_margins(0.5, 0.5);
        let rep = check_strict_lyapunov(&z, &QuadraticForm::identity(1), |_, x| -x + x.map(|c| c * 0.01 * vnorm(x)), &spec).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn chetaev_checker_examples() {
        let r = TimeScale::<f64>::reals();
        let v = QuadraticForm::chetaev(1, 2).unwrap();
        let a = cdiag_real(&[1.0, -1.0]);
        let spec = SampleSpec::new(1.0, 10.0, 1.0).with_margins(0.0, 2.0);
        assert!(check_chetaev(&r, &v, |_, x| &a * x, &spec).unwrap().passed);
        assert!(matches!(
            check_chetaev(&r, &QuadraticForm::identity(2), |_, x| x.clone(), &spec),
            Err(Error::NoSignSplit)
        ));
        let z = TimeScale::<f64>::integers();
        let v = QuadraticForm::chetaev(1, 1).unwrap();
        let spec = SampleSpec::new(0.0, 10.0, 1.0).with_margins(0.0, 3.0);
        assert!(check_chetaev(&z, &v, |_, x| x.clone(), &spec).unwrap().passed);
    }

    #[test]
    fn certificate_examples() {
        let ts = TimeScale::<f64>::lattice(0.1).unwrap();
        let a = cdiag_real(&[-1.0, -2.0]);
        let c = build_quadratic_certificate(&ts, &a, &gaps(&[0.1], false), 0.0, CertificateMode::Stable).unwrap();
        assert!(spectral_norm(&(c.transform.clone() - identity::<f64>(2))) < 1e-12);
        let spec = c.sample_spec(10.0, 1.0);
        assert!(c.check(&ts, |_, x| &a * x, &spec).unwrap().passed);

        let r = TimeScale::<f64>::reals();
        let rot = cmat_from_real(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(matches!(
            build_quadratic_certificate(&r, &rot, &gaps(&[], true), 0.0, CertificateMode::Stable),
            Err(Error::ModeConditionFails(_))
        ));

        let a = cdiag_real(&[-1.0, 1.0]);
        let c = build_quadratic_certificate(&r, &a, &gaps(&[], true), 0.0, CertificateMode::Unstable).unwrap();
        assert_eq!(c.eigenvalues[0].re, 1.0);
        let x = cvec_from_real(&[0.3, 2.0]);
        assert!((c.form_x.value(&x) - (4.0 - 0.09)).abs() < 1e-12);
        assert!(c.check(&r, |_, x| &a * x, &c.sample_spec(10.0, 1.0)).unwrap().passed);
    }

    #[test]
    fn certificate_on_mixed_scale_with_complex_eigenvalues() {
        let ts = scale_with_gap(0.5, 0.5);
        let a = cmat_from_real(2, 2, &[-1.0, 0.5, -0.5, -1.0]);
        let p = ts.grain_profile(10.0);
        let c = build_quadratic_certificate(&ts, &a, &p, 0.0, CertificateMode::Stable).unwrap();
        let rep = c.check(&ts, |_, x| &a * x, &c.sample_spec(10.0, 1.0)).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn upper_function_examples() {
        let cfg = IntegratorConfig::default();
        let r = TimeScale::<f64>::reals();
        let rep = upper_function_check(&r, &CoefficientMap::diagonal(&[-1.0]), &ScalarCoefficient::real(-1.0), 1.0, 10.0, 8, &cfg).unwrap();
        assert!(rep.passed);
        let six = TimeScale::<f64>::lattice(6.0).unwrap();
        let u = ScalarCoefficient::with_exponential_rate(&six, cx(11f64.ln() / 6.0));
        let rep = upper_function_check(&six, &CoefficientMap::diagonal(&[-2.0, -0.5]), &u, 1.0, 120.0, 10, &cfg).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.worst_log_margin.abs() < 1e-9);
    }
}
