//! Scalar Δ-calculus: cylinder transformation, generalized exponential,
//! regressivity, and the comparison and Grönwall bounds.
//!
//! Everything is evaluated over ℂ. For real data with `1 + μp < 0` the
//! cylinder transform picks the principal logarithm, so only the real parts of
//! the resulting rates are branch independent.

use crate::error::{Error, Result};
use crate::num::{cabs, cexp, cx, lit, principal_ln, to_f64, wrap_angle, Cplx, Real};
use crate::timescale::{QuadratureConfig, Tail, TimeScale};
use std::fmt;
use std::sync::Arc;

/// Scalar coefficient `p(t)` on a time scale.
#[derive(Clone)]
pub enum ScalarCoefficient<R: Real> {
    Constant(Cplx<R>),
    /// `(start, value)` pairs sorted by start; the value holds until the next
    /// start. Points before the first start take the first value.
    Piecewise(Vec<(R, Cplx<R>)>),
    Callback(Arc<dyn Fn(R) -> Cplx<R> + Send + Sync>),
}

impl<R: Real> fmt::Debug for ScalarCoefficient<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Piecewise(v) => write!(f, "Piecewise({} pieces)", v.len()),
            Self::Callback(_) => write!(f, "Callback"),
        }
    }
}

impl<R: Real> ScalarCoefficient<R> {
    pub fn real(c: R) -> Self {
        Self::Constant(cx(c))
    }

    pub fn callback(f: impl Fn(R) -> Cplx<R> + Send + Sync + 'static) -> Self {
        Self::Callback(Arc::new(f))
    }

    /// The coefficient whose cylinder transform is the constant `rate`:
    /// `(e^{rate·μ} − 1)/μ` at scattered points and `rate` at dense ones.
    pub fn with_exponential_rate(ts: &TimeScale<R>, rate: Cplx<R>) -> Self {
        let ts = ts.clone();
        Self::callback(move |t| {
            let mu = ts.mu(t).unwrap_or(R::zero());
            if mu > R::zero() {
                (cexp(rate * mu) - cx(R::one())) / mu
            } else {
                rate
            }
        })
    }

    pub fn at(&self, t: R) -> Cplx<R> {
        match self {
            Self::Constant(c) => *c,
            Self::Piecewise(v) => {
                let i = v.partition_point(|(s, _)| *s <= t);
                v[i.saturating_sub(1)].1
            }
            Self::Callback(f) => f(t),
        }
    }
}

/// `ξ_h(z) = log(1 + zh)/h` for `h > 0`, `z` for `h = 0`.
pub fn cylinder<R: Real>(z: Cplx<R>, h: R) -> Result<Cplx<R>> {
    if h == R::zero() {
        return Ok(z);
    }
    let w = cx::<R>(R::one()) + z * h;
    if cabs(w) <= R::default_epsilon() * (R::one() + cabs(z) * h) {
        return Err(Error::NonRegressiveValue { re: to_f64(z.re), im: to_f64(z.im), h: to_f64(h) });
    }
    Ok(principal_ln(w) / h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarRegressivity<R: Real> {
    PositivelyRegressive,
    Regressive,
    Fails(R),
}

/// Scans the scattered points up to `horizon`. For periodic tails the scan
/// covers at least one full period past the start of the tail.
pub fn check_regressive_scalar<R: Real>(
    ts: &TimeScale<R>,
    p: &ScalarCoefficient<R>,
    horizon: R,
) -> ScalarRegressivity<R> {
    let mut end = horizon;
    if let Tail::Periodic { period, .. } = ts.tail() {
        end = end.max(ts.tail_start() + *period + *period);
    }
    let mut positive = true;
    for (t, mu) in ts.scattered_points(ts.min(), end) {
        let z = p.at(t);
        let w = cx::<R>(R::one()) + z * mu;
        if cabs(w) <= R::default_epsilon() * (R::one() + cabs(z) * mu) {
            return ScalarRegressivity::Fails(t);
        }
        let tol = lit::<R>(1e-14) * (R::one() + cabs(z) * mu);
        if !(w.im.abs() <= tol && w.re > R::zero()) {
            positive = false;
        }
    }
    if positive {
        ScalarRegressivity::PositivelyRegressive
    } else {
        ScalarRegressivity::Regressive
    }
}

/// `∫_s^t ξ_μ(p) Δτ`, the logarithm of the generalized exponential, with the
/// imaginary part reduced to (−π, π].
pub fn log_exp_generalized<R: Real>(
    ts: &TimeScale<R>,
    p: &ScalarCoefficient<R>,
    t: R,
    s: R,
    quad: &QuadratureConfig<R>,
) -> Result<Cplx<R>> {
    if t < s {
        return Err(Error::InvalidArgument("generalized exponential needs t ≥ s".into()));
    }
    let l: Cplx<R> = ts.try_delta_integral_with(
        |tau, mu| cylinder(p.at(tau), mu),
        s,
        t,
        quad,
    )?;
    Ok(Cplx::new(l.re, wrap_angle(l.im)))
}

/// The generalized exponential `e_p(t, s)`.
pub fn exp_generalized<R: Real>(
    ts: &TimeScale<R>,
    p: &ScalarCoefficient<R>,
    t: R,
    s: R,
    quad: &QuadratureConfig<R>,
) -> Result<Cplx<R>> {
    Ok(cexp(log_exp_generalized(ts, p, t, s, quad)?))
}

/// `x0·e_p(t,t0) + ∫_{t0}^t e_p(t,σ(τ)) f(τ) Δτ`. Cost is quadratic in the
/// number of quadrature nodes.
pub fn comparison_bound<R: Real>(
    ts: &TimeScale<R>,
    p: &ScalarCoefficient<R>,
    f: &ScalarCoefficient<R>,
    x0: R,
    t0: R,
    t: R,
    quad: &QuadratureConfig<R>,
) -> Result<R> {
    for x in [t0, t] {
        if !ts.contains(x) {
            return Err(Error::EndpointNotInScale { t: to_f64(x) });
        }
    }
    for (tau, mu) in ts.scattered_points(t0, t) {
        let w = cx::<R>(R::one()) + p.at(tau) * mu;
        if !(w.re > R::zero() && w.im.abs() <= lit::<R>(1e-12) * cabs(w)) {
            return Err(Error::NotPositivelyRegressive { t: to_f64(tau) });
        }
    }
    let head = exp_generalized(ts, p, t, t0, quad)? * x0;
    let integral: Cplx<R> = ts.try_delta_integral_with(
        |tau, mu| Ok(exp_generalized(ts, p, t, if mu > R::zero() { ts.sigma(tau)? } else { tau }, quad)? * f.at(tau)),
        t0,
        t,
        quad,
    )?;
    Ok((head + integral).re)
}

/// `g(t) + ∫_{t0}^t e_p(t,σ(s)) g(s) p(s) Δs` for a nonnegative gain `p`.
pub fn gronwall_bound<R: Real>(
    ts: &TimeScale<R>,
    g: &ScalarCoefficient<R>,
    p: &ScalarCoefficient<R>,
    t0: R,
    t: R,
    quad: &QuadratureConfig<R>,
) -> Result<R> {
    for x in [t0, t] {
        if !ts.contains(x) {
            return Err(Error::EndpointNotInScale { t: to_f64(x) });
        }
    }
    let integral: Cplx<R> = ts.try_delta_integral_with(
        |s, mu| {
            let ps = p.at(s);
            if ps.re < R::zero() {
                return Err(Error::NegativeGain { t: to_f64(s) });
            }
            Ok(exp_generalized(ts, p, t, if mu > R::zero() { ts.sigma(s)? } else { s }, quad)? * g.at(s) * ps)
        },
        t0,
        t,
        quad,
    )?;
    Ok(g.at(t).re + integral.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timescale::{Component, TimeScale};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn q() -> QuadratureConfig<f64> {
        QuadratureConfig::default()
    }

    #[test]
    fn cylinder_examples() {
        let z = Cplx::new(0.3, -1.2);
        assert_eq!(cylinder(z, 0.0).unwrap(), z);
        assert_relative_eq!(cylinder(cx(1.0), 1.0).unwrap().re, 2f64.ln(), epsilon = 1e-15);
        let c = cylinder(cx(-2.0), 6.0).unwrap();
        assert_relative_eq!(c.re, 11f64.ln() / 6.0, epsilon = 1e-15);
        assert_relative_eq!(c.im, PI / 6.0, epsilon = 1e-15);
        assert!(matches!(cylinder(cx(-1.0), 1.0), Err(Error::NonRegressiveValue { .. })));
    }

    #[test]
    fn regressivity_examples() {
        let z = TimeScale::<f64>::integers();
        let r = TimeScale::<f64>::reals();
        let six = TimeScale::<f64>::lattice(6.0).unwrap();
        assert!(matches!(check_regressive_scalar(&z, &ScalarCoefficient::real(-1.0), 10.0), ScalarRegressivity::Fails(_)));
        assert_eq!(
            check_regressive_scalar(&r, &ScalarCoefficient::real(-1.0), 10.0),
            ScalarRegressivity::PositivelyRegressive
        );
        assert_eq!(check_regressive_scalar(&six, &ScalarCoefficient::real(-2.0), 60.0), ScalarRegressivity::Regressive);
    }

    #[test]
    fn exponential_examples() {
        let r = TimeScale::<f64>::reals();
        let e = exp_generalized(&r, &ScalarCoefficient::real(0.7), 2.5, 0.5, &q()).unwrap();
        assert_relative_eq!(e.re, (0.7f64 * 2.0).exp(), max_relative = 1e-12);
        let z = TimeScale::<f64>::integers();
        assert_relative_eq!(exp_generalized(&z, &ScalarCoefficient::real(1.0), 3.0, 0.0, &q()).unwrap().re, 8.0, max_relative = 1e-14);
        let six = TimeScale::<f64>::lattice(6.0).unwrap();
        let e = exp_generalized(&six, &ScalarCoefficient::real(-2.0), 6.0, 0.0, &q()).unwrap();
        assert_relative_eq!(cabs(e), 11.0, max_relative = 1e-14);
        assert_relative_eq!(e.re, -11.0, max_relative = 1e-14);
    }

    #[test]
    fn comparison_examples() {
        let z = TimeScale::<f64>::integers();
        let one = ScalarCoefficient::real(1.0);
        let zero = ScalarCoefficient::real(0.0);
        assert_relative_eq!(comparison_bound(&z, &one, &one, 0.0, 2.0, 5.0, &q()).unwrap(), 7.0, max_relative = 1e-14);
        assert_relative_eq!(comparison_bound(&z, &one, &zero, 1.5, 0.0, 4.0, &q()).unwrap(), 24.0, max_relative = 1e-14);
        let r = TimeScale::<f64>::reals();
        assert_relative_eq!(comparison_bound(&r, &zero, &one, 0.0, 0.5, 2.0, &q()).unwrap(), 1.5, max_relative = 1e-12);
        assert!(matches!(
            comparison_bound(&TimeScale::lattice(6.0).unwrap(), &ScalarCoefficient::real(-2.0), &one, 0.0, 0.0, 6.0, &q()),
            Err(Error::NotPositivelyRegressive { .. })
        ));
    }

    #[test]
    fn gronwall_examples() {
        let z = TimeScale::<f64>::integers();
        let one = ScalarCoefficient::real(1.0);
        for n in 0..8 {
            assert_relative_eq!(gronwall_bound(&z, &one, &one, 0.0, n as f64, &q()).unwrap(), 2f64.powi(n), max_relative = 1e-14);
        }
        let g = ScalarCoefficient::callback(|t: f64| cx(1.0 + t));
        assert_relative_eq!(gronwall_bound(&z, &g, &ScalarCoefficient::real(0.0), 0.0, 4.0, &q()).unwrap(), 5.0);
        let r = TimeScale::<f64>::reals();
        assert_relative_eq!(gronwall_bound(&r, &one, &one, 0.0, 1.5, &q()).unwrap(), 1.5f64.exp(), max_relative = 1e-8);
        assert!(matches!(
            gronwall_bound(&z, &one, &ScalarCoefficient::real(-0.5), 0.0, 3.0, &q()),
            Err(Error::NegativeGain { .. })
        ));
    }

    #[test]
    fn rate_coefficient_has_constant_cylinder() {
        let six = TimeScale::<f64>::lattice(6.0).unwrap();
        let u = ScalarCoefficient::with_exponential_rate(&six, cx(11f64.ln() / 6.0));
        assert_relative_eq!(u.at(12.0).re, 10.0 / 6.0, max_relative = 1e-14);
        let e = exp_generalized(&six, &u, 18.0, 0.0, &q()).unwrap();
        assert_relative_eq!(e.re, 1331.0, max_relative = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mixed_scale() -> impl Strategy<Value = TimeScale<f64>> {
            (0.5f64..2.0, 0.2f64..0.8).prop_map(|(period, frac)| {
                TimeScale::new(
                    vec![],
                    Tail::Periodic {
                        period,
                        pattern: vec![
                            Component::Interval { start: 0.0, end: frac * period },
                            Component::Point((frac + 0.5 * (1.0 - frac)) * period),
                        ],
                    },
                )
                .unwrap()
            })
        }

        proptest! {
            #[test]
            fn semigroup(ts in mixed_scale(), p in -0.9f64..2.0, a in 0.0f64..4.0, b in 0.0f64..4.0, c in 0.0f64..4.0) {
                let mut v = [ts.floor_scale(a).unwrap(), ts.floor_scale(b).unwrap(), ts.floor_scale(c).unwrap()];
                v.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let pc = ScalarCoefficient::real(p);
                let lhs = exp_generalized(&ts, &pc, v[2], v[1], &q()).unwrap() * exp_generalized(&ts, &pc, v[1], v[0], &q()).unwrap();
                let rhs = exp_generalized(&ts, &pc, v[2], v[0], &q()).unwrap();
                prop_assert!(cabs(lhs - rhs) <= 1e-10 * cabs(rhs));
            }

            #[test]
            fn sandwich_for_nonnegative_gain(ts in mixed_scale(), p in 0.0f64..2.0, b in 0.0f64..5.0) {
                let t = ts.floor_scale(b).unwrap();
                let pc = ScalarCoefficient::real(p);
                let integral: f64 = ts.delta_integral(|_| p, 0.0, t, &q()).unwrap();
                let e = exp_generalized(&ts, &pc, t, 0.0, &q()).unwrap().re;
                prop_assert!(1.0 + integral <= e * (1.0 + 1e-12));
                prop_assert!(e <= integral.exp() * (1.0 + 1e-12));
            }

            #[test]
            fn matches_step_by_step_oracle(ts in mixed_scale(), p in -0.9f64..2.0, b in 0.0f64..5.0) {
                // Oracle: product of jump factors times exp(p·dense length).
                let t = ts.floor_scale(b).unwrap();
                let mut oracle = 1.0f64;
                let mut dense = 0.0;
                for s in ts.spans(0.0, t) {
                    let hi = s.end.unwrap().min(t);
                    dense += hi - s.start;
                }
                for (_, mu) in ts.scattered_points(0.0, t) {
                    oracle *= 1.0 + mu * p;
                }
                oracle *= (p * dense).exp();
                let e = exp_generalized(&ts, &ScalarCoefficient::real(p), t, 0.0, &q()).unwrap();
                prop_assert!(cabs(e - cx(oracle)) <= 1e-10 * oracle.abs().max(1e-300));
            }
        }
    }
}
