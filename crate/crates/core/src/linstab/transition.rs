use super::coefficient::CoefficientMap;
use crate::error::{Error, Result};
use crate::linalg::{identity, min_singular_value, spectral_norm};
use crate::num::{lit, to_f64, vnorm, CVec, Real};
use crate::ode::{propagate, rk4_step, IntegratorConfig, Transition};
use crate::timescale::TimeScale;

fn require_in_scale<R: Real>(ts: &TimeScale<R>, t: R) -> Result<()> {
    if ts.contains(t) {
        Ok(())
    } else {
        Err(Error::NotInScale { t: to_f64(t) })
    }
}

/// Walks the scale from `s` to `t`, applying jump factors at scattered points
/// and the ODE flow on dense pieces. `observe` is called at every time in
/// `samples` (ascending scale points in `[s, t]`) once the state reaches it.
#[allow(clippy::too_many_arguments)]
pub fn propagate_on_scale<R: Real>(
    ts: &TimeScale<R>,
    a: &CoefficientMap<R>,
    state: &mut Transition<R>,
    s: R,
    t: R,
    cfg: &IntegratorConfig<R>,
    samples: &[R],
    mut observe: impl FnMut(R, &Transition<R>),
) -> Result<()> {
    let n = a.dim();
    let mut k = samples.partition_point(|x| *x < s);
    while k < samples.len() && samples[k] == s {
        observe(s, state);
        k += 1;
    }
    let spans: Vec<_> = ts.spans(s, t).collect();
    let mut next_start = spans.iter().skip(1).map(|sp| sp.start);
    for sp in &spans {
        let follow = next_start.next();
        let lo = sp.start.max(s);
        let hi = sp.end.map_or(t, |e| e.min(t));
        let mut cur = lo;
        while k < samples.len() && samples[k] <= hi {
            propagate(a, state, cur, samples[k], cfg);
            cur = samples[k];
            observe(cur, state);
            k += 1;
        }
        propagate(a, state, cur, hi, cfg);
        if let Some(e) = sp.end {
            if e >= s && e < t {
                let next = match follow {
                    Some(x) => x,
                    None => ts.sigma(e)?,
                };
                let mu = next - e;
                let j = identity::<R>(n) + a.at(e).map(|z| z * mu);
                let floor = lit::<R>(1e-13) * spectral_norm(&j).max(R::one());
                if min_singular_value(&j) <= floor {
                    return Err(Error::NonRegressiveJump { t: to_f64(e) });
                }
                state.left_mul(&j);
                while k < samples.len() && samples[k] <= next {
                    if samples[k] == next {
                        observe(next, state);
                    }
                    k += 1;
                }
            }
        }
    }
    Ok(())
}

/// `Φ_A(t, s)` for scale points `s ≤ t`.
pub fn fundamental_matrix<R: Real>(
    ts: &TimeScale<R>,
    a: &CoefficientMap<R>,
    t: R,
    s: R,
    cfg: &IntegratorConfig<R>,
) -> Result<Transition<R>> {
    require_in_scale(ts, s)?;
    require_in_scale(ts, t)?;
    if t < s {
        return Err(Error::InvalidArgument("fundamental matrix needs t ≥ s".into()));
    }
    let mut st = Transition::identity(a.dim());
    propagate_on_scale(ts, a, &mut st, s, t, cfg, &[], |_, _| {})?;
    Ok(st)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySample<R: Real> {
    pub t: R,
    pub x: CVec<R>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<R: Real> {
    pub samples: Vec<TrajectorySample<R>>,
    /// First time `|x|` exceeded the overflow guard, if it did.
    pub blow_up: Option<R>,
}

impl<R: Real> Trajectory<R> {
    pub fn last(&self) -> &TrajectorySample<R> {
        self.samples.last().expect("trajectory has its initial sample")
    }

    /// First sample time with `|x| ≥ level`.
    pub fn first_exceeding(&self, level: R) -> Option<R> {
        self.samples.iter().find(|s| vnorm(&s.x) >= level).map(|s| s.t)
    }

    pub fn max_norm(&self) -> R {
        self.samples.iter().fold(R::zero(), |m, s| m.max(vnorm(&s.x)))
    }
}

/// Solves `x^Δ = rhs(t, x)` from `x0` at `t0` up to `horizon`: Euler-type
/// jumps at scattered points, RK4 on dense pieces. Records every component
/// boundary and every dense sub-step.
pub fn simulate<R: Real>(
    ts: &TimeScale<R>,
    mut rhs: impl FnMut(R, &CVec<R>) -> CVec<R>,
    x0: &CVec<R>,
    t0: R,
    horizon: R,
    cfg: &IntegratorConfig<R>,
) -> Result<Trajectory<R>> {
    let rhs = std::cell::RefCell::new(&mut rhs);
    simulate_split(ts, |t, x| (rhs.borrow_mut())(t, x), |t, x| (rhs.borrow_mut())(t, x), x0, t0, horizon, cfg)
}

/// [`simulate`] with separate right sides for the dense flow and for the jump
/// at right-scattered points, for systems whose scale value at a jump differs
/// from the limit of the flow rule.
pub fn simulate_split<R: Real>(
    ts: &TimeScale<R>,
    mut flow: impl FnMut(R, &CVec<R>) -> CVec<R>,
    mut jump: impl FnMut(R, &CVec<R>) -> CVec<R>,
    x0: &CVec<R>,
    t0: R,
    horizon: R,
    cfg: &IntegratorConfig<R>,
) -> Result<Trajectory<R>> {
    require_in_scale(ts, t0)?;
    let end = ts.floor_scale(horizon.max(t0))?;
    let mut x = x0.clone();
    let mut samples = vec![TrajectorySample { t: t0, x: x.clone() }];
    let guard = cfg.overflow_guard;
    let blown = |x: &CVec<R>| {
        let n = vnorm(x);
        !(to_f64(n).is_finite()) || n > guard
    };
    let spans: Vec<_> = ts.spans(t0, end).collect();
    for (i, sp) in spans.iter().enumerate() {
        let lo = sp.start.max(t0);
        let hi = sp.end.map_or(end, |e| e.min(end));
        if hi > lo {
            let step = cfg.step_for(hi - lo);
            let nsteps = to_f64(((hi - lo) / step).ceil()).max(1.0) as u64;
            let h = (hi - lo) / R::from_u64(nsteps).expect("steps");
            for j in 0..nsteps {
                let t = lo + h * R::from_u64(j).expect("index");
                x = rk4_step(&mut flow, t, &x, h);
                let tn = if j + 1 == nsteps { hi } else { t + h };
                samples.push(TrajectorySample { t: tn, x: x.clone() });
                if blown(&x) {
                    return Ok(Trajectory { samples, blow_up: Some(tn) });
                }
            }
        }
        if let Some(e) = sp.end {
            if e >= t0 && e < end {
                let next = spans.get(i + 1).map(|s| s.start).unwrap_or(ts.sigma(e)?);
                let mu = next - e;
                let f = jump(e, &x);
                x += f.map(|z| z * mu);
                samples.push(TrajectorySample { t: next, x: x.clone() });
                if blown(&x) {
                    return Ok(Trajectory { samples, blow_up: Some(next) });
                }
            }
        }
    }
    Ok(Trajectory { samples, blow_up: None })
}

/// Component boundaries in `(t0, horizon]` merged with `grid` uniformly spaced
/// times snapped to the scale.
pub fn window_times<R: Real>(ts: &TimeScale<R>, t0: R, horizon: R, grid: usize) -> Result<Vec<R>> {
    let mut v: Vec<R> = ts.boundaries(t0, horizon).into_iter().filter(|t| *t > t0).collect();
    for i in 1..=grid {
        let t = t0 + (horizon - t0) * lit::<R>(i as f64 / grid as f64);
        let f = ts.floor_scale(t)?;
        if f > t0 {
            v.push(f);
        }
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    v.dedup();
    Ok(v)
}
