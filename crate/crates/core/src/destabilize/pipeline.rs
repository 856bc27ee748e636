use super::millionschikov::{millionschikov_perturbation, BlockPlan, DestabilizationReport, MillionschikovParams};
use super::schedule::{mollify_schedule, MollifiedSchedule, RotationSchedule};
use crate::embedding::{default_support, empirical_lipschitz, extend_coefficients, project_perturbation, scale_sup_norm, ExtendedCoefficient};
use crate::error::{Error, Result};
use crate::linstab::{central_upper_exponent, propagate_on_scale, window_times, CoefficientMap, ExponentEstimate};
use crate::num::{lit, max_imag, to_f64, vnorm, CVec, Real};
use crate::ode::{IntegratorConfig, OdeCoefficient, ShiftedCoefficient, Transition};
use crate::timescale::{Syndetic, TimeScale};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig<R: Real> {
    /// Budget for `sup ‖B_δ‖` on the scale.
    pub delta: R,
    pub horizon: R,
    pub plan: BlockPlan<R>,
    /// Block length of the central exponent estimate on the scale; three
    /// times the largest gap (or 3) when absent.
    pub chi_block: Option<R>,
    /// Estimates with `|χ| ≤ zero_tolerance` take the identity-shift branch.
    pub zero_tolerance: R,
    pub ramp: R,
    pub lipschitz_pairs: usize,
    /// Horizon of the projection Lipschitz estimate.
    pub lipschitz_horizon: R,
    pub seed: u64,
    /// Growth factor of `|x(t)|/|x(0)|` reported as escape.
    pub escape_factor: R,
    /// Halvings of the rotation speed allowed after a budget failure.
    pub max_retries: usize,
}

impl<R: Real> PipelineConfig<R> {
    pub fn new(delta: R, horizon: R) -> Self {
        Self {
            delta,
            horizon,
            plan: BlockPlan::Verbatim,
            chi_block: None,
            zero_tolerance: lit(1e-3),
            ramp: lit(1e-3),
            lipschitz_pairs: 4,
            lipschitz_horizon: lit(120.0),
            seed: 0,
            escape_factor: lit(1e3),
            max_retries: 6,
        }
    }
}

/// `log|x(t)|` along a scale trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct EscapeTrace<R: Real> {
    pub x0: CVec<R>,
    /// `(t, log|x(t)|)` at component boundaries and grid times.
    pub samples: Vec<(R, R)>,
    /// First sample with `|x(t)| ≥ escape_factor·|x(0)|`.
    pub escape_time: Option<R>,
}

impl<R: Real> EscapeTrace<R> {
    pub fn max_log_norm(&self) -> R {
        self.samples.iter().fold(lit::<R>(f64::NEG_INFINITY), |m, s| m.max(s.1))
    }
}

#[derive(Debug)]
pub struct TimeScaleDestabilization<R: Real> {
    /// `B_δ` on the scale.
    pub perturbation: CoefficientMap<R>,
    pub schedule: Arc<RotationSchedule<R>>,
    pub mollified: Arc<MollifiedSchedule<R>>,
    pub report: DestabilizationReport<R>,
    /// Central exponent estimate of the unperturbed scale system.
    pub chi_est: ExponentEstimate<R>,
    pub eps: R,
    /// Rotation speed bound `δ₁` of the successful attempt.
    pub rotation_delta: R,
    /// Empirical Lipschitz constant `K` of the projection.
    pub lipschitz: R,
    /// Identity shift `c` folded into `B̂` (zero unless `χ ≈ 0`).
    pub shift: R,
    /// `a = sup ‖Ã‖`.
    pub bound: R,
    pub measured_norm: R,
    pub max_imag: R,
    pub retries: usize,
    pub perturbed: EscapeTrace<R>,
    pub unperturbed: EscapeTrace<R>,
}

impl<R: Real> TimeScaleDestabilization<R> {
    /// Whether `B_δ` is real within `1e-8`.
    pub fn is_real(&self) -> bool {
        self.max_imag <= lit(1e-8)
    }
}

/// Traces `log|x(t)|` of `x^Δ = A(t)x` from `x0` at `t = 0`.
pub fn escape_trace<R: Real>(
    ts: &TimeScale<R>,
    a: &CoefficientMap<R>,
    x0: &CVec<R>,
    horizon: R,
    escape_factor: R,
    cfg: &IntegratorConfig<R>,
) -> Result<EscapeTrace<R>> {
    let t0 = ts.floor_scale(R::zero())?;
    let times = window_times(ts, t0, horizon, cfg.grid_samples)?;
    let mut st = Transition::from_vector(x0);
    let mut samples = vec![(t0, vnorm(x0).ln())];
    let end = *times.last().unwrap_or(&t0);
    propagate_on_scale(ts, a, &mut st, t0, end, cfg, &times, |t, s| {
        samples.push((t, vnorm(&s.unit_column(0)).ln() + s.logscale));
    })?;
    let level = samples[0].1 + escape_factor.ln();
    let escape_time = samples.iter().find(|s| s.1 >= level).map(|s| s.0);
    Ok(EscapeTrace { x0: x0.clone(), samples, escape_time })
}

/// Largest `|Im|` entry of `B` over scattered points and sampled dense points.
fn scale_max_imag<R: Real>(ts: &TimeScale<R>, b: &CoefficientMap<R>, sched: &RotationSchedule<R>, horizon: R) -> R {
    let mut m = R::zero();
    for (t, _) in ts.scattered_points(ts.min(), horizon) {
        m = m.max(max_imag(&b.at(t)));
    }
    for e in &sched.entries {
        for i in 0..=8 {
            let t = e.start + lit::<R>(i as f64 / 8.0);
            if ts.contains(t) {
                m = m.max(max_imag(&b.at(t)));
            }
        }
    }
    m
}

/// Embeds the scale system, rotates the embedded ODE and projects the
/// rotation back, so that `x^Δ = (A + B_δ)x` has a growing solution while
/// `sup ‖B_δ‖ ≤ δ`. The rotation speed starts at `δ/(K(2a+1))` and is halved
/// while the projected norm exceeds `δ`.
pub fn destabilize_timescale<R: Real>(
    ts: &TimeScale<R>,
    a: &CoefficientMap<R>,
    pcfg: &PipelineConfig<R>,
    cfg: &IntegratorConfig<R>,
) -> Result<TimeScaleDestabilization<R>> {
    if ts.is_syndetic(pcfg.horizon) != Syndetic::Yes {
        return Err(Error::NotSyndetic);
    }
    let horizon = pcfg.horizon;
    let delta = pcfg.delta;
    let sup_gap = ts.grain_profile(horizon).sup_gap_value().ok_or(Error::NotSyndetic)?;
    let chi_block = pcfg.chi_block.unwrap_or_else(|| (sup_gap * lit(3.0)).max(lit(3.0)));
    let chi_est = central_upper_exponent(ts, a, chi_block, horizon, cfg)?;
    let chi = chi_est.value;
    if chi < -pcfg.zero_tolerance {
        return Err(Error::CentralExponentNegative { chi: to_f64(chi) });
    }

    let ext = Arc::new(extend_coefficients(ts, a, horizon)?);
    let bound = ext.sup_norm(horizon)?;
    let support = default_support(ts, horizon).ok_or(Error::NotSyndetic)?;
    let lip_horizon = pcfg.lipschitz_horizon.min(horizon);
    let k = empirical_lipschitz(&ext, support, delta, lip_horizon, pcfg.lipschitz_pairs, pcfg.seed, cfg)?;
    let spread = k * (bound * lit(2.0) + R::one());

    // With χ ≈ 0 the rotation acts on Ã + cE, whose central exponent is χ + c.
    let zero_branch = chi <= pcfg.zero_tolerance;
    let shift = if zero_branch { delta * lit(2.0) / (lit::<R>(3.0) * spread) } else { R::zero() };
    let (base, rot_bound, eps): (Arc<dyn OdeCoefficient<R>>, R, R) = if zero_branch {
        (Arc::new(ShiftedCoefficient { base: ext.clone() as Arc<dyn OdeCoefficient<R>>, shift }), bound + shift, (chi + shift) / lit(2.0))
    } else {
        (ext.clone(), bound, chi / lit(2.0))
    };
    let rot_budget = if zero_branch { delta / (lit::<R>(3.0) * spread) } else { delta / spread };
    let mut rotation_delta = rot_budget / (rot_bound * lit(2.0) + R::one());

    let mut last_err = None;
    for retries in 0..=pcfg.max_retries {
        let params = MillionschikovParams { eps, delta: rotation_delta, horizon, plan: pcfg.plan.clone(), bound: Some(rot_bound) };
        let (schedule, report) = millionschikov_perturbation(base.clone(), &params, cfg)?;
        let schedule = Arc::new(schedule);
        let mollified = Arc::new(mollify_schedule(schedule.clone(), pcfg.ramp)?);
        let bhat_bound = schedule.budget() + shift;
        let bhat: Arc<dyn OdeCoefficient<R>> = if zero_branch {
            Arc::new(ShiftedCoefficient { base: mollified.clone() as Arc<dyn OdeCoefficient<R>>, shift })
        } else {
            mollified.clone()
        };
        let bhat = CoefficientMap::structured(bhat);
        let projected = project_perturbation(&ext, &bhat, support, bhat_bound * lit(1.0 + 1e-9), horizon, cfg)?;
        let measured = scale_sup_norm(ts, &projected, horizon, 8)?;
        if measured > delta * lit(1.0 + 1e-12) {
            last_err = Some(Error::BudgetExceeded { measured: to_f64(measured), budget: to_f64(delta) });
            rotation_delta /= lit(2.0);
            continue;
        }
        let imag = scale_max_imag(ts, &projected, &schedule, horizon);
        let x0 = report.y0_initial.clone();
        let total = a.plus(&projected)?;
        let perturbed = escape_trace(ts, &total, &x0, horizon, pcfg.escape_factor, cfg)?;
        let unperturbed = escape_trace(ts, a, &x0, horizon, pcfg.escape_factor, cfg)?;
        return Ok(TimeScaleDestabilization {
            perturbation: projected,
            schedule,
            mollified,
            report,
            chi_est,
            eps,
            rotation_delta,
            lipschitz: k,
            shift,
            bound,
            measured_norm: measured,
            max_imag: imag,
            retries,
            perturbed,
            unperturbed,
        });
    }
    Err(last_err.expect("at least one attempt"))
}

/// The embedded system, for callers that want to rerun pieces of the pipeline.
pub fn embedded_system<R: Real>(ts: &TimeScale<R>, a: &CoefficientMap<R>, horizon: R) -> Result<Arc<ExtendedCoefficient<R>>> {
    Ok(Arc::new(extend_coefficients(ts, a, horizon)?))
}

/// A unit vector along `v`.
pub(crate) fn unit<R: Real>(v: &CVec<R>) -> CVec<R> {
    let n = vnorm(v);
    v.map(|z| z.unscale(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::cdiag_real;
    use crate::timescale::{Component, Tail};

    #[test]
    fn rejects_non_syndetic_scale() {
        let ts = TimeScale::<f64>::growing_gaps(1.0).unwrap();
        let r = destabilize_timescale(&ts, &CoefficientMap::diagonal(&[0.5]), &PipelineConfig::new(0.1, 100.0), &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::NotSyndetic)));
    }

    #[test]
    fn strongly_stable_has_nothing_to_destabilize() {
        let z = TimeScale::<f64>::integers();
        let r = destabilize_timescale(&z, &CoefficientMap::diagonal(&[-0.5]), &PipelineConfig::new(0.1, 200.0), &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::CentralExponentNegative { .. })));
    }

    #[test]
    fn zero_exponent_takes_shift_branch() {
        // A rotation generator on a lattice with gaps 1/2: ‖Φ‖ stays near 1.
        let ts = TimeScale::new(vec![], Tail::Periodic { period: 1.0, pattern: vec![Component::Interval { start: 0.0, end: 0.5 }] }).unwrap();
        let a = CoefficientMap::constant(cdiag_real(&[0.0, 0.0]));
        let mut p = PipelineConfig::new(0.2, 240.0);
        p.plan = BlockPlan::Fixed { t0: 2.0, multiples: vec![3] };
        let d = destabilize_timescale(&ts, &a, &p, &IntegratorConfig::default()).unwrap();
        assert!(d.shift > 0.0);
        assert!(d.measured_norm <= 0.2);
        assert!(d.is_real());
        // Growth comes from the shift alone.
        let rate = d.perturbed.samples.last().unwrap().1 / 240.0;
        assert!(rate > 0.0 && rate <= d.shift + 1e-9, "{rate} {}", d.shift);
    }
}
