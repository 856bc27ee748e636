use super::pipeline::{destabilize_timescale, unit, PipelineConfig};
use crate::error::{Error, Result};
use crate::linstab::{simulate_split, CoefficientMap, Trajectory};
use crate::num::{cx, lit, to_f64, vnorm, CMat, CVec, Real};
use crate::ode::{IntegratorConfig, OdeCoefficient};
use crate::timescale::TimeScale;

/// Smooth cut-off: 1 on `[0, ½]`, 0 on `[1, ∞)`, built from `e^{−1/u}`.
pub fn cutoff<R: Real>(s: R) -> R {
    let h = |u: R| if u > R::zero() { (-R::one() / u).exp() } else { R::zero() };
    let a = h(R::one() - s);
    let b = h(s - lit(0.5));
    if a + b == R::zero() {
        return R::zero();
    }
    a / (a + b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TubeConfig<R: Real> {
    pub terms: usize,
    /// Budget of term `ℓ` is `base_budget·2^{−ℓ}`.
    pub base_budget: R,
    /// `|x₁(0)|`; later terms start at `4^{1−ℓ}|x₁(0)|` before rescaling.
    pub initial_radius: R,
    /// A tube ends once its solution reaches this norm.
    pub escape_radius: R,
    pub max_rescales: usize,
    /// Settings for every linear destabilization; `delta` is overridden.
    pub pipeline: PipelineConfig<R>,
}

impl<R: Real> TubeConfig<R> {
    pub fn new(terms: usize, pipeline: PipelineConfig<R>) -> Self {
        Self { terms, base_budget: R::one(), initial_radius: lit(0.05), escape_radius: lit(2.0), max_rescales: 20, pipeline }
    }
}

/// One tube: the solution `x_ℓ` of `x^Δ = (A + B_ℓ)x` up to its crossing time.
#[derive(Clone, Debug)]
pub struct TubeTerm<R: Real> {
    pub level: usize,
    pub budget: R,
    pub perturbation: CoefficientMap<R>,
    pub x0: CVec<R>,
    pub path: Trajectory<R>,
    /// First time with `|x_ℓ| ≥ escape_radius`.
    pub crossing: R,
    pub rescales: usize,
}

impl<R: Real> TubeTerm<R> {
    /// `x_ℓ(t)`, interpolated linearly between recorded steps.
    pub fn center(&self, t: R) -> CVec<R> {
        let s = &self.path.samples;
        let i = s.partition_point(|p| p.t <= t);
        if i == 0 {
            return s[0].x.clone();
        }
        let lo = &s[i - 1];
        if lo.t == t || i == s.len() {
            return lo.x.clone();
        }
        let hi = &s[i];
        let w = (t - lo.t) / (hi.t - lo.t);
        lo.x.map(|z| z * cx(R::one() - w)) + hi.x.map(|z| z * cx(w))
    }

    /// `B_ℓ(t)·φ(|x − x_ℓ(t)|/ε_ℓ(t))` with `ε_ℓ = |x_ℓ|/4`, zero from `T_ℓ` on.
    fn weight(&self, t: R, x: &CVec<R>) -> R {
        if t >= self.crossing {
            return R::zero();
        }
        let c = self.center(t);
        let eps = vnorm(&c) / lit(4.0);
        if eps == R::zero() {
            return R::zero();
        }
        cutoff(vnorm(&(x - &c)) / eps)
    }
}

/// `f(t, x) = Σ_ℓ Ψ_ℓ(t, x)·x` over the finite list of tubes.
#[derive(Clone, Debug)]
pub struct TubeNonlinearity<R: Real> {
    pub ts: TimeScale<R>,
    pub a: CoefficientMap<R>,
    pub terms: Vec<TubeTerm<R>>,
}

impl<R: Real> TubeNonlinearity<R> {
    fn sum(&self, t: R, x: &CVec<R>, matrix: impl Fn(&TubeTerm<R>) -> CMat<R>) -> CVec<R> {
        let mut out = CVec::zeros(x.len());
        for term in &self.terms {
            let w = self.weight_of(term, t, x);
            if w > R::zero() {
                out += (matrix(term) * x).map(|z| z * w);
            }
        }
        out
    }

    fn weight_of(&self, term: &TubeTerm<R>, t: R, x: &CVec<R>) -> R {
        term.weight(t, x)
    }

    /// `f(t, x)` with the scale values of `B_ℓ`.
    pub fn eval(&self, t: R, x: &CVec<R>) -> CVec<R> {
        self.sum(t, x, |term| term.perturbation.at(t))
    }

    /// `f(t, x)` with the flow rule of `B_ℓ`, for dense propagation.
    pub fn eval_flow(&self, t: R, x: &CVec<R>) -> CVec<R> {
        self.sum(t, x, |term| term.perturbation.eval(t))
    }

    /// Solves `x^Δ = A(t)x + f(t, x)` from `x0` at `t = 0`.
    pub fn simulate(&self, x0: &CVec<R>, horizon: R, cfg: &IntegratorConfig<R>) -> Result<Trajectory<R>> {
        simulate_split(
            &self.ts,
            |t, x| self.a.eval(t) * x + self.eval_flow(t, x),
            |t, x| self.a.at(t) * x + self.eval(t, x),
            x0,
            R::zero(),
            horizon,
            cfg,
        )
    }
}

/// Per-term escape check of the nonlinear system.
#[derive(Clone, Debug, PartialEq)]
pub struct EscapeRecord<R: Real> {
    pub level: usize,
    pub x0_norm: R,
    pub crossing: R,
    /// First time the nonlinear solution from `x_ℓ(0)` reached the escape
    /// radius.
    pub simulated_escape: Option<R>,
    pub rescales: usize,
}

fn linear_path<R: Real>(
    ts: &TimeScale<R>,
    total: &CoefficientMap<R>,
    x0: &CVec<R>,
    horizon: R,
    radius: R,
    cfg: &IntegratorConfig<R>,
) -> Result<(Trajectory<R>, Option<R>)> {
    let mut c = *cfg;
    c.overflow_guard = radius;
    let tr = simulate_split(ts, |t, x| total.eval(t) * x, |t, x| total.at(t) * x, x0, R::zero(), horizon, &c)?;
    let crossing = tr.first_exceeding(radius);
    Ok((tr, crossing))
}

/// First recorded time before both crossings where `|x_new| ≥ |x_old|/2^{gap}`.
fn separation_violation<R: Real>(new: &TubeTerm<R>, old: &TubeTerm<R>) -> Option<R> {
    let factor = lit::<R>(2f64.powi((new.level - old.level) as i32));
    let stop = new.crossing.min(old.crossing);
    new.path
        .samples
        .iter()
        .take_while(|s| s.t < stop)
        .find(|s| vnorm(&s.x) * factor >= vnorm(&old.center(s.t)))
        .map(|s| s.t)
}

/// Builds the tube nonlinearity from `terms` destabilized linear systems with
/// budgets `base_budget·2^{−ℓ}` and checks that the nonlinear system leaves
/// the escape radius from each `x_ℓ(0)`.
pub fn build_unstable_nonlinearity<R: Real>(
    ts: &TimeScale<R>,
    a: &CoefficientMap<R>,
    tcfg: &TubeConfig<R>,
    cfg: &IntegratorConfig<R>,
) -> Result<(TubeNonlinearity<R>, Vec<EscapeRecord<R>>)> {
    if tcfg.terms == 0 {
        return Err(Error::InvalidArgument("at least one tube is needed".into()));
    }
    let horizon = tcfg.pipeline.horizon;
    let mut terms: Vec<TubeTerm<R>> = Vec::new();
    for level in 1..=tcfg.terms {
        let budget = tcfg.base_budget * lit(0.5f64.powi(level as i32));
        let mut pcfg = tcfg.pipeline.clone();
        pcfg.delta = budget;
        let d = destabilize_timescale(ts, a, &pcfg, cfg)?;
        let total = a.plus(&d.perturbation)?;
        let dir = unit(&d.report.y0_initial);
        let mut radius = tcfg.initial_radius * lit(0.25f64.powi(level as i32 - 1));
        let mut rescales = 0;
        let term = loop {
            let x0 = dir.map(|z| z * cx(radius));
            let (path, crossing) = linear_path(ts, &total, &x0, horizon, tcfg.escape_radius, cfg)?;
            let crossing = crossing.ok_or_else(|| {
                Error::InvalidArgument(format!("tube {level} does not reach radius {} within the horizon", to_f64(tcfg.escape_radius)))
            })?;
            let term = TubeTerm { level, budget, perturbation: d.perturbation.clone(), x0, path, crossing, rescales };
            match terms.iter().find_map(|old| separation_violation(&term, old)) {
                None => break term,
                Some(t) if rescales >= tcfg.max_rescales => return Err(Error::TubeOverlap { t: to_f64(t) }),
                Some(_) => {
                    radius /= lit(2.0);
                    rescales += 1;
                }
            }
        };
        terms.push(term);
    }
    let f = TubeNonlinearity { ts: ts.clone(), a: a.clone(), terms };
    let mut log = Vec::new();
    for term in &f.terms {
        let mut c = *cfg;
        c.overflow_guard = tcfg.escape_radius;
        let tr = f.simulate(&term.x0, horizon, &c)?;
        log.push(EscapeRecord {
            level: term.level,
            x0_norm: vnorm(&term.x0),
            crossing: term.crossing,
            simulated_escape: tr.first_exceeding(tcfg.escape_radius),
            rescales: term.rescales,
        });
    }
    Ok((f, log))
}
