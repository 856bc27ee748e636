use super::coefficient::CoefficientMap;
use super::transition::{propagate_on_scale, window_times};
use crate::error::Result;
use crate::linalg::eigenvalues;
use crate::num::{cabs, cx, lit, Cplx, CMat, Real};
use crate::ode::{IntegratorConfig, Transition};
use crate::timescale::{GrainProfile, TimeScale};

/// One probe of `sup_t ‖Φ(t, t0)‖`, split into the first and second half of
/// `[t0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow<R: Real> {
    pub t0: R,
    pub log_sup_first: R,
    pub log_sup_second: R,
}

impl<R: Real> ProbeRow<R> {
    pub fn log_sup(&self) -> R {
        self.log_sup_first.max(self.log_sup_second)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EmpiricalVerdict<R: Real> {
    BoundedAllProbes { gamma: R },
    UnboundedAt(R),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalStability<R: Real> {
    pub verdict: EmpiricalVerdict<R>,
    pub table: Vec<ProbeRow<R>>,
}

/// Growth of the second-half supremum over the first-half one that counts as
/// unbounded.
pub const UNBOUNDED_RATIO: f64 = 1.5;

/// Default probe starts `{0, h/8, h/4, 3h/8}`, snapped to the scale.
pub fn default_probe_grid<R: Real>(ts: &TimeScale<R>, horizon: R) -> Result<Vec<R>> {
    let mut v = Vec::new();
    for k in 0..4 {
        let t = ts.floor_scale(horizon * lit::<R>(k as f64 / 8.0))?;
        if !v.contains(&t) {
            v.push(t);
        }
    }
    Ok(v)
}

/// Probes `sup_{t ≤ horizon} ‖Φ(t, t0)‖` for each start in `grid` (all scale
/// points). A probe is unbounded when the supremum over the second half of its
/// window exceeds the first-half supremum by the factor [`UNBOUNDED_RATIO`].
pub fn classify_stability_empirical<R: Real>(
    ts: &TimeScale<R>,
    a: &CoefficientMap<R>,
    horizon: R,
    grid: &[R],
    cfg: &IntegratorConfig<R>,
) -> Result<EmpiricalStability<R>> {
    let mut table = Vec::with_capacity(grid.len());
    let mut verdict = None;
    for &t0 in grid {
        let times = window_times(ts, t0, horizon, cfg.grid_samples)?;
        let mid = (t0 + horizon) / lit(2.0);
        let (mut first, mut second) = (R::zero(), lit::<R>(f64::NEG_INFINITY));
        let mut st = Transition::identity(a.dim());
        let end = *times.last().unwrap_or(&t0);
        propagate_on_scale(ts, a, &mut st, t0, end, cfg, &times, |t, s| {
            let l = s.log_norm();
            if t <= mid {
                first = first.max(l);
            } else {
                second = second.max(l);
            }
        })?;
        if verdict.is_none() && second > first + lit::<R>(UNBOUNDED_RATIO).ln() {
            verdict = Some(EmpiricalVerdict::UnboundedAt(t0));
        }
        table.push(ProbeRow { t0, log_sup_first: first, log_sup_second: second });
    }
    let verdict = verdict.unwrap_or_else(|| EmpiricalVerdict::BoundedAllProbes {
        gamma: table.iter().fold(R::zero(), |m, r| m.max(r.log_sup())).exp(),
    });
    Ok(EmpiricalStability { verdict, table })
}

/// `(|1 + μλ|² − 1)/μ` for a gap, `2 Re λ` at dense points: the Δ-derivative
/// of `|z|²` along `z^Δ = λz`.
pub fn growth_rate<R: Real>(lambda: Cplx<R>, gap: Option<R>) -> R {
    match gap {
        Some(mu) if mu > R::zero() => {
            let w = cabs(cx::<R>(R::one()) + lambda * mu);
            (w * w - R::one()) / mu
        }
        _ => lambda.re * lit(2.0),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Witness<R: Real> {
    pub lambda: Cplx<R>,
    /// `None` for the dense condition.
    pub gap: Option<R>,
    pub value: R,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrongStability<R: Real> {
    pub holds: bool,
    pub witnesses: Vec<Witness<R>>,
    /// Set when the profile was sampled from a generator tail.
    pub empirical: bool,
}

fn tail_conditions<R: Real>(profile: &GrainProfile<R>) -> Vec<Option<R>> {
    let mut v: Vec<Option<R>> = profile.attained_gaps.iter().map(|g| Some(*g)).collect();
    if profile.has_dense_tail {
        v.push(None);
    }
    v
}

pub fn is_strongly_stable<R: Real>(a: &CMat<R>, profile: &GrainProfile<R>) -> Result<StrongStability<R>> {
    let eig = eigenvalues(a)?;
    let conds = tail_conditions(profile);
    let mut witnesses = Vec::new();
    for &lambda in &eig {
        for &gap in &conds {
            witnesses.push(Witness { lambda, gap, value: growth_rate(lambda, gap) });
        }
    }
    let holds = !conds.is_empty() && witnesses.iter().all(|w| w.value < R::zero());
    Ok(StrongStability { holds, witnesses, empirical: !profile.exact })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrongInstability<R: Real> {
    pub holds: bool,
    /// Indices into `eigenvalues` of the expanding set, then the rest.
    pub split: Option<(Vec<usize>, Vec<usize>)>,
    pub eigenvalues: Vec<Cplx<R>>,
    pub empirical: bool,
}

fn admissible_split<R: Real>(eig: &[Cplx<R>], first: &[usize], second: &[usize], conds: &[Option<R>]) -> bool {
    conds.iter().all(|&gap| {
        first.iter().all(|&k| {
            let a = growth_rate(eig[k], gap);
            a > R::zero() && second.iter().all(|&j| a > growth_rate(eig[j], gap))
        })
    })
}

/// Searches every nonempty subset of eigenvalues for an expanding set. Among
/// admissible splits the largest expanding set wins; eigenvalues are ordered
/// by decreasing `|1 + μ̄λ|` (`Re λ` without gaps) so the choice is stable.
pub fn is_strongly_unstable<R: Real>(a: &CMat<R>, profile: &GrainProfile<R>) -> Result<StrongInstability<R>> {
    let mut eig = eigenvalues(a)?;
    let bar = profile.attained_gaps.last().copied();
    let key = |l: &Cplx<R>| match bar {
        Some(m) => cabs(cx::<R>(R::one()) + *l * m),
        None => l.re,
    };
    eig.sort_by(|x, y| key(y).partial_cmp(&key(x)).unwrap_or(std::cmp::Ordering::Equal));
    let n = eig.len();
    let conds = tail_conditions(profile);
    let mut best: Option<(Vec<usize>, Vec<usize>)> = None;
    if n <= 20 && !conds.is_empty() {
        for mask in 1u32..(1u32 << n) {
            let first: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            if best.as_ref().is_some_and(|b| b.0.len() >= first.len()) {
                continue;
            }
            let second: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
            if admissible_split(&eig, &first, &second, &conds) {
                best = Some((first, second));
            }
        }
    }
    Ok(StrongInstability { holds: best.is_some(), split: best, eigenvalues: eig, empirical: !profile.exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{cdiag_real, cmat_from_real};
    use crate::timescale::GapBound;

    fn gaps(g: &[f64], dense: bool) -> GrainProfile<f64> {
        GrainProfile {
            attained_gaps: g.to_vec(),
            has_dense_tail: dense,
            sup_gap: GapBound::Finite(g.iter().cloned().fold(0.0, f64::max)),
            exact: true,
        }
    }

    #[test]
    fn strong_stability_examples() {
        let s = is_strongly_stable(&cdiag_real(&[-1.0]), &gaps(&[1.0], false)).unwrap();
        assert!(s.holds);
        assert_eq!(s.witnesses[0].value, -1.0);
        let s = is_strongly_stable(&cdiag_real(&[-1.0]), &gaps(&[3.0], false)).unwrap();
        assert!(!s.holds);
        assert_eq!(s.witnesses[0].value, 1.0);
        let s = is_strongly_stable(&cdiag_real(&[-2.0, -0.5]), &gaps(&[6.0], false)).unwrap();
        assert!(!s.holds);
        assert!(s.witnesses.iter().any(|w| (w.value - 20.0).abs() < 1e-12));
    }

    #[test]
    fn strong_instability_examples() {
        let u = is_strongly_unstable(&cdiag_real(&[1.0]), &gaps(&[1.0], false)).unwrap();
        assert!(u.holds);
        assert_eq!(u.split.unwrap().0.len(), 1);
        let u = is_strongly_unstable(&cdiag_real(&[1.0, -1.0]), &gaps(&[], true)).unwrap();
        assert!(u.holds);
        let (first, second) = u.split.unwrap();
        assert_eq!(u.eigenvalues[first[0]].re, 1.0);
        assert_eq!(u.eigenvalues[second[0]].re, -1.0);
        assert!(!is_strongly_unstable(&cdiag_real(&[-1.0]), &gaps(&[1.0], false)).unwrap().holds);
    }

    #[test]
    fn empirical_classifier_examples() {
        let r = TimeScale::<f64>::reals();
        let cfg = IntegratorConfig::default();
        let grid = default_probe_grid(&r, 40.0).unwrap();
        let s = classify_stability_empirical(&r, &CoefficientMap::diagonal(&[-1.0]), 40.0, &grid, &cfg).unwrap();
        match s.verdict {
            EmpiricalVerdict::BoundedAllProbes { gamma } => assert!((gamma - 1.0).abs() < 1e-9),
            v => panic!("{v:?}"),
        }
        let s = classify_stability_empirical(&r, &CoefficientMap::diagonal(&[1.0]), 40.0, &grid, &cfg).unwrap();
        assert_eq!(s.verdict, EmpiricalVerdict::UnboundedAt(0.0));
    }

    #[test]
    fn rotation_is_neither() {
        let rot = cmat_from_real(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let p = gaps(&[], true);
        assert!(!is_strongly_stable(&rot, &p).unwrap().holds);
        assert!(!is_strongly_unstable(&rot, &p).unwrap().holds);
    }
}
