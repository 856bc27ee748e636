use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, min_singular_value, spectral_norm};
use crate::num::{cabs, cdiag_real, cx, lit, CMat, Real};
use crate::ode::{sampled_sup_norm, OdeCoefficient, SumCoefficient};
use crate::timescale::{EpochRule, Tail, TimeScale};
use std::fmt;
use std::sync::Arc;

/// Rule producing the matrix `A(t)`.
#[derive(Clone)]
pub enum CoefficientRule<R: Real> {
    Constant(CMat<R>),
    /// `(start, matrix)` pairs sorted by start; each holds until the next.
    Piecewise(Vec<(R, CMat<R>)>),
    /// `first` on `[n_k, n_{k+1})` for even `k`, `second` for odd `k`.
    Alternating { epochs: EpochRule, first: CMat<R>, second: CMat<R> },
    Callback(Arc<dyn Fn(R) -> CMat<R> + Send + Sync>),
    /// A coefficient that reports its own piece structure.
    Structured(Arc<dyn OdeCoefficient<R>>),
}

/// Matrix-valued coefficient on a time scale (or on the half-line).
#[derive(Clone)]
pub struct CoefficientMap<R: Real> {
    dim: usize,
    rule: CoefficientRule<R>,
    declared_bound: Option<R>,
}

impl<R: Real> fmt::Debug for CoefficientMap<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.rule {
            CoefficientRule::Constant(_) => "Constant",
            CoefficientRule::Piecewise(_) => "Piecewise",
            CoefficientRule::Alternating { .. } => "Alternating",
            CoefficientRule::Callback(_) => "Callback",
            CoefficientRule::Structured(_) => "Structured",
        };
        write!(f, "CoefficientMap({kind}, n = {})", self.dim)
    }
}

fn check_square<R: Real>(n: usize, m: &CMat<R>) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.nrows().max(m.ncols()) });
    }
    Ok(())
}

impl<R: Real> CoefficientMap<R> {
    pub fn constant(m: CMat<R>) -> Self {
        Self { dim: m.nrows(), rule: CoefficientRule::Constant(m), declared_bound: None }
    }

    pub fn diagonal(d: &[R]) -> Self {
        Self::constant(cdiag_real(d))
    }

    pub fn piecewise(pieces: Vec<(R, CMat<R>)>) -> Result<Self> {
        let n = pieces.first().map(|p| p.1.nrows()).ok_or_else(|| Error::InvalidArgument("no pieces".into()))?;
        for (i, (_, m)) in pieces.iter().enumerate() {
            check_square(n, m)?;
            if i > 0 && !(pieces[i - 1].0 < pieces[i].0) {
                return Err(Error::InvalidArgument("piece starts must increase".into()));
            }
        }
        Ok(Self { dim: n, rule: CoefficientRule::Piecewise(pieces), declared_bound: None })
    }

    pub fn alternating(epochs: EpochRule, first: CMat<R>, second: CMat<R>) -> Result<Self> {
        let n = first.nrows();
        check_square(n, &first)?;
        check_square(n, &second)?;
        Ok(Self { dim: n, rule: CoefficientRule::Alternating { epochs, first, second }, declared_bound: None })
    }

    pub fn callback(dim: usize, f: impl Fn(R) -> CMat<R> + Send + Sync + 'static) -> Self {
        Self { dim, rule: CoefficientRule::Callback(Arc::new(f)), declared_bound: None }
    }

    pub fn structured(c: Arc<dyn OdeCoefficient<R>>) -> Self {
        Self { dim: c.dim(), rule: CoefficientRule::Structured(c), declared_bound: None }
    }

    /// Declares `sup ‖A‖` so callers need not sample callbacks.
    pub fn with_bound(mut self, bound: R) -> Self {
        self.declared_bound = Some(bound);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rule(&self) -> &CoefficientRule<R> {
        &self.rule
    }

    pub fn as_constant(&self) -> Option<&CMat<R>> {
        match &self.rule {
            CoefficientRule::Constant(m) => Some(m),
            _ => None,
        }
    }

    pub fn at(&self, t: R) -> CMat<R> {
        match &self.rule {
            CoefficientRule::Constant(m) => m.clone(),
            CoefficientRule::Piecewise(v) => {
                let i = v.partition_point(|(s, _)| *s <= t);
                v[i.saturating_sub(1)].1.clone()
            }
            CoefficientRule::Alternating { epochs, first, second } => {
                let k = if t <= R::zero() { 0 } else { epoch_index(epochs, t) };
                if k % 2 == 0 {
                    first.clone()
                } else {
                    second.clone()
                }
            }
            CoefficientRule::Callback(f) => f(t),
            CoefficientRule::Structured(c) => c.scale_value(t).unwrap_or_else(|| c.eval(t)),
        }
    }

    /// `A + B` as a coefficient map.
    pub fn plus(&self, other: &CoefficientMap<R>) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        if let (Some(a), Some(b)) = (self.as_constant(), other.as_constant()) {
            return Ok(Self::constant(a + b));
        }
        Ok(Self::structured(Arc::new(SumCoefficient {
            left: Arc::new(self.clone()),
            right: Arc::new(other.clone()),
        })))
    }

    /// `sup ‖A(t)‖₂` over `[0, horizon]`: declared, exact for finite rules,
    /// sampled otherwise.
    pub fn sup_norm(&self, horizon: R) -> R {
        if let Some(b) = self.declared_bound {
            return b;
        }
        match &self.rule {
            CoefficientRule::Constant(m) => spectral_norm(m),
            CoefficientRule::Piecewise(v) => v.iter().fold(R::zero(), |a, (_, m)| a.max(spectral_norm(m))),
            CoefficientRule::Alternating { first, second, .. } => spectral_norm(first).max(spectral_norm(second)),
            _ => sampled_sup_norm(self, R::zero(), horizon, 1024),
        }
    }
}

fn epoch_index<R: Real>(epochs: &EpochRule, t: R) -> u64 {
    let x = t.floor().to_u64().unwrap_or(u64::MAX);
    let mut k = match *epochs {
        EpochRule::Power(e) => (x as f64).powf(1.0 / e as f64).floor() as u64,
    };
    while k > 0 && R::from_u64(epochs.n(k)).expect("epoch") > t {
        k -= 1;
    }
    while R::from_u64(epochs.n(k + 1)).expect("epoch") <= t {
        k += 1;
    }
    k
}

impl<R: Real> OdeCoefficient<R> for CoefficientMap<R> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: R) -> CMat<R> {
        match &self.rule {
            CoefficientRule::Structured(c) => c.eval(t),
            _ => self.at(t),
        }
    }

    fn scale_value(&self, t: R) -> Option<CMat<R>> {
        match &self.rule {
            CoefficientRule::Structured(c) => c.scale_value(t),
            _ => None,
        }
    }

    fn breakpoints(&self, a: R, b: R) -> Vec<R> {
        match &self.rule {
            CoefficientRule::Constant(_) | CoefficientRule::Callback(_) => vec![],
            CoefficientRule::Piecewise(v) => v.iter().map(|p| p.0).filter(|s| *s > a && *s < b).collect(),
            CoefficientRule::Alternating { epochs, .. } => {
                let mut out = Vec::new();
                let mut k = if a <= R::zero() { 0 } else { epoch_index(epochs, a) } + 1;
                loop {
                    let t = R::from_u64(epochs.n(k)).expect("epoch");
                    if t >= b {
                        break;
                    }
                    if t > a {
                        out.push(t);
                    }
                    k += 1;
                }
                out
            }
            CoefficientRule::Structured(c) => c.breakpoints(a, b),
        }
    }

    fn constant_on(&self, a: R, b: R) -> Option<CMat<R>> {
        match &self.rule {
            CoefficientRule::Constant(m) => Some(m.clone()),
            CoefficientRule::Piecewise(_) | CoefficientRule::Alternating { .. } => Some(self.at((a + b) / lit(2.0))),
            CoefficientRule::Callback(_) => None,
            CoefficientRule::Structured(c) => c.constant_on(a, b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatrixRegressivity<R: Real> {
    /// `margin` is `inf |1 + μλ_k|` for constant `A` and `inf σ_min(E + μA)`
    /// otherwise, over the scanned jumps (1 when there are none).
    UniformlyRegressive { margin: R },
    Regressive { margin: R },
    Fails(R),
}

/// Regressivity of `A` on the scattered points up to `horizon`; for constant
/// `A` on a periodic tail the gap set is taken from the tail exactly.
pub fn check_regressive_matrix<R: Real>(
    ts: &TimeScale<R>,
    a: &CoefficientMap<R>,
    horizon: R,
) -> Result<MatrixRegressivity<R>> {
    let uniform_floor = lit::<R>(1e-8);
    let mut margin = lit::<R>(f64::INFINITY);
    let mut worst_t = None;
    let eps = R::default_epsilon() * lit(16.0);
    if let Some(m) = a.as_constant() {
        let eig = eigenvalues(m)?;
        let mut gaps: Vec<(R, R)> = ts.scattered_points(ts.min(), horizon).collect();
        if let Tail::Periodic { .. } = ts.tail() {
            let t0 = ts.tail_start();
            gaps.extend(ts.grain_profile(horizon).attained_gaps.into_iter().map(|g| (t0, g)));
        }
        for (t, mu) in gaps {
            for l in &eig {
                let v = cabs(cx::<R>(R::one()) + *l * mu);
                if v < margin {
                    margin = v;
                    worst_t = Some(t);
                }
            }
        }
    } else {
        for (t, mu) in ts.scattered_points(ts.min(), horizon) {
            let j = crate::linalg::identity::<R>(a.dim()) + a.at(t).map(|z| z * mu);
            let v = min_singular_value(&j);
            if v < margin {
                margin = v;
                worst_t = Some(t);
            }
        }
    }
    if worst_t.is_none() {
        margin = R::one();
    }
    Ok(if margin <= eps {
        MatrixRegressivity::Fails(worst_t.unwrap_or(R::zero()))
    } else if margin < uniform_floor {
        MatrixRegressivity::Regressive { margin }
    } else {
        MatrixRegressivity::UniformlyRegressive { margin }
    })
}
