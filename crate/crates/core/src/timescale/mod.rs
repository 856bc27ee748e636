//! Exact time scales: ordered intervals and isolated points followed by a
//! periodic, generator-driven or half-line tail.
//!
//! Jump structure is read off the component list; no floating-point search is
//! used to find σ. Components are addressed by a global `u64` index, so tail
//! components are produced on demand.

mod format;

use crate::error::{Error, Result};
use crate::num::{lit, to_f64, CMat, CVec, Cplx, Real};
use nalgebra::DVector;

/// A connected piece of the scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Component<R: Real> {
    Interval { start: R, end: R },
    Point(R),
}

impl<R: Real> Component<R> {
    pub fn start(&self) -> R {
        match *self {
            Component::Interval { start, .. } => start,
            Component::Point(t) => t,
        }
    }

    pub fn end(&self) -> R {
        match *self {
            Component::Interval { end, .. } => end,
            Component::Point(t) => t,
        }
    }

    fn shifted(&self, by: R) -> Self {
        match *self {
            Component::Interval { start, end } => Component::Interval { start: start + by, end: end + by },
            Component::Point(t) => Component::Point(t + by),
        }
    }
}

/// Epoch sequence `n_k` for the glued construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpochRule {
    /// `n_k = k^e`, `e ≥ 2`.
    Power(u32),
}

impl Default for EpochRule {
    fn default() -> Self {
        EpochRule::Power(2)
    }
}

impl EpochRule {
    pub fn n(&self, k: u64) -> u64 {
        match *self {
            EpochRule::Power(e) => k.pow(e),
        }
    }

    /// Largest `k` with `n_k ≤ x`.
    fn index_at_most(&self, x: u64) -> u64 {
        match *self {
            EpochRule::Power(e) => {
                let mut k = (x as f64).powf(1.0 / e as f64).floor() as u64;
                while k > 0 && self.n(k) > x {
                    k -= 1;
                }
                while self.n(k + 1) <= x {
                    k += 1;
                }
                k
            }
        }
    }
}

/// Rule-based tails generating components on demand.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator<R: Real> {
    /// Glued scale: on epoch `j` the interval `[6q n_j, 6q n_j + 6p m_j]`
    /// followed by the multiples of 6 up to `6q n_{j+1}`, with
    /// `m_j = n_{j+1} − n_j`. All gaps equal 6 and the continuous fraction of
    /// every epoch is `p/q`.
    Example46 { p: u32, q: u32, epochs: EpochRule },
    /// Isolated points `unit·r(r+1)/2`; gaps grow without bound.
    GrowingGaps { unit: R },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Tail<R: Real> {
    /// Copies of `pattern` shifted by `k·period` for every `k ≥ k₀`, where the
    /// first copy starts after the last explicit component.
    Periodic { period: R, pattern: Vec<Component<R>> },
    Generator(Generator<R>),
    /// The last explicit component is extended to `+∞`.
    HalfLine,
}

/// A realized component; `end == None` means it runs to `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Span<R: Real> {
    pub start: R,
    pub end: Option<R>,
}

impl<R: Real> Span<R> {
    pub fn is_point(&self) -> bool {
        self.end == Some(self.start)
    }

    pub fn contains(&self, t: R) -> bool {
        t >= self.start && self.end.is_none_or(|e| t <= e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointKind {
    RightScattered,
    RightDense,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GapBound<R: Real> {
    Finite(R),
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrainProfile<R: Real> {
    /// Distinct gap lengths, ascending.
    pub attained_gaps: Vec<R>,
    pub has_dense_tail: bool,
    pub sup_gap: GapBound<R>,
    /// True when the profile is read off a periodic or half-line tail rather
    /// than sampled on a horizon.
    pub exact: bool,
}

impl<R: Real> GrainProfile<R> {
    pub fn sup_gap_value(&self) -> Option<R> {
        match self.sup_gap {
            GapBound::Finite(g) => Some(g),
            GapBound::Unbounded => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Syndetic {
    Yes,
    No,
    UnknownAtHorizon,
}

/// Composite Simpson resolution on dense pieces: the step is
/// `min(rel_step·length, max_step)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig<R: Real> {
    pub rel_step: R,
    pub max_step: R,
}

impl<R: Real> Default for QuadratureConfig<R> {
    fn default() -> Self {
        Self { rel_step: lit(1e-2), max_step: lit(1e-2) }
    }
}

/// Values that can be Δ-integrated.
pub trait DeltaValue<R: Real>: Clone {
    fn zero_like(&self) -> Self;
    fn add_scaled(&mut self, w: R, other: &Self);
}

impl<R: Real> DeltaValue<R> for R {
    fn zero_like(&self) -> Self {
        R::zero()
    }
    fn add_scaled(&mut self, w: R, other: &Self) {
        *self += w * *other;
    }
}

impl<R: Real> DeltaValue<R> for Cplx<R> {
    fn zero_like(&self) -> Self {
        Cplx::new(R::zero(), R::zero())
    }
    fn add_scaled(&mut self, w: R, other: &Self) {
        *self += *other * w;
    }
}

impl<R: Real> DeltaValue<R> for DVector<R> {
    fn zero_like(&self) -> Self {
        DVector::zeros(self.len())
    }
    fn add_scaled(&mut self, w: R, other: &Self) {
        self.axpy(w, other, R::one());
    }
}

impl<R: Real> DeltaValue<R> for CVec<R> {
    fn zero_like(&self) -> Self {
        CVec::zeros(self.len())
    }
    fn add_scaled(&mut self, w: R, other: &Self) {
        self.axpy(Cplx::new(w, R::zero()), other, Cplx::new(R::one(), R::zero()));
    }
}

impl<R: Real> DeltaValue<R> for CMat<R> {
    fn zero_like(&self) -> Self {
        CMat::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, w: R, other: &Self) {
        self.zip_apply(other, |a, b| *a += b * w);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeScale<R: Real> {
    components: Vec<Component<R>>,
    tail: Tail<R>,
    /// First shift index of a periodic tail.
    k0: u64,
}

fn lit_u<R: Real>(x: u64) -> R {
    R::from_u64(x).expect("integer representable")
}

impl<R: Real> TimeScale<R> {
    pub fn new(components: Vec<Component<R>>, tail: Tail<R>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidScale(m.to_string()));
        check_components(&components)?;
        let mut k0 = 0;
        match &tail {
            Tail::Periodic { period, pattern } => {
                if *period <= R::zero() {
                    return bad("period must be positive");
                }
                if pattern.is_empty() {
                    return bad("periodic tail needs a nonempty pattern");
                }
                check_components(pattern)?;
                let first = pattern[0].start();
                let last = pattern[pattern.len() - 1].end();
                if last >= first + *period {
                    return bad("pattern must leave a positive gap before its next copy");
                }
                if let Some(c) = components.last() {
                    let need = c.end();
                    let mut k = to_f64((need - first) / *period).floor().max(0.0) as u64;
                    while first + lit_u::<R>(k) * *period <= need {
                        k += 1;
                    }
                    while k > 0 && first + lit_u::<R>(k - 1) * *period > need {
                        k -= 1;
                    }
                    k0 = k;
                }
            }
            Tail::Generator(g) => {
                if !components.is_empty() {
                    return bad("generator tails do not take explicit components");
                }
                match g {
                    Generator::Example46 { p, q, epochs } => {
                        if *p == 0 || p >= q {
                            return Err(Error::BadFraction { p: *p, q: *q });
                        }
                        let EpochRule::Power(e) = epochs;
                        if *e < 2 {
                            return bad("epoch exponent must be at least 2");
                        }
                    }
                    Generator::GrowingGaps { unit } => {
                        if *unit <= R::zero() {
                            return bad("gap unit must be positive");
                        }
                    }
                }
            }
            Tail::HalfLine => {
                if components.is_empty() {
                    return bad("half-line tail needs at least one component");
                }
            }
        }
        let ts = Self { components, tail, k0 };
        if !ts.contains(R::zero()) {
            return bad("0 must belong to the scale");
        }
        Ok(ts)
    }

    /// `hℤ`.
    pub fn lattice(h: R) -> Result<Self> {
        Self::new(vec![], Tail::Periodic { period: h, pattern: vec![Component::Point(R::zero())] })
    }

    pub fn integers() -> Self {
        Self::lattice(R::one()).expect("valid lattice")
    }

    /// The half-line `[0, ∞)`, standing in for ℝ.
    pub fn reals() -> Self {
        Self::new(vec![Component::Interval { start: R::zero(), end: R::one() }], Tail::HalfLine)
            .expect("valid half-line")
    }

    /// The glued scale built from `p/q` and an epoch rule.
    pub fn example46(p: u32, q: u32, epochs: EpochRule) -> Result<Self> {
        Self::new(vec![], Tail::Generator(Generator::Example46 { p, q, epochs }))
    }

    /// Points `unit·r(r+1)/2`: a non-syndetic scale.
    pub fn growing_gaps(unit: R) -> Result<Self> {
        Self::new(vec![], Tail::Generator(Generator::GrowingGaps { unit }))
    }

    pub fn components(&self) -> &[Component<R>] {
        &self.components
    }

    pub fn tail(&self) -> &Tail<R> {
        &self.tail
    }

    pub fn min(&self) -> R {
        self.span(0).expect("nonempty").start
    }

    /// Start of the first tail-generated component.
    pub fn tail_start(&self) -> R {
        match self.tail {
            Tail::HalfLine => self.components[self.components.len() - 1].start(),
            _ => self.span(self.components.len() as u64).expect("tail component").start,
        }
    }

    /// Component number `idx`, if it exists.
    pub fn span(&self, idx: u64) -> Option<Span<R>> {
        let e = self.components.len() as u64;
        if idx < e {
            let c = self.components[idx as usize];
            let end = if matches!(self.tail, Tail::HalfLine) && idx + 1 == e { None } else { Some(c.end()) };
            return Some(Span { start: c.start(), end });
        }
        let r = idx - e;
        let c = match &self.tail {
            Tail::HalfLine => return None,
            Tail::Periodic { period, pattern } => {
                let l = pattern.len() as u64;
                let k = self.k0 + r / l;
                pattern[(r % l) as usize].shifted(lit_u::<R>(k) * *period)
            }
            Tail::Generator(Generator::Example46 { p, q, epochs }) => {
                let d = (*q - *p) as u64;
                let j = epochs.index_at_most(r / d);
                let w = r - d * epochs.n(j);
                example46_component(*p, *q, epochs, j, w)
            }
            Tail::Generator(Generator::GrowingGaps { unit }) => {
                Component::Point(*unit * lit_u::<R>(r) * lit_u::<R>(r + 1) / lit(2.0))
            }
        };
        Some(Span { start: c.start(), end: Some(c.end()) })
    }

    /// Index of the first component whose right end is `≥ t`.
    pub fn seek(&self, t: R) -> u64 {
        let e = self.components.len();
        let half = matches!(self.tail, Tail::HalfLine);
        let pos = self.components.partition_point(|c| c.end() < t);
        if pos < e {
            return pos as u64;
        }
        if half {
            return (e - 1) as u64;
        }
        let e = e as u64;
        match &self.tail {
            Tail::HalfLine => unreachable!(),
            Tail::Periodic { period, pattern } => {
                let l = pattern.len() as u64;
                let first = pattern[0].start();
                let guess = to_f64((t - first) / *period).floor();
                let mut k = if guess.is_finite() && guess > 0.0 { guess as u64 } else { 0 };
                k = k.saturating_sub(1).max(self.k0);
                loop {
                    let shift = lit_u::<R>(k) * *period;
                    for (i, c) in pattern.iter().enumerate() {
                        if c.end() + shift >= t {
                            return e + (k - self.k0) * l + i as u64;
                        }
                    }
                    k += 1;
                }
            }
            Tail::Generator(Generator::Example46 { p, q, epochs }) => {
                if t <= R::zero() {
                    return e;
                }
                let d = (*q - *p) as u64;
                let six_q: R = lit(6.0 * *q as f64);
                let u = to_f64(t / six_q).floor().max(0.0) as u64;
                let mut j = epochs.index_at_most(u);
                while six_q * lit_u::<R>(epochs.n(j + 1)) <= t {
                    j += 1;
                }
                while j > 0 && six_q * lit_u::<R>(epochs.n(j)) > t {
                    j -= 1;
                }
                let nj = epochs.n(j);
                let mj = epochs.n(j + 1) - nj;
                let base = six_q * lit_u::<R>(nj);
                let iend = base + lit::<R>(6.0 * *p as f64) * lit_u::<R>(mj);
                if t <= iend {
                    return e + d * nj;
                }
                let six: R = lit(6.0);
                let mut w = to_f64((t - iend) / six).ceil().max(1.0) as u64;
                while w > 1 && iend + six * lit_u::<R>(w - 1) >= t {
                    w -= 1;
                }
                while iend + six * lit_u::<R>(w) < t {
                    w += 1;
                }
                if w >= d * mj {
                    e + d * epochs.n(j + 1)
                } else {
                    e + d * nj + w
                }
            }
            Tail::Generator(Generator::GrowingGaps { unit }) => {
                if t <= R::zero() {
                    return e;
                }
                let x = to_f64(t / *unit);
                let mut r = (((8.0 * x + 1.0).sqrt() - 1.0) / 2.0).ceil().max(0.0) as u64;
                let val = |r: u64| *unit * lit_u::<R>(r) * lit_u::<R>(r + 1) / lit(2.0);
                while r > 0 && val(r - 1) >= t {
                    r -= 1;
                }
                while val(r) < t {
                    r += 1;
                }
                e + r
            }
        }
    }

    fn span_at(&self, idx: u64) -> Span<R> {
        self.span(idx).expect("component index in range")
    }

    pub fn contains(&self, t: R) -> bool {
        self.span_at(self.seek(t)).start <= t
    }

    fn require(&self, t: R) -> Result<(u64, Span<R>)> {
        let idx = self.seek(t);
        let s = self.span_at(idx);
        if s.start <= t {
            Ok((idx, s))
        } else {
            Err(Error::NotInScale { t: to_f64(t) })
        }
    }

    pub fn sigma(&self, t: R) -> Result<R> {
        let (idx, s) = self.require(t)?;
        match s.end {
            Some(e) if t >= e => Ok(self.span_at(idx + 1).start),
            _ => Ok(t),
        }
    }

    pub fn mu(&self, t: R) -> Result<R> {
        Ok(self.sigma(t)? - t)
    }

    pub fn classify_point(&self, t: R) -> Result<PointKind> {
        Ok(if self.mu(t)? > R::zero() { PointKind::RightScattered } else { PointKind::RightDense })
    }

    /// `sup(𝕋 ∩ (−∞, t])`.
    pub fn floor_scale(&self, t: R) -> Result<R> {
        if t < self.min() {
            return Err(Error::BeforeScaleStart { t: to_f64(t) });
        }
        let idx = self.seek(t);
        let s = self.span_at(idx);
        if s.start <= t {
            Ok(t)
        } else {
            Ok(self.span_at(idx - 1).end.expect("bounded component before a later one"))
        }
    }

    /// `inf(𝕋 ∩ [t, ∞))`.
    pub fn ceil_scale(&self, t: R) -> R {
        let s = self.span_at(self.seek(t));
        if s.start <= t {
            t
        } else {
            s.start
        }
    }

    /// Components meeting `[a, b]`, in order.
    pub fn spans(&self, a: R, b: R) -> SpanIter<'_, R> {
        SpanIter { ts: self, idx: self.seek(a), until: b }
    }

    /// Right-scattered points `t ∈ [a, b)` with their graininess.
    pub fn scattered_points(&self, a: R, b: R) -> impl Iterator<Item = (R, R)> + '_ {
        let mut it = self.spans(a, b);
        let mut done = false;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            loop {
                let (idx, s) = it.next_indexed()?;
                let Some(e) = s.end else {
                    done = true;
                    return None;
                };
                if e >= a && e < b {
                    let next = self.span_at(idx + 1).start;
                    return Some((e, next - e));
                }
            }
        })
    }

    /// Component boundaries in `[a, b]`, ascending and deduplicated.
    pub fn boundaries(&self, a: R, b: R) -> Vec<R> {
        let mut out = Vec::new();
        for s in self.spans(a, b) {
            if s.start >= a && s.start <= b {
                out.push(s.start);
            }
            if let Some(e) = s.end {
                if e > s.start && e >= a && e <= b {
                    out.push(e);
                }
            }
        }
        out
    }

    /// Up to `max` representative scale points in `[a, b]`: every isolated
    /// point, and the start, midpoint and end of every interval.
    pub fn sample_points(&self, a: R, b: R, max: usize) -> Vec<R> {
        let mut out = Vec::new();
        for s in self.spans(a, b) {
            let lo = s.start.max(a);
            let hi = s.end.unwrap_or(b).min(b);
            out.push(lo);
            if hi > lo {
                out.push((lo + hi) / lit(2.0));
                out.push(hi);
            }
            if out.len() >= max {
                break;
            }
        }
        out.truncate(max);
        out
    }

    pub fn grain_profile(&self, horizon: R) -> GrainProfile<R> {
        match &self.tail {
            Tail::Periodic { period, pattern } => {
                let mut gaps = Vec::new();
                for w in pattern.windows(2) {
                    gaps.push(w[1].start() - w[0].end());
                }
                gaps.push(pattern[0].start() + *period - pattern[pattern.len() - 1].end());
                let gaps = dedup_sorted(gaps);
                let sup = gaps.iter().fold(R::zero(), |m, g| m.max(*g));
                GrainProfile {
                    attained_gaps: gaps,
                    has_dense_tail: pattern.iter().any(|c| matches!(c, Component::Interval { .. })),
                    sup_gap: GapBound::Finite(sup),
                    exact: true,
                }
            }
            Tail::HalfLine => GrainProfile {
                attained_gaps: vec![],
                has_dense_tail: true,
                sup_gap: GapBound::Finite(R::zero()),
                exact: true,
            },
            Tail::Generator(g) => {
                let gaps = dedup_sorted(self.scattered_points(self.min(), horizon).map(|(_, m)| m).collect());
                let (dense, sup) = match g {
                    Generator::Example46 { .. } => (true, GapBound::Finite(lit(6.0))),
                    Generator::GrowingGaps { .. } => (false, GapBound::Unbounded),
                };
                GrainProfile { attained_gaps: gaps, has_dense_tail: dense, sup_gap: sup, exact: false }
            }
        }
    }

    pub fn is_syndetic(&self, _horizon: R) -> Syndetic {
        match &self.tail {
            Tail::Periodic { .. } | Tail::HalfLine => Syndetic::Yes,
            Tail::Generator(Generator::Example46 { .. }) => Syndetic::Yes,
            Tail::Generator(Generator::GrowingGaps { .. }) => Syndetic::No,
        }
    }

    /// Δ-integral of `f` over `[a, b]`.
    pub fn delta_integral<V, F>(&self, mut f: F, a: R, b: R, quad: &QuadratureConfig<R>) -> Result<V>
    where
        V: DeltaValue<R>,
        F: FnMut(R) -> V,
    {
        self.try_delta_integral(|t| Ok(f(t)), a, b, quad)
    }

    /// Δ-integral of a fallible integrand.
    pub fn try_delta_integral<V, F>(&self, mut f: F, a: R, b: R, quad: &QuadratureConfig<R>) -> Result<V>
    where
        V: DeltaValue<R>,
        F: FnMut(R) -> Result<V>,
    {
        self.try_delta_integral_with(|t, _| f(t), a, b, quad)
    }

    /// Δ-integral where the integrand also receives the graininess it is
    /// sampled with: `0` at quadrature nodes of dense pieces (including an
    /// interval's right end, taken as a left limit) and `μ(t)` at jumps.
    pub fn try_delta_integral_with<V, F>(&self, mut f: F, a: R, b: R, quad: &QuadratureConfig<R>) -> Result<V>
    where
        V: DeltaValue<R>,
        F: FnMut(R, R) -> Result<V>,
    {
        for x in [a, b] {
            if !self.contains(x) {
                return Err(Error::EndpointNotInScale { t: to_f64(x) });
            }
        }
        if b < a {
            return Err(Error::InvalidArgument("integration bounds reversed".into()));
        }
        let mut acc: Option<V> = None;
        let mut it = self.spans(a, b);
        while let Some((idx, s)) = it.next_indexed() {
            let lo = s.start.max(a);
            let hi = s.end.map_or(b, |e| e.min(b));
            if hi > lo {
                simpson(&mut |t| f(t, R::zero()), lo, hi, quad, &mut acc)?;
            }
            if let Some(e) = s.end {
                if e >= a && e < b {
                    let mu = self.span_at(idx + 1).start - e;
                    let v = f(e, mu)?;
                    add_into(&mut acc, mu, &v);
                }
            }
        }
        match acc {
            Some(v) => Ok(v),
            None => Ok(f(a, R::zero())?.zero_like()),
        }
    }
}

fn add_into<R: Real, V: DeltaValue<R>>(acc: &mut Option<V>, w: R, v: &V) {
    match acc {
        Some(a) => a.add_scaled(w, v),
        None => {
            let mut z = v.zero_like();
            z.add_scaled(w, v);
            *acc = Some(z);
        }
    }
}

fn simpson<R: Real, V: DeltaValue<R>>(
    f: &mut impl FnMut(R) -> Result<V>,
    lo: R,
    hi: R,
    quad: &QuadratureConfig<R>,
    acc: &mut Option<V>,
) -> Result<()> {
    let len = hi - lo;
    let step = (quad.rel_step * len).min(quad.max_step);
    let mut n = to_f64((len / step).ceil()).max(2.0) as u64;
    if n % 2 == 1 {
        n += 1;
    }
    let h = len / lit_u::<R>(n);
    let w = h / lit(3.0);
    let two: R = lit(2.0);
    let four: R = lit(4.0);
    add_into(acc, w, &f(lo)?);
    for i in 1..n {
        let t = lo + h * lit_u::<R>(i);
        let c = if i % 2 == 1 { four } else { two };
        add_into(acc, w * c, &f(t)?);
    }
    add_into(acc, w, &f(hi)?);
    Ok(())
}

fn dedup_sorted<R: Real>(mut v: Vec<R>) -> Vec<R> {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite gaps"));
    let mut out: Vec<R> = Vec::new();
    for g in v {
        match out.last() {
            Some(&l) if (g - l).abs() <= lit::<R>(1e-12) * g.abs().max(R::one()) => {}
            _ => out.push(g),
        }
    }
    out
}

fn check_components<R: Real>(cs: &[Component<R>]) -> Result<()> {
    for c in cs {
        if let Component::Interval { start, end } = c {
            if !(start < end) {
                return Err(Error::InvalidScale(format!("interval [{start}, {end}] is empty")));
            }
        }
        if !to_f64(c.start()).is_finite() || !to_f64(c.end()).is_finite() {
            return Err(Error::InvalidScale("non-finite component".into()));
        }
    }
    for w in cs.windows(2) {
        if !(w[1].start() > w[0].end()) {
            return Err(Error::InvalidScale(format!(
                "components must be increasing with positive gaps ({} then {})",
                w[0].end(),
                w[1].start()
            )));
        }
    }
    Ok(())
}

fn example46_component<R: Real>(p: u32, q: u32, epochs: &EpochRule, j: u64, w: u64) -> Component<R> {
    let nj = epochs.n(j);
    let mj = epochs.n(j + 1) - nj;
    let base: R = lit::<R>(6.0 * q as f64) * lit_u::<R>(nj);
    let iend = base + lit::<R>(6.0 * p as f64) * lit_u::<R>(mj);
    if w == 0 {
        Component::Interval { start: base, end: iend }
    } else {
        Component::Point(iend + lit::<R>(6.0) * lit_u::<R>(w))
    }
}

/// Iterator over the components meeting a window.
pub struct SpanIter<'a, R: Real> {
    ts: &'a TimeScale<R>,
    idx: u64,
    until: R,
}

impl<R: Real> SpanIter<'_, R> {
    fn next_indexed(&mut self) -> Option<(u64, Span<R>)> {
        let s = self.ts.span(self.idx)?;
        if s.start > self.until {
            return None;
        }
        let i = self.idx;
        self.idx += 1;
        Some((i, s))
    }
}

impl<R: Real> Iterator for SpanIter<'_, R> {
    type Item = Span<R>;
    fn next(&mut self) -> Option<Span<R>> {
        self.next_indexed().map(|(_, s)| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gapped() -> TimeScale<f64> {
        // {0} ∪ [2,3] ∪ [5,6] ∪ [8,9] ∪ …
        TimeScale::new(
            vec![Component::Point(0.0)],
            Tail::Periodic { period: 3.0, pattern: vec![Component::Interval { start: 2.0, end: 3.0 }] },
        )
        .unwrap()
    }

    fn gapped4() -> TimeScale<f64> {
        // {0} ∪ [2,4] ∪ [6,8] ∪ …
        TimeScale::new(
            vec![Component::Point(0.0)],
            Tail::Periodic { period: 4.0, pattern: vec![Component::Interval { start: 2.0, end: 4.0 }] },
        )
        .unwrap()
    }

    #[test]
    fn integer_membership() {
        let z = TimeScale::<f64>::integers();
        assert!(z.contains(3.0));
        assert!(z.contains(0.0));
        assert!(!z.contains(0.5));
        assert_eq!(z.sigma(2.0).unwrap(), 3.0);
        assert_eq!(z.floor_scale(2.7).unwrap(), 2.0);
        assert_eq!(z.classify_point(0.0).unwrap(), PointKind::RightScattered);
    }

    #[test]
    fn jump_structure_of_gapped_scale() {
        let ts = gapped();
        assert_eq!(ts.sigma(0.0).unwrap(), 2.0);
        assert_eq!(ts.mu(0.0).unwrap(), 2.0);
        assert_eq!(ts.sigma(2.5).unwrap(), 2.5);
        assert_eq!(ts.sigma(3.0).unwrap(), 5.0);
        assert_eq!(ts.classify_point(3.0).unwrap(), PointKind::RightScattered);
        assert_eq!(ts.classify_point(2.0).unwrap(), PointKind::RightDense);
        assert_eq!(ts.floor_scale(1.5).unwrap(), 0.0);
        assert_eq!(ts.floor_scale(4.0).unwrap(), 3.0);
        assert!(matches!(ts.sigma(1.0), Err(Error::NotInScale { .. })));
        assert!(matches!(ts.floor_scale(-1.0), Err(Error::BeforeScaleStart { .. })));
    }

    #[test]
    fn lattice_graininess() {
        let ts = TimeScale::<f64>::lattice(6.0).unwrap();
        assert_eq!(ts.mu(42.0).unwrap(), 6.0);
        let prof = ts.grain_profile(100.0);
        assert_eq!(prof.attained_gaps, vec![6.0]);
        assert_eq!(prof.sup_gap, GapBound::Finite(6.0));
        assert!(!prof.has_dense_tail);
        assert_eq!(ts.is_syndetic(100.0), Syndetic::Yes);
    }

    #[test]
    fn reals_profile() {
        let ts = TimeScale::<f64>::reals();
        assert!(ts.contains(1e9));
        assert_eq!(ts.mu(5.0).unwrap(), 0.0);
        let prof = ts.grain_profile(10.0);
        assert!(prof.attained_gaps.is_empty());
        assert_eq!(prof.sup_gap, GapBound::Finite(0.0));
    }

    #[test]
    fn example46_membership_by_hand() {
        // epoch 0: [0, 6]; points 12; epoch 1 (n=1, m=3): [18, 36], points 42..66;
        // epoch 2 (n=4, m=5): [72, 102], ...
        let ts = TimeScale::<f64>::example46(1, 3, EpochRule::Power(2)).unwrap();
        assert!(ts.contains(18.0));
        assert!(ts.contains(0.0) && ts.contains(6.0) && ts.contains(3.3));
        assert!(ts.contains(12.0));
        assert!(!ts.contains(9.0));
        assert!(ts.contains(30.5));
        assert!(!ts.contains(39.0));
        assert!(ts.contains(66.0));
        assert_eq!(ts.sigma(66.0).unwrap(), 72.0);
        assert_eq!(ts.sigma(36.0).unwrap(), 42.0);
        assert_eq!(ts.sigma(6.0).unwrap(), 12.0);
        assert_eq!(ts.sigma(12.0).unwrap(), 18.0);
        assert!(ts.contains(102.0) && !ts.contains(103.0));
    }

    #[test]
    fn example46_contains_multiples_of_six() {
        let ts = TimeScale::<f64>::example46(1, 3, EpochRule::Power(2)).unwrap();
        for k in 0..5000u32 {
            assert!(ts.contains(6.0 * k as f64), "6·{k}");
        }
    }

    #[test]
    fn example46_gaps_are_six_and_dense_fraction_is_a() {
        let ts = TimeScale::<f64>::example46(1, 3, EpochRule::Power(2)).unwrap();
        let prof = ts.grain_profile(2e4);
        assert_eq!(prof.attained_gaps, vec![6.0]);
        assert!(prof.has_dense_tail);
        assert_eq!(ts.is_syndetic(1.0), Syndetic::Yes);
        // epoch j = 10 spans [18·100, 18·121]; its dense measure is 6·21.
        let (a, b) = (1800.0, 2178.0);
        let dense: f64 = ts.spans(a, b).filter(|s| !s.is_point()).map(|s| s.end.unwrap().min(b) - s.start.max(a)).sum();
        assert_relative_eq!(dense / (b - a), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn example46_rejects_bad_fraction() {
        assert!(matches!(TimeScale::<f64>::example46(3, 3, EpochRule::Power(2)), Err(Error::BadFraction { .. })));
    }

    #[test]
    fn growing_gaps_is_not_syndetic() {
        let ts = TimeScale::<f64>::growing_gaps(1.0).unwrap();
        assert_eq!(ts.is_syndetic(100.0), Syndetic::No);
        assert_eq!(ts.sigma(10.0).unwrap(), 15.0);
        assert_eq!(ts.grain_profile(1.0).sup_gap, GapBound::Unbounded);
    }

    #[test]
    fn delta_integral_examples() {
        let q = QuadratureConfig::default();
        let z = TimeScale::<f64>::integers();
        assert_eq!(z.delta_integral(|_| 1.0, 0.0, 5.0, &q).unwrap(), 5.0);
        let r = TimeScale::<f64>::reals();
        assert_relative_eq!(r.delta_integral(|t| t, 0.0, 2.0, &q).unwrap(), 2.0, epsilon = 1e-12);
        let g = gapped4();
        assert_relative_eq!(g.delta_integral(|_| 1.0, 0.0, 4.0, &q).unwrap(), 4.0, epsilon = 1e-12);
        assert!(matches!(z.delta_integral(|_| 1.0, 0.0, 2.5, &q), Err(Error::EndpointNotInScale { .. })));
    }

    #[test]
    fn rejects_scales_without_zero() {
        let r = TimeScale::<f64>::new(vec![Component::Point(1.0)], Tail::HalfLine);
        assert!(r.is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn periodic_scale() -> impl Strategy<Value = TimeScale<f64>> {
            (0.5f64..3.0, 0.1f64..0.9, proptest::bool::ANY).prop_map(|(period, frac, dense)| {
                let pattern = if dense {
                    vec![Component::Interval { start: 0.0, end: frac * period }]
                } else {
                    vec![Component::Point(0.0), Component::Point(frac * period)]
                };
                TimeScale::new(vec![], Tail::Periodic { period, pattern }).unwrap()
            })
        }

        proptest! {
            #[test]
            fn sigma_is_monotone_and_in_scale(ts in periodic_scale(), xs in proptest::collection::vec(0.0f64..50.0, 20)) {
                let mut pts: Vec<f64> = xs.iter().map(|x| ts.floor_scale(*x).unwrap()).collect();
                pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut last = f64::NEG_INFINITY;
                for t in pts {
                    let s = ts.sigma(t).unwrap();
                    prop_assert!(s >= t);
                    prop_assert!(s >= last);
                    prop_assert!(ts.contains(s));
                    prop_assert_eq!(ts.floor_scale(s).unwrap(), s);
                    last = s;
                }
            }

            #[test]
            fn integral_is_additive(ts in periodic_scale(), a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.0f64..10.0) {
                let mut v = [ts.floor_scale(a).unwrap(), ts.floor_scale(b).unwrap(), ts.floor_scale(c).unwrap()];
                v.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let q = QuadratureConfig::default();
                let f = |t: f64| (0.3 * t).sin() + 1.0;
                let whole = ts.delta_integral(f, v[0], v[2], &q).unwrap();
                let parts = ts.delta_integral(f, v[0], v[1], &q).unwrap() + ts.delta_integral(f, v[1], v[2], &q).unwrap();
                prop_assert!((whole - parts).abs() < 1e-8);
            }

            #[test]
            fn lattice_integral_is_exact_sum(h in 0.1f64..5.0, n in 0usize..40) {
                let ts = TimeScale::lattice(h).unwrap();
                let f = |t: f64| t * t - 1.0;
                let b = ts.floor_scale(h * n as f64 + h * 0.25).unwrap();
                let got = ts.delta_integral(f, 0.0, b, &QuadratureConfig::default()).unwrap();
                let want: f64 = (0..n).map(|k| h * f(h * k as f64)).sum();
                prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }
}
