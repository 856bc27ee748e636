use super::schedule::{rotation_plane, RotationEntry, RotationSchedule, RotationStage};
use crate::error::{Error, Result};
use crate::linalg::top_right_singular_vector;
use crate::linstab::{ExponentEstimate, ExponentMethod};
use crate::num::{cx, lit, to_f64, vnorm, CVec, Real};
use crate::ode::{ode_fundamental, sampled_sup_norm, IntegratorConfig, OdeCoefficient, Transition};
use std::sync::Arc;

/// Fewest blocks accepted for a run.
pub const MIN_BLOCKS: usize = 20;

/// How the segment length `T₀` and the block length `T = mT₀` are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockPlan<R: Real> {
    /// `T₀` from `exp(εT₀/4)·sin²δ ≥ 1` rounded up, `m₀` the least integer
    /// with `(2a + (2a+1)δ)/m₀ < ε/8`, candidates `m ∈ {m₀, 2m₀, 3m₀}`.
    Verbatim,
    /// Fixed `T₀ ≥ 1` and explicit candidate multiples, for horizons where
    /// the verbatim sizes leave too few blocks.
    Fixed { t0: R, multiples: Vec<u32> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MillionschikovParams<R: Real> {
    pub eps: R,
    pub delta: R,
    pub horizon: R,
    pub plan: BlockPlan<R>,
    /// `a = sup ‖M‖`; sampled over `[0, horizon]` when absent.
    pub bound: Option<R>,
}

impl<R: Real> MillionschikovParams<R> {
    pub fn new(eps: R, delta: R, horizon: R) -> Self {
        Self { eps, delta, horizon, plan: BlockPlan::Verbatim, bound: None }
    }
}

/// `T₀` from `exp(εT₀/4)·sin²δ ≥ 1`, at least 1.
pub fn segment_length<R: Real>(eps: R, delta: R) -> R {
    let s = delta.sin();
    (lit::<R>(4.0) * (R::one() / (s * s)).ln() / eps).ceil().max(R::one())
}

/// Least `m` with `(2a + (2a+1)δ)/m < ε/8`.
pub fn segment_count<R: Real>(a: R, eps: R, delta: R) -> u32 {
    let two_a = a * lit(2.0);
    let need = (two_a + (two_a + R::one()) * delta) * lit(8.0) / eps;
    to_f64(need.floor()) as u32 + 1
}

/// Bookkeeping for one block `[iT, (i+1)T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockRecord<R: Real> {
    pub index: usize,
    pub start: R,
    /// `log‖Φ((i+1)T, iT)‖`.
    pub log_norm: R,
    /// `log(|y₀((i+1)T)|/|y₀(iT)|)`.
    pub log_growth: R,
    /// Whether the block ratio exceeded `exp(3εT/4)`.
    pub ratio_test: bool,
    /// Segment index `j` of the first rotation.
    pub segment: Option<usize>,
    /// Segments where `y₀` lags the top solution by more than `exp(−εT₀/2)`.
    pub lagging_segments: usize,
    /// Whether the fallback `exp(−(2a+(2a+1)δ)T₀)` held on every lagging segment.
    pub fallback_holds: bool,
    /// Whether the second rotation reached the top direction exactly.
    pub aligned: bool,
}

impl<R: Real> BlockRecord<R> {
    /// `|y₀((i+1)T)|/|y₀(iT)| ≥ ‖Φ‖·exp(−3εT/4)` in log form.
    pub fn block_inequality(&self, eps: R, block: R) -> bool {
        self.log_growth >= self.log_norm - lit::<R>(0.75) * eps * block - lit(1e-9)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateBlock<R: Real> {
    pub m: u32,
    pub block: R,
    pub estimate: R,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DestabilizationReport<R: Real> {
    pub eps: R,
    pub delta: R,
    pub bound: R,
    pub t0: R,
    pub m: u32,
    pub block: R,
    pub verbatim: bool,
    pub candidates: Vec<CandidateBlock<R>>,
    pub blocks: Vec<BlockRecord<R>>,
    pub y0_initial: CVec<R>,
    /// `(t, log|y₀(t)|)` at block ends, with `|y₀(0)| = 1`.
    pub y0_trace: Vec<(R, R)>,
    /// Block-sum estimate of the central exponent at the chosen `T`.
    pub chi_est: ExponentEstimate<R>,
    /// Exponent estimate of `y₀`.
    pub achieved: ExponentEstimate<R>,
    pub measured_norm: R,
    pub unitarity_defect: R,
}

impl<R: Real> DestabilizationReport<R> {
    pub fn rotated_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.segment.is_some()).count()
    }
}

/// A direction with a log scale.
#[derive(Clone, Debug)]
struct Ray<R: Real> {
    dir: CVec<R>,
    log: R,
}

impl<R: Real> Ray<R> {
    fn unit(v: &CVec<R>) -> Self {
        let n = vnorm(v);
        Self { dir: v.map(|z| z.unscale(n)), log: R::zero() }
    }

    /// Flows the ray by `p`; returns the log growth.
    fn advance(&mut self, p: &Transition<R>) -> R {
        let w = &p.unit * &self.dir;
        let n = vnorm(&w);
        self.dir = w.map(|z| z.unscale(n));
        let g = n.ln() + p.logscale;
        self.log += g;
        g
    }
}

struct Segments<R: Real> {
    start: R,
    t0: R,
    pieces: Vec<Transition<R>>,
}

impl<R: Real> Segments<R> {
    fn new(coef: &dyn OdeCoefficient<R>, start: R, t0: R, m: u32, cfg: &IntegratorConfig<R>) -> Self {
        let pieces = (0..m)
            .map(|l| {
                let a = start + t0 * lit::<R>(l as f64);
                ode_fundamental(coef, a + t0, a, cfg)
            })
            .collect();
        Self { start, t0, pieces }
    }

    fn block(&self) -> Transition<R> {
        let n = self.pieces[0].unit.nrows();
        self.pieces.iter().fold(Transition::identity(n), |acc, p| acc.then(p))
    }

    fn at(&self, l: usize) -> R {
        self.start + self.t0 * lit::<R>(l as f64)
    }
}

fn block_log_norms<R: Real>(coef: &dyn OdeCoefficient<R>, block: R, count: usize, cfg: &IntegratorConfig<R>) -> Vec<R> {
    (0..count)
        .map(|i| {
            let a = block * lit::<R>(i as f64);
            ode_fundamental(coef, a + block, a, cfg).log_norm()
        })
        .collect()
}

fn central_estimate<R: Real>(logs: &[R], block: R, tail_fraction: R) -> Result<ExponentEstimate<R>> {
    let mut sum = R::zero();
    let windows = logs
        .iter()
        .enumerate()
        .map(|(i, l)| {
            sum += *l;
            let t = block * lit::<R>((i + 1) as f64);
            (t, sum / t)
        })
        .collect();
    let horizon = block * lit::<R>(logs.len() as f64);
    ExponentEstimate::from_windows(windows, horizon, tail_fraction, ExponentMethod::CentralA1)
}

/// Runs the rotation construction on `ẋ = M(t)x`, `t ≥ 0`, block by block up
/// to `horizon`, carrying the solution `y₀` that starts along the top
/// direction of the first block.
pub fn millionschikov_perturbation<R: Real>(
    coef: Arc<dyn OdeCoefficient<R>>,
    params: &MillionschikovParams<R>,
    cfg: &IntegratorConfig<R>,
) -> Result<(RotationSchedule<R>, DestabilizationReport<R>)> {
    let MillionschikovParams { eps, delta, horizon, .. } = params.clone();
    if !(eps > R::zero()) || !(delta > R::zero()) {
        return Err(Error::InvalidArgument("ε and δ must be positive".into()));
    }
    let a = match params.bound {
        Some(b) => b,
        None => sampled_sup_norm(coef.as_ref(), R::zero(), horizon, 4096),
    };
    let (t0, multiples, verbatim) = match &params.plan {
        BlockPlan::Verbatim => {
            let m0 = segment_count(a, eps, delta);
            (segment_length(eps, delta), vec![m0, 2 * m0, 3 * m0], true)
        }
        BlockPlan::Fixed { t0, multiples } => {
            if *t0 < R::one() || multiples.iter().any(|m| *m < 2) || multiples.is_empty() {
                return Err(Error::InvalidArgument("fixed plan needs T₀ ≥ 1 and multiples ≥ 2".into()));
            }
            (*t0, multiples.clone(), false)
        }
    };

    // Finite-horizon surrogate for the limsup condition on T.
    let mut candidates = Vec::new();
    let mut most_blocks = 0;
    for &m in &multiples {
        let block = t0 * lit::<R>(m as f64);
        let count = to_f64((horizon / block).floor()) as usize;
        most_blocks = most_blocks.max(count);
        if count < MIN_BLOCKS {
            continue;
        }
        let est = central_estimate(&block_log_norms(coef.as_ref(), block, count, cfg), block, cfg.tail_fraction)?;
        candidates.push(CandidateBlock { m, block, estimate: est.value });
    }
    let best = candidates
        .iter()
        .map(|c| c.estimate)
        .reduce(|x, y| x.max(y))
        .ok_or(Error::HorizonTooShort { blocks: most_blocks, needed: MIN_BLOCKS })?;
    let chosen = candidates
        .iter()
        .filter(|c| c.estimate >= best - eps / lit(4.0))
        .min_by(|x, y| x.block.partial_cmp(&y.block).expect("finite blocks"))
        .expect("the maximizer qualifies")
        .clone();
    let m = chosen.m;
    let block = chosen.block;
    let count = to_f64((horizon / block).floor()) as usize;

    let lag = eps * t0 / lit(2.0);
    let fallback = (a * lit(2.0) + (a * lit(2.0) + R::one()) * delta) * t0;
    let tol = lit::<R>(1e-9);
    let mut entries = Vec::new();
    let mut records = Vec::with_capacity(count);
    let mut y: Option<Ray<R>> = None;
    let mut y0_initial = None;
    let mut trace = vec![(R::zero(), R::zero())];
    let mut block_logs = Vec::with_capacity(count);
    let mut windows = Vec::with_capacity(count);

    for i in 0..count {
        let start = block * lit::<R>(i as f64);
        let end = start + block;
        let segs = Segments::new(coef.as_ref(), start, t0, m, cfg);
        let phi = segs.block();
        let x = top_right_singular_vector(&phi.unit);
        let log_norm = phi.log_norm();
        block_logs.push(log_norm);
        let y_start = y.take().unwrap_or_else(|| {
            y0_initial = Some(x.clone());
            Ray::unit(&x)
        });

        // Per-segment growth of the top solution x_i.
        let mut xr = Ray::unit(&x);
        let x_growth: Vec<R> = segs.pieces.iter().map(|p| xr.advance(p)).collect();
        let mut probe = y_start.clone();
        let y_plain: Vec<R> = segs.pieces.iter().map(|p| probe.advance(p)).collect();
        let plain_total: R = y_plain.iter().fold(R::zero(), |s, g| s + *g);

        let ratio_test = log_norm - plain_total > lit::<R>(0.75) * eps * block;
        let segment = if ratio_test {
            (0..(m as usize - 1)).find(|&l| x_growth[l] - y_plain[l] >= lag)
        } else {
            None
        };

        let (y_end, y_growth, aligned) = match segment {
            None => (probe, y_plain, true),
            Some(j) => {
                let tau = segs.at(j);
                let tau2 = segs.at(j + 1);
                let mut yr = y_start.clone();
                let mut xr = Ray::unit(&x);
                let mut growth = y_plain[..j].to_vec();
                for p in &segs.pieces[..j] {
                    yr.advance(p);
                    xr.advance(p);
                }
                let step = |from: R, to: R, yr: &mut Ray<R>, xr: &mut Ray<R>| {
                    let p = ode_fundamental(coef.as_ref(), to, from, cfg);
                    xr.advance(&p);
                    yr.advance(&p)
                };
                let mut rotate = |yr: &mut Ray<R>, xr: &Ray<R>, at: R, segment: usize, stage| -> bool {
                    match rotation_plane(&yr.dir, &xr.dir) {
                        None => true,
                        Some((u, v, phi)) => {
                            let theta = phi.min(delta);
                            yr.dir = u.map(|z| z * cx(theta.cos())) + v.map(|z| z * cx(theta.sin()));
                            entries.push(RotationEntry { start: at, speed: theta, u, v, block: i, segment, stage });
                            phi <= delta
                        }
                    }
                };
                let g1 = step(tau, tau + R::one(), &mut yr, &mut xr);
                rotate(&mut yr, &xr, tau, j, RotationStage::Approach);
                let g2 = step(tau + R::one(), tau2, &mut yr, &mut xr);
                growth.push(g1 + g2);
                let g3 = step(tau2, tau2 + R::one(), &mut yr, &mut xr);
                let aligned = rotate(&mut yr, &xr, tau2, j + 1, RotationStage::Align);
                let g4 = step(tau2 + R::one(), segs.at(j + 2), &mut yr, &mut xr);
                growth.push(g3 + g4);
                for p in &segs.pieces[j + 2..] {
                    growth.push(yr.advance(p));
                }
                (yr, growth, aligned)
            }
        };

        let mut lagging = 0;
        let mut fallback_holds = true;
        for (gy, gx) in y_growth.iter().zip(&x_growth) {
            if *gy < *gx - lag - tol {
                lagging += 1;
                fallback_holds &= *gy >= *gx - fallback - tol;
            }
        }
        let log_growth = y_growth.iter().fold(R::zero(), |s, g| s + *g);
        let total = trace.last().expect("trace starts at 0").1 + log_growth;
        trace.push((end, total));
        windows.push((end, total / end));
        records.push(BlockRecord {
            index: i,
            start,
            log_norm,
            log_growth,
            ratio_test,
            segment,
            lagging_segments: lagging,
            fallback_holds,
            aligned,
        });
        y = Some(Ray { dir: y_end.dir, log: R::zero() });
    }

    let schedule = RotationSchedule::new(coef, entries, delta, a)?;
    let used = block * lit::<R>(count as f64);
    let report = DestabilizationReport {
        eps,
        delta,
        bound: a,
        t0,
        m,
        block,
        verbatim,
        candidates,
        blocks: records,
        y0_initial: y0_initial.expect("at least one block"),
        y0_trace: trace,
        chi_est: central_estimate(&block_logs, block, cfg.tail_fraction)?,
        achieved: ExponentEstimate::from_windows(windows, used, cfg.tail_fraction, ExponentMethod::Trajectory)?,
        measured_norm: schedule.sampled_sup_norm(64),
        unitarity_defect: schedule.unitarity_defect(8),
    };
    if report.measured_norm > schedule.budget() + lit(1e-9) {
        return Err(Error::BudgetExceeded { measured: to_f64(report.measured_norm), budget: to_f64(schedule.budget()) });
    }
    Ok((schedule, report))
}
