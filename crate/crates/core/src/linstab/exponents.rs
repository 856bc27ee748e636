use super::coefficient::CoefficientMap;
use super::transition::{fundamental_matrix, propagate_on_scale, window_times};
use crate::calculus::cylinder;
use crate::error::{Error, Result};
use crate::linalg::{eig, eigenvalues};
use crate::num::{lit, to_f64, vnorm, CMat, CVec, Real};
use crate::ode::{log_vnorm, IntegratorConfig, Transition};
use crate::timescale::{QuadratureConfig, TimeScale};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExponentMethod {
    Trajectory,
    Spectral,
    CentralA1,
}

/// Finite-horizon surrogate for a limsup: the maximum running average over
/// the tail window `t ≥ (1 − tail_fraction)·horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentEstimate<R: Real> {
    pub value: R,
    /// `(t, running average)` pairs in time order.
    pub windows: Vec<(R, R)>,
    pub horizon: R,
    pub method: ExponentMethod,
}

impl<R: Real> ExponentEstimate<R> {
    pub fn from_windows(windows: Vec<(R, R)>, horizon: R, tail_fraction: R, method: ExponentMethod) -> Result<Self> {
        let last = windows.last().ok_or_else(|| Error::InvalidArgument("no exponent windows".into()))?.1;
        let cut = (R::one() - tail_fraction) * horizon;
        let value = windows.iter().filter(|w| w.0 >= cut).fold(None, |m: Option<R>, w| Some(m.map_or(w.1, |m| m.max(w.1))));
        Ok(Self { value: value.unwrap_or(last), windows, horizon, method })
    }

    /// The last running average.
    pub fn final_average(&self) -> R {
        self.windows.last().expect("nonempty windows").1
    }
}

/// Running averages of `Re ξ_μ(λ_k)` from `t₀ = 0` for each eigenvalue of a
/// constant matrix.
pub fn lyapunov_exponents_constant<R: Real>(
    ts: &TimeScale<R>,
    a: &CMat<R>,
    horizon: R,
    quad: &QuadratureConfig<R>,
    tail_fraction: R,
    grid: usize,
) -> Result<Vec<ExponentEstimate<R>>> {
    let eig = eig(a).map_err(|e| match e {
        Error::NotDiagonalizable { cond } => Error::EigendecompositionFailed(format!("defective matrix (condition {cond:e})")),
        other => other,
    })?;
    let t0 = ts.floor_scale(R::zero())?;
    let times = window_times(ts, t0, horizon, grid)?;
    let mut out = Vec::new();
    for lambda in eig.values {
        let mut acc = R::zero();
        let mut prev = t0;
        let mut windows = Vec::with_capacity(times.len());
        for &t in &times {
            let piece: R = ts.try_delta_integral_with(|_, mu| cylinder(lambda, mu).map(|z| z.re), prev, t, quad)?;
            acc += piece;
            prev = t;
            windows.push((t, acc / (t - t0)));
        }
        out.push(ExponentEstimate::from_windows(windows, horizon, tail_fraction, ExponentMethod::Spectral)?);
    }
    Ok(out)
}

/// Running `(1/t)·log|x(t)|` along the solution from `x0` at `t = 0`.
pub fn lyapunov_exponent_trajectory<R: Real>(
    ts: &TimeScale<R>,
    a: &CoefficientMap<R>,
    x0: &CVec<R>,
    horizon: R,
    cfg: &IntegratorConfig<R>,
) -> Result<ExponentEstimate<R>> {
    if vnorm(x0) == R::zero() {
        return Err(Error::InvalidArgument("initial vector must be nonzero".into()));
    }
    let t0 = ts.floor_scale(R::zero())?;
    let times = window_times(ts, t0, horizon, cfg.grid_samples)?;
    let mut st = Transition::from_vector(x0);
    let mut windows = Vec::with_capacity(times.len());
    let end = *times.last().unwrap_or(&t0);
    propagate_on_scale(ts, a, &mut st, t0, end, cfg, &times, |t, s| {
        windows.push((t, log_vnorm(s) / (t - t0)));
    })?;
    ExponentEstimate::from_windows(windows, horizon, cfg.tail_fraction, ExponentMethod::Trajectory)
}

/// Block sums `(1/(kT)) Σ_{i<k} log‖Φ(b_{i+1}, b_i)‖` with `b_i = [iT]_𝕋`.
pub fn central_upper_exponent<R: Real>(
    ts: &TimeScale<R>,
    a: &CoefficientMap<R>,
    block: R,
    horizon: R,
    cfg: &IntegratorConfig<R>,
) -> Result<ExponentEstimate<R>> {
    if block <= R::zero() {
        return Err(Error::InvalidArgument("block length must be positive".into()));
    }
    let kmax = to_f64((horizon / block).floor()) as u64;
    if kmax == 0 {
        return Err(Error::HorizonTooShort { blocks: 0, needed: 1 });
    }
    let mut windows = Vec::with_capacity(kmax as usize);
    let mut sum = R::zero();
    let mut prev = ts.floor_scale(R::zero())?;
    for k in 1..=kmax {
        let tk = block * R::from_u64(k).expect("block index");
        let b = ts.floor_scale(tk)?;
        let phi = fundamental_matrix(ts, a, b, prev, cfg)?;
        sum += phi.log_norm();
        prev = b;
        windows.push((tk, sum / tk));
    }
    ExponentEstimate::from_windows(windows, horizon, cfg.tail_fraction, ExponentMethod::CentralA1)
}

/// Running average of `Re ξ_μ(‖A‖)` along the scale, an upper bound for the
/// growth rate of `‖Φ‖`.
pub fn mean_norm_bound<R: Real>(ts: &TimeScale<R>, a: &CoefficientMap<R>, horizon: R, quad: &QuadratureConfig<R>) -> Result<R> {
    let t0 = ts.floor_scale(R::zero())?;
    let end = ts.floor_scale(horizon)?;
    let total: R = ts.try_delta_integral_with(
        |t, mu| {
            let n = crate::linalg::spectral_norm(&a.at(t));
            Ok(if mu > R::zero() { (R::one() + mu * n).ln() / mu } else { n })
        },
        t0,
        end,
        quad,
    )?;
    Ok(total / (end - t0))
}

/// Largest real part of the eigenvalues, for reference on ℝ.
pub fn spectral_abscissa<R: Real>(a: &CMat<R>) -> Result<R> {
    Ok(eigenvalues(a)?.iter().fold(lit::<R>(f64::NEG_INFINITY), |m, z| m.max(z.re)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{cdiag_real, cvec_from_real};
    use approx::assert_relative_eq;

    fn cfg() -> IntegratorConfig<f64> {
        IntegratorConfig::default()
    }

    #[test]
    fn constant_exponents_on_reals_and_lattice() {
        let r = TimeScale::<f64>::reals();
        let est = lyapunov_exponents_constant(&r, &cdiag_real(&[-1.0, 0.25]), 50.0, &QuadratureConfig::default(), 0.5, 64).unwrap();
        let mut v: Vec<f64> = est.iter().map(|e| e.value).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(v[0], -1.0, epsilon = 1e-10);
        assert_relative_eq!(v[1], 0.25, epsilon = 1e-10);

        let six = TimeScale::<f64>::lattice(6.0).unwrap();
        let est = lyapunov_exponents_constant(&six, &cdiag_real(&[-2.0, -0.5]), 600.0, &QuadratureConfig::default(), 0.5, 16).unwrap();
        assert_relative_eq!(est[0].value, 11f64.ln() / 6.0, epsilon = 1e-12);
        assert_relative_eq!(est[1].value, 2f64.ln() / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn trajectory_exponent_examples() {
        let r = TimeScale::<f64>::reals();
        let e = lyapunov_exponent_trajectory(&r, &CoefficientMap::diagonal(&[-1.0]), &cvec_from_real(&[3.0]), 200.0, &cfg()).unwrap();
        // The tail maximum sits at the window start t = 100.
        assert!((e.value - (-1.0 + 3f64.ln() / 100.0)).abs() < 1e-6);
        let z = TimeScale::<f64>::integers();
        let e = lyapunov_exponent_trajectory(&z, &CoefficientMap::diagonal(&[1.0]), &cvec_from_real(&[1.0]), 400.0, &cfg()).unwrap();
        assert_relative_eq!(e.value, 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn central_exponent_examples() {
        let r = TimeScale::<f64>::reals();
        let c = central_upper_exponent(&r, &CoefficientMap::diagonal(&[-1.0, 0.3]), 2.0, 200.0, &cfg()).unwrap();
        assert_relative_eq!(c.value, 0.3, epsilon = 1e-9);
        let six = TimeScale::<f64>::lattice(6.0).unwrap();
        let c = central_upper_exponent(&six, &CoefficientMap::diagonal(&[-2.0, -0.5]), 18.0, 1800.0, &cfg()).unwrap();
        assert_relative_eq!(c.value, 11f64.ln() / 6.0, epsilon = 1e-10);
    }

    #[test]
    fn tail_window_takes_maximum() {
        let w = vec![(1.0, 5.0), (2.0, 1.0), (3.0, 2.0), (4.0, 1.5)];
        let e = ExponentEstimate::from_windows(w, 4.0, 0.5, ExponentMethod::Trajectory).unwrap();
        assert_eq!(e.value, 2.0);
    }
}
