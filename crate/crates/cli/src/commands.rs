//! One function per analysis. Each writes its artifacts into the output
//! directory and returns the human-readable summary.

use crate::args::Cli;
use crate::config::{Analysis, DestabilizeMode, ExperimentConfig, Nonlinearity};
use crate::output::{header, matrix_fields, matrix_header, num, vector_fields, vector_header, OutDir};
use crate::system::{resolve, System};
use crate::CliError;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use tsdyn::destabilize::{
    build_unstable_nonlinearity, destabilize_timescale, millionschikov_perturbation, BlockPlan, EscapeTrace,
    MillionschikovParams, PipelineConfig, RotationStage, TubeConfig,
};
use tsdyn::linalg::spectral_norm;
use tsdyn::linstab::{
    build_quadratic_certificate, central_upper_exponent, classify_stability_empirical, default_probe_grid,
    is_strongly_stable, is_strongly_unstable, lyapunov_exponent_trajectory, lyapunov_exponents_constant, simulate_split,
    CertificateMode, EmpiricalVerdict, Trajectory,
};
use tsdyn::num::{cvec_from_real, vnorm};
use tsdyn::ode::OdeCoefficient;
use tsdyn::timescale::{Component, GapBound, Syndetic, Tail};
use tsdyn::{CVec, CoefficientMap, IntegratorConfig, RotationSchedule, TimeScale};

pub const DEFAULT_OUT: &str = "tsdyn-out";

/// Time window after the certificate start over which checkers sample.
pub const CERTIFICATE_WINDOW: f64 = 5.0;

/// Trajectory CSVs are thinned to about this many rows.
pub const MAX_TRAJECTORY_ROWS: usize = 20_000;

pub fn run_cli(cli: Cli) -> Result<String, CliError> {
    let (analysis, flags) = cli.command.parts();
    let cfg = flags.resolve(analysis)?;
    run(&cfg)
}

pub fn run(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let analysis =
        cfg.analysis.ok_or_else(|| CliError::Parse("no analysis selected: set `analysis` in the config".into()))?;
    let sys = resolve(cfg)?;
    let mut out = OutDir::create(cfg.out.as_deref().unwrap_or(Path::new(DEFAULT_OUT)))?;
    out.text("config.toml", &cfg.to_toml()?)?;
    let summary = match analysis {
        Analysis::Scale => scale(cfg, &sys, &mut out)?,
        Analysis::Exponents => exponents(cfg, &sys, &mut out)?,
        Analysis::Classify => classify(cfg, &sys, &mut out)?,
        Analysis::Destabilize => destabilize(cfg, &sys, &mut out)?,
        Analysis::Simulate => simulate(cfg, &sys, &mut out)?,
    };
    out.text("summary.txt", &summary)?;
    Ok(summary)
}

fn label(sys: &System, cfg: &ExperimentConfig) -> String {
    match sys.preset {
        Some("example46") => format!("preset example46 (p/q = {}/{})", cfg.p.unwrap_or(1), cfg.q.unwrap_or(3)),
        Some(name) => format!("preset {name}"),
        None => "custom system".into(),
    }
}

/// A recognizable name for lattices and the half-line.
fn identify(ts: &TimeScale) -> Option<String> {
    if !ts.components().is_empty() && *ts != TimeScale::reals() {
        return None;
    }
    match ts.tail() {
        Tail::HalfLine => Some("ℝ (represented by [0, ∞))".into()),
        Tail::Periodic { period, pattern } if pattern.len() == 1 && pattern[0] == Component::Point(0.0) => {
            Some(if *period == 1.0 { "ℤ".into() } else { format!("{period}ℤ") })
        }
        _ => None,
    }
}

fn list(v: &[f64]) -> String {
    if v.is_empty() {
        return "none".into();
    }
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
}

fn scale(cfg: &ExperimentConfig, sys: &System, out: &mut OutDir) -> Result<String, CliError> {
    let ts = &sys.scale;
    let h = cfg.horizon.unwrap_or(100.0);
    let mut csv = out.csv("scale.csv", &header(&["index", "kind", "start", "end", "gap_after"]))?;
    let (mut points, mut intervals, mut count) = (0, 0, 0);
    for (k, span) in ts.spans(ts.min(), h).enumerate() {
        count += 1;
        let (kind, end, gap) = match span.end {
            None => ("halfline", String::new(), 0.0),
            Some(e) => {
                let kind = if span.is_point() { "point" } else { "interval" };
                (kind, num(e), ts.mu(e)?)
            }
        };
        if kind == "point" {
            points += 1;
        } else {
            intervals += 1;
        }
        csv.row([k.to_string(), kind.to_string(), num(span.start), end, num(gap)])?;
    }
    csv.finish()?;
    let prof = ts.grain_profile(h);
    let sup = match prof.sup_gap {
        GapBound::Finite(g) => format!("{g}"),
        GapBound::Unbounded => "unbounded".into(),
    };
    let syndetic = match ts.is_syndetic(h) {
        Syndetic::Yes => "yes",
        Syndetic::No => "no",
        Syndetic::UnknownAtHorizon => "unknown at this horizon",
    };
    let mut s = String::new();
    writeln!(s, "scale: {}", label(sys, cfg)).unwrap();
    if let Some(name) = identify(ts) {
        writeln!(s, "identified as: {name}").unwrap();
    }
    writeln!(s, "description:").unwrap();
    for line in ts.to_string().lines() {
        writeln!(s, "  {line}").unwrap();
    }
    writeln!(s, "components in [{}, {h}]: {count} ({points} points, {intervals} intervals or half-lines)", ts.min()).unwrap();
    writeln!(s, "attained gaps: {}", list(&prof.attained_gaps)).unwrap();
    writeln!(s, "dense part: {}", if prof.has_dense_tail { "yes" } else { "no" }).unwrap();
    writeln!(s, "sup gap: {sup}{}", if prof.exact { "" } else { " (from the generator; gaps listed to the horizon)" }).unwrap();
    writeln!(s, "syndetic: {syndetic}").unwrap();
    Ok(s)
}

/// Three times the largest gap, at least 3.
fn default_block(ts: &TimeScale, horizon: f64) -> f64 {
    let g = ts.grain_profile(horizon).sup_gap_value().unwrap_or(1.0);
    (3.0 * g).max(3.0)
}

fn exponents(cfg: &ExperimentConfig, sys: &System, out: &mut OutDir) -> Result<String, CliError> {
    let ts = &sys.scale;
    let a = sys.coefficient()?;
    let h = cfg.horizon.unwrap_or(1e4);
    let icfg = IntegratorConfig::default();
    let sweep = cfg.t_sweep.map(|s| s.values()).unwrap_or_else(|| vec![default_block(ts, h)]);
    let mut csv = out.csv("exponents.csv", &header(&["kind", "index_or_T", "t", "running_average"]))?;
    let mut s = String::new();
    writeln!(s, "exponents: {} to horizon {h}", label(sys, cfg)).unwrap();
    let (kind, estimates) = match sys.constant() {
        Some(m) => ("nu", lyapunov_exponents_constant(ts, m, h, &icfg.quad, icfg.tail_fraction, icfg.grid_samples)?),
        None => {
            let n = a.dim();
            let mut v = Vec::with_capacity(n);
            for k in 0..n {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                v.push(lyapunov_exponent_trajectory(ts, a, &cvec_from_real(&e), h, &icfg)?);
            }
            ("trajectory", v)
        }
    };
    for (k, e) in estimates.iter().enumerate() {
        for &(t, avg) in &e.windows {
            csv.row([kind.to_string(), (k + 1).to_string(), num(t), num(avg)])?;
        }
        csv.row([format!("{kind}_estimate"), (k + 1).to_string(), num(e.horizon), num(e.value)])?;
        let how = if kind == "nu" { "eigenvalue average" } else { "trajectory from e_k" };
        writeln!(s, "nu_{} = {:.6} ({how})", k + 1, e.value).unwrap();
    }
    let mut chi = f64::NAN;
    for &block in &sweep {
        let e = central_upper_exponent(ts, a, block, h, &icfg)?;
        for &(t, avg) in &e.windows {
            csv.row(["chi".to_string(), num(block), num(t), num(avg)])?;
        }
        csv.row(["chi_estimate".to_string(), num(block), num(e.horizon), num(e.value)])?;
        writeln!(s, "chi_est(T = {block}) = {:.6}", e.value).unwrap();
        chi = e.value;
    }
    csv.finish()?;
    writeln!(s, "chi_est = {chi:.6} (largest T)").unwrap();
    Ok(s)
}

fn classify(cfg: &ExperimentConfig, sys: &System, out: &mut OutDir) -> Result<String, CliError> {
    let ts = &sys.scale;
    let a = sys.coefficient()?;
    let h = cfg.horizon.unwrap_or(1000.0);
    let icfg = IntegratorConfig::default();
    let mut s = String::new();
    writeln!(s, "classify: {} to horizon {h}", label(sys, cfg)).unwrap();
    // Probes propagate Φ, which needs invertible jumps; the spectral verdicts
    // and certificates do not, so a failure here is reported, not fatal.
    let bounded = match classify_stability_empirical(ts, a, h, &default_probe_grid(ts, h)?, &icfg) {
        Ok(emp) => {
            let mut csv = out.csv("probes.csv", &header(&["t0", "log_sup_first_half", "log_sup_second_half"]))?;
            for r in &emp.table {
                csv.row([num(r.t0), num(r.log_sup_first), num(r.log_sup_second)])?;
            }
            csv.finish()?;
            match emp.verdict {
                EmpiricalVerdict::BoundedAllProbes { gamma } => {
                    writeln!(s, "empirical: bounded on all probes, sup ‖Φ(t, t0)‖ ≤ {gamma:.6e}").unwrap();
                    true
                }
                EmpiricalVerdict::UnboundedAt(t0) => {
                    writeln!(s, "empirical: unbounded growth from t0 = {t0}").unwrap();
                    false
                }
            }
        }
        Err(e) => {
            writeln!(s, "empirical: unavailable ({e})").unwrap();
            false
        }
    };
    let Some(m) = sys.constant() else {
        writeln!(s, "strongly stable: n/a (time-varying coefficient)").unwrap();
        writeln!(s, "strongly unstable: n/a (time-varying coefficient)").unwrap();
        return Ok(s);
    };
    let prof = ts.grain_profile(h);
    let st = is_strongly_stable(m, &prof)?;
    let un = is_strongly_unstable(m, &prof)?;
    let yes = |b: bool, empirical: bool| match (b, empirical) {
        (true, false) => "yes",
        (true, true) => "yes (gap set estimated to the horizon)",
        (false, _) => "no",
    };
    writeln!(s, "strongly stable: {}", yes(st.holds, st.empirical)).unwrap();
    writeln!(s, "strongly unstable: {}", yes(un.holds, un.empirical)).unwrap();
    if !st.witnesses.is_empty() {
        writeln!(s, "growth rates of |x|² per eigenvalue and gap:").unwrap();
    }
    for w in &st.witnesses {
        let gap = w.gap.map_or("dense".to_string(), |g| format!("gap {g}"));
        writeln!(s, "  λ = {:.6}{:+.6}i at {gap}: {:.6}", w.lambda.re, w.lambda.im, w.value).unwrap();
    }
    let mode = if st.holds {
        Some(CertificateMode::Stable)
    } else if un.holds {
        Some(CertificateMode::Unstable)
    } else {
        None
    };
    match mode {
        Some(mode) => {
            let cert = build_quadratic_certificate(ts, m, &prof, 0.0, mode)?;
            let spec = cert.sample_spec(cert.t_start + CERTIFICATE_WINDOW, 1.0);
            let rep = cert.check(ts, |_, x| m * x, &spec)?;
            let n = m.nrows();
            let mut csv = out.csv("certificate.csv", &header(&["object", "row", "col", "re", "im"]))?;
            for (name, mat) in [
                ("transform", &cert.transform),
                ("transform_inverse", &cert.transform_inverse),
                ("form", &cert.form.matrix),
                ("form_x", &cert.form_x.matrix),
            ] {
                for i in 0..n {
                    for j in 0..n {
                        csv.row([name.to_string(), (i + 1).to_string(), (j + 1).to_string(), num(mat[(i, j)].re), num(mat[(i, j)].im)])?;
                    }
                }
            }
            csv.finish()?;
            let kind = if mode == CertificateMode::Stable { "Lyapunov" } else { "Chetaev" };
            let mut r = String::new();
            writeln!(r, "certificate: {kind}").unwrap();
            writeln!(r, "kappa: {}", num(cert.kappa)).unwrap();
            writeln!(r, "transform condition: {}", num(cert.condition)).unwrap();
            writeln!(r, "t_start: {}", num(cert.t_start)).unwrap();
            writeln!(r, "window: [{}, {}], radius {}", num(spec.t_start), num(spec.horizon), num(spec.radius)).unwrap();
            writeln!(r, "checked: {}", rep.checked).unwrap();
            writeln!(r, "worst margin: {}", num(rep.worst_margin)).unwrap();
            writeln!(r, "violations: {}", rep.violation_count).unwrap();
            for v in rep.violations.iter().take(10) {
                writeln!(r, "  {:?} at t = {}: observed {}, required {}", v.kind, num(v.t), num(v.observed), num(v.required))
                    .unwrap();
            }
            writeln!(r, "passed: {}", rep.passed).unwrap();
            out.text("certificate.txt", &r)?;
            writeln!(
                s,
                "{kind} certificate: {} ({} samples, worst margin {:.3e})",
                if rep.passed { "passes" } else { "fails" },
                rep.checked,
                rep.worst_margin
            )
            .unwrap();
        }
        None => {
            writeln!(s, "certificate: none (neither spectral condition holds)").unwrap();
            if bounded {
                writeln!(
                    s,
                    "note: solutions look bounded, but without strong stability arbitrarily small \
                     perturbations may make them grow; `tsdyn destabilize` builds one"
                )
                .unwrap();
            }
        }
    }
    Ok(s)
}

fn block_plan(cfg: &ExperimentConfig, default_fixed: bool) -> BlockPlan<f64> {
    if cfg.verbatim_blocks == Some(true) || (!default_fixed && cfg.block_t0.is_none()) {
        return BlockPlan::Verbatim;
    }
    BlockPlan::Fixed {
        t0: cfg.block_t0.unwrap_or(6.0),
        multiples: cfg.block_multiples.clone().unwrap_or_else(|| vec![2, 3, 4, 5, 6]),
    }
}

fn pipeline_config(cfg: &ExperimentConfig, delta: f64, horizon: f64) -> PipelineConfig<f64> {
    let mut pc = PipelineConfig::new(delta, horizon);
    pc.plan = block_plan(cfg, true);
    pc.seed = cfg.seed.unwrap_or(0);
    if let Some(z) = cfg.zero_tolerance {
        pc.zero_tolerance = z;
    }
    pc
}

fn write_schedule(out: &mut OutDir, name: &str, sched: &RotationSchedule) -> Result<(), CliError> {
    let n = sched.entries.first().map_or(0, |e| e.u.len());
    let mut h = header(&["t_start", "t_end", "speed", "block", "segment", "stage"]);
    h.extend(vector_header("u", n));
    h.extend(vector_header("v", n));
    let mut csv = out.csv(name, &h)?;
    for e in &sched.entries {
        let stage = match e.stage {
            RotationStage::Approach => "approach",
            RotationStage::Align => "align",
        };
        let mut row = vec![num(e.start), num(e.end()), num(e.speed), e.block.to_string(), e.segment.to_string(), stage.into()];
        row.extend(vector_fields(&e.u));
        row.extend(vector_fields(&e.v));
        csv.row(row)?;
    }
    csv.finish()
}

fn write_trace(out: &mut OutDir, name: &str, trace: &EscapeTrace<f64>) -> Result<(), CliError> {
    let mut csv = out.csv(name, &header(&["t", "log_norm"]))?;
    for &(t, l) in &trace.samples {
        csv.row([num(t), num(l)])?;
    }
    csv.finish()
}

/// Rotation mode works on `ẋ = A(t)x`, so every point must be dense.
fn require_half_line(ts: &TimeScale, horizon: f64) -> Result<(), CliError> {
    let dense = matches!(ts.tail(), Tail::HalfLine) && ts.scattered_points(ts.min(), horizon).next().is_none();
    if dense {
        Ok(())
    } else {
        Err(CliError::NotApplicable("rotation mode needs the scale ℝ; use `--mode pipeline`".into()))
    }
}

fn destabilize(cfg: &ExperimentConfig, sys: &System, out: &mut OutDir) -> Result<String, CliError> {
    let ts = &sys.scale;
    let a = sys.coefficient()?;
    let icfg = IntegratorConfig::default();
    let mode = cfg.mode.unwrap_or(if sys.is_preset("perron-switched") { DestabilizeMode::Rotation } else { DestabilizeMode::Pipeline });
    let mut s = String::new();
    let mut r = String::new();
    writeln!(s, "destabilize: {}", label(sys, cfg)).unwrap();
    match mode {
        DestabilizeMode::Rotation => {
            let h = cfg.horizon.unwrap_or(1e6);
            require_half_line(ts, h)?;
            let (eps, delta) = (cfg.eps.unwrap_or(0.5), cfg.delta.unwrap_or(0.3));
            let bound = a.sup_norm(h);
            let params = MillionschikovParams { plan: block_plan(cfg, false), bound: Some(bound), ..MillionschikovParams::new(eps, delta, h) };
            let coef: Arc<dyn OdeCoefficient<f64>> = Arc::new(a.clone());
            let (sched, report) = millionschikov_perturbation(coef, &params, &icfg)?;
            let sched = Arc::new(sched);
            write_schedule(out, "schedule.csv", &sched)?;
            let n = a.dim();
            let mut h_b = header(&["t", "norm"]);
            h_b.extend(matrix_header("b", n));
            let mut csv = out.csv("bhat.csv", &h_b)?;
            let mut sup = 0.0f64;
            for e in &sched.entries {
                for k in 0..=8 {
                    let t = e.start + k as f64 / 8.0;
                    let b = sched.eval(t);
                    let nb = spectral_norm(&b);
                    sup = sup.max(nb);
                    let mut row = vec![num(t), num(nb)];
                    row.extend(matrix_fields(&b));
                    csv.row(row)?;
                }
            }
            csv.finish()?;
            let perturbed = CoefficientMap::structured(Arc::new(sched.perturbed()));
            let y0 = lyapunov_exponent_trajectory(ts, &perturbed, &report.y0_initial, h, &icfg)?;
            let mut csv = out.csv("perturbed.csv", &header(&["t", "running_exponent"]))?;
            for &(t, v) in &y0.windows {
                csv.row([num(t), num(v)])?;
            }
            csv.finish()?;
            writeln!(r, "mode: rotation").unwrap();
            writeln!(r, "eps: {}", num(eps)).unwrap();
            writeln!(r, "delta: {}", num(delta)).unwrap();
            writeln!(r, "bound a: {}", num(bound)).unwrap();
            writeln!(r, "budget (2a+1)delta: {}", num(sched.budget())).unwrap();
            writeln!(r, "block: {} (m = {}, verbatim {})", num(report.block), report.m, report.verbatim).unwrap();
            writeln!(r, "blocks: {}, rotated: {}, rotations: {}", report.blocks.len(), report.rotated_blocks(), sched.entries.len())
                .unwrap();
            writeln!(r, "sampled sup norm: {}", num(sup)).unwrap();
            writeln!(r, "unitarity defect: {}", num(report.unitarity_defect)).unwrap();
            writeln!(r, "chi_est: {}", num(report.chi_est.value)).unwrap();
            writeln!(r, "y0 exponent (report): {}", num(report.achieved.value)).unwrap();
            writeln!(r, "y0 exponent (measured): {}", num(y0.value)).unwrap();
            writeln!(s, "mode: rotation, eps {eps}, delta {delta}, horizon {h}").unwrap();
            writeln!(s, "rotations: {} over {} blocks", sched.entries.len(), report.blocks.len()).unwrap();
            writeln!(s, "sup ‖B‖ = {sup:.6} (budget {:.6})", sched.budget()).unwrap();
            writeln!(s, "chi_est = {:.6}", report.chi_est.value).unwrap();
            writeln!(s, "y0 exponent = {:.6}", y0.value).unwrap();
        }
        DestabilizeMode::Pipeline => {
            let h = cfg.horizon.unwrap_or(3000.0);
            let delta = cfg.delta.unwrap_or(0.2);
            let d = destabilize_timescale(ts, a, &pipeline_config(cfg, delta, h), &icfg)?;
            write_schedule(out, "schedule.csv", &d.schedule)?;
            let mut times: Vec<f64> = ts.scattered_points(ts.min(), h).map(|(t, _)| t).collect();
            times.extend(ts.sample_points(ts.min(), h, 2000));
            times.sort_by(|x, y| x.total_cmp(y));
            times.dedup();
            let n = a.dim();
            let mut h_b = header(&["t", "norm"]);
            h_b.extend(matrix_header("b", n));
            let mut csv = out.csv("bdelta.csv", &h_b)?;
            let mut sup = 0.0f64;
            for &t in &times {
                let b = d.perturbation.at(t);
                let nb = spectral_norm(&b);
                sup = sup.max(nb);
                let mut row = vec![num(t), num(nb)];
                row.extend(matrix_fields(&b));
                csv.row(row)?;
            }
            csv.finish()?;
            write_trace(out, "perturbed.csv", &d.perturbed)?;
            write_trace(out, "unperturbed.csv", &d.unperturbed)?;
            let escape = d.perturbed.escape_time.map_or("none within the horizon".to_string(), |t| format!("t = {t}"));
            writeln!(r, "mode: pipeline").unwrap();
            writeln!(r, "delta (budget on the scale): {}", num(delta)).unwrap();
            writeln!(r, "chi_est: {}", num(d.chi_est.value)).unwrap();
            writeln!(r, "eps: {}", num(d.eps)).unwrap();
            writeln!(r, "rotation delta: {}", num(d.rotation_delta)).unwrap();
            writeln!(r, "projection lipschitz: {}", num(d.lipschitz)).unwrap();
            writeln!(r, "shift: {}", num(d.shift)).unwrap();
            writeln!(r, "embedded bound: {}", num(d.bound)).unwrap();
            writeln!(r, "measured sup norm: {}", num(d.measured_norm)).unwrap();
            writeln!(r, "sampled sup norm: {}", num(sup)).unwrap();
            writeln!(r, "max imaginary part: {}", num(d.max_imag)).unwrap();
            writeln!(r, "retries: {}", d.retries).unwrap();
            writeln!(r, "rotations: {} over {} blocks", d.schedule.entries.len(), d.report.blocks.len()).unwrap();
            writeln!(r, "embedded y0 exponent: {}", num(d.report.achieved.value)).unwrap();
            writeln!(r, "perturbed escape: {escape}").unwrap();
            writeln!(r, "perturbed max log norm: {}", num(d.perturbed.max_log_norm())).unwrap();
            writeln!(r, "unperturbed max log norm: {}", num(d.unperturbed.max_log_norm())).unwrap();
            writeln!(s, "mode: pipeline, delta {delta}, horizon {h}").unwrap();
            writeln!(s, "chi_est = {:.6}, eps = {:.6}", d.chi_est.value, d.eps).unwrap();
            writeln!(s, "sup ‖B_δ‖ = {:.6} (budget {delta})", d.measured_norm.max(sup)).unwrap();
            writeln!(s, "perturbed escape: {escape}").unwrap();
            writeln!(
                s,
                "max log|x|: perturbed {:.3}, unperturbed {:.3}",
                d.perturbed.max_log_norm(),
                d.unperturbed.max_log_norm()
            )
            .unwrap();
        }
    }
    out.text("report.txt", &r)?;
    Ok(s)
}

fn initial_state(cfg: &ExperimentConfig, n: usize, default: impl FnOnce() -> CVec) -> Result<CVec, CliError> {
    match &cfg.x0 {
        Some(v) if v.len() != n => Err(CliError::Parse(format!("x0 has {} entries, the system has dimension {n}", v.len()))),
        Some(v) => Ok(cvec_from_real(v)),
        None => Ok(default()),
    }
}

fn write_trajectory(out: &mut OutDir, tr: &Trajectory<f64>, n: usize) -> Result<(), CliError> {
    let mut h = header(&["t", "norm"]);
    h.extend(vector_header("x", n));
    let mut csv = out.csv("trajectory.csv", &h)?;
    let len = tr.samples.len();
    let stride = len.div_ceil(MAX_TRAJECTORY_ROWS).max(1);
    for (k, smp) in tr.samples.iter().enumerate() {
        if k % stride != 0 && k + 1 != len {
            continue;
        }
        let mut row = vec![num(smp.t), num(vnorm(&smp.x))];
        row.extend(vector_fields(&smp.x));
        csv.row(row)?;
    }
    csv.finish()
}

fn simulate(cfg: &ExperimentConfig, sys: &System, out: &mut OutDir) -> Result<String, CliError> {
    let ts = &sys.scale;
    let a = sys.coefficient()?;
    let n = a.dim();
    let mut icfg = IntegratorConfig::default();
    let nl = cfg.nonlinearity.unwrap_or(Nonlinearity::None);
    let mut s = String::new();
    writeln!(s, "simulate: {}", label(sys, cfg)).unwrap();
    let (tr, x0, escape_radius, tube_crossing) = match nl {
        Nonlinearity::Tube => {
            let h = cfg.horizon.unwrap_or(3000.0);
            let mut tc = TubeConfig::new(cfg.tube_terms.unwrap_or(2), pipeline_config(cfg, cfg.delta.unwrap_or(1.0), h));
            if let Some(r) = cfg.escape_radius {
                tc.escape_radius = r;
            }
            let (f, log) = build_unstable_nonlinearity(ts, a, &tc, &icfg)?;
            let mut csv = out.csv("tubes.csv", &header(&["level", "budget", "x0_norm", "crossing", "simulated_escape", "rescales"]))?;
            for (rec, term) in log.iter().zip(&f.terms) {
                let esc = rec.simulated_escape.map(num).unwrap_or_default();
                csv.row([rec.level.to_string(), num(term.budget), num(rec.x0_norm), num(rec.crossing), esc, rec.rescales.to_string()])?;
            }
            csv.finish()?;
            let x0 = initial_state(cfg, n, || f.terms[0].x0.clone())?;
            icfg.overflow_guard = 10.0 * tc.escape_radius;
            let tr = f.simulate(&x0, h, &icfg)?;
            writeln!(s, "nonlinearity: tube with {} terms, escape radius {}", f.terms.len(), tc.escape_radius).unwrap();
            (tr, x0, tc.escape_radius, Some(f.terms[0].crossing))
        }
        Nonlinearity::None | Nonlinearity::Quadratic => {
            let h = cfg.horizon.unwrap_or(50.0);
            let c = if nl == Nonlinearity::Quadratic { cfg.quadratic_c.unwrap_or(1.0) } else { 0.0 };
            let x0 = initial_state(cfg, n, || {
                let mut v = vec![0.0; n];
                v[0] = 0.1;
                cvec_from_real(&v)
            })?;
            let radius = cfg.escape_radius.unwrap_or(1e3 * vnorm(&x0).max(f64::MIN_POSITIVE));
            icfg.overflow_guard = 10.0 * radius;
            let quad = |x: &CVec| x * tsdyn::Cplx::from(c * vnorm(x));
            let tr = simulate_split(ts, |t, x| a.eval(t) * x + quad(x), |t, x| a.at(t) * x + quad(x), &x0, ts.min(), h, &icfg)?;
            match nl {
                Nonlinearity::Quadratic => writeln!(s, "nonlinearity: quadratic, c = {c}").unwrap(),
                _ => writeln!(s, "nonlinearity: none").unwrap(),
            }
            (tr, x0, radius, None)
        }
    };
    write_trajectory(out, &tr, n)?;
    let n0 = vnorm(&x0);
    let last = tr.last();
    let n_end = vnorm(&last.x);
    writeln!(s, "|x0| = {n0:.6e}, |x(T)| = {n_end:.6e} at T = {}", last.t).unwrap();
    let decay_ratio = cfg.decay_ratio.unwrap_or(1e-2);
    if n0 == 0.0 {
        let zero = tr.samples.iter().all(|p| vnorm(&p.x) == 0.0);
        writeln!(s, "status: zero trajectory{}", if zero { "" } else { " expected, but the state moved" }).unwrap();
    } else if let Some(t) = tr.first_exceeding(escape_radius) {
        writeln!(s, "status: escape, |x| ≥ {escape_radius} at t = {t}").unwrap();
    } else if n_end <= decay_ratio * n0 {
        writeln!(s, "status: decay, |x(T)|/|x0| = {:.6e} ≤ {decay_ratio}", n_end / n0).unwrap();
    } else {
        writeln!(s, "status: neither decay nor escape within the horizon").unwrap();
    }
    if let Some(t1) = tube_crossing {
        writeln!(s, "first tube crossing T1 = {t1}").unwrap();
    }
    Ok(s)
}
