//! Experiment dispatch, the assertion table and artifact emission.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Experiment, InstanceKind, Scenario};
use crate::attractor::{
    almost_period_scan, exponential_tracking, gamma_fixed_point, gamma_linear_oracle, linear_bounded_solution,
    pullback_estimate, attraction_profile, invariance_residual, GammaSection,
};
use crate::averaging::{
    attractor_semicontinuity, decay_ratio, divergence_m_l, linear_difference_sup, linear_oscillation_amplitude,
    local_attractor_guard, slow_fast_consistency, write_semicontinuity_csv, AveragingScenario,
};
use crate::base_flow::{BaseFlow, BasePoint, TorusGrid};
use crate::bounds::{check_da_bound, check_dissipativity_envelope, check_time_average, da_norms, measure_contraction, time_average_bound, window_integrals, BoundReport};
use crate::error::{Error, Result};
use crate::integrator::{integrate, picard_solve, IntegratorConfig, Method};
use crate::system::trig::Harmonic;
use crate::system::{certify_c_b, coercivity_margin, lipschitz_ratio, random_unit, verify_skew, State, SystemModel};

/// One row of `summary.csv`. Every assertion reads `measured ≤ tolerance`.
#[derive(Clone, Debug, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub paper_ref: String,
    pub tolerance: f64,
    pub measured: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub assertions: Vec<Assertion>,
    /// Module error that aborted the run, if any.
    pub error: Option<String>,
    pub exit_code: i32,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn failed(&self) -> Vec<&Assertion> {
        self.assertions.iter().filter(|a| !a.pass).collect()
    }
}

pub const SUMMARY_HEADER: &str = "assertion,paper_ref,tolerance,measured,pass";

struct Ctx<'a> {
    scenario: &'a Scenario,
    scale: f64,
    rng: ChaCha8Rng,
    assertions: Vec<Assertion>,
    files: BTreeMap<String, Vec<u8>>,
}

impl<'a> Ctx<'a> {
    fn check(&mut self, name: &str, paper_ref: &str, tolerance: f64, measured: f64) -> bool {
        let pass = measured <= tolerance;
        self.assertions.push(Assertion {
            name: name.to_string(),
            paper_ref: paper_ref.to_string(),
            tolerance,
            measured,
            pass,
        });
        pass
    }

    fn report(&mut self, name: &str, paper_ref: &str, r: &BoundReport) {
        self.check(name, paper_ref, r.tolerance, r.max_violation);
    }

    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    fn csv<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.file(name, buf);
        Ok(())
    }

    fn cfg(&self) -> IntegratorConfig {
        self.scenario.integrator_config()
    }

    fn random_phase(&mut self, d: usize) -> BasePoint {
        let phases = (0..d).map(|_| self.rng.gen_range(0.0..TAU)).collect();
        BasePoint::new(phases).expect("finite phases")
    }
}

/// Applies command-line overrides to a parsed scenario.
pub fn apply_overrides(s: &mut Scenario, out: Option<PathBuf>, seed: Option<u64>, tol_scale: Option<f64>) -> Result<()> {
    if let Some(o) = out {
        s.output_dir = Some(o);
    }
    if let Some(seed) = seed {
        s.seed = Some(seed);
    }
    if let Some(t) = tol_scale {
        s.tolerances.scale = Some(t);
    }
    s.validate()
}

/// Runs the scenario and writes every artifact into its output directory.
///
/// Exit code: 0 when every assertion passes, 1 on an assertion failure,
/// otherwise the code of the module error that stopped the run.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome> {
    let mut s = scenario.clone();
    s.resolve()?;
    let out_dir = s.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut ctx = Ctx {
        scenario: &s,
        scale: s.tol_scale(),
        rng: ChaCha8Rng::seed_from_u64(s.seed()),
        assertions: Vec::new(),
        files: BTreeMap::new(),
    };
    let result = dispatch(&mut ctx);
    let error = result.as_ref().err().map(ToString::to_string);
    let exit_code = match &result {
        Err(e) => e.exit_code(),
        Ok(()) if ctx.assertions.iter().all(|a| a.pass) => 0,
        Ok(()) => 1,
    };
    let resolved = s.to_toml()?;
    let outcome = RunOutcome {
        assertions: ctx.assertions,
        error,
        exit_code,
        out_dir: out_dir.clone(),
    };
    write_artifacts(&out_dir, &resolved, &ctx.files, &outcome)?;
    Ok(outcome)
}

fn write_artifacts(dir: &Path, resolved: &str, files: &BTreeMap<String, Vec<u8>>, outcome: &RunOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("resolved_config.toml"), resolved)?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
    }
    std::fs::write(dir.join("summary.csv"), summary_csv(&outcome.assertions))?;
    let marker = dir.join("FAILED");
    if outcome.exit_code == 0 {
        if marker.exists() {
            std::fs::remove_file(&marker)?;
        }
    } else {
        let mut text = format!("exit code {}\n", outcome.exit_code);
        if let Some(e) = &outcome.error {
            let _ = writeln!(text, "error: {e}");
        }
        for a in outcome.failed() {
            let _ = writeln!(text, "failed: {} (measured {:.6e}, tolerance {:.6e})", a.name, a.measured, a.tolerance);
        }
        std::fs::write(marker, text)?;
    }
    Ok(())
}

pub fn summary_csv(assertions: &[Assertion]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for a in assertions {
        let _ = writeln!(out, "{},{},{:.6e},{:.6e},{}", a.name, a.paper_ref, a.tolerance, a.measured, a.pass);
    }
    out
}

fn dispatch(ctx: &mut Ctx) -> Result<()> {
    let s = ctx.scenario;
    if s.instance == InstanceKind::CubicRegression {
        return guard(ctx);
    }
    let model = s.build_model()?;
    let flow = s.flow()?;
    let galerkin = s.instance == InstanceKind::Galerkin;
    let small = model.smallness() < 1.0;
    match s.experiment {
        Experiment::VerifyBounds => verify_bounds(ctx, &model, &flow),
        Experiment::Pullback => pullback(ctx, &model, &flow),
        Experiment::Gamma => gamma(ctx, &model, &flow),
        Experiment::Averaging => averaging(ctx, &model),
        Experiment::Semicontinuity => semicontinuity(ctx, &model),
        Experiment::FullSuite => {
            verify_bounds(ctx, &model, &flow)?;
            pullback(ctx, &model, &flow)?;
            if small {
                gamma(ctx, &model, &flow)?;
            }
            if !galerkin {
                averaging(ctx, &model)?;
                semicontinuity(ctx, &model)?;
            }
            Ok(())
        }
    }
}

fn verify_bounds(ctx: &mut Ctx, model: &SystemModel, flow: &BaseFlow) -> Result<()> {
    let s = ctx.scenario;
    let b = s.bounds.clone();
    let scale = ctx.scale;
    let r0 = model.r0();
    let d = flow.dim();
    let n = model.dim();

    // structural hypotheses on 1000 random inputs
    let mut skew: f64 = 0.0;
    for _ in 0..10 {
        let om = ctx.random_phase(d);
        skew = skew.max(match verify_skew(model, &om, 100, &mut ctx.rng) {
            Ok(v) => v,
            Err(Error::Structural { residual, .. }) => residual,
            Err(e) => return Err(e),
        });
    }
    ctx.check("skew_symmetry", "<B(u v) w> = -<B(u w) v>", 1e-10 * scale, skew);
    let coercive = coercivity_margin(model, 1000, &mut ctx.rng);
    ctx.check("coercivity", "<Au u> >= alpha |u|^2", 1e-12 * scale, -coercive);
    if !model.bilinear().is_zero() {
        let samples = if n > 32 { 2 } else { 16 };
        let found = certify_c_b(model, samples, &mut ctx.rng)?;
        ctx.check("c_b_certified", "|B(u v)| <= C_B |u| |v|", 1.0, found / model.c_b());
        let om = ctx.random_phase(d);
        let lip = lipschitz_ratio(model, &om, 200, &mut ctx.rng);
        ctx.check("bilinear_lipschitz", "|B(u u) - B(v v)| <= C_B (|u| + |v|) |u - v|", 1.0, lip);
    }

    // trajectories from |x| in {0, r0, 5 r0}
    let mut cfg = ctx.cfg();
    cfg.method = Method::ExponentialRk2;
    cfg.record_every = ((0.01 / cfg.dt).round() as usize).max(1);
    let count = b.trajectories.unwrap_or(20);
    let t_long = b.t_long.unwrap_or(12.0);
    let radii = [0.0, r0, 5.0 * r0];
    let starts: Vec<(BasePoint, State)> = (0..count)
        .map(|k| {
            let om = ctx.random_phase(d);
            let x = random_unit(n, &mut ctx.rng).scaled(radii[k % 3]);
            (om, x)
        })
        .collect();
    let trajs = starts
        .par_iter()
        .map(|(om, x)| integrate(model, flow, om, x, t_long, &cfg))
        .collect::<Result<Vec<_>>>()?;

    let env_tol = 1e-4 * r0 * scale;
    let envelopes: Vec<BoundReport> = trajs.iter().map(|t| check_dissipativity_envelope(t, model, env_tol)).collect();
    let env = BoundReport::merge("dissipativity_envelope", env_tol, envelopes);
    ctx.report("dissipativity_envelope", "|phi(t)| <= (|x| - r0) e^{-alpha t} + r0", &env);
    ctx.csv("envelope_margins.csv", |w| env.write_margins_csv(w))?;
    ctx.file("envelope.gp", plot_script("envelope_margins.csv", "time", "envelope margin", &[(1, 2, "margin")], false));

    let ball_margins: Vec<(f64, f64)> = trajs.iter().map(|t| (t_long, t.last().norm() - r0)).collect();
    let ball = BoundReport::from_margins("absorbing_ball", env_tol, ball_margins);
    ctx.report("absorbing_ball", "|phi(T_long)| <= |f|/alpha", &ball);

    let window = b.window.unwrap_or(1.0);
    let mut averages = Vec::new();
    let mut worst_rel: f64 = f64::NEG_INFINITY;
    for (t, (_, x)) in trajs.iter().zip(&starts) {
        let r = r0.max(x.norm());
        let m = time_average_bound(model, window, r);
        let rep = check_time_average(t, model, window, r, 1e-4 * m * scale)?;
        worst_rel = worst_rel.max(rep.max_violation / m);
        averages.push(rep);
    }
    ctx.check("time_average", "int_t^{t+l} |phi|^2 <= r^2/(2 alpha) + (r/alpha) l |f|", 1e-4 * scale, worst_rel);

    let split = b.da_split.unwrap_or(5.0);
    let mut da_worst: f64 = f64::NEG_INFINITY;
    let mut da_reports = Vec::new();
    for (t, (_, x)) in trajs.iter().zip(&starts) {
        if x.norm() == 0.0 {
            continue;
        }
        let early = da_norms(t, model)
            .iter()
            .filter(|&&(s, _)| s <= split)
            .map(|&(_, v)| v)
            .fold(0.0, f64::max);
        let rep = check_da_bound(t, model, split, 1e-4 * early * scale);
        da_worst = da_worst.max(rep.max_violation / early.max(f64::MIN_POSITIVE));
        da_reports.push(rep);
    }
    if !da_reports.is_empty() {
        ctx.check("da_bound", "sup_{t > s} |A phi| <= sup_{t <= s} |A phi|", 1e-4 * scale, da_worst);
    }
    let mut bounds_csv = String::from(BoundReport::CSV_HEADER);
    bounds_csv.push('\n');
    for r in [&env, &ball].into_iter().chain(&averages).chain(&da_reports) {
        bounds_csv.push_str(&r.csv_row());
        bounds_csv.push('\n');
    }
    ctx.file("bounds.csv", bounds_csv.into_bytes());
    ctx.csv("trajectory.csv", |w| trajs[0].write_csv(w))?;

    if model.smallness() < 1.0 {
        let om = ctx.random_phase(d);
        let x1 = random_unit(n, &mut ctx.rng).scaled(r0);
        let x2 = random_unit(n, &mut ctx.rng).scaled(0.5 * r0);
        let horizon = b.contraction_horizon.unwrap_or(10.0);
        let m = measure_contraction(model, flow, &om, &x1, &x2, horizon, env_tol, &cfg)?;
        ctx.report("contraction_envelope", "|phi(t x1) - phi(t x2)| <= e^{-(alpha - C_B |f|/alpha) t} |x1 - x2|", &m.envelope);
        let slope = m.slope.unwrap_or(f64::INFINITY);
        ctx.check("contraction_slope", "slope <= -(alpha - C_B |f|/alpha)", -m.guaranteed_rate + 0.05 * scale, slope);
        if model.bilinear().is_zero() {
            ctx.check("linear_decay_rate", "slope = -alpha", 1e-3 * scale, (slope + model.alpha()).abs());
        }
        let mut text = String::from("time,distance\n");
        for (t, dist) in &m.distances {
            let _ = writeln!(text, "{t:.9e},{dist:.9e}");
        }
        ctx.file("contraction.csv", text.into_bytes());
        ctx.file("contraction.gp", plot_script("contraction.csv", "time", "distance", &[(1, 2, "distance")], true));
    }

    picard(ctx, model, flow)?;

    if model.bilinear().is_zero() {
        linear_window_oracle(ctx, model, flow, window)?;
    }
    Ok(())
}

fn picard(ctx: &mut Ctx, model: &SystemModel, flow: &BaseFlow) -> Result<()> {
    let scale = ctx.scale;
    let r0 = model.r0();
    let om = ctx.random_phase(flow.dim());
    let x0 = random_unit(model.dim(), &mut ctx.rng).scaled(r0);
    let r = x0.norm().max(r0);
    let cb = model.c_b();
    // horizon with L = 1/2
    let horizon = if cb > 0.0 { 0.5 / (2.0 * cb * (x0.norm() + r)) } else { 1.0 };
    let mut cfg = ctx.cfg();
    cfg.method = Method::Picard;
    cfg.picard_radius = Some(r);
    let sol = picard_solve(model, flow, &om, &x0, horizon, &cfg)?;
    let worst_ratio = sol.contraction_ratios().into_iter().fold(0.0, f64::max);
    ctx.check("picard_contraction", "|T u - T v| <= L |u - v|", sol.lipschitz + 0.05 * scale, worst_ratio);
    cfg.method = Method::ExponentialRk2;
    let direct = integrate(model, flow, &om, &x0, horizon, &cfg)?;
    let gap = sol
        .trajectory
        .states
        .iter()
        .zip(&direct.states)
        .map(|(a, b)| a.distance(b))
        .fold(0.0, f64::max);
    let dt = cfg.dt;
    ctx.check(
        "picard_agreement",
        "mild solution = time-stepped solution",
        (1e-10f64).max(10.0 * dt * dt * r.max(1.0)) * scale,
        gap,
    );
    Ok(())
}

/// Window integrals along the bounded solution against composite Simpson
/// quadrature of the closed form.
fn linear_window_oracle(ctx: &mut Ctx, model: &SystemModel, flow: &BaseFlow, window: f64) -> Result<()> {
    let om = ctx.random_phase(flow.dim());
    let x = linear_bounded_solution(model, flow, &om)?;
    let horizon = TAU + window;
    let cfg = IntegratorConfig {
        method: Method::ExponentialRk2,
        record_every: 1,
        ..ctx.cfg()
    };
    let traj = integrate(model, flow, &om, &x, horizon, &cfg)?;
    let numeric = window_integrals(&traj, window);
    let exact = |a: f64| -> Result<f64> {
        let m = 2000;
        let h = window / m as f64;
        let mut acc = 0.0;
        for j in 0..=m {
            let w = if j == 0 || j == m {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let g = linear_bounded_solution(model, flow, &flow.advance(&om, a + j as f64 * h))?;
            acc += w * g.dot(&g);
        }
        Ok(acc * h / 3.0)
    };
    let stride = ((0.25 / cfg.dt).round() as usize).max(1);
    let mut worst: f64 = 0.0;
    for &(t, v) in numeric.iter().step_by(stride) {
        worst = worst.max((v - exact(t)?).abs());
    }
    ctx.check("window_integral_closed_form", "int |u*|^2 = l/4 + oscillatory part", 1e-6 * ctx.scale, worst);
    Ok(())
}

fn pullback(ctx: &mut Ctx, model: &SystemModel, flow: &BaseFlow) -> Result<()> {
    let a = ctx.scenario.attractor.clone();
    let scale = ctx.scale;
    let r0 = model.r0();
    let cfg = ctx.cfg();
    let grid = TorusGrid::new(flow.dim(), a.pullback_grid.unwrap_or(8))?.points();
    let t = a.pullback_t.unwrap_or(20.0);
    let seed_radius = a.seed_radius.unwrap_or(r0);
    let est = pullback_estimate(model, flow, &grid, seed_radius, t, a.cloud_size.unwrap_or(64), &cfg)?;
    ctx.check("attractor_norm", "|x| <= |f|/alpha on the attractor", 1e-4 * r0 * scale, est.max_norm() - r0);
    let inv = invariance_residual(model, flow, &est, 1.0, &cfg)?;
    ctx.check("attractor_invariance", "phi(t I_w w) = I_{w t}", 1e-3 * r0 * scale, inv);
    if model.smallness() < 1.0 {
        let diam = est.diameters().into_iter().fold(0.0, f64::max);
        ctx.check("attractor_singleton", "diam I_w = 0 under smallness", 1e-3 * r0 * scale, diam);
    }
    if model.bilinear().is_zero() {
        let mut worst: f64 = 0.0;
        for (om, cloud) in est.base_points.iter().zip(&est.clouds) {
            let g = linear_bounded_solution(model, flow, om)?;
            for x in cloud {
                worst = worst.max(x.distance(&g));
            }
        }
        ctx.check("attractor_closed_form", "I_w = {gamma(w)} for the linear system", 1e-4 * scale, worst);
    }
    if ctx.scenario.instance != InstanceKind::Galerkin {
        let times = [0.25 * t, 0.5 * t, t];
        let profile = attraction_profile(model, flow, &est, 2.0 * seed_radius, &times, 8, &cfg)?;
        let mut text = String::from("pullback_time,semidistance\n");
        for (tt, v) in profile {
            let _ = writeln!(text, "{tt:.6e},{v:.9e}");
        }
        ctx.file("attraction_profile.csv", text.into_bytes());
    }
    ctx.csv("attractor.csv", |w| est.write_csv(w))?;
    let d = flow.dim();
    let cols: Vec<(usize, usize, &str)> = if model.dim() >= 2 {
        vec![(d + 2, d + 3, "coeff_0 vs coeff_1")]
    } else {
        vec![(1, d + 2, "coeff_0 vs omega_0")]
    };
    ctx.file("attractor.gp", plot_script("attractor.csv", "", "", &cols, false));
    Ok(())
}

fn gamma(ctx: &mut Ctx, model: &SystemModel, flow: &BaseFlow) -> Result<()> {
    let a = ctx.scenario.attractor.clone();
    let scale = ctx.scale;
    let r0 = model.r0();
    let cfg = ctx.cfg();
    let d = flow.dim();
    let grid = TorusGrid::new(d, a.gamma_grid.unwrap_or(64))?;
    let t_step = a.t_step.unwrap_or(1.0);
    let tol = a.sweep_tol.unwrap_or(1e-10);
    let sweeps = a.max_sweeps.unwrap_or(200);
    let section = gamma_fixed_point(model, flow, &grid, t_step, sweeps, tol, &cfg)?;
    ctx.check("gamma_converged", "gamma = phi(T gamma(w_{-T}) w_{-T})", tol, section.iteration_residual);
    let section_tol = 1e-4 * r0 * scale;
    let res = section.section_residual(model, flow, t_step, &cfg)?;
    ctx.check("gamma_section_identity", "gamma(w t) = phi(t gamma(w) w)", section_tol, res);
    ctx.check("gamma_norm", "|gamma| <= |f|/alpha", section_tol, section.max_norm() - r0);
    let rate = model.contraction_rate();
    let worst_ratio = section
        .sweep_distances
        .windows(2)
        .filter(|w| w[0] > 100.0 * tol)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    ctx.check("gamma_sweep_contraction", "sweep ratio <= e^{-(alpha - C_B |f|/alpha) T}", (-rate * t_step).exp() + 0.05 * scale, worst_ratio);

    let doubled = gamma_fixed_point(model, flow, &grid, 2.0 * t_step, sweeps, tol, &cfg)?;
    let gap = section
        .table
        .iter()
        .zip(&doubled.table)
        .map(|(p, q)| p.distance(q))
        .fold(0.0, f64::max);
    ctx.check("gamma_unique", "gamma independent of T", 2.0 * section_tol, gap);

    if model.bilinear().is_zero() {
        let mut oracle_gap: f64 = 0.0;
        let mut closed_gap: f64 = 0.0;
        let cutoff = 40.0 / model.alpha();
        for (i, om) in grid.points().iter().enumerate() {
            let o = gamma_linear_oracle(model, flow, om, cutoff, 1e-3)?;
            let c = linear_bounded_solution(model, flow, om)?;
            oracle_gap = oracle_gap.max(section.table[i].distance(&o));
            closed_gap = closed_gap.max(section.table[i].distance(&c));
        }
        ctx.check("gamma_linear_oracle", "gamma(w) = int_{-inf}^0 e^{A s} f(w s) ds", 1e-4 * scale, oracle_gap);
        ctx.check("gamma_closed_form", "gamma = (cos + sin)/2 for f = cos", 1e-4 * scale, closed_gap);
    }

    let om = grid.point(0);
    let x = random_unit(model.dim(), &mut ctx.rng).scaled(r0);
    let tracking = exponential_tracking(model, flow, &om, &x, &section, 10.0, section_tol, &cfg)?;
    ctx.report("gamma_tracking", "|phi(t x w) - gamma(w t)| <= e^{-(alpha - C_B |f|/alpha) t} |x - gamma(w)|", &tracking.report);

    scan(ctx, flow, &section)?;
    ctx.csv("gamma.csv", |w| section.write_csv(w))?;
    Ok(())
}

/// Almost periods of `t ↦ γ(σ(t, ω₀))`.
fn scan(ctx: &mut Ctx, flow: &BaseFlow, section: &GammaSection) -> Result<()> {
    let a = ctx.scenario.attractor.clone();
    let d = flow.dim();
    let length = a.scan_length.unwrap_or(20.0);
    let epsilon = a.scan_epsilon.unwrap_or(1e-3);
    let dt = if d == 1 { 0.005 } else { 0.02 };
    let count = (2.0 * length / dt).ceil() as usize + 2;
    let om = BasePoint::origin(d);
    let series: Vec<State> = (0..count).map(|j| section.eval(&flow.advance(&om, j as f64 * dt))).collect();
    let result = almost_period_scan(&series, dt, epsilon, length)?;
    let mut text = String::from("shift\n");
    for p in &result.periods {
        let _ = writeln!(text, "{p:.6e}");
    }
    ctx.file("almost_periods.csv", text.into_bytes());
    if d == 1 {
        let period = TAU / flow.frequencies()[0].abs();
        ctx.check(
            "almost_period_gap",
            "epsilon-almost periods are relatively dense",
            period * 1.01,
            result.max_gap.unwrap_or(f64::INFINITY),
        );
    }
    Ok(())
}

/// Single oscillatory term of a scalar linear forcing: amplitude, effective
/// frequency and phase offset at the origin.
fn single_tone(model: &SystemModel, flow: &BaseFlow) -> Option<(f64, f64, Vec<i64>, f64)> {
    if !model.bilinear().is_zero() || model.dim() != 1 {
        return None;
    }
    let osc = model.forcing_poly().oscillatory();
    let terms: Vec<_> = osc.terms().iter().filter(|t| t.coeff[0] != 0.0).collect();
    let [term] = terms.as_slice() else {
        return None;
    };
    let freq: f64 = term.wave.iter().zip(flow.frequencies()).map(|(&m, r)| m as f64 * r).sum();
    if freq == 0.0 {
        return None;
    }
    let shift = match term.harmonic {
        Harmonic::Cos => 0.0,
        Harmonic::Sin => -PI / 2.0,
    };
    Some((term.coeff[0], freq, term.wave.clone(), shift))
}

fn x_grid(ctx: &mut Ctx, n: usize, radius: f64, count: usize) -> Vec<State> {
    let mut out = vec![State::zeros(n)];
    for j in 1..count {
        let r = radius * j as f64 / (count - 1) as f64;
        out.push(random_unit(n, &mut ctx.rng).scaled(r));
    }
    out
}

fn averaging(ctx: &mut Ctx, model: &SystemModel) -> Result<()> {
    let v = ctx.scenario.averaging.clone();
    let scale = ctx.scale;
    let scenario = ctx.scenario.averaging_scenario()?;
    let flow = scenario.flow().clone();
    let omega_grid = TorusGrid::new(flow.dim(), v.omega_grid.unwrap_or(4))?.points();

    let t_max = v.k_t_max.unwrap_or(1000.0);
    let t_grid: Vec<f64> = (0..16).map(|j| t_max.powf(j as f64 / 15.0)).collect();
    let k_tol = v.k_tol.unwrap_or(1e-2) * scale;
    let envs = scenario.check_envelopes(&omega_grid, &t_grid, k_tol)?;
    let k_last = envs.iter().filter_map(|e| e.samples.last().map(|s| s.1)).fold(0.0, f64::max);
    ctx.check("mean_envelope", "k(t) -> 0 for the oscillatory part", k_tol, k_last);
    let mut text = String::from("time,k_forcing,k_coupling\n");
    for (j, &(t, kf)) in envs[0].samples.iter().enumerate() {
        let kc = envs.get(1).map_or(String::new(), |e| format!("{:.9e}", e.samples[j].1));
        let _ = writeln!(text, "{t:.6e},{kf:.9e},{kc}");
    }
    ctx.file("k_envelope.csv", text.into_bytes());

    let xs = x_grid(ctx, model.dim(), scenario.seed_radius(), v.x_grid.unwrap_or(3));
    let curve = divergence_m_l(&scenario, &omega_grid, &xs)?;
    let slack = v.slack.unwrap_or(0.1);
    ctx.check("m_l_monotone", "m_L(eps) decreasing in eps", 1.0 + slack, max_step_ratio(&curve.values));
    ctx.check("m_l_decay", "m_L(eps) -> 0 as eps -> 0", v.decay_target.unwrap_or(0.25), decay_ratio(&curve.values));
    ctx.csv("divergence.csv", |w| curve.write_csv(w))?;
    ctx.file("divergence.gp", plot_script("divergence.csv", "epsilon", "m_L", &[(1, 2, "m_L")], true));

    if let Some((amp, freq, wave, shift)) = single_tone(model, &flow) {
        let lambda = model.eigenvalues()[0];
        let mut worst: f64 = 0.0;
        for (i, &eps) in curve.epsilons.iter().enumerate() {
            let dt = scenario.slow_config(eps).dt;
            let samples = (scenario.horizon() / dt).round() as usize;
            let eff = eps / freq.abs();
            let exact = omega_grid
                .iter()
                .map(|om| {
                    let phase: f64 = wave.iter().zip(om.phases()).map(|(&m, p)| m as f64 * p).sum::<f64>() + shift;
                    let theta = if freq < 0.0 { -phase } else { phase };
                    linear_difference_sup(lambda, amp.abs(), eff, theta, scenario.horizon(), samples)
                })
                .fold(0.0, f64::max);
            worst = worst.max((curve.values[i] - exact).abs() / exact);
        }
        ctx.check("m_l_linear_closed_form", "m_L matches the exact linear response", 0.05 * scale, worst);
    }

    let om = &omega_grid[0];
    let x = xs.last().cloned().unwrap_or_else(|| State::zeros(model.dim()));
    let eps = scenario.epsilons()[0];
    let drift = slow_fast_consistency(&scenario, om, &x, eps)?;
    ctx.check("slow_fast_consistency", "phi_eps(t) = phi(eps t) in slow time", 1e-8 * scenario.seed_radius().max(1.0) * scale, drift);
    Ok(())
}

fn max_step_ratio(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else if w[1] > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max)
}

fn semicontinuity(ctx: &mut Ctx, model: &SystemModel) -> Result<()> {
    let v = ctx.scenario.averaging.clone();
    let scale = ctx.scale;
    let scenario: AveragingScenario = ctx.scenario.averaging_scenario()?;
    let flow = scenario.flow().clone();
    let grid = TorusGrid::new(flow.dim(), v.semicontinuity_grid.unwrap_or(8))?.points();
    let rows = attractor_semicontinuity(&scenario, &grid, v.pullback_t.unwrap_or(24.0), v.cloud_size.unwrap_or(2))?;
    let slack = v.slack.unwrap_or(0.1);
    let global: Vec<f64> = rows.iter().map(|r| r.beta_global).collect();
    ctx.check("beta_monotone", "beta(I^eps I^0) decreasing in eps", 1.0 + slack, max_step_ratio(&global));
    let fiber: Vec<f64> = rows.iter().filter_map(|r| r.beta_fiber_sup).collect();
    if fiber.len() == rows.len() {
        ctx.check("beta_fiber_monotone", "sup_w beta(I^eps_w I^0_w) decreasing in eps", 1.0 + slack, max_step_ratio(&fiber));
    }
    if let Some((amp, freq, _, _)) = single_tone(model, &flow) {
        let lambda = model.eigenvalues()[0];
        let worst = rows
            .iter()
            .map(|r| {
                let expected = linear_oscillation_amplitude(lambda, amp.abs(), r.epsilon / freq.abs());
                (r.beta_global - expected).abs() / expected
            })
            .fold(0.0, f64::max);
        ctx.check("beta_linear_amplitude", "beta = a eps/sqrt(1 + lambda^2 eps^2)", 0.1 * scale, worst);
    }
    ctx.csv("semicontinuity.csv", |w| write_semicontinuity_csv(&rows, w))?;
    let mut series = vec![(1, 2, "beta_global")];
    if !fiber.is_empty() {
        series.push((1, 3, "beta_fiber_sup"));
    }
    ctx.file("semicontinuity.gp", plot_script("semicontinuity.csv", "epsilon", "beta", &series, true));
    Ok(())
}

fn guard(ctx: &mut Ctx) -> Result<()> {
    let s = ctx.scenario;
    let lambda = s.cubic_model().lambda;
    let g = &s.guard;
    let report = local_attractor_guard(
        lambda,
        g.inside.unwrap_or(5.0),
        g.outside.unwrap_or(15.0),
        g.horizon.unwrap_or(20.0),
        1e-6,
        &ctx.cfg(),
    )?;
    let mut text = String::from("lambda,threshold,outside_start,outside_diverged,divergence_time,inside_start,inside_final,inside_converged\n");
    let _ = writeln!(
        text,
        "{:.6e},{:.6e},{:.6e},{},{},{:.6e},{:.6e},{}",
        report.lambda,
        report.threshold,
        report.outside_start,
        report.outside_diverged,
        report.divergence_time.map_or_else(String::new, |t| format!("{t:.6e}")),
        report.inside_start,
        report.inside_final,
        report.inside_converged
    );
    ctx.file("guard.csv", text.into_bytes());
    ctx.check(
        "local_vs_global",
        "divergence outside |x| = lambda^{-1/2} and convergence inside",
        0.0,
        if report.reproduced() { 0.0 } else { 1.0 },
    );
    Ok(())
}

/// A gnuplot script drawing `series` of `(x column, y column, title)`.
fn plot_script(csv: &str, xlabel: &str, ylabel: &str, series: &[(usize, usize, &str)], log: bool) -> Vec<u8> {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\n");
    if log {
        s.push_str("set logscale y\n");
    }
    if !xlabel.is_empty() {
        let _ = writeln!(s, "set xlabel '{xlabel}'");
    }
    if !ylabel.is_empty() {
        let _ = writeln!(s, "set ylabel '{ylabel}'");
    }
    let plots: Vec<String> = series
        .iter()
        .map(|(x, y, t)| format!("'{csv}' using {x}:{y} with linespoints title '{t}'"))
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    let _ = writeln!(s, "pause -1");
    s.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_rows_are_comma_safe() {
        let a = Assertion {
            name: "x".into(),
            paper_ref: "a <= b".into(),
            tolerance: 1e-4,
            measured: 2e-5,
            pass: true,
        };
        let csv = summary_csv(&[a]);
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 5);
    }

    #[test]
    fn step_ratio_flags_growth() {
        assert!(max_step_ratio(&[1.0, 0.5, 0.25]) <= 0.5 + 1e-12);
        assert!(max_step_ratio(&[1.0, 1.2]) > 1.1);
        assert_eq!(max_step_ratio(&[0.0, 0.0]), 0.0);
    }
}
