//! Averaging of rapidly oscillating driving.
//!
//! In slow time `τ` the ε-system is `u' + Au + B(ω τ/ε)(u,u) = f(ω τ/ε)`,
//! i.e. the same model driven by the rotation accelerated by `1/ε`. The
//! averaged system replaces `f` and the coupling by their means `f₀`, `c₀`.

use std::io::Write;

use rayon::prelude::*;

use crate::attractor::{hausdorff_semidistance, pullback_estimate};
use crate::base_flow::{BaseFlow, BasePoint};
use crate::error::{Error, Result};
use crate::integrator::{integrate, integrate_final, Dynamics, IntegratorConfig, Scaled, Stepper, Trajectory};
use crate::system::trig::TrigPoly;
use crate::system::{BilinearDecomposition, ForcingDecomposition, State, SystemModel};

#[derive(Clone, Debug)]
pub struct AveragingScenario {
    model: SystemModel,
    averaged: SystemModel,
    flow: BaseFlow,
    forcing: ForcingDecomposition,
    coupling: Option<BilinearDecomposition>,
    epsilons: Vec<f64>,
    horizon: f64,
    seed_radius: f64,
    dt_fast: f64,
}

impl AveragingScenario {
    /// `structure` supplies `A` and the form of `B`; its forcing and coupling
    /// are replaced by the decompositions' totals.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        structure: &SystemModel,
        flow: BaseFlow,
        forcing: ForcingDecomposition,
        coupling: Option<BilinearDecomposition>,
        epsilons: Vec<f64>,
        horizon: f64,
        seed_radius: f64,
        dt_fast: f64,
    ) -> Result<Self> {
        validate_epsilons(&epsilons)?;
        if !(horizon > 0.0) {
            return Err(Error::Range {
                key: "averaging.horizon".into(),
                reason: format!("must be positive, got {horizon}"),
            });
        }
        if !(dt_fast > 0.0) {
            return Err(Error::Range {
                key: "averaging.dt_fast".into(),
                reason: format!("must be positive, got {dt_fast}"),
            });
        }
        if coupling.is_some() && structure.bilinear().is_zero() {
            return Err(Error::Config("a coupling split needs a model with nonzero B".into()));
        }
        let model = structure.with_parts(coupling.as_ref().map(BilinearDecomposition::total), forcing.total())?;
        let averaged = structure.with_parts(coupling.as_ref().map(|c| c.c0.clone()), forcing.f0.clone())?;
        let r_bar = forcing.f0.sup_norm() / model.alpha();
        if seed_radius < r_bar * (1.0 - 1e-12) {
            return Err(Error::Range {
                key: "averaging.seed_radius".into(),
                reason: format!("must be at least |f0|/alpha = {r_bar}"),
            });
        }
        Ok(Self {
            model,
            averaged,
            flow,
            forcing,
            coupling,
            epsilons,
            horizon,
            seed_radius,
            dt_fast,
        })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn averaged(&self) -> &SystemModel {
        &self.averaged
    }

    pub fn flow(&self) -> &BaseFlow {
        &self.flow
    }

    pub fn forcing(&self) -> &ForcingDecomposition {
        &self.forcing
    }

    pub fn coupling(&self) -> Option<&BilinearDecomposition> {
        self.coupling.as_ref()
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed_radius(&self) -> f64 {
        self.seed_radius
    }

    pub fn dt_fast(&self) -> f64 {
        self.dt_fast
    }

    /// Slow-time step `Δτ = ε·Δt_fast`.
    pub fn slow_config(&self, eps: f64) -> IntegratorConfig {
        IntegratorConfig::with_dt(eps * self.dt_fast)
    }

    /// Checks the zero-mean envelope of `f₁` (and `c₁`) on a base grid.
    pub fn check_envelopes(&self, omega_grid: &[BasePoint], t_grid: &[f64], k_tol: f64) -> Result<Vec<KEnvelope>> {
        let mut out = vec![k_envelope(&self.forcing.f1, &self.flow, omega_grid, t_grid, k_tol)?];
        if let Some(c) = &self.coupling {
            out.push(k_envelope(&c.c1, &self.flow, omega_grid, t_grid, k_tol)?);
        }
        Ok(out)
    }
}

pub fn validate_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.is_empty() {
        return Err(Error::Range {
            key: "averaging.epsilons".into(),
            reason: "list is empty".into(),
        });
    }
    if epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Range {
            key: "averaging.epsilons".into(),
            reason: "values must be positive".into(),
        });
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Range {
            key: "averaging.epsilons".into(),
            reason: "values must be strictly decreasing".into(),
        });
    }
    Ok(())
}

/// Envelope `k(t) = max_ω |(1/t)∫₀ᵗ p(σ(τ,ω))dτ|`.
#[derive(Clone, Debug)]
pub struct KEnvelope {
    pub samples: Vec<(f64, f64)>,
    /// `k(0) = max_ω |p(ω)|`.
    pub k0: f64,
    /// Smallest `t₀` with `k(t) ≤ k0·min(1, t₀/t)` at every sample.
    pub t0: f64,
}

/// Composite Simpson average of `p` along the orbit of `omega` on `[0, t]`.
fn orbit_average(p: &TrigPoly, flow: &BaseFlow, omega: &BasePoint, t: f64) -> Vec<f64> {
    let fastest = flow.frequencies().iter().fold(0.0f64, |a, w| a.max(w.abs()));
    let wave = p
        .terms()
        .iter()
        .map(|term| term.wave.iter().map(|m| m.unsigned_abs()).sum::<u64>())
        .max()
        .unwrap_or(0) as f64;
    let h_max = 0.02 / (fastest * wave).max(1.0);
    let mut steps = ((t / h_max).ceil() as usize).max(2);
    steps += steps % 2;
    let h = t / steps as f64;
    let mut acc = vec![0.0; p.value_dim()];
    let mut buf = vec![0.0; p.value_dim()];
    for j in 0..=steps {
        let w = if j == 0 || j == steps {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        p.eval_into(&flow.advance(omega, j as f64 * h), &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += w * b;
        }
    }
    acc.iter().map(|a| a * h / 3.0 / t).collect()
}

pub fn k_envelope(p: &TrigPoly, flow: &BaseFlow, omega_grid: &[BasePoint], t_grid: &[f64], k_tol: f64) -> Result<KEnvelope> {
    if omega_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::EmptySet("k_envelope"));
    }
    let k0 = omega_grid
        .iter()
        .map(|om| p.eval(om).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let samples: Vec<(f64, f64)> = t_grid
        .par_iter()
        .map(|&t| {
            let k = omega_grid
                .iter()
                .map(|om| orbit_average(p, flow, om, t).iter().map(|x| x * x).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            (t, k)
        })
        .collect();
    let t0 = if k0 > 0.0 {
        samples.iter().map(|&(t, k)| t * k / k0).fold(0.0, f64::max)
    } else {
        0.0
    };
    let &(t_max, k_last) = samples
        .iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("nonempty");
    if k_last > k_tol {
        return Err(Error::Decomposition {
            time: t_max,
            value: k_last,
            tol: k_tol,
        });
    }
    Ok(KEnvelope { samples, k0, t0 })
}

/// Slow-time trajectories of the ε-system and of the averaged system from
/// the same initial state.
pub fn integrate_slow_pair(scenario: &AveragingScenario, omega: &BasePoint, x: &State, eps: f64) -> Result<(Trajectory, Trajectory)> {
    check_slow_inputs(scenario, x, eps)?;
    let flow = scenario.flow.accelerated(eps);
    let cfg = scenario.slow_config(eps);
    let (a, b) = rayon::join(
        || integrate(&scenario.model, &flow, omega, x, scenario.horizon, &cfg),
        || integrate(&scenario.averaged, &flow, omega, x, scenario.horizon, &cfg),
    );
    Ok((a?, b?))
}

fn check_slow_inputs(scenario: &AveragingScenario, x: &State, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= scenario.epsilons[0] * (1.0 + 1e-12)) {
        return Err(Error::Precondition(format!(
            "epsilon {eps} outside (0, {}]",
            scenario.epsilons[0]
        )));
    }
    if x.norm() > scenario.seed_radius * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "initial state |x| = {} lies outside the ball of radius {}",
            x.norm(),
            scenario.seed_radius
        )));
    }
    Ok(())
}

/// `φ_ε(t, x, ω)` in fast time, `u' = ε(-Au - B(u,u) + f(ωt))`, on `[0, L/ε]`.
pub fn integrate_fast(scenario: &AveragingScenario, omega: &BasePoint, x: &State, eps: f64) -> Result<Trajectory> {
    check_slow_inputs(scenario, x, eps)?;
    let scaled = Scaled::new(&scenario.model, eps);
    integrate(&scaled, &scenario.flow, omega, x, scenario.horizon / eps, &IntegratorConfig::with_dt(scenario.dt_fast))
}

/// `max |φ_ε(t) - φ(εt)|` over the common grid of the fast and slow
/// readings.
pub fn slow_fast_consistency(scenario: &AveragingScenario, omega: &BasePoint, x: &State, eps: f64) -> Result<f64> {
    let fast = integrate_fast(scenario, omega, x, eps)?;
    let slow = integrate(&scenario.model, &scenario.flow.accelerated(eps), omega, x, scenario.horizon, &scenario.slow_config(eps))?;
    Ok(fast
        .states
        .iter()
        .zip(&slow.states)
        .map(|(a, b)| a.distance(b))
        .fold(0.0, f64::max))
}

/// `m_L(ε)` per ε with the location of the maximum.
#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceCurve {
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    pub argmax_time: Vec<f64>,
    pub argmax_x_index: Vec<usize>,
    pub argmax_omega_index: Vec<usize>,
}

impl DivergenceCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epsilon,m_L,argmax_time,argmax_x_index")?;
        for i in 0..self.epsilons.len() {
            writeln!(
                w,
                "{:.6e},{:.12e},{:.9e},{}",
                self.epsilons[i], self.values[i], self.argmax_time[i], self.argmax_x_index[i]
            )?;
        }
        Ok(())
    }

    /// `m(ε_{i+1}) ≤ m(ε_i)(1 + slack)` for every consecutive pair.
    pub fn is_monotone(&self, slack: f64) -> bool {
        is_monotone(&self.values, slack)
    }

    /// `m(ε_min) / m(ε_max)`.
    pub fn decay_ratio(&self) -> f64 {
        decay_ratio(&self.values)
    }
}

pub fn is_monotone(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}

pub fn decay_ratio(values: &[f64]) -> f64 {
    match (values.first(), values.last()) {
        (Some(&first), Some(&last)) if first > 0.0 => last / first,
        (Some(_), Some(&0.0)) => 0.0,
        _ => f64::INFINITY,
    }
}

/// Sup over the grid of `|φ(τ) - φ̄(τ)|` for one pair, stepped in lockstep.
fn pair_divergence(scenario: &AveragingScenario, flow: &BaseFlow, omega: &BasePoint, x: &State, eps: f64) -> Result<(f64, f64)> {
    let dt = scenario.slow_config(eps).dt;
    let mut a = Stepper::new(&scenario.model, flow, omega, x, dt)?;
    let mut b = Stepper::new(&scenario.averaged, flow, omega, x, dt)?;
    let steps = ((scenario.horizon / dt) - 1e-9).ceil() as usize;
    let mut best = (0.0, 0.0);
    for k in 1..=steps {
        if k == steps {
            a.run_to(scenario.horizon)?;
            b.run_to(scenario.horizon)?;
        } else {
            a.step()?;
            b.step()?;
        }
        let d = crate::system::norm(
            &a.state()
                .iter()
                .zip(b.state())
                .map(|(p, q)| p - q)
                .collect::<Vec<_>>(),
        );
        if d > best.0 {
            best = (d, a.time());
        }
    }
    Ok(best)
}

/// `m_L(ε) = max_{x, ω, τ ≤ L} |φ - φ̄|` for every ε of the scenario.
pub fn divergence_m_l(scenario: &AveragingScenario, omega_grid: &[BasePoint], x_grid: &[State]) -> Result<DivergenceCurve> {
    if omega_grid.is_empty() || x_grid.is_empty() {
        return Err(Error::EmptySet("divergence_m_l"));
    }
    for x in x_grid {
        check_slow_inputs(scenario, x, scenario.epsilons[0])?;
    }
    let jobs: Vec<(usize, usize, usize)> = (0..scenario.epsilons.len())
        .flat_map(|e| (0..omega_grid.len()).flat_map(move |o| (0..x_grid.len()).map(move |x| (e, o, x))))
        .collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(e, o, x)| {
            let eps = scenario.epsilons[e];
            pair_divergence(scenario, &scenario.flow.accelerated(eps), &omega_grid[o], &x_grid[x], eps)
        })
        .collect::<Result<_>>()?;
    let n = scenario.epsilons.len();
    let mut curve = DivergenceCurve {
        epsilons: scenario.epsilons.clone(),
        values: vec![0.0; n],
        argmax_time: vec![0.0; n],
        argmax_x_index: vec![0; n],
        argmax_omega_index: vec![0; n],
    };
    for (&(e, o, x), &(v, t)) in jobs.iter().zip(&results) {
        if v > curve.values[e] {
            curve.values[e] = v;
            curve.argmax_time[e] = t;
            curve.argmax_x_index[e] = x;
            curve.argmax_omega_index[e] = o;
        }
    }
    Ok(curve)
}

/// `β(I^ε, Ī⁰)` for one ε.
#[derive(Clone, Debug, PartialEq)]
pub struct SemicontinuityRow {
    pub epsilon: f64,
    pub beta_global: f64,
    /// `sup_ω β(I^ε_ω, Ī⁰_ω)`, reported on a one-dimensional base.
    pub beta_fiber_sup: Option<f64>,
}

pub fn write_semicontinuity_csv<W: Write>(rows: &[SemicontinuityRow], mut w: W) -> Result<()> {
    writeln!(w, "epsilon,beta_global,beta_fiber_sup")?;
    for r in rows {
        let fiber = r.beta_fiber_sup.map_or_else(String::new, |b| format!("{b:.12e}"));
        writeln!(w, "{:.6e},{:.12e},{fiber}", r.epsilon, r.beta_global)?;
    }
    Ok(())
}

/// Pullback attractors of the slow-time ε-systems against that of the
/// averaged system.
pub fn attractor_semicontinuity(
    scenario: &AveragingScenario,
    omega_grid: &[BasePoint],
    pullback_t: f64,
    cloud_size: usize,
) -> Result<Vec<SemicontinuityRow>> {
    let seed = scenario.seed_radius.max(scenario.model.r0());
    let averaged = pullback_estimate(
        &scenario.averaged,
        &scenario.flow,
        omega_grid,
        seed,
        pullback_t,
        cloud_size,
        &IntegratorConfig::with_dt(scenario.dt_fast),
    )?;
    let reference = averaged.union();
    let fiberwise = scenario.flow.dim() == 1;
    scenario
        .epsilons
        .iter()
        .map(|&eps| {
            let est = pullback_estimate(
                &scenario.model,
                &scenario.flow.accelerated(eps),
                omega_grid,
                seed,
                pullback_t,
                cloud_size,
                &scenario.slow_config(eps),
            )?;
            let beta_global = hausdorff_semidistance(&est.union(), &reference)?;
            let beta_fiber_sup = if fiberwise {
                let mut worst: f64 = 0.0;
                for (a, b) in est.clouds.iter().zip(&averaged.clouds) {
                    worst = worst.max(hausdorff_semidistance(a, b)?);
                }
                Some(worst)
            } else {
                None
            };
            Ok(SemicontinuityRow {
                epsilon: eps,
                beta_global,
                beta_fiber_sup,
            })
        })
        .collect()
}

/// `x' = -x + λx³`: globally dissipative only for `λ = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicModel {
    pub lambda: f64,
}

impl Dynamics for CubicModel {
    fn dim(&self) -> usize {
        1
    }

    fn eigenvalues(&self) -> &[f64] {
        &[1.0]
    }

    fn nonlinear(&self, _theta: &BasePoint, u: &[f64], out: &mut [f64]) {
        out[0] = self.lambda * u[0].powi(3);
    }

    fn absorbing_radius(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuardReport {
    pub lambda: f64,
    /// `λ^{-1/2}`, infinite for `λ ≤ 0`.
    pub threshold: f64,
    pub outside_start: f64,
    pub outside_diverged: bool,
    pub divergence_time: Option<f64>,
    pub inside_start: f64,
    pub inside_final: f64,
    pub inside_converged: bool,
}

impl GuardReport {
    /// The local-versus-global distinction is reproduced.
    pub fn reproduced(&self) -> bool {
        let outside_ok = if self.lambda > 0.0 && self.outside_start.abs() > self.threshold {
            self.outside_diverged
        } else {
            !self.outside_diverged
        };
        outside_ok && self.inside_converged
    }
}

/// Runs the cubic regression model from one state inside and one outside
/// `|x| = λ^{-1/2}`.
pub fn local_attractor_guard(lambda: f64, inside: f64, outside: f64, horizon: f64, tol: f64, cfg: &IntegratorConfig) -> Result<GuardReport> {
    let model = CubicModel { lambda };
    let flow = BaseFlow::circle();
    let om = BasePoint::origin(1);
    let threshold = if lambda > 0.0 { lambda.powf(-0.5) } else { f64::INFINITY };
    let (outside_diverged, divergence_time) = match integrate_final(&model, &flow, &om, &State::new(vec![outside]), horizon, cfg) {
        Ok(_) => (false, None),
        Err(Error::Divergence { time, .. }) => (true, Some(time)),
        Err(e) => return Err(e),
    };
    let inside_final = match integrate_final(&model, &flow, &om, &State::new(vec![inside]), horizon, cfg) {
        Ok(s) => s[0],
        Err(Error::Divergence { norm, .. }) => norm,
        Err(e) => return Err(e),
    };
    Ok(GuardReport {
        lambda,
        threshold,
        outside_start: outside,
        outside_diverged,
        divergence_time,
        inside_start: inside,
        inside_final,
        inside_converged: inside_final.abs() <= tol,
    })
}

/// Amplitude `aε/√(1 + λ²ε²)` of the bounded response of
/// `v' = -λv + a cos(τ/ε + θ)`.
pub fn linear_oscillation_amplitude(lambda: f64, amplitude: f64, eps: f64) -> f64 {
    amplitude * eps / (1.0 + lambda * lambda * eps * eps).sqrt()
}

/// Exact `sup_{τ ≤ L} |v(τ)|` for `v' = -λv + a cos(τ/ε + θ)`, `v(0) = 0`,
/// sampled at `samples` uniform points.
pub fn linear_difference_sup(lambda: f64, amplitude: f64, eps: f64, theta: f64, horizon: f64, samples: usize) -> f64 {
    let w = 1.0 / eps;
    let den = lambda * lambda + w * w;
    let p = |tau: f64| amplitude * (lambda * (w * tau + theta).cos() + w * (w * tau + theta).sin()) / den;
    let p0 = p(0.0);
    (0..=samples)
        .map(|j| {
            let tau = horizon * j as f64 / samples as f64;
            (p(tau) - p0 * (-lambda * tau).exp()).abs()
        })
        .fold(0.0, f64::max)
}
