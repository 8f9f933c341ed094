//! Mild solutions `φ(t, x, ω)` of `u' + Λu = N(ωt, u)` with diagonal `Λ`.
//!
//! The default scheme is the second-order exponential Runge-Kutta method
//! (ETD2RK): the linear part is propagated exactly and the nonlinear
//! convolution is approximated by the exponential trapezoid rule. The base
//! phase at every stage is computed analytically from `σ`, so the driving
//! contributes no discretisation error.
//!
//! `picard_solve` iterates the integral operator
//! `(Φψ)(t) = e^{-Λt}x + ∫₀ᵗ e^{-Λ(t-s)} N(ωs, ψ(s)) ds`
//! on a grid, using the same exponential trapezoid quadrature.

use std::io::Write;

use crate::base_flow::{BaseFlow, BasePoint};
use crate::error::{Error, Result};
use crate::system::{norm, State, SystemModel};

/// A semilinear system `u' + Λu = N(θ, u)` driven by the base flow.
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;

    /// Diagonal of `Λ`.
    fn eigenvalues(&self) -> &[f64];

    /// Writes `N(θ, u)` into `out`.
    fn nonlinear(&self, theta: &BasePoint, u: &[f64], out: &mut [f64]);

    /// Radius beyond which trajectories are not expected to stray; drives the
    /// blow-up guard.
    fn absorbing_radius(&self) -> f64;

    /// Constant `C` in `|N(θ,u) - N(θ,v)| ≤ C(|u|+|v|)|u-v|`, if the
    /// nonlinearity is quadratic.
    fn quadratic_bound(&self) -> Option<f64> {
        None
    }
}

impl Dynamics for SystemModel {
    fn dim(&self) -> usize {
        SystemModel::dim(self)
    }

    fn eigenvalues(&self) -> &[f64] {
        SystemModel::eigenvalues(self)
    }

    fn nonlinear(&self, theta: &BasePoint, u: &[f64], out: &mut [f64]) {
        self.bilinear_into(theta, u, u, out);
        let f = self.forcing_poly().eval(theta);
        for (o, fi) in out.iter_mut().zip(f) {
            *o = fi - *o;
        }
    }

    fn absorbing_radius(&self) -> f64 {
        self.r0()
    }

    fn quadratic_bound(&self) -> Option<f64> {
        Some(self.c_b())
    }
}

/// `u' = ε(-Λu + N(θ,u))`: the same system with time slowed by `ε`.
pub struct Scaled<'a, D: Dynamics + ?Sized> {
    inner: &'a D,
    eps: f64,
    eig: Vec<f64>,
}

impl<'a, D: Dynamics + ?Sized> Scaled<'a, D> {
    pub fn new(inner: &'a D, eps: f64) -> Self {
        Self {
            inner,
            eps,
            eig: inner.eigenvalues().iter().map(|l| l * eps).collect(),
        }
    }
}

impl<D: Dynamics + ?Sized> Dynamics for Scaled<'_, D> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eigenvalues(&self) -> &[f64] {
        &self.eig
    }

    fn nonlinear(&self, theta: &BasePoint, u: &[f64], out: &mut [f64]) {
        self.inner.nonlinear(theta, u, out);
        out.iter_mut().for_each(|o| *o *= self.eps);
    }

    fn absorbing_radius(&self) -> f64 {
        self.inner.absorbing_radius()
    }

    fn quadratic_bound(&self) -> Option<f64> {
        self.inner.quadratic_bound().map(|c| c * self.eps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExponentialRk2,
    Picard,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub method: Method,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Keep every k-th grid point in the returned trajectory (the final time
    /// is always kept).
    pub record_every: usize,
    /// Radius `r` of the ball `B[x₀, r]` used for the Picard contraction
    /// constant; `None` means `max(|x₀|, r₀)`.
    pub picard_radius: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            method: Method::ExponentialRk2,
            picard_tol: 1e-10,
            picard_max_iter: 200,
            record_every: 1,
            picard_radius: None,
        }
    }
}

impl IntegratorConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    /// Defaults for the Galerkin instance.
    pub fn galerkin() -> Self {
        Self::with_dt(2.5e-4)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Range {
                key: "integrator.dt".into(),
                reason: format!("must be positive, got {}", self.dt),
            });
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::Range {
                key: "integrator.picard_tol".into(),
                reason: format!("must be positive, got {}", self.picard_tol),
            });
        }
        if self.record_every == 0 {
            return Err(Error::Range {
                key: "integrator.record_every".into(),
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Time grid plus states, the discrete realisation of `t ↦ φ(t, x, ω)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub base_start: BasePoint,
    pub step: f64,
}

impl Trajectory {
    pub fn initial(&self) -> &State {
        &self.states[0]
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Columns: `time, coeff_0 … coeff_{n-1}, energy_norm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.states.first().map_or(0, State::len);
        let mut header = String::from("time");
        for i in 0..n {
            header.push_str(&format!(",coeff_{i}"));
        }
        header.push_str(",energy_norm");
        writeln!(w, "{header}")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut line = format!("{t:.9e}");
            for c in s.as_slice() {
                line.push_str(&format!(",{c:.12e}"));
            }
            line.push_str(&format!(",{:.12e}", s.norm()));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

// φ-functions of the exponential integrator, stable for small arguments.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0 + z.powi(4) / 720.0
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Per-mode coefficients of one step of size `h`.
#[derive(Clone, Debug)]
struct StepWeights {
    h: f64,
    decay: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

impl StepWeights {
    fn new(eig: &[f64], h: f64) -> Self {
        let decay = eig.iter().map(|l| (-l * h).exp()).collect();
        let w1 = eig.iter().map(|l| h * phi1(-l * h)).collect();
        let w2 = eig.iter().map(|l| h * phi2(-l * h)).collect();
        Self { h, decay, w1, w2 }
    }
}

/// Single-trajectory ETD2RK time stepper.
pub struct Stepper<'a, D: Dynamics + ?Sized> {
    sys: &'a D,
    flow: &'a BaseFlow,
    omega: BasePoint,
    steps_taken: usize,
    dt: f64,
    time: f64,
    u: Vec<f64>,
    limit: f64,
    nominal: StepWeights,
    n0: Vec<f64>,
    n1: Vec<f64>,
    stage: Vec<f64>,
}

impl<'a, D: Dynamics + ?Sized> Stepper<'a, D> {
    pub fn new(sys: &'a D, flow: &'a BaseFlow, omega: &BasePoint, x: &State, dt: f64) -> Result<Self> {
        if x.len() != sys.dim() {
            return Err(Error::DimensionMismatch {
                expected: sys.dim(),
                found: x.len(),
            });
        }
        if !x.is_finite() {
            return Err(Error::Precondition("initial state must be finite".into()));
        }
        let n = sys.dim();
        Ok(Self {
            sys,
            flow,
            omega: omega.clone(),
            steps_taken: 0,
            dt,
            time: 0.0,
            u: x.as_slice().to_vec(),
            limit: 1e3 * sys.absorbing_radius().max(x.norm()),
            nominal: StepWeights::new(sys.eigenvalues(), dt),
            n0: vec![0.0; n],
            n1: vec![0.0; n],
            stage: vec![0.0; n],
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn state(&self) -> &[f64] {
        &self.u
    }

    fn theta(&self, t: f64) -> BasePoint {
        self.flow.advance(&self.omega, t)
    }

    fn advance_by(&mut self, h: f64, new_time: f64) -> Result<()> {
        let partial;
        let w = if h == self.nominal.h {
            &self.nominal
        } else {
            partial = StepWeights::new(self.sys.eigenvalues(), h);
            &partial
        };
        let th0 = self.theta(self.time);
        self.sys.nonlinear(&th0, &self.u, &mut self.n0);
        for i in 0..self.u.len() {
            self.stage[i] = w.decay[i] * self.u[i] + w.w1[i] * self.n0[i];
        }
        let th1 = self.theta(new_time);
        self.sys.nonlinear(&th1, &self.stage, &mut self.n1);
        for i in 0..self.u.len() {
            self.u[i] = self.stage[i] + w.w2[i] * (self.n1[i] - self.n0[i]);
        }
        self.time = new_time;
        let r = norm(&self.u);
        if !r.is_finite() || (self.limit > 0.0 && r > self.limit) {
            return Err(Error::Divergence {
                time: self.time,
                norm: r,
            });
        }
        Ok(())
    }

    /// One nominal step.
    pub fn step(&mut self) -> Result<()> {
        self.steps_taken += 1;
        let t = self.steps_taken as f64 * self.dt;
        self.advance_by(self.dt, t)
    }

    /// Step to exactly `t_end`, shortening the final step if needed.
    pub fn run_to(&mut self, t_end: f64) -> Result<()> {
        while self.time < t_end {
            let next = (self.steps_taken + 1) as f64 * self.dt;
            if next >= t_end - 1e-9 * self.dt {
                let h = t_end - self.time;
                self.steps_taken += 1;
                self.advance_by(h, t_end)?;
                break;
            }
            self.step()?;
        }
        Ok(())
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("horizon must be positive, got {horizon}")))
    }
}

/// Number of grid steps for `horizon`; the last step may be shorter than `dt`.
fn step_count(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(1.0) as usize
}

/// The discrete cocycle `φ(t, x, ω)` for `t ∈ [0, horizon]`.
pub fn integrate<D: Dynamics + ?Sized>(
    sys: &D,
    flow: &BaseFlow,
    omega: &BasePoint,
    x: &State,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_horizon(horizon)?;
    if cfg.method == Method::Picard {
        return picard_solve(sys, flow, omega, x, horizon, cfg).map(|p| p.trajectory);
    }
    let steps = step_count(horizon, cfg.dt);
    let mut stepper = Stepper::new(sys, flow, omega, x, cfg.dt)?;
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    for k in 1..=steps {
        if k == steps {
            stepper.run_to(horizon)?;
        } else {
            stepper.step()?;
        }
        if k % cfg.record_every == 0 || k == steps {
            times.push(stepper.time());
            states.push(State::new(stepper.state().to_vec()));
        }
    }
    Ok(Trajectory {
        times,
        states,
        base_start: omega.clone(),
        step: cfg.dt,
    })
}

/// `φ(horizon, x, ω)` without storing the path.
pub fn integrate_final<D: Dynamics + ?Sized>(
    sys: &D,
    flow: &BaseFlow,
    omega: &BasePoint,
    x: &State,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<State> {
    cfg.validate()?;
    if horizon == 0.0 {
        return Ok(x.clone());
    }
    check_horizon(horizon)?;
    let mut stepper = Stepper::new(sys, flow, omega, x, cfg.dt)?;
    stepper.run_to(horizon)?;
    Ok(State::new(stepper.state().to_vec()))
}

/// Outcome of the Picard iteration.
#[derive(Clone, Debug)]
pub struct PicardSolution {
    pub trajectory: Trajectory,
    /// Number of applications of the integral operator.
    pub iterations: usize,
    /// Sup-norm distances between successive iterates.
    pub distances: Vec<f64>,
    /// Contraction constant `L = 2 C_B (|x₀| + r) T` guaranteed a priori.
    pub lipschitz: f64,
    /// Ball radius `r` used in `L`.
    pub radius: f64,
    /// Whether every iterate stayed inside `B[x₀, r]`.
    pub stayed_in_ball: bool,
}

impl PicardSolution {
    /// Ratios `d_{k+1}/d_k` of successive iterate distances, skipping
    /// distances already at round-off level.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.distances
            .windows(2)
            .filter(|w| w[0] > 1e-13)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// Fixed point of the mild-solution operator on `[0, horizon]`.
///
/// Rejects horizons for which the a-priori contraction constant
/// `2 C_B (|x₀| + r) T` is not below one.
pub fn picard_solve<D: Dynamics + ?Sized>(
    sys: &D,
    flow: &BaseFlow,
    omega: &BasePoint,
    x: &State,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<PicardSolution> {
    cfg.validate()?;
    check_horizon(horizon)?;
    let c_b = sys
        .quadratic_bound()
        .ok_or_else(|| Error::Precondition("Picard iteration needs a quadratic nonlinearity".into()))?;
    if x.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: x.len(),
        });
    }
    let x0 = x.norm();
    let radius = cfg.picard_radius.unwrap_or_else(|| x0.max(sys.absorbing_radius()));
    let lipschitz = 2.0 * c_b * (x0 + radius) * horizon;
    if lipschitz >= 1.0 {
        return Err(Error::NotContractive {
            lipschitz,
            max_horizon: 1.0 / (2.0 * c_b * (x0 + radius)),
        });
    }

    let steps = step_count(horizon, cfg.dt);
    let times: Vec<f64> = (0..=steps)
        .map(|j| if j == steps { horizon } else { j as f64 * cfg.dt })
        .collect();
    let thetas: Vec<BasePoint> = times.iter().map(|&t| flow.advance(omega, t)).collect();
    let eig = sys.eigenvalues();
    let nominal = StepWeights::new(eig, cfg.dt);
    let last = StepWeights::new(eig, times[steps] - times[steps - 1]);
    let n = sys.dim();

    let mut psi: Vec<Vec<f64>> = vec![x.as_slice().to_vec(); steps + 1];
    let mut g: Vec<Vec<f64>> = vec![vec![0.0; n]; steps + 1];
    let mut distances = Vec::new();
    let mut stayed_in_ball = true;

    for iteration in 1..=cfg.picard_max_iter {
        for (j, gj) in g.iter_mut().enumerate() {
            sys.nonlinear(&thetas[j], &psi[j], gj);
        }
        let mut next = vec![x.as_slice().to_vec(); steps + 1];
        for j in 0..steps {
            let w = if j + 1 == steps { &last } else { &nominal };
            for i in 0..n {
                next[j + 1][i] = w.decay[i] * next[j][i] + (w.w1[i] - w.w2[i]) * g[j][i] + w.w2[i] * g[j + 1][i];
            }
        }
        let d = psi
            .iter()
            .zip(&next)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if next.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::Divergence {
                time: horizon,
                norm: f64::INFINITY,
            });
        }
        let excursion = next
            .iter()
            .map(|s| s.iter().zip(x.as_slice()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        stayed_in_ball &= excursion <= radius * (1.0 + 1e-12);
        psi = next;
        distances.push(d);
        if d <= cfg.picard_tol {
            return Ok(PicardSolution {
                trajectory: Trajectory {
                    times,
                    states: psi.into_iter().map(State::new).collect(),
                    base_start: omega.clone(),
                    step: cfg.dt,
                },
                iterations: iteration,
                distances,
                lipschitz,
                radius,
                stayed_in_ball,
            });
        }
    }
    Err(Error::IterationLimit {
        iterations: cfg.picard_max_iter,
        residual: distances.last().copied().unwrap_or(f64::NAN),
    })
}

/// Sup over trajectories and grid pairs with `|t₁ - t₂| ≤ delta` of
/// `|x(t₁) - x(t₂)|`.
pub fn equicontinuity_modulus(trajectories: &[Trajectory], delta: f64) -> Result<f64> {
    if delta <= 0.0 || trajectories.is_empty() {
        return Ok(0.0);
    }
    let grid = &trajectories[0].times;
    if trajectories.iter().any(|t| t.times != *grid) {
        return Err(Error::Precondition("trajectories must share one time grid".into()));
    }
    let mut worst: f64 = 0.0;
    for tr in trajectories {
        for i in 0..grid.len() {
            for j in (i + 1)..grid.len() {
                if grid[j] - grid[i] > delta * (1.0 + 1e-12) {
                    break;
                }
                worst = worst.max(tr.states[i].distance(&tr.states[j]));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::trig::{Harmonic, TrigPoly, TrigTerm};
    use std::f64::consts::PI;

    fn scalar(forcing: TrigPoly) -> SystemModel {
        SystemModel::linear(vec![1.0], forcing).unwrap()
    }

    fn cos_forcing() -> TrigPoly {
        TrigPoly::scalar(1, &[(vec![1], Harmonic::Cos, 1.0)]).unwrap()
    }

    fn toy(c: f64, f: f64) -> SystemModel {
        SystemModel::toy(
            [1.0, 1.5],
            TrigPoly::scalar(1, &[(vec![0], Harmonic::Cos, c)]).unwrap(),
            TrigPoly::new(
                1,
                2,
                vec![
                    TrigTerm { wave: vec![1], harmonic: Harmonic::Cos, coeff: vec![f, 0.0] },
                    TrigTerm { wave: vec![1], harmonic: Harmonic::Sin, coeff: vec![0.0, f] },
                ],
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn phi_functions_are_continuous() {
        for z in [-1e-2, -1e-5, -1e-3] {
            let a = phi1(z * (1.0 - 1e-9));
            let b = phi1(z * (1.0 + 1e-9));
            assert!((a - b).abs() < 1e-10);
            let a = phi2(z * (1.0 - 1e-9));
            let b = phi2(z * (1.0 + 1e-9));
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn pure_decay() {
        let m = scalar(TrigPoly::zero(1, 1));
        let tr = integrate(&m, &BaseFlow::circle(), &BasePoint::origin(1), &State::new(vec![1.0]), 1.0, &IntegratorConfig::default()).unwrap();
        assert!((tr.last()[0] - (-1.0f64).exp()).abs() < 1e-6);
        assert_eq!(tr.initial(), &State::new(vec![1.0]));
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*tr.times.last().unwrap(), 1.0);
    }

    #[test]
    fn forced_scalar_reaches_bounded_solution() {
        // u' = -u + cos t has the attracting solution (cos t + sin t)/2
        let m = scalar(cos_forcing());
        let horizon = 20.0 * PI;
        let u = integrate_final(&m, &BaseFlow::circle(), &BasePoint::origin(1), &State::new(vec![3.0]), horizon, &IntegratorConfig::default()).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn step_halving_is_second_order() {
        let m = scalar(cos_forcing());
        let exact = |t: f64| 0.5 * (t.cos() + t.sin()) + (1.0 - 0.5) * (-t).exp();
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| {
                let u = integrate_final(&m, &BaseFlow::circle(), &BasePoint::origin(1), &State::new(vec![1.0]), 3.0, &IntegratorConfig::with_dt(dt)).unwrap();
                (u[0] - exact(3.0)).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.15, "order {order}");
        }
    }

    #[test]
    fn cocycle_property_on_toy() {
        let m = toy(1.0, 0.5);
        let flow = BaseFlow::circle();
        let om = BasePoint::new(vec![0.7]).unwrap();
        let x = State::new(vec![0.3, -0.4]);
        let cfg = IntegratorConfig::default();
        for (t1, t2) in [(1.2345, 2.5), (0.5, 4.321)] {
            let direct = integrate_final(&m, &flow, &om, &x, t1 + t2, &cfg).unwrap();
            let mid = integrate_final(&m, &flow, &om, &x, t1, &cfg).unwrap();
            let restarted = integrate_final(&m, &flow, &flow.advance(&om, t1), &mid, t2, &cfg).unwrap();
            assert!(direct.distance(&restarted) < 10.0 * cfg.dt * cfg.dt);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        struct Cubic;
        impl Dynamics for Cubic {
            fn dim(&self) -> usize {
                1
            }
            fn eigenvalues(&self) -> &[f64] {
                &[1.0]
            }
            fn nonlinear(&self, _: &BasePoint, u: &[f64], out: &mut [f64]) {
                out[0] = u[0].powi(3);
            }
            fn absorbing_radius(&self) -> f64 {
                0.0
            }
        }
        let err = integrate(&Cubic, &BaseFlow::circle(), &BasePoint::origin(1), &State::new(vec![2.0]), 5.0, &IntegratorConfig::default());
        assert!(matches!(err, Err(Error::Divergence { .. })));
    }

    #[test]
    fn picard_linear_needs_one_extra_sweep() {
        let m = scalar(cos_forcing());
        let sol = picard_solve(&m, &BaseFlow::circle(), &BasePoint::origin(1), &State::new(vec![0.2]), 1.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(sol.iterations, 2);
        assert_eq!(*sol.distances.last().unwrap(), 0.0);
    }

    #[test]
    fn picard_contracts_at_the_predicted_rate() {
        let m = toy(1.0, 0.5);
        let x = State::new(vec![0.3, 0.2]);
        let r = x.norm().max(m.r0());
        let horizon = 0.5 / (2.0 * m.c_b() * (x.norm() + r));
        let sol = picard_solve(&m, &BaseFlow::circle(), &BasePoint::origin(1), &x, horizon, &IntegratorConfig::default()).unwrap();
        assert!((sol.lipschitz - 0.5).abs() < 1e-12);
        assert!(sol.contraction_ratios().iter().all(|&q| q <= 0.55));
        let rk = integrate(&m, &BaseFlow::circle(), &BasePoint::origin(1), &x, horizon, &IntegratorConfig::default()).unwrap();
        for (a, b) in rk.states.iter().zip(&sol.trajectory.states) {
            assert!(a.distance(b) <= 1e-10f64.max(10.0 * 1e-6));
        }
    }

    #[test]
    fn picard_rejects_long_horizon() {
        let m = toy(1.0, 0.5);
        let err = picard_solve(&m, &BaseFlow::circle(), &BasePoint::origin(1), &State::new(vec![0.3, 0.2]), 10.0, &IntegratorConfig::default());
        match err {
            Err(Error::NotContractive { max_horizon, .. }) => assert!(max_horizon > 0.0 && max_horizon < 10.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn picard_iteration_limit() {
        let m = toy(1.0, 0.5);
        let cfg = IntegratorConfig {
            picard_max_iter: 2,
            picard_tol: 1e-14,
            ..IntegratorConfig::default()
        };
        let err = picard_solve(&m, &BaseFlow::circle(), &BasePoint::origin(1), &State::new(vec![0.3, 0.2]), 0.2, &cfg);
        assert!(matches!(err, Err(Error::IterationLimit { iterations: 2, .. })));
    }

    #[test]
    fn equicontinuity_examples() {
        let m = toy(1.0, 0.5);
        let flow = BaseFlow::circle();
        let cfg = IntegratorConfig::with_dt(1e-2);
        let trs: Vec<Trajectory> = [0.0, 1.0, 2.0]
            .iter()
            .map(|&th| integrate(&m, &flow, &BasePoint::new(vec![th]).unwrap(), &State::new(vec![0.4, 0.1]), 5.0, &cfg).unwrap())
            .collect();
        assert_eq!(equicontinuity_modulus(&trs, 0.0).unwrap(), 0.0);
        let mut prev = f64::INFINITY;
        for delta in [1.0, 0.5, 0.25, 0.125] {
            let w = equicontinuity_modulus(&trs, delta).unwrap();
            assert!(w <= prev);
            prev = w;
        }
        // equilibrium of the unforced system
        let still = scalar(TrigPoly::zero(1, 1));
        let eq = integrate(&still, &flow, &BasePoint::origin(1), &State::zeros(1), 2.0, &cfg).unwrap();
        assert_eq!(equicontinuity_modulus(&[eq], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn csv_columns() {
        let m = toy(1.0, 0.5);
        let tr = integrate(&m, &BaseFlow::circle(), &BasePoint::origin(1), &State::new(vec![0.4, 0.1]), 0.01, &IntegratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,coeff_0,coeff_1,energy_norm\n"));
        assert_eq!(text.lines().count(), tr.len() + 1);
    }
}
