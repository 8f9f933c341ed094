//! Quantitative estimates checked along computed trajectories.
//!
//! Each check returns a [`BoundReport`] whose `max_violation` is the largest
//! value of `lhs - rhs` over the samples (positive means the exact inequality
//! is violated) and which passes when that value is within the recorded
//! tolerance.

use std::io::Write;

use rayon::prelude::*;

use crate::base_flow::{BaseFlow, BasePoint};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig, Trajectory};
use crate::system::{State, SystemModel};

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub name: String,
    pub tolerance: f64,
    pub max_violation: f64,
    /// `(time, lhs - rhs)` samples.
    pub margins: Vec<(f64, f64)>,
    pub passed: bool,
}

impl BoundReport {
    pub fn from_margins(name: impl Into<String>, tolerance: f64, margins: Vec<(f64, f64)>) -> Self {
        let max_violation = margins
            .iter()
            .map(|&(_, m)| m)
            .fold(f64::NEG_INFINITY, f64::max);
        let passed = margins.iter().all(|&(_, m)| m.is_finite()) && max_violation <= tolerance;
        Self {
            name: name.into(),
            tolerance,
            max_violation,
            margins,
            passed,
        }
    }

    /// Combine several reports of the same bound into one.
    pub fn merge(name: impl Into<String>, tolerance: f64, reports: Vec<BoundReport>) -> Self {
        let margins = reports.into_iter().flat_map(|r| r.margins).collect();
        Self::from_margins(name, tolerance, margins)
    }

    pub const CSV_HEADER: &'static str = "bound_name,tolerance,max_violation,passed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6e},{:.6e},{}",
            self.name, self.tolerance, self.max_violation, self.passed
        )
    }

    /// Margin series as `time,margin` CSV.
    pub fn write_margins_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,margin")?;
        for (t, m) in &self.margins {
            writeln!(w, "{t:.9e},{m:.9e}")?;
        }
        Ok(())
    }
}

/// `(|x| - r₀) e^{-αt} + r₀`.
pub fn dissipativity_envelope(model: &SystemModel, x_norm: f64, t: f64) -> f64 {
    let r0 = model.r0();
    (x_norm - r0) * (-model.alpha() * t).exp() + r0
}

pub fn check_dissipativity_envelope(traj: &Trajectory, model: &SystemModel, tol: f64) -> BoundReport {
    let x = traj.initial().norm();
    let margins = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| (t, s.norm() - dissipativity_envelope(model, x, t)))
        .collect();
    BoundReport::from_margins("dissipativity_envelope", tol, margins)
}

/// `|φ(T_long, x, ω)| ≤ r₀ + tol` for every sampled base point and initial
/// state.
pub fn check_absorbing_ball(
    model: &SystemModel,
    flow: &BaseFlow,
    omegas: &[BasePoint],
    initial: &[State],
    t_long: f64,
    tol: f64,
    cfg: &IntegratorConfig,
) -> Result<BoundReport> {
    let r0 = model.r0();
    let widest = initial.iter().map(State::norm).fold(0.0, f64::max);
    let excess = (widest - r0).max(0.0) * (-model.alpha() * t_long).exp();
    if excess > tol {
        return Err(Error::Precondition(format!(
            "T_long = {t_long} leaves envelope excess {excess:.3e} above tolerance {tol:.3e}"
        )));
    }
    let jobs: Vec<(&BasePoint, &State)> = omegas
        .iter()
        .flat_map(|om| initial.iter().map(move |x| (om, x)))
        .collect();
    let finals: Vec<State> = jobs
        .par_iter()
        .map(|(om, x)| crate::integrator::integrate_final(model, flow, om, x, t_long, cfg))
        .collect::<Result<_>>()?;
    let margins = finals.iter().map(|s| (t_long, s.norm() - r0)).collect();
    Ok(BoundReport::from_margins("absorbing_ball", tol, margins))
}

/// Trapezoid integrals of `|φ|²` over every window `[tᵢ, tᵢ + l]` that fits
/// in the trajectory, keyed by window start.
pub fn window_integrals(traj: &Trajectory, l: f64) -> Vec<(f64, f64)> {
    let t = &traj.times;
    let g: Vec<f64> = traj.states.iter().map(|s| s.norm().powi(2)).collect();
    let mut prefix = vec![0.0; t.len()];
    for j in 1..t.len() {
        prefix[j] = prefix[j - 1] + 0.5 * (t[j] - t[j - 1]) * (g[j] + g[j - 1]);
    }
    let end = *t.last().unwrap_or(&0.0);
    let eps = 1e-9 * traj.step;
    let mut out = Vec::new();
    for i in 0..t.len() {
        let te = t[i] + l;
        if te > end + eps {
            break;
        }
        // first grid index with t[j] >= te
        let j = t.partition_point(|&s| s < te - eps);
        let upto = if (t[j] - te).abs() <= eps {
            prefix[j]
        } else {
            let w = (te - t[j - 1]) / (t[j] - t[j - 1]);
            let ge = g[j - 1] + w * (g[j] - g[j - 1]);
            prefix[j - 1] + 0.5 * (te - t[j - 1]) * (g[j - 1] + ge)
        };
        out.push((t[i], upto - prefix[i]));
    }
    out
}

/// `r²/(2α) + (r/α) l ‖f‖`.
pub fn time_average_bound(model: &SystemModel, l: f64, r: f64) -> f64 {
    r * r / (2.0 * model.alpha()) + r / model.alpha() * l * model.f_sup()
}

pub fn check_time_average(traj: &Trajectory, model: &SystemModel, l: f64, r: f64, tol: f64) -> Result<BoundReport> {
    if r < model.r0() * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("radius {r} is below r0 = {}", model.r0())));
    }
    if traj.initial().norm() > r * (1.0 + 1e-12) {
        return Err(Error::Precondition("initial state lies outside the ball of radius r".into()));
    }
    let span = traj.times.last().copied().unwrap_or(0.0) - traj.times[0];
    if span < l * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("trajectory spans {span}, shorter than window {l}")));
    }
    let m = time_average_bound(model, l, r);
    let margins = window_integrals(traj, l).into_iter().map(|(t, v)| (t, v - m)).collect();
    Ok(BoundReport::from_margins("time_average", tol, margins))
}

/// Two-trajectory contraction measurement.
#[derive(Clone, Debug)]
pub struct ContractionMeasurement {
    /// Least-squares slope of `log|φ(t,x₁) - φ(t,x₂)|` over the second half of
    /// the horizon; `None` when the distance vanishes.
    pub slope: Option<f64>,
    /// Guaranteed rate `α - C_B‖f‖/α`.
    pub guaranteed_rate: f64,
    pub envelope: BoundReport,
    pub distances: Vec<(f64, f64)>,
}

#[allow(clippy::too_many_arguments)]
pub fn measure_contraction(
    model: &SystemModel,
    flow: &BaseFlow,
    omega: &BasePoint,
    x1: &State,
    x2: &State,
    horizon: f64,
    tol: f64,
    cfg: &IntegratorConfig,
) -> Result<ContractionMeasurement> {
    model.require_smallness()?;
    let (a, b) = rayon::join(
        || integrate(model, flow, omega, x1, horizon, cfg),
        || integrate(model, flow, omega, x2, horizon, cfg),
    );
    let (a, b) = (a?, b?);
    let rate = model.contraction_rate();
    let d0 = x1.distance(x2);
    let distances: Vec<(f64, f64)> = a
        .times
        .iter()
        .zip(a.states.iter().zip(&b.states))
        .map(|(&t, (p, q))| (t, p.distance(q)))
        .collect();
    let margins = distances
        .iter()
        .map(|&(t, d)| (t, d - (-rate * t).exp() * d0))
        .collect();
    let slope = log_slope(&distances, horizon / 2.0);
    Ok(ContractionMeasurement {
        slope,
        guaranteed_rate: rate,
        envelope: BoundReport::from_margins("contraction", tol, margins),
        distances,
    })
}

/// Least-squares slope of `log d` against `t` for samples with `t ≥ from`.
pub fn log_slope(series: &[(f64, f64)], from: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|&&(t, d)| t >= from && d > 0.0 && d.is_finite())
        .map(|&(t, d)| (t, d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `|Aφ(t)|` along the trajectory.
pub fn da_norms(traj: &Trajectory, model: &SystemModel) -> Vec<(f64, f64)> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| {
            let v: f64 = s
                .as_slice()
                .iter()
                .zip(model.eigenvalues())
                .map(|(c, l)| (c * l).powi(2))
                .sum();
            (t, v.sqrt())
        })
        .collect()
}

/// Late-window `sup |Aφ|` compared against the early window `[0, split]`.
pub fn check_da_bound(traj: &Trajectory, model: &SystemModel, split: f64, tol: f64) -> BoundReport {
    let norms = da_norms(traj, model);
    let early = norms
        .iter()
        .filter(|&&(t, _)| t <= split)
        .map(|&(_, v)| v)
        .fold(0.0, f64::max);
    let margins = norms
        .iter()
        .filter(|&&(t, _)| t > split)
        .map(|&(t, v)| (t, if v.is_finite() { v - early } else { f64::INFINITY }))
        .collect();
    BoundReport::from_margins("da_bound", tol, margins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::trig::{Harmonic, TrigPoly, TrigTerm};

    fn scalar(f: TrigPoly) -> SystemModel {
        SystemModel::linear(vec![1.0], f).unwrap()
    }

    fn cos_t() -> TrigPoly {
        TrigPoly::scalar(1, &[(vec![1], Harmonic::Cos, 1.0)]).unwrap()
    }

    fn toy() -> SystemModel {
        SystemModel::toy(
            [1.0, 1.5],
            TrigPoly::constant(1, vec![1.0]),
            TrigPoly::new(
                1,
                2,
                vec![
                    TrigTerm { wave: vec![1], harmonic: Harmonic::Cos, coeff: vec![0.5, 0.0] },
                    TrigTerm { wave: vec![1], harmonic: Harmonic::Sin, coeff: vec![0.0, 0.5] },
                ],
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn run(m: &SystemModel, x: Vec<f64>, t: f64) -> Trajectory {
        integrate(m, &BaseFlow::circle(), &BasePoint::origin(1), &State::new(x), t, &IntegratorConfig::default()).unwrap()
    }

    #[test]
    fn pure_decay_respects_envelope() {
        let m = scalar(TrigPoly::zero(1, 1));
        let rep = check_dissipativity_envelope(&run(&m, vec![2.0], 3.0), &m, 1e-9);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn from_rest_stays_in_absorbing_ball() {
        let m = scalar(cos_t());
        assert_eq!(m.r0(), 1.0);
        let rep = check_dissipativity_envelope(&run(&m, vec![0.0], 20.0), &m, 1e-6);
        assert!(rep.passed);
        let late = rep.margins.iter().filter(|m| m.0 > 10.0).map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        // sup of the bounded solution is 1/√2
        assert!(late < 1.0 / 2f64.sqrt() - 1.0 + 1e-3);
    }

    #[test]
    fn envelope_at_time_zero() {
        let m = toy();
        assert_eq!(dissipativity_envelope(&m, 2.0 * m.r0(), 0.0), 2.0 * m.r0());
    }

    #[test]
    fn absorbing_ball_examples() {
        let flow = BaseFlow::circle();
        let omegas: Vec<BasePoint> = (0..3).map(|k| BasePoint::new(vec![2.0 * k as f64]).unwrap()).collect();
        let unforced = scalar(TrigPoly::zero(1, 1));
        let rep = check_absorbing_ball(&unforced, &flow, &omegas, &[State::new(vec![1.0])], 20.0, 1e-6, &IntegratorConfig::default()).unwrap();
        assert!(rep.passed);

        let m = toy();
        let xs = vec![State::new(vec![5.0 * m.r0(), 0.0]), State::new(vec![0.0, -5.0 * m.r0()])];
        let rep = check_absorbing_ball(&m, &flow, &omegas, &xs, 20.0, 1e-6, &IntegratorConfig::default()).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(check_absorbing_ball(&m, &flow, &omegas, &xs, 2.0, 1e-6, &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn absorbing_ball_is_monotone_in_horizon() {
        let m = toy();
        let omegas = vec![BasePoint::new(vec![1.0]).unwrap()];
        let xs = vec![State::new(vec![2.0, 0.5])];
        let cfg = IntegratorConfig::default();
        let a = check_absorbing_ball(&m, &BaseFlow::circle(), &omegas, &xs, 15.0, 1e-4, &cfg).unwrap();
        let b = check_absorbing_ball(&m, &BaseFlow::circle(), &omegas, &xs, 30.0, 1e-4, &cfg).unwrap();
        assert!(b.max_violation <= a.max_violation + 1e-12);
    }

    #[test]
    fn time_average_examples() {
        let unforced = scalar(TrigPoly::zero(1, 1));
        let rep = check_time_average(&run(&unforced, vec![0.0], 2.0), &unforced, 1.0, 0.0, 0.0).unwrap();
        assert!(rep.passed && rep.max_violation <= 0.0);

        // start on the bounded solution (cos t + sin t)/2
        let m = scalar(cos_t());
        let tr = run(&m, vec![0.5], 2.0 * std::f64::consts::PI);
        let l = std::f64::consts::PI;
        for (t0, v) in window_integrals(&tr, l) {
            // (cos+sin)²/4 = (1 + sin 2t)/4
            let closed = l / 4.0 - ((2.0 * (t0 + l)).cos() - (2.0 * t0).cos()) / 8.0;
            assert!((v - closed).abs() < 1e-6, "{t0}: {v} vs {closed}");
        }
        let rep = check_time_average(&tr, &m, 1.0, m.r0(), 1e-9).unwrap();
        assert!(rep.passed);
    }

    #[test]
    fn constant_norm_window() {
        // |φ| ≡ r₀ gives r₀² l, below the bound when r = r₀
        let m = toy();
        let r0 = m.r0();
        let l = 1.0;
        assert!(r0 * r0 * l <= time_average_bound(&m, l, r0));
    }

    #[test]
    fn window_integrals_off_grid() {
        let m = scalar(TrigPoly::constant(1, vec![1.0]));
        let tr = run(&m, vec![1.0], 1.0);
        let w = window_integrals(&tr, 0.33335);
        assert!((w[0].1 - 0.33335).abs() < 1e-9);
    }

    #[test]
    fn contraction_examples() {
        let lin = scalar(cos_t());
        let flow = BaseFlow::circle();
        let om = BasePoint::origin(1);
        let cfg = IntegratorConfig::default();
        let c = measure_contraction(&lin, &flow, &om, &State::new(vec![1.0]), &State::new(vec![-0.5]), 10.0, 1e-9, &cfg).unwrap();
        assert!((c.slope.unwrap() + 1.0).abs() < 1e-3);
        assert!(c.envelope.passed);

        let same = measure_contraction(&lin, &flow, &om, &State::new(vec![0.3]), &State::new(vec![0.3]), 5.0, 0.0, &cfg).unwrap();
        assert!(same.distances.iter().all(|&(_, d)| d == 0.0));
        assert!(same.slope.is_none());

        let m = toy();
        assert!((m.smallness() - 0.5).abs() < 1e-4);
        let c = measure_contraction(&m, &flow, &om, &State::new(vec![0.4, 0.1]), &State::new(vec![-0.2, -0.3]), 10.0, 1e-6, &cfg).unwrap();
        assert!(c.slope.unwrap() <= -c.guaranteed_rate + 0.05);
        assert!(c.envelope.passed, "{:?}", c.envelope.max_violation);
    }

    #[test]
    fn contraction_requires_smallness() {
        let m = toy().with_forcing_scaled(3.0).unwrap();
        let err = measure_contraction(&m, &BaseFlow::circle(), &BasePoint::origin(1), &State::zeros(2), &State::zeros(2), 1.0, 0.0, &IntegratorConfig::default());
        assert!(matches!(err, Err(Error::Smallness { .. })));
    }

    #[test]
    fn da_norm_at_equilibrium_equals_forcing() {
        let m = SystemModel::linear(vec![2.0, 3.0], TrigPoly::constant(1, vec![1.0, -1.5])).unwrap();
        let tr = run(&m, vec![0.5, -0.5], 1.0);
        let last = da_norms(&tr, &m);
        assert!((last[0].1 - (1.0f64 + 2.25).sqrt()).abs() < 1e-12);
        let rep = check_da_bound(&tr, &m, 0.5, 1e-12);
        assert!(rep.passed);
    }

    #[test]
    fn report_csv() {
        let r = BoundReport::from_margins("x", 0.1, vec![(0.0, -1.0), (1.0, 0.05)]);
        assert!(r.passed);
        assert_eq!(r.csv_row(), "x,1.000000e-1,5.000000e-2,true");
    }
}
