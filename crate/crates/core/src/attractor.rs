//! Pullback attractors, the bounded section `γ`, and recurrence diagnostics.

use std::io::Write;

use rayon::prelude::*;

use crate::base_flow::{BaseFlow, BasePoint, TorusGrid};
use crate::bounds::{log_slope, BoundReport};
use crate::error::{Error, Result};
use crate::integrator::{integrate, integrate_final, IntegratorConfig};
use crate::system::{State, SystemModel};

/// Finite clouds approximating the fibres `I_ω` of the pullback attractor.
#[derive(Clone, Debug, PartialEq)]
pub struct AttractorEstimate {
    pub base_points: Vec<BasePoint>,
    pub clouds: Vec<Vec<State>>,
    pub pullback_t: f64,
    pub seed_radius: f64,
}

impl AttractorEstimate {
    /// All cloud states, the estimate of the global set `I`.
    pub fn union(&self) -> Vec<State> {
        self.clouds.iter().flatten().cloned().collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.clouds
            .iter()
            .flatten()
            .map(State::norm)
            .fold(0.0, f64::max)
    }

    pub fn diameters(&self) -> Vec<f64> {
        self.clouds.iter().map(|c| diameter(c)).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.base_points.first().map_or(0, BasePoint::dim);
        let n = self.clouds.iter().flatten().next().map_or(0, State::len);
        let mut header: Vec<String> = (0..d).map(|i| format!("omega_{i}")).collect();
        header.push("member".into());
        header.extend((0..n).map(|i| format!("coeff_{i}")));
        header.push("norm".into());
        writeln!(w, "{}", header.join(","))?;
        for (om, cloud) in self.base_points.iter().zip(&self.clouds) {
            for (k, s) in cloud.iter().enumerate() {
                let mut row: Vec<String> = om.phases().iter().map(|p| format!("{p:.9e}")).collect();
                row.push(k.to_string());
                row.extend(s.as_slice().iter().map(|c| format!("{c:.12e}")));
                row.push(format!("{:.12e}", s.norm()));
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

pub fn diameter(set: &[State]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in set.iter().enumerate() {
        for b in &set[i + 1..] {
            d = d.max(a.distance(b));
        }
    }
    d
}

/// `sup_{a∈A} min_{b∈B} |a - b|`.
pub fn hausdorff_semidistance(a: &[State], b: &[State]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet("hausdorff_semidistance"));
    }
    Ok(a.iter()
        .map(|x| b.iter().map(|y| x.distance(y)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// Symmetric Hausdorff distance.
pub fn hausdorff_distance(a: &[State], b: &[State]) -> Result<f64> {
    Ok(hausdorff_semidistance(a, b)?.max(hausdorff_semidistance(b, a)?))
}

fn kronecker(k: usize, i: usize) -> f64 {
    // fractional parts of k·√p for distinct primes p
    const PRIMES: [f64; 16] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0];
    let p = PRIMES[i % PRIMES.len()] + (i / PRIMES.len()) as f64 * 59.0;
    ((k + 1) as f64 * p.sqrt()).fract()
}

/// Deterministic low-discrepancy sample of the closed ball `B[0, radius]`.
///
/// Member `k` has norm `radius·((k+1)/count)^{1/n}`, so the last member lies
/// on the sphere; directions come from a Kronecker sequence in the cube.
pub fn ball_samples(n: usize, radius: f64, count: usize) -> Vec<State> {
    (0..count)
        .map(|k| {
            let v: Vec<f64> = (0..n).map(|i| 2.0 * kronecker(k, i) - 1.0).collect();
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let r = radius * ((k + 1) as f64 / count as f64).powf(1.0 / n as f64);
            if len == 0.0 {
                State::zeros(n)
            } else {
                State::new(v.into_iter().map(|x| x * r / len).collect())
            }
        })
        .collect()
}

/// Clouds `{ φ(T, xᵢ, σ(-T, ω)) }` over a ball sample, for each grid `ω`.
#[allow(clippy::too_many_arguments)]
pub fn pullback_estimate(
    model: &SystemModel,
    flow: &BaseFlow,
    omega_grid: &[BasePoint],
    seed_radius: f64,
    pullback_t: f64,
    cloud_size: usize,
    cfg: &IntegratorConfig,
) -> Result<AttractorEstimate> {
    if !(pullback_t > 0.0) {
        return Err(Error::Precondition(format!("pullback time must be positive, got {pullback_t}")));
    }
    if seed_radius < model.r0() * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "seed radius {seed_radius} is below the absorbing radius {}",
            model.r0()
        )));
    }
    if cloud_size == 0 || omega_grid.is_empty() {
        return Err(Error::EmptySet("pullback_estimate"));
    }
    let seeds = ball_samples(model.dim(), seed_radius, cloud_size);
    let clouds = pull_back(model, flow, omega_grid, &seeds, pullback_t, cfg)?;
    Ok(AttractorEstimate {
        base_points: omega_grid.to_vec(),
        clouds,
        pullback_t,
        seed_radius,
    })
}

fn pull_back(
    model: &SystemModel,
    flow: &BaseFlow,
    omega_grid: &[BasePoint],
    seeds: &[State],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<State>>> {
    let jobs: Vec<(usize, usize)> = (0..omega_grid.len())
        .flat_map(|i| (0..seeds.len()).map(move |k| (i, k)))
        .collect();
    let finals: Vec<State> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let start = flow.advance(&omega_grid[i], -t);
            integrate_final(model, flow, &start, &seeds[k], t, cfg)
        })
        .collect::<Result<_>>()?;
    Ok(finals.chunks(seeds.len()).map(<[State]>::to_vec).collect())
}

/// Doubles the pullback time until every cloud moves by at most
/// `shrink_tol` in Hausdorff distance. Returns the estimate and the movement
/// recorded at each doubling.
#[allow(clippy::too_many_arguments)]
pub fn pullback_until_converged(
    model: &SystemModel,
    flow: &BaseFlow,
    omega_grid: &[BasePoint],
    seed_radius: f64,
    initial_t: f64,
    cloud_size: usize,
    shrink_tol: f64,
    max_doublings: usize,
    cfg: &IntegratorConfig,
) -> Result<(AttractorEstimate, Vec<f64>)> {
    let mut est = pullback_estimate(model, flow, omega_grid, seed_radius, initial_t, cloud_size, cfg)?;
    let mut moves = Vec::new();
    for _ in 0..max_doublings {
        let next = pullback_estimate(model, flow, omega_grid, seed_radius, 2.0 * est.pullback_t, cloud_size, cfg)?;
        let mut shift: f64 = 0.0;
        for (a, b) in est.clouds.iter().zip(&next.clouds) {
            shift = shift.max(hausdorff_distance(a, b)?);
        }
        moves.push(shift);
        est = next;
        if shift <= shrink_tol {
            return Ok((est, moves));
        }
    }
    Err(Error::IterationLimit {
        iterations: max_doublings,
        residual: moves.last().copied().unwrap_or(f64::NAN),
    })
}

/// `max_ω β(φ(t, cloud(ω), ω), cloud(σ(t, ω)))`, where the clouds at the
/// shifted base points are pulled back with the same time and seeds.
pub fn invariance_residual(model: &SystemModel, flow: &BaseFlow, est: &AttractorEstimate, t: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let n = est.clouds.first().map_or(0, Vec::len);
    let shifted_grid: Vec<BasePoint> = est.base_points.iter().map(|om| flow.advance(om, t)).collect();
    let seeds = ball_samples(model.dim(), est.seed_radius, n);
    let targets = pull_back(model, flow, &shifted_grid, &seeds, est.pullback_t, cfg)?;
    let advanced: Vec<Vec<State>> = est
        .base_points
        .par_iter()
        .zip(&est.clouds)
        .map(|(om, cloud)| cloud.iter().map(|x| integrate_final(model, flow, om, x, t, cfg)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for (a, b) in advanced.iter().zip(&targets) {
        worst = worst.max(hausdorff_semidistance(a, b)?);
    }
    Ok(worst)
}

/// `β(φ(T, sample of B[0,R], σ(-T,ω)), cloud(ω))` maximised over the grid,
/// for each `T` in `times`.
pub fn attraction_profile(
    model: &SystemModel,
    flow: &BaseFlow,
    est: &AttractorEstimate,
    radius: f64,
    times: &[f64],
    count: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, f64)>> {
    let seeds = ball_samples(model.dim(), radius, count);
    times
        .iter()
        .map(|&t| {
            let clouds = pull_back(model, flow, &est.base_points, &seeds, t, cfg)?;
            let mut worst: f64 = 0.0;
            for (a, b) in clouds.iter().zip(&est.clouds) {
                worst = worst.max(hausdorff_semidistance(a, b)?);
            }
            Ok((t, worst))
        })
        .collect()
}

/// Tabulated bounded section `γ` on a torus grid.
#[derive(Clone, Debug)]
pub struct GammaSection {
    pub grid: TorusGrid,
    pub table: Vec<State>,
    /// Sup-change of the final sweep.
    pub iteration_residual: f64,
    pub sweep_distances: Vec<f64>,
    pub t_step: f64,
}

/// Periodic cubic Lagrange weights for the four nodes `i-1 … i+2`.
fn cubic_weights(f: f64) -> [f64; 4] {
    [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ]
}

fn interpolate(grid: &TorusGrid, table: &[State], omega: &BasePoint) -> State {
    let m = grid.per_dim();
    let h = grid.spacing();
    let dim = grid.dim();
    let n = table[0].len();
    let mut stencil: Vec<([usize; 4], [f64; 4])> = Vec::with_capacity(dim);
    for &p in omega.phases() {
        let s = p / h;
        let i = s.floor();
        let w = cubic_weights(s - i);
        let i = i as i64;
        let idx = [-1, 0, 1, 2].map(|o| (i + o).rem_euclid(m as i64) as usize);
        stencil.push((idx, w));
    }
    let mut out = vec![0.0; n];
    let mut multi = vec![0usize; dim];
    for combo in 0..4usize.pow(dim as u32) {
        let mut weight = 1.0;
        let mut c = combo;
        for (d, (idx, w)) in stencil.iter().enumerate() {
            multi[d] = idx[c % 4];
            weight *= w[c % 4];
            c /= 4;
        }
        for (o, v) in out.iter_mut().zip(table[grid.flat_index(&multi)].as_slice()) {
            *o += weight * v;
        }
    }
    State::new(out)
}

impl GammaSection {
    /// `γ(ω)` by periodic cubic interpolation of the table.
    pub fn eval(&self, omega: &BasePoint) -> State {
        interpolate(&self.grid, &self.table, omega)
    }

    pub fn max_norm(&self) -> f64 {
        self.table.iter().map(State::norm).fold(0.0, f64::max)
    }

    /// Successive sweep-distance ratios.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.sweep_distances
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }

    /// `max_ω |γ(σ(t,ω)) - φ(t, γ(ω), ω)|` over the grid.
    pub fn section_residual(&self, model: &SystemModel, flow: &BaseFlow, t: f64, cfg: &IntegratorConfig) -> Result<f64> {
        let res: Vec<f64> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let om = self.grid.point(i);
                let moved = integrate_final(model, flow, &om, &self.table[i], t, cfg)?;
                Ok(moved.distance(&self.eval(&flow.advance(&om, t))))
            })
            .collect::<Result<_>>()?;
        Ok(res.into_iter().fold(0.0, f64::max))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.dim();
        let n = self.table.first().map_or(0, State::len);
        let mut header: Vec<String> = (0..d).map(|i| format!("omega_{i}")).collect();
        header.extend((0..n).map(|i| format!("coeff_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (i, s) in self.table.iter().enumerate() {
            let mut row: Vec<String> = self.grid.point(i).phases().iter().map(|p| format!("{p:.9e}")).collect();
            row.extend(s.as_slice().iter().map(|c| format!("{c:.12e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Fixed point of `(Sᵗν)(ω) = φ(t, ν(σ(-t,ω)), σ(-t,ω))` on the grid.
///
/// Each sweep reads only the previous sweep's table.
pub fn gamma_fixed_point(
    model: &SystemModel,
    flow: &BaseFlow,
    grid: &TorusGrid,
    t_step: f64,
    max_sweeps: usize,
    tol: f64,
    cfg: &IntegratorConfig,
) -> Result<GammaSection> {
    model.require_smallness()?;
    if grid.dim() != flow.dim() {
        return Err(Error::DimensionMismatch {
            expected: flow.dim(),
            found: grid.dim(),
        });
    }
    if grid.per_dim() < 4 {
        return Err(Error::Range {
            key: "gamma.grid".into(),
            reason: "cubic interpolation needs at least 4 points per dimension".into(),
        });
    }
    let points = grid.points();
    let mut table = vec![State::zeros(model.dim()); grid.len()];
    let mut distances = Vec::new();
    for _ in 0..max_sweeps {
        let next: Vec<State> = points
            .par_iter()
            .map(|om| {
                let back = flow.advance(om, -t_step);
                let start = interpolate(grid, &table, &back);
                integrate_final(model, flow, &back, &start, t_step, cfg)
            })
            .collect::<Result<_>>()?;
        let change = next
            .iter()
            .zip(&table)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max);
        table = next;
        distances.push(change);
        if change <= tol {
            return Ok(GammaSection {
                grid: grid.clone(),
                table,
                iteration_residual: change,
                sweep_distances: distances,
                t_step,
            });
        }
    }
    Err(Error::IterationLimit {
        iterations: max_sweeps,
        residual: distances.last().copied().unwrap_or(f64::NAN),
    })
}

/// `∫_{-cutoff}^0 e^{Aτ} f(σ(τ,ω)) dτ` by the trapezoid rule, the bounded
/// solution of a linear system.
pub fn gamma_linear_oracle(model: &SystemModel, flow: &BaseFlow, omega: &BasePoint, cutoff: f64, dt: f64) -> Result<State> {
    if !model.bilinear().is_zero() {
        return Err(Error::NotLinear);
    }
    if !(cutoff > 0.0 && dt > 0.0) {
        return Err(Error::Precondition("cutoff and dt must be positive".into()));
    }
    let steps = (cutoff / dt).ceil() as usize;
    let h = cutoff / steps as f64;
    let eig = model.eigenvalues();
    let mut acc = vec![0.0; model.dim()];
    for j in 0..=steps {
        let tau = -(j as f64) * h;
        let w = if j == 0 || j == steps { 0.5 * h } else { h };
        let f = model.forcing(&flow.advance(omega, tau));
        for ((a, fi), l) in acc.iter_mut().zip(f.as_slice()).zip(eig) {
            *a += w * (l * tau).exp() * fi;
        }
    }
    Ok(State::new(acc))
}

/// Closed-form bounded solution of a linear system at `omega`: each term
/// `a·cos(m·θ)` or `a·sin(m·θ)` of `f` contributes its steady response
/// at frequency `m·ρ` in every mode.
pub fn linear_bounded_solution(model: &SystemModel, flow: &BaseFlow, omega: &BasePoint) -> Result<State> {
    if !model.bilinear().is_zero() {
        return Err(Error::NotLinear);
    }
    let mut out = vec![0.0; model.dim()];
    for term in model.forcing_poly().terms() {
        let freq: f64 = term.wave.iter().zip(flow.frequencies()).map(|(&m, r)| m as f64 * r).sum();
        let phase: f64 = term.wave.iter().zip(omega.phases()).map(|(&m, p)| m as f64 * p).sum();
        let (c, s) = (phase.cos(), phase.sin());
        for ((o, a), l) in out.iter_mut().zip(&term.coeff).zip(model.eigenvalues()) {
            let den = l * l + freq * freq;
            *o += match term.harmonic {
                crate::system::trig::Harmonic::Cos => a * (l * c + freq * s) / den,
                crate::system::trig::Harmonic::Sin => a * (l * s - freq * c) / den,
            };
        }
    }
    Ok(State::new(out))
}

/// Tracking of `γ` by a trajectory.
#[derive(Clone, Debug)]
pub struct TrackingReport {
    pub report: BoundReport,
    /// Log-distance slope over the second half of the horizon.
    pub slope: Option<f64>,
    pub distances: Vec<(f64, f64)>,
}

/// `|φ(t,x,ω) - γ(ωt)| ≤ e^{-(α - C_B‖f‖/α)t}|x - γ(ω)| + tol` on the grid.
#[allow(clippy::too_many_arguments)]
pub fn exponential_tracking(
    model: &SystemModel,
    flow: &BaseFlow,
    omega: &BasePoint,
    x: &State,
    gamma: &GammaSection,
    horizon: f64,
    tol: f64,
    cfg: &IntegratorConfig,
) -> Result<TrackingReport> {
    model.require_smallness()?;
    let tr = integrate(model, flow, omega, x, horizon, cfg)?;
    let rate = model.contraction_rate();
    let d0 = x.distance(&gamma.eval(omega));
    let distances: Vec<(f64, f64)> = tr
        .times
        .iter()
        .zip(&tr.states)
        .map(|(&t, s)| (t, s.distance(&gamma.eval(&flow.advance(omega, t)))))
        .collect();
    let margins = distances
        .iter()
        .map(|&(t, d)| (t, d - (-rate * t).exp() * d0))
        .collect();
    Ok(TrackingReport {
        report: BoundReport::from_margins("exponential_tracking", tol, margins),
        slope: log_slope(&distances, horizon / 2.0),
        distances,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlmostPeriodScan {
    /// Detected shifts `τ` in increasing order.
    pub periods: Vec<f64>,
    /// Largest gap between consecutive detected shifts (the first gap is
    /// measured from 0); `None` when nothing was detected.
    pub max_gap: Option<f64>,
    /// Length of the comparison window shared by all shifts.
    pub window: f64,
}

/// ε-almost periods of a uniformly sampled series: grid shifts `τ ≤
/// search_length` with `sup_t |s(t+τ) - s(t)| < epsilon` over a common
/// window.
pub fn almost_period_scan(series: &[State], dt: f64, epsilon: f64, search_length: f64) -> Result<AlmostPeriodScan> {
    if !(epsilon > 0.0 && dt > 0.0) {
        return Err(Error::Precondition("epsilon and dt must be positive".into()));
    }
    let max_shift = ((search_length / dt) + 1e-9).floor() as usize;
    if series.len() <= max_shift + 1 {
        return Err(Error::Precondition(format!(
            "series of {} samples is too short for shifts up to {search_length}",
            series.len()
        )));
    }
    let window = series.len() - max_shift;
    let hits: Vec<bool> = (1..=max_shift)
        .into_par_iter()
        .map(|k| (0..window).all(|j| series[j + k].distance(&series[j]) < epsilon))
        .collect();
    let periods: Vec<f64> = hits
        .iter()
        .enumerate()
        .filter(|(_, &h)| h)
        .map(|(i, _)| (i + 1) as f64 * dt)
        .collect();
    let max_gap = periods.first().map(|&first| {
        periods
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(first, f64::max)
    });
    Ok(AlmostPeriodScan {
        periods,
        max_gap,
        window: (window - 1) as f64 * dt,
    })
}
