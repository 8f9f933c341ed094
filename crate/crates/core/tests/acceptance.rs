//! Acceptance criteria, one test each. Run with
//! `cargo test -p cocycle --test acceptance -- --nocapture --test-threads=1`
//! to see the PASS/FAIL line of every criterion.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cocycle::attractor::{
    gamma_fixed_point, gamma_linear_oracle, invariance_residual, linear_bounded_solution, pullback_estimate,
};
use cocycle::averaging::{attractor_semicontinuity, divergence_m_l, is_monotone, linear_difference_sup, linear_oscillation_amplitude, local_attractor_guard};
use cocycle::bounds::{check_dissipativity_envelope, check_time_average, measure_contraction, time_average_bound, window_integrals, BoundReport};
use cocycle::cli::{run_scenario, Experiment, InstanceKind, Scenario};
use cocycle::integrator::{integrate, picard_solve, IntegratorConfig, Method};
use cocycle::system::galerkin::GalerkinBasis;
use cocycle::system::trig::{Harmonic, TrigPoly, TrigTerm};
use cocycle::system::{coercivity_margin, random_unit, verify_skew, State, SystemModel};
use cocycle::{BaseFlow, BasePoint, TorusGrid};

fn verdict(criterion: u32, pass: bool, detail: &str) {
    println!("criterion {criterion:>2}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
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

fn galerkin() -> SystemModel {
    let mut s = Scenario::new(InstanceKind::Galerkin, Experiment::VerifyBounds);
    s.resolve().unwrap();
    let m = s.build_model().unwrap();
    assert_eq!(m.dim(), GalerkinBasis::new(8).unwrap().dim());
    m
}

fn galerkin_flow() -> BaseFlow {
    BaseFlow::new(vec![1.0, 2f64.sqrt()]).unwrap()
}

fn linear() -> SystemModel {
    SystemModel::linear(vec![1.0], TrigPoly::scalar(1, &[(vec![1], Harmonic::Cos, 1.0)]).unwrap()).unwrap()
}

fn phase(rng: &mut ChaCha8Rng, d: usize) -> BasePoint {
    BasePoint::new((0..d).map(|_| rng.gen_range(0.0..TAU)).collect()).unwrap()
}

#[test]
fn criterion_01_structural_hypotheses() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_skew: f64 = 0.0;
    let mut worst_coercive = f64::INFINITY;
    for (model, d) in [(toy(), 1), (galerkin(), 2)] {
        for _ in 0..10 {
            let om = phase(&mut rng, d);
            worst_skew = worst_skew.max(verify_skew(&model, &om, 100, &mut rng).unwrap());
        }
        worst_coercive = worst_coercive.min(coercivity_margin(&model, 1000, &mut rng));
    }
    let pass = worst_skew <= 1e-10 && worst_coercive >= -1e-12;
    verdict(1, pass, &format!("skew residual {worst_skew:.2e}, coercivity margin {worst_coercive:.2e}"));
    assert!(pass);
}

/// Twenty trajectories with `|x| ∈ {0, r₀, 5r₀}` at random `ω`.
fn trajectories(model: &SystemModel, flow: &BaseFlow, dt: f64, seed: u64) -> Vec<(State, cocycle::Trajectory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r0 = model.r0();
    let t_long = ((4e4f64).ln() / model.alpha()).ceil() + 1.0;
    let cfg = IntegratorConfig {
        record_every: ((0.01 / dt).round() as usize).max(1),
        ..IntegratorConfig::with_dt(dt)
    };
    let starts: Vec<(BasePoint, State)> = (0..20)
        .map(|k| {
            let om = phase(&mut rng, flow.dim());
            let x = random_unit(model.dim(), &mut rng).scaled([0.0, r0, 5.0 * r0][k % 3]);
            (om, x)
        })
        .collect();
    use rayon::prelude::*;
    starts
        .par_iter()
        .map(|(om, x)| (x.clone(), integrate(model, flow, om, x, t_long, &cfg).unwrap()))
        .collect()
}

fn dissipativity(model: &SystemModel, flow: &BaseFlow, dt: f64) -> (bool, String, bool, String) {
    let r0 = model.r0();
    let tol = 1e-4 * r0;
    let trajs = trajectories(model, flow, dt, 2);
    let env = BoundReport::merge("envelope", tol, trajs.iter().map(|(_, t)| check_dissipativity_envelope(t, model, tol)).collect());
    let ball = trajs.iter().map(|(_, t)| t.last().norm() - r0).fold(f64::NEG_INFINITY, f64::max);
    let mut avg_worst = f64::NEG_INFINITY;
    for (x, t) in &trajs {
        let r = r0.max(x.norm());
        let m = time_average_bound(model, 1.0, r);
        let rep = check_time_average(t, model, 1.0, r, 1e-4 * m).unwrap();
        avg_worst = avg_worst.max(rep.max_violation / m);
    }
    (
        env.passed && ball <= tol,
        format!("envelope excess {:.2e}, ball excess {ball:.2e} (tol {tol:.1e})", env.max_violation),
        avg_worst <= 1e-4,
        format!("window excess / M(r) {avg_worst:.2e}"),
    )
}

#[test]
fn criterion_02_03_dissipativity_and_time_average() {
    let (p2t, d2t, p3t, d3t) = dissipativity(&toy(), &BaseFlow::circle(), 1e-3);
    let (p2g, d2g, p3g, d3g) = dissipativity(&galerkin(), &galerkin_flow(), 2.5e-4);

    // linear window integral against the closed form l/4 + oscillation
    let model = linear();
    let flow = BaseFlow::circle();
    let om = BasePoint::new(vec![0.4]).unwrap();
    let x = linear_bounded_solution(&model, &flow, &om).unwrap();
    let traj = integrate(&model, &flow, &om, &x, TAU + 1.0, &IntegratorConfig::default()).unwrap();
    let closed = |a: f64| {
        let s = a + 0.4;
        0.25 + ((2.0 * s).cos() - (2.0 * (s + 1.0)).cos()) / 8.0
    };
    let oracle = window_integrals(&traj, 1.0)
        .into_iter()
        .map(|(t, v)| (v - closed(t)).abs())
        .fold(0.0, f64::max);

    let p2 = p2t && p2g;
    verdict(2, p2, &format!("toy: {d2t}; galerkin: {d2g}"));
    let p3 = p3t && p3g && oracle <= 1e-6;
    verdict(3, p3, &format!("toy {d3t}; galerkin {d3g}; linear window vs closed form {oracle:.2e}"));
    assert!(p2 && p3);
}

#[test]
fn criterion_04_local_existence() {
    let mut details = Vec::new();
    let mut pass = true;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (name, model, flow, dt) in [("toy", toy(), BaseFlow::circle(), 1e-3), ("galerkin", galerkin(), galerkin_flow(), 2.5e-4)] {
        let r0 = model.r0();
        let om = phase(&mut rng, flow.dim());
        let x0 = random_unit(model.dim(), &mut rng).scaled(r0);
        let r = r0.max(x0.norm());
        let horizon = 0.5 / (2.0 * model.c_b() * (x0.norm() + r));
        let cfg = IntegratorConfig {
            method: Method::Picard,
            picard_radius: Some(r),
            ..IntegratorConfig::with_dt(dt)
        };
        let sol = picard_solve(&model, &flow, &om, &x0, horizon, &cfg).unwrap();
        let ratio = sol.contraction_ratios().into_iter().fold(0.0, f64::max);
        let direct = integrate(&model, &flow, &om, &x0, horizon, &IntegratorConfig::with_dt(dt)).unwrap();
        let gap = sol
            .trajectory
            .states
            .iter()
            .zip(&direct.states)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max);
        let tol = (1e-10f64).max(10.0 * dt * dt * r.max(1.0));
        pass &= ratio <= sol.lipschitz + 0.05 && gap <= tol;
        details.push(format!("{name}: ratio {ratio:.2e} vs L {:.2}, gap {gap:.2e} (tol {tol:.1e})", sol.lipschitz));
    }
    verdict(4, pass, &details.join("; "));
    assert!(pass);
}

#[test]
fn criterion_05_contraction_and_section() {
    let model = toy();
    let flow = BaseFlow::circle();
    let r0 = model.r0();
    let cfg = IntegratorConfig::default();
    let small = (model.smallness() - 0.5).abs() < 1e-4;
    let om = BasePoint::new(vec![1.0]).unwrap();
    let x1 = State::new(vec![0.5 * r0, 0.0]);
    let x2 = State::new(vec![0.0, -0.7 * r0]);
    let m = measure_contraction(&model, &flow, &om, &x1, &x2, 10.0, 1e-4 * r0, &cfg).unwrap();
    let slope = m.slope.unwrap();
    let slope_ok = slope <= -model.contraction_rate() + 0.05 && m.envelope.passed;

    let grid = TorusGrid::new(1, 64).unwrap();
    let section = gamma_fixed_point(&model, &flow, &grid, 1.0, 200, 1e-10 * r0, &cfg).unwrap();
    let residual = section.section_residual(&model, &flow, 1.0, &cfg).unwrap();

    let lin = linear();
    let lsec = gamma_fixed_point(&lin, &flow, &grid, 1.0, 200, 1e-10, &cfg).unwrap();
    let mut oracle_gap: f64 = 0.0;
    let mut closed_gap: f64 = 0.0;
    for (i, p) in grid.points().iter().enumerate() {
        let o = gamma_linear_oracle(&lin, &flow, p, 40.0, 1e-3).unwrap();
        let th = p.phases()[0];
        let closed = State::new(vec![(th.cos() + th.sin()) / 2.0]);
        oracle_gap = oracle_gap.max(lsec.table[i].distance(&o));
        closed_gap = closed_gap.max(lsec.table[i].distance(&closed));
    }
    let pass = small && slope_ok && residual <= 1e-4 * r0 && oracle_gap <= 1e-4 && closed_gap <= 1e-4;
    verdict(
        5,
        pass,
        &format!(
            "smallness {:.6}, slope {slope:.3} vs -{:.3}, section residual {residual:.2e}, linear vs oracle {oracle_gap:.2e}, vs closed form {closed_gap:.2e}",
            model.smallness(),
            model.contraction_rate()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_attractor() {
    let model = toy();
    let flow = BaseFlow::circle();
    let r0 = model.r0();
    let cfg = IntegratorConfig::default();
    let grid = TorusGrid::new(1, 8).unwrap().points();
    let t = 20.0 / model.contraction_rate();
    let est = pullback_estimate(&model, &flow, &grid, r0, t, 64, &cfg).unwrap();
    let norm_excess = est.max_norm() - r0;
    let inv = invariance_residual(&model, &flow, &est, 1.0, &cfg).unwrap();
    let diam = est.diameters().into_iter().fold(0.0, f64::max);
    let pass = norm_excess <= 1e-4 * r0 && inv <= 1e-3 * r0 && diam <= 1e-3 * r0;
    verdict(6, pass, &format!("norm excess {norm_excess:.2e}, invariance {inv:.2e}, diameter {diam:.2e} at T = {t:.1}"));
    assert!(pass);
}

fn toy_averaging() -> Scenario {
    let mut s = Scenario::new(InstanceKind::Toy, Experiment::Averaging);
    s.resolve().unwrap();
    s
}

fn linear_averaging() -> Scenario {
    let mut s = Scenario::new(InstanceKind::LinearScalar, Experiment::Averaging);
    s.resolve().unwrap();
    s
}

#[test]
fn criterion_07_finite_interval_averaging() {
    // linear: v' = -v + cos(τ/ε), v(0) = 0, from ω = 0
    let lin = linear_averaging().averaging_scenario().unwrap();
    let zero = BasePoint::origin(1);
    let curve = divergence_m_l(&lin, std::slice::from_ref(&zero), &[State::zeros(1)]).unwrap();
    let mut literal = Vec::new();
    let mut literal_ok = true;
    let mut exact_worst: f64 = 0.0;
    for (eps, m) in curve.epsilons.iter().zip(&curve.values) {
        let samples = (lin.horizon() / lin.slow_config(*eps).dt).round() as usize;
        let exact = linear_difference_sup(1.0, 1.0, *eps, 0.0, lin.horizon(), samples);
        exact_worst = exact_worst.max((m - exact).abs() / exact);
        if [0.1, 0.05, 0.025].iter().any(|e| (e - eps).abs() < 1e-12) {
            let target = linear_oscillation_amplitude(1.0, 1.0, *eps);
            let rel = (m - target).abs() / target;
            literal_ok &= rel <= 0.05;
            literal.push(format!("eps {eps}: {rel:.3}"));
        }
    }

    let toy = toy_averaging().averaging_scenario().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let omegas = TorusGrid::new(1, 4).unwrap().points();
    let xs = vec![
        State::zeros(2),
        random_unit(2, &mut rng).scaled(0.5 * toy.seed_radius()),
        random_unit(2, &mut rng).scaled(toy.seed_radius()),
    ];
    let tc = divergence_m_l(&toy, &omegas, &xs).unwrap();
    let ratio = tc.decay_ratio();
    let toy_ok = tc.is_monotone(0.1) && ratio <= 0.25;

    let pass = literal_ok && toy_ok;
    verdict(
        7,
        pass,
        &format!(
            "linear |m_L - eps/sqrt(1+eps^2)| relative [{}] (tol 0.05); linear vs exact transient sup {exact_worst:.1e}; toy monotone {} decay {ratio:.3}",
            literal.join(", "),
            tc.is_monotone(0.1)
        ),
    );
    assert!(toy_ok, "toy averaging failed");
    assert!(literal_ok, "linear m_L deviates from eps/sqrt(1+eps^2) by more than 5%: {literal:?}");
}

#[test]
fn criterion_08_global_averaging() {
    let s = linear_averaging();
    let lin = s.averaging_scenario().unwrap();
    let grid = TorusGrid::new(1, 16).unwrap().points();
    let t = s.averaging.pullback_t.unwrap();
    let rows = attractor_semicontinuity(&lin, &grid, t, 2).unwrap();
    let global: Vec<f64> = rows.iter().map(|r| r.beta_global).collect();
    let fiber: Vec<f64> = rows.iter().map(|r| r.beta_fiber_sup.unwrap()).collect();
    let amp = rows
        .iter()
        .map(|r| (r.beta_global - linear_oscillation_amplitude(1.0, 1.0, r.epsilon)).abs() / linear_oscillation_amplitude(1.0, 1.0, r.epsilon))
        .fold(0.0, f64::max);

    let ts = toy_averaging();
    let toy = ts.averaging_scenario().unwrap();
    let tgrid = TorusGrid::new(1, ts.averaging.semicontinuity_grid.unwrap()).unwrap().points();
    let trows = attractor_semicontinuity(&toy, &tgrid, ts.averaging.pullback_t.unwrap(), 2).unwrap();
    let tglobal: Vec<f64> = trows.iter().map(|r| r.beta_global).collect();

    let pass = is_monotone(&global, 0.1) && is_monotone(&fiber, 0.1) && amp <= 0.1 && is_monotone(&tglobal, 0.1);
    verdict(
        8,
        pass,
        &format!("linear beta [{}], relative to amplitude {amp:.3}; fiber sup [{}]; toy beta [{}]", sci(&global), sci(&fiber), sci(&tglobal)),
    );
    assert!(pass);
}

#[test]
fn criterion_09_guard_regression() {
    let r = local_attractor_guard(0.01, 5.0, 15.0, 20.0, 1e-6, &IntegratorConfig::default()).unwrap();
    verdict(
        9,
        r.reproduced(),
        &format!(
            "threshold {:.1}; from 15 diverged at t = {:?}; from 5 reached {:.1e}",
            r.threshold, r.divergence_time, r.inside_final
        ),
    );
    assert!(r.reproduced());
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut summaries = Vec::new();
    for (k, threads) in [1usize, 3].into_iter().enumerate() {
        let mut s = Scenario::new(InstanceKind::LinearScalar, Experiment::FullSuite);
        s.seed = Some(11);
        s.output_dir = Some(dir.path().join(format!("run{k}")));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let outcome = pool.install(|| run_scenario(&s)).unwrap();
        assert_eq!(outcome.exit_code, 0, "{:?}", outcome.failed());
        summaries.push(std::fs::read(outcome.out_dir.join("summary.csv")).unwrap());
    }
    let pass = summaries[0] == summaries[1];
    verdict(10, pass, &format!("summary.csv {} bytes, identical across 1 and 3 threads: {pass}", summaries[0].len()));
    assert!(pass);
}
