//! Scenario files: TOML with one table per concern.
//!
//! Every optional key has an instance-dependent default. [`Scenario::resolve`]
//! fills them in, and the resolved scenario serialises back to a file that
//! parses to the identical run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::averaging::{validate_epsilons, AveragingScenario, CubicModel};
use crate::base_flow::BaseFlow;
use crate::error::{Error, Result};
use crate::integrator::{IntegratorConfig, Method};
use crate::system::galerkin::{GalerkinBasis, ModePart};
use crate::system::trig::{Harmonic, TrigPoly, TrigTerm};
use crate::system::{BilinearDecomposition, ForcingDecomposition, SystemModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    Toy,
    Galerkin,
    LinearScalar,
    CubicRegression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifyBounds,
    Pullback,
    Gamma,
    Averaging,
    Semicontinuity,
    FullSuite,
}

/// One trigonometric term. Scalar polynomials use `amplitude`; the toy
/// forcing uses `coeff`; Galerkin forcing places `amplitude` on the basis
/// function given by `mode` and `part`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub wave: Vec<i64>,
    pub harmonic: Harmonic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<[i64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<ModePart>,
}

impl TermSpec {
    fn scalar(wave: Vec<i64>, harmonic: Harmonic, amplitude: f64) -> Self {
        Self {
            wave,
            harmonic,
            amplitude: Some(amplitude),
            coeff: None,
            mode: None,
            part: None,
        }
    }

    fn vector(wave: Vec<i64>, harmonic: Harmonic, coeff: Vec<f64>) -> Self {
        Self {
            wave,
            harmonic,
            amplitude: None,
            coeff: Some(coeff),
            mode: None,
            part: None,
        }
    }

    fn galerkin(mode: [i64; 2], part: ModePart, wave: Vec<i64>, harmonic: Harmonic, amplitude: f64) -> Self {
        Self {
            wave,
            harmonic,
            amplitude: Some(amplitude),
            coeff: None,
            mode: Some(mode),
            part: Some(part),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Vec<TermSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<Vec<TermSpec>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard_max_iter: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    /// Multiplies every asserted tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_long: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub da_split: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction_horizon: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractorSection {
    /// Base points per torus dimension for pullback clouds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pullback_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pullback_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_radius: Option<f64>,
    /// Grid points per torus dimension for the section `γ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_length: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_fast: Option<f64>,
    /// Base points per torus dimension for `m_L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pullback_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_size: Option<usize>,
    /// Base points per torus dimension for the attractor comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semicontinuity_grid: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inside: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outside: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub instance: InstanceKind,
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub base: BaseSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub attractor: AttractorSection,
    #[serde(default)]
    pub averaging: AveragingSection,
    #[serde(default)]
    pub guard: GuardSection,
}

fn range(key: &str, reason: impl Into<String>) -> Error {
    Error::Range {
        key: key.into(),
        reason: reason.into(),
    }
}

fn positive(key: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(range(key, format!("must be positive, got {x}"))),
        _ => Ok(()),
    }
}

fn at_least(key: &str, v: Option<usize>, min: usize) -> Result<()> {
    match v {
        Some(x) if x < min => Err(range(key, format!("must be at least {min}, got {x}"))),
        _ => Ok(()),
    }
}

/// Parses and validates a scenario file, without filling defaults.
pub fn parse_config(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<Scenario> {
    let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    s.validate()?;
    Ok(s)
}

impl Scenario {
    /// Minimal scenario for an instance and experiment.
    pub fn new(instance: InstanceKind, experiment: Experiment) -> Self {
        Self {
            name: None,
            instance,
            experiment,
            seed: None,
            output_dir: None,
            base: BaseSection::default(),
            model: ModelSection::default(),
            integrator: IntegratorSection::default(),
            tolerances: ToleranceSection::default(),
            bounds: BoundsSection::default(),
            attractor: AttractorSection::default(),
            averaging: AveragingSection::default(),
            guard: GuardSection::default(),
        }
    }

    /// Range checks on every key present.
    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit
        if self.seed.is_some_and(|s| s > i64::MAX as u64) {
            return Err(range("seed", format!("must not exceed {}", i64::MAX)));
        }
        if let Some(f) = &self.base.frequencies {
            if f.is_empty() || f.len() > 2 {
                return Err(range("base.frequencies", "torus dimension must be 1 or 2"));
            }
            if f.iter().any(|w| !w.is_finite() || *w == 0.0) {
                return Err(range("base.frequencies", "frequencies must be finite and nonzero"));
            }
        }
        let m = &self.model;
        if let Some(e) = &m.eigenvalues {
            if e.is_empty() || e.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                return Err(range("model.eigenvalues", "eigenvalues must be positive"));
            }
            let expected = match self.instance {
                InstanceKind::Toy => Some(2),
                InstanceKind::LinearScalar => Some(1),
                _ => None,
            };
            if expected.is_some_and(|n| n != e.len()) {
                return Err(range("model.eigenvalues", format!("expected {} values", expected.unwrap_or(0))));
            }
        }
        positive("model.nu", m.nu)?;
        at_least("model.truncation", m.truncation, 1)?;
        if let Some(l) = m.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(range("model.lambda", format!("must be nonnegative, got {l}")));
            }
        }
        let i = &self.integrator;
        positive("integrator.dt", i.dt)?;
        positive("integrator.picard_tol", i.picard_tol)?;
        at_least("integrator.picard_max_iter", i.picard_max_iter, 1)?;
        if let Some(s) = self.tolerances.scale {
            if !(s.is_finite() && s >= 0.0) {
                return Err(range("tolerances.scale", format!("must be nonnegative, got {s}")));
            }
        }
        let b = &self.bounds;
        at_least("bounds.trajectories", b.trajectories, 1)?;
        positive("bounds.t_long", b.t_long)?;
        positive("bounds.window", b.window)?;
        positive("bounds.da_split", b.da_split)?;
        positive("bounds.contraction_horizon", b.contraction_horizon)?;
        let a = &self.attractor;
        at_least("attractor.pullback_grid", a.pullback_grid, 1)?;
        at_least("attractor.cloud_size", a.cloud_size, 1)?;
        positive("attractor.pullback_t", a.pullback_t)?;
        positive("attractor.seed_radius", a.seed_radius)?;
        at_least("attractor.gamma_grid", a.gamma_grid, 4)?;
        positive("attractor.t_step", a.t_step)?;
        at_least("attractor.max_sweeps", a.max_sweeps, 1)?;
        positive("attractor.sweep_tol", a.sweep_tol)?;
        positive("attractor.scan_epsilon", a.scan_epsilon)?;
        positive("attractor.scan_length", a.scan_length)?;
        let v = &self.averaging;
        if let Some(e) = &v.epsilons {
            validate_epsilons(e)?;
        }
        positive("averaging.horizon", v.horizon)?;
        positive("averaging.seed_radius", v.seed_radius)?;
        positive("averaging.dt_fast", v.dt_fast)?;
        at_least("averaging.omega_grid", v.omega_grid, 1)?;
        at_least("averaging.x_grid", v.x_grid, 1)?;
        if let Some(s) = v.slack {
            if !(s.is_finite() && s >= 0.0) {
                return Err(range("averaging.slack", format!("must be nonnegative, got {s}")));
            }
        }
        positive("averaging.decay_target", v.decay_target)?;
        positive("averaging.k_tol", v.k_tol)?;
        positive("averaging.k_t_max", v.k_t_max)?;
        positive("averaging.pullback_t", v.pullback_t)?;
        at_least("averaging.cloud_size", v.cloud_size, 1)?;
        at_least("averaging.semicontinuity_grid", v.semicontinuity_grid, 1)?;
        positive("guard.horizon", self.guard.horizon)?;
        Ok(())
    }

    /// Fill every unset key with its default. Idempotent.
    pub fn resolve(&mut self) -> Result<()> {
        self.validate()?;
        let kind = self.instance;
        self.name.get_or_insert_with(|| format!("{kind:?}").to_lowercase());
        self.seed.get_or_insert(1);
        self.output_dir.get_or_insert_with(|| PathBuf::from("out"));
        self.tolerances.scale.get_or_insert(1.0);

        let freqs = self.base.frequencies.get_or_insert_with(|| match kind {
            InstanceKind::Galerkin => vec![1.0, 2f64.sqrt()],
            _ => vec![1.0],
        });
        let d = freqs.len();
        let zero = vec![0i64; d];
        let unit = |i: usize| {
            let mut w = vec![0i64; d];
            w[i] = 1;
            w
        };

        let m = &mut self.model;
        match kind {
            InstanceKind::Toy => {
                m.eigenvalues.get_or_insert_with(|| vec![1.0, 1.5]);
                m.coupling.get_or_insert_with(|| vec![TermSpec::scalar(zero.clone(), Harmonic::Cos, 1.0)]);
                m.forcing.get_or_insert_with(|| {
                    vec![
                        TermSpec::vector(unit(0), Harmonic::Cos, vec![0.5, 0.0]),
                        TermSpec::vector(unit(0), Harmonic::Sin, vec![0.0, 0.5]),
                    ]
                });
            }
            InstanceKind::LinearScalar => {
                m.eigenvalues.get_or_insert_with(|| vec![1.0]);
                m.forcing.get_or_insert_with(|| vec![TermSpec::scalar(unit(0), Harmonic::Cos, 1.0)]);
            }
            InstanceKind::Galerkin => {
                m.nu.get_or_insert(1.0);
                m.truncation.get_or_insert(8);
                m.coupling.get_or_insert_with(|| vec![TermSpec::scalar(zero.clone(), Harmonic::Cos, 1.0)]);
                m.forcing.get_or_insert_with(|| {
                    let second = if d > 1 { unit(1) } else { unit(0) };
                    vec![
                        TermSpec::galerkin([1, 0], ModePart::Cos, unit(0), Harmonic::Cos, 0.1),
                        TermSpec::galerkin([1, 1], ModePart::Sin, second, Harmonic::Sin, 0.1),
                        TermSpec::galerkin([0, 1], ModePart::Cos, zero.clone(), Harmonic::Cos, 0.05),
                    ]
                });
            }
            InstanceKind::CubicRegression => {
                m.lambda.get_or_insert(0.01);
            }
        }

        let i = &mut self.integrator;
        i.dt.get_or_insert(if kind == InstanceKind::Galerkin { 2.5e-4 } else { 1e-3 });
        i.method.get_or_insert(Method::ExponentialRk2);
        i.picard_tol.get_or_insert(1e-10);
        i.picard_max_iter.get_or_insert(200);
        let dt = i.dt.unwrap_or(1e-3);

        if kind == InstanceKind::CubicRegression {
            let g = &mut self.guard;
            g.inside.get_or_insert(5.0);
            g.outside.get_or_insert(15.0);
            g.horizon.get_or_insert(20.0);
            return Ok(());
        }

        let model = self.build_model()?;
        let alpha = model.alpha();
        let small = model.smallness() < 1.0;
        let rate = if small { model.contraction_rate() } else { alpha };
        let r0 = model.r0();

        let b = &mut self.bounds;
        b.trajectories.get_or_insert(20);
        // envelope excess from |x| = 5 r₀ below 1e-4 r₀
        b.t_long.get_or_insert(((4e4f64).ln() / alpha).ceil() + 1.0);
        b.window.get_or_insert(1.0);
        b.da_split.get_or_insert(5.0 / alpha);
        b.contraction_horizon.get_or_insert(10.0);

        let galerkin = kind == InstanceKind::Galerkin;
        let a = &mut self.attractor;
        a.pullback_grid.get_or_insert(match (galerkin, d) {
            (true, _) => 2,
            (false, 1) => 8,
            _ => 4,
        });
        a.cloud_size.get_or_insert(if galerkin { 4 } else { 64 });
        a.pullback_t.get_or_insert(if small { 20.0 / rate } else { 10.0 / alpha });
        a.seed_radius.get_or_insert(if r0 > 0.0 { r0 } else { 1.0 });
        a.gamma_grid.get_or_insert(if d == 1 { 64 } else { 32 });
        a.t_step.get_or_insert(1.0);
        a.max_sweeps.get_or_insert(200);
        a.sweep_tol.get_or_insert(1e-10 * r0.max(1e-3));
        // shift-grid error is about |γ'|·Δt/2, well under 1e-2·r₀ at Δt = 5e-3
        a.scan_epsilon.get_or_insert(if d == 1 { 1e-2 } else { 0.1 } * r0.max(1e-3));
        a.scan_length.get_or_insert(if d == 1 { 3.0 * std::f64::consts::TAU / self.base.frequencies.as_ref().map_or(1.0, |f| f[0].abs()) + 0.5 } else { 500.0 });

        let f1_sup = model.forcing_poly().oscillatory().sup_norm();
        let v = &mut self.averaging;
        v.epsilons.get_or_insert_with(|| vec![0.2, 0.1, 0.05, 0.025, 0.0125]);
        v.horizon.get_or_insert(10.0);
        v.seed_radius.get_or_insert(if r0 > 0.0 { r0 } else { 1.0 });
        v.dt_fast.get_or_insert(dt);
        v.omega_grid.get_or_insert(if d == 1 { 4 } else { 2 });
        v.x_grid.get_or_insert(3);
        v.slack.get_or_insert(0.1);
        v.decay_target.get_or_insert(0.25);
        v.k_tol.get_or_insert(0.02 * f1_sup.max(1e-12));
        v.k_t_max.get_or_insert(1000.0);
        v.pullback_t.get_or_insert(12.0 / rate);
        v.cloud_size.get_or_insert(2);
        v.semicontinuity_grid.get_or_insert(if d == 1 { 8 } else { 3 });
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn tol_scale(&self) -> f64 {
        self.tolerances.scale.unwrap_or(1.0)
    }

    pub fn flow(&self) -> Result<BaseFlow> {
        BaseFlow::new(self.base.frequencies.clone().unwrap_or_else(|| vec![1.0]))
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let d = IntegratorConfig::default();
        IntegratorConfig {
            dt: self.integrator.dt.unwrap_or(d.dt),
            method: self.integrator.method.unwrap_or(d.method),
            picard_tol: self.integrator.picard_tol.unwrap_or(d.picard_tol),
            picard_max_iter: self.integrator.picard_max_iter.unwrap_or(d.picard_max_iter),
            ..d
        }
    }

    fn base_dim(&self) -> usize {
        self.base.frequencies.as_ref().map_or(1, Vec::len)
    }

    fn scalar_poly(&self, key: &str, terms: &[TermSpec]) -> Result<TrigPoly> {
        let d = self.base_dim();
        let mut out = Vec::with_capacity(terms.len());
        for t in terms {
            if t.wave.len() != d {
                return Err(range(key, format!("wave vector {:?} must have {d} entries", t.wave)));
            }
            let a = t.amplitude.ok_or_else(|| range(key, "scalar terms need `amplitude`"))?;
            if t.coeff.is_some() || t.mode.is_some() || t.part.is_some() {
                return Err(range(key, "scalar terms take only `wave`, `harmonic` and `amplitude`"));
            }
            out.push(TrigTerm {
                wave: t.wave.clone(),
                harmonic: t.harmonic,
                coeff: vec![a],
            });
        }
        TrigPoly::new(d, 1, out).map_err(|e| range(key, e.to_string()))
    }

    fn vector_poly(&self, key: &str, terms: &[TermSpec], n: usize) -> Result<TrigPoly> {
        let d = self.base_dim();
        let mut out = Vec::with_capacity(terms.len());
        for t in terms {
            if t.wave.len() != d {
                return Err(range(key, format!("wave vector {:?} must have {d} entries", t.wave)));
            }
            let coeff = match (&t.coeff, t.amplitude) {
                (Some(c), None) if c.len() == n => c.clone(),
                (None, Some(a)) if n == 1 => vec![a],
                _ => return Err(range(key, format!("each term needs `coeff` with {n} entries"))),
            };
            out.push(TrigTerm {
                wave: t.wave.clone(),
                harmonic: t.harmonic,
                coeff,
            });
        }
        TrigPoly::new(d, n, out).map_err(|e| range(key, e.to_string()))
    }

    fn galerkin_poly(&self, terms: &[TermSpec], basis: &GalerkinBasis) -> Result<TrigPoly> {
        let key = "model.forcing";
        let d = self.base_dim();
        let n = basis.dim();
        let mut out = Vec::with_capacity(terms.len());
        for t in terms {
            if t.wave.len() != d {
                return Err(range(key, format!("wave vector {:?} must have {d} entries", t.wave)));
            }
            let (Some(mode), Some(part), Some(a)) = (t.mode, t.part, t.amplitude) else {
                return Err(range(key, "Galerkin terms need `mode`, `part` and `amplitude`"));
            };
            let (idx, sign) = basis
                .dof(mode, part)
                .ok_or_else(|| range(key, format!("mode {mode:?} is not retained at this truncation")))?;
            let mut coeff = vec![0.0; n];
            coeff[idx] = sign * a;
            out.push(TrigTerm {
                wave: t.wave.clone(),
                harmonic: t.harmonic,
                coeff,
            });
        }
        TrigPoly::new(d, n, out).map_err(|e| range(key, e.to_string()))
    }

    /// The system triple; not available for the cubic regression model.
    pub fn build_model(&self) -> Result<SystemModel> {
        let m = &self.model;
        let d = self.base_dim();
        let coupling = |s: &Self| -> Result<TrigPoly> {
            match &m.coupling {
                Some(t) => s.scalar_poly("model.coupling", t),
                None => Ok(TrigPoly::constant(d, vec![1.0])),
            }
        };
        match self.instance {
            InstanceKind::Toy => {
                let e = m.eigenvalues.clone().unwrap_or_else(|| vec![1.0, 1.5]);
                let f = self.vector_poly("model.forcing", m.forcing.as_deref().unwrap_or(&[]), 2)?;
                SystemModel::toy([e[0], e[1]], coupling(self)?, f)
            }
            InstanceKind::LinearScalar => {
                if m.coupling.is_some() {
                    return Err(range("model.coupling", "the linear instance has no bilinear term"));
                }
                let e = m.eigenvalues.clone().unwrap_or_else(|| vec![1.0]);
                let f = self.vector_poly("model.forcing", m.forcing.as_deref().unwrap_or(&[]), e.len())?;
                SystemModel::linear(e, f)
            }
            InstanceKind::Galerkin => {
                let basis = Arc::new(GalerkinBasis::new(m.truncation.unwrap_or(8))?);
                let f = self.galerkin_poly(m.forcing.as_deref().unwrap_or(&[]), &basis)?;
                SystemModel::galerkin(m.nu.unwrap_or(1.0), basis, coupling(self)?, f)
            }
            InstanceKind::CubicRegression => Err(Error::Config("the cubic regression model is not a system triple".into())),
        }
    }

    pub fn cubic_model(&self) -> CubicModel {
        CubicModel {
            lambda: self.model.lambda.unwrap_or(0.01),
        }
    }

    /// Averaging scenario with `f₀`, `c₀` the constant parts of the
    /// configured polynomials.
    pub fn averaging_scenario(&self) -> Result<AveragingScenario> {
        let model = self.build_model()?;
        let forcing = ForcingDecomposition::from_mean(model.forcing_poly());
        let coupling = model.bilinear().coupling().map(BilinearDecomposition::from_mean);
        let v = &self.averaging;
        AveragingScenario::new(
            &model,
            self.flow()?,
            forcing,
            coupling,
            v.epsilons.clone().unwrap_or_default(),
            v.horizon.unwrap_or(10.0),
            v.seed_radius.unwrap_or(model.r0()),
            v.dt_fast.unwrap_or(1e-3),
        )
    }

    /// TOML text of the scenario.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
