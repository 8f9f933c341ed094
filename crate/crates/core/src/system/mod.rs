//! The driven system `u' + Au + B(ωt)(u,u) = f(ωt)`.
//!
//! `A` is diagonal with positive eigenvalues, `B(ω)` is a bilinear form with
//! `<B(ω)(u,v), w> = -<B(ω)(u,w), v>`, and `f` is a trigonometric polynomial on
//! the base torus. Three concrete families are provided:
//!
//! * linear: `B ≡ 0`, any diagonal `A`;
//! * toy: `n = 2`, `B(θ)(u,v) = c(θ)(u₁v₂, -u₁v₁)`;
//! * Galerkin: 2D Navier-Stokes on the periodic torus, `B(θ)(u,v) = q(θ) P(u·∇)v`.

pub mod galerkin;
pub mod trig;

use std::sync::Arc;

use rand::Rng;

use crate::base_flow::BasePoint;
use crate::error::{Error, Result};
use galerkin::GalerkinBasis;
use trig::TrigPoly;

/// Coefficient vector in the energy space. The energy norm is Euclidean.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct State(Vec<f64>);

impl State {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &State) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn distance(&self, other: &State) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, s: f64) -> State {
        State(self.0.iter().map(|x| x * s).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for State {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl std::ops::Index<usize> for State {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Random vector uniformly distributed on the unit sphere.
pub fn random_unit<R: Rng>(n: usize, rng: &mut R) -> State {
    loop {
        let v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return State(v.into_iter().map(|x| x / r).collect());
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Which concrete family a model belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Instance {
    Linear,
    Toy,
    Galerkin,
}

/// `θ ↦ B(θ)`, always a scalar trigonometric coefficient times a fixed
/// skew-symmetric structure.
#[derive(Clone, Debug)]
pub enum Bilinear {
    Zero,
    Toy { coupling: TrigPoly },
    Galerkin { coupling: TrigPoly, basis: Arc<GalerkinBasis> },
}

impl Bilinear {
    pub fn coupling(&self) -> Option<&TrigPoly> {
        match self {
            Bilinear::Zero => None,
            Bilinear::Toy { coupling } | Bilinear::Galerkin { coupling, .. } => Some(coupling),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coupling().is_none_or(TrigPoly::is_zero)
    }

    fn with_coupling(&self, coupling: TrigPoly) -> Bilinear {
        match self {
            Bilinear::Zero => Bilinear::Zero,
            Bilinear::Toy { .. } => Bilinear::Toy { coupling },
            Bilinear::Galerkin { basis, .. } => Bilinear::Galerkin {
                coupling,
                basis: basis.clone(),
            },
        }
    }

    /// Norm of the θ-independent structure `(u,v) ↦ B(u,v)/c(θ)`.
    fn structure_bound(&self) -> f64 {
        match self {
            Bilinear::Zero => 0.0,
            Bilinear::Toy { .. } => 1.0,
            Bilinear::Galerkin { basis, .. } => basis.convection_bound(),
        }
    }

    fn structure(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Bilinear::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Bilinear::Toy { .. } => {
                out[0] = u[0] * v[1];
                out[1] = -u[0] * v[0];
            }
            Bilinear::Galerkin { basis, .. } => basis.convection(u, v, out),
        }
    }
}

/// The triple `(A, B(ω), f(ω))` with its certified constants.
#[derive(Clone, Debug)]
pub struct SystemModel {
    instance: Instance,
    eigenvalues: Vec<f64>,
    bilinear: Bilinear,
    forcing: TrigPoly,
    alpha: f64,
    c_b: f64,
    f_sup: f64,
}

impl SystemModel {
    fn build(instance: Instance, eigenvalues: Vec<f64>, bilinear: Bilinear, forcing: TrigPoly) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Config("model needs at least one eigenvalue".into()));
        }
        if let Some(bad) = eigenvalues.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Range {
                key: "model.eigenvalues".into(),
                reason: format!("eigenvalues must be positive and finite, got {bad}"),
            });
        }
        if forcing.value_dim() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                found: forcing.value_dim(),
            });
        }
        if let Some(c) = bilinear.coupling() {
            if c.value_dim() != 1 || c.base_dim() != forcing.base_dim() {
                return Err(Error::Config("coupling must be a scalar polynomial on the same torus as the forcing".into()));
            }
        }
        let alpha = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let c_b = bilinear.coupling().map_or(0.0, TrigPoly::sup_norm) * bilinear.structure_bound();
        let f_sup = forcing.sup_norm();
        Ok(Self {
            instance,
            eigenvalues,
            bilinear,
            forcing,
            alpha,
            c_b,
            f_sup,
        })
    }

    /// `u' + diag(λ) u = f(ωt)`.
    pub fn linear(eigenvalues: Vec<f64>, forcing: TrigPoly) -> Result<Self> {
        Self::build(Instance::Linear, eigenvalues, Bilinear::Zero, forcing)
    }

    /// Two-mode system with `B(θ)(u,v) = c(θ)(u₁v₂, -u₁v₁)`.
    pub fn toy(eigenvalues: [f64; 2], coupling: TrigPoly, forcing: TrigPoly) -> Result<Self> {
        Self::build(Instance::Toy, eigenvalues.to_vec(), Bilinear::Toy { coupling }, forcing)
    }

    /// Truncated 2D Navier-Stokes with viscosity `nu` and `|k|∞ ≤ basis.truncation()`.
    pub fn galerkin(nu: f64, basis: Arc<GalerkinBasis>, coupling: TrigPoly, forcing: TrigPoly) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::Range {
                key: "model.nu".into(),
                reason: format!("viscosity must be positive, got {nu}"),
            });
        }
        let eig = basis.stokes_eigenvalues(nu);
        Self::build(Instance::Galerkin, eig, Bilinear::Galerkin { coupling, basis }, forcing)
    }

    pub fn instance(&self) -> Instance {
        self.instance
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn base_dim(&self) -> usize {
        self.forcing.base_dim()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn bilinear(&self) -> &Bilinear {
        &self.bilinear
    }

    pub fn forcing_poly(&self) -> &TrigPoly {
        &self.forcing
    }

    /// Coercivity constant `α = min λᵢ`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Declared bound `|B(ω)(u,v)| ≤ C_B |u||v|`.
    pub fn c_b(&self) -> f64 {
        self.c_b
    }

    /// `‖f‖ = sup_ω |f(ω)|` (a certified upper bound).
    pub fn f_sup(&self) -> f64 {
        self.f_sup
    }

    /// Radius of the absorbing ball `‖f‖/α`.
    pub fn r0(&self) -> f64 {
        self.f_sup / self.alpha
    }

    /// `C_B‖f‖/α²`; the contraction results need it below one.
    pub fn smallness(&self) -> f64 {
        self.c_b * self.f_sup / (self.alpha * self.alpha)
    }

    /// Guaranteed contraction rate `α - C_B‖f‖/α`.
    pub fn contraction_rate(&self) -> f64 {
        self.alpha - self.c_b * self.f_sup / self.alpha
    }

    pub fn require_smallness(&self) -> Result<()> {
        let ratio = self.smallness();
        if ratio < 1.0 {
            Ok(())
        } else {
            Err(Error::Smallness { ratio })
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: n,
            })
        }
    }

    pub fn apply_a(&self, u: &State) -> Result<State> {
        self.check_dim(u.len())?;
        Ok(State(
            u.0.iter().zip(&self.eigenvalues).map(|(x, l)| x * l).collect(),
        ))
    }

    pub fn apply_b(&self, omega: &BasePoint, u: &State, v: &State) -> Result<State> {
        self.check_dim(u.len())?;
        self.check_dim(v.len())?;
        let mut out = vec![0.0; self.dim()];
        self.bilinear_into(omega, u.as_slice(), v.as_slice(), &mut out);
        Ok(State(out))
    }

    pub fn forcing(&self, omega: &BasePoint) -> State {
        State(self.forcing.eval(omega))
    }

    pub(crate) fn bilinear_into(&self, omega: &BasePoint, u: &[f64], v: &[f64], out: &mut [f64]) {
        match self.bilinear.coupling() {
            None => out.iter_mut().for_each(|o| *o = 0.0),
            Some(c) => {
                let c = c.eval_scalar(omega);
                if c == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                } else {
                    self.bilinear.structure(u, v, out);
                    out.iter_mut().for_each(|o| *o *= c);
                }
            }
        }
    }

    /// Same operator with coupling and forcing replaced.
    pub fn with_parts(&self, coupling: Option<TrigPoly>, forcing: TrigPoly) -> Result<Self> {
        let bilinear = match coupling {
            Some(c) => self.bilinear.with_coupling(c),
            None => self.bilinear.clone(),
        };
        Self::build(self.instance, self.eigenvalues.clone(), bilinear, forcing)
    }

    /// Same structure with the forcing multiplied by `s`.
    pub fn with_forcing_scaled(&self, s: f64) -> Result<Self> {
        self.with_parts(None, self.forcing.scaled(s))
    }

    /// Same structure with the coupling multiplied by `s`.
    pub fn with_coupling_scaled(&self, s: f64) -> Result<Self> {
        let c = self.bilinear.coupling().map(|c| c.scaled(s));
        self.with_parts(c, self.forcing.clone())
    }
}

/// `f = f₀ + f₁` with `f₁` of zero mean along the base flow.
#[derive(Clone, Debug)]
pub struct ForcingDecomposition {
    pub f0: TrigPoly,
    pub f1: TrigPoly,
}

impl ForcingDecomposition {
    pub fn new(f0: TrigPoly, f1: TrigPoly) -> Result<Self> {
        if f0.value_dim() != f1.value_dim() || f0.base_dim() != f1.base_dim() {
            return Err(Error::DimensionMismatch {
                expected: f0.value_dim(),
                found: f1.value_dim(),
            });
        }
        Ok(Self { f0, f1 })
    }

    /// Constant part as the average, everything else as the oscillation.
    pub fn from_mean(f: &TrigPoly) -> Self {
        Self {
            f0: f.mean(),
            f1: f.oscillatory(),
        }
    }

    pub fn total(&self) -> TrigPoly {
        self.f0.sum(&self.f1).expect("components share dimensions")
    }
}

/// `B = B₀ + B₁`, expressed through the scalar coupling `c = c₀ + c₁`.
#[derive(Clone, Debug)]
pub struct BilinearDecomposition {
    pub c0: TrigPoly,
    pub c1: TrigPoly,
}

impl BilinearDecomposition {
    pub fn new(c0: TrigPoly, c1: TrigPoly) -> Result<Self> {
        if c0.value_dim() != 1 || c1.value_dim() != 1 || c0.base_dim() != c1.base_dim() {
            return Err(Error::Config("coupling components must be scalar polynomials on one torus".into()));
        }
        Ok(Self { c0, c1 })
    }

    pub fn from_mean(c: &TrigPoly) -> Self {
        Self {
            c0: c.mean(),
            c1: c.oscillatory(),
        }
    }

    pub fn total(&self) -> TrigPoly {
        self.c0.sum(&self.c1).expect("components share dimensions")
    }
}

/// Largest `|B(ω)(u,v)|` over unit `u`, `v` found by alternating power
/// iteration from `samples` random starts (each at a random `ω`).
///
/// This is a lower estimate of `C_B`; it is an error for it to exceed the
/// model's declared constant.
pub fn certify_c_b<R: Rng>(model: &SystemModel, samples: usize, rng: &mut R) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Precondition("certify_c_b needs at least one sample".into()));
    }
    if model.bilinear().is_zero() {
        return Ok(0.0);
    }
    let n = model.dim();
    let d = model.base_dim();
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let omega = BasePoint::new((0..d).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect())?;
        let mut u = random_unit(n, rng);
        let mut v: State;
        let mut value = 0.0;
        for _ in 0..8 {
            // v-step: top singular vector of v ↦ B(u,v)
            let (s, vv) = top_singular(n, rng, |x, out| model.bilinear_into(&omega, u.as_slice(), x, out));
            v = vv;
            // u-step: top singular vector of u ↦ B(u,v)
            let (s2, uu) = top_singular(n, rng, |x, out| model.bilinear_into(&omega, x, v.as_slice(), out));
            u = uu;
            let prev = value;
            value = s.max(s2);
            if (value - prev).abs() <= 1e-12 * value.max(1e-300) {
                break;
            }
        }
        best = best.max(value);
    }
    if best > model.c_b() * (1.0 + 1e-9) + 1e-14 {
        return Err(Error::Misconfigured(format!(
            "sampled |B(u,v)| = {best:.6e} exceeds declared C_B = {:.6e}",
            model.c_b()
        )));
    }
    Ok(best)
}

/// Largest singular value and right singular vector of a linear map given
/// by its action, via power iteration on `MᵀM` with the matrix assembled
/// column by column.
fn top_singular<R: Rng, F>(n: usize, rng: &mut R, apply: F) -> (f64, State)
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut cols = vec![vec![0.0; n]; n];
    let mut e = vec![0.0; n];
    for (j, col) in cols.iter_mut().enumerate() {
        e[j] = 1.0;
        apply(&e, col);
        e[j] = 0.0;
    }
    let mut x = random_unit(n, rng).into_vec();
    let mut sigma = 0.0;
    let mut y = vec![0.0; n];
    for _ in 0..500 {
        // y = M x
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, col) in cols.iter().enumerate() {
            if x[j] != 0.0 {
                for (yi, c) in y.iter_mut().zip(col) {
                    *yi += c * x[j];
                }
            }
        }
        // x = Mᵀ y
        let z: Vec<f64> = cols.iter().map(|col| dot(col, &y)).collect();
        let zn = norm(&z);
        if zn == 0.0 {
            return (0.0, State(x));
        }
        let next = zn.sqrt();
        x = z.into_iter().map(|v| v / zn).collect();
        if (next - sigma).abs() <= 1e-13 * next {
            break;
        }
        sigma = next;
    }
    // report |M x| for the final unit vector, a true lower bound
    y.iter_mut().for_each(|v| *v = 0.0);
    for (j, col) in cols.iter().enumerate() {
        for (yi, c) in y.iter_mut().zip(col) {
            *yi += c * x[j];
        }
    }
    (norm(&y), State(x))
}

/// Max over random unit triples of `|<B(u,v),w> + <B(u,w),v>|`.
///
/// Fails with a structural error when the residual exceeds `1e-10`.
pub fn verify_skew<R: Rng>(model: &SystemModel, omega: &BasePoint, trials: usize, rng: &mut R) -> Result<f64> {
    const THRESHOLD: f64 = 1e-10;
    let n = model.dim();
    let mut buv = vec![0.0; n];
    let mut buw = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let (u, v, w) = (random_unit(n, rng), random_unit(n, rng), random_unit(n, rng));
        model.bilinear_into(omega, u.as_slice(), v.as_slice(), &mut buv);
        model.bilinear_into(omega, u.as_slice(), w.as_slice(), &mut buw);
        worst = worst.max((dot(&buv, w.as_slice()) + dot(&buw, v.as_slice())).abs());
    }
    if worst > THRESHOLD {
        return Err(Error::Structural {
            what: "skew symmetry",
            residual: worst,
            threshold: THRESHOLD,
        });
    }
    Ok(worst)
}

/// Min over random states of `(<Au,u> - α|u|²)/|u|²`.
pub fn coercivity_margin<R: Rng>(model: &SystemModel, trials: usize, rng: &mut R) -> f64 {
    let n = model.dim();
    let mut worst = f64::INFINITY;
    for _ in 0..trials.max(1) {
        let u = random_unit(n, rng).scaled(rng.gen_range(0.1..10.0));
        let au = model.apply_a(&u).expect("dimension matches");
        worst = worst.min((au.dot(&u) - model.alpha() * u.dot(&u)) / u.dot(&u));
    }
    worst
}

/// Max over random `u` of `|<B(ω)(u,v),v>| / (|u||v|²)` for `v = u` and an
/// independent `v`.
pub fn energy_orthogonality<R: Rng>(model: &SystemModel, omega: &BasePoint, trials: usize, rng: &mut R) -> f64 {
    let n = model.dim();
    let mut out = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let u = random_unit(n, rng);
        let v = random_unit(n, rng);
        for w in [&u, &v] {
            model.bilinear_into(omega, u.as_slice(), w.as_slice(), &mut out);
            worst = worst.max(dot(&out, w.as_slice()).abs());
        }
    }
    worst
}

/// Max over random pairs of
/// `|B(u₁,u₁) - B(u₂,u₂)| / (C_B (|u₁|+|u₂|) |u₁-u₂|)`; at most one when the
/// Lipschitz estimate holds.
pub fn lipschitz_ratio<R: Rng>(model: &SystemModel, omega: &BasePoint, trials: usize, rng: &mut R) -> f64 {
    if model.c_b() == 0.0 {
        return 0.0;
    }
    let n = model.dim();
    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let u1 = random_unit(n, rng).scaled(rng.gen_range(0.1..5.0));
        let u2 = random_unit(n, rng).scaled(rng.gen_range(0.1..5.0));
        model.bilinear_into(omega, u1.as_slice(), u1.as_slice(), &mut b1);
        model.bilinear_into(omega, u2.as_slice(), u2.as_slice(), &mut b2);
        let lhs = b1.iter().zip(&b2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let rhs = model.c_b() * (u1.norm() + u2.norm()) * u1.distance(&u2);
        worst = worst.max(lhs / rhs);
    }
    worst
}
