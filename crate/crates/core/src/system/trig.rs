//! Vector-valued trigonometric polynomials on the torus.
//!
//! Coefficients of the bilinear form (`c(θ)`, `q(θ)`) and forcing terms
//! `f(θ)` are all of this shape: a finite sum of `coeff · cos(m·θ)` and
//! `coeff · sin(m·θ)` with integer wave vectors `m`. The time average along a
//! rotation is the constant (zero wave vector) part, provided no other wave
//! vector is resonant with the frequencies.

use crate::base_flow::BasePoint;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Harmonic {
    Cos,
    Sin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrigTerm {
    pub wave: Vec<i64>,
    pub harmonic: Harmonic,
    pub coeff: Vec<f64>,
}

impl TrigTerm {
    fn is_constant(&self) -> bool {
        self.wave.iter().all(|&m| m == 0)
    }

    fn angle(&self, theta: &[f64]) -> f64 {
        self.wave
            .iter()
            .zip(theta)
            .map(|(&m, th)| m as f64 * th)
            .sum()
    }

    fn weight(&self, theta: &[f64]) -> f64 {
        match self.harmonic {
            Harmonic::Cos => self.angle(theta).cos(),
            Harmonic::Sin => self.angle(theta).sin(),
        }
    }

    fn wave_norm(&self) -> f64 {
        self.wave
            .iter()
            .map(|&m| (m as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn coeff_norm(&self) -> f64 {
        self.coeff.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    base_dim: usize,
    value_dim: usize,
    terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn new(base_dim: usize, value_dim: usize, terms: Vec<TrigTerm>) -> Result<Self> {
        for t in &terms {
            if t.wave.len() != base_dim {
                return Err(Error::DimensionMismatch {
                    expected: base_dim,
                    found: t.wave.len(),
                });
            }
            if t.coeff.len() != value_dim {
                return Err(Error::DimensionMismatch {
                    expected: value_dim,
                    found: t.coeff.len(),
                });
            }
            if t.coeff.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config("trigonometric coefficients must be finite".into()));
            }
        }
        Ok(Self {
            base_dim,
            value_dim,
            terms,
        })
    }

    pub fn zero(base_dim: usize, value_dim: usize) -> Self {
        Self {
            base_dim,
            value_dim,
            terms: Vec::new(),
        }
    }

    pub fn constant(base_dim: usize, value: Vec<f64>) -> Self {
        Self {
            base_dim,
            value_dim: value.len(),
            terms: vec![TrigTerm {
                wave: vec![0; base_dim],
                harmonic: Harmonic::Cos,
                coeff: value,
            }],
        }
    }

    /// Scalar polynomial `a0 + Σ (a_j cos(m_j·θ) | b_j sin(m_j·θ))`.
    pub fn scalar(base_dim: usize, terms: &[(Vec<i64>, Harmonic, f64)]) -> Result<Self> {
        Self::new(
            base_dim,
            1,
            terms
                .iter()
                .map(|(w, h, a)| TrigTerm {
                    wave: w.clone(),
                    harmonic: *h,
                    coeff: vec![*a],
                })
                .collect(),
        )
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.coeff.iter().all(|&c| c == 0.0) || (t.is_constant() && t.harmonic == Harmonic::Sin))
    }

    /// True when the value does not depend on θ.
    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.is_constant() || t.coeff.iter().all(|&c| c == 0.0))
    }

    pub fn eval_into(&self, theta: &BasePoint, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.value_dim);
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.terms {
            let w = t.weight(theta.phases());
            if w != 0.0 {
                for (o, c) in out.iter_mut().zip(&t.coeff) {
                    *o += w * c;
                }
            }
        }
    }

    pub fn eval(&self, theta: &BasePoint) -> Vec<f64> {
        let mut out = vec![0.0; self.value_dim];
        self.eval_into(theta, &mut out);
        out
    }

    pub fn eval_scalar(&self, theta: &BasePoint) -> f64 {
        debug_assert_eq!(self.value_dim, 1);
        self.terms
            .iter()
            .map(|t| t.coeff[0] * t.weight(theta.phases()))
            .sum()
    }

    /// Constant part: the average along any non-resonant rotation.
    pub fn mean(&self) -> Self {
        Self {
            base_dim: self.base_dim,
            value_dim: self.value_dim,
            terms: self
                .terms
                .iter()
                .filter(|t| t.is_constant() && t.harmonic == Harmonic::Cos)
                .cloned()
                .collect(),
        }
    }

    /// Everything except the constant part.
    pub fn oscillatory(&self) -> Self {
        Self {
            base_dim: self.base_dim,
            value_dim: self.value_dim,
            terms: self
                .terms
                .iter()
                .filter(|t| !t.is_constant())
                .cloned()
                .collect(),
        }
    }

    pub fn sum(&self, other: &TrigPoly) -> Result<Self> {
        if self.base_dim != other.base_dim || self.value_dim != other.value_dim {
            return Err(Error::DimensionMismatch {
                expected: self.value_dim,
                found: other.value_dim,
            });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self {
            base_dim: self.base_dim,
            value_dim: self.value_dim,
            terms,
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut p = self.clone();
        for t in &mut p.terms {
            t.coeff.iter_mut().for_each(|c| *c *= s);
        }
        p
    }

    /// Triangle-inequality bound `Σ |coeff|`.
    pub fn coefficient_bound(&self) -> f64 {
        self.terms.iter().map(TrigTerm::coeff_norm).sum()
    }

    /// Rigorous upper bound on `sup_θ |p(θ)|`.
    ///
    /// For base dimension ≤ 2 the squared norm is sampled on a lattice and the
    /// sample maximum is corrected by a Hessian bound at the true maximiser,
    /// which is tight to ~1e-6 relative. Higher dimensions fall back to the
    /// coefficient bound.
    pub fn sup_norm(&self) -> f64 {
        if self.is_constant() {
            let c = self.eval(&BasePoint::origin(self.base_dim));
            return c.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        let triangle = self.coefficient_bound();
        let per_dim: usize = match self.base_dim {
            1 => 4096,
            2 => 256,
            _ => return triangle,
        };
        let h = std::f64::consts::TAU / per_dim as f64;
        let delta = 0.5 * h * (self.base_dim as f64).sqrt();
        let l1: f64 = self.terms.iter().map(|t| t.wave_norm() * t.coeff_norm()).sum();
        let l2: f64 = self
            .terms
            .iter()
            .map(|t| t.wave_norm().powi(2) * t.coeff_norm())
            .sum();
        let total = per_dim.pow(self.base_dim as u32);
        let mut buf = vec![0.0; self.value_dim];
        let mut max_sq: f64 = 0.0;
        for flat in 0..total {
            let phases: Vec<f64> = (0..self.base_dim)
                .map(|d| ((flat / per_dim.pow(d as u32)) % per_dim) as f64 * h)
                .collect();
            let p = BasePoint::new(phases).expect("lattice phases are finite");
            self.eval_into(&p, &mut buf);
            max_sq = max_sq.max(buf.iter().map(|x| x * x).sum());
        }
        let bound = (max_sq + (l1 * l1 + triangle * l2) * delta * delta).sqrt();
        bound.min(triangle)
    }
}
