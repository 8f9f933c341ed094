//! Rotation flows on the d-torus.
//!
//! The driving system is a linear flow `θ ↦ θ + ρ t (mod 2π)`. Periodic,
//! quasi-periodic and finitely generated almost-periodic driving are all
//! covered by picking the frequency vector `ρ`. Rational independence of the
//! frequencies is the caller's responsibility; it cannot be checked in
//! floating point.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Reduce an angle to the canonical representative in `[0, 2π)`.
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Shorter-arc distance between two angles.
#[inline]
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_phase(a - b);
    d.min(TAU - d)
}

/// A point on the torus, phases kept in `[0, 2π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasePoint {
    phases: Vec<f64>,
}

impl BasePoint {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::Config("base point needs at least one phase".into()));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("base point phases must be finite".into()));
        }
        Ok(Self {
            phases: phases.into_iter().map(wrap_phase).collect(),
        })
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            phases: vec![0.0; dim.max(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Flat torus metric: Euclidean norm of the per-coordinate circular distances.
    pub fn distance(&self, other: &BasePoint) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self
            .phases
            .iter()
            .zip(&other.phases)
            .map(|(a, b)| circular_distance(*a, *b).powi(2))
            .sum::<f64>()
            .sqrt())
    }
}

/// Linear rotation `σ(t, θ) = θ + ρ t` on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseFlow {
    frequencies: Vec<f64>,
}

impl BaseFlow {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::Config("base flow needs dimension >= 1".into()));
        }
        if frequencies.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("base flow frequencies must be finite".into()));
        }
        Ok(Self { frequencies })
    }

    /// Unit-speed rotation of the circle.
    pub fn circle() -> Self {
        Self {
            frequencies: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.frequencies.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// The same rotation run `1/eps` times faster.
    pub fn accelerated(&self, eps: f64) -> Self {
        Self {
            frequencies: self.frequencies.iter().map(|w| w / eps).collect(),
        }
    }

    /// `σ(t, θ)`. Total for every finite `t`, including negative times.
    pub fn advance(&self, point: &BasePoint, t: f64) -> BasePoint {
        debug_assert_eq!(point.dim(), self.dim());
        BasePoint {
            phases: point
                .phases
                .iter()
                .zip(&self.frequencies)
                .map(|(th, w)| wrap_phase(th + w * t))
                .collect(),
        }
    }
}

/// Uniform lattice on the torus with `per_dim` points along every axis.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusGrid {
    dim: usize,
    per_dim: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, per_dim: usize) -> Result<Self> {
        if dim == 0 || per_dim == 0 {
            return Err(Error::Config("torus grid needs dim >= 1 and points >= 1".into()));
        }
        Ok(Self { dim, per_dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn per_dim(&self) -> usize {
        self.per_dim
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.per_dim as f64
    }

    pub fn len(&self) -> usize {
        self.per_dim.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lattice indices of a flat index, first axis fastest.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            idx.push(flat % self.per_dim);
            flat /= self.per_dim;
        }
        idx
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .rev()
            .fold(0, |acc, &i| acc * self.per_dim + (i % self.per_dim))
    }

    pub fn point(&self, flat: usize) -> BasePoint {
        let h = self.spacing();
        BasePoint {
            phases: self
                .multi_index(flat)
                .into_iter()
                .map(|i| i as f64 * h)
                .collect(),
        }
    }

    pub fn points(&self) -> Vec<BasePoint> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn full_rotation_returns_home() {
        let flow = BaseFlow::circle();
        let p = flow.advance(&BasePoint::origin(1), TAU);
        assert!(p.distance(&BasePoint::origin(1)).unwrap() < 1e-12);
    }

    #[test]
    fn zero_time_is_identity() {
        let flow = BaseFlow::new(vec![1.0, 2f64.sqrt()]).unwrap();
        let p = BasePoint::new(vec![0.3, 5.0]).unwrap();
        assert_eq!(flow.advance(&p, 0.0), p);
    }

    #[test]
    fn two_torus_unit_step() {
        let flow = BaseFlow::new(vec![1.0, 2f64.sqrt()]).unwrap();
        let p = flow.advance(&BasePoint::origin(2), 1.0);
        assert!((p.phases()[0] - 1.0).abs() < 1e-15);
        assert!((p.phases()[1] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let o = BasePoint::origin(1);
        assert_eq!(o.distance(&o).unwrap(), 0.0);
        let anti = BasePoint::new(vec![PI]).unwrap();
        assert!((o.distance(&anti).unwrap() - PI).abs() < 1e-15);
        let a = BasePoint::new(vec![0.1, 6.2]).unwrap();
        let expected = (0.1f64.powi(2) + (TAU - 6.2f64).powi(2)).sqrt();
        assert!((a.distance(&BasePoint::origin(2)).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn distance_dimension_mismatch() {
        let err = BasePoint::origin(1).distance(&BasePoint::origin(2));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn negative_phase_is_canonical() {
        let p = BasePoint::new(vec![-1e-20, -0.5]).unwrap();
        for &th in p.phases() {
            assert!((0.0..TAU).contains(&th));
        }
    }

    #[test]
    fn grid_round_trip() {
        let g = TorusGrid::new(2, 5).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(i)), i);
        }
        assert_eq!(g.points().len(), 25);
    }

    fn phase() -> impl Strategy<Value = f64> {
        0.0..TAU
    }

    proptest! {
        #[test]
        fn group_law(th in prop::collection::vec(phase(), 2), s in -50.0..50.0f64, t in -50.0..50.0f64) {
            let flow = BaseFlow::new(vec![1.0, 2f64.sqrt()]).unwrap();
            let p = BasePoint::new(th).unwrap();
            let lhs = flow.advance(&flow.advance(&p, s), t);
            let rhs = flow.advance(&p, s + t);
            prop_assert!(lhs.distance(&rhs).unwrap() <= 1e-12);
        }

        #[test]
        fn invertible(th in prop::collection::vec(phase(), 2), t in -100.0..100.0f64) {
            let flow = BaseFlow::new(vec![0.7, 3f64.sqrt()]).unwrap();
            let p = BasePoint::new(th).unwrap();
            let back = flow.advance(&flow.advance(&p, t), -t);
            prop_assert!(back.distance(&p).unwrap() <= 1e-12);
        }

        #[test]
        fn triangle_inequality(a in prop::collection::vec(phase(), 3),
                               b in prop::collection::vec(phase(), 3),
                               c in prop::collection::vec(phase(), 3)) {
            let (a, b, c) = (BasePoint::new(a).unwrap(), BasePoint::new(b).unwrap(), BasePoint::new(c).unwrap());
            let ab = a.distance(&b).unwrap();
            prop_assert!((ab - b.distance(&a).unwrap()).abs() < 1e-15);
            prop_assert!(ab <= a.distance(&c).unwrap() + c.distance(&b).unwrap() + 1e-12);
        }
    }
}
