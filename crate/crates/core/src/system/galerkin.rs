//! Divergence-free Fourier-Galerkin basis for 2D flow on the 2π-periodic torus.
//!
//! Every wave vector `k` with `|k|∞ ≤ N` in the upper half plane carries two
//! real degrees of freedom `(a_k, b_k)`:
//!
//! ```text
//! u(x) = Σ_k √2 (a_k cos(k·x) + b_k sin(k·x)) k⊥/|k|,   k⊥ = (-k2, k1)
//! ```
//!
//! The basis is orthonormal for the mean-square inner product, so the energy
//! norm is the Euclidean norm of the coefficient vector. The Stokes operator is
//! diagonal with eigenvalue `ν|k|²`. The convection term `P_N (u·∇)v` is
//! evaluated pseudo-spectrally on a grid of `M ≥ 3N+1` points per axis, which is
//! alias-free for a product of two degree-N fields, so the projected form keeps
//! the exact identity `<P(u·∇v), w> = -<P(u·∇w), v>`.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Which real degree of freedom of a Fourier mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModePart {
    Cos,
    Sin,
}

pub struct GalerkinBasis {
    truncation: usize,
    modes: Vec<[i64; 2]>,
    grid: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GalerkinBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GalerkinBasis")
            .field("truncation", &self.truncation)
            .field("dofs", &self.dim())
            .field("grid", &self.grid)
            .finish()
    }
}

impl GalerkinBasis {
    pub fn new(truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::Range {
                key: "model.modes".into(),
                reason: "truncation N must be >= 1".into(),
            });
        }
        let n = truncation as i64;
        let mut modes = Vec::new();
        for k2 in 0..=n {
            for k1 in -n..=n {
                if k2 > 0 || k1 > 0 {
                    modes.push([k1, k2]);
                }
            }
        }
        let grid = (3 * truncation + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Ok(Self {
            truncation,
            modes,
            grid,
            forward: planner.plan_fft_forward(grid),
            inverse: planner.plan_fft_inverse(grid),
        })
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Number of real coefficients.
    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn modes(&self) -> &[[i64; 2]] {
        &self.modes
    }

    /// Stokes eigenvalues `ν|k|²`, one per real coefficient.
    pub fn stokes_eigenvalues(&self, nu: f64) -> Vec<f64> {
        self.modes
            .iter()
            .flat_map(|k| {
                let l = nu * (k[0] * k[0] + k[1] * k[1]) as f64;
                [l, l]
            })
            .collect()
    }

    /// Coefficient index and sign for a mode given with either orientation.
    ///
    /// `e_{-k,cos} = -e_{k,cos}` and `e_{-k,sin} = e_{k,sin}`.
    pub fn dof(&self, mode: [i64; 2], part: ModePart) -> Option<(usize, f64)> {
        let (k, flipped) = if mode[1] > 0 || (mode[1] == 0 && mode[0] > 0) {
            (mode, false)
        } else {
            ([-mode[0], -mode[1]], true)
        };
        let i = self.modes.iter().position(|m| *m == k)?;
        Some(match part {
            ModePart::Cos => (2 * i, if flipped { -1.0 } else { 1.0 }),
            ModePart::Sin => (2 * i + 1, 1.0),
        })
    }

    /// Bound `sup |P(u·∇v)| / (|u||v|) ≤ 2N √n` from
    /// `|u|∞ ≤ √(2n)|u|` and `|∇v| ≤ √2 N |v|`.
    pub fn convection_bound(&self) -> f64 {
        2.0 * self.truncation as f64 * (self.dim() as f64).sqrt()
    }

    fn idx(&self, k: i64) -> usize {
        k.rem_euclid(self.grid as i64) as usize
    }

    /// Spectral coefficients of both velocity components, optionally
    /// differentiated along axis `deriv`. Layout: row = k2, column = k1.
    fn scatter(&self, coeffs: &[f64], deriv: Option<usize>, out1: &mut [Complex64], out2: &mut [Complex64]) {
        let m = self.grid;
        out1.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        out2.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (i, k) in self.modes.iter().enumerate() {
            let norm = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
            let perp = [-k[1] as f64 / norm, k[0] as f64 / norm];
            let mut s = Complex64::new(coeffs[2 * i], -coeffs[2 * i + 1]) / SQRT_2;
            if let Some(j) = deriv {
                s *= Complex64::new(0.0, k[j] as f64);
            }
            let pos = self.idx(k[1]) * m + self.idx(k[0]);
            let neg = self.idx(-k[1]) * m + self.idx(-k[0]);
            out1[pos] = s * perp[0];
            out2[pos] = s * perp[1];
            out1[neg] = (s * perp[0]).conj();
            out2[neg] = (s * perp[1]).conj();
        }
    }

    fn transpose(&self, buf: &mut [Complex64]) {
        let m = self.grid;
        for r in 0..m {
            for c in (r + 1)..m {
                buf.swap(r * m + c, c * m + r);
            }
        }
    }

    fn fft2(&self, fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        fft.process_with_scratch(buf, scratch);
        self.transpose(buf);
        fft.process_with_scratch(buf, scratch);
    }

    /// `P_N (u·∇)v` in coefficient space, written to `out`.
    pub fn convection(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        let m = self.grid;
        let size = m * m;
        let zero = Complex64::new(0.0, 0.0);
        let mut a = vec![zero; size];
        let mut b = vec![zero; size];
        let mut c = vec![zero; size];
        let mut d = vec![zero; size];
        let mut scratch = vec![zero; self.inverse.get_inplace_scratch_len().max(self.forward.get_inplace_scratch_len())];

        // Real fields are paired as re + i·im so one complex transform yields two.
        let pack = |x: &mut [Complex64], y: &[Complex64]| {
            for (p, q) in x.iter_mut().zip(y) {
                *p += Complex64::new(0.0, 1.0) * q;
            }
        };

        // u1 + i u2
        self.scatter(u, None, &mut a, &mut b);
        pack(&mut a, &b);
        // ∂1 v1 + i ∂1 v2
        self.scatter(v, Some(0), &mut b, &mut c);
        pack(&mut b, &c);
        // ∂2 v1 + i ∂2 v2
        self.scatter(v, Some(1), &mut c, &mut d);
        pack(&mut c, &d);

        for buf in [&mut a, &mut b, &mut c] {
            self.fft2(&self.inverse, buf, &mut scratch);
        }

        // w1 + i w2 with w_i = u1 ∂1 v_i + u2 ∂2 v_i
        for p in 0..size {
            let (u1, u2) = (a[p].re, a[p].im);
            let w1 = u1 * b[p].re + u2 * c[p].re;
            let w2 = u1 * b[p].im + u2 * c[p].im;
            d[p] = Complex64::new(w1, w2);
        }
        self.fft2(&self.forward, &mut d, &mut scratch);
        let scale = 1.0 / size as f64;

        for (i, k) in self.modes.iter().enumerate() {
            let norm = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
            let perp = [-k[1] as f64 / norm, k[0] as f64 / norm];
            let pos = self.idx(k[1]) * m + self.idx(k[0]);
            let neg = self.idx(-k[1]) * m + self.idx(-k[0]);
            // unpack the transforms of the two real fields
            let zp = d[pos] * scale;
            let zn = d[neg].conj() * scale;
            let w1 = (zp + zn) * 0.5;
            let w2 = (zp - zn) * Complex64::new(0.0, -0.5);
            let p = w1 * perp[0] + w2 * perp[1];
            out[2 * i] = SQRT_2 * p.re;
            out[2 * i + 1] = -SQRT_2 * p.im;
        }
    }
}
