//! Enclosing torus: the box grid zero-padded to a periodic lattice of twice the
//! side length, sharing the grid spacing. Hosts the discrete Fourier machinery
//! for H⁻¹ norms, CGO remainders, and low-pass inversion.
//!
//! Conventions: q̂(η) = ∏h · Σ_x q(x) e^{−iη·x} on the dual lattice
//! η_m = (2π/side)·m (m signed), and Parseval reads ‖q‖²_{L²} = V⁻¹ Σ_η |q̂(η)|².

use crate::error::{LabError, Result};
use crate::grid::{Grid, C64};
use crate::linalg::{fftn, ifftn};
use num_complex::Complex;

#[derive(Debug, Clone, PartialEq)]
pub struct Torus {
    shape: Vec<usize>,
    spacing: Vec<f64>,
}

impl Torus {
    /// Torus enclosing the grid's box with side 2·L_j and the same spacing, so
    /// every interior grid node coincides with a torus node.
    pub fn enclosing(grid: &Grid) -> Self {
        let shape = grid.counts().iter().map(|&n| 2 * (n + 1)).collect();
        Self {
            shape,
            spacing: grid.spacing().to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.shape[axis] as f64 * self.spacing[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.side(a)).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn lin(&self, idx: &[usize]) -> usize {
        let mut out = 0;
        for (k, &i) in idx.iter().enumerate() {
            out = out * self.shape[k] + i;
        }
        out
    }

    /// Physical position of a torus node.
    pub fn position(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.spacing).map(|(&i, &h)| i as f64 * h).collect()
    }

    /// Signed integer index along an axis for a raw FFT index.
    pub fn signed_index(&self, axis: usize, m: usize) -> i64 {
        let n = self.shape[axis];
        if m <= n / 2 {
            m as i64
        } else {
            m as i64 - n as i64
        }
    }

    /// Dual wavenumber component η_a for a raw FFT index along axis a.
    pub fn wavenumber(&self, axis: usize, m: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.side(axis) * self.signed_index(axis, m) as f64
    }

    /// Full wavenumber vector for a raw FFT multi-index.
    pub fn wavevector(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.dim()).map(|a| self.wavenumber(a, idx[a])).collect()
    }

    pub fn iter_multi(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let shape = self.shape.clone();
        let total = self.len();
        (0..total).map(move |mut lin| {
            let mut idx = vec![0usize; shape.len()];
            for k in (0..shape.len()).rev() {
                idx[k] = lin % shape[k];
                lin /= shape[k];
            }
            idx
        })
    }

    /// Zero-pad an interior grid field onto the torus (interior node i ↦ torus
    /// node i+1 per axis).
    pub fn embed_interior(&self, grid: &Grid, field: &[f64]) -> Vec<C64> {
        let mut out = vec![Complex::new(0.0, 0.0); self.len()];
        for (lin, idx) in grid.iter_multi().enumerate() {
            let tidx: Vec<usize> = idx.iter().map(|&i| i + 1).collect();
            out[self.lin(&tidx)] = Complex::new(field[lin], 0.0);
        }
        out
    }

    /// Restrict a torus field to the interior grid nodes (real part).
    pub fn restrict_to_grid(&self, grid: &Grid, field: &[C64]) -> Vec<f64> {
        grid.iter_multi()
            .map(|idx| {
                let tidx: Vec<usize> = idx.iter().map(|&i| i + 1).collect();
                field[self.lin(&tidx)].re
            })
            .collect()
    }

    /// Forward transform: q̂(η_m) = ∏h · FFT[q]_m.
    pub fn dft(&self, field: &[C64]) -> Vec<C64> {
        let mut hat = field.to_vec();
        fftn(&mut hat, &self.shape);
        let w = self.cell_volume();
        for v in hat.iter_mut() {
            *v *= w;
        }
        hat
    }

    /// Inverse of [`dft`]: nodal values from spectral samples.
    pub fn idft(&self, hat: &[C64]) -> Vec<C64> {
        let mut out = hat.to_vec();
        ifftn(&mut out, &self.shape);
        let w = 1.0 / self.cell_volume();
        for v in out.iter_mut() {
            *v *= w;
        }
        out
    }

    /// Discrete L² norm of a torus field.
    pub fn l2_norm(&self, field: &[C64]) -> f64 {
        (field.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_volume()).sqrt()
    }

    /// H⁻¹ norm with the Fourier weight (1+|η|²)⁻¹.
    pub fn h_minus1_norm(&self, field: &[C64]) -> f64 {
        let hat = self.dft(field);
        let mut acc = 0.0;
        for (lin, idx) in self.iter_multi().enumerate() {
            let eta = self.wavevector(&idx);
            let eta2: f64 = eta.iter().map(|x| x * x).sum();
            acc += hat[lin].norm_sqr() / (1.0 + eta2);
        }
        (acc / self.volume()).sqrt()
    }

    /// Dual-lattice multi-indices with |η| ≤ radius.
    pub fn modes_within(&self, radius: f64) -> Vec<Vec<i64>> {
        let bounds: Vec<i64> = (0..self.dim())
            .map(|a| (radius * self.side(a) / (2.0 * std::f64::consts::PI)).floor() as i64)
            .collect();
        let mut out = Vec::new();
        let mut idx = vec![0i64; self.dim()];
        fn rec(
            a: usize,
            bounds: &[i64],
            idx: &mut Vec<i64>,
            torus: &Torus,
            radius: f64,
            out: &mut Vec<Vec<i64>>,
        ) {
            if a == bounds.len() {
                let eta2: f64 = idx
                    .iter()
                    .enumerate()
                    .map(|(k, &m)| {
                        let v = 2.0 * std::f64::consts::PI / torus.side(k) * m as f64;
                        v * v
                    })
                    .sum();
                if eta2.sqrt() <= radius + 1e-12 {
                    out.push(idx.clone());
                }
                return;
            }
            for m in -bounds[a]..=bounds[a] {
                idx[a] = m;
                rec(a + 1, bounds, idx, torus, radius, out);
            }
        }
        rec(0, &bounds, &mut idx, self, radius, &mut out);
        out.sort();
        out
    }

    /// Raw FFT index for a signed dual multi-index.
    pub fn fft_index(&self, signed: &[i64]) -> Result<usize> {
        let mut idx = vec![0usize; self.dim()];
        for a in 0..self.dim() {
            let n = self.shape[a] as i64;
            let m = signed[a];
            if m < -(n / 2) || m > n / 2 {
                return Err(LabError::InvalidArgument(format!(
                    "mode {m} outside dual lattice of size {n}"
                )));
            }
            idx[a] = m.rem_euclid(n) as usize;
        }
        Ok(self.lin(&idx))
    }

    /// η vector for a signed dual multi-index.
    pub fn eta_of(&self, signed: &[i64]) -> Vec<f64> {
        (0..self.dim())
            .map(|a| 2.0 * std::f64::consts::PI / self.side(a) * signed[a] as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxDomain;
    use std::f64::consts::PI;

    fn grid3(n: usize) -> Grid {
        Grid::build(BoxDomain::new(&[PI, PI, PI]).unwrap(), &[n, n, n]).unwrap()
    }

    #[test]
    fn enclosing_geometry() {
        let g = grid3(7);
        let t = Torus::enclosing(&g);
        assert_eq!(t.shape(), &[16, 16, 16]);
        assert!((t.side(0) - 2.0 * PI).abs() < 1e-14);
        // grid nodes coincide with torus nodes
        let idx = [2usize, 3, 4];
        let gx = g.position(&idx);
        let tx = t.position(&[3, 4, 5]);
        for (a, b) in gx.iter().zip(&tx) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn parseval_l2() {
        let g = grid3(5);
        let t = Torus::enclosing(&g);
        let f = g.field_from_fn(|x| (x[0] * 1.3).sin() + x[1] * 0.2 - x[2]);
        let tf = t.embed_interior(&g, &f);
        let direct = t.l2_norm(&tf);
        let hat = t.dft(&tf);
        let via_hat = (hat.iter().map(|v| v.norm_sqr()).sum::<f64>() / t.volume()).sqrt();
        assert!((direct - via_hat).abs() < 1e-10 * direct.max(1.0));
    }

    #[test]
    fn pure_mode_h_minus1() {
        // q = cos(eta . x) defined on the whole torus with |eta| = 1:
        // H^{-1} norm = L2 norm / sqrt(2).
        let g = grid3(7);
        let t = Torus::enclosing(&g);
        let f: Vec<C64> = t
            .iter_multi()
            .map(|idx| {
                let x = t.position(&idx);
                Complex::new(x[0].cos(), 0.0)
            })
            .collect();
        let l2 = t.l2_norm(&f);
        let hm1 = t.h_minus1_norm(&f);
        assert!(
            (hm1 - l2 / 2.0_f64.sqrt()).abs() < 1e-10 * l2,
            "hm1={hm1}, l2/sqrt2={}",
            l2 / 2.0_f64.sqrt()
        );
    }

    #[test]
    fn constant_field_h_minus1() {
        let g = grid3(5);
        let t = Torus::enclosing(&g);
        let c = 0.7;
        let f = vec![Complex::new(c, 0.0); t.len()];
        let hm1 = t.h_minus1_norm(&f);
        assert!((hm1 - c * t.volume().sqrt()).abs() < 1e-10);
    }

    #[test]
    fn dft_roundtrip_and_mode_lookup() {
        let g = grid3(5);
        let t = Torus::enclosing(&g);
        let f = g.field_from_fn(|x| (2.0 * x[0]).cos() * (x[1]).sin());
        let tf = t.embed_interior(&g, &f);
        let hat = t.dft(&tf);
        let back = t.idft(&hat);
        for (a, b) in tf.iter().zip(&back) {
            assert!((a - b).norm() < 1e-10);
        }
        // eta lookup consistency
        let modes = t.modes_within(2.0);
        assert!(modes.iter().any(|m| m == &vec![0, 0, 0]));
        assert!(modes.iter().any(|m| m == &vec![-2, 0, 0]));
        assert!(!modes.iter().any(|m| m == &vec![2, 2, 0])); // |eta| = 2.83 > 2
        for m in &modes {
            let i = t.fft_index(m).unwrap();
            let eta = t.eta_of(m);
            let idx = {
                let mut lin = i;
                let mut idx = vec![0usize; 3];
                for k in (0..3).rev() {
                    idx[k] = lin % t.shape()[k];
                    lin /= t.shape()[k];
                }
                idx
            };
            let wv = t.wavevector(&idx);
            for (a, b) in eta.iter().zip(&wv) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
