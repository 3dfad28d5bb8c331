//! Potential reconstruction: the discrete-exact Green/Alessandrini identity,
//! Fourier samples q̂(η) from CGO pairs (oracle route through the torus solver,
//! boundary route through the Dirichlet-data flux pairing), low-pass inversion
//! on the dual lattice with the scale rule s = τ^{2/(n+2)}, and H⁻¹ error
//! metrics.

use crate::bvp::{sbp_flux_pairing, solve_dirichlet, BoundaryField, DirichletSolution};
use crate::cgo::{faddeev_solve, make_xi_pair};
use crate::error::{LabError, Result};
use crate::grid::{BoundaryPatch, RegionPartition, C64};
use crate::spectral::SchrodingerOp;
use crate::torus::Torus;
use num_complex::Complex;
use rayon::prelude::*;

/// Outcome of the discrete Green/Alessandrini identity check.
#[derive(Debug, Clone)]
pub struct IdentityCheck {
    /// Σ (q₁−q₂) u₁ u₂ ∏h over the interior nodes
    pub lhs: C64,
    /// summation-by-parts boundary pairing of the Cauchy data
    pub rhs: C64,
    /// |lhs − rhs| / (|lhs| + |rhs| + ε)
    pub mismatch: f64,
}

fn solution_residual(op: &SchrodingerOp, lambda: f64, sol: &DirichletSolution) -> f64 {
    let grid = op.grid();
    let mut au = vec![Complex::new(0.0, 0.0); sol.interior.len()];
    op.apply_c(&sol.interior, &mut au);
    let mut num = 0.0;
    let mut den = 0.0;
    for (lin, idx) in grid.iter_multi().enumerate() {
        let mut rhs = Complex::new(0.0, 0.0);
        for a in 0..grid.dim() {
            let h2 = grid.spacing()[a] * grid.spacing()[a];
            if idx[a] == 0 {
                rhs += sol.trace.neighbor_of(grid, &idx, a, crate::grid::Side::Lo) / h2;
            }
            if idx[a] + 1 == grid.counts()[a] {
                rhs += sol.trace.neighbor_of(grid, &idx, a, crate::grid::Side::Hi) / h2;
            }
        }
        num += (au[lin] - sol.interior[lin] * lambda - rhs).norm_sqr();
        den += sol.interior[lin].norm_sqr().max(rhs.norm_sqr());
    }
    (num / den.max(1e-300)).sqrt()
}

/// Check Σ_M (q₁−q₂) u₁ u₂ ∏h against the discrete boundary pairing.
///
/// Both fields must be genuine discrete solutions of their respective
/// problems; the identity is then exact up to rounding.
pub fn interior_identity_check(
    op1: &SchrodingerOp,
    op2: &SchrodingerOp,
    lambda: f64,
    u1: &DirichletSolution,
    u2: &DirichletSolution,
) -> Result<IdentityCheck> {
    let grid = op1.grid();
    if solution_residual(op1, lambda, u1) > 1e-8 {
        return Err(LabError::InvalidArgument(
            "u1 is not a discrete solution of the q1 problem".into(),
        ));
    }
    if solution_residual(op2, lambda, u2) > 1e-8 {
        return Err(LabError::InvalidArgument(
            "u2 is not a discrete solution of the q2 problem".into(),
        ));
    }
    let w = grid.cell_volume();
    let q1 = op1.potential().values();
    let q2 = op2.potential().values();
    let mut lhs = Complex::new(0.0, 0.0);
    for i in 0..grid.n_interior() {
        lhs += (q1[i] - q2[i]) * u1.interior[i] * u2.interior[i] * w;
    }
    let rhs = sbp_flux_pairing(grid, &u1.interior, &u1.trace, &u2.interior, &u2.trace);
    let mismatch = (lhs - rhs).norm() / (lhs.norm() + rhs.norm() + f64::EPSILON);
    Ok(IdentityCheck { lhs, rhs, mismatch })
}

/// How a Fourier sample is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Direct interior integration of (q₁−q₂) u₁ u₂ with torus CGOs.
    Oracle,
    /// Flux pairing of the discrete Dirichlet-data difference driven by the
    /// CGO traces (the observable route).
    Boundary,
}

/// One sample of the Fourier transform of q = q₁ − q₂ (zero-extended).
#[derive(Debug, Clone)]
pub struct FourierSample {
    pub mode_index: Vec<i64>,
    pub eta: Vec<f64>,
    pub value: C64,
    /// measured |∫ q ϱ| contribution in oracle mode
    pub remainder: Option<C64>,
    pub tau: f64,
    /// per-sample remainder budget τ⁻¹
    pub budget: f64,
}

/// Shared context for sampling q̂ over many η: the two operators, their
/// zero-extended potentials on the torus, and the CGO parameters.
pub struct CgoSampler<'a> {
    pub op1: &'a SchrodingerOp,
    pub op2: &'a SchrodingerOp,
    pub partition: &'a RegionPartition,
    pub lambda: f64,
    pub tau: f64,
    pub kappa: f64,
    pub seed: u64,
    pub tolerance: f64,
    torus: Torus,
    q1_torus: Vec<f64>,
    q2_torus: Vec<f64>,
}

impl<'a> CgoSampler<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        op1: &'a SchrodingerOp,
        op2: &'a SchrodingerOp,
        partition: &'a RegionPartition,
        lambda: f64,
        tau: f64,
        kappa: f64,
        seed: u64,
        tolerance: f64,
    ) -> Result<Self> {
        let grid = op1.grid();
        if grid.dim() != 3 {
            return Err(LabError::InvalidArgument(
                "Fourier sampling requires n = 3".into(),
            ));
        }
        let varpi = kappa.max(1.0);
        if tau <= 2.0 * varpi {
            return Err(LabError::InvalidArgument(format!(
                "tau = {tau} must exceed 2 varpi = {}",
                2.0 * varpi
            )));
        }
        // q₁ = q₂ on M₁ (difference supported in Int(M₀))
        for (i, m1) in partition.m1_mask().iter().enumerate() {
            if *m1 {
                let d = (op1.potential().values()[i] - op2.potential().values()[i]).abs();
                if d > 1e-14 {
                    return Err(LabError::InvalidArgument(format!(
                        "q1 - q2 = {d:.3e} at an M1 node: difference must be supported in M0"
                    )));
                }
            }
        }
        let torus = Torus::enclosing(grid);
        let embed = |op: &SchrodingerOp| -> Vec<f64> {
            torus
                .embed_interior(grid, op.potential().values())
                .iter()
                .map(|v| v.re)
                .collect()
        };
        Ok(Self {
            q1_torus: embed(op1),
            q2_torus: embed(op2),
            op1,
            op2,
            partition,
            lambda,
            tau,
            kappa,
            seed,
            tolerance,
            torus,
        })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    fn mode_seed(&self, mode_index: &[i64]) -> u64 {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for &m in mode_index {
            h = h
                .wrapping_mul(0x100_0000_01b3)
                .wrapping_add(m.unsigned_abs() ^ ((m < 0) as u64) << 63);
        }
        h
    }

    /// Sample q̂(η) for one signed dual-lattice index.
    pub fn sample(&self, mode_index: &[i64], mode: SampleMode) -> Result<FourierSample> {
        let eta = self.torus.eta_of(mode_index);
        let dirs = make_xi_pair(
            &eta,
            self.tau,
            self.lambda,
            self.mode_seed(mode_index),
            self.kappa,
            self.lambda.min(1.0),
        )?;
        let grid = self.op1.grid();
        let w = grid.cell_volume();
        match mode {
            SampleMode::Oracle => {
                let sol1 = faddeev_solve(&self.torus, &self.q1_torus, &dirs.xi1, self.tolerance)?;
                let sol2 = faddeev_solve(&self.torus, &self.q2_torus, &dirs.xi2, self.tolerance)?;
                // u₁u₂ = e^{−iη·x}(1 + w₁ + w₂ + w₁w₂): the growth cancels
                let mut value = Complex::new(0.0, 0.0);
                let mut remainder = Complex::new(0.0, 0.0);
                for &lin in self.partition.m0_nodes() {
                    let dq = self.op1.potential().values()[lin] - self.op2.potential().values()[lin];
                    if dq == 0.0 {
                        continue;
                    }
                    let idx = grid.multi(lin);
                    let tidx: Vec<usize> = idx.iter().map(|&i| i + 1).collect();
                    let x = grid.position(&idx);
                    let phase: f64 = eta.iter().zip(&x).map(|(e, xi)| e * xi).sum();
                    let osc = Complex::new(0.0, -phase).exp();
                    let w1 = sol1.w[self.torus.lin(&tidx)];
                    let w2 = sol2.w[self.torus.lin(&tidx)];
                    let rho = osc * (w1 + w2 + w1 * w2);
                    value += dq * (osc + rho) * w;
                    remainder += dq * rho * w;
                }
                Ok(FourierSample {
                    mode_index: mode_index.to_vec(),
                    eta,
                    value,
                    remainder: Some(remainder),
                    tau: self.tau,
                    budget: 1.0 / self.tau,
                })
            }
            SampleMode::Boundary => {
                // traces of the torus CGOs on ∂M
                let full = BoundaryPatch::full_boundary(grid);
                let sol1 = faddeev_solve(&self.torus, &self.q1_torus, &dirs.xi1, self.tolerance)?;
                let sol2 = faddeev_solve(&self.torus, &self.q2_torus, &dirs.xi2, self.tolerance)?;
                let trace_of = |sol: &crate::cgo::CgoSolution| -> BoundaryField {
                    let values = full
                        .nodes()
                        .iter()
                        .map(|node| {
                            let x = node.position(grid);
                            let tidx: Vec<usize> = x
                                .iter()
                                .zip(self.torus.spacing())
                                .map(|(&xi, &h)| (xi / h).round() as usize)
                                .collect();
                            sol.u_at(&self.torus, &tidx)
                        })
                        .collect();
                    BoundaryField::new(grid, full.clone(), values).expect("finite trace")
                };
                let phi1 = trace_of(&sol1);
                let phi2 = trace_of(&sol2);
                // w = u_{q1}(φ₁) − u_{q2}(φ₁): zero trace, carries the
                // Dirichlet-data difference of the two potentials
                let hat1 = solve_dirichlet(self.op1, self.lambda, &phi1)?;
                let tld1 = solve_dirichlet(self.op2, self.lambda, &phi1)?;
                let hat2 = solve_dirichlet(self.op2, self.lambda, &phi2)?;
                let diff: Vec<C64> = hat1
                    .interior
                    .iter()
                    .zip(&tld1.interior)
                    .map(|(a, b)| a - b)
                    .collect();
                let zero_trace = crate::bvp::FaceValues::zeros(grid);
                let value = sbp_flux_pairing(grid, &diff, &zero_trace, &hat2.interior, &hat2.trace);
                Ok(FourierSample {
                    mode_index: mode_index.to_vec(),
                    eta,
                    value,
                    remainder: None,
                    tau: self.tau,
                    budget: 1.0 / self.tau,
                })
            }
        }
    }

    /// Sample every dual-lattice mode with |η| ≤ s, enforcing conjugate
    /// symmetry by averaging the ±η pair.
    pub fn sample_set(&self, s: f64, mode: SampleMode) -> Result<FourierSampleSet> {
        let modes = self.torus.modes_within(s);
        // canonical representatives of the ± pairs
        let reps: Vec<Vec<i64>> = modes
            .iter()
            .filter(|m| {
                let neg: Vec<i64> = m.iter().map(|&v| -v).collect();
                **m >= neg
            })
            .cloned()
            .collect();
        let sampled: Result<Vec<(Vec<i64>, FourierSample, Option<FourierSample>)>> = reps
            .par_iter()
            .map(|m| {
                let plus = self.sample(m, mode)?;
                let neg: Vec<i64> = m.iter().map(|&v| -v).collect();
                let minus = if neg == *m {
                    None
                } else {
                    Some(self.sample(&neg, mode)?)
                };
                Ok((m.clone(), plus, minus))
            })
            .collect();
        let mut entries = Vec::new();
        for (m, plus, minus) in sampled? {
            match minus {
                None => {
                    // self-conjugate mode: enforce a real value
                    let mut p = plus;
                    p.value = Complex::new(p.value.re, 0.0);
                    entries.push(p);
                }
                Some(minus) => {
                    let avg = (plus.value + minus.value.conj()) / 2.0;
                    let mut p = plus;
                    p.value = avg;
                    let mut q = minus;
                    q.value = avg.conj();
                    let _ = m;
                    entries.push(p);
                    entries.push(q);
                }
            }
        }
        entries.sort_by(|a, b| a.mode_index.cmp(&b.mode_index));
        Ok(FourierSampleSet {
            entries,
            tau: self.tau,
            s,
            lambda: self.lambda,
        })
    }
}

/// Low-pass set of Fourier samples on the dual lattice.
#[derive(Debug, Clone)]
pub struct FourierSampleSet {
    pub entries: Vec<FourierSample>,
    pub tau: f64,
    pub s: f64,
    pub lambda: f64,
}

impl FourierSampleSet {
    /// Largest conjugate-symmetry defect max |q̂(η) − conj(q̂(−η))|.
    pub fn symmetry_defect(&self) -> f64 {
        let mut lookup = std::collections::HashMap::new();
        for e in &self.entries {
            lookup.insert(e.mode_index.clone(), e.value);
        }
        let mut worst = 0.0f64;
        for e in &self.entries {
            let neg: Vec<i64> = e.mode_index.iter().map(|&v| -v).collect();
            if let Some(v) = lookup.get(&neg) {
                worst = worst.max((e.value - v.conj()).norm());
            }
        }
        worst
    }
}

/// Invert the low-pass samples by the inverse DFT on the torus: modes with
/// |η| ≤ s carry the sampled values, everything else is zero. Returns the real
/// part and the imaginary residue.
pub fn lowpass_invert(samples: &FourierSampleSet, torus: &Torus) -> Result<(Vec<f64>, f64)> {
    if samples.entries.is_empty() {
        return Err(LabError::InvalidArgument("empty sample set".into()));
    }
    let mut hat = vec![Complex::new(0.0, 0.0); torus.len()];
    for e in &samples.entries {
        let idx = torus.fft_index(&e.mode_index)?;
        hat[idx] = e.value;
    }
    let nodal = torus.idft(&hat);
    let imag_residue = nodal.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    Ok((nodal.iter().map(|v| v.re).collect(), imag_residue))
}

/// Absolute and relative H⁻¹ errors of a reconstruction on the torus.
pub fn h_minus1_error(
    torus: &Torus,
    q_rec: &[f64],
    q_true: &[f64],
) -> (f64, Option<f64>) {
    let diff: Vec<C64> = q_rec
        .iter()
        .zip(q_true)
        .map(|(a, b)| Complex::new(a - b, 0.0))
        .collect();
    let abs = torus.h_minus1_norm(&diff);
    let base: Vec<C64> = q_true.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let denom = torus.h_minus1_norm(&base);
    let rel = if denom > 0.0 { Some(abs / denom) } else { None };
    (abs, rel)
}

/// Scale choice s = τ^{2/(n+2)} and the diagnostic ε-schedule
/// ε = [τ^{−4/(n+2)} e^{−ϰτ}]^{1/β} when fitted constants are available.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleChoice {
    pub s: f64,
    pub epsilon: Option<f64>,
    pub fitted: bool,
}

pub fn choose_scales(tau: f64, n: usize, fitted: Option<(f64, f64)>) -> Result<ScaleChoice> {
    if tau <= 1.0 {
        return Err(LabError::InvalidArgument(format!(
            "tau = {tau} must exceed 1"
        )));
    }
    if n < 3 {
        return Err(LabError::InvalidArgument(format!(
            "scale rule needs n >= 3, got {n}"
        )));
    }
    let s = tau.powf(2.0 / (n as f64 + 2.0));
    let epsilon = fitted.map(|(kappa_growth, beta)| {
        (tau.powf(-4.0 / (n as f64 + 2.0)) * (-kappa_growth * tau).exp()).powf(1.0 / beta)
    });
    Ok(ScaleChoice {
        s,
        epsilon,
        fitted: fitted.is_some(),
    })
}
