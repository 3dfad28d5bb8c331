//! Discrete boundary Sobolev norms and the partial boundary operator maps:
//! Λ⁰: H^{3/2}_Γ → L²(Σ) and Λ¹: H^{3/2}(∂M) → L²(Σ) for the Dirichlet
//! problem, 𝒩⁰: H^{1/2}_Γ → H¹(Σ) and 𝒩¹: H^{1/2}(∂M) → H¹(Σ) for the
//! impedance problem, together with weighted operator norms and the Lipschitz
//! continuity probe of q ↦ Λ⁰.
//!
//! Fractional norms are realized spectrally in the per-face eigenbasis of the
//! transverse graph Laplacian DᵀD (cosine-type, Neumann ends), which keeps the
//! weights diagonal and makes ‖f‖²_{H¹} literally equal the quadrature L² norm
//! plus the edge-difference energy.

use crate::bvp::{
    neumann_trace, solve_dirichlet_with, BoundaryField, ImpedanceSolver, ImpedanceSpec,
};
use crate::error::{LabError, Result};
use crate::grid::{boundary_window, BoundaryPatch, FacePart, Grid, C64};
use crate::spectral::{amplification, SchrodingerOp};
use num_complex::Complex;
use rayon::prelude::*;

/// 1D transverse eigenbasis: graph Laplacian DᵀD on m nodes with spacing h.
fn chain_eigenbasis(m: usize, h: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut t = nalgebra::DMatrix::zeros(m, m);
    let w = 1.0 / (h * h);
    for i in 0..m {
        let mut d = 0.0;
        if i > 0 {
            t[(i, i - 1)] = -w;
            d += w;
        }
        if i + 1 < m {
            t[(i, i + 1)] = -w;
            d += w;
        }
        t[(i, i)] = d;
    }
    let se = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let vals = order.iter().map(|&j| se.eigenvalues[j].max(0.0)).collect();
    let vecs = order
        .iter()
        .map(|&j| se.eigenvectors.column(j).iter().cloned().collect())
        .collect();
    (vals, vecs)
}

struct PartBasis {
    /// per transverse axis: (eigenvalues, ℓ²-orthonormal eigenvectors)
    axes: Vec<(Vec<f64>, Vec<Vec<f64>>)>,
    /// transverse node counts of the part
    lens: Vec<usize>,
    /// quadrature weight of one node
    node_weight: f64,
    /// node offset of this part within the patch enumeration
    offset: usize,
}

impl PartBasis {
    fn size(&self) -> usize {
        self.lens.iter().product()
    }

    fn multi(&self, mut j: usize) -> Vec<usize> {
        let mut out = vec![0; self.lens.len()];
        for k in (0..self.lens.len()).rev() {
            out[k] = j % self.lens[k];
            j /= self.lens[k];
        }
        out
    }

    fn nu(&self, j: usize) -> f64 {
        self.multi(j)
            .iter()
            .enumerate()
            .map(|(k, &jk)| self.axes[k].0[jk])
            .sum()
    }

    /// Value of basis function j at part-local node index i (both row-major),
    /// normalized to the weighted inner product.
    fn value(&self, j: usize, i: usize) -> f64 {
        let jm = self.multi(j);
        let im = self.multi(i);
        let mut v = 1.0;
        for k in 0..self.lens.len() {
            v *= self.axes[k].1[jm[k]][im[k]];
        }
        v / self.node_weight.sqrt()
    }
}

/// Per-face (and per-part) spectral basis of a boundary patch with the
/// Sobolev weights (1 + ν)^s.
pub struct BoundarySobolev {
    patch: BoundaryPatch,
    parts: Vec<PartBasis>,
    n_nodes: usize,
}

impl BoundarySobolev {
    pub fn new(grid: &Grid, patch: &BoundaryPatch) -> Self {
        let mut parts = Vec::new();
        let mut offset = 0;
        for p in patch.parts() {
            let t_axes: Vec<usize> = (0..grid.dim()).filter(|&k| k != p.axis).collect();
            let lens: Vec<usize> = p.t_ranges.iter().map(|&(a, b)| b - a + 1).collect();
            let axes = t_axes
                .iter()
                .zip(&lens)
                .map(|(&k, &m)| chain_eigenbasis(m, grid.spacing()[k]))
                .collect();
            let node_weight: f64 = t_axes.iter().map(|&k| grid.spacing()[k]).product();
            let size: usize = lens.iter().product();
            parts.push(PartBasis {
                axes,
                lens,
                node_weight,
                offset,
            });
            offset += size;
        }
        Self {
            patch: patch.clone(),
            parts,
            n_nodes: offset,
        }
    }

    pub fn patch(&self) -> &BoundaryPatch {
        &self.patch
    }

    /// Total basis size (equals the node count: the basis is complete).
    pub fn len(&self) -> usize {
        self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        self.n_nodes == 0
    }

    /// Eigenvalue ν of global basis index j.
    pub fn nu(&self, j: usize) -> f64 {
        let (p, local) = self.locate(j);
        self.parts[p].nu(local)
    }

    fn locate(&self, j: usize) -> (usize, usize) {
        for (pi, p) in self.parts.iter().enumerate() {
            if j < p.offset + p.size() {
                return (pi, j - p.offset);
            }
        }
        panic!("basis index {j} out of range {}", self.n_nodes);
    }

    /// Nodal values of basis function j on the patch.
    pub fn basis_values(&self, j: usize) -> Vec<f64> {
        let (pi, local) = self.locate(j);
        let mut out = vec![0.0; self.n_nodes];
        let p = &self.parts[pi];
        for i in 0..p.size() {
            out[p.offset + i] = p.value(local, i);
        }
        out
    }

    /// Indices of basis functions whose per-axis mode index stays below
    /// `max_modes_per_axis` (all of them when `None`).
    pub fn truncated_indices(&self, max_modes_per_axis: Option<usize>) -> Vec<usize> {
        match max_modes_per_axis {
            None => (0..self.n_nodes).collect(),
            Some(limit) => {
                let mut out = Vec::new();
                for (pi, p) in self.parts.iter().enumerate() {
                    for local in 0..p.size() {
                        if p.multi(local).iter().all(|&jk| jk < limit) {
                            out.push(self.parts[pi].offset + local);
                        }
                    }
                }
                out
            }
        }
    }

    /// Coefficients ⟨f, b_j⟩_w of a complex nodal field on the patch.
    pub fn analyze(&self, values: &[C64]) -> Vec<C64> {
        assert_eq!(values.len(), self.n_nodes);
        let mut out = vec![Complex::new(0.0, 0.0); self.n_nodes];
        for p in &self.parts {
            let size = p.size();
            for j in 0..size {
                let mut acc = Complex::new(0.0, 0.0);
                for i in 0..size {
                    acc += values[p.offset + i] * p.value(j, i) * p.node_weight;
                }
                out[p.offset + j] = acc;
            }
        }
        out
    }

    /// Nodal field Σ c_j b_j from coefficients.
    pub fn synthesize(&self, grid: &Grid, coeffs: &[f64]) -> BoundaryField {
        assert_eq!(coeffs.len(), self.n_nodes);
        let mut values = vec![Complex::new(0.0, 0.0); self.n_nodes];
        for p in &self.parts {
            let size = p.size();
            for i in 0..size {
                let mut acc = 0.0;
                for j in 0..size {
                    acc += coeffs[p.offset + j] * p.value(j, i);
                }
                values[p.offset + i] = Complex::new(acc, 0.0);
            }
        }
        BoundaryField::new(grid, self.patch.clone(), values).expect("finite synthesis")
    }

    /// Spectral Sobolev norm of order s: ‖f‖² = Σ (1+ν_j)^s |⟨f, b_j⟩|².
    pub fn norm(&self, grid: &Grid, field: &BoundaryField, s: f64) -> f64 {
        assert_eq!(field.patch(), &self.patch, "field/basis patch mismatch");
        let _ = grid;
        let coeffs = self.analyze(field.values());
        coeffs
            .iter()
            .enumerate()
            .map(|(j, cj)| (1.0 + self.nu(j)).powf(s) * cj.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Which boundary operator a map realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    /// Dirichlet partial map on windowed Γ data, outputs in L²(Σ).
    Lambda0,
    /// Dirichlet map on full-boundary data, outputs in L²(Σ).
    Lambda1,
    /// Impedance partial map on windowed Γ data, outputs in H¹(Σ).
    ImpedanceN0,
    /// Impedance map on full-boundary data, outputs in H¹(Σ).
    ImpedanceN1,
}

impl MapKind {
    pub fn domain_order(self) -> f64 {
        match self {
            MapKind::Lambda0 | MapKind::Lambda1 => 1.5,
            MapKind::ImpedanceN0 | MapKind::ImpedanceN1 => 0.5,
        }
    }

    pub fn codomain_order(self) -> f64 {
        match self {
            MapKind::Lambda0 | MapKind::Lambda1 => 0.0,
            MapKind::ImpedanceN0 | MapKind::ImpedanceN1 => 1.0,
        }
    }

    pub fn is_windowed(self) -> bool {
        matches!(self, MapKind::Lambda0 | MapKind::ImpedanceN0)
    }
}

/// H^s-orthonormal domain basis: either the scaled full-boundary eigenbasis or
/// the ψ∂-windowed Γ basis re-orthonormalized in H^s(∂M).
pub struct DtnDomain {
    pub patch: BoundaryPatch,
    pub order: f64,
    /// Columns of nodal values on `patch`, orthonormal in H^s(∂M).
    pub columns: Vec<Vec<f64>>,
}

impl DtnDomain {
    /// Unwindowed basis on `patch` (full boundary for Λ¹/𝒩¹), scaled to
    /// H^s-orthonormality.
    pub fn plain(
        grid: &Grid,
        patch: &BoundaryPatch,
        order: f64,
        max_modes_per_axis: Option<usize>,
    ) -> Self {
        let sob = BoundarySobolev::new(grid, patch);
        let idx = sob.truncated_indices(max_modes_per_axis);
        let columns = idx
            .iter()
            .map(|&j| {
                let scale = (1.0 + sob.nu(j)).powf(-order / 2.0);
                sob.basis_values(j).into_iter().map(|v| v * scale).collect()
            })
            .collect();
        Self {
            patch: patch.clone(),
            order,
            columns,
        }
    }

    /// ψ∂-windowed Γ basis, re-orthonormalized in H^s(∂M); the concrete
    /// realization of the quotient space E/F.
    pub fn windowed(
        grid: &Grid,
        gamma0: &BoundaryPatch,
        gamma: &BoundaryPatch,
        order: f64,
        max_modes_per_axis: Option<usize>,
    ) -> Result<Self> {
        let window = boundary_window(grid, gamma0, gamma)?;
        let sob = BoundarySobolev::new(grid, gamma);
        let idx = sob.truncated_indices(max_modes_per_axis);
        let raw: Vec<Vec<f64>> = idx
            .iter()
            .map(|&j| {
                sob.basis_values(j)
                    .into_iter()
                    .zip(&window)
                    .map(|(v, w)| v * w)
                    .collect()
            })
            .collect();
        // Gram matrix in H^s(∂M): fields supported on Γ's faces, so the
        // block-diagonal per-face realization reduces to the full-face bases.
        let face_patches: Vec<BoundaryPatch> = gamma
            .parts()
            .iter()
            .map(|p| BoundaryPatch::face(grid, p.axis, p.side).expect("face patch"))
            .collect();
        let face_sobs: Vec<BoundarySobolev> = face_patches
            .iter()
            .map(|fp| BoundarySobolev::new(grid, fp))
            .collect();
        // scatter each raw column to the face node sets
        let gamma_nodes = gamma.nodes();
        let mut scattered: Vec<Vec<Vec<C64>>> = Vec::with_capacity(raw.len());
        for col in &raw {
            let mut per_face: Vec<Vec<C64>> = face_patches
                .iter()
                .map(|fp| vec![Complex::new(0.0, 0.0); fp.n_nodes()])
                .collect();
            for (val, node) in col.iter().zip(&gamma_nodes) {
                for (fi, fp) in face_patches.iter().enumerate() {
                    let part = &fp.parts()[0];
                    if part.axis == node.axis && part.side == node.side {
                        // full-face row-major index of the node
                        let mut lin = 0;
                        for (k, &i) in node.t_idx.iter().enumerate() {
                            let (a, b) = part.t_ranges[k];
                            debug_assert!(i >= a && i <= b);
                            lin = lin * (b - a + 1) + (i - a);
                        }
                        per_face[fi][lin] = Complex::new(*val, 0.0);
                        break;
                    }
                }
            }
            scattered.push(per_face);
        }
        // weighted coefficients per face, then the Gram matrix
        let weights: Vec<Vec<f64>> = face_sobs
            .iter()
            .map(|fs| (0..fs.len()).map(|j| (1.0 + fs.nu(j)).powf(order)).collect())
            .collect();
        let coeffs: Vec<Vec<Vec<C64>>> = scattered
            .iter()
            .map(|per_face| {
                per_face
                    .iter()
                    .zip(&face_sobs)
                    .map(|(vals, fs)| fs.analyze(vals))
                    .collect()
            })
            .collect();
        let m = raw.len();
        let mut gram = nalgebra::DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let mut acc = 0.0;
                for (fi, w) in weights.iter().enumerate() {
                    for (k, wk) in w.iter().enumerate() {
                        acc += wk * (coeffs[i][fi][k].re * coeffs[j][fi][k].re);
                    }
                }
                gram[(i, j)] = acc;
                gram[(j, i)] = acc;
            }
        }
        let se = gram.symmetric_eigen();
        let gmax = se.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        if gmax <= 0.0 {
            return Err(LabError::Degenerate(
                "windowed boundary basis is identically zero".into(),
            ));
        }
        let mut columns = Vec::new();
        for j in 0..m {
            let g = se.eigenvalues[j];
            if g <= 1e-20 * gmax {
                continue;
            }
            let scale = 1.0 / g.sqrt();
            let mut col = vec![0.0; gamma_nodes.len()];
            for i in 0..m {
                let c = se.eigenvectors[(i, j)] * scale;
                if c != 0.0 {
                    col.iter_mut().zip(&raw[i]).for_each(|(o, v)| *o += c * v);
                }
            }
            columns.push(col);
        }
        Ok(Self {
            patch: gamma.clone(),
            order,
            columns,
        })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn field(&self, grid: &Grid, j: usize) -> BoundaryField {
        BoundaryField::new(
            grid,
            self.patch.clone(),
            self.columns[j].iter().map(|&v| Complex::new(v, 0.0)).collect(),
        )
        .expect("finite domain column")
    }

    /// Nodal field for a coefficient vector in the orthonormal domain basis.
    pub fn field_from_coeffs(&self, grid: &Grid, coeffs: &[C64]) -> BoundaryField {
        assert_eq!(coeffs.len(), self.columns.len());
        let n = self.patch.n_nodes();
        let mut vals = vec![Complex::new(0.0, 0.0); n];
        for (c, col) in coeffs.iter().zip(&self.columns) {
            for (o, v) in vals.iter_mut().zip(col) {
                *o += c * v;
            }
        }
        BoundaryField::new(grid, self.patch.clone(), vals).expect("finite synthesis")
    }
}

/// Discrete boundary operator map: columns are the responses (nodal values on
/// Σ) to the H^{s_in}-orthonormal domain basis; norms are taken with the
/// (1+ν)^{s_out} weights on Σ.
pub struct BoundaryOperatorMap {
    pub kind: MapKind,
    pub sigma: BoundaryPatch,
    /// columns[j][node] = response of domain basis j at the Σ node.
    pub columns: Vec<Vec<C64>>,
    out_sobolev: BoundarySobolev,
}

impl BoundaryOperatorMap {
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Pointwise difference of two maps sharing domain and codomain.
    pub fn difference(&self, other: &BoundaryOperatorMap) -> Result<BoundaryOperatorMap> {
        if self.kind != other.kind
            || self.sigma != other.sigma
            || self.columns.len() != other.columns.len()
        {
            return Err(LabError::InvalidArgument(
                "maps are not comparable (kind/patch/domain mismatch)".into(),
            ));
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok(BoundaryOperatorMap {
            kind: self.kind,
            sigma: self.sigma.clone(),
            columns,
            out_sobolev: BoundarySobolev::new_like(&self.out_sobolev),
        })
    }

    /// Apply to a coefficient vector in the domain basis: nodal values on Σ.
    pub fn apply_coeffs(&self, coeffs: &[C64]) -> Vec<C64> {
        assert_eq!(coeffs.len(), self.columns.len());
        let n = self.sigma.n_nodes();
        let mut out = vec![Complex::new(0.0, 0.0); n];
        for (c, col) in coeffs.iter().zip(&self.columns) {
            for (o, v) in out.iter_mut().zip(col) {
                *o += c * v;
            }
        }
        out
    }

    /// Weighted coefficient matrix (1+ν)^{s_out/2} Φᵀ_w M whose largest
    /// singular value is the operator norm.
    pub fn weighted_matrix(&self) -> nalgebra::DMatrix<C64> {
        let rows = self.out_sobolev.len();
        let cols = self.columns.len();
        let s_out = self.kind.codomain_order();
        let mut m = nalgebra::DMatrix::zeros(rows, cols);
        for (j, col) in self.columns.iter().enumerate() {
            let coeffs = self.out_sobolev.analyze(col);
            for (k, c) in coeffs.iter().enumerate() {
                let w = (1.0 + self.out_sobolev.nu(k)).powf(s_out / 2.0);
                m[(k, j)] = c * w;
            }
        }
        m
    }
}

/// Operator norm: largest singular value of the weighted coefficient matrix
/// (domain coordinates are H^{s_in}-orthonormal by construction, so the
/// W_in^{-1/2} factor is the identity).
pub fn operator_norm(map: &BoundaryOperatorMap) -> f64 {
    let m = map.weighted_matrix();
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

impl BoundarySobolev {
    fn new_like(other: &BoundarySobolev) -> BoundarySobolev {
        // parts are immutable and cheap to rebuild from the stored data
        BoundarySobolev {
            patch: other.patch.clone(),
            parts: other
                .parts
                .iter()
                .map(|p| PartBasis {
                    axes: p.axes.clone(),
                    lens: p.lens.clone(),
                    node_weight: p.node_weight,
                    offset: p.offset,
                })
                .collect(),
            n_nodes: other.n_nodes,
        }
    }
}

/// Assemble Λ⁰ or Λ¹ for (q, λ): column j = ∂_ν u_{q,λ}(basis_j)|Σ.
pub fn assemble_dtn(
    op: &SchrodingerOp,
    lambda: f64,
    kind: MapKind,
    domain: &DtnDomain,
    sigma: &BoundaryPatch,
) -> Result<BoundaryOperatorMap> {
    if !matches!(kind, MapKind::Lambda0 | MapKind::Lambda1) {
        return Err(LabError::InvalidArgument(
            "assemble_dtn only builds Dirichlet maps".into(),
        ));
    }
    op.guard(lambda)?;
    let grid = op.grid();
    let solver = op.shifted_solver(lambda);
    let columns: Result<Vec<Vec<C64>>> = (0..domain.len())
        .into_par_iter()
        .map(|j| {
            let phi = domain.field(grid, j);
            let sol = solve_dirichlet_with(op, &solver, &phi)?;
            let tr = neumann_trace(grid, &sol.interior, &sol.trace, sigma)?;
            Ok(tr.values().to_vec())
        })
        .collect();
    Ok(BoundaryOperatorMap {
        kind,
        sigma: sigma.clone(),
        columns: columns?,
        out_sobolev: BoundarySobolev::new(grid, sigma),
    })
}

/// Assemble 𝒩⁰ or 𝒩¹ for (q, spec): column j = u⁺_{q,μ}(0, basis_j)|Σ.
pub fn assemble_impedance_map(
    op: &SchrodingerOp,
    spec: &ImpedanceSpec,
    kind: MapKind,
    domain: &DtnDomain,
    sigma: &BoundaryPatch,
) -> Result<BoundaryOperatorMap> {
    if !matches!(kind, MapKind::ImpedanceN0 | MapKind::ImpedanceN1) {
        return Err(LabError::InvalidArgument(
            "assemble_impedance_map only builds impedance maps".into(),
        ));
    }
    let grid = op.grid();
    let solver = ImpedanceSolver::new(op, spec.clone())?;
    let zero_f = vec![Complex::new(0.0, 0.0); grid.n_interior()];
    let sigma_nodes = sigma.nodes();
    let columns: Result<Vec<Vec<C64>>> = (0..domain.len())
        .into_par_iter()
        .map(|j| {
            let phi = domain.field(grid, j);
            let sol = solver.solve(&zero_f, &phi)?;
            Ok(sigma_nodes.iter().map(|n| sol.boundary.get(n)).collect())
        })
        .collect();
    Ok(BoundaryOperatorMap {
        kind,
        sigma: sigma.clone(),
        columns: columns?,
        out_sobolev: BoundarySobolev::new(grid, sigma),
    })
}

/// Lipschitz probe of q ↦ Λ⁰: ‖Λ⁰_{q₁} − Λ⁰_{q₂}‖ / (λ² e_λ² ‖q₁ − q₂‖_∞).
pub struct LipschitzProbe {
    pub lambda: f64,
    pub map_norm: f64,
    pub dq_sup: f64,
    pub e_lambda: f64,
    pub ratio: f64,
}

pub fn lipschitz_probe(
    op1: &SchrodingerOp,
    op2: &SchrodingerOp,
    lambda: f64,
    domain: &DtnDomain,
    sigma: &BoundaryPatch,
) -> Result<LipschitzProbe> {
    let dq_sup = op1
        .potential()
        .values()
        .iter()
        .zip(op2.potential().values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if dq_sup == 0.0 {
        return Err(LabError::Degenerate(
            "lipschitz probe needs q1 != q2".into(),
        ));
    }
    let m1 = assemble_dtn(op1, lambda, MapKind::Lambda0, domain, sigma)?;
    let m2 = assemble_dtn(op2, lambda, MapKind::Lambda0, domain, sigma)?;
    let diff = m1.difference(&m2)?;
    let map_norm = operator_norm(&diff);
    let s1 = op1.guard(lambda)?;
    let s2 = op2.guard(lambda)?;
    let factors = amplification(lambda, &[s1.as_ref(), s2.as_ref()], lambda.min(1.0))?;
    let ratio = map_norm / (lambda * lambda * factors.e * factors.e * dq_sup);
    Ok(LipschitzProbe {
        lambda,
        map_norm,
        dq_sup,
        e_lambda: factors.e,
        ratio,
    })
}

/// Standard partial-data geometry on a box: Γ is one face shrunk by `inset`
/// node layers and Γ₀ shrinks Γ by another `inset` layers.
pub fn default_gamma_pair(
    grid: &Grid,
    axis: usize,
    side: crate::grid::Side,
    inset: usize,
) -> Result<(BoundaryPatch, BoundaryPatch)> {
    let t_axes: Vec<usize> = (0..grid.dim()).filter(|&k| k != axis).collect();
    let mk = |layers: usize| -> Result<BoundaryPatch> {
        let t_ranges = t_axes
            .iter()
            .map(|&k| {
                let n = grid.counts()[k];
                if 2 * layers + 1 > n {
                    return Err(LabError::InvalidPatch(format!(
                        "inset {layers} too large for axis {k} with N={n}"
                    )));
                }
                Ok((layers, n - 1 - layers))
            })
            .collect::<Result<Vec<_>>>()?;
        BoundaryPatch::from_parts(
            grid,
            vec![FacePart {
                axis,
                side,
                t_ranges,
            }],
        )
    };
    Ok((mk(2 * inset)?, mk(inset)?))
}
