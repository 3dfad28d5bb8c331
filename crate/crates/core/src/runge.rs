//! Quantitative Runge approximation: the restriction operator T from windowed
//! Γ-boundary data to solutions on M₀, its weighted SVD, threshold truncation
//! φ_t = Σ_{τ_j > t} τ_j⁻¹ a_j ψ_j, and the error-versus-cost trade-off curve.
//! A Dirichlet and an impedance variant share the machinery.

use crate::boundary::DtnDomain;
use crate::bvp::{solve_dirichlet_with, BoundaryField, ImpedanceSolver, ImpedanceSpec};
use crate::error::{LabError, Result};
use crate::grid::{RegionPartition, C64};
use crate::spectral::{sobolev_norm_c, SchrodingerOp};
use num_complex::Complex;

/// Which forward problem feeds the restriction operator.
pub enum RungeKind {
    /// Dirichlet data channel at frequency² λ.
    Dirichlet { lambda: f64 },
    /// Impedance data channel u⁺(0, ψ f).
    Impedance { spec: ImpedanceSpec },
}

/// Restriction operator context: domain realization of E/F plus the solver.
pub struct RungeSetup<'a> {
    pub op: &'a SchrodingerOp,
    pub partition: &'a RegionPartition,
    pub domain: DtnDomain,
    pub kind: RungeKind,
}

/// The assembled matrix of T: columns are solutions restricted to M₀ nodes.
pub struct RestrictionMatrix {
    /// columns[j][i] = solution of datum j at the i-th M₀ node
    pub columns: Vec<Vec<C64>>,
    pub m0_nodes: Vec<usize>,
    /// L²(M₀) quadrature weight per node
    pub weight: f64,
}

impl RungeSetup<'_> {
    /// Global solution for an arbitrary boundary datum through this setup's
    /// data channel.
    pub fn solve_datum(&self, phi: &BoundaryField) -> Result<Vec<C64>> {
        match &self.kind {
            RungeKind::Dirichlet { lambda } => {
                let solver = self.op.shifted_solver(*lambda);
                Ok(solve_dirichlet_with(self.op, &solver, phi)?.interior)
            }
            RungeKind::Impedance { spec } => {
                let solver = ImpedanceSolver::new(self.op, spec.clone())?;
                let zero_f = vec![Complex::new(0.0, 0.0); self.op.grid().n_interior()];
                Ok(solver.solve(&zero_f, phi)?.interior)
            }
        }
    }

    /// Assemble the restriction matrix column by column.
    pub fn assemble(&self) -> Result<RestrictionMatrix> {
        match &self.kind {
            RungeKind::Dirichlet { lambda } => {
                self.op.guard(*lambda)?;
            }
            RungeKind::Impedance { .. } => {}
        }
        let grid = self.op.grid();
        let m0 = self.partition.m0_nodes().to_vec();
        let mut columns = Vec::with_capacity(self.domain.len());
        match &self.kind {
            RungeKind::Dirichlet { lambda } => {
                let solver = self.op.shifted_solver(*lambda);
                for j in 0..self.domain.len() {
                    let phi = self.domain.field(grid, j);
                    let sol = solve_dirichlet_with(self.op, &solver, &phi)?;
                    columns.push(m0.iter().map(|&i| sol.interior[i]).collect());
                }
            }
            RungeKind::Impedance { spec } => {
                let solver = ImpedanceSolver::new(self.op, spec.clone())?;
                let zero_f = vec![Complex::new(0.0, 0.0); grid.n_interior()];
                for j in 0..self.domain.len() {
                    let phi = self.domain.field(grid, j);
                    let sol = solver.solve(&zero_f, &phi)?;
                    columns.push(m0.iter().map(|&i| sol.interior[i]).collect());
                }
            }
        }
        Ok(RestrictionMatrix {
            columns,
            m0_nodes: m0,
            weight: grid.cell_volume(),
        })
    }
}

/// Relative cutoff under which singular values count as numerical nullspace.
pub const SVD_NULLSPACE_CUTOFF: f64 = 1e-13;

/// SVD of the restriction operator in the weighted geometry: τ_j descending,
/// u_j the L²(M₀)-orthonormal left fields, ψ_j the orthonormal right vectors
/// in the domain-basis coordinates.
pub struct RungeDecomposition {
    pub singular_values: Vec<f64>,
    /// left fields on the M₀ nodes, ‖u_j‖_{L²(M₀)} = 1
    pub left_fields: Vec<Vec<C64>>,
    /// right vectors in the orthonormal domain coordinates
    pub right_vectors: Vec<Vec<C64>>,
    pub m0_nodes: Vec<usize>,
    pub weight: f64,
}

pub fn svd_decompose(t: &RestrictionMatrix) -> Result<RungeDecomposition> {
    let rows = t.m0_nodes.len();
    let cols = t.columns.len();
    if cols == 0 || rows == 0 {
        return Err(LabError::Degenerate("empty restriction operator".into()));
    }
    let sw = t.weight.sqrt();
    let mut m = nalgebra::DMatrix::<C64>::zeros(rows, cols);
    for (j, col) in t.columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m[(i, j)] = v * sw;
        }
    }
    if m.iter().all(|v| v.norm_sqr() == 0.0) {
        return Err(LabError::Degenerate("zero restriction operator".into()));
    }
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let sigma_max = svd.singular_values[order[0]];
    let mut singular_values = Vec::new();
    let mut left_fields = Vec::new();
    let mut right_vectors = Vec::new();
    for &j in &order {
        let s = svd.singular_values[j];
        if s <= SVD_NULLSPACE_CUTOFF * sigma_max {
            continue;
        }
        singular_values.push(s);
        left_fields.push(u.column(j).iter().map(|v| v / sw).collect());
        // row j of Vᴴ = conjugate of column j of V
        right_vectors.push(vt.row(j).iter().map(|v| v.conj()).collect());
    }
    Ok(RungeDecomposition {
        singular_values,
        left_fields,
        right_vectors,
        m0_nodes: t.m0_nodes.clone(),
        weight: t.weight,
    })
}

impl RungeDecomposition {
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    /// ⟨u, u_j⟩_{L²(M₀)} coefficients of a field on the M₀ nodes, plus the
    /// norm of the out-of-span residual.
    pub fn project(&self, u_m0: &[C64]) -> (Vec<C64>, f64) {
        assert_eq!(u_m0.len(), self.m0_nodes.len());
        let mut coeffs = Vec::with_capacity(self.len());
        for uj in &self.left_fields {
            let a: C64 = uj
                .iter()
                .zip(u_m0)
                .map(|(b, v)| b.conj() * v)
                .sum::<C64>()
                * self.weight;
            coeffs.push(a);
        }
        let mut res = 0.0;
        for (i, v) in u_m0.iter().enumerate() {
            let mut proj = Complex::new(0.0, 0.0);
            for (a, uj) in coeffs.iter().zip(&self.left_fields) {
                proj += a * uj[i];
            }
            res += (v - proj).norm_sqr();
        }
        (coeffs, (res * self.weight).sqrt())
    }

    /// L²(M₀) norm of a field on the M₀ nodes.
    pub fn m0_norm(&self, u_m0: &[C64]) -> f64 {
        (u_m0.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.weight).sqrt()
    }
}

/// Result of one threshold truncation: the global approximant and its books.
pub struct RungeApproximation {
    /// global interior field v
    pub v_interior: Vec<C64>,
    /// boundary datum ψ∂·φ_t realized as a nodal field
    pub datum: BoundaryField,
    /// measured ‖u − v|M₀‖_{L²(M₀)}
    pub err: f64,
    /// ‖φ_t‖ in the E/F coordinates
    pub datum_norm: f64,
    /// out-of-span residual of the input
    pub out_of_span: f64,
    /// number of retained modes (τ_j > t)
    pub kept: usize,
}

/// Truncate at threshold t and realize the approximant through the solver:
/// datum φ_t = Σ_{τ_j > t} τ_j⁻¹ a_j ψ_j, v = solve(φ_t).
pub fn runge_approximate(
    setup: &RungeSetup<'_>,
    dec: &RungeDecomposition,
    u_m0: &[C64],
    t: f64,
) -> Result<RungeApproximation> {
    if t <= 0.0 {
        return Err(LabError::InvalidArgument("threshold t must be positive".into()));
    }
    let grid = setup.op.grid();
    let (coeffs, out_of_span) = dec.project(u_m0);
    let mut phi_coeffs = vec![Complex::new(0.0, 0.0); setup.domain.len()];
    let mut kept = 0;
    let mut datum_norm_sq = 0.0;
    for (j, &tau) in dec.singular_values.iter().enumerate() {
        if tau > t {
            kept += 1;
            let c = coeffs[j] / tau;
            datum_norm_sq += c.norm_sqr();
            for (p, psi) in phi_coeffs.iter_mut().zip(&dec.right_vectors[j]) {
                *p += c * psi;
            }
        }
    }
    let datum = setup.domain.field_from_coeffs(grid, &phi_coeffs);
    let v_interior = if kept == 0 {
        vec![Complex::new(0.0, 0.0); grid.n_interior()]
    } else {
        setup.solve_datum(&datum)?
    };
    let mut err_sq = 0.0;
    for (row, &node) in dec.m0_nodes.iter().enumerate() {
        err_sq += (u_m0[row] - v_interior[node]).norm_sqr();
    }
    let err = (err_sq * dec.weight).sqrt();
    let datum_norm = datum_norm_sq.sqrt();
    // ‖φ_t‖ ≤ t⁻¹ ‖u‖ is exact in the discrete truncation algebra
    let u_norm = dec.m0_norm(u_m0);
    if datum_norm > u_norm / t + 1e-12 * (1.0 + u_norm / t) {
        return Err(LabError::SolveFailure(format!(
            "truncation bound violated: ‖φ_t‖ = {datum_norm} > ‖u‖/t = {}",
            u_norm / t
        )));
    }
    Ok(RungeApproximation {
        v_interior,
        datum,
        err,
        datum_norm,
        out_of_span,
        kept,
    })
}

/// One point of the error-versus-cost Pareto curve.
#[derive(Debug, Clone)]
pub struct TradeoffRecord {
    pub t: f64,
    /// algebraic truncation error sqrt(Σ_{τ_j ≤ t} |a_j|² + out-of-span²)
    pub err: f64,
    pub datum_norm: f64,
    pub v_h2_norm: f64,
    pub kept: usize,
}

/// Evaluate the trade-off curve on a decreasing positive t grid. The err and
/// datum_norm columns are exact truncation algebra; v_H2_norm comes from the
/// realized solve at each threshold.
pub fn tradeoff_curve(
    setup: &RungeSetup<'_>,
    dec: &RungeDecomposition,
    u_m0: &[C64],
    t_grid: &[f64],
) -> Result<Vec<TradeoffRecord>> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| t <= 0.0) {
        return Err(LabError::InvalidArgument(
            "t grid must be positive and nonempty".into(),
        ));
    }
    for w in t_grid.windows(2) {
        if w[1] >= w[0] {
            return Err(LabError::InvalidArgument("t grid must decrease".into()));
        }
    }
    let grid = setup.op.grid();
    let (coeffs, out_of_span) = dec.project(u_m0);
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut kept = 0;
        let mut datum_norm_sq = 0.0;
        let mut err_sq = out_of_span * out_of_span;
        let mut phi_coeffs = vec![Complex::new(0.0, 0.0); setup.domain.len()];
        for (j, &tau) in dec.singular_values.iter().enumerate() {
            if tau > t {
                kept += 1;
                let c = coeffs[j] / tau;
                datum_norm_sq += c.norm_sqr();
                for (p, psi) in phi_coeffs.iter_mut().zip(&dec.right_vectors[j]) {
                    *p += c * psi;
                }
            } else {
                err_sq += coeffs[j].norm_sqr();
            }
        }
        let v_h2_norm = if kept == 0 {
            0.0
        } else {
            let datum = setup.domain.field_from_coeffs(grid, &phi_coeffs);
            let v = setup.solve_datum(&datum)?;
            sobolev_norm_c(grid, &v, 2)
        };
        out.push(TradeoffRecord {
            t,
            err: err_sq.sqrt(),
            datum_norm: datum_norm_sq.sqrt(),
            v_h2_norm,
            kept,
        });
    }
    Ok(out)
}
