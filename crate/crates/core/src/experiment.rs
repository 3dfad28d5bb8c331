//! Experiment driver: configuration schema, stability sweeps over
//! (amplitude, λ), modulus-of-continuity fits with the double-log and
//! single-log models, the box eigenvalue gap explorer, and report emission.
//! Every run is deterministic for a fixed (config, seed) pair.

use crate::boundary::{
    assemble_dtn, assemble_impedance_map, default_gamma_pair, operator_norm, DtnDomain, MapKind,
};
use crate::bvp::{ImpedanceSign, ImpedanceSpec};
use crate::error::{LabError, Result};
use crate::grid::{carve_regions, BoundaryPatch, BoxDomain, Grid, RegionPartition, Side, SubBox};
use crate::io::{atomic_write, fmt_f64, CsvTable};
use crate::spectral::{
    amplification, sobolev_norm, PotentialClass, PotentialField, SchrodingerOp,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Background potential families.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Constant { value: f64 },
    /// Tensor quintic bump of the given amplitude supported in [lo, hi].
    Bump { amplitude: f64, lo: Vec<f64>, hi: Vec<f64> },
}

/// Perturbation shapes; every shape is multiplied by a window supported
/// strictly inside M₀ so that q₁ = q₂ on M₁ holds.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    /// The inner window itself.
    Bump,
    /// cos(k·x) windowed.
    FourierMode { k: Vec<f64> },
    /// Random band-limited combination of cos/sin modes up to max_mode.
    RandomBand { max_mode: i64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Dirichlet,
    Impedance,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SideSpec {
    Lo,
    Hi,
}

impl From<SideSpec> for Side {
    fn from(s: SideSpec) -> Side {
        match s {
            SideSpec::Lo => Side::Lo,
            SideSpec::Hi => Side::Hi,
        }
    }
}

fn default_margin() -> usize {
    1
}

fn default_inset() -> usize {
    1
}

fn default_imp_a() -> f64 {
    1.0
}

/// One structured config file drives every run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub box_sides: Vec<f64>,
    pub resolution: Vec<usize>,
    pub inner_lo: Vec<f64>,
    pub inner_hi: Vec<f64>,
    #[serde(default = "default_margin")]
    pub margin_layers: usize,
    pub gamma_axis: usize,
    pub gamma_side: SideSpec,
    #[serde(default = "default_inset")]
    pub gamma_inset: usize,
    pub sigma_axis: usize,
    pub sigma_side: SideSpec,
    pub q0: PotentialSpec,
    pub perturbation: PerturbationSpec,
    pub amplitudes: Vec<f64>,
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub taus: Vec<f64>,
    pub kappa0: f64,
    pub kappa1: f64,
    pub lambda0: f64,
    pub seed: u64,
    pub mode: SweepMode,
    #[serde(default = "default_imp_a")]
    pub impedance_a: f64,
    #[serde(default)]
    pub max_modes_per_axis: Option<usize>,
    #[serde(default)]
    pub gap_mu: Vec<f64>,
    #[serde(default)]
    pub gap_count: usize,
    pub output_dir: String,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.box_sides.len();
        if self.resolution.len() != dim || self.inner_lo.len() != dim || self.inner_hi.len() != dim
        {
            return Err(LabError::Config(
                "box_sides, resolution, inner_lo, inner_hi must share one dimension".into(),
            ));
        }
        if self.amplitudes.is_empty() || self.lambdas.is_empty() {
            return Err(LabError::Config("amplitudes and lambdas must be nonempty".into()));
        }
        if self.gamma_axis >= dim || self.sigma_axis >= dim {
            return Err(LabError::Config("patch axis out of range".into()));
        }
        if self.kappa0 <= 0.0 || self.kappa1 <= 0.0 || self.lambda0 <= 0.0 {
            return Err(LabError::Config("kappa0, kappa1, lambda0 must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        let toml = self.to_toml()?;
        let mut h = Sha256::new();
        h.update(toml.as_bytes());
        let digest = h.finalize();
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::build(BoxDomain::new(&self.box_sides)?, &self.resolution)
    }

    pub fn partition(&self, grid: &Grid) -> Result<RegionPartition> {
        let inner = SubBox::new(&self.inner_lo, &self.inner_hi)?;
        carve_regions(grid, &[inner], self.margin_layers)
    }

    /// Window supported strictly inside Int(M₀): the quintic window of the
    /// inner box shrunk by one margin-plus-a-layer, so that after the window's
    /// own dilation its support still clears M₁ entirely.
    pub fn perturbation_window(&self, grid: &Grid) -> Result<Vec<f64>> {
        let margins: Vec<f64> = grid
            .spacing()
            .iter()
            .map(|h| h * (self.margin_layers as f64 + 1.0))
            .collect();
        let lo: Vec<f64> = self
            .inner_lo
            .iter()
            .zip(&margins)
            .map(|(a, m)| a + m)
            .collect();
        let hi: Vec<f64> = self
            .inner_hi
            .iter()
            .zip(&margins)
            .map(|(a, m)| a - m)
            .collect();
        let shrunk = SubBox::new(&lo, &hi).map_err(|_| {
            LabError::Config("inner region too small to host a perturbation window".into())
        })?;
        let part = carve_regions(grid, &[shrunk], self.margin_layers)?;
        Ok(crate::grid::smooth_window(grid, &part))
    }

    pub fn q0_field(&self, grid: &Grid) -> Result<PotentialField> {
        match &self.q0 {
            PotentialSpec::Zero => Ok(PotentialField::constant(grid, 0.0)),
            PotentialSpec::Constant { value } => Ok(PotentialField::constant(grid, *value)),
            PotentialSpec::Bump { amplitude, lo, hi } => {
                let sb = SubBox::new(lo, hi)?;
                let margins: Vec<f64> = grid.spacing().to_vec();
                let amp = *amplitude;
                PotentialField::from_fn(grid, |x| {
                    let mut w = 1.0;
                    for k in 0..x.len() {
                        w *= crate::grid::smoothstep5(((x[k] - (sb.lo[k] - margins[k])) / margins[k]).min(((sb.hi[k] + margins[k]) - x[k]) / margins[k]));
                    }
                    amp * w
                })
            }
        }
    }

    /// Unit-amplitude perturbation shape (windowed); scaled per sweep point.
    pub fn perturbation_shape(&self, grid: &Grid) -> Result<Vec<f64>> {
        let window = self.perturbation_window(grid)?;
        match &self.perturbation {
            PerturbationSpec::Bump => Ok(window),
            PerturbationSpec::FourierMode { k } => {
                if k.len() != grid.dim() {
                    return Err(LabError::Config("fourier mode dimension mismatch".into()));
                }
                Ok(grid
                    .iter_multi()
                    .enumerate()
                    .map(|(lin, idx)| {
                        let x = grid.position(&idx);
                        let phase: f64 = k.iter().zip(&x).map(|(a, b)| a * b).sum();
                        phase.cos() * window[lin]
                    })
                    .collect())
            }
            PerturbationSpec::RandomBand { max_mode } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xb4d5_eed5);
                let mut modes = Vec::new();
                for k0 in 0..=*max_mode {
                    for k1 in -*max_mode..=*max_mode {
                        for k2 in -*max_mode..=*max_mode {
                            modes.push((
                                [k0 as f64, k1 as f64, k2 as f64],
                                rng.random::<f64>() - 0.5,
                                rng.random::<f64>() - 0.5,
                            ));
                        }
                    }
                }
                let mut shape: Vec<f64> = grid
                    .iter_multi()
                    .map(|idx| {
                        let x = grid.position(&idx);
                        modes
                            .iter()
                            .map(|(k, a, b)| {
                                let phase: f64 = k.iter().zip(&x).map(|(p, q)| p * q).sum();
                                a * phase.cos() + b * phase.sin()
                            })
                            .sum::<f64>()
                    })
                    .collect();
                let sup = shape.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
                for (s, w) in shape.iter_mut().zip(&window) {
                    *s = *s / sup * w;
                }
                Ok(shape)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub amp_index: usize,
    pub lambda_index: usize,
    pub amplitude: f64,
    pub lambda: f64,
    pub dq_h_minus1: f64,
    pub dq_sup: f64,
    pub d_lambda0_norm: Option<f64>,
    pub d_lambda1_norm: Option<f64>,
    pub d_n0_norm: Option<f64>,
    pub e_lambda: f64,
    pub b_lambda: f64,
    pub m_lambda: f64,
    pub m_tilde_lambda: f64,
    pub n_dirichlet: f64,
    pub n_impedance: f64,
    pub n_tilde_impedance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedPoint {
    pub amp_index: usize,
    pub lambda_index: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub skipped: Vec<SkippedPoint>,
}

/// Run the stability sweep: one record per (amplitude, λ), deterministic for a
/// fixed config + seed; class violations are skipped with a reason.
pub fn run_stability_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    config.validate()?;
    let grid = config.grid()?;
    let _partition = config.partition(&grid)?;
    let q0 = config.q0_field(&grid)?;
    if config.kappa0 <= q0.sup_norm() {
        return Err(LabError::Config(format!(
            "kappa0 = {} must exceed sup|q0| = {}",
            config.kappa0,
            q0.sup_norm()
        )));
    }
    let class = PotentialClass::new(q0.clone(), config.kappa0, config.kappa1, config.lambda0)?;
    let shape = config.perturbation_shape(&grid)?;
    let op0 = SchrodingerOp::new(grid.clone(), q0)?;
    let (gamma0, gamma) = default_gamma_pair(
        &grid,
        config.gamma_axis,
        config.gamma_side.into(),
        config.gamma_inset,
    )?;
    let sigma = BoundaryPatch::face(&grid, config.sigma_axis, config.sigma_side.into())?;
    let trunc = config.max_modes_per_axis;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (lj, &lambda) in config.lambdas.iter().enumerate() {
        // reference maps for q0 at this λ, shared across amplitudes
        let sd0 = match op0.guard(lambda) {
            Ok(sd) => sd,
            Err(e) => {
                for ai in 0..config.amplitudes.len() {
                    skipped.push(SkippedPoint {
                        amp_index: ai,
                        lambda_index: lj,
                        reason: format!("{e}"),
                    });
                }
                continue;
            }
        };
        let (d0_ref, d1_ref, n0_ref, win_domain, full_domain, imp_spec) = match config.mode {
            SweepMode::Dirichlet => {
                let win = DtnDomain::windowed(&grid, &gamma0, &gamma, 1.5, trunc)?;
                let full = DtnDomain::plain(&grid, &BoundaryPatch::full_boundary(&grid), 1.5, trunc);
                let m0 = assemble_dtn(&op0, lambda, MapKind::Lambda0, &win, &sigma)?;
                let m1 = assemble_dtn(&op0, lambda, MapKind::Lambda1, &full, &sigma)?;
                (Some(m0), Some(m1), None, win, full, None)
            }
            SweepMode::Impedance => {
                let kappa = config.kappa0 + config.kappa1;
                let spec = ImpedanceSpec::constant(
                    &grid,
                    config.impedance_a,
                    lambda,
                    ImpedanceSign::Plus,
                    kappa,
                )?;
                let win = DtnDomain::windowed(&grid, &gamma0, &gamma, 0.5, trunc)?;
                let full = DtnDomain::plain(&grid, &BoundaryPatch::full_boundary(&grid), 0.5, trunc);
                let n0 = assemble_impedance_map(&op0, &spec, MapKind::ImpedanceN0, &win, &sigma)?;
                (None, None, Some(n0), win, full, Some(spec))
            }
        };
        // amplitude points are independent tasks; the merge below restores
        // the (amplitude index, lambda index) order
        let point_results: Vec<(usize, std::result::Result<SweepRecord, String>)> = {
            use rayon::prelude::*;
            config
                .amplitudes
                .par_iter()
                .enumerate()
                .map(|(ai, &amp)| {
                    let run = || -> Result<SweepRecord> {
                        let q1_values: Vec<f64> = op0
                            .potential()
                            .values()
                            .iter()
                            .zip(&shape)
                            .map(|(a, s)| a + amp * s)
                            .collect();
                        let q1 = PotentialField::new(&grid, q1_values)?;
                        class.is_member(&q1, lambda, &sd0)?;
                        let dq: Vec<f64> = shape.iter().map(|s| amp * s).collect();
                        let dq_h_minus1 = sobolev_norm(&grid, &dq, -1);
                        let dq_sup = dq.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
                        let op1 = SchrodingerOp::new(grid.clone(), q1)?;
                        let sd1 = op1.guard(lambda)?;
                        let factors =
                            amplification(lambda, &[sd0.as_ref(), sd1.as_ref()], config.lambda0)?;
                        let (d_lambda0_norm, d_lambda1_norm, d_n0_norm) = match config.mode {
                            SweepMode::Dirichlet => {
                                let m0 =
                                    assemble_dtn(&op1, lambda, MapKind::Lambda0, &win_domain, &sigma)?;
                                let m1 =
                                    assemble_dtn(&op1, lambda, MapKind::Lambda1, &full_domain, &sigma)?;
                                let n0 = operator_norm(&m0.difference(d0_ref.as_ref().unwrap())?);
                                let n1 = operator_norm(&m1.difference(d1_ref.as_ref().unwrap())?);
                                (Some(n0), Some(n1), None)
                            }
                            SweepMode::Impedance => {
                                let spec = imp_spec.as_ref().unwrap();
                                let n0map = assemble_impedance_map(
                                    &op1,
                                    spec,
                                    MapKind::ImpedanceN0,
                                    &win_domain,
                                    &sigma,
                                )?;
                                let n0 = operator_norm(&n0map.difference(n0_ref.as_ref().unwrap())?);
                                (None, None, Some(n0))
                            }
                        };
                        Ok(SweepRecord {
                            amp_index: ai,
                            lambda_index: lj,
                            amplitude: amp,
                            lambda,
                            dq_h_minus1,
                            dq_sup,
                            d_lambda0_norm,
                            d_lambda1_norm,
                            d_n0_norm,
                            e_lambda: factors.e,
                            b_lambda: factors.b,
                            m_lambda: factors.m,
                            m_tilde_lambda: factors.m_tilde,
                            n_dirichlet: factors.n_dirichlet,
                            n_impedance: factors.n_impedance,
                            n_tilde_impedance: factors.n_tilde_impedance,
                        })
                    };
                    (ai, run().map_err(|e| e.to_string()))
                })
                .collect()
        };
        for (ai, outcome) in point_results {
            match outcome {
                Ok(r) => records.push(r),
                Err(reason) => skipped.push(SkippedPoint {
                    amp_index: ai,
                    lambda_index: lj,
                    reason,
                }),
            }
        }
    }
    records.sort_by_key(|r| (r.amp_index, r.lambda_index));
    skipped.sort_by_key(|s| (s.amp_index, s.lambda_index));
    Ok(SweepOutput { records, skipped })
}

/// Modulus-of-continuity models for the fits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// y = C |ln ln x|^{−2/(n+2)}, valid for x ∈ (0, e⁻¹)
    DoubleLog,
    /// y = C |ln x|^{−2/(n+2)}, valid for x ∈ (0, 1)
    SingleLog,
    /// y = C x^p
    Power,
    /// y = C e^{p x}
    Exponential,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: FitModel,
    /// fitted constant with the exponent pinned to 2/(n+2)
    pub c: f64,
    pub pinned_exponent: f64,
    /// diagnostic free-exponent fit (c, exponent)
    pub free_fit: Option<(f64, f64)>,
    pub r_squared: f64,
    pub kendall_tau: f64,
    pub n_used: usize,
    /// upper end of the model's validity window on x
    pub domain_upper: f64,
}

/// Kendall rank correlation (ties contribute zero).
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let dx = xs[j] - xs[i];
            let dy = ys[j] - ys[i];
            let s = dx * dy;
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    (concordant - discordant) as f64 / (n * (n - 1) / 2) as f64
}

/// Least-squares fit of y against the model abscissa with the exponent pinned
/// to 2/(n+2); requires at least 5 records strictly inside the model domain.
pub fn fit_modulus(points: &[(f64, f64)], model: FitModel, dim: usize) -> Result<FitResult> {
    let exponent = 2.0 / (dim as f64 + 2.0);
    let domain_upper = match model {
        FitModel::DoubleLog => (-1.0f64).exp(),
        FitModel::SingleLog => 1.0,
        _ => f64::INFINITY,
    };
    // abscissa A(x) with y ≈ C·A
    let abscissa = |x: f64| -> Option<f64> {
        match model {
            FitModel::DoubleLog => {
                if x <= 0.0 || x >= domain_upper {
                    None
                } else {
                    Some((-x.ln()).ln().powf(-exponent))
                }
            }
            FitModel::SingleLog => {
                if x <= 0.0 || x >= 1.0 {
                    None
                } else {
                    Some((-x.ln()).powf(-exponent))
                }
            }
            FitModel::Power => {
                if x <= 0.0 {
                    None
                } else {
                    Some(x.powf(exponent))
                }
            }
            FitModel::Exponential => Some((exponent * x).exp()),
        }
    };
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|&(x, y)| abscissa(x).map(|a| (a, y)))
        .collect();
    if data.len() < 5 {
        return Err(LabError::Degenerate(format!(
            "only {} records inside the {:?} domain (need 5)",
            data.len(),
            model
        )));
    }
    let saa: f64 = data.iter().map(|(a, _)| a * a).sum();
    let say: f64 = data.iter().map(|(a, y)| a * y).sum();
    let c = say / saa;
    let y_mean: f64 = data.iter().map(|(_, y)| y).sum::<f64>() / data.len() as f64;
    let ss_res: f64 = data.iter().map(|(a, y)| (y - c * a).powi(2)).sum();
    let ss_tot: f64 = data.iter().map(|(_, y)| (y - y_mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let tau = kendall_tau(
        &data.iter().map(|(a, _)| *a).collect::<Vec<_>>(),
        &data.iter().map(|(_, y)| *y).collect::<Vec<_>>(),
    );
    // free-exponent diagnostic: ln y = ln c − γ ln A⁻¹-ish; regress on ln A
    let logs: Vec<(f64, f64)> = data
        .iter()
        .filter(|(a, y)| *a > 0.0 && *y > 0.0)
        .map(|(a, y)| (a.ln(), y.ln()))
        .collect();
    let free_fit = if logs.len() >= 3 {
        let n = logs.len() as f64;
        let sx: f64 = logs.iter().map(|p| p.0).sum();
        let sy: f64 = logs.iter().map(|p| p.1).sum();
        let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
        let den = n * sxx - sx * sx;
        if den.abs() > 1e-12 {
            let slope = (n * sxy - sx * sy) / den;
            let icept = (sy - slope * sx) / n;
            Some((icept.exp(), slope))
        } else {
            None
        }
    } else {
        None
    };
    Ok(FitResult {
        model,
        c,
        pinned_exponent: exponent,
        free_fit,
        r_squared,
        kendall_tau: tau,
        n_used: data.len(),
        domain_upper,
    })
}

/// Box spectrum report of the gap explorer.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    /// first K eigenvalues β = Σ k_j²/μ_j² with multiplicity, ascending
    pub eigenvalues: Vec<f64>,
    /// distinct values with multiplicities
    pub distinct: Vec<(f64, usize)>,
    /// consecutive gaps of the multiset
    pub gaps: Vec<f64>,
    /// smallest c with gap_k ≤ c·k^{1/n} over the computed range
    pub weyl_c: f64,
    /// true when every multiplicity is 1 (non-resonant box)
    pub all_simple: bool,
    /// the product form ∏ k_j²/μ_j², kept as a comparison
    /// column for a representative tuple of each distinct value
    pub products_printed: Vec<f64>,
}

/// Enumerate the Dirichlet box spectrum Σ k_j²/μ_j² on ∏(0, μ_jπ) and report
/// gaps, multiplicities, and the Weyl-scaled gap constant.
pub fn gap_explorer(mu_side: &[f64], k_count: usize) -> Result<GapReport> {
    if k_count < 10 {
        return Err(LabError::InvalidArgument("K must be at least 10".into()));
    }
    if mu_side.is_empty() || mu_side.iter().any(|&m| m <= 0.0) {
        return Err(LabError::InvalidArgument("mu sides must be positive".into()));
    }
    let n = mu_side.len();
    // grow the energy bound until at least k_count eigenvalues are enumerated
    let vol: f64 = mu_side.iter().product();
    let mut bound = match n {
        3 => (6.0 * std::f64::consts::PI.powi(2) * (k_count as f64 + 8.0)
            / (vol * std::f64::consts::PI.powi(3)))
        .powf(2.0 / 3.0)
            * std::f64::consts::PI.powi(2),
        _ => (k_count as f64 + 8.0) * 4.0 / vol,
    }
    .max(4.0);
    loop {
        let mut entries: Vec<(f64, Vec<u64>)> = Vec::new();
        let kmax: Vec<u64> = mu_side
            .iter()
            .map(|m| (bound.sqrt() * m).floor() as u64 + 1)
            .collect();
        let mut idx = vec![1u64; n];
        'outer: loop {
            let beta: f64 = idx
                .iter()
                .zip(mu_side)
                .map(|(&k, &m)| (k * k) as f64 / (m * m))
                .sum();
            if beta <= bound {
                entries.push((beta, idx.clone()));
            }
            // advance the tuple
            let mut a = n;
            loop {
                if a == 0 {
                    break 'outer;
                }
                a -= 1;
                idx[a] += 1;
                let partial: f64 = idx
                    .iter()
                    .zip(mu_side)
                    .take(a + 1)
                    .map(|(&k, &m)| (k * k) as f64 / (m * m))
                    .sum();
                if idx[a] <= kmax[a] && partial <= bound {
                    for b in a + 1..n {
                        idx[b] = 1;
                    }
                    break;
                }
                if a == 0 {
                    break 'outer;
                }
                // reset and carry
            }
        }
        if entries.len() >= k_count {
            entries.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            entries.truncate(k_count);
            let eigenvalues: Vec<f64> = entries.iter().map(|e| e.0).collect();
            let mut distinct: Vec<(f64, usize)> = Vec::new();
            let mut products_printed = Vec::new();
            for (beta, tuple) in &entries {
                match distinct.last_mut() {
                    Some((v, mult)) if (*v - beta).abs() <= 1e-9 * v.abs().max(1.0) => {
                        *mult += 1;
                    }
                    _ => {
                        distinct.push((*beta, 1));
                        let prod: f64 = tuple
                            .iter()
                            .zip(mu_side)
                            .map(|(&k, &m)| (k * k) as f64 / (m * m))
                            .product();
                        products_printed.push(prod);
                    }
                }
            }
            let gaps: Vec<f64> = eigenvalues.windows(2).map(|w| w[1] - w[0]).collect();
            let weyl_c = gaps
                .iter()
                .enumerate()
                .map(|(k, g)| g / ((k + 1) as f64).powf(1.0 / n as f64))
                .fold(0.0f64, f64::max);
            let all_simple = distinct.iter().all(|&(_, m)| m == 1);
            return Ok(GapReport {
                eigenvalues,
                distinct,
                gaps,
                weyl_c,
                all_simple,
                products_printed,
            });
        }
        bound *= 1.6;
    }
}

/// Write records.csv, fits.json and manifest.json atomically into `dest`.
pub fn emit_report(
    config: &ExperimentConfig,
    output: &SweepOutput,
    fits: &[FitResult],
    dest: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dest)?;
    let mut table = CsvTable::new(&[
        "amp_index",
        "lambda_index",
        "amplitude",
        "lambda",
        "dq_h_minus1",
        "dq_sup",
        "d_lambda0_norm",
        "d_lambda1_norm",
        "d_n0_norm",
        "e_lambda",
        "b_lambda",
        "m_lambda",
        "m_tilde_lambda",
        "n_dirichlet",
        "n_impedance",
        "n_tilde_impedance",
    ]);
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in &output.records {
        table.push_row(vec![
            r.amp_index.to_string(),
            r.lambda_index.to_string(),
            fmt_f64(r.amplitude),
            fmt_f64(r.lambda),
            fmt_f64(r.dq_h_minus1),
            fmt_f64(r.dq_sup),
            opt(r.d_lambda0_norm),
            opt(r.d_lambda1_norm),
            opt(r.d_n0_norm),
            fmt_f64(r.e_lambda),
            fmt_f64(r.b_lambda),
            fmt_f64(r.m_lambda),
            fmt_f64(r.m_tilde_lambda),
            fmt_f64(r.n_dirichlet),
            fmt_f64(r.n_impedance),
            fmt_f64(r.n_tilde_impedance),
        ]);
    }
    table.write(&dest.join("records.csv"))?;
    let fits_json =
        serde_json::to_string_pretty(fits).map_err(|e| LabError::Serde(e.to_string()))?;
    atomic_write(&dest.join("fits.json"), fits_json.as_bytes())?;
    #[derive(Serialize)]
    struct Manifest<'a> {
        config_hash: String,
        seed: u64,
        n_records: usize,
        n_skipped: usize,
        skipped: &'a [SkippedPoint],
        columns: Vec<String>,
    }
    let manifest = Manifest {
        config_hash: config.hash()?,
        seed: config.seed,
        n_records: output.records.len(),
        n_skipped: output.skipped.len(),
        skipped: &output.skipped,
        columns: table.columns().to_vec(),
    };
    let mj = serde_json::to_string_pretty(&manifest).map_err(|e| LabError::Serde(e.to_string()))?;
    atomic_write(&dest.join("manifest.json"), mj.as_bytes())
}
