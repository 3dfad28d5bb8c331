//! Complex-geometric-optics machinery: direction pairs ξ₁, ξ₂ built from
//! (η, τ, λ) with ξ_j·ξ_j = λ and ξ₁+ξ₂ = η, and CGO solutions
//! u_ξ = e^{−ix·ξ}(1 + w_ξ) through a periodic Fourier solver for the
//! conjugated equation (Δ − 2iξ·∇ − q)w = q on the enclosing torus.
//!
//! The conjugated operator acts diagonally with the symbol −|k|² + 2ξ·k on a
//! half-integer-shifted dual lattice; the shift keeps the symbol away from its
//! zeros and is recorded with every solution.

use crate::error::{LabError, Result};
use crate::grid::{Grid, RegionPartition, C64};
use crate::linalg::{fftn, gmres, ifftn};
use crate::torus::Torus;
use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Direction data of one CGO pair.
#[derive(Debug, Clone)]
pub struct CgoDirections {
    pub eta: Vec<f64>,
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
    pub xi1: Vec<C64>,
    pub xi2: Vec<C64>,
    pub tau: f64,
    pub lambda: f64,
    pub varpi: f64,
}

impl CgoDirections {
    /// |Im ξ| (equal for both members of the pair).
    pub fn im_norm(&self) -> f64 {
        self.eta2.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Complex bilinear dot ξ·ξ of one direction.
    pub fn xi_dot_xi(xi: &[C64]) -> C64 {
        xi.iter().map(|v| v * v).sum()
    }
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Build the CGO direction pair for frequency vector η at scale τ:
/// ξ₁ = (η/2 + η₁) + iη₂, ξ₂ = (η/2 − η₁) − iη₂ with η₁ ⊥ η₂ ⊥ η,
/// |η₁|² = λ + τ², |η₂|² = |η|²/4 + |η₁|² − λ.
///
/// ϖ = max(1, κ); requires n = 3, τ > 2ϖ and λ ≥ λ₀. The orthonormal frame in
/// the plane normal to η is drawn deterministically from `seed`.
pub fn make_xi_pair(
    eta: &[f64],
    tau: f64,
    lambda: f64,
    seed: u64,
    kappa: f64,
    lambda0: f64,
) -> Result<CgoDirections> {
    if eta.len() != 3 {
        return Err(LabError::InvalidArgument(format!(
            "CGO directions require n = 3, got n = {}",
            eta.len()
        )));
    }
    let varpi = kappa.max(1.0);
    if tau <= 2.0 * varpi {
        return Err(LabError::InvalidArgument(format!(
            "tau = {tau} must exceed 2 varpi = {}",
            2.0 * varpi
        )));
    }
    if lambda < lambda0 {
        return Err(LabError::InvalidArgument(format!(
            "lambda = {lambda} below lambda0 = {lambda0}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta_norm = norm(eta);
    // unit vector u perpendicular to eta (any unit vector when eta = 0)
    let u = loop {
        let r: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut u = r.clone();
        if eta_norm > 0.0 {
            let proj: f64 =
                r.iter().zip(eta).map(|(a, b)| a * b).sum::<f64>() / (eta_norm * eta_norm);
            for (ui, e) in u.iter_mut().zip(eta) {
                *ui -= proj * e;
            }
        }
        let nu = norm(&u);
        if nu > 1e-8 {
            break u.into_iter().map(|x| x / nu).collect::<Vec<f64>>();
        }
    };
    let v = if eta_norm > 0.0 {
        let ehat: Vec<f64> = eta.iter().map(|x| x / eta_norm).collect();
        cross(&ehat, &u)
    } else {
        // eta = 0: second direction orthogonal to u alone
        let mut r: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
        let proj: f64 = r.iter().zip(&u).map(|(a, b)| a * b).sum();
        for (ri, ui) in r.iter_mut().zip(&u) {
            *ri -= proj * ui;
        }
        let nr = norm(&r);
        r.into_iter().map(|x| x / nr).collect()
    };
    let m1 = (lambda + tau * tau).sqrt();
    let m2 = (eta_norm * eta_norm / 4.0 + m1 * m1 - lambda).sqrt();
    let eta1: Vec<f64> = u.iter().map(|x| x * m1).collect();
    let eta2: Vec<f64> = v.iter().map(|x| x * m2).collect();
    let xi1: Vec<C64> = (0..3)
        .map(|a| Complex::new(eta[a] / 2.0 + eta1[a], eta2[a]))
        .collect();
    let xi2: Vec<C64> = (0..3)
        .map(|a| Complex::new(eta[a] / 2.0 - eta1[a], -eta2[a]))
        .collect();
    Ok(CgoDirections {
        eta: eta.to_vec(),
        eta1,
        eta2,
        xi1,
        xi2,
        tau,
        lambda,
        varpi,
    })
}

/// One CGO solution on the torus: nodal remainder w with its solve diagnostics.
#[derive(Debug, Clone)]
pub struct CgoSolution {
    pub xi: Vec<C64>,
    pub lambda: f64,
    /// nodal values of w on the torus
    pub w: Vec<C64>,
    /// half-integer dual-lattice offset per axis (entries 0 or 1/2)
    pub shift: Vec<f64>,
    /// relative residual ‖(P−Q)W − q_θ‖ / ‖q_θ‖ of the conjugated equation
    pub residual: f64,
    pub iterations: usize,
    /// measured geometric ratio of the Born iteration when it was used
    pub born_ratio: Option<f64>,
}

impl CgoSolution {
    /// ‖w‖_{L²(M₀)}: restriction of the nodal remainder to the grid's M₀ nodes.
    pub fn w_l2_m0(&self, torus: &Torus, grid: &Grid, partition: &RegionPartition) -> f64 {
        let mut acc = 0.0;
        for &lin in partition.m0_nodes() {
            let idx = grid.multi(lin);
            let tidx: Vec<usize> = idx.iter().map(|&i| i + 1).collect();
            acc += self.w[torus.lin(&tidx)].norm_sqr();
        }
        (acc * grid.cell_volume()).sqrt()
    }

    /// Nodal values of u_ξ = e^{−ix·ξ}(1 + w) at a torus node.
    pub fn u_at(&self, torus: &Torus, tidx: &[usize]) -> C64 {
        let x = torus.position(tidx);
        let phase: C64 = -Complex::new(0.0, 1.0)
            * x.iter()
                .zip(&self.xi)
                .map(|(xi_pos, xi_dir)| xi_dir * *xi_pos)
                .sum::<C64>();
        phase.exp() * (Complex::new(1.0, 0.0) + self.w[torus.lin(tidx)])
    }
}

/// Symbol p(k) = −k·k + 2ξ·k at a real wavevector k.
fn symbol(xi: &[C64], k: &[f64]) -> C64 {
    let k2: f64 = k.iter().map(|v| v * v).sum();
    let xk: C64 = xi.iter().zip(k).map(|(x, &kk)| x * kk).sum();
    Complex::new(-k2, 0.0) + 2.0 * xk
}

struct ShiftedSymbol {
    values: Vec<C64>,
    min_abs: f64,
    shift: Vec<f64>,
    /// nodal phase e^{iθ̃·x}
    phase: Vec<C64>,
}

fn build_symbol(torus: &Torus, xi: &[C64], shift: &[f64]) -> ShiftedSymbol {
    let dim = torus.dim();
    let theta: Vec<f64> = (0..dim)
        .map(|a| 2.0 * std::f64::consts::PI / torus.side(a) * shift[a])
        .collect();
    let mut values = Vec::with_capacity(torus.len());
    let mut min_abs = f64::INFINITY;
    for idx in torus.iter_multi() {
        let mut k = torus.wavevector(&idx);
        for a in 0..dim {
            k[a] += theta[a];
        }
        let p = symbol(xi, &k);
        min_abs = min_abs.min(p.norm());
        values.push(p);
    }
    let phase = torus
        .iter_multi()
        .map(|idx| {
            let x = torus.position(&idx);
            let arg: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
            Complex::new(0.0, arg).exp()
        })
        .collect();
    ShiftedSymbol {
        values,
        min_abs,
        shift: shift.to_vec(),
        phase,
    }
}

/// Pick the half-integer shift with the best-separated symbol.
fn choose_shift(torus: &Torus, xi: &[C64]) -> Result<ShiftedSymbol> {
    let dim = torus.dim();
    let mut best: Option<ShiftedSymbol> = None;
    for mask in 0..(1u32 << dim) {
        let shift: Vec<f64> = (0..dim)
            .map(|a| if mask & (1 << a) != 0 { 0.5 } else { 0.0 })
            .collect();
        let cand = build_symbol(torus, xi, &shift);
        if best.as_ref().map_or(true, |b| cand.min_abs > b.min_abs) {
            best = Some(cand);
        }
    }
    let best = best.unwrap();
    if best.min_abs < 1e-8 {
        return Err(LabError::ResonantLattice {
            min_abs: best.min_abs,
        });
    }
    Ok(best)
}

/// Solve the conjugated equation (Δ − 2iξ·∇ − q)w = q on the torus for the
/// zero-extended potential. Born iteration when 2‖q‖_∞/|Im ξ| < 1/2, otherwise
/// GMRES on the symbol-preconditioned fixed-point equation.
pub fn faddeev_solve(
    torus: &Torus,
    q_torus: &[f64],
    xi: &[C64],
    tolerance: f64,
) -> Result<CgoSolution> {
    if q_torus.len() != torus.len() {
        return Err(LabError::InvalidArgument(
            "potential does not match the torus".into(),
        ));
    }
    let lambda = {
        let xx = CgoDirections::xi_dot_xi(xi);
        if xx.im.abs() > 1e-9 * (xx.re.abs() + 1.0) {
            return Err(LabError::InvalidArgument(format!(
                "xi . xi = {xx} is not real: not a CGO direction"
            )));
        }
        xx.re
    };
    let im_norm = xi.iter().map(|v| v.im * v.im).sum::<f64>().sqrt();
    let sym = choose_shift(torus, xi)?;
    let shape = torus.shape().to_vec();
    let n = torus.len();

    // rhs in shifted coordinates: q_θ = e^{−iθ̃·x} q
    let q_theta: Vec<C64> = (0..n)
        .map(|i| sym.phase[i].conj() * q_torus[i])
        .collect();
    let q_norm = (q_theta.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt();
    if q_norm == 0.0 {
        return Ok(CgoSolution {
            xi: xi.to_vec(),
            lambda,
            w: vec![Complex::new(0.0, 0.0); n],
            shift: sym.shift,
            residual: 0.0,
            iterations: 0,
            born_ratio: None,
        });
    }

    let p_inv_apply = |v: &[C64], out: &mut Vec<C64>| {
        out.clear();
        out.extend_from_slice(v);
        fftn(out, &shape);
        for (o, p) in out.iter_mut().zip(&sym.values) {
            *o /= p;
        }
        ifftn(out, &shape);
    };
    let residual_of = |w: &[C64]| -> f64 {
        // (P − Q)W − q_θ
        let mut pw = w.to_vec();
        fftn(&mut pw, &shape);
        for (o, p) in pw.iter_mut().zip(&sym.values) {
            *o *= p;
        }
        ifftn(&mut pw, &shape);
        let mut acc = 0.0;
        for i in 0..n {
            let r = pw[i] - q_torus[i] * w[i] - q_theta[i];
            acc += r.norm_sqr();
        }
        acc.sqrt() / q_norm
    };

    let q_sup = q_torus.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let born_ok = 2.0 * q_sup / im_norm < 0.5;
    let mut w;
    let mut iterations = 0;
    let mut born_ratio = None;
    if born_ok {
        // W_{m+1} = P⁻¹(q_θ + Q W_m)
        let mut cur = Vec::new();
        p_inv_apply(&q_theta, &mut cur);
        let mut prev_delta = f64::INFINITY;
        let mut ratios: Vec<f64> = Vec::new();
        for it in 0..200 {
            iterations = it + 1;
            let rhs: Vec<C64> = (0..n).map(|i| q_theta[i] + q_torus[i] * cur[i]).collect();
            let mut next = Vec::new();
            p_inv_apply(&rhs, &mut next);
            let delta: f64 = (0..n)
                .map(|i| (next[i] - cur[i]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if prev_delta.is_finite() && prev_delta > 0.0 {
                ratios.push(delta / prev_delta);
            }
            prev_delta = delta;
            cur = next;
            if delta <= 0.1 * tolerance * q_norm / im_norm.max(1.0) {
                break;
            }
        }
        if !ratios.is_empty() {
            born_ratio = Some(ratios.iter().cloned().fold(0.0, f64::max));
        }
        w = cur;
        if residual_of(&w) > tolerance {
            // polish with GMRES from the Born result
            w = krylov_solve(&p_inv_apply, q_torus, &q_theta, n, tolerance, &residual_of)?;
        }
    } else {
        w = krylov_solve(&p_inv_apply, q_torus, &q_theta, n, tolerance, &residual_of)?;
    }
    let residual = residual_of(&w);
    if residual > tolerance {
        return Err(LabError::SolveFailure(format!(
            "faddeev solve stalled at relative residual {residual:.3e} (tolerance {tolerance:.1e})"
        )));
    }
    // back to nodal w = e^{iθ̃·x} W
    for (wi, ph) in w.iter_mut().zip(&sym.phase) {
        *wi *= ph;
    }
    Ok(CgoSolution {
        xi: xi.to_vec(),
        lambda,
        w,
        shift: sym.shift,
        residual,
        iterations,
        born_ratio,
    })
}

fn krylov_solve(
    p_inv_apply: &dyn Fn(&[C64], &mut Vec<C64>),
    q_torus: &[f64],
    q_theta: &[C64],
    n: usize,
    tolerance: f64,
    residual_of: &dyn Fn(&[C64]) -> f64,
) -> Result<Vec<C64>> {
    let apply = |v: &[C64], out: &mut [C64]| {
        // (I − P⁻¹ Q) v
        let qv: Vec<C64> = (0..n).map(|i| q_torus[i] * v[i]).collect();
        let mut tmp = Vec::new();
        p_inv_apply(&qv, &mut tmp);
        for i in 0..n {
            out[i] = v[i] - tmp[i];
        }
    };
    let mut rhs = Vec::new();
    p_inv_apply(q_theta, &mut rhs);
    let mut tol = tolerance * 1e-2;
    for _ in 0..3 {
        let out = gmres(&apply, None, &rhs, tol, 600, Some(120))?;
        let res = residual_of(&out.x);
        if res <= tolerance {
            return Ok(out.x);
        }
        tol *= 1e-2;
    }
    Err(LabError::SolveFailure(
        "faddeev Krylov iteration did not reach tolerance".into(),
    ))
}

/// Relative PDE residual of u_ξ in the solver's discrete calculus:
/// ‖(Δ+λ−q)u_ξ‖ / ‖u_ξ‖ with both sides carrying the CGO envelope.
pub fn cgo_pde_residual(torus: &Torus, q_torus: &[f64], sol: &CgoSolution) -> f64 {
    let shape = torus.shape().to_vec();
    let n = torus.len();
    let sym = build_symbol(torus, &sol.xi, &sol.shift);
    // W = e^{−iθ̃x} w
    let mut w_coords: Vec<C64> = (0..n).map(|i| sym.phase[i].conj() * sol.w[i]).collect();
    fftn(&mut w_coords, &shape);
    for (o, p) in w_coords.iter_mut().zip(&sym.values) {
        *o *= p;
    }
    ifftn(&mut w_coords, &shape);
    // conjugated residual field: (P−Q)W − q_θ, then weight by the envelope
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, idx) in torus.iter_multi().enumerate() {
        let x = torus.position(&idx);
        let im_dot: f64 = x.iter().zip(&sol.xi).map(|(xp, xc)| xp * xc.im).sum();
        let env = im_dot.exp();
        let q_theta_i = sym.phase[i].conj() * q_torus[i];
        let res = w_coords[i] - q_torus[i] * (sym.phase[i].conj() * sol.w[i]) - q_theta_i;
        num += (env * res.norm()).powi(2);
        let u_mag = (Complex::new(1.0, 0.0) + sol.w[i]).norm() * env;
        den += u_mag * u_mag;
    }
    (num / den).sqrt()
}

/// Least-squares fit of log‖w_ξ‖_{L²(M₀)} against log|Im ξ|.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// (|Im ξ|, ‖w‖_{L²(M₀)}) samples
    pub points: Vec<(f64, f64)>,
}

/// Probe the τ⁻¹ remainder decay: solve the conjugated equation for each τ and
/// regress log‖w‖_{L²(M₀)} on log|Im ξ|.
#[allow(clippy::too_many_arguments)]
pub fn decay_probe(
    grid: &Grid,
    partition: &RegionPartition,
    q: &[f64],
    lambda: f64,
    eta: &[f64],
    taus: &[f64],
    seed: u64,
    kappa: f64,
    tolerance: f64,
) -> Result<DecayFit> {
    if taus.len() < 4 {
        return Err(LabError::InvalidArgument(
            "decay probe needs at least 4 tau values".into(),
        ));
    }
    let max = taus.iter().cloned().fold(f64::MIN, f64::max);
    let min = taus.iter().cloned().fold(f64::MAX, f64::min);
    if max / min < 4.0 {
        return Err(LabError::InvalidArgument(
            "tau values must span at least a factor 4".into(),
        ));
    }
    let torus = Torus::enclosing(grid);
    let q_torus: Vec<f64> = {
        let embedded = torus.embed_interior(grid, q);
        embedded.iter().map(|v| v.re).collect()
    };
    let mut points = Vec::new();
    for &tau in taus {
        let dirs = make_xi_pair(eta, tau, lambda, seed, kappa, lambda.min(1.0))?;
        let sol = faddeev_solve(&torus, &q_torus, &dirs.xi1, tolerance)?;
        let wn = sol.w_l2_m0(&torus, grid, partition);
        points.push((dirs.im_norm(), wn));
    }
    if points.iter().all(|&(_, w)| w < 1e-300) {
        return Err(LabError::Degenerate(
            "all remainders vanish (q = 0?): no decay to fit".into(),
        ));
    }
    let (slope, intercept) = log_log_fit(&points)?;
    Ok(DecayFit {
        slope,
        intercept,
        points,
    })
}

/// Least squares of ln y on ln x.
pub fn log_log_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| x > 0.0 && y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if data.len() < 2 {
        return Err(LabError::Degenerate(
            "not enough positive points for a log-log fit".into(),
        ));
    }
    let n = data.len() as f64;
    let sx: f64 = data.iter().map(|p| p.0).sum();
    let sy: f64 = data.iter().map(|p| p.1).sum();
    let sxx: f64 = data.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = data.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-14 {
        return Err(LabError::Degenerate("degenerate abscissa in fit".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Ok((slope, intercept))
}

/// Empirical ϰ: slope of ln‖u_ξ‖_{H²(M₀)} against |Im ξ| over a set of solves.
pub fn fit_kappa_growth(points: &[(f64, f64)]) -> Result<f64> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(_, y)| y > 0.0)
        .map(|&(x, y)| (x, y.ln()))
        .collect();
    if data.len() < 2 {
        return Err(LabError::Degenerate("not enough points".into()));
    }
    let n = data.len() as f64;
    let sx: f64 = data.iter().map(|p| p.0).sum();
    let sy: f64 = data.iter().map(|p| p.1).sum();
    let sxx: f64 = data.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = data.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-14 {
        return Err(LabError::Degenerate("degenerate abscissa".into()));
    }
    Ok((n * sxy - sx * sy) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{carve_regions, BoxDomain, SubBox};
    use std::f64::consts::PI;

    #[test]
    fn xi_pair_worked_example() {
        // η = (1,0,0), λ = 4, τ = 3: |η₁|² = 13, |η₂|² = 9.25, ξ·ξ = 4
        let d = make_xi_pair(&[1.0, 0.0, 0.0], 3.0, 4.0, 7, 1.0, 1.0).unwrap();
        let m1sq: f64 = d.eta1.iter().map(|v| v * v).sum();
        let m2sq: f64 = d.eta2.iter().map(|v| v * v).sum();
        assert!((m1sq - 13.0).abs() < 1e-12);
        assert!((m2sq - 9.25).abs() < 1e-12);
        let xx = CgoDirections::xi_dot_xi(&d.xi1);
        assert!((xx - Complex::new(4.0, 0.0)).norm() < 1e-10 * 5.0);
        let xx2 = CgoDirections::xi_dot_xi(&d.xi2);
        assert!((xx2 - Complex::new(4.0, 0.0)).norm() < 1e-10 * 5.0);
        for a in 0..3 {
            let s = d.xi1[a] + d.xi2[a];
            assert!((s - Complex::new(d.eta[a], 0.0)).norm() < 1e-12);
        }
        // 0.25 + 13 - 9.25 = 4 = λ
        assert!((0.25 + m1sq - m2sq - 4.0).abs() < 1e-12);
    }

    #[test]
    fn xi_pair_zero_eta() {
        // η = 0, λ = 1, τ = 5: |η₂|² = |η₁|² − λ = 25, ξ·ξ = 26 − 25 = 1
        let d = make_xi_pair(&[0.0, 0.0, 0.0], 5.0, 1.0, 3, 1.0, 1.0).unwrap();
        let m1sq: f64 = d.eta1.iter().map(|v| v * v).sum();
        let m2sq: f64 = d.eta2.iter().map(|v| v * v).sum();
        assert!((m1sq - 26.0).abs() < 1e-12);
        assert!((m2sq - 25.0).abs() < 1e-12);
        let xx = CgoDirections::xi_dot_xi(&d.xi1);
        assert!((xx - Complex::new(1.0, 0.0)).norm() < 1e-10 * 2.0);
    }

    #[test]
    fn xi_pair_rejects_small_tau_and_n2() {
        assert!(make_xi_pair(&[1.0, 0.0, 0.0], 1.9, 4.0, 0, 1.0, 1.0).is_err());
        assert!(make_xi_pair(&[1.0, 0.0], 8.0, 4.0, 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn xi_pair_invariants_random() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..100 {
            let eta: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect();
            let tau = 2.5 + rng.random::<f64>() * 30.0;
            let lambda = 1.0 + rng.random::<f64>() * 40.0;
            let d = make_xi_pair(&eta, tau, lambda, trial, 1.0, 1.0).unwrap();
            let dot12: f64 = d.eta1.iter().zip(&d.eta2).map(|(a, b)| a * b).sum();
            let dot1e: f64 = d.eta1.iter().zip(&d.eta).map(|(a, b)| a * b).sum();
            let dot2e: f64 = d.eta2.iter().zip(&d.eta).map(|(a, b)| a * b).sum();
            let scale = (lambda + tau * tau).max(1.0);
            assert!(dot12.abs() <= 1e-12 * scale);
            assert!(dot1e.abs() <= 1e-12 * scale);
            assert!(dot2e.abs() <= 1e-12 * scale);
            let xx = CgoDirections::xi_dot_xi(&d.xi1);
            assert!((xx - Complex::new(lambda, 0.0)).norm() <= 1e-10 * (lambda + 1.0));
            let im = d.im_norm();
            let eta_norm = norm(&d.eta);
            assert!(im >= tau - 1e-12 && im <= tau + eta_norm / 2.0 + 1e-12);
            assert!(im > 2.0 * d.varpi);
        }
    }

    fn bump_field(grid: &Grid, part: &RegionPartition, amp: f64) -> Vec<f64> {
        crate::grid::smooth_window(grid, part)
            .into_iter()
            .map(|v| amp * v)
            .collect()
    }

    #[test]
    fn faddeev_zero_potential_gives_zero() {
        let g = Grid::build(BoxDomain::new(&[PI, PI, PI]).unwrap(), &[7, 7, 7]).unwrap();
        let t = Torus::enclosing(&g);
        let q = vec![0.0; t.len()];
        let d = make_xi_pair(&[1.0, 0.0, 0.0], 4.0, 2.0, 1, 1.0, 1.0).unwrap();
        let sol = faddeev_solve(&t, &q, &d.xi1, 1e-10).unwrap();
        let wmax = sol.w.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(wmax <= 1e-12);
    }

    #[test]
    fn faddeev_residual_within_tolerance() {
        let g = Grid::build(BoxDomain::new(&[PI, PI, PI]).unwrap(), &[9, 9, 9]).unwrap();
        let inner = SubBox::new(&[0.3 * PI; 3], &[0.7 * PI; 3]).unwrap();
        let part = carve_regions(&g, &[inner], 1).unwrap();
        let q = bump_field(&g, &part, 0.8);
        let t = Torus::enclosing(&g);
        let q_torus: Vec<f64> = t.embed_interior(&g, &q).iter().map(|v| v.re).collect();
        let tol = 1e-9;
        let d = make_xi_pair(&[1.0, 1.0, 0.0], 5.0, 3.0, 11, 1.0, 1.0).unwrap();
        let sol = faddeev_solve(&t, &q_torus, &d.xi1, tol).unwrap();
        assert!(sol.residual <= tol);
        let r = cgo_pde_residual(&t, &q_torus, &sol);
        assert!(r <= 10.0 * tol, "pde residual {r}");
        // Born ratio bound when the Born path was taken: ratio <= 2κ/|Imξ|
        if let Some(ratio) = sol.born_ratio {
            let bound = 2.0 * 0.8 / d.im_norm();
            assert!(
                ratio <= bound * 1.2 + 1e-12,
                "born ratio {ratio} vs bound {bound}"
            );
        }
    }

    #[test]
    fn kappa_growth_fit_recovers_exponent() {
        let kappa = 0.37;
        let points: Vec<(f64, f64)> = (1..8)
            .map(|k| {
                let x = k as f64 * 2.0;
                (x, 3.0 * (kappa * x).exp())
            })
            .collect();
        let fitted = fit_kappa_growth(&points).unwrap();
        assert!((fitted - kappa).abs() < 1e-12);
    }

    #[test]
    fn faddeev_decay_slope_near_minus_one() {
        let g = Grid::build(BoxDomain::new(&[PI, PI, PI]).unwrap(), &[9, 9, 9]).unwrap();
        let inner = SubBox::new(&[0.3 * PI; 3], &[0.7 * PI; 3]).unwrap();
        let part = carve_regions(&g, &[inner], 1).unwrap();
        let q = bump_field(&g, &part, 0.5);
        let taus = [3.0, 6.0, 12.0, 24.0];
        let fit = decay_probe(&g, &part, &q, 2.0, &[1.0, 0.0, 0.0], &taus, 5, 1.0, 1e-9).unwrap();
        assert!(
            fit.slope > -1.3 && fit.slope < -0.7,
            "slope {} outside [-1.3, -0.7]; points {:?}",
            fit.slope,
            fit.points
        );
        // slope invariant under rotating the seed
        let fit2 = decay_probe(&g, &part, &q, 2.0, &[1.0, 0.0, 0.0], &taus, 77, 1.0, 1e-9).unwrap();
        assert!((fit.slope - fit2.slope).abs() < 0.15, "{} vs {}", fit.slope, fit2.slope);
        // q = 0 rejected as degenerate
        let zero = vec![0.0; g.n_interior()];
        assert!(matches!(
            decay_probe(&g, &part, &zero, 2.0, &[1.0, 0.0, 0.0], &taus, 5, 1.0, 1e-9),
            Err(LabError::Degenerate(_))
        ));
    }
}
