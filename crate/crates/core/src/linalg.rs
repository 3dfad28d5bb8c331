//! Shared numerical kernels: axis-wise FFTs, DST-I fast Dirichlet solves,
//! a tridiagonal QL eigensolver, Lanczos with deflation restarts, and the
//! Krylov solvers (GMRES, BiCGStab) used by the forward solvers.

use crate::error::{LabError, Result};
use crate::grid::C64;
use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Process-wide FFT plan cache (rustfft plans are Send + Sync).
pub struct FftCache {
    planner: Mutex<FftPlanner<f64>>,
    forward: Mutex<HashMap<usize, Arc<dyn Fft<f64>>>>,
    inverse: Mutex<HashMap<usize, Arc<dyn Fft<f64>>>>,
}

impl FftCache {
    fn new() -> Self {
        Self {
            planner: Mutex::new(FftPlanner::new()),
            forward: Mutex::new(HashMap::new()),
            inverse: Mutex::new(HashMap::new()),
        }
    }

    pub fn global() -> &'static FftCache {
        static CACHE: std::sync::OnceLock<FftCache> = std::sync::OnceLock::new();
        CACHE.get_or_init(FftCache::new)
    }

    pub fn forward(&self, len: usize) -> Arc<dyn Fft<f64>> {
        let mut map = self.forward.lock().unwrap();
        map.entry(len)
            .or_insert_with(|| self.planner.lock().unwrap().plan_fft_forward(len))
            .clone()
    }

    pub fn inverse(&self, len: usize) -> Arc<dyn Fft<f64>> {
        let mut map = self.inverse.lock().unwrap();
        map.entry(len)
            .or_insert_with(|| self.planner.lock().unwrap().plan_fft_inverse(len))
            .clone()
    }
}

/// In-place FFT along one axis of a row-major (last axis fastest) array.
///
/// `inverse` applies the unnormalized inverse transform; callers handle 1/N.
pub fn fft_axis(data: &mut [C64], shape: &[usize], axis: usize, inverse: bool) {
    let len = shape[axis];
    let fft = if inverse {
        FftCache::global().inverse(len)
    } else {
        FftCache::global().forward(len)
    };
    // stride between consecutive entries along `axis`
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let inner = stride;
    let mut line = vec![Complex::new(0.0, 0.0); len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * stride + i;
            for j in 0..len {
                line[j] = data[base + j * stride];
            }
            fft.process(&mut line);
            for j in 0..len {
                data[base + j * stride] = line[j];
            }
        }
    }
}

/// Full n-dimensional forward FFT (unnormalized).
pub fn fftn(data: &mut [C64], shape: &[usize]) {
    for axis in 0..shape.len() {
        fft_axis(data, shape, axis, false);
    }
}

/// Full n-dimensional inverse FFT, normalized by 1/∏N.
pub fn ifftn(data: &mut [C64], shape: &[usize]) {
    for axis in 0..shape.len() {
        fft_axis(data, shape, axis, true);
    }
    let scale = 1.0 / shape.iter().product::<usize>() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// DST-I of length-N complex data: S[k] = Σ_{j=1..N} x_j sin(πjk/(N+1)), k = 1..N.
///
/// Realized through a length 2(N+1) FFT of the odd extension. The transform is
/// its own inverse up to the factor 2/(N+1).
pub struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
}

impl Dst1 {
    pub fn new(n: usize) -> Self {
        let m = 2 * (n + 1);
        Self {
            n,
            fft: FftCache::global().forward(m),
            scratch: vec![Complex::new(0.0, 0.0); m],
        }
    }

    pub fn apply(&mut self, x: &mut [C64]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        let m = 2 * (n + 1);
        self.scratch[0] = Complex::new(0.0, 0.0);
        self.scratch[n + 1] = Complex::new(0.0, 0.0);
        for j in 0..n {
            self.scratch[j + 1] = x[j];
            self.scratch[m - 1 - j] = -x[j];
        }
        self.fft.process(&mut self.scratch);
        // Y[k] = -2i S[k]  =>  S[k] = (i/2) Y[k]
        let half_i = Complex::new(0.0, 0.5);
        for k in 0..n {
            x[k] = half_i * self.scratch[k + 1];
        }
    }
}

/// Tensor DST-I machinery on an interior grid: diagonalizes the Dirichlet
/// (2n+1)-point Laplacian exactly.
pub struct DirichletSpectral {
    shape: Vec<usize>,
    /// per-axis stencil eigenvalues (4/h²)sin²(kπ/(2(N+1))), k = 1..N
    axis_eigs: Vec<Vec<f64>>,
}

impl DirichletSpectral {
    pub fn new(shape: &[usize], spacing: &[f64]) -> Self {
        let axis_eigs = shape
            .iter()
            .zip(spacing)
            .map(|(&n, &h)| {
                (1..=n)
                    .map(|k| {
                        let s = (k as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin();
                        4.0 / (h * h) * s * s
                    })
                    .collect()
            })
            .collect();
        Self {
            shape: shape.to_vec(),
            axis_eigs,
        }
    }

    pub fn stencil_eig(&self, idx: &[usize]) -> f64 {
        idx.iter()
            .enumerate()
            .map(|(a, &k)| self.axis_eigs[a][k])
            .sum()
    }

    fn dst_all_axes(&self, data: &mut [C64]) {
        for axis in 0..self.shape.len() {
            let n = self.shape[axis];
            let mut dst = Dst1::new(n);
            let stride: usize = self.shape[axis + 1..].iter().product();
            let outer: usize = self.shape[..axis].iter().product();
            let mut line = vec![Complex::new(0.0, 0.0); n];
            for o in 0..outer {
                for i in 0..stride {
                    let base = o * n * stride + i;
                    for j in 0..n {
                        line[j] = data[base + j * stride];
                    }
                    dst.apply(&mut line);
                    for j in 0..n {
                        data[base + j * stride] = line[j];
                    }
                }
            }
        }
    }

    /// Solve (−Δ_h + γ) u = f for the Dirichlet stencil Laplacian. The caller
    /// must ensure min |μ_k + γ| is acceptable; returns that minimum.
    pub fn solve_shifted(&self, f: &[C64], gamma: f64, out: &mut [C64]) -> f64 {
        out.copy_from_slice(f);
        self.dst_all_axes(out);
        let mut min_abs = f64::INFINITY;
        let mut idx = vec![0usize; self.shape.len()];
        for v in out.iter_mut() {
            let denom = self.stencil_eig(&idx) + gamma;
            min_abs = min_abs.min(denom.abs());
            *v /= denom;
            // advance multi-index (last axis fastest)
            for k in (0..self.shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < self.shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        self.dst_all_axes(out);
        let scale: f64 = self
            .shape
            .iter()
            .map(|&n| 2.0 / (n + 1) as f64)
            .product();
        for v in out.iter_mut() {
            *v *= scale;
        }
        min_abs
    }

    /// Smallest |μ_k + γ| over the stencil spectrum.
    pub fn min_shift_abs(&self, gamma: f64) -> f64 {
        let mut min_abs = f64::INFINITY;
        let mut idx = vec![0usize; self.shape.len()];
        let total: usize = self.shape.iter().product();
        for _ in 0..total {
            min_abs = min_abs.min((self.stencil_eig(&idx) + gamma).abs());
            for k in (0..self.shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < self.shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        min_abs
    }
}

/// Symmetric tridiagonal eigensolver (implicit QL with shifts), returning
/// ascending eigenvalues and, optionally, the orthonormal eigenvector matrix
/// stored column-major as `z[i + m*j]` = component i of eigenvector j.
pub fn tridiag_eig(diag: &[f64], off: &[f64], want_vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let m = diag.len();
    assert!(off.len() + 1 == m || (m == 0 && off.is_empty()));
    let mut d = diag.to_vec();
    let mut e = vec![0.0; m];
    e[..m - 1].copy_from_slice(off);
    let mut z = if want_vectors {
        let mut id = vec![0.0; m * m];
        for i in 0..m {
            id[i + m * i] = 1.0;
        }
        Some(id)
    } else {
        None
    };
    for l in 0..m {
        let mut iter = 0;
        loop {
            // find small subdiagonal element
            let mut mm = l;
            while mm < m - 1 {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(LabError::SolveFailure(
                    "tridiagonal QL failed to converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[mm] - d[l] + e[l] / (g + if g >= 0.0 { r.abs() } else { -r.abs() });
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            for i in (l..mm).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(zm) = z.as_mut() {
                    for k in 0..m {
                        f = zm[k + m * (i + 1)];
                        zm[k + m * (i + 1)] = s * zm[k + m * i] + c * f;
                        zm[k + m * i] = c * zm[k + m * i] - s * f;
                    }
                }
            }
            if r == 0.0 && mm > l + 1 {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }
    // sort ascending, permuting vectors alongside
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let sorted_d: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let sorted_z = z.map(|zm| {
        let mut out = vec![0.0; m * m];
        for (jnew, &jold) in order.iter().enumerate() {
            out[m * jnew..m * (jnew + 1)].copy_from_slice(&zm[m * jold..m * (jold + 1)]);
        }
        out
    });
    Ok((sorted_d, sorted_z))
}

pub struct LanczosResult {
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct LanczosState {
    vals: Vec<f64>,
    vecs: Vec<Vec<f64>>,
    res: Vec<f64>,
    worst_residual: f64,
}

/// One Lanczos sweep deflated against the locked vectors; locks up to `want`
/// converged smallest Ritz pairs and returns how many were locked.
fn lanczos_sweep(
    apply: &dyn Fn(&[f64], &mut [f64]),
    n: usize,
    want: usize,
    tol: f64,
    budget: usize,
    start: Vec<f64>,
    state: &mut LanczosState,
) -> Result<usize> {
    let mut basis: Vec<Vec<f64>> = vec![start];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut exhausted = false;
    let mut locked_now = 0;

    for m in 0..budget {
        apply(&basis[m], &mut w);
        for pass in 0..2 {
            for l in &state.vecs {
                let c = dot(&w, l);
                w.iter_mut().zip(l).for_each(|(x, y)| *x -= c * y);
            }
            for (bi, b) in basis.iter().enumerate() {
                let c = dot(&w, b);
                if pass == 0 && bi == m {
                    alphas.push(c);
                }
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let beta = norm2(&w);
        let done_growing = m + 1 == budget || beta < 1e-13;
        if beta >= 1e-13 && !done_growing {
            betas.push(beta);
            let mut next = w.clone();
            next.iter_mut().for_each(|x| *x /= beta);
            basis.push(next);
        } else {
            exhausted = true;
        }
        let msize = alphas.len();
        if !(done_growing || (msize % 10 == 0 && msize >= 10)) {
            continue;
        }
        let (theta, zopt) = tridiag_eig(&alphas, &betas[..msize - 1], true)?;
        let z = zopt.unwrap();
        let last_beta = if exhausted { 0.0 } else { *betas.last().unwrap() };
        let mut conv = 0;
        for j in 0..msize {
            let bound = (last_beta * z[(msize - 1) + msize * j]).abs();
            if bound <= tol * theta[j].abs().max(1.0) {
                conv += 1;
            } else {
                break;
            }
        }
        if conv >= want.min(msize) || done_growing || exhausted {
            // lock every converged pair (the whole subspace is exact when the
            // Krylov space is exhausted) — extra locks are truncated later
            let take = if exhausted { msize } else { conv };
            for j in 0..take {
                let mut vec = vec![0.0; n];
                for (i, b) in basis.iter().take(msize).enumerate() {
                    let c = z[i + msize * j];
                    vec.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
                }
                apply(&vec, &mut w);
                let mut res = 0.0;
                for (wi, vi) in w.iter().zip(&vec) {
                    let r = wi - theta[j] * vi;
                    res += r * r;
                }
                let res = res.sqrt();
                state.worst_residual = state.worst_residual.max(res);
                if res <= tol * theta[j].abs().max(1.0) * 10.0 {
                    for l in &state.vecs {
                        let c = dot(&vec, l);
                        vec.iter_mut().zip(l).for_each(|(x, y)| *x -= c * y);
                    }
                    let nv = norm2(&vec);
                    if nv > 1e-8 {
                        vec.iter_mut().for_each(|x| *x /= nv);
                        state.vals.push(theta[j]);
                        state.vecs.push(vec);
                        state.res.push(res);
                        locked_now += 1;
                    }
                }
            }
            return Ok(locked_now);
        }
    }
    Ok(locked_now)
}

/// Lanczos with full reorthogonalization and deflation restarts for the k
/// smallest eigenpairs of a symmetric operator.
///
/// Restarting from fresh seeded vectors recovers multiplicities (the box
/// Laplacian is degenerate); the final restarts act as verification probes and
/// the routine only stops once a probe finds nothing new below the k-th
/// locked eigenvalue.
pub fn lanczos_smallest(
    apply: &dyn Fn(&[f64], &mut [f64]),
    n: usize,
    k: usize,
    tol: f64,
    max_basis: usize,
    seed: u64,
) -> Result<LanczosResult> {
    assert!(k >= 1 && k <= n);
    let max_basis = max_basis.min(n);
    let mut state = LanczosState {
        vals: Vec::new(),
        vecs: Vec::new(),
        res: Vec::new(),
        worst_residual: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_restarts = 24;
    let probe_extra = 3;
    let mut no_lock_streak = 0;

    for _restart in 0..max_restarts {
        if state.vecs.len() >= n {
            break;
        }
        let mut v = vec![0.0; n];
        for x in v.iter_mut() {
            *x = rng.random::<f64>() - 0.5;
        }
        for ws in &state.vecs {
            let c = dot(&v, ws);
            v.iter_mut().zip(ws).for_each(|(x, y)| *x -= c * y);
        }
        let nv = norm2(&v);
        if nv < 1e-14 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);

        let want = k.saturating_sub(state.vals.len()) + probe_extra;
        let budget = max_basis.max(8).min(n - state.vecs.len());
        if budget == 0 {
            break;
        }
        let before = state.vals.len();
        let added = lanczos_sweep(apply, n, want, tol, budget, v, &mut state)?;
        if added == 0 {
            no_lock_streak += 1;
            if no_lock_streak >= 2 {
                break;
            }
            continue;
        }
        no_lock_streak = 0;
        if state.vals.len() >= k {
            // completeness check: no newly found eigenvalue may undercut the
            // current k-th smallest, otherwise another copy could be missing
            let mut sorted = state.vals.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let kth = sorted[k - 1];
            let min_new = state.vals[before..]
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if min_new >= kth - 1e-8 * kth.abs().max(1.0) {
                break;
            }
        }
    }

    if state.vals.len() < k {
        return Err(LabError::EigenNoConvergence {
            requested: k,
            converged: state.vals.len(),
            residual: state.worst_residual,
        });
    }
    let mut order: Vec<usize> = (0..state.vals.len()).collect();
    order.sort_by(|&a, &b| state.vals[a].partial_cmp(&state.vals[b]).unwrap());
    order.truncate(k);
    Ok(LanczosResult {
        eigenvalues: order.iter().map(|&i| state.vals[i]).collect(),
        vectors: order.iter().map(|&i| state.vecs[i].clone()).collect(),
        residuals: order.iter().map(|&i| state.res[i]).collect(),
    })
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn cnorm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub struct KrylovOutcome {
    pub x: Vec<C64>,
    pub rel_residual: f64,
    pub iterations: usize,
}

/// Right-preconditioned GMRES with modified Gram-Schmidt and Givens rotations.
///
/// `restart = None` keeps growing the basis up to `max_iter`. The reported
/// relative residual is recomputed from an explicit matvec at the end.
pub fn gmres(
    apply: &dyn Fn(&[C64], &mut [C64]),
    precond: Option<&dyn Fn(&[C64], &mut [C64])>,
    b: &[C64],
    tol_rel: f64,
    max_iter: usize,
    restart: Option<usize>,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let bnorm = cnorm(b);
    if bnorm == 0.0 {
        return Ok(KrylovOutcome {
            x: vec![Complex::new(0.0, 0.0); n],
            rel_residual: 0.0,
            iterations: 0,
        });
    }
    let cycle = restart.unwrap_or(max_iter).max(1);
    let mut x = vec![Complex::new(0.0, 0.0); n];
    let mut total_iters = 0;
    let mut scratch = vec![Complex::new(0.0, 0.0); n];
    let mut r = b.to_vec();

    'outer: while total_iters < max_iter {
        // r = b - A x
        if total_iters > 0 {
            apply(&x, &mut scratch);
            for i in 0..n {
                r[i] = b[i] - scratch[i];
            }
        }
        let beta = cnorm(&r);
        if beta / bnorm <= tol_rel {
            break;
        }
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(cycle + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h: Vec<Vec<C64>> = Vec::new(); // h[j] has j+2 entries
        let mut cs: Vec<C64> = Vec::new();
        let mut sn: Vec<C64> = Vec::new();
        let mut g: Vec<C64> = vec![Complex::new(beta, 0.0)];

        for j in 0..cycle {
            if total_iters >= max_iter {
                break;
            }
            total_iters += 1;
            // w = A M⁻¹ v_j
            let vin: &[C64] = &basis[j];
            let mut w = vec![Complex::new(0.0, 0.0); n];
            if let Some(m) = precond {
                m(vin, &mut scratch);
                apply(&scratch, &mut w);
            } else {
                apply(vin, &mut w);
            }
            let mut hj = Vec::with_capacity(j + 2);
            for b_i in basis.iter() {
                let c = cdot(b_i, &w);
                hj.push(c);
                w.iter_mut().zip(b_i).for_each(|(x, y)| *x -= c * y);
            }
            // one round of reorthogonalization
            for (idx, b_i) in basis.iter().enumerate() {
                let c = cdot(b_i, &w);
                hj[idx] += c;
                w.iter_mut().zip(b_i).for_each(|(x, y)| *x -= c * y);
            }
            let hnext = cnorm(&w);
            hj.push(Complex::new(hnext, 0.0));
            // apply accumulated Givens rotations to the new column
            for i in 0..j {
                let t = cs[i].conj() * hj[i] + sn[i].conj() * hj[i + 1];
                hj[i + 1] = -sn[i] * hj[i] + cs[i] * hj[i + 1];
                hj[i] = t;
            }
            // new rotation to kill hj[j+1]
            let (c_new, s_new) = {
                let a = hj[j];
                let bb = hj[j + 1];
                let denom = (a.norm_sqr() + bb.norm_sqr()).sqrt();
                if denom == 0.0 {
                    (Complex::new(1.0, 0.0), Complex::new(0.0, 0.0))
                } else {
                    (a / denom, bb / denom)
                }
            };
            let t = c_new.conj() * hj[j] + s_new.conj() * hj[j + 1];
            hj[j] = t;
            hj[j + 1] = Complex::new(0.0, 0.0);
            cs.push(c_new);
            sn.push(s_new);
            let gj = g[j];
            g.push(-s_new * gj);
            g[j] = c_new.conj() * gj;
            h.push(hj);
            let res_est = g[j + 1].norm() / bnorm;
            if res_est <= tol_rel || hnext < 1e-300 || j + 1 == cycle {
                // back-substitute y from H y = g
                let msize = h.len();
                let mut y = vec![Complex::new(0.0, 0.0); msize];
                for row in (0..msize).rev() {
                    let mut acc = g[row];
                    for col in row + 1..msize {
                        acc -= h[col][row] * y[col];
                    }
                    y[row] = acc / h[row][row];
                }
                // x += M⁻¹ (V y)
                let mut update = vec![Complex::new(0.0, 0.0); n];
                for (col, yc) in y.iter().enumerate() {
                    update
                        .iter_mut()
                        .zip(&basis[col])
                        .for_each(|(u, v)| *u += yc * v);
                }
                if let Some(m) = precond {
                    m(&update, &mut scratch);
                    x.iter_mut().zip(&scratch).for_each(|(xi, u)| *xi += u);
                } else {
                    x.iter_mut().zip(&update).for_each(|(xi, u)| *xi += u);
                }
                if res_est <= tol_rel || hnext < 1e-300 {
                    break 'outer;
                }
                break; // restart cycle
            }
            let mut next = w;
            next.iter_mut().for_each(|v| *v /= hnext);
            basis.push(next);
        }
    }

    apply(&x, &mut scratch);
    let mut res = 0.0;
    for i in 0..n {
        res += (b[i] - scratch[i]).norm_sqr();
    }
    let rel = res.sqrt() / bnorm;
    Ok(KrylovOutcome {
        x,
        rel_residual: rel,
        iterations: total_iters,
    })
}

/// BiCGStab with an optional diagonal (Jacobi) preconditioner.
pub fn bicgstab(
    apply: &dyn Fn(&[C64], &mut [C64]),
    diag_inv: Option<&[C64]>,
    b: &[C64],
    tol_rel: f64,
    max_iter: usize,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let bnorm = cnorm(b);
    if bnorm == 0.0 {
        return Ok(KrylovOutcome {
            x: vec![Complex::new(0.0, 0.0); n],
            rel_residual: 0.0,
            iterations: 0,
        });
    }
    let prec = |v: &[C64], out: &mut Vec<C64>| {
        out.clear();
        match diag_inv {
            Some(d) => out.extend(v.iter().zip(d).map(|(x, di)| x * di)),
            None => out.extend_from_slice(v),
        }
    };
    let mut x = vec![Complex::new(0.0, 0.0); n];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut rho_old = Complex::new(1.0, 0.0);
    let mut alpha = Complex::new(1.0, 0.0);
    let mut omega = Complex::new(1.0, 0.0);
    let mut v = vec![Complex::new(0.0, 0.0); n];
    let mut p = vec![Complex::new(0.0, 0.0); n];
    let mut phat = Vec::new();
    let mut shat = Vec::new();
    let mut t = vec![Complex::new(0.0, 0.0); n];
    let mut iters = 0;
    while iters < max_iter {
        iters += 1;
        let rho = cdot(&r0, &r);
        if rho.norm() < 1e-300 {
            break;
        }
        let beta = (rho / rho_old) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        prec(&p, &mut phat);
        apply(&phat, &mut v);
        alpha = rho / cdot(&r0, &v);
        let mut s = r.clone();
        for i in 0..n {
            s[i] -= alpha * v[i];
        }
        if cnorm(&s) / bnorm <= tol_rel {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            break;
        }
        prec(&s, &mut shat);
        apply(&shat, &mut t);
        let tt = cdot(&t, &t);
        if tt.norm() < 1e-300 {
            break;
        }
        omega = cdot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        if cnorm(&r) / bnorm <= tol_rel {
            break;
        }
        if omega.norm() < 1e-300 {
            break;
        }
        rho_old = rho;
    }
    let mut scratch = vec![Complex::new(0.0, 0.0); n];
    apply(&x, &mut scratch);
    let mut res = 0.0;
    for i in 0..n {
        res += (b[i] - scratch[i]).norm_sqr();
    }
    Ok(KrylovOutcome {
        x,
        rel_residual: res.sqrt() / bnorm,
        iterations: iters,
    })
}

/// Power iteration estimate of the largest singular value of a real matrix
/// given through matvec closures; used as the independent oracle against SVD.
pub fn power_iteration_sigma_max(
    apply: &dyn Fn(&[f64], &mut [f64]),
    apply_t: &dyn Fn(&[f64], &mut [f64]),
    n_cols: usize,
    n_rows: usize,
    iters: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n_cols).map(|_| rng.random::<f64>() - 0.5).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut av = vec![0.0; n_rows];
    let mut atav = vec![0.0; n_cols];
    let mut sigma = 0.0;
    for _ in 0..iters {
        apply(&v, &mut av);
        apply_t(&av, &mut atav);
        let nn = norm2(&atav);
        if nn == 0.0 {
            return 0.0;
        }
        sigma = nn.sqrt();
        v.copy_from_slice(&atav);
        v.iter_mut().for_each(|x| *x /= nn);
    }
    sigma
}
