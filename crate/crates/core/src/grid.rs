//! Box geometry, uniform grids, nested interior regions, boundary patches and
//! cutoff fields.
//!
//! Everything downstream works on a tensor grid over a box ∏(0, L_j): interior
//! nodes at x_j = (i_j+1)·h_j with h_j = L_j/(N_j+1), and boundary nodes on the
//! open faces (edges and corners of the lattice are never referenced by any
//! stencil used in this crate). All types are immutable after construction.

use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

/// Axis-aligned box domain ∏_j (0, L_j), dim ∈ {2, 3}.
///
/// dim = 2 is demonstration mode: the CGO and reconstruction modules reject it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    side_lengths: Vec<f64>,
}

impl BoxDomain {
    pub fn new(side_lengths: &[f64]) -> Result<Self> {
        let dim = side_lengths.len();
        if dim != 2 && dim != 3 {
            return Err(LabError::InvalidGrid(format!(
                "dim must be 2 or 3, got {dim}"
            )));
        }
        if side_lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(LabError::InvalidGrid(format!(
                "side lengths must be positive finite, got {side_lengths:?}"
            )));
        }
        Ok(Self {
            side_lengths: side_lengths.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.side_lengths.len()
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.side_lengths[axis]
    }

    pub fn sides(&self) -> &[f64] {
        &self.side_lengths
    }

    pub fn volume(&self) -> f64 {
        self.side_lengths.iter().product()
    }

    pub fn max_side(&self) -> f64 {
        self.side_lengths.iter().cloned().fold(0.0, f64::max)
    }
}

/// Uniform tensor grid of interior nodes over a [`BoxDomain`].
///
/// Linear indices are row-major with the last axis fastest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    domain: BoxDomain,
    counts: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    /// Build a grid with the given interior node counts per axis.
    pub fn build(domain: BoxDomain, resolution: &[usize]) -> Result<Self> {
        if resolution.len() != domain.dim() {
            return Err(LabError::InvalidGrid(format!(
                "resolution has {} entries for dim {}",
                resolution.len(),
                domain.dim()
            )));
        }
        if let Some(&bad) = resolution.iter().find(|&&n| n < 3) {
            return Err(LabError::InvalidGrid(format!(
                "every resolution must be >= 3, got {bad}"
            )));
        }
        let spacing: Vec<f64> = resolution
            .iter()
            .zip(domain.sides())
            .map(|(&n, &l)| l / (n + 1) as f64)
            .collect();
        // spacing * (count+1) must reproduce the side length.
        for ((&h, &n), &l) in spacing.iter().zip(resolution).zip(domain.sides()) {
            let rel = (h * (n + 1) as f64 - l).abs() / l;
            if rel > 1e-12 {
                return Err(LabError::InvalidGrid(format!(
                    "spacing inconsistency: rel error {rel:.3e}"
                )));
            }
        }
        Ok(Self {
            domain,
            counts: resolution.to_vec(),
            spacing,
        })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Number of interior nodes.
    pub fn n_interior(&self) -> usize {
        self.counts.iter().product()
    }

    /// Quadrature weight of one interior node, ∏ h_j.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Linear index of an interior multi-index (entries in 0..N_j).
    pub fn lin(&self, idx: &[usize]) -> usize {
        let mut out = 0;
        for (k, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.counts[k]);
            out = out * self.counts[k] + i;
        }
        out
    }

    /// Multi-index of a linear interior index.
    pub fn multi(&self, mut lin: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = lin % self.counts[k];
            lin /= self.counts[k];
        }
        idx
    }

    /// Physical coordinates of an interior multi-index.
    pub fn position(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.spacing)
            .map(|(&i, &h)| (i + 1) as f64 * h)
            .collect()
    }

    /// Iterate all interior multi-indices in linear order.
    pub fn iter_multi(&self) -> MultiIter {
        MultiIter {
            counts: self.counts.clone(),
            next: Some(vec![0; self.dim()]),
        }
    }

    /// Evaluate a function of position into a nodal field.
    pub fn field_from_fn(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.iter_multi().map(|idx| f(&self.position(&idx))).collect()
    }
}

pub struct MultiIter {
    counts: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for MultiIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.take()?;
        let mut nxt = cur.clone();
        for k in (0..self.counts.len()).rev() {
            nxt[k] += 1;
            if nxt[k] < self.counts[k] {
                self.next = Some(nxt);
                break;
            }
            nxt[k] = 0;
        }
        Some(cur)
    }
}

/// Which end of an axis a face sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Lo,
    Hi,
}

/// Closed axis-aligned sub-box in physical coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SubBox {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| a >= b) {
            return Err(LabError::InvalidRegion(format!(
                "degenerate sub-box lo={lo:?} hi={hi:?}"
            )));
        }
        Ok(Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        })
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(k, &v)| v >= self.lo[k] - 1e-14 && v <= self.hi[k] + 1e-14)
    }

    pub fn contains_open(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(k, &v)| v > self.lo[k] + 1e-14 && v < self.hi[k] - 1e-14)
    }

    fn dilated(&self, margins: &[f64]) -> SubBox {
        SubBox {
            lo: self.lo.iter().zip(margins).map(|(a, m)| a - m).collect(),
            hi: self.hi.iter().zip(margins).map(|(a, m)| a + m).collect(),
        }
    }
}

/// Nested regions M₀ ⊂ Int(M′₀) ⊂ M′₀ ⊂ Int(M) and the complement M₁ = M ∖ Int(M₀).
///
/// M₀ may be a union of sub-boxes; M′₀ is the union of the sub-boxes dilated by
/// `margin_layers` grid layers. Node membership is recorded as masks over the
/// interior nodes, and M₁'s interior node set is required to be edge-connected.
#[derive(Debug, Clone)]
pub struct RegionPartition {
    inner: Vec<SubBox>,
    buffer: Vec<SubBox>,
    margin_widths: Vec<f64>,
    m0_mask: Vec<bool>,
    m0p_mask: Vec<bool>,
    m1_mask: Vec<bool>,
    m0_nodes: Vec<usize>,
}

impl RegionPartition {
    pub fn inner_boxes(&self) -> &[SubBox] {
        &self.inner
    }

    pub fn buffer_boxes(&self) -> &[SubBox] {
        &self.buffer
    }

    pub fn margin_widths(&self) -> &[f64] {
        &self.margin_widths
    }

    pub fn m0_mask(&self) -> &[bool] {
        &self.m0_mask
    }

    pub fn m0_prime_mask(&self) -> &[bool] {
        &self.m0p_mask
    }

    pub fn m1_mask(&self) -> &[bool] {
        &self.m1_mask
    }

    /// Linear indices of the M₀ nodes, ascending.
    pub fn m0_nodes(&self) -> &[usize] {
        &self.m0_nodes
    }
}

/// Carve M₀ (union of `inner` boxes) and M′₀ (dilation by `margin_layers` layers)
/// out of the grid, checking the nesting margins and M₁ connectivity.
pub fn carve_regions(
    grid: &Grid,
    inner: &[SubBox],
    margin_layers: usize,
) -> Result<RegionPartition> {
    if inner.is_empty() {
        return Err(LabError::InvalidRegion("empty inner region".into()));
    }
    if margin_layers < 1 {
        return Err(LabError::InvalidRegion("margin_layers must be >= 1".into()));
    }
    let dim = grid.dim();
    let margins: Vec<f64> = grid.spacing().iter().map(|h| h * margin_layers as f64).collect();
    // Every inner box needs >= 2*margin_layers grid layers of clearance to each face.
    for b in inner {
        if b.lo.len() != dim {
            return Err(LabError::InvalidRegion("sub-box dim mismatch".into()));
        }
        for k in 0..dim {
            let clearance = 2.0 * margins[k];
            if b.lo[k] < clearance - 1e-12 || b.hi[k] > grid.domain().side(k) - clearance + 1e-12 {
                return Err(LabError::InvalidRegion(format!(
                    "inner box touches or crowds the boundary on axis {k}: need {clearance:.3e} clearance, box [{:.3e}, {:.3e}] in (0, {:.3e})",
                    b.lo[k], b.hi[k], grid.domain().side(k)
                )));
            }
        }
    }
    let buffer: Vec<SubBox> = inner.iter().map(|b| b.dilated(&margins)).collect();

    let n = grid.n_interior();
    let mut m0_mask = vec![false; n];
    let mut m0p_mask = vec![false; n];
    let mut m1_mask = vec![false; n];
    let mut m0_nodes = Vec::new();
    for (lin, idx) in grid.iter_multi().enumerate() {
        let x = grid.position(&idx);
        let in_m0 = inner.iter().any(|b| b.contains_closed(&x));
        let in_m0_open = inner.iter().any(|b| b.contains_open(&x));
        let in_m0p = buffer.iter().any(|b| b.contains_closed(&x));
        m0_mask[lin] = in_m0;
        m0p_mask[lin] = in_m0p;
        m1_mask[lin] = !in_m0_open;
        if in_m0 {
            m0_nodes.push(lin);
        }
    }
    if m0_nodes.is_empty() {
        return Err(LabError::InvalidRegion(
            "inner region contains no grid nodes".into(),
        ));
    }
    // M₀ strictly inside M′₀: at least one node layer of margin on every side.
    for (lin, idx) in grid.iter_multi().enumerate() {
        if !m0_mask[lin] {
            continue;
        }
        for k in 0..dim {
            for d in [-1isize, 1] {
                let j = idx[k] as isize + d;
                if j < 0 || j >= grid.counts()[k] as isize {
                    return Err(LabError::InvalidRegion(
                        "M0 reaches the outermost node layer".into(),
                    ));
                }
                let mut nb = idx.clone();
                nb[k] = j as usize;
                if !m0p_mask[grid.lin(&nb)] {
                    return Err(LabError::InvalidRegion(
                        "M0 not strictly inside M0': missing node margin".into(),
                    ));
                }
            }
        }
    }
    if !is_edge_connected(grid, &m1_mask) {
        return Err(LabError::InvalidRegion(
            "M1 = M \\ Int(M0) is not edge-connected at grid resolution".into(),
        ));
    }
    Ok(RegionPartition {
        inner: inner.to_vec(),
        buffer,
        margin_widths: margins,
        m0_mask,
        m0p_mask,
        m1_mask,
        m0_nodes,
    })
}

/// Breadth-first flood fill over the masked interior nodes (2·dim neighborhood).
fn is_edge_connected(grid: &Grid, mask: &[bool]) -> bool {
    let n = grid.n_interior();
    let start = match (0..n).find(|&i| mask[i]) {
        Some(s) => s,
        None => return false,
    };
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    let mut count = 1usize;
    while let Some(cur) = queue.pop_front() {
        let idx = grid.multi(cur);
        for k in 0..grid.dim() {
            for d in [-1isize, 1] {
                let j = idx[k] as isize + d;
                if j < 0 || j >= grid.counts()[k] as isize {
                    continue;
                }
                let mut nb = idx.clone();
                nb[k] = j as usize;
                let l = grid.lin(&nb);
                if mask[l] && !seen[l] {
                    seen[l] = true;
                    count += 1;
                    queue.push_back(l);
                }
            }
        }
    }
    count == mask.iter().filter(|&&m| m).count()
}

/// Quintic smoothstep, C² across its endpoints.
pub fn smoothstep5(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

fn axis_profile(x: f64, lo: f64, hi: f64, margin: f64) -> f64 {
    if x >= lo && x <= hi {
        1.0
    } else if x < lo {
        smoothstep5((x - (lo - margin)) / margin)
    } else {
        smoothstep5(((hi + margin) - x) / margin)
    }
}

/// Interior window ψ: 1 on M₀, 0 outside M′₀, quintic ramp per axis, tensorized.
///
/// For a union of inner boxes the per-box tensor windows are combined as
/// 1 − ∏(1 − ψ_b), which preserves smoothness and the support constraints.
pub fn smooth_window(grid: &Grid, partition: &RegionPartition) -> Vec<f64> {
    let margins = partition.margin_widths();
    grid.field_from_fn(|x| {
        let mut prod = 1.0;
        for b in partition.inner_boxes() {
            let mut w = 1.0;
            for k in 0..x.len() {
                w *= axis_profile(x[k], b.lo[k], b.hi[k], margins[k]);
            }
            prod *= 1.0 - w;
        }
        1.0 - prod
    })
}

/// Characteristic function χ of M₀ on the interior nodes.
pub fn characteristic(_grid: &Grid, partition: &RegionPartition) -> Vec<f64> {
    partition
        .m0_mask()
        .iter()
        .map(|&m| if m { 1.0 } else { 0.0 })
        .collect()
}

/// One rectangular piece of a boundary patch: a face plus inclusive interior
/// node ranges along the transverse axes (ascending axis order, face axis skipped).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacePart {
    pub axis: usize,
    pub side: Side,
    pub t_ranges: Vec<(usize, usize)>,
}

/// A single boundary node: face identity plus transverse multi-index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryNode {
    pub axis: usize,
    pub side: Side,
    pub t_idx: Vec<usize>,
}

impl BoundaryNode {
    /// Physical coordinates of the node.
    pub fn position(&self, grid: &Grid) -> Vec<f64> {
        let mut x = vec![0.0; grid.dim()];
        x[self.axis] = match self.side {
            Side::Lo => 0.0,
            Side::Hi => grid.domain().side(self.axis),
        };
        let mut t = 0;
        for k in 0..grid.dim() {
            if k == self.axis {
                continue;
            }
            x[k] = (self.t_idx[t] + 1) as f64 * grid.spacing()[k];
            t += 1;
        }
        x
    }

    /// Interior multi-index of the node `steps` layers inward along the normal.
    pub fn inward(&self, grid: &Grid, steps: usize) -> Vec<usize> {
        debug_assert!(steps >= 1);
        let mut idx = vec![0; grid.dim()];
        let mut t = 0;
        for k in 0..grid.dim() {
            if k == self.axis {
                idx[k] = match self.side {
                    Side::Lo => steps - 1,
                    Side::Hi => grid.counts()[k] - steps,
                };
            } else {
                idx[k] = self.t_idx[t];
                t += 1;
            }
        }
        idx
    }
}

/// Nonempty union of whole or partial faces, with per-node quadrature weights
/// (product of the transverse spacings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPatch {
    parts: Vec<FacePart>,
}

impl BoundaryPatch {
    pub fn from_parts(grid: &Grid, parts: Vec<FacePart>) -> Result<Self> {
        if parts.is_empty() {
            return Err(LabError::InvalidPatch("patch has no parts".into()));
        }
        for p in &parts {
            if p.axis >= grid.dim() {
                return Err(LabError::InvalidPatch(format!("axis {} out of range", p.axis)));
            }
            if p.t_ranges.len() != grid.dim() - 1 {
                return Err(LabError::InvalidPatch("transverse range count mismatch".into()));
            }
            let mut t = 0;
            for k in 0..grid.dim() {
                if k == p.axis {
                    continue;
                }
                let (a, b) = p.t_ranges[t];
                if a > b || b >= grid.counts()[k] {
                    return Err(LabError::InvalidPatch(format!(
                        "transverse range ({a},{b}) invalid for axis {k} with N={}",
                        grid.counts()[k]
                    )));
                }
                t += 1;
            }
        }
        Ok(Self { parts })
    }

    /// Whole face of the box.
    pub fn face(grid: &Grid, axis: usize, side: Side) -> Result<Self> {
        let t_ranges = (0..grid.dim())
            .filter(|&k| k != axis)
            .map(|k| (0, grid.counts()[k] - 1))
            .collect();
        Self::from_parts(grid, vec![FacePart { axis, side, t_ranges }])
    }

    /// All faces of the box.
    pub fn full_boundary(grid: &Grid) -> Self {
        let parts = (0..grid.dim())
            .flat_map(|axis| {
                [Side::Lo, Side::Hi].into_iter().map(move |side| (axis, side))
            })
            .map(|(axis, side)| FacePart {
                axis,
                side,
                t_ranges: (0..grid.dim())
                    .filter(|&k| k != axis)
                    .map(|k| (0, grid.counts()[k] - 1))
                    .collect(),
            })
            .collect();
        Self { parts }
    }

    pub fn parts(&self) -> &[FacePart] {
        &self.parts
    }

    /// Canonical node enumeration: parts in declaration order, transverse
    /// indices row-major.
    pub fn nodes(&self) -> Vec<BoundaryNode> {
        let mut out = Vec::new();
        for p in &self.parts {
            let lens: Vec<usize> = p.t_ranges.iter().map(|&(a, b)| b - a + 1).collect();
            let total: usize = lens.iter().product();
            for flat in 0..total {
                let mut rem = flat;
                let mut t_idx = vec![0; lens.len()];
                for k in (0..lens.len()).rev() {
                    t_idx[k] = p.t_ranges[k].0 + rem % lens[k];
                    rem /= lens[k];
                }
                out.push(BoundaryNode {
                    axis: p.axis,
                    side: p.side,
                    t_idx,
                });
            }
        }
        out
    }

    pub fn n_nodes(&self) -> usize {
        self.parts
            .iter()
            .map(|p| p.t_ranges.iter().map(|&(a, b)| b - a + 1).product::<usize>())
            .sum()
    }

    /// Quadrature weight per node, aligned with [`nodes`]: product of the
    /// transverse spacings.
    pub fn weights(&self, grid: &Grid) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.parts {
            let w: f64 = (0..grid.dim())
                .filter(|&k| k != p.axis)
                .map(|k| grid.spacing()[k])
                .product();
            let count: usize = p.t_ranges.iter().map(|&(a, b)| b - a + 1).product();
            out.extend(std::iter::repeat(w).take(count));
        }
        out
    }

    /// (d−1)-dimensional area covered by the patch nodes' cells.
    pub fn nominal_area(&self, grid: &Grid) -> f64 {
        self.parts
            .iter()
            .map(|p| {
                let mut area = 1.0;
                let mut t = 0;
                for k in 0..grid.dim() {
                    if k == p.axis {
                        continue;
                    }
                    let (a, b) = p.t_ranges[t];
                    // extent of the covered open interval, one spacing per node
                    area *= (b - a + 1) as f64 * grid.spacing()[k];
                    t += 1;
                }
                area
            })
            .sum()
    }

    /// True if every node of `self` is a node of `other`.
    pub fn subset_of(&self, other: &BoundaryPatch) -> bool {
        let set: std::collections::HashSet<(usize, Side, Vec<usize>)> = other
            .nodes()
            .into_iter()
            .map(|n| (n.axis, n.side, n.t_idx))
            .collect();
        self.nodes()
            .into_iter()
            .all(|n| set.contains(&(n.axis, n.side, n.t_idx)))
    }
}

/// Boundary window ψ∂ on Γ's nodes: 1 on Γ₀, 0 off Γ, quintic ramp through the gap.
///
/// Both patches must consist of parts on identical faces, with Γ₀ strictly
/// inside Γ (at least one node layer per transverse side).
pub fn boundary_window(
    grid: &Grid,
    gamma0: &BoundaryPatch,
    gamma: &BoundaryPatch,
) -> Result<Vec<f64>> {
    // pair up parts per face
    let mut out = Vec::new();
    for gp in gamma.parts() {
        let g0: Vec<&FacePart> = gamma0
            .parts()
            .iter()
            .filter(|p| p.axis == gp.axis && p.side == gp.side)
            .collect();
        if g0.is_empty() {
            return Err(LabError::InvalidPatch(
                "every Gamma part must contain a Gamma0 part on the same face".into(),
            ));
        }
        for p0 in &g0 {
            for (k, (&(a0, b0), &(a, b))) in p0.t_ranges.iter().zip(&gp.t_ranges).enumerate() {
                if a0 < a + 1 || b0 + 1 > b {
                    return Err(LabError::InvalidPatch(format!(
                        "Gamma0 not strictly inside Gamma on transverse axis {k}: ({a0},{b0}) vs ({a},{b})"
                    )));
                }
            }
        }
        let t_axes: Vec<usize> = (0..grid.dim()).filter(|&k| k != gp.axis).collect();
        let gp_patch = BoundaryPatch {
            parts: vec![gp.clone()],
        };
        for node in gp_patch.nodes() {
            let x = node.position(grid);
            let mut val: f64 = 0.0;
            for p0 in &g0 {
                let mut w = 1.0;
                for (t, &k) in t_axes.iter().enumerate() {
                    let h = grid.spacing()[k];
                    let lo0 = (p0.t_ranges[t].0 + 1) as f64 * h;
                    let hi0 = (p0.t_ranges[t].1 + 1) as f64 * h;
                    let lo = (gp.t_ranges[t].0 + 1) as f64 * h;
                    let hi = (gp.t_ranges[t].1 + 1) as f64 * h;
                    let v = if x[k] >= lo0 && x[k] <= hi0 {
                        1.0
                    } else if x[k] < lo0 {
                        smoothstep5((x[k] - (lo - h)) / (lo0 - lo + h))
                    } else {
                        smoothstep5(((hi + h) - x[k]) / (hi + h - hi0))
                    };
                    w *= v;
                }
                val = val.max(w);
            }
            out.push(val);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pi_cube(n: usize) -> Grid {
        Grid::build(BoxDomain::new(&[PI, PI, PI]).unwrap(), &[n, n, n]).unwrap()
    }

    #[test]
    fn build_grid_examples() {
        let g = pi_cube(3);
        for h in g.spacing() {
            assert!((h - PI / 4.0).abs() < 1e-15);
        }
        assert_eq!(g.n_interior(), 27);

        let g2 = Grid::build(BoxDomain::new(&[PI, 2.0 * PI]).unwrap(), &[7, 15]).unwrap();
        assert!((g2.spacing()[0] - PI / 8.0).abs() < 1e-15);
        assert!((g2.spacing()[1] - PI / 8.0).abs() < 1e-15);

        assert!(Grid::build(BoxDomain::new(&[PI, PI, PI]).unwrap(), &[2, 3, 3]).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid::build(BoxDomain::new(&[1.0, 2.0, 3.0]).unwrap(), &[3, 4, 5]).unwrap();
        for (lin, idx) in g.iter_multi().enumerate() {
            assert_eq!(g.lin(&idx), lin);
            assert_eq!(g.multi(lin), idx);
        }
    }

    fn centered_inner(frac_lo: f64, frac_hi: f64) -> SubBox {
        SubBox::new(
            &[frac_lo * PI, frac_lo * PI, frac_lo * PI],
            &[frac_hi * PI, frac_hi * PI, frac_hi * PI],
        )
        .unwrap()
    }

    #[test]
    fn carve_valid_partition() {
        let g = pi_cube(15);
        let part = carve_regions(&g, &[centered_inner(0.25, 0.75)], 1).unwrap();
        assert!(!part.m0_nodes().is_empty());
        // chi * (1 - psi) = 0 wherever chi = 1
        let chi = characteristic(&g, &part);
        let psi = smooth_window(&g, &part);
        for i in 0..g.n_interior() {
            assert!((chi[i] * (1.0 - psi[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn carve_rejects_boundary_touch() {
        let g = pi_cube(15);
        let whole = SubBox::new(&[0.0, 0.0, 0.0], &[PI, PI, PI]);
        // whole box is already degenerate as strictly-inside inner region
        assert!(whole.is_ok());
        assert!(carve_regions(&g, &[whole.unwrap()], 1).is_err());
    }

    #[test]
    fn carve_rejects_disconnected_m1() {
        // Hollow shell of six margin-respecting boxes enclosing a cavity:
        // M1 = outside + cavity, which the flood fill must reject.
        let g = pi_cube(19);
        let lo = 0.2 * PI;
        let hi = 0.8 * PI;
        let t = 0.12 * PI; // wall thickness
        let mk = |lo3: [f64; 3], hi3: [f64; 3]| SubBox::new(&lo3, &hi3).unwrap();
        let shell = vec![
            mk([lo, lo, lo], [hi, hi, lo + t]),
            mk([lo, lo, hi - t], [hi, hi, hi]),
            mk([lo, lo, lo], [hi, lo + t, hi]),
            mk([lo, hi - t, lo], [hi, hi, hi]),
            mk([lo, lo, lo], [lo + t, hi, hi]),
            mk([hi - t, lo, lo], [hi, hi, hi]),
        ];
        let err = carve_regions(&g, &shell, 1);
        assert!(err.is_err(), "hollow shell must disconnect M1");
        let msg = format!("{}", err.err().unwrap());
        assert!(msg.contains("edge-connected"), "unexpected error: {msg}");

        // flood-fill oracle: independent union-find on the same mask agrees
        let lo_box = carve_regions(&g, &[centered_inner(0.25, 0.75)], 1).unwrap();
        assert!(union_find_connected(&g, lo_box.m1_mask()));
    }

    /// Independent connectivity oracle (union-find instead of BFS).
    fn union_find_connected(grid: &Grid, mask: &[bool]) -> bool {
        let n = mask.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for (lin, idx) in grid.iter_multi().enumerate() {
            if !mask[lin] {
                continue;
            }
            for k in 0..grid.dim() {
                if idx[k] + 1 < grid.counts()[k] {
                    let mut nb = idx.clone();
                    nb[k] += 1;
                    let l = grid.lin(&nb);
                    if mask[l] {
                        let (a, b) = (find(&mut parent, lin), find(&mut parent, l));
                        parent[a] = b;
                    }
                }
            }
        }
        let mut root = None;
        for i in 0..n {
            if mask[i] {
                let r = find(&mut parent, i);
                match root {
                    None => root = Some(r),
                    Some(r0) if r0 != r => return false,
                    _ => {}
                }
            }
        }
        root.is_some()
    }

    #[test]
    fn window_values() {
        let g = pi_cube(15);
        let part = carve_regions(&g, &[centered_inner(0.25, 0.75)], 2).unwrap();
        let psi = smooth_window(&g, &part);
        for (lin, idx) in g.iter_multi().enumerate() {
            if part.m0_mask()[lin] {
                assert!((psi[lin] - 1.0).abs() < 1e-15, "psi=1 on M0");
            }
            if !part.m0_prime_mask()[lin] {
                assert!(psi[lin].abs() < 1e-15, "psi=0 outside M0'");
            }
            assert!(psi[lin] >= 0.0 && psi[lin] <= 1.0);
            let _ = idx;
        }
        // midpoint of a 2-layer margin along one axis, others inside the core:
        // evaluate the ramp polynomial directly
        assert!((smoothstep5(0.5) - 0.5).abs() < 1e-15);
        let h = g.spacing()[0];
        let x_mid = 0.25 * PI - 1.0 * h; // one layer outside the inner box = ramp midpoint
        let w = axis_profile(x_mid, 0.25 * PI, 0.75 * PI, 2.0 * h);
        assert!((w - 0.5).abs() < 1e-12);
    }

    #[test]
    fn characteristic_support_count() {
        let g = pi_cube(15);
        let part = carve_regions(&g, &[centered_inner(0.25, 0.75)], 1).unwrap();
        let chi = characteristic(&g, &part);
        let support = chi.iter().filter(|&&c| c == 1.0).count();
        assert_eq!(support, part.m0_nodes().len());
        // center node in M0, node next to boundary not
        let center = g.lin(&[7, 7, 7]);
        assert_eq!(chi[center], 1.0);
        let corner = g.lin(&[0, 0, 0]);
        assert_eq!(chi[corner], 0.0);
    }

    #[test]
    fn patch_weights_and_area() {
        let g = pi_cube(15);
        let f = BoundaryPatch::face(&g, 0, Side::Lo).unwrap();
        assert_eq!(f.n_nodes(), 225);
        let total: f64 = f.weights(&g).iter().sum();
        // face area pi^2, covered up to one spacing strip around the rim
        assert!((total - PI * PI).abs() < 2.0 * PI * g.spacing()[1] + 1e-12);
        assert!((total - f.nominal_area(&g)).abs() < 1e-12);
        assert!(f.weights(&g).iter().all(|&w| w > 0.0));
    }

    #[test]
    fn boundary_window_support() {
        let g = pi_cube(15);
        let gamma = BoundaryPatch::from_parts(
            &g,
            vec![FacePart {
                axis: 0,
                side: Side::Lo,
                t_ranges: vec![(1, 13), (1, 13)],
            }],
        )
        .unwrap();
        let gamma0 = BoundaryPatch::from_parts(
            &g,
            vec![FacePart {
                axis: 0,
                side: Side::Lo,
                t_ranges: vec![(5, 9), (5, 9)],
            }],
        )
        .unwrap();
        let w = boundary_window(&g, &gamma0, &gamma).unwrap();
        let nodes = gamma.nodes();
        let set: std::collections::HashSet<Vec<usize>> =
            gamma0.nodes().into_iter().map(|n| n.t_idx).collect();
        for (val, node) in w.iter().zip(&nodes) {
            assert!(*val >= -1e-15 && *val <= 1.0 + 1e-15);
            if set.contains(&node.t_idx) {
                assert!((val - 1.0).abs() < 1e-14, "1 on Gamma0");
            }
        }
        // not a subset the other way round
        assert!(gamma0.subset_of(&gamma));
        assert!(!gamma.subset_of(&gamma0));
        // Gamma0 not strictly inside -> error
        assert!(boundary_window(&g, &gamma, &gamma).is_err());
    }
}
