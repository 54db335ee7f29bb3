//! Flat tori, affine subtori `H = {x̄ = offset}`, phase-space points and the
//! set `Σ^A` of unit covectors over `H` whose tangential part lies in `A`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Toroidal tolerance used for point equality and "on H" checks.
pub const POINT_TOL: f64 = 1e-9;

/// Reduce a coordinate into `[0, 1)`.
pub fn wrap01(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed difference `a - b` on the unit circle, in `(-1/2, 1/2]`.
pub fn circle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    if d > 0.5 {
        d - 1.0
    } else {
        d
    }
}

/// Minimum over lattice shifts of the Euclidean distance between two points.
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| circle_diff(p, q).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn euclid_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// The flat torus `ℝⁿ / ℤⁿ`, n ∈ {2, 3}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusManifold {
    dim: usize,
}

impl TorusManifold {
    pub fn new(dim: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::input(format!(
                "torus dimension must be 2 or 3, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn wrap(&self, x: &mut [f64]) {
        for c in x.iter_mut() {
            *c = wrap01(*c);
        }
    }
}

/// An affine subtorus `H = {x_i = offset_i : i ∈ normal axes}` of a flat torus.
///
/// The induced metric is the flat metric on the tangential coordinates and
/// `dσ_H` is Lebesgue measure of total volume 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatSubmanifold {
    ambient_dim: usize,
    tangential: Vec<usize>,
    normal: Vec<usize>,
    offset: Vec<f64>,
}

impl FlatSubmanifold {
    pub fn new(manifold: &TorusManifold, normal_axes: &[usize], offset: &[f64]) -> Result<Self> {
        let n = manifold.dim();
        if normal_axes.is_empty() || normal_axes.len() >= n {
            return Err(Error::input(format!(
                "codimension must satisfy 1 <= k <= {}, got {}",
                n - 1,
                normal_axes.len()
            )));
        }
        if offset.len() != normal_axes.len() {
            return Err(Error::DimensionMismatch {
                expected: normal_axes.len(),
                got: offset.len(),
            });
        }
        let mut normal = normal_axes.to_vec();
        let mut pairs: Vec<(usize, f64)> = normal_axes.iter().copied().zip(offset.iter().copied()).collect();
        pairs.sort_by_key(|p| p.0);
        normal.sort_unstable();
        normal.dedup();
        if normal.len() != normal_axes.len() || normal.iter().any(|&a| a >= n) {
            return Err(Error::input(format!(
                "normal axes must be distinct indices below {n}: {normal_axes:?}"
            )));
        }
        let tangential = (0..n).filter(|a| !normal.contains(a)).collect();
        Ok(Self {
            ambient_dim: n,
            tangential,
            normal,
            offset: pairs.into_iter().map(|p| wrap01(p.1)).collect(),
        })
    }

    /// `H = {y = 0}` inside the 2-torus.
    pub fn horizontal_line() -> Self {
        Self {
            ambient_dim: 2,
            tangential: vec![0],
            normal: vec![1],
            offset: vec![0.0],
        }
    }

    /// `H = {y = 0, z = 0}` inside the 3-torus.
    pub fn axis_circle() -> Self {
        Self {
            ambient_dim: 3,
            tangential: vec![0],
            normal: vec![1, 2],
            offset: vec![0.0, 0.0],
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.tangential.len()
    }

    pub fn codim(&self) -> usize {
        self.normal.len()
    }

    pub fn tangential_axes(&self) -> &[usize] {
        &self.tangential
    }

    pub fn normal_axes(&self) -> &[usize] {
        &self.normal
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Position in M of the point of H with tangential coordinates `xp`.
    pub fn embed(&self, xp: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.ambient_dim];
        for (&a, &v) in self.tangential.iter().zip(xp) {
            x[a] = wrap01(v);
        }
        for (&a, &v) in self.normal.iter().zip(&self.offset) {
            x[a] = v;
        }
        x
    }

    /// Covector in T*M with tangential part `xi_t` and normal part `xi_n`.
    pub fn assemble_covector(&self, xi_t: &[f64], xi_n: &[f64]) -> Vec<f64> {
        let mut xi = vec![0.0; self.ambient_dim];
        for (&a, &v) in self.tangential.iter().zip(xi_t) {
            xi[a] = v;
        }
        for (&a, &v) in self.normal.iter().zip(xi_n) {
            xi[a] = v;
        }
        xi
    }

    pub fn tangential_part(&self, v: &[f64]) -> Vec<f64> {
        self.tangential.iter().map(|&a| v[a]).collect()
    }

    pub fn normal_part(&self, v: &[f64]) -> Vec<f64> {
        self.normal.iter().map(|&a| v[a]).collect()
    }

    /// Signed toroidal deviation of the normal coordinates of `x` from H.
    pub fn normal_deviation(&self, x: &[f64]) -> Vec<f64> {
        self.normal
            .iter()
            .zip(&self.offset)
            .map(|(&a, &o)| circle_diff(x[a], o))
            .collect()
    }

    pub fn distance_to(&self, x: &[f64]) -> f64 {
        norm(&self.normal_deviation(x))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance_to(x) <= POINT_TOL
    }
}

/// `|ξ'|_{g_H}`; the induced metric of an affine subtorus is Euclidean.
pub fn tangential_norm(sub: &FlatSubmanifold, xi_prime: &[f64]) -> Result<f64> {
    if xi_prime.len() != sub.dim() {
        return Err(Error::DimensionMismatch {
            expected: sub.dim(),
            got: xi_prime.len(),
        });
    }
    Ok(norm(xi_prime))
}

/// A point `(x, ξ)` of the cotangent bundle of a flat torus (or of `H`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    /// Builds a point, reducing the position modulo 1.
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Self {
        debug_assert_eq!(x.len(), xi.len());
        let x = x.into_iter().map(wrap01).collect();
        Self { x, xi }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Toroidal distance in position combined with Euclidean distance in the fiber.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        let dx = torus_distance(&self.x, &other.x);
        let dxi = euclid_distance(&self.xi, &other.xi);
        (dx * dx + dxi * dxi).sqrt()
    }

    pub fn approx_eq(&self, other: &PhasePoint, tol: f64) -> bool {
        self.dim() == other.dim() && self.distance(other) <= tol
    }

    pub fn covector_norm(&self) -> f64 {
        norm(&self.xi)
    }
}

/// `π_{T*H}`: drop normal coordinates of position and covector.
pub fn project_to_cotangent_h(sub: &FlatSubmanifold, rho: &PhasePoint) -> Result<(Vec<f64>, Vec<f64>)> {
    if rho.dim() != sub.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: sub.ambient_dim(),
            got: rho.dim(),
        });
    }
    let dev = sub.distance_to(&rho.x);
    if dev > POINT_TOL {
        return Err(Error::Precondition(format!(
            "footpoint {:?} lies {dev:e} away from H",
            rho.x
        )));
    }
    Ok((sub.tangential_part(&rho.x), sub.tangential_part(&rho.xi)))
}

/// One piece of the base `A ⊂ T*H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseElement {
    /// A single point `(x', ξ')`.
    Point { x: Vec<f64>, xi: Vec<f64> },
    /// `{(x', ξ') : x' ∈ H}` for a fixed `ξ'`.
    Stripe { xi: Vec<f64> },
    /// `{(x', ξ') : x' ∈ H, lo ≤ ξ' ≤ hi}`, only for one-dimensional H.
    Band { lo: f64, hi: f64 },
}

impl BaseElement {
    /// Largest `|ξ'|` over the element.
    pub fn max_tangential_norm(&self) -> f64 {
        match self {
            BaseElement::Point { xi, .. } | BaseElement::Stripe { xi } => norm(xi),
            BaseElement::Band { lo, hi } => lo.abs().max(hi.abs()),
        }
    }
}

/// Resolution of the product partition of Σ^A used by measures on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLayout {
    /// Cells per tangential axis of H for stripes and bands.
    pub base_cells: usize,
    /// Cells along ξ' for bands.
    pub band_cells: usize,
    /// Arcs of the fiber circle when k = 2.
    pub fiber_cells: usize,
}

impl Default for CellLayout {
    fn default() -> Self {
        Self {
            base_cells: 128,
            band_cells: 8,
            fiber_cells: 16,
        }
    }
}

impl CellLayout {
    pub fn refined(&self) -> Self {
        Self {
            base_cells: self.base_cells * 2,
            band_cells: self.band_cells * 2,
            fiber_cells: self.fiber_cells * 2,
        }
    }
}

/// Fiber part of a Σ^A cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FiberCell {
    /// k = 1: the branch `ξ̄ = sign · r`.
    Sign(f64),
    /// k = 2: the arc of angles `[start, end)` on the fiber circle.
    Arc { start: f64, end: f64 },
}

impl FiberCell {
    /// Fraction of the uniform probability on the fiber sphere carried by the cell.
    pub fn fraction(&self) -> f64 {
        match *self {
            FiberCell::Sign(_) => 0.5,
            FiberCell::Arc { start, end } => (end - start) / TAU,
        }
    }

    fn measure(&self) -> f64 {
        match *self {
            FiberCell::Sign(_) => 1.0,
            FiberCell::Arc { start, end } => end - start,
        }
    }

    fn center_angle(&self) -> f64 {
        match *self {
            FiberCell::Sign(_) => 0.0,
            FiberCell::Arc { start, end } => 0.5 * (start + end),
        }
    }
}

/// A product cell `x'-box × ξ'-box × fiber cell` of Σ^A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCell {
    pub base_index: usize,
    /// One interval per tangential axis; degenerate for point bases.
    pub x_range: Vec<(f64, f64)>,
    /// One interval per tangential axis; degenerate unless the base is a band.
    pub xi_range: Vec<(f64, f64)>,
    pub fiber: FiberCell,
}

impl SigmaCell {
    pub fn x_center(&self) -> Vec<f64> {
        self.x_range.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn xi_center(&self) -> Vec<f64> {
        self.xi_range.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Parameter measure `|x'-box| · |ξ'-box| · |fiber cell|`, with degenerate
    /// factors counted as 1 (a point cell has measure 1).
    pub fn param_measure(&self) -> f64 {
        let side = |r: &[(f64, f64)]| {
            r.iter()
                .map(|(a, b)| if b > a { b - a } else { 1.0 })
                .product::<f64>()
        };
        side(&self.x_range) * side(&self.xi_range) * self.fiber.measure()
    }

    pub fn is_point(&self) -> bool {
        let degenerate = |r: &[(f64, f64)]| r.iter().all(|(a, b)| a == b);
        degenerate(&self.x_range) && degenerate(&self.xi_range) && matches!(self.fiber, FiberCell::Sign(_))
    }

    pub fn has_xi_extent(&self) -> bool {
        self.xi_range.iter().any(|(a, b)| b > a)
    }

    pub fn has_x_extent(&self) -> bool {
        self.x_range.iter().any(|(a, b)| b > a)
    }
}

/// `Σ^A = {ρ ∈ S*_H M : π_{T*H} ρ ∈ A}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaASet {
    sub: FlatSubmanifold,
    base: Vec<BaseElement>,
    layout: CellLayout,
}

/// Builds Σ^A over the given base, rejecting any base point outside the open coball bundle.
pub fn build_sigma_a(sub: &FlatSubmanifold, base: Vec<BaseElement>) -> Result<SigmaASet> {
    SigmaASet::with_layout(sub, base, CellLayout::default())
}

impl SigmaASet {
    pub fn with_layout(sub: &FlatSubmanifold, base: Vec<BaseElement>, layout: CellLayout) -> Result<Self> {
        let d = sub.dim();
        for (i, el) in base.iter().enumerate() {
            match el {
                BaseElement::Point { x, xi } => {
                    if x.len() != d || xi.len() != d {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: x.len().max(xi.len()),
                        });
                    }
                }
                BaseElement::Stripe { xi } => {
                    if xi.len() != d {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: xi.len(),
                        });
                    }
                }
                BaseElement::Band { lo, hi } => {
                    if d != 1 {
                        return Err(Error::Unsupported(
                            "band bases require a one-dimensional H".into(),
                        ));
                    }
                    if !(lo < hi) {
                        return Err(Error::input(format!("band {i} has lo >= hi")));
                    }
                }
            }
            let m = el.max_tangential_norm();
            if !(m < 1.0) {
                return Err(Error::input(format!(
                    "base element {i} has |ξ'| = {m} >= 1; A must be compactly contained in B*H"
                )));
            }
        }
        if layout.base_cells == 0 || layout.band_cells == 0 || layout.fiber_cells == 0 {
            return Err(Error::input("cell layout counts must be positive"));
        }
        let base = base
            .into_iter()
            .map(|el| match el {
                BaseElement::Point { x, xi } => BaseElement::Point {
                    x: x.into_iter().map(wrap01).collect(),
                    xi,
                },
                other => other,
            })
            .collect();
        Ok(Self {
            sub: sub.clone(),
            base,
            layout,
        })
    }

    pub fn submanifold(&self) -> &FlatSubmanifold {
        &self.sub
    }

    pub fn base(&self) -> &[BaseElement] {
        &self.base
    }

    pub fn layout(&self) -> CellLayout {
        self.layout
    }

    pub fn codim(&self) -> usize {
        self.sub.codim()
    }

    /// Dimension of the fiber sphere, `k - 1`.
    pub fn fiber_dim(&self) -> usize {
        self.sub.codim() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn with_cell_layout(&self, layout: CellLayout) -> Self {
        Self {
            layout,
            ..self.clone()
        }
    }

    /// `r(ξ') = √(1 - |ξ'|²)`.
    pub fn fiber_radius(xi_prime: &[f64]) -> f64 {
        (1.0 - xi_prime.iter().map(|v| v * v).sum::<f64>()).max(0.0).sqrt()
    }

    /// `count` equally spaced points of the fiber sphere over `ξ'`
    /// (for k = 1 the two points `±r`, regardless of `count`).
    pub fn fiber_points(&self, xi_prime: &[f64], count: usize) -> Vec<Vec<f64>> {
        let r = Self::fiber_radius(xi_prime);
        match self.codim() {
            1 => vec![vec![r], vec![-r]],
            _ => (0..count)
                .map(|j| {
                    let th = TAU * j as f64 / count as f64;
                    vec![r * th.cos(), r * th.sin()]
                })
                .collect(),
        }
    }

    /// The point of Σ^A with base coordinates `(x', ξ')` and fiber parameter
    /// (branch sign for k = 1, angle for k = 2).
    pub fn point(&self, xp: &[f64], xi_prime: &[f64], fiber: f64) -> PhasePoint {
        let r = Self::fiber_radius(xi_prime);
        let xi_n = match self.codim() {
            1 => vec![fiber.signum() * r],
            _ => vec![r * fiber.cos(), r * fiber.sin()],
        };
        PhasePoint::new(self.sub.embed(xp), self.sub.assemble_covector(xi_prime, &xi_n))
    }

    fn fiber_cells(&self) -> Vec<FiberCell> {
        match self.codim() {
            1 => vec![FiberCell::Sign(1.0), FiberCell::Sign(-1.0)],
            _ => {
                let m = self.layout.fiber_cells;
                (0..m)
                    .map(|j| FiberCell::Arc {
                        start: TAU * j as f64 / m as f64,
                        end: TAU * (j + 1) as f64 / m as f64,
                    })
                    .collect()
            }
        }
    }

    /// Cells of one base element, in a fixed order (fiber index fastest).
    pub fn cells_for(&self, base_index: usize) -> Vec<SigmaCell> {
        let d = self.sub.dim();
        let fibers = self.fiber_cells();
        let nb = self.layout.base_cells;
        let x_boxes: Vec<Vec<(f64, f64)>> = match &self.base[base_index] {
            BaseElement::Point { x, .. } => vec![x.iter().map(|&v| (v, v)).collect()],
            _ => grid_boxes(d, nb),
        };
        let xi_boxes: Vec<Vec<(f64, f64)>> = match &self.base[base_index] {
            BaseElement::Point { xi, .. } | BaseElement::Stripe { xi } => {
                vec![xi.iter().map(|&v| (v, v)).collect()]
            }
            BaseElement::Band { lo, hi } => {
                let m = self.layout.band_cells;
                (0..m)
                    .map(|j| {
                        let a = lo + (hi - lo) * j as f64 / m as f64;
                        let b = lo + (hi - lo) * (j + 1) as f64 / m as f64;
                        vec![(a, b)]
                    })
                    .collect()
            }
        };
        let mut cells = Vec::with_capacity(x_boxes.len() * xi_boxes.len() * fibers.len());
        for xb in &x_boxes {
            for kb in &xi_boxes {
                for f in &fibers {
                    cells.push(SigmaCell {
                        base_index,
                        x_range: xb.clone(),
                        xi_range: kb.clone(),
                        fiber: *f,
                    });
                }
            }
        }
        cells
    }

    /// All cells of Σ^A grouped by base element.
    pub fn cells(&self) -> Vec<Vec<SigmaCell>> {
        (0..self.base.len()).map(|i| self.cells_for(i)).collect()
    }

    /// Representative point of a cell: centers of its boxes and fiber arc.
    pub fn cell_center(&self, cell: &SigmaCell) -> PhasePoint {
        let fiber = match cell.fiber {
            FiberCell::Sign(s) => s,
            f @ FiberCell::Arc { .. } => f.center_angle(),
        };
        self.point(&cell.x_center(), &cell.xi_center(), fiber)
    }

    /// Phase-space distance from `rho` to the nearest element of Σ^A, and the
    /// index of the base element realizing it.
    pub fn distance(&self, rho: &PhasePoint) -> Option<(f64, usize)> {
        let xt = self.sub.tangential_part(&rho.x);
        let kt = self.sub.tangential_part(&rho.xi);
        let kn = self.sub.normal_part(&rho.xi);
        let dn = self.sub.distance_to(&rho.x);
        let mut best: Option<(f64, usize)> = None;
        for (i, el) in self.base.iter().enumerate() {
            let (dx, base_xi) = match el {
                BaseElement::Point { x, xi } => (torus_distance(&xt, x), xi.clone()),
                BaseElement::Stripe { xi } => (0.0, xi.clone()),
                BaseElement::Band { lo, hi } => (0.0, vec![kt[0].clamp(*lo, *hi)]),
            };
            let dxi_t = euclid_distance(&kt, &base_xi);
            let r = Self::fiber_radius(&base_xi);
            let dxi_n = match self.codim() {
                1 => (kn[0] - r).abs().min((kn[0] + r).abs()),
                _ => (norm(&kn) - r).abs(),
            };
            let d = (dn * dn + dx * dx + dxi_t * dxi_t + dxi_n * dxi_n).sqrt();
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, i));
            }
        }
        best
    }

    /// Sample points: every point base with its fiber nodes, every stripe/band
    /// at `per_axis` positions (and band midline), with `fiber_nodes` fiber nodes for k = 2.
    pub fn sample_points(&self, per_axis: usize, fiber_nodes: usize) -> Vec<PhasePoint> {
        let d = self.sub.dim();
        let mut out = Vec::new();
        for el in &self.base {
            let (xs, xis): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match el {
                BaseElement::Point { x, xi } => (vec![x.clone()], vec![xi.clone()]),
                BaseElement::Stripe { xi } => (grid_centers(d, per_axis), vec![xi.clone()]),
                BaseElement::Band { lo, hi } => (
                    grid_centers(d, per_axis),
                    vec![vec![*lo], vec![0.5 * (lo + hi)], vec![*hi]],
                ),
            };
            for xp in &xs {
                for kp in &xis {
                    for xn in self.fiber_points(kp, fiber_nodes) {
                        out.push(PhasePoint::new(
                            self.sub.embed(xp),
                            self.sub.assemble_covector(kp, &xn),
                        ));
                    }
                }
            }
        }
        out
    }
}

fn grid_boxes(d: usize, per_axis: usize) -> Vec<Vec<(f64, f64)>> {
    let mut boxes = vec![Vec::new()];
    for _ in 0..d {
        let mut next = Vec::with_capacity(boxes.len() * per_axis);
        for b in &boxes {
            for j in 0..per_axis {
                let mut nb = b.clone();
                nb.push((j as f64 / per_axis as f64, (j + 1) as f64 / per_axis as f64));
                next.push(nb);
            }
        }
        boxes = next;
    }
    boxes
}

fn grid_centers(d: usize, per_axis: usize) -> Vec<Vec<f64>> {
    grid_boxes(d, per_axis)
        .into_iter()
        .map(|b| b.iter().map(|(a, c)| 0.5 * (a + c)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const S2: f64 = std::f64::consts::SQRT_2 / 2.0;

    #[test]
    fn tangential_norm_cases() {
        let h = FlatSubmanifold::horizontal_line();
        assert_eq!(tangential_norm(&h, &[0.0]).unwrap(), 0.0);
        assert!((tangential_norm(&h, &[S2]).unwrap() - S2).abs() < 1e-15);

        let t3 = TorusManifold::new(3).unwrap();
        let plane = FlatSubmanifold::new(&t3, &[2], &[0.0]).unwrap();
        assert!((tangential_norm(&plane, &[0.6, 0.8]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            tangential_norm(&plane, &[0.6]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn submanifold_validation() {
        let t2 = TorusManifold::new(2).unwrap();
        assert!(FlatSubmanifold::new(&t2, &[0, 1], &[0.0, 0.0]).is_err());
        assert!(FlatSubmanifold::new(&t2, &[], &[]).is_err());
        assert!(FlatSubmanifold::new(&t2, &[2], &[0.0]).is_err());
        assert!(TorusManifold::new(1).is_err());
        let h = FlatSubmanifold::new(&t2, &[1], &[0.0]).unwrap();
        assert_eq!(h, FlatSubmanifold::horizontal_line());
    }

    #[test]
    fn projection_examples() {
        let h = FlatSubmanifold::horizontal_line();
        let s3 = 3f64.sqrt() / 2.0;
        let rho = PhasePoint::new(vec![0.5, 0.0], vec![0.5, s3]);
        assert_eq!(project_to_cotangent_h(&h, &rho).unwrap(), (vec![0.5], vec![0.5]));

        let rho = PhasePoint::new(vec![0.3, 0.0], vec![0.0, 1.0]);
        assert_eq!(project_to_cotangent_h(&h, &rho).unwrap(), (vec![0.3], vec![0.0]));

        let tangential = PhasePoint::new(vec![0.3, 1.0], vec![0.7, 0.0]);
        assert_eq!(project_to_cotangent_h(&h, &tangential).unwrap().1, vec![0.7]);

        let off = PhasePoint::new(vec![0.3, 0.1], vec![0.0, 1.0]);
        assert!(matches!(
            project_to_cotangent_h(&h, &off),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn sigma_a_examples() {
        let h = FlatSubmanifold::horizontal_line();
        let s3 = 3f64.sqrt() / 2.0;
        let sigma = build_sigma_a(
            &h,
            vec![BaseElement::Point {
                x: vec![0.5],
                xi: vec![0.5],
            }],
        )
        .unwrap();
        let fib = sigma.fiber_points(&[0.5], 0);
        assert!((fib[0][0] - s3).abs() < 1e-15 && (fib[1][0] + s3).abs() < 1e-15);

        let stripe = build_sigma_a(&h, vec![BaseElement::Stripe { xi: vec![S2] }]).unwrap();
        let p = stripe.point(&[0.25], &[S2], -1.0);
        assert!((p.xi[1] + S2).abs() < 1e-15);
        assert_eq!(p.x, vec![0.25, 0.0]);

        let conormal = build_sigma_a(&h, vec![BaseElement::Stripe { xi: vec![0.0] }]).unwrap();
        assert_eq!(conormal.fiber_points(&[0.0], 0), vec![vec![1.0], vec![-1.0]]);
    }

    #[test]
    fn sigma_a_rejects_outside_coball() {
        let h = FlatSubmanifold::horizontal_line();
        assert!(build_sigma_a(&h, vec![BaseElement::Stripe { xi: vec![1.0] }]).is_err());
        assert!(build_sigma_a(&h, vec![BaseElement::Band { lo: -0.2, hi: 1.2 }]).is_err());
        assert!(build_sigma_a(&h, vec![BaseElement::Point { x: vec![0.1], xi: vec![-1.5] }]).is_err());
    }

    #[test]
    fn sigma_points_lie_on_unit_cosphere() {
        let t3 = TorusManifold::new(3).unwrap();
        let circle = FlatSubmanifold::new(&t3, &[1, 2], &[0.0, 0.0]).unwrap();
        let sigma = build_sigma_a(
            &circle,
            vec![
                BaseElement::Stripe { xi: vec![0.3] },
                BaseElement::Point { x: vec![0.2], xi: vec![-0.7] },
            ],
        )
        .unwrap();
        for p in sigma.sample_points(8, 64) {
            assert!((p.covector_norm().powi(2) - 1.0).abs() < 1e-12);
            assert!(sigma.distance(&p).unwrap().0 < 1e-12);
            let (xp, kp) = project_to_cotangent_h(&circle, &p).unwrap();
            assert_eq!(xp.len(), 1);
            assert_eq!(kp.len(), 1);
        }
    }

    #[test]
    fn cells_cover_fiber_probability() {
        let circle = FlatSubmanifold::axis_circle();
        let sigma = build_sigma_a(&circle, vec![BaseElement::Stripe { xi: vec![0.3] }]).unwrap();
        let cells = sigma.cells_for(0);
        assert_eq!(cells.len(), 128 * 16);
        let total: f64 = cells.iter().map(|c| c.fiber.fraction()).sum::<f64>() / 128.0;
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circle_diff_range() {
        assert!((circle_diff(0.9, 0.1) + 0.2).abs() < 1e-15);
        assert_eq!(circle_diff(0.75, 0.25), 0.5);
        assert!((circle_diff(0.05, 0.95) - 0.1).abs() < 1e-15);
        assert!((torus_distance(&[0.99, 0.0], &[0.01, 0.0]) - 0.02).abs() < 1e-15);
    }
}
