//! Finite Radon measures on `T*H`, `T*M` and `Σ^A`; the lift `ν ↦ ν^A`, the
//! flow average `μ ↦ μ^A` and the Radon–Nikodym split `μ^A = f ν^A + λ^A`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{tube_flowout, FlowMap};
use crate::error::{Error, Result};
use crate::geometry::{
    euclid_distance, torus_distance, wrap01, BaseElement, FiberCell, PhasePoint, SigmaASet, SigmaCell,
    POINT_TOL,
};
use crate::numerics::gauss_legendre;
use crate::trig::TrigSeries;

/// Atoms closer than this are merged on construction.
pub const MERGE_TOL: f64 = 1e-9;
/// Atom matching tolerance for the Radon–Nikodym split.
pub const ATOM_MATCH_TOL: f64 = 1e-6;
/// Density threshold below which `f` is not defined by a ratio.
pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    CotangentH,
    CotangentM,
    SigmaA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: PhasePoint,
    pub mass: f64,
}

/// Density in the position variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Density {
    Constant(f64),
    /// Real part of a trigonometric series on a one-dimensional H.
    Trig(TrigSeries),
}

impl Density {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Density::Constant(value) => *value,
            Density::Trig(series) => series.eval(x[0]).re,
        }
    }

    /// `∫` over a product box of `[a_i, b_i]` ranges.
    pub fn integral(&self, ranges: &[(f64, f64)]) -> f64 {
        match self {
            Density::Constant(value) => value * ranges.iter().map(|(a, b)| b - a).product::<f64>(),
            Density::Trig(series) => series.integral(ranges[0].0, ranges[0].1).re,
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        match self {
            Density::Constant(value) if !(value.is_finite() && *value >= 0.0) => {
                Err(Error::input("densities must be finite and nonnegative"))
            }
            Density::Trig(_) if dim != 1 => Err(Error::Unsupported(
                "trigonometric densities need a one-dimensional base".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Axis-aligned box `[lo_i, hi_i] ⊂ [0, 1]ⁿ` of positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl PositionBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(0.0 <= *a && a < b && *b <= 1.0)) {
            return Err(Error::input("position box needs 0 ≤ lo < hi ≤ 1 on every axis"));
        }
        Ok(Self { lo, hi })
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&a, &b))| (a..=b).contains(&wrap01(v)))
    }
}

/// Cellwise measure over the cells of one base element of Σ^A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComponent {
    pub base_index: usize,
    pub cells: Vec<SigmaCell>,
    pub centers: Vec<PhasePoint>,
    pub masses: Vec<f64>,
}

impl CellComponent {
    pub fn zeros(sigma: &SigmaASet, base_index: usize) -> Self {
        let cells = sigma.cells_for(base_index);
        let centers = cells.iter().map(|c| sigma.cell_center(c)).collect();
        let masses = vec![0.0; cells.len()];
        Self {
            base_index,
            cells,
            centers,
            masses,
        }
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    fn same_structure(&self, other: &CellComponent) -> bool {
        self.base_index == other.base_index && self.cells == other.cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Component {
    /// `δ_{ξ'=xi} ⊗ density(x') dx'` on `T*H`.
    Stripe { xi: Vec<f64>, density: Density },
    /// `density(x') dx' ⊗ dξ'/(hi - lo)` on `T*H` with `ξ' ∈ [lo, hi]`, dim H = 1.
    Band { lo: f64, hi: f64, density: Density },
    /// `density · δ_{ξ=xi} ⊗ 1_region dx` on `T*M`.
    FixedCovector {
        xi: Vec<f64>,
        density: f64,
        region: Option<PositionBox>,
    },
    /// `density · dx dθ/2π` on `S*M` for the 2-torus.
    Liouville { density: f64 },
    /// Cellwise masses on Σ^A.
    Cells(CellComponent),
}

/// Weighted atoms plus parametrized density components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureRep {
    space: Space,
    dim: usize,
    atoms: Vec<Atom>,
    components: Vec<Component>,
}

impl MeasureRep {
    /// Validates components against the space and merges duplicate atoms and cell structures.
    pub fn new(space: Space, dim: usize, atoms: Vec<Atom>, components: Vec<Component>) -> Result<Self> {
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            if a.point.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.point.dim(),
                });
            }
            if !(a.mass.is_finite() && a.mass >= 0.0) {
                return Err(Error::input(format!("atom mass {} is not finite and nonnegative", a.mass)));
            }
            if a.mass == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|b| b.point.distance(&a.point) <= MERGE_TOL) {
                Some(b) => b.mass += a.mass,
                None => merged.push(a),
            }
        }
        let mut comps: Vec<Component> = Vec::with_capacity(components.len());
        for c in components {
            match (&c, space) {
                (Component::Stripe { xi, density }, Space::CotangentH) => {
                    if xi.len() != dim {
                        return Err(Error::DimensionMismatch { expected: dim, got: xi.len() });
                    }
                    density.check(dim)?;
                }
                (Component::Band { lo, hi, density }, Space::CotangentH) => {
                    if dim != 1 || !(lo < hi) {
                        return Err(Error::input("band components need dim H = 1 and lo < hi"));
                    }
                    density.check(dim)?;
                }
                (Component::FixedCovector { xi, density, region }, Space::CotangentM) => {
                    if xi.len() != dim || region.as_ref().is_some_and(|r| r.lo.len() != dim) {
                        return Err(Error::DimensionMismatch { expected: dim, got: xi.len() });
                    }
                    if !(density.is_finite() && *density >= 0.0) {
                        return Err(Error::input("densities must be finite and nonnegative"));
                    }
                }
                (Component::Liouville { density }, Space::CotangentM) => {
                    if dim != 2 || !(density.is_finite() && *density >= 0.0) {
                        return Err(Error::input("Liouville components need the 2-torus and density ≥ 0"));
                    }
                }
                (Component::Cells(cc), Space::SigmaA) => {
                    if cc.masses.len() != cc.cells.len() || cc.centers.len() != cc.cells.len() {
                        return Err(Error::input("cell component has inconsistent lengths"));
                    }
                    if cc.masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                        return Err(Error::input("cell masses must be finite and nonnegative"));
                    }
                    let existing = comps.iter_mut().find_map(|d| match d {
                        Component::Cells(dd) if dd.same_structure(cc) => Some(dd),
                        _ => None,
                    });
                    if let Some(dd) = existing {
                        for (a, b) in dd.masses.iter_mut().zip(&cc.masses) {
                            *a += b;
                        }
                        continue;
                    }
                }
                _ => {
                    return Err(Error::input(format!(
                        "component {c:?} does not live on {space:?}"
                    )))
                }
            }
            comps.push(c);
        }
        Ok(Self {
            space,
            dim,
            atoms: merged,
            components: comps,
        })
    }

    pub fn zero(space: Space, dim: usize) -> Self {
        Self {
            space,
            dim,
            atoms: Vec::new(),
            components: Vec::new(),
        }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn cell_components(&self) -> impl Iterator<Item = &CellComponent> {
        self.components.iter().filter_map(|c| match c {
            Component::Cells(cc) => Some(cc),
            _ => None,
        })
    }

    /// Total mass of one component.
    pub fn component_mass(c: &Component) -> f64 {
        match c {
            Component::Stripe { density, xi } => density.integral(&vec![(0.0, 1.0); xi.len()]),
            Component::Band { density, .. } => density.integral(&[(0.0, 1.0)]),
            Component::FixedCovector { density, region, .. } => {
                density * region.as_ref().map_or(1.0, PositionBox::volume)
            }
            Component::Liouville { density } => *density,
            Component::Cells(cc) => cc.total(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum::<f64>()
            + self.components.iter().map(Self::component_mass).sum::<f64>()
    }

    /// `∫ g(x, ξ) dm` with deterministic quadrature rules per component.
    pub fn integrate_complex<G>(&self, g: G) -> Complex64
    where
        G: Fn(&[f64], &[f64]) -> Complex64,
    {
        let mut acc: Complex64 = self.atoms.iter().map(|a| a.mass * g(&a.point.x, &a.point.xi)).sum();
        for c in &self.components {
            acc += match c {
                Component::Stripe { xi, density } => {
                    let n = if xi.len() == 1 { 256 } else { 64 };
                    grid(xi.len(), n, &[])
                        .iter()
                        .map(|x| density.eval(x) * g(x, xi))
                        .sum::<Complex64>()
                        / (n.pow(xi.len() as u32)) as f64
                }
                Component::Band { lo, hi, density } => {
                    let (gx, gw) = gauss_legendre(16);
                    let mut s = Complex64::new(0.0, 0.0);
                    for x in grid(1, 256, &[]) {
                        for (t, w) in gx.iter().zip(&gw) {
                            let xi = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
                            s += density.eval(&x) * g(&x, &[xi]) * (0.5 * w);
                        }
                    }
                    s / 256.0
                }
                Component::FixedCovector { xi, density, region } => {
                    let n = if xi.len() == 2 { 128 } else { 32 };
                    let pts = grid(xi.len(), n, region.as_ref().map(|r| (r.lo.as_slice(), r.hi.as_slice())).as_slice());
                    let vol = region.as_ref().map_or(1.0, PositionBox::volume);
                    pts.iter().map(|x| g(x, xi)).sum::<Complex64>() * (density * vol / pts.len() as f64)
                }
                Component::Liouville { density } => {
                    let (n, na) = (32, 128);
                    let mut s = Complex64::new(0.0, 0.0);
                    for x in grid(2, n, &[]) {
                        for j in 0..na {
                            let th = std::f64::consts::TAU * (j as f64 + 0.5) / na as f64;
                            s += g(&x, &[th.cos(), th.sin()]);
                        }
                    }
                    s * (density / (n * n * na) as f64)
                }
                Component::Cells(cc) => cc
                    .centers
                    .iter()
                    .zip(&cc.masses)
                    .map(|(p, m)| *m * g(&p.x, &p.xi))
                    .sum(),
            };
        }
        acc
    }

    pub fn integrate<G>(&self, g: G) -> f64
    where
        G: Fn(&[f64], &[f64]) -> f64,
    {
        self.integrate_complex(|x, xi| Complex64::new(g(x, xi), 0.0)).re
    }

    /// Mass of the part of a Σ^A measure whose points satisfy `pred`
    /// (cells are tested at their centers).
    pub fn mass_where<P: Fn(&PhasePoint) -> bool>(&self, pred: P) -> f64 {
        self.atoms.iter().filter(|a| pred(&a.point)).map(|a| a.mass).sum::<f64>()
            + self
                .cell_components()
                .map(|cc| {
                    cc.centers
                        .iter()
                        .zip(&cc.masses)
                        .filter(|(p, _)| pred(p))
                        .map(|(_, m)| m)
                        .sum::<f64>()
                })
                .sum::<f64>()
    }
}

/// Midpoint grid on `[0,1)^d` (or a box when `bounds` is given).
fn grid(d: usize, n: usize, bounds: &[(&[f64], &[f64])]) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::with_capacity(d)];
    for axis in 0..d {
        let (a, b) = bounds.first().map_or((0.0, 1.0), |(lo, hi)| (lo[axis], hi[axis]));
        let mut next = Vec::with_capacity(pts.len() * n);
        for p in &pts {
            for j in 0..n {
                let mut q = p.clone();
                q.push(a + (b - a) * (j as f64 + 0.5) / n as f64);
                next.push(q);
            }
        }
        pts = next;
    }
    pts
}

fn base_contains(el: &BaseElement, x: &[f64], xi: &[f64]) -> bool {
    match el {
        BaseElement::Point { x: bx, xi: bxi } => {
            torus_distance(bx, x) <= POINT_TOL && euclid_distance(bxi, xi) <= POINT_TOL
        }
        BaseElement::Stripe { xi: bxi } => euclid_distance(bxi, xi) <= POINT_TOL,
        BaseElement::Band { lo, hi } => xi[0] >= lo - POINT_TOL && xi[0] <= hi + POINT_TOL,
    }
}

fn range_contains(r: &(f64, f64), v: f64, last: bool) -> bool {
    if r.0 == r.1 {
        (v - r.0).abs() <= POINT_TOL
    } else if last {
        v >= r.0 - POINT_TOL && v <= r.1 + POINT_TOL
    } else {
        v >= r.0 - POINT_TOL && v < r.1 - POINT_TOL || (v - r.0).abs() <= POINT_TOL
    }
}

/// Index of the ξ'-slab of a base element containing `xi`.
fn xi_slab(cells: &[SigmaCell], xi: &[f64]) -> Option<(f64, f64)> {
    let mut slabs: Vec<(f64, f64)> = cells.iter().map(|c| c.xi_range[0]).collect();
    slabs.dedup();
    let n = slabs.len();
    slabs
        .iter()
        .enumerate()
        .find(|(i, r)| range_contains(r, xi[0], *i == n - 1))
        .map(|(_, r)| *r)
}

/// `ν ↦ ν^A`: every base point spreads uniformly (probability) over its fiber sphere.
pub fn lift_to_sigma_a(nu: &MeasureRep, sigma: &SigmaASet) -> Result<MeasureRep> {
    if nu.space() != Space::CotangentH {
        return Err(Error::input("ν must live on T*H"));
    }
    let sub = sigma.submanifold();
    if nu.dim() != sub.dim() {
        return Err(Error::DimensionMismatch {
            expected: sub.dim(),
            got: nu.dim(),
        });
    }
    let total = nu.total_mass();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::input(format!("ν must be a probability measure, total mass {total}")));
    }
    let k = sigma.codim();
    let find_base = |x: Option<&[f64]>, xi: &[f64]| -> Result<usize> {
        if xi.iter().map(|v| v * v).sum::<f64>() >= 1.0 {
            return Err(Error::input(format!("|ξ'| ≥ 1 at ξ' = {xi:?}")));
        }
        sigma
            .base()
            .iter()
            .position(|el| match (el, x) {
                (BaseElement::Point { .. }, None) => false,
                (el, Some(x)) => base_contains(el, x, xi),
                (el, None) => base_contains(el, &vec![0.0; xi.len()], xi),
            })
            .ok_or_else(|| Error::input(format!("support leakage: ξ' = {xi:?} lies outside the base of Σ^A")))
    };

    let mut atoms = Vec::new();
    let mut comps = Vec::new();
    for a in nu.atoms() {
        let b = find_base(Some(&a.point.x), &a.point.xi)?;
        if k == 1 {
            for s in [1.0, -1.0] {
                atoms.push(Atom {
                    point: sigma.point(&a.point.x, &a.point.xi, s),
                    mass: 0.5 * a.mass,
                });
            }
        } else {
            let mut cc = CellComponent::zeros(sigma, b);
            let ncell = cc.cells.len();
            for (i, c) in cc.cells.iter().enumerate() {
                let inside_x = c.x_range.iter().zip(&a.point.x).all(|(r, &v)| {
                    r.0 == r.1 && torus_distance(&[r.0], &[v]) <= POINT_TOL || (r.0..r.1).contains(&wrap01(v))
                });
                let inside_xi = c
                    .xi_range
                    .iter()
                    .zip(&a.point.xi)
                    .all(|(r, &v)| range_contains(r, v, i + 1 == ncell));
                if inside_x && inside_xi {
                    cc.masses[i] += a.mass * c.fiber.fraction();
                }
            }
            comps.push(Component::Cells(cc));
        }
    }
    for comp in nu.components() {
        match comp {
            Component::Stripe { xi, density } => {
                let b = find_base(None, xi)?;
                let mut cc = CellComponent::zeros(sigma, b);
                let slab = xi_slab(&cc.cells, xi);
                for (c, m) in cc.cells.iter().zip(cc.masses.iter_mut()) {
                    if Some(c.xi_range[0]) == slab || !c.has_xi_extent() {
                        *m = density.integral(&c.x_range) * c.fiber.fraction();
                    }
                }
                comps.push(Component::Cells(cc));
            }
            Component::Band { lo, hi, density } => {
                let b = sigma
                    .base()
                    .iter()
                    .position(|el| matches!(el, BaseElement::Band { lo: bl, hi: bh } if *bl <= lo + POINT_TOL && *bh >= hi - POINT_TOL))
                    .ok_or_else(|| Error::input("support leakage: band component outside every band base"))?;
                let mut cc = CellComponent::zeros(sigma, b);
                for (c, m) in cc.cells.iter().zip(cc.masses.iter_mut()) {
                    let (a, bb) = c.xi_range[0];
                    let overlap = (bb.min(*hi) - a.max(*lo)).max(0.0) / (hi - lo);
                    *m = density.integral(&c.x_range) * overlap * c.fiber.fraction();
                }
                comps.push(Component::Cells(cc));
            }
            _ => return Err(Error::input("ν components must be stripes or bands")),
        }
    }
    MeasureRep::new(Space::SigmaA, sub.ambient_dim(), atoms, comps)
}

/// Reference measure `m` on Σ^A: Lebesgue on H times normalized ξ'-slabs times the
/// uniform probability on each fiber.
pub fn reference_measure(sigma: &SigmaASet) -> Result<MeasureRep> {
    let mut atoms = Vec::new();
    let mut comps = Vec::new();
    for (b, el) in sigma.base().iter().enumerate() {
        match el {
            BaseElement::Point { x, xi } if sigma.codim() == 1 => {
                for s in [1.0, -1.0] {
                    atoms.push(Atom {
                        point: sigma.point(x, xi, s),
                        mass: 0.5,
                    });
                }
            }
            _ => {
                let mut cc = CellComponent::zeros(sigma, b);
                let width = match el {
                    BaseElement::Band { lo, hi } => hi - lo,
                    _ => 1.0,
                };
                for (c, m) in cc.cells.iter().zip(cc.masses.iter_mut()) {
                    let lx: f64 = c
                        .x_range
                        .iter()
                        .map(|(a, b)| if b > a { b - a } else { 1.0 })
                        .product();
                    let lxi: f64 = c
                        .xi_range
                        .iter()
                        .map(|(a, b)| if b > a { (b - a) / width } else { 1.0 })
                        .product();
                    *m = lx * lxi * c.fiber.fraction();
                }
                comps.push(Component::Cells(cc));
            }
        }
    }
    MeasureRep::new(Space::SigmaA, sigma.submanifold().ambient_dim(), atoms, comps)
}

/// Result of the short-time flow average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowAverage {
    pub measure: MeasureRep,
    /// `(base index, cell index)` of cells whose normalized tube mass did not stabilize.
    pub unstable: Vec<(usize, usize)>,
    /// Normalized tube masses per T, summed over Σ^A.
    pub totals_per_t: Vec<f64>,
}

/// `μ ↦ μ^A`: cellwise `μ(tube)/(2T)` extrapolated linearly to `T = 0` from the last two
/// values. Cells whose last three values are not collinear in T get further halvings of T;
/// cells that never settle are reported in `unstable` and keep the extrapolation from `tseq`.
pub fn flow_average(mu: &MeasureRep, sigma: &SigmaASet, fm: &FlowMap, tseq: &[f64]) -> Result<FlowAverage> {
    if mu.space() != Space::CotangentM {
        return Err(Error::input("μ must live on T*M"));
    }
    if mu.dim() != sigma.submanifold().ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma.submanifold().ambient_dim(),
            got: mu.dim(),
        });
    }
    if tseq.len() < 3 {
        return Err(Error::input("flow average needs at least 3 values of T"));
    }
    if tseq.iter().any(|t| !(*t > 0.0)) || tseq.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::input("T values must be positive and strictly decreasing"));
    }
    if *tseq.last().unwrap() > 0.05 {
        return Err(Error::input("the smallest T must be at most 0.05"));
    }
    if !matches!(fm, FlowMap::ExactFlat { .. }) {
        return Err(Error::Unsupported(
            "flow averages are computed from exact flat tubes only".into(),
        ));
    }
    let n = tseq.len();
    let mut totals = vec![0.0; n];
    let mut unstable = Vec::new();
    let mut atoms = Vec::new();
    let mut comps = Vec::new();
    let q_at = |cell: &SigmaCell, t: f64| -> Result<f64> { Ok(tube_flowout(fm, sigma, cell, t, None)?.mass(mu)? / (2.0 * t)) };

    for (b, el) in sigma.base().iter().enumerate() {
        let mut cc = CellComponent::zeros(sigma, b);
        for (i, cell) in cc.cells.iter().enumerate() {
            let mut ts = tseq.to_vec();
            let mut q = ts.iter().map(|&t| q_at(cell, t)).collect::<Result<Vec<f64>>>()?;
            for (tot, v) in totals.iter_mut().zip(&q) {
                *tot += v;
            }
            // Halve T beyond the given sequence until the last three values are collinear in T,
            // which happens once every region boundary has left the tube of the cell.
            let mut extra = 0;
            while !collinear(&ts, &q) && extra < MAX_EXTRA_HALVINGS {
                let t = ts[ts.len() - 1] / 2.0;
                q.push(q_at(cell, t)?);
                ts.push(t);
                extra += 1;
            }
            if !collinear(&ts, &q) {
                unstable.push((b, i));
                ts.truncate(n);
                q.truncate(n);
            }
            let m = ts.len();
            let (t1, t2, q1, q2) = (ts[m - 2], ts[m - 1], q[m - 2], q[m - 1]);
            cc.masses[i] = (q2 - t2 * (q1 - q2) / (t1 - t2)).max(0.0);
        }
        let is_point_k1 = sigma.codim() == 1 && matches!(el, BaseElement::Point { .. });
        if is_point_k1 {
            for (p, m) in cc.centers.into_iter().zip(cc.masses) {
                atoms.push(Atom { point: p, mass: m });
            }
        } else {
            comps.push(Component::Cells(cc));
        }
    }
    let measure = MeasureRep::new(Space::SigmaA, sigma.submanifold().ambient_dim(), atoms, comps)?;
    Ok(FlowAverage {
        measure,
        unstable,
        totals_per_t: totals,
    })
}

const MAX_EXTRA_HALVINGS: usize = 24;

fn collinear(ts: &[f64], q: &[f64]) -> bool {
    let m = ts.len();
    let s1 = (q[m - 3] - q[m - 2]) / (ts[m - 3] - ts[m - 2]);
    let s2 = (q[m - 2] - q[m - 1]) / (ts[m - 2] - ts[m - 1]);
    let scale = q[m - 3..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (s1 - s2).abs() * ts[m - 3] <= 1e-10 * scale + 1e-300
}

/// Values attached to the atoms and cells of a Σ^A measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureTable {
    pub atoms: Vec<f64>,
    pub components: Vec<Vec<f64>>,
}

impl MeasureTable {
    /// Evaluates `g` at every atom and cell center of `m`.
    pub fn from_fn<G: Fn(&PhasePoint) -> f64>(m: &MeasureRep, g: G) -> Self {
        Self {
            atoms: m.atoms().iter().map(|a| g(&a.point)).collect(),
            components: m
                .components()
                .iter()
                .map(|c| match c {
                    Component::Cells(cc) => cc.centers.iter().map(&g).collect(),
                    _ => Vec::new(),
                })
                .collect(),
        }
    }

    pub fn constant(m: &MeasureRep, v: f64) -> Self {
        Self::from_fn(m, |_| v)
    }

    pub fn matches(&self, m: &MeasureRep) -> bool {
        self.atoms.len() == m.atoms().len()
            && self.components.len() == m.components().len()
            && self.components.iter().zip(m.components()).all(|(v, c)| match c {
                Component::Cells(cc) => v.len() == cc.cells.len(),
                _ => v.is_empty(),
            })
    }

    /// Re-indexes a table aligned with `from` onto the atoms and cell components of `to`,
    /// matching atoms by position and cell components by base element. Unmatched entries are NaN.
    pub fn transfer(&self, from: &MeasureRep, to: &MeasureRep) -> Self {
        let atoms = to
            .atoms()
            .iter()
            .map(|a| {
                from.atoms()
                    .iter()
                    .position(|b| b.point.distance(&a.point) < ATOM_MATCH_TOL)
                    .map_or(f64::NAN, |i| self.atoms[i])
            })
            .collect();
        let components = to
            .components()
            .iter()
            .map(|c| match c {
                Component::Cells(cc) => from
                    .components()
                    .iter()
                    .position(|d| matches!(d, Component::Cells(dd) if dd.same_structure(cc)))
                    .map_or(vec![f64::NAN; cc.cells.len()], |i| self.components[i].clone()),
                _ => Vec::new(),
            })
            .collect();
        Self { atoms, components }
    }

    /// Pairs of (value, mass, point) over atoms and cells.
    pub fn weighted<'a>(&'a self, m: &'a MeasureRep) -> impl Iterator<Item = (f64, f64, &'a PhasePoint)> + 'a {
        let atoms = self
            .atoms
            .iter()
            .zip(m.atoms())
            .map(|(v, a)| (*v, a.mass, &a.point));
        let cells = self
            .components
            .iter()
            .zip(m.components())
            .flat_map(|(vals, c)| match c {
                Component::Cells(cc) => vals
                    .iter()
                    .zip(cc.masses.iter().zip(&cc.centers))
                    .map(|(v, (ms, p))| (*v, *ms, p))
                    .collect::<Vec<_>>(),
                _ => Vec::new(),
            });
        atoms.chain(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadonNikodym {
    /// `f = dμ^A/dν^A`, aligned with `ν^A`.
    pub f: MeasureTable,
    /// `λ^A ⊥ ν^A`.
    pub singular: MeasureRep,
}

/// Splits `μ^A = f ν^A + λ^A` cellwise.
pub fn radon_nikodym(mu_a: &MeasureRep, nu_a: &MeasureRep) -> Result<RadonNikodym> {
    if mu_a.space() != Space::SigmaA || nu_a.space() != Space::SigmaA {
        return Err(Error::input("both measures must live on Σ^A"));
    }
    let mut used = vec![false; mu_a.atoms().len()];
    let mut f_atoms = Vec::with_capacity(nu_a.atoms().len());
    for a in nu_a.atoms() {
        let hit = mu_a
            .atoms()
            .iter()
            .enumerate()
            .find(|(i, b)| !used[*i] && b.point.distance(&a.point) < ATOM_MATCH_TOL);
        match hit {
            Some((i, b)) => {
                used[i] = true;
                f_atoms.push(b.mass / a.mass);
            }
            None => f_atoms.push(0.0),
        }
    }
    let mut singular_atoms: Vec<Atom> = mu_a
        .atoms()
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(a, _)| a.clone())
        .collect();

    let mu_cells: Vec<&CellComponent> = mu_a.cell_components().collect();
    let mut mu_used = vec![false; mu_cells.len()];
    let mut singular_comps = Vec::new();
    let mut f_comps = Vec::with_capacity(nu_a.components().len());
    for c in nu_a.components() {
        let Component::Cells(nc) = c else {
            f_comps.push(Vec::new());
            continue;
        };
        let found = mu_cells.iter().position(|mc| mc.base_index == nc.base_index);
        let Some(j) = found else {
            f_comps.push(vec![0.0; nc.cells.len()]);
            continue;
        };
        let mc = mu_cells[j];
        if mc.cells.len() != nc.cells.len() || !mc.same_structure(nc) {
            return Err(Error::input(format!(
                "cell-structure mismatch on base element {}",
                nc.base_index
            )));
        }
        mu_used[j] = true;
        let mut fv = Vec::with_capacity(nc.cells.len());
        let mut lam = CellComponent {
            masses: vec![0.0; nc.cells.len()],
            ..nc.clone()
        };
        for (i, cell) in nc.cells.iter().enumerate() {
            let vol = cell.param_measure();
            let nu_density = nc.masses[i] / vol;
            if nu_density > DENSITY_FLOOR {
                fv.push(mc.masses[i] / nc.masses[i]);
            } else {
                fv.push(0.0);
                lam.masses[i] = mc.masses[i];
            }
        }
        if lam.total() > 0.0 {
            singular_comps.push(Component::Cells(lam));
        }
        f_comps.push(fv);
    }
    for (j, mc) in mu_cells.iter().enumerate() {
        if !mu_used[j] && mc.total() > 0.0 {
            singular_comps.push(Component::Cells((*mc).clone()));
        }
    }
    singular_atoms.retain(|a| a.mass > 0.0);
    Ok(RadonNikodym {
        f: MeasureTable {
            atoms: f_atoms,
            components: f_comps,
        },
        singular: MeasureRep::new(Space::SigmaA, mu_a.dim(), singular_atoms, singular_comps)?,
    })
}

/// Fraction of the fiber probability in a cell (re-exported for tests and callers).
pub fn fiber_fraction(c: &SigmaCell) -> f64 {
    match c.fiber {
        FiberCell::Sign(_) | FiberCell::Arc { .. } => c.fiber.fraction(),
    }
}
