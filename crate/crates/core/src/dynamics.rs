//! Geodesic flow on `T*M`, tube flowouts of Σ^A cells, first returns to Σ^A and
//! recurrence classification.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    circle_diff, norm, wrap01, FiberCell, FlatSubmanifold, PhasePoint, SigmaASet, SigmaCell, POINT_TOL,
};
use crate::measures::{Component, MeasureRep, PositionBox, Space};
use crate::numerics::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeConvention {
    /// `φ_t = exp(t H_p)`; for `p = |ξ|² - 1` this is `ẋ = 2ξ`.
    #[default]
    HamiltonianHp,
    /// Geodesics at unit speed, `ẋ = ξ/|ξ|` in the flat case.
    UnitSpeed,
}

impl TimeConvention {
    /// Speed factor relative to unit speed on the unit cosphere.
    pub fn speed(self) -> f64 {
        match self {
            TimeConvention::HamiltonianHp => 2.0,
            TimeConvention::UnitSpeed => 1.0,
        }
    }
}

/// A principal symbol `p(x, ξ)` on the torus.
pub trait Hamiltonian: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64], xi: &[f64]) -> f64;
    /// `(∂_x p, ∂_ξ p)`.
    fn gradient(&self, x: &[f64], xi: &[f64]) -> (Vec<f64>, Vec<f64>);
}

/// `p = |ξ|² - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatMetric {
    pub dim: usize,
}

impl Hamiltonian for FlatMetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _x: &[f64], xi: &[f64]) -> f64 {
        xi.iter().map(|v| v * v).sum::<f64>() - 1.0
    }

    fn gradient(&self, _x: &[f64], xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; xi.len()], xi.iter().map(|v| 2.0 * v).collect())
    }
}

/// `p = (1 + a cos(2π k·x)) |ξ|² - 1`, a conformally flat metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalMetric {
    pub amplitude: f64,
    pub freq: Vec<f64>,
}

impl ConformalMetric {
    pub fn new(amplitude: f64, freq: Vec<f64>) -> Result<Self> {
        if !(amplitude.abs() < 1.0) {
            return Err(Error::input("conformal amplitude must satisfy |a| < 1"));
        }
        Ok(Self { amplitude, freq })
    }

    fn phase(&self, x: &[f64]) -> f64 {
        TAU * self.freq.iter().zip(x).map(|(k, v)| k * v).sum::<f64>()
    }
}

impl Hamiltonian for ConformalMetric {
    fn dim(&self) -> usize {
        self.freq.len()
    }

    fn value(&self, x: &[f64], xi: &[f64]) -> f64 {
        (1.0 + self.amplitude * self.phase(x).cos()) * xi.iter().map(|v| v * v).sum::<f64>() - 1.0
    }

    fn gradient(&self, x: &[f64], xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let th = self.phase(x);
        let n2: f64 = xi.iter().map(|v| v * v).sum();
        let c = 1.0 + self.amplitude * th.cos();
        let s = -self.amplitude * th.sin() * n2 * TAU;
        (self.freq.iter().map(|k| s * k).collect(), xi.iter().map(|v| 2.0 * c * v).collect())
    }
}

#[derive(Debug, Clone)]
pub enum FlowMap {
    ExactFlat {
        convention: TimeConvention,
    },
    Generic {
        hamiltonian: Arc<dyn Hamiltonian>,
        step: f64,
        convention: TimeConvention,
    },
}

impl FlowMap {
    pub fn flat(convention: TimeConvention) -> Self {
        FlowMap::ExactFlat { convention }
    }

    pub fn generic(hamiltonian: Arc<dyn Hamiltonian>, step: f64, convention: TimeConvention) -> Result<Self> {
        if !(step > 0.0 && step <= 1e-3) {
            return Err(Error::input(format!("integrator step must lie in (0, 1e-3], got {step}")));
        }
        Ok(FlowMap::Generic {
            hamiltonian,
            step,
            convention,
        })
    }

    pub fn convention(&self) -> TimeConvention {
        match self {
            FlowMap::ExactFlat { convention } | FlowMap::Generic { convention, .. } => *convention,
        }
    }

    /// Vector field `(ẋ, ξ̇)` at a point.
    pub fn vector_field(&self, x: &[f64], xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self {
            FlowMap::ExactFlat { convention } => (flat_velocity(*convention, xi), vec![0.0; xi.len()]),
            FlowMap::Generic {
                hamiltonian,
                convention,
                ..
            } => {
                let (px, pxi) = hamiltonian.gradient(x, xi);
                let scale = match convention {
                    TimeConvention::HamiltonianHp => 1.0,
                    TimeConvention::UnitSpeed => {
                        let s = norm(&pxi);
                        if s > 0.0 {
                            1.0 / s
                        } else {
                            0.0
                        }
                    }
                };
                (
                    pxi.iter().map(|v| v * scale).collect(),
                    px.iter().map(|v| -v * scale).collect(),
                )
            }
        }
    }

    /// `φ_t(ρ)`.
    pub fn flow(&self, rho: &PhasePoint, t: f64) -> PhasePoint {
        match self {
            FlowMap::ExactFlat { convention } => {
                let v = flat_velocity(*convention, &rho.xi);
                PhasePoint::new(
                    rho.x.iter().zip(&v).map(|(x, v)| x + t * v).collect(),
                    rho.xi.clone(),
                )
            }
            FlowMap::Generic { step, .. } => {
                let n = (t.abs() / step).ceil().max(if t == 0.0 { 0.0 } else { 1.0 }) as usize;
                let dt = if n == 0 { 0.0 } else { t / n as f64 };
                let mut z = (rho.x.clone(), rho.xi.clone());
                for _ in 0..n {
                    z = self.yoshida_step(&z, dt);
                }
                PhasePoint::new(z.0, z.1)
            }
        }
    }

    fn midpoint_step(&self, z: &(Vec<f64>, Vec<f64>), dt: f64) -> (Vec<f64>, Vec<f64>) {
        let (x0, k0) = z;
        let (mut dx, mut dk) = self.vector_field(x0, k0);
        for _ in 0..100 {
            let xm: Vec<f64> = x0.iter().zip(&dx).map(|(a, d)| a + 0.5 * dt * d).collect();
            let km: Vec<f64> = k0.iter().zip(&dk).map(|(a, d)| a + 0.5 * dt * d).collect();
            let (nx, nk) = self.vector_field(&xm, &km);
            let change = nx
                .iter()
                .zip(&dx)
                .chain(nk.iter().zip(&dk))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            dx = nx;
            dk = nk;
            if change * dt.abs() < 1e-16 {
                break;
            }
        }
        (
            x0.iter().zip(&dx).map(|(a, d)| a + dt * d).collect(),
            k0.iter().zip(&dk).map(|(a, d)| a + dt * d).collect(),
        )
    }

    /// Fourth-order triple-jump composition of implicit midpoint steps.
    fn yoshida_step(&self, z: &(Vec<f64>, Vec<f64>), dt: f64) -> (Vec<f64>, Vec<f64>) {
        let c = 2f64.powf(1.0 / 3.0);
        let w1 = 1.0 / (2.0 - c);
        let w0 = -c * w1;
        let z = self.midpoint_step(z, w1 * dt);
        let z = self.midpoint_step(&z, w0 * dt);
        self.midpoint_step(&z, w1 * dt)
    }
}

fn flat_velocity(convention: TimeConvention, xi: &[f64]) -> Vec<f64> {
    match convention {
        TimeConvention::HamiltonianHp => xi.iter().map(|v| 2.0 * v).collect(),
        TimeConvention::UnitSpeed => {
            let n = norm(xi);
            if n == 0.0 {
                vec![0.0; xi.len()]
            } else {
                xi.iter().map(|v| v / n).collect()
            }
        }
    }
}

/// `∪_{|t| ≤ T} φ_t(Ω)` for a cell Ω of Σ^A.
#[derive(Debug, Clone)]
pub enum Tube {
    /// Exact description for straight-line flows: the set of `y + t v` with
    /// `y` in the cell's base box, `ξ` in the cell's covector set and `|t| ≤ T`.
    Flat {
        sub: FlatSubmanifold,
        cell: SigmaCell,
        half_width: f64,
        convention: TimeConvention,
    },
    /// Orbit samples of a general Hamiltonian flow, with membership at a given resolution.
    Sampled { points: Vec<PhasePoint>, resolution: f64 },
}

pub fn tube_flowout(
    fm: &FlowMap,
    sigma: &SigmaASet,
    cell: &SigmaCell,
    t: f64,
    resolution: Option<f64>,
) -> Result<Tube> {
    if !(t > 0.0) {
        return Err(Error::input("tube half-width T must be positive"));
    }
    match fm {
        FlowMap::ExactFlat { convention } => Ok(Tube::Flat {
            sub: sigma.submanifold().clone(),
            cell: cell.clone(),
            half_width: t,
            convention: *convention,
        }),
        FlowMap::Generic { .. } => {
            let resolution = resolution.ok_or_else(|| {
                Error::input("tubes of a general Hamiltonian flow are sampled; a resolution is required")
            })?;
            if !(resolution > 0.0) {
                return Err(Error::input("resolution must be positive"));
            }
            let per_axis = 8;
            let mut seeds = Vec::new();
            let xs = sample_box(&cell.x_range, per_axis);
            let xis = sample_box(&cell.xi_range, 4);
            let fibers: Vec<f64> = match cell.fiber {
                FiberCell::Sign(s) => vec![s],
                FiberCell::Arc { start, end } => (0..4).map(|j| start + (end - start) * (j as f64 + 0.5) / 4.0).collect(),
            };
            for x in &xs {
                for k in &xis {
                    for f in &fibers {
                        seeds.push(sigma.point(x, k, *f));
                    }
                }
            }
            let nt = ((2.0 * t) / resolution).ceil().max(2.0) as usize;
            let mut points = Vec::with_capacity(seeds.len() * (nt + 1));
            for s in &seeds {
                let start = fm.flow(s, -t);
                let dt = 2.0 * t / nt as f64;
                let mut p = start;
                points.push(p.clone());
                for _ in 0..nt {
                    p = fm.flow(&p, dt);
                    points.push(p.clone());
                }
            }
            Ok(Tube::Sampled { points, resolution })
        }
    }
}

fn sample_box(ranges: &[(f64, f64)], per_axis: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::new()];
    for &(a, b) in ranges {
        let vals: Vec<f64> = if a == b {
            vec![a]
        } else {
            (0..per_axis).map(|j| a + (b - a) * (j as f64 + 0.5) / per_axis as f64).collect()
        };
        pts = pts
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    pts
}

fn interval_contains(r: (f64, f64), v: f64) -> bool {
    if r.0 == r.1 {
        circle_diff(v, r.0).abs() <= POINT_TOL
    } else {
        wrap01(v - r.0 + POINT_TOL) <= r.1 - r.0 + 2.0 * POINT_TOL
    }
}

/// Length of `([a, b] + s mod 1) ∩ [c, d]` for subintervals of `[0, 1]`.
fn circular_overlap(a: f64, b: f64, s: f64, c: f64, d: f64) -> f64 {
    let lo = (c - b - s).floor() as i64;
    let hi = (d - a - s).ceil() as i64;
    (lo..=hi)
        .map(|j| ((b + s + j as f64).min(d) - (a + s + j as f64).max(c)).max(0.0))
        .sum()
}

/// Times `t ∈ [-T, T]` with `u0 + t w ≡ c (mod 1)`.
fn hits(u0: f64, w: f64, c: f64, t: f64, out: &mut Vec<f64>) {
    if w == 0.0 {
        return;
    }
    let (lo, hi) = ((u0 - t * w.abs()) - c, (u0 + t * w.abs()) - c);
    for j in (lo.floor() as i64 - 1)..=(hi.ceil() as i64 + 1) {
        let tj = (c + j as f64 - u0) / w;
        if tj > -t && tj < t {
            out.push(tj);
        }
    }
}

impl Tube {
    fn covector_in_cell(sub: &FlatSubmanifold, cell: &SigmaCell, xi: &[f64]) -> bool {
        let kt = sub.tangential_part(xi);
        let kn = sub.normal_part(xi);
        let in_box = cell.xi_range.iter().zip(&kt).all(|(&(a, b), &v)| {
            if a == b {
                (v - a).abs() <= POINT_TOL
            } else {
                v >= a - POINT_TOL && v <= b + POINT_TOL
            }
        });
        if !in_box {
            return false;
        }
        let r = SigmaASet::fiber_radius(&kt);
        match cell.fiber {
            FiberCell::Sign(s) => (kn[0] - s * r).abs() <= 1e-9,
            FiberCell::Arc { start, end } => {
                if (norm(&kn) - r).abs() > 1e-9 || r == 0.0 {
                    return false;
                }
                let ang = kn[1].atan2(kn[0]).rem_euclid(TAU);
                ang >= start - 1e-12 && ang <= end + 1e-12
            }
        }
    }

    pub fn contains(&self, rho: &PhasePoint) -> bool {
        match self {
            Tube::Sampled { points, resolution } => points.iter().any(|p| p.distance(rho) <= *resolution),
            Tube::Flat {
                sub,
                cell,
                half_width,
                convention,
            } => {
                if !Self::covector_in_cell(sub, cell, &rho.xi) {
                    return false;
                }
                let v = flat_velocity(*convention, &rho.xi);
                let vn = sub.normal_part(&v);
                let dev = sub.normal_deviation(&rho.x);
                let dom = (0..vn.len())
                    .max_by(|&a, &b| vn[a].abs().total_cmp(&vn[b].abs()))
                    .unwrap();
                let mut cands = Vec::new();
                hits(dev[dom], -vn[dom], 0.0, half_width + 1e-15, &mut cands);
                if dev[dom].abs() <= POINT_TOL {
                    cands.push(0.0);
                }
                cands.into_iter().any(|t| {
                    let y: Vec<f64> = rho.x.iter().zip(&v).map(|(x, v)| x - t * v).collect();
                    sub.distance_to(&y) <= POINT_TOL
                        && cell
                            .x_range
                            .iter()
                            .zip(sub.tangential_part(&y))
                            .all(|(r, yv)| interval_contains(*r, yv))
                })
            }
        }
    }

    /// `μ(tube)`; exact for flat tubes, atoms only for sampled tubes.
    pub fn mass(&self, mu: &MeasureRep) -> Result<f64> {
        if mu.space() != Space::CotangentM {
            return Err(Error::input("tube masses are taken against measures on T*M"));
        }
        let mut total: f64 = mu.atoms().iter().filter(|a| self.contains(&a.point)).map(|a| a.mass).sum();
        for c in mu.components() {
            total += match (self, c) {
                (Tube::Sampled { .. }, _) => {
                    return Err(Error::Unsupported(
                        "density masses of sampled tubes are not computed".into(),
                    ))
                }
                (Tube::Flat { sub, cell, .. }, _) if sub.codim() > 1 || !cell.has_x_extent() => 0.0,
                (tube, Component::FixedCovector { xi, density, region }) => {
                    density * tube.fixed_covector_volume(xi, region.as_ref())
                }
                (
                    Tube::Flat {
                        cell,
                        half_width,
                        convention,
                        ..
                    },
                    Component::Liouville { density },
                ) => {
                    if !cell.has_xi_extent() {
                        0.0
                    } else {
                        let (a, b) = cell.xi_range[0];
                        let lx: f64 = cell.x_range.iter().map(|(p, q)| q - p).product();
                        density * 2.0 * half_width * lx * convention.speed() * (b - a) / TAU
                    }
                }
                _ => return Err(Error::input("unexpected component on T*M")),
            };
        }
        Ok(total)
    }

    /// Lebesgue volume of the flat tube positions carried by a single covector `ξ0`.
    fn fixed_covector_volume(&self, xi0: &[f64], region: Option<&PositionBox>) -> f64 {
        let Tube::Flat {
            sub,
            cell,
            half_width: t,
            convention,
        } = self
        else {
            return 0.0;
        };
        if !Self::covector_in_cell(sub, cell, xi0) {
            return 0.0;
        }
        let v = flat_velocity(*convention, xi0);
        let vbar = sub.normal_part(&v)[0].abs();
        let nax = sub.normal_axes()[0];
        let off = sub.offset()[0];
        let tang = sub.tangential_axes();
        let Some(region) = region else {
            let lx: f64 = cell.x_range.iter().map(|(a, b)| b - a).product();
            return vbar * 2.0 * t * lx;
        };
        let slice = |s: f64| -> f64 {
            let xn = wrap01(off + s * v[nax]);
            if xn < region.lo[nax] || xn > region.hi[nax] {
                return 0.0;
            }
            tang.iter()
                .zip(&cell.x_range)
                .map(|(&ax, &(a, b))| circular_overlap(a, b, s * v[ax], region.lo[ax], region.hi[ax]))
                .product()
        };
        let mut breaks = vec![-*t, *t];
        hits(off, v[nax], region.lo[nax], *t, &mut breaks);
        hits(off, v[nax], region.hi[nax], *t, &mut breaks);
        for (&ax, &(a, b)) in tang.iter().zip(&cell.x_range) {
            for e in [a, b] {
                for c in [region.lo[ax], region.hi[ax]] {
                    hits(e, v[ax], c, *t, &mut breaks);
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let (gx, gw) = gauss_legendre(4);
        let mut acc = 0.0;
        for w in breaks.windows(2) {
            let (c, r) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            acc += r * gx.iter().zip(&gw).map(|(x, wt)| wt * slice(c + r * x)).sum::<f64>();
        }
        vbar * acc
    }
}

/// Parameters of the finite-horizon recurrence approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceParams {
    pub eps_hit: f64,
    pub eps_rec: f64,
    pub n_min: usize,
    pub t_max: f64,
    pub t_min: f64,
}

impl Default for RecurrenceParams {
    fn default() -> Self {
        Self {
            eps_hit: 1e-6,
            eps_rec: 1e-4,
            n_min: 3,
            t_max: 50.0,
            t_min: 1e-6,
        }
    }
}

impl RecurrenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_hit > 0.0 && self.eps_rec >= self.eps_hit && self.t_max > 0.0 && self.t_min >= 0.0) {
            return Err(Error::input("recurrence parameters need ε_rec ≥ ε_hit > 0 and T_max > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnRecord {
    /// Elapsed time from the start (positive in both directions).
    pub time: f64,
    pub point: PhasePoint,
    pub distance: f64,
    pub base_index: usize,
}

/// Crossings of the footpoint through H: times at which the dominant normal coordinate
/// returns to its offset, with that coordinate snapped onto H.
fn crossings(fm: &FlowMap, sub: &FlatSubmanifold, rho: &PhasePoint, t_min: f64, t_max: f64, sign: f64) -> Vec<(f64, PhasePoint)> {
    let normal = sub.normal_axes();
    let (v0, _) = fm.vector_field(&rho.x, &rho.xi);
    let Some(dom_i) = (0..normal.len()).max_by(|&a, &b| v0[normal[a]].abs().total_cmp(&v0[normal[b]].abs())) else {
        return Vec::new();
    };
    let ax = normal[dom_i];
    let off = sub.offset()[dom_i];
    let snap = |mut p: PhasePoint| {
        p.x[ax] = off;
        p
    };
    let mut out = Vec::new();
    match fm {
        FlowMap::ExactFlat { convention } => {
            let w = sign * flat_velocity(*convention, &rho.xi)[ax];
            if w == 0.0 {
                return out;
            }
            let d0 = circle_diff(rho.x[ax], off);
            // t with d0 + t w ∈ ℤ
            let mut j = if w > 0.0 { (d0 + t_min * w).floor() + 1.0 } else { (d0 + t_min * w).ceil() - 1.0 };
            loop {
                let t = (j - d0) / w;
                if t > t_max {
                    break;
                }
                if t > t_min {
                    out.push((t, snap(fm.flow(rho, sign * t))));
                }
                j += w.signum();
            }
        }
        FlowMap::Generic { step, .. } => {
            let dt = sign * step;
            let g = |p: &(Vec<f64>, Vec<f64>)| circle_diff(p.0[ax], off);
            let mut z = (rho.x.clone(), rho.xi.clone());
            let mut t = 0.0;
            let mut gz = g(&z);
            while t < t_max {
                let zn = fm.yoshida_step(&z, dt);
                let gn = g(&zn);
                if gz * gn < 0.0 && gz.abs() < 0.25 && gn.abs() < 0.25 || gn == 0.0 {
                    let (mut lo, mut hi) = (0.0, 1.0);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let gm = g(&fm.yoshida_step(&z, mid * dt));
                        if gm == 0.0 || (gm < 0.0) == (gz < 0.0) && gz != 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let s = 0.5 * (lo + hi);
                    let tc = t + s * step;
                    if tc > t_min && tc <= t_max {
                        let zc = fm.yoshida_step(&z, s * dt);
                        out.push((tc, snap(PhasePoint::new(zc.0, zc.1))));
                    }
                }
                z = zn;
                gz = gn;
                t += step;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn returns(
    fm: &FlowMap,
    rho: &PhasePoint,
    sigma: &SigmaASet,
    eps_hit: f64,
    t_min: f64,
    t_max: f64,
    limit: usize,
    sign: f64,
) -> Vec<ReturnRecord> {
    let mut out = Vec::new();
    if sigma.is_empty() {
        return out;
    }
    for (t, p) in crossings(fm, sigma.submanifold(), rho, t_min, t_max, sign) {
        if let Some((d, b)) = sigma.distance(&p) {
            if d <= eps_hit {
                out.push(ReturnRecord {
                    time: t,
                    point: p,
                    distance: d,
                    base_index: b,
                });
                if out.len() >= limit {
                    break;
                }
            }
        }
    }
    out
}

/// Earliest `t ∈ (t_min, T_max]` with `dist(φ_t(ρ), Σ^A) ≤ ε_hit`.
pub fn first_return(
    fm: &FlowMap,
    rho: &PhasePoint,
    sigma: &SigmaASet,
    eps_hit: f64,
    t_max: f64,
) -> Option<ReturnRecord> {
    returns(fm, rho, sigma, eps_hit, RecurrenceParams::default().t_min, t_max, 1, 1.0)
        .into_iter()
        .next()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub forward: Vec<ReturnRecord>,
    pub backward: Vec<ReturnRecord>,
}

/// Successive returns up to `limit` or the horizon, forward and along the reversed flow.
pub fn return_orbit(
    fm: &FlowMap,
    rho: &PhasePoint,
    sigma: &SigmaASet,
    eps_hit: f64,
    t_max: f64,
    limit: usize,
) -> Orbit {
    let t_min = RecurrenceParams::default().t_min;
    Orbit {
        forward: returns(fm, rho, sigma, eps_hit, t_min, t_max, limit, 1.0),
        backward: returns(fm, rho, sigma, eps_hit, t_min, t_max, limit, -1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Recurrent,
    NonReturning,
    TooFewReturns,
    NotClose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub orbit: Orbit,
}

pub fn classify_recurrent(fm: &FlowMap, rho: &PhasePoint, sigma: &SigmaASet, p: &RecurrenceParams) -> Result<Classification> {
    p.validate()?;
    let orbit = Orbit {
        forward: returns(fm, rho, sigma, p.eps_hit, p.t_min, p.t_max, usize::MAX, 1.0),
        backward: returns(fm, rho, sigma, p.eps_hit, p.t_min, p.t_max, usize::MAX, -1.0),
    };
    let close = |rs: &[ReturnRecord]| rs.iter().any(|r| r.point.distance(rho) <= p.eps_rec);
    let verdict = if orbit.forward.is_empty() || orbit.backward.is_empty() {
        Verdict::NonReturning
    } else if orbit.forward.len() < p.n_min || orbit.backward.len() < p.n_min {
        Verdict::TooFewReturns
    } else if !close(&orbit.forward) || !close(&orbit.backward) {
        Verdict::NotClose
    } else {
        Verdict::Recurrent
    };
    Ok(Classification { verdict, orbit })
}

/// `ν^A(𝓡_A)` estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentMass {
    /// Recurrent mass divided by total mass (0 for the zero measure).
    pub fraction: f64,
    /// Recurrent mass.
    pub absolute: f64,
    pub total: f64,
    /// 95% interval for `fraction` from the random samples (degenerate without them).
    pub ci_low: f64,
    pub ci_high: f64,
    pub nodes: usize,
    pub params: RecurrenceParams,
}

/// Mass-weighted recurrence indicator over atoms and cell centers, optionally refined by
/// `samples_per_cell` stratified random points per cell (seeded).
pub fn recurrent_mass(
    fm: &FlowMap,
    m: &MeasureRep,
    sigma: &SigmaASet,
    p: &RecurrenceParams,
    samples_per_cell: usize,
    seed: u64,
) -> Result<RecurrentMass> {
    p.validate()?;
    if m.space() != Space::SigmaA {
        return Err(Error::input("recurrent mass is taken against a measure on Σ^A"));
    }
    let recurrent = |rho: &PhasePoint| -> Result<bool> {
        Ok(classify_recurrent(fm, rho, sigma, p)?.verdict == Verdict::Recurrent)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut absolute, mut total, mut nodes) = (0.0, 0.0, 0usize);
    let mut var = 0.0;
    for a in m.atoms() {
        total += a.mass;
        nodes += 1;
        if recurrent(&a.point)? {
            absolute += a.mass;
        }
    }
    for cc in m.cell_components() {
        for ((cell, center), &mass) in cc.cells.iter().zip(&cc.centers).zip(&cc.masses) {
            if mass == 0.0 {
                continue;
            }
            total += mass;
            if samples_per_cell == 0 {
                nodes += 1;
                if recurrent(center)? {
                    absolute += mass;
                }
                continue;
            }
            let mut hitsn = 0usize;
            for j in 0..samples_per_cell {
                let u = (j as f64 + rng.gen::<f64>()) / samples_per_cell as f64;
                let pick = |r: &(f64, f64), t: f64| r.0 + (r.1 - r.0) * t;
                let x: Vec<f64> = cell.x_range.iter().enumerate().map(|(i, r)| pick(r, if i == 0 { u } else { rng.gen() })).collect();
                let xi: Vec<f64> = cell.xi_range.iter().map(|r| pick(r, rng.gen())).collect();
                let f = match cell.fiber {
                    FiberCell::Sign(s) => s,
                    FiberCell::Arc { start, end } => pick(&(start, end), rng.gen()),
                };
                let rho = sigma.point(&x, &xi, f);
                nodes += 1;
                if recurrent(&rho)? {
                    hitsn += 1;
                }
            }
            let q = hitsn as f64 / samples_per_cell as f64;
            absolute += mass * q;
            var += mass * mass * q * (1.0 - q) / samples_per_cell as f64;
        }
    }
    let fraction = if total > 0.0 { absolute / total } else { 0.0 };
    let half = if total > 0.0 { 1.96 * var.sqrt() / total } else { 0.0 };
    Ok(RecurrentMass {
        fraction,
        absolute,
        total,
        ci_low: (fraction - half).max(0.0),
        ci_high: (fraction + half).min(1.0),
        nodes,
        params: *p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sigma_a, BaseElement, TorusManifold};
    use crate::measures::{lift_to_sigma_a, Atom, Density};
    use proptest::prelude::*;

    const S2: f64 = std::f64::consts::SQRT_2 / 2.0;

    fn recurrent_sigma() -> SigmaASet {
        build_sigma_a(&FlatSubmanifold::horizontal_line(), vec![BaseElement::Stripe { xi: vec![S2] }]).unwrap()
    }

    fn coherent_sigma() -> SigmaASet {
        build_sigma_a(
            &FlatSubmanifold::horizontal_line(),
            vec![BaseElement::Point { x: vec![0.5], xi: vec![0.5] }],
        )
        .unwrap()
    }

    #[test]
    fn flat_flow_examples() {
        let rho = PhasePoint::new(vec![0.3, 0.0], vec![S2, S2]);
        let unit = FlowMap::flat(TimeConvention::UnitSpeed);
        let hp = FlowMap::flat(TimeConvention::HamiltonianHp);
        assert!(unit.flow(&rho, 0.0).approx_eq(&rho, 0.0));
        assert!(unit.flow(&rho, std::f64::consts::SQRT_2).approx_eq(&rho, 1e-12));
        assert!(hp.flow(&rho, S2).approx_eq(&rho, 1e-12));
    }

    #[test]
    fn first_return_both_conventions() {
        let sigma = recurrent_sigma();
        for (conv, t) in [(TimeConvention::UnitSpeed, std::f64::consts::SQRT_2), (TimeConvention::HamiltonianHp, S2)] {
            let fm = FlowMap::flat(conv);
            for s in [1.0, -1.0] {
                let rho = sigma.point(&[0.37], &[S2], s);
                let r = first_return(&fm, &rho, &sigma, 1e-6, 3.0).unwrap();
                assert!((r.time - t).abs() < 1e-12);
                assert!(r.point.approx_eq(&rho, 1e-12));
            }
        }
    }

    #[test]
    fn coherent_direction_never_returns() {
        let sigma = coherent_sigma();
        let rho = sigma.point(&[0.5], &[0.5], 1.0);
        let fm = FlowMap::flat(TimeConvention::UnitSpeed);
        assert!(first_return(&fm, &rho, &sigma, 1e-3, 50.0).is_none());
        let orbit = return_orbit(&fm, &rho, &sigma, 1e-3, 50.0, 10);
        assert!(orbit.forward.is_empty() && orbit.backward.is_empty());
        // crossing-arithmetic oracle: x-offsets n/√3 mod 1 stay above 1e-3 for n ≤ 43
        let min_off = (1..=43)
            .map(|n| circle_diff(n as f64 / 3f64.sqrt(), 0.0).abs())
            .fold(1.0, f64::min);
        assert!(min_off > 1e-3);
        let p = RecurrenceParams {
            eps_hit: 1e-3,
            eps_rec: 1e-3,
            ..Default::default()
        };
        assert_eq!(classify_recurrent(&fm, &rho, &sigma, &p).unwrap().verdict, Verdict::NonReturning);
    }

    #[test]
    fn recurrent_orbit_and_classification() {
        let sigma = recurrent_sigma();
        let fm = FlowMap::flat(TimeConvention::UnitSpeed);
        let rho = sigma.point(&[0.81], &[S2], 1.0);
        let orbit = return_orbit(&fm, &rho, &sigma, 1e-6, 50.0, 5);
        assert_eq!(orbit.forward.len(), 5);
        for (j, (f, b)) in orbit.forward.iter().zip(&orbit.backward).enumerate() {
            let t = (j + 1) as f64 * std::f64::consts::SQRT_2;
            assert!((f.time - t).abs() < 1e-10 && (b.time - t).abs() < 1e-10);
            assert!(f.point.approx_eq(&rho, 1e-10) && b.point.approx_eq(&rho, 1e-10));
        }
        let c = classify_recurrent(&fm, &rho, &sigma, &RecurrenceParams::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Recurrent);
    }

    #[test]
    fn rational_direction_period() {
        let sigma = build_sigma_a(&FlatSubmanifold::horizontal_line(), vec![BaseElement::Stripe { xi: vec![0.6] }]).unwrap();
        let fm = FlowMap::flat(TimeConvention::UnitSpeed);
        let rho = sigma.point(&[0.1], &[0.6], 1.0);
        let orbit = return_orbit(&fm, &rho, &sigma, 1e-6, 50.0, 8);
        // x advances by 3/4 per crossing of y, so the footpoint closes after 4 crossings
        let back: Vec<usize> = orbit
            .forward
            .iter()
            .enumerate()
            .filter(|(_, r)| r.point.approx_eq(&rho, 1e-9))
            .map(|(i, _)| i + 1)
            .collect();
        assert_eq!(back, vec![4, 8]);
        let c = classify_recurrent(&fm, &rho, &sigma, &RecurrenceParams::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Recurrent);
    }

    #[test]
    fn recurrent_mass_examples() {
        let fm = FlowMap::flat(TimeConvention::HamiltonianHp);
        let sigma = recurrent_sigma();
        let nu = MeasureRep::new(
            Space::CotangentH,
            1,
            vec![],
            vec![Component::Stripe { xi: vec![S2], density: Density::Constant(1.0) }],
        )
        .unwrap();
        let nua = lift_to_sigma_a(&nu, &sigma).unwrap();
        let r = recurrent_mass(&fm, &nua, &sigma, &RecurrenceParams::default(), 0, 7).unwrap();
        assert!((r.fraction - 1.0).abs() < 1e-12);

        let sigma4 = coherent_sigma();
        let nu4 = MeasureRep::new(
            Space::CotangentH,
            1,
            vec![Atom { point: PhasePoint::new(vec![0.5], vec![0.5]), mass: 1.0 }],
            vec![],
        )
        .unwrap();
        let nua4 = lift_to_sigma_a(&nu4, &sigma4).unwrap();
        let p = RecurrenceParams { eps_hit: 1e-3, eps_rec: 1e-3, ..Default::default() };
        assert_eq!(recurrent_mass(&fm, &nua4, &sigma4, &p, 0, 7).unwrap().fraction, 0.0);

        let empty = build_sigma_a(&FlatSubmanifold::horizontal_line(), vec![]).unwrap();
        let r = recurrent_mass(&fm, &MeasureRep::zero(Space::SigmaA, 2), &empty, &p, 4, 1).unwrap();
        assert_eq!(r.fraction, 0.0);
    }

    #[test]
    fn stratified_samples_are_seeded() {
        let fm = FlowMap::flat(TimeConvention::HamiltonianHp);
        let sigma = recurrent_sigma().with_cell_layout(crate::geometry::CellLayout {
            base_cells: 8,
            band_cells: 2,
            fiber_cells: 4,
        });
        let nu = MeasureRep::new(
            Space::CotangentH,
            1,
            vec![],
            vec![Component::Stripe { xi: vec![S2], density: Density::Constant(1.0) }],
        )
        .unwrap();
        let nua = lift_to_sigma_a(&nu, &sigma).unwrap();
        let a = recurrent_mass(&fm, &nua, &sigma, &RecurrenceParams::default(), 3, 11).unwrap();
        let b = recurrent_mass(&fm, &nua, &sigma, &RecurrenceParams::default(), 3, 11).unwrap();
        assert_eq!(a, b);
        assert!((a.fraction - 1.0).abs() < 1e-12 && a.ci_low == 1.0);
    }

    #[test]
    fn tube_degenerates_and_separates_branches() {
        let sigma = recurrent_sigma();
        let fm = FlowMap::flat(TimeConvention::HamiltonianHp);
        let cell = &sigma.cells_for(0)[0];
        let tube = tube_flowout(&fm, &sigma, cell, 1e-9, None).unwrap();
        assert!(tube.contains(&sigma.cell_center(cell)));
        let minus = SigmaCell { fiber: FiberCell::Sign(-1.0), ..cell.clone() };
        let t2 = tube_flowout(&fm, &sigma, cell, 0.05, None).unwrap();
        for j in 0..50 {
            let p = fm.flow(&sigma.cell_center(&minus), 0.001 * j as f64);
            assert!(!t2.contains(&p));
        }
        assert!(tube_flowout(&fm, &sigma, cell, 0.0, None).is_err());
    }

    #[test]
    fn tube_area_matches_monte_carlo() {
        use rand::Rng;
        let sigma = recurrent_sigma();
        let fm = FlowMap::flat(TimeConvention::HamiltonianHp);
        let cell = SigmaCell {
            base_index: 0,
            x_range: vec![(0.0, 0.1)],
            xi_range: vec![(S2, S2)],
            fiber: FiberCell::Sign(1.0),
        };
        let tube = tube_flowout(&fm, &sigma, &cell, 0.05, None).unwrap();
        let mu = MeasureRep::new(
            Space::CotangentM,
            2,
            vec![],
            vec![Component::FixedCovector { xi: vec![S2, S2], density: 1.0, region: None }],
        )
        .unwrap();
        let exact = tube.mass(&mu).unwrap();
        assert!((exact - 0.1 * 2.0 * 0.05 * 2.0 * S2).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let inside = (0..n)
            .filter(|_| tube.contains(&PhasePoint::new(vec![rng.gen(), rng.gen()], vec![S2, S2])))
            .count();
        assert!((inside as f64 / n as f64 - exact).abs() < 1e-3);
    }

    #[test]
    fn generic_flat_matches_exact() {
        let fm = FlowMap::generic(Arc::new(FlatMetric { dim: 2 }), 1e-3, TimeConvention::HamiltonianHp).unwrap();
        let ex = FlowMap::flat(TimeConvention::HamiltonianHp);
        let rho = PhasePoint::new(vec![0.2, 0.0], vec![0.6, 0.8]);
        assert!(fm.flow(&rho, 0.77).approx_eq(&ex.flow(&rho, 0.77), 1e-12));
        let sigma = build_sigma_a(&FlatSubmanifold::horizontal_line(), vec![BaseElement::Stripe { xi: vec![0.6] }]).unwrap();
        let a = first_return(&fm, &rho, &sigma, 1e-6, 3.0).unwrap();
        let b = first_return(&ex, &rho, &sigma, 1e-6, 3.0).unwrap();
        assert!((a.time - b.time).abs() < 1e-10);
        assert!(FlowMap::generic(Arc::new(FlatMetric { dim: 2 }), 1e-2, TimeConvention::UnitSpeed).is_err());
    }

    #[test]
    fn conformal_energy_conserved() {
        let h = Arc::new(ConformalMetric::new(0.3, vec![1.0, 0.0]).unwrap());
        let fm = FlowMap::generic(h.clone(), 1e-3, TimeConvention::HamiltonianHp).unwrap();
        let rho = PhasePoint::new(vec![0.1, 0.2], vec![0.5, 0.7]);
        let p0 = h.value(&rho.x, &rho.xi);
        let out = fm.flow(&rho, 1.0);
        assert!((h.value(&out.x, &out.xi) - p0).abs() < 1e-10);
    }

    #[test]
    fn k2_returns_through_circle() {
        let m = TorusManifold::new(3).unwrap();
        let sub = FlatSubmanifold::new(&m, &[1, 2], &[0.0, 0.0]).unwrap();
        let sigma = build_sigma_a(&sub, vec![BaseElement::Stripe { xi: vec![0.0] }]).unwrap();
        let fm = FlowMap::flat(TimeConvention::UnitSpeed);
        // ξ ∝ (0, 1, 1): y and z cross 0 together every √2
        let rho = sigma.point(&[0.4], &[0.0], std::f64::consts::FRAC_PI_4);
        let r = first_return(&fm, &rho, &sigma, 1e-6, 5.0).unwrap();
        assert!((r.time - std::f64::consts::SQRT_2).abs() < 1e-12);
        // ξ ∝ (0, 1, 2): z crosses twice per y crossing
        let rho = sigma.point(&[0.4], &[0.0], 2f64.atan());
        let r = first_return(&fm, &rho, &sigma, 1e-6, 5.0).unwrap();
        assert!((r.time - 5f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn flat_group_law(x in 0.0f64..1.0, y in 0.0f64..1.0, th in 0.0f64..TAU, s in -5.0f64..5.0, t in -5.0f64..5.0) {
            for conv in [TimeConvention::HamiltonianHp, TimeConvention::UnitSpeed] {
                let fm = FlowMap::flat(conv);
                let rho = PhasePoint::new(vec![x, y], vec![th.cos(), th.sin()]);
                let a = fm.flow(&fm.flow(&rho, s), t);
                let b = fm.flow(&rho, s + t);
                prop_assert!(a.approx_eq(&b, 1e-10));
                prop_assert!((a.covector_norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn first_return_time_halves_under_hp(x in 0.0f64..1.0, xi in -0.95f64..0.95, s in prop::bool::ANY) {
            let sigma = build_sigma_a(&FlatSubmanifold::horizontal_line(), vec![BaseElement::Stripe { xi: vec![xi] }]).unwrap();
            let rho = sigma.point(&[x], &[xi], if s { 1.0 } else { -1.0 });
            let a = first_return(&FlowMap::flat(TimeConvention::UnitSpeed), &rho, &sigma, 1e-6, 50.0);
            let b = first_return(&FlowMap::flat(TimeConvention::HamiltonianHp), &rho, &sigma, 1e-6, 50.0);
            prop_assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a.time - 2.0 * b.time).abs() < 1e-9);
            }
        }

        #[test]
        fn classification_monotone(x in 0.0f64..1.0, q in 1i64..7, p in 1i64..7, scale in 1.0f64..3.0) {
            let th = (q as f64).atan2(p as f64);
            let xi = th.cos();
            let sigma = build_sigma_a(&FlatSubmanifold::horizontal_line(), vec![BaseElement::Stripe { xi: vec![xi] }]).unwrap();
            let fm = FlowMap::flat(TimeConvention::HamiltonianHp);
            let rho = sigma.point(&[x], &[xi], 1.0);
            let base = RecurrenceParams { t_max: 20.0, ..Default::default() };
            let big = RecurrenceParams { t_max: 20.0 * scale, eps_rec: 1e-4 * scale, ..Default::default() };
            let a = classify_recurrent(&fm, &rho, &sigma, &base).unwrap().verdict;
            let b = classify_recurrent(&fm, &rho, &sigma, &big).unwrap().verdict;
            if a == Verdict::Recurrent {
                prop_assert_eq!(b, Verdict::Recurrent);
            }
        }
    }
}
