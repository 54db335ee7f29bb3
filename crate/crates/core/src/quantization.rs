//! Standard (left) semiclassical quantization `a(x, hD)` on the torus acting on
//! finite Fourier series, symbol pairings, defect-measure estimation and a
//! phase-space wavefront detector.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap01, BaseElement, FlatSubmanifold};
use crate::measures::MeasureRep;
use crate::numerics::linear_fit;
use crate::states::{HSequence, StateFamily, TestFamily, TestState};
use crate::trig::TrigSeries;

const MARGIN: i64 = 16;

/// Finite Fourier series `Σ c_m e^{2πi m·x}` on the n-torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierRep {
    dim: usize,
    coeffs: BTreeMap<Vec<i64>, Complex64>,
    radius: i64,
}

impl FourierRep {
    /// Builds a representation whose truncation radius exceeds the largest
    /// frequency by a fixed margin.
    pub fn from_coefficients(dim: usize, coeffs: BTreeMap<Vec<i64>, Complex64>) -> Result<Self> {
        let radius = coeffs
            .keys()
            .flat_map(|m| m.iter().map(|v| v.abs()))
            .max()
            .unwrap_or(0)
            + MARGIN;
        Self::with_radius(dim, coeffs, radius)
    }

    pub fn with_radius(dim: usize, coeffs: BTreeMap<Vec<i64>, Complex64>, radius: i64) -> Result<Self> {
        for m in coeffs.keys() {
            if m.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.len(),
                });
            }
            if m.iter().any(|v| v.abs() > radius) {
                return Err(Error::Bandwidth(format!(
                    "frequency {m:?} exceeds truncation radius {radius}"
                )));
            }
        }
        Ok(Self { dim, coeffs, radius })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn get(&self, m: &[i64]) -> Complex64 {
        self.coeffs.get(m).copied().unwrap_or_default()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm_sqr()).sum()
    }

    /// `⟨self, other⟩ = Σ c_m conj(d_m)`.
    pub fn inner(&self, other: &FourierRep) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(m, c)| c * other.get(m).conj())
            .sum()
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(m, c)| {
                let phase: f64 = m.iter().zip(x).map(|(&k, &v)| k as f64 * v).sum();
                c * Complex64::from_polar(1.0, TAU * phase)
            })
            .sum()
    }

    /// Restriction to a one-dimensional subtorus as a series in the tangential coordinate.
    pub fn restrict(&self, sub: &FlatSubmanifold) -> TrigSeries {
        let t = sub.tangential_axes()[0];
        TrigSeries::new(self.coeffs.iter().map(|(m, c)| {
            let phase: f64 = sub
                .normal_axes()
                .iter()
                .zip(sub.offset())
                .map(|(&a, &o)| m[a] as f64 * o)
                .sum();
            (m[t], c * Complex64::from_polar(1.0, TAU * phase))
        }))
    }
}

/// A closed-form function `b(ξ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Multiplier {
    Constant { value: f64 },
    /// `exp(-|ξ - center|²/(2 width²))`.
    Gaussian { center: Vec<f64>, width: f64 },
    /// `Π ξ_i^{p_i}`.
    Monomial { powers: Vec<u32> },
    /// Smooth bump in `|ξ|` supported in `(radius - half_width, radius + half_width)`.
    RadialBump { radius: f64, half_width: f64 },
    /// `cos(⟨freq, ξ⟩)`.
    Cosine { freq: Vec<f64> },
}

/// `exp(1 - 1/(1 - t²))` on `|t| < 1`, zero outside; equals 1 at t = 0.
pub fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

impl Multiplier {
    pub fn eval(&self, xi: &[f64]) -> f64 {
        match self {
            Multiplier::Constant { value } => *value,
            Multiplier::Gaussian { center, width } => {
                let d2: f64 = xi.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
            Multiplier::Monomial { powers } => xi
                .iter()
                .zip(powers)
                .map(|(v, &p)| v.powi(p as i32))
                .product(),
            Multiplier::RadialBump { radius, half_width } => {
                let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                bump((r - radius) / half_width)
            }
            Multiplier::Cosine { freq } => xi.iter().zip(freq).map(|(a, b)| a * b).sum::<f64>().cos(),
        }
    }

    /// Largest |b| over the closed ball of radius `r` (sampled bound for monomials and cosines).
    pub fn sup_bound(&self, r: f64) -> f64 {
        match self {
            Multiplier::Constant { value } => value.abs(),
            Multiplier::Gaussian { .. } | Multiplier::RadialBump { .. } | Multiplier::Cosine { .. } => 1.0,
            Multiplier::Monomial { powers } => r.powi(powers.iter().sum::<u32>() as i32),
        }
    }
}

/// A spatial factor `a(x)` with an exact action on Fourier series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpatialFactor {
    One,
    /// `cos(2π k·x)`.
    Cos { k: Vec<i64> },
    /// `sin(2π k·x)`.
    Sin { k: Vec<i64> },
    /// `e^{2πi k·x}`.
    Exp { k: Vec<i64> },
}

impl SpatialFactor {
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let ph = |k: &[i64]| TAU * k.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum::<f64>();
        match self {
            SpatialFactor::One => Complex64::new(1.0, 0.0),
            SpatialFactor::Cos { k } => Complex64::new(ph(k).cos(), 0.0),
            SpatialFactor::Sin { k } => Complex64::new(ph(k).sin(), 0.0),
            SpatialFactor::Exp { k } => Complex64::from_polar(1.0, ph(k)),
        }
    }

    /// `a(x) = Σ w_j e^{2πi k_j·x}`.
    fn exponentials(&self, dim: usize) -> Vec<(Vec<i64>, Complex64)> {
        let neg = |k: &[i64]| k.iter().map(|v| -v).collect::<Vec<_>>();
        match self {
            SpatialFactor::One => vec![(vec![0; dim], Complex64::new(1.0, 0.0))],
            SpatialFactor::Cos { k } => vec![
                (k.clone(), Complex64::new(0.5, 0.0)),
                (neg(k), Complex64::new(0.5, 0.0)),
            ],
            SpatialFactor::Sin { k } => vec![
                (k.clone(), Complex64::new(0.0, -0.5)),
                (neg(k), Complex64::new(0.0, 0.5)),
            ],
            SpatialFactor::Exp { k } => vec![(k.clone(), Complex64::new(1.0, 0.0))],
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            SpatialFactor::One => None,
            SpatialFactor::Cos { k } | SpatialFactor::Sin { k } | SpatialFactor::Exp { k } => Some(k.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolTerm {
    pub spatial: SpatialFactor,
    pub multiplier: Multiplier,
}

/// A symbol `a(x, ξ)` on the cotangent bundle of a torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Symbol {
    Multiplier { b: Multiplier },
    Separable { terms: Vec<SymbolTerm> },
}

impl Symbol {
    pub fn constant(c: f64) -> Self {
        Symbol::Multiplier {
            b: Multiplier::Constant { value: c },
        }
    }

    pub fn multiplier(b: Multiplier) -> Self {
        Symbol::Multiplier { b }
    }

    pub fn product(spatial: SpatialFactor, b: Multiplier) -> Self {
        Symbol::Separable {
            terms: vec![SymbolTerm {
                spatial,
                multiplier: b,
            }],
        }
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        match self {
            Symbol::Multiplier { b } => Complex64::new(b.eval(xi), 0.0),
            Symbol::Separable { terms } => terms
                .iter()
                .map(|t| t.spatial.eval(x) * t.multiplier.eval(xi))
                .sum(),
        }
    }

    fn terms(&self) -> Vec<SymbolTerm> {
        match self {
            Symbol::Multiplier { b } => vec![SymbolTerm {
                spatial: SpatialFactor::One,
                multiplier: b.clone(),
            }],
            Symbol::Separable { terms } => terms.clone(),
        }
    }
}

/// `Op_h(a) u` for the left quantization: `Σ_m a(x, 2πhm) c_m e^{2πi m·x}`.
pub fn apply_oph(symbol: &Symbol, u: &FourierRep, h: f64) -> Result<FourierRep> {
    let dim = u.dim();
    let mut out: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
    for term in symbol.terms() {
        if let Some(d) = term.spatial.dim() {
            if d != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: d });
            }
        }
        let shifts = term.spatial.exponentials(dim);
        for (m, c) in u.iter() {
            let xi: Vec<f64> = m.iter().map(|&v| TAU * h * v as f64).collect();
            let b = term.multiplier.eval(&xi);
            if b == 0.0 {
                continue;
            }
            for (k, w) in &shifts {
                let target: Vec<i64> = m.iter().zip(k).map(|(a, b)| a + b).collect();
                if target.iter().any(|v| v.abs() > u.radius()) {
                    return Err(Error::Bandwidth(format!(
                        "symbol shifts frequency {m:?} to {target:?} beyond radius {}",
                        u.radius()
                    )));
                }
                *out.entry(target).or_default() += c * w * b;
            }
        }
    }
    out.retain(|_, c| *c != Complex64::new(0.0, 0.0));
    FourierRep::with_radius(dim, out, u.radius())
}

/// `⟨Op_h(a) u, u⟩_{L²}`.
pub fn pairing(symbol: &Symbol, u: &FourierRep, h: f64) -> Result<Complex64> {
    Ok(apply_oph(symbol, u, h)?.inner(u))
}

/// A family with a Fourier representation at each admissible h and a declared defect measure.
pub trait Quantizable {
    fn fourier_rep_at(&self, h: f64) -> Result<FourierRep>;
    fn declared_measure(&self) -> Result<MeasureRep>;
}

impl Quantizable for StateFamily {
    fn fourier_rep_at(&self, h: f64) -> Result<FourierRep> {
        self.fourier_rep(h)
    }

    fn declared_measure(&self) -> Result<MeasureRep> {
        self.declared_defect_measure()
    }
}

impl Quantizable for TestFamily {
    fn fourier_rep_at(&self, h: f64) -> Result<FourierRep> {
        self.at(h)?.fourier_rep()
    }

    fn declared_measure(&self) -> Result<MeasureRep> {
        self.declared_defect_measure()
    }
}

pub fn pairing_family<Q: Quantizable + ?Sized>(symbol: &Symbol, family: &Q, h: f64) -> Result<Complex64> {
    pairing(symbol, &family.fourier_rep_at(h)?, h)
}

/// One dictionary entry of a defect-measure estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectRow {
    pub name: String,
    pub pairings: Vec<Complex64>,
    /// Intercept `L` of the least-squares fit `pairing(h) ≈ L + c·h` over the last three h.
    pub limit: Complex64,
    pub converged: bool,
    /// `∫ a dμ` for the declared measure, when one is available.
    pub declared: Option<Complex64>,
}

impl DefectRow {
    pub fn deviation(&self) -> Option<f64> {
        self.declared.map(|d| (d - self.limit).norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectTable {
    pub h: Vec<f64>,
    pub rows: Vec<DefectRow>,
}

impl DefectTable {
    pub fn max_deviation(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(DefectRow::deviation)
            .fold(0.0, f64::max)
    }
}

/// Pairings of a symbol dictionary along an h sweep with extrapolated limits.
pub fn estimate_defect<Q: Quantizable + ?Sized>(
    family: &Q,
    symbols: &[(String, Symbol)],
    hseq: &HSequence,
) -> Result<DefectTable> {
    if hseq.len() < 3 {
        return Err(Error::input("defect estimation needs at least 3 h values"));
    }
    let reps = hseq
        .values()
        .iter()
        .map(|&h| family.fourier_rep_at(h))
        .collect::<Result<Vec<_>>>()?;
    let declared = family.declared_measure().ok();
    let mut rows = Vec::with_capacity(symbols.len());
    for (name, sym) in symbols {
        let pairings = reps
            .iter()
            .zip(hseq.values())
            .map(|(u, &h)| pairing(sym, u, h))
            .collect::<Result<Vec<_>>>()?;
        let n = pairings.len();
        let hs = &hseq.values()[n - 3..];
        let tail = &pairings[n - 3..];
        let re = linear_fit(hs, &tail.iter().map(|c| c.re).collect::<Vec<_>>());
        let im = linear_fit(hs, &tail.iter().map(|c| c.im).collect::<Vec<_>>());
        let diffs: Vec<f64> = pairings.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        let converged = diffs.last().copied().unwrap_or(0.0) <= diffs[0] + 1e-10;
        let declared = declared
            .as_ref()
            .map(|m| m.integrate_complex(|x, xi| sym.eval(x, xi)));
        rows.push(DefectRow {
            name: name.clone(),
            pairings,
            limit: Complex64::new(re.intercept, im.intercept),
            converged,
            declared,
        });
    }
    Ok(DefectTable {
        h: hseq.values().to_vec(),
        rows,
    })
}

/// Ten smooth test symbols in dimension `dim`, several of them localized near `center`.
pub fn standard_dictionary(center: &[f64]) -> Vec<(String, Symbol)> {
    let dim = center.len();
    let e0 = |k: i64| {
        let mut v = vec![0; dim];
        v[0] = k;
        v
    };
    let mut first = vec![0u32; dim];
    first[0] = 1;
    let mut second = vec![0u32; dim];
    second[dim - 1] = 2;
    let g = |w: f64| Multiplier::Gaussian {
        center: center.to_vec(),
        width: w,
    };
    vec![
        ("one".into(), Symbol::constant(1.0)),
        ("gauss-narrow".into(), Symbol::multiplier(g(0.25))),
        ("gauss-wide".into(), Symbol::multiplier(g(0.6))),
        ("xi-first".into(), Symbol::multiplier(Multiplier::Monomial { powers: first })),
        ("xi-last-sq".into(), Symbol::multiplier(Multiplier::Monomial { powers: second })),
        ("cos-x".into(), Symbol::product(SpatialFactor::Cos { k: e0(1) }, Multiplier::Constant { value: 1.0 })),
        ("sin-x-gauss".into(), Symbol::product(SpatialFactor::Sin { k: e0(1) }, g(0.4))),
        ("cos-2x-xi".into(), Symbol::product(
            SpatialFactor::Cos { k: e0(2) },
            Multiplier::Cosine { freq: vec![1.5; dim] },
        )),
        ("off-shell".into(), Symbol::multiplier(Multiplier::RadialBump { radius: 0.2, half_width: 0.15 })),
        ("shell-bump".into(), Symbol::multiplier(Multiplier::RadialBump { radius: 1.0, half_width: 0.6 })),
    ]
}

/// Grid and threshold for wavefront detection on `T*H`, H one-dimensional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavefrontGrid {
    pub x_cells: usize,
    pub xi_cells: usize,
    pub xi_max: f64,
    pub threshold: f64,
}

impl Default for WavefrontGrid {
    fn default() -> Self {
        Self {
            x_cells: 64,
            xi_cells: 64,
            xi_max: 1.5,
            threshold: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavefrontCell {
    pub ix: usize,
    pub ixi: usize,
    pub x: f64,
    pub xi: f64,
    /// `‖Op_h(χ_cell) ψ_h‖`.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavefrontSet {
    pub grid: WavefrontGrid,
    pub max_mass: f64,
    pub cells: Vec<WavefrontCell>,
}

impl WavefrontSet {
    fn x_index(&self, x: f64) -> usize {
        ((wrap01(x) * self.grid.x_cells as f64).floor() as usize).min(self.grid.x_cells - 1)
    }

    fn xi_index(&self, xi: f64) -> Option<usize> {
        let w = 2.0 * self.grid.xi_max / self.grid.xi_cells as f64;
        let j = ((xi + self.grid.xi_max) / w).floor();
        (j >= 0.0 && (j as usize) < self.grid.xi_cells).then_some(j as usize)
    }

    pub fn has_cell_near(&self, x: f64, xi: f64) -> bool {
        let (Some(j), i) = (self.xi_index(xi), self.x_index(x)) else {
            return false;
        };
        let nx = self.grid.x_cells as i64;
        self.cells.iter().any(|c| {
            let dx = (c.ix as i64 - i as i64).rem_euclid(nx);
            let dx = dx.min(nx - dx);
            dx <= 1 && (c.ixi as i64 - j as i64).abs() <= 1
        })
    }

    /// True when every declared base point (stripes sampled at cell centers)
    /// has a detected cell within one cell in each direction.
    pub fn covers(&self, declared: &[BaseElement]) -> bool {
        declared.iter().all(|el| match el {
            BaseElement::Point { x, xi } => self.has_cell_near(x[0], xi[0]),
            BaseElement::Stripe { xi } => (0..self.grid.x_cells)
                .all(|i| self.has_cell_near((i as f64 + 0.5) / self.grid.x_cells as f64, xi[0])),
            BaseElement::Band { lo, hi } => {
                self.has_cell_near(0.5, *lo) && self.has_cell_near(0.5, *hi)
            }
        })
    }

    /// Largest `|ξ'|` over detected cells.
    pub fn max_frequency(&self) -> f64 {
        self.cells.iter().map(|c| c.xi.abs()).fold(0.0, f64::max)
    }
}

/// Microlocal mass of `ψ_h` in each cell of an `x × ξ` grid, using
/// tensor-product bumps of half-width one cell (50% overlap).
pub fn detect_wavefront(state: &TestState, grid: WavefrontGrid) -> Result<WavefrontSet> {
    if grid.x_cells < 2 || grid.xi_cells < 2 || !(grid.xi_max > 0.0) {
        return Err(Error::input("wavefront grid needs ≥ 2 cells per axis and ξ_max > 0"));
    }
    let h = state.h();
    let coeffs: Vec<(i64, Complex64)> = state.coefficients().terms().collect();
    let wxi = 2.0 * grid.xi_max / grid.xi_cells as f64;
    let wx = 1.0 / grid.x_cells as f64;
    let band = coeffs.iter().map(|(k, _)| k.abs()).max().unwrap_or(0) as usize;
    let nx = (16 * grid.x_cells).max(4 * band + 64);
    let nodes: Vec<f64> = (0..nx).map(|j| j as f64 / nx as f64).collect();

    let mut masses = vec![vec![0.0; grid.xi_cells]; grid.x_cells];
    let mut v = vec![Complex64::new(0.0, 0.0); nx];
    for (j, col) in (0..grid.xi_cells).map(|j| (j, -grid.xi_max + (j as f64 + 0.5) * wxi)) {
        let local: Vec<(i64, Complex64)> = coeffs
            .iter()
            .filter_map(|&(k, c)| {
                let b = bump((TAU * h * k as f64 - col) / wxi);
                (b > 0.0).then_some((k, c * b))
            })
            .collect();
        if local.is_empty() {
            continue;
        }
        for (slot, &x) in v.iter_mut().zip(&nodes) {
            *slot = local
                .iter()
                .map(|&(k, c)| c * Complex64::from_polar(1.0, TAU * k as f64 * x))
                .sum();
        }
        for (i, row) in masses.iter_mut().enumerate() {
            let cx = (i as f64 + 0.5) * wx;
            let m: f64 = nodes
                .iter()
                .zip(&v)
                .map(|(&x, val)| {
                    let d = crate::geometry::circle_diff(x, cx);
                    (bump(d / wx) * val.norm()).powi(2)
                })
                .sum::<f64>()
                / nx as f64;
            row[j] = m.sqrt();
        }
    }
    let max_mass = masses.iter().flatten().copied().fold(0.0, f64::max);
    let mut cells = Vec::new();
    for (i, row) in masses.iter().enumerate() {
        for (j, &m) in row.iter().enumerate() {
            if max_mass > 0.0 && m > grid.threshold * max_mass {
                cells.push(WavefrontCell {
                    ix: i,
                    ixi: j,
                    x: (i as f64 + 0.5) * wx,
                    xi: -grid.xi_max + (j as f64 + 0.5) * wxi,
                    mass: m,
                });
            }
        }
    }
    Ok(WavefrontSet {
        grid,
        max_mass,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{Scaling, TestKind};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn plane(m: Vec<i64>) -> FourierRep {
        FourierRep::from_coefficients(m.len(), BTreeMap::from([(m, Complex64::new(1.0, 0.0))])).unwrap()
    }

    fn gauss(c: Vec<f64>) -> Multiplier {
        Multiplier::Gaussian { center: c, width: 0.3 }
    }

    #[test]
    fn unit_symbol_is_identity() {
        let u = FourierRep::from_coefficients(
            2,
            BTreeMap::from([
                (vec![1, 2], Complex64::new(0.3, 0.1)),
                (vec![-4, 0], Complex64::new(-0.2, 0.7)),
            ]),
        )
        .unwrap();
        assert_eq!(apply_oph(&Symbol::constant(1.0), &u, 0.01).unwrap(), u);
    }

    #[test]
    fn multiplier_eigenvector() {
        let m = vec![3, 4];
        let h = 1.0 / (TAU * 5.0);
        let b = gauss(vec![0.5, 0.5]);
        let out = apply_oph(&Symbol::multiplier(b.clone()), &plane(m.clone()), h).unwrap();
        assert!((out.get(&m).re - b.eval(&[0.6, 0.8])).abs() < 1e-15);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn separable_cosine_product_to_sum() {
        let m = vec![3, 4];
        let h = 1.0 / (TAU * 5.0);
        let b = gauss(vec![0.0, 1.0]);
        let sym = Symbol::product(SpatialFactor::Cos { k: vec![1, 0] }, b.clone());
        let out = apply_oph(&sym, &plane(m.clone()), h).unwrap();
        let bv = b.eval(&[0.6, 0.8]);
        assert!((out.get(&[4, 4]).re - 0.5 * bv).abs() < 1e-15);
        assert!((out.get(&[2, 4]).re - 0.5 * bv).abs() < 1e-15);
        assert_eq!(pairing(&sym, &plane(m), h).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn bandwidth_overflow() {
        let u = FourierRep::with_radius(1, BTreeMap::from([(vec![5], Complex64::new(1.0, 0.0))]), 5).unwrap();
        let sym = Symbol::product(SpatialFactor::Exp { k: vec![1] }, Multiplier::Constant { value: 1.0 });
        assert!(matches!(apply_oph(&sym, &u, 0.1), Err(Error::Bandwidth(_))));
    }

    #[test]
    fn plane_wave_pairing_is_exact() {
        let phi = StateFamily::plane_wave(vec![1, 1]).unwrap();
        let s2 = 2f64.sqrt() / 2.0;
        let b = Multiplier::Cosine { freq: vec![1.3, -0.4] };
        for n in 1..6 {
            let h = 2f64.sqrt() / (4.0 * PI * n as f64);
            let p = pairing_family(&Symbol::multiplier(b.clone()), &phi, h).unwrap();
            assert!((p.re - b.eval(&[s2, s2])).abs() < 1e-14 && p.im == 0.0);
            let one = pairing_family(&Symbol::constant(1.0), &phi, h).unwrap();
            assert!((one - 1.0).norm() < 1e-14);
        }
    }

    #[test]
    fn coherent_pairing_matches_direct_double_sum() {
        // Oracle: ⟨a(x,hD)ψ, ψ⟩ = ∫ Σ_k a(x, 2πhk) ψ̂_k e^{2πikx} conj(ψ(x)) dx on a dense grid.
        let psi = TestFamily::new(
            FlatSubmanifold::horizontal_line(),
            TestKind::CoherentState { x0: 0.5, p0: 0.5 },
        )
        .unwrap();
        let h = 0.02;
        let st = psi.at(h).unwrap();
        let sym = Symbol::product(SpatialFactor::Cos { k: vec![1] }, gauss(vec![0.5]));
        let fast = pairing(&sym, &st.fourier_rep().unwrap(), h).unwrap();
        let n = 4096;
        let coeffs: Vec<(i64, Complex64)> = st.coefficients().terms().collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let x = j as f64 / n as f64;
            let op: Complex64 = coeffs
                .iter()
                .map(|&(k, c)| sym.eval(&[x], &[TAU * h * k as f64]) * c * Complex64::from_polar(1.0, TAU * k as f64 * x))
                .sum();
            acc += op * st.value(x).conj();
        }
        acc /= n as f64;
        assert!(fast.norm() > 0.1);
        assert!((fast - acc).norm() < 1e-10);
    }

    #[test]
    fn plane_wave_defect_limits() {
        let phi = StateFamily::plane_wave(vec![1, 1]).unwrap();
        let hseq = crate::states::HSequence::new(
            (1..=4).map(|n| 2f64.sqrt() / (4.0 * PI * n as f64)).collect(),
        )
        .unwrap();
        let dict = vec![
            ("one".to_string(), Symbol::constant(1.0)),
            ("gauss".to_string(), Symbol::multiplier(gauss(vec![0.5, 0.5]))),
            (
                "off-shell".to_string(),
                Symbol::multiplier(Multiplier::RadialBump { radius: 0.3, half_width: 0.2 }),
            ),
        ];
        let t = estimate_defect(&phi, &dict, &hseq).unwrap();
        assert!(t.max_deviation() < 1e-12);
        assert!((t.rows[0].limit - 1.0).norm() < 1e-12);
        assert!(t.rows[2].limit.norm() < 1e-12);
        assert!(t.rows.iter().all(|r| r.converged));
    }

    #[test]
    fn standard_dictionary_limits_on_test_families() {
        let line = FlatSubmanifold::horizontal_line();
        let coh = TestFamily::new(line.clone(), TestKind::CoherentState { x0: 0.5, p0: 0.5 }).unwrap();
        let hseq = crate::states::HSequence::new(vec![5e-3, 4e-3, 3e-3, 2e-3]).unwrap();
        let t = estimate_defect(&coh, &standard_dictionary(&[0.5]), &hseq).unwrap();
        assert_eq!(t.rows.len(), 10);
        assert!(t.max_deviation() < 2e-2, "{}", t.max_deviation());

        let curve = TestFamily::new(line, TestKind::CurveExponential { alpha0: 2f64.sqrt() / 2.0 }).unwrap();
        let hseq = crate::states::HSequence::new(
            [24.0, 32.0, 48.0, 64.0].iter().map(|n| 2f64.sqrt() / (4.0 * PI * n)).collect(),
        )
        .unwrap();
        let t = estimate_defect(&curve, &standard_dictionary(&[2f64.sqrt() / 2.0]), &hseq).unwrap();
        assert!(t.max_deviation() < 1e-10, "{}", t.max_deviation());
    }

    #[test]
    fn wavefront_of_coherent_state() {
        let psi = TestFamily::new(
            FlatSubmanifold::horizontal_line(),
            TestKind::CoherentState { x0: 0.5, p0: 0.5 },
        )
        .unwrap();
        let st = psi.at(0.01).unwrap();
        let wf = detect_wavefront(&st, WavefrontGrid::default()).unwrap();
        assert!(wf.covers(&psi.declared_wavefront()));
        // at h = 0.01 a ξ' cell is narrower than the frequency spacing 2πh, so x is unresolved;
        // at h = 0.001 the detected cells form one connected cluster (x periodic) peaked at (1/2, 1/2)
        let wf = detect_wavefront(&psi.at(0.001).unwrap(), WavefrontGrid::default()).unwrap();
        assert!(wf.covers(&psi.declared_wavefront()));
        let peak = wf.cells.iter().max_by(|a, b| a.mass.total_cmp(&b.mass)).unwrap();
        assert!((peak.x - 0.5).abs() <= 1.0 / 64.0 && (peak.xi - 0.5).abs() <= 3.0 / 64.0, "{peak:?}");
        let nx = wf.grid.x_cells as i64;
        let adjacent = |a: &WavefrontCell, b: &WavefrontCell| {
            let dx = (a.ix as i64 - b.ix as i64).rem_euclid(nx);
            dx.min(nx - dx) <= 1 && (a.ixi as i64 - b.ixi as i64).abs() <= 1
        };
        let mut seen = vec![false; wf.cells.len()];
        let mut stack = vec![wf.cells.iter().position(|c| c == peak).unwrap()];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                continue;
            }
            stack.extend((0..wf.cells.len()).filter(|&j| !seen[j] && adjacent(&wf.cells[i], &wf.cells[j])));
        }
        assert!(seen.iter().all(|&s| s));
        assert!(wf.cells.iter().all(|c| (c.xi - 0.5).abs() < 0.6));
        assert!(!wf.has_cell_near(0.0, -1.0));
    }

    #[test]
    fn wavefront_of_curve_exponential_is_a_stripe() {
        let psi = TestFamily::new(
            FlatSubmanifold::horizontal_line(),
            TestKind::CurveExponential { alpha0: 0.6 },
        )
        .unwrap();
        let st = psi.at(0.005).unwrap();
        let wf = detect_wavefront(&st, WavefrontGrid::default()).unwrap();
        assert!(wf.covers(&psi.declared_wavefront()));
        assert!(wf.cells.iter().all(|c| (c.xi - 0.6).abs() < 0.1));
    }

    #[test]
    fn restricted_plane_wave_single_stripe() {
        let parent = StateFamily::fourier_sum(
            vec![(Complex64::new(1.0, 0.0), vec![3, 1])],
            Scaling::Multiples { h1: 1.0 / (10.0 * PI) },
        )
        .unwrap();
        let psi = TestFamily::new(
            FlatSubmanifold::horizontal_line(),
            TestKind::RestrictedEigenfunction { parent },
        )
        .unwrap();
        let st = psi.at(1.0 / (10.0 * PI * 4.0)).unwrap();
        let wf = detect_wavefront(&st, WavefrontGrid::default()).unwrap();
        assert!(wf.covers(&psi.declared_wavefront()));
        let rows: std::collections::BTreeSet<usize> = wf.cells.iter().map(|c| c.ixi).collect();
        assert!(rows.len() <= 2);
    }

    proptest! {
        #[test]
        fn pairing_is_linear_and_real_for_real_multipliers(
            a in -2.0f64..2.0, b in -2.0f64..2.0, cx in -1.0f64..1.0, cy in -1.0f64..1.0,
            c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, c3 in -1.0f64..1.0,
        ) {
            let u = FourierRep::from_coefficients(2, BTreeMap::from([
                (vec![3, 4], Complex64::new(c1, c2)),
                (vec![5, 0], Complex64::new(c3, 0.5)),
                (vec![0, -5], Complex64::new(0.2, c1)),
            ])).unwrap();
            let h = 1.0 / (TAU * 5.0);
            let s1 = Symbol::multiplier(gauss(vec![cx, cy]));
            let s2 = Symbol::multiplier(Multiplier::Monomial { powers: vec![1, 2] });
            let combo = Symbol::Separable { terms: vec![
                SymbolTerm { spatial: SpatialFactor::One, multiplier: Multiplier::Gaussian { center: vec![cx, cy], width: 0.3 } },
                SymbolTerm { spatial: SpatialFactor::One, multiplier: Multiplier::Monomial { powers: vec![1, 2] } },
            ]};
            let p1 = pairing(&s1, &u, h).unwrap();
            let p2 = pairing(&s2, &u, h).unwrap();
            let pc = pairing(&combo, &u, h).unwrap();
            prop_assert!((pc - (p1 + p2)).norm() < 1e-12);
            prop_assert!(p1.im.abs() < 1e-10 && p2.im.abs() < 1e-10);
            let scaled = pairing(&Symbol::multiplier(Multiplier::Constant { value: a }), &u, h).unwrap()
                + pairing(&Symbol::multiplier(Multiplier::Constant { value: b }), &u, h).unwrap();
            prop_assert!((scaled - (a + b) * u.norm_sq()).norm() < 1e-12);
        }

        #[test]
        fn pairing_bounded_by_sup(cx in -1.0f64..1.0, w in 0.05f64..1.0, n in 1i64..30) {
            let phi = StateFamily::plane_wave(vec![1, 2]).unwrap();
            let h = 1.0 / (TAU * 5f64.sqrt() * n as f64);
            let b = Multiplier::Gaussian { center: vec![cx, 0.0], width: w };
            let p = pairing_family(&Symbol::multiplier(b), &phi, h).unwrap();
            prop_assert!(p.norm() <= 1.0 + 1e-12);
        }
    }
}
