//! h-indexed families: eigenfunctions and quasimodes `φ_h` on the torus and
//! normalized test functions `ψ_h` on a one-dimensional subtorus `H`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BaseElement, FlatSubmanifold, PhasePoint};
use crate::measures::{Component, Density, MeasureRep, Space};
use crate::quantization::FourierRep;
use crate::trig::TrigSeries;

const LATTICE_TOL: f64 = 1e-9;

/// Set of semiclassical parameters at which a family is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Admissible {
    /// Every h > 0.
    Any,
    /// `h = h1 / n`, n = 1, 2, ...
    Lattice { h1: f64 },
    /// An explicit strictly decreasing list.
    List { values: Vec<f64> },
}

impl Admissible {
    fn lattice_index(h1: f64, h: f64) -> Option<u64> {
        let n = (h1 / h).round();
        if n >= 1.0 && ((h1 / n) - h).abs() <= LATTICE_TOL * h {
            Some(n as u64)
        } else {
            None
        }
    }

    pub fn contains(&self, h: f64) -> bool {
        if !(h > 0.0) || !h.is_finite() {
            return false;
        }
        match self {
            Admissible::Any => true,
            Admissible::Lattice { h1 } => Self::lattice_index(*h1, h).is_some(),
            Admissible::List { values } => values.iter().any(|v| (v - h).abs() <= LATTICE_TOL * h),
        }
    }

    /// Up to two admissible values bracketing `h`.
    pub fn nearest(&self, h: f64) -> Vec<f64> {
        match self {
            Admissible::Any => vec![h],
            Admissible::Lattice { h1 } => {
                let r = h1 / h;
                let mut out = Vec::new();
                let lo = r.floor().max(1.0);
                out.push(h1 / lo);
                let hi = r.ceil().max(1.0);
                if hi != lo {
                    out.push(h1 / hi);
                }
                out
            }
            Admissible::List { values } => {
                let mut v = values.clone();
                v.sort_by(|a, b| (a - h).abs().total_cmp(&(b - h).abs()));
                v.truncate(2);
                v
            }
        }
    }

    /// Admissible value closest to `h` in log scale.
    pub fn closest(&self, h: f64) -> f64 {
        self.nearest(h)
            .into_iter()
            .min_by(|a, b| (a / h).ln().abs().total_cmp(&(b / h).ln().abs()))
            .unwrap_or(h)
    }

    pub fn check(&self, h: f64) -> Result<()> {
        if self.contains(h) {
            Ok(())
        } else {
            Err(Error::InadmissibleH {
                h,
                nearest: self.nearest(h),
            })
        }
    }

    /// Snap an admissible `h` onto the exact stored value.
    fn canonical(&self, h: f64) -> f64 {
        match self {
            Admissible::Lattice { h1 } => Self::lattice_index(*h1, h).map_or(h, |n| h1 / n as f64),
            Admissible::List { values } => values
                .iter()
                .copied()
                .find(|v| (v - h).abs() <= LATTICE_TOL * h)
                .unwrap_or(h),
            Admissible::Any => h,
        }
    }

    /// Intersection of two admissible sets.
    pub fn intersect(&self, other: &Admissible) -> Result<Admissible> {
        use Admissible::*;
        Ok(match (self, other) {
            (Any, x) | (x, Any) => x.clone(),
            (Lattice { h1: a }, Lattice { h1: b }) => {
                let (p, _) = rational_ratio(a / b).ok_or_else(|| {
                    Error::Incompatible(format!(
                        "lattices h1 = {a} and h1 = {b} have an irrational ratio and share no h"
                    ))
                })?;
                Lattice { h1: a / p as f64 }
            }
            (List { values }, x) | (x, List { values }) => {
                let v: Vec<f64> = values.iter().copied().filter(|&h| x.contains(h)).collect();
                if v.is_empty() {
                    return Err(Error::Incompatible("no common admissible h".into()));
                }
                List { values: v }
            }
        })
    }

    /// The `count` largest admissible values.
    pub fn largest(&self, count: usize) -> Result<Vec<f64>> {
        match self {
            Admissible::Any => Err(Error::Incompatible(
                "both families admit every h; supply explicit h values".into(),
            )),
            Admissible::Lattice { h1 } => Ok((1..=count).map(|n| h1 / n as f64).collect()),
            Admissible::List { values } => {
                if values.len() < count {
                    return Err(Error::input(format!(
                        "requested {count} h values but only {} are admissible",
                        values.len()
                    )));
                }
                Ok(values[..count].to_vec())
            }
        }
    }
}

/// Continued-fraction detection of `x = p/q` with `q ≤ 10⁴`.
fn rational_ratio(x: f64) -> Option<(u64, u64)> {
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut y = x;
    for _ in 0..40 {
        let a = y.floor();
        let ai = a as u64;
        let h2 = ai.checked_mul(h1)?.checked_add(h0)?;
        let k2 = ai.checked_mul(k1)?.checked_add(k0)?;
        if k2 > 10_000 {
            return None;
        }
        if ((h2 as f64 / k2 as f64) - x).abs() <= 1e-12 * x.abs().max(1.0) {
            return Some((h2, k2));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = y - a;
        if frac.abs() < 1e-15 {
            return None;
        }
        y = 1.0 / frac;
    }
    None
}

/// How the frequencies of a Fourier-sum family depend on h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scaling {
    /// Defined at `h = h1/n` with frequencies multiplied by n.
    Multiples { h1: f64 },
    /// Defined at the listed h with frequencies unchanged.
    Fixed { h_values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateKind {
    /// `e^{2πi n m0·x}` at `h = 1/(2π n |m0|)`: exact eigenfunctions.
    PlaneWave { m0: Vec<i64> },
    /// `Σ c_j e^{2πi m_j(h)·x}`, coefficients normalized to unit L² norm.
    FourierSum {
        terms: Vec<(Complex64, Vec<i64>)>,
        scaling: Scaling,
    },
}

/// A family `{φ_h}` on the flat torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFamily {
    dim: usize,
    kind: StateKind,
}

impl StateFamily {
    pub fn plane_wave(m0: Vec<i64>) -> Result<Self> {
        check_dim(m0.len())?;
        if m0.iter().all(|&c| c == 0) {
            return Err(Error::input("plane-wave frequency must be nonzero"));
        }
        Ok(Self {
            dim: m0.len(),
            kind: StateKind::PlaneWave { m0 },
        })
    }

    pub fn fourier_sum(terms: Vec<(Complex64, Vec<i64>)>, scaling: Scaling) -> Result<Self> {
        let dim = terms
            .first()
            .map(|t| t.1.len())
            .ok_or_else(|| Error::input("Fourier sum needs at least one term"))?;
        check_dim(dim)?;
        if terms.iter().any(|t| t.1.len() != dim) {
            return Err(Error::input("Fourier-sum frequencies have mixed dimensions"));
        }
        let mut merged: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (c, m) in terms {
            *merged.entry(m).or_default() += c;
        }
        let norm = merged.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Normalization("Fourier sum is identically zero".into()));
        }
        match &scaling {
            Scaling::Multiples { h1 } if !(*h1 > 0.0) => {
                return Err(Error::input("h1 must be positive"))
            }
            Scaling::Fixed { h_values } => {
                if h_values.is_empty() || h_values.iter().any(|h| !(*h > 0.0)) {
                    return Err(Error::input("fixed h values must be positive"));
                }
                if h_values.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::input("fixed h values must be strictly decreasing"));
                }
            }
            _ => {}
        }
        let terms = merged.into_iter().map(|(m, c)| (c / norm, m)).collect();
        Ok(Self {
            dim,
            kind: StateKind::FourierSum { terms, scaling },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &StateKind {
        &self.kind
    }

    pub fn admissible(&self) -> Admissible {
        match &self.kind {
            StateKind::PlaneWave { m0 } => Admissible::Lattice {
                h1: 1.0 / (TAU * int_norm(m0)),
            },
            StateKind::FourierSum { scaling, .. } => match scaling {
                Scaling::Multiples { h1 } => Admissible::Lattice { h1: *h1 },
                Scaling::Fixed { h_values } => Admissible::List {
                    values: h_values.clone(),
                },
            },
        }
    }

    fn multiplier(&self, h: f64) -> Result<i64> {
        let adm = self.admissible();
        adm.check(h)?;
        Ok(match adm {
            Admissible::Lattice { h1 } => (h1 / h).round() as i64,
            _ => 1,
        })
    }

    /// Exact Fourier coefficients of `φ_h`.
    pub fn fourier_rep(&self, h: f64) -> Result<FourierRep> {
        let n = self.multiplier(h)?;
        let mut map = BTreeMap::new();
        match &self.kind {
            StateKind::PlaneWave { m0 } => {
                map.insert(m0.iter().map(|c| c * n).collect(), Complex64::new(1.0, 0.0));
            }
            StateKind::FourierSum { terms, .. } => {
                for (c, m) in terms {
                    map.insert(m.iter().map(|v| v * n).collect::<Vec<_>>(), *c);
                }
            }
        }
        FourierRep::from_coefficients(self.dim, map)
    }

    pub fn evaluate(&self, h: f64, x: &[f64]) -> Result<Complex64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.fourier_rep(h)?.eval(x))
    }

    /// `‖(-h²Δ - 1)φ_h‖` from the Fourier coefficients.
    pub fn quasimode_defect(&self, h: f64) -> Result<f64> {
        let rep = self.fourier_rep(h)?;
        Ok(rep
            .iter()
            .map(|(m, c)| {
                let lam = (TAU * h).powi(2) * m.iter().map(|&v| (v * v) as f64).sum::<f64>();
                c.norm_sqr() * (lam - 1.0).powi(2)
            })
            .sum::<f64>()
            .sqrt())
    }

    /// The semiclassical defect measure `μ` on `T*M` as h → 0 along the lattice.
    pub fn declared_defect_measure(&self) -> Result<MeasureRep> {
        let (h1, terms): (f64, Vec<(Complex64, Vec<i64>)>) = match &self.kind {
            StateKind::PlaneWave { m0 } => (
                1.0 / (TAU * int_norm(m0)),
                vec![(Complex64::new(1.0, 0.0), m0.clone())],
            ),
            StateKind::FourierSum {
                terms,
                scaling: Scaling::Multiples { h1 },
            } => (*h1, terms.clone()),
            StateKind::FourierSum { .. } => {
                return Err(Error::Unsupported(
                    "a family on a fixed list of h has no defect measure".into(),
                ))
            }
        };
        let comps = terms
            .into_iter()
            .map(|(c, m)| Component::FixedCovector {
                xi: m.iter().map(|&v| TAU * h1 * v as f64).collect(),
                density: c.norm_sqr(),
                region: None,
            })
            .collect();
        MeasureRep::new(Space::CotangentM, self.dim, Vec::new(), comps)
    }
}

fn check_dim(d: usize) -> Result<()> {
    if (2..=3).contains(&d) {
        Ok(())
    } else {
        Err(Error::input(format!("state dimension must be 2 or 3, got {d}")))
    }
}

fn int_norm(m: &[i64]) -> f64 {
    m.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestKind {
    /// Periodized `e^{(i/h)p0(x-x0)} e^{-(x-x0)²/(2h)}`, normalized.
    CoherentState { x0: f64, p0: f64 },
    /// `e^{iα(h)t}` on a unit-length curve with `α(h) = 2π round(α0/(2πh))`.
    CurveExponential { alpha0: f64 },
    /// An h-independent weight `w/‖w‖`.
    ConstantWeight { weight: TrigSeries },
    /// `Ψ_h|_H / ‖Ψ_h|_H‖` for a Fourier-sum family on the torus.
    RestrictedEigenfunction { parent: StateFamily },
}

/// A family `{ψ_h}` on a one-dimensional flat subtorus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFamily {
    sub: FlatSubmanifold,
    kind: TestKind,
}

impl TestFamily {
    pub fn new(sub: FlatSubmanifold, kind: TestKind) -> Result<Self> {
        if sub.dim() != 1 {
            return Err(Error::Unsupported(format!(
                "test families live on one-dimensional H; got dim H = {}",
                sub.dim()
            )));
        }
        match &kind {
            TestKind::CoherentState { x0, p0 } => {
                if !x0.is_finite() || !(p0.abs() < 1.0) {
                    return Err(Error::input("coherent state needs finite x0 and |p0| < 1"));
                }
            }
            TestKind::CurveExponential { alpha0 } => {
                if !(alpha0.abs() < 1.0) {
                    return Err(Error::input("curve exponential needs |α0| < 1"));
                }
            }
            TestKind::ConstantWeight { weight } => {
                if weight.is_zero() {
                    return Err(Error::Normalization("weight is identically zero".into()));
                }
            }
            TestKind::RestrictedEigenfunction { parent } => {
                if parent.dim() != sub.ambient_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: sub.ambient_dim(),
                        got: parent.dim(),
                    });
                }
                if !matches!(
                    parent.kind(),
                    StateKind::FourierSum {
                        scaling: Scaling::Multiples { .. },
                        ..
                    }
                ) {
                    return Err(Error::input(
                        "restricted eigenfunction parent must be a Fourier sum on an h-lattice",
                    ));
                }
            }
        }
        let fam = Self { sub, kind };
        let a = fam.declared_wavefront();
        if a.iter().any(|el| el.max_tangential_norm() >= 1.0) {
            return Err(Error::input("declared wavefront set leaves the open coball bundle"));
        }
        Ok(fam)
    }

    pub fn submanifold(&self) -> &FlatSubmanifold {
        &self.sub
    }

    pub fn kind(&self) -> &TestKind {
        &self.kind
    }

    pub fn admissible(&self) -> Admissible {
        match &self.kind {
            TestKind::RestrictedEigenfunction { parent } => parent.admissible(),
            _ => Admissible::Any,
        }
    }

    fn restricted_parent(&self, parent: &StateFamily, h: f64) -> Result<TrigSeries> {
        let rep = parent.fourier_rep(h)?;
        Ok(rep.restrict(&self.sub))
    }

    /// The unnormalized function on H before `l2_normalize_h`.
    pub fn raw_value(&self, h: f64, x: f64) -> Result<Complex64> {
        self.admissible().check(h)?;
        Ok(match &self.kind {
            TestKind::CoherentState { x0, p0 } => periodized_coherent(*x0, *p0, h, x),
            TestKind::CurveExponential { alpha0 } => {
                Complex64::from_polar(1.0, TAU * curve_frequency(*alpha0, h) as f64 * x)
            }
            TestKind::ConstantWeight { weight } => weight.eval(x),
            TestKind::RestrictedEigenfunction { parent } => self.restricted_parent(parent, h)?.eval(x),
        })
    }

    /// Fourier coefficients of the unnormalized function.
    fn raw_coefficients(&self, h: f64) -> Result<TrigSeries> {
        Ok(match &self.kind {
            TestKind::CoherentState { x0, p0 } => {
                let half = (80.0 * h).sqrt() / (TAU * h);
                let center = p0 / (TAU * h);
                let lo = (center - half).floor() as i64;
                let hi = (center + half).ceil() as i64;
                TrigSeries::new((lo..=hi).map(|a| {
                    let d = p0 - TAU * h * a as f64;
                    let amp = (TAU * h).sqrt() * (-d * d / (2.0 * h)).exp();
                    (a, Complex64::from_polar(amp, -TAU * a as f64 * x0))
                }))
            }
            TestKind::CurveExponential { alpha0 } => {
                TrigSeries::new([(curve_frequency(*alpha0, h), Complex64::new(1.0, 0.0))])
            }
            TestKind::ConstantWeight { weight } => weight.clone(),
            TestKind::RestrictedEigenfunction { parent } => self.restricted_parent(parent, h)?,
        })
    }

    /// Normalized `ψ_h` at one h, with its normalizer and Fourier coefficients.
    pub fn at(&self, h: f64) -> Result<TestState> {
        self.admissible().check(h)?;
        let h = self.admissible().canonical(h);
        let table = l2_normalize_h(self, h)?;
        let coeffs = self
            .raw_coefficients(h)?
            .scaled(Complex64::new(table.normalizer, 0.0));
        Ok(TestState {
            family: self.clone(),
            h,
            normalizer: table.normalizer,
            coefficients: coeffs,
        })
    }

    pub fn evaluate(&self, h: f64, x: f64) -> Result<Complex64> {
        Ok(self.at(h)?.value(x))
    }

    /// Declared `A = WF_h(ψ_h)` as a base description for Σ^A.
    pub fn declared_wavefront(&self) -> Vec<BaseElement> {
        match &self.kind {
            TestKind::CoherentState { x0, p0 } => vec![BaseElement::Point {
                x: vec![crate::geometry::wrap01(*x0)],
                xi: vec![*p0],
            }],
            TestKind::CurveExponential { alpha0 } => vec![BaseElement::Stripe { xi: vec![*alpha0] }],
            TestKind::ConstantWeight { .. } => vec![BaseElement::Stripe { xi: vec![0.0] }],
            TestKind::RestrictedEigenfunction { parent } => restricted_frequencies(&self.sub, parent)
                .into_iter()
                .map(|(xi, _)| BaseElement::Stripe { xi: vec![xi] })
                .collect(),
        }
    }

    /// Declared defect measure `ν` on `T*H`.
    pub fn declared_defect_measure(&self) -> Result<MeasureRep> {
        let (atoms, comps) = match &self.kind {
            TestKind::CoherentState { x0, p0 } => (
                vec![crate::measures::Atom {
                    point: PhasePoint::new(vec![*x0], vec![*p0]),
                    mass: 1.0,
                }],
                Vec::new(),
            ),
            TestKind::CurveExponential { alpha0 } => (
                Vec::new(),
                vec![Component::Stripe {
                    xi: vec![*alpha0],
                    density: Density::Constant(1.0),
                }],
            ),
            TestKind::ConstantWeight { weight } => (
                Vec::new(),
                vec![Component::Stripe {
                    xi: vec![0.0],
                    density: Density::Trig(
                        weight
                            .abs_squared()
                            .scaled(Complex64::new(1.0 / weight.norm_sq(), 0.0)),
                    ),
                }],
            ),
            TestKind::RestrictedEigenfunction { parent } => (
                Vec::new(),
                restricted_frequencies(&self.sub, parent)
                    .into_iter()
                    .map(|(xi, w)| Component::Stripe {
                        xi: vec![xi],
                        density: Density::Constant(w),
                    })
                    .collect(),
            ),
        };
        MeasureRep::new(Space::CotangentH, 1, atoms, comps)
    }
}

/// Limiting tangential frequencies `ξ' = 2πh1 m'` of a restricted lattice family with their weights.
fn restricted_frequencies(sub: &FlatSubmanifold, parent: &StateFamily) -> Vec<(f64, f64)> {
    let h1 = match parent.admissible() {
        Admissible::Lattice { h1 } => h1,
        _ => return Vec::new(),
    };
    let Ok(rep) = parent.fourier_rep(h1) else {
        return Vec::new();
    };
    let series = rep.restrict(sub);
    let total = series.norm_sq();
    series
        .terms()
        .filter(|(_, c)| c.norm_sqr() > 1e-30)
        .map(|(k, c)| (TAU * h1 * k as f64, c.norm_sqr() / total))
        .collect()
}

/// Integer frequency of the curve exponential at h.
pub fn curve_frequency(alpha0: f64, h: f64) -> i64 {
    (alpha0 / (TAU * h)).round() as i64
}

fn periodized_coherent(x0: f64, p0: f64, h: f64, x: f64) -> Complex64 {
    let reach = (80.0 * h).sqrt() + 1.0;
    let base = x - x0;
    let lo = (-reach - base).floor() as i64;
    let hi = (reach - base).ceil() as i64;
    (lo..=hi)
        .map(|j| {
            let u = base + j as f64;
            Complex64::from_polar((-u * u / (2.0 * h)).exp(), p0 * u / h)
        })
        .sum()
}

/// Normalized `ψ_h` at a fixed admissible h.
#[derive(Debug, Clone, PartialEq)]
pub struct TestState {
    family: TestFamily,
    h: f64,
    normalizer: f64,
    coefficients: TrigSeries,
}

impl TestState {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn family(&self) -> &TestFamily {
        &self.family
    }

    /// Fourier coefficients `ψ̂_h(a) = ∫_H ψ_h e^{-2πiax}`.
    pub fn coefficients(&self) -> &TrigSeries {
        &self.coefficients
    }

    pub fn value(&self, x: f64) -> Complex64 {
        self.normalizer
            * self
                .family
                .raw_value(self.h, x)
                .expect("h was checked when the state was built")
    }

    pub fn fourier_rep(&self) -> Result<FourierRep> {
        FourierRep::from_coefficients(1, self.coefficients.terms().map(|(k, c)| (vec![k], c)).collect())
    }
}

/// Normalizer and nodal values of `ψ_h` on a periodic trapezoid grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTable {
    pub nodes: Vec<f64>,
    pub values: Vec<Complex64>,
    pub normalizer: f64,
}

/// Computes `C(h)` with `‖C(h)·raw‖_{L²(H)} = 1` using `max(256, ⌈20/h⌉)` nodes.
pub fn l2_normalize_h(family: &TestFamily, h: f64) -> Result<NormalizedTable> {
    family.admissible().check(h)?;
    let n = 256usize.max((20.0 / h).ceil() as usize);
    let nodes: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
    let raw = nodes
        .iter()
        .map(|&x| family.raw_value(h, x))
        .collect::<Result<Vec<_>>>()?;
    let norm_sq = raw.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
    if !(norm_sq > 1e-300) {
        return Err(Error::Normalization(format!(
            "test function vanishes on H at h = {h}"
        )));
    }
    let c = norm_sq.sqrt().recip();
    Ok(NormalizedTable {
        nodes,
        values: raw.into_iter().map(|v| v * c).collect(),
        normalizer: c,
    })
}

/// A strictly decreasing list of positive h values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSequence(Vec<f64>);

impl HSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("h sequence is empty"));
        }
        if values.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::input("h values must be positive and finite"));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::input("h values must be strictly decreasing"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.0.last().expect("sequence is nonempty")
    }
}

/// The `count` largest h admissible for both families.
pub fn admissible_h_sequence(state: &StateFamily, test: &TestFamily, count: usize) -> Result<HSequence> {
    if count < 2 {
        return Err(Error::input("count must be at least 2"));
    }
    let both = state.admissible().intersect(&test.admissible())?;
    HSequence::new(both.largest(count)?)
}

/// Admissible h values closest (in log scale) to each nominal value.
pub fn admissible_near(state: &StateFamily, test: &TestFamily, nominal: &[f64]) -> Result<HSequence> {
    let both = state.admissible().intersect(&test.admissible())?;
    let mut v: Vec<f64> = nominal.iter().map(|&h| both.closest(h)).collect();
    v.dedup_by(|a, b| (*a - *b).abs() <= LATTICE_TOL * *b);
    HSequence::new(v)
}

/// `(πh)^{-1/4}`, the whole-line normalizer of the coherent state.
pub fn coherent_line_normalizer(h: f64) -> f64 {
    (PI * h).powf(-0.25)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h_line() -> FlatSubmanifold {
        FlatSubmanifold::horizontal_line()
    }

    #[test]
    fn plane_wave_on_shell_and_normalized() {
        let f = StateFamily::plane_wave(vec![1, 1]).unwrap();
        for n in 1..=20 {
            let h = 2f64.sqrt() / (4.0 * PI * n as f64);
            let rep = f.fourier_rep(h).unwrap();
            assert!((rep.norm_sq() - 1.0).abs() < 1e-12);
            let (m, _) = rep.iter().next().unwrap();
            let xi = TAU * h * int_norm(m);
            assert!((xi - 1.0).abs() < 1e-12);
            assert!(f.quasimode_defect(h).unwrap() < 1e-13);
        }
        let h = 2f64.sqrt() / (4.0 * PI * 3.0);
        assert!((f.evaluate(h, &[0.0, 0.0]).unwrap() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn inadmissible_h_lists_neighbours() {
        let f = StateFamily::plane_wave(vec![1, 1]).unwrap();
        match f.fourier_rep(0.05) {
            Err(Error::InadmissibleH { nearest, .. }) => {
                assert_eq!(nearest.len(), 2);
                let h1 = 2f64.sqrt() / (4.0 * PI);
                assert!((nearest[0] - h1 / 2.0).abs() < 1e-15);
                assert!((nearest[1] - h1 / 3.0).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shared_shell_mix_is_exact() {
        let s = StateFamily::fourier_sum(
            vec![(Complex64::new(1.0, 0.0), vec![3, 4]), (Complex64::new(1.0, 0.0), vec![5, 0])],
            Scaling::Multiples { h1: 1.0 / (10.0 * PI) },
        )
        .unwrap();
        assert!(s.quasimode_defect(1.0 / (10.0 * PI)).unwrap() < 1e-15);
    }

    #[test]
    fn neighbouring_shell_defect_matches_finite_differences() {
        let n = 5i64;
        let h = 1.0 / (TAU * n as f64);
        let s = StateFamily::fourier_sum(
            vec![(Complex64::new(1.0, 0.0), vec![n, 0]), (Complex64::new(1.0, 0.0), vec![n, 1])],
            Scaling::Fixed { h_values: vec![h] },
        )
        .unwrap();
        let fourier = s.quasimode_defect(h).unwrap();
        let closed = (4.0 * PI * PI * h * h * ((n * n + 1) as f64) - 1.0).abs() / 2f64.sqrt();
        assert!((fourier - closed).abs() < 1e-14);

        // Spectral oracle: 4th-order finite-difference Laplacian on a periodic grid.
        let g = 256usize;
        let dx = 1.0 / g as f64;
        let val = |i: i64, j: i64| {
            let x = i.rem_euclid(g as i64) as f64 * dx;
            let y = j.rem_euclid(g as i64) as f64 * dx;
            s.evaluate(h, &[x, y]).unwrap()
        };
        let mut acc = 0.0;
        for i in 0..g as i64 {
            for j in 0..g as i64 {
                let d2 = |a: Complex64, b: Complex64, c: Complex64, d: Complex64, e: Complex64| {
                    (-a + 16.0 * b - 30.0 * c + 16.0 * d - e) / (12.0 * dx * dx)
                };
                let c = val(i, j);
                let lap = d2(val(i - 2, j), val(i - 1, j), c, val(i + 1, j), val(i + 2, j))
                    + d2(val(i, j - 2), val(i, j - 1), c, val(i, j + 1), val(i, j + 2));
                acc += (-h * h * lap - c).norm_sqr();
            }
        }
        let fd = (acc / (g * g) as f64).sqrt();
        assert!((fd - fourier).abs() < 1e-4 * fourier.max(1e-3), "fd {fd} fourier {fourier}");
    }

    #[test]
    fn coherent_state_normalizer_matches_line_gaussian() {
        let psi = TestFamily::new(h_line(), TestKind::CoherentState { x0: 0.5, p0: 0.5 }).unwrap();
        let h = 0.01;
        let st = psi.at(h).unwrap();
        // Oracle: 10⁶-node quadrature of |e^{-(x-1/2)²/(2h)}|² over [0, 1).
        let n = 1_000_000;
        let mass: f64 = (0..n)
            .map(|j| {
                let u = (j as f64 + 0.5) / n as f64 - 0.5;
                (-u * u / h).exp()
            })
            .sum::<f64>()
            / n as f64;
        assert!((st.normalizer() - mass.sqrt().recip()).abs() < 1e-10);
        // the whole-line value differs by the periodization tails, of relative size ~e^{-1/(4h)}
        assert!((st.normalizer() - coherent_line_normalizer(h)).abs() < 1e-9 * st.normalizer());
        assert!((st.value(0.5) - st.normalizer()).norm() < 1e-12);
    }

    #[test]
    fn coherent_state_parseval_series() {
        let psi = TestFamily::new(h_line(), TestKind::CoherentState { x0: 0.5, p0: 0.5 }).unwrap();
        for &h in &[0.05, 0.02, 0.005, 0.001] {
            let st = psi.at(h).unwrap();
            let series: f64 = (-2000..2000)
                .map(|a| (-(TAU * h * a as f64 - 0.5).powi(2) / h).exp())
                .sum::<f64>()
                * TAU
                * h;
            assert!((st.normalizer().powi(-2) - series).abs() < 1e-10 * series);
            assert!((st.coefficients().norm_sq() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn coherent_coefficients_match_pointwise_values() {
        let psi = TestFamily::new(h_line(), TestKind::CoherentState { x0: 0.3, p0: -0.4 }).unwrap();
        let st = psi.at(0.03).unwrap();
        for &x in &[0.0, 0.3, 0.71, 0.95] {
            assert!((st.coefficients().eval(x) - st.value(x)).norm() < 1e-10);
        }
    }

    #[test]
    fn other_test_families() {
        let curve = TestFamily::new(h_line(), TestKind::CurveExponential { alpha0: 0.6 }).unwrap();
        let st = curve.at(0.01).unwrap();
        assert!((st.value(0.0) - 1.0).norm() < 1e-12);
        assert!((st.normalizer() - 1.0).abs() < 1e-12);

        let w = TrigSeries::constant(1.0);
        let fam = TestFamily::new(h_line(), TestKind::ConstantWeight { weight: w }).unwrap();
        assert!((fam.at(0.1).unwrap().normalizer() - 1.0).abs() < 1e-12);

        let w = TrigSeries::from_cos_sin(1.0, &[(1, 0.5)], &[]);
        let fam = TestFamily::new(h_line(), TestKind::ConstantWeight { weight: w }).unwrap();
        assert!((fam.at(0.1).unwrap().normalizer() - (8.0f64 / 9.0).sqrt()).abs() < 1e-12);

        let zero = TestFamily::new(h_line(), TestKind::ConstantWeight { weight: TrigSeries::new([]) });
        assert!(matches!(zero, Err(Error::Normalization(_))));
    }

    #[test]
    fn restricted_eigenfunction_declarations() {
        let parent = StateFamily::fourier_sum(
            vec![(Complex64::new(1.0, 0.0), vec![3, 1])],
            Scaling::Multiples { h1: 1.0 / (10.0 * PI) },
        )
        .unwrap();
        let fam = TestFamily::new(h_line(), TestKind::RestrictedEigenfunction { parent }).unwrap();
        assert_eq!(fam.declared_wavefront().len(), 1);
        match &fam.declared_wavefront()[0] {
            BaseElement::Stripe { xi } => assert!((xi[0] - 0.6).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let h = 1.0 / (10.0 * PI * 4.0);
        let st = fam.at(h).unwrap();
        assert!((st.value(0.1) - Complex64::from_polar(1.0, TAU * 12.0 * 0.1)).norm() < 1e-12);
        assert!(fam.at(0.013).is_err());
    }

    #[test]
    fn admissible_sequences() {
        let phi = StateFamily::plane_wave(vec![1, 1]).unwrap();
        let psi = TestFamily::new(h_line(), TestKind::CurveExponential { alpha0: 2f64.sqrt() / 2.0 }).unwrap();
        let seq = admissible_h_sequence(&phi, &psi, 3).unwrap();
        let b = 2f64.sqrt() / (4.0 * PI);
        for (v, e) in seq.values().iter().zip([b, b / 2.0, b / 3.0]) {
            assert!((v - e).abs() < 1e-15);
        }

        let fixed = StateFamily::fourier_sum(
            vec![(Complex64::new(1.0, 0.0), vec![1, 0])],
            Scaling::Fixed { h_values: vec![0.1, 0.05] },
        )
        .unwrap();
        assert!(admissible_h_sequence(&fixed, &psi, 3).is_err());
        assert!(admissible_h_sequence(&fixed, &psi, 2).is_ok());

        let a = StateFamily::plane_wave(vec![3, 4]).unwrap();
        let b = StateFamily::plane_wave(vec![1, 1]).unwrap();
        assert!(a.admissible().intersect(&b.admissible()).is_err());
        let c = StateFamily::plane_wave(vec![6, 8]).unwrap();
        let both = a.admissible().intersect(&c.admissible()).unwrap();
        let v = both.largest(2).unwrap();
        assert!((v[0] - 1.0 / (TAU * 10.0)).abs() < 1e-15);
    }

    #[test]
    fn admissible_near_example_sweep() {
        let phi = StateFamily::plane_wave(vec![1, 1]).unwrap();
        let psi = TestFamily::new(h_line(), TestKind::CoherentState { x0: 0.5, p0: 0.5 }).unwrap();
        let nominal: Vec<f64> = (0..7).map(|j| 0.05 * 0.5f64.powi(j)).collect();
        let seq = admissible_near(&phi, &psi, &nominal).unwrap();
        let ns: Vec<i64> = seq
            .values()
            .iter()
            .map(|h| (2f64.sqrt() / (4.0 * PI * h)).round() as i64)
            .collect();
        assert_eq!(ns, vec![2, 5, 9, 18, 36, 72, 144]);
    }

    proptest! {
        #[test]
        fn fourier_sums_are_normalized(
            coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -6i64..6, -6i64..6), 1..6)
        ) {
            let terms: Vec<_> = coeffs.iter().map(|&(a, b, m, n)| (Complex64::new(a, b), vec![m, n])).collect();
            if let Ok(s) = StateFamily::fourier_sum(terms, Scaling::Fixed { h_values: vec![0.1] }) {
                let rep = s.fourier_rep(0.1).unwrap();
                prop_assert!((rep.norm_sq() - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn coherent_states_are_normalized(x0 in 0.0f64..1.0, p0 in -0.9f64..0.9, h in 0.002f64..0.05) {
            let psi = TestFamily::new(FlatSubmanifold::horizontal_line(), TestKind::CoherentState { x0, p0 }).unwrap();
            let st = psi.at(h).unwrap();
            prop_assert!((st.coefficients().norm_sq() - 1.0).abs() < 1e-8);
        }
    }
}
