//! Generalized Fourier coefficients `⟨φ_h, ψ_h⟩_{L²(H)}`, the bound functionals on
//! Σ^A and decay classification across an h sweep.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::FlowMap;
use crate::error::{Error, Result};
use crate::geometry::{build_sigma_a, FlatSubmanifold, SigmaASet};
use crate::measures::{
    flow_average, lift_to_sigma_a, radon_nikodym, reference_measure, FlowAverage, MeasureRep, MeasureTable,
    RadonNikodym,
};
use crate::numerics::linear_fit;
use crate::states::{StateFamily, TestFamily};

/// Moduli below this count as exact zeros.
pub const ZERO_TOL: f64 = 1e-12;

fn check_pair(phi: &StateFamily, psi: &TestFamily, h: f64) -> Result<()> {
    let sub = psi.submanifold();
    if phi.dim() != sub.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: sub.ambient_dim(),
            got: phi.dim(),
        });
    }
    phi.admissible().check(h)?;
    psi.admissible().check(h)
}

/// `∫_H φ_h ψ̄_h dσ_H` from the Fourier coefficients of both factors.
pub fn restricted_inner_product(phi: &StateFamily, psi: &TestFamily, h: f64) -> Result<Complex64> {
    check_pair(phi, psi, h)?;
    let restricted = phi.fourier_rep(h)?.restrict(psi.submanifold());
    let test = psi.at(h)?;
    Ok(restricted
        .terms()
        .map(|(a, c)| c * test.coefficients().coefficient(a).conj())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureValue {
    pub value: Complex64,
    pub nodes: usize,
}

/// Periodic trapezoid rule on H with node doubling until successive values agree to
/// `1e-8 · max(|Q|, ‖φ|_H‖)`.
pub fn restricted_inner_product_quadrature(phi: &StateFamily, psi: &TestFamily, h: f64) -> Result<QuadratureValue> {
    check_pair(phi, psi, h)?;
    let sub = psi.submanifold();
    let rep = phi.fourier_rep(h)?;
    let restricted_norm = rep.restrict(sub).norm_sq().sqrt();
    let test = psi.at(h)?;
    let rule = |n: usize| -> Complex64 {
        (0..n)
            .map(|j| {
                let x = j as f64 / n as f64;
                rep.eval(&sub.embed(&[x])) * test.value(x).conj()
            })
            .sum::<Complex64>()
            / n as f64
    };
    let mut n = 512usize.max((40.0 / h).ceil() as usize);
    let mut prev = rule(n);
    let mut last_diff = f64::NAN;
    for _ in 0..3 {
        n *= 2;
        let next = rule(n);
        last_diff = (next - prev).norm();
        if last_diff <= 1e-8 * next.norm().max(restricted_norm) {
            return Ok(QuadratureValue { value: next, nodes: n });
        }
        prev = next;
    }
    Err(Error::NonConvergence(format!(
        "trapezoid rule did not settle at h = {h}: last change {last_diff:e} with {n} nodes"
    )))
}

/// `h^{(k-1)/2} |⟨φ_h, ψ_h⟩|`.
pub fn scaled_coefficient(phi: &StateFamily, psi: &TestFamily, h: f64) -> Result<f64> {
    let k = psi.submanifold().codim();
    Ok(scale_factor(h, k) * restricted_inner_product(phi, psi, h)?.norm())
}

pub fn scale_factor(h: f64, k: usize) -> f64 {
    h.powf((k as f64 - 1.0) / 2.0)
}

/// `(1 - |ξ'|²)^{(k-2)/2}` at a point of Σ^A, written through the normal covector
/// (`|ξ̄|² = 1 - |ξ'|²` on the cosphere).
fn sigma_weight(sub: &FlatSubmanifold, xi: &[f64]) -> f64 {
    let t: f64 = sub.tangential_part(xi).iter().map(|v| v * v).sum();
    (1.0 - t).powf((sub.codim() as f64 - 2.0) / 2.0)
}

fn check_table(f: &MeasureTable, m: &MeasureRep, what: &str) -> Result<()> {
    if !f.matches(m) {
        return Err(Error::input(format!("{what} table does not match the measure's structure")));
    }
    if f.weighted(m).any(|(v, mass, _)| mass > 0.0 && !(v.is_finite() && v >= 0.0)) {
        return Err(Error::input(format!("{what} is missing or negative on a set of positive mass")));
    }
    Ok(())
}

/// `(∫_{Σ^A} (1-|ξ'|²)^{(k-2)/2} f dν^A)^{1/2}`, without the constant `C_{n,k}`.
pub fn theorem6_rhs(f: &MeasureTable, nu_a: &MeasureRep, sub: &FlatSubmanifold) -> Result<f64> {
    check_table(f, nu_a, "f")?;
    Ok(f
        .weighted(nu_a)
        .filter(|(_, mass, _)| *mass > 0.0)
        .map(|(v, mass, p)| sigma_weight(sub, &p.xi) * v * mass)
        .sum::<f64>()
        .sqrt())
}

/// `∫_{Σ^A} √((1-|ξ'|²)^{(k-2)/2} f) |u| dm`.
pub fn theorem_rem_rhs(f: &MeasureTable, u: &MeasureTable, m: &MeasureRep, sub: &FlatSubmanifold) -> Result<f64> {
    check_table(f, m, "f")?;
    if !u.matches(m) {
        return Err(Error::input("density table does not match the measure's structure"));
    }
    Ok(f
        .weighted(m)
        .zip(u.weighted(m))
        .filter(|((_, mass, _), _)| *mass > 0.0)
        .map(|((fv, mass, p), (uv, _, _))| (sigma_weight(sub, &p.xi) * fv).sqrt() * uv.abs() * mass)
        .sum())
}

/// Every measure-level object of one (φ, ψ) pair.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub sigma: SigmaASet,
    pub nu: MeasureRep,
    pub nu_a: MeasureRep,
    pub mu: MeasureRep,
    pub mu_a: FlowAverage,
    pub decomposition: RadonNikodym,
    /// The reference measure `m` with `ν^A = u m`.
    pub reference: MeasureRep,
    pub u: MeasureTable,
    pub rhs_theorem6: f64,
    pub rhs_rem: f64,
}

/// Declared measures, Σ^A, the lift, the flow average, the Radon–Nikodym split and both bound functionals.
pub fn measure_pipeline(phi: &StateFamily, psi: &TestFamily, fm: &FlowMap, tseq: &[f64]) -> Result<Pipeline> {
    let sub = psi.submanifold();
    let sigma = build_sigma_a(sub, psi.declared_wavefront())?;
    let nu = psi.declared_defect_measure()?;
    let nu_a = lift_to_sigma_a(&nu, &sigma)?;
    let mu = phi.declared_defect_measure()?;
    let mu_a = flow_average(&mu, &sigma, fm, tseq)?;
    let decomposition = radon_nikodym(&mu_a.measure, &nu_a)?;
    let reference = reference_measure(&sigma)?;
    let u = radon_nikodym(&nu_a, &reference)?.f;
    let f_on_m = decomposition.f.transfer(&nu_a, &reference);
    let rhs_theorem6 = theorem6_rhs(&decomposition.f, &nu_a, sub)?;
    let rhs_rem = theorem_rem_rhs(&f_on_m, &u, &reference, sub)?;
    Ok(Pipeline {
        sigma,
        nu,
        nu_a,
        mu,
        mu_a,
        decomposition,
        reference,
        u,
        rhs_theorem6,
        rhs_rem,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayClass {
    #[serde(rename = "identically-zero")]
    IdenticallyZero,
    #[serde(rename = "o(1)")]
    LittleO,
    #[serde(rename = "bounded-nonvanishing")]
    BoundedNonvanishing,
    #[serde(rename = "growing")]
    Growing,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl fmt::Display for DecayClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecayClass::IdenticallyZero => "identically-zero",
            DecayClass::LittleO => "o(1)",
            DecayClass::BoundedNonvanishing => "bounded-nonvanishing",
            DecayClass::Growing => "growing",
            DecayClass::Inconclusive => "inconclusive",
        })
    }
}

/// Thresholds used by the classifier; reported alongside each verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub zero: f64,
    pub bounded_slope: f64,
    pub bounded_band: f64,
    pub bounded_floor: f64,
    pub decay_slope: f64,
    pub decay_r2: f64,
    pub decay_drop: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self {
            zero: ZERO_TOL,
            bounded_slope: 0.05,
            bounded_band: 2.0,
            bounded_floor: 1e-6,
            decay_slope: -0.2,
            decay_r2: 0.9,
            decay_drop: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub h: f64,
    pub coefficient: Complex64,
    pub modulus: f64,
    pub scaled: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Slope of `log(scaled)` against `log(1/h)`; negative means decay as h → 0.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub class: DecayClass,
    pub thresholds: ClassThresholds,
    pub rhs_star: Option<f64>,
    pub sup_ratio: Option<f64>,
    pub ratio_slope: Option<f64>,
}

/// Classifies scaled moduli given in order of decreasing h.
pub fn classify_decay(h: &[f64], scaled: &[f64], th: &ClassThresholds) -> (DecayClass, f64, f64, f64) {
    let x: Vec<f64> = h.iter().map(|v| -v.ln()).collect();
    let y: Vec<f64> = scaled.iter().map(|v| v.max(1e-300).ln()).collect();
    let fit = linear_fit(&x, &y);
    if scaled.iter().all(|v| *v < th.zero) {
        return (DecayClass::IdenticallyZero, fit.slope, fit.intercept, fit.r2);
    }
    let max = scaled.iter().copied().fold(0.0, f64::max);
    let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let first = scaled[0];
    let last = scaled[scaled.len() - 1];
    let non_increasing = scaled.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let class = if fit.slope.abs() <= th.bounded_slope && max <= th.bounded_band * min && min > th.bounded_floor {
        DecayClass::BoundedNonvanishing
    } else if fit.slope < th.decay_slope && (fit.r2 > th.decay_r2 || (non_increasing && last < th.decay_drop * first)) {
        DecayClass::LittleO
    } else if fit.slope > -th.decay_slope && fit.r2 > th.decay_r2 {
        DecayClass::Growing
    } else {
        DecayClass::Inconclusive
    };
    (class, fit.slope, fit.intercept, fit.r2)
}

/// Scaled moduli over `hseq`, their log-log trend and class, and the ratio to `RHS*` when supplied.
pub fn verify_scaling(phi: &StateFamily, psi: &TestFamily, hseq: &[f64], rhs_star: Option<f64>) -> Result<ScalingReport> {
    if hseq.len() < 4 {
        return Err(Error::input("scaling verification needs at least 4 values of h"));
    }
    let k = psi.submanifold().codim();
    let rhs = rhs_star.filter(|r| *r > 0.0);
    let mut rows = Vec::with_capacity(hseq.len());
    for &h in hseq {
        let coefficient = restricted_inner_product(phi, psi, h)?;
        let modulus = coefficient.norm();
        let scaled = scale_factor(h, k) * modulus;
        rows.push(ScalingRow {
            h,
            coefficient,
            modulus,
            scaled,
            ratio: rhs.map(|r| scaled / r),
        });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let sc: Vec<f64> = rows.iter().map(|r| r.scaled).collect();
    let thresholds = ClassThresholds::default();
    let (class, slope, intercept, r2) = classify_decay(&hs, &sc, &thresholds);
    let (sup_ratio, ratio_slope) = match rhs {
        Some(r) => {
            let ratios: Vec<f64> = sc.iter().map(|s| s / r).collect();
            let x: Vec<f64> = hs.iter().map(|v| -v.ln()).collect();
            let y: Vec<f64> = ratios.iter().map(|v| v.max(1e-300).ln()).collect();
            (
                Some(ratios.iter().copied().fold(0.0, f64::max)),
                Some(linear_fit(&x, &y).slope),
            )
        }
        None => (None, None),
    };
    Ok(ScalingReport {
        rows,
        slope,
        intercept,
        r2,
        class,
        thresholds,
        rhs_star,
        sup_ratio,
        ratio_slope,
    })
}
