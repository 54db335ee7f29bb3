//! Finite trigonometric series `w(x) = Σ_k c_k e^{2πikx}` on the unit circle.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    terms: BTreeMap<i64, Complex64>,
}

impl TrigSeries {
    pub fn new(terms: impl IntoIterator<Item = (i64, Complex64)>) -> Self {
        let mut map = BTreeMap::new();
        for (k, c) in terms {
            *map.entry(k).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        map.retain(|_, c| c.norm() > 0.0);
        Self { terms: map }
    }

    pub fn constant(c: f64) -> Self {
        Self::new([(0, Complex64::new(c, 0.0))])
    }

    /// `c0 + Σ a_k cos(2πkx) + Σ b_k sin(2πkx)`.
    pub fn from_cos_sin(c0: f64, cos: &[(i64, f64)], sin: &[(i64, f64)]) -> Self {
        let mut t = vec![(0, Complex64::new(c0, 0.0))];
        for &(k, a) in cos {
            t.push((k, Complex64::new(0.5 * a, 0.0)));
            t.push((-k, Complex64::new(0.5 * a, 0.0)));
        }
        for &(k, b) in sin {
            t.push((k, Complex64::new(0.0, -0.5 * b)));
            t.push((-k, Complex64::new(0.0, 0.5 * b)));
        }
        Self::new(t)
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.terms.iter().map(|(&k, &c)| (k, c))
    }

    pub fn coefficient(&self, k: i64) -> Complex64 {
        self.terms.get(&k).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|(&k, &c)| c * Complex64::from_polar(1.0, TAU * k as f64 * x))
            .sum()
    }

    /// `∫_0^1 |w|²`, by Parseval.
    pub fn norm_sq(&self) -> f64 {
        self.terms.values().map(|c| c.norm_sqr()).sum()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self::new(self.terms.iter().map(|(&k, &c)| (k, c * s)))
    }

    /// The series of `|w|²`.
    pub fn abs_squared(&self) -> Self {
        let mut out = Vec::new();
        for (&k, &a) in &self.terms {
            for (&l, &b) in &self.terms {
                out.push((k - l, a * b.conj()));
            }
        }
        Self::new(out)
    }

    /// `∫_a^b w(x) dx` in closed form.
    pub fn integral(&self, a: f64, b: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|(&k, &c)| {
                if k == 0 {
                    c * (b - a)
                } else {
                    let w = TAU * k as f64;
                    let e = |x: f64| Complex64::from_polar(1.0, w * x);
                    c * (e(b) - e(a)) / Complex64::new(0.0, w)
                }
            })
            .sum()
    }

    pub fn max_frequency(&self) -> i64 {
        self.terms.keys().map(|k| k.abs()).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cos_sin_roundtrip() {
        let w = TrigSeries::from_cos_sin(1.0, &[(1, 0.5)], &[(2, 0.25)]);
        for &x in &[0.0, 0.13, 0.5, 0.77] {
            let direct = 1.0 + 0.5 * (TAU * x).cos() + 0.25 * (2.0 * TAU * x).sin();
            assert!((w.eval(x) - direct).norm() < 1e-14);
        }
        assert!((w.norm_sq() - (1.0 + 0.125 + 0.03125)).abs() < 1e-14);
    }

    #[test]
    fn abs_squared_and_integral() {
        let w = TrigSeries::from_cos_sin(1.0, &[(1, 0.5)], &[]);
        let w2 = w.abs_squared();
        for &x in &[0.1, 0.4, 0.9] {
            assert!((w2.eval(x).re - w.eval(x).norm_sqr()).abs() < 1e-14);
        }
        assert!((w2.integral(0.0, 1.0).re - w.norm_sq()).abs() < 1e-14);
        let direct = 0.25 + 0.5 * ((TAU * 0.25).sin() - 0.0) / TAU;
        assert!((w.integral(0.0, 0.25).re - direct).abs() < 1e-14);
    }
}
