//! Small quadrature and fitting helpers shared by the other modules.

use num_complex::Complex64;

/// Mean of `f` over `n` equispaced nodes of `[0, 1)`; spectrally accurate for
/// smooth 1-periodic integrands.
pub fn periodic_trapezoid<F>(n: usize, mut f: F) -> Complex64
where
    F: FnMut(f64) -> Complex64,
{
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        acc += f(j as f64 / n as f64);
    }
    acc / n as f64
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// `∫_a^b f` by an `n`-point Gauss–Legendre rule.
pub fn integrate_gl<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, mut f: F) -> f64 {
    let (x, w) = gauss_legendre(n);
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(&w).map(|(&xi, &wi)| wi * f(c + r * xi)).sum::<f64>() * r
}

/// Least-squares line through `(x, y)` with coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 && sxx > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };
    LinearFit {
        slope,
        intercept,
        r2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_polynomial_exactness() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for p in 0..(2 * n) {
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                let q: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(p as i32)).sum();
                assert!((q - exact).abs() < 1e-12, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn trapezoid_is_exact_for_trig() {
        let v = periodic_trapezoid(16, |x| Complex64::from_polar(1.0, std::f64::consts::TAU * 3.0 * x));
        assert!(v.norm() < 1e-14);
        let v = periodic_trapezoid(16, |x| Complex64::new((std::f64::consts::TAU * x).cos().powi(2), 0.0));
        assert!((v.re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn line_fit() {
        let f = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }
}
