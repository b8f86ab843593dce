//! Quadrature rules on triangles (barycentric points) and on segments.

/// A triangle rule: barycentric points and weights summing to one (the
/// caller multiplies by the triangle area).
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// Six-point rule, exact for polynomials of degree 4.
pub fn triangle_degree4() -> TriangleRule {
    const A: f64 = 0.445_948_490_915_964_886_32;
    const WA: f64 = 0.223_381_589_678_011_465_70;
    const B: f64 = 0.091_576_213_509_770_743_46;
    const WB: f64 = 0.109_951_743_655_321_867_64;
    let points = vec![
        [1.0 - 2.0 * A, A, A],
        [A, 1.0 - 2.0 * A, A],
        [A, A, 1.0 - 2.0 * A],
        [1.0 - 2.0 * B, B, B],
        [B, 1.0 - 2.0 * B, B],
        [B, B, 1.0 - 2.0 * B],
    ];
    TriangleRule { points, weights: vec![WA, WA, WA, WB, WB, WB] }
}

/// Collapsed (Duffy) tensor Gauss rule with `k * k` points, exact for
/// polynomials of degree `2k - 2` on the triangle.
pub fn triangle_collapsed(k: usize) -> TriangleRule {
    let (xs, ws) = gauss_legendre_unit(k);
    let mut points = Vec::with_capacity(k * k);
    let mut weights = Vec::with_capacity(k * k);
    for (&u, &wu) in xs.iter().zip(&ws) {
        for (&v, &wv) in xs.iter().zip(&ws) {
            // (u, v) in the unit square -> (s, t) = (u, v (1 - u)) in the
            // reference triangle; jacobian (1 - u), reference area 1/2.
            let s = u;
            let t = v * (1.0 - u);
            points.push([1.0 - s - t, s, t]);
            weights.push(2.0 * wu * wv * (1.0 - u));
        }
    }
    TriangleRule { points, weights }
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_unit(k: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(k >= 1);
    let mut xs = vec![0.0; k];
    let mut ws = vec![0.0; k];
    for i in 0..k {
        // Newton on P_k starting from the Chebyshev-like guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(k, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(k, x);
        xs[i] = 0.5 * (1.0 - x);
        ws[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

fn legendre(k: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=k {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    if k == 0 {
        return (1.0, 0.0);
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Three-point Gauss rule on [0, 1]: `(parameter, weight)`.
pub fn segment_gauss3() -> [(f64, f64); 3] {
    let d = 0.5 * (0.6f64).sqrt();
    [(0.5 - d, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + d, 5.0 / 18.0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ∫_T x^a y^b over the reference triangle = a! b! / (a + b + 2)!
    fn exact_monomial(a: u32, b: u32) -> f64 {
        let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
        f(a) * f(b) / f(a + b + 2)
    }

    fn integrate(rule: &TriangleRule, a: u32, b: u32) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| 0.5 * w * p[1].powi(a as i32) * p[2].powi(b as i32))
            .sum()
    }

    #[test]
    fn degree4_rule_is_exact() {
        let rule = triangle_degree4();
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for a in 0..=4 {
            for b in 0..=(4 - a) {
                assert!((integrate(&rule, a, b) - exact_monomial(a, b)).abs() < 1e-15, "x^{a} y^{b}");
            }
        }
    }

    #[test]
    fn collapsed_rule_is_exact() {
        let rule = triangle_collapsed(5);
        for a in 0..=8 {
            for b in 0..=(8 - a) {
                assert!((integrate(&rule, a, b) - exact_monomial(a, b)).abs() < 1e-15, "x^{a} y^{b}");
            }
        }
    }

    #[test]
    fn gauss3_integrates_quintics() {
        for p in 0..=5 {
            let q: f64 = segment_gauss3().iter().map(|(s, w)| w * s.powi(p)).sum();
            assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-15);
        }
    }
}
