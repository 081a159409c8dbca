//! Slow brute-force reference computations used by the test suites to
//! cross-check the fast paths. Everything here is self-contained closed-form
//! 2×2 arithmetic, independent of the main linear-algebra kernels.

/// ‖M(Γ) − I‖_F for Γ = [[a, b], [b, 1−a]] and a unit-vector frame in ℝ²,
/// evaluated directly from the defining sum. Returns None when Γ is not
/// positive definite.
fn objective_2x2(vectors: &[[f64; 2]], a: f64, b: f64) -> Option<f64> {
    let c = 1.0 - a;
    let det = a * c - b * b;
    if a <= 0.0 || c <= 0.0 || det <= 0.0 {
        return None;
    }
    // closed-form square root of a 2x2 SPD matrix
    let s = det.sqrt();
    let t = (a + c + 2.0 * s).sqrt();
    let w = [(a + s) / t, b / t, (c + s) / t]; // [[w0, w1], [w1, w2]]
    let n = vectors.len() as f64;
    let mut m = [0.0_f64; 3]; // accumulated [[m0, m1], [m1, m2]]
    for v in vectors {
        let quad = a * v[0] * v[0] + 2.0 * b * v[0] * v[1] + c * v[1] * v[1];
        if quad <= 0.0 {
            return None;
        }
        let wv = [w[0] * v[0] + w[1] * v[1], w[1] * v[0] + w[2] * v[1]];
        m[0] += wv[0] * wv[0] / quad;
        m[1] += wv[0] * wv[1] / quad;
        m[2] += wv[1] * wv[1] / quad;
    }
    let scale = 2.0 / n;
    let diff = [scale * m[0] - 1.0, scale * m[1], scale * m[2] - 1.0];
    Some((diff[0] * diff[0] + 2.0 * diff[1] * diff[1] + diff[2] * diff[2]).sqrt())
}

/// Brute-force minimizer of ‖M(Γ) − I‖_F over trace-1 SPD 2×2 matrices by
/// nested grid refinement. Returns [a, b, c] with Γ = [[a, b], [b, c]].
pub fn brute_force_tight_gamma_2x2(vectors: &[[f64; 2]]) -> [f64; 3] {
    let mut center = (0.5, 0.0);
    let mut span = (0.5, 0.5);
    let grid = 48;
    let mut best = (f64::INFINITY, center);
    for _level in 0..5 {
        for i in 0..=grid {
            let a = center.0 - span.0 + 2.0 * span.0 * i as f64 / grid as f64;
            for j in 0..=grid {
                let b = center.1 - span.1 + 2.0 * span.1 * j as f64 / grid as f64;
                if let Some(val) = objective_2x2(vectors, a, b) {
                    if val < best.0 {
                        best = (val, (a, b));
                    }
                }
            }
        }
        center = best.1;
        span = (span.0 / 6.0, span.1 / 6.0);
    }
    [best.1 .0, best.1 .1, 1.0 - best.1 .0]
}

/// Σⱼ ‖U_θ yⱼ − tⱼ‖² for unit vectors given by their angles.
pub fn rotation_objective(t_angles: &[f64], y_angles: &[f64], theta: f64) -> f64 {
    t_angles
        .iter()
        .zip(y_angles)
        .map(|(&a, &b)| 2.0 - 2.0 * (b + theta - a).cos())
        .sum()
}

/// Minimize the rotation objective over a dense θ grid (the slow reference
/// for the closed-form optimum).
pub fn grid_min_rotation(t_angles: &[f64], y_angles: &[f64], points: usize) -> (f64, f64) {
    let mut best = (0.0, f64::INFINITY);
    for i in 0..points {
        let theta = -std::f64::consts::PI
            + std::f64::consts::TAU * i as f64 / points as f64;
        let val = rotation_objective(t_angles, y_angles, theta);
        if val < best.1 {
            best = (theta, val);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tight_input_has_identity_gamma() {
        // the three unit vectors at 0, 60, 120 degrees are already tight,
        // so the minimizer is Γ = I/2
        let v: Vec<[f64; 2]> = [0.0_f64, 1.0, 2.0]
            .iter()
            .map(|&k| {
                let a = k * std::f64::consts::PI / 3.0;
                [a.cos(), a.sin()]
            })
            .collect();
        let gamma = brute_force_tight_gamma_2x2(&v);
        assert!((gamma[0] - 0.5).abs() < 1e-4);
        assert!(gamma[1].abs() < 1e-4);
    }

    #[test]
    fn rotation_grid_finds_exact_shift() {
        // t = y rotated by 0.3: optimum is θ = 0.3 with objective 0
        let y = [0.0, 1.0, 2.0];
        let t: Vec<f64> = y.iter().map(|&a| a + 0.3).collect();
        let (theta, obj) = grid_min_rotation(&t, &y, 100_000);
        assert!((theta - 0.3).abs() < 1e-4);
        assert!(obj < 1e-8);
    }
}
