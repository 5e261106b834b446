/// Euclidean projection onto the disc of radius `radius` centred at the
/// origin.
pub fn project_ball(v: [f64; 2], radius: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    // points already on the boundary up to rounding are left alone so the
    // projection is idempotent
    if n <= radius * (1.0 + 4.0 * f64::EPSILON) {
        v
    } else {
        let s = radius / n;
        [v[0] * s, v[1] * s]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_point_unchanged() {
        assert_eq!(project_ball([3.0, 0.0], 10.0), [3.0, 0.0]);
    }

    #[test]
    fn exterior_point_scaled_to_radius() {
        let p = project_ball([12.0, 16.0], 10.0);
        assert!((p[0].hypot(p[1]) - 10.0).abs() < 1e-12);
        assert!((p[0] / p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn idempotent() {
        let p = project_ball([-30.0, 7.0], 10.0);
        let q = project_ball(p, 10.0);
        assert!((q[0] - p[0]).abs() < 1e-14 && (q[1] - p[1]).abs() < 1e-14);
    }
}
