//! Point-in-polygon for lasso selection.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LassoError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    DegeneratePolygon(usize),
    #[error("polygon vertex {0} is not finite")]
    NonFinite(usize),
}

pub fn check_polygon(polygon: &[[f64; 2]]) -> Result<(), LassoError> {
    if polygon.len() < 3 {
        return Err(LassoError::DegeneratePolygon(polygon.len()));
    }
    match polygon.iter().position(|v| !v[0].is_finite() || !v[1].is_finite()) {
        Some(i) => Err(LassoError::NonFinite(i)),
        None => Ok(()),
    }
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    cross == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Even-odd rule; points on an edge or vertex count as inside.
pub fn contains(polygon: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = polygon.len();
    let mut inside = false;
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        if on_segment(p, a, b) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: [[f64; 2]; 4] = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]];

    #[test]
    fn interior_exterior_and_boundary() {
        assert!(contains(&SQUARE, [1.0, 1.0]));
        assert!(!contains(&SQUARE, [3.0, 1.0]));
        assert!(contains(&SQUARE, [2.0, 1.0]));
        assert!(contains(&SQUARE, [0.0, 0.0]));
        assert!(contains(&SQUARE, [1.0, 2.0]));
    }

    #[test]
    fn self_intersecting_uses_even_odd() {
        // pentagram: the central pentagon is covered twice and so lies outside
        let star: Vec<[f64; 2]> = (0..5)
            .map(|k| {
                let t = std::f64::consts::FRAC_PI_2 + (k * 2) as f64 * 2.0 * std::f64::consts::PI / 5.0;
                [t.cos(), t.sin()]
            })
            .collect();
        assert!(!contains(&star, [0.0, 0.0]));
        assert!(contains(&star, [0.0, 0.9]));
    }

    #[test]
    fn two_vertices_are_degenerate() {
        assert_eq!(check_polygon(&[[0.0, 0.0], [1.0, 1.0]]), Err(LassoError::DegeneratePolygon(2)));
    }
}
