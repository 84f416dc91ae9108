//! Exact integrals of piecewise-linear functions.

use super::Mesh;

/// `∫_T |f|` for the linear `f` with vertex values `vals` on a triangle of area `area`.
pub(crate) fn triangle_abs_integral(vals: [f64; 3], area: f64) -> f64 {
    let pos = vals.iter().filter(|&&v| v > 0.0).count();
    let neg = vals.iter().filter(|&&v| v < 0.0).count();
    let mean = (vals[0] + vals[1] + vals[2]) / 3.0;
    if pos == 0 || neg == 0 {
        return area * mean.abs();
    }
    // The vertex whose sign differs from the other two (zeros side with them).
    let k = if pos == 1 {
        (0..3).find(|&i| vals[i] > 0.0).unwrap()
    } else {
        (0..3).find(|&i| vals[i] < 0.0).unwrap()
    };
    let fk = vals[k];
    let (fi, fj) = (vals[(k + 1) % 3], vals[(k + 2) % 3]);
    let (ti, tj) = (fk / (fk - fi), fk / (fk - fj));
    // Integral of f over the sub-triangle where sign(f) = sign(fk).
    let corner = area * ti * tj * fk / 3.0;
    fk.signum() * (2.0 * corner - area * mean)
}

/// `‖f_h‖_{L¹(Ω)}` of a P1 field, integrated exactly element by element.
pub fn l1_norm(mesh: &Mesh, values: &[f64]) -> f64 {
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            triangle_abs_integral([values[tri[0]], values[tri[1]], values[tri[2]]], mesh.signed_area(t))
        })
        .sum()
}

/// Axis-aligned rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// `∫_R f_h dx` for a P1 field, exact up to rounding: each triangle is
/// clipped against the rectangle and the linear function is integrated over
/// the resulting convex polygon.
pub fn integrate_over_rect(mesh: &Mesh, values: &[f64], rect: Rect) -> f64 {
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let coords = mesh.triangle_coords(t);
        let xs = coords.map(|p| p[0]);
        let ys = coords.map(|p| p[1]);
        if xs.iter().cloned().fold(f64::INFINITY, f64::min) >= rect.x1
            || xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) <= rect.x0
            || ys.iter().cloned().fold(f64::INFINITY, f64::min) >= rect.y1
            || ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) <= rect.y0
        {
            continue;
        }
        // Points carry (x, y, f) so the field is clipped along with the geometry.
        let mut poly: Vec<[f64; 3]> = (0..3).map(|k| [xs[k], ys[k], values[tri[k]]]).collect();
        for (axis, bound, keep_above) in [
            (0, rect.x0, true),
            (0, rect.x1, false),
            (1, rect.y0, true),
            (1, rect.y1, false),
        ] {
            poly = clip(&poly, axis, bound, keep_above);
            if poly.len() < 3 {
                break;
            }
        }
        if poly.len() < 3 {
            continue;
        }
        // Fan triangulation; linear integrand is exact with the vertex mean.
        for k in 1..poly.len() - 1 {
            let (a, b, c) = (poly[0], poly[k], poly[k + 1]);
            let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
            total += area.abs() * (a[2] + b[2] + c[2]) / 3.0;
        }
    }
    total
}

fn clip(poly: &[[f64; 3]], axis: usize, bound: f64, keep_above: bool) -> Vec<[f64; 3]> {
    let inside = |p: &[f64; 3]| if keep_above { p[axis] >= bound } else { p[axis] <= bound };
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = poly[i];
        let prev = poly[(i + poly.len() - 1) % poly.len()];
        let (ci, pi) = (inside(&cur), inside(&prev));
        if ci != pi {
            let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
            out.push([
                prev[0] + t * (cur[0] - prev[0]),
                prev[1] + t * (cur[1] - prev[1]),
                prev[2] + t * (cur[2] - prev[2]),
            ]);
        }
        if ci {
            out.push(cur);
        }
    }
    out
}
