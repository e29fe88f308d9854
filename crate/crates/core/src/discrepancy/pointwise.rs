use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Point3, TriMesh};

/// Symmetric mean nearest-neighbour distance between two point sets.
pub fn chamfer_distance(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("chamfer distance needs non-empty point sets"));
    }
    let mean_nearest = |from: &[Point3], to: &[Point3]| -> f64 {
        let total: f64 = from
            .par_iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p - q).norm_squared())
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect::<Vec<_>>()
            .iter()
            .sum();
        total / from.len() as f64
    };
    Ok(mean_nearest(a, b) + mean_nearest(b, a))
}

/// Euclidean distance from `p` to the closed triangle `(a, b, c)`.
pub fn point_triangle_distance(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).norm()
}

/// Voronoi-region walk over vertices, edges and the interior.
fn closest_point_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

fn directed_hausdorff(from: &TriMesh, to: &TriMesh) -> f64 {
    let tv = to.vertices();
    from.vertices()
        .par_iter()
        .map(|p| {
            to.faces()
                .iter()
                .map(|&[i, j, k]| point_triangle_distance(p, &tv[i], &tv[j], &tv[k]))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

/// Symmetric Hausdorff distance between the vertices of each mesh and the
/// surface of the other.
pub fn hausdorff_distance(a: &TriMesh, b: &TriMesh) -> Result<f64> {
    if a.vertex_count() == 0 || b.vertex_count() == 0 {
        return Err(Error::Empty("hausdorff distance needs non-empty meshes"));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}
