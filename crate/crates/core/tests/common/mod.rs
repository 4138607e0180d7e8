#![allow(dead_code)]

use regpipe::{Point3, PointCloud, Vector3};

/// Regular grid on the plane `z = height`, cell centers at half-step offsets.
pub fn grid_plane(x0: f64, x1: f64, y0: f64, y1: f64, z: f64, step: f64) -> Vec<Point3> {
    let nx = ((x1 - x0) / step).round() as usize;
    let ny = ((y1 - y0) / step).round() as usize;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push(Point3::new(
                x0 + (i as f64 + 0.5) * step,
                y0 + (j as f64 + 0.5) * step,
                z,
            ));
        }
    }
    out
}

/// Three mutually orthogonal faces meeting at the origin (floor plus the
/// `x = 0` and `y = 0` walls), with exact normals.
pub fn cube_corner(size: f64, step: f64) -> PointCloud {
    let mut pts = Vec::new();
    let mut normals = Vec::new();
    for p in grid_plane(0.0, size, 0.0, size, 0.0, step) {
        pts.push(p);
        normals.push(Vector3::z());
    }
    for p in grid_plane(0.0, size, 0.0, size, 0.0, step) {
        pts.push(Point3::new(0.0, p.x, p.y));
        normals.push(Vector3::x());
        pts.push(Point3::new(p.x, 0.0, p.y));
        normals.push(Vector3::y());
    }
    PointCloud::new(pts).unwrap().with_normals(normals).unwrap()
}

pub fn flat_plane(size: f64, step: f64) -> PointCloud {
    let pts = grid_plane(-size / 2.0, size / 2.0, -size / 2.0, size / 2.0, 0.0, step);
    let n = vec![Vector3::z(); pts.len()];
    PointCloud::new(pts).unwrap().with_normals(n).unwrap()
}

/// A `side × side × height` box standing on a square ground plane, sampled
/// on grids of the given step (roof, ground outside the footprint, walls).
pub fn box_on_ground(ground: f64, side: f64, height: f64, step: f64) -> PointCloud {
    let g = ground / 2.0;
    let s = side / 2.0;
    let mut pts: Vec<Point3> = grid_plane(-g, g, -g, g, 0.0, step)
        .into_iter()
        .filter(|p| p.x.abs() > s || p.y.abs() > s)
        .collect();
    pts.extend(grid_plane(-s, s, -s, s, height, step));
    let n_side = (side / step).round() as usize;
    let n_up = (height / step).round() as usize;
    for k in 0..n_up {
        let z = (k as f64 + 0.5) * step;
        for i in 0..n_side {
            let t = -s + (i as f64 + 0.5) * step;
            pts.push(Point3::new(t, -s, z));
            pts.push(Point3::new(t, s, z));
            pts.push(Point3::new(-s, t, z));
            pts.push(Point3::new(s, t, z));
        }
    }
    PointCloud::new(pts).unwrap()
}

pub fn nearest_distance(p: &Point3, set: &[Point3]) -> f64 {
    set.iter().map(|q| (q - p).norm()).fold(f64::INFINITY, f64::min)
}
