//! Dominance, nondominated filtering and the exact 3-D hypervolume.

use crate::error::{Error, Result};

pub type Objectives = [f64; 3];

/// `a` is no worse than `b` everywhere and strictly better somewhere (minimization).
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Indices of the members not dominated by any other member. Exact
/// duplicates are all kept.
pub fn nondominated_indices(points: &[Objectives]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|q| dominates(q, &points[i])))
        .collect()
}

/// Componentwise division by a positive baseline.
pub fn normalize_front(front: &[Objectives], baseline: &Objectives) -> Result<Vec<Objectives>> {
    if !baseline.iter().all(|b| *b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("baseline must be positive, got {baseline:?}")));
    }
    Ok(front.iter().map(|p| [p[0] / baseline[0], p[1] / baseline[1], p[2] / baseline[2]]).collect())
}

/// Componentwise maximum over all fronts, scaled by `factor`.
pub fn reference_point(fronts: &[&[Objectives]], factor: f64) -> Result<Objectives> {
    let mut r = [f64::NEG_INFINITY; 3];
    for p in fronts.iter().flat_map(|f| f.iter()) {
        for (ri, pi) in r.iter_mut().zip(p) {
            *ri = ri.max(*pi);
        }
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Empty("fronts for the reference point"));
    }
    Ok(r.map(|v| v * factor))
}

/// Area dominated by 2-D points inside `[., rx] x [., ry]`.
fn area_2d(points: &mut [[f64; 2]], rx: f64, ry: f64) -> f64 {
    points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut ymin = ry;
    for (i, p) in points.iter().enumerate() {
        ymin = ymin.min(p[1]);
        let next_x = points.get(i + 1).map_or(rx, |q| q[0]);
        area += (next_x - p[0]) * (ry - ymin);
    }
    area
}

/// Lebesgue measure of the union of boxes `[p, reference]`, by sweeping the
/// third objective and integrating 2-D slice areas.
pub fn hypervolume(front: &[Objectives], reference: &Objectives) -> Result<f64> {
    for (i, p) in front.iter().enumerate() {
        if p.iter().zip(reference).any(|(a, r)| a > r) || p.iter().any(|v| !v.is_finite()) {
            return Err(Error::BeyondReference { index: i });
        }
    }
    let mut pts: Vec<Objectives> = front.to_vec();
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut hv = 0.0;
    let mut slice: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for (i, p) in pts.iter().enumerate() {
        slice.push([p[0], p[1]]);
        let z_next = pts.get(i + 1).map_or(reference[2], |q| q[2]);
        let dz = z_next - p[2];
        if dz > 0.0 {
            hv += dz * area_2d(&mut slice, reference[0], reference[1]);
        }
    }
    Ok(hv)
}

/// Hypervolume of the members that lie inside the reference box; the rest
/// dominate none of it.
pub fn hypervolume_within(front: &[Objectives], reference: &Objectives) -> f64 {
    let inside: Vec<Objectives> = front
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(a, r)| a <= r))
        .copied()
        .collect();
    hypervolume(&inside, reference).expect("filtered to the reference box")
}
