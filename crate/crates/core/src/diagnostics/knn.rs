//! k-nearest-neighbour distances for the Kozachenko-Leonenko estimator.

use std::num::NonZeroUsize;

use kiddo::{ImmutableKdTree, SquaredEuclidean};

use crate::error::{invalid, Error, Result};

pub const MAX_KNN_DIM: usize = 4;

/// Euclidean distance from each point to its `k`-th nearest other point.
pub fn kth_neighbour_distances(points: &[f64], dim: usize, k: usize) -> Result<Vec<f64>> {
    check(points, dim, k, k + 1)?;
    dispatch(points, points, dim, k, true)
}

/// Distance from each query to its `k`-th nearest reference point.
pub fn kth_neighbour_distances_to(reference: &[f64], queries: &[f64], dim: usize, k: usize) -> Result<Vec<f64>> {
    check(reference, dim, k, k)?;
    if !queries.len().is_multiple_of(dim) {
        return Err(invalid("queries", "length is not a multiple of the dimension"));
    }
    dispatch(reference, queries, dim, k, false)
}

fn check(points: &[f64], dim: usize, k: usize, needed: usize) -> Result<()> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(invalid("points", "length is not a multiple of the dimension"));
    }
    if points.len() / dim < needed {
        return Err(invalid("points", format!("need at least {needed} samples for k = {k}")));
    }
    Ok(())
}

fn dispatch(reference: &[f64], queries: &[f64], dim: usize, k: usize, exclude_self: bool) -> Result<Vec<f64>> {
    match dim {
        1 => distances::<1>(reference, queries, k, exclude_self),
        2 => distances::<2>(reference, queries, k, exclude_self),
        3 => distances::<3>(reference, queries, k, exclude_self),
        4 => distances::<4>(reference, queries, k, exclude_self),
        _ => Err(Error::DimensionTooHigh { dim, max: MAX_KNN_DIM }),
    }
}

fn to_arrays<const D: usize>(points: &[f64]) -> Vec<[f64; D]> {
    points
        .chunks_exact(D)
        .map(|c| {
            let mut a = [0.0; D];
            a.copy_from_slice(c);
            a
        })
        .collect()
}

fn distances<const D: usize>(reference: &[f64], queries: &[f64], k: usize, exclude_self: bool) -> Result<Vec<f64>> {
    let entries = to_arrays::<D>(reference);
    let tree = ImmutableKdTree::new_from_slice(&entries).map_err(|e| invalid("points", format!("{e:?}")))?;
    // A query drawn from the reference set finds itself first.
    let qty = NonZeroUsize::new(k + usize::from(exclude_self)).expect("k > 0");
    Ok(to_arrays::<D>(queries)
        .iter()
        .map(|p| {
            let hits = tree.query(p).nearest_n::<SquaredEuclidean<f64>>(qty).execute();
            hits.last().map(|h| h.distance.sqrt()).unwrap_or(0.0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_neighbours() {
        let pts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let d = kth_neighbour_distances(&pts, 1, 2).unwrap();
        assert_eq!(d[0], 2.0);
        assert_eq!(d[5], 1.0);
        assert_eq!(d[9], 2.0);
    }

    #[test]
    fn matches_brute_force_in_3d() {
        let pts: Vec<f64> = (0..300).map(|i| ((i * 7919) % 101) as f64 / 17.0 + (i as f64).sin()).collect();
        let d = kth_neighbour_distances(&pts, 3, 5).unwrap();
        for (i, p) in pts.chunks(3).enumerate() {
            let mut all: Vec<f64> = pts
                .chunks(3)
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .collect();
            all.sort_by(|a, b| a.total_cmp(b));
            assert!((all[4] - d[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_distances() {
        let reference = [0.0, 1.0, 3.0];
        let d = kth_neighbour_distances_to(&reference, &[0.9, 10.0], 1, 2).unwrap();
        assert!((d[0] - 0.9).abs() < 1e-15);
        assert_eq!(d[1], 9.0);
    }

    #[test]
    fn rejects_five_dimensions() {
        let pts = vec![0.0; 50];
        assert!(matches!(kth_neighbour_distances(&pts, 5, 1), Err(Error::DimensionTooHigh { dim: 5, .. })));
    }
}
