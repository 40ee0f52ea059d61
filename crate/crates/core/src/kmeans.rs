//! Lloyd's k-means with k-means++ seeding, used by the fixed-K baseline.

use rand::Rng;

use crate::dpmm::Assignment;
use crate::error::{Error, Result};

pub const MAX_ITERS: usize = 50;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(k, c)| (k, sq_dist(x, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn plus_plus_init<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centroids.push(points[next].clone());
    }
    centroids
}

/// Clusters `points` into exactly `k` groups. Labels are returned in
/// canonical order-of-first-appearance form; clusters that come up empty
/// during Lloyd iterations are reseeded at the point farthest from its
/// centroid.
pub fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Result<Assignment> {
    let m = points.len();
    if k == 0 {
        return Err(Error::InvalidConfig("k-means needs k >= 1".into()));
    }
    if k > m {
        return Err(Error::TooManyClusters { k, m });
    }
    if k == 1 {
        return Ok(Assignment::single(m));
    }
    let dim = points[0].len();
    let mut centroids = plus_plus_init(points, k, rng);
    let mut labels = vec![usize::MAX; m];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        let mut dists = vec![0.0; m];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            dists[i] = d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..m)
                    .filter(|&i| counts[labels[i]] > 1)
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("k <= m leaves a cluster with a spare point");
                counts[labels[far]] -= 1;
                labels[far] = c;
                counts[c] = 1;
                dists[far] = 0.0;
                changed = true;
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let mut acc = vec![0.0; dim];
            for (i, p) in points.iter().enumerate() {
                if labels[i] == c {
                    acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
                }
            }
            let inv = 1.0 / counts[c] as f64;
            *centroid = acc.into_iter().map(|a| a * inv).collect();
        }
        if !changed {
            break;
        }
    }
    Ok(Assignment::from_labels(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SimRng;
    use rand::SeedableRng;

    #[test]
    fn separated_groups_recovered() {
        let pts: Vec<Vec<f64>> =
            [0.0, 0.1, 0.2, 10.0, 10.1, 10.3, 20.0, 20.2].iter().map(|&x| vec![x, -x]).collect();
        let a = kmeans(&pts, 3, &mut SimRng::seed_from_u64(4)).unwrap();
        assert_eq!(a.labels(), &[0, 0, 0, 1, 1, 1, 2, 2]);
    }

    #[test]
    fn k_equals_m_gives_singletons() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let a = kmeans(&pts, 5, &mut SimRng::seed_from_u64(0)).unwrap();
        assert_eq!(a.num_clusters(), 5);
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let pts = vec![vec![1.0]; 6];
        let a = kmeans(&pts, 3, &mut SimRng::seed_from_u64(0)).unwrap();
        assert_eq!(a.num_clusters(), 3);
        assert!(a.is_valid());
    }

    #[test]
    fn too_many_clusters() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert_eq!(kmeans(&pts, 3, &mut SimRng::seed_from_u64(0)), Err(Error::TooManyClusters { k: 3, m: 2 }));
    }
}
