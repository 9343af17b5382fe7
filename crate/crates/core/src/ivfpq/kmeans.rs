//! Lloyd's k-means with seeded k-means++ initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Trained cluster centres plus the objective (sum of squared distances to
/// the assigned centre) recorded after every assignment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    pub k: usize,
    pub dim: usize,
    pub values: Vec<f32>,
    pub objective: Vec<f64>,
}

impl Centroids {
    pub fn from_values(k: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if k == 0 || dim == 0 || values.len() != k * dim {
            return Err(Error::InvalidData(format!(
                "{} centroid values for k={k} dim={dim}",
                values.len()
            )));
        }
        Ok(Self {
            k,
            dim,
            values,
            objective: Vec::new(),
        })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Nearest centre by L2, ties to the lower index.
    pub fn assign(&self, v: &[f32]) -> (usize, f64) {
        crate::vector::nearest_l2(&self.values, self.dim, v)
    }
}

// Eight independent partial sums keep the add chains short enough to
// pipeline; the order is fixed, so results stay reproducible.
fn dist_sq(x: &[f32], c: &[f64]) -> f64 {
    let mut lanes = [0f64; 8];
    let (xh, xt) = x.split_at(x.len() - x.len() % 8);
    let (ch, ct) = c.split_at(xh.len());
    for (xs, cs) in xh.chunks_exact(8).zip(ch.chunks_exact(8)) {
        for l in 0..8 {
            let d = xs[l] as f64 - cs[l];
            lanes[l] += d * d;
        }
    }
    for (l, (&a, &b)) in xt.iter().zip(ct).enumerate() {
        let d = a as f64 - b;
        lanes[l] += d * d;
    }
    lanes.iter().sum()
}

fn nearest(x: &[f32], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.chunks_exact(dim).enumerate() {
        let d = dist_sq(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans_pp(points: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centers: Vec<f64> = Vec::with_capacity(k * dim);
    let mut chosen = vec![false; n];

    let first = rng.gen_range(0..n);
    chosen[first] = true;
    centers.extend(point(first).iter().map(|&x| x as f64));
    let mut d2: Vec<f64> = (0..n).map(|i| dist_sq(point(i), &centers)).collect();

    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let u: f64 = rng.gen::<f64>();
        let pick = if total > 0.0 {
            let target = u * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just past the final sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every point coincides with a centre already
            chosen.iter().position(|&c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        let c: Vec<f64> = point(pick).iter().map(|&x| x as f64).collect();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist_sq(point(i), &c));
        }
        centers.extend(c);
    }
    centers
}

/// Clusters the row-major `points` (`dim` wide) into `k` groups.
///
/// Runs at most `iters` Lloyd iterations and stops early once assignments
/// stop changing or the objective stops decreasing. A cluster that ends up
/// empty takes over the point farthest from the centre of the currently
/// largest cluster.
pub fn train_kmeans(points: &[f32], dim: usize, k: usize, iters: usize, seed: u64) -> Result<Centroids> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter(format!(
            "{} values do not form {dim}-dim rows",
            points.len()
        )));
    }
    let n = points.len() / dim;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if n < k {
        return Err(Error::InvalidParameter(format!(
            "k-means needs at least k={k} points, got {n}"
        )));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidData("non-finite training value".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(points, dim, k, &mut rng);
    let mut objective = Vec::new();
    let mut prev: Option<Vec<usize>> = None;

    let mut it = 0;
    loop {
        let assigned: Vec<(usize, f64)> = points
            .par_chunks_exact(dim)
            .map(|x| nearest(x, &centers, dim))
            .collect();
        let total: f64 = assigned.iter().map(|a| a.1).sum();
        let stalled = objective.last().is_some_and(|&last| total >= last);
        objective.push(total);
        let mut labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        // `stalled` catches tie churn among duplicate points, where labels
        // keep moving without improving anything
        if it == iters || stalled || prev.as_ref() == Some(&labels) {
            break;
        }
        it += 1;

        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let largest = (0..k).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap();
            // members of `largest` are still measured against its centre
            let mut far = (usize::MAX, -1.0);
            for (i, &(_, d)) in assigned.iter().enumerate() {
                if labels[i] == largest && d > far.1 {
                    far = (i, d);
                }
            }
            labels[far.0] = empty;
            sizes[largest] -= 1;
            sizes[empty] = 1;
        }

        let mut sums = vec![0f64; k * dim];
        for (x, &l) in points.chunks_exact(dim).zip(&labels) {
            for (s, &v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(x) {
                *s += v as f64;
            }
        }
        for (c, (sum, &size)) in centers.chunks_exact_mut(dim).zip(sums.chunks_exact(dim).zip(&sizes)) {
            for (cv, sv) in c.iter_mut().zip(sum) {
                *cv = sv / size as f64;
            }
        }
        prev = Some(labels);
    }

    Ok(Centroids {
        k,
        dim,
        values: centers.iter().map(|&x| x as f32).collect(),
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn k_distinct_points_are_their_own_centres() {
        let pts = vec![0.0, 0.0, 1.0, 0.5, -2.0, 3.0, 7.0, 7.0];
        let c = train_kmeans(&pts, 2, 4, 10, 0).unwrap();
        let mut got: Vec<Vec<f32>> = (0..4).map(|i| c.row(i).to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<Vec<f32>> = pts.chunks(2).map(<[f32]>::to_vec).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
        assert_eq!(*c.objective.last().unwrap(), 0.0);
    }

    #[test]
    fn separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let means = [[0.0f32, 0.0], [5.0, 5.0]];
        let mut pts = Vec::new();
        let mut sums = [[0f64; 2]; 2];
        for i in 0..200 {
            let m = means[i % 2];
            let p = [
                m[0] + noise.sample(&mut rng) as f32,
                m[1] + noise.sample(&mut rng) as f32,
            ];
            sums[i % 2][0] += p[0] as f64;
            sums[i % 2][1] += p[1] as f64;
            pts.extend(p);
        }
        let blob_means: Vec<[f64; 2]> = sums.iter().map(|s| [s[0] / 100.0, s[1] / 100.0]).collect();
        let c = train_kmeans(&pts, 2, 2, 20, 0).unwrap();
        for bm in &blob_means {
            let closest = (0..2)
                .map(|i| {
                    let r = c.row(i);
                    ((r[0] as f64 - bm[0]).powi(2) + (r[1] as f64 - bm[1]).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 0.1, "{closest}");
        }
    }

    #[test]
    fn duplicates_and_empty_clusters() {
        // 3 distinct values, k = 5: some clusters must be repaired
        let pts: Vec<f32> = (0..30).map(|i| (i % 3) as f32).collect();
        let c = train_kmeans(&pts, 1, 5, 10, 1).unwrap();
        assert_eq!(*c.objective.last().unwrap(), 0.0);
        for w in c.objective.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn errors_and_determinism() {
        assert!(train_kmeans(&[1.0, 2.0], 1, 3, 5, 0).is_err());
        assert!(train_kmeans(&[1.0, 2.0, 3.0], 2, 1, 5, 0).is_err());
        let pts: Vec<f32> = (0..100).map(|i| ((i * 37) % 101) as f32 / 10.0).collect();
        assert_eq!(
            train_kmeans(&pts, 2, 6, 10, 3).unwrap(),
            train_kmeans(&pts, 2, 6, 10, 3).unwrap()
        );
    }
}
