use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AnalysisError, Result};

/// Principal-component projection of a point set.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit eigenvectors of the covariance, by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Share of total variance per kept component.
    pub explained_variance_ratio: Vec<f64>,
    pub projected: Vec<Vec<f64>>,
}

impl Pca {
    /// Maps projected coordinates back to the input space.
    pub fn inverse(&self, projected: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, &w) in self.components.iter().zip(projected) {
            for (xi, ci) in x.iter_mut().zip(c) {
                *xi += w * ci;
            }
        }
        x
    }
}

fn check_points(points: &[Vec<f64>], needed: usize) -> Result<usize> {
    if points.len() < needed {
        return Err(AnalysisError::TooFewPoints {
            needed,
            got: points.len(),
        });
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(AnalysisError::Dims("points have different dimensions".into()));
    }
    Ok(d)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matching eigenvectors as rows.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                let (lo, hi) = a.split_at_mut(q);
                for (apk, aqk) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (x, y) = (*apk, *aqk);
                    *apk = c * x - s * y;
                    *aqk = s * x + c * y;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let values: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    let vectors = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}

/// Mean-centred projection onto the top `target_dim` covariance
/// eigenvectors. Identical points give zero projections and zero ratios.
pub fn pca_project(points: &[Vec<f64>], target_dim: usize) -> Result<Pca> {
    let d = check_points(points, 2)?;
    if target_dim > d {
        return Err(AnalysisError::Dims(format!("target dimension {target_dim} exceeds input dimension {d}")));
    }
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let centred: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for c in &centred {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    for row in &mut cov {
        for x in row.iter_mut() {
            *x /= n - 1.0;
        }
    }
    let (values, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let mut components: Vec<Vec<f64>> = order.iter().take(target_dim).map(|&i| vectors[i].clone()).collect();
    // fix each component's sign so output does not depend on rotation order
    for c in &mut components {
        let lead = c.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let explained_variance_ratio = if total > 0.0 {
        eigenvalues.iter().take(target_dim).map(|e| e / total).collect()
    } else {
        log::warn!("all points are identical; projections are zero");
        vec![0.0; target_dim]
    };
    let projected = centred
        .iter()
        .map(|c| components.iter().map(|comp| crate::tensor::dot(comp, c)).collect())
        .collect();
    Ok(Pca {
        mean,
        components,
        eigenvalues,
        explained_variance_ratio,
        projected,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

const MAX_ITERATIONS: usize = 300;
const SHIFT_TOLERANCE: f64 = 1e-9;

/// k-means++ seeding then Lloyd iterations until no centroid moves more
/// than 1e-9 or 300 iterations pass. An emptied cluster keeps its centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    check_points(points, 1)?;
    if k == 0 || k > points.len() {
        return Err(AnalysisError::TooManyClusters { k, n: points.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = d2.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 && target < *w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
    }

    let dim = points[0].len();
    let mut labels = vec![0; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut inertia = 0.0;
        for (l, p) in labels.iter_mut().zip(points) {
            let (c, d) = nearest(p, &centroids);
            *l = c;
            inertia += d;
        }
        history.push(inertia);
        if iterations == MAX_ITERATIONS {
            break;
        }
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n == 0 {
                continue;
            }
            let next: Vec<f64> = s.into_iter().map(|x| x / n as f64).collect();
            shift = shift.max(sq_dist(c, &next).sqrt());
            *c = next;
        }
        if shift < SHIFT_TOLERANCE {
            // one more assignment against the final centroids
            let inertia = labels
                .iter_mut()
                .zip(points)
                .map(|(l, p)| {
                    let (c, d) = nearest(p, &centroids);
                    *l = c;
                    d
                })
                .sum();
            history.push(inertia);
            break;
        }
    }
    Ok(KMeans {
        labels,
        inertia: *history.last().expect("at least one pass"),
        centroids,
        inertia_history: history,
        iterations,
    })
}
