//! Principal-component projection of embeddings onto the plane.
//!
//! Vectors are mean-centered and projected onto the top two eigenvectors
//! of the sample covariance. The eigenproblem is solved on whichever of
//! the `n x n` Gram matrix or the `d x d` scatter matrix is smaller; both
//! share the nonzero spectrum. Each axis is oriented so that its
//! largest-magnitude component (first one on ties) is positive.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::id::EntityId;
use crate::meta::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub entity_id: EntityId,
    pub x: f64,
    pub y: f64,
    pub mode: Mode,
}

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric `n x n` row-major matrix by cyclic
/// Jacobi rotations. Returns eigenvalues in descending order and the
/// matching unit eigenvectors as rows.
pub fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(a.len(), n * n, "matrix must be n x n");
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum();
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off == 0.0 || off <= 1e-32 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if libm::fabs(theta) > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap_or(core::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
        .collect();
    (values, vectors)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Flips `axis` so its largest-magnitude component is positive.
pub fn orient(axis: &mut [f64]) {
    let mut best = 0;
    for (i, c) in axis.iter().enumerate() {
        if libm::fabs(*c) > libm::fabs(axis[best]) {
            best = i;
        }
    }
    if axis.get(best).is_some_and(|c| *c < 0.0) {
        axis.iter_mut().for_each(|c| *c = -*c);
    }
}

/// Projects equal-length vectors onto their top two principal axes.
pub fn project_2d(vectors: &[&[f64]]) -> Vec<(f64, f64)> {
    let n = vectors.len();
    if n <= 1 {
        return vec![(0.0, 0.0); n];
    }
    let d = vectors[0].len();
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    let (values, axes) = principal_axes(&centered, d, 2);
    let trace: f64 = centered.iter().map(|r| dot(r, r)).sum();
    let tol = f64::max(1e-12 * trace, 1e-24);

    let coord = |k: usize, row: &[f64]| -> f64 {
        match (values.get(k), axes.get(k)) {
            (Some(&lambda), Some(axis)) if lambda > tol => dot(row, axis),
            _ => 0.0,
        }
    };
    centered.iter().map(|r| (coord(0, r), coord(1, r))).collect()
}

/// Top `count` eigenvalues of `XᵀX` with oriented unit axes in the input space.
fn principal_axes(x: &[Vec<f64>], d: usize, count: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = x.len();
    let (values, mut axes) = if n <= d {
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let g = dot(&x[i], &x[j]);
                gram[i * n + j] = g;
                gram[j * n + i] = g;
            }
        }
        let (values, vecs) = symmetric_eigen(gram, n);
        // map each Gram eigenvector u to the input-space axis Xᵀu
        let axes = vecs
            .iter()
            .take(count)
            .map(|u| {
                let mut axis = vec![0.0; d];
                for (row, ui) in x.iter().zip(u) {
                    for (a, r) in axis.iter_mut().zip(row) {
                        *a += ui * r;
                    }
                }
                let norm = libm::sqrt(dot(&axis, &axis));
                if norm > 0.0 {
                    axis.iter_mut().for_each(|a| *a /= norm);
                }
                axis
            })
            .collect::<Vec<_>>();
        (values, axes)
    } else {
        let mut scatter = vec![0.0; d * d];
        for row in x {
            for i in 0..d {
                for j in i..d {
                    scatter[i * d + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                scatter[i * d + j] = scatter[j * d + i];
            }
        }
        let (values, vecs) = symmetric_eigen(scatter, d);
        (values, vecs.into_iter().take(count).collect())
    };
    axes.iter_mut().for_each(|a| orient(a));
    (values, axes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1
        let (vals, vecs) = symmetric_eigen(vec![2.0, 1.0, 1.0, 2.0], 2);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs[0][0].abs() - r).abs() < 1e-12 && (vecs[0][1].abs() - r).abs() < 1e-12);
    }

    #[test]
    fn jacobi_satisfies_eigen_equation() {
        let n = 6;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = ((i * 7 + j * 3) % 5) as f64 + ((j * 7 + i * 3) % 5) as f64;
            }
        }
        let (vals, vecs) = symmetric_eigen(m.clone(), n);
        for (lambda, v) in vals.iter().zip(&vecs) {
            for i in 0..n {
                let av: f64 = (0..n).map(|j| m[i * n + j] * v[j]).sum();
                assert!((av - lambda * v[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_point_at_origin() {
        assert_eq!(project_2d(&[&[1.0, 0.0, 0.0]]), vec![(0.0, 0.0)]);
    }

    #[test]
    fn duplicated_points_coincide_at_origin() {
        let v = [0.6, 0.8, 0.0];
        let out = project_2d(&[&v, &v, &v]);
        assert!(out.iter().all(|p| *p == (0.0, 0.0)));
    }

    #[test]
    fn collinear_points_have_zero_second_coordinate() {
        let pts: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 2.0 * i as f64, 0.0]).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let out = project_2d(&refs);
        assert!(out.iter().all(|p| p.1 == 0.0));
        // orientation: largest axis component positive, so x grows with i
        assert!(out[3].0 > out[0].0);
        let spread = out[3].0 - out[0].0;
        assert!((spread - 3.0 * 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gram_and_scatter_routes_agree() {
        // 5 points in 3 dims takes the scatter route; the first 3 take the Gram route
        let pts: Vec<Vec<f64>> = vec![
            vec![1.0, 0.2, 0.1],
            vec![0.3, 1.5, -0.2],
            vec![-0.7, 0.4, 0.9],
            vec![0.2, -1.1, 0.3],
            vec![0.9, 0.9, -0.8],
        ];
        let centered = |rows: &[Vec<f64>]| {
            let n = rows.len() as f64;
            let mean: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
            rows.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect::<Vec<Vec<f64>>>()
        };
        let c = centered(&pts);
        let (v_scatter, a_scatter) = principal_axes(&c, 3, 2);
        // force the Gram route by padding the dimension
        let padded: Vec<Vec<f64>> = c.iter().map(|r| { let mut p = r.clone(); p.extend([0.0; 3]); p }).collect();
        let (v_gram, a_gram) = principal_axes(&padded, 6, 2);
        for k in 0..2 {
            assert!((v_scatter[k] - v_gram[k]).abs() < 1e-10);
            for j in 0..3 {
                assert!((a_scatter[k][j] - a_gram[k][j]).abs() < 1e-9);
            }
        }
    }
}
