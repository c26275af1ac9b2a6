//! PCA normal estimation for clouds that arrive without normals.

use super::{knn_indices, CameraView, PrimitiveCloud};
use nalgebra::{Matrix3, Point3, Vector3};

const DEGENERATE_EIGENVALUE: f64 = 1e-18;

#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub normals: Vec<Vector3<f64>>,
    /// true where the neighborhood covariance was degenerate and the normal
    /// fell back to +z
    pub degenerate: Vec<bool>,
}

/// Smallest-eigenvalue eigenvector of the k-neighborhood covariance, sign
/// fixed so the normal points toward the centroid of the observing cameras
/// (or +z when there are none). Degenerate neighborhoods get +z and a flag.
pub fn estimate_normals(cloud: &PrimitiveCloud, k: usize, cams: &[CameraView]) -> NormalEstimate {
    assert!(k >= 3, "normal estimation needs k >= 3");
    assert!(cloud.len() > k, "need more points than k");

    let cam_centroid = if cams.is_empty() {
        None
    } else {
        let mut c = Vector3::zeros();
        for cam in cams {
            c += cam.center().coords;
        }
        Some(Point3::from(c / cams.len() as f64))
    };

    let neighbor_lists = knn_indices(cloud.positions(), k);
    let mut normals = Vec::with_capacity(cloud.len());
    let mut degenerate = Vec::with_capacity(cloud.len());

    for (i, neighbors) in neighbor_lists.iter().enumerate() {
        let p = cloud.position(i);
        let mut mean = p.coords;
        for &j in neighbors {
            mean += cloud.position(j as usize).coords;
        }
        mean /= (neighbors.len() + 1) as f64;

        let mut cov = Matrix3::zeros();
        let mut accumulate = |q: Point3<f64>| {
            let d = q.coords - mean;
            cov += d * d.transpose();
        };
        accumulate(p);
        for &j in neighbors {
            accumulate(cloud.position(j as usize));
        }

        let eig = cov.symmetric_eigen();
        let (mut min_idx, mut min_val) = (0usize, eig.eigenvalues[0]);
        for a in 1..3 {
            if eig.eigenvalues[a] < min_val {
                min_idx = a;
                min_val = eig.eigenvalues[a];
            }
        }

        // covariance trace ~0 means all samples coincide
        if cov.trace() < DEGENERATE_EIGENVALUE || !min_val.is_finite() {
            normals.push(Vector3::z());
            degenerate.push(true);
            continue;
        }

        let mut n = eig.eigenvectors.column(min_idx).into_owned();
        let norm = n.norm();
        if norm < 1e-12 {
            normals.push(Vector3::z());
            degenerate.push(true);
            continue;
        }
        n /= norm;

        match cam_centroid {
            Some(c) => {
                if n.dot(&(c - p)) < 0.0 {
                    n = -n;
                }
            }
            None => {
                if n.z < 0.0 {
                    n = -n;
                }
            }
        }
        normals.push(n);
        degenerate.push(false);
    }

    NormalEstimate { normals, degenerate }
}
