//! Dense row-major feature storage and small vector helpers.
//!
//! Feature vectors live in the vision-language embedding space (dimension
//! `D_l`) and are compared by cosine similarity, so unit length is the
//! working invariant throughout the crate.

/// N x D row-major matrix of f64 features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "FeatureMatrix::from_rows on empty input");
        let dim = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { dim, data }
    }

    pub fn from_flat(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * dim);
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn set_row(&mut self, i: usize, values: &[f64]) {
        self.row_mut(i).copy_from_slice(values);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `a` to unit length in place. Returns false (leaving `a` untouched)
/// when the norm is below `min_norm`.
pub fn normalize(a: &mut [f64], min_norm: f64) -> bool {
    let n = norm(a);
    if n < min_norm {
        return false;
    }
    let inv = 1.0 / n;
    for x in a.iter_mut() {
        *x *= inv;
    }
    true
}

pub fn is_unit(a: &[f64], tol: f64) -> bool {
    (norm(a) - 1.0).abs() <= tol
}

/// Cosine similarity of two unit vectors is their dot product; this variant
/// tolerates slightly-off-unit inputs.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}
