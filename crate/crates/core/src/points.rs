use serde::{Deserialize, Serialize};

/// A flat buffer of `d`-dimensional points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "points need a positive dimension");
        Points {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        assert!(dim > 0, "points need a positive dimension");
        Points {
            dim,
            coords: Vec::with_capacity(dim * n),
        }
    }

    /// Wraps an existing buffer whose length must be a multiple of `dim`.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Self {
        assert!(dim > 0 && coords.len() % dim == 0);
        Points { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn push(&mut self, point: &[f64]) {
        assert_eq!(point.len(), self.dim);
        self.coords.extend_from_slice(point);
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// First `n` points.
    pub fn prefix(&self, n: usize) -> Points {
        Points {
            dim: self.dim,
            coords: self.coords[..n * self.dim].to_vec(),
        }
    }
}
