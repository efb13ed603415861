//! Uniform partitions of a compact 1D domain into closed cells.
//!
//! Cells are indexed from zero. A point on the vertex shared by cells `c` and
//! `c + 1` belongs to cell `c` (the lowest index whose closed cell contains it).

use serde::{Deserialize, Serialize};

use crate::error::{DifwError, Result};

/// Compact interval `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(DifwError::invalid(format!(
                "domain bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Domain { x_min, x_max })
    }

    /// The canonical unit interval.
    pub fn unit() -> Self {
        Domain {
            x_min: 0.0,
            x_max: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Affine map from this domain onto `[0, 1]`.
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.x_min) / self.width()
    }

    /// Inverse of [`Domain::normalize`].
    pub fn denormalize(&self, u: f64) -> f64 {
        self.x_min + u * self.width()
    }

    /// `n` evenly spaced points covering the domain, endpoints included.
    pub fn uniform_grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.x_min],
            _ => {
                let step = self.width() / (n - 1) as f64;
                (0..n)
                    .map(|i| {
                        if i == n - 1 {
                            self.x_max
                        } else {
                            self.x_min + step * i as f64
                        }
                    })
                    .collect()
            }
        }
    }
}

impl Default for Domain {
    fn default() -> Self {
        Domain::unit()
    }
}

/// Direction of travel used to select a cell's exit vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Nonnegative velocity.
    Forward,
    /// Negative velocity.
    Backward,
}

impl Direction {
    pub fn of_velocity(v: f64) -> Self {
        if v >= 0.0 {
            Direction::Forward
        } else {
            Direction::Backward
        }
    }
}

/// Partition of a [`Domain`] into `n_cells` closed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Tessellation {
    domain: Domain,
    vertices: Vec<f64>,
    inv_spacing: f64,
}

/// JSON form used by configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TessellationSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Tessellation {
    /// Uniform partition of `domain` into `n_cells` cells.
    pub fn uniform(domain: Domain, n_cells: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(DifwError::invalid("a tessellation needs at least one cell"));
        }
        let domain = Domain::new(domain.x_min, domain.x_max)?;
        let vertices = domain.uniform_grid(n_cells + 1);
        Ok(Tessellation {
            domain,
            vertices,
            inv_spacing: n_cells as f64 / domain.width(),
        })
    }

    /// Uniform partition of the unit interval.
    pub fn unit(n_cells: usize) -> Result<Self> {
        Self::uniform(Domain::unit(), n_cells)
    }

    pub fn from_spec(spec: TessellationSpec) -> Result<Self> {
        Self::uniform(Domain::new(spec.x_min, spec.x_max)?, spec.n_cells)
    }

    pub fn spec(&self) -> TessellationSpec {
        TessellationSpec {
            x_min: self.domain.x_min,
            x_max: self.domain.x_max,
            n_cells: self.n_cells(),
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn n_cells(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Number of vertices, `n_cells + 1`.
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Number of vertices shared by two cells, `n_cells - 1`.
    pub fn n_shared_vertices(&self) -> usize {
        self.vertices.len() - 2
    }

    pub fn vertices(&self) -> &[f64] {
        &self.vertices
    }

    pub fn cell_bounds(&self, c: usize) -> (f64, f64) {
        (self.vertices[c], self.vertices[c + 1])
    }

    pub fn cell_center(&self, c: usize) -> f64 {
        0.5 * (self.vertices[c] + self.vertices[c + 1])
    }

    /// Index of the lowest cell containing `x`.
    pub fn cell_index(&self, x: f64) -> Result<usize> {
        if !self.domain.contains(x) {
            return Err(DifwError::OutOfDomain {
                x,
                x_min: self.domain.x_min,
                x_max: self.domain.x_max,
            });
        }
        Ok(self.cell_index_unchecked(x))
    }

    /// Same as [`Tessellation::cell_index`] for a point already known to be in
    /// the domain.
    #[inline]
    pub(crate) fn cell_index_unchecked(&self, x: f64) -> usize {
        let last = self.n_cells() - 1;
        let guess = ((x - self.domain.x_min) * self.inv_spacing).ceil() - 1.0;
        let mut c = if guess <= 0.0 {
            0
        } else {
            (guess as usize).min(last)
        };
        // the guess can be off by one near vertices; settle against the stored vertices
        while c > 0 && x <= self.vertices[c] {
            c -= 1;
        }
        while c < last && x > self.vertices[c + 1] {
            c += 1;
        }
        c
    }

    /// Vertex through which a trajectory leaves cell `c` in `direction`.
    pub fn exit_boundary(&self, c: usize, direction: Direction) -> Result<f64> {
        if c >= self.n_cells() {
            return Err(DifwError::invalid(format!(
                "cell index {c} out of range for {} cells",
                self.n_cells()
            )));
        }
        Ok(match direction {
            Direction::Forward => self.vertices[c + 1],
            Direction::Backward => self.vertices[c],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_vertices() {
        let t = Tessellation::unit(4).unwrap();
        assert_eq!(t.vertices(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(t.n_vertices(), 5);
        assert_eq!(t.n_shared_vertices(), 3);

        let t = Tessellation::unit(1).unwrap();
        assert_eq!(t.vertices(), &[0.0, 1.0]);
        assert_eq!(t.n_shared_vertices(), 0);

        let t = Tessellation::uniform(Domain::new(-1.0, 1.0).unwrap(), 2).unwrap();
        assert_eq!(t.vertices(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_cells_rejected() {
        assert!(matches!(
            Tessellation::unit(0),
            Err(DifwError::InvalidArgument(_))
        ));
        assert!(Domain::new(1.0, 1.0).is_err());
    }

    #[test]
    fn membership_follows_min_rule() {
        let t = Tessellation::unit(4).unwrap();
        assert_eq!(t.cell_index(0.3).unwrap(), 1);
        assert_eq!(t.cell_index(0.25).unwrap(), 0);
        assert_eq!(t.cell_index(1.0).unwrap(), 3);
        assert_eq!(t.cell_index(0.0).unwrap(), 0);
        assert_eq!(t.cell_index(0.5).unwrap(), 1);
        assert_eq!(t.cell_index(0.75).unwrap(), 2);
        assert!(matches!(
            t.cell_index(1.0 + 1e-12),
            Err(DifwError::OutOfDomain { .. })
        ));
        assert!(t.cell_index(-0.1).is_err());
    }

    #[test]
    fn membership_on_awkward_spacing() {
        // 1/3-spaced vertices are not exactly representable
        let t = Tessellation::unit(3).unwrap();
        for (c, &v) in t.vertices().iter().enumerate().skip(1) {
            assert_eq!(t.cell_index(v).unwrap(), c - 1);
        }
        for c in 0..3 {
            let (lo, hi) = t.cell_bounds(c);
            assert_eq!(t.cell_index(0.5 * (lo + hi)).unwrap(), c);
        }
    }

    #[test]
    fn exit_boundaries() {
        let t = Tessellation::unit(4).unwrap();
        assert_eq!(t.exit_boundary(1, Direction::Forward).unwrap(), 0.5);
        assert_eq!(t.exit_boundary(1, Direction::Backward).unwrap(), 0.25);
        let t1 = Tessellation::unit(1).unwrap();
        assert_eq!(t1.exit_boundary(0, Direction::Forward).unwrap(), 1.0);
        assert!(t.exit_boundary(4, Direction::Forward).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let t = Tessellation::uniform(Domain::new(-2.0, 3.0).unwrap(), 5).unwrap();
        let json = serde_json::to_string(&t.spec()).unwrap();
        assert_eq!(json, r#"{"x_min":-2.0,"x_max":3.0,"n_cells":5}"#);
        let back: TessellationSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(Tessellation::from_spec(back).unwrap(), t);
    }

    #[test]
    fn cells_cover_domain() {
        for n in [1, 2, 7, 16, 64] {
            let t = Tessellation::unit(n).unwrap();
            let v = t.vertices();
            assert_eq!(v[0], 0.0);
            assert_eq!(v[n], 1.0);
            assert!(v.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
