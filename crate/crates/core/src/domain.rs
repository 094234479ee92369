//! The flat n-torus and scalar fields sampled on its uniform grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat torus R^n / (period Z)^n with a uniform grid of `resolution` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusDomain {
    pub n: usize,
    pub resolution: usize,
    pub period: f64,
}

impl TorusDomain {
    pub fn new(n: usize, resolution: usize, period: f64) -> Result<Self> {
        if n != 2 && n != 3 {
            return Err(Error::InvalidDomain(format!("dimension must be 2 or 3, got {n}")));
        }
        if resolution < 16 || !resolution.is_power_of_two() {
            return Err(Error::InvalidDomain(format!(
                "resolution must be a power of two >= 16, got {resolution}"
            )));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidDomain(format!("period must be positive, got {period}")));
        }
        Ok(Self { n, resolution, period })
    }

    pub fn unit(n: usize, resolution: usize) -> Result<Self> {
        Self::new(n, resolution, 1.0)
    }

    /// Grid spacing per axis.
    pub fn spacing(&self) -> f64 {
        self.period / self.resolution as f64
    }

    /// Total node count, resolution^n.
    pub fn node_count(&self) -> usize {
        self.resolution.pow(self.n as u32)
    }

    /// Total volume of the torus.
    pub fn volume(&self) -> f64 {
        self.period.powi(self.n as i32)
    }

    /// Coordinates of the grid node with multi-index `idx` (only the first n entries used).
    pub fn node_point(&self, idx: [usize; 3]) -> [f64; 3] {
        let h = self.spacing();
        let mut p = [0.0; 3];
        for (i, x) in p.iter_mut().enumerate().take(self.n) {
            *x = idx[i] as f64 * h;
        }
        p
    }

    /// Flat row-major index, axis 0 slowest.
    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        let r = self.resolution;
        let mut k = 0;
        for i in 0..self.n {
            debug_assert!(idx[i] < r);
            k = k * r + idx[i];
        }
        k
    }

    /// Inverse of [`flat_index`].
    pub fn multi_index(&self, mut k: usize) -> [usize; 3] {
        let r = self.resolution;
        let mut idx = [0usize; 3];
        for i in (0..self.n).rev() {
            idx[i] = k % r;
            k /= r;
        }
        idx
    }

    /// Iterate all multi-indices in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let total = self.node_count();
        (0..total).map(move |k| self.multi_index(k))
    }
}

/// Real scalar field sampled at the grid nodes of a [`TorusDomain`], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub domain: TorusDomain,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(domain: TorusDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.node_count() {
            return Err(Error::InvalidDomain(format!(
                "value count {} does not match grid size {}",
                values.len(),
                domain.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDomain("field contains non-finite values".into()));
        }
        Ok(Self { domain, values })
    }

    pub fn constant(domain: TorusDomain, value: f64) -> Result<Self> {
        Self::new(domain, vec![value; domain.node_count()])
    }

    pub fn at(&self, idx: [usize; 3]) -> f64 {
        self.values[self.domain.flat_index(idx)]
    }

    /// Multilinear (periodic) interpolation at an arbitrary point of the torus.
    pub fn interpolate(&self, point: [f64; 3]) -> f64 {
        let d = &self.domain;
        let r = d.resolution;
        let h = d.spacing();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for i in 0..d.n {
            let t = (point[i] / h).rem_euclid(r as f64);
            let b = t.floor() as usize % r;
            base[i] = b;
            frac[i] = t - t.floor();
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d.n) {
            let mut idx = [0usize; 3];
            let mut w = 1.0;
            for i in 0..d.n {
                let bit = (corner >> i) & 1;
                idx[i] = (base[i] + bit) % r;
                w *= if bit == 1 { frac[i] } else { 1.0 - frac[i] };
            }
            acc += w * self.at(idx);
        }
        acc
    }
}

/// Require that all fields share one domain and that their count matches its dimension.
pub fn check_bracket_inputs(fields: &[&GridField]) -> Result<TorusDomain> {
    let first = fields.first().ok_or(Error::FieldCount { expected: 2, got: 0 })?;
    let domain = first.domain;
    if fields.iter().any(|f| f.domain != domain) {
        return Err(Error::DomainMismatch);
    }
    if fields.len() != domain.n {
        return Err(Error::FieldCount { expected: domain.n, got: fields.len() });
    }
    Ok(domain)
}
