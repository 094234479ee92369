//! The evaluation map alpha = (F_1,...,F_n): M -> R^n, its voxelized image K,
//! the multiplicity estimate n_alpha, and the area-formula / degree checks.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::bracket::{bracket, l1_norm, BracketReport};
use crate::domain::{check_bracket_inputs, GridField, TorusDomain};
use crate::error::{Error, Result};

/// Point cloud alpha(M), one point per (super)grid node, flat storage with
/// stride n, row-major in the supersampled grid (axis 0 slowest).
#[derive(Clone, Debug)]
pub struct EvaluationSample {
    pub domain: TorusDomain,
    pub supersample: usize,
    pub coords: Vec<f64>,
}

impl EvaluationSample {
    pub fn grid_side(&self) -> usize {
        self.domain.resolution * self.supersample
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.domain.n
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, k: usize) -> [f64; 3] {
        let n = self.domain.n;
        let mut p = [0.0; 3];
        p[..n].copy_from_slice(&self.coords[k * n..(k + 1) * n]);
        p
    }

    /// Effective source cell volume per sample point.
    pub fn cell_volume(&self) -> f64 {
        let h = self.domain.spacing() / self.supersample as f64;
        h.powi(self.domain.n as i32)
    }

    fn flat(&self, idx: [usize; 3]) -> usize {
        let side = self.grid_side();
        let mut k = 0;
        for i in 0..self.domain.n {
            k = k * side + idx[i];
        }
        k
    }

    fn multi(&self, mut k: usize) -> [usize; 3] {
        let side = self.grid_side();
        let mut idx = [0usize; 3];
        for i in (0..self.domain.n).rev() {
            idx[i] = k % side;
            k /= side;
        }
        idx
    }

    /// Largest per-coordinate jump between samples at adjacent supergrid
    /// nodes. Drives the multiplicity undersampling guard. The periodic seam
    /// is excluded so chart-style synthetic samples can be analyzed; for
    /// periodic fields the seam jump matches the interior ones anyway.
    pub fn max_adjacent_jump(&self) -> f64 {
        let n = self.domain.n;
        let side = self.grid_side();
        let mut worst = 0.0f64;
        for k in 0..self.len() {
            let idx = self.multi(k);
            let p = self.point(k);
            for axis in 0..n {
                if idx[axis] + 1 == side {
                    continue;
                }
                let mut j = idx;
                j[axis] = idx[axis] + 1;
                let q = self.point(self.flat(j));
                for i in 0..n {
                    worst = worst.max((p[i] - q[i]).abs());
                }
            }
        }
        worst
    }
}

/// Evaluate alpha at every node of the supersampled grid. Supersampled nodes
/// are filled by multilinear interpolation of the stored grid values, so
/// file-loaded fields behave identically to catalog fields.
pub fn evaluate_map(fields: &[&GridField], supersample: usize) -> Result<EvaluationSample> {
    let domain = check_bracket_inputs(fields)?;
    if supersample == 0 {
        return Err(Error::InvalidParameter("supersample factor must be >= 1".into()));
    }
    let n = domain.n;
    let side = domain.resolution * supersample;
    let total = side.pow(n as u32);
    let h_eff = domain.spacing() / supersample as f64;
    let mut coords = vec![0.0f64; total * n];
    let mut idx = [0usize; 3];
    for k in 0..total {
        let mut rem = k;
        for i in (0..n).rev() {
            idx[i] = rem % side;
            rem /= side;
        }
        if supersample == 1 {
            for (i, f) in fields.iter().enumerate() {
                coords[k * n + i] = f.at(idx);
            }
        } else {
            let mut p = [0.0f64; 3];
            for i in 0..n {
                p[i] = idx[i] as f64 * h_eff;
            }
            for (i, f) in fields.iter().enumerate() {
                coords[k * n + i] = f.interpolate(p);
            }
        }
    }
    Ok(EvaluationSample { domain, supersample, coords })
}

/// Compact subset of R^n as an axis-aligned voxel occupancy set.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelSet {
    pub n: usize,
    pub voxel_size: f64,
    pub origin: [f64; 3],
    pub indices: BTreeSet<[i32; 3]>,
}

impl VoxelSet {
    pub fn from_indices(
        n: usize,
        voxel_size: f64,
        origin: [f64; 3],
        indices: impl IntoIterator<Item = [i32; 3]>,
    ) -> Result<Self> {
        if !(voxel_size > 0.0) {
            return Err(Error::InvalidParameter("voxel size must be positive".into()));
        }
        Ok(Self { n, voxel_size, origin, indices: indices.into_iter().collect() })
    }

    pub fn measure(&self) -> f64 {
        self.indices.len() as f64 * self.voxel_size.powi(self.n as i32)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Axis-aligned box of one voxel: [lo, hi) per axis.
    pub fn voxel_box(&self, idx: &[i32; 3]) -> ([f64; 3], [f64; 3]) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for i in 0..self.n {
            lo[i] = self.origin[i] + idx[i] as f64 * self.voxel_size;
            hi[i] = lo[i] + self.voxel_size;
        }
        (lo, hi)
    }
}

fn voxel_key(n: usize, voxel_size: f64, p: &[f64; 3]) -> [i32; 3] {
    let mut key = [0i32; 3];
    for i in 0..n {
        key[i] = (p[i] / voxel_size).floor() as i32;
    }
    key
}

/// Voxelize the image of a sample, optionally dilating by `dilation` voxels
/// in the Chebyshev metric. Dilation is the conservative stand-in for image
/// features the finite sample may have missed.
pub fn voxelize_image(sample: &EvaluationSample, voxel_size: f64, dilation: u32) -> Result<VoxelSet> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(voxel_size > 0.0) {
        return Err(Error::InvalidParameter("voxel size must be positive".into()));
    }
    let n = sample.domain.n;
    let mut base: BTreeSet<[i32; 3]> = BTreeSet::new();
    for k in 0..sample.len() {
        base.insert(voxel_key(n, voxel_size, &sample.point(k)));
    }
    let indices = if dilation == 0 {
        base
    } else {
        let d = dilation as i32;
        let mut grown = BTreeSet::new();
        for idx in &base {
            let mut off = [-d; 3];
            loop {
                let mut v = *idx;
                for i in 0..n {
                    v[i] += off[i];
                }
                grown.insert(v);
                // odometer over the Chebyshev cube
                let mut axis = 0;
                loop {
                    if axis == n {
                        break;
                    }
                    off[axis] += 1;
                    if off[axis] <= d {
                        break;
                    }
                    off[axis] = -d;
                    axis += 1;
                }
                if axis == n {
                    break;
                }
            }
        }
        grown
    };
    VoxelSet::from_indices(n, voxel_size, [0.0; 3], indices)
}

/// Per-voxel multiplicity estimate with degeneracy flags.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VoxelMultiplicity {
    pub count: u32,
    /// Largest preimage component in the voxel, as a fraction of all samples.
    pub largest_component_fraction: f64,
    /// Set when a preimage component is n-dimensional rather than point-like
    /// (e.g. a constant map), so `count` is not a fiber cardinality.
    pub degenerate: bool,
}

/// Multiplicity function n_alpha estimated per voxel by counting connected
/// preimage components: samples landing in the voxel, grouped by source-grid
/// adjacency (periodic).
#[derive(Clone, Debug)]
pub struct MultiplicityGrid {
    pub n: usize,
    pub voxel_size: f64,
    pub origin: [f64; 3],
    pub counts: BTreeMap<[i32; 3], VoxelMultiplicity>,
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(len: usize) -> Self {
        Self { parent: (0..len as u32).collect() }
    }
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            self.parent[x as usize] = self.parent[self.parent[x as usize] as usize];
            x = self.parent[x as usize];
        }
        x
    }
    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra.max(rb) as usize] = ra.min(rb);
        }
    }
}

/// Fraction of all samples above which a single preimage component marks its
/// voxel as a degenerate (positive-measure) fiber.
const DEGENERATE_COMPONENT_FRACTION: f64 = 0.05;

pub fn multiplicity(sample: &EvaluationSample, voxel_size: f64) -> Result<MultiplicityGrid> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(voxel_size > 0.0) {
        return Err(Error::InvalidParameter("voxel size must be positive".into()));
    }
    let required = 2.0 * sample.max_adjacent_jump();
    if voxel_size < required {
        return Err(Error::Undersampled { voxel_size, required });
    }
    let n = sample.domain.n;
    let side = sample.grid_side();
    let total = sample.len();

    // Voxel id per sample.
    let mut voxel_of: Vec<u32> = Vec::with_capacity(total);
    let mut voxel_ids: HashMap<[i32; 3], u32> = HashMap::new();
    let mut voxel_keys: Vec<[i32; 3]> = Vec::new();
    for k in 0..total {
        let key = voxel_key(n, voxel_size, &sample.point(k));
        let next = voxel_keys.len() as u32;
        let id = *voxel_ids.entry(key).or_insert_with(|| {
            voxel_keys.push(key);
            next
        });
        voxel_of.push(id);
    }

    // Union source-adjacent samples that share a voxel.
    let mut uf = UnionFind::new(total);
    for k in 0..total {
        let idx = sample.multi(k);
        for axis in 0..n {
            let mut j = idx;
            j[axis] = (idx[axis] + 1) % side;
            let kj = sample.flat(j);
            if voxel_of[k] == voxel_of[kj] {
                uf.union(k as u32, kj as u32);
            }
        }
    }

    // Count component roots and sizes per voxel.
    let mut components: HashMap<(u32, u32), u64> = HashMap::new();
    for k in 0..total {
        let root = uf.find(k as u32);
        *components.entry((voxel_of[k], root)).or_insert(0) += 1;
    }
    let mut per_voxel: HashMap<u32, (u32, u64)> = HashMap::new();
    for ((vid, _root), size) in &components {
        let e = per_voxel.entry(*vid).or_insert((0, 0));
        e.0 += 1;
        e.1 = e.1.max(*size);
    }

    let mut counts = BTreeMap::new();
    for (vid, (count, largest)) in per_voxel {
        let frac = largest as f64 / total as f64;
        counts.insert(
            voxel_keys[vid as usize],
            VoxelMultiplicity {
                count,
                largest_component_fraction: frac,
                degenerate: frac > DEGENERATE_COMPONENT_FRACTION,
            },
        );
    }
    Ok(MultiplicityGrid { n, voxel_size, origin: [0.0; 3], counts })
}

impl MultiplicityGrid {
    /// Integral of the multiplicity estimate: sum of count * voxel_size^n over
    /// non-degenerate voxels.
    pub fn integral(&self) -> f64 {
        let cell = self.voxel_size.powi(self.n as i32);
        self.counts
            .values()
            .filter(|m| !m.degenerate)
            .map(|m| m.count as f64 * cell)
            .sum()
    }
}

/// Relative residual of the area-formula identity
/// integral(n_alpha) = || {F_1,...,F_n} ||_L1.
pub fn area_formula_check(
    fields: &[&GridField],
    sample: &EvaluationSample,
    voxel_size: f64,
) -> Result<f64> {
    let mult = multiplicity(sample, voxel_size)?;
    let l1 = l1_norm(&bracket(fields)?);
    Ok((mult.integral() - l1).abs() / l1.max(1.0))
}

/// Outcome of the degree-zero measure bound |K| <= epsilon (with slack for
/// dilation inflation).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegreeBound {
    pub ok: bool,
    pub measure: f64,
    pub epsilon: f64,
    pub slack: f64,
    pub note: Option<String>,
}

pub const DEGREE_BOUND_SLACK: f64 = 1.5;

pub fn degree_bound_check(voxels: &VoxelSet, report: &BracketReport) -> DegreeBound {
    let measure = voxels.measure();
    let epsilon = report.epsilon;
    let ok = measure <= epsilon * DEGREE_BOUND_SLACK;
    let note = if epsilon == 0.0 && !voxels.is_empty() {
        Some(
            "dilation floor: epsilon = 0 but a nonempty sample always occupies at least one voxel"
                .to_string(),
        )
    } else {
        None
    };
    DegreeBound { ok, measure, epsilon, slack: DEGREE_BOUND_SLACK, note }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::sample_field;

    fn unit2(res: usize) -> TorusDomain {
        TorusDomain::unit(2, res).unwrap()
    }

    #[test]
    fn constant_fields_map_to_single_point() {
        let d = unit2(16);
        let f = sample_field(d, "const 0").unwrap();
        let g = sample_field(d, "const 0").unwrap();
        let s = evaluate_map(&[&f, &g], 1).unwrap();
        assert_eq!(s.len(), 256);
        for k in 0..s.len() {
            assert_eq!(s.point(k)[..2], [0.0, 0.0]);
        }
    }

    #[test]
    fn sin_pair_node_values() {
        let d = unit2(64);
        let f = sample_field(d, "sin(2πx)").unwrap();
        let g = sample_field(d, "sin(2πy)").unwrap();
        let s = evaluate_map(&[&f, &g], 1).unwrap();
        // node (res/4, 0) -> (1, 0)
        let k = 16 * 64;
        let p = s.point(k);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn scaled_pair_stays_in_analytic_range() {
        let d = unit2(64);
        let f = sample_field(d, "0.001·sin(2πx)").unwrap();
        let g = sample_field(d, "sin(2πy)").unwrap();
        let s = evaluate_map(&[&f, &g], 2).unwrap();
        for k in 0..s.len() {
            let p = s.point(k);
            assert!(p[0].abs() <= 0.001 + 1e-12 && p[1].abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn single_point_voxelization() {
        let d = unit2(16);
        let s = EvaluationSample { domain: d, supersample: 1, coords: vec![0.5; 512] };
        let v = voxelize_image(&s, 0.1, 0).unwrap();
        assert_eq!(v.indices.len(), 1);
        assert!((v.measure() - 0.01).abs() < 1e-15);
        let v1 = voxelize_image(&s, 0.1, 1).unwrap();
        assert_eq!(v1.indices.len(), 9);
    }

    #[test]
    fn measure_is_exact_count_times_cell() {
        let idx = (0..25).map(|k| [k % 5, k / 5, 0]).collect::<Vec<_>>();
        let v = VoxelSet::from_indices(2, 0.2, [0.0; 3], idx).unwrap();
        assert!((v.measure() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thin_strip_measure_close_to_analytic() {
        // supersample enough that adjacent image samples move < 1 voxel,
        // otherwise row gaps undercount the strip
        let d = unit2(256);
        let f = sample_field(d, "0.001·sin(2πx)").unwrap();
        let g = sample_field(d, "sin(2πy)").unwrap();
        let s = evaluate_map(&[&f, &g], 16).unwrap();
        let v = voxelize_image(&s, 1.0 / 512.0, 0).unwrap();
        let ratio = v.measure() / 0.004;
        assert!((0.9..=3.0).contains(&ratio), "ratio = {ratio}");
        // Dilation is monotone in occupancy and measure.
        let v1 = voxelize_image(&s, 1.0 / 512.0, 1).unwrap();
        assert!(v1.indices.is_superset(&v.indices));
        assert!(v1.measure() >= v.measure());
    }

    #[test]
    fn injective_chart_has_multiplicity_one() {
        // Synthetic sample: an affine injective patch on a chart.
        let d = unit2(64);
        let side = 64usize;
        let mut coords = Vec::with_capacity(side * side * 2);
        for i in 0..side {
            for j in 0..side {
                coords.push(i as f64 / side as f64);
                coords.push(j as f64 / side as f64);
            }
        }
        let s = EvaluationSample { domain: d, supersample: 1, coords };
        let m = multiplicity(&s, 1.0 / 8.0).unwrap();
        for (idx, vm) in &m.counts {
            if idx[0] > 0 && idx[0] < 7 && idx[1] > 0 && idx[1] < 7 {
                assert_eq!(vm.count, 1, "voxel {idx:?}");
                assert!(!vm.degenerate);
            }
        }
    }

    #[test]
    fn fold_map_has_multiplicity_four_in_interior() {
        let d = unit2(256);
        let f = sample_field(d, "sin(2πx)").unwrap();
        let g = sample_field(d, "sin(2πy)").unwrap();
        let s = evaluate_map(&[&f, &g], 2).unwrap();
        let m = multiplicity(&s, 1.0 / 32.0).unwrap();
        // Interior voxels well away from the fold lines |z_i| = 1.
        let mut checked = 0;
        for (idx, vm) in &m.counts {
            let (lo, hi) = (idx[0].min(idx[1]), idx[0].max(idx[1]));
            if lo >= -20 && hi <= 19 {
                assert_eq!(vm.count, 4, "voxel {idx:?}");
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn constant_map_is_degenerate() {
        let d = unit2(64);
        let f = sample_field(d, "const 0.25").unwrap();
        let g = sample_field(d, "const 0.25").unwrap();
        let s = evaluate_map(&[&f, &g], 1).unwrap();
        let m = multiplicity(&s, 0.125).unwrap();
        assert_eq!(m.counts.len(), 1);
        assert!(m.counts.values().next().unwrap().degenerate);
        assert_eq!(m.integral(), 0.0);
    }

    #[test]
    fn undersampling_guard_fires() {
        let d = unit2(64);
        let f = sample_field(d, "sin(2πx)").unwrap();
        let g = sample_field(d, "sin(2πy)").unwrap();
        let s = evaluate_map(&[&f, &g], 1).unwrap();
        // jump ~ 2 pi / 64 ~ 0.098; a voxel below 2x that must be rejected.
        assert!(matches!(multiplicity(&s, 0.1), Err(Error::Undersampled { .. })));
        assert!(multiplicity(&s, 0.25).is_ok());
    }

    #[test]
    fn area_formula_constant_fields() {
        let d = unit2(64);
        let f = sample_field(d, "const 1").unwrap();
        let g = sample_field(d, "const 2").unwrap();
        let s = evaluate_map(&[&f, &g], 1).unwrap();
        let r = area_formula_check(&[&f, &g], &s, 0.125).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn area_formula_residual_small_for_fold_map() {
        let d = unit2(256);
        let f = sample_field(d, "sin(2πx)").unwrap();
        let g = sample_field(d, "sin(2πy)").unwrap();
        let s = evaluate_map(&[&f, &g], 2).unwrap();
        let r = area_formula_check(&[&f, &g], &s, 1.0 / 32.0).unwrap();
        assert!(r <= 0.06, "residual = {r}");
    }

    #[test]
    fn degree_bound_on_fold_map() {
        let d = unit2(256);
        let f = sample_field(d, "sin(2πx)").unwrap();
        let g = sample_field(d, "sin(2πy)").unwrap();
        let s = evaluate_map(&[&f, &g], 1).unwrap();
        let v = voxelize_image(&s, 1.0 / 64.0, 0).unwrap();
        let b = bracket(&[&f, &g]).unwrap();
        let report = BracketReport::from_field(&b);
        let db = degree_bound_check(&v, &report);
        assert!(db.ok);
        // the degree-zero inequality for the undilated estimate
        assert!(2.0 * v.measure() <= report.l1_norm * 1.05);
    }

    #[test]
    fn degree_bound_degenerate_note() {
        let d = unit2(64);
        let f = sample_field(d, "const 1").unwrap();
        let g = sample_field(d, "const 1").unwrap();
        let s = evaluate_map(&[&f, &g], 1).unwrap();
        let v = voxelize_image(&s, 1.0 / 64.0, 1).unwrap();
        let b = bracket(&[&f, &g]).unwrap();
        let db = degree_bound_check(&v, &BracketReport::from_field(&b));
        assert!(!db.ok);
        assert!(db.note.unwrap().contains("dilation floor"));
    }

    #[test]
    fn empty_sample_rejected() {
        let d = unit2(16);
        let s = EvaluationSample { domain: d, supersample: 1, coords: vec![] };
        assert!(matches!(voxelize_image(&s, 0.1, 0), Err(Error::EmptySample)));
    }
}
