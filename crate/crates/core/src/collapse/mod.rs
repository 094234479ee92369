//! The measure-collapsing map phi = gamma^{-1} (psi . Phi) (gamma x): rescale
//! the image set K to unit measure, clear a 2 eps ball in every lattice cube
//! K meets with a time-1 flow Phi, collapse each cube onto the lattice
//! skeleton with psi, and scale back. The image of K ends up in a measure-zero
//! set while no point moves farther than one scaled cube.

pub mod clearing;
pub mod cube;
pub mod mollifier;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::evalmap::VoxelSet;
use clearing::{find_free_ball, rk4_time_one, special_velocity, ClearingField, ClipBox, FreeBall};
use cube::{cube_collapse_psi, IntegerCube};
use mollifier::DEFAULT_LAMBDA_CAP;

/// Tunable parameters of the collapse construction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CollapseParams {
    /// Requested collapse radius; the construction may shrink it. At most 1/6.
    pub eps: f64,
    /// Mollifier sharpness.
    pub lambda_cap: f64,
    /// RK4 steps for the time-1 clearing flow.
    pub flow_steps: usize,
    /// Multiplicative shrink applied to eps when a verification retry fires.
    pub retry_shrink: f64,
}

impl Default for CollapseParams {
    fn default() -> Self {
        Self { eps: 1.0 / 6.0, lambda_cap: DEFAULT_LAMBDA_CAP, flow_steps: 128, retry_shrink: 0.7 }
    }
}

impl CollapseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0 / 6.0) {
            return Err(Error::InvalidParameter(format!(
                "collapse radius {} outside (0, 1/6]",
                self.eps
            )));
        }
        if self.flow_steps < 16 {
            return Err(Error::InvalidParameter(format!(
                "flow steps {} below the minimum of 16",
                self.flow_steps
            )));
        }
        if !(self.retry_shrink > 0.0 && self.retry_shrink < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "retry shrink {} outside (0, 1)",
                self.retry_shrink
            )));
        }
        if !(self.lambda_cap > 0.0) {
            return Err(Error::InvalidParameter("mollifier sharpness must be positive".into()));
        }
        Ok(())
    }
}

/// How the map acts: identity when K already has measure zero; per-cube
/// clearing flows in the generic case; a radial corner contraction when a
/// single cube is fully saturated by K.
#[derive(Clone, Debug)]
pub enum CollapseMode {
    Identity,
    Generic { clearing: BTreeMap<[i64; 3], ClearingField> },
    Special { cube: IntegerCube },
}

/// The fully constructed measure-collapsing map.
#[derive(Clone, Debug)]
pub struct CollapseMap {
    pub n: usize,
    pub gamma: f64,
    pub eps: f64,
    pub params: CollapseParams,
    pub mode: CollapseMode,
    pub retries_used: u32,
    pub measure: f64,
}

/// Serializable description of one cube's clearing data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CubeReport {
    pub nu: [i64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_c: Option<f64>,
    pub special: bool,
}

/// Serializable summary of a collapse map, embedded in reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CollapseSummary {
    pub mode: String,
    pub gamma: f64,
    pub eps: f64,
    pub retries_used: u32,
    pub measure: f64,
    pub cubes: Vec<CubeReport>,
}

impl CollapseMap {
    pub fn summary(&self) -> CollapseSummary {
        let (mode, cubes) = match &self.mode {
            CollapseMode::Identity => ("identity".to_string(), vec![]),
            CollapseMode::Generic { clearing } => (
                "generic".to_string(),
                clearing
                    .values()
                    .map(|c| CubeReport {
                        nu: c.cube.nu,
                        p: Some(c.p),
                        eps_c: Some(c.eps_c),
                        special: false,
                    })
                    .collect(),
            ),
            CollapseMode::Special { cube } => (
                "special".to_string(),
                vec![CubeReport { nu: cube.nu, p: None, eps_c: None, special: true }],
            ),
        };
        CollapseSummary {
            mode,
            gamma: self.gamma,
            eps: self.eps,
            retries_used: self.retries_used,
            measure: self.measure,
            cubes,
        }
    }

    /// Velocity of the clearing flow at a point in scaled coordinates.
    fn velocity(&self, x: &[f64; 3]) -> [f64; 3] {
        match &self.mode {
            CollapseMode::Identity => [0.0; 3],
            CollapseMode::Generic { clearing } => {
                let cube = IntegerCube::containing(self.n, x);
                match clearing.get(&cube.nu) {
                    Some(f) => f.velocity(x, self.eps, self.params.lambda_cap),
                    None => [0.0; 3],
                }
            }
            CollapseMode::Special { cube } => {
                special_velocity(&cube.nu, self.n, x, self.params.lambda_cap)
            }
        }
    }

    /// Time-1 clearing flow in scaled coordinates.
    pub fn flow(&self, x: &[f64; 3]) -> [f64; 3] {
        if matches!(self.mode, CollapseMode::Identity) {
            return *x;
        }
        rk4_time_one(x, self.params.flow_steps, |y| self.velocity(y))
    }

    /// Apply the full map phi(x) = gamma^{-1} psi(Phi(gamma x)).
    pub fn apply(&self, x: &[f64; 3]) -> Result<[f64; 3]> {
        if matches!(self.mode, CollapseMode::Identity) {
            return Ok(*x);
        }
        let n = self.n;
        let mut y = [0.0; 3];
        for i in 0..n {
            y[i] = self.gamma * x[i];
        }
        let y = self.flow(&y);
        let z = cube_collapse_psi(&y, n, self.eps, self.params.lambda_cap)?;
        let mut out = [0.0; 3];
        for i in 0..n {
            out[i] = z[i] / self.gamma;
        }
        Ok(out)
    }
}

/// Margin keeping the working radius strictly inside every clearance budget.
const EPS_STRICTNESS: f64 = 0.999;
const MAX_RETRIES: u32 = 8;
const VERIFY_POINT_CAP: usize = 20_000;
const VERIFY_INTERIOR_PER_VOXEL: usize = 4;
const VERIFY_SEED: u64 = 0x5eed_c1ea_4a11;

/// Integer cubes met by a voxel box [lo, hi] (positive-volume overlap).
fn cube_range(n: usize, lo: &[f64; 3], hi: &[f64; 3]) -> ([i64; 3], [i64; 3]) {
    let mut c_lo = [0i64; 3];
    let mut c_hi = [0i64; 3];
    for i in 0..n {
        c_lo[i] = lo[i].floor() as i64;
        c_hi[i] = (hi[i].ceil() as i64 - 1).max(c_lo[i]);
    }
    (c_lo, c_hi)
}

/// Build the measure-collapsing map for a voxelized image set.
pub fn build_collapse_map(k: &VoxelSet, params: &CollapseParams) -> Result<CollapseMap> {
    params.validate()?;
    let n = k.n;
    let measure = k.measure();
    if k.is_empty() {
        return Ok(CollapseMap {
            n,
            gamma: 1.0,
            eps: params.eps,
            params: *params,
            mode: CollapseMode::Identity,
            retries_used: 0,
            measure,
        });
    }
    let gamma = measure.powf(-1.0 / n as f64);

    // Scale K by gamma and bin its voxel boxes into the lattice cubes they meet.
    let mut per_cube: BTreeMap<[i64; 3], Vec<ClipBox>> = BTreeMap::new();
    for idx in &k.indices {
        let (lo, hi) = k.voxel_box(idx);
        let mut slo = [0.0; 3];
        let mut shi = [0.0; 3];
        for i in 0..n {
            slo[i] = lo[i] * gamma;
            shi[i] = hi[i] * gamma;
        }
        let (c_lo, c_hi) = cube_range(n, &slo, &shi);
        let mut nu = c_lo;
        loop {
            let mut clo = [0.0; 3];
            let mut chi = [0.0; 3];
            let mut nonempty = true;
            for i in 0..n {
                clo[i] = slo[i].max(nu[i] as f64);
                chi[i] = shi[i].min(nu[i] as f64 + 1.0);
                if !(chi[i] > clo[i]) {
                    nonempty = false;
                }
            }
            if nonempty {
                per_cube.entry(nu).or_default().push(ClipBox { lo: clo, hi: chi });
            }
            let mut axis = n;
            while axis > 0 {
                axis -= 1;
                nu[axis] += 1;
                if nu[axis] <= c_hi[axis] {
                    axis = usize::MAX;
                    break;
                }
                nu[axis] = c_lo[axis];
            }
            if axis != usize::MAX {
                break;
            }
        }
    }

    // Free-ball search per cube.
    let mut clearing: BTreeMap<[i64; 3], ClearingField> = BTreeMap::new();
    let mut full_cubes: Vec<IntegerCube> = Vec::new();
    for (nu, boxes) in &per_cube {
        let cube = IntegerCube { n, nu: *nu };
        match find_free_ball(&cube, boxes)? {
            FreeBall::Found { p, eps_c } => {
                clearing.insert(*nu, ClearingField { cube, p, eps_c });
            }
            FreeBall::FullCube => full_cubes.push(cube),
        }
    }

    let (mode, eps_budget) = if full_cubes.is_empty() {
        let min_eps_c =
            clearing.values().map(|c| c.eps_c).fold(f64::INFINITY, f64::min);
        (CollapseMode::Generic { clearing }, params.eps.min(min_eps_c))
    } else if per_cube.len() == 1 {
        (CollapseMode::Special { cube: full_cubes[0] }, params.eps)
    } else {
        return Err(Error::Construction(format!(
            "cube {:?} is saturated by K but {} other cubes also meet K; \
             no clearing construction applies",
            full_cubes[0].nu,
            per_cube.len() - 1
        )));
    };

    let mut map = CollapseMap {
        n,
        gamma,
        eps: eps_budget * EPS_STRICTNESS,
        params: *params,
        mode,
        retries_used: 0,
        measure,
    };

    // Verify the clearing postcondition on a dense sample of scaled K,
    // shrinking eps and retrying on any violation.
    let samples = verification_points(k, gamma);
    loop {
        if let CollapseMode::Generic { clearing } = &map.mode {
            for c in clearing.values() {
                c.validate(map.eps)?;
            }
        }
        match worst_ball_clearance(&map, &samples) {
            d if d >= 2.0 * map.eps * (1.0 - 1e-6) => break,
            d => {
                if map.retries_used >= MAX_RETRIES {
                    return Err(Error::Certificate(format!(
                        "clearing postcondition still violated after {MAX_RETRIES} retries \
                         (clearance {d:.6}, needed {:.6})",
                        2.0 * map.eps * (1.0 - 1e-6)
                    )));
                }
                map.retries_used += 1;
                map.eps *= params.retry_shrink;
            }
        }
    }
    Ok(map)
}

/// Corners, centers, and seeded interior points of the scaled voxels of K,
/// capped by deterministic striding.
fn verification_points(k: &VoxelSet, gamma: f64) -> Vec<[f64; 3]> {
    let n = k.n;
    let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
    let mut pts: Vec<[f64; 3]> = Vec::new();
    for idx in &k.indices {
        let (lo, hi) = k.voxel_box(idx);
        for corner in 0..(1usize << n) {
            let mut p = [0.0; 3];
            for i in 0..n {
                p[i] = gamma * if (corner >> i) & 1 == 1 { hi[i] } else { lo[i] };
            }
            pts.push(p);
        }
        let mut c = [0.0; 3];
        for i in 0..n {
            c[i] = gamma * 0.5 * (lo[i] + hi[i]);
        }
        pts.push(c);
        for _ in 0..VERIFY_INTERIOR_PER_VOXEL {
            let mut p = [0.0; 3];
            for i in 0..n {
                p[i] = gamma * (lo[i] + rng.gen::<f64>() * (hi[i] - lo[i]));
            }
            pts.push(p);
        }
    }
    if pts.len() > VERIFY_POINT_CAP {
        let stride = pts.len().div_ceil(VERIFY_POINT_CAP);
        pts = pts.into_iter().step_by(stride).collect();
    }
    pts
}

/// Smallest distance from the flowed sample points to the nearest cube-center
/// ball; the postcondition needs this to be at least 2 eps.
fn worst_ball_clearance(map: &CollapseMap, samples: &[[f64; 3]]) -> f64 {
    let n = map.n;
    let mut worst = f64::INFINITY;
    for x in samples {
        let y = map.flow(x);
        let m = IntegerCube::containing(n, &y).center();
        let d = (0..n).map(|i| (y[i] - m[i]).powi(2)).sum::<f64>().sqrt();
        worst = worst.min(d);
    }
    worst
}

/// Displacement certificate for a collapse map over the voxels of K.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DisplacementReport {
    /// Sup over samples of |x_i - phi(x)_i| per coordinate.
    pub per_coordinate_sup: Vec<f64>,
    /// The bound measure(K)^{1/n} the sups are certified against.
    pub bound: f64,
    /// Max over samples of the distance from gamma phi(x) to the lattice
    /// skeleton; absent for the identity map.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skeleton_max_distance: Option<f64>,
    pub sample_count: usize,
}

/// Evaluate the map on dense samples of K (voxel corners, centers, and seeded
/// interior points) and report the per-coordinate displacement sups together
/// with the distance of the scaled image from the lattice skeleton.
pub fn displacement_report(
    map: &CollapseMap,
    k: &VoxelSet,
    samples_per_voxel: usize,
    seed: u64,
) -> Result<DisplacementReport> {
    if samples_per_voxel < 8 {
        return Err(Error::InvalidParameter(format!(
            "samples_per_voxel {samples_per_voxel} below the minimum of 8"
        )));
    }
    let n = map.n;
    let identity = matches!(map.mode, CollapseMode::Identity);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sup = vec![0.0f64; n];
    let mut skel = 0.0f64;
    let mut count = 0usize;
    let mut visit = |x: &[f64; 3], map: &CollapseMap| -> Result<()> {
        let y = map.apply(x)?;
        for i in 0..n {
            sup[i] = sup[i].max((x[i] - y[i]).abs());
        }
        if !identity {
            let mut d = f64::INFINITY;
            for i in 0..n {
                let s = map.gamma * y[i];
                d = d.min((s - s.round()).abs());
            }
            skel = skel.max(d);
        }
        count += 1;
        Ok(())
    };
    for idx in &k.indices {
        let (lo, hi) = k.voxel_box(idx);
        for corner in 0..(1usize << n) {
            let mut p = [0.0; 3];
            for i in 0..n {
                p[i] = if (corner >> i) & 1 == 1 { hi[i] } else { lo[i] };
            }
            visit(&p, map)?;
        }
        let mut c = [0.0; 3];
        for i in 0..n {
            c[i] = 0.5 * (lo[i] + hi[i]);
        }
        visit(&c, map)?;
        for _ in 0..samples_per_voxel {
            let mut p = [0.0; 3];
            for i in 0..n {
                p[i] = lo[i] + rng.gen::<f64>() * (hi[i] - lo[i]);
            }
            visit(&p, map)?;
        }
    }
    Ok(DisplacementReport {
        per_coordinate_sup: sup,
        bound: map.measure.powf(1.0 / n as f64),
        skeleton_max_distance: if identity { None } else { Some(skel) },
        sample_count: count,
    })
}
