//! Clearing flows: for each lattice cube that meets the (scaled) image set K,
//! find a ball in the cube interior free of K, and build a compactly
//! supported vector field whose time-1 flow transports the ball where the
//! cube-collapse map needs room. Cubes so saturated that no free ball exists
//! are reported as full cubes and handled by a radial contraction instead.

use serde::{Deserialize, Serialize};

use crate::collapse::cube::IntegerCube;
use crate::collapse::mollifier::{capsule_weight, sigma_profile};
use crate::error::{Error, Result};

/// Axis-aligned box, [lo, hi] per axis, used for K voxels clipped to a cube.
#[derive(Clone, Copy, Debug)]
pub struct ClipBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

/// Result of the free-ball search in one cube.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FreeBall {
    /// Ball B(p, 3 eps_c) avoids K and the cube walls.
    Found { p: [f64; 3], eps_c: f64 },
    /// K leaves no usable clearance anywhere in the cube.
    FullCube,
}

/// Probe resolutions per refinement stage.
fn probe_stages(n: usize) -> &'static [usize] {
    if n == 2 {
        &[64, 128, 256]
    } else {
        &[24, 48, 80]
    }
}

/// One-dimensional squared Euclidean distance transform (Felzenszwalb-
/// Huttenlocher lower envelope of parabolas).
fn dt1d(f: &[f64], out: &mut [f64]) {
    let m = f.len();
    let mut v = vec![0usize; m];
    let mut z = vec![0.0f64; m + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..m {
        if f[q] == f64::INFINITY {
            continue;
        }
        loop {
            let p = v[k];
            if f[p] == f64::INFINITY {
                // previous site unreachable: replace it
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
                continue;
            }
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if f[v[0]] == f64::INFINITY {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0usize;
    for q in 0..m {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        out[q] = d * d + f[p];
    }
}

/// n-dimensional squared distance transform over a res^n grid, in cell units.
fn edt(occ: &[bool], res: usize, n: usize) -> Vec<f64> {
    let total = occ.len();
    let mut dist: Vec<f64> = occ.iter().map(|&o| if o { 0.0 } else { f64::INFINITY }).collect();
    let mut line = vec![0.0f64; res];
    let mut out_line = vec![0.0f64; res];
    // strides: row-major, axis 0 slowest
    for axis in (0..n).rev() {
        let stride = res.pow((n - 1 - axis) as u32);
        let block = stride * res;
        for base in 0..total / block {
            for off in 0..stride {
                let start = base * block + off;
                for q in 0..res {
                    line[q] = dist[start + q * stride];
                }
                dt1d(&line, &mut out_line);
                for q in 0..res {
                    dist[start + q * stride] = out_line[q];
                }
            }
        }
    }
    dist
}

/// Search one lattice cube for the largest probe-grid ball avoiding both the
/// clipped K boxes and the cube walls. Returns the ball center, with
/// eps_c = clearance / 3, or the full-cube signal when even the finest probe
/// stage finds clearance below twice its own cell diameter.
pub fn find_free_ball(cube: &IntegerCube, boxes: &[ClipBox]) -> Result<FreeBall> {
    let n = cube.n;
    if boxes.is_empty() {
        return Err(Error::Construction(format!(
            "free-ball search called on cube {:?} that does not meet K",
            cube.nu
        )));
    }
    let mut nu = [0.0; 3];
    for i in 0..n {
        nu[i] = cube.nu[i] as f64;
    }
    for &res in probe_stages(n) {
        let cell = 1.0 / res as f64;
        let cell_diag = cell * (n as f64).sqrt();
        let total = res.pow(n as u32);
        let mut occ = vec![false; total];
        // conservative rasterization: mark every cell overlapping a box
        for b in boxes {
            let mut lo_c = [0usize; 3];
            let mut hi_c = [0usize; 3];
            for i in 0..n {
                let l = (b.lo[i] - nu[i]) / cell;
                let h = (b.hi[i] - nu[i]) / cell;
                lo_c[i] = (l.floor().max(0.0) as usize).min(res - 1);
                hi_c[i] = (h.ceil().min(res as f64) as usize).max(lo_c[i] + 1);
            }
            let mut idx = lo_c;
            loop {
                let mut k = 0;
                for i in 0..n {
                    k = k * res + idx[i];
                }
                occ[k] = true;
                let mut axis = n;
                while axis > 0 {
                    axis -= 1;
                    idx[axis] += 1;
                    if idx[axis] < hi_c[axis] {
                        axis = usize::MAX;
                        break;
                    }
                    idx[axis] = lo_c[axis];
                }
                if axis != usize::MAX {
                    break;
                }
            }
        }
        if occ.iter().all(|&o| o) {
            continue;
        }
        let dist = edt(&occ, res, n);
        let mut best_d = f64::NEG_INFINITY;
        let mut best_k = 0usize;
        for (k, &d2) in dist.iter().enumerate() {
            if occ[k] {
                continue;
            }
            // distance to K, shrunk by half a cell diagonal to stay conservative
            let d_k = d2.sqrt() * cell - cell_diag / 2.0;
            // distance from the cell center to the nearest cube wall
            let mut rem = k;
            let mut d_wall = f64::INFINITY;
            for _ in 0..n {
                let c = (rem % res) as f64 * cell + cell / 2.0;
                rem /= res;
                d_wall = d_wall.min(c.min(1.0 - c));
            }
            let d = d_k.min(d_wall);
            if d > best_d {
                best_d = d;
                best_k = k;
            }
        }
        if best_d >= 2.0 * cell_diag {
            let mut p = [0.0; 3];
            let mut rem = best_k;
            for i in (0..n).rev() {
                p[i] = nu[i] + (rem % res) as f64 * cell + cell / 2.0;
                rem /= res;
            }
            return Ok(FreeBall::Found { p, eps_c: best_d / 3.0 });
        }
    }
    Ok(FreeBall::FullCube)
}

/// Compactly supported field transporting B(p, 2 eps) to B(m, 2 eps) in unit
/// time: the constant vector m - p weighted by a capsule cutoff around the
/// transport segment (1 within distance 2 eps, 0 beyond 3 eps).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClearingField {
    pub cube: IntegerCube,
    /// Center of the free ball found in the cube.
    pub p: [f64; 3],
    /// Free-ball radius parameter of this cube; the global eps is the minimum
    /// over all cubes.
    pub eps_c: f64,
}

impl ClearingField {
    /// Validate the capsule invariants for a given working radius eps: both
    /// ball centers and the whole segment must keep the 3 eps sleeve inside
    /// the open cube, and the free ball must clear K by construction.
    pub fn validate(&self, eps: f64) -> Result<()> {
        let m = self.cube.center();
        for q in [&self.p, &m] {
            if self.cube.wall_distance(q) < 3.0 * eps {
                return Err(Error::Construction(format!(
                    "capsule sleeve of cube {:?} touches the cube walls (eps = {eps})",
                    self.cube.nu
                )));
            }
        }
        if eps > self.eps_c {
            return Err(Error::Construction(format!(
                "working radius {eps} exceeds the free-ball radius {} of cube {:?}",
                self.eps_c, self.cube.nu
            )));
        }
        Ok(())
    }

    pub fn velocity(&self, x: &[f64; 3], eps: f64, lambda_cap: f64) -> [f64; 3] {
        let n = self.cube.n;
        let m = self.cube.center();
        let d = dist_to_segment(n, x, &self.p, &m);
        let w = capsule_weight(d, eps, lambda_cap);
        let mut v = [0.0; 3];
        if w > 0.0 {
            for i in 0..n {
                v[i] = w * (m[i] - self.p[i]);
            }
        }
        v
    }
}

fn dist_to_segment(n: usize, x: &[f64; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let mut ab2 = 0.0;
    let mut dot = 0.0;
    for i in 0..n {
        let e = b[i] - a[i];
        ab2 += e * e;
        dot += (x[i] - a[i]) * e;
    }
    let t = if ab2 > 0.0 { (dot / ab2).clamp(0.0, 1.0) } else { 0.0 };
    let mut d2 = 0.0;
    for i in 0..n {
        let c = a[i] + t * (b[i] - a[i]);
        d2 += (x[i] - c) * (x[i] - c);
    }
    d2.sqrt()
}

/// Radial contraction field for a full cube: speed 2 sqrt(n) toward the cube
/// corner nu, with a smooth plateau profile that vanishes near the corner and
/// far away. Drains the entire cube into a small corner neighborhood.
pub fn special_velocity(nu: &[i64; 3], n: usize, x: &[f64; 3], lambda_cap: f64) -> [f64; 3] {
    let mut d = [0.0; 3];
    let mut r2 = 0.0;
    for i in 0..n {
        d[i] = nu[i] as f64 - x[i];
        r2 += d[i] * d[i];
    }
    let r = r2.sqrt();
    let mut v = [0.0; 3];
    if r == 0.0 {
        return v;
    }
    let speed = 2.0 * (n as f64).sqrt() * sigma_profile(r, n, lambda_cap);
    for i in 0..n {
        v[i] = speed * d[i] / r;
    }
    v
}

/// Integrate dx/dt = field(x) from t = 0 to 1 with classical RK4. Exact for
/// fields that are constant along the trajectory, which covers the ball
/// transport inside the capsule plateau.
pub fn rk4_time_one(x0: &[f64; 3], steps: usize, mut field: impl FnMut(&[f64; 3]) -> [f64; 3]) -> [f64; 3] {
    let h = 1.0 / steps as f64;
    let mut x = *x0;
    for _ in 0..steps {
        let k1 = field(&x);
        let k2 = field(&add_scaled(&x, &k1, h / 2.0));
        let k3 = field(&add_scaled(&x, &k2, h / 2.0));
        let k4 = field(&add_scaled(&x, &k3, h));
        for i in 0..3 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

fn add_scaled(x: &[f64; 3], v: &[f64; 3], s: f64) -> [f64; 3] {
    [x[0] + s * v[0], x[1] + s * v[1], x[2] + s * v[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::mollifier::DEFAULT_LAMBDA_CAP;

    const L: f64 = DEFAULT_LAMBDA_CAP;

    fn cube2() -> IntegerCube {
        IntegerCube { n: 2, nu: [0, 0, 0] }
    }

    #[test]
    fn edt_matches_brute_force() {
        let res = 16;
        let mut occ = vec![false; res * res];
        occ[3 * res + 4] = true;
        occ[10 * res + 12] = true;
        let d = edt(&occ, res, 2);
        for i in 0..res {
            for j in 0..res {
                let brute = [(3i64, 4i64), (10, 12)]
                    .iter()
                    .map(|&(a, b)| ((i as i64 - a).pow(2) + (j as i64 - b).pow(2)) as f64)
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(d[i * res + j], brute, "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn free_ball_in_lightly_occupied_cube() {
        // a small box near one corner leaves plenty of room
        let boxes =
            [ClipBox { lo: [0.0, 0.0, 0.0], hi: [0.1, 0.1, 0.0] }];
        match find_free_ball(&cube2(), &boxes).unwrap() {
            FreeBall::Found { p, eps_c } => {
                assert!(eps_c > 0.05, "eps_c = {eps_c}");
                // ball avoids the box and the walls by 3 eps_c
                let d_box = dist_to_box(&p, &boxes[0]);
                assert!(d_box >= 3.0 * eps_c - 1e-12, "d_box = {d_box}, eps_c = {eps_c}");
                for i in 0..2 {
                    assert!(p[i].min(1.0 - p[i]) >= 3.0 * eps_c - 1e-12);
                }
            }
            FreeBall::FullCube => panic!("expected a free ball"),
        }
    }

    fn dist_to_box(p: &[f64; 3], b: &ClipBox) -> f64 {
        let mut d2 = 0.0;
        for i in 0..2 {
            let c = p[i].clamp(b.lo[i], b.hi[i]);
            d2 += (p[i] - c) * (p[i] - c);
        }
        d2.sqrt()
    }

    #[test]
    fn saturated_cube_reports_full() {
        let boxes = [ClipBox { lo: [0.0, 0.0, 0.0], hi: [1.0, 1.0, 0.0] }];
        assert!(matches!(find_free_ball(&cube2(), &boxes).unwrap(), FreeBall::FullCube));
    }

    #[test]
    fn fine_grid_of_boxes_reports_full() {
        // 32x32 lattice of small boxes spaced so no ball of useful size fits
        let mut boxes = Vec::new();
        for i in 0..32 {
            for j in 0..32 {
                let x = i as f64 / 32.0;
                let y = j as f64 / 32.0;
                boxes.push(ClipBox { lo: [x, y, 0.0], hi: [x + 0.02, y + 0.02, 0.0] });
            }
        }
        assert!(matches!(find_free_ball(&cube2(), &boxes).unwrap(), FreeBall::FullCube));
    }

    #[test]
    fn empty_cube_is_an_error() {
        assert!(find_free_ball(&cube2(), &[]).is_err());
    }

    #[test]
    fn rk4_transports_ball_exactly_on_plateau() {
        let field = ClearingField { cube: cube2(), p: [0.3, 0.3, 0.0], eps_c: 0.05 };
        let eps = 0.05;
        field.validate(eps).unwrap();
        let m = [0.5, 0.5, 0.0];
        let shift = [m[0] - 0.3, m[1] - 0.3, 0.0];
        // points within 2 eps of p see the constant field the whole way if
        // they stay within 2 eps of the segment, which a straight translate does
        for off in [[0.0, 0.0], [0.05, -0.05], [-0.07, 0.02]] {
            let x0 = [0.3 + off[0], 0.3 + off[1], 0.0];
            let x1 = rk4_time_one(&x0, 64, |x| field.velocity(x, eps, L));
            assert!((x1[0] - (x0[0] + shift[0])).abs() < 1e-12, "{x1:?}");
            assert!((x1[1] - (x0[1] + shift[1])).abs() < 1e-12, "{x1:?}");
        }
    }

    #[test]
    fn clearing_field_vanishes_far_from_capsule() {
        let field = ClearingField { cube: cube2(), p: [0.3, 0.3, 0.0], eps_c: 0.05 };
        let v = field.velocity(&[0.9, 0.1, 0.0], 0.05, L);
        assert_eq!(v, [0.0; 3]);
        // and outside the cube entirely
        let v = field.velocity(&[1.5, 1.5, 0.0], 0.05, L);
        assert_eq!(v, [0.0; 3]);
    }

    #[test]
    fn capsule_validation_catches_wall_contact() {
        let field = ClearingField { cube: cube2(), p: [0.05, 0.5, 0.0], eps_c: 0.05 };
        assert!(field.validate(0.05).is_err());
        let field = ClearingField { cube: cube2(), p: [0.3, 0.5, 0.0], eps_c: 0.02 };
        assert!(field.validate(0.05).is_err());
    }

    #[test]
    fn special_field_drains_toward_corner() {
        let nu = [0i64, 0, 0];
        // far corner of the cube moves toward nu with speed 2 sqrt(2)
        let v = special_velocity(&nu, 2, &[1.0, 1.0, 0.0], L);
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        assert!((speed - 2.0 * 2.0f64.sqrt()).abs() < 1e-12);
        assert!(v[0] < 0.0 && v[1] < 0.0);
        // vanishes at the corner and close to it
        assert_eq!(special_velocity(&nu, 2, &[0.0, 0.0, 0.0], L), [0.0; 3]);
        assert_eq!(special_velocity(&nu, 2, &[0.05, 0.05, 0.0], L), [0.0; 3]);
        // time-1 flow of the far corner ends near the corner, outside B(nu, 1/20)
        let x1 = rk4_time_one(&[1.0, 1.0, 0.0], 256, |x| special_velocity(&nu, 2, x, L));
        let r = (x1[0] * x1[0] + x1[1] * x1[1]).sqrt();
        assert!(r < 0.2, "r = {r}");
        assert!(r > 0.05, "r = {r}");
        assert!(x1[0] >= 0.0 && x1[1] >= 0.0);
    }
}
