//! The cube-collapse map psi: within each unit cube of the integer lattice it
//! is the identity on the ball B(center, eps) and pushes everything at radius
//! >= 2 eps onto the cube boundary, i.e. onto the codimension-1 skeleton of
//! the lattice. Points on a cube face stay on that face, so psi is globally
//! well defined and continuous.

use serde::{Deserialize, Serialize};

use crate::collapse::mollifier::{a_unchecked, lambda_cutoff};
use crate::error::{Error, Result};

/// Unit cube [nu, nu + 1]^n of the integer lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntegerCube {
    pub n: usize,
    pub nu: [i64; 3],
}

impl IntegerCube {
    /// Cube containing x under the floor convention: each face belongs to the
    /// cube on its positive side.
    pub fn containing(n: usize, x: &[f64; 3]) -> Self {
        let mut nu = [0i64; 3];
        for i in 0..n {
            nu[i] = x[i].floor() as i64;
        }
        Self { n, nu }
    }

    pub fn center(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for i in 0..self.n {
            m[i] = self.nu[i] as f64 + 0.5;
        }
        m
    }

    /// Distance from a point to the cube boundary, negative outside.
    pub fn wall_distance(&self, x: &[f64; 3]) -> f64 {
        let mut d = f64::INFINITY;
        for i in 0..self.n {
            let t = x[i] - self.nu[i] as f64;
            d = d.min(t.min(1.0 - t));
        }
        d
    }
}

const EXTREMAL_TOL: f64 = 1e-12;

/// Smooth self-map of the boundary of [-1/2, 1/2]^n: extremal coordinates
/// (|u_i| = 1/2) are kept bit-exactly, every other coordinate u is replaced by
/// a(u + 1/2) - 1/2. Flattens each face toward its own boundary so that maps
/// composed with it have vanishing derivatives across face edges.
pub fn face_map_c(n: usize, u: &[f64; 3], lambda_cap: f64) -> Result<[f64; 3]> {
    if !(0..n).any(|i| (u[i].abs() - 0.5).abs() <= EXTREMAL_TOL) {
        return Err(Error::InvalidParameter(format!(
            "face map input {u:?} is not on the boundary of the centered unit cube"
        )));
    }
    let mut out = [0.0; 3];
    for i in 0..n {
        if (u[i].abs() - 0.5).abs() <= EXTREMAL_TOL {
            out[i] = u[i];
        } else {
            let t = (u[i] + 0.5).clamp(0.0, 1.0);
            out[i] = a_unchecked(t, lambda_cap) - 0.5;
        }
    }
    Ok(out)
}

/// Radial projection of a unit vector onto the boundary of [-1/2, 1/2]^n
/// followed by the face map. The sup-norm-extremal coordinates land on
/// exactly +-1/2.
pub fn radial_to_cube_f(n: usize, u: &[f64; 3], lambda_cap: f64) -> Result<[f64; 3]> {
    let norm: f64 = (0..n).map(|i| u[i] * u[i]).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("radial map input {u:?} is not a unit vector")));
    }
    face_map_c(n, &project_to_boundary(n, u), lambda_cap)
}

/// Scale a nonzero vector onto the boundary of [-1/2, 1/2]^n. Coordinates
/// realizing the sup norm are set to exactly +-1/2 so later integer shifts
/// land exactly on the skeleton.
fn project_to_boundary(n: usize, d: &[f64; 3]) -> [f64; 3] {
    let sup = (0..n).map(|i| d[i].abs()).fold(0.0f64, f64::max);
    debug_assert!(sup > 0.0);
    let mut y = [0.0; 3];
    for i in 0..n {
        y[i] = if d[i].abs() == sup { 0.5f64.copysign(d[i]) } else { d[i] * (0.5 / sup) };
    }
    y
}

/// The cube-collapse map. Identity on B(m, eps) of each cube, boundary
/// retraction outside B(m, 2 eps), smoothly interpolated in between; every
/// cube is mapped into itself and faces map into themselves.
pub fn cube_collapse_psi(x: &[f64; 3], n: usize, eps: f64, lambda_cap: f64) -> Result<[f64; 3]> {
    if !(eps > 0.0 && eps <= 1.0 / 6.0) {
        return Err(Error::InvalidParameter(format!("collapse radius {eps} outside (0, 1/6]")));
    }
    let cube = IntegerCube::containing(n, x);
    let m = cube.center();
    let mut d = [0.0; 3];
    for i in 0..n {
        d[i] = x[i] - m[i];
    }
    let r = (0..n).map(|i| d[i] * d[i]).sum::<f64>().sqrt();
    if r <= eps {
        return Ok(*x);
    }
    let boundary = face_map_c(n, &project_to_boundary(n, &d), lambda_cap)?;
    let lam = lambda_cutoff(r, eps, lambda_cap);
    let mut out = [0.0; 3];
    if lam >= 1.0 {
        // land on the skeleton bit-exactly: m_i +- 1/2 is an integer shift
        for i in 0..n {
            out[i] = m[i] + boundary[i];
        }
    } else {
        for i in 0..n {
            out[i] = (1.0 - lam) * x[i] + lam * (m[i] + boundary[i]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::mollifier::DEFAULT_LAMBDA_CAP;

    const L: f64 = DEFAULT_LAMBDA_CAP;
    const EPS: f64 = 1.0 / 6.0;

    fn dist_to_skeleton(n: usize, x: &[f64; 3]) -> f64 {
        (0..n).map(|i| (x[i] - x[i].round()).abs()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn identity_inside_small_ball() {
        for x in [[0.5, 0.5, 0.0], [0.55, 0.45, 0.0], [0.5 + EPS * 0.99, 0.5, 0.0]] {
            assert_eq!(cube_collapse_psi(&x, 2, EPS, L).unwrap(), x);
        }
    }

    #[test]
    fn outer_region_lands_exactly_on_skeleton() {
        // sample points with radius >= 2 eps from the cube center
        for k in 0..200 {
            let t = k as f64 / 200.0 * std::f64::consts::TAU;
            let r = 0.34 + 0.15 * (k as f64 / 200.0);
            let x = [0.5 + r * t.cos(), 0.5 + r * t.sin(), 0.0];
            if x[0] <= 0.0 || x[0] >= 1.0 || x[1] <= 0.0 || x[1] >= 1.0 {
                continue;
            }
            let y = cube_collapse_psi(&x, 2, EPS, L).unwrap();
            assert_eq!(dist_to_skeleton(2, &y), 0.0, "x = {x:?}, y = {y:?}");
        }
    }

    #[test]
    fn cube_is_invariant() {
        // deterministic low-discrepancy-ish sweep of the unit cube
        for k in 0..3000u64 {
            let x = [
                (k as f64 * 0.754877666) % 1.0,
                (k as f64 * 0.569840296) % 1.0,
                (k as f64 * 0.362941265) % 1.0,
            ];
            for n in [2usize, 3] {
                let y = cube_collapse_psi(&x, n, EPS, L).unwrap();
                for i in 0..n {
                    assert!(
                        (0.0..=1.0).contains(&y[i]),
                        "n = {n}, x = {x:?} escaped to {y:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn faces_map_into_themselves() {
        // points on the face x_0 = 1 keep that coordinate bit-exactly
        for k in 1..40 {
            let x = [1.0, k as f64 / 40.0, 0.0];
            let y = cube_collapse_psi(&x, 2, EPS, L).unwrap();
            assert_eq!(y[0], 1.0, "x = {x:?} -> {y:?}");
            assert!((0.0..=1.0).contains(&y[1]));
        }
    }

    #[test]
    fn face_consistency_across_cubes() {
        // approaching a shared face from both sides gives the same limit
        let mut worst = 0.0f64;
        for k in 1..60 {
            let y = k as f64 / 60.0;
            let below = cube_collapse_psi(&[1.0 - 1e-9, y, 0.0], 2, EPS, L).unwrap();
            let above = cube_collapse_psi(&[1.0 + 1e-9, y, 0.0], 2, EPS, L).unwrap();
            for i in 0..2 {
                worst = worst.max((below[i] - above[i]).abs());
            }
        }
        assert!(worst <= 1e-6, "face mismatch {worst}");
    }

    #[test]
    fn face_map_validates_input() {
        assert!(face_map_c(2, &[0.2, 0.3, 0.0], L).is_err());
        let y = face_map_c(2, &[0.5, 0.3, 0.0], L).unwrap();
        assert_eq!(y[0], 0.5);
        assert!(radial_to_cube_f(2, &[0.6, 0.8, 0.0], L).is_ok());
        assert!(radial_to_cube_f(2, &[0.5, 0.5, 0.0], L).is_err());
    }

    #[test]
    fn radial_map_lands_on_boundary() {
        let y = radial_to_cube_f(2, &[0.6, 0.8, 0.0], L).unwrap();
        assert_eq!(y[1], 0.5);
        assert!(y[0].abs() <= 0.5);
        // corner direction maps to the corner exactly
        let s = 1.0 / 2.0f64.sqrt();
        let y = radial_to_cube_f(2, &[s, -s, 0.0], L).unwrap();
        assert_eq!(y, [0.5, -0.5, 0.0]);
    }

    #[test]
    fn psi_rejects_bad_eps() {
        assert!(cube_collapse_psi(&[0.5, 0.5, 0.0], 2, 0.0, L).is_err());
        assert!(cube_collapse_psi(&[0.5, 0.5, 0.0], 2, 0.2, L).is_err());
    }

    #[test]
    fn cube_lookup_floor_convention() {
        let c = IntegerCube::containing(2, &[1.0, -0.25, 0.0]);
        assert_eq!(c.nu, [1, -1, 0]);
        assert_eq!(c.center(), [1.5, -0.5, 0.0]);
        assert!((c.wall_distance(&[1.5, -0.5, 0.0]) - 0.5).abs() < 1e-15);
        assert_eq!(c.wall_distance(&[1.0, -0.25, 0.0]), 0.0);
    }
}
