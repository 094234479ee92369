//! The n-ary volume bracket {F_1,...,F_n} on the flat torus: pointwise
//! Jacobian determinant of the evaluation map, with C0 and L1 norms.

use serde::{Deserialize, Serialize};

use crate::domain::{check_bracket_inputs, GridField};
use crate::error::Result;

/// Norms of a bracket field. `epsilon` is half the L1 norm, the quantity the
/// displacement bound is stated against.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BracketReport {
    pub c0_norm: f64,
    pub l1_norm: f64,
    pub epsilon: f64,
}

impl BracketReport {
    pub fn from_field(field: &GridField) -> Self {
        let l1 = l1_norm(field);
        Self { c0_norm: c0_norm(field), l1_norm: l1, epsilon: l1 / 2.0 }
    }
}

/// Partial derivative along `axis` with the 4th-order centered periodic stencil
/// (1/12, -2/3, 0, 2/3, -1/12) / h.
pub fn partial_derivative(field: &GridField, axis: usize) -> GridField {
    let d = field.domain;
    let r = d.resolution;
    let h = d.spacing();
    let mut out = vec![0.0; field.values.len()];
    for (k, v) in out.iter_mut().enumerate() {
        let idx = d.multi_index(k);
        let sample = |offset: i64| {
            let mut j = idx;
            j[axis] = ((idx[axis] as i64 + offset).rem_euclid(r as i64)) as usize;
            field.values[d.flat_index(j)]
        };
        // difference the symmetric pairs first so constant fields cancel
        // bit-exactly
        *v = ((sample(1) - sample(-1)) * (2.0 / 3.0) + (sample(-2) - sample(2)) / 12.0) / h;
    }
    GridField { domain: d, values: out }
}

/// Determinant of a 2x2 or 3x3 matrix given by rows, evaluated in a
/// permutation-canonical order: every Leibniz term multiplies its factors in
/// sorted order and the even/odd term groups are summed in sorted order, so
/// swapping two rows negates the result bit-exactly.
fn det_rows(n: usize, rows: &[[f64; 3]]) -> f64 {
    match n {
        2 => {
            let even = canon_prod2(rows[0][0], rows[1][1]);
            let odd = canon_prod2(rows[0][1], rows[1][0]);
            even - odd
        }
        3 => {
            let mut even = [
                canon_prod3(rows[0][0], rows[1][1], rows[2][2]),
                canon_prod3(rows[0][1], rows[1][2], rows[2][0]),
                canon_prod3(rows[0][2], rows[1][0], rows[2][1]),
            ];
            let mut odd = [
                canon_prod3(rows[0][2], rows[1][1], rows[2][0]),
                canon_prod3(rows[0][0], rows[1][2], rows[2][1]),
                canon_prod3(rows[0][1], rows[1][0], rows[2][2]),
            ];
            even.sort_unstable_by(f64::total_cmp);
            odd.sort_unstable_by(f64::total_cmp);
            (even[0] + even[1] + even[2]) - (odd[0] + odd[1] + odd[2])
        }
        _ => unreachable!("dimension checked at domain construction"),
    }
}

fn canon_prod2(a: f64, b: f64) -> f64 {
    // f64 multiplication commutes exactly; no ordering needed for two factors.
    a * b
}

fn canon_prod3(a: f64, b: f64, c: f64) -> f64 {
    let mut f = [a, b, c];
    f.sort_unstable_by(f64::total_cmp);
    (f[0] * f[1]) * f[2]
}

/// Pointwise bracket {F_1,...,F_n} = det(dF_i/dx_j) with periodic 4th-order
/// finite differences.
pub fn bracket(fields: &[&GridField]) -> Result<GridField> {
    let domain = check_bracket_inputs(fields)?;
    let n = domain.n;
    // partials[i][j] = dF_i/dx_j
    let partials: Vec<Vec<GridField>> = fields
        .iter()
        .map(|f| (0..n).map(|axis| partial_derivative(f, axis)).collect())
        .collect();
    let mut out = vec![0.0; domain.node_count()];
    for (k, v) in out.iter_mut().enumerate() {
        let mut rows = [[0.0f64; 3]; 3];
        for (i, row) in rows.iter_mut().enumerate().take(n) {
            for (j, entry) in row.iter_mut().enumerate().take(n) {
                *entry = partials[i][j].values[k];
            }
        }
        *v = det_rows(n, &rows[..n]);
    }
    Ok(GridField { domain, values: out })
}

/// Grid sup of |F|. A lower bound of the true sup; refinement studies are the
/// documented way to gauge convergence.
pub fn c0_norm(field: &GridField) -> f64 {
    field.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Riemann sum of |F| h^n. Uses a fixed-shape pairwise reduction so the result
/// does not depend on traversal chunking.
pub fn l1_norm(field: &GridField) -> f64 {
    let h = field.domain.spacing();
    let cell = h.powi(field.domain.n as i32);
    pairwise_abs_sum(&field.values) * cell
}

fn pairwise_abs_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().map(|x| x.abs()).sum();
    }
    let mid = v.len() / 2;
    pairwise_abs_sum(&v[..mid]) + pairwise_abs_sum(&v[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TorusDomain;
    use crate::expr::sample_field;
    use std::f64::consts::PI;

    fn unit2(res: usize) -> TorusDomain {
        TorusDomain::unit(2, res).unwrap()
    }

    #[test]
    fn constant_partner_gives_zero_bracket() {
        let d = unit2(64);
        let c = sample_field(d, "const 5").unwrap();
        let g = sample_field(d, "sin(2πx)·cos(2πy)").unwrap();
        let b = bracket(&[&c, &g]).unwrap();
        assert_eq!(c0_norm(&b), 0.0);
    }

    #[test]
    fn equal_fields_give_zero_bracket() {
        let d = unit2(256);
        let f = sample_field(d, "sin(2πx)").unwrap();
        let b = bracket(&[&f, &f]).unwrap();
        assert!(c0_norm(&b) <= 1e-10);
    }

    #[test]
    fn analytic_bracket_of_sin_pair() {
        let d = unit2(512);
        let f = sample_field(d, "sin(2πx)").unwrap();
        let g = sample_field(d, "sin(2πy)").unwrap();
        let b = bracket(&[&f, &g]).unwrap();
        // {F,G} = 4 pi^2 cos(2 pi x) cos(2 pi y); value at the origin node.
        let four_pi_sq = 4.0 * PI * PI;
        assert!((b.at([0, 0, 0]) - four_pi_sq).abs() < 1e-3);
        assert!((c0_norm(&b) - four_pi_sq).abs() < 1e-3);
        // L1 = 4 pi^2 (2/pi)^2 = 16.
        let l1 = l1_norm(&b);
        assert!((l1 - 16.0).abs() < 0.16, "l1 = {l1}");
    }

    #[test]
    fn l1_of_constant_on_unit_torus() {
        let d = unit2(64);
        let c = sample_field(d, "const 2").unwrap();
        assert!((l1_norm(&c) - 2.0).abs() < 1e-12);
        let z = sample_field(d, "const 0").unwrap();
        assert_eq!(l1_norm(&z), 0.0);
        assert_eq!(c0_norm(&z), 0.0);
        let m = sample_field(d, "const -3").unwrap();
        assert_eq!(c0_norm(&m), 3.0);
    }

    #[test]
    fn antisymmetry_is_exact_per_node() {
        let d = unit2(64);
        let f = sample_field(d, "sin(2πx)·cos(2πy)").unwrap();
        let g = sample_field(d, "cos(4πx) + sin(2πy)").unwrap();
        let fg = bracket(&[&f, &g]).unwrap();
        let gf = bracket(&[&g, &f]).unwrap();
        for (a, b) in fg.values.iter().zip(&gf.values) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn antisymmetry_exact_in_three_dims() {
        let d = TorusDomain::unit(3, 16).unwrap();
        let f1 = sample_field(d, "sin(2πx)·cos(2πy)").unwrap();
        let f2 = sample_field(d, "cos(2πy) + sin(4πz)").unwrap();
        let f3 = sample_field(d, "sin(2πz)·sin(2πx)").unwrap();
        let b123 = bracket(&[&f1, &f2, &f3]).unwrap();
        for (swapped, expect_sign) in [
            (bracket(&[&f2, &f1, &f3]).unwrap(), -1.0),
            (bracket(&[&f1, &f3, &f2]).unwrap(), -1.0),
            (bracket(&[&f3, &f2, &f1]).unwrap(), -1.0),
        ] {
            for (a, b) in b123.values.iter().zip(&swapped.values) {
                assert_eq!(*a * expect_sign, *b);
            }
        }
    }

    #[test]
    fn scalar_multilinearity_exact_for_dyadic_scalars() {
        let d = unit2(64);
        let f = sample_field(d, "sin(2πx)·cos(2πy)").unwrap();
        let g = sample_field(d, "cos(2πx)·sin(4πy)").unwrap();
        let fs = sample_field(d, "0.25·sin(2πx)·cos(2πy)").unwrap();
        let b = bracket(&[&f, &g]).unwrap();
        let bs = bracket(&[&fs, &g]).unwrap();
        for (a, s) in b.values.iter().zip(&bs.values) {
            assert_eq!(0.25 * *a, *s);
        }
    }

    #[test]
    fn functional_dependence_residual_at_machine_level() {
        // G = F^2 depends functionally on F, so dF ^ dG = 0; on the aligned
        // grid the discrete determinant cancels down to round-off at every
        // resolution.
        for res in [64usize, 128, 256] {
            let d = unit2(res);
            let f = sample_field(d, "sin(2πx)·sin(2πy)").unwrap();
            let sq = GridField::new(d, f.values.iter().map(|v| v * v).collect()).unwrap();
            let b = bracket(&[&f, &sq]).unwrap();
            assert!(c0_norm(&b) <= 1e-10, "res {res}: {}", c0_norm(&b));
        }
    }

    #[test]
    fn field_count_and_domain_mismatch_rejected() {
        let d = unit2(64);
        let f = sample_field(d, "sin(2πx)").unwrap();
        assert!(bracket(&[&f]).is_err());
        let other = sample_field(unit2(128), "sin(2πy)").unwrap();
        assert!(bracket(&[&f, &other]).is_err());
    }
}
