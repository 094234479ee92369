//! End-to-end construction of commuting approximants: bracket the inputs,
//! voxelize the image of the evaluation map, build the measure-collapsing map,
//! and push every grid sample of alpha through it. Also the thickness
//! estimator and the sequence utility for scaled families.

use serde::{Deserialize, Serialize};

use crate::bracket::{bracket, c0_norm, l1_norm, BracketReport};
use crate::collapse::{
    build_collapse_map, displacement_report, CollapseMode, CollapseParams,
    CollapseSummary, DisplacementReport,
};
use crate::domain::{check_bracket_inputs, GridField};
use crate::error::{Error, Result};
use crate::evalmap::{degree_bound_check, evaluate_map, voxelize_image, DegreeBound};

/// Grid and voxel parameters of a pipeline run, echoed into reports.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ResolutionRecord {
    pub n: usize,
    pub resolution: usize,
    pub period: f64,
    pub supersample: usize,
    pub voxel_size: f64,
    pub dilation: u32,
}

/// Everything the main construction certifies, in report form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApproximationReport {
    pub bracket_before: BracketReport,
    /// Measure of the dilated voxelized image actually collapsed.
    pub measure_k: f64,
    /// Theorem bound epsilon^{1/n} from the bracket.
    pub bound: f64,
    /// Lemma bound measure_k^{1/n} the displacements are certified against.
    pub lemma_bound: f64,
    pub per_coordinate_displacement: Vec<f64>,
    pub bracket_after_l1: f64,
    pub bracket_after_c0: f64,
    pub skeleton_max_distance: f64,
    /// Degree-zero measure check on the undilated image estimate.
    pub degree_bound: DegreeBound,
    pub collapse: CollapseSummary,
    pub resolutions: ResolutionRecord,
    pub notes: Vec<String>,
}

/// Pick a supersampling factor so adjacent image samples move by at most one
/// voxel, capped to keep the sample count bounded.
pub fn auto_supersample(fields: &[&GridField], voxel_size: f64) -> Result<usize> {
    let coarse = evaluate_map(fields, 1)?;
    let jump = coarse.max_adjacent_jump();
    Ok(((jump / voxel_size).ceil() as usize).clamp(1, 8))
}

/// Run the full construction. `supersample = 0` selects the factor
/// automatically from the image jump size.
pub fn commuting_approximation(
    fields: &[&GridField],
    voxel_size: f64,
    dilation: u32,
    supersample: usize,
    params: &CollapseParams,
) -> Result<(Vec<GridField>, ApproximationReport)> {
    let domain = check_bracket_inputs(fields)?;
    let n = domain.n;

    let before = BracketReport::from_field(&bracket(fields)?);
    let bound = before.epsilon.powf(1.0 / n as f64);

    let ss = if supersample == 0 { auto_supersample(fields, voxel_size)? } else { supersample };
    let sample = evaluate_map(fields, ss)?;
    let undilated = voxelize_image(&sample, voxel_size, 0)?;
    let degree = degree_bound_check(&undilated, &before);
    let k = voxelize_image(&sample, voxel_size, dilation)?;
    let measure_k = k.measure();
    let lemma_bound = measure_k.powf(1.0 / n as f64);

    let map = build_collapse_map(&k, params)?;

    // F'_i(node) = p_i(phi(alpha(node))): push the node values of alpha
    // through the collapse map.
    let nodes = evaluate_map(fields, 1)?;
    let mut out_values: Vec<Vec<f64>> = vec![Vec::with_capacity(nodes.len()); n];
    let mut sup = vec![0.0f64; n];
    let mut skel = 0.0f64;
    let identity = matches!(map.mode, CollapseMode::Identity);
    for kn in 0..nodes.len() {
        let a = nodes.point(kn);
        let y = map.apply(&a)?;
        for i in 0..n {
            out_values[i].push(y[i]);
            sup[i] = sup[i].max((a[i] - y[i]).abs());
        }
        if !identity {
            let mut d = f64::INFINITY;
            for i in 0..n {
                let s = map.gamma * y[i];
                d = d.min((s - s.round()).abs());
            }
            skel = skel.max(d);
        }
    }
    let approximants: Vec<GridField> =
        out_values.into_iter().map(|v| GridField::new(domain, v)).collect::<Result<_>>()?;

    let refs: Vec<&GridField> = approximants.iter().collect();
    let after = bracket(&refs)?;
    let after_l1 = l1_norm(&after);
    let after_c0 = c0_norm(&after);

    let mut notes = Vec::new();
    let spread = fields
        .iter()
        .map(|f| {
            let max = f.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = f.values.iter().cloned().fold(f64::INFINITY, f64::min);
            max - min
        })
        .fold(0.0f64, f64::max);
    if bound > spread && spread > 0.0 {
        notes.push("bound vacuous but construction still collapses image".to_string());
    }
    if identity {
        notes.push("identity map, certificate trivially inherited".to_string());
    }

    for (i, s) in sup.iter().enumerate() {
        if *s > lemma_bound * (1.0 + 1e-6) {
            return Err(Error::Certificate(format!(
                "coordinate {i} displacement {s} exceeds the lemma bound {lemma_bound}"
            )));
        }
    }
    if !identity && skel > 1e-9 {
        return Err(Error::Certificate(format!(
            "image misses the scaled skeleton by {skel}"
        )));
    }

    let report = ApproximationReport {
        bracket_before: before,
        measure_k,
        bound,
        lemma_bound,
        per_coordinate_displacement: sup,
        bracket_after_l1: after_l1,
        bracket_after_c0: after_c0,
        skeleton_max_distance: skel,
        degree_bound: degree,
        collapse: map.summary(),
        resolutions: ResolutionRecord {
            n,
            resolution: domain.resolution,
            period: domain.period,
            supersample: ss,
            voxel_size,
            dilation,
        },
        notes,
    };
    Ok((approximants, report))
}

/// Upper bound on the thickness of a voxel set, with its displacement
/// certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThicknessReport {
    pub measure: f64,
    pub thickness_upper: f64,
    pub certificate: DisplacementReport,
    pub collapse: CollapseSummary,
}

pub fn thickness_upper_bound(
    k: &crate::evalmap::VoxelSet,
    params: &CollapseParams,
    samples_per_voxel: usize,
    seed: u64,
) -> Result<ThicknessReport> {
    let measure = k.measure();
    if k.is_empty() {
        return Err(Error::InvalidParameter(
            "K has measure zero: use the identity map; thickness 0".into(),
        ));
    }
    let map = build_collapse_map(k, params)?;
    let cert = displacement_report(&map, k, samples_per_voxel, seed)?;
    let thickness_upper = cert.per_coordinate_sup.iter().cloned().fold(0.0f64, f64::max);
    if thickness_upper.powi(k.n as i32) > measure * (1.0 + 1e-3) {
        return Err(Error::Certificate(format!(
            "thickness_upper^{} = {} exceeds measure {measure}",
            k.n,
            thickness_upper.powi(k.n as i32)
        )));
    }
    Ok(ThicknessReport { measure, thickness_upper, certificate: cert, collapse: map.summary() })
}

/// One entry of a sequence run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sqrt_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub displacement_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_displacement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceReport {
    pub entries: Vec<SequenceEntry>,
    /// Running sum of the per-entry max displacements.
    pub cumulative_displacement: f64,
}

/// Apply the construction to a list of pairs on one shared 2-torus domain,
/// reporting the epsilon_k / sqrt(epsilon_k) chain. Per-pair failures are
/// recorded and the sequence continues.
pub fn commuting_sequence(
    pairs: &[(GridField, GridField)],
    voxel_size: f64,
    dilation: u32,
    params: &CollapseParams,
) -> Result<(Vec<(GridField, GridField)>, SequenceReport)> {
    let mut outputs = Vec::new();
    let mut entries = Vec::new();
    let mut cumulative = 0.0;
    for (idx, (f, g)) in pairs.iter().enumerate() {
        if f.domain.n != 2 {
            return Err(Error::InvalidDomain("sequence runs require n = 2".into()));
        }
        match commuting_approximation(&[f, g], voxel_size, dilation, 0, params) {
            Ok((mut fields, report)) => {
                let disp = report
                    .per_coordinate_displacement
                    .iter()
                    .cloned()
                    .fold(0.0f64, f64::max);
                cumulative += disp;
                entries.push(SequenceEntry {
                    index: idx,
                    epsilon: Some(report.bracket_before.epsilon),
                    sqrt_epsilon: Some(report.bracket_before.epsilon.sqrt()),
                    displacement_bound: Some(report.lemma_bound),
                    max_displacement: Some(disp),
                    error: None,
                });
                let g_out = fields.pop().expect("two fields");
                let f_out = fields.pop().expect("two fields");
                outputs.push((f_out, g_out));
            }
            Err(e) => {
                entries.push(SequenceEntry {
                    index: idx,
                    epsilon: None,
                    sqrt_epsilon: None,
                    displacement_bound: None,
                    max_displacement: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok((outputs, SequenceReport { entries, cumulative_displacement: cumulative }))
}
