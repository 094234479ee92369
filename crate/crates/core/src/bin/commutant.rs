//! Command-line front end: bracket norms, the end-to-end commuting
//! approximation, collapse maps for voxel sets, thickness bounds, sequence
//! runs, and report re-verification. Reports are deterministic JSON: same
//! inputs and seed, byte-identical bytes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commutant::bracket::{bracket, BracketReport};
use commutant::collapse::{build_collapse_map, displacement_report, CollapseParams};
use commutant::domain::{GridField, TorusDomain};
use commutant::error::Error;
use commutant::expr::sample_field;
use commutant::io::{read_fgrid, read_voxset, write_fgrid};
use commutant::pipeline::{
    commuting_approximation, commuting_sequence, thickness_upper_bound, ApproximationReport,
    SequenceReport, ThicknessReport,
};

#[derive(Parser)]
#[command(
    name = "commutant",
    version,
    about = "Commuting C0 approximations of almost-commuting functions on the flat torus"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Copy)]
struct FlowArgs {
    /// Collapse radius cap (at most 1/6)
    #[arg(long, default_value_t = 1.0 / 6.0)]
    eps: f64,
    /// Mollifier sharpness
    #[arg(long, default_value_t = 30.0)]
    lambda_cap: f64,
    /// RK4 steps of the time-1 clearing flow
    #[arg(long, default_value_t = 128)]
    flow_steps: usize,
    /// Shrink factor for eps on verification retries
    #[arg(long, default_value_t = 0.7)]
    retry_shrink: f64,
}

impl FlowArgs {
    fn params(&self) -> CollapseParams {
        CollapseParams {
            eps: self.eps,
            lambda_cap: self.lambda_cap,
            flow_steps: self.flow_steps,
            retry_shrink: self.retry_shrink,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the n-ary volume bracket of n fields and its norms
    Bracket {
        /// Input FGRID files (n = 2 or 3 of them) or expression descriptors
        #[arg(long = "in", num_args = 2..=3, required = true)]
        input: Vec<String>,
        /// Grid resolution used when inputs are expressions
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        #[arg(long)]
        report: PathBuf,
        /// Optionally write the bracket field itself
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full construction: commuting approximants plus certificates
    Approximate {
        #[arg(long = "in", num_args = 2..=3, required = true)]
        input: Vec<String>,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        #[arg(long)]
        voxel_size: f64,
        #[arg(long, default_value_t = 1)]
        dilation: u32,
        /// Supersampling factor for the image voxelization; 0 = automatic
        #[arg(long, default_value_t = 0)]
        supersample: usize,
        /// Prefix for the output FGRID files (<prefix>_1.fgrd, ...)
        #[arg(long)]
        out_prefix: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Build a collapse map for a voxel set and certify its displacement
    Collapse {
        #[arg(long)]
        voxels: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Random interior samples per voxel in the certificate
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Upper-bound the thickness of a voxel set
    Thickness {
        #[arg(long)]
        voxels: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Run the construction over a manifest of field pairs
    Sequence {
        /// Text file, one pair per line: "<descriptor> ; <descriptor>"
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        voxel_size: f64,
        #[arg(long, default_value_t = 1)]
        dilation: u32,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Re-check the internal invariants of a saved JSON report
    Verify {
        #[arg(long)]
        report: PathBuf,
    },
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Format(_) | Error::Io(_) => 3,
        Error::Certificate(_) => 4,
        Error::Construction(_) => 5,
        _ => 2,
    }
}

fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<(), Error> {
    let mut body = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Format(format!("report serialization failed: {e}")))?;
    body.push('\n');
    std::fs::write(path, body)?;
    Ok(())
}

/// Load a field from an FGRID path or an expression descriptor. Paths are
/// recognized by their .fgrd suffix or a file: prefix.
fn load_field(spec: &str, resolution: usize) -> Result<GridField, Error> {
    if let Some(path) = spec.strip_prefix("file:") {
        return read_fgrid(Path::new(path));
    }
    if spec.ends_with(".fgrd") {
        return read_fgrid(Path::new(spec));
    }
    let n = if spec.contains('z') { 3 } else { 2 };
    let domain = TorusDomain::unit(n, resolution)?;
    sample_field(domain, spec)
}

fn load_fields(specs: &[String], resolution: usize) -> Result<Vec<GridField>, Error> {
    specs.iter().map(|s| load_field(s, resolution)).collect()
}

#[derive(Serialize)]
struct CollapseRunReport {
    #[serde(flatten)]
    summary: commutant::collapse::CollapseSummary,
    displacement: commutant::collapse::DisplacementReport,
}

fn run(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Bracket { input, resolution, report, out } => {
            let fields = load_fields(&input, resolution)?;
            let refs: Vec<&GridField> = fields.iter().collect();
            let b = bracket(&refs)?;
            write_report(&report, &BracketReport::from_field(&b))?;
            if let Some(path) = out {
                write_fgrid(&path, &b)?;
            }
            Ok(())
        }
        Cmd::Approximate {
            input,
            resolution,
            voxel_size,
            dilation,
            supersample,
            out_prefix,
            report,
            flow,
        } => {
            let fields = load_fields(&input, resolution)?;
            let refs: Vec<&GridField> = fields.iter().collect();
            let (approximants, rep) =
                commuting_approximation(&refs, voxel_size, dilation, supersample, &flow.params())?;
            write_report(&report, &rep)?;
            if let Some(prefix) = out_prefix {
                for (i, f) in approximants.iter().enumerate() {
                    let path = PathBuf::from(format!("{}_{}.fgrd", prefix.display(), i + 1));
                    write_fgrid(&path, f)?;
                }
            }
            Ok(())
        }
        Cmd::Collapse { voxels, report, samples, seed, flow } => {
            let k = read_voxset(&voxels)?;
            let map = build_collapse_map(&k, &flow.params())?;
            let displacement = displacement_report(&map, &k, samples, seed)?;
            write_report(&report, &CollapseRunReport { summary: map.summary(), displacement })?;
            Ok(())
        }
        Cmd::Thickness { voxels, report, samples, seed, flow } => {
            let k = read_voxset(&voxels)?;
            let rep = thickness_upper_bound(&k, &flow.params(), samples, seed)?;
            write_report(&report, &rep)?;
            Ok(())
        }
        Cmd::Sequence { manifest, resolution, voxel_size, dilation, report, flow } => {
            let text = std::fs::read_to_string(&manifest)?;
            let mut pairs = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (a, b) = line.split_once(';').ok_or_else(|| {
                    Error::Format(format!(
                        "manifest line {}: expected '<descriptor> ; <descriptor>'",
                        lineno + 1
                    ))
                })?;
                pairs.push((
                    load_field(a.trim(), resolution)?,
                    load_field(b.trim(), resolution)?,
                ));
            }
            let (_, rep) = commuting_sequence(&pairs, voxel_size, dilation, &flow.params())?;
            write_report(&report, &rep)?;
            Ok(())
        }
        Cmd::Verify { report } => verify_report(&report),
    }
}

/// Re-check whatever invariants the saved report carries within itself:
/// epsilon = l1/2, bound consistency, certified displacement and skeleton
/// bounds, the thickness inequality. Violations exit with code 4.
fn verify_report(path: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("report is not valid JSON: {e}")))?;
    let fail = |msg: String| Err(Error::Certificate(msg));

    if value.get("bracket_before").is_some() {
        let rep: ApproximationReport = serde_json::from_value(value)
            .map_err(|e| Error::Format(format!("malformed approximation report: {e}")))?;
        let b = &rep.bracket_before;
        if (b.epsilon - b.l1_norm / 2.0).abs() > 1e-15 * b.l1_norm.max(1.0) {
            return fail("epsilon is not half the L1 norm".into());
        }
        let n = rep.resolutions.n as f64;
        if (rep.bound - b.epsilon.powf(1.0 / n)).abs() > 1e-12 * rep.bound.max(1.0) {
            return fail("bound does not equal epsilon^{1/n}".into());
        }
        if (rep.lemma_bound - rep.measure_k.powf(1.0 / n)).abs() > 1e-12 {
            return fail("lemma bound does not equal measure^{1/n}".into());
        }
        for (i, s) in rep.per_coordinate_displacement.iter().enumerate() {
            if *s > rep.lemma_bound * (1.0 + 1e-6) {
                return fail(format!("coordinate {i} displacement exceeds the lemma bound"));
            }
        }
        if rep.collapse.mode != "identity" && rep.skeleton_max_distance > 1e-9 {
            return fail("skeleton distance exceeds 1e-9".into());
        }
        return Ok(());
    }
    if value.get("thickness_upper").is_some() {
        let rep: ThicknessReport = serde_json::from_value(value)
            .map_err(|e| Error::Format(format!("malformed thickness report: {e}")))?;
        let n = if rep.certificate.per_coordinate_sup.len() == 3 { 3 } else { 2 };
        if rep.thickness_upper.powi(n) > rep.measure * (1.0 + 1e-3) {
            return fail("thickness bound inequality violated".into());
        }
        return Ok(());
    }
    if value.get("l1_norm").is_some() {
        let rep: BracketReport = serde_json::from_value(value)
            .map_err(|e| Error::Format(format!("malformed bracket report: {e}")))?;
        if (rep.epsilon - rep.l1_norm / 2.0).abs() > 1e-15 * rep.l1_norm.max(1.0) {
            return fail("epsilon is not half the L1 norm".into());
        }
        if rep.c0_norm < 0.0 || rep.l1_norm < 0.0 {
            return fail("negative norm".into());
        }
        return Ok(());
    }
    if value.get("entries").is_some() {
        let rep: SequenceReport = serde_json::from_value(value)
            .map_err(|e| Error::Format(format!("malformed sequence report: {e}")))?;
        let sum: f64 = rep.entries.iter().filter_map(|e| e.max_displacement).sum();
        if (sum - rep.cumulative_displacement).abs() > 1e-9 {
            return fail("cumulative displacement does not match entries".into());
        }
        return Ok(());
    }
    if value.get("per_coordinate_sup").is_some() || value.get("mode").is_some() {
        // collapse run report: displacement certified against the bound
        let disp = value.get("displacement").unwrap_or(&value);
        let sups = disp
            .get("per_coordinate_sup")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::Format("missing per_coordinate_sup".into()))?;
        let bound = disp.get("bound").and_then(|v| v.as_f64()).unwrap_or(f64::INFINITY);
        for s in sups {
            if s.as_f64().unwrap_or(0.0) > bound * (1.0 + 1e-6) {
                return fail("displacement exceeds the bound".into());
            }
        }
        return Ok(());
    }
    Err(Error::Format("unrecognized report layout".into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
