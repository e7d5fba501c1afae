use std::fmt::Write as _;
use std::path::Path;

use barrier_core::integrator::{BarrierTrajectory, EventKind, TrajectoryEvent};
use barrier_core::model::SystemDefinition;
use barrier_core::tangency::{TangencyMode, TangencyPoint};
use barrier_core::verify::{ProbeReport, VariationalCheck};
use serde::Serialize;

use crate::Failure;

/// Fixed 17-significant-digit rendering, independent of locale.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

pub fn csv_header(sys: &SystemDefinition) -> String {
    let mut cols = vec!["t".to_string()];
    let push = |cols: &mut Vec<String>, p: &str, k: usize| cols.extend((1..=k).map(|i| format!("{p}{i}")));
    push(&mut cols, "x", sys.n());
    push(&mut cols, "lambda", sys.n());
    push(&mut cols, "u", sys.m());
    push(&mut cols, "mu", sys.p());
    push(&mut cols, "nu", sys.r());
    cols.push("H_residual".into());
    cols.join(",")
}

pub fn barrier_csv(sys: &SystemDefinition, t: &BarrierTrajectory) -> String {
    let mut out = csv_header(sys);
    out.push('\n');
    for k in 0..t.len() {
        let mut row = vec![num(t.times[k])];
        for v in [&t.states[k], &t.adjoints[k], &t.controls[k], &t.mu[k], &t.nu[k]] {
            row.extend(v.iter().map(|&x| num(x)));
        }
        row.push(num(t.h_residuals[k]));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
pub struct EndpointView {
    pub index: usize,
    pub z: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub lambda_t: Vec<f64>,
    pub tied_adjoints: Vec<Vec<f64>>,
    pub mode: TangencyMode,
    pub g_tilde_residual: f64,
    pub tangency_residual: f64,
}

impl EndpointView {
    pub fn new(index: usize, tp: &TangencyPoint) -> Self {
        EndpointView {
            index,
            z: tp.z.as_slice().to_vec(),
            u_bar: tp.u_bar.as_slice().to_vec(),
            lambda_t: tp.lambda_t.as_slice().to_vec(),
            tied_adjoints: tp.tied_adjoints.iter().map(|v| v.as_slice().to_vec()).collect(),
            mode: tp.mode,
            g_tilde_residual: tp.g_tilde_residual,
            tangency_residual: tp.tangency_residual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStatus {
    Barrier,
    /// Kept without verification (`--no-verify`).
    Unverified,
    ScreenedOut,
}

#[derive(Serialize)]
pub struct BranchView {
    pub branch: usize,
    pub endpoint: usize,
    pub lambda_t: Vec<f64>,
    pub stop: EventKind,
    pub duration: f64,
    pub points: usize,
    pub hamiltonian_residual: f64,
    pub status: BranchStatus,
    pub reasons: Vec<String>,
}

#[derive(Serialize)]
pub struct EndpointsFile {
    pub system: String,
    pub seeds: usize,
    pub converged: usize,
    pub failed_seeds: usize,
    pub endpoints: Vec<EndpointView>,
    pub branches: Vec<BranchView>,
}

#[derive(Serialize)]
pub struct VerifyFile<'a> {
    pub branch: usize,
    pub endpoint: usize,
    pub stop: EventKind,
    pub events: &'a [TrajectoryEvent],
    pub hamiltonian_residual: f64,
    pub max_multiplier_jump: f64,
    pub chattering_suspected: bool,
    pub growth_bound_ok: Option<bool>,
    pub variational: &'a VariationalCheck,
    pub probe: &'a ProbeReport,
    pub status: BranchStatus,
    pub reasons: &'a [String],
}

/// A drawn branch: its state polyline and whether it survived screening.
pub struct Curve<'a> {
    pub traj: &'a BarrierTrajectory,
    pub kept: bool,
}

/// Plot of the branches over the seed box, with the cells outside `G`
/// shaded from a coarse raster of `g~`.
pub fn barrier_svg(lower: &[f64], upper: &[f64], outside: &[(f64, f64, f64, f64)], curves: &[Curve]) -> String {
    let (w, h, pad) = (640.0, 640.0, 40.0);
    let span = |k: usize| (upper[k] - lower[k]).max(1e-12);
    let px = |x: f64| pad + (x - lower[0]) / span(0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - lower[1]) / span(1) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(
        s,
        r#"<defs><clipPath id="plot"><rect x="{pad}" y="{pad}" width="{}" height="{}"/></clipPath></defs>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r##"<g clip-path="url(#plot)" fill="#c8c8c8" stroke="none">"##);
    for &(x0, y0, x1, y1) in outside {
        let _ = writeln!(
            s,
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}"/>"#,
            px(x0),
            py(y1),
            px(x1) - px(x0),
            py(y0) - py(y1)
        );
    }
    s.push_str("</g>\n");
    let _ = writeln!(s, r#"<g clip-path="url(#plot)" fill="none" stroke-width="2">"#);
    for c in curves {
        let pts: Vec<String> =
            c.traj.states.iter().map(|x| format!("{:.3},{:.3}", px(x[0]), py(x[1]))).collect();
        let style = if c.kept { r##"stroke="#b01818""## } else { r##"stroke="#4060a0" stroke-dasharray="6 4""## };
        let _ = writeln!(s, r#"<polyline {style} points="{}"/>"#, pts.join(" "));
        let z = &c.traj.endpoint.z;
        let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="4" fill="black"/>"#, px(z[0]), py(z[1]));
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let label = |v: f64| format!("{v:.3}");
    let _ = writeln!(
        s,
        r#"<g font-family="sans-serif" font-size="12"><text x="{pad}" y="{}">{}</text><text x="{}" y="{}" text-anchor="end">{}</text><text x="{}" y="{}" text-anchor="end">{}</text><text x="{}" y="{}" text-anchor="end">{}</text></g>"#,
        h - pad + 16.0,
        label(lower[0]),
        w - pad,
        h - pad + 16.0,
        label(upper[0]),
        pad - 4.0,
        h - pad,
        label(lower[1]),
        pad - 4.0,
        pad + 10.0,
        label(upper[1]),
    );
    s.push_str("</svg>\n");
    s
}
