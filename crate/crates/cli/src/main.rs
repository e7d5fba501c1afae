mod output;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use barrier_core::integrator::{hamiltonian_residual, integrate_barrier, BarrierTrajectory};
use barrier_core::minmax::{g_tilde, MinMaxOptions};
use barrier_core::model::SystemDefinition;
use barrier_core::tangency::{find_endpoints, seed_grid, TangencyPoint};
use barrier_core::verify::{growth_bound_check, semipermeability_probe, variational_adjoint_check};
use barrier_core::Error;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use output::{BranchStatus, BranchView, Curve, EndpointView, EndpointsFile, VerifyFile};
use scenario::{Artifact, Scenario, Settings};

#[derive(Debug)]
pub enum Failure {
    Parse(String),
    Solver(String),
    Invariant(Vec<String>),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 1,
            Failure::Solver(_) | Failure::Io(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }

    fn report(&self) {
        match self {
            Failure::Parse(m) => eprintln!("error: {m}"),
            Failure::Solver(m) => eprintln!("solver failure: {m}"),
            Failure::Io(m) => eprintln!("output failure: {m}"),
            Failure::Invariant(list) => {
                for m in list {
                    eprintln!("invariant violation: {m}");
                }
            }
        }
    }
}

#[derive(Parser)]
#[command(name = "barrier-synth", version, about = "Barrier construction for constrained control systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Endpoints, backward barrier branches and their verification.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        /// Skip the semipermeability probes.
        #[arg(long)]
        no_verify: bool,
    },
    /// Raster of g~ over the scenario's seed box.
    GtildeMap {
        scenario: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        /// Grid size as AxB (two-dimensional states only).
        #[arg(long)]
        grid: Option<String>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario's rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// KEY=VAL, repeatable.
    #[arg(long = "tol-override", value_name = "KEY=VAL")]
    tol_override: Vec<String>,
}

struct Prepared {
    scenario: Scenario,
    sys: SystemDefinition,
    settings: Settings,
}

fn prepare(path: &Path, common: &CommonArgs) -> Result<Prepared, Failure> {
    let scenario = Scenario::load(path)?;
    let sys = scenario.system()?;
    let seed = common.seed.unwrap_or(scenario.rng_seed);
    let mut settings = Settings::new(seed, scenario.growth_constant);
    for (k, v) in &scenario.tolerances {
        settings.set(k, *v)?;
    }
    for o in &common.tol_override {
        let (k, v) = scenario::parse_override(o)?;
        settings.set(&k, v)?;
    }
    settings.probe.samples = scenario.verify.samples;
    std::fs::create_dir_all(&common.out).map_err(|e| Failure::Io(format!("{}: {e}", common.out.display())))?;
    Ok(Prepared { scenario, sys, settings })
}

fn solver(context: &str) -> impl Fn(Error) -> Failure + '_ {
    move |e| match e {
        Error::GrowthBoundExceeded { .. } => Failure::Invariant(vec![format!("{context}: {e}")]),
        e => Failure::Solver(format!("{context}: {e}")),
    }
}

/// Pointwise monitors every branch must pass.
fn monitor(sys: &SystemDefinition, t: &BarrierTrajectory, k: usize, tol: f64) -> Vec<String> {
    let mut bad = Vec::new();
    for i in 0..t.len() {
        let finite = [&t.states[i], &t.adjoints[i], &t.controls[i], &t.mu[i], &t.nu[i]]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            bad.push(format!("branch {k}: non-finite value at t = {}", t.times[i]));
            break;
        }
        match sys.control_feasible(t.states[i].as_slice(), t.controls[i].as_slice(), tol) {
            Ok(true) => {}
            _ => {
                bad.push(format!("branch {k}: control infeasible at t = {}", t.times[i]));
                break;
            }
        }
    }
    bad
}

fn outside_cells(sys: &SystemDefinition, lower: &[f64], upper: &[f64], tol: f64) -> Result<Vec<(f64, f64, f64, f64)>, Failure> {
    let cells = 80;
    let (dx, dy) = ((upper[0] - lower[0]) / cells as f64, (upper[1] - lower[1]) / cells as f64);
    let opts = MinMaxOptions::default();
    let rows: Vec<Vec<(f64, f64, f64, f64)>> = (0..cells)
        .into_par_iter()
        .map(|i| {
            (0..cells)
                .filter_map(|j| {
                    let (x0, y0) = (lower[0] + dx * i as f64, lower[1] + dy * j as f64);
                    let c = [x0 + 0.5 * dx, y0 + 0.5 * dy];
                    match g_tilde(sys, &c, &opts) {
                        Ok(r) if r.value <= tol => None,
                        _ => Some((x0, y0, x0 + dx, y0 + dy)),
                    }
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn run(path: &Path, common: &CommonArgs, no_verify: bool) -> Result<(), Failure> {
    let Prepared { scenario, sys, settings } = prepare(path, common)?;
    let artifacts = scenario.artifacts(sys.n())?;
    let wants = |a: Artifact| artifacts.contains(&a);
    let out = &common.out;
    let b = &scenario.seed_box;
    let seeds = seed_grid(&b.lower, &b.upper, &b.counts);
    let search = find_endpoints(&sys, &seeds, &settings.tangency);
    if search.points.is_empty() {
        let first = search.failures.first().map(|(_, e)| e.to_string()).unwrap_or_default();
        return Err(Failure::Solver(format!("no tangency point from {} seeds (first error: {first})", seeds.len())));
    }
    println!("{}: {} endpoint(s) from {}/{} converged seeds", sys.name(), search.points.len(), search.converged, seeds.len());
    let endpoints: Vec<EndpointView> = search.points.iter().enumerate().map(|(i, tp)| EndpointView::new(i, tp)).collect();
    let branches: Vec<(usize, TangencyPoint)> = search
        .points
        .iter()
        .enumerate()
        .flat_map(|(i, tp)| tp.branches().into_iter().map(move |b| (i, b)))
        .collect();

    let mut file = EndpointsFile {
        system: sys.name().to_string(),
        seeds: seeds.len(),
        converged: search.converged,
        failed_seeds: search.failures.len(),
        endpoints,
        branches: Vec::new(),
    };
    if scenario.horizon == 0.0 {
        if wants(Artifact::Endpoints) {
            output::write_json(&out.join("endpoints.json"), &file)?;
        }
        println!("horizon 0: endpoints only");
        return Ok(());
    }

    let trajs: Vec<Result<BarrierTrajectory, Error>> = branches
        .par_iter()
        .map(|(_, tp)| integrate_barrier(&sys, tp, scenario.horizon, &settings.integrator))
        .collect();
    let mut trajectories = Vec::with_capacity(trajs.len());
    for (k, t) in trajs.into_iter().enumerate() {
        trajectories.push(t.map_err(solver(&format!("branch {k}")))?);
    }

    let mut violations = Vec::new();
    let mut curves = Vec::new();
    for (k, ((endpoint, tp), t)) in branches.iter().zip(&trajectories).enumerate() {
        violations.extend(monitor(&sys, t, k, settings.feasibility_tol));
        let hres = hamiltonian_residual(&sys, t).map_err(solver(&format!("branch {k}")))?;
        let mut reasons = Vec::new();
        if hres > settings.h_residual_tol {
            reasons.push(format!("hamiltonian residual {hres:.3e} above {:.1e}", settings.h_residual_tol));
        }
        let mut status = if reasons.is_empty() { BranchStatus::Unverified } else { BranchStatus::ScreenedOut };
        if !no_verify && wants(Artifact::Verify) {
            let v = &scenario.verify;
            let report = semipermeability_probe(&sys, t, &v.offsets, v.horizon, v.budget, &settings.probe)
                .map_err(solver(&format!("probe of branch {k}")))?;
            let s = &report.summary;
            if !s.is_barrier {
                reasons.push(format!(
                    "probe: interior admissible {:.2}, exterior admissible {:.2}, asymmetry {:.2}",
                    s.interior_admissible_rate, s.exterior_admissible_rate, s.asymmetry
                ));
            }
            let var = variational_adjoint_check(&sys, t, tp.lambda_t.as_slice(), &unit(sys.n()), false)
                .map_err(solver(&format!("variational check of branch {k}")))?;
            let growth = scenario.growth_constant.map(|c| growth_bound_check(t, c));
            status = if reasons.is_empty() { BranchStatus::Barrier } else { BranchStatus::ScreenedOut };
            if status == BranchStatus::Barrier {
                if var.max_drift > settings.drift_tol {
                    violations.push(format!("branch {k}: adjoint pairing drift {:.3e}", var.max_drift));
                }
                if growth == Some(false) {
                    violations.push(format!("branch {k}: growth bound exceeded"));
                }
            }
            output::write_json(
                &out.join(format!("verify_{k}.json")),
                &VerifyFile {
                    branch: k,
                    endpoint: *endpoint,
                    stop: t.stop,
                    events: &t.events,
                    hamiltonian_residual: hres,
                    max_multiplier_jump: t.max_multiplier_jump,
                    chattering_suspected: t.chattering_suspected,
                    growth_bound_ok: growth,
                    variational: &var,
                    probe: &report,
                    status,
                    reasons: &reasons,
                },
            )?;
        }
        if wants(Artifact::BarrierCsv) {
            output::write_file(&out.join(format!("barrier_{k}.csv")), &output::barrier_csv(&sys, t))?;
        }
        println!(
            "branch {k}: endpoint {endpoint}, lambda {:?}, stop {:?} after {:.6}, {}",
            tp.lambda_t.as_slice(),
            t.stop,
            t.duration(),
            match status {
                BranchStatus::Barrier => "barrier".to_string(),
                BranchStatus::Unverified => "kept (unverified)".to_string(),
                BranchStatus::ScreenedOut => format!("screened out: {}", reasons.join("; ")),
            }
        );
        curves.push(Curve { traj: t, kept: status != BranchStatus::ScreenedOut });
        file.branches.push(BranchView {
            branch: k,
            endpoint: *endpoint,
            lambda_t: tp.lambda_t.as_slice().to_vec(),
            stop: t.stop,
            duration: t.duration(),
            points: t.len(),
            hamiltonian_residual: hres,
            status,
            reasons,
        });
    }
    if wants(Artifact::Endpoints) {
        output::write_json(&out.join("endpoints.json"), &file)?;
    }
    if wants(Artifact::Svg) {
        let shaded = outside_cells(&sys, &b.lower, &b.upper, settings.tangency.classify_tol)?;
        output::write_file(&out.join("barrier.svg"), &output::barrier_svg(&b.lower, &b.upper, &shaded, &curves))?;
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(violations))
    }
}

fn unit(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    v
}

fn parse_grid(s: &str) -> Result<[usize; 2], Failure> {
    let bad = || Failure::Parse(format!("grid must look like AxB with A, B >= 1, got {s:?}"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b == 0 {
        return Err(bad());
    }
    Ok([a, b])
}

fn gtilde_map(path: &Path, common: &CommonArgs, grid: Option<&str>) -> Result<(), Failure> {
    let Prepared { scenario, sys, settings } = prepare(path, common)?;
    let b = &scenario.seed_box;
    let counts = match grid {
        Some(g) if sys.n() != 2 => return Err(Failure::Parse(format!("--grid {g} needs a two-dimensional state"))),
        Some(g) => parse_grid(g)?.to_vec(),
        None => b.counts.clone(),
    };
    let points = seed_grid(&b.lower, &b.upper, &counts);
    let opts = settings.tangency.minmax;
    let rows: Vec<Result<String, Error>> = points
        .par_iter()
        .map(|x| {
            let r = g_tilde(&sys, x, &opts)?;
            let mut row: Vec<String> = x.iter().map(|&v| output::num(v)).collect();
            row.push(output::num(r.value));
            row.push(if r.differentiable { "1" } else { "0" }.into());
            Ok(row.join(","))
        })
        .collect();
    let mut csv: Vec<String> = (1..=sys.n()).map(|i| format!("x{i}")).collect();
    csv.extend(["gtilde".to_string(), "differentiable_flag".to_string()]);
    let mut text = csv.join(",");
    text.push('\n');
    for r in rows {
        text.push_str(&r.map_err(solver("g~ evaluation"))?);
        text.push('\n');
    }
    output::write_file(&common.out.join("gtilde_map.csv"), &text)?;
    println!("{} points written to {}", points.len(), common.out.join("gtilde_map.csv").display());
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("BARRIER_SYNTH_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Failure::Parse(format!("BARRIER_SYNTH_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Solver(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run { scenario, common, no_verify } => run(scenario, common, *no_verify),
        Command::GtildeMap { scenario, common, grid } => gtilde_map(scenario, common, grid.as_deref()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code())
        }
    }
}
