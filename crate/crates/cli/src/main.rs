//! `catuni`: validate cone-surface targets, uniformize them, solve Dirichlet
//! problems and analyze the resulting maps.

mod documents;
mod json;
mod report;

use catuni::domain_mesh::{build_disk_mesh, DomainKind};
use catuni::energy_forms::closed_form::{cone_power, planar};
use catuni::harmonic_solver::{solve_dirichlet, uniformize, DirichletProblem, Pins, SolverConfig};
use catuni::qc_degree::mobius_check;
use catuni::target_surface::{ConeSurface, Topology};
use clap::{Args, Parser, Subcommand, ValueEnum};
use documents::{load_map, load_target, target_source, write_json, CliError, MapDocument, Target, EXIT_FAIL};
use report::{analyze_into, MobiusRow, ProbePolicy, ReportDocument, RunManifest, Status};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Default relative tolerance of the energy–area and conformality predicates.
const DEFAULT_TOL: f64 = 0.02;
/// Default Möbius residual tolerance, relative to the target diameter.
const DEFAULT_MOBIUS_TOL: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "catuni", version, about = "Conformal uniformization of cone-metric surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Random seed for probe and fiber sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative tolerance of the report predicates.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory for map and report documents.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// JSON array of extra probe points `[x, y, z]`.
    #[arg(long)]
    points: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PinChoice {
    Standard,
    Alternate,
}

#[derive(Subcommand)]
enum Command {
    /// Checks that a target is a CAT surface and lists every violation.
    Validate {
        /// Builtin target name or target document (JSON or OBJ).
        #[arg(long)]
        target: String,
    },
    /// Computes the conformal harmonic map from the sphere onto a target.
    Uniformize {
        #[arg(long)]
        target: String,
        /// Finest sphere mesh level.
        #[arg(long, default_value_t = 4)]
        level: usize,
        /// Solver configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Three-point normalization.
        #[arg(long, value_enum, default_value = "standard")]
        pins: PinChoice,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solves a Dirichlet problem from the unit disk into a flat target.
    Dirichlet {
        #[arg(long)]
        target: String,
        /// Boundary data: `power:M` for z^M, `affine:K` for z + K·z̄, or
        /// `cone` for the homogeneous model at the target's largest cone point.
        #[arg(long)]
        boundary: String,
        /// Finest disk mesh level.
        #[arg(long, default_value_t = 4)]
        level: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Analyzes a stored map: orders, tangent fits, distortion, degree.
    Analyze {
        /// Map document.
        map: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compares two sphere maps onto one target up to a Möbius transformation.
    Mobius {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Prints the summary of a report document and exits with its status.
    Report {
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}

fn run(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Validate { target } => cmd_validate(&target),
        Command::Uniformize { target, level, config, pins, run } => cmd_uniformize(&target, level, config.as_deref(), pins, &run),
        Command::Dirichlet { target, boundary, level, config, run } => cmd_dirichlet(&target, &boundary, level, config.as_deref(), &run),
        Command::Analyze { map, run } => cmd_analyze(&map, &run),
        Command::Mobius { a, b, run } => cmd_mobius(&a, &b, &run),
        Command::Report { report } => cmd_report(&report),
    }
}

fn cmd_validate(spec: &str) -> Result<i32, CliError> {
    let (source, surface) = target_source(spec)?;
    match surface {
        Ok(s) => {
            println!("valid: {source}: {:?} target, κ = {}, {} vertices, {} faces", s.topology, s.kappa(), s.n_vertices(), s.n_faces());
            Ok(0)
        }
        Err(catuni::target_surface::SurfaceError::Invalid(violations)) => {
            println!("invalid: {source}: {} violations", violations.len());
            for v in &violations {
                println!("  target_surface: {v}");
            }
            Ok(EXIT_FAIL)
        }
        Err(e) => Err(documents::surface_error(e)),
    }
}

fn read_config(path: Option<&Path>) -> Result<SolverConfig, CliError> {
    let Some(path) = path else { return Ok(SolverConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage("harmonic_solver", format!("config {} is not readable: {e}", path.display())))?;
    let config: SolverConfig =
        serde_json::from_str(&text).map_err(|e| CliError::usage("harmonic_solver", format!("config {} does not parse: {e}", path.display())))?;
    config.validate().map_err(|e| CliError::usage("harmonic_solver", format!("config is invalid: {e}")))?;
    Ok(config)
}

fn read_points(path: Option<&Path>) -> Result<Vec<[f64; 3]>, CliError> {
    let Some(path) = path else { return Ok(Vec::new()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage("uniformize_cli", format!("points file {} is not readable: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage("uniformize_cli", format!("points file {} is not a JSON array of [x, y, z]: {e}", path.display())))
}

fn check_level(level: usize) -> Result<(), CliError> {
    if level > documents::MAX_LEVEL {
        return Err(CliError::usage("domain_mesh", format!("level {level} exceeds the supported maximum {}", documents::MAX_LEVEL)));
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<f64, CliError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CliError::usage("uniformize_cli", format!("--tol must be positive, got {tol}")));
    }
    Ok(tol)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::usage("uniformize_cli", format!("output directory {} cannot be created: {e}", dir.display())))
}

/// Writes the documents, prints the summary and returns the exit status.
fn finish(out: &Path, map: Option<&MapDocument>, doc: &ReportDocument) -> Result<i32, CliError> {
    prepare_out(out)?;
    if let Some(m) = map {
        write_json(&out.join("map.json"), m)?;
    }
    write_json(&out.join("report.json"), doc)?;
    print!("{}", doc.summary());
    Ok(doc.status.exit_code())
}

fn manifest(command: &str, target: &Target, level: usize, run: &RunArgs, tol: f64) -> Result<RunManifest, CliError> {
    Ok(RunManifest {
        command: command.into(),
        target: target.reference.clone(),
        inputs: Vec::new(),
        level,
        solver: None,
        pins: None,
        boundary: None,
        probe_policy: ProbePolicy::new(read_points(run.points.as_deref())?),
        seed: run.seed,
        tol,
    })
}

fn cmd_uniformize(spec: &str, level: usize, config: Option<&Path>, pins: PinChoice, run: &RunArgs) -> Result<i32, CliError> {
    check_level(level)?;
    let tol = check_tol(run.tol.unwrap_or(DEFAULT_TOL))?;
    let config = read_config(config)?;
    let target = load_target(spec)?;
    let surface = &target.surface;
    if surface.topology != Topology::Sphere {
        return Err(CliError::usage("harmonic_solver", format!("uniformization needs a sphere target, {spec} is a {:?}", surface.topology)));
    }
    if surface.embedding().is_none() {
        return Err(CliError::usage(
            "harmonic_solver",
            "no initial correspondence: the target carries no reference embedding (give it as OBJ with vertex positions)",
        ));
    }
    let pins = match pins {
        PinChoice::Standard => Pins::standard(),
        PinChoice::Alternate => Pins::alternate(),
    };
    let mut m = manifest("uniformize", &target, level, run, tol)?;
    m.solver = Some(config.clone());
    m.pins = Some(pins);
    let mut doc = ReportDocument::new(m);
    let solution = match uniformize(surface, |x| surface.locate_embedded(x), level, &pins, &config) {
        Ok(s) => s,
        Err(e) => {
            doc.diagnostics.push(format!("harmonic_solver: {e}"));
            doc.verdict = format!("failed (harmonic_solver: {e})");
            doc.status = Status::Fail;
            finish(&run.out, None, &doc)?;
            return Err(CliError::fail("harmonic_solver", format!("solver aborted: {e}")));
        }
    };
    let finest = solution.finest();
    analyze_into(&mut doc, &finest.mesh, surface, &finest.map, &solution.levels);
    let map = MapDocument::new(&target.reference, &finest.map);
    finish(&run.out, Some(&map), &doc)
}

/// Boundary map of a Dirichlet problem, as a full map on the disk mesh.
fn boundary_map(spec: &str, mesh: &catuni::domain_mesh::DomainMesh, surface: &ConeSurface) -> Result<catuni::energy_forms::PiecewiseMap, CliError> {
    let bad = |msg: String| CliError::usage("harmonic_solver", msg);
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let needs_embedding = || {
        if surface.embedding().is_none() {
            Err(bad(format!("boundary {spec:?} needs a target with a reference embedding")))
        } else {
            Ok(())
        }
    };
    let map = match kind {
        "power" => {
            needs_embedding()?;
            let m: i32 = arg.parse().ok().filter(|&m| m >= 1).ok_or_else(|| bad(format!("power:M needs an integer M ≥ 1, got {arg:?}")))?;
            planar(mesh, surface, |z| z.powi(m))
        }
        "affine" => {
            needs_embedding()?;
            let k: f64 = arg.parse().ok().filter(|k: &f64| (0.0..1.0).contains(k)).ok_or_else(|| bad(format!("affine:K needs K in [0, 1), got {arg:?}")))?;
            planar(mesh, surface, |z| z + k * z.conj())
        }
        "cone" => {
            let apex = (0..surface.n_vertices())
                .filter(|&v| !surface.is_boundary_vertex(v))
                .max_by(|&a, &b| surface.beta(a).total_cmp(&surface.beta(b)))
                .ok_or_else(|| bad("the target has no interior vertex".into()))?;
            cone_power(mesh, surface, &catuni::target_surface::SurfacePoint::vertex(apex), 1.0)
        }
        _ => return Err(bad(format!("unknown boundary {spec:?}; expected power:M, affine:K or cone"))),
    };
    map.map_err(|e| CliError::usage("energy_forms", format!("boundary {spec:?} leaves the target: {e}")))
}

fn cmd_dirichlet(spec: &str, boundary: &str, level: usize, config: Option<&Path>, run: &RunArgs) -> Result<i32, CliError> {
    check_level(level)?;
    let tol = check_tol(run.tol.unwrap_or(DEFAULT_TOL))?;
    let config = read_config(config)?;
    let target = load_target(spec)?;
    let surface = &target.surface;
    if surface.topology != Topology::Disk {
        return Err(CliError::usage("harmonic_solver", format!("Dirichlet problems need a disk target, {spec} is a {:?}", surface.topology)));
    }
    let mesh = build_disk_mesh(level);
    let data = boundary_map(boundary, &mesh, surface)?;
    let trace = mesh.boundary.iter().map(|&v| data.values[v]).collect();
    let problem = DirichletProblem::new(mesh, trace, None).map_err(|e| CliError::usage("harmonic_solver", format!("boundary data rejected: {e}")))?;
    let mut m = manifest("dirichlet", &target, level, run, tol)?;
    m.solver = Some(config.clone());
    m.boundary = Some(boundary.into());
    let mut doc = ReportDocument::new(m);
    let solution = solve_dirichlet(&problem, surface, &config).map_err(|e| CliError::fail("harmonic_solver", format!("solver aborted: {e}")))?;
    let finest = solution.finest();
    analyze_into(&mut doc, &finest.mesh, surface, &finest.map, &solution.levels);
    let map = MapDocument::new(&target.reference, &finest.map);
    finish(&run.out, Some(&map), &doc)
}

fn cmd_analyze(path: &Path, run: &RunArgs) -> Result<i32, CliError> {
    let tol = check_tol(run.tol.unwrap_or(DEFAULT_TOL))?;
    let loaded = load_map(path)?;
    let mut m = manifest("analyze", &loaded.target, loaded.mesh.level, run, tol)?;
    m.inputs = vec![loaded.path.display().to_string()];
    let mut doc = ReportDocument::new(m);
    analyze_into(&mut doc, &loaded.mesh, &loaded.target.surface, &loaded.map, &[]);
    finish(&run.out, None, &doc)
}

fn cmd_mobius(a: &Path, b: &Path, run: &RunArgs) -> Result<i32, CliError> {
    let tol = check_tol(run.tol.unwrap_or(DEFAULT_MOBIUS_TOL))?;
    let u = load_map(a)?;
    let v = load_map(b)?;
    if u.target.reference.fingerprint != v.target.reference.fingerprint {
        return Err(CliError::usage(
            "qc_degree",
            format!("the maps have different targets: {} and {}", u.target.reference.source, v.target.reference.source),
        ));
    }
    if u.mesh.kind != DomainKind::Sphere || v.mesh.kind != DomainKind::Sphere {
        return Err(CliError::usage("qc_degree", "Möbius comparison needs two sphere maps"));
    }
    let surface = &u.target.surface;
    let abs_tol = tol * surface.diameter();
    let fit = mobius_check(&u.mesh, &u.map, &v.mesh, &v.map, surface, abs_tol, run.seed)
        .map_err(|e| CliError::fail("qc_degree", format!("Möbius check failed: {e}")))?;
    let mut m = manifest("mobius", &u.target, u.mesh.level, run, tol)?;
    m.inputs = vec![u.path.display().to_string(), v.path.display().to_string()];
    let mut doc = ReportDocument::new(m);
    doc.mobius = Some(MobiusRow::new(&fit));
    doc.predicates.push(report::Predicate {
        name: "mobius_residual".into(),
        pass: Some(fit.pass),
        detail: format!("RMS {:.4e} against {:.4e} over {} samples", fit.rms, abs_tol, fit.samples),
    });
    doc.verdict = if fit.pass { "Möbius equivalent" } else { "not Möbius equivalent" }.into();
    doc.settle_status();
    finish(&run.out, None, &doc)
}

fn cmd_report(path: &Path) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage("uniformize_cli", format!("report {} is not readable: {e}", path.display())))?;
    let doc: ReportDocument =
        serde_json::from_str(&text).map_err(|e| CliError::usage("uniformize_cli", format!("report {} does not parse: {e}", path.display())))?;
    if doc.schema != documents::SCHEMA || doc.kind != "report" {
        return Err(CliError::usage("uniformize_cli", format!("{} is not a {} report", path.display(), documents::SCHEMA)));
    }
    print!("{}", doc.summary());
    for r in &doc.levels {
        println!("level {}: E = {:.6e}, A = {:.6e}, G/E = {:.4e}, ‖φ‖₁ = {:.4e}", r.level, r.energy.value, r.area.value, r.gap_ratio.value, r.hopf_l1.value);
    }
    for p in &doc.points {
        let ord = p.ord.map_or("-".to_string(), |q| format!("{:.4}", q.value));
        let h = p.h.map_or(if p.h_infinite { "inf".to_string() } else { "-".to_string() }, |q| format!("{:.4}", q.value));
        let k = p.fit.as_ref().map_or("-".to_string(), |f| format!("{:.4}", f.k.value));
        println!("point {:?} ({:?}): ord {ord}, k {k}, H {h}", p.position, p.reason);
    }
    Ok(doc.status.exit_code())
}
