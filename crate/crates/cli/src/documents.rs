//! Targets, map documents and the CLI error type.

use catuni::domain_mesh::{build_disk_mesh, build_sphere_mesh, DomainKind, DomainMesh};
use catuni::energy_forms::PiecewiseMap;
use catuni::target_surface::fixtures::{builtin, BUILTIN_NAMES};
use catuni::target_surface::{load_surface, ConeSurface, SurfaceDocument, SurfaceError, SurfacePoint};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};

pub const SCHEMA: &str = "catuni/1";

/// Deepest mesh level a document may reference; level 8 has ~400k faces.
pub const MAX_LEVEL: usize = 8;

pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNRESOLVED: i32 = 3;

/// A failure with the module that detected it and the violated precondition.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub module: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(module: &'static str, message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, module, message: message.into() }
    }

    pub fn fail(module: &'static str, message: impl Into<String>) -> Self {
        CliError { code: EXIT_FAIL, module, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.module, self.message)
    }
}

/// Maps a surface error: parse errors are input errors, violations are
/// validation failures.
pub fn surface_error(e: SurfaceError) -> CliError {
    match e {
        SurfaceError::Invalid(_) => CliError::fail("target_surface", format!("target is not an admissible CAT surface: {e}")),
        other => CliError::usage("target_surface", format!("target does not load: {other}")),
    }
}

/// Where a target comes from and the hash of its canonical document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetRef {
    /// `builtin:<name>` or an absolute file path.
    pub source: String,
    /// SHA-256 of the canonical JSON target document.
    pub fingerprint: String,
}

pub struct Target {
    pub reference: TargetRef,
    pub surface: ConeSurface,
}

/// Target text of a builtin name or a file, with its source string.
pub fn target_source(spec: &str) -> Result<(String, Result<ConeSurface, SurfaceError>), CliError> {
    let name = spec.strip_prefix("builtin:").unwrap_or(spec);
    if BUILTIN_NAMES.contains(&name) {
        return Ok((format!("builtin:{name}"), builtin(name)));
    }
    if spec.starts_with("builtin:") {
        return Err(CliError::usage(
            "target_surface",
            format!("unknown builtin target {name:?}; known: {}", BUILTIN_NAMES.join(", ")),
        ));
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::usage("target_surface", format!("target {spec:?} is neither a builtin name nor a readable file: {e}"))
    })?;
    let source = path.canonicalize().unwrap_or_else(|_| path.to_path_buf());
    Ok((source.display().to_string(), load_surface(&text)))
}

pub fn fingerprint(surface: &ConeSurface) -> String {
    let text = crate::json::to_string(&SurfaceDocument::from_surface(surface)).expect("target document serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_target(spec: &str) -> Result<Target, CliError> {
    let (source, surface) = target_source(spec)?;
    let surface = surface.map_err(surface_error)?;
    let fingerprint = fingerprint(&surface);
    Ok(Target { reference: TargetRef { source, fingerprint }, surface })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainRef {
    pub kind: DomainKind,
    pub level: usize,
}

impl DomainRef {
    pub fn build(&self) -> DomainMesh {
        match self.kind {
            DomainKind::Sphere => build_sphere_mesh(self.level),
            DomainKind::Disk => build_disk_mesh(self.level),
        }
    }
}

/// A piecewise map with references to its target and domain mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDocument {
    pub schema: String,
    pub kind: String,
    pub target: TargetRef,
    pub domain: DomainRef,
    /// Image of each domain vertex.
    pub values: Vec<SurfacePoint>,
}

impl MapDocument {
    pub fn new(target: &TargetRef, map: &PiecewiseMap) -> Self {
        MapDocument {
            schema: SCHEMA.into(),
            kind: "map".into(),
            target: target.clone(),
            domain: DomainRef { kind: map.domain, level: map.level },
            values: map.values.clone(),
        }
    }
}

/// A map document resolved against its target and domain mesh.
pub struct LoadedMap {
    pub path: PathBuf,
    pub target: Target,
    pub mesh: DomainMesh,
    pub map: PiecewiseMap,
}

/// Loads a map document. Relative target paths resolve against the
/// document's directory.
pub fn load_map(path: &Path) -> Result<LoadedMap, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage("uniformize_cli", format!("map document {} is not readable: {e}", path.display())))?;
    let doc: MapDocument = serde_json::from_str(&text)
        .map_err(|e| CliError::usage("uniformize_cli", format!("map document {} does not parse: {e}", path.display())))?;
    if doc.schema != SCHEMA || doc.kind != "map" {
        return Err(CliError::usage(
            "uniformize_cli",
            format!("{} has schema {:?} and kind {:?}, expected {SCHEMA:?} and \"map\"", path.display(), doc.schema, doc.kind),
        ));
    }
    let mut spec = doc.target.source.clone();
    if !spec.starts_with("builtin:") && Path::new(&spec).is_relative() {
        if let Some(dir) = path.parent() {
            spec = dir.join(&spec).display().to_string();
        }
    }
    let (_, surface) = target_source(&spec)
        .map_err(|e| CliError::usage("uniformize_cli", format!("dangling target reference {:?}: {}", doc.target.source, e.message)))?;
    let surface = surface.map_err(surface_error)?;
    let found = fingerprint(&surface);
    if found != doc.target.fingerprint {
        return Err(CliError::usage(
            "uniformize_cli",
            format!("target {:?} has fingerprint {found}, but the map was computed against {}", doc.target.source, doc.target.fingerprint),
        ));
    }
    if doc.domain.level > MAX_LEVEL {
        return Err(CliError::usage("domain_mesh", format!("domain level {} exceeds the supported maximum {MAX_LEVEL}", doc.domain.level)));
    }
    let mesh = doc.domain.build();
    if doc.values.len() != mesh.n_vertices() {
        return Err(CliError::usage(
            "energy_forms",
            format!("map has {} values but the {:?} mesh of level {} has {} vertices", doc.values.len(), doc.domain.kind, doc.domain.level, mesh.n_vertices()),
        ));
    }
    for (i, p) in doc.values.iter().enumerate() {
        let ok = match *p {
            SurfacePoint::Vertex { v } => v < surface.n_vertices(),
            SurfacePoint::Edge { edge, t } => edge < surface.edges().len() && (0.0..=1.0).contains(&t),
            SurfacePoint::Face { face, bary } => face < surface.n_faces() && bary.iter().all(|b| b.is_finite() && *b >= -1e-9),
        };
        if !ok {
            return Err(CliError::usage("target_surface", format!("value {i} of the map is a dangling reference into the target: {p:?}")));
        }
    }
    let map = PiecewiseMap { domain: doc.domain.kind, level: doc.domain.level, values: doc.values };
    Ok(LoadedMap { path: path.to_path_buf(), target: Target { reference: doc.target, surface }, mesh, map })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = crate::json::to_string(value).map_err(|e| CliError::fail("uniformize_cli", format!("document does not serialize: {e}")))?;
    std::fs::write(path, text).map_err(|e| CliError::usage("uniformize_cli", format!("cannot write {}: {e}", path.display())))
}
