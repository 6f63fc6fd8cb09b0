//! Target documents: a JSON edge-length form and Wavefront OBJ.

use super::{ConeSurface, SurfaceError, Topology};
use crate::model::V3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// JSON target document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceDocument {
    pub topology: Topology,
    pub kappa: f64,
    pub vertices: usize,
    pub faces: Vec<[usize; 3]>,
    /// Keys are `"i-j"` vertex pairs in either order.
    pub edge_lengths: BTreeMap<String, f64>,
}

impl SurfaceDocument {
    pub fn from_surface(s: &ConeSurface) -> Self {
        let mut edge_lengths = BTreeMap::new();
        for e in s.edges() {
            let (a, b) = (e.v[0].min(e.v[1]), e.v[0].max(e.v[1]));
            edge_lengths.insert(format!("{a}-{b}"), e.length);
        }
        SurfaceDocument {
            topology: s.topology,
            kappa: s.kappa(),
            vertices: s.n_vertices(),
            faces: s.faces().to_vec(),
            edge_lengths,
        }
    }

    pub fn build(&self) -> Result<ConeSurface, SurfaceError> {
        let mut lengths = BTreeMap::new();
        for (k, &l) in &self.edge_lengths {
            let (a, b) = k
                .split_once('-')
                .ok_or_else(|| SurfaceError::Parse(format!("edge key {k:?} is not of the form i-j")))?;
            let a: usize = a.trim().parse().map_err(|_| SurfaceError::Parse(format!("bad vertex in edge key {k:?}")))?;
            let b: usize = b.trim().parse().map_err(|_| SurfaceError::Parse(format!("bad vertex in edge key {k:?}")))?;
            if !(l.is_finite() && l > 0.0) {
                return Err(SurfaceError::Parse(format!("edge {k} has non-positive length {l}")));
            }
            lengths.insert((a.min(b), a.max(b)), l);
        }
        ConeSurface::new(self.topology, self.kappa, self.vertices, self.faces.clone(), &lengths)
    }
}

pub fn parse_surface_json(text: &str) -> Result<ConeSurface, SurfaceError> {
    let doc: SurfaceDocument = serde_json::from_str(text).map_err(|e| SurfaceError::Parse(e.to_string()))?;
    doc.build()
}

/// Parses OBJ text. Edge lengths come from the vertex coordinates and the
/// embedding is kept only as a reference. Optional comment directives
/// `# kappa 1` (arc lengths on the unit sphere) and `# topology disk|sphere`
/// are honoured; otherwise topology follows from the presence of boundary.
pub fn parse_surface_obj(text: &str) -> Result<ConeSurface, SurfaceError> {
    let mut pos = Vec::new();
    let mut faces = Vec::new();
    let mut kappa = 0.0;
    let mut topology = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("#") => match (it.next(), it.next()) {
                (Some("kappa"), Some(k)) => {
                    kappa = k.parse().map_err(|_| SurfaceError::Parse(format!("line {}: bad kappa", ln + 1)))?
                }
                (Some("topology"), Some(t)) => {
                    topology = Some(match t {
                        "sphere" => Topology::Sphere,
                        "disk" => Topology::Disk,
                        _ => return Err(SurfaceError::Parse(format!("line {}: unknown topology {t}", ln + 1))),
                    })
                }
                _ => {}
            },
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| SurfaceError::Parse(format!("line {}: bad vertex", ln + 1)))?;
                if c.len() < 2 {
                    return Err(SurfaceError::Parse(format!("line {}: vertex needs coordinates", ln + 1)));
                }
                pos.push(V3::new(c[0], c[1], c.get(2).copied().unwrap_or(0.0)));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or("");
                        head.parse::<i64>().ok().and_then(|i| {
                            if i > 0 {
                                Some(i as usize - 1)
                            } else if i < 0 && (-i) as usize <= pos.len() {
                                Some(pos.len() - (-i) as usize)
                            } else {
                                None
                            }
                        })
                    })
                    .collect::<Option<_>>()
                    .ok_or_else(|| SurfaceError::Parse(format!("line {}: bad face", ln + 1)))?;
                if idx.len() < 3 {
                    return Err(SurfaceError::Parse(format!("line {}: face needs three vertices", ln + 1)));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(SurfaceError::Parse("no faces".into()));
    }
    let topology = topology.unwrap_or_else(|| {
        let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for f in &faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        if count.values().all(|&c| c == 2) {
            Topology::Sphere
        } else {
            Topology::Disk
        }
    });
    ConeSurface::from_embedding(topology, kappa, &pos, faces)
}

/// Parses a target document, detecting JSON by its leading brace.
pub fn load_surface(text: &str) -> Result<ConeSurface, SurfaceError> {
    if text.trim_start().starts_with('{') {
        parse_surface_json(text)
    } else {
        parse_surface_obj(text)
    }
}
