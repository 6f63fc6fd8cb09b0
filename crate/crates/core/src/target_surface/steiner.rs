//! Graph-based distance engine with a certified error bound.
//!
//! Each edge carries Steiner points; every pair of points on the closure of
//! a face is joined by its straight in-face distance. Graph distances are
//! upper bounds on geodesic distances, and the result is further capped by
//! any straight unfolding found by the exact engine.

use super::{ConeSurface, OrdF64, SurfacePoint};
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Steiner-point distance engine with an additive error bound.
#[derive(Debug, Clone)]
pub struct DistanceEngine {
    /// Node positions: vertices first, then Steiner points edge by edge.
    nodes: Vec<SurfacePoint>,
    /// Node ids lying on the closure of each face.
    face_nodes: Vec<Vec<usize>>,
    adj: Vec<Vec<(usize, f64)>>,
    spacing: f64,
}

impl DistanceEngine {
    /// Builds the graph with Steiner spacing at most `h`.
    pub fn new(surface: &ConeSurface, h: f64) -> Self {
        let mut nodes: Vec<SurfacePoint> = (0..surface.n_vertices()).map(|v| SurfacePoint::Vertex { v }).collect();
        let mut on_edge = Vec::with_capacity(surface.edges().len());
        let mut spacing: f64 = 0.0;
        for (ei, e) in surface.edges().iter().enumerate() {
            let mut k = 1usize;
            while e.length / k as f64 > h {
                k *= 2;
            }
            spacing = spacing.max(e.length / k as f64);
            let mut ids = Vec::with_capacity(k - 1);
            for i in 1..k {
                ids.push(nodes.len());
                nodes.push(SurfacePoint::Edge { edge: ei, t: i as f64 / k as f64 });
            }
            on_edge.push(ids);
        }
        let mut face_nodes = Vec::with_capacity(surface.n_faces());
        for f in 0..surface.n_faces() {
            let mut ids: Vec<usize> = surface.faces()[f].to_vec();
            for e in surface.face_edges(f) {
                ids.extend_from_slice(&on_edge[e]);
            }
            face_nodes.push(ids);
        }
        let m = surface.model;
        let mut adj = vec![Vec::new(); nodes.len()];
        for (f, ids) in face_nodes.iter().enumerate() {
            let l = surface.layout(f);
            let pos: Vec<_> = ids
                .iter()
                .map(|&i| m.from_bary(l, &surface.bary_in(&nodes[i], f).expect("node on face")))
                .collect();
            for a in 0..ids.len() {
                for b in a + 1..ids.len() {
                    let d = m.dist(&pos[a], &pos[b]);
                    adj[ids[a]].push((ids[b], d));
                    adj[ids[b]].push((ids[a], d));
                }
            }
        }
        DistanceEngine { nodes, face_nodes, adj, spacing }
    }

    /// Largest spacing between consecutive Steiner points.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn attach(&self, surface: &ConeSurface, p: &SurfacePoint) -> Vec<(usize, f64)> {
        let m = surface.model;
        let mut out = Vec::new();
        for f in surface.faces_containing(p) {
            let l = surface.layout(f);
            let x = m.from_bary(l, &surface.bary_in(p, f).expect("incident"));
            for &i in &self.face_nodes[f] {
                let y = m.from_bary(l, &surface.bary_in(&self.nodes[i], f).expect("node on face"));
                out.push((i, m.dist(&x, &y)));
            }
        }
        out
    }

    /// Distance estimate `d` with error bound `eps`: the true distance lies
    /// in `[d - eps, d]`.
    pub fn distance(&self, surface: &ConeSurface, p: &SurfacePoint, q: &SurfacePoint) -> (f64, f64) {
        let p = surface.normalize(p);
        let q = surface.normalize(q);
        let src = self.attach(surface, &p);
        let dst = self.attach(surface, &q);
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut hops = vec![0usize; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        for &(i, d) in &src {
            if d < dist[i] {
                dist[i] = d;
                heap.push(Reverse((OrdF64(d), i)));
            }
        }
        let mut target = vec![f64::INFINITY; self.nodes.len()];
        for &(i, d) in &dst {
            target[i] = target[i].min(d);
        }
        let mut best = f64::INFINITY;
        let mut best_hops = 0;
        if surface.faces_containing(&p).iter().any(|f| surface.faces_containing(&q).contains(f)) {
            // Shared face: the straight in-face segment.
            let f = *surface.faces_containing(&p).iter().find(|f| surface.faces_containing(&q).contains(f)).unwrap();
            let l = surface.layout(f);
            let m = surface.model;
            best = m.dist(&m.from_bary(l, &surface.bary_in(&p, f).unwrap()), &m.from_bary(l, &surface.bary_in(&q, f).unwrap()));
        }
        while let Some(Reverse((OrdF64(d), u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            if d >= best {
                break;
            }
            if target[u].is_finite() && d + target[u] < best {
                best = d + target[u];
                best_hops = hops[u] + 1;
            }
            for &(v, w) in &self.adj[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    hops[v] = hops[u] + 1;
                    heap.push(Reverse((OrdF64(nd), v)));
                }
            }
        }
        // Each graph hop replaces a geodesic piece crossing an edge; snapping a
        // crossing to the nearest Steiner point costs at most one spacing.
        let mut eps = best_hops as f64 * self.spacing;
        if let Ok(l) = surface.log(&p, &q) {
            if l.dist <= best {
                best = l.dist;
                eps = 0.0;
            }
        }
        (best, eps)
    }
}
