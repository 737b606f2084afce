//! Ring ("onion") triangulation of the unit disk with a quadratic node layer.
//!
//! Ring `i` (radius `i/rings`) carries `segments` vertices; consecutive rings
//! are staggered by half a segment so each annulus splits into `2·segments`
//! triangles and the mesh is symmetric under `x2 ↦ -x2`. The outer ring has
//! no offset, so boundary vertex `j` sits at `y = j/segments`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{FsiError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub rings: usize,
    pub segments: usize,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Boundary vertices with their curve parameter, ordered by `y`.
    pub boundary: Vec<(usize, f64)>,
    /// Quadratic nodes: vertices and edge midpoints, numbered by radius then angle.
    pub nodes: Vec<[f64; 2]>,
    pub vertex_node: Vec<usize>,
    /// Per triangle: three vertex nodes then the midpoints of edges 01, 12, 20.
    pub elements: Vec<[usize; 6]>,
    /// Boundary nodes (vertices and edge midpoints) with their parameter, ordered by `y`.
    pub boundary_nodes: Vec<(usize, f64)>,
    pub on_boundary: Vec<bool>,
}

fn quantize(v: f64) -> i64 {
    (v * 1e9).round() as i64
}

impl Mesh {
    pub fn onion(rings: usize, segments: usize) -> Result<Mesh> {
        if rings < 2 || segments < 8 {
            return Err(FsiError::Mesh(format!("need rings >= 2 and segments >= 8, got ({rings}, {segments})")));
        }
        let n = segments;
        let shift = |ring: usize| if (rings - ring) % 2 == 0 { 0.0 } else { 0.5 };
        let mut vertices = vec![[0.0, 0.0]];
        for ring in 1..=rings {
            let r = ring as f64 / rings as f64;
            for j in 0..n {
                let th = 2.0 * PI * (j as f64 + shift(ring)) / n as f64;
                let (s, c) = th.sin_cos();
                vertices.push([r * c, r * s]);
            }
        }
        let vid = |ring: usize, j: usize| 1 + (ring - 1) * n + (j % n);
        let mut triangles = Vec::with_capacity(n * (2 * rings - 1));
        for j in 0..n {
            triangles.push([0, vid(1, j), vid(1, j + 1)]);
        }
        for ring in 1..rings {
            // outer vertex d+k lies between inner vertices k and k+1
            let d = if shift(ring + 1) > shift(ring) { 0 } else { 1 };
            for k in 0..n {
                triangles.push([vid(ring, k), vid(ring + 1, k + d), vid(ring, k + 1)]);
                triangles.push([vid(ring + 1, k + d), vid(ring + 1, k + d + 1), vid(ring, k + 1)]);
            }
        }
        for t in triangles.iter_mut() {
            if signed_area(&vertices, *t) < 0.0 {
                t.swap(1, 2);
            }
        }
        let boundary: Vec<(usize, f64)> = (0..n).map(|j| (vid(rings, j), j as f64 / n as f64)).collect();
        Ok(Self::with_quadratic_nodes(rings, segments, vertices, triangles, boundary))
    }

    fn with_quadratic_nodes(
        rings: usize,
        segments: usize,
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<(usize, f64)>,
    ) -> Mesh {
        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let mut e3 = [0; 3];
            for (slot, (a, b)) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])].into_iter().enumerate() {
                let key = (a.min(b), a.max(b));
                let id = *edge_id.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
                e3[slot] = id;
            }
            tri_edges.push(e3);
        }
        let nv = vertices.len();
        // provisional numbering: vertices, then edges
        let mut raw: Vec<[f64; 2]> = vertices.clone();
        for &(a, b) in &edges {
            raw.push([0.5 * (vertices[a][0] + vertices[b][0]), 0.5 * (vertices[a][1] + vertices[b][1])]);
        }
        let key = |p: [f64; 2]| {
            let r = p[0].hypot(p[1]);
            let th = if r < 1e-14 { 0.0 } else { p[1].atan2(p[0]).rem_euclid(2.0 * PI) };
            (quantize(r), quantize(th))
        };
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by_key(|&i| key(raw[i]));
        let mut new_index = vec![0; raw.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let nodes: Vec<[f64; 2]> = order.iter().map(|&i| raw[i]).collect();
        let vertex_node: Vec<usize> = (0..nv).map(|v| new_index[v]).collect();
        let elements: Vec<[usize; 6]> = triangles
            .iter()
            .zip(&tri_edges)
            .map(|(t, e)| {
                [
                    vertex_node[t[0]],
                    vertex_node[t[1]],
                    vertex_node[t[2]],
                    new_index[nv + e[0]],
                    new_index[nv + e[1]],
                    new_index[nv + e[2]],
                ]
            })
            .collect();
        let boundary_vertex: HashMap<usize, f64> = boundary.iter().copied().collect();
        let mut boundary_nodes: Vec<(usize, f64)> = boundary.iter().map(|&(v, y)| (vertex_node[v], y)).collect();
        for (e, &(a, b)) in edges.iter().enumerate() {
            if let (Some(&ya), Some(&yb)) = (boundary_vertex.get(&a), boundary_vertex.get(&b)) {
                // consecutive boundary vertices; the wrap-around edge straddles y = 0
                let mut y = 0.5 * (ya + yb);
                if (ya - yb).abs() > 0.5 {
                    y = (y + 0.5).rem_euclid(1.0);
                }
                boundary_nodes.push((new_index[nv + e], y));
            }
        }
        boundary_nodes.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut on_boundary = vec![false; nodes.len()];
        for &(i, _) in &boundary_nodes {
            on_boundary[i] = true;
        }
        Mesh { rings, segments, vertices, triangles, boundary, nodes, vertex_node, elements, boundary_nodes, on_boundary }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Characteristic mesh size (longest edge).
    pub fn h(&self) -> f64 {
        let mut h = 0.0f64;
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let (p, q) = (self.vertices[a], self.vertices[b]);
                h = h.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        h
    }

    /// Node permutation realising the reflection `x2 ↦ -x2`.
    pub fn reflection(&self) -> Vec<usize> {
        let lookup: HashMap<(i64, i64), usize> =
            self.nodes.iter().enumerate().map(|(i, p)| ((quantize(p[0]), quantize(p[1])), i)).collect();
        self.nodes
            .iter()
            .map(|p| *lookup.get(&(quantize(p[0]), quantize(-p[1]))).expect("onion mesh is reflection symmetric"))
            .collect()
    }

    /// Plain-text export: vertex count, `x y` lines, triangle count,
    /// `i j k` lines, boundary count, `vertex_index y` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", self.vertices.len()).unwrap();
        for v in &self.vertices {
            writeln!(s, "{:.17e} {:.17e}", v[0], v[1]).unwrap();
        }
        writeln!(s, "{}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        writeln!(s, "{}", self.boundary.len()).unwrap();
        for (v, y) in &self.boundary {
            writeln!(s, "{} {:.17e}", v, y).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let bad = |msg: &str| FsiError::Mesh(format!("mesh text: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = || lines.next().ok_or_else(|| bad("unexpected end"));
        let parse_count = |l: &str| l.trim().parse::<usize>().map_err(|_| bad("count"));
        let nv = parse_count(next()?)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let f: Vec<f64> = next()?.split_whitespace().map(|t| t.parse().map_err(|_| bad("vertex"))).collect::<Result<_>>()?;
            if f.len() != 2 {
                return Err(bad("vertex"));
            }
            vertices.push([f[0], f[1]]);
        }
        let nt = parse_count(next()?)?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let f: Vec<usize> = next()?.split_whitespace().map(|t| t.parse().map_err(|_| bad("triangle"))).collect::<Result<_>>()?;
            if f.len() != 3 || f.iter().any(|&i| i >= nv) {
                return Err(bad("triangle"));
            }
            triangles.push([f[0], f[1], f[2]]);
        }
        let nb = parse_count(next()?)?;
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let line = next()?;
            let mut it = line.split_whitespace();
            let v: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("boundary"))?;
            let y: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("boundary"))?;
            boundary.push((v, y));
        }
        let segments = nb;
        let rings = if segments == 0 { 0 } else { (nv - 1) / segments };
        Ok(Self::with_quadratic_nodes(rings, segments, vertices, triangles, boundary))
    }

    /// Short content hash of the text export.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn signed_area(v: &[[f64; 2]], t: [usize; 3]) -> f64 {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_ring_formula() {
        for (rings, segs) in [(2, 8), (3, 12), (6, 32)] {
            let m = Mesh::onion(rings, segs).unwrap();
            assert_eq!(m.vertices.len(), 1 + rings * segs);
            assert_eq!(m.triangles.len(), segs * (2 * rings - 1));
            // Euler: V - E + F = 1 for a disk, so nodes = V + E
            let edges = m.vertices.len() + m.triangles.len() - 1;
            assert_eq!(m.num_nodes(), m.vertices.len() + edges);
            assert_eq!(m.boundary_nodes.len(), 2 * segs);
        }
    }

    #[test]
    fn rejects_small_parameters() {
        assert!(Mesh::onion(1, 16).is_err());
        assert!(Mesh::onion(4, 6).is_err());
    }

    #[test]
    fn boundary_nodes_are_equispaced() {
        let m = Mesh::onion(3, 10).unwrap();
        for (k, &(node, y)) in m.boundary_nodes.iter().enumerate() {
            assert!((y - k as f64 / 20.0).abs() < 1e-14);
            if k % 2 == 0 {
                let p = m.nodes[node];
                let q = [(2.0 * PI * y).cos(), (2.0 * PI * y).sin()];
                assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn text_round_trip_preserves_hash() {
        let m = Mesh::onion(3, 12).unwrap();
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.elements, m.elements);
        assert_eq!(back.hash(), m.hash());
    }

    #[test]
    fn reflection_is_an_involution() {
        let m = Mesh::onion(4, 12).unwrap();
        let r = m.reflection();
        for (i, &j) in r.iter().enumerate() {
            assert_eq!(r[j], i);
        }
    }
}
