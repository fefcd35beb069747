//! Conforming triangular meshes of disk domains.
//!
//! A [`Mesh`] stores counter-clockwise triangles and the boundary as a single
//! closed counter-clockwise cycle of edges. Meshes come from the structured
//! polar generator or from the line-based `MESH2D v1` text format.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Default bound on longest-side / inradius.
pub const DEFAULT_SHAPE_C2: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<[usize; 2]>,
    /// Maximum longest-edge length over all triangles.
    pub h: f64,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Mesh {
    /// Validates orientation and the boundary cycle, then computes `h`.
    pub fn new(nodes: Vec<Point>, triangles: Vec<[usize; 3]>, boundary_edges: Vec<[usize; 2]>) -> Result<Self> {
        let n = nodes.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidArgument(format!("triangle {t} references a node index >= {n}")));
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::InvalidArgument(format!("triangle {t} has non-positive signed area {area:e}")));
            }
        }
        let mut mesh = Mesh { nodes, triangles, boundary_edges, h: 0.0 };
        mesh.h = mesh.triangles.iter().map(|&t| mesh.longest_side(t)).fold(0.0, f64::max);
        mesh.check_boundary()?;
        Ok(mesh)
    }

    /// Builds a mesh and extracts its boundary cycle from the triangle list.
    pub fn from_triangles(nodes: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let open = directed_boundary_edges(&triangles);
        let mut next: HashMap<usize, usize> = HashMap::new();
        for &[a, b] in &open {
            if next.insert(a, b).is_some() {
                return Err(Error::InvalidBoundary(format!("node {a} starts two boundary edges")));
            }
        }
        let start = open.iter().map(|e| e[0]).min().ok_or_else(|| Error::InvalidBoundary("mesh has no boundary".into()))?;
        let mut cycle = Vec::with_capacity(open.len());
        let mut cur = start;
        loop {
            let nxt = *next.get(&cur).ok_or_else(|| Error::InvalidBoundary(format!("boundary breaks at node {cur}")))?;
            cycle.push([cur, nxt]);
            cur = nxt;
            if cur == start || cycle.len() > open.len() {
                break;
            }
        }
        Mesh::new(nodes, triangles, cycle)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangle_count()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.vertices(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    fn longest_side(&self, tri: [usize; 3]) -> f64 {
        let [a, b, c] = tri.map(|i| self.nodes[i]);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    fn inradius(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        let perimeter = dist(a, b) + dist(b, c) + dist(c, a);
        2.0 * signed_area(a, b, c) / perimeter
    }

    /// Triangles violating ℓ(△) ≤ c2·r(△). Shape regularity is advisory.
    pub fn shape_violations(&self, c2: f64) -> Vec<usize> {
        (0..self.triangle_count()).filter(|&t| self.longest_side(self.triangles[t]) > c2 * self.inradius(t)).collect()
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges = HashSet::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    /// Boundary nodes in cycle order (the start node of each boundary edge).
    pub fn boundary_nodes(&self) -> Vec<usize> {
        self.boundary_edges.iter().map(|e| e[0]).collect()
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges.iter().map(|&[a, b]| dist(self.nodes[a], self.nodes[b])).sum()
    }

    /// Largest distance of a node from the origin.
    pub fn outer_radius(&self) -> f64 {
        self.nodes.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max)
    }

    /// Checks that `boundary_edges` is one closed cycle equal to the set of
    /// edges owned by exactly one triangle, with matching orientation.
    pub fn check_boundary(&self) -> Result<()> {
        check_cycle(&self.boundary_edges, self.nodes.len())?;
        let expected: HashSet<[usize; 2]> = directed_boundary_edges(&self.triangles).into_iter().collect();
        let given: HashSet<[usize; 2]> = self.boundary_edges.iter().copied().collect();
        if expected != given {
            return Err(Error::InvalidBoundary(format!(
                "boundary cycle ({} edges) does not match the {} edges incident to one triangle",
                given.len(),
                expected.len()
            )));
        }
        Ok(())
    }
}

/// Edges incident to exactly one triangle, oriented as in that triangle.
fn directed_boundary_edges(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut out = Vec::new();
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if count[&(a.min(b), a.max(b))] == 1 {
                out.push([a, b]);
            }
        }
    }
    out
}

fn check_cycle(edges: &[[usize; 2]], n: usize) -> Result<()> {
    if edges.len() < 3 {
        return Err(Error::InvalidBoundary(format!("a closed boundary needs at least 3 edges, got {}", edges.len())));
    }
    for (k, &[a, b]) in edges.iter().enumerate() {
        if a >= n || b >= n || a == b {
            return Err(Error::InvalidBoundary(format!("edge {k} ({a},{b}) is malformed")));
        }
        let next_start = edges[(k + 1) % edges.len()][0];
        if next_start != b {
            return Err(Error::InvalidBoundary(format!("edge {k} ends at {b} but the next edge starts at {next_start}")));
        }
    }
    let distinct: HashSet<usize> = edges.iter().map(|e| e[0]).collect();
    if distinct.len() != edges.len() {
        return Err(Error::InvalidBoundary("boundary cycle visits a node twice".into()));
    }
    Ok(())
}

/// Structured polar mesh of the disk: ring `j` (1..=n_rings) at radius
/// `j·radius/n_rings` carries `6j` equally spaced nodes.
pub fn generate_disk_mesh(radius: f64, n_rings: usize) -> Mesh {
    assert!(radius > 0.0 && n_rings >= 1, "radius must be positive and n_rings >= 1");
    let ring_start = |j: usize| if j == 0 { 0 } else { 1 + 3 * j * (j - 1) };
    let mut nodes = vec![[0.0, 0.0]];
    for j in 1..=n_rings {
        let r = radius * j as f64 / n_rings as f64;
        for k in 0..6 * j {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / (6 * j) as f64;
            nodes.push([r * theta.cos(), r * theta.sin()]);
        }
    }
    let mut triangles = Vec::with_capacity(6 * n_rings * n_rings);
    for j in 1..=n_rings {
        let outer = |k: usize| ring_start(j) + k % (6 * j);
        if j == 1 {
            for k in 0..6 {
                triangles.push([outer(k), outer(k + 1), 0]);
            }
            continue;
        }
        let inner = |k: usize| ring_start(j - 1) + k % (6 * (j - 1));
        for s in 0..6 {
            let (o, i) = (s * j, s * (j - 1));
            for k in 0..j {
                triangles.push([outer(o + k), outer(o + k + 1), inner(i + k)]);
            }
            for k in 0..j - 1 {
                triangles.push([inner(i + k), outer(o + k + 1), inner(i + k + 1)]);
            }
        }
    }
    let first = ring_start(n_rings);
    let nb = 6 * n_rings;
    let boundary_edges = (0..nb).map(|k| [first + k, first + (k + 1) % nb]).collect();
    Mesh::new(nodes, triangles, boundary_edges).expect("polar generator produces a valid mesh")
}

/// The elements of the permissible region Ω₀ and its node numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub member_elements: Vec<usize>,
    /// Global indices of Ω₀ nodes, ascending.
    pub omega0_nodes: Vec<usize>,
    /// Global node index → Ω₀-local index.
    pub global_to_local: Vec<Option<usize>>,
}

impl RegionMask {
    pub fn len(&self) -> usize {
        self.omega0_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega0_nodes.is_empty()
    }

    pub fn area(&self, mesh: &Mesh) -> f64 {
        self.member_elements.iter().map(|&t| mesh.area(t)).sum()
    }

    /// Scatters an Ω₀ vector into a full nodal vector (zero elsewhere).
    pub fn extend(&self, local: &[f64], m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (l, &g) in self.omega0_nodes.iter().enumerate() {
            out[g] = local[l];
        }
        out
    }

    /// Gathers the Ω₀ entries of a full nodal vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.omega0_nodes.iter().map(|&g| full[g]).collect()
    }
}

/// Selects the triangles whose centroid satisfies `predicate`.
pub fn mark_region(mesh: &Mesh, predicate: impl Fn(Point) -> bool) -> Result<RegionMask> {
    let member_elements: Vec<usize> = (0..mesh.triangle_count()).filter(|&t| predicate(mesh.centroid(t))).collect();
    if member_elements.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut in_region = vec![false; mesh.node_count()];
    for &t in &member_elements {
        for &v in &mesh.triangles[t] {
            in_region[v] = true;
        }
    }
    let omega0_nodes: Vec<usize> = (0..mesh.node_count()).filter(|&v| in_region[v]).collect();
    let mut global_to_local = vec![None; mesh.node_count()];
    for (l, &g) in omega0_nodes.iter().enumerate() {
        global_to_local[g] = Some(l);
    }
    Ok(RegionMask { member_elements, omega0_nodes, global_to_local })
}

/// Polygonal arc-length coordinates of the boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryParam {
    /// (node, s) pairs, starting at the smallest boundary node index with
    /// s = 0 and increasing counter-clockwise.
    pub entries: Vec<(usize, f64)>,
    /// Total boundary length.
    pub length: f64,
}

impl BoundaryParam {
    /// Normalized coordinate s/L of each entry.
    pub fn normalized(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(move |&(v, s)| (v, s / self.length))
    }
}

pub fn boundary_param(mesh: &Mesh) -> Result<BoundaryParam> {
    let edges = &mesh.boundary_edges;
    check_cycle(edges, mesh.node_count())?;
    let start = (0..edges.len()).min_by_key(|&k| edges[k][0]).unwrap();
    let mut entries = Vec::with_capacity(edges.len());
    let mut s = 0.0;
    for off in 0..edges.len() {
        let [a, b] = edges[(start + off) % edges.len()];
        entries.push((a, s));
        s += dist(mesh.nodes[a], mesh.nodes[b]);
    }
    Ok(BoundaryParam { entries, length: s })
}

const MESH_HEADER: &str = "MESH2D v1";

/// Serializes in the `MESH2D v1` text format with 17 significant digits.
pub fn format_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    writeln!(out, "{MESH_HEADER}").unwrap();
    writeln!(out, "NODES {}", mesh.nodes.len()).unwrap();
    for p in &mesh.nodes {
        writeln!(out, "{:.16e} {:.16e}", p[0], p[1]).unwrap();
    }
    writeln!(out, "TRIANGLES {}", mesh.triangles.len()).unwrap();
    for t in &mesh.triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(out, "BOUNDARY {}", mesh.boundary_edges.len()).unwrap();
    for e in &mesh.boundary_edges {
        writeln!(out, "{} {}", e[0], e[1]).unwrap();
    }
    out
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_mesh(mesh))?;
    Ok(())
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            self.last = i + 1;
            let l = l.trim();
            if !l.is_empty() {
                return Ok((i + 1, l));
            }
        }
        Err(Error::Parse { line: self.last + 1, msg: "unexpected end of file".into() })
    }

    fn section(&mut self, name: &str) -> Result<(usize, usize)> {
        let (ln, l) = self.next_line()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(name) {
            return Err(Error::Parse { line: ln, msg: format!("expected `{name} <count>`") });
        }
        let count = it.next().and_then(|c| c.parse().ok()).ok_or_else(|| Error::Parse { line: ln, msg: format!("bad {name} count") })?;
        Ok((ln, count))
    }

    fn fields<T: std::str::FromStr, const N: usize>(&mut self) -> Result<(usize, [T; N])> {
        let (ln, l) = self.next_line()?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != N {
            return Err(Error::Parse { line: ln, msg: format!("expected {N} fields, found {}", parts.len()) });
        }
        let mut vals = Vec::with_capacity(N);
        for p in parts {
            vals.push(p.parse::<T>().map_err(|_| Error::Parse { line: ln, msg: format!("cannot parse `{p}`") })?);
        }
        Ok((ln, vals.try_into().ok().unwrap()))
    }
}

/// Parses the `MESH2D v1` format; every structural defect is reported as a
/// [`Error::Parse`] with the offending line.
pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    let (ln, header) = lines.next_line()?;
    if header != MESH_HEADER {
        return Err(Error::Parse { line: ln, msg: format!("expected header `{MESH_HEADER}`") });
    }
    let (_, n) = lines.section("NODES")?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, p) = lines.fields::<f64, 2>()?;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Parse { line: ln, msg: "non-finite coordinate".into() });
        }
        nodes.push(p);
    }
    let (_, t) = lines.section("TRIANGLES")?;
    let mut triangles = Vec::with_capacity(t);
    for _ in 0..t {
        let (ln, tri) = lines.fields::<usize, 3>()?;
        if let Some(&bad) = tri.iter().find(|&&v| v >= n) {
            return Err(Error::Parse { line: ln, msg: format!("node index {bad} >= node count {n}") });
        }
        if !(signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]) > 0.0) {
            return Err(Error::Parse { line: ln, msg: "triangle is not counter-clockwise (non-positive area)".into() });
        }
        triangles.push(tri);
    }
    let (bl, b) = lines.section("BOUNDARY")?;
    let mut boundary_edges = Vec::with_capacity(b);
    for _ in 0..b {
        let (ln, e) = lines.fields::<usize, 2>()?;
        if let Some(&bad) = e.iter().find(|&&v| v >= n) {
            return Err(Error::Parse { line: ln, msg: format!("node index {bad} >= node count {n}") });
        }
        boundary_edges.push(e);
    }
    Mesh::new(nodes, triangles, boundary_edges).map_err(|e| Error::Parse { line: bl, msg: e.to_string() })
}
