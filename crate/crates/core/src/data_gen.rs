//! Synthetic Cauchy data: forward solve on a fine mesh, trace extraction,
//! multiplicative uniform noise and transfer to the reconstruction mesh.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::FemSystem;
use crate::error::{Error, Result};
use crate::linsolve::solve_neumann;
use crate::mesh::{boundary_param, mark_region, Mesh, Point, RegionMask};

/// Boundary measurements on one mesh, indexed by `nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    /// Global boundary node indices, in boundary cycle order.
    pub nodes: Vec<usize>,
    /// Dirichlet data.
    pub g1: Vec<f64>,
    /// Neumann data.
    pub g2: Vec<f64>,
    /// Noise level max_j ‖gⱼᵟ − gⱼ‖_∞ (0 for exact data).
    pub delta: f64,
    /// Relative noise fraction δ′ used to produce the data.
    pub delta_prime: f64,
    pub seed: u64,
}

impl BoundaryData {
    pub fn exact(nodes: Vec<usize>, g1: Vec<f64>, g2: Vec<f64>) -> Self {
        Self { nodes, g1, g2, delta: 0.0, delta_prime: 0.0, seed: 0 }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

type SourceFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type RegionFn = Arc<dyn Fn(Point) -> bool + Send + Sync>;

/// A prescribed source together with its permissible region.
#[derive(Clone)]
pub enum Example {
    /// Ω₀ = (−0.5, 0.5)², p† = 1 + x₁ + x₂.
    Example1,
    /// Ω₀ = two disks of radius 0.1 at (∓0.5, 0); p† = 1 + x₁ + x₂ on the
    /// left disk and e^{1+x₁+x₂} on the right one.
    Example2,
    /// Ω₀ = Ω with a constant source.
    Constant(f64),
    Custom {
        name: String,
        source: SourceFn,
        region: RegionFn,
    },
}

impl fmt::Debug for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl Example {
    pub fn name(&self) -> String {
        match self {
            Example::Example1 => "example1".into(),
            Example::Example2 => "example2".into(),
            Example::Constant(c) => format!("constant:{c}"),
            Example::Custom { name, .. } => name.clone(),
        }
    }

    /// Membership test applied to element centroids.
    pub fn in_region(&self, x: Point) -> bool {
        match self {
            Example::Example1 => x[0] > -0.5 && x[0] < 0.5 && x[1] > -0.5 && x[1] < 0.5,
            Example::Example2 => (x[0] + 0.5).powi(2) + x[1] * x[1] < 0.01 || (x[0] - 0.5).powi(2) + x[1] * x[1] < 0.01,
            Example::Constant(_) => true,
            Example::Custom { region, .. } => region(x),
        }
    }

    /// Source value at an Ω₀ node. Each piece is evaluated through its smooth
    /// extension so nodes on the discrete region boundary get the value of
    /// the piece they belong to.
    pub fn source(&self, x: Point) -> f64 {
        match self {
            Example::Example1 => 1.0 + x[0] + x[1],
            Example::Example2 => {
                if x[0] < 0.0 {
                    1.0 + x[0] + x[1]
                } else {
                    (1.0 + x[0] + x[1]).exp()
                }
            }
            Example::Constant(c) => *c,
            Example::Custom { source, .. } => source(x),
        }
    }

    pub fn mark(&self, mesh: &Mesh) -> Result<RegionMask> {
        mark_region(mesh, |x| self.in_region(x))
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" | "1" => Ok(Example::Example1),
            "example2" | "2" => Ok(Example::Example2),
            other => match other.strip_prefix("constant:") {
                Some(c) => c.parse().map(Example::Constant).map_err(|_| Error::Config(format!("bad constant in `{other}`"))),
                None => Err(Error::Config(format!("unknown example `{other}` (expected example1, example2 or constant:<c>)"))),
            },
        }
    }
}

/// Nodal coefficients of p† on the Ω₀ nodes of one mesh.
#[derive(Debug, Clone)]
pub struct TrueSource {
    pub example: Example,
    pub coefficients: Vec<f64>,
}

pub fn sample_true_source(example: &Example, mesh: &Mesh, region: &RegionMask) -> Result<TrueSource> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let coefficients = region.omega0_nodes.iter().map(|&g| example.source(mesh.nodes[g])).collect();
    Ok(TrueSource { example: example.clone(), coefficients })
}

/// Exact Dirichlet trace of the Neumann problem with g₂ ≡ 0.
pub fn make_measurement(fine_mesh: Arc<Mesh>, region_fine: Arc<RegionMask>, example: &Example) -> Result<BoundaryData> {
    let truth = sample_true_source(example, &fine_mesh, &region_fine)?;
    let system = FemSystem::assemble(fine_mesh.clone(), region_fine)?;
    let nodes = fine_mesh.boundary_nodes();
    let g2 = vec![0.0; nodes.len()];
    let u = solve_neumann(&system, &truth.coefficients, &nodes, &g2)?;
    let g1 = nodes.iter().map(|&v| u[v]).collect();
    Ok(BoundaryData::exact(nodes, g1, g2))
}

/// Uniform draw on [0, 1) for (seed, node, component); the stream id makes
/// draws independent of evaluation order.
fn counter_uniform(seed: u64, node: usize, component: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    rng.set_word_pos(2 * component as u128);
    rng.gen::<f64>()
}

/// gⱼᵟ = [1 + δ′(2·rand − 1)] gⱼ with per-node seeded draws.
pub fn add_noise(data: &BoundaryData, delta_prime: f64, seed: u64) -> BoundaryData {
    add_noise_with(data, delta_prime, seed, |node, j| counter_uniform(seed, node, j))
}

/// As [`add_noise`] with an explicit draw `rand(node, component)`.
pub fn add_noise_with(data: &BoundaryData, delta_prime: f64, seed: u64, rand: impl Fn(usize, usize) -> f64) -> BoundaryData {
    assert!(delta_prime >= 0.0, "noise fraction must be non-negative");
    let perturb = |g: &[f64], j: usize| -> Vec<f64> { data.nodes.iter().zip(g).map(|(&v, &gv)| (1.0 + delta_prime * (2.0 * rand(v, j) - 1.0)) * gv).collect() };
    let g1 = perturb(&data.g1, 0);
    let g2 = perturb(&data.g2, 1);
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let delta = sup(&g1, &data.g1).max(sup(&g2, &data.g2));
    BoundaryData { nodes: data.nodes.clone(), g1, g2, delta, delta_prime, seed }
}

/// Linear interpolation in normalized arc length from `src` boundary nodes
/// to `dst` boundary nodes; the noise level is carried over.
pub fn transfer_boundary(src_mesh: &Mesh, dst_mesh: &Mesh, data: &BoundaryData) -> Result<BoundaryData> {
    let src = boundary_param(src_mesh)?;
    let dst = boundary_param(dst_mesh)?;
    let mut lookup = vec![usize::MAX; src_mesh.node_count()];
    for (k, &v) in data.nodes.iter().enumerate() {
        lookup[v] = k;
    }
    let mut s_src = Vec::with_capacity(src.entries.len());
    let mut idx = Vec::with_capacity(src.entries.len());
    for (v, s) in src.normalized() {
        if lookup[v] == usize::MAX {
            return Err(Error::MissingBoundaryValue(v));
        }
        s_src.push(s);
        idx.push(lookup[v]);
    }
    let n = s_src.len();
    let interp = |g: &[f64], s: f64| -> f64 {
        // Segment k spans [s_k, s_{k+1}), the last one wraps to 1.
        let k = s_src.partition_point(|&x| x <= s).saturating_sub(1);
        let (s0, s1) = (s_src[k], if k + 1 < n { s_src[k + 1] } else { 1.0 });
        let (g0, g1) = (g[idx[k]], g[idx[(k + 1) % n]]);
        let w = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        g0 + w * (g1 - g0)
    };
    let mut pos = vec![0.0; dst_mesh.node_count()];
    for (v, s) in dst.normalized() {
        pos[v] = s;
    }
    // Output follows the destination mesh's cycle order.
    let order = dst_mesh.boundary_nodes();
    let g1 = order.iter().map(|&v| interp(&data.g1, pos[v])).collect();
    let g2 = order.iter().map(|&v| interp(&data.g2, pos[v])).collect();
    Ok(BoundaryData { nodes: order, g1, g2, delta: data.delta, delta_prime: data.delta_prime, seed: data.seed })
}

const BDATA_HEADER: &str = "BDATA v1";

pub fn format_boundary_data(data: &BoundaryData) -> String {
    let mut out = String::new();
    writeln!(out, "{BDATA_HEADER}").unwrap();
    writeln!(out, "DELTA {:.16e}", data.delta).unwrap();
    writeln!(out, "N {}", data.len()).unwrap();
    for k in 0..data.len() {
        writeln!(out, "{} {:.16e} {:.16e}", data.nodes[k], data.g1[k], data.g2[k]).unwrap();
    }
    out
}

pub fn parse_boundary_data(text: &str) -> Result<BoundaryData> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let mut next = |what: &str| lines.next().ok_or_else(|| Error::Parse { line: 0, msg: format!("missing {what}") });
    let (ln, h) = next("header")?;
    if h != BDATA_HEADER {
        return Err(Error::Parse { line: ln, msg: format!("expected header `{BDATA_HEADER}`") });
    }
    let keyed = |(ln, l): (usize, &str), key: &str| -> Result<String> {
        l.strip_prefix(key).map(|v| v.trim().to_string()).ok_or_else(|| Error::Parse { line: ln, msg: format!("expected `{key} <value>`") })
    };
    let dl = next("DELTA")?;
    let delta: f64 = keyed(dl, "DELTA")?.parse().map_err(|_| Error::Parse { line: dl.0, msg: "bad DELTA".into() })?;
    let nl = next("N")?;
    let n: usize = keyed(nl, "N")?.parse().map_err(|_| Error::Parse { line: nl.0, msg: "bad N".into() })?;
    let mut data = BoundaryData::exact(Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    data.delta = delta;
    for _ in 0..n {
        let (ln, l) = next("data line")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        let bad = || Error::Parse { line: ln, msg: format!("expected `node_index g1 g2`, got `{l}`") };
        if parts.len() != 3 {
            return Err(bad());
        }
        data.nodes.push(parts[0].parse().map_err(|_| bad())?);
        data.g1.push(parts[1].parse().map_err(|_| bad())?);
        data.g2.push(parts[2].parse().map_err(|_| bad())?);
    }
    Ok(data)
}

pub fn save_boundary_data(data: &BoundaryData, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_boundary_data(data))?;
    Ok(())
}

pub fn load_boundary_data(path: impl AsRef<Path>) -> Result<BoundaryData> {
    parse_boundary_data(&std::fs::read_to_string(path)?)
}
