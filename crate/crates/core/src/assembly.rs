//! P1 finite element operators with exact per-element integration.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, RegionMask};
use crate::sparse::CsrMatrix;

fn check_elements(mesh: &Mesh) -> Result<()> {
    let tol = 1e-14 * mesh.h * mesh.h;
    for t in 0..mesh.triangle_count() {
        let area = mesh.area(t);
        if area < tol {
            return Err(Error::DegenerateElement { index: t, area });
        }
    }
    Ok(())
}

/// Local stiffness matrix of one triangle: (bᵢbⱼ + cᵢcⱼ)/(4A).
fn element_stiffness(v: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        b[i] = v[j][1] - v[k][1];
        c[i] = v[k][0] - v[j][0];
    }
    let mut ke = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ke[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
        }
    }
    ke
}

fn element_mass(area: f64, i: usize, j: usize) -> f64 {
    area / 12.0 * if i == j { 2.0 } else { 1.0 }
}

/// d_ls = ∫ ∇ψ_s·∇ψ_l
pub fn assemble_stiffness(mesh: &Mesh) -> Result<CsrMatrix> {
    check_elements(mesh)?;
    let mut trip = Vec::with_capacity(9 * mesh.triangle_count());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let ke = element_stiffness(mesh.vertices(t));
        for i in 0..3 {
            for j in 0..3 {
                trip.push((tri[i], tri[j], ke[i][j]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.node_count(), mesh.node_count(), trip))
}

/// e_ls = ∫ ψ_s ψ_l
pub fn assemble_mass(mesh: &Mesh) -> Result<CsrMatrix> {
    check_elements(mesh)?;
    let mut trip = Vec::with_capacity(9 * mesh.triangle_count());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.area(t);
        for i in 0..3 {
            for j in 0..3 {
                trip.push((tri[i], tri[j], element_mass(area, i, j)));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.node_count(), mesh.node_count(), trip))
}

/// Mass matrix over Ω₀ in Ω₀-local numbering (m₀ × m₀).
pub fn assemble_region_mass(mesh: &Mesh, region: &RegionMask) -> Result<CsrMatrix> {
    region_coupling(mesh, region, true)
}

/// b_lj = ∫_{Ω₀} ψ_l ψ_{k_j} (m × m₀).
pub fn assemble_source_coupling(mesh: &Mesh, region: &RegionMask) -> Result<CsrMatrix> {
    region_coupling(mesh, region, false)
}

fn region_coupling(mesh: &Mesh, region: &RegionMask, local_rows: bool) -> Result<CsrMatrix> {
    if region.member_elements.is_empty() {
        return Err(Error::EmptyRegion);
    }
    check_elements(mesh)?;
    let m0 = region.len();
    let local = |g: usize| region.global_to_local[g].expect("member element vertex lies in the region");
    let mut trip = Vec::with_capacity(9 * region.member_elements.len());
    for &t in &region.member_elements {
        let tri = mesh.triangles[t];
        let area = mesh.area(t);
        for i in 0..3 {
            let row = if local_rows { local(tri[i]) } else { tri[i] };
            for j in 0..3 {
                trip.push((row, local(tri[j]), element_mass(area, i, j)));
            }
        }
    }
    let rows = if local_rows { m0 } else { mesh.node_count() };
    Ok(CsrMatrix::from_triplets(rows, m0, trip))
}

/// f_ls = ∫_Γ ψ_s ψ_l, summed edge by edge as (L/6)·[[2,1],[1,2]].
pub fn assemble_boundary_mass(mesh: &Mesh) -> Result<CsrMatrix> {
    mesh.check_boundary()?;
    let mut trip = Vec::with_capacity(4 * mesh.boundary_edges.len());
    for &[a, b] in &mesh.boundary_edges {
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
        trip.push((a, a, len / 3.0));
        trip.push((b, b, len / 3.0));
        trip.push((a, b, len / 6.0));
        trip.push((b, a, len / 6.0));
    }
    Ok(CsrMatrix::from_triplets(mesh.node_count(), mesh.node_count(), trip))
}

/// Extends boundary values given at `nodes` to a full nodal vector (zero in
/// the interior); every boundary node must be covered.
pub fn extend_boundary_values(mesh: &Mesh, nodes: &[usize], values: &[f64]) -> Result<Vec<f64>> {
    if nodes.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: nodes.len(), got: values.len() });
    }
    let mut full = vec![0.0; mesh.node_count()];
    let mut seen = vec![false; mesh.node_count()];
    for (&v, &g) in nodes.iter().zip(values) {
        if v >= mesh.node_count() {
            return Err(Error::InvalidArgument(format!("boundary node {v} out of range")));
        }
        full[v] = g;
        seen[v] = true;
    }
    if let Some(&missing) = mesh.boundary_nodes().iter().find(|&&v| !seen[v]) {
        return Err(Error::MissingBoundaryValue(missing));
    }
    Ok(full)
}

/// b_l = ∫_Γ g ψ_l for the piecewise-linear boundary interpolant of `g`.
pub fn assemble_boundary_load(mesh: &Mesh, boundary_mass: &CsrMatrix, nodes: &[usize], values: &[f64]) -> Result<Vec<f64>> {
    let full = extend_boundary_values(mesh, nodes, values)?;
    Ok(boundary_mass.mul_vec(&full))
}

/// The assembled discrete problem on one mesh and permissible region.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub mesh: Arc<Mesh>,
    pub region: Arc<RegionMask>,
    /// Stiffness.
    pub d: CsrMatrix,
    /// Mass.
    pub e: CsrMatrix,
    /// Boundary mass.
    pub f: CsrMatrix,
    /// Source coupling, m × m₀.
    pub b: CsrMatrix,
    /// Mass over Ω₀, m₀ × m₀.
    pub m0: CsrMatrix,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
}

impl FemSystem {
    /// Assembles all operators; boundary loads start at zero.
    pub fn assemble(mesh: Arc<Mesh>, region: Arc<RegionMask>) -> Result<Self> {
        let d = assemble_stiffness(&mesh)?;
        let e = assemble_mass(&mesh)?;
        let f = assemble_boundary_mass(&mesh)?;
        let b = assemble_source_coupling(&mesh, &region)?;
        let m0 = assemble_region_mass(&mesh, &region)?;
        let m = mesh.node_count();
        Ok(Self { mesh, region, d, e, f, b, m0, b1: vec![0.0; m], b2: vec![0.0; m] })
    }

    pub fn m(&self) -> usize {
        self.mesh.node_count()
    }

    pub fn m0_len(&self) -> usize {
        self.region.len()
    }

    /// D + E
    pub fn robin_free_operator(&self) -> CsrMatrix {
        self.d.add_scaled(1.0, &self.e, 1.0)
    }

    /// Sets b1, b2 from Dirichlet values `g1` and Neumann values `g2` given at
    /// boundary `nodes`.
    pub fn set_boundary_data(&mut self, nodes: &[usize], g1: &[f64], g2: &[f64]) -> Result<()> {
        self.b1 = assemble_boundary_load(&self.mesh, &self.f, nodes, g1)?;
        self.b2 = assemble_boundary_load(&self.mesh, &self.f, nodes, g2)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_disk_mesh, mark_region};

    fn unit_triangle() -> Mesh {
        Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![[0, 1], [1, 2], [2, 0]]).unwrap()
    }

    fn close(a: &[Vec<f64>], b: &[[f64; 3]; 3], tol: f64) -> bool {
        (0..3).all(|i| (0..3).all(|j| (a[i][j] - b[i][j]).abs() < tol))
    }

    #[test]
    fn unit_triangle_stiffness() {
        let d = assemble_stiffness(&unit_triangle()).unwrap().to_dense();
        assert!(close(&d, &[[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]], 1e-15));
    }

    #[test]
    fn stiffness_is_scale_invariant() {
        let mut m = unit_triangle();
        let d1 = assemble_stiffness(&m).unwrap();
        for p in &mut m.nodes {
            p[0] *= 2.0;
            p[1] *= 2.0;
        }
        m.h *= 2.0;
        let d2 = assemble_stiffness(&m).unwrap();
        for (a, b) in d1.triplets().zip(d2.triplets()) {
            assert!((a.2 - b.2).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_triangle_mass() {
        let e = assemble_mass(&unit_triangle()).unwrap().to_dense();
        let s = 1.0 / 24.0;
        assert!(close(&e, &[[2.0 * s, s, s], [s, 2.0 * s, s], [s, s, 2.0 * s]], 1e-16));
    }

    #[test]
    fn single_edge_boundary_mass() {
        // Triangle with a boundary edge of length 3 along the x axis.
        let m = Mesh::new(vec![[0.0, 0.0], [3.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![[0, 1], [1, 2], [2, 0]]).unwrap();
        let f = assemble_boundary_mass(&m).unwrap();
        // Contribution of edge (0,1) alone: node 0 also touches edge (2,0).
        let only_01 = 3.0 / 6.0;
        assert!((f.get(0, 1) - only_01).abs() < 1e-15);
        assert!((f.get(1, 0) - 0.5).abs() < 1e-15);
        let len_12 = 10f64.sqrt();
        assert!((f.get(1, 1) - (1.0 + len_12 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn partition_of_unity_identities() {
        let mesh = generate_disk_mesh(1.0, 5);
        let d = assemble_stiffness(&mesh).unwrap();
        let e = assemble_mass(&mesh).unwrap();
        let f = assemble_boundary_mass(&mesh).unwrap();
        let ones = vec![1.0; mesh.node_count()];
        let scale = d.norm_inf();
        assert!(d.mul_vec(&ones).iter().all(|v| v.abs() <= 1e-12 * scale));
        assert!((e.quad_form(&ones) - mesh.total_area()).abs() < 1e-13);
        assert!((f.quad_form(&ones) - mesh.boundary_length()).abs() < 1e-13);
        assert!(d.is_symmetric() && e.is_symmetric() && f.is_symmetric());
        let boundary: std::collections::HashSet<usize> = mesh.boundary_nodes().into_iter().collect();
        for i in 0..mesh.node_count() {
            if !boundary.contains(&i) {
                assert_eq!(f.row(i).0.len(), 0);
            }
        }
    }

    #[test]
    fn whole_region_coupling_equals_mass() {
        let mesh = generate_disk_mesh(1.0, 3);
        let region = mark_region(&mesh, |_| true).unwrap();
        let e = assemble_mass(&mesh).unwrap();
        let b = assemble_source_coupling(&mesh, &region).unwrap();
        let m0 = assemble_region_mass(&mesh, &region).unwrap();
        assert_eq!(b, e);
        assert_eq!(m0, e);
    }

    #[test]
    fn coupling_column_sums_give_region_area() {
        let mesh = generate_disk_mesh(1.0, 6);
        let region = mark_region(&mesh, |p| p[0].abs() < 0.5 && p[1].abs() < 0.5).unwrap();
        let b = assemble_source_coupling(&mesh, &region).unwrap();
        let m0 = assemble_region_mass(&mesh, &region).unwrap();
        let col_sums = b.transpose_mul_vec(&vec![1.0; mesh.node_count()]);
        let area = region.area(&mesh);
        assert!((col_sums.iter().sum::<f64>() - area).abs() < 1e-13);
        // Brute force: ∫_{Ω₀} ψ_k = Σ over member elements touching k of area/3.
        for (j, &g) in region.omega0_nodes.iter().enumerate() {
            let expected: f64 = region.member_elements.iter().filter(|&&t| mesh.triangles[t].contains(&g)).map(|&t| mesh.area(t) / 3.0).sum();
            assert!((col_sums[j] - expected).abs() < 1e-14);
        }
        // Rows of B at Ω₀ nodes reproduce M0; other rows vanish.
        for i in 0..mesh.node_count() {
            match region.global_to_local[i] {
                Some(l) => assert_eq!(b.row(i), m0.row(l)),
                None => assert!(b.row(i).0.is_empty()),
            }
        }
    }

    #[test]
    fn hexagon_boundary_load_of_ones() {
        let mesh = generate_disk_mesh(1.0, 1);
        let f = assemble_boundary_mass(&mesh).unwrap();
        let nodes = mesh.boundary_nodes();
        let b = assemble_boundary_load(&mesh, &f, &nodes, &[1.0; 6]).unwrap();
        assert_eq!(b[0], 0.0);
        for &v in &nodes {
            assert!((b[v] - 1.0).abs() < 1e-14);
        }
        let zero = assemble_boundary_load(&mesh, &f, &nodes, &[0.0; 6]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        assert!(matches!(assemble_boundary_load(&mesh, &f, &nodes[..5], &[1.0; 5]), Err(Error::MissingBoundaryValue(6))));
    }

    #[test]
    fn degenerate_element_rejected() {
        let mut m = unit_triangle();
        m.nodes[2] = [0.5, 1e-20];
        assert!(matches!(assemble_stiffness(&m), Err(Error::DegenerateElement { index: 0, .. })));
    }
}
