//! Lagrange P1/P2 spaces on the two subdomains and form assembly.
//!
//! Each [`Space`] lives on the triangles of one subdomain. Its interface
//! dofs are listed in order along Σ, so a fluid and a solid space built on
//! the same mesh have interface dof lists that correspond point by point.
//! Interface matrices are indexed by position in that list ("interface
//! index"), which is also how the multiplier is stored.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{cg_solve, SparseMatrix, TripletBuilder};
use crate::mesh::{FacetTag, Mesh, Subdomain};
use crate::quadrature::{gauss_legendre_unit, segment_gauss3, triangle_collapsed, triangle_degree4, TriangleRule};

/// Point value and derivatives of a smooth function.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl std::ops::Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet {
            value: self.value - o.value,
            grad: [self.grad[0] - o.grad[0], self.grad[1] - o.grad[1]],
            hess: [
                [self.hess[0][0] - o.hess[0][0], self.hess[0][1] - o.hess[0][1]],
                [self.hess[1][0] - o.hess[1][0], self.hess[1][1] - o.hess[1][1]],
            ],
        }
    }
}

/// One triangle of a space together with its dofs.
#[derive(Debug, Clone)]
pub struct Cell {
    pub vertices: [[f64; 2]; 3],
    /// Local order: three vertices, then midpoints of edges (0,1), (1,2), (2,0).
    pub dofs: Vec<usize>,
    pub area: f64,
    grad_bary: [[f64; 2]; 3],
}

/// Basis values, gradients and (constant) Hessians at one point of a cell.
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    pub hessians: Vec<[[f64; 2]; 2]>,
}

impl Cell {
    fn new(vertices: [[f64; 2]; 3], dofs: Vec<usize>) -> Self {
        let [a, b, c] = vertices;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let grad_bary = [
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ];
        Cell { vertices, dofs, area: 0.5 * det, grad_bary }
    }

    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        let [a, b, c] = self.vertices;
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    pub fn barycentric(&self, p: [f64; 2]) -> [f64; 3] {
        let a = self.vertices[0];
        let d = [p[0] - a[0], p[1] - a[1]];
        let g = &self.grad_bary;
        let l1 = g[1][0] * d[0] + g[1][1] * d[1];
        let l2 = g[2][0] * d[0] + g[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn eval(&self, bary: [f64; 3]) -> BasisEval {
        let g = &self.grad_bary;
        let outer = |p: [f64; 2], q: [f64; 2]| [[p[0] * q[0], p[0] * q[1]], [p[1] * q[0], p[1] * q[1]]];
        if self.dofs.len() == 3 {
            return BasisEval {
                values: bary.to_vec(),
                grads: g.to_vec(),
                hessians: vec![[[0.0; 2]; 2]; 3],
            };
        }
        let l = bary;
        let mut values = Vec::with_capacity(6);
        let mut grads = Vec::with_capacity(6);
        let mut hessians = Vec::with_capacity(6);
        for i in 0..3 {
            values.push(l[i] * (2.0 * l[i] - 1.0));
            let s = 4.0 * l[i] - 1.0;
            grads.push([s * g[i][0], s * g[i][1]]);
            let h = outer(g[i], g[i]);
            hessians.push([[4.0 * h[0][0], 4.0 * h[0][1]], [4.0 * h[1][0], 4.0 * h[1][1]]]);
        }
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            values.push(4.0 * l[i] * l[j]);
            grads.push([
                4.0 * (l[j] * g[i][0] + l[i] * g[j][0]),
                4.0 * (l[j] * g[i][1] + l[i] * g[j][1]),
            ]);
            let (p, q) = (outer(g[i], g[j]), outer(g[j], g[i]));
            hessians.push([
                [4.0 * (p[0][0] + q[0][0]), 4.0 * (p[0][1] + q[0][1])],
                [4.0 * (p[1][0] + q[1][0]), 4.0 * (p[1][1] + q[1][1])],
            ]);
        }
        BasisEval { values, grads, hessians }
    }
}

/// A subdomain cell adjacent to one interface edge.
#[derive(Debug, Clone, Copy)]
pub struct TraceEdge {
    pub cell: usize,
    pub endpoints: [[f64; 2]; 2],
}

impl TraceEdge {
    pub fn length(&self) -> f64 {
        let [p, q] = self.endpoints;
        ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
    }

    pub fn at(&self, s: f64) -> [f64; 2] {
        let [p, q] = self.endpoints;
        [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]
    }
}

/// Continuous Lagrange space of degree 1 or 2 on one subdomain.
#[derive(Debug, Clone)]
pub struct Space {
    pub subdomain: Subdomain,
    pub degree: usize,
    pub dof_coords: Vec<[f64; 2]>,
    pub cells: Vec<Cell>,
    pub dirichlet_dofs: Vec<usize>,
    /// Dofs on Σ, ordered along the interface.
    pub interface_dofs: Vec<usize>,
    /// One entry per mesh interface edge, same order as the mesh.
    pub interface_edges: Vec<TraceEdge>,
    is_dirichlet: Vec<bool>,
    interface_index: Vec<Option<usize>>,
}

impl Space {
    pub fn build(mesh: &Mesh, subdomain: Subdomain, degree: usize) -> Result<Space> {
        if degree != 1 && degree != 2 {
            return Err(Error::Unsupported(format!("polynomial degree {degree}")));
        }
        let mut vertex_dof: HashMap<usize, usize> = HashMap::new();
        let mut dof_coords = Vec::new();
        let tris: Vec<usize> = (0..mesh.triangles.len())
            .filter(|&t| mesh.triangles[t].subdomain == subdomain)
            .collect();

        let mut used: Vec<usize> = tris.iter().flat_map(|&t| mesh.triangles[t].vertices).collect();
        used.sort_unstable();
        used.dedup();
        for v in used {
            vertex_dof.insert(v, dof_coords.len());
            dof_coords.push(mesh.vertices[v]);
        }

        let mut edge_dof: HashMap<(usize, usize), usize> = HashMap::new();
        let mut cells = Vec::with_capacity(tris.len());
        let mut cell_of_edge: HashMap<(usize, usize), usize> = HashMap::new();
        for (ci, &t) in tris.iter().enumerate() {
            let tv = mesh.triangles[t].vertices;
            let mut dofs: Vec<usize> = tv.iter().map(|v| vertex_dof[v]).collect();
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                let key = (tv[a].min(tv[b]), tv[a].max(tv[b]));
                cell_of_edge.insert(key, ci);
                if degree == 2 {
                    let next = dof_coords.len();
                    let d = *edge_dof.entry(key).or_insert(next);
                    if d == next {
                        let (p, q) = (mesh.vertices[tv[a]], mesh.vertices[tv[b]]);
                        dof_coords.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                    }
                    dofs.push(d);
                }
            }
            cells.push(Cell::new(tv.map(|v| mesh.vertices[v]), dofs));
        }

        let ndof = dof_coords.len();
        let dirichlet_tag = match subdomain {
            Subdomain::Fluid => FacetTag::DirichletFluid,
            Subdomain::Solid => FacetTag::DirichletSolid,
        };
        let mut is_dirichlet = vec![false; ndof];
        for f in mesh.facets.iter().filter(|f| f.tag == dirichlet_tag) {
            for v in f.vertices {
                is_dirichlet[vertex_dof[&v]] = true;
            }
            if degree == 2 {
                let key = (f.vertices[0].min(f.vertices[1]), f.vertices[0].max(f.vertices[1]));
                is_dirichlet[edge_dof[&key]] = true;
            }
        }
        let dirichlet_dofs: Vec<usize> = (0..ndof).filter(|&d| is_dirichlet[d]).collect();

        let mut interface_dofs = Vec::new();
        let mut interface_edges = Vec::with_capacity(mesh.interface_edges.len());
        for (k, e) in mesh.interface_edges.iter().enumerate() {
            let key = (e[0].min(e[1]), e[0].max(e[1]));
            let cell = *cell_of_edge.get(&key).ok_or_else(|| {
                Error::InvalidMesh(format!("interface edge {k} has no {} neighbour", subdomain.name()))
            })?;
            if k == 0 {
                interface_dofs.push(vertex_dof[&e[0]]);
            }
            if degree == 2 {
                interface_dofs.push(edge_dof[&key]);
            }
            interface_dofs.push(vertex_dof[&e[1]]);
            interface_edges.push(TraceEdge { cell, endpoints: [mesh.vertices[e[0]], mesh.vertices[e[1]]] });
        }
        let mut interface_index = vec![None; ndof];
        for (i, &d) in interface_dofs.iter().enumerate() {
            interface_index[d] = Some(i);
        }

        Ok(Space {
            subdomain,
            degree,
            dof_coords,
            cells,
            dirichlet_dofs,
            interface_dofs,
            interface_edges,
            is_dirichlet,
            interface_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn n_interface(&self) -> usize {
        self.interface_dofs.len()
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.is_dirichlet
    }

    pub fn interface_index(&self, dof: usize) -> Option<usize> {
        self.interface_index[dof]
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.dof_coords.iter().map(|&p| f(p)).collect()
    }

    /// Nodal interpolant with the Dirichlet dofs set to zero.
    pub fn interpolate_homogeneous(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let mut v = self.interpolate(f);
        for &d in &self.dirichlet_dofs {
            v[d] = 0.0;
        }
        v
    }

    /// Interface coefficients of a space function.
    pub fn trace(&self, coeffs: &[f64]) -> Vec<f64> {
        self.interface_dofs.iter().map(|&d| coeffs[d]).collect()
    }

    /// Space vector that is `values` on the interface dofs and zero elsewhere.
    pub fn extend_from_interface(&self, values: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for (&d, &x) in self.interface_dofs.iter().zip(values) {
            v[d] = x;
        }
        v
    }

    /// Evaluates a space function at a point given by its cell and
    /// barycentric coordinates.
    pub fn eval_in_cell(&self, coeffs: &[f64], cell: usize, bary: [f64; 3]) -> f64 {
        let c = &self.cells[cell];
        let b = c.eval(bary);
        c.dofs.iter().zip(&b.values).map(|(&d, v)| coeffs[d] * v).sum()
    }
}

fn element_loop<F>(space: &Space, rule: &TriangleRule, mut local: F) -> SparseMatrix
where
    F: FnMut(&Cell, &BasisEval, f64, &mut [f64]),
{
    let nloc = if space.degree == 1 { 3 } else { 6 };
    let mut b = TripletBuilder::with_capacity(space.dim(), space.dim(), space.cells.len() * nloc * nloc);
    let mut ke = vec![0.0; nloc * nloc];
    for cell in &space.cells {
        ke.iter_mut().for_each(|v| *v = 0.0);
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            let ev = cell.eval(*p);
            local(cell, &ev, w * cell.area, &mut ke);
        }
        for a in 0..nloc {
            for c in 0..nloc {
                b.add(cell.dofs[a], cell.dofs[c], ke[a * nloc + c]);
            }
        }
    }
    b.build()
}

/// Consistent mass matrix ∫ φᵢ φⱼ.
pub fn assemble_mass(space: &Space) -> SparseMatrix {
    let nloc = if space.degree == 1 { 3 } else { 6 };
    element_loop(space, &triangle_degree4(), |_, ev, w, ke| {
        for a in 0..nloc {
            for c in 0..nloc {
                ke[a * nloc + c] += w * ev.values[a] * ev.values[c];
            }
        }
    })
}

/// Stiffness matrix ∫ ∇φᵢ·∇φⱼ.
pub fn assemble_stiffness(space: &Space) -> SparseMatrix {
    let nloc = if space.degree == 1 { 3 } else { 6 };
    element_loop(space, &triangle_degree4(), |_, ev, w, ke| {
        for a in 0..nloc {
            for c in 0..nloc {
                let (ga, gc) = (ev.grads[a], ev.grads[c]);
                ke[a * nloc + c] += w * (ga[0] * gc[0] + ga[1] * gc[1]);
            }
        }
    })
}

/// Interface mass ∫_Σ φᵢ ψⱼ ds between the traces of two spaces, indexed by
/// interface index (rows from `rows`, columns from `cols`).
pub fn assemble_interface_mass(rows: &Space, cols: &Space) -> Result<SparseMatrix> {
    if rows.n_interface() != cols.n_interface() || rows.interface_edges.len() != cols.interface_edges.len() {
        return Err(Error::DimensionMismatch(format!(
            "interface traces differ: {} dofs on {} edges vs {} dofs on {} edges",
            rows.n_interface(),
            rows.interface_edges.len(),
            cols.n_interface(),
            cols.interface_edges.len()
        )));
    }
    let m = rows.n_interface();
    let mut b = TripletBuilder::new(m, m);
    for (er, ec) in rows.interface_edges.iter().zip(&cols.interface_edges) {
        let len = er.length();
        let (cr, cc) = (&rows.cells[er.cell], &cols.cells[ec.cell]);
        for (s, w) in segment_gauss3() {
            let p = er.at(s);
            let (vr, vc) = (cr.eval(cr.barycentric(p)), cc.eval(cc.barycentric(p)));
            for (a, &da) in cr.dofs.iter().enumerate() {
                let Some(ia) = rows.interface_index(da) else { continue };
                for (c, &dc) in cc.dofs.iter().enumerate() {
                    let Some(ic) = cols.interface_index(dc) else { continue };
                    b.add(ia, ic, w * len * vr.values[a] * vc.values[c]);
                }
            }
        }
    }
    Ok(b.build())
}

/// Load vector ∫ f φᵢ over the subdomain.
pub fn assemble_load(space: &Space, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let rule = triangle_degree4();
    let mut out = vec![0.0; space.dim()];
    for cell in &space.cells {
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            let fx = f(cell.point(*p));
            if fx == 0.0 {
                continue;
            }
            let ev = cell.eval(*p);
            for (&d, v) in cell.dofs.iter().zip(&ev.values) {
                out[d] += w * cell.area * fx * v;
            }
        }
    }
    out
}

/// Interface load ∫_Σ g φᵢ ds, indexed by interface index.
pub fn assemble_interface_load(space: &Space, g: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; space.n_interface()];
    for e in &space.interface_edges {
        let len = e.length();
        let cell = &space.cells[e.cell];
        for (s, w) in segment_gauss3() {
            let p = e.at(s);
            let gx = g(p);
            let ev = cell.eval(cell.barycentric(p));
            for (&d, v) in cell.dofs.iter().zip(&ev.values) {
                if let Some(i) = space.interface_index(d) {
                    out[i] += w * len * gx * v;
                }
            }
        }
    }
    out
}

/// L²(Σ) projection onto the trace space, given the interface mass matrix.
pub fn project_interface(space: &Space, interface_mass: &SparseMatrix, g: impl Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
    let rhs = assemble_interface_load(space, g);
    let maxit = 20 * rhs.len().max(10);
    Ok(cg_solve(interface_mass, &rhs, 1e-14, maxit)?.0)
}

/// L²(Σ) projection onto the trace space of `space`.
pub fn l2_project_interface(space: &Space, g: impl Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
    let mass = assemble_interface_mass(space, space)?;
    project_interface(space, &mass, g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1_semi: f64,
    /// Full broken H² norm (L², H¹ and elementwise second derivatives).
    pub h2_broken: Option<f64>,
}

/// Norms of `exact − u_h` for the space function with coefficients `coeffs`.
///
/// The broken H² part sums ‖∂ₓₓe‖² + ‖∂ₓᵧe‖² + ‖∂ᵧᵧe‖² over the cells and is
/// only available for P2 (P1 second derivatives vanish identically).
pub fn error_norms(space: &Space, coeffs: &[f64], exact: impl Fn([f64; 2]) -> Jet, with_h2: bool) -> Result<ErrorNorms> {
    if with_h2 && space.degree < 2 {
        return Err(Error::Unsupported("broken H2 norm requires quadratic elements".into()));
    }
    if coeffs.len() != space.dim() {
        return Err(Error::DimensionMismatch(format!("{} coefficients for {} dofs", coeffs.len(), space.dim())));
    }
    let rule = triangle_collapsed(5);
    let (mut l2, mut h1, mut h2) = (0.0, 0.0, 0.0);
    for cell in &space.cells {
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            let ev = cell.eval(*p);
            let mut uh = Jet::default();
            for (a, &d) in cell.dofs.iter().enumerate() {
                let c = coeffs[d];
                uh.value += c * ev.values[a];
                uh.grad[0] += c * ev.grads[a][0];
                uh.grad[1] += c * ev.grads[a][1];
                for r in 0..2 {
                    for s in 0..2 {
                        uh.hess[r][s] += c * ev.hessians[a][r][s];
                    }
                }
            }
            let e = exact(cell.point(*p)) - uh;
            let wa = w * cell.area;
            l2 += wa * e.value * e.value;
            h1 += wa * (e.grad[0] * e.grad[0] + e.grad[1] * e.grad[1]);
            if with_h2 {
                h2 += wa * (e.hess[0][0].powi(2) + e.hess[0][1].powi(2) + e.hess[1][1].powi(2));
            }
        }
    }
    Ok(ErrorNorms {
        l2: l2.sqrt(),
        h1_semi: h1.sqrt(),
        h2_broken: with_h2.then(|| (l2 + h1 + h2).sqrt()),
    })
}

/// ‖g − λ_h‖_{L²(Σ)} where λ_h has interface coefficients `trace`.
pub fn interface_l2_error(space: &Space, trace: &[f64], g: impl Fn([f64; 2]) -> f64) -> f64 {
    let (xs, ws) = gauss_legendre_unit(5);
    let mut full = vec![0.0; space.dim()];
    for (&d, &v) in space.interface_dofs.iter().zip(trace) {
        full[d] = v;
    }
    let mut acc = 0.0;
    for e in &space.interface_edges {
        let len = e.length();
        let cell = &space.cells[e.cell];
        for (&s, &w) in xs.iter().zip(&ws) {
            let p = e.at(s);
            let diff = g(p) - space.eval_in_cell(&full, e.cell, cell.barycentric(p));
            acc += w * len * diff * diff;
        }
    }
    acc.sqrt()
}

/// Spaces and assembled forms for one mesh and polynomial degree.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub degree: usize,
    pub fluid: Space,
    pub solid: Space,
    pub mass_f: SparseMatrix,
    pub stiff_f: SparseMatrix,
    pub mass_s: SparseMatrix,
    pub stiff_s: SparseMatrix,
    /// B_Σ on fluid traces; also the multiplier mass matrix.
    pub iface_ff: SparseMatrix,
    /// B_Σ on solid traces.
    pub iface_ss: SparseMatrix,
    /// C_Σ with solid-trace rows and fluid-trace columns.
    pub iface_sf: SparseMatrix,
}

impl Discretization {
    pub fn new(mesh: Mesh, degree: usize) -> Result<Self> {
        let fluid = Space::build(&mesh, Subdomain::Fluid, degree)?;
        let solid = Space::build(&mesh, Subdomain::Solid, degree)?;
        let iface_ff = assemble_interface_mass(&fluid, &fluid)?;
        let iface_ss = assemble_interface_mass(&solid, &solid)?;
        let iface_sf = assemble_interface_mass(&solid, &fluid)?;
        Ok(Discretization {
            mass_f: assemble_mass(&fluid),
            stiff_f: assemble_stiffness(&fluid),
            mass_s: assemble_mass(&solid),
            stiff_s: assemble_stiffness(&solid),
            iface_ff,
            iface_ss,
            iface_sf,
            mesh,
            degree,
            fluid,
            solid,
        })
    }

    pub fn n_interface(&self) -> usize {
        self.fluid.n_interface()
    }

    /// ‖c‖² in the interface mass norm.
    pub fn interface_norm_sq(&self, c: &[f64]) -> f64 {
        self.iface_ff.quadratic(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::mesh::InterfaceSpec;
    use std::f64::consts::PI;

    fn mesh(n: usize, y0: f64) -> Mesh {
        Mesh::build(n, InterfaceSpec::Horizontal { y0 }).unwrap()
    }

    fn slanted(n: usize) -> Mesh {
        Mesh::build(n, InterfaceSpec::Slanted { y_left: 0.25, y_right: 0.75 }).unwrap()
    }

    #[test]
    fn space_dimensions() {
        let m = mesh(4, 0.75);
        let s = Space::build(&m, Subdomain::Solid, 1).unwrap();
        assert_eq!(s.dim(), 10);
        assert_eq!(s.dirichlet_dofs.len(), 5);
        assert_eq!(s.n_interface(), 5);
        let f = Space::build(&mesh(2, 0.5), Subdomain::Fluid, 1).unwrap();
        assert_eq!(f.dim(), 6);
        let p2 = Space::build(&m, Subdomain::Fluid, 2).unwrap();
        assert_eq!(p2.n_interface(), 9);
        // 4x3 quads: 5x7 grid of P2 nodes
        assert_eq!(p2.dim(), 9 * 7);
        assert!(p2.dirichlet_dofs.iter().all(|d| p2.interface_index(*d).is_none()));
    }

    #[test]
    fn interface_dofs_match_between_subdomains() {
        for m in [mesh(6, 0.75), slanted(6)] {
            for degree in [1, 2] {
                let f = Space::build(&m, Subdomain::Fluid, degree).unwrap();
                let s = Space::build(&m, Subdomain::Solid, degree).unwrap();
                assert_eq!(f.n_interface(), s.n_interface());
                for (&a, &b) in f.interface_dofs.iter().zip(&s.interface_dofs) {
                    assert_eq!(f.dof_coords[a], s.dof_coords[b]);
                }
                let xs: Vec<f64> = f.interface_dofs.iter().map(|&d| f.dof_coords[d][0]).collect();
                assert!(xs.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn single_triangle_p1_mass() {
        let cell = Cell::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![0, 1, 2]);
        let rule = triangle_degree4();
        let mut me = [[0.0; 3]; 3];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let ev = cell.eval(*p);
            for a in 0..3 {
                for c in 0..3 {
                    me[a][c] += w * cell.area * ev.values[a] * ev.values[c];
                }
            }
        }
        for (a, row) in me.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let expected = cell.area / 12.0 * if a == c { 2.0 } else { 1.0 };
                assert!((v - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_and_stiffness_properties() {
        for m in [mesh(8, 0.75), slanted(8)] {
            for degree in [1, 2] {
                for sub in [Subdomain::Fluid, Subdomain::Solid] {
                    let s = Space::build(&m, sub, degree).unwrap();
                    let mass = assemble_mass(&s);
                    let stiff = assemble_stiffness(&s);
                    assert!(mass.asymmetry() < 1e-13 && stiff.asymmetry() < 1e-13);
                    let ones = vec![1.0; s.dim()];
                    assert!((mass.quadratic(&ones) - m.subdomain_area(sub)).abs() < 1e-12);
                    for v in stiff.matvec(&ones) {
                        assert!(v.abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn single_edge_interface_mass() {
        let m = Mesh::build(2, InterfaceSpec::Horizontal { y0: 0.5 }).unwrap();
        let f = Space::build(&m, Subdomain::Fluid, 1).unwrap();
        let b = assemble_interface_mass(&f, &f).unwrap();
        let l = 0.5;
        assert!((b.get(0, 0) - l / 3.0).abs() < 1e-15);
        assert!((b.get(0, 1) - l / 6.0).abs() < 1e-15);
        assert!((b.get(1, 1) - 2.0 * l / 3.0).abs() < 1e-15);
        assert_eq!(b.get(0, 2), 0.0);
    }

    #[test]
    fn interface_mass_total_and_cross_equality() {
        for m in [mesh(8, 0.75), slanted(8)] {
            for degree in [1, 2] {
                let d = Discretization::new(m.clone(), degree).unwrap();
                let ones = vec![1.0; d.n_interface()];
                assert!((d.iface_ff.quadratic(&ones) - m.interface_arclength()).abs() < 1e-12);
                let row_sums = d.iface_ff.matvec(&ones);
                let direct = assemble_interface_load(&d.fluid, |_| 1.0);
                for (a, b) in row_sums.iter().zip(&direct) {
                    assert!((a - b).abs() < 1e-14);
                }
                for i in 0..d.n_interface() {
                    for j in 0..d.n_interface() {
                        assert!((d.iface_ss.get(i, j) - d.iface_sf.get(i, j)).abs() < 1e-15);
                        assert!((d.iface_ff.get(i, j) - d.iface_sf.get(i, j)).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn mismatched_interfaces_rejected() {
        let a = Space::build(&mesh(4, 0.75), Subdomain::Fluid, 1).unwrap();
        let b = Space::build(&mesh(8, 0.75), Subdomain::Solid, 1).unwrap();
        assert!(matches!(assemble_interface_mass(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn projection_exactness() {
        let m = slanted(8);
        for degree in [1, 2] {
            let s = Space::build(&m, Subdomain::Fluid, degree).unwrap();
            let c = l2_project_interface(&s, |_| 1.0).unwrap();
            assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-12));
            let f = |p: [f64; 2]| 0.3 + p[0] - 2.0 * p[1];
            let u = s.interpolate(f);
            let c = l2_project_interface(&s, f).unwrap();
            for (a, b) in c.iter().zip(s.trace(&u)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_of_sine_converges_at_second_order() {
        let errs: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&n| {
                let s = Space::build(&mesh(n, 0.75), Subdomain::Fluid, 1).unwrap();
                let g = |p: [f64; 2]| (PI * p[0]).sin();
                let c = l2_project_interface(&s, g).unwrap();
                interface_l2_error(&s, &c, g)
            })
            .collect();
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((rate - 2.0).abs() < 0.1, "rate {rate}");
        }
    }

    #[test]
    fn polynomials_are_reproduced() {
        let m = slanted(6);
        let quad = |p: [f64; 2]| Jet {
            value: 1.0 + p[0] * p[0] - 3.0 * p[0] * p[1] + 0.5 * p[1],
            grad: [2.0 * p[0] - 3.0 * p[1], -3.0 * p[0] + 0.5],
            hess: [[2.0, -3.0], [-3.0, 0.0]],
        };
        let s2 = Space::build(&m, Subdomain::Fluid, 2).unwrap();
        let u = s2.interpolate(|p| quad(p).value);
        let e = error_norms(&s2, &u, quad, true).unwrap();
        assert!(e.l2 < 1e-12 && e.h1_semi < 1e-12 && e.h2_broken.unwrap() < 1e-12);

        let lin = |p: [f64; 2]| Jet { value: 2.0 - p[0] + 4.0 * p[1], grad: [-1.0, 4.0], hess: [[0.0; 2]; 2] };
        let s1 = Space::build(&m, Subdomain::Solid, 1).unwrap();
        let u = s1.interpolate(|p| lin(p).value);
        let e = error_norms(&s1, &u, lin, false).unwrap();
        assert!(e.l2 < 1e-12 && e.h1_semi < 1e-12);
        assert!(matches!(error_norms(&s1, &u, lin, true), Err(Error::Unsupported(_))));
    }

    #[test]
    fn zero_coefficients_give_exact_norm() {
        let s = Space::build(&mesh(16, 0.75), Subdomain::Fluid, 1).unwrap();
        let exact = |p: [f64; 2]| Jet {
            value: (PI * p[0]).cos() * (PI * p[1]).sin(),
            ..Jet::default()
        };
        let e = error_norms(&s, &vec![0.0; s.dim()], exact, false).unwrap();
        // ∫₀¹cos²(πx)dx · ∫₀^¾ sin²(πy)dy = ½ (3/8 − sin(3π/2)/(4π))
        let expected = (0.5 * (0.375 - (1.5 * PI).sin() / (4.0 * PI))).sqrt();
        assert!((e.l2 - expected).abs() < 1e-10, "{} vs {}", e.l2, expected);
    }

    #[test]
    fn interpolation_rates() {
        let exact = |p: [f64; 2]| {
            let (cx, sx) = ((PI * p[0]).cos(), (PI * p[0]).sin());
            let (cy, sy) = ((PI * p[1]).cos(), (PI * p[1]).sin());
            Jet {
                value: cx * sy,
                grad: [-PI * sx * sy, PI * cx * cy],
                hess: [[-PI * PI * cx * sy, -PI * PI * sx * cy], [-PI * PI * sx * cy, -PI * PI * cx * sy]],
            }
        };
        for (degree, slope) in [(1, 2.0), (2, 3.0)] {
            let errs: Vec<f64> = [8, 16, 32, 64]
                .iter()
                .map(|&n| {
                    let s = Space::build(&mesh(n, 0.75), Subdomain::Fluid, degree).unwrap();
                    let u = s.interpolate(|p| exact(p).value);
                    error_norms(&s, &u, exact, false).unwrap().l2
                })
                .collect();
            for w in errs.windows(2) {
                let rate = (w[0] / w[1]).log2();
                assert!((rate - slope).abs() < 0.2, "degree {degree}: rate {rate}");
            }
        }
    }

    #[test]
    fn linear_patch_test() {
        let m = slanted(8);
        for degree in [1, 2] {
            let s = Space::build(&m, Subdomain::Fluid, degree).unwrap();
            let k = assemble_stiffness(&s);
            let lin = |p: [f64; 2]| 0.5 + 2.0 * p[0] - p[1];
            let exact = s.interpolate(lin);
            // all dofs on ∂Ω_f are fixed, interior solved
            let boundary: Vec<bool> = s
                .dof_coords
                .iter()
                .enumerate()
                .map(|(d, p)| {
                    p[0] == 0.0 || p[0] == 1.0 || s.dirichlet_mask()[d] || s.interface_index(d).is_some()
                })
                .collect();
            let rhs_full = k.matvec(&exact.iter().zip(&boundary).map(|(v, &b)| if b { *v } else { 0.0 }).collect::<Vec<_>>());
            let rhs: Vec<f64> = (0..s.dim()).map(|i| if boundary[i] { exact[i] } else { -rhs_full[i] }).collect();
            let a = k.eliminate(&boundary);
            let (u, _) = cg_solve(&a, &rhs, 1e-14, 10_000).unwrap();
            for (a, b) in u.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(dot(&u, &u) > 0.0);
        }
    }
}
