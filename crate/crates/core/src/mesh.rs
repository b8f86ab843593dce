//! Structured, interface-conforming triangulations of the unit square.
//!
//! The square is cut by a straight interface Σ running from the left edge to
//! the right edge. Triangles below Σ belong to the fluid subdomain, triangles
//! above it to the solid subdomain. The bottom edge carries the fluid
//! Dirichlet condition, the top edge the solid one, and the two side edges are
//! Neumann boundaries.
//!
//! Every mesh is a uniform `n x n` lattice of quads, each split along the
//! same diagonal, with the rows moved vertically (column by column) so that
//! one lattice row lies exactly on Σ.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Geometry of the interface line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterfaceSpec {
    /// Σ = {y = y0}.
    Horizontal { y0: f64 },
    /// Σ is the segment from (0, y_left) to (1, y_right).
    Slanted { y_left: f64, y_right: f64 },
}

impl InterfaceSpec {
    pub fn validate(&self) -> Result<()> {
        let inside = |v: f64| v > 0.0 && v < 1.0;
        match *self {
            InterfaceSpec::Horizontal { y0 } if !inside(y0) => Err(Error::InvalidMesh(format!(
                "horizontal interface height {y0} must lie strictly inside (0, 1)"
            ))),
            InterfaceSpec::Slanted { y_left, y_right } if !inside(y_left) || !inside(y_right) => {
                Err(Error::InvalidMesh(format!(
                    "slanted interface endpoints ({y_left}, {y_right}) must lie strictly inside (0, 1)"
                )))
            }
            _ => Ok(()),
        }
    }

    fn endpoints(&self) -> (f64, f64) {
        match *self {
            InterfaceSpec::Horizontal { y0 } => (y0, y0),
            InterfaceSpec::Slanted { y_left, y_right } => (y_left, y_right),
        }
    }

    /// Height of Σ above the abscissa `x`.
    pub fn y_at(&self, x: f64) -> f64 {
        let (l, r) = self.endpoints();
        l + (r - l) * x
    }

    /// Unit normal on Σ pointing out of the fluid subdomain (into the solid).
    pub fn fluid_normal(&self) -> [f64; 2] {
        let (l, r) = self.endpoints();
        let slope = r - l;
        let len = (1.0 + slope * slope).sqrt();
        [-slope / len, 1.0 / len]
    }

    /// Exact length of Σ.
    pub fn length(&self) -> f64 {
        let (l, r) = self.endpoints();
        (1.0 + (r - l) * (r - l)).sqrt()
    }

    /// Exact area of the fluid subdomain (below Σ).
    pub fn fluid_area(&self) -> f64 {
        let (l, r) = self.endpoints();
        0.5 * (l + r)
    }
}

impl fmt::Display for InterfaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            InterfaceSpec::Horizontal { y0 } => write!(f, "horizontal:{y0}"),
            InterfaceSpec::Slanted { y_left, y_right } => write!(f, "slanted:{y_left},{y_right}"),
        }
    }
}

impl FromStr for InterfaceSpec {
    type Err = Error;

    /// Parses `horizontal:<y0>` or `slanted:<yL>,<yR>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse interface '{s}'"));
        let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        let spec = match kind.trim().to_ascii_lowercase().as_str() {
            "horizontal" => InterfaceSpec::Horizontal {
                y0: rest.trim().parse().map_err(|_| bad())?,
            },
            "slanted" => {
                let (l, r) = rest.split_once(',').ok_or_else(bad)?;
                InterfaceSpec::Slanted {
                    y_left: l.trim().parse().map_err(|_| bad())?,
                    y_right: r.trim().parse().map_err(|_| bad())?,
                }
            }
            _ => return Err(bad()),
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subdomain {
    Fluid,
    Solid,
}

impl Subdomain {
    pub fn name(self) -> &'static str {
        match self {
            Subdomain::Fluid => "fluid",
            Subdomain::Solid => "solid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FacetTag {
    DirichletFluid,
    DirichletSolid,
    NeumannFluid,
    NeumannSolid,
    Interface,
}

impl FacetTag {
    pub fn name(self) -> &'static str {
        match self {
            FacetTag::DirichletFluid => "dirichlet_fluid",
            FacetTag::DirichletSolid => "dirichlet_solid",
            FacetTag::NeumannFluid => "neumann_fluid",
            FacetTag::NeumannSolid => "neumann_solid",
            FacetTag::Interface => "interface",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    /// Counter-clockwise vertex indices.
    pub vertices: [usize; 3],
    pub subdomain: Subdomain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub vertices: [usize; 2],
    pub tag: FacetTag,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub n: usize,
    /// Nominal mesh size, always `1 / n`.
    pub h: f64,
    pub interface: InterfaceSpec,
    /// Lattice row that is mapped onto Σ.
    pub interface_row: usize,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    pub facets: Vec<Facet>,
    /// Interface edges ordered from x = 0 to x = 1.
    pub interface_edges: Vec<[usize; 2]>,
}

impl Mesh {
    /// Builds the structured mesh with `n` subdivisions per side.
    pub fn build(n: usize, interface: InterfaceSpec) -> Result<Mesh> {
        if n < 2 {
            return Err(Error::InvalidMesh(format!("need at least 2 subdivisions, got {n}")));
        }
        interface.validate()?;

        let (l, r) = interface.endpoints();
        let row = ((0.5 * (l + r) * n as f64).round() as usize).clamp(1, n - 1);

        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let x = i as f64 / n as f64;
                let ys = interface.y_at(x);
                let y = if j == row {
                    ys
                } else if j < row {
                    ys * j as f64 / row as f64
                } else if j == n {
                    1.0
                } else {
                    ys + (1.0 - ys) * (j - row) as f64 / (n - row) as f64
                };
                vertices.push([x, y]);
            }
        }

        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            let subdomain = if j < row { Subdomain::Fluid } else { Subdomain::Solid };
            for i in 0..n {
                let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                triangles.push(Triangle { vertices: [v00, v10, v11], subdomain });
                triangles.push(Triangle { vertices: [v00, v11, v01], subdomain });
            }
        }

        let mut facets = Vec::with_capacity(4 * n + n);
        for i in 0..n {
            facets.push(Facet { vertices: [id(i, 0), id(i + 1, 0)], tag: FacetTag::DirichletFluid });
        }
        for i in 0..n {
            facets.push(Facet { vertices: [id(i, n), id(i + 1, n)], tag: FacetTag::DirichletSolid });
        }
        for j in 0..n {
            let tag = if j < row { FacetTag::NeumannFluid } else { FacetTag::NeumannSolid };
            facets.push(Facet { vertices: [id(0, j), id(0, j + 1)], tag });
            facets.push(Facet { vertices: [id(n, j), id(n, j + 1)], tag });
        }
        let interface_edges: Vec<[usize; 2]> = (0..n).map(|i| [id(i, row), id(i + 1, row)]).collect();
        facets.extend(interface_edges.iter().map(|&vertices| Facet { vertices, tag: FacetTag::Interface }));

        Ok(Mesh {
            n,
            h: 1.0 / n as f64,
            interface,
            interface_row: row,
            vertices,
            triangles,
            facets,
            interface_edges,
        })
    }

    /// Signed area of triangle `t` (positive for counter-clockwise order).
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].vertices;
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn edge_length(&self, e: [usize; 2]) -> f64 {
        let (p, q) = (self.vertices[e[0]], self.vertices[e[1]]);
        ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
    }

    /// Sum of the interface edge lengths.
    pub fn interface_arclength(&self) -> f64 {
        self.interface_edges.iter().map(|&e| self.edge_length(e)).sum()
    }

    pub fn subdomain_area(&self, subdomain: Subdomain) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.triangles[t].subdomain == subdomain)
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Plain-text dump: `vertex x y`, `tri i j k tag`, `facet i j tag`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(out, "vertex {:.17e} {:.17e}", v[0], v[1])?;
        }
        for t in &self.triangles {
            let [a, b, c] = t.vertices;
            writeln!(out, "tri {a} {b} {c} {}", t.subdomain.name())?;
        }
        for f in &self.facets {
            writeln!(out, "facet {} {} {}", f.vertices[0], f.vertices[1], f.tag.name())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn horizontal(y0: f64) -> InterfaceSpec {
        InterfaceSpec::Horizontal { y0 }
    }

    #[test]
    fn counts_for_quarter_interface() {
        let m = Mesh::build(4, horizontal(0.75)).unwrap();
        assert_eq!(m.vertices.len(), 25);
        assert_eq!(m.triangles.len(), 32);
        let solid = m.triangles.iter().filter(|t| t.subdomain == Subdomain::Solid).count();
        assert_eq!(solid, 8);
        assert_eq!(m.triangles.len() - solid, 24);
        assert_eq!(m.interface_edges.len(), 4);
        for (k, v) in m.vertices.iter().enumerate() {
            let (i, j) = (k % 5, k / 5);
            assert!((v[0] - i as f64 / 4.0).abs() < 1e-15);
            assert!((v[1] - j as f64 / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn midline_interface_edges() {
        let m = Mesh::build(2, horizontal(0.5)).unwrap();
        let edges: Vec<_> = m
            .interface_edges
            .iter()
            .map(|e| (m.vertices[e[0]], m.vertices[e[1]]))
            .collect();
        assert_eq!(edges, vec![([0.0, 0.5], [0.5, 0.5]), ([0.5, 0.5], [1.0, 0.5])]);
    }

    #[test]
    fn slanted_shear_formula() {
        let spec = InterfaceSpec::Slanted { y_left: 0.25, y_right: 0.75 };
        let m = Mesh::build(4, spec).unwrap();
        assert_eq!(m.interface_row, 2);
        // vertex (i, j) -> index j * 5 + i
        let check = |i: usize, j: usize, y: f64| {
            let v = m.vertices[j * 5 + i];
            assert!((v[0] - i as f64 / 4.0).abs() < 1e-15);
            assert!((v[1] - y).abs() < 1e-15, "vertex ({i},{j}) at {v:?}, expected y={y}");
        };
        // row 1 at x = 0: halfway between 0 and 0.25
        check(0, 1, 0.125);
        // interface row at x = 0.5: 0.25 + 0.5 * 0.5
        check(2, 2, 0.5);
        // row 3 at x = 1: halfway between 0.75 and 1
        check(4, 3, 0.875);
        check(3, 0, 0.0);
        check(1, 4, 1.0);
    }

    #[test]
    fn arclength() {
        assert!((Mesh::build(8, horizontal(0.75)).unwrap().interface_arclength() - 1.0).abs() < 1e-14);
        assert!((Mesh::build(2, horizontal(0.5)).unwrap().interface_arclength() - 1.0).abs() < 1e-14);
        let s = Mesh::build(6, InterfaceSpec::Slanted { y_left: 0.25, y_right: 0.75 }).unwrap();
        assert!((s.interface_arclength() - 1.118033988749895).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(Mesh::build(1, horizontal(0.5)).is_err());
        assert!(Mesh::build(4, horizontal(1.0)).is_err());
        assert!(Mesh::build(4, horizontal(0.0)).is_err());
        assert!(Mesh::build(4, InterfaceSpec::Slanted { y_left: -0.1, y_right: 0.5 }).is_err());
        assert!(Mesh::build(4, InterfaceSpec::Slanted { y_left: 0.5, y_right: 1.2 }).is_err());
    }

    #[test]
    fn graded_rows_hit_offlattice_interface() {
        let m = Mesh::build(5, horizontal(0.3)).unwrap();
        let on_sigma = m.vertices.iter().filter(|v| (v[1] - 0.3).abs() < 1e-15).count();
        assert_eq!(on_sigma, 6);
        assert!((m.subdomain_area(Subdomain::Fluid) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn parse_interface() {
        assert_eq!("horizontal:0.75".parse::<InterfaceSpec>().unwrap(), horizontal(0.75));
        assert_eq!(
            "slanted:0.25,0.75".parse::<InterfaceSpec>().unwrap(),
            InterfaceSpec::Slanted { y_left: 0.25, y_right: 0.75 }
        );
        assert!("diagonal:0.5".parse::<InterfaceSpec>().is_err());
        assert!("horizontal:1.5".parse::<InterfaceSpec>().is_err());
    }

    fn check_invariants(m: &Mesh) {
        let total: f64 = (0..m.triangles.len()).map(|t| m.triangle_area(t)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((m.subdomain_area(Subdomain::Fluid) - m.interface.fluid_area()).abs() < 1e-12);
        for t in 0..m.triangles.len() {
            assert!(m.triangle_area(t) > 0.0);
        }

        // no triangle straddles Σ
        for t in &m.triangles {
            for &v in &t.vertices {
                let p = m.vertices[v];
                let gap = p[1] - m.interface.y_at(p[0]);
                match t.subdomain {
                    Subdomain::Fluid => assert!(gap <= 1e-14),
                    Subdomain::Solid => assert!(gap >= -1e-14),
                }
            }
        }

        // every interface vertex touches both subdomains
        for e in &m.interface_edges {
            for &v in e {
                let owners: Vec<_> = m
                    .triangles
                    .iter()
                    .filter(|t| t.vertices.contains(&v))
                    .map(|t| t.subdomain)
                    .collect();
                assert!(owners.contains(&Subdomain::Fluid) && owners.contains(&Subdomain::Solid));
            }
        }

        // facets partition boundary ∪ Σ: each boundary edge (used by one
        // triangle) is tagged exactly once, plus the interface edges.
        let mut use_count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &m.triangles {
            let [a, b, c] = t.vertices;
            for (p, q) in [(a, b), (b, c), (c, a)] {
                *use_count.entry((p.min(q), p.max(q))).or_default() += 1;
            }
        }
        let mut tagged: HashMap<(usize, usize), FacetTag> = HashMap::new();
        for f in &m.facets {
            let key = (f.vertices[0].min(f.vertices[1]), f.vertices[0].max(f.vertices[1]));
            assert!(tagged.insert(key, f.tag).is_none(), "facet tagged twice");
            let (p, q) = (m.vertices[f.vertices[0]], m.vertices[f.vertices[1]]);
            match f.tag {
                FacetTag::DirichletFluid => assert!(p[1] == 0.0 && q[1] == 0.0),
                FacetTag::DirichletSolid => assert!(p[1] == 1.0 && q[1] == 1.0),
                FacetTag::NeumannFluid | FacetTag::NeumannSolid => {
                    assert!(p[0] == q[0] && (p[0] == 0.0 || p[0] == 1.0))
                }
                FacetTag::Interface => {
                    assert!((p[1] - m.interface.y_at(p[0])).abs() < 1e-14);
                    assert!((q[1] - m.interface.y_at(q[0])).abs() < 1e-14);
                }
            }
        }
        for (edge, count) in &use_count {
            let tag = tagged.get(edge);
            match count {
                1 => assert!(matches!(tag, Some(t) if *t != FacetTag::Interface)),
                2 => assert!(tag.is_none() || tag == Some(&FacetTag::Interface)),
                _ => panic!("non-conforming edge"),
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn mesh_invariants_hold(n in 2usize..24, a in 0.05f64..0.95, b in 0.05f64..0.95, slanted: bool) {
            let spec = if slanted {
                InterfaceSpec::Slanted { y_left: a, y_right: b }
            } else {
                InterfaceSpec::Horizontal { y0: a }
            };
            check_invariants(&Mesh::build(n, spec).unwrap());
        }
    }
}
