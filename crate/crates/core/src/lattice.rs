//! Edge-decorated square lattice (Lieb lattice).
//!
//! Layout, fixed for reproducible dumps:
//!
//! * vertices (sub-lattice A) are row-major, `v = r * N + c`;
//! * edges (sub-lattice B) are horizontal edges row-major, then vertical
//!   edges row-major, then (open boundary only) the four corner legs;
//! * qubit index of vertex `v` is `v`, of edge `e` is `|A| + e`.
//!
//! Periodic lattices have horizontal edge `(r, c) -> (r, c+1 mod N)` and
//! vertical edge `(r, c) -> (r+1 mod N, c)`. At `N = 2` this produces two
//! distinct edges between the same pair of vertices; both are kept.
//!
//! Open lattices drop the wrapping edges. Every corner gets one extra
//! dangling edge (a leg) with a single endpoint so that every boundary vertex
//! carries exactly three edges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Periodic,
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EdgeKind {
    Horizontal { row: usize, col: usize },
    Vertical { row: usize, col: usize },
    Leg { corner: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub kind: EdgeKind,
    /// One endpoint for legs, two otherwise (possibly equal pairs at `N = 2`).
    pub endpoints: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiebLattice {
    n: usize,
    boundary: BoundaryKind,
    edges: Vec<Edge>,
    incidence: Vec<Vec<usize>>,
    boundary_ring: Vec<usize>,
}

impl LiebLattice {
    pub fn new(n: usize, boundary: BoundaryKind) -> Result<Self> {
        if n < 2 {
            return Err(Error::Lattice(format!("linear size {n} < 2")));
        }
        let vid = |r: usize, c: usize| r * n + c;
        let mut edges = Vec::new();
        match boundary {
            BoundaryKind::Periodic => {
                for r in 0..n {
                    for c in 0..n {
                        edges.push(Edge {
                            kind: EdgeKind::Horizontal { row: r, col: c },
                            endpoints: vec![vid(r, c), vid(r, (c + 1) % n)],
                        });
                    }
                }
                for r in 0..n {
                    for c in 0..n {
                        edges.push(Edge {
                            kind: EdgeKind::Vertical { row: r, col: c },
                            endpoints: vec![vid(r, c), vid((r + 1) % n, c)],
                        });
                    }
                }
            }
            BoundaryKind::Open => {
                for r in 0..n {
                    for c in 0..n - 1 {
                        edges.push(Edge {
                            kind: EdgeKind::Horizontal { row: r, col: c },
                            endpoints: vec![vid(r, c), vid(r, c + 1)],
                        });
                    }
                }
                for r in 0..n - 1 {
                    for c in 0..n {
                        edges.push(Edge {
                            kind: EdgeKind::Vertical { row: r, col: c },
                            endpoints: vec![vid(r, c), vid(r + 1, c)],
                        });
                    }
                }
                for corner in [vid(0, 0), vid(0, n - 1), vid(n - 1, n - 1), vid(n - 1, 0)] {
                    edges.push(Edge {
                        kind: EdgeKind::Leg { corner },
                        endpoints: vec![corner],
                    });
                }
            }
        }
        let mut incidence = vec![Vec::new(); n * n];
        for (e, edge) in edges.iter().enumerate() {
            for &v in &edge.endpoints {
                incidence[v].push(e);
            }
        }
        let boundary_ring = match boundary {
            BoundaryKind::Periodic => Vec::new(),
            BoundaryKind::Open => {
                let mut ring = Vec::with_capacity(4 * (n - 1));
                ring.extend((0..n - 1).map(|c| vid(0, c)));
                ring.extend((0..n - 1).map(|r| vid(r, n - 1)));
                ring.extend((1..n).rev().map(|c| vid(n - 1, c)));
                ring.extend((1..n).rev().map(|r| vid(r, 0)));
                ring
            }
        };
        Ok(Self {
            n,
            boundary,
            edges,
            incidence,
            boundary_ring,
        })
    }

    pub fn periodic(n: usize) -> Result<Self> {
        Self::new(n, BoundaryKind::Periodic)
    }

    pub fn open(n: usize) -> Result<Self> {
        Self::new(n, BoundaryKind::Open)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn boundary_kind(&self) -> BoundaryKind {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == BoundaryKind::Periodic
    }

    pub fn num_vertices(&self) -> usize {
        self.n * self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_qubits(&self) -> usize {
        self.num_vertices() + self.num_edges()
    }

    pub fn vertex(&self, row: usize, col: usize) -> usize {
        row * self.n + col
    }

    pub fn coords(&self, v: usize) -> (usize, usize) {
        (v / self.n, v % self.n)
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn endpoints(&self, e: usize) -> &[usize] {
        &self.edges[e].endpoints
    }

    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.incidence[v]
    }

    pub fn vertex_qubit(&self, v: usize) -> usize {
        v
    }

    pub fn edge_qubit(&self, e: usize) -> usize {
        self.num_vertices() + e
    }

    pub fn horizontal_edge(&self, row: usize, col: usize) -> Option<usize> {
        let n = self.n;
        match self.boundary {
            BoundaryKind::Periodic => Some(row % n * n + col % n),
            BoundaryKind::Open if row < n && col + 1 < n => Some(row * (n - 1) + col),
            BoundaryKind::Open => None,
        }
    }

    pub fn vertical_edge(&self, row: usize, col: usize) -> Option<usize> {
        let n = self.n;
        match self.boundary {
            BoundaryKind::Periodic => Some(n * n + row % n * n + col % n),
            BoundaryKind::Open if row + 1 < n && col < n => Some(n * (n - 1) + row * n + col),
            BoundaryKind::Open => None,
        }
    }

    /// Boundary vertices in clockwise order starting at the top-left corner.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_ring
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_ring.contains(&v)
    }

    /// Open path of B-edges between two boundary vertices, taken along the
    /// shorter arc of the boundary ring. Equal arcs are broken by the
    /// lexicographically smaller sorted edge list, so the result does not
    /// depend on argument order.
    pub fn boundary_string(&self, u: usize, u2: usize) -> Result<EdgePath> {
        let (cw, ccw) = self.boundary_arcs(u, u2)?;
        let pick = match cw.edges.len().cmp(&ccw.edges.len()) {
            std::cmp::Ordering::Less => cw,
            std::cmp::Ordering::Greater => ccw,
            std::cmp::Ordering::Equal => {
                if cw.sorted_edges() <= ccw.sorted_edges() {
                    cw
                } else {
                    ccw
                }
            }
        };
        Ok(pick)
    }

    /// Both boundary arcs from `u` to `u2`: clockwise first.
    pub fn boundary_arcs(&self, u: usize, u2: usize) -> Result<(EdgePath, EdgePath)> {
        if self.is_periodic() {
            return Err(Error::Geometry(
                "boundary strings need an open lattice".into(),
            ));
        }
        if u == u2 {
            return Err(Error::Geometry("string endpoints coincide".into()));
        }
        let pos = |v: usize| {
            self.boundary_ring
                .iter()
                .position(|&b| b == v)
                .ok_or_else(|| Error::Geometry(format!("vertex {v} is not on the boundary")))
        };
        let (i, j) = (pos(u)?, pos(u2)?);
        let len = self.boundary_ring.len();
        let walk = |step: isize| -> EdgePath {
            let mut edges = Vec::new();
            let mut k = i;
            while k != j {
                let next = ((k as isize + step).rem_euclid(len as isize)) as usize;
                let a = self.boundary_ring[k];
                let b = self.boundary_ring[next];
                edges.push(self.edge_between(a, b).expect("ring neighbours share an edge"));
                k = next;
            }
            EdgePath {
                edges,
                closed: false,
                endpoints: Some((u, u2)),
                dual: false,
            }
        };
        Ok((walk(1), walk(-1)))
    }

    fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.incidence[a]
            .iter()
            .copied()
            .find(|&e| {
                let ep = &self.edges[e].endpoints;
                ep.len() == 2 && ((ep[0] == a && ep[1] == b) || (ep[0] == b && ep[1] == a))
            })
    }

    /// Closed loop on the dual lattice surrounding a `width x height` block of
    /// vertices whose top-left vertex is `anchor`. The path lists the B-edges
    /// whose Ising bonds the loop crosses: top side left to right, right side
    /// downwards, bottom side right to left, left side upwards. There are
    /// `2 (width + height)` of them.
    pub fn rectangular_loop(
        &self,
        anchor: (usize, usize),
        width: usize,
        height: usize,
    ) -> Result<EdgePath> {
        if !self.is_periodic() {
            return Err(Error::Geometry("rectangular loops need a periodic lattice".into()));
        }
        let n = self.n;
        if width == 0 || height == 0 {
            return Err(Error::Geometry("empty loop".into()));
        }
        if width >= n || height >= n {
            return Err(Error::Geometry(format!(
                "{width}x{height} loop does not fit contractibly on a {n}x{n} lattice"
            )));
        }
        let (r0, c0) = (anchor.0 % n, anchor.1 % n);
        let up = |r: usize| (r + n - 1) % n;
        let mut edges = Vec::with_capacity(2 * (width + height));
        for dc in 0..width {
            edges.push(self.vertical_edge(up(r0), c0 + dc).unwrap());
        }
        for dr in 0..height {
            edges.push(self.horizontal_edge(r0 + dr, c0 + width - 1).unwrap());
        }
        for dc in (0..width).rev() {
            edges.push(self.vertical_edge(r0 + height - 1, c0 + dc).unwrap());
        }
        for dr in (0..height).rev() {
            edges.push(self.horizontal_edge(r0 + dr, (c0 + n - 1) % n).unwrap());
        }
        Ok(EdgePath {
            edges,
            closed: true,
            endpoints: None,
            dual: true,
        })
    }

    /// Vertices of the block enclosed by [`Self::rectangular_loop`].
    pub fn enclosed_vertices(&self, anchor: (usize, usize), width: usize, height: usize) -> Vec<usize> {
        let n = self.n;
        let mut out = Vec::with_capacity(width * height);
        for dr in 0..height {
            for dc in 0..width {
                out.push(self.vertex((anchor.0 + dr) % n, (anchor.1 + dc) % n));
            }
        }
        out
    }

    /// The four B-edges around the plaquette with top-left vertex `(row, col)`.
    pub fn plaquette_loop(&self, row: usize, col: usize) -> Result<EdgePath> {
        let n = self.n;
        if !self.is_periodic() && (row + 1 >= n || col + 1 >= n) {
            return Err(Error::Geometry("plaquette outside the open lattice".into()));
        }
        let edges = vec![
            self.horizontal_edge(row, col).unwrap(),
            self.vertical_edge(row, (col + 1) % n).unwrap(),
            self.horizontal_edge((row + 1) % n, col).unwrap(),
            self.vertical_edge(row, col).unwrap(),
        ];
        Ok(EdgePath {
            edges,
            closed: true,
            endpoints: None,
            dual: false,
        })
    }

    /// A non-contractible loop of horizontal edges along one row (periodic only).
    pub fn row_loop(&self, row: usize) -> Result<EdgePath> {
        if !self.is_periodic() {
            return Err(Error::Geometry("row loops need a periodic lattice".into()));
        }
        Ok(EdgePath {
            edges: (0..self.n).map(|c| self.horizontal_edge(row, c).unwrap()).collect(),
            closed: true,
            endpoints: None,
            dual: false,
        })
    }

    /// Split an open lattice into vertical bands `L | M | R`.
    ///
    /// Columns `< cut.left` form `L`, columns `>= cut.right` form `R`.
    /// Horizontal edges go with their left endpoint, vertical edges and legs
    /// with their column, so every bond crossing a cut has its edge qubit on
    /// the left side of that cut.
    pub fn partition_disk(&self, cut: CutSpec) -> Result<RegionPartition> {
        if self.is_periodic() {
            return Err(Error::Geometry("disk partitions need an open lattice".into()));
        }
        let n = self.n;
        let CutSpec { left, right, margin } = cut;
        if left == 0 || right >= n {
            return Err(Error::Geometry(format!(
                "cuts at columns {left},{right} leave an empty outer region"
            )));
        }
        if right <= left || right - left < margin.max(1) {
            return Err(Error::Geometry(format!(
                "middle region width {} below margin {}",
                right.saturating_sub(left),
                margin.max(1)
            )));
        }
        let region_of_col = |c: usize| {
            if c < left {
                Region::L
            } else if c < right {
                Region::M
            } else {
                Region::R
            }
        };
        let mut assignment = vec![Region::M; self.num_qubits()];
        for v in 0..self.num_vertices() {
            assignment[self.vertex_qubit(v)] = region_of_col(v % n);
        }
        for (e, edge) in self.edges.iter().enumerate() {
            let col = match edge.kind {
                EdgeKind::Horizontal { col, .. } | EdgeKind::Vertical { col, .. } => col,
                EdgeKind::Leg { corner } => corner % n,
            };
            assignment[self.edge_qubit(e)] = region_of_col(col);
        }
        let mut l1 = 0;
        let mut l2 = 0;
        for edge in &self.edges {
            if edge.endpoints.len() != 2 {
                continue;
            }
            let a = assignment[edge.endpoints[0]];
            let b = assignment[edge.endpoints[1]];
            match (a, b) {
                (Region::L, Region::M) | (Region::M, Region::L) => l1 += 1,
                (Region::M, Region::R) | (Region::R, Region::M) => l2 += 1,
                (Region::L, Region::R) | (Region::R, Region::L) => {
                    return Err(Error::Geometry("L and R share a bond".into()))
                }
                _ => {}
            }
        }
        Ok(RegionPartition {
            assignment,
            cut_lengths: (l1, l2),
        })
    }

    pub fn dump(&self) -> LatticeDump {
        LatticeDump {
            size: self.n,
            boundary: self.boundary,
            num_qubits: self.num_qubits(),
            vertices: (0..self.num_vertices())
                .map(|v| VertexDump {
                    id: v,
                    qubit: self.vertex_qubit(v),
                    row: v / self.n,
                    col: v % self.n,
                    edges: self.incidence[v].clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .enumerate()
                .map(|(e, edge)| EdgeDump {
                    id: e,
                    qubit: self.edge_qubit(e),
                    kind: edge.kind,
                    endpoints: edge.endpoints.clone(),
                })
                .collect(),
            boundary_ring: self.boundary_ring.clone(),
        }
    }
}

/// Ordered list of B-edges.
///
/// Direct paths (`dual == false`) have consecutive edges sharing a vertex.
/// Dual loops list the edges crossed by a closed curve through plaquette
/// centres; consecutive edges then share a plaquette instead.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EdgePath {
    pub edges: Vec<usize>,
    pub closed: bool,
    pub endpoints: Option<(usize, usize)>,
    pub dual: bool,
}

impl EdgePath {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn sorted_edges(&self) -> Vec<usize> {
        let mut e = self.edges.clone();
        e.sort_unstable();
        e
    }

    /// Checks the connectivity invariant of a direct path.
    pub fn is_connected_in(&self, lattice: &LiebLattice) -> bool {
        if self.dual {
            return true;
        }
        let share = |a: usize, b: usize| {
            lattice
                .endpoints(a)
                .iter()
                .any(|v| lattice.endpoints(b).contains(v))
        };
        let consecutive = self.edges.windows(2).all(|w| share(w[0], w[1]));
        let wrap = !self.closed
            || self.edges.len() < 2
            || share(self.edges[0], self.edges[self.edges.len() - 1]);
        consecutive && wrap
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    L,
    M,
    R,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutSpec {
    /// First column of `M`.
    pub left: usize,
    /// First column of `R`.
    pub right: usize,
    /// Minimum width of `M` in columns.
    pub margin: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegionPartition {
    /// Region of every qubit.
    pub assignment: Vec<Region>,
    /// Bonds between `L` and `M`, and between `M` and `R`.
    pub cut_lengths: (usize, usize),
}

impl RegionPartition {
    /// Qubit mask of the union of `regions`.
    pub fn mask(&self, regions: &[Region]) -> Vec<bool> {
        self.assignment.iter().map(|r| regions.contains(r)).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LatticeDump {
    pub size: usize,
    pub boundary: BoundaryKind,
    pub num_qubits: usize,
    pub vertices: Vec<VertexDump>,
    pub edges: Vec<EdgeDump>,
    pub boundary_ring: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VertexDump {
    pub id: usize,
    pub qubit: usize,
    pub row: usize,
    pub col: usize,
    pub edges: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeDump {
    pub id: usize,
    pub qubit: usize,
    #[serde(flatten)]
    pub kind: EdgeKind,
    pub endpoints: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn periodic_counts() {
        let l = LiebLattice::periodic(2).unwrap();
        assert_eq!((l.num_vertices(), l.num_edges(), l.num_qubits()), (4, 8, 12));
        let l = LiebLattice::periodic(3).unwrap();
        assert_eq!((l.num_vertices(), l.num_edges()), (9, 18));
        for v in 0..9 {
            assert_eq!(l.incident_edges(v).len(), 4);
        }
        assert!(l.edges().iter().all(|e| e.endpoints.len() == 2));
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(LiebLattice::periodic(1).is_err());
        assert!(LiebLattice::open(0).is_err());
    }

    #[test]
    fn open_boundary_vertices_have_three_edges() {
        for n in 2..6 {
            let l = LiebLattice::open(n).unwrap();
            assert_eq!(l.boundary_vertices().len(), 4 * (n - 1));
            for &u in l.boundary_vertices() {
                assert_eq!(l.incident_edges(u).len(), 3, "n={n} u={u}");
            }
            for v in 0..l.num_vertices() {
                if !l.is_boundary_vertex(v) {
                    assert_eq!(l.incident_edges(v).len(), 4);
                }
            }
        }
        assert_eq!(LiebLattice::open(2).unwrap().num_qubits(), 12);
    }

    #[test]
    fn incidence_is_symmetric() {
        for l in [LiebLattice::periodic(3).unwrap(), LiebLattice::open(4).unwrap()] {
            for v in 0..l.num_vertices() {
                for &e in l.incident_edges(v) {
                    assert!(l.endpoints(e).contains(&v));
                }
            }
            for e in 0..l.num_edges() {
                for &v in l.endpoints(e) {
                    assert!(l.incident_edges(v).contains(&e));
                }
            }
        }
    }

    #[test]
    fn rebuild_is_deterministic() {
        assert_eq!(LiebLattice::open(4).unwrap(), LiebLattice::open(4).unwrap());
        let a = serde_json::to_string(&LiebLattice::periodic(3).unwrap().dump()).unwrap();
        let b = serde_json::to_string(&LiebLattice::periodic(3).unwrap().dump()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn boundary_strings_connect_and_are_symmetric() {
        let l = LiebLattice::open(4).unwrap();
        let ring = l.boundary_vertices().to_vec();
        for &u in &ring {
            for &w in &ring {
                if u == w {
                    continue;
                }
                let p = l.boundary_string(u, w).unwrap();
                assert!(!p.is_empty());
                assert!(p.is_connected_in(&l));
                assert_eq!(p.sorted_edges(), l.boundary_string(w, u).unwrap().sorted_edges());
            }
        }
        let a = ring[0];
        assert!(l.boundary_string(a, a).is_err());
        assert!(LiebLattice::periodic(3).unwrap().boundary_string(0, 1).is_err());
        // adjacent boundary vertices are joined by one edge
        assert_eq!(l.boundary_string(ring[0], ring[1]).unwrap().len(), 1);
    }

    #[test]
    fn loop_crossing_counts_by_geometry_walk() {
        let l = LiebLattice::periodic(20).unwrap();
        let lp = l.rectangular_loop((3, 4), 6, 6).unwrap();
        // Independent count: bonds with exactly one endpoint inside the block.
        let inside: HashSet<usize> = l.enclosed_vertices((3, 4), 6, 6).into_iter().collect();
        let crossing: HashSet<usize> = (0..l.num_edges())
            .filter(|&e| {
                let ep = l.endpoints(e);
                inside.contains(&ep[0]) != inside.contains(&ep[1])
            })
            .collect();
        assert_eq!(crossing.len(), 24);
        assert_eq!(lp.len(), 24);
        assert_eq!(lp.edges.iter().copied().collect::<HashSet<_>>(), crossing);
        assert!(lp.closed && lp.dual);
    }

    #[test]
    fn wrapping_loops_are_rejected() {
        let l = LiebLattice::periodic(20).unwrap();
        assert!(l.rectangular_loop((0, 0), 20, 20).is_err());
        assert!(l.rectangular_loop((0, 0), 21, 3).is_err());
        assert!(LiebLattice::open(5).unwrap().rectangular_loop((0, 0), 2, 2).is_err());
    }

    #[test]
    fn separated_loops_do_not_overlap() {
        let l = LiebLattice::periodic(20).unwrap();
        let a: HashSet<_> = l.rectangular_loop((1, 1), 10, 10).unwrap().edges.into_iter().collect();
        let b: HashSet<_> = l.rectangular_loop((13, 13), 6, 6).unwrap().edges.into_iter().collect();
        assert!(a.is_disjoint(&b));
        assert_eq!((a.len(), b.len()), (40, 24));
    }

    #[test]
    fn plaquette_loop_is_connected() {
        let l = LiebLattice::periodic(3).unwrap();
        let p = l.plaquette_loop(2, 2).unwrap();
        assert!(p.is_connected_in(&l));
        assert!(l.row_loop(1).unwrap().is_connected_in(&l));
    }

    #[test]
    fn symmetric_bands_have_equal_cuts() {
        let l = LiebLattice::open(6).unwrap();
        let p = l.partition_disk(CutSpec { left: 2, right: 4, margin: 1 }).unwrap();
        assert_eq!(p.cut_lengths, (6, 6));
        // M of zero width leaves L and R adjacent.
        assert!(l.partition_disk(CutSpec { left: 3, right: 3, margin: 0 }).is_err());
        assert!(l.partition_disk(CutSpec { left: 2, right: 3, margin: 2 }).is_err());
        assert!(l.partition_disk(CutSpec { left: 0, right: 3, margin: 1 }).is_err());
    }

    #[test]
    fn cut_lengths_skip_outer_boundary() {
        // Each cut line spans N rows; the legs and the outer frame add nothing.
        let l = LiebLattice::open(5).unwrap();
        let p = l.partition_disk(CutSpec { left: 1, right: 3, margin: 1 }).unwrap();
        assert_eq!(p.cut_lengths, (5, 5));
    }
}
