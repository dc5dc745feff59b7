//! Curvilinear hexahedral meshes with octree h-refinement and per-element degrees.
//!
//! The mesh is a Cartesian lattice of *root cells*, each carrying a tensor-product
//! polynomial geometry mapping from the reference cube `[-1, 1]^3`. Elements are
//! octree leaves inside root cells, described by `(level, ijk)` keys; an element's
//! mapping is the root polynomial composed with the affine extent box, so children
//! lie exactly on their parent's surfaces and all interfaces (including hanging
//! ones) are watertight by construction.
//!
//! Topology invariants maintained here and pinned by tests:
//!
//! * 2:1 balance: face-adjacent leaves differ by at most one level, so a face is
//!   either matched one-to-one or split into exactly four child faces (4:1).
//! * Every leaf face is a domain boundary face, one side of a conforming
//!   interface, or part of exactly one hanging interface.
//! * All refinement and degree assignment is driven by a seeded ChaCha stream in
//!   element order, so meshes are bit-reproducible.

use crate::error::{Error, Result};
use crate::sbp::{barycentric_weights, lagrange_at, lagrange_deriv_at, lgl_nodes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Octree leaf key inside one root cell: `(level, ijk)` with
/// `ijk[d] < 2^level`.
pub type LeafKey = (u8, [u32; 3]);

/// Tensor-product polynomial geometry of one root cell.
///
/// `vals[m]` holds coordinate `m` at the `(deg+1)^3` LGL nodes of the
/// reference cube, lexicographic with the third index fastest.
#[derive(Debug, Clone)]
pub struct GeomPoly {
    pub degree: usize,
    nodes: Vec<f64>,
    bary: Vec<f64>,
    vals: [Vec<f64>; 3],
}

impl GeomPoly {
    /// Interpolate `map` at the geometry nodes.
    pub fn interpolating(degree: usize, map: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let n = degree + 1;
        let (nodes, _) = lgl_nodes(n.max(2));
        let nodes = if degree == 0 { vec![0.0] } else { nodes };
        let bary = barycentric_weights(&nodes);
        let mut vals = [vec![0.0; n * n * n], vec![0.0; n * n * n], vec![0.0; n * n * n]];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let x = map([nodes[i], nodes[j], nodes[k]]);
                    for m in 0..3 {
                        vals[m][(i * n + j) * n + k] = x[m];
                    }
                }
            }
        }
        Self { degree, nodes, bary, vals }
    }

    /// Physical position at reference point `xi`.
    pub fn eval(&self, xi: [f64; 3]) -> [f64; 3] {
        let n = self.degree + 1;
        let l1 = lagrange_at(&self.nodes, &self.bary, xi[0]);
        let l2 = lagrange_at(&self.nodes, &self.bary, xi[1]);
        let l3 = lagrange_at(&self.nodes, &self.bary, xi[2]);
        let mut out = [0.0; 3];
        for i in 0..n {
            for j in 0..n {
                let lij = l1[i] * l2[j];
                if lij == 0.0 {
                    continue;
                }
                for k in 0..n {
                    let w = lij * l3[k];
                    let idx = (i * n + j) * n + k;
                    for m in 0..3 {
                        out[m] += w * self.vals[m][idx];
                    }
                }
            }
        }
        out
    }

    /// Jacobian `dx_m / dxi_d` at reference point `xi`.
    pub fn jacobian(&self, xi: [f64; 3]) -> [[f64; 3]; 3] {
        let n = self.degree + 1;
        let l = [
            lagrange_at(&self.nodes, &self.bary, xi[0]),
            lagrange_at(&self.nodes, &self.bary, xi[1]),
            lagrange_at(&self.nodes, &self.bary, xi[2]),
        ];
        let dl = [
            lagrange_deriv_at(&self.nodes, &self.bary, xi[0]),
            lagrange_deriv_at(&self.nodes, &self.bary, xi[1]),
            lagrange_deriv_at(&self.nodes, &self.bary, xi[2]),
        ];
        let mut jac = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let idx = (i * n + j) * n + k;
                    let w = [
                        dl[0][i] * l[1][j] * l[2][k],
                        l[0][i] * dl[1][j] * l[2][k],
                        l[0][i] * l[1][j] * dl[2][k],
                    ];
                    for m in 0..3 {
                        let v = self.vals[m][idx];
                        for d in 0..3 {
                            jac[m][d] += w[d] * v;
                        }
                    }
                }
            }
        }
        jac
    }
}

/// One solution element (octree leaf).
#[derive(Debug, Clone)]
pub struct Element {
    /// Flat root-cell index.
    pub root: usize,
    /// Octree key within the root cell.
    pub key: LeafKey,
    /// Solution polynomial degree.
    pub degree: usize,
}

impl Element {
    /// Extent box `[lo, hi]` in the root cell's reference coordinates.
    pub fn extent(&self) -> ([f64; 3], [f64; 3]) {
        let (level, ijk) = self.key;
        let w = 2.0 / (1u32 << level) as f64;
        let lo = [
            -1.0 + w * ijk[0] as f64,
            -1.0 + w * ijk[1] as f64,
            -1.0 + w * ijk[2] as f64,
        ];
        (lo, [lo[0] + w, lo[1] + w, lo[2] + w])
    }

    /// Reference-coordinate widths `Delta_d = hi_d - lo_d` (all equal here).
    pub fn deltas(&self) -> [f64; 3] {
        let w = 2.0 / (1u32 << self.key.0) as f64;
        [w, w, w]
    }

    /// Map element-local `xi in [-1,1]^3` to root reference coordinates.
    pub fn to_root(&self, xi: [f64; 3]) -> [f64; 3] {
        let (lo, hi) = self.extent();
        [
            lo[0] + 0.5 * (xi[0] + 1.0) * (hi[0] - lo[0]),
            lo[1] + 0.5 * (xi[1] + 1.0) * (hi[1] - lo[1]),
            lo[2] + 0.5 * (xi[2] + 1.0) * (hi[2] - lo[2]),
        ]
    }
}

/// One side of one element face. `side = 0` is the `xi_dir = -1` face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceRef {
    pub elem: usize,
    pub dir: usize,
    pub side: usize,
}

impl FaceRef {
    /// Outward-normal sign of this face in its element's reference frame.
    pub fn sign(&self) -> f64 {
        if self.side == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// The two tangential directions, ascending.
    pub fn tangents(&self) -> (usize, usize) {
        match self.dir {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }
}

/// A matched interface. `lo` is the designated mortar-receiving ("coarse")
/// side; `hi` holds one face (conforming, possibly degree-mismatched) or four
/// (hanging). `segments[c][t]` is the sub-interval of `lo`'s face parameter
/// covered by child `c` in tangential direction `t` (ascending order).
#[derive(Debug, Clone)]
pub struct Interface {
    pub lo: FaceRef,
    pub hi: Vec<FaceRef>,
    pub segments: Vec<[(f64, f64); 2]>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain_lo: [f64; 3],
    pub domain_hi: [f64; 3],
    pub cells: [usize; 3],
    pub periodic: [bool; 3],
    /// Geometry polynomial degree shared by all root cells.
    pub geometry_degree: usize,
    pub roots: Vec<GeomPoly>,
    pub elements: Vec<Element>,
    pub interfaces: Vec<Interface>,
    pub boundaries: Vec<FaceRef>,
}

impl Mesh {
    /// Unperturbed Cartesian lattice; every root cell is one element of the
    /// given degree, with trilinear (here: affine) geometry.
    pub fn cartesian(
        cells: [usize; 3],
        domain_lo: [f64; 3],
        domain_hi: [f64; 3],
        periodic: [bool; 3],
        degree: usize,
    ) -> Result<Self> {
        for d in 0..3 {
            if cells[d] == 0 || (periodic[d] && cells[d] < 2) {
                return Err(Error::InvalidArgument(format!(
                    "need >= 1 cell (>= 2 if periodic) per direction, got {} in dir {d}",
                    cells[d]
                )));
            }
            if domain_hi[d] <= domain_lo[d] {
                return Err(Error::InvalidArgument("domain_hi must exceed domain_lo".into()));
            }
        }
        let mut mesh = Self {
            domain_lo,
            domain_hi,
            cells,
            periodic,
            geometry_degree: 1,
            roots: Vec::new(),
            elements: Vec::new(),
            interfaces: Vec::new(),
            boundaries: Vec::new(),
        };
        mesh.rebuild_geometry(1, false);
        for r in 0..cells[0] * cells[1] * cells[2] {
            mesh.elements.push(Element { root: r, key: (0, [0, 0, 0]), degree });
        }
        mesh.build_interfaces();
        Ok(mesh)
    }

    fn root_coords(&self, flat: usize) -> [usize; 3] {
        let c = self.cells;
        [flat / (c[1] * c[2]), (flat / c[2]) % c[1], flat % c[2]]
    }

    fn root_flat(&self, rc: [usize; 3]) -> usize {
        (rc[0] * self.cells[1] + rc[1]) * self.cells[2] + rc[2]
    }

    /// Affine map of a root cell: reference cube to its lattice box.
    fn root_box(&self, flat: usize) -> ([f64; 3], [f64; 3]) {
        let rc = self.root_coords(flat);
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for d in 0..3 {
            let h = (self.domain_hi[d] - self.domain_lo[d]) / self.cells[d] as f64;
            lo[d] = self.domain_lo[d] + h * rc[d] as f64;
            hi[d] = lo[d] + h;
        }
        (lo, hi)
    }

    /// (Re)build all root geometry polynomials at degree `p_geom`, with or
    /// without the smooth interface perturbation field.
    fn rebuild_geometry(&mut self, p_geom: usize, perturbed: bool) {
        let lens = [
            self.domain_hi[0] - self.domain_lo[0],
            self.domain_hi[1] - self.domain_lo[1],
            self.domain_hi[2] - self.domain_lo[2],
        ];
        let mid = [
            0.5 * (self.domain_lo[0] + self.domain_hi[0]),
            0.5 * (self.domain_lo[1] + self.domain_hi[1]),
            0.5 * (self.domain_lo[2] + self.domain_hi[2]),
        ];
        self.geometry_degree = p_geom;
        self.roots = (0..self.cells[0] * self.cells[1] * self.cells[2])
            .map(|r| {
                let (lo, hi) = self.root_box(r);
                GeomPoly::interpolating(p_geom, |xi| {
                    let mut x = [0.0; 3];
                    for d in 0..3 {
                        x[d] = lo[d] + 0.5 * (xi[d] + 1.0) * (hi[d] - lo[d]);
                    }
                    if perturbed {
                        perturb_point(x, mid, lens)
                    } else {
                        x
                    }
                })
            })
            .collect();
    }

    /// Apply the standard smooth interface perturbation, re-interpolating the
    /// geometry at degree `p_geom`. Periodicity of the displacement field in
    /// the periodic directions keeps wrap-around faces watertight.
    pub fn perturb(&mut self, p_geom: usize) -> Result<()> {
        if p_geom < 1 {
            return Err(Error::InvalidArgument("geometry degree must be >= 1".into()));
        }
        self.rebuild_geometry(p_geom, true);
        Ok(())
    }

    // ---- refinement -----------------------------------------------------

    fn leaf_set(&self) -> BTreeSet<(usize, LeafKey)> {
        self.elements.iter().map(|e| (e.root, e.key)).collect()
    }

    /// Global cell coordinate of a leaf at its own level (lattice * 2^level).
    fn global_cell(&self, root: usize, key: LeafKey) -> [i64; 3] {
        let rc = self.root_coords(root);
        let (level, ijk) = key;
        [
            ((rc[0] as i64) << level) + ijk[0] as i64,
            ((rc[1] as i64) << level) + ijk[1] as i64,
            ((rc[2] as i64) << level) + ijk[2] as i64,
        ]
    }

    /// Map a global cell coordinate at `level` back to `(root, key)`, with
    /// periodic wrap. Returns `None` outside a non-periodic boundary.
    fn from_global(&self, level: u8, mut g: [i64; 3]) -> Option<(usize, LeafKey)> {
        let mut rc = [0usize; 3];
        let mut ijk = [0u32; 3];
        for d in 0..3 {
            let span = (self.cells[d] as i64) << level;
            if self.periodic[d] {
                g[d] = g[d].rem_euclid(span);
            } else if g[d] < 0 || g[d] >= span {
                return None;
            }
            rc[d] = (g[d] >> level) as usize;
            ijk[d] = (g[d] & ((1i64 << level) - 1)) as u32;
        }
        Some((self.root_flat(rc), (level, ijk)))
    }

    /// Split one leaf into its eight children (degree inherited).
    fn split(elements: &mut Vec<Element>, idx: usize) {
        let e = elements[idx].clone();
        let (level, ijk) = e.key;
        elements.swap_remove(idx);
        for di in 0..2u32 {
            for dj in 0..2u32 {
                for dk in 0..2u32 {
                    elements.push(Element {
                        root: e.root,
                        key: (level + 1, [2 * ijk[0] + di, 2 * ijk[1] + dj, 2 * ijk[2] + dk]),
                        degree: e.degree,
                    });
                }
            }
        }
    }

    fn sort_elements(&mut self) {
        self.elements.sort_by_key(|e| (e.root, e.key));
    }

    /// Enforce 2:1 balance by splitting any leaf more than one level coarser
    /// than a face neighbor.
    fn balance(&mut self) {
        loop {
            let leaves = self.leaf_set();
            let mut must_split: BTreeSet<(usize, LeafKey)> = BTreeSet::new();
            for e in &self.elements {
                let (level, _) = e.key;
                if level < 2 {
                    continue;
                }
                let g = self.global_cell(e.root, e.key);
                for dir in 0..3 {
                    for sgn in [-1i64, 1] {
                        let mut ng = g;
                        ng[dir] += sgn;
                        let Some((nr, nk)) = self.from_global(level, ng) else {
                            continue;
                        };
                        // Walk up the ancestry to find the coarse neighbor leaf.
                        let mut lv = nk.0;
                        let mut ijk = nk.1;
                        loop {
                            if leaves.contains(&(nr, (lv, ijk))) {
                                if lv + 1 < level {
                                    must_split.insert((nr, (lv, ijk)));
                                }
                                break;
                            }
                            if lv == 0 {
                                break; // neighbor side is finer; nothing to do
                            }
                            lv -= 1;
                            ijk = [ijk[0] / 2, ijk[1] / 2, ijk[2] / 2];
                        }
                    }
                }
            }
            if must_split.is_empty() {
                break;
            }
            for target in must_split {
                if let Some(idx) = self
                    .elements
                    .iter()
                    .position(|e| (e.root, e.key) == target)
                {
                    Self::split(&mut self.elements, idx);
                }
            }
        }
        self.sort_elements();
    }

    /// Randomly split a fraction of the leaves, `levels` passes, then
    /// rebalance and rebuild interfaces. Deterministic in `seed`.
    pub fn refine_random(&mut self, seed: u64, levels: usize, fraction: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..levels {
            self.sort_elements();
            let picks: Vec<usize> = (0..self.elements.len())
                .filter(|_| rng.gen::<f64>() < fraction)
                .collect();
            // Split from the back so stored indices stay valid.
            for &idx in picks.iter().rev() {
                Self::split(&mut self.elements, idx);
            }
            self.balance();
        }
        self.build_interfaces();
    }

    /// Split every leaf once (uniform nesting; preserves the h/p pattern).
    pub fn refine_all(&mut self) {
        for idx in (0..self.elements.len()).rev() {
            Self::split(&mut self.elements, idx);
        }
        self.sort_elements();
        self.build_interfaces();
    }

    /// Assign each element a degree drawn uniformly from `degrees`,
    /// in element order, deterministic in `seed`.
    pub fn assign_random_degrees(&mut self, seed: u64, degrees: &[usize]) {
        assert!(!degrees.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sort_elements();
        for e in &mut self.elements {
            e.degree = degrees[rng.gen_range(0..degrees.len())];
        }
        self.build_interfaces();
    }

    // ---- interface extraction -------------------------------------------

    /// Rebuild `interfaces` and `boundaries` from the current leaves.
    pub fn build_interfaces(&mut self) {
        self.sort_elements();
        let leaves: BTreeMap<(usize, LeafKey), usize> = self
            .elements
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.root, e.key), i))
            .collect();
        let find_leaf = |root: usize, key: LeafKey| -> Option<(usize, LeafKey)> {
            let mut lv = key.0;
            let mut ijk = key.1;
            loop {
                if let Some(&idx) = leaves.get(&(root, (lv, ijk))) {
                    return Some((idx, (lv, ijk)));
                }
                if lv == 0 {
                    return None;
                }
                lv -= 1;
                ijk = [ijk[0] / 2, ijk[1] / 2, ijk[2] / 2];
            }
        };

        let mut interfaces = Vec::new();
        let mut boundaries = Vec::new();
        for (idx, e) in self.elements.iter().enumerate() {
            let (level, _) = e.key;
            let g = self.global_cell(e.root, e.key);
            for dir in 0..3 {
                for side in 0..2usize {
                    let me = FaceRef { elem: idx, dir, side };
                    let mut ng = g;
                    ng[dir] += if side == 1 { 1 } else { -1 };
                    let Some((nr, nk)) = self.from_global(level, ng) else {
                        boundaries.push(me);
                        continue;
                    };
                    if let Some((nidx, nkey)) = find_leaf(nr, nk) {
                        let nb = FaceRef { elem: nidx, dir, side: 1 - side };
                        if nkey.0 == level {
                            // Same-size neighbor: register once, from the max side.
                            if side == 1 {
                                let (lo, hi) = orient_conforming(self, me, nb);
                                interfaces.push(Interface {
                                    lo,
                                    hi: vec![hi],
                                    segments: vec![[(-1.0, 1.0), (-1.0, 1.0)]],
                                });
                            }
                        }
                        // Coarser neighbor: this is a fine side of a hanging
                        // face; the coarse side registers it.
                        continue;
                    }
                    // Finer neighbors: collect the four child faces (2:1
                    // balance guarantees exactly one level down).
                    let (ta, tb) = me.tangents();
                    let clevel = level + 1;
                    let mut hi = Vec::with_capacity(4);
                    let mut segments = Vec::with_capacity(4);
                    let base = [ng[0] * 2, ng[1] * 2, ng[2] * 2];
                    // The child layer adjacent to our face.
                    let off_dir = if side == 1 { 0 } else { 1 };
                    for qa in 0..2i64 {
                        for qb in 0..2i64 {
                            let mut cg = base;
                            cg[dir] += off_dir;
                            cg[ta] += qa;
                            cg[tb] += qb;
                            let (cr, ck) = self
                                .from_global(clevel, cg)
                                .expect("child cell must exist inside the domain");
                            let cidx = *leaves
                                .get(&(cr, ck))
                                .expect("2:1 balance guarantees child leaves");
                            hi.push(FaceRef { elem: cidx, dir, side: 1 - side });
                            segments.push([
                                (-1.0 + qa as f64, qa as f64),
                                (-1.0 + qb as f64, qb as f64),
                            ]);
                        }
                    }
                    interfaces.push(Interface { lo: me, hi, segments });
                }
            }
        }
        self.interfaces = interfaces;
        self.boundaries = boundaries;
    }

    /// Total element count.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Smallest solution degree on the mesh.
    pub fn min_degree(&self) -> usize {
        self.elements.iter().map(|e| e.degree).min().unwrap_or(1)
    }
}

/// For a same-size interface, pick which side receives the mortar data:
/// the higher-degree side hosts the shared quadrature ("hi"); ties keep the
/// registering (max) side as `lo`.
fn orient_conforming(mesh: &Mesh, a: FaceRef, b: FaceRef) -> (FaceRef, FaceRef) {
    let (pa, pb) = (mesh.elements[a.elem].degree, mesh.elements[b.elem].degree);
    if pb >= pa {
        (a, b)
    } else {
        (b, a)
    }
}

/// The smooth displacement field applied to interface geometry. `mid` and
/// `lens` are the domain midpoint and side lengths; the field is periodic
/// over the domain in every direction.
pub fn perturb_point(x: [f64; 3], mid: [f64; 3], lens: [f64; 3]) -> [f64; 3] {
    let pi = std::f64::consts::PI;
    let a = pi / lens[0] * (x[0] - mid[0]);
    let b = pi / lens[1] * (x[1] - mid[1]);
    let c = pi / lens[2] * (x[2] - mid[2]);
    [
        x[0] + lens[0] / 15.0 * a.cos() * (3.0 * b).cos() * (4.0 * c).sin(),
        x[1] + lens[1] / 15.0 * (4.0 * a).sin() * b.cos() * (3.0 * c).cos(),
        x[2] + lens[2] / 15.0 * (3.0 * a).cos() * (4.0 * b).sin() * c.cos(),
    ]
}
