//! Discrete geometry: curvilinear metrics, mortar face data, and the
//! constrained metric optimization that enforces the discrete geometric
//! conservation law (GCL) on h/p-nonconforming meshes.
//!
//! Per element we store the reference-frame Jacobian `J` and the metric rows
//! `lam[l][m] ~ J * d(xi_l)/d(x_m)` at the volume nodes, both in the *root
//! cell's* reference coordinates; the element's extent widths `Delta_l`
//! carry the child-to-parent scalings, so the hatted operators are
//! `Q_1 = (D2 D3 / 4) Q (x) P (x) P` and cyclic.
//!
//! Face data is *specified once per interface* at the mortar-side nodes:
//! the physical surface quadrature `phi_m = wqa * n_m` (area-weighted unit
//! normal). Both sides consume the same values — the fine/high side directly,
//! the coarse side through the transposed tensor interpolation — which is
//! exactly what makes free-stream preservation and entropy telescoping
//! compatible at hanging faces.
//!
//! With analytic metrics the per-element GCL `sum_l Qhat_l^T lam^{l,m} 1 = c_m`
//! generally fails on curved nonconforming meshes. `MetricMode::Optimized`
//! solves the minimum-norm correction
//! `min |a - a_target|^2  s.t.  M_opt a = c_m` per element via a truncated
//! SVD pseudo-inverse; solvability (`1^T c_m = 0`) holds because the face
//! metric polynomials sit inside the exactness range of the weakest face
//! quadrature whenever the geometry degree does not exceed the smallest
//! solution degree (enforced at build time).

use crate::error::{Error, Result};
use crate::interp::{apply_face_tensor_t, InterpPair1d};
use crate::mesh::{FaceRef, Mesh};
use crate::sbp::{Operator1d, OperatorSet};
use nalgebra::DMatrix;
use std::sync::Arc;

/// Relative singular-value cutoff for the GCL pseudo-inverse.
const SVD_TRUNCATION: f64 = 1e-12;
/// Consistency tolerance for the constraint right-hand side, `|1^T c_m|`
/// relative to the surface-quadrature scale.
const GCL_CONSISTENCY_TOL: f64 = 1e-11;

/// Whether to keep analytic metrics or apply the GCL-constrained correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricMode {
    Analytic,
    Optimized,
}

/// Volume node index, third direction fastest.
#[inline]
pub fn vol_index(n: usize, i: usize, j: usize, k: usize) -> usize {
    (i * n + j) * n + k
}

/// Volume index of face node `(ia, ib)` on face `(dir, side)`; tangential
/// directions ascending, second one fastest.
#[inline]
pub fn face_vol_index(n: usize, dir: usize, side: usize, ia: usize, ib: usize) -> usize {
    let edge = side * (n - 1);
    match dir {
        0 => vol_index(n, edge, ia, ib),
        1 => vol_index(n, ia, edge, ib),
        _ => vol_index(n, ia, ib, edge),
    }
}

/// Geometric data of one element at its volume nodes.
#[derive(Debug, Clone)]
pub struct ElementGeom {
    pub op: Arc<Operator1d>,
    /// Extent widths in root reference coordinates.
    pub deltas: [f64; 3],
    /// Reference Jacobian determinant at volume nodes (root frame).
    pub jac: Vec<f64>,
    /// Metric rows `lam[l][m]` at volume nodes (root frame cofactors).
    pub lam: [[Vec<f64>; 3]; 3],
    /// Physical node positions.
    pub x: Vec<[f64; 3]>,
}

impl ElementGeom {
    pub fn n(&self) -> usize {
        self.op.n
    }

    pub fn num_nodes(&self) -> usize {
        self.jac.len()
    }

    /// Hatted volume mass `M_ii = (D1 D2 D3 / 8) w_i w_j w_k`.
    pub fn mass(&self, i: usize, j: usize, k: usize) -> f64 {
        let w = &self.op.weights;
        0.125 * self.deltas[0] * self.deltas[1] * self.deltas[2] * w[i] * w[j] * w[k]
    }

    /// Physical quadrature weight `M_ii * J_i` at flat node index.
    pub fn pj(&self, flat: usize) -> f64 {
        let n = self.n();
        let (i, jk) = (flat / (n * n), flat % (n * n));
        self.mass(i, jk / n, jk % n) * self.jac[flat]
    }

    /// Transverse coefficient of the hatted `Q_l`: `c_l = D_a D_b / 4`.
    pub fn q_coeff(&self, l: usize) -> f64 {
        let (a, b) = match l {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        0.25 * self.deltas[a] * self.deltas[b]
    }
}

/// Shared mortar data of one face patch (an interface child or a boundary
/// face), at the mortar-side face nodes.
#[derive(Debug, Clone)]
pub struct FaceData {
    /// Area quadrature weight: face weight times physical metric magnitude.
    pub wqa: Vec<f64>,
    /// Unit normal in the `+xi_dir` sense (outward for a `side = 1` face).
    pub nrm: Vec<[f64; 3]>,
    /// Physical positions.
    pub x: Vec<[f64; 3]>,
    /// Physical Jacobian (volume scale) of the owning element at the nodes.
    pub jphys: Vec<f64>,
    /// Magnitude of the physical surface metric vector (area density).
    pub nmag: Vec<f64>,
}

impl FaceData {
    /// `phi_m` at node `i`: the signed physical surface quadrature row.
    #[inline]
    pub fn phi(&self, i: usize, m: usize) -> f64 {
        self.wqa[i] * self.nrm[i][m]
    }
}

/// Coupling operators and mortar data for one interface child.
#[derive(Debug, Clone)]
pub struct ChildCoupling {
    /// Coarse-to-mortar 1D pairs for the two tangential directions.
    pub pair_a: InterpPair1d,
    pub pair_b: InterpPair1d,
    pub data: FaceData,
}

#[derive(Debug, Clone)]
pub struct MeshGeometry {
    pub mode: MetricMode,
    pub elems: Vec<ElementGeom>,
    /// Per interface, per child.
    pub couplings: Vec<Vec<ChildCoupling>>,
    /// Per boundary face, aligned with `mesh.boundaries`.
    pub bfaces: Vec<FaceData>,
}

/// 3x3 cofactor row `l`: cross product of the other two Jacobian columns.
fn metric_row(jac: &[[f64; 3]; 3], l: usize) -> [f64; 3] {
    let (a, b) = match l {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    let u = [jac[0][a], jac[1][a], jac[2][a]];
    let v = [jac[0][b], jac[1][b], jac[2][b]];
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

fn det3(j: &[[f64; 3]; 3]) -> f64 {
    j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
        - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
}

impl MeshGeometry {
    pub fn build(mesh: &Mesh, ops: &mut OperatorSet, mode: MetricMode) -> Result<Self> {
        if mesh.geometry_degree > mesh.min_degree() {
            return Err(Error::InvalidArgument(format!(
                "geometry degree {} exceeds smallest solution degree {}; the face \
                 quadratures could not integrate the surface metrics exactly",
                mesh.geometry_degree,
                mesh.min_degree()
            )));
        }

        // Volume geometry.
        let mut elems = Vec::with_capacity(mesh.len());
        for (eid, e) in mesh.elements.iter().enumerate() {
            let op = ops.get(e.degree);
            let n = op.n;
            let nn = n * n * n;
            let root = &mesh.roots[e.root];
            let mut jac = vec![0.0; nn];
            let mut lam: [[Vec<f64>; 3]; 3] = Default::default();
            for l in 0..3 {
                for m in 0..3 {
                    lam[l][m] = vec![0.0; nn];
                }
            }
            let mut x = vec![[0.0; 3]; nn];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let xi = [op.nodes[i], op.nodes[j], op.nodes[k]];
                        let xhat = e.to_root(xi);
                        let jm = root.jacobian(xhat);
                        let flat = vol_index(n, i, j, k);
                        let det = det3(&jm);
                        if det <= 0.0 {
                            return Err(Error::GeometryInvalid {
                                element: eid,
                                node: flat,
                                jacobian: det,
                            });
                        }
                        jac[flat] = det;
                        for l in 0..3 {
                            let row = metric_row(&jm, l);
                            for m in 0..3 {
                                lam[l][m][flat] = row[m];
                            }
                        }
                        x[flat] = root.eval(xhat);
                    }
                }
            }
            elems.push(ElementGeom {
                op,
                deltas: mesh.elements[eid].deltas(),
                jac,
                lam,
                x,
            });
        }

        // Mortar data and coupling operators.
        let mut couplings = Vec::with_capacity(mesh.interfaces.len());
        for iface in &mesh.interfaces {
            let p_lo = mesh.elements[iface.lo.elem].degree;
            let mut children = Vec::with_capacity(iface.hi.len());
            for (f, seg) in iface.hi.iter().zip(&iface.segments) {
                let p_hi = mesh.elements[f.elem].degree;
                children.push(ChildCoupling {
                    pair_a: InterpPair1d::new(p_lo, p_hi, seg[0]),
                    pair_b: InterpPair1d::new(p_lo, p_hi, seg[1]),
                    data: face_data(mesh, ops, *f),
                });
            }
            couplings.push(children);
        }
        let bfaces: Vec<FaceData> = mesh
            .boundaries
            .iter()
            .map(|f| face_data(mesh, ops, *f))
            .collect();

        let mut geom = Self {
            mode,
            elems,
            couplings,
            bfaces,
        };
        if mode == MetricMode::Optimized {
            geom.optimize_metrics(mesh)?;
        }
        Ok(geom)
    }

    /// Constraint right-hand side `c_m` (all three components) for each
    /// element, assembled from the shared mortar data.
    pub(crate) fn constraint_rhs(&self, mesh: &Mesh) -> Vec<[Vec<f64>; 3]> {
        let mut c: Vec<[Vec<f64>; 3]> = self
            .elems
            .iter()
            .map(|e| {
                let nn = e.num_nodes();
                [vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]]
            })
            .collect();
        let scatter = |face: FaceRef, vals: &[Vec<f64>; 3], cm: &mut [Vec<f64>; 3]| {
            let n = self.elems[face.elem].n();
            let s = face.sign();
            for ia in 0..n {
                for ib in 0..n {
                    let v = face_vol_index(n, face.dir, face.side, ia, ib);
                    for m in 0..3 {
                        cm[m][v] += s * vals[m][ia * n + ib];
                    }
                }
            }
        };
        for (iface, children) in mesh.interfaces.iter().zip(&self.couplings) {
            // Coarse side: transposed tensor interpolation of the mortar phi.
            let n_lo = self.elems[iface.lo.elem].n();
            let mut lo_vals: [Vec<f64>; 3] = [
                vec![0.0; n_lo * n_lo],
                vec![0.0; n_lo * n_lo],
                vec![0.0; n_lo * n_lo],
            ];
            for (ci, ch) in children.iter().enumerate() {
                let n_hi = ch.data.wqa.len();
                let hi_vals: [Vec<f64>; 3] = [
                    (0..n_hi).map(|i| ch.data.phi(i, 0)).collect(),
                    (0..n_hi).map(|i| ch.data.phi(i, 1)).collect(),
                    (0..n_hi).map(|i| ch.data.phi(i, 2)).collect(),
                ];
                for m in 0..3 {
                    let back =
                        apply_face_tensor_t(&ch.pair_a.i_lr, &ch.pair_b.i_lr, &hi_vals[m], 1);
                    for (i, v) in back.iter().enumerate() {
                        lo_vals[m][i] += v;
                    }
                }
                // Fine side consumes its own mortar values directly.
                let hi_face = iface.hi[ci];
                let cm = &mut c[hi_face.elem];
                scatter(hi_face, &hi_vals, cm);
            }
            let cm = &mut c[iface.lo.elem];
            scatter(iface.lo, &lo_vals, cm);
        }
        for (face, data) in mesh.boundaries.iter().zip(&self.bfaces) {
            let n_f = data.wqa.len();
            let vals: [Vec<f64>; 3] = [
                (0..n_f).map(|i| data.phi(i, 0)).collect(),
                (0..n_f).map(|i| data.phi(i, 1)).collect(),
                (0..n_f).map(|i| data.phi(i, 2)).collect(),
            ];
            scatter(*face, &vals, &mut c[face.elem]);
        }
        c
    }

    /// Max-norm residual of the per-element GCL for element `eid` given its
    /// constraint right-hand side.
    pub fn gcl_residual(&self, eid: usize, cm: &[Vec<f64>; 3]) -> f64 {
        let e = &self.elems[eid];
        let mut worst: f64 = 0.0;
        for m in 0..3 {
            let mut lhs = vec![0.0; e.num_nodes()];
            for l in 0..3 {
                accumulate_qt_lam(e, l, &e.lam[l][m], &mut lhs);
            }
            for (i, &c) in cm[m].iter().enumerate() {
                worst = worst.max((lhs[i] - c).abs());
            }
        }
        worst
    }

    /// Replace the analytic metrics by the minimum-norm GCL-feasible ones.
    fn optimize_metrics(&mut self, mesh: &Mesh) -> Result<()> {
        let c = self.constraint_rhs(mesh);
        for eid in 0..self.elems.len() {
            let nn = self.elems[eid].num_nodes();
            // Surface quadrature scale for the consistency check.
            let scale: f64 = c[eid]
                .iter()
                .map(|cm| cm.iter().map(|v| v.abs()).sum::<f64>())
                .fold(1.0, f64::max);
            let mopt = build_mopt(&self.elems[eid]);
            let svd = mopt.clone().svd(true, true);
            let smax = svd.singular_values.max();
            for m in 0..3 {
                let ones: f64 = c[eid][m].iter().sum();
                if ones.abs() > GCL_CONSISTENCY_TOL * scale {
                    return Err(Error::MetricConstraint {
                        element: eid,
                        residual: ones.abs(),
                    });
                }
                let mut target = DMatrix::zeros(3 * nn, 1);
                for l in 0..3 {
                    for i in 0..nn {
                        target[(l * nn + i, 0)] = self.elems[eid].lam[l][m][i];
                    }
                }
                let cvec = DMatrix::from_fn(nn, 1, |i, _| c[eid][m][i]);
                // Minimum-norm correction through the truncated pseudo-inverse,
                // with one refinement pass to clean up rounding in the solve.
                let u = svd.u.as_ref().unwrap();
                let vt = svd.v_t.as_ref().unwrap();
                for _ in 0..2 {
                    let resid = &mopt * &target - &cvec;
                    let mut y = u.transpose() * &resid;
                    for (i, s) in svd.singular_values.iter().enumerate() {
                        y[(i, 0)] = if *s > SVD_TRUNCATION * smax {
                            y[(i, 0)] / s
                        } else {
                            0.0
                        };
                    }
                    let corr = vt.transpose() * y;
                    target -= corr;
                }
                for l in 0..3 {
                    for i in 0..nn {
                        self.elems[eid].lam[l][m][i] = target[(l * nn + i, 0)];
                    }
                }
            }
            let r = self.gcl_residual(eid, &c[eid]);
            if r > GCL_CONSISTENCY_TOL * scale.max(1.0) {
                return Err(Error::MetricConstraint {
                    element: eid,
                    residual: r,
                });
            }
        }
        Ok(())
    }

    /// Public GCL audit: max residual over all elements (uses current metrics).
    pub fn max_gcl_residual(&self, mesh: &Mesh) -> f64 {
        self.element_gcl_residuals(mesh)
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Per-element GCL residuals (uses current metrics).
    pub fn element_gcl_residuals(&self, mesh: &Mesh) -> Vec<f64> {
        let c = self.constraint_rhs(mesh);
        (0..self.elems.len())
            .map(|e| self.gcl_residual(e, &c[e]))
            .collect()
    }

    /// Singular values of the element constraint matrix, descending.
    pub fn constraint_singular_values(&self, eid: usize) -> Vec<f64> {
        let m = build_mopt(&self.elems[eid]);
        let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }
}

/// Accumulate `(Qhat_l)^T v` into `out` for one metric field `v`.
fn accumulate_qt_lam(e: &ElementGeom, l: usize, v: &[f64], out: &mut [f64]) {
    let n = e.n();
    let w = &e.op.weights;
    let q = &e.op.q;
    let cl = e.q_coeff(l);
    // Iterate 1D lines along direction l.
    for a in 0..n {
        for b in 0..n {
            let tw = cl * w[a] * w[b];
            for i in 0..n {
                for j in 0..n {
                    // (Q^T)_{ij} = Q_{ji} along the line.
                    let idx_i = line_index(n, l, a, b, i);
                    let idx_j = line_index(n, l, a, b, j);
                    out[idx_i] += tw * q[(j, i)] * v[idx_j];
                }
            }
        }
    }
}

/// Volume index of the `i`-th node of the line along `dir` at transverse
/// position `(a, b)` (transverse directions ascending).
#[inline]
pub fn line_index(n: usize, dir: usize, a: usize, b: usize, i: usize) -> usize {
    match dir {
        0 => vol_index(n, i, a, b),
        1 => vol_index(n, a, i, b),
        _ => vol_index(n, a, b, i),
    }
}

/// Dense `N x 3N` constraint matrix `[Q1^T Q2^T Q3^T]`.
fn build_mopt(e: &ElementGeom) -> DMatrix<f64> {
    let n = e.n();
    let nn = e.num_nodes();
    let mut m = DMatrix::zeros(nn, 3 * nn);
    let w = &e.op.weights;
    let q = &e.op.q;
    for l in 0..3 {
        let cl = e.q_coeff(l);
        for a in 0..n {
            for b in 0..n {
                let tw = cl * w[a] * w[b];
                for i in 0..n {
                    for j in 0..n {
                        let idx_i = line_index(n, l, a, b, i);
                        let idx_j = line_index(n, l, a, b, j);
                        m[(idx_i, l * nn + idx_j)] += tw * q[(j, i)];
                    }
                }
            }
        }
    }
    m
}

/// Evaluate the mortar face data (area quadrature, unit normals, positions)
/// at the face nodes of `face`, from its owning element's geometry.
fn face_data(mesh: &Mesh, ops: &mut OperatorSet, face: FaceRef) -> FaceData {
    let e = &mesh.elements[face.elem];
    let op = ops.get(e.degree);
    let n = op.n;
    let root = &mesh.roots[e.root];
    let d = e.deltas();
    let (ta, tb) = face.tangents();
    // (D1 D2 D3)/(4 D_dir): scale turning the root-frame cofactor row into
    // the physical surface metric vector per local face coordinates. It
    // coincides with the local face quadrature scale D_ta D_tb / 4.
    let quad_scale = 0.25 * d[ta] * d[tb];
    let vol_scale = 0.125 * d[0] * d[1] * d[2];
    let mut wqa = Vec::with_capacity(n * n);
    let mut nrm = Vec::with_capacity(n * n);
    let mut x = Vec::with_capacity(n * n);
    let mut jphys = Vec::with_capacity(n * n);
    let mut nmag = Vec::with_capacity(n * n);
    for ia in 0..n {
        for ib in 0..n {
            let mut xi = [0.0; 3];
            xi[face.dir] = if face.side == 1 { 1.0 } else { -1.0 };
            xi[ta] = op.nodes[ia];
            xi[tb] = op.nodes[ib];
            let xhat = e.to_root(xi);
            let jm = root.jacobian(xhat);
            let row = metric_row(&jm, face.dir);
            // Physical surface metric vector and its magnitude.
            let pv = [row[0] * quad_scale, row[1] * quad_scale, row[2] * quad_scale];
            let mag = (pv[0] * pv[0] + pv[1] * pv[1] + pv[2] * pv[2]).sqrt();
            assert!(mag > 0.0, "degenerate face metric");
            wqa.push(op.weights[ia] * op.weights[ib] * mag);
            nmag.push(mag);
            nrm.push([pv[0] / mag, pv[1] / mag, pv[2] / mag]);
            x.push(root.eval(xhat));
            jphys.push(vol_scale * det3(&jm));
        }
    }
    FaceData { wqa, nrm, x, jphys, nmag }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    fn ops() -> OperatorSet {
        OperatorSet::new()
    }

    #[test]
    fn cartesian_metrics_match_closed_form() {
        // On an unperturbed lattice the metrics are constant diagonals:
        // lam[l][l] = product of the other two half-widths of the root box,
        // J = product of all three.
        let mesh = Mesh::cartesian([2, 3, 4], [0.0; 3], [2.0, 3.0, 8.0], [true; 3], 2).unwrap();
        let g = MeshGeometry::build(&mesh, &mut ops(), MetricMode::Analytic).unwrap();
        let h = [0.5, 0.5, 1.0]; // half-widths of one root box
        for e in &g.elems {
            for flat in 0..e.num_nodes() {
                assert!((e.jac[flat] - h[0] * h[1] * h[2]).abs() < 1e-14);
                for l in 0..3 {
                    for m in 0..3 {
                        let expect = if l == m { h[0] * h[1] * h[2] / h[l] } else { 0.0 };
                        assert!((e.lam[l][m][flat] - expect).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn face_area_quadrature_sums_to_patch_area_on_cartesian_mesh() {
        let mesh = Mesh::cartesian([2, 2, 2], [0.0; 3], [2.0; 3], [true; 3], 3).unwrap();
        let g = MeshGeometry::build(&mesh, &mut ops(), MetricMode::Analytic).unwrap();
        for children in &g.couplings {
            for ch in children {
                let area: f64 = ch.data.wqa.iter().sum();
                assert!((area - 1.0).abs() < 1e-13, "face area {area}");
            }
        }
    }

    #[test]
    fn hanging_face_children_tile_the_coarse_face_area_when_curved() {
        // 3 cells per direction so the smooth perturbation is nonzero at the
        // geometry interpolation nodes (it vanishes on half-domain lattices).
        let mut mesh = Mesh::cartesian([3, 3, 3], [-5.0; 3], [5.0; 3], [true; 3], 3).unwrap();
        mesh.refine_random(9, 1, 0.4);
        mesh.perturb(2).unwrap();
        let g = MeshGeometry::build(&mesh, &mut ops(), MetricMode::Analytic).unwrap();
        // The physical flux of a constant field through the four child faces
        // must equal the flux through the coarse face (watertightness in the
        // metric sense): compare the interpolated-transpose assembly against
        // the coarse side's own quadrature of its analytic face metric.
        for (iface, children) in mesh.interfaces.iter().zip(&g.couplings) {
            if children.len() != 4 {
                continue;
            }
            let mut flux_children = [0.0; 3];
            for ch in children {
                for i in 0..ch.data.wqa.len() {
                    for m in 0..3 {
                        flux_children[m] += ch.data.phi(i, m);
                    }
                }
            }
            let lo_data = face_data(
                &mesh,
                &mut OperatorSet::new(),
                iface.lo,
            );
            let mut flux_lo = [0.0; 3];
            for i in 0..lo_data.wqa.len() {
                for m in 0..3 {
                    flux_lo[m] += lo_data.phi(i, m);
                }
            }
            for m in 0..3 {
                assert!(
                    (flux_children[m] - flux_lo[m]).abs() < 1e-11,
                    "metric flux mismatch {flux_children:?} vs {flux_lo:?}"
                );
            }
        }
    }

    #[test]
    fn conforming_face_mortar_matches_other_side() {
        // Equal-degree conforming interface: the shared mortar data must be
        // reproducible from the lo side's own geometry (watertight metrics).
        let mut mesh = Mesh::cartesian([3, 3, 3], [-5.0; 3], [5.0; 3], [true; 3], 3).unwrap();
        mesh.perturb(2).unwrap();
        let g = MeshGeometry::build(&mesh, &mut ops(), MetricMode::Analytic).unwrap();
        for (iface, children) in mesh.interfaces.iter().zip(&g.couplings) {
            let ch = &children[0];
            let lo = face_data(&mesh, &mut OperatorSet::new(), iface.lo);
            let n = lo.wqa.len();
            for i in 0..n {
                for m in 0..3 {
                    assert!(
                        (ch.data.phi(i, m) - lo.phi(i, m)).abs() < 1e-12,
                        "phi mismatch at node {i}, m = {m}"
                    );
                }
            }
        }
    }

    #[test]
    fn cartesian_mesh_satisfies_gcl_without_optimization() {
        let mut mesh = Mesh::cartesian([2, 2, 2], [0.0; 3], [2.0; 3], [true; 3], 2).unwrap();
        mesh.refine_random(4, 1, 0.3);
        let g = MeshGeometry::build(&mesh, &mut ops(), MetricMode::Analytic).unwrap();
        assert!(g.max_gcl_residual(&mesh) < 1e-13);
    }

    #[test]
    fn curved_nonconforming_mesh_needs_and_gets_optimization() {
        let mut mesh = Mesh::cartesian([3, 3, 3], [-5.0; 3], [5.0; 3], [true; 3], 3).unwrap();
        mesh.refine_random(4, 1, 0.3);
        mesh.assign_random_degrees(6, &[2, 3]);
        mesh.perturb(2).unwrap();
        let raw = MeshGeometry::build(&mesh, &mut ops(), MetricMode::Analytic).unwrap();
        let r_raw = raw.max_gcl_residual(&mesh);
        assert!(r_raw > 1e-6, "analytic metrics unexpectedly satisfy GCL: {r_raw}");
        let opt = MeshGeometry::build(&mesh, &mut ops(), MetricMode::Optimized).unwrap();
        let r_opt = opt.max_gcl_residual(&mesh);
        assert!(r_opt < 1e-11, "optimized GCL residual {r_opt}");
    }

    #[test]
    fn metric_correction_is_consistent_in_degree() {
        // The optimization perturbs the analytic metrics by a quantity that
        // shrinks rapidly with resolution (it is bounded by the quadrature
        // and interpolation defects of the geometry).
        let correction = |deg: usize| -> f64 {
            let mut mesh =
                Mesh::cartesian([3, 3, 3], [-5.0; 3], [5.0; 3], [true; 3], deg).unwrap();
            mesh.perturb(2).unwrap();
            let raw = MeshGeometry::build(&mesh, &mut ops(), MetricMode::Analytic).unwrap();
            let opt = MeshGeometry::build(&mesh, &mut ops(), MetricMode::Optimized).unwrap();
            let mut diff: f64 = 0.0;
            for (a, b) in raw.elems.iter().zip(&opt.elems) {
                for l in 0..3 {
                    for m in 0..3 {
                        for i in 0..a.num_nodes() {
                            diff = diff.max((a.lam[l][m][i] - b.lam[l][m][i]).abs());
                        }
                    }
                }
            }
            diff
        };
        let c2 = correction(2);
        let c5 = correction(5);
        assert!(c5 < 0.05 * c2, "correction does not shrink with degree: {c2} -> {c5}");
    }
}
