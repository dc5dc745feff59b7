//! Compressible-flow thermodynamics, the entropy pair, entropy-conservative
//! two-point fluxes, entropy-scaled interface dissipation, and viscous flux
//! blocks. A scalar Burgers analogue used for cross-checking the split-form
//! machinery lives at the bottom.
//!
//! Conventions: conserved state `q = (rho, rho u, rho v, rho w, E)`;
//! nondimensional gas constant `r` (default 1); entropy function
//! `S = -rho s` with `s = cv ln T - r ln rho`, entropy variables
//! `w = dS/dq`, and entropy flux potential `psi_m = r rho u_m`.

use nalgebra::{Matrix5, Vector5};

pub type State = [f64; 5];

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Gas {
    pub gamma: f64,
    /// Gas constant in the chosen nondimensionalization.
    pub r: f64,
}

impl Default for Gas {
    fn default() -> Self {
        Self { gamma: 1.4, r: 1.0 }
    }
}

/// Primitive decomposition of a conserved state.
#[derive(Debug, Clone, Copy)]
pub struct Prim {
    pub rho: f64,
    pub u: [f64; 3],
    pub p: f64,
    pub t: f64,
}

impl Gas {
    pub fn cv(&self) -> f64 {
        self.r / (self.gamma - 1.0)
    }

    pub fn cp(&self) -> f64 {
        self.gamma * self.cv()
    }

    pub fn prim(&self, q: &State) -> Prim {
        let rho = q[0];
        let inv = 1.0 / rho;
        let u = [q[1] * inv, q[2] * inv, q[3] * inv];
        let ke = 0.5 * rho * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
        let p = (self.gamma - 1.0) * (q[4] - ke);
        Prim { rho, u, p, t: p / (self.r * rho) }
    }

    pub fn admissible(&self, q: &State) -> bool {
        if !q.iter().all(|v| v.is_finite()) || q[0] <= 0.0 {
            return false;
        }
        self.prim(q).p > 0.0
    }

    pub fn cons(&self, pr: &Prim) -> State {
        let ke = 0.5 * pr.rho * (pr.u[0] * pr.u[0] + pr.u[1] * pr.u[1] + pr.u[2] * pr.u[2]);
        [
            pr.rho,
            pr.rho * pr.u[0],
            pr.rho * pr.u[1],
            pr.rho * pr.u[2],
            pr.p / (self.gamma - 1.0) + ke,
        ]
    }

    pub fn sound_speed(&self, pr: &Prim) -> f64 {
        (self.gamma * pr.p / pr.rho).sqrt()
    }

    /// `|u . n| + c` for a unit vector `n`.
    pub fn max_speed(&self, q: &State, n: &[f64; 3]) -> f64 {
        let pr = self.prim(q);
        (pr.u[0] * n[0] + pr.u[1] * n[1] + pr.u[2] * n[2]).abs() + self.sound_speed(&pr)
    }

    /// Analytic flux in coordinate direction `m`.
    pub fn flux(&self, q: &State, m: usize) -> State {
        let pr = self.prim(q);
        let un = pr.u[m];
        let mut f = [q[0] * un, q[1] * un, q[2] * un, q[3] * un, (q[4] + pr.p) * un];
        f[1 + m] += pr.p;
        f
    }

    /// Specific thermodynamic entropy `s = cv ln T - r ln rho`.
    pub fn spec_entropy(&self, pr: &Prim) -> f64 {
        self.cv() * pr.t.ln() - self.r * pr.rho.ln()
    }

    /// Mathematical entropy `S = -rho s`.
    pub fn entropy(&self, q: &State) -> f64 {
        let pr = self.prim(q);
        -pr.rho * self.spec_entropy(&pr)
    }

    /// Entropy variables `w = dS/dq`.
    pub fn entropy_vars(&self, q: &State) -> State {
        let pr = self.prim(q);
        let s = self.spec_entropy(&pr);
        let ke2t = 0.5
            * (pr.u[0] * pr.u[0] + pr.u[1] * pr.u[1] + pr.u[2] * pr.u[2])
            / pr.t;
        [
            self.cp() - s - ke2t,
            pr.u[0] / pr.t,
            pr.u[1] / pr.t,
            pr.u[2] / pr.t,
            -1.0 / pr.t,
        ]
    }

    /// Inverse map: conserved state from entropy variables.
    pub fn cons_from_entropy(&self, w: &State) -> State {
        let t = -1.0 / w[4];
        let u = [w[1] * t, w[2] * t, w[3] * t];
        let ke2t = 0.5 * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]) / t;
        let s = self.cp() - ke2t - w[0];
        let lnrho = (self.cv() * t.ln() - s) / self.r;
        let rho = lnrho.exp();
        self.cons(&Prim { rho, u, p: rho * self.r * t, t })
    }

    /// Entropy flux potential `psi_m = r rho u_m`.
    pub fn psi(&self, q: &State, m: usize) -> f64 {
        self.r * q[1 + m]
    }

    /// Entropy flux `F_m = -rho s u_m`.
    pub fn entropy_flux(&self, q: &State, m: usize) -> f64 {
        let pr = self.prim(q);
        -pr.rho * self.spec_entropy(&pr) * pr.u[m]
    }

    /// Precompute the per-node quantities consumed by `ec_flux_pre`.
    pub fn pre(&self, q: &State) -> PreState {
        let pr = self.prim(q);
        let beta = pr.rho / (2.0 * pr.p);
        PreState {
            rho: pr.rho,
            u: pr.u,
            beta,
            ln_rho: pr.rho.ln(),
            ln_beta: beta.ln(),
            usq: pr.u[0] * pr.u[0] + pr.u[1] * pr.u[1] + pr.u[2] * pr.u[2],
        }
    }

    /// Entropy-conservative (kinetic-energy-preserving) two-point flux in all
    /// three coordinate directions at once, sharing the logarithmic means.
    pub fn ec_flux_all(&self, qa: &State, qb: &State) -> [State; 3] {
        self.ec_flux_pre(&self.pre(qa), &self.pre(qb))
    }

    /// `ec_flux_all` on precomputed states (reuses the cached logarithms).
    pub fn ec_flux_pre(&self, pa: &PreState, pb: &PreState) -> [State; 3] {
        let rho_log = log_mean_ln(pa.rho, pb.rho, pa.ln_rho, pb.ln_rho);
        let beta_log = log_mean_ln(pa.beta, pb.beta, pa.ln_beta, pb.ln_beta);
        let u_avg = [
            0.5 * (pa.u[0] + pb.u[0]),
            0.5 * (pa.u[1] + pb.u[1]),
            0.5 * (pa.u[2] + pb.u[2]),
        ];
        let p_tilde = 0.5 * (pa.rho + pb.rho) / (pa.beta + pb.beta);
        let usq_avg = 0.5 * (pa.usq + pb.usq);
        let h_part = 0.5 / ((self.gamma - 1.0) * beta_log) - 0.5 * usq_avg;
        let mut out = [[0.0; 5]; 3];
        for m in 0..3 {
            let f_rho = rho_log * u_avg[m];
            let mut f = [
                f_rho,
                u_avg[0] * f_rho,
                u_avg[1] * f_rho,
                u_avg[2] * f_rho,
                0.0,
            ];
            f[1 + m] += p_tilde;
            f[4] = h_part * f_rho + u_avg[0] * f[1] + u_avg[1] * f[2] + u_avg[2] * f[3];
            out[m] = f;
        }
        out
    }

    /// Symmetrizer `H = dq/dw` (inverse entropy Hessian), symmetric positive
    /// definite for admissible states.
    pub fn dq_dw(&self, q: &State) -> Matrix5<f64> {
        let pr = self.prim(q);
        let e_t = q[4] / pr.rho;
        let usq = pr.u[0] * pr.u[0] + pr.u[1] * pr.u[1] + pr.u[2] * pr.u[2];
        let inv_r = 1.0 / self.r;
        let mut h = Matrix5::zeros();
        h[(0, 0)] = pr.rho * inv_r;
        for i in 0..3 {
            h[(0, 1 + i)] = q[1 + i] * inv_r;
            h[(1 + i, 0)] = q[1 + i] * inv_r;
            for j in 0..3 {
                h[(1 + i, 1 + j)] = pr.rho * pr.u[i] * pr.u[j] * inv_r;
            }
            h[(1 + i, 1 + i)] += pr.rho * pr.t;
            h[(1 + i, 4)] = pr.u[i] * (q[4] + pr.p) * inv_r;
            h[(4, 1 + i)] = h[(1 + i, 4)];
        }
        h[(0, 4)] = q[4] * inv_r;
        h[(4, 0)] = q[4] * inv_r;
        h[(4, 4)] = (q[4] * e_t + pr.p * (usq + self.cv() * pr.t)) * inv_r;
        h
    }

    /// Roe-average intermediate state of two states (density, velocity and
    /// temperature consistent with the Roe-averaged total enthalpy).
    pub fn roe_state(&self, qa: &State, qb: &State) -> State {
        let pa = self.prim(qa);
        let pb = self.prim(qb);
        let wa = pa.rho.sqrt();
        let wb = pb.rho.sqrt();
        let inv = 1.0 / (wa + wb);
        let u = [
            (wa * pa.u[0] + wb * pb.u[0]) * inv,
            (wa * pa.u[1] + wb * pb.u[1]) * inv,
            (wa * pa.u[2] + wb * pb.u[2]) * inv,
        ];
        let ha = (qa[4] + pa.p) / pa.rho;
        let hb = (qb[4] + pb.p) / pb.rho;
        let h = (wa * ha + wb * hb) * inv;
        let usq = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
        let c2 = (self.gamma - 1.0) * (h - 0.5 * usq);
        let t = c2 / (self.gamma * self.r);
        let rho = wa * wb;
        self.cons(&Prim { rho, u, p: rho * self.r * t, t })
    }

    /// Entropy-scaled dissipation matrix `|A_W| = R |Lambda| (R^-1 H R^-T) R^T`
    /// evaluated at `q` for unit normal `n`; symmetric positive semidefinite,
    /// so that `dw^T |A_W| dw >= 0`. Applied to jumps of entropy variables.
    pub fn abs_flux_jacobian_w(&self, q: &State, n: &[f64; 3]) -> Matrix5<f64> {
        let (r_eig, lam) = self.eigensystem(q, n, true);
        let h = self.dq_dw(q);
        let lu = r_eig.lu();
        // M = R^-1 H R^-T (block-diagonal by symmetrizability).
        let y = lu.solve(&h).expect("singular eigenvector matrix");
        let m = lu.solve(&y.transpose()).expect("singular eigenvector matrix");
        let mut d = r_eig * Matrix5::from_diagonal(&lam) * m * r_eig.transpose();
        // Symmetrize away roundoff.
        d = 0.5 * (d + d.transpose());
        d
    }

    /// Right eigenvectors of `dF_n/dq` and the (optionally absolute)
    /// eigenvalues, column order `(u_n - c, u_n, u_n + c, t1, t2)`.
    fn eigensystem(&self, q: &State, n: &[f64; 3], absolute: bool) -> (Matrix5<f64>, Vector5<f64>) {
        let pr = self.prim(q);
        let c = self.sound_speed(&pr);
        let un = pr.u[0] * n[0] + pr.u[1] * n[1] + pr.u[2] * n[2];
        let usq = pr.u[0] * pr.u[0] + pr.u[1] * pr.u[1] + pr.u[2] * pr.u[2];
        let h = (q[4] + pr.p) / pr.rho;
        let (t1, t2) = tangent_basis(n);
        let ut1 = pr.u[0] * t1[0] + pr.u[1] * t1[1] + pr.u[2] * t1[2];
        let ut2 = pr.u[0] * t2[0] + pr.u[1] * t2[1] + pr.u[2] * t2[2];
        let mut r = Matrix5::zeros();
        // Acoustic minus / entropy / acoustic plus / two shear columns.
        r[(0, 0)] = 1.0;
        r[(0, 1)] = 1.0;
        r[(0, 2)] = 1.0;
        for i in 0..3 {
            r[(1 + i, 0)] = pr.u[i] - c * n[i];
            r[(1 + i, 1)] = pr.u[i];
            r[(1 + i, 2)] = pr.u[i] + c * n[i];
            r[(1 + i, 3)] = t1[i];
            r[(1 + i, 4)] = t2[i];
        }
        r[(4, 0)] = h - c * un;
        r[(4, 1)] = 0.5 * usq;
        r[(4, 2)] = h + c * un;
        r[(4, 3)] = ut1;
        r[(4, 4)] = ut2;
        let mut lam = Vector5::new(un - c, un, un + c, un, un);
        if absolute {
            lam.apply(|v| *v = v.abs());
        }
        (r, lam)
    }

    /// Signed counterpart of `abs_flux_jacobian_w`, i.e. `A_n H`; used only
    /// as a verification oracle for the eigensystem and the symmetrizer.
    pub fn flux_jacobian_times_h(&self, q: &State, n: &[f64; 3]) -> Matrix5<f64> {
        let (r_eig, lam) = self.eigensystem(q, n, false);
        let h = self.dq_dw(q);
        let lu = r_eig.lu();
        let y = lu.solve(&h).expect("singular eigenvector matrix");
        let m = lu.solve(&y.transpose()).expect("singular eigenvector matrix");
        r_eig * Matrix5::from_diagonal(&lam) * m * r_eig.transpose()
    }
}

/// Transport coefficients (dynamic viscosity and Prandtl number).
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Transport {
    pub mu: f64,
    pub pr: f64,
}

impl Transport {
    pub fn kappa(&self, gas: &Gas) -> f64 {
        gas.cp() * self.mu / self.pr
    }
}

/// Viscous fluxes `fv_m = sum_j C_mj theta_j` from the entropy-variable
/// gradients `theta[j] = dw/dx_j`, expressed through primitive gradients:
/// `dT/dx_j = T^2 theta_j[4]`, `du_i/dx_j = T (theta_j[1+i] + u_i theta_j[4])`.
pub fn viscous_flux(
    gas: &Gas,
    tr: &Transport,
    q: &State,
    theta: &[[f64; 5]; 3],
) -> [State; 3] {
    let pr = gas.prim(q);
    let t = pr.t;
    let mut dudx = [[0.0; 3]; 3]; // dudx[i][j] = du_i/dx_j
    let mut dtdx = [0.0; 3];
    for j in 0..3 {
        dtdx[j] = t * t * theta[j][4];
        for i in 0..3 {
            dudx[i][j] = t * (theta[j][1 + i] + pr.u[i] * theta[j][4]);
        }
    }
    let divu = dudx[0][0] + dudx[1][1] + dudx[2][2];
    let kappa = tr.kappa(gas);
    let mut out = [[0.0; 5]; 3];
    for m in 0..3 {
        let mut tau_dot_u = 0.0;
        for i in 0..3 {
            let mut tau = tr.mu * (dudx[i][m] + dudx[m][i]);
            if i == m {
                tau -= tr.mu * (2.0 / 3.0) * divu;
            }
            out[m][1 + i] = tau;
            tau_dot_u += tau * pr.u[i];
        }
        out[m][4] = tau_dot_u + kappa * dtdx[m];
    }
    out
}

/// Per-node state cache for the two-point flux hot loop.
#[derive(Debug, Clone, Copy)]
pub struct PreState {
    pub rho: f64,
    pub u: [f64; 3],
    pub beta: f64,
    pub ln_rho: f64,
    pub ln_beta: f64,
    pub usq: f64,
}

/// Logarithmic mean with the series expansion near coincident arguments.
pub fn log_mean(a: f64, b: f64) -> f64 {
    log_mean_ln(a, b, a.ln(), b.ln())
}

/// Logarithmic mean given precomputed logarithms.
pub fn log_mean_ln(a: f64, b: f64, ln_a: f64, ln_b: f64) -> f64 {
    let f = (a - b) / (a + b);
    let u = f * f;
    let cap = if u < 1e-4 {
        1.0 + u / 3.0 + u * u / 5.0 + u * u * u / 7.0
    } else {
        (ln_a - ln_b) / (2.0 * f)
    };
    0.5 * (a + b) / cap
}

/// Orthonormal tangent pair completing the unit normal `n`.
pub fn tangent_basis(n: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    // Pick the coordinate axis least aligned with n to seed the basis.
    let a = if n[0].abs() <= n[1].abs() && n[0].abs() <= n[2].abs() {
        [1.0, 0.0, 0.0]
    } else if n[1].abs() <= n[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let dot = a[0] * n[0] + a[1] * n[1] + a[2] * n[2];
    let mut t1 = [a[0] - dot * n[0], a[1] - dot * n[1], a[2] - dot * n[2]];
    let m = (t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]).sqrt();
    t1 = [t1[0] / m, t1[1] / m, t1[2] / m];
    let t2 = [
        n[1] * t1[2] - n[2] * t1[1],
        n[2] * t1[0] - n[0] * t1[2],
        n[0] * t1[1] - n[1] * t1[0],
    ];
    (t1, t2)
}

// ---- scalar Burgers analogue -------------------------------------------

/// Split-form-compatible scalar Burgers physics (`f = u^2/2`, `S = u^2/2`,
/// `w = u`, `psi = u^3/6`), used to cross-check the flux-difference volume
/// kernel against the classical split form.
pub mod burgers {
    /// Entropy-conservative two-point flux.
    pub fn ec_flux(ua: f64, ub: f64) -> f64 {
        (ua * ua + ua * ub + ub * ub) / 6.0
    }

    pub fn flux(u: f64) -> f64 {
        0.5 * u * u
    }

    pub fn entropy(u: f64) -> f64 {
        0.5 * u * u
    }

    pub fn psi(u: f64) -> f64 {
        u * u * u / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_state(gas: &Gas, rng: &mut impl Rng) -> State {
        let pr = Prim {
            rho: 0.3 + 1.5 * rng.gen::<f64>(),
            u: [
                2.0 * rng.gen::<f64>() - 1.0,
                2.0 * rng.gen::<f64>() - 1.0,
                2.0 * rng.gen::<f64>() - 1.0,
            ],
            p: 0.3 + 1.5 * rng.gen::<f64>(),
            t: 0.0,
        };
        let pr = Prim { t: pr.p / (gas.r * pr.rho), ..pr };
        gas.cons(&pr)
    }

    #[test]
    fn entropy_variable_roundtrip() {
        let gas = Gas::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let q = random_state(&gas, &mut rng);
            let w = gas.entropy_vars(&q);
            let back = gas.cons_from_entropy(&w);
            for c in 0..5 {
                assert!((q[c] - back[c]).abs() < 1e-12 * (1.0 + q[c].abs()));
            }
        }
    }

    #[test]
    fn entropy_vars_are_the_gradient_of_entropy() {
        let gas = Gas { gamma: 1.4, r: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let q = random_state(&gas, &mut rng);
            let w = gas.entropy_vars(&q);
            for c in 0..5 {
                let h = 1e-6 * (1.0 + q[c].abs());
                let mut qp = q;
                let mut qm = q;
                qp[c] += h;
                qm[c] -= h;
                let fd = (gas.entropy(&qp) - gas.entropy(&qm)) / (2.0 * h);
                assert!(
                    (fd - w[c]).abs() < 2e-7 * (1.0 + w[c].abs()),
                    "dS/dq[{c}]: fd {fd} vs {}",
                    w[c]
                );
            }
        }
    }

    #[test]
    fn psi_is_the_entropy_flux_potential() {
        // psi_m = w . f_m - F_m must hold identically.
        let gas = Gas { gamma: 1.4, r: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q = random_state(&gas, &mut rng);
            let w = gas.entropy_vars(&q);
            for m in 0..3 {
                let f = gas.flux(&q, m);
                let lhs: f64 = (0..5).map(|c| w[c] * f[c]).sum::<f64>() - gas.entropy_flux(&q, m);
                assert!((lhs - gas.psi(&q, m)).abs() < 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn ec_flux_is_consistent_and_symmetric() {
        let gas = Gas::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let qa = random_state(&gas, &mut rng);
            let qb = random_state(&gas, &mut rng);
            let same = gas.ec_flux_all(&qa, &qa);
            let ab = gas.ec_flux_all(&qa, &qb);
            let ba = gas.ec_flux_all(&qb, &qa);
            for m in 0..3 {
                let exact = gas.flux(&qa, m);
                for c in 0..5 {
                    assert!((same[m][c] - exact[c]).abs() < 1e-11 * (1.0 + exact[c].abs()));
                    assert!((ab[m][c] - ba[m][c]).abs() < 1e-13 * (1.0 + ab[m][c].abs()));
                }
            }
        }
    }

    #[test]
    fn ec_flux_satisfies_the_entropy_shuffle() {
        // (w_a - w_b) . f*_m(q_a, q_b) = psi_m(q_a) - psi_m(q_b).
        let gas = Gas { gamma: 1.4, r: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let qa = random_state(&gas, &mut rng);
            let qb = random_state(&gas, &mut rng);
            let wa = gas.entropy_vars(&qa);
            let wb = gas.entropy_vars(&qb);
            let f = gas.ec_flux_all(&qa, &qb);
            for m in 0..3 {
                let lhs: f64 = (0..5).map(|c| (wa[c] - wb[c]) * f[m][c]).sum();
                let rhs = gas.psi(&qa, m) - gas.psi(&qb, m);
                assert!(
                    (lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()),
                    "shuffle defect {} in dir {m}",
                    lhs - rhs
                );
            }
        }
    }

    #[test]
    fn shuffle_holds_for_nonunit_gas_constant() {
        let gas = Gas { gamma: 1.4, r: 0.7 };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let qa = random_state(&gas, &mut rng);
            let qb = random_state(&gas, &mut rng);
            let wa = gas.entropy_vars(&qa);
            let wb = gas.entropy_vars(&qb);
            let f = gas.ec_flux_all(&qa, &qb);
            for m in 0..3 {
                let lhs: f64 = (0..5).map(|c| (wa[c] - wb[c]) * f[m][c]).sum();
                let rhs = gas.psi(&qa, m) - gas.psi(&qb, m);
                assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn log_mean_matches_definition_and_limit() {
        assert!((log_mean(1.0, std::f64::consts::E) - (std::f64::consts::E - 1.0)).abs() < 1e-14);
        assert!((log_mean(2.0, 2.0) - 2.0).abs() < 1e-14);
        let a = 2.0;
        let b = 2.0 + 1e-9;
        assert!((log_mean(a, b) - (b - a) / (b / a).ln()).abs() < 1e-12);
    }

    #[test]
    fn dq_dw_matches_finite_difference_of_the_inverse_map() {
        let gas = Gas { gamma: 1.4, r: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let q = random_state(&gas, &mut rng);
            let w = gas.entropy_vars(&q);
            let h = gas.dq_dw(&q);
            for c in 0..5 {
                let eps = 1e-7 * (1.0 + w[c].abs());
                let mut wp = w;
                let mut wm = w;
                wp[c] += eps;
                wm[c] -= eps;
                let qp = gas.cons_from_entropy(&wp);
                let qm = gas.cons_from_entropy(&wm);
                for rr in 0..5 {
                    let fd = (qp[rr] - qm[rr]) / (2.0 * eps);
                    assert!(
                        (fd - h[(rr, c)]).abs() < 5e-6 * (1.0 + h[(rr, c)].abs()),
                        "H[{rr},{c}]: fd {fd} vs {}",
                        h[(rr, c)]
                    );
                }
            }
        }
    }

    #[test]
    fn eigensystem_reconstructs_the_flux_jacobian() {
        // R Lambda (R^-1 H R^-T) R^T must equal (dF_n/dq) H; validates the
        // eigenvectors, eigenvalues and the symmetrizer together.
        let gas = Gas { gamma: 1.4, r: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let q = random_state(&gas, &mut rng);
            let mut n = [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5];
            let m = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            n = [n[0] / m, n[1] / m, n[2] / m];
            let built = gas.flux_jacobian_times_h(&q, &n);
            // FD Jacobian of F_n.
            let mut a = Matrix5::zeros();
            for c in 0..5 {
                let h = 1e-6 * (1.0 + q[c].abs());
                let mut qp = q;
                let mut qm = q;
                qp[c] += h;
                qm[c] -= h;
                for rr in 0..5 {
                    let fp: f64 = (0..3).map(|d| gas.flux(&qp, d)[rr] * n[d]).sum();
                    let fm: f64 = (0..3).map(|d| gas.flux(&qm, d)[rr] * n[d]).sum();
                    a[(rr, c)] = (fp - fm) / (2.0 * h);
                }
            }
            let target = a * gas.dq_dw(&q);
            for rr in 0..5 {
                for cc in 0..5 {
                    assert!(
                        (built[(rr, cc)] - target[(rr, cc)]).abs()
                            < 2e-5 * (1.0 + target[(rr, cc)].abs()),
                        "A H mismatch at ({rr},{cc}): {} vs {}",
                        built[(rr, cc)],
                        target[(rr, cc)]
                    );
                }
            }
        }
    }

    #[test]
    fn dissipation_matrix_is_symmetric_positive_semidefinite() {
        let gas = Gas { gamma: 1.4, r: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let qa = random_state(&gas, &mut rng);
            let qb = random_state(&gas, &mut rng);
            let q = gas.roe_state(&qa, &qb);
            let mut n = [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5];
            let m = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            n = [n[0] / m, n[1] / m, n[2] / m];
            let d = gas.abs_flux_jacobian_w(&q, &n);
            let scale = d.amax();
            for rr in 0..5 {
                for cc in 0..5 {
                    assert!((d[(rr, cc)] - d[(cc, rr)]).abs() < 1e-12 * scale);
                }
            }
            let eig = d.symmetric_eigen();
            for ev in eig.eigenvalues.iter() {
                assert!(*ev > -1e-12 * scale, "negative eigenvalue {ev}");
            }
        }
    }

    #[test]
    fn roe_state_is_consistent_for_equal_arguments() {
        let gas = Gas::default();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let q = random_state(&gas, &mut rng);
            let r = gas.roe_state(&q, &q);
            for c in 0..5 {
                assert!((q[c] - r[c]).abs() < 1e-12 * (1.0 + q[c].abs()));
            }
        }
    }

    #[test]
    fn viscous_flux_matches_direct_stress_and_heat_computation() {
        // Build theta from prescribed primitive gradients through H^-1 and
        // check the resulting stresses/heat flux against the direct formulas.
        let gas = Gas { gamma: 1.4, r: 1.0 };
        let tr = Transport { mu: 0.37, pr: 0.72 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let q = random_state(&gas, &mut rng);
            let pr = gas.prim(&q);
            // Random conserved-variable gradients; convert to w-gradients.
            let h = gas.dq_dw(&q);
            let lu = h.lu();
            let mut theta = [[0.0; 5]; 3];
            let mut dqdx = [[0.0; 5]; 3];
            for j in 0..3 {
                for c in 0..5 {
                    dqdx[j][c] = 2.0 * rng.gen::<f64>() - 1.0;
                }
                let th = lu
                    .solve(&Vector5::from_row_slice(&dqdx[j]))
                    .expect("H is SPD");
                for c in 0..5 {
                    theta[j][c] = th[c];
                }
            }
            // Direct primitive gradients from the conserved ones.
            let mut dudx = [[0.0; 3]; 3];
            let mut dtdx = [0.0; 3];
            for j in 0..3 {
                let drho = dqdx[j][0];
                for i in 0..3 {
                    dudx[i][j] = (dqdx[j][1 + i] - pr.u[i] * drho) / pr.rho;
                }
                let ke_grad: f64 = (0..3)
                    .map(|i| pr.u[i] * dqdx[j][1 + i])
                    .sum::<f64>()
                    - 0.5 * (pr.u[0] * pr.u[0] + pr.u[1] * pr.u[1] + pr.u[2] * pr.u[2]) * drho;
                let dp = (gas.gamma - 1.0) * (dqdx[j][4] - ke_grad);
                dtdx[j] = (dp - gas.r * pr.t * drho) / (gas.r * pr.rho);
            }
            let divu = dudx[0][0] + dudx[1][1] + dudx[2][2];
            let fv = viscous_flux(&gas, &tr, &q, &theta);
            for m in 0..3 {
                assert!(fv[m][0].abs() < 1e-13);
                let mut tau_u = 0.0;
                for i in 0..3 {
                    let mut tau = tr.mu * (dudx[i][m] + dudx[m][i]);
                    if i == m {
                        tau -= tr.mu * (2.0 / 3.0) * divu;
                    }
                    assert!(
                        (fv[m][1 + i] - tau).abs() < 1e-9 * (1.0 + tau.abs()),
                        "tau[{i}{m}]: {} vs {tau}",
                        fv[m][1 + i]
                    );
                    tau_u += tau * pr.u[i];
                }
                let energy = tau_u + tr.kappa(&gas) * dtdx[m];
                assert!((fv[m][4] - energy).abs() < 1e-9 * (1.0 + energy.abs()));
            }
        }
    }

    #[test]
    fn viscous_bilinear_form_is_symmetric_and_nonnegative() {
        // B(theta, eta) = sum_m eta_m . fv_m(theta) must be symmetric in its
        // arguments (C_mj = C_jm^T) and nonnegative on the diagonal (PSD).
        let gas = Gas { gamma: 1.4, r: 1.0 };
        let tr = Transport { mu: 0.5, pr: 0.71 };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let q = random_state(&gas, &mut rng);
            let mut theta = [[0.0; 5]; 3];
            let mut eta = [[0.0; 5]; 3];
            for j in 0..3 {
                for c in 0..5 {
                    theta[j][c] = 2.0 * rng.gen::<f64>() - 1.0;
                    eta[j][c] = 2.0 * rng.gen::<f64>() - 1.0;
                }
            }
            let f_th = viscous_flux(&gas, &tr, &q, &theta);
            let f_et = viscous_flux(&gas, &tr, &q, &eta);
            let b_te: f64 = (0..3)
                .map(|m| (0..5).map(|c| eta[m][c] * f_th[m][c]).sum::<f64>())
                .sum();
            let b_et: f64 = (0..3)
                .map(|m| (0..5).map(|c| theta[m][c] * f_et[m][c]).sum::<f64>())
                .sum();
            assert!((b_te - b_et).abs() < 1e-12 * (1.0 + b_te.abs()), "{b_te} vs {b_et}");
            let b_tt: f64 = (0..3)
                .map(|m| (0..5).map(|c| theta[m][c] * f_th[m][c]).sum::<f64>())
                .sum();
            assert!(b_tt > -1e-12, "indefinite viscous block: {b_tt}");
        }
    }

    #[test]
    fn burgers_two_point_flux_is_consistent_and_satisfies_the_shuffle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let a = 4.0 * rng.gen::<f64>() - 2.0;
            let b = 4.0 * rng.gen::<f64>() - 2.0;
            assert!((burgers::ec_flux(a, a) - burgers::flux(a)).abs() < 1e-14);
            let lhs = (a - b) * burgers::ec_flux(a, b);
            let rhs = burgers::psi(a) - burgers::psi(b);
            assert!((lhs - rhs).abs() < 1e-13 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let mut n = [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5];
            let m = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            n = [n[0] / m, n[1] / m, n[2] / m];
            let (t1, t2) = tangent_basis(&n);
            let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            assert!(dot(&t1, &t1).sqrt() - 1.0 < 1e-13);
            assert!(dot(&t2, &t2).sqrt() - 1.0 < 1e-13);
            assert!(dot(&t1, &n).abs() < 1e-13);
            assert!(dot(&t2, &n).abs() < 1e-13);
            assert!(dot(&t1, &t2).abs() < 1e-13);
        }
    }
}
