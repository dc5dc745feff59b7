//! Experiment drivers behind the CLI: full runs with entropy/conservation
//! time series, nested-refinement convergence studies, entropy-conservation
//! tests, free-stream residual audits, operator verification tables, and
//! metric/GCL diagnostics. Everything is deterministic in the configuration.

use crate::config::{ProblemName, RunConfig};
use crate::error::{Error, Result};
use crate::geom::MetricMode;
use crate::interp::InterpPair1d;
use crate::mesh::Mesh;
use crate::phys::{Gas, Prim, State, Transport};
use crate::problems::{IsentropicVortex, TaylorGreen, ViscousShock};
use crate::report::{fnum, Csv};
use crate::rhs::{BoundaryState, Discretization, Fields};
use crate::sbp::{lgl_nodes, Operator1d};
use crate::timeint::{integrate, RunStats, TimeOpts};
use std::sync::Arc;

/// Uniform state with `rho = T = 1` moving at Mach `mach` along `alpha`.
pub fn free_stream_state(gas: Gas, mach: f64, alpha: f64) -> State {
    let c = (gas.gamma * gas.r).sqrt();
    let u = mach * c;
    gas.cons(&Prim {
        rho: 1.0,
        u: [u * alpha.cos(), u * alpha.sin(), 0.0],
        p: gas.r,
        t: 1.0,
    })
}

/// The concrete problem selected by a configuration.
pub enum Problem {
    Vortex(IsentropicVortex),
    Shock(ViscousShock),
    Tgv(TaylorGreen),
    FreeStream(State),
}

impl Problem {
    pub fn initial(&self, x: &[f64; 3]) -> State {
        match self {
            Problem::Vortex(v) => v.state(x, 0.0),
            Problem::Shock(s) => s.state(x, 0.0),
            Problem::Tgv(t) => t.state(x),
            Problem::FreeStream(q) => *q,
        }
    }

    /// Exact solution at time `t`, when one exists.
    pub fn exact(&self, x: &[f64; 3], t: f64) -> Option<State> {
        match self {
            Problem::Vortex(v) => Some(v.state(x, t)),
            Problem::Shock(s) => Some(s.state(x, t)),
            Problem::Tgv(_) => None,
            Problem::FreeStream(q) => Some(*q),
        }
    }

    fn default_bounds(&self) -> [[f64; 3]; 2] {
        match self {
            Problem::Vortex(v) => [v.domain_lo, v.domain_hi],
            Problem::Shock(_) => [[-0.5; 3], [0.5; 3]],
            Problem::Tgv(_) => [[-std::f64::consts::PI; 3], [std::f64::consts::PI; 3]],
            Problem::FreeStream(_) => [[0.0; 3], [1.0; 3]],
        }
    }

    fn default_periodic(&self) -> [bool; 3] {
        match self {
            Problem::Shock(_) => [false, true, true],
            _ => [true; 3],
        }
    }

    /// Problem-imposed transport coefficients (viscous verification problems
    /// fix the Reynolds and Prandtl numbers).
    fn transport(&self) -> Option<Transport> {
        match self {
            Problem::Shock(s) => Some(s.transport()),
            Problem::Tgv(t) => Some(t.transport()),
            _ => None,
        }
    }
}

/// A ready-to-integrate experiment.
pub struct Setup {
    pub disc: Discretization,
    pub problem: Problem,
    pub time: TimeOpts,
    pub t_final: f64,
}

fn make_problem(cfg: &RunConfig) -> Result<Problem> {
    let gas = Gas {
        gamma: cfg.gas.gamma,
        r: cfg.gas.r,
    };
    let p = &cfg.problem;
    Ok(match p.name {
        ProblemName::Vortex => {
            let mut v = IsentropicVortex::standard(gas);
            v.eps = p.eps;
            v.mach = p.mach.unwrap_or(0.5);
            v.alpha = p.alpha_deg.to_radians();
            if let Some(b) = cfg.mesh.bounds {
                v.domain_lo = b[0];
                v.domain_hi = b[1];
            }
            Problem::Vortex(v)
        }
        ProblemName::ViscousShock => Problem::Shock(ViscousShock::new(
            gas,
            p.mach.unwrap_or(2.5),
            p.reynolds.unwrap_or(10.0),
        )),
        ProblemName::Tgv => {
            let mut t = TaylorGreen::standard(gas);
            t.mach = p.mach.unwrap_or(0.05);
            t.reynolds = p.reynolds.unwrap_or(1600.0);
            Problem::Tgv(t)
        }
        ProblemName::FreeStream => Problem::FreeStream(free_stream_state(
            gas,
            p.mach.unwrap_or(0.5),
            p.alpha_deg.to_radians(),
        )),
    })
}

/// Build the mesh described by the config, then refine every element
/// uniformly `extra_uniform` more times (nested convergence levels).
pub fn build_mesh(cfg: &RunConfig, problem: &Problem, extra_uniform: usize) -> Result<Mesh> {
    let m = &cfg.mesh;
    let bounds = m.bounds.unwrap_or_else(|| problem.default_bounds());
    let periodic = m.periodic.unwrap_or_else(|| problem.default_periodic());
    let base_degree = *m.degrees.iter().min().unwrap();
    let mut mesh = Mesh::cartesian(m.cells, bounds[0], bounds[1], periodic, base_degree)?;
    if m.refine_levels > 0 && m.refine_fraction > 0.0 {
        mesh.refine_random(m.seed, m.refine_levels, m.refine_fraction);
    }
    if m.degrees.len() > 1 {
        mesh.assign_random_degrees(m.seed.wrapping_add(1), &m.degrees);
    }
    for _ in 0..extra_uniform {
        mesh.refine_all();
    }
    if m.geometry_degree > 0 {
        mesh.perturb(m.geometry_degree)?;
    }
    Ok(mesh)
}

/// Assemble the discretization for a config (optionally `extra_uniform`
/// nested refinements on top of the configured mesh).
pub fn build(cfg: &RunConfig, extra_uniform: usize) -> Result<Setup> {
    cfg.validate()?;
    let problem = make_problem(cfg)?;
    let mesh = build_mesh(cfg, &problem, extra_uniform)?;
    let gas = Gas {
        gamma: cfg.gas.gamma,
        r: cfg.gas.r,
    };
    let transport = if cfg.scheme.viscous {
        let fallback = Transport {
            mu: cfg.gas.mu,
            pr: cfg.gas.pr,
        };
        let tr = problem.transport().unwrap_or(fallback);
        if tr.mu <= 0.0 {
            return Err(Error::Config(
                "viscous run needs gas.mu > 0 or a problem with fixed transport".into(),
            ));
        }
        Some(tr)
    } else {
        None
    };
    let boundary: Option<BoundaryState> = if mesh.boundaries.is_empty() {
        None
    } else {
        match &problem {
            Problem::Shock(s) => {
                let s = s.clone();
                Some(Arc::new(move |x: &[f64; 3], t: f64| s.state(x, t)))
            }
            Problem::Vortex(v) => {
                let v = v.clone();
                Some(Arc::new(move |x: &[f64; 3], t: f64| v.state(x, t)))
            }
            Problem::FreeStream(q) => {
                let q = *q;
                Some(Arc::new(move |_: &[f64; 3], _: f64| q))
            }
            Problem::Tgv(_) => {
                return Err(Error::Config(
                    "the Taylor-Green problem requires a fully periodic mesh".into(),
                ))
            }
        }
    };
    let mut disc = Discretization::new(
        mesh,
        gas,
        transport,
        cfg.scheme.dissipation,
        MetricMode::Optimized,
        boundary,
    )?;
    disc.ip_scale = cfg.scheme.ip_scale;
    let time = TimeOpts {
        rtol: cfg.time.tol,
        atol: cfg.time.tol * 1e-2,
        relaxation: cfg.time.relaxation,
        dt0: cfg.time.dt_initial,
        max_steps: 2_000_000,
    };
    Ok(Setup {
        disc,
        problem,
        time,
        t_final: cfg.time.t_final,
    })
}

/// Outcome of a single integration with full diagnostics.
pub struct RunOutcome {
    pub t_final: f64,
    pub stats: RunStats,
    pub entropy0: f64,
    pub entropy_final: f64,
    /// max over accepted steps of |dS/dt|.
    pub max_abs_entropy_rate: f64,
    /// max over accepted steps of the signed dS/dt (sign audit).
    pub max_entropy_rate: f64,
    pub conserved0: [f64; 5],
    pub conserved_final: [f64; 5],
    /// Per-component `[L1, L2, Linf]` errors vs. the exact solution, when
    /// one exists, evaluated at the returned final time.
    pub norms: Option<[[f64; 3]; 5]>,
    /// Time series: step, t, dt, gamma, entropy, entropy_rate.
    pub series: Csv,
    pub q_final: Fields,
}

/// Integrate a prepared setup to its final time, recording diagnostics.
pub fn run_setup(setup: &Setup) -> Result<RunOutcome> {
    let disc = &setup.disc;
    let q0 = disc.project(|x| setup.problem.initial(x));
    let entropy0 = disc.total_entropy(&q0);
    let conserved0 = disc.total_conserved(&q0);
    let mut series = Csv::new(&["step", "t", "dt", "gamma", "entropy", "entropy_rate"]);
    let mut max_abs_rate = 0.0_f64;
    let mut max_rate = f64::NEG_INFINITY;
    let (t_final, q_final, stats) = integrate(
        disc,
        q0,
        0.0,
        setup.t_final,
        &setup.time,
        |info| {
            let s = disc.total_entropy(info.q);
            let rate = disc.entropy_rate(info.q, info.dqdt);
            max_abs_rate = max_abs_rate.max(rate.abs());
            max_rate = max_rate.max(rate);
            series.row(vec![
                info.step.to_string(),
                fnum(info.t),
                fnum(info.dt),
                fnum(info.gamma),
                fnum(s),
                fnum(rate),
            ]);
        },
    )?;
    let norms = setup
        .problem
        .exact(&[0.0; 3], 0.0)
        .map(|_| disc.error_norms(&q_final, |x| setup.problem.exact(x, t_final).unwrap()));
    Ok(RunOutcome {
        t_final,
        stats,
        entropy0,
        entropy_final: disc.total_entropy(&q_final),
        max_abs_entropy_rate: max_abs_rate,
        max_entropy_rate: max_rate,
        conserved0,
        conserved_final: disc.total_conserved(&q_final),
        norms,
        series,
        q_final,
    })
}

/// `run <config>`: one integration, time series + summary CSVs.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let setup = build(cfg, 0)?;
    run_setup(&setup)
}

/// One refinement level of a convergence study.
pub struct ConvergenceLevel {
    pub level: usize,
    pub elements: usize,
    pub nodes: usize,
    /// Per-component `[L1, L2, Linf]` errors.
    pub norms: [[f64; 3]; 5],
    pub wall_seconds: f64,
}

pub struct ConvergenceReport {
    pub levels: Vec<ConvergenceLevel>,
    /// `log2(e_k / e_{k+1})` between consecutive levels: `[L1, L2, Linf]`
    /// rates of the density error.
    pub rates: Vec<[f64; 3]>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(&[
            "level", "elements", "nodes", "rho_l1", "rho_l2", "rho_linf", "rate_l1", "rate_l2",
            "rate_linf", "wall_seconds",
        ]);
        for (k, lv) in self.levels.iter().enumerate() {
            let rate = if k > 0 {
                self.rates[k - 1]
            } else {
                [f64::NAN; 3]
            };
            csv.row(vec![
                lv.level.to_string(),
                lv.elements.to_string(),
                lv.nodes.to_string(),
                fnum(lv.norms[0][0]),
                fnum(lv.norms[0][1]),
                fnum(lv.norms[0][2]),
                fnum(rate[0]),
                fnum(rate[1]),
                fnum(rate[2]),
                fnum(lv.wall_seconds),
            ]);
        }
        csv
    }
}

/// `converge <config> --levels N`: nested uniform refinement of the
/// configured (randomly adapted) base mesh; rates from consecutive levels.
pub fn converge(cfg: &RunConfig, levels: usize) -> Result<ConvergenceReport> {
    if levels < 2 {
        return Err(Error::InvalidArgument(
            "a convergence study needs at least 2 levels".into(),
        ));
    }
    let mut out = ConvergenceReport {
        levels: Vec::new(),
        rates: Vec::new(),
    };
    for lv in 0..levels {
        let setup = build(cfg, lv)?;
        if matches!(setup.problem, Problem::Tgv(_)) {
            return Err(Error::InvalidArgument(
                "the Taylor-Green problem has no exact solution to converge against".into(),
            ));
        }
        let start = std::time::Instant::now();
        let outcome = run_setup(&setup)?;
        let wall = start.elapsed().as_secs_f64();
        let nodes = setup
            .disc
            .geom
            .elems
            .iter()
            .map(|e| e.num_nodes())
            .sum::<usize>();
        out.levels.push(ConvergenceLevel {
            level: lv,
            elements: setup.disc.mesh.len(),
            nodes,
            norms: outcome.norms.expect("exact solution exists"),
            wall_seconds: wall,
        });
    }
    for k in 1..out.levels.len() {
        let a = &out.levels[k - 1].norms[0];
        let b = &out.levels[k].norms[0];
        out.rates
            .push([0, 1, 2].map(|i| (a[i] / b[i]).log2()));
    }
    Ok(out)
}

/// `entropy-test <config>`: entropy-conservation audit. Requires a
/// dissipation-free scheme; reports the worst semidiscrete entropy rate and
/// the total drift, plus the time series.
pub struct EntropyReport {
    pub outcome: RunOutcome,
    /// Entropy drift normalized by `R * total mass` (the natural entropy
    /// scale when the initial specific entropy is zero).
    pub normalized_drift: f64,
}

pub fn entropy_test(cfg: &RunConfig) -> Result<EntropyReport> {
    if cfg.scheme.dissipation {
        return Err(Error::Config(
            "entropy-test requires scheme.dissipation = false".into(),
        ));
    }
    let outcome = run(cfg)?;
    let scale = cfg.gas.r * outcome.conserved0[0].abs();
    let normalized_drift = (outcome.entropy_final - outcome.entropy0).abs() / scale;
    Ok(EntropyReport {
        outcome,
        normalized_drift,
    })
}

/// `freestream <config>`: residual of the constant state under the full
/// right-hand side, with optimized and with raw analytic metrics.
pub struct FreestreamReport {
    pub residual_optimized: f64,
    pub residual_analytic: f64,
    pub max_gcl_optimized: f64,
    pub max_gcl_analytic: f64,
    /// Characteristic convective rate `|q| * max wave speed / min node
    /// spacing`: the natural magnitude of `dq/dt` on this mesh. Residuals are
    /// judged relative to it so fine cells don't inflate the test.
    pub residual_scale: f64,
}

impl FreestreamReport {
    pub fn relative_optimized(&self) -> f64 {
        self.residual_optimized / self.residual_scale
    }

    pub fn relative_analytic(&self) -> f64 {
        self.residual_analytic / self.residual_scale
    }
}

fn rhs_inf_norm(disc: &Discretization, q: &Fields) -> Result<f64> {
    let mut out = disc.zero_fields();
    disc.rhs(0.0, q, &mut out)?;
    Ok(out
        .iter()
        .flatten()
        .flatten()
        .fold(0.0_f64, |m, &v| m.max(v.abs())))
}

pub fn freestream(cfg: &RunConfig) -> Result<FreestreamReport> {
    cfg.validate()?;
    let problem = make_problem(cfg)?;
    let gas = Gas {
        gamma: cfg.gas.gamma,
        r: cfg.gas.r,
    };
    let q_inf = free_stream_state(
        gas,
        cfg.problem.mach.unwrap_or(0.5),
        cfg.problem.alpha_deg.to_radians(),
    );
    let transport = cfg.scheme.viscous.then(|| Transport {
        mu: cfg.gas.mu.max(1e-3),
        pr: cfg.gas.pr,
    });
    let mut report = FreestreamReport {
        residual_optimized: f64::NAN,
        residual_analytic: f64::NAN,
        max_gcl_optimized: f64::NAN,
        max_gcl_analytic: f64::NAN,
        residual_scale: f64::NAN,
    };
    for mode in [MetricMode::Optimized, MetricMode::Analytic] {
        let mesh = build_mesh(cfg, &problem, 0)?;
        let boundary: Option<BoundaryState> = (!mesh.boundaries.is_empty())
            .then(|| -> BoundaryState { Arc::new(move |_: &[f64; 3], _: f64| q_inf) });
        let disc = Discretization::new(
            mesh,
            gas,
            transport,
            cfg.scheme.dissipation,
            mode,
            boundary,
        )?;
        let q = disc.project(|_| q_inf);
        let res = rhs_inf_norm(&disc, &q)?;
        let gcl = disc.geom.max_gcl_residual(&disc.mesh);
        match mode {
            MetricMode::Optimized => {
                let qmax = q_inf.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
                report.residual_scale = qmax / disc.initial_dt(&q, 1.0);
                report.residual_optimized = res;
                report.max_gcl_optimized = gcl;
            }
            MetricMode::Analytic => {
                report.residual_analytic = res;
                report.max_gcl_analytic = gcl;
            }
        }
    }
    Ok(report)
}

/// `verify-operators --pmax <n>`: per-degree accuracy/SBP residual table,
/// interpolation exactness, and the Burgers split/Hadamard agreement.
pub fn verify_operators(pmax: usize) -> Result<Csv> {
    if !(1..=13).contains(&pmax) {
        return Err(Error::InvalidArgument("pmax must be in 1..=13".into()));
    }
    let mut csv = Csv::new(&[
        "p",
        "accuracy_residual",
        "sbp_residual",
        "min_weight",
        "weight_sum_error",
        "interp_exactness",
        "interp_adjoint",
        "burgers_split_vs_hadamard",
    ]);
    for p in 1..=pmax {
        let op = Operator1d::new(p);
        let wsum: f64 = op.weights.iter().sum();
        // Coarse-degree exactness of the child projection (lower half face).
        let pair = InterpPair1d::new(p, p + 1, (-1.0, 0.0));
        let (xl, wl) = lgl_nodes(p + 1);
        let (xr, wr) = lgl_nodes(p + 2);
        let mut exactness = 0.0_f64;
        for j in 0..=p {
            for (i, &x) in xr.iter().enumerate() {
                let fine = -0.5 + 0.5 * x; // fine node in the coarse parameter
                let mut v = 0.0;
                for (k, &xk) in xl.iter().enumerate() {
                    v += pair.i_lr[(i, k)] * xk.powi(j as i32);
                }
                exactness = exactness.max((v - fine.powi(j as i32)).abs());
            }
        }
        // SBP-preserving adjoint identity.
        let half = 0.5;
        let mut adjoint = 0.0_f64;
        for i in 0..=p {
            for j in 0..=p + 1 {
                adjoint = adjoint
                    .max((pair.i_rl[(i, j)] - half * pair.i_lr[(j, i)] * wr[j] / wl[i]).abs());
            }
        }
        // Burgers split vs. Hadamard on a deterministic line.
        let u: Vec<f64> = op
            .nodes
            .iter()
            .enumerate()
            .map(|(i, &x)| 1.0 + 0.3 * (3.0 * x + i as f64).sin())
            .collect();
        let h = crate::rhs::burgers_hadamard_line(&op, &u);
        let s = crate::rhs::burgers_split_line(&op, &u);
        let burgers = h
            .iter()
            .zip(&s)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        csv.row(vec![
            p.to_string(),
            fnum(op.exactness_residual()),
            fnum(op.sbp_residual()),
            fnum(op.weights.iter().cloned().fold(f64::INFINITY, f64::min)),
            fnum((wsum - 2.0).abs()),
            fnum(exactness),
            fnum(adjoint),
            fnum(burgers),
        ]);
    }
    Ok(csv)
}

/// `metrics-report <config>`: per-element GCL residuals and constraint-matrix
/// singular-value diagnostics for the configured mesh.
pub fn metrics_report(cfg: &RunConfig) -> Result<Csv> {
    cfg.validate()?;
    let problem = make_problem(cfg)?;
    let mesh = build_mesh(cfg, &problem, 0)?;
    let mut ops = crate::sbp::OperatorSet::new();
    let geom = crate::geom::MeshGeometry::build(&mesh, &mut ops, MetricMode::Optimized)?;
    let residuals = geom.element_gcl_residuals(&mesh);
    let mut csv = Csv::new(&[
        "element",
        "level",
        "degree",
        "gcl_residual",
        "sigma_max",
        "sigma_min_nonzero",
        "sigma_null",
    ]);
    for (eid, e) in mesh.elements.iter().enumerate() {
        let sv = geom.constraint_singular_values(eid);
        let smax = sv[0];
        // The constraint matrix has exactly one null direction (constants).
        let snull = *sv.last().unwrap();
        let smin_nz = sv[sv.len() - 2];
        csv.row(vec![
            eid.to_string(),
            e.key.0.to_string(),
            e.degree.to_string(),
            fnum(residuals[eid]),
            fnum(smax),
            fnum(smin_nz),
            fnum(snull),
        ]);
    }
    Ok(csv)
}
