//! Dense primal-dual interior-point solver for small semidefinite programs.
//!
//! Problems are stated in primal standard form
//!
//! ```text
//!     maximize <C, X>   subject to   <A_k, X> = b_k,   X ⪰ 0
//! ```
//!
//! with dual `minimize b·y` subject to `Σ y_k A_k − C ⪰ 0`. The coefficient
//! matrices are symmetric and sparse (moment-matrix constraints touch only a
//! handful of cells); the iterates are dense. The method is an infeasible
//! path-following scheme with Nesterov–Todd scaling and a Mehrotra
//! predictor-corrector step.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Symmetric matrix stored by its upper-triangular nonzeros.
///
/// An off-diagonal entry `(i, j, v)` with `i < j` stands for both `M_ij` and `M_ji`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymSparse {
    entries: BTreeMap<(usize, usize), f64>,
}

impl SymSparse {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `v` to `M_ij` and `M_ji`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let key = (i.min(j), i.max(j));
        let e = self.entries.entry(key).or_insert(0.0);
        *e += v;
        if *e == 0.0 {
            self.entries.remove(&key);
        }
    }

    /// Adds the matrix `E` with `<E, X> = c * X_ij` for symmetric `X`.
    pub fn add_cell(&mut self, i: usize, j: usize, c: f64) {
        if i == j {
            self.add(i, i, c);
        } else {
            self.add(i, j, 0.5 * c);
        }
    }

    /// Builds the symmetric part `(M + Mᵀ)/2` of a general sparse matrix.
    pub fn symmetrize(general: &[(usize, usize, f64)]) -> Self {
        let mut m = SymSparse::new();
        for &(i, j, v) in general {
            if i == j {
                m.add(i, i, v);
            } else {
                m.add(i, j, 0.5 * v);
            }
        }
        m
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.keys().map(|&(_, j)| j).max()
    }

    /// `<M, X>` for symmetric `X`.
    pub fn inner(&self, x: &DMatrix<f64>) -> f64 {
        self.entries().map(|(i, j, v)| if i == j { v * x[(i, j)] } else { 2.0 * v * x[(i, j)] }).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries().map(|(i, j, v)| if i == j { v * v } else { 2.0 * v * v }).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymSparse { entries: self.entries.iter().map(|(&k, &v)| (k, v * s)).collect() }
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        self.add_to_dense(&mut m, 1.0);
        m
    }

    fn add_to_dense(&self, m: &mut DMatrix<f64>, w: f64) {
        for (i, j, v) in self.entries() {
            m[(i, j)] += w * v;
            if i != j {
                m[(j, i)] += w * v;
            }
        }
    }

    /// Entries in both orientations, for products with dense matrices.
    fn full_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.nnz());
        for (i, j, v) in self.entries() {
            out.push((i, j, v));
            if i != j {
                out.push((j, i, v));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub a: SymSparse,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub order: usize,
    pub objective: SymSparse,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(order: usize, objective: SymSparse) -> Self {
        SdpProblem { order, objective, constraints: Vec::new() }
    }

    pub fn add_constraint(&mut self, a: SymSparse, b: f64) -> usize {
        self.constraints.push(Constraint { a, b });
        self.constraints.len() - 1
    }

    fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Parameter("SDP matrix order must be >= 1".into()));
        }
        if self.constraints.is_empty() {
            return Err(Error::Parameter("SDP needs at least one constraint".into()));
        }
        let mats = std::iter::once(&self.objective).chain(self.constraints.iter().map(|c| &c.a));
        for m in mats {
            if m.max_index().is_some_and(|i| i >= self.order) {
                return Err(Error::Shape(format!("SDP coefficient index outside order {}", self.order)));
            }
        }
        Ok(())
    }

    /// Plain-text dump: header comments, then one `index row col value` line per
    /// upper-triangular nonzero (index 0 is the objective, `k >= 1` constraint `k - 1`).
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# order {} constraints {}", self.order, self.constraints.len());
        let bs: Vec<String> = self.constraints.iter().map(|c| format!("{:e}", c.b)).collect();
        let _ = writeln!(s, "# b {}", bs.join(" "));
        let mats = std::iter::once(&self.objective).chain(self.constraints.iter().map(|c| &c.a));
        for (k, m) in mats.enumerate() {
            for (i, j, v) in m.entries() {
                let _ = writeln!(s, "{k} {i} {j} {v:e}");
            }
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parameter(format!("malformed SDP dump: {msg}"));
        let mut order = None;
        let mut b = Vec::new();
        let mut mats: Vec<SymSparse> = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix("# order") {
                let mut it = rest.split_whitespace();
                order = it.next().and_then(|v| v.parse::<usize>().ok());
                let m = it.nth(1).and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| bad("header"))?;
                mats = vec![SymSparse::new(); m + 1];
            } else if let Some(rest) = line.strip_prefix("# b") {
                b = rest
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| bad("b value")))
                    .collect::<Result<_>>()?;
            } else if !line.starts_with('#') {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 4 {
                    return Err(bad("entry line"));
                }
                let k: usize = f[0].parse().map_err(|_| bad("index"))?;
                let i: usize = f[1].parse().map_err(|_| bad("row"))?;
                let j: usize = f[2].parse().map_err(|_| bad("col"))?;
                let v: f64 = f[3].parse().map_err(|_| bad("value"))?;
                mats.get_mut(k).ok_or_else(|| bad("index out of range"))?.add(i, j, v);
            }
        }
        let order = order.ok_or_else(|| bad("missing header"))?;
        if b.len() + 1 != mats.len() {
            return Err(bad("b length"));
        }
        let mut it = mats.into_iter();
        let mut p = SdpProblem::new(order, it.next().unwrap_or_default());
        for (a, bk) in it.zip(b) {
            p.add_constraint(a, bk);
        }
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// `<C, X>`.
    pub primal_value: f64,
    /// `b·y`; an upper bound on the primal optimum whenever `y` is dual feasible.
    pub dual_value: f64,
    /// One multiplier per original constraint (dropped duplicates report 0).
    pub dual_values: Vec<f64>,
    /// `|primal_value − dual_value|`.
    pub gap: f64,
    /// `‖b − A(X)‖ / (1 + ‖b‖)`.
    pub primal_residual: f64,
    /// `‖Σ y A − C − S‖ / (1 + ‖C‖)`.
    pub dual_residual: f64,
    pub iterations: usize,
    pub x: DMatrix<f64>,
    pub s: DMatrix<f64>,
    /// Best rigorous upper bound seen over all iterates, present when
    /// [`SolverOptions::trace_bound`] is set.
    pub certified: Option<CertifiedBound>,
    pub history: Vec<IterateSummary>,
}

/// Objective values and residuals of one iterate, maximization sense.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterateSummary {
    pub primal_value: f64,
    pub dual_value: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// `b·y + max(0, −λ_min(Σ y A − C))·T`, an upper bound on `<C, X>` for every
/// feasible `X` with `tr X ≤ T`, whatever the accuracy of `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct CertifiedBound {
    pub value: f64,
    /// Multipliers in the units of the original constraints.
    pub dual_values: Vec<f64>,
    /// The `max(0, −λ_min)·T` term included in `value`.
    pub correction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Known bound on `tr X` over the feasible set; enables [`CertifiedBound`].
    pub trace_bound: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_iter: 200, trace_bound: None }
    }
}

/// Result of [`preprocess`]: the reduced problem and how to map duals back.
#[derive(Clone, Debug)]
pub struct Preprocessed {
    pub problem: SdpProblem,
    /// For each kept constraint, its index in the original problem.
    pub kept: Vec<usize>,
    /// Frobenius norm the kept constraint was divided by.
    pub scale: Vec<f64>,
    pub original_len: usize,
}

impl Preprocessed {
    /// Maps multipliers of the reduced problem back to original units.
    pub fn restore_duals(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.original_len];
        for ((&k, &s), &v) in self.kept.iter().zip(&self.scale).zip(y) {
            out[k] = v / s;
        }
        out
    }
}

/// Search direction `(dX, dy, dS)` with primal and dual step lengths.
type Step = (DMatrix<f64>, DVector<f64>, DMatrix<f64>, f64, f64);

const DEPENDENCE_TOL: f64 = 1e-10;
const REFINE_STEPS: usize = 2;
/// Fraction of the distance to the cone boundary taken per step.
const STEP_FRACTION: f64 = 0.98;

/// Symmetrizes, drops linearly dependent constraints and scales the rest to
/// unit Frobenius norm.
///
/// Dependence is detected by Gram–Schmidt on the vectorized constraints in
/// their original order, so the earliest member of a dependent set survives.
/// A dependent constraint whose right-hand side is inconsistent with the kept
/// ones makes the problem infeasible.
pub fn preprocess(prob: &SdpProblem) -> Result<Preprocessed> {
    prob.validate()?;
    let n = prob.order;
    let dim = n * (n + 1) / 2;
    let svec_index = |i: usize, j: usize| -> usize { j * (j + 1) / 2 + i };
    let sqrt2 = std::f64::consts::SQRT_2;

    // orthonormal basis rows and their right-hand sides
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut basis_b: Vec<f64> = Vec::new();
    let mut kept = Vec::new();
    let mut scale = Vec::new();
    let mut out = SdpProblem::new(n, prob.objective.clone());

    for (k, c) in prob.constraints.iter().enumerate() {
        let mut v = vec![0.0; dim];
        for (i, j, val) in c.a.entries() {
            v[svec_index(i, j)] = if i == j { val } else { sqrt2 * val };
        }
        let norm0 = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            if c.b.abs() > DEPENDENCE_TOL {
                return Err(Error::Infeasible { g: f64::NAN, detail: format!("constraint {k} reads 0 = {}", c.b) });
            }
            log::warn!("dropping empty constraint {k}");
            continue;
        }
        let mut rb = c.b;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for (q, &qb) in basis.iter().zip(&basis_b) {
                let proj: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                if proj != 0.0 {
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= proj * qi;
                    }
                    rb -= proj * qb;
                }
            }
        }
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm <= DEPENDENCE_TOL * norm0 {
            if rb.abs() > 1e-8 * (1.0 + c.b.abs()) {
                return Err(Error::Infeasible {
                    g: f64::NAN,
                    detail: format!("constraint {k} is dependent but inconsistent (residual {rb:.3e})"),
                });
            }
            log::warn!("dropping linearly dependent constraint {k}");
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        basis.push(v);
        basis_b.push(rb / norm);
        kept.push(k);
        let s = c.a.frobenius_norm();
        scale.push(s);
        out.add_constraint(c.a.scaled(1.0 / s), c.b / s);
    }
    Ok(Preprocessed { problem: out, kept, scale, original_len: prob.constraints.len() })
}

/// Solves `prob` with the default options.
pub fn solve(prob: &SdpProblem) -> Result<SdpSolution> {
    solve_with(prob, SolverOptions::default())
}

pub fn solve_with(prob: &SdpProblem, opts: SolverOptions) -> Result<SdpSolution> {
    let pre = match preprocess(prob) {
        Ok(p) => p,
        Err(Error::Infeasible { detail, .. }) => {
            log::warn!("preprocessing: {detail}");
            let n = prob.order;
            return Ok(SdpSolution {
                status: SdpStatus::Infeasible,
                primal_value: f64::NAN,
                dual_value: f64::NAN,
                dual_values: vec![0.0; prob.constraints.len()],
                gap: f64::INFINITY,
                primal_residual: f64::INFINITY,
                dual_residual: f64::INFINITY,
                iterations: 0,
                x: DMatrix::zeros(n, n),
                s: DMatrix::zeros(n, n),
                certified: None,
                history: Vec::new(),
            });
        }
        Err(e) => return Err(e),
    };
    let mut sol = InteriorPoint::new(&pre.problem, opts).run();
    sol.dual_values = pre.restore_duals(&sol.dual_values);
    if let Some(c) = sol.certified.as_mut() {
        c.dual_values = pre.restore_duals(&c.dual_values);
    }
    Ok(sol)
}

struct InteriorPoint {
    opts: SolverOptions,
    n: usize,
    a_full: Vec<Vec<(usize, usize, f64)>>,
    b: DVector<f64>,
    /// minimization objective, `-C`
    cmin: DMatrix<f64>,
}

struct Iterate {
    x: DMatrix<f64>,
    y: DVector<f64>,
    s: DMatrix<f64>,
}

struct Scaling {
    g: DMatrix<f64>,
    d: DVector<f64>,
}

impl InteriorPoint {
    fn new(prob: &SdpProblem, opts: SolverOptions) -> Self {
        let n = prob.order;
        let a_full = prob.constraints.iter().map(|c| c.a.full_entries()).collect();
        let b = DVector::from_iterator(prob.constraints.len(), prob.constraints.iter().map(|c| c.b));
        let cmin = -prob.objective.to_dense(n);
        InteriorPoint { opts, n, a_full, b, cmin }
    }

    fn a_op(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.a_full.len(),
            self.a_full.iter().map(|ak| ak.iter().map(|&(i, j, v)| v * x[(i, j)]).sum()),
        )
    }

    fn a_adj(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (ak, &yk) in self.a_full.iter().zip(y.iter()) {
            if yk != 0.0 {
                for &(i, j, v) in ak {
                    m[(i, j)] += yk * v;
                }
            }
        }
        m
    }

    fn run(&self) -> SdpSolution {
        let n = self.n;
        let m = self.b.len();
        let tau = 1.0 + self.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut it =
            Iterate { x: DMatrix::identity(n, n) * tau, y: DVector::zeros(m), s: DMatrix::identity(n, n) * tau };
        let b_norm = self.b.norm();
        let c_norm = self.cmin.norm();

        let mut best: Option<(f64, SdpSolution)> = None;
        let mut certified: Option<CertifiedBound> = None;
        let mut history = Vec::new();
        let mut stalled = 0;
        for iter in 0..=self.opts.max_iter {
            let rp = &self.b - self.a_op(&it.x);
            let rd = &self.cmin - &it.s - self.a_adj(&it.y);
            let pobj = self.cmin.dot(&it.x);
            let dobj = self.b.dot(&it.y);
            let pinf = rp.norm() / (1.0 + b_norm);
            let dinf = rd.norm() / (1.0 + c_norm);
            // reported in the maximization sense
            let (primal, dual) = (-pobj, -dobj);
            let gap = (primal - dual).abs();
            let rel_gap = gap / (1.0 + primal.abs());
            let merit = rel_gap.max(pinf).max(dinf);
            history.push(IterateSummary {
                primal_value: primal,
                dual_value: dual,
                primal_residual: pinf,
                dual_residual: dinf,
            });
            if let Some(t) = self.opts.trace_bound {
                let z = &self.cmin - self.a_adj(&it.y);
                let correction = (-min_eigenvalue(&z)).max(0.0) * t;
                if certified.as_ref().is_none_or(|c| dual + correction < c.value) {
                    certified = Some(CertifiedBound {
                        value: dual + correction,
                        dual_values: it.y.iter().map(|v| -v).collect(),
                        correction,
                    });
                }
            }
            log::trace!(
                "sdp {iter}: primal {primal:.10} dual {dual:.10} gap {rel_gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e}"
            );

            let snapshot = |status| SdpSolution {
                status,
                primal_value: primal,
                dual_value: dual,
                dual_values: it.y.iter().map(|v| -v).collect(),
                gap,
                primal_residual: pinf,
                dual_residual: dinf,
                iterations: iter,
                x: it.x.clone(),
                s: it.s.clone(),
                certified: certified.clone(),
                history: history.clone(),
            };

            if rel_gap <= self.opts.tol && pinf <= self.opts.tol && dinf <= self.opts.tol {
                return snapshot(SdpStatus::Optimal);
            }
            if best.as_ref().is_none_or(|(bm, _)| merit < *bm) {
                best = Some((merit, snapshot(SdpStatus::MaxIter)));
            }
            if self.farkas_ray(&it) && pinf > self.opts.tol {
                return snapshot(SdpStatus::Infeasible);
            }
            if iter == self.opts.max_iter {
                break;
            }

            let Some(step) = self.step(&it, &rp, &rd) else {
                log::debug!("sdp: numerical breakdown at iteration {iter}");
                break;
            };
            let (dx, dy, ds, ap, ad) = step;
            if ap.max(ad) < 1e-10 {
                stalled += 1;
                if stalled >= 3 {
                    break;
                }
            } else {
                stalled = 0;
            }
            it.x += dx * ap;
            it.y += dy * ad;
            it.s += ds * ad;
            symmetrize(&mut it.x);
            symmetrize(&mut it.s);
        }
        let mut out = best.map(|(_, s)| s).expect("at least one iterate evaluated");
        out.certified = certified;
        out.history = history;
        out
    }

    /// Dual iterate points along an improving ray, certifying primal infeasibility.
    ///
    /// In minimization form the primal is infeasible when some `y` has
    /// `Σ y A ⪯ 0` and `b·y > 0`; the iterate qualifies once `λ_max(Σ y A)`
    /// is negligible against `b·y`.
    fn farkas_ray(&self, it: &Iterate) -> bool {
        let by = self.b.dot(&it.y);
        if by <= 0.0 {
            return false;
        }
        let aty = self.a_adj(&it.y);
        let lmax = SymmetricEigen::new(aty).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lmax <= 1e-8 * by && by > 1e6 * (1.0 + self.cmin.norm())
    }

    fn nt_scaling(&self, it: &Iterate) -> Option<Scaling> {
        let lx = Cholesky::new(it.x.clone())?.unpack();
        let ls = Cholesky::new(it.s.clone())?.unpack();
        let prod = ls.transpose() * &lx;
        let svd = prod.svd(true, true);
        let v = svd.v_t.as_ref()?.transpose();
        let d = svd.singular_values.clone();
        if d.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return None;
        }
        let inv_sqrt = DMatrix::from_diagonal(&d.map(|s| 1.0 / s.sqrt()));
        let g = &lx * &v * inv_sqrt;
        Some(Scaling { g, d })
    }

    /// Columns `svec(Gᵀ A_k G)` of the scaled constraint operator.
    fn scaled_operator(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let dim = n * (n + 1) / 2;
        let mut out = DMatrix::zeros(dim, self.a_full.len());
        let mut ak = DMatrix::zeros(n, n);
        for (k, entries) in self.a_full.iter().enumerate() {
            ak.fill(0.0);
            for &(i, j, v) in entries {
                // v · G[i, :]ᵀ G[j, :]
                for c in 0..n {
                    let gj = v * g[(j, c)];
                    if gj != 0.0 {
                        for r in 0..n {
                            ak[(r, c)] += g[(i, r)] * gj;
                        }
                    }
                }
            }
            out.set_column(k, &svec(&ak));
        }
        out
    }

    fn step(&self, it: &Iterate, rp: &DVector<f64>, rd: &DMatrix<f64>) -> Option<Step> {
        let n = self.n;
        let sc = self.nt_scaling(it)?;
        let mu = it.x.dot(&it.s) / n as f64;
        let gt = sc.g.transpose();
        let mut rd_t = &gt * rd * &sc.g;
        symmetrize(&mut rd_t);

        // Normal equations B Bᵀ Δy = r_p − B svec(R̃ − R̃_d) solved through a
        // thin QR of Bᵀ, so their conditioning is not squared.
        let qr = self.scaled_operator(&sc.g).qr();
        let (q, r) = (qr.q(), qr.r());
        let rdiag = r.diagonal().abs();
        let rmax = rdiag.max();
        if !(rdiag.min() > 1e-15 * rmax) {
            return None;
        }
        let rt_tr = r.transpose();
        let normal_solve = |rhs_p: &DVector<f64>, v: &DVector<f64>| -> Option<DVector<f64>> {
            let w = rt_tr.solve_lower_triangular(rhs_p)? - q.transpose() * v;
            r.solve_upper_triangular(&w)
        };

        // ΔX = G (R̃ − GᵀΔS G) Gᵀ keeps the small eigenvalues of a nearly
        // singular X accurate.
        let solve_dir = |rt: &DMatrix<f64>| -> Option<_> {
            let build = |dy: &DVector<f64>| {
                let ds = rd - self.a_adj(dy);
                let mut dst = &gt * &ds * &sc.g;
                symmetrize(&mut dst);
                let dxt = rt - &dst;
                let mut dx = &sc.g * &dxt * &gt;
                symmetrize(&mut dx);
                (dx, dxt, ds, dst)
            };
            let mut dy = normal_solve(rp, &svec(&(rt - &rd_t)))?;
            let mut dir = build(&dy);
            for _ in 0..REFINE_STEPS {
                let res = rp - self.a_op(&dir.0);
                if res.norm() <= 1e-15 * (1.0 + rp.norm()) {
                    break;
                }
                dy += normal_solve(&res, &DVector::zeros(q.nrows()))?;
                dir = build(&dy);
            }
            let (dx, dxt, ds, dst) = dir;
            Some((dx, dxt, dy, ds, dst))
        };

        // predictor: target complementarity 0
        let rt_aff = -DMatrix::from_diagonal(&sc.d);
        let (dx_a, dxt_a, _, ds_a, dst_a) = solve_dir(&rt_aff)?;
        let ap_a = scaled_step(&sc.d, &dxt_a).min(1.0);
        let ad_a = scaled_step(&sc.d, &dst_a).min(1.0);
        let mu_aff = (&it.x + &dx_a * ap_a).dot(&(&it.s + &ds_a * ad_a)) / n as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Mehrotra corrector
        let prod = &dxt_a * &dst_a;
        let mut rt = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut t = -0.5 * (prod[(i, j)] + prod[(j, i)]);
                if i == j {
                    t += sigma * mu - sc.d[i] * sc.d[i];
                }
                rt[(i, j)] = 2.0 * t / (sc.d[i] + sc.d[j]);
            }
        }
        let (dx, dxt, dy, ds, dst) = solve_dir(&rt)?;

        let ap = (STEP_FRACTION * scaled_step(&sc.d, &dxt)).min(1.0);
        let ad = (STEP_FRACTION * scaled_step(&sc.d, &dst)).min(1.0);
        Some((dx, dy, ds, ap, ad))
    }
}

/// Largest `α` with `X + α ΔX ⪰ 0` (infinite if `ΔX ⪰ 0`).
/// Largest `α` with `X + α ΔX ⪰ 0` (infinite if `ΔX ⪰ 0`).
/// Largest `α` with `diag(d) + α Δ ⪰ 0`.
fn scaled_step(d: &DVector<f64>, delta: &DMatrix<f64>) -> f64 {
    let n = d.len();
    let mut m = DMatrix::from_fn(n, n, |i, j| delta[(i, j)] / (d[i] * d[j]).sqrt());
    symmetrize(&mut m);
    let lmin = min_eigenvalue(&m);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

/// Packs the upper triangle with off-diagonals scaled by √2, so that
/// `svec(A)·svec(B) = <A, B>`.
fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = DVector::zeros(n * (n + 1) / 2);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            out[k] = if i == j { m[(i, i)] } else { std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]) };
            k += 1;
        }
    }
    out
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(i: usize, j: usize, c: f64) -> SymSparse {
        let mut m = SymSparse::new();
        m.add_cell(i, j, c);
        m
    }

    #[test]
    fn scalar_problem() {
        let mut p = SdpProblem::new(1, cell(0, 0, 1.0));
        p.add_constraint(cell(0, 0, 1.0), 0.7);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_value - 0.7).abs() < 1e-8);
    }

    #[test]
    fn off_diagonal_extreme() {
        let mut p = SdpProblem::new(2, cell(0, 1, 1.0));
        p.add_constraint(cell(0, 0, 1.0), 1.0);
        p.add_constraint(cell(1, 1, 1.0), 1.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_value - 1.0).abs() < 1e-7, "{}", sol.primal_value);
        assert!(min_eigenvalue(&sol.x) > -1e-9);
        assert!(min_eigenvalue(&sol.s) > -1e-9);
    }

    #[test]
    fn duplicate_constraint_is_dropped() {
        let mut p = SdpProblem::new(2, cell(0, 1, 1.0));
        p.add_constraint(cell(0, 0, 1.0), 1.0);
        p.add_constraint(cell(1, 1, 1.0), 1.0);
        p.add_constraint(cell(1, 1, 2.0), 2.0);
        let pre = preprocess(&p).unwrap();
        assert_eq!(pre.kept, vec![0, 1]);
        let sol = solve(&p).unwrap();
        assert!((sol.primal_value - 1.0).abs() < 1e-7);
        assert_eq!(sol.dual_values[2], 0.0);
        // aggregated multiplier still certifies the optimum
        assert!((sol.dual_values[0] + sol.dual_values[1] - sol.dual_value).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_constraints_are_infeasible() {
        let mut p = SdpProblem::new(1, cell(0, 0, 1.0));
        p.add_constraint(SymSparse::new(), 1.0);
        assert!(matches!(preprocess(&p), Err(Error::Infeasible { .. })));
        assert_eq!(solve(&p).unwrap().status, SdpStatus::Infeasible);

        let mut q = SdpProblem::new(2, cell(0, 0, 1.0));
        q.add_constraint(cell(0, 0, 1.0), 1.0);
        q.add_constraint(cell(0, 0, 2.0), 3.0);
        assert!(matches!(preprocess(&q), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn detects_psd_infeasibility() {
        // X_00 = 1, X_11 = 1, X_01 = 2 has no PSD completion
        let mut p = SdpProblem::new(2, cell(0, 0, 1.0));
        p.add_constraint(cell(0, 0, 1.0), 1.0);
        p.add_constraint(cell(1, 1, 1.0), 1.0);
        p.add_constraint(cell(0, 1, 1.0), 2.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn preprocessing_preserves_optimum() {
        let mut p = SdpProblem::new(3, cell(0, 1, 1.0));
        p.objective.add_cell(1, 2, 0.5);
        p.objective.add_cell(2, 2, -0.3);
        p.add_constraint(cell(0, 0, 3.0), 3.0);
        p.add_constraint(cell(1, 1, 0.2), 0.2);
        p.add_constraint(cell(2, 2, 1.0), 1.0);
        let mut c = cell(0, 2, 1.0);
        c.add_cell(1, 2, -1.0);
        p.add_constraint(c, 0.1);
        let reduced = preprocess(&p).unwrap().problem;
        let a = solve(&p).unwrap();
        let b = solve(&reduced).unwrap();
        assert_eq!(a.status, SdpStatus::Optimal);
        assert!((a.primal_value - b.primal_value).abs() < 1e-9);
    }

    #[test]
    fn dump_round_trip() {
        let mut p = SdpProblem::new(2, cell(0, 1, 1.0));
        p.add_constraint(cell(0, 0, 1.0), 1.0);
        p.add_constraint(cell(1, 1, 1.0), 0.5);
        let back = SdpProblem::from_dump(&p.to_dump()).unwrap();
        assert_eq!(back, p);
        assert!(SdpProblem::from_dump("0 0 0 1").is_err());
    }

    #[test]
    fn symmetrize_general_input() {
        let m = SymSparse::symmetrize(&[(0, 1, 2.0), (1, 0, 4.0), (1, 1, 1.0)]);
        let d = m.to_dense(2);
        assert_eq!(d[(0, 1)], 3.0);
        assert_eq!(d[(1, 0)], 3.0);
    }
}
