//! Dense log-barrier interior-point method for small smooth concave
//! maximization problems with linear rows, bounds and concave constraints.
//!
//! Equality rows are handled by infeasible-start Newton steps, so the start
//! only has to be strictly inside the inequalities and bounds; a phase-one
//! problem finds such a point when none is supplied.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Sparse linear row `Σ coef·v[idx]`.
pub type Row = Vec<(usize, f64)>;

/// A constraint `h(v) ≥ 0` with `h` concave and twice differentiable on its
/// domain. Only the variables listed in `support` may influence `h`.
pub trait ConcaveConstraint: Send + Sync {
    fn support(&self) -> &[usize];

    /// Value at `v`; `None` outside the domain of `h`.
    fn value(&self, v: &[f64]) -> Option<f64>;

    /// Value, gradient and Hessian over the support (row-major `k × k`).
    fn eval(&self, v: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Option<f64>;
}

/// `maximize c·v` subject to `rows_le`, `rows_eq`, `lower ≤ v ≤ upper` and
/// `h(v) ≥ 0` for every concave constraint.
#[derive(Default)]
pub struct ConvexProblem<'a> {
    pub c: Vec<f64>,
    pub rows_le: Vec<(Row, f64)>,
    pub rows_eq: Vec<(Row, f64)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub concave: Vec<Box<dyn ConcaveConstraint + 'a>>,
    /// Optional labels for inequality rows, used in infeasibility reports.
    pub row_labels: Vec<String>,
}

impl std::fmt::Debug for ConvexProblem<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvexProblem")
            .field("n", &self.c.len())
            .field("rows_le", &self.rows_le.len())
            .field("rows_eq", &self.rows_eq.len())
            .field("concave", &self.concave.len())
            .finish()
    }
}

impl ConvexProblem<'_> {
    pub fn new(n: usize) -> Self {
        Self {
            c: vec![0.0; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            ..Default::default()
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn add_le(&mut self, row: Row, rhs: f64, label: impl Into<String>) {
        self.rows_le.push((row, rhs));
        self.row_labels.push(label.into());
    }

    pub fn add_eq(&mut self, row: Row, rhs: f64) {
        self.rows_eq.push((row, rhs));
    }

    pub fn objective(&self, v: &[f64]) -> f64 {
        dot_dense(&self.c, v)
    }

    /// Largest violation over all inequality constraints, bounds included
    /// (positive when infeasible), and the label of the worst one.
    pub fn max_violation(&self, v: &[f64]) -> (f64, String) {
        let mut worst = (f64::NEG_INFINITY, String::new());
        let mut see = |val: f64, label: &dyn Fn() -> String| {
            if val > worst.0 {
                worst = (val, label());
            }
        };
        for (k, (row, b)) in self.rows_le.iter().enumerate() {
            see(row_dot(row, v) - b, &|| {
                self.row_labels.get(k).cloned().unwrap_or_else(|| format!("row {k}"))
            });
        }
        for (k, h) in self.concave.iter().enumerate() {
            let val = h.value(v).map(|x| -x).unwrap_or(f64::INFINITY);
            see(val, &|| format!("concave constraint {k}"));
        }
        for i in 0..v.len() {
            see(self.lower[i] - v[i], &|| format!("lower bound {i}"));
            see(v[i] - self.upper[i], &|| format!("upper bound {i}"));
        }
        worst
    }

    pub fn eq_residual(&self, v: &[f64]) -> f64 {
        self.rows_eq
            .iter()
            .map(|(r, b)| (row_dot(r, v) - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Newton steps allowed for one centering before it counts as stalled.
pub const MAX_CENTERING_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConfig {
    /// Target duality gap relative to `max(1, scale)`.
    pub gap_tol: f64,
    /// Magnitude the gap is measured against; `None` uses `|objective|`.
    pub gap_scale: Option<f64>,
    /// Tolerance on equality residuals.
    pub eq_tol: f64,
    pub max_newton: usize,
    pub mu: f64,
    pub tau0: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-7,
            gap_scale: None,
            eq_tol: 1e-9,
            max_newton: 2000,
            mu: 10.0,
            tau0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSolution {
    pub v: Vec<f64>,
    pub objective: f64,
    /// Duality gap bound `m/τ` at exit.
    pub gap: f64,
    pub eq_residual: f64,
    pub newton_iters: usize,
    pub converged: bool,
}

/// Solves `prob`. `start`, when given, must be strictly inside all
/// inequalities and bounds; otherwise a phase-one solve looks for one and
/// reports [`Error::Infeasible`] when none exists.
pub fn solve_convex(prob: &ConvexProblem, start: Option<&[f64]>, cfg: &BarrierConfig) -> Result<ConvexSolution> {
    let n = prob.n();
    if prob.lower.len() != n || prob.upper.len() != n {
        return Err(Error::InvalidInput("bound vectors must match the variable count".into()));
    }
    if let Some(i) = (0..n).find(|&i| !(prob.lower[i] < prob.upper[i])) {
        return Err(Error::InvalidInput(format!(
            "variable {i} has an empty interior ({} .. {})",
            prob.lower[i], prob.upper[i]
        )));
    }
    let eq = independent_rows(&prob.rows_eq, n);
    let v0 = match start {
        Some(s) if strictly_inside(prob, s) => s.to_vec(),
        _ => phase_one(prob, &eq, start, cfg)?,
    };
    centering_path(prob, &eq, v0, cfg, None)
}

/// Drops equality rows that are linearly dependent on earlier ones
/// (modified Gram–Schmidt on dense copies). An inconsistent dependent row is
/// kept so that the solver reports the violation.
fn independent_rows(rows: &[(Row, f64)], n: usize) -> Vec<(Row, f64)> {
    let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut out = Vec::new();
    for (row, b) in rows {
        let mut dense = vec![0.0; n];
        for &(i, a) in row {
            dense[i] += a;
        }
        let scale = dense.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale == 0.0 {
            continue;
        }
        let mut rhs = *b;
        for (q, qb) in &basis {
            let p = dot_dense(q, &dense);
            for (d, qi) in dense.iter_mut().zip(q) {
                *d -= p * qi;
            }
            rhs -= p * qb;
        }
        let norm = dense.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-10 * scale {
            if rhs.abs() > 1e-9 * (1.0 + b.abs()) {
                out.push((row.clone(), *b));
            }
            continue;
        }
        for d in &mut dense {
            *d /= norm;
        }
        basis.push((dense, rhs / norm));
        out.push((row.clone(), *b));
    }
    out
}

fn strictly_inside(prob: &ConvexProblem, v: &[f64]) -> bool {
    v.len() == prob.n()
        && v.iter().all(|x| x.is_finite())
        && (0..v.len()).all(|i| v[i] > prob.lower[i] && v[i] < prob.upper[i])
        && prob.rows_le.iter().all(|(r, b)| row_dot(r, v) < *b)
        && prob.concave.iter().all(|h| h.value(v).is_some_and(|x| x > 0.0))
}

/// Phase one: maximize `−s` with every inequality row and concave constraint
/// relaxed by `s`, starting from the box center (or the supplied point
/// clamped into the box).
fn phase_one(prob: &ConvexProblem, eq: &[(Row, f64)], start: Option<&[f64]>, cfg: &BarrierConfig) -> Result<Vec<f64>> {
    let n = prob.n();
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let (l, u) = (prob.lower[i], prob.upper[i]);
            let guess = start.map(|s| s[i]).unwrap_or(f64::NAN);
            interior_guess(l, u, guess)
        })
        .collect();
    // Concave constraints may be undefined at the guess; the caller's point
    // (if any) was clamped into the box, which is all the domain we rely on.
    let mut worst = 0.0f64;
    for (r, b) in &prob.rows_le {
        worst = worst.max(row_dot(r, &v) - b);
    }
    for h in &prob.concave {
        match h.value(&v) {
            Some(x) => worst = worst.max(-x),
            None => {
                return Err(Error::Numerical(
                    "phase one start lies outside the domain of a concave constraint".into(),
                ))
            }
        }
    }
    if worst < 0.0 {
        return Ok(v);
    }
    let s0 = worst.abs() + 1.0;
    let s_floor = -1.0;
    v.push(s0);
    let sv = n;

    let mut aux = ConvexProblem::new(n + 1);
    aux.c[sv] = -1.0;
    // Free directions would let the auxiliary barrier drift without bound,
    // so every variable is confined to a generous box around the start.
    for i in 0..n {
        let reach = 1e3 * (1.0 + v[i].abs());
        aux.lower[i] = prob.lower[i].max(v[i] - reach);
        aux.upper[i] = prob.upper[i].min(v[i] + reach);
    }
    aux.lower[sv] = s_floor;
    for (r, b) in &prob.rows_le {
        let mut row = r.clone();
        row.push((sv, -1.0));
        aux.rows_le.push((row, *b));
    }
    for h in &prob.concave {
        aux.concave.push(Box::new(Relaxed {
            inner: h.as_ref(),
            slack: sv,
            support: h.support().iter().copied().chain(std::iter::once(sv)).collect(),
        }));
    }
    let sol = centering_path(&aux, eq, v, cfg, Some((sv, -0.5)))?;
    let s = sol.v[sv];
    let feasible = s < 0.0 && sol.eq_residual <= cfg.eq_tol.max(1e-7);
    if !feasible {
        let (viol, label) = prob.max_violation(&sol.v[..n]);
        let what = if sol.eq_residual > cfg.eq_tol.max(1e-7) {
            "equality rows".to_string()
        } else {
            label
        };
        return Err(Error::Infeasible {
            constraint: what,
            detail: format!(
                "no strictly feasible point (phase-one slack {s:.3e}, violation {viol:.3e}, equality residual {:.3e})",
                sol.eq_residual
            ),
        });
    }
    let mut out = sol.v;
    out.truncate(n);
    Ok(out)
}

fn interior_guess(l: f64, u: f64, guess: f64) -> f64 {
    match (l.is_finite(), u.is_finite()) {
        (true, true) => {
            let margin = 0.05 * (u - l);
            if guess.is_finite() {
                guess.clamp(l + margin, u - margin)
            } else {
                0.5 * (l + u)
            }
        }
        (true, false) => {
            if guess.is_finite() && guess > l {
                guess.max(l + 1e-3 * (1.0 + l.abs()))
            } else {
                l + 1.0
            }
        }
        (false, true) => {
            if guess.is_finite() && guess < u {
                guess.min(u - 1e-3 * (1.0 + u.abs()))
            } else {
                u - 1.0
            }
        }
        (false, false) => {
            if guess.is_finite() {
                guess
            } else {
                0.0
            }
        }
    }
}

struct Relaxed<'a> {
    inner: &'a dyn ConcaveConstraint,
    slack: usize,
    support: Vec<usize>,
}

impl ConcaveConstraint for Relaxed<'_> {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn value(&self, v: &[f64]) -> Option<f64> {
        self.inner.value(v).map(|x| x + v[self.slack])
    }

    fn eval(&self, v: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Option<f64> {
        let k = self.support.len() - 1;
        let mut g = vec![0.0; k];
        let mut h = vec![0.0; k * k];
        let val = self.inner.eval(v, &mut g, &mut h)?;
        grad[..k].copy_from_slice(&g);
        grad[k] = 1.0;
        hess.iter_mut().for_each(|x| *x = 0.0);
        for a in 0..k {
            for b in 0..k {
                hess[a * (k + 1) + b] = h[a * k + b];
            }
        }
        Some(val + v[self.slack])
    }
}

/// Barrier term values of all inequality parts; `None` when `v` leaves the
/// domain.
fn barrier_value(prob: &ConvexProblem, v: &[f64], tau: f64) -> Option<f64> {
    let mut phi = -tau * prob.objective(v);
    for i in 0..v.len() {
        if prob.lower[i].is_finite() {
            let s = v[i] - prob.lower[i];
            if !(s > 0.0) {
                return None;
            }
            phi -= s.ln();
        }
        if prob.upper[i].is_finite() {
            let s = prob.upper[i] - v[i];
            if !(s > 0.0) {
                return None;
            }
            phi -= s.ln();
        }
    }
    for (r, b) in &prob.rows_le {
        let s = b - row_dot(r, v);
        if !(s > 0.0) {
            return None;
        }
        phi -= s.ln();
    }
    for h in &prob.concave {
        let s = h.value(v)?;
        if !(s > 0.0) {
            return None;
        }
        phi -= s.ln();
    }
    phi.is_finite().then_some(phi)
}

fn barrier_count(prob: &ConvexProblem) -> usize {
    let bounds = prob.lower.iter().filter(|x| x.is_finite()).count()
        + prob.upper.iter().filter(|x| x.is_finite()).count();
    bounds + prob.rows_le.len() + prob.concave.len()
}

/// Gradient and Hessian of the barrier function at a strictly feasible `v`.
fn barrier_derivatives(prob: &ConvexProblem, v: &[f64], tau: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = v.len();
    let mut g = DVector::from_iterator(n, prob.c.iter().map(|c| -tau * c));
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        if prob.lower[i].is_finite() {
            let s = v[i] - prob.lower[i];
            g[i] -= 1.0 / s;
            h[(i, i)] += 1.0 / (s * s);
        }
        if prob.upper[i].is_finite() {
            let s = prob.upper[i] - v[i];
            g[i] += 1.0 / s;
            h[(i, i)] += 1.0 / (s * s);
        }
    }
    for (r, b) in &prob.rows_le {
        let s = b - row_dot(r, v);
        for &(i, a) in r {
            g[i] += a / s;
        }
        let s2 = s * s;
        for &(i, a) in r {
            for &(j, c) in r {
                h[(i, j)] += a * c / s2;
            }
        }
    }
    let mut gbuf = Vec::new();
    let mut hbuf = Vec::new();
    for con in &prob.concave {
        let sup = con.support();
        let k = sup.len();
        gbuf.clear();
        gbuf.resize(k, 0.0);
        hbuf.clear();
        hbuf.resize(k * k, 0.0);
        let val = con.eval(v, &mut gbuf, &mut hbuf)?;
        if !(val > 0.0) {
            return None;
        }
        let inv = 1.0 / val;
        let inv2 = inv * inv;
        for a in 0..k {
            g[sup[a]] -= gbuf[a] * inv;
            for b in 0..k {
                h[(sup[a], sup[b])] += gbuf[a] * gbuf[b] * inv2 - hbuf[a * k + b] * inv;
            }
        }
    }
    Some((g, h))
}

/// Solves the equality-constrained Newton system
/// `[H Aᵀ; A 0] [dv; w] = [−g; −r]` through a Cholesky factor of `H` and the
/// Schur complement.
fn newton_system(
    h: DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    r: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = h.nrows();
    let diag_scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut chol: Option<Cholesky<f64, Dyn>> = None;
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut m = h.clone();
        if reg > 0.0 {
            for i in 0..n {
                m[(i, i)] += reg;
            }
        }
        if let Some(c) = Cholesky::new(m) {
            chol = Some(c);
            break;
        }
        reg = if reg == 0.0 { 1e-14 * diag_scale } else { reg * 100.0 };
    }
    let chol = chol?;
    let neg_g = -g;
    if a.nrows() == 0 {
        let dv = chol.solve(&neg_g);
        return Some((dv, DVector::zeros(0)));
    }
    let hinv_g = chol.solve(&neg_g);
    let hinv_at = chol.solve(&a.transpose());
    let s = a * &hinv_at;
    let rhs = a * &hinv_g + r;
    let m = s.nrows();
    let sd = (0..m).map(|i| s[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut w = None;
    let mut sreg = 0.0;
    for _ in 0..12 {
        let mut sm = s.clone();
        for i in 0..m {
            sm[(i, i)] += sreg;
        }
        if let Some(c) = Cholesky::new(sm) {
            w = Some(c.solve(&rhs));
            break;
        }
        sreg = if sreg == 0.0 { 1e-14 * sd } else { sreg * 100.0 };
    }
    let w = w?;
    let dv = hinv_g - hinv_at * &w;
    Some((dv, w))
}

/// Largest step in `[0, 1]` keeping linear slacks positive, shortened by
/// a fraction-to-boundary factor.
fn max_linear_step(prob: &ConvexProblem, v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha = 1.0f64;
    let mut limit = |slack: f64, rate: f64| {
        if rate < 0.0 {
            alpha = alpha.min(0.99 * slack / -rate);
        }
    };
    for i in 0..v.len() {
        if prob.lower[i].is_finite() {
            limit(v[i] - prob.lower[i], dv[i]);
        }
        if prob.upper[i].is_finite() {
            limit(prob.upper[i] - v[i], -dv[i]);
        }
    }
    for (r, b) in &prob.rows_le {
        limit(b - row_dot(r, v), -row_dot(r, dv));
    }
    alpha
}

/// Follows the central path. `early_exit = Some((idx, thr))` stops as soon as
/// `v[idx] < thr` with the equalities satisfied (used by phase one).
fn centering_path(
    prob: &ConvexProblem,
    eq: &[(Row, f64)],
    mut v: Vec<f64>,
    cfg: &BarrierConfig,
    early_exit: Option<(usize, f64)>,
) -> Result<ConvexSolution> {
    let n = v.len();
    let m = barrier_count(prob).max(1) as f64;
    let mut a = DMatrix::<f64>::zeros(eq.len(), n);
    let mut b = DVector::<f64>::zeros(eq.len());
    for (k, (row, rhs)) in eq.iter().enumerate() {
        for &(i, c) in row {
            a[(k, i)] += c;
        }
        b[k] = *rhs;
    }
    let eq_res = |v: &[f64]| -> DVector<f64> { &a * DVector::from_column_slice(v) - &b };

    let mut tau = cfg.tau0;
    let mut newton = 0usize;
    let mut nu = DVector::<f64>::zeros(eq.len());
    let mut converged = false;
    let mut stalled = false;
    'outer: loop {
        // Centering at the current tau.
        let mut inner = 0usize;
        loop {
            if newton >= cfg.max_newton {
                break 'outer;
            }
            if inner >= MAX_CENTERING_STEPS {
                // Ill-conditioned centering at large tau; take the point as is.
                stalled = true;
                break;
            }
            let Some((g, h)) = barrier_derivatives(prob, &v, tau) else {
                return Err(Error::Numerical("barrier derivatives left the domain".into()));
            };
            let r = eq_res(&v);
            let rnorm = r.amax();
            let feasible_mode = rnorm <= cfg.eq_tol;
            let rhs_r = if feasible_mode { DVector::zeros(r.len()) } else { r.clone() };
            let Some((dv, w)) = newton_system(h.clone(), &g, &a, &rhs_r) else {
                return Err(Error::Numerical("Newton system is singular".into()));
            };
            newton += 1;
            inner += 1;
            let dvs = dv.as_slice();
            let amax = max_linear_step(prob, &v, dvs);
            let phi0 = barrier_value(prob, &v, tau).ok_or_else(|| Error::Numerical("left the barrier domain".into()))?;

            if feasible_mode {
                let slope = g.dot(&dv);
                let decrement = -slope;
                if decrement <= 1e-10 || (decrement <= 1e-6 && inner > 50) {
                    nu = w;
                    break;
                }
                let mut alpha = amax;
                let mut accepted = false;
                for _ in 0..60 {
                    let trial: Vec<f64> = v.iter().zip(dvs).map(|(x, d)| x + alpha * d).collect();
                    if let Some(phi) = barrier_value(prob, &trial, tau) {
                        if phi <= phi0 + 0.01 * alpha * slope {
                            v = trial;
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                nu = w;
                if !accepted {
                    // No progress is possible at this precision.
                    stalled = true;
                    break;
                }
            } else {
                let dnu = &w - &nu;
                let dual_res = |v: &[f64], nu: &DVector<f64>| -> Option<f64> {
                    let g = barrier_gradient_only(prob, v, tau)?;
                    let rd = g + a.transpose() * nu;
                    let rp = eq_res(v);
                    Some((rd.norm_squared() + rp.norm_squared()).sqrt())
                };
                let r0 = dual_res(&v, &nu).unwrap_or(f64::INFINITY);
                let mut alpha = amax;
                let mut accepted = false;
                for _ in 0..60 {
                    let trial: Vec<f64> = v.iter().zip(dvs).map(|(x, d)| x + alpha * d).collect();
                    let nut = &nu + &dnu * alpha;
                    if barrier_value(prob, &trial, tau).is_some() {
                        if let Some(rt) = dual_res(&trial, &nut) {
                            if rt <= (1.0 - 0.01 * alpha) * r0 || eq_res(&trial).amax() < rnorm * (1.0 - 0.5 * alpha) {
                                v = trial;
                                nu = nut;
                                accepted = true;
                                break;
                            }
                        }
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    stalled = true;
                    break;
                }
            }
            if let Some((idx, thr)) = early_exit {
                if v[idx] < thr && eq_res(&v).amax() <= cfg.eq_tol {
                    converged = true;
                    break 'outer;
                }
            }
        }
        let obj = prob.objective(&v);
        let gap = m / tau;
        log::trace!(
            "tau {tau:.1e}: {inner} Newton steps, objective {obj:.6e}, eq residual {:.2e}, stalled {stalled}",
            eq_res(&v).amax()
        );
        let scale = cfg.gap_scale.unwrap_or(obj.abs()).max(1.0);
        if gap <= cfg.gap_tol * scale && eq_res(&v).amax() <= cfg.eq_tol {
            converged = true;
            break;
        }
        if stalled {
            // Centering could not improve further; accept if the gap is small.
            converged = gap <= 1e-3 * scale && eq_res(&v).amax() <= cfg.eq_tol;
            break;
        }
        tau *= cfg.mu;
    }
    let eq_residual = eq_res(&v).amax();
    Ok(ConvexSolution {
        objective: prob.objective(&v),
        gap: m / tau,
        eq_residual,
        newton_iters: newton,
        converged,
        v,
    })
}

fn barrier_gradient_only(prob: &ConvexProblem, v: &[f64], tau: f64) -> Option<DVector<f64>> {
    let n = v.len();
    let mut g = DVector::from_iterator(n, prob.c.iter().map(|c| -tau * c));
    for i in 0..n {
        if prob.lower[i].is_finite() {
            g[i] -= 1.0 / (v[i] - prob.lower[i]);
        }
        if prob.upper[i].is_finite() {
            g[i] += 1.0 / (prob.upper[i] - v[i]);
        }
    }
    for (r, b) in &prob.rows_le {
        let s = b - row_dot(r, v);
        for &(i, a) in r {
            g[i] += a / s;
        }
    }
    let mut gbuf = Vec::new();
    let mut hbuf = Vec::new();
    for con in &prob.concave {
        let sup = con.support();
        let k = sup.len();
        gbuf.clear();
        gbuf.resize(k, 0.0);
        hbuf.clear();
        hbuf.resize(k * k, 0.0);
        let val = con.eval(v, &mut gbuf, &mut hbuf)?;
        for a in 0..k {
            g[sup[a]] -= gbuf[a] / val;
        }
    }
    Some(g)
}

pub fn row_dot(row: &[(usize, f64)], v: &[f64]) -> f64 {
    row.iter().map(|&(i, a)| a * v[i]).sum()
}

fn dot_dense(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bound() {
        let mut p = ConvexProblem::new(1);
        p.c[0] = 1.0;
        p.upper[0] = 3.5;
        let sol = solve_convex(&p, None, &BarrierConfig::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.v[0] - 3.5).abs() < 1e-6, "{sol:?}");
    }

    struct LogSum {
        sup: Vec<usize>,
        gains: Vec<f64>,
        t: usize,
    }

    impl ConcaveConstraint for LogSum {
        fn support(&self) -> &[usize] {
            &self.sup
        }
        fn value(&self, v: &[f64]) -> Option<f64> {
            let mut s = -v[self.t];
            for (k, &i) in self.sup.iter().enumerate().filter(|(_, &i)| i != self.t) {
                let arg = 1.0 + self.gains[k] * v[i];
                if arg <= 0.0 {
                    return None;
                }
                s += arg.ln();
            }
            Some(s)
        }
        fn eval(&self, v: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Option<f64> {
            let k = self.sup.len();
            for (a, &i) in self.sup.iter().enumerate() {
                if i == self.t {
                    grad[a] = -1.0;
                } else {
                    let arg = 1.0 + self.gains[a] * v[i];
                    grad[a] = self.gains[a] / arg;
                    hess[a * k + a] = -(self.gains[a] / arg).powi(2);
                }
            }
            self.value(v)
        }
    }

    #[test]
    fn symmetric_power_split() {
        // max t s.t. t <= ln(1 + p_k) for both users, p1 + p2 <= 2.
        let mut p = ConvexProblem::new(3);
        p.c[0] = 1.0;
        p.lower[1] = 0.0;
        p.lower[2] = 0.0;
        p.add_le(vec![(1, 1.0), (2, 1.0)], 2.0, "budget");
        for k in 1..3 {
            p.concave.push(Box::new(LogSum {
                sup: vec![0, k],
                gains: vec![0.0, 1.0],
                t: 0,
            }));
        }
        let sol = solve_convex(&p, None, &BarrierConfig::default()).unwrap();
        assert!(sol.converged, "{sol:?}");
        assert!((sol.v[1] - sol.v[2]).abs() < 1e-5);
        assert!((sol.v[0] - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn equality_constrained_quadratic_like() {
        // max ln(1+x) + ln(1+y) s.t. x + y = 1, x, y >= 0 via epigraph.
        let mut p = ConvexProblem::new(3);
        p.c[0] = 1.0;
        p.lower[1] = 0.0;
        p.lower[2] = 0.0;
        p.add_eq(vec![(1, 1.0), (2, 1.0)], 1.0);
        p.add_eq(vec![(1, 2.0), (2, 2.0)], 2.0);
        p.concave.push(Box::new(LogSum {
            sup: vec![0, 1, 2],
            gains: vec![0.0, 1.0, 1.0],
            t: 0,
        }));
        let sol = solve_convex(&p, None, &BarrierConfig::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.v[1] - 0.5).abs() < 1e-5);
        assert!(sol.eq_residual < 1e-9);
    }

    #[test]
    fn infeasible_rows_reported() {
        let mut p = ConvexProblem::new(1);
        p.c[0] = 1.0;
        p.lower[0] = 0.0;
        p.upper[0] = 1.0;
        p.add_le(vec![(0, -1.0)], -2.0, "needs x >= 2");
        let err = solve_convex(&p, None, &BarrierConfig::default()).unwrap_err();
        match err {
            Error::Infeasible { constraint, .. } => assert_eq!(constraint, "needs x >= 2"),
            e => panic!("unexpected {e:?}"),
        }
    }

    /// Exhaustive vertex enumeration for a bounded LP in two or three variables.
    fn vertex_oracle(c: &[f64], rows: &[(Vec<f64>, f64)]) -> f64 {
        let n = c.len();
        let m = rows.len();
        let mut best = f64::NEG_INFINITY;
        let mut idx = vec![0usize; n];
        fn rec(start: usize, depth: usize, idx: &mut Vec<usize>, m: usize, f: &mut dyn FnMut(&[usize])) {
            if depth == idx.len() {
                f(idx);
                return;
            }
            for k in start..m {
                idx[depth] = k;
                rec(k + 1, depth + 1, idx, m, f);
            }
        }
        rec(0, 0, &mut idx, m, &mut |sel: &[usize]| {
            let a = DMatrix::from_fn(n, n, |r, cc| rows[sel[r]].0[cc]);
            let b = DVector::from_fn(n, |r, _| rows[sel[r]].1);
            if let Some(x) = a.lu().solve(&b) {
                let feasible = rows
                    .iter()
                    .all(|(row, rhs)| row.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-9);
                if feasible {
                    let val: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
                    best = best.max(val);
                }
            }
        });
        best
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let n = rng.random_range(2..=3);
            let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
            // A box keeps the LP bounded; random cuts pass near an interior point.
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                rows.push((e.clone(), 1.0));
                e[i] = -1.0;
                rows.push((e, 1.0));
            }
            for _ in 0..rng.random_range(1..4) {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                rows.push((a, rng.random_range(0.1..1.0)));
            }
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let oracle = vertex_oracle(&c, &rows);
            let mut p = ConvexProblem::new(n);
            p.c = c.clone();
            for (k, (row, b)) in rows.iter().enumerate() {
                p.add_le(row.iter().copied().enumerate().collect(), *b, format!("r{k}"));
            }
            let sol = solve_convex(&p, None, &BarrierConfig::default()).unwrap();
            assert!(sol.converged);
            assert!((sol.objective - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), "{} vs {}", sol.objective, oracle);
        }
    }

    #[test]
    fn dependent_equalities_are_dropped() {
        let rows = vec![
            (vec![(0, 1.0), (1, 1.0)], 1.0),
            (vec![(0, 2.0), (1, 2.0)], 2.0),
            (vec![(0, 1.0)], 0.25),
        ];
        assert_eq!(independent_rows(&rows, 2).len(), 2);
    }
}
