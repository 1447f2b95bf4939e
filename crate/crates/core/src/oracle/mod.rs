//! Independent optimality oracle for the redispatch problem
//!
//! ```text
//! minimize    1/2 p^T W p
//! subject to  L eta = p + pD              (power balance)
//!             S B C^T eta = psi           (inter-area exchange)
//!             pC_min <= p <= pC_max
//!             p_lo <= B C^T eta <= p_hi
//! ```
//!
//! solved by brute-force active-set enumeration: inequality subsets are
//! tried in order of increasing size, each candidate's equality-constrained
//! KKT system is solved directly, and the first primal and dual feasible
//! point is accepted. The problem is convex with a strictly convex objective
//! in `p`, so that point is the optimum. Everything is generic over
//! [`Scalar`] and runs unchanged in exact rational arithmetic.
//!
//! Matrices here are assembled densely from the model on purpose, sharing
//! no code with the controller they are used to check.

mod check;
mod lyapunov;

pub use check::{check_equilibrium, kkt_residuals, Residuals};
pub use lyapunov::{lyapunov_v0, lyapunov_v1, Equilibrium};

use crate::controller::ControllerState;
use crate::grid::Scenario;
use crate::linalg::DenseMatrix;
use crate::model::{AreaModel, LineModel, Model};
use crate::scalar::{Real, Scalar};

/// Largest active set the enumeration will consider.
pub const MAX_ACTIVE: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem<T> {
    pub n: usize,
    pub weight: Vec<T>,
    pub pc_min: Vec<T>,
    pub pc_max: Vec<T>,
    pub pd: Vec<T>,
    pub lines: Vec<LineModel<T>>,
    pub areas: Vec<AreaModel<T>>,
}

/// One inequality of the problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Inequality {
    ControlUpper(usize),
    ControlLower(usize),
    FlowUpper(usize),
    FlowLower(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
}

/// Optimum with the multipliers in the controller's sign convention:
/// stationarity reads `W p - lambda + W sigma_hi - W sigma_lo = 0` and
/// `C B (C^T lambda + mu_hi - mu_lo + S^T phi) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution<T> {
    pub status: Status,
    pub pc: Vec<T>,
    /// Gauge fixed with the first bus at zero.
    pub eta: Vec<T>,
    pub chi: Vec<T>,
    pub lambda: Vec<T>,
    pub sigma_hi: Vec<T>,
    pub sigma_lo: Vec<T>,
    pub mu_hi: Vec<T>,
    pub mu_lo: Vec<T>,
    pub phi: Vec<T>,
    pub active: Vec<Inequality>,
}

impl<T: Scalar> OracleSolution<T> {
    fn infeasible() -> Self {
        Self {
            status: Status::Infeasible,
            pc: Vec::new(),
            eta: Vec::new(),
            chi: Vec::new(),
            lambda: Vec::new(),
            sigma_hi: Vec::new(),
            sigma_lo: Vec::new(),
            mu_hi: Vec::new(),
            mu_lo: Vec::new(),
            phi: Vec::new(),
            active: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Controller state the primal-dual dynamics should settle at:
    /// `u = lambda`, line and area duals copied, estimator at the
    /// generator setpoints.
    pub fn controller_state(&self, model: &Model<T>) -> ControllerState<T> {
        ControllerState {
            eta: self.eta.clone(),
            u: self.lambda.clone(),
            mu_hi: self.mu_hi.clone(),
            mu_lo: self.mu_lo.clone(),
            phi: self.phi.clone(),
            pm_est: model.gens.iter().map(|&i| self.pc[i].clone()).collect(),
            alpha_est: model.gens.iter().map(|&i| self.pc[i].clone()).collect(),
        }
    }
}

impl<T: Real> OracleSolution<T> {
    /// Reads a controller state as a KKT candidate: `p = clamp(u / W)`,
    /// `lambda = u`, and the clamp's overshoot as the control multipliers.
    /// `eta` is re-gauged so the first bus sits at zero.
    pub fn from_controller(model: &Model<T>, cstate: &ControllerState<T>) -> Self {
        let mut pc = Vec::with_capacity(model.n);
        let mut sigma_hi = Vec::with_capacity(model.n);
        let mut sigma_lo = Vec::with_capacity(model.n);
        for i in 0..model.n {
            let free = cstate.u[i] / model.weight[i];
            let p = free.max(model.pc_min[i]).min(model.pc_max[i]);
            sigma_hi.push((free - p).max(T::zero()));
            sigma_lo.push((p - free).max(T::zero()));
            pc.push(p);
        }
        let base = cstate.eta.first().copied().unwrap_or_else(T::zero);
        Self {
            status: Status::Optimal,
            chi: cstate.chi(model),
            eta: cstate.eta.iter().map(|&e| e - base).collect(),
            lambda: cstate.u.clone(),
            pc,
            sigma_hi,
            sigma_lo,
            mu_hi: cstate.mu_hi.clone(),
            mu_lo: cstate.mu_lo.clone(),
            phi: cstate.phi.clone(),
            active: Vec::new(),
        }
    }
}

impl<T: Scalar> QpProblem<T> {
    pub fn new(model: &Model<T>, pd: Vec<T>) -> Self {
        assert_eq!(pd.len(), model.n, "disturbance length");
        Self {
            n: model.n,
            weight: model.weight.clone(),
            pc_min: model.pc_min.clone(),
            pc_max: model.pc_max.clone(),
            pd,
            lines: model.lines.clone(),
            areas: model.areas.clone(),
        }
    }

    pub fn from_scenario(scenario: &Scenario) -> Self {
        let model = Model::from_scenario(scenario);
        let pd = scenario
            .disturbance
            .iter()
            .map(|&d| T::from_f64_exact(d))
            .collect();
        Self::new(&model, pd)
    }

    pub fn m(&self) -> usize {
        self.lines.len()
    }

    fn is_fixed(&self, i: usize) -> bool {
        self.pc_min[i] == self.pc_max[i]
    }

    /// Inequalities in canonical order: control bounds of every bus with a
    /// nondegenerate range, then finite flow bounds.
    pub fn inequalities(&self) -> Vec<Inequality> {
        let mut out = Vec::new();
        for i in 0..self.n {
            if !self.is_fixed(i) {
                out.push(Inequality::ControlUpper(i));
                out.push(Inequality::ControlLower(i));
            }
        }
        for (j, l) in self.lines.iter().enumerate() {
            if l.upper.is_some() {
                out.push(Inequality::FlowUpper(j));
            }
            if l.lower.is_some() {
                out.push(Inequality::FlowLower(j));
            }
        }
        out
    }

    fn n_vars(&self) -> usize {
        2 * self.n - 1
    }

    fn eta_col(&self, bus: usize) -> Option<usize> {
        (bus > 0).then(|| self.n + bus - 1)
    }

    /// Row of `B C^T eta` for line `j` over the decision vector.
    fn flow_row(&self, j: usize) -> Vec<T> {
        let mut row = vec![T::zero(); self.n_vars()];
        let l = &self.lines[j];
        if let Some(c) = self.eta_col(l.from) {
            row[c] = row[c].clone() + l.b.clone();
        }
        if let Some(c) = self.eta_col(l.to) {
            row[c] = row[c].clone() - l.b.clone();
        }
        row
    }

    /// `(a, c)` with `a^T x <= c`.
    fn inequality_row(&self, ineq: Inequality) -> (Vec<T>, T) {
        let mut row = vec![T::zero(); self.n_vars()];
        match ineq {
            Inequality::ControlUpper(i) => {
                row[i] = T::one();
                (row, self.pc_max[i].clone())
            }
            Inequality::ControlLower(i) => {
                row[i] = -T::one();
                (row, -self.pc_min[i].clone())
            }
            Inequality::FlowUpper(j) => (
                self.flow_row(j),
                self.lines[j].upper.clone().expect("finite upper limit"),
            ),
            Inequality::FlowLower(j) => (
                self.flow_row(j).into_iter().map(|v| -v).collect(),
                -self.lines[j].lower.clone().expect("finite lower limit"),
            ),
        }
    }

    /// Equality rows: balance per bus, inter-area per constraint, then one
    /// row per bus whose control range is a single point.
    fn equalities(&self) -> (Vec<Vec<T>>, Vec<T>) {
        let nv = self.n_vars();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..self.n {
            let mut row = vec![T::zero(); nv];
            row[i] = T::one();
            rows.push(row);
            rhs.push(-self.pd[i].clone());
        }
        // -L eta added line by line to the balance rows.
        for l in &self.lines {
            for (bus, sign) in [(l.from, T::one()), (l.to, -T::one())] {
                for (other, s2) in [(l.from, T::one()), (l.to, -T::one())] {
                    if let Some(c) = self.eta_col(other) {
                        let v = sign.clone() * s2 * l.b.clone();
                        rows[bus][c] = rows[bus][c].clone() - v;
                    }
                }
            }
        }
        for a in &self.areas {
            let mut row = vec![T::zero(); nv];
            for &(j, s) in &a.members {
                let f = self.flow_row(j);
                let s = T::from_i8(s).expect("sign");
                for (r, v) in row.iter_mut().zip(f) {
                    *r = r.clone() + s.clone() * v;
                }
            }
            rows.push(row);
            rhs.push(a.psi.clone());
        }
        for i in 0..self.n {
            if self.is_fixed(i) {
                let mut row = vec![T::zero(); nv];
                row[i] = T::one();
                rows.push(row);
                rhs.push(self.pc_min[i].clone());
            }
        }
        (rows, rhs)
    }

    /// Aggregate reserve test: the balance rows sum to
    /// `sum p = -sum pD`, which the control boxes must be able to meet.
    pub fn reserve_sufficient(&self) -> bool {
        let need = self.pd.iter().fold(T::zero(), |a, d| a - d.clone());
        let hi = self.pc_max.iter().fold(T::zero(), |a, v| a + v.clone());
        let lo = self.pc_min.iter().fold(T::zero(), |a, v| a + v.clone());
        let tol = T::feasibility_tolerance();
        need <= hi + tol.clone() && need >= lo - tol
    }
}

/// Next lexicographic `k`-combination of `0..n` in place.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for pos in (0..k).rev() {
        if c[pos] < n - k + pos {
            c[pos] += 1;
            for q in pos + 1..k {
                c[q] = c[q - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves with inequalities enumerated in canonical order.
pub fn solve_equilibrium_qp<T: Scalar>(problem: &QpProblem<T>) -> OracleSolution<T> {
    let k = problem.inequalities().len();
    solve_equilibrium_qp_ordered(problem, &(0..k).collect::<Vec<_>>())
}

/// Solves with the inequalities visited in the order given by `order`, a
/// permutation of their canonical indices. Within a cardinality, subsets
/// are tried lexicographically in that order and the first feasible one
/// wins.
pub fn solve_equilibrium_qp_ordered<T: Scalar>(
    problem: &QpProblem<T>,
    order: &[usize],
) -> OracleSolution<T> {
    let ineqs = problem.inequalities();
    assert_eq!(
        order.len(),
        ineqs.len(),
        "order must permute the inequalities"
    );
    if !problem.reserve_sufficient() {
        return OracleSolution::infeasible();
    }
    let rows: Vec<(Vec<T>, T)> = ineqs.iter().map(|&q| problem.inequality_row(q)).collect();
    let (eq_rows, eq_rhs) = problem.equalities();
    let nv = problem.n_vars();
    let free = nv.saturating_sub(eq_rows.len());
    let max_card = MAX_ACTIVE.min(ineqs.len()).min(free);

    for card in 0..=max_card {
        let mut comb: Vec<usize> = (0..card).collect();
        loop {
            let mut active: Vec<usize> = comb.iter().map(|&c| order[c]).collect();
            active.sort_unstable();
            if let Some(sol) = try_active_set(problem, &ineqs, &rows, &eq_rows, &eq_rhs, &active) {
                return sol;
            }
            if card == 0 || !next_combination(&mut comb, ineqs.len()) {
                break;
            }
        }
    }
    OracleSolution::infeasible()
}

fn try_active_set<T: Scalar>(
    problem: &QpProblem<T>,
    ineqs: &[Inequality],
    rows: &[(Vec<T>, T)],
    eq_rows: &[Vec<T>],
    eq_rhs: &[T],
    active: &[usize],
) -> Option<OracleSolution<T>> {
    let n = problem.n;
    let nv = problem.n_vars();
    let ne = eq_rows.len();
    let na = active.len();
    let size = nv + ne + na;
    let mut k = DenseMatrix::<T>::zeros(size, size);
    let mut rhs = vec![T::zero(); size];
    for i in 0..n {
        k[(i, i)] = problem.weight[i].clone();
    }
    let constraint_rows = eq_rows
        .iter()
        .cloned()
        .zip(eq_rhs.iter().cloned())
        .chain(active.iter().map(|&a| rows[a].clone()));
    for (r, (row, c)) in constraint_rows.enumerate() {
        for (col, v) in row.into_iter().enumerate() {
            if !v.is_zero() {
                k[(nv + r, col)] = v.clone();
                k[(col, nv + r)] = v;
            }
        }
        rhs[nv + r] = c;
    }
    let z = k.solve(&rhs)?;
    let x = &z[..nv];
    let nu = &z[nv..nv + ne];
    let kappa = &z[nv + ne..];

    let tol = T::feasibility_tolerance();
    if kappa.iter().any(|v| *v < -tol.clone()) {
        return None;
    }
    for (idx, (row, c)) in rows.iter().enumerate() {
        if active.contains(&idx) {
            continue;
        }
        if dot(row, x) > c.clone() + tol.clone() {
            return None;
        }
    }

    let pc = x[..n].to_vec();
    let mut eta = vec![T::zero()];
    eta.extend_from_slice(&x[n..]);
    let chi = problem
        .lines
        .iter()
        .map(|l| l.b.clone() * (eta[l.from].clone() - eta[l.to].clone()))
        .collect();
    let lambda = nu[..n].iter().map(|v| -v.clone()).collect();
    let phi = nu[n..n + problem.areas.len()].to_vec();
    let mut sigma_hi = vec![T::zero(); n];
    let mut sigma_lo = vec![T::zero(); n];
    let mut fixed = nu[n + problem.areas.len()..].iter();
    for i in 0..n {
        if problem.is_fixed(i) {
            let v = fixed.next().expect("fixed-bus multiplier").clone();
            if v > T::zero() {
                sigma_hi[i] = v / problem.weight[i].clone();
            } else {
                sigma_lo[i] = -v / problem.weight[i].clone();
            }
        }
    }
    let mut mu_hi = vec![T::zero(); problem.m()];
    let mut mu_lo = vec![T::zero(); problem.m()];
    for (&a, kv) in active.iter().zip(kappa) {
        let kv = T::max_of(kv.clone(), T::zero());
        match ineqs[a] {
            Inequality::ControlUpper(i) => sigma_hi[i] = kv / problem.weight[i].clone(),
            Inequality::ControlLower(i) => sigma_lo[i] = kv / problem.weight[i].clone(),
            Inequality::FlowUpper(j) => mu_hi[j] = kv,
            Inequality::FlowLower(j) => mu_lo[j] = kv,
        }
    }
    Some(OracleSolution {
        status: Status::Optimal,
        pc,
        eta,
        chi,
        lambda,
        sigma_hi,
        sigma_lo,
        mu_hi,
        mu_lo,
        phi,
        active: active.iter().map(|&a| ineqs[a]).collect(),
    })
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// Dense incidence, susceptance and area matrices of a problem.
pub(crate) fn dense_matrices<T: Scalar>(
    n: usize,
    lines: &[LineModel<T>],
    areas: &[AreaModel<T>],
) -> (DenseMatrix<T>, DenseMatrix<T>, DenseMatrix<T>) {
    let m = lines.len();
    let mut c = DenseMatrix::<T>::zeros(n, m);
    let mut b = DenseMatrix::<T>::zeros(m, m);
    for (j, l) in lines.iter().enumerate() {
        c[(l.from, j)] = T::one();
        c[(l.to, j)] = -T::one();
        b[(j, j)] = l.b.clone();
    }
    let mut s = DenseMatrix::<T>::zeros(areas.len(), m);
    for (k, a) in areas.iter().enumerate() {
        for &(j, sign) in &a.members {
            s[(k, j)] = s[(k, j)].clone() + T::from_i8(sign).expect("sign");
        }
    }
    (c, b, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LineLimits;
    use crate::scalar::rational;
    use crate::testing::two_bus;
    use crate::Exact;

    fn two_bus_problem(lower: Option<f64>) -> QpProblem<f64> {
        let mut s = two_bus();
        s.disturbance = vec![-0.5, 0.0];
        if let Some(lo) = lower {
            s.network.lines[0].limits = LineLimits {
                lower: lo,
                upper: f64::INFINITY,
            };
        }
        QpProblem::from_scenario(&s)
    }

    #[test]
    fn symmetric_split() {
        let sol = solve_equilibrium_qp(&two_bus_problem(None));
        assert!(sol.is_optimal());
        assert!((sol.pc[0] - 0.25).abs() < 1e-12 && (sol.pc[1] - 0.25).abs() < 1e-12);
        assert!((sol.lambda[0] - sol.lambda[1]).abs() < 1e-12);
        assert!(sol.active.is_empty());
    }

    #[test]
    fn congested_split() {
        let sol = solve_equilibrium_qp(&two_bus_problem(Some(-0.1)));
        assert!((sol.pc[0] - 0.4).abs() < 1e-12 && (sol.pc[1] - 0.1).abs() < 1e-12);
        assert!(sol.mu_lo[0] > 0.0);
        assert_eq!(sol.active, vec![Inequality::FlowLower(0)]);
    }

    #[test]
    fn congested_split_exact() {
        let mut s = two_bus();
        s.disturbance = vec![-0.5, 0.0];
        s.network.lines[0].limits.lower = -0.125;
        let sol: OracleSolution<Exact> = solve_equilibrium_qp(&QpProblem::from_scenario(&s));
        assert_eq!(sol.pc, vec![rational(3, 8), rational(1, 8)]);
        assert_eq!(sol.mu_lo[0], rational(1, 4));
        assert_eq!(sol.chi[0], rational(-1, 8));
    }

    #[test]
    fn short_reserve_is_infeasible() {
        let mut s = two_bus();
        s.disturbance = vec![-3.0, 0.0];
        let sol: OracleSolution<f64> = solve_equilibrium_qp(&QpProblem::from_scenario(&s));
        assert_eq!(sol.status, Status::Infeasible);
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut c = vec![0, 1];
        let mut seen = vec![c.clone()];
        while next_combination(&mut c, 4) {
            seen.push(c.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }
}
