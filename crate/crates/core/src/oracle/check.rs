use std::fmt;

use super::{dense_matrices, OracleSolution, QpProblem};
use crate::controller::{ControllerConfig, ControllerState};
use crate::linalg::max_abs;
use crate::model::Model;
use crate::scalar::{Real, Scalar};

/// Named max-abs residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    pub entries: Vec<(&'static str, f64)>,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == name).map(|e| e.1)
    }

    pub fn all_below(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.1 <= tol)
    }

    /// Entries above `tol`.
    pub fn violations(&self, tol: f64) -> Vec<(&'static str, f64)> {
        self.entries.iter().copied().filter(|e| e.1 > tol).collect()
    }
}

impl fmt::Display for Residuals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, "  ")?;
            }
            write!(f, "{name}={v:.3e}")?;
        }
        Ok(())
    }
}

fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.clone() - y.clone())
        .collect()
}

fn hadamard<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.clone() * y.clone())
        .collect()
}

fn positive_part<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| T::max_of(acc, x.clone()))
}

/// KKT residuals of a candidate optimum:
///
/// * `stationarity_p`: `W p - lambda + W sigma_hi - W sigma_lo`
/// * `stationarity_eta`: `C B (C^T lambda + mu_hi - mu_lo + S^T phi)`
/// * `balance`: `C B C^T eta - p - pD`
/// * `slack_*`: complementary products of each bound and its multiplier
/// * `primal_*`: positive part of each bound violation
/// * `dual_sign_*`: positive part of negated multipliers
/// * `interarea`: `S chi - psi`
///
/// A multiplier on a missing flow bound counts as a slackness violation.
pub fn kkt_residuals<T: Scalar>(sol: &OracleSolution<T>, problem: &QpProblem<T>) -> Residuals {
    let (c, b, s) = dense_matrices(problem.n, &problem.lines, &problem.areas);
    let ct = c.transpose();
    let w = &problem.weight;
    let r = |v: &[T]| max_abs(v).to_f64_lossy();

    let st_p: Vec<T> = (0..problem.n)
        .map(|i| {
            w[i].clone() * sol.pc[i].clone() - sol.lambda[i].clone()
                + w[i].clone() * sol.sigma_hi[i].clone()
                - w[i].clone() * sol.sigma_lo[i].clone()
        })
        .collect();
    let mut inner = ct.mul_vec(&sol.lambda);
    let s_phi = s.transpose().mul_vec(&sol.phi);
    for j in 0..problem.m() {
        inner[j] =
            inner[j].clone() + sol.mu_hi[j].clone() - sol.mu_lo[j].clone() + s_phi[j].clone();
    }
    let st_eta = c.mul_vec(&b.mul_vec(&inner));

    let chi = b.mul_vec(&ct.mul_vec(&sol.eta));
    let lap_eta = c.mul_vec(&chi);
    let balance: Vec<T> = (0..problem.n)
        .map(|i| lap_eta[i].clone() - sol.pc[i].clone() - problem.pd[i].clone())
        .collect();

    let over_hi = sub(&sol.pc, &problem.pc_max);
    let under_lo = sub(&problem.pc_min, &sol.pc);

    let mut flow_slack_hi = Vec::new();
    let mut flow_slack_lo = Vec::new();
    let mut flow_over = Vec::new();
    let mut flow_under = Vec::new();
    for (j, l) in problem.lines.iter().enumerate() {
        match &l.upper {
            Some(p) => {
                flow_slack_hi.push(sol.mu_hi[j].clone() * (chi[j].clone() - p.clone()));
                flow_over.push(chi[j].clone() - p.clone());
            }
            None => flow_slack_hi.push(sol.mu_hi[j].clone()),
        }
        match &l.lower {
            Some(p) => {
                flow_slack_lo.push(sol.mu_lo[j].clone() * (p.clone() - chi[j].clone()));
                flow_under.push(p.clone() - chi[j].clone());
            }
            None => flow_slack_lo.push(sol.mu_lo[j].clone()),
        }
    }
    let neg = |v: &[T]| -> Vec<T> { v.iter().map(|x| -x.clone()).collect() };
    let area_res: Vec<T> = s
        .mul_vec(&chi)
        .into_iter()
        .zip(&problem.areas)
        .map(|(v, a)| v - a.psi.clone())
        .collect();

    Residuals {
        entries: vec![
            ("stationarity_p", r(&st_p)),
            ("stationarity_eta", r(&st_eta)),
            ("balance", r(&balance)),
            ("slack_control_hi", r(&hadamard(&sol.sigma_hi, &over_hi))),
            ("primal_control_hi", positive_part(&over_hi).to_f64_lossy()),
            ("slack_control_lo", r(&hadamard(&sol.sigma_lo, &under_lo))),
            ("primal_control_lo", positive_part(&under_lo).to_f64_lossy()),
            (
                "dual_sign_control",
                positive_part(&[neg(&sol.sigma_hi), neg(&sol.sigma_lo)].concat()).to_f64_lossy(),
            ),
            ("slack_flow_hi", r(&flow_slack_hi)),
            ("primal_flow_hi", positive_part(&flow_over).to_f64_lossy()),
            ("slack_flow_lo", r(&flow_slack_lo)),
            ("primal_flow_lo", positive_part(&flow_under).to_f64_lossy()),
            (
                "dual_sign_flow",
                positive_part(&[neg(&sol.mu_hi), neg(&sol.mu_lo)].concat()).to_f64_lossy(),
            ),
            ("interarea", r(&area_res)),
        ],
    }
}

fn gated<T: Real>(value: T, lo: T, hi: T, drift: T) -> T {
    // Written out again rather than shared with the controller.
    let blocked = (value >= hi && drift >= T::zero()) || (value <= lo && drift <= T::zero());
    if blocked {
        T::zero()
    } else {
        drift.abs()
    }
}

/// Residuals of the controller's equilibrium equations for disturbance
/// signal `q`, each stationary equation taken with its gate applied:
/// `eta`, `chi` (flow definition), `control` (clamp), `u`, `mu_hi`,
/// `mu_lo` and `phi`.
pub fn check_equilibrium<T: Real>(
    model: &Model<T>,
    config: &ControllerConfig<T>,
    cstate: &ControllerState<T>,
    q: &[T],
) -> Residuals {
    let (c, b, s) = dense_matrices(model.n, &model.lines, &model.areas);
    let ct = c.transpose();
    let r = |v: &[T]| max_abs(v).to_f64_lossy();

    let mut inner = ct.mul_vec(&cstate.u);
    let s_phi = s.transpose().mul_vec(&cstate.phi);
    for j in 0..model.m() {
        inner[j] = -inner[j] - cstate.mu_hi[j] + cstate.mu_lo[j] - s_phi[j];
    }
    let eta_rate = c.mul_vec(&b.mul_vec(&inner));

    let chi = b.mul_vec(&ct.mul_vec(&cstate.eta));
    let chi_res = sub(&cstate.chi(model), &chi);

    let pc: Vec<T> = (0..model.n)
        .map(|i| {
            (cstate.u[i] / model.weight[i])
                .max(model.pc_min[i])
                .min(model.pc_max[i])
        })
        .collect();
    let control_res = sub(&crate::controller::control_output(model, cstate), &pc);

    let c_chi = c.mul_vec(&chi);
    let u_res: Vec<T> = (0..model.n)
        .map(|i| {
            gated(
                cstate.u[i],
                config.k_u_lo[i],
                config.k_u_hi[i],
                c_chi[i] - pc[i] - q[i],
            )
        })
        .collect();
    let mut mu_hi_res = Vec::new();
    let mut mu_lo_res = Vec::new();
    for (j, l) in model.lines.iter().enumerate() {
        mu_hi_res.push(match l.upper {
            Some(p) => gated(cstate.mu_hi[j], T::zero(), config.k_mu_hi[j], chi[j] - p),
            None => cstate.mu_hi[j].abs(),
        });
        mu_lo_res.push(match l.lower {
            Some(p) => gated(cstate.mu_lo[j], T::zero(), config.k_mu_lo[j], p - chi[j]),
            None => cstate.mu_lo[j].abs(),
        });
    }
    let s_chi = s.mul_vec(&chi);
    let phi_res: Vec<T> = (0..model.n_areas())
        .map(|k| {
            gated(
                cstate.phi[k],
                config.k_phi_lo[k],
                config.k_phi_hi[k],
                s_chi[k] - model.areas[k].psi,
            )
        })
        .collect();

    Residuals {
        entries: vec![
            ("eta", r(&eta_rate)),
            ("chi", r(&chi_res)),
            ("control", r(&control_res)),
            ("u", r(&u_res)),
            ("mu_hi", r(&mu_hi_res)),
            ("mu_lo", r(&mu_lo_res)),
            ("phi", r(&phi_res)),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LineLimits;
    use crate::oracle::solve_equilibrium_qp;
    use crate::testing::{path3, two_bus};

    fn congested() -> crate::grid::Scenario {
        let mut s = two_bus();
        s.disturbance = vec![-0.5, 0.0];
        s.network.lines[0].limits = LineLimits {
            lower: -0.1,
            upper: f64::INFINITY,
        };
        s
    }

    #[test]
    fn optimum_has_zero_residuals() {
        let p = QpProblem::<f64>::from_scenario(&congested());
        let sol = solve_equilibrium_qp(&p);
        let res = kkt_residuals(&sol, &p);
        assert!(res.all_below(1e-12), "{res}");
    }

    #[test]
    fn perturbed_control_is_detected() {
        let p = QpProblem::<f64>::from_scenario(&congested());
        let mut sol = solve_equilibrium_qp(&p);
        sol.pc[1] += 0.01;
        let res = kkt_residuals(&sol, &p);
        assert!(res.get("stationarity_p").unwrap() >= 1e-3 || res.get("balance").unwrap() >= 1e-3);
    }

    #[test]
    fn negative_dual_is_flagged() {
        let p = QpProblem::<f64>::from_scenario(&congested());
        let mut sol = solve_equilibrium_qp(&p);
        sol.mu_hi[0] = -0.2;
        let res = kkt_residuals(&sol, &p);
        assert!(res.get("dual_sign_flow").unwrap() > 0.1);
    }

    #[test]
    fn mapped_optimum_is_controller_equilibrium() {
        for s in [congested(), {
            let mut s = path3(&[1.0, 2.0]);
            s.disturbance = vec![0.0, -0.6, 0.0];
            s
        }] {
            let m: Model<f64> = Model::from_scenario(&s);
            let cfg = ControllerConfig::from_scenario(&s);
            let p = QpProblem::new(&m, s.disturbance.clone());
            let sol = solve_equilibrium_qp(&p);
            let eq = sol.controller_state(&m);
            let res = check_equilibrium(&m, &cfg, &eq, &s.disturbance);
            assert!(res.all_below(1e-8), "{res}");
        }
    }

    #[test]
    fn mapped_optimum_reads_back_through_the_controller() {
        let s = congested();
        let m: Model<f64> = Model::from_scenario(&s);
        let p = QpProblem::new(&m, s.disturbance.clone());
        let sol = solve_equilibrium_qp(&p);
        let back = OracleSolution::from_controller(&m, &sol.controller_state(&m));
        let res = kkt_residuals(&back, &p);
        assert!(res.all_below(1e-12), "{res}");
    }

    #[test]
    fn transient_state_shows_u_residual() {
        let s = congested();
        let m: Model<f64> = Model::from_scenario(&s);
        let cfg = ControllerConfig::from_scenario(&s);
        let zero = ControllerState::zeros(&m);
        let res = check_equilibrium(&m, &cfg, &zero, &s.disturbance);
        assert!(res.get("u").unwrap() > 0.1);
    }
}
