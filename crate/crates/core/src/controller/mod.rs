//! Distributed primal-dual frequency controller with congestion management
//! and inter-area flow control.
//!
//! State per bus: an angle-like variable `eta` and a primal integrator `u`
//! whose scaled clamp is the control output. Per bounded line: dual
//! variables for the upper and lower flow limits. Per inter-area constraint:
//! one dual variable. Every integrator except `eta` lives in a finite box and
//! stops at its boundary while the drift points outward.
//!
//! The disturbance is never read directly in [`DisturbanceMode::Estimator`];
//! it is reconstructed from frequency, frequency slope, network injections
//! and a copy of the turbine/governor chain driven by the control output.

mod config;
pub mod distributed;

pub use config::{
    check_gain_conditions, default_gate_bounds, ControllerConfig, ControllerSettings,
    DisturbanceMode, GainViolation, RocofMode,
};
pub use distributed::{
    agents, assemble, distributed_derivative, gather_messages, local_update_view, local_view,
    matches_centralized, required_messages, Agent, Fragment, LocalView, MessageKey, Messages,
    MissingMessage,
};

use crate::integrate::{all_finite, rk4_step, IntegrationError};
use crate::model::Model;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState<T> {
    pub eta: Vec<T>,
    pub u: Vec<T>,
    pub mu_hi: Vec<T>,
    pub mu_lo: Vec<T>,
    pub phi: Vec<T>,
    /// Estimated mechanical power, by generator slot.
    pub pm_est: Vec<T>,
    /// Estimated valve position, by generator slot.
    pub alpha_est: Vec<T>,
}

impl<T: Real> ControllerState<T> {
    pub fn zeros(model: &Model<T>) -> Self {
        let z = |k| vec![T::zero(); k];
        Self {
            eta: z(model.n),
            u: z(model.n),
            mu_hi: z(model.m()),
            mu_lo: z(model.m()),
            phi: z(model.n_areas()),
            pm_est: z(model.n_gens()),
            alpha_est: z(model.n_gens()),
        }
    }

    pub fn len(model: &Model<T>) -> usize {
        2 * model.n + 2 * model.m() + model.n_areas() + 2 * model.n_gens()
    }

    pub fn write_to(&self, out: &mut Vec<T>) {
        for part in [
            &self.eta,
            &self.u,
            &self.mu_hi,
            &self.mu_lo,
            &self.phi,
            &self.pm_est,
            &self.alpha_est,
        ] {
            out.extend_from_slice(part);
        }
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut v = Vec::new();
        self.write_to(&mut v);
        v
    }

    pub fn from_slice(model: &Model<T>, x: &[T]) -> Self {
        let mut rest = x;
        let mut take = |k: usize| {
            let (head, tail) = rest.split_at(k);
            rest = tail;
            head.to_vec()
        };
        Self {
            eta: take(model.n),
            u: take(model.n),
            mu_hi: take(model.m()),
            mu_lo: take(model.m()),
            phi: take(model.n_areas()),
            pm_est: take(model.n_gens()),
            alpha_est: take(model.n_gens()),
        }
    }

    /// Controller flows `chi = B C^T eta`.
    pub fn chi(&self, model: &Model<T>) -> Vec<T> {
        model
            .lines
            .iter()
            .map(|l| line_chi(l.b, self.eta[l.from], self.eta[l.to]))
            .collect()
    }

    /// Largest distance by which any gated variable leaves its box
    /// (zero when every box invariant holds).
    pub fn box_violation(&self, model: &Model<T>, config: &ControllerConfig<T>) -> T {
        let mut worst = T::zero();
        let mut check = |v: T, lo: T, hi: T| {
            worst = worst.max(lo - v).max(v - hi);
        };
        for i in 0..model.n {
            check(self.u[i], config.k_u_lo[i], config.k_u_hi[i]);
        }
        for j in 0..model.m() {
            check(self.mu_hi[j], T::zero(), config.k_mu_hi[j]);
            check(self.mu_lo[j], T::zero(), config.k_mu_lo[j]);
        }
        for k in 0..model.n_areas() {
            check(self.phi[k], config.k_phi_lo[k], config.k_phi_hi[k]);
        }
        worst
    }
}

/// Plant-side signals available to the controller.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurements<T> {
    /// Frequency deviation per bus.
    pub omega: Vec<T>,
    /// Frequency slope per generator slot.
    pub omega_dot_g: Vec<T>,
    /// Power received from the network per bus, `-C p`.
    pub pe: Vec<T>,
    /// Control currently applied per bus.
    pub pc_applied: Vec<T>,
}

impl<T: Real> Measurements<T> {
    pub fn zeros(model: &Model<T>) -> Self {
        Self {
            omega: vec![T::zero(); model.n],
            omega_dot_g: vec![T::zero(); model.n_gens()],
            pe: vec![T::zero(); model.n],
            pc_applied: vec![T::zero(); model.n],
        }
    }
}

pub fn clamp_scalar<T: Real>(x: T, lo: T, hi: T) -> T {
    hi.min(lo.max(x))
}

/// Elementwise `min(hi, max(lo, x))`.
pub fn clamp<T: Real>(x: &[T], lo: &[T], hi: &[T]) -> Vec<T> {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&x, (&lo, &hi))| clamp_scalar(x, lo, hi))
        .collect()
}

/// `p^C = clamp(W^-1 u, pC_min, pC_max)`.
pub fn control_output<T: Real>(model: &Model<T>, cstate: &ControllerState<T>) -> Vec<T> {
    (0..model.n)
        .map(|i| bus_control(model, i, cstate.u[i]))
        .collect()
}

#[inline]
pub(crate) fn bus_control<T: Real>(model: &Model<T>, i: usize, u: T) -> T {
    clamp_scalar(u / model.weight[i], model.pc_min[i], model.pc_max[i])
}

/// Disturbance reconstruction from local measurements:
/// generators `M w' + D w - p^E - p~^M`, loads `D w - p^E - p^C`.
pub fn estimate_disturbance<T: Real>(
    model: &Model<T>,
    meas: &Measurements<T>,
    cstate: &ControllerState<T>,
) -> Vec<T> {
    (0..model.n)
        .map(|i| {
            let base = model.damping[i] * meas.omega[i] - meas.pe[i];
            match model.gen_slot[i] {
                Some(s) => model.inertia[s] * meas.omega_dot_g[s] + base - cstate.pm_est[s],
                None => base - meas.pc_applied[i],
            }
        })
        .collect()
}

/// First-order copies of the turbine and governor driven by the generator
/// controls. Returns `(d pm_est, d alpha_est)`.
pub fn estimator_derivative<T: Real>(
    model: &Model<T>,
    cstate: &ControllerState<T>,
    pc: &[T],
) -> (Vec<T>, Vec<T>) {
    model
        .gens
        .iter()
        .enumerate()
        .map(|(s, &i)| {
            (
                (-cstate.pm_est[s] + cstate.alpha_est[s]) / model.turbine_tc_est[s],
                (-cstate.alpha_est[s] + pc[i]) / model.governor_tc_est[s],
            )
        })
        .unzip()
}

/// Projection gate: 0 while the value sits on (or past) a bound and the
/// drift pushes further out, 1 otherwise.
#[inline]
pub fn gate<T: Real>(value: T, lo: T, hi: T, drift: T) -> T {
    if (value >= hi && drift >= T::zero()) || (value <= lo && drift <= T::zero()) {
        T::zero()
    } else {
        T::one()
    }
}

// The row helpers below are shared by the centralized derivative and the
// per-agent view so both produce identical bits.

#[inline]
pub(crate) fn line_chi<T: Real>(b: T, eta_from: T, eta_to: T) -> T {
    b * (eta_from - eta_to)
}

/// `(S^T phi)_j` folded over the line's area memberships in area order.
#[inline]
pub(crate) fn area_pull<T: Real>(memberships: &[(usize, i8)], phi: impl Fn(usize) -> T) -> T {
    memberships.iter().fold(T::zero(), |acc, &(k, s)| {
        if s > 0 {
            acc + phi(k)
        } else if s < 0 {
            acc - phi(k)
        } else {
            acc
        }
    })
}

/// Per-line factor of the eta dynamics: `b (-(u_f - u_t) - mu_hi + mu_lo - (S^T phi))`.
#[inline]
pub(crate) fn line_eta_term<T: Real>(b: T, u_from: T, u_to: T, mu_hi: T, mu_lo: T, pull: T) -> T {
    b * (-(u_from - u_to) - mu_hi + mu_lo - pull)
}

/// Signed incidence sum over a bus's lines in line order.
#[inline]
pub(crate) fn incidence_sum<T: Real>(incident: &[(usize, i8)], value: impl Fn(usize) -> T) -> T {
    incident.iter().fold(T::zero(), |acc, &(j, c)| {
        if c > 0 {
            acc + value(j)
        } else {
            acc - value(j)
        }
    })
}

#[inline]
pub(crate) fn u_rate<T: Real>(u: T, lo: T, hi: T, c_chi: T, pc: T, q: T) -> T {
    let drift = c_chi - pc - q;
    gate(u, lo, hi, drift) * drift
}

/// Upper-limit dual rate; identically zero on lines without that limit.
#[inline]
pub(crate) fn mu_hi_rate<T: Real>(mu: T, k: T, chi: T, upper: Option<T>) -> T {
    match upper {
        Some(p) => {
            let drift = chi - p;
            gate(mu, T::zero(), k, drift) * drift
        }
        None => T::zero(),
    }
}

#[inline]
pub(crate) fn mu_lo_rate<T: Real>(mu: T, k: T, chi: T, lower: Option<T>) -> T {
    match lower {
        Some(p) => {
            let drift = p - chi;
            gate(mu, T::zero(), k, drift) * drift
        }
        None => T::zero(),
    }
}

#[inline]
pub(crate) fn phi_rate<T: Real>(
    phi: T,
    lo: T,
    hi: T,
    members: &[(usize, i8)],
    chi: impl Fn(usize) -> T,
    psi: T,
) -> T {
    let s_chi = members.iter().fold(T::zero(), |acc, &(j, s)| {
        if s > 0 {
            acc + chi(j)
        } else if s < 0 {
            acc - chi(j)
        } else {
            acc
        }
    });
    let drift = s_chi - psi;
    gate(phi, lo, hi, drift) * drift
}

/// Right-hand side of the controller, with `q` standing in for the
/// disturbance. The returned state holds rates, not values; the estimator
/// rates are included.
pub fn controller_derivative<T: Real>(
    model: &Model<T>,
    config: &ControllerConfig<T>,
    cstate: &ControllerState<T>,
    q: &[T],
) -> ControllerState<T> {
    let chi = cstate.chi(model);
    let pc = control_output(model, cstate);
    let terms: Vec<T> = model
        .lines
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let pull = area_pull(&model.line_areas[j], |k| cstate.phi[k]);
            line_eta_term(
                l.b,
                cstate.u[l.from],
                cstate.u[l.to],
                cstate.mu_hi[j],
                cstate.mu_lo[j],
                pull,
            )
        })
        .collect();
    let eta = (0..model.n)
        .map(|i| incidence_sum(&model.incident[i], |j| terms[j]))
        .collect();
    let u = (0..model.n)
        .map(|i| {
            let c_chi = incidence_sum(&model.incident[i], |j| chi[j]);
            u_rate(
                cstate.u[i],
                config.k_u_lo[i],
                config.k_u_hi[i],
                c_chi,
                pc[i],
                q[i],
            )
        })
        .collect();
    let mu_hi = model
        .lines
        .iter()
        .enumerate()
        .map(|(j, l)| mu_hi_rate(cstate.mu_hi[j], config.k_mu_hi[j], chi[j], l.upper))
        .collect();
    let mu_lo = model
        .lines
        .iter()
        .enumerate()
        .map(|(j, l)| mu_lo_rate(cstate.mu_lo[j], config.k_mu_lo[j], chi[j], l.lower))
        .collect();
    let phi = model
        .areas
        .iter()
        .enumerate()
        .map(|(k, a)| {
            phi_rate(
                cstate.phi[k],
                config.k_phi_lo[k],
                config.k_phi_hi[k],
                &a.members,
                |j| chi[j],
                a.psi,
            )
        })
        .collect();
    let (pm_est, alpha_est) = estimator_derivative(model, cstate, &pc);
    ControllerState {
        eta,
        u,
        mu_hi,
        mu_lo,
        phi,
        pm_est,
        alpha_est,
    }
}

/// Scales the primal-dual rates by the controller time scale; estimator
/// rates are physical and stay unscaled.
pub(crate) fn apply_time_scale<T: Real>(d: &mut ControllerState<T>, scale: T) {
    if scale == T::one() {
        return;
    }
    for v in d
        .eta
        .iter_mut()
        .chain(&mut d.u)
        .chain(&mut d.mu_hi)
        .chain(&mut d.mu_lo)
        .chain(&mut d.phi)
    {
        *v = *v * scale;
    }
}

/// Puts every gated variable back in its box; duals of absent limits are
/// pinned at zero.
pub fn project<T: Real>(
    model: &Model<T>,
    config: &ControllerConfig<T>,
    c: &mut ControllerState<T>,
) {
    for i in 0..model.n {
        c.u[i] = clamp_scalar(c.u[i], config.k_u_lo[i], config.k_u_hi[i]);
    }
    for (j, l) in model.lines.iter().enumerate() {
        c.mu_hi[j] = if l.upper.is_some() {
            clamp_scalar(c.mu_hi[j], T::zero(), config.k_mu_hi[j])
        } else {
            T::zero()
        };
        c.mu_lo[j] = if l.lower.is_some() {
            clamp_scalar(c.mu_lo[j], T::zero(), config.k_mu_lo[j])
        } else {
            T::zero()
        };
    }
    for k in 0..model.n_areas() {
        c.phi[k] = clamp_scalar(c.phi[k], config.k_phi_lo[k], config.k_phi_hi[k]);
    }
}

/// Disturbance signal the controller uses for given measurements.
pub fn disturbance_signal<T: Real>(
    model: &Model<T>,
    config: &ControllerConfig<T>,
    cstate: &ControllerState<T>,
    meas: &Measurements<T>,
    true_disturbance: &[T],
) -> Vec<T> {
    match config.mode {
        DisturbanceMode::Estimator => estimate_disturbance(model, meas, cstate),
        DisturbanceMode::Known => true_disturbance.to_vec(),
    }
}

/// Advances the controller one RK4 step with measurements held over the
/// step, then projects onto the boxes.
pub fn controller_step<T: Real>(
    model: &Model<T>,
    config: &ControllerConfig<T>,
    cstate: &ControllerState<T>,
    meas: &Measurements<T>,
    true_disturbance: &[T],
    dt: T,
) -> Result<ControllerState<T>, IntegrationError> {
    // Written negated so NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(dt > T::zero()) {
        return Err(IntegrationError::BadStep(dt.to_f64_lossy()));
    }
    let x = rk4_step(T::zero(), &cstate.to_vec(), dt, |_, x, dx| {
        let c = ControllerState::from_slice(model, x);
        let q = disturbance_signal(model, config, &c, meas, true_disturbance);
        let mut d = controller_derivative(model, config, &c, &q);
        apply_time_scale(&mut d, config.time_scale);
        dx.copy_from_slice(&d.to_vec());
    });
    if !all_finite(&x) {
        return Err(IntegrationError::Blowup {
            time: dt.to_f64_lossy(),
        });
    }
    let mut next = ControllerState::from_slice(model, &x);
    project(model, config, &mut next);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::two_bus;

    #[test]
    fn clamp_cases() {
        assert_eq!(clamp_scalar(0.5, 0.0, 1.0), 0.5);
        assert_eq!(clamp_scalar(2.0, 0.0, 1.0), 1.0);
        assert_eq!(clamp_scalar(-3.0, -1.0, 1.0), -1.0);
        assert_eq!(clamp(&[0.5, 2.0], &[0.0, 0.0], &[1.0, 1.0]), vec![0.5, 1.0]);
    }

    #[test]
    fn control_output_cases() {
        let mut s = two_bus();
        s.network.buses[1].control.min = -1.0;
        s.network.buses[1].control.max = 1.0;
        let m: Model<f64> = Model::from_scenario(&s);
        let mut c = ControllerState::zeros(&m);
        assert_eq!(control_output(&m, &c), vec![0.0, 0.0]);
        c.u = vec![0.25, -0.25];
        assert_eq!(control_output(&m, &c), vec![0.25, -0.25]);

        s.network.buses[0].control.weight = 2.0;
        let m: Model<f64> = Model::from_scenario(&s);
        c.u = vec![3.0, 0.0];
        assert_eq!(control_output(&m, &c)[0], 1.0);
    }

    #[test]
    fn gate_cases() {
        assert_eq!(gate(1.0, 0.0, 1.0, 0.3), 0.0);
        assert_eq!(gate(1.0, 0.0, 1.0, -0.3), 1.0);
        assert_eq!(gate(0.0, 0.0, 1.0, -0.3), 0.0);
        assert_eq!(gate(0.0, 0.0, 1.0, 0.3), 1.0);
        for drift in [-5.0, 0.0, 5.0] {
            assert_eq!(gate(0.5, 0.0, 1.0, drift), 1.0);
        }
    }

    #[test]
    fn zero_measurements_give_zero_estimate() {
        let m: Model<f64> = Model::from_scenario(&two_bus());
        let q = estimate_disturbance(&m, &Measurements::zeros(&m), &ControllerState::zeros(&m));
        assert_eq!(q, vec![0.0, 0.0]);
    }

    #[test]
    fn estimator_fixed_point_and_relaxation() {
        let m: Model<f64> = Model::from_scenario(&two_bus());
        let mut c = ControllerState::zeros(&m);
        c.pm_est = vec![0.3];
        c.alpha_est = vec![0.3];
        let (dp, da) = estimator_derivative(&m, &c, &[0.3, 0.0]);
        assert_eq!((dp[0], da[0]), (0.0, 0.0));
        // Step input: alpha_est relaxes at rate 1 / TG_est.
        let c0 = ControllerState::zeros(&m);
        let (_, da) = estimator_derivative(&m, &c0, &[1.0, 0.0]);
        assert!((da[0] - 1.0 / m.governor_tc_est[0]).abs() < 1e-15);
    }

    #[test]
    fn origin_is_equilibrium_without_disturbance() {
        let s = two_bus();
        let m: Model<f64> = Model::from_scenario(&s);
        let cfg = ControllerConfig::from_scenario(&s);
        let c = ControllerState::zeros(&m);
        let d = controller_derivative(&m, &cfg, &c, &[0.0, 0.0]);
        assert!(d.to_vec().iter().all(|v| *v == 0.0));
        let next =
            controller_step(&m, &cfg, &c, &Measurements::zeros(&m), &[0.0, 0.0], 0.01).unwrap();
        assert_eq!(next, c);
    }

    #[test]
    fn saturated_integrator_stays_on_its_bound() {
        let mut s = two_bus();
        s.controller.mode = DisturbanceMode::Known;
        let m: Model<f64> = Model::from_scenario(&s);
        let cfg = ControllerConfig::from_scenario(&s);
        let mut c = ControllerState::zeros(&m);
        c.u = vec![cfg.k_u_hi[0], cfg.k_u_hi[1]];
        let pd = vec![-100.0, -100.0];
        let meas = Measurements::zeros(&m);
        for _ in 0..20 {
            c = controller_step(&m, &cfg, &c, &meas, &pd, 0.01).unwrap();
            assert_eq!(c.u, vec![cfg.k_u_hi[0], cfg.k_u_hi[1]]);
            assert_eq!(c.box_violation(&m, &cfg), 0.0);
        }
    }

    #[test]
    fn absent_limits_pin_duals() {
        let s = two_bus();
        let m: Model<f64> = Model::from_scenario(&s);
        let cfg = ControllerConfig::from_scenario(&s);
        let mut c = ControllerState::zeros(&m);
        c.eta = vec![5.0, -5.0];
        let d = controller_derivative(&m, &cfg, &c, &[0.0, 0.0]);
        assert_eq!((d.mu_hi[0], d.mu_lo[0]), (0.0, 0.0));
    }
}
