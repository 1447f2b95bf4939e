use crate::controller::ControllerState;
use crate::model::Model;
use crate::scalar::Real;

/// Reference point for the Lyapunov functions: the controller equilibrium
/// and the control it applies.
#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium<T> {
    pub state: ControllerState<T>,
    pub pc: Vec<T>,
}

fn half_sq<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y))
        * T::lit(0.5)
}

/// `1/2 |x - x*|^2` over `(eta, u, mu_hi, mu_lo, phi)`.
///
/// The sum of `eta` is conserved by the dynamics and not fixed by the
/// equilibrium equations, so `eta*` is shifted to share the mean of `eta`.
pub fn lyapunov_v0<T: Real>(cstate: &ControllerState<T>, eq: &ControllerState<T>) -> T {
    let n = T::lit(cstate.eta.len() as f64);
    let shift = cstate
        .eta
        .iter()
        .zip(&eq.eta)
        .fold(T::zero(), |acc, (a, b)| acc + (*a - *b))
        / n;
    let eta_ref: Vec<T> = eq.eta.iter().map(|v| *v + shift).collect();
    half_sq(&cstate.eta, &eta_ref)
        + half_sq(&cstate.u, &eq.u)
        + half_sq(&cstate.mu_hi, &eq.mu_hi)
        + half_sq(&cstate.mu_lo, &eq.mu_lo)
        + half_sq(&cstate.phi, &eq.phi)
}

/// `V0` plus time-constant weighted squares of the turbine, governor and
/// estimator states about the generator setpoints.
pub fn lyapunov_v1<T: Real>(
    model: &Model<T>,
    cstate: &ControllerState<T>,
    pm: &[T],
    alpha: &[T],
    eq: &Equilibrium<T>,
) -> T {
    let half = T::lit(0.5);
    let mut v = lyapunov_v0(cstate, &eq.state);
    for (s, &i) in model.gens.iter().enumerate() {
        let target = eq.pc[i];
        let sq = |x: T| (x - target) * (x - target);
        v = v + half
            * (model.turbine_tc[s] * sq(pm[s])
                + model.governor_tc[s] * sq(alpha[s])
                + model.turbine_tc_est[s] * sq(cstate.pm_est[s])
                + model.governor_tc_est[s] * sq(cstate.alpha_est[s]));
    }
    v
}
