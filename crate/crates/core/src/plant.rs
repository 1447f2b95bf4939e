//! Linearized network dynamics: swing equations at generator buses,
//! algebraic power balance at load buses, DC flows, first-order turbines
//! and governors.
//!
//! Flows are carried through bus angles (`p = B C^T theta`) so they always
//! stay in the range of `B C^T` and never contain circulating components.
//! Load-bus frequencies are not states; they are re-solved from the
//! algebraic balance every time the derivative is evaluated.

use crate::integrate::{all_finite, rk4_step, IntegrationError};
use crate::model::Model;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct PlantState<T> {
    /// Generator frequency deviations, by generator slot.
    pub omega_g: Vec<T>,
    /// Bus angle deviations (rad), by bus.
    pub theta: Vec<T>,
    /// Mechanical power deviations, by generator slot.
    pub pm: Vec<T>,
    /// Valve positions, by generator slot.
    pub alpha: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantInput<T> {
    pub pc: Vec<T>,
    pub pd: Vec<T>,
}

impl<T: Real> PlantInput<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            pc: vec![T::zero(); n],
            pd: vec![T::zero(); n],
        }
    }
}

impl<T: Real> PlantState<T> {
    pub fn zeros(model: &Model<T>) -> Self {
        let g = model.n_gens();
        Self {
            omega_g: vec![T::zero(); g],
            theta: vec![T::zero(); model.n],
            pm: vec![T::zero(); g],
            alpha: vec![T::zero(); g],
        }
    }

    pub fn len(model: &Model<T>) -> usize {
        3 * model.n_gens() + model.n
    }

    pub fn write_to(&self, out: &mut Vec<T>) {
        out.extend_from_slice(&self.omega_g);
        out.extend_from_slice(&self.theta);
        out.extend_from_slice(&self.pm);
        out.extend_from_slice(&self.alpha);
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.omega_g.len() * 3 + self.theta.len());
        self.write_to(&mut v);
        v
    }

    pub fn from_slice(model: &Model<T>, x: &[T]) -> Self {
        let g = model.n_gens();
        let n = model.n;
        Self {
            omega_g: x[..g].to_vec(),
            theta: x[g..g + n].to_vec(),
            pm: x[g + n..2 * g + n].to_vec(),
            alpha: x[2 * g + n..3 * g + n].to_vec(),
        }
    }
}

/// DC line flows `p = diag(b) C^T theta`.
pub fn line_flows<T: Real>(model: &Model<T>, theta: &[T]) -> Vec<T> {
    model
        .lines
        .iter()
        .map(|l| l.b * (theta[l.from] - theta[l.to]))
        .collect()
}

/// Power received by each bus from the network, `p^E = -C p`.
pub fn bus_injections<T: Real>(model: &Model<T>, flows: &[T]) -> Vec<T> {
    let mut pe = vec![T::zero(); model.n];
    for (l, &p) in model.lines.iter().zip(flows) {
        pe[l.from] = pe[l.from] - p;
        pe[l.to] = pe[l.to] + p;
    }
    pe
}

/// Load-bus frequencies from the algebraic balance
/// `0 = -D_L w_L - C_L p + p^C_L + p^D_L`, ordered like `model.loads`.
pub fn solve_load_frequencies<T: Real>(
    model: &Model<T>,
    theta: &[T],
    input: &PlantInput<T>,
) -> Vec<T> {
    let pe = bus_injections(model, &line_flows(model, theta));
    load_frequencies_from_injections(model, &pe, input)
}

fn load_frequencies_from_injections<T: Real>(
    model: &Model<T>,
    pe: &[T],
    input: &PlantInput<T>,
) -> Vec<T> {
    model
        .loads
        .iter()
        .map(|&i| (pe[i] + input.pc[i] + input.pd[i]) / model.damping[i])
        .collect()
}

/// Everything a derivative evaluation computes along the way; the
/// controller's measurements are read from here.
#[derive(Clone, Debug)]
pub struct PlantEvaluation<T> {
    pub derivative: PlantState<T>,
    /// Frequency deviation of every bus.
    pub omega: Vec<T>,
    pub flows: Vec<T>,
    pub injections: Vec<T>,
}

pub fn evaluate_plant<T: Real>(
    model: &Model<T>,
    state: &PlantState<T>,
    input: &PlantInput<T>,
) -> PlantEvaluation<T> {
    let flows = line_flows(model, &state.theta);
    let pe = bus_injections(model, &flows);
    let omega_l = load_frequencies_from_injections(model, &pe, input);

    let mut omega = vec![T::zero(); model.n];
    for (s, &i) in model.gens.iter().enumerate() {
        omega[i] = state.omega_g[s];
    }
    for (k, &i) in model.loads.iter().enumerate() {
        omega[i] = omega_l[k];
    }

    let g = model.n_gens();
    let mut d_omega = Vec::with_capacity(g);
    let mut d_pm = Vec::with_capacity(g);
    let mut d_alpha = Vec::with_capacity(g);
    for (s, &i) in model.gens.iter().enumerate() {
        let w = state.omega_g[s];
        // Control enters generators only through the governor.
        d_omega
            .push((-model.damping[i] * w + pe[i] + state.pm[s] + input.pd[i]) / model.inertia[s]);
        d_pm.push((-state.pm[s] + state.alpha[s]) / model.turbine_tc[s]);
        d_alpha.push((-state.alpha[s] + input.pc[i]) / model.governor_tc[s]);
    }
    PlantEvaluation {
        derivative: PlantState {
            omega_g: d_omega,
            theta: omega.clone(),
            pm: d_pm,
            alpha: d_alpha,
        },
        omega,
        flows,
        injections: pe,
    }
}

/// Time derivative of the plant state for fixed inputs.
pub fn plant_derivative<T: Real>(
    model: &Model<T>,
    state: &PlantState<T>,
    input: &PlantInput<T>,
) -> PlantState<T> {
    evaluate_plant(model, state, input).derivative
}

/// One RK4 step with inputs held over the step.
pub fn plant_step<T: Real>(
    model: &Model<T>,
    state: &PlantState<T>,
    input: &PlantInput<T>,
    dt: T,
) -> Result<PlantState<T>, IntegrationError> {
    // Written negated so NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(dt > T::zero()) {
        return Err(IntegrationError::BadStep(dt.to_f64_lossy()));
    }
    let x = rk4_step(T::zero(), &state.to_vec(), dt, |_, x, dx| {
        let d = plant_derivative(model, &PlantState::from_slice(model, x), input).to_vec();
        dx.copy_from_slice(&d);
    });
    if !all_finite(&x) {
        return Err(IntegrationError::Blowup {
            time: dt.to_f64_lossy(),
        });
    }
    Ok(PlantState::from_slice(model, &x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{path3, two_bus};

    fn model2() -> Model<f64> {
        Model::new(&two_bus().network)
    }

    #[test]
    fn single_line_flow_and_injection() {
        let m = model2();
        let p = line_flows(&m, &[0.1, 0.0]);
        assert_eq!(p, vec![0.1]);
        assert_eq!(bus_injections(&m, &p), vec![-0.1, 0.1]);
    }

    #[test]
    fn constant_angles_give_no_flow() {
        let m: Model<f64> = Model::new(&path3(&[1.0, 2.0]).network);
        assert_eq!(line_flows(&m, &[0.7, 0.7, 0.7]), vec![0.0, 0.0]);
    }

    #[test]
    fn path_flows_by_hand() {
        let m: Model<f64> = Model::new(&path3(&[1.0, 2.0]).network);
        let p = line_flows(&m, &[0.2, 0.1, 0.0]);
        assert!((p[0] - 0.1).abs() < 1e-15 && (p[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn load_frequency_from_balance() {
        let m = model2();
        let input = PlantInput::zeros(2);
        assert_eq!(solve_load_frequencies(&m, &[0.0, 0.0], &input), vec![0.0]);
        // p = 0.1 on the line delivers 0.1 to bus 2 with d = 1.
        let w = solve_load_frequencies(&m, &[0.1, 0.0], &input);
        assert!((w[0] - 0.1).abs() < 1e-15);

        let mut s = two_bus();
        s.network.buses[1].damping = 2.0;
        let m2: Model<f64> = Model::new(&s.network);
        let w2 = solve_load_frequencies(&m2, &[0.1, 0.0], &input);
        assert!((w2[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn unforced_origin_is_equilibrium() {
        let m = model2();
        let d = plant_derivative(&m, &PlantState::zeros(&m), &PlantInput::zeros(2));
        assert!(d.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn generator_step_disturbance_rate() {
        let m = model2();
        let mut input = PlantInput::zeros(2);
        input.pd[0] = -1.0;
        let d = plant_derivative(&m, &PlantState::zeros(&m), &input);
        assert!((d.omega_g[0] + 0.1).abs() < 1e-15);
        assert!(d
            .theta
            .iter()
            .chain(&d.pm)
            .chain(&d.alpha)
            .all(|v| *v == 0.0));
    }

    #[test]
    fn equilibrium_step_is_stationary() {
        let m = model2();
        let s = PlantState::zeros(&m);
        let next = plant_step(&m, &s, &PlantInput::zeros(2), 0.01).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let m = model2();
        let s = PlantState::zeros(&m);
        assert!(plant_step(&m, &s, &PlantInput::zeros(2), 0.0).is_err());
    }
}
