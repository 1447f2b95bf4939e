//! Co-simulation of the plant with a choice of frequency controller.
//!
//! Plant and controller (or AGC integrators) are advanced together by one
//! RK4 step over the joint state, after which the controller state is
//! projected back onto its boxes. The run starts at `-pre_roll` with the
//! system at rest and the disturbance switches on at `t = 0`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::agc::{agc_control, agc_derivative, AgcConfig, AgcState};
use crate::controller::{
    apply_time_scale, check_gain_conditions, control_output, controller_derivative,
    disturbance_signal, project, ControllerConfig, ControllerState, GainViolation, Measurements,
    RocofMode,
};
use crate::grid::{Scenario, ScenarioError};
use crate::integrate::{all_finite, rk4_step};
use crate::model::Model;
use crate::oracle::{lyapunov_v0, lyapunov_v1, Equilibrium};
use crate::plant::{evaluate_plant, PlantInput, PlantState};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerKind {
    /// Distributed primal-dual controller.
    Proposed,
    /// Droop plus integral area control.
    Agc,
    /// Droop alone.
    Droop,
    /// No control action.
    None,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [Self::Proposed, Self::Agc, Self::Droop, Self::None];

    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Agc => "agc",
            Self::Droop => "droop",
            Self::None => "none",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown controller '{s}'"))
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("gain conditions violated: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Gains(Vec<GainViolation>),
    #[error("integration blow-up: non-finite state at t = {time} s")]
    Blowup { time: f64 },
}

/// One recorded instant. Controller internals are empty unless the
/// proposed controller runs; Lyapunov values only with a reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub omega: Vec<f64>,
    pub flow: Vec<f64>,
    pub pc: Vec<f64>,
    pub pm: Vec<f64>,
    pub alpha: Vec<f64>,
    pub u: Vec<f64>,
    pub mu_hi: Vec<f64>,
    pub mu_lo: Vec<f64>,
    pub phi: Vec<f64>,
    pub v0: Option<f64>,
    pub v1: Option<f64>,
}

/// Recorded run with the labels needed to write it out.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub bus_ids: Vec<usize>,
    pub line_labels: Vec<(usize, usize)>,
    pub gen_ids: Vec<usize>,
    pub n_areas: usize,
    pub internals: bool,
    pub lyapunov: bool,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn empty_like(&self) -> Self {
        Self {
            samples: Vec::new(),
            ..self.clone()
        }
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

/// Backward-difference frequency slope, optionally low-passed.
#[derive(Clone, Debug)]
struct RocofEstimator<T> {
    previous: Vec<T>,
    value: Vec<T>,
    filter: Option<T>,
}

/// Step-by-step co-simulation.
#[derive(Clone, Debug)]
pub struct Simulation<T: Real> {
    pub model: Model<T>,
    kind: ControllerKind,
    pd: Vec<T>,
    dt: T,
    dt_f64: f64,
    pre_steps: usize,
    total_steps: usize,
    step_index: usize,
    config: ControllerConfig<T>,
    agc: AgcConfig<T>,
    plant: PlantState<T>,
    controller: ControllerState<T>,
    agc_state: AgcState<T>,
    rocof: Option<RocofEstimator<T>>,
}

impl<T: Real> Simulation<T> {
    /// Validates the scenario and, for the proposed controller, the gains.
    pub fn new(scenario: &Scenario, kind: ControllerKind) -> Result<Self, SimError> {
        scenario.validate()?;
        let model = Model::from_scenario(scenario);
        let config = ControllerConfig::from_scenario(scenario);
        if kind == ControllerKind::Proposed {
            check_gain_conditions(&model, &config).map_err(SimError::Gains)?;
        }
        let agc = AgcConfig::from_scenario(scenario);
        let agc = if kind == ControllerKind::Droop {
            agc.droop_only()
        } else {
            agc
        };
        let sim = &scenario.sim;
        let pre_steps = (sim.pre_roll / sim.dt).round() as usize;
        let run_steps = (sim.horizon / sim.dt).round().max(1.0) as usize;
        let rocof = (config.rocof == RocofMode::BackwardDifference).then(|| RocofEstimator {
            previous: vec![T::zero(); model.n_gens()],
            value: vec![T::zero(); model.n_gens()],
            filter: config.rocof_filter,
        });
        Ok(Self {
            kind,
            pd: scenario.disturbance.iter().map(|&d| T::lit(d)).collect(),
            dt: T::lit(sim.dt),
            dt_f64: sim.dt,
            pre_steps,
            total_steps: pre_steps + run_steps,
            step_index: 0,
            plant: PlantState::zeros(&model),
            controller: ControllerState::zeros(&model),
            agc_state: AgcState::zeros(&agc),
            config,
            agc,
            rocof,
            model,
        })
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn time(&self) -> f64 {
        (self.step_index as f64 - self.pre_steps as f64) * self.dt_f64
    }

    pub fn finished(&self) -> bool {
        self.step_index >= self.total_steps
    }

    pub fn steps_remaining(&self) -> usize {
        self.total_steps.saturating_sub(self.step_index)
    }

    pub fn plant(&self) -> &PlantState<T> {
        &self.plant
    }

    pub fn controller(&self) -> &ControllerState<T> {
        &self.controller
    }

    pub fn config(&self) -> &ControllerConfig<T> {
        &self.config
    }

    pub fn agc_state(&self) -> &AgcState<T> {
        &self.agc_state
    }

    /// Disturbance in force over the next step.
    pub fn active_disturbance(&self) -> Vec<T> {
        if self.step_index >= self.pre_steps {
            self.pd.clone()
        } else {
            vec![T::zero(); self.model.n]
        }
    }

    fn control_for(
        &self,
        plant: &PlantState<T>,
        cstate: &ControllerState<T>,
        agc_state: &AgcState<T>,
    ) -> Vec<T> {
        match self.kind {
            ControllerKind::Proposed => control_output(&self.model, cstate),
            ControllerKind::Agc | ControllerKind::Droop => {
                let mut omega = vec![T::zero(); self.model.n];
                for (s, &i) in self.model.gens.iter().enumerate() {
                    omega[i] = plant.omega_g[s];
                }
                agc_control(&self.model, &self.agc, agc_state, &omega)
            }
            ControllerKind::None => vec![T::zero(); self.model.n],
        }
    }

    /// Control currently applied to the plant.
    pub fn control(&self) -> Vec<T> {
        self.control_for(&self.plant, &self.controller, &self.agc_state)
    }

    fn measurements_for(
        &self,
        plant: &PlantState<T>,
        cstate: &ControllerState<T>,
        agc_state: &AgcState<T>,
        pd: &[T],
    ) -> (Measurements<T>, PlantState<T>, Vec<T>) {
        let pc = self.control_for(plant, cstate, agc_state);
        let input = PlantInput {
            pc: pc.clone(),
            pd: pd.to_vec(),
        };
        let ev = evaluate_plant(&self.model, plant, &input);
        let omega_dot_g = match &self.rocof {
            Some(r) => r.value.clone(),
            None => ev.derivative.omega_g.clone(),
        };
        (
            Measurements {
                omega: ev.omega,
                omega_dot_g,
                pe: ev.injections,
                pc_applied: pc,
            },
            ev.derivative,
            ev.flows,
        )
    }

    /// Measurements at the current instant.
    pub fn measurements(&self) -> Measurements<T> {
        let pd = self.active_disturbance();
        self.measurements_for(&self.plant, &self.controller, &self.agc_state, &pd)
            .0
    }

    /// Disturbance signal the proposed controller currently acts on.
    pub fn disturbance_signal(&self) -> Vec<T> {
        let pd = self.active_disturbance();
        disturbance_signal(
            &self.model,
            &self.config,
            &self.controller,
            &self.measurements(),
            &pd,
        )
    }

    fn split(&self, x: &[T]) -> (PlantState<T>, ControllerState<T>, AgcState<T>) {
        let np = PlantState::len(&self.model);
        let plant = PlantState::from_slice(&self.model, &x[..np]);
        let rest = &x[np..];
        match self.kind {
            ControllerKind::Proposed => (
                plant,
                ControllerState::from_slice(&self.model, rest),
                self.agc_state.clone(),
            ),
            ControllerKind::Agc | ControllerKind::Droop => (
                plant,
                self.controller.clone(),
                AgcState {
                    integral: rest.to_vec(),
                },
            ),
            ControllerKind::None => (plant, self.controller.clone(), self.agc_state.clone()),
        }
    }

    fn joint(&self) -> Vec<T> {
        let mut x = self.plant.to_vec();
        match self.kind {
            ControllerKind::Proposed => self.controller.write_to(&mut x),
            ControllerKind::Agc | ControllerKind::Droop => {
                x.extend_from_slice(&self.agc_state.integral)
            }
            ControllerKind::None => {}
        }
        x
    }

    fn derivative(&self, x: &[T], pd: &[T], dx: &mut [T]) {
        let (plant, cstate, agc_state) = self.split(x);
        let (meas, dplant, flows) = self.measurements_for(&plant, &cstate, &agc_state, pd);
        let mut out = dplant.to_vec();
        match self.kind {
            ControllerKind::Proposed => {
                let q = disturbance_signal(&self.model, &self.config, &cstate, &meas, pd);
                let mut d = controller_derivative(&self.model, &self.config, &cstate, &q);
                apply_time_scale(&mut d, self.config.time_scale);
                d.write_to(&mut out);
            }
            ControllerKind::Agc | ControllerKind::Droop => {
                out.extend(agc_derivative(&self.model, &self.agc, &flows, &meas.omega));
            }
            ControllerKind::None => {}
        }
        dx.copy_from_slice(&out);
    }

    /// Advances one step.
    pub fn step(&mut self) -> Result<(), SimError> {
        let pd = self.active_disturbance();
        let x = rk4_step(T::zero(), &self.joint(), self.dt, |_, x, dx| {
            self.derivative(x, &pd, dx)
        });
        let time = self.time() + self.dt_f64;
        if !all_finite(&x) {
            return Err(SimError::Blowup { time });
        }
        let (plant, mut cstate, agc_state) = self.split(&x);
        if self.kind == ControllerKind::Proposed {
            project(&self.model, &self.config, &mut cstate);
        }
        if let Some(r) = &mut self.rocof {
            for s in 0..plant.omega_g.len() {
                let raw = (plant.omega_g[s] - r.previous[s]) / self.dt;
                r.value[s] = match r.filter {
                    Some(tau) => r.value[s] + self.dt / (tau + self.dt) * (raw - r.value[s]),
                    None => raw,
                };
            }
            r.previous = plant.omega_g.clone();
        }
        self.plant = plant;
        self.controller = cstate;
        self.agc_state = agc_state;
        self.step_index += 1;
        Ok(())
    }

    pub fn sample(&self, reference: Option<&Equilibrium<T>>) -> Sample {
        let pd = self.active_disturbance();
        let (meas, _, flows) =
            self.measurements_for(&self.plant, &self.controller, &self.agc_state, &pd);
        let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
        let proposed = self.kind == ControllerKind::Proposed;
        let internal = |v: &[T]| if proposed { f(v) } else { Vec::new() };
        let (v0, v1) = match reference {
            Some(eq) if proposed => (
                Some(lyapunov_v0(&self.controller, &eq.state).to_f64_lossy()),
                Some(
                    lyapunov_v1(
                        &self.model,
                        &self.controller,
                        &self.plant.pm,
                        &self.plant.alpha,
                        eq,
                    )
                    .to_f64_lossy(),
                ),
            ),
            _ => (None, None),
        };
        Sample {
            t: self.time(),
            omega: f(&meas.omega),
            flow: f(&flows),
            pc: f(&meas.pc_applied),
            pm: f(&self.plant.pm),
            alpha: f(&self.plant.alpha),
            u: internal(&self.controller.u),
            mu_hi: internal(&self.controller.mu_hi),
            mu_lo: internal(&self.controller.mu_lo),
            phi: internal(&self.controller.phi),
            v0,
            v1,
        }
    }
}

/// Runs a scenario to its horizon and records it.
pub fn run(scenario: &Scenario, kind: ControllerKind) -> Result<Trajectory, SimError> {
    run_with_reference::<f64>(scenario, kind, None)
}

pub fn run_with_reference<T: Real>(
    scenario: &Scenario,
    kind: ControllerKind,
    reference: Option<&Equilibrium<T>>,
) -> Result<Trajectory, SimError> {
    let mut sim = Simulation::<T>::new(scenario, kind)?;
    let every = scenario
        .sim
        .record_interval
        .map(|r| ((r / scenario.sim.dt).round() as usize).max(1))
        .unwrap_or(1);
    let net = &scenario.network;
    let mut traj = Trajectory {
        bus_ids: net.buses.iter().map(|b| b.id).collect(),
        line_labels: (0..net.m()).map(|j| net.line_label(j)).collect(),
        gen_ids: net.generators().iter().map(|&i| net.buses[i].id).collect(),
        n_areas: net.areas.len(),
        internals: kind == ControllerKind::Proposed,
        lyapunov: kind == ControllerKind::Proposed && reference.is_some(),
        samples: Vec::new(),
    };
    traj.samples.push(sim.sample(reference));
    let mut k = 0usize;
    while !sim.finished() {
        sim.step()?;
        k += 1;
        if k.is_multiple_of(every) || sim.finished() {
            traj.samples.push(sim.sample(reference));
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::two_bus;

    fn short(mut s: Scenario, horizon: f64) -> Scenario {
        s.sim.horizon = horizon;
        s
    }

    #[test]
    fn quiet_scenario_stays_at_rest() {
        for kind in ControllerKind::ALL {
            let traj = run(&short(two_bus(), 2.0), kind).unwrap();
            for s in &traj.samples {
                assert!(s
                    .omega
                    .iter()
                    .chain(&s.flow)
                    .chain(&s.pc)
                    .all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn pre_roll_is_flat_and_times_increase() {
        let mut s = short(two_bus(), 1.0);
        s.disturbance = vec![-0.2, 0.0];
        let traj = run(&s, ControllerKind::Proposed).unwrap();
        assert!((traj.samples[0].t + 1.0).abs() < 1e-12);
        for w in traj.samples.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        for smp in traj.samples.iter().filter(|x| x.t <= 0.0) {
            assert!(smp.omega.iter().all(|v| *v == 0.0));
        }
        assert!(traj.last().unwrap().omega[0] < 0.0);
    }

    #[test]
    fn gain_violation_refuses_proposed() {
        let mut s = two_bus();
        s.controller.k_u_hi = Some(0.5);
        assert!(matches!(
            Simulation::<f64>::new(&s, ControllerKind::Proposed),
            Err(SimError::Gains(_))
        ));
        assert!(Simulation::<f64>::new(&s, ControllerKind::Agc).is_ok());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ControllerKind::ALL {
            assert_eq!(k.name().parse::<ControllerKind>().unwrap(), k);
        }
    }
}
