mod common;

use common::{arb_scenario, sixteenths};
use gridctl::controller::{
    agents, controller_derivative, controller_step, gather_messages, local_update_view, local_view,
    matches_centralized, required_messages, Agent, ControllerConfig, ControllerState,
    DisturbanceMode, Measurements, MessageKey,
};
use gridctl::corpus;
use gridctl::model::Model;
use gridctl::sim::{ControllerKind, Simulation};
use gridctl::Scenario;
use proptest::prelude::*;

/// Maps unit-interval draws into the controller boxes, with the ends of the
/// range landing exactly on the bounds.
fn state_from(model: &Model<f64>, cfg: &ControllerConfig<f64>, r: &[f64]) -> ControllerState<f64> {
    let mut it = r.iter().cycle();
    let mut pick = |lo: f64, hi: f64| {
        let v = *it.next().unwrap();
        lo + (hi - lo) * ((v + 1.0) / 2.0).clamp(0.0, 1.0)
    };
    let mut c = ControllerState::zeros(model);
    for i in 0..model.n {
        c.eta[i] = pick(-1.0, 1.0);
        c.u[i] = pick(cfg.k_u_lo[i], cfg.k_u_hi[i]);
    }
    for j in 0..model.m() {
        if model.lines[j].upper.is_some() {
            c.mu_hi[j] = pick(0.0, cfg.k_mu_hi[j]);
        }
        if model.lines[j].lower.is_some() {
            c.mu_lo[j] = pick(0.0, cfg.k_mu_lo[j]);
        }
    }
    for k in 0..model.n_areas() {
        c.phi[k] = pick(cfg.k_phi_lo[k], cfg.k_phi_hi[k]);
    }
    for s in 0..model.n_gens() {
        c.pm_est[s] = pick(-1.0, 1.0);
        c.alpha_est[s] = pick(-1.0, 1.0);
    }
    c
}

fn draws() -> impl Strategy<Value = Vec<f64>> {
    // Quantized so that both ends of each box come up often.
    proptest::collection::vec(sixteenths(-1.25, 1.25), 40)
}

fn setup(s: &Scenario) -> (Model<f64>, ControllerConfig<f64>) {
    (Model::from_scenario(s), ControllerConfig::from_scenario(s))
}

proptest! {
    #[test]
    fn step_keeps_every_state_in_its_box(s in arb_scenario(), r in draws(), dt in sixteenths(0.0625, 0.5)) {
        let (m, cfg) = setup(&s);
        let c = state_from(&m, &cfg, &r);
        let mut meas = Measurements::zeros(&m);
        meas.pc_applied = gridctl::controller::control_output(&m, &c);
        let next = controller_step(&m, &cfg, &c, &meas, &s.disturbance, dt).unwrap();
        prop_assert_eq!(next.box_violation(&m, &cfg), 0.0);
    }

    /// At a box edge the gated rate never points outward.
    #[test]
    fn gates_never_push_outward(s in arb_scenario(), r in draws(), q in proptest::collection::vec(sixteenths(-1.0, 1.0), 6)) {
        let (m, cfg) = setup(&s);
        let c = state_from(&m, &cfg, &r);
        let d = controller_derivative(&m, &cfg, &c, &q[..m.n]);
        for i in 0..m.n {
            prop_assert!(!(c.u[i] >= cfg.k_u_hi[i] && d.u[i] > 0.0));
            prop_assert!(!(c.u[i] <= cfg.k_u_lo[i] && d.u[i] < 0.0));
        }
        for j in 0..m.m() {
            prop_assert!(!(c.mu_hi[j] <= 0.0 && d.mu_hi[j] < 0.0));
            prop_assert!(!(c.mu_hi[j] >= cfg.k_mu_hi[j] && d.mu_hi[j] > 0.0));
            prop_assert!(!(c.mu_lo[j] <= 0.0 && d.mu_lo[j] < 0.0));
            prop_assert!(!(c.mu_lo[j] >= cfg.k_mu_lo[j] && d.mu_lo[j] > 0.0));
        }
        for k in 0..m.n_areas() {
            prop_assert!(!(c.phi[k] >= cfg.k_phi_hi[k] && d.phi[k] > 0.0));
            prop_assert!(!(c.phi[k] <= cfg.k_phi_lo[k] && d.phi[k] < 0.0));
        }
    }

    /// The eta dynamics only move eta within its conserved-sum subspace.
    #[test]
    fn eta_sum_is_conserved(s in arb_scenario(), r in draws(), q in proptest::collection::vec(sixteenths(-1.0, 1.0), 6)) {
        let (m, cfg) = setup(&s);
        let c = state_from(&m, &cfg, &r);
        let d = controller_derivative(&m, &cfg, &c, &q[..m.n]);
        prop_assert!(d.eta.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn distributed_matches_centralized_bitwise(s in arb_scenario(), r in draws(), q in proptest::collection::vec(sixteenths(-1.0, 1.0), 6)) {
        let (m, cfg) = setup(&s);
        let c = state_from(&m, &cfg, &r);
        prop_assert!(matches_centralized(&m, &cfg, &c, &q[..m.n]).unwrap());
    }

    /// Bus agents hear only from adjacent buses and incident lines.
    #[test]
    fn bus_inbox_is_local(s in arb_scenario()) {
        let (m, _) = setup(&s);
        let adj = s.network.adjacency();
        for (i, near) in adj.iter().enumerate() {
            for key in required_messages(&m, Agent::Bus(i)) {
                match key {
                    MessageKey::Eta(b) | MessageKey::U(b) => prop_assert!(near.contains(&b)),
                    MessageKey::MuHi(j) | MessageKey::MuLo(j) => {
                        let l = &m.lines[j];
                        prop_assert!(l.from == i || l.to == i);
                    }
                    MessageKey::Phi(_) => {}
                    MessageKey::Chi(_) => prop_assert!(false, "bus asked for a line flow"),
                }
            }
        }
    }
}

#[test]
fn dropped_message_is_reported() {
    let s = corpus::get("four_bus_two_area");
    let (m, cfg) = setup(&s);
    let c = ControllerState::zeros(&m);
    for agent in agents(&m) {
        let mut inbox = gather_messages(&m, &c, agent);
        let Some(&key) = inbox.keys().next() else {
            continue;
        };
        inbox.remove(&key);
        let view = local_view(&m, &c, &s.disturbance, agent);
        let err = local_update_view(&m, &cfg, agent, &view, &inbox).unwrap_err();
        assert_eq!(err.key, key);
        assert_eq!(err.agent, agent);
    }
}

/// With matched time constants the estimate reproduces the disturbance
/// exactly, so estimator and known-disturbance runs coincide.
#[test]
fn matched_estimator_tracks_disturbance() {
    let mut s = corpus::get("three_bus_limited");
    s.sim.horizon = 20.0;
    let mut sim = Simulation::<f64>::new(&s, ControllerKind::Proposed).unwrap();
    while !sim.finished() {
        sim.step().unwrap();
        let q = sim.disturbance_signal();
        let pd = sim.active_disturbance();
        for (a, b) in q.iter().zip(&pd) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b} at t={}", sim.time());
        }
    }
}

/// Mismatched estimator constants perturb the transient but not the
/// equilibrium, where `pM` and its estimate agree again.
#[test]
fn mismatched_estimator_reaches_same_control() {
    let base = corpus::get("two_bus");
    let mut known = base.clone();
    known.controller.mode = DisturbanceMode::Known;
    let mut off = base.clone();
    for b in &mut off.network.buses {
        if let gridctl::grid::BusKind::Generator(g) = &mut b.kind {
            g.turbine_tc_est = 0.4;
            g.governor_tc_est = 0.3;
        }
    }
    let finish = |s: &Scenario| {
        let mut sim = Simulation::<f64>::new(s, ControllerKind::Proposed).unwrap();
        while !sim.finished() {
            sim.step().unwrap();
        }
        (sim.control(), sim.disturbance_signal())
    };
    let (pk, _) = finish(&known);
    let (po, qo) = finish(&off);
    for (a, b) in pk.iter().zip(&po) {
        assert!((a - b).abs() < 1e-6);
    }
    for (a, b) in qo.iter().zip(&base.disturbance) {
        assert!((a - b).abs() < 1e-6);
    }
}
