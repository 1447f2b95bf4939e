//! Message-passing evaluation of the controller.
//!
//! Each bus, line and inter-area constraint is an agent that owns its slice
//! of the controller state and computes its own rates from that slice plus
//! messages from graph neighbours. Assembling all fragments reproduces
//! [`controller_derivative`](super::controller_derivative) bit for bit, since
//! both go through the same row helpers in the same order.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{
    area_pull, bus_control, controller_derivative, incidence_sum, line_chi, line_eta_term,
    mu_hi_rate, mu_lo_rate, phi_rate, u_rate, ControllerConfig, ControllerState,
};
use crate::model::Model;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Agent {
    Bus(usize),
    Line(usize),
    Area(usize),
}

/// One scalar a neighbour publishes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKey {
    Eta(usize),
    U(usize),
    MuHi(usize),
    MuLo(usize),
    Phi(usize),
    /// Controller flow of a line, published by the line agent.
    Chi(usize),
}

pub type Messages<T> = BTreeMap<MessageKey, T>;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{agent:?} is missing message {key:?}")]
pub struct MissingMessage {
    pub agent: Agent,
    pub key: MessageKey,
}

/// State an agent owns.
#[derive(Clone, Debug, PartialEq)]
pub enum LocalView<T> {
    Bus {
        eta: T,
        u: T,
        /// Local disturbance signal.
        q: T,
        /// `(pm_est, alpha_est)` at generator buses.
        estimator: Option<(T, T)>,
    },
    Line {
        mu_hi: T,
        mu_lo: T,
    },
    Area {
        phi: T,
    },
}

/// Rates computed by one agent.
#[derive(Clone, Debug, PartialEq)]
pub enum Fragment<T> {
    Bus {
        bus: usize,
        eta: T,
        u: T,
        estimator: Option<(T, T)>,
    },
    Line {
        line: usize,
        mu_hi: T,
        mu_lo: T,
    },
    Area {
        area: usize,
        phi: T,
    },
}

fn other_end<T>(model: &Model<T>, j: usize, i: usize) -> usize {
    let l = &model.lines[j];
    if l.from == i {
        l.to
    } else {
        l.from
    }
}

/// Exactly the messages an agent needs, in key order.
pub fn required_messages<T: Real>(model: &Model<T>, agent: Agent) -> Vec<MessageKey> {
    let mut keys = BTreeSet::new();
    match agent {
        Agent::Bus(i) => {
            for &(j, _) in &model.incident[i] {
                let nb = other_end(model, j, i);
                keys.insert(MessageKey::Eta(nb));
                keys.insert(MessageKey::U(nb));
                keys.insert(MessageKey::MuHi(j));
                keys.insert(MessageKey::MuLo(j));
                for &(k, _) in &model.line_areas[j] {
                    keys.insert(MessageKey::Phi(k));
                }
            }
        }
        Agent::Line(j) => {
            keys.insert(MessageKey::Eta(model.lines[j].from));
            keys.insert(MessageKey::Eta(model.lines[j].to));
        }
        Agent::Area(k) => {
            for &(j, _) in &model.areas[k].members {
                keys.insert(MessageKey::Chi(j));
            }
        }
    }
    keys.into_iter().collect()
}

fn message_value<T: Real>(model: &Model<T>, cstate: &ControllerState<T>, key: MessageKey) -> T {
    match key {
        MessageKey::Eta(i) => cstate.eta[i],
        MessageKey::U(i) => cstate.u[i],
        MessageKey::MuHi(j) => cstate.mu_hi[j],
        MessageKey::MuLo(j) => cstate.mu_lo[j],
        MessageKey::Phi(k) => cstate.phi[k],
        MessageKey::Chi(j) => {
            let l = &model.lines[j];
            line_chi(l.b, cstate.eta[l.from], cstate.eta[l.to])
        }
    }
}

/// Collects an agent's inbox from a full controller state.
pub fn gather_messages<T: Real>(
    model: &Model<T>,
    cstate: &ControllerState<T>,
    agent: Agent,
) -> Messages<T> {
    required_messages(model, agent)
        .into_iter()
        .map(|k| (k, message_value(model, cstate, k)))
        .collect()
}

/// The slice of the state an agent owns.
pub fn local_view<T: Real>(
    model: &Model<T>,
    cstate: &ControllerState<T>,
    q: &[T],
    agent: Agent,
) -> LocalView<T> {
    match agent {
        Agent::Bus(i) => LocalView::Bus {
            eta: cstate.eta[i],
            u: cstate.u[i],
            q: q[i],
            estimator: model.gen_slot[i].map(|s| (cstate.pm_est[s], cstate.alpha_est[s])),
        },
        Agent::Line(j) => LocalView::Line {
            mu_hi: cstate.mu_hi[j],
            mu_lo: cstate.mu_lo[j],
        },
        Agent::Area(k) => LocalView::Area { phi: cstate.phi[k] },
    }
}

/// Computes one agent's rates from its own state and its inbox.
pub fn local_update_view<T: Real>(
    model: &Model<T>,
    config: &ControllerConfig<T>,
    agent: Agent,
    local: &LocalView<T>,
    messages: &Messages<T>,
) -> Result<Fragment<T>, MissingMessage> {
    let get = |key: MessageKey| {
        messages
            .get(&key)
            .copied()
            .ok_or(MissingMessage { agent, key })
    };
    match (agent, local) {
        (
            Agent::Bus(i),
            &LocalView::Bus {
                eta,
                u,
                q,
                estimator,
            },
        ) => {
            let own = |key: MessageKey| match key {
                MessageKey::Eta(b) if b == i => Ok(eta),
                MessageKey::U(b) if b == i => Ok(u),
                _ => get(key),
            };
            let inc = &model.incident[i];
            let mut terms = Vec::with_capacity(inc.len());
            let mut chis = Vec::with_capacity(inc.len());
            for &(j, _) in inc {
                let l = &model.lines[j];
                let mut phis = BTreeMap::new();
                for &(k, _) in &model.line_areas[j] {
                    phis.insert(k, get(MessageKey::Phi(k))?);
                }
                let pull = area_pull(&model.line_areas[j], |k| phis[&k]);
                terms.push(line_eta_term(
                    l.b,
                    own(MessageKey::U(l.from))?,
                    own(MessageKey::U(l.to))?,
                    get(MessageKey::MuHi(j))?,
                    get(MessageKey::MuLo(j))?,
                    pull,
                ));
                chis.push(line_chi(
                    l.b,
                    own(MessageKey::Eta(l.from))?,
                    own(MessageKey::Eta(l.to))?,
                ));
            }
            let pos = |j: usize| inc.iter().position(|&(jj, _)| jj == j).unwrap_or(0);
            let eta_rate = incidence_sum(inc, |j| terms[pos(j)]);
            let c_chi = incidence_sum(inc, |j| chis[pos(j)]);
            let pc = bus_control(model, i, u);
            let u_dot = u_rate(u, config.k_u_lo[i], config.k_u_hi[i], c_chi, pc, q);
            let est = match (model.gen_slot[i], estimator) {
                (Some(s), Some((pm, alpha))) => Some((
                    (-pm + alpha) / model.turbine_tc_est[s],
                    (-alpha + pc) / model.governor_tc_est[s],
                )),
                _ => None,
            };
            Ok(Fragment::Bus {
                bus: i,
                eta: eta_rate,
                u: u_dot,
                estimator: est,
            })
        }
        (Agent::Line(j), &LocalView::Line { mu_hi, mu_lo }) => {
            let l = &model.lines[j];
            let chi = line_chi(
                l.b,
                get(MessageKey::Eta(l.from))?,
                get(MessageKey::Eta(l.to))?,
            );
            Ok(Fragment::Line {
                line: j,
                mu_hi: mu_hi_rate(mu_hi, config.k_mu_hi[j], chi, l.upper),
                mu_lo: mu_lo_rate(mu_lo, config.k_mu_lo[j], chi, l.lower),
            })
        }
        (Agent::Area(k), &LocalView::Area { phi }) => {
            let a = &model.areas[k];
            let mut chis = BTreeMap::new();
            for &(j, _) in &a.members {
                chis.insert(j, get(MessageKey::Chi(j))?);
            }
            Ok(Fragment::Area {
                area: k,
                phi: phi_rate(
                    phi,
                    config.k_phi_lo[k],
                    config.k_phi_hi[k],
                    &a.members,
                    |j| chis[&j],
                    a.psi,
                ),
            })
        }
        _ => panic!("local view does not belong to {agent:?}"),
    }
}

pub fn agents<T>(model: &Model<T>) -> Vec<Agent> {
    (0..model.n)
        .map(Agent::Bus)
        .chain((0..model.lines.len()).map(Agent::Line))
        .chain((0..model.areas.len()).map(Agent::Area))
        .collect()
}

/// Scatters fragments into a full derivative; absent fragments leave zeros.
pub fn assemble<T: Real>(model: &Model<T>, fragments: &[Fragment<T>]) -> ControllerState<T> {
    let mut d = ControllerState::zeros(model);
    for f in fragments {
        match *f {
            Fragment::Bus {
                bus,
                eta,
                u,
                estimator,
            } => {
                d.eta[bus] = eta;
                d.u[bus] = u;
                if let (Some(s), Some((pm, alpha))) = (model.gen_slot[bus], estimator) {
                    d.pm_est[s] = pm;
                    d.alpha_est[s] = alpha;
                }
            }
            Fragment::Line { line, mu_hi, mu_lo } => {
                d.mu_hi[line] = mu_hi;
                d.mu_lo[line] = mu_lo;
            }
            Fragment::Area { area, phi } => d.phi[area] = phi,
        }
    }
    d
}

/// Runs every agent on its own inbox and assembles the result.
pub fn distributed_derivative<T: Real>(
    model: &Model<T>,
    config: &ControllerConfig<T>,
    cstate: &ControllerState<T>,
    q: &[T],
) -> Result<ControllerState<T>, MissingMessage> {
    let fragments = agents(model)
        .into_iter()
        .map(|a| {
            let view = local_view(model, cstate, q, a);
            local_update_view(model, config, a, &view, &gather_messages(model, cstate, a))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(model, &fragments))
}

/// Bitwise comparison of the assembled and centralized derivatives.
pub fn matches_centralized<T: Real>(
    model: &Model<T>,
    config: &ControllerConfig<T>,
    cstate: &ControllerState<T>,
    q: &[T],
) -> Result<bool, MissingMessage> {
    let dist = distributed_derivative(model, config, cstate, q)?.to_vec();
    let central = controller_derivative(model, config, cstate, q).to_vec();
    Ok(dist.len() == central.len()
        && dist
            .iter()
            .zip(&central)
            .all(|(a, b)| a.to_f64_lossy().to_bits() == b.to_f64_lossy().to_bits()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::two_bus;

    fn setup() -> (Model<f64>, ControllerConfig<f64>, ControllerState<f64>) {
        let s = two_bus();
        let m = Model::from_scenario(&s);
        let cfg = ControllerConfig::from_scenario(&s);
        let mut c = ControllerState::zeros(&m);
        c.eta = vec![0.3, -0.2];
        c.u = vec![0.1, -0.4];
        c.pm_est = vec![0.05];
        c.alpha_est = vec![0.07];
        (m, cfg, c)
    }

    #[test]
    fn bus_fragment_matches_central_row() {
        let (m, cfg, c) = setup();
        let q = [-0.5, 0.0];
        let central = controller_derivative(&m, &cfg, &c, &q);
        let agent = Agent::Bus(0);
        let frag = local_update_view(
            &m,
            &cfg,
            agent,
            &local_view(&m, &c, &q, agent),
            &gather_messages(&m, &c, agent),
        )
        .unwrap();
        match frag {
            Fragment::Bus { eta, u, .. } => {
                assert_eq!(eta.to_bits(), central.eta[0].to_bits());
                assert_eq!(u.to_bits(), central.u[0].to_bits());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches_centralized(&m, &cfg, &c, &q).unwrap());
    }

    #[test]
    fn missing_neighbor_is_reported() {
        let (m, cfg, c) = setup();
        let agent = Agent::Bus(0);
        let mut inbox = gather_messages(&m, &c, agent);
        inbox.remove(&MessageKey::U(1));
        let err = local_update_view(
            &m,
            &cfg,
            agent,
            &local_view(&m, &c, &[0.0, 0.0], agent),
            &inbox,
        )
        .unwrap_err();
        assert_eq!(err.key, MessageKey::U(1));
    }

    #[test]
    fn line_needs_only_endpoints() {
        let (m, _, _) = setup();
        assert_eq!(
            required_messages(&m, Agent::Line(0)),
            vec![MessageKey::Eta(0), MessageKey::Eta(1)]
        );
    }
}
