//! Baseline primary droop plus secondary Automatic Generation Control.
//!
//! Control areas are the connected components left after removing every
//! tie-line named by an inter-area constraint; without constraints the whole
//! network is one area. Each area integrates its Area Control Error and
//! spreads the integral over its generators by participation factor.

use std::collections::BTreeMap;

use crate::grid::{GridNetwork, ScenarioError};
use crate::model::Model;
use crate::scalar::Real;

/// AGC section of a scenario document.
#[derive(Clone, Debug, PartialEq)]
pub struct AgcSettings {
    /// Droop `R` of every generator (p.u. frequency per p.u. power).
    pub droop: f64,
    /// Integral gain per area; zero leaves droop only.
    pub k_i: f64,
    /// Frequency bias per control area, in area order. Defaults to
    /// `sum 1/R + sum D` over the area.
    pub beta: Option<Vec<f64>>,
    /// Participation weights by bus id. Generators of an area without any
    /// entry share equally; weights are normalized per area.
    pub participation: BTreeMap<usize, f64>,
}

impl Default for AgcSettings {
    fn default() -> Self {
        Self {
            droop: 0.05,
            k_i: 0.1,
            beta: None,
            participation: BTreeMap::new(),
        }
    }
}

impl AgcSettings {
    pub fn validate(&self, network: &GridNetwork) -> Result<(), ScenarioError> {
        if !(self.droop.is_finite() && self.droop > 0.0) {
            return Err(ScenarioError::Invalid(format!(
                "agc.droop must be positive, got {}",
                self.droop
            )));
        }
        if !(self.k_i.is_finite() && self.k_i >= 0.0) {
            return Err(ScenarioError::Invalid(format!(
                "agc.k_i must be nonnegative, got {}",
                self.k_i
            )));
        }
        let areas = control_areas(network);
        if let Some(beta) = &self.beta {
            if beta.len() != areas.len() {
                return Err(ScenarioError::Invalid(format!(
                    "agc.beta has {} entries for {} control areas",
                    beta.len(),
                    areas.len()
                )));
            }
            if beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                return Err(ScenarioError::Invalid(
                    "agc.beta must be nonnegative".into(),
                ));
            }
        }
        for (&id, &w) in &self.participation {
            let i = network
                .bus_index(id)
                .ok_or_else(|| ScenarioError::UnknownBus {
                    context: "agc.participation".into(),
                    bus: id,
                })?;
            if !network.buses[i].is_generator() {
                return Err(ScenarioError::Invalid(format!(
                    "agc.participation names load bus {id}"
                )));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(ScenarioError::Invalid(format!(
                    "agc.participation of bus {id} must be nonnegative"
                )));
            }
        }
        for area in &areas {
            let gens: Vec<usize> = area
                .buses
                .iter()
                .copied()
                .filter(|&i| network.buses[i].is_generator())
                .collect();
            let given: Vec<f64> = gens
                .iter()
                .filter_map(|&i| self.participation.get(&network.buses[i].id).copied())
                .collect();
            if !given.is_empty() && given.iter().sum::<f64>() <= 0.0 {
                return Err(ScenarioError::Invalid(
                    "agc.participation sums to zero within an area".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One control area by internal indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlArea {
    /// Member buses, ascending.
    pub buses: Vec<usize>,
    /// `(constraint, orientation)`: +1 when this area is the exporting side
    /// of that constraint, -1 when it sits on the far side of a member line.
    pub ties: Vec<(usize, i8)>,
}

/// Connected components after cutting all inter-area member lines, ordered
/// by smallest bus index.
///
/// The exporting side of a constraint is the component holding the
/// from-bus of its first member line when that member's sign is +1, and the
/// to-bus otherwise.
pub fn control_areas(network: &GridNetwork) -> Vec<ControlArea> {
    let n = network.n();
    let mut cut = vec![false; network.m()];
    for a in &network.areas {
        for m in &a.members {
            cut[m.line] = true;
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = count;
        while let Some(i) = stack.pop() {
            for (j, l) in network.lines.iter().enumerate() {
                if cut[j] {
                    continue;
                }
                let other = if l.from == i {
                    l.to
                } else if l.to == i {
                    l.from
                } else {
                    continue;
                };
                if comp[other] == usize::MAX {
                    comp[other] = count;
                    stack.push(other);
                }
            }
        }
        count += 1;
    }
    let mut areas: Vec<ControlArea> = (0..count)
        .map(|c| ControlArea {
            buses: (0..n).filter(|&i| comp[i] == c).collect(),
            ties: Vec::new(),
        })
        .collect();
    for (k, a) in network.areas.iter().enumerate() {
        let Some(first) = a.members.first() else {
            continue;
        };
        let l = &network.lines[first.line];
        let exporter = if first.sign >= 0 {
            comp[l.from]
        } else {
            comp[l.to]
        };
        areas[exporter].ties.push((k, 1));
        let mut far: Vec<usize> = a
            .members
            .iter()
            .flat_map(|m| {
                let l = &network.lines[m.line];
                [comp[l.from], comp[l.to]]
            })
            .filter(|&c| c != exporter)
            .collect();
        far.sort_unstable();
        far.dedup();
        for c in far {
            areas[c].ties.push((k, -1));
        }
    }
    areas
}

/// Resolved AGC parameters in scalar type `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct AgcConfig<T> {
    pub areas: Vec<ControlArea>,
    /// Area of each bus.
    pub area_of: Vec<usize>,
    /// Droop per generator slot.
    pub droop: Vec<T>,
    /// Participation factor per generator slot, summing to one per area.
    pub participation: Vec<T>,
    pub beta: Vec<T>,
    pub k_i: T,
}

impl<T: Real> AgcConfig<T> {
    pub fn from_scenario(scenario: &crate::grid::Scenario) -> Self {
        let net = &scenario.network;
        let s = &scenario.agc;
        let areas = control_areas(net);
        let mut area_of = vec![0; net.n()];
        for (c, a) in areas.iter().enumerate() {
            for &i in &a.buses {
                area_of[i] = c;
            }
        }
        let gens = net.generators();
        let mut weights: Vec<f64> = vec![0.0; gens.len()];
        for a in &areas {
            let slots: Vec<usize> = (0..gens.len())
                .filter(|&s| area_of[gens[s]] == area_of[a.buses[0]])
                .collect();
            let any_given = slots
                .iter()
                .any(|&g| s.participation.contains_key(&net.buses[gens[g]].id));
            let raw: Vec<f64> = slots
                .iter()
                .map(|&g| {
                    if any_given {
                        s.participation
                            .get(&net.buses[gens[g]].id)
                            .copied()
                            .unwrap_or(0.0)
                    } else {
                        1.0
                    }
                })
                .collect();
            let total: f64 = raw.iter().sum();
            for (&g, w) in slots.iter().zip(raw) {
                weights[g] = w / total;
            }
        }
        let beta = match &s.beta {
            Some(b) => b.clone(),
            None => areas
                .iter()
                .map(|a| {
                    a.buses
                        .iter()
                        .map(|&i| {
                            let b = &net.buses[i];
                            b.damping + if b.is_generator() { 1.0 / s.droop } else { 0.0 }
                        })
                        .sum()
                })
                .collect(),
        };
        Self {
            area_of,
            droop: vec![T::lit(s.droop); gens.len()],
            participation: weights.into_iter().map(T::lit).collect(),
            beta: beta.into_iter().map(T::lit).collect(),
            k_i: T::lit(s.k_i),
            areas,
        }
    }

    /// Same configuration with the integral channel switched off.
    pub fn droop_only(mut self) -> Self {
        self.k_i = T::zero();
        self
    }
}

/// Integral of the Area Control Error, per control area.
#[derive(Clone, Debug, PartialEq)]
pub struct AgcState<T> {
    pub integral: Vec<T>,
}

impl<T: Real> AgcState<T> {
    pub fn zeros(config: &AgcConfig<T>) -> Self {
        Self {
            integral: vec![T::zero(); config.areas.len()],
        }
    }
}

/// Mean generator frequency of an area, or the mean bus frequency when the
/// area has no generator.
pub fn area_frequency<T: Real>(model: &Model<T>, area: &ControlArea, omega: &[T]) -> T {
    let gens: Vec<usize> = area
        .buses
        .iter()
        .copied()
        .filter(|&i| model.is_generator(i))
        .collect();
    let pick = if gens.is_empty() { &area.buses } else { &gens };
    let sum = pick.iter().fold(T::zero(), |acc, &i| acc + omega[i]);
    sum / T::lit(pick.len() as f64)
}

/// Signed tie flow minus schedule for one inter-area constraint.
pub fn tie_deviation<T: Real>(model: &Model<T>, k: usize, flows: &[T]) -> T {
    let a = &model.areas[k];
    let s = a.members.iter().fold(T::zero(), |acc, &(j, s)| {
        if s > 0 {
            acc + flows[j]
        } else if s < 0 {
            acc - flows[j]
        } else {
            acc
        }
    });
    s - a.psi
}

/// `ACE_c = sum over ties (+-)(S p - psi) + beta_c * mean area frequency`.
pub fn ace<T: Real>(
    model: &Model<T>,
    config: &AgcConfig<T>,
    area: usize,
    flows: &[T],
    omega: &[T],
) -> T {
    let a = &config.areas[area];
    let tie = a.ties.iter().fold(T::zero(), |acc, &(k, o)| {
        let d = tie_deviation(model, k, flows);
        if o > 0 {
            acc + d
        } else {
            acc - d
        }
    });
    tie + config.beta[area] * area_frequency(model, a, omega)
}

/// Rates of the ACE integrators.
pub fn agc_derivative<T: Real>(
    model: &Model<T>,
    config: &AgcConfig<T>,
    flows: &[T],
    omega: &[T],
) -> Vec<T> {
    (0..config.areas.len())
        .map(|c| ace(model, config, c, flows, omega))
        .collect()
}

/// Generator setpoints `clamp(-w/R - pf * k_I * int ACE)`; loads get zero.
pub fn agc_control<T: Real>(
    model: &Model<T>,
    config: &AgcConfig<T>,
    state: &AgcState<T>,
    omega: &[T],
) -> Vec<T> {
    let mut pc = vec![T::zero(); model.n];
    for (s, &i) in model.gens.iter().enumerate() {
        let area = config.area_of[i];
        let raw = -omega[i] / config.droop[s]
            - config.participation[s] * config.k_i * state.integral[area];
        pc[i] = crate::controller::clamp_scalar(raw, model.pc_min[i], model.pc_max[i]);
    }
    pc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AreaMember, InterAreaSpec};
    use crate::testing::{path3, two_bus};

    #[test]
    fn single_area_without_constraints() {
        let s = two_bus();
        let areas = control_areas(&s.network);
        assert_eq!(areas.len(), 1);
        assert_eq!(areas[0].buses, vec![0, 1]);
        let cfg: AgcConfig<f64> = AgcConfig::from_scenario(&s);
        // One generator with R = 0.05 plus damping of both buses.
        let d: f64 = s.network.buses.iter().map(|b| b.damping).sum();
        assert!((cfg.beta[0] - (20.0 + d)).abs() < 1e-12);
        assert_eq!(cfg.participation, vec![1.0]);
    }

    #[test]
    fn ace_by_hand() {
        let mut s = path3(&[1.0, 1.0]);
        s.network.areas = vec![InterAreaSpec {
            members: vec![AreaMember { line: 1, sign: 1 }],
            psi: 0.0,
        }];
        s.agc.beta = Some(vec![10.0, 10.0]);
        let m: Model<f64> = Model::from_scenario(&s);
        let cfg: AgcConfig<f64> = AgcConfig::from_scenario(&s);
        // Line 2-3 is the tie; its from side {1, 2} exports.
        assert_eq!(cfg.areas[0].buses, vec![0, 1]);
        assert_eq!(cfg.areas[0].ties, vec![(0, 1)]);
        assert_eq!(cfg.areas[1].ties, vec![(0, -1)]);
        let omega = vec![-0.01; 3];
        let v = ace(&m, &cfg, 0, &[0.0, 0.2], &omega);
        assert!((v - 0.1).abs() < 1e-12);
        assert_eq!(ace(&m, &cfg, 0, &[0.0, 0.0], &[0.0; 3]), 0.0);
        assert!(ace(&m, &cfg, 0, &[0.0, 0.05], &[0.0; 3]) > 0.0);
    }

    #[test]
    fn control_is_droop_then_clamped() {
        let s = two_bus();
        let m: Model<f64> = Model::from_scenario(&s);
        let cfg: AgcConfig<f64> = AgcConfig::from_scenario(&s);
        let st = AgcState::zeros(&cfg);
        assert_eq!(agc_control(&m, &cfg, &st, &[0.0, 0.0]), vec![0.0, 0.0]);
        let pc = agc_control(&m, &cfg, &st, &[-0.001, 0.0]);
        assert!((pc[0] - 0.02).abs() < 1e-12 && pc[1] == 0.0);
        let pc = agc_control(&m, &cfg, &st, &[-10.0, 0.0]);
        assert_eq!(pc[0], m.pc_max[0]);
    }

    #[test]
    fn participation_on_load_rejected() {
        let mut s = two_bus();
        s.agc.participation.insert(2, 1.0);
        assert!(s.agc.validate(&s.network).is_err());
    }
}
