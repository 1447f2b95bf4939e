//! Numeric view of a validated scenario in a chosen scalar type.

use crate::grid::{GridNetwork, Scenario};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LineModel<T> {
    pub from: usize,
    pub to: usize,
    pub b: T,
    pub upper: Option<T>,
    pub lower: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AreaModel<T> {
    /// `(line, sign)` pairs in document order.
    pub members: Vec<(usize, i8)>,
    pub psi: T,
}

/// Everything the plant, controller and oracle need, converted once into `T`.
///
/// Per-generator vectors are indexed by generator slot (`gens[slot]` is the
/// bus); per-bus vectors by internal bus index.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub n: usize,
    pub lines: Vec<LineModel<T>>,
    pub areas: Vec<AreaModel<T>>,
    pub gens: Vec<usize>,
    pub loads: Vec<usize>,
    pub gen_slot: Vec<Option<usize>>,
    /// Per bus: incident `(line, +1 | -1)` in line order, the incidence
    /// column entries of that bus.
    pub incident: Vec<Vec<(usize, i8)>>,
    /// Per line: `(area, sign)` memberships in area order.
    pub line_areas: Vec<Vec<(usize, i8)>>,
    pub damping: Vec<T>,
    pub inertia: Vec<T>,
    pub turbine_tc: Vec<T>,
    pub governor_tc: Vec<T>,
    pub turbine_tc_est: Vec<T>,
    pub governor_tc_est: Vec<T>,
    pub weight: Vec<T>,
    pub pc_min: Vec<T>,
    pub pc_max: Vec<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(network: &GridNetwork) -> Self {
        let conv = T::from_f64_exact;
        let n = network.n();
        let gens = network.generators();
        let loads = network.loads();
        let mut gen_slot = vec![None; n];
        for (s, &i) in gens.iter().enumerate() {
            gen_slot[i] = Some(s);
        }
        let lines: Vec<LineModel<T>> = network
            .lines
            .iter()
            .map(|l| LineModel {
                from: l.from,
                to: l.to,
                b: conv(l.b),
                upper: l.limits.upper.is_finite().then(|| conv(l.limits.upper)),
                lower: l.limits.lower.is_finite().then(|| conv(l.limits.lower)),
            })
            .collect();
        let mut incident = vec![Vec::new(); n];
        for (j, l) in network.lines.iter().enumerate() {
            incident[l.from].push((j, 1));
            incident[l.to].push((j, -1));
        }
        for inc in &mut incident {
            inc.sort_by_key(|&(j, _)| j);
        }
        let mut line_areas = vec![Vec::new(); network.m()];
        let areas = network
            .areas
            .iter()
            .enumerate()
            .map(|(k, a)| {
                for m in &a.members {
                    line_areas[m.line].push((k, m.sign));
                }
                AreaModel {
                    members: a.members.iter().map(|m| (m.line, m.sign)).collect(),
                    psi: conv(a.psi),
                }
            })
            .collect();
        let gp = |f: fn(&crate::grid::GeneratorParams) -> f64| -> Vec<T> {
            gens.iter()
                .map(|&i| conv(f(network.buses[i].generator().expect("generator"))))
                .collect()
        };
        Self {
            n,
            inertia: gp(|g| g.inertia),
            turbine_tc: gp(|g| g.turbine_tc),
            governor_tc: gp(|g| g.governor_tc),
            turbine_tc_est: gp(|g| g.turbine_tc_est),
            governor_tc_est: gp(|g| g.governor_tc_est),
            lines,
            areas,
            gen_slot,
            incident,
            line_areas,
            damping: network.buses.iter().map(|b| conv(b.damping)).collect(),
            weight: network
                .buses
                .iter()
                .map(|b| conv(b.control.weight))
                .collect(),
            pc_min: network.buses.iter().map(|b| conv(b.control.min)).collect(),
            pc_max: network.buses.iter().map(|b| conv(b.control.max)).collect(),
            gens,
            loads,
        }
    }

    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self::new(&scenario.network)
    }

    pub fn m(&self) -> usize {
        self.lines.len()
    }

    pub fn n_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn n_gens(&self) -> usize {
        self.gens.len()
    }

    pub fn is_generator(&self, bus: usize) -> bool {
        self.gen_slot[bus].is_some()
    }
}
