//! Network topology, physical parameters and scenario ingestion.
//!
//! Bus ids in documents are the user-facing (1-based) numbers; internally
//! every bus and line is addressed by its position in the document.

mod document;

use std::collections::VecDeque;

use thiserror::Error;

use crate::agc::AgcSettings;
use crate::controller::ControllerSettings;
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

pub use document::{emit_scenario, load_scenario, load_scenario_file};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario document: {0}")]
    Parse(String),
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("{context} references unknown bus {bus}")]
    UnknownBus { context: String, bus: usize },
    #[error("line {from}-{to} is a self-loop")]
    SelfLoop { from: usize, to: usize },
    #[error("network is not connected: bus {0} cannot be reached from the first bus")]
    Disconnected(usize),
    #[error("{what} at bus {bus} must be positive, got {value}")]
    NonPositive {
        what: &'static str,
        bus: usize,
        value: f64,
    },
    #[error("line {from}-{to}: {reason}")]
    BadLine {
        from: usize,
        to: usize,
        reason: String,
    },
    #[error("bus {bus}: {reason}")]
    BadBus { bus: usize, reason: String },
    #[error("inter-area constraint {index}: {reason}")]
    BadArea { index: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Generator-only dynamic parameters (seconds and p.u.·s).
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub inertia: f64,
    pub turbine_tc: f64,
    pub governor_tc: f64,
    pub turbine_tc_est: f64,
    pub governor_tc_est: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BusKind {
    Generator(GeneratorParams),
    Load,
}

/// Box on the control deviation of one bus and its quadratic cost weight.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlLimits {
    pub min: f64,
    pub max: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub damping: f64,
    pub control: ControlLimits,
}

impl Bus {
    pub fn is_generator(&self) -> bool {
        matches!(self.kind, BusKind::Generator(_))
    }

    pub fn generator(&self) -> Option<&GeneratorParams> {
        match &self.kind {
            BusKind::Generator(g) => Some(g),
            BusKind::Load => None,
        }
    }
}

/// Flow-deviation bounds; an absent bound is stored as an infinity.
#[derive(Clone, Debug, PartialEq)]
pub struct LineLimits {
    pub lower: f64,
    pub upper: f64,
}

impl LineLimits {
    pub fn unbounded() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn symmetric(bound: f64) -> Self {
        Self {
            lower: -bound,
            upper: bound,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() || self.upper.is_finite()
    }
}

/// A line stored by internal bus indices. Positive flow runs `from -> to`.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub b: f64,
    pub limits: LineLimits,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AreaMember {
    pub line: usize,
    pub sign: i8,
}

/// One inter-area flow constraint: `sum_j s_j * p_j = psi`.
#[derive(Clone, Debug, PartialEq)]
pub struct InterAreaSpec {
    pub members: Vec<AreaMember>,
    pub psi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridNetwork {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub areas: Vec<InterAreaSpec>,
}

impl GridNetwork {
    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn m(&self) -> usize {
        self.lines.len()
    }

    pub fn generators(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.buses[i].is_generator())
            .collect()
    }

    pub fn loads(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| !self.buses[i].is_generator())
            .collect()
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Index of the line joining buses with external ids `from` and `to`,
    /// in either orientation. The flag is `true` when the stored line runs
    /// the other way.
    pub fn find_line(&self, from: usize, to: usize) -> Option<(usize, bool)> {
        let f = self.bus_index(from)?;
        let t = self.bus_index(to)?;
        self.lines.iter().enumerate().find_map(|(j, l)| {
            if l.from == f && l.to == t {
                Some((j, false))
            } else if l.from == t && l.to == f {
                Some((j, true))
            } else {
                None
            }
        })
    }

    pub fn line_label(&self, j: usize) -> (usize, usize) {
        let l = &self.lines[j];
        (self.buses[l.from].id, self.buses[l.to].id)
    }

    pub fn is_connected(&self) -> Result<(), usize> {
        let n = self.n();
        if n == 0 {
            return Ok(());
        }
        let adj = self.adjacency();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &k in &adj[i] {
                if !seen[k] {
                    seen[k] = true;
                    queue.push_back(k);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(i),
            None => Ok(()),
        }
    }

    /// Neighbour lists by internal index.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n()];
        for l in &self.lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        adj
    }

    /// Checks every structural and physical invariant of the network.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.buses.is_empty() {
            return Err(ScenarioError::Invalid("network has no buses".into()));
        }
        let mut ids: Vec<usize> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ScenarioError::DuplicateBus(w[0]));
        }
        for bus in &self.buses {
            positive("damping", bus.id, bus.damping)?;
            if let Some(g) = bus.generator() {
                positive("inertia", bus.id, g.inertia)?;
                positive("turbine time constant", bus.id, g.turbine_tc)?;
                positive("governor time constant", bus.id, g.governor_tc)?;
                positive("estimated turbine time constant", bus.id, g.turbine_tc_est)?;
                positive(
                    "estimated governor time constant",
                    bus.id,
                    g.governor_tc_est,
                )?;
            }
            let c = &bus.control;
            positive("cost weight", bus.id, c.weight)?;
            if !(c.min.is_finite() && c.max.is_finite()) {
                return Err(ScenarioError::BadBus {
                    bus: bus.id,
                    reason: "control limits must be finite".into(),
                });
            }
            if !(c.min <= 0.0 && 0.0 <= c.max) {
                return Err(ScenarioError::BadBus {
                    bus: bus.id,
                    reason: format!("control limits [{}, {}] must contain zero", c.min, c.max),
                });
            }
        }
        for l in &self.lines {
            let (from, to) = (
                self.buses.get(l.from).map_or(l.from, |b| b.id),
                self.buses.get(l.to).map_or(l.to, |b| b.id),
            );
            if l.from >= self.n() || l.to >= self.n() {
                return Err(ScenarioError::BadLine {
                    from,
                    to,
                    reason: "endpoint out of range".into(),
                });
            }
            if l.from == l.to {
                return Err(ScenarioError::SelfLoop { from, to });
            }
            if !(l.b.is_finite() && l.b > 0.0) {
                return Err(ScenarioError::BadLine {
                    from,
                    to,
                    reason: format!("susceptance coefficient must be positive, got {}", l.b),
                });
            }
            if l.limits.lower.is_nan()
                || l.limits.upper.is_nan()
                || !(l.limits.lower <= 0.0 && 0.0 <= l.limits.upper)
            {
                return Err(ScenarioError::BadLine {
                    from,
                    to,
                    reason: format!(
                        "flow limits [{}, {}] must contain zero",
                        l.limits.lower, l.limits.upper
                    ),
                });
            }
        }
        if let Err(i) = self.is_connected() {
            return Err(ScenarioError::Disconnected(self.buses[i].id));
        }
        for (k, area) in self.areas.iter().enumerate() {
            if area.members.is_empty() || area.members.iter().all(|m| m.sign == 0) {
                return Err(ScenarioError::BadArea {
                    index: k,
                    reason: "needs at least one member line with nonzero sign".into(),
                });
            }
            if !area.psi.is_finite() {
                return Err(ScenarioError::BadArea {
                    index: k,
                    reason: "target must be finite".into(),
                });
            }
            for m in &area.members {
                if m.line >= self.m() || !matches!(m.sign, -1..=1) {
                    return Err(ScenarioError::BadArea {
                        index: k,
                        reason: "invalid member line or sign".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn positive(what: &'static str, bus: usize, value: f64) -> Result<(), ScenarioError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::NonPositive { what, bus, value })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimSettings {
    pub dt: f64,
    pub horizon: f64,
    /// Quiet interval simulated before the disturbance onset at t = 0.
    pub pre_roll: f64,
    /// Spacing of recorded samples; every step when absent.
    pub record_interval: Option<f64>,
    pub nominal_hz: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 60.0,
            pre_roll: 1.0,
            record_interval: None,
            nominal_hz: 60.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub base_mva: f64,
    pub network: GridNetwork,
    /// Constant disturbance per bus (p.u.), applied as a step at t = 0.
    pub disturbance: Vec<f64>,
    pub sim: SimSettings,
    pub controller: ControllerSettings,
    pub agc: AgcSettings,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.network.validate()?;
        if self.disturbance.len() != self.network.n() {
            return Err(ScenarioError::Invalid(format!(
                "disturbance has {} entries for {} buses",
                self.disturbance.len(),
                self.network.n()
            )));
        }
        if self.disturbance.iter().any(|d| !d.is_finite()) {
            return Err(ScenarioError::Invalid("disturbance must be finite".into()));
        }
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(ScenarioError::Invalid(format!(
                "step must be positive, got {}",
                s.dt
            )));
        }
        if !(s.horizon > 0.0 && s.horizon.is_finite()) {
            return Err(ScenarioError::Invalid(format!(
                "horizon must be positive, got {}",
                s.horizon
            )));
        }
        if !(s.pre_roll >= 0.0 && s.pre_roll.is_finite()) {
            return Err(ScenarioError::Invalid(
                "pre-roll must be nonnegative".into(),
            ));
        }
        if let Some(r) = s.record_interval {
            if !(r > 0.0 && r.is_finite()) {
                return Err(ScenarioError::Invalid(
                    "record interval must be positive".into(),
                ));
            }
        }
        self.controller.validate()?;
        self.agc.validate(&self.network)?;
        Ok(())
    }

    pub fn total_disturbance(&self) -> f64 {
        self.disturbance.iter().sum()
    }
}

/// Node-branch incidence matrix: column `j` has +1 at the from-bus of line
/// `j` and -1 at its to-bus.
pub fn incidence_matrix<T: Scalar>(network: &GridNetwork) -> DenseMatrix<T> {
    let mut c = DenseMatrix::zeros(network.n(), network.m());
    for (j, l) in network.lines.iter().enumerate() {
        c[(l.from, j)] = T::one();
        c[(l.to, j)] = -T::one();
    }
    c
}

/// `C diag(b) C^T`, assembled edge by edge.
pub fn weighted_laplacian<T: Scalar>(network: &GridNetwork) -> DenseMatrix<T> {
    let n = network.n();
    let mut lap = DenseMatrix::<T>::zeros(n, n);
    for l in &network.lines {
        let b = T::from_f64_exact(l.b);
        let (f, t) = (l.from, l.to);
        lap[(f, f)] = lap[(f, f)].clone() + b.clone();
        lap[(t, t)] = lap[(t, t)].clone() + b.clone();
        lap[(f, t)] = lap[(f, t)].clone() - b.clone();
        lap[(t, f)] = lap[(t, f)].clone() - b;
    }
    lap
}

/// Inter-area membership matrix `S` (areas x lines).
pub fn area_matrix<T: Scalar>(network: &GridNetwork) -> DenseMatrix<T> {
    let mut s = DenseMatrix::<T>::zeros(network.areas.len(), network.m());
    for (k, area) in network.areas.iter().enumerate() {
        for m in &area.members {
            s[(k, m.line)] = s[(k, m.line)].clone() + T::from_i8(m.sign).expect("sign");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{path3, two_bus};

    #[test]
    fn two_bus_incidence_and_laplacian() {
        let net = two_bus().network;
        let c: DenseMatrix<f64> = incidence_matrix(&net);
        assert_eq!(c.row(0), &[1.0]);
        assert_eq!(c.row(1), &[-1.0]);
        let l: DenseMatrix<f64> = weighted_laplacian(&net);
        assert_eq!(
            l,
            DenseMatrix::from_rows(vec![vec![1.0, -1.0], vec![-1.0, 1.0]])
        );
    }

    #[test]
    fn path_incidence_columns() {
        let net = path3(&[1.0, 2.0]).network;
        let c: DenseMatrix<f64> = incidence_matrix(&net);
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|j| (0..3).map(|i| c[(i, j)]).collect())
            .collect();
        assert_eq!(cols, vec![vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0]]);
    }

    #[test]
    fn disconnected_network_rejected() {
        let mut s = path3(&[1.0, 1.0]);
        s.network.lines.pop();
        assert!(matches!(
            s.network.validate(),
            Err(ScenarioError::Disconnected(3))
        ));
    }

    #[test]
    fn self_loop_and_bad_susceptance_rejected() {
        let mut s = path3(&[1.0, 1.0]);
        s.network.lines[0].to = s.network.lines[0].from;
        assert!(matches!(
            s.network.validate(),
            Err(ScenarioError::SelfLoop { .. })
        ));
        let mut s = path3(&[1.0, 1.0]);
        s.network.lines[1].b = 0.0;
        assert!(matches!(
            s.network.validate(),
            Err(ScenarioError::BadLine { .. })
        ));
    }

    #[test]
    fn infeasible_reference_flow_limits_rejected() {
        let mut s = path3(&[1.0, 1.0]);
        s.network.lines[0].limits = LineLimits {
            lower: 0.1,
            upper: 0.2,
        };
        assert!(s.network.validate().is_err());
    }
}
