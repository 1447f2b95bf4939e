use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::{Scenario, ScenarioError};
use crate::model::Model;
use crate::scalar::Real;

/// Where the controller's disturbance signal comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceMode {
    /// Reconstructed from local measurements and the mechanical-power
    /// estimator.
    #[default]
    Estimator,
    /// The true disturbance is handed to the controller. Test use only.
    Known,
}

/// Source of the generator frequency derivative used by the estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RocofMode {
    #[default]
    Measured,
    /// Backward difference of sampled frequency, optionally low-passed.
    BackwardDifference,
}

/// Controller section of a scenario document. Gate bounds left unset are
/// derived from the scenario limits.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerSettings {
    pub rho: f64,
    pub mode: DisturbanceMode,
    pub rocof: RocofMode,
    pub rocof_filter: Option<f64>,
    /// Rate multiplier on the primal-dual integrators relative to plant time.
    pub time_scale: f64,
    pub k_u_hi: Option<f64>,
    pub k_u_lo: Option<f64>,
    pub k_mu_hi: Option<f64>,
    pub k_mu_lo: Option<f64>,
    pub k_phi_hi: Option<f64>,
    pub k_phi_lo: Option<f64>,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            rho: 10.0,
            mode: DisturbanceMode::Estimator,
            rocof: RocofMode::Measured,
            rocof_filter: None,
            time_scale: 1.0,
            k_u_hi: None,
            k_u_lo: None,
            k_mu_hi: None,
            k_mu_lo: None,
            k_phi_hi: None,
            k_phi_lo: None,
        }
    }
}

impl ControllerSettings {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.rho.is_finite() && self.rho >= 1.0) {
            return Err(ScenarioError::Invalid(format!(
                "controller.rho must be a finite factor >= 1, got {}",
                self.rho
            )));
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(ScenarioError::Invalid(
                "controller.time_scale must be positive".into(),
            ));
        }
        if let Some(f) = self.rocof_filter {
            if !(f.is_finite() && f > 0.0) {
                return Err(ScenarioError::Invalid(
                    "controller.rocof_filter must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Resolved gate bounds and timing for one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig<T> {
    pub rho: T,
    pub time_scale: T,
    pub mode: DisturbanceMode,
    pub rocof: RocofMode,
    pub rocof_filter: Option<T>,
    /// Per bus.
    pub k_u_hi: Vec<T>,
    pub k_u_lo: Vec<T>,
    /// Per line.
    pub k_mu_hi: Vec<T>,
    pub k_mu_lo: Vec<T>,
    /// Per inter-area constraint.
    pub k_phi_hi: Vec<T>,
    pub k_phi_lo: Vec<T>,
}

/// Default dual and primal gate bounds `(K_dual, K_u)` before overrides.
///
/// Dual bounds scale with the tightest finite flow limit (or the disturbance
/// size when no limit exists); the primal bound sits a factor `rho` above
/// both the dual bounds and `rho * W * |p^C limit|`.
pub fn default_gate_bounds(scenario: &Scenario) -> (f64, f64) {
    let rho = scenario.controller.rho;
    let net = &scenario.network;
    let flow_scale = net
        .lines
        .iter()
        .flat_map(|l| [l.limits.upper, -l.limits.lower])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let mut dual_base = if flow_scale > 0.0 {
        flow_scale
    } else {
        scenario.disturbance.iter().map(|d| d.abs()).sum()
    };
    if dual_base <= 0.0 {
        dual_base = 1.0;
    }
    let k_dual = rho * dual_base;
    let control_scale = net
        .buses
        .iter()
        .map(|b| b.control.weight * b.control.max.max(-b.control.min))
        .fold(0.0f64, f64::max);
    let mut k_u = (rho * rho * control_scale).max(rho * k_dual);
    if k_u <= 0.0 {
        k_u = rho * rho;
    }
    (k_dual, k_u)
}

impl<T: Real> ControllerConfig<T> {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let s = &scenario.controller;
        let (k_dual, k_u) = default_gate_bounds(scenario);
        let n = scenario.network.n();
        let m = scenario.network.m();
        let a = scenario.network.areas.len();
        let c = |x: f64| T::lit(x);
        Self {
            rho: c(s.rho),
            time_scale: c(s.time_scale),
            mode: s.mode,
            rocof: s.rocof,
            rocof_filter: s.rocof_filter.map(c),
            k_u_hi: vec![c(s.k_u_hi.unwrap_or(k_u)); n],
            k_u_lo: vec![c(s.k_u_lo.unwrap_or(-k_u)); n],
            k_mu_hi: vec![c(s.k_mu_hi.unwrap_or(k_dual)); m],
            k_mu_lo: vec![c(s.k_mu_lo.unwrap_or(k_dual)); m],
            k_phi_hi: vec![c(s.k_phi_hi.unwrap_or(k_dual)); a],
            k_phi_lo: vec![c(s.k_phi_lo.unwrap_or(-k_dual)); a],
        }
    }
}

/// A violated gain inequality.
#[derive(Clone, Debug, PartialEq)]
pub enum GainViolation {
    /// A gate bound is infinite or NaN; every box must be finite.
    NonFinite { bound: &'static str, index: usize },
    /// A dual box does not contain zero.
    DualBoxOrientation { bound: &'static str, index: usize },
    /// `rho * max(dual bounds) <= min(-K_u_lo, K_u_hi)` fails.
    DualSeparation { dual_max: f64, primal_min: f64 },
    /// `rho * W_i * pC_max_i <= K_u_hi_i` fails.
    UpperControlMargin {
        bus: usize,
        required: f64,
        actual: f64,
    },
    /// `K_u_lo_i <= rho * W_i * pC_min_i` fails.
    LowerControlMargin {
        bus: usize,
        required: f64,
        actual: f64,
    },
    /// `K_u_hi_i > max_j pC_max_j` fails.
    UpperBelowReserve {
        bus: usize,
        max_limit: f64,
        actual: f64,
    },
}

impl fmt::Display for GainViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFinite { bound, index } => write!(f, "{bound}[{index}] is not finite"),
            Self::DualBoxOrientation { bound, index } => {
                write!(f, "{bound}[{index}] has the wrong sign for a box around zero")
            }
            Self::DualSeparation {
                dual_max,
                primal_min,
            } => write!(
                f,
                "dual/primal separation: rho * {dual_max} exceeds primal box {primal_min}"
            ),
            Self::UpperControlMargin {
                bus,
                required,
                actual,
            } => write!(f, "upper control margin at bus index {bus}: K_u_hi = {actual} < {required}"),
            Self::LowerControlMargin {
                bus,
                required,
                actual,
            } => write!(f, "lower control margin at bus index {bus}: K_u_lo = {actual} > {required}"),
            Self::UpperBelowReserve {
                bus,
                max_limit,
                actual,
            } => write!(
                f,
                "K_u_hi at bus index {bus} = {actual} does not exceed the largest control limit {max_limit}"
            ),
        }
    }
}

/// Checks the gain separation the stability argument relies on, with the
/// order relations made concrete by the factor `rho`.
pub fn check_gain_conditions<T: Real>(
    model: &Model<T>,
    config: &ControllerConfig<T>,
) -> Result<(), Vec<GainViolation>> {
    let mut out = Vec::new();
    let f = |x: T| x.to_f64_lossy();
    let groups: [(&'static str, &[T]); 6] = [
        ("K_u_hi", &config.k_u_hi),
        ("K_u_lo", &config.k_u_lo),
        ("K_mu_hi", &config.k_mu_hi),
        ("K_mu_lo", &config.k_mu_lo),
        ("K_phi_hi", &config.k_phi_hi),
        ("K_phi_lo", &config.k_phi_lo),
    ];
    for (bound, values) in groups {
        for (index, v) in values.iter().enumerate() {
            if !v.is_finite() {
                out.push(GainViolation::NonFinite { bound, index });
            }
        }
    }
    if !out.is_empty() {
        return Err(out);
    }
    for (bound, values, upper_side) in [
        ("K_mu_hi", &config.k_mu_hi, true),
        ("K_mu_lo", &config.k_mu_lo, true),
        ("K_phi_hi", &config.k_phi_hi, true),
        ("K_phi_lo", &config.k_phi_lo, false),
    ] {
        for (index, v) in values.iter().enumerate() {
            if (upper_side && *v < T::zero()) || (!upper_side && *v > T::zero()) {
                out.push(GainViolation::DualBoxOrientation { bound, index });
            }
        }
    }

    let rho = f(config.rho);
    let dual_max = config
        .k_mu_hi
        .iter()
        .chain(&config.k_mu_lo)
        .chain(&config.k_phi_hi)
        .map(|v| f(*v))
        .chain(config.k_phi_lo.iter().map(|v| -f(*v)))
        .fold(0.0f64, f64::max);
    let primal_min = config
        .k_u_hi
        .iter()
        .map(|v| f(*v))
        .chain(config.k_u_lo.iter().map(|v| -f(*v)))
        .fold(f64::INFINITY, f64::min);
    if rho * dual_max > primal_min {
        out.push(GainViolation::DualSeparation {
            dual_max,
            primal_min,
        });
    }
    let max_limit = model
        .pc_max
        .iter()
        .map(|v| f(*v))
        .fold(f64::NEG_INFINITY, f64::max);
    for bus in 0..model.n {
        let w = f(model.weight[bus]);
        let hi = f(config.k_u_hi[bus]);
        let lo = f(config.k_u_lo[bus]);
        let required_hi = rho * w * f(model.pc_max[bus]);
        if required_hi > hi {
            out.push(GainViolation::UpperControlMargin {
                bus,
                required: required_hi,
                actual: hi,
            });
        }
        let required_lo = rho * w * f(model.pc_min[bus]);
        if lo > required_lo {
            out.push(GainViolation::LowerControlMargin {
                bus,
                required: required_lo,
                actual: lo,
            });
        }
        if hi <= max_limit {
            out.push(GainViolation::UpperBelowReserve {
                bus,
                max_limit,
                actual: hi,
            });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{path3, two_bus};

    #[test]
    fn derived_defaults_pass() {
        for s in [two_bus(), path3(&[1.0, 2.0])] {
            let m: Model<f64> = Model::from_scenario(&s);
            let c = ControllerConfig::<f64>::from_scenario(&s);
            assert_eq!(check_gain_conditions(&m, &c), Ok(()));
        }
    }

    #[test]
    fn upper_box_below_control_limit_is_flagged() {
        let s = two_bus();
        let m: Model<f64> = Model::from_scenario(&s);
        let mut c = ControllerConfig::<f64>::from_scenario(&s);
        c.k_u_hi[0] = 0.5 * m.pc_max[0];
        let err = check_gain_conditions(&m, &c).unwrap_err();
        assert!(err
            .iter()
            .any(|v| matches!(v, GainViolation::UpperControlMargin { bus: 0, .. })));
        assert!(err
            .iter()
            .any(|v| matches!(v, GainViolation::UpperBelowReserve { bus: 0, .. })));
    }

    #[test]
    fn infinite_bounds_are_flagged() {
        let s = two_bus();
        let m: Model<f64> = Model::from_scenario(&s);
        let mut c = ControllerConfig::<f64>::from_scenario(&s);
        for v in c
            .k_u_hi
            .iter_mut()
            .chain(&mut c.k_mu_hi)
            .chain(&mut c.k_mu_lo)
            .chain(&mut c.k_phi_hi)
        {
            *v = f64::INFINITY;
        }
        for v in c.k_u_lo.iter_mut().chain(&mut c.k_phi_lo) {
            *v = f64::NEG_INFINITY;
        }
        let err = check_gain_conditions(&m, &c).unwrap_err();
        assert!(err
            .iter()
            .all(|v| matches!(v, GainViolation::NonFinite { .. })));
        // Two bus bounds at each of two buses, two line bounds on one line.
        assert_eq!(err.len(), 6);
    }

    #[test]
    fn dual_separation_is_flagged() {
        let s = two_bus();
        let m: Model<f64> = Model::from_scenario(&s);
        let mut c = ControllerConfig::<f64>::from_scenario(&s);
        c.k_mu_hi[0] = c.k_u_hi[0];
        assert!(check_gain_conditions(&m, &c)
            .unwrap_err()
            .iter()
            .any(|v| matches!(v, GainViolation::DualSeparation { .. })));
    }
}
