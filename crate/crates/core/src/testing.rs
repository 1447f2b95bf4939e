//! Small in-memory scenarios for tests and doc examples.

use crate::agc::AgcSettings;
use crate::controller::ControllerSettings;
use crate::grid::{
    Bus, BusKind, ControlLimits, GeneratorParams, GridNetwork, Line, LineLimits, Scenario,
    SimSettings,
};

pub fn generator(id: usize, inertia: f64) -> Bus {
    Bus {
        id,
        kind: BusKind::Generator(GeneratorParams {
            inertia,
            turbine_tc: 0.5,
            governor_tc: 0.2,
            turbine_tc_est: 0.5,
            governor_tc_est: 0.2,
        }),
        damping: 1.0,
        control: ControlLimits {
            min: -1.0,
            max: 1.0,
            weight: 1.0,
        },
    }
}

pub fn load(id: usize) -> Bus {
    Bus {
        id,
        kind: BusKind::Load,
        damping: 1.0,
        control: ControlLimits {
            min: -1.0,
            max: 1.0,
            weight: 1.0,
        },
    }
}

pub fn line(from: usize, to: usize, b: f64) -> Line {
    Line {
        from,
        to,
        b,
        limits: LineLimits::unbounded(),
    }
}

pub fn scenario(buses: Vec<Bus>, lines: Vec<Line>) -> Scenario {
    let n = buses.len();
    Scenario {
        name: None,
        base_mva: 100.0,
        network: GridNetwork {
            buses,
            lines,
            areas: Vec::new(),
        },
        disturbance: vec![0.0; n],
        sim: SimSettings::default(),
        controller: ControllerSettings::default(),
        agc: AgcSettings::default(),
    }
}

/// Generator bus 1 (M = 10) and load bus 2 joined by one line with b = 1;
/// every bus can move its control within +-1.
pub fn two_bus() -> Scenario {
    scenario(vec![generator(1, 10.0), load(2)], vec![line(0, 1, 1.0)])
}

/// Path 1 - 2 - 3 with the given susceptances: generators at the ends, a
/// load in the middle.
pub fn path3(b: &[f64]) -> Scenario {
    scenario(
        vec![generator(1, 10.0), load(2), generator(3, 8.0)],
        vec![line(0, 1, b[0]), line(1, 2, b[1])],
    )
}
