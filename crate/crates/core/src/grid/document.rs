//! TOML scenario documents.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AreaMember, Bus, BusKind, ControlLimits, GeneratorParams, GridNetwork, InterAreaSpec, Line,
    LineLimits, Scenario, ScenarioError, SimSettings,
};
use crate::agc::AgcSettings;
use crate::controller::{ControllerSettings, DisturbanceMode, RocofMode};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default = "default_base")]
    base_mva: f64,
    buses: Vec<BusDoc>,
    lines: Vec<LineDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    areas: Vec<AreaDoc>,
    #[serde(default)]
    disturbance: BTreeMap<String, f64>,
    #[serde(default)]
    sim: SimDoc,
    #[serde(default)]
    controller: ControllerDoc,
    #[serde(default)]
    agc: AgcDoc,
}

fn default_base() -> f64 {
    100.0
}

#[derive(Debug, Serialize, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum KindDoc {
    Generator,
    Load,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusDoc {
    id: usize,
    kind: KindDoc,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    inertia: Option<f64>,
    #[serde(rename = "D")]
    damping: f64,
    #[serde(rename = "TM", default, skip_serializing_if = "Option::is_none")]
    tm: Option<f64>,
    #[serde(rename = "TG", default, skip_serializing_if = "Option::is_none")]
    tg: Option<f64>,
    #[serde(rename = "TM_est", default, skip_serializing_if = "Option::is_none")]
    tm_est: Option<f64>,
    #[serde(rename = "TG_est", default, skip_serializing_if = "Option::is_none")]
    tg_est: Option<f64>,
    #[serde(rename = "pC_min", default)]
    pc_min: f64,
    #[serde(rename = "pC_max", default)]
    pc_max: f64,
    #[serde(rename = "W", default = "one")]
    weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineDoc {
    from: usize,
    to: usize,
    b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_max: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AreaDoc {
    #[serde(default)]
    psi: f64,
    lines: Vec<AreaLineDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AreaLineDoc {
    line: [usize; 2],
    sign: i8,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SimDoc {
    dt: f64,
    horizon: f64,
    pre_roll: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    record_interval: Option<f64>,
    nominal_hz: f64,
}

impl Default for SimDoc {
    fn default() -> Self {
        let s = SimSettings::default();
        Self {
            dt: s.dt,
            horizon: s.horizon,
            pre_roll: s.pre_roll,
            record_interval: s.record_interval,
            nominal_hz: s.nominal_hz,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ControllerDoc {
    rho: f64,
    mode: DisturbanceMode,
    rocof: RocofMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    rocof_filter: Option<f64>,
    time_scale: f64,
    #[serde(rename = "K_u_hi", skip_serializing_if = "Option::is_none")]
    k_u_hi: Option<f64>,
    #[serde(rename = "K_u_lo", skip_serializing_if = "Option::is_none")]
    k_u_lo: Option<f64>,
    #[serde(rename = "K_mu_hi", skip_serializing_if = "Option::is_none")]
    k_mu_hi: Option<f64>,
    #[serde(rename = "K_mu_lo", skip_serializing_if = "Option::is_none")]
    k_mu_lo: Option<f64>,
    #[serde(rename = "K_phi_hi", skip_serializing_if = "Option::is_none")]
    k_phi_hi: Option<f64>,
    #[serde(rename = "K_phi_lo", skip_serializing_if = "Option::is_none")]
    k_phi_lo: Option<f64>,
}

impl Default for ControllerDoc {
    fn default() -> Self {
        ControllerDoc::from(&ControllerSettings::default())
    }
}

impl From<&ControllerSettings> for ControllerDoc {
    fn from(c: &ControllerSettings) -> Self {
        Self {
            rho: c.rho,
            mode: c.mode,
            rocof: c.rocof,
            rocof_filter: c.rocof_filter,
            time_scale: c.time_scale,
            k_u_hi: c.k_u_hi,
            k_u_lo: c.k_u_lo,
            k_mu_hi: c.k_mu_hi,
            k_mu_lo: c.k_mu_lo,
            k_phi_hi: c.k_phi_hi,
            k_phi_lo: c.k_phi_lo,
        }
    }
}

impl From<ControllerDoc> for ControllerSettings {
    fn from(c: ControllerDoc) -> Self {
        Self {
            rho: c.rho,
            mode: c.mode,
            rocof: c.rocof,
            rocof_filter: c.rocof_filter,
            time_scale: c.time_scale,
            k_u_hi: c.k_u_hi,
            k_u_lo: c.k_u_lo,
            k_mu_hi: c.k_mu_hi,
            k_mu_lo: c.k_mu_lo,
            k_phi_hi: c.k_phi_hi,
            k_phi_lo: c.k_phi_lo,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AgcDoc {
    droop: f64,
    k_i: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    participation: BTreeMap<String, f64>,
}

impl Default for AgcDoc {
    fn default() -> Self {
        let a = AgcSettings::default();
        Self {
            droop: a.droop,
            k_i: a.k_i,
            beta: a.beta,
            participation: BTreeMap::new(),
        }
    }
}

fn parse_bus_key(key: &str, section: &str) -> Result<usize, ScenarioError> {
    key.trim()
        .parse()
        .map_err(|_| ScenarioError::Parse(format!("{section}: '{key}' is not a bus id")))
}

fn bus_lookup(
    network: &GridNetwork,
    id: usize,
    context: impl Into<String>,
) -> Result<usize, ScenarioError> {
    network
        .bus_index(id)
        .ok_or_else(|| ScenarioError::UnknownBus {
            context: context.into(),
            bus: id,
        })
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;

    let mut buses = Vec::with_capacity(doc.buses.len());
    for b in &doc.buses {
        let kind = match b.kind {
            KindDoc::Load => {
                if b.inertia.is_some() || b.tm.is_some() || b.tg.is_some() {
                    return Err(ScenarioError::BadBus {
                        bus: b.id,
                        reason: "load buses carry no inertia or turbine/governor data".into(),
                    });
                }
                BusKind::Load
            }
            KindDoc::Generator => {
                let need = |v: Option<f64>, what: &str| {
                    v.ok_or_else(|| ScenarioError::BadBus {
                        bus: b.id,
                        reason: format!("generator is missing {what}"),
                    })
                };
                let tm = need(b.tm, "TM")?;
                let tg = need(b.tg, "TG")?;
                BusKind::Generator(GeneratorParams {
                    inertia: need(b.inertia, "M")?,
                    turbine_tc: tm,
                    governor_tc: tg,
                    turbine_tc_est: b.tm_est.unwrap_or(tm),
                    governor_tc_est: b.tg_est.unwrap_or(tg),
                })
            }
        };
        buses.push(Bus {
            id: b.id,
            kind,
            damping: b.damping,
            control: ControlLimits {
                min: b.pc_min,
                max: b.pc_max,
                weight: b.weight,
            },
        });
    }
    let mut network = GridNetwork {
        buses,
        lines: Vec::new(),
        areas: Vec::new(),
    };
    // Duplicates must be caught before id lookups become ambiguous.
    let mut ids: Vec<usize> = network.buses.iter().map(|b| b.id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(ScenarioError::DuplicateBus(w[0]));
    }

    for l in &doc.lines {
        let ctx = format!("line {}-{}", l.from, l.to);
        let from = bus_lookup(&network, l.from, ctx.clone())?;
        let to = bus_lookup(&network, l.to, ctx)?;
        network.lines.push(Line {
            from,
            to,
            b: l.b,
            limits: LineLimits {
                lower: l.p_min.unwrap_or(f64::NEG_INFINITY),
                upper: l.p_max.unwrap_or(f64::INFINITY),
            },
        });
    }

    for (k, a) in doc.areas.iter().enumerate() {
        let mut members = Vec::with_capacity(a.lines.len());
        for al in &a.lines {
            let [f, t] = al.line;
            let (line, reversed) =
                network
                    .find_line(f, t)
                    .ok_or_else(|| ScenarioError::BadArea {
                        index: k,
                        reason: format!("no line {f}-{t}"),
                    })?;
            let sign = if reversed { -al.sign } else { al.sign };
            members.push(AreaMember { line, sign });
        }
        network.areas.push(InterAreaSpec {
            members,
            psi: a.psi,
        });
    }

    let mut disturbance = vec![0.0; network.n()];
    for (key, value) in &doc.disturbance {
        let id = parse_bus_key(key, "disturbance")?;
        let i = bus_lookup(&network, id, "disturbance")?;
        disturbance[i] += value;
    }

    let mut participation = BTreeMap::new();
    for (key, value) in &doc.agc.participation {
        let id = parse_bus_key(key, "agc.participation")?;
        bus_lookup(&network, id, "agc.participation")?;
        participation.insert(id, *value);
    }

    let scenario = Scenario {
        name: doc.name,
        base_mva: doc.base_mva,
        network,
        disturbance,
        sim: SimSettings {
            dt: doc.sim.dt,
            horizon: doc.sim.horizon,
            pre_roll: doc.sim.pre_roll,
            record_interval: doc.sim.record_interval,
            nominal_hz: doc.sim.nominal_hz,
        },
        controller: doc.controller.into(),
        agc: AgcSettings {
            droop: doc.agc.droop,
            k_i: doc.agc.k_i,
            beta: doc.agc.beta,
            participation,
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario(&text)
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Serializes a scenario back to its document form.
pub fn emit_scenario(scenario: &Scenario) -> String {
    let net = &scenario.network;
    let buses = net
        .buses
        .iter()
        .map(|b| {
            let g = b.generator();
            BusDoc {
                id: b.id,
                kind: if g.is_some() {
                    KindDoc::Generator
                } else {
                    KindDoc::Load
                },
                inertia: g.map(|g| g.inertia),
                damping: b.damping,
                tm: g.map(|g| g.turbine_tc),
                tg: g.map(|g| g.governor_tc),
                tm_est: g.map(|g| g.turbine_tc_est),
                tg_est: g.map(|g| g.governor_tc_est),
                pc_min: b.control.min,
                pc_max: b.control.max,
                weight: b.control.weight,
            }
        })
        .collect();
    let lines = net
        .lines
        .iter()
        .map(|l| LineDoc {
            from: net.buses[l.from].id,
            to: net.buses[l.to].id,
            b: l.b,
            p_min: finite(l.limits.lower),
            p_max: finite(l.limits.upper),
        })
        .collect();
    let areas = net
        .areas
        .iter()
        .map(|a| AreaDoc {
            psi: a.psi,
            lines: a
                .members
                .iter()
                .map(|m| {
                    let (f, t) = net.line_label(m.line);
                    AreaLineDoc {
                        line: [f, t],
                        sign: m.sign,
                    }
                })
                .collect(),
        })
        .collect();
    let disturbance = scenario
        .disturbance
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (net.buses[i].id.to_string(), *v))
        .collect();
    let doc = ScenarioDoc {
        name: scenario.name.clone(),
        base_mva: scenario.base_mva,
        buses,
        lines,
        areas,
        disturbance,
        sim: SimDoc {
            dt: scenario.sim.dt,
            horizon: scenario.sim.horizon,
            pre_roll: scenario.sim.pre_roll,
            record_interval: scenario.sim.record_interval,
            nominal_hz: scenario.sim.nominal_hz,
        },
        controller: ControllerDoc::from(&scenario.controller),
        agc: AgcDoc {
            droop: scenario.agc.droop,
            k_i: scenario.agc.k_i,
            beta: scenario.agc.beta.clone(),
            participation: scenario
                .agc
                .participation
                .iter()
                .map(|(id, v)| (id.to_string(), *v))
                .collect(),
        },
    };
    toml::to_string(&doc).expect("scenario documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"
[[buses]]
id = 1
kind = "generator"
M = 10.0
D = 1.0
TM = 0.5
TG = 0.2
pC_min = -1.0
pC_max = 1.0

[[buses]]
id = 2
kind = "load"
D = 1.0

[[lines]]
from = 1
to = 2
b = 1.0
"#;

    #[test]
    fn smallest_connected_document() {
        let s = load_scenario(TWO_BUS).unwrap();
        assert_eq!(s.network.n(), 2);
        assert_eq!(s.network.m(), 1);
        assert_eq!(s.network.generators(), vec![0]);
        let g = s.network.buses[0].generator().unwrap();
        assert_eq!(g.turbine_tc_est, 0.5);
        assert!(!s.network.lines[0].limits.is_bounded());
    }

    #[test]
    fn duplicate_bus_rejected() {
        let text = TWO_BUS.replace("id = 2", "id = 1");
        assert!(matches!(
            load_scenario(&text),
            Err(ScenarioError::DuplicateBus(1))
        ));
    }

    #[test]
    fn malformed_document_is_parse_error() {
        assert!(matches!(
            load_scenario("buses = 3"),
            Err(ScenarioError::Parse(_))
        ));
        let typo = TWO_BUS.replace("b = 1.0", "bb = 1.0");
        assert!(matches!(load_scenario(&typo), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn nonpositive_inertia_rejected() {
        let text = TWO_BUS.replace("M = 10.0", "M = 0.0");
        assert!(matches!(
            load_scenario(&text),
            Err(ScenarioError::NonPositive {
                what: "inertia",
                bus: 1,
                ..
            })
        ));
    }

    #[test]
    fn unknown_disturbance_bus_rejected() {
        let text = format!("{TWO_BUS}\n[disturbance]\n7 = -1.0\n");
        assert!(matches!(
            load_scenario(&text),
            Err(ScenarioError::UnknownBus { bus: 7, .. })
        ));
    }

    #[test]
    fn reversed_area_line_flips_sign() {
        let text =
            format!("{TWO_BUS}\n[[areas]]\npsi = 0.0\nlines = [{{ line = [2, 1], sign = 1 }}]\n");
        let s = load_scenario(&text).unwrap();
        assert_eq!(s.network.areas[0].members[0].sign, -1);
    }
}
