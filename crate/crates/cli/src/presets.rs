//! Built-in scenarios: the district heating and HVDC case studies, the
//! oscillating reduced controller and ramp tracking in incremental
//! coordinates.

use crate::scenario::{
    CommKind, CommSpec, ControllerSpec, DisturbanceEntry, InitModeName, InitialSpec, IntegrationSpec, MapSpec,
    MonitorSpec, NetworkSpec, OneOrMany, PlantSpec, RampSpec, Scenario, ScheduleSpec, SetpointEntry, VariantName,
    SCHEMA_VERSION,
};

pub const NAMES: [&str; 4] = ["district_heating", "hvdc", "oscillation_demo", "ramp_tracking"];

pub fn get(name: &str) -> Option<Scenario> {
    match name {
        "district_heating" => Some(district_heating()),
        "hvdc" => Some(hvdc()),
        "oscillation_demo" => Some(oscillation_demo()),
        "ramp_tracking" => Some(ramp_tracking()),
        _ => None,
    }
}

pub fn all() -> Vec<Scenario> {
    NAMES.iter().filter_map(|n| get(n)).collect()
}

fn cycle4(actuated: Vec<usize>) -> NetworkSpec {
    NetworkSpec {
        nodes: 4,
        edges: vec![[1, 2], [2, 3], [3, 4], [4, 1]],
        actuated,
        compartmental_edges: vec![],
        state_dependent_io: vec![],
    }
}

fn many(v: &[f64]) -> OneOrMany<f64> {
    OneOrMany::Many(v.to_vec())
}

fn at_hours(t: f64, d: OneOrMany<f64>) -> DisturbanceEntry {
    DisturbanceEntry { at_hours: Some(t), at_seconds: None, d }
}

fn ybar_hours(t: f64, ybar: OneOrMany<f64>) -> SetpointEntry {
    SetpointEntry { at_hours: Some(t), at_seconds: None, ybar }
}

fn controller(q: OneOrMany<f64>) -> ControllerSpec {
    ControllerSpec {
        t_mu: None,
        inductance_henries: None,
        t_xi: None,
        t_theta: None,
        t_phi: None,
        q,
        r: None,
        s: None,
        flow_map: None,
        input_map: None,
    }
}

fn cycle_comm(w: f64) -> CommSpec {
    CommSpec {
        graph: CommKind::Undirected,
        edges: vec![(1, 2, w), (2, 3, w), (3, 4, w), (4, 1, w)],
        weight: None,
    }
}

/// Four storage tanks on a directed ring of pipes, with a demand step at
/// 12 h and a setpoint step at 24 h.
pub fn district_heating() -> Scenario {
    let mut ctrl = controller(many(&[10.0, 9.0, 7.0, 6.0]));
    ctrl.t_mu = Some(1.0.into());
    ctrl.t_xi = Some(1.0.into());
    ctrl.t_theta = Some(1.0.into());
    ctrl.t_phi = Some(0.005.into());
    ctrl.flow_map = Some(MapSpec::tanh(0.0, 14.0).into());
    ctrl.input_map = Some(MapSpec::tanh(0.0, 52.0).into());
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "district_heating".into(),
        description: Some(
            "Hot-water volumes (m^3) with pipe flows in (0, 14) m^3/h and productions in (0, 52) m^3/h. \
             Communication on the ring 1-2-3-4-1 with weight 10. Controllers start at mid-range; \
             the step size keeps RK4 stable against the fast consensus mode."
                .into(),
        ),
        variant: VariantName::Basic,
        network: cycle4(vec![1, 2, 3, 4]),
        plant: PlantSpec { tx: Some(1.0.into()), capacitance_farads: None, output: None },
        controller: ctrl,
        communication: cycle_comm(10.0),
        compartmental: None,
        schedule: ScheduleSpec {
            disturbance: vec![at_hours(0.0, 30.0.into()), at_hours(12.0, 35.0.into())],
            setpoint: vec![ybar_hours(0.0, 200.0.into()), ybar_hours(24.0, 210.0.into())],
            setpoint_ramp: None,
            incremental: false,
        },
        integration: IntegrationSpec {
            dt_hours: Some(2.5e-6),
            dt_seconds: None,
            horizon_hours: Some(40.0),
            horizon_seconds: None,
            log_every: 4000,
        },
        initial: InitialSpec { mode: InitModeName::Midrange, x: Some(200.0.into()), ..Default::default() },
        monitors: MonitorSpec { output_band: Some(1.0), ..Default::default() },
    }
}

/// Four-terminal HVDC ring with lossless inductive lines; terminals 2, 3
/// and 4 inject controlled currents in (130, 145) A.
pub fn hvdc() -> Scenario {
    let mut ctrl = controller(1.0.into());
    ctrl.inductance_henries = Some(0.0135.into());
    ctrl.t_theta = Some(100.0.into());
    ctrl.t_phi = Some(0.02.into());
    ctrl.input_map = Some(MapSpec::tanh(130.0, 145.0).into());
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "hvdc".into(),
        description: Some(
            "Voltages in V, currents in A. Loads step from 100 A everywhere to (100, 140, 80, 100) A at 20 ms. \
             Communication on the path 2-3-4 with weight 1e4. Starts at the steady state of the initial loads."
                .into(),
        ),
        variant: VariantName::Potential,
        network: cycle4(vec![2, 3, 4]),
        plant: PlantSpec { tx: None, capacitance_farads: Some(57e-6.into()), output: None },
        controller: ctrl,
        communication: CommSpec {
            graph: CommKind::Undirected,
            edges: vec![(2, 3, 1e4), (3, 4, 1e4)],
            weight: None,
        },
        compartmental: None,
        schedule: ScheduleSpec {
            disturbance: vec![
                DisturbanceEntry { at_hours: None, at_seconds: Some(0.0), d: 100.0.into() },
                DisturbanceEntry { at_hours: None, at_seconds: Some(0.02), d: many(&[100.0, 140.0, 80.0, 100.0]) },
            ],
            setpoint: vec![SetpointEntry { at_hours: None, at_seconds: Some(0.0), ybar: 165e3.into() }],
            setpoint_ramp: None,
            incremental: false,
        },
        integration: IntegrationSpec {
            dt_hours: None,
            dt_seconds: Some(1e-6),
            horizon_hours: None,
            horizon_seconds: Some(0.04),
            log_every: 10,
        },
        initial: InitialSpec { mode: InitModeName::Equilibrium, ..Default::default() },
        monitors: MonitorSpec::default(),
    }
}

/// Linear network under the controller without `ξ` and `φ`: started off
/// the consensus value it oscillates as `x = sin t`, `θ = cos t` forever.
pub fn oscillation_demo() -> Scenario {
    let mut ctrl = controller(1.0.into());
    ctrl.t_mu = Some(1.0.into());
    ctrl.t_theta = Some(1.0.into());
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "oscillation_demo".into(),
        description: Some(
            "Identity maps, every node actuated, zero disturbance and setpoint. \
             The convergence monitor is expected to fail."
                .into(),
        ),
        variant: VariantName::Reduced,
        network: cycle4(vec![1, 2, 3, 4]),
        plant: PlantSpec::default(),
        controller: ctrl,
        communication: cycle_comm(1.0),
        compartmental: None,
        schedule: ScheduleSpec {
            disturbance: vec![DisturbanceEntry { at_hours: None, at_seconds: Some(0.0), d: 0.0.into() }],
            setpoint: vec![SetpointEntry { at_hours: None, at_seconds: Some(0.0), ybar: 0.0.into() }],
            setpoint_ramp: None,
            incremental: false,
        },
        integration: IntegrationSpec {
            dt_hours: None,
            dt_seconds: Some(1e-3),
            horizon_hours: None,
            horizon_seconds: Some(20.0),
            log_every: 10,
        },
        initial: InitialSpec {
            mode: InitModeName::Midrange,
            x: Some(0.0.into()),
            mu: Some(0.0.into()),
            theta: Some(1.0.into()),
            ..Default::default()
        },
        monitors: MonitorSpec { output_band: Some(1e-4), oscillation: true, ..Default::default() },
    }
}

/// District-heating network following a setpoint ramp of 2 m^3/h, simulated
/// in the coordinates `x̃ = x − ȳ(t)` where the ramp becomes a constant extra
/// demand.
pub fn ramp_tracking() -> Scenario {
    let mut ctrl = controller(many(&[10.0, 9.0, 7.0, 6.0]));
    ctrl.t_phi = Some(0.5.into());
    ctrl.flow_map = Some(MapSpec::tanh(0.0, 20.0).into());
    ctrl.input_map = Some(MapSpec::tanh(0.0, 52.0).into());
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "ramp_tracking".into(),
        description: Some(
            "Setpoint ramp 200 -> 210 m^3 over 5 h at demand 35 m^3/h, i.e. a constant incremental demand of 37. \
             Flow range widened to (0, 20) m^3/h so that the steady flows stay interior."
                .into(),
        ),
        variant: VariantName::Basic,
        network: cycle4(vec![1, 2, 3, 4]),
        plant: PlantSpec::default(),
        controller: ctrl,
        communication: cycle_comm(10.0),
        compartmental: None,
        schedule: ScheduleSpec {
            disturbance: vec![at_hours(0.0, 35.0.into())],
            setpoint: vec![],
            setpoint_ramp: Some(RampSpec {
                start_hours: Some(0.0),
                start_seconds: None,
                end_hours: Some(5.0),
                end_seconds: None,
                from: 200.0.into(),
                to: 210.0.into(),
            }),
            incremental: true,
        },
        integration: IntegrationSpec {
            dt_hours: Some(1e-4),
            dt_seconds: None,
            horizon_hours: Some(40.0),
            horizon_seconds: None,
            log_every: 100,
        },
        initial: InitialSpec { mode: InitModeName::Midrange, x: Some(200.0.into()), ..Default::default() },
        monitors: MonitorSpec { output_band: Some(1e-3), ..Default::default() },
    }
}
