//! Linear hydraulic-resistance model of a coupled connector pair.
//!
//! Each connector contributes, per channel, a water-tank path, a rotary
//! joint and a silicone tube in series; the two connectors meet at a mating
//! port. Steady losses between inlet and outlet flow are modelled as
//! pressure-driven leak shunts from each port crossing to ambient. A channel
//! crossing the interface for the first time leaks through the forward
//! conductance; the single loop's return crossing has its own conductance.
//!
//! Resistances are in Pa·min/ml, flows in ml/min, pressures in Pa.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, EpmError, Result};
use crate::fit::{least_squares, Bounds, FitOptions};

/// Water at 20 °C, Pa·s.
pub const WATER_VISCOSITY: f64 = 1.002e-3;
/// (m³/s) per (ml/min).
const ML_PER_MIN: f64 = 1.0e-6 / 60.0;
/// Index of the ambient node every outlet and leak drains into.
pub const AMBIENT: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    TankPath,
    RotaryJoint,
    SiliconeTube,
    MatingPort,
    LeakShunt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydraulicElement {
    pub id: String,
    /// Pa·min/ml; infinite for a shunt that does not conduct.
    pub resistance: f64,
    pub kind: ElementKind,
}

impl HydraulicElement {
    fn conductance(&self) -> f64 {
        if self.resistance.is_infinite() { 0.0 } else { 1.0 / self.resistance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    ParallelUnidirectional,
    DualChannelCounterflow,
    SingleLoop,
}

impl TransferMode {
    pub const ALL: [TransferMode; 3] =
        [Self::ParallelUnidirectional, Self::DualChannelCounterflow, Self::SingleLoop];

    /// Short name used on the command line and in CSV files.
    pub fn short_name(self) -> &'static str {
        match self {
            Self::ParallelUnidirectional => "parallel",
            Self::DualChannelCounterflow => "dual",
            Self::SingleLoop => "loop",
        }
    }

    pub fn is_dual(self) -> bool {
        self != Self::SingleLoop
    }
}

impl fmt::Display for TransferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for TransferMode {
    type Err = EpmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parallel" | "parallel_unidirectional" => Ok(Self::ParallelUnidirectional),
            "dual" | "dual_channel" | "dual_channel_counterflow" => Ok(Self::DualChannelCounterflow),
            "loop" | "single_loop" => Ok(Self::SingleLoop),
            other => Err(EpmError::InvalidMode(format!("unknown transfer mode {other:?}"))),
        }
    }
}

/// Bore dimensions of the elements in one connector channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    /// m
    pub tube_inner_diameter: f64,
    /// m
    pub tube_length: f64,
    /// m
    pub tank_bore: f64,
    /// m
    pub tank_length: f64,
    /// m
    pub joint_bore: f64,
    /// m
    pub joint_length: f64,
    /// m
    pub port_bore: f64,
    /// m
    pub port_length: f64,
    /// Pa·s
    pub viscosity: f64,
}

impl Default for ChannelGeometry {
    fn default() -> Self {
        Self {
            tube_inner_diameter: 2.0e-3,
            tube_length: 40.0e-3,
            tank_bore: 3.0e-3,
            tank_length: 20.0e-3,
            joint_bore: 2.0e-3,
            joint_length: 10.0e-3,
            port_bore: 2.0e-3,
            port_length: 5.0e-3,
            viscosity: WATER_VISCOSITY,
        }
    }
}

impl ChannelGeometry {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.tube_inner_diameter,
            self.tube_length,
            self.tank_bore,
            self.tank_length,
            self.joint_bore,
            self.joint_length,
            self.port_bore,
            self.port_length,
            self.viscosity,
        ];
        ensure(all.iter().all(|v| v.is_finite() && *v > 0.0), || {
            "channel geometry values must be finite and > 0".into()
        })
    }

    pub fn resistance(&self, kind: ElementKind) -> Option<f64> {
        let (d, l) = match kind {
            ElementKind::TankPath => (self.tank_bore, self.tank_length),
            ElementKind::RotaryJoint => (self.joint_bore, self.joint_length),
            ElementKind::SiliconeTube => (self.tube_inner_diameter, self.tube_length),
            ElementKind::MatingPort => (self.port_bore, self.port_length),
            ElementKind::LeakShunt => return None,
        };
        Some(poiseuille_resistance(d, l, self.viscosity))
    }
}

/// Hagen–Poiseuille resistance of a round bore, Pa·min/ml.
pub fn poiseuille_resistance(diameter: f64, length: f64, viscosity: f64) -> f64 {
    let r = 0.5 * diameter;
    8.0 * viscosity * length / (PI * r.powi(4)) * ML_PER_MIN
}

/// Leak-shunt conductances, ml/(min·Pa).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    /// Shunt at a channel's first crossing of the mating interface.
    pub forward_conductance: f64,
    /// Shunt at the single loop's return crossing.
    pub return_conductance: f64,
}

impl LossParams {
    /// Same conductance at every crossing.
    pub fn shared(conductance: f64) -> Self {
        Self { forward_conductance: conductance, return_conductance: conductance }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            [self.forward_conductance, self.return_conductance]
                .iter()
                .all(|g| g.is_finite() && *g >= 0.0),
            || "leak conductances must be finite and >= 0".into(),
        )
    }
}

impl Default for LossParams {
    /// Calibrated on the shipped operating points.
    fn default() -> Self {
        Self { forward_conductance: 0.0125057, return_conductance: 0.185643 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub element: HydraulicElement,
    /// Upstream node in the design flow direction.
    pub from: usize,
    pub to: usize,
    /// 1 or 2
    pub channel: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inlet {
    pub node: usize,
    pub channel: u8,
}

/// Nodes are junctions numbered from 0, with node 0 the ambient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidNetwork {
    pub mode: TransferMode,
    pub node_count: usize,
    pub edges: Vec<Edge>,
    pub inlets: Vec<Inlet>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowResult {
    pub inlet_rate: f64,
    pub outlet_rate: f64,
    pub efficiency: f64,
    pub leak_rate: f64,
    /// Flow along each edge's design direction, keyed by element id.
    pub per_edge_flows: BTreeMap<String, f64>,
}

struct Builder<'a> {
    geometry: &'a ChannelGeometry,
    net: FluidNetwork,
}

impl Builder<'_> {
    fn node(&mut self) -> usize {
        self.net.node_count += 1;
        self.net.node_count - 1
    }

    fn edge(&mut self, id: String, kind: ElementKind, resistance: f64, from: usize, to: usize, channel: u8) {
        self.net.edges.push(Edge {
            element: HydraulicElement { id, resistance, kind },
            from,
            to,
            channel,
        });
    }

    fn element(&mut self, kind: ElementKind, id: String, from: usize, to: usize, channel: u8) {
        let r = self.geometry.resistance(kind).expect("conductive element");
        self.edge(id, kind, r, from, to, channel);
    }

    /// Tank, joint and tube of connector `c` between `outer` (tank side)
    /// and `inner` (port side), oriented in the direction of flow.
    fn half(&mut self, c: u8, channel: u8, outer: usize, inner: usize, inward: bool) {
        let a = self.node();
        let b = self.node();
        let chain = [
            (ElementKind::TankPath, "tank"),
            (ElementKind::RotaryJoint, "joint"),
            (ElementKind::SiliconeTube, "tube"),
        ];
        let nodes = [outer, a, b, inner];
        for (k, (kind, name)) in chain.into_iter().enumerate() {
            let id = format!("c{c}.ch{channel}.{name}");
            if inward {
                self.element(kind, id, nodes[k], nodes[k + 1], channel);
            } else {
                self.element(kind, id, nodes[k + 1], nodes[k], channel);
            }
        }
    }

    fn leak(&mut self, id: String, node: usize, conductance: f64, channel: u8) {
        let r = if conductance > 0.0 { 1.0 / conductance } else { f64::INFINITY };
        self.edge(id, ElementKind::LeakShunt, r, node, AMBIENT, channel);
    }

    /// One channel from connector `src` to connector `dst` between `inlet`
    /// and `outlet`, crossing the interface once.
    #[allow(clippy::too_many_arguments)]
    fn crossing(&mut self, channel: u8, src: u8, dst: u8, inlet: usize, outlet: usize, leak: f64, tag: &str) {
        let port_up = self.node();
        let port_down = self.node();
        self.half(src, channel, inlet, port_up, true);
        self.element(ElementKind::MatingPort, format!("port.{tag}"), port_up, port_down, channel);
        self.leak(format!("leak.{tag}"), port_up, leak, channel);
        self.half(dst, channel, outlet, port_down, false);
    }
}

/// Builds the element graph for `mode`. Each dual-channel path runs once
/// through both connectors; the single loop runs out through channel 1 and
/// back through channel 2, joined inside the second connector's tank, so
/// its series path is twice as long.
pub fn build_network(mode: TransferMode, geometry: &ChannelGeometry, losses: &LossParams) -> Result<FluidNetwork> {
    geometry.validate()?;
    losses.validate()?;
    let mut b = Builder {
        geometry,
        net: FluidNetwork { mode, node_count: 1, edges: Vec::new(), inlets: Vec::new() },
    };
    let g = losses.forward_conductance;
    match mode {
        TransferMode::ParallelUnidirectional | TransferMode::DualChannelCounterflow => {
            for channel in [1u8, 2] {
                let (src, dst) = if mode == TransferMode::DualChannelCounterflow && channel == 2 {
                    (2, 1)
                } else {
                    (1, 2)
                };
                let node = b.node();
                b.crossing(channel, src, dst, node, AMBIENT, g, &format!("ch{channel}"));
                b.net.inlets.push(Inlet { node, channel });
            }
        }
        TransferMode::SingleLoop => {
            // Both legs meet at a junction inside connector 2's tank.
            let node = b.node();
            let turn = b.node();
            b.crossing(1, 1, 2, node, turn, g, "forward");
            b.crossing(2, 2, 1, turn, AMBIENT, losses.return_conductance, "return");
            b.net.inlets.push(Inlet { node, channel: 1 });
        }
    }
    Ok(b.net)
}

impl FluidNetwork {
    /// Series resistance along the design flow direction from the first
    /// inlet to ambient, ignoring leak shunts.
    pub fn path_resistance(&self) -> Result<f64> {
        let inlet = self.inlets.first().ok_or_else(|| EpmError::NoPath("network has no inlet".into()))?;
        let mut node = inlet.node;
        let mut total = 0.0;
        for _ in 0..=self.edges.len() {
            if node == AMBIENT {
                return Ok(total);
            }
            let e = self
                .edges
                .iter()
                .find(|e| e.from == node && e.element.kind != ElementKind::LeakShunt)
                .ok_or_else(|| EpmError::NoPath(format!("dead end at node {node}")))?;
            total += e.element.resistance;
            node = e.to;
        }
        Err(EpmError::NoPath("flow path does not terminate".into()))
    }

    /// Edge ids per channel tag.
    pub fn channel_edges(&self, channel: u8) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter(|e| e.channel == channel)
            .map(|e| e.element.id.as_str())
            .collect()
    }

    fn validate(&self) -> Result<()> {
        ensure(self.node_count >= 2, || "network has no junctions".into())?;
        for e in &self.edges {
            ensure(e.from < self.node_count && e.to < self.node_count && e.from != e.to, || {
                format!("edge {} has invalid endpoints", e.element.id)
            })?;
            ensure(e.element.resistance > 0.0, || format!("edge {} has resistance <= 0", e.element.id))?;
        }
        Ok(())
    }

    /// Checks that every junction drains to ambient through conducting
    /// elements, otherwise the nodal equations are singular.
    fn check_connected(&self) -> Result<()> {
        let mut adj = vec![Vec::new(); self.node_count];
        for e in self.edges.iter().filter(|e| e.element.conductance() > 0.0) {
            adj[e.from].push(e.to);
            adj[e.to].push(e.from);
        }
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([AMBIENT]);
        seen[AMBIENT] = true;
        while let Some(n) = queue.pop_front() {
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(n) => Err(EpmError::NoPath(format!("node {n} has no path to the outlet"))),
            None => Ok(()),
        }
    }
}

/// Solves the nodal equations with `inlet_rate` (ml/min) split evenly
/// across the network's inlets.
pub fn solve_flow(network: &FluidNetwork, inlet_rate: f64) -> Result<FlowResult> {
    ensure(inlet_rate.is_finite() && inlet_rate >= 0.0, || {
        format!("inlet rate must be finite and >= 0, got {inlet_rate}")
    })?;
    network.validate()?;
    ensure(!network.inlets.is_empty(), || "network has no inlet".into())?;
    network.check_connected()?;

    // Unknowns are the pressures of nodes 1..n; ambient is the reference.
    let n = network.node_count - 1;
    let mut g = DMatrix::<f64>::zeros(n, n);
    for e in &network.edges {
        let c = e.element.conductance();
        for (a, b) in [(e.from, e.to), (e.to, e.from)] {
            if a != AMBIENT {
                g[(a - 1, a - 1)] += c;
                if b != AMBIENT {
                    g[(a - 1, b - 1)] -= c;
                }
            }
        }
    }
    let mut q = DVector::<f64>::zeros(n);
    let share = inlet_rate / network.inlets.len() as f64;
    for inlet in &network.inlets {
        ensure(inlet.node != AMBIENT, || "inlet cannot be the ambient node".into())?;
        q[inlet.node - 1] += share;
    }
    let p = g
        .lu()
        .solve(&q)
        .ok_or_else(|| EpmError::NoPath("nodal equations are singular".into()))?;
    let pressure = |node: usize| if node == AMBIENT { 0.0 } else { p[node - 1] };

    let mut per_edge_flows = BTreeMap::new();
    let (mut outlet, mut leak) = (0.0, 0.0);
    for e in &network.edges {
        let flow = (pressure(e.from) - pressure(e.to)) * e.element.conductance();
        per_edge_flows.insert(e.element.id.clone(), flow);
        if e.element.kind == ElementKind::LeakShunt {
            leak += flow;
        } else if e.to == AMBIENT {
            outlet += flow;
        }
    }
    let efficiency = if inlet_rate == 0.0 { 1.0 } else { outlet / inlet_rate };
    Ok(FlowResult { inlet_rate, outlet_rate: outlet, efficiency, leak_rate: leak, per_edge_flows })
}

/// One measured steady operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowMeasurement {
    pub mode: TransferMode,
    /// ml/min
    pub inlet: f64,
    /// ml/min
    pub outlet: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossFit {
    pub losses: LossParams,
    /// ml/min
    pub rmse: f64,
    pub iterations: usize,
}

/// Least-squares fit of the two leak conductances to measured outlet
/// flows. Conductances are fitted on a log scale so both stay positive.
pub fn calibrate_losses(measurements: &[FlowMeasurement], geometry: &ChannelGeometry) -> Result<LossFit> {
    for m in measurements {
        ensure(m.inlet.is_finite() && m.inlet > 0.0 && m.outlet.is_finite() && m.outlet >= 0.0, || {
            format!("invalid measurement {} -> {} ml/min", m.inlet, m.outlet)
        })?;
    }
    if measurements.len() < 2 {
        return Err(EpmError::UnderdeterminedFit { points: measurements.len(), params: 2 });
    }
    geometry.validate()?;
    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        let losses = LossParams { forward_conductance: 10f64.powf(p[0]), return_conductance: 10f64.powf(p[1]) };
        let mut nets = BTreeMap::new();
        measurements
            .iter()
            .map(|m| {
                if !nets.contains_key(&m.mode.short_name()) {
                    nets.insert(m.mode.short_name(), build_network(m.mode, geometry, &losses)?);
                }
                let r = solve_flow(&nets[m.mode.short_name()], m.inlet)?;
                Ok(r.outlet_rate - m.outlet)
            })
            .collect()
    };
    let bounds = Bounds { lower: vec![-9.0, -9.0], upper: vec![3.0, 3.0] };
    let fit = least_squares(residuals, &[-2.0, -2.0], &bounds, FitOptions::default())?;
    Ok(LossFit {
        losses: LossParams {
            forward_conductance: 10f64.powf(fit.params[0]),
            return_conductance: 10f64.powf(fit.params[1]),
        },
        rmse: fit.rmse,
        iterations: fit.iterations,
    })
}

/// True iff a tracer injected at the channel's inlet, following the design
/// flow directions, only ever touches edges of that channel and leaves
/// through that channel's outlet.
pub fn isolation_check(network: &FluidNetwork, tracer_channel: u8) -> Result<bool> {
    if !network.mode.is_dual() {
        return Err(EpmError::InvalidMode("the single loop has one circuit; isolation is undefined".into()));
    }
    let inlet = network
        .inlets
        .iter()
        .find(|i| i.channel == tracer_channel)
        .ok_or_else(|| EpmError::InvalidInput(format!("no inlet for channel {tracer_channel}")))?;
    let mut seen = BTreeSet::from([inlet.node]);
    let mut queue = VecDeque::from([inlet.node]);
    let mut reached_outlet = false;
    while let Some(node) = queue.pop_front() {
        for e in network.edges.iter().filter(|e| e.from == node) {
            if e.channel != tracer_channel {
                return Ok(false);
            }
            if e.to == AMBIENT {
                reached_outlet |= e.element.kind != ElementKind::LeakShunt;
                continue;
            }
            if seen.insert(e.to) {
                queue.push_back(e.to);
            }
        }
    }
    Ok(reached_outlet)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> ChannelGeometry {
        ChannelGeometry::default()
    }

    #[test]
    fn poiseuille_matches_hand_value() {
        // 8·1e-3·0.04/(π·1e-12) Pa·s/m³ = 1.0186e8, times 1.6667e-8.
        let r = poiseuille_resistance(2e-3, 0.04, 1e-3);
        assert!((r - 1.697_652_7).abs() < 1e-6, "{r}");
    }

    #[test]
    fn loop_path_is_twice_the_dual_path() {
        let l = LossParams::shared(0.01);
        let dual = build_network(TransferMode::DualChannelCounterflow, &geom(), &l).unwrap();
        let lp = build_network(TransferMode::SingleLoop, &geom(), &l).unwrap();
        let (a, b) = (dual.path_resistance().unwrap(), lp.path_resistance().unwrap());
        assert!((b - 2.0 * a).abs() < 1e-12 * b, "{a} {b}");
    }

    #[test]
    fn dual_modes_have_disjoint_channels() {
        for mode in [TransferMode::ParallelUnidirectional, TransferMode::DualChannelCounterflow] {
            let net = build_network(mode, &geom(), &LossParams::shared(0.01)).unwrap();
            let (a, b) = (net.channel_edges(1), net.channel_edges(2));
            assert!(!a.is_empty() && a.is_disjoint(&b));
        }
    }

    #[test]
    fn parallel_channels_flow_the_same_way() {
        let net = build_network(TransferMode::ParallelUnidirectional, &geom(), &LossParams::default()).unwrap();
        let inlet_conn = |ch: u8| {
            let i = net.inlets.iter().find(|i| i.channel == ch).unwrap();
            net.edges.iter().find(|e| e.from == i.node).unwrap().element.id.clone()
        };
        assert!(inlet_conn(1).starts_with("c1.") && inlet_conn(2).starts_with("c1."));
        let dual = build_network(TransferMode::DualChannelCounterflow, &geom(), &LossParams::default()).unwrap();
        let first = |ch: u8| {
            let i = dual.inlets.iter().find(|i| i.channel == ch).unwrap();
            dual.edges.iter().find(|e| e.from == i.node).unwrap().element.id.clone()
        };
        assert!(first(1).starts_with("c1.") && first(2).starts_with("c2."));
    }

    #[test]
    fn lossless_network_passes_everything() {
        for mode in TransferMode::ALL {
            let net = build_network(mode, &geom(), &LossParams::shared(0.0)).unwrap();
            let r = solve_flow(&net, 100.0).unwrap();
            assert!((r.outlet_rate - 100.0).abs() < 1e-9, "{mode}: {r:?}");
        }
    }

    #[test]
    fn zero_inlet_has_unit_efficiency() {
        let net = build_network(TransferMode::SingleLoop, &geom(), &LossParams::shared(0.05)).unwrap();
        let r = solve_flow(&net, 0.0).unwrap();
        assert_eq!(r.outlet_rate, 0.0);
        assert_eq!(r.efficiency, 1.0);
    }

    #[test]
    fn dual_leak_matches_divider_oracle() {
        // Port node pressure is the outlet flow times the downstream half.
        let g = 0.02;
        let net = build_network(TransferMode::DualChannelCounterflow, &geom(), &LossParams::shared(g)).unwrap();
        let half: f64 = [ElementKind::TankPath, ElementKind::RotaryJoint, ElementKind::SiliconeTube]
            .iter()
            .map(|k| geom().resistance(*k).unwrap())
            .sum::<f64>()
            + geom().resistance(ElementKind::MatingPort).unwrap();
        let expected = 1.0 / (1.0 + g * half);
        let r = solve_flow(&net, 80.0).unwrap();
        assert!((r.efficiency - expected).abs() < 1e-12, "{} {expected}", r.efficiency);
    }

    #[test]
    fn disconnected_network_has_no_path() {
        let mut net = build_network(TransferMode::DualChannelCounterflow, &geom(), &LossParams::default()).unwrap();
        net.node_count += 1;
        let err = solve_flow(&net, 10.0).unwrap_err();
        assert!(matches!(err, EpmError::NoPath(_)));
    }

    #[test]
    fn negative_inlet_rejected() {
        let net = build_network(TransferMode::SingleLoop, &geom(), &LossParams::default()).unwrap();
        assert!(solve_flow(&net, -1.0).is_err());
    }

    #[test]
    fn unknown_mode_is_invalid() {
        assert!(matches!("sideways".parse::<TransferMode>(), Err(EpmError::InvalidMode(_))));
        assert_eq!("loop".parse::<TransferMode>().unwrap(), TransferMode::SingleLoop);
    }

    #[test]
    fn isolation_holds_for_dual_modes() {
        for mode in [TransferMode::ParallelUnidirectional, TransferMode::DualChannelCounterflow] {
            let net = build_network(mode, &geom(), &LossParams::default()).unwrap();
            assert!(isolation_check(&net, 1).unwrap());
            assert!(isolation_check(&net, 2).unwrap());
        }
    }

    #[test]
    fn cross_edge_breaks_isolation() {
        let mut net = build_network(TransferMode::DualChannelCounterflow, &geom(), &LossParams::default()).unwrap();
        let a = net.inlets[0].node;
        let b = net.inlets[1].node;
        net.edges.push(Edge {
            element: HydraulicElement { id: "crack".into(), resistance: 1.0, kind: ElementKind::TankPath },
            from: a,
            to: b,
            channel: 2,
        });
        assert!(!isolation_check(&net, 1).unwrap());
    }

    #[test]
    fn isolation_undefined_for_loop() {
        let net = build_network(TransferMode::SingleLoop, &geom(), &LossParams::default()).unwrap();
        assert!(matches!(isolation_check(&net, 1), Err(EpmError::InvalidMode(_))));
    }

    #[test]
    fn calibration_recovers_synthetic_losses() {
        let truth = LossParams { forward_conductance: 0.013, return_conductance: 0.21 };
        let data: Vec<FlowMeasurement> = [(TransferMode::SingleLoop, 80.0), (TransferMode::SingleLoop, 100.0),
            (TransferMode::DualChannelCounterflow, 102.0), (TransferMode::DualChannelCounterflow, 175.0)]
            .iter()
            .map(|&(mode, inlet)| {
                let net = build_network(mode, &geom(), &truth).unwrap();
                FlowMeasurement { mode, inlet, outlet: solve_flow(&net, inlet).unwrap().outlet_rate }
            })
            .collect();
        let fit = calibrate_losses(&data, &geom()).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.losses.forward_conductance, truth.forward_conductance) < 1e-4, "{fit:?}");
        assert!(rel(fit.losses.return_conductance, truth.return_conductance) < 1e-4, "{fit:?}");
    }

    #[test]
    fn single_measurement_is_underdetermined() {
        let data = [FlowMeasurement { mode: TransferMode::SingleLoop, inlet: 80.0, outlet: 49.0 }];
        assert!(matches!(
            calibrate_losses(&data, &geom()),
            Err(EpmError::UnderdeterminedFit { points: 1, params: 2 })
        ));
    }
}
