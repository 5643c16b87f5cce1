//! Connector lifecycle, pogo-pin mating and the framed UART link.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EpmError, Result};
use crate::magnetics::PulsePolarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectorState {
    Disconnected,
    Approaching,
    Aligned,
    Coupled,
    LinkUp,
    Demagnetizing,
}

impl ConnectorState {
    pub const ALL: [ConnectorState; 6] = [
        Self::Disconnected,
        Self::Approaching,
        Self::Aligned,
        Self::Coupled,
        Self::LinkUp,
        Self::Demagnetizing,
    ];

    /// Mechanically and electrically connected.
    pub fn is_coupled(self) -> bool {
        matches!(self, Self::Coupled | Self::LinkUp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub payload: Vec<u8>,
    pub source: String,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    ProximityReached,
    AlignmentConverged,
    MagnetizePulse,
    DemagnetizePulse,
    SendFrame(Frame),
    LinkProbeOk,
    Timeout,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ProximityReached => "proximity_reached",
            Self::AlignmentConverged => "alignment_converged",
            Self::MagnetizePulse => "magnetize_pulse",
            Self::DemagnetizePulse => "demagnetize_pulse",
            Self::SendFrame(_) => "send_frame",
            Self::LinkProbeOk => "link_probe_ok",
            Self::Timeout => "timeout",
        }
    }

    /// One representative of every event kind.
    pub fn samples(source: &str) -> Vec<Event> {
        vec![
            Self::ProximityReached,
            Self::AlignmentConverged,
            Self::MagnetizePulse,
            Self::DemagnetizePulse,
            Self::SendFrame(Frame { payload: b"ping".to_vec(), source: source.into(), seq: 0 }),
            Self::LinkProbeOk,
            Self::Timeout,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Green {
    Off,
    Solid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Red {
    Off,
    Blink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LedState {
    pub green: Green,
    pub red: Red,
}

impl LedState {
    pub const OFF: LedState = LedState { green: Green::Off, red: Red::Off };
}

/// Green is solid while coupled; red blinks only while a frame is on the
/// wire, which needs the link to be up.
pub fn led_status(state: ConnectorState, transmitting: bool) -> LedState {
    LedState {
        green: if state.is_coupled() { Green::Solid } else { Green::Off },
        red: if transmitting && state == ConnectorState::LinkUp { Red::Blink } else { Red::Off },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    SetLeds(LedState),
    Pulse(PulsePolarity),
    Transmit(Frame),
    Rejected(String),
}

/// Transition function over every state × event pair. Pairs outside the
/// table leave the state unchanged and report a rejection.
pub fn step(state: ConnectorState, event: &Event) -> (ConnectorState, Vec<Action>) {
    use ConnectorState::*;
    let leds = |s| Action::SetLeds(led_status(s, false));
    match (state, event) {
        (Disconnected, Event::ProximityReached) => (Approaching, vec![]),
        (Approaching, Event::AlignmentConverged) => (Aligned, vec![]),
        (Aligned, Event::MagnetizePulse) => {
            (Coupled, vec![Action::Pulse(PulsePolarity::Magnetize), leds(Coupled)])
        }
        (Coupled, Event::LinkProbeOk) => (LinkUp, vec![leds(LinkUp)]),
        (LinkUp, Event::SendFrame(frame)) => (
            LinkUp,
            vec![Action::SetLeds(led_status(LinkUp, true)), Action::Transmit(frame.clone()), leds(LinkUp)],
        ),
        (Coupled | LinkUp, Event::DemagnetizePulse) => (
            Demagnetizing,
            vec![Action::Pulse(PulsePolarity::Demagnetize), Action::SetLeds(LedState::OFF)],
        ),
        // The pulse has ended (or is repeated); the faces separate.
        (Demagnetizing, Event::Timeout | Event::DemagnetizePulse) => (Disconnected, vec![]),
        (s, e) => (s, vec![Action::Rejected(format!("{} ignored in {s:?}", e.name()))]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pin {
    Vcc,
    Gnd,
    Tx,
    Rx,
}

impl Pin {
    pub const ALL: [Pin; 4] = [Pin::Vcc, Pin::Gnd, Pin::Tx, Pin::Rx];

    /// The pin this one must meet on the peer face.
    pub fn partner(self) -> Pin {
        match self {
            Pin::Tx => Pin::Rx,
            Pin::Rx => Pin::Tx,
            p => p,
        }
    }
}

/// Pogo pins on a circle, by angle in degrees on the face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinLayout {
    pub pins: Vec<(Pin, f64)>,
    /// Relative orientations at which the connectors are allowed to mate.
    pub mating_orientations: Vec<f64>,
}

impl Default for PinLayout {
    /// Eight pins at 45° steps, each signal on a diametric pair, so the
    /// pattern coincides with its mirror image at 0° and 180°.
    fn default() -> Self {
        let order = [Pin::Vcc, Pin::Tx, Pin::Gnd, Pin::Rx];
        Self {
            pins: (0..8).map(|k| (order[k % 4], 45.0 * k as f64)).collect(),
            mating_orientations: vec![0.0, 180.0],
        }
    }
}

const ANGLE_EPS: f64 = 1e-6;

fn same_angle(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(360.0);
    d < ANGLE_EPS || 360.0 - d < ANGLE_EPS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PinMap {
    pub mapping: BTreeMap<Pin, Pin>,
}

impl PinMap {
    /// Bijective over all four pins, power to power and TX crossed to RX.
    pub fn is_valid(&self) -> bool {
        let mut targets: Vec<Pin> = self.mapping.values().copied().collect();
        targets.sort();
        targets.dedup();
        self.mapping.len() == 4
            && targets.len() == 4
            && Pin::ALL.iter().all(|p| self.mapping.get(p) == Some(&p.partner()))
    }
}

/// Maps each pin to the peer pin it touches when the peer face is turned
/// by `orientation` degrees. The peer face is mirrored by facing this one,
/// so its pin at angle ψ lands at `orientation − ψ`. Returns `None` when
/// the orientation is not a configured mating orientation or the contacts
/// do not form a valid map.
pub fn mate_pins(layout: &PinLayout, orientation: f64) -> Option<PinMap> {
    if !(0.0..360.0).contains(&orientation)
        || !layout.mating_orientations.iter().any(|o| same_angle(*o, orientation))
    {
        return None;
    }
    let mut mapping = BTreeMap::new();
    for &(pin, phi) in &layout.pins {
        let peer = layout.pins.iter().find(|(_, psi)| same_angle(orientation - psi, phi))?.0;
        if *mapping.entry(pin).or_insert(peer) != peer {
            return None;
        }
    }
    let map = PinMap { mapping };
    map.is_valid().then_some(map)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Delivery {
    pub delivered: bool,
    pub reason: Option<String>,
    /// LEDs of the sender and receiver while the frame is handled.
    pub leds: [LedState; 2],
}

pub const DEFAULT_MTU: usize = 64;

/// Receiver side bookkeeping of the framed link.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataLink {
    pub mtu: usize,
    last_seq: BTreeMap<String, u64>,
}

impl Default for DataLink {
    fn default() -> Self {
        Self::new(DEFAULT_MTU)
    }
}

impl DataLink {
    pub fn new(mtu: usize) -> Self {
        Self { mtu, last_seq: BTreeMap::new() }
    }

    /// Next unused sequence number for `source`.
    pub fn next_seq(&self, source: &str) -> u64 {
        self.last_seq.get(source).map_or(0, |s| s + 1)
    }

    /// Delivers `frame` iff both ends are `LinkUp`, the pin map is valid,
    /// the payload fits the MTU and the sequence number advances.
    pub fn transfer(&mut self, frame: &Frame, link: [ConnectorState; 2], pinmap: &PinMap) -> Delivery {
        let refuse = |reason: String| Delivery {
            delivered: false,
            reason: Some(reason),
            leds: link.map(|s| led_status(s, false)),
        };
        if !pinmap.is_valid() {
            return refuse("invalid pin map".into());
        }
        if let Some(s) = link.iter().find(|s| **s != ConnectorState::LinkUp) {
            return refuse(format!("endpoint in {s:?}, link not up"));
        }
        if frame.payload.len() > self.mtu {
            return refuse(format!("payload of {} bytes exceeds MTU {}", frame.payload.len(), self.mtu));
        }
        if self.last_seq.get(&frame.source).is_some_and(|last| frame.seq <= *last) {
            return refuse(format!("stale sequence number {}", frame.seq));
        }
        self.last_seq.insert(frame.source.clone(), frame.seq);
        Delivery { delivered: true, reason: None, leds: link.map(|s| led_status(s, true)) }
    }
}

/// One line of an event script: `<time_ms> <connector_id> <event> [payload]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptEntry {
    pub time_ms: u64,
    pub connector: String,
    pub event: ScriptEvent,
}

/// Script-level event; frames get their source and sequence number when
/// they are sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptEvent {
    Plain(Event),
    Send(Vec<u8>),
}

impl FromStr for ScriptEvent {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
        let plain = |e| Ok(ScriptEvent::Plain(e));
        match name {
            "proximity_reached" => plain(Event::ProximityReached),
            "alignment_converged" => plain(Event::AlignmentConverged),
            "magnetize_pulse" => plain(Event::MagnetizePulse),
            "demagnetize_pulse" => plain(Event::DemagnetizePulse),
            "link_probe_ok" => plain(Event::LinkProbeOk),
            "timeout" => plain(Event::Timeout),
            "send_frame" => Ok(ScriptEvent::Send(rest.trim().as_bytes().to_vec())),
            other => Err(format!("unknown event {other:?}")),
        }
    }
}

/// Parses an event script. Blank lines and `#` comments are skipped;
/// errors name the offending line.
pub fn parse_script(text: &str) -> Result<Vec<ScriptEntry>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| EpmError::InvalidInput(format!("script line {}: {msg}", i + 1));
        let mut parts = line.splitn(3, char::is_whitespace);
        let time = parts.next().unwrap_or_default();
        let time_ms = time.parse::<u64>().map_err(|_| bad(format!("invalid time {time:?}")))?;
        let connector = parts.next().ok_or_else(|| bad("missing connector id".into()))?.to_string();
        let event = parts
            .next()
            .ok_or_else(|| bad("missing event".into()))?
            .trim()
            .parse::<ScriptEvent>()
            .map_err(bad)?;
        entries.push(ScriptEntry { time_ms, connector, event });
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub time: u64,
    pub connector: String,
    pub state_before: ConnectorState,
    pub event: String,
    pub state_after: ConnectorState,
    pub leds: LedState,
    /// Present for frame sends.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delivery: Option<Delivery>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejected: Option<String>,
}

/// Runs a two-connector script through one deterministic event queue,
/// ordered by time and then by script order. A demagnetizing connector
/// separates as soon as its pulse ends, which is recorded as a `timeout`.
pub fn run_script(entries: &[ScriptEntry], pins: &PinLayout, orientation: f64, mtu: usize) -> Result<Vec<TraceRecord>> {
    let mut ids: Vec<String> = Vec::new();
    for e in entries {
        if !ids.contains(&e.connector) {
            ids.push(e.connector.clone());
        }
    }
    if ids.len() > 2 {
        return Err(EpmError::InvalidInput(format!("script names {} connectors, expected at most 2", ids.len())));
    }
    let pinmap = mate_pins(pins, orientation)
        .ok_or_else(|| EpmError::InvalidInput(format!("connectors do not mate at {orientation} deg")))?;
    let mut order: Vec<&ScriptEntry> = entries.iter().collect();
    order.sort_by_key(|e| e.time_ms);

    let mut states: BTreeMap<&str, ConnectorState> =
        ids.iter().map(|id| (id.as_str(), ConnectorState::Disconnected)).collect();
    let mut link = DataLink::new(mtu);
    let mut next_seq: BTreeMap<&str, u64> = BTreeMap::new();
    let mut trace = Vec::new();
    for entry in order {
        let me = entry.connector.as_str();
        let event = match &entry.event {
            ScriptEvent::Plain(e) => e.clone(),
            ScriptEvent::Send(payload) => {
                let seq = next_seq.entry(me).or_insert(0);
                let frame = Frame { payload: payload.clone(), source: me.to_string(), seq: *seq };
                *seq += 1;
                Event::SendFrame(frame)
            }
        };
        let before = states[me];
        let (after, actions) = step(before, &event);
        states.insert(me, after);
        let rejected = actions.iter().find_map(|a| match a {
            Action::Rejected(r) => Some(r.clone()),
            _ => None,
        });
        let delivery = match &event {
            Event::SendFrame(frame) => {
                let peer = ids.iter().find(|id| id.as_str() != me).map(|id| states[id.as_str()]);
                Some(match peer {
                    Some(peer) => link.transfer(frame, [before, peer], &pinmap),
                    None => Delivery {
                        delivered: false,
                        reason: Some("no peer connector".into()),
                        leds: [led_status(before, false); 2],
                    },
                })
            }
            _ => None,
        };
        let transmitting = delivery.as_ref().is_some_and(|d| d.delivered);
        trace.push(TraceRecord {
            time: entry.time_ms,
            connector: me.to_string(),
            state_before: before,
            event: event.name().into(),
            state_after: after,
            leds: led_status(after, transmitting),
            delivery,
            rejected,
        });
        if after == ConnectorState::Demagnetizing {
            let (done, _) = step(after, &Event::Timeout);
            states.insert(me, done);
            trace.push(TraceRecord {
                time: entry.time_ms,
                connector: me.to_string(),
                state_before: after,
                event: Event::Timeout.name().into(),
                state_after: done,
                leds: led_status(done, false),
                delivery: None,
                rejected: None,
            });
        }
    }
    Ok(trace)
}

impl fmt::Display for ConnectorState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}
