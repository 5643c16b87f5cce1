use epm_core::coupling::*;
use proptest::prelude::*;
use ConnectorState::*;

fn frame(seq: u64) -> Frame {
    Frame { payload: b"status".to_vec(), source: "a".into(), seq }
}

#[test]
fn frames_are_delivered_only_between_linked_ends() {
    let pins = mate_pins(&PinLayout::default(), 0.0).unwrap();
    for a in ConnectorState::ALL {
        for b in ConnectorState::ALL {
            let d = DataLink::default().transfer(&frame(0), [a, b], &pins);
            assert_eq!(d.delivered, a == LinkUp && b == LinkUp, "{a:?} {b:?}");
        }
    }
    for s in ConnectorState::ALL {
        for e in Event::samples("a") {
            let (_, actions) = step(s, &e);
            let transmits = actions.iter().any(|a| matches!(a, Action::Transmit(_)));
            assert_eq!(transmits, s == LinkUp && matches!(e, Event::SendFrame(_)), "{s:?} {}", e.name());
        }
    }
}

#[test]
fn demagnetizing_always_ends_disconnected() {
    for s in ConnectorState::ALL.into_iter().filter(|s| s.is_coupled()) {
        let (mid, _) = step(s, &Event::DemagnetizePulse);
        assert_eq!(mid, Demagnetizing);
        for follow in [Event::Timeout, Event::DemagnetizePulse] {
            assert_eq!(step(mid, &follow).0, Disconnected);
        }
    }
}

#[test]
fn desk_sequence_reaches_link_up() {
    let mut s = Disconnected;
    for e in [Event::ProximityReached, Event::AlignmentConverged, Event::MagnetizePulse, Event::LinkProbeOk] {
        s = step(s, &e).0;
    }
    assert_eq!(s, LinkUp);
}

#[test]
fn link_up_is_entered_only_from_coupled() {
    for s in ConnectorState::ALL {
        for e in Event::samples("a") {
            let (next, _) = step(s, &e);
            if next == LinkUp && s != LinkUp {
                assert_eq!(s, Coupled);
            }
        }
    }
}

#[test]
fn leds_follow_state_for_every_input() {
    for s in ConnectorState::ALL {
        for tx in [false, true] {
            let l = led_status(s, tx);
            assert_eq!(l.green == Green::Solid, matches!(s, Coupled | LinkUp));
            assert_eq!(l.red == Red::Blink, tx && s == LinkUp);
        }
    }
}

fn event_strategy() -> impl Strategy<Value = Event> {
    (0usize..7).prop_map(|i| Event::samples("a").swap_remove(i))
}

proptest! {
    #[test]
    fn random_histories_never_leak_frames(
        events in prop::collection::vec((any::<bool>(), event_strategy()), 0..40)
    ) {
        let pins = mate_pins(&PinLayout::default(), 180.0).unwrap();
        let mut link = DataLink::default();
        let mut states = [Disconnected, Disconnected];
        let mut seq = 0;
        for (which, e) in events {
            let i = which as usize;
            let (next, actions) = step(states[i], &e);
            states[i] = next;
            for a in actions {
                if let Action::SetLeds(l) = a {
                    prop_assert_eq!(l.green == Green::Solid, next.is_coupled());
                }
            }
            let d = link.transfer(&frame(seq), states, &pins);
            if d.delivered {
                prop_assert_eq!(states, [LinkUp, LinkUp]);
                seq += 1;
            }
        }
    }

    #[test]
    fn every_mating_orientation_gives_a_crossed_bijection(o in 0.0..360.0f64, snap in any::<bool>()) {
        let layout = PinLayout::default();
        let angle = if snap { [0.0, 180.0][(o as usize) % 2] } else { o };
        if let Some(m) = mate_pins(&layout, angle) {
            prop_assert!(m.is_valid());
            prop_assert_eq!(m.mapping[&Pin::Tx], Pin::Rx);
            prop_assert_eq!(m.mapping[&Pin::Vcc], Pin::Vcc);
        } else {
            prop_assert!(!snap);
        }
    }
}
