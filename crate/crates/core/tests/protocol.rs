use std::collections::{BTreeSet, HashSet};

use engage_core::protocol::FLUSH_SECONDS;
use engage_core::{
    Collector, DomEvent, Emission, PageKind, Payload, PingingSession, ScrollSample, SessionIdentity,
};
use proptest::prelude::*;

const T0: u64 = 1_459_535_864;

fn identity() -> SessionIdentity {
    SessionIdentity::new("1", "user", "10", "item", "10.0.0.1")
}

fn payload(event: DomEvent, top: u32) -> Payload {
    if event == DomEvent::Scroll {
        Payload::Scroll(ScrollSample::new(5000, 800, 1280, top))
    } else {
        Payload::Marker
    }
}

/// Offsets from load of each DOM event and of the unload.
fn page() -> impl Strategy<Value = (Vec<(u64, DomEvent)>, u64)> {
    let ordinary: Vec<DomEvent> = DomEvent::ALL
        .iter()
        .copied()
        .filter(|e| *e != DomEvent::BeforeUnload)
        .collect();
    (
        proptest::collection::vec((0u64..400, proptest::sample::select(ordinary)), 0..60),
        0u64..120,
    )
        .prop_map(|(mut events, tail)| {
            events.sort_by_key(|(t, _)| *t);
            let last = events.last().map_or(0, |(t, _)| *t);
            (events, last + tail)
        })
}

fn replay(kind: PageKind, events: &[(u64, DomEvent)], unload: u64) -> Vec<Emission> {
    let mut session = PingingSession::new(identity(), kind, T0, Vec::new());
    for (i, (offset, event)) in events.iter().enumerate() {
        session
            .observe(T0 + offset, *event, payload(*event, i as u32 * 10))
            .unwrap();
        if kind == PageKind::Listing {
            session
                .observe_visible(T0 + offset, [format!("item-{}", offset % 7)])
                .unwrap();
        }
    }
    session
        .observe(T0 + unload, DomEvent::BeforeUnload, Payload::Marker)
        .unwrap();
    session.into_sink()
}

fn occupied(events: &[(u64, DomEvent)], unload: u64) -> usize {
    let mut set: BTreeSet<u64> = events.iter().map(|(t, _)| t / 5).collect();
    let opened = unload.is_multiple_of(5) && events.iter().any(|(t, _)| *t == unload);
    set.insert(if unload > 0 && !opened {
        (unload - 1) / 5
    } else {
        unload / 5
    });
    set.len()
}

proptest! {
    #[test]
    fn buckets_are_conserved_and_bounded((events, unload) in page()) {
        let emissions = replay(PageKind::Item, &events, unload);
        let mut total = 0;
        for e in &emissions {
            match e {
                Emission::Engagement(r) => {
                    prop_assert!((1..=3).contains(&r.len()));
                    prop_assert!(r.buckets.iter().all(|b| !b.is_empty()));
                    let at = r.timestamp - T0;
                    prop_assert!(at == unload || (at.is_multiple_of(FLUSH_SECONDS) && at < unload));
                    total += r.len();
                }
                Emission::Visibility(_) => prop_assert!(false, "item page emitted visibility"),
            }
        }
        prop_assert_eq!(total, occupied(&events, unload));
        prop_assert!(emissions.windows(2).all(|w| w[0].timestamp() <= w[1].timestamp()));
    }

    #[test]
    fn replay_is_deterministic((events, unload) in page()) {
        prop_assert_eq!(replay(PageKind::Item, &events, unload), replay(PageKind::Item, &events, unload));
    }

    #[test]
    fn listing_items_are_reported_once((events, unload) in page()) {
        let emissions = replay(PageKind::Listing, &events, unload);
        let mut seen = HashSet::new();
        for e in &emissions {
            match e {
                Emission::Visibility(r) => {
                    for item in &r.viewed_items {
                        prop_assert!(seen.insert(item.clone()), "{} reported twice", item);
                    }
                }
                Emission::Engagement(_) => prop_assert!(false, "listing page emitted engagement"),
            }
        }
        let expected: HashSet<String> = events.iter().map(|(t, _)| format!("item-{}", t % 7)).collect();
        prop_assert_eq!(seen, expected);
    }

    #[test]
    fn explicit_ticks_match_catch_up((events, unload) in page()) {
        // Driving every boundary by hand gives the same reports as letting
        // the collector catch up on demand.
        let mut manual = Collector::new(identity(), PageKind::Item, T0);
        let mut out = Vec::new();
        let mut next = 0;
        for (offset, event) in &events {
            while (next + 1) * 5 <= *offset {
                next += 1;
                manual.tick(T0 + next * 5).unwrap();
                if next % 3 == 0 {
                    out.extend(manual.flush(T0 + next * 5).unwrap().map(Emission::Engagement));
                }
            }
            manual.record(*event, payload(*event, 0)).unwrap();
        }
        out.extend(manual.unload(T0 + unload).unwrap());
        let auto: Vec<usize> = replay(PageKind::Item, &events, unload)
            .iter()
            .map(|e| match e { Emission::Engagement(r) => r.len(), Emission::Visibility(_) => 0 })
            .collect();
        let manual_lens: Vec<usize> = out
            .iter()
            .map(|e| match e { Emission::Engagement(r) => r.len(), Emission::Visibility(_) => 0 })
            .collect();
        prop_assert_eq!(auto, manual_lens);
    }
}

#[test]
fn unload_on_a_boundary_closes_the_ending_interval() {
    let events: Vec<(u64, DomEvent)> = (0..30).map(|t| (t, DomEvent::MouseMove)).collect();
    let lens: Vec<usize> = replay(PageKind::Item, &events, 30)
        .iter()
        .map(|e| match e {
            Emission::Engagement(r) => r.len(),
            Emission::Visibility(_) => 0,
        })
        .collect();
    assert_eq!(lens, vec![3, 3]);
}

#[test]
fn idle_page_sends_only_the_unload_report() {
    let emissions = replay(PageKind::Item, &[], 290);
    assert_eq!(emissions.len(), 1);
    assert_eq!(emissions[0].timestamp(), T0 + 290);
}

#[test]
fn short_burst_then_long_idle() {
    let events: Vec<(u64, DomEvent)> = (0..10).map(|t| (t, DomEvent::MouseMove)).collect();
    let reports: Vec<_> = replay(PageKind::Item, &events, 300)
        .into_iter()
        .filter_map(|e| match e {
            Emission::Engagement(r) => Some(r),
            Emission::Visibility(_) => None,
        })
        .collect();
    let seconds = engage_core::miner::attention_span(&reports).unwrap();
    assert_eq!(seconds, 15);
    assert_eq!(300 / seconds, 20);
}
