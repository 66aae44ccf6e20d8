//! Matching-engine properties on random order streams.

mod common;

use common::{random_stream, replay_engine, replay_reference, TICK};
use marketforge::market::{Market, OrderKind, Side};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn engine_matches_reference(seed in any::<u64>()) {
        let stream = random_stream(seed, 120);
        prop_assert_eq!(replay_engine(&stream), replay_reference(&stream));
    }

    #[test]
    fn book_never_crosses_with_execution_on(seed in any::<u64>()) {
        let mut stream = random_stream(seed, 150);
        for s in &mut stream {
            s.execution_enabled = true;
        }
        let mut m = Market::new(0, "M", TICK, 300.0, 300.0).unwrap();
        for (t, s) in stream.iter().enumerate() {
            for o in &s.orders {
                let _ = m.submit_order(o.clone(), true);
                if let (Some(b), Some(a)) = (m.best_bid(), m.best_ask()) {
                    prop_assert!(b < a, "crossed book {} >= {}", b, a);
                }
            }
            m.expire_orders(t as u64 + 1);
            m.step_summary("s");
        }
    }

    #[test]
    fn volume_is_conserved_per_order(seed in any::<u64>()) {
        let stream = random_stream(seed, 150);
        let mut m = Market::new(0, "M", TICK, 300.0, 300.0).unwrap();
        for s in &stream {
            for o in &s.orders {
                let before: u64 = m.book().side_orders(o.side.opposite()).iter().map(|r| r.volume).sum();
                let own_before: u64 = m.book().side_orders(o.side).iter().map(|r| r.volume).sum();
                let Ok(fills) = m.submit_order(o.clone(), s.execution_enabled) else { continue };
                let filled: u64 = fills.iter().map(|f| f.volume).sum();
                let after: u64 = m.book().side_orders(o.side.opposite()).iter().map(|r| r.volume).sum();
                let own_after: u64 = m.book().side_orders(o.side).iter().map(|r| r.volume).sum();
                prop_assert_eq!(before - after, filled);
                prop_assert!(filled <= o.volume);
                let rested = own_after - own_before;
                match o.kind {
                    OrderKind::Limit => prop_assert_eq!(filled + rested, o.volume),
                    OrderKind::Market => prop_assert_eq!(rested, 0),
                }
                for f in &fills {
                    let limit_ok = match (o.kind, o.side) {
                        (OrderKind::Market, _) => true,
                        (OrderKind::Limit, Side::Buy) => f.price <= o.price.unwrap(),
                        (OrderKind::Limit, Side::Sell) => f.price >= o.price.unwrap(),
                    };
                    prop_assert!(limit_ok);
                }
            }
        }
    }
}

#[test]
fn market_price_tracks_last_fill() {
    let stream = random_stream(99, 200);
    let mut m = Market::new(0, "M", TICK, 300.0, 300.0).unwrap();
    let mut last = m.market_price();
    for (t, s) in stream.iter().enumerate() {
        for o in &s.orders {
            if let Ok(fills) = m.submit_order(o.clone(), s.execution_enabled) {
                if let Some(f) = fills.last() {
                    last = f.price;
                }
            }
            assert_eq!(m.market_price(), last);
        }
        m.expire_orders(t as u64 + 1);
        m.step_summary("s");
    }
}
