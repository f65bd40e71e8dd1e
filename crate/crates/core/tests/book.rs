use ecomarket_core::lob::{price_to_ticks, Order, OrderBook, Side, Trade};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Op {
    signed: i64,
    price_ticks: i64,
    tif: u32,
    agent: usize,
    halted: bool,
}

fn op() -> impl Strategy<Value = Op> {
    (
        prop_oneof![1i64..6, -5i64..0],
        2990i64..3011,
        1u32..8,
        0usize..4,
        prop::bool::weighted(0.2),
    )
        .prop_map(|(signed, price_ticks, tif, agent, halted)| Op { signed, price_ticks, tif, agent, halted })
}

/// Linear-scan matcher holding `(seq, order)` pairs.
#[derive(Default)]
struct Naive {
    resting: Vec<(u64, Order)>,
    seq: u64,
}

impl Naive {
    fn submit(&mut self, mut o: Order) -> Vec<Trade> {
        let mut trades = Vec::new();
        while o.volume > 0 {
            let best = self
                .resting
                .iter()
                .enumerate()
                .filter(|(_, (_, r))| {
                    r.side != o.side
                        && match o.side {
                            Side::Buy => r.price <= o.price,
                            Side::Sell => r.price >= o.price,
                        }
                })
                .min_by_key(|(_, (seq, r))| match o.side {
                    Side::Buy => (r.price, *seq),
                    Side::Sell => (-r.price, *seq),
                })
                .map(|(i, _)| i);
            let Some(i) = best else { break };
            let r = &mut self.resting[i].1;
            let v = r.volume.min(o.volume);
            r.volume -= v;
            o.volume -= v;
            let (b, s) = if o.side == Side::Buy { (o.id, r.id) } else { (r.id, o.id) };
            let (bu, se) = if o.side == Side::Buy { (o.agent, r.agent) } else { (r.agent, o.agent) };
            trades.push(Trade {
                buy_order_id: b,
                sell_order_id: s,
                buyer: bu,
                seller: se,
                price: r.price,
                volume: v,
                executed_at: o.submitted_at,
            });
            self.resting.retain(|(_, r)| r.volume > 0);
        }
        if o.volume > 0 {
            self.seq += 1;
            self.resting.push((self.seq, o));
        }
        trades
    }
}

proptest! {
    #[test]
    fn matches_naive_scan(ops in prop::collection::vec(op(), 1..60)) {
        let mut book = OrderBook::new();
        let mut naive = Naive::default();
        for (i, o) in ops.iter().enumerate() {
            let order = Order::from_signed(i as u64, o.agent, o.signed, o.price_ticks as f64 / 10.0, 1, 100).unwrap();
            prop_assert_eq!(order.price, o.price_ticks);
            let got = book.submit(order.clone(), false).unwrap();
            prop_assert_eq!(got, naive.submit(order));
            prop_assert!(!book.is_crossed());
        }
    }

    #[test]
    fn conserves_volume_and_value(ops in prop::collection::vec(op(), 1..80)) {
        let mut book = OrderBook::new();
        let mut cash = [0i64; 4];
        let mut shares = [0i64; 4];
        let mut submitted = 0u64;
        let mut was_halted = false;
        for (i, o) in ops.iter().enumerate() {
            let now = i as u32 + 1;
            let mut trades = Vec::new();
            let expired: u64 = book.expire(now).iter().map(|o| o.volume as u64).sum();
            if was_halted && !o.halted {
                trades.extend(book.uncross(now));
            }
            was_halted = o.halted;
            let order = Order::from_signed(i as u64, o.agent, o.signed, o.price_ticks as f64 / 10.0, now, o.tif).unwrap();
            submitted += order.volume as u64;
            trades.extend(book.submit(order, o.halted).unwrap());
            for t in &trades {
                cash[t.buyer] -= t.price * t.volume as i64;
                cash[t.seller] += t.price * t.volume as i64;
                shares[t.buyer] += t.volume as i64;
                shares[t.seller] -= t.volume as i64;
                submitted -= 2 * t.volume as u64;
            }
            submitted -= expired;
            prop_assert_eq!(cash.iter().sum::<i64>(), 0);
            prop_assert_eq!(shares.iter().sum::<i64>(), 0);
            let resting: u64 = book.resting_orders().map(|o| o.volume as u64).sum();
            prop_assert_eq!(resting, submitted);
            if !o.halted && !was_halted {
                prop_assert!(!book.is_crossed());
            }
        }
    }

    #[test]
    fn expiry_removes_exactly_the_due(ops in prop::collection::vec(op(), 1..40), now in 1u32..10) {
        let mut book = OrderBook::new();
        for (i, o) in ops.iter().enumerate() {
            let order = Order::from_signed(i as u64, o.agent, o.signed, o.price_ticks as f64 / 10.0, 0, o.tif).unwrap();
            book.submit(order, true).unwrap();
        }
        let before = book.len();
        let gone = book.expire(now);
        prop_assert!(gone.windows(2).all(|w| w[0].id < w[1].id));
        prop_assert!(gone.iter().all(|o| o.expires_at <= now));
        prop_assert!(book.resting_orders().all(|o| o.expires_at > now));
        prop_assert_eq!(book.len() + gone.len(), before);
    }

    #[test]
    fn rounding_is_nearest_tick(p in 0.05f64..10_000.0) {
        let t = price_to_ticks(p);
        prop_assert!((t as f64 / 10.0 - p).abs() <= 0.05 + 1e-9);
    }
}

#[test]
fn resting_ask_partially_fills_incoming_buy() {
    let mut book = OrderBook::new();
    book.submit(Order::from_signed(1, 0, -1, 299.0, 1, 200).unwrap(), false).unwrap();
    let trades = book.submit(Order::from_signed(2, 1, 2, 300.0, 2, 200).unwrap(), false).unwrap();
    assert_eq!(trades.len(), 1);
    assert_eq!((trades[0].price, trades[0].volume), (2990, 1));
    let rest: Vec<_> = book.resting_orders().collect();
    assert_eq!((rest[0].side, rest[0].price, rest[0].volume), (Side::Buy, 3000, 1));
}

#[test]
fn halted_book_stays_crossed_until_uncross() {
    let mut book = OrderBook::new();
    book.submit(Order::from_signed(1, 0, -1, 299.0, 1, 200).unwrap(), true).unwrap();
    assert!(book.submit(Order::from_signed(2, 1, 1, 300.0, 2, 200).unwrap(), true).unwrap().is_empty());
    assert!(book.is_crossed());
    assert_eq!(book.uncross(101).len(), 1);
    assert!(book.is_empty());
}

#[test]
fn empty_book_mid_is_the_fallback() {
    assert_eq!(OrderBook::new().mid_price(300.0), 300.0);
}
