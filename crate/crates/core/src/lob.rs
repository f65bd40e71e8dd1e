//! Price-time priority limit order book for a continuous double auction.
//!
//! Prices live on a fixed grid of [`TICK`] currency units and are stored as
//! integer tick counts, so matching is exact. Incoming marketable orders trade
//! at the resting order's limit price, FIFO within a price level. While the
//! market is halted orders only accumulate; [`OrderBook::uncross`] clears any
//! crossed region once trading resumes.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use thiserror::Error;
#[allow(unused_imports)]
use num_traits::Float;

/// Currency units per tick.
pub const TICK: f64 = 0.1;
const TICKS_PER_UNIT: f64 = 10.0;

/// A price expressed as an integer number of ticks.
pub type Ticks = i64;

/// Rounds a currency price to the nearest tick (half away from zero).
pub fn price_to_ticks(price: f64) -> Ticks {
    (price * TICKS_PER_UNIT).round() as Ticks
}

pub fn ticks_to_price(ticks: Ticks) -> f64 {
    ticks as f64 / TICKS_PER_UNIT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BookError {
    #[error("order id {0} was already submitted")]
    DuplicateId(u64),
    #[error("order volume must be at least one unit")]
    ZeroVolume,
    #[error("order price must be positive, got {0} ticks")]
    NonPositivePrice(Ticks),
    #[error("order must expire after submission (submitted {submitted_at}, expires {expires_at})")]
    BadExpiry { submitted_at: u32, expires_at: u32 },
}

/// A limit order. `volume` is the remaining unfilled quantity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order {
    pub id: u64,
    pub agent: usize,
    pub side: Side,
    pub volume: u32,
    pub price: Ticks,
    pub submitted_at: u32,
    pub expires_at: u32,
}

impl Order {
    /// Builds an order from a signed volume (positive buys, negative sells)
    /// and a currency price rounded onto the tick grid.
    ///
    /// Returns `None` for a zero volume. Prices that round below one tick are
    /// raised to one tick.
    pub fn from_signed(
        id: u64,
        agent: usize,
        signed_volume: i64,
        price: f64,
        now: u32,
        time_in_force: u32,
    ) -> Option<Order> {
        if signed_volume == 0 {
            return None;
        }
        let side = if signed_volume > 0 { Side::Buy } else { Side::Sell };
        Some(Order {
            id,
            agent,
            side,
            volume: signed_volume.unsigned_abs().min(u32::MAX as u64) as u32,
            price: price_to_ticks(price).max(1),
            submitted_at: now,
            expires_at: now.saturating_add(time_in_force.max(1)),
        })
    }

    pub fn price_f64(&self) -> f64 {
        ticks_to_price(self.price)
    }

    fn validate(&self) -> Result<(), BookError> {
        if self.volume == 0 {
            return Err(BookError::ZeroVolume);
        }
        if self.price <= 0 {
            return Err(BookError::NonPositivePrice(self.price));
        }
        if self.expires_at <= self.submitted_at {
            return Err(BookError::BadExpiry {
                submitted_at: self.submitted_at,
                expires_at: self.expires_at,
            });
        }
        Ok(())
    }
}

/// An executed match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trade {
    pub buy_order_id: u64,
    pub sell_order_id: u64,
    pub buyer: usize,
    pub seller: usize,
    pub price: Ticks,
    pub volume: u32,
    pub executed_at: u32,
}

impl Trade {
    pub fn price_f64(&self) -> f64 {
        ticks_to_price(self.price)
    }
}

/// Aggregated volume resting at one price level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Level {
    pub side: Side,
    pub price: Ticks,
    pub volume: u64,
}

#[derive(Debug, Clone, Default)]
pub struct OrderBook {
    bids: BTreeMap<Ticks, VecDeque<Order>>,
    asks: BTreeMap<Ticks, VecDeque<Order>>,
    // (expires_at, id) -> resting order location
    expiry: BTreeMap<(u32, u64), (Side, Ticks)>,
    seen: BTreeSet<u64>,
    last_trade: Option<Ticks>,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_bid(&self) -> Option<Ticks> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Ticks> {
        self.asks.keys().next().copied()
    }

    pub fn last_trade_price(&self) -> Option<Ticks> {
        self.last_trade
    }

    /// True when the best bid is at or above the best ask.
    pub fn is_crossed(&self) -> bool {
        matches!((self.best_bid(), self.best_ask()), (Some(b), Some(a)) if b >= a)
    }

    /// Number of resting orders.
    pub fn len(&self) -> usize {
        self.expiry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expiry.is_empty()
    }

    /// Mid price with fallbacks: the bid/ask average when both sides exist,
    /// else the last trade price, else `fallback`.
    pub fn mid_price(&self, fallback: f64) -> f64 {
        match (self.best_bid(), self.best_ask()) {
            (Some(b), Some(a)) => (b + a) as f64 / (2.0 * TICKS_PER_UNIT),
            _ => self.last_trade.map(ticks_to_price).unwrap_or(fallback),
        }
    }

    /// Submits an order. When `halted` the order rests without matching.
    ///
    /// Otherwise it trades against the opposite side while marketable and any
    /// residual rests. Trades are returned in execution order.
    pub fn submit(&mut self, mut order: Order, halted: bool) -> Result<Vec<Trade>, BookError> {
        order.validate()?;
        if !self.seen.insert(order.id) {
            return Err(BookError::DuplicateId(order.id));
        }
        let mut trades = Vec::new();
        if !halted {
            self.match_incoming(&mut order, &mut trades);
        }
        if order.volume > 0 {
            self.rest(order);
        }
        Ok(trades)
    }

    fn match_incoming(&mut self, order: &mut Order, trades: &mut Vec<Trade>) {
        while order.volume > 0 {
            let level_price = match order.side {
                Side::Buy => match self.best_ask() {
                    Some(a) if a <= order.price => a,
                    _ => break,
                },
                Side::Sell => match self.best_bid() {
                    Some(b) if b >= order.price => b,
                    _ => break,
                },
            };
            let book_side = match order.side {
                Side::Buy => &mut self.asks,
                Side::Sell => &mut self.bids,
            };
            let queue = book_side.get_mut(&level_price).expect("level exists");
            let resting = queue.front_mut().expect("levels are never empty");
            let volume = resting.volume.min(order.volume);
            resting.volume -= volume;
            order.volume -= volume;
            let trade = match order.side {
                Side::Buy => Trade {
                    buy_order_id: order.id,
                    sell_order_id: resting.id,
                    buyer: order.agent,
                    seller: resting.agent,
                    price: level_price,
                    volume,
                    executed_at: order.submitted_at,
                },
                Side::Sell => Trade {
                    buy_order_id: resting.id,
                    sell_order_id: order.id,
                    buyer: resting.agent,
                    seller: order.agent,
                    price: level_price,
                    volume,
                    executed_at: order.submitted_at,
                },
            };
            if resting.volume == 0 {
                let filled = queue.pop_front().expect("front exists");
                self.expiry.remove(&(filled.expires_at, filled.id));
                if queue.is_empty() {
                    book_side.remove(&level_price);
                }
            }
            self.last_trade = Some(level_price);
            trades.push(trade);
        }
    }

    fn rest(&mut self, order: Order) {
        self.expiry
            .insert((order.expires_at, order.id), (order.side, order.price));
        let side = match order.side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        };
        side.entry(order.price).or_default().push_back(order);
    }

    /// Matches a crossed book (left behind by a halt) in price-time order.
    ///
    /// The heads of the best bid and best ask levels trade repeatedly; the
    /// earlier-submitted of the two sets the execution price.
    pub fn uncross(&mut self, now: u32) -> Vec<Trade> {
        let mut trades = Vec::new();
        while let (Some(bid_px), Some(ask_px)) = (self.best_bid(), self.best_ask()) {
            if bid_px < ask_px {
                break;
            }
            let bid_q = self.bids.get_mut(&bid_px).expect("level exists");
            let ask_q = self.asks.get_mut(&ask_px).expect("level exists");
            let bid = bid_q.front_mut().expect("levels are never empty");
            let ask = ask_q.front_mut().expect("levels are never empty");
            let bid_first = (bid.submitted_at, bid.id) < (ask.submitted_at, ask.id);
            let price = if bid_first { bid_px } else { ask_px };
            let volume = bid.volume.min(ask.volume);
            bid.volume -= volume;
            ask.volume -= volume;
            trades.push(Trade {
                buy_order_id: bid.id,
                sell_order_id: ask.id,
                buyer: bid.agent,
                seller: ask.agent,
                price,
                volume,
                executed_at: now,
            });
            self.last_trade = Some(price);
            if bid.volume == 0 {
                let filled = bid_q.pop_front().expect("front exists");
                self.expiry.remove(&(filled.expires_at, filled.id));
                if bid_q.is_empty() {
                    self.bids.remove(&bid_px);
                }
            }
            let ask_q = self.asks.get_mut(&ask_px).expect("level exists");
            if ask_q.front().map(|o| o.volume == 0).unwrap_or(false) {
                let filled = ask_q.pop_front().expect("front exists");
                self.expiry.remove(&(filled.expires_at, filled.id));
                if ask_q.is_empty() {
                    self.asks.remove(&ask_px);
                }
            }
        }
        trades
    }

    /// Removes and returns every resting order with `expires_at <= now`,
    /// sorted by id.
    pub fn expire(&mut self, now: u32) -> Vec<Order> {
        let due: Vec<((u32, u64), (Side, Ticks))> = self
            .expiry
            .range(..=(now, u64::MAX))
            .map(|(k, v)| (*k, *v))
            .collect();
        let mut removed = Vec::with_capacity(due.len());
        for (key, (side, price)) in due {
            self.expiry.remove(&key);
            let book_side = match side {
                Side::Buy => &mut self.bids,
                Side::Sell => &mut self.asks,
            };
            if let Some(queue) = book_side.get_mut(&price) {
                if let Some(pos) = queue.iter().position(|o| o.id == key.1) {
                    if let Some(order) = queue.remove(pos) {
                        removed.push(order);
                    }
                }
                if queue.is_empty() {
                    book_side.remove(&price);
                }
            }
        }
        removed.sort_by_key(|o| o.id);
        removed
    }

    /// Distance-weighted resting volume within a band of `xi` around `mid`.
    ///
    /// Bids strictly inside `(mid(1-xi), mid)` and asks strictly inside
    /// `(mid, mid(1+xi))` contribute `vol * exp(-decay * |mid - p| / mid)`.
    pub fn depth_weighted_volumes(
        &self,
        mid: f64,
        xi: f64,
        bid_decay: f64,
        ask_decay: f64,
    ) -> (f64, f64) {
        let lo = mid * (1.0 - xi);
        let hi = mid * (1.0 + xi);
        let lo_t = (lo * TICKS_PER_UNIT).floor() as Ticks;
        let mid_lo_t = (mid * TICKS_PER_UNIT).floor() as Ticks;
        let mid_hi_t = (mid * TICKS_PER_UNIT).ceil() as Ticks;
        let hi_t = (hi * TICKS_PER_UNIT).ceil() as Ticks;

        let weigh = |levels: &BTreeMap<Ticks, VecDeque<Order>>, from: Ticks, to: Ticks, decay: f64, inside: &dyn Fn(f64) -> bool| {
            levels
                .range(from..=to)
                .filter(|(p, _)| inside(ticks_to_price(**p)))
                .map(|(p, q)| {
                    let vol: u64 = q.iter().map(|o| o.volume as u64).sum();
                    let dist = (mid - ticks_to_price(*p)).abs() / mid;
                    vol as f64 * (-decay * dist).exp()
                })
                .sum::<f64>()
        };
        let b = weigh(&self.bids, lo_t, mid_hi_t, bid_decay, &|p| lo < p && p < mid);
        let s = weigh(&self.asks, mid_lo_t, hi_t, ask_decay, &|p| mid < p && p < hi);
        (b, s)
    }

    /// Aggregated levels, bids from best to worst followed by asks from best
    /// to worst.
    pub fn snapshot(&self) -> Vec<Level> {
        let bids = self.bids.iter().rev().map(|(p, q)| Level {
            side: Side::Buy,
            price: *p,
            volume: q.iter().map(|o| o.volume as u64).sum(),
        });
        let asks = self.asks.iter().map(|(p, q)| Level {
            side: Side::Sell,
            price: *p,
            volume: q.iter().map(|o| o.volume as u64).sum(),
        });
        bids.chain(asks).collect()
    }

    /// All resting orders, bids then asks, each side in price-time priority.
    pub fn resting_orders(&self) -> impl Iterator<Item = &Order> {
        self.bids
            .values()
            .rev()
            .flat_map(|q| q.iter())
            .chain(self.asks.values().flat_map(|q| q.iter()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn order(id: u64, signed: i64, price: f64, at: u32) -> Order {
        Order::from_signed(id, id as usize, signed, price, at, 200).unwrap()
    }

    #[test]
    fn tick_rounding() {
        assert_eq!(price_to_ticks(292.5), 2925);
        assert_eq!(price_to_ticks(300.04), 3000);
        assert_eq!(price_to_ticks(300.05), 3001);
        assert_eq!(ticks_to_price(2925), 292.5);
    }

    #[test]
    fn empty_book_rests_buy() {
        let mut book = OrderBook::new();
        let trades = book.submit(order(1, 2, 300.0, 1), false).unwrap();
        assert!(trades.is_empty());
        assert_eq!(book.best_bid(), Some(3000));
        assert_eq!(book.best_ask(), None);
    }

    #[test]
    fn partial_fill_rests_residual() {
        let mut book = OrderBook::new();
        book.submit(order(1, -1, 299.0, 1), false).unwrap();
        let trades = book.submit(order(2, 2, 300.0, 2), false).unwrap();
        assert_eq!(trades.len(), 1);
        assert_eq!(trades[0].price, 2990);
        assert_eq!(trades[0].volume, 1);
        assert_eq!(trades[0].buy_order_id, 2);
        assert_eq!(trades[0].sell_order_id, 1);
        assert_eq!(book.best_bid(), Some(3000));
        assert_eq!(book.best_ask(), None);
        let resting: Vec<_> = book.resting_orders().collect();
        assert_eq!(resting.len(), 1);
        assert_eq!(resting[0].volume, 1);
    }

    #[test]
    fn halted_orders_cross_until_uncrossed() {
        let mut book = OrderBook::new();
        book.submit(order(1, -1, 299.0, 1), true).unwrap();
        let trades = book.submit(order(2, 1, 300.0, 2), true).unwrap();
        assert!(trades.is_empty());
        assert!(book.is_crossed());
        let trades = book.uncross(3);
        assert_eq!(trades.len(), 1);
        // the ask arrived first, so it sets the price
        assert_eq!(trades[0].price, 2990);
        assert_eq!(trades[0].executed_at, 3);
        assert!(!book.is_crossed());
        assert!(book.is_empty());
    }

    #[test]
    fn fifo_within_level() {
        let mut book = OrderBook::new();
        book.submit(order(1, -1, 300.0, 1), false).unwrap();
        book.submit(order(2, -1, 300.0, 2), false).unwrap();
        let trades = book.submit(order(3, 1, 300.0, 3), false).unwrap();
        assert_eq!(trades[0].sell_order_id, 1);
        let trades = book.submit(order(4, 1, 300.0, 4), false).unwrap();
        assert_eq!(trades[0].sell_order_id, 2);
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut book = OrderBook::new();
        book.submit(order(1, 1, 300.0, 1), false).unwrap();
        assert_eq!(
            book.submit(order(1, -1, 310.0, 2), false),
            Err(BookError::DuplicateId(1))
        );
    }

    #[test]
    fn expiry_boundaries() {
        let mut book = OrderBook::new();
        let mut o = order(1, 1, 300.0, 0);
        o.expires_at = 200;
        book.submit(o, false).unwrap();
        assert!(book.expire(199).is_empty());
        let gone = book.expire(200);
        assert_eq!(gone.len(), 1);
        assert!(book.is_empty());
    }

    #[test]
    fn expiry_in_id_order() {
        let mut book = OrderBook::new();
        for (id, exp) in [(3u64, 250u32), (1, 200), (2, 150)] {
            let mut o = order(id, 1, 290.0 + id as f64, 0);
            o.expires_at = exp;
            book.submit(o, false).unwrap();
        }
        let gone: Vec<u64> = book.expire(200).iter().map(|o| o.id).collect();
        assert_eq!(gone, vec![1, 2]);
        assert_eq!(book.len(), 1);
    }

    #[test]
    fn mid_price_fallbacks() {
        let mut book = OrderBook::new();
        assert_eq!(book.mid_price(300.0), 300.0);
        book.submit(order(1, 1, 299.0, 1), false).unwrap();
        assert_eq!(book.mid_price(300.0), 300.0);
        book.submit(order(2, -1, 301.0, 1), false).unwrap();
        assert_eq!(book.mid_price(0.0), 300.0);
        book.submit(order(3, 1, 301.0, 2), false).unwrap();
        // ask consumed, last trade 301 is the fallback
        assert_eq!(book.mid_price(0.0), 301.0);
    }

    #[test]
    fn depth_single_bid() {
        let mut book = OrderBook::new();
        book.submit(order(1, 10, 297.0, 1), false).unwrap();
        let (b, s) = book.depth_weighted_volumes(300.0, 0.05, 100.0, 100.0);
        assert!((b - 10.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn depth_band_is_open() {
        let mut book = OrderBook::new();
        // 300 * 0.95 = 285 exactly on the lower edge
        book.submit(order(1, 5, 285.0, 1), false).unwrap();
        book.submit(order(2, -5, 315.0, 1), false).unwrap();
        assert_eq!(book.depth_weighted_volumes(300.0, 0.05, 100.0, 100.0), (0.0, 0.0));
    }

    #[test]
    fn from_signed_sides() {
        let o = Order::from_signed(1, 0, -3, 307.5, 10, 200).unwrap();
        assert_eq!(o.side, Side::Sell);
        assert_eq!(o.volume, 3);
        assert_eq!(o.price, 3075);
        assert_eq!(o.expires_at, 210);
        assert!(Order::from_signed(1, 0, 0, 300.0, 10, 200).is_none());
    }
}
