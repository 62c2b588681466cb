//! Frequent batch auction: a resting order book cleared once per period at a
//! single uniform price.
//!
//! Bids are kept sorted by descending price, asks by ascending price; within a
//! price level older orders come first and, within the same period, lower ids
//! come first. The simulation assigns ids in a freshly shuffled agent order
//! every period, so the id tie-break acts as a uniform random selection.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible price. Clearing prices and agent quotes are floored here
/// so that log-returns stay defined.
pub const TICK: f64 = 1e-6;

/// Default number of periods an order may rest before it is considered stale.
pub const DEFAULT_MAX_AGE: u64 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: u64,
    pub agent_id: u64,
    pub side: Side,
    pub price: f64,
    /// Remaining unfilled quantity.
    pub quantity: u64,
    pub submitted_at: u64,
}

impl Order {
    fn validate(&self) -> Result<()> {
        if !(self.price.is_finite() && self.price > 0.0) {
            return Err(Error::InvalidOrder(format!(
                "order {} has non-positive or non-finite price {}",
                self.id, self.price
            )));
        }
        if self.quantity == 0 {
            return Err(Error::InvalidOrder(format!(
                "order {} has zero quantity",
                self.id
            )));
        }
        Ok(())
    }
}

/// Priority order on one side of the book: better price, then older, then lower id.
fn priority(side: Side, a: &Order, b: &Order) -> Ordering {
    let by_price = match side {
        Side::Bid => b.price.total_cmp(&a.price),
        Side::Ask => a.price.total_cmp(&b.price),
    };
    by_price
        .then(a.submitted_at.cmp(&b.submitted_at))
        .then(a.id.cmp(&b.id))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub bid_order_id: u64,
    pub ask_order_id: u64,
    pub buyer: u64,
    pub seller: u64,
    pub quantity: u64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub clearing_price: Option<f64>,
    pub executed_volume: u64,
    pub fills: Vec<Fill>,
    /// Market price after this batch: the clearing price on a cross, otherwise
    /// the previous price.
    pub new_price: f64,
    /// Set when the raw clearing price fell below [`TICK`] and was floored.
    pub floored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderBook {
    bids: Vec<Order>,
    asks: Vec<Order>,
    max_age: u64,
}

impl Default for OrderBook {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_AGE)
    }
}

impl OrderBook {
    pub fn new(max_age: u64) -> Self {
        Self {
            bids: Vec::new(),
            asks: Vec::new(),
            max_age,
        }
    }

    pub fn bids(&self) -> &[Order] {
        &self.bids
    }

    pub fn asks(&self) -> &[Order] {
        &self.asks
    }

    pub fn max_age(&self) -> u64 {
        self.max_age
    }

    pub fn len(&self) -> usize {
        self.bids.len() + self.asks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    fn side_mut(&mut self, side: Side) -> &mut Vec<Order> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    /// Inserts one order at its priority position.
    pub fn submit(&mut self, order: Order) -> Result<()> {
        order.validate()?;
        let side = order.side;
        let book = self.side_mut(side);
        let at = book.partition_point(|o| priority(side, o, &order) == Ordering::Less);
        book.insert(at, order);
        Ok(())
    }

    /// Inserts a batch of orders. Equivalent to repeated [`OrderBook::submit`]
    /// but merges each side in one linear pass.
    pub fn submit_batch(&mut self, orders: Vec<Order>) -> Result<()> {
        for o in &orders {
            o.validate()?;
        }
        let (mut new_bids, mut new_asks): (Vec<Order>, Vec<Order>) =
            orders.into_iter().partition(|o| o.side == Side::Bid);
        for (side, incoming) in [(Side::Bid, &mut new_bids), (Side::Ask, &mut new_asks)] {
            if incoming.is_empty() {
                continue;
            }
            incoming.sort_by(|a, b| priority(side, a, b));
            let book = self.side_mut(side);
            let resting = std::mem::take(book);
            *book = merge_sorted(side, resting, std::mem::take(incoming));
        }
        Ok(())
    }

    /// Removes every order older than `max_age` periods. An order submitted at
    /// period `s` survives through period `s + max_age` inclusive.
    pub fn evict_stale(&mut self, period: u64) -> usize {
        let max_age = self.max_age;
        let before = self.len();
        let fresh = |o: &Order| period.saturating_sub(o.submitted_at) <= max_age;
        self.bids.retain(fresh);
        self.asks.retain(fresh);
        before - self.len()
    }

    /// Cancels all resting orders belonging to the given agents.
    pub fn cancel_agents(&mut self, agent_ids: &[u64]) -> usize {
        if agent_ids.is_empty() {
            return 0;
        }
        let before = self.len();
        let keep = |o: &Order| !agent_ids.contains(&o.agent_id);
        self.bids.retain(keep);
        self.asks.retain(keep);
        before - self.len()
    }

    /// Demand at `p`: total bid quantity with limit at or above `p`.
    pub fn demand_at(&self, p: f64) -> u64 {
        self.bids
            .iter()
            .take_while(|o| o.price >= p)
            .map(|o| o.quantity)
            .sum()
    }

    /// Supply at `p`: total ask quantity with limit at or below `p`.
    pub fn supply_at(&self, p: f64) -> u64 {
        self.asks
            .iter()
            .take_while(|o| o.price <= p)
            .map(|o| o.quantity)
            .sum()
    }

    /// The interval of quoted prices maximizing `min(demand, supply)`, with the
    /// maximal volume. `None` when the book does not cross.
    pub fn max_volume_interval(&self) -> Option<(f64, f64, u64)> {
        let best_bid = self.bids.first()?.price;
        let best_ask = self.asks.first()?.price;
        if best_bid < best_ask {
            return None;
        }
        // Only quotes inside [best_ask, best_bid] can carry positive volume.
        let crossing_bids = self.bids.partition_point(|o| o.price >= best_ask);
        let crossing_asks = self.asks.partition_point(|o| o.price <= best_bid);
        let bids = &self.bids[..crossing_bids];
        let asks = &self.asks[..crossing_asks];

        let mut candidates: Vec<f64> = bids.iter().chain(asks).map(|o| o.price).collect();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();

        let bid_cum = cumulative(bids);
        let ask_cum = cumulative(asks);
        let mut best: Option<(f64, f64, u64)> = None;
        for &p in &candidates {
            let nb = bids.partition_point(|o| o.price >= p);
            let na = asks.partition_point(|o| o.price <= p);
            let volume = bid_cum[nb].min(ask_cum[na]);
            match &mut best {
                Some((_, hi, v)) if volume == *v => *hi = p,
                Some((_, _, v)) if volume < *v => {}
                _ => best = Some((p, p, volume)),
            }
        }
        best.filter(|&(_, _, v)| v > 0)
    }

    /// Runs one uniform-price batch cross.
    ///
    /// The clearing price is the midpoint of the max-volume price interval,
    /// floored at [`TICK`]. Eligible orders are matched in priority order;
    /// partially filled orders keep their place and timestamp.
    pub fn clear_batch(&mut self, prev_price: f64) -> ClearingResult {
        let no_cross = ClearingResult {
            clearing_price: None,
            executed_volume: 0,
            fills: Vec::new(),
            new_price: prev_price,
            floored: false,
        };
        let Some((lo, hi, _)) = self.max_volume_interval() else {
            return no_cross;
        };
        let mut price = 0.5 * (lo + hi);
        let floored = price < TICK;
        if floored {
            price = TICK;
        }

        let mut fills = Vec::new();
        let (mut i, mut j) = (0, 0);
        let mut volume = 0;
        while i < self.bids.len() && j < self.asks.len() {
            let (bid, ask) = (&self.bids[i], &self.asks[j]);
            if bid.price < price || ask.price > price {
                break;
            }
            let q = bid.quantity.min(ask.quantity);
            fills.push(Fill {
                bid_order_id: bid.id,
                ask_order_id: ask.id,
                buyer: bid.agent_id,
                seller: ask.agent_id,
                quantity: q,
                price,
            });
            volume += q;
            self.bids[i].quantity -= q;
            self.asks[j].quantity -= q;
            if self.bids[i].quantity == 0 {
                i += 1;
            }
            if self.asks[j].quantity == 0 {
                j += 1;
            }
        }
        // Fully filled orders form a prefix of each side.
        self.bids.drain(..i);
        self.asks.drain(..j);

        if volume == 0 {
            return ClearingResult {
                floored,
                ..no_cross
            };
        }
        ClearingResult {
            clearing_price: Some(price),
            executed_volume: volume,
            fills,
            new_price: price,
            floored,
        }
    }

    /// Checks the ordering and positivity invariants. Used by tests.
    pub fn is_consistent(&self) -> bool {
        let sorted = |side: Side, v: &[Order]| {
            v.windows(2)
                .all(|w| priority(side, &w[0], &w[1]) == Ordering::Less)
        };
        sorted(Side::Bid, &self.bids)
            && sorted(Side::Ask, &self.asks)
            && self.bids.iter().all(|o| o.side == Side::Bid)
            && self.asks.iter().all(|o| o.side == Side::Ask)
            && self
                .bids
                .iter()
                .chain(&self.asks)
                .all(|o| o.quantity > 0 && o.price > 0.0)
    }
}

fn cumulative(orders: &[Order]) -> Vec<u64> {
    let mut out = Vec::with_capacity(orders.len() + 1);
    let mut acc = 0;
    out.push(0);
    for o in orders {
        acc += o.quantity;
        out.push(acc);
    }
    out
}

fn merge_sorted(side: Side, a: Vec<Order>, b: Vec<Order>) -> Vec<Order> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut a = a.into_iter().peekable();
    let mut b = b.into_iter().peekable();
    loop {
        let take_a = match (a.peek(), b.peek()) {
            (Some(x), Some(y)) => priority(side, x, y) != Ordering::Greater,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        out.extend(if take_a { a.next() } else { b.next() });
    }
    out
}
