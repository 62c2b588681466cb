use std::collections::HashSet;

use evomarket::agents::{AgentParams, AgentState, ParamPriors};
use evomarket::analysis::{
    empirical_kl, fit_psd_exponent, median, psd, quantile, spearman, FitBand, KlOptions,
};
use evomarket::book::{Order, OrderBook, Side};
use evomarket::selection::{keep_probabilities, quantile_select, replace, Endowment};
use evomarket::stochastic::{CmsInput, SdeKind, SdeSpec, P_BID_CLAMP};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// (is_bid, price in ticks, quantity)
fn quotes() -> impl Strategy<Value = Vec<(bool, u32, u64)>> {
    prop::collection::vec((any::<bool>(), 1u32..40, 1u64..20), 0..40)
}

fn book_from(quotes: &[(bool, u32, u64)]) -> (OrderBook, Vec<Order>) {
    let orders: Vec<Order> = quotes
        .iter()
        .enumerate()
        .map(|(i, &(bid, ticks, quantity))| Order {
            id: i as u64,
            agent_id: i as u64 % 7,
            side: if bid { Side::Bid } else { Side::Ask },
            price: ticks as f64 * 0.5,
            quantity,
            submitted_at: (i % 3) as u64,
        })
        .collect();
    let mut book = OrderBook::new(100);
    book.submit_batch(orders.clone()).unwrap();
    (book, orders)
}

fn brute_force_volume(orders: &[Order]) -> u64 {
    orders
        .iter()
        .map(|o| o.price)
        .map(|p| {
            let demand: u64 = orders
                .iter()
                .filter(|o| o.side == Side::Bid && o.price >= p)
                .map(|o| o.quantity)
                .sum();
            let supply: u64 = orders
                .iter()
                .filter(|o| o.side == Side::Ask && o.price <= p)
                .map(|o| o.quantity)
                .sum();
            demand.min(supply)
        })
        .max()
        .unwrap_or(0)
}

fn agent(id: u64, cash: f64, shares: i64, born_at: u64) -> AgentState {
    let params = AgentParams {
        p_bid: 0.5,
        n_shares: 5.0,
        vol_pref: 1.0,
    };
    AgentState::new(id, params, cash, shares, born_at)
}

fn distinct(x: &[f64]) -> bool {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[0] < w[1])
}

proptest! {
    #[test]
    fn clearing_volume_is_maximal(quotes in quotes()) {
        let (mut book, orders) = book_from(&quotes);
        let expected = brute_force_volume(&orders);
        let result = book.clear_batch(10.0);
        prop_assert_eq!(result.executed_volume, expected);
        prop_assert_eq!(result.clearing_price.is_some(), expected > 0);
        prop_assert!(book.is_consistent());
    }

    #[test]
    fn fills_respect_limits_and_quantities(quotes in quotes()) {
        let (mut book, orders) = book_from(&quotes);
        let result = book.clear_batch(10.0);
        let filled: u64 = result.fills.iter().map(|f| f.quantity).sum();
        prop_assert_eq!(filled, result.executed_volume);
        for f in &result.fills {
            let bid = &orders[f.bid_order_id as usize];
            let ask = &orders[f.ask_order_id as usize];
            prop_assert_eq!(bid.side, Side::Bid);
            prop_assert_eq!(ask.side, Side::Ask);
            prop_assert!(bid.price >= f.price && ask.price <= f.price);
            prop_assert_eq!(Some(f.price), result.clearing_price);
        }
        for o in &orders {
            let used: u64 = result
                .fills
                .iter()
                .filter(|f| f.bid_order_id == o.id || f.ask_order_id == o.id)
                .map(|f| f.quantity)
                .sum();
            let rest: u64 = book
                .bids()
                .iter()
                .chain(book.asks())
                .filter(|r| r.id == o.id)
                .map(|r| r.quantity)
                .sum();
            prop_assert_eq!(used + rest, o.quantity);
        }
    }

    #[test]
    fn settlement_conserves_cash_and_shares(quotes in quotes()) {
        let (mut book, _) = book_from(&quotes);
        let result = book.clear_batch(10.0);
        let mut agents: Vec<AgentState> = (0..7).map(|i| agent(i, 100.0, 3, 0)).collect();
        for f in &result.fills {
            agents[f.buyer as usize].settle(Side::Bid, f.quantity, f.price);
            agents[f.seller as usize].settle(Side::Ask, f.quantity, f.price);
        }
        let cash: f64 = agents.iter().map(|a| a.cash).sum();
        let shares: i64 = agents.iter().map(|a| a.shares).sum();
        prop_assert!((cash - 700.0).abs() < 1e-6);
        prop_assert_eq!(shares, 21);
    }

    #[test]
    fn opposite_settlements_cancel(cash in -1e4f64..1e4, shares in -50i64..50, q in 0u64..100, p in 0.01f64..500.0) {
        let mut a = agent(1, cash, shares, 0);
        let before = a.profit(p);
        a.settle(Side::Bid, q, p);
        prop_assert!((a.profit(p) - before).abs() < 1e-6 * (1.0 + before.abs()));
        a.settle(Side::Ask, q, p);
        prop_assert_eq!(a.shares, shares);
        prop_assert!((a.cash - cash).abs() < 1e-7 * (1.0 + cash.abs() + q as f64 * p));
    }

    #[test]
    fn spearman_ignores_monotone_transforms(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        scale in 0.1f64..10.0,
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(distinct(&x) && distinct(&y));
        let rho = spearman(&x, &y).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&rho));
        let tx: Vec<f64> = x.iter().map(|v| (v / 4.0).exp() * scale + v.powi(3)).collect();
        prop_assert!((spearman(&tx, &y).unwrap() - rho).abs() < 1e-9);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        prop_assert!((spearman(&x, &neg).unwrap() + rho).abs() < 1e-9);
        prop_assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_is_non_negative_and_zero_on_itself(
        p in prop::collection::vec(-5.0f64..5.0, 1..200),
        q in prop::collection::vec(-8.0f64..3.0, 1..200),
        bins in 1usize..80,
        smoothing in 0.01f64..2.0,
    ) {
        let opts = KlOptions { bins, smoothing };
        let d = empirical_kl(&p, &q, &opts);
        prop_assert!(d >= 0.0 && d.is_finite());
        prop_assert!(empirical_kl(&p, &p, &opts).abs() < 1e-12);
    }

    #[test]
    fn psd_exponent_ignores_scale_offset_and_time_unit(
        steps in prop::collection::vec(-1.0f64..1.0, 128..400),
        scale in 0.01f64..100.0,
        offset in -1e3f64..1e3,
        dt in 0.001f64..10.0,
    ) {
        let mut x = vec![0.0];
        for s in &steps {
            let last = *x.last().unwrap();
            x.push(last + s);
        }
        let band = FitBand::default();
        let Ok(base) = psd(&x, 1.0).and_then(|p| fit_psd_exponent(&p, &band)) else {
            return Ok(());
        };
        let y: Vec<f64> = x.iter().map(|v| scale * v + offset).collect();
        let g = fit_psd_exponent(&psd(&y, dt).unwrap(), &band).unwrap();
        prop_assert!((g - base).abs() < 1e-6, "{} vs {}", g, base);
    }

    #[test]
    fn keep_probabilities_are_a_monotone_distribution(
        fitness in prop::collection::vec(-1e3f64..1e3, 1..30),
    ) {
        let p = keep_probabilities(&fitness);
        prop_assert_eq!(p.len(), fitness.len());
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (i, j) in (0..p.len()).flat_map(|i| (0..p.len()).map(move |j| (i, j))) {
            if fitness[i] < fitness[j] {
                prop_assert!(p[i] <= p[j]);
            }
        }
    }

    #[test]
    fn quantile_selection_takes_the_worst(
        cash in prop::collection::vec(-100i32..100, 1..60),
        q in 0.0f64..=1.0,
    ) {
        let population: Vec<AgentState> = cash
            .iter()
            .enumerate()
            .map(|(i, &c)| agent(i as u64 + 10, c as f64, 0, (i % 4) as u64))
            .collect();
        let removed = quantile_select(&population, 1.0, q);
        let k = ((q * population.len() as f64) + 1e-9).floor() as usize;
        prop_assert_eq!(removed.len(), k);
        let set: HashSet<u64> = removed.iter().copied().collect();
        prop_assert_eq!(set.len(), k);
        let worst_kept = population
            .iter()
            .filter(|a| !set.contains(&a.id))
            .map(|a| a.cash)
            .fold(f64::INFINITY, f64::min);
        for a in population.iter().filter(|a| set.contains(&a.id)) {
            prop_assert!(a.cash <= worst_kept);
        }
    }

    #[test]
    fn replacement_preserves_size_and_inherits_traits(
        n in 2usize..40,
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..20),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let priors = ParamPriors::default();
        let mut population: Vec<AgentState> = (0..n as u64)
            .map(|i| AgentState::new(i, priors.sample(&mut rng), 10.0, 1, 0))
            .collect();
        let mut removed: Vec<u64> = picks.iter().map(|i| i.index(n) as u64).collect();
        removed.sort_unstable();
        removed.dedup();
        prop_assume!(removed.len() < n);
        let survivors: Vec<AgentParams> = population
            .iter()
            .filter(|a| !removed.contains(&a.id))
            .map(|a| a.params)
            .collect();
        let mut next_id = n as u64;
        let endowment = Endowment { cash: 50.0, shares: 2 };
        let out = replace(&mut population, &removed, &priors, 0.0, endowment, 9, &mut next_id, &mut rng).unwrap();

        prop_assert_eq!(population.len(), n);
        prop_assert_eq!(out.replacement_ids.len(), removed.len());
        let ids: HashSet<u64> = population.iter().map(|a| a.id).collect();
        prop_assert_eq!(ids.len(), n);
        prop_assert!(removed.iter().all(|id| !ids.contains(id)));
        prop_assert_eq!(out.injection.shares_out, removed.len() as i64);
        prop_assert!((out.injection.cash_in - 50.0 * removed.len() as f64).abs() < 1e-9);
        for a in population.iter().filter(|a| a.born_at == 9) {
            prop_assert!(survivors.iter().any(|s| s.p_bid == a.params.p_bid));
            prop_assert!(survivors.iter().any(|s| s.n_shares == a.params.n_shares));
            prop_assert!(survivors.iter().any(|s| s.vol_pref == a.params.vol_pref));
        }
    }

    #[test]
    fn clamped_sde_steps_stay_in_domain(
        x in 0.0f64..1.0,
        draw in -1e3f64..1e3,
        drift in -5.0f64..5.0,
        sigma in 0.0f64..5.0,
        alpha in 1.1f64..=2.0,
    ) {
        let ou = SdeSpec::new(SdeKind::OuPbid, drift.abs(), sigma, alpha, x);
        let (p, _) = ou.advance(x, draw, ou.noise_scale());
        prop_assert!((P_BID_CLAMP.0..=P_BID_CLAMP.1).contains(&p));
        for kind in [SdeKind::RwNshares, SdeKind::GeomVolpref] {
            let spec = SdeSpec::new(kind, drift, sigma, alpha, 10.0 * x);
            let (v, clamped) = spec.advance(10.0 * x, draw, spec.noise_scale());
            prop_assert!(v >= 0.0);
            prop_assert!(!clamped || v == 0.0);
        }
    }

    #[test]
    fn stable_draws_are_odd_in_the_angle(
        angle in -1.5f64..1.5,
        exp in 0.01f64..10.0,
        alpha in 0.5f64..=2.0,
    ) {
        let plus = CmsInput { angle, exp }.stable(alpha);
        let minus = CmsInput { angle: -angle, exp }.stable(alpha);
        prop_assert!((plus + minus).abs() <= 1e-9 * (1.0 + plus.abs()));
    }

    #[test]
    fn quantiles_are_ordered_and_bracketed(
        x in prop::collection::vec(-1e3f64..1e3, 1..100),
        a in 0.0f64..=1.0,
        b in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(quantile(&x, lo) <= quantile(&x, hi));
        let m = median(&x);
        prop_assert!(m >= min && m <= max);
        prop_assert_eq!(quantile(&x, 0.0), min);
        prop_assert_eq!(quantile(&x, 1.0), max);
    }
}
