use evomarket::agents::*;
use evomarket::book::Side;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn agent(p_bid: f64, n_shares: f64, vol_pref: f64) -> AgentState {
    AgentState::new(
        0,
        AgentParams {
            p_bid,
            n_shares,
            vol_pref,
        },
        0.0,
        0,
        0,
    )
}

#[test]
fn profit_cases() {
    let mut a = agent(0.5, 1.0, 1.0);
    assert_eq!(a.profit(37.0), 0.0);
    a.cash = 100.0;
    a.shares = 2;
    assert_eq!(a.profit(10.0), 120.0);
    a.cash = 50.0;
    a.shares = -3;
    assert_eq!(a.profit(10.0), 20.0);
}

#[test]
fn settle_buy_and_short_sale() {
    let mut a = agent(0.5, 1.0, 1.0);
    a.cash = 1000.0;
    a.settle(Side::Bid, 5, 100.0);
    assert_eq!((a.cash, a.shares), (500.0, 5));

    let mut b = agent(0.5, 1.0, 1.0);
    b.settle(Side::Ask, 5, 100.0);
    assert_eq!((b.cash, b.shares), (500.0, -5));
}

#[test]
fn offsetting_fills_round_trip() {
    let mut a = agent(0.5, 1.0, 1.0);
    a.cash = 321.5;
    a.shares = 7;
    let before = a.clone();
    a.settle(Side::Bid, 13, 42.25);
    a.settle(Side::Ask, 13, 42.25);
    assert_eq!(a, before);
}

#[test]
fn zero_size_mean_never_orders() {
    let a = agent(0.5, 0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!((0..1000).all(|t| a.generate_order(100.0, t, t, &mut rng).is_none()));
}

#[test]
fn zero_vol_pref_quotes_last_price() {
    let a = agent(0.5, 20.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for t in 0..200 {
        if let Some(o) = a.generate_order(100.0, t, t, &mut rng) {
            assert_eq!(o.price, 100.0);
        }
    }
}

#[test]
fn always_bid_quotes_inside_band_with_unbiased_mean() {
    let a = agent(1.0, 10.0, 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in 0..100_000 {
        let o = a.generate_order(100.0, t, t, &mut rng).unwrap_or_else(|| {
            // Poisson(10) is zero with probability e^-10; redraw.
            a.generate_order(100.0, t, t, &mut rng).unwrap()
        });
        assert_eq!(o.side, Side::Bid);
        assert!((95.0..=105.0).contains(&o.price));
        sum += o.price;
        n += 1;
    }
    assert!((sum / n as f64 - 100.0).abs() < 0.1);
}

#[test]
fn bid_fraction_and_size_mean_converge() {
    let a = agent(0.3, 4.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let draws = 200_000;
    let (mut bids, mut orders, mut size) = (0u64, 0u64, 0u64);
    for t in 0..draws {
        if let Some(o) = a.generate_order(50.0, t, t, &mut rng) {
            orders += 1;
            size += o.quantity;
            if o.side == Side::Bid {
                bids += 1;
            }
        }
    }
    let frac = bids as f64 / orders as f64;
    let sd = (0.3f64 * 0.7 / orders as f64).sqrt();
    assert!((frac - 0.3).abs() < 4.0 * sd, "bid fraction {frac}");
    // Zero draws produce no order, so the mean over all draws is n_shares.
    let mean = size as f64 / draws as f64;
    let sd = (4.0f64 / draws as f64).sqrt();
    assert!((mean - 4.0).abs() < 4.0 * sd, "size mean {mean}");
}

#[test]
fn prior_parsing() {
    assert_eq!(
        "uniform(0, 1)".parse::<Prior>().unwrap(),
        Prior::Uniform {
            low: 0.0,
            high: 1.0
        }
    );
    assert_eq!(
        " LogNormal(0,0.5) ".parse::<Prior>().unwrap(),
        Prior::LogNormal {
            mu: 0.0,
            sigma: 0.5
        }
    );
    assert!("gamma(2)".parse::<Prior>().is_err());
    assert!("beta(1,1)".parse::<Prior>().is_err());
    let p = Prior::Gamma {
        shape: 2.0,
        scale: 5.0,
    };
    assert_eq!(p.to_string().parse::<Prior>().unwrap(), p);
}

#[test]
fn prior_draws_stay_in_domain() {
    let priors = ParamPriors {
        p_bid: Prior::Uniform {
            low: -0.5,
            high: 1.5,
        },
        ..ParamPriors::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        priors.sample(&mut rng).validate().unwrap();
    }
}
