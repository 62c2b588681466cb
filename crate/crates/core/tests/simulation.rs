use evomarket::agents::Prior;
use evomarket::selection::{MechanismKind, SelectionConfig};
use evomarket::simulation::*;

fn small(kind: MechanismKind) -> SimConfig {
    SimConfig {
        days: 5,
        selection: SelectionConfig::with_kind(kind),
        seed: 42,
        ..SimConfig::default()
    }
}

#[test]
fn zero_days_records_only_initial_state() {
    let r = run(
        &SimConfig {
            days: 0,
            ..SimConfig::default()
        },
        0,
    )
    .unwrap();
    assert_eq!(r.price, vec![100.0]);
    assert!(r.returns.is_empty());
    assert_eq!(r.mean_profit.len(), 1);
}

#[test]
fn default_run_length() {
    assert_eq!(SimConfig::default().periods(), 6048);
}

#[test]
fn record_lengths() {
    let r = run(&small(MechanismKind::Quantile), 0).unwrap();
    assert_eq!(r.price.len(), 121);
    assert_eq!(r.returns.len(), 120);
    for v in [
        &r.mean_p_bid,
        &r.sd_vol_pref,
        &r.mean_profit,
        &r.mean_profit_net,
    ] {
        assert_eq!(v.len(), 121);
    }
    assert_eq!(r.volume.len(), 121);
}

#[test]
fn silent_agents_leave_price_constant() {
    let mut c = small(MechanismKind::Mixed);
    c.priors.n_shares = Prior::Fixed(0.0);
    let r = run(&c, 0).unwrap();
    assert!(r.price.iter().all(|&p| p == 100.0));
    assert!(r.volume.iter().all(|&v| v == 0));
}

#[test]
fn lone_bidder_never_moves_price() {
    let mut c = small(MechanismKind::Control);
    c.n_agents = 1;
    c.selection.tournament_size = 1;
    c.priors.p_bid = Prior::Fixed(1.0);
    let r = run(&c, 0).unwrap();
    assert!(r.price.iter().all(|&p| p == 100.0));
}

#[test]
fn control_keeps_founders() {
    let c = small(MechanismKind::Control);
    let r = run(&c, 3).unwrap();
    assert_eq!(r.final_agent_ids, (0..100).collect::<Vec<u64>>());
    assert!(r.events.is_empty());
}

#[test]
fn identical_seed_is_bit_identical() {
    let c = small(MechanismKind::Mixed);
    assert_eq!(run(&c, 1).unwrap(), run(&c, 1).unwrap());
    assert_ne!(run(&c, 1).unwrap().price, run(&c, 2).unwrap().price);
}

#[test]
fn trading_conserves_cash_and_shares() {
    let c = small(MechanismKind::Control);
    let mut m = Market::new(&c, 0).unwrap();
    let cash0: f64 = m.population().iter().map(|a| a.cash).sum();
    for _ in 0..120 {
        m.step().unwrap();
        let shares: i64 = m.population().iter().map(|a| a.shares).sum();
        assert_eq!(shares, 100 * 100);
        let cash: f64 = m.population().iter().map(|a| a.cash).sum();
        assert!((cash - cash0).abs() < 1e-6 * cash0.abs().max(1.0));
    }
}

#[test]
fn replacement_flows_balance_the_books() {
    let c = small(MechanismKind::Quantile);
    let mut m = Market::new(&c, 0).unwrap();
    for _ in 0..120 {
        m.step().unwrap();
        let inj = &m.record().injection;
        let shares: i64 = m.population().iter().map(|a| a.shares).sum();
        assert_eq!(shares, 100 * 100 + inj.shares_in - inj.shares_out);
        let cash: f64 = m.population().iter().map(|a| a.cash).sum();
        let expected = 100.0 * 1000.0 + inj.cash_in - inj.cash_out;
        assert!((cash - expected).abs() < 1e-6 * expected.abs().max(1e5));
        assert_eq!(m.population().len(), 100);
        assert!(m.book().is_consistent());
    }
}

#[test]
fn departed_agents_have_no_resting_orders() {
    let mut c = small(MechanismKind::FitnessProportionate);
    c.selection.p_selection = 0.5;
    let mut m = Market::new(&c, 0).unwrap();
    for _ in 0..120 {
        m.step().unwrap();
        let live: Vec<u64> = m.population().iter().map(|a| a.id).collect();
        assert!(m
            .book()
            .bids()
            .iter()
            .chain(m.book().asks())
            .all(|o| live.contains(&o.agent_id)));
    }
}

#[test]
fn rejects_invalid_config() {
    let c = SimConfig {
        n_runs: 0,
        ..SimConfig::default()
    };
    assert!(run_ensemble(&c).is_err());
    let c = SimConfig {
        n_agents: 5,
        ..SimConfig::default()
    };
    assert!(c.validate().is_err());
}

#[test]
fn single_run_ensemble_aggregates_equal_the_run() {
    let c = small(MechanismKind::Quantile);
    let e = run_ensemble(&c).unwrap();
    assert_eq!(e.runs.len(), 1);
    assert_eq!(e.aggregates.mean_vol_pref, e.runs[0].mean_vol_pref);
    assert_eq!(e.aggregates.mean_profit, e.runs[0].mean_profit);
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    let c = SimConfig {
        n_runs: 6,
        ..small(MechanismKind::Mixed)
    };
    let a = run_ensemble_with_jobs(&c, 1).unwrap();
    let b = run_ensemble_with_jobs(&c, 8).unwrap();
    assert_eq!(a, b);
}
