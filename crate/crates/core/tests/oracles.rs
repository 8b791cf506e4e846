//! Outage values against a 60-digit reference, Q-learning against value
//! iteration, and hand-computed updates.

mod common;

use common::oracle::{max_outage_rel_err, toy_mdp_distance};
use fogrelay::agent::QTable;
use fogrelay::channel::{compute_psi, outage, ChannelParams, LinkGeometry};

#[test]
fn outage_matches_reference() {
    let (err, n) = max_outage_rel_err();
    assert_eq!(n, 10_000);
    assert!(err <= 1e-12, "max relative error {err:e}");
}

#[test]
fn pinned_values() {
    let p = ChannelParams::default();
    let psi = compute_psi(0.3, 20.0, &p).unwrap();
    assert!((psi - 0.073_029_674_334_022_15).abs() <= 1e-15);
    let g = LinkGeometry::new(20.0, 20.0);
    let o = outage(0.1, 0.3, g, &p).unwrap();
    assert!((o.raw - 0.043_343_105_272_159_4).abs() / 0.0433 <= 1e-12, "{}", o.raw);
    let weak = outage(0.001, 0.3, g, &p).unwrap();
    assert!((weak.raw - 0.803_739_117_871_171).abs() <= 1e-12, "{}", weak.raw);
}

#[test]
fn q_learning_reaches_value_iteration() {
    let d = toy_mdp_distance(1_000_000, 1);
    assert!(d <= 1.0, "L-inf distance {d}");
}

#[test]
fn hand_checked_updates() {
    let mut q = QTable::new(2, 2, 0.1, 0.9);
    assert_eq!(q.update(0, 0, 0.0, 1), 0.0);
    assert!(q.values().iter().all(|&v| v == 0.0));
    assert_eq!(q.update(0, 0, 100.0, 1), 10.0);
    let mut q = QTable::new(2, 2, 0.1, 0.9);
    q.set(0, 0, 10.0);
    q.set(1, 1, 10.0);
    assert_eq!(q.update(0, 0, 0.0, 1), 9.9);
}
