//! Reference computations used by the oracle tests and the acceptance report.

use fogrelay::agent::QTable;
use fogrelay::channel::{outage, ChannelParams, LinkGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIXTURE: &str = include_str!("../data/outage_oracle.csv");

pub fn max_outage_rel_err() -> (f64, usize) {
    let p = ChannelParams::default();
    let mut worst = 0.0f64;
    let mut n = 0;
    for line in FIXTURE.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let o = outage(v[0], v[1], LinkGeometry::new(v[2], v[3]), &p).unwrap();
        worst = worst.max(((o.raw - v[4]) / v[4]).abs());
        n += 1;
    }
    (worst, n)
}

/// P[s][a] = next-state distribution; R[s][a] = reward.
const P: [[[f64; 3]; 2]; 3] = [
    [[0.7, 0.2, 0.1], [0.1, 0.6, 0.3]],
    [[0.3, 0.3, 0.4], [0.0, 0.2, 0.8]],
    [[0.5, 0.0, 0.5], [0.9, 0.1, 0.0]],
];
const R: [[f64; 2]; 3] = [[0.0, 0.2], [0.5, 0.1], [1.0, 0.0]];
const GAMMA: f64 = 0.9;

fn value_iteration() -> [[f64; 2]; 3] {
    let mut q = [[0.0f64; 2]; 3];
    for _ in 0..5_000 {
        let v: Vec<f64> = q.iter().map(|row| row[0].max(row[1])).collect();
        let mut next = [[0.0; 2]; 3];
        for s in 0..3 {
            for a in 0..2 {
                next[s][a] = R[s][a] + GAMMA * (0..3).map(|t| P[s][a][t] * v[t]).sum::<f64>();
            }
        }
        q = next;
    }
    q
}

pub fn toy_mdp_distance(steps: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = QTable::new(3, 2, 0.1, GAMMA);
    let mut s = 0usize;
    for _ in 0..steps {
        let a = q.select(s, 0.2, &mut rng);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = 2;
        for (t, &p) in P[s][a].iter().enumerate() {
            acc += p;
            if u < acc {
                next = t;
                break;
            }
        }
        q.update(s, a, R[s][a], next);
        s = next;
    }
    let star = value_iteration();
    let mut worst = 0.0f64;
    for (s, row) in star.iter().enumerate() {
        for (a, &v) in row.iter().enumerate() {
            worst = worst.max((q.get(s, a) - v).abs());
        }
    }
    worst
}

