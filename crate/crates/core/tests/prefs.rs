use gaitpref::prefs::{
    bce_loss, bce_loss_grad, bt_probability, expand_subsegments, fit, ranking_to_pairs, Comparison,
    Label, PreferenceDataset, SegmentRef,
};
use gaitpref::{
    rollout, trajectory_return, FitConfig, Gait, RewardWeights, RolloutConfig, TaskVector,
    Trajectory,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn trajectories(n: usize, steps: usize, seed: u64) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = RolloutConfig {
        steps,
        ..RolloutConfig::default()
    };
    (0..n)
        .map(|i| {
            let omega = TaskVector::with_gait(
                rng.random_range(0.0..1.5),
                rng.random_range(-0.4..0.4),
                Gait::from_index(i % 3).unwrap(),
            );
            rollout(&omega, &cfg, seed * 100 + i as u64).unwrap()
        })
        .collect()
}

fn ids(t: &[Trajectory]) -> Vec<String> {
    t.iter().map(|x| x.id.clone()).collect()
}

#[test]
fn pair_counts_are_binomial() {
    for n in 2..=9 {
        let items: Vec<usize> = (0..n).collect();
        let pairs = ranking_to_pairs(&items).unwrap();
        assert_eq!(pairs.len(), binomial(n, 2));
        assert!(pairs.iter().all(|(a, b)| a < b));
    }
    assert!(ranking_to_pairs(&(0..10).collect::<Vec<_>>()).is_err());
}

#[test]
fn uncapped_expansion_counts() {
    let t = trajectories(4, 100, 1);
    let ds = expand_subsegments(&ranking_to_pairs(&ids(&t)).unwrap(), &t, 20, None, 0).unwrap();
    assert_eq!(ds.len(), 38_400);
    for n in 2..=9 {
        let t = trajectories(n, 12, n as u64);
        let ds = expand_subsegments(&ranking_to_pairs(&ids(&t)).unwrap(), &t, 5, None, 0).unwrap();
        assert_eq!(ds.len(), (12 - 5) * (12 - 5) * binomial(n, 2));
        let max_start = ds
            .comparisons()
            .iter()
            .map(|c| c.first.start.max(c.second.start))
            .max();
        assert_eq!(max_start, Some(12 - 5 - 1));
    }
}

#[test]
fn capped_expansion_keeps_exactly_cap() {
    let t = trajectories(4, 100, 1);
    let pairs = ranking_to_pairs(&ids(&t)).unwrap();
    let ds = expand_subsegments(&pairs, &t, 20, Some(1000), 5).unwrap();
    assert_eq!(ds.len(), 1000);
    for c in ds.comparisons() {
        assert_eq!(ds.segment(&c.first).unwrap().len(), 20);
        assert_eq!(ds.segment(&c.second).unwrap().len(), 20);
        assert_ne!(c.first.trajectory_id, c.second.trajectory_id);
        assert_eq!(c.label, Label::First);
    }
}

#[test]
fn logistic_reference_value() {
    let want = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((bt_probability(1.0, 0.0) - want).abs() < 1e-15);
    assert!((bt_probability(1.0, 0.0) - 0.7310585786).abs() < 1e-9);
    assert_eq!(bt_probability(3.0, 3.0), 0.5);
    for (a, b) in [(1e4, -1e4), (-1e4, 1e4), (0.0, 700.0)] {
        let p = bt_probability(a, b);
        assert!(p.is_finite() && (0.0..=1.0).contains(&p));
    }
}

// Independent oracle: mean NLL written from the textbook form.
fn oracle_loss(ds: &PreferenceDataset, omega: &TaskVector, w: &RewardWeights) -> f64 {
    let mut total = 0.0;
    for c in ds.comparisons() {
        let r1 = trajectory_return(ds.segment(&c.first).unwrap(), omega, w).unwrap();
        let r2 = trajectory_return(ds.segment(&c.second).unwrap(), omega, w).unwrap();
        let p = 1.0 / (1.0 + (r2 - r1).exp());
        let y1 = if c.label == Label::First { 1.0 } else { 0.0 };
        total -= y1 * p.ln() + (1.0 - y1) * (1.0 - p).ln();
    }
    total / ds.len() as f64
}

fn random_dataset(seed: u64) -> (PreferenceDataset, TaskVector, RewardWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = trajectories(3, 16, seed + 1000);
    let mut comparisons = Vec::new();
    for _ in 0..rng.random_range(5..40) {
        let a = rng.random_range(0..3);
        let b = (a + rng.random_range(1..3)) % 3;
        comparisons.push(Comparison {
            first: SegmentRef {
                trajectory_id: t[a].id.clone(),
                start: rng.random_range(0..12),
                length: 4,
            },
            second: SegmentRef {
                trajectory_id: t[b].id.clone(),
                start: rng.random_range(0..12),
                length: 4,
            },
            label: if rng.random() {
                Label::First
            } else {
                Label::Second
            },
        });
    }
    let omega = TaskVector::new(
        rng.random_range(0.0..1.5),
        rng.random_range(-0.4..0.4),
        [rng.random(), rng.random(), rng.random()],
    );
    let w = RewardWeights::new(std::array::from_fn(|_| rng.random_range(0.2..2.0))).unwrap();
    (PreferenceDataset::new(comparisons, t).unwrap(), omega, w)
}

#[test]
fn loss_matches_textbook_oracle() {
    for seed in 0..20 {
        let (ds, omega, w) = random_dataset(seed);
        let got = bce_loss(&ds, &omega, &w).unwrap();
        let want = oracle_loss(&ds, &omega, &w);
        assert!(
            (got - want).abs() < 1e-12 * want.max(1.0),
            "{got} vs {want}"
        );
    }
}

#[test]
fn loss_gradient_matches_central_differences() {
    let h = 1e-5;
    for seed in 0..20 {
        let (ds, omega, w) = random_dataset(seed);
        let analytic = bce_loss_grad(&ds, &omega, &w).unwrap();
        for i in 0..5 {
            let mut hi = omega.to_array();
            let mut lo = omega.to_array();
            hi[i] += h;
            lo[i] -= h;
            let fd = (oracle_loss(&ds, &TaskVector::from_array(hi), &w)
                - oracle_loss(&ds, &TaskVector::from_array(lo), &w))
                / (2.0 * h);
            let err = (analytic[i] - fd).abs();
            let scale = analytic[i].abs().max(fd.abs());
            assert!(
                err < 1e-9 || err / scale < 1e-5,
                "seed {seed} component {i}: analytic {} fd {fd}",
                analytic[i]
            );
        }
    }
}

#[test]
fn equal_returns_give_ln2() {
    let t = trajectories(2, 10, 3);
    let ds = expand_subsegments(&[(t[0].id.clone(), t[1].id.clone())], &t, 3, None, 0).unwrap();
    let w = RewardWeights::default();
    // zero tracking weight is not allowed, so compare a trajectory with a copy of itself
    let mut twin = t[0].clone();
    twin.id = "twin".into();
    let pairs = [(t[0].id.clone(), twin.id.clone())];
    let both = vec![t[0].clone(), twin];
    let same = expand_subsegments(&pairs, &both, 3, None, 0).unwrap();
    let mut tied = Vec::new();
    for c in same
        .comparisons()
        .iter()
        .filter(|c| c.first.start == c.second.start)
    {
        tied.push(c.clone());
        tied.push(Comparison {
            label: Label::Second,
            ..c.clone()
        });
    }
    let tied = PreferenceDataset::new(tied, both).unwrap();
    let omega = TaskVector::with_gait(0.4, 0.1, Gait::Pace);
    assert!((bce_loss(&tied, &omega, &w).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    assert!(bce_loss_grad(&tied, &omega, &w)
        .unwrap()
        .iter()
        .all(|g| g.abs() < 1e-12));
    assert!(bce_loss(&ds, &omega, &w).unwrap() >= 0.0);
}

#[test]
fn label_symmetric_gradient_is_logistic_weighted_return_gap() {
    // with each comparison under both labels the gradient is mean over pairs of (2p - 1)∇(R1 - R2) / 2
    let (ds, omega, w) = random_dataset(77);
    let mut doubled = Vec::new();
    for c in ds.comparisons() {
        doubled.push(Comparison {
            label: Label::First,
            ..c.clone()
        });
        doubled.push(Comparison {
            label: Label::Second,
            ..c.clone()
        });
    }
    let sym =
        PreferenceDataset::new(doubled, ds.trajectories().values().cloned().collect()).unwrap();
    let got = bce_loss_grad(&sym, &omega, &w).unwrap();
    let h = 1e-6;
    let mut want = [0.0; 5];
    for c in ds.comparisons() {
        let s1 = ds.segment(&c.first).unwrap();
        let s2 = ds.segment(&c.second).unwrap();
        let d = |o: &TaskVector| {
            trajectory_return(s1, o, &w).unwrap() - trajectory_return(s2, o, &w).unwrap()
        };
        let p = 1.0 / (1.0 + (-d(&omega)).exp());
        for i in 0..5 {
            let mut hi = omega.to_array();
            let mut lo = omega.to_array();
            hi[i] += h;
            lo[i] -= h;
            let dd = (d(&TaskVector::from_array(hi)) - d(&TaskVector::from_array(lo))) / (2.0 * h);
            want[i] += (2.0 * p - 1.0) * dd / 2.0;
        }
    }
    for i in 0..5 {
        want[i] /= ds.len() as f64;
        assert!((got[i] - want[i]).abs() < 1e-6 * want[i].abs().max(1.0));
    }
}

#[test]
fn fit_is_deterministic_and_never_worse_than_init() {
    for seed in 0..5 {
        let (ds, omega, w) = random_dataset(seed);
        let cfg = FitConfig {
            init: omega,
            iterations: 50,
            ..FitConfig::default()
        };
        let a = fit(&ds, &w, &cfg).unwrap();
        let b = fit(&ds, &w, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.len(), 51);
        assert!(a.loss <= a.trace[0]);
        assert_eq!(
            a.loss,
            a.trace.iter().cloned().fold(f64::INFINITY, f64::min)
        );
        assert!(a.omega.in_ranges(&cfg.ranges));
    }
}

proptest! {
    #[test]
    fn complement_identity(a in -1e4..1e4f64, b in -1e4..1e4f64) {
        prop_assert!((bt_probability(a, b) + bt_probability(b, a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_by_equal_length_constant(a in -50.0..50.0f64, b in -50.0..50.0f64, c in -10.0..10.0f64) {
        let k = 20.0;
        prop_assert!((bt_probability(a + k * c, b + k * c) - bt_probability(a, b)).abs() < 1e-12);
    }

    #[test]
    fn swapping_sides_and_label_keeps_loss(seed in 0u64..200) {
        let (ds, omega, w) = random_dataset(seed);
        let swapped: Vec<Comparison> = ds.comparisons().iter().map(|c| c.swapped()).collect();
        let sw = PreferenceDataset::new(swapped, ds.trajectories().values().cloned().collect()).unwrap();
        let a = bce_loss(&ds, &omega, &w).unwrap();
        let b = bce_loss(&sw, &omega, &w).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}
