use std::collections::BTreeSet;
use std::time::Duration;

use bitstar::bench::{aggregate, resample_series, series_events, TrialRecord};
use bitstar::nn::PointIndex;
use bitstar::oracle::rgg_shortest_path;
use bitstar::sampling::{sample_uniform, ProlateHyperspheroid, RngStream};
use bitstar::space::euclidean_distance;
use bitstar::{Aabb, CostEvent, StateVec, World};
use proptest::prelude::*;

fn sv(c: &[f64]) -> StateVec {
    StateVec::from_slice(c).unwrap()
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn boxes(n: usize, max: usize) -> impl Strategy<Value = Vec<Aabb>> {
    prop::collection::vec((point(n), prop::collection::vec(0.05f64..0.6, n)), 0..max).prop_map(|raw| {
        raw.into_iter()
            .map(|(lo, w)| {
                let hi: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| (l + w).min(1.0)).collect();
                Aabb::new(lo, hi).unwrap()
            })
            .collect()
    })
}

/// Length of the part of segment `a`-`b` inside the closed box, by the slab method.
fn overlap_length(a: &[f64], b: &[f64], o: &Aabb) -> f64 {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..a.len() {
        let d = b[i] - a[i];
        if d == 0.0 {
            if a[i] < o.lo[i] || a[i] > o.hi[i] {
                return 0.0;
            }
            continue;
        }
        let (u, v) = ((o.lo[i] - a[i]) / d, (o.hi[i] - a[i]) / d);
        t0 = t0.max(u.min(v));
        t1 = t1.min(u.max(v));
    }
    let len: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    (t1 - t0).max(0.0) * len
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn motion_checks_are_symmetric(obs in boxes(2, 6), a in point(2), b in point(2), step in 0.001f64..0.3) {
        let w = World::new(Aabb::centered_cube(2, 1.0), obs, sv(&[-1.0, -1.0]), sv(&[1.0, 1.0]));
        prop_assume!(w.is_ok());
        let w = w.unwrap();
        let (a, b) = (sv(&a), sv(&b));
        prop_assert_eq!(w.is_motion_free(&a, &b, step).unwrap(), w.is_motion_free(&b, &a, step).unwrap());
    }

    #[test]
    fn finer_steps_keep_detecting_thick_overlaps(
        lo in prop::collection::vec(-0.9f64..0.3, 3), w in prop::collection::vec(0.05f64..0.6, 3),
        frac in point(3), dir in point(3), step in 0.005f64..0.5, shrink in 0.01f64..1.0
    ) {
        let hi: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
        let obs = vec![Aabb::new(lo, hi).unwrap()];
        let o = &obs[0];
        // a segment through an interior point of the box, clipped to the bounds
        let m: Vec<f64> = (0..3).map(|i| o.lo[i] + (frac[i] + 1.0) / 2.0 * (o.hi[i] - o.lo[i])).collect();
        let a: Vec<f64> = (0..3).map(|i| (m[i] - dir[i]).clamp(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..3).map(|i| (m[i] + dir[i]).clamp(-1.0, 1.0)).collect();
        prop_assume!(overlap_length(&a, &b, o) >= step);
        let w = World::new(Aabb::centered_cube(3, 1.0), obs.clone(), sv(&[-1.0, -1.0, -1.0]), sv(&[1.0, 1.0, 1.0])).unwrap();
        let (a, b) = (sv(&a), sv(&b));
        prop_assert!(!w.is_motion_free(&a, &b, step).unwrap());
        prop_assert!(!w.is_motion_free(&a, &b, step * shrink).unwrap());
    }

    #[test]
    fn distance_is_a_metric(a in point(5), b in point(5), c in point(5)) {
        let (a, b, c) = (sv(&a), sv(&b), sv(&c));
        let d = |x: &StateVec, y: &StateVec| euclidean_distance(x, y).unwrap();
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        if a != b {
            prop_assert!(d(&a, &b) > 0.0);
        }
    }

    #[test]
    fn near_and_nearest_match_a_scan(
        pts in prop::collection::vec(point(3), 1..200), q in point(3), r in 0.0f64..1.5
    ) {
        let mut idx = PointIndex::new(3);
        for (i, p) in pts.iter().enumerate() {
            idx.insert(p, i).unwrap();
        }
        let dist = |p: &[f64]| euclidean_distance(&sv(p), &sv(&q)).unwrap();
        let want: BTreeSet<usize> = (0..pts.len()).filter(|&i| dist(&pts[i]) <= r).collect();
        let got: BTreeSet<usize> = idx.near(&q, r).unwrap().into_iter().collect();
        prop_assert_eq!(&got, &want);
        let wider: BTreeSet<usize> = idx.near(&q, r + 0.25).unwrap().into_iter().collect();
        prop_assert!(got.is_subset(&wider));
        let best = (0..pts.len()).min_by(|&i, &j| dist(&pts[i]).total_cmp(&dist(&pts[j])).then(i.cmp(&j))).unwrap();
        prop_assert_eq!(idx.nearest(&q).unwrap(), best);
    }

    #[test]
    fn informed_samples_stay_inside(
        a in point(4), b in point(4), slack in 1.0f64..3.0, seed in any::<u64>()
    ) {
        let (a, b) = (sv(&a), sv(&b));
        let c_min = euclidean_distance(&a, &b).unwrap();
        prop_assume!(c_min > 1e-3);
        let c_best = c_min * slack;
        let mut phs = ProlateHyperspheroid::new(a.clone(), b.clone(), c_best).unwrap();
        let bounds = Aabb::centered_cube(4, 10.0);
        let mut rng = RngStream::new(seed);
        for _ in 0..200 {
            let x = phs.sample(&bounds, &mut rng);
            let f = euclidean_distance(&x, &a).unwrap() + euclidean_distance(&x, &b).unwrap();
            prop_assert!(f <= c_best + 1e-9);
        }
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>()) {
        let bounds = Aabb::centered_cube(3, 1.0);
        let mut r1 = RngStream::new(seed);
        let mut r2 = RngStream::new(seed);
        for _ in 0..20 {
            prop_assert_eq!(sample_uniform(&bounds, &mut r1), sample_uniform(&bounds, &mut r2));
        }
    }

    #[test]
    fn oracle_ignores_state_order(
        pts in prop::collection::vec(point(2), 0..40), obs in boxes(2, 4), perm_seed in any::<u64>()
    ) {
        let w = World::new(Aabb::centered_cube(2, 1.0), obs, sv(&[0.0, 0.0]), sv(&[0.9, 0.9]));
        prop_assume!(w.is_ok());
        let w = w.unwrap();
        let mut states = vec![w.start().clone()];
        states.extend(pts.iter().map(|p| sv(p)).filter(|p| w.is_state_free(p).unwrap()));
        states.push(w.goal().clone());
        let (c, path) = rgg_shortest_path(&states, 0.5, &w, 0, states.len() - 1);
        prop_assert!(c >= euclidean_distance(w.start(), w.goal()).unwrap() - 1e-12);
        if c.is_finite() {
            prop_assert_eq!(path.first(), Some(&0));
            prop_assert_eq!(path.last(), Some(&(states.len() - 1)));
        }

        // reverse the interior, then rotate it by a seeded amount
        let mut interior: Vec<StateVec> = states[1..states.len() - 1].to_vec();
        interior.reverse();
        if !interior.is_empty() {
            let k = (perm_seed % interior.len() as u64) as usize;
            interior.rotate_left(k);
        }
        let mut shuffled = vec![w.start().clone()];
        shuffled.extend(interior);
        shuffled.push(w.goal().clone());
        let (c2, _) = rgg_shortest_path(&shuffled, 0.5, &w, 0, shuffled.len() - 1);
        prop_assert!((c.is_infinite() && c2.is_infinite()) || (c - c2).abs() <= 1e-12);
    }

    #[test]
    fn resampling_is_idempotent(
        steps in prop::collection::vec((1u64..50, 0.01f64..1.0), 0..12), horizon in 1u64..400
    ) {
        let mut t = 0;
        let mut cost = 10.0;
        let events: Vec<CostEvent> = steps
            .into_iter()
            .map(|(dt, drop)| {
                t += dt;
                cost -= drop;
                CostEvent { elapsed: Duration::from_millis(t), cost }
            })
            .collect();
        let ms = Duration::from_millis(1);
        let h = Duration::from_millis(horizon);
        let once = resample_series(&events, ms, h);
        let twice = resample_series(&series_events(&once, ms), ms, h);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn aggregation_ignores_record_order(
        costs in prop::collection::vec(prop::option::of((1u64..30, 1.0f64..3.0)), 2..12), rot in 0usize..12
    ) {
        let records: Vec<TrialRecord> = costs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let events: Vec<CostEvent> =
                    c.iter().map(|&(ms, cost)| CostEvent { elapsed: Duration::from_millis(ms), cost }).collect();
                TrialRecord {
                    planner: if i % 2 == 0 { "a".into() } else { "b".into() },
                    world_id: "w".into(),
                    seed: i as u64,
                    success: !events.is_empty(),
                    events,
                    wall_time: Duration::ZERO,
                    error: None,
                }
            })
            .collect();
        let ms = Duration::from_millis(1);
        let h = Duration::from_millis(40);
        let mut moved = records.clone();
        moved.rotate_left(rot % records.len());
        moved.reverse();
        prop_assert_eq!(aggregate(&records, ms, h), aggregate(&moved, ms, h));

        for stats in aggregate(&records, ms, h) {
            let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.planner == stats.planner).collect();
            let solved = mine.iter().filter(|r| r.success).count();
            prop_assert_eq!(*stats.success_fraction.last().unwrap(), solved as f64 / mine.len() as f64);
            prop_assert!(stats.success_fraction.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
