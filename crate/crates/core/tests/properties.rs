use fafl::channel::{effective_gain, max_gain_bound, AntennaLayout, ChannelParams, ChannelRealization, Region};
use fafl::harness::{format_float, median};
use fafl::linalg::{db_to_linear, dbm_to_mw, C64};
use fafl::objective::{bound_after_t, BoundParams, SelectionVector};
use fafl::ota::{receive_and_combine, theoretical_mse, Embedding, Precoding, Round};
use fafl::oracle::numeric::box_face_minimizer;
use fafl::pdd::{box_rank_one_minimizer, gain_pair_minimizer, repair_layout};
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b))
}

fn unit(v: Vec<C64>) -> Option<Vec<C64>> {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (n > 1e-6).then(|| v.into_iter().map(|z| z / n).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gain_never_exceeds_the_ceiling(
        n in 1usize..7,
        q in prop::collection::vec(complex(), 6),
        beta in complex(),
        theta in -1.5f64..1.5,
        phi in -1.5f64..1.5,
        spread in 0.5f64..1.0,
    ) {
        let q = &q[..n];
        prop_assume!(unit(q.to_vec()).is_some() && beta.norm() > 1e-3);
        let q = unit(q.to_vec()).unwrap();
        let region = Region::square(0.4);
        let layout = AntennaLayout::staircase(n, region, 0.05, 0.05, 0.05 + 0.01 * spread);
        let params = ChannelParams { beta, theta, phi, wavelength: 0.1 };
        let ch = ChannelRealization::los(params, layout, 50.0).unwrap();
        let bound = max_gain_bound(beta, n);
        prop_assert!(effective_gain(&q, ch.h()).unwrap() <= bound * (1.0 + 1e-12));
        let aligned = unit(ch.h().to_vec()).unwrap();
        prop_assert!(effective_gain(&aligned, ch.h()).unwrap() >= 0.999 * bound);
    }

    #[test]
    fn mse_law_is_monotone(k in 1usize..30, s in 1e-4f64..1.0, g in 0.1f64..10.0, p in 0.1f64..5.0, gain in 1e-3f64..10.0) {
        let base = theoretical_mse(k, s, g, p, gain).unwrap();
        prop_assert!(theoretical_mse(k, s, g, p, gain * 1.5).unwrap() < base);
        prop_assert!(theoretical_mse(k + 1, s, g, p, gain).unwrap() > base);
        prop_assert!(theoretical_mse(k, s * 1.5, g, p, gain).unwrap() > base);
        prop_assert!((theoretical_mse(k, s, g, p, 2.0 * gain).unwrap() - base / 2.0).abs() <= 1e-12 * base);
    }

    #[test]
    fn dbm_conversion_is_exponential(a in -60.0f64..40.0, b in -30.0f64..30.0) {
        let lhs = dbm_to_mw(a + b);
        let rhs = dbm_to_mw(a) * db_to_linear(b);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
        prop_assert!((dbm_to_mw(a) - 10f64.powf(a / 10.0)).abs() <= 1e-15 * dbm_to_mw(a));
    }

    #[test]
    fn selection_counts_are_consistent(mask in prop::collection::vec(any::<bool>(), 1..12), seed in 1u64..1000) {
        let samples: Vec<f64> = (0..mask.len()).map(|i| ((seed * (i as u64 + 3)) % 400 + 100) as f64).collect();
        let sel = SelectionVector::from_mask(&mask, &samples).unwrap();
        prop_assert_eq!(sel.selected_count(), mask.iter().filter(|m| **m).count());
        prop_assert_eq!(sel.mask(), mask.clone());
        let picked: f64 = mask.iter().zip(&samples).filter(|(m, _)| **m).map(|(_, s)| s).sum();
        prop_assert!((sel.selected_samples() - picked).abs() < 1e-9);
        prop_assert!(sel.selected_samples() <= sel.total_samples());
    }

    #[test]
    fn rank_one_box_minimizer_matches_face_enumeration(
        p in prop::collection::vec(-0.5f64..1.5, 1..5),
        s_seed in prop::collection::vec(0.2f64..3.0, 5),
        h in -2.0f64..6.0,
    ) {
        let s = &s_seed[..p.len()];
        let f = |v: &[f64]| {
            let dot: f64 = v.iter().zip(s).map(|(a, b)| a * b).sum();
            v.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + (h - dot).powi(2)
        };
        let closed = box_rank_one_minimizer(&p, s, h);
        let numeric = box_face_minimizer(&f, p.len(), 0.0, 1.0);
        prop_assert!(closed.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(f(&closed) <= f(&numeric) + 1e-10, "{:?} {} vs {:?} {}", closed, f(&closed), numeric, f(&numeric));
    }

    #[test]
    fn gain_pair_is_feasible_and_beats_feasible_samples(
        w in 0.01f64..100.0,
        a in -1.0f64..3.0,
        g in complex(),
        probes in prop::collection::vec((0.0f64..2.0, -3.2f64..3.2, 0.0f64..1.0), 32),
    ) {
        let (alpha, gamma) = gain_pair_minimizer(w, a, g, 0.0);
        let obj = |al: f64, ga: C64| w * (al - a).powi(2) + (ga - g).norm_sqr();
        prop_assert!(alpha <= gamma.norm_sqr() * (1.0 + 1e-12) + 1e-15);
        let best = obj(alpha, gamma);
        for (r, ph, frac) in probes {
            let ga = C64::from_polar(r, ph);
            let al = a.min(r * r) - frac;
            prop_assert!(best <= obj(al, ga) + 1e-12 * (1.0 + best));
        }
    }

    #[test]
    fn repaired_layouts_are_feasible(xs in prop::collection::vec(-0.3f64..0.3, 4), ys in prop::collection::vec(-0.3f64..0.3, 4)) {
        let region = Region::square(0.4);
        let mut layout = AntennaLayout::staircase(4, region, 0.05, 0.05, 0.06);
        layout.x = xs;
        layout.y = ys;
        let (fixed, _) = repair_layout(&layout);
        prop_assert!(fixed.is_feasible());
    }

    #[test]
    fn power_constraint_holds_in_every_round(
        gains in prop::collection::vec((complex(), complex()), 1..6),
        grads in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 6),
        full_power in any::<bool>(),
        p_a in 0.1f64..3.0,
    ) {
        let h: Vec<Vec<C64>> = gains.iter().map(|(a, b)| vec![*a, *b]).collect();
        prop_assume!(h.iter().all(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-4));
        let k = h.len();
        let g = &grads[..k];
        prop_assume!(g.iter().all(|v| v.iter().any(|x| x.abs() > 1e-6)));
        let q = unit(h.iter().fold(vec![C64::new(0.0, 0.0); 2], |acc, v| acc.iter().zip(v).map(|(a, b)| a + b).collect())).or_else(|| unit(h[0].clone())).unwrap();
        prop_assume!(h.iter().all(|v| (q[0].conj() * v[0] + q[1].conj() * v[1]).norm() > 1e-4));
        let hr: Vec<&[C64]> = h.iter().map(|v| v.as_slice()).collect();
        let gr: Vec<&[f64]> = g.iter().map(|v| v.as_slice()).collect();
        let round = Round {
            channels: &hr,
            q: &q,
            gradients: &gr,
            weights: None,
            sigma_n2: 0.1,
            p_a,
            precoding: if full_power { Precoding::FullPower } else { Precoding::ChannelInversion },
            embedding: Embedding::Real,
        };
        let res = receive_and_combine(&round, 5).unwrap();
        prop_assert!(res.plan.power_ok());
        let diff = res.e2.iter().zip(&res.target).zip(&res.g_hat).map(|((e, t), gh)| (*e - (C64::new(*t, 0.0) - gh)).norm()).fold(0.0, f64::max);
        prop_assert!(diff == 0.0);
    }

    #[test]
    fn bound_grows_with_the_initial_gap(gap in 0.0f64..10.0, extra in 0.01f64..5.0, r in prop::collection::vec(0.0f64..0.2, 1..8)) {
        let p = BoundParams::default();
        prop_assert!(bound_after_t(&p, &r, gap + extra).unwrap() > bound_after_t(&p, &r, gap).unwrap());
    }

    #[test]
    fn csv_floats_keep_nine_digits(v in prop::num::f64::NORMAL) {
        let s = format_float(v);
        prop_assert!(!s.contains(','));
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-9 * v.abs());
    }

    #[test]
    fn median_ignores_order(mut v in prop::collection::vec(-100.0f64..100.0, 1..20), rot in 0usize..20) {
        let m = median(&v);
        let len = v.len();
        v.rotate_left(rot % len);
        prop_assert_eq!(median(&v), m);
        let below = v.iter().filter(|x| **x < m).count();
        let above = v.iter().filter(|x| **x > m).count();
        prop_assert!(below <= len / 2 && above <= len / 2);
    }
}
