//! Property tests for smoothing, corrections, CKA and the pretraining losses.

use proptest::prelude::*;
use surrogate_core::adapt::{CorrectionParams, FineTuneContext, FineTuneConfig};
use surrogate_core::data::PreparedSample;
use surrogate_core::eval::cka_linear;
use surrogate_core::hpograph::{argmin_finite, lattice_distance, neighborhood, smooth, DimKind, Lattice};
use surrogate_core::linalg::{mean, Mat};
use surrogate_core::masking::random_mask;
use surrogate_core::model::{ModelConfig, SurrogateModel};
use surrogate_core::pretrain::{loss_combined, loss_masked, loss_pred, PretrainConfig};

/// All-pairs distances straight from the definition.
fn oracle_distance(shape: &[usize], kinds: &[DimKind], i: usize, j: usize) -> usize {
    let (mut a, mut b) = (i, j);
    let mut d = 0;
    for (&n, kind) in shape.iter().zip(kinds).rev() {
        let (la, lb) = (a % n, b % n);
        d += match kind {
            DimKind::Ordinal => la.abs_diff(lb),
            DimKind::Categorical => usize::from(la != lb),
        };
        a /= n;
        b /= n;
    }
    d
}

fn oracle_smooth(shape: &[usize], kinds: &[DimKind], v: &[f64], k: usize) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let vals: Vec<f64> = (0..v.len())
                .filter(|&j| oracle_distance(shape, kinds, i, j) <= k)
                .map(|j| v[j])
                .filter(|x| x.is_finite())
                .collect();
            match vals.first() {
                None => f64::INFINITY,
                // same centered summation as the library, in ascending index order
                Some(&f) => f + vals[1..].iter().map(|x| x - f).sum::<f64>() / vals.len() as f64,
            }
        })
        .collect()
}

fn grid() -> impl Strategy<Value = (Vec<usize>, Vec<DimKind>)> {
    prop::collection::vec((1usize..=5, any::<bool>()), 1..=4).prop_map(|dims| {
        let shape = dims.iter().map(|d| d.0).collect();
        let kinds = dims.iter().map(|d| if d.1 { DimKind::Categorical } else { DimKind::Ordinal }).collect();
        (shape, kinds)
    })
}

fn landscape(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![9 => 0.0f64..10.0, 1 => Just(f64::INFINITY)], len)
}

fn grid_and_values() -> impl Strategy<Value = (Vec<usize>, Vec<DimKind>, Vec<f64>)> {
    grid().prop_flat_map(|(s, k)| {
        let n = s.iter().product();
        (Just(s), Just(k), landscape(n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn graph_matches_all_pairs_oracle((shape, kinds, v) in grid_and_values(), k in 0usize..=5) {
        let lat = Lattice::new(shape.clone(), kinds.clone()).unwrap();
        for i in 0..lat.len() {
            let expected: Vec<usize> = (0..lat.len()).filter(|&j| oracle_distance(&shape, &kinds, i, j) <= k).collect();
            prop_assert_eq!(neighborhood(&lat, i, k).unwrap(), expected);
            for j in 0..lat.len() {
                prop_assert_eq!(lattice_distance(&lat, i, j).unwrap(), oracle_distance(&shape, &kinds, i, j));
            }
        }
        let s = smooth(&lat, &v, k).unwrap();
        let o = if k == 0 { v.clone() } else { oracle_smooth(&shape, &kinds, &v, k) };
        prop_assert_eq!(s, o);
    }

    #[test]
    fn smoothing_is_a_convex_combination((shape, kinds, v) in grid_and_values(), k in 0usize..=5) {
        let lat = Lattice::new(shape, kinds).unwrap();
        let s = smooth(&lat, &v, k).unwrap();
        let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        prop_assume!(!finite.is_empty());
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for x in s.iter().filter(|x| x.is_finite()) {
            prop_assert!(*x >= lo - 1e-12 && *x <= hi + 1e-12);
        }
        if k == 0 {
            prop_assert_eq!(s, v);
        }
    }

    #[test]
    fn smoothing_is_affine_equivariant((shape, kinds, v) in grid_and_values(), k in 0usize..=5,
                                        a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let lat = Lattice::new(shape, kinds).unwrap();
        let s = smooth(&lat, &v, k).unwrap();
        let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        let t = smooth(&lat, &w, k).unwrap();
        for (x, y) in s.iter().zip(&t) {
            if x.is_finite() {
                prop_assert!((a * x + b - y).abs() <= 1e-9 * (1.0 + y.abs()));
            } else {
                prop_assert!(y.is_infinite());
            }
        }
        // selection is unchanged unless the top two are within rounding
        if let Some(i) = argmin_finite(&s) {
            let second = s.iter().enumerate().filter(|&(j, x)| j != i && x.is_finite()).map(|(_, x)| *x).fold(f64::INFINITY, f64::min);
            if second - s[i] > 1e-9 {
                prop_assert_eq!(argmin_finite(&t), Some(i));
            }
        }
    }

    #[test]
    fn permuting_dimensions_permutes_smoothing((shape, kinds, v) in grid_and_values(), k in 0usize..=5, rot in 0usize..4) {
        let nd = shape.len();
        let perm: Vec<usize> = (0..nd).map(|d| (d + rot) % nd).collect();
        let lat = Lattice::new(shape.clone(), kinds.clone()).unwrap();
        let plat = Lattice::new(perm.iter().map(|&d| shape[d]).collect(), perm.iter().map(|&d| kinds[d]).collect()).unwrap();
        // config i of the original grid sits at `map[i]` in the permuted grid
        let map: Vec<usize> = (0..lat.len())
            .map(|i| {
                let idx = lat.multi_index(i).unwrap();
                plat.flat_index(&perm.iter().map(|&d| idx[d]).collect::<Vec<_>>()).unwrap()
            })
            .collect();
        let mut pv = vec![0.0; v.len()];
        for (i, &m) in map.iter().enumerate() {
            pv[m] = v[i];
        }
        let s = smooth(&lat, &v, k).unwrap();
        let ps = smooth(&plat, &pv, k).unwrap();
        for i in 0..v.len() {
            let (x, y) = (s[i], ps[map[i]]);
            prop_assert!(x == y || (x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
        if let Some(i) = argmin_finite(&s) {
            let second = s.iter().enumerate().filter(|&(j, x)| j != i && x.is_finite()).map(|(_, x)| *x).fold(f64::INFINITY, f64::min);
            if second - s[i] > 1e-9 {
                prop_assert_eq!(argmin_finite(&ps), Some(map[i]));
            }
        }
    }
}

fn pred_target_sets() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (2usize..12, 1usize..6).prop_flat_map(|(n, d)| {
        let rows = prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), n);
        (rows.clone(), rows)
    })
}

fn column(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

fn std_pop(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn corrections_meet_their_identities((preds, targets) in pred_target_sets(), with_bias in any::<bool>()) {
        let d = preds[0].len();
        prop_assume!((0..d).all(|k| std_pop(&column(&preds, k)) > 1e-6));
        let corrected = |c: &CorrectionParams| -> Vec<Vec<f64>> {
            preds.iter().map(|p| { let mut y = p.clone(); c.apply(&mut y); y }).collect()
        };
        let bias = CorrectionParams::fit(&preds, &targets, true, false).unwrap();
        let out = corrected(&bias);
        for k in 0..d {
            let resid: Vec<f64> = out.iter().zip(&targets).map(|(y, t)| y[k] - t[k]).collect();
            prop_assert!(mean(&resid).abs() < 1e-9);
        }
        let var = CorrectionParams::fit(&preds, &targets, with_bias, true).unwrap();
        let out = corrected(&var);
        for k in 0..d {
            prop_assert!((std_pop(&column(&out, k)) - std_pop(&column(&targets, k))).abs() < 1e-6);
        }
    }

    #[test]
    fn cka_is_symmetric_and_invariant(n in 3usize..30, p in 1usize..5, q in 1usize..5, seed in any::<u64>(),
                                      scale in 0.01f64..100.0, angle in 0.0f64..6.3) {
        let mut rng = surrogate_core::seed::rng(seed);
        use rand::Rng;
        let x = Mat::from_vec(n, p, (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y = Mat::from_vec(n, q, (0..n * q).map(|_| rng.random_range(-1.0..1.0)).collect());
        let xy = cka_linear(&x, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&xy));
        prop_assert!((xy - cka_linear(&y, &x).unwrap()).abs() < 1e-12);
        prop_assert!((cka_linear(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        // isotropic scaling and a rotation in the plane of the first two columns
        let mut z = x.clone();
        for r in 0..n {
            let row = z.row_mut(r);
            if p >= 2 {
                let (a, b) = (row[0], row[1]);
                row[0] = angle.cos() * a - angle.sin() * b;
                row[1] = angle.sin() * a + angle.cos() * b;
            }
            row.iter_mut().for_each(|v| *v *= scale);
        }
        prop_assert!((cka_linear(&z, &y).unwrap() - xy).abs() < 1e-9);
    }

    #[test]
    fn pretraining_losses_are_non_negative_and_linear(seed in any::<u64>(), rate in 0.1f64..0.9, alpha in 0.0f64..1.0) {
        let cfg = ModelConfig::micro();
        let model = SurrogateModel::init(cfg, seed % 1000).unwrap();
        let mut rng = surrogate_core::seed::rng(seed);
        use rand::Rng;
        let sample = PreparedSample {
            x: vec![rng.random(), rng.random()],
            o: vec![rng.random(), rng.random()],
            img: (0..16).map(|_| rng.random_range(0.5..1.5)).collect(),
        };
        let pc = PretrainConfig { mask_rate: rate, ..Default::default() };
        let mask = random_mask(cfg.layout, rate, seed).unwrap();
        let pred = model.forward(&sample, &surrogate_core::masking::forward_mask(cfg.layout)).unwrap();
        let lp = loss_pred(&pred, &sample, &cfg, 1.0, 0.7).unwrap().0;
        prop_assert!(lp >= 0.0);
        if !mask.masked().is_empty() {
            let pm = model.forward(&sample, &mask).unwrap();
            prop_assert!(loss_masked(&pm, &sample, &mask, &cfg).unwrap().0 >= 0.0);
        }
        let l0 = loss_combined(&model, &sample, 0.0, &pc, 0.7, seed);
        let l1 = loss_combined(&model, &sample, 1.0, &pc, 0.7, seed).unwrap();
        match l0 {
            Ok(l0) => {
                let la = loss_combined(&model, &sample, alpha, &pc, 0.7, seed).unwrap();
                prop_assert!((la - (alpha * l1 + (1.0 - alpha) * l0)).abs() <= 1e-12 * (1.0 + la.abs()));
            }
            Err(e) => prop_assert_eq!(e, surrogate_core::Error::EmptyMask),
        }
    }

    #[test]
    fn nested_validation_ignores_sample_order(seed in any::<u64>(), rot in 1usize..5) {
        let model = SurrogateModel::init(ModelConfig::micro(), seed % 100).unwrap();
        let mut rng = surrogate_core::seed::rng(seed);
        use rand::Rng;
        let samples: Vec<PreparedSample> = (0..5)
            .map(|_| PreparedSample {
                x: vec![rng.random(), rng.random()],
                o: vec![rng.random(), rng.random()],
                img: (0..16).map(|_| rng.random_range(0.5..1.5)).collect(),
            })
            .collect();
        let cfg = FineTuneConfig { lr: 0.05, epochs: 5, bias_correct: true, ..Default::default() };
        let ctx = FineTuneContext::new(&model, &samples).unwrap();
        let a = ctx.nested_loo(&[0, 1, 2, 3, 4], &cfg).unwrap();
        let order: Vec<usize> = (0..5).map(|i| (i + rot) % 5).collect();
        let b = ctx.nested_loo(&order, &cfg).unwrap();
        prop_assert!((a.v - b.v).abs() < 1e-12);
    }
}
