use proptest::prelude::*;

use pcnn::ffnn::{Activation, Architecture, Loss, Mlp};
use pcnn::geometry::{hausdorff, PointCloud};
use pcnn::numerics::{sigmoid, Matrix, Rng};
use pcnn::partition::get_partition;
use pcnn::pcnn::{split_widths, PartLabels, PcnnModel, Routing};

fn cloud(points: Vec<(f64, f64)>) -> PointCloud {
    let rows: Vec<[f64; 2]> = points.into_iter().map(|(a, b)| [a, b]).collect();
    PointCloud::from_rows(&rows).unwrap()
}

fn points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..12)
}

fn model(seed: u64, n_parts: usize, routing: Routing) -> PcnnModel {
    let mut rng = Rng::new(seed);
    let subs = (0..n_parts)
        .map(|_| Mlp::random(&Architecture::new(vec![2, 3, 1], Activation::Tanh), &mut rng).unwrap())
        .collect();
    let clf = Mlp::random(&Architecture::new(vec![2, 4, n_parts], Activation::Tanh), &mut rng).unwrap();
    PcnnModel::new(subs, clf, 0.5, routing).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hausdorff_is_a_metric(a in points(), b in points(), c in points()) {
        let (a, b, c) = (cloud(a), cloud(b), cloud(c));
        let ab = hausdorff(&a, &b).unwrap();
        prop_assert_eq!(ab, hausdorff(&b, &a).unwrap());
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        let ac = hausdorff(&a, &c).unwrap();
        let cb = hausdorff(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn partitions_are_valid(seed in any::<u64>(), n in 3usize..60, q in 0.01..1.0f64) {
        let mut rng = Rng::new(seed);
        let x = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.next_f64()).collect()).unwrap();
        let (p, geo) = get_partition(&x, q, &mut rng).unwrap();
        let mut seen = vec![false; n];
        for part in &p.parts {
            prop_assert!(!part.is_empty());
            for &i in part {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        prop_assert!(p.len() >= 2);
        prop_assert!(p.iterations <= n);
        prop_assert_eq!(geo.len(), p.len());
    }

    #[test]
    fn argmax_routes_every_point_once(seed in any::<u64>(), n_parts in 1usize..5, x in -3.0..3.0f64, y in -3.0..3.0f64) {
        let m = model(seed, n_parts, Routing::Argmax);
        prop_assert_eq!(m.routes(&[x, y]).unwrap().len(), 1);
    }

    #[test]
    fn routings_agree_on_single_membership(seed in any::<u64>(), n_parts in 1usize..5, x in -3.0..3.0f64, y in -3.0..3.0f64) {
        let lit = model(seed, n_parts, Routing::Threshold);
        let arg = model(seed, n_parts, Routing::Argmax);
        let members = lit.memberships(&[x, y]).unwrap();
        if members.iter().filter(|&&m| m).count() == 1 {
            prop_assert_eq!(lit.predict_row(&[x, y]).unwrap(), arg.predict_row(&[x, y]).unwrap());
        }
    }

    #[test]
    fn active_parameters_never_exceed_total(seed in any::<u64>(), n_parts in 1usize..5, x in -3.0..3.0f64, y in -3.0..3.0f64) {
        for routing in [Routing::Argmax, Routing::Threshold] {
            let m = model(seed, n_parts, routing);
            prop_assert!(m.active_parameter_count(&[x, y]).unwrap() <= m.parameter_count());
        }
    }

    #[test]
    fn every_label_column_has_a_one(losses in prop::collection::vec(prop::collection::vec(0.0..5.0f64, 3), 1..20)) {
        let m = Matrix::from_rows(&losses).unwrap();
        let labels = PartLabels::from_losses(&m);
        for x in 0..labels.n_samples() {
            prop_assert!(labels.sample(x).iter().any(|&l| l));
        }
    }

    #[test]
    fn budget_split_preserves_width(w in 1usize..200, n in 1usize..20) {
        prop_assume!(n <= w);
        let total: usize = (0..n).map(|k| split_widths(&[w], n, k)[0]).sum();
        prop_assert_eq!(total, w);
    }

    #[test]
    fn sigmoid_stays_in_unit_interval(z in -800.0..800.0f64) {
        let s = sigmoid(z);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s + sigmoid(-z) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_values_are_nonnegative(p in prop::collection::vec(-5.0..5.0f64, 1..10), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let t: Vec<f64> = p.iter().map(|_| f64::from(rng.next_f64() < 0.5)).collect();
        let pm = Matrix::column(&p).unwrap();
        let tm = Matrix::column(&t).unwrap();
        for loss in [Loss::Mae, Loss::Mse, Loss::BinaryCrossEntropy] {
            prop_assert!(pcnn::ffnn::loss_value(&pm, &tm, loss) >= 0.0);
        }
    }
}
