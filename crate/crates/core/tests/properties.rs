use ndarray::Array2;
use pointpyramid::eval::{average_precision, f1_macro, pr_curve};
use pointpyramid::neighbors::bruteforce::knn_bruteforce;
use pointpyramid::neighbors::{knn_feature, knn_spatial, Space, DEFAULT_PAIRWISE_BUDGET};
use pointpyramid::train::focal_term;
use proptest::prelude::*;

fn cloud(dims: usize, max_n: usize) -> impl Strategy<Value = Array2<f64>> {
    // Mix of continuous and coarse integer coordinates so ties show up.
    (2..max_n, any::<bool>()).prop_flat_map(move |(n, coarse)| {
        let coord = if coarse {
            (0i32..4).prop_map(f64::from).boxed()
        } else {
            (-1.0f64..1.0).boxed()
        };
        proptest::collection::vec(coord, n * dims)
            .prop_map(move |v| Array2::from_shape_vec((n, dims), v).unwrap())
    })
}

fn rows(a: &Array2<f64>) -> Vec<[f64; 3]> {
    a.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn spatial_search_matches_bruteforce(pts in cloud(3, 160), k in 1usize..12, d in 1usize..4) {
        prop_assume!(k * d < pts.nrows());
        let fast = knn_spatial(&rows(&pts), k, d).unwrap();
        let slow = knn_bruteforce(pts.view(), k, d, Space::Spatial).unwrap();
        prop_assert_eq!(fast.as_slice(), slow.as_slice());
    }

    #[test]
    fn feature_search_matches_bruteforce(pts in cloud(5, 120), k in 1usize..12) {
        prop_assume!(k < pts.nrows());
        let fast = knn_feature(pts.view(), k, DEFAULT_PAIRWISE_BUDGET).unwrap();
        let slow = knn_bruteforce(pts.view(), k, 1, Space::Feature).unwrap();
        prop_assert_eq!(fast.as_slice(), slow.as_slice());
    }

    #[test]
    fn dilated_search_is_strided_dense_search(pts in cloud(3, 160), k in 1usize..10, d in 2usize..4) {
        prop_assume!(k * d < pts.nrows());
        let p = rows(&pts);
        let dilated = knn_spatial(&p, k, d).unwrap();
        let dense = knn_spatial(&p, k * d, 1).unwrap();
        let strided = dense.strided(d);
        prop_assert_eq!(dilated.as_slice(), strided.as_slice());
    }

    #[test]
    fn neighbors_exclude_self_and_repeat_nothing(pts in cloud(3, 100), k in 1usize..8) {
        prop_assume!(k < pts.nrows());
        let idx = knn_spatial(&rows(&pts), k, 1).unwrap();
        for i in 0..pts.nrows() {
            let mut row = idx.row(i).to_vec();
            prop_assert!(!row.contains(&(i as u32)));
            row.sort_unstable();
            row.dedup();
            prop_assert_eq!(row.len(), k);
        }
    }

    #[test]
    fn focal_term_bounded_by_cross_entropy(pt in 1e-12f64..=1.0, gamma in 0.0f64..5.0) {
        let fl = focal_term(pt, gamma);
        prop_assert!(fl >= 0.0);
        prop_assert!(fl <= -pt.ln() + 1e-15);
    }

    #[test]
    fn macro_f1_in_unit_interval(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..50)) {
        let (preds, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let f = f1_macro(&preds, &truth, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f1_macro(&truth, &truth, 4).unwrap() == 1.0, (0..4).all(|c| truth.contains(&c)));
    }

    #[test]
    fn pr_curve_recall_monotone(
        items in proptest::collection::vec((0u8..6, any::<bool>()), 1..60)
    ) {
        prop_assume!(items.iter().any(|x| x.1));
        let scores: Vec<f64> = items.iter().map(|x| f64::from(x.0)).collect();
        let labels: Vec<bool> = items.iter().map(|x| x.1).collect();
        let curve = pr_curve(&scores, &labels).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].0 >= w[0].0);
        }
        prop_assert_eq!(curve.last().unwrap().0, 1.0);
        let ap = average_precision(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
    }
}
