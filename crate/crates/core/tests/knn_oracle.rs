mod common;

use common::brute_force_knn;
use pdcam::audio::Label;
use pdcam::knn::knn_classify;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_brute_force_up_to_200_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..300 {
        let n = rng.gen_range(1..=200);
        let dim = rng.gen_range(1..=4);
        // coarse grid so exact distance ties occur
        let grid = case % 2 == 0;
        let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim)
                .map(|_| if grid { rng.gen_range(-3..=3) as f64 } else { rng.gen_range(-1.0..1.0) })
                .collect()
        };
        let train: Vec<(Vec<f64>, usize)> = (0..n).map(|_| (point(&mut rng), rng.gen_range(0..2))).collect();
        let labelled: Vec<(Vec<f64>, Label)> = train
            .iter()
            .map(|(x, l)| (x.clone(), Label::from_index(*l).unwrap()))
            .collect();
        let odd_ks: Vec<usize> = (1..=n).step_by(2).collect();
        for _ in 0..5 {
            let q = point(&mut rng);
            let k = odd_ks[rng.gen_range(0..odd_ks.len())];
            let got = knn_classify(&labelled, &q, k).unwrap();
            assert_eq!(got.index(), brute_force_knn(&train, &q, k), "case {case} n={n} k={k}");
        }
    }
}
