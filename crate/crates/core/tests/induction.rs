use std::time::Instant;

use cryptolect::induction::{induce, inertia, kmeans, rank_candidates, write_space, ClusterModel, EmbeddingSpace};
use cryptolect::synthetic::{generate, induction_config, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lowest inertia over every assignment of points to k non-empty clusters.
fn optimal_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    let mut assignment = vec![0usize; n];
    let total = k.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for a in assignment.iter_mut() {
            *a = c % k;
            c /= k;
        }
        // canonical labelling only: cluster j first appears before j + 1
        let mut next = 0;
        let mut ok = true;
        for &a in &assignment {
            if a > next {
                ok = false;
                break;
            }
            if a == next {
                next += 1;
            }
        }
        if !ok || next != k {
            continue;
        }
        let dim = points[0].len();
        let mut centroids = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, x) in centroids[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (c, &m) in centroids.iter_mut().zip(&counts) {
            c.iter_mut().for_each(|x| *x /= m as f64);
        }
        best = best.min(inertia(points, &centroids, &assignment));
    }
    best
}

#[test]
fn kmeans_reaches_the_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..20 {
        let points: Vec<Vec<f64>> = if trial % 2 == 0 {
            let centres = [[0.0, 0.0], [3.0, 1.0], [1.0, 4.0]];
            (0..11).map(|i| centres[i % 3].iter().map(|c| c + rng.gen_range(-1.2..1.2)).collect()).collect()
        } else {
            (0..11).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect()
        };
        let got = kmeans(&points, 3, 42);
        let oracle = optimal_inertia(&points, 3);
        assert!(got.inertia <= oracle + 1e-9, "trial {trial}: {} > {}", got.inertia, oracle);
    }
}

#[test]
fn ranking_equals_cosine_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for trial in 0..50 {
        let (n, dim) = (10, 4);
        let vocab: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let wv: Vec<f32> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let space = EmbeddingSpace::new("p".into(), dim, vec!["u".into()], vocab.clone(), vec![2020], vec![0.1; dim], wv.clone()).unwrap();
        let centroids: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let clusters = ClusterModel {
            users: vec!["u".into()],
            centroids: centroids.clone(),
            assignment: vec![0],
            inertia: 0.0,
        };
        let got: Vec<String> = rank_candidates(&space, &clusters, 2020, n).unwrap().words().map(String::from).collect();

        let score = |w: usize| {
            let v: Vec<f64> = wv[w * dim..(w + 1) * dim].iter().map(|&x| x as f64).collect();
            centroids
                .iter()
                .map(|c| {
                    let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                    dot / (v.iter().map(|a| a * a).sum::<f64>().sqrt() * c.iter().map(|b| b * b).sum::<f64>().sqrt())
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        // exhaustive: a word's rank is the number of words that beat it
        let mut want = vec![String::new(); n];
        for w in 0..n {
            let beaten_by = (0..n).filter(|&o| score(o) > score(w) || (score(o) == score(w) && vocab[o] < vocab[w])).count();
            want[beaten_by] = vocab[w].clone();
        }
        assert_eq!(got, want, "trial {trial}");
    }
}

#[test]
fn synthetic_recovery_is_top_decile_and_deterministic() {
    let started = Instant::now();
    let spec = SyntheticSpec::default();
    let s = generate(&spec);
    let config = induction_config(spec.seed);
    let run = || induce(&s.corpus, spec.start_year, spec.end_year, &config, 3050, None).unwrap();
    let a = run();
    let ranks: Vec<usize> = s.injected.iter().filter_map(|w| a.lexicon.rank_of(w)).collect();
    assert_eq!(ranks.len(), 30, "every injected word should be ranked");
    let mean = ranks.iter().sum::<usize>() as f64 / ranks.len() as f64;
    let decile = a.lexicon.entries.len() as f64 / 10.0;
    assert!(mean <= decile, "mean rank {mean} vs decile {decile}");

    let b = run();
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    write_space(&pa, &a.space, &config, "x").unwrap();
    write_space(&pb, &b.space, &config, "x").unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.lexicon.write_csv(&mut ca).unwrap();
    b.lexicon.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    assert!(started.elapsed().as_secs() < 300);
}
