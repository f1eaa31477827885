use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vadlite_core::bank::{coreset_indices, exhaustive_nn_score};
use vadlite_core::distance::squared_l2;
use vadlite_core::eval::{auroc, Label};
use vadlite_core::gaussian::{fit_diag, mahalanobis_diag};
use vadlite_core::grid::concat_multiscale;
use vadlite_core::pq::{compress_bank, decode, encode, pack_code, unpack_code, code_row_bytes, train_codebooks_traced};
use vadlite_core::search::{search, SearchConfig, SearchMode};
use vadlite_core::{CoresetConfig, DiagGaussianGrid, FeatureGrid, LayerMap, MemoryBank};

fn random_vec(rng: &mut ChaCha8Rng, n: usize, span: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-span..span)).collect()
}

fn random_bank(rng: &mut ChaCha8Rng, k: usize, d: usize) -> MemoryBank {
    MemoryBank::from_vectors(d, random_vec(rng, k * d, 1.0)).unwrap()
}

/// Pairwise-comparison AUROC: anomalous beats normal scores 1, ties score 1/2.
fn pair_count_auroc(scores: &[f32], labels: &[Label]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &a) in scores.iter().enumerate() {
        if !labels[i].is_anomalous() {
            continue;
        }
        for (j, &n) in scores.iter().enumerate() {
            if labels[j].is_anomalous() {
                continue;
            }
            pairs += 1.0;
            if a > n {
                wins += 1.0;
            } else if a == n {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn concat_channels_follow_nearest_source(
        seed in any::<u64>(),
        h in 1usize..6, w in 1usize..6,
        ch in 1usize..4, cw in 1usize..4,
        d1 in 1usize..4, d2 in 1usize..4,
    ) {
        let (ch, cw) = (ch.min(h), cw.min(w));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fine = LayerMap::new(0, h, w, d1, random_vec(&mut rng, h * w * d1, 1.0)).unwrap();
        let coarse = LayerMap::new(1, ch, cw, d2, random_vec(&mut rng, ch * cw * d2, 1.0)).unwrap();
        let grid = concat_multiscale(&[fine.clone(), coarse.clone()]).unwrap();
        prop_assert_eq!(grid.dim(), d1 + d2);
        for i in 0..h {
            for j in 0..w {
                let p = grid.patch_at(i, j);
                prop_assert_eq!(&p[..d1], fine.at(i, j));
                prop_assert_eq!(&p[d1..], coarse.at(i * ch / h, j * cw / w));
            }
        }
    }

    #[test]
    fn diag_distance_scaling_and_additivity(seed in any::<u64>(), d in 1usize..12, t in 1.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let var: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..3.0)).collect();
        let model = DiagGaussianGrid::from_parts(1, 1, d, 0.01, mean.clone(), var.clone()).unwrap();
        let dev: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x: Vec<f32> = mean.iter().zip(&dev).map(|(m, e)| (m + e) as f32).collect();
        let base = mahalanobis_diag(&x, 0, &model).unwrap();
        prop_assert!(base >= 0.0);

        let per_dim: f64 = (0..d)
            .map(|k| {
                let one = DiagGaussianGrid::from_parts(1, 1, 1, 0.01, vec![mean[k]], vec![var[k]]).unwrap();
                mahalanobis_diag(&x[k..k + 1], 0, &one).unwrap()
            })
            .sum();
        prop_assert!((base - per_dim).abs() <= 1e-9 * base.max(1.0));

        // scale the deviation in f64 space to avoid f32 rounding of x
        let scaled: f64 = dev.iter().zip(&var).map(|(e, v)| (t * e) * (t * e) / v).sum();
        let unscaled: f64 = dev.iter().zip(&var).map(|(e, v)| e * e / v).sum();
        prop_assert!((scaled - t * t * unscaled).abs() <= 1e-9 * scaled.max(1.0));
    }

    #[test]
    fn diag_zero_only_at_mean(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grids: Vec<FeatureGrid> = (0..n)
            .map(|_| FeatureGrid::new(1, 2, 3, random_vec(&mut rng, 6, 2.0)).unwrap())
            .collect();
        let model = fit_diag(&grids, 0.01).unwrap();
        let x = random_vec(&mut rng, 3, 2.0);
        let s = mahalanobis_diag(&x, 1, &model).unwrap();
        let at_mean = x.iter().zip(model.mean(1)).all(|(&a, &m)| a as f64 == m);
        prop_assert_eq!(s == 0.0, at_mean);
    }

    #[test]
    fn exhaustive_is_global_minimum(seed in any::<u64>(), k in 1usize..60, d in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bank = random_bank(&mut rng, k, d);
        let x = random_vec(&mut rng, d, 1.5);
        let (score, idx) = exhaustive_nn_score(&x, &bank).unwrap();
        let mut best = (f32::INFINITY, 0);
        for i in 0..k {
            let dist = squared_l2(&x, bank.vector(i));
            if dist < best.0 {
                best = (dist, i);
            }
            prop_assert!(score <= squared_l2(&x, bank.vector(i)).sqrt());
        }
        prop_assert_eq!((score, idx), (best.0.sqrt(), best.1));
    }

    #[test]
    fn coreset_subset_deterministic_and_covering(seed in any::<u64>(), k in 4usize..60, frac in 0.05f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bank = random_bank(&mut rng, k, 3);
        let target = ((k as f64 * frac) as usize).clamp(1, k - 2);
        let cfg = CoresetConfig::with_size(target, seed);
        let picks = coreset_indices(&bank, &cfg).unwrap();
        prop_assert_eq!(&picks, &coreset_indices(&bank, &cfg).unwrap());
        let mut uniq = picks.clone();
        uniq.sort_unstable();
        uniq.dedup();
        prop_assert_eq!(uniq.len(), target);

        // next greedy radius from a one-larger run bounds every discarded point
        let next = coreset_indices(&bank, &CoresetConfig::with_size(target + 1, seed)).unwrap();
        prop_assert_eq!(&next[..target], &picks[..]);
        let radius_to_set = |i: usize| {
            picks.iter().map(|&s| squared_l2(bank.vector(i), bank.vector(s))).fold(f32::INFINITY, f32::min)
        };
        let radius = radius_to_set(next[target]);
        for i in (0..k).filter(|i| !picks.contains(i)) {
            prop_assert!(radius_to_set(i) <= radius);
        }
    }

    #[test]
    fn pq_encode_is_per_subspace_argmin(seed in any::<u64>(), m in prop::sample::select(vec![1usize, 2, 4]), bits in 1u32..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 8;
        let bank = random_bank(&mut rng, 64, d);
        let cb = compress_bank(&bank, m, bits, seed, 20).unwrap();
        let books = cb.codebooks();
        let sd = d / m;
        for _ in 0..10 {
            let x = random_vec(&mut rng, d, 1.5);
            let code = encode(&x, books).unwrap();
            let recon = decode(&code, books).unwrap();
            for j in 0..m {
                let sub = &x[j * sd..(j + 1) * sd];
                let mine = squared_l2(sub, &recon[j * sd..(j + 1) * sd]);
                for i in 0..books.centroids_per_subspace() {
                    prop_assert!(mine <= squared_l2(sub, books.centroid(j, i)));
                }
            }
            prop_assert_eq!(encode(&recon, books).unwrap(), code);
        }
    }

    #[test]
    fn kmeans_wcss_never_increases(seed in any::<u64>(), bits in 1u32..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bank = random_bank(&mut rng, 120, 4);
        let trained = train_codebooks_traced(&bank, 2, bits, seed, 50).unwrap();
        for trace in &trained.wcss {
            for w in trace.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn code_packing_roundtrip(m in 1usize..12, bits in 1u32..17, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx: Vec<u16> = (0..m).map(|_| (rng.gen::<u32>() & ((1u32 << bits) - 1)) as u16).collect();
        let mut buf = vec![0u8; code_row_bytes(m, bits)];
        pack_code(&idx, bits, &mut buf);
        let mut back = Vec::new();
        unpack_code(&buf, m, bits, &mut back);
        prop_assert_eq!(back, idx);
    }

    #[test]
    fn two_stage_refinement_properties(
        seed in any::<u64>(),
        sdc in any::<bool>(),
        k_bank in 8usize..80,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bank = random_bank(&mut rng, k_bank, 8);
        let cb = compress_bank(&bank, 4, 2, seed, 15).unwrap();
        let decoded = cb.decode_all();
        let mode = if sdc { SearchMode::Sdc } else { SearchMode::Adc };
        let x = random_vec(&mut rng, 8, 1.2);
        let exact = exhaustive_nn_score(&x, &decoded).unwrap().0;
        let mut prev = f32::INFINITY;
        for k in 1..=k_bank {
            let s = search(&x, &cb, &SearchConfig::new(k, mode)).unwrap().0;
            prop_assert!(s <= prev);
            prop_assert!(s >= exact);
            prev = s;
        }
        prop_assert_eq!(prev, exact);
    }

    #[test]
    fn auroc_matches_pairs_and_transforms(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f32> = (0..n).map(|_| (rng.gen_range(0..8) as f32) * 0.25).collect();
        let mut labels: Vec<Label> = (0..n).map(|_| if rng.gen() { Label::Anomalous } else { Label::Normal }).collect();
        labels[0] = Label::Anomalous;
        labels[1] = Label::Normal;
        let a = auroc(&scores, &labels).unwrap();
        prop_assert_eq!(a, pair_count_auroc(&scores, &labels));

        let transformed: Vec<f32> = scores.iter().map(|&s| (s * 3.0 + 1.0).exp()).collect();
        prop_assert_eq!(auroc(&transformed, &labels).unwrap(), a);

        let flipped: Vec<Label> = labels.iter().map(|l| if l.is_anomalous() { Label::Normal } else { Label::Anomalous }).collect();
        let distinct: Vec<f32> = (0..n).map(|i| scores[i] + i as f32 * 1e-3).collect();
        let b = auroc(&distinct, &labels).unwrap();
        let c = auroc(&distinct, &flipped).unwrap();
        prop_assert!((b + c - 1.0).abs() < 1e-12);
    }
}
