use perfid::features::{assemble, deviation_features, segment, Combo, FeatureColumn, FeatureMatrix};
use perfid::midi::Note;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<(Note, Note)> {
    let scale = rng.gen_range(0.6..1.6);
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            t += rng.gen_range(0.0..0.6);
            let dur = rng.gen_range(0.05..1.5);
            let score = Note::new(rng.gen_range(21..109), t, t + dur, 64);
            let on = scale * t + rng.gen_range(-0.05..0.05);
            let on = on.max(0.0);
            let perf = Note::new(score.pitch, on, on + scale * dur * rng.gen_range(0.7..1.2), rng.gen_range(1..128));
            (perf, score)
        })
        .collect()
}

#[test]
fn combo_column_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [2, 3, 50, 400] {
        let pairs = random_pairs(&mut rng, n);
        for (combo, width) in Combo::NAMED.iter().zip([7, 6, 6, 3, 13]) {
            assert_eq!(combo.schema().len(), width);
            let m = assemble(&pairs, combo, "p", "x").unwrap();
            assert_eq!((m.n_rows(), m.n_cols()), (n, width), "{}", combo.name());
        }
    }
}

#[test]
fn identity_performance_has_zero_deviations() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let n = rng.gen_range(2..300);
        let pairs: Vec<(Note, Note)> = random_pairs(&mut rng, n).into_iter().map(|(_, s)| (s, s)).collect();
        for row in deviation_features(&pairs).unwrap() {
            assert_eq!(row, [0.0; 6]);
        }
        let m = assemble(&pairs, &Combo::C3, "p", "x").unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn segment_conserves_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let schema = Combo::C4.schema();
    for _ in 0..1000 {
        let n = rng.gen_range(0..3000usize);
        let length = rng.gen_range(2..1200usize);
        let data: Vec<f64> = (0..n * 3).map(|v| v as f64).collect();
        let m = FeatureMatrix::new(schema.clone(), data.clone(), "p", "x").unwrap();
        let windows = segment(&m, length);
        assert_eq!(windows.len(), n / length);
        let rows: usize = windows.iter().map(FeatureMatrix::n_rows).sum();
        assert_eq!(rows, n / length * length, "N={n} L={length}");
        let joined: Vec<f64> = windows.iter().flat_map(|w| w.data().to_vec()).collect();
        assert_eq!(joined[..], data[..joined.len()]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shifting_all_onsets_changes_only_absolute_times(seed in any::<u64>(), n in 2usize..200, shift in 0.0f64..500.0) {
        let pairs = random_pairs(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let moved: Vec<(Note, Note)> = pairs
            .iter()
            .map(|(p, s)| {
                let mv = |x: &Note| Note::new(x.pitch, x.onset + shift, x.offset + shift, x.velocity);
                (mv(p), mv(s))
            })
            .collect();
        let a = assemble(&pairs, &Combo::C5, "p", "x").unwrap();
        let b = assemble(&moved, &Combo::C5, "p", "x").unwrap();
        for (i, c) in FeatureColumn::ALL.iter().enumerate() {
            let (ca, cb) = (a.column(*c).unwrap(), b.column(*c).unwrap());
            for (x, y) in ca.iter().zip(&cb) {
                match c {
                    FeatureColumn::Onset | FeatureColumn::Offset => prop_assert!((y - x - shift).abs() < 1e-9),
                    _ => prop_assert!((x - y).abs() < 1e-7, "column {} ({}): {} vs {}", i, c, x, y),
                }
            }
        }
    }
}
