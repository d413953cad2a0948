use icvec_core::backhaul::wire::{decode, encode};
use icvec_core::backhaul::{InterferenceMessage, MessageKind};
use icvec_core::detection::{g_lambda, phi, DfeFactorization, DfeMode, Decision};
use icvec_core::linalg::{least_squares, relative_difference};
use icvec_core::metrics::{bit_loading, normalized_mse, throughput, GapModel, Normalization};
use icvec_core::model::rng::{stream, Stream};
use icvec_core::model::{synth_channel, Constellation, MultiOperatorChannel, ScenarioConfig};
use icvec_core::{CMatrix, Complex64};
use proptest::prelude::*;

fn constellation() -> impl Strategy<Value = Constellation> {
    prop_oneof![
        Just(Constellation::Bpsk),
        Just(Constellation::Qpsk),
        Just(Constellation::Qam16),
        Just(Constellation::Qam64),
    ]
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), rows * cols)
        .prop_map(move |v| CMatrix::from_iterator(rows, cols, v.into_iter().map(|(re, im)| Complex64::new(re, im))))
}

proptest! {
    #[test]
    fn soft_estimator_is_odd_and_bounded(c in constellation(), y in -50.0f64..50.0, var in 1e-6f64..100.0) {
        let alphabet = c.real_alphabet();
        let top = c.max_component();
        let p = phi(y, var, &alphabet).unwrap();
        let m = phi(-y, var, &alphabet).unwrap();
        prop_assert!((p + m).abs() <= 1e-12 * top.max(1.0));
        prop_assert!(p.abs() <= top * (1.0 + 1e-12));
    }

    #[test]
    fn soft_estimator_is_monotone(c in constellation(), y in -20.0f64..20.0, step in 1e-6f64..1.0, var in 1e-3f64..10.0) {
        let alphabet = c.real_alphabet();
        let a = phi(y, var, &alphabet).unwrap();
        let b = phi(y + step, var, &alphabet).unwrap();
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn complex_estimator_matches_components(c in constellation(), re in -5.0f64..5.0, im in -5.0f64..5.0, var in 1e-3f64..10.0) {
        let g = g_lambda(Complex64::new(re, im), var, c).unwrap();
        prop_assert!((g.re - phi(re, var / 2.0, &c.real_alphabet()).unwrap()).abs() < 1e-14);
        prop_assert!((g.im - phi(im, var / 2.0, &c.imag_alphabet()).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn bit_loading_is_monotone(a in -100.0f64..200.0, b in -100.0f64..200.0, integer in any::<bool>()) {
        let gap = GapModel { integer_bits: integer, ..GapModel::default() };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (bl, bh) = (bit_loading(lo, &gap), bit_loading(hi, &gap));
        prop_assert!(bl <= bh);
        prop_assert!((0.0..=gap.max_bits).contains(&bl) && (0.0..=gap.max_bits).contains(&bh));
    }

    #[test]
    fn throughput_is_monotone(bits in prop::collection::vec(0.0f64..12.0, 1..64), idx in any::<prop::sample::Index>(), extra in 0.0f64..3.0) {
        let gap = GapModel::default();
        let base = throughput(&bits, &gap, 4000.0);
        let mut more = bits.clone();
        more[idx.index(bits.len())] += extra;
        prop_assert!(throughput(&more, &gap, 4000.0) >= base);
    }

    #[test]
    fn wire_roundtrip(round in 0usize..1_000_000, sender in 0usize..8, offset in 1usize..8, kind in 0usize..5, (rows, cols) in (1usize..6, 1usize..6), seed in any::<u64>()) {
        let receiver = (sender + offset) % 9;
        prop_assume!(receiver != sender);
        let payload = CMatrix::from_fn(rows, cols, |i, j| {
            let t = (seed.wrapping_mul(31).wrapping_add((i * cols + j) as u64) % 10_007) as f64;
            Complex64::new(t.sin() * 1e3, -t.cos() / 7.0)
        });
        let msg = InterferenceMessage::unverified(round, sender, receiver, MessageKind::ALL[kind], payload).unwrap();
        let back = decode(&encode(&msg).unwrap()).unwrap();
        prop_assert_eq!(back, msg);
    }

    #[test]
    fn channel_views_agree(k in 1usize..4, n in 1usize..5, alpha in 0.0f64..1.5, seed in any::<u64>()) {
        let cfg = ScenarioConfig::new(k, n, n + 1).with_alpha(alpha);
        let h = synth_channel(&cfg, &mut stream(seed, Stream::Channel, 0)).unwrap();
        for from in 0..k {
            let col = h.column_group(from);
            let row = h.row_group(from);
            for other in 0..k {
                prop_assert_eq!(col.rows(other * n, n).into_owned(), h.block(from, other));
                prop_assert_eq!(row.columns(other * n, n).into_owned(), h.block(other, from));
                prop_assert_eq!(h.full().view((other * n, from * n), (n, n)).into_owned(), h.block(from, other));
            }
            for i in 0..n {
                prop_assert!((h.block(from, from)[(i, i)].norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_mse_is_nonnegative_and_zero_only_at_truth(h in matrix(4, 4), e in matrix(4, 4)) {
        let truth = MultiOperatorChannel::from_full(2, 2, h.clone()).unwrap();
        let norm = Normalization::Ensemble { alpha: 0.5 };
        let same = normalized_mse(&truth, &truth, norm).unwrap();
        prop_assert_eq!(same.self_blocks, 0.0);
        prop_assert_eq!(same.alien_blocks, Some(0.0));
        let other = MultiOperatorChannel::from_full(2, 2, &h + &e).unwrap();
        let m = normalized_mse(&other, &truth, norm).unwrap();
        prop_assert!(m.self_blocks >= 0.0 && m.alien_blocks.unwrap() >= 0.0);
        if e.iter().any(|z| z.norm() > 0.0) {
            prop_assert!(m.self_blocks + m.alien_blocks.unwrap() > 0.0);
        }
    }

    #[test]
    fn linear_zf_dfe_is_least_squares(seed in any::<u64>(), n in 1usize..4) {
        let cfg = ScenarioConfig::new(2, n, n + 1).with_alpha(0.7);
        let h = synth_channel(&cfg, &mut stream(seed, Stream::Channel, 0)).unwrap().column_group(0);
        let z = CMatrix::from_fn(2 * n, 3, |i, j| Complex64::new((i as f64 + seed as f64).sin(), (j as f64 * 0.3).cos()));
        let out = DfeFactorization::new(&h, DfeMode::Zf, 0.1).unwrap().detect(&z, Constellation::Qpsk, Decision::Linear).unwrap();
        let ls = least_squares(&h, &z, "test").unwrap();
        prop_assert!(relative_difference(&out.symbols, &ls) < 1e-9);
    }
}
