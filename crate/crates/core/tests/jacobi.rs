//! The distributed IC iterations against the explicit block Jacobi recursion
//! `D v⁽ⁿ⁺¹⁾ = F v⁽ⁿ⁾ + b`.

use icvec_core::backhaul::BusOptions;
use icvec_core::convergence::*;
use icvec_core::detection::{run_ic_mud, Decision, DfeMode, MudSettings};
use icvec_core::estimation::{mle_centralized, run_ic_estimation, IcEstimationOptions, Schedule};
use icvec_core::linalg::frobenius_sq;
use icvec_core::model::rng::{stream, Stream};
use icvec_core::model::*;
use icvec_core::training::{gen_training, orthogonalize};
use icvec_core::CMatrix;

fn estimation_case(k: usize, n: usize, t: usize, alpha: f64, sigma2: f64, seed: u64) -> (MultiOperatorChannel, CMatrix, icvec_core::training::TrainingSet) {
    let cfg = ScenarioConfig::new(k, n, t).with_alpha(alpha);
    let h = synth_channel(&cfg, &mut stream(seed, Stream::Channel, 0)).unwrap();
    let x = gen_training(&cfg, &mut stream(seed, Stream::Training, 0)).unwrap();
    let y = apply_channel(&h, x.full(), sigma2, &mut stream(seed, Stream::Noise, 0)).unwrap();
    (h, y, x)
}

#[test]
fn estimation_rounds_follow_the_recursion() {
    for seed in 0..4 {
        for &(k, n, t) in &[(2, 4, 32), (3, 3, 24)] {
            let (_, y, x) = estimation_case(k, n, t, 0.6, 0.0, seed);
            let opts = IcEstimationOptions { rounds: 6, schedule: Schedule::Jacobi, ..Default::default() };
            let run = run_ic_estimation(&y, &x, &opts).unwrap();
            let measured: Vec<CMatrix> = run.snapshots.iter().map(estimation_unknowns).collect();
            let split = build_split_estimation(&x, SplitCaps::default()).unwrap();
            let explicit = split.iterate(&measured[0], &estimation_rhs(&y, k), 6).unwrap();
            let dev = max_relative_deviation(&measured, &explicit).unwrap();
            assert!(dev < 1e-8, "seed {seed} K={k}: deviation {dev:e}");
        }
    }
}

#[test]
fn detection_rounds_follow_the_recursion() {
    let settings = MudSettings::new(Constellation::Qpsk).with_decision(Decision::Linear).with_dfe(DfeMode::Zf);
    for seed in 0..4 {
        for &(k, n) in &[(2, 5), (3, 3)] {
            let cfg = ScenarioConfig::new(k, n, n + 1).with_alpha(0.5);
            let h = synth_channel(&cfg, &mut stream(seed, Stream::Channel, 0)).unwrap();
            let x = draw_symbols(&cfg, 7, &mut stream(seed, Stream::Symbols, 0)).unwrap();
            let y = transmit(&h, &x, 0.01, &mut stream(seed, Stream::Noise, 0)).unwrap();
            let groups: Vec<CMatrix> = (0..k).map(|op| h.column_group(op)).collect();
            let run = run_ic_mud(&groups, y.full(), 0.01, 0.01, &settings, 8, &BusOptions::default()).unwrap();
            let measured: Vec<CMatrix> = run.snapshots.iter().map(|s| s.symbols.clone()).collect();
            let split = build_split_detection(&h, SplitCaps::default()).unwrap();
            let explicit = split.iterate(&measured[0], &detection_rhs(y.full(), k), 8).unwrap();
            let dev = max_relative_deviation(&measured, &explicit).unwrap();
            assert!(dev < 1e-8, "seed {seed} K={k}: deviation {dev:e}");
        }
    }
}

#[test]
fn estimation_error_stays_under_the_envelope() {
    for seed in 10..14 {
        let (_, y, x) = estimation_case(2, 4, 32, 1.0, 0.01, seed);
        let mle = estimation_unknowns(&mle_centralized(&y, &x).unwrap().to_channel().unwrap());
        let opts = IcEstimationOptions { rounds: 12, schedule: Schedule::Jacobi, ..Default::default() };
        let run = run_ic_estimation(&y, &x, &opts).unwrap();
        let split = build_split_estimation(&x, SplitCaps::default()).unwrap();
        let rho = spectral_radius(&split).unwrap();
        let envelope = predicted_error_decay(&split, 12);
        let errors: Vec<f64> =
            run.snapshots.iter().map(|s| frobenius_sq(&(estimation_unknowns(s) - &mle)).sqrt()).collect();
        for (i, (&e, &bound)) in errors.iter().zip(&envelope).enumerate() {
            assert!(e <= bound * errors[0] * (1.0 + 1e-9) + 1e-12, "seed {seed} round {i}: {e} > {bound}");
        }
        // Asymptotic geometric rate.
        let rate = (errors[12] / errors[8]).powf(0.25);
        assert!(rate <= rho + 0.05, "seed {seed}: rate {rate}, rho {rho}");
    }
}

#[test]
fn orthogonal_training_converges_in_one_round() {
    let (_, y, x) = estimation_case(2, 4, 32, 1.2, 0.01, 7);
    let x = orthogonalize(&x).unwrap();
    let split = build_split_estimation(&x, SplitCaps::default()).unwrap();
    assert!(spectral_radius(&split).unwrap() < 1e-12);
    let mle = mle_centralized(&y, &x).unwrap().to_channel().unwrap();
    let opts = IcEstimationOptions { rounds: 2, schedule: Schedule::Jacobi, ..Default::default() };
    let run = run_ic_estimation(&y, &x, &opts).unwrap();
    let dev = icvec_core::linalg::relative_difference(&run.snapshots[1].full().clone(), mle.full());
    assert!(dev < 1e-10, "{dev:e}");
}

#[test]
fn detection_radius_below_one_for_random_channels() {
    for seed in 0..20 {
        for &alpha in &[0.25, 0.5, 1.0, 1.2] {
            let cfg = ScenarioConfig::new(2, 10, 11).with_alpha(alpha);
            let h = synth_channel(&cfg, &mut stream(seed, Stream::Channel, 0)).unwrap();
            let rho = spectral_radius(&build_split_detection(&h, SplitCaps::default()).unwrap()).unwrap();
            assert!(rho < 1.0, "seed {seed} alpha {alpha}: rho {rho}");
        }
    }
}
