//! Serializing a config and reading it back gives the same config.

use proptest::option;
use proptest::prelude::*;
use std::path::PathBuf;
use tsdyn_cli::config::{Analysis, DestabilizeMode, ExperimentConfig, Nonlinearity, Piece, Sweep};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -1e3f64..1e3]
}

fn square(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(finite(), n), n)
}

fn sweep() -> impl Strategy<Value = Sweep> {
    (0.1f64..50.0, 0.0f64..50.0, 0.5f64..10.0).prop_map(|(start, len, step)| Sweep { start, end: start + len, step })
}

fn pieces() -> impl Strategy<Value = Vec<Piece>> {
    prop::collection::vec((finite(), square(2), option::of(square(2))), 1..4).prop_map(|v| {
        v.into_iter().map(|(from, matrix, matrix_imag)| Piece { from, matrix, matrix_imag }).collect()
    })
}

prop_compose! {
    fn config()(
        preset in option::of("[a-z0-9-]{1,20}"),
        p in option::of(any::<u32>()),
        q in option::of(any::<u32>()),
        scale in option::of("\\PC*"),
        scale_file in option::of("[a-zA-Z0-9_./ ]{1,30}"),
        matrix in option::of(square(3)),
        matrix_imag in option::of(square(3)),
        piecewise in option::of(pieces()),
        analysis in option::of(prop_oneof![
            Just(Analysis::Scale), Just(Analysis::Exponents), Just(Analysis::Classify),
            Just(Analysis::Destabilize), Just(Analysis::Simulate)
        ]),
        horizon in option::of(finite()),
        t_sweep in option::of(sweep()),
        (delta, eps, zero_tolerance, block_t0) in (option::of(finite()), option::of(finite()), option::of(finite()), option::of(finite())),
        seed in option::of(0..=i64::MAX as u64),
        mode in option::of(prop_oneof![Just(DestabilizeMode::Pipeline), Just(DestabilizeMode::Rotation)]),
        block_multiples in option::of(prop::collection::vec(any::<u32>(), 0..5)),
        verbatim_blocks in option::of(any::<bool>()),
        x0 in option::of(prop::collection::vec(finite(), 0..4)),
        nonlinearity in option::of(prop_oneof![Just(Nonlinearity::None), Just(Nonlinearity::Quadratic), Just(Nonlinearity::Tube)]),
        (quadratic_c, escape_radius, decay_ratio) in (option::of(finite()), option::of(finite()), option::of(finite())),
        tube_terms in option::of(0usize..64),
        out in option::of("[a-zA-Z0-9_./]{1,30}"),
    ) -> ExperimentConfig {
        ExperimentConfig {
            preset, p, q, scale, scale_file: scale_file.map(PathBuf::from), matrix, matrix_imag, piecewise, analysis,
            horizon, t_sweep, delta, eps, seed, zero_tolerance, mode, block_t0, block_multiples, verbatim_blocks, x0,
            nonlinearity, quadratic_c, tube_terms, escape_radius, decay_ratio, out: out.map(PathBuf::from),
        }
    }
}

proptest! {
    #[test]
    fn toml_round_trip_is_lossless(cfg in config()) {
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }
}
